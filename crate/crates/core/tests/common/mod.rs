//! Test-side oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::sync::OnceLock;

use num_complex::Complex64;
use phc_core::farfield::{near_to_far, FarField, FarFieldOptions, NearField};
use phc_core::fdtd::{BoundarySpec, FaceKind};
use phc_core::geometry::{Axis, PermittivityGrid};

pub const C_NM_PER_S: f64 = 299_792_458e9;

/// Layer stack `(index, thickness nm)` from low z to high z, air outside.
pub type Stack = Vec<(f64, f64)>;

/// Quarter-wave-like Bragg cavity: two high-index layers per mirror around
/// a half-wave air spacer.
pub fn bragg_cavity() -> Stack {
    let h = (3.31, 50.0);
    let l = (1.0, 160.0);
    vec![h, l, h, (1.0, 320.0), h, l, h]
}

fn char_matrix(stack: &Stack, k0: Complex64) -> [[Complex64; 2]; 2] {
    let i = Complex64::new(0.0, 1.0);
    let mut m = [[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)], [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]];
    for &(n, d) in stack {
        let dl = k0 * n * d;
        let l = [[dl.cos(), -i * dl.sin() / n], [-i * n * dl.sin(), dl.cos()]];
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = m[r][0] * l[0][c] + m[r][1] * l[1][c];
            }
        }
        m = out;
    }
    m
}

fn outgoing_residual(stack: &Stack, k0: Complex64) -> Complex64 {
    let m = char_matrix(stack, k0);
    m[0][0] + m[0][1] + m[1][0] + m[1][1]
}

/// Complex free-space wavenumber (1/nm) of the resonance nearest `guess`
/// with purely outgoing waves on both sides.
pub fn tmm_pole(stack: &Stack, guess: f64) -> Complex64 {
    let mut k = Complex64::new(guess, 0.0);
    for _ in 0..200 {
        let h = 1e-7 * k.norm();
        let d = (outgoing_residual(stack, k + h) - outgoing_residual(stack, k - h)) / (2.0 * h);
        let next = k - outgoing_residual(stack, k) / d;
        if (next - k).norm() < 1e-14 * k.norm() {
            return next;
        }
        k = next;
    }
    k
}

/// Exact average of the stack permittivity over `[z0, z1]` (nm), stack
/// starting at `start`.
pub fn layer_average(stack: &Stack, start: f64, z0: f64, z1: f64) -> f64 {
    let mut acc = 0.0;
    let mut z = start;
    let mut covered = 0.0;
    for &(n, d) in stack {
        let a = z.max(z0);
        let b = (z + d).min(z1);
        if b > a {
            acc += (b - a) * n * n;
            covered += b - a;
        }
        z += d;
    }
    (acc + (z1 - z0 - covered)) / (z1 - z0)
}

/// Quasi-1D grid (one cell across x and y) holding `stack` centered on z = 0
/// with `air_nm` of air and `pml` absorbing cells on each side.
pub fn stack_grid(stack: &Stack, cell: f64, air_nm: f64, pml: usize) -> PermittivityGrid {
    let total: f64 = stack.iter().map(|l| l.1).sum();
    let half = total / 2.0 + air_nm;
    let nz_half = (half / cell).ceil() as usize + pml;
    let nz = 2 * nz_half;
    let origin_z = -(nz_half as f64) * cell;
    let mut g = PermittivityGrid::vacuum([1, 1, nz], cell, [0.0, 0.0, origin_z]);
    let start = -total / 2.0;
    for axis in [Axis::X, Axis::Y] {
        for k in 0..=nz {
            let z = origin_z + k as f64 * cell;
            let e = layer_average(stack, start, z - cell / 2.0, z + cell / 2.0);
            for i in 0..=1 {
                for j in 0..=1 {
                    let idx = g.index(i, j, k);
                    g.eps_mut(axis)[idx] = e;
                }
            }
        }
    }
    g
}

/// Side faces that keep an x-polarized plane wave uniform in x and y.
pub fn plane_wave_boundary(pml: usize) -> BoundarySpec {
    let mut b = BoundarySpec::pml(pml);
    b.faces[0] = [FaceKind::Pec; 2];
    b.faces[1] = [FaceKind::Pmc; 2];
    b
}

/// Energy-weighted arrival time (in steps) of a trace.
pub fn centroid(trace: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (n, v) in trace.iter().enumerate() {
        num += n as f64 * v * v;
        den += v * v;
    }
    num / den
}

/// Fields of a unit oscillating dipole `p` at the origin in vacuum
/// (`exp(-i w t)`, impedance 1): `(E, H)` at `r`.
pub fn dipole_fields(p: [f64; 3], k: f64, r: [f64; 3]) -> ([Complex64; 3], [Complex64; 3]) {
    let i = Complex64::new(0.0, 1.0);
    let rn = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let n = [r[0] / rn, r[1] / rn, r[2] / rn];
    let ndp = n[0] * p[0] + n[1] * p[1] + n[2] * p[2];
    let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let nxp = cross(n, p);
    let far = cross(nxp, n);
    let ph = (i * k * rn).exp() / (4.0 * std::f64::consts::PI);
    let near = Complex64::new(1.0 / rn.powi(3), 0.0) - i * k / (rn * rn);
    let mut e = [Complex64::new(0.0, 0.0); 3];
    let mut h = [Complex64::new(0.0, 0.0); 3];
    for c in 0..3 {
        e[c] = ph * (k * k * far[c] / rn + (3.0 * n[c] * ndp - p[c]) * near);
        h[c] = ph * k * k * nxp[c] / rn * (1.0 - 1.0 / (i * k * rn));
    }
    (e, h)
}

/// Dipole radiation pattern `dP/dOmega` of a unit dipole along `p`.
pub fn dipole_pattern(p: [f64; 3], k: f64, theta: f64, phi: f64) -> f64 {
    let n = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
    let ndp = n[0] * p[0] + n[1] * p[1] + n[2] * p[2];
    let p2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
    k.powi(4) / (32.0 * std::f64::consts::PI.powi(2)) * (p2 - ndp * ndp)
}

pub const LAMBDA: f64 = 600.0;

/// Dipole fields on a square node plane of `half` nodes each side of the
/// axis at height `h`.
pub fn dipole_plane(p: [f64; 3], h: f64, half: usize, d: f64) -> NearField {
    let k = 2.0 * std::f64::consts::PI / LAMBDA;
    let n = 2 * half + 1;
    let mut nf = NearField {
        nx: n,
        ny: n,
        center: [half, half],
        spacing_nm: d,
        wavelength_nm: LAMBDA,
        ex: Vec::with_capacity(n * n),
        ey: Vec::with_capacity(n * n),
        hx: Vec::with_capacity(n * n),
        hy: Vec::with_capacity(n * n),
    };
    for i in 0..n {
        for j in 0..n {
            let r = [(i as f64 - half as f64) * d, (j as f64 - half as f64) * d, h];
            let (e, hh) = dipole_fields(p, k, r);
            nf.ex.push(e[0]);
            nf.ey.push(e[1]);
            nf.hx.push(hh[0]);
            nf.hy.push(hh[1]);
        }
    }
    nf
}

/// Plane wide enough (750 wavelengths) that the truncated 1/r tail of the
/// dipole only blurs the last few degrees above the horizon.
pub fn wide_dipole() -> &'static FarField {
    static FF: OnceLock<FarField> = OnceLock::new();
    FF.get_or_init(|| {
        let nf = dipole_plane([1.0, 0.0, 0.0], 0.5 * LAMBDA, 1500, LAMBDA / 4.0);
        near_to_far(&nf, &FarFieldOptions { padding: 1, taper: 0.5, ..Default::default() }).unwrap()
    })
}

/// RMS deviation from `exact(theta, phi)`, relative to its peak: over the
/// light-cone disk uniformly in `(kx, ky)`, and over solid angle below 70
/// degrees.
pub fn pattern_errors(ff: &FarField, exact: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let np = ff.phi_deg.len();
    let mut peak: f64 = 0.0;
    let mut disk = (0.0, 0.0);
    let mut cone = (0.0, 0.0);
    for (t, th) in ff.theta_deg.iter().enumerate() {
        let th = th.to_radians();
        for (q, ph) in ff.phi_deg.iter().enumerate() {
            let a = exact(th, ph.to_radians());
            peak = peak.max(a);
            let e2 = (ff.power[t * np + q] - a).powi(2);
            let w = th.sin() * th.cos();
            disk.0 += w * e2;
            disk.1 += w;
            if th <= 70f64.to_radians() {
                cone.0 += th.sin() * e2;
                cone.1 += th.sin();
            }
        }
    }
    ((disk.0 / disk.1).sqrt() / peak, (cone.0 / cone.1).sqrt() / peak)
}
