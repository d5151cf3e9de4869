//! Plane-wave expansion of the fields on a plane above the membrane and
//! numerical-aperture-limited collection efficiency.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::{BoundarySpec, FaceKind, PlaneFields};
use crate::geometry::{Axis, PermittivityGrid};
use crate::gridio::GridArray;

/// Tangential fields on a full (unfolded) plane. Node `(i, j)` sits at
/// `((i - ic) d, (j - jc) d)`, index `i * ny + j`; the center is the mirror
/// line of an unfolded axis and the middle of the plane otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct NearField {
    pub nx: usize,
    pub ny: usize,
    pub center: [usize; 2],
    pub spacing_nm: f64,
    pub wavelength_nm: f64,
    pub ex: Vec<Complex64>,
    pub ey: Vec<Complex64>,
    pub hx: Vec<Complex64>,
    pub hy: Vec<Complex64>,
}

/// Mirror parities `[ex, ey, hx, hy]` for a symmetry plane normal to
/// `axis` (0 = x, 1 = y).
fn parities(axis: usize, kind: FaceKind) -> [f64; 4] {
    let pec_x = [1.0, -1.0, -1.0, 1.0];
    let flip = |p: [f64; 4]| p.map(|v| -v);
    match (axis, kind) {
        (0, FaceKind::Pec) | (1, FaceKind::Pmc) => pec_x,
        _ => flip(pec_x),
    }
}

impl NearField {
    /// Builds the full plane from a node-interpolated plane record.
    /// Absorbing faces are cropped away; mirror faces on the low side are
    /// unfolded with the parity of each component.
    pub fn from_plane(p: &PlaneFields, boundary: &BoundarySpec) -> Result<Self> {
        let n = [p.nx + 1, p.ny + 1];
        let mut lo = [0usize; 2];
        let mut hi = n;
        let mut mirror = [None; 2];
        for a in 0..2 {
            match boundary.faces[a][0] {
                FaceKind::Pml => lo[a] = boundary.pml_cells,
                k => mirror[a] = Some(k),
            }
            if boundary.faces[a][1] == FaceKind::Pml {
                hi[a] = n[a] - boundary.pml_cells;
            }
            if hi[a] <= lo[a] + 1 {
                return Err(Error::DomainTooSmall("plane has no interior outside the absorbing layers".into()));
            }
        }
        let src = |i: usize, j: usize| i * n[1] + j;
        // Output extents along each axis: mirrored axes get 2m - 1 nodes.
        let ext = |a: usize| {
            let m = hi[a] - lo[a];
            if mirror[a].is_some() {
                2 * m - 1
            } else {
                m
            }
        };
        let (nx, ny) = (ext(0), ext(1));
        let center = [
            if mirror[0].is_some() { hi[0] - lo[0] - 1 } else { (hi[0] - lo[0]) / 2 },
            if mirror[1].is_some() { hi[1] - lo[1] - 1 } else { (hi[1] - lo[1]) / 2 },
        ];
        let mut out = NearField {
            nx,
            ny,
            center,
            spacing_nm: p.cell_nm,
            wavelength_nm: p.wavelength_nm,
            ex: vec![Complex64::new(0.0, 0.0); nx * ny],
            ey: vec![Complex64::new(0.0, 0.0); nx * ny],
            hx: vec![Complex64::new(0.0, 0.0); nx * ny],
            hy: vec![Complex64::new(0.0, 0.0); nx * ny],
        };
        let map = |a: usize, o: usize| -> (usize, f64, bool) {
            match mirror[a] {
                Some(_) => {
                    let c = center[a] as isize;
                    let d = o as isize - c;
                    (lo[a] + d.unsigned_abs(), if d < 0 { -1.0 } else { 1.0 }, d == 0)
                }
                None => (lo[a] + o, 1.0, false),
            }
        };
        for i in 0..nx {
            let (si, sx, on_x) = map(0, i);
            for j in 0..ny {
                let (sj, sy, on_y) = map(1, j);
                let q = src(si, sj);
                let mut par = [1.0; 4];
                for (a, (s, on)) in [(sx, on_x), (sy, on_y)].into_iter().enumerate() {
                    if let Some(kind) = mirror[a] {
                        let pa = parities(a, kind);
                        for c in 0..4 {
                            // Odd components vanish on their mirror plane.
                            if on && pa[c] < 0.0 {
                                par[c] = 0.0;
                            } else if s < 0.0 {
                                par[c] *= pa[c];
                            }
                        }
                    }
                }
                let o = i * ny + j;
                out.ex[o] = p.ex[q] * par[0];
                out.ey[o] = p.ey[q] * par[1];
                out.hx[o] = p.hx[q] * par[2];
                out.hy[o] = p.hy[q] * par[3];
            }
        }
        Ok(out)
    }

    /// Time-averaged power crossing the plane in +z,
    /// `1/2 Re sum (E x H*)_z d^2` (vacuum impedance 1).
    pub fn poynting_flux(&self) -> f64 {
        let mut s = 0.0;
        for q in 0..self.ex.len() {
            s += (self.ex[q] * self.hy[q].conj() - self.ey[q] * self.hx[q].conj()).re;
        }
        0.5 * s * self.spacing_nm * self.spacing_nm
    }

    /// Copy with a radial raised-cosine window over the outer `fraction` of
    /// the largest centered disk, suppressing truncation ringing.
    pub fn tapered(&self, fraction: f64) -> Result<NearField> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::invalid("taper", "must lie in [0, 1]"));
        }
        let r_max = self.center[0]
            .min(self.nx - 1 - self.center[0])
            .min(self.center[1])
            .min(self.ny - 1 - self.center[1]) as f64;
        let inner = (1.0 - fraction) * r_max;
        let mut out = self.clone();
        for i in 0..self.nx {
            for j in 0..self.ny {
                let dx = i as f64 - self.center[0] as f64;
                let dy = j as f64 - self.center[1] as f64;
                let r = (dx * dx + dy * dy).sqrt();
                let w = if r <= inner {
                    continue;
                } else if r >= r_max {
                    0.0
                } else {
                    0.5 * (1.0 + (std::f64::consts::PI * (r - inner) / (r_max - inner)).cos())
                };
                let q = i * self.ny + j;
                out.ex[q] *= w;
                out.ey[q] *= w;
                out.hx[q] *= w;
                out.hy[q] *= w;
            }
        }
        Ok(out)
    }

    /// Sum of two planes sampled on the same nodes.
    pub fn add(&self, other: &NearField) -> Result<NearField> {
        if self.nx != other.nx || self.ny != other.ny || self.center != other.center {
            return Err(Error::invalid("near field", "planes differ in shape"));
        }
        let sum = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        Ok(NearField {
            ex: sum(&self.ex, &other.ex),
            ey: sum(&self.ey, &other.ey),
            hx: sum(&self.hx, &other.hx),
            hy: sum(&self.hy, &other.hy),
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarFieldOptions {
    pub n_theta: usize,
    pub n_phi: usize,
    /// Zero-padding factor of the transform.
    pub padding: usize,
    /// Fraction of the plane radius covered by the edge window (0 = none).
    #[serde(default)]
    pub taper: f64,
}

impl Default for FarFieldOptions {
    fn default() -> Self {
        FarFieldOptions {
            n_theta: 181,
            n_phi: 360,
            padding: 4,
            taper: 0.0,
        }
    }
}

/// Upper-hemisphere radiation pattern. `power[t * n_phi + p]` is the power
/// per unit solid angle at `(theta[t], phi[p])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarField {
    pub wavelength_nm: f64,
    pub theta_deg: Vec<f64>,
    pub phi_deg: Vec<f64>,
    pub power: Vec<f64>,
    pub total_power: f64,
    /// Power per solid angle on the transform's `(kx, ky)` lattice inside
    /// the light cone (zero outside), `kspace_n x kspace_n`, kx-major.
    pub kspace_n: usize,
    pub kspace_dk: f64,
    pub kspace: Vec<f64>,
}

fn fft2(data: &mut [Complex64], n: usize, fft: &Arc<dyn Fft<f64>>) {
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = data[i * n + j];
        }
        fft.process(&mut col);
        for i in 0..n {
            data[i * n + j] = col[i];
        }
    }
}

/// Zero-padded plane-wave amplitudes of the tangential electric field,
/// `E(kx, ky) = sum E(x, y) exp(-i (kx x + ky y)) d^2`.
#[derive(Debug, Clone)]
pub struct AngularSpectrum {
    pub n: usize,
    /// Lattice spacing in k (rad/nm).
    pub dk: f64,
    pub k0: f64,
    pub wavelength_nm: f64,
    pub ex: Vec<Complex64>,
    pub ey: Vec<Complex64>,
}

impl AngularSpectrum {
    pub fn new(near: &NearField, padding: usize) -> Result<Self> {
        if padding < 1 {
            return Err(Error::invalid("padding", "must be at least 1"));
        }
        let n = (near.nx.max(near.ny) * padding).next_power_of_two().max(16);
        if n > 8192 {
            return Err(Error::invalid("padding", "transform grid too large"));
        }
        let d = near.spacing_nm;
        let fft = FftPlanner::new().plan_fft_forward(n);
        let transform = |f: &[Complex64]| {
            let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
            for i in 0..near.nx {
                let ii = (i as isize - near.center[0] as isize).rem_euclid(n as isize) as usize;
                for j in 0..near.ny {
                    let jj = (j as isize - near.center[1] as isize).rem_euclid(n as isize) as usize;
                    buf[ii * n + jj] = f[i * near.ny + j] * (d * d);
                }
            }
            fft2(&mut buf, n, &fft);
            buf
        };
        Ok(AngularSpectrum {
            n,
            dk: 2.0 * std::f64::consts::PI / (n as f64 * d),
            k0: 2.0 * std::f64::consts::PI / near.wavelength_nm,
            wavelength_nm: near.wavelength_nm,
            ex: transform(&near.ex),
            ey: transform(&near.ey),
        })
    }

    /// Amplitudes at lattice point `(m, l)` (wrapped).
    pub fn node(&self, m: isize, l: isize) -> [Complex64; 2] {
        let n = self.n as isize;
        let q = (m.rem_euclid(n) as usize) * self.n + l.rem_euclid(n) as usize;
        [self.ex[q], self.ey[q]]
    }

    /// Bilinear interpolation at `(kx, ky)`.
    pub fn at(&self, kx: f64, ky: f64) -> [Complex64; 2] {
        let (u, v) = (kx / self.dk, ky / self.dk);
        let (m, l) = (u.floor(), v.floor());
        let (fu, fv) = (u - m, v - l);
        let (m, l) = (m as isize, l as isize);
        let w = [
            (0, 0, (1.0 - fu) * (1.0 - fv)),
            (1, 0, fu * (1.0 - fv)),
            (0, 1, (1.0 - fu) * fv),
            (1, 1, fu * fv),
        ];
        let mut out = [Complex64::new(0.0, 0.0); 2];
        for (a, b, c) in w {
            let e = self.node(m + a, l + b);
            out[0] += e[0] * c;
            out[1] += e[1] * c;
        }
        out
    }

    /// Power per unit solid angle carried by the plane wave `(kx, ky)`;
    /// zero outside the light cone.
    pub fn density(&self, e: [Complex64; 2], kx: f64, ky: f64) -> f64 {
        let k0 = self.k0;
        let kt2 = kx * kx + ky * ky;
        if kt2 > k0 * k0 {
            return 0.0;
        }
        let cos2 = 1.0 - kt2 / (k0 * k0);
        let long = (e[0] * kx + e[1] * ky).norm_sqr() / (k0 * k0);
        k0 * k0 / (8.0 * std::f64::consts::PI.powi(2)) * (cos2 * (e[0].norm_sqr() + e[1].norm_sqr()) + long)
    }
}

fn angles(opts: &FarFieldOptions) -> (Vec<f64>, Vec<f64>) {
    let theta = (0..opts.n_theta).map(|t| 90.0 * t as f64 / (opts.n_theta - 1) as f64).collect();
    let phi = (0..opts.n_phi).map(|p| 360.0 * p as f64 / opts.n_phi as f64).collect();
    (theta, phi)
}

/// Far-field pattern of the upward-propagating part of `near`.
pub fn near_to_far(near: &NearField, opts: &FarFieldOptions) -> Result<FarField> {
    if opts.n_theta < 2 || opts.n_phi < 1 {
        return Err(Error::invalid("farfield options", "need n_theta >= 2 and n_phi >= 1"));
    }
    let spec = if opts.taper > 0.0 {
        AngularSpectrum::new(&near.tapered(opts.taper)?, opts.padding)?
    } else {
        AngularSpectrum::new(near, opts.padding)?
    };
    let k0 = spec.k0;
    let mut ff = FarField::from_fn(near.wavelength_nm, opts, |th, ph| {
        let (kx, ky) = (k0 * th.sin() * ph.cos(), k0 * th.sin() * ph.sin());
        spec.density(spec.at(kx, ky), kx, ky)
    });
    let half = (k0 / spec.dk).floor() as isize;
    let kn = (2 * half + 1) as usize;
    let mut kspace = vec![0.0; kn * kn];
    for m in -half..=half {
        for l in -half..=half {
            let (kx, ky) = (m as f64 * spec.dk, l as f64 * spec.dk);
            kspace[((m + half) as usize) * kn + (l + half) as usize] = spec.density(spec.node(m, l), kx, ky);
        }
    }
    ff.kspace_n = kn;
    ff.kspace_dk = spec.dk;
    ff.kspace = kspace;
    Ok(ff)
}

impl FarField {
    /// Pattern sampled from a function of `(theta, phi)` in radians.
    pub fn from_fn(wavelength_nm: f64, opts: &FarFieldOptions, f: impl Fn(f64, f64) -> f64) -> Self {
        let (theta_deg, phi_deg) = angles(opts);
        let mut power = Vec::with_capacity(theta_deg.len() * phi_deg.len());
        for th in &theta_deg {
            for ph in &phi_deg {
                power.push(f(th.to_radians(), ph.to_radians()));
            }
        }
        let mut ff = FarField {
            wavelength_nm,
            theta_deg,
            phi_deg,
            power,
            total_power: 0.0,
            kspace_n: 0,
            kspace_dk: 0.0,
            kspace: Vec::new(),
        };
        ff.total_power = ff.power_within(90.0);
        ff
    }

    fn ring(&self, t: usize) -> f64 {
        let np = self.phi_deg.len();
        let row = &self.power[t * np..(t + 1) * np];
        row.iter().sum::<f64>() * (2.0 * std::f64::consts::PI / np as f64)
    }

    /// Power inside the cone `theta <= theta_max_deg` (trapezoid in theta,
    /// linear interpolation inside the last interval).
    pub fn power_within(&self, theta_max_deg: f64) -> f64 {
        let th = &self.theta_deg;
        let g = |t: usize| self.ring(t) * th[t].to_radians().sin();
        let mut acc = 0.0;
        for t in 0..th.len() - 1 {
            let (a, b) = (th[t], th[t + 1]);
            if theta_max_deg <= a {
                break;
            }
            let h = (b - a).to_radians();
            if theta_max_deg >= b {
                acc += 0.5 * h * (g(t) + g(t + 1));
            } else {
                let f = (theta_max_deg - a) / (b - a);
                let gm = g(t) + f * (g(t + 1) - g(t));
                acc += 0.5 * h * f * (g(t) + gm);
                break;
            }
        }
        acc
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "theta_deg,phi_deg,power_density")?;
        let np = self.phi_deg.len();
        for (t, th) in self.theta_deg.iter().enumerate() {
            for (p, ph) in self.phi_deg.iter().enumerate() {
                writeln!(w, "{},{},{:e}", th, ph, self.power[t * np + p])?;
            }
        }
        Ok(())
    }

    /// The `(kx, ky)` lattice as a two-dimensional grid array (spacing in
    /// rad/nm).
    pub fn kspace_grid(&self) -> Result<GridArray> {
        let h = (self.kspace_n / 2) as f64;
        GridArray::new(
            vec![self.kspace_n, self.kspace_n],
            self.kspace_dk,
            vec![-h * self.kspace_dk, -h * self.kspace_dk],
            vec![self.kspace.clone()],
        )
    }
}

/// Fraction of the upward power inside the collection cone of `na`.
pub fn collection_efficiency(ff: &FarField, na: f64) -> Result<f64> {
    if !(na > 0.0 && na <= 1.0) {
        return Err(Error::invalid("na", "must satisfy 0 < NA <= 1"));
    }
    if !(ff.total_power > 0.0) {
        return Err(Error::DivisionGuard("far field carries no power".into()));
    }
    let theta = na.asin().to_degrees().min(90.0);
    let within = if na >= 1.0 { ff.total_power } else { ff.power_within(theta) };
    Ok(within / ff.total_power)
}

/// `collection_efficiency(reference) / collection_efficiency(cavity)`.
pub fn detection_ratio(reference: &FarField, cavity: &FarField, na: f64) -> Result<f64> {
    let c = collection_efficiency(cavity, na)?;
    if !(c > 0.0) {
        return Err(Error::DivisionGuard("cavity collection efficiency is zero".into()));
    }
    Ok(collection_efficiency(reference, na)? / c)
}

/// Node-plane index at height `z_nm`, rejected when the plane touches
/// dielectric or an absorbing layer.
pub fn analysis_plane(grid: &PermittivityGrid, boundary: &BoundarySpec, z_nm: f64) -> Result<usize> {
    let n = grid.dims();
    let k = ((z_nm - grid.origin_nm()[2]) / grid.cell_nm()).round();
    let place = |what| Error::OutOfDomain {
        what: "analysis plane",
        x: 0.0,
        y: 0.0,
        z: z_nm,
        place: what,
    };
    if !(k >= 1.0 && k < n[2] as f64) {
        return Err(place("outside the grid"));
    }
    let k = k as usize;
    let l = boundary.pml_cells;
    if (boundary.faces[2][1] == FaceKind::Pml && k + 1 >= n[2] - l) || (boundary.faces[2][0] == FaceKind::Pml && k <= l) {
        return Err(place("inside the absorbing layer"));
    }
    for kk in [k - 1, k, k + 1] {
        for axis in Axis::ALL {
            for i in 0..=n[0] {
                for j in 0..=n[1] {
                    if grid.is_valid(axis, i, j, kk) && grid.eps_at(axis, i, j, kk) != 1.0 {
                        return Err(place("inside or next to dielectric"));
                    }
                }
            }
        }
    }
    Ok(k)
}
