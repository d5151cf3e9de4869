use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::{
    init_simulation, BoundarySpec, Component, FaceKind, FieldDft, FieldState, MonitorSpec, SourceSpec,
};
use crate::geometry::PermittivityGrid;

use super::harminv::{harmonic_inversion_with, nm_to_hz, HarmonicOptions};

/// Energy density `eps |E|^2` and field on the grid nodes, node layout
/// `(nx+1)(ny+1)(nz+1)` with k fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeProfile {
    pub dims: [usize; 3],
    pub cell_nm: f64,
    pub origin_nm: [f64; 3],
    /// Low faces that are symmetry planes of a reduced domain.
    pub mirrors: [bool; 3],
    /// Nodes this many cells from the (low, high) faces are excluded from
    /// integrals (absorbing layers).
    pub margin: [[usize; 2]; 3],
    pub density: Vec<f64>,
    pub eps: Vec<f64>,
    /// Complex E at the nodes, scaled consistently with `density`.
    pub field: Option<[Vec<Complex64>; 3]>,
}

impl ModeProfile {
    /// Profile from a node density and permittivity, no mirrors or margins.
    pub fn from_density(dims: [usize; 3], cell_nm: f64, origin_nm: [f64; 3], density: Vec<f64>, eps: Vec<f64>) -> Result<Self> {
        let len = (dims[0] + 1) * (dims[1] + 1) * (dims[2] + 1);
        if density.len() != len || eps.len() != len {
            return Err(Error::invalid("profile", format!("expected {len} node samples")));
        }
        Ok(ModeProfile {
            dims,
            cell_nm,
            origin_nm,
            mirrors: [false; 3],
            margin: [[0; 2]; 3],
            density,
            eps,
            field: None,
        })
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * (self.dims[1] + 1) + j) * (self.dims[2] + 1) + k
    }

    pub fn unindex(&self, idx: usize) -> [usize; 3] {
        let nz = self.dims[2] + 1;
        let ny = self.dims[1] + 1;
        [idx / (ny * nz), (idx / nz) % ny, idx % nz]
    }

    pub fn node_position(&self, ijk: [usize; 3]) -> [f64; 3] {
        [0, 1, 2].map(|d| self.origin_nm[d] + ijk[d] as f64 * self.cell_nm)
    }

    fn in_interior(&self, ijk: [usize; 3]) -> bool {
        (0..3).all(|d| ijk[d] >= self.margin[d][0] && ijk[d] + self.margin[d][1] <= self.dims[d])
    }

    /// Integration weight of a node once mirrored copies are accounted for.
    fn weight(&self, ijk: [usize; 3]) -> f64 {
        (0..3)
            .map(|d| if self.mirrors[d] && ijk[d] > 0 { 2.0 } else { 1.0 })
            .product()
    }

    pub fn max_density(&self) -> f64 {
        self.density.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    /// Node index of the density maximum (first in storage order on ties).
    pub fn argmax(&self) -> [usize; 3] {
        let mut best = 0;
        for (i, &v) in self.density.iter().enumerate() {
            if v > self.density[best] {
                best = i;
            }
        }
        self.unindex(best)
    }

    pub fn argmax_position_nm(&self) -> [f64; 3] {
        self.node_position(self.argmax())
    }

    /// Position of the largest `|E|^2` (density over permittivity).
    pub fn intensity_argmax_position_nm(&self) -> [f64; 3] {
        let mut best = 0;
        let mut top = f64::NEG_INFINITY;
        for (i, (&v, &e)) in self.density.iter().zip(&self.eps).enumerate() {
            let u = v / e;
            if u > top {
                top = u;
                best = i;
            }
        }
        self.node_position(self.unindex(best))
    }

    /// Rescales density and field so that the maximum density is 1.
    pub fn normalize(&mut self) -> Result<()> {
        let m = self.max_density();
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::DivisionGuard("profile has no energy".into()));
        }
        self.density.iter_mut().for_each(|v| *v /= m);
        if let Some(f) = &mut self.field {
            let s = 1.0 / m.sqrt();
            for c in f.iter_mut() {
                c.iter_mut().for_each(|v| *v *= s);
            }
        }
        Ok(())
    }

    pub fn is_normalized(&self) -> bool {
        (self.max_density() - 1.0).abs() < 1e-9
    }

    /// Largest density difference between the profile and its mirror image
    /// through the center plane normal to `axis`, relative to the maximum.
    pub fn asymmetry(&self, axis: usize) -> f64 {
        let m = self.max_density();
        if m == 0.0 {
            return 0.0;
        }
        let n = self.dims[axis];
        let mut worst: f64 = 0.0;
        for (idx, &v) in self.density.iter().enumerate() {
            let mut ijk = self.unindex(idx);
            ijk[axis] = n - ijk[axis];
            let w = self.density[self.index(ijk[0], ijk[1], ijk[2])];
            worst = worst.max((v - w).abs());
        }
        worst / m
    }

    /// Fraction of the interior energy within `radius_nm` of the density
    /// maximum (mirror images included). Close to one for a confined mode;
    /// an extended field spreads over the whole domain.
    pub fn localization(&self, radius_nm: f64) -> f64 {
        let c = self.argmax_position_nm();
        let mut inside = 0.0;
        let mut total = 0.0;
        for (idx, &v) in self.density.iter().enumerate() {
            let ijk = self.unindex(idx);
            if !self.in_interior(ijk) {
                continue;
            }
            let e = self.weight(ijk) * v;
            total += e;
            let p = self.node_position(ijk);
            let d2: f64 = (0..3).map(|a| (p[a] - c[a]).powi(2)).sum();
            if d2 <= radius_nm * radius_nm {
                inside += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            inside / total
        }
    }

    /// Trilinear interpolation of the density at a physical point.
    pub fn density_at(&self, p: [f64; 3]) -> Option<f64> {
        self.interpolate(p, |idx| self.density[idx])
    }

    pub fn eps_at(&self, p: [f64; 3]) -> Option<f64> {
        self.interpolate(p, |idx| self.eps[idx])
    }

    /// Complex field vector at a physical point.
    pub fn field_at(&self, p: [f64; 3]) -> Option<[Complex64; 3]> {
        let f = self.field.as_ref()?;
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for c in 0..3 {
            let re = self.interpolate(p, |idx| f[c][idx].re)?;
            let im = self.interpolate(p, |idx| f[c][idx].im)?;
            out[c] = Complex64::new(re, im);
        }
        Some(out)
    }

    /// Maps `p` into the stored domain, reflecting through mirror planes.
    pub fn fold(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        let mut g = [0.0; 3];
        for d in 0..3 {
            let mut x = (p[d] - self.origin_nm[d]) / self.cell_nm;
            if self.mirrors[d] && x < 0.0 {
                x = -x;
            }
            if !(x >= 0.0 && x <= self.dims[d] as f64) {
                return None;
            }
            g[d] = x;
        }
        Some(g)
    }

    /// Whether `p` falls in the absorbing margin of the stored domain.
    pub fn in_margin(&self, p: [f64; 3]) -> bool {
        match self.fold(p) {
            None => false,
            Some(g) => (0..3).any(|d| {
                g[d] < self.margin[d][0] as f64 || g[d] > (self.dims[d] - self.margin[d][1]) as f64
            }),
        }
    }

    fn interpolate(&self, p: [f64; 3], f: impl Fn(usize) -> f64) -> Option<f64> {
        let g = self.fold(p)?;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for d in 0..3 {
            let b = (g[d].floor() as usize).min(self.dims[d].saturating_sub(1));
            base[d] = b;
            frac[d] = g[d] - b as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut ijk = base;
            for d in 0..3 {
                if (corner >> d) & 1 == 1 {
                    w *= frac[d];
                    ijk[d] = (ijk[d] + 1).min(self.dims[d]);
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            if w != 0.0 {
                acc += w * f(self.index(ijk[0], ijk[1], ijk[2]));
            }
        }
        Some(acc)
    }
}

/// Localization fraction above which a profile counts as a confined mode,
/// using a radius of one free-space wavelength.
pub const LOCALIZED_FRACTION: f64 = 0.8;

/// Effective mode volume in nm^3: `sum(eps |E|^2) dV / max(eps |E|^2)` over
/// the interior, with mirror images included.
pub fn mode_volume(profile: &ModeProfile) -> Result<f64> {
    if !profile.is_normalized() {
        return Err(Error::NotNormalized(profile.max_density()));
    }
    let mut sum = 0.0;
    for (idx, &v) in profile.density.iter().enumerate() {
        let ijk = profile.unindex(idx);
        if profile.in_interior(ijk) {
            sum += profile.weight(ijk) * v;
        }
    }
    Ok(sum * profile.cell_nm.powi(3))
}

/// Builds a node profile from an accumulated single-frequency DFT.
pub fn profile_from_dft(dft: &FieldDft, state: &FieldState) -> Result<ModeProfile> {
    let n = state.dims();
    let layout = state.layout();
    let len = (n[0] + 1) * (n[1] + 1) * (n[2] + 1);
    let node = |i: usize, j: usize, k: usize| (i * (n[1] + 1) + j) * (n[2] + 1) + k;
    let mut density = vec![0.0; len];
    let mut eps_node = vec![0.0; len];
    let mut field = [vec![Complex64::new(0.0, 0.0); len], vec![Complex64::new(0.0, 0.0); len], vec![Complex64::new(0.0, 0.0); len]];
    let boundary = state.boundary();
    for i in 0..=n[0] {
        for j in 0..=n[1] {
            for k in 0..=n[2] {
                let ijk = [i, j, k];
                let q = node(i, j, k);
                let mut eps_acc = 0.0;
                let mut eps_cnt = 0.0;
                for a in 0..3 {
                    let eps = state.eps(a);
                    let data = dft.component(a);
                    let mut dens = 0.0;
                    let mut fsum = Complex64::new(0.0, 0.0);
                    let mut cnt = 0.0;
                    let mut fcnt = 0.0;
                    let mut push = |ix: [usize; 3]| {
                        let s = layout.at(ix[0], ix[1], ix[2]);
                        dens += eps[s] * data[s].norm_sqr();
                        fsum += data[s];
                        eps_acc += eps[s];
                        eps_cnt += 1.0;
                        cnt += 1.0;
                        fcnt += 1.0;
                    };
                    if ijk[a] < n[a] {
                        push(ijk);
                    }
                    if ijk[a] > 0 {
                        let mut m = ijk;
                        m[a] -= 1;
                        push(m);
                    }
                    // A magnetic-wall face makes the normal component odd.
                    if (ijk[a] == 0 && boundary.faces[a][0] == FaceKind::Pmc)
                        || (ijk[a] == n[a] && boundary.faces[a][1] == FaceKind::Pmc)
                    {
                        fsum = Complex64::new(0.0, 0.0);
                    }
                    if cnt > 0.0 {
                        density[q] += dens / cnt;
                        field[a][q] = fsum / fcnt;
                    }
                }
                eps_node[q] = eps_acc / eps_cnt;
            }
        }
    }
    let l = boundary.pml_cells;
    let mut margin = [[0usize; 2]; 3];
    let mut mirrors = [false; 3];
    for d in 0..3 {
        for s in 0..2 {
            if boundary.faces[d][s] == FaceKind::Pml {
                margin[d][s] = l;
            }
        }
        mirrors[d] = boundary.faces[d][0] != FaceKind::Pml;
    }
    let mut p = ModeProfile {
        dims: n,
        cell_nm: state.cell_nm(),
        origin_nm: state.origin_nm(),
        mirrors,
        margin,
        density,
        eps: eps_node,
        field: Some(field),
    };
    p.normalize()?;
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileOptions {
    /// Fractional bandwidth of the narrowband excitation.
    pub bandwidth: f64,
    /// Steps accumulated after the ring-down start.
    pub ringdown_steps: u64,
    /// A second mode inside the excitation band stronger than this fraction
    /// of the strongest one makes the request ambiguous.
    pub degeneracy_threshold: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            bandwidth: 0.01,
            ringdown_steps: 4000,
            degeneracy_threshold: 0.1,
        }
    }
}

/// Steps after which a ring-down analysis may start: two pulse widths past
/// the source turn-off.
pub fn ringdown_start(state: &FieldState) -> u64 {
    match state.pulse() {
        Some(p) => p.turn_off_step() + (2.0 * p.width_steps).ceil() as u64,
        None => 0,
    }
}

/// Runs a narrowband simulation at `wavelength_nm` and returns the
/// normalized steady-state profile accumulated over the ring-down.
pub fn extract_mode_profile(
    grid: &PermittivityGrid,
    wavelength_nm: f64,
    boundary: &BoundarySpec,
    source: &SourceSpec,
    opts: &ProfileOptions,
) -> Result<ModeProfile> {
    let mut src = source.clone();
    src.wavelength_nm = wavelength_nm;
    src.bandwidth = opts.bandwidth;
    src.delay_steps = None;
    src.width_steps = None;
    let mut state = init_simulation(grid, &src, boundary)?;
    let start = ringdown_start(&state);
    let mut dft = FieldDft::new(&state, wavelength_nm, start);
    let comp = dominant_component(&src.orientation);
    let monitor = MonitorSpec::point("profile-probe", comp, src.position_nm);
    let records = state.run_observed(start + opts.ringdown_steps, &[monitor], &mut [&mut dft])?;
    let rec = &records[0];
    let tail = &rec.samples[start as usize..];
    let f = nm_to_hz(wavelength_nm);
    let band = (f * (1.0 - opts.bandwidth), f * (1.0 + opts.bandwidth));
    let modes = harmonic_inversion_with(tail, rec.dt_s, band, &HarmonicOptions::default())?;
    if modes.len() >= 2 {
        let top = modes.iter().fold(0.0f64, |m, c| m.max(c.amplitude));
        let strong = modes.iter().filter(|c| c.amplitude >= opts.degeneracy_threshold * top).count();
        if strong >= 2 {
            let list: Vec<String> = modes.iter().map(|c| format!("{:.3} nm", c.wavelength_nm)).collect();
            return Err(Error::DegenerateModes(format!(
                "{} modes inside the excitation band: {}",
                strong,
                list.join(", ")
            )));
        }
    }
    profile_from_dft(&dft, &state)
}

pub(crate) fn dominant_component(d: &[f64; 3]) -> Component {
    let mut best = 0;
    for a in 1..3 {
        if d[a].abs() > d[best].abs() {
            best = a;
        }
    }
    Component::electric(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_box_volume_is_box_volume() {
        let dims = [10, 10, 10];
        let len = 11 * 11 * 11;
        let mut p = ModeProfile::from_density(dims, 5.0, [0.0; 3], vec![0.0; len], vec![2.0; len]).unwrap();
        let mut count = 0;
        for i in 2..6 {
            for j in 3..8 {
                for k in 1..4 {
                    let q = p.index(i, j, k);
                    p.density[q] = 2.0;
                    count += 1;
                }
            }
        }
        assert!(matches!(mode_volume(&p), Err(Error::NotNormalized(_))));
        p.normalize().unwrap();
        let v = mode_volume(&p).unwrap();
        assert!((v - count as f64 * 125.0).abs() < 1e-9);
    }

    #[test]
    fn mirrored_profile_counts_images() {
        let dims = [4, 4, 4];
        let len = 125;
        let mut p = ModeProfile::from_density(dims, 1.0, [0.0; 3], vec![1.0; len], vec![1.0; len]).unwrap();
        let v_plain = mode_volume(&p).unwrap();
        assert_eq!(v_plain, 125.0);
        p.mirrors = [true, false, false];
        let v = mode_volume(&p).unwrap();
        assert_eq!(v, 25.0 + 2.0 * 100.0);
        assert_eq!(p.density_at([-1.5, 2.0, 2.0]), p.density_at([1.5, 2.0, 2.0]));
    }
}
