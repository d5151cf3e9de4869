//! Yee-grid FDTD in normalized units (c = 1, vacuum impedance 1, cell = 1).
//!
//! Electric fields live at integer steps, magnetic fields at half steps. A
//! step advances H by a half step from E, then E by a full step from H,
//! then injects the soft dipole current. Both half-steps are data-parallel
//! over x-planes; every output sample depends only on the previous
//! half-step, so results do not depend on the number of workers.

mod checkpoint;
mod dft;
mod layout;
mod monitor;
mod pml;
mod source;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Axis, PermittivityGrid};

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use dft::{FieldDft, PlaneDft, PlaneFields};
pub use layout::{Component, Layout};
pub use monitor::{MonitorRecord, MonitorSpec};
pub use source::{Pulse, SourceSpec};

pub(crate) use source::trilinear_folded;

pub const DEFAULT_COURANT: f64 = 0.5;
pub const MIN_PML_CELLS: usize = 8;

/// Boundary treatment of one face of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceKind {
    /// Absorbing layer inside the domain, backed by a conducting wall.
    Pml,
    /// Perfect electric conductor: tangential E vanishes on the face.
    Pec,
    /// Perfect magnetic conductor: tangential H is odd about the face.
    Pmc,
}

fn default_order() -> f64 {
    3.0
}
fn default_scale() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.05
}
fn default_pml_cells() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    /// `[axis][low, high]`.
    pub faces: [[FaceKind; 2]; 3],
    #[serde(default = "default_pml_cells")]
    pub pml_cells: usize,
    #[serde(default = "default_order")]
    pub grading_order: f64,
    #[serde(default = "default_scale")]
    pub sigma_scale: f64,
    #[serde(default = "default_alpha")]
    pub cfs_alpha: f64,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self::pml(default_pml_cells())
    }
}

impl BoundarySpec {
    pub fn pml(cells: usize) -> Self {
        BoundarySpec {
            faces: [[FaceKind::Pml; 2]; 3],
            pml_cells: cells,
            grading_order: default_order(),
            sigma_scale: default_scale(),
            cfs_alpha: default_alpha(),
        }
    }

    pub fn closed() -> Self {
        BoundarySpec {
            faces: [[FaceKind::Pec; 2]; 3],
            ..Self::pml(default_pml_cells())
        }
    }

    pub fn with_face(mut self, axis: Axis, high: bool, kind: FaceKind) -> Self {
        self.faces[axis.index()][high as usize] = kind;
        self
    }

    pub fn has_pml(&self) -> bool {
        self.faces.iter().flatten().any(|f| *f == FaceKind::Pml)
    }

    pub fn validate(&self, grid: &PermittivityGrid) -> Result<()> {
        if !self.has_pml() {
            return Ok(());
        }
        if self.pml_cells < MIN_PML_CELLS {
            return Err(Error::invalid(
                "pml_cells",
                format!("at least {MIN_PML_CELLS} cells required"),
            ));
        }
        if !(self.grading_order >= 1.0) || !(self.sigma_scale > 0.0) || !(self.cfs_alpha >= 0.0) {
            return Err(Error::invalid("boundary", "bad PML grading parameters"));
        }
        let dims = grid.dims();
        for d in 0..3 {
            let npml = self.faces[d].iter().filter(|f| **f == FaceKind::Pml).count();
            if npml > 0 && npml * self.pml_cells + 2 > dims[d] {
                return Err(Error::DomainTooSmall(format!(
                    "axis {d}: {} cells cannot hold {npml} x {} absorbing cells",
                    dims[d], self.pml_cells
                )));
            }
        }
        Ok(())
    }

    /// Whether grid position `g` (in cells) lies inside an absorbing slab.
    pub fn in_pml(&self, dims: [usize; 3], g: [f64; 3]) -> bool {
        let l = self.pml_cells as f64;
        (0..3).any(|d| {
            (self.faces[d][0] == FaceKind::Pml && g[d] < l)
                || (self.faces[d][1] == FaceKind::Pml && g[d] > dims[d] as f64 - l)
        })
    }
}

/// Complete simulation state: fields, update coefficients, PML memory and
/// the prepared source.
#[derive(Debug, Clone)]
pub struct FieldState {
    layout: Layout,
    cell_nm: f64,
    origin_nm: [f64; 3],
    courant: f64,
    step: u64,
    e: [Vec<f64>; 3],
    h: [Vec<f64>; 3],
    eps: [Vec<f64>; 3],
    /// `courant / eps`, zero where tangential E is pinned by a conducting face.
    cb: [Vec<f64>; 3],
    boundary: BoundarySpec,
    profiles: [pml::AxisProfile; 3],
    psi: Vec<pml::PsiBox>,
    source: Option<source::PreparedSource>,
    nan_check_interval: u64,
}

pub fn init_simulation(
    grid: &PermittivityGrid,
    source: &SourceSpec,
    boundary: &BoundarySpec,
) -> Result<FieldState> {
    FieldState::new(grid, Some(source), boundary, DEFAULT_COURANT)
}

pub fn init_simulation_with(
    grid: &PermittivityGrid,
    source: Option<&SourceSpec>,
    boundary: &BoundarySpec,
    courant: f64,
) -> Result<FieldState> {
    FieldState::new(grid, source, boundary, courant)
}

impl FieldState {
    pub fn new(
        grid: &PermittivityGrid,
        source: Option<&SourceSpec>,
        boundary: &BoundarySpec,
        courant: f64,
    ) -> Result<Self> {
        let limit = 1.0 / 3f64.sqrt();
        if !(courant > 0.0 && courant <= limit) {
            return Err(Error::UnstableCourant { courant, limit });
        }
        boundary.validate(grid)?;
        let n = grid.dims();
        let layout = Layout::new(n);
        let len = layout.len();
        let mut eps = [vec![1.0; len], vec![1.0; len], vec![1.0; len]];
        let mut cb = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];
        for axis in Axis::ALL {
            let a = axis.index();
            let comp = Component::electric(a);
            let src = grid.eps(axis);
            for i in 0..comp.extent(n, 0) {
                for j in 0..comp.extent(n, 1) {
                    for k in 0..comp.extent(n, 2) {
                        let e = src[grid.index(i, j, k)];
                        if !(e >= 1.0) {
                            return Err(Error::invalid("permittivity", format!("sample {e} < 1")));
                        }
                        let idx = layout.at(i, j, k);
                        eps[a][idx] = e;
                        let ijk = [i, j, k];
                        let pinned = (0..3).any(|d| {
                            d != a
                                && ((ijk[d] == 0 && boundary.faces[d][0] != FaceKind::Pmc)
                                    || (ijk[d] == n[d] && boundary.faces[d][1] != FaceKind::Pmc))
                        });
                        cb[a][idx] = if pinned { 0.0 } else { courant / e };
                    }
                }
            }
        }
        let params = pml::PmlParams {
            cells: boundary.pml_cells,
            order: boundary.grading_order,
            sigma_scale: boundary.sigma_scale,
            alpha_max: boundary.cfs_alpha,
        };
        let mut pml_faces = [[false; 2]; 3];
        for d in 0..3 {
            for s in 0..2 {
                pml_faces[d][s] = boundary.faces[d][s] == FaceKind::Pml;
            }
        }
        let profiles = [0, 1, 2].map(|d| {
            pml::axis_profile(n[d], pml_faces[d][0], pml_faces[d][1], &params, courant)
        });
        let psi = if boundary.has_pml() {
            pml::build_boxes(n, pml_faces, boundary.pml_cells)
        } else {
            Vec::new()
        };
        let prepared = match source {
            Some(s) => {
                let g = grid.to_grid_coords(s.position_nm);
                if grid.contains(s.position_nm) && boundary.in_pml(n, g) {
                    let p = s.position_nm;
                    return Err(Error::OutOfDomain {
                        what: "source",
                        x: p[0],
                        y: p[1],
                        z: p[2],
                        place: "inside the absorbing layer",
                    });
                }
                Some(source::prepare(s, grid, &layout, courant)?)
            }
            None => None,
        };
        Ok(FieldState {
            layout,
            cell_nm: grid.cell_nm(),
            origin_nm: grid.origin_nm(),
            courant,
            step: 0,
            e: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
            h: [vec![0.0; len], vec![0.0; len], vec![0.0; len]],
            eps,
            cb,
            boundary: boundary.clone(),
            profiles,
            psi,
            source: prepared,
            nan_check_interval: 32,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.layout.n
    }
    pub fn layout(&self) -> &Layout {
        &self.layout
    }
    pub fn cell_nm(&self) -> f64 {
        self.cell_nm
    }
    pub fn origin_nm(&self) -> [f64; 3] {
        self.origin_nm
    }
    pub fn courant(&self) -> f64 {
        self.courant
    }
    pub fn step_index(&self) -> u64 {
        self.step
    }
    pub fn boundary(&self) -> &BoundarySpec {
        &self.boundary
    }
    pub fn pulse(&self) -> Option<Pulse> {
        self.source.as_ref().map(|s| s.pulse)
    }

    /// Raw padded array of one component.
    pub fn field(&self, c: Component) -> &[f64] {
        let a = c.axis();
        if c.is_electric() {
            &self.e[a]
        } else {
            &self.h[a]
        }
    }

    pub fn field_mut(&mut self, c: Component) -> &mut [f64] {
        let a = c.axis();
        if c.is_electric() {
            &mut self.e[a]
        } else {
            &mut self.h[a]
        }
    }

    /// Relative permittivity at the E sample of `axis` (padded index).
    pub fn eps(&self, axis: usize) -> &[f64] {
        &self.eps[axis]
    }

    pub fn value(&self, c: Component, i: usize, j: usize, k: usize) -> f64 {
        self.field(c)[self.layout.at(i, j, k)]
    }

    /// Multiplies every field sample by `s`.
    pub fn scale_fields(&mut self, s: f64) {
        for arr in self.e.iter_mut().chain(self.h.iter_mut()) {
            arr.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn set_nan_check_interval(&mut self, every: u64) {
        self.nan_check_interval = every.max(1);
    }

    /// Field value at a physical point, interpolated on the component's own
    /// staggered lattice.
    pub fn sample(&self, c: Component, p_nm: [f64; 3]) -> f64 {
        let g = self.grid_coords(p_nm);
        let arr = self.field(c);
        trilinear_folded(c, self.layout.n, g, self.mirror_signs())
            .into_iter()
            .map(|(ijk, w)| w * arr[self.layout.at(ijk[0], ijk[1], ijk[2])])
            .sum()
    }

    /// Image parity of each low face: `+1` for an electric wall, `-1` for
    /// a magnetic wall, `None` otherwise.
    pub fn mirror_signs(&self) -> [Option<f64>; 3] {
        [0, 1, 2].map(|d| match self.boundary.faces[d][0] {
            FaceKind::Pec => Some(1.0),
            FaceKind::Pmc => Some(-1.0),
            FaceKind::Pml => None,
        })
    }

    pub fn grid_coords(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.origin_nm[0]) / self.cell_nm,
            (p[1] - self.origin_nm[1]) / self.cell_nm,
            (p[2] - self.origin_nm[2]) / self.cell_nm,
        ]
    }

    /// Advances the state by one time step.
    pub fn step(&mut self) -> Result<()> {
        self.update_h();
        self.apply_pml(false);
        self.fill_pmc_ghosts();
        self.update_e();
        self.apply_pml(true);
        if let Some(src) = &self.source {
            let j = src.pulse.value(self.step as f64 + 0.5);
            if j != 0.0 {
                for &(c, idx, w) in &src.taps {
                    let a = c.axis();
                    self.e[a][idx] -= self.cb[a][idx] * w * j;
                }
            }
        }
        self.step += 1;
        if self.step % self.nan_check_interval == 0 {
            self.check_finite()?;
        }
        Ok(())
    }

    /// Scans every field for NaN or infinite values.
    pub fn check_finite(&self) -> Result<()> {
        for c in Component::ALL {
            if let Some((index, &value)) = self.field(c).iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::Instability {
                    step: self.step,
                    component: c.name(),
                    index,
                    value,
                });
            }
        }
        Ok(())
    }

    fn update_h(&mut self) {
        let l = self.layout;
        let [nx, ny, nz] = l.n;
        let (sx, sy) = (l.sx, l.sy);
        let s = self.courant;
        let [ex, ey, ez] = &self.e;
        let [hx, hy, hz] = &mut self.h;
        hx.par_chunks_mut(sx)
            .zip(hy.par_chunks_mut(sx))
            .zip(hz.par_chunks_mut(sx))
            .enumerate()
            .for_each(|(pi, ((hx_p, hy_p), hz_p))| {
                if pi == 0 || pi > nx + 1 {
                    return;
                }
                let i = pi - 1;
                let b0 = pi * sx;
                let ex_p = &ex[b0..b0 + sx];
                let ey_p = &ey[b0..b0 + sx];
                let ez_p = &ez[b0..b0 + sx];
                let has_next = i < nx;
                let (ey_n, ez_n) = if has_next {
                    (&ey[b0 + sx..b0 + 2 * sx], &ez[b0 + sx..b0 + 2 * sx])
                } else {
                    (ey_p, ez_p)
                };
                for j in 0..=ny {
                    let r = (j + 1) * sy + 1;
                    if j < ny {
                        // Hx(i, j+1/2, k+1/2), k < nz
                        curl_sub(
                            &mut hx_p[r..r + nz],
                            s,
                            &ez_p[r + sy..r + sy + nz],
                            &ez_p[r..r + nz],
                            &ey_p[r + 1..r + 1 + nz],
                            &ey_p[r..r + nz],
                        );
                    }
                    if !has_next {
                        continue;
                    }
                    // Hy(i+1/2, j, k+1/2), k < nz
                    curl_sub(
                        &mut hy_p[r..r + nz],
                        s,
                        &ex_p[r + 1..r + 1 + nz],
                        &ex_p[r..r + nz],
                        &ez_n[r..r + nz],
                        &ez_p[r..r + nz],
                    );
                    if j < ny {
                        // Hz(i+1/2, j+1/2, k), k <= nz
                        curl_sub(
                            &mut hz_p[r..r + nz + 1],
                            s,
                            &ey_n[r..r + nz + 1],
                            &ey_p[r..r + nz + 1],
                            &ex_p[r + sy..r + sy + nz + 1],
                            &ex_p[r..r + nz + 1],
                        );
                    }
                }
            });
    }

    fn update_e(&mut self) {
        let l = self.layout;
        let [nx, ny, nz] = l.n;
        let (sx, sy) = (l.sx, l.sy);
        let [hx, hy, hz] = &self.h;
        let [cbx, cby, cbz] = &self.cb;
        let [ex, ey, ez] = &mut self.e;
        ex.par_chunks_mut(sx)
            .zip(ey.par_chunks_mut(sx))
            .zip(ez.par_chunks_mut(sx))
            .enumerate()
            .for_each(|(pi, ((ex_p, ey_p), ez_p))| {
                if pi == 0 || pi > nx + 1 {
                    return;
                }
                let i = pi - 1;
                let b0 = pi * sx;
                let hx_p = &hx[b0..b0 + sx];
                let hy_p = &hy[b0..b0 + sx];
                let hz_p = &hz[b0..b0 + sx];
                let hy_m = &hy[b0 - sx..b0];
                let hz_m = &hz[b0 - sx..b0];
                let cbx_p = &cbx[b0..b0 + sx];
                let cby_p = &cby[b0..b0 + sx];
                let cbz_p = &cbz[b0..b0 + sx];
                for j in 0..=ny {
                    let r = (j + 1) * sy + 1;
                    if i < nx {
                        // Ex(i+1/2, j, k), k <= nz
                        curl_add(
                            &mut ex_p[r..r + nz + 1],
                            &cbx_p[r..r + nz + 1],
                            &hz_p[r..r + nz + 1],
                            &hz_p[r - sy..r - sy + nz + 1],
                            &hy_p[r..r + nz + 1],
                            &hy_p[r - 1..r + nz],
                        );
                    }
                    if j < ny {
                        // Ey(i, j+1/2, k), k <= nz
                        curl_add(
                            &mut ey_p[r..r + nz + 1],
                            &cby_p[r..r + nz + 1],
                            &hx_p[r..r + nz + 1],
                            &hx_p[r - 1..r + nz],
                            &hz_p[r..r + nz + 1],
                            &hz_m[r..r + nz + 1],
                        );
                    }
                    // Ez(i, j, k+1/2), k < nz
                    curl_add(
                        &mut ez_p[r..r + nz],
                        &cbz_p[r..r + nz],
                        &hy_p[r..r + nz],
                        &hy_m[r..r + nz],
                        &hx_p[r..r + nz],
                        &hx_p[r - sy..r - sy + nz],
                    );
                }
            });
    }

    fn apply_pml(&mut self, electric: bool) {
        let layout = self.layout;
        let courant = self.courant;
        for bx in self.psi.iter_mut() {
            if bx.target.is_electric() != electric {
                continue;
            }
            let t = bx.target.axis();
            let s = bx.source.axis();
            let profile = &self.profiles[bx.axis];
            if electric {
                let target = &mut self.e[t];
                pml::apply_box(bx, &layout, profile, target, &self.h[s], Some(&self.cb[t]), courant);
            } else {
                let target = &mut self.h[t];
                pml::apply_box(bx, &layout, profile, target, &self.e[s], None, courant);
            }
        }
    }

    /// Sets ghost H samples beyond magnetic-wall faces to the odd image of
    /// the first interior sample.
    fn fill_pmc_ghosts(&mut self) {
        let l = self.layout;
        let n = l.n;
        for axis in 0..3 {
            for side in 0..2 {
                if self.boundary.faces[axis][side] != FaceKind::Pmc {
                    continue;
                }
                for t in 0..3 {
                    if t == axis {
                        continue;
                    }
                    let comp = Component::magnetic(t);
                    let (ghost, inner) = if side == 0 {
                        (-1isize, 0isize)
                    } else {
                        (n[axis] as isize, n[axis] as isize - 1)
                    };
                    let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
                    let e1 = comp.extent(n, a1);
                    let e2 = comp.extent(n, a2);
                    let arr = &mut self.h[t];
                    for u in 0..e1 {
                        for v in 0..e2 {
                            let mut g = [0isize; 3];
                            g[axis] = ghost;
                            g[a1] = u as isize;
                            g[a2] = v as isize;
                            let mut m = g;
                            m[axis] = inner;
                            let gi = l.at_signed(g[0], g[1], g[2]);
                            let mi = l.at_signed(m[0], m[1], m[2]);
                            arr[gi] = -arr[mi];
                        }
                    }
                }
            }
        }
    }

    fn interior_range(&self, comp: Component, axis: usize) -> std::ops::Range<usize> {
        let n = self.layout.n;
        let l = self.boundary.pml_cells;
        let ext = comp.extent(n, axis);
        let lo = if self.boundary.faces[axis][0] == FaceKind::Pml { l } else { 0 };
        let hi = if self.boundary.faces[axis][1] == FaceKind::Pml {
            ext.min(n[axis] - l + 1)
        } else {
            ext
        };
        lo..hi
    }

    /// `1/2 sum(eps |E|^2 + |H|^2)` over the non-absorbing interior, in
    /// normalized units (cell volume 1).
    pub fn total_field_energy(&self) -> f64 {
        let mut total = 0.0;
        for c in Component::ALL {
            let arr = self.field(c);
            let eps = if c.is_electric() { Some(&self.eps[c.axis()]) } else { None };
            let (ri, rj, rk) = (
                self.interior_range(c, 0),
                self.interior_range(c, 1),
                self.interior_range(c, 2),
            );
            let mut acc = 0.0;
            for i in ri {
                for j in rj.clone() {
                    for k in rk.clone() {
                        let idx = self.layout.at(i, j, k);
                        let v = arr[idx];
                        acc += match eps {
                            Some(e) => e[idx] * v * v,
                            None => v * v,
                        };
                    }
                }
            }
            total += acc;
        }
        0.5 * total
    }

    /// Discrete energy `1/2 sum(eps E^n . E^n) + 1/2 sum(H^(n-1/2) . H^(n+1/2))`,
    /// which the leapfrog update conserves exactly in a closed lossless box
    /// once the source is off.
    pub fn conserved_energy(&self) -> f64 {
        let mut next = self.clone();
        next.source = None;
        next.update_h();
        let mut total = 0.0;
        for a in 0..3 {
            let ce = Component::electric(a);
            let ch = Component::magnetic(a);
            let n = self.layout.n;
            for i in 0..ce.extent(n, 0) {
                for j in 0..ce.extent(n, 1) {
                    for k in 0..ce.extent(n, 2) {
                        let idx = self.layout.at(i, j, k);
                        total += self.eps[a][idx] * self.e[a][idx] * self.e[a][idx];
                    }
                }
            }
            for i in 0..ch.extent(n, 0) {
                for j in 0..ch.extent(n, 1) {
                    for k in 0..ch.extent(n, 2) {
                        let idx = self.layout.at(i, j, k);
                        total += self.h[a][idx] * next.h[a][idx];
                    }
                }
            }
        }
        0.5 * total
    }

    /// Runs `n_steps` steps, sampling each monitor after every step.
    pub fn run(&mut self, n_steps: u64, monitors: &[MonitorSpec]) -> Result<Vec<MonitorRecord>> {
        self.run_observed(n_steps, monitors, &mut [])
    }

    pub fn run_observed(
        &mut self,
        n_steps: u64,
        monitors: &[MonitorSpec],
        observers: &mut [&mut dyn Observer],
    ) -> Result<Vec<MonitorRecord>> {
        let mut records: Vec<MonitorRecord> = monitors
            .iter()
            .map(|m| MonitorRecord::start(m, self))
            .collect::<Result<_>>()?;
        for _ in 0..n_steps {
            self.step()?;
            for rec in records.iter_mut() {
                let v = rec.probe(self);
                if !v.is_finite() {
                    self.check_finite()?;
                }
                rec.samples.push(v);
            }
            for obs in observers.iter_mut() {
                obs.observe(self);
            }
        }
        self.check_finite()?;
        Ok(records)
    }
}

/// `out -= s ((a1 - a0) - (b1 - b0))` elementwise.
#[inline(always)]
fn curl_sub(out: &mut [f64], s: f64, a1: &[f64], a0: &[f64], b1: &[f64], b0: &[f64]) {
    let n = out.len();
    let (a1, a0, b1, b0) = (&a1[..n], &a0[..n], &b1[..n], &b0[..n]);
    for k in 0..n {
        out[k] -= s * ((a1[k] - a0[k]) - (b1[k] - b0[k]));
    }
}

/// `out += c ((a1 - a0) - (b1 - b0))` elementwise.
#[inline(always)]
fn curl_add(out: &mut [f64], c: &[f64], a1: &[f64], a0: &[f64], b1: &[f64], b0: &[f64]) {
    let n = out.len();
    let (c, a1, a0, b1, b0) = (&c[..n], &a1[..n], &a0[..n], &b1[..n], &b0[..n]);
    for k in 0..n {
        out[k] += c[k] * ((a1[k] - a0[k]) - (b1[k] - b0[k]));
    }
}

/// Receives the state after every step of [`FieldState::run_observed`].
pub trait Observer {
    fn observe(&mut self, state: &FieldState);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vacuum(n: usize) -> PermittivityGrid {
        PermittivityGrid::vacuum([n, n, n], 10.0, [0.0; 3])
    }

    #[test]
    fn vacuum_coefficients_and_zero_energy() {
        let g = vacuum(24);
        let src = SourceSpec::dipole([120.0, 120.0, 120.0], [0.0, 0.0, 1.0], 100.0, 0.5);
        let st = init_simulation(&g, &src, &BoundarySpec::pml(8)).unwrap();
        assert_eq!(st.total_field_energy(), 0.0);
        let n = st.dims();
        for a in 0..3 {
            let c = Component::electric(a);
            for i in 1..n[0] {
                for j in 1..n[1] {
                    for k in 1..n[2] {
                        if c.valid(n, [i, j, k]) {
                            assert_eq!(st.cb[a][st.layout.at(i, j, k)], DEFAULT_COURANT);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_unstable_courant_and_source_in_pml() {
        let g = vacuum(24);
        let src = SourceSpec::dipole([120.0, 120.0, 120.0], [1.0, 0.0, 0.0], 100.0, 0.5);
        assert!(matches!(
            init_simulation_with(&g, Some(&src), &BoundarySpec::pml(8), 0.6),
            Err(Error::UnstableCourant { .. })
        ));
        let edge = SourceSpec::dipole([30.0, 120.0, 120.0], [1.0, 0.0, 0.0], 100.0, 0.5);
        assert!(matches!(
            init_simulation(&g, &edge, &BoundarySpec::pml(8)),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(init_simulation(&g, &src, &BoundarySpec::pml(6)).is_err());
    }

    #[test]
    fn rejects_non_unit_orientation() {
        let g = vacuum(24);
        let src = SourceSpec::dipole([120.0, 120.0, 120.0], [1.0, 1.0, 0.0], 100.0, 0.5);
        assert!(init_simulation(&g, &src, &BoundarySpec::pml(8)).is_err());
    }

    #[test]
    fn energy_scales_quadratically() {
        let g = vacuum(24);
        let src = SourceSpec::dipole([120.0, 120.0, 120.0], [0.0, 0.0, 1.0], 100.0, 0.5);
        let mut st = init_simulation(&g, &src, &BoundarySpec::closed()).unwrap();
        st.run(40, &[]).unwrap();
        let e1 = st.total_field_energy();
        assert!(e1 > 0.0);
        st.scale_fields(2.0);
        let e2 = st.total_field_energy();
        assert!((e2 / e1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn detects_instability() {
        let g = vacuum(16);
        let mut st = init_simulation_with(&g, None, &BoundarySpec::closed(), 0.5).unwrap();
        let idx = st.layout.at(8, 8, 8);
        st.e[2][idx] = f64::NAN;
        let err = st.run(40, &[]).unwrap_err();
        assert!(matches!(err, Error::Instability { .. }));
    }
}
