//! Running discrete Fourier transforms of field snapshots.

use num_complex::Complex64;

use super::layout::Component;
use super::{FieldState, Observer};

fn phasor(omega: f64, t: f64) -> Complex64 {
    Complex64::from_polar(1.0, -omega * t)
}

/// Single-frequency DFT of the three E components over the whole grid.
#[derive(Debug, Clone)]
pub struct FieldDft {
    pub wavelength_nm: f64,
    omega: f64,
    start_step: u64,
    dims: [usize; 3],
    count: u64,
    data: [Vec<Complex64>; 3],
}

impl FieldDft {
    /// Accumulates steps from `start_step` on (inclusive).
    pub fn new(state: &FieldState, wavelength_nm: f64, start_step: u64) -> Self {
        let len = state.layout().len();
        FieldDft {
            wavelength_nm,
            omega: 2.0 * std::f64::consts::PI * state.cell_nm() / wavelength_nm,
            start_step,
            dims: state.dims(),
            count: 0,
            data: [
                vec![Complex64::new(0.0, 0.0); len],
                vec![Complex64::new(0.0, 0.0); len],
                vec![Complex64::new(0.0, 0.0); len],
            ],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Accumulated complex amplitude of `E_axis` (padded storage).
    pub fn component(&self, axis: usize) -> &[Complex64] {
        &self.data[axis]
    }
}

impl Observer for FieldDft {
    fn observe(&mut self, st: &FieldState) {
        let n = st.step_index();
        if n < self.start_step {
            return;
        }
        let w = phasor(self.omega, n as f64 * st.courant());
        for a in 0..3 {
            let src = st.field(Component::electric(a));
            for (acc, &v) in self.data[a].iter_mut().zip(src) {
                *acc += w * v;
            }
        }
        self.count += 1;
    }
}

/// Multi-frequency DFT of the tangential fields on a constant-z node plane.
#[derive(Debug, Clone)]
pub struct PlaneDft {
    pub k_plane: usize,
    pub wavelengths_nm: Vec<f64>,
    omegas: Vec<f64>,
    start_step: u64,
    nx: usize,
    ny: usize,
    /// Per frequency: Ex, Ey, Hx, Hy on their own staggered positions,
    /// `(nx+1) x (ny+1)` row-major in x.
    data: Vec<[Vec<Complex64>; 4]>,
}

/// Tangential fields interpolated to the plane's nodes, row-major with
/// `j` fastest: index `i * (ny + 1) + j`.
#[derive(Debug, Clone)]
pub struct PlaneFields {
    pub nx: usize,
    pub ny: usize,
    pub cell_nm: f64,
    pub wavelength_nm: f64,
    pub ex: Vec<Complex64>,
    pub ey: Vec<Complex64>,
    pub hx: Vec<Complex64>,
    pub hy: Vec<Complex64>,
}

impl PlaneDft {
    pub fn new(state: &FieldState, k_plane: usize, wavelengths_nm: Vec<f64>, start_step: u64) -> Self {
        let [nx, ny, _] = state.dims();
        let size = (nx + 1) * (ny + 1);
        let zero = || vec![Complex64::new(0.0, 0.0); size];
        PlaneDft {
            k_plane,
            omegas: wavelengths_nm
                .iter()
                .map(|l| 2.0 * std::f64::consts::PI * state.cell_nm() / l)
                .collect(),
            data: wavelengths_nm.iter().map(|_| [zero(), zero(), zero(), zero()]).collect(),
            wavelengths_nm,
            start_step,
            nx,
            ny,
        }
    }

    /// Node-interpolated fields at frequency index `f`. H samples are
    /// averaged onto the plane in z; their DFT already uses their own time
    /// level.
    pub fn fields(&self, f: usize, cell_nm: f64) -> PlaneFields {
        let (nx, ny) = (self.nx, self.ny);
        let at = |i: usize, j: usize| i * (ny + 1) + j;
        let d = &self.data[f];
        let mut out = PlaneFields {
            nx,
            ny,
            cell_nm,
            wavelength_nm: self.wavelengths_nm[f],
            ex: vec![Complex64::new(0.0, 0.0); (nx + 1) * (ny + 1)],
            ey: vec![Complex64::new(0.0, 0.0); (nx + 1) * (ny + 1)],
            hx: vec![Complex64::new(0.0, 0.0); (nx + 1) * (ny + 1)],
            hy: vec![Complex64::new(0.0, 0.0); (nx + 1) * (ny + 1)],
        };
        for i in 0..=nx {
            for j in 0..=ny {
                let im = i.saturating_sub(1);
                let ii = i.min(nx - 1);
                let jm = j.saturating_sub(1);
                let jj = j.min(ny - 1);
                // Ex at (i+1/2, j); Hy at (i+1/2, j, k+-1/2): average along x.
                out.ex[at(i, j)] = 0.5 * (d[0][at(im, j)] + d[0][at(ii, j)]);
                out.hy[at(i, j)] = 0.5 * (d[3][at(im, j)] + d[3][at(ii, j)]);
                // Ey at (i, j+1/2); Hx at (i, j+1/2, k+-1/2): average along y.
                out.ey[at(i, j)] = 0.5 * (d[1][at(i, jm)] + d[1][at(i, jj)]);
                out.hx[at(i, j)] = 0.5 * (d[2][at(i, jm)] + d[2][at(i, jj)]);
            }
        }
        out
    }
}

impl Observer for PlaneDft {
    fn observe(&mut self, st: &FieldState) {
        let n = st.step_index();
        if n < self.start_step {
            return;
        }
        let l = st.layout();
        let k = self.k_plane;
        let (nx, ny) = (self.nx, self.ny);
        let ex = st.field(Component::Ex);
        let ey = st.field(Component::Ey);
        let hx = st.field(Component::Hx);
        let hy = st.field(Component::Hy);
        // H at step n was last updated at time n - 1/2.
        let mut vals = Vec::with_capacity((nx + 1) * (ny + 1) * 4);
        for i in 0..=nx {
            for j in 0..=ny {
                let a = l.at(i, j, k);
                let b = l.at_signed(i as isize, j as isize, k as isize - 1);
                vals.push([ex[a], ey[a], 0.5 * (hx[a] + hx[b]), 0.5 * (hy[a] + hy[b])]);
            }
        }
        for (fi, &om) in self.omegas.iter().enumerate() {
            let w_e = phasor(om, n as f64 * st.courant());
            let w_h = phasor(om, (n as f64 - 0.5) * st.courant());
            let d = &mut self.data[fi];
            for (q, v) in vals.iter().enumerate() {
                d[0][q] += w_e * v[0];
                d[1][q] += w_e * v[1];
                d[2][q] += w_h * v[2];
                d[3][q] += w_h * v[3];
            }
        }
    }
}
