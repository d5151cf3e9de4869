use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PermittivityGrid;

use super::layout::{Component, Layout};

fn default_amplitude() -> f64 {
    1.0
}

/// Point-dipole current source with a Gaussian-enveloped sine waveform.
///
/// The waveform `sin(w (t - t0)) exp(-((t - t0) / tau)^2)` is odd about the
/// delay, so it deposits no static charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub position_nm: [f64; 3],
    pub orientation: [f64; 3],
    pub wavelength_nm: f64,
    /// Spectral FWHM as a fraction of the center frequency.
    pub bandwidth: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Envelope center in time steps; derived from the bandwidth when absent.
    #[serde(default)]
    pub delay_steps: Option<f64>,
    /// Envelope 1/e half-width in time steps; derived when absent.
    #[serde(default)]
    pub width_steps: Option<f64>,
}

impl SourceSpec {
    pub fn dipole(position_nm: [f64; 3], orientation: [f64; 3], wavelength_nm: f64, bandwidth: f64) -> Self {
        SourceSpec {
            position_nm,
            orientation,
            wavelength_nm,
            bandwidth,
            amplitude: 1.0,
            delay_steps: None,
            width_steps: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let norm = self.orientation.iter().map(|o| o * o).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("source.orientation", format!("must be a unit vector (|d| = {norm})")));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth < 1.0) {
            return Err(Error::invalid("source.bandwidth", "must lie in (0, 1)"));
        }
        if !(self.wavelength_nm > 0.0 && self.wavelength_nm.is_finite()) {
            return Err(Error::invalid("source.wavelength_nm", "must be positive"));
        }
        Ok(())
    }

    /// Pulse timing in steps for the given grid spacing and Courant factor.
    pub fn pulse(&self, cell_nm: f64, courant: f64) -> Pulse {
        let freq = cell_nm / self.wavelength_nm; // cycles per (cell / c)
        let tau = 2.0 * std::f64::consts::LN_2.sqrt() / (std::f64::consts::PI * self.bandwidth * freq);
        let width = self.width_steps.unwrap_or(tau / courant);
        let delay = self.delay_steps.unwrap_or(5.0 * width);
        Pulse {
            omega: 2.0 * std::f64::consts::PI * freq,
            delay_steps: delay,
            width_steps: width,
            amplitude: self.amplitude,
            courant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub omega: f64,
    pub delay_steps: f64,
    pub width_steps: f64,
    pub amplitude: f64,
    courant: f64,
}

impl Pulse {
    /// Waveform at time `t_steps` (in units of the time step).
    pub fn value(&self, t_steps: f64) -> f64 {
        let u = t_steps - self.delay_steps;
        let env = (-(u / self.width_steps).powi(2)).exp();
        self.amplitude * (self.omega * u * self.courant).sin() * env
    }

    /// First step after which the envelope is below `exp(-25)`.
    pub fn turn_off_step(&self) -> u64 {
        (self.delay_steps + 5.0 * self.width_steps).ceil() as u64
    }
}

/// A source distributed onto Yee-grid samples with trilinear weights.
#[derive(Debug, Clone)]
pub(crate) struct PreparedSource {
    pub pulse: Pulse,
    pub taps: Vec<(Component, usize, f64)>,
}

/// Trilinear weights of point `g` (grid coordinates) on the lattice of
/// component `comp`, dropping nodes outside the valid index range.
fn trilinear(
    comp: Component,
    n: [usize; 3],
    g: [f64; 3],
) -> Vec<([usize; 3], f64)> {
    let st = comp.stagger();
    let mut base = [0i64; 3];
    let mut frac = [0.0; 3];
    for d in 0..3 {
        let x = g[d] - st[d];
        let f = x.floor();
        base[d] = f as i64;
        frac[d] = x - f;
    }
    let mut out = Vec::with_capacity(8);
    for corner in 0..8 {
        let mut w = 1.0;
        let mut ijk = [0usize; 3];
        let mut ok = true;
        for d in 0..3 {
            let hi = (corner >> d) & 1 == 1;
            let wd = if hi { frac[d] } else { 1.0 - frac[d] };
            w *= wd;
            let idx = base[d] + hi as i64;
            if idx < 0 || idx as usize >= comp.extent(n, d) {
                ok = false;
            }
            ijk[d] = idx.max(0) as usize;
        }
        if ok && w != 0.0 {
            out.push((ijk, w));
        }
    }
    out
}

/// Like [`trilinear`], but samples that fall half a cell outside a low
/// mirror face are folded back onto their image with the parity of the
/// wall (even for an electric wall, odd for a magnetic one).
pub(crate) fn trilinear_folded(
    comp: Component,
    n: [usize; 3],
    g: [f64; 3],
    mirror_sign: [Option<f64>; 3],
) -> Vec<([usize; 3], f64)> {
    let st = comp.stagger();
    let mut base = [0i64; 3];
    let mut frac = [0.0; 3];
    for d in 0..3 {
        let x = g[d] - st[d];
        let f = x.floor();
        base[d] = f as i64;
        frac[d] = x - f;
    }
    let mut out: Vec<([usize; 3], f64)> = Vec::with_capacity(8);
    for corner in 0..8 {
        let mut w = 1.0;
        let mut ijk = [0usize; 3];
        let mut ok = true;
        for d in 0..3 {
            let hi = (corner >> d) & 1 == 1;
            w *= if hi { frac[d] } else { 1.0 - frac[d] };
            let mut idx = base[d] + hi as i64;
            if idx == -1 && st[d] != 0.0 {
                if let Some(s) = mirror_sign[d] {
                    idx = 0;
                    w *= s;
                }
            }
            if idx < 0 || idx as usize >= comp.extent(n, d) {
                ok = false;
            }
            ijk[d] = idx.max(0) as usize;
        }
        if ok && w != 0.0 {
            match out.iter_mut().find(|(p, _)| *p == ijk) {
                Some(e) => e.1 += w,
                None => out.push((ijk, w)),
            }
        }
    }
    out.retain(|(_, w)| *w != 0.0);
    out
}

pub(crate) fn prepare(
    spec: &SourceSpec,
    grid: &PermittivityGrid,
    layout: &Layout,
    courant: f64,
) -> Result<PreparedSource> {
    spec.validate()?;
    let p = spec.position_nm;
    if !grid.contains(p) {
        return Err(Error::OutOfDomain {
            what: "source",
            x: p[0],
            y: p[1],
            z: p[2],
            place: "outside the grid",
        });
    }
    let g = grid.to_grid_coords(p);
    let mut taps = Vec::new();
    for axis in 0..3 {
        let o = spec.orientation[axis];
        if o == 0.0 {
            continue;
        }
        let comp = Component::electric(axis);
        for (ijk, w) in trilinear(comp, layout.n, g) {
            taps.push((comp, layout.at(ijk[0], ijk[1], ijk[2]), o * w));
        }
    }
    Ok(PreparedSource {
        pulse: spec.pulse(grid.cell_nm(), courant),
        taps,
    })
}
