//! Linear background + Gaussian zero-phonon line + Fano cavity line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::Spectrum;

use super::lsq::{least_squares, SolverOptions};

/// Asymmetry magnitude treated as the Lorentzian limit.
pub const FANO_Q_LORENTZ: f64 = 1e6;

/// Fano profile normalized so that `amplitude` is the peak value in the
/// Lorentzian limit: `A (q + e)^2 / ((1 + e^2)(1 + q^2))`, `e = 2(x - x0)/width`.
pub fn fano_lineshape(x: f64, center: f64, width: f64, q: f64, amplitude: f64) -> f64 {
    let e = 2.0 * (x - center) / width;
    if q.abs() >= FANO_Q_LORENTZ {
        return amplitude / (1.0 + e * e);
    }
    amplitude * (q + e) * (q + e) / ((1.0 + e * e) * (1.0 + q * q))
}

pub fn gaussian(x: f64, center: f64, sigma: f64, amplitude: f64) -> f64 {
    let u = (x - center) / sigma;
    amplitude * (-0.5 * u * u).exp()
}

/// Parameters of the composite model. The background is
/// `offset + slope (x - reference_nm)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeParams {
    pub offset: f64,
    pub slope: f64,
    pub zpl_center_nm: f64,
    pub zpl_sigma_nm: f64,
    pub zpl_amplitude: f64,
    pub fano_center_nm: f64,
    pub fano_width_nm: f64,
    pub fano_q: f64,
    pub fano_amplitude: f64,
}

pub const PARAM_NAMES: [&str; 9] = [
    "offset",
    "slope",
    "zpl_center_nm",
    "zpl_sigma_nm",
    "zpl_amplitude",
    "fano_center_nm",
    "fano_width_nm",
    "fano_q",
    "fano_amplitude",
];

impl CompositeParams {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.offset,
            self.slope,
            self.zpl_center_nm,
            self.zpl_sigma_nm,
            self.zpl_amplitude,
            self.fano_center_nm,
            self.fano_width_nm,
            self.fano_q,
            self.fano_amplitude,
        ]
    }

    pub fn from_slice(p: &[f64]) -> Self {
        CompositeParams {
            offset: p[0],
            slope: p[1],
            zpl_center_nm: p[2],
            zpl_sigma_nm: p[3],
            zpl_amplitude: p[4],
            fano_center_nm: p[5],
            fano_width_nm: p[6],
            fano_q: p[7],
            fano_amplitude: p[8],
        }
    }

    pub fn background(&self, x: f64, reference_nm: f64) -> f64 {
        self.offset + self.slope * (x - reference_nm)
    }

    pub fn zpl(&self, x: f64) -> f64 {
        gaussian(x, self.zpl_center_nm, self.zpl_sigma_nm, self.zpl_amplitude)
    }

    pub fn fano(&self, x: f64) -> f64 {
        fano_lineshape(x, self.fano_center_nm, self.fano_width_nm, self.fano_q, self.fano_amplitude)
    }

    pub fn eval(&self, x: f64, reference_nm: f64) -> f64 {
        self.background(x, reference_nm) + self.zpl(x) + self.fano(x)
    }

    /// Gaussian area.
    pub fn zpl_area(&self) -> f64 {
        self.zpl_amplitude * self.zpl_sigma_nm.abs() * (2.0 * std::f64::consts::PI).sqrt()
    }
}

/// Starting point for the composite fit. Amplitudes and background are
/// estimated from the data when absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeGuess {
    pub zpl_center_nm: f64,
    #[serde(default)]
    pub zpl_sigma_nm: Option<f64>,
    pub fano_center_nm: f64,
    #[serde(default)]
    pub fano_width_nm: Option<f64>,
    #[serde(default)]
    pub fano_q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeFitResult {
    pub params: CompositeParams,
    /// One-sigma uncertainties in the order of [`PARAM_NAMES`].
    pub uncertainties: CompositeParams,
    /// Wavelength about which the background offset is defined.
    pub reference_nm: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub evaluations: usize,
    pub warnings: Vec<String>,
}

impl CompositeFitResult {
    pub fn eval(&self, x: f64) -> f64 {
        self.params.eval(x, self.reference_nm)
    }

    pub fn background(&self, x: f64) -> f64 {
        self.params.background(x, self.reference_nm)
    }
}

fn interp(s: &Spectrum, x: f64) -> f64 {
    let w = &s.wavelength_nm;
    let k = w.partition_point(|&v| v < x).clamp(1, w.len() - 1);
    let t = ((x - w[k - 1]) / (w[k] - w[k - 1])).clamp(0.0, 1.0);
    s.intensity[k - 1] * (1.0 - t) + s.intensity[k] * t
}

fn initial_params(s: &Spectrum, g: &CompositeGuess, reference: f64) -> CompositeParams {
    let n = s.wavelength_nm.len();
    let edge = (n / 20).max(1);
    let mean = |r: std::ops::Range<usize>| -> (f64, f64) {
        let len = r.len() as f64;
        let x = r.clone().map(|i| s.wavelength_nm[i]).sum::<f64>() / len;
        let y = r.map(|i| s.intensity[i]).sum::<f64>() / len;
        (x, y)
    };
    let (x0, y0) = mean(0..edge);
    let (x1, y1) = mean(n - edge..n);
    let slope = (y1 - y0) / (x1 - x0);
    let offset = y0 + slope * (reference - x0);
    let bg = |x: f64| offset + slope * (x - reference);
    let span = s.wavelength_nm[n - 1] - s.wavelength_nm[0];
    let zpl_sigma = g.zpl_sigma_nm.unwrap_or(span / 40.0);
    let fano_width = g.fano_width_nm.unwrap_or(span / 40.0);
    let zpl_amp = (interp(s, g.zpl_center_nm) - bg(g.zpl_center_nm)).max(0.0);
    let fano_amp = (interp(s, g.fano_center_nm) - bg(g.fano_center_nm) - gaussian(g.fano_center_nm, g.zpl_center_nm, zpl_sigma, zpl_amp)).abs();
    CompositeParams {
        offset,
        slope,
        zpl_center_nm: g.zpl_center_nm,
        zpl_sigma_nm: zpl_sigma,
        zpl_amplitude: zpl_amp,
        fano_center_nm: g.fano_center_nm,
        fano_width_nm: fano_width,
        fano_q: g.fano_q.unwrap_or(3.0),
        fano_amplitude: fano_amp.max(1e-3 * zpl_amp),
    }
}

/// Least-squares fit of the composite model. A non-converged fit is
/// returned with `converged = false` and the best parameters found.
pub fn fit_composite_spectrum(spectrum: &Spectrum, guess: &CompositeGuess) -> Result<CompositeFitResult> {
    fit_composite_with(spectrum, guess, &SolverOptions::default())
}

pub fn fit_composite_with(spectrum: &Spectrum, guess: &CompositeGuess, opts: &SolverOptions) -> Result<CompositeFitResult> {
    spectrum.validate()?;
    let w = &spectrum.wavelength_nm;
    if w.len() < 12 {
        return Err(Error::RecordTooShort { got: w.len(), need: 12 });
    }
    let (lo, hi) = (w[0], w[w.len() - 1]);
    for (name, c) in [("zpl_center_nm", guess.zpl_center_nm), ("fano_center_nm", guess.fano_center_nm)] {
        if !(c >= lo && c <= hi) {
            return Err(Error::invalid(name, format!("initial center {c} outside the data range [{lo}, {hi}]")));
        }
    }
    let reference = 0.5 * (lo + hi);
    let p0 = initial_params(spectrum, guess, reference);
    let weights: Vec<f64> = match &spectrum.uncertainty {
        Some(u) => u.iter().map(|s| if *s > 0.0 { 1.0 / s } else { 1.0 }).collect(),
        None => vec![1.0; w.len()],
    };
    let resid = |p: &[f64]| -> Vec<f64> {
        let m = CompositeParams::from_slice(p);
        w.iter()
            .zip(&spectrum.intensity)
            .zip(&weights)
            .map(|((&x, &y), &wt)| (m.eval(x, reference) - y) * wt)
            .collect()
    };
    let weighted = spectrum.uncertainty.is_some();
    let full = least_squares(&resid, &p0.to_vec(), &[false; 9], weighted, opts);
    // Nested model: Fano shape pinned at the starting point, amplitude free.
    let mut pinned = [false; 9];
    pinned[5..8].fill(true);
    let nested = least_squares(&resid, &p0.to_vec(), &pinned, weighted, opts);
    let m = w.len() as f64;
    let noise2 = if weighted { 1.0 } else { full.residual_norm.powi(2) / (m - 9.0) };
    let gain = (nested.residual_norm.powi(2) - full.residual_norm.powi(2)) / noise2;
    let line_absent = gain < 3.0 * m.ln();
    let mut out = if line_absent { nested } else { full };
    if line_absent {
        for i in 5..8 {
            out.sigma[i] = f64::NAN;
        }
    }
    let mut params = CompositeParams::from_slice(&out.params);
    // The model depends on the widths only through their magnitude.
    params.zpl_sigma_nm = params.zpl_sigma_nm.abs();
    params.fano_width_nm = params.fano_width_nm.abs();
    let mut warnings = Vec::new();
    if line_absent {
        warnings.push(format!(
            "Fano line not significant (chi-square gain {gain:.1}); shape held at the initial guess"
        ));
    }
    if (params.zpl_center_nm - params.fano_center_nm).abs() < params.fano_width_nm / 10.0 {
        warnings.push("ambiguous: ZPL and Fano centers closer than a tenth of the Fano width".to_string());
    }
    if params.zpl_amplitude < 0.0 || params.fano_amplitude < 0.0 {
        warnings.push("negative line amplitude".to_string());
    }
    if !out.converged {
        warnings.push(format!("not converged: {}", out.termination));
    }
    Ok(CompositeFitResult {
        params,
        uncertainties: CompositeParams::from_slice(&out.sigma),
        reference_nm: reference,
        residual_norm: out.residual_norm,
        converged: out.converged,
        evaluations: out.evaluations,
        warnings,
    })
}
