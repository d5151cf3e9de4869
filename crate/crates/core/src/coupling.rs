//! Purcell enhancement of a dipole emitter in a cavity mode and the
//! spectrum-based enhancement estimate.

use std::io::Write;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_composite_spectrum, CompositeFitResult, CompositeGuess};
use crate::modes::{nm_to_hz, ResonantMode, Spectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterSpec {
    pub position_nm: [f64; 3],
    pub orientation: [f64; 3],
    pub wavelength_nm: f64,
    /// Fraction of the emission in the spectral slice considered.
    #[serde(default = "one")]
    pub branching: f64,
}

fn one() -> f64 {
    1.0
}

impl EmitterSpec {
    pub fn new(position_nm: [f64; 3], orientation: [f64; 3], wavelength_nm: f64) -> Self {
        EmitterSpec {
            position_nm,
            orientation,
            wavelength_nm,
            branching: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.orientation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("emitter.orientation", format!("must be a unit vector (|d| = {n})")));
        }
        if !(self.wavelength_nm > 0.0 && self.wavelength_nm.is_finite()) {
            return Err(Error::invalid("emitter.wavelength_nm", "must be positive"));
        }
        if !(self.branching >= 0.0 && self.branching <= 1.0) {
            return Err(Error::invalid("emitter.branching", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Local quantities entering the Purcell formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalCoupling {
    /// Refractive index at the emitter.
    pub n_host: f64,
    /// `|e . d|^2` between the unit local field and the dipole.
    pub orientation_factor: f64,
    /// `eps(r)|E(r)|^2 / max(eps|E|^2)`.
    pub intensity_ratio: f64,
}

impl LocalCoupling {
    /// Dipole aligned with the field at the intensity maximum.
    pub fn optimal(n_host: f64) -> Self {
        LocalCoupling {
            n_host,
            orientation_factor: 1.0,
            intensity_ratio: 1.0,
        }
    }
}

/// Lorentzian detuning factor `1 / (1 + (2 Q df / f_c)^2)`.
pub fn detuning_factor(q: f64, f_cavity: f64, f_emitter: f64) -> f64 {
    let x = 2.0 * q * (f_emitter - f_cavity) / f_cavity;
    1.0 / (1.0 + x * x)
}

/// `F_P = 3/(4 pi^2) (lambda_c/n_host)^3 / V * Q * |e.d|^2 * ratio * L`.
pub fn purcell_formula(mode: &ResonantMode, local: &LocalCoupling, emitter_wavelength_nm: f64) -> Result<f64> {
    if !(mode.q > 0.0) || !(mode.volume_um3 > 0.0) {
        return Err(Error::invalid("mode", "Q and V must be positive"));
    }
    if !(local.n_host >= 1.0) {
        return Err(Error::invalid("n_host", "must be at least 1"));
    }
    let v_nm3 = mode.volume_um3 * 1e9;
    let lam = mode.wavelength_nm / local.n_host;
    let base = 3.0 / (4.0 * std::f64::consts::PI.powi(2)) * lam.powi(3) / v_nm3 * mode.q;
    let l = detuning_factor(mode.q, nm_to_hz(mode.wavelength_nm), nm_to_hz(emitter_wavelength_nm));
    Ok(base * local.orientation_factor * local.intensity_ratio * l)
}

/// Local coupling read from the mode's stored profile at the emitter.
pub fn local_coupling(mode: &ResonantMode, emitter: &EmitterSpec) -> Result<LocalCoupling> {
    let profile = mode
        .profile
        .as_ref()
        .ok_or_else(|| Error::invalid("mode", "no field profile stored"))?;
    let p = emitter.position_nm;
    let out = |place| Error::OutOfDomain {
        what: "emitter",
        x: p[0],
        y: p[1],
        z: p[2],
        place,
    };
    if profile.in_margin(p) {
        return Err(out("inside the absorbing layer"));
    }
    let dens = profile.density_at(p).ok_or_else(|| out("outside the mode profile"))?;
    let eps = profile.eps_at(p).ok_or_else(|| out("outside the mode profile"))?;
    let field = profile.field_at(p).ok_or_else(|| out("outside the mode profile"))?;
    let norm2: f64 = field.iter().map(|c| c.norm_sqr()).sum();
    let d = emitter.orientation;
    let overlap = if norm2 > 0.0 {
        let dot = field[0] * d[0] + field[1] * d[1] + field[2] * d[2];
        dot.norm_sqr() / norm2
    } else {
        0.0
    };
    Ok(LocalCoupling {
        n_host: eps.max(1.0).sqrt(),
        orientation_factor: overlap,
        intensity_ratio: dens / profile.max_density(),
    })
}

/// Purcell factor of `emitter` in `mode`, using the stored profile.
pub fn purcell_factor(mode: &ResonantMode, emitter: &EmitterSpec) -> Result<f64> {
    emitter.validate()?;
    let local = local_coupling(mode, emitter)?;
    purcell_formula(mode, &local, emitter.wavelength_nm)
}

/// Real unit vector maximizing `|E . d|^2` for the mode field at `p`.
pub fn optimal_orientation(mode: &ResonantMode, p: [f64; 3]) -> Result<[f64; 3]> {
    let profile = mode
        .profile
        .as_ref()
        .ok_or_else(|| Error::invalid("mode", "no field profile stored"))?;
    let e = profile.field_at(p).ok_or(Error::OutOfDomain {
        what: "emitter",
        x: p[0],
        y: p[1],
        z: p[2],
        place: "outside the mode profile",
    })?;
    let m = Matrix3::from_fn(|i, j| (e[i] * e[j].conj()).re);
    let eig = SymmetricEigen::new(m);
    let k = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(k);
    Ok([v[0], v[1], v[2]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhancementEstimate {
    pub detected: f64,
    pub detection_ratio: f64,
    pub inferred: f64,
}

impl EnhancementEstimate {
    pub fn new(detected: f64, detection_ratio: f64) -> Result<Self> {
        if !(detected > 0.0 && detection_ratio > 0.0) {
            return Err(Error::invalid("enhancement", "factors must be positive"));
        }
        Ok(EnhancementEstimate {
            detected,
            detection_ratio,
            inferred: detected * detection_ratio,
        })
    }
}

/// Background-subtracted in-band intensity over the fitted ZPL area, with
/// the noise level of the in-band sum.
fn relative_band_intensity(s: &Spectrum, fit: &CompositeFitResult, band: (f64, f64)) -> (f64, f64) {
    let w = &s.wavelength_nm;
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut rss = 0.0;
    for i in 0..w.len() {
        let dx = if i + 1 < w.len() { w[i + 1] - w[i] } else { w[i] - w[i - 1] };
        let r = s.intensity[i] - fit.eval(w[i]);
        rss += r * r;
        if w[i] >= band.0 && w[i] <= band.1 {
            sum += (s.intensity[i] - fit.background(w[i])) * dx;
            count += 1;
        }
    }
    let noise = (rss / w.len() as f64).sqrt();
    let dx_mean = (w[w.len() - 1] - w[0]) / (w.len() - 1) as f64;
    let sum_sigma = noise * dx_mean * (count as f64).sqrt();
    let area = fit.params.zpl_area();
    (sum / area, sum_sigma / area)
}

/// Detected enhancement of the in-band emission between two spectra, each
/// normalized by its fitted ZPL area, scaled by the detection ratio.
pub fn enhancement_from_spectra(
    before: &Spectrum,
    after: &Spectrum,
    band_nm: (f64, f64),
    detection_ratio: f64,
    guess: &CompositeGuess,
) -> Result<EnhancementEstimate> {
    if !(detection_ratio > 0.0) {
        return Err(Error::invalid("detection_ratio", "must be positive"));
    }
    if !(band_nm.1 > band_nm.0) {
        return Err(Error::invalid("band_nm", "must be an increasing interval"));
    }
    let fb = fit_composite_spectrum(before, guess)?;
    let fa = fit_composite_spectrum(after, guess)?;
    if !(fb.params.zpl_area() > 0.0 && fa.params.zpl_area() > 0.0) {
        return Err(Error::DivisionGuard("fitted ZPL area is not positive".into()));
    }
    let (ib, sb) = relative_band_intensity(before, &fb, band_nm);
    let (ia, _) = relative_band_intensity(after, &fa, band_nm);
    if !(ib > 3.0 * sb) || ib <= 0.0 {
        return Err(Error::DivisionGuard(format!(
            "in-band intensity before coupling ({ib:.3e}) is within noise ({sb:.3e})"
        )));
    }
    EnhancementEstimate::new(ia / ib, detection_ratio)
}

/// One row of a Purcell sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub position_nm: [f64; 3],
    pub orientation: [f64; 3],
    pub detuning_nm: f64,
    pub purcell: f64,
}

/// Purcell factor over every combination of position, orientation and
/// emitter detuning from the mode wavelength.
pub fn purcell_sweep(
    mode: &ResonantMode,
    positions: &[[f64; 3]],
    orientations: &[[f64; 3]],
    detunings_nm: &[f64],
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(positions.len() * orientations.len() * detunings_nm.len());
    for &p in positions {
        for &d in orientations {
            for &dl in detunings_nm {
                let em = EmitterSpec::new(p, d, mode.wavelength_nm + dl);
                rows.push(SweepRow {
                    position_nm: p,
                    orientation: d,
                    detuning_nm: dl,
                    purcell: purcell_factor(mode, &em)?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], w: &mut impl Write) -> Result<()> {
    writeln!(w, "x_nm,y_nm,z_nm,dx,dy,dz,detuning_nm,purcell")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{:e}",
            r.position_nm[0],
            r.position_nm[1],
            r.position_nm[2],
            r.orientation[0],
            r.orientation[1],
            r.orientation[2],
            r.detuning_nm,
            r.purcell
        )?;
    }
    Ok(())
}
