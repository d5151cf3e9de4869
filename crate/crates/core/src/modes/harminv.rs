//! Damped-sinusoid decomposition of ring-down records.
//!
//! The band of interest is mixed down to zero frequency, low-pass filtered
//! and decimated by two repeatedly until it fills a comfortable fraction of
//! the reduced Nyquist band, then a matrix pencil fit extracts the complex
//! poles. Amplitudes are corrected for the exact filter response, which an
//! exponential passes through as an eigenfunction.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::MonitorRecord;

/// Q values above this are reported as decay-unresolved.
pub const Q_REPORT_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCandidate {
    pub frequency_hz: f64,
    pub wavelength_nm: f64,
    /// `pi f / gamma`; infinite when the record shows no decay.
    pub q: f64,
    /// Amplitude decay rate in 1/s.
    pub decay_rate: f64,
    /// Real amplitude at the first sample of the analyzed segment.
    pub amplitude: f64,
    pub phase: f64,
    pub decay_unresolved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicOptions {
    /// Candidates weaker than this fraction of the peak |x| are dropped.
    pub amplitude_floor: f64,
    /// Upper bound on samples entering the pencil after decimation.
    pub max_samples: usize,
    /// Upper bound on the model order.
    pub max_order: usize,
    /// FIR length per decimation stage (odd).
    pub taps: usize,
}

impl Default for HarmonicOptions {
    fn default() -> Self {
        HarmonicOptions {
            amplitude_floor: 1e-3,
            max_samples: 1200,
            max_order: 40,
            taps: 31,
        }
    }
}

const C_NM_PER_S: f64 = 299_792_458e9;

pub fn hz_to_nm(f: f64) -> f64 {
    C_NM_PER_S / f
}

pub fn nm_to_hz(l: f64) -> f64 {
    C_NM_PER_S / l
}

/// Frequency band (Hz) spanning the given wavelength range.
pub fn band_from_wavelengths(lo_nm: f64, hi_nm: f64) -> (f64, f64) {
    let (a, b) = (nm_to_hz(lo_nm), nm_to_hz(hi_nm));
    (a.min(b), a.max(b))
}

pub fn harmonic_inversion(record: &MonitorRecord, band_hz: (f64, f64)) -> Result<Vec<ModeCandidate>> {
    harmonic_inversion_with(&record.samples, record.dt_s, band_hz, &HarmonicOptions::default())
}

/// Decomposes `x` (uniformly sampled at `dt_s`) into damped sinusoids with
/// frequencies inside `band_hz`, sorted by frequency.
pub fn harmonic_inversion_with(
    x: &[f64],
    dt_s: f64,
    band_hz: (f64, f64),
    opts: &HarmonicOptions,
) -> Result<Vec<ModeCandidate>> {
    let (f_lo, f_hi) = band_hz;
    if !(dt_s > 0.0) || !(f_lo >= 0.0) || !(f_hi > f_lo) {
        return Err(Error::invalid("band", "need 0 <= f_lo < f_hi and dt > 0"));
    }
    let nu_lo = f_lo * dt_s;
    let nu_hi = f_hi * dt_s;
    if nu_hi > 0.5 {
        return Err(Error::invalid("band", "upper edge above the Nyquist frequency"));
    }
    if opts.taps % 2 == 0 || opts.taps < 5 {
        return Err(Error::invalid("taps", "must be odd and at least 5"));
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Ok(Vec::new());
    }
    let nu_c = 0.5 * (nu_lo + nu_hi);
    let mut half = 0.5 * (nu_hi - nu_lo);

    let mut y: Vec<Complex64> = x
        .iter()
        .enumerate()
        .map(|(n, &v)| v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * nu_c * n as f64))
        .collect();

    let h = lowpass(opts.taps);
    let mut stages = 0u32;
    while half <= 0.1 && y.len() >= 4 * opts.taps + 16 {
        y = decimate(&y, &h);
        half *= 2.0;
        stages += 1;
    }
    let d = (1u64 << stages) as f64;
    if y.len() > opts.max_samples {
        y.truncate(opts.max_samples);
    }
    let m = y.len();
    if m < 16 {
        return Err(Error::RecordTooShort { got: x.len(), need: 16 << stages });
    }

    let (poles, noise) = pencil(&y, opts.max_order)?;
    if poles.is_empty() {
        return Ok(Vec::new());
    }
    let amps = vandermonde_fit(&y, &poles)?;
    let lc = m / 3;
    let rows = m - lc;

    let mut out = Vec::new();
    for (z, c) in poles.iter().zip(&amps) {
        let r = z.norm();
        if r == 0.0 {
            continue;
        }
        // Significance relative to the noise singular values of the pencil.
        let sum = |n: usize| -> f64 {
            let q = r * r;
            if (q - 1.0).abs() < 1e-12 {
                n as f64
            } else {
                (1.0 - q.powi(n as i32)) / (1.0 - q)
            }
        };
        let s = c.norm() * (sum(rows) * sum(lc + 1)).sqrt();
        if s <= 4.0 * noise * ((rows as f64).sqrt() + ((lc + 1) as f64).sqrt()) {
            continue;
        }
        let log_r = r.ln() / d;
        let nu_mixed = z.arg() / (2.0 * std::f64::consts::PI * d);
        let nu = nu_mixed + nu_c;
        if nu < nu_lo || nu > nu_hi || nu <= 0.0 {
            continue;
        }
        let z1 = Complex64::from_polar(log_r.exp(), 2.0 * std::f64::consts::PI * nu_mixed);
        let gain = filter_gain(&h, z1, stages);
        let c0 = c / gain;
        let amplitude = 2.0 * c0.norm();
        if amplitude < opts.amplitude_floor * peak {
            continue;
        }
        let gamma = -log_r / dt_s;
        let f = nu / dt_s;
        let q = if gamma > 0.0 {
            std::f64::consts::PI * f / gamma
        } else {
            f64::INFINITY
        };
        out.push(ModeCandidate {
            frequency_hz: f,
            wavelength_nm: hz_to_nm(f),
            q,
            decay_rate: gamma,
            amplitude,
            phase: c0.arg(),
            decay_unresolved: !(q <= Q_REPORT_LIMIT),
        });
    }
    out.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
    Ok(out)
}

/// Blackman-windowed sinc low-pass with cutoff at a quarter of the sample
/// rate and unit DC gain.
fn lowpass(taps: usize) -> Vec<f64> {
    let mid = (taps - 1) as f64 / 2.0;
    let n = (taps - 1) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|l| {
            let t = l as f64 - mid;
            let sinc = if t == 0.0 {
                1.0
            } else {
                (std::f64::consts::PI * 0.5 * t).sin() / (std::f64::consts::PI * 0.5 * t)
            };
            let a = 2.0 * std::f64::consts::PI * l as f64 / n;
            let w = 0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos();
            w * sinc
        })
        .collect();
    let s: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= s);
    h
}

/// Valid-mode convolution followed by keeping every second output.
fn decimate(y: &[Complex64], h: &[f64]) -> Vec<Complex64> {
    let l = h.len();
    let n_out = y.len() - l + 1;
    (0..n_out)
        .step_by(2)
        .map(|m| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &hv) in h.iter().enumerate() {
                acc += hv * y[m + l - 1 - t];
            }
            acc
        })
        .collect()
}

/// Complex gain that a stage cascade applies to the amplitude of `z^n`,
/// referenced to the first input sample.
fn filter_gain(h: &[f64], z: Complex64, stages: u32) -> Complex64 {
    let l = h.len();
    let mut g = Complex64::new(1.0, 0.0);
    let mut zs = z;
    for _ in 0..stages {
        let mut resp = Complex64::new(0.0, 0.0);
        let inv = zs.inv();
        let mut p = Complex64::new(1.0, 0.0);
        for &hv in h {
            resp += hv * p;
            p *= inv;
        }
        g *= resp * zs.powu((l - 1) as u32);
        zs = zs * zs;
    }
    g
}

/// Matrix pencil poles and a noise-level estimate (per-sample standard
/// deviation).
fn pencil(y: &[Complex64], max_order: usize) -> Result<(Vec<Complex64>, f64)> {
    let m = y.len();
    let lc = m / 3;
    let rows = m - lc;
    let hank = DMatrix::from_fn(rows, lc + 1, |r, c| y[r + c]);
    let svd = hank.svd(false, true);
    let sv = svd.singular_values.clone();
    let v_t = svd.v_t.ok_or_else(|| Error::DegenerateModes("SVD failed".into()))?;
    let s0 = sv[0];
    if s0 == 0.0 {
        return Ok((Vec::new(), 0.0));
    }
    let mut sorted: Vec<f64> = sv.iter().copied().collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    let noise = median / (rows as f64).sqrt();
    let k = sv
        .iter()
        .take_while(|&&s| s > 1e-10 * s0)
        .count()
        .clamp(1, max_order.min(lc));
    // Right singular vectors as columns: V = v_t^H.
    let v = v_t.rows(0, k).adjoint();
    let v1 = v.rows(0, lc).into_owned();
    let v2 = v.rows(1, lc).into_owned();
    let pinv = v1
        .pseudo_inverse(1e-14)
        .map_err(|e| Error::DegenerateModes(e.to_string()))?;
    let phi = pinv * v2;
    let eig = eigenvalues(phi);
    Ok((eig.into_iter().map(|z| z.conj()).collect(), noise))
}

fn eigenvalues(m: DMatrix<Complex64>) -> Vec<Complex64> {
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), 1e-15, 10_000).unwrap_or_else(|| Schur::new(m));
    let (_, t) = schur.unpack();
    (0..n).map(|i| t[(i, i)]).collect()
}

/// Least-squares amplitudes `c` with `y[n] = sum c_k z_k^n`.
fn vandermonde_fit(y: &[Complex64], poles: &[Complex64]) -> Result<Vec<Complex64>> {
    let m = y.len();
    let k = poles.len();
    let a = DMatrix::from_fn(m, k, |n, j| poles[j].powu(n as u32));
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let c = svd
        .solve(&b, 1e-13)
        .map_err(|e| Error::DegenerateModes(e.to_string()))?;
    Ok(c.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ringdown(n: usize, modes: &[(f64, f64, f64)]) -> Vec<f64> {
        // (nu cycles/sample, Q, amplitude)
        (0..n)
            .map(|t| {
                modes
                    .iter()
                    .map(|&(nu, q, a)| {
                        let g = std::f64::consts::PI * nu / q;
                        a * (-g * t as f64).exp() * (2.0 * std::f64::consts::PI * nu * t as f64 + 0.3).cos()
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn lowpass_has_unit_dc_gain_and_rejects_high_band() {
        let h = lowpass(31);
        let g = |nu: f64| filter_gain(&h, Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * nu), 1);
        assert!((g(0.0).norm() - 1.0).abs() < 1e-12);
        assert!(g(0.4).norm() < 1e-3);
        assert!((g(0.08).norm() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn single_mode_no_decimation() {
        let x = ringdown(600, &[(0.2, 50.0, 1.0)]);
        let r = harmonic_inversion_with(&x, 1.0, (0.1, 0.3), &HarmonicOptions::default()).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].frequency_hz - 0.2).abs() < 1e-9);
        assert!((r[0].q / 50.0 - 1.0).abs() < 1e-6);
        assert!((r[0].amplitude - 1.0).abs() < 1e-6);
        assert!((r[0].phase - 0.3).abs() < 1e-6);
    }

    #[test]
    fn single_mode_with_decimation() {
        let x = ringdown(20000, &[(0.031, 3800.0, 2.0)]);
        let r = harmonic_inversion_with(&x, 1.0, (0.029, 0.033), &HarmonicOptions::default()).unwrap();
        assert_eq!(r.len(), 1, "{r:?}");
        assert!((r[0].frequency_hz / 0.031 - 1.0).abs() < 1e-8);
        assert!((r[0].q / 3800.0 - 1.0).abs() < 1e-5);
        assert!((r[0].amplitude / 2.0 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn zero_signal_gives_no_modes() {
        let r = harmonic_inversion_with(&vec![0.0; 4096], 1.0, (0.1, 0.2), &HarmonicOptions::default()).unwrap();
        assert!(r.is_empty());
    }
}
