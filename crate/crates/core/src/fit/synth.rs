//! Synthetic data generators standing in for measured spectra, power
//! series and photon timestamps. All take an explicit seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::Spectrum;

use super::composite::CompositeParams;
use super::saturation::saturation_model;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Composite-model spectrum on `n` uniform samples over `range_nm`, with
/// Gaussian noise of standard deviation `noise_frac` times the model peak.
pub fn composite_spectrum(
    truth: &CompositeParams,
    range_nm: (f64, f64),
    n: usize,
    noise_frac: f64,
    seed: u64,
) -> Result<Spectrum> {
    if n < 2 || !(range_nm.1 > range_nm.0) {
        return Err(Error::invalid("range_nm", "need an increasing range and at least two samples"));
    }
    let reference = 0.5 * (range_nm.0 + range_nm.1);
    let x: Vec<f64> = (0..n)
        .map(|i| range_nm.0 + (range_nm.1 - range_nm.0) * i as f64 / (n - 1) as f64)
        .collect();
    let clean: Vec<f64> = x.iter().map(|&x| truth.eval(x, reference)).collect();
    let peak = clean.iter().cloned().fold(0.0, f64::max);
    let sigma = noise_frac * peak;
    let mut r = rng(seed);
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).map_err(|e| Error::invalid("noise_frac", e.to_string()))?;
    let y: Vec<f64> = clean
        .iter()
        .map(|&v| if sigma > 0.0 { (v + normal.sample(&mut r)).max(0.0) } else { v.max(0.0) })
        .collect();
    Ok(Spectrum {
        wavelength_nm: x,
        intensity: y,
        uncertainty: None,
        window: None,
    })
}

/// Power series with multiplicative Gaussian noise of `noise_frac`.
pub fn saturation_points(
    y_inf: f64,
    p_sat: f64,
    a: f64,
    powers: &[f64],
    noise_frac: f64,
    seed: u64,
) -> Vec<(f64, f64)> {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    powers
        .iter()
        .map(|&p| {
            let y = saturation_model(p, y_inf, p_sat, a);
            (p, y * (1.0 + noise_frac * normal.sample(&mut r)))
        })
        .collect()
}

/// Geometric power ladder from `lo` to `hi` uW.
pub fn power_ladder(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n.max(2) - 1) as f64))
        .collect()
}

/// Poisson arrival times (ps) at `rate` per second over `duration_s`.
pub fn poisson_stream(rate: f64, duration_s: f64, rng: &mut impl Rng) -> Vec<u64> {
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let exp = Exp::new(rate).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t >= duration_s {
            break;
        }
        out.push((t * 1e12) as u64);
    }
    out
}

/// Continuously pumped two-level emitter observed through a 50/50 beam
/// splitter, with independent Poisson background in both detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterSim {
    /// Excited-state lifetime (ns).
    pub lifetime_ns: f64,
    /// Incoherent pump rate in units of the decay rate.
    pub pump_ratio: f64,
    /// Detected signal rate per detector (1/s).
    pub signal_rate: f64,
    /// Signal-to-total ratio per detector.
    pub rho: f64,
    /// Total number of detected events over both channels.
    pub events: usize,
}

impl Default for EmitterSim {
    fn default() -> Self {
        EmitterSim {
            lifetime_ns: 12.0,
            pump_ratio: 0.5,
            signal_rate: 1.0e6,
            rho: 0.7,
            events: 1_000_000,
        }
    }
}

impl EmitterSim {
    /// `g2(tau)` of the signal alone: `1 - exp(-(r + G)|tau|)`.
    pub fn signal_g2(&self, tau_ns: f64) -> f64 {
        let k = (1.0 + self.pump_ratio) / self.lifetime_ns;
        1.0 - (-k * tau_ns.abs()).exp()
    }

    pub fn background_rate(&self) -> f64 {
        self.signal_rate * (1.0 - self.rho) / self.rho
    }

    pub fn duration_s(&self) -> f64 {
        self.events as f64 / (2.0 * (self.signal_rate + self.background_rate()))
    }

    /// Channel A and B timestamps (ps), sorted.
    pub fn generate(&self, seed: u64) -> Result<(Vec<u64>, Vec<u64>)> {
        if !(self.rho > 0.0 && self.rho <= 1.0) || !(self.lifetime_ns > 0.0) || !(self.pump_ratio > 0.0) {
            return Err(Error::invalid("emitter", "need 0 < rho <= 1, positive lifetime and pump"));
        }
        let mut r = rng(seed);
        let gamma = 1e9 / self.lifetime_ns;
        let pump = self.pump_ratio * gamma;
        let emission_rate = pump * gamma / (pump + gamma);
        let eta = 2.0 * self.signal_rate / emission_rate;
        if eta > 1.0 {
            return Err(Error::invalid("signal_rate", "exceeds the emitter's photon flux"));
        }
        let wait_pump = Exp::new(pump).expect("rate");
        let wait_decay = Exp::new(gamma).expect("rate");
        let duration = self.duration_s();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        // Quantum-jump picture: every emission returns the emitter to the
        // ground state, so the next photon needs a pump and a decay.
        let mut t = 0.0;
        loop {
            t += wait_pump.sample(&mut r) + wait_decay.sample(&mut r);
            if t >= duration {
                break;
            }
            if r.random::<f64>() < eta {
                let ts = (t * 1e12) as u64;
                if r.random::<bool>() {
                    a.push(ts);
                } else {
                    b.push(ts);
                }
            }
        }
        let bg = self.background_rate();
        a.extend(poisson_stream(bg, duration, &mut r));
        b.extend(poisson_stream(bg, duration, &mut r));
        a.sort_unstable();
        b.sort_unstable();
        Ok((a, b))
    }
}
