//! Coincidence histograms and background-corrected second-order
//! correlation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    /// Bin centers (ns), symmetric about zero.
    pub tau_ns: Vec<f64>,
    pub counts: Vec<u64>,
    pub bin_width_ns: f64,
    /// Mean count rates of the two channels (1/s).
    pub rate_a: f64,
    pub rate_b: f64,
    pub duration_s: f64,
    /// Signal-to-total ratio `S / (S + B)`.
    pub rho: f64,
}

/// `S / (S + B)` from signal and background count rates.
pub fn signal_to_total(signal_rate: f64, background_rate: f64) -> Result<f64> {
    if !(signal_rate >= 0.0 && background_rate >= 0.0) || signal_rate + background_rate <= 0.0 {
        return Err(Error::invalid("rates", "must be non-negative and not both zero"));
    }
    Ok(signal_rate / (signal_rate + background_rate))
}

impl CoincidenceHistogram {
    /// Expected counts per bin for uncorrelated streams.
    pub fn normalization(&self) -> f64 {
        self.rate_a * self.rate_b * self.duration_s * self.bin_width_ns * 1e-9
    }

    pub fn g2_raw(&self) -> Vec<f64> {
        let n = self.normalization();
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Poisson one-sigma of the raw g2 per bin (at least one count).
    pub fn g2_raw_sigma(&self) -> Vec<f64> {
        let n = self.normalization();
        self.counts.iter().map(|&c| (c.max(1) as f64).sqrt() / n).collect()
    }

    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::invalid("rho", "must lie in [0, 1]"));
        }
        self.rho = rho;
        Ok(self)
    }

    pub fn zero_bin(&self) -> usize {
        self.tau_ns.len() / 2
    }
}

/// Cross-correlates every A event with every B event within `window_ns`.
/// Timestamps are in picoseconds on a common clock and must be sorted.
pub fn g2_histogram(a: &[u64], b: &[u64], bin_width_ns: f64, window_ns: f64) -> Result<CoincidenceHistogram> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("a timestamp channel has no events".into()));
    }
    if !(bin_width_ns > 0.0 && window_ns >= bin_width_ns) {
        return Err(Error::invalid("bin_width_ns", "need 0 < bin width <= window"));
    }
    if a.windows(2).any(|w| w[1] < w[0]) || b.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("timestamps", "must be sorted"));
    }
    let half = (window_ns / bin_width_ns).floor() as i64;
    let nbins = (2 * half + 1) as usize;
    let bin_ps = bin_width_ns * 1e3;
    let reach = ((half as f64 + 0.5) * bin_ps).ceil() as i64;
    let mut counts = vec![0u64; nbins];
    let mut lo = 0usize;
    for &ta in a {
        let ta = ta as i64;
        while lo < b.len() && (b[lo] as i64) < ta - reach {
            lo += 1;
        }
        let mut j = lo;
        while j < b.len() && (b[j] as i64) <= ta + reach {
            let d = (b[j] as i64 - ta) as f64 / bin_ps;
            let k = d.round() as i64;
            if k.abs() <= half {
                counts[(k + half) as usize] += 1;
            }
            j += 1;
        }
    }
    let t0 = a[0].min(b[0]);
    let t1 = a[a.len() - 1].max(b[b.len() - 1]);
    let duration_s = ((t1 - t0) as f64 * 1e-12).max(1e-12);
    Ok(CoincidenceHistogram {
        tau_ns: (-half..=half).map(|k| k as f64 * bin_width_ns).collect(),
        counts,
        bin_width_ns,
        rate_a: a.len() as f64 / duration_s,
        rate_b: b.len() as f64 / duration_s,
        duration_s,
        rho: 1.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Correction {
    pub tau_ns: Vec<f64>,
    pub g2_raw: Vec<f64>,
    pub g2_corr: Vec<f64>,
    pub g2_corr_sigma: Vec<f64>,
    pub rho: f64,
    /// Smoothed corrected value at the deepest point near zero delay.
    pub dip: f64,
    pub dip_sigma: f64,
    /// One-sided 95% upper bound on the dip.
    pub dip_upper95: f64,
    pub raw_dip: f64,
    pub single_emitter: bool,
}

/// Number of bins averaged for the zero-delay estimate.
pub const DIP_SMOOTHING_BINS: usize = 3;
/// Bins on either side of zero searched for the dip.
pub const DIP_SEARCH_BINS: usize = 2;
const Z95_ONE_SIDED: f64 = 1.6448536269514722;

/// `g2_corr = (g2_raw - (1 - rho^2)) / rho^2`, with the single-emitter
/// verdict taken from a 95% upper bound of the smoothed dip.
pub fn g2_background_correct(hist: &CoincidenceHistogram) -> Result<G2Correction> {
    let rho = hist.rho;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::DivisionGuard(format!("signal-to-total ratio {rho} leaves no signal")));
    }
    let r2 = rho * rho;
    let raw = hist.g2_raw();
    let corr: Vec<f64> = raw.iter().map(|g| (g - (1.0 - r2)) / r2).collect();
    let sig: Vec<f64> = hist.g2_raw_sigma().iter().map(|s| s / r2).collect();
    let n = hist.normalization();
    let z = hist.zero_bin() as i64;
    let h = (DIP_SMOOTHING_BINS / 2) as i64;
    let len = raw.len() as i64;
    let mut best: Option<(f64, f64, f64)> = None;
    for c in (z - DIP_SEARCH_BINS as i64)..=(z + DIP_SEARCH_BINS as i64) {
        let idx: Vec<usize> = ((c - h)..=(c + h)).filter(|&k| k >= 0 && k < len).map(|k| k as usize).collect();
        if idx.is_empty() {
            continue;
        }
        let m = idx.len() as f64;
        let total: u64 = idx.iter().map(|&k| hist.counts[k]).sum();
        let g_raw = total as f64 / (m * n);
        let g = (g_raw - (1.0 - r2)) / r2;
        let s = (total.max(1) as f64).sqrt() / (m * n) / r2;
        if best.map_or(true, |b| g < b.0) {
            best = Some((g, s, g_raw));
        }
    }
    let (dip, dip_sigma, raw_dip) = best.ok_or_else(|| Error::EmptyInput("histogram has no bins".into()))?;
    let upper = dip + Z95_ONE_SIDED * dip_sigma;
    Ok(G2Correction {
        tau_ns: hist.tau_ns.clone(),
        g2_raw: raw,
        g2_corr: corr,
        g2_corr_sigma: sig,
        rho,
        dip,
        dip_sigma,
        dip_upper95: upper,
        raw_dip,
        single_emitter: upper < 0.5,
    })
}

impl G2Correction {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "tau_ns,g2_raw,g2_corr")?;
        for i in 0..self.tau_ns.len() {
            writeln!(w, "{},{:e},{:e}", self.tau_ns[i], self.g2_raw[i], self.g2_corr[i])?;
        }
        Ok(())
    }
}

/// Parses one unsigned picosecond timestamp per line.
pub fn read_timestamps(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(t.parse::<u64>().map_err(|e| Error::Parse {
            line: ln + 1,
            msg: format!("{e}: `{t}`"),
        })?);
    }
    Ok(out)
}

pub fn write_timestamps(ts: &[u64], w: &mut impl Write) -> Result<()> {
    for t in ts {
        writeln!(w, "{t}")?;
    }
    Ok(())
}
