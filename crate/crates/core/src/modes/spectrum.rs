use std::io::Write;
use std::path::Path;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::MonitorRecord;

use super::harminv::hz_to_nm;

/// Minimum samples required by [`spectrum_from_timeseries`].
pub const MIN_SPECTRUM_SAMPLES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    Hann,
}

impl Window {
    fn weight(self, n: usize, len: usize) -> f64 {
        match self {
            Window::Rectangular => 1.0,
            Window::Hann => {
                let x = std::f64::consts::PI * n as f64 / (len - 1) as f64;
                x.sin().powi(2)
            }
        }
    }
}

/// Intensity versus wavelength, strictly increasing in wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub wavelength_nm: Vec<f64>,
    pub intensity: Vec<f64>,
    #[serde(default)]
    pub uncertainty: Option<Vec<f64>>,
    #[serde(default)]
    pub window: Option<Window>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub window: Window,
    /// Zero-padded transform length as a multiple of the record length.
    pub zero_pad: usize,
    /// Optional wavelength range to keep.
    pub range_nm: Option<(f64, f64)>,
    pub min_samples: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            window: Window::Hann,
            zero_pad: 4,
            range_nm: None,
            min_samples: MIN_SPECTRUM_SAMPLES,
        }
    }
}

impl Spectrum {
    pub fn new(wavelength_nm: Vec<f64>, intensity: Vec<f64>) -> Result<Self> {
        let s = Spectrum {
            wavelength_nm,
            intensity,
            uncertainty: None,
            window: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavelength_nm.len() != self.intensity.len() {
            return Err(Error::invalid("spectrum", "wavelength and intensity lengths differ"));
        }
        if self.wavelength_nm.is_empty() {
            return Err(Error::EmptyInput("spectrum has no samples".into()));
        }
        if self.wavelength_nm.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("spectrum", "wavelengths must be strictly increasing"));
        }
        if self.intensity.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("spectrum", "intensities must be finite and non-negative"));
        }
        if let Some(u) = &self.uncertainty {
            if u.len() != self.intensity.len() {
                return Err(Error::invalid("spectrum", "uncertainty length differs"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.wavelength_nm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelength_nm.is_empty()
    }

    /// Index of the largest intensity.
    pub fn peak_index(&self) -> usize {
        self.intensity
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Full width at half maximum (nm) of the peak at `idx`, with linear
    /// interpolation of the half-maximum crossings.
    pub fn fwhm_nm(&self, idx: usize) -> Option<f64> {
        let half = 0.5 * self.intensity[idx];
        let x = &self.wavelength_nm;
        let y = &self.intensity;
        let mut lo = None;
        for i in (0..idx).rev() {
            if y[i] <= half {
                let t = (half - y[i]) / (y[i + 1] - y[i]);
                lo = Some(x[i] + t * (x[i + 1] - x[i]));
                break;
            }
        }
        let mut hi = None;
        for i in idx + 1..y.len() {
            if y[i] <= half {
                let t = (y[i - 1] - half) / (y[i - 1] - y[i]);
                hi = Some(x[i - 1] + t * (x[i] - x[i - 1]));
                break;
            }
        }
        Some(hi? - lo?)
    }

    /// Quality factor estimated from the peak width, `lambda / FWHM`.
    pub fn peak_q(&self) -> Option<f64> {
        let i = self.peak_index();
        self.fwhm_nm(i).map(|w| self.wavelength_nm[i] / w)
    }

    /// Reads a two- or three-column CSV (wavelength, intensity[, sigma]).
    /// A non-numeric first line is treated as a header.
    pub fn read_csv(text: &str) -> Result<Self> {
        let mut wl = Vec::new();
        let mut it = Vec::new();
        let mut un = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
            let vals = match parsed {
                Ok(v) => v,
                Err(_) if wl.is_empty() => continue,
                Err(e) => return Err(Error::Parse { line: ln + 1, msg: e.to_string() }),
            };
            if vals.len() < 2 {
                return Err(Error::Parse { line: ln + 1, msg: "expected at least two columns".into() });
            }
            wl.push(vals[0]);
            it.push(vals[1]);
            if vals.len() > 2 {
                un.push(vals[2]);
            }
        }
        let mut s = Spectrum {
            wavelength_nm: wl,
            intensity: it,
            uncertainty: None,
            window: None,
        };
        if !un.is_empty() {
            if un.len() != s.intensity.len() {
                return Err(Error::invalid("spectrum", "uncertainty column is incomplete"));
            }
            s.uncertainty = Some(un);
        }
        s.validate()?;
        Ok(s)
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        match &self.uncertainty {
            Some(u) => {
                writeln!(w, "wavelength_nm,intensity,sigma")?;
                for i in 0..self.len() {
                    writeln!(w, "{},{:e},{:e}", self.wavelength_nm[i], self.intensity[i], u[i])?;
                }
            }
            None => {
                writeln!(w, "wavelength_nm,intensity")?;
                for i in 0..self.len() {
                    writeln!(w, "{},{:e}", self.wavelength_nm[i], self.intensity[i])?;
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

pub fn spectrum_from_timeseries(record: &MonitorRecord) -> Result<Spectrum> {
    spectrum_from_samples(&record.samples, record.dt_s, &SpectrumOptions::default())
}

/// Windowed |DFT|^2 of a real series, mapped to wavelength.
pub fn spectrum_from_samples(x: &[f64], dt_s: f64, opts: &SpectrumOptions) -> Result<Spectrum> {
    if x.len() < opts.min_samples.max(2) {
        return Err(Error::RecordTooShort { got: x.len(), need: opts.min_samples.max(2) });
    }
    if !(dt_s > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let n = x.len();
    let len = n * opts.zero_pad.max(1);
    let mut buf: Vec<num_complex::Complex64> = vec![num_complex::Complex64::new(0.0, 0.0); len];
    for (i, &v) in x.iter().enumerate() {
        buf[i].re = v * opts.window.weight(i, n);
    }
    let fft = FftPlanner::new().plan_fft_forward(len);
    fft.process(&mut buf);
    let df = 1.0 / (len as f64 * dt_s);
    let mut wl = Vec::new();
    let mut it = Vec::new();
    // Descending frequency gives ascending wavelength.
    for k in (1..=len / 2).rev() {
        let l = hz_to_nm(k as f64 * df);
        if let Some((a, b)) = opts.range_nm {
            if l < a || l > b {
                continue;
            }
        }
        wl.push(l);
        it.push((buf[k].norm() * dt_s).powi(2));
    }
    if wl.is_empty() {
        return Err(Error::EmptyInput("no spectral samples in the requested range".into()));
    }
    Ok(Spectrum {
        wavelength_nm: wl,
        intensity: it,
        uncertainty: None,
        window: Some(opts.window),
    })
}
