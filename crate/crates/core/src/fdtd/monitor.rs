use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::layout::Component;
use super::{trilinear_folded, FieldState};

/// Point probe of one field component. Samples at several positions are
/// summed, which helps catch modes with a node at any single point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSpec {
    pub name: String,
    pub component: Component,
    pub positions_nm: Vec<[f64; 3]>,
}

impl MonitorSpec {
    pub fn point(name: impl Into<String>, component: Component, p: [f64; 3]) -> Self {
        MonitorSpec {
            name: name.into(),
            component,
            positions_nm: vec![p],
        }
    }
}

/// Recorded time series, one sample per completed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub name: String,
    pub component: Component,
    /// First recorded step index (the sample after that step completed).
    pub first_step: u64,
    /// Time step in seconds.
    pub dt_s: f64,
    pub samples: Vec<f64>,
    #[serde(skip)]
    taps: Vec<(usize, f64)>,
}

const C0: f64 = 299_792_458.0;

impl MonitorRecord {
    pub(crate) fn start(spec: &MonitorSpec, st: &FieldState) -> Result<Self> {
        if spec.positions_nm.is_empty() {
            return Err(Error::EmptyInput(format!("monitor `{}` has no positions", spec.name)));
        }
        let n = st.dims();
        let mut taps = Vec::new();
        for &p in &spec.positions_nm {
            let g = st.grid_coords(p);
            if (0..3).any(|d| !(g[d] >= 0.0 && g[d] <= n[d] as f64)) {
                return Err(Error::OutOfDomain {
                    what: "monitor",
                    x: p[0],
                    y: p[1],
                    z: p[2],
                    place: "outside the grid",
                });
            }
            for (ijk, w) in trilinear_folded(spec.component, n, g, st.mirror_signs()) {
                taps.push((st.layout().at(ijk[0], ijk[1], ijk[2]), w));
            }
        }
        Ok(MonitorRecord {
            name: spec.name.clone(),
            component: spec.component,
            first_step: st.step_index() + 1,
            dt_s: st.courant() * st.cell_nm() * 1e-9 / C0,
            samples: Vec::new(),
            taps,
        })
    }

    pub(crate) fn probe(&self, st: &FieldState) -> f64 {
        let arr = st.field(self.component);
        self.taps.iter().map(|&(i, w)| w * arr[i]).sum()
    }

    /// Builds a record from an existing series (for reading saved data).
    pub fn from_samples(name: impl Into<String>, component: Component, dt_s: f64, samples: Vec<f64>) -> Self {
        MonitorRecord {
            name: name.into(),
            component,
            first_step: 1,
            dt_s,
            samples,
            taps: Vec::new(),
        }
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "time_step,value")?;
        for (n, v) in self.samples.iter().enumerate() {
            writeln!(w, "{},{:e}", self.first_step + n as u64, v)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }

    /// Reads a `time_step,value` CSV file.
    pub fn read_csv(text: &str, name: &str, component: Component, dt_s: f64) -> Result<Self> {
        let mut samples = Vec::new();
        let mut first = None;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || ln == 0 && line.starts_with("time_step") {
                continue;
            }
            let mut parts = line.split(',');
            let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
                return Err(Error::Parse { line: ln + 1, msg: "expected two columns".into() });
            };
            let step: u64 = a.trim().parse().map_err(|e| Error::Parse { line: ln + 1, msg: format!("{e}") })?;
            let v: f64 = b.trim().parse().map_err(|e| Error::Parse { line: ln + 1, msg: format!("{e}") })?;
            first.get_or_insert(step);
            samples.push(v);
        }
        let mut rec = Self::from_samples(name, component, dt_s, samples);
        rec.first_step = first.unwrap_or(1);
        Ok(rec)
    }
}
