//! Run configuration: one TOML document per run, quantities carry their
//! unit in the field name.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use phc_core::cavity::CavityOptions;
use phc_core::farfield::FarFieldOptions;
use phc_core::geometry::{CavityDesign, RasterOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Modes,
    Profile,
    Purcell,
    Farfield,
}

impl Analysis {
    fn requires(self) -> &'static [Analysis] {
        match self {
            Analysis::Modes => &[],
            Analysis::Profile => &[Analysis::Modes],
            Analysis::Purcell => &[Analysis::Modes, Analysis::Profile],
            Analysis::Farfield => &[Analysis::Modes],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Analysis::Modes => "modes",
            Analysis::Profile => "profile",
            Analysis::Purcell => "purcell",
            Analysis::Farfield => "farfield",
        }
    }
}

/// Empty box with absorbing walls; no structure at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VacuumSpec {
    pub extent_nm: [f64; 3],
    #[serde(default = "default_pml")]
    pub pml_cells: usize,
}

fn default_pml() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PurcellConfig {
    /// Emitter position; the air maximum in the first-ring holes if absent.
    pub position_nm: Option<[f64; 3]>,
    /// Dipole orientation; aligned with the local field if absent.
    pub orientation: Option<[f64; 3]>,
    /// Emitter detunings from the cavity wavelength.
    pub detunings_nm: Vec<f64>,
}

impl Default for PurcellConfig {
    fn default() -> Self {
        PurcellConfig {
            position_nm: None,
            orientation: None,
            detunings_nm: vec![0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FarFieldConfig {
    pub na: f64,
    /// Analysis plane height above the slab; one mode wavelength if absent.
    pub height_nm: Option<f64>,
    /// Also simulate the in-hole reference emitter and report the ratio.
    pub reference: bool,
    pub sampling: FarFieldOptions,
}

impl Default for FarFieldConfig {
    fn default() -> Self {
        FarFieldConfig {
            na: 0.9,
            height_nm: None,
            reference: true,
            sampling: FarFieldOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Highest Q.
    #[default]
    MaxQ,
    /// Highest Q / V.
    MaxQOverV,
}

/// Grid over lattice constant and hole radius. The radius is given either
/// in nm or as a fraction of the lattice constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub lattice_constant_nm: Vec<f64>,
    #[serde(default)]
    pub hole_radius_nm: Vec<f64>,
    #[serde(default)]
    pub radius_over_a: Vec<f64>,
    #[serde(default = "default_target")]
    pub target_wavelength_nm: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance_nm: f64,
    #[serde(default)]
    pub objective: Objective,
    /// Scale the cell with the lattice constant so every point sees the
    /// same number of cells per period.
    #[serde(default = "default_true")]
    pub scale_cell: bool,
}

fn default_true() -> bool {
    true
}

fn default_target() -> f64 {
    637.0
}
fn default_tolerance() -> f64 {
    10.0
}

fn default_analyses() -> Vec<Analysis> {
    vec![Analysis::Modes]
}

/// The configuration file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Path to a design document, relative to the config file.
    #[serde(default)]
    pub design_file: Option<PathBuf>,
    #[serde(default)]
    pub design: Option<CavityDesign>,
    #[serde(default)]
    pub vacuum: Option<VacuumSpec>,
    #[serde(default)]
    pub simulation: CavityOptions,
    #[serde(default = "default_analyses")]
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub purcell: PurcellConfig,
    #[serde(default)]
    pub farfield: FarFieldConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Design(CavityDesign),
    Vacuum(VacuumSpec),
}

/// Everything that determines the results of a run, with files inlined and
/// command-line overrides applied. Its hash names the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub command: String,
    pub seed: u64,
    pub structure: Structure,
    pub simulation: CavityOptions,
    pub analyses: Vec<Analysis>,
    pub purcell: PurcellConfig,
    pub farfield: FarFieldConfig,
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("in {}", path.display()))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, dir))
    }

    pub fn resolve(&self, command: &str, base: &Path) -> Result<Resolved> {
        let structure = match (&self.design, &self.design_file, &self.vacuum) {
            (Some(d), None, None) => Structure::Design(d.clone()),
            (None, Some(f), None) => {
                let p = base.join(f);
                if !p.exists() {
                    bail!("design_file: {} does not exist", p.display());
                }
                let d = CavityDesign::load(&p).with_context(|| format!("design_file: {}", p.display()))?;
                Structure::Design(d)
            }
            (None, None, Some(v)) => Structure::Vacuum(v.clone()),
            (None, None, None) => bail!("no structure: give [design], design_file or [vacuum]"),
            _ => bail!("give exactly one of [design], design_file and [vacuum]"),
        };
        let mut analyses = self.analyses.clone();
        analyses.sort();
        analyses.dedup();
        let r = Resolved {
            command: command.to_string(),
            seed: self.seed,
            structure,
            simulation: self.simulation.clone(),
            analyses,
            purcell: self.purcell.clone(),
            farfield: self.farfield.clone(),
            sweep: self.sweep.clone(),
        };
        Ok(r)
    }
}

impl Resolved {
    pub fn wants(&self, a: Analysis) -> bool {
        self.analyses.contains(&a)
    }

    /// Adds `extra` analyses and their prerequisites.
    pub fn require(&mut self, extra: &[Analysis]) {
        for &a in extra {
            self.analyses.push(a);
            self.analyses.extend_from_slice(a.requires());
        }
        self.analyses.sort();
        self.analyses.dedup();
    }

    pub fn validate(&self) -> Result<()> {
        for &a in &self.analyses {
            for need in a.requires() {
                if !self.wants(*need) {
                    bail!("analyses: `{}` requires `{}`", a.name(), need.name());
                }
            }
        }
        self.simulation.validate().context("simulation")?;
        match &self.structure {
            Structure::Design(d) => {
                d.validate().context("design")?;
                let limit = RasterOptions::default().max_cell_fraction * d.lattice.lattice_constant_nm;
                if self.simulation.cell_nm > limit + 1e-12 {
                    bail!("simulation.cell_nm: {} exceeds {limit} nm for this lattice", self.simulation.cell_nm);
                }
            }
            Structure::Vacuum(v) => {
                if !v.extent_nm.iter().all(|&e| e > 0.0 && e.is_finite()) {
                    bail!("vacuum.extent_nm: must be positive");
                }
                if self.analyses.iter().any(|&a| a != Analysis::Modes) {
                    bail!("analyses: a vacuum run supports `modes` only");
                }
            }
        }
        let na = self.farfield.na;
        if !(na > 0.0 && na <= 1.0) {
            bail!("farfield.na: must lie in (0, 1], got {na}");
        }
        if let Some(h) = self.farfield.height_nm {
            if !(h > 0.0) {
                bail!("farfield.height_nm: must be positive");
            }
        }
        if let Some(d) = self.purcell.orientation {
            let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-9 {
                bail!("purcell.orientation: must be a unit vector (|d| = {n})");
            }
        }
        if self.purcell.detunings_nm.is_empty() {
            bail!("purcell.detunings_nm: must not be empty");
        }
        if let Some(s) = &self.sweep {
            if s.lattice_constant_nm.is_empty() {
                bail!("sweep.lattice_constant_nm: must not be empty");
            }
            match (s.hole_radius_nm.is_empty(), s.radius_over_a.is_empty()) {
                (true, true) => bail!("sweep: give hole_radius_nm or radius_over_a"),
                (false, false) => bail!("sweep: give only one of hole_radius_nm and radius_over_a"),
                _ => {}
            }
            if !matches!(self.structure, Structure::Design(_)) {
                bail!("sweep: needs a design");
            }
            if !(s.tolerance_nm > 0.0) {
                bail!("sweep.tolerance_nm: must be positive");
            }
        }
        Ok(())
    }

    /// Short content hash naming the run directory.
    pub fn run_id(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(crate::output::sha256_hex(&json)[..16].to_string())
    }
}
