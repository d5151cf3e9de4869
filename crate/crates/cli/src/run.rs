//! Simulation runs and design sweeps.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use phc_core::cavity::{
    characterize_selected, emission_far_field, find_modes, hole_field_maximum, reference_design, ringdown_search,
    select_mode, CavityOptions, ModeSearch,
};
use phc_core::coupling::{local_coupling, optimal_orientation, purcell_factor, purcell_sweep, write_sweep_csv, EmitterSpec, LocalCoupling};
use phc_core::farfield::{collection_efficiency, detection_ratio};
use phc_core::fdtd::{BoundarySpec, Component, MonitorSpec};
use phc_core::geometry::{CavityDesign, PermittivityGrid};
use phc_core::gridio::GridArray;
use phc_core::modes::{ModeCandidate, ResonantMode};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Analysis, Objective, Resolved, Structure, SweepConfig, VacuumSpec};
use crate::output::RunDir;

#[derive(Debug, Clone, Serialize)]
pub struct ModesReport {
    pub grid_dims: [usize; 3],
    pub ringdown_start_step: u64,
    /// Candidates with `Q >= min_q`, by frequency.
    pub resonances: Vec<ModeCandidate>,
    /// Everything the harmonic inversion returned.
    pub candidates: Vec<ModeCandidate>,
    /// The characterized mode, when a profile was requested.
    pub selected: Option<SelectedMode>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectedMode {
    #[serde(flatten)]
    pub mode: ResonantMode,
    pub localization: f64,
    pub max_energy_position_nm: [f64; 3],
    pub max_intensity_position_nm: [f64; 3],
    /// Largest energy density at an air node of the first-ring holes,
    /// relative to the global maximum.
    pub hole_maximum: Option<HoleMaximum>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HoleMaximum {
    pub position_nm: [f64; 3],
    pub relative_density: f64,
}

#[derive(Debug, Clone, Serialize)]
struct PurcellReport {
    wavelength_nm: f64,
    q: f64,
    volume_cubic_wavelengths: f64,
    position_nm: [f64; 3],
    orientation: [f64; 3],
    local: LocalCoupling,
    purcell_on_resonance: f64,
}

#[derive(Debug, Clone, Serialize)]
struct FarFieldReport {
    wavelength_nm: f64,
    plane_height_nm: f64,
    na: f64,
    collection_efficiency: f64,
    reference_collection_efficiency: Option<f64>,
    /// Reference over cavity collection efficiency.
    detection_ratio: Option<f64>,
}

/// What a finished run leaves behind, for callers that go on to aggregate.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub modes: ModesReport,
}

fn resonances(search: &ModeSearch, min_q: f64) -> Vec<ModeCandidate> {
    search.candidates.iter().filter(|c| c.q >= min_q).cloned().collect()
}

fn write_monitors(dir: &mut RunDir, search: &ModeSearch) -> Result<()> {
    for rec in &search.records {
        dir.write_with(&format!("monitor_{}.csv", rec.name), |w| rec.write_csv(w))?;
    }
    Ok(())
}

fn vacuum_domain(v: &VacuumSpec, cell_nm: f64) -> (PermittivityGrid, BoundarySpec) {
    let half = v.extent_nm.map(|e| (e / 2.0 / cell_nm - 1e-9).ceil() as usize + v.pml_cells);
    let dims = half.map(|h| 2 * h);
    let origin = half.map(|h| -(h as f64) * cell_nm);
    let mut grid = PermittivityGrid::vacuum(dims, cell_nm, origin);
    grid.set_pml_margin([[v.pml_cells; 2]; 3]);
    (grid, BoundarySpec::pml(v.pml_cells))
}

fn vacuum_monitors(opts: &CavityOptions, extent: [f64; 3]) -> Vec<MonitorSpec> {
    let c = Component::electric(opts.dipole_axis);
    let off = [0.2 * extent[0], 0.15 * extent[1], 0.0];
    vec![MonitorSpec {
        name: format!("center-{}", c.name()),
        component: c,
        positions_nm: vec![[0.0; 3], off],
    }]
}

/// Runs the requested analyses of `r` into `dir`.
pub fn simulate_into(r: &Resolved, dir: &mut RunDir) -> Result<RunSummary> {
    let opts = &r.simulation;
    match &r.structure {
        Structure::Vacuum(v) => {
            let (grid, boundary) = vacuum_domain(v, opts.cell_nm);
            let search = ringdown_search(&grid, &boundary, opts, &vacuum_monitors(opts, v.extent_nm))?;
            write_monitors(dir, &search)?;
            let modes = ModesReport {
                grid_dims: search.grid_dims,
                ringdown_start_step: search.ringdown_start,
                resonances: resonances(&search, opts.min_q),
                candidates: search.candidates.clone(),
                selected: None,
            };
            dir.write_json("modes.json", &modes)?;
            Ok(RunSummary { modes })
        }
        Structure::Design(design) => simulate_design(r, design, dir),
    }
}

fn simulate_design(r: &Resolved, design: &CavityDesign, dir: &mut RunDir) -> Result<RunSummary> {
    let opts = &r.simulation;
    let search = find_modes(design, opts)?;
    write_monitors(dir, &search)?;
    let mut modes = ModesReport {
        grid_dims: search.grid_dims,
        ringdown_start_step: search.ringdown_start,
        resonances: resonances(&search, opts.min_q),
        candidates: search.candidates.clone(),
        selected: None,
    };
    let needs_mode = r.analyses.iter().any(|&a| a != Analysis::Modes);
    if !needs_mode {
        dir.write_json("modes.json", &modes)?;
        return Ok(RunSummary { modes });
    }
    let best = select_mode(&search.candidates, opts.min_q)
        .ok_or_else(|| anyhow!("no resonance with Q >= {} in {:?} nm", opts.min_q, opts.band_nm))?;

    let mut mode = None;
    if r.wants(Analysis::Profile) {
        let m = characterize_selected(design, opts, &search)?.expect("a selected mode");
        let p = m.profile.as_ref().expect("characterized modes carry a profile");
        let hole = hole_field_maximum(design, p)?.map(|(position_nm, relative_density)| HoleMaximum {
            position_nm,
            relative_density,
        });
        modes.selected = Some(SelectedMode {
            mode: m.clone(),
            localization: p.localization(m.wavelength_nm),
            max_energy_position_nm: p.argmax_position_nm(),
            max_intensity_position_nm: p.intensity_argmax_position_nm(),
            hole_maximum: hole,
        });
        let grid = GridArray::from(p);
        dir.write_with("profile.bin", |w| grid.write(w))?;
        mode = Some(m);
    }
    dir.write_json("modes.json", &modes)?;

    if r.wants(Analysis::Purcell) {
        let m = mode.as_ref().expect("purcell requires a profile");
        let position = match r.purcell.position_nm {
            Some(p) => p,
            None => {
                modes.selected.as_ref().and_then(|s| s.hole_maximum).map(|h| h.position_nm).ok_or_else(|| {
                    anyhow!("purcell: no air node inside the first-ring holes; set purcell.position_nm")
                })?
            }
        };
        let orientation = match r.purcell.orientation {
            Some(d) => d,
            None => optimal_orientation(m, position).context("purcell")?,
        };
        let em = EmitterSpec::new(position, orientation, m.wavelength_nm);
        let report = PurcellReport {
            wavelength_nm: m.wavelength_nm,
            q: m.q,
            volume_cubic_wavelengths: m.volume_cubic_wavelengths,
            position_nm: position,
            orientation,
            local: local_coupling(m, &em).context("purcell")?,
            purcell_on_resonance: purcell_factor(m, &em).context("purcell")?,
        };
        let rows = purcell_sweep(m, &[position], &[orientation], &r.purcell.detunings_nm)?;
        dir.write_json("purcell.json", &report)?;
        dir.write_with("purcell.csv", |w| write_sweep_csv(&rows, w))?;
    }

    if r.wants(Analysis::Farfield) {
        let lam = best.wavelength_nm;
        let height = r.farfield.height_nm.unwrap_or(lam);
        let ff = &r.farfield.sampling;
        let na = r.farfield.na;
        let cavity = emission_far_field(design, opts, lam, height, ff).context("farfield")?;
        dir.write_with("farfield.csv", |w| cavity.write_csv(w))?;
        let k = cavity.kspace_grid()?;
        dir.write_with("farfield_kspace.bin", |w| k.write(w))?;
        let eta = collection_efficiency(&cavity, na)?;
        let (eta_ref, ratio) = if r.farfield.reference {
            let reference = emission_far_field(&reference_design(design), opts, lam, height, ff).context("farfield reference")?;
            dir.write_with("farfield_reference.csv", |w| reference.write_csv(w))?;
            (Some(collection_efficiency(&reference, na)?), Some(detection_ratio(&reference, &cavity, na)?))
        } else {
            (None, None)
        };
        dir.write_json(
            "farfield.json",
            &FarFieldReport {
                wavelength_nm: lam,
                plane_height_nm: height,
                na,
                collection_efficiency: eta,
                reference_collection_efficiency: eta_ref,
                detection_ratio: ratio,
            },
        )?;
    }
    Ok(RunSummary { modes })
}

/// One row of the sweep table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lattice_constant_nm: f64,
    pub hole_radius_nm: f64,
    pub wavelength_nm: Option<f64>,
    pub q: Option<f64>,
    pub volume_cubic_wavelengths: Option<f64>,
    pub status: String,
}

impl SweepRow {
    fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub target_wavelength_nm: f64,
    pub tolerance_nm: f64,
    pub objective: Objective,
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the best in-tolerance design.
    pub best: Option<usize>,
}

/// Points of the sweep in table order: lattice constant outer, radius
/// inner.
pub fn sweep_points(s: &SweepConfig) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for &a in &s.lattice_constant_nm {
        if s.hole_radius_nm.is_empty() {
            pts.extend(s.radius_over_a.iter().map(|f| (a, f * a)));
        } else {
            pts.extend(s.hole_radius_nm.iter().map(|&r| (a, r)));
        }
    }
    pts
}

/// Index of the best row: in tolerance, then by the objective. Ties go to
/// the earlier row.
pub fn select_best(rows: &[SweepRow], target: f64, tol: f64, objective: Objective) -> Option<usize> {
    let score = |r: &SweepRow| match objective {
        Objective::MaxQ => r.q.unwrap_or(f64::NEG_INFINITY),
        Objective::MaxQOverV => match (r.q, r.volume_cubic_wavelengths) {
            (Some(q), Some(v)) if v > 0.0 => q / v,
            _ => f64::NEG_INFINITY,
        },
    };
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        let Some(l) = r.wavelength_nm else { continue };
        if !r.ok() || (l - target).abs() >= tol {
            continue;
        }
        if best.is_none_or(|b| score(r) > score(&rows[b])) {
            best = Some(i);
        }
    }
    best
}

fn point_dir_name(i: usize, a: f64, r: f64) -> String {
    format!("points/{i:03}_a{a}_r{r}")
}

/// Runs every sweep point (modes and profile) in parallel, each in its own
/// directory under `dir`, and writes the merged table.
pub fn sweep_into(r: &Resolved, dir: &mut RunDir) -> Result<SweepReport> {
    let Structure::Design(base) = &r.structure else {
        bail!("sweep: needs a design");
    };
    let s = r.sweep.as_ref().ok_or_else(|| anyhow!("sweep: missing [sweep] table"))?;
    let pts = sweep_points(s);
    let base_a = base.lattice.lattice_constant_nm;
    let mut point_cfg = r.clone();
    point_cfg.analyses = vec![Analysis::Modes, Analysis::Profile];
    point_cfg.sweep = None;

    let results: Vec<(SweepRow, Option<RunDir>)> = pts
        .par_iter()
        .enumerate()
        .map(|(i, &(a, rad))| {
            let mut design = base.clone();
            design.lattice.lattice_constant_nm = a;
            design.lattice.hole_radius_nm = rad;
            let mut cfg = point_cfg.clone();
            if s.scale_cell {
                cfg.simulation.cell_nm *= a / base_a;
            }
            cfg.structure = Structure::Design(design);
            let sub = dir.path().join(point_dir_name(i, a, rad));
            let run = (|| -> Result<(RunSummary, RunDir)> {
                cfg.validate()?;
                let mut d = RunDir::create(&sub)?;
                let summary = simulate_into(&cfg, &mut d)?;
                Ok((summary, d))
            })();
            let mut row = SweepRow {
                lattice_constant_nm: a,
                hole_radius_nm: rad,
                wavelength_nm: None,
                q: None,
                volume_cubic_wavelengths: None,
                status: "ok".into(),
            };
            match run {
                Ok((summary, d)) => {
                    match summary.modes.selected {
                        Some(m) => {
                            row.wavelength_nm = Some(m.mode.wavelength_nm);
                            row.q = Some(m.mode.q);
                            row.volume_cubic_wavelengths = Some(m.mode.volume_cubic_wavelengths);
                        }
                        None => row.status = "no resonance".into(),
                    }
                    (row, Some(d))
                }
                Err(e) => {
                    row.status = format!("failed: {e:#}");
                    (row, None)
                }
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    for (i, (row, sub)) in results.into_iter().enumerate() {
        if let Some(sub) = sub {
            dir.adopt(&point_dir_name(i, row.lattice_constant_nm, row.hole_radius_nm), &sub);
        }
        rows.push(row);
    }
    let best = select_best(&rows, s.target_wavelength_nm, s.tolerance_nm, s.objective);
    let report = SweepReport {
        target_wavelength_nm: s.target_wavelength_nm,
        tolerance_nm: s.tolerance_nm,
        objective: s.objective,
        rows,
        best,
    };
    dir.write("sweep.csv", sweep_csv(&report.rows).as_bytes())?;
    dir.write_json("sweep.json", &report)?;
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("lattice_constant_nm,hole_radius_nm,wavelength_nm,q,volume_cubic_wavelengths,status\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},\"{}\"\n",
            r.lattice_constant_nm,
            r.hole_radius_nm,
            opt(r.wavelength_nm),
            opt(r.q),
            opt(r.volume_cubic_wavelengths),
            r.status.replace('"', "'")
        ));
    }
    s
}

/// Output directory for a run: `<out>/<run-id>`.
pub fn run_root(out: &Path, run_id: &str) -> std::path::PathBuf {
    out.join(run_id)
}
