//! Design-level driver: rasterize a cavity, find its resonances with a
//! broadband ring-down, then characterize the selected mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::farfield::{analysis_plane, near_to_far, FarField, FarFieldOptions, NearField};
use crate::fdtd::{init_simulation, BoundarySpec, Component, FaceKind, MonitorRecord, MonitorSpec, PlaneDft, SourceSpec};
use crate::geometry::{build_permittivity, first_ring_holes, CavityDesign, DefectKind, DefectSpec, PermittivityGrid};
use crate::modes::{
    band_from_wavelengths, extract_mode_profile, harmonic_inversion_with, ringdown_start, HarmonicOptions,
    ModeCandidate, ModeProfile, ProfileOptions, ResonantMode,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct CavityOptions {
    pub cell_nm: f64,
    /// Excitation dipole axis (0, 1, 2) placed at the defect center.
    pub dipole_axis: usize,
    pub source_wavelength_nm: f64,
    pub source_bandwidth: f64,
    /// Search band for the harmonic inversion.
    pub band_nm: [f64; 2],
    pub ringdown_steps: u64,
    /// Candidates below this Q are treated as leaky background.
    pub min_q: f64,
    /// Reduce the domain with the design's mirror planes.
    pub use_symmetry: bool,
    pub profile: ProfileOptions,
}

impl Default for CavityOptions {
    fn default() -> Self {
        CavityOptions {
            cell_nm: 200.0 / 12.0,
            dipole_axis: 0,
            source_wavelength_nm: 660.0,
            source_bandwidth: 0.25,
            band_nm: [560.0, 800.0],
            ringdown_steps: 4000,
            min_q: 30.0,
            use_symmetry: true,
            profile: ProfileOptions {
                bandwidth: 0.05,
                ..ProfileOptions::default()
            },
        }
    }
}

impl CavityOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_nm > 0.0) {
            return Err(Error::invalid("cell_nm", "must be positive"));
        }
        if self.dipole_axis > 2 {
            return Err(Error::invalid("dipole_axis", "must be 0, 1 or 2"));
        }
        if !(self.band_nm[0] > 0.0 && self.band_nm[1] > self.band_nm[0]) {
            return Err(Error::invalid("band_nm", "must be an increasing positive interval"));
        }
        Ok(())
    }

    fn orientation(&self) -> [f64; 3] {
        let mut d = [0.0; 3];
        d[self.dipole_axis] = 1.0;
        d
    }
}

/// Mirror faces selecting the parity sector of a center dipole along
/// `axis`: the plane normal to the dipole is an electric wall, the planes
/// containing it are magnetic walls.
pub fn dipole_symmetry_boundary(pml_cells: usize, axis: usize) -> BoundarySpec {
    let mut b = BoundarySpec::pml(pml_cells);
    for d in 0..3 {
        b.faces[d][0] = if d == axis { FaceKind::Pec } else { FaceKind::Pmc };
    }
    b
}

/// Simulation grid and boundary for a design.
pub fn prepare_domain(design: &CavityDesign, opts: &CavityOptions) -> Result<(PermittivityGrid, BoundarySpec)> {
    opts.validate()?;
    let grid = build_permittivity(design, opts.cell_nm)?;
    if opts.use_symmetry && design.is_mirror_symmetric() && grid.dims().iter().all(|n| n % 2 == 0) {
        let half = grid.half_domain([true; 3])?;
        Ok((half, dipole_symmetry_boundary(design.domain.pml_cells, opts.dipole_axis)))
    } else {
        Ok((grid, BoundarySpec::pml(design.domain.pml_cells)))
    }
}

fn monitor_points(a: f64, axis: usize) -> Vec<MonitorSpec> {
    let pts = vec![[0.0, 0.0, 0.0], [0.18 * a, 0.27 * a, 0.0], [0.55 * a, 0.1 * a, 0.0]];
    let other = if axis == 0 { 1 } else { 0 };
    vec![
        MonitorSpec {
            name: format!("center-{}", Component::electric(axis).name()),
            component: Component::electric(axis),
            positions_nm: pts.clone(),
        },
        MonitorSpec {
            name: format!("center-{}", Component::electric(other).name()),
            component: Component::electric(other),
            positions_nm: pts[1..].to_vec(),
        },
    ]
}

#[derive(Debug, Clone)]
pub struct ModeSearch {
    /// Distinct candidates sorted by frequency.
    pub candidates: Vec<ModeCandidate>,
    pub records: Vec<MonitorRecord>,
    pub grid_dims: [usize; 3],
    pub ringdown_start: u64,
}

/// Broadband ring-down of the design and harmonic inversion of every
/// monitor.
pub fn find_modes(design: &CavityDesign, opts: &CavityOptions) -> Result<ModeSearch> {
    let (grid, boundary) = prepare_domain(design, opts)?;
    let monitors = monitor_points(design.lattice.lattice_constant_nm, opts.dipole_axis);
    ringdown_search(&grid, &boundary, opts, &monitors)
}

/// Broadband dipole at the origin, ring-down recorded at `monitors`.
pub fn ringdown_search(
    grid: &PermittivityGrid,
    boundary: &BoundarySpec,
    opts: &CavityOptions,
    monitors: &[MonitorSpec],
) -> Result<ModeSearch> {
    opts.validate()?;
    let src = SourceSpec::dipole([0.0; 3], opts.orientation(), opts.source_wavelength_nm, opts.source_bandwidth);
    let mut state = init_simulation(grid, &src, boundary)?;
    let start = ringdown_start(&state);
    let records = state.run(start + opts.ringdown_steps, monitors)?;
    let band = band_from_wavelengths(opts.band_nm[0], opts.band_nm[1]);
    let mut all = Vec::new();
    for rec in &records {
        let tail = &rec.samples[start as usize..];
        all.extend(harmonic_inversion_with(tail, rec.dt_s, band, &HarmonicOptions::default())?);
    }
    Ok(ModeSearch {
        candidates: merge_candidates(all),
        records,
        grid_dims: grid.dims(),
        ringdown_start: start,
    })
}

/// Merges candidates seen by several monitors (same frequency to 0.2%),
/// keeping the strongest sighting.
pub fn merge_candidates(mut all: Vec<ModeCandidate>) -> Vec<ModeCandidate> {
    all.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    let mut out: Vec<ModeCandidate> = Vec::new();
    for c in all {
        if !out.iter().any(|o| (o.frequency_hz - c.frequency_hz).abs() < 2e-3 * o.frequency_hz) {
            out.push(c);
        }
    }
    out.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
    out
}

/// The strongest candidate with `Q >= min_q`.
pub fn select_mode(candidates: &[ModeCandidate], min_q: f64) -> Option<ModeCandidate> {
    candidates
        .iter()
        .filter(|c| c.q >= min_q)
        .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude))
        .cloned()
}

#[derive(Debug, Clone)]
pub struct CavityReport {
    pub search: ModeSearch,
    pub mode: Option<ResonantMode>,
}

/// Finds the modes of `design` and characterizes the selected one with a
/// narrowband profile run.
pub fn characterize(design: &CavityDesign, opts: &CavityOptions) -> Result<CavityReport> {
    let search = find_modes(design, opts)?;
    let mode = characterize_selected(design, opts, &search)?;
    Ok(CavityReport { search, mode })
}

/// Profile run for the mode `select_mode` picks from an existing search.
pub fn characterize_selected(
    design: &CavityDesign,
    opts: &CavityOptions,
    search: &ModeSearch,
) -> Result<Option<ResonantMode>> {
    let Some(best) = select_mode(&search.candidates, opts.min_q) else {
        return Ok(None);
    };
    let (grid, boundary) = prepare_domain(design, opts)?;
    let src = SourceSpec::dipole([0.0; 3], opts.orientation(), best.wavelength_nm, opts.profile.bandwidth);
    let profile = extract_mode_profile(&grid, best.wavelength_nm, &boundary, &src, &opts.profile)?;
    let label = format!("{}-dipole", ["x", "y", "z"][opts.dipole_axis]);
    let mode = ResonantMode::from_profile(best.wavelength_nm, best.q, design.lattice.slab_index, label, profile)?;
    Ok(Some(mode))
}

/// Whether `p` (nm, mirror-folded coordinates allowed) lies inside one of
/// the first-ring holes and within the membrane.
pub fn in_first_ring_hole(design: &CavityDesign, p: [f64; 3]) -> Result<bool> {
    let holes = first_ring_holes(&design.lattice, &design.defect)?;
    let r = design.lattice.hole_radius_nm;
    let half_t = design.lattice.slab_thickness_nm / 2.0;
    let in_plane = holes.iter().any(|h| {
        [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)]
            .iter()
            .any(|(sx, sy)| (sx * p[0] - h[0]).hypot(sy * p[1] - h[1]) < r)
    });
    Ok(in_plane && p[2].abs() <= half_t)
}


/// The design with its defect sites restored to holes. A dipole at the
/// center then sits in an ordinary lattice hole with no cavity mode nearby.
pub fn reference_design(design: &CavityDesign) -> CavityDesign {
    let mut d = design.clone();
    d.defect = DefectSpec {
        kind: DefectKind::None,
        side_hole_shift_nm: 0.0,
    };
    d.name = format!("{}-reference", design.name);
    d
}

/// Far field of a narrowband dipole at the design center, accumulated over
/// the drive and the ring-down on a plane `height_nm` above the slab.
pub fn emission_far_field(
    design: &CavityDesign,
    opts: &CavityOptions,
    wavelength_nm: f64,
    height_nm: f64,
    ff: &FarFieldOptions,
) -> Result<FarField> {
    let mut design = design.clone();
    design.domain.air_nm = design.domain.air_nm.max(height_nm + 4.0 * opts.cell_nm);
    let (grid, boundary) = prepare_domain(&design, opts)?;
    let k = analysis_plane(&grid, &boundary, design.lattice.slab_thickness_nm / 2.0 + height_nm)?;
    let src = SourceSpec::dipole([0.0; 3], opts.orientation(), wavelength_nm, opts.profile.bandwidth);
    let mut state = init_simulation(&grid, &src, &boundary)?;
    let end = ringdown_start(&state) + opts.profile.ringdown_steps;
    let mut plane = PlaneDft::new(&state, k, vec![wavelength_nm], 0);
    state.run_observed(end, &[], &mut [&mut plane])?;
    let near = NearField::from_plane(&plane.fields(0, grid.cell_nm()), &boundary)?;
    near_to_far(&near, ff)
}

/// Node permittivity below which a node counts as air.
pub const AIR_EPS_TOLERANCE: f64 = 1.1;

/// Largest energy density at air nodes inside the first-ring holes, with
/// its position. Nodes on the hole rim see averaged permittivity and are
/// skipped: an emitter in the hole sits in air.
pub fn hole_field_maximum(design: &CavityDesign, profile: &ModeProfile) -> Result<Option<([f64; 3], f64)>> {
    let mut best: Option<([f64; 3], f64)> = None;
    for (idx, (&v, &e)) in profile.density.iter().zip(&profile.eps).enumerate() {
        if e >= AIR_EPS_TOLERANCE || best.is_some_and(|b| v <= b.1) {
            continue;
        }
        let r = profile.node_position(profile.unindex(idx));
        if in_first_ring_hole(design, r)? {
            best = Some((r, v));
        }
    }
    Ok(best)
}
