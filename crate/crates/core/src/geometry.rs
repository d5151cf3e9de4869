//! Photonic-crystal slab geometry and its rasterization onto the staggered grid.
//!
//! A design is a triangular lattice of cylindrical air holes through a
//! dielectric membrane, with a point defect (S1 or L3) at the origin and an
//! optional spherical nanocrystal. The defect center sits on a grid node so
//! the mirror planes `x = 0`, `y = 0` and `z = 0` of a symmetric design are
//! node planes of the grid.
//!
//! Permittivity is sampled at the three electric-field component locations.
//! Cells that straddle a material boundary get the volume-fraction average of
//! the permittivity (scalar averaging, no anisotropic smoothing).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SLAB_INDEX: f64 = 3.31;
pub const DEFAULT_DIAMOND_INDEX: f64 = 2.4;
pub const DEFAULT_MIN_PERIODS: usize = 7;

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

/// How the lattice is cut off at the edge of the patterned region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Exactly `rows x cols` sites; rows offset by half a period alternate
    /// their extra site between the two sides (point symmetric only).
    #[default]
    Rectangular,
    /// Mirror symmetric in x and y: offset rows carry `cols - 1` sites.
    Symmetric,
}

fn default_min_periods() -> usize {
    DEFAULT_MIN_PERIODS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub lattice_constant_nm: f64,
    pub hole_radius_nm: f64,
    pub slab_thickness_nm: f64,
    pub slab_index: f64,
    /// Number of lattice rows (odd; the defect row is the middle one).
    pub rows: usize,
    /// Number of sites in the defect row (odd).
    pub cols: usize,
    #[serde(default)]
    pub truncation: Truncation,
    /// Minimum number of lattice periods required on each side of the defect.
    #[serde(default = "default_min_periods")]
    pub min_periods_per_side: usize,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec {
            lattice_constant_nm: 200.0,
            hole_radius_nm: 60.0,
            slab_thickness_nm: 120.0,
            slab_index: DEFAULT_SLAB_INDEX,
            rows: 15,
            cols: 15,
            truncation: Truncation::Symmetric,
            min_periods_per_side: DEFAULT_MIN_PERIODS,
        }
    }
}

impl LatticeSpec {
    fn check_basic(&self) -> Result<()> {
        let a = self.lattice_constant_nm;
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid("lattice_constant_nm", "must be positive"));
        }
        // r = 0 is accepted as an unpatterned membrane.
        if !(self.hole_radius_nm >= 0.0 && self.hole_radius_nm < a / 2.0) {
            return Err(Error::invalid(
                "hole_radius_nm",
                format!("must satisfy 0 <= r < a/2 = {}", a / 2.0),
            ));
        }
        if !(self.slab_thickness_nm > 0.0 && self.slab_thickness_nm.is_finite()) {
            return Err(Error::invalid("slab_thickness_nm", "must be positive"));
        }
        if !(self.slab_index > 1.0 && self.slab_index.is_finite()) {
            return Err(Error::invalid("slab_index", "must exceed 1"));
        }
        if self.rows % 2 == 0 || self.cols % 2 == 0 {
            return Err(Error::invalid("rows/cols", "must be odd so the defect is centered"));
        }
        Ok(())
    }

    /// Full validation, including the minimum lattice extent policy.
    pub fn validate(&self) -> Result<()> {
        self.check_basic()?;
        let per_side = (self.rows.min(self.cols) - 1) / 2;
        if per_side < self.min_periods_per_side {
            return Err(Error::ExtentTooSmall(format!(
                "{} periods per side, at least {} required",
                per_side, self.min_periods_per_side
            )));
        }
        Ok(())
    }

    pub fn row_pitch_nm(&self) -> f64 {
        self.lattice_constant_nm * SQRT3_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    #[default]
    S1,
    L3,
    /// Unperturbed lattice, for reference emitter runs.
    None,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectSpec {
    pub kind: DefectKind,
    /// Outward shift of the two end holes of an L3 defect.
    #[serde(default)]
    pub side_hole_shift_nm: f64,
}

impl DefectSpec {
    pub fn s1() -> Self {
        DefectSpec::default()
    }

    pub fn l3(side_hole_shift_nm: f64) -> Self {
        DefectSpec {
            kind: DefectKind::L3,
            side_hole_shift_nm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != DefectKind::L3 && self.side_hole_shift_nm != 0.0 {
            return Err(Error::invalid("side_hole_shift_nm", "only applies to an L3 defect"));
        }
        if !self.side_hole_shift_nm.is_finite() {
            return Err(Error::invalid("side_hole_shift_nm", "must be finite"));
        }
        Ok(())
    }
}

fn default_diamond_index() -> f64 {
    DEFAULT_DIAMOND_INDEX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NanocrystalPlacement {
    /// Sphere center relative to the defect center.
    pub center_nm: [f64; 3],
    pub diameter_nm: f64,
    #[serde(default = "default_diamond_index")]
    pub index: f64,
}

impl NanocrystalPlacement {
    pub fn validate(&self) -> Result<()> {
        if !(self.diameter_nm >= 0.0 && self.diameter_nm.is_finite()) {
            return Err(Error::invalid("nanocrystal.diameter_nm", "must be non-negative"));
        }
        if !(self.index >= 1.0 && self.index.is_finite()) {
            return Err(Error::invalid("nanocrystal.index", "must be at least 1"));
        }
        Ok(())
    }

    fn radius(&self) -> f64 {
        self.diameter_nm / 2.0
    }
}

fn default_padding() -> f64 {
    150.0
}
fn default_air() -> f64 {
    500.0
}
fn default_pml_cells() -> usize {
    10
}

/// Simulation box around the lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// Unpatterned slab between the outermost holes and the absorbing layer.
    #[serde(default = "default_padding")]
    pub padding_nm: f64,
    /// Air above and below the slab, excluding the absorbing layer.
    #[serde(default = "default_air")]
    pub air_nm: f64,
    #[serde(default = "default_pml_cells")]
    pub pml_cells: usize,
    /// Explicit full domain size; derived from the lattice when absent.
    #[serde(default)]
    pub extent_nm: Option<[f64; 3]>,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec {
            padding_nm: default_padding(),
            air_nm: default_air(),
            pml_cells: default_pml_cells(),
            extent_nm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityDesign {
    #[serde(default)]
    pub name: String,
    pub lattice: LatticeSpec,
    #[serde(default)]
    pub defect: DefectSpec,
    #[serde(default)]
    pub nanocrystal: Option<NanocrystalPlacement>,
    #[serde(default)]
    pub domain: DomainSpec,
}

impl CavityDesign {
    /// The default S1 design: a = 200 nm, r/a = 0.3, 120 nm GaP membrane.
    pub fn default_s1() -> Self {
        CavityDesign {
            name: "s1-default".into(),
            lattice: LatticeSpec::default(),
            defect: DefectSpec::s1(),
            nanocrystal: None,
            domain: DomainSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        self.defect.validate()?;
        if let Some(nc) = &self.nanocrystal {
            nc.validate()?;
        }
        if !(self.domain.padding_nm >= 0.0) || !(self.domain.air_nm > 0.0) {
            return Err(Error::DomainTooSmall(
                "padding_nm must be >= 0 and air_nm > 0".into(),
            ));
        }
        Ok(())
    }

    /// Mirror symmetric in x and y (and z), absent a nanocrystal.
    pub fn is_mirror_symmetric(&self) -> bool {
        self.lattice.truncation == Truncation::Symmetric && self.nanocrystal.is_none()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let d: CavityDesign = toml::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        d.validate()?;
        Ok(d)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }
}

/// Hole centers of the lattice with the defect sites removed, sorted by
/// `(y, x)`.
pub fn hole_positions(lattice: &LatticeSpec, defect: &DefectSpec) -> Result<Vec<[f64; 2]>> {
    lattice.check_basic()?;
    defect.validate()?;
    let min_cols = match defect.kind {
        DefectKind::S1 | DefectKind::None => 3,
        DefectKind::L3 => 5,
    };
    if lattice.rows < 3 || lattice.cols < min_cols {
        return Err(Error::ExtentTooSmall(format!(
            "{}x{} cannot hold a {:?} defect plus one ring of holes",
            lattice.rows, lattice.cols, defect.kind
        )));
    }

    let a = lattice.lattice_constant_nm;
    let half_rows = (lattice.rows / 2) as i64;
    let half_cols = (lattice.cols / 2) as i64;
    let mut holes = Vec::with_capacity(lattice.rows * lattice.cols);
    for jr in -half_rows..=half_rows {
        let y = jr as f64 * lattice.row_pitch_nm();
        let offset_row = jr.rem_euclid(2) == 1;
        let columns: Vec<f64> = match (offset_row, lattice.truncation) {
            (false, _) => (-half_cols..=half_cols).map(|i| i as f64).collect(),
            (true, Truncation::Rectangular) => {
                let shift = if jr > 0 { 0.5 } else { -0.5 };
                (-half_cols..=half_cols).map(|i| i as f64 + shift).collect()
            }
            (true, Truncation::Symmetric) => {
                (-half_cols..half_cols).map(|i| i as f64 + 0.5).collect()
            }
        };
        for c in columns {
            if jr == 0 {
                let ic = c as i64;
                let removed = match defect.kind {
                    DefectKind::S1 => ic == 0,
                    DefectKind::L3 => ic.abs() <= 1,
                    DefectKind::None => false,
                };
                if removed {
                    continue;
                }
                if defect.kind == DefectKind::L3 && ic.abs() == 2 {
                    let x = c.signum() * (2.0 * a + defect.side_hole_shift_nm);
                    holes.push([x, y]);
                    continue;
                }
            }
            holes.push([c * a, y]);
        }
    }
    holes.sort_by(|p, q| p[1].total_cmp(&q[1]).then(p[0].total_cmp(&q[0])));
    Ok(holes)
}

/// Centers of the holes in the first ring around the defect.
pub fn first_ring_holes(lattice: &LatticeSpec, defect: &DefectSpec) -> Result<Vec<[f64; 2]>> {
    let a = lattice.lattice_constant_nm;
    let holes = hole_positions(lattice, defect)?;
    let nearest = holes
        .iter()
        .map(|h| h[0].hypot(h[1]))
        .fold(f64::INFINITY, f64::min);
    Ok(holes
        .into_iter()
        .filter(|h| h[0].hypot(h[1]) < nearest + 0.25 * a)
        .collect())
}

/// Electric-field component locations on the staggered grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Relative permittivity sampled at the staggered E-field locations.
///
/// Node `(i, j, k)` sits at `origin + (i, j, k) * cell`. The sample of
/// component `c` at index `(i, j, k)` sits half a cell further along `c`.
/// Each component array uses the node layout `(nx+1) x (ny+1) x (nz+1)`,
/// k fastest; entries past the last valid staggered index are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct PermittivityGrid {
    cell_nm: f64,
    dims: [usize; 3],
    origin_nm: [f64; 3],
    eps: [Vec<f64>; 3],
    /// Absorbing-layer thickness reserved at the (low, high) face of each axis.
    pml_margin: [[usize; 2]; 3],
    inclusions: Vec<NanocrystalPlacement>,
}

impl PermittivityGrid {
    pub fn vacuum(dims: [usize; 3], cell_nm: f64, origin_nm: [f64; 3]) -> Self {
        let n = (dims[0] + 1) * (dims[1] + 1) * (dims[2] + 1);
        PermittivityGrid {
            cell_nm,
            dims,
            origin_nm,
            eps: [vec![1.0; n], vec![1.0; n], vec![1.0; n]],
            pml_margin: [[0; 2]; 3],
            inclusions: Vec::new(),
        }
    }

    /// Grid whose samples are the cell average of `material` (relative
    /// permittivity as a function of position in nm), using `supersample`
    /// points per axis.
    pub fn from_material<F>(
        dims: [usize; 3],
        cell_nm: f64,
        origin_nm: [f64; 3],
        supersample: usize,
        material: F,
    ) -> Self
    where
        F: Fn([f64; 3]) -> f64,
    {
        let mut grid = Self::vacuum(dims, cell_nm, origin_nm);
        let n = supersample.max(1);
        let offsets: Vec<f64> = (0..n).map(|s| ((s as f64 + 0.5) / n as f64 - 0.5) * cell_nm).collect();
        let norm = (n * n * n) as f64;
        for axis in Axis::ALL {
            for idx in 0..grid.len() {
                let p = grid.sample_position(axis, idx);
                let mut acc = 0.0;
                for &dx in &offsets {
                    for &dy in &offsets {
                        for &dz in &offsets {
                            acc += material([p[0] + dx, p[1] + dy, p[2] + dz]);
                        }
                    }
                }
                grid.eps[axis.index()][idx] = acc / norm;
            }
        }
        grid
    }

    pub fn cell_nm(&self) -> f64 {
        self.cell_nm
    }
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn origin_nm(&self) -> [f64; 3] {
        self.origin_nm
    }
    pub fn pml_margin(&self) -> [[usize; 2]; 3] {
        self.pml_margin
    }
    pub fn set_pml_margin(&mut self, margin: [[usize; 2]; 3]) {
        self.pml_margin = margin;
    }
    pub fn inclusions(&self) -> &[NanocrystalPlacement] {
        &self.inclusions
    }

    /// Number of entries per component array.
    pub fn len(&self) -> usize {
        self.eps[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * (self.dims[1] + 1) + j) * (self.dims[2] + 1) + k
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> [usize; 3] {
        let nz = self.dims[2] + 1;
        let ny = self.dims[1] + 1;
        [idx / (ny * nz), (idx / nz) % ny, idx % nz]
    }

    /// Whether `(i, j, k)` is a real sample of component `axis`.
    pub fn is_valid(&self, axis: Axis, i: usize, j: usize, k: usize) -> bool {
        let ijk = [i, j, k];
        (0..3).all(|d| {
            if d == axis.index() {
                ijk[d] < self.dims[d]
            } else {
                ijk[d] <= self.dims[d]
            }
        })
    }

    pub fn eps(&self, axis: Axis) -> &[f64] {
        &self.eps[axis.index()]
    }

    pub fn eps_mut(&mut self, axis: Axis) -> &mut [f64] {
        &mut self.eps[axis.index()]
    }

    pub fn eps_at(&self, axis: Axis, i: usize, j: usize, k: usize) -> f64 {
        self.eps[axis.index()][self.index(i, j, k)]
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = self.cell_nm;
        [
            self.origin_nm[0] + i as f64 * h,
            self.origin_nm[1] + j as f64 * h,
            self.origin_nm[2] + k as f64 * h,
        ]
    }

    pub fn sample_position(&self, axis: Axis, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.unindex(idx);
        let mut p = self.node_position(i, j, k);
        p[axis.index()] += 0.5 * self.cell_nm;
        p
    }

    /// Continuous grid coordinate (in cells, relative to node 0) of `p`.
    pub fn to_grid_coords(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.origin_nm[0]) / self.cell_nm,
            (p[1] - self.origin_nm[1]) / self.cell_nm,
            (p[2] - self.origin_nm[2]) / self.cell_nm,
        ]
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let g = self.to_grid_coords(p);
        (0..3).all(|d| g[d] >= 0.0 && g[d] <= self.dims[d] as f64)
    }

    /// Whether `p` lies inside the region reserved for absorbing layers.
    pub fn in_pml(&self, p: [f64; 3]) -> bool {
        let g = self.to_grid_coords(p);
        (0..3).any(|d| {
            let [lo, hi] = self.pml_margin[d];
            (lo > 0 && g[d] < lo as f64) || (hi > 0 && g[d] > (self.dims[d] - hi) as f64)
        })
    }

    /// Permittivity at the nearest node, averaged over the adjacent staggered
    /// samples of all three components.
    pub fn eps_at_node(&self, i: usize, j: usize, k: usize) -> f64 {
        let ijk = [i, j, k];
        let mut acc = 0.0;
        let mut n = 0.0;
        for axis in Axis::ALL {
            let d = axis.index();
            let mut lo = ijk;
            if ijk[d] < self.dims[d] {
                acc += self.eps_at(axis, lo[0], lo[1], lo[2]);
                n += 1.0;
            }
            if ijk[d] > 0 {
                lo[d] -= 1;
                acc += self.eps_at(axis, lo[0], lo[1], lo[2]);
                n += 1.0;
            }
        }
        acc / n
    }

    /// Volume (nm^3) occupied by material of index `n_material`, estimated from
    /// the averaged samples of each component and averaged over components.
    pub fn dielectric_volume_nm3(&self, n_material: f64) -> f64 {
        let contrast = n_material * n_material - 1.0;
        let cell3 = self.cell_nm.powi(3);
        let mut total = 0.0;
        for axis in Axis::ALL {
            let eps = self.eps(axis);
            let mut acc = 0.0;
            for (idx, &e) in eps.iter().enumerate() {
                let [i, j, k] = self.unindex(idx);
                if self.is_valid(axis, i, j, k) {
                    acc += (e - 1.0) / contrast;
                }
            }
            total += acc * cell3;
        }
        total / 3.0
    }

    /// Largest absolute difference between the grid and its mirror image
    /// through the center plane normal to `axis`.
    pub fn mirror_asymmetry(&self, axis: Axis) -> f64 {
        let d = axis.index();
        let n = self.dims[d];
        let mut worst: f64 = 0.0;
        for comp in Axis::ALL {
            let eps = self.eps(comp);
            for (idx, &e) in eps.iter().enumerate() {
                let [i, j, k] = self.unindex(idx);
                if !self.is_valid(comp, i, j, k) {
                    continue;
                }
                let mut m = [i, j, k];
                m[d] = if comp == axis { n - 1 - m[d] } else { n - m[d] };
                let other = eps[self.index(m[0], m[1], m[2])];
                worst = worst.max((e - other).abs());
            }
        }
        worst
    }

    /// Crops the grid to the upper half along each selected axis, starting at
    /// the center node plane. The cropped face carries no absorbing margin.
    pub fn half_domain(&self, axes: [bool; 3]) -> Result<PermittivityGrid> {
        let mut start = [0usize; 3];
        let mut dims = self.dims;
        for d in 0..3 {
            if axes[d] {
                if self.dims[d] % 2 != 0 {
                    return Err(Error::invalid("half_domain", "axis has an odd cell count"));
                }
                start[d] = self.dims[d] / 2;
                dims[d] = self.dims[d] - start[d];
            }
        }
        let origin = self.node_position(start[0], start[1], start[2]);
        let mut out = PermittivityGrid::vacuum(dims, self.cell_nm, origin);
        for axis in Axis::ALL {
            for i in 0..=dims[0] {
                for j in 0..=dims[1] {
                    for k in 0..=dims[2] {
                        let v = self.eps_at(axis, i + start[0], j + start[1], k + start[2]);
                        let o = out.index(i, j, k);
                        out.eps[axis.index()][o] = v;
                    }
                }
            }
        }
        out.pml_margin = self.pml_margin;
        for d in 0..3 {
            if axes[d] {
                out.pml_margin[d][0] = 0;
            }
        }
        out.inclusions = self.inclusions.clone();
        Ok(out)
    }

    /// Overwrites every sample with a constant.
    pub fn fill(&mut self, value: f64) {
        for arr in &mut self.eps {
            arr.iter_mut().for_each(|e| *e = value);
        }
    }
}

/// Resolution and supersampling controls for rasterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterOptions {
    /// Largest allowed cell size as a fraction of the lattice constant.
    pub max_cell_fraction: f64,
    /// Sub-samples per axis for in-plane hole coverage of boundary cells.
    pub supersample_2d: usize,
    /// Sub-samples per axis for sphere coverage of boundary cells.
    pub supersample_3d: usize,
}

impl Default for RasterOptions {
    fn default() -> Self {
        RasterOptions {
            max_cell_fraction: 0.1,
            supersample_2d: 24,
            supersample_3d: 10,
        }
    }
}

pub fn build_permittivity(design: &CavityDesign, cell_nm: f64) -> Result<PermittivityGrid> {
    build_permittivity_with(design, cell_nm, &RasterOptions::default())
}

pub fn build_permittivity_with(
    design: &CavityDesign,
    cell_nm: f64,
    opts: &RasterOptions,
) -> Result<PermittivityGrid> {
    design.validate()?;
    let lat = &design.lattice;
    let a = lat.lattice_constant_nm;
    if !(cell_nm > 0.0) || cell_nm > opts.max_cell_fraction * a + 1e-12 {
        return Err(Error::invalid(
            "cell_nm",
            format!("must be in (0, {}] for a = {a} nm", opts.max_cell_fraction * a),
        ));
    }
    let holes = hole_positions(lat, &design.defect)?;
    let r = lat.hole_radius_nm;
    let (mut xmax, mut ymax) = (0.0f64, 0.0f64);
    for h in &holes {
        xmax = xmax.max(h[0].abs());
        ymax = ymax.max(h[1].abs());
    }
    let dom = &design.domain;
    let pml = dom.pml_cells;
    let needed = [
        xmax + r + dom.padding_nm,
        ymax + r + dom.padding_nm,
        lat.slab_thickness_nm / 2.0 + dom.air_nm,
    ];
    let mut half = [0usize; 3];
    for d in 0..3 {
        let cells = (needed[d] / cell_nm - 1e-9).ceil() as usize;
        half[d] = match dom.extent_nm {
            None => cells + pml,
            Some(ext) => {
                let avail = (ext[d] / 2.0 / cell_nm + 1e-9).floor() as usize;
                if avail < cells + pml {
                    return Err(Error::DomainTooSmall(format!(
                        "axis {d}: {} nm cannot hold {:.1} nm of structure plus {pml} absorbing cells",
                        ext[d],
                        2.0 * needed[d]
                    )));
                }
                avail
            }
        };
        if half[d] < pml + 2 {
            return Err(Error::DomainTooSmall(format!("axis {d} has no interior")));
        }
    }
    let dims = [2 * half[0], 2 * half[1], 2 * half[2]];
    let origin = [
        -(half[0] as f64) * cell_nm,
        -(half[1] as f64) * cell_nm,
        -(half[2] as f64) * cell_nm,
    ];
    let mut grid = PermittivityGrid::vacuum(dims, cell_nm, origin);
    grid.pml_margin = [[pml, pml]; 3];

    let finder = HoleFinder::new(&holes, r, a);
    let n2 = lat.slab_index * lat.slab_index;
    let t2 = lat.slab_thickness_nm / 2.0;
    let (nx, ny, nz) = (dims[0] + 1, dims[1] + 1, dims[2] + 1);

    for axis in Axis::ALL {
        let sx = if axis == Axis::X { 0.5 } else { 0.0 };
        let sy = if axis == Axis::Y { 0.5 } else { 0.0 };
        let sz = if axis == Axis::Z { 0.5 } else { 0.0 };
        // In-plane solid fraction, then separable slab fraction along z.
        let mut solid = vec![0.0; nx * ny];
        for i in 0..nx {
            let x = origin[0] + (i as f64 + sx) * cell_nm;
            for j in 0..ny {
                let y = origin[1] + (j as f64 + sy) * cell_nm;
                solid[i * ny + j] = 1.0 - finder.coverage(x, y, cell_nm, opts.supersample_2d);
            }
        }
        let zfrac: Vec<f64> = (0..nz)
            .map(|k| {
                let z = origin[2] + (k as f64 + sz) * cell_nm;
                let lo = (z - cell_nm / 2.0).max(-t2);
                let hi = (z + cell_nm / 2.0).min(t2);
                ((hi - lo) / cell_nm).max(0.0)
            })
            .collect();
        let eps = &mut grid.eps[axis.index()];
        for (ij, s) in solid.iter().enumerate() {
            let base = ij * nz;
            for (k, fz) in zfrac.iter().enumerate() {
                eps[base + k] = 1.0 + (n2 - 1.0) * fz * s;
            }
        }
    }

    if let Some(nc) = &design.nanocrystal {
        grid = place_nanocrystal_with(&grid, nc, opts)?;
    }
    Ok(grid)
}

/// Blends a dielectric sphere into the grid by volume fraction.
pub fn place_nanocrystal(
    grid: &PermittivityGrid,
    placement: &NanocrystalPlacement,
) -> Result<PermittivityGrid> {
    place_nanocrystal_with(grid, placement, &RasterOptions::default())
}

pub fn place_nanocrystal_with(
    grid: &PermittivityGrid,
    placement: &NanocrystalPlacement,
    opts: &RasterOptions,
) -> Result<PermittivityGrid> {
    placement.validate()?;
    let c = placement.center_nm;
    if !grid.contains(c) {
        return Err(Error::OutOfDomain {
            what: "nanocrystal",
            x: c[0],
            y: c[1],
            z: c[2],
            place: "outside the grid",
        });
    }
    let rad = placement.radius();
    // Bounding box must stay clear of the absorbing layers.
    for d in 0..3 {
        for s in [-1.0, 1.0] {
            let mut p = c;
            p[d] += s * rad;
            if !grid.contains(p) || grid.in_pml(p) {
                return Err(Error::OutOfDomain {
                    what: "nanocrystal",
                    x: c[0],
                    y: c[1],
                    z: c[2],
                    place: "overlapping the absorbing layer",
                });
            }
        }
    }
    let mut out = grid.clone();
    if rad == 0.0 || grid.inclusions.iter().any(|p| p == placement) {
        return Ok(out);
    }
    let h = grid.cell_nm;
    let n2 = placement.index * placement.index;
    let n = opts.supersample_3d.max(1);
    let offsets: Vec<f64> = (0..n).map(|s| ((s as f64 + 0.5) / n as f64 - 0.5) * h).collect();
    let half_diag = 0.5 * 3f64.sqrt() * h;
    let dims = grid.dims;
    for axis in Axis::ALL {
        let shift = |d: usize| if d == axis.index() { 0.5 } else { 0.0 };
        let range = |d: usize| {
            let lo = ((c[d] - rad - grid.origin_nm[d]) / h - shift(d) - 1.0).floor().max(0.0) as usize;
            let hi = (((c[d] + rad - grid.origin_nm[d]) / h - shift(d) + 1.0).ceil() as usize).min(dims[d]);
            lo..=hi
        };
        for i in range(0) {
            for j in range(1) {
                for k in range(2) {
                    let idx = grid.index(i, j, k);
                    let p = grid.sample_position(axis, idx);
                    let dist = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt();
                    let frac = if dist + half_diag <= rad {
                        1.0
                    } else if dist - half_diag >= rad {
                        continue;
                    } else {
                        let mut inside = 0usize;
                        let r2 = rad * rad;
                        for &dx in &offsets {
                            let ex = p[0] + dx - c[0];
                            for &dy in &offsets {
                                let ey = p[1] + dy - c[1];
                                for &dz in &offsets {
                                    let ez = p[2] + dz - c[2];
                                    if ex * ex + ey * ey + ez * ez <= r2 {
                                        inside += 1;
                                    }
                                }
                            }
                        }
                        inside as f64 / (n * n * n) as f64
                    };
                    let e = &mut out.eps[axis.index()][idx];
                    *e = (1.0 - frac) * *e + frac * n2;
                }
            }
        }
    }
    out.inclusions.push(placement.clone());
    Ok(out)
}

/// Bucketed lookup of hole coverage for in-plane cells.
struct HoleFinder<'a> {
    holes: &'a [[f64; 2]],
    radius: f64,
    bucket: f64,
    origin: [f64; 2],
    shape: [usize; 2],
    bins: Vec<Vec<usize>>,
}

impl<'a> HoleFinder<'a> {
    fn new(holes: &'a [[f64; 2]], radius: f64, bucket: f64) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for h in holes {
            for d in 0..2 {
                lo[d] = lo[d].min(h[d]);
                hi[d] = hi[d].max(h[d]);
            }
        }
        if holes.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let shape = [
            ((hi[0] - lo[0]) / bucket) as usize + 1,
            ((hi[1] - lo[1]) / bucket) as usize + 1,
        ];
        let mut bins = vec![Vec::new(); shape[0] * shape[1]];
        for (n, h) in holes.iter().enumerate() {
            let bx = ((h[0] - lo[0]) / bucket) as usize;
            let by = ((h[1] - lo[1]) / bucket) as usize;
            bins[bx.min(shape[0] - 1) * shape[1] + by.min(shape[1] - 1)].push(n);
        }
        HoleFinder {
            holes,
            radius,
            bucket,
            origin: lo,
            shape,
            bins,
        }
    }

    /// Fraction of the square of side `h` centered at `(x, y)` covered by holes.
    fn coverage(&self, x: f64, y: f64, h: f64, n: usize) -> f64 {
        if self.radius == 0.0 || self.holes.is_empty() {
            return 0.0;
        }
        let reach = self.radius + h;
        let bx = ((x - self.origin[0]) / self.bucket).floor() as i64;
        let by = ((y - self.origin[1]) / self.bucket).floor() as i64;
        let span = (reach / self.bucket).ceil() as i64 + 1;
        let half_diag = h * std::f64::consts::FRAC_1_SQRT_2;
        let mut partial: Vec<[f64; 2]> = Vec::new();
        for ix in (bx - span).max(0)..=(bx + span).min(self.shape[0] as i64 - 1) {
            for iy in (by - span).max(0)..=(by + span).min(self.shape[1] as i64 - 1) {
                for &n in &self.bins[ix as usize * self.shape[1] + iy as usize] {
                    let c = self.holes[n];
                    let d = (x - c[0]).hypot(y - c[1]);
                    if d + half_diag <= self.radius {
                        return 1.0;
                    }
                    if d - half_diag < self.radius {
                        partial.push(c);
                    }
                }
            }
        }
        if partial.is_empty() {
            return 0.0;
        }
        let r2 = self.radius * self.radius;
        let mut covered = 0usize;
        for sx in 0..n {
            let px = x + ((sx as f64 + 0.5) / n as f64 - 0.5) * h;
            for sy in 0..n {
                let py = y + ((sy as f64 + 0.5) / n as f64 - 0.5) * h;
                if partial
                    .iter()
                    .any(|c| (px - c[0]).powi(2) + (py - c[1]).powi(2) <= r2)
                {
                    covered += 1;
                }
            }
        }
        covered as f64 / (n * n) as f64
    }
}
