//! Cell-centered structured grids over a box, with per-axis boundary
//! conditions, field sampling and the discrete quadratic forms.

mod calculus;
mod io;

pub use calculus::{
    curl, derivative, divergence, gradient, inner_products, second_derivative, Ghost,
    InnerProducts,
};
pub use io::{read_olap, write_olap, OlapData, OlapKind, OLAP_MAGIC, OLAP_VERSION};

use rayon::prelude::*;
use thiserror::Error;

use crate::field::{
    sample_geometry_lenient, Axis, FieldError, GeometrySample, Vec3, VectorField, DEFAULT_W_MIN,
};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid configuration: {0}")]
    InvalidConfig(String),
    #[error("field sampling failed at point #{index}: {source}")]
    Field {
        index: usize,
        #[source]
        source: FieldError,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    Periodic,
    /// Homogeneous Dirichlet, imposed through odd-reflection ghosts.
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OriginMode {
    /// Box is `[0, L]` per axis.
    Corner,
    /// Box is `[-L/2, L/2]` per axis.
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub cells: [usize; 3],
    pub extent: [f64; 3],
    pub origin: OriginMode,
    pub bc: [Boundary; 3],
}

impl GridConfig {
    pub fn new(cells: [usize; 3], extent: [f64; 3], origin: OriginMode, bc: [Boundary; 3]) -> Self {
        GridConfig {
            cells,
            extent,
            origin,
            bc,
        }
    }

    pub fn cube(n: usize, length: f64, origin: OriginMode, bc: Boundary) -> Self {
        GridConfig::new([n; 3], [length; 3], origin, [bc; 3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    cells: [usize; 3],
    extent: [f64; 3],
    lower: [f64; 3],
    spacing: [f64; 3],
    bc: [Boundary; 3],
}

/// Where fields are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Cells,
    /// Faces normal to the axis. Periodic axes have `n` faces (face `0` is
    /// shared with the upper end), bounded axes `n + 1`.
    Faces(Axis),
    /// Cell corners, `n + 1` per axis.
    Nodes,
}

pub fn build_grid(config: &GridConfig) -> Result<Grid, GridError> {
    for d in 0..3 {
        if config.cells[d] == 0 {
            return Err(GridError::InvalidConfig(format!("cells[{d}] must be positive")));
        }
        let l = config.extent[d];
        if !(l.is_finite() && l > 0.0) {
            return Err(GridError::InvalidConfig(format!(
                "extent[{d}] = {l} must be positive and finite"
            )));
        }
    }
    let lower = match config.origin {
        OriginMode::Corner => [0.0; 3],
        OriginMode::Center => config.extent.map(|l| -0.5 * l),
    };
    let spacing = [0, 1, 2].map(|d| config.extent[d] / config.cells[d] as f64);
    Ok(Grid {
        cells: config.cells,
        extent: config.extent,
        lower,
        spacing,
        bc: config.bc,
    })
}

impl Grid {
    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    pub fn extent(&self) -> [f64; 3] {
        self.extent
    }

    pub fn lower(&self) -> [f64; 3] {
        self.lower
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn bc(&self) -> [Boundary; 3] {
        self.bc
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.extent.iter().product()
    }

    pub fn diagonal(&self) -> f64 {
        self.extent.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    pub fn h_min(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.bc[axis] == Boundary::Periodic
    }

    pub fn fully_periodic(&self) -> bool {
        (0..3).all(|d| self.is_periodic(d))
    }

    /// Same box and boundary conditions with different cell counts.
    pub fn with_cells(&self, cells: [usize; 3]) -> Result<Grid, GridError> {
        let mut g = build_grid(&GridConfig::new(cells, self.extent, OriginMode::Corner, self.bc))?;
        g.lower = self.lower;
        Ok(g)
    }

    /// x-fastest linear index.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.cells[0] * (j + self.cells[1] * k)
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let nx = self.cells[0];
        let ny = self.cells[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn center(&self, idx: usize) -> Vec3 {
        let c = self.ijk(idx);
        Vec3::new(
            self.lower[0] + (c[0] as f64 + 0.5) * self.spacing[0],
            self.lower[1] + (c[1] as f64 + 0.5) * self.spacing[1],
            self.lower[2] + (c[2] as f64 + 0.5) * self.spacing[2],
        )
    }

    /// Neighbouring cell along `axis` in direction `dir` (±1); `None` across
    /// a non-periodic boundary.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, dir: isize) -> Option<usize> {
        let mut c = self.ijk(idx);
        let n = self.cells[axis];
        let pos = c[axis] as isize + dir;
        if pos < 0 || pos >= n as isize {
            if !self.is_periodic(axis) {
                return None;
            }
            c[axis] = pos.rem_euclid(n as isize) as usize;
        } else {
            c[axis] = pos as usize;
        }
        Some(self.index(c[0], c[1], c[2]))
    }

    /// Index dimensions of the point set at `loc`.
    pub fn location_dims(&self, loc: Location) -> [usize; 3] {
        match loc {
            Location::Cells => self.cells,
            Location::Nodes => self.cells.map(|n| n + 1),
            Location::Faces(axis) => {
                let a = axis.index();
                let mut d = self.cells;
                if !self.is_periodic(a) {
                    d[a] += 1;
                }
                d
            }
        }
    }

    pub fn points(&self, loc: Location) -> Vec<Vec3> {
        let dims = self.location_dims(loc);
        let n = dims.iter().product();
        (0..n)
            .map(|idx| {
                let c = [idx % dims[0], (idx / dims[0]) % dims[1], idx / (dims[0] * dims[1])];
                let mut p = Vec3::zeros();
                for d in 0..3 {
                    let staggered = match loc {
                        Location::Cells => false,
                        Location::Nodes => true,
                        Location::Faces(axis) => axis.index() == d,
                    };
                    let offset = if staggered { 0.0 } else { 0.5 };
                    p[d] = self.lower[d] + (c[d] as f64 + offset) * self.spacing[d];
                }
                p
            })
            .collect()
    }

    /// Index of the face below cell `(i, j, k)` along `axis` (`i == n` allowed
    /// on bounded axes for the top face).
    pub fn face_index(&self, axis: usize, c: [usize; 3]) -> usize {
        let mut dims = self.cells;
        let mut c = c;
        if self.is_periodic(axis) {
            c[axis] %= dims[axis];
        } else {
            dims[axis] += 1;
        }
        c[0] + dims[0] * (c[1] + dims[1] * c[2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridScalar {
    pub grid: Grid,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridVector {
    pub grid: Grid,
    pub values: Vec<Vec3>,
}

impl GridScalar {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<GridScalar, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::ShapeMismatch(format!(
                "{} values for {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridScalar { grid, values })
    }

    pub fn zeros(grid: Grid) -> GridScalar {
        GridScalar {
            values: vec![0.0; grid.len()],
            grid,
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&Vec3) -> f64 + Sync) -> GridScalar {
        let values = (0..grid.len()).into_par_iter().map(|i| f(&grid.center(i))).collect();
        GridScalar { grid, values }
    }

    /// `Σ u ΔV`
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// `∫ (u − ū)² dV` with `ū` the volume mean.
    pub fn variance(&self) -> f64 {
        let mean = self.integral() / self.grid.volume();
        self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * self.grid.cell_volume()
    }

    /// `∫ u dA dℓ` over each plane normal to `axis` (mass per leaf).
    pub fn plane_integrals(&self, axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.cells[axis]];
        for (idx, v) in self.values.iter().enumerate() {
            out[self.grid.ijk(idx)[axis]] += v;
        }
        let dv = self.grid.cell_volume();
        out.iter_mut().for_each(|m| *m *= dv);
        out
    }

    /// Sum over planes normal to `axis` of the in-plane variance.
    pub fn in_plane_variance(&self, axis: usize) -> f64 {
        let n = self.grid.cells[axis];
        let per_plane = (self.grid.len() / n) as f64;
        let mut means = vec![0.0; n];
        for (idx, v) in self.values.iter().enumerate() {
            means[self.grid.ijk(idx)[axis]] += v;
        }
        means.iter_mut().for_each(|m| *m /= per_plane);
        self.values
            .iter()
            .enumerate()
            .map(|(idx, v)| (v - means[self.grid.ijk(idx)[axis]]).powi(2))
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// Conservative block average onto a grid with `cells / factor` cells.
    pub fn coarsen(&self, factor: [usize; 3]) -> Result<GridScalar, GridError> {
        let c = self.grid.cells;
        if (0..3).any(|d| factor[d] == 0 || !c[d].is_multiple_of(factor[d])) {
            return Err(GridError::ShapeMismatch(format!(
                "cannot coarsen {c:?} by {factor:?}"
            )));
        }
        let coarse = self.grid.with_cells([0, 1, 2].map(|d| c[d] / factor[d]))?;
        let mut out = vec![0.0; coarse.len()];
        for (idx, v) in self.values.iter().enumerate() {
            let f = self.grid.ijk(idx);
            out[coarse.index(f[0] / factor[0], f[1] / factor[1], f[2] / factor[2])] += v;
        }
        let inv = 1.0 / (factor.iter().product::<usize>() as f64);
        out.iter_mut().for_each(|v| *v *= inv);
        Ok(GridScalar {
            grid: coarse,
            values: out,
        })
    }
}

impl GridVector {
    pub fn new(grid: Grid, values: Vec<Vec3>) -> Result<GridVector, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::ShapeMismatch(format!(
                "{} vectors for {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridVector { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&Vec3) -> Vec3 + Sync) -> GridVector {
        let values = (0..grid.len()).into_par_iter().map(|i| f(&grid.center(i))).collect();
        GridVector { grid, values }
    }

    pub fn component(&self, d: usize) -> GridScalar {
        GridScalar {
            grid: self.grid,
            values: self.values.iter().map(|v| v[d]).collect(),
        }
    }
}

/// Geometry sampled over one point set of a grid.
#[derive(Debug, Clone)]
pub struct FieldSamples {
    pub location: Location,
    pub points: Vec<Vec3>,
    pub samples: Vec<GeometrySample>,
    pub min_magnitude: f64,
    pub min_magnitude_at: usize,
    pub inf_abs_helicity: f64,
    pub sup_abs_helicity: f64,
}

impl FieldSamples {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn collect_samples(
    field: &dyn VectorField,
    loc: Location,
    points: Vec<Vec3>,
    strict: bool,
) -> Result<FieldSamples, GridError> {
    let results: Vec<Result<GeometrySample, FieldError>> = points
        .par_iter()
        .map(|p| sample_geometry_lenient(field, p, DEFAULT_W_MIN))
        .collect();
    let mut samples = Vec::with_capacity(results.len());
    for (index, r) in results.into_iter().enumerate() {
        let s = r.map_err(|source| GridError::Field { index, source })?;
        if strict {
            s.unit().map_err(|source| GridError::Field { index, source })?;
        }
        samples.push(s);
    }
    let mut min_magnitude = f64::INFINITY;
    let mut min_magnitude_at = 0;
    let mut inf_h = f64::INFINITY;
    let mut sup_h: f64 = 0.0;
    for (i, s) in samples.iter().enumerate() {
        if s.magnitude < min_magnitude {
            min_magnitude = s.magnitude;
            min_magnitude_at = i;
        }
        inf_h = inf_h.min(s.helicity.abs());
        sup_h = sup_h.max(s.helicity.abs());
    }
    Ok(FieldSamples {
        location: loc,
        points,
        samples,
        min_magnitude,
        min_magnitude_at,
        inf_abs_helicity: inf_h,
        sup_abs_helicity: sup_h,
    })
}

/// Samples the field geometry at `loc`; fails at the first point where the
/// field is near-null.
pub fn sample_on_grid(
    field: &dyn VectorField,
    grid: &Grid,
    loc: Location,
) -> Result<FieldSamples, GridError> {
    collect_samples(field, loc, grid.points(loc), true)
}

/// As [`sample_on_grid`] but keeps near-null points (their unit-field
/// quantities are `None`).
pub fn sample_on_grid_lenient(
    field: &dyn VectorField,
    grid: &Grid,
    loc: Location,
) -> Result<FieldSamples, GridError> {
    collect_samples(field, loc, grid.points(loc), false)
}

pub const DEFAULT_TANGENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceSetTangency {
    pub axis: Axis,
    pub side: Side,
    /// `max |n·ŵ|` over the face centers of this boundary plane.
    pub max_normal: f64,
    pub worst_point: Vec3,
    /// Face centers skipped because the field vanishes there.
    pub null_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangencyReport {
    pub faces: Vec<FaceSetTangency>,
    pub tolerance: f64,
}

impl TangencyReport {
    pub fn pass(&self) -> bool {
        self.faces.iter().all(|f| f.max_normal <= self.tolerance)
    }
}

/// Checks `n·ŵ = 0` on every non-periodic boundary plane.
pub fn tangency_report(
    field: &dyn VectorField,
    grid: &Grid,
    tolerance: f64,
) -> Result<TangencyReport, GridError> {
    let mut faces = Vec::new();
    for axis in Axis::ALL {
        let a = axis.index();
        if grid.is_periodic(a) {
            continue;
        }
        let samples = sample_on_grid_lenient(field, grid, Location::Faces(axis))?;
        let dims = grid.location_dims(Location::Faces(axis));
        for (side, plane) in [(Side::Low, 0), (Side::High, grid.cells[a])] {
            let mut set = FaceSetTangency {
                axis,
                side,
                max_normal: -1.0,
                worst_point: Vec3::zeros(),
                null_points: 0,
            };
            for (idx, s) in samples.samples.iter().enumerate() {
                let c = [idx % dims[0], (idx / dims[0]) % dims[1], idx / (dims[0] * dims[1])];
                if c[a] != plane {
                    continue;
                }
                match s.unit {
                    None => set.null_points += 1,
                    Some(u) => {
                        let v = u.direction[a].abs();
                        if v > set.max_normal {
                            set.max_normal = v;
                            set.worst_point = s.point;
                        }
                    }
                }
            }
            set.max_normal = set.max_normal.max(0.0);
            faces.push(set);
        }
    }
    Ok(TangencyReport { faces, tolerance })
}
