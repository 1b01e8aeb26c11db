//! Time integration of `∂u/∂t = L u` with conservation and homogenization
//! diagnostics.

use std::io::Write;

use thiserror::Error;

use crate::assembly::GeneratorOperator;
use crate::field::Vec3;
use crate::grid::{FieldSamples, Grid, GridScalar};
use crate::krylov::{cg_solve_observed, CgOptions, KrylovError, LinearOperator};
use crate::par;
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("initial state must be finite and nonnegative with positive mass: {0}")]
    InvalidInitial(String),
    #[error("non-finite value after step {step}")]
    NonFinite { step: usize },
    #[error("implicit solve failed at step {step}: {source}")]
    Solver {
        step: usize,
        #[source]
        source: KrylovError,
    },
    #[error("invalid evolution settings: {0}")]
    InvalidSettings(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Heun's method.
    ExplicitRk2,
    ImplicitEuler,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ExplicitRk2 => "explicit_rk2",
            Scheme::ImplicitEuler => "implicit_euler",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        match s {
            "explicit_rk2" => Some(Scheme::ExplicitRk2),
            "implicit_euler" => Some(Scheme::ImplicitEuler),
            _ => None,
        }
    }
}

/// Recommended explicit step `h_min² / (6 sup|w|²)`.
pub fn cfl_dt(grid: &Grid, samples: &FieldSamples) -> f64 {
    let sup = samples.samples.iter().map(|s| s.w.norm_squared()).fold(0.0, f64::max);
    grid.h_min().powi(2) / (6.0 * sup)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_final: f64,
    /// Keep a snapshot every `stride` steps (and the final state); 0 keeps
    /// only the initial and final states.
    pub stride: usize,
    /// Axis normal to the leaves of an integrable field, for per-leaf
    /// diagnostics.
    pub leaf_axis: Option<usize>,
    /// Relative tolerance of the implicit solves.
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            scheme: Scheme::ExplicitRk2,
            dt: 1e-3,
            t_final: 1.0,
            stride: 0,
            leaf_axis: None,
            solver_tol: 1e-12,
            solver_max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub step: usize,
    pub time: f64,
    /// `Σ u ΔV`
    pub mass: f64,
    /// `∫ (u − ū)² dV`
    pub variance: f64,
    /// `Σ u² ΔV`
    pub energy: f64,
    /// Mass of each leaf, when a leaf axis is set.
    pub leaf_masses: Vec<f64>,
    /// Total in-leaf variance, when a leaf axis is set.
    pub in_leaf_variance: Option<f64>,
    /// CG iterations of the implicit solve for this step.
    pub solver_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub state: GridScalar,
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<Diagnostics>,
    pub final_state: GridScalar,
    /// Whether implicit steps ran plain CG (symmetric generator) or CG on the
    /// normal equations.
    pub normal_equations: bool,
}

impl EvolutionResult {
    /// CSV with `step,time,mass,variance,energy` and, with a leaf axis,
    /// `in_leaf_variance,leaf_0,…`.
    pub fn write_diagnostics_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let leaves = self.diagnostics.first().map_or(0, |d| d.leaf_masses.len());
        write!(out, "step,time,mass,variance,energy")?;
        if leaves > 0 {
            write!(out, ",in_leaf_variance")?;
            for i in 0..leaves {
                write!(out, ",leaf_{i}")?;
            }
        }
        writeln!(out)?;
        for d in &self.diagnostics {
            write!(out, "{},{:e},{:e},{:e},{:e}", d.step, d.time, d.mass, d.variance, d.energy)?;
            if let Some(v) = d.in_leaf_variance {
                write!(out, ",{v:e}")?;
                for m in &d.leaf_masses {
                    write!(out, ",{m:e}")?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// `exp(−|x − c|²/(2σ²))` with periodic images on periodic axes.
pub fn gaussian_blob(grid: Grid, center: Vec3, sigma: f64) -> GridScalar {
    let extent = grid.extent();
    let images: [Vec<f64>; 3] = [0, 1, 2].map(|d| {
        if grid.is_periodic(d) {
            vec![-extent[d], 0.0, extent[d]]
        } else {
            vec![0.0]
        }
    });
    GridScalar::from_fn(grid, |p| {
        let mut s = 0.0;
        for ox in &images[0] {
            for oy in &images[1] {
                for oz in &images[2] {
                    let d = p - center - Vec3::new(*ox, *oy, *oz);
                    s += (-d.norm_squared() / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        s
    })
}

/// Scales `u` to unit mass after validating it.
pub fn normalize(u: &GridScalar) -> Result<GridScalar, DiffusionError> {
    if let Some(v) = u.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(DiffusionError::InvalidInitial(format!("value {v}")));
    }
    let mass = u.integral();
    if mass <= 0.0 {
        return Err(DiffusionError::InvalidInitial("zero mass".into()));
    }
    Ok(GridScalar {
        grid: u.grid,
        values: u.values.iter().map(|v| v / mass).collect(),
    })
}

fn diagnostics(u: &GridScalar, step: usize, time: f64, leaf_axis: Option<usize>, iters: usize) -> Diagnostics {
    let dv = u.grid.cell_volume();
    Diagnostics {
        step,
        time,
        mass: par::sum(&u.values) * dv,
        variance: u.variance(),
        energy: par::dot(&u.values, &u.values) * dv,
        leaf_masses: leaf_axis.map_or_else(Vec::new, |a| u.plane_integrals(a)),
        in_leaf_variance: leaf_axis.map(|a| u.in_plane_variance(a)),
        solver_iterations: iters,
    }
}

/// `MᵀM` for CG on the normal equations.
struct Normal<'a> {
    m: &'a CsrMatrix,
    mt: CsrMatrix,
}

impl LinearOperator for Normal<'_> {
    fn dim(&self) -> usize {
        self.m.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let t = self.m.mul(x);
        self.mt.matvec(&t, y);
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.m.dim())
            .map(|j| self.mt.row(j).map(|(_, v)| v * v).sum())
            .collect()
    }

    fn inf_norm(&self) -> f64 {
        self.m.inf_norm() * self.mt.inf_norm()
    }
}

/// Integrates from the normalized `u0` to `t_final` (the last step is
/// shortened to land on it).
pub fn evolve(
    u0: &GridScalar,
    generator: &GeneratorOperator,
    opts: &EvolveOptions,
) -> Result<EvolutionResult, DiffusionError> {
    if !(opts.dt > 0.0 && opts.t_final >= 0.0) {
        return Err(DiffusionError::InvalidSettings(format!(
            "dt = {}, T = {}",
            opts.dt, opts.t_final
        )));
    }
    if u0.grid != generator.grid {
        return Err(DiffusionError::InvalidSettings("initial state and operator grids differ".into()));
    }
    if let Some(a) = opts.leaf_axis {
        if a > 2 {
            return Err(DiffusionError::InvalidSettings(format!("leaf axis {a}")));
        }
    }
    let l = &generator.matrix;
    let n = l.dim();
    let mut u = normalize(u0)?;
    let steps = ((opts.t_final / opts.dt) - 1e-9).ceil().max(0.0) as usize;

    let symmetric = l.max_asymmetry() <= 1e-12 * l.max_abs().max(f64::MIN_POSITIVE);
    let system = |dt: f64| CsrMatrix::identity(n).add_scaled(1.0, l, -dt);
    let mut cached: Option<(f64, CsrMatrix, Option<CsrMatrix>)> = None;

    let mut result = EvolutionResult {
        snapshots: vec![Snapshot {
            step: 0,
            time: 0.0,
            state: u.clone(),
        }],
        diagnostics: vec![diagnostics(&u, 0, 0.0, opts.leaf_axis, 0)],
        final_state: u.clone(),
        normal_equations: opts.scheme == Scheme::ImplicitEuler && !symmetric,
    };
    let mut time = 0.0;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    for step in 1..=steps {
        let dt = opts.dt.min(opts.t_final - time);
        let mut iters = 0;
        match opts.scheme {
            Scheme::ExplicitRk2 => {
                l.matvec(&u.values, &mut k1);
                let mut stage = u.values.clone();
                par::axpy(dt, &k1, &mut stage);
                l.matvec(&stage, &mut k2);
                par::axpy(0.5 * dt, &k1, &mut u.values);
                par::axpy(0.5 * dt, &k2, &mut u.values);
            }
            Scheme::ImplicitEuler => {
                if cached.as_ref().is_none_or(|c| c.0 != dt) {
                    let m = system(dt);
                    let mt = (!symmetric).then(|| m.transpose());
                    cached = Some((dt, m, mt));
                }
                let (_, m, mt) = cached.as_ref().expect("set above");
                // Unpreconditioned CG from the previous state keeps every
                // update in the span of zero-sum vectors, so mass is exact.
                let cg = CgOptions {
                    tol: opts.solver_tol,
                    max_iter: opts.solver_max_iter,
                    jacobi: false,
                    incompatible_tol: f64::INFINITY,
                };
                let solved = match mt {
                    None => cg_solve_observed(m, &u.values, Some(&u.values), &cg, None, |_, _, _| {}),
                    Some(mt) => {
                        let normal = Normal { m, mt: mt.clone() };
                        let rhs = mt.mul(&u.values);
                        cg_solve_observed(&normal, &rhs, Some(&u.values), &cg, None, |_, _, _| {})
                    }
                };
                let (x, stats) = solved.map_err(|source| DiffusionError::Solver { step, source })?;
                iters = stats.iterations;
                u.values = x;
            }
        }
        time = if step == steps { opts.t_final } else { time + dt };
        if u.values.iter().any(|v| !v.is_finite()) {
            return Err(DiffusionError::NonFinite { step });
        }
        result.diagnostics.push(diagnostics(&u, step, time, opts.leaf_axis, iters));
        if (opts.stride > 0 && step % opts.stride == 0) || step == steps {
            result.snapshots.push(Snapshot {
                step,
                time,
                state: u.clone(),
            });
        }
    }
    result.final_state = u;
    Ok(result)
}
