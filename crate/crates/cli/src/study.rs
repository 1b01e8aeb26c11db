//! Manufactured-solution convergence study for the orthogonal Poisson
//! problem.

use orthlap::assembly::{assemble_perp_laplacian, SymmetricSparseOperator};
use orthlap::expr::Expr;
use orthlap::field::FieldSpec;
use orthlap::grid::{sample_on_grid, Grid, GridScalar, Location};
use orthlap::krylov::{cg_solve, CgOptions, KrylovError};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub cells: [usize; 3],
    pub h: f64,
    pub l2_error: f64,
    pub linf_error: f64,
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub levels: Vec<Level>,
    /// `log2(e_k / e_{k+1})` of the L2 errors between consecutive levels.
    pub orders: Vec<f64>,
}

impl Study {
    /// CSV with header `cells,h,l2_error,linf_error,iterations,order`; the
    /// order column is empty on the first level.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cells,h,l2_error,linf_error,iterations,relative_residual,order\n");
        for (i, l) in self.levels.iter().enumerate() {
            let order = if i == 0 { String::new() } else { format!("{:.6}", self.orders[i - 1]) };
            s.push_str(&format!(
                "{}x{}x{},{:e},{:e},{:e},{},{:e},{order}\n",
                l.cells[0], l.cells[1], l.cells[2], l.h, l.l2_error, l.linf_error, l.iterations, l.relative_residual
            ));
        }
        s
    }
}

pub fn evaluate(expr: &Expr, grid: &Grid) -> Result<GridScalar, CliError> {
    let values = grid
        .points(Location::Cells)
        .iter()
        .map(|p| expr.eval(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(format!("evaluating {expr}: {e}")))?;
    Ok(GridScalar::new(*grid, values).expect("one value per cell"))
}

pub fn operator(field: &FieldSpec, grid: &Grid) -> Result<SymmetricSparseOperator, CliError> {
    let samples = sample_on_grid(field, grid, Location::Cells).map_err(|e| CliError::Config(e.to_string()))?;
    assemble_perp_laplacian(grid, &samples).map_err(|e| CliError::Config(e.to_string()))
}

/// Right-hand side of `−Δ⊥u = b` on `grid`: the operator of the grid
/// `refine` times finer applied to `exact`, averaged back onto `grid`.
pub fn manufactured_rhs(field: &FieldSpec, exact: &Expr, grid: &Grid, refine: usize) -> Result<Vec<f64>, CliError> {
    if refine < 2 {
        return Err(CliError::Config(format!("[problem] refine = {refine} must be at least 2")));
    }
    let fine = grid
        .with_cells(grid.cells().map(|n| n * refine))
        .map_err(|e| CliError::Config(e.to_string()))?;
    let a = operator(field, &fine)?;
    let u = evaluate(exact, &fine)?;
    let au = GridScalar::new(fine, a.matrix.mul(&u.values)).expect("same grid");
    Ok(au.coarsen([refine; 3]).expect("divisible by construction").values)
}

pub fn run_level(
    field: &FieldSpec,
    exact: &Expr,
    grid: &Grid,
    refine: usize,
    cg: &CgOptions,
) -> Result<(Level, Vec<f64>), CliError> {
    let a = operator(field, grid)?;
    let b = manufactured_rhs(field, exact, grid, refine)?;
    let (x, stats) = cg_solve(&a, &b, cg, None).map_err(|e| match e {
        KrylovError::NoConvergence { stats, .. } => CliError::Numerical(format!(
            "CG on {:?} stopped after {} iterations at relative residual {:e}",
            grid.cells(),
            stats.iterations,
            stats.relative_residual()
        )),
        e => CliError::Numerical(e.to_string()),
    })?;
    let u = evaluate(exact, grid)?;
    let dv = grid.cell_volume();
    let (mut l2, mut linf) = (0.0, 0.0f64);
    for (xi, ui) in x.iter().zip(&u.values) {
        let d = (xi - ui).abs();
        l2 += d * d;
        linf = linf.max(d);
    }
    let level = Level {
        cells: grid.cells(),
        h: grid.spacing().iter().copied().fold(0.0, f64::max),
        l2_error: (l2 * dv).sqrt(),
        linf_error: linf,
        iterations: stats.iterations,
        relative_residual: stats.relative_residual(),
    };
    Ok((level, x))
}

/// Solves on `levels` grids, the first being `base` and each next one twice
/// as fine.
pub fn convergence_study(
    field: &FieldSpec,
    exact: &Expr,
    base: &Grid,
    refine: usize,
    levels: usize,
    cg: &CgOptions,
) -> Result<Study, CliError> {
    if levels < 2 {
        return Err(CliError::Config(format!("[problem] levels = {levels} must be at least 2")));
    }
    let mut out = Vec::with_capacity(levels);
    for l in 0..levels {
        let g = base
            .with_cells(base.cells().map(|n| n << l))
            .map_err(|e| CliError::Config(e.to_string()))?;
        out.push(run_level(field, exact, &g, refine, cg)?.0);
    }
    let orders = out.windows(2).map(|w| (w[0].l2_error / w[1].l2_error).log2()).collect();
    Ok(Study { levels: out, orders })
}
