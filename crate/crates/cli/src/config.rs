//! TOML run configuration. Unknown keys are rejected at every level.

use std::path::Path;

use orthlap::expr::{parse, Expr};
use orthlap::field::{Axis, FieldSpec, Vec3};
use orthlap::grid::{build_grid, Boundary, Grid, GridConfig, OriginMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub field: FieldConfig,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub poincare: PoincareConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub mc: McConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Corner,
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bc {
    Periodic,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub cells: [usize; 3],
    #[serde(default = "unit_extent")]
    pub extent: [f64; 3],
    #[serde(default = "corner")]
    pub origin: Origin,
    pub bc: [Bc; 3],
}

fn unit_extent() -> [f64; 3] {
    [1.0; 3]
}

fn corner() -> Origin {
    Origin::Corner
}

impl DomainConfig {
    pub fn grid_config(&self) -> GridConfig {
        GridConfig::new(
            self.cells,
            self.extent,
            match self.origin {
                Origin::Corner => OriginMode::Corner,
                Origin::Center => OriginMode::Center,
            },
            self.bc.map(|b| match b {
                Bc::Periodic => Boundary::Periodic,
                Bc::Dirichlet => Boundary::Dirichlet,
            }),
        )
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        build_grid(&self.grid_config()).map_err(|e| CliError::Config(format!("[domain]: {e}")))
    }
}

/// Flat table; which keys are allowed depends on `kind`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wx: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wz: Option<String>,
    /// Finite-difference step for expression fields; defaults to `1e-5` of
    /// the domain diagonal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
}

pub fn parse_axis(s: &str) -> Result<Axis, CliError> {
    match s {
        "x" => Ok(Axis::X),
        "y" => Ok(Axis::Y),
        "z" => Ok(Axis::Z),
        _ => Err(CliError::Config(format!("axis must be x, y or z, got {s:?}"))),
    }
}

pub fn parse_expr(section: &str, key: &str, src: &str) -> Result<Expr, CliError> {
    parse(src).map_err(|e| CliError::Config(format!("[{section}] {key} = {src:?}: {e}")))
}

impl FieldConfig {
    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        for (k, set) in [
            ("axis", self.axis.is_some()),
            ("alpha", self.alpha.is_some()),
            ("a", self.a.is_some()),
            ("b", self.b.is_some()),
            ("c", self.c.is_some()),
            ("phi", self.phi.is_some()),
            ("psi", self.psi.is_some()),
            ("theta", self.theta.is_some()),
            ("wx", self.wx.is_some()),
            ("wy", self.wy.is_some()),
            ("wz", self.wz.is_some()),
            ("fd_step", self.fd_step.is_some()),
        ] {
            if set {
                v.push(k);
            }
        }
        v
    }

    fn expr(&self, key: &str, v: &Option<String>) -> Result<Expr, CliError> {
        let src = v
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("[field] kind {:?} needs {key}", self.kind)))?;
        parse_expr("field", key, src)
    }

    pub fn spec(&self, diagonal: f64) -> Result<FieldSpec, CliError> {
        let allowed: &[&str] = match self.kind.as_str() {
            "grad_axis" => &["axis"],
            "linear_shear" => &[],
            "rotating_shear" => &["alpha"],
            "abc" => &["a", "b", "c"],
            "clebsch" => &["phi", "psi", "theta", "fd_step"],
            "custom" => &["wx", "wy", "wz", "fd_step"],
            k => return Err(CliError::Config(format!("[field] unknown kind {k:?}"))),
        };
        if let Some(k) = self.present().into_iter().find(|k| !allowed.contains(k)) {
            return Err(CliError::Config(format!(
                "[field] key {k} does not apply to kind {:?}",
                self.kind
            )));
        }
        let spec = match self.kind.as_str() {
            "grad_axis" => FieldSpec::grad_axis(parse_axis(self.axis.as_deref().unwrap_or("z"))?),
            "linear_shear" => FieldSpec::linear_shear(),
            "rotating_shear" => FieldSpec::rotating_shear(self.alpha.unwrap_or(1.0)),
            "abc" => FieldSpec::abc(self.a.unwrap_or(1.0), self.b.unwrap_or(1.0), self.c.unwrap_or(1.0)),
            "clebsch" => FieldSpec::clebsch(
                self.expr("phi", &self.phi)?,
                self.expr("psi", &self.psi)?,
                self.expr("theta", &self.theta)?,
            ),
            _ => FieldSpec::custom(
                self.expr("wx", &self.wx)?,
                self.expr("wy", &self.wy)?,
                self.expr("wz", &self.wz)?,
            ),
        };
        Ok(match self.fd_step {
            Some(h) if h > 0.0 => spec.with_fd_step(h),
            Some(h) => return Err(CliError::Config(format!("[field] fd_step = {h} must be positive"))),
            None => spec.with_domain_step(diagonal),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// `φ` in `Δ⊥u = φ`.
    #[serde(default = "zero_expr")]
    pub rhs: String,
    /// Manufactured solution; when set, `solve` reports the error and
    /// `convergence` derives `φ` from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
    /// Factor between the solve grid and the grid the manufactured
    /// right-hand side is generated on.
    #[serde(default = "two")]
    pub refine: usize,
    /// Number of grids in the convergence study, each twice as fine as the
    /// previous.
    #[serde(default = "two")]
    pub levels: usize,
}

fn zero_expr() -> String {
    "0".into()
}

fn two() -> usize {
    2
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            rhs: zero_expr(),
            exact: None,
            refine: 2,
            levels: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub jacobi: bool,
    /// Number of eigenpairs for `spectrum`.
    pub k: usize,
    pub eig_tol: f64,
    pub eig_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 10_000,
            jacobi: true,
            k: 4,
            eig_tol: 1e-6,
            eig_seed: 0x0e16_5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoincareConfig {
    pub construction: String,
    /// Overrides `z₀` (example1) or `x₀` (beltrami).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
    pub tau_h: f64,
    pub slack: f64,
    pub verify: bool,
}

impl Default for PoincareConfig {
    fn default() -> Self {
        PoincareConfig {
            construction: "clebsch".into(),
            origin: None,
            phi: None,
            psi: None,
            theta: None,
            fd_step: None,
            tau_h: orthlap::poincare::DEFAULT_HELICITY_THRESHOLD,
            slack: orthlap::poincare::DEFAULT_SLACK,
            verify: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    /// `blob` or `uniform`.
    pub kind: String,
    /// Defaults to the domain centre.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 3]>,
    pub sigma: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            kind: "blob".into(),
            center: None,
            sigma: 0.5,
        }
    }
}

pub enum InitialShape {
    Uniform,
    Blob { center: Vec3, sigma: f64 },
}

impl InitialConfig {
    pub fn shape(&self, grid: &Grid) -> Result<InitialShape, CliError> {
        match self.kind.as_str() {
            "uniform" => Ok(InitialShape::Uniform),
            "blob" => {
                if !(self.sigma > 0.0) {
                    return Err(CliError::Config(format!("[initial] sigma = {} must be positive", self.sigma)));
                }
                let center = match self.center {
                    Some(c) => Vec3::from(c),
                    None => {
                        let (lo, ext) = (grid.lower(), grid.extent());
                        Vec3::new(lo[0] + 0.5 * ext[0], lo[1] + 0.5 * ext[1], lo[2] + 0.5 * ext[2])
                    }
                };
                Ok(InitialShape::Blob {
                    center,
                    sigma: self.sigma,
                })
            }
            k => Err(CliError::Config(format!("[initial] unknown kind {k:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveConfig {
    pub scheme: String,
    /// Defaults to the explicit stability limit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub stride: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaf_axis: Option<String>,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            scheme: "implicit_euler".into(),
            dt: None,
            t_final: 1.0,
            stride: 0,
            leaf_axis: None,
            solver_tol: 1e-12,
            solver_max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub seed: u64,
    /// `ito_euler`, `stratonovich_heun` or `both`.
    pub scheme: String,
    pub bins: [usize; 3],
    /// Also evolve the Fokker–Planck equation on the domain grid and compare.
    pub compare_pde: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n: 10_000,
            dt: 1e-3,
            t_final: 0.5,
            seed: 0,
            scheme: "both".into(),
            bins: [8, 8, 8],
            compare_pde: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
