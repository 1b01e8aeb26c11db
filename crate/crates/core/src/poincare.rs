//! Explicit `a⊥` constructions, sampled Poincaré constants and their check
//! against the discrete spectrum.
//!
//! A field `a⊥` with `a⊥·w = 0`, `|∇·a⊥| ≥ ε` and `|a⊥| ≤ ν` gives
//! `‖∇⊥u‖ ≥ ε/(2ν)‖u‖` for `u` vanishing on the boundary. With `ε = inf|h|`
//! and `M = sup|w|` the general estimate is `inf|h|/(2M²ν)`.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::Expr;
use crate::field::{
    normalized_helicity, sample_geometry_lenient, scalar_gradient, unit_field_force, FieldError,
    FieldKind, FieldSpec, Vec3, VectorField, DEFAULT_W_MIN,
};
use crate::grid::{Grid, Location};
use crate::krylov::{smallest_eigs, EigOptions, KrylovError, LinearOperator};

pub const DEFAULT_HELICITY_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_SLACK: f64 = 0.1;

const ORTHOGONALITY_TOL: f64 = 1e-8;
const BELTRAMI_TOL: f64 = 1e-6;
const EXAMPLE1_TOL: f64 = 1e-10;
const CLEBSCH_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PoincareError {
    #[error("precondition `{check}` fails: value {value:e} at ({:.6}, {:.6}, {:.6})", point.x, point.y, point.z)]
    Precondition {
        check: &'static str,
        value: f64,
        point: Vec3,
    },
    #[error("clebsch construction needs potentials (phi, psi, theta)")]
    MissingPotentials,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Krylov(#[from] KrylovError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum APerpKind {
    /// `a⊥ = (z − z₀)∇x×∇y` for fields in the span of `∇x`, `∇y`.
    Example1,
    /// `a⊥ = ψ∇θ×∇φ` for `w = ∇φ + ψ∇θ`.
    Clebsch,
    /// `a⊥ = (b̂ − ∇ln|ĥ|)×ŵ / ĥ`, whose divergence is `−∇·ŵ`.
    HelicityDiv,
    /// `a⊥ = ŵ×((x − x₀)/2 × ŵ)` for unit Beltrami fields.
    Beltrami,
}

impl APerpKind {
    pub fn name(self) -> &'static str {
        match self {
            APerpKind::Example1 => "example1",
            APerpKind::Clebsch => "clebsch",
            APerpKind::HelicityDiv => "helicity_div",
            APerpKind::Beltrami => "beltrami",
        }
    }

    pub fn parse(s: &str) -> Option<APerpKind> {
        [
            APerpKind::Example1,
            APerpKind::Clebsch,
            APerpKind::HelicityDiv,
            APerpKind::Beltrami,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Default)]
pub struct APerpInputs {
    /// Reference point: `z₀` for example1 (default: lower z face), `x₀` for
    /// beltrami (default: domain centre).
    pub origin: Option<Vec3>,
    /// `(φ, ψ, θ)`; defaults to the field's own potentials.
    pub potentials: Option<(Expr, Expr, Expr)>,
    /// Step for finite-difference derivatives of `ĥ` and `a⊥`.
    pub fd_step: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct APerpSpec {
    pub kind: APerpKind,
    pub field: FieldSpec,
    pub origin: Vec3,
    potentials: Option<(Expr, Expr, Expr)>,
    pub fd_step: f64,
    potential_step: f64,
}

impl APerpSpec {
    pub fn divergence_is_analytic(&self) -> bool {
        self.kind != APerpKind::HelicityDiv
    }

    fn potential_gradients(&self, p: &Vec3) -> Result<(Vec3, f64, Vec3, Vec3), FieldError> {
        let (phi, psi, theta) = self.potentials.as_ref().expect("clebsch potentials");
        let h = self.potential_step;
        Ok((
            scalar_gradient(phi, p, h)?,
            psi.eval(p)?,
            scalar_gradient(psi, p, h)?,
            scalar_gradient(theta, p, h)?,
        ))
    }

    pub fn value(&self, p: &Vec3) -> Result<Vec3, FieldError> {
        match self.kind {
            APerpKind::Example1 => Ok(Vec3::new(0.0, 0.0, p.z - self.origin.z)),
            APerpKind::Clebsch => {
                let (gphi, psi, _, gtheta) = self.potential_gradients(p)?;
                Ok(psi * gtheta.cross(&gphi))
            }
            APerpKind::HelicityDiv => {
                let s = sample_geometry_lenient(&self.field, p, DEFAULT_W_MIN)?;
                let d = s.unit()?.direction;
                let hh = s.unit()?.normalized_helicity;
                let mut grad_h = Vec3::zeros();
                for k in 0..3 {
                    let (mut a, mut b) = (*p, *p);
                    a[k] += self.fd_step;
                    b[k] -= self.fd_step;
                    grad_h[k] = (normalized_helicity(&self.field, &a)?
                        - normalized_helicity(&self.field, &b)?)
                        / (2.0 * self.fd_step);
                }
                let b_hat = unit_field_force(&self.field, p)?;
                Ok((b_hat - grad_h / hh).cross(&d) / hh)
            }
            APerpKind::Beltrami => {
                let d = self.field.value(p)?;
                let n = d.norm();
                if n < DEFAULT_W_MIN {
                    return Err(FieldError::NearNullField { point: *p, norm: n });
                }
                let d = d / n;
                let x = p - self.origin;
                Ok(0.5 * (x - d * d.dot(&x)))
            }
        }
    }

    pub fn divergence(&self, p: &Vec3) -> Result<f64, FieldError> {
        match self.kind {
            APerpKind::Example1 => Ok(1.0),
            APerpKind::Clebsch => {
                let (gphi, _, gpsi, gtheta) = self.potential_gradients(p)?;
                Ok(gpsi.dot(&gtheta.cross(&gphi)))
            }
            APerpKind::HelicityDiv => {
                let mut div = 0.0;
                for k in 0..3 {
                    let (mut a, mut b) = (*p, *p);
                    a[k] += self.fd_step;
                    b[k] -= self.fd_step;
                    div += (self.value(&a)?[k] - self.value(&b)?[k]) / (2.0 * self.fd_step);
                }
                Ok(div)
            }
            APerpKind::Beltrami => {
                let s = sample_geometry_lenient(&self.field, p, DEFAULT_W_MIN)?;
                let u = s.unit()?;
                let x = p - self.origin;
                Ok(1.0 + 0.5 * x.dot(&u.field_force) - 0.5 * u.divergence * x.dot(&u.direction))
            }
        }
    }
}

/// Cell centres together with grid nodes, so that closure extrema on the
/// walls and corners are sampled.
pub fn probe_points(grid: &Grid) -> Vec<Vec3> {
    let mut pts = grid.points(Location::Cells);
    pts.extend(grid.points(Location::Nodes));
    pts
}

/// Largest value of `f` over `pts`, with the first point attaining it.
fn worst<F>(pts: &[Vec3], f: F) -> Result<(f64, Vec3), FieldError>
where
    F: Fn(&Vec3) -> Result<f64, FieldError> + Sync,
{
    let vals = pts.par_iter().map(&f).collect::<Result<Vec<_>, _>>()?;
    let mut best = (f64::NEG_INFINITY, Vec3::zeros());
    for (v, p) in vals.into_iter().zip(pts) {
        if v > best.0 {
            best = (v, *p);
        }
    }
    Ok(best)
}

fn require(check: &'static str, (value, point): (f64, Vec3), limit: f64) -> Result<(), PoincareError> {
    if value <= limit {
        Ok(())
    } else {
        Err(PoincareError::Precondition { check, value, point })
    }
}

/// Builds and validates one of the closed-form constructions on `grid`.
pub fn build_aperp(
    kind: APerpKind,
    field: &FieldSpec,
    inputs: &APerpInputs,
    grid: &Grid,
) -> Result<APerpSpec, PoincareError> {
    let lower = Vec3::from(grid.lower());
    let center = lower + 0.5 * Vec3::from(grid.extent());
    let origin = inputs.origin.unwrap_or(match kind {
        APerpKind::Example1 => lower,
        _ => center,
    });
    let potentials = match (&inputs.potentials, &field.kind) {
        (Some(p), _) => Some(p.clone()),
        (None, FieldKind::Clebsch { phi, psi, theta }) => Some((phi.clone(), psi.clone(), theta.clone())),
        _ => None,
    };
    if kind == APerpKind::Clebsch && potentials.is_none() {
        return Err(PoincareError::MissingPotentials);
    }
    let potential_step = match field.derivative {
        crate::field::DerivativeMode::FiniteDifference { step } => step,
        crate::field::DerivativeMode::Analytic => 1e-5,
    };
    let spec = APerpSpec {
        kind,
        field: field.clone(),
        origin,
        potentials,
        fd_step: inputs.fd_step.unwrap_or(1e-3 * grid.diagonal()),
        potential_step,
    };
    let pts = probe_points(grid);
    match kind {
        APerpKind::Example1 => {
            let off = worst(&pts, |p| {
                let w = field.value(p)?;
                Ok(w.z.abs() / w.norm().max(DEFAULT_W_MIN))
            })?;
            require("w has no z component", off, EXAMPLE1_TOL)?;
        }
        APerpKind::Clebsch => {
            let mismatch = worst(&pts, |p| {
                let (gphi, psi, _, gtheta) = spec.potential_gradients(p)?;
                let w = field.value(p)?;
                Ok((w - gphi - psi * gtheta).norm() / w.norm().max(1.0))
            })?;
            require("w = ∇φ + ψ∇θ", mismatch, CLEBSCH_TOL)?;
        }
        APerpKind::HelicityDiv => {
            let low = worst(&pts, |p| Ok(-normalized_helicity(field, p)?.abs()))?;
            require("inf|ĥ| > 0", (-low.0, low.1), f64::INFINITY)?;
            if -low.0 < DEFAULT_HELICITY_THRESHOLD {
                return Err(PoincareError::Precondition {
                    check: "inf|ĥ| > 0",
                    value: -low.0,
                    point: low.1,
                });
            }
        }
        APerpKind::Beltrami => {
            let force = worst(&pts, |p| Ok(unit_field_force(field, p)?.norm()))?;
            require("b̂ = 0", force, BELTRAMI_TOL)?;
            let div = worst(&pts, |p| {
                let s = sample_geometry_lenient(field, p, DEFAULT_W_MIN)?;
                Ok(s.unit()?.divergence.abs())
            })?;
            require("∇·ŵ = 0", div, BELTRAMI_TOL)?;
        }
    }
    let ortho = worst(&pts, |p| {
        let a = spec.value(p)?;
        let w = field.value(p)?;
        let scale = a.norm() * w.norm();
        Ok(if scale > 0.0 { a.dot(&w).abs() / scale } else { 0.0 })
    })?;
    require("a⊥·w = 0", ortho, ORTHOGONALITY_TOL)?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Integrable,
    NonIntegrable,
    Indeterminate,
}

impl Classification {
    pub fn name(self) -> &'static str {
        match self {
            Classification::Integrable => "integrable",
            Classification::NonIntegrable => "non_integrable",
            Classification::Indeterminate => "indeterminate",
        }
    }
}

/// A sampled extremum and where it is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub value: f64,
    pub point: Vec3,
}

impl Extremum {
    fn min_of(vals: &[f64], pts: &[Vec3]) -> Extremum {
        let mut e = Extremum {
            value: f64::INFINITY,
            point: Vec3::zeros(),
        };
        for (v, p) in vals.iter().zip(pts) {
            if *v < e.value {
                e = Extremum { value: *v, point: *p };
            }
        }
        e
    }

    fn max_of(vals: &[f64], pts: &[Vec3]) -> Extremum {
        let mut e = Extremum {
            value: f64::NEG_INFINITY,
            point: Vec3::zeros(),
        };
        for (v, p) in vals.iter().zip(pts) {
            if *v > e.value {
                e = Extremum { value: *v, point: *p };
            }
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldClassification {
    pub class: Classification,
    pub inf_abs_h: Extremum,
    pub sup_abs_h: Extremum,
    pub min_w: Extremum,
    pub max_w: Extremum,
    /// A null cannot be excluded: `min|w| ≤ sup‖∇w‖_F · r` with `r` the
    /// half cell diagonal.
    pub near_null: bool,
}

/// Classifies by the helicity over cell centres.
pub fn classify_field(
    field: &dyn VectorField,
    grid: &Grid,
    tau_h: f64,
) -> Result<FieldClassification, FieldError> {
    let pts = grid.points(Location::Cells);
    let vals = pts
        .par_iter()
        .map(|p| -> Result<(f64, f64, f64), FieldError> {
            let w = field.value(p)?;
            let j = field.jacobian(p)?;
            Ok((w.dot(&crate::field::curl_of(&j)).abs(), w.norm(), j.norm()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let lipschitz = vals.iter().map(|v| v.2).fold(0.0, f64::max);
    let radius = 0.5 * grid.spacing().iter().map(|h| h * h).sum::<f64>().sqrt();
    let h: Vec<f64> = vals.iter().map(|v| v.0).collect();
    let w: Vec<f64> = vals.iter().map(|v| v.1).collect();
    let inf_abs_h = Extremum::min_of(&h, &pts);
    let sup_abs_h = Extremum::max_of(&h, &pts);
    let min_w = Extremum::min_of(&w, &pts);
    let max_w = Extremum::max_of(&w, &pts);
    let class = if sup_abs_h.value <= tau_h {
        Classification::Integrable
    } else if inf_abs_h.value >= tau_h {
        Classification::NonIntegrable
    } else {
        Classification::Indeterminate
    };
    Ok(FieldClassification {
        class,
        inf_abs_h,
        sup_abs_h,
        near_null: min_w.value <= lipschitz * radius,
        min_w,
        max_w,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincareReport {
    pub construction: APerpKind,
    pub field: String,
    pub probes: usize,
    /// `inf|∇·a⊥|`
    pub epsilon: Extremum,
    /// `sup|a⊥|`
    pub nu: Extremum,
    /// `sup|w|`
    pub m: Extremum,
    pub min_w: Extremum,
    pub inf_abs_h: Extremum,
    pub inf_abs_h_hat: Extremum,
    pub max_orthogonality_defect: f64,
    /// `ε/(2ν)`
    pub c_corollary: f64,
    /// `inf|h|/(2M²ν)`
    pub c_theorem: f64,
    /// The closed-form constant quoted for this construction, where it
    /// differs in form from `ε/(2ν)`.
    pub stated_constant: Option<f64>,
    pub classification: FieldClassification,
    pub notes: Vec<String>,
}

impl PoincareReport {
    pub fn best_constant(&self) -> f64 {
        self.c_corollary.max(self.c_theorem)
    }

    /// Flat `key = value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let pt = |p: &Vec3| format!("{:.9e} {:.9e} {:.9e}", p.x, p.y, p.z);
        let _ = writeln!(s, "construction = {}", self.construction.name());
        let _ = writeln!(s, "field = {}", self.field);
        let _ = writeln!(s, "probes = {}", self.probes);
        for (k, e) in [
            ("epsilon", &self.epsilon),
            ("nu", &self.nu),
            ("m", &self.m),
            ("min_w", &self.min_w),
            ("inf_abs_h", &self.inf_abs_h),
            ("inf_abs_h_hat", &self.inf_abs_h_hat),
        ] {
            let _ = writeln!(s, "{k} = {:.12e}", e.value);
            let _ = writeln!(s, "{k}_at = {}", pt(&e.point));
        }
        let _ = writeln!(s, "orthogonality_defect = {:.3e}", self.max_orthogonality_defect);
        let _ = writeln!(s, "c_corollary = {:.12e}", self.c_corollary);
        let _ = writeln!(s, "c_theorem = {:.12e}", self.c_theorem);
        if let Some(c) = self.stated_constant {
            let _ = writeln!(s, "c_stated = {c:.12e}");
        }
        let _ = writeln!(s, "classification = {}", self.classification.class.name());
        let _ = writeln!(s, "near_null = {}", self.classification.near_null);
        for (i, n) in self.notes.iter().enumerate() {
            let _ = writeln!(s, "note_{i} = {n}");
        }
        s
    }

    /// CSV with header `quantity,value,x,y,z`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("quantity,value,x,y,z\n");
        for (k, e) in [
            ("epsilon", &self.epsilon),
            ("nu", &self.nu),
            ("m", &self.m),
            ("min_w", &self.min_w),
            ("inf_abs_h", &self.inf_abs_h),
            ("inf_abs_h_hat", &self.inf_abs_h_hat),
        ] {
            let _ = writeln!(s, "{k},{:e},{:e},{:e},{:e}", e.value, e.point.x, e.point.y, e.point.z);
        }
        let _ = writeln!(s, "c_corollary,{:e},,,", self.c_corollary);
        let _ = writeln!(s, "c_theorem,{:e},,,", self.c_theorem);
        if let Some(c) = self.stated_constant {
            let _ = writeln!(s, "c_stated,{c:e},,,");
        }
        s
    }
}

struct Probe {
    div: f64,
    a: f64,
    w: f64,
    h: f64,
    h_hat: f64,
    ortho: f64,
}

/// Samples the hypotheses of the Poincaré estimates over cell centres and
/// nodes.
pub fn poincare_report(aperp: &APerpSpec, grid: &Grid, tau_h: f64) -> Result<PoincareReport, PoincareError> {
    let field = &aperp.field;
    let pts = probe_points(grid);
    let probes = pts
        .par_iter()
        .map(|p| -> Result<Probe, FieldError> {
            let s = sample_geometry_lenient(field, p, DEFAULT_W_MIN)?;
            let a = aperp.value(p)?;
            let scale = a.norm() * s.magnitude;
            Ok(Probe {
                div: aperp.divergence(p)?.abs(),
                a: a.norm(),
                w: s.magnitude,
                h: s.helicity.abs(),
                h_hat: s.unit.map_or(0.0, |u| u.normalized_helicity.abs()),
                ortho: if scale > 0.0 { a.dot(&s.w).abs() / scale } else { 0.0 },
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let col = |f: fn(&Probe) -> f64| -> Vec<f64> { probes.iter().map(f).collect() };
    let epsilon = Extremum::min_of(&col(|p| p.div), &pts);
    let nu = Extremum::max_of(&col(|p| p.a), &pts);
    let m = Extremum::max_of(&col(|p| p.w), &pts);
    let min_w = Extremum::min_of(&col(|p| p.w), &pts);
    let inf_abs_h = Extremum::min_of(&col(|p| p.h), &pts);
    let inf_abs_h_hat = Extremum::min_of(&col(|p| p.h_hat), &pts);
    let max_orthogonality_defect = probes.iter().map(|p| p.ortho).fold(0.0, f64::max);
    let classification = classify_field(field, grid, tau_h)?;

    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let c_corollary = ratio(epsilon.value, 2.0 * nu.value);
    let c_theorem = ratio(inf_abs_h.value, 2.0 * m.value * m.value * nu.value);
    let mut notes = Vec::new();
    if epsilon.value <= 0.0 {
        notes.push("inf|div a_perp| vanishes on the probe set; no bound".to_string());
    }
    if classification.class == Classification::Integrable && epsilon.value > 0.0 {
        notes.push(
            "helicity vanishes but a positive constant exists: non-vanishing helicity is not necessary"
                .to_string(),
        );
    }
    if classification.near_null {
        notes.push(format!(
            "min|w| = {:.3e} is small compared with sup|w| = {:.3e}",
            classification.min_w.value, classification.max_w.value
        ));
    }
    let stated_constant = match aperp.kind {
        APerpKind::Example1 => {
            let zmax = Extremum::max_of(&pts.iter().map(|p| (p.z - aperp.origin.z).abs()).collect::<Vec<_>>(), &pts);
            notes.push(format!(
                "stated constant 1/z* = {:.6e} is twice eps/(2 nu)",
                1.0 / zmax.value
            ));
            Some(1.0 / zmax.value)
        }
        APerpKind::Beltrami => {
            let xmax = pts.iter().map(|p| (p - aperp.origin).norm()).fold(0.0, f64::max);
            Some(1.0 / xmax)
        }
        _ => None,
    };
    Ok(PoincareReport {
        construction: aperp.kind,
        field: field.kind.name().to_string(),
        probes: pts.len(),
        epsilon,
        nu,
        m,
        min_w,
        inf_abs_h,
        inf_abs_h_hat,
        max_orthogonality_defect,
        c_corollary,
        c_theorem,
        stated_constant,
        classification,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub lambda_min: f64,
    pub residual: f64,
    pub c: f64,
    pub c_squared: f64,
    pub slack: f64,
    /// `λ_min − (1 − slack)C²`
    pub margin: f64,
    pub pass: bool,
}

/// Checks `λ_min ≥ (1 − slack)C²` for a given constant.
pub fn verify_constant(
    c: f64,
    a: &dyn LinearOperator,
    slack: f64,
    eig: &EigOptions,
) -> Result<BoundCheck, PoincareError> {
    let spectrum = smallest_eigs(a, 1, eig, None)?;
    let lambda_min = spectrum.eigenvalues[0];
    let c_squared = c * c;
    let margin = lambda_min - (1.0 - slack) * c_squared;
    Ok(BoundCheck {
        lambda_min,
        residual: spectrum.residuals[0],
        c,
        c_squared,
        slack,
        margin,
        pass: margin >= 0.0,
    })
}

/// Checks the larger of the two reported constants, which implies the other.
pub fn verify_bound(
    report: &PoincareReport,
    a: &dyn LinearOperator,
    slack: f64,
    eig: &EigOptions,
) -> Result<BoundCheck, PoincareError> {
    verify_constant(report.best_constant(), a, slack, eig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::field::Axis;
    use crate::grid::{build_grid, Boundary, GridConfig, OriginMode};

    fn unit_box(n: usize, origin: OriginMode) -> Grid {
        build_grid(&GridConfig::cube(n, 1.0, origin, Boundary::Dirichlet)).unwrap()
    }

    #[test]
    fn example1_constants() {
        let g = build_grid(&GridConfig::new(
            [4, 8, 8],
            [1.0; 3],
            OriginMode::Corner,
            [Boundary::Periodic, Boundary::Dirichlet, Boundary::Dirichlet],
        ))
        .unwrap();
        let f = FieldSpec::grad_axis(Axis::X);
        let a = build_aperp(APerpKind::Example1, &f, &APerpInputs::default(), &g).unwrap();
        assert_eq!(a.value(&Vec3::new(0.2, 0.3, 0.7)).unwrap(), Vec3::new(0.0, 0.0, 0.7));
        let r = poincare_report(&a, &g, DEFAULT_HELICITY_THRESHOLD).unwrap();
        assert_eq!(r.epsilon.value, 1.0);
        assert_eq!(r.nu.value, 1.0);
        assert_eq!(r.c_corollary, 0.5);
        assert_eq!(r.c_theorem, 0.0);
        assert_eq!(r.stated_constant, Some(1.0));
        assert_eq!(r.classification.class, Classification::Integrable);
        assert!(r.notes.iter().any(|n| n.contains("not necessary")));

        let bad = build_aperp(APerpKind::Example1, &FieldSpec::grad_axis(Axis::Z), &APerpInputs::default(), &g);
        assert!(matches!(bad, Err(PoincareError::Precondition { .. })));
    }

    #[test]
    fn clebsch_on_linear_shear() {
        let g = unit_box(8, OriginMode::Corner);
        let inputs = APerpInputs {
            potentials: Some((parse("x").unwrap(), parse("z").unwrap(), parse("y").unwrap())),
            ..APerpInputs::default()
        };
        let a = build_aperp(APerpKind::Clebsch, &FieldSpec::linear_shear(), &inputs, &g).unwrap();
        let v = a.value(&Vec3::new(0.1, 0.2, 0.6)).unwrap();
        assert!((v - Vec3::new(0.0, 0.0, -0.6)).norm() < 1e-9);
        let r = poincare_report(&a, &g, DEFAULT_HELICITY_THRESHOLD).unwrap();
        assert!((r.epsilon.value - 1.0).abs() < 1e-9);
        assert!((r.nu.value - 1.0).abs() < 1e-9);
        assert!((r.c_corollary - 0.5).abs() < 1e-9);
        assert!((r.m.value * r.m.value - 2.0).abs() < 1e-12);
        assert!((r.c_theorem - 0.25).abs() < 1e-9);
        assert_eq!(r.nu.point.z, 1.0);
    }

    #[test]
    fn beltrami_on_rotating_shear() {
        let g = unit_box(8, OriginMode::Center);
        let f = FieldSpec::rotating_shear(1.0);
        let a = build_aperp(APerpKind::Beltrami, &f, &APerpInputs::default(), &g).unwrap();
        let r = poincare_report(&a, &g, DEFAULT_HELICITY_THRESHOLD).unwrap();
        assert!((r.epsilon.value - 1.0).abs() < 1e-12);
        let stated = r.stated_constant.unwrap();
        assert!((stated - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!(r.c_corollary >= stated);
        assert_eq!(r.classification.class, Classification::NonIntegrable);
        assert!((r.classification.inf_abs_h.value - 1.0).abs() < 1e-12);

        let bad = build_aperp(APerpKind::Beltrami, &FieldSpec::abc(1.0, 0.5, 0.3), &APerpInputs::default(), &g);
        assert!(matches!(bad, Err(PoincareError::Precondition { .. })));
    }

    #[test]
    fn classification_examples() {
        let g = build_grid(&GridConfig::cube(16, 2.0 * std::f64::consts::PI, OriginMode::Corner, Boundary::Periodic)).unwrap();
        let c = classify_field(&FieldSpec::grad_axis(Axis::Z), &g, DEFAULT_HELICITY_THRESHOLD).unwrap();
        assert_eq!(c.class, Classification::Integrable);
        let c = classify_field(&FieldSpec::abc(1.0, 1.0, 1.0), &g, DEFAULT_HELICITY_THRESHOLD).unwrap();
        assert_eq!(c.class, Classification::NonIntegrable);
        assert!(c.near_null, "{c:?}");
        let c = classify_field(&FieldSpec::rotating_shear(1.0), &g, DEFAULT_HELICITY_THRESHOLD).unwrap();
        assert!(!c.near_null);
    }

    #[test]
    fn helicity_div_divergence_is_minus_unit_divergence() {
        let f = FieldSpec::custom(
            parse("cos(z)").unwrap(),
            parse("sin(z)").unwrap(),
            parse("0.4*sin(x)").unwrap(),
        );
        let g = unit_box(4, OriginMode::Corner);
        let err = |step: f64| {
            let inputs = APerpInputs {
                fd_step: Some(step),
                ..APerpInputs::default()
            };
            let a = build_aperp(APerpKind::HelicityDiv, &f, &inputs, &g).unwrap();
            g.points(Location::Cells)
                .iter()
                .map(|p| {
                    let s = sample_geometry_lenient(&f, p, DEFAULT_W_MIN).unwrap();
                    (a.divergence(p).unwrap() + s.unit().unwrap().divergence).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.04), err(0.02));
        assert!(e1 > e2 && e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn key_value_block_lists_constants() {
        let g = unit_box(4, OriginMode::Center);
        let a = build_aperp(APerpKind::Beltrami, &FieldSpec::rotating_shear(1.0), &APerpInputs::default(), &g).unwrap();
        let r = poincare_report(&a, &g, DEFAULT_HELICITY_THRESHOLD).unwrap();
        let kv = r.to_key_value();
        assert!(kv.contains("c_corollary = ") && kv.contains("epsilon_at = "));
        assert_eq!(r.to_csv().lines().count(), 10);
    }
}
