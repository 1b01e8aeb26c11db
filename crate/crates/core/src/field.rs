//! Constraining vector fields and their pointwise differential geometry.
//!
//! Built-in fields carry exact Jacobians. Expression-defined fields
//! (Clebsch potentials or raw components) are differentiated with central
//! differences. Direction quantities (normalized helicity, field force,
//! field charge, divergence of the unit field) are always computed from the
//! unit field `ŵ = w/|w|`.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::expr::{Expr, ExprError};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this magnitude the field counts as vanishing at a point.
pub const DEFAULT_W_MIN: f64 = 1e-8;

/// Step used for the field-charge divergence when the Jacobian is analytic.
const ANALYTIC_CHARGE_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("near-null field |w| = {norm:e} at ({:.6}, {:.6}, {:.6})", point.x, point.y, point.z)]
    NearNullField { point: Vec3, norm: f64 },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Anything that can report `w(x)` and its Jacobian `J[i][j] = ∂w_i/∂x_j`.
pub trait VectorField: Send + Sync {
    fn value(&self, p: &Vec3) -> Result<Vec3, FieldError>;
    fn jacobian(&self, p: &Vec3) -> Result<Mat3, FieldError>;

    /// Step for the second-derivative quantities (field charge).
    fn charge_step(&self) -> f64 {
        ANALYTIC_CHARGE_STEP
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn unit(self) -> Vec3 {
        let mut v = Vec3::zeros();
        v[self.index()] = 1.0;
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    /// `w = ∇x_axis`.
    GradAxis(Axis),
    /// `w = (1, z, 0)`.
    LinearShear,
    /// `w = (cos αz, sin αz, 0)`; satisfies `∇×w = -αw`.
    RotatingShear { alpha: f64 },
    /// Arnold–Beltrami–Childress flow, `∇×w = w`.
    Abc { a: f64, b: f64, c: f64 },
    /// `w = ∇φ + ψ∇θ`.
    Clebsch { phi: Expr, psi: Expr, theta: Expr },
    Custom { wx: Expr, wy: Expr, wz: Expr },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference { step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub derivative: DerivativeMode,
}

impl FieldSpec {
    /// Built-ins default to analytic derivatives; expression kinds to central
    /// differences with step `1e-5` (rescale with [`FieldSpec::with_domain_step`]).
    pub fn new(kind: FieldKind) -> FieldSpec {
        let derivative = if kind.is_expression() {
            DerivativeMode::FiniteDifference { step: 1e-5 }
        } else {
            DerivativeMode::Analytic
        };
        FieldSpec { kind, derivative }
    }

    pub fn grad_axis(axis: Axis) -> FieldSpec {
        FieldSpec::new(FieldKind::GradAxis(axis))
    }

    pub fn linear_shear() -> FieldSpec {
        FieldSpec::new(FieldKind::LinearShear)
    }

    pub fn rotating_shear(alpha: f64) -> FieldSpec {
        FieldSpec::new(FieldKind::RotatingShear { alpha })
    }

    pub fn abc(a: f64, b: f64, c: f64) -> FieldSpec {
        FieldSpec::new(FieldKind::Abc { a, b, c })
    }

    pub fn clebsch(phi: Expr, psi: Expr, theta: Expr) -> FieldSpec {
        FieldSpec::new(FieldKind::Clebsch { phi, psi, theta })
    }

    pub fn custom(wx: Expr, wy: Expr, wz: Expr) -> FieldSpec {
        FieldSpec::new(FieldKind::Custom { wx, wy, wz })
    }

    /// Forces central differences with the given step.
    pub fn with_fd_step(mut self, step: f64) -> FieldSpec {
        self.derivative = DerivativeMode::FiniteDifference { step };
        self
    }

    /// Expression kinds get `δ = 1e-5 × diagonal`; built-ins are unchanged.
    pub fn with_domain_step(self, diagonal: f64) -> FieldSpec {
        if self.kind.is_expression() {
            self.with_fd_step(1e-5 * diagonal)
        } else {
            self
        }
    }

    fn fd_step(&self) -> Option<f64> {
        match self.derivative {
            DerivativeMode::Analytic => None,
            DerivativeMode::FiniteDifference { step } => Some(step),
        }
    }

    fn analytic_value(&self, p: &Vec3) -> Result<Vec3, FieldError> {
        Ok(match &self.kind {
            FieldKind::GradAxis(axis) => axis.unit(),
            FieldKind::LinearShear => Vec3::new(1.0, p.z, 0.0),
            FieldKind::RotatingShear { alpha } => {
                let (s, c) = (alpha * p.z).sin_cos();
                Vec3::new(c, s, 0.0)
            }
            FieldKind::Abc { a, b, c } => Vec3::new(
                a * p.z.sin() + c * p.y.cos(),
                b * p.x.sin() + a * p.z.cos(),
                c * p.y.sin() + b * p.x.cos(),
            ),
            FieldKind::Clebsch { phi, psi, theta } => {
                let h = self.fd_step().unwrap_or(1e-5);
                let gphi = scalar_gradient(phi, p, h)?;
                let gtheta = scalar_gradient(theta, p, h)?;
                gphi + psi.eval(p)? * gtheta
            }
            FieldKind::Custom { wx, wy, wz } => Vec3::new(wx.eval(p)?, wy.eval(p)?, wz.eval(p)?),
        })
    }

    fn analytic_jacobian(&self, p: &Vec3) -> Option<Mat3> {
        let mut j = Mat3::zeros();
        match &self.kind {
            FieldKind::GradAxis(_) => {}
            FieldKind::LinearShear => j[(1, 2)] = 1.0,
            FieldKind::RotatingShear { alpha } => {
                let (s, c) = (alpha * p.z).sin_cos();
                j[(0, 2)] = -alpha * s;
                j[(1, 2)] = alpha * c;
            }
            FieldKind::Abc { a, b, c } => {
                j[(0, 1)] = -c * p.y.sin();
                j[(0, 2)] = a * p.z.cos();
                j[(1, 0)] = b * p.x.cos();
                j[(1, 2)] = -a * p.z.sin();
                j[(2, 0)] = -b * p.x.sin();
                j[(2, 1)] = c * p.y.cos();
            }
            FieldKind::Clebsch { .. } | FieldKind::Custom { .. } => return None,
        }
        Some(j)
    }

    /// Outer step for the Jacobian. Clebsch values are themselves central
    /// differences, so the nested step is widened to balance roundoff.
    fn jacobian_step(&self) -> f64 {
        let h = self.fd_step().unwrap_or(1e-5);
        match self.kind {
            FieldKind::Clebsch { .. } => 10.0 * h,
            _ => h,
        }
    }
}

impl FieldKind {
    pub fn is_expression(&self) -> bool {
        matches!(self, FieldKind::Clebsch { .. } | FieldKind::Custom { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            FieldKind::GradAxis(_) => "grad_axis",
            FieldKind::LinearShear => "linear_shear",
            FieldKind::RotatingShear { .. } => "rotating_shear",
            FieldKind::Abc { .. } => "abc",
            FieldKind::Clebsch { .. } => "clebsch",
            FieldKind::Custom { .. } => "custom",
        }
    }
}

impl VectorField for FieldSpec {
    fn value(&self, p: &Vec3) -> Result<Vec3, FieldError> {
        self.analytic_value(p)
    }

    fn jacobian(&self, p: &Vec3) -> Result<Mat3, FieldError> {
        if self.derivative == DerivativeMode::Analytic {
            if let Some(j) = self.analytic_jacobian(p) {
                return Ok(j);
            }
        }
        central_jacobian(|q| self.analytic_value(q), p, self.jacobian_step())
    }

    fn charge_step(&self) -> f64 {
        match (self.derivative, self.analytic_jacobian(&Vec3::zeros())) {
            (DerivativeMode::Analytic, Some(_)) => ANALYTIC_CHARGE_STEP,
            _ => 100.0 * self.jacobian_step(),
        }
    }
}

/// Central-difference gradient of a scalar expression.
pub fn scalar_gradient(e: &Expr, p: &Vec3, h: f64) -> Result<Vec3, ExprError> {
    let mut g = Vec3::zeros();
    for d in 0..3 {
        let mut a = *p;
        let mut b = *p;
        a[d] += h;
        b[d] -= h;
        g[d] = (e.eval(&a)? - e.eval(&b)?) / (2.0 * h);
    }
    Ok(g)
}

/// Central-difference Jacobian `J[i][j] = ∂f_i/∂x_j`.
pub fn central_jacobian<F>(f: F, p: &Vec3, h: f64) -> Result<Mat3, FieldError>
where
    F: Fn(&Vec3) -> Result<Vec3, FieldError>,
{
    let mut j = Mat3::zeros();
    for d in 0..3 {
        let mut a = *p;
        let mut b = *p;
        a[d] += h;
        b[d] -= h;
        let col = (f(&a)? - f(&b)?) / (2.0 * h);
        j.set_column(d, &col);
    }
    Ok(j)
}

pub fn curl_of(j: &Mat3) -> Vec3 {
    Vec3::new(
        j[(2, 1)] - j[(1, 2)],
        j[(0, 2)] - j[(2, 0)],
        j[(1, 0)] - j[(0, 1)],
    )
}

/// Quantities that exist only where the field is non-vanishing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitGeometry {
    /// ŵ
    pub direction: Vec3,
    /// `∂ŵ_i/∂x_j`
    pub jacobian: Mat3,
    /// ∇×ŵ
    pub curl: Vec3,
    /// ĥ = ŵ·∇×ŵ = h/|w|²
    pub normalized_helicity: f64,
    /// ∇·ŵ
    pub divergence: f64,
    /// b̂ = ŵ×(∇×ŵ)
    pub field_force: Vec3,
    /// B̂ = ∇·b̂
    pub field_charge: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometrySample {
    pub point: Vec3,
    pub w: Vec3,
    pub magnitude: f64,
    pub jacobian: Mat3,
    pub curl: Vec3,
    /// h = w·∇×w
    pub helicity: f64,
    /// `None` when `|w| < w_min`.
    pub unit: Option<UnitGeometry>,
}

impl GeometrySample {
    pub fn unit(&self) -> Result<&UnitGeometry, FieldError> {
        self.unit.as_ref().ok_or(FieldError::NearNullField {
            point: self.point,
            norm: self.magnitude,
        })
    }

    /// Orthogonal projector `P = I − ŵŵᵀ`.
    pub fn projector(&self) -> Result<Mat3, FieldError> {
        let d = self.unit()?.direction;
        Ok(Mat3::identity() - d * d.transpose())
    }

    /// `|w|² P = |w|² I − wwᵀ`; defined everywhere, including at nulls.
    pub fn scaled_projector(&self) -> Mat3 {
        Mat3::identity() * self.w.norm_squared() - self.w * self.w.transpose()
    }

    /// `w × (∇×w)`.
    pub fn lamb_vector(&self) -> Vec3 {
        self.w.cross(&self.curl)
    }
}

fn unit_parts(w: &Vec3, j: &Mat3) -> (Vec3, Mat3) {
    let n = w.norm();
    let d = w / n;
    // ∂_j ŵ_i = J_ij/|w| − w_i (wᵀJ)_j / |w|³
    let wj = j.transpose() * w;
    let uj = j / n - (w * wj.transpose()) / (n * n * n);
    (d, uj)
}

fn field_force_at(field: &dyn VectorField, p: &Vec3) -> Result<Vec3, FieldError> {
    let w = field.value(p)?;
    let j = field.jacobian(p)?;
    let (d, uj) = unit_parts(&w, &j);
    Ok(d.cross(&curl_of(&uj)))
}

fn nonvanishing(field: &dyn VectorField, p: &Vec3) -> Result<(Vec3, Mat3), FieldError> {
    let w = field.value(p)?;
    if w.norm() < DEFAULT_W_MIN {
        return Err(FieldError::NearNullField {
            point: *p,
            norm: w.norm(),
        });
    }
    Ok((w, field.jacobian(p)?))
}

/// `b̂ = ŵ×(∇×ŵ)` without the rest of the sample.
pub fn unit_field_force(field: &dyn VectorField, p: &Vec3) -> Result<Vec3, FieldError> {
    let (w, j) = nonvanishing(field, p)?;
    let (d, uj) = unit_parts(&w, &j);
    Ok(d.cross(&curl_of(&uj)))
}

/// `ĥ = h/|w|²` without the rest of the sample.
pub fn normalized_helicity(field: &dyn VectorField, p: &Vec3) -> Result<f64, FieldError> {
    let (w, j) = nonvanishing(field, p)?;
    Ok(w.dot(&curl_of(&j)) / w.norm_squared())
}

/// Computes w, ∇w, ∇×w, h and, where `|w| ≥ w_min`, the unit-field
/// quantities. Never fails on a vanishing field; see [`sample_geometry`].
pub fn sample_geometry_lenient(
    field: &dyn VectorField,
    p: &Vec3,
    w_min: f64,
) -> Result<GeometrySample, FieldError> {
    let w = field.value(p)?;
    let j = field.jacobian(p)?;
    let curl = curl_of(&j);
    let magnitude = w.norm();
    let helicity = w.dot(&curl);
    let unit = if magnitude >= w_min {
        let (direction, ujac) = unit_parts(&w, &j);
        let ucurl = curl_of(&ujac);
        let s = field.charge_step();
        let mut charge = 0.0;
        for d in 0..3 {
            let mut a = *p;
            let mut b = *p;
            a[d] += s;
            b[d] -= s;
            charge += (field_force_at(field, &a)?[d] - field_force_at(field, &b)?[d]) / (2.0 * s);
        }
        Some(UnitGeometry {
            direction,
            jacobian: ujac,
            curl: ucurl,
            normalized_helicity: helicity / (magnitude * magnitude),
            divergence: ujac.trace(),
            field_force: direction.cross(&ucurl),
            field_charge: charge,
        })
    } else {
        None
    };
    Ok(GeometrySample {
        point: *p,
        w,
        magnitude,
        jacobian: j,
        curl,
        helicity,
        unit,
    })
}

/// Like [`sample_geometry_lenient`] but rejects points where `|w| < w_min`.
pub fn sample_geometry(
    field: &dyn VectorField,
    p: &Vec3,
    w_min: f64,
) -> Result<GeometrySample, FieldError> {
    let s = sample_geometry_lenient(field, p, w_min)?;
    s.unit()?;
    Ok(s)
}

/// Splits `g` into the part orthogonal to `w` and the part along it.
pub fn decompose_gradient(sample: &GeometrySample, g: &Vec3) -> Result<(Vec3, Vec3), FieldError> {
    let d = sample.unit()?.direction;
    let par = d * d.dot(g);
    Ok((g - par, par))
}
