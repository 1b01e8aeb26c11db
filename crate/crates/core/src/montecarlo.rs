//! Particle ensembles for the constrained SDE `dx = w(x) × dW` on periodic
//! boxes.
//!
//! Every normal draw comes from a ChaCha8 stream keyed by the master seed and
//! particle index, with the step index as stream id, so an ensemble does not
//! depend on how particles are scheduled over threads.

use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::field::{FieldError, Vec3, VectorField};
use crate::grid::{Grid, GridError, GridScalar};

pub const OENS_MAGIC: &[u8; 4] = b"OENS";
pub const OENS_VERSION: u32 = 1;

const CHUNK: usize = 4096;
// Distinguishes the initial-condition draws from the per-step increments.
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum McError {
    #[error("Monte Carlo needs a fully periodic box")]
    NotPeriodic,
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("field evaluation failed at {point:?}: {source}")]
    Field {
        point: [f64; 3],
        #[source]
        source: FieldError,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed OENS data: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepScheme {
    ItoEuler,
    StratonovichHeun,
}

impl StepScheme {
    pub fn name(self) -> &'static str {
        match self {
            StepScheme::ItoEuler => "ito_euler",
            StepScheme::StratonovichHeun => "stratonovich_heun",
        }
    }

    pub fn parse(s: &str) -> Option<StepScheme> {
        match s {
            "ito_euler" => Some(StepScheme::ItoEuler),
            "stratonovich_heun" => Some(StepScheme::StratonovichHeun),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Uniform,
    /// Wrapped normal around `center`.
    Blob { center: Vec3, sigma: f64 },
    Points(Vec<Vec3>),
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub scheme: StepScheme,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub domain: Grid,
    pub positions: Vec<Vec3>,
    pub seed: u64,
    pub scheme: StepScheme,
    /// Step actually used: `t_final` divided by the rounded step count.
    pub dt: f64,
    pub steps: u64,
    pub time: f64,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn particle_rng(seed: u64, particle: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&particle.to_le_bytes());
    key[16..20].copy_from_slice(OENS_MAGIC);
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

fn normal3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    )
}

/// Maps `p` into `[lower, lower + extent)` on every axis.
pub fn wrap(domain: &Grid, p: Vec3) -> Vec3 {
    let (lo, ext) = (domain.lower(), domain.extent());
    let mut q = p;
    for d in 0..3 {
        let mut r = (p[d] - lo[d]).rem_euclid(ext[d]);
        if r >= ext[d] {
            r = 0.0;
        }
        q[d] = lo[d] + r;
    }
    q
}

fn initial_positions(domain: &Grid, n: usize, init: &Initial, seed: u64) -> Result<Vec<Vec3>, McError> {
    let (lo, ext) = (domain.lower(), domain.extent());
    match init {
        Initial::Points(p) => {
            if p.len() != n {
                return Err(McError::InvalidSettings(format!(
                    "{} initial points for N = {n}",
                    p.len()
                )));
            }
            Ok(p.iter().map(|x| wrap(domain, *x)).collect())
        }
        Initial::Uniform => Ok((0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = particle_rng(seed, i as u64, INIT_STREAM);
                let u: [f64; 3] = std::array::from_fn(|_| rand_distr::StandardUniform.sample(&mut rng));
                wrap(domain, Vec3::new(lo[0] + u[0] * ext[0], lo[1] + u[1] * ext[1], lo[2] + u[2] * ext[2]))
            })
            .collect()),
        Initial::Blob { center, sigma } => {
            if !(*sigma > 0.0) {
                return Err(McError::InvalidSettings(format!("blob sigma {sigma}")));
            }
            Ok((0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = particle_rng(seed, i as u64, INIT_STREAM);
                    wrap(domain, center + *sigma * normal3(&mut rng))
                })
                .collect())
        }
    }
}

fn eval(field: &dyn VectorField, p: &Vec3) -> Result<Vec3, McError> {
    field.value(p).map_err(|source| McError::Field {
        point: [p.x, p.y, p.z],
        source,
    })
}

fn step(
    field: &dyn VectorField,
    x: Vec3,
    dw: Vec3,
    scheme: StepScheme,
) -> Result<Vec3, McError> {
    let w0 = eval(field, &x)?;
    let dx = match scheme {
        StepScheme::ItoEuler => w0.cross(&dw),
        StepScheme::StratonovichHeun => {
            let w1 = eval(field, &(x + w0.cross(&dw)))?;
            (0.5 * (w0 + w1)).cross(&dw)
        }
    };
    Ok(x + dx)
}

/// Single increment of particle `particle` at step `index`, before wrapping.
pub fn increment(
    field: &dyn VectorField,
    x: Vec3,
    seed: u64,
    particle: u64,
    index: u64,
    dt: f64,
    scheme: StepScheme,
) -> Result<Vec3, McError> {
    let mut rng = particle_rng(seed, particle, index);
    let dw = dt.sqrt() * normal3(&mut rng);
    Ok(step(field, x, dw, scheme)? - x)
}

pub fn simulate(
    field: &dyn VectorField,
    domain: &Grid,
    n: usize,
    init: &Initial,
    opts: &SimOptions,
) -> Result<Ensemble, McError> {
    if !domain.fully_periodic() {
        return Err(McError::NotPeriodic);
    }
    if !(opts.dt > 0.0) || !(opts.t_final >= 0.0) {
        return Err(McError::InvalidSettings(format!(
            "dt = {}, T = {}",
            opts.dt, opts.t_final
        )));
    }
    let steps = (opts.t_final / opts.dt).round() as u64;
    let dt = if steps == 0 { opts.dt } else { opts.t_final / steps as f64 };
    let start = initial_positions(domain, n, init, opts.seed)?;
    let sq = dt.sqrt();
    let positions = start
        .into_par_iter()
        .enumerate()
        .map(|(i, mut x)| {
            for s in 0..steps {
                let mut rng = particle_rng(opts.seed, i as u64, s);
                let dw = sq * normal3(&mut rng);
                x = wrap(domain, step(field, x, dw, opts.scheme)?);
            }
            Ok(x)
        })
        .collect::<Result<Vec<_>, McError>>()?;
    Ok(Ensemble {
        domain: *domain,
        positions,
        seed: opts.seed,
        scheme: opts.scheme,
        dt,
        steps,
        time: steps as f64 * dt,
    })
}

/// Empirical density on `bins` equal cells of the ensemble's box.
pub fn histogram(ensemble: &Ensemble, bins: [usize; 3]) -> Result<GridScalar, McError> {
    let g = ensemble.domain.with_cells(bins)?;
    let (lo, h) = (g.lower(), g.spacing());
    let counts = ensemble
        .positions
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut c = vec![0u64; g.len()];
            for p in chunk {
                let ijk: [usize; 3] =
                    std::array::from_fn(|d| (((p[d] - lo[d]) / h[d]).floor().max(0.0) as usize).min(bins[d] - 1));
                c[g.index(ijk[0], ijk[1], ijk[2])] += 1;
            }
            c
        })
        .reduce(
            || vec![0u64; g.len()],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let scale = 1.0 / (ensemble.len().max(1) as f64 * g.cell_volume());
    Ok(GridScalar::new(g, counts.iter().map(|&c| c as f64 * scale).collect())?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distances {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

pub fn compare(a: &GridScalar, b: &GridScalar) -> Result<Distances, McError> {
    let (ga, gb) = (&a.grid, &b.grid);
    if ga.cells() != gb.cells() || ga.extent() != gb.extent() {
        return Err(GridError::ShapeMismatch(format!(
            "{:?}/{:?} vs {:?}/{:?}",
            ga.cells(),
            ga.extent(),
            gb.cells(),
            gb.extent()
        ))
        .into());
    }
    let dv = ga.cell_volume();
    let (mut l1, mut l2, mut linf) = (0.0, 0.0, 0.0f64);
    for (x, y) in a.values.iter().zip(&b.values) {
        let d = (x - y).abs();
        l1 += d;
        l2 += d * d;
        linf = linf.max(d);
    }
    Ok(Distances {
        l1: l1 * dv,
        l2: (l2 * dv).sqrt(),
        linf,
    })
}

/// Expected l1 distance between an `n`-particle histogram and its mean
/// `density`, from the normal approximation to the bin counts. With
/// `ensembles = 2` it is the expected distance between two independent
/// histograms.
pub fn expected_l1_noise(density: &GridScalar, n: usize, ensembles: usize) -> f64 {
    let dv = density.grid.cell_volume();
    let k = ensembles as f64;
    density
        .values
        .iter()
        .map(|d| {
            let p = (d * dv).clamp(0.0, 1.0);
            (2.0 / std::f64::consts::PI).sqrt() * (k * p * (1.0 - p) / n as f64).sqrt()
        })
        .sum()
}

pub fn write_oens(mut out: impl Write, positions: &[Vec3]) -> Result<(), McError> {
    let mut buf = Vec::with_capacity(16 + 24 * positions.len());
    buf.extend_from_slice(OENS_MAGIC);
    buf.extend_from_slice(&OENS_VERSION.to_le_bytes());
    buf.extend_from_slice(&(positions.len() as u64).to_le_bytes());
    for p in positions {
        for v in [p.x, p.y, p.z] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_oens(mut input: impl Read) -> Result<Vec<Vec3>, McError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() < 16 {
        return Err(McError::Format("truncated header".into()));
    }
    if &buf[..4] != OENS_MAGIC {
        return Err(McError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != OENS_VERSION {
        return Err(McError::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    let payload = &buf[16..];
    if n.checked_mul(24) != Some(payload.len() as u64) {
        return Err(McError::Format(format!(
            "payload has {} bytes for N = {n}",
            payload.len()
        )));
    }
    Ok(payload
        .chunks_exact(24)
        .map(|c| {
            let f = |k: usize| f64::from_le_bytes(c[8 * k..8 * k + 8].try_into().unwrap());
            Vec3::new(f(0), f(1), f(2))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Axis, FieldSpec};
    use crate::grid::{build_grid, Boundary, GridConfig, OriginMode};
    use std::f64::consts::PI;

    fn torus(origin: OriginMode) -> Grid {
        build_grid(&GridConfig::cube(4, 2.0 * PI, origin, Boundary::Periodic)).unwrap()
    }

    #[test]
    fn wrapping_stays_in_the_fundamental_domain() {
        let g = torus(OriginMode::Center);
        for p in [Vec3::new(-PI, PI, 7.0 * PI), Vec3::new(-1e-17 - PI, 0.0, -100.0)] {
            let q = wrap(&g, p);
            for d in 0..3 {
                assert!(q[d] >= -PI && q[d] < PI, "{q:?}");
            }
        }
        assert_eq!(wrap(&g, Vec3::new(PI, 0.0, 0.0)).x, -PI);
    }

    #[test]
    fn rejects_walls() {
        let g = build_grid(&GridConfig::cube(4, 1.0, OriginMode::Corner, Boundary::Dirichlet)).unwrap();
        let opts = SimOptions { dt: 0.1, t_final: 1.0, seed: 1, scheme: StepScheme::ItoEuler };
        let r = simulate(&FieldSpec::abc(1.0, 1.0, 1.0), &g, 4, &Initial::Uniform, &opts);
        assert!(matches!(r, Err(McError::NotPeriodic)));
    }

    #[test]
    fn point_mass_histogram() {
        let g = torus(OriginMode::Corner);
        let e = Ensemble {
            domain: g,
            positions: vec![Vec3::new(1.0, 2.0, 3.0); 7],
            seed: 0,
            scheme: StepScheme::ItoEuler,
            dt: 0.0,
            steps: 0,
            time: 0.0,
        };
        let h = histogram(&e, [4, 4, 4]).unwrap();
        let dv = h.grid.cell_volume();
        let nonzero: Vec<f64> = h.values.iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(nonzero, vec![1.0 / dv]);
        assert!((h.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compare_metrics() {
        let g = torus(OriginMode::Corner);
        let u = GridScalar::from_fn(g, |_| 1.0);
        let z = compare(&u, &u).unwrap();
        assert_eq!((z.l1, z.l2, z.linf), (0.0, 0.0, 0.0));
        // Dyadic perturbations keep `(1 + δ) − 1 = δ` exact.
        let delta = |p: &Vec3| if p.x.sin() * p.y.cos() > 0.0 { 0.25 } else { -0.125 };
        let v = GridScalar::from_fn(g, |p| 1.0 + delta(p));
        let exact: f64 = (0..g.len()).map(|i| delta(&g.center(i)).abs()).sum::<f64>() * g.cell_volume();
        let d = compare(&u, &v).unwrap();
        assert_eq!(d.l1, exact);
        assert_eq!(d.linf, 0.25);
        let w = GridScalar::zeros(g.with_cells([2, 4, 4]).unwrap());
        assert!(compare(&u, &w).is_err());
    }

    #[test]
    fn oens_round_trip() {
        let pts = vec![Vec3::new(0.1, -2.0, 3.5), Vec3::new(f64::MIN_POSITIVE, 1e300, -0.0)];
        let mut bytes = Vec::new();
        write_oens(&mut bytes, &pts).unwrap();
        assert_eq!(bytes.len(), 16 + 48);
        assert_eq!(&bytes[..4], b"OENS");
        let back = read_oens(bytes.as_slice()).unwrap();
        for (a, b) in back.iter().zip(&pts) {
            for d in 0..3 {
                assert_eq!(a[d].to_bits(), b[d].to_bits());
            }
        }
        assert!(read_oens(&bytes[..bytes.len() - 8]).is_err());
    }

    #[test]
    fn leaves_are_invariant_under_grad_z() {
        let g = torus(OriginMode::Corner);
        let opts = SimOptions { dt: 0.01, t_final: 0.5, seed: 9, scheme: StepScheme::ItoEuler };
        let init = Initial::Points((0..64).map(|i| Vec3::new(0.1 * i as f64, 0.2, 0.05 * i as f64)).collect());
        let e = simulate(&FieldSpec::grad_axis(Axis::Z), &g, 64, &init, &opts).unwrap();
        assert_eq!(e.steps, 50);
        let Initial::Points(start) = init else { unreachable!() };
        for (a, b) in e.positions.iter().zip(&start) {
            assert_eq!(a.z, b.z);
            assert_ne!(a.x, b.x);
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in [StepScheme::ItoEuler, StepScheme::StratonovichHeun] {
            assert_eq!(StepScheme::parse(s.name()), Some(s));
        }
        assert_eq!(StepScheme::parse("milstein"), None);
    }
}
