//! Second-order central differences at cell centers.

use rayon::prelude::*;

use super::{FieldSamples, Grid, GridError, GridScalar, GridVector, Location};
use crate::field::Vec3;

/// Closure at a non-periodic boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ghost {
    /// Ghost value `-u`: the unknown vanishes on the wall.
    OddReflection,
    /// One-sided second-order stencils, for sampled coefficient fields.
    Extrapolate,
}

struct Line {
    n: usize,
    stride: usize,
    periodic: bool,
}

impl Line {
    fn new(grid: &Grid, axis: usize) -> Line {
        let c = grid.cells();
        let stride = match axis {
            0 => 1,
            1 => c[0],
            _ => c[0] * c[1],
        };
        Line {
            n: c[axis],
            stride,
            periodic: grid.is_periodic(axis),
        }
    }

    /// Value `off` cells away along the line (`|off| ≤ n - 1`), wrapping on
    /// periodic axes; `None` outside a bounded axis.
    #[inline]
    fn at(&self, u: &[f64], idx: usize, pos: usize, off: isize) -> Option<f64> {
        let t = pos as isize + off;
        if t >= 0 && (t as usize) < self.n {
            Some(u[(idx as isize + off * self.stride as isize) as usize])
        } else if self.periodic {
            let w = t.rem_euclid(self.n as isize);
            Some(u[(idx as isize + (w - pos as isize) * self.stride as isize) as usize])
        } else {
            None
        }
    }
}

/// `∂u/∂x_axis` at every cell center.
pub fn derivative(grid: &Grid, u: &[f64], axis: usize, ghost: Ghost) -> Vec<f64> {
    let line = Line::new(grid, axis);
    let h = grid.spacing()[axis];
    (0..u.len())
        .into_par_iter()
        .map(|idx| {
            let pos = grid.ijk(idx)[axis];
            let c = u[idx];
            match (line.at(u, idx, pos, -1), line.at(u, idx, pos, 1)) {
                (Some(m), Some(p)) => (p - m) / (2.0 * h),
                (None, Some(p)) => match ghost {
                    Ghost::OddReflection => (p + c) / (2.0 * h),
                    Ghost::Extrapolate => match line.at(u, idx, pos, 2) {
                        Some(pp) => (-3.0 * c + 4.0 * p - pp) / (2.0 * h),
                        None => (p - c) / h,
                    },
                },
                (Some(m), None) => match ghost {
                    Ghost::OddReflection => (-c - m) / (2.0 * h),
                    Ghost::Extrapolate => match line.at(u, idx, pos, -2) {
                        Some(mm) => (3.0 * c - 4.0 * m + mm) / (2.0 * h),
                        None => (c - m) / h,
                    },
                },
                (None, None) => 0.0,
            }
        })
        .collect()
}

/// `∂²u/∂x_axis²` with the compact three-point stencil.
pub fn second_derivative(grid: &Grid, u: &[f64], axis: usize, ghost: Ghost) -> Vec<f64> {
    let line = Line::new(grid, axis);
    let h2 = grid.spacing()[axis].powi(2);
    (0..u.len())
        .into_par_iter()
        .map(|idx| {
            let pos = grid.ijk(idx)[axis];
            let c = u[idx];
            match (line.at(u, idx, pos, -1), line.at(u, idx, pos, 1)) {
                (Some(m), Some(p)) => (p - 2.0 * c + m) / h2,
                (None, Some(p)) => match ghost {
                    Ghost::OddReflection => (p - 3.0 * c) / h2,
                    Ghost::Extrapolate => {
                        match (line.at(u, idx, pos, 2), line.at(u, idx, pos, 3)) {
                            (Some(p2), Some(p3)) => (2.0 * c - 5.0 * p + 4.0 * p2 - p3) / h2,
                            _ => 0.0,
                        }
                    }
                },
                (Some(m), None) => match ghost {
                    Ghost::OddReflection => (m - 3.0 * c) / h2,
                    Ghost::Extrapolate => {
                        match (line.at(u, idx, pos, -2), line.at(u, idx, pos, -3)) {
                            (Some(m2), Some(m3)) => (2.0 * c - 5.0 * m + 4.0 * m2 - m3) / h2,
                            _ => 0.0,
                        }
                    }
                },
                (None, None) => -2.0 * c / h2,
            }
        })
        .collect()
}

pub fn gradient(u: &GridScalar, ghost: Ghost) -> GridVector {
    let g = &u.grid;
    let parts: Vec<Vec<f64>> = (0..3).map(|d| derivative(g, &u.values, d, ghost)).collect();
    GridVector {
        grid: u.grid,
        values: (0..g.len())
            .map(|i| Vec3::new(parts[0][i], parts[1][i], parts[2][i]))
            .collect(),
    }
}

pub fn divergence(f: &GridVector, ghost: Ghost) -> GridScalar {
    let g = &f.grid;
    let mut out = vec![0.0; g.len()];
    for d in 0..3 {
        let comp: Vec<f64> = f.values.iter().map(|v| v[d]).collect();
        for (o, v) in out.iter_mut().zip(derivative(g, &comp, d, ghost)) {
            *o += v;
        }
    }
    GridScalar {
        grid: f.grid,
        values: out,
    }
}

pub fn curl(f: &GridVector, ghost: Ghost) -> GridVector {
    let g = &f.grid;
    let comp = |d: usize| -> Vec<f64> { f.values.iter().map(|v| v[d]).collect() };
    let (fx, fy, fz) = (comp(0), comp(1), comp(2));
    let dz_dy = derivative(g, &fz, 1, ghost);
    let dy_dz = derivative(g, &fy, 2, ghost);
    let dx_dz = derivative(g, &fx, 2, ghost);
    let dz_dx = derivative(g, &fz, 0, ghost);
    let dy_dx = derivative(g, &fy, 0, ghost);
    let dx_dy = derivative(g, &fx, 1, ghost);
    GridVector {
        grid: f.grid,
        values: (0..g.len())
            .map(|i| Vec3::new(dz_dy[i] - dy_dz[i], dx_dz[i] - dz_dx[i], dy_dx[i] - dx_dy[i]))
            .collect(),
    }
}

/// Midpoint-rule quadratic forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerProducts {
    /// `Σ u v ΔV`
    pub l2: f64,
    /// `Σ (P∇u)·(P∇v) ΔV`
    pub perp: f64,
    /// `l2 + perp`
    pub hperp: f64,
}

/// Gradients use odd-reflection ghosts, i.e. `u` and `v` vanish on walls.
pub fn inner_products(
    u: &GridScalar,
    v: &GridScalar,
    samples: &FieldSamples,
) -> Result<InnerProducts, GridError> {
    if u.grid != v.grid || samples.location != Location::Cells || samples.len() != u.grid.len() {
        return Err(GridError::ShapeMismatch(
            "inner products need u, v and cell samples on one grid".into(),
        ));
    }
    let gu = gradient(u, Ghost::OddReflection);
    let gv = gradient(v, Ghost::OddReflection);
    let dv = u.grid.cell_volume();
    let mut l2 = 0.0;
    let mut perp = 0.0;
    for i in 0..u.grid.len() {
        let p = samples.samples[i]
            .projector()
            .map_err(|source| GridError::Field { index: i, source })?;
        l2 += u.values[i] * v.values[i];
        perp += (p * gu.values[i]).dot(&(p * gv.values[i]));
    }
    let l2 = l2 * dv;
    let perp = perp * dv;
    Ok(InnerProducts {
        l2,
        perp,
        hperp: l2 + perp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Axis, FieldSpec};
    use crate::grid::{build_grid, sample_on_grid, Boundary, GridConfig, OriginMode};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(n: usize, l: f64, bc: [Boundary; 3]) -> Grid {
        build_grid(&GridConfig::new([n; 3], [l; 3], OriginMode::Corner, bc)).unwrap()
    }

    #[test]
    fn divergence_of_example1_aperp() {
        let g = grid(8, 1.0, [Boundary::Periodic, Boundary::Dirichlet, Boundary::Dirichlet]);
        let a = GridVector::from_fn(g, |p| Vec3::new(0.0, 0.0, p.z));
        let div = divergence(&a, Ghost::Extrapolate);
        assert!(div.values.iter().all(|d| (d - 1.0).abs() < 1e-12));
    }

    #[test]
    fn curl_of_rotating_shear_is_second_order() {
        let alpha = 1.0;
        let err = |n: usize| {
            let g = grid(n, 2.0 * PI, [Boundary::Periodic; 3]);
            let w = GridVector::from_fn(g, |p| Vec3::new((alpha * p.z).cos(), (alpha * p.z).sin(), 0.0));
            let c = curl(&w, Ghost::Extrapolate);
            c.values
                .iter()
                .zip(&w.values)
                .map(|(c, w)| (c + alpha * w).norm())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e1 < 0.03 && e1 / e2 > 3.8, "{e1} {e2}");
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = grid(5, 1.0, [Boundary::Dirichlet, Boundary::Periodic, Boundary::Dirichlet]);
        let u = GridScalar::from_fn(g, |_| 3.25);
        let gr = gradient(&u, Ghost::Extrapolate);
        assert!(gr.values.iter().all(|v| *v == Vec3::zeros()));
    }

    #[test]
    fn odd_reflection_is_second_order_for_vanishing_functions() {
        let err = |n: usize| {
            let g = grid(n, 1.0, [Boundary::Dirichlet; 3]);
            let u = GridScalar::from_fn(g, |p| (PI * p.x).sin() * (PI * p.y).sin() * (PI * p.z).sin());
            let d2 = second_derivative(&g, &u.values, 0, Ghost::OddReflection);
            d2.iter()
                .zip(&u.values)
                .map(|(a, b)| (a + PI * PI * b).abs())
                .fold(0.0, f64::max)
        };
        assert!(err(16) / err(32) > 3.8);
    }

    #[test]
    fn extrapolated_second_derivative_is_exact_for_cubics() {
        let g = grid(6, 1.0, [Boundary::Dirichlet; 3]);
        let u = GridScalar::from_fn(g, |p| p.y.powi(3) - 2.0 * p.y * p.y);
        let d2 = second_derivative(&g, &u.values, 1, Ghost::Extrapolate);
        for i in 0..g.len() {
            let y = g.center(i).y;
            assert!((d2[i] - (6.0 * y - 4.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn inner_product_examples() {
        let g = grid(8, 2.0, [Boundary::Periodic; 3]);
        let s = sample_on_grid(&FieldSpec::grad_axis(Axis::X), &g, Location::Cells).unwrap();
        let u = GridScalar::from_fn(g, |p| (PI * p.x).sin() + 0.3 * (PI * p.x).cos());
        let ip = inner_products(&u, &u, &s).unwrap();
        assert!(ip.perp.abs() < 1e-24);
        assert_eq!(ip.hperp, ip.l2 + ip.perp);

        let one = GridScalar::from_fn(g, |_| 1.0);
        let s = sample_on_grid(&FieldSpec::rotating_shear(1.0), &g, Location::Cells).unwrap();
        let ip = inner_products(&one, &one, &s).unwrap();
        assert!((ip.l2 - 8.0).abs() < 1e-12);
        assert_eq!(ip.perp, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn perp_form_is_symmetric_and_nonnegative(seed in 0u64..1000) {
            let g = grid(6, 1.0, [Boundary::Dirichlet, Boundary::Periodic, Boundary::Dirichlet]);
            let s = sample_on_grid(&FieldSpec::abc(1.0, 0.6, 0.3), &g, Location::Cells).unwrap();
            let rnd = |salt: u64| {
                GridScalar::from_fn(g, move |p| {
                    let t = (p.x * 12.9898 + p.y * 78.233 + p.z * 37.719 + (seed * 31 + salt) as f64).sin() * 43758.5453;
                    t - t.floor() - 0.5
                })
            };
            let (u, v) = (rnd(1), rnd(2));
            let uv = inner_products(&u, &v, &s).unwrap();
            let vu = inner_products(&v, &u, &s).unwrap();
            prop_assert!((uv.perp - vu.perp).abs() <= 1e-12 * uv.perp.abs().max(1.0));
            prop_assert!(inner_products(&u, &u, &s).unwrap().perp >= 0.0);
        }

        #[test]
        fn periodic_divergence_telescopes(seed in 0u64..1000) {
            let g = build_grid(&GridConfig::new([5, 6, 7], [1.0, 2.0, 3.0], OriginMode::Corner, [Boundary::Periodic; 3])).unwrap();
            let f = GridVector::from_fn(g, move |p| {
                let s = seed as f64;
                Vec3::new((p.x * 7.0 + s).sin() * p.y, (p.z * 3.0 - s).cos(), (p.x + p.y * p.z + s).sin())
            });
            let div = divergence(&f, Ghost::Extrapolate);
            let total: f64 = div.values.iter().sum::<f64>() * g.cell_volume();
            prop_assert!(total.abs() < 1e-12);
        }
    }
}
