use std::f64::consts::PI;

use orthlap::assembly::assemble_perp_laplacian;
use orthlap::expr::parse;
use orthlap::field::{sample_geometry, Axis, FieldSpec, DEFAULT_W_MIN};
use orthlap::grid::{build_grid, sample_on_grid, Boundary, Grid, GridConfig, Location, OriginMode};
use orthlap::krylov::EigOptions;
use orthlap::poincare::{
    build_aperp, poincare_report, probe_points, verify_bound, verify_constant, APerpInputs,
    APerpKind, DEFAULT_HELICITY_THRESHOLD, DEFAULT_SLACK,
};
use proptest::prelude::*;

fn dirichlet_cube(n: usize, origin: OriginMode) -> Grid {
    build_grid(&GridConfig::cube(n, 1.0, origin, Boundary::Dirichlet)).unwrap()
}

#[test]
fn example1_bound_holds_on_the_spectrum() {
    let g = build_grid(&GridConfig::new(
        [2, 32, 32],
        [1.0; 3],
        OriginMode::Corner,
        [Boundary::Periodic, Boundary::Dirichlet, Boundary::Dirichlet],
    ))
    .unwrap();
    let f = FieldSpec::grad_axis(Axis::X);
    let a = build_aperp(APerpKind::Example1, &f, &APerpInputs::default(), &g).unwrap();
    let r = poincare_report(&a, &g, DEFAULT_HELICITY_THRESHOLD).unwrap();
    let op = assemble_perp_laplacian(&g, &sample_on_grid(&f, &g, Location::Cells).unwrap()).unwrap();
    let check = verify_bound(&r, &op, DEFAULT_SLACK, &EigOptions::default()).unwrap();
    assert!(check.pass);
    assert_eq!(check.c_squared, 0.25);
    assert!((check.lambda_min - 2.0 * PI * PI).abs() < 0.1, "{}", check.lambda_min);
}

#[test]
fn linear_shear_theorem_constant_holds() {
    let g = dirichlet_cube(32, OriginMode::Corner);
    let f = FieldSpec::linear_shear();
    let inputs = APerpInputs {
        potentials: Some((parse("x").unwrap(), parse("z").unwrap(), parse("y").unwrap())),
        ..APerpInputs::default()
    };
    let a = build_aperp(APerpKind::Clebsch, &f, &inputs, &g).unwrap();
    let r = poincare_report(&a, &g, DEFAULT_HELICITY_THRESHOLD).unwrap();
    assert!((r.c_theorem - 0.25).abs() < 1e-9);
    let op = assemble_perp_laplacian(&g, &sample_on_grid(&f, &g, Location::Cells).unwrap()).unwrap();
    let check = verify_constant(r.c_theorem, &op, DEFAULT_SLACK, &EigOptions::default()).unwrap();
    assert!(check.pass && check.lambda_min >= 0.0625 * 0.9);
    assert!(verify_bound(&r, &op, DEFAULT_SLACK, &EigOptions::default()).unwrap().pass);
}

#[test]
fn foliated_torus_fails_any_positive_constant() {
    let g = build_grid(&GridConfig::cube(8, 2.0 * PI, OriginMode::Corner, Boundary::Periodic)).unwrap();
    let f = FieldSpec::grad_axis(Axis::Z);
    let op = assemble_perp_laplacian(&g, &sample_on_grid(&f, &g, Location::Cells).unwrap()).unwrap();
    let check = verify_constant(0.01, &op, DEFAULT_SLACK, &EigOptions::default()).unwrap();
    assert!(!check.pass);
    assert!(check.lambda_min.abs() < 1e-10);
}

#[test]
fn clebsch_divergence_matches_helicity() {
    let f = FieldSpec::clebsch(
        parse("0.3*sin(y)").unwrap(),
        parse("1 + 0.5*z + 0.2*x").unwrap(),
        parse("x + 0.1*cos(z)").unwrap(),
    );
    let g = dirichlet_cube(6, OriginMode::Corner);
    let a = build_aperp(APerpKind::Clebsch, &f, &APerpInputs::default(), &g).unwrap();
    for p in probe_points(&g) {
        let s = sample_geometry(&f, &p, DEFAULT_W_MIN).unwrap();
        let d = a.divergence(&p).unwrap();
        assert!((d.abs() - s.helicity.abs()).abs() < 1e-5, "{d} {}", s.helicity);
        let v = a.value(&p).unwrap();
        assert!(v.dot(&s.w).abs() <= 1e-8 * v.norm() * s.magnitude + 1e-14);
    }
}

#[test]
fn beltrami_divergence_is_one() {
    let g = dirichlet_cube(8, OriginMode::Center);
    let f = FieldSpec::rotating_shear(1.0);
    let a = build_aperp(APerpKind::Beltrami, &f, &APerpInputs::default(), &g).unwrap();
    for p in probe_points(&g) {
        assert!((a.divergence(&p).unwrap() - 1.0).abs() < 1e-12);
        // Independent check: central differences of a⊥ itself.
        let h = 1e-4;
        let mut div = 0.0;
        for k in 0..3 {
            let (mut q, mut r) = (p, p);
            q[k] += h;
            r[k] -= h;
            div += (a.value(&q).unwrap()[k] - a.value(&r).unwrap()[k]) / (2.0 * h);
        }
        assert!((div - 1.0).abs() < 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn refinement_never_loosens_sampled_constants(n in 2usize..6, alpha in 0.3f64..2.0) {
        let f = FieldSpec::rotating_shear(alpha);
        let coarse = dirichlet_cube(n, OriginMode::Center);
        let fine = dirichlet_cube(2 * n, OriginMode::Center);
        let rc = poincare_report(&build_aperp(APerpKind::Beltrami, &f, &APerpInputs::default(), &coarse).unwrap(), &coarse, DEFAULT_HELICITY_THRESHOLD).unwrap();
        let rf = poincare_report(&build_aperp(APerpKind::Beltrami, &f, &APerpInputs::default(), &fine).unwrap(), &fine, DEFAULT_HELICITY_THRESHOLD).unwrap();
        prop_assert!(rf.epsilon.value <= rc.epsilon.value);
        prop_assert!(rf.nu.value >= rc.nu.value);
        prop_assert!(rf.max_orthogonality_defect <= 1e-8);
    }
}
