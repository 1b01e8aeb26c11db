use std::f64::consts::PI;

use orthlap::field::{FieldSpec, Vec3, VectorField};
use orthlap::grid::{build_grid, Boundary, Grid, GridConfig, OriginMode};
use orthlap::montecarlo::{
    histogram, increment, read_oens, simulate, write_oens, Ensemble, Initial, SimOptions,
    StepScheme,
};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn torus() -> Grid {
    build_grid(&GridConfig::cube(8, 2.0 * PI, OriginMode::Corner, Boundary::Periodic)).unwrap()
}

fn run(field: &FieldSpec, n: usize, init: &Initial, t: f64, dt: f64, seed: u64) -> Ensemble {
    let opts = SimOptions {
        dt,
        t_final: t,
        seed,
        scheme: StepScheme::ItoEuler,
    };
    simulate(field, &torus(), n, init, &opts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ito_increments_are_orthogonal(
        x in -4.0f64..4.0, y in -4.0f64..4.0, z in -4.0f64..4.0,
        seed in any::<u64>(), particle in 0u64..1_000_000, index in 0u64..10_000,
        dt in 1e-5f64..1.0,
    ) {
        let field = FieldSpec::abc(1.0, 0.7, 0.4);
        let p = Vec3::new(x, y, z);
        let dx = increment(&field, p, seed, particle, index, dt, StepScheme::ItoEuler).unwrap();
        let w = field.value(&p).unwrap();
        // dx = w × dW; the dot product is zero up to the rounding of the cross
        // product and the difference (x + dx) − x.
        prop_assert!(dx.dot(&w).abs() <= 1e-13 * w.norm() * (dx.norm() + p.norm()));
    }
}

#[test]
fn uniform_is_stationary_for_rotating_shear() {
    let n = 200_000;
    let e = run(&FieldSpec::rotating_shear(1.0), n, &Initial::Uniform, 1.0, 0.01, 2024);
    let h = histogram(&e, [8, 8, 8]).unwrap();
    let dv = h.grid.cell_volume();
    let expected = n as f64 / 512.0;
    let chi2: f64 = h
        .values
        .iter()
        .map(|d| {
            let c = d * dv * n as f64;
            (c - expected).powi(2) / expected
        })
        .sum();
    let critical = ChiSquared::new(511.0).unwrap().inverse_cdf(0.99);
    assert!(chi2 < critical, "chi2 {chi2} vs {critical}");
}

#[test]
fn histogram_noise_follows_inverse_sqrt_n() {
    let field = FieldSpec::rotating_shear(1.0);
    let noise = |n: usize| {
        let mut total = 0.0;
        for seed in 0..20 {
            let h = histogram(&run(&field, n, &Initial::Uniform, 0.1, 0.05, seed), [4, 4, 4]).unwrap();
            let mean = 1.0 / h.grid.volume();
            total += (h.values.iter().map(|d| (d / mean - 1.0).powi(2)).sum::<f64>() / h.values.len() as f64).sqrt();
        }
        total / 20.0
    };
    let ratio = noise(4000) / noise(16000);
    assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
}

#[test]
fn ensembles_do_not_depend_on_worker_count() {
    let field = FieldSpec::abc(1.0, 0.7, 0.4);
    let init = Initial::Blob {
        center: Vec3::new(1.0, 2.0, 3.0),
        sigma: 0.4,
    };
    let go = |threads: usize, scheme: StepScheme| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let opts = SimOptions {
                dt: 0.01,
                t_final: 0.2,
                seed: 11,
                scheme,
            };
            let e = simulate(&field, &torus(), 10_000, &init, &opts).unwrap();
            let mut bytes = Vec::new();
            write_oens(&mut bytes, &e.positions).unwrap();
            (bytes, histogram(&e, [8, 8, 8]).unwrap().values)
        })
    };
    for scheme in [StepScheme::ItoEuler, StepScheme::StratonovichHeun] {
        let a = go(1, scheme);
        let b = go(3, scheme);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(read_oens(a.0.as_slice()).unwrap().len(), 10_000);
    }
}

#[test]
fn seeds_and_particles_draw_distinct_streams() {
    let field = FieldSpec::abc(1.0, 1.0, 1.0);
    let p = Vec3::new(0.3, 0.2, 0.1);
    let a = increment(&field, p, 1, 0, 0, 0.1, StepScheme::ItoEuler).unwrap();
    for (seed, particle, index) in [(2, 0, 0), (1, 1, 0), (1, 0, 1)] {
        let b = increment(&field, p, seed, particle, index, 0.1, StepScheme::ItoEuler).unwrap();
        assert_ne!(a, b);
    }
    assert_eq!(a, increment(&field, p, 1, 0, 0, 0.1, StepScheme::ItoEuler).unwrap());
}

#[test]
fn positions_stay_in_the_box() {
    let e = run(&FieldSpec::abc(1.0, 0.7, 0.4), 5000, &Initial::Uniform, 2.0, 0.05, 3);
    let (lo, ext) = (e.domain.lower(), e.domain.extent());
    assert_eq!(e.len(), 5000);
    for p in &e.positions {
        for d in 0..3 {
            assert!(p[d] >= lo[d] && p[d] < lo[d] + ext[d]);
        }
    }
    assert!((histogram(&e, [8, 8, 8]).unwrap().integral() - 1.0).abs() < 1e-12);
}

#[test]
fn stratonovich_matches_the_fokker_planck_equation_for_abc() {
    use orthlap::assembly::assemble_fpe_generator;
    use orthlap::diffusion::{cfl_dt, evolve, gaussian_blob, EvolveOptions};
    use orthlap::grid::{sample_on_grid_lenient, Location};
    use orthlap::montecarlo::{compare, expected_l1_noise};

    // |w| varies for this ABC flow, so the two interpretations differ.
    let field = FieldSpec::abc(1.0, 0.7, 0.4);
    let g = build_grid(&GridConfig::cube(16, 2.0 * PI, OriginMode::Corner, Boundary::Periodic)).unwrap();
    let s = sample_on_grid_lenient(&field, &g, Location::Cells).unwrap();
    let l = assemble_fpe_generator(&g, &field, &s).unwrap();
    let center = Vec3::new(PI, PI, PI);
    let opts = EvolveOptions {
        dt: cfl_dt(&g, &s),
        t_final: 0.5,
        ..EvolveOptions::default()
    };
    let pde = evolve(&gaussian_blob(g, center, 0.5), &l, &opts)
        .unwrap()
        .final_state
        .coarsen([2, 2, 2])
        .unwrap();
    let n = 20_000;
    let noise = expected_l1_noise(&pde, n, 1);
    let l1 = |scheme| {
        let opts = SimOptions { dt: 2e-3, t_final: 0.5, seed: 5, scheme };
        let e = simulate(&field, &g, n, &Initial::Blob { center, sigma: 0.5 }, &opts).unwrap();
        compare(&histogram(&e, [8, 8, 8]).unwrap(), &pde).unwrap().l1
    };
    let (ito, strat) = (l1(StepScheme::ItoEuler), l1(StepScheme::StratonovichHeun));
    assert!(strat <= 1.5 * noise, "stratonovich {strat} noise {noise}");
    assert!(ito >= 2.0 * strat, "ito {ito} stratonovich {strat}");
}
