use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use orthlap::assembly::{assemble_fpe_generator, assemble_perp_laplacian, AssemblyError, SymmetricSparseOperator};
use orthlap::diffusion::{cfl_dt, evolve, gaussian_blob, EvolveOptions, Scheme};
use orthlap::field::{FieldSpec, Vec3};
use orthlap::grid::{
    sample_on_grid, sample_on_grid_lenient, tangency_report, write_olap, Grid, GridScalar,
    Location, OlapData, Side, DEFAULT_TANGENCY_TOL,
};
use orthlap::krylov::{
    cg_solve, nullspace_dim, smallest_eigs, CgOptions, EigOptions, KrylovError, NullspaceOptions,
};
use orthlap::montecarlo::{
    compare, expected_l1_noise, histogram, simulate, write_oens, Initial, McError, SimOptions,
    StepScheme,
};
use orthlap::poincare::{
    build_aperp, classify_field, poincare_report, verify_bound, APerpInputs, APerpKind,
    PoincareError,
};

use crate::config::{parse_axis, parse_expr, InitialShape, RunConfig};
use crate::study::{convergence_study, evaluate};
use crate::{CliError, Command};

/// Artifact directory plus the values resolved while running, echoed into
/// `metadata.toml`.
struct Run<'a> {
    dir: PathBuf,
    command: &'static str,
    cfg: &'a RunConfig,
    resolved: toml::Table,
}

impl<'a> Run<'a> {
    fn new(dir: &Path, command: &'static str, cfg: &'a RunConfig) -> Result<Run<'a>, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Run {
            dir: dir.to_path_buf(),
            command,
            cfg,
            resolved: toml::Table::new(),
        })
    }

    fn resolve(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.resolved.insert(key.into(), value.into());
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), bytes)?;
        Ok(())
    }

    fn write_scalar(&self, name: &str, s: &GridScalar) -> Result<(), CliError> {
        let mut bytes = Vec::new();
        write_olap(&mut bytes, &OlapData::from(s)).map_err(|e| CliError::Numerical(e.to_string()))?;
        self.write(name, &bytes)
    }

    fn finish(&self) -> Result<(), CliError> {
        let mut meta = toml::Table::new();
        meta.insert("toolkit".into(), "orthlap".into());
        meta.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        meta.insert("command".into(), self.command.into());
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        meta.insert("generated_unix".into(), (now as i64).into());
        meta.insert("resolved".into(), self.resolved.clone().into());
        meta.insert(
            "config".into(),
            toml::Value::try_from(self.cfg).expect("config serializes"),
        );
        self.write("metadata.toml", toml::to_string(&meta).expect("table serializes").as_bytes())
    }
}

fn setup(cfg: &RunConfig) -> Result<(Grid, FieldSpec), CliError> {
    let grid = cfg.domain.grid()?;
    let field = cfg.field.spec(grid.diagonal())?;
    Ok((grid, field))
}

fn assembly_error(e: AssemblyError) -> CliError {
    match e {
        AssemblyError::NearNullField { .. } => CliError::Config(format!("field unusable for −Δ⊥: {e}")),
        e => CliError::Numerical(e.to_string()),
    }
}

fn perp_operator(field: &FieldSpec, grid: &Grid) -> Result<SymmetricSparseOperator, CliError> {
    let samples = sample_on_grid(field, grid, Location::Cells)
        .map_err(|e| CliError::Config(format!("field unusable for −Δ⊥: {e}")))?;
    assemble_perp_laplacian(grid, &samples).map_err(assembly_error)
}

fn eig_options(cfg: &RunConfig) -> EigOptions {
    EigOptions {
        tol: cfg.solver.eig_tol,
        seed: cfg.solver.eig_seed,
        ..EigOptions::default()
    }
}

fn cg_options(cfg: &RunConfig) -> CgOptions {
    CgOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        jacobi: cfg.solver.jacobi,
        ..CgOptions::default()
    }
}

fn point(p: &Vec3) -> String {
    format!("{:e} {:e} {:e}", p.x, p.y, p.z)
}

pub fn dispatch(command: &Command, cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let mut run = Run::new(out, command.name(), cfg)?;
    let result = match command {
        Command::Classify => classify(&mut run),
        Command::Tangency => tangency(&mut run),
        Command::Poincare { .. } => poincare(&mut run),
        Command::Solve(_) => solve(&mut run),
        Command::Spectrum { .. } => spectrum(&mut run),
        Command::Evolve(_) => evolve_cmd(&mut run),
        Command::Mc(_) => mc(&mut run),
        Command::Convergence(_) => convergence(&mut run),
    };
    // Failed runs still leave their metadata behind.
    run.finish()?;
    result
}

fn classify(run: &mut Run) -> Result<String, CliError> {
    let (grid, field) = setup(run.cfg)?;
    let tau = run.cfg.poincare.tau_h;
    let c = classify_field(&field, &grid, tau).map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut s = String::new();
    let _ = writeln!(s, "field = {}", field.kind.name());
    let _ = writeln!(s, "classification = {}", c.class.name());
    let _ = writeln!(s, "tau_h = {tau:e}");
    for (k, e) in [
        ("inf_abs_h", &c.inf_abs_h),
        ("sup_abs_h", &c.sup_abs_h),
        ("min_w", &c.min_w),
        ("max_w", &c.max_w),
    ] {
        let _ = writeln!(s, "{k} = {:e}", e.value);
        let _ = writeln!(s, "{k}_at = {}", point(&e.point));
    }
    let _ = writeln!(s, "near_null = {}", c.near_null);
    run.write("classify.txt", s.as_bytes())?;
    Ok(s)
}

fn tangency(run: &mut Run) -> Result<String, CliError> {
    let (grid, field) = setup(run.cfg)?;
    let r = tangency_report(&field, &grid, DEFAULT_TANGENCY_TOL).map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut csv = String::from("axis,side,max_normal,x,y,z,null_points\n");
    for f in &r.faces {
        let side = if f.side == Side::Low { "low" } else { "high" };
        let p = f.worst_point;
        let _ = writeln!(
            csv,
            "{},{side},{:e},{:e},{:e},{:e},{}",
            ["x", "y", "z"][f.axis.index()],
            f.max_normal,
            p.x,
            p.y,
            p.z,
            f.null_points
        );
    }
    run.write("tangency.csv", csv.as_bytes())?;
    let worst = r.faces.iter().map(|f| f.max_normal).fold(0.0, f64::max);
    Ok(format!(
        "face_sets = {}\nmax_normal = {worst:e}\ntolerance = {:e}\npass = {}\n",
        r.faces.len(),
        r.tolerance,
        r.pass()
    ))
}

fn poincare_error(e: PoincareError) -> CliError {
    match e {
        PoincareError::Precondition { .. } | PoincareError::MissingPotentials => CliError::Config(e.to_string()),
        e => CliError::Numerical(e.to_string()),
    }
}

fn poincare(run: &mut Run) -> Result<String, CliError> {
    let (grid, field) = setup(run.cfg)?;
    let pc = &run.cfg.poincare;
    let kind = APerpKind::parse(&pc.construction)
        .ok_or_else(|| CliError::Config(format!("[poincare] unknown construction {:?}", pc.construction)))?;
    let potentials = match (&pc.phi, &pc.psi, &pc.theta) {
        (None, None, None) => None,
        (Some(a), Some(b), Some(c)) => Some((
            parse_expr("poincare", "phi", a)?,
            parse_expr("poincare", "psi", b)?,
            parse_expr("poincare", "theta", c)?,
        )),
        _ => return Err(CliError::Config("[poincare] phi, psi and theta go together".into())),
    };
    let inputs = APerpInputs {
        origin: pc.origin.map(Vec3::from),
        potentials,
        fd_step: pc.fd_step,
    };
    let aperp = build_aperp(kind, &field, &inputs, &grid).map_err(poincare_error)?;
    run.resolve("aperp_origin", aperp.origin.iter().copied().collect::<Vec<f64>>());
    run.resolve("aperp_fd_step", aperp.fd_step);
    let report = poincare_report(&aperp, &grid, pc.tau_h).map_err(poincare_error)?;
    let mut kv = report.to_key_value();
    run.write("poincare.csv", report.to_csv().as_bytes())?;
    if pc.verify {
        let op = perp_operator(&field, &grid)?;
        let check = verify_bound(&report, &op, pc.slack, &eig_options(run.cfg)).map_err(poincare_error)?;
        let _ = writeln!(kv, "lambda_min = {:.12e}", check.lambda_min);
        let _ = writeln!(kv, "lambda_min_residual = {:e}", check.residual);
        let _ = writeln!(kv, "c_checked = {:.12e}", check.c);
        let _ = writeln!(kv, "c_squared = {:.12e}", check.c_squared);
        let _ = writeln!(kv, "slack = {}", check.slack);
        let _ = writeln!(kv, "margin = {:.12e}", check.margin);
        let _ = writeln!(kv, "bound_pass = {}", check.pass);
    }
    run.write("poincare.txt", kv.as_bytes())?;
    Ok(kv)
}

fn solve(run: &mut Run) -> Result<String, CliError> {
    let (grid, field) = setup(run.cfg)?;
    let op = perp_operator(&field, &grid)?;
    let phi = evaluate(&parse_expr("problem", "rhs", &run.cfg.problem.rhs)?, &grid)?;
    // The assembled matrix is −Δ⊥.
    let b: Vec<f64> = phi.values.iter().map(|v| -v).collect();
    let (x, stats, failure) = match cg_solve(&op, &b, &cg_options(run.cfg), None) {
        Ok((x, s)) => (x, s, None),
        Err(KrylovError::NoConvergence { x, stats }) => {
            let msg = format!(
                "CG stopped after {} iterations at relative residual {:e}",
                stats.iterations,
                stats.relative_residual()
            );
            (x, stats, Some(msg))
        }
        Err(e) => return Err(CliError::Numerical(e.to_string())),
    };
    let u = GridScalar::new(grid, x).expect("one value per cell");
    run.write_scalar("solution.olap", &u)?;
    let mut hist = Vec::new();
    stats.write_history_csv(&mut hist)?;
    run.write("residual_history.csv", &hist)?;
    let mut s = String::new();
    let _ = writeln!(s, "iterations = {}", stats.iterations);
    let _ = writeln!(s, "relative_residual = {:e}", stats.relative_residual());
    let _ = writeln!(s, "converged = {}", stats.converged);
    let _ = writeln!(s, "max_abs_u = {:e}", u.values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    if let Some(src) = &run.cfg.problem.exact {
        let exact = evaluate(&parse_expr("problem", "exact", src)?, &grid)?;
        let err: f64 = u.values.iter().zip(&exact.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let _ = writeln!(s, "l2_error = {:e}", (err * grid.cell_volume()).sqrt());
    }
    run.write("solve.txt", s.as_bytes())?;
    match failure {
        None => Ok(s),
        Some(msg) => Err(CliError::Numerical(msg)),
    }
}

fn spectrum(run: &mut Run) -> Result<String, CliError> {
    let (grid, field) = setup(run.cfg)?;
    let op = perp_operator(&field, &grid)?;
    let eig = eig_options(run.cfg);
    let r = smallest_eigs(&op, run.cfg.solver.k, &eig, None).map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut csv = String::from("index,eigenvalue,residual,converged\n");
    for i in 0..r.eigenvalues.len() {
        let _ = writeln!(csv, "{i},{:e},{:e},{}", r.eigenvalues[i], r.residuals[i], r.converged[i]);
    }
    run.write("spectrum.csv", csv.as_bytes())?;
    let mut s = String::new();
    let _ = writeln!(s, "k = {}", r.eigenvalues.len());
    let _ = writeln!(s, "lambda_min = {:e}", r.eigenvalues[0]);
    let _ = writeln!(s, "all_converged = {}", r.all_converged());
    let _ = writeln!(s, "norm_inf = {:e}", r.norm_inf);
    let nd = nullspace_dim(
        &op,
        &NullspaceOptions {
            eig,
            ..NullspaceOptions::default()
        },
    );
    let result = match nd {
        Ok(nd) => {
            let _ = writeln!(s, "nullspace_dimension = {}", nd.dimension);
            let _ = writeln!(s, "null_threshold = {:e}", nd.threshold);
            let _ = writeln!(s, "first_nonzero = {:e}", nd.first_nonzero);
            Ok(s.clone())
        }
        Err(e) => {
            let _ = writeln!(s, "nullspace_dimension = inconclusive");
            Err(CliError::Numerical(e.to_string()))
        }
    };
    run.write("spectrum.txt", s.as_bytes())?;
    if !r.all_converged() {
        return Err(CliError::Numerical("eigenpairs did not converge".into()));
    }
    result
}

fn initial_state(run: &RunConfig, grid: &Grid) -> Result<GridScalar, CliError> {
    Ok(match run.initial.shape(grid)? {
        InitialShape::Uniform => GridScalar::from_fn(*grid, |_| 1.0),
        InitialShape::Blob { center, sigma } => gaussian_blob(*grid, center, sigma),
    })
}

fn evolve_cmd(run: &mut Run) -> Result<String, CliError> {
    let (grid, field) = setup(run.cfg)?;
    let ec = &run.cfg.evolve;
    let scheme = Scheme::parse(&ec.scheme)
        .ok_or_else(|| CliError::Config(format!("[evolve] unknown scheme {:?}", ec.scheme)))?;
    let leaf_axis = ec.leaf_axis.as_deref().map(parse_axis).transpose()?.map(|a| a.index());
    let samples = sample_on_grid_lenient(&field, &grid, Location::Cells).map_err(|e| CliError::Numerical(e.to_string()))?;
    let generator = assemble_fpe_generator(&grid, &field, &samples).map_err(assembly_error)?;
    let cfl = cfl_dt(&grid, &samples);
    let dt = ec.dt.unwrap_or(cfl);
    run.resolve("dt", dt);
    run.resolve("cfl_dt", cfl);
    let u0 = initial_state(run.cfg, &grid)?;
    let opts = EvolveOptions {
        scheme,
        dt,
        t_final: ec.t_final,
        stride: ec.stride,
        leaf_axis,
        solver_tol: ec.solver_tol,
        solver_max_iter: ec.solver_max_iter,
    };
    let r = evolve(&u0, &generator, &opts).map_err(|e| match e {
        orthlap::diffusion::DiffusionError::InvalidInitial(_) | orthlap::diffusion::DiffusionError::InvalidSettings(_) => {
            CliError::Config(e.to_string())
        }
        e => CliError::Numerical(e.to_string()),
    })?;
    let mut csv = Vec::new();
    r.write_diagnostics_csv(&mut csv)?;
    run.write("diagnostics.csv", &csv)?;
    for snap in &r.snapshots {
        run.write_scalar(&format!("snapshot_{:06}.olap", snap.step), &snap.state)?;
    }
    run.write_scalar("final.olap", &r.final_state)?;
    let (first, last) = (&r.diagnostics[0], r.diagnostics.last().expect("initial diagnostics"));
    let drift = r.diagnostics.iter().map(|d| (d.mass - first.mass).abs()).fold(0.0, f64::max);
    let mut s = String::new();
    let _ = writeln!(s, "scheme = {}", scheme.name());
    let _ = writeln!(s, "steps = {}", last.step);
    let _ = writeln!(s, "dt = {dt:e}");
    let _ = writeln!(s, "time = {:e}", last.time);
    let _ = writeln!(s, "mass_drift = {drift:e}");
    let _ = writeln!(s, "variance_ratio = {:e}", last.variance / first.variance);
    if let (Some(a), Some(b)) = (first.in_leaf_variance, last.in_leaf_variance) {
        let leaf_drift = first
            .leaf_masses
            .iter()
            .enumerate()
            .map(|(i, m0)| r.diagnostics.iter().map(|d| (d.leaf_masses[i] - m0).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let _ = writeln!(s, "in_leaf_variance_ratio = {:e}", b / a);
        let _ = writeln!(s, "leaf_mass_drift = {leaf_drift:e}");
    }
    let _ = writeln!(s, "normal_equations = {}", r.normal_equations);
    run.write("evolve.txt", s.as_bytes())?;
    Ok(s)
}

fn mc_error(e: McError) -> CliError {
    match e {
        McError::NotPeriodic | McError::InvalidSettings(_) => CliError::Config(format!("[mc]: {e}")),
        e => CliError::Numerical(e.to_string()),
    }
}

fn mc(run: &mut Run) -> Result<String, CliError> {
    let (grid, field) = setup(run.cfg)?;
    let mcfg = &run.cfg.mc;
    let schemes = match mcfg.scheme.as_str() {
        "both" => vec![StepScheme::ItoEuler, StepScheme::StratonovichHeun],
        s => vec![StepScheme::parse(s).ok_or_else(|| CliError::Config(format!("[mc] unknown scheme {s:?}")))?],
    };
    let init = match run.cfg.initial.shape(&grid)? {
        InitialShape::Uniform => Initial::Uniform,
        InitialShape::Blob { center, sigma } => Initial::Blob { center, sigma },
    };
    let cells = grid.cells();
    if mcfg.compare_pde && (0..3).any(|d| mcfg.bins[d] == 0 || cells[d] % mcfg.bins[d] != 0) {
        return Err(CliError::Config(format!(
            "[mc] bins {:?} must divide the domain cells {cells:?} for the PDE comparison",
            mcfg.bins
        )));
    }
    let pde = if mcfg.compare_pde {
        if !grid.fully_periodic() {
            return Err(mc_error(McError::NotPeriodic));
        }
        let samples = sample_on_grid_lenient(&field, &grid, Location::Cells).map_err(|e| CliError::Numerical(e.to_string()))?;
        let generator = assemble_fpe_generator(&grid, &field, &samples).map_err(assembly_error)?;
        let dt = cfl_dt(&grid, &samples);
        run.resolve("pde_scheme", Scheme::ExplicitRk2.name());
        run.resolve("pde_dt", dt);
        let opts = EvolveOptions {
            scheme: Scheme::ExplicitRk2,
            dt,
            t_final: mcfg.t_final,
            ..EvolveOptions::default()
        };
        let r = evolve(&initial_state(run.cfg, &grid)?, &generator, &opts).map_err(|e| CliError::Numerical(e.to_string()))?;
        let factor = [0, 1, 2].map(|d| cells[d] / mcfg.bins[d]);
        let coarse = r.final_state.coarsen(factor).map_err(|e| CliError::Numerical(e.to_string()))?;
        run.write_scalar("pde_density.olap", &coarse)?;
        Some(coarse)
    } else {
        None
    };
    let opts_for = |scheme| SimOptions {
        dt: mcfg.dt,
        t_final: mcfg.t_final,
        seed: mcfg.seed,
        scheme,
    };
    let mut csv = String::from("comparison,l1,l2,linf,expected_l1_noise\n");
    let mut s = String::new();
    let mut hists = Vec::new();
    for scheme in schemes {
        let e = simulate(&field, &grid, mcfg.n, &init, &opts_for(scheme)).map_err(mc_error)?;
        run.resolve("mc_dt", e.dt);
        run.resolve("mc_steps", e.steps as i64);
        let mut bytes = Vec::new();
        write_oens(&mut bytes, &e.positions).map_err(mc_error)?;
        run.write(&format!("ensemble_{}.oens", scheme.name()), &bytes)?;
        let h = histogram(&e, mcfg.bins).map_err(mc_error)?;
        run.write_scalar(&format!("histogram_{}.olap", scheme.name()), &h)?;
        if let Some(p) = &pde {
            let d = compare(&h, p).map_err(mc_error)?;
            let noise = expected_l1_noise(p, mcfg.n, 1);
            let _ = writeln!(csv, "{}_vs_pde,{:e},{:e},{:e},{noise:e}", scheme.name(), d.l1, d.l2, d.linf);
            let _ = writeln!(s, "{}_vs_pde_l1 = {:e}", scheme.name(), d.l1);
            let _ = writeln!(s, "{}_vs_pde_noise = {noise:e}", scheme.name());
        }
        hists.push((scheme, h));
    }
    if let [(a, ha), (b, hb)] = hists.as_slice() {
        let d = compare(ha, hb).map_err(mc_error)?;
        // Two independent histograms around the same mean density.
        let noise = expected_l1_noise(pde.as_ref().unwrap_or(ha), mcfg.n, 2);
        let _ = writeln!(csv, "{}_vs_{},{:e},{:e},{:e},{noise:e}", a.name(), b.name(), d.l1, d.l2, d.linf);
        let _ = writeln!(s, "scheme_difference_l1 = {:e}", d.l1);
        let _ = writeln!(s, "scheme_difference_noise = {noise:e}");
    }
    run.write("comparison.csv", csv.as_bytes())?;
    run.write("mc.txt", s.as_bytes())?;
    Ok(s)
}

fn convergence(run: &mut Run) -> Result<String, CliError> {
    let (grid, field) = setup(run.cfg)?;
    let pc = &run.cfg.problem;
    let exact = pc
        .exact
        .as_deref()
        .ok_or_else(|| CliError::Config("[problem] exact is required for convergence".into()))?;
    let exact = parse_expr("problem", "exact", exact)?;
    let study = convergence_study(&field, &exact, &grid, pc.refine, pc.levels, &cg_options(run.cfg))?;
    run.write("convergence.csv", study.to_csv().as_bytes())?;
    let mut s = String::new();
    for (i, o) in study.orders.iter().enumerate() {
        let _ = writeln!(s, "order_{i} = {o:.6}");
    }
    let _ = writeln!(
        s,
        "max_iterations = {}",
        study.levels.iter().map(|l| l.iterations).max().unwrap_or(0)
    );
    run.write("convergence.txt", s.as_bytes())?;
    Ok(s)
}
