use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use orthlap::grid::read_olap;
use orthlap::montecarlo::read_oens;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_orthlap"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], config: &Path, out: &Path) -> (i32, String, String) {
    let o = bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    (
        o.status.code().unwrap(),
        String::from_utf8(o.stdout).unwrap(),
        String::from_utf8(o.stderr).unwrap(),
    )
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
        .unwrap_or_else(|| panic!("{key} missing from\n{text}"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn zero_datum_gives_zero_solution() {
    let out = tempfile::tempdir().unwrap();
    let (code, stdout, _) = run(&["solve"], &configs().join("poisson_zero.toml"), out.path());
    assert_eq!(code, 0);
    assert_eq!(value(&stdout, "max_abs_u").parse::<f64>().unwrap(), 0.0);
    let u = read_olap(fs::File::open(out.path().join("solution.olap")).unwrap()).unwrap();
    assert_eq!(u.dims, [12, 12, 12]);
    let meta = fs::read_to_string(out.path().join("metadata.toml")).unwrap();
    assert!(meta.contains("command = \"solve\"") && meta.contains("version = "));
}

#[test]
fn manufactured_solve_reports_small_error() {
    let dir = tempfile::tempdir().unwrap();
    // −Δ⊥ for w = ∇x is the Laplacian in the (y, z) cross-section.
    let cfg = write_config(
        dir.path(),
        r#"
[domain]
cells = [2, 24, 24]
bc = ["periodic", "dirichlet", "dirichlet"]
[field]
kind = "grad_axis"
axis = "x"
[problem]
exact = "sin(pi*y)*sin(pi*z)"
rhs = "-2*pi^2*sin(pi*y)*sin(pi*z)"
"#,
    );
    let (code, stdout, stderr) = run(&["solve", "--tol", "1e-9"], &cfg, dir.path());
    assert_eq!(code, 0, "{stderr}");
    assert!(value(&stdout, "relative_residual").parse::<f64>().unwrap() <= 1e-9);
    let err: f64 = value(&stdout, "l2_error").parse().unwrap();
    assert!(err < 2e-3, "{err}");
}

#[test]
fn foliated_torus_spectrum() {
    let out = tempfile::tempdir().unwrap();
    let (code, stdout, stderr) = run(&["spectrum", "-k", "20"], &configs().join("kernel_grad_z.toml"), out.path());
    assert_eq!(code, 0, "{stderr}");
    assert_eq!(value(&stdout, "nullspace_dimension"), "16");
    let csv = fs::read_to_string(out.path().join("spectrum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let base = fs::read_to_string(configs().join("poisson_zero.toml")).unwrap();
    for bad in [
        format!("{base}\n[solver]\ntolerance = 1e-3\n"),
        base.replace("linear_shear", "no_such_field"),
        base.replace("rhs = \"0\"", "rhs = \"sin(\""),
        base.replace("[12, 12, 12]", "[0, 12, 12]"),
    ] {
        let cfg = write_config(dir.path(), &bad);
        let (code, _, stderr) = run(&["solve"], &cfg, dir.path());
        assert_eq!(code, 2, "{stderr}");
        assert!(stderr.contains("config error"), "{stderr}");
    }
    let (code, _, _) = run(&["solve"], &dir.path().join("missing.toml"), dir.path());
    assert_eq!(code, 2);
    // Monte Carlo needs a periodic box.
    let (code, _, stderr) = run(&["mc"], &configs().join("poisson_zero.toml"), dir.path());
    assert_eq!(code, 2, "{stderr}");
}

#[test]
fn non_convergence_exits_with_one_and_keeps_the_iterate() {
    let dir = tempfile::tempdir().unwrap();
    let base = fs::read_to_string(configs().join("poisson_zero.toml")).unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{}\n[solver]\nmax_iter = 3\n", base.replace("rhs = \"0\"", "rhs = \"1\"")),
    );
    let (code, _, stderr) = run(&["solve"], &cfg, dir.path());
    assert_eq!(code, 1, "{stderr}");
    assert!(stderr.contains("numerical failure"));
    assert!(dir.path().join("solution.olap").exists());
    let text = fs::read_to_string(dir.path().join("solve.txt")).unwrap();
    assert_eq!(value(&text, "converged"), "false");
}

#[test]
fn classify_and_tangency() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = run(&["classify"], &configs().join("kernel_grad_z.toml"), dir.path());
    assert_eq!(code, 0);
    assert_eq!(value(&stdout, "classification"), "integrable");
    let (code, stdout, _) = run(&["classify"], &configs().join("kernel_rotating_shear.toml"), dir.path());
    assert_eq!(code, 0);
    assert_eq!(value(&stdout, "classification"), "non_integrable");

    // ∇x is tangent to the y and z walls of example 1.
    let (code, stdout, _) = run(&["tangency"], &configs().join("example1.toml"), dir.path());
    assert_eq!(code, 0);
    assert_eq!(value(&stdout, "face_sets"), "4");
    assert_eq!(value(&stdout, "pass"), "true");
}

#[test]
fn evolve_and_mc_artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[domain]
cells = [8, 8, 8]
extent = [6.283185307179586, 6.283185307179586, 6.283185307179586]
bc = ["periodic", "periodic", "periodic"]
[field]
kind = "abc"
[evolve]
scheme = "explicit_rk2"
T = 0.2
stride = 10
[mc]
N = 2000
dt = 0.01
T = 0.2
bins = [4, 4, 4]
"#,
    );
    let (code, stdout, stderr) = run(&["evolve"], &cfg, dir.path());
    assert_eq!(code, 0, "{stderr}");
    assert!(value(&stdout, "mass_drift").parse::<f64>().unwrap() < 1e-12);
    let fin = read_olap(fs::File::open(dir.path().join("final.olap")).unwrap()).unwrap();
    assert_eq!(fin.values.len(), 512);
    let diag = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("step,time,mass,variance,energy"));

    let (code, _, stderr) = run(&["mc", "--T", "0.1"], &cfg, dir.path());
    assert_eq!(code, 0, "{stderr}");
    for s in ["ito_euler", "stratonovich_heun"] {
        let e = read_oens(fs::File::open(dir.path().join(format!("ensemble_{s}.oens"))).unwrap()).unwrap();
        assert_eq!(e.len(), 2000);
        let h = read_olap(fs::File::open(dir.path().join(format!("histogram_{s}.olap"))).unwrap()).unwrap();
        assert_eq!(h.dims, [4, 4, 4]);
    }
    let csv = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let meta = fs::read_to_string(dir.path().join("metadata.toml")).unwrap();
    assert!(meta.contains("mc_steps = 10"), "{meta}");
}

#[test]
fn poincare_without_verification() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = run(&["poincare", "--no-verify"], &configs().join("example1.toml"), dir.path());
    assert_eq!(code, 0);
    assert_eq!(value(&stdout, "c_corollary").parse::<f64>().unwrap(), 0.5);
    assert!(!stdout.contains("lambda_min"));
    // Beltrami construction on a field that is not Beltrami.
    let base = fs::read_to_string(configs().join("example4.toml")).unwrap();
    let cfg = write_config(dir.path(), &base.replace("kind = \"rotating_shear\"\nalpha = 1.0", "kind = \"abc\"\nb = 0.5\nc = 0.3\na = 1.0"));
    let (code, _, stderr) = run(&["poincare"], &cfg, dir.path());
    assert_eq!(code, 2, "{stderr}");
}
