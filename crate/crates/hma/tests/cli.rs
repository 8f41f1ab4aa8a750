//! End-to-end runs of the `hma` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

use hma::hmf;
use hma_core::geometry::chern_ricci;
use hma_core::synth::{rng, MetricModel, SmoothFunction};
use hma_core::{HermField, HermMatrix, MetricField, ScalarField, TorusGrid, C64};
use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn hma(args: &[&str], threads: Option<&str>) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hma"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("HMA_THREADS", t),
        None => cmd.env_remove("HMA_THREADS"),
    };
    let out = cmd.output().expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn flat_problem(dir: &Path) -> std::path::PathBuf {
    let grid = TorusGrid::uniform(3, &[0, 2], 8).unwrap();
    let id = MetricField::identity(&grid);
    hmf::write_herm(&dir.join("id.hmf"), id.field()).unwrap();
    let cfg = dir.join("flat.toml");
    fs::write(
        &cfg,
        "[problem]\nomega0 = \"id.hmf\"\nomega = \"id.hmf\"\n\n[output]\nreport = \"report.json\"\n",
    )
    .unwrap();
    cfg
}

#[test]
fn hmf_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let grid = TorusGrid::uniform(3, &[0, 3, 4], 4).unwrap();
    let mut r = rng(1);
    let s = SmoothFunction::random(&mut r, &[0, 3, 4], 4, 2, 1.3).sample(&grid);
    let s = s.map(|z| C64::new(z.re, z.re.sin() * 1e-3));
    hmf::write_scalar(&dir.path().join("s.hmf"), &s).unwrap();
    let back = hmf::read_scalar(&dir.path().join("s.hmf")).unwrap();
    assert!(s.values().iter().zip(back.values()).all(|(a, b)| a.re.to_bits() == b.re.to_bits()
        && a.im.to_bits() == b.im.to_bits()));

    let g = MetricModel::random_trig(&mut r, 3, &[0, 3, 4], 3, 0.4).sample(&grid).unwrap();
    let path = dir.path().join("g.hmf");
    hmf::write_herm(&path, g.field()).unwrap();
    let back = hmf::read_metric(&path).unwrap();
    assert_eq!(&back, &g);
    let bytes = fs::read(&path).unwrap();
    hmf::write_herm(&dir.path().join("g2.hmf"), back.field()).unwrap();
    assert_eq!(bytes, fs::read(dir.path().join("g2.hmf")).unwrap());

    // A scalar file is not a metric.
    assert!(hmf::read_metric(&dir.path().join("s.hmf")).is_err());
}

#[test]
fn flat_solve_gives_zero_b() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = flat_problem(dir.path());
    let run = hma(&["solve", "--config", p(&cfg)], None);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let report = json(&dir.path().join("report.json"));
    assert!(report["b"].as_f64().unwrap().abs() < 1e-10);
    assert_eq!(report["estimates"]["b_bound_holds"], Value::Bool(true));
}

#[test]
fn manufacture_then_solve_recovers_the_solution() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let run = hma(&["manufacture", "--amplitude", "0.05", "--seed", "7", "--out", p(&out)], None);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let meta: Value = serde_json::from_str(&run.stdout).unwrap();
    assert_eq!(meta["grid"]["sizes"], serde_json::json!([16, 1, 16, 1, 1, 16]));

    let run = hma(&["solve", "--config", p(&out.join("solve.toml"))], Some("2"));
    assert_eq!(run.code, 0, "{}", run.stderr);
    let report = json(&out.join("report.json"));
    assert!(report["recovery"]["u_relative_error"].as_f64().unwrap() < 1e-6);
    assert!(report["recovery"]["b_error"].as_f64().unwrap() < 1e-8);
    assert!(report["final_residual"].as_f64().unwrap() < 1e-11);

    // Trace lines carry the documented keys; the Cherrier table has a header and four rows.
    let trace = fs::read_to_string(out.join("trace.jsonl")).unwrap();
    let lines: Vec<Value> = trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!lines.is_empty());
    for key in ["t", "iter", "residual_sup", "b", "positivity_margin", "damping"] {
        assert!(lines.iter().all(|l| l.get(key).is_some()), "{key}");
    }
    assert_eq!(lines.last().unwrap()["t"], 1.0);
    let csv = fs::read_to_string(out.join("cherrier.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "p,lhs,rhs,ratio,saturated");
    assert_eq!(csv.lines().count(), 5);

    // Same config, different thread count: byte-identical report.
    let first = fs::read(out.join("report.json")).unwrap();
    let run = hma(&["solve", "--config", p(&out.join("solve.toml"))], Some("1"));
    assert_eq!(run.code, 0);
    assert_eq!(first, fs::read(out.join("report.json")).unwrap());

    // Diagnose the saved state; b is re-estimated from the residual.
    let run = hma(
        &["diagnose", "--config", p(&out.join("solve.toml")), "--state", p(&out.join("u.hmf")), "--kernel"],
        None,
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    let diag: Value = serde_json::from_str(&run.stdout).unwrap();
    assert!((diag["b"].as_f64().unwrap() - report["b"].as_f64().unwrap()).abs() < 1e-10);
    assert!(diag["residual_sup"].as_f64().unwrap() < 1e-10);
    assert!(diag["adjoint_kernel"]["min_f"].as_f64().unwrap() > 0.0);
    assert!(diag["trace_identity"].as_f64().unwrap() < 1e-10);
}

#[test]
fn validate_metric_reports_defects() {
    let dir = tempfile::tempdir().unwrap();
    flat_problem(dir.path());
    let run = hma(&["validate-metric", p(&dir.path().join("id.hmf")), "--require", "kahler"], None);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let v: Value = serde_json::from_str(&run.stdout).unwrap();
    for key in ["gauduchon_defect", "astheno_defect", "kahler_defect", "max_torsion"] {
        assert_eq!(v[key].as_f64().unwrap(), 0.0, "{key}");
    }

    let grid = TorusGrid::uniform(3, &[0, 2], 16).unwrap();
    let g = MetricModel::Gauduchon { eps: 0.2 }.sample(&grid).unwrap();
    hmf::write_herm(&dir.path().join("g.hmf"), g.field()).unwrap();
    let run = hma(&["validate-metric", p(&dir.path().join("g.hmf")), "--require", "gauduchon"], None);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let run = hma(&["validate-metric", p(&dir.path().join("g.hmf")), "--require", "kahler"], None);
    assert_eq!(run.code, 2);
}

#[test]
fn invalid_inputs_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = flat_problem(dir.path());
    let text = fs::read_to_string(&cfg).unwrap();

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, format!("{text}\n[solver]\nnewton_tol = \"tiny\"\n")).unwrap();
    let run = hma(&["solve", "--config", p(&bad)], None);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("line 9") && run.stderr.contains("newton_tol"), "{}", run.stderr);

    fs::write(&bad, text.replace("id.hmf\"\nomega =", "missing.hmf\"\nomega =")).unwrap();
    assert_eq!(hma(&["solve", "--config", p(&bad)], None).code, 2);

    let mut bytes = fs::read(dir.path().join("id.hmf")).unwrap();
    bytes.truncate(bytes.len() - 8);
    fs::write(dir.path().join("id.hmf"), bytes).unwrap();
    let run = hma(&["solve", "--config", p(&cfg)], None);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("payload"), "{}", run.stderr);

    assert_eq!(hma(&["solve"], None).code, 2);
}

#[test]
fn solver_failure_exits_with_status_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let run = hma(&["manufacture", "--m", "8", "--out", p(&out)], None);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let cfg = out.join("solve.toml");
    let text = fs::read_to_string(&cfg).unwrap();
    fs::write(&cfg, format!("{text}\n[solver]\nmax_newton = 1\nmin_step = 0.25\n")).unwrap();
    let run = hma(&["solve", "--config", p(&cfg)], None);
    assert_eq!(run.code, 3, "{}", run.stderr);
    assert!(run.stderr.contains("continuity failed"), "{}", run.stderr);
}

fn ricci_problem(dir: &Path) -> (std::path::PathBuf, MetricField) {
    let grid = TorusGrid::uniform(3, &[0, 2], 32).unwrap();
    let omega = MetricModel::Astheno { eps: 0.1 }.sample(&grid).unwrap();
    let omega0 = MetricModel::Gauduchon { eps: 0.2 }.sample(&grid).unwrap();
    let phi = SmoothFunction::random(&mut rng(10), &[0, 2], 3, 1, 0.2).sample(&grid);
    hmf::write_herm(&dir.join("omega.hmf"), omega.field()).unwrap();
    hmf::write_herm(&dir.join("omega0.hmf"), omega0.field()).unwrap();
    hmf::write_scalar(&dir.join("phi.hmf"), &phi).unwrap();
    let cfg = dir.join("ricci.toml");
    fs::write(
        &cfg,
        "[problem]\nomega0 = \"omega0.hmf\"\nomega = \"omega.hmf\"\n\n[ricci]\nphi = \"phi.hmf\"\n\n\
         [output]\nreport = \"ricci.json\"\nmetric = \"omega_tilde.hmf\"\n",
    )
    .unwrap();
    (cfg, omega)
}

#[test]
fn ricci_pipeline_and_obstruction() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, omega) = ricci_problem(dir.path());
    let run = hma(&["ricci", "--config", p(&cfg)], None);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let report = json(&dir.path().join("ricci.json"));
    assert!(report["ricci_defect"].as_f64().unwrap() < 1e-6);
    assert!(hmf::read_metric(&dir.path().join("omega_tilde.hmf")).is_ok());

    // ψ = Ric(ω) + constant: not ∂∂̄-exact.
    let shift = HermField::constant(omega.grid(), HermMatrix::diag(&[0.0, 0.0, 0.25]));
    let psi = chern_ricci(&omega).zip_map(&shift, |a, b| *a + *b).unwrap();
    hmf::write_herm(&dir.path().join("psi.hmf"), &psi).unwrap();
    let text = fs::read_to_string(&cfg).unwrap().replace("phi = \"phi.hmf\"", "psi = \"psi.hmf\"");
    fs::write(&cfg, text).unwrap();
    let run = hma(&["ricci", "--config", p(&cfg)], None);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("cohomology obstruction"), "{}", run.stderr);
}

#[test]
fn gauduchon_factor_command() {
    let dir = tempfile::tempdir().unwrap();
    let grid = TorusGrid::uniform(3, &[0, 2, 3], 16).unwrap();
    let g = MetricModel::random_trig(&mut rng(42), 3, &[0, 2, 3], 2, 0.2).sample(&grid).unwrap();
    hmf::write_herm(&dir.path().join("g.hmf"), g.field()).unwrap();
    let run = hma(
        &[
            "gauduchon-factor",
            p(&dir.path().join("g.hmf")),
            "--out",
            p(&dir.path().join("sigma.hmf")),
            "--metric-out",
            p(&dir.path().join("gg.hmf")),
        ],
        None,
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    let v: Value = serde_json::from_str(&run.stdout).unwrap();
    assert!(v["defect_before"].as_f64().unwrap() > 1e-2);
    assert!(v["defect_after"].as_f64().unwrap() < 1e-8);
    let sigma: ScalarField = hmf::read_real(&dir.path().join("sigma.hmf")).unwrap();
    assert_eq!(sigma.grid(), &grid);
    let run = hma(&["validate-metric", p(&dir.path().join("gg.hmf")), "--require", "gauduchon"], None);
    assert_eq!(run.code, 0, "{}", run.stdout);
}

#[test]
fn phi_pipeline_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let grid = TorusGrid::uniform(3, &[0, 2], 32).unwrap();
    let omega = MetricModel::Gauduchon { eps: 0.2 }.sample(&grid).unwrap();
    let f = SmoothFunction::random(&mut rng(11), &[0, 2], 3, 1, 0.3).sample(&grid);
    hmf::write_herm(&dir.path().join("omega.hmf"), omega.field()).unwrap();
    hmf::write_scalar(&dir.path().join("f.hmf"), &f).unwrap();
    let cfg = dir.path().join("phi.toml");
    fs::write(
        &cfg,
        "[problem]\nvariant = \"phi\"\npipeline = \"phi\"\nomega0 = \"omega.hmf\"\nomega = \"omega.hmf\"\nf = \"f.hmf\"\n\n\
         [output]\nreport = \"r.json\"\nmetric = \"tilde.hmf\"\n",
    )
    .unwrap();
    let run = hma(&["solve", "--config", p(&cfg)], None);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let r = json(&dir.path().join("r.json"));
    assert!(r["pipeline_checks"]["volume_defect"].as_f64().unwrap() < 1e-8);
    assert!(r["pipeline_checks"]["gauduchon_defect"].as_f64().unwrap() < 1e-8);
    assert!(r["estimates"]["beta_closedness"].as_f64().unwrap() < 1e-8);
}
