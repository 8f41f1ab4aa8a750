use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use hma_core::diagnostics::{
    commutation_check, estimate_report, identity_check, volume_consistency, CHERRIER_P,
};
use hma_core::drivers::{calabi_yau_gauduchon, phi_pipeline, prescribed_ricci};
use hma_core::geometry::{chern_connection, chern_ricci, metric_defects};
use hma_core::grid::{hessian_complex, mean_real, sup_norm};
use hma_core::ma::{ma_residual, tilde_metric};
use hma_core::solver::{adjoint_kernel, continuity_solve, gauduchon_factor, GauduchonConfig, KernelConfig, SolveReport};
use hma_core::synth::{ManufactureConfig, ManufacturedFamily};
use hma_core::{ProblemSpec, RhsVolume, ScalarField, SolveState, Variant, C64};
use serde::Serialize;

use crate::config::{thread_count, Pipeline, RunConfig};
use crate::error::CliError;
use crate::hmf;
use crate::report::{
    print_json, save_herm, save_scalar, write_cherrier_csv, write_json, write_trace, EstimatesJson, GridJson,
    PipelineChecks, Recovery, SolveJson,
};

#[derive(Parser, Debug)]
#[command(name = "hma", version, about = "Monge-Ampère solver for (n-1)-plurisubharmonic functions on flat tori")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VariantArg {
    Psi,
    Phi,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Condition {
    Gauduchon,
    Astheno,
    Kahler,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the continuity method described by a config file.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Report Gauduchon, astheno-Kähler and Kähler defects and torsion of a metric file.
    ValidateMetric {
        metric: PathBuf,
        /// Exit with status 2 unless these conditions hold within `--tol`.
        #[arg(long, value_enum)]
        require: Vec<Condition>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Write a manufactured problem with known solution, plus a config to solve it.
    Manufacture {
        #[arg(long, default_value_t = 0.05)]
        amplitude: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_enum, default_value = "psi")]
        variant: VariantArg,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Nodes per active coordinate.
        #[arg(long)]
        m: Option<usize>,
        /// Active real coordinates, comma separated.
        #[arg(long, value_delimiter = ',')]
        active: Option<Vec<usize>>,
        #[arg(long, default_value_t = 0.2)]
        metric_amplitude: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metric with prescribed Chern-Ricci form.
    Ricci {
        #[arg(long)]
        config: PathBuf,
    },
    /// Every diagnostic on a saved state.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        state: PathBuf,
        /// Value of `b`; estimated from the residual when omitted.
        #[arg(long)]
        b: Option<f64>,
        /// Also compute the positive kernel of the adjoint linearization.
        #[arg(long)]
        kernel: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Conformal factor `σ` making `e^σ ω` Gauduchon.
    GauduchonFactor {
        metric: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the Gauduchon metric `e^σ ω`.
        #[arg(long)]
        metric_out: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

fn init_threads(config_value: Option<usize>) -> Result<(), CliError> {
    let n = thread_count(config_value)?;
    // A second initialization in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { config } => solve(&config),
        Command::ValidateMetric { metric, require, tol } => validate_metric(&metric, &require, tol),
        Command::Manufacture {
            amplitude,
            seed,
            variant,
            n,
            m,
            active,
            metric_amplitude,
            out,
        } => {
            let variant = match variant {
                VariantArg::Psi => Variant::Psi,
                VariantArg::Phi => Variant::Phi,
            };
            let active = active.unwrap_or_else(|| if n == 2 { vec![0, 2] } else { vec![0, 2, 5] });
            let m = m.unwrap_or(if n == 2 { 32 } else { 16 });
            let cfg = ManufactureConfig {
                n,
                variant,
                rhs: RhsVolume::OmegaN,
                amplitude,
                seed,
                active,
                metric_amplitude,
                ..Default::default()
            };
            manufacture(cfg, m, &out)
        }
        Command::Ricci { config } => ricci(&config),
        Command::Diagnose {
            config,
            state,
            b,
            kernel,
            out,
        } => diagnose(&config, &state, b, kernel, out.as_deref()),
        Command::GauduchonFactor {
            metric,
            out,
            metric_out,
            tol,
        } => conformal_factor(&metric, &out, metric_out.as_deref(), tol),
    }
}

fn names(cfg: &RunConfig) -> (String, String, String) {
    (
        format!("{:?}", cfg.problem.pipeline).to_lowercase(),
        format!("{:?}", cfg.problem.variant).to_lowercase(),
        match cfg.rhs() {
            RhsVolume::OmegaN => "omega_n".into(),
            RhsVolume::OmegaHN => "omega_h_n".into(),
        },
    )
}

fn finish_solve(
    cfg: &RunConfig,
    spec: &ProblemSpec,
    report: &SolveReport,
    checks: Option<PipelineChecks>,
) -> Result<SolveJson, CliError> {
    let state = &report.state;
    let estimates = estimate_report(spec, state, &CHERRIER_P)?;
    let recovery = match cfg.reference()? {
        Some(u_star) => {
            spec.grid().check_same(u_star.grid())?;
            let m = mean_real(&u_star.real_parts());
            let centred = u_star.map(|z| C64::new(z.re - m, 0.0));
            Some(Recovery {
                u_relative_error: sup_norm(&(&state.u_mean_normalized() - &centred)) / sup_norm(&centred).max(f64::MIN_POSITIVE),
                b_error: cfg.problem.reference_b.map(|b| (state.b - b).abs()),
            })
        }
        None => None,
    };
    let (pipeline, variant, rhs_volume) = names(cfg);
    let (path, newton_iterations) = SolveJson::history(report);
    let json = SolveJson {
        command: "solve",
        pipeline,
        variant,
        rhs_volume,
        grid: GridJson::of(spec.grid()),
        b: state.b,
        final_residual: report.final_residual(),
        positivity_margin: report.positivity_margin,
        newton_iterations,
        volume_consistency: volume_consistency(spec, state)?,
        path,
        estimates: EstimatesJson::from(&estimates),
        recovery,
        pipeline_checks: checks,
    };
    if let Some(p) = cfg.output(&cfg.output.trace) {
        write_trace(&p, &report.records)?;
    }
    if let Some(p) = cfg.output(&cfg.output.state) {
        save_scalar(&p, &state.u_sup_normalized())?;
    }
    if let Some(p) = cfg.output(&cfg.output.cherrier_csv) {
        write_cherrier_csv(&p, &estimates.cherrier)?;
    }
    match cfg.output(&cfg.output.report) {
        Some(p) => write_json(&p, &json)?,
        None => print_json(&json),
    }
    Ok(json)
}

pub fn solve(path: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(path)?;
    init_threads(cfg.run.threads)?;
    let spec = cfg.problem()?;
    let reference = cfg.reference()?;
    if let Some(r) = &reference {
        spec.grid().check_same(r.grid())?;
    }
    match cfg.problem.pipeline {
        Pipeline::Direct => {
            let report = continuity_solve(&spec, &cfg.solver_config()?)?;
            finish_solve(&cfg, &spec, &report, None)?;
        }
        Pipeline::Volume => {
            let res = calabi_yau_gauduchon(&spec, spec.f(), &cfg.driver_config()?)?;
            if let Some(p) = cfg.output(&cfg.output.metric) {
                save_herm(&p, res.omega_u.field())?;
            }
            let solved = spec
                .with_variant(Variant::Psi)?
                .with_f(spec.f().scale(spec.dim() as f64 - 1.0))?;
            let checks = PipelineChecks {
                b_root: res.b_prime,
                volume_defect: res.volume_defect,
                gauduchon_defect: res.gauduchon_defect,
            };
            finish_solve(&cfg, &solved, &res.report, Some(checks))?;
        }
        Pipeline::Phi => {
            let res = phi_pipeline(&spec, spec.f(), &cfg.driver_config()?)?;
            if let Some(p) = cfg.output(&cfg.output.metric) {
                save_herm(&p, res.omega_tilde.field())?;
            }
            let solved = spec.with_variant(Variant::Phi)?;
            let checks = PipelineChecks {
                b_root: res.b,
                volume_defect: res.volume_defect,
                gauduchon_defect: res.gauduchon_defect,
            };
            finish_solve(&cfg, &solved, &res.report, Some(checks))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricJson {
    command: &'static str,
    grid: GridJson,
    gauduchon_defect: f64,
    astheno_defect: Option<f64>,
    kahler_defect: f64,
    max_torsion: f64,
    max_curvature: f64,
    torsion_antisymmetry_defect: f64,
    failed: Vec<String>,
}

fn validate_metric(path: &Path, require: &[Condition], tol: f64) -> Result<(), CliError> {
    init_threads(None)?;
    let omega = hmf::read_metric(path)?;
    let d = metric_defects(&omega);
    let conn = chern_connection(&omega);
    let mut failed = Vec::new();
    for c in require {
        let value = match c {
            Condition::Gauduchon => d.gauduchon,
            Condition::Astheno => d.astheno.unwrap_or(f64::INFINITY),
            Condition::Kahler => d.kahler,
        };
        if !(value <= tol) {
            failed.push(format!("{c:?}").to_lowercase());
        }
    }
    let json = MetricJson {
        command: "validate-metric",
        grid: GridJson::of(omega.grid()),
        gauduchon_defect: d.gauduchon,
        astheno_defect: d.astheno,
        kahler_defect: d.kahler,
        max_torsion: conn.max_torsion(),
        max_curvature: conn.max_curvature(),
        torsion_antisymmetry_defect: conn.torsion_antisymmetry_defect(),
        failed: failed.clone(),
    };
    print_json(&json);
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Core(hma_core::Error::Precondition {
            what: "required metric condition",
            defect: [d.gauduchon, d.astheno.unwrap_or(f64::INFINITY), d.kahler]
                .into_iter()
                .filter(|v| *v > tol)
                .fold(0.0, f64::max),
            tol,
        }))
    }
}

#[derive(Serialize)]
struct ManufactureJson {
    command: &'static str,
    n: usize,
    variant: String,
    amplitude: f64,
    seed: u64,
    active: Vec<usize>,
    metric_amplitude: f64,
    grid: GridJson,
    b_star: f64,
    u_star_sup: f64,
}

fn manufacture(mcfg: ManufactureConfig, m: usize, out: &Path) -> Result<(), CliError> {
    init_threads(None)?;
    let family = ManufacturedFamily::new(mcfg.clone())?;
    let p = family.on_grid(&family.grid(m)?)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::output(out, e))?;
    save_herm(&out.join("omega0.hmf"), p.spec.omega0().field())?;
    save_herm(&out.join("omega.hmf"), p.spec.omega().field())?;
    save_scalar(&out.join("f.hmf"), p.spec.f())?;
    save_scalar(&out.join("u_star.hmf"), &p.u_star)?;
    let variant = format!("{:?}", mcfg.variant).to_lowercase();
    let config = format!(
        "# Manufactured problem: amplitude {amp}, seed {seed}.\n\
         [problem]\n\
         variant = \"{variant}\"\n\
         rhs_volume = \"omega_n\"\n\
         omega0 = \"omega0.hmf\"\n\
         omega = \"omega.hmf\"\n\
         f = \"f.hmf\"\n\
         reference_u = \"u_star.hmf\"\n\
         reference_b = {b:?}\n\
         \n\
         [output]\n\
         report = \"report.json\"\n\
         trace = \"trace.jsonl\"\n\
         state = \"u.hmf\"\n\
         cherrier_csv = \"cherrier.csv\"\n\
         \n\
         [run]\n\
         seed = {seed}\n",
        amp = mcfg.amplitude,
        seed = mcfg.seed,
        b = p.b_star,
    );
    let cfg_path = out.join("solve.toml");
    std::fs::write(&cfg_path, config).map_err(|e| CliError::output(&cfg_path, e))?;
    let json = ManufactureJson {
        command: "manufacture",
        n: mcfg.n,
        variant,
        amplitude: mcfg.amplitude,
        seed: mcfg.seed,
        active: mcfg.active.clone(),
        metric_amplitude: mcfg.metric_amplitude,
        grid: GridJson::of(p.spec.grid()),
        b_star: p.b_star,
        u_star_sup: sup_norm(&p.u_star),
    };
    write_json(&out.join("manufacture.json"), &json)?;
    print_json(&json);
    Ok(())
}

#[derive(Serialize)]
struct RicciJson {
    command: &'static str,
    grid: GridJson,
    b_prime: f64,
    ricci_defect: f64,
    volume_defect: f64,
    gauduchon_defect: f64,
    final_residual: f64,
    newton_iterations: usize,
}

fn ricci(path: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(path)?;
    init_threads(cfg.run.threads)?;
    let spec = cfg.problem()?;
    let psi = match (&cfg.ricci.psi, &cfg.ricci.phi) {
        (Some(p), None) => {
            let psi = hmf::read_herm(&cfg.resolve(p))?;
            let grid = psi.grid().with_mode(cfg.diff_mode());
            hma_core::HermField::from_values(&grid, psi.values().to_vec())?
        }
        (None, Some(p)) => {
            let phi = cfg.real_field(p)?;
            chern_ricci(spec.omega()).zip_map(&hessian_complex(&phi), |a, b| *a - *b)?
        }
        _ => {
            return Err(CliError::Config {
                path: path.display().to_string(),
                message: "[ricci] needs exactly one of `psi` or `phi`".into(),
            })
        }
    };
    spec.grid().check_same(psi.grid())?;
    let res = prescribed_ricci(&spec, &psi, &cfg.driver_config()?)?;
    if let Some(p) = cfg.output(&cfg.output.metric) {
        save_herm(&p, res.omega_tilde.field())?;
    }
    if let Some(p) = cfg.output(&cfg.output.trace) {
        write_trace(&p, &res.volume.report.records)?;
    }
    if let Some(p) = cfg.output(&cfg.output.state) {
        save_scalar(&p, &res.volume.report.state.u_sup_normalized())?;
    }
    let json = RicciJson {
        command: "ricci",
        grid: GridJson::of(spec.grid()),
        b_prime: res.b_prime,
        ricci_defect: res.ricci_defect,
        volume_defect: res.volume.volume_defect,
        gauduchon_defect: res.volume.gauduchon_defect,
        final_residual: res.volume.report.final_residual(),
        newton_iterations: res.volume.report.residual_history.len(),
    };
    match cfg.output(&cfg.output.report) {
        Some(p) => write_json(&p, &json)?,
        None => print_json(&json),
    }
    Ok(())
}

#[derive(Serialize)]
struct KernelJson {
    min_f: f64,
    max_f: f64,
    residual: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct DiagnoseJson {
    command: &'static str,
    grid: GridJson,
    b: f64,
    residual_sup: f64,
    positivity_margin: f64,
    volume_consistency: f64,
    trace_identity: f64,
    reconstruction_identity: f64,
    commutation_curvature: f64,
    commutation_conjugate_torsion: f64,
    commutation_torsion: f64,
    estimates: EstimatesJson,
    adjoint_kernel: Option<KernelJson>,
}

fn diagnose(path: &Path, state_path: &Path, b: Option<f64>, kernel: bool, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::load(path)?;
    init_threads(cfg.run.threads)?;
    let spec = cfg.problem()?;
    let u = hmf::read_real(state_path)?;
    let u = ScalarField::from_values(&u.grid().with_mode(cfg.diff_mode()), u.into_values())?;
    spec.grid().check_same(u.grid())?;
    let tilde = tilde_metric(&spec, &u)?;
    let bad = tilde.non_positive_nodes();
    if !bad.is_empty() {
        return Err(hma_core::Error::TildeNotPositive { nodes: bad }.into());
    }
    // With b unknown, the residual at b = 0 is constant at a solution and
    // its mean is the best estimate of b.
    let b = match b {
        Some(b) => b,
        None => {
            let r0 = ma_residual(&spec, &SolveState { u: u.clone(), b: 0.0, t: 1.0 })?;
            mean_real(&r0.real_parts())
        }
    };
    let state = SolveState { u, b, t: 1.0 };
    let residual = ma_residual(&spec, &state)?;
    let estimates = estimate_report(&spec, &state, &CHERRIER_P)?;
    let ids = identity_check(&spec, &state.u)?;
    let comm = commutation_check(spec.omega(), &state.u)?;
    let adjoint = if kernel {
        let k = adjoint_kernel(&spec, &state, &KernelConfig::default())?;
        let f = k.f.real_parts();
        Some(KernelJson {
            min_f: f.iter().copied().fold(f64::INFINITY, f64::min),
            max_f: f.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            residual: k.residual,
            iterations: k.iterations,
        })
    } else {
        None
    };
    if let Some(p) = cfg.output(&cfg.output.cherrier_csv) {
        write_cherrier_csv(&p, &estimates.cherrier)?;
    }
    let json = DiagnoseJson {
        command: "diagnose",
        grid: GridJson::of(spec.grid()),
        b,
        residual_sup: sup_norm(&residual),
        positivity_margin: hma_core::ma::positivity_margin(spec.omega(), &tilde),
        volume_consistency: volume_consistency(&spec, &state)?,
        trace_identity: ids.trace,
        reconstruction_identity: ids.reconstruction,
        commutation_curvature: comm.curvature,
        commutation_conjugate_torsion: comm.conjugate_torsion,
        commutation_torsion: comm.torsion,
        estimates: EstimatesJson::from(&estimates),
        adjoint_kernel: adjoint,
    };
    match out {
        Some(p) => write_json(p, &json)?,
        None => print_json(&json),
    }
    Ok(())
}

#[derive(Serialize)]
struct FactorJson {
    command: &'static str,
    grid: GridJson,
    defect_before: f64,
    defect_after: f64,
    iterations: usize,
    sigma_sup: f64,
}

fn conformal_factor(path: &Path, out: &Path, metric_out: Option<&Path>, tol: f64) -> Result<(), CliError> {
    init_threads(None)?;
    let omega = hmf::read_metric(path)?;
    let before = hma_core::geometry::gauduchon_defect(&omega);
    let res = gauduchon_factor(
        &omega,
        &GauduchonConfig {
            tol,
            ..Default::default()
        },
    )?;
    save_scalar(out, &res.sigma)?;
    if let Some(p) = metric_out {
        save_herm(p, omega.conformal(&res.sigma)?.field())?;
    }
    print_json(&FactorJson {
        command: "gauduchon-factor",
        grid: GridJson::of(omega.grid()),
        defect_before: before,
        defect_after: res.defect,
        iterations: res.iterations,
        sigma_sup: sup_norm(&res.sigma),
    });
    Ok(())
}
