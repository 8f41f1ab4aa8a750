//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::exterior as ext;
use hma_core::diagnostics::{
    b_bound_check, beta_closedness, cherrier_table, cherrier_tripwire, eta_band, identity_check, CHERRIER_P,
};
use hma_core::drivers::{calabi_yau_gauduchon, prescribed_ricci, DriverConfig};
use hma_core::geometry::{astheno_defect, chern_ricci, gauduchon_defect, nm1_root_matrix, star_power_matrix, star_wedge_matrix};
use hma_core::grid::{hessian_complex, mean_real, sup_norm};
use hma_core::ma::{linearized_apply, ma_residual, LinearizedOperator};
use hma_core::solver::{adjoint_kernel, continuity_solve, solve_from, KernelConfig};
use hma_core::synth::{random_positive_matrix, rng, ManufactureConfig, ManufacturedFamily, MetricModel, SmoothFunction};
use hma_core::{
    Error, HermField, HermMatrix, MetricField, ProblemSpec, RhsVolume, ScalarField, SolveState, SolverConfig, TorusGrid,
    Variant,
};

/// Outcome of one criterion: pass flag and a one-line summary of measurements.
struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

/// Solved states collected by the solve criteria for the estimate monitors.
type Solved = Vec<(ProblemSpec, SolveState)>;

fn pointwise_algebra() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1001);
    let (mut roundtrip, mut wedge) = (0.0f64, 0.0f64);
    for n in 2..=4 {
        for _ in 0..100 {
            let g = random_positive_matrix(&mut r, n, 0.5, 2.0);
            let a = random_positive_matrix(&mut r, n, 0.5, 2.0);
            let s = star_power_matrix(&g, &a);
            let back = nm1_root_matrix(&g, &s).expect("positive star power");
            roundtrip = roundtrip.max((back - a).max_abs() / a.max_abs());
            let alpha = random_positive_matrix(&mut r, n, 0.5, 2.0) - random_positive_matrix(&mut r, n, 0.5, 2.0);
            let fast = star_wedge_matrix(&g, &alpha);
            let slow = ext::star_wedge(&g, &alpha);
            wedge = wedge.max((fast - slow).max_abs() / (1.0 + slow.max_abs()));
        }
    }
    let t = start.elapsed();
    outcome(
        roundtrip < 1e-12 && wedge < 1e-12 && within(t, 10.0),
        format!("roundtrip {roundtrip:.1e}, wedge vs oracle {wedge:.1e}, {t:.2?}"),
    )
}

const ACTIVE2: [usize; 2] = [0, 2];

fn random_triple(seed: u64, variant: Variant, grid: &TorusGrid, active: &[usize]) -> (ProblemSpec, ScalarField) {
    let mut r = rng(seed);
    let omega0 = MetricModel::random_trig(&mut r, 3, active, 2, 0.3).sample(grid).unwrap();
    let omega = MetricModel::random_trig(&mut r, 3, active, 2, 0.3).sample(grid).unwrap();
    let f = SmoothFunction::random(&mut r, active, 2, 1, 0.2).sample(grid);
    let u = SmoothFunction::random(&mut r, active, 3, 1, 0.02).with_exp_rate(0.5).sample(grid);
    (ProblemSpec::new(variant, omega0, omega, f, RhsVolume::OmegaN).unwrap(), u)
}

fn identities() -> Outcome {
    let start = Instant::now();
    let grid = TorusGrid::uniform(3, &ACTIVE2, 32).unwrap();
    let (mut trace, mut recon) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        for variant in [Variant::Psi, Variant::Phi] {
            let (spec, u) = random_triple(2000 + seed, variant, &grid, &ACTIVE2);
            let rep = identity_check(&spec, &u).unwrap();
            trace = trace.max(rep.trace);
            recon = recon.max(rep.reconstruction);
        }
    }
    let t = start.elapsed();
    outcome(
        trace < 1e-10 && recon < 1e-10 && within(t, 30.0),
        format!("trace {trace:.1e}, reconstruction {recon:.1e} over 20 triples x 2 variants, {t:.2?}"),
    )
}

fn linearization() -> Outcome {
    let start = Instant::now();
    let active = [0, 2, 3];
    let grid = TorusGrid::uniform(3, &active, 8).unwrap();
    let mut worst = 0.0f64;
    for (seed, variant) in [(3001, Variant::Psi), (3002, Variant::Phi)] {
        let (spec, u) = random_triple(seed, variant, &grid, &active);
        let state = SolveState { u, b: 0.1, t: 1.0 };
        let v = SmoothFunction::random(&mut rng(seed + 7), &active, 3, 2, 1.0).sample(&grid);
        let lv = linearized_apply(&spec, &state, &v).unwrap();
        let h = 1e-5;
        let at = |s: f64| SolveState {
            u: &state.u + &v.scale(s),
            ..state.clone()
        };
        let fd = (&ma_residual(&spec, &at(h)).unwrap() - &ma_residual(&spec, &at(-h)).unwrap()).scale(0.5 / h);
        worst = worst.max(sup_norm(&(&fd - &lv)) / sup_norm(&lv));
    }
    let t = start.elapsed();
    outcome(worst < 1e-6 && within(t, 30.0), format!("relative FD mismatch {worst:.1e} (h = 1e-5), {t:.2?}"))
}

fn family(variant: Variant) -> ManufacturedFamily {
    ManufacturedFamily::new(ManufactureConfig {
        n: 3,
        variant,
        amplitude: 0.05,
        ..Default::default()
    })
    .unwrap()
}

fn manufactured(solved: &mut Solved) -> Outcome {
    let cfg = SolverConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for variant in [Variant::Psi, Variant::Phi] {
        let start = Instant::now();
        let fam = family(variant);
        let mut errs = Vec::new();
        let mut b_err = 0.0f64;
        for m in [16, 32] {
            let p = fam.on_grid(&fam.grid(m).unwrap()).unwrap();
            match continuity_solve(&p.spec, &cfg) {
                Ok(rep) => {
                    errs.push(sup_norm(&(&rep.state.u_mean_normalized() - &p.u_star)) / sup_norm(&p.u_star));
                    b_err = b_err.max((rep.state.b - p.b_star).abs());
                    solved.push((p.spec.clone(), rep.state));
                }
                Err(e) => {
                    parts.push(format!("{variant:?} m={m}: {e}"));
                    errs.push(f64::INFINITY);
                }
            }
        }
        let t = start.elapsed();
        let gain = errs[0] / errs[1];
        let ok = errs[0] < 1e-6 && errs[1] < 1e-6 && b_err < 1e-8 && gain >= 1e2 && within(t, 300.0);
        pass &= ok;
        parts.push(format!(
            "{variant:?}: err {:.1e} -> {:.1e} (x{gain:.0e}), b err {b_err:.1e}, {t:.1?}",
            errs[0], errs[1]
        ));
    }
    outcome(pass, parts.join("; "))
}

fn uniqueness(solved: &mut Solved) -> Outcome {
    let start = Instant::now();
    let cfg = SolverConfig::default();
    let mut worst_u = 0.0f64;
    let mut worst_b = 0.0f64;
    for variant in [Variant::Psi, Variant::Phi] {
        let fam = family(variant);
        let p = fam.on_grid(&fam.grid(16).unwrap()).unwrap();
        let mut finals = Vec::new();
        for seed in [5001, 5002] {
            let mut r = rng(seed);
            let u = SmoothFunction::random(&mut r, &fam.config.active, 4, 2, 0.01).sample(p.spec.grid());
            let b = SmoothFunction::random(&mut r, &fam.config.active, 1, 1, 0.1).value(&[0.0; 8]);
            match solve_from(&p.spec, &SolveState { u, b, t: 1.0 }, &cfg) {
                Ok(rep) => finals.push(rep.state),
                Err(e) => return outcome(false, format!("{variant:?} warm start {seed}: {e}")),
            }
        }
        worst_u = worst_u.max(sup_norm(&(&finals[0].u_mean_normalized() - &finals[1].u_mean_normalized())));
        worst_b = worst_b.max((finals[0].b - finals[1].b).abs());
        solved.push((p.spec.clone(), finals.swap_remove(0)));
    }
    let t = start.elapsed();
    outcome(
        worst_u < 1e-8 && worst_b < 1e-8 && within(t, 600.0),
        format!("|du| {worst_u:.1e}, |db| {worst_b:.1e}, {t:.2?}"),
    )
}

fn gauduchon_data(m: usize) -> (ProblemSpec, MetricField) {
    let grid = TorusGrid::uniform(3, &ACTIVE2, m).unwrap();
    let omega = MetricModel::Astheno { eps: 0.1 }.sample(&grid).unwrap();
    let omega0 = MetricModel::Gauduchon { eps: 0.2 }.sample(&grid).unwrap();
    let spec = ProblemSpec::new(Variant::Psi, omega0, omega.clone(), ScalarField::zeros(&grid), RhsVolume::OmegaN).unwrap();
    (spec, omega)
}

fn gauduchon_preservation() -> Outcome {
    let (spec, omega) = gauduchon_data(32);
    let pre = astheno_defect(&omega).unwrap().max(gauduchon_defect(spec.omega0()));
    let fp = SmoothFunction::random(&mut rng(6001), &ACTIVE2, 3, 1, 0.3).sample(spec.grid());
    match calabi_yau_gauduchon(&spec, &fp, &DriverConfig::default()) {
        Ok(res) => outcome(
            pre < 1e-8 && res.gauduchon_defect < 1e-7 && res.volume_defect < 1e-8,
            format!(
                "input defects {pre:.1e}, Gauduchon defect of ω_u {:.1e}, volume defect {:.1e}, b' {:.3e}",
                res.gauduchon_defect, res.volume_defect, res.b_prime
            ),
        ),
        Err(e) => outcome(false, format!("{e}")),
    }
}

fn prescribed_ricci_criterion() -> Outcome {
    let (spec, omega) = gauduchon_data(32);
    let phi = SmoothFunction::random(&mut rng(7001), &ACTIVE2, 3, 1, 0.2).sample(spec.grid());
    let psi = chern_ricci(&omega).zip_map(&hessian_complex(&phi), |a, b| *a - *b).unwrap();
    let defect = match prescribed_ricci(&spec, &psi, &DriverConfig::default()) {
        Ok(res) => res.ricci_defect,
        Err(e) => return outcome(false, format!("{e}")),
    };
    let shift = HermField::from_fn(spec.grid(), |_| HermMatrix::diag(&[0.0, 0.3, 0.0]));
    let bad = psi.zip_map(&shift, |a, b| *a + *b).unwrap();
    let rejected = matches!(
        prescribed_ricci(&spec, &bad, &DriverConfig::default()),
        Err(Error::CohomologyObstruction { .. })
    );
    outcome(
        defect < 1e-6 && rejected,
        format!("|Ric(ω̃) - ψ| {defect:.1e}, zero-mode obstruction rejected: {rejected}"),
    )
}

fn adjoint_kernel_criterion() -> Outcome {
    let cfg = KernelConfig::default();
    let grid = TorusGrid::uniform(3, &ACTIVE2, 8).unwrap();
    let id = MetricField::identity(&grid);
    let flat = ProblemSpec::new(Variant::Psi, id.clone(), id, ScalarField::zeros(&grid), RhsVolume::OmegaN).unwrap();
    let flat_dev = match adjoint_kernel(&flat, &SolveState::zero(&grid), &cfg) {
        Ok(k) => k.f.values().iter().fold(0.0f64, |m, z| m.max((z.re - 1.0).abs())),
        Err(e) => return outcome(false, format!("flat: {e}")),
    };
    let mut pass = flat_dev < 1e-12;
    let mut parts = vec![format!("flat |f - 1| {flat_dev:.1e}")];
    for variant in [Variant::Psi, Variant::Phi] {
        let fam = family(variant);
        let p = fam.on_grid(&fam.grid(16).unwrap()).unwrap();
        let state = match continuity_solve(&p.spec, &SolverConfig::default()) {
            Ok(rep) => rep.state,
            Err(e) => return outcome(false, format!("{variant:?}: {e}")),
        };
        let k = match adjoint_kernel(&p.spec, &state, &cfg) {
            Ok(k) => k,
            Err(e) => return outcome(false, format!("{variant:?}: {e}")),
        };
        let f = k.f.real_parts();
        let min_f = f.iter().cloned().fold(f64::INFINITY, f64::min);
        let op = LinearizedOperator::new(&p.spec, &state).unwrap();
        let dens: Vec<f64> = op.tilde().values().iter().map(|m| m.det().re).collect();
        let mut r = rng(8001);
        let mut orth = 0.0f64;
        for _ in 0..10 {
            let z = SmoothFunction::random(&mut r, &fam.config.active, 3, 2, 1.0).sample(p.spec.grid()).real_parts();
            let lz = op.apply(&z);
            let pairing: Vec<f64> = lz.iter().zip(&f).zip(&dens).map(|((a, b), c)| a * b * c).collect();
            orth = orth.max(mean_real(&pairing).abs());
        }
        pass &= min_f > 0.0 && k.residual < 1e-8 && orth < 1e-8;
        parts.push(format!(
            "{variant:?}: min f {min_f:.2}, |L*f| {:.1e}, max |<f, Lζ>| {orth:.1e}",
            k.residual
        ));
    }
    outcome(pass, parts.join("; "))
}

fn estimate_monitors(solved: &Solved) -> Outcome {
    let mut pass = !solved.is_empty();
    let (mut min_slack, mut band_ok, mut trips, mut worst_ratio) = (f64::INFINITY, true, 0usize, 0.0f64);
    for (spec, state) in solved {
        let b = b_bound_check(spec, state);
        min_slack = min_slack.min(b.slack);
        pass &= b.holds();
        let band = eta_band(spec, state).unwrap();
        band_ok &= band.holds();
        let table = cherrier_table(spec, state, &CHERRIER_P).unwrap();
        let base = table[0].ratio;
        for row in &table {
            worst_ratio = worst_ratio.max(row.ratio / base);
        }
        trips += cherrier_tripwire(&table, 10.0).len();
    }
    pass &= band_ok && trips == 0;
    outcome(
        pass,
        format!(
            "{} solves: min b-bound slack {min_slack:.2e}, η band {}, Cherrier max ratio/baseline {worst_ratio:.2} ({trips} tripped)",
            solved.len(),
            if band_ok { "holds" } else { "violated" }
        ),
    )
}

fn beta_closedness_criterion() -> Outcome {
    let grid = TorusGrid::uniform(3, &ACTIVE2, 32).unwrap();
    let omega = MetricModel::Gauduchon { eps: 0.2 }.sample(&grid).unwrap();
    let spec = ProblemSpec::new(Variant::Phi, omega.clone(), omega, ScalarField::zeros(&grid), RhsVolume::OmegaN).unwrap();
    let mut r = rng(9001);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let u = SmoothFunction::random(&mut r, &ACTIVE2, 3, 1, 0.1).sample(&grid);
        worst = worst.max(beta_closedness(&spec, &u).unwrap());
    }
    outcome(worst < 1e-8, format!("max |∂∂̄β_u| {worst:.1e} over 5 random u"))
}

fn main() -> ExitCode {
    let mut solved = Solved::new();
    let mut failed = 0;
    let mut report = |id: usize, name: &str, o: Outcome| {
        println!("{} [{id:>2}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    report(1, "pointwise algebra", pointwise_algebra());
    report(2, "trace and reconstruction identities", identities());
    report(3, "linearization", linearization());
    report(4, "manufactured recovery", manufactured(&mut solved));
    report(5, "uniqueness", uniqueness(&mut solved));
    report(6, "Gauduchon preservation", gauduchon_preservation());
    report(7, "prescribed Chern-Ricci form", prescribed_ricci_criterion());
    report(8, "adjoint kernel", adjoint_kernel_criterion());
    report(9, "estimate monitors", estimate_monitors(&solved));
    report(10, "β_u closedness", beta_closedness_criterion());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
