//! Damped Newton with continuity in `t`, the positive kernel of the adjoint
//! linearization, and the Gauduchon conformal factor.
//!
//! Each Newton step solves the augmented system
//! `A x = L x + mean(x) = -r`, then sets `δu = x - mean(x)` and
//! `δb = -mean(x)`. `A` is invertible because `L` kills constants and its
//! range misses the constant function.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::diagnostics::c2_monitor;
use crate::error::{Error, Result};
use crate::geometry::{gauduchon_coefficients, gauduchon_defect};
use crate::grid::{mean_real, pairwise_sum, sup_norm_real, HermField, MetricField, ScalarField};
use crate::krylov::{gmres, GmresConfig};
use crate::ma::{
    log_det_tilde, residual_from_tilde, tilde_metric, LinearizedOperator, ProblemSpec, SolveState,
};
use crate::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct DampingConfig {
    /// Smallest step factor tried before giving up.
    pub min_factor: f64,
    /// Factor applied between trials.
    pub shrink: f64,
}

impl Default for DampingConfig {
    fn default() -> Self {
        Self {
            min_factor: 1.0 / 1024.0,
            shrink: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Target sup-norm of the residual.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Continuity values of `t`, from 0 to 1, strictly increasing.
    pub schedule: Vec<f64>,
    pub damping: DampingConfig,
    pub linear: GmresConfig,
    /// Smallest continuity step allowed after halving.
    pub min_step: f64,
    /// Newton stagnates when the residual fails to drop by
    /// `stagnation_factor` over `stagnation_window` steps.
    pub stagnation_window: usize,
    pub stagnation_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-11,
            max_newton: 40,
            schedule: vec![0.0, 0.5, 1.0],
            damping: DampingConfig::default(),
            linear: GmresConfig::default(),
            min_step: 1.0 / 256.0,
            stagnation_window: 5,
            stagnation_factor: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidConfig("newton_tol must be positive".into()));
        }
        let s = &self.schedule;
        if s.len() < 2 || s[0] != 0.0 || *s.last().unwrap_or(&0.0) != 1.0 {
            return Err(Error::InvalidConfig("schedule must start at 0 and end at 1".into()));
        }
        if s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("schedule must be strictly increasing".into()));
        }
        if !(self.damping.shrink > 0.0 && self.damping.shrink < 1.0) {
            return Err(Error::InvalidConfig("damping shrink must lie in (0, 1)".into()));
        }
        if !(self.min_step > 0.0) || !(self.linear.rel_tol > 0.0) {
            return Err(Error::InvalidConfig("min_step and linear tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// One accepted Newton iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub t: f64,
    pub iter: usize,
    pub residual_sup: f64,
    pub b: f64,
    pub positivity_margin: f64,
    pub damping: f64,
    pub linear_iterations: usize,
}

/// State at an accepted continuity parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct PathPoint {
    pub t: f64,
    pub b: f64,
    pub residual_sup: f64,
    pub positivity_margin: f64,
    pub c2_ratio: f64,
    pub newton_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub state: SolveState,
    /// Sup-norm residual after every accepted Newton iteration, in order.
    pub residual_history: Vec<f64>,
    pub b_history: Vec<f64>,
    /// Smallest eigenvalue of `g̃` relative to `g` at the final state.
    pub positivity_margin: f64,
    pub records: Vec<IterationRecord>,
    pub path: Vec<PathPoint>,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Information about one Newton step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub damping: f64,
    pub linear_iterations: usize,
    pub residual_before: f64,
    pub residual_after: f64,
}

fn augmented_solve(op: &LinearizedOperator, rhs: &[f64], cfg: &GmresConfig) -> Result<(Vec<f64>, usize)> {
    let a = |x: &[f64]| {
        let mut y = op.apply(x);
        let m = mean_real(x);
        for v in y.iter_mut() {
            *v += m;
        }
        y
    };
    let (x, out) = gmres(a, |r| op.precondition(r), rhs, None, cfg);
    if !out.converged {
        return Err(Error::LinearSolve {
            residual: out.residual,
            iterations: out.iterations,
        });
    }
    Ok((x, out.iterations))
}

fn with_u(u: &ScalarField, du: &[f64], alpha: f64) -> ScalarField {
    let vals: Vec<C64> = u
        .values()
        .iter()
        .zip(du)
        .map(|(z, d)| C64::new(z.re + alpha * d, 0.0))
        .collect();
    ScalarField::from_values(u.grid(), vals).expect("length matches grid")
}

/// One damped Newton step from `state`.
pub fn newton_step(spec: &ProblemSpec, state: &SolveState, cfg: &SolverConfig) -> Result<(SolveState, StepInfo)> {
    let op = LinearizedOperator::new(spec, state)?;
    newton_step_with(spec, state, &op, cfg)
}

fn newton_step_with(
    spec: &ProblemSpec,
    state: &SolveState,
    op: &LinearizedOperator,
    cfg: &SolverConfig,
) -> Result<(SolveState, StepInfo)> {
    let r = op.residual();
    let r0 = sup_norm_real(r);
    let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
    let (x, lin_iters) = augmented_solve(op, &rhs, &cfg.linear)?;
    let m = mean_real(&x);
    let du: Vec<f64> = x.iter().map(|v| v - m).collect();
    let db = -m;
    if r0 == 0.0 {
        return Ok((
            state.clone(),
            StepInfo {
                damping: 1.0,
                linear_iterations: lin_iters,
                residual_before: 0.0,
                residual_after: 0.0,
            },
        ));
    }
    let mut alpha = 1.0;
    let mut lost_positivity = Vec::new();
    while alpha >= cfg.damping.min_factor {
        let u = with_u(&state.u, &du, alpha);
        let tilde = tilde_metric(spec, &u)?;
        match residual_from_tilde(spec, &tilde, state.b + alpha * db, state.t) {
            Ok(rn) => {
                let r1 = sup_norm_real(&rn);
                if r1 < r0 {
                    return Ok((
                        SolveState {
                            u,
                            b: state.b + alpha * db,
                            t: state.t,
                        },
                        StepInfo {
                            damping: alpha,
                            linear_iterations: lin_iters,
                            residual_before: r0,
                            residual_after: r1,
                        },
                    ));
                }
            }
            Err(Error::TildeNotPositive { nodes }) => lost_positivity = nodes,
            Err(e) => return Err(e),
        }
        alpha *= cfg.damping.shrink;
    }
    if !lost_positivity.is_empty() {
        return Err(Error::TildeNotPositive {
            nodes: lost_positivity,
        });
    }
    Err(Error::Stagnation {
        residual: r0,
        iterations: 0,
    })
}

/// Newton iteration at fixed `t` from a warm start.
pub fn newton_solve(
    spec: &ProblemSpec,
    init: &SolveState,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<(SolveState, Vec<IterationRecord>)> {
    let mut state = init.clone();
    // Work with mean-zero u.
    state.u = state.u_mean_normalized();
    let mut records = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    for iter in 0..=cfg.max_newton {
        let op = LinearizedOperator::new(spec, &state)?;
        let res = sup_norm_real(op.residual());
        let margin = op.positivity_margin(spec);
        if iter == 0 {
            let rec = IterationRecord {
                t: state.t,
                iter,
                residual_sup: res,
                b: state.b,
                positivity_margin: margin,
                damping: 0.0,
                linear_iterations: 0,
            };
            observer(&rec);
            records.push(rec);
        }
        history.push(res);
        if res < cfg.newton_tol {
            return Ok((state, records));
        }
        if iter == cfg.max_newton {
            break;
        }
        let w = cfg.stagnation_window;
        if history.len() > w && res > cfg.stagnation_factor * history[history.len() - 1 - w] {
            return Err(Error::Stagnation {
                residual: res,
                iterations: iter,
            });
        }
        let (next, info) = newton_step_with(spec, &state, &op, cfg).map_err(|e| match e {
            Error::Stagnation { residual, .. } => Error::Stagnation {
                residual,
                iterations: iter,
            },
            other => other,
        })?;
        state = next;
        let tilde = tilde_metric(spec, &state.u)?;
        let rec = IterationRecord {
            t: state.t,
            iter: iter + 1,
            residual_sup: info.residual_after,
            b: state.b,
            positivity_margin: crate::ma::positivity_margin(spec.omega(), &tilde),
            damping: info.damping,
            linear_iterations: info.linear_iterations,
        };
        observer(&rec);
        records.push(rec);
    }
    Err(Error::Stagnation {
        residual: *history.last().unwrap_or(&f64::NAN),
        iterations: cfg.max_newton,
    })
}

/// Starting state at `t = 0`: `u = 0`, `b = mean(log det h - log det g_rhs)`.
pub fn initial_state(spec: &ProblemSpec) -> Result<SolveState> {
    let h = crate::ma::omega_h(spec);
    let diff: Vec<f64> = h
        .log_det()
        .iter()
        .zip(spec.log_det_rhs())
        .map(|(a, b)| a - b)
        .collect();
    Ok(SolveState {
        u: ScalarField::zeros(spec.grid()),
        b: mean_real(&diff),
        t: 0.0,
    })
}

/// Solve the `t`-family from `t = 0` to `t = 1` with warm starts.
pub fn continuity_solve(spec: &ProblemSpec, cfg: &SolverConfig) -> Result<SolveReport> {
    continuity_solve_observed(spec, cfg, &mut |_| {})
}

pub fn continuity_solve_observed(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<SolveReport> {
    cfg.validate()?;
    let mut report = SolveReport {
        state: initial_state(spec)?,
        residual_history: Vec::new(),
        b_history: Vec::new(),
        positivity_margin: f64::NAN,
        records: Vec::new(),
        path: Vec::new(),
    };
    let (s0, recs) = newton_solve(spec, &report.state, cfg, observer)
        .map_err(|_| Error::ContinuityFailed { last_t: f64::NAN })?;
    accept(spec, &mut report, s0, recs);

    let mean_f = mean_real(&spec.f().real_parts());
    let schedule = &cfg.schedule;
    let mut next_idx = 1;
    let mut t_prev = 0.0;
    let mut step = schedule[1] - schedule[0];
    while next_idx < schedule.len() {
        let target = schedule[next_idx];
        let t_next = (t_prev + step).min(target);
        let mut warm = report.state.clone();
        warm.b += (t_next - t_prev) * mean_f;
        warm.t = t_next;
        match newton_solve(spec, &warm, cfg, observer) {
            Ok((s, recs)) => {
                accept(spec, &mut report, s, recs);
                t_prev = t_next;
                if t_next >= target {
                    next_idx += 1;
                    if next_idx < schedule.len() {
                        step = schedule[next_idx] - t_prev;
                    }
                }
            }
            Err(_) => {
                step *= 0.5;
                if step < cfg.min_step {
                    return Err(Error::ContinuityFailed { last_t: t_prev });
                }
            }
        }
    }
    report.positivity_margin = report.path.last().map(|p| p.positivity_margin).unwrap_or(f64::NAN);
    Ok(report)
}

fn accept(spec: &ProblemSpec, report: &mut SolveReport, state: SolveState, recs: Vec<IterationRecord>) {
    for r in recs.iter().skip(1) {
        report.residual_history.push(r.residual_sup);
        report.b_history.push(r.b);
    }
    let last = recs.last().cloned();
    let res = last.as_ref().map(|r| r.residual_sup).unwrap_or(f64::NAN);
    if recs.len() == 1 {
        report.residual_history.push(res);
        report.b_history.push(state.b);
    }
    let c2 = c2_monitor(spec, &state).map(|m| m.ratio).unwrap_or(f64::NAN);
    report.path.push(PathPoint {
        t: state.t,
        b: state.b,
        residual_sup: res,
        positivity_margin: last.map(|r| r.positivity_margin).unwrap_or(f64::NAN),
        c2_ratio: c2,
        newton_iterations: recs.len() - 1,
    });
    report.records.extend(recs);
    report.state = state;
}

/// Newton solve at `t = state.t` starting from an arbitrary admissible
/// state; used for warm starts and uniqueness checks.
pub fn solve_from(spec: &ProblemSpec, init: &SolveState, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let (state, recs) = newton_solve(spec, init, cfg, &mut |_| {})?;
    let mut report = SolveReport {
        state: state.clone(),
        residual_history: Vec::new(),
        b_history: Vec::new(),
        positivity_margin: f64::NAN,
        records: Vec::new(),
        path: Vec::new(),
    };
    accept(spec, &mut report, state, recs);
    report.positivity_margin = report.path[0].positivity_margin;
    Ok(report)
}

/// Positive kernel function of the adjoint linearization.
#[derive(Clone, Debug)]
pub struct AdjointKernel {
    /// `f` with `L* f = 0` and `∫ f ω̂^n = 1`.
    pub f: ScalarField,
    pub sigma: ScalarField,
    /// `sup |L* f|`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfig {
    /// Shift `μ` of the inverse iteration on `Lᵀ - μ`.
    pub shift: f64,
    /// Iteration stops once successive iterates differ by less than
    /// `step_tol` in sup-norm (they are normalized to mean one).
    pub step_tol: f64,
    /// Largest accepted `sup |L* f|` at the stopping point.
    pub tol: f64,
    pub max_iter: usize,
    pub linear: GmresConfig,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            shift: 10.0,
            step_tol: 1e-12,
            tol: 1e-8,
            max_iter: 60,
            linear: GmresConfig {
                rel_tol: 1e-12,
                ..GmresConfig::default()
            },
        }
    }
}

/// Kernel of `L*`, the adjoint of the linearization at `state` with respect
/// to the pairing `Σ a b det ĝ / N`, computed by shifted inverse iteration.
pub fn adjoint_kernel(spec: &ProblemSpec, state: &SolveState, cfg: &KernelConfig) -> Result<AdjointKernel> {
    let op = LinearizedOperator::new(spec, state)?;
    let d = log_det_tilde(op.tilde())?;
    let dens: Vec<f64> = d.iter().map(|l| Float::exp(*l)).collect();
    let len = dens.len();
    let mu = cfg.shift;
    // With f = w / det ĝ, L* f = 0 ⇔ Lᵀ w = 0.
    let mut w = dens.clone();
    let mut residual = f64::INFINITY;
    let kernel_residual = |w: &[f64]| -> f64 {
        let lt = op.apply_transpose(w);
        lt.iter().zip(&dens).map(|(v, dd)| (v / dd).abs()).fold(0.0, f64::max)
    };
    for iter in 0..cfg.max_iter {
        let a = |x: &[f64]| {
            let mut y = op.apply_transpose(x);
            for (yi, xi) in y.iter_mut().zip(x) {
                *yi -= mu * xi;
            }
            y
        };
        let guess: Vec<f64> = w.iter().map(|v| -v / mu).collect();
        let (y, out) = gmres(a, |r| op.flat_solve_shifted(r, mu), &w, Some(&guess), &cfg.linear);
        if !out.converged && out.residual > 1e-9 {
            return Err(Error::LinearSolve {
                residual: out.residual,
                iterations: out.iterations,
            });
        }
        let m = pairwise_sum(&y) / len as f64;
        if m == 0.0 || !m.is_finite() {
            return Err(Error::PowerIteration { residual });
        }
        let next: Vec<f64> = y.iter().map(|v| v / m).collect();
        let step = next.iter().zip(&w).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        w = next;
        residual = kernel_residual(&w);
        if step < cfg.step_tol {
            if !(residual < cfg.tol) {
                return Err(Error::PowerIteration { residual });
            }
            let f: Vec<f64> = w.iter().zip(&dens).map(|(a, b)| a / b).collect();
            let (mn, mx) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            if !(mn > 0.0) {
                return Err(Error::KernelSignChange { min: mn, max: mx });
            }
            let sigma: Vec<f64> = f.iter().map(|v| Float::ln(*v)).collect();
            return Ok(AdjointKernel {
                f: ScalarField::from_real(spec.grid(), &f)?,
                sigma: ScalarField::from_real(spec.grid(), &sigma)?,
                residual,
                iterations: iter + 1,
            });
        }
    }
    Err(Error::PowerIteration { residual })
}

/// Conformal factor making a metric Gauduchon.
#[derive(Clone, Debug)]
pub struct GauduchonFactor {
    /// Mean-zero `σ` with `e^σ ω` Gauduchon.
    pub sigma: ScalarField,
    /// Gauduchon defect of `e^σ ω`, measured independently.
    pub defect: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GauduchonConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub linear: GmresConfig,
}

impl Default for GauduchonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 40,
            linear: GmresConfig {
                rel_tol: 1e-12,
                ..GmresConfig::default()
            },
        }
    }
}

/// Newton on mean-zero `σ` for `Σ ∂_a∂_{b̄}(P_ab e^{(n-1)σ}) = 0`, where
/// `P` are the coordinate coefficients of `ω^{n-1}`.
pub fn gauduchon_factor(omega: &MetricField, cfg: &GauduchonConfig) -> Result<GauduchonFactor> {
    let grid = *omega.grid();
    let n = grid.dim();
    let nm1 = n as f64 - 1.0;
    let p = gauduchon_coefficients(omega);
    let len = grid.len();
    let defect_op = |rho: &[f64]| -> Vec<f64> {
        let scaled = HermField::from_values(&grid, p.values().iter().zip(rho).map(|(m, r)| m.scale(*r)).collect())
            .expect("length matches grid");
        crate::geometry::ddbar_top(&scaled).real_parts()
    };
    let mut sigma = vec![0.0; len];
    let rho_of = |s: &[f64]| -> Vec<f64> { s.iter().map(|v| Float::exp(nm1 * v)).collect() };
    let mut rho = rho_of(&sigma);
    let mut res = defect_op(&rho);
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        let r0 = sup_norm_real(&res);
        if r0 < cfg.tol * 1e-2 {
            break;
        }
        iterations += 1;
        // Flat symbol (n-1) Σ mean(P_ab ρ) ∂_a∂_{b̄}.
        let mut pr_mean = crate::linalg::HermMatrix::zeros(n);
        for a in 0..n {
            for b in 0..n {
                let s: Vec<C64> = p.values().iter().zip(&rho).map(|(x, r)| x[(a, b)] * r).collect();
                pr_mean[(a, b)] = crate::grid::pairwise_sum_c(&s) / len as f64;
            }
        }
        let jac = |x: &[f64]| {
            let arg: Vec<f64> = x.iter().zip(&rho).map(|(xi, r)| nm1 * r * xi).collect();
            let mut y = defect_op(&arg);
            let m = mean_real(x);
            for v in y.iter_mut() {
                *v += m;
            }
            y
        };
        let prec = |r: &[f64]| {
            let mut data: Vec<C64> = r.iter().map(|&x| C64::new(x, 0.0)).collect();
            grid.forward(&mut data);
            for (k, dk) in data.iter_mut().enumerate() {
                if k == 0 {
                    continue;
                }
                let w = grid.wave(k);
                let mut s = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        s += (pr_mean[(a, b)] * w.hess(a, b)).re;
                    }
                }
                s *= nm1;
                *dk = if s.abs() > 1e-300 { *dk / s } else { C64::new(0.0, 0.0) };
            }
            grid.inverse(&mut data);
            data.iter().map(|z| z.re).collect::<Vec<f64>>()
        };
        let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
        let (x, out) = gmres(jac, prec, &rhs, None, &cfg.linear);
        if !out.converged && out.residual > 1e-6 {
            return Err(Error::LinearSolve {
                residual: out.residual,
                iterations: out.iterations,
            });
        }
        let m = mean_real(&x);
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-4 {
            let trial: Vec<f64> = sigma.iter().zip(&x).map(|(s, d)| s + alpha * (d - m)).collect();
            let rho_t = rho_of(&trial);
            let res_t = defect_op(&rho_t);
            if sup_norm_real(&res_t) < r0 {
                sigma = trial;
                rho = rho_t;
                res = res_t;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let sig = ScalarField::from_real(&grid, &sigma)?;
    let defect = gauduchon_defect(&omega.conformal(&sig)?);
    if !(defect < cfg.tol) {
        return Err(Error::GauduchonStall { defect });
    }
    Ok(GauduchonFactor {
        sigma: sig,
        defect,
        iterations,
    })
}

/// Human-readable one-line summary of a report.
pub fn summarize(report: &SolveReport) -> alloc::string::String {
    format!(
        "t={} b={:.12e} residual={:.3e} margin={:.4} newton={}",
        report.state.t,
        report.state.b,
        report.final_residual(),
        report.positivity_margin,
        report.residual_history.len()
    )
}
