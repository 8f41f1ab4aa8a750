//! End-to-end pipelines: volume prescription for Gauduchon metrics,
//! prescribed Chern–Ricci curvature, and the `Phi` route to a Gauduchon
//! metric with prescribed volume.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{astheno_defect, chern_ricci, gauduchon_defect, nm1_root, FormNM1};
use crate::grid::{hessian_complex, mean, HermField, MetricField, ScalarField};
use crate::ma::{tilde_metric, ProblemSpec, RhsVolume, Variant};
use crate::solver::{continuity_solve, SolveReport, SolverConfig};
use crate::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct DriverConfig {
    pub solver: SolverConfig,
    /// Largest admissible Gauduchon / astheno-Kähler defect of the inputs.
    pub precondition_tol: f64,
    /// Largest admissible zero mode of `Ric(ω) - ψ`.
    pub cohomology_tol: f64,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            precondition_tol: 1e-8,
            cohomology_tol: 1e-10,
        }
    }
}

fn require(what: &'static str, defect: f64, tol: f64) -> Result<()> {
    if defect <= tol {
        Ok(())
    } else {
        Err(Error::Precondition { what, defect, tol })
    }
}

/// `max |log det a - log det b - f|` over nodes.
fn volume_defect(a: &MetricField, b: &MetricField, f: &[f64]) -> f64 {
    a.log_det()
        .iter()
        .zip(b.log_det())
        .zip(f)
        .fold(0.0f64, |m, ((x, y), z)| m.max((x - y - z).abs()))
}

/// The metric whose `(n-1)`-th power is the solved form.
fn root_metric(spec: &ProblemSpec, report: &SolveReport) -> Result<MetricField> {
    let tilde = tilde_metric(spec, &report.state.u)?;
    nm1_root(&FormNM1::new(spec.omega().clone(), tilde)?)
}

#[derive(Clone, Debug)]
pub struct CalabiYauResult {
    /// `ω_u` with `ω_u^{n-1} = Ψ_u`.
    pub omega_u: MetricField,
    pub b_prime: f64,
    pub report: SolveReport,
    /// `max |log(ω_u^n / ω^n) - F' - b'|`.
    pub volume_defect: f64,
    pub gauduchon_defect: f64,
}

/// Solve `ω_u^n = e^{F'+b'} ω^n` with `ω_u^{n-1} = ω₀^{n-1} + i∂∂̄u ∧ ω^{n-2}`,
/// for `ω₀` Gauduchon and `ω` astheno-Kähler. Runs the `Psi` equation with
/// `F = (n-1)F'` and returns `b' = b/(n-1)`.
pub fn calabi_yau_gauduchon(spec: &ProblemSpec, f_prime: &ScalarField, cfg: &DriverConfig) -> Result<CalabiYauResult> {
    if spec.rhs() != RhsVolume::OmegaN {
        return Err(Error::InvalidConfig("volume prescription needs the ω^n right-hand side".into()));
    }
    let n = spec.dim();
    let nm1 = n as f64 - 1.0;
    if let Some(d) = astheno_defect(spec.omega()) {
        require("astheno-Kähler (ω)", d, cfg.precondition_tol)?;
    }
    require("Gauduchon (ω₀)", gauduchon_defect(spec.omega0()), cfg.precondition_tol)?;
    let f = f_prime.realified().scale(nm1);
    let spec = spec.with_variant(Variant::Psi)?.with_f(f)?;
    let report = continuity_solve(&spec, &cfg.solver)?;
    let omega_u = root_metric(&spec, &report)?;
    let b_prime = report.state.b / nm1;
    let target: Vec<f64> = f_prime.values().iter().map(|z| z.re + b_prime).collect();
    Ok(CalabiYauResult {
        volume_defect: volume_defect(&omega_u, spec.omega(), &target),
        gauduchon_defect: gauduchon_defect(&omega_u),
        omega_u,
        b_prime,
        report,
    })
}

#[derive(Clone, Debug)]
pub struct RicciResult {
    pub omega_tilde: MetricField,
    /// Mean-zero potential with `Ric(ω) - ψ = i∂∂̄F`.
    pub f: ScalarField,
    pub b_prime: f64,
    /// `sup |Ric(ω̃) - ψ|`.
    pub ricci_defect: f64,
    pub volume: CalabiYauResult,
}

/// Mean-zero `F` with `i∂∂̄F = d`, after checking that `d` has no zero mode.
pub fn ddbar_potential(d: &HermField, cfg: &DriverConfig) -> Result<ScalarField> {
    let grid = d.grid();
    let n = grid.dim();
    for i in 0..n {
        for j in 0..n {
            let m = mean(&d.entry(i, j)).norm();
            if m > cfg.cohomology_tol {
                return Err(Error::CohomologyObstruction { i, j, magnitude: m });
            }
        }
    }
    let trace = ScalarField::from_values(
        grid,
        d.values().iter().map(|m| C64::new(m.trace().re, 0.0)).collect(),
    )?;
    let f = trace
        .spectrum()
        .solve(|w| C64::new(w.flat_laplacian(n), 0.0), C64::new(0.0, 0.0))
        .realified();
    let mismatch = hessian_complex(&f).max_diff(d)?;
    let scale = d.sup_norm().max(1.0);
    require("∂∂̄-exactness of Ric(ω) - ψ", mismatch / scale, cfg.precondition_tol)?;
    Ok(f)
}

/// Metric `ω̃` with `Ric(ω̃) = ψ` and `ω̃^{n-1} = ω₀^{n-1} + i∂∂̄u ∧ ω^{n-2}`.
pub fn prescribed_ricci(spec: &ProblemSpec, psi: &HermField, cfg: &DriverConfig) -> Result<RicciResult> {
    let ric = chern_ricci(spec.omega());
    let d = ric.zip_map(psi, |a, b| *a - *b)?;
    let f = ddbar_potential(&d, cfg)?;
    let volume = calabi_yau_gauduchon(spec, &f, cfg)?;
    let ric_t = chern_ricci(&volume.omega_u);
    let ricci_defect = ric_t.max_diff(psi)?;
    Ok(RicciResult {
        omega_tilde: volume.omega_u.clone(),
        f,
        b_prime: volume.b_prime,
        ricci_defect,
        volume,
    })
}

#[derive(Clone, Debug)]
pub struct PhiResult {
    /// `ω̃` with `ω̃^{n-1} = Φ_u`.
    pub omega_tilde: MetricField,
    pub b: f64,
    pub report: SolveReport,
    /// `max |log(ω̃^n / ω^n) - (F + b)/(n-1)|`.
    pub volume_defect: f64,
    pub gauduchon_defect: f64,
    /// Gauduchon defect of `ω₀`; `ω̃` inherits at most this much.
    pub reference_defect: f64,
}

impl PhiResult {
    /// `defect(ω̃) ≤ defect(ω₀) + slack`.
    pub fn gauduchon_preserved(&self, slack: f64) -> bool {
        self.gauduchon_defect <= self.reference_defect + slack
    }
}

/// Solve the `Phi` equation for a Gauduchon `ω`, then take the root.
pub fn phi_pipeline(spec: &ProblemSpec, f: &ScalarField, cfg: &DriverConfig) -> Result<PhiResult> {
    let n = spec.dim();
    if n < 3 {
        return Err(Error::UnsupportedDimension {
            n,
            reason: "the Phi equation needs n >= 3",
        });
    }
    if spec.rhs() != RhsVolume::OmegaN {
        return Err(Error::InvalidConfig("the Phi pipeline needs the ω^n right-hand side".into()));
    }
    require("Gauduchon (ω)", gauduchon_defect(spec.omega()), cfg.precondition_tol)?;
    let spec = spec.with_variant(Variant::Phi)?.with_f(f.realified())?;
    let report = continuity_solve(&spec, &cfg.solver)?;
    let omega_tilde = root_metric(&spec, &report)?;
    let nm1 = n as f64 - 1.0;
    let b = report.state.b;
    let target: Vec<f64> = f.values().iter().map(|z| (z.re + b) / nm1).collect();
    Ok(PhiResult {
        volume_defect: volume_defect(&omega_tilde, spec.omega(), &target),
        gauduchon_defect: gauduchon_defect(&omega_tilde),
        reference_defect: gauduchon_defect(spec.omega0()),
        omega_tilde,
        b,
        report,
    })
}

/// `sup |log det ω̃ - log det ω - F' - b'|`, exposed for callers holding
/// their own metrics.
pub fn log_volume_defect(omega_tilde: &MetricField, omega: &MetricField, f: &ScalarField, shift: f64) -> f64 {
    let t: Vec<f64> = f.values().iter().map(|z| z.re + shift).collect();
    volume_defect(omega_tilde, omega, &t)
}

/// `max |Ric(ω̃) - Ric(ω) + i∂∂̄ log(ω̃^n/ω^n)|`: the Ricci form computed
/// directly against the one obtained from the solved log-volume.
pub fn ricci_two_ways(omega_tilde: &MetricField, omega: &MetricField) -> Result<f64> {
    let ld: Vec<f64> = omega_tilde
        .log_det()
        .iter()
        .zip(omega.log_det())
        .map(|(a, b)| a - b)
        .collect();
    let lf = ScalarField::from_real(omega.grid(), &ld)?;
    let via = chern_ricci(omega).zip_map(&hessian_complex(&lf), |r, h| *r - *h)?;
    chern_ricci(omega_tilde).max_diff(&via)
}
