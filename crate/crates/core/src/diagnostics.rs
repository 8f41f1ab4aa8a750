//! Monitors for the quantities bounded by the a priori estimates, and
//! field-level identity checks. Nothing here mutates a state; every
//! reported inequality uses constants measured from the data.

use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{chern_connection, coordinate_coefficients_matrix, ddbar_top};
use crate::grid::{
    d_antiholo, gradient_holo, grad_norm_sq, hessian_complex, laplacian, pairwise_sum, sup_norm,
    HermField, MetricField, ScalarField,
};
use crate::linalg::HermMatrix;
use crate::ma::{e_term, omega_h, tilde_metric, ProblemSpec, SolveState, Variant};
use crate::C64;

/// `|b| ≤ sup|tF| + C_meas`, where `C_meas` is the largest pointwise
/// `|log det ω_h - log det g_rhs|`. At a maximum (minimum) of `u` the
/// second-order terms have a sign and the first-order term vanishes, which
/// pins `b` between those two values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBound {
    pub abs_b: f64,
    pub sup_f: f64,
    pub c_meas: f64,
    /// `sup|tF| + C_meas - |b|`; non-negative when the bound holds.
    pub slack: f64,
}

impl BBound {
    pub fn holds(&self) -> bool {
        self.slack >= -1e-12 * (1.0 + self.abs_b)
    }
}

pub fn b_bound_check(spec: &ProblemSpec, state: &SolveState) -> BBound {
    let h = omega_h(spec);
    let c_meas = h
        .log_det()
        .iter()
        .zip(spec.log_det_rhs())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let sup_f = state.t.abs() * sup_norm(spec.f());
    let abs_b = state.b.abs();
    BBound {
        abs_b,
        sup_f,
        c_meas,
        slack: sup_f + c_meas - abs_b,
    }
}

/// Second-order monitor `sup tr_g g̃ / K` with `K = sup|∇u|²_g + 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct C2Monitor {
    pub t: f64,
    pub sup_trace: f64,
    pub k: f64,
    pub ratio: f64,
}

pub fn c2_monitor(spec: &ProblemSpec, state: &SolveState) -> Result<C2Monitor> {
    let tilde = tilde_metric(spec, &state.u)?;
    let g = spec.omega();
    let sup_trace = (0..g.len())
        .map(|k| g.upper_at(k).contract(tilde.at(k)).re)
        .fold(f64::NEG_INFINITY, f64::max);
    let grad = grad_norm_sq(g, &state.u.realified())?;
    let k = grad.real_parts().iter().fold(0.0f64, |m, v| m.max(*v)) + 1.0;
    Ok(C2Monitor {
        t: state.t,
        sup_trace,
        k,
        ratio: sup_trace / k,
    })
}

/// Pointwise check of `(1/n) tr_g g̃ ≤ λ_max ≤ η_max ≤ (n-1) λ_max`, with
/// eigenvalues taken relative to `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaBand {
    /// Nodes where some inequality fails beyond rounding.
    pub violations: Vec<usize>,
    /// Smallest gap among the three inequalities, over all nodes.
    pub min_gap: f64,
    /// Largest deviation between the two expressions for `η`.
    pub dual_difference: f64,
}

impl EtaBand {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn eta_band(spec: &ProblemSpec, state: &SolveState) -> Result<EtaBand> {
    let n = spec.dim() as f64;
    let eta = crate::ma::eta_tensor(spec, state)?;
    let tilde = tilde_metric(spec, &state.u)?;
    let g = spec.omega();
    let mut violations = Vec::new();
    let mut min_gap = f64::INFINITY;
    for k in 0..g.len() {
        let lam = tilde
            .at(k)
            .eigenvalues_relative_to(g.at(k))
            .ok_or(Error::NotPositive { node: k })?;
        let mu = eta
            .eta
            .at(k)
            .eigenvalues_relative_to(g.at(k))
            .ok_or(Error::NotPositive { node: k })?;
        let d = spec.dim();
        let lam_max = lam[d - 1];
        let eta_max = mu[d - 1];
        let tr: f64 = lam[..d].iter().sum();
        let gaps = [lam_max - tr / n, eta_max - lam_max, (n - 1.0) * lam_max - eta_max];
        let gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
        min_gap = min_gap.min(gap);
        if gap < -1e-10 * (1.0 + lam_max.abs()) {
            violations.push(k);
        }
    }
    Ok(EtaBand {
        violations,
        min_gap,
        dual_difference: eta.dual_difference,
    })
}

/// One row of the Cherrier table, integrals taken with `det g / N` and `u`
/// shifted to `sup u = 0`:
///
/// `lhs = ∫ |∂ e^{-pu/2}|²_g`, `rhs = ∫ e^{-pu}`, `ratio = lhs / (p·rhs)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CherrierRow {
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub saturated: bool,
}

pub fn cherrier_table(spec: &ProblemSpec, state: &SolveState, p_list: &[f64]) -> Result<Vec<CherrierRow>> {
    let g = spec.omega();
    let u = state.u_sup_normalized();
    let grad = grad_norm_sq(g, &u)?.real_parts();
    let vals = u.real_parts();
    let dets: Vec<f64> = g.log_det().iter().map(|l| Float::exp(*l)).collect();
    let len = vals.len() as f64;
    Ok(p_list
        .iter()
        .map(|&p| {
            let w: Vec<f64> = vals.iter().zip(&dets).map(|(v, d)| Float::exp(-p * v) * d).collect();
            let lhs_terms: Vec<f64> = w.iter().zip(&grad).map(|(a, gr)| 0.25 * p * p * a * gr).collect();
            let lhs = pairwise_sum(&lhs_terms) / len;
            let rhs = pairwise_sum(&w) / len;
            let ratio = lhs / (p * rhs);
            CherrierRow {
                p,
                lhs,
                rhs,
                ratio,
                saturated: !(lhs.is_finite() && rhs.is_finite() && ratio.is_finite()),
            }
        })
        .collect())
}

/// Rows whose ratio exceeds `factor` times the baseline ratio of the first
/// unsaturated row. An empty result means the ratios stayed bounded.
pub fn cherrier_tripwire(table: &[CherrierRow], factor: f64) -> Vec<f64> {
    let base = table.iter().find(|r| !r.saturated).map(|r| r.ratio);
    match base {
        None => table.iter().map(|r| r.p).collect(),
        Some(b) => table
            .iter()
            .filter(|r| r.saturated || r.ratio > factor * b.max(f64::MIN_POSITIVE))
            .map(|r| r.p)
            .collect(),
    }
}

/// Largest discrepancy in each of the three commutation formulae
///
/// ```text
/// u_{ij̄ℓ} = u_{iℓj̄} - u_p R_{ℓj̄i}^p
/// u_{pj̄m̄} = u_{pm̄j̄} - conj(T^q_{mj}) u_{pq̄}
/// u_{iq̄ℓ} = u_{ℓq̄i} - T^p_{ℓi} u_{pq̄}
/// ```
///
/// with covariant derivatives of the Chern connection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommutationReport {
    pub curvature: f64,
    pub conjugate_torsion: f64,
    pub torsion: f64,
}

impl CommutationReport {
    pub fn max(&self) -> f64 {
        self.curvature.max(self.conjugate_torsion).max(self.torsion)
    }
}

pub fn commutation_check(omega: &MetricField, u: &ScalarField) -> Result<CommutationReport> {
    omega.grid().check_same(u.grid())?;
    let grid = *omega.grid();
    let n = grid.dim();
    let len = grid.len();
    let conn = chern_connection(omega);
    let u = u.realified();
    let du = gradient_holo(&u);
    let hess = hessian_complex(&u);
    let d_hess: Vec<HermField> = (0..n).map(|l| hess.d_holo(l)).collect();
    let dbar_hess: Vec<HermField> = (0..n).map(|m| hess.d_antiholo(m)).collect();
    let hol2: Vec<Vec<ScalarField>> = (0..n)
        .map(|l| (0..n).map(|i| crate::grid::d_holo(&du[i], l)).collect())
        .collect();

    let mut curvature = 0.0f64;
    for l in 0..n {
        for i in 0..n {
            // ∇_ℓ u_i = ∂_ℓ u_i - Γ^p_{ℓi} u_p
            let vals: Vec<C64> = (0..len)
                .map(|k| {
                    let mut s = hol2[l][i].values()[k];
                    for p in 0..n {
                        s -= conn.gamma(k, p, l, i) * du[p].values()[k];
                    }
                    s
                })
                .collect();
            let cov = ScalarField::from_values(&grid, vals)?;
            for j in 0..n {
                let right = d_antiholo(&cov, j);
                for k in 0..len {
                    let mut left = d_hess[l].at(k)[(i, j)];
                    for p in 0..n {
                        left -= conn.gamma(k, p, l, i) * hess.at(k)[(p, j)];
                    }
                    let mut rhs = right.values()[k];
                    for p in 0..n {
                        rhs -= du[p].values()[k] * conn.curvature(k, l, j, i, p);
                    }
                    curvature = curvature.max((left - rhs).norm());
                }
            }
        }
    }

    let mut conjugate_torsion = 0.0f64;
    let mut torsion = 0.0f64;
    for k in 0..len {
        let uh = hess.at(k);
        for a in 0..n {
            for j in 0..n {
                for m in 0..n {
                    // ∇_{m̄} u_{aj̄} = ∂_{m̄} u_{aj̄} - conj(Γ^q_{mj}) u_{aq̄}
                    let mut left = dbar_hess[m].at(k)[(a, j)];
                    let mut right = dbar_hess[j].at(k)[(a, m)];
                    let mut tors = C64::new(0.0, 0.0);
                    for q in 0..n {
                        left -= conn.gamma(k, q, m, j).conj() * uh[(a, q)];
                        right -= conn.gamma(k, q, j, m).conj() * uh[(a, q)];
                        tors += conn.torsion(k, q, m, j).conj() * uh[(a, q)];
                    }
                    conjugate_torsion = conjugate_torsion.max((left - (right - tors)).norm());
                }
            }
        }
        for i in 0..n {
            for q in 0..n {
                for l in 0..n {
                    // ∇_ℓ u_{iq̄} = ∂_ℓ u_{iq̄} - Γ^p_{ℓi} u_{pq̄}
                    let mut left = d_hess[l].at(k)[(i, q)];
                    let mut right = d_hess[i].at(k)[(l, q)];
                    let mut tors = C64::new(0.0, 0.0);
                    for p in 0..n {
                        left -= conn.gamma(k, p, l, i) * uh[(p, q)];
                        right -= conn.gamma(k, p, i, l) * uh[(p, q)];
                        tors += conn.torsion(k, p, l, i) * uh[(p, q)];
                    }
                    torsion = torsion.max((left - (right - tors)).norm());
                }
            }
        }
    }
    Ok(CommutationReport {
        curvature,
        conjugate_torsion,
        torsion,
    })
}

/// Sup-norm of `∂∂̄β_u`, where `β_u` is the part of the equation's
/// `(n-1,n-1)`-form that depends on `u`. Its star dual relative to `ω` is
/// `g̃ - h`, so the coordinate coefficients are linear in that difference.
pub fn beta_closedness(spec: &ProblemSpec, u: &ScalarField) -> Result<f64> {
    let tilde = tilde_metric(spec, u)?;
    let h = omega_h(spec);
    let g = spec.omega();
    let p = HermField::from_values(
        spec.grid(),
        (0..g.len())
            .map(|k| coordinate_coefficients_matrix(g.at(k), &(*tilde.at(k) - *h.at(k))))
            .collect(),
    )?;
    Ok(sup_norm(&ddbar_top(&p)))
}

/// Largest deviations in the trace identity
/// `tr_g g̃ = tr_g h + Δu [+ H]` and the reconstruction identity
/// `u_{ij̄} = (n-1)h + (tr_g g̃ - tr_g h [- H]) g - (n-1) g̃ [+ (n-1) Z]`,
/// with `Δu`, `H`, `Z` computed independently of `g̃`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityReport {
    pub trace: f64,
    pub reconstruction: f64,
}

pub fn identity_check(spec: &ProblemSpec, u: &ScalarField) -> Result<IdentityReport> {
    let n = spec.dim();
    let nm1 = n as f64 - 1.0;
    let g = spec.omega();
    let u = u.realified();
    let tilde = tilde_metric(spec, &u)?;
    let h = omega_h(spec);
    let lap = laplacian(g, &u)?;
    let hess = hessian_complex(&u);
    let z = match spec.variant() {
        Variant::Phi => Some(e_term(spec, &u)?),
        Variant::Psi => None,
    };
    let mut trace = 0.0f64;
    let mut recon = 0.0f64;
    for k in 0..g.len() {
        let up = g.upper_at(k);
        let tr_t = up.contract(tilde.at(k)).re;
        let tr_h = up.contract(h.at(k)).re;
        let (zk, hk) = match &z {
            Some((zf, hf)) => (*zf.at(k), hf.values()[k].re),
            None => (HermMatrix::zeros(n), 0.0),
        };
        trace = trace.max((tr_t - tr_h - lap.values()[k].re - hk).abs());
        let rebuilt = h.at(k).scale(nm1) + g.at(k).scale(tr_t - tr_h - hk) - tilde.at(k).scale(nm1) + zk.scale(nm1);
        recon = recon.max((rebuilt - *hess.at(k)).max_abs());
    }
    Ok(IdentityReport {
        trace,
        reconstruction: recon,
    })
}

/// Solved-state consistency: `sup |det g̃ / (e^{tF+b} det g_rhs) - 1|`.
pub fn volume_consistency(spec: &ProblemSpec, state: &SolveState) -> Result<f64> {
    let tilde = tilde_metric(spec, &state.u)?;
    let mut worst = 0.0f64;
    for k in 0..tilde.len() {
        let det = tilde.at(k).det().re;
        let target = Float::exp(state.t * spec.f().values()[k].re + state.b + spec.log_det_rhs()[k]);
        worst = worst.max((det / target - 1.0).abs());
    }
    Ok(worst)
}

/// Everything the monitors report about one state.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub b_bound: BBound,
    pub c2: C2Monitor,
    pub eta_band: EtaBand,
    pub cherrier: Vec<CherrierRow>,
    /// `None` for `n = 2`, where `β_u` carries no `ω^{n-2}` factor worth testing.
    pub beta_closedness: Option<f64>,
}

/// Default exponents for the Cherrier table.
pub const CHERRIER_P: [f64; 4] = [4.0, 8.0, 16.0, 32.0];

pub fn estimate_report(spec: &ProblemSpec, state: &SolveState, p_list: &[f64]) -> Result<EstimateReport> {
    let beta = if spec.dim() >= 3 {
        Some(beta_closedness(spec, &state.u)?)
    } else {
        None
    };
    Ok(EstimateReport {
        b_bound: b_bound_check(spec, state),
        c2: c2_monitor(spec, state)?,
        eta_band: eta_band(spec, state)?,
        cherrier: cherrier_table(spec, state, p_list)?,
        beta_closedness: beta,
    })
}
