//! Assembly of the two Monge-Ampère operators, their residuals and their
//! linearizations.
//!
//! Both variants share the tilde metric
//!
//! ```text
//! g̃ = h + ((Δu) g - u_{ij̄}) / (n-1)  [+ Z(u)]
//! ```
//!
//! where `h = (1/(n-1)!) * ω₀^{n-1}` and `Z = *E` is the torsion term of the
//! `Phi` variant, linear in `∂u`. The equation is
//! `log det g̃ - log det g_rhs = tF + b`.
//!
//! `Z` is assembled as `(W + W*) / (2(n-1))` with `W = Σ_p (∂_p u) Y_p` and
//!
//! ```text
//! K_{ab̄q̄} = ∂_{b̄} g_{aq̄} - ∂_{q̄} g_{ab̄}
//! θ_{b̄}   = g^{ij̄} K_{ib̄j̄}
//! Y_p[a][b] = g_{ab̄} g^{pq̄} θ_{q̄} - δ_{ap} θ_{b̄} + g^{pq̄} K_{ab̄q̄}
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::star_power_matrix;
use crate::grid::{
    hessian_from_spectrum, pairwise_sum, HermField, MetricField, ScalarField, TorusGrid,
};
use crate::linalg::{HermMatrix, MAX_DIM};
use crate::par::map_nodes;
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// `ω₀^{n-1} + i∂∂̄u ∧ ω^{n-2}`.
    Psi,
    /// `Psi` plus `Re(i ∂u ∧ ∂̄(ω^{n-2}))`; needs `n ≥ 3`.
    Phi,
}

/// Volume form on the right-hand side of the equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RhsVolume {
    /// `ω^n`.
    #[default]
    OmegaN,
    /// `ω_h^n`.
    OmegaHN,
}

/// Background data that depends only on the metrics.
#[derive(Clone, Debug)]
struct Background {
    h: MetricField,
    g_up: Vec<HermMatrix>,
    log_det_rhs: Vec<f64>,
    /// `Y_p` per node; empty for the `Psi` variant.
    y: Vec<[HermMatrix; MAX_DIM]>,
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    variant: Variant,
    omega0: MetricField,
    omega: MetricField,
    f: ScalarField,
    rhs: RhsVolume,
    bg: Background,
}

/// `Y_p` tensors at one node from `g`, `g^{ij̄}` (upper arrangement) and
/// `dbar_g[b] = ∂_{b̄} g`.
pub fn y_tensors(g: &HermMatrix, g_up: &HermMatrix, dbar_g: &[HermMatrix]) -> [HermMatrix; MAX_DIM] {
    let n = g.dim();
    let k = |a: usize, b: usize, q: usize| dbar_g[b][(a, q)] - dbar_g[q][(a, b)];
    let mut theta = [C64::new(0.0, 0.0); MAX_DIM];
    for b in 0..n {
        for i in 0..n {
            for j in 0..n {
                theta[b] += g_up[(i, j)] * k(i, b, j);
            }
        }
    }
    let mut y = [HermMatrix::zeros(n); MAX_DIM];
    for p in 0..n {
        let tau: C64 = (0..n).map(|q| g_up[(p, q)] * theta[q]).sum();
        y[p] = HermMatrix::from_fn(n, |a, b| {
            let mut v = g[(a, b)] * tau;
            if a == p {
                v -= theta[b];
            }
            for q in 0..n {
                v += g_up[(p, q)] * k(a, b, q);
            }
            v
        });
    }
    y
}

/// `Z = (W + W*) / (2(n-1))` with `W = Σ_p du[p] Y_p`.
pub fn z_pointwise(y: &[HermMatrix], du: &[C64]) -> HermMatrix {
    let n = y[0].dim();
    let mut w = HermMatrix::zeros(n);
    for p in 0..n {
        w += y[p].scale_c(du[p]);
    }
    (w + w.adjoint()).scale(0.5 / (n as f64 - 1.0))
}

fn log_det_positive(m: &HermMatrix) -> Option<f64> {
    let l = m.cholesky()?;
    Some((0..m.dim()).map(|i| 2.0 * Float::ln(l[(i, i)].re)).sum())
}

impl ProblemSpec {
    pub fn new(
        variant: Variant,
        omega0: MetricField,
        omega: MetricField,
        f: ScalarField,
        rhs: RhsVolume,
    ) -> Result<Self> {
        let grid = *omega.grid();
        if omega0.grid() != &grid || f.grid() != &grid {
            return Err(Error::DimensionMismatch(
                "omega0, omega and F must share one grid".into(),
            ));
        }
        let n = grid.dim();
        if variant == Variant::Phi && n < 3 {
            return Err(Error::UnsupportedDimension {
                n,
                reason: "the Phi variant needs n >= 3",
            });
        }
        if f.max_imag() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "F must be real (max imaginary part {:.3e})",
                f.max_imag()
            )));
        }
        let h_vals = map_nodes(grid.len(), |k| star_power_matrix(omega.at(k), omega0.at(k)));
        let h = MetricField::new(HermField::from_values(&grid, h_vals)?)?;
        let g_up: Vec<HermMatrix> = (0..grid.len()).map(|k| omega.upper_at(k)).collect();
        let log_det_rhs = match rhs {
            RhsVolume::OmegaN => omega.log_det(),
            RhsVolume::OmegaHN => h.log_det(),
        };
        let y = match variant {
            Variant::Psi => Vec::new(),
            Variant::Phi => {
                let dbar: Vec<HermField> = (0..n).map(|b| omega.d_antiholo(b)).collect();
                map_nodes(grid.len(), |k| {
                    let d: Vec<HermMatrix> = dbar.iter().map(|f| *f.at(k)).collect();
                    y_tensors(omega.at(k), &g_up[k], &d)
                })
            }
        };
        Ok(Self {
            variant,
            f: f.realified(),
            omega0,
            omega,
            rhs,
            bg: Background {
                h,
                g_up,
                log_det_rhs,
                y,
            },
        })
    }

    /// Same metrics with a different datum `F`.
    pub fn with_f(&self, f: ScalarField) -> Result<Self> {
        if f.grid() != self.grid() {
            return Err(Error::DimensionMismatch("F lives on a different grid".into()));
        }
        if f.max_imag() > 1e-12 {
            return Err(Error::InvalidConfig("F must be real".into()));
        }
        let mut s = self.clone();
        s.f = f.realified();
        Ok(s)
    }

    pub fn with_variant(&self, variant: Variant) -> Result<Self> {
        Self::new(variant, self.omega0.clone(), self.omega.clone(), self.f.clone(), self.rhs)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn rhs(&self) -> RhsVolume {
        self.rhs
    }

    pub fn grid(&self) -> &TorusGrid {
        self.omega.grid()
    }

    pub fn dim(&self) -> usize {
        self.omega.dim()
    }

    pub fn omega0(&self) -> &MetricField {
        &self.omega0
    }

    pub fn omega(&self) -> &MetricField {
        &self.omega
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn log_det_rhs(&self) -> &[f64] {
        &self.bg.log_det_rhs
    }

    pub(crate) fn y_at(&self, k: usize) -> Option<&[HermMatrix]> {
        if self.bg.y.is_empty() {
            None
        } else {
            Some(&self.bg.y[k][..self.dim()])
        }
    }
}

/// Potential, normalization constant and continuity parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveState {
    pub u: ScalarField,
    pub b: f64,
    pub t: f64,
}

impl SolveState {
    pub fn zero(grid: &TorusGrid) -> Self {
        Self {
            u: ScalarField::zeros(grid),
            b: 0.0,
            t: 1.0,
        }
    }

    /// `u` shifted to `sup u = 0`.
    pub fn u_sup_normalized(&self) -> ScalarField {
        let m = self.u.values().iter().fold(f64::NEG_INFINITY, |a, z| a.max(z.re));
        self.u.map(|z| C64::new(z.re - m, 0.0))
    }

    /// `u` shifted to mean zero.
    pub fn u_mean_normalized(&self) -> ScalarField {
        let m = crate::grid::mean_real(&self.u.real_parts());
        self.u.map(|z| C64::new(z.re - m, 0.0))
    }
}

/// `ω_h = (1/(n-1)!) * ω₀^{n-1}` as a metric.
pub fn omega_h(spec: &ProblemSpec) -> MetricField {
    spec.bg.h.clone()
}

/// Derivative data of `u` needed for assembly.
pub(crate) struct Derivs {
    pub hess: HermField,
    pub du: Vec<ScalarField>,
}

pub(crate) fn derivs(spec: &ProblemSpec, u: &ScalarField) -> Derivs {
    let s = u.spectrum();
    let hess = hessian_from_spectrum(&s);
    let du = if spec.variant == Variant::Phi {
        (0..spec.dim()).map(|i| s.apply(|w| w.holo(i))).collect()
    } else {
        Vec::new()
    };
    Derivs { hess, du }
}

fn tilde_node(spec: &ProblemSpec, k: usize, hess: &HermMatrix, du: &[C64]) -> HermMatrix {
    let n = spec.dim();
    let g = spec.omega.at(k);
    let lap = spec.bg.g_up[k].contract(hess);
    let mut t = *spec.bg.h.at(k) + (g.scale_c(lap) - *hess).scale(1.0 / (n as f64 - 1.0));
    if let Some(y) = spec.y_at(k) {
        t += z_pointwise(y, du);
    }
    t.hermitian_part()
}

/// Tilde metric from given complex Hessian and holomorphic gradient fields.
/// `du` may be empty for the `Psi` variant.
pub fn tilde_from_derivatives(spec: &ProblemSpec, hess: &HermField, du: &[ScalarField]) -> Result<HermField> {
    if hess.grid() != spec.grid() {
        return Err(Error::DimensionMismatch("Hessian field on a different grid".into()));
    }
    let n = spec.dim();
    if spec.variant == Variant::Phi && du.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "Phi variant needs {n} gradient components, got {}",
            du.len()
        )));
    }
    Ok(HermField::from_nodes(spec.grid(), |k| {
        let d: Vec<C64> = du.iter().map(|f| f.values()[k]).collect();
        tilde_node(spec, k, hess.at(k), &d)
    }))
}

/// `g̃(u)`; positivity is not checked.
pub fn tilde_metric(spec: &ProblemSpec, u: &ScalarField) -> Result<HermField> {
    if u.grid() != spec.grid() {
        return Err(Error::DimensionMismatch("u lives on a different grid".into()));
    }
    let d = derivs(spec, &u.realified());
    tilde_from_derivatives(spec, &d.hess, &d.du)
}

/// `Z = *E` and `H = tr_ω Z` for the `Phi` variant.
pub fn e_term(spec: &ProblemSpec, u: &ScalarField) -> Result<(HermField, ScalarField)> {
    if spec.variant != Variant::Phi {
        return Err(Error::VariantMismatch { expected: "Phi" });
    }
    let s = u.realified().spectrum();
    let du: Vec<ScalarField> = (0..spec.dim()).map(|i| s.apply(|w| w.holo(i))).collect();
    let z = HermField::from_nodes(spec.grid(), |k| {
        let d: Vec<C64> = du.iter().map(|f| f.values()[k]).collect();
        z_pointwise(spec.y_at(k).expect("Phi background"), &d)
    });
    let h: Vec<C64> = (0..spec.grid().len())
        .map(|k| C64::new(spec.bg.g_up[k].contract(z.at(k)).re, 0.0))
        .collect();
    Ok((z, ScalarField::from_values(spec.grid(), h)?))
}

/// `log det g̃` with positivity check.
pub(crate) fn log_det_tilde(tilde: &HermField) -> Result<Vec<f64>> {
    let ld = map_nodes(tilde.len(), |k| log_det_positive(tilde.at(k)));
    let bad: Vec<usize> = ld
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_none())
        .map(|(k, _)| k)
        .collect();
    if !bad.is_empty() {
        return Err(Error::TildeNotPositive { nodes: bad });
    }
    Ok(ld.into_iter().map(|v| v.unwrap_or(0.0)).collect())
}

pub(crate) fn residual_from_tilde(spec: &ProblemSpec, tilde: &HermField, b: f64, t: f64) -> Result<Vec<f64>> {
    let ld = log_det_tilde(tilde)?;
    Ok(ld
        .iter()
        .zip(&spec.bg.log_det_rhs)
        .zip(spec.f.values())
        .map(|((l, r), f)| l - r - t * f.re - b)
        .collect())
}

/// `r = log det g̃ - log det g_rhs - tF - b`.
pub fn ma_residual(spec: &ProblemSpec, state: &SolveState) -> Result<ScalarField> {
    let tilde = tilde_metric(spec, &state.u)?;
    let r = residual_from_tilde(spec, &tilde, state.b, state.t)?;
    ScalarField::from_real(spec.grid(), &r)
}

/// `Θ^{ij̄} = ((tr_g̃ g) g^{ij̄} - g̃^{ij̄}) / (n-1)` at one node, arranged for
/// elementwise contraction with `u_{ij̄}`.
pub fn theta_matrix(g: &HermMatrix, g_up: &HermMatrix, tilde: &HermMatrix) -> Option<HermMatrix> {
    let n = g.dim();
    let t_up = tilde.upper()?;
    let tr = t_up.contract(g).re;
    Some((g_up.scale(tr) - t_up).scale(1.0 / (n as f64 - 1.0)))
}

pub fn theta_coefficients(spec: &ProblemSpec, state: &SolveState) -> Result<HermField> {
    let tilde = tilde_metric(spec, &state.u)?;
    let bad = tilde.non_positive_nodes();
    if !bad.is_empty() {
        return Err(Error::TildeNotPositive { nodes: bad });
    }
    Ok(HermField::from_nodes(spec.grid(), |k| {
        theta_matrix(spec.omega.at(k), &spec.bg.g_up[k], tilde.at(k)).expect("positive tilde metric")
    }))
}

/// Linearization of `u ↦ log det g̃(u)` frozen at one state:
///
/// `L(v) = Re Σ Θ^{ij̄} v_{ij̄} + Re Σ_p c_p ∂_p v / (n-1)`, `c_p = tr(g̃⁻¹ Y_p)`.
#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    grid: TorusGrid,
    n: usize,
    theta: Vec<HermMatrix>,
    c: Vec<[C64; MAX_DIM]>,
    theta_mean: HermMatrix,
    tilde: HermField,
    residual: Vec<f64>,
}

impl LinearizedOperator {
    pub fn new(spec: &ProblemSpec, state: &SolveState) -> Result<Self> {
        let tilde = tilde_metric(spec, &state.u)?;
        Self::from_tilde(spec, tilde, state.b, state.t)
    }

    pub(crate) fn from_tilde(spec: &ProblemSpec, tilde: HermField, b: f64, t: f64) -> Result<Self> {
        let residual = residual_from_tilde(spec, &tilde, b, t)?;
        let n = spec.dim();
        let grid = *spec.grid();
        let parts = map_nodes(grid.len(), |k| {
            let tt = tilde.at(k);
            let tinv = tt.inverse().expect("positive tilde metric");
            let th = theta_matrix(spec.omega.at(k), &spec.bg.g_up[k], tt).expect("positive tilde metric");
            let mut c = [C64::new(0.0, 0.0); MAX_DIM];
            if let Some(y) = spec.y_at(k) {
                for p in 0..n {
                    c[p] = (tinv * y[p]).trace();
                }
            }
            (th, c)
        });
        let (theta, c): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
        let mut theta_mean = HermMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let re: Vec<f64> = theta.iter().map(|m| m[(i, j)].re).collect();
                let im: Vec<f64> = theta.iter().map(|m| m[(i, j)].im).collect();
                let len = theta.len() as f64;
                theta_mean[(i, j)] = C64::new(pairwise_sum(&re) / len, pairwise_sum(&im) / len);
            }
        }
        Ok(Self {
            grid,
            n,
            theta,
            c,
            theta_mean,
            tilde,
            residual,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Residual at the linearization point.
    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn tilde(&self) -> &HermField {
        &self.tilde
    }

    pub fn theta(&self) -> &[HermMatrix] {
        &self.theta
    }

    fn has_drift(&self) -> bool {
        self.c.iter().any(|c| c.iter().any(|z| z.norm() != 0.0))
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let grid = self.grid;
        let field = ScalarField::from_real(&grid, v).expect("vector length matches grid");
        let spec = field.spectrum();
        let mut out = vec![0.0; grid.len()];
        for i in 0..n {
            for j in i..n {
                let vij = spec.apply(|w| w.hess(i, j));
                let weight = if i == j { 1.0 } else { 2.0 };
                for (k, o) in out.iter_mut().enumerate() {
                    *o += weight * (self.theta[k][(i, j)] * vij.values()[k]).re;
                }
            }
        }
        if self.has_drift() {
            let s = 1.0 / (n as f64 - 1.0);
            for p in 0..n {
                let dp = spec.apply(|w| w.holo(p));
                for (k, o) in out.iter_mut().enumerate() {
                    *o += s * (self.c[k][p] * dp.values()[k]).re;
                }
            }
        }
        out
    }

    /// Euclidean transpose: `⟨w, L v⟩ = ⟨Lᵀ w, v⟩` on node values.
    pub fn apply_transpose(&self, w: &[f64]) -> Vec<f64> {
        let n = self.n;
        let grid = self.grid;
        let mut acc = vec![C64::new(0.0, 0.0); grid.len()];
        for i in 0..n {
            for j in i..n {
                let weight = if i == j { 1.0 } else { 2.0 };
                let prod: Vec<C64> = (0..grid.len()).map(|k| self.theta[k][(i, j)] * w[k]).collect();
                let s = ScalarField::from_values(&grid, prod).expect("length").spectrum();
                for (k, a) in acc.iter_mut().enumerate() {
                    *a += s.coefficients()[k] * grid.wave(k).hess(i, j) * weight;
                }
            }
        }
        if self.has_drift() {
            let s = 1.0 / (n as f64 - 1.0);
            for p in 0..n {
                let prod: Vec<C64> = (0..grid.len()).map(|k| self.c[k][p] * w[k]).collect();
                let sp = ScalarField::from_values(&grid, prod).expect("length").spectrum();
                for (k, a) in acc.iter_mut().enumerate() {
                    *a -= sp.coefficients()[k] * grid.wave(k).holo(p) * s;
                }
            }
        }
        grid.inverse(&mut acc);
        acc.iter().map(|z| z.re).collect()
    }

    /// Symbol of the constant-coefficient operator `Σ Θ̄^{ij̄} ∂_i∂_{j̄}`
    /// built from the mean of `Θ`.
    fn flat_symbol(&self, k: usize) -> f64 {
        let w = self.grid.wave(k);
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += (self.theta_mean[(i, j)] * w.hess(i, j)).re;
            }
        }
        s
    }

    /// Exact inverse of `v ↦ Σ Θ̄ v_{ij̄} + mean(v)`.
    pub fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let grid = self.grid;
        let mut data: Vec<C64> = r.iter().map(|&x| C64::new(x, 0.0)).collect();
        grid.forward(&mut data);
        for (k, d) in data.iter_mut().enumerate() {
            if k == 0 {
                continue;
            }
            let s = self.flat_symbol(k);
            *d = if s.abs() > 1e-300 { *d / s } else { C64::new(0.0, 0.0) };
        }
        grid.inverse(&mut data);
        data.iter().map(|z| z.re).collect()
    }

    /// Transpose of [`precondition`](Self::precondition).
    pub fn precondition_transpose(&self, r: &[f64]) -> Vec<f64> {
        // The flat symbol is even in k, so the operator is symmetric.
        self.precondition(r)
    }

    /// Exact inverse of `v ↦ Σ Θ̄ v_{ij̄} - shift·v`; `shift` must not be an
    /// eigenvalue of the flat operator.
    pub fn flat_solve_shifted(&self, r: &[f64], shift: f64) -> Vec<f64> {
        let grid = self.grid;
        let mut data: Vec<C64> = r.iter().map(|&x| C64::new(x, 0.0)).collect();
        grid.forward(&mut data);
        for (k, d) in data.iter_mut().enumerate() {
            *d /= self.flat_symbol(k) - shift;
        }
        grid.inverse(&mut data);
        data.iter().map(|z| z.re).collect()
    }

    /// Smallest eigenvalue of `g̃` relative to `g` over all nodes.
    pub fn positivity_margin(&self, spec: &ProblemSpec) -> f64 {
        positivity_margin(spec.omega(), &self.tilde)
    }
}

/// Smallest eigenvalue of `tilde` relative to `g` over all nodes.
pub fn positivity_margin(g: &MetricField, tilde: &HermField) -> f64 {
    let mins = map_nodes(g.len(), |k| {
        tilde
            .at(k)
            .eigenvalues_relative_to(g.at(k))
            .map(|v| v[0])
            .unwrap_or(f64::NEG_INFINITY)
    });
    mins.into_iter().fold(f64::INFINITY, f64::min)
}

pub fn linearized_apply(spec: &ProblemSpec, state: &SolveState, v: &ScalarField) -> Result<ScalarField> {
    let op = LinearizedOperator::new(spec, state)?;
    ScalarField::from_real(spec.grid(), &op.apply(&v.real_parts()))
}

/// `η` computed as `(tr_g g̃) g - (n-1) g̃` together with the largest
/// deviation from its second expression
/// `u_{ij̄} + (tr_g h + H) g - (n-1)(h + Z)`.
#[derive(Clone, Debug)]
pub struct EtaTensor {
    pub eta: HermField,
    pub dual_difference: f64,
}

pub fn eta_tensor(spec: &ProblemSpec, state: &SolveState) -> Result<EtaTensor> {
    let n = spec.dim();
    let nm1 = n as f64 - 1.0;
    let d = derivs(spec, &state.u.realified());
    let tilde = tilde_from_derivatives(spec, &d.hess, &d.du)?;
    let z = if spec.variant == Variant::Phi {
        Some(e_term(spec, &state.u)?.0)
    } else {
        None
    };
    let mut worst = 0.0f64;
    let mut vals = Vec::with_capacity(spec.grid().len());
    for k in 0..spec.grid().len() {
        let g = spec.omega.at(k);
        let up = &spec.bg.g_up[k];
        let t = tilde.at(k);
        let eta = g.scale(up.contract(t).re) - t.scale(nm1);
        let h = spec.bg.h.at(k);
        let (zk, hk) = match &z {
            Some(z) => (*z.at(k), up.contract(z.at(k)).re),
            None => (HermMatrix::zeros(n), 0.0),
        };
        let alt = *d.hess.at(k) + g.scale(up.contract(h).re + hk) - (*h + zk).scale(nm1);
        worst = worst.max((eta - alt).max_abs());
        vals.push(eta);
    }
    Ok(EtaTensor {
        eta: HermField::from_values(spec.grid(), vals)?,
        dual_difference: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_example() {
        let g = HermMatrix::identity(3);
        let t = HermMatrix::diag(&[1.0, 2.0, 3.0]);
        let th = theta_matrix(&g, &g, &t).unwrap();
        let expect = HermMatrix::diag(&[5.0 / 12.0, 2.0 / 3.0, 3.0 / 4.0]);
        assert!((th - expect).max_abs() < 1e-15);
        let id = theta_matrix(&g, &g, &g).unwrap();
        assert!((id - g).max_abs() < 1e-15);
    }
}
