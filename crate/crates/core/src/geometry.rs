//! Pointwise Hermitian geometry: star duals of `(n-1,n-1)`-forms, the Chern
//! connection, Chern-Ricci curvature and defects of metric conditions.
//!
//! An `(n-1,n-1)`-form `Ψ` is represented by its normalized star dual
//! `S = (1/(n-1)!) *Ψ` with respect to a reference metric `g`, itself a
//! Hermitian matrix. With this normalization `*` sends `ω^{n-1}/(n-1)!` to
//! `ω`, and the pointwise laws are
//!
//! * `star_power(g, A) = (det A / det g) · g A⁻¹ g`,
//! * `nm1_root(g, S) = (det S / det g)^{1/(n-1)} · g S⁻¹ g`,
//! * `star_wedge(g, α) = (tr_g α) g - α`.
//!
//! The coordinate coefficients of `Ψ`, defined by `ε_{ab̄} ∧ Ψ = P_ab vol_0`
//! with `ε_{ab̄} = i dz^a ∧ dz̄^b` and `vol_0 = Π ε_{aā}`, are
//! `P = (n-1)! det g (g⁻¹ S g⁻¹)ᵀ`, and `∂∂̄Ψ = -i Σ_ab ∂_a∂_{b̄} P_ab vol_0`.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::{hessian_complex, HermField, MetricField, ScalarField, TorusGrid};
use crate::linalg::HermMatrix;
use crate::par::map_nodes;
use crate::C64;

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// `(1/(n-1)!) * (ω_A^{n-1})` with respect to `g`.
pub fn star_power_matrix(g: &HermMatrix, a: &HermMatrix) -> HermMatrix {
    let ratio = a.det().re / g.det().re;
    let ainv = a.inverse().expect("star_power of a singular form");
    (*g * ainv * *g).scale(ratio).hermitian_part()
}

/// The positive `A` with `star_power(g, A) = S`, or `None` unless `S > 0`.
pub fn nm1_root_matrix(g: &HermMatrix, s: &HermMatrix) -> Option<HermMatrix> {
    if !s.is_positive_definite() {
        return None;
    }
    let n = g.dim();
    let ratio = s.det().re / g.det().re;
    let scale = Float::powf(ratio, 1.0 / (n as f64 - 1.0));
    Some((*g * s.inverse()? * *g).scale(scale).hermitian_part())
}

/// Same map as [`nm1_root_matrix`] computed by eigendecomposition of `S` in
/// a `g`-unitary frame: `λ_i = (Π s_j)^{1/(n-1)} / s_i`.
pub fn nm1_root_spectral(g: &HermMatrix, s: &HermMatrix) -> Option<HermMatrix> {
    let n = g.dim();
    let l = g.cholesky()?;
    let linv = l.inverse()?;
    let sp = linv * *s * linv.adjoint();
    let (vals, vecs) = sp.eigh();
    if vals[..n].iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let log_prod: f64 = vals[..n].iter().map(|&v| Float::ln(v)).sum();
    let det_lambda = Float::exp(log_prod / (n as f64 - 1.0));
    let lambda: Vec<f64> = vals[..n].iter().map(|&v| det_lambda / v).collect();
    let ap = HermMatrix::from_spectrum(&lambda, &vecs);
    Some((l * ap * l.adjoint()).hermitian_part())
}

/// `(1/(n-2)!) * (α ∧ ω^{n-2}) = (tr_g α) g - α`.
pub fn star_wedge_matrix(g: &HermMatrix, alpha: &HermMatrix) -> HermMatrix {
    let tr = g.upper().expect("singular metric").contract(alpha);
    g.scale_c(tr) - *alpha
}

/// Coordinate coefficients `P_ab` of the form whose normalized star dual
/// with respect to `g` is `s`.
pub fn coordinate_coefficients_matrix(g: &HermMatrix, s: &HermMatrix) -> HermMatrix {
    let n = g.dim();
    let ginv = g.inverse().expect("singular metric");
    (ginv * *s * ginv)
        .transpose()
        .scale(factorial(n - 1) * g.det().re)
}

/// Coefficients `P^{(cd)}_ab` of `ε_{cd̄} ∧ ω^{n-2}`, i.e. of the
/// `(n-1,n-1)`-form paired against `ε_{ab̄}`. Requires `n ≥ 3`.
pub fn astheno_coefficients_matrix(g: &HermMatrix, c: usize, d: usize) -> HermMatrix {
    let n = g.dim();
    let ginv = g.inverse().expect("singular metric");
    let s = factorial(n - 2) * g.det().re;
    HermMatrix::from_fn(n, |a, b| {
        (ginv[(b, a)] * ginv[(d, c)] - ginv[(b, c)] * ginv[(d, a)]) * s
    })
}

/// An `(n-1,n-1)`-form field stored through its star dual.
#[derive(Clone, Debug, PartialEq)]
pub struct FormNM1 {
    reference: MetricField,
    star_rep: HermField,
}

impl FormNM1 {
    pub fn new(reference: MetricField, star_rep: HermField) -> Result<Self> {
        if reference.grid() != star_rep.grid() {
            return Err(Error::DimensionMismatch("form and reference metric grids differ".into()));
        }
        Ok(Self { reference, star_rep })
    }

    pub fn reference(&self) -> &MetricField {
        &self.reference
    }

    pub fn star_rep(&self) -> &HermField {
        &self.star_rep
    }

    pub fn is_positive(&self) -> bool {
        self.star_rep.non_positive_nodes().is_empty()
    }

    /// Coordinate coefficients `P_ab` at every node.
    pub fn coordinate_coefficients(&self) -> HermField {
        let g = &self.reference;
        HermField::from_nodes(g.grid(), |k| {
            coordinate_coefficients_matrix(g.at(k), self.star_rep.at(k))
        })
    }

    /// `sup |Σ_ab ∂_a∂_{b̄} P_ab|`, the coefficient size of `∂∂̄Ψ`.
    pub fn ddbar_defect(&self) -> f64 {
        crate::grid::sup_norm(&ddbar_top(&self.coordinate_coefficients()))
    }
}

/// `Σ_ab ∂_a ∂_{b̄} P_ab` for a field of coordinate coefficients.
pub fn ddbar_top(p: &HermField) -> ScalarField {
    let grid = p.grid();
    let n = grid.dim();
    let mut acc = vec![C64::new(0.0, 0.0); grid.len()];
    for a in 0..n {
        for b in 0..n {
            let spec = p.entry(a, b).spectrum();
            let coeffs = spec.coefficients();
            for (k, v) in acc.iter_mut().enumerate() {
                *v += coeffs[k] * grid.wave(k).hess(a, b);
            }
        }
    }
    grid.inverse(&mut acc);
    ScalarField::from_values(grid, acc).expect("length matches grid")
}

fn check_grids(a: &TorusGrid, b: &TorusGrid) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch("metric fields live on different grids".into()));
    }
    Ok(())
}

/// `(1/(n-1)!) * (ω^{n-1})` relative to `omega_ref`, pointwise.
pub fn star_power(omega_ref: &MetricField, omega: &MetricField) -> Result<FormNM1> {
    check_grids(omega_ref.grid(), omega.grid())?;
    let rep = HermField::from_nodes(omega.grid(), |k| {
        star_power_matrix(omega_ref.at(k), omega.at(k))
    });
    FormNM1::new(omega_ref.clone(), rep)
}

/// The metric whose `(n-1)`-th power is `psi`.
pub fn nm1_root(psi: &FormNM1) -> Result<MetricField> {
    let g = psi.reference();
    let roots = map_nodes(g.len(), |k| nm1_root_matrix(g.at(k), psi.star_rep.at(k)));
    let mut values = Vec::with_capacity(roots.len());
    for (k, r) in roots.into_iter().enumerate() {
        values.push(r.ok_or(Error::NotPositive { node: k })?);
    }
    MetricField::new(HermField::from_values(g.grid(), values)?)
}

/// `(1/(n-2)!) * (α ∧ ω^{n-2})` for a real `(1,1)`-form field `alpha`.
pub fn star_wedge(omega: &MetricField, alpha: &HermField) -> Result<HermField> {
    let n = omega.dim();
    if n < 3 {
        return Err(Error::UnsupportedDimension {
            n,
            reason: "star_wedge needs ω^{n-2} with n-2 >= 1",
        });
    }
    check_grids(omega.grid(), alpha.grid())?;
    Ok(HermField::from_nodes(omega.grid(), |k| {
        star_wedge_matrix(omega.at(k), alpha.at(k))
    }))
}

/// Chern connection `Γ^k_{ij}`, torsion `T^k_{ij}` and curvature
/// `R_{ℓm̄i}^p` sampled at every node.
#[derive(Clone, Debug)]
pub struct ConnectionData {
    grid: TorusGrid,
    n: usize,
    gamma: Vec<C64>,
    torsion: Vec<C64>,
    curvature: Vec<C64>,
}

impl ConnectionData {
    #[inline]
    fn i3(&self, node: usize, k: usize, i: usize, j: usize) -> usize {
        let n = self.n;
        ((node * n + k) * n + i) * n + j
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// `Γ^k_{ij}` at a node.
    pub fn gamma(&self, node: usize, k: usize, i: usize, j: usize) -> C64 {
        self.gamma[self.i3(node, k, i, j)]
    }

    /// `T^k_{ij} = Γ^k_{ij} - Γ^k_{ji}`.
    pub fn torsion(&self, node: usize, k: usize, i: usize, j: usize) -> C64 {
        self.torsion[self.i3(node, k, i, j)]
    }

    /// `R_{ℓ m̄ i}^p = -∂_{m̄} Γ^p_{ℓi}`.
    pub fn curvature(&self, node: usize, l: usize, m: usize, i: usize, p: usize) -> C64 {
        let n = self.n;
        self.curvature[(((node * n + l) * n + m) * n + i) * n + p]
    }

    pub fn max_gamma(&self) -> f64 {
        self.gamma.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    pub fn max_torsion(&self) -> f64 {
        self.torsion.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    pub fn max_curvature(&self) -> f64 {
        self.curvature.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    /// `sup |T^k_{ij} + T^k_{ji}|`, zero by construction.
    pub fn torsion_antisymmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut m = 0.0f64;
        for node in 0..self.grid.len() {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        m = m.max((self.torsion(node, k, i, j) + self.torsion(node, k, j, i)).norm());
                    }
                }
            }
        }
        m
    }
}

/// `Γ^k_{ij} = g^{kq̄} ∂_i g_{jq̄}`, `T = Γ^k_{ij} - Γ^k_{ji}`, `R = -∂̄Γ`.
pub fn chern_connection(omega: &MetricField) -> ConnectionData {
    let grid = *omega.grid();
    let n = grid.dim();
    let len = grid.len();
    let dg: Vec<HermField> = (0..n).map(|i| omega.d_holo(i)).collect();
    let mut gamma = vec![C64::new(0.0, 0.0); len * n * n * n];
    for node in 0..len {
        let ginv = omega.at(node).inverse().expect("metric field holds a singular matrix");
        for i in 0..n {
            // ((∂_i g) g⁻¹)[j][k] = Γ^k_{ij}
            let m = *dg[i].at(node) * ginv;
            for j in 0..n {
                for k in 0..n {
                    gamma[((node * n + k) * n + i) * n + j] = m[(j, k)];
                }
            }
        }
    }
    let mut torsion = vec![C64::new(0.0, 0.0); gamma.len()];
    for node in 0..len {
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let a = gamma[((node * n + k) * n + i) * n + j];
                    let b = gamma[((node * n + k) * n + j) * n + i];
                    torsion[((node * n + k) * n + i) * n + j] = a - b;
                }
            }
        }
    }
    let mut curvature = vec![C64::new(0.0, 0.0); len * n * n * n * n];
    for p in 0..n {
        for l in 0..n {
            for i in 0..n {
                let comp: Vec<C64> = (0..len).map(|node| gamma[((node * n + p) * n + l) * n + i]).collect();
                let spec = ScalarField::from_values(&grid, comp).expect("length matches grid").spectrum();
                for m in 0..n {
                    let d = spec.apply(|w| -w.antiholo(m));
                    for node in 0..len {
                        curvature[(((node * n + l) * n + m) * n + i) * n + p] = d.values()[node];
                    }
                }
            }
        }
    }
    ConnectionData {
        grid,
        n,
        gamma,
        torsion,
        curvature,
    }
}

/// `Ric(ω)_{ij̄} = -∂_i ∂_{j̄} log det g`.
pub fn chern_ricci(omega: &MetricField) -> HermField {
    let logdet = ScalarField::from_real(omega.grid(), &omega.log_det()).expect("length matches grid");
    hessian_complex(&logdet).map(|m| -*m)
}

/// Sup-norm defects of the Gauduchon, astheno-Kähler and Kähler conditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricDefects {
    /// `sup |∂∂̄ ω^{n-1}|` in coordinate coefficients.
    pub gauduchon: f64,
    /// `sup |∂∂̄ ω^{n-2}|`; `None` for `n = 2`, where it is not defined.
    pub astheno: Option<f64>,
    /// `sup |∂_k g_{ij̄} - ∂_i g_{kj̄}|`.
    pub kahler: f64,
}

/// Coordinate coefficients of `ω^{n-1}`: `(n-1)! det g (g⁻¹)_{ba}`.
pub fn gauduchon_coefficients(omega: &MetricField) -> HermField {
    HermField::from_nodes(omega.grid(), |k| {
        let g = omega.at(k);
        coordinate_coefficients_matrix(g, g)
    })
}

pub fn gauduchon_defect(omega: &MetricField) -> f64 {
    crate::grid::sup_norm(&ddbar_top(&gauduchon_coefficients(omega)))
}

pub fn astheno_defect(omega: &MetricField) -> Option<f64> {
    let n = omega.dim();
    if n < 3 {
        return None;
    }
    let mut worst = 0.0f64;
    for c in 0..n {
        for d in 0..n {
            let p = HermField::from_nodes(omega.grid(), |k| astheno_coefficients_matrix(omega.at(k), c, d));
            worst = worst.max(crate::grid::sup_norm(&ddbar_top(&p)));
        }
    }
    Some(worst)
}

pub fn kahler_defect(omega: &MetricField) -> f64 {
    let n = omega.dim();
    let dg: Vec<HermField> = (0..n).map(|i| omega.d_holo(i)).collect();
    let mut worst = 0.0f64;
    for node in 0..omega.len() {
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let d = dg[k].at(node)[(i, j)] - dg[i].at(node)[(k, j)];
                    worst = worst.max(d.norm());
                }
            }
        }
    }
    worst
}

pub fn metric_defects(omega: &MetricField) -> MetricDefects {
    MetricDefects {
        gauduchon: gauduchon_defect(omega),
        astheno: astheno_defect(omega),
        kahler: kahler_defect(omega),
    }
}
