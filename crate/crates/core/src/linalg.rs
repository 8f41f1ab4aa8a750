//! Small dense complex matrices (n ≤ 4) used for pointwise Hermitian algebra.
//!
//! Storage is a fixed 4×4 array so that matrices are `Copy` and never touch
//! the allocator; only the leading `n×n` block is meaningful.
//!
//! A Hermitian form `g_{ij̄}` is stored with `i` as the row and `j` as the
//! column. Upper-index objects such as `g^{ij̄}` are stored so that the full
//! contraction `g^{ij̄} a_{ij̄}` is the elementwise sum `Σ_ij G[i][j]·A[i][j]`;
//! see [`HermMatrix::upper`].

use core::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use num_traits::Float;

use crate::C64;

/// Largest supported complex dimension.
pub const MAX_DIM: usize = 4;

const ZERO: C64 = Complex64::new(0.0, 0.0);
const ONE: C64 = Complex64::new(1.0, 0.0);

/// An `n×n` complex matrix, Hermitian unless a caller says otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HermMatrix {
    n: usize,
    a: [[C64; MAX_DIM]; MAX_DIM],
}

impl HermMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "matrix dimension {n} out of range");
        Self {
            n,
            a: [[ZERO; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i][i] = ONE;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m.a[i][i] = C64::new(x, 0.0);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i][j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_c(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn map(&self, mut f: impl FnMut(C64) -> C64) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] = f(self.a[i][j]);
            }
        }
        m
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.a[j][i].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.a[j][i])
    }

    /// `(A + A*)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.n, |i, j| (self.a[i][j] + self.a[j][i].conj()) * 0.5)
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self.a[i][i]).sum()
    }

    /// Elementwise contraction `Σ_ij self[i][j]·other[i][j]`.
    pub fn contract(&self, other: &Self) -> C64 {
        let mut s = ZERO;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.a[i][j] * other.a[i][j];
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self.a[i][j].norm());
            }
        }
        m
    }

    /// Largest deviation from Hermitian symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max((self.a[i][j] - self.a[j][i].conj()).norm());
            }
        }
        m
    }

    /// LU factorization with partial pivoting; returns the factors packed in
    /// one matrix, the row permutation and the permutation sign.
    fn lu(&self) -> (Self, [usize; MAX_DIM], f64) {
        let n = self.n;
        let mut lu = *self;
        let mut perm = [0, 1, 2, 3];
        let mut sign = 1.0;
        for k in 0..n {
            let mut p = k;
            let mut best = lu.a[k][k].norm();
            for r in (k + 1)..n {
                let v = lu.a[r][k].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if p != k {
                lu.a.swap(p, k);
                perm.swap(p, k);
                sign = -sign;
            }
            let pivot = lu.a[k][k];
            if pivot == ZERO {
                continue;
            }
            for r in (k + 1)..n {
                let f = lu.a[r][k] / pivot;
                lu.a[r][k] = f;
                for c in (k + 1)..n {
                    let t = lu.a[k][c];
                    lu.a[r][c] -= f * t;
                }
            }
        }
        (lu, perm, sign)
    }

    pub fn det(&self) -> C64 {
        let (lu, _, sign) = self.lu();
        let mut d = C64::new(sign, 0.0);
        for i in 0..self.n {
            d *= lu.a[i][i];
        }
        d
    }

    /// Matrix inverse, `None` when singular to working precision.
    pub fn inverse(&self) -> Option<Self> {
        let n = self.n;
        let (lu, perm, _) = self.lu();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..n {
            if lu.a[i][i].norm() <= 1e-300 * scale {
                return None;
            }
        }
        let mut inv = Self::zeros(n);
        for col in 0..n {
            // Solve L U x = P e_col.
            let mut x = [ZERO; MAX_DIM];
            for i in 0..n {
                let mut s = if perm[i] == col { ONE } else { ZERO };
                for k in 0..i {
                    s -= lu.a[i][k] * x[k];
                }
                x[i] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[i];
                for k in (i + 1)..n {
                    s -= lu.a[i][k] * x[k];
                }
                x[i] = s / lu.a[i][i];
            }
            for i in 0..n {
                inv.a[i][col] = x[i];
            }
        }
        Some(inv)
    }

    /// Inverse arranged for upper-index contraction: if `self = g_{ij̄}` the
    /// result `G` satisfies `G[i][j] = g^{ij̄}` with `g^{ij̄} g_{kj̄} = δ_ik`.
    pub fn upper(&self) -> Option<Self> {
        self.inverse().map(|m| m.transpose())
    }

    /// Lower Cholesky factor `L` with `self = L L*`; `None` unless the matrix
    /// is Hermitian positive definite.
    pub fn cholesky(&self) -> Option<Self> {
        let n = self.n;
        let mut l = Self::zeros(n);
        for j in 0..n {
            let mut d = self.a[j][j].re;
            for k in 0..j {
                d -= l.a[j][k].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let d = Float::sqrt(d);
            l.a[j][j] = C64::new(d, 0.0);
            for i in (j + 1)..n {
                let mut s = self.a[i][j];
                for k in 0..j {
                    s -= l.a[i][k] * l.a[j][k].conj();
                }
                l.a[i][j] = s / d;
            }
        }
        Some(l)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_some()
    }

    /// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
    ///
    /// Returns eigenvalues in ascending order and the unitary matrix whose
    /// columns are the matching eigenvectors. The input is symmetrized first.
    pub fn eigh(&self) -> ([f64; MAX_DIM], Self) {
        let n = self.n;
        let mut a = self.hermitian_part();
        let mut v = Self::identity(n);
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for _sweep in 0..64 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a.a[p][q].norm_sqr();
                }
            }
            if Float::sqrt(off) <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.a[p][q];
                    let r = apq.norm();
                    if r <= 1e-300 {
                        continue;
                    }
                    let phase = apq / r;
                    let app = a.a[p][p].re;
                    let aqq = a.a[q][q].re;
                    let tau = (aqq - app) / (2.0 * r);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + Float::sqrt(1.0 + tau * tau))
                    } else {
                        -1.0 / (-tau + Float::sqrt(1.0 + tau * tau))
                    };
                    let c = 1.0 / Float::sqrt(1.0 + t * t);
                    let s = t * c;
                    // Unitary rotation acting on columns p, q:
                    //   col_p' = c col_p - s conj(phase) col_q
                    //   col_q' = s phase col_p + c col_q
                    let sp = phase * s;
                    let spc = phase.conj() * s;
                    for k in 0..n {
                        let akp = a.a[k][p];
                        let akq = a.a[k][q];
                        a.a[k][p] = akp * c - akq * spc;
                        a.a[k][q] = akp * sp + akq * c;
                    }
                    for k in 0..n {
                        let apk = a.a[p][k];
                        let aqk = a.a[q][k];
                        a.a[p][k] = apk * c - aqk * sp;
                        a.a[q][k] = apk * spc + aqk * c;
                    }
                    a.a[p][q] = ZERO;
                    a.a[q][p] = ZERO;
                    for k in 0..n {
                        let vkp = v.a[k][p];
                        let vkq = v.a[k][q];
                        v.a[k][p] = vkp * c - vkq * spc;
                        v.a[k][q] = vkp * sp + vkq * c;
                    }
                }
            }
        }
        let mut order = [0usize, 1, 2, 3];
        let mut vals = [0.0; MAX_DIM];
        for i in 0..n {
            vals[i] = a.a[i][i].re;
        }
        order[..n].sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap_or(core::cmp::Ordering::Equal));
        let mut sorted = [0.0; MAX_DIM];
        let mut vecs = Self::zeros(n);
        for (dst, &src) in order[..n].iter().enumerate() {
            sorted[dst] = vals[src];
            for k in 0..n {
                vecs.a[k][dst] = v.a[k][src];
            }
        }
        (sorted, vecs)
    }

    /// Eigenvalues of `self` relative to the positive form `g`, i.e. the
    /// eigenvalues of `g⁻¹·self`, ascending. `None` if `g` is not positive.
    pub fn eigenvalues_relative_to(&self, g: &Self) -> Option<[f64; MAX_DIM]> {
        let l = g.cholesky()?;
        let linv = l.inverse()?;
        let m = linv * *self * linv.adjoint();
        Some(m.eigh().0)
    }

    /// Rebuild `U diag(d) U*`.
    pub fn from_spectrum(vals: &[f64], vecs: &Self) -> Self {
        let n = vecs.n;
        Self::from_fn(n, |i, j| {
            (0..n)
                .map(|k| vecs.a[i][k] * vals[k] * vecs.a[j][k].conj())
                .sum()
        })
    }
}

impl Index<(usize, usize)> for HermMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.n && j < self.n);
        &self.a[i][j]
    }
}

impl IndexMut<(usize, usize)> for HermMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.n && j < self.n);
        &mut self.a[i][j]
    }
}

impl Add for HermMatrix {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for HermMatrix {
    fn add_assign(&mut self, rhs: Self) {
        debug_assert_eq!(self.n, rhs.n);
        for i in 0..self.n {
            for j in 0..self.n {
                self.a[i][j] += rhs.a[i][j];
            }
        }
    }
}

impl Sub for HermMatrix {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl SubAssign for HermMatrix {
    fn sub_assign(&mut self, rhs: Self) {
        debug_assert_eq!(self.n, rhs.n);
        for i in 0..self.n {
            for j in 0..self.n {
                self.a[i][j] -= rhs.a[i][j];
            }
        }
    }
}

impl Neg for HermMatrix {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|z| -z)
    }
}

impl Mul for HermMatrix {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.n;
        Self::from_fn(n, |i, j| (0..n).map(|k| self.a[i][k] * rhs.a[k][j]).sum())
    }
}

impl Mul<f64> for HermMatrix {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.scale(s)
    }
}
