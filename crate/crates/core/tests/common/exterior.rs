//! Brute-force exterior algebra on `C^n`, used only as a test oracle.
//!
//! Generators `0..n` are `dz^1..dz^n`, generators `n..2n` are
//! `dz̄^1..dz̄^n`. A monomial is a bitmask with generators wedged in
//! increasing order; a form is the full coefficient vector over all masks.

#![allow(dead_code)]

use hma_core::{HermMatrix, C64};

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Debug)]
pub struct Form {
    pub n: usize,
    pub c: Vec<C64>,
}

fn sign_of_merge(a: usize, b: usize) -> f64 {
    // Number of pairs (i in a, j in b) with i > j.
    let mut inv = 0u32;
    let mut bb = b;
    while bb != 0 {
        let j = bb.trailing_zeros();
        inv += (a >> (j + 1)).count_ones();
        bb &= bb - 1;
    }
    if inv % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl Form {
    pub fn zero(n: usize) -> Self {
        Self { n, c: vec![C64::new(0.0, 0.0); 1 << (2 * n)] }
    }

    pub fn scalar(n: usize, s: C64) -> Self {
        let mut f = Self::zero(n);
        f.c[0] = s;
        f
    }

    pub fn dz(n: usize, a: usize) -> Self {
        let mut f = Self::zero(n);
        f.c[1 << a] = C64::new(1.0, 0.0);
        f
    }

    pub fn dzbar(n: usize, a: usize) -> Self {
        let mut f = Self::zero(n);
        f.c[1 << (n + a)] = C64::new(1.0, 0.0);
        f
    }

    pub fn add(&self, o: &Self) -> Self {
        Self { n: self.n, c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { n: self.n, c: self.c.iter().map(|a| a * s).collect() }
    }

    pub fn wedge(&self, o: &Self) -> Self {
        let mut r = Self::zero(self.n);
        for (ma, &ca) in self.c.iter().enumerate() {
            if ca == C64::new(0.0, 0.0) {
                continue;
            }
            for (mb, &cb) in o.c.iter().enumerate() {
                if cb == C64::new(0.0, 0.0) || ma & mb != 0 {
                    continue;
                }
                r.c[ma | mb] += ca * cb * sign_of_merge(ma, mb);
            }
        }
        r
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut r = Self::scalar(self.n, C64::new(1.0, 0.0));
        for _ in 0..k {
            r = r.wedge(self);
        }
        r
    }

    /// Replace every generator by a 1-form and re-expand.
    pub fn substitute(&self, images: &[Form]) -> Self {
        let mut r = Self::zero(self.n);
        for (m, &cm) in self.c.iter().enumerate() {
            if cm == C64::new(0.0, 0.0) {
                continue;
            }
            let mut t = Self::scalar(self.n, cm);
            for g in 0..2 * self.n {
                if m & (1 << g) != 0 {
                    t = t.wedge(&images[g]);
                }
            }
            r = r.add(&t);
        }
        r
    }

    /// Complex conjugate form.
    pub fn conj(&self) -> Self {
        let n = self.n;
        let images: Vec<Form> = (0..2 * n)
            .map(|g| if g < n { Form::dzbar(n, g) } else { Form::dz(n, g - n) })
            .collect();
        let conj_coeffs = Self { n, c: self.c.iter().map(|z| z.conj()).collect() };
        conj_coeffs.substitute(&images)
    }

    pub fn real_part(&self) -> Self {
        self.add(&self.conj()).scale(C64::new(0.5, 0.0))
    }

    pub fn top(&self) -> C64 {
        self.c[(1 << (2 * self.n)) - 1]
    }
}

/// `Σ_ab m[a][b] · i dz^a ∧ dz̄^b`.
pub fn one_one(m: &HermMatrix) -> Form {
    let n = m.dim();
    let mut f = Form::zero(n);
    for a in 0..n {
        for b in 0..n {
            let t = Form::dz(n, a).wedge(&Form::dzbar(n, b)).scale(I * m[(a, b)]);
            f = f.add(&t);
        }
    }
    f
}

/// `ε_{ab̄} = i dz^a ∧ dz̄^b`.
pub fn eps(n: usize, a: usize, b: usize) -> Form {
    Form::dz(n, a).wedge(&Form::dzbar(n, b)).scale(I)
}

/// Coefficient of the flat volume form `Π_a ε_{aā}`.
pub fn vol0(n: usize) -> C64 {
    let mut v = Form::scalar(n, C64::new(1.0, 0.0));
    for a in 0..n {
        v = v.wedge(&eps(n, a, a));
    }
    v.top()
}

/// Coordinate coefficients `P_ab = (ε_{ab̄} ∧ Ψ) / vol_0` of an `(n-1,n-1)`-form.
pub fn coordinate_coefficients(psi: &Form) -> HermMatrix {
    let n = psi.n;
    let v = vol0(n);
    HermMatrix::from_fn(n, |a, b| eps(n, a, b).wedge(psi).top() / v)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// Normalized star dual `(1/(n-1)!) *Ψ` with respect to the metric `g`,
/// computed in a `g`-unitary coframe.
pub fn star_rep(g: &HermMatrix, psi: &Form) -> HermMatrix {
    let n = g.dim();
    // g = L L*, dz = C dw with C = L^{-T} makes the metric the identity in w.
    let l = g.cholesky().expect("oracle metric must be positive");
    let c = l.inverse().unwrap().transpose();
    let images: Vec<Form> = (0..2 * n)
        .map(|gen| {
            let mut f = Form::zero(n);
            if gen < n {
                for k in 0..n {
                    f.c[1 << k] = c[(gen, k)];
                }
            } else {
                for k in 0..n {
                    f.c[1 << (n + k)] = c[(gen - n, k)].conj();
                }
            }
            f
        })
        .collect();
    let psi_w = psi.substitute(&images);
    let v = vol0(n);
    // Flat-frame star: S_{ba} = (ε_{ab̄} ∧ Ψ) / vol.
    let s_w = HermMatrix::from_fn(n, |b, a| eps(n, a, b).wedge(&psi_w).top() / v);
    // Back to z: dw = C^{-1} dz.
    let cinv = c.inverse().unwrap();
    let s_z = cinv.transpose() * s_w * cinv.map(|z| z.conj());
    s_z.scale(1.0 / factorial(n - 1))
}

/// `(1/(n-1)!) * (ω^{n-1})` for `ω` built from `a`, relative to `g`.
pub fn star_power(g: &HermMatrix, a: &HermMatrix) -> HermMatrix {
    let n = g.dim();
    star_rep(g, &one_one(a).pow(n - 1))
}

/// `(1/(n-2)!) * (α ∧ ω^{n-2})`.
pub fn star_wedge(g: &HermMatrix, alpha: &HermMatrix) -> HermMatrix {
    let n = g.dim();
    let psi = one_one(alpha).wedge(&one_one(g).pow(n - 2));
    star_rep(g, &psi).scale(factorial(n - 1) / factorial(n - 2))
}

/// `∂̄(ω^m)` at a point from `g` and `dbar_g[b] = ∂_{b̄} g`.
pub fn dbar_power(g: &HermMatrix, dbar_g: &[HermMatrix], m: usize) -> Form {
    let n = g.dim();
    let w = one_one(g);
    let mut r = Form::zero(n);
    if m == 0 {
        return r;
    }
    let wm1 = w.pow(m - 1);
    for b in 0..n {
        let d = one_one(&dbar_g[b]).wedge(&wm1).scale(C64::new(m as f64, 0.0));
        r = r.add(&Form::dzbar(n, b).wedge(&d));
    }
    r
}

/// `*E` with `E = (1/(n-1)!) Re(i ∂u ∧ ∂̄(ω^{n-2}))`, from pointwise data.
pub fn star_e(g: &HermMatrix, dbar_g: &[HermMatrix], du: &[C64]) -> HermMatrix {
    let n = g.dim();
    let mut d_u = Form::zero(n);
    for a in 0..n {
        d_u = d_u.add(&Form::dz(n, a).scale(du[a]));
    }
    let xi = d_u.wedge(&dbar_power(g, dbar_g, n - 2)).scale(I);
    // *E = (1/(n-1)!) * Re(ξ) = star_rep(Re ξ).
    star_rep(g, &xi.real_part())
}
