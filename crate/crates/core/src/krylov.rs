//! Restarted right-preconditioned GMRES on real vectors.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::grid::pairwise_sum;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresConfig {
    pub restart: usize,
    pub max_iter: usize,
    /// Stop when `‖b - Ax‖ ≤ rel_tol ‖b‖`.
    pub rel_tol: f64,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            restart: 60,
            max_iter: 600,
            rel_tol: 1e-11,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    /// Final relative residual `‖b - Ax‖ / ‖b‖`.
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&p)
}

fn norm(a: &[f64]) -> f64 {
    Float::sqrt(dot(a, a))
}

/// Solve `A x = b` with right preconditioner `M⁻¹`, starting from `x0`.
pub fn gmres(
    a: impl Fn(&[f64]) -> Vec<f64>,
    m_inv: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: &GmresConfig,
) -> (Vec<f64>, GmresOutcome) {
    let len = b.len();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; len]);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return (
            vec![0.0; len],
            GmresOutcome {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        );
    }
    let target = cfg.rel_tol * bnorm;
    let m = cfg.restart.max(1);
    let mut total = 0usize;
    while total < cfg.max_iter {
        let ax = a(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        if beta <= target {
            return (
                x,
                GmresOutcome {
                    iterations: total,
                    residual: beta / bnorm,
                    converged: true,
                },
            );
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut used = 0;
        for j in 0..m {
            if total >= cfg.max_iter {
                break;
            }
            total += 1;
            let z = m_inv(&basis[j]);
            let mut w = a(&z);
            zs.push(z);
            for i in 0..=j {
                let hij = dot(&w, &basis[i]);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&basis[i]) {
                    *wk -= hij * vk;
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = Float::sqrt(h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]);
            if d == 0.0 {
                used = j;
                break;
            }
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            if g[j + 1].abs() <= target || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // Back substitution for the least-squares coefficients.
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in (i + 1)..used {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            for (xk, zk) in x.iter_mut().zip(&zs[i]) {
                *xk += yi * zk;
            }
        }
        if used == 0 {
            break;
        }
    }
    let ax = a(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let final_rel = norm(&r) / bnorm;
    let converged = final_rel <= cfg.rel_tol;
    (
        x,
        GmresOutcome {
            iterations: total,
            residual: final_rel,
            converged,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 50;
        let a = |v: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut s = 4.0 * v[i];
                    if i > 0 {
                        s -= 1.5 * v[i - 1];
                    }
                    if i + 1 < n {
                        s -= 0.5 * v[i + 1];
                    }
                    s
                })
                .collect()
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let cfg = GmresConfig {
            restart: 10,
            max_iter: 200,
            rel_tol: 1e-12,
        };
        let (x, out) = gmres(a, |v| v.to_vec(), &b, None, &cfg);
        assert!(out.converged, "{out:?}");
        let ax = a(&x);
        let err = ax.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }
}
