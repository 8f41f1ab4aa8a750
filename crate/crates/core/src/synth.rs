//! Analytic test data: smooth periodic functions with exact derivatives,
//! metric models that can be resampled on any grid, and manufactured
//! problems whose exact solution is known.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{mean_real, HermField, MetricField, ScalarField, TorusGrid, MAX_COORDS};
use crate::linalg::HermMatrix;
use crate::ma::{tilde_from_derivatives, ProblemSpec, RhsVolume, Variant};
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);

/// `cos(2π k·x + phase)` with weight `amp`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    pub amp: f64,
    pub k: [i32; MAX_COORDS],
    pub phase: f64,
}

impl Mode {
    fn arg(&self, x: &[f64]) -> f64 {
        let mut a = self.phase;
        for (c, xc) in x.iter().enumerate().take(MAX_COORDS) {
            a += TAU * self.k[c] as f64 * xc;
        }
        a
    }
}

/// Real function `s(x) = Σ amp cos(2π k·x + phase)` or, with
/// `exp_rate = Some(ρ)`, `(e^{ρ s} - 1) / ρ`. The exponential form is not
/// band-limited, so grid refinement shows genuine spectral convergence.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothFunction {
    pub scale: f64,
    pub modes: Vec<Mode>,
    pub exp_rate: Option<f64>,
}

/// Value, real gradient and real Hessian at one point.
pub struct Jet {
    pub value: f64,
    pub grad: [f64; MAX_COORDS],
    pub hess: [[f64; MAX_COORDS]; MAX_COORDS],
}

impl SmoothFunction {
    /// `modes` random modes with wave vectors in `{-max_k..max_k}` on the
    /// `active` coordinates and weights summing to one.
    pub fn random(rng: &mut impl Rng, active: &[usize], modes: usize, max_k: i32, scale: f64) -> Self {
        let mut out = Vec::with_capacity(modes);
        let mut total = 0.0;
        while out.len() < modes {
            let mut k = [0i32; MAX_COORDS];
            for &c in active {
                k[c] = rng.gen_range(-max_k..=max_k);
            }
            if k.iter().all(|&v| v == 0) {
                continue;
            }
            let amp = rng.gen_range(0.2..1.0);
            total += amp;
            out.push(Mode {
                amp,
                k,
                phase: rng.gen_range(0.0..TAU),
            });
        }
        for m in out.iter_mut() {
            m.amp /= total;
        }
        Self {
            scale,
            modes: out,
            exp_rate: None,
        }
    }

    pub fn with_exp_rate(mut self, rate: f64) -> Self {
        self.exp_rate = Some(rate);
        self
    }

    pub fn jet(&self, x: &[f64]) -> Jet {
        let mut s = 0.0;
        let mut ds = [0.0; MAX_COORDS];
        let mut dds = [[0.0; MAX_COORDS]; MAX_COORDS];
        for m in &self.modes {
            let a = m.arg(x);
            let (sn, cs) = (Float::sin(a), Float::cos(a));
            s += m.amp * cs;
            for c in 0..MAX_COORDS {
                let kc = TAU * m.k[c] as f64;
                ds[c] -= m.amp * kc * sn;
                for d in 0..MAX_COORDS {
                    dds[c][d] -= m.amp * kc * TAU * m.k[d] as f64 * cs;
                }
            }
        }
        let (value, outer, inner) = match self.exp_rate {
            None => (s, 0.0, 1.0),
            Some(r) => {
                let e = Float::exp(r * s);
                ((e - 1.0) / r, r * e, e)
            }
        };
        let mut grad = [0.0; MAX_COORDS];
        let mut hess = [[0.0; MAX_COORDS]; MAX_COORDS];
        for c in 0..MAX_COORDS {
            grad[c] = self.scale * inner * ds[c];
            for d in 0..MAX_COORDS {
                hess[c][d] = self.scale * (inner * dds[c][d] + outer * ds[c] * ds[d]);
            }
        }
        Jet {
            value: self.scale * value,
            grad,
            hess,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.jet(x).value
    }

    pub fn sample(&self, grid: &TorusGrid) -> ScalarField {
        ScalarField::from_real_fn(grid, |x| self.value(x))
    }

    /// Exact `∂_i f` on the grid.
    pub fn holo_gradient(&self, grid: &TorusGrid) -> Vec<ScalarField> {
        (0..grid.dim())
            .map(|i| {
                ScalarField::from_fn(grid, |x| {
                    let j = self.jet(x);
                    C64::new(j.grad[2 * i], -j.grad[2 * i + 1]) * 0.5
                })
            })
            .collect()
    }

    /// Exact `∂_i ∂_{j̄} f` on the grid.
    pub fn complex_hessian(&self, grid: &TorusGrid) -> HermField {
        let n = grid.dim();
        HermField::from_fn(grid, |x| {
            let j = self.jet(x);
            complex_hessian_of(&j.hess, n)
        })
    }
}

/// `∂_i∂_{j̄} = ¼ (∂_{x_i} - i∂_{y_i})(∂_{x_j} + i∂_{y_j})` from a real Hessian.
pub fn complex_hessian_of(h: &[[f64; MAX_COORDS]; MAX_COORDS], n: usize) -> HermMatrix {
    HermMatrix::from_fn(n, |i, j| {
        let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        (C64::new(h[xi][xj] + h[yi][yj], 0.0) + I * (h[xi][yj] - h[yi][xj])) * 0.25
    })
}

/// Metrics that can be evaluated at any point.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricModel {
    /// The identity.
    Flat,
    /// `I + Σ A_m cos(2π k_m·x + φ_m)` with small Hermitian `A_m`.
    Trig { n: usize, terms: Vec<(Mode, HermMatrix)> },
    /// `diag(e^f, 1, ..., 1, e^{-f})`, `f = ε cos(2π x₂)`: Gauduchon, not
    /// Kähler, and for `n = 3` not astheno-Kähler. Needs `n ≥ 3`.
    Gauduchon { eps: f64 },
    /// Identity plus `g_{01̄} = i ∂_{1̄}φ` and its conjugate, `φ = ε cos(2π x₂)`:
    /// `∂∂̄ω = 0` without being Kähler.
    Astheno { eps: f64 },
    /// `e^σ I`.
    Conformal(SmoothFunction),
}

impl MetricModel {
    pub fn random_trig(rng: &mut impl Rng, n: usize, active: &[usize], terms: usize, amplitude: f64) -> Self {
        let mut out = Vec::with_capacity(terms);
        while out.len() < terms {
            let mut k = [0i32; MAX_COORDS];
            for &c in active {
                k[c] = rng.gen_range(-1..=1);
            }
            if k.iter().all(|&v| v == 0) {
                continue;
            }
            let a = HermMatrix::from_fn(n, |i, j| {
                if i == j {
                    C64::new(rng.gen_range(-1.0..1.0), 0.0)
                } else {
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                }
            })
            .hermitian_part();
            // Keep every perturbation below `amplitude / terms` in spectral norm.
            let bound = a.max_abs() * n as f64;
            let mode = Mode {
                amp: 1.0,
                k,
                phase: rng.gen_range(0.0..TAU),
            };
            out.push((mode, a.scale(amplitude / (terms as f64 * bound))));
        }
        MetricModel::Trig { n, terms: out }
    }

    pub fn at(&self, n: usize, x: &[f64]) -> HermMatrix {
        match self {
            MetricModel::Flat => HermMatrix::identity(n),
            MetricModel::Trig { terms, .. } => {
                let mut g = HermMatrix::identity(n);
                for (m, a) in terms {
                    g += a.scale(Float::cos(m.arg(x)));
                }
                g
            }
            MetricModel::Gauduchon { eps } => {
                let f = eps * Float::cos(TAU * x[2]);
                let mut d = [1.0; 4];
                d[0] = Float::exp(f);
                d[n - 1] = Float::exp(-f);
                HermMatrix::diag(&d[..n])
            }
            MetricModel::Astheno { eps } => {
                // ∂_{1̄}φ = ½ ∂_{x₂}φ for φ depending on x₂ only.
                let dphi = -0.5 * eps * TAU * Float::sin(TAU * x[2]);
                let mut g = HermMatrix::identity(n);
                g[(0, 1)] = I * dphi;
                g[(1, 0)] = -I * dphi;
                g
            }
            MetricModel::Conformal(s) => HermMatrix::identity(n).scale(Float::exp(s.value(x))),
        }
    }

    pub fn sample(&self, grid: &TorusGrid) -> Result<MetricField> {
        let n = grid.dim();
        if matches!(self, MetricModel::Gauduchon { .. }) && n < 3 {
            return Err(Error::UnsupportedDimension {
                n,
                reason: "the Gauduchon test metric needs n >= 3",
            });
        }
        if let MetricModel::Trig { n: m, .. } = self {
            if *m != n {
                return Err(Error::DimensionMismatch("metric model built for another dimension".into()));
            }
        }
        MetricField::new(HermField::from_fn(grid, |x| self.at(n, x)))
    }
}

/// Parameters of a manufactured problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ManufactureConfig {
    pub n: usize,
    pub variant: Variant,
    pub rhs: RhsVolume,
    /// Size of `u*`.
    pub amplitude: f64,
    pub seed: u64,
    /// Active real coordinates.
    pub active: Vec<usize>,
    /// Size of the metric perturbations of `ω` and `ω₀` around the identity.
    pub metric_amplitude: f64,
    /// Rate `ρ` of the exponential in `u*`.
    pub exp_rate: f64,
}

impl Default for ManufactureConfig {
    fn default() -> Self {
        Self {
            n: 3,
            variant: Variant::Psi,
            rhs: RhsVolume::OmegaN,
            amplitude: 0.05,
            seed: 7,
            active: alloc::vec![0, 2, 5],
            metric_amplitude: 0.2,
            exp_rate: 0.6,
        }
    }
}

/// Analytic description of a manufactured problem, resampled per grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ManufacturedFamily {
    pub config: ManufactureConfig,
    pub u_star: SmoothFunction,
    pub b_star: f64,
    pub omega0: MetricModel,
    pub omega: MetricModel,
}

/// A problem whose exact solution is known on the grid it was built for.
#[derive(Clone, Debug)]
pub struct Manufactured {
    pub spec: ProblemSpec,
    /// `u*` sampled and shifted to grid mean zero.
    pub u_star: ScalarField,
    pub b_star: f64,
}

impl ManufacturedFamily {
    pub fn new(config: ManufactureConfig) -> Result<Self> {
        let n = config.n;
        if config.active.iter().any(|&c| c >= 2 * n) {
            return Err(Error::InvalidGrid("active coordinate out of range".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let u_star = SmoothFunction::random(&mut rng, &config.active, 3, 1, config.amplitude)
            .with_exp_rate(config.exp_rate);
        let omega0 = MetricModel::random_trig(&mut rng, n, &config.active, 2, config.metric_amplitude);
        let omega = MetricModel::random_trig(&mut rng, n, &config.active, 2, config.metric_amplitude);
        let b_star = rng.gen_range(-0.2..0.2);
        Ok(Self {
            config,
            u_star,
            b_star,
            omega0,
            omega,
        })
    }

    /// The uniform grid with `m` nodes per active coordinate.
    pub fn grid(&self, m: usize) -> Result<TorusGrid> {
        TorusGrid::uniform(self.config.n, &self.config.active, m)
    }

    /// Sample on `grid` and generate `F* = log det g̃(u*) - log det g_rhs - b*`
    /// from the exact derivatives of `u*`.
    pub fn on_grid(&self, grid: &TorusGrid) -> Result<Manufactured> {
        let cfg = &self.config;
        let omega0 = self.omega0.sample(grid)?;
        let omega = self.omega.sample(grid)?;
        let zero = ScalarField::zeros(grid);
        let spec = ProblemSpec::new(cfg.variant, omega0, omega, zero, cfg.rhs)?;
        let hess = self.u_star.complex_hessian(grid);
        let du = match cfg.variant {
            Variant::Phi => self.u_star.holo_gradient(grid),
            Variant::Psi => Vec::new(),
        };
        let tilde = tilde_from_derivatives(&spec, &hess, &du)?;
        let bad = tilde.non_positive_nodes();
        if !bad.is_empty() {
            return Err(Error::TildeNotPositive { nodes: bad });
        }
        let f: Vec<f64> = tilde
            .values()
            .iter()
            .zip(spec.log_det_rhs())
            .map(|(t, r)| Float::ln(t.det().re) - r - self.b_star)
            .collect();
        let spec = spec.with_f(ScalarField::from_real(grid, &f)?)?;
        let u = self.u_star.sample(grid);
        let m = mean_real(&u.real_parts());
        Ok(Manufactured {
            spec,
            u_star: u.map(|z| C64::new(z.re - m, 0.0)),
            b_star: self.b_star,
        })
    }
}

/// Random Hermitian positive-definite matrix with eigenvalues in
/// `[lo, hi]` relative to the identity.
pub fn random_positive_matrix(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> HermMatrix {
    let a = HermMatrix::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    // Gram–Schmidt on the columns of a gives a unitary.
    let mut q = [[C64::new(0.0, 0.0); 4]; 4];
    for j in 0..n {
        let mut v: [C64; 4] = [C64::new(0.0, 0.0); 4];
        for i in 0..n {
            v[i] = a[(i, j)] + if i == j { C64::new(2.0, 0.0) } else { C64::new(0.0, 0.0) };
        }
        for p in 0..j {
            let dot: C64 = (0..n).map(|i| q[p][i].conj() * v[i]).sum();
            for i in 0..n {
                v[i] -= dot * q[p][i];
            }
        }
        let nrm = Float::sqrt((0..n).map(|i| v[i].norm_sqr()).sum::<f64>());
        for i in 0..n {
            q[j][i] = v[i] / nrm;
        }
    }
    let mut vals = [0.0; 4];
    for v in vals.iter_mut().take(n) {
        *v = rng.gen_range(lo..hi);
    }
    HermMatrix::from_fn(n, |i, k| (0..n).map(|p| q[p][i] * vals[p] * q[p][k].conj()).sum()).hermitian_part()
}

/// Seeded generator used by the test data helpers.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
