//! Periodic grids on the flat torus `C^n / (Z^n + iZ^n)` and spectral
//! differentiation.
//!
//! Real coordinates are numbered `c = 0..2n` with `c = 2k` the real part
//! `x_{k+1}` and `c = 2k+1` the imaginary part `y_{k+1}` of `z_{k+1}`. Samples
//! are stored row-major with coordinate 0 varying slowest. A coordinate is
//! *active* when fields may depend on it; inactive coordinates carry a single
//! node.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

use num_traits::Float;

use crate::error::{Error, Result};
use crate::fft::Radix2;
use crate::linalg::HermMatrix;
use crate::par::map_nodes;
use crate::C64;

pub const MAX_COORDS: usize = 8;

/// Default cap on the number of grid nodes.
pub const DEFAULT_MAX_NODES: usize = 1 << 22;

const I: C64 = C64::new(0.0, 1.0);

/// How derivative multipliers are formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DiffMode {
    /// Exact Fourier multipliers.
    #[default]
    Spectral,
    /// Second-order central differences, expressed through their symbols.
    FiniteDifference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusGrid {
    n: usize,
    sizes: [usize; MAX_COORDS],
    strides: [usize; MAX_COORDS],
    len: usize,
    mode: DiffMode,
}

impl TorusGrid {
    /// Build a grid for complex dimension `n` from `2n` per-coordinate sizes.
    pub fn new(n: usize, sizes: &[usize]) -> Result<Self> {
        Self::with_budget(n, sizes, DEFAULT_MAX_NODES)
    }

    pub fn with_budget(n: usize, sizes: &[usize], max_nodes: usize) -> Result<Self> {
        if !(2..=4).contains(&n) {
            return Err(Error::InvalidGrid(format!("complex dimension {n} outside 2..=4")));
        }
        if sizes.len() != 2 * n {
            return Err(Error::InvalidGrid(format!(
                "expected {} sizes, got {}",
                2 * n,
                sizes.len()
            )));
        }
        let mut s = [1usize; MAX_COORDS];
        let mut len = 1usize;
        for (c, &m) in sizes.iter().enumerate() {
            if m != 1 && !(m >= 4 && m.is_power_of_two()) {
                return Err(Error::InvalidGrid(format!(
                    "size {m} of coordinate {c} is neither 1 nor a power of two >= 4"
                )));
            }
            s[c] = m;
            len = len
                .checked_mul(m)
                .ok_or_else(|| Error::InvalidGrid(format!("node count overflows")))?;
        }
        if len > max_nodes {
            return Err(Error::InvalidGrid(format!(
                "{len} nodes exceed the budget of {max_nodes}"
            )));
        }
        let mut strides = [0usize; MAX_COORDS];
        let mut acc = 1;
        for c in (0..2 * n).rev() {
            strides[c] = acc;
            acc *= s[c];
        }
        Ok(Self {
            n,
            sizes: s,
            strides,
            len,
            mode: DiffMode::Spectral,
        })
    }

    /// `m` nodes on each coordinate listed in `active`, one node elsewhere.
    pub fn uniform(n: usize, active: &[usize], m: usize) -> Result<Self> {
        let mut sizes = vec![1; 2 * n];
        for &c in active {
            if c >= 2 * n {
                return Err(Error::InvalidGrid(format!("coordinate {c} out of range")));
            }
            sizes[c] = m;
        }
        Self::new(n, &sizes)
    }

    pub fn with_mode(mut self, mode: DiffMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn mode(&self) -> DiffMode {
        self.mode
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes[..2 * self.n]
    }

    pub fn is_active(&self, c: usize) -> bool {
        self.sizes[c] > 1
    }

    /// Bit `c` set when coordinate `c` is active.
    pub fn active_mask(&self) -> u32 {
        (0..2 * self.n)
            .filter(|&c| self.is_active(c))
            .fold(0, |m, c| m | (1 << c))
    }

    pub fn active_coords(&self) -> impl Iterator<Item = usize> + '_ {
        (0..2 * self.n).filter(move |&c| self.is_active(c))
    }

    /// Same active set with every active size multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let sizes: Vec<usize> = self
            .sizes()
            .iter()
            .map(|&m| if m > 1 { m * factor } else { 1 })
            .collect();
        Ok(Self::new(self.n, &sizes)?.with_mode(self.mode))
    }

    #[inline]
    fn multi_index(&self, idx: usize) -> [usize; MAX_COORDS] {
        let mut m = [0; MAX_COORDS];
        for c in 0..2 * self.n {
            m[c] = (idx / self.strides[c]) % self.sizes[c];
        }
        m
    }

    /// Real coordinates of node `idx`, each in `[0, 1)`.
    pub fn position(&self, idx: usize) -> [f64; MAX_COORDS] {
        let m = self.multi_index(idx);
        let mut x = [0.0; MAX_COORDS];
        for c in 0..2 * self.n {
            x[c] = m[c] as f64 / self.sizes[c] as f64;
        }
        x
    }

    /// Derivative symbols at spectral index `idx`.
    pub fn wave(&self, idx: usize) -> Wave {
        let m = self.multi_index(idx);
        let mut w = Wave {
            d1: [C64::new(0.0, 0.0); MAX_COORDS],
            d2: [0.0; MAX_COORDS],
        };
        for c in 0..2 * self.n {
            let size = self.sizes[c];
            if size == 1 {
                continue;
            }
            let signed = if m[c] <= size / 2 {
                m[c] as f64
            } else {
                m[c] as f64 - size as f64
            };
            let nyquist = 2 * m[c] == size;
            match self.mode {
                DiffMode::Spectral => {
                    let k = 2.0 * PI * signed;
                    w.d1[c] = if nyquist { C64::new(0.0, 0.0) } else { C64::new(0.0, k) };
                    w.d2[c] = -k * k;
                }
                DiffMode::FiniteDifference => {
                    let h = 1.0 / size as f64;
                    let theta = 2.0 * PI * signed * h;
                    w.d1[c] = C64::new(0.0, Float::sin(theta) / h);
                    let s = 2.0 * Float::sin(theta / 2.0) / h;
                    w.d2[c] = -s * s;
                }
            }
        }
        w
    }

    fn transform(&self, data: &mut [C64], inverse: bool) {
        debug_assert_eq!(data.len(), self.len);
        let mut buf = Vec::new();
        for c in self.active_coords().collect::<Vec<_>>() {
            let size = self.sizes[c];
            let stride = self.strides[c];
            let plan = Radix2::new(size);
            buf.resize(size, C64::new(0.0, 0.0));
            let block = stride * size;
            for outer in (0..self.len).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for k in 0..size {
                        buf[k] = data[base + k * stride];
                    }
                    if inverse {
                        plan.inverse(&mut buf);
                    } else {
                        plan.forward(&mut buf);
                    }
                    for k in 0..size {
                        data[base + k * stride] = buf[k];
                    }
                }
            }
        }
    }

    /// In-place unnormalized forward DFT over all active coordinates.
    pub fn forward(&self, data: &mut [C64]) {
        self.transform(data, false);
    }

    /// In-place normalized inverse DFT.
    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(data, true);
    }

    pub fn check_same(&self, other: &TorusGrid) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch(format!(
                "grids differ: {:?} vs {:?}",
                self.sizes(),
                other.sizes()
            )));
        }
        Ok(())
    }
}

/// Fourier symbols of the elementary derivatives at one wave vector.
#[derive(Clone, Copy, Debug)]
pub struct Wave {
    d1: [C64; MAX_COORDS],
    d2: [f64; MAX_COORDS],
}

impl Wave {
    /// Symbol of `∂/∂x_c` (zero at the Nyquist mode).
    #[inline]
    pub fn d1(&self, c: usize) -> C64 {
        self.d1[c]
    }

    /// Symbol of `∂²/∂x_a∂x_b`; the repeated-coordinate case keeps the
    /// Nyquist mode.
    #[inline]
    pub fn d2(&self, a: usize, b: usize) -> C64 {
        if a == b {
            C64::new(self.d2[a], 0.0)
        } else {
            self.d1[a] * self.d1[b]
        }
    }

    /// Symbol of `∂_i = (∂_x - i∂_y)/2`.
    #[inline]
    pub fn holo(&self, i: usize) -> C64 {
        (self.d1[2 * i] - I * self.d1[2 * i + 1]) * 0.5
    }

    /// Symbol of `∂_{ī} = (∂_x + i∂_y)/2`.
    #[inline]
    pub fn antiholo(&self, j: usize) -> C64 {
        (self.d1[2 * j] + I * self.d1[2 * j + 1]) * 0.5
    }

    /// Symbol of `∂_i ∂_{j̄}`.
    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> C64 {
        let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        (self.d2(xi, xj) + I * self.d2(xi, yj) - I * self.d2(yi, xj) + self.d2(yi, yj)) * 0.25
    }

    /// Symbol of the flat Laplacian `Σ_i ∂_i ∂_{ī}`.
    pub fn flat_laplacian(&self, n: usize) -> f64 {
        (0..n).map(|i| self.hess(i, i).re).sum()
    }
}

/// Sum with fixed pairwise association, independent of thread schedule.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_sum_c(xs: &[C64]) -> C64 {
    if xs.len() <= 64 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_c(&xs[..mid]) + pairwise_sum_c(&xs[mid..])
}

/// A complex sample per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<C64>,
}

impl ScalarField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        Self::constant(grid, C64::new(0.0, 0.0))
    }

    pub fn constant(grid: &TorusGrid, c: C64) -> Self {
        Self {
            grid: *grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: &TorusGrid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid: *grid, values })
    }

    pub fn from_real(grid: &TorusGrid, values: &[f64]) -> Result<Self> {
        Self::from_values(grid, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    /// Sample `f` at every node; `f` receives the `2n` real coordinates.
    pub fn from_fn(grid: &TorusGrid, f: impl Fn(&[f64]) -> C64 + Sync + Send) -> Self {
        let m = 2 * grid.dim();
        let values = map_nodes(grid.len(), |idx| f(&grid.position(idx)[..m]));
        Self { grid: *grid, values }
    }

    pub fn from_real_fn(grid: &TorusGrid, f: impl Fn(&[f64]) -> f64 + Sync + Send) -> Self {
        Self::from_fn(grid, |x| C64::new(f(x), 0.0))
    }

    #[inline]
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[C64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    /// Drop imaginary parts.
    pub fn realified(&self) -> Self {
        self.map(|z| C64::new(z.re, 0.0))
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    /// Forward transform of the samples.
    pub fn spectrum(&self) -> Spectrum {
        let mut data = self.values.clone();
        self.grid.forward(&mut data);
        Spectrum {
            grid: self.grid,
            data,
        }
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b).expect("grid mismatch in field addition")
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b).expect("grid mismatch in field subtraction")
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a * b).expect("grid mismatch in field product")
    }
}

/// Fourier coefficients of a field (unnormalized DFT).
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: TorusGrid,
    data: Vec<C64>,
}

impl Spectrum {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn coefficients(&self) -> &[C64] {
        &self.data
    }

    /// Multiply by `symbol(wave)` and return to physical space.
    pub fn apply(&self, symbol: impl Fn(&Wave) -> C64 + Sync + Send) -> ScalarField {
        let grid = self.grid;
        let mut data = map_nodes(grid.len(), |k| self.data[k] * symbol(&grid.wave(k)));
        grid.inverse(&mut data);
        ScalarField { grid, values: data }
    }

    /// Divide by a symbol on nonzero modes and put `zero_mode` on the mean.
    /// Modes where the symbol is (numerically) zero are set to zero.
    pub fn solve(&self, symbol: impl Fn(&Wave) -> C64 + Sync + Send, zero_mode: C64) -> ScalarField {
        let grid = self.grid;
        let n = grid.len() as f64;
        let mut data = map_nodes(grid.len(), |k| {
            if k == 0 {
                return zero_mode * n;
            }
            let s = symbol(&grid.wave(k));
            if s.norm() < 1e-300 {
                C64::new(0.0, 0.0)
            } else {
                self.data[k] / s
            }
        });
        grid.inverse(&mut data);
        ScalarField { grid, values: data }
    }

    /// `Σ_k |f̂_k|² / N²`, equal to the mean of `|f|²` by Parseval.
    pub fn mean_square(&self) -> f64 {
        let n = self.grid.len() as f64;
        let sq: Vec<f64> = self.data.iter().map(|z| z.norm_sqr()).collect();
        pairwise_sum(&sq) / (n * n)
    }
}

/// Derivative along real coordinate `c`.
pub fn d_real(f: &ScalarField, c: usize) -> ScalarField {
    f.spectrum().apply(|w| w.d1(c))
}

/// `∂_i f`.
pub fn d_holo(f: &ScalarField, i: usize) -> ScalarField {
    f.spectrum().apply(|w| w.holo(i))
}

/// `∂_{j̄} f`.
pub fn d_antiholo(f: &ScalarField, j: usize) -> ScalarField {
    f.spectrum().apply(|w| w.antiholo(j))
}

/// All `∂_i f`, sharing one forward transform.
pub fn gradient_holo(f: &ScalarField) -> Vec<ScalarField> {
    let s = f.spectrum();
    (0..f.grid.dim()).map(|i| s.apply(|w| w.holo(i))).collect()
}

/// Pointwise matrices `[∂_i ∂_{j̄} u]`. Hermitian when `u` is real.
pub fn hessian_complex(u: &ScalarField) -> HermField {
    let s = u.spectrum();
    hessian_from_spectrum(&s)
}

pub(crate) fn hessian_from_spectrum(s: &Spectrum) -> HermField {
    let grid = s.grid;
    let n = grid.dim();
    let mut entries: Vec<Vec<ScalarField>> = Vec::with_capacity(n);
    for i in 0..n {
        let row = (0..n).map(|j| s.apply(|w| w.hess(i, j))).collect();
        entries.push(row);
    }
    HermField::from_entries(&grid, &entries)
}

/// `Δ_ω u = g^{ij̄} u_{ij̄}`.
pub fn laplacian(omega: &MetricField, u: &ScalarField) -> Result<ScalarField> {
    omega.grid.check_same(&u.grid)?;
    let hess = hessian_complex(u);
    let values = map_nodes(u.len(), |k| {
        omega.upper_at(k).contract(&hess.values[k])
    });
    Ok(ScalarField {
        grid: u.grid,
        values,
    })
}

pub fn mean(f: &ScalarField) -> C64 {
    pairwise_sum_c(&f.values) / f.len() as f64
}

pub fn mean_real(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

pub fn sup_norm(f: &ScalarField) -> f64 {
    f.values.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn sup_norm_real(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `|∇f|²_g = g^{ij̄} ∂_i f \overline{∂_j f}`.
pub fn grad_norm_sq(omega: &MetricField, f: &ScalarField) -> Result<ScalarField> {
    omega.grid.check_same(&f.grid)?;
    let grad = gradient_holo(f);
    let n = f.grid.dim();
    let values = map_nodes(f.len(), |k| {
        let up = omega.upper_at(k);
        let mut s = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                s += up[(i, j)] * grad[i].values[k] * grad[j].values[k].conj();
            }
        }
        C64::new(s.re, 0.0)
    });
    Ok(ScalarField {
        grid: f.grid,
        values,
    })
}

/// An `n×n` matrix per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct HermField {
    grid: TorusGrid,
    values: Vec<HermMatrix>,
}

impl HermField {
    pub fn from_values(grid: &TorusGrid, values: Vec<HermMatrix>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} matrices for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(m) = values.iter().find(|m| m.dim() != grid.dim()) {
            return Err(Error::DimensionMismatch(format!(
                "matrix of size {} on a dimension-{} grid",
                m.dim(),
                grid.dim()
            )));
        }
        Ok(Self { grid: *grid, values })
    }

    pub fn constant(grid: &TorusGrid, m: HermMatrix) -> Self {
        assert_eq!(m.dim(), grid.dim());
        Self {
            grid: *grid,
            values: vec![m; grid.len()],
        }
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self::constant(grid, HermMatrix::zeros(grid.dim()))
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(&[f64]) -> HermMatrix + Sync + Send) -> Self {
        let m = 2 * grid.dim();
        let values = map_nodes(grid.len(), |idx| f(&grid.position(idx)[..m]));
        Self { grid: *grid, values }
    }

    /// Assemble from per-entry scalar fields `entries[i][j]`.
    pub fn from_entries(grid: &TorusGrid, entries: &[Vec<ScalarField>]) -> Self {
        let n = grid.dim();
        let values = map_nodes(grid.len(), |k| {
            HermMatrix::from_fn(n, |i, j| entries[i][j].values[k])
        });
        Self { grid: *grid, values }
    }

    pub(crate) fn from_nodes(grid: &TorusGrid, f: impl Fn(usize) -> HermMatrix + Sync + Send) -> Self {
        Self {
            grid: *grid,
            values: map_nodes(grid.len(), f),
        }
    }

    #[inline]
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    #[inline]
    pub fn at(&self, idx: usize) -> &HermMatrix {
        &self.values[idx]
    }

    pub fn values(&self) -> &[HermMatrix] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn entry(&self, i: usize, j: usize) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|m| m[(i, j)]).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(&HermMatrix) -> HermMatrix + Sync + Send) -> Self {
        Self {
            grid: self.grid,
            values: map_nodes(self.len(), |k| f(&self.values[k])),
        }
    }

    pub fn zip_map(
        &self,
        other: &Self,
        f: impl Fn(&HermMatrix, &HermMatrix) -> HermMatrix + Sync + Send,
    ) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: map_nodes(self.len(), |k| f(&self.values[k], &other.values[k])),
        })
    }

    /// Largest entry modulus over all nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, a| m.max(a.max_abs()))
    }

    /// `sup |self - other|` entrywise.
    pub fn max_diff(&self, other: &Self) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((*a - *b).max_abs())))
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.values.iter().fold(0.0, |m, a| m.max(a.hermitian_defect()))
    }

    /// Nodes where the matrix is not positive definite.
    pub fn non_positive_nodes(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.is_positive_definite())
            .map(|(k, _)| k)
            .collect()
    }

    /// Componentwise derivative along real coordinate `c`.
    pub fn d_real(&self, c: usize) -> HermField {
        self.entrywise(|f| d_real(f, c))
    }

    pub fn d_holo(&self, i: usize) -> HermField {
        self.entrywise(|f| d_holo(f, i))
    }

    pub fn d_antiholo(&self, j: usize) -> HermField {
        self.entrywise(|f| d_antiholo(f, j))
    }

    fn entrywise(&self, f: impl Fn(&ScalarField) -> ScalarField) -> HermField {
        let n = self.dim();
        let entries: Vec<Vec<ScalarField>> = (0..n)
            .map(|i| (0..n).map(|j| f(&self.entry(i, j))).collect())
            .collect();
        HermField::from_entries(&self.grid, &entries)
    }

    pub fn into_metric(self) -> Result<MetricField> {
        MetricField::new(self)
    }
}

/// A field of positive-definite Hermitian matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricField {
    field: HermField,
}

impl MetricField {
    /// Validates Hermitian symmetry and positivity at every node.
    pub fn new(field: HermField) -> Result<Self> {
        for (k, m) in field.values.iter().enumerate() {
            let scale = m.max_abs().max(1.0);
            if !(m.hermitian_defect() <= 1e-10 * scale) || !m.is_positive_definite() {
                return Err(Error::NotPositive { node: k });
            }
        }
        Ok(Self { field })
    }

    pub fn constant(grid: &TorusGrid, m: HermMatrix) -> Result<Self> {
        Self::new(HermField::constant(grid, m))
    }

    pub fn identity(grid: &TorusGrid) -> Self {
        Self {
            field: HermField::constant(grid, HermMatrix::identity(grid.dim())),
        }
    }

    pub fn field(&self) -> &HermField {
        &self.field
    }

    pub fn into_field(self) -> HermField {
        self.field
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.field.grid
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn len(&self) -> usize {
        self.field.len()
    }

    pub fn is_empty(&self) -> bool {
        self.field.is_empty()
    }

    #[inline]
    pub fn at(&self, idx: usize) -> &HermMatrix {
        &self.field.values[idx]
    }

    /// `g^{ij̄}` at a node, arranged for elementwise contraction.
    #[inline]
    pub fn upper_at(&self, idx: usize) -> HermMatrix {
        self.field.values[idx].upper().expect("metric field holds a singular matrix")
    }

    pub fn log_det(&self) -> Vec<f64> {
        self.field.values.iter().map(|m| Float::ln(m.det().re)).collect()
    }

    /// Pointwise `e^{s} g`.
    pub fn conformal(&self, sigma: &ScalarField) -> Result<MetricField> {
        self.field.grid.check_same(sigma.grid())?;
        let values = self
            .field
            .values
            .iter()
            .zip(sigma.values())
            .map(|(m, s)| m.scale(Float::exp(s.re)))
            .collect();
        MetricField::new(HermField::from_values(self.grid(), values)?)
    }
}

impl core::ops::Deref for MetricField {
    type Target = HermField;
    fn deref(&self) -> &HermField {
        &self.field
    }
}
