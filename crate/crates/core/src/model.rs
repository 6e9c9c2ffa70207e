//! Coefficient oracles of a mean-field model.

use nalgebra::DMatrix;

use crate::linalg::HamiltonianStructure;
use crate::measure::EmpiricalMeasure;

/// Rank-3 tensor stored as `[row][col][depth]`; used for `D^I σ~(μ)(y)`
/// with depth indexing the tangent direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub rows: usize,
    pub cols: usize,
    pub depth: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(rows: usize, cols: usize, depth: usize) -> Self {
        Self { rows, cols, depth, data: vec![0.0; rows * cols * depth] }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.cols + b) * self.depth + c]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.cols + b) * self.depth + c] = v;
    }

    /// Contraction over the depth index: `Σ_c T[·][·][c] v_c`.
    pub fn contract(&self, v: &[f64]) -> DMatrix<f64> {
        assert_eq!(v.len(), self.depth);
        DMatrix::from_fn(self.rows, self.cols, |a, b| (0..self.depth).map(|c| self.get(a, b, c) * v[c]).sum())
    }
}

/// A distribution-dependent SDE with measure-only noise.
///
/// States live in `ℝ^n` with `n = dim()`. The drift and both noises act on
/// the last `d = noise_dim()` coordinates; for non-degenerate models `n = d`.
/// With a Hamiltonian structure the first `m = n − d` coordinates move by
/// `ẋ⁽¹⁾ = A x⁽¹⁾ + M x⁽²⁾`.
pub trait MeanFieldModel: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn noise_dim(&self) -> usize;

    /// Constant non-degenerate noise level `λ`.
    fn lambda(&self) -> f64;

    fn structure(&self) -> Option<&HamiltonianStructure> {
        None
    }

    /// `b(t, x, μ) ∈ ℝ^d`.
    fn drift(&self, t: f64, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]);

    /// `σ~(t, μ)`, `d × d`.
    fn sigma_tilde(&self, t: f64, mu: &EmpiricalMeasure) -> DMatrix<f64>;

    /// `∇_v b(t, ·, μ)(x) ∈ ℝ^d` for `v ∈ ℝ^n`.
    fn grad_x_drift(&self, t: f64, x: &[f64], mu: &EmpiricalMeasure, v: &[f64], out: &mut [f64]);

    /// Kernel `D^I b(t, x, ·)(μ)(y)`, `d × n`.
    fn lions_drift(&self, t: f64, x: &[f64], mu: &EmpiricalMeasure, y: &[f64]) -> DMatrix<f64>;

    /// Kernel `D^I σ~(t, μ)(y)`, `d × d × n`.
    fn lions_sigma(&self, t: f64, mu: &EmpiricalMeasure, y: &[f64]) -> Tensor3;

    /// `mean_j D^I b(t, x, ·)(μ)(x_j) v_j` over the particles of `mu` with
    /// tangents `v` (row-major, same order). `v_mean` is the mean tangent,
    /// which lets kernels constant in `y` skip the loop.
    fn lions_drift_mean(
        &self,
        t: f64,
        x: &[f64],
        mu: &EmpiricalMeasure,
        v: &[f64],
        v_mean: &[f64],
        out: &mut [f64],
    ) {
        let _ = v_mean;
        let n = self.dim();
        let count = mu.len();
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..count {
            let k = self.lions_drift(t, x, mu, mu.point(j));
            let vj = &v[j * n..(j + 1) * n];
            for (a, o) in out.iter_mut().enumerate() {
                *o += (0..n).map(|c| k[(a, c)] * vj[c]).sum::<f64>();
            }
        }
        out.iter_mut().for_each(|o| *o /= count as f64);
    }

    /// `mean_j D^I σ~(t, μ)(x_j) · v_j`, a `d × d` matrix.
    fn lions_sigma_mean(&self, t: f64, mu: &EmpiricalMeasure, v: &[f64], v_mean: &[f64]) -> DMatrix<f64> {
        let _ = v_mean;
        let n = self.dim();
        let d = self.noise_dim();
        let count = mu.len();
        let mut acc = DMatrix::zeros(d, d);
        for j in 0..count {
            acc += self.lions_sigma(t, mu, mu.point(j)).contract(&v[j * n..(j + 1) * n]);
        }
        acc / count as f64
    }

    /// Spatial Lipschitz constant of the drift, if known.
    fn drift_lipschitz(&self) -> Option<f64> {
        None
    }
}

/// `b(t, x, μ)` into a fresh vector.
pub fn drift_vec(model: &dyn MeanFieldModel, t: f64, x: &[f64], mu: &EmpiricalMeasure) -> Vec<f64> {
    let mut out = vec![0.0; model.noise_dim()];
    model.drift(t, x, mu, &mut out);
    out
}

/// Offset of the noisy block inside a state vector.
pub fn block_offset(model: &dyn MeanFieldModel) -> usize {
    model.dim() - model.noise_dim()
}
