//! Exact Gaussian laws of linear mean-field models.
//!
//! For `dX = (F X + G E[X]) dt + noise` with noise covariance rate `D`, the law
//! stays Gaussian: the mean solves `ṁ = (F + G) m` and the covariance solves
//! `Σ̇ = F Σ + Σ Fᵀ + D`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{lyapunov_solve, matrix_exp, max_abs, SymMatrix};
use crate::measure::GaussianLaw;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianSystem {
    /// Spatial drift matrix.
    pub f: DMatrix<f64>,
    /// Mean-coupling matrix.
    pub g: DMatrix<f64>,
    /// Noise covariance rate.
    pub d: DMatrix<f64>,
}

impl LinearGaussianSystem {
    pub fn new(f: DMatrix<f64>, g: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = f.nrows();
        if !f.is_square() || g.shape() != (n, n) || d.shape() != (n, n) {
            return Err(Error::DimensionMismatch("F, G, D must be square of equal size".into()));
        }
        Ok(Self { f, g, d })
    }

    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn mean_at(&self, m0: &DVector<f64>, t: f64) -> DVector<f64> {
        matrix_exp(&(&self.f + &self.g), t) * m0
    }

    /// Covariance at `t` by the block-exponential (Van Loan) formula.
    pub fn cov_at(&self, s0: &SymMatrix, t: f64) -> SymMatrix {
        let n = self.dim();
        let mut c = DMatrix::zeros(2 * n, 2 * n);
        c.view_mut((0, 0), (n, n)).copy_from(&(-&self.f));
        c.view_mut((0, n), (n, n)).copy_from(&self.d);
        c.view_mut((n, n), (n, n)).copy_from(&self.f.transpose());
        let e = matrix_exp(&c, t);
        let e22 = e.view((n, n), (n, n)).into_owned();
        let e12 = e.view((0, n), (n, n)).into_owned();
        let phi = e22.transpose();
        let forced = &phi * e12;
        SymMatrix::symmetrized(&phi * s0.matrix() * phi.transpose() + forced)
    }

    pub fn propagate(&self, law0: &GaussianLaw, t: f64) -> GaussianLaw {
        GaussianLaw { mean: self.mean_at(&law0.mean, t), cov: self.cov_at(&law0.cov, t) }
    }

    /// Same as [`propagate`](Self::propagate) but by classical RK4 with step
    /// doubling until successive results agree to `tol` relative.
    pub fn propagate_rk4(&self, law0: &GaussianLaw, t: f64, tol: f64) -> Result<GaussianLaw> {
        let mut steps = 16usize;
        let mut prev = self.rk4_fixed(law0, t, steps);
        for _ in 0..16 {
            steps *= 2;
            let next = self.rk4_fixed(law0, t, steps);
            let scale = max_abs(next.cov.matrix()).max(next.mean.amax()).max(1e-300);
            let diff = max_abs(&(next.cov.matrix() - prev.cov.matrix())).max((&next.mean - &prev.mean).amax());
            if diff <= tol * scale {
                return Ok(next);
            }
            prev = next;
        }
        Err(Error::NotConverged { statistic: t, floor: tol })
    }

    fn rk4_fixed(&self, law0: &GaussianLaw, t: f64, steps: usize) -> GaussianLaw {
        let h = t / steps as f64;
        let fg = &self.f + &self.g;
        let mut m = law0.mean.clone();
        let mut s = law0.cov.matrix().clone();
        let dm = |m: &DVector<f64>| &fg * m;
        let ds = |s: &DMatrix<f64>| &self.f * s + s * self.f.transpose() + &self.d;
        for _ in 0..steps {
            let k1 = dm(&m);
            let k2 = dm(&(&m + &k1 * (h / 2.0)));
            let k3 = dm(&(&m + &k2 * (h / 2.0)));
            let k4 = dm(&(&m + &k3 * h));
            m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            let l1 = ds(&s);
            let l2 = ds(&(&s + &l1 * (h / 2.0)));
            let l3 = ds(&(&s + &l2 * (h / 2.0)));
            let l4 = ds(&(&s + &l3 * h));
            s += (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
        }
        GaussianLaw { mean: m, cov: SymMatrix::symmetrized(s) }
    }

    /// Invariant law, requiring `F` and `F + G` Hurwitz.
    pub fn stationary(&self) -> Result<GaussianLaw> {
        let fg = &self.f + &self.g;
        let hurwitz = |a: &DMatrix<f64>| a.complex_eigenvalues().iter().all(|z| z.re < 0.0);
        if !hurwitz(&self.f) || !hurwitz(&fg) {
            return Err(Error::ParameterOutOfRange("drift is not Hurwitz".into()));
        }
        Ok(GaussianLaw { mean: DVector::zeros(self.dim()), cov: lyapunov_solve(&self.f, &self.d)? })
    }
}

/// Law at `t` of `dX = (B X + C E[X]) dt + λ dW + Σ dW~` from `N(m0, Σ0)`.
#[allow(clippy::too_many_arguments)]
pub fn linear_closed_form(
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    lambda: f64,
    m0: &DVector<f64>,
    s0: &SymMatrix,
    t: f64,
) -> Result<GaussianLaw> {
    let n = b.nrows();
    let d = DMatrix::identity(n, n) * (lambda * lambda) + sigma * sigma.transpose();
    let sys = LinearGaussianSystem::new(b.clone(), c.clone(), d)?;
    Ok(sys.propagate(&GaussianLaw::new(m0.clone(), s0.clone())?, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_law() {
        let z = DMatrix::zeros(2, 2);
        let m0 = DVector::from_vec(vec![1.0, -2.0]);
        let s0 = SymMatrix::from_diagonal(&[0.5, 2.0]);
        let g = linear_closed_form(&z, &z, &z, 0.0, &m0, &s0, 3.0).unwrap();
        assert_eq!(g.mean, m0);
        assert!(max_abs(&(g.cov.matrix() - s0.matrix())) < 1e-15);
    }

    #[test]
    fn ou_reaches_half_identity() {
        let b = -DMatrix::identity(2, 2);
        let z = DMatrix::zeros(2, 2);
        let g = linear_closed_form(&b, &z, &z, 1.0, &DVector::zeros(2), &SymMatrix::zeros(2), 40.0).unwrap();
        assert!(max_abs(&(g.cov.matrix() - DMatrix::identity(2, 2) * 0.5)) < 1e-12);
    }

    #[test]
    fn exact_matches_rk4() {
        let f = DMatrix::from_row_slice(3, 3, &[-0.5, 1.0, 0.0, 0.0, -0.5, 1.0, -1.0, -2.0, -2.0]);
        let mut g = DMatrix::zeros(3, 3);
        g[(2, 2)] = 0.2;
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 2.0]));
        let sys = LinearGaussianSystem::new(f, g, d).unwrap();
        let law0 = GaussianLaw::dirac(&[1.0, 0.5, -0.3]);
        for &t in &[0.05, 0.3, 1.0] {
            let a = sys.propagate(&law0, t);
            let b = sys.propagate_rk4(&law0, t, 1e-10).unwrap();
            assert!((&a.mean - &b.mean).amax() < 1e-9);
            assert!(max_abs(&(a.cov.matrix() - b.cov.matrix())) < 1e-9 * max_abs(a.cov.matrix()));
        }
    }

    #[test]
    fn mean_decay_with_mean_coupling() {
        let b = DMatrix::zeros(1, 1);
        let c = -DMatrix::identity(1, 1);
        let z = DMatrix::zeros(1, 1);
        let g = linear_closed_form(&b, &c, &z, 1.0, &DVector::from_vec(vec![2.0]), &SymMatrix::zeros(1), 1.5).unwrap();
        assert!((g.mean[0] - 2.0 * (-1.5f64).exp()).abs() < 1e-14);
        // B = 0 so the covariance grows linearly
        assert!((g.cov.matrix()[(0, 0)] - 1.5).abs() < 1e-13);
    }
}
