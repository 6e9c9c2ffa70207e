//! Dense kernels: PSD square roots, noise decomposition, Padé matrix
//! exponential, Kalman rank index and the weighted controllability Gramian.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::stats::{linear_fit, LinearFit};

/// Eigenvalues above `-TOL_EIG` are treated as zero when clipping.
pub const TOL_EIG: f64 = 1e-10;

/// Symmetric matrix, stored exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Accepts `a` if it is symmetric up to a relative 1e-10 and stores the
    /// exact symmetrization.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "expected square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let scale = max_abs(&a).max(1.0);
        let asym = max_abs(&(&a - a.transpose()));
        if asym > 1e-10 * scale {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self::symmetrized(a))
    }

    /// Stores `(a + aᵀ)/2` without checking.
    pub fn symmetrized(a: DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut s = a;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Self(s)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn spectral_apply(a: &SymMatrix, f: impl Fn(f64) -> f64) -> SymMatrix {
    let eig = SymmetricEigen::new(a.0.clone());
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    SymMatrix::symmetrized(v * d * v.transpose())
}

/// Principal square root of a PSD matrix.
pub fn psd_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    let lmin = a.min_eigenvalue();
    if lmin < -TOL_EIG {
        return Err(Error::NegativeEigenvalue(lmin));
    }
    Ok(spectral_apply(a, |x| x.max(0.0).sqrt()))
}

/// `σ~ = sqrt(a - λ² I)`.
pub fn decompose_noise(a: &SymMatrix, lambda: f64) -> Result<SymMatrix> {
    let n = a.n();
    let shifted = SymMatrix::symmetrized(a.matrix() - DMatrix::identity(n, n) * (lambda * lambda));
    let lmin = shifted.min_eigenvalue();
    if lmin < -TOL_EIG {
        return Err(Error::EllipticityViolated { lambda_min: lmin + lambda * lambda, lambda_sq: lambda * lambda });
    }
    Ok(spectral_apply(&shifted, |x| x.max(0.0).sqrt()))
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols()).map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] =
    [17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0, 2162160.0, 110880.0, 3960.0, 90.0, 1.0];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut pow = DMatrix::identity(n, n);
    let mut u = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for k in 0..b.len() / 2 {
        v += &pow * b[2 * k];
        u += &pow * b[2 * k + 1];
        pow = &pow * &a2;
    }
    (a * u, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    (u, v)
}

/// `e^{tA}` by scaling and squaring with a diagonal Padé approximant.
pub fn matrix_exp(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let at = a * t;
    let norm = one_norm(&at);
    if norm == 0.0 {
        return DMatrix::identity(n, n);
    }
    let solve = |u: DMatrix<f64>, v: DMatrix<f64>| -> DMatrix<f64> {
        let p = &v + &u;
        let q = &v - &u;
        q.lu().solve(&p).expect("Padé denominator is nonsingular within its theta range")
    };
    for &(deg, theta) in THETA.iter() {
        if norm <= theta {
            let b: &[f64] = match deg {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(&at, b);
            return solve(u, v);
        }
    }
    let s = ((norm / THETA13).log2().ceil()).max(0.0) as i32;
    let scaled = &at * 2f64.powi(-s);
    let (u, v) = pade13(&scaled);
    let mut r = solve(u, v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Numerical rank with relative singular-value cutoff.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0f64, |m, v| m.max(*v));
    if smax == 0.0 {
        return 0;
    }
    let tol = smax * 1e-10 * a.nrows().max(a.ncols()) as f64;
    sv.iter().filter(|s| **s > tol).count()
}

/// Minimal `l` with `rank[M, AM, …, A^{l-1}M] = m`, or `None` if `l = m`
/// still falls short.
pub fn kalman_rank_index(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Option<usize> {
    let dim = a.nrows();
    let d = m.ncols();
    let mut blocks = DMatrix::zeros(dim, 0);
    let mut power = m.clone();
    for l in 1..=dim {
        let cols = blocks.ncols();
        blocks = blocks.insert_columns(cols, d, 0.0);
        blocks.view_mut((0, cols), (dim, d)).copy_from(&power);
        if numerical_rank(&blocks) == dim {
            return Some(l);
        }
        power = a * power;
    }
    None
}

/// Structure `(A, M, l)` of a stochastic Hamiltonian system.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianStructure {
    pub a: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub l: usize,
}

impl HamiltonianStructure {
    /// Validates shapes and computes the minimal rank index.
    pub fn new(a: DMatrix<f64>, m: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() != m.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, M is {}x{}",
                a.nrows(),
                a.ncols(),
                m.nrows(),
                m.ncols()
            )));
        }
        let l = kalman_rank_index(&a, &m).ok_or(Error::RankConditionFails)?;
        Ok(Self { a, m, l })
    }

    /// Dimension of the degenerate block.
    pub fn m_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Dimension of the noisy block.
    pub fn d_dim(&self) -> usize {
        self.m.ncols()
    }

    pub fn gramian(&self, t: f64) -> Result<SymMatrix> {
        gramian(&self.a, &self.m, t)
    }
}

fn gramian_integrand(a: &DMatrix<f64>, mmt: &DMatrix<f64>, t: f64, s: f64) -> DMatrix<f64> {
    let w = s * (t - s) / (t * t);
    if w == 0.0 {
        return DMatrix::zeros(a.nrows(), a.nrows());
    }
    let e = matrix_exp(a, -s);
    (&e * mmt * e.transpose()) * w
}

struct Simpson<'a> {
    f: &'a dyn Fn(f64) -> DMatrix<f64>,
    abs_tol: f64,
    evals: usize,
}

impl Simpson<'_> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &mut self,
        a: f64,
        b: f64,
        fa: &DMatrix<f64>,
        fm: &DMatrix<f64>,
        fb: &DMatrix<f64>,
        whole: DMatrix<f64>,
        tol: f64,
        depth: u32,
    ) -> Result<DMatrix<f64>> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = (self.f)(lm);
        let frm = (self.f)(rm);
        self.evals += 2;
        let h = b - a;
        let left = (fa + &flm * 4.0 + fm) * (h / 12.0);
        let right = (fm + &frm * 4.0 + fb) * (h / 12.0);
        let sum = &left + &right;
        let err = max_abs(&(&sum - &whole));
        if err <= 15.0 * tol || tol < self.abs_tol * 1e-6 {
            return Ok(&sum + (&sum - &whole) / 15.0);
        }
        if depth == 0 {
            return Err(Error::QuadratureNotConverged(err));
        }
        let l = self.recurse(a, m, fa, &flm, fm, left, 0.5 * tol, depth - 1)?;
        let r = self.recurse(m, b, fm, &frm, fb, right, 0.5 * tol, depth - 1)?;
        Ok(l + r)
    }
}

/// Adaptive Simpson for a matrix-valued integrand with relative tolerance
/// `rel_tol` measured against the max-norm of a coarse estimate.
pub fn integrate_matrix(
    f: &dyn Fn(f64) -> DMatrix<f64>,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<DMatrix<f64>> {
    const PANELS: usize = 8;
    let h = (b - a) / PANELS as f64;
    let nodes: Vec<DMatrix<f64>> = (0..=2 * PANELS).map(|k| f(a + 0.5 * h * k as f64)).collect();
    let mut coarse = DMatrix::zeros(nodes[0].nrows(), nodes[0].ncols());
    let mut panels = Vec::with_capacity(PANELS);
    for p in 0..PANELS {
        let s = (&nodes[2 * p] + &nodes[2 * p + 1] * 4.0 + &nodes[2 * p + 2]) * (h / 6.0);
        coarse += &s;
        panels.push(s);
    }
    let scale = max_abs(&coarse);
    if scale == 0.0 {
        return Ok(coarse);
    }
    let abs_tol = rel_tol * scale;
    let mut sim = Simpson { f, abs_tol, evals: 0 };
    let mut total = DMatrix::zeros(coarse.nrows(), coarse.ncols());
    for (p, whole) in panels.into_iter().enumerate() {
        let lo = a + h * p as f64;
        let piece = sim.recurse(
            lo,
            lo + h,
            &nodes[2 * p],
            &nodes[2 * p + 1],
            &nodes[2 * p + 2],
            whole,
            abs_tol / PANELS as f64,
            48,
        )?;
        total += piece;
    }
    Ok(total)
}

/// `Q_t = ∫_0^t s(t-s)/t² e^{-sA} M Mᵀ e^{-sAᵀ} ds`.
pub fn gramian(a: &DMatrix<f64>, m: &DMatrix<f64>, t: f64) -> Result<SymMatrix> {
    if !(t > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("gramian needs t > 0, got {t}")));
    }
    let mmt = m * m.transpose();
    let f = |s: f64| gramian_integrand(a, &mmt, t, s);
    let q = integrate_matrix(&f, 0.0, t, 1e-9)?;
    Ok(SymMatrix::symmetrized(q))
}

/// Cholesky factor of a Gramian, used for `Q^{-1} v` solves.
#[derive(Debug, Clone)]
pub struct GramianSolver {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    pub inverse_norm: f64,
}

impl GramianSolver {
    pub fn new(q: &SymMatrix, t: f64) -> Result<Self> {
        let ev = q.eigenvalues();
        let lmin = ev[0];
        let lmax = *ev.last().unwrap();
        if !(lmin > 1e-14 * lmax.max(f64::MIN_POSITIVE)) {
            return Err(Error::SingularGramian(t));
        }
        let chol = nalgebra::Cholesky::new(q.matrix().clone()).ok_or(Error::SingularGramian(t))?;
        Ok(Self { chol, inverse_norm: 1.0 / lmin })
    }

    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }
}

/// `‖Q_t^{-1}‖` (spectral norm) over a grid and the log-log slope.
#[derive(Debug, Clone)]
pub struct GramianScaling {
    pub t: Vec<f64>,
    pub inverse_norm: Vec<f64>,
    pub fit: LinearFit,
    /// `1 - 2l`.
    pub expected_slope: f64,
}

pub fn gramian_inverse_norm_slope(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    l: usize,
    t_grid: &[f64],
) -> Result<GramianScaling> {
    if kalman_rank_index(a, m).is_none() {
        return Err(Error::RankConditionFails);
    }
    let mut inv = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let q = gramian(a, m, t)?;
        inv.push(GramianSolver::new(&q, t)?.inverse_norm);
    }
    let lx: Vec<f64> = t_grid.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = inv.iter().map(|v| v.ln()).collect();
    Ok(GramianScaling {
        t: t_grid.to_vec(),
        inverse_norm: inv,
        fit: linear_fit(&lx, &ly),
        expected_slope: 1.0 - 2.0 * l as f64,
    })
}

/// Solves `F Σ + Σ Fᵀ + D = 0` for Hurwitz `F`.
pub fn lyapunov_solve(f: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<SymMatrix> {
    let n = f.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let k = id.kronecker(f) + f.kronecker(&id);
    let rhs = -DVector::from_column_slice(d.as_slice());
    let x = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::ParameterOutOfRange("Lyapunov operator is singular".into()))?;
    Ok(SymMatrix::symmetrized(DMatrix::from_column_slice(n, n, x.as_slice())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_diag() {
        let r = psd_sqrt(&SymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert!(max_abs(&(r.matrix() - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])))) < 1e-14);
        let i = psd_sqrt(&SymMatrix::identity(2)).unwrap();
        assert!(max_abs(&(i.matrix() - DMatrix::identity(2, 2))) < 1e-14);
    }

    #[test]
    fn sqrt_rejects_negative() {
        let e = psd_sqrt(&SymMatrix::from_diagonal(&[1.0, -1e-6])).unwrap_err();
        assert!(matches!(e, Error::NegativeEigenvalue(_)));
        assert!(psd_sqrt(&SymMatrix::from_diagonal(&[1.0, -1e-12])).is_ok());
    }

    #[test]
    fn not_symmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(SymMatrix::new(a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn decompose_examples() {
        let s = decompose_noise(&SymMatrix::identity(2).scale(4.0), 1.0).unwrap();
        assert!(max_abs(&(s.matrix() - DMatrix::identity(2, 2) * 3f64.sqrt())) < 1e-14);
        let z = decompose_noise(&SymMatrix::identity(3).scale(2.25), 1.5).unwrap();
        assert!(max_abs(z.matrix()) < 1e-7);
        let d = decompose_noise(&SymMatrix::from_diagonal(&[2.0, 5.0]), 1.0).unwrap();
        assert!(max_abs(&(d.matrix() - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])))) < 1e-14);
        assert!(matches!(
            decompose_noise(&SymMatrix::identity(2), 2.0),
            Err(Error::EllipticityViolated { .. })
        ));
    }

    #[test]
    fn exp_nilpotent_and_zero() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(matrix_exp(&z, 2.0), DMatrix::identity(3, 3));
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        for &t in &[0.01, 1.0, 7.5] {
            let e = matrix_exp(&a, t);
            let exact = DMatrix::identity(2, 2) + &a * t;
            assert!(max_abs(&(e - exact)) < 1e-12 * t.max(1.0));
        }
    }

    #[test]
    fn exp_matches_scalar_and_rotation() {
        let a = DMatrix::from_row_slice(1, 1, &[-3.0]);
        assert!((matrix_exp(&a, 4.0)[(0, 0)] - (-12f64).exp()).abs() < 1e-18);
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let e = matrix_exp(&r, 10.0);
        assert!((e[(0, 0)] - 10f64.cos()).abs() < 1e-12);
        assert!((e[(1, 0)] - 10f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn rank_index_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let m = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(kalman_rank_index(&a, &m), Some(2));
        assert_eq!(kalman_rank_index(&a, &DMatrix::identity(2, 2)), Some(1));
        assert_eq!(kalman_rank_index(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 1)), None);
    }

    #[test]
    fn gramian_scalar_closed_form() {
        let a = DMatrix::zeros(1, 1);
        let m = DMatrix::from_element(1, 1, 1.0);
        for &t in &[0.1, 1.0, 3.0] {
            let q = gramian(&a, &m, t).unwrap();
            assert!((q.matrix()[(0, 0)] - t / 6.0).abs() < 1e-14);
        }
        let z = gramian(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 1), 1.0).unwrap();
        assert_eq!(max_abs(z.matrix()), 0.0);
    }

    #[test]
    fn gramian_kinetic_vs_trapezoid() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let m = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let q = gramian(&a, &m, 1.0).unwrap();
        // e^{-sA}M = (-s, 1); integrand s(1-s)[[s², -s], [-s, 1]]
        let n = 1_000_000;
        let h = 1.0 / n as f64;
        let mut acc = [0.0f64; 3];
        for k in 0..=n {
            let s = k as f64 * h;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 } * s * (1.0 - s) * h;
            acc[0] += w * s * s;
            acc[1] += -w * s;
            acc[2] += w;
        }
        assert!((q.matrix()[(0, 0)] - acc[0]).abs() < 1e-8);
        assert!((q.matrix()[(0, 1)] - acc[1]).abs() < 1e-8);
        assert!((q.matrix()[(1, 1)] - acc[2]).abs() < 1e-8);
    }

    #[test]
    fn inverse_norm_slope_identity() {
        let a = DMatrix::zeros(2, 2);
        let m = DMatrix::identity(2, 2);
        let grid: Vec<f64> = (1..=8).map(|k| 2f64.powi(-k)).collect();
        let s = gramian_inverse_norm_slope(&a, &m, 1, &grid).unwrap();
        for (t, v) in s.t.iter().zip(&s.inverse_norm) {
            assert!((v - 6.0 / t).abs() <= 1e-8 * (6.0 / t));
        }
        assert!((s.fit.slope + 1.0).abs() < 1e-10);
    }

    #[test]
    fn lyapunov_ou() {
        let f = DMatrix::identity(2, 2) * -1.0;
        let s = lyapunov_solve(&f, &DMatrix::identity(2, 2)).unwrap();
        assert!(max_abs(&(s.matrix() - DMatrix::identity(2, 2) * 0.5)) < 1e-14);
    }
}
