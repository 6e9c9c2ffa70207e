//! Empirical measures, exact small-scale optimal transport, Gaussian laws and
//! relative-entropy estimators.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, SymMatrix};
use crate::rng::{CounterRng, Stream};
use crate::stats::pairwise_sum;

/// Weighted point cloud. Points are stored row-major, `len × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<f64>,
    dim: usize,
    weights: Option<Vec<f64>>,
    mean: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn uniform(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::InvalidMeasure(format!("{} coordinates do not form points of dim {dim}", points.len())));
        }
        let mean = column_means(&points, dim, None);
        Ok(Self { points, dim, weights: None, mean })
    }

    pub fn weighted(points: Vec<f64>, dim: usize, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() != weights.len() * dim {
            return Err(Error::InvalidMeasure("weights and points disagree in length".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidMeasure("negative weight".into()));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
        }
        let mean = column_means(&points, dim, Some(&weights));
        Ok(Self { points, dim, weights: Some(weights), mean })
    }

    pub fn dirac(x: &[f64]) -> Self {
        Self { points: x.to_vec(), dim: x.len(), weights: None, mean: x.to_vec() }
    }

    /// `n` copies of `x`, useful as a particle initialization.
    pub fn repeated(x: &[f64], n: usize) -> Self {
        let mut points = Vec::with_capacity(n * x.len());
        for _ in 0..n {
            points.extend_from_slice(x);
        }
        Self { points, dim: x.len(), weights: None, mean: x.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.is_none()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Applies `x ↦ x + eps φ(x)` to every point.
    pub fn pushforward(&self, eps: f64, phi: &dyn Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut pts = self.points.clone();
        for row in pts.chunks_mut(self.dim) {
            let v = phi(row);
            for (p, dv) in row.iter_mut().zip(&v) {
                *p += eps * dv;
            }
        }
        match &self.weights {
            None => Self::uniform(pts, self.dim).expect("shape preserved"),
            Some(w) => Self::weighted(pts, self.dim, w.clone()).expect("shape preserved"),
        }
    }

    /// Second moment `∫|x|² dμ`.
    pub fn second_moment(&self) -> f64 {
        let n = self.len();
        let sq: Vec<f64> = (0..n)
            .map(|i| {
                let w = self.weights.as_ref().map_or(1.0 / n as f64, |w| w[i]);
                w * self.point(i).iter().map(|v| v * v).sum::<f64>()
            })
            .collect();
        pairwise_sum(&sq)
    }
}

fn column_means(points: &[f64], dim: usize, weights: Option<&[f64]>) -> Vec<f64> {
    let n = points.len() / dim;
    (0..dim)
        .map(|c| {
            let col: Vec<f64> = match weights {
                None => (0..n).map(|i| points[i * dim + c]).collect(),
                Some(w) => (0..n).map(|i| w[i] * points[i * dim + c]).collect(),
            };
            let s = pairwise_sum(&col);
            if weights.is_some() {
                s
            } else {
                s / n as f64
            }
        })
        .collect()
}

/// Minimum-cost perfect matching for a square cost matrix (row-major).
/// Returns `perm` with row `i` assigned to column `perm[i]`.
pub fn solve_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    if n == 0 {
        return Vec::new();
    }
    // Shortest augmenting paths with dual potentials, 1-based sentinels.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    perm
}

/// Sum of `cost[i][perm[i]]` in index order.
pub fn assignment_cost(cost: &[f64], n: usize, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum()
}

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.len() != nu.len() {
        return Err(Error::SizeMismatch(mu.len(), nu.len()));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch(format!("dims {} and {}", mu.dim(), nu.dim())));
    }
    if !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::UnsupportedWeights);
    }
    Ok(())
}

fn cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, c: &dyn Fn(&[f64], &[f64]) -> f64) -> Vec<f64> {
    let n = mu.len();
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = c(mu.point(i), nu.point(j));
        }
    }
    cost
}

fn sorted_order(m: &EmpiricalMeasure) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m.len()).collect();
    idx.sort_by(|&a, &b| m.point(a)[0].partial_cmp(&m.point(b)[0]).unwrap().then(a.cmp(&b)));
    idx
}

fn pairing_with_cost(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    c: &dyn Fn(&[f64], &[f64]) -> f64,
    convex_1d: bool,
) -> Result<(Vec<usize>, f64)> {
    check_pair(mu, nu)?;
    let n = mu.len();
    if mu.dim() == 1 && convex_1d {
        let a = sorted_order(mu);
        let b = sorted_order(nu);
        let mut perm = vec![0usize; n];
        for (ia, ib) in a.iter().zip(&b) {
            perm[*ia] = *ib;
        }
        let total = order_free_sum((0..n).map(|i| c(mu.point(i), nu.point(perm[i]))).collect());
        return Ok((perm, total));
    }
    let cost = cost_matrix(mu, nu, c);
    let perm = solve_assignment(&cost, n);
    let total = order_free_sum((0..n).map(|i| cost[i * n + perm[i]]).collect());
    Ok((perm, total))
}

/// Sum in sorted order, so swapping the two clouds gives the same bits.
fn order_free_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `W_k` between equal-size uniform clouds by exact assignment.
pub fn wasserstein_k(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, k: f64) -> Result<f64> {
    if !(k >= 1.0) {
        return Err(Error::ParameterOutOfRange(format!("k = {k}")));
    }
    let c = move |x: &[f64], y: &[f64]| sq_dist(x, y).sqrt().powf(k);
    let (_, total) = pairing_with_cost(mu, nu, &c, true)?;
    Ok((total / mu.len() as f64).powf(1.0 / k))
}

/// Squared `W_2`, avoiding the root.
pub fn wasserstein_2_sq(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    let (_, total) = pairing_with_cost(mu, nu, &sq_dist, true)?;
    Ok(total / mu.len() as f64)
}

/// `ρ_t(x, y)` with the first `m` coordinates scaled by `1/t`.
pub fn modified_distance(x: &[f64], y: &[f64], t: f64, m: usize) -> f64 {
    let a: f64 = x[..m].iter().zip(&y[..m]).map(|(a, b)| (a - b) * (a - b)).sum();
    let b: f64 = x[m..].iter().zip(&y[m..]).map(|(a, b)| (a - b) * (a - b)).sum();
    (a / (t * t) + b).sqrt()
}

/// `W_{2,t}` with cost `ρ_t²`.
pub fn wasserstein_2_modified(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, t: f64, m: usize) -> Result<f64> {
    if m > mu.dim() {
        return Err(Error::DimensionMismatch(format!("split {m} exceeds dim {}", mu.dim())));
    }
    let c = move |x: &[f64], y: &[f64]| {
        let r = modified_distance(x, y, t, m);
        r * r
    };
    let (_, total) = pairing_with_cost(mu, nu, &c, m == 0 || mu.dim() == m)?;
    Ok((total / mu.len() as f64).sqrt())
}

/// Index pairing realizing `W_2(μ, ν)²` as the mean squared pair distance.
pub fn optimal_initial_coupling(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<Vec<usize>> {
    Ok(pairing_with_cost(mu, nu, &sq_dist, true)?.0)
}

/// Gaussian law `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub mean: DVector<f64>,
    pub cov: SymMatrix,
}

impl GaussianLaw {
    pub fn new(mean: DVector<f64>, cov: SymMatrix) -> Result<Self> {
        if mean.len() != cov.n() {
            return Err(Error::DimensionMismatch(format!("mean {} vs cov {}", mean.len(), cov.n())));
        }
        Ok(Self { mean, cov })
    }

    pub fn dirac(x: &[f64]) -> Self {
        Self { mean: DVector::from_column_slice(x), cov: SymMatrix::zeros(x.len()) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `n` draws using lanes `0..n` of `stream`.
    pub fn sample(&self, n: usize, seed: u64, stream: Stream) -> Result<EmpiricalMeasure> {
        let root = psd_sqrt(&self.cov)?;
        let d = self.dim();
        let rng = CounterRng::new(seed);
        let mut pts = vec![0.0; n * d];
        pts.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
            let mut z = vec![0.0; d];
            rng.standard_normals(stream, i as u64, 0, &mut z);
            let x = &self.mean + root.matrix() * DVector::from_vec(z);
            row.copy_from_slice(x.as_slice());
        });
        EmpiricalMeasure::uniform(pts, d)
    }

    pub fn affine(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        Self {
            mean: a * &self.mean + b,
            cov: SymMatrix::symmetrized(a * self.cov.matrix() * a.transpose()),
        }
    }
}

/// `Ent(p | q)` for Gaussians.
pub fn gaussian_kl(p: &GaussianLaw, q: &GaussianLaw) -> Result<f64> {
    let n = p.dim();
    if q.dim() != n {
        return Err(Error::DimensionMismatch(format!("{} vs {}", n, q.dim())));
    }
    let lq = nalgebra::Cholesky::new(q.cov.matrix().clone()).ok_or(Error::SingularCovariance)?;
    let Some(lp) = nalgebra::Cholesky::new(p.cov.matrix().clone()) else {
        return Ok(f64::INFINITY);
    };
    let logdet = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let tr = lq.solve(p.cov.matrix()).trace();
    let dm = &q.mean - &p.mean;
    let quad = dm.dot(&lq.solve(&dm));
    let kl = 0.5 * (tr - n as f64 + quad + logdet(&lq) - logdet(&lp));
    Ok(kl.max(0.0))
}

/// Squared `W_2` between Gaussians (Bures formula).
pub fn gaussian_w2sq(p: &GaussianLaw, q: &GaussianLaw) -> Result<f64> {
    let dm = &p.mean - &q.mean;
    let rp = psd_sqrt(&p.cov)?;
    let inner = SymMatrix::symmetrized(rp.matrix() * q.cov.matrix() * rp.matrix());
    let cross = psd_sqrt(&inner)?;
    let bures = p.cov.trace() + q.cov.trace() - 2.0 * cross.trace();
    Ok(dm.norm_squared() + bures.max(0.0))
}

/// Squared `W_{2,t}` between Gaussians: `W_2²` after scaling the first `m`
/// coordinates by `1/t`.
pub fn gaussian_w2t_sq(p: &GaussianLaw, q: &GaussianLaw, t: f64, m: usize) -> Result<f64> {
    let n = p.dim();
    let mut s = DMatrix::identity(n, n);
    for i in 0..m {
        s[(i, i)] = 1.0 / t;
    }
    let zero = DVector::zeros(n);
    gaussian_w2sq(&p.affine(&s, &zero), &q.affine(&s, &zero))
}

/// Sample mean and unbiased covariance of a uniform cloud.
pub fn gaussian_fit(mu: &EmpiricalMeasure) -> Result<GaussianLaw> {
    let n = mu.len();
    let d = mu.dim();
    if n <= d {
        return Err(Error::TooFewParticles { n, dim: d });
    }
    if !mu.is_uniform() {
        return Err(Error::UnsupportedWeights);
    }
    let m = mu.mean();
    let mut cov = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let prod: Vec<f64> = (0..n)
                .map(|i| {
                    let x = mu.point(i);
                    (x[a] - m[a]) * (x[b] - m[b])
                })
                .collect();
            let v = pairwise_sum(&prod) / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(GaussianLaw { mean: DVector::from_column_slice(m), cov: SymMatrix::symmetrized(cov) })
}

/// k-NN divergence estimate and whether duplicate-breaking jitter was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnEstimate {
    pub value: f64,
    pub jittered: bool,
}

const COINCIDENT: f64 = 1e-12;

fn kth_smallest_sq(query: &[f64], sample: &[f64], dim: usize, k: usize, skip: Option<usize>) -> (f64, usize) {
    // returns (k-th smallest squared distance, number of coincident points skipped)
    let mut best: Vec<f64> = Vec::with_capacity(k + 1);
    let mut coincident = 0usize;
    for (j, y) in sample.chunks(dim).enumerate() {
        if Some(j) == skip {
            continue;
        }
        let d2 = sq_dist(query, y);
        if skip.is_none() && d2 <= COINCIDENT * COINCIDENT {
            coincident += 1;
            continue;
        }
        if best.len() < k || d2 < best[best.len() - 1] {
            let pos = best.partition_point(|v| *v <= d2);
            best.insert(pos, d2);
            if best.len() > k {
                best.pop();
            }
        }
    }
    (if best.len() == k { best[k - 1] } else { f64::NAN }, coincident)
}

/// Wang–Kulkarni–Verdú k-NN estimate of `Ent(P | Q)` from samples.
///
/// Points of `Q` coinciding with the query point (within 1e-12) are treated
/// as the query itself and excluded, with the `Q` sample size adjusted. If
/// `P` contains duplicates, it is perturbed by a seeded uniform 1e-10 jitter.
pub fn knn_relative_entropy(p: &[f64], q: &[f64], dim: usize, k: usize, seed: u64) -> Result<KnnEstimate> {
    if dim == 0 || p.len() % dim != 0 || q.len() % dim != 0 {
        return Err(Error::DimensionMismatch("sample length not a multiple of dim".into()));
    }
    let n = p.len() / dim;
    let m = q.len() / dim;
    if k == 0 || n < k + 1 || m < k + 1 {
        return Err(Error::DegenerateSample(format!("need at least {} points, have {n} and {m}", k + 1)));
    }
    let mut sample_p = p.to_vec();
    let mut jittered = false;
    if has_coincident(&sample_p, dim) {
        let rng = CounterRng::new(seed);
        for (idx, v) in sample_p.iter_mut().enumerate() {
            *v += 1e-10 * (2.0 * rng.uniform(Stream::JITTER, 0, idx as u64) - 1.0);
        }
        jittered = true;
    }
    {
        let rows: Vec<Result<(f64, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = &sample_p[i * dim..(i + 1) * dim];
                let (rho2, _) = kth_smallest_sq(x, &sample_p, dim, k, Some(i));
                let (nu2, excluded) = kth_smallest_sq(x, q, dim, k, None);
                let m_eff = m - excluded;
                if m_eff < k || !nu2.is_finite() {
                    return Err(Error::DegenerateSample(format!("point {i} has fewer than {k} distinct Q neighbours")));
                }
                Ok((rho2, 0.5 * dim as f64 * (nu2.ln() - rho2.ln()) + (m_eff as f64 / (n - 1) as f64).ln()))
            })
            .collect();
        let rows: Vec<(f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
        if rows.iter().any(|(rho2, _)| !(*rho2 > 0.0)) {
            return Err(Error::DegenerateSample("duplicates persist after jitter".into()));
        }
        let terms: Vec<f64> = rows.iter().map(|r| r.1).collect();
        Ok(KnnEstimate { value: pairwise_sum(&terms) / n as f64, jittered })
    }
}

fn has_coincident(sample: &[f64], dim: usize) -> bool {
    let n = sample.len() / dim;
    (0..n).into_par_iter().any(|i| {
        let x = &sample[i * dim..(i + 1) * dim];
        (i + 1..n).any(|j| sq_dist(x, &sample[j * dim..(j + 1) * dim]) <= COINCIDENT * COINCIDENT)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(pts: &[f64], dim: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(pts.to_vec(), dim).unwrap()
    }

    #[test]
    fn w2_trivial_cases() {
        let a = cloud(&[0.0, 1.0, 2.0, 3.0], 2);
        assert_eq!(wasserstein_k(&a, &a, 2.0).unwrap(), 0.0);
        let x = EmpiricalMeasure::dirac(&[0.0, 0.0]);
        let y = EmpiricalMeasure::dirac(&[3.0, 4.0]);
        assert!((wasserstein_k(&x, &y, 2.0).unwrap() - 5.0).abs() < 1e-15);
        assert!((wasserstein_k(&x, &y, 1.0).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn w2_1d_against_permutations() {
        let a = cloud(&[0.3, -1.2, 2.5], 1);
        let b = cloud(&[1.0, 0.1, -0.7], 1);
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let best = perms
            .iter()
            .map(|p| (0..3).map(|i| (a.point(i)[0] - b.point(p[i])[0]).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert!((wasserstein_2_sq(&a, &b).unwrap() - best / 3.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let a = cloud(&[0.0, 1.0], 1);
        let b = cloud(&[0.0], 1);
        assert_eq!(wasserstein_k(&a, &b, 2.0), Err(Error::SizeMismatch(2, 1)));
        let w = EmpiricalMeasure::weighted(vec![0.0, 1.0], 1, vec![0.3, 0.7]).unwrap();
        assert_eq!(wasserstein_k(&a, &w, 2.0), Err(Error::UnsupportedWeights));
    }

    #[test]
    fn modified_distance_examples() {
        assert_eq!(modified_distance(&[1.0, 2.0], &[1.0, 2.0], 0.3, 1), 0.0);
        assert!((modified_distance(&[0.0, 0.0], &[3.0, 4.0], 1.0, 1) - 5.0).abs() < 1e-15);
        let t = 0.25;
        assert!((modified_distance(&[t, 0.0, 7.0], &[0.0, 0.0, 7.0], t, 2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kl_examples() {
        let p = GaussianLaw::new(DVector::from_vec(vec![0.0, 0.0]), SymMatrix::identity(2)).unwrap();
        assert_eq!(gaussian_kl(&p, &p).unwrap(), 0.0);
        let q = GaussianLaw::new(DVector::from_vec(vec![0.6, -0.8]), SymMatrix::identity(2)).unwrap();
        assert!((gaussian_kl(&p, &q).unwrap() - 0.5).abs() < 1e-14);
        let a = GaussianLaw::new(DVector::from_vec(vec![0.0]), SymMatrix::identity(1)).unwrap();
        let b = GaussianLaw::new(DVector::from_vec(vec![0.0]), SymMatrix::identity(1).scale(2.0)).unwrap();
        // numeric integral of p log(p/q) on a fine grid
        let pdf = |x: f64, v: f64| (-x * x / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let h = 1e-3;
        let num: f64 = (-12000..=12000)
            .map(|i| {
                let x = i as f64 * h;
                pdf(x, 1.0) * (pdf(x, 1.0) / pdf(x, 2.0)).ln() * h
            })
            .sum();
        let closed = 0.5 * (0.5 - 1.0 + 2f64.ln());
        assert!((gaussian_kl(&a, &b).unwrap() - closed).abs() < 1e-14);
        assert!((num - closed).abs() < 1e-8);
    }

    #[test]
    fn bures_commuting() {
        let p = GaussianLaw::new(DVector::from_vec(vec![1.0, 0.0]), SymMatrix::from_diagonal(&[1.0, 4.0])).unwrap();
        let q = GaussianLaw::new(DVector::from_vec(vec![0.0, 0.0]), SymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        // |dm|² + Σ (√a − √b)²
        assert!((gaussian_w2sq(&p, &q).unwrap() - (1.0 + 1.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn fit_errors_on_small_cloud() {
        let c = EmpiricalMeasure::repeated(&[1.0, 2.0], 2);
        assert!(matches!(gaussian_fit(&c), Err(Error::TooFewParticles { .. })));
        let c = EmpiricalMeasure::repeated(&[1.0, 2.0], 5);
        let g = gaussian_fit(&c).unwrap();
        assert_eq!(g.mean.as_slice(), &[1.0, 2.0]);
        assert_eq!(crate::linalg::max_abs(g.cov.matrix()), 0.0);
    }

    #[test]
    fn knn_identical_samples_are_zero() {
        let law = GaussianLaw::new(DVector::from_vec(vec![0.0, 0.0]), SymMatrix::identity(2)).unwrap();
        let s = law.sample(500, 1, Stream::INITIAL).unwrap();
        let e = knn_relative_entropy(s.points(), s.points(), 2, 5, 0).unwrap();
        assert!(e.value.abs() < 1e-12);
        assert!(!e.jittered);
    }

    #[test]
    fn knn_duplicates_trigger_jitter() {
        let law = GaussianLaw::new(DVector::from_vec(vec![0.0]), SymMatrix::identity(1)).unwrap();
        let s = law.sample(200, 2, Stream::INITIAL).unwrap();
        let mut p = s.points().to_vec();
        p[1] = p[0];
        let q = law.sample(200, 3, Stream::INITIAL).unwrap();
        let e = knn_relative_entropy(&p, q.points(), 1, 5, 9).unwrap();
        assert!(e.jittered);
        assert!(e.value.is_finite());
    }

    #[test]
    fn knn_too_small() {
        assert!(matches!(knn_relative_entropy(&[0.0, 1.0], &[0.0, 1.0], 1, 5, 0), Err(Error::DegenerateSample(_))));
    }
}
