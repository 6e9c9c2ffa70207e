//! Entropy-cost and log-Harnack experiments.
//!
//! Entropies come from the Gaussian path (exact propagation of linear
//! models) when available and from the k-NN estimator otherwise.

use serde::Serialize;

use crate::closed_form::LinearGaussianSystem;
use crate::error::{Error, Result};
use crate::measure::{gaussian_kl, gaussian_w2sq, gaussian_w2t_sq, knn_relative_entropy, wasserstein_2_sq, EmpiricalMeasure, GaussianLaw};
use crate::model::MeanFieldModel;
use crate::rng::NoisePlan;
use crate::sde::simulate_law_flow;
use crate::stats::{linear_fit, mean_se, LinearFit};

/// How entropies were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyPath {
    Gaussian,
    Knn,
}

impl EntropyPath {
    pub fn tag(&self) -> &'static str {
        match self {
            EntropyPath::Gaussian => "gaussian",
            EntropyPath::Knn => "knn",
        }
    }
}

/// Inequality `Ent ≤ bound` evaluated on a held-out pair with the fitted constant.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOut {
    pub entropy: Vec<f64>,
    pub bound: Vec<f64>,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnackReport {
    pub t: Vec<f64>,
    pub entropy: Vec<f64>,
    pub w2sq: f64,
    /// `W_{2,t}(μ, ν)²`; only for degenerate experiments.
    pub w2t_sq: Option<Vec<f64>>,
    /// `t^p · Ent / W₂²` per `t`, `p = 1` (non-degenerate) or `4l − 1`.
    pub ratio: Vec<f64>,
    /// Max of `ratio` over the grid.
    pub fitted_c: f64,
    /// `t^{4l−3} · Ent / W_{2,t}²` and its max (degenerate only).
    pub ratio_modified: Option<Vec<f64>>,
    pub fitted_c_modified: Option<f64>,
    /// `log Ent` against `log t`.
    pub entropy_slope: Option<LinearFit>,
    /// `log(Ent / W_{2,t}²)` against `log t` (degenerate only).
    pub modified_slope: Option<LinearFit>,
    pub path: EntropyPath,
    pub held_out: Option<HeldOut>,
    /// k-NN evaluations that needed duplicate-breaking jitter.
    pub jittered: usize,
}

impl HarnackReport {
    /// `max ratio / min ratio` over the grid.
    pub fn ratio_spread(&self) -> f64 {
        let lo = self.ratio.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.ratio.iter().copied().fold(0.0, f64::max);
        hi / lo
    }

    pub fn entropies_nonnegative(&self) -> bool {
        self.entropy.iter().all(|e| *e >= -0.05)
    }
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn slope(t: &[f64], y: &[f64]) -> Option<LinearFit> {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(_, v)| **v > 0.0 && v.is_finite()).map(|(a, v)| (a.ln(), v.ln())).collect();
    if pts.len() < 3 {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(linear_fit(&x, &y))
}

/// `Ent(P_t* ν | P_t* μ)` on the exact Gaussian path against `(c/t) W₂(μ, ν)²`;
/// `c` is fitted as the max of `t · Ent / W₂²` and checked on `held_out`.
pub fn entropy_cost_gaussian(
    system: &LinearGaussianSystem,
    mu: &GaussianLaw,
    nu: &GaussianLaw,
    t_grid: &[f64],
    held_out: Option<(&GaussianLaw, &GaussianLaw)>,
) -> Result<HarnackReport> {
    let ent = |p: &GaussianLaw, q: &GaussianLaw, t: f64| gaussian_kl(&system.propagate(q, t), &system.propagate(p, t));
    let w2sq = gaussian_w2sq(mu, nu)?;
    let entropy: Vec<f64> = t_grid.iter().map(|t| ent(mu, nu, *t)).collect::<Result<_>>()?;
    let ratio: Vec<f64> = t_grid.iter().zip(&entropy).map(|(t, e)| ratio_or_zero(t * e, w2sq)).collect();
    let fitted_c = ratio.iter().copied().fold(0.0, f64::max);
    let held_out = match held_out {
        Some((m2, n2)) => {
            let w = gaussian_w2sq(m2, n2)?;
            let e: Vec<f64> = t_grid.iter().map(|t| ent(m2, n2, *t)).collect::<Result<_>>()?;
            let bound: Vec<f64> = t_grid.iter().map(|t| fitted_c / t * w).collect();
            let violations = e.iter().zip(&bound).filter(|(a, b)| **a > **b * (1.0 + 1e-12)).count();
            Some(HeldOut { entropy: e, bound, violations })
        }
        None => None,
    };
    Ok(HarnackReport {
        entropy_slope: slope(t_grid, &entropy),
        t: t_grid.to_vec(),
        entropy,
        w2sq,
        w2t_sq: None,
        ratio,
        fitted_c,
        ratio_modified: None,
        fitted_c_modified: None,
        modified_slope: None,
        path: EntropyPath::Gaussian,
        held_out,
        jittered: 0,
    })
}

/// Fraction of the largest `t` below which the k-NN path refuses to run.
pub const KNN_T_FLOOR: f64 = 0.05;

/// Same experiment with entropies from the k-NN estimator on particle clouds
/// (equal sizes, one flow each, independent noise).
pub fn entropy_cost_knn(
    model: &dyn MeanFieldModel,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    t_grid: &[f64],
    plan: &NoisePlan,
    k: usize,
) -> Result<HarnackReport> {
    let tmax = t_grid.iter().copied().fold(0.0, f64::max);
    if let Some(t) = t_grid.iter().find(|t| **t < KNN_T_FLOOR * tmax) {
        return Err(Error::EstimatorDegenerate(format!("t = {t} below the k-NN floor {}", KNN_T_FLOOR * tmax)));
    }
    let steps = plan.steps_for(tmax).ok_or_else(|| Error::GridMismatch(format!("t = {tmax} vs h = {}", plan.h)))?;
    let fm = simulate_law_flow(model, mu, plan, steps)?;
    // independent noise: shared increments pair each ν-particle with a μ-twin
    // and bias the nearest-neighbour distances downward
    let plan_nu = NoisePlan { seed: plan.seed ^ 0x5eed_0f00_d1ff_e4e7, ..*plan };
    let fnu = simulate_law_flow(model, nu, &plan_nu, steps)?;
    let w2sq = wasserstein_2_sq(mu, nu)?;
    let mut entropy = Vec::with_capacity(t_grid.len());
    let mut jittered = 0;
    for (i, t) in t_grid.iter().enumerate() {
        let j = plan.steps_for(*t).ok_or_else(|| Error::GridMismatch(format!("t = {t} vs h = {}", plan.h)))?;
        let e = knn_relative_entropy(fnu.measure(j).points(), fm.measure(j).points(), model.dim(), k, plan.seed ^ i as u64)?;
        entropy.push(e.value);
        jittered += e.jittered as usize;
    }
    let ratio: Vec<f64> = t_grid.iter().zip(&entropy).map(|(t, e)| ratio_or_zero(t * e.max(0.0), w2sq)).collect();
    let fitted_c = ratio.iter().copied().fold(0.0, f64::max);
    Ok(HarnackReport {
        entropy_slope: slope(t_grid, &entropy),
        t: t_grid.to_vec(),
        entropy,
        w2sq,
        w2t_sq: None,
        ratio,
        fitted_c,
        ratio_modified: None,
        fitted_c_modified: None,
        modified_slope: None,
        path: EntropyPath::Knn,
        held_out: None,
        jittered,
    })
}

/// Degenerate entropy cost on the exact Gaussian path: both
/// `t^{4l−3} Ent / W_{2,t}²` and `t^{4l−1} Ent / W₂²` with their maxima, and
/// the log-log slopes. `m` is the block-1 dimension.
pub fn degenerate_entropy_cost_experiment(
    system: &LinearGaussianSystem,
    mu: &GaussianLaw,
    nu: &GaussianLaw,
    t_grid: &[f64],
    m: usize,
    l: usize,
) -> Result<HarnackReport> {
    let w2sq = gaussian_w2sq(mu, nu)?;
    let mut entropy = Vec::with_capacity(t_grid.len());
    let mut w2t = Vec::with_capacity(t_grid.len());
    for t in t_grid {
        entropy.push(gaussian_kl(&system.propagate(nu, *t), &system.propagate(mu, *t))?);
        w2t.push(gaussian_w2t_sq(mu, nu, *t, m)?);
    }
    let p_plain = (4 * l - 1) as i32;
    let p_mod = (4 * l - 3) as i32;
    let ratio: Vec<f64> = t_grid.iter().zip(&entropy).map(|(t, e)| ratio_or_zero(t.powi(p_plain) * e, w2sq)).collect();
    let ratio_mod: Vec<f64> =
        t_grid.iter().zip(&entropy).zip(&w2t).map(|((t, e), w)| ratio_or_zero(t.powi(p_mod) * e, *w)).collect();
    let normalized: Vec<f64> = entropy.iter().zip(&w2t).map(|(e, w)| ratio_or_zero(*e, *w)).collect();
    Ok(HarnackReport {
        entropy_slope: slope(t_grid, &entropy),
        modified_slope: slope(t_grid, &normalized),
        t: t_grid.to_vec(),
        entropy,
        w2sq,
        w2t_sq: Some(w2t),
        fitted_c: ratio.iter().copied().fold(0.0, f64::max),
        ratio,
        fitted_c_modified: Some(ratio_mod.iter().copied().fold(0.0, f64::max)),
        ratio_modified: Some(ratio_mod),
        path: EntropyPath::Gaussian,
        held_out: None,
        jittered: 0,
    })
}

/// Strictly positive bounded test function.
pub struct PositiveFunction {
    pub name: String,
    pub f: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for PositiveFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PositiveFunction({})", self.name)
    }
}

/// Constants, `exp(−|x|²)`, a shifted bump and `1 + sigmoid(x_i)`.
pub fn positive_battery(dim: usize) -> Vec<PositiveFunction> {
    let mut out: Vec<PositiveFunction> = vec![
        PositiveFunction { name: "one".into(), f: Box::new(|_| 1.0) },
        PositiveFunction { name: "two".into(), f: Box::new(|_| 2.0) },
        PositiveFunction { name: "gauss".into(), f: Box::new(|x| (-x.iter().map(|v| v * v).sum::<f64>()).exp()) },
        PositiveFunction {
            name: "bump".into(),
            f: Box::new(|x| 0.1 + (-0.5 * x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>()).exp()),
        },
    ];
    for i in 0..dim {
        out.push(PositiveFunction { name: format!("sigmoid{i}"), f: Box::new(move |x| 1.0 + 1.0 / (1.0 + (-x[i]).exp())) });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogHarnackEntry {
    pub name: String,
    /// `P_t log f(ν)`.
    pub lhs: f64,
    pub lhs_se: f64,
    /// `log P_t f(μ) + (c/t) W₂²`.
    pub rhs: f64,
    pub rhs_se: f64,
    pub holds: bool,
}

/// Evaluates `P_t log f(ν) ≤ log P_t f(μ) + (c/t) W₂(μ, ν)²` on the terminal
/// clouds `nu_t`, `mu_t` (standard errors by the delta method). A violation
/// must exceed three combined standard errors.
pub fn log_harnack_check(
    mu_t: &EmpiricalMeasure,
    nu_t: &EmpiricalMeasure,
    t: f64,
    c: f64,
    w2sq: f64,
    battery: &[PositiveFunction],
) -> Vec<LogHarnackEntry> {
    battery
        .iter()
        .map(|pf| {
            let lf: Vec<f64> = (0..nu_t.len()).map(|i| (pf.f)(nu_t.point(i)).ln()).collect();
            let fm: Vec<f64> = (0..mu_t.len()).map(|i| (pf.f)(mu_t.point(i))).collect();
            let (lhs, lhs_se) = mean_se(&lf);
            let (pm, pm_se) = mean_se(&fm);
            let rhs = pm.ln() + c / t * w2sq;
            let rhs_se = pm_se / pm;
            let tol = 3.0 * (lhs_se.powi(2) + rhs_se.powi(2)).sqrt();
            LogHarnackEntry { name: pf.name.clone(), lhs, lhs_se, rhs, rhs_se, holds: lhs <= rhs + tol + 1e-12 }
        })
        .collect()
}

/// `P_t log f(μ)` and `log P_t f(μ)` on one cloud: Jensen's inequality.
pub fn jensen_check(mu_t: &EmpiricalMeasure, battery: &[PositiveFunction]) -> Vec<LogHarnackEntry> {
    log_harnack_check(mu_t, mu_t, 1.0, 0.0, 0.0, battery)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use crate::presets::Preset;
    use nalgebra::DVector;

    fn law(m: &[f64], v: f64) -> GaussianLaw {
        GaussianLaw::new(DVector::from_column_slice(m), SymMatrix::identity(m.len()).scale(v)).unwrap()
    }

    #[test]
    fn equal_laws_zero_entropy() {
        let sys = Preset::by_name("linear-ou").unwrap().gaussian_system().unwrap();
        let mu = law(&[0.3, 0.1], 0.5);
        let r = entropy_cost_gaussian(&sys, &mu, &mu, &[0.1, 0.5, 1.0], None).unwrap();
        assert!(r.entropy.iter().all(|e| e.abs() < 1e-12));
        assert_eq!(r.fitted_c, 0.0);
    }

    #[test]
    fn shift_scaling_keeps_ratio() {
        let sys = Preset::by_name("linear-ou").unwrap().gaussian_system().unwrap();
        let mu = GaussianLaw::dirac(&[0.0, 0.0]);
        let grid = [0.05, 0.2, 1.0];
        let a = entropy_cost_gaussian(&sys, &mu, &GaussianLaw::dirac(&[0.3, -0.2]), &grid, None).unwrap();
        let b = entropy_cost_gaussian(&sys, &mu, &GaussianLaw::dirac(&[0.6, -0.4]), &grid, None).unwrap();
        assert!((b.w2sq / a.w2sq - 4.0).abs() < 1e-12);
        for i in 0..3 {
            assert!((b.entropy[i] / a.entropy[i] - 4.0).abs() < 1e-9);
            assert!((b.ratio[i] - a.ratio[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn jensen_holds_exactly() {
        let mu = law(&[0.0, 1.0], 0.7).sample(500, 3, crate::rng::Stream::INITIAL).unwrap();
        for e in jensen_check(&mu, &positive_battery(2)) {
            assert!(e.lhs <= e.rhs + 1e-12, "{e:?}");
        }
    }

    #[test]
    fn knn_floor_enforced() {
        let p = Preset::by_name("linear-ou").unwrap();
        let mu = law(&[0.0, 0.0], 1.0).sample(50, 1, crate::rng::Stream::INITIAL).unwrap();
        let plan = NoisePlan::new(1, 0.01);
        let r = entropy_cost_knn(p.model(), &mu, &mu, &[0.01, 1.0], &plan, 5);
        assert!(matches!(r, Err(Error::EstimatorDegenerate(_))));
    }
}
