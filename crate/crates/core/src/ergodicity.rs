//! Long-time behaviour: dissipativity probes, invariant measures, decay fits
//! and the quadratic Lyapunov function of the degenerate case.

use nalgebra::{DMatrix, DVector};

use crate::closed_form::LinearGaussianSystem;
use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, SymMatrix};
use crate::measure::{gaussian_fit, gaussian_kl, gaussian_w2sq, wasserstein_2_sq, EmpiricalMeasure, GaussianLaw};
use crate::model::MeanFieldModel;
use crate::rng::{CounterRng, NoisePlan, Stream};
use crate::sde::{run_ensemble, WTildeMode};
use crate::stats::{linear_fit, mean_se, LinearFit};

fn check_lyapunov_params(r: f64, r0: f64, m: &DMatrix<f64>) -> Result<()> {
    let mnorm = if m.is_empty() { 0.0 } else { m.clone().svd(false, false).singular_values.max() };
    if !(r > 0.0) || r0.abs() * mnorm >= 1.0 {
        return Err(Error::ParameterOutOfRange(format!("need r > 0 and |r0|·‖M‖ < 1, got r = {r}, |r0|·‖M‖ = {}", r0.abs() * mnorm)));
    }
    Ok(())
}

/// `P` with `ρ(x) = ½ xᵀ P x`.
fn lyapunov_form(r: f64, r0: f64, m: &DMatrix<f64>) -> DMatrix<f64> {
    let (md, d) = m.shape();
    let mut p = DMatrix::zeros(md + d, md + d);
    p.view_mut((0, 0), (md, md)).copy_from(&(DMatrix::identity(md, md) * (r * r)));
    p.view_mut((0, md), (md, d)).copy_from(&(m * (r * r0)));
    p.view_mut((md, 0), (d, md)).copy_from(&(m.transpose() * (r * r0)));
    p.view_mut((md, md), (d, d)).copy_from(&DMatrix::identity(d, d));
    p
}

/// `ρ(x) = (r²/2)|x⁽¹⁾|² + ½|x⁽²⁾|² + r r₀ ⟨x⁽¹⁾, M x⁽²⁾⟩`.
pub fn lyapunov_rho(x: &[f64], r: f64, r0: f64, m: &DMatrix<f64>) -> Result<f64> {
    check_lyapunov_params(r, r0, m)?;
    let (md, d) = m.shape();
    if x.len() != md + d {
        return Err(Error::DimensionMismatch(format!("point has {} entries, expected {}", x.len(), md + d)));
    }
    let (x1, x2) = x.split_at(md);
    let n1: f64 = x1.iter().map(|v| v * v).sum();
    let n2: f64 = x2.iter().map(|v| v * v).sum();
    let mut cross = 0.0;
    for i in 0..md {
        for k in 0..d {
            cross += x1[i] * m[(i, k)] * x2[k];
        }
    }
    Ok(0.5 * r * r * n1 + 0.5 * n2 + r * r0 * cross)
}

/// Largest `c₀` with `c₀|x|² ≤ ρ(x) ≤ c₀⁻¹|x|²`.
pub fn sandwich_constant(r: f64, r0: f64, m: &DMatrix<f64>) -> Result<f64> {
    check_lyapunov_params(r, r0, m)?;
    let ev = SymMatrix::symmetrized(lyapunov_form(r, r0, m) * 0.5).eigenvalues();
    let lo = ev[0];
    let hi = *ev.last().unwrap();
    Ok(lo.min(1.0 / hi))
}

/// Worst case of a dissipativity inequality
/// `LHS ≤ θ₁ W₂(μ, ν)² − θ₂ |x − y|²` over random probes.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityReport {
    pub probes: usize,
    /// `min (θ₁W₂² − θ₂|Δ|² − LHS)` with the supplied constants.
    pub margin: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// Best `(θ₁, θ₂)` consistent with every probe, maximizing `θ₂ − θ₁`.
    pub theta1_fit: f64,
    pub theta2_fit: f64,
    pub violations: usize,
}

impl DissipativityReport {
    pub fn implied_rate(&self) -> f64 {
        self.theta2_fit - self.theta1_fit
    }

    /// Stored constants hold on every probe and give a positive rate.
    pub fn pass(&self) -> bool {
        self.violations == 0 && self.theta2 > self.theta1
    }
}

struct Probe {
    lhs: f64,
    dist: f64,
    w2: f64,
}

const PROBE_CLOUD: usize = 8;

fn probe_points(rng: &CounterRng, k: u64, n: usize) -> (Vec<f64>, Vec<f64>, EmpiricalMeasure, EmpiricalMeasure) {
    let scale = [0.1, 1.0, 3.0][(rng.uniform(Stream::PROBE, k, 0) * 3.0) as usize % 3];
    let kind = (rng.uniform(Stream::PROBE, k, 1) * 4.0) as usize % 4;
    let mut z = vec![0.0; 4 * n + 2 * PROBE_CLOUD * n];
    for (c, chunk) in z.chunks_mut(64).enumerate() {
        rng.standard_normals(Stream::PROBE, k, 2 + c as u64, chunk);
    }
    let x: Vec<f64> = z[..n].iter().map(|v| v * scale).collect();
    let mut y: Vec<f64> = z[n..2 * n].iter().map(|v| v * scale).collect();
    let shift: Vec<f64> = z[2 * n..3 * n].iter().map(|v| v * scale).collect();
    let base: Vec<f64> = z[4 * n..4 * n + PROBE_CLOUD * n].iter().map(|v| v * scale).collect();
    let jitter = &z[4 * n + PROBE_CLOUD * n..];
    let other: Vec<f64> = match kind {
        // μ = ν
        0 => base.clone(),
        // shifted copy
        1 => base.iter().enumerate().map(|(i, v)| v + shift[i % n]).collect(),
        // unrelated cloud
        2 => jitter.iter().map(|v| v * scale).collect(),
        // x = y, distinct laws
        _ => {
            y = x.clone();
            base.iter().enumerate().map(|(i, v)| v + shift[i % n] + 0.3 * scale * jitter[i]).collect()
        }
    };
    let mu = EmpiricalMeasure::uniform(base, n).expect("non-empty");
    let nu = EmpiricalMeasure::uniform(other, n).expect("non-empty");
    (x, y, mu, nu)
}

fn fit_constants(probes: &[Probe]) -> (f64, f64) {
    // Probes with W₂ = 0 cap θ₂ directly.
    let mut cap = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in probes {
        if p.dist > 0.0 {
            let v = -p.lhs / p.dist;
            hi = hi.max(v);
            if p.w2 <= 1e-14 {
                cap = cap.min(v);
            }
        }
    }
    let top = if cap.is_finite() { cap } else { hi };
    if !top.is_finite() {
        return (0.0, 0.0);
    }
    let span = 2.0 * top.abs() + 1.0;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=400 {
        let theta2 = top - span * i as f64 / 400.0;
        let theta1 = probes
            .iter()
            .filter(|p| p.w2 > 1e-14)
            .map(|p| (p.lhs + theta2 * p.dist) / p.w2)
            .fold(0.0, f64::max);
        if theta2 - theta1 > best.0 {
            best = (theta2 - theta1, theta1, theta2);
        }
    }
    (best.1, best.2)
}

fn report(probes: Vec<Probe>, theta1: f64, theta2: f64) -> DissipativityReport {
    let mut margin = f64::INFINITY;
    let mut violations = 0;
    for p in &probes {
        let m = theta1 * p.w2 - theta2 * p.dist - p.lhs;
        // relative slack for roundoff in the probe itself
        if m < -1e-9 * (1.0 + p.lhs.abs()) {
            violations += 1;
        }
        margin = margin.min(m);
    }
    let (theta1_fit, theta2_fit) = fit_constants(&probes);
    DissipativityReport { probes: probes.len(), margin, theta1, theta2, theta1_fit, theta2_fit, violations }
}

fn hs_sq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm_squared()
}

fn full_sigma(model: &dyn MeanFieldModel, mu: &EmpiricalMeasure) -> DMatrix<f64> {
    let st = model.sigma_tilde(0.0, mu);
    let d = st.nrows();
    let l = model.lambda();
    let a = SymMatrix::symmetrized(&st * st.transpose() + DMatrix::identity(d, d) * (l * l));
    psd_sqrt(&a).expect("λ²I + σ~σ~* is positive definite").into_inner()
}

/// Probes `2⟨b(x,μ) − b(y,ν), x − y⟩ + ‖σ(μ) − σ(ν)‖²_HS ≤ θ₁W₂² − θ₂|x − y|²`
/// with `σ = √(λ²I + σ~σ~*)`.
pub fn check_dissipativity_e(
    model: &dyn MeanFieldModel,
    theta1: f64,
    theta2: f64,
    samples: usize,
    seed: u64,
) -> DissipativityReport {
    let n = model.dim();
    let rng = CounterRng::new(seed);
    let probes = (0..samples as u64)
        .map(|k| {
            let (x, y, mu, nu) = probe_points(&rng, k, n);
            let mut bx = vec![0.0; n];
            let mut by = vec![0.0; n];
            model.drift(0.0, &x, &mu, &mut bx);
            model.drift(0.0, &y, &nu, &mut by);
            let inner: f64 = (0..n).map(|a| (bx[a] - by[a]) * (x[a] - y[a])).sum();
            let hs = hs_sq(&full_sigma(model, &mu), &full_sigma(model, &nu));
            let dist: f64 = (0..n).map(|a| (x[a] - y[a]).powi(2)).sum();
            Probe { lhs: 2.0 * inner + hs, dist, w2: wasserstein_2_sq(&mu, &nu).expect("equal clouds") }
        })
        .collect();
    report(probes, theta1, theta2)
}

/// Probes the degenerate condition
/// `½‖σ~(μ) − σ~(ν)‖²_HS + ⟨Δb, Δ⁽²⁾ + r r₀ Mᵀ Δ⁽¹⁾⟩ + ⟨r² Δ⁽¹⁾ + r r₀ M Δ⁽²⁾, AΔ⁽¹⁾ + MΔ⁽²⁾⟩
/// ≤ θ₁W₂² − θ₂|Δ|²`.
#[allow(clippy::too_many_arguments)]
pub fn check_dissipativity_f(
    model: &dyn MeanFieldModel,
    r: f64,
    r0: f64,
    theta1: f64,
    theta2: f64,
    samples: usize,
    seed: u64,
) -> Result<DissipativityReport> {
    let s = model.structure().ok_or(Error::MissingStructure)?;
    check_lyapunov_params(r, r0, &s.m)?;
    let n = model.dim();
    let d = model.noise_dim();
    let md = n - d;
    let rng = CounterRng::new(seed);
    let probes = (0..samples as u64)
        .map(|k| {
            let (x, y, mu, nu) = probe_points(&rng, k, n);
            let mut bx = vec![0.0; d];
            let mut by = vec![0.0; d];
            model.drift(0.0, &x, &mu, &mut bx);
            model.drift(0.0, &y, &nu, &mut by);
            let delta = DVector::from_iterator(n, (0..n).map(|a| x[a] - y[a]));
            let d1 = delta.rows(0, md).into_owned();
            let d2 = delta.rows(md, d).into_owned();
            let db = DVector::from_iterator(d, (0..d).map(|a| bx[a] - by[a]));
            let hs = 0.5 * hs_sq(&model.sigma_tilde(0.0, &mu), &model.sigma_tilde(0.0, &nu));
            let t2 = db.dot(&(&d2 + s.m.transpose() * &d1 * (r * r0)));
            let t3 = (&d1 * (r * r) + &s.m * &d2 * (r * r0)).dot(&(&s.a * &d1 + &s.m * &d2));
            Probe { lhs: hs + t2 + t3, dist: delta.norm_squared(), w2: wasserstein_2_sq(&mu, &nu).expect("equal clouds") }
        })
        .collect();
    Ok(report(probes, theta1, theta2))
}

/// Particle approximation of the invariant measure: the ensemble at `burn_in`.
///
/// Stationarity is checked by comparing Gaussian fits of the ensembles at
/// `burn_in` and `burn_in + 1` against the floor `6 tr(Σ̂)/N`.
pub fn estimate_invariant_measure(
    model: &dyn MeanFieldModel,
    initial: &EmpiricalMeasure,
    burn_in: f64,
    plan: &NoisePlan,
) -> Result<EmpiricalMeasure> {
    let s0 = plan.steps_for(burn_in).ok_or_else(|| Error::GridMismatch(format!("burn-in {burn_in} vs h = {}", plan.h)))?;
    let s1 = plan.steps_for(burn_in + 1.0).ok_or_else(|| Error::GridMismatch(format!("burn-in + 1 vs h = {}", plan.h)))?;
    let mut at_burn = None;
    let last = run_ensemble(model, initial, plan, s1, WTildeMode::PerParticle, &mut |e| {
        if e.step == s0 {
            at_burn = Some(e.empirical_measure());
        }
        Ok(())
    })?;
    let a = at_burn.expect("burn-in step visited");
    let b = last.empirical_measure();
    let fa = gaussian_fit(&a)?;
    let fb = gaussian_fit(&b)?;
    let stat = gaussian_w2sq(&fa, &fb)?;
    let floor = 6.0 * fa.cov.trace() / a.len() as f64 + 1e-12;
    if stat > floor {
        return Err(Error::NotConverged { statistic: stat, floor });
    }
    Ok(a)
}

/// Exponential decay fit `log y ≈ c − rate · t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub w2sq: Vec<f64>,
    pub entropy: Option<Vec<f64>>,
    /// Noise level; only points above `10 · floor` enter the fit.
    pub floor: f64,
    /// Points used in the fit.
    pub fit_window: (f64, f64),
    /// `None` when fewer than three points sit above the floor (already flat).
    pub fit: Option<LinearFit>,
    pub fitted_rate: f64,
    pub theoretical_rate: f64,
}

impl DecayReport {
    pub fn rate_ci95(&self) -> f64 {
        self.fit.map_or(f64::NAN, |f| f.slope_ci95())
    }

    /// Fitted rate within the 25% slack of the theoretical rate.
    pub fn pass(&self) -> bool {
        self.fitted_rate >= 0.75 * self.theoretical_rate
    }
}

/// Two-sided 95% Student-t quantiles, 1 to 10 degrees of freedom.
const T975: [f64; 10] = [12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228];

/// Fitted rates of independent replicates of one decay experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicatedRate {
    pub rates: Vec<f64>,
    pub mean: f64,
    /// Student-t 95% half-width; the per-fit regression interval ignores the
    /// correlation between points of one path and is far too narrow.
    pub ci95: f64,
}

pub fn replicated_rate(reports: &[DecayReport]) -> ReplicatedRate {
    let rates: Vec<f64> = reports.iter().map(|r| r.fitted_rate).collect();
    let (mean, se) = mean_se(&rates);
    let df = rates.len().saturating_sub(1);
    let q = if df == 0 { f64::NAN } else { T975[df.min(T975.len()) - 1] };
    ReplicatedRate { rates, mean, ci95: q * se }
}

/// Fits `log y` on points with `y > 10·floor` and `t ≥ t_min`.
fn fit_decay(times: &[f64], ys: &[f64], floor: f64, t_min: f64) -> Option<(LinearFit, (f64, f64))> {
    let mut tx = Vec::new();
    let mut ly = Vec::new();
    for (t, y) in times.iter().zip(ys) {
        if *t >= t_min && *y > 10.0 * floor && *y > 0.0 {
            tx.push(*t);
            ly.push(y.ln());
        }
    }
    if tx.len() < 3 {
        return None;
    }
    Some((linear_fit(&tx, &ly), (tx[0], *tx.last().unwrap())))
}

fn decay_report(times: &[f64], w2sq: Vec<f64>, entropy: Option<Vec<f64>>, floor: f64, t_min: f64, theoretical_rate: f64) -> DecayReport {
    let fitted = entropy.as_ref().unwrap_or(&w2sq);
    let fit = fit_decay(times, fitted, floor, t_min);
    DecayReport {
        times: times.to_vec(),
        fit_window: fit.map_or((f64::NAN, f64::NAN), |f| f.1),
        fitted_rate: fit.map_or(f64::INFINITY, |f| -f.0.slope),
        fit: fit.map(|f| f.0),
        w2sq,
        entropy,
        floor,
        theoretical_rate,
    }
}

fn subsample(mu: &EmpiricalMeasure, start: usize, len: usize) -> EmpiricalMeasure {
    let n = mu.dim();
    EmpiricalMeasure::uniform(mu.points()[start * n..(start + len) * n].to_vec(), n).expect("non-empty")
}

/// Largest subsample used for exact assignment.
pub const W2_SUBSAMPLE: usize = 512;

/// Monte Carlo `W₂(P_t* μ₀, μ̄)²` at `times` against a sample `reference` of
/// the invariant measure. The first `N` reference points are evolved with the
/// same noise lanes as `μ₀` (common random numbers), so sampling error in the
/// initial mean offset contracts with the signal instead of setting a floor.
/// Subsamples of size `min(N, |reference|/2, 512)` are compared by exact
/// assignment; two disjoint reference subsamples give the noise level.
pub fn w2_decay_rate(
    model: &dyn MeanFieldModel,
    mu0: &EmpiricalMeasure,
    reference: &EmpiricalMeasure,
    times: &[f64],
    plan: &NoisePlan,
    theoretical_rate: f64,
) -> Result<DecayReport> {
    let sub = mu0.len().min(reference.len() / 2).min(W2_SUBSAMPLE);
    if sub < 2 {
        return Err(Error::TooFewParticles { n: reference.len(), dim: model.dim() });
    }
    let floor = wasserstein_2_sq(&subsample(reference, 0, sub), &subsample(reference, sub, sub))?;
    let mut idx = Vec::with_capacity(times.len());
    for t in times {
        idx.push(plan.steps_for(*t).ok_or_else(|| Error::GridMismatch(format!("t = {t} vs h = {}", plan.h)))?);
    }
    let last = *idx.iter().max().unwrap_or(&0);
    let mut refs: Vec<Option<EmpiricalMeasure>> = vec![None; times.len()];
    let ref0 = subsample(reference, 0, mu0.len().min(reference.len()));
    run_ensemble(model, &ref0, plan, last, WTildeMode::PerParticle, &mut |e| {
        for (k, s) in idx.iter().enumerate() {
            if *s == e.step {
                refs[k] = Some(subsample(&e.empirical_measure(), 0, sub));
            }
        }
        Ok(())
    })?;
    let mut w2sq = vec![f64::NAN; times.len()];
    run_ensemble(model, mu0, plan, last, WTildeMode::PerParticle, &mut |e| {
        for (k, s) in idx.iter().enumerate() {
            if *s == e.step {
                let r = refs[k].as_ref().expect("reference snapshot recorded");
                w2sq[k] = wasserstein_2_sq(&subsample(&e.empirical_measure(), 0, sub), r)?;
            }
        }
        Ok(())
    })?;
    Ok(decay_report(times, w2sq, None, floor, 0.0, theoretical_rate))
}

/// Closed-form `Ent(P_t* μ₀ | μ̄)` and `W₂²` along the Gaussian path; the
/// entropy fit only uses `t ≥ 1`.
pub fn entropy_decay_rate(
    system: &LinearGaussianSystem,
    law0: &GaussianLaw,
    times: &[f64],
    theoretical_rate: f64,
) -> Result<DecayReport> {
    let bar = system.stationary()?;
    let mut ent = Vec::with_capacity(times.len());
    let mut w2 = Vec::with_capacity(times.len());
    for t in times {
        let law = system.propagate(law0, *t);
        ent.push(gaussian_kl(&law, &bar)?);
        w2.push(gaussian_w2sq(&law, &bar)?);
    }
    // KL of Gaussians is evaluated to roughly 1e-15 absolute
    Ok(decay_report(times, w2, Some(ent), 1e-14, 1.0, theoretical_rate))
}

/// `W₂` decay for a degenerate model; the theoretical rate is `c₀(θ₂ − θ₁)`.
pub fn degenerate_decay_rate(
    model: &dyn MeanFieldModel,
    mu0: &EmpiricalMeasure,
    reference: &EmpiricalMeasure,
    times: &[f64],
    plan: &NoisePlan,
    theoretical_rate: f64,
) -> Result<DecayReport> {
    model.structure().ok_or(Error::MissingStructure)?;
    w2_decay_rate(model, mu0, reference, times, plan, theoretical_rate)
}

/// Decay rate of `|mean_t − mean̄|²` for a linear Gaussian system:
/// `−2 max Re spec(F + G)`.
pub fn mean_decay_rate(system: &LinearGaussianSystem) -> f64 {
    let fg = &system.f + &system.g;
    let ev = fg.complex_eigenvalues();
    -2.0 * ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Mean over particles of a discrepancy between two synchronously coupled
/// particle systems (same noise lanes, particle `i` paired with particle `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct SynchronousReport {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub fit: LinearFit,
    pub fitted_rate: f64,
}

/// `mean_i g(X_i(t) − Y_i(t))` at `times` under synchronous coupling, with an
/// exponential fit over the whole grid. `g` is `|·|²` or `ρ`.
pub fn synchronous_decay(
    model: &dyn MeanFieldModel,
    mu0: &EmpiricalMeasure,
    nu0: &EmpiricalMeasure,
    times: &[f64],
    plan: &NoisePlan,
    g: &dyn Fn(&[f64]) -> f64,
) -> Result<SynchronousReport> {
    if mu0.len() != nu0.len() {
        return Err(Error::SizeMismatch(mu0.len(), nu0.len()));
    }
    let n = model.dim();
    let mut idx = Vec::with_capacity(times.len());
    for t in times {
        idx.push(plan.steps_for(*t).ok_or_else(|| Error::GridMismatch(format!("t = {t} vs h = {}", plan.h)))?);
    }
    let last = *idx.iter().max().unwrap_or(&0);
    let collect = |init: &EmpiricalMeasure| -> Result<Vec<Vec<f64>>> {
        let mut out = vec![Vec::new(); times.len()];
        run_ensemble(model, init, plan, last, WTildeMode::PerParticle, &mut |e| {
            for (k, s) in idx.iter().enumerate() {
                if *s == e.step {
                    out[k] = e.states().to_vec();
                }
            }
            Ok(())
        })?;
        Ok(out)
    };
    let xs = collect(mu0)?;
    let ys = collect(nu0)?;
    let values: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let vals: Vec<f64> = x
                .chunks(n)
                .zip(y.chunks(n))
                .map(|(a, b)| g(&a.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>()))
                .collect();
            crate::stats::mean(&vals)
        })
        .collect();
    let (fit, _) = fit_decay(times, &values, 0.0, 0.0)
        .ok_or_else(|| Error::EstimatorDegenerate("synchronous discrepancy vanished".into()))?;
    Ok(SynchronousReport { times: times.to_vec(), values, fit, fitted_rate: -fit.slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::Preset;

    fn kin_m() -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0])
    }

    #[test]
    fn rho_examples() {
        let m = kin_m();
        assert_eq!(lyapunov_rho(&[0.0; 3], 2.0, 0.3, &m).unwrap(), 0.0);
        let x = [0.3, -0.7, 1.1];
        let v = lyapunov_rho(&x, 2.0, 0.0, &m).unwrap();
        assert!((v - (2.0 * (0.09 + 0.49) + 0.5 * 1.21)).abs() < 1e-15);
        assert!((sandwich_constant(2.0, 0.0, &m).unwrap() - 0.5).abs() < 1e-14);
        assert!((sandwich_constant(0.5, 0.0, &m).unwrap() - 0.125).abs() < 1e-14);
        assert!(matches!(sandwich_constant(1.0, 1.0, &m), Err(Error::ParameterOutOfRange(_))));
    }

    #[test]
    fn linear_e_constants_hold() {
        let p = Preset::by_name("linear-ou").unwrap();
        let c = p.constants();
        let r = check_dissipativity_e(p.model(), c.theta1, c.theta2, 400, 3);
        assert!(r.pass(), "{r:?}");
        // the fit cannot beat the true constants on the mean-only part
        assert!(r.implied_rate() >= c.rate - 1e-9, "{r:?}");
        assert!((r.theta2_fit - 2.0).abs() < 0.6);
    }

    #[test]
    fn distribution_free_theta1_vanishes() {
        let p = Preset::build("linear-ou", &[("eps".to_string(), 0.0)].into_iter().collect()).unwrap();
        let r = check_dissipativity_e(p.model(), 0.0, 2.0, 300, 5);
        assert!(r.theta1_fit.abs() < 1e-9, "{r:?}");
        assert!((r.theta2_fit - 2.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn weak_confinement_flagged() {
        let p = Preset::build("linear-ou", &[("beta".to_string(), 0.2), ("eps".to_string(), 1.0)].into_iter().collect())
            .unwrap();
        let c = p.constants();
        let r = check_dissipativity_e(p.model(), c.theta1, c.theta2, 400, 7);
        assert!(!r.pass());
        assert!(r.implied_rate() <= 0.0, "{r:?}");
    }

    #[test]
    fn kinetic_f_certified() {
        let p = Preset::by_name("kinetic-langevin").unwrap();
        let c = p.constants();
        let (r, r0, _) = c.lyapunov.unwrap();
        let rep = check_dissipativity_f(p.model(), r, r0, c.theta1, c.theta2, 600, 11).unwrap();
        assert!(rep.pass(), "{rep:?}");
        assert!(rep.implied_rate() > 0.0);
    }

    #[test]
    fn kinetic_without_measure_coupling() {
        let p = Preset::build("kinetic-langevin", &[("eps".to_string(), 0.0)].into_iter().collect()).unwrap();
        let c = p.constants();
        let (r, r0, _) = c.lyapunov.unwrap();
        let rep = check_dissipativity_f(p.model(), r, r0, c.theta1, c.theta2, 400, 13).unwrap();
        assert!(rep.theta1_fit.abs() < 1e-9, "{rep:?}");
        assert!(rep.pass());
    }

    #[test]
    fn weak_friction_flagged() {
        let o = [("a", 0.0), ("kp", 0.0), ("kz", 0.05), ("eps", 0.5)].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let p = Preset::build("kinetic-langevin", &o).unwrap();
        let rep = check_dissipativity_f(p.model(), KR, KR0, 0.0, 0.1, 400, 17).unwrap();
        assert!(!rep.pass());
        assert!(rep.implied_rate() <= 0.0, "{rep:?}");
    }

    const KR: f64 = crate::presets::KINETIC_R;
    const KR0: f64 = crate::presets::KINETIC_R0;

    #[test]
    fn ou_stationary_sample() {
        let p = Preset::by_name("linear-ou").unwrap();
        let init = EmpiricalMeasure::repeated(&[2.0, -1.0], 2000);
        let plan = NoisePlan::new(21, 0.01);
        let bar = estimate_invariant_measure(p.model(), &init, 8.0, &plan).unwrap();
        let fit = gaussian_fit(&bar).unwrap();
        // stationary covariance (λ² + s²)/(2β) I = I, mean 0
        let exact = p.gaussian_system().unwrap().stationary().unwrap();
        assert!(gaussian_w2sq(&fit, &exact).unwrap() < 0.02);
    }

    #[test]
    fn not_converged_reported() {
        let p = Preset::build("linear-ou", &[("beta".to_string(), 0.05), ("eps".to_string(), 0.0)].into_iter().collect()).unwrap();
        let init = EmpiricalMeasure::repeated(&[20.0, -20.0], 500);
        let plan = NoisePlan::new(22, 0.05);
        assert!(matches!(estimate_invariant_measure(p.model(), &init, 1.0, &plan), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn closed_form_mean_rate() {
        let p = Preset::by_name("linear-ou").unwrap();
        let sys = p.gaussian_system().unwrap();
        assert!((mean_decay_rate(&sys) - 1.0).abs() < 1e-12);
        let law0 = GaussianLaw::new(DVector::from_vec(vec![3.0, -2.0]), SymMatrix::identity(2)).unwrap();
        let times: Vec<f64> = (0..=20).map(|i| 0.5 * i as f64).collect();
        let rep = entropy_decay_rate(&sys, &law0, &times, 1.0).unwrap();
        assert!((rep.fitted_rate - 1.0).abs() < 1e-9, "{}", rep.fitted_rate);
        assert_eq!(rep.fit_window.0, 1.0);
        // start at μ̄: entropy identically 0
        let bar = sys.stationary().unwrap();
        let flat = entropy_decay_rate(&sys, &bar, &times, 1.0).unwrap();
        assert!(flat.entropy.unwrap().iter().all(|e| e.abs() < 1e-12));
        assert!(flat.fit.is_none());
    }
}
