//! Bismut-type estimators of the intrinsic derivative `D^I_φ P_t f(μ)` and
//! the finite-difference oracle they are checked against.
//!
//! The law flow carries tangents `∇_φ X` for every particle (pass 1); the
//! mean-field expectations in `N` and `M` are particle averages over it.
//! Replicas (pass 2) start from points of `μ` and run with their own `W` and
//! `W~` against the stored flow.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::coupling::SteeringGrid;
use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::model::MeanFieldModel;
use crate::rng::{NoisePlan, Stream};
use crate::sde::{simulate_law_flow, simulate_law_flow_with_tangents, simulate_on_flow, LawFlow, TangentTrajectory};
use crate::stats::{linear_fit, mean, mean_se, LinearFit};

/// Perturbation direction `φ`.
pub type PhiFn = dyn Fn(&[f64]) -> Vec<f64> + Sync;
/// Test function `f`.
pub type ScalarFn = dyn Fn(&[f64]) -> f64 + Sync;

/// `N_{s_j,t}` for `j = 0..=steps` and `M_{s_j,t}` for `j < steps`.
#[derive(Debug, Clone)]
pub struct NmProcess {
    pub n: Vec<DVector<f64>>,
    pub m: Vec<DVector<f64>>,
}

/// `H_j = Σ_{i<j} G_i ΔW~_i`, `j = 0..=steps`.
fn h_integral(traj: &TangentTrajectory, dwt: &[f64], d: usize, steps: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut acc = DVector::zeros(d);
    out.push(acc.clone());
    for j in 0..steps {
        acc += &traj.g[j] * DVector::from_column_slice(&dwt[j * d..(j + 1) * d]);
        out.push(acc.clone());
    }
    out
}

fn check_grid(flow: &LawFlow, traj: &TangentTrajectory, t: f64) -> Result<usize> {
    let steps = flow
        .plan
        .steps_for(t)
        .filter(|s| *s > 0)
        .ok_or_else(|| Error::GridMismatch(format!("t = {t} is not a positive multiple of h = {}", flow.h())))?;
    if flow.steps < steps || traj.tangents.len() <= steps {
        return Err(Error::FlowHorizonTooShort { available: flow.horizon(), requested: t });
    }
    Ok(steps)
}

fn lions_mean_at(model: &dyn MeanFieldModel, flow: &LawFlow, traj: &TangentTrajectory, j: usize, x: &[f64]) -> DVector<f64> {
    let d = model.noise_dim();
    let mut out = vec![0.0; d];
    model.lions_drift_mean(flow.time(j), x, flow.measure(j), &traj.tangents[j], &traj.means[j], &mut out);
    DVector::from_vec(out)
}

/// `N_{s,t} = ((t−s)/t) φ(X₀) + H_s − (s/t) H_t` and
/// `M_{s,t} = mean_i D^I b(X_s)(x_i) v_i + φ(X₀)/t + H_t/t` along one replica
/// path `x_path` (`(steps + 1) × d`) with `W~` increments `dwt`.
pub fn build_nm_nondegenerate(
    model: &dyn MeanFieldModel,
    flow: &LawFlow,
    traj: &TangentTrajectory,
    phi0: &[f64],
    x_path: &[f64],
    dwt: &[f64],
    t: f64,
) -> Result<NmProcess> {
    if model.structure().is_some() {
        return Err(Error::DimensionMismatch("use build_bismut_degenerate for Hamiltonian models".into()));
    }
    let steps = check_grid(flow, traj, t)?;
    let d = model.noise_dim();
    if x_path.len() < (steps + 1) * d || dwt.len() < steps * d {
        return Err(Error::GridMismatch("replica path shorter than the time grid".into()));
    }
    let phi = DVector::from_column_slice(phi0);
    let h = h_integral(traj, dwt, d, steps);
    let ht = h[steps].clone();
    let mut n = Vec::with_capacity(steps + 1);
    let mut m = Vec::with_capacity(steps);
    for j in 0..=steps {
        let s = flow.time(j);
        n.push(&phi * ((t - s) / t) + &h[j] - &ht * (s / t));
        if j < steps {
            let lm = lions_mean_at(model, flow, traj, j, &x_path[j * d..(j + 1) * d]);
            m.push(lm + (&phi + &ht) / t);
        }
    }
    Ok(NmProcess { n, m })
}

/// Processes of the degenerate construction along one replica path.
#[derive(Debug, Clone)]
pub struct DegenerateProcesses {
    pub gamma: Vec<DVector<f64>>,
    pub v: DVector<f64>,
    pub alpha: Vec<DVector<f64>>,
    pub alpha_prime: Vec<DVector<f64>>,
    /// `N = (N⁽¹⁾, N⁽²⁾)` stacked, `j = 0..=steps`.
    pub nm: NmProcess,
}

/// `γ`, `V`, `α`, `N⁽¹⁾`, `N⁽²⁾`, `M` for a degenerate model. `grid` must match
/// `(t, h)`.
#[allow(clippy::too_many_arguments)]
pub fn build_bismut_degenerate(
    model: &dyn MeanFieldModel,
    flow: &LawFlow,
    traj: &TangentTrajectory,
    phi0: &[f64],
    x_path: &[f64],
    dwt: &[f64],
    t: f64,
    grid: &SteeringGrid,
) -> Result<DegenerateProcesses> {
    let s = model.structure().ok_or(Error::MissingStructure)?;
    let steps = check_grid(flow, traj, t)?;
    if grid.steps != steps || (grid.t - t).abs() > 1e-12 * t {
        return Err(Error::GridMismatch(format!("steering grid ({}, {}) vs ({t}, {steps})", grid.t, grid.steps)));
    }
    let n = model.dim();
    let d = model.noise_dim();
    let md = s.m_dim();
    let phi1 = DVector::from_column_slice(&phi0[..md]);
    let phi2 = DVector::from_column_slice(&phi0[md..]);
    let gamma = h_integral(traj, dwt, d, steps);
    let st = grid.solve(&phi1, &phi2, &(-&gamma[steps]), &gamma[..steps]);
    let mut alpha = Vec::with_capacity(steps + 1);
    let mut alpha_prime = Vec::with_capacity(steps);
    let mut nn = Vec::with_capacity(steps + 1);
    let mut mm = Vec::with_capacity(steps);
    for j in 0..=steps {
        let a = grid.alpha(&st, j);
        let n1 = grid.block1(&st, j);
        let n2 = &a + &phi2 + &gamma[j];
        let mut full = DVector::zeros(n);
        full.rows_mut(0, md).copy_from(&n1);
        full.rows_mut(md, d).copy_from(&n2);
        nn.push(full);
        alpha.push(a);
        if j < steps {
            let ap = grid.alpha_prime(&st, j);
            let lm = lions_mean_at(model, flow, traj, j, &x_path[j * n..(j + 1) * n]);
            mm.push(lm - &ap);
            alpha_prime.push(ap);
        }
    }
    Ok(DegenerateProcesses { gamma, v: st.v.clone(), alpha, alpha_prime, nm: NmProcess { n: nn, m: mm } })
}

/// `(1/λ) Σ_j ⟨∇_{N_j} b(X_j) + M_j, ΔW_j⟩`.
pub fn bismut_weight(
    model: &dyn MeanFieldModel,
    flow: &LawFlow,
    x_path: &[f64],
    nm: &NmProcess,
    dw: &[f64],
) -> f64 {
    let n = model.dim();
    let d = model.noise_dim();
    let mut g = vec![0.0; d];
    let mut acc = 0.0;
    for (j, m) in nm.m.iter().enumerate() {
        let x = &x_path[j * n..(j + 1) * n];
        model.grad_x_drift(flow.time(j), x, flow.measure(j), nm.n[j].as_slice(), &mut g);
        for a in 0..d {
            acc += (g[a] + m[a]) * dw[j * d + a];
        }
    }
    acc / model.lambda()
}

/// Index into `μ` of the starting point of replica `r`.
pub fn replica_start(plan: &NoisePlan, r: u64, len: usize) -> usize {
    ((plan.rng().uniform(Stream::REPLICA_INITIAL, r, 0) * len as f64) as usize).min(len - 1)
}

/// Per-replica terminal states and weights; evaluate any `f` afterwards.
#[derive(Debug, Clone)]
pub struct BismutRun {
    pub t: f64,
    pub dim: usize,
    /// `replicas × n`.
    pub terminal: Vec<f64>,
    pub weights: Vec<f64>,
    /// Terminal flow cloud, used for the control-variate baseline.
    pub cloud: EmpiricalMeasure,
}

/// `D^I_φ P_t f(μ)` estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BismutEstimate {
    pub value: f64,
    pub std_error: f64,
    pub replicas: usize,
    pub t: f64,
    /// `(mean L²)^{1/2}` of the weight.
    pub weight_l2: f64,
    /// `(mean f(X_t)²)^{1/2}`, the `k* = 2` norm in the derivative bounds.
    pub f_l2: f64,
}

impl BismutRun {
    pub fn replicas(&self) -> usize {
        self.weights.len()
    }

    pub fn weight_l2(&self) -> f64 {
        mean(&self.weights.iter().map(|w| w * w).collect::<Vec<_>>()).sqrt()
    }

    /// `mean_r [(f(X_t^r) − f̄) L_r]` with `f̄` the flow-cloud average of `f`;
    /// subtracting a constant leaves the mean unchanged since `E[L] = 0`.
    pub fn estimate(&self, f: &ScalarFn) -> BismutEstimate {
        let n = self.dim;
        let fbar = mean(&(0..self.cloud.len()).map(|i| f(self.cloud.point(i))).collect::<Vec<_>>());
        let fx: Vec<f64> = self.terminal.chunks(n).map(f).collect();
        let vals: Vec<f64> = fx.iter().zip(&self.weights).map(|(v, w)| (v - fbar) * w).collect();
        let (value, std_error) = mean_se(&vals);
        BismutEstimate {
            value,
            std_error,
            replicas: vals.len(),
            t: self.t,
            weight_l2: self.weight_l2(),
            f_l2: mean(&fx.iter().map(|v| v * v).collect::<Vec<_>>()).sqrt(),
        }
    }
}

/// Pass 1 for the estimators: flow with tangents started from `φ`.
pub fn bismut_flow(
    model: &dyn MeanFieldModel,
    mu: &EmpiricalMeasure,
    phi: &PhiFn,
    plan: &NoisePlan,
    horizon: f64,
) -> Result<(LawFlow, TangentTrajectory)> {
    let steps = plan.steps_for(horizon).ok_or_else(|| Error::GridMismatch(format!("t = {horizon} vs h = {}", plan.h)))?;
    simulate_law_flow_with_tangents(model, mu, plan, steps, phi)
}

/// Pass 2 on a precomputed flow. Replica `r` starts at `μ[replica_start(r)]`
/// and draws `W`, `W~` from the replica streams on lane `r`.
#[allow(clippy::too_many_arguments)]
pub fn bismut_replicas(
    model: &dyn MeanFieldModel,
    mu: &EmpiricalMeasure,
    flow: &LawFlow,
    traj: &TangentTrajectory,
    phi: &PhiFn,
    t: f64,
    replicas: usize,
    grid: Option<&SteeringGrid>,
) -> Result<BismutRun> {
    let steps = check_grid(flow, traj, t)?;
    let n = model.dim();
    let d = model.noise_dim();
    if model.structure().is_some() && grid.is_none() {
        return Err(Error::MissingStructure);
    }
    let plan = flow.plan;
    let rows: Vec<(Vec<f64>, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let x0 = mu.point(replica_start(&plan, r, mu.len()));
            let dw = plan.path_increments(Stream::REPLICA_W, r, steps, d);
            let dwt = plan.path_increments(Stream::REPLICA_W_TILDE, r, steps, d);
            let path = simulate_on_flow(model, flow, x0, &dw, &dwt, steps)?;
            let phi0 = phi(x0);
            let nm = match grid {
                Some(g) => build_bismut_degenerate(model, flow, traj, &phi0, &path, &dwt, t, g)?.nm,
                None => build_nm_nondegenerate(model, flow, traj, &phi0, &path, &dwt, t)?,
            };
            let w = bismut_weight(model, flow, &path, &nm, &dw);
            Ok((path[steps * n..(steps + 1) * n].to_vec(), w))
        })
        .collect::<Result<_>>()?;
    let mut terminal = Vec::with_capacity(replicas * n);
    let mut weights = Vec::with_capacity(replicas);
    for (x, w) in rows {
        terminal.extend(x);
        weights.push(w);
    }
    Ok(BismutRun { t, dim: n, terminal, weights, cloud: flow.measure(steps).clone() })
}

/// Non-degenerate estimator, both passes.
pub fn bismut_nondegenerate(
    model: &dyn MeanFieldModel,
    mu: &EmpiricalMeasure,
    phi: &PhiFn,
    t: f64,
    plan: &NoisePlan,
    replicas: usize,
) -> Result<BismutRun> {
    if model.structure().is_some() {
        return Err(Error::DimensionMismatch("use bismut_degenerate for Hamiltonian models".into()));
    }
    let (flow, traj) = bismut_flow(model, mu, phi, plan, t)?;
    bismut_replicas(model, mu, &flow, &traj, phi, t, replicas, None)
}

/// Degenerate estimator, both passes.
pub fn bismut_degenerate(
    model: &dyn MeanFieldModel,
    mu: &EmpiricalMeasure,
    phi: &PhiFn,
    t: f64,
    plan: &NoisePlan,
    replicas: usize,
) -> Result<BismutRun> {
    let s = model.structure().ok_or(Error::MissingStructure)?;
    let (flow, traj) = bismut_flow(model, mu, phi, plan, t)?;
    let grid = SteeringGrid::new(s, t, flow.steps)?;
    bismut_replicas(model, mu, &flow, &traj, phi, t, replicas, Some(&grid))
}

/// Terminal states of replicas started from `μ` and from `μ∘(id + εφ)^{-1}`
/// with identical noise.
#[derive(Debug, Clone)]
pub struct FdRun {
    pub eps: f64,
    pub dim: usize,
    pub base: Vec<f64>,
    pub perturbed: Vec<f64>,
}

/// Value and standard error of a difference quotient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdEstimate {
    pub value: f64,
    pub std_error: f64,
}

impl FdRun {
    fn per_replica(&self, f: &ScalarFn) -> Vec<f64> {
        self.base
            .chunks(self.dim)
            .zip(self.perturbed.chunks(self.dim))
            .map(|(a, b)| (f(b) - f(a)) / self.eps)
            .collect()
    }

    pub fn quotient(&self, f: &ScalarFn) -> FdEstimate {
        let (value, std_error) = mean_se(&self.per_replica(f));
        FdEstimate { value, std_error }
    }
}

/// `2 Q(ε/2) − Q(ε)`, replica by replica.
pub fn richardson(coarse: &FdRun, fine: &FdRun, f: &ScalarFn) -> Result<FdEstimate> {
    if (coarse.eps - 2.0 * fine.eps).abs() > 1e-15 * coarse.eps || coarse.base.len() != fine.base.len() {
        return Err(Error::LengthMismatch("Richardson needs runs at ε and ε/2 with equal replicas".into()));
    }
    let qc = coarse.per_replica(f);
    let qf = fine.per_replica(f);
    let v: Vec<f64> = qc.iter().zip(&qf).map(|(c, h)| 2.0 * h - c).collect();
    let (value, std_error) = mean_se(&v);
    Ok(FdEstimate { value, std_error })
}

/// Finite-difference oracle for `D^I_φ P_t f(μ)`. The perturbed cloud and the
/// perturbed replicas share every noise stream with the unperturbed ones.
pub fn lions_fd_oracle(
    model: &dyn MeanFieldModel,
    mu: &EmpiricalMeasure,
    phi: &PhiFn,
    t: f64,
    eps: f64,
    plan: &NoisePlan,
    replicas: usize,
) -> Result<FdRun> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::ParameterOutOfRange(format!("ε must lie in (0, 1], got {eps}")));
    }
    let steps = plan.steps_for(t).ok_or_else(|| Error::GridMismatch(format!("t = {t} vs h = {}", plan.h)))?;
    let n = model.dim();
    let d = model.noise_dim();
    let base_flow = simulate_law_flow(model, mu, plan, steps)?;
    let pert_flow = simulate_law_flow(model, &mu.pushforward(eps, phi), plan, steps)?;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let x0 = mu.point(replica_start(plan, r, mu.len()));
            let x0e: Vec<f64> = x0.iter().zip(phi(x0)).map(|(a, p)| a + eps * p).collect();
            let dw = plan.path_increments(Stream::REPLICA_W, r, steps, d);
            let dwt = plan.path_increments(Stream::REPLICA_W_TILDE, r, steps, d);
            let a = simulate_on_flow(model, &base_flow, x0, &dw, &dwt, steps)?;
            let b = simulate_on_flow(model, &pert_flow, &x0e, &dw, &dwt, steps)?;
            Ok((a[steps * n..].to_vec(), b[steps * n..].to_vec()))
        })
        .collect::<Result<_>>()?;
    let mut base = Vec::with_capacity(replicas * n);
    let mut perturbed = Vec::with_capacity(replicas * n);
    for (a, b) in rows {
        base.extend(a);
        perturbed.extend(b);
    }
    Ok(FdRun { eps, dim: n, base, perturbed })
}

/// Log-log fits of `|estimate|` and of the weight norm against `t`.
#[derive(Debug, Clone)]
pub struct RateProbe {
    pub t: Vec<f64>,
    pub estimates: Vec<BismutEstimate>,
    pub estimate_fit: LinearFit,
    pub weight_fit: LinearFit,
}

impl RateProbe {
    /// Passes when the weight norm blows up no faster than `t^{-rate} · t^{-slack}`.
    pub fn weight_slope_ok(&self, rate: f64, slack: f64) -> bool {
        self.weight_fit.slope >= -rate - slack
    }
}

/// Runs the estimator at every `t` in `t_grid` on one flow.
pub fn derivative_rate_probe(
    model: &dyn MeanFieldModel,
    mu: &EmpiricalMeasure,
    phi: &PhiFn,
    f: &ScalarFn,
    t_grid: &[f64],
    plan: &NoisePlan,
    replicas: usize,
) -> Result<RateProbe> {
    let tmax = t_grid.iter().copied().fold(0.0, f64::max);
    let (flow, traj) = bismut_flow(model, mu, phi, plan, tmax)?;
    let mut estimates = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let grid = match model.structure() {
            Some(s) => Some(SteeringGrid::new(s, t, check_grid(&flow, &traj, t)?)?),
            None => None,
        };
        let run = bismut_replicas(model, mu, &flow, &traj, phi, t, replicas, grid.as_ref())?;
        estimates.push(run.estimate(f));
    }
    let lt: Vec<f64> = t_grid.iter().map(|t| t.ln()).collect();
    let le: Vec<f64> = estimates.iter().map(|e| e.value.abs().max(1e-300).ln()).collect();
    let lw: Vec<f64> = estimates.iter().map(|e| e.weight_l2.ln()).collect();
    Ok(RateProbe { t: t_grid.to_vec(), estimate_fit: linear_fit(&lt, &le), weight_fit: linear_fit(&lt, &lw), estimates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{HamiltonianStructure, SymMatrix};
    use crate::measure::GaussianLaw;
    use crate::presets::Preset;
    use nalgebra::DMatrix;

    fn cloud(n: usize, seed: u64) -> EmpiricalMeasure {
        GaussianLaw::new(DVector::from_vec(vec![0.5, -0.3]), SymMatrix::identity(2).scale(0.5))
            .unwrap()
            .sample(n, seed, Stream::INITIAL)
            .unwrap()
    }

    #[test]
    fn zero_direction_gives_zero() {
        let p = Preset::by_name("linear-ou").unwrap();
        let mu = cloud(200, 1);
        let plan = NoisePlan::new(3, 0.01);
        let zero = |x: &[f64]| vec![0.0; x.len()];
        let run = bismut_nondegenerate(p.model(), &mu, &zero, 0.5, &plan, 200).unwrap();
        assert!(run.weights.iter().all(|w| *w == 0.0));
        let fd = lions_fd_oracle(p.model(), &mu, &zero, 0.5, 0.1, &plan, 100).unwrap();
        assert_eq!(fd.quotient(&|x: &[f64]| x[0]).value, 0.0);
    }

    #[test]
    fn distribution_free_reduction() {
        let p = Preset::build("linear-ou", &[("eps".to_string(), 0.0)].into_iter().collect()).unwrap();
        let mu = cloud(100, 2);
        let plan = NoisePlan::new(4, 0.05);
        let phi = |_: &[f64]| vec![1.0, 0.5];
        let (flow, traj) = bismut_flow(p.model(), &mu, &phi, &plan, 1.0).unwrap();
        let dwt = plan.path_increments(Stream::REPLICA_W_TILDE, 0, 20, 2);
        let path = simulate_on_flow(p.model(), &flow, mu.point(0), &plan.path_increments(Stream::REPLICA_W, 0, 20, 2), &dwt, 20).unwrap();
        let nm = build_nm_nondegenerate(p.model(), &flow, &traj, &[1.0, 0.5], &path, &dwt, 1.0).unwrap();
        assert_eq!(nm.n[0].as_slice(), &[1.0, 0.5]);
        assert!(nm.n[20].norm() < 1e-15);
        for j in 0..20 {
            let s = j as f64 * 0.05;
            assert!((nm.n[j][0] - (1.0 - s)).abs() < 1e-14);
            assert!((&nm.m[j] - DVector::from_vec(vec![1.0, 0.5])).norm() < 1e-14);
        }
        // tangents of a distribution-free linear model: v_t = e^{Bt} φ
        let v = &traj.tangents[20];
        let expected = (1.0f64 - 0.05).powi(20);
        assert!((v[0] - expected).abs() < 1e-13 && (v[1] - 0.5 * expected).abs() < 1e-13);
    }

    #[test]
    fn degenerate_endpoint_cancels() {
        let p = Preset::by_name("kinetic-langevin").unwrap();
        let model = p.model();
        let mu = EmpiricalMeasure::uniform(vec![0.1, 0.2, 0.3, -0.1, 0.0, 0.4, 0.2, -0.3, 0.1], 3).unwrap();
        let plan = NoisePlan::new(5, 0.01);
        let phi = |_: &[f64]| vec![1.0, -0.5, 0.3];
        let (flow, traj) = bismut_flow(model, &mu, &phi, &plan, 0.5).unwrap();
        let grid = SteeringGrid::new(model.structure().unwrap(), 0.5, 50).unwrap();
        let dwt = plan.path_increments(Stream::REPLICA_W_TILDE, 0, 50, 1);
        let dw = plan.path_increments(Stream::REPLICA_W, 0, 50, 1);
        let path = simulate_on_flow(model, &flow, mu.point(0), &dw, &dwt, 50).unwrap();
        let pr = build_bismut_degenerate(model, &flow, &traj, &[1.0, -0.5, 0.3], &path, &dwt, 0.5, &grid).unwrap();
        assert!(pr.gamma.iter().all(|g| g.norm() == 0.0));
        assert!(pr.nm.n[50].norm() < 1e-12, "{}", pr.nm.n[50]);
        assert_eq!(pr.nm.n[0].as_slice(), &[1.0, -0.5, 0.3]);
    }

    #[test]
    fn alpha_closed_form_for_free_particle() {
        // A = 0, M = I: Q_t = (t/6) I
        let s = HamiltonianStructure::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        let t = 0.8;
        let grid = SteeringGrid::new(&s, t, 40).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let zero = DVector::zeros(2);
        let g = vec![DVector::zeros(2); 40];
        let st = grid.solve(&e1, &zero, &zero, &g);
        for j in 0..=40 {
            let sj = j as f64 * t / 40.0;
            let expected = -(sj * (t - sj) / (t * t)) * (6.0 / t);
            let a = grid.alpha(&st, j);
            assert!((a[0] - expected).abs() < 1e-9 && a[1].abs() < 1e-12);
        }
    }

    #[test]
    fn constant_f_is_centred() {
        let p = Preset::by_name("linear-ou").unwrap();
        let mu = cloud(300, 6);
        let plan = NoisePlan::new(7, 0.02);
        let phi = |_: &[f64]| vec![1.0, 0.0];
        let run = bismut_nondegenerate(p.model(), &mu, &phi, 0.5, &plan, 2000).unwrap();
        let e = run.estimate(&|_: &[f64]| 1.0);
        assert_eq!(e.value, 0.0);
        let w = mean_se(&run.weights);
        assert!(w.0.abs() <= 3.0 * w.1);
    }
}
