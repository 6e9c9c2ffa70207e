//! Mean-field particle integrators, law flows and replica paths.
//!
//! A [`LawFlow`] is pass 1 of the two-pass scheme: a particle cloud with
//! independent per-particle noises approximating `t ↦ P_t* μ`, stored step by
//! step together with `σ~(t_j, μ_j)`. Pass 2 runs single paths ("replicas")
//! of the decoupled SDE against the stored flow.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::model::MeanFieldModel;
use crate::rng::{NoisePlan, Stream};

/// How `W~` enters an ensemble step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WTildeMode {
    /// Independent `W~_i` per particle: law-flow estimation.
    PerParticle,
    /// One common `W~` path: conditioned runs.
    Shared,
}

/// `W~` increments for one step.
#[derive(Debug, Clone, Copy)]
pub enum WTildeIncrement<'a> {
    /// A single `d`-vector used by every particle.
    Shared(&'a [f64]),
    /// `N × d`, row per particle.
    PerParticle(&'a [f64]),
}

/// Particle states `N × n` at step `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    states: Vec<f64>,
    dim: usize,
    pub step: usize,
    pub t: f64,
}

impl ParticleEnsemble {
    pub fn new(initial: &EmpiricalMeasure) -> Self {
        Self { states: initial.points().to_vec(), dim: initial.dim(), step: 0, t: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn empirical_measure(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(self.states.clone(), self.dim).expect("ensemble is non-empty")
    }
}

fn check_finite(xs: &[f64], step: usize) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { step })
    }
}

/// One Euler step of a single state with frozen law `mu` and `σ~ = sigma`.
/// Handles the Hamiltonian block structure when present.
#[allow(clippy::too_many_arguments)]
pub fn step_state(
    model: &dyn MeanFieldModel,
    t: f64,
    x: &mut [f64],
    mu: &EmpiricalMeasure,
    sigma: &DMatrix<f64>,
    h: f64,
    dw: &[f64],
    dwt: &[f64],
    extra_drift: Option<&[f64]>,
) {
    let d = model.noise_dim();
    let off = model.dim() - d;
    let mut b = vec![0.0; d];
    model.drift(t, x, mu, &mut b);
    if let Some(e) = extra_drift {
        for (bi, ei) in b.iter_mut().zip(e) {
            *bi += ei;
        }
    }
    if let Some(s) = model.structure() {
        let m = off;
        let mut dx1 = vec![0.0; m];
        for i in 0..m {
            let mut acc = 0.0;
            for k in 0..m {
                acc += s.a[(i, k)] * x[k];
            }
            for k in 0..d {
                acc += s.m[(i, k)] * x[off + k];
            }
            dx1[i] = acc * h;
        }
        for i in 0..m {
            x[i] += dx1[i];
        }
    }
    let lambda = model.lambda();
    for a in 0..d {
        let mut noise = lambda * dw[a];
        for c in 0..d {
            noise += sigma[(a, c)] * dwt[c];
        }
        x[off + a] += b[a] * h + noise;
    }
}

fn step_with(
    model: &dyn MeanFieldModel,
    ens: &mut ParticleEnsemble,
    h: f64,
    dw: &[f64],
    dwt: WTildeIncrement<'_>,
) -> Result<()> {
    let d = model.noise_dim();
    let n = model.dim();
    if ens.dim != n {
        return Err(Error::DimensionMismatch(format!("ensemble dim {} vs model dim {n}", ens.dim)));
    }
    let count = ens.len();
    if dw.len() != count * d {
        return Err(Error::LengthMismatch(format!("ΔW has {} entries, expected {}", dw.len(), count * d)));
    }
    let mu = ens.empirical_measure();
    let sigma = model.sigma_tilde(ens.t, &mu);
    let t = ens.t;
    ens.states.par_chunks_mut(n).enumerate().for_each(|(i, x)| {
        let dwt_i = match dwt {
            WTildeIncrement::Shared(s) => s,
            WTildeIncrement::PerParticle(p) => &p[i * d..(i + 1) * d],
        };
        step_state(model, t, x, &mu, &sigma, h, &dw[i * d..(i + 1) * d], dwt_i, None);
    });
    ens.step += 1;
    ens.t += h;
    check_finite(&ens.states, ens.step)
}

/// `x_i ← x_i + b(t, x_i, μ̂) h + λ ΔW_i + σ~(t, μ̂) ΔW~_i` for a
/// non-degenerate model.
pub fn euler_maruyama_step(
    model: &dyn MeanFieldModel,
    ens: &mut ParticleEnsemble,
    h: f64,
    dw: &[f64],
    dwt: WTildeIncrement<'_>,
) -> Result<()> {
    if model.structure().is_some() {
        return Err(Error::DimensionMismatch("model has a Hamiltonian structure; use hamiltonian_step".into()));
    }
    step_with(model, ens, h, dw, dwt)
}

/// Euler step of the degenerate system: block 1 moves by `A x⁽¹⁾ + M x⁽²⁾`,
/// block 2 as in [`euler_maruyama_step`].
pub fn hamiltonian_step(
    model: &dyn MeanFieldModel,
    ens: &mut ParticleEnsemble,
    h: f64,
    dw: &[f64],
    dwt: WTildeIncrement<'_>,
) -> Result<()> {
    if model.structure().is_none() {
        return Err(Error::MissingStructure);
    }
    step_with(model, ens, h, dw, dwt)
}

fn ensemble_noise(plan: &NoisePlan, mode: WTildeMode, count: usize, d: usize, step: usize) -> (Vec<f64>, Vec<f64>) {
    let mut dw = vec![0.0; count * d];
    dw.par_chunks_mut(d).enumerate().for_each(|(i, row)| plan.increment(Stream::W, i as u64, step, row));
    let dwt = match mode {
        WTildeMode::PerParticle => {
            let mut v = vec![0.0; count * d];
            v.par_chunks_mut(d).enumerate().for_each(|(i, row)| plan.increment(Stream::W_TILDE, i as u64, step, row));
            v
        }
        WTildeMode::Shared => {
            let mut v = vec![0.0; d];
            plan.increment(Stream::SHARED_W_TILDE, 0, step, &mut v);
            v
        }
    };
    (dw, dwt)
}

/// Runs an ensemble for `steps` steps, calling `observe` before the first
/// step and after every step.
pub fn run_ensemble(
    model: &dyn MeanFieldModel,
    initial: &EmpiricalMeasure,
    plan: &NoisePlan,
    steps: usize,
    mode: WTildeMode,
    observe: &mut dyn FnMut(&ParticleEnsemble) -> Result<()>,
) -> Result<ParticleEnsemble> {
    let mut ens = ParticleEnsemble::new(initial);
    let d = model.noise_dim();
    observe(&ens)?;
    for j in 0..steps {
        let (dw, dwt) = ensemble_noise(plan, mode, ens.len(), d, j);
        let inc = match mode {
            WTildeMode::PerParticle => WTildeIncrement::PerParticle(&dwt),
            WTildeMode::Shared => WTildeIncrement::Shared(&dwt),
        };
        step_with(model, &mut ens, plan.h, &dw, inc)?;
        observe(&ens)?;
    }
    Ok(ens)
}

/// Per-step record of a simulated law flow.
#[derive(Debug, Clone)]
pub struct LawFlow {
    pub plan: NoisePlan,
    pub steps: usize,
    /// `μ̂_j`, `j = 0..=steps`.
    pub snapshots: Vec<Arc<EmpiricalMeasure>>,
    /// `σ~(t_j, μ̂_j)`.
    pub sigma: Vec<DMatrix<f64>>,
    /// `ξ_j` along the designated shared `W~` stream.
    pub xi: Vec<DVector<f64>>,
}

/// Tangent vectors `∇_φ X` of every flow particle at every step, plus the
/// derived per-step averages used by the Bismut weights.
#[derive(Debug, Clone)]
pub struct TangentTrajectory {
    /// Row-major `N × n` per step.
    pub tangents: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    /// `G_j = mean_i D^I σ~(t_j, μ̂_j)(x_i) v_i`, `d × d`.
    pub g: Vec<DMatrix<f64>>,
}

impl LawFlow {
    pub fn h(&self) -> f64 {
        self.plan.h
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.plan.h
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.plan.h
    }

    pub fn measure(&self, j: usize) -> &EmpiricalMeasure {
        &self.snapshots[j]
    }

    pub fn noise_dim(&self) -> usize {
        self.sigma[0].nrows()
    }

    /// `ξ` along an arbitrary `W~` path given as `steps × d` increments.
    pub fn xi_along(&self, dwt: &[f64], steps: usize) -> Vec<DVector<f64>> {
        let d = self.noise_dim();
        let mut xi = Vec::with_capacity(steps + 1);
        let mut acc = DVector::zeros(d);
        xi.push(acc.clone());
        for j in 0..steps {
            acc += &self.sigma[j] * DVector::from_column_slice(&dwt[j * d..(j + 1) * d]);
            xi.push(acc.clone());
        }
        xi
    }

    /// Errors unless `other` was built on the same noise plan and covers `steps`.
    pub fn check_compatible(&self, other: &LawFlow, steps: usize) -> Result<()> {
        if self.plan != other.plan {
            return Err(Error::StreamMismatch(format!("{:?} vs {:?}", self.plan, other.plan)));
        }
        for f in [self, other] {
            if f.steps < steps {
                return Err(Error::FlowHorizonTooShort { available: f.horizon(), requested: steps as f64 * f.h() });
            }
        }
        Ok(())
    }
}

fn tangent_step(
    model: &dyn MeanFieldModel,
    t: f64,
    states: &[f64],
    mu: &EmpiricalMeasure,
    tangents: &mut [f64],
    v_mean: &[f64],
    g: &DMatrix<f64>,
    h: f64,
    dwt: &[f64],
) {
    let n = model.dim();
    let d = model.noise_dim();
    let off = n - d;
    let old = tangents.to_vec();
    tangents.par_chunks_mut(n).enumerate().for_each(|(i, v)| {
        let x = &states[i * n..(i + 1) * n];
        let vi = &old[i * n..(i + 1) * n];
        let mut gb = vec![0.0; d];
        let mut lb = vec![0.0; d];
        model.grad_x_drift(t, x, mu, vi, &mut gb);
        model.lions_drift_mean(t, x, mu, &old, v_mean, &mut lb);
        if let Some(s) = model.structure() {
            for r in 0..off {
                let mut acc = 0.0;
                for k in 0..off {
                    acc += s.a[(r, k)] * vi[k];
                }
                for k in 0..d {
                    acc += s.m[(r, k)] * vi[off + k];
                }
                v[r] += acc * h;
            }
        }
        let dwt_i = &dwt[i * d..(i + 1) * d];
        for a in 0..d {
            let mut noise = 0.0;
            for c in 0..d {
                noise += g[(a, c)] * dwt_i[c];
            }
            v[off + a] += (gb[a] + lb[a]) * h + noise;
        }
    });
}

fn column_mean(v: &[f64], n: usize) -> Vec<f64> {
    EmpiricalMeasure::uniform(v.to_vec(), n).map(|m| m.mean().to_vec()).unwrap_or_else(|_| vec![0.0; n])
}

fn law_flow_impl(
    model: &dyn MeanFieldModel,
    initial: &EmpiricalMeasure,
    plan: &NoisePlan,
    steps: usize,
    phi: Option<&(dyn Fn(&[f64]) -> Vec<f64> + Sync)>,
) -> Result<(LawFlow, Option<TangentTrajectory>)> {
    let n = model.dim();
    let d = model.noise_dim();
    if initial.dim() != n {
        return Err(Error::DimensionMismatch(format!("initial dim {} vs model dim {n}", initial.dim())));
    }
    if initial.len() < 2 {
        return Err(Error::TooFewParticles { n: initial.len(), dim: n });
    }
    let mut ens = ParticleEnsemble::new(initial);
    let count = ens.len();
    let mut snapshots = Vec::with_capacity(steps + 1);
    let mut sigma = Vec::with_capacity(steps + 1);
    let mut xi = Vec::with_capacity(steps + 1);
    let mut xi_acc = DVector::zeros(d);
    let mut tangent = phi.map(|f| {
        let mut v = vec![0.0; count * n];
        for i in 0..count {
            v[i * n..(i + 1) * n].copy_from_slice(&f(ens.point(i)));
        }
        v
    });
    let mut traj = TangentTrajectory { tangents: Vec::new(), means: Vec::new(), g: Vec::new() };
    for j in 0..=steps {
        let mu = Arc::new(ens.empirical_measure());
        let sig = model.sigma_tilde(ens.t, &mu);
        xi.push(xi_acc.clone());
        let (dw, dwt) = if j < steps { ensemble_noise(plan, WTildeMode::PerParticle, count, d, j) } else { (vec![], vec![]) };
        if let Some(v) = tangent.as_mut() {
            let vm = column_mean(v, n);
            let g = model.lions_sigma_mean(ens.t, &mu, v, &vm);
            traj.tangents.push(v.clone());
            traj.means.push(vm.clone());
            traj.g.push(g.clone());
            if j < steps {
                tangent_step(model, ens.t, ens.states(), &mu, v, &vm, &g, plan.h, &dwt);
                check_finite(v, j + 1)?;
            }
        }
        if j < steps {
            let mut shared = vec![0.0; d];
            plan.increment(Stream::SHARED_W_TILDE, 0, j, &mut shared);
            xi_acc += &sig * DVector::from_vec(shared);
            let t = ens.t;
            let h = plan.h;
            ens.states.par_chunks_mut(n).enumerate().for_each(|(i, x)| {
                step_state(model, t, x, &mu, &sig, h, &dw[i * d..(i + 1) * d], &dwt[i * d..(i + 1) * d], None);
            });
            ens.step += 1;
            ens.t += h;
            check_finite(&ens.states, ens.step)?;
        }
        snapshots.push(mu);
        sigma.push(sig);
    }
    let flow = LawFlow { plan: *plan, steps, snapshots, sigma, xi };
    Ok((flow, phi.map(|_| traj)))
}

/// Pass 1: the particle approximation of `t ↦ P_t* μ` over `steps` steps.
pub fn simulate_law_flow(
    model: &dyn MeanFieldModel,
    initial: &EmpiricalMeasure,
    plan: &NoisePlan,
    steps: usize,
) -> Result<LawFlow> {
    Ok(law_flow_impl(model, initial, plan, steps, None)?.0)
}

/// Pass 1 with tangent flow `∇_φ X` started from `φ(x_i)`.
///
/// Tangents follow the formal linearization
/// `dv_i = [∇b(x_i) v_i + mean_j D^I b(x_i)(x_j) v_j] dt + mean_j (D^I σ~(x_j) · v_j) dW~_i`,
/// with `A`, `M` acting on block 1 for degenerate models.
pub fn simulate_law_flow_with_tangents(
    model: &dyn MeanFieldModel,
    initial: &EmpiricalMeasure,
    plan: &NoisePlan,
    steps: usize,
    phi: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
) -> Result<(LawFlow, TangentTrajectory)> {
    let (flow, traj) = law_flow_impl(model, initial, plan, steps, Some(phi))?;
    Ok((flow, traj.expect("tangents requested")))
}

/// `sup_j |ξ^μ_j − ξ^ν_j|` along the shared `W~` stream.
pub fn xi_gap(flow_mu: &LawFlow, flow_nu: &LawFlow) -> Result<f64> {
    flow_mu.check_compatible(flow_nu, flow_mu.steps.min(flow_nu.steps))?;
    if flow_mu.steps != flow_nu.steps {
        return Err(Error::StreamMismatch("flows cover different horizons".into()));
    }
    Ok(flow_mu.xi.iter().zip(&flow_nu.xi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
}

/// Noise of one pass-2 path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaNoise {
    pub plan: NoisePlan,
    pub lane: u64,
    pub w_stream: Stream,
    /// `Shared` reads the flow's designated `W~` path; `PerParticle` draws an
    /// independent `W~` for this replica.
    pub w_tilde: WTildeMode,
}

impl ReplicaNoise {
    pub fn new(plan: NoisePlan, lane: u64, w_tilde: WTildeMode) -> Self {
        Self { plan, lane, w_stream: Stream::REPLICA_W, w_tilde }
    }

    pub fn dw(&self, steps: usize, d: usize) -> Vec<f64> {
        self.plan.path_increments(self.w_stream, self.lane, steps, d)
    }

    pub fn dwt(&self, steps: usize, d: usize) -> Vec<f64> {
        match self.w_tilde {
            WTildeMode::Shared => self.plan.path_increments(Stream::SHARED_W_TILDE, 0, steps, d),
            WTildeMode::PerParticle => self.plan.path_increments(Stream::REPLICA_W_TILDE, self.lane, steps, d),
        }
    }
}

/// Pass 2: one path of the decoupled SDE driven by the stored flow.
/// Returns `(steps + 1) × n` states.
pub fn simulate_on_flow(
    model: &dyn MeanFieldModel,
    flow: &LawFlow,
    x0: &[f64],
    dw: &[f64],
    dwt: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    if flow.steps < steps {
        return Err(Error::FlowHorizonTooShort { available: flow.horizon(), requested: steps as f64 * flow.h() });
    }
    let n = model.dim();
    let d = model.noise_dim();
    let mut path = Vec::with_capacity((steps + 1) * n);
    let mut x = x0.to_vec();
    path.extend_from_slice(&x);
    for j in 0..steps {
        step_state(
            model,
            flow.time(j),
            &mut x,
            flow.measure(j),
            &flow.sigma[j],
            flow.h(),
            &dw[j * d..(j + 1) * d],
            &dwt[j * d..(j + 1) * d],
            None,
        );
        check_finite(&x, j + 1)?;
        path.extend_from_slice(&x);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{LinearMeanField, Preset};

    #[test]
    fn frozen_when_all_coefficients_vanish() {
        let z = DMatrix::zeros(2, 2);
        let m = LinearMeanField::new(z.clone(), z, 1.0, 0.0, 0.0).unwrap();
        let init = EmpiricalMeasure::uniform(vec![1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let mut ens = ParticleEnsemble::new(&init);
        euler_maruyama_step(&m, &mut ens, 0.1, &[0.0; 4], WTildeIncrement::Shared(&[0.0, 0.0])).unwrap();
        assert_eq!(ens.states(), init.points());
    }

    #[test]
    fn explicit_euler_contraction() {
        let m = LinearMeanField::new(-DMatrix::identity(1, 1), DMatrix::zeros(1, 1), 1.0, 0.0, 0.0).unwrap();
        let init = EmpiricalMeasure::uniform(vec![2.0, -1.0], 1).unwrap();
        let mut ens = ParticleEnsemble::new(&init);
        euler_maruyama_step(&m, &mut ens, 0.1, &[0.0, 0.0], WTildeIncrement::Shared(&[0.0])).unwrap();
        assert_eq!(ens.states(), &[2.0 * 0.9, -0.9]);
    }

    #[test]
    fn step_kind_is_checked() {
        let kin = Preset::by_name("kinetic-langevin").unwrap();
        let init = EmpiricalMeasure::repeated(&[0.0, 0.0, 0.0], 2);
        let mut ens = ParticleEnsemble::new(&init);
        let r = euler_maruyama_step(kin.model(), &mut ens, 0.1, &[0.0; 2], WTildeIncrement::Shared(&[0.0]));
        assert!(r.is_err());
        let lin = Preset::by_name("linear-ou").unwrap();
        let init = EmpiricalMeasure::repeated(&[0.0, 0.0], 2);
        let mut ens = ParticleEnsemble::new(&init);
        let r = hamiltonian_step(lin.model(), &mut ens, 0.1, &[0.0; 4], WTildeIncrement::Shared(&[0.0, 0.0]));
        assert_eq!(r, Err(Error::MissingStructure));
    }

    #[test]
    fn divergence_guard() {
        let m = LinearMeanField::new(DMatrix::identity(1, 1) * 1e308, DMatrix::zeros(1, 1), 1.0, 0.0, 0.0).unwrap();
        let init = EmpiricalMeasure::uniform(vec![10.0, 10.0], 1).unwrap();
        let mut ens = ParticleEnsemble::new(&init);
        let r = euler_maruyama_step(&m, &mut ens, 1.0, &[0.0, 0.0], WTildeIncrement::Shared(&[0.0]));
        assert_eq!(r, Err(Error::NonFiniteState { step: 1 }));
    }

    #[test]
    fn xi_constant_sigma_is_scaled_path() {
        let lin = Preset::by_name("linear-ou").unwrap();
        let init = EmpiricalMeasure::repeated(&[0.0, 0.0], 4);
        let plan = NoisePlan::new(7, 0.01);
        let flow = simulate_law_flow(lin.model(), &init, &plan, 20).unwrap();
        let w = plan.path_increments(Stream::SHARED_W_TILDE, 0, 20, 2);
        let mut acc = [0.0f64; 2];
        for j in 0..20 {
            acc[0] += w[2 * j];
            acc[1] += w[2 * j + 1];
        }
        // σ~ = 1·I for the default preset
        assert!((flow.xi[20][0] - acc[0]).abs() < 1e-12);
        assert!((flow.xi[20][1] - acc[1]).abs() < 1e-12);
        assert_eq!(xi_gap(&flow, &flow).unwrap(), 0.0);
    }
}
