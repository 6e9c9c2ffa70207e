//! Couplings by change of measure and their Girsanov weights.
//!
//! Both constructions need `ξ^μ_{t₀}` and `ξ^ν_{t₀}` at time 0. They are
//! available because the law flows are precomputed (pass 1) and each replica's
//! `W~` path is generated up front.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{integrate_matrix, matrix_exp, GramianSolver, HamiltonianStructure, SymMatrix};
use crate::model::MeanFieldModel;
use crate::sde::{LawFlow, ReplicaNoise};
use crate::stats::{linear_fit, mean_se, LinearFit};

/// `log R = Σ ⟨η_j/λ, ΔW_j⟩ − ½ Σ |η_j/λ|² h` with left-point sums.
pub fn girsanov_logweight(eta: &[f64], dw: &[f64], lambda: f64, h: f64) -> Result<f64> {
    if eta.len() != dw.len() {
        return Err(Error::LengthMismatch(format!("η has {} entries, ΔW has {}", eta.len(), dw.len())));
    }
    let mut stoch = 0.0;
    let mut quad = 0.0;
    for (e, w) in eta.iter().zip(dw) {
        let en = e / lambda;
        stoch += en * w;
        quad += en * en;
    }
    Ok(stoch - 0.5 * quad * h)
}

/// Runs with `|log R|` above this are flagged as outliers.
pub const LOGR_OUTLIER: f64 = 50.0;

/// One coupled pair `(X, Y)` on `[0, t₀]`.
#[derive(Debug, Clone)]
pub struct CouplingRun {
    pub t0: f64,
    pub h: f64,
    pub steps: usize,
    pub dim: usize,
    /// `(steps + 1) × n`, row-major.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `steps × d`. Already divided by `λ` for degenerate runs, raw otherwise;
    /// see `eta_scale`.
    pub eta: Vec<f64>,
    /// Divisor turning `eta` into the Girsanov integrand.
    pub eta_scale: f64,
    pub log_weight: f64,
    /// `(steps + 1) × d`.
    pub xi_mu: Vec<f64>,
    pub xi_nu: Vec<f64>,
    /// `|Y_{t₀} − X_{t₀}|`.
    pub terminal_gap: f64,
    /// Max over steps of the interpolation-identity residual.
    pub identity_residual: f64,
    /// `½ ∫ |η/λ|² dt` (left Riemann sum).
    pub eta_energy: f64,
}

impl CouplingRun {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }

    pub fn is_outlier(&self) -> bool {
        self.log_weight.abs() > LOGR_OUTLIER
    }

    pub fn x_at(&self, j: usize) -> &[f64] {
        &self.x[j * self.dim..(j + 1) * self.dim]
    }

    pub fn y_at(&self, j: usize) -> &[f64] {
        &self.y[j * self.dim..(j + 1) * self.dim]
    }

    pub fn x_terminal(&self) -> &[f64] {
        self.x_at(self.steps)
    }
}

fn flatten(v: &[DVector<f64>]) -> Vec<f64> {
    v.iter().flat_map(|x| x.iter().copied()).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn steps_for(flow: &LawFlow, t0: f64) -> Result<usize> {
    flow.plan.steps_for(t0).filter(|s| *s > 0).ok_or_else(|| {
        Error::GridMismatch(format!("t0 = {t0} is not a positive multiple of h = {}", flow.h()))
    })
}

/// Non-degenerate coupling: `Y` gets the extra drift
/// `(ξ^μ_{t₀} − ξ^ν_{t₀} + x₀ − y₀)/t₀` and `σ~(P_t* ν)` noise, so that it
/// meets `X` at `t₀`.
pub fn couple_nondegenerate(
    model: &dyn MeanFieldModel,
    flow_mu: &LawFlow,
    flow_nu: &LawFlow,
    x0: &[f64],
    y0: &[f64],
    t0: f64,
    noise: &ReplicaNoise,
) -> Result<CouplingRun> {
    if model.structure().is_some() {
        return Err(Error::DimensionMismatch("use couple_degenerate for Hamiltonian models".into()));
    }
    let steps = steps_for(flow_mu, t0)?;
    flow_mu.check_compatible(flow_nu, steps)?;
    if noise.plan != flow_mu.plan {
        return Err(Error::StreamMismatch("replica plan differs from flow plan".into()));
    }
    let n = model.dim();
    let d = model.noise_dim();
    let h = flow_mu.h();
    let lambda = model.lambda();
    let dw = noise.dw(steps, d);
    let dwt = noise.dwt(steps, d);
    let xi_mu = flow_mu.xi_along(&dwt, steps);
    let xi_nu = flow_nu.xi_along(&dwt, steps);
    let shift: Vec<f64> = (0..d).map(|a| (xi_mu[steps][a] - xi_nu[steps][a] + x0[a] - y0[a]) / t0).collect();

    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut xs = Vec::with_capacity((steps + 1) * n);
    let mut ys = Vec::with_capacity((steps + 1) * n);
    let mut eta = Vec::with_capacity(steps * d);
    xs.extend_from_slice(&x);
    ys.extend_from_slice(&y);
    let mut bx = vec![0.0; d];
    let mut by = vec![0.0; d];
    let mut residual: f64 = 0.0;
    for j in 0..steps {
        let t = flow_mu.time(j);
        let mu = flow_mu.measure(j);
        let nu = flow_nu.measure(j);
        model.drift(t, &x, mu, &mut bx);
        model.drift(t, &y, nu, &mut by);
        for a in 0..d {
            eta.push(by[a] - bx[a] - shift[a]);
        }
        let sm = &flow_mu.sigma[j];
        let sn = &flow_nu.sigma[j];
        let w = &dw[j * d..(j + 1) * d];
        let wt = &dwt[j * d..(j + 1) * d];
        for a in 0..d {
            let mut nx = lambda * w[a];
            let mut ny = lambda * w[a];
            for c in 0..d {
                nx += sm[(a, c)] * wt[c];
                ny += sn[(a, c)] * wt[c];
            }
            x[a] += bx[a] * h + nx;
            y[a] += (bx[a] + shift[a]) * h + ny;
        }
        if !x.iter().chain(&y).all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState { step: j + 1 });
        }
        xs.extend_from_slice(&x);
        ys.extend_from_slice(&y);
        let tj = flow_mu.time(j + 1);
        let r: f64 = (0..d)
            .map(|a| {
                let rhs = ((t0 - tj) / t0) * (y0[a] - x0[a])
                    + (tj / t0) * (xi_mu[steps][a] - xi_nu[steps][a])
                    + xi_nu[j + 1][a]
                    - xi_mu[j + 1][a];
                (y[a] - x[a] - rhs).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        residual = residual.max(r);
    }
    let log_weight = girsanov_logweight(&eta, &dw, lambda, h)?;
    let eta_energy = 0.5 * eta.iter().map(|e| (e / lambda).powi(2)).sum::<f64>() * h;
    let gap: Vec<f64> = (0..n).map(|a| y[a] - x[a]).collect();
    Ok(CouplingRun {
        t0,
        h,
        steps,
        dim: n,
        x: xs,
        y: ys,
        eta,
        eta_scale: lambda,
        log_weight,
        xi_mu: flatten(&xi_mu),
        xi_nu: flatten(&xi_nu),
        terminal_gap: norm(&gap),
        identity_residual: residual,
        eta_energy,
    })
}

/// Grid quantities shared by every Gramian-steered path on `[0, t]` with a
/// fixed step: per-interval integrals of `e^{-rA}M` weighted by `1`, `r/t`, and
/// the Gramian integrand, plus the Cholesky factor of `Q_t`.
///
/// Piecewise-constant inputs `g_r = g_j` on `[s_j, s_{j+1})` are integrated
/// exactly against these, so block-1 steering cancels to roundoff.
#[derive(Debug, Clone)]
pub struct SteeringGrid {
    pub t: f64,
    pub h: f64,
    pub steps: usize,
    a: DMatrix<f64>,
    e_int: Vec<DMatrix<f64>>,
    f_int: Vec<DMatrix<f64>>,
    q_int: Vec<DMatrix<f64>>,
    solver: GramianSolver,
    mt_exp: Vec<DMatrix<f64>>,
    mt_at_exp: Vec<DMatrix<f64>>,
    exp_pos: Vec<DMatrix<f64>>,
    m: DMatrix<f64>,
}

/// Solved steering data for one path: `α(s) = (s/t) c − (s(t−s)/t²) Mᵀ e^{−sAᵀ} w`.
#[derive(Debug, Clone)]
pub struct Steering {
    pub c: DVector<f64>,
    pub w: DVector<f64>,
    pub v: DVector<f64>,
    first: DVector<f64>,
    /// `I_j = ∫_0^{s_j} e^{−rA} M {α(r) + a + g_r} dr`.
    cum: Vec<DVector<f64>>,
}

impl SteeringGrid {
    pub fn new(structure: &HamiltonianStructure, t: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(t > 0.0) {
            return Err(Error::ParameterOutOfRange(format!("steering grid needs t > 0 and steps > 0, got {t}, {steps}")));
        }
        let a = structure.a.clone();
        let m = structure.m.clone();
        let md = a.nrows();
        let d = m.ncols();
        let h = t / steps as f64;
        let mmt = &m * m.transpose();
        let integrand = |r: f64| -> DMatrix<f64> {
            let e = matrix_exp(&a, -r);
            let em = &e * &m;
            let mut out = DMatrix::zeros(md, 2 * d + md);
            out.view_mut((0, 0), (md, d)).copy_from(&em);
            out.view_mut((0, d), (md, d)).copy_from(&(&em * (r / t)));
            out.view_mut((0, 2 * d), (md, md)).copy_from(&(&e * &mmt * e.transpose() * (r * (t - r) / (t * t))));
            out
        };
        let mut e_int = Vec::with_capacity(steps);
        let mut f_int = Vec::with_capacity(steps);
        let mut q_int = Vec::with_capacity(steps);
        let mut q = DMatrix::zeros(md, md);
        for j in 0..steps {
            let lo = j as f64 * h;
            let hi = if j + 1 == steps { t } else { (j + 1) as f64 * h };
            let blk = integrate_matrix(&integrand, lo, hi, 1e-12)?;
            e_int.push(blk.view((0, 0), (md, d)).into_owned());
            f_int.push(blk.view((0, d), (md, d)).into_owned());
            let qj = blk.view((0, 2 * d), (md, md)).into_owned();
            q += &qj;
            q_int.push(qj);
        }
        let solver = GramianSolver::new(&SymMatrix::symmetrized(q), t)?;
        let at = a.transpose();
        let mut mt_exp = Vec::with_capacity(steps + 1);
        let mut mt_at_exp = Vec::with_capacity(steps + 1);
        let mut exp_pos = Vec::with_capacity(steps + 1);
        for j in 0..=steps {
            let s = j as f64 * h;
            let e = matrix_exp(&at, -s);
            mt_exp.push(m.transpose() * &e);
            mt_at_exp.push(m.transpose() * &at * &e);
            exp_pos.push(matrix_exp(&a, s));
        }
        Ok(Self { t, h, steps, a, e_int, f_int, q_int, solver, mt_exp, mt_at_exp, exp_pos, m })
    }

    pub fn inverse_norm(&self) -> f64 {
        self.solver.inverse_norm
    }

    /// Solves the steering problem with
    /// `V = ∫ e^{−rA} M {((t−r)/t) a + (r/t) b + g_r} dr`, `c = b − a`,
    /// `w = Q_t^{-1}(first + V)`. `g` holds `g_j` for `j < steps`.
    pub fn solve(&self, first: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>, g: &[DVector<f64>]) -> Steering {
        let md = self.a.nrows();
        let mut cum = Vec::with_capacity(self.steps + 1);
        let mut v = DVector::zeros(md);
        let mut parts = Vec::with_capacity(self.steps);
        for j in 0..self.steps {
            let p = &self.e_int[j] - &self.f_int[j];
            let piece = p * a + &self.f_int[j] * b + &self.e_int[j] * &g[j];
            v += &piece;
            parts.push(piece);
        }
        let w = self.solver.solve(&(first + &v));
        let mut acc = DVector::zeros(md);
        cum.push(acc.clone());
        for j in 0..self.steps {
            acc += &parts[j] - &self.q_int[j] * &w;
            cum.push(acc.clone());
        }
        Steering { c: b - a, w, v, first: first.clone(), cum }
    }

    pub fn alpha(&self, st: &Steering, j: usize) -> DVector<f64> {
        let s = j as f64 * self.h;
        let t = self.t;
        &st.c * (s / t) - &self.mt_exp[j] * &st.w * (s * (t - s) / (t * t))
    }

    /// `α'(s_j)`, differentiated in closed form.
    pub fn alpha_prime(&self, st: &Steering, j: usize) -> DVector<f64> {
        let s = j as f64 * self.h;
        let t = self.t;
        &st.c / t - &self.mt_exp[j] * &st.w * ((t - 2.0 * s) / (t * t))
            + &self.mt_at_exp[j] * &st.w * (s * (t - s) / (t * t))
    }

    /// `e^{s_j A}(first + I_j)`: the block-1 displacement generated by the
    /// steering up to `s_j`.
    pub fn block1(&self, st: &Steering, j: usize) -> DVector<f64> {
        &self.exp_pos[j] * (&st.first + &st.cum[j])
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }
}

/// Degenerate coupling steered through the Gramian so that `Y_{t₀} = X_{t₀}`.
/// `grid` must match `(t₀, h)`; build it once per experiment with
/// [`SteeringGrid::new`].
#[allow(clippy::too_many_arguments)]
pub fn couple_degenerate(
    model: &dyn MeanFieldModel,
    flow_mu: &LawFlow,
    flow_nu: &LawFlow,
    x0: &[f64],
    y0: &[f64],
    t0: f64,
    noise: &ReplicaNoise,
    grid: &SteeringGrid,
) -> Result<CouplingRun> {
    let s = model.structure().ok_or(Error::MissingStructure)?;
    let steps = steps_for(flow_mu, t0)?;
    if grid.steps != steps || (grid.t - t0).abs() > 1e-12 * t0 {
        return Err(Error::GridMismatch(format!("steering grid ({}, {}) vs ({t0}, {steps})", grid.t, grid.steps)));
    }
    flow_mu.check_compatible(flow_nu, steps)?;
    if noise.plan != flow_mu.plan {
        return Err(Error::StreamMismatch("replica plan differs from flow plan".into()));
    }
    let n = model.dim();
    let d = model.noise_dim();
    let md = s.m_dim();
    let h = flow_mu.h();
    let lambda = model.lambda();
    let dw = noise.dw(steps, d);
    let dwt = noise.dwt(steps, d);
    let xi_mu = flow_mu.xi_along(&dwt, steps);
    let xi_nu = flow_nu.xi_along(&dwt, steps);
    let v1 = DVector::from_iterator(md, (0..md).map(|i| y0[i] - x0[i]));
    let v2 = DVector::from_iterator(d, (0..d).map(|i| y0[md + i] - x0[md + i]));
    let dxi = &xi_mu[steps] - &xi_nu[steps];
    let g: Vec<DVector<f64>> = (0..steps).map(|j| &xi_nu[j] - &xi_mu[j]).collect();
    let st = grid.solve(&v1, &v2, &dxi, &g);

    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut xs = Vec::with_capacity((steps + 1) * n);
    let mut ys = Vec::with_capacity((steps + 1) * n);
    let mut eta = Vec::with_capacity(steps * d);
    xs.extend_from_slice(&x);
    ys.extend_from_slice(&y);
    let mut bx = vec![0.0; d];
    let mut by = vec![0.0; d];
    let mut residual: f64 = 0.0;
    for j in 0..steps {
        let t = flow_mu.time(j);
        model.drift(t, &x, flow_mu.measure(j), &mut bx);
        model.drift(t, &y, flow_nu.measure(j), &mut by);
        let ap = grid.alpha_prime(&st, j);
        for a in 0..d {
            eta.push((by[a] - bx[a] - ap[a]) / lambda);
        }
        let mut dx1 = vec![0.0; md];
        let mut dy1 = vec![0.0; md];
        for i in 0..md {
            let mut ax = 0.0;
            let mut ay = 0.0;
            for k in 0..md {
                ax += s.a[(i, k)] * x[k];
                ay += s.a[(i, k)] * y[k];
            }
            for k in 0..d {
                ax += s.m[(i, k)] * x[md + k];
                ay += s.m[(i, k)] * y[md + k];
            }
            dx1[i] = ax * h;
            dy1[i] = ay * h;
        }
        let sm = &flow_mu.sigma[j];
        let sn = &flow_nu.sigma[j];
        let w = &dw[j * d..(j + 1) * d];
        let wt = &dwt[j * d..(j + 1) * d];
        for i in 0..md {
            x[i] += dx1[i];
            y[i] += dy1[i];
        }
        for a in 0..d {
            let mut nx = lambda * w[a];
            let mut ny = lambda * w[a];
            for c in 0..d {
                nx += sm[(a, c)] * wt[c];
                ny += sn[(a, c)] * wt[c];
            }
            x[md + a] += bx[a] * h + nx;
            y[md + a] += (bx[a] + ap[a]) * h + ny;
        }
        if !x.iter().chain(&y).all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState { step: j + 1 });
        }
        xs.extend_from_slice(&x);
        ys.extend_from_slice(&y);
        let k = j + 1;
        let rhs1 = grid.block1(&st, k);
        let rhs2 = grid.alpha(&st, k) + &v2 + (&xi_nu[k] - &xi_mu[k]);
        let mut r2 = 0.0;
        for i in 0..md {
            r2 += (y[i] - x[i] - rhs1[i]).powi(2);
        }
        for a in 0..d {
            r2 += (y[md + a] - x[md + a] - rhs2[a]).powi(2);
        }
        residual = residual.max(r2.sqrt());
    }
    let log_weight = girsanov_logweight(&eta, &dw, 1.0, h)?;
    let eta_energy = 0.5 * eta.iter().map(|e| e * e).sum::<f64>() * h;
    let gap: Vec<f64> = (0..n).map(|a| y[a] - x[a]).collect();
    Ok(CouplingRun {
        t0,
        h,
        steps,
        dim: n,
        x: xs,
        y: ys,
        eta,
        eta_scale: 1.0,
        log_weight,
        xi_mu: flatten(&xi_mu),
        xi_nu: flatten(&xi_nu),
        terminal_gap: norm(&gap),
        identity_residual: residual,
        eta_energy,
    })
}

/// Block-1 terminal mismatch of the steering with no noise (`ξ` gaps zero),
/// computed with adaptive quadrature independent of any time grid:
/// `|e^{t₀A} v⁽¹⁾ + ∫_0^{t₀} e^{(t₀−s)A} M {α(s) + v⁽²⁾} ds|`.
pub fn degenerate_steering_residual(
    structure: &HamiltonianStructure,
    v1: &DVector<f64>,
    v2: &DVector<f64>,
    t0: f64,
) -> Result<f64> {
    let a = &structure.a;
    let m = &structure.m;
    let q = structure.gramian(t0)?;
    let solver = GramianSolver::new(&q, t0)?;
    let vint = integrate_matrix(&|r: f64| matrix_exp(a, -r) * m * ((t0 - r) / t0), 0.0, t0, 1e-12)?;
    let v = &vint * v2;
    let w = solver.solve(&(v1 + &v));
    let alpha = |s: f64| -> DVector<f64> {
        -v2 * (s / t0) - m.transpose() * matrix_exp(&a.transpose(), -s) * &w * (s * (t0 - s) / (t0 * t0))
    };
    let integrand = |s: f64| -> DMatrix<f64> {
        let val = matrix_exp(a, t0 - s) * m * (alpha(s) + v2);
        DMatrix::from_column_slice(val.len(), 1, val.as_slice())
    };
    let int = integrate_matrix(&integrand, 0.0, t0, 1e-12)?;
    let terminal = matrix_exp(a, t0) * v1 + DVector::from_column_slice(int.as_slice());
    Ok(terminal.norm())
}

/// Pairs `(x₀, y₀)` for replica `r`.
pub type PairSampler<'a> = dyn Fn(u64) -> (Vec<f64>, Vec<f64>) + Sync + 'a;

/// Runs `replicas` independent couplings in parallel; output order is the
/// replica index order.
#[allow(clippy::too_many_arguments)]
pub fn run_couplings(
    model: &dyn MeanFieldModel,
    flow_mu: &LawFlow,
    flow_nu: &LawFlow,
    pairs: &PairSampler<'_>,
    t0: f64,
    replicas: usize,
    noise: &(dyn Fn(u64) -> ReplicaNoise + Sync),
    grid: Option<&SteeringGrid>,
) -> Result<Vec<CouplingRun>> {
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let (x0, y0) = pairs(r);
            match grid {
                Some(g) => couple_degenerate(model, flow_mu, flow_nu, &x0, &y0, t0, &noise(r), g),
                None => couple_nondegenerate(model, flow_mu, flow_nu, &x0, &y0, t0, &noise(r)),
            }
        })
        .collect()
}

/// Sample mean of `exp(log R)` with standard error and outlier count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleCheck {
    pub mean: f64,
    pub se: f64,
    pub replicas: usize,
    pub outliers: usize,
}

impl MartingaleCheck {
    pub fn z_score(&self) -> f64 {
        (self.mean - 1.0) / self.se
    }

    pub fn pass(&self) -> bool {
        self.z_score().abs() <= 3.0
    }
}

pub fn martingale_check(runs: &[CouplingRun]) -> MartingaleCheck {
    let w: Vec<f64> = runs.iter().map(|r| r.weight()).collect();
    let (mean, se) = mean_se(&w);
    MartingaleCheck { mean, se, replicas: runs.len(), outliers: runs.iter().filter(|r| r.is_outlier()).count() }
}

/// Named test function.
pub struct TestFunction {
    pub name: String,
    pub f: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl TestFunction {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Box::new(f) }
    }
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TestFunction({})", self.name)
    }
}

/// Constant, coordinates, squares and a bounded Gaussian bump.
pub fn default_battery(dim: usize) -> Vec<TestFunction> {
    let mut out = vec![TestFunction::new("one", |_| 1.0)];
    for i in 0..dim {
        out.push(TestFunction::new(format!("x{i}"), move |x| x[i]));
        out.push(TestFunction::new(format!("x{i}^2"), move |x| x[i] * x[i]));
    }
    out.push(TestFunction::new("bump", |x| (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp()));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferEntry {
    pub name: String,
    pub weighted: f64,
    pub weighted_se: f64,
    pub direct: f64,
    pub direct_se: f64,
    pub pass: bool,
}

impl TransferEntry {
    pub fn combined_se(&self) -> f64 {
        (self.weighted_se.powi(2) + self.direct_se.powi(2)).sqrt()
    }
}

/// Compares `mean(R f(X_{t₀}))` with `mean(f(X^ν_{t₀}))` from direct runs.
pub fn weighted_law_transfer_check(
    runs: &[CouplingRun],
    battery: &[TestFunction],
    direct: &[Vec<f64>],
) -> Vec<TransferEntry> {
    battery
        .iter()
        .map(|tf| {
            let wf: Vec<f64> = runs.iter().map(|r| r.weight() * (tf.f)(r.x_terminal())).collect();
            let df: Vec<f64> = direct.iter().map(|x| (tf.f)(x)).collect();
            let (wm, wse) = mean_se(&wf);
            let (dm, dse) = mean_se(&df);
            let tol = 3.0 * (wse * wse + dse * dse).sqrt();
            TransferEntry {
                name: tf.name.clone(),
                weighted: wm,
                weighted_se: wse,
                direct: dm,
                direct_se: dse,
                pass: (wm - dm).abs() <= tol.max(1e-12),
            }
        })
        .collect()
}

/// Mean of `½λ⁻²∫|η|²` per `t₀` against `W₂(μ, ν)²(1 + 1/t₀)`.
#[derive(Debug, Clone)]
pub struct EntropyProbe {
    pub t0: Vec<f64>,
    pub energy: Vec<f64>,
    pub energy_se: Vec<f64>,
    /// `max_t₀ energy / (W₂²(1 + 1/t₀))`.
    pub c2: f64,
    /// `energy ≈ a + b/t₀`.
    pub fit: LinearFit,
    pub residuals: Vec<f64>,
}

pub fn entropy_bound_probe(groups: &[(f64, Vec<CouplingRun>)], w2sq: f64) -> Result<EntropyProbe> {
    if groups.is_empty() {
        return Err(Error::EstimatorDegenerate("no coupling groups".into()));
    }
    let mut t0 = Vec::new();
    let mut energy = Vec::new();
    let mut se = Vec::new();
    for (t, runs) in groups {
        let e: Vec<f64> = runs.iter().map(|r| r.eta_energy).collect();
        let (m, s) = mean_se(&e);
        t0.push(*t);
        energy.push(m);
        se.push(s);
    }
    let c2 = t0
        .iter()
        .zip(&energy)
        .map(|(t, e)| if w2sq > 0.0 { e / (w2sq * (1.0 + 1.0 / t)) } else { 0.0 })
        .fold(0.0, f64::max);
    let inv: Vec<f64> = t0.iter().map(|t| 1.0 / t).collect();
    let fit = if t0.len() >= 2 { linear_fit(&inv, &energy) } else { LinearFit { slope: f64::NAN, intercept: f64::NAN, slope_se: f64::NAN } };
    let residuals = inv.iter().zip(&energy).map(|(x, e)| e - fit.intercept - fit.slope * x).collect();
    Ok(EntropyProbe { t0, energy, energy_se: se, c2, fit, residuals })
}
