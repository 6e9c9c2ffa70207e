//! Experiment runner behind the `mvlab` binary.
//!
//! A run is fully determined by its [`RunConfig`]; the config hash names the
//! output files and is recorded in the manifest. `workers` and `out` are
//! excluded from the hash because they do not change results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bismut::{bismut_degenerate, bismut_nondegenerate, lions_fd_oracle, richardson, PhiFn, ScalarFn};
use crate::coupling::{martingale_check, run_couplings, SteeringGrid};
use crate::ergodicity::{
    check_dissipativity_e, check_dissipativity_f, degenerate_decay_rate, entropy_decay_rate, estimate_invariant_measure,
    replicated_rate, w2_decay_rate, DissipativityReport,
};
use crate::error::{Error, Result};
use crate::harnack::{degenerate_entropy_cost_experiment, entropy_cost_gaussian, entropy_cost_knn, HarnackReport};
use crate::linalg::{gramian_inverse_norm_slope, SymMatrix};
use crate::measure::{optimal_initial_coupling, EmpiricalMeasure, GaussianLaw};
use crate::presets::Preset;
use crate::rng::{NoisePlan, Stream};
use crate::sde::{run_ensemble, simulate_law_flow, ReplicaNoise, WTildeMode};
use crate::stats::{log_space, mean};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Gramian,
    Coupling,
    Bismut,
    Harnack,
    Ergodicity,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Gramian => "gramian",
            ExperimentKind::Coupling => "coupling",
            ExperimentKind::Bismut => "bismut",
            ExperimentKind::Harnack => "harnack",
            ExperimentKind::Ergodicity => "ergodicity",
        }
    }
}

fn default_preset() -> String {
    "linear-ou".into()
}
fn default_seed() -> u64 {
    1
}
fn default_particles() -> usize {
    1000
}
fn default_h() -> f64 {
    0.005
}
fn default_horizon() -> f64 {
    1.0
}
fn default_t0() -> f64 {
    0.5
}
fn default_replicas() -> usize {
    2000
}
fn default_fd_eps() -> f64 {
    0.1
}
fn default_k_nn() -> usize {
    5
}
fn default_phi() -> String {
    "constant".into()
}
fn default_f() -> String {
    "coordinate".into()
}
fn default_out() -> String {
    "out".into()
}

/// Experiment configuration. Empty `t_grid`, `shift` and unset `init_var`
/// take experiment-specific defaults (see [`RunConfig::resolved_t_grid`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: Option<ExperimentKind>,
    #[serde(default = "default_preset")]
    pub preset: String,
    /// Preset parameter overrides.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Particles `N` in every law flow.
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_fd_eps")]
    pub fd_eps: f64,
    #[serde(default = "default_k_nn")]
    pub k_nn: usize,
    /// `constant`, `coordinate` or `contraction`.
    #[serde(default = "default_phi")]
    pub phi: String,
    /// `coordinate` or `bump`.
    #[serde(default = "default_f")]
    pub f: String,
    /// Initial law `N(0, init_var I)`; `ν` is shifted by `shift`.
    #[serde(default)]
    pub init_var: Option<f64>,
    #[serde(default)]
    pub shift: Vec<f64>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_out")]
    pub out: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::ConfigInvalid { field: field.into(), reason: reason.into() }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.kind.ok_or_else(|| invalid("kind", "no experiment kind given"))
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON of the config
    /// with `workers` and `out` cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = None;
        c.out = String::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn is_degenerate(&self) -> bool {
        self.preset == "kinetic-langevin"
    }

    pub fn resolved_t_grid(&self) -> Result<Vec<f64>> {
        if !self.t_grid.is_empty() {
            return Ok(self.t_grid.clone());
        }
        let kind = self.kind()?;
        let grid = match kind {
            ExperimentKind::Simulate => (1..=10).map(|i| self.horizon * i as f64 / 10.0).collect(),
            ExperimentKind::Gramian => (1..=8).map(|k| 0.5f64.powi(k)).collect(),
            ExperimentKind::Coupling => vec![self.t0],
            ExperimentKind::Bismut => vec![0.25, 0.5, 1.0],
            ExperimentKind::Harnack => log_space(if self.is_degenerate() { 0.1 } else { 0.05 }, 1.0, 12),
            ExperimentKind::Ergodicity => (0..=24).map(|i| self.horizon * i as f64 / 24.0).collect(),
        };
        if kind == ExperimentKind::Gramian || !(self.h > 0.0) {
            return Ok(grid);
        }
        // default grids are snapped to the step so every time is reachable
        let mut g: Vec<f64> = grid.iter().map(|t| (t / self.h).round() * self.h).collect();
        g.dedup();
        if kind != ExperimentKind::Ergodicity {
            g.retain(|t| *t > 0.0);
        }
        Ok(g)
    }

    fn init_var(&self) -> f64 {
        self.init_var.unwrap_or(match self.kind {
            Some(ExperimentKind::Ergodicity) => 1.0,
            Some(ExperimentKind::Harnack) if self.preset != "mean-repelled" => 0.0,
            _ => 0.5,
        })
    }

    fn shift(&self, n: usize) -> Result<DVector<f64>> {
        if self.shift.is_empty() {
            let mut v = DVector::zeros(n);
            match self.kind {
                Some(ExperimentKind::Ergodicity) => {
                    for i in 0..n {
                        v[i] = if i % 2 == 0 { 3.0 } else { -2.0 };
                    }
                }
                _ => v[n - 1] = 0.5,
            }
            return Ok(v);
        }
        if self.shift.len() != n {
            return Err(invalid("shift", format!("has {} entries, model dimension is {n}", self.shift.len())));
        }
        Ok(DVector::from_column_slice(&self.shift))
    }

    /// Checks ranges and grid compatibility.
    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        if self.particles < 2 {
            return Err(invalid("particles", "need at least 2"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(invalid("h", format!("must be positive, got {}", self.h)));
        }
        if !(self.horizon > 0.0) {
            return Err(invalid("horizon", "must be positive"));
        }
        if !(self.t0 > 0.0) {
            return Err(invalid("t0", "must be positive"));
        }
        if self.replicas < 2 {
            return Err(invalid("replicas", "need at least 2"));
        }
        if !(self.fd_eps > 0.0 && self.fd_eps <= 1.0) {
            return Err(invalid("fd_eps", "must lie in (0, 1]"));
        }
        if self.k_nn == 0 {
            return Err(invalid("k_nn", "must be positive"));
        }
        if let Some(v) = self.init_var {
            if !(v >= 0.0) {
                return Err(invalid("init_var", "must be nonnegative"));
            }
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be positive"));
        }
        if !["constant", "coordinate", "contraction"].contains(&self.phi.as_str()) {
            return Err(invalid("phi", format!("unknown direction {:?}", self.phi)));
        }
        if !["coordinate", "bump"].contains(&self.f.as_str()) {
            return Err(invalid("f", format!("unknown test function {:?}", self.f)));
        }
        let grid = self.resolved_t_grid()?;
        let t_min_allowed = if kind == ExperimentKind::Ergodicity { 0.0 } else { f64::MIN_POSITIVE };
        if grid.iter().any(|t| !(*t >= t_min_allowed && t.is_finite())) {
            return Err(invalid("t_grid", "times must be positive"));
        }
        if kind != ExperimentKind::Gramian {
            let mut tmin = grid.iter().copied().filter(|t| *t > 0.0).fold(f64::INFINITY, f64::min);
            if kind == ExperimentKind::Coupling {
                tmin = tmin.min(self.t0);
            }
            if kind == ExperimentKind::Ergodicity {
                tmin = grid.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            }
            if self.h > tmin / 10.0 * (1.0 + 1e-12) {
                return Err(invalid("h", format!("must be at most min t / 10 = {}", tmin / 10.0)));
            }
            let plan = NoisePlan::new(self.seed, self.h);
            if let Some(t) = grid.iter().find(|t| plan.steps_for(**t).is_none()) {
                return Err(invalid("t_grid", format!("t = {t} is not a multiple of h = {}", self.h)));
            }
        }
        Preset::build(&self.preset, &self.params)?;
        Ok(())
    }
}

/// One named PASS/FAIL check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub wall_time_s: f64,
    pub checks: Vec<Check>,
    pub fitted: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Rows of `{:.16e}` numbers (17 significant digits) plus optional text cells.
struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Result of one experiment before it is written out.
struct Outcome {
    csv: Csv,
    checks: Vec<Check>,
    fitted: BTreeMap<String, f64>,
    warnings: Vec<String>,
}

impl Outcome {
    fn new(csv: Csv) -> Self {
        Self { csv, checks: Vec::new(), fitted: BTreeMap::new(), warnings: Vec::new() }
    }
}

fn phi_fn(name: &str, n: usize, first_noisy: usize) -> Box<PhiFn> {
    match name {
        "coordinate" => Box::new(move |x: &[f64]| {
            let mut v = vec![0.0; n];
            v[first_noisy..].copy_from_slice(&x[first_noisy..]);
            v
        }),
        "contraction" => Box::new(|x: &[f64]| x.iter().map(|v| -v).collect()),
        _ => Box::new(move |_: &[f64]| {
            let mut v = vec![0.0; n];
            for (k, i) in (first_noisy..n).enumerate() {
                v[i] = 0.5f64.powi(k as i32);
            }
            v
        }),
    }
}

fn f_fn(name: &str) -> Box<ScalarFn> {
    match name {
        "bump" => Box::new(|x: &[f64]| (-0.5 * x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>()).exp()),
        _ => Box::new(|x: &[f64]| x[0]),
    }
}

fn initial_law(cfg: &RunConfig, n: usize) -> Result<GaussianLaw> {
    GaussianLaw::new(DVector::zeros(n), SymMatrix::identity(n).scale(cfg.init_var()))
}

fn shifted(law: &GaussianLaw, shift: &DVector<f64>) -> GaussianLaw {
    GaussianLaw { mean: &law.mean + shift, cov: law.cov.clone() }
}

fn sample(law: &GaussianLaw, cfg: &RunConfig) -> Result<EmpiricalMeasure> {
    if law.cov.trace() == 0.0 {
        return Ok(EmpiricalMeasure::repeated(law.mean.as_slice(), cfg.particles));
    }
    law.sample(cfg.particles, cfg.seed, Stream::INITIAL)
}

fn shift_cloud(mu: &EmpiricalMeasure, shift: &DVector<f64>) -> Result<EmpiricalMeasure> {
    let n = mu.dim();
    let pts: Vec<f64> = mu.points().iter().enumerate().map(|(k, v)| v + shift[k % n]).collect();
    EmpiricalMeasure::uniform(pts, n)
}

fn run_simulate(cfg: &RunConfig, preset: &Preset) -> Result<Outcome> {
    let model = preset.model();
    let n = model.dim();
    let grid = cfg.resolved_t_grid()?;
    let plan = NoisePlan::new(cfg.seed, cfg.h);
    let law0 = shifted(&initial_law(cfg, n)?, &cfg.shift(n)?);
    let mu0 = sample(&law0, cfg)?;
    let idx: Vec<usize> = grid.iter().map(|t| plan.steps_for(*t).expect("validated")).collect();
    let last = *idx.iter().max().unwrap_or(&0);
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..n).map(|i| format!("mean_{i}")));
    header.push("second_moment".into());
    header.extend((0..n).map(|i| format!("exact_mean_{i}")));
    let mut csv = Csv { header, rows: Vec::new() };
    let system = preset.gaussian_system();
    let mut worst: f64 = 0.0;
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    run_ensemble(model, &mu0, &plan, last, WTildeMode::PerParticle, &mut |e| {
        for (k, s) in idx.iter().enumerate() {
            if *s != e.step {
                continue;
            }
            let m = e.empirical_measure();
            let mut row = vec![num(grid[k])];
            row.extend(m.mean().iter().map(|v| num(*v)));
            row.push(num(m.second_moment()));
            match &system {
                Some(sys) => {
                    let exact = sys.propagate(&law0, grid[k]);
                    // 5 standard errors of the particle mean plus O(h) bias
                    let tol = 5.0 * (exact.cov.trace() / m.len() as f64).sqrt() + 2.0 * cfg.h * (1.0 + exact.mean.norm());
                    let err = (DVector::from_column_slice(m.mean()) - &exact.mean).norm();
                    worst = worst.max(err / tol);
                    row.extend(exact.mean.iter().map(|v| num(*v)));
                }
                None => row.extend((0..n).map(|_| num(f64::NAN))),
            }
            rows.push((k, row));
        }
        Ok(())
    })?;
    rows.sort_by_key(|r| r.0);
    for (_, r) in rows {
        csv.push(r);
    }
    let mut out = Outcome::new(csv);
    if system.is_some() {
        out.checks.push(Check::new("mean_vs_closed_form", worst <= 1.0, format!("worst error / tolerance = {worst:.3}")));
    }
    Ok(out)
}

fn run_gramian(cfg: &RunConfig, preset: &Preset) -> Result<Outcome> {
    let s = preset
        .model()
        .structure()
        .ok_or_else(|| invalid("preset", format!("{} has no Hamiltonian structure", cfg.preset)))?;
    let grid = cfg.resolved_t_grid()?;
    let sc = gramian_inverse_norm_slope(&s.a, &s.m, s.l, &grid)?;
    let mut csv = Csv::new(&["t", "inv_norm"]);
    for (t, v) in sc.t.iter().zip(&sc.inverse_norm) {
        csv.push(vec![num(*t), num(*v)]);
    }
    let mut out = Outcome::new(csv);
    out.fitted.insert("slope".into(), sc.fit.slope);
    out.fitted.insert("expected_slope".into(), sc.expected_slope);
    out.checks.push(Check::new(
        "inverse_norm_slope",
        sc.fit.slope >= sc.expected_slope - 0.1,
        format!("slope {:.4} vs 1 - 2l = {}", sc.fit.slope, sc.expected_slope),
    ));
    Ok(out)
}

/// Degenerate terminal gaps must stay below `HIT_CONSTANT · h`.
pub const HIT_CONSTANT: f64 = 10.0;

fn run_coupling(cfg: &RunConfig, preset: &Preset) -> Result<Outcome> {
    let model = preset.model();
    let n = model.dim();
    let grid = cfg.resolved_t_grid()?;
    let tmax = grid.iter().copied().fold(0.0, f64::max);
    let plan = NoisePlan::new(cfg.seed, cfg.h);
    let steps = plan.steps_for(tmax).expect("validated");
    let mu0 = sample(&initial_law(cfg, n)?, cfg)?;
    let nu0 = shift_cloud(&mu0, &cfg.shift(n)?)?;
    let pairing = optimal_initial_coupling(&mu0, &nu0)?;
    let flow_mu = simulate_law_flow(model, &mu0, &plan, steps)?;
    let flow_nu = simulate_law_flow(model, &nu0, &plan, steps)?;
    let pairs = |r: u64| {
        let i = crate::bismut::replica_start(&plan, r, mu0.len());
        (mu0.point(i).to_vec(), nu0.point(pairing[i]).to_vec())
    };
    let noise = |r: u64| ReplicaNoise::new(plan, r, WTildeMode::PerParticle);
    let mut csv =
        Csv::new(&["t0", "mean_weight", "se_weight", "max_gap", "max_identity_residual", "mean_eta_energy", "outliers"]);
    let mut out_checks = Vec::new();
    let mut warnings = Vec::new();
    let mut fitted = BTreeMap::new();
    for &t0 in &grid {
        let sg = match model.structure() {
            Some(s) => Some(SteeringGrid::new(s, t0, plan.steps_for(t0).expect("validated"))?),
            None => None,
        };
        let runs = run_couplings(model, &flow_mu, &flow_nu, &pairs, t0, cfg.replicas, &noise, sg.as_ref())?;
        let mc = martingale_check(&runs);
        let gap = runs.iter().map(|r| r.terminal_gap).fold(0.0, f64::max);
        let resid = runs.iter().map(|r| r.identity_residual).fold(0.0, f64::max);
        let energy = mean(&runs.iter().map(|r| r.eta_energy).collect::<Vec<_>>());
        csv.push(vec![
            num(t0),
            num(mc.mean),
            num(mc.se),
            num(gap),
            num(resid),
            num(energy),
            mc.outliers.to_string(),
        ]);
        if mc.outliers > 0 {
            warnings.push(format!("t0 = {t0}: {} runs with |log R| > {}", mc.outliers, crate::coupling::LOGR_OUTLIER));
        }
        out_checks.push(Check::new(
            format!("martingale_t0={t0}"),
            mc.pass(),
            format!("mean R = {:.5} ± {:.5} (z = {:.2})", mc.mean, mc.se, mc.z_score()),
        ));
        let (hit_ok, bound) = match sg {
            None => (gap <= 1e-9, 1e-9),
            Some(_) => (gap <= HIT_CONSTANT * cfg.h, HIT_CONSTANT * cfg.h),
        };
        out_checks.push(Check::new(format!("exact_hit_t0={t0}"), hit_ok, format!("max gap {gap:.3e} (bound {bound:.1e})")));
        fitted.insert(format!("gap_over_h_t0={t0}"), gap / cfg.h);
    }
    let mut out = Outcome::new(csv);
    out.checks = out_checks;
    out.warnings = warnings;
    out.fitted = fitted;
    Ok(out)
}

fn run_bismut(cfg: &RunConfig, preset: &Preset) -> Result<Outcome> {
    let model = preset.model();
    let n = model.dim();
    let grid = cfg.resolved_t_grid()?;
    let plan = NoisePlan::new(cfg.seed, cfg.h);
    let mu = sample(&initial_law(cfg, n)?, cfg)?;
    let first_noisy = n - model.noise_dim();
    let phi = phi_fn(&cfg.phi, n, first_noisy);
    let f = f_fn(&cfg.f);
    let degenerate = model.structure().is_some();
    let tol = if degenerate { 0.07 } else { 0.05 };
    let mut csv = Csv::new(&["t", "estimate", "std_error", "fd", "fd_se", "weight_l2"]);
    let mut checks = Vec::new();
    for &t in &grid {
        let run = if degenerate {
            bismut_degenerate(model, &mu, &*phi, t, &plan, cfg.replicas)?
        } else {
            bismut_nondegenerate(model, &mu, &*phi, t, &plan, cfg.replicas)?
        };
        let est = run.estimate(&*f);
        let coarse = lions_fd_oracle(model, &mu, &*phi, t, cfg.fd_eps, &plan, cfg.replicas)?;
        let fine = lions_fd_oracle(model, &mu, &*phi, t, cfg.fd_eps / 2.0, &plan, cfg.replicas)?;
        let fd = richardson(&coarse, &fine, &*f)?;
        csv.push(vec![num(t), num(est.value), num(est.std_error), num(fd.value), num(fd.std_error), num(est.weight_l2)]);
        let comb = (est.std_error.powi(2) + fd.std_error.powi(2)).sqrt();
        let allowed = (tol * fd.value.abs()).max(3.0 * comb);
        let diff = (est.value - fd.value).abs();
        checks.push(Check::new(format!("bismut_vs_fd_t={t}"), diff <= allowed, format!("|diff| {diff:.4e} allowed {allowed:.4e}")));
    }
    let mut out = Outcome::new(csv);
    out.checks = checks;
    Ok(out)
}

fn harnack_csv(rep: &HarnackReport) -> Csv {
    let mut csv = Csv::new(&["t", "entropy", "w2sq", "w2tsq", "fitted_c", "path_tag"]);
    for (i, t) in rep.t.iter().enumerate() {
        let w2t = rep.w2t_sq.as_ref().map_or(f64::NAN, |w| w[i]);
        let c = rep.fitted_c_modified.unwrap_or(rep.fitted_c);
        csv.push(vec![num(*t), num(rep.entropy[i]), num(rep.w2sq), num(w2t), num(c), rep.path.tag().into()]);
    }
    csv
}

fn run_harnack(cfg: &RunConfig, preset: &Preset) -> Result<Outcome> {
    let model = preset.model();
    let n = model.dim();
    let grid = cfg.resolved_t_grid()?;
    let mu = initial_law(cfg, n)?;
    let shift = cfg.shift(n)?;
    let nu = shifted(&mu, &shift);
    let system = preset.gaussian_system();
    let (rep, mut checks) = match (model.structure(), system) {
        (Some(s), Some(sys)) => {
            let rep = degenerate_entropy_cost_experiment(&sys, &mu, &nu, &grid, s.m_dim(), s.l)?;
            let envelope = -((4 * s.l - 3) as f64) - 0.5;
            let slope = rep.modified_slope.map_or(f64::NAN, |f| f.slope);
            let checks = vec![Check::new(
                "modified_envelope",
                slope >= envelope,
                format!("slope of log(Ent / W2t^2) {slope:.3} vs {envelope}"),
            )];
            (rep, checks)
        }
        (None, Some(sys)) => {
            let held_mu = GaussianLaw { mean: DVector::zeros(n), cov: SymMatrix::identity(n).scale(0.5) };
            let held_nu = GaussianLaw { mean: &shift * -1.6, cov: SymMatrix::identity(n).scale(0.6) };
            let rep = entropy_cost_gaussian(&sys, &mu, &nu, &grid, Some((&held_mu, &held_nu)))?;
            let spread = rep.ratio_spread();
            let viol = rep.held_out.as_ref().map_or(0, |h| h.violations);
            let checks = vec![
                Check::new("ratio_stable", spread < 2.0, format!("max/min of t Ent / W2^2 = {spread:.3}")),
                Check::new("held_out", viol == 0, format!("{viol} violations with c = {:.4}", rep.fitted_c)),
            ];
            (rep, checks)
        }
        (_, None) => {
            let plan = NoisePlan::new(cfg.seed, cfg.h);
            let mu_c = sample(&mu, cfg)?;
            let nu_c = shift_cloud(&mu_c, &shift)?;
            let rep = entropy_cost_knn(model, &mu_c, &nu_c, &grid, &plan, cfg.k_nn)?;
            (rep, Vec::new())
        }
    };
    checks.push(Check::new("entropy_nonnegative", rep.entropies_nonnegative(), "floor -0.05"));
    let mut out = Outcome::new(harnack_csv(&rep));
    out.fitted.insert("c".into(), rep.fitted_c);
    if let Some(c) = rep.fitted_c_modified {
        out.fitted.insert("c_modified".into(), c);
    }
    if let Some(f) = rep.entropy_slope {
        out.fitted.insert("entropy_slope".into(), f.slope);
    }
    if rep.jittered > 0 {
        out.warnings.push(format!("{} k-NN evaluations used duplicate-breaking jitter", rep.jittered));
    }
    out.checks = checks;
    Ok(out)
}

fn dissipativity_check(name: &str, r: &DissipativityReport) -> Check {
    Check::new(
        name,
        r.pass(),
        format!(
            "margin {:.3e}, {} violations; implied theta1 {:.4}, theta2 {:.4}",
            r.margin, r.violations, r.theta1_fit, r.theta2_fit
        ),
    )
}

/// Independent replicates behind every ergodicity rate.
pub const ERGODICITY_REPLICATES: u64 = 5;

fn run_ergodicity(cfg: &RunConfig, preset: &Preset) -> Result<Outcome> {
    let model = preset.model();
    let n = model.dim();
    let grid = cfg.resolved_t_grid()?;
    let c = preset.constants();
    let mut checks = Vec::new();
    let cert = match c.lyapunov {
        Some((r, r0, _)) => check_dissipativity_f(model, r, r0, c.theta1, c.theta2, 500, cfg.seed)?,
        None => check_dissipativity_e(model, c.theta1, c.theta2, 500, cfg.seed),
    };
    checks.push(dissipativity_check(if c.lyapunov.is_some() { "dissipativity_F" } else { "dissipativity_E" }, &cert));
    let law0 = shifted(&initial_law(cfg, n)?, &cfg.shift(n)?);
    let system = preset.gaussian_system();
    let mut reports = Vec::new();
    for r in 0..ERGODICITY_REPLICATES {
        let seed = cfg.seed.wrapping_add(r.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let plan = NoisePlan::new(seed, cfg.h);
        let mu0 = law0.sample(cfg.particles, seed, Stream::INITIAL)?;
        let reference = match &system {
            Some(sys) => sys.stationary()?.sample(2 * cfg.particles, seed, Stream::PROBE)?,
            None => {
                let burn = (20.0 / c.rate.max(1e-3) / cfg.h).ceil() * cfg.h;
                let start = GaussianLaw::new(DVector::zeros(n), SymMatrix::identity(n))?.sample(2 * cfg.particles, seed, Stream::PROBE)?;
                // own seed: the decay run reuses `plan`'s lanes for the reference
                estimate_invariant_measure(model, &start, burn, &NoisePlan::new(seed ^ 0xb0e4_11ed, cfg.h))?
            }
        };
        reports.push(if model.structure().is_some() {
            degenerate_decay_rate(model, &mu0, &reference, &grid, &plan, c.rate)?
        } else {
            w2_decay_rate(model, &mu0, &reference, &grid, &plan, c.rate)?
        });
    }
    let rr = replicated_rate(&reports);
    checks.push(Check::new(
        "w2_decay_rate",
        rr.mean >= (1.0 - 0.25) * c.rate,
        format!("fitted {:.4} ± {:.4} over {} replicates vs theoretical {:.4}", rr.mean, rr.ci95, rr.rates.len(), c.rate),
    ));
    let ent = match &system {
        Some(sys) => Some(entropy_decay_rate(sys, &law0, &grid, c.rate)?),
        None => None,
    };
    let mut csv = Csv::new(&["t", "w2sq", "entropy", "fitted_rate", "theoretical_rate"]);
    for (i, t) in grid.iter().enumerate() {
        let w = mean(&reports.iter().map(|r| r.w2sq[i]).collect::<Vec<_>>());
        let e = ent.as_ref().and_then(|e| e.entropy.as_ref()).map_or(f64::NAN, |v| v[i]);
        csv.push(vec![num(*t), num(w), num(e), num(rr.mean), num(c.rate)]);
    }
    let mut out = Outcome::new(csv);
    out.fitted.insert("fitted_rate".into(), rr.mean);
    out.fitted.insert("fitted_rate_ci95".into(), rr.ci95);
    out.fitted.insert("theoretical_rate".into(), c.rate);
    out.fitted.insert("rate_tolerance".into(), 0.25);
    out.fitted.insert("noise_floor".into(), mean(&reports.iter().map(|r| r.floor).collect::<Vec<_>>()));
    out.fitted.insert("theta1_fit".into(), cert.theta1_fit);
    out.fitted.insert("theta2_fit".into(), cert.theta2_fit);
    if reports.iter().any(|r| r.fit.is_none()) {
        out.warnings.push("a replicate had fewer than three points above the noise level".into());
    }
    if let Some(e) = &ent {
        out.fitted.insert("entropy_rate".into(), e.fitted_rate);
        if model.structure().is_none() {
            let diff = (e.fitted_rate - rr.mean).abs();
            checks.push(Check::new(
                "entropy_rate_matches_w2",
                diff <= rr.ci95,
                format!("entropy {:.4} vs W2 {:.4}, CI {:.4}", e.fitted_rate, rr.mean, rr.ci95),
            ));
        }
    }
    out.checks = checks;
    Ok(out)
}

/// Written artifacts of a run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub manifest: RunManifest,
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Validates `cfg`, runs the experiment on a pool of `cfg.workers` threads
/// and writes `<out>/<kind>_<hash>.csv` and `<out>/manifest_<hash>.json`.
pub fn run(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let kind = cfg.kind()?;
    let start = Instant::now();
    let preset = Preset::build(&cfg.preset, &cfg.params)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| Error::ExperimentFailed(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| match kind {
        ExperimentKind::Simulate => run_simulate(cfg, &preset),
        ExperimentKind::Gramian => run_gramian(cfg, &preset),
        ExperimentKind::Coupling => run_coupling(cfg, &preset),
        ExperimentKind::Bismut => run_bismut(cfg, &preset),
        ExperimentKind::Harnack => run_harnack(cfg, &preset),
        ExperimentKind::Ergodicity => run_ergodicity(cfg, &preset),
    })?;
    let hash = cfg.hash();
    let dir = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&dir)?;
    let csv_name = format!("{}_{hash}.csv", kind.name());
    let csv_path = dir.join(&csv_name);
    std::fs::write(&csv_path, outcome.csv.render())?;
    let manifest = RunManifest {
        config_hash: hash.clone(),
        seed: cfg.seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        checks: outcome.checks,
        fitted: outcome.fitted,
        warnings: outcome.warnings,
        files: vec![csv_name],
        config: cfg.clone(),
    };
    let manifest_path = dir.join(format!("manifest_{hash}.json"));
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&manifest_path, json)?;
    Ok(RunArtifacts { manifest, csv_path, manifest_path })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_hash() {
        let mut c = RunConfig { kind: Some(ExperimentKind::Gramian), ..RunConfig::default() };
        let h = c.hash();
        assert_eq!(h.len(), 16);
        c.workers = Some(3);
        c.out = "elsewhere".into();
        assert_eq!(c.hash(), h);
        c.seed = 2;
        assert_ne!(c.hash(), h);
    }

    #[test]
    fn invalid_step_rejected() {
        let c = RunConfig { kind: Some(ExperimentKind::Simulate), h: 0.0, ..RunConfig::default() };
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid { field, .. }) if field == "h"));
        let c = RunConfig { kind: Some(ExperimentKind::Coupling), h: 0.1, t0: 0.5, ..RunConfig::default() };
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid { field, .. }) if field == "h"));
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(Error::ConfigInvalid { .. })));
        let c = RunConfig::from_toml("kind = \"coupling\"\nseed = 9\n[params]\neps = 0.2\n").unwrap();
        assert_eq!(c.kind, Some(ExperimentKind::Coupling));
        assert_eq!(c.params["eps"], 0.2);
    }
}
