//! Built-in models with stored analytic constants.
//!
//! * `linear-ou`: `b(x, μ) = -β x + ε mean(μ)` in `ℝ^d`,
//!   `σσ* = (λ² + s² + κ|mean(μ)|²) I`.
//! * `mean-repelled`: `b(x, μ) = -β x + ε tanh(x - mean(μ))` (componentwise),
//!   same noise.
//! * `kinetic-langevin`: state `(q, p, z)` with `q̇ = -a q + p`,
//!   `ṗ = -a p + z` and `dz = b dt + λ dW + s dW~`,
//!   `b = -(k_q q + k_p p + k_z z) + ε mean_z(μ)`. Rank index `l = 2`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::closed_form::LinearGaussianSystem;
use crate::error::{Error, Result};
use crate::linalg::{decompose_noise, HamiltonianStructure, SymMatrix};
use crate::measure::EmpiricalMeasure;
use crate::model::{MeanFieldModel, Tensor3};

fn noise_level(s: f64, kappa: f64, m: &[f64]) -> f64 {
    (s * s + kappa * m.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

fn isotropic_sigma_tilde(d: usize, lambda: f64, s: f64, kappa: f64, m: &[f64]) -> DMatrix<f64> {
    let g = noise_level(s, kappa, m);
    let a = SymMatrix::identity(d).scale(lambda * lambda + g * g);
    decompose_noise(&a, lambda).expect("σσ* ⪰ λ² I by construction").into_inner()
}

/// `mean_j D^I σ~(μ)(x_j) v_j = (κ ⟨m, v̄⟩ / g) I`.
fn isotropic_lions_sigma_mean(d: usize, s: f64, kappa: f64, m: &[f64], v_mean: &[f64]) -> DMatrix<f64> {
    let g = noise_level(s, kappa, m);
    if g == 0.0 || kappa == 0.0 {
        return DMatrix::zeros(d, d);
    }
    let mv: f64 = m.iter().zip(v_mean).map(|(a, b)| a * b).sum();
    DMatrix::identity(d, d) * (kappa * mv / g)
}

fn isotropic_lions_sigma(d: usize, s: f64, kappa: f64, m: &[f64]) -> Tensor3 {
    let mut t = Tensor3::zeros(d, d, d);
    let g = noise_level(s, kappa, m);
    if g == 0.0 || kappa == 0.0 {
        return t;
    }
    for a in 0..d {
        for c in 0..d {
            t.set(a, a, c, kappa * m[c] / g);
        }
    }
    t
}

/// `b(x, μ) = B x + C mean(μ)` with isotropic measure-dependent noise.
#[derive(Debug, Clone)]
pub struct LinearMeanField {
    pub name: String,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub lambda: f64,
    pub s: f64,
    pub kappa: f64,
}

impl LinearMeanField {
    pub fn new(b: DMatrix<f64>, c: DMatrix<f64>, lambda: f64, s: f64, kappa: f64) -> Result<Self> {
        if !b.is_square() || b.shape() != c.shape() {
            return Err(Error::DimensionMismatch("B and C must be square and equal size".into()));
        }
        check_positive("lambda", lambda)?;
        check_nonnegative("s", s)?;
        check_nonnegative("kappa", kappa)?;
        Ok(Self { name: "linear".into(), b, c, lambda, s, kappa })
    }

    pub fn ou(d: usize, beta: f64, eps: f64, lambda: f64, s: f64, kappa: f64) -> Result<Self> {
        let mut m = Self::new(DMatrix::identity(d, d) * -beta, DMatrix::identity(d, d) * eps, lambda, s, kappa)?;
        m.name = "linear-ou".into();
        Ok(m)
    }

    /// Exact Gaussian propagation; only for constant `σ~` (`κ = 0`).
    pub fn gaussian_system(&self) -> Option<LinearGaussianSystem> {
        if self.kappa != 0.0 {
            return None;
        }
        let d = self.b.nrows();
        let noise = DMatrix::identity(d, d) * (self.lambda * self.lambda + self.s * self.s);
        LinearGaussianSystem::new(self.b.clone(), self.c.clone(), noise).ok()
    }
}

impl MeanFieldModel for LinearMeanField {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        self.b.nrows()
    }
    fn noise_dim(&self) -> usize {
        self.b.nrows()
    }
    fn lambda(&self) -> f64 {
        self.lambda
    }
    fn drift(&self, _t: f64, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        let m = mu.mean();
        let d = out.len();
        for (a, o) in out.iter_mut().enumerate() {
            *o = (0..d).map(|c| self.b[(a, c)] * x[c] + self.c[(a, c)] * m[c]).sum();
        }
    }
    fn sigma_tilde(&self, _t: f64, mu: &EmpiricalMeasure) -> DMatrix<f64> {
        isotropic_sigma_tilde(self.dim(), self.lambda, self.s, self.kappa, mu.mean())
    }
    fn grad_x_drift(&self, _t: f64, _x: &[f64], _mu: &EmpiricalMeasure, v: &[f64], out: &mut [f64]) {
        let d = out.len();
        for (a, o) in out.iter_mut().enumerate() {
            *o = (0..d).map(|c| self.b[(a, c)] * v[c]).sum();
        }
    }
    fn lions_drift(&self, _t: f64, _x: &[f64], _mu: &EmpiricalMeasure, _y: &[f64]) -> DMatrix<f64> {
        self.c.clone()
    }
    fn lions_sigma(&self, _t: f64, mu: &EmpiricalMeasure, _y: &[f64]) -> Tensor3 {
        isotropic_lions_sigma(self.dim(), self.s, self.kappa, mu.mean())
    }
    fn lions_drift_mean(&self, _t: f64, _x: &[f64], _mu: &EmpiricalMeasure, _v: &[f64], v_mean: &[f64], out: &mut [f64]) {
        let d = out.len();
        for (a, o) in out.iter_mut().enumerate() {
            *o = (0..d).map(|c| self.c[(a, c)] * v_mean[c]).sum();
        }
    }
    fn lions_sigma_mean(&self, _t: f64, mu: &EmpiricalMeasure, _v: &[f64], v_mean: &[f64]) -> DMatrix<f64> {
        isotropic_lions_sigma_mean(self.dim(), self.s, self.kappa, mu.mean(), v_mean)
    }
    fn drift_lipschitz(&self) -> Option<f64> {
        Some(self.b.clone().svd(false, false).singular_values.max())
    }
}

/// `b(x, μ) = -β x + ε tanh(x - mean(μ))`.
#[derive(Debug, Clone)]
pub struct MeanRepelled {
    pub d: usize,
    pub beta: f64,
    pub eps: f64,
    pub lambda: f64,
    pub s: f64,
    pub kappa: f64,
}

impl MeanFieldModel for MeanRepelled {
    fn name(&self) -> &str {
        "mean-repelled"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn noise_dim(&self) -> usize {
        self.d
    }
    fn lambda(&self) -> f64 {
        self.lambda
    }
    fn drift(&self, _t: f64, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        let m = mu.mean();
        for a in 0..self.d {
            out[a] = -self.beta * x[a] + self.eps * (x[a] - m[a]).tanh();
        }
    }
    fn sigma_tilde(&self, _t: f64, mu: &EmpiricalMeasure) -> DMatrix<f64> {
        isotropic_sigma_tilde(self.d, self.lambda, self.s, self.kappa, mu.mean())
    }
    fn grad_x_drift(&self, _t: f64, x: &[f64], mu: &EmpiricalMeasure, v: &[f64], out: &mut [f64]) {
        let m = mu.mean();
        for a in 0..self.d {
            let th = (x[a] - m[a]).tanh();
            out[a] = (-self.beta + self.eps * (1.0 - th * th)) * v[a];
        }
    }
    fn lions_drift(&self, _t: f64, x: &[f64], mu: &EmpiricalMeasure, _y: &[f64]) -> DMatrix<f64> {
        let m = mu.mean();
        DMatrix::from_fn(self.d, self.d, |a, c| {
            if a == c {
                let th = (x[a] - m[a]).tanh();
                -self.eps * (1.0 - th * th)
            } else {
                0.0
            }
        })
    }
    fn lions_sigma(&self, _t: f64, mu: &EmpiricalMeasure, _y: &[f64]) -> Tensor3 {
        isotropic_lions_sigma(self.d, self.s, self.kappa, mu.mean())
    }
    fn lions_drift_mean(&self, _t: f64, x: &[f64], mu: &EmpiricalMeasure, _v: &[f64], v_mean: &[f64], out: &mut [f64]) {
        let m = mu.mean();
        for a in 0..self.d {
            let th = (x[a] - m[a]).tanh();
            out[a] = -self.eps * (1.0 - th * th) * v_mean[a];
        }
    }
    fn lions_sigma_mean(&self, _t: f64, mu: &EmpiricalMeasure, _v: &[f64], v_mean: &[f64]) -> DMatrix<f64> {
        isotropic_lions_sigma_mean(self.d, self.s, self.kappa, mu.mean(), v_mean)
    }
    fn drift_lipschitz(&self) -> Option<f64> {
        Some(self.beta + self.eps.abs())
    }
}

/// Damped kinetic chain `(q, p, z)` driven through `z`.
#[derive(Debug, Clone)]
pub struct KineticLangevin {
    pub a: f64,
    /// Feedback gains `(k_q, k_p, k_z)`.
    pub k: [f64; 3],
    pub eps: f64,
    pub lambda: f64,
    pub s: f64,
    pub structure: HamiltonianStructure,
}

impl KineticLangevin {
    pub fn new(a: f64, k: [f64; 3], eps: f64, lambda: f64, s: f64) -> Result<Self> {
        check_positive("lambda", lambda)?;
        check_nonnegative("s", s)?;
        let am = DMatrix::from_row_slice(2, 2, &[-a, 1.0, 0.0, -a]);
        let m = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let structure = HamiltonianStructure::new(am, m)?;
        Ok(Self { a, k, eps, lambda, s, structure })
    }

    pub fn gaussian_system(&self) -> LinearGaussianSystem {
        let f = self.full_drift_matrix();
        let mut g = DMatrix::zeros(3, 3);
        g[(2, 2)] = self.eps;
        let noise = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, self.lambda.powi(2) + self.s.powi(2)]));
        LinearGaussianSystem::new(f, g, noise).expect("3x3 blocks")
    }

    /// Spatial drift of the full state, `[[A, M], [-k]]`.
    pub fn full_drift_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[-self.a, 1.0, 0.0, 0.0, -self.a, 1.0, -self.k[0], -self.k[1], -self.k[2]])
    }
}

impl MeanFieldModel for KineticLangevin {
    fn name(&self) -> &str {
        "kinetic-langevin"
    }
    fn dim(&self) -> usize {
        3
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn lambda(&self) -> f64 {
        self.lambda
    }
    fn structure(&self) -> Option<&HamiltonianStructure> {
        Some(&self.structure)
    }
    fn drift(&self, _t: f64, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        out[0] = -(self.k[0] * x[0] + self.k[1] * x[1] + self.k[2] * x[2]) + self.eps * mu.mean()[2];
    }
    fn sigma_tilde(&self, _t: f64, _mu: &EmpiricalMeasure) -> DMatrix<f64> {
        let a = SymMatrix::identity(1).scale(self.lambda * self.lambda + self.s * self.s);
        decompose_noise(&a, self.lambda).expect("σσ* ⪰ λ² I by construction").into_inner()
    }
    fn grad_x_drift(&self, _t: f64, _x: &[f64], _mu: &EmpiricalMeasure, v: &[f64], out: &mut [f64]) {
        out[0] = -(self.k[0] * v[0] + self.k[1] * v[1] + self.k[2] * v[2]);
    }
    fn lions_drift(&self, _t: f64, _x: &[f64], _mu: &EmpiricalMeasure, _y: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 3, &[0.0, 0.0, self.eps])
    }
    fn lions_sigma(&self, _t: f64, _mu: &EmpiricalMeasure, _y: &[f64]) -> Tensor3 {
        Tensor3::zeros(1, 1, 3)
    }
    fn lions_drift_mean(&self, _t: f64, _x: &[f64], _mu: &EmpiricalMeasure, _v: &[f64], v_mean: &[f64], out: &mut [f64]) {
        out[0] = self.eps * v_mean[2];
    }
    fn lions_sigma_mean(&self, _t: f64, _mu: &EmpiricalMeasure, _v: &[f64], _v_mean: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }
    fn drift_lipschitz(&self) -> Option<f64> {
        Some(self.k.iter().map(|v| v * v).sum::<f64>().sqrt())
    }
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::ConfigInvalid { field: field.into(), reason: format!("must be positive, got {v}") })
    }
}

fn check_nonnegative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::ConfigInvalid { field: field.into(), reason: format!("must be nonnegative, got {v}") })
    }
}

/// Dissipativity constants stored with a preset.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PresetConstants {
    pub theta1: f64,
    pub theta2: f64,
    /// Contraction rate promised by the theory: `θ₂ − θ₁`, or
    /// `c₀(θ₂ − θ₁)` for degenerate presets.
    pub rate: f64,
    /// Lyapunov parameters `(r, r₀)` and sandwich constant for degenerate presets.
    pub lyapunov: Option<(f64, f64, f64)>,
}

/// Catalogue entry.
#[derive(Debug, Clone, Serialize)]
pub struct PresetInfo {
    pub name: String,
    pub description: String,
    pub dim: usize,
    pub noise_dim: usize,
    pub lambda: f64,
    pub rank_index: Option<usize>,
    pub params: BTreeMap<String, f64>,
    pub constants: PresetConstants,
}

#[derive(Debug, Clone)]
pub enum Preset {
    LinearOu(LinearMeanField),
    MeanRepelled(MeanRepelled),
    Kinetic(KineticLangevin),
}

pub const PRESET_NAMES: [&str; 3] = ["linear-ou", "mean-repelled", "kinetic-langevin"];

/// Lyapunov parameters of the kinetic preset.
pub const KINETIC_R: f64 = 2.0;
pub const KINETIC_R0: f64 = 0.3;

fn defaults(name: &str) -> Option<BTreeMap<String, f64>> {
    let pairs: &[(&str, f64)] = match name {
        "linear-ou" => &[("dim", 2.0), ("beta", 1.0), ("eps", 0.5), ("lambda", 1.0), ("s", 1.0), ("kappa", 0.0)],
        "mean-repelled" => &[("dim", 2.0), ("beta", 1.0), ("eps", 0.3), ("lambda", 1.0), ("s", 1.0), ("kappa", 0.2)],
        "kinetic-langevin" => &[
            ("a", 0.5),
            ("kq", 1.0),
            ("kp", 2.0),
            ("kz", 2.0),
            ("eps", 0.2),
            ("lambda", 1.0),
            ("s", 1.0),
        ],
        _ => return None,
    };
    Some(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect())
}

impl Preset {
    /// Builds a preset, overriding defaults with `overrides`.
    pub fn build(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut p = defaults(name)
            .ok_or_else(|| Error::ConfigInvalid { field: "preset".into(), reason: format!("unknown preset {name:?}") })?;
        for (k, v) in overrides {
            if !p.contains_key(k) {
                return Err(Error::ConfigInvalid {
                    field: format!("params.{k}"),
                    reason: format!("not a parameter of {name}"),
                });
            }
            p.insert(k.clone(), *v);
        }
        let g = |k: &str| p[k];
        match name {
            "linear-ou" => {
                let d = dim_param(g("dim"))?;
                Ok(Preset::LinearOu(LinearMeanField::ou(d, g("beta"), g("eps"), g("lambda"), g("s"), g("kappa"))?))
            }
            "mean-repelled" => {
                let d = dim_param(g("dim"))?;
                check_positive("lambda", g("lambda"))?;
                check_nonnegative("s", g("s"))?;
                check_nonnegative("kappa", g("kappa"))?;
                Ok(Preset::MeanRepelled(MeanRepelled {
                    d,
                    beta: g("beta"),
                    eps: g("eps"),
                    lambda: g("lambda"),
                    s: g("s"),
                    kappa: g("kappa"),
                }))
            }
            _ => Ok(Preset::Kinetic(KineticLangevin::new(
                g("a"),
                [g("kq"), g("kp"), g("kz")],
                g("eps"),
                g("lambda"),
                g("s"),
            )?)),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Self::build(name, &BTreeMap::new())
    }

    pub fn model(&self) -> &dyn MeanFieldModel {
        match self {
            Preset::LinearOu(m) => m,
            Preset::MeanRepelled(m) => m,
            Preset::Kinetic(m) => m,
        }
    }

    pub fn gaussian_system(&self) -> Option<LinearGaussianSystem> {
        match self {
            Preset::LinearOu(m) => m.gaussian_system(),
            Preset::MeanRepelled(_) => None,
            Preset::Kinetic(m) => Some(m.gaussian_system()),
        }
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        let mut p = BTreeMap::new();
        let mut put = |k: &str, v: f64| {
            p.insert(k.to_string(), v);
        };
        match self {
            Preset::LinearOu(m) => {
                put("dim", m.b.nrows() as f64);
                put("beta", -m.b[(0, 0)]);
                put("eps", m.c[(0, 0)]);
                put("lambda", m.lambda);
                put("s", m.s);
                put("kappa", m.kappa);
            }
            Preset::MeanRepelled(m) => {
                put("dim", m.d as f64);
                put("beta", m.beta);
                put("eps", m.eps);
                put("lambda", m.lambda);
                put("s", m.s);
                put("kappa", m.kappa);
            }
            Preset::Kinetic(m) => {
                put("a", m.a);
                put("kq", m.k[0]);
                put("kp", m.k[1]);
                put("kz", m.k[2]);
                put("eps", m.eps);
                put("lambda", m.lambda);
                put("s", m.s);
            }
        }
        p
    }

    /// Analytic dissipativity constants.
    ///
    /// For the isotropic models `|mean(μ) − mean(ν)| ≤ W₂(μ, ν)` and the noise
    /// level is `√κ`-Lipschitz in the mean, giving `θ₁ = |ε| + dκ` and
    /// `θ₂ = 2β − |ε|` (linear) or `2β − 3|ε|` (tanh is 1-Lipschitz). The
    /// kinetic constants come from the quadratic form of the degenerate
    /// dissipativity condition after a Young split of the mean term.
    pub fn constants(&self) -> PresetConstants {
        match self {
            Preset::LinearOu(m) => {
                let d = m.b.nrows() as f64;
                let eps = m.c[(0, 0)].abs();
                let theta1 = eps + d * m.kappa;
                let theta2 = -2.0 * m.b[(0, 0)] - eps;
                PresetConstants { theta1, theta2, rate: theta2 - theta1, lyapunov: None }
            }
            Preset::MeanRepelled(m) => {
                let theta1 = m.eps.abs() + m.d as f64 * m.kappa;
                let theta2 = 2.0 * m.beta - 3.0 * m.eps.abs();
                PresetConstants { theta1, theta2, rate: theta2 - theta1, lyapunov: None }
            }
            Preset::Kinetic(m) => kinetic_constants(m, KINETIC_R, KINETIC_R0),
        }
    }

    pub fn info(&self) -> PresetInfo {
        let model = self.model();
        let description = match self {
            Preset::LinearOu(_) => "b = -beta x + eps mean(mu); sigma sigma* = (lambda^2 + s^2 + kappa |mean|^2) I",
            Preset::MeanRepelled(_) => "b = -beta x + eps tanh(x - mean(mu)); same noise as linear-ou",
            Preset::Kinetic(_) => {
                "q' = -a q + p, p' = -a p + z, dz = (-(kq q + kp p + kz z) + eps mean_z) dt + lambda dW + s dW~"
            }
        };
        PresetInfo {
            name: model.name().to_string(),
            description: description.to_string(),
            dim: model.dim(),
            noise_dim: model.noise_dim(),
            lambda: model.lambda(),
            rank_index: model.structure().map(|s| s.l),
            params: self.params(),
            constants: self.constants(),
        }
    }
}

fn dim_param(v: f64) -> Result<usize> {
    if v >= 1.0 && v <= 64.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::ConfigInvalid { field: "params.dim".into(), reason: format!("must be an integer in 1..=64, got {v}") })
    }
}

/// Quadratic form `Δᵀ S Δ` bounding the spatial part of the degenerate
/// dissipativity expression for the kinetic model, and the row `B` with
/// `u = B Δ = Δz + r r₀ Mᵀ Δx⁽¹⁾` multiplying the mean term.
fn kinetic_forms(m: &KineticLangevin, r: f64, r0: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let a = &m.structure.a;
    let mm = &m.structure.m;
    let k = DMatrix::from_row_slice(1, 3, &[-m.k[0], -m.k[1], -m.k[2]]);
    let mut b = DMatrix::zeros(1, 3);
    for i in 0..2 {
        b[(0, i)] = r * r0 * mm[(i, 0)];
    }
    b[(0, 2)] = 1.0;
    let mut l = DMatrix::zeros(2, 3);
    l.view_mut((0, 0), (2, 2)).copy_from(a);
    l.view_mut((0, 2), (2, 1)).copy_from(mm);
    let mut w = DMatrix::zeros(2, 3);
    w.view_mut((0, 0), (2, 2)).copy_from(&(DMatrix::identity(2, 2) * (r * r)));
    w.view_mut((0, 2), (2, 1)).copy_from(&(mm * (r * r0)));
    let s = k.transpose() * &b + w.transpose() * l;
    (SymMatrix::symmetrized(s).into_inner(), b)
}

/// `(θ₁, θ₂, c₀(θ₂ − θ₁))` for the kinetic preset, maximizing `θ₂ − θ₁` over
/// the Young parameter on a fixed log grid.
pub fn kinetic_constants(m: &KineticLangevin, r: f64, r0: f64) -> PresetConstants {
    let (s, b) = kinetic_forms(m, r, r0);
    let eps = m.eps.abs();
    let btb = b.transpose() * &b;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=400 {
        let delta = 10f64.powf(-2.0 + 4.0 * i as f64 / 400.0);
        let q = SymMatrix::symmetrized(&s + &btb * (eps * delta / 2.0));
        let theta2 = -*q.eigenvalues().last().unwrap();
        let theta1 = if eps == 0.0 { 0.0 } else { eps / (2.0 * delta) };
        if theta2 - theta1 > best.0 - best.1 || best.0 == f64::NEG_INFINITY {
            best = (theta2, theta1, delta);
        }
    }
    let c0 = crate::ergodicity::sandwich_constant(r, r0, &m.structure.m).unwrap_or(f64::NAN);
    PresetConstants { theta1: best.1, theta2: best.0, rate: c0 * (best.0 - best.1), lyapunov: Some((r, r0, c0)) }
}

/// Catalogue of the built-in presets with default parameters, in fixed order.
pub fn list_presets() -> Vec<PresetInfo> {
    PRESET_NAMES.iter().map(|n| Preset::by_name(n).expect("defaults are valid").info()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue() {
        let c = list_presets();
        let names: Vec<&str> = c.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, PRESET_NAMES);
        let kin = &c[2];
        assert_eq!(kin.rank_index, Some(2));
        let lin = &c[0];
        assert!((lin.constants.rate - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kinetic_constants_positive() {
        let c = Preset::by_name("kinetic-langevin").unwrap().constants();
        assert!(c.theta2 > c.theta1);
        assert!((c.theta2 - 0.6813).abs() < 2e-3, "{c:?}");
        let (_, _, c0) = c.lyapunov.unwrap();
        assert!((c0 - 0.4422).abs() < 1e-3);
    }

    #[test]
    fn unknown_override_rejected() {
        let mut o = BTreeMap::new();
        o.insert("bogus".to_string(), 1.0);
        assert!(matches!(Preset::build("linear-ou", &o), Err(Error::ConfigInvalid { .. })));
        assert!(matches!(Preset::by_name("nope"), Err(Error::ConfigInvalid { .. })));
    }

    #[test]
    fn sigma_tilde_matches_formula() {
        let p = Preset::build("linear-ou", &[("kappa".to_string(), 0.5)].into_iter().collect()).unwrap();
        let mu = EmpiricalMeasure::dirac(&[1.0, 2.0]);
        let s = p.model().sigma_tilde(0.0, &mu);
        let g = (1.0f64 + 0.5 * 5.0).sqrt();
        assert!((s[(0, 0)] - g).abs() < 1e-13 && s[(0, 1)].abs() < 1e-13);
    }
}
