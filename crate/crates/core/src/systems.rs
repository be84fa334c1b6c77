//! Catalog of drift fields, their analytic Jacobians and noise couplings,
//! plus a sampling verifier for the inner-product drift conditions.
//!
//! Every system is `dX = b(X) dt + Σ dL` with a constant coupling matrix Σ
//! (`d × m`, possibly rank deficient), except `geometric1d` whose single
//! channel multiplies the state.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RdsError, Result};
use crate::noise::OUPath;
use crate::streams::{stream_rng, Purpose};

pub const SYSTEM_NAMES: [&str; 7] = [
    "lorenz63",
    "lorenz63_conjugated",
    "doublewell_degenerate",
    "cubic1d",
    "geometric1d",
    "gradient1d",
    "linear_d",
];

#[derive(Debug, Clone, PartialEq)]
pub enum DriftField {
    Lorenz63 { sigma: f64, rho: f64, beta: f64 },
    /// Lorenz drift after subtracting an OU process `O^λ` from the third
    /// coordinate; needs the OU path as auxiliary input.
    Lorenz63Conjugated { sigma: f64, rho: f64, beta: f64, lambda: f64 },
    /// `v - |v|² v` on ℝ^d, noise on the first `forced` coordinates.
    DoubleWell { forced: usize },
    /// `x - x³`.
    Cubic,
    /// Zero drift; the noise multiplies the state.
    Geometric,
    /// `-V'(x)` for `V(x) = c1 x + c2 x² + c3 x³ + c4 x⁴`.
    Gradient1d { c: [f64; 4] },
    /// `A x`, row-major `A`.
    Linear { a: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct SystemSpec {
    name: String,
    dim: usize,
    field: DriftField,
    params: BTreeMap<String, f64>,
    coupling: Vec<f64>,
    channels: usize,
    multiplicative: bool,
    aux: Option<Arc<OUPath>>,
}

fn take(params: &BTreeMap<String, f64>, used: &mut Vec<&'static str>, key: &'static str) -> Result<f64> {
    used.push(key);
    params
        .get(key)
        .copied()
        .ok_or_else(|| RdsError::Config(format!("missing parameter '{key}'")))
}

fn take_or(params: &BTreeMap<String, f64>, used: &mut Vec<&'static str>, key: &'static str, default: f64) -> f64 {
    used.push(key);
    params.get(key).copied().unwrap_or(default)
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(RdsError::Config(format!("parameter '{name}' must be positive, got {v}")))
    }
}

fn whole(name: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e6 {
        Ok(v as usize)
    } else {
        Err(RdsError::Config(format!("parameter '{name}' must be a positive integer, got {v}")))
    }
}

/// Look up a catalog system by name.
pub fn build_system(name: &str, params: &BTreeMap<String, f64>) -> Result<SystemSpec> {
    let mut used = Vec::new();
    let spec = match name {
        "lorenz63" => {
            let sigma = positive("sigma", take(params, &mut used, "sigma")?)?;
            let rho = take(params, &mut used, "rho")?;
            let beta = positive("beta", take(params, &mut used, "beta")?)?;
            let gamma = take(params, &mut used, "gamma")?;
            SystemSpec::lorenz63(sigma, rho, beta, gamma)
        }
        "lorenz63_conjugated" => {
            let sigma = positive("sigma", take(params, &mut used, "sigma")?)?;
            let rho = take(params, &mut used, "rho")?;
            let beta = positive("beta", take(params, &mut used, "beta")?)?;
            let lambda = positive("lambda", take(params, &mut used, "lambda")?)?;
            SystemSpec::lorenz63_conjugated(sigma, rho, beta, lambda)
        }
        "doublewell_degenerate" => {
            let d = whole("d", take(params, &mut used, "d")?)?;
            let n = whole("n", take(params, &mut used, "n")?)?;
            let sigma = take(params, &mut used, "sigma")?;
            if n >= d {
                return Err(RdsError::Config(format!("doublewell needs n < d, got n={n}, d={d}")));
            }
            SystemSpec::doublewell(d, n, sigma)
        }
        "cubic1d" => SystemSpec::cubic1d(take(params, &mut used, "sigma")?),
        "geometric1d" => SystemSpec::geometric1d(),
        "gradient1d" => {
            let sigma = take(params, &mut used, "sigma")?;
            let c = [
                take_or(params, &mut used, "v1", 0.0),
                take_or(params, &mut used, "v2", -0.5),
                take_or(params, &mut used, "v3", 0.0),
                take_or(params, &mut used, "v4", 0.25),
            ];
            SystemSpec::gradient1d(c, sigma)
        }
        "linear_d" => {
            let d = whole("d", take(params, &mut used, "d")?)?;
            let sigma = take_or(params, &mut used, "sigma", 0.0);
            let mut a = vec![0.0; d * d];
            let mut matrix_keys = Vec::new();
            for i in 0..d {
                for j in 0..d {
                    let key = format!("a_{i}_{j}");
                    if let Some(v) = params.get(&key) {
                        a[i * d + j] = *v;
                    }
                    matrix_keys.push(key);
                }
            }
            for key in params.keys() {
                if !used.contains(&key.as_str()) && !matrix_keys.contains(key) {
                    return Err(RdsError::Config(format!("unknown parameter '{key}' for linear_d")));
                }
            }
            return SystemSpec::linear(d, a, sigma).with_params(params);
        }
        other => {
            return Err(RdsError::Config(format!(
                "unknown system '{other}'; valid names: {}",
                SYSTEM_NAMES.join(", ")
            )))
        }
    };
    for key in params.keys() {
        if !used.contains(&key.as_str()) {
            return Err(RdsError::Config(format!("unknown parameter '{key}' for {name}")));
        }
    }
    spec.with_params(params)
}

impl SystemSpec {
    fn new(name: &str, dim: usize, field: DriftField, coupling: Vec<f64>, channels: usize) -> Self {
        debug_assert_eq!(coupling.len(), dim * channels);
        Self {
            name: name.to_string(),
            dim,
            field,
            params: BTreeMap::new(),
            coupling,
            channels,
            multiplicative: false,
            aux: None,
        }
    }

    fn with_params(mut self, params: &BTreeMap<String, f64>) -> Result<Self> {
        self.params.extend(params.iter().map(|(k, v)| (k.clone(), *v)));
        if self.params.values().any(|v| !v.is_finite()) {
            return Err(RdsError::Config("parameters must be finite".into()));
        }
        Ok(self)
    }

    /// Lorenz 63 with additive noise `γ dW` on the third coordinate only.
    pub fn lorenz63(sigma: f64, rho: f64, beta: f64, gamma: f64) -> Self {
        let mut s = Self::new(
            "lorenz63",
            3,
            DriftField::Lorenz63 { sigma, rho, beta },
            vec![0.0, 0.0, gamma],
            1,
        );
        s.params = BTreeMap::from([
            ("sigma".into(), sigma),
            ("rho".into(), rho),
            ("beta".into(), beta),
            ("gamma".into(), gamma),
        ]);
        s
    }

    /// The conjugated Lorenz system `z = Z - O^λ`. It carries one (unused)
    /// zero channel so it can share paths with `lorenz63`; attach the OU path
    /// with [`SystemSpec::with_aux`].
    pub fn lorenz63_conjugated(sigma: f64, rho: f64, beta: f64, lambda: f64) -> Self {
        let mut s = Self::new(
            "lorenz63_conjugated",
            3,
            DriftField::Lorenz63Conjugated { sigma, rho, beta, lambda },
            vec![0.0; 3],
            1,
        );
        s.params = BTreeMap::from([
            ("sigma".into(), sigma),
            ("rho".into(), rho),
            ("beta".into(), beta),
            ("lambda".into(), lambda),
        ]);
        s
    }

    pub fn doublewell(d: usize, n: usize, sigma: f64) -> Self {
        let mut coupling = vec![0.0; d * n];
        for i in 0..n {
            coupling[i * n + i] = sigma;
        }
        let mut s = Self::new("doublewell_degenerate", d, DriftField::DoubleWell { forced: n }, coupling, n);
        s.params = BTreeMap::from([("d".into(), d as f64), ("n".into(), n as f64), ("sigma".into(), sigma)]);
        s
    }

    pub fn cubic1d(sigma: f64) -> Self {
        let mut s = Self::new("cubic1d", 1, DriftField::Cubic, vec![sigma], 1);
        s.params = BTreeMap::from([("sigma".into(), sigma)]);
        s
    }

    /// `dX = X dW`.
    pub fn geometric1d() -> Self {
        let mut s = Self::new("geometric1d", 1, DriftField::Geometric, vec![1.0], 1);
        s.multiplicative = true;
        s
    }

    /// `dX = -V'(X) dt + σ dW` with `V = c[0] x + c[1] x² + c[2] x³ + c[3] x⁴`.
    pub fn gradient1d(c: [f64; 4], sigma: f64) -> Self {
        let mut s = Self::new("gradient1d", 1, DriftField::Gradient1d { c }, vec![sigma], 1);
        s.params = BTreeMap::from([
            ("sigma".into(), sigma),
            ("v1".into(), c[0]),
            ("v2".into(), c[1]),
            ("v3".into(), c[2]),
            ("v4".into(), c[3]),
        ]);
        s
    }

    /// `dX = A X dt + σ dW` with `d` independent channels.
    pub fn linear(d: usize, a: Vec<f64>, sigma: f64) -> Self {
        assert_eq!(a.len(), d * d, "A must be d x d");
        let mut coupling = vec![0.0; d * d];
        for i in 0..d {
            coupling[i * d + i] = sigma;
        }
        let mut s = Self::new("linear_d", d, DriftField::Linear { a }, coupling, d);
        s.params = BTreeMap::from([("d".into(), d as f64), ("sigma".into(), sigma)]);
        s
    }

    pub fn linear_diag(diag: &[f64], sigma: f64) -> Self {
        let d = diag.len();
        let mut a = vec![0.0; d * d];
        for (i, v) in diag.iter().enumerate() {
            a[i * d + i] = *v;
        }
        Self::linear(d, a, sigma)
    }

    /// Attach the OU path required by `lorenz63_conjugated`.
    pub fn with_aux(mut self, ou: Arc<OUPath>) -> Result<Self> {
        match self.field {
            DriftField::Lorenz63Conjugated { lambda, .. } => {
                if (ou.lambda - lambda).abs() > 1e-12 * lambda.abs().max(1.0) {
                    return Err(RdsError::State(format!(
                        "OU relaxation rate {} does not match system lambda {lambda}",
                        ou.lambda
                    )));
                }
                self.aux = Some(ou);
                Ok(self)
            }
            _ => Err(RdsError::State(format!("{} takes no auxiliary path", self.name))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn field(&self) -> &DriftField {
        &self.field
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    pub fn is_multiplicative(&self) -> bool {
        self.multiplicative
    }

    pub fn aux(&self) -> Option<&Arc<OUPath>> {
        self.aux.as_ref()
    }

    pub fn requires_aux(&self) -> bool {
        matches!(self.field, DriftField::Lorenz63Conjugated { .. })
    }

    /// Rank of the coupling matrix (Gaussian elimination with pivoting).
    pub fn coupling_rank(&self) -> usize {
        let (rows, cols) = (self.dim, self.channels);
        let mut m = self.coupling.clone();
        let mut rank = 0;
        for col in 0..cols {
            let pivot = (rank..rows).max_by(|&a, &b| m[a * cols + col].abs().total_cmp(&m[b * cols + col].abs()));
            let Some(p) = pivot else { break };
            if m[p * cols + col].abs() < 1e-12 {
                continue;
            }
            for c in 0..cols {
                m.swap(rank * cols + c, p * cols + c);
            }
            for r in rank + 1..rows {
                let f = m[r * cols + col] / m[rank * cols + col];
                for c in 0..cols {
                    m[r * cols + c] -= f * m[rank * cols + c];
                }
            }
            rank += 1;
        }
        rank
    }

    /// Check that the system can be evaluated (auxiliary input present).
    pub fn ensure_ready(&self) -> Result<()> {
        if self.requires_aux() && self.aux.is_none() {
            return Err(RdsError::State(format!("{} needs an OU path (with_aux)", self.name)));
        }
        Ok(())
    }

    #[inline]
    fn ou_at(&self, k: usize) -> f64 {
        match &self.aux {
            Some(ou) => ou.values[k.min(ou.values.len() - 1)],
            None => 0.0,
        }
    }

    /// Drift at absolute grid index `k` (only the conjugated Lorenz system
    /// depends on `k`, through its OU input).
    #[inline]
    pub fn drift_at(&self, k: usize, x: &[f64], out: &mut [f64]) {
        match &self.field {
            DriftField::Lorenz63 { sigma, rho, beta } => {
                out[0] = sigma * (x[1] - x[0]);
                out[1] = rho * x[0] - x[1] - x[0] * x[2];
                out[2] = -beta * x[2] + x[0] * x[1];
            }
            DriftField::Lorenz63Conjugated { sigma, rho, beta, lambda } => {
                let o = self.ou_at(k);
                out[0] = sigma * (x[1] - x[0]);
                out[1] = (rho - o) * x[0] - x[1] - x[0] * x[2];
                out[2] = -beta * x[2] + x[0] * x[1] - (beta - lambda) * o;
            }
            DriftField::DoubleWell { .. } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                for (o, v) in out.iter_mut().zip(x) {
                    *o = v - r2 * v;
                }
            }
            DriftField::Cubic => out[0] = x[0] - x[0] * x[0] * x[0],
            DriftField::Geometric => out[0] = 0.0,
            DriftField::Gradient1d { c } => {
                let v = x[0];
                out[0] = -(c[0] + 2.0 * c[1] * v + 3.0 * c[2] * v * v + 4.0 * c[3] * v * v * v);
            }
            DriftField::Linear { a } => {
                let d = self.dim;
                for i in 0..d {
                    out[i] = (0..d).map(|j| a[i * d + j] * x[j]).sum();
                }
            }
        }
    }

    /// Jacobian of the drift at absolute grid index `k`, row-major `d × d`.
    #[inline]
    pub fn jacobian_at(&self, k: usize, x: &[f64], out: &mut [f64]) {
        match &self.field {
            DriftField::Lorenz63 { sigma, rho, beta } => {
                out.copy_from_slice(&[
                    -sigma, *sigma, 0.0,
                    rho - x[2], -1.0, -x[0],
                    x[1], x[0], -beta,
                ]);
            }
            DriftField::Lorenz63Conjugated { sigma, rho, beta, .. } => {
                let o = self.ou_at(k);
                out.copy_from_slice(&[
                    -sigma, *sigma, 0.0,
                    rho - o - x[2], -1.0, -x[0],
                    x[1], x[0], -beta,
                ]);
            }
            DriftField::DoubleWell { .. } => {
                let d = self.dim;
                let r2: f64 = x.iter().map(|v| v * v).sum();
                for i in 0..d {
                    for j in 0..d {
                        let delta = if i == j { 1.0 - r2 } else { 0.0 };
                        out[i * d + j] = delta - 2.0 * x[i] * x[j];
                    }
                }
            }
            DriftField::Cubic => out[0] = 1.0 - 3.0 * x[0] * x[0],
            DriftField::Geometric => out[0] = 0.0,
            DriftField::Gradient1d { c } => {
                let v = x[0];
                out[0] = -(2.0 * c[1] + 6.0 * c[2] * v + 12.0 * c[3] * v * v);
            }
            DriftField::Linear { a } => out.copy_from_slice(a),
        }
    }

    fn index_of_time(&self, t: f64) -> usize {
        match &self.aux {
            Some(ou) => ((t - ou.grid.t_start) / ou.grid.dt).round().max(0.0) as usize,
            None => 0,
        }
    }

    /// Drift at time `t` (mapped onto the auxiliary OU grid when present).
    pub fn drift(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        let mut out = vec![0.0; self.dim];
        self.drift_at(self.index_of_time(t), x, &mut out);
        Ok(out)
    }

    pub fn jacobian(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        let mut out = vec![0.0; self.dim * self.dim];
        self.jacobian_at(self.index_of_time(t), x, &mut out);
        Ok(out)
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        self.ensure_ready()?;
        if x.len() != self.dim {
            return Err(RdsError::State(format!("state has dimension {}, expected {}", x.len(), self.dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(RdsError::State("state must be finite".into()));
        }
        Ok(())
    }

    /// Add `Σ ΔL` (or `X ΔL` for the multiplicative system) to `out`.
    #[inline]
    pub fn add_noise(&self, x: &[f64], increment: &[f64], out: &mut [f64]) {
        if self.multiplicative {
            out[0] += self.coupling[0] * x[0] * increment[0];
            return;
        }
        let m = self.channels;
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let row = &self.coupling[i * m..(i + 1) * m];
            for (c, inc) in row.iter().zip(increment) {
                if *c != 0.0 {
                    *o += c * inc;
                }
            }
        }
    }

    /// Trace of the drift Jacobian.
    pub fn divergence_at(&self, k: usize, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut j = vec![0.0; d * d];
        self.jacobian_at(k, x, &mut j);
        (0..d).map(|i| j[i * d + i]).sum()
    }

    /// For drifts whose Jacobian is affine in the state: the constant
    /// `|∂J_ij/∂x_l|` tensor, indexed `[(i * d + j) * d + l]`.
    pub fn jacobian_sensitivity(&self) -> Option<Vec<f64>> {
        let d = self.dim;
        match &self.field {
            DriftField::Lorenz63 { .. } | DriftField::Lorenz63Conjugated { .. } => {
                let mut s = vec![0.0; d * d * d];
                let mut set = |i: usize, j: usize, l: usize| s[(i * d + j) * d + l] = 1.0;
                set(1, 0, 2); // ρ - z
                set(1, 2, 0); // -x
                set(2, 0, 1); // y
                set(2, 1, 0); // x
                Some(s)
            }
            DriftField::Linear { .. } => Some(vec![0.0; d * d * d]),
            _ => None,
        }
    }

    /// Whether the quadratic part `B` of the drift satisfies `⟨B(e), e⟩_w = 0`
    /// for the given metric weights. Then the separation of two trajectories
    /// grows at a rate set by the Jacobian at either one of them alone.
    pub fn quadratic_part_is_skew(&self, weights: &[f64]) -> bool {
        match &self.field {
            DriftField::Lorenz63 { .. } | DriftField::Lorenz63Conjugated { .. } => {
                (weights[1] - weights[2]).abs() <= 1e-15 * weights[1].abs()
            }
            DriftField::Linear { .. } => true,
            _ => false,
        }
    }
}

/// Which inner-product condition to test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftCondition {
    /// `⟨b(x) - b(y), x - y⟩_w ≤ λ |x - y|_w²` for all pairs.
    OneSidedLipschitz { lambda: f64 },
    /// `≤ η |x-y|²` when `|x|+|y| < R`, `≤ -λ |x-y|²` when `|x|+|y| ≥ R`.
    EventuallyMonotone { radius: f64, eta: f64, lambda: f64 },
    /// `⟨b(x) - b(z), x - z⟩_w ≤ -λ |x - z|_w²` for all x.
    MonotoneAtPoint { z: Vec<f64>, lambda: f64 },
}

impl DriftCondition {
    pub fn label(&self) -> &'static str {
        match self {
            DriftCondition::OneSidedLipschitz { .. } => "one_sided_lipschitz",
            DriftCondition::EventuallyMonotone { .. } => "eventually_monotone",
            DriftCondition::MonotoneAtPoint { .. } => "monotone_at_point",
        }
    }
}

/// Region from which state samples are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Ball in the weighted metric.
    Ball { center: Vec<f64>, radius: f64 },
    /// Axis-aligned box.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Ball { center, .. } => center.len(),
            Region::Box { lo, .. } => lo.len(),
        }
    }

    pub fn contains(&self, x: &[f64], weights: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => weighted_dist(x, center, weights) <= *radius,
            Region::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| *l <= *v && *v <= *h),
        }
    }

    /// Distance from `x` to the complement of the region (0 outside).
    pub fn depth(&self, x: &[f64], weights: &[f64]) -> f64 {
        match self {
            Region::Ball { center, radius } => (radius - weighted_dist(x, center, weights)).max(0.0),
            Region::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .zip(weights)
                .map(|((v, (l, h)), w)| ((v - l).min(h - v)).max(0.0) * w.sqrt())
                .fold(f64::INFINITY, f64::min),
        }
    }

    fn sample<R: Rng>(&self, weights: &[f64], rng: &mut R) -> Vec<f64> {
        match self {
            Region::Ball { center, radius } => {
                let u = uniform_in_unit_ball(center.len(), rng);
                center
                    .iter()
                    .zip(&u)
                    .zip(weights)
                    .map(|((c, ui), w)| c + radius * ui / w.sqrt())
                    .collect()
            }
            Region::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect(),
        }
    }

    /// Deterministic points: `g` per axis, kept if inside the region.
    fn grid(&self, g: usize, weights: &[f64]) -> Vec<Vec<f64>> {
        let d = self.dim();
        let (lo, hi): (Vec<f64>, Vec<f64>) = match self {
            Region::Ball { center, radius } => (
                center.iter().zip(weights).map(|(c, w)| c - radius / w.sqrt()).collect(),
                center.iter().zip(weights).map(|(c, w)| c + radius / w.sqrt()).collect(),
            ),
            Region::Box { lo, hi } => (lo.clone(), hi.clone()),
        };
        let total = g.pow(d as u32);
        let mut out = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut p = vec![0.0; d];
            for i in 0..d {
                let t = (idx % g) as f64 / (g - 1).max(1) as f64;
                idx /= g;
                p[i] = lo[i] + t * (hi[i] - lo[i]);
            }
            if self.contains(&p, weights) {
                out.push(p);
            }
        }
        out
    }
}

/// Uniform point in the Euclidean unit ball of ℝ^d.
pub fn uniform_in_unit_ball<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    use rand_distr::StandardNormal;
    let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = rng.random::<f64>().powf(1.0 / d as f64);
    g.iter().map(|v| r * v / norm).collect()
}

pub fn weighted_inner(u: &[f64], v: &[f64], w: &[f64]) -> f64 {
    u.iter().zip(v).zip(w).map(|((a, b), c)| c * a * b).sum()
}

pub fn weighted_dist(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(w)
        .map(|((a, b), c)| c * (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftConditionReport {
    pub condition: DriftCondition,
    pub weights: Vec<f64>,
    pub region: Region,
    pub n_pairs: usize,
    /// Largest value of `⟨Δb, Δx⟩_w / |Δx|_w² - bound` over tested pairs.
    pub worst_margin: f64,
    pub worst_pair: (Vec<f64>, Vec<f64>),
    pub pass: bool,
}

/// Tolerance on the worst margin for a pass.
pub const DRIFT_MARGIN_TOL: f64 = 1e-12;

/// A one-sided growth rate backed by a passing report.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifiedGrowth {
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub region: Region,
}

impl DriftConditionReport {
    /// The verified one-sided Lipschitz constant, for Gronwall tubes.
    pub fn growth_rate(&self) -> Result<VerifiedGrowth> {
        match (&self.condition, self.pass) {
            (DriftCondition::OneSidedLipschitz { lambda }, true) => Ok(VerifiedGrowth {
                lambda: *lambda,
                weights: self.weights.clone(),
                region: self.region.clone(),
            }),
            (DriftCondition::OneSidedLipschitz { .. }, false) => Err(RdsError::Precondition(
                "one-sided Lipschitz condition failed; no verified growth rate".into(),
            )),
            _ => Err(RdsError::Precondition(format!(
                "a {} report does not provide a growth rate",
                self.condition.label()
            ))),
        }
    }
}

/// Sample pairs (plus a coarse deterministic grid) from `region` and report
/// the worst violation of `condition` in the `weights` metric.
///
/// Time-dependent drifts are evaluated at grid index 0. A pass is evidence on
/// the sampled region, not a proof.
pub fn verify_drift_condition(
    system: &SystemSpec,
    condition: &DriftCondition,
    weights: &[f64],
    region: &Region,
    n_pairs: usize,
    seed: u64,
) -> Result<DriftConditionReport> {
    system.ensure_ready()?;
    let d = system.dim();
    if weights.len() != d || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(RdsError::Parameter("metric weights must be d positive reals".into()));
    }
    if region.dim() != d {
        return Err(RdsError::Parameter("region dimension does not match system".into()));
    }
    if let DriftCondition::MonotoneAtPoint { z, .. } = condition {
        if z.len() != d {
            return Err(RdsError::Parameter("reference point has wrong dimension".into()));
        }
    }

    let mut bx = vec![0.0; d];
    let mut by = vec![0.0; d];
    let norm = |x: &[f64]| weighted_inner(x, x, weights).sqrt();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_pair = (vec![0.0; d], vec![0.0; d]);
    let mut tested = 0usize;

    let mut eval = |x: &[f64], y: &[f64]| {
        let dx: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let n2 = weighted_inner(&dx, &dx, weights);
        if n2 <= 0.0 {
            return;
        }
        system.drift_at(0, x, &mut bx);
        system.drift_at(0, y, &mut by);
        let db: Vec<f64> = bx.iter().zip(&by).map(|(a, b)| a - b).collect();
        let ratio = weighted_inner(&db, &dx, weights) / n2;
        let bound = match condition {
            DriftCondition::OneSidedLipschitz { lambda } => *lambda,
            DriftCondition::EventuallyMonotone { radius, eta, lambda } => {
                if norm(x) + norm(y) < *radius {
                    *eta
                } else {
                    -lambda
                }
            }
            DriftCondition::MonotoneAtPoint { lambda, .. } => -lambda,
        };
        tested += 1;
        let margin = ratio - bound;
        if margin > worst {
            worst = margin;
            worst_pair = (x.to_vec(), y.to_vec());
        }
    };

    let mut rng = stream_rng(seed, 0, Purpose::DriftSampling);
    match condition {
        DriftCondition::MonotoneAtPoint { z, .. } => {
            let g = ((4096f64).powf(1.0 / d as f64)).floor().max(2.0) as usize;
            for p in region.grid(g, weights) {
                eval(&p, z);
            }
            for _ in 0..n_pairs {
                let x = region.sample(weights, &mut rng);
                eval(&x, z);
            }
        }
        _ => {
            let g = ((4096f64).powf(1.0 / (2 * d) as f64)).floor().max(2.0) as usize;
            let pts = region.grid(g, weights);
            for x in &pts {
                for y in &pts {
                    eval(x, y);
                }
            }
            for _ in 0..n_pairs {
                let x = region.sample(weights, &mut rng);
                let y = region.sample(weights, &mut rng);
                eval(&x, &y);
            }
        }
    }

    Ok(DriftConditionReport {
        condition: condition.clone(),
        weights: weights.to_vec(),
        region: region.clone(),
        n_pairs: tested,
        worst_margin: worst,
        worst_pair,
        pass: tested > 0 && worst <= DRIFT_MARGIN_TOL,
    })
}
