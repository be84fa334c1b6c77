//! Cocycle-level diagnostics: two-point motion, synchronization in
//! probability, pullback diameters, certified ball images, recurrence
//! probabilities and three-valued synchronization verdicts.
//!
//! Every comparison inside one replica runs on one shared path.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::run_outcomes;
use crate::error::{RdsError, Result};
use crate::integrate::{integrate_points_with, Scheme};
use crate::noise::{sample_path, sample_two_sided, steps_for, ChannelKind, NoisePath, TimeGrid};
use crate::stats::EnsembleStat;
use crate::streams::{stream_rng, Purpose};
use crate::systems::{uniform_in_unit_ball, weighted_dist, DriftField, Region, SystemSpec, VerifiedGrowth};

/// Noise, discretization and parallelism shared by ensemble diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub kinds: Vec<ChannelKind>,
    pub dt: f64,
    pub scheme: Scheme,
    pub master_seed: u64,
    pub workers: usize,
}

impl EnsembleConfig {
    pub fn new(kinds: Vec<ChannelKind>, dt: f64, scheme: Scheme, master_seed: u64) -> Self {
        Self {
            kinds,
            dt,
            scheme,
            master_seed,
            workers: crate::ensemble::default_workers(),
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    /// The forward path of replica `i` over `[0, horizon]`.
    pub fn path(&self, horizon: f64, replica: u64) -> Result<NoisePath> {
        sample_path(&self.kinds, TimeGrid::horizon(horizon, self.dt)?, self.master_seed, replica)
    }
}

pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// `|φ_{t_k}(ω, x) - φ_{t_k}(ω, y)|` at every grid index of `path`.
pub fn two_point_run(system: &SystemSpec, x: &[f64], y: &[f64], path: &NoisePath, scheme: Scheme) -> Result<Vec<f64>> {
    let mut series = Vec::with_capacity(path.n_steps() + 1);
    integrate_points_with(system, &[x.to_vec(), y.to_vec()], path, scheme, |_, s| {
        series.push(euclidean(&s[0], &s[1]));
        true
    })?;
    Ok(series)
}

/// How replica initial conditions are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    Fixed { x: Vec<f64>, y: Vec<f64> },
    /// Both points uniform in the Euclidean ball, drawn per replica.
    UniformBall { center: Vec<f64>, radius: f64 },
}

impl PairSource {
    pub fn draw(&self, master_seed: u64, replica: u64) -> (Vec<f64>, Vec<f64>) {
        match self {
            PairSource::Fixed { x, y } => (x.clone(), y.clone()),
            PairSource::UniformBall { center, radius } => {
                let mut rng = stream_rng(master_seed, replica, Purpose::InitialPoints);
                let x = ball_point(center, *radius, &mut rng);
                let y = ball_point(center, *radius, &mut rng);
                (x, y)
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            PairSource::Fixed { x, .. } => x.len(),
            PairSource::UniformBall { center, .. } => center.len(),
        }
    }
}

fn ball_point<R: Rng>(center: &[f64], radius: f64, rng: &mut R) -> Vec<f64> {
    let u = uniform_in_unit_ball(center.len(), rng);
    center.iter().zip(u).map(|(c, v)| c + radius * v).collect()
}

/// Uniform points in a Euclidean ball for replica `replica`.
pub fn ball_points(center: &[f64], radius: f64, n: usize, master_seed: u64, replica: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(master_seed, replica, Purpose::InitialPoints);
    (0..n).map(|_| ball_point(center, radius, &mut rng)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncReport {
    /// Proportion of finished replicas with terminal distance `≤ η`.
    pub stat: EnsembleStat,
    pub blow_ups: usize,
    pub attempted: usize,
    /// Terminal distance per finished replica, in replica order.
    pub distances: Vec<f64>,
}

/// Estimate `P(|φ_t(ω,x) - φ_t(ω,y)| ≤ η)` over `n_reps` independent paths.
pub fn sync_probability(
    system: &SystemSpec,
    pairs: &PairSource,
    cfg: &EnsembleConfig,
    t: f64,
    eta: f64,
    n_reps: usize,
) -> Result<SyncReport> {
    if !(eta > 0.0) {
        return Err(RdsError::Parameter("eta must be positive".into()));
    }
    if n_reps < 30 {
        return Err(RdsError::Parameter(format!("need at least 30 replicas, got {n_reps}")));
    }
    if pairs.dim() != system.dim() {
        return Err(RdsError::Parameter("pair dimension does not match the system".into()));
    }
    steps_for(t, cfg.dt)?;
    let out = run_outcomes(n_reps, cfg.workers, |i| {
        let path = cfg.path(t, i)?;
        let (x, y) = pairs.draw(cfg.master_seed, i);
        let end = integrate_points_with(system, &[x, y], &path, cfg.scheme, |_, _| true)?;
        Ok(euclidean(&end[0], &end[1]))
    })?;
    let distances: Vec<f64> = out.values().copied().collect();
    let hits = distances.iter().filter(|d| **d <= eta).count();
    Ok(SyncReport {
        stat: EnsembleStat::proportion(format!("sync(t={t},eta={eta})"), hits, distances.len()),
        blow_ups: out.blow_ups,
        attempted: out.attempted,
        distances,
    })
}

/// Empirical log-contraction rate of pair distances, counted only over
/// steps that start with both points of a 1D pair inside `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapRate {
    /// `Σ log(d_{k+1}/d_k) / (steps · dt)`; NaN when no step qualified.
    pub rate: f64,
    pub steps: usize,
    pub blow_ups: usize,
    pub attempted: usize,
}

pub fn trap_contraction_rate(
    system: &SystemSpec,
    pairs: &PairSource,
    cfg: &EnsembleConfig,
    t: f64,
    lo: f64,
    hi: f64,
    n_reps: usize,
) -> Result<TrapRate> {
    if system.dim() != 1 || pairs.dim() != 1 {
        return Err(RdsError::Parameter("trap rates are defined for scalar systems".into()));
    }
    if !(lo < hi) {
        return Err(RdsError::Parameter("trap interval needs lo < hi".into()));
    }
    let out = run_outcomes(n_reps, cfg.workers, |i| {
        let path = cfg.path(t, i)?;
        let (x, y) = pairs.draw(cfg.master_seed, i);
        let mut logs = 0.0;
        let mut steps = 0usize;
        let mut prev: Option<(f64, bool)> = None;
        integrate_points_with(system, &[x, y], &path, cfg.scheme, |_, s| {
            let d = (s[0][0] - s[1][0]).abs();
            let inside = s.iter().all(|p| (lo..=hi).contains(&p[0]));
            if let Some((dp, was_inside)) = prev {
                // below 1e-12 the ratio is rounding noise
                if was_inside && dp > 1e-12 && d > 0.0 {
                    logs += (d / dp).ln();
                    steps += 1;
                }
            }
            prev = Some((d, inside));
            true
        })?;
        Ok((logs, steps))
    })?;
    let (logs, steps) = out.values().fold((0.0, 0usize), |(a, n), (l, s)| (a + l, n + s));
    let rate = if steps == 0 { f64::NAN } else { logs / (steps as f64 * cfg.dt) };
    Ok(TrapRate { rate, steps, blow_ups: out.blow_ups, attempted: out.attempted })
}

/// Largest pairwise Euclidean distance.
pub fn diameter(points: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.max(euclidean(&points[i], &points[j]));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackReport {
    pub t_list: Vec<f64>,
    /// `diameters[r][j]`: replica `r` (finished ones, in order), horizon `t_list[j]`.
    pub diameters: Vec<Vec<f64>>,
    pub replicas: Vec<usize>,
    pub blow_ups: usize,
}

impl PullbackReport {
    /// Proportion of replicas with diameter `≤ tol` at horizon index `j`.
    pub fn proportion_below(&self, j: usize, tol: f64) -> EnsembleStat {
        let hits = self.diameters.iter().filter(|d| d[j] <= tol).count();
        EnsembleStat::proportion(format!("pullback_diam(t={})<= {tol}", self.t_list[j]), hits, self.diameters.len())
    }
}

/// For each replica, one two-sided path on `[-max t, 0]`; for each `t`,
/// evolve all `points` from time `-t` to 0 on that frozen past and record
/// the diameter of the images.
pub fn pullback_diameter(
    system: &SystemSpec,
    points: &[Vec<f64>],
    cfg: &EnsembleConfig,
    t_list: &[f64],
    n_reps: usize,
) -> Result<PullbackReport> {
    if points.is_empty() {
        return Err(RdsError::Parameter("need at least one point".into()));
    }
    if t_list.is_empty() || t_list.windows(2).any(|w| w[1] <= w[0]) || t_list[0] < 0.0 {
        return Err(RdsError::Parameter("t_list must be increasing and nonnegative".into()));
    }
    let steps: Vec<usize> = t_list.iter().map(|t| steps_for(*t, cfg.dt)).collect::<Result<_>>()?;
    let t_max = *t_list.last().unwrap();
    let out = run_outcomes(n_reps, cfg.workers, |i| {
        let path = sample_two_sided(&cfg.kinds, t_max, 0.0, cfg.dt, cfg.master_seed, i)?;
        let pin = path.pin_index();
        steps
            .iter()
            .map(|&n| {
                let segment = path.shift_path(pin - n)?;
                let end = integrate_points_with(system, points, &segment, cfg.scheme, |_, _| true)?;
                Ok(diameter(&end))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(PullbackReport {
        t_list: t_list.to_vec(),
        replicas: out.ok.iter().map(|(i, _)| *i).collect(),
        diameters: out.ok.into_iter().map(|(_, d)| d).collect(),
        blow_ups: out.blow_ups,
    })
}

/// Default mesh budget for ball certification.
pub const DEFAULT_MESH_BUDGET: usize = 1_000_000;

/// How the ball `B_w(z, R)` is represented by finitely many points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshPolicy {
    /// Lattice of spacing `h` in weighted coordinates; every ball point is
    /// within `h√d/2` of a mesh point.
    Grid { h: f64 },
    /// The centre alone; covering radius `R`.
    CenterOnly,
    /// 1D order-preserving maps: the two endpoints bound every image.
    MonotoneEndpoints,
}

/// How mesh-point errors are propagated to the rest of the ball.
#[derive(Debug, Clone, PartialEq)]
pub enum GrowthBound {
    /// Gronwall tube `e^{λt}` from a verified one-sided Lipschitz constant.
    Verified(VerifiedGrowth),
    /// Per-step tube factor along each mesh trajectory for drifts whose
    /// quadratic part is skew in the metric (Lorenz with `w_y = w_z`,
    /// linear), Euler-Maruyama only:
    /// `g² = 1 + 2dt·μ_w(J(v)) + dt²·F²`, `F` bounding `‖J_w‖_F` on the tube.
    Anchored,
    /// No tube (only valid with [`MeshPolicy::MonotoneEndpoints`]).
    None,
}

impl GrowthBound {
    fn label(&self) -> String {
        match self {
            GrowthBound::Verified(v) => format!("verified(lambda={})", v.lambda),
            GrowthBound::Anchored => "anchored".into(),
            GrowthBound::None => "none".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallImageCertificate {
    pub center: Vec<f64>,
    pub radius: f64,
    pub target_center: Vec<f64>,
    pub target_radius: f64,
    pub t: f64,
    pub growth: String,
    /// Effective exponential rate `ln(G)/t` of the worst tube.
    pub growth_rate: f64,
    pub weights: Vec<f64>,
    pub mesh_spacing: Option<f64>,
    pub n_mesh: usize,
    pub monotone_shortcut: bool,
    /// Largest weighted distance from a mesh image to the target centre.
    pub worst_image_distance: f64,
    /// Largest tube radius `cover·G_i(t)`.
    pub tube_radius: f64,
    /// `target_radius - max_i(dist_i + tube_i)`.
    pub slack: f64,
    pub certified: bool,
    pub note: Option<String>,
}

struct Mesh {
    points: Vec<Vec<f64>>,
    cover: f64,
    spacing: Option<f64>,
    monotone: bool,
}

fn build_mesh(z: &[f64], r: f64, weights: &[f64], policy: MeshPolicy, budget: usize) -> Result<Mesh> {
    let d = z.len();
    match policy {
        MeshPolicy::CenterOnly => Ok(Mesh { points: vec![z.to_vec()], cover: r, spacing: None, monotone: false }),
        MeshPolicy::MonotoneEndpoints => {
            if d != 1 {
                return Err(RdsError::Precondition("endpoint shortcut needs a scalar system".into()));
            }
            let half = r / weights[0].sqrt();
            Ok(Mesh {
                points: vec![vec![z[0] - half], vec![z[0] + half]],
                cover: 0.0,
                spacing: None,
                monotone: true,
            })
        }
        MeshPolicy::Grid { h } => {
            if !(h > 0.0 && h.is_finite()) {
                return Err(RdsError::Parameter("mesh spacing must be positive".into()));
            }
            let cover = h * (d as f64).sqrt() / 2.0;
            let reach = r + cover;
            let m = (reach / h).floor() as i64;
            let side = (2 * m + 1) as f64;
            let boxed = side.powi(d as i32);
            // The ball fills at least a 1/d! -ish fraction of its box; refuse
            // early when even that exceeds the budget.
            if boxed > 64.0 * budget as f64 || boxed > 1e12 {
                return Err(RdsError::Budget { points: boxed as usize, budget });
            }
            let mut points = Vec::new();
            let mut idx = vec![-m; d];
            loop {
                let u: Vec<f64> = idx.iter().map(|i| *i as f64 * h).collect();
                if u.iter().map(|v| v * v).sum::<f64>().sqrt() <= reach {
                    if points.len() >= budget {
                        return Err(RdsError::Budget { points: points.len() + 1, budget });
                    }
                    points.push(u.iter().zip(z).zip(weights).map(|((ui, zi), w)| zi + ui / w.sqrt()).collect());
                }
                let mut a = 0;
                loop {
                    if a == d {
                        return Ok(Mesh { points, cover, spacing: Some(h), monotone: false });
                    }
                    idx[a] += 1;
                    if idx[a] > m {
                        idx[a] = -m;
                        a += 1;
                    } else {
                        break;
                    }
                }
            }
        }
    }
}

/// `λ_max` of the symmetric part of `W^{1/2} J W^{-1/2}`.
fn weighted_log_norm(j: &[f64], sw: &[f64]) -> f64 {
    let d = sw.len();
    if d == 1 {
        return j[0];
    }
    let m = DMatrix::from_fn(d, d, |a, b| {
        0.5 * (j[a * d + b] * sw[a] / sw[b] + j[b * d + a] * sw[b] / sw[a])
    });
    SymmetricEigen::new(m).eigenvalues.max()
}

/// Whether `b'` is concave on ℝ, so its minimum over an interval sits at an
/// endpoint.
fn scalar_derivative_is_concave(system: &SystemSpec) -> bool {
    match system.field() {
        DriftField::Cubic | DriftField::Geometric | DriftField::Linear { .. } => true,
        DriftField::Gradient1d { c } => c[3] >= 0.0,
        _ => false,
    }
}

/// Tracks tube radii for every mesh point along a run.
struct TubeTracker<'a> {
    system: &'a SystemSpec,
    growth: &'a GrowthBound,
    weights: &'a [f64],
    sqrt_w: Vec<f64>,
    dt: f64,
    t0: f64,
    base: usize,
    cover: f64,
    /// Current tube radius per mesh point.
    radius: Vec<f64>,
    monotone: bool,
    sensitivity: Option<Vec<f64>>,
    jac: Vec<f64>,
    failure: Option<String>,
}

impl<'a> TubeTracker<'a> {
    fn new(
        system: &'a SystemSpec,
        growth: &'a GrowthBound,
        weights: &'a [f64],
        mesh: &Mesh,
        path: &NoisePath,
        scheme: Scheme,
    ) -> Result<Self> {
        let d = system.dim();
        match growth {
            GrowthBound::Verified(v) => {
                if v.weights.len() != d || v.weights.iter().zip(weights).any(|(a, b)| (a - b).abs() > 1e-15 * b.abs()) {
                    return Err(RdsError::Precondition("growth rate was verified in a different metric".into()));
                }
            }
            GrowthBound::Anchored => {
                if scheme != Scheme::EulerMaruyama || system.is_multiplicative() {
                    return Err(RdsError::Precondition("anchored tubes need additive noise and euler_maruyama".into()));
                }
                if system.jacobian_sensitivity().is_none() || !system.quadratic_part_is_skew(weights) {
                    return Err(RdsError::Precondition(format!(
                        "anchored tubes need a skew quadratic drift in this metric; {} does not qualify",
                        system.name()
                    )));
                }
            }
            GrowthBound::None => {
                if !mesh.monotone {
                    return Err(RdsError::Precondition("a tube-free certificate needs the monotone endpoint mesh".into()));
                }
            }
        }
        if mesh.monotone && !scalar_derivative_is_concave(system) {
            return Err(RdsError::Precondition(format!(
                "cannot verify order preservation for {}",
                system.name()
            )));
        }
        if mesh.monotone && scheme == Scheme::LorenzSplitting {
            return Err(RdsError::Precondition("endpoint shortcut needs a scalar scheme".into()));
        }
        Ok(Self {
            system,
            growth,
            weights,
            sqrt_w: weights.iter().map(|w| w.sqrt()).collect(),
            dt: path.grid().dt,
            t0: path.grid().t_start,
            base: path.base_offset(),
            cover: mesh.cover,
            radius: vec![mesh.cover; mesh.points.len()],
            monotone: mesh.monotone,
            sensitivity: system.jacobian_sensitivity(),
            jac: vec![0.0; d * d],
            failure: None,
        })
    }

    /// Called with the states at grid index `k` and the increment about to
    /// be applied; updates radii to index `k + 1`.
    fn advance(&mut self, k: usize, states: &[Vec<f64>], inc: &[f64]) {
        if self.failure.is_some() {
            return;
        }
        let dt = self.dt;
        if self.monotone {
            let (lo, hi) = (states[0][0], states[1][0]);
            if lo > hi {
                self.failure = Some(format!("endpoint order lost at step {k}"));
                return;
            }
            let slope = if self.system.is_multiplicative() {
                1.0 + self.system.coupling()[0] * inc[0]
            } else {
                let mut lo_j = [0.0];
                let mut hi_j = [0.0];
                self.system.jacobian_at(self.base + k, &[lo], &mut lo_j);
                self.system.jacobian_at(self.base + k, &[hi], &mut hi_j);
                1.0 + dt * lo_j[0].min(hi_j[0]).min(0.0)
            };
            if slope <= 0.0 {
                self.failure = Some(format!("step map not increasing at step {k}"));
            }
            return;
        }
        match self.growth {
            GrowthBound::Verified(v) => {
                let t = (k + 1) as f64 * dt;
                let r = self.cover * (v.lambda * t).exp();
                for (i, x) in states.iter().enumerate() {
                    self.radius[i] = r;
                    if v.region.depth(x, self.weights) < r.max(self.cover * (v.lambda * k as f64 * dt).exp()) {
                        self.failure = Some(format!("tube around mesh point {i} leaves the verified region at t = {}", self.t0 + t));
                        return;
                    }
                }
            }
            GrowthBound::Anchored => {
                let d = self.system.dim();
                let sens = self.sensitivity.as_ref().expect("sensitivity");
                for (i, v) in states.iter().enumerate() {
                    let r = self.radius[i];
                    if !r.is_finite() {
                        continue;
                    }
                    self.system.jacobian_at(self.base + k, v, &mut self.jac);
                    let mu = weighted_log_norm(&self.jac, &self.sqrt_w);
                    let mut f2 = 0.0;
                    for a in 0..d {
                        for b in 0..d {
                            let mut bound = self.jac[a * d + b].abs();
                            for l in 0..d {
                                bound += sens[(a * d + b) * d + l] * 0.5 * r / self.sqrt_w[l];
                            }
                            let e = bound * self.sqrt_w[a] / self.sqrt_w[b];
                            f2 += e * e;
                        }
                    }
                    let g2 = 1.0 + 2.0 * dt * mu + dt * dt * f2;
                    // tiny relative inflation covers rounding in the bound
                    let next = r * g2.max(0.0).sqrt() * (1.0 + 1e-12);
                    self.radius[i] = if g2.is_nan() || next.is_nan() { f64::INFINITY } else { next };
                }
            }
            GrowthBound::None => {}
        }
    }
}

fn evaluate(
    tracker: &TubeTracker,
    states: &[Vec<f64>],
    target_center: &[f64],
    weights: &[f64],
) -> (f64, f64, f64) {
    let mut worst = 0.0f64;
    let mut tube = 0.0f64;
    let mut combined = 0.0f64;
    for (i, x) in states.iter().enumerate() {
        let dist = weighted_dist(x, target_center, weights);
        let r = if tracker.monotone { 0.0 } else { tracker.radius[i] };
        worst = worst.max(dist);
        tube = tube.max(r);
        combined = combined.max(dist + r);
    }
    (worst, tube, combined)
}

/// Specification of one ball-image question.
#[derive(Debug, Clone, PartialEq)]
pub struct BallQuery {
    pub center: Vec<f64>,
    pub radius: f64,
    pub target_center: Vec<f64>,
    pub target_radius: f64,
    pub weights: Vec<f64>,
    pub mesh: MeshPolicy,
    pub budget: usize,
}

impl BallQuery {
    /// `φ_t(B_w(z, R)) ⊂ B_w(z, R/2)`.
    pub fn recurrence(z: &[f64], radius: f64, weights: &[f64], mesh: MeshPolicy) -> Self {
        Self {
            center: z.to_vec(),
            radius,
            target_center: z.to_vec(),
            target_radius: radius / 2.0,
            weights: weights.to_vec(),
            mesh,
            budget: DEFAULT_MESH_BUDGET,
        }
    }

    fn validate(&self, system: &SystemSpec) -> Result<()> {
        let d = system.dim();
        if self.center.len() != d || self.target_center.len() != d || self.weights.len() != d {
            return Err(RdsError::Parameter("ball centre, target and weights need the system dimension".into()));
        }
        if !(self.radius > 0.0) || !(self.target_radius > 0.0) {
            return Err(RdsError::Parameter("radii must be positive".into()));
        }
        if self.weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(RdsError::Parameter("weights must be positive".into()));
        }
        Ok(())
    }
}

/// Certificates at each grid index in `check_steps` (ascending) from one
/// integration of the mesh along `path`.
pub fn certify_ball_images(
    system: &SystemSpec,
    query: &BallQuery,
    path: &NoisePath,
    scheme: Scheme,
    growth: &GrowthBound,
    check_steps: &[usize],
) -> Result<Vec<BallImageCertificate>> {
    query.validate(system)?;
    if check_steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(RdsError::Parameter("check steps must be ascending".into()));
    }
    let last = check_steps.last().copied().unwrap_or(0);
    if last > path.n_steps() {
        return Err(RdsError::Index { index: last, max: path.n_steps() });
    }
    let mesh = build_mesh(&query.center, query.radius, &query.weights, query.mesh, query.budget)?;
    let mut tracker = TubeTracker::new(system, growth, &query.weights, &mesh, path, scheme)?;
    let n_mesh = mesh.points.len();
    let dt = path.grid().dt;
    let mut certs = Vec::with_capacity(check_steps.len());
    let mut next_check = 0;
    let run = path.truncate(last)?;
    integrate_points_with(system, &mesh.points, &run, scheme, |k, states| {
        while next_check < check_steps.len() && check_steps[next_check] == k {
            let (worst, tube, combined) = evaluate(&tracker, states, &query.target_center, &query.weights);
            let t = k as f64 * dt;
            let slack = query.target_radius - combined;
            let ok = tracker.failure.is_none() && slack >= 0.0;
            certs.push(BallImageCertificate {
                center: query.center.clone(),
                radius: query.radius,
                target_center: query.target_center.clone(),
                target_radius: query.target_radius,
                t,
                growth: growth.label(),
                growth_rate: if mesh.cover > 0.0 && t > 0.0 && tube > 0.0 { (tube / mesh.cover).ln() / t } else { 0.0 },
                weights: query.weights.clone(),
                mesh_spacing: mesh.spacing,
                n_mesh,
                monotone_shortcut: mesh.monotone,
                worst_image_distance: worst,
                tube_radius: tube,
                slack,
                certified: ok,
                note: tracker.failure.clone(),
            });
            next_check += 1;
        }
        if k < run.n_steps() {
            tracker.advance(k, states, run.increment(k));
        }
        true
    })?;
    Ok(certs)
}

/// Whether `φ_t(ω, B_w(z, R))` lies inside the target ball, backed by a
/// finite mesh plus a tube covering the points between mesh nodes.
pub fn certify_ball_image(
    system: &SystemSpec,
    query: &BallQuery,
    path: &NoisePath,
    t: f64,
    scheme: Scheme,
    growth: &GrowthBound,
) -> Result<BallImageCertificate> {
    let k = path.index_of(path.grid().t_start + t)?;
    Ok(certify_ball_images(system, query, path, scheme, growth, &[k])?.remove(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceReport {
    pub radius: f64,
    pub t_list: Vec<f64>,
    /// Certified proportion at each `t`.
    pub per_t: Vec<EnsembleStat>,
    /// Index into `t_list` with the largest Wilson lower bound.
    pub best: usize,
    pub blow_ups: usize,
    /// Certificate refusals caused by a failed side condition (order lost,
    /// tube leaving the verified region).
    pub refusals: usize,
}

impl RecurrenceReport {
    pub fn best_stat(&self) -> &EnsembleStat {
        &self.per_t[self.best]
    }
}

/// Proportion of replicas in which `φ_t(B_w(z,R)) ⊂ B_w(z, R/2)` is certified,
/// for every `t` in `t_list`, from one integration per replica.
pub fn recurrence_probability(
    system: &SystemSpec,
    query: &BallQuery,
    cfg: &EnsembleConfig,
    growth: &GrowthBound,
    t_list: &[f64],
    n_reps: usize,
) -> Result<RecurrenceReport> {
    query.validate(system)?;
    if t_list.is_empty() || t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RdsError::Parameter("t_list must be increasing".into()));
    }
    let steps: Vec<usize> = t_list.iter().map(|t| steps_for(*t, cfg.dt)).collect::<Result<_>>()?;
    let t_max = *t_list.last().unwrap();
    // surface configuration errors once, not per replica
    build_mesh(&query.center, query.radius, &query.weights, query.mesh, query.budget)?;
    let out = run_outcomes(n_reps, cfg.workers, |i| {
        let path = cfg.path(t_max, i)?;
        let certs = certify_ball_images(system, query, &path, cfg.scheme, growth, &steps)?;
        let refused = certs.iter().any(|c| c.note.is_some());
        Ok((certs.iter().map(|c| c.certified).collect::<Vec<bool>>(), refused))
    })?;
    let n = out.ok.len();
    let per_t: Vec<EnsembleStat> = (0..t_list.len())
        .map(|j| {
            let hits = out.values().filter(|(c, _)| c[j]).count();
            EnsembleStat::proportion(format!("recurrence(R={},t={})", query.radius, t_list[j]), hits, n)
        })
        .collect();
    let best = (0..per_t.len())
        .max_by(|&a, &b| per_t[a].ci_low.total_cmp(&per_t[b].ci_low).then(b.cmp(&a)))
        .unwrap();
    Ok(RecurrenceReport {
        radius: query.radius,
        t_list: t_list.to_vec(),
        per_t,
        best,
        blow_ups: out.blow_ups,
        refusals: out.values().filter(|(_, r)| *r).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    EvidenceForSynchronization,
    EvidenceAgainst,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::EvidenceForSynchronization => "evidence-for-synchronization",
            Verdict::EvidenceAgainst => "evidence-against",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Knobs for [`synchronization_verdict`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictConfig {
    pub eps: f64,
    pub eta: f64,
    pub diameter_tol: f64,
    pub r_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// Horizon for the diameter and pair tests.
    pub horizon: f64,
    pub n_reps: usize,
    /// Points sampled from `B(z, ε)` for the diameter test.
    pub n_points: usize,
    /// Radius of the ball pairs are drawn from (default `ε`).
    pub pair_radius: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub mesh: Option<MeshPolicy>,
    pub growth: Option<GrowthBound>,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        Self {
            eps: 1.0,
            eta: 1e-6,
            diameter_tol: 1e-4,
            r_grid: vec![0.25, 0.5, 1.0, 2.0, 5.0],
            t_grid: vec![1.0, 2.0, 5.0, 10.0, 20.0],
            horizon: 100.0,
            n_reps: 100,
            n_points: 20,
            pair_radius: None,
            weights: None,
            mesh: None,
            growth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerdictReport {
    pub verdict: Verdict,
    /// Proportion of replicas with `diam φ_T(B(z,ε)) ≤ tol`.
    pub stability: EnsembleStat,
    /// Best recurrence estimate over the scanned `(R, t)` grid.
    pub recurrence: EnsembleStat,
    pub recurrence_scan: Vec<RecurrenceReport>,
    pub sync: EnsembleStat,
    pub blow_ups: usize,
    pub notes: Vec<String>,
}

/// Pick a mesh and tube for recurrence scans when none is configured.
pub fn auto_recurrence_method(system: &SystemSpec, scheme: Scheme, weights: &[f64]) -> Option<(MeshPolicy, GrowthBound)> {
    if system.dim() == 1 && scalar_derivative_is_concave(system) {
        return Some((MeshPolicy::MonotoneEndpoints, GrowthBound::None));
    }
    if scheme == Scheme::EulerMaruyama
        && !system.is_multiplicative()
        && system.jacobian_sensitivity().is_some()
        && system.quadratic_part_is_skew(weights)
    {
        return Some((MeshPolicy::CenterOnly, GrowthBound::Anchored));
    }
    None
}

/// Combine diameter decay on `B(z, ε)`, recurrence at `z` and pair
/// synchronization into a three-valued verdict.
///
/// For: stability and best recurrence both have positive Wilson lower
/// bounds and the pair proportion is at least 0.95 with lower bound at least
/// 0.9. Against: the pair proportion's upper bound is below 0.9.
pub fn synchronization_verdict(
    system: &SystemSpec,
    cfg: &EnsembleConfig,
    z: &[f64],
    vc: &VerdictConfig,
) -> Result<VerdictReport> {
    let d = system.dim();
    if z.len() != d {
        return Err(RdsError::Parameter("z has the wrong dimension".into()));
    }
    let mut notes = Vec::new();
    steps_for(vc.horizon, cfg.dt)?;

    // (a) diameter decay
    let stab = run_outcomes(vc.n_reps, cfg.workers, |i| {
        let mut pts = ball_points(z, vc.eps, vc.n_points, cfg.master_seed ^ 0x5151, i);
        pts.push(z.to_vec());
        let path = cfg.path(vc.horizon, i)?;
        let end = integrate_points_with(system, &pts, &path, cfg.scheme, |_, _| true)?;
        Ok(diameter(&end))
    })?;
    let stable_hits = stab.values().filter(|d| **d <= vc.diameter_tol).count();
    let stability = EnsembleStat::proportion(
        format!("stability(eps={},t={},tol={})", vc.eps, vc.horizon, vc.diameter_tol),
        stable_hits,
        stab.ok.len(),
    );

    // (b) recurrence scan
    let weights = vc.weights.clone().unwrap_or_else(|| vec![1.0; d]);
    let method = match (&vc.mesh, &vc.growth) {
        (Some(m), Some(g)) => Some((*m, g.clone())),
        _ => auto_recurrence_method(system, cfg.scheme, &weights),
    };
    let mut scan = Vec::new();
    let mut blow_ups = stab.blow_ups;
    match method {
        Some((mesh, growth)) => {
            for &r in &vc.r_grid {
                let query = BallQuery::recurrence(z, r, &weights, mesh);
                let rep = recurrence_probability(system, &query, cfg, &growth, &vc.t_grid, vc.n_reps)?;
                blow_ups += rep.blow_ups;
                scan.push(rep);
            }
        }
        None => notes.push("no sound recurrence certificate available for this system; recurrence reported as 0".into()),
    }
    let recurrence = scan
        .iter()
        .map(|r| r.best_stat().clone())
        .max_by(|a, b| a.ci_low.total_cmp(&b.ci_low))
        .unwrap_or_else(|| EnsembleStat::proportion("recurrence(unavailable)", 0, 1));

    // (c) pair synchronization
    let pairs = PairSource::UniformBall { center: z.to_vec(), radius: vc.pair_radius.unwrap_or(vc.eps) };
    let sync = sync_probability(system, &pairs, cfg, vc.horizon, vc.eta, vc.n_reps.max(30))?;
    blow_ups += sync.blow_ups;

    let verdict = if stability.ci_low > 0.0 && recurrence.ci_low > 0.0 && sync.stat.mean >= 0.95 && sync.stat.ci_low >= 0.9 {
        Verdict::EvidenceForSynchronization
    } else if sync.stat.ci_high < 0.9 {
        Verdict::EvidenceAgainst
    } else {
        Verdict::Inconclusive
    };
    Ok(VerdictReport {
        verdict,
        stability,
        recurrence,
        recurrence_scan: scan,
        sync: sync.stat,
        blow_ups,
        notes,
    })
}

/// Region helper for verified tubes: a weighted ball around `z`.
pub fn ball_region(z: &[f64], radius: f64) -> Region {
    Region::Ball { center: z.to_vec(), radius }
}
