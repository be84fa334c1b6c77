//! Driving-noise paths on uniform grids.
//!
//! A [`NoisePath`] is one realization ω of the driving noise. It stores the
//! grid increments (shared, immutable) and exposes the path values pinned to
//! zero at the path origin. Shifting a path re-pins it at a later grid index;
//! because shifted paths reference the very same increments, every
//! integration over a shifted path reproduces the corresponding segment of the
//! original integration bit for bit.
//!
//! Stable laws use the characteristic function `exp(-t |ξ|^α)`: at α = 2 the
//! process is a Brownian motion with covariance `2 t I`.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{RdsError, Result};
use crate::streams::{stream_rng, Purpose};

/// Largest `rate * dt` accepted for Poisson channels.
pub const MAX_POISSON_RATE_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(RdsError::Grid(format!("dt must be positive, got {dt}")));
        }
        if !t_start.is_finite() {
            return Err(RdsError::Grid("t_start must be finite".into()));
        }
        Ok(Self { t_start, dt, n_steps })
    }

    /// Grid on `[0, horizon]`; `horizon` must be a multiple of `dt`.
    pub fn horizon(horizon: f64, dt: f64) -> Result<Self> {
        let n = steps_for(horizon, dt)?;
        Self::new(0.0, dt, n)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_steps)
    }

    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn duration(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }
}

/// Number of steps of size `dt` in `horizon`, or a grid error when the
/// horizon is not a multiple of `dt` (relative tolerance 1e-9).
pub fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(RdsError::Grid(format!("invalid horizon {horizon} / dt {dt}")));
    }
    let ratio = horizon / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * n.max(1.0) {
        return Err(RdsError::Grid(format!(
            "horizon {horizon} is not a multiple of dt {dt}"
        )));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    Brownian,
    /// Symmetric α-stable, `0 < α ≤ 2`. Adjacent stable channels with the same
    /// α form one rotationally invariant block.
    Stable { alpha: f64 },
    Poisson { rate: f64, jump: f64 },
    /// Positive α-stable subordinator with Laplace exponent `s^α`, `0 < α < 1`.
    Subordinator { alpha: f64 },
    Zero,
}

impl ChannelKind {
    pub fn poisson(rate: f64) -> Self {
        ChannelKind::Poisson { rate, jump: 1.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChannelKind::Brownian => "brownian",
            ChannelKind::Stable { .. } => "stable",
            ChannelKind::Poisson { .. } => "poisson",
            ChannelKind::Subordinator { .. } => "subordinator",
            ChannelKind::Zero => "zero",
        }
    }

    pub fn is_monotone(&self) -> bool {
        match self {
            ChannelKind::Poisson { jump, .. } => *jump >= 0.0,
            ChannelKind::Subordinator { .. } => true,
            _ => false,
        }
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        match *self {
            ChannelKind::Stable { alpha } if !(alpha > 0.0 && alpha <= 2.0) => Err(
                RdsError::Parameter(format!("stable alpha must lie in (0, 2], got {alpha}")),
            ),
            ChannelKind::Subordinator { alpha } if !(alpha > 0.0 && alpha < 1.0) => Err(
                RdsError::Parameter(format!("subordinator alpha must lie in (0, 1), got {alpha}")),
            ),
            ChannelKind::Poisson { rate, jump } => {
                if !(rate > 0.0 && rate.is_finite()) || !jump.is_finite() {
                    return Err(RdsError::Parameter(format!(
                        "poisson needs rate > 0 and finite jump, got rate {rate}, jump {jump}"
                    )));
                }
                if rate * dt > MAX_POISSON_RATE_DT {
                    return Err(RdsError::Grid(format!(
                        "poisson rate*dt = {} exceeds {MAX_POISSON_RATE_DT}",
                        rate * dt
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelKind::Stable { alpha } => write!(f, "stable({alpha})"),
            ChannelKind::Poisson { rate, jump } => write!(f, "poisson({rate},{jump})"),
            ChannelKind::Subordinator { alpha } => write!(f, "subordinator({alpha})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Standard symmetric α-stable variate, `E exp(iξX) = exp(-|ξ|^α)`
/// (Chambers–Mallows–Stuck).
pub fn symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = Exp1.sample(rng);
    if (alpha - 1.0).abs() < 1e-12 {
        return v.tan();
    }
    let a = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
    a * b
}

/// Positive α-stable variate with `E exp(-sS) = exp(-s^α)`, `0 < α ≤ 1`
/// (Kanter's representation).
pub fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    // U uniform on the open interval (0, π)
    let u = PI * (f64::EPSILON + (1.0 - 2.0 * f64::EPSILON) * rng.random::<f64>());
    let e: f64 = Exp1.sample(rng);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / e).powf((1.0 - alpha) / alpha);
    a * b
}

/// Contiguous channels sampled together.
#[derive(Debug, Clone, Copy)]
enum Block {
    Single(usize, ChannelKind),
    IsotropicStable { start: usize, len: usize, alpha: f64 },
}

fn blocks(kinds: &[ChannelKind]) -> Vec<Block> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < kinds.len() {
        if let ChannelKind::Stable { alpha } = kinds[i] {
            let mut j = i + 1;
            while j < kinds.len() && kinds[j] == kinds[i] {
                j += 1;
            }
            if j - i > 1 {
                out.push(Block::IsotropicStable { start: i, len: j - i, alpha });
                i = j;
                continue;
            }
        }
        out.push(Block::Single(i, kinds[i]));
        i += 1;
    }
    out
}

fn sample_row(blocks: &[Block], dt: f64, rng: &mut ChaCha8Rng, row: &mut [f64]) {
    for block in blocks {
        match *block {
            Block::Single(ch, kind) => {
                row[ch] = match kind {
                    ChannelKind::Brownian => dt.sqrt() * rng.sample::<f64, _>(StandardNormal),
                    ChannelKind::Stable { alpha } => dt.powf(1.0 / alpha) * symmetric_stable(alpha, rng),
                    ChannelKind::Poisson { rate, jump } => {
                        let count: f64 = Poisson::new(rate * dt)
                            .expect("validated poisson rate")
                            .sample(rng);
                        jump * count
                    }
                    ChannelKind::Subordinator { alpha } => {
                        dt.powf(1.0 / alpha) * positive_stable(alpha, rng)
                    }
                    ChannelKind::Zero => 0.0,
                }
            }
            Block::IsotropicStable { start, len, alpha } => {
                // Subordinated Brownian motion: sqrt(A) G with G ~ N(0, 2I)
                // and A positive (α/2)-stable over time dt.
                let a = dt.powf(2.0 / alpha) * positive_stable(alpha / 2.0, rng);
                let scale = (2.0 * a).sqrt();
                for v in &mut row[start..start + len] {
                    *v = scale * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
}

/// One realization of the driving noise.
#[derive(Clone)]
pub struct NoisePath {
    grid: TimeGrid,
    kinds: Arc<[ChannelKind]>,
    increments: Arc<[f64]>,
    offset: usize,
    pin: usize,
    master_seed: u64,
    stream_id: u64,
}

impl fmt::Debug for NoisePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoisePath")
            .field("grid", &self.grid)
            .field("kinds", &self.kinds)
            .field("offset", &self.offset)
            .field("pin", &self.pin)
            .field("master_seed", &self.master_seed)
            .field("stream_id", &self.stream_id)
            .finish()
    }
}

/// Draw a path on `grid`. Bit-identical for identical arguments.
pub fn sample_path(kinds: &[ChannelKind], grid: TimeGrid, master_seed: u64, stream_id: u64) -> Result<NoisePath> {
    sample_two_sided_steps(kinds, 0, grid.n_steps, grid.dt, grid.t_start, master_seed, stream_id)
}

/// Draw a path on `[-t_past, t_future]` pinned to zero at time 0.
///
/// Past increments are drawn from their own stream walking backwards from
/// time 0, so a longer past horizon extends a shorter one without changing
/// any shared increment, and `t_past = 0` reproduces [`sample_path`].
pub fn sample_two_sided(
    kinds: &[ChannelKind],
    t_past: f64,
    t_future: f64,
    dt: f64,
    master_seed: u64,
    stream_id: u64,
) -> Result<NoisePath> {
    let n_past = steps_for(t_past, dt)?;
    let n_future = steps_for(t_future, dt)?;
    sample_two_sided_steps(kinds, n_past, n_future, dt, -(n_past as f64) * dt, master_seed, stream_id)
}

fn sample_two_sided_steps(
    kinds: &[ChannelKind],
    n_past: usize,
    n_future: usize,
    dt: f64,
    t_start: f64,
    master_seed: u64,
    stream_id: u64,
) -> Result<NoisePath> {
    if kinds.is_empty() {
        return Err(RdsError::Parameter("a path needs at least one channel".into()));
    }
    let grid = TimeGrid::new(t_start, dt, n_past + n_future)?;
    for kind in kinds {
        kind.validate(dt)?;
    }
    let m = kinds.len();
    let blocks = blocks(kinds);
    let mut increments = vec![0.0; (n_past + n_future) * m];

    let mut future = stream_rng(master_seed, stream_id, Purpose::FutureNoise);
    for k in 0..n_future {
        let row = n_past + k;
        sample_row(&blocks, dt, &mut future, &mut increments[row * m..(row + 1) * m]);
    }
    if n_past > 0 {
        let mut past = stream_rng(master_seed, stream_id, Purpose::PastNoise);
        for k in 0..n_past {
            let row = n_past - 1 - k;
            sample_row(&blocks, dt, &mut past, &mut increments[row * m..(row + 1) * m]);
        }
    }

    Ok(NoisePath {
        grid,
        kinds: kinds.into(),
        increments: increments.into(),
        offset: 0,
        pin: n_past,
        master_seed,
        stream_id,
    })
}

impl NoisePath {
    /// A path with explicitly supplied increments (`n_steps × channels`,
    /// row-major), pinned at its origin.
    pub fn from_increments(kinds: &[ChannelKind], grid: TimeGrid, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.n_steps * kinds.len() {
            return Err(RdsError::Grid(format!(
                "expected {} increments, got {}",
                grid.n_steps * kinds.len(),
                increments.len()
            )));
        }
        Ok(Self {
            grid,
            kinds: kinds.into(),
            increments: increments.into(),
            offset: 0,
            pin: 0,
            master_seed: 0,
            stream_id: 0,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    pub fn channels(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[ChannelKind] {
        &self.kinds
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Index of the first increment of this view in the underlying storage.
    pub fn base_offset(&self) -> usize {
        self.offset
    }

    /// Grid index at which the path value is zero.
    pub fn pin_index(&self) -> usize {
        self.pin
    }

    /// Increment `ω(t_{k+1}) - ω(t_k)` across all channels.
    #[inline]
    pub fn increment(&self, k: usize) -> &[f64] {
        let m = self.kinds.len();
        let row = self.offset + k;
        &self.increments[row * m..(row + 1) * m]
    }

    /// Path value at grid index `k`, summed outward from the pin.
    pub fn value(&self, k: usize, channel: usize) -> f64 {
        assert!(k <= self.grid.n_steps && channel < self.kinds.len());
        let mut acc = 0.0;
        if k >= self.pin {
            for i in self.pin..k {
                acc += self.increment(i)[channel];
            }
        } else {
            for i in (k..self.pin).rev() {
                acc -= self.increment(i)[channel];
            }
        }
        acc
    }

    /// All values, `(n_steps + 1) × channels` row-major.
    pub fn values(&self) -> Vec<f64> {
        let m = self.kinds.len();
        let n = self.grid.n_steps;
        let mut out = vec![0.0; (n + 1) * m];
        for ch in 0..m {
            let mut acc = 0.0;
            for k in self.pin..n {
                acc += self.increment(k)[ch];
                out[(k + 1) * m + ch] = acc;
            }
            let mut acc = 0.0;
            for k in (0..self.pin).rev() {
                acc -= self.increment(k)[ch];
                out[k * m + ch] = acc;
            }
        }
        out
    }

    /// The shift θ: the path restarted at grid index `k` and re-pinned there.
    pub fn shift_path(&self, k: usize) -> Result<NoisePath> {
        if k > self.grid.n_steps {
            return Err(RdsError::Index {
                index: k,
                max: self.grid.n_steps,
            });
        }
        Ok(NoisePath {
            grid: TimeGrid {
                t_start: self.grid.time(k),
                dt: self.grid.dt,
                n_steps: self.grid.n_steps - k,
            },
            offset: self.offset + k,
            pin: 0,
            ..self.clone()
        })
    }

    /// The first `n_steps` steps of this path; the pin is kept.
    pub fn truncate(&self, n_steps: usize) -> Result<NoisePath> {
        if n_steps > self.grid.n_steps {
            return Err(RdsError::Index {
                index: n_steps,
                max: self.grid.n_steps,
            });
        }
        Ok(NoisePath {
            grid: TimeGrid { n_steps, ..self.grid },
            pin: self.pin.min(n_steps),
            ..self.clone()
        })
    }

    /// The sub-range `[from, to]` of grid indices, keeping the original pin
    /// (values are unchanged when the pin lies inside the range).
    pub fn restrict(&self, from: usize, to: usize) -> Result<NoisePath> {
        if from > to || to > self.grid.n_steps {
            return Err(RdsError::Index {
                index: to.max(from),
                max: self.grid.n_steps,
            });
        }
        if self.pin < from || self.pin > to {
            return Err(RdsError::Grid(format!(
                "restriction [{from}, {to}] does not contain the pin at {}",
                self.pin
            )));
        }
        Ok(NoisePath {
            grid: TimeGrid {
                t_start: self.grid.time(from),
                dt: self.grid.dt,
                n_steps: to - from,
            },
            offset: self.offset + from,
            pin: self.pin - from,
            ..self.clone()
        })
    }

    /// Grid index of time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = steps_for(t - self.grid.t_start, self.grid.dt)?;
        if k > self.grid.n_steps {
            return Err(RdsError::Index {
                index: k,
                max: self.grid.n_steps,
            });
        }
        Ok(k)
    }

    /// Hash of the increments seen by this view. Two views with equal
    /// fingerprints drive integrations identically.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.grid.n_steps.hash(&mut h);
        self.grid.dt.to_bits().hash(&mut h);
        for k in 0..self.grid.n_steps {
            for v in self.increment(k) {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// CSV dump with header `t,ch0,ch1,...` at 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let m = self.channels();
        let header: Vec<String> = (0..m).map(|c| format!("ch{c}")).collect();
        writeln!(out, "t,{}", header.join(","))?;
        let values = self.values();
        for k in 0..=self.grid.n_steps {
            write!(out, "{}", fmt_f64(self.grid.time(k)))?;
            for v in &values[k * m..(k + 1) * m] {
                write!(out, ",{}", fmt_f64(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Full-precision decimal rendering (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuSource {
    SharedBrownianChannel(usize),
    StandaloneStationary,
}

/// Ornstein–Uhlenbeck functional `dO = -λ O dt + γ dW` on a path grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OUPath {
    pub grid: TimeGrid,
    pub lambda: f64,
    pub gamma: f64,
    pub values: Vec<f64>,
    pub source: OuSource,
}

impl OUPath {
    pub fn stationary_variance(&self) -> f64 {
        self.gamma * self.gamma / (2.0 * self.lambda)
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }
}

/// OU process driven by the increments of a Brownian `channel` of `path`:
/// `O(k+1) = e^{-λ dt} O(k) + γ ΔW(k)`, with `O(0)` drawn from the stationary
/// law `N(0, γ²/(2λ))` on a dedicated stream.
pub fn ou_from_path(path: &NoisePath, channel: usize, lambda: f64, gamma: f64) -> Result<OUPath> {
    if channel >= path.channels() {
        return Err(RdsError::Index {
            index: channel,
            max: path.channels().saturating_sub(1),
        });
    }
    if path.kinds()[channel] != ChannelKind::Brownian {
        return Err(RdsError::Kind {
            channel,
            expected: "brownian",
            found: path.kinds()[channel].to_string(),
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) || !gamma.is_finite() {
        return Err(RdsError::Parameter(format!(
            "OU needs lambda > 0 and finite gamma, got {lambda}, {gamma}"
        )));
    }
    let mut init = stream_rng(path.master_seed(), path.stream_id(), Purpose::OuInit);
    let z: f64 = init.sample(StandardNormal);
    let sd = (gamma * gamma / (2.0 * lambda)).sqrt();

    let n = path.n_steps();
    let decay = (-lambda * path.grid().dt).exp();
    let mut values = Vec::with_capacity(n + 1);
    let mut o = sd * z;
    values.push(o);
    for k in 0..n {
        o = decay * o + gamma * path.increment(k)[channel];
        values.push(o);
    }
    Ok(OUPath {
        grid: *path.grid(),
        lambda,
        gamma,
        values,
        source: OuSource::SharedBrownianChannel(channel),
    })
}

/// A stationary OU path with its own Brownian driver.
pub fn sample_ou_stationary(grid: TimeGrid, lambda: f64, gamma: f64, master_seed: u64, stream_id: u64) -> Result<OUPath> {
    let path = sample_path(&[ChannelKind::Brownian], grid, master_seed, stream_id)?;
    let mut ou = ou_from_path(&path, 0, lambda, gamma)?;
    ou.source = OuSource::StandaloneStationary;
    Ok(ou)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, quantile_sorted, sample_variance};

    fn increments(path: &NoisePath, ch: usize) -> Vec<f64> {
        (0..path.n_steps()).map(|k| path.increment(k)[ch]).collect()
    }

    #[test]
    fn brownian_increment_variance() {
        let grid = TimeGrid::new(0.0, 0.01, 10_000).unwrap();
        let p = sample_path(&[ChannelKind::Brownian], grid, 11, 0).unwrap();
        let v = sample_variance(&increments(&p, 0));
        assert!((0.0094..=0.0106).contains(&v), "variance {v}");
        assert_eq!(p.value(0, 0), 0.0);
    }

    #[test]
    fn brownian_scaling_over_multiple_steps() {
        let grid = TimeGrid::new(0.0, 0.01, 40_000).unwrap();
        let p = sample_path(&[ChannelKind::Brownian], grid, 3, 0).unwrap();
        let vals = p.values();
        for j in [2usize, 4] {
            let inc: Vec<f64> = (0..10_000).map(|i| vals[(i + 1) * j] - vals[i * j]).collect();
            let v = sample_variance(&inc);
            let target = j as f64 * 0.01;
            // stderr of a sample variance of n Gaussians is sqrt(2/n) * target
            let se = target * (2.0 / 10_000f64).sqrt();
            assert!((v - target).abs() < 4.0 * se, "j={j} v={v}");
        }
    }

    #[test]
    fn stable_alpha_two_is_gaussian_with_twice_the_variance() {
        let grid = TimeGrid::new(0.0, 0.01, 100_000).unwrap();
        let p = sample_path(&[ChannelKind::Stable { alpha: 2.0 }], grid, 5, 1).unwrap();
        let inc = increments(&p, 0);
        let v = sample_variance(&inc);
        let se = 0.02 * (2.0 / 100_000f64).sqrt();
        assert!((v - 0.02).abs() < 4.0 * se, "variance {v}");
        // kurtosis of a Gaussian is 3
        let m = mean(&inc);
        let k4 = inc.iter().map(|x| (x - m).powi(4)).sum::<f64>() / inc.len() as f64 / (v * v);
        assert!((k4 - 3.0).abs() < 0.1, "kurtosis {k4}");
    }

    #[test]
    fn isotropic_stable_block_alpha_two_matches_gaussian() {
        let grid = TimeGrid::new(0.0, 0.01, 50_000).unwrap();
        let kind = ChannelKind::Stable { alpha: 2.0 };
        let p = sample_path(&[kind, kind], grid, 8, 0).unwrap();
        for ch in 0..2 {
            let v = sample_variance(&increments(&p, ch));
            assert!((v - 0.02).abs() < 4.0 * 0.02 * (2.0 / 50_000f64).sqrt(), "ch {ch}: {v}");
        }
    }

    #[test]
    fn stable_tails_are_heavy() {
        let grid = TimeGrid::new(0.0, 0.01, 100_000).unwrap();
        let p = sample_path(&[ChannelKind::Stable { alpha: 1.5 }], grid, 21, 0).unwrap();
        let inc = increments(&p, 0);
        let mut abs: Vec<f64> = inc.iter().map(|x| x.abs()).collect();
        abs.sort_by(f64::total_cmp);
        // Gaussian fit through the interquartile range: |X| median = 0.6745 sd
        let sd_fit = quantile_sorted(&abs, 0.5) / 0.674_489_75;
        let gaussian_q999 = 3.290_526_73 * sd_fit;
        let q999 = quantile_sorted(&abs, 0.999);
        assert!(q999 >= 2.0 * gaussian_q999, "q999 {q999} vs gaussian {gaussian_q999}");
    }

    #[test]
    fn symmetric_stable_characteristic_function() {
        // E cos(ξX) = exp(-|ξ|^α) for the standard convention
        let mut rng = stream_rng(1, 0, Purpose::Auxiliary(1));
        for alpha in [0.7, 1.0, 1.5] {
            let n = 200_000;
            let xi = 0.8;
            let ecf = (0..n).map(|_| (xi * symmetric_stable(alpha, &mut rng)).cos()).sum::<f64>() / n as f64;
            let exact = (-xi.powf(alpha)).exp();
            assert!((ecf - exact).abs() < 0.01, "alpha {alpha}: {ecf} vs {exact}");
        }
    }

    #[test]
    fn positive_stable_laplace_transform() {
        let mut rng = stream_rng(2, 0, Purpose::Auxiliary(2));
        for alpha in [0.3, 0.5, 0.75] {
            let n = 200_000;
            let s = 1.3f64;
            let lt = (0..n).map(|_| (-s * positive_stable(alpha, &mut rng)).exp()).sum::<f64>() / n as f64;
            let exact = (-s.powf(alpha)).exp();
            assert!((lt - exact).abs() < 0.005, "alpha {alpha}: {lt} vs {exact}");
        }
    }

    #[test]
    fn poisson_and_subordinator_paths_are_monotone() {
        let grid = TimeGrid::horizon(10.0, 0.01).unwrap();
        let kinds = [ChannelKind::poisson(1.0), ChannelKind::Subordinator { alpha: 0.5 }];
        let mut terminal = Vec::new();
        for stream in 0..400 {
            let p = sample_path(&kinds, grid, 4, stream).unwrap();
            let vals = p.values();
            for k in 0..p.n_steps() {
                assert!(vals[(k + 1) * 2] >= vals[k * 2]);
                assert!(vals[(k + 1) * 2 + 1] >= vals[k * 2 + 1]);
                let jump = p.increment(k)[0];
                assert_eq!(jump, jump.round(), "poisson jumps are whole multiples of 1");
            }
            terminal.push(vals[p.n_steps() * 2]);
        }
        // N_10 ~ Poisson(10): mean 10, stderr sqrt(10/400)
        let m = mean(&terminal);
        assert!((m - 10.0).abs() < 4.0 * (10.0f64 / 400.0).sqrt(), "mean {m}");
    }

    #[test]
    fn zero_channel_is_identically_zero() {
        let grid = TimeGrid::horizon(1.0, 0.1).unwrap();
        let p = sample_path(&[ChannelKind::Zero, ChannelKind::Brownian], grid, 1, 1).unwrap();
        assert!((0..=10).all(|k| p.value(k, 0) == 0.0));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let grid = TimeGrid::horizon(1.0, 0.01).unwrap();
        for kind in [
            ChannelKind::Stable { alpha: 0.0 },
            ChannelKind::Stable { alpha: 2.5 },
            ChannelKind::Subordinator { alpha: 1.0 },
            ChannelKind::Poisson { rate: -1.0, jump: 1.0 },
        ] {
            assert!(matches!(sample_path(&[kind], grid, 0, 0), Err(RdsError::Parameter(_))), "{kind}");
        }
        assert!(matches!(
            sample_path(&[ChannelKind::poisson(20.0)], grid, 0, 0),
            Err(RdsError::Grid(_))
        ));
    }

    #[test]
    fn reproducible_and_stream_dependent() {
        let grid = TimeGrid::horizon(5.0, 0.01).unwrap();
        let kinds = [ChannelKind::Brownian, ChannelKind::Stable { alpha: 1.2 }];
        let a = sample_path(&kinds, grid, 42, 3).unwrap();
        let b = sample_path(&kinds, grid, 42, 3).unwrap();
        let c = sample_path(&kinds, grid, 42, 4).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let grid = TimeGrid::new(0.0, 1.0, 20_000).unwrap();
        let a = increments(&sample_path(&[ChannelKind::Brownian], grid, 9, 0).unwrap(), 0);
        let b = increments(&sample_path(&[ChannelKind::Brownian], grid, 9, 1).unwrap(), 0);
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / 20_000.0;
        assert!(corr.abs() < 4.0 / (20_000f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn shift_identity_pin_and_values() {
        let grid = TimeGrid::horizon(2.0, 0.01).unwrap();
        let p = sample_path(&[ChannelKind::Brownian], grid, 1, 0).unwrap();
        let s0 = p.shift_path(0).unwrap();
        assert_eq!(s0.values(), p.values());
        let s = p.shift_path(50).unwrap();
        assert_eq!(s.n_steps(), 150);
        assert_eq!(s.value(0, 0), 0.0);
        assert!((s.grid().t_start - 0.5).abs() < 1e-12);
        for j in [1usize, 7, 150] {
            let expect = p.value(50 + j, 0) - p.value(50, 0);
            assert!((s.value(j, 0) - expect).abs() < 1e-12);
        }
        assert!(matches!(p.shift_path(201), Err(RdsError::Index { .. })));
    }

    #[test]
    fn two_sided_pinning_and_nesting() {
        let kinds = [ChannelKind::Brownian];
        let long = sample_two_sided(&kinds, 10.0, 2.0, 0.01, 5, 2).unwrap();
        let short = sample_two_sided(&kinds, 5.0, 2.0, 0.01, 5, 2).unwrap();
        assert_eq!(long.pin_index(), 1000);
        assert_eq!(long.value(1000, 0), 0.0);
        assert!((long.grid().time(1000)).abs() < 1e-12);

        // [-5, 0] inside the long path equals the short path's past bitwise
        let sub = long.restrict(500, 1000).unwrap();
        let short_past = short.restrict(0, 500).unwrap();
        assert_eq!(sub.values(), short_past.values());

        // no past: identical to the one-sided sampler
        let none = sample_two_sided(&kinds, 0.0, 2.0, 0.01, 5, 2).unwrap();
        let one = sample_path(&kinds, TimeGrid::horizon(2.0, 0.01).unwrap(), 5, 2).unwrap();
        assert_eq!(none.values(), one.values());

        assert!(matches!(
            sample_two_sided(&kinds, 1.005, 2.0, 0.01, 5, 2),
            Err(RdsError::Grid(_))
        ));
    }

    #[test]
    fn ou_recursion_shares_the_driving_increments() {
        let grid = TimeGrid::horizon(1.0, 0.01).unwrap();
        let p = sample_path(&[ChannelKind::Brownian], grid, 3, 0).unwrap();
        let (lambda, gamma) = (2.0, 0.7);
        let ou = ou_from_path(&p, 0, lambda, gamma).unwrap();
        let ratio = (-lambda * 0.01f64).exp();
        for k in 0..100 {
            assert_eq!(ou.values[k + 1], ratio * ou.values[k] + gamma * p.increment(k)[0]);
        }
        assert_eq!(ou.source, OuSource::SharedBrownianChannel(0));
    }

    #[test]
    fn ou_zero_gamma_is_deterministic_decay() {
        let grid = TimeGrid::horizon(1.0, 0.01).unwrap();
        let p = sample_path(&[ChannelKind::Brownian], grid, 3, 0).unwrap();
        let ou = ou_from_path(&p, 0, 2.0, 0.0).unwrap();
        // the stationary law N(0, 0) pins O(0) = 0, and decay keeps it there
        assert!(ou.values.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn ou_rejects_non_brownian_channel() {
        let grid = TimeGrid::horizon(1.0, 0.01).unwrap();
        let p = sample_path(&[ChannelKind::poisson(1.0)], grid, 3, 0).unwrap();
        assert!(matches!(ou_from_path(&p, 0, 1.0, 1.0), Err(RdsError::Kind { .. })));
    }

    #[test]
    fn ou_stationary_variance() {
        // γ = 1, λ = 8/3: stationary variance γ²/(2λ) = 3/16
        let lambda = 8.0 / 3.0;
        let grid = TimeGrid::horizon(2000.0, 0.01).unwrap();
        let ou = sample_ou_stationary(grid, lambda, 1.0, 77, 0).unwrap();
        let sq: Vec<f64> = ou.values.iter().map(|o| o * o).collect();
        let stat = crate::stats::batch_mean_stat("O^2", &sq, 10_000).unwrap();
        assert!((stat.mean - 0.1875).abs() < 3.0 * stat.stderr, "{stat:?}");
        assert_eq!(ou.stationary_variance(), 0.1875);
    }

    #[test]
    fn csv_dump_has_header_and_full_precision() {
        let grid = TimeGrid::horizon(0.02, 0.01).unwrap();
        let p = sample_path(&[ChannelKind::Brownian, ChannelKind::Zero], grid, 3, 0).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,ch0,ch1");
        assert_eq!(lines.len(), 4);
        let parsed: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(parsed, p.value(1, 0));
    }
}
