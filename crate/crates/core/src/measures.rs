//! Long-run statistics: empirical invariant clouds, ball masses, ergodic
//! averages, the folded-normal mean and the Lorenz absorbing-set check.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{RdsError, Result};
use crate::integrate::{integrate_with, Trajectory};
use crate::noise::{fmt_f64, steps_for, OUPath};
use crate::rds::EnsembleConfig;
use crate::stats::{batch_mean_stat, mean, quantile_sorted, sample_variance, EnsembleStat};
use crate::systems::SystemSpec;

/// States recorded along one long run after a burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCloud {
    pub dim: usize,
    /// `n × dim`, row-major, in time order.
    pub samples: Vec<f64>,
    pub burn_in: f64,
    pub thin: usize,
    pub dt: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSummary {
    pub mean: f64,
    pub variance: f64,
    pub second_moment: f64,
    pub q01: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q99: f64,
}

/// Run one chain from `x0` on replica `stream` of `cfg`, drop `burn_in`
/// time units, then keep every `thin`-th state until `n_samples` are stored.
pub fn sample_invariant(
    system: &SystemSpec,
    cfg: &EnsembleConfig,
    x0: &[f64],
    burn_in: f64,
    n_samples: usize,
    thin: usize,
    stream: u64,
) -> Result<SampleCloud> {
    if burn_in < 0.0 || thin == 0 || n_samples == 0 {
        return Err(RdsError::Parameter("need burn_in >= 0, thin >= 1 and n_samples >= 1".into()));
    }
    let burn = steps_for(burn_in, cfg.dt)?;
    let total = burn + n_samples * thin;
    let path = cfg.path(total as f64 * cfg.dt, stream)?;
    let d = system.dim();
    let mut samples = Vec::with_capacity(n_samples * d);
    integrate_with(system, x0, &path, cfg.scheme, |k, x| {
        if k > burn && (k - burn) % thin == 0 {
            samples.extend_from_slice(x);
        }
    })?;
    let kinds: Vec<String> = cfg.kinds.iter().map(|k| k.to_string()).collect();
    Ok(SampleCloud {
        dim: d,
        samples,
        burn_in,
        thin,
        dt: cfg.dt,
        source: format!("{} {:?} driven by [{}]", system.name(), system.params(), kinds.join(", ")),
    })
}

impl SampleCloud {
    pub fn from_samples(dim: usize, samples: Vec<f64>) -> Result<Self> {
        if dim == 0 || samples.is_empty() || !samples.len().is_multiple_of(dim) {
            return Err(RdsError::Parameter("cloud needs a positive number of complete samples".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(RdsError::State("cloud samples must be finite".into()));
        }
        Ok(Self { dim, samples, burn_in: 0.0, thin: 1, dt: 0.0, source: "supplied".into() })
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.samples.iter().skip(j).step_by(self.dim).copied().collect()
    }

    /// Moments plus quantiles; the quantiles stay meaningful for heavy tails.
    pub fn summary(&self) -> Vec<CoordinateSummary> {
        (0..self.dim)
            .map(|j| {
                let xs = self.coordinate(j);
                let mut sorted = xs.clone();
                sorted.sort_by(f64::total_cmp);
                CoordinateSummary {
                    mean: mean(&xs),
                    variance: sample_variance(&xs),
                    second_moment: xs.iter().map(|v| v * v).sum::<f64>() / xs.len() as f64,
                    q01: quantile_sorted(&sorted, 0.01),
                    q25: quantile_sorted(&sorted, 0.25),
                    median: quantile_sorted(&sorted, 0.5),
                    q75: quantile_sorted(&sorted, 0.75),
                    q99: quantile_sorted(&sorted, 0.99),
                }
            })
            .collect()
    }

    /// Time average of `f` over the cloud with a batch-means error
    /// (`n_batches` batches).
    pub fn average<F: Fn(&[f64]) -> f64>(&self, label: &str, n_batches: usize, f: F) -> Result<EnsembleStat> {
        let series: Vec<f64> = (0..self.len()).map(|i| f(self.sample(i))).collect();
        let batch = (series.len() / n_batches.max(1)).max(1);
        batch_mean_stat(label, &series, batch)
    }

    /// CSV dump with header `idx,x0,x1,...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        writeln!(out, "idx,{}", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self.sample(i).iter().map(|v| fmt_f64(*v)).collect();
            writeln!(out, "{i},{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Fraction of the cloud inside the closed Euclidean ball, Wilson interval.
pub fn ball_mass(cloud: &SampleCloud, center: &[f64], radius: f64) -> Result<EnsembleStat> {
    if !(radius > 0.0) {
        return Err(RdsError::Parameter("ball radius must be positive".into()));
    }
    if center.len() != cloud.dim {
        return Err(RdsError::Parameter("centre has the wrong dimension".into()));
    }
    let r2 = radius * radius;
    let inside = (0..cloud.len())
        .filter(|&i| {
            cloud
                .sample(i)
                .iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                <= r2
        })
        .count();
    Ok(EnsembleStat::proportion(format!("ball_mass(R={radius})"), inside, cloud.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sigma: f64,
    pub radius: f64,
    pub mass: EnsembleStat,
}

/// Ball mass for each noise intensity, one independent chain per entry
/// (chain `i` uses stream `i`).
pub fn ball_mass_sweep<F>(
    build: F,
    sigmas: &[f64],
    cfg: &EnsembleConfig,
    x0: &[f64],
    burn_in: f64,
    n_samples: usize,
    thin: usize,
    center: &[f64],
    radius: f64,
) -> Result<Vec<SweepRow>>
where
    F: Fn(f64) -> Result<SystemSpec> + Sync + Send,
{
    let results = crate::ensemble::run_replicas(sigmas.len(), cfg.workers, |i| {
        let sigma = sigmas[i as usize];
        let system = build(sigma)?;
        let cloud = sample_invariant(&system, cfg, x0, burn_in, n_samples, thin, i)?;
        Ok(SweepRow { sigma, radius, mass: ball_mass(&cloud, center, radius)? })
    });
    results.into_iter().collect()
}

/// Sweep CSV with header `sigma,R,mass,ci_low,ci_high`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "sigma,R,mass,ci_low,ci_high")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(r.sigma),
            fmt_f64(r.radius),
            fmt_f64(r.mass.mean),
            fmt_f64(r.mass.ci_low),
            fmt_f64(r.mass.ci_high)
        )?;
    }
    Ok(())
}

/// `E|c - X|` for `X ~ N(0, s²)`.
pub fn folded_normal_mean(c: f64, s: f64) -> f64 {
    assert!(s >= 0.0, "standard deviation must be nonnegative");
    if s == 0.0 {
        return c.abs();
    }
    s * (2.0 / std::f64::consts::PI).sqrt() * (-c * c / (2.0 * s * s)).exp() + c * erf(c / (s * std::f64::consts::SQRT_2))
}

/// Time average of a stationary series with a batch-means error.
pub fn ergodic_average(series: &[f64], batch_len: usize) -> Result<EnsembleStat> {
    batch_mean_stat("ergodic_average", series, batch_len)
}

/// `L = ½(x² + y² + (z - ρ - σ)²)`.
pub fn lorenz_functional(x: &[f64], rho: f64, sigma: f64) -> f64 {
    0.5 * (x[0] * x[0] + x[1] * x[1] + (x[2] - rho - sigma).powi(2))
}

/// `K = min{σ, β/2, 2}`.
pub fn lorenz_k(sigma: f64, beta: f64) -> f64 {
    sigma.min(beta / 2.0).min(2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingReport {
    pub k: f64,
    pub n_checked: usize,
    pub violations: usize,
    /// Largest `L_{k+1} - (L_k + dt·[(-K + O²/σ) L_k + M_k])`; the check
    /// allows this up to `tolerance`.
    pub max_margin: f64,
    /// `C·dt²` with `C = 10 (1 + max L)(1 + max O²)`.
    pub tolerance: f64,
    pub tolerance_constant: f64,
    pub max_l: f64,
}

/// Check the discrete form of `dL/dt ≤ (-K + O²/σ) L + M` along a
/// conjugated Lorenz trajectory driven by `ou`.
pub fn lorenz_absorbing_check(
    trajectory: &Trajectory,
    ou: &OUPath,
    rho: f64,
    sigma: f64,
    beta: f64,
    lambda: f64,
) -> Result<AbsorbingReport> {
    if trajectory.dim != 3 {
        return Err(RdsError::Parameter("the absorbing check needs a 3D Lorenz trajectory".into()));
    }
    let base = trajectory.base_offset;
    let n = trajectory.grid.n_steps;
    if (ou.grid.dt - trajectory.grid.dt).abs() > 1e-15 * ou.grid.dt || ou.values.len() <= base + n {
        return Err(RdsError::Alignment(format!(
            "OU path ({} points, dt {}) does not cover trajectory indices {base}..={} at dt {}",
            ou.values.len(),
            ou.grid.dt,
            base + n,
            trajectory.grid.dt
        )));
    }
    let dt = trajectory.grid.dt;
    let k_const = lorenz_k(sigma, beta);
    let ls: Vec<f64> = (0..=n).map(|k| lorenz_functional(trajectory.state(k), rho, sigma)).collect();
    let max_l = ls.iter().copied().fold(0.0, f64::max);
    let max_o2 = (0..=n).map(|k| ou.values[base + k].powi(2)).fold(0.0, f64::max);
    let c = 10.0 * (1.0 + max_l) * (1.0 + max_o2);
    let tol = c * dt * dt;
    let mut violations = 0;
    let mut max_margin = f64::NEG_INFINITY;
    for k in 0..n {
        let o2 = ou.values[base + k].powi(2);
        let m = 0.5 * beta * (rho + sigma).powi(2) + (2.0 / beta) * (lambda - beta).powi(2) * o2;
        let bound = ls[k] + dt * ((-k_const + o2 / sigma) * ls[k] + m);
        let margin = ls[k + 1] - bound;
        max_margin = max_margin.max(margin);
        if margin > tol {
            violations += 1;
        }
    }
    Ok(AbsorbingReport {
        k: k_const,
        n_checked: n,
        violations,
        max_margin,
        tolerance: tol,
        tolerance_constant: c,
        max_l,
    })
}
