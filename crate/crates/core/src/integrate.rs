//! Path-wise integration: the cocycle `φ_t(ω, x)` on a stored path, its
//! discrete tangent map, and Lyapunov spectra by QR reorthonormalization.
//!
//! Every scheme is a map `X_{n+1} = F_n(X_n)` that reads only the increment
//! `n` of the path (and, for the conjugated Lorenz system, the OU value at the
//! same absolute index). Integrating a shifted path therefore continues an
//! unshifted run bit for bit.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{RdsError, Result};
use crate::noise::{fmt_f64, NoisePath, TimeGrid};
use crate::stats::{batch_mean_stat, mean, sample_variance, EnsembleStat};
use crate::systems::{DriftField, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `X + b(X) dt + Σ ΔL`.
    EulerMaruyama,
    /// `X + b(X) dt / (1 + dt |b(X)|) + Σ ΔL`.
    TamedEuler,
    /// Lorenz only: exact linear part, exact rotation by the quadratic part,
    /// then the noise. Each step has Jacobian determinant `e^{dt·tr}`.
    LorenzSplitting,
}

impl Scheme {
    /// Tamed Euler for cubic drifts, Euler-Maruyama otherwise.
    pub fn default_for(system: &SystemSpec) -> Scheme {
        match system.field() {
            DriftField::Cubic | DriftField::DoubleWell { .. } => Scheme::TamedEuler,
            _ => Scheme::EulerMaruyama,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::EulerMaruyama => "euler_maruyama",
            Scheme::TamedEuler => "tamed_euler",
            Scheme::LorenzSplitting => "lorenz_splitting",
        }
    }

    pub fn parse(s: &str) -> Result<Scheme> {
        match s {
            "euler_maruyama" | "euler" => Ok(Scheme::EulerMaruyama),
            "tamed_euler" | "tamed" => Ok(Scheme::TamedEuler),
            "lorenz_splitting" | "splitting" => Ok(Scheme::LorenzSplitting),
            other => Err(RdsError::Config(format!(
                "unknown scheme '{other}' (euler_maruyama, tamed_euler, lorenz_splitting)"
            ))),
        }
    }
}

/// `exp(dt·M)` for the 2×2 matrix `M`, row-major.
fn expm2(m: [f64; 4], dt: f64) -> [f64; 4] {
    let half_tr = 0.5 * (m[0] + m[3]);
    let disc = (0.5 * (m[0] - m[3])).powi(2) + m[1] * m[2];
    let q = disc * dt * dt;
    // c = cosh(s dt), g = sinh(s dt)/s with s² = disc (analytic in disc).
    let (c, g) = if q.abs() < 1e-6 {
        (1.0 + q / 2.0 + q * q / 24.0, dt * (1.0 + q / 6.0 + q * q / 120.0))
    } else if q > 0.0 {
        let s = disc.sqrt();
        ((s * dt).cosh(), (s * dt).sinh() / s)
    } else {
        let s = (-disc).sqrt();
        ((s * dt).cos(), (s * dt).sin() / s)
    };
    let e = (half_tr * dt).exp();
    [
        e * (c + g * (m[0] - half_tr)),
        e * g * m[1],
        e * g * m[2],
        e * (c + g * (m[3] - half_tr)),
    ]
}

/// One step of a scheme for one system, with scratch space.
pub struct Stepper<'a> {
    system: &'a SystemSpec,
    scheme: Scheme,
    dt: f64,
    b: Vec<f64>,
    j: Vec<f64>,
    tmp: Vec<f64>,
    lorenz: Option<(f64, f64, f64, f64)>,
}

impl<'a> Stepper<'a> {
    pub fn new(system: &'a SystemSpec, scheme: Scheme, dt: f64) -> Result<Self> {
        system.ensure_ready()?;
        let lorenz = match (system.field(), scheme) {
            (DriftField::Lorenz63 { sigma, rho, beta }, _) => Some((*sigma, *rho, *beta, *beta)),
            (DriftField::Lorenz63Conjugated { sigma, rho, beta, lambda }, _) => Some((*sigma, *rho, *beta, *lambda)),
            _ => None,
        };
        if scheme == Scheme::LorenzSplitting && lorenz.is_none() {
            return Err(RdsError::Parameter(format!(
                "lorenz_splitting applies to Lorenz systems, not {}",
                system.name()
            )));
        }
        let d = system.dim();
        Ok(Self {
            system,
            scheme,
            dt,
            b: vec![0.0; d],
            j: vec![0.0; d * d],
            tmp: vec![0.0; d],
            lorenz,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// `out = F_k(x)` where `k` is the absolute grid index of the step.
    #[inline]
    pub fn step(&mut self, k: usize, x: &[f64], inc: &[f64], out: &mut [f64]) {
        let dt = self.dt;
        match self.scheme {
            Scheme::EulerMaruyama => {
                self.system.drift_at(k, x, &mut self.b);
                for i in 0..x.len() {
                    out[i] = x[i] + dt * self.b[i];
                }
            }
            Scheme::TamedEuler => {
                self.system.drift_at(k, x, &mut self.b);
                let nb = self.b.iter().map(|v| v * v).sum::<f64>().sqrt();
                let tame = dt / (1.0 + dt * nb);
                for i in 0..x.len() {
                    out[i] = x[i] + tame * self.b[i];
                }
            }
            Scheme::LorenzSplitting => {
                let (u, _) = self.split_linear(k, x);
                let theta = u[0] * dt;
                let (s, c) = theta.sin_cos();
                out[0] = u[0];
                out[1] = u[1] * c - u[2] * s;
                out[2] = u[1] * s + u[2] * c;
            }
        }
        self.system.add_noise(x, inc, out);
    }

    fn ou(&self, k: usize) -> f64 {
        self.system.aux().map_or(0.0, |ou| ou.values[k])
    }

    /// Exact flow of the linear (plus forcing) part of Lorenz over one step.
    fn split_linear(&self, k: usize, x: &[f64]) -> ([f64; 3], [f64; 4]) {
        let (sigma, rho, beta, lambda) = self.lorenz.expect("Lorenz parameters");
        let o = self.ou(k);
        let e = expm2([-sigma, sigma, rho - o, -1.0], self.dt);
        let ez = (-beta * self.dt).exp();
        let forcing = -(beta - lambda) * o;
        // ∫_0^dt e^{-β s} ds, without cancellation for small β dt
        let phi = -(-beta * self.dt).exp_m1() / beta;
        (
            [
                e[0] * x[0] + e[1] * x[1],
                e[2] * x[0] + e[3] * x[1],
                ez * x[2] + forcing * phi,
            ],
            e,
        )
    }

    /// Jacobian of `F_k` at `x`, row-major, into `out`.
    pub fn step_jacobian(&mut self, k: usize, x: &[f64], inc: &[f64], out: &mut [f64]) {
        let d = x.len();
        let dt = self.dt;
        match self.scheme {
            Scheme::EulerMaruyama => {
                self.system.jacobian_at(k, x, &mut self.j);
                for i in 0..d {
                    for l in 0..d {
                        out[i * d + l] = dt * self.j[i * d + l] + if i == l { 1.0 } else { 0.0 };
                    }
                }
            }
            Scheme::TamedEuler => {
                self.system.drift_at(k, x, &mut self.b);
                self.system.jacobian_at(k, x, &mut self.j);
                let nb = self.b.iter().map(|v| v * v).sum::<f64>().sqrt();
                let den = 1.0 + dt * nb;
                // ∇|b| = Jᵀ b / |b|
                for l in 0..d {
                    self.tmp[l] = if nb > 0.0 {
                        (0..d).map(|i| self.j[i * d + l] * self.b[i]).sum::<f64>() / nb
                    } else {
                        0.0
                    };
                }
                for i in 0..d {
                    for l in 0..d {
                        let v = self.j[i * d + l] / den - dt * self.b[i] * self.tmp[l] / (den * den);
                        out[i * d + l] = dt * v + if i == l { 1.0 } else { 0.0 };
                    }
                }
            }
            Scheme::LorenzSplitting => {
                let (u, e) = self.split_linear(k, x);
                let (beta, theta) = (self.lorenz.unwrap().2, u[0] * dt);
                let ez = (-beta * dt).exp();
                let (s, c) = theta.sin_cos();
                let y1 = u[1] * c - u[2] * s;
                let z1 = u[1] * s + u[2] * c;
                // D(rotation) at u, times the block-diagonal linear flow
                let r = [1.0, 0.0, 0.0, -dt * z1, c, -s, dt * y1, s, c];
                let lin = [e[0], e[1], 0.0, e[2], e[3], 0.0, 0.0, 0.0, ez];
                for i in 0..3 {
                    for l in 0..3 {
                        out[i * 3 + l] = (0..3).map(|m| r[i * 3 + m] * lin[m * 3 + l]).sum();
                    }
                }
            }
        }
        if self.system.is_multiplicative() {
            out[0] += self.system.coupling()[0] * inc[0];
        }
    }
}

fn check_alignment(system: &SystemSpec, path: &NoisePath) -> Result<()> {
    if path.channels() != system.channels() {
        return Err(RdsError::Parameter(format!(
            "{} expects {} noise channel(s), path has {}",
            system.name(),
            system.channels(),
            path.channels()
        )));
    }
    if let Some(ou) = system.aux() {
        let last = path.base_offset() + path.n_steps();
        if ou.values.len() <= last || (ou.grid.dt - path.grid().dt).abs() > 1e-15 * ou.grid.dt {
            return Err(RdsError::Alignment(format!(
                "OU path with {} points does not cover absolute index {last} at dt {}",
                ou.values.len(),
                path.grid().dt
            )));
        }
    }
    Ok(())
}

fn check_x0(system: &SystemSpec, x0: &[f64]) -> Result<()> {
    if x0.len() != system.dim() {
        return Err(RdsError::State(format!(
            "initial state has dimension {}, expected {}",
            x0.len(),
            system.dim()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(RdsError::State("initial state must be finite".into()));
    }
    Ok(())
}

/// Integrate along `path`, calling `visit(k, state)` at every grid index
/// (including 0) without storing the trajectory. Returns the final state.
pub fn integrate_with<F: FnMut(usize, &[f64])>(
    system: &SystemSpec,
    x0: &[f64],
    path: &NoisePath,
    scheme: Scheme,
    mut visit: F,
) -> Result<Vec<f64>> {
    check_x0(system, x0)?;
    check_alignment(system, path)?;
    let mut stepper = Stepper::new(system, scheme, path.grid().dt)?;
    let base = path.base_offset();
    let mut x = x0.to_vec();
    let mut next = vec![0.0; x.len()];
    visit(0, &x);
    for k in 0..path.n_steps() {
        stepper.step(base + k, &x, path.increment(k), &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(RdsError::BlowUp {
                step: k + 1,
                time: path.grid().time(k + 1),
            });
        }
        std::mem::swap(&mut x, &mut next);
        visit(k + 1, &x);
    }
    Ok(x)
}

/// Integrate several initial states in lockstep on the same path. Each
/// point follows exactly the arithmetic of a single [`integrate_with`] run.
/// `visit(k, states)` sees every grid index; returning `false` stops early.
pub fn integrate_points_with<F: FnMut(usize, &[Vec<f64>]) -> bool>(
    system: &SystemSpec,
    points: &[Vec<f64>],
    path: &NoisePath,
    scheme: Scheme,
    mut visit: F,
) -> Result<Vec<Vec<f64>>> {
    for p in points {
        check_x0(system, p)?;
    }
    check_alignment(system, path)?;
    let mut stepper = Stepper::new(system, scheme, path.grid().dt)?;
    let base = path.base_offset();
    let mut xs = points.to_vec();
    let mut next = vec![0.0; system.dim()];
    if !visit(0, &xs) {
        return Ok(xs);
    }
    for k in 0..path.n_steps() {
        let inc = path.increment(k);
        for x in xs.iter_mut() {
            stepper.step(base + k, x, inc, &mut next);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(RdsError::BlowUp {
                    step: k + 1,
                    time: path.grid().time(k + 1),
                });
            }
            x.copy_from_slice(&next);
        }
        if !visit(k + 1, &xs) {
            break;
        }
    }
    Ok(xs)
}

/// Final state `φ_T(ω, x0)`.
pub fn integrate_terminal(system: &SystemSpec, x0: &[f64], path: &NoisePath, scheme: Scheme) -> Result<Vec<f64>> {
    integrate_with(system, x0, path, scheme, |_, _| {})
}

/// A stored solution `φ_{t_k}(ω, x0)` on the path grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub dim: usize,
    /// `(n_steps + 1) × dim`, row-major.
    pub states: Vec<f64>,
    pub system: String,
    pub scheme: Scheme,
    pub path_fingerprint: u64,
    /// Absolute index of row 0 in the unshifted path (for auxiliary inputs).
    pub base_offset: usize,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.grid.n_steps)
    }

    pub fn len(&self) -> usize {
        self.grid.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// CSV dump with header `t,x0,x1,...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        writeln!(out, "t,{}", header.join(","))?;
        for k in 0..self.len() {
            let row: Vec<String> = self.state(k).iter().map(|v| fmt_f64(*v)).collect();
            writeln!(out, "{},{}", fmt_f64(self.grid.time(k)), row.join(","))?;
        }
        Ok(())
    }
}

pub fn integrate(system: &SystemSpec, x0: &[f64], path: &NoisePath, scheme: Scheme) -> Result<Trajectory> {
    let mut states = Vec::with_capacity((path.n_steps() + 1) * system.dim());
    integrate_with(system, x0, path, scheme, |_, x| states.extend_from_slice(x))?;
    Ok(Trajectory {
        grid: *path.grid(),
        dim: system.dim(),
        states,
        system: system.name().to_string(),
        scheme,
        path_fingerprint: path.fingerprint(),
        base_offset: path.base_offset(),
    })
}

/// Final state and the full derivative `Dφ_T(ω, x0)` (row-major `d × d`).
pub fn tangent_map(system: &SystemSpec, x0: &[f64], path: &NoisePath, scheme: Scheme) -> Result<(Vec<f64>, Vec<f64>)> {
    check_x0(system, x0)?;
    check_alignment(system, path)?;
    let d = system.dim();
    let mut stepper = Stepper::new(system, scheme, path.grid().dt)?;
    let base = path.base_offset();
    let mut x = x0.to_vec();
    let mut next = vec![0.0; d];
    let mut df = vec![0.0; d * d];
    let mut m = DMatrix::<f64>::identity(d, d);
    for k in 0..path.n_steps() {
        let inc = path.increment(k);
        stepper.step_jacobian(base + k, &x, inc, &mut df);
        stepper.step(base + k, &x, inc, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(RdsError::BlowUp {
                step: k + 1,
                time: path.grid().time(k + 1),
            });
        }
        m = DMatrix::from_row_slice(d, d, &df) * m;
        std::mem::swap(&mut x, &mut next);
    }
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for l in 0..d {
            out[i * d + l] = m[(i, l)];
        }
    }
    Ok((x, out))
}

/// Number of batches used for batch-means errors on exponents.
pub const LYAPUNOV_BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub k: usize,
    /// Descending.
    pub exponents: Vec<f64>,
    pub stderr: Vec<f64>,
    pub total_time: f64,
    pub renorm_every: usize,
    /// `log |R_ii|` per renormalization, `n_renorm × k` row-major.
    pub log_record: Vec<f64>,
    /// `(1/T) Σ_n log |det DF_n|`, the exact discrete counterpart of the
    /// time-averaged Jacobian trace.
    pub log_det_average: f64,
    /// Some batch mean sits more than 5 standard errors from the others.
    pub heavy_tail_warning: bool,
    pub final_state: Vec<f64>,
}

impl LyapunovEstimate {
    pub fn top(&self) -> f64 {
        self.exponents[0]
    }

    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }
}

/// Benettin-style spectrum: propagate a `d × k` frame by the exact discrete
/// tangent map and re-orthonormalize by QR every `renorm_every` steps.
pub fn lyapunov_spectrum(
    system: &SystemSpec,
    x0: &[f64],
    path: &NoisePath,
    scheme: Scheme,
    k: usize,
    renorm_every: usize,
) -> Result<LyapunovEstimate> {
    let d = system.dim();
    if k == 0 || k > d {
        return Err(RdsError::Parameter(format!("need 1 <= k <= {d}, got {k}")));
    }
    if renorm_every == 0 {
        return Err(RdsError::Parameter("renorm_every must be at least 1".into()));
    }
    check_x0(system, x0)?;
    check_alignment(system, path)?;
    let n = path.n_steps();
    if n == 0 {
        return Err(RdsError::Grid("Lyapunov estimation needs at least one step".into()));
    }
    let mut stepper = Stepper::new(system, scheme, path.grid().dt)?;
    let base = path.base_offset();
    let mut x = x0.to_vec();
    let mut next = vec![0.0; d];
    let mut df = vec![0.0; d * d];
    let mut frame = DMatrix::<f64>::identity(d, k);
    let mut log_record = Vec::with_capacity((n / renorm_every + 1) * k);
    let mut log_det = 0.0;
    let mut step_ends = Vec::with_capacity(n / renorm_every + 1);

    for step in 0..n {
        let inc = path.increment(step);
        stepper.step_jacobian(base + step, &x, inc, &mut df);
        let dfm = DMatrix::from_row_slice(d, d, &df);
        log_det += dfm.determinant().abs().ln();
        frame = &dfm * frame;
        stepper.step(base + step, &x, inc, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(RdsError::BlowUp {
                step: step + 1,
                time: path.grid().time(step + 1),
            });
        }
        std::mem::swap(&mut x, &mut next);
        if (step + 1) % renorm_every == 0 || step + 1 == n {
            let qr = frame.clone().qr();
            let mut q = qr.q();
            let r = qr.r();
            for i in 0..k {
                let rii = r[(i, i)];
                if !rii.is_finite() || rii.abs() < 1e-300 {
                    return Err(RdsError::Degeneracy { step: step + 1 });
                }
                if rii < 0.0 {
                    q.column_mut(i).neg_mut();
                }
                log_record.push(rii.abs().ln());
            }
            frame = q;
            step_ends.push(step + 1);
        }
    }

    let total_time = n as f64 * path.grid().dt;
    let n_renorm = step_ends.len();
    let mut exponents: Vec<f64> = (0..k)
        .map(|i| (0..n_renorm).map(|r| log_record[r * k + i]).sum::<f64>() / total_time)
        .collect();

    // batch means over renormalization blocks
    let nb = LYAPUNOV_BATCHES.min(n_renorm);
    let mut stderr = vec![0.0; k];
    let mut heavy = false;
    if nb >= 2 {
        let per = n_renorm / nb;
        for (i, se) in stderr.iter_mut().enumerate() {
            let batch: Vec<f64> = (0..nb)
                .map(|b| {
                    let (lo, hi) = (b * per, (b + 1) * per);
                    let logs: f64 = (lo..hi).map(|r| log_record[r * k + i]).sum();
                    let t0 = if lo == 0 { 0 } else { step_ends[lo - 1] };
                    logs / ((step_ends[hi - 1] - t0) as f64 * path.grid().dt)
                })
                .collect();
            *se = (sample_variance(&batch) / nb as f64).sqrt();
            heavy |= has_outlying_batch(&batch);
        }
    }
    // QR keeps the exponents ordered only on average; report them sorted.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| exponents[b].total_cmp(&exponents[a]));
    exponents = order.iter().map(|&i| exponents[i]).collect();
    let stderr = order.iter().map(|&i| stderr[i]).collect();

    Ok(LyapunovEstimate {
        k,
        exponents,
        stderr,
        total_time,
        renorm_every,
        log_record,
        log_det_average: log_det / total_time,
        heavy_tail_warning: heavy,
        final_state: x,
    })
}

/// Leave-one-out test: a batch further than 5 standard errors from the
/// mean of the other batches.
fn has_outlying_batch(batch: &[f64]) -> bool {
    let nb = batch.len();
    if nb < 3 {
        return false;
    }
    (0..nb).any(|i| {
        let others: Vec<f64> = batch.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
        let sd = sample_variance(&others).sqrt();
        let m = mean(&others);
        sd > 0.0 && (batch[i] - m).abs() > 5.0 * sd
    })
}

/// `(1/T) Σ trace(Db(X_n)) dt` over a stored trajectory, batch-means error.
pub fn trace_average(system: &SystemSpec, trajectory: &Trajectory) -> Result<EnsembleStat> {
    let n = trajectory.grid.n_steps;
    let series: Vec<f64> = (0..n)
        .map(|k| system.divergence_at(trajectory.base_offset + k, trajectory.state(k)))
        .collect();
    trace_stat(series)
}

fn trace_stat(series: Vec<f64>) -> Result<EnsembleStat> {
    if series.len() >= 2 * LYAPUNOV_BATCHES {
        batch_mean_stat("trace_average", &series, series.len() / LYAPUNOV_BATCHES)
    } else if !series.is_empty() {
        Ok(EnsembleStat::from_mean("trace_average", series.len(), mean(&series), 0.0))
    } else {
        Err(RdsError::Length { len: 0, batch_len: 1 })
    }
}

/// As [`trace_average`], integrating on the fly instead of storing states.
pub fn trace_average_along(system: &SystemSpec, x0: &[f64], path: &NoisePath, scheme: Scheme) -> Result<EnsembleStat> {
    let n = path.n_steps();
    let base = path.base_offset();
    let mut series = Vec::with_capacity(n);
    integrate_with(system, x0, path, scheme, |k, x| {
        if k < n {
            series.push(system.divergence_at(base + k, x));
        }
    })?;
    trace_stat(series)
}

/// `(1/T) Σ_n log |det DF_n|` along the path, from the per-step
/// determinants alone (no frame, no QR).
pub fn log_det_average(system: &SystemSpec, x0: &[f64], path: &NoisePath, scheme: Scheme) -> Result<f64> {
    check_x0(system, x0)?;
    check_alignment(system, path)?;
    let d = system.dim();
    let mut stepper = Stepper::new(system, scheme, path.grid().dt)?;
    let base = path.base_offset();
    let mut x = x0.to_vec();
    let mut next = vec![0.0; d];
    let mut df = vec![0.0; d * d];
    let mut acc = 0.0;
    for k in 0..path.n_steps() {
        let inc = path.increment(k);
        stepper.step_jacobian(base + k, &x, inc, &mut df);
        acc += DMatrix::from_row_slice(d, d, &df).determinant().abs().ln();
        stepper.step(base + k, &x, inc, &mut next);
        std::mem::swap(&mut x, &mut next);
    }
    Ok(acc / path.grid().duration())
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    DVector::from_column_slice(v).norm()
}
