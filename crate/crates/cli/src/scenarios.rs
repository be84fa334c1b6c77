//! Scenario registry. Each scenario declares its parameters with defaults
//! and turns a resolved config into summary rows and diagnostic tables.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rds_lab_core::ensemble::{run_outcomes, Outcomes};
use rds_lab_core::integrate::{integrate, lyapunov_spectrum, trace_average, LyapunovEstimate, Scheme};
use rds_lab_core::measures::{
    ergodic_average, folded_normal_mean, lorenz_absorbing_check, sample_invariant, ball_mass_sweep,
};
use rds_lab_core::noise::{ou_from_path, sample_ou_stationary, ChannelKind, TimeGrid};
use rds_lab_core::rds::{
    recurrence_probability, sync_probability, synchronization_verdict, trap_contraction_rate, two_point_run, BallQuery,
    EnsembleConfig, GrowthBound, MeshPolicy, PairSource, SyncReport, VerdictConfig, VerdictReport,
};
use rds_lab_core::streams::{stream_rng, Purpose};
use rds_lab_core::systems::{uniform_in_unit_ball, verify_drift_condition, DriftCondition, Region};
use rds_lab_core::{build_system, EnsembleStat, SystemSpec};

use crate::config::{ExperimentConfig, Value};
use crate::error::CliError;
use crate::report::{cell, SummaryRow, Table};

pub struct ParamSpec {
    pub key: &'static str,
    pub default: Value,
    pub doc: &'static str,
    pub check: fn(f64) -> bool,
}

#[derive(Debug, Default)]
pub struct Output {
    pub rows: Vec<SummaryRow>,
    pub tables: Vec<Table>,
    pub blow_ups: usize,
    pub attempted: usize,
}

impl Output {
    fn count<T>(&mut self, o: &Outcomes<T>) {
        self.blow_ups += o.blow_ups;
        self.attempted += o.attempted;
    }

    fn count_sync(&mut self, r: &SyncReport) {
        self.blow_ups += r.blow_ups;
        self.attempted += r.attempted;
    }
}

pub struct Scenario {
    pub name: &'static str,
    /// Where the scenario comes from.
    pub anchor: &'static str,
    pub about: &'static str,
    pub params: fn() -> Vec<ParamSpec>,
    pub run: fn(&ExperimentConfig) -> Result<Output, CliError>,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario").field("name", &self.name).finish()
    }
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

fn positive(x: f64) -> bool {
    x > 0.0
}
fn non_negative(x: f64) -> bool {
    x >= 0.0
}
fn count(x: f64) -> bool {
    x >= 1.0 && x.fract() == 0.0
}
fn replicas(x: f64) -> bool {
    x >= 30.0 && x.fract() == 0.0
}
fn any(_: f64) -> bool {
    true
}
fn stable_index(x: f64) -> bool {
    x > 0.0 && x <= 2.0
}
fn subordinator_index(x: f64) -> bool {
    x > 0.0 && x < 1.0
}
fn flag(x: f64) -> bool {
    x == 0.0 || x == 1.0
}

fn num(key: &'static str, default: f64, doc: &'static str, check: fn(f64) -> bool) -> ParamSpec {
    ParamSpec { key, default: Value::Num(default), doc, check }
}

fn list(key: &'static str, default: &[f64], doc: &'static str, check: fn(f64) -> bool) -> ParamSpec {
    ParamSpec { key, default: Value::List(default.to_vec()), doc, check }
}

pub static SCENARIOS: &[Scenario] = &[
    Scenario {
        name: "gbm-sync",
        anchor: "dX = X dW: the weak attractor is {0} and all trajectories synchronize",
        about: "top Lyapunov exponent of the scalar geometric system and a synchronization verdict at 0",
        params: gbm_params,
        run: gbm_sync,
    },
    Scenario {
        name: "stable-ballmass",
        anchor: "cubic drift plus stable noise: invariant mass of a fixed ball decays as the noise grows",
        about: "invariant mass of B(0,R) for the cubic system driven by stable noise, per intensity",
        params: ballmass_params,
        run: stable_ballmass,
    },
    Scenario {
        name: "traceavg-gradient",
        anchor: "gradient drift: the exponent sum equals the time-averaged Jacobian trace",
        about: "trace average along a long trajectory against quadrature over the stationary density",
        params: traceavg_params,
        run: traceavg_gradient,
    },
    Scenario {
        name: "subordinator-doublewell",
        anchor: "cubic drift plus subordinator: asymptotic stability on B(1, 1/4)",
        about: "two-point contraction in the right well of the cubic system",
        params: subordinator_params,
        run: subordinator_doublewell,
    },
    Scenario {
        name: "poisson-cubic",
        anchor: "cubic drift plus Poisson noise: recurrence at 1 and synchronization",
        about: "recurrence at 1, pair synchronization and the trap-region contraction rate",
        params: poisson_params,
        run: poisson_cubic,
    },
    Scenario {
        name: "degenerate-doublewell",
        anchor: "double well forced on n of d coordinates: synchronization for strong noise only",
        about: "cross-half-space pair synchronization for several noise intensities",
        params: doublewell_params,
        run: degenerate_doublewell,
    },
    Scenario {
        name: "lorenz-gamma-sweep",
        anchor: "stochastic Lorenz 63: synchronization when |γ| < (1-ρ)√(πβ)",
        about: "pair synchronization and top exponent of stochastic Lorenz 63 across noise strengths",
        params: sweep_params,
        run: lorenz_gamma_sweep,
    },
    Scenario {
        name: "lorenz-absorbing",
        anchor: "conjugated Lorenz 63: the Lyapunov-function inequality behind the absorbing set",
        about: "discrete check of the Lyapunov-function inequality along random trajectories",
        params: absorbing_params,
        run: lorenz_absorbing,
    },
    Scenario {
        name: "lorenz-recurrence",
        anchor: "stochastic Lorenz 63: strong recurrence at the origin",
        about: "certified ball-image recurrence at the origin in the weighted metric",
        params: recurrence_params,
        run: lorenz_recurrence,
    },
    Scenario {
        name: "lorenz-threshold-stats",
        anchor: "stochastic Lorenz 63: threshold statistic and the small-noise invariant marginals",
        about: "ergodic average of |ρ+1-O|-2 against the folded-normal value, and the invariant marginals",
        params: threshold_params,
        run: lorenz_threshold_stats,
    },
];

pub fn scenario_names() -> Vec<&'static str> {
    SCENARIOS.iter().map(|s| s.name).collect()
}

pub fn find_scenario(name: &str) -> Result<&'static Scenario, CliError> {
    SCENARIOS
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| CliError::UnknownScenario { name: name.to_string(), valid: scenario_names() })
}

/// Parameter table for `--help`.
pub fn defaults_help() -> String {
    let mut s = String::from("Scenario parameters (override with --set key=value or a [params] section):\n");
    for sc in SCENARIOS {
        let _ = writeln!(s, "\n  {}: {}", sc.name, sc.about);
        for p in (sc.params)() {
            let default = match &p.default {
                Value::Num(x) => format!("{x}"),
                Value::List(xs) => format!("{xs:?}"),
            };
            let _ = writeln!(s, "    {:<16} {:<28} {}", p.key, default, p.doc);
        }
    }
    s
}

fn ensemble(cfg: &ExperimentConfig, kinds: Vec<ChannelKind>, scheme: Scheme) -> EnsembleConfig {
    EnsembleConfig::new(kinds, cfg.num("dt"), scheme, cfg.seed).with_workers(cfg.workers)
}

fn bm() -> Vec<ChannelKind> {
    vec![ChannelKind::Brownian]
}

fn sync_label(s: &EnsembleStat) -> &'static str {
    if s.mean >= 0.95 && s.ci_low >= 0.9 {
        "synchronized"
    } else if s.ci_high < 0.9 {
        "not-synchronized"
    } else {
        "inconclusive"
    }
}

fn sign_label(s: &EnsembleStat) -> &'static str {
    if s.ci_high < 0.0 {
        "negative"
    } else if s.ci_low > 0.0 {
        "positive"
    } else {
        "indeterminate"
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn verdict_rows(value: &str, rep: &VerdictReport) -> Vec<SummaryRow> {
    let v = rep.verdict.as_str();
    vec![
        SummaryRow::from_stat("verdict_stability", value, &rep.stability, v),
        SummaryRow::from_stat("verdict_recurrence", value, &rep.recurrence, v),
        SummaryRow::from_stat("verdict_pair_sync", value, &rep.sync, v),
    ]
}

fn top_exponents(
    sys: &SystemSpec,
    x0: &[f64],
    ens: &EnsembleConfig,
    horizon: f64,
    reps: usize,
) -> Result<Outcomes<LyapunovEstimate>, CliError> {
    Ok(run_outcomes(reps, ens.workers, |i| {
        let path = ens.path(horizon, i)?;
        lyapunov_spectrum(sys, x0, &path, ens.scheme, 1, 10)
    })?)
}

/// Rows `value,replica,lambda_top,stderr,heavy_tail_warning`.
fn lyapunov_rows(out: &Outcomes<LyapunovEstimate>, value: f64) -> Vec<Vec<String>> {
    out.ok
        .iter()
        .map(|(i, est)| vec![cell(value), i.to_string(), cell(est.top()), cell(est.stderr[0]), est.heavy_tail_warning.to_string()])
        .collect()
}

fn pooled_top(out: &Outcomes<LyapunovEstimate>) -> EnsembleStat {
    let tops: Vec<f64> = out.values().map(|e| e.top()).collect();
    EnsembleStat::from_samples("lambda_top", &tops)
}

fn gbm_params() -> Vec<ParamSpec> {
    vec![
        num("dt", 1e-3, "time step", positive),
        num("horizon", 200.0, "exponent estimation horizon", positive),
        num("reps", 20.0, "replicas for the exponent", count),
        num("x0", 1.0, "initial state", any),
        num("verdict", 1.0, "also run the three-part verdict at 0 (0 or 1)", flag),
        num("verdict_reps", 100.0, "replicas per verdict test", replicas),
        num("verdict_horizon", 100.0, "horizon of the verdict tests", positive),
    ]
}

fn gbm_sync(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let sys = SystemSpec::geometric1d();
    let ens = ensemble(cfg, bm(), Scheme::EulerMaruyama);
    let mut out = Output::default();
    let est = top_exponents(&sys, &[cfg.num("x0")], &ens, cfg.num("horizon"), cfg.int("reps"))?;
    out.count(&est);
    let pooled = pooled_top(&est);
    out.rows.push(SummaryRow::from_stat("lambda_top", "pooled", &pooled, sign_label(&pooled)));
    let mut table = Table::new("lyapunov.csv", "x0,replica,lambda_top,stderr,heavy_tail_warning");
    table.rows = lyapunov_rows(&est, cfg.num("x0"));
    out.tables.push(table);
    if cfg.num("verdict") == 1.0 {
        let vc = VerdictConfig { horizon: cfg.num("verdict_horizon"), n_reps: cfg.int("verdict_reps"), ..Default::default() };
        let rep = synchronization_verdict(&sys, &ens, &[0.0], &vc)?;
        out.blow_ups += rep.blow_ups;
        out.rows.extend(verdict_rows("z=0;eps=1", &rep));
    }
    Ok(out)
}

fn ballmass_params() -> Vec<ParamSpec> {
    vec![
        list("sigma", &[1.0, 2.0, 4.0, 8.0], "noise intensities, one chain each", positive),
        num("alpha", 1.5, "stability index in (0, 2]", stable_index),
        num("radius", 1.0, "ball radius around 0", positive),
        num("dt", 1e-3, "time step", positive),
        num("horizon", 5000.0, "chain length including burn-in", positive),
        num("burn_in", 1000.0, "discarded initial time", non_negative),
        num("thin", 10.0, "keep every thin-th state", count),
    ]
}

fn stable_ballmass(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let alpha = cfg.num("alpha");
    let kinds = vec![ChannelKind::Stable { alpha }];
    let ens = ensemble(cfg, kinds, Scheme::TamedEuler);
    let (horizon, burn, thin) = (cfg.num("horizon"), cfg.num("burn_in"), cfg.int("thin"));
    if burn >= horizon {
        return Err(CliError::Invalid("burn_in must be shorter than horizon".into()));
    }
    let n_samples = ((horizon - burn) / (cfg.num("dt") * thin as f64)).round() as usize;
    let radius = cfg.num("radius");
    let sweep = ball_mass_sweep(|s| Ok(SystemSpec::cubic1d(s)), cfg.list("sigma"), &ens, &[0.0], burn, n_samples.max(1), thin, &[0.0], radius)?;
    let mut out = Output { attempted: sweep.len(), ..Default::default() };
    let mut table = Table::new("ballmass.csv", "sigma,R,mass,ci_low,ci_high");
    for (i, row) in sweep.iter().enumerate() {
        let verdict = match i {
            0 => "-",
            _ if row.mass.mean < sweep[i - 1].mass.mean => "decreasing",
            _ => "not-decreasing",
        };
        out.rows.push(SummaryRow::from_stat("sigma", format!("{}", row.sigma), &row.mass, verdict));
        table.push(vec![cell(row.sigma), cell(row.radius), cell(row.mass.mean), cell(row.mass.ci_low), cell(row.mass.ci_high)]);
    }
    out.tables.push(table);
    Ok(out)
}

fn traceavg_params() -> Vec<ParamSpec> {
    vec![
        num("v1", 0.0, "coefficient of x in V", any),
        num("v2", -0.5, "coefficient of x^2 in V", any),
        num("v3", 0.0, "coefficient of x^3 in V", any),
        num("v4", 0.25, "coefficient of x^4 in V, positive", positive),
        num("sigma", 1.0, "noise intensity", positive),
        num("dt", 1e-3, "time step", positive),
        num("horizon", 2000.0, "trajectory length", positive),
        num("x0", 1.0, "initial state", any),
    ]
}

/// `∫ b'(x) e^{-2V/σ²} dx / ∫ e^{-2V/σ²} dx` by the trapezoid rule, and the
/// normalized density on `grid`.
fn gradient_oracle(c: [f64; 4], sigma: f64, grid: &[f64]) -> (f64, Vec<f64>) {
    let v = |x: f64| ((c[3] * x + c[2]) * x + c[1]) * x * x + c[0] * x;
    let db = |x: f64| -(2.0 * c[1] + 6.0 * c[2] * x + 12.0 * c[3] * x * x);
    let (lo, hi, n) = (-12.0, 12.0, 240_000usize);
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
    let vmin = xs.iter().map(|x| v(*x)).fold(f64::INFINITY, f64::min);
    let w = |x: f64| (-2.0 * (v(x) - vmin) / (sigma * sigma)).exp();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, x) in xs.iter().enumerate() {
        let e = if i == 0 || i == n { 0.5 } else { 1.0 } * w(*x);
        num += db(*x) * e;
        den += e;
    }
    let density = grid.iter().map(|x| w(*x) / (den * h)).collect();
    (num / den, density)
}

fn traceavg_gradient(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let c = [cfg.num("v1"), cfg.num("v2"), cfg.num("v3"), cfg.num("v4")];
    let sigma = cfg.num("sigma");
    let params: BTreeMap<String, f64> =
        [("v1", c[0]), ("v2", c[1]), ("v3", c[2]), ("v4", c[3]), ("sigma", sigma)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let sys = build_system("gradient1d", &params)?;
    let ens = ensemble(cfg, bm(), Scheme::EulerMaruyama);
    let path = ens.path(cfg.num("horizon"), 0)?;
    let traj = integrate(&sys, &[cfg.num("x0")], &path, Scheme::EulerMaruyama)?;
    let stat = trace_average(&sys, &traj)?;
    let lyap = lyapunov_spectrum(&sys, &[cfg.num("x0")], &path, Scheme::EulerMaruyama, 1, 10)?;

    let (lo, hi, bins) = (-3.0, 3.0, 60usize);
    let width = (hi - lo) / bins as f64;
    let centers: Vec<f64> = (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let (quad, density) = gradient_oracle(c, sigma, &centers);
    let mut counts = vec![0usize; bins];
    for k in 0..traj.len() {
        let x = traj.state(k)[0];
        if (lo..hi).contains(&x) {
            counts[((x - lo) / width) as usize % bins] += 1;
        }
    }
    let mut table = Table::new("density.csv", "x,empirical,stationary");
    for b in 0..bins {
        table.push(vec![cell(centers[b]), cell(counts[b] as f64 / (traj.len() as f64 * width)), cell(density[b])]);
    }

    let matches = (stat.mean - quad).abs() <= 3.0 * stat.stderr;
    let value = format!("{sigma}");
    let mut out = Output { attempted: 1, ..Default::default() };
    out.rows.push(SummaryRow::from_stat("trace_average", &value, &stat, if stat.mean < 0.0 { "negative" } else { "non-negative" }));
    out.rows.push(SummaryRow::exact("quadrature", &value, quad, if matches { "within-3-stderr" } else { "outside-3-stderr" }));
    out.rows.push(mean_row("lambda_top", &value, lyap.top(), lyap.stderr[0], 1));
    out.tables.push(table);
    Ok(out)
}

fn mean_row(param: &str, value: &str, mean: f64, stderr: f64, n: usize) -> SummaryRow {
    let stat = EnsembleStat::from_mean(param, n, mean, stderr);
    SummaryRow::from_stat(param, value, &stat, sign_label(&stat))
}

/// Per-time statistics of the two-point series across replicas.
fn two_point_table(series: &[Vec<f64>], dt: f64, every: usize, file: &str) -> Table {
    let mut t = Table::new(file, "t,mean_log10_distance,max_distance,fraction_below_1e-6");
    let len = series.iter().map(|s| s.len()).min().unwrap_or(0);
    for k in (0..len).step_by(every.max(1)) {
        let ds: Vec<f64> = series.iter().map(|s| s[k]).collect();
        let mean_log = ds.iter().map(|d| d.max(1e-300).log10()).sum::<f64>() / ds.len() as f64;
        let max = ds.iter().copied().fold(0.0, f64::max);
        let below = ds.iter().filter(|d| **d <= 1e-6).count() as f64 / ds.len() as f64;
        t.push(vec![cell(k as f64 * dt), cell(mean_log), cell(max), cell(below)]);
    }
    t
}

fn subordinator_params() -> Vec<ParamSpec> {
    vec![
        num("sigma", 1.0, "noise intensity", positive),
        num("alpha", 0.5, "subordinator index in (0, 1)", subordinator_index),
        num("x", 0.75, "first initial point", any),
        num("y", 1.25, "second initial point", any),
        num("dt", 1e-2, "time step", positive),
        num("t", 40.0, "synchronization time", positive),
        num("eta", 1e-6, "synchronization tolerance", positive),
        num("reps", 200.0, "replicas", replicas),
    ]
}

fn subordinator_doublewell(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let sys = SystemSpec::cubic1d(cfg.num("sigma"));
    let ens = ensemble(cfg, vec![ChannelKind::Subordinator { alpha: cfg.num("alpha") }], Scheme::TamedEuler);
    let (x, y, t, reps) = (cfg.num("x"), cfg.num("y"), cfg.num("t"), cfg.int("reps"));
    let series = run_outcomes(reps, ens.workers, |i| {
        let path = ens.path(t, i)?;
        two_point_run(&sys, &[x], &[y], &path, ens.scheme)
    })?;
    let mut out = Output::default();
    out.count(&series);
    let finals: Vec<f64> = series.values().map(|s| *s.last().unwrap()).collect();
    let eta = cfg.num("eta");
    let stat = EnsembleStat::proportion("sync", finals.iter().filter(|d| **d <= eta).count(), finals.len());
    out.rows.push(SummaryRow::from_stat("pair_sync", format!("x={x};y={y};t={t}"), &stat, sync_label(&stat)));

    let pairs = PairSource::Fixed { x: vec![x], y: vec![y] };
    let trap = trap_contraction_rate(&sys, &pairs, &ens, t, 0.75, 1.25, reps)?;
    let bound = 2.0 * (1.0 - 3.0 * 0.75f64.powi(2));
    out.rows.push(SummaryRow::exact("trap_log_rate", "[0.75,1.25]", trap.rate, if trap.rate <= bound { "below-bound" } else { "above-bound" }));
    out.rows.push(SummaryRow::exact("trap_rate_bound", "[0.75,1.25]", bound, "-"));

    let every = (1.0 / ens.dt).round() as usize;
    let all: Vec<Vec<f64>> = series.values().cloned().collect();
    out.tables.push(two_point_table(&all, ens.dt, every, "two_point.csv"));
    Ok(out)
}

fn poisson_params() -> Vec<ParamSpec> {
    vec![
        num("sigma", 1.0, "jump size", positive),
        num("rate", 1.0, "Poisson intensity", positive),
        num("dt", 1e-2, "time step", positive),
        num("z", 1.0, "recurrence center", any),
        num("radius", 0.5, "recurrence radius", positive),
        list("t_grid", &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0], "recurrence times", positive),
        num("pair_radius", 0.25, "pairs drawn uniformly from B(z, pair_radius)", positive),
        num("t", 40.0, "synchronization time", positive),
        num("eta", 1e-6, "synchronization tolerance", positive),
        num("reps", 200.0, "replicas", replicas),
    ]
}

fn recurrence_table(t_list: &[f64], per_t: &[EnsembleStat]) -> Table {
    let mut table = Table::new("recurrence.csv", "t,proportion,ci_low,ci_high,n");
    for (t, s) in t_list.iter().zip(per_t) {
        table.push(vec![cell(*t), cell(s.mean), cell(s.ci_low), cell(s.ci_high), s.n.to_string()]);
    }
    table
}

fn sorted_grid(cfg: &ExperimentConfig, key: &str) -> Result<Vec<f64>, CliError> {
    let g = cfg.list(key).to_vec();
    if g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Invalid(format!("param `{key}` must be strictly increasing")));
    }
    Ok(g)
}

fn poisson_cubic(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let sys = SystemSpec::cubic1d(cfg.num("sigma"));
    let ens = ensemble(cfg, vec![ChannelKind::poisson(cfg.num("rate"))], Scheme::TamedEuler);
    let (z, reps) = (cfg.num("z"), cfg.int("reps"));
    let t_grid = sorted_grid(cfg, "t_grid")?;
    let query = BallQuery::recurrence(&[z], cfg.num("radius"), &[1.0], MeshPolicy::MonotoneEndpoints);
    let rec = recurrence_probability(&sys, &query, &ens, &GrowthBound::None, &t_grid, reps)?;
    let mut out = Output { blow_ups: rec.blow_ups, attempted: reps, ..Default::default() };
    let best = rec.best_stat();
    let label = if best.ci_low > 0.0 { "recurrent" } else { "not-shown" };
    out.rows.push(SummaryRow::from_stat("recurrence", format!("z={z};R={};t={}", rec.radius, rec.t_list[rec.best]), best, label));

    let pairs = PairSource::UniformBall { center: vec![z], radius: cfg.num("pair_radius") };
    let t = cfg.num("t");
    let sync = sync_probability(&sys, &pairs, &ens, t, cfg.num("eta"), reps)?;
    out.count_sync(&sync);
    out.rows.push(SummaryRow::from_stat("pair_sync", format!("t={t}"), &sync.stat, sync_label(&sync.stat)));

    let trap = trap_contraction_rate(&sys, &pairs, &ens, t, 0.75, 1.25, reps)?;
    let bound = 1.0 - 3.0 * 0.75f64.powi(2);
    out.rows.push(SummaryRow::exact("trap_log_rate", "[0.75,1.25]", trap.rate, if trap.rate <= bound { "below-bound" } else { "above-bound" }));
    out.rows.push(SummaryRow::exact("trap_rate_bound", "[0.75,1.25]", bound, "-"));

    out.tables.push(recurrence_table(&rec.t_list, &rec.per_t));
    let mut d = Table::new("sync_distances.csv", "replica,distance");
    for (i, dist) in sync.distances.iter().enumerate() {
        d.push(vec![i.to_string(), cell(*dist)]);
    }
    out.tables.push(d);
    Ok(out)
}

fn doublewell_params() -> Vec<ParamSpec> {
    vec![
        list("sigma", &[0.25, 2.0], "noise intensities", positive),
        num("d", 2.0, "total dimension", count),
        num("n", 1.0, "forced coordinates, n < d", count),
        num("dt", 1e-2, "time step", positive),
        num("t", 100.0, "synchronization time", positive),
        num("eta", 1e-6, "synchronization tolerance", positive),
        num("separation", 0.1, "distance counted as separated", positive),
        num("reps", 200.0, "replicas", replicas),
        num("verdict", 1.0, "also run the three-part verdict at 0 (0 or 1)", flag),
        num("verdict_reps", 100.0, "replicas per verdict test", replicas),
    ]
}

fn degenerate_doublewell(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let (d, n) = (cfg.int("d"), cfg.int("n"));
    if n >= d {
        return Err(CliError::Invalid("need n < d".into()));
    }
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    for i in n..d {
        x[i] = 0.5;
        y[i] = -0.5;
    }
    let pairs = PairSource::Fixed { x: x.clone(), y: y.clone() };
    let (t, eta, sep, reps) = (cfg.num("t"), cfg.num("eta"), cfg.num("separation"), cfg.int("reps"));
    let mut out = Output::default();
    let mut table = Table::new("distances.csv", "sigma,replica,distance");
    for &sigma in cfg.list("sigma") {
        let sys = SystemSpec::doublewell(d, n, sigma);
        let ens = ensemble(cfg, vec![ChannelKind::Brownian; n], Scheme::TamedEuler);
        let sync = sync_probability(&sys, &pairs, &ens, t, eta, reps)?;
        out.count_sync(&sync);
        let value = format!("{sigma}");
        out.rows.push(SummaryRow::from_stat("pair_sync", &value, &sync.stat, sync_label(&sync.stat)));
        let apart = sync.distances.iter().filter(|v| **v >= sep).count();
        let sep_stat = EnsembleStat::proportion("separated", apart, sync.distances.len());
        let all_apart = if apart == sync.distances.len() { "all-separated" } else { "some-close" };
        out.rows.push(SummaryRow::from_stat("separated", &value, &sep_stat, all_apart));
        for (i, dist) in sync.distances.iter().enumerate() {
            table.push(vec![cell(sigma), i.to_string(), cell(*dist)]);
        }
        if cfg.num("verdict") == 1.0 {
            let vc = VerdictConfig { horizon: t, n_reps: cfg.int("verdict_reps"), ..Default::default() };
            let rep = synchronization_verdict(&sys, &ens, &vec![0.0; d], &vc)?;
            out.blow_ups += rep.blow_ups;
            out.rows.extend(verdict_rows(&value, &rep));
        }
    }
    out.tables.push(table);
    Ok(out)
}

fn lorenz_common() -> Vec<ParamSpec> {
    vec![
        num("rho", 0.5, "Lorenz rho", any),
        num("sigma_l", 10.0, "Lorenz sigma", positive),
        num("beta", 8.0 / 3.0, "Lorenz beta", positive),
        num("dt", 1e-3, "time step", positive),
    ]
}

fn sweep_params() -> Vec<ParamSpec> {
    let mut p = vec![list("gamma", &[0.25, 0.5, 1.0, 1.4, 2.0, 4.0, 8.0], "noise strengths", non_negative)];
    p.extend(lorenz_common());
    p.extend([
        num("t", 50.0, "synchronization time", positive),
        num("eta", 1e-6, "synchronization tolerance", positive),
        num("radius", 10.0, "pairs drawn uniformly from B(0, radius)", positive),
        num("reps", 200.0, "pair replicas", replicas),
        num("lyap_reps", 8.0, "replicas for the top exponent", count),
        num("lyap_horizon", 500.0, "exponent estimation horizon", positive),
    ]);
    p
}

fn lorenz_gamma_sweep(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let (rho, s, beta) = (cfg.num("rho"), cfg.num("sigma_l"), cfg.num("beta"));
    let ens = ensemble(cfg, bm(), Scheme::EulerMaruyama);
    let pairs = PairSource::UniformBall { center: vec![0.0; 3], radius: cfg.num("radius") };
    let mut out = Output::default();
    let threshold = (1.0 - rho) * (PI * beta).sqrt();
    out.rows.push(SummaryRow::exact("threshold", format!("rho={rho};beta={beta}"), threshold, "-"));
    let mut table = Table::new("sweep.csv", "gamma,sync,sync_ci_low,sync_ci_high,lambda_top,lambda_stderr");
    let mut lyap_tables = Table::new("lyapunov.csv", "gamma,replica,lambda_top,stderr,heavy_tail_warning");
    for &gamma in cfg.list("gamma") {
        let sys = SystemSpec::lorenz63(s, rho, beta, gamma);
        let sync = sync_probability(&sys, &pairs, &ens, cfg.num("t"), cfg.num("eta"), cfg.int("reps"))?;
        out.count_sync(&sync);
        let est = top_exponents(&sys, &[1.0, 1.0, 1.0], &ens, cfg.num("lyap_horizon"), cfg.int("lyap_reps"))?;
        out.count(&est);
        let top = pooled_top(&est);
        let value = format!("{gamma}");
        out.rows.push(SummaryRow::from_stat("pair_sync", &value, &sync.stat, sync_label(&sync.stat)));
        out.rows.push(SummaryRow::from_stat("lambda_top", &value, &top, sign_label(&top)));
        table.push(vec![cell(gamma), cell(sync.stat.mean), cell(sync.stat.ci_low), cell(sync.stat.ci_high), cell(top.mean), cell(top.stderr)]);
        lyap_tables.rows.extend(lyapunov_rows(&est, gamma));
    }
    out.tables.push(table);
    out.tables.push(lyap_tables);
    Ok(out)
}

fn absorbing_params() -> Vec<ParamSpec> {
    let mut p = lorenz_common();
    p.extend([
        num("gamma_max", 2.0, "gamma drawn uniformly from [0, gamma_max] per run", non_negative),
        num("lambda", 1.0, "OU mean-reversion rate of the conjugation", positive),
        num("horizon", 20.0, "run length", positive),
        num("radius", 10.0, "initial states uniform in B(0, radius)", positive),
        num("reps", 100.0, "runs", count),
    ]);
    p
}

fn lorenz_absorbing(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let (rho, s, beta, lambda) = (cfg.num("rho"), cfg.num("sigma_l"), cfg.num("beta"), cfg.num("lambda"));
    let (gmax, horizon, radius) = (cfg.num("gamma_max"), cfg.num("horizon"), cfg.num("radius"));
    let ens = ensemble(cfg, bm(), Scheme::EulerMaruyama);
    let res = run_outcomes(cfg.int("reps"), ens.workers, |i| {
        let mut rng = stream_rng(ens.master_seed, i, Purpose::InitialPoints);
        let gamma = gmax * rng.random::<f64>();
        let x0: Vec<f64> = uniform_in_unit_ball(3, &mut rng).iter().map(|v| radius * v).collect();
        let path = ens.path(horizon, i)?;
        let ou = Arc::new(ou_from_path(&path, 0, lambda, gamma)?);
        let sys = SystemSpec::lorenz63_conjugated(s, rho, beta, lambda).with_aux(ou.clone())?;
        let traj = integrate(&sys, &x0, &path, ens.scheme)?;
        Ok((gamma, lorenz_absorbing_check(&traj, &ou, rho, s, beta, lambda)?))
    })?;
    let mut out = Output::default();
    out.count(&res);
    let mut table = Table::new("absorbing.csv", "run,gamma,n_checked,violations,max_margin,tolerance");
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for (i, (gamma, r)) in &res.ok {
        violations += r.violations;
        worst = worst.max(r.max_margin / r.tolerance);
        table.push(vec![i.to_string(), cell(*gamma), r.n_checked.to_string(), r.violations.to_string(), cell(r.max_margin), cell(r.tolerance)]);
    }
    let runs = res.ok.len();
    let mut row = SummaryRow::exact("violations", format!("runs={runs}"), violations as f64, pass(violations == 0));
    row.n = runs;
    out.rows.push(row);
    out.rows.push(SummaryRow::exact("max_margin_over_tolerance", format!("runs={runs}"), worst, pass(worst <= 0.0)));
    out.tables.push(table);
    Ok(out)
}

fn recurrence_params() -> Vec<ParamSpec> {
    let mut p = lorenz_common();
    p.extend([
        num("gamma", 0.5, "noise strength", non_negative),
        num("radius", 5.0, "ball radius in the weighted metric", positive),
        list("t_grid", &(1..=20).map(f64::from).collect::<Vec<_>>(), "recurrence times", positive),
        num("reps", 400.0, "replicas", replicas),
        num("drift_lambda", 0.25, "rate for the monotone-at-origin drift check", any),
        num("drift_radius", 50.0, "weighted radius of the drift check region", positive),
        num("drift_pairs", 20000.0, "random samples for the drift check", count),
    ]);
    p
}

fn lorenz_recurrence(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let (rho, s, beta) = (cfg.num("rho"), cfg.num("sigma_l"), cfg.num("beta"));
    let sys = SystemSpec::lorenz63(s, rho, beta, cfg.num("gamma"));
    let weights = [1.0 / s, 1.0, 1.0];
    let ens = ensemble(cfg, bm(), Scheme::EulerMaruyama);
    let mut out = Output::default();

    let cond = DriftCondition::MonotoneAtPoint { z: vec![0.0; 3], lambda: cfg.num("drift_lambda") };
    let region = Region::Ball { center: vec![0.0; 3], radius: cfg.num("drift_radius") };
    let report = verify_drift_condition(&sys, &cond, &weights, &region, cfg.int("drift_pairs"), cfg.seed)?;
    out.rows.push(SummaryRow::exact(
        "drift_worst_margin",
        format!("lambda={};R={}", cfg.num("drift_lambda"), cfg.num("drift_radius")),
        report.worst_margin,
        pass(report.pass),
    ));

    let t_grid = sorted_grid(cfg, "t_grid")?;
    let query = BallQuery::recurrence(&[0.0; 3], cfg.num("radius"), &weights, MeshPolicy::CenterOnly);
    let reps = cfg.int("reps");
    let rec = recurrence_probability(&sys, &query, &ens, &GrowthBound::Anchored, &t_grid, reps)?;
    out.blow_ups += rec.blow_ups;
    out.attempted += reps;
    for (t, st) in rec.t_list.iter().zip(&rec.per_t) {
        out.rows.push(SummaryRow::from_stat("recurrence", format!("t={t}"), st, if st.ci_low > 0.0 { "recurrent" } else { "not-shown" }));
    }
    let best = rec.best_stat();
    out.rows.push(SummaryRow::from_stat(
        "recurrence_best",
        format!("t={}", rec.t_list[rec.best]),
        best,
        if best.ci_low > 0.0 { "recurrent" } else { "not-shown" },
    ));
    out.tables.push(recurrence_table(&rec.t_list, &rec.per_t));
    Ok(out)
}

fn threshold_params() -> Vec<ParamSpec> {
    let mut p = vec![list("gamma", &[0.5, 1.0, 1.4], "noise strengths", non_negative)];
    p.extend(lorenz_common());
    p.extend([
        num("horizon", 5000.0, "length of each stationary OU path", positive),
        num("batches", 20.0, "batch count for standard errors", count),
        num("marginal_gamma", 0.5, "noise strength for the invariant-marginal check", non_negative),
        num("marginal_horizon", 5000.0, "chain length for the marginal check (0 skips it)", non_negative),
    ]);
    p
}

fn lorenz_threshold_stats(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let (rho, s, beta, dt) = (cfg.num("rho"), cfg.num("sigma_l"), cfg.num("beta"), cfg.num("dt"));
    let batches = cfg.int("batches");
    let mut out = Output::default();
    let mut table = Table::new("threshold.csv", "gamma,estimate,stderr,exact,upper_bound");
    for (j, &gamma) in cfg.list("gamma").iter().enumerate() {
        let ou = sample_ou_stationary(TimeGrid::horizon(cfg.num("horizon"), dt)?, beta, gamma, cfg.seed, j as u64)?;
        let series: Vec<f64> = ou.values.iter().map(|o| (rho + 1.0 - o).abs() - 2.0).collect();
        let stat = ergodic_average(&series, (series.len() / batches).max(1))?;
        let exact = folded_normal_mean(rho + 1.0, gamma / (2.0 * beta).sqrt()) - 2.0;
        let bound = rho - 1.0 + (gamma * gamma / (PI * beta)).sqrt();
        let value = format!("{gamma}");
        let within = (stat.mean - exact).abs() <= 3.0 * stat.stderr;
        out.rows.push(SummaryRow::from_stat("time_average", &value, &stat, if within { "matches-exact" } else { "differs-from-exact" }));
        out.rows.push(SummaryRow::exact("folded_normal_exact", &value, exact, "-"));
        out.rows.push(SummaryRow::exact("upper_bound", &value, bound, if bound >= stat.mean { "bounds-estimate" } else { "below-estimate" }));
        table.push(vec![cell(gamma), cell(stat.mean), cell(stat.stderr), cell(exact), cell(bound)]);
    }
    out.tables.push(table);

    let mh = cfg.num("marginal_horizon");
    if mh > 0.0 {
        let gamma = cfg.num("marginal_gamma");
        let sys = SystemSpec::lorenz63(s, rho, beta, gamma);
        let ens = ensemble(cfg, bm(), Scheme::EulerMaruyama);
        let burn = 50.0f64.min(mh / 2.0);
        let thin = 10;
        let n = (((mh - burn) / (dt * thin as f64)).round() as usize).max(batches);
        let cloud = sample_invariant(&sys, &ens, &[1.0, 1.0, 1.0], burn, n, thin, 0)?;
        out.attempted += 1;
        let x2 = cloud.average("E[x^2]", batches, |x| x[0] * x[0])?;
        let y2 = cloud.average("E[y^2]", batches, |x| x[1] * x[1])?;
        let zm = cloud.coordinate(2).iter().sum::<f64>() / cloud.len() as f64;
        let zv = cloud.average("Var[z]", batches, |x| (x[2] - zm) * (x[2] - zm))?;
        let target = gamma * gamma / (2.0 * beta);
        let value = format!("{gamma}");
        out.rows.push(SummaryRow::from_stat("marginal_x2", &value, &x2, pass(x2.mean <= 1e-6)));
        out.rows.push(SummaryRow::from_stat("marginal_y2", &value, &y2, pass(y2.mean <= 1e-6)));
        out.rows.push(SummaryRow::from_stat("marginal_z_var", &value, &zv, pass((zv.mean - target).abs() <= 3.0 * zv.stderr)));
        out.rows.push(SummaryRow::exact("marginal_z_var_target", &value, target, "-"));
    }
    Ok(out)
}
