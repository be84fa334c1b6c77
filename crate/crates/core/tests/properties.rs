use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use rds_lab_core::integrate::{integrate, integrate_terminal, norm, tangent_map, Scheme};
use rds_lab_core::measures::{ball_mass, folded_normal_mean, SampleCloud};
use rds_lab_core::noise::{ou_from_path, sample_path, ChannelKind, TimeGrid};
use rds_lab_core::streams::{stream_rng, Purpose};
use rds_lab_core::systems::uniform_in_unit_ball;
use rds_lab_core::{build_system, RdsError, SystemSpec};

fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn all_systems() -> Vec<SystemSpec> {
    let path = sample_path(&[ChannelKind::Brownian], TimeGrid::horizon(1.0, 1e-2).unwrap(), 1, 0).unwrap();
    let ou = Arc::new(ou_from_path(&path, 0, 2.0, 1.0).unwrap());
    vec![
        SystemSpec::lorenz63(10.0, 28.0, 8.0 / 3.0, 1.0),
        SystemSpec::lorenz63_conjugated(10.0, 0.5, 8.0 / 3.0, 2.0).with_aux(ou).unwrap(),
        SystemSpec::doublewell(3, 1, 1.0),
        SystemSpec::cubic1d(1.0),
        SystemSpec::geometric1d(),
        build_system("gradient1d", &params(&[("v1", 0.3), ("v2", -1.0), ("v3", 0.2), ("v4", 0.5), ("sigma", 1.0)])).unwrap(),
        build_system("linear_d", &params(&[("d", 2.0), ("a_0_0", -1.0), ("a_0_1", 3.0), ("a_1_0", -2.0), ("a_1_1", 0.5), ("sigma", 1.0)]))
            .unwrap(),
    ]
}

#[test]
fn drift_jacobians_match_central_differences() {
    let mut rng = stream_rng(3, 0, Purpose::Auxiliary(1));
    for sys in all_systems() {
        let d = sys.dim();
        let mut fx = vec![0.0; d];
        let mut fy = vec![0.0; d];
        let mut jac = vec![0.0; d * d];
        for _ in 0..100 {
            let x: Vec<f64> = uniform_in_unit_ball(d, &mut rng).iter().map(|v| 10.0 * v).collect();
            let k = 37;
            sys.jacobian_at(k, &x, &mut jac);
            for l in 0..d {
                let h = 1e-5 * (1.0 + x[l].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[l] += h;
                xm[l] -= h;
                sys.drift_at(k, &xp, &mut fx);
                sys.drift_at(k, &xm, &mut fy);
                for i in 0..d {
                    let fd = (fx[i] - fy[i]) / (2.0 * h);
                    let exact = jac[i * d + l];
                    assert!(
                        (fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()),
                        "{} J[{i}][{l}] at {x:?}: {exact} vs {fd}",
                        sys.name()
                    );
                }
            }
        }
    }
}

#[test]
fn conjugated_lorenz_tracks_the_original() {
    // z = Z + O with O driven by the same Brownian increments
    let (sigma, rho, beta, gamma, lambda) = (10.0, 0.5, 8.0 / 3.0, 0.8, 1.5);
    let x0 = [3.0, -2.0, 5.0];
    let mut errors = Vec::new();
    for dt in [1e-3, 1e-4] {
        let path = sample_path(&[ChannelKind::Brownian], TimeGrid::horizon(10.0, dt).unwrap(), 8, 0).unwrap();
        let ou = Arc::new(ou_from_path(&path, 0, lambda, gamma).unwrap());
        let conj = SystemSpec::lorenz63_conjugated(sigma, rho, beta, lambda).with_aux(ou.clone()).unwrap();
        let orig = SystemSpec::lorenz63(sigma, rho, beta, gamma);
        let start = [x0[0], x0[1], x0[2] - ou.value(0)];
        let a = integrate(&orig, &x0, &path, Scheme::EulerMaruyama).unwrap();
        let b = integrate(&conj, &start, &path, Scheme::EulerMaruyama).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..a.len() {
            let (p, q) = (a.state(k), b.state(k));
            let back = [q[0], q[1], q[2] + ou.value(k)];
            for i in 0..3 {
                worst = worst.max((p[i] - back[i]).abs());
            }
        }
        assert!(worst <= 50.0 * dt, "dt {dt}: gap {worst}");
        errors.push(worst);
    }
    assert!(errors[1] < errors[0]);
}

#[test]
fn tamed_cubic_survives_large_starts_and_steps() {
    let sys = SystemSpec::cubic1d(1.0);
    let path = sample_path(&[ChannelKind::Stable { alpha: 1.2 }], TimeGrid::horizon(50.0, 0.1).unwrap(), 4, 0).unwrap();
    for x0 in [1e3, -1e6, 1e8] {
        let end = integrate_terminal(&sys, &[x0], &path, Scheme::TamedEuler).unwrap();
        assert!(end[0].is_finite());
    }
    let euler = integrate_terminal(&sys, &[1e6], &path, Scheme::EulerMaruyama);
    assert!(matches!(euler, Err(RdsError::BlowUp { .. })));
}

#[test]
fn tangent_map_predicts_perturbed_lorenz_flow() {
    let sys = SystemSpec::lorenz63(10.0, 28.0, 8.0 / 3.0, 1.0);
    let path = sample_path(&[ChannelKind::Brownian], TimeGrid::horizon(1.0, 1e-3).unwrap(), 21, 0).unwrap();
    let x0 = [1.0, 2.0, 20.0];
    for scheme in [Scheme::EulerMaruyama, Scheme::LorenzSplitting] {
        let (end, jac) = tangent_map(&sys, &x0, &path, scheme).unwrap();
        let mut rng = stream_rng(21, 0, Purpose::Auxiliary(3));
        for _ in 0..10 {
            let u = uniform_in_unit_ball(3, &mut rng);
            let delta: Vec<f64> = u.iter().map(|v| 1e-6 * v / norm(&u)).collect();
            let start: Vec<f64> = x0.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let moved = integrate_terminal(&sys, &start, &path, scheme).unwrap();
            let residual: Vec<f64> = (0..3)
                .map(|i| moved[i] - end[i] - (0..3).map(|j| jac[i * 3 + j] * delta[j]).sum::<f64>())
                .collect();
            assert!(norm(&residual) <= 1e-4 * 1e-6, "{} residual {}", scheme.name(), norm(&residual));
        }
    }
}

#[test]
fn tamed_cubic_ensemble_never_blows_up() {
    let sys = SystemSpec::cubic1d(1.0);
    for (j, kind) in [ChannelKind::Brownian, ChannelKind::Stable { alpha: 1.5 }, ChannelKind::poisson(1.0)].into_iter().enumerate() {
        for rep in 0..20u64 {
            let path = sample_path(&[kind], TimeGrid::horizon(100.0, 0.01).unwrap(), 60 + j as u64, rep).unwrap();
            let x0 = -10.0 + rep as f64;
            let end = integrate_terminal(&sys, &[x0], &path, Scheme::TamedEuler).unwrap();
            assert!(end[0].is_finite());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_composes(seed in 0u64..1000, j in 0usize..200, k in 0usize..200) {
        let kinds = [ChannelKind::Brownian, ChannelKind::Subordinator { alpha: 0.6 }];
        let path = sample_path(&kinds, TimeGrid::horizon(5.0, 0.01).unwrap(), seed, 3).unwrap();
        let a = path.shift_path(j).unwrap().shift_path(k).unwrap();
        let b = path.shift_path(j + k).unwrap();
        prop_assert_eq!(a.values(), b.values());
        prop_assert_eq!(a.n_steps(), b.n_steps());
        prop_assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn cocycle_holds_bitwise(seed in 0u64..1000, split in 0usize..=500, x in -5.0f64..5.0) {
        let sys = SystemSpec::doublewell(2, 1, 1.0);
        let path = sample_path(&[ChannelKind::Brownian], TimeGrid::horizon(5.0, 0.01).unwrap(), seed, 0).unwrap();
        let full = integrate_terminal(&sys, &[x, 0.5], &path, Scheme::TamedEuler).unwrap();
        let mid = integrate_terminal(&sys, &[x, 0.5], &path.truncate(split).unwrap(), Scheme::TamedEuler).unwrap();
        let end = integrate_terminal(&sys, &mid, &path.shift_path(split).unwrap(), Scheme::TamedEuler).unwrap();
        prop_assert_eq!(full, end);
    }

    #[test]
    fn folded_normal_bounds(c in -5.0f64..5.0, s in 0.01f64..5.0, ds in 0.0f64..2.0) {
        let m = folded_normal_mean(c, s);
        let spread = s * (2.0 / std::f64::consts::PI).sqrt();
        prop_assert!(m >= c.abs() - 1e-12);
        prop_assert!(m >= spread - 1e-12);
        prop_assert!(m <= c.abs() + spread + 1e-12);
        prop_assert!(folded_normal_mean(c, s + ds) >= m - 1e-12);
    }

    #[test]
    fn ball_mass_grows_with_radius(seed in 0u64..1000, r in 0.0f64..3.0, dr in 0.0f64..3.0) {
        let mut rng = stream_rng(seed, 0, Purpose::Auxiliary(2));
        let samples: Vec<f64> = (0..200).flat_map(|_| uniform_in_unit_ball(2, &mut rng).into_iter().map(|v| 3.0 * v)).collect();
        let cloud = SampleCloud::from_samples(2, samples).unwrap();
        let small = ball_mass(&cloud, &[0.0, 0.0], r).unwrap();
        let large = ball_mass(&cloud, &[0.0, 0.0], r + dr).unwrap();
        prop_assert!(large.mean >= small.mean);
    }
}
