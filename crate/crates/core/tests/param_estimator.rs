mod common;

use std::f64::consts::PI;

use apms::{add_awgn, estimate_block, synthesize, ApmsError, EstimatorConfig, Params, Series};
use proptest::prelude::*;

fn estimate(x: &Series) -> apms::Report {
    estimate_block(x, &EstimatorConfig::default()).unwrap()
}

#[test]
fn random_draws_round_trip() {
    let mut rng = common::rng(77);
    let draws: Vec<Params> = (0..50).map(|_| common::draw_params(&mut rng, 3)).collect();
    let outcomes: Vec<Result<f64, ApmsError>> = std::thread::scope(|s| {
        let handles: Vec<_> = draws
            .chunks(10)
            .map(|c| {
                s.spawn(move || {
                    c.iter()
                        .map(|p| {
                            let x: Series = synthesize(p, -125, 251)?;
                            estimate_block(&x, &EstimatorConfig::default()).map(|r| r.residual_nrmse)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    let good = outcomes.iter().filter(|r| matches!(r, Ok(e) if *e < 1e-3)).count();
    assert!(good >= 48, "{good}/50: {outcomes:?}");
}

#[test]
fn table1_noiseless() {
    let truth = Params::table1();
    let r = estimate(&synthesize(&truth, -125, 251).unwrap());
    let e = common::errors(&r.params, &truth);
    for (i, name) in common::ERROR_NAMES.iter().enumerate() {
        let tol = if i < 3 { 1e-4 } else { 1e-3 };
        assert!(e[i] <= tol, "{name}: {}", e[i]);
    }
    assert!(!r.diagnostics.no_am);
}

#[test]
fn table1_at_20_db() {
    let truth = Params::table1();
    let clean: Series = synthesize(&truth, -125, 251).unwrap();
    let r = estimate(&add_awgn(&clean, 20.0, 3).unwrap());
    let e = common::errors(&r.params, &truth);
    assert!(e[..3].iter().all(|&v| v < 5e-3), "{e:?}");
    assert!(e[3] < 0.05 && e[7..].iter().all(|&v| v < 0.15), "{e:?}");
    assert!(e[4..7].iter().all(|&v| v < 0.2), "{e:?}");
}

#[test]
fn pure_cosine_flags_missing_am() {
    let x: Series = synthesize(&Params::cosine(2.0, 1.1, 0.4), -60, 121).unwrap();
    let r = estimate(&x);
    assert!(r.diagnostics.no_am);
    assert_eq!(r.params.k_a, 0.0);
    assert!((r.params.omega_c - 1.1).abs() < 1e-6);
    assert!((r.params.amplitude - 2.0).abs() < 1e-6);
    assert!(r.residual_nrmse < 1e-6);
}

#[test]
fn scale_equivariance() {
    let truth = Params::table1();
    let x: Series = synthesize(&truth, -125, 251).unwrap();
    let base = estimate(&x).params;
    for c in [1e-2, 7.5, 1e3] {
        let y = Series::new(x.values.iter().map(|v| v * c).collect(), x.start_index).unwrap();
        let p = estimate(&y).params;
        assert!((p.amplitude / (c * base.amplitude) - 1.0).abs() <= 1e-6);
        let pairs = [
            (p.omega_c, base.omega_c),
            (p.omega_a, base.omega_a),
            (p.omega_p, base.omega_p),
            (p.k_a, base.k_a),
            (p.k_p, base.k_p),
            (p.s, base.s),
            (p.theta, base.theta),
            (p.theta_a, base.theta_a),
            (p.theta_b, base.theta_b),
        ];
        for (a, b) in pairs {
            assert!((a - b).abs() <= 1e-6, "scale {c}: {a} vs {b}");
        }
    }
}

#[test]
fn typed_rejections() {
    let x: Series = synthesize(&Params::table1(), 0, 250).unwrap();
    assert!(matches!(estimate_block(&x, &EstimatorConfig::default()), Err(ApmsError::InvalidArgument(_))));
    let z = Series::new(vec![0.0; 101], 0).unwrap();
    assert!(estimate_block(&z, &EstimatorConfig::default()).is_err());
    let bad = EstimatorConfig { grid_size: 10, ..EstimatorConfig::default() };
    let x: Series = synthesize(&Params::table1(), 0, 251).unwrap();
    assert!(matches!(estimate_block(&x, &bad), Err(ApmsError::InvalidArgument(_))));
}

#[test]
fn single_precision_estimate() {
    let truth: apms::ApmsParams<f32> = apms::ApmsParams::table1();
    let x = synthesize(&truth, -125, 251).unwrap();
    let r = estimate_block(&x, &EstimatorConfig::default()).unwrap();
    assert!((r.params.omega_c - truth.omega_c).abs() < 1e-3);
    assert!(r.residual_nrmse < 1e-2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn phases_are_wrapped(seed in any::<u64>(), snr in prop::option::of(5.0f64..30.0)) {
        let mut rng = common::rng(seed);
        let p = common::draw_params(&mut rng, 2);
        let mut x: Series = synthesize(&p, -100, 201).unwrap();
        if let Some(db) = snr {
            x = add_awgn(&x, db, seed).unwrap();
        }
        if let Ok(r) = estimate_block(&x, &EstimatorConfig::default()) {
            for ph in [r.params.theta, r.params.theta_a, r.params.theta_b] {
                prop_assert!(ph > -PI && ph <= PI, "{}", ph);
            }
        }
    }
}
