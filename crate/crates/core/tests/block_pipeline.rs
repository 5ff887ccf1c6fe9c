mod common;

use apms::block_pipeline::{estimate_blocks, fit_polynomial, regenerate_blockwise};
use apms::{
    estimate_block, plan_blocks, reconstruction_error, regenerate, run_blocks, synthesize, synthesize_time_varying,
    BlockSettings, EstimatorConfig, Model, ParamPolynomial, Params, Series,
};
use proptest::prelude::*;

/// AM-only parameters that 41-sample blocks can represent.
fn am_only() -> Params {
    Params { amplitude: 2.0, theta: 0.3, omega_c: 1.2, omega_a: 0.3, omega_p: 0.05, k_a: 0.3, k_p: 0.0, theta_a: 0.5, theta_b: 0.2, s: 0.8, r: 1.0 }
}

fn drifting_record() -> Series {
    let p = am_only();
    let c = ParamPolynomial::constant;
    let model = Model::new(
        [
            ParamPolynomial { coefficients: vec![2.0, 0.002] },
            c(p.theta),
            ParamPolynomial { coefficients: vec![1.2, 1e-4] },
            c(p.omega_a),
            c(p.omega_p),
            c(p.k_a),
            c(p.k_p),
            c(p.theta_a),
            c(p.theta_b),
            c(p.s),
            c(p.r),
        ],
        vec![20, 778],
        41,
    )
    .unwrap();
    synthesize_time_varying(&model, 0, 799).unwrap()
}

fn assert_blocks_round_trip(x: &Series, block_length: usize) {
    let plan = plan_blocks(x.len(), block_length, block_length).unwrap();
    let out = estimate_blocks(x, &plan, &EstimatorConfig::default()).unwrap();
    assert_eq!(out.len(), 5);
    for (i, o) in out.iter().enumerate() {
        let r = o.report.as_ref().unwrap();
        let block = x.slice(plan.start(i), block_length).unwrap();
        let back = synthesize(&r.params, block.start_index, block_length).unwrap();
        assert!(reconstruction_error(&block, &back).unwrap() < 1e-3, "block {i}");
    }
    let whole = regenerate_blockwise(&out, block_length, 0, x.len()).unwrap();
    assert!(reconstruction_error(x, &whole).unwrap() < 1e-3);
}

#[test]
fn stationary_blocks_round_trip() {
    assert_blocks_round_trip(&synthesize(&Params::table1(), 0, 5 * 251).unwrap(), 251);
    assert_blocks_round_trip(&synthesize(&am_only(), 0, 5 * 41).unwrap(), 41);
}

#[test]
fn degree_zero_model_of_table1() {
    let x: Series = synthesize(&Params::table1(), 0, 5 * 251).unwrap();
    let settings = BlockSettings { block_length: 251, hop: 251, degree: 0 };
    let run = run_blocks(&x, &settings, &EstimatorConfig::default()).unwrap();
    assert_eq!(run.plan.len(), 5);
    assert!(run.failed.is_empty());
    let back = regenerate(&run.fit.model, 5 * 251).unwrap();
    assert!(!back.extrapolated);
    assert!(reconstruction_error(&x, &back.series).unwrap() < 1e-3);
}

#[test]
fn degree_zero_stationary_cosine() {
    let x: Series = synthesize(&Params::cosine(1.0, 0.9, -0.4), 0, 123).unwrap();
    let run = run_blocks(&x, &BlockSettings { block_length: 41, hop: 41, degree: 0 }, &EstimatorConfig::default()).unwrap();
    let back = regenerate(&run.fit.model, 123).unwrap();
    assert!(reconstruction_error(&x, &back.series).unwrap() < 1e-3);
}

#[test]
fn amplitude_slope() {
    let x = drifting_record();
    let run = run_blocks(&x, &BlockSettings { block_length: 41, hop: 41, degree: 1 }, &EstimatorConfig::default()).unwrap();
    let slope = run.fit.model.amplitude.coefficients[1];
    assert!((slope / 0.002 - 1.0).abs() < 0.05, "slope {slope}");
}

#[test]
fn blocks_are_independent() {
    let mut x = drifting_record();
    let plan = plan_blocks(x.len(), 41, 41).unwrap();
    let config = EstimatorConfig::default();
    let a = estimate_blocks(&x, &plan, &config).unwrap();
    let alone = estimate_block(&x.slice(plan.start(3), 41).unwrap(), &config).unwrap();
    assert_eq!(a[3].report.as_ref().unwrap(), &alone);
    // changing samples outside block 3 leaves its estimate untouched
    for (i, v) in x.values.iter_mut().enumerate() {
        if i < plan.start(3) || i >= plan.start(3) + 41 {
            *v = -*v * 0.5;
        }
    }
    let b = estimate_blocks(&x, &plan, &config).unwrap();
    assert_eq!(a[3].report, b[3].report);
}

proptest! {
    #[test]
    fn polynomial_residual_is_non_increasing(
        y in prop::collection::vec(-5.0f64..5.0, 8..20),
        offset in -1000i64..1000,
    ) {
        let x: Vec<f64> = (0..y.len() as i64).map(|i| (offset + 41 * i) as f64).collect();
        let mut last = f64::INFINITY;
        for degree in 0..=4 {
            let p = fit_polynomial(&x, &y, degree).unwrap();
            let rss: f64 = x.iter().zip(&y).map(|(&t, &v)| (v - p.eval(t)).powi(2)).sum();
            prop_assert!(rss <= last + 1e-9 * (1.0 + last.min(1e6)), "degree {}: {} > {}", degree, rss, last);
            last = rss;
        }
    }
}
