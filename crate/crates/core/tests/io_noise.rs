mod common;

use apms::io_noise::{add_awgn, format_series, parse_series, read_json, read_series, write_json, write_series};
use apms::{estimate_block, run_blocks, synthesize, ApmsError, BlockSettings, EstimatorConfig, Model, Params, Report, Series};
use proptest::prelude::*;

fn temp(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("apms-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn report_json_is_bit_exact() {
    let x: Series = synthesize(&Params::table1(), -125, 251).unwrap();
    let r = estimate_block(&x, &EstimatorConfig::default()).unwrap();
    let path = temp("report.json");
    write_json(&r, &path).unwrap();
    let back: Report = read_json(&path).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.params.theta.to_bits(), r.params.theta.to_bits());
}

#[test]
fn model_json_is_bit_exact() {
    let x: Series = synthesize(&Params::table1(), 0, 753).unwrap();
    let run = run_blocks(&x, &BlockSettings { block_length: 251, hop: 251, degree: 1 }, &EstimatorConfig::default()).unwrap();
    let path = temp("model.json");
    write_json(&run.fit.model, &path).unwrap();
    let back: Model = read_json(&path).unwrap();
    assert_eq!(back, run.fit.model);
    let bits = |m: &Model| m.omega_c.coefficients.iter().map(|c| c.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&run.fit.model));
}

#[test]
fn unwritable_path_is_io() {
    let x = Series::new(vec![1.0, 2.0], 0).unwrap();
    let e = write_series(&x, "/nonexistent-dir/sub/out.csv").unwrap_err();
    assert!(matches!(e, ApmsError::Io(_)) && e.is_io());
    assert!(read_series::<f64>("/nonexistent-dir/in.csv").unwrap_err().is_io());
    assert!(write_json(&Params::table1(), "/nonexistent-dir/p.json").unwrap_err().is_io());
}

#[test]
fn malformed_json_is_parse_error() {
    let path = temp("bad.json");
    std::fs::write(&path, "{\n\"amplitude\": oops}").unwrap();
    assert!(matches!(read_json::<Params>(&path), Err(ApmsError::Parse { row: 2, .. })));
}

#[test]
fn noise_keeps_shape() {
    let x: Series = synthesize(&Params::table1(), -40, 81).unwrap().with_rate(256.0);
    let y = add_awgn(&x, 10.0, 9).unwrap();
    assert_eq!(y.len(), x.len());
    assert_eq!(y.start_index, x.start_index);
    assert_eq!(y.sample_rate, x.sample_rate);
    assert_ne!(y.values, x.values);
}

proptest! {
    #[test]
    fn csv_round_trip(values in prop::collection::vec(-1e6f64..1e6, 1..50), start in -1000i64..1000) {
        let x = Series::new(values, start).unwrap();
        let path = temp(&format!("s{start}.csv"));
        write_series(&x, &path).unwrap();
        let back: Series = read_series(&path).unwrap();
        prop_assert_eq!(back.start_index, x.start_index);
        prop_assert_eq!(back.len(), x.len());
        for (a, b) in back.values.iter().zip(&x.values) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
        let again: Series = parse_series(&format_series(&back)).unwrap();
        prop_assert_eq!(again, back);
    }

    #[test]
    fn noise_is_seeded(seed in any::<u64>(), snr in -10.0f64..40.0) {
        let x: Series = synthesize(&Params::table1(), 0, 32).unwrap();
        prop_assert_eq!(add_awgn(&x, snr, seed).unwrap(), add_awgn(&x, snr, seed).unwrap());
    }
}
