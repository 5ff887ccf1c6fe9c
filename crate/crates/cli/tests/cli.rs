use std::path::PathBuf;
use std::process::{Command, Output};

use apms::{read_series, reconstruction_error, synthesize_time_varying, Model, ParamPolynomial, Series};

fn apms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apms")).args(args).output().unwrap()
}

fn scratch(test: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("apms-cli-{test}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn p(dir: &std::path::Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn noisy_synth_is_reproducible_and_tagged() {
    let d = scratch("noise");
    let (a, b) = (p(&d, "a.csv"), p(&d, "b.csv"));
    assert!(apms(&["synth", "--snr", "20", "--seed", "7", "--out", &a]).status.success());
    assert!(apms(&["synth", "--snr", "20", "--seed", "7", "--out", &b]).status.success());
    let ta = std::fs::read_to_string(&a).unwrap();
    assert_eq!(ta, std::fs::read_to_string(&b).unwrap());
    assert!(ta.contains("# seed=7") && ta.contains("# snr_db=20"));
    let x: Series = read_series(&a).unwrap();
    assert_eq!(x.len(), 251);
}

#[test]
fn stdout_when_no_out() {
    let o = apms(&["synth", "--n", "5", "--start=-2"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("index,value\n-2,"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn psd_rows() {
    let d = scratch("psd");
    let (x, out) = (p(&d, "x.csv"), p(&d, "psd.csv"));
    assert!(apms(&["synth", "--out", &x]).status.success());
    assert!(apms(&["psd", "--in", &x, "--product", "--grid", "1024", "--out", &out]).status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "omega,psd");
    assert_eq!(rows.len(), 1025);
    assert!(rows[1..].iter().all(|r| r.split(',').nth(1).unwrap().parse::<f64>().unwrap() >= 0.0));
    assert_eq!(apms(&["psd", "--in", &x, "--grid", "10"]).status.code(), Some(2));
}

#[test]
fn blocks_then_regen() {
    let d = scratch("blocks");
    let c = ParamPolynomial::constant;
    let model = Model::new(
        [
            ParamPolynomial { coefficients: vec![2.0, 0.002] },
            c(0.3),
            ParamPolynomial { coefficients: vec![1.2, 1e-4] },
            c(0.3),
            c(0.05),
            c(0.3),
            c(0.0),
            c(0.5),
            c(0.2),
            c(0.8),
            c(1.0),
        ],
        vec![20, 778],
        41,
    )
    .unwrap();
    let (spec, x, fitted, report, regen) =
        (p(&d, "truth.json"), p(&d, "x.csv"), p(&d, "model.json"), p(&d, "run.json"), p(&d, "regen.csv"));
    apms::io_noise::write_json(&model, &spec).unwrap();
    assert!(apms(&["synth", "--in", &spec, "--n", "799", "--out", &x]).status.success());
    let truth = synthesize_time_varying(&model, 0, 799).unwrap();
    let written: Series = read_series(&x).unwrap();
    assert_eq!(written, truth);

    let o = apms(&["blocks", "--in", &x, "--poly-degree", "1", "--out", &fitted, "--report", &report]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = apms(&["regen", "--model", &fitted, "--n", "799", "--out", &regen, "--reference", &x]);
    assert!(o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nrmse") && err.contains("extrapolated"), "{err}");
    let back: Series = read_series(&regen).unwrap();
    assert!(reconstruction_error(&truth, &back).unwrap() < 0.05);

    let o = apms(&["blocks", "--in", &x, "--sweep-block-len"]);
    assert!(o.status.success());
    let sweep: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(sweep["scores"].as_array().unwrap().len(), 5);
}

#[test]
fn exit_codes() {
    let d = scratch("codes");
    let x = p(&d, "x.csv");
    assert!(apms(&["synth", "--out", &x]).status.success());
    assert_eq!(apms(&["estimate", "--in", &p(&d, "nope.csv")]).status.code(), Some(1));
    assert_eq!(apms(&["synth", "--out", "/nonexistent-apms/x.csv"]).status.code(), Some(1));
    assert_eq!(apms(&["estimate"]).status.code(), Some(2));
    assert_eq!(apms(&["estimate", "--in", &x, "--prominence", "2"]).status.code(), Some(2));
    assert_eq!(apms(&["blocks", "--in", &x, "--block-len", "40"]).status.code(), Some(2));
    assert_eq!(apms(&["regen", "--n", "10"]).status.code(), Some(2));
    let bad = p(&d, "bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(apms(&["regen", "--in", &bad, "--n", "10"]).status.code(), Some(2));
}
