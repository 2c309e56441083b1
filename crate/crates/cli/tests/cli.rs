use std::path::Path;
use std::process::{Command, Output};

use dasr_core::adapter::io::WeightFile;
use dasr_core::degradations::{corpus, DegradationRecipe};
use dasr_core::descriptor::{descriptor, descriptor_with, DescriptorParams, DescriptorRecord};
use dasr_core::diffusion::ToyDenoiser;
use dasr_core::{netpbm, Image};
use serde_json::Value;

fn dasr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dasr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn write_pgm(dir: &Path, name: &str, img: &Image) -> String {
    let p = dir.join(name);
    netpbm::write(&p, img).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn analyze_constant_gray() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_pgm(dir.path(), "gray.pgm", &Image::constant(16, 16, 1, 128.0 / 255.0).unwrap());
    let o = dasr(&["analyze", &path]);
    assert_eq!(o.status.code(), Some(0));
    let rec = json(&o);
    let want = [(1.0f64 + 1e6).ln(), 0.0, 0.0, 0.0, (128.0 / 255.0f64).ln_1p(), 0.0];
    assert_eq!(floats(&rec["log1p"]), want);
    assert_eq!(rec["image"], path.as_str());
}

#[test]
fn analyze_missing_file() {
    let o = dasr(&["analyze", "/nonexistent/x.pgm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/x.pgm"));
    assert!(o.stdout.is_empty());
}

#[test]
fn analyze_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let img = netpbm::decode(&netpbm::encode(&corpus()[3])).unwrap();
    assert_eq!(img.channels(), 3);
    let path = write_pgm(dir.path(), "rgb.ppm", &img);
    let o = dasr(&["analyze", &path]);
    assert_eq!(o.status.code(), Some(0));
    let params = DescriptorParams::default();
    let want = DescriptorRecord::new(path.clone(), &descriptor(&img).unwrap(), &params).to_json();
    assert_eq!(stdout(&o).trim_end(), want);

    // Config values reach the descriptor.
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"epsilon_blur": 0.01, "sobel_threshold": 0.5}"#).unwrap();
    let o = dasr(&["analyze", &path, "--config", cfg.to_str().unwrap()]);
    let params = DescriptorParams {
        epsilon: 0.01,
        edge_threshold: 0.5,
    };
    let want = DescriptorRecord::new(path, &descriptor_with(&img, &params).unwrap(), &params).to_json();
    assert_eq!(stdout(&o).trim_end(), want);
}

#[test]
fn degrade_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let img = netpbm::decode(&netpbm::encode(&corpus()[0])).unwrap();
    let input = write_pgm(dir.path(), "in.pgm", &img);
    let out = dir.path().join("out.pgm");
    let o = dasr(&[
        "degrade", &input, "--blur", "1.5", "--noise", "0.05", "--block", "0.5", "--seed", "9", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let recipe = DegradationRecipe {
        blur_sigma: 1.5,
        noise_sigma: 0.05,
        block_strength: 0.5,
        seed: 9,
        ..DegradationRecipe::default()
    };
    let want = netpbm::encode(&recipe.apply(&img).unwrap());
    assert_eq!(std::fs::read(out).unwrap(), want);
}

#[test]
fn sweep_zero_level_is_clean_corpus() {
    let o = dasr(&["sweep", "--axis", "blur", "--levels", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let images = corpus();
    let lines: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(lines.len(), images.len());
    for (line, img) in lines.iter().zip(&images) {
        let cols: Vec<f64> = line.split(',').skip(3).map(|v| v.parse().unwrap()).collect();
        assert_eq!(cols, descriptor(img).unwrap().transformed);
    }
}

#[test]
fn sweep_is_reproducible() {
    let args = ["sweep", "--axis", "noise", "--seed", "4"];
    let a = dasr(&args);
    let b = dasr(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let mut seq = args.to_vec();
    seq.push("--sequential");
    assert_eq!(dasr(&seq).stdout, a.stdout);
}

#[test]
fn sweep_noise_increases_noise_column() {
    let o = dasr(&["sweep", "--axis", "noise", "--levels", "0,0.1"]);
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    for pair in rows.chunks(2) {
        let clean: f64 = pair[0][4].parse().unwrap();
        let noisy: f64 = pair[1][4].parse().unwrap();
        assert!(noisy > clean);
    }
}

#[test]
fn sweep_rejects_bad_axis() {
    assert_eq!(dasr(&["sweep", "--axis", "sharpness"]).status.code(), Some(2));
}

#[test]
fn sani_stats_amplitudes() {
    let o = dasr(&["sani-stats", "--lambda", "0", "--samples", "200000"]);
    assert_eq!(o.status.code(), Some(0));
    for s in floats(&json(&o)["empirical_std"]) {
        assert!((s - 1.0).abs() < 0.01, "{s}");
    }
    let o = dasr(&["sani-stats", "--lambda", "0.6", "--samples", "200000"]);
    let r = json(&o);
    let emp = floats(&r["empirical_std"]);
    assert_eq!(floats(&r["E_levels"]), [0.0, 0.25, 0.5, 0.75, 1.0]);
    assert!((emp[4] - 0.4).abs() / 0.4 < 0.01);
    assert!((emp[2] - 0.7).abs() / 0.7 < 0.01);
}

#[test]
fn sani_stats_rejects_bad_lambda() {
    let o = dasr(&["sani-stats", "--lambda", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"lambda": -0.1}"#).unwrap();
    assert_eq!(dasr(&["sani-stats", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn config_lambda_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"lambda": 0.2, "seed": 3}"#).unwrap();
    let o = dasr(&["sani-stats", "--samples", "1000", "--config", cfg.to_str().unwrap()]);
    let r = json(&o);
    assert_eq!(r["lambda"], 0.2);
    assert_eq!(r["seed"], 3);
    let o = dasr(&["sani-stats", "--samples", "1000", "--config", cfg.to_str().unwrap(), "--seed", "8"]);
    assert_eq!(json(&o)["seed"], 8);
}

#[test]
fn gradcheck_passes() {
    let o = dasr(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert_eq!(r["passed"], true);
    for g in r["groups"].as_array().unwrap() {
        assert!(g["max_rel_err"].as_f64().unwrap() < 1e-5);
    }
    assert_eq!(dasr(&["gradcheck"]).stdout, o.stdout);
}

#[test]
fn train_zero_learning_rate() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("s.json");
    let o = dasr(&["train-toy", "--lr", "0", "--summary", summary.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let s: Value = serde_json::from_slice(&std::fs::read(summary).unwrap()).unwrap();
    assert_eq!(s["ratio"], 1.0);
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("step,loss"));
    assert_eq!(text.lines().count(), 501);
}

#[test]
fn train_default_descends() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("s.json");
    let o = dasr(&["train-toy", "--seed", "7", "--summary", summary.to_str().unwrap()]);
    let s: Value = serde_json::from_slice(&std::fs::read(summary).unwrap()).unwrap();
    let ratio = s["ratio"].as_f64().unwrap();
    assert!(ratio <= 0.5, "ratio {ratio}");
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn train_outputs_are_reproducible_and_saved() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("w.bin");
    let args = [
        "train-toy", "--steps", "30", "--seed", "2", "--weights", weights.to_str().unwrap(),
    ];
    let a = dasr(&args);
    let b = dasr(&args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stderr, b.stderr);
    let bytes = std::fs::read(&weights).unwrap();
    assert!(bytes.windows(4).any(|w| w == b"TOYD"));
    let file = WeightFile::load(&weights).unwrap();
    assert_eq!(file.token_dim, 512);
    let net = ToyDenoiser::from_arrays(file.toy.as_ref().unwrap()).unwrap();
    assert_eq!(net.channels, 4);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(dasr(&[]).status.code(), Some(2));
    assert_eq!(dasr(&["train-toy", "--lambda", "3"]).status.code(), Some(2));
    assert_eq!(dasr(&["analyze"]).status.code(), Some(2));
}
