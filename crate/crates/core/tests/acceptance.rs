//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use dasr_core::adapter::{
    self, adapter_dynamic, adapter_static, append_token, cross_attention, AdapterWeights,
    TokenMatrix, DEFAULT_TOKEN_DIM,
};
use dasr_core::degradations::{corpus, sweep, Axis};
use dasr_core::descriptor::descriptor;
use dasr_core::diffusion::{
    analytic_gain, fit_scalar_gain, gradcheck_all, toy_corpus, train_toy, train_toy_standard,
    DiffusionSchedule, TrainConfig, GRAD_TOLERANCE,
};
use dasr_core::sani::{forward_moments, modulate_noise, EdgeMap, DEFAULT_LAMBDA};
use dasr_core::{Execution, Image, Rng, Tensor};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn amplitude_bound() -> Outcome {
    let lambda = DEFAULT_LAMBDA;
    let mut rng = Rng::new(101);
    let (h, w) = (16, 16);
    let mut maps: Vec<Tensor> = (0..200)
        .map(|_| {
            let v: Vec<f64> = (0..h * w).map(|_| rng.uniform()).collect();
            Tensor::new(vec![h, w], v).unwrap()
        })
        .collect();
    maps.push(Tensor::zeros(&[h, w]).unwrap());
    maps.push(Tensor::full(&[h, w], 1.0).unwrap());
    for img in corpus() {
        maps.push(EdgeMap::compute(&img, h, w).unwrap().latent);
    }
    let ones = Tensor::full(&[4, h, w], 1.0).unwrap();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for e in &maps {
        for s in modulate_noise(&ones, e, lambda).unwrap().data() {
            lo = lo.min(*s);
            hi = hi.max(*s);
        }
    }
    outcome(
        lo >= 0.4 && hi <= 1.0 && lo == 0.4 && hi == 1.0,
        format!("scale range [{lo}, {hi}] over {} maps", maps.len()),
    )
}

fn variance_law() -> Outcome {
    let schedule = DiffusionSchedule::default();
    let lambda = DEFAULT_LAMBDA;
    let samples = 100_000;
    let mut worst: f64 = 0.0;
    let mut at_full_edge = 0.0;
    for (i, e) in [0.0, 0.5, 1.0].into_iter().enumerate() {
        for (j, t) in [1usize, 500, 1000].into_iter().enumerate() {
            let ab = schedule.alpha_bar(t).unwrap();
            let want = (1.0 - ab) * (1.0 - lambda * e).powi(2);
            let seed = 1000 + 10 * i as u64 + j as u64;
            let m = forward_moments(0.3, e, lambda, t, &schedule, samples, seed, Execution::Parallel)
                .unwrap();
            worst = worst.max((m.variance() - want).abs() / want);
            if e == 1.0 && t == 1000 {
                at_full_edge = m.variance() / (1.0 - ab);
            }
        }
    }
    outcome(
        worst < 0.02,
        format!("max relative error {worst:.4}; E=1 variance factor {at_full_edge:.4} (law 0.16)"),
    )
}

fn parameter_count() -> Outcome {
    let n = AdapterWeights::zeros(DEFAULT_TOKEN_DIM).param_count();
    outcome(n == 216_576, format!("{n} parameters at D={DEFAULT_TOKEN_DIM}"))
}

fn static_dynamic_identity() -> Outcome {
    let mut rng = Rng::new(7);
    let mut w = AdapterWeights::init(DEFAULT_TOKEN_DIM, &mut rng);
    for v in w.ln_gain.iter_mut().chain(w.ln_bias.iter_mut()) {
        *v += rng.uniform_range(-0.3, 0.3);
    }
    w.clear_timestep_mlp();
    let mut checked = 0;
    for _ in 0..8 {
        let mut d = [0.0; 6];
        d.iter_mut().for_each(|v| *v = rng.uniform_range(0.0, 14.0));
        let s = adapter_static(&d, &w, None).unwrap();
        for t in [1u32, 17, 500, 999, 1000] {
            if adapter_dynamic(&d, t, &w, None).unwrap() != s {
                return outcome(false, format!("mismatch at t={t}"));
            }
            checked += 1;
        }
    }
    outcome(true, format!("{checked} (d, t) pairs bit-identical"))
}

fn gradient_verification() -> Outcome {
    let report = gradcheck_all(0, Execution::Parallel);
    let worst = report
        .groups
        .iter()
        .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
        .unwrap();
    let all = report.groups.iter().all(|g| g.max_rel_err < GRAD_TOLERANCE);
    outcome(
        all && report.passed,
        format!(
            "{} groups, worst {} at {:.2e}",
            report.groups.len(),
            worst.name,
            worst.max_rel_err
        ),
    )
}

fn descriptor_monotonicity() -> Outcome {
    let images = corpus();
    let mut ok = true;
    let mut parts = Vec::new();
    for (axis, component) in [(Axis::Blur, 0), (Axis::Noise, 1), (Axis::Block, 2)] {
        let levels = axis.default_levels();
        let rows = sweep(&images, axis, &levels, 42, Execution::Parallel).unwrap();
        let (mut good, mut total) = (0, 0);
        for per_image in rows.chunks(levels.len()) {
            for pair in per_image.windows(2) {
                total += 1;
                if pair[1].descriptor.raw[component] >= pair[0].descriptor.raw[component] {
                    good += 1;
                }
            }
        }
        let frac = good as f64 / total as f64;
        ok &= frac >= 0.95;
        parts.push(format!("{} {good}/{total}", axis.name()));
    }
    let constant = descriptor(&Image::constant(32, 32, 1, 0.5).unwrap()).unwrap();
    let want = [(1.0f64 + 1e6).ln(), 0.0, 0.0, 0.0, 1.5f64.ln(), 0.0];
    let exact = constant.transformed == want;
    parts.push(format!("constant image exact: {exact}"));
    outcome(ok && exact, parts.join(", "))
}

fn attention_contracts() -> Outcome {
    let mut rng = Rng::new(3);
    let d = DEFAULT_TOKEN_DIM;
    let n = 6;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
    let kv = TokenMatrix::from_rows(&rows).unwrap();
    let q = Tensor::new(vec![3, d], (0..3 * d).map(|_| rng.normal() * 0.1).collect()).unwrap();
    let base = cross_attention(&q, &kv).unwrap();

    let mut perm_err: f64 = 0.0;
    for shift in 1..n {
        let rotated: Vec<Vec<f64>> = (0..n).map(|i| rows[(i + shift) % n].clone()).collect();
        let mut reversed = rotated.clone();
        reversed.reverse();
        for r in [rotated, reversed] {
            let out = cross_attention(&q, &TokenMatrix::from_rows(&r).unwrap()).unwrap();
            for (a, b) in out.data().iter().zip(base.data()) {
                perm_err = perm_err.max((a - b).abs());
            }
        }
    }

    let single = TokenMatrix::from_rows(&rows[..1]).unwrap();
    let out = cross_attention(&q, &single).unwrap();
    let single_ok = out.data().chunks(d).all(|row| row == rows[0].as_slice());

    let w = AdapterWeights::init(d, &mut rng);
    let token = adapter::adapter_dynamic(&[1.0, 0.1, 0.0, 0.3, 0.4, 0.2], 250, &w, None).unwrap();
    let appended = append_token(&kv, &token).unwrap();
    let shape_ok = appended.tensor().shape() == [n + 1, d] && appended.row(n) == token.as_slice();

    outcome(
        perm_err <= 1e-12 && single_ok && shape_ok,
        format!(
            "permutation error {perm_err:.1e}, single token exact: {single_ok}, appended shape {:?}",
            appended.tensor().shape()
        ),
    )
}

fn training_descent() -> Outcome {
    let cfg = TrainConfig::default();
    let corpus = toy_corpus(cfg.latent_channels, cfg.latent_side, cfg.lr_side, cfg.seed).unwrap();
    let report = train_toy(&corpus, &cfg).unwrap();
    let ratio = report.summary.ratio;

    let schedule = DiffusionSchedule::default();
    let (z0, t) = (0.5, 500);
    let g = fit_scalar_gain(z0, t, &schedule, 50_000, 0.01, 1).unwrap();
    let g_star = analytic_gain(z0, t, &schedule).unwrap();
    let gain_err = (g - g_star).abs() / g_star;

    outcome(
        ratio <= 0.5 && gain_err < 0.02,
        format!(
            "loss ratio {ratio:.4} (first50 {:.4}, last50 {:.4}); scalar gain {g:.5} vs {g_star:.5}, rel err {gain_err:.4}",
            report.summary.first50_mean, report.summary.last50_mean
        ),
    )
}

fn lambda_zero_reduction() -> Outcome {
    let cfg = TrainConfig {
        steps: 100,
        lambda: 0.0,
        use_token: false,
        ..TrainConfig::default()
    };
    let corpus = toy_corpus(cfg.latent_channels, cfg.latent_side, cfg.lr_side, cfg.seed).unwrap();
    let sani = train_toy(&corpus, &cfg).unwrap();
    let ddpm = train_toy_standard(&corpus, &cfg).unwrap();
    let same_losses = sani
        .losses
        .iter()
        .zip(&ddpm.losses)
        .all(|(a, b)| a.to_bits() == b.to_bits())
        && sani.losses.len() == ddpm.losses.len();
    let same_params = sani.denoiser == ddpm.denoiser;
    outcome(
        same_losses && same_params,
        format!(
            "{} steps, losses bit-identical: {same_losses}, final parameters identical: {same_params}",
            sani.losses.len()
        ),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("amplitude bound", Duration::from_secs(1), amplitude_bound),
        ("variance law", Duration::from_secs(30), variance_law),
        ("adapter parameter count", Duration::from_secs(1), parameter_count),
        ("static/dynamic identity", Duration::from_secs(1), static_dynamic_identity),
        ("gradient verification", Duration::from_secs(60), gradient_verification),
        ("descriptor monotonicity", Duration::from_secs(60), descriptor_monotonicity),
        ("attention contracts", Duration::from_secs(1), attention_contracts),
        ("toy training descent", Duration::from_secs(120), training_descent),
        ("lambda = 0 reduction", Duration::from_secs(30), lambda_zero_reduction),
    ];
    let mut failures = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let passed = out.passed && in_time;
        if !passed {
            failures += 1;
        }
        println!(
            "[{}] {}. {name}: {} ({:.2?}{})",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            elapsed,
            if in_time { String::new() } else { format!(", over {budget:?} budget") }
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
