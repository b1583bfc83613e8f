//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --release --test acceptance -- 1 4 5`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use diffe::autograd::{grad_check_params, Group};
use diffe::evaluation::auc_ovr_macro;
use diffe::experiment::{arm_config, train_and_evaluate, RunConfig};
use diffe::networks::{
    checkpoint, Ablation, ClassifierConfig, DecoderInputs, DenoiserConfig, DiffEModel, DiffusionConfig, EncoderConfig,
    ModelConfig,
};
use diffe::scheduler::{NoiseSchedule, ScheduleKind};
use diffe::signal::{band_select, common_average_reference, notch_filter, preprocess, ContinuousRecording};
use diffe::synth::{container, generate, generate_separable_toy};
use diffe::training::{fit, split_dataset, FitOptions, StepLosses, TrainConfig};
use diffe::{EpochedDataset, Error, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::{bandpower_features, dft_amplitude, logistic_regression, pairwise_auc};

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mini_model() -> ModelConfig {
    ModelConfig {
        latent_dim: 8,
        groups: 2,
        diffusion: DiffusionConfig {
            steps: 10,
            ..DiffusionConfig::default()
        },
        denoiser: DenoiserConfig {
            widths: vec![2, 4],
            kernel: 3,
            time_dim: 4,
            time_hidden: 4,
        },
        encoder: EncoderConfig {
            widths: vec![2, 4],
            kernel: 3,
        },
        classifier: ClassifierConfig { hidden: vec![4] },
        ..ModelConfig::default()
    }
}

/// Reduced architecture that fits the single-core time budget.
fn desk_model() -> ModelConfig {
    ModelConfig {
        latent_dim: 128,
        diffusion: DiffusionConfig {
            steps: 50,
            ..DiffusionConfig::default()
        },
        denoiser: DenoiserConfig {
            widths: vec![8, 16, 16],
            kernel: 3,
            time_dim: 32,
            time_hidden: 32,
        },
        encoder: EncoderConfig {
            widths: vec![16, 16, 32, 32],
            kernel: 7,
        },
        classifier: ClassifierConfig { hidden: vec![64] },
        ..ModelConfig::default()
    }
}

fn c1_grad_check() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let model = DiffEModel::new(&mini_model(), Ablation::Full, 2, 3, seed).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let x = Tensor::randn(&[1, 2, 32], &mut rng);
        let z = Tensor::randn(&[1, 8], &mut rng);
        let t = [1 + (seed as usize % 10)];
        let store = model.store();
        let den = model.ids_in(&[Group::Denoiser]);
        let enc = model.ids_in(&[Group::Encoder]);
        let dec = model.ids_in(&[Group::Decoder]);
        let cls = model.ids_in(&[Group::Classifier]);
        let errs = [
            grad_check_params(
                store,
                Some(&den),
                |g| {
                    let xv = g.tape.constant(x.clone())?;
                    Ok(model.denoiser().unwrap().forward(g, xv, &t)?.x0_hat)
                },
                1e-5,
            ),
            grad_check_params(
                store,
                Some(&enc),
                |g| {
                    let xv = g.tape.constant(x.clone())?;
                    Ok(model.encoder().forward(g, xv)?.z)
                },
                1e-5,
            ),
            grad_check_params(
                store,
                Some(&dec),
                |g| {
                    let xv = g.tape.constant(x.clone())?;
                    let out = model.denoiser().unwrap().forward(g, xv, &t)?;
                    let e = model.encoder().forward(g, xv)?;
                    model.decoder().unwrap().forward(
                        g,
                        DecoderInputs {
                            enc_features: &e.features,
                            taps: &out.taps,
                            skip: Some((xv, out.x0_hat)),
                            out_len: 32,
                        },
                    )
                },
                1e-5,
            ),
            grad_check_params(
                store,
                Some(&cls),
                |g| {
                    let zv = g.tape.constant(z.clone())?;
                    model.classifier().forward(g, zv)
                },
                1e-5,
            ),
        ];
        for (name, e) in ["denoiser", "encoder", "decoder", "classifier"].iter().zip(errs) {
            let e = e.map_err(|e| e.to_string())?;
            ensure(e < 1e-5, || format!("{name} seed {seed}: rel err {e:.3e}"))?;
            worst = worst.max(e);
        }
    }
    Ok(format!("4 networks x 20 seeds, worst rel err {worst:.2e}"))
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn c2_diffusion() -> Outcome {
    let cfg = DiffusionConfig::default();
    let s = NoiseSchedule::build(cfg.steps, cfg.beta_start, cfg.beta_end, ScheduleKind::Linear).map_err(|e| e.to_string())?;
    let t_max = s.steps();
    let mut worst: f64 = 0.0;
    for t in 1..=t_max {
        let oracle: f64 = (1..=t)
            .map(|k| 1.0 - (cfg.beta_start + (cfg.beta_end - cfg.beta_start) * (k - 1) as f64 / (t_max - 1) as f64))
            .product();
        let d = (s.alpha_bar(t).unwrap() - oracle).abs();
        ensure(d <= 1e-12, || format!("alpha_bar({t}) off by {d:e}"))?;
        worst = worst.max(d);
    }

    let n = 10_000;
    let x0 = Tensor::new(vec![n], vec![1.5; n]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checks = Vec::new();
    for t in [1, t_max / 2, t_max] {
        let mut chain = x0.clone();
        for k in 1..=t {
            let eps = Tensor::randn(&[n], &mut rng);
            chain = s.forward_step(&chain, k, &eps).unwrap();
        }
        let eps = Tensor::randn(&[n], &mut rng);
        let closed = s.forward_sample(&x0, t, &eps).unwrap();
        let (mc, vc) = mean_var(chain.data());
        let (mf, vf) = mean_var(closed.data());
        let nf = n as f64;
        let se_mean = (vc / nf + vf / nf).sqrt();
        ensure((mc - mf).abs() <= 3.0 * se_mean, || {
            format!("t={t}: means {mc:.5} vs {mf:.5}, 3SE {:.5}", 3.0 * se_mean)
        })?;
        let se_var = (2.0 * vc * vc / (nf - 1.0) + 2.0 * vf * vf / (nf - 1.0)).sqrt();
        ensure((vc - vf).abs() <= 3.0 * se_var, || {
            format!("t={t}: variances {vc:.5} vs {vf:.5}, 3SE {:.5}", 3.0 * se_var)
        })?;
        checks.push(format!("t={t} dmean {:.1}SE dvar {:.1}SE", (mc - mf).abs() / se_mean, (vc - vf).abs() / se_var));
    }
    Ok(format!("alpha_bar max err {worst:.1e}; {}", checks.join(", ")))
}

fn c3_loss_composition() -> Outcome {
    let ds = generate_separable_toy(20, 7).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 8,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut steps = 0usize;
    let mut worst: f64 = 0.0;
    let mut bad = None;
    let mut cb = |s: &StepLosses| {
        steps += 1;
        let d = (s.total - (s.cae + 0.1 * s.cls)).abs();
        worst = worst.max(d);
        if d > 1e-12 && bad.is_none() {
            bad = Some(format!("step {}: total {} vs {}", s.step, s.total, s.cae + 0.1 * s.cls));
        }
    };
    fit(
        &mini_model(),
        &cfg,
        &ds,
        None,
        FitOptions {
            on_step: Some(&mut cb),
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    if let Some(b) = bad {
        return Err(b);
    }
    ensure(steps == 25, || format!("expected 25 steps, saw {steps}"))?;
    Ok(format!("{steps} steps, max |total - (cae + 0.1 cls)| = {worst:.1e}"))
}

fn one_channel(x: Vec<f64>) -> ContinuousRecording {
    ContinuousRecording::new(vec![x], 250.0, vec!["c0".into()], vec![], vec!["a".into()]).unwrap()
}

fn tone(f: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 250.0).sin()).collect()
}

fn middle(x: &[f64]) -> &[f64] {
    &x[x.len() / 4..3 * x.len() / 4]
}

fn c4_filters() -> Outcome {
    let n = 5000;
    let gain = |input: &[f64], out: &[f64], f: f64| dft_amplitude(middle(out), f, 250.0) / dft_amplitude(middle(input), f, 250.0);

    let x = tone(60.0, n);
    let y = notch_filter(&one_channel(x.clone()), &[60.0, 120.0], 30.0).map_err(|e| e.to_string())?;
    let notch_db = 20.0 * gain(&x, &y.data[0], 60.0).log10();
    ensure(notch_db <= -20.0, || format!("notch at 60 Hz only {notch_db:.1} dB"))?;

    let x = tone(10.0, n);
    let y = band_select(&one_channel(x.clone()), (70.0, 124.0)).map_err(|e| e.to_string())?;
    let low_db = 20.0 * gain(&x, &y.data[0], 10.0).log10();
    ensure(low_db <= -20.0, || format!("band_select at 10 Hz only {low_db:.1} dB"))?;

    let x = tone(90.0, n);
    let y = band_select(&one_channel(x.clone()), (70.0, 124.0)).map_err(|e| e.to_string())?;
    let keep = gain(&x, &y.data[0], 90.0);
    ensure((keep - 1.0).abs() <= 0.05, || format!("90 Hz gain {keep:.4}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data: Vec<Vec<f64>> = (0..8).map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 50.0).collect()).collect();
    let rec = ContinuousRecording::new(data, 250.0, (0..8).map(|i| format!("c{i}")).collect(), vec![], vec!["a".into()])
        .unwrap();
    let car = common_average_reference(&rec).map_err(|e| e.to_string())?;
    let worst = (0..n)
        .map(|i| (car.data.iter().map(|c| c[i]).sum::<f64>() / 8.0).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-12, || format!("CAR mean {worst:e}"))?;
    Ok(format!(
        "notch 60 Hz {notch_db:.1} dB, band_select 10 Hz {low_db:.1} dB, 90 Hz gain {keep:.4}, CAR mean {worst:.1e}"
    ))
}

fn c5_auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let k = rng.gen_range(2..=13);
        let n = rng.gen_range(2 * k..=100);
        let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.gen_range(0..=i));
        }
        let ties = case % 2 == 0;
        let scores: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..k)
                    .map(|_| if ties { rng.gen_range(0..5) as f64 } else { rng.gen::<f64>() })
                    .collect()
            })
            .collect();
        let t = Tensor::new(vec![n, k], scores.concat()).unwrap();
        let got = auc_ovr_macro(&t, &labels).map_err(|e| e.to_string())?;
        let want = pairwise_auc(&scores, &labels, k);
        let d = (got - want).abs();
        ensure(d <= 1e-9, || format!("case {case}: {got} vs {want}"))?;
        worst = worst.max(d);
    }
    Ok(format!("50 instances, max |diff| {worst:.1e} (percent points)"))
}

const TOY_EPOCHS: usize = 20;

fn c6_learning_sanity() -> Outcome {
    let ds = generate_separable_toy(100, 0).map_err(|e| e.to_string())?;
    let (train, test, _) = split_dataset(&ds, 0.2, 0).map_err(|e| e.to_string())?;
    let feats = [80.0, 110.0];
    let pred = logistic_regression(&bandpower_features(&train, &feats), &train.labels, 2, &bandpower_features(&test, &feats));
    let oracle = 100.0 * pred.iter().zip(&test.labels).filter(|(p, y)| p == y).count() as f64 / test.len() as f64;
    ensure(oracle >= 99.0, || format!("logistic-regression oracle only {oracle:.1}%"))?;

    let mut cfg = RunConfig {
        model: desk_model(),
        ..RunConfig::default()
    };
    cfg.train.epochs = TOY_EPOCHS;
    let run = train_and_evaluate(&cfg, &ds, FitOptions::default()).map_err(|e| e.to_string())?;
    let acc = run.report.accuracy_pct;
    ensure(acc >= 95.0, || format!("full arm {acc:.1}% after {TOY_EPOCHS} epochs (oracle {oracle:.1}%)"))?;
    Ok(format!("full arm {acc:.1}% after {TOY_EPOCHS} epochs; oracle {oracle:.1}%"))
}

const DESK_EPOCHS: usize = 100;
const DESK_SEEDS: [u64; 3] = [0, 1, 2];

fn c7_desk_trend() -> Outcome {
    let mut base = RunConfig {
        model: desk_model(),
        ..RunConfig::default()
    };
    base.train.epochs = DESK_EPOCHS;
    let rec = generate(&base.data).map_err(|e| e.to_string())?;
    let ds = preprocess(&rec, &base.pipeline).map_err(|e| e.to_string())?.dataset;
    ensure(ds.len() == 1300 && ds.channels() == 8 && ds.n_classes() == 13, || {
        format!("dataset is {} x {} with {} classes", ds.len(), ds.channels(), ds.n_classes())
    })?;

    let started = Instant::now();
    let mut reports = Vec::new();
    for arm in Ablation::ALL {
        for seed in DESK_SEEDS {
            let t = Instant::now();
            let run = train_and_evaluate(&arm_config(&base, arm, seed), &ds, FitOptions::default()).map_err(|e| e.to_string())?;
            eprintln!(
                "    {} seed {seed}: acc {:.2} auc {:.2} ({:.0}s)",
                arm.name(),
                run.report.accuracy_pct,
                run.report.auc_pct,
                t.elapsed().as_secs_f64()
            );
            reports.push(run.report);
        }
    }
    let table = diffe::evaluation::ablation_report(&reports).map_err(|e| e.to_string())?;
    let row = |arm| table.row(arm).unwrap();
    let (full, nd, plain) = (row(Ablation::Full), row(Ablation::NoDdpm), row(Ablation::NoDdpmNoDecoder));
    let summary = format!(
        "acc full {:.2}, no_ddpm {:.2}, no_ddpm_no_decoder {:.2}; auc {:.2}, {:.2}, {:.2}",
        full.accuracy_mean, nd.accuracy_mean, plain.accuracy_mean, full.auc_mean, nd.auc_mean, plain.auc_mean
    );
    let chance = 100.0 / 13.0;
    let mut failures = Vec::new();
    if full.accuracy_mean < 4.0 * chance {
        failures.push(format!("full below 4x chance ({:.2}%)", 4.0 * chance));
    }
    if !(full.accuracy_mean >= nd.accuracy_mean && nd.accuracy_mean >= plain.accuracy_mean) {
        failures.push("accuracy ordering".to_string());
    }
    if !(plain.auc_mean <= full.auc_mean && plain.auc_mean <= nd.auc_mean) {
        failures.push("no_ddpm_no_decoder AUC not lowest".to_string());
    }
    let minutes = started.elapsed().as_secs_f64() / 60.0;
    if minutes > 120.0 {
        failures.push(format!("took {minutes:.0} min, budget 120"));
    }
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}: {summary}", failures.join(", ")))
    }
}

fn tiny_run_config() -> RunConfig {
    let mut cfg = RunConfig {
        model: mini_model(),
        ..RunConfig::default()
    };
    cfg.data.n_classes = 3;
    cfg.data.trials_per_class = 10;
    cfg.data.channels = 4;
    cfg.train.epochs = 3;
    cfg.train.batch_size = 8;
    cfg.train.seed = 11;
    cfg.eval.test_fraction = 0.3;
    cfg
}

fn c8_determinism() -> Outcome {
    let cfg = tiny_run_config();
    let ds = preprocess(&generate(&cfg.data).map_err(|e| e.to_string())?, &cfg.pipeline)
        .map_err(|e| e.to_string())?
        .dataset;
    let a = train_and_evaluate(&cfg, &ds, FitOptions::default()).map_err(|e| e.to_string())?;
    let b = train_and_evaluate(&cfg, &ds, FitOptions::default()).map_err(|e| e.to_string())?;
    ensure(a.history.to_csv() == b.history.to_csv(), || "history CSV differs".into())?;
    let (ja, jb) = (a.report.to_json().unwrap(), b.report.to_json().unwrap());
    ensure(ja == jb, || "report JSON differs".into())?;
    ensure(
        checkpoint::to_bytes(&a.model).unwrap() == checkpoint::to_bytes(&b.model).unwrap(),
        || "checkpoints differ".into(),
    )?;
    Ok(format!("{} history rows, {} report bytes identical", a.history.records.len(), ja.len()))
}

fn c9_round_trip() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let toy = generate_separable_toy(10, 9).map_err(|e| e.to_string())?;
    let ds = EpochedDataset::new(toy.epochs.map(|v| v as f32 as f64), toy.labels, toy.fs, toy.class_names)
        .map_err(|e| e.to_string())?;
    let prov = serde_json::json!({"kind": "acceptance"});
    let path = dir.path().join("data.bin");
    container::save(&ds, &prov, &path).map_err(|e| e.to_string())?;
    let back = container::load(&path).map_err(|e| e.to_string())?;
    ensure(back.dataset == ds && back.provenance == prov, || "dataset round trip differs".into())?;
    let bytes = std::fs::read(&path).unwrap();
    ensure(container::to_bytes(&back.dataset, &back.provenance).unwrap() == bytes, || {
        "dataset re-serialisation differs".into()
    })?;

    let (model, _) = fit(
        &mini_model(),
        &TrainConfig {
            epochs: 1,
            batch_size: 8,
            ..TrainConfig::default()
        },
        &ds,
        None,
        FitOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let ckpt = dir.path().join("model.bin");
    checkpoint::save(&model, &ckpt).map_err(|e| e.to_string())?;
    let loaded = checkpoint::load(&ckpt).map_err(|e| e.to_string())?;
    ensure(checkpoint::to_bytes(&loaded).unwrap() == std::fs::read(&ckpt).unwrap(), || {
        "checkpoint re-serialisation differs".into()
    })?;
    let (p, q) = (
        model.predict_scores(&ds.epochs, 16).unwrap(),
        loaded.predict_scores(&ds.epochs, 16).unwrap(),
    );
    ensure(p == q, || "loaded checkpoint scores differ".into())?;

    let mut codes = Vec::new();
    let truncated = container::from_bytes(&bytes[..bytes.len() - 5]).unwrap_err();
    ensure(matches!(truncated, Error::Format(_)) && truncated.exit_code() == 2, || {
        format!("truncated dataset gave {truncated:?}")
    })?;
    codes.push(truncated.exit_code());
    let ck = std::fs::read(&ckpt).unwrap();
    let bad_ckpt = checkpoint::from_bytes(&ck[..ck.len() - 8]).unwrap_err();
    ensure(matches!(bad_ckpt, Error::Format(_)) && bad_ckpt.exit_code() == 2, || {
        format!("truncated checkpoint gave {bad_ckpt:?}")
    })?;
    codes.push(bad_ckpt.exit_code());
    let missing = container::load(&dir.path().join("absent.bin")).unwrap_err();
    ensure(missing.exit_code() == 4, || format!("missing file gave {missing:?}"))?;
    codes.push(missing.exit_code());
    Ok(format!("dataset and checkpoint bit-exact; error codes {codes:?}"))
}

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 9] = [
        (1, "gradient correctness", c1_grad_check),
        (2, "diffusion math", c2_diffusion),
        (3, "loss composition", c3_loss_composition),
        (4, "filters", c4_filters),
        (5, "AUC oracle", c5_auc_oracle),
        (6, "learning sanity", c6_learning_sanity),
        (7, "desk-scale trend", c7_desk_trend),
        (8, "determinism", c8_determinism),
        (9, "format round-trip", c9_round_trip),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{id}] {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{id}] {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
