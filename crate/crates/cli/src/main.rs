use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use diffe::evaluation::{ablation_report, RunReport};
use diffe::experiment::{arm_config, evaluate, train_and_evaluate, RunConfig};
use diffe::networks::{checkpoint, Ablation};
use diffe::signal::preprocess;
use diffe::synth::{container, generate};
use diffe::training::{split_dataset, FitOptions};
use diffe::{EpochedDataset, Error, Result};

#[derive(Parser)]
#[command(name = "diffe", version, about = "Diffusion-driven representation learning for multichannel trials")]
struct Cli {
    /// Log filter, e.g. `info` or `diffe=debug`.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON run configuration; defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a field, e.g. `--set train.alpha=0.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise a raw recording and write it as a dataset file.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter, re-reference and epoch a raw dataset file.
    Preprocess {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split, train one arm, and evaluate on the held-out part.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        ablation: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint on the held-out split of a dataset.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Where to write the report; printed to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every arm for each seed on one split and tabulate the results.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Epoched data from either a raw or an already preprocessed file.
fn load_epoched(path: &Path, cfg: &RunConfig) -> Result<EpochedDataset> {
    let file = container::load(path)?;
    match container::unpack_recording(&file)? {
        Some(rec) => {
            log::info!("{} holds a raw recording; preprocessing it", path.display());
            Ok(preprocess(&rec, &cfg.pipeline)?.dataset)
        }
        None => Ok(file.dataset),
    }
}

/// `<parent>/<timestamp>-<tag>`, made unique if it already exists.
fn run_dir(parent: &Path, tag: &str) -> Result<PathBuf> {
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = parent.join(format!("{stamp}-{tag}"));
    let mut dir = base.clone();
    let mut k = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{k}", base.display()));
        k += 1;
    }
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

fn summarize(ds: &EpochedDataset) {
    println!(
        "n={} channels={} L={} fs={}",
        ds.len(),
        ds.channels(),
        ds.epoch_len(),
        ds.fs
    );
    summarize_counts(&ds.class_names, ds.labels.iter().copied());
}

fn train_one(cfg: &RunConfig, data: &EpochedDataset, dir: &Path) -> Result<RunReport> {
    write(&dir.join("config.json"), cfg.to_json()?)?;
    let ckpt = dir.join("checkpoint.bin");
    let run = train_and_evaluate(
        cfg,
        data,
        FitOptions {
            checkpoint: Some(&ckpt),
            ..Default::default()
        },
    )?;
    write(&dir.join("history.csv"), run.history.to_csv())?;
    write(&dir.join("report.json"), run.report.to_json()?)?;
    Ok(run.report)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { cfg, seed, out } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(s) = seed {
                cfg.data.seed = s;
            }
            let rec = generate(&cfg.data)?;
            let file = container::pack_recording(
                &rec,
                cfg.data.slot_len(),
                cfg.data.pre_len(),
                serde_json::to_value(&cfg.data)?,
            )?;
            container::save(&file.dataset, &file.provenance, &out)?;
            println!("wrote {}", out.display());
            println!(
                "n={} channels={} L={} fs={}",
                rec.events.len(),
                rec.channels(),
                cfg.data.epoch_len(),
                rec.fs
            );
            summarize_counts(&rec.class_names, rec.events.iter().map(|e| e.class_id));
        }
        Command::Preprocess { cfg, input, out } => {
            let cfg = load_config(&cfg)?;
            let file = container::load(&input)?;
            let rec = container::unpack_recording(&file)?
                .ok_or_else(|| Error::Config(format!("{} is not a raw recording", input.display())))?;
            let pre = preprocess(&rec, &cfg.pipeline)?;
            let provenance = serde_json::json!({
                "kind": "epoched",
                "pipeline": cfg.pipeline,
                "skipped_events": pre.skipped_events,
                "source": file.provenance.get("source"),
            });
            container::save(&pre.dataset, &provenance, &out)?;
            println!("wrote {} ({} events skipped)", out.display(), pre.skipped_events);
            summarize(&pre.dataset);
        }
        Command::Train {
            cfg,
            data,
            out_dir,
            ablation,
            epochs,
            seed,
        } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(a) = ablation {
                cfg.train.ablation = Ablation::parse(&a)?;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            cfg.validate()?;
            let ds = load_epoched(&data, &cfg)?;
            let dir = run_dir(&out_dir, &format!("seed{}", cfg.train.seed))?;
            let report = train_one(&cfg, &ds, &dir)?;
            println!("run directory: {}", dir.display());
            println!(
                "{}: accuracy {:.2}%  AUC {:.2}%",
                report.arm.label(),
                report.accuracy_pct,
                report.auc_pct
            );
        }
        Command::Eval {
            cfg,
            checkpoint: ckpt,
            data,
            out,
        } => {
            let cfg = load_config(&cfg)?;
            let model = checkpoint::load(&ckpt)?;
            let ds = load_epoched(&data, &cfg)?;
            let (_, test, split) = split_dataset(&ds, cfg.eval.test_fraction, cfg.eval.split_seed)?;
            let report = evaluate(&model, &test, &cfg, &split)?;
            let json = report.to_json()?;
            match out {
                Some(p) => {
                    write(&p, &json)?;
                    println!(
                        "accuracy {:.2}%  AUC {:.2}%  -> {}",
                        report.accuracy_pct,
                        report.auc_pct,
                        p.display()
                    );
                }
                None => println!("{json}"),
            }
        }
        Command::Ablate {
            cfg,
            data,
            out_dir,
            seeds,
            epochs,
        } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if seeds.is_empty() {
                return Err(Error::Config("ablate needs at least one seed".into()));
            }
            cfg.validate()?;
            let ds = load_epoched(&data, &cfg)?;
            let dir = run_dir(&out_dir, "ablate")?;
            write(&dir.join("config.json"), cfg.to_json()?)?;
            let mut reports = Vec::new();
            for &seed in &seeds {
                for arm in Ablation::ALL {
                    let c = arm_config(&cfg, arm, seed);
                    let sub = dir.join(format!("{}-seed{seed}", arm.name()));
                    fs::create_dir_all(&sub)?;
                    log::info!("training {} with seed {seed}", arm.name());
                    reports.push(train_one(&c, &ds, &sub)?);
                }
            }
            let table = ablation_report(&reports)?;
            write(&dir.join("ablation.csv"), table.to_csv())?;
            write(&dir.join("ablation.txt"), table.to_text())?;
            println!("run directory: {}", dir.display());
            print!("{}", table.to_text());
        }
    }
    Ok(())
}

fn summarize_counts(names: &[String], labels: impl Iterator<Item = usize>) {
    let mut counts = vec![0usize; names.len()];
    for l in labels {
        counts[l] += 1;
    }
    let parts: Vec<String> = names
        .iter()
        .zip(counts)
        .map(|(n, c)| format!("{n}:{c}"))
        .collect();
    println!("class counts: {}", parts.join(" "));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
