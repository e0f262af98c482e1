//! `jamident`: generate datasets, train classifiers, evaluate them clean
//! and under FGSM attack, and audit the model's per-pass FLOPs.
//!
//! Every run is seeded and single-threaded by default; set
//! `JAMIDENT_THREADS` to parallelize dataset synthesis and evaluation
//! without changing any result. Exit code is 0 on success and 2 on any
//! validation or I/O failure (and for a FLOPs total outside the accepted
//! band).

use clap::{Args, Parser, Subcommand, ValueEnum};
use jamident_core::harness::checkpoint::{load_checkpoint, save_checkpoint, TrainingMeta};
use jamident_core::harness::config::RunConfig;
use jamident_core::harness::dataset;
use jamident_core::harness::eval::{eval_adversarial, evaluate, EvalMode};
use jamident_core::harness::report;
use jamident_core::diffnet::{DiffTransformer, ModelConfig};
use jamident_core::training::{train, TrainStrategy};
use std::fmt::Display;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "jamident", version, about = "Jamming identification workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML run configuration; unset fields fall back to defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset of mixed jamming+comm spectrograms.
    GenDataset {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory for the dataset files.
        #[arg(long)]
        out: PathBuf,
        /// Override the dataset seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Use the full-scale recipe (12 ISNRs x 400 samples per cell).
        #[arg(long)]
        full_scale: bool,
    },
    /// Train a classifier on a generated dataset's train split.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory for checkpoint and training log.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Strategy::Baseline)]
        strategy: Strategy,
        /// Override the training seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of epochs from the config.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Clean-accuracy evaluation on the test split.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        dataset: PathBuf,
        /// Directory holding checkpoint.json / checkpoint.bin.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory for CSV reports.
        #[arg(long)]
        out: PathBuf,
        /// Force single-pass inference even for masked-trained models.
        #[arg(long)]
        plain: bool,
    },
    /// FGSM robustness evaluation on the test split.
    AttackEval {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Budgets in 1/255 units, overriding the config list.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        plain: bool,
    },
    /// Print the analytic per-pass FLOPs breakdown and check the budget band.
    Flops,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Strategy {
    Baseline,
    Masked,
    Consistent,
}

impl Strategy {
    fn name(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Masked => "masked",
            Strategy::Consistent => "consistent",
        }
    }
}

fn fail(msg: impl Display) -> String {
    msg.to_string()
}

fn load_config(arg: &ConfigArg) -> Result<RunConfig, String> {
    match &arg.config {
        Some(path) => RunConfig::load(path).map_err(fail),
        None => Ok(RunConfig::default()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("cannot write {}: {}", path.display(), e))
}

/// Inference mode implied by how the checkpoint was trained: masked models
/// defend with a fresh-mask ensemble, everything else runs single-pass.
fn eval_mode(meta: &TrainingMeta, cfg: &RunConfig, plain: bool) -> EvalMode {
    if !plain && meta.strategy == "masked" {
        EvalMode::MaskedEnsemble {
            cfg: cfg.mask.clone(),
            seed: cfg.attack.defense_seed,
        }
    } else {
        EvalMode::Plain
    }
}

fn run() -> Result<(), String> {
    match Cli::parse().command {
        Command::GenDataset {
            config,
            out,
            seed,
            full_scale,
        } => {
            let mut cfg = load_config(&config)?;
            if full_scale {
                let seed_cfg = cfg.dataset.seed;
                cfg.dataset = jamident_core::harness::config::DatasetConfig {
                    seed: seed_cfg,
                    ..jamident_core::harness::config::DatasetConfig::full_scale()
                };
            }
            if let Some(s) = seed {
                cfg.dataset.seed = s;
            }
            let ds = dataset::generate(&cfg.dataset);
            dataset::save(&ds, &out).map_err(fail)?;
            println!(
                "{}",
                serde_json::json!({
                    "event": "dataset",
                    "out": out.display().to_string(),
                    "n_samples": ds.manifest.n_samples,
                    "train": ds.manifest.train_idx.len(),
                    "test": ds.manifest.test_idx.len(),
                    "seed": ds.manifest.seed,
                })
            );
            Ok(())
        }
        Command::Train {
            config,
            dataset: ds_dir,
            out,
            strategy,
            seed,
            epochs,
        } => {
            let cfg = {
                let mut c = load_config(&config)?;
                if let Some(s) = seed {
                    c.train.seed = s;
                }
                if let Some(e) = epochs {
                    c.train.epochs = e;
                }
                c
            };
            let ds = dataset::load(&ds_dir).map_err(fail)?;
            let train_images: Vec<_> = ds
                .manifest
                .train_idx
                .iter()
                .map(|&s| ds.images[s].clone())
                .collect();
            let train_labels: Vec<u8> =
                ds.manifest.train_idx.iter().map(|&s| ds.labels[s]).collect();

            let strat = match strategy {
                Strategy::Baseline => TrainStrategy::Baseline,
                Strategy::Masked => TrainStrategy::Masked(cfg.mask.clone()),
                Strategy::Consistent => TrainStrategy::Consistent(cfg.consistency.clone()),
            };
            fs::create_dir_all(&out)
                .map_err(|e| format!("cannot create {}: {}", out.display(), e))?;
            let log_path = out.join("train_log.jsonl");
            let mut log = fs::File::create(&log_path)
                .map_err(|e| format!("cannot create {}: {}", log_path.display(), e))?;

            let mut model = DiffTransformer::<f32>::new(&ModelConfig::full(), cfg.train.seed);
            train(
                &mut model,
                &train_images,
                &train_labels,
                &cfg.train,
                &strat,
                |stats| {
                    let line = serde_json::to_string(stats).expect("epoch stats serialize");
                    println!("{}", line);
                    writeln!(log, "{}", line).expect("write training log");
                },
            );

            let meta = TrainingMeta {
                strategy: strategy.name().to_string(),
                seed: cfg.train.seed,
                epochs: cfg.train.epochs,
                dataset_seed: ds.manifest.seed,
            };
            save_checkpoint(&out, &model, &meta).map_err(fail)?;
            let trainable: usize = model
                .params
                .entries()
                .iter()
                .filter(|e| e.trainable)
                .map(|e| e.value.numel())
                .sum();
            println!(
                "{}",
                serde_json::json!({
                    "event": "checkpoint",
                    "out": out.display().to_string(),
                    "strategy": meta.strategy,
                    "trainable_params": trainable,
                })
            );
            Ok(())
        }
        Command::Eval {
            config,
            dataset: ds_dir,
            checkpoint,
            out,
            plain,
        } => {
            let cfg = load_config(&config)?;
            let ds = dataset::load(&ds_dir).map_err(fail)?;
            let (model, meta) = load_checkpoint::<f32>(&checkpoint).map_err(fail)?;
            let mode = eval_mode(&meta, &cfg, plain);
            let r = evaluate(&model, &ds, &ds.manifest.test_idx, &mode);
            fs::create_dir_all(&out)
                .map_err(|e| format!("cannot create {}: {}", out.display(), e))?;
            write_file(&out.join("summary.csv"), &report::summary_csv(&r))?;
            write_file(
                &out.join("accuracy_by_isnr.csv"),
                &report::accuracy_by_isnr_csv(&r),
            )?;
            write_file(&out.join("confusion.csv"), &report::confusion_csv(&r))?;
            println!(
                "{}",
                serde_json::json!({
                    "event": "eval",
                    "n": r.n,
                    "accuracy": r.accuracy,
                    "strategy": meta.strategy,
                })
            );
            Ok(())
        }
        Command::AttackEval {
            config,
            dataset: ds_dir,
            checkpoint,
            out,
            eps,
            plain,
        } => {
            let cfg = load_config(&config)?;
            let eps = eps.unwrap_or_else(|| cfg.attack.eps_255.clone());
            if eps.iter().any(|&e| !(0.0..=255.0).contains(&e)) {
                return Err(format!("epsilon list {:?} leaves [0, 255]", eps));
            }
            let ds = dataset::load(&ds_dir).map_err(fail)?;
            let (model, meta) = load_checkpoint::<f32>(&checkpoint).map_err(fail)?;
            let mode = eval_mode(&meta, &cfg, plain);
            let rows = eval_adversarial(
                &model,
                &ds,
                &ds.manifest.test_idx,
                &eps,
                &mode,
                cfg.attack.attack_seed,
            );
            fs::create_dir_all(&out)
                .map_err(|e| format!("cannot create {}: {}", out.display(), e))?;
            write_file(&out.join("adversarial.csv"), &report::adversarial_csv(&rows))?;
            write_file(
                &out.join("adversarial_by_isnr.csv"),
                &report::adversarial_by_isnr_csv(&rows),
            )?;
            for row in &rows {
                println!(
                    "{}",
                    serde_json::json!({
                        "event": "attack_eval",
                        "eps_255": row.eps_255,
                        "accuracy": row.report.accuracy,
                        "strategy": meta.strategy,
                    })
                );
            }
            Ok(())
        }
        Command::Flops => {
            let (text, in_band) = report::flops_report(&ModelConfig::full());
            print!("{}", text);
            if in_band {
                Ok(())
            } else {
                Err(format!(
                    "per-pass FLOPs outside the accepted band [{}, {}]",
                    report::FLOPS_BAND.0,
                    report::FLOPS_BAND.1
                ))
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {}", msg);
            ExitCode::from(2)
        }
    }
}
