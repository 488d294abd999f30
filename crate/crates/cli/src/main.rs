//! `redual` — dual-encoder relation extraction with instance-adapted
//! predicate descriptions.
//!
//! Subcommands: `validate`, `train`, `eval`, `predict`, `gradcheck`,
//! `sweep`, `ablate`. Configuration comes from one TOML file plus flag
//! overrides (flags win). Exit codes: 0 success, 1 contract/validation
//! failure, 2 I/O failure.

mod config;

use clap::{Args, Parser, Subcommand};
use config::{resolve, FileConfig, Overrides, RunConfig};
use redual_core::checkpoint::Checkpoint;
use redual_core::data::Dataset;
use redual_core::model::check::{gradcheck_model, MODEL_TOLERANCE};
use redual_core::schema::PredicateSchema;
use redual_core::tensor::check::{check_primitives, PRIMITIVE_TOLERANCE};
use redual_core::train::experiments::{
    ablate, alpha_sweep, render_ablation_text, render_sweep_text,
};
use redual_core::train::{evaluate, predict_dataset, render_log_jsonl, train_pipeline};
use redual_core::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "redual",
    version,
    about = "Dual-encoder relation extraction with instance-adapted predicate descriptions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every run-style subcommand. Values given here override
/// the config file.
#[derive(Args, Debug, Default)]
struct RunFlags {
    /// TOML run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training set (JSONL).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Development set (JSONL).
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Test set (JSONL).
    #[arg(long)]
    test: Option<PathBuf>,
    /// Predicate schema file.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Output directory (checkpoint, train_log.jsonl, ...).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cross-entropy weight in the unified loss, in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// NULL pairs kept per labeled pair during training; 0 disables the cap.
    #[arg(long)]
    null_cap: Option<usize>,
    /// Drop the [CLS] concatenation from description representations.
    #[arg(long)]
    no_cls_concat: bool,
    /// Drop the cross-entropy term from the training loss.
    #[arg(long)]
    no_ce_loss: bool,
    /// Share one encoder between input and descriptions.
    #[arg(long)]
    shared_encoder: bool,
    /// Only generate pairs whose type pair occurs in gold training data.
    #[arg(long)]
    type_filter: bool,
    /// Contrastive softmax temperature.
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset and schema without training.
    Validate {
        /// Dataset (JSONL).
        #[arg(long)]
        data: PathBuf,
        /// Predicate schema file.
        #[arg(long)]
        schema: PathBuf,
    },
    /// Train a model and save the best-dev checkpoint plus the log.
    Train(Box<RunFlags>),
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Emit per-pair predictions with the full similarity vector.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// One training run per loss weight; emits an (alpha, P, R, F1) table.
    Sweep {
        #[command(flatten)]
        flags: Box<RunFlags>,
        /// Comma-separated loss weights.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.3, 0.5, 0.7])]
        alphas: Vec<f64>,
    },
    /// Run the four model variants and report each test micro-F1.
    Ablate(Box<RunFlags>),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { data, schema } => cmd_validate(&data, &schema),
        Command::Train(flags) => cmd_train(&flags),
        Command::Eval {
            checkpoint,
            data,
            out_dir,
        } => cmd_eval(&checkpoint, &data, out_dir.as_deref()),
        Command::Predict {
            checkpoint,
            data,
            out_dir,
        } => cmd_predict(&checkpoint, &data, out_dir.as_deref()),
        Command::Gradcheck { seed } => cmd_gradcheck(seed),
        Command::Sweep { flags, alphas } => cmd_sweep(&flags, &alphas),
        Command::Ablate(flags) => cmd_ablate(&flags),
    }
}

fn load_run(flags: &RunFlags) -> Result<RunConfig> {
    let file = match &flags.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let overrides = Overrides {
        seed: flags.seed,
        alpha: flags.alpha,
        epochs: flags.epochs,
        batch_size: flags.batch_size,
        lr: flags.lr,
        null_cap: flags.null_cap,
        no_cls_concat: flags.no_cls_concat,
        no_ce_loss: flags.no_ce_loss,
        shared_encoder: flags.shared_encoder,
        type_filter: flags.type_filter,
        temperature: flags.temperature,
    };
    let mut run = resolve(file, &overrides);
    if flags.train.is_some() {
        run.train_path = flags.train.clone();
    }
    if flags.dev.is_some() {
        run.dev_path = flags.dev.clone();
    }
    if flags.test.is_some() {
        run.test_path = flags.test.clone();
    }
    if flags.schema.is_some() {
        run.schema_path = flags.schema.clone();
    }
    if flags.out_dir.is_some() {
        run.out_dir = flags.out_dir.clone();
    }
    Ok(run)
}

fn require(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| Error::Config(format!("missing required path: {what}")))
}

fn cmd_validate(data: &Path, schema_path: &Path) -> Result<ExitCode> {
    let mut violations: Vec<String> = Vec::new();

    let schema = match PredicateSchema::load(schema_path) {
        Ok(s) => Some(s),
        Err(Error::SchemaViolations(v)) => {
            violations.extend(v.into_iter().map(|m| format!("schema: {m}")));
            None
        }
        Err(e) => return Err(e),
    };

    if let Some(schema) = &schema {
        match Dataset::load(data, schema) {
            Ok(dataset) => {
                // every (predicate, observed type pair) must resolve to a
                // template, or batches cannot be built later
                let mut checked = std::collections::BTreeSet::new();
                for inst in dataset.instances() {
                    for a in &inst.mentions {
                        for b in &inst.mentions {
                            checked.insert((a.entity_type.clone(), b.entity_type.clone()));
                        }
                    }
                }
                for (st, ot) in &checked {
                    for p in schema.predicates() {
                        if let Err(e) = schema.resolve_template(p, st, ot) {
                            violations.push(e.to_string());
                        }
                    }
                }
                if violations.is_empty() {
                    println!(
                        "{} instances, {} mentions, {} relations",
                        dataset.len(),
                        dataset.instances().iter().map(|i| i.mentions.len()).sum::<usize>(),
                        dataset.instances().iter().map(|i| i.gold.len()).sum::<usize>(),
                    );
                }
            }
            Err(Error::DataViolations(v)) => {
                violations.extend(v.into_iter().map(|x| x.to_string()));
            }
            Err(e) => return Err(e),
        }
    }

    if violations.is_empty() {
        println!("0 violations");
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &violations {
            println!("{v}");
        }
        println!("{} violations", violations.len());
        Ok(ExitCode::from(1))
    }
}

fn cmd_train(flags: &RunFlags) -> Result<ExitCode> {
    let run = load_run(flags)?;
    run.model_cfg.validate()?;
    run.train_cfg.validate()?;
    let schema = PredicateSchema::load(&require(&run.schema_path, "schema")?)?;
    let train_set = Dataset::load(&require(&run.train_path, "train")?, &schema)?;
    let dev_set = Dataset::load(&require(&run.dev_path, "dev")?, &schema)?;
    let out_dir = require(&run.out_dir, "out_dir")?;

    let pipeline = train_pipeline(
        &train_set,
        &dev_set,
        &schema,
        &run.enc_cfg,
        &run.model_cfg,
        &run.train_cfg,
    )?;

    std::fs::create_dir_all(&out_dir)?;
    let checkpoint = Checkpoint {
        enc_cfg: pipeline.enc_cfg.clone(),
        model_cfg: run.model_cfg.clone(),
        schema,
        vocab: pipeline.vocab.clone(),
        params: pipeline.outcome.params.clone(),
    };
    checkpoint.save(&out_dir.join("checkpoint"))?;
    std::fs::write(
        out_dir.join("train_log.jsonl"),
        render_log_jsonl(&pipeline.outcome.log),
    )?;

    for record in &pipeline.outcome.log {
        println!(
            "epoch {:>3}  l_ce {:.4}  l_ct {:.4}  l_u {:.4}  dev P {:.4} R {:.4} F1 {:.4}",
            record.epoch,
            record.mean_l_ce,
            record.mean_l_ct,
            record.mean_l_u,
            record.dev_p,
            record.dev_r,
            record.dev_f1
        );
    }
    let best = pipeline
        .outcome
        .log
        .iter()
        .find(|r| r.epoch == pipeline.outcome.best_epoch)
        .expect("best epoch is logged");
    println!(
        "best epoch {}: dev P {:.4} R {:.4} F1 {:.4}",
        best.epoch, best.dev_p, best.dev_r, best.dev_f1
    );
    println!("checkpoint: {}", out_dir.join("checkpoint").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(checkpoint: &Path, data: &Path, out_dir: Option<&Path>) -> Result<ExitCode> {
    let ck = Checkpoint::load(checkpoint)?;
    let dataset = Dataset::load(data, &ck.schema)?;
    let report = evaluate(
        &ck.params,
        &ck.enc_cfg,
        &ck.model_cfg,
        &dataset,
        &ck.schema,
        &ck.vocab,
    )?;

    println!(
        "micro  P {:.4}  R {:.4}  F1 {:.4}",
        report.micro_precision, report.micro_recall, report.micro_f1
    );
    for counts in &report.per_predicate {
        println!(
            "{:<24} TP {:>5}  FP {:>5}  FN {:>5}",
            counts.predicate, counts.tp, counts.fp, counts.fn_
        );
    }

    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("eval_report.json"), &json)?;
            println!("report: {}", dir.join("eval_report.json").display());
        }
        None => print!("{}", String::from_utf8_lossy(&json)),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_predict(checkpoint: &Path, data: &Path, out_dir: Option<&Path>) -> Result<ExitCode> {
    let ck = Checkpoint::load(checkpoint)?;
    let dataset = Dataset::load(data, &ck.schema)?;
    let records = predict_dataset(
        &ck.params,
        &ck.enc_cfg,
        &ck.model_cfg,
        &dataset,
        &ck.schema,
        &ck.vocab,
    )?;
    let mut lines = String::new();
    for record in &records {
        lines.push_str(&serde_json::to_string(record)?);
        lines.push('\n');
    }
    match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("predictions.jsonl"), lines)?;
            println!(
                "{} predictions: {}",
                records.len(),
                dir.join("predictions.jsonl").display()
            );
        }
        None => print!("{lines}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(seed: u64) -> Result<ExitCode> {
    let mut failed = false;
    println!("primitive checks (tolerance {PRIMITIVE_TOLERANCE:.0e}):");
    for outcome in check_primitives(seed)? {
        let ok = outcome.passes(PRIMITIVE_TOLERANCE);
        failed |= !ok;
        println!(
            "  {:<20} max rel err {:>10.3e}  {}",
            outcome.name,
            outcome.max_rel_err,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!("model parameter groups (tolerance {MODEL_TOLERANCE:.0e}):");
    for outcome in gradcheck_model(seed)? {
        let ok = outcome.passes(MODEL_TOLERANCE);
        failed |= !ok;
        println!(
            "  {:<28} max rel err {:>10.3e}  {}",
            outcome.name,
            outcome.max_rel_err,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    Ok(if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_sweep(flags: &RunFlags, alphas: &[f64]) -> Result<ExitCode> {
    let run = load_run(flags)?;
    let schema = PredicateSchema::load(&require(&run.schema_path, "schema")?)?;
    let train_set = Dataset::load(&require(&run.train_path, "train")?, &schema)?;
    let dev_set = Dataset::load(&require(&run.dev_path, "dev")?, &schema)?;

    let rows = alpha_sweep(
        &train_set,
        &dev_set,
        &schema,
        &run.enc_cfg,
        &run.model_cfg,
        &run.train_cfg,
        alphas,
    )?;
    let text = render_sweep_text(&rows);
    print!("{text}");
    if let Some(dir) = &run.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep_table.txt"), &text)?;
        let mut json = serde_json::to_vec_pretty(&rows)?;
        json.push(b'\n');
        std::fs::write(dir.join("sweep_table.json"), json)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_ablate(flags: &RunFlags) -> Result<ExitCode> {
    let run = load_run(flags)?;
    let schema = PredicateSchema::load(&require(&run.schema_path, "schema")?)?;
    let train_set = Dataset::load(&require(&run.train_path, "train")?, &schema)?;
    let dev_set = Dataset::load(&require(&run.dev_path, "dev")?, &schema)?;
    let test_set = Dataset::load(&require(&run.test_path, "test")?, &schema)?;

    let rows = ablate(
        &train_set,
        &dev_set,
        &test_set,
        &schema,
        &run.enc_cfg,
        &run.model_cfg,
        &run.train_cfg,
    )?;
    let text = render_ablation_text(&rows);
    print!("{text}");
    if let Some(dir) = &run.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("ablation_table.txt"), &text)?;
        let mut json = serde_json::to_vec_pretty(&rows)?;
        json.push(b'\n');
        std::fs::write(dir.join("ablation_table.json"), json)?;
    }
    Ok(ExitCode::SUCCESS)
}
