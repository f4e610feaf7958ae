use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use knowedit::editor::NoiseVariant;
use knowedit::eval::Suite;
use knowedit::experiment::{
    default_alphas, run_data, run_edit, run_eval, run_pipeline, run_probe, run_train, sweep_alpha, ExperimentConfig,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "knowedit", version, about = "Toy-scale knowledge editing experiments")]
struct Cli {
    /// JSON experiment config; defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or import) the fact dataset.
    GenData {
        #[arg(long)]
        n_subjects: Option<usize>,
        /// Comma-separated relation names.
        #[arg(long, value_delimiter = ',')]
        relations: Option<Vec<String>>,
    },
    /// Train the toy model on the dataset.
    Train {
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Activation, attention and lexical probes on the trained model.
    Probe,
    /// Edit a batch of facts into the trained model.
    Edit {
        #[arg(long)]
        variant: Option<NoiseVariant>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        n_edits: Option<usize>,
    },
    /// Evaluate the edited model.
    Eval {
        #[arg(long, value_parser = parse_suite)]
        suite: Option<Suite>,
    },
    /// Re-run edit and evaluation for several noise scales.
    SweepAlpha {
        /// Comma-separated scales; defaults to 0.05 through 0.50.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// All stages: data, train, probe, edit, eval.
    Pipeline,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    match s.to_ascii_lowercase().as_str() {
        "zsre" => Ok(Suite::Zsre),
        "counterfacts" | "cf" => Ok(Suite::Counterfacts),
        _ => Err(format!("unknown suite {s:?} (expected zsre or counterfacts)")),
    }
}

fn run(cli: Cli) -> knowedit::Result<serde_json::Value> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    let out = cfg.output_dir.display().to_string();
    Ok(match cli.command {
        Command::GenData { n_subjects, relations } => {
            if let Some(n) = n_subjects {
                cfg.dataset.n_subjects = n;
            }
            if let Some(r) = relations {
                cfg.dataset.relations = r;
            }
            let records = run_data(&cfg)?;
            json!({ "stage": "data", "records": records.len(), "out": out })
        }
        Command::Train { steps } => {
            if let Some(s) = steps {
                cfg.train.steps = s;
            }
            let (_, vocab, summary) = run_train(&cfg)?;
            json!({
                "stage": "train",
                "vocab_size": vocab.len(),
                "final_loss": summary.losses.last(),
                "recall": summary.recall,
                "out": out,
            })
        }
        Command::Probe => {
            let report = run_probe(&cfg)?;
            let layers: Vec<_> = report
                .layers
                .iter()
                .map(|l| json!({ "layer": l.layer, "skewness_experimental": l.experimental.skewness, "skewness_control": l.control.skewness }))
                .collect();
            json!({ "stage": "probe", "layers": layers, "lexical": report.lexical, "out": out })
        }
        Command::Edit { variant, alpha, n_edits } => {
            if let Some(v) = variant {
                cfg.variant = v;
            }
            if alpha.is_some() {
                cfg.alpha = alpha;
            }
            if let Some(n) = n_edits {
                cfg.n_edits = n;
            }
            cfg.validate()?;
            let (_, outcome) = run_edit(&cfg)?;
            let steps: Vec<usize> = outcome.deltas.iter().map(|d| d.log.steps).collect();
            json!({ "stage": "edit", "edits": steps.len(), "steps": steps, "max_abs_update": outcome.delta.max_abs(), "out": out })
        }
        Command::Eval { suite } => {
            if let Some(s) = suite {
                cfg.suite = s;
            }
            let report = run_eval(&cfg)?;
            json!({ "stage": "eval", "metrics": report.metrics, "sanity": report.sanity, "out": out })
        }
        Command::SweepAlpha { alphas } => {
            let alphas = alphas.unwrap_or_else(default_alphas);
            let rows = sweep_alpha(&cfg, &alphas)?;
            json!({ "stage": "sweep", "rows": rows, "out": out })
        }
        Command::Pipeline => {
            let result = run_pipeline(&cfg)?;
            json!({ "stage": "pipeline", "recall": result.train.recall, "metrics": result.report.metrics, "out": out })
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
