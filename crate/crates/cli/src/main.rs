//! Command-line entry point: one subcommand per pipeline stage, plus the
//! power calculator, cost report and synthetic recovery driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use diffaudit_core::config::{RunConfig, RunMode};
use diffaudit_core::error::Error;
use diffaudit_core::harness;
use diffaudit_core::llmclient::estimate_cost;
use diffaudit_core::pipeline::{build_http_client, PipelineRun};
use diffaudit_core::statcore::{min_detectable_auc, min_significant_auc, required_judgments};
use diffaudit_core::synthetic::{
    mock_client_factory, recovery_headline, run_recovery, write_mock_persona_bank, SyntheticOptions,
};

#[derive(Parser)]
#[command(name = "diffaudit", version, about = "Contrastive model-difference auditing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the run id.
    #[arg(long)]
    run_id: Option<String>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the execution mode (live|record|replay).
    #[arg(long)]
    mode: Option<String>,
    /// Override the output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the fixture store directory.
    #[arg(long)]
    fixtures_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Load the probe dataset and emit the normalized prompt bank.
    Ingest(ConfigArgs),
    /// Embed prompts and build semantic contexts (or adopt categories).
    Cluster(ConfigArgs),
    /// Generate paired responses and the construction/validation split.
    Generate(ConfigArgs),
    /// Propose one hypothesis per context and score its judgment set.
    Hypothesize(ConfigArgs),
    /// Cross-context AUC plus BH verdicts; writes the run ledger.
    Validate(ConfigArgs),
    /// Cluster validated hypotheses and pick representatives.
    Consolidate(ConfigArgs),
    /// Thematic summary of validated hypotheses.
    Summarize(ConfigArgs),
    /// Metrics table and cost report from the ledger.
    Report(ConfigArgs),
    /// Inject personas into M2 and measure recovery.
    SyntheticRecover {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run against scripted mock models (offline).
        #[arg(long)]
        mock: bool,
        /// Comma-separated persona keys; default is the full table.
        #[arg(long, value_delimiter = ',')]
        personas: Vec<String>,
        /// Repeats per injected persona.
        #[arg(long, default_value_t = 4)]
        repeats: u32,
        /// Output directory for recovery artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Prompts per persona category in the generated mock bank.
        #[arg(long, default_value_t = 12)]
        mock_prompts: usize,
    },
    /// Closed-form power planning for the discriminative test.
    Power {
        /// Total held-out judgments N (balanced design).
        #[arg(long)]
        n: Option<u64>,
        /// One-sided significance level.
        #[arg(long)]
        alpha: f64,
        /// Type-II error rate; enables the powered variant.
        #[arg(long)]
        beta: Option<f64>,
        /// Target AUC gap; prints the judgments needed to detect it.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Token usage and dollar cost of a run.
    Cost(ConfigArgs),
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::from_file(&args.config)?;
    if let Some(run_id) = &args.run_id {
        cfg.run_id = run_id.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = &args.mode {
        cfg.mode = match mode.as_str() {
            "live" => RunMode::Live,
            "record" => RunMode::Record,
            "replay" => RunMode::Replay,
            other => return Err(Error::Config(format!("unknown mode `{other}`"))),
        };
    }
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(dir) = &args.fixtures_dir {
        cfg.fixtures_dir = Some(dir.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open_run(args: &ConfigArgs) -> Result<PipelineRun, Error> {
    let cfg = load_config(args)?;
    let client = build_http_client(&cfg)?;
    PipelineRun::new(cfg, client)
}

fn run_stage(args: &ConfigArgs, stage: &str) -> Result<(), Error> {
    let run = open_run(args)?;
    match stage {
        "ingest" => {
            let bank = run.ingest()?;
            println!(
                "ingested {} prompts into {}",
                bank.records.len(),
                run.path("bank.jsonl").display()
            );
        }
        "cluster" => {
            let set = run.cluster()?;
            println!("built {} contexts", set.contexts.len());
        }
        "generate" => {
            run.generate()?;
            println!("generations written to {}", run.path("generations.jsonl").display());
        }
        "hypothesize" => {
            let hypotheses = run.hypothesize()?;
            println!("proposed {} hypotheses", hypotheses.len());
        }
        "validate" => {
            let rows = run.validate()?;
            let validated = rows.iter().filter(|r| r.validated).count();
            println!("validated {validated} of {} hypotheses", rows.len());
        }
        "consolidate" => {
            let compression = run.consolidate()?;
            if compression.skipped {
                println!(
                    "compression skipped (fewer than 9 hypotheses); {} representatives",
                    compression.representatives.len()
                );
            } else {
                println!(
                    "chose k={} (silhouette {:.3}); {} representatives",
                    compression.chosen_k,
                    compression.silhouette.unwrap_or(f64::NAN),
                    compression.representatives.len()
                );
            }
        }
        "summarize" => {
            let summary = run.summarize()?;
            println!(
                "summary written ({} categories parsed)",
                summary.parsed.map(|p| p.categories.len()).unwrap_or(0)
            );
        }
        "report" => {
            let table = run.report()?;
            println!("metrics rows: {}", table.len());
        }
        _ => unreachable!("stage names are fixed"),
    }
    Ok(())
}

fn run_power(n: Option<u64>, alpha: f64, beta: Option<f64>, delta: Option<f64>) -> Result<(), Error> {
    match (n, beta, delta) {
        (_, Some(beta), Some(delta)) => {
            let judgments = required_judgments(delta, alpha, beta)?;
            println!(
                "judgments needed (delta={delta}, alpha={alpha}, power={:.2}): {judgments}",
                1.0 - beta
            );
        }
        (_, None, Some(delta)) => {
            let judgments = required_judgments(delta, alpha, 0.2)?;
            println!("judgments needed (delta={delta}, alpha={alpha}, power=0.80): {judgments}");
        }
        (Some(n), Some(beta), None) => {
            let auc = min_detectable_auc(n, alpha, beta)?;
            println!(
                "minimum detectable AUC (N={n}, alpha={alpha}, power={:.2}): {auc:.3}",
                1.0 - beta
            );
        }
        (Some(n), None, None) => {
            let auc = min_significant_auc(n, alpha)?;
            println!("minimum significant AUC (N={n}, alpha={alpha}): {auc:.3}");
        }
        (None, _, None) => {
            return Err(Error::InvalidInput(
                "power needs --n (for AUC thresholds) or --delta (for a judgment budget)".into(),
            ))
        }
    }
    Ok(())
}

fn run_cost(args: &ConfigArgs) -> Result<(), Error> {
    let run = open_run(args)?;
    let usage = run.read_usage_totals()?;
    let report = estimate_cost(&usage, &run.cfg.roles)?;
    for role_cost in &report.per_role {
        println!(
            "{}\tin={}\tout={}\t${:.4}",
            role_cost.role,
            role_cost.usage.input_tokens,
            role_cost.usage.output_tokens,
            role_cost.dollars
        );
    }
    println!("total\t${:.4}", report.total_dollars);
    run.write_cost_report()?;
    Ok(())
}

fn run_synthetic(
    config: &ConfigArgs,
    mock: bool,
    personas: Vec<String>,
    repeats: u32,
    out: Option<PathBuf>,
    mock_prompts: usize,
) -> Result<(), Error> {
    let mut cfg = load_config(config)?;
    let output_dir = out.unwrap_or_else(|| cfg.output_dir.join("synthetic"));
    std::fs::create_dir_all(&output_dir).map_err(|e| Error::Io {
        path: output_dir.display().to_string(),
        source: e,
    })?;

    if mock {
        let table = harness::builtin_personas();
        let bank_path = output_dir.join("mock_persona_bank.jsonl");
        write_mock_persona_bank(&bank_path, &table, mock_prompts)?;
        cfg.dataset.path = bank_path;
        cfg.dataset.text_field = "statement".into();
        cfg.dataset.category_field = Some("behavior".into());
        cfg.dataset.delimiter = None;
    }

    let options = SyntheticOptions {
        personas,
        repeats,
        output_dir,
    };
    let table = if mock {
        let factory = mock_client_factory(cfg.seed);
        run_recovery(&cfg, &options, &factory)?
    } else {
        run_recovery(&cfg, &options, &|inner_cfg, _persona| build_http_client(inner_cfg))?
    };
    for (key, value) in recovery_headline(&table) {
        println!("{key}\t{value}");
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest(args) => run_stage(&args, "ingest"),
        Command::Cluster(args) => run_stage(&args, "cluster"),
        Command::Generate(args) => run_stage(&args, "generate"),
        Command::Hypothesize(args) => run_stage(&args, "hypothesize"),
        Command::Validate(args) => run_stage(&args, "validate"),
        Command::Consolidate(args) => run_stage(&args, "consolidate"),
        Command::Summarize(args) => run_stage(&args, "summarize"),
        Command::Report(args) => run_stage(&args, "report"),
        Command::SyntheticRecover {
            config,
            mock,
            personas,
            repeats,
            out,
            mock_prompts,
        } => run_synthetic(&config, mock, personas, repeats, out, mock_prompts),
        Command::Power { n, alpha, beta, delta } => run_power(n, alpha, beta, delta),
        Command::Cost(args) => run_cost(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
