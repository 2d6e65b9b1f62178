//! `fallacy-forge` command-line entry point.
//!
//! Exit codes: 0 success, 1 property violation, 2 input error, 3 fatal I/O.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use fallacy_forge::corpus::{
    expand_corpus, import_plain_text, load_corpus, save_corpus, Domain, PromptRecord, PromptTemplate, Statement,
};
use fallacy_forge::dual::{
    render_experiment_csv, run_experiment_sweep, synthesize_dataset, train, ExperimentResult, Thresholds, ToyDataset,
    TrainConfig,
};
use fallacy_forge::eval::{parse_endpoints, read_log, run_evaluation, EvalOptions, HttpTransport};
use fallacy_forge::exec::Execution;
use fallacy_forge::logic::{enumerate_rules, parse_rule_list, LogicalRule, NegationStyle};
use fallacy_forge::manifest::{file_checksum, RunManifest};
use fallacy_forge::metrics::golden::{self, GoldenDomain};
use fallacy_forge::metrics::{render_table, ResultTable, TableFormat};
use fallacy_forge::{EvalError, MetricsError};
use serde::Serialize;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "fallacy-forge",
    version,
    about = "Probe and train models on conditional-reasoning fallacies"
)]
struct Cli {
    /// Overrides the seed of commands that use one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print errors and primary output.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Expand a corpus into one prompt per (statement, rule).
    Variants(VariantsArgs),
    /// Query model endpoints for every prompt, resuming from the log.
    Eval(EvalArgs),
    /// Aggregate a judgment log into the rule-by-model table.
    Report(ReportArgs),
    /// Train the toy judge on synthetic or corpus-derived pairs.
    Train(TrainArgs),
    /// Compare negation-aware training against positive-only training.
    Experiment(ExperimentArgs),
    /// Convert plain "A implies B" lines into a corpus file.
    ImportCorpus(ImportArgs),
}

#[derive(Args, Debug, Serialize)]
struct PromptArgs {
    /// Corpus JSONL file.
    #[arg(long)]
    corpus: PathBuf,
    /// Comma-separated rule codes, e.g. `PQ,nQnP`. Defaults to all eight.
    #[arg(long)]
    rules: Option<String>,
    /// Negation style: `no` or `not`.
    #[arg(long, default_value = "no")]
    negation: String,
    /// Template file containing `{lhs}` and `{rhs}`.
    #[arg(long, conflicts_with = "bare_template")]
    template: Option<PathBuf>,
    /// Use the template without the answer-format instruction.
    #[arg(long)]
    bare_template: bool,
}

#[derive(Args, Debug, Serialize)]
struct VariantsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    prompts: PromptArgs,
    /// Output JSONL file of prompt records.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    prompts: PromptArgs,
    /// JSON list of endpoint definitions.
    #[arg(long)]
    endpoints: PathBuf,
    /// Append-only judgment log.
    #[arg(long)]
    log: PathBuf,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u16).range(1..))]
    concurrency: u16,
}

#[derive(Args, Debug, Serialize)]
struct ReportArgs {
    /// Judgment log to aggregate.
    #[arg(long, required_unless_present = "golden")]
    log: Option<PathBuf>,
    /// `markdown` or `csv`.
    #[arg(long, default_value = "markdown")]
    format: String,
    /// Write the table here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also print the published fractions for `medical` or `environmental`.
    #[arg(long)]
    golden: Option<String>,
    /// Comma-separated model column order.
    #[arg(long)]
    models: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// JSON training config; unspecified fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Train on the first statements of this corpus instead of synthetic pairs.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output JSON with the initial and final parameters.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss and margin CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ExperimentArgs {
    /// JSON training config; unspecified fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-epoch CSV for both arms of every seed.
    #[arg(long)]
    out: PathBuf,
    /// Number of consecutive seeds starting at the configured seed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    /// Run seeds one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug, Serialize)]
struct ImportArgs {
    /// Text file with one implication per line.
    #[arg(long)]
    input: PathBuf,
    /// Output corpus JSONL.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    domain: String,
    /// Prefix for generated ids.
    #[arg(long, default_value = "s")]
    id_prefix: String,
}

/// An error carrying the process exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait Classify<T> {
    fn input(self) -> Result<T, Failure>;
    fn fatal(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: 2,
            error: e.into(),
        })
    }

    fn fatal(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: 3,
            error: e.into(),
        })
    }
}

/// `Ok(true)` means every checked property held.
type Outcome = Result<bool, Failure>;

struct Session {
    seed: Option<u64>,
    quiet: bool,
}

impl Session {
    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", text.as_ref());
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let ctx = Session {
        seed: cli.seed,
        quiet: cli.quiet,
    };
    let result = match &cli.command {
        Command::Variants(a) => cmd_variants(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Report(a) => cmd_report(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Experiment(a) => cmd_experiment(&ctx, a),
        Command::ImportCorpus(a) => cmd_import(&ctx, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn write_manifest(
    command: &str,
    config: impl Serialize,
    checksum: Option<String>,
    artifact: &Path,
) -> Result<(), Failure> {
    let config = serde_json::to_value(config).expect("arguments serialize");
    let path = RunManifest::new(command, config, checksum)
        .write_for(artifact)
        .with_context(|| format!("writing manifest for {}", artifact.display()))
        .fatal()?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_artifact(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .fatal()
}

fn checksum(path: &Path) -> Result<String, Failure> {
    file_checksum(path)
        .with_context(|| format!("reading {}", path.display()))
        .input()
}

struct Prompts {
    records: Vec<PromptRecord>,
    checksum: String,
    template: String,
}

fn build_prompts(args: &PromptArgs) -> Result<Prompts, Failure> {
    let statements = load_corpus(&args.corpus).input()?;
    let rules: Vec<LogicalRule> = match &args.rules {
        Some(list) => parse_rule_list(list).input()?,
        None => enumerate_rules(),
    };
    let style: NegationStyle = args.negation.parse().input()?;
    let template = match (&args.template, args.bare_template) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading template {}", path.display()))
                .input()?;
            PromptTemplate::new(text.trim_end_matches('\n')).input()?
        }
        (None, true) => PromptTemplate::bare(),
        (None, false) => PromptTemplate::default(),
    };
    let records = expand_corpus(&statements, &rules, style, &template).input()?;
    Ok(Prompts {
        records,
        checksum: checksum(&args.corpus)?,
        template: template.as_str().to_string(),
    })
}

fn cmd_variants(ctx: &Session, args: &VariantsArgs) -> Outcome {
    let prompts = build_prompts(&args.prompts)?;
    let mut text = String::new();
    for record in &prompts.records {
        text.push_str(&serde_json::to_string(record).expect("record serializes"));
        text.push('\n');
    }
    write_artifact(&args.out, &text)?;
    write_manifest(
        "variants",
        json!({ "args": args, "template_text": prompts.template }),
        Some(prompts.checksum),
        &args.out,
    )?;
    println!("{} prompts written to {}", prompts.records.len(), args.out.display());
    ctx.say(format!(
        "manifest: {}",
        fallacy_forge::manifest::manifest_path(&args.out).display()
    ));
    Ok(true)
}

fn classify_eval(e: EvalError) -> Failure {
    match e {
        EvalError::Config(_) | EvalError::Corpus(_) => Failure {
            code: 2,
            error: e.into(),
        },
        EvalError::LogIo { .. } | EvalError::LogParse { .. } => Failure {
            code: 3,
            error: e.into(),
        },
    }
}

fn cmd_eval(ctx: &Session, args: &EvalArgs) -> Outcome {
    let prompts = build_prompts(&args.prompts)?;
    let endpoints_text = fs::read_to_string(&args.endpoints)
        .with_context(|| format!("reading endpoints {}", args.endpoints.display()))
        .input()?;
    let endpoints = parse_endpoints(&endpoints_text).map_err(classify_eval)?;
    if endpoints.is_empty() {
        return Err(anyhow!("endpoint list is empty")).input();
    }
    let transport = HttpTransport::from_env();
    let options = EvalOptions {
        concurrency: args.concurrency as usize,
        cancel: None,
    };
    let summary =
        run_evaluation(&transport, &prompts.records, &endpoints, &args.log, options).map_err(classify_eval)?;
    write_manifest(
        "eval",
        json!({ "args": args, "template_text": prompts.template, "endpoints": endpoints }),
        Some(prompts.checksum),
        &args.log,
    )?;
    if ctx.quiet {
        println!(
            "{} new queries, {} judgments in log",
            summary.new_queries, summary.total_judgments
        );
    } else {
        print!("{summary}");
    }
    Ok(true)
}

fn cmd_report(ctx: &Session, args: &ReportArgs) -> Outcome {
    let format: TableFormat = args.format.parse().map_err(|e: String| anyhow!(e)).input()?;
    let golden: Option<GoldenDomain> = match &args.golden {
        Some(name) => Some(name.parse().map_err(|e: String| anyhow!(e)).input()?),
        None => None,
    };
    let models: Option<Vec<String>> = args.models.as_ref().map(|list| {
        list.split(',')
            .map(|m| m.trim().to_string())
            .filter(|m| !m.is_empty())
            .collect()
    });

    let mut output = String::new();
    let mut log_checksum = None;
    if let Some(log_path) = &args.log {
        if !log_path.exists() {
            return Err(anyhow!("run log {} does not exist", log_path.display())).input();
        }
        let judgments = read_log(log_path).input()?;
        let table = ResultTable::from_judgments(&judgments, models.as_deref()).map_err(|e| match e {
            MetricsError::EmptyLog => Failure {
                code: 2,
                error: anyhow!("run log {} has no judgments", log_path.display()),
            },
            other => Failure {
                code: 2,
                error: other.into(),
            },
        })?;
        output.push_str(&render_table(&table, format));
        log_checksum = Some(checksum(log_path)?);
    }
    if let Some(domain) = golden {
        if !output.is_empty() {
            output.push('\n');
        }
        output.push_str(&golden::report(domain));
    }

    match &args.out {
        Some(out) => {
            write_artifact(out, &output)?;
            write_manifest("report", args, log_checksum, out)?;
            ctx.say(format!("table written to {}", out.display()));
        }
        None => {
            print!("{output}");
            // no artifact file: the manifest sits beside the log it summarizes
            if let Some(log_path) = &args.log {
                let mut anchor = log_path.as_os_str().to_os_string();
                anchor.push(".report");
                write_manifest("report", args, log_checksum, Path::new(&anchor))?;
            }
        }
    }
    Ok(true)
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<TrainConfig, Failure> {
    let mut config = match path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .input()?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))
                .input()?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.validate().input()?;
    Ok(config)
}

fn trace_csv(outcome: &fallacy_forge::dual::TrainOutcome) -> String {
    let mut out = String::from("epoch,loss_pos,loss_neg,loss_dual,min_margin,mean_margin\n");
    for r in &outcome.trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch, r.loss_pos, r.loss_neg, r.loss_dual, r.min_margin, r.mean_margin
        );
    }
    out
}

fn cmd_train(ctx: &Session, args: &TrainArgs) -> Outcome {
    let config = load_config(args.config.as_deref(), ctx.seed)?;
    let (dataset, corpus_checksum): (ToyDataset, Option<String>) = match &args.corpus {
        Some(path) => {
            let statements: Vec<Statement> = load_corpus(path).input()?;
            let n = config.n_pairs.min(statements.len());
            (
                ToyDataset::from_statements(&statements[..n]).input()?,
                Some(checksum(path)?),
            )
        }
        None => (synthesize_dataset(config.n_pairs, config.seed).input()?, None),
    };
    let outcome = train(&dataset, &config).map_err(|e| Failure {
        code: 1,
        error: e.into(),
    })?;
    let last = outcome.trace.last().expect("trace has the initial record");

    let body = json!({
        "config": config,
        "dataset": dataset,
        "initial": outcome.initial,
        "params": outcome.params,
        "final": last,
    });
    write_artifact(
        &args.out,
        &(serde_json::to_string_pretty(&body).expect("serializes") + "\n"),
    )?;
    write_manifest(
        "train",
        json!({ "args": args, "config": config }),
        corpus_checksum.clone(),
        &args.out,
    )?;
    if let Some(trace) = &args.trace {
        write_artifact(trace, &trace_csv(&outcome))?;
        write_manifest(
            "train",
            json!({ "args": args, "config": config }),
            corpus_checksum,
            trace,
        )?;
    }
    ctx.say(format!(
        "{} epochs: loss_dual {:.6}, min margin {:.4}, mean margin {:.4}",
        config.epochs, last.loss_dual, last.min_margin, last.mean_margin
    ));
    Ok(true)
}

fn cmd_experiment(ctx: &Session, args: &ExperimentArgs) -> Outcome {
    let config = load_config(args.config.as_deref(), ctx.seed)?;
    let seeds: Vec<u64> = (0..args.seeds).map(|i| config.seed.wrapping_add(i)).collect();
    let execution = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let results: Vec<ExperimentResult> = run_experiment_sweep(&config, &seeds, execution).map_err(|e| Failure {
        code: 1,
        error: e.into(),
    })?;

    write_artifact(&args.out, &render_experiment_csv(&results))?;
    write_manifest(
        "experiment",
        json!({ "args": { "config": args.config, "out": args.out, "seeds": args.seeds }, "config": config }),
        None,
        &args.out,
    )?;

    let thresholds = Thresholds::default();
    let mut holds = true;
    for r in &results {
        let ok = r.separation_holds(&thresholds);
        holds &= ok;
        println!(
            "seed {}: dual (lambda={}) min margin {:.4}, positive-only min margin {:.4}, gap {:.4} [{}]",
            r.seed,
            config.lambda,
            r.dual.min_margin(),
            r.pos.min_margin(),
            r.gap(),
            if ok { "separated" } else { "not separated" }
        );
    }
    ctx.say(format!(
        "required gap >= {}; wrote {}",
        thresholds.gap,
        args.out.display()
    ));
    Ok(holds)
}

fn cmd_import(ctx: &Session, args: &ImportArgs) -> Outcome {
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))
        .input()?;
    let statements = import_plain_text(&text, Domain::from(args.domain.as_str()), &args.id_prefix).input()?;
    save_corpus(&args.out, &statements).fatal()?;
    write_manifest("import-corpus", args, Some(checksum(&args.input)?), &args.out)?;
    ctx.say(format!(
        "{} statements written to {}",
        statements.len(),
        args.out.display()
    ));
    Ok(true)
}
