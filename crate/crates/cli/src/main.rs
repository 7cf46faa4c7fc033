use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chartseam::ingest::archive::{archive_to_string, read_archive};
use chartseam::pipeline::preprocess::{load_inputs, preprocess};
use chartseam::pipeline::report::{parse_report, summarize};
use chartseam::pipeline::{audit, evaluate, repair};
use chartseam::synth::generate_corpus;
use chartseam::{Error, ObjectRecord, Result, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "chartseam", version, about = "Chart and seam pipeline for multi-part 3D objects")]
struct Cli {
    /// Config file: JSON document or `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Object-level worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `key=value` config overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus archive.
    Synth(SynthArgs),
    /// Build charts, tokens and seam candidates from an OBJ directory or archive.
    Preprocess(InputArg),
    /// Component-owned realization and structural metrics.
    Evaluate(InputArg),
    /// Seam repair ranking benchmark.
    RepairBench(InputArg),
    /// Serialization order, decoding energy and collision audit.
    SerializeAudit(AuditArgs),
    /// Plain-text summary of report documents.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long)]
    density: Option<usize>,
    #[arg(long)]
    decoys: bool,
    #[arg(long)]
    collisions: bool,
}

#[derive(Args, Debug)]
struct InputArg {
    input: PathBuf,
}

#[derive(Args, Debug)]
struct AuditArgs {
    input: PathBuf,
    /// Comma-separated λ values.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(required = true)]
    reports: Vec<PathBuf>,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let base = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    let mut cfg = base.apply(&cli.set.join("\n"))?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.output = cli.out.clone();
    cfg.validate()?;
    Ok(cfg)
}

fn read_records(path: &Path) -> Result<Vec<ObjectRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    read_archive(std::io::BufReader::new(file))
}

fn emit(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.output {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth(a) => {
            if let Some(d) = a.density {
                cfg.synth.density = d;
            }
            cfg.synth.decoys |= a.decoys;
            cfg.synth.collisions |= a.collisions;
            cfg.validate()?;
            let records = generate_corpus(a.n, cfg.seed, &cfg.synth).map_err(|e| Error::Config(e.to_string()))?;
            emit(&cfg, &archive_to_string(&records)?)
        }
        Command::Preprocess(a) => {
            cfg.input = Some(a.input.clone());
            let inputs = load_inputs(&a.input, &cfg)?;
            let (records, summary) = preprocess(inputs, &cfg)?;
            eprintln!("processed {}, skipped {}", summary.processed, summary.skipped.len());
            for s in &summary.skipped {
                eprintln!("  skipped {}: {}", s.id, s.reason);
            }
            emit(&cfg, &archive_to_string(&records)?)
        }
        Command::Evaluate(a) => {
            cfg.input = Some(a.input.clone());
            let report = evaluate::evaluate(&read_records(&a.input)?, &cfg)?;
            emit(&cfg, &report.to_json()?)
        }
        Command::RepairBench(a) => {
            cfg.input = Some(a.input.clone());
            let report = repair::repair_bench(&read_records(&a.input)?, &cfg)?;
            emit(&cfg, &report.to_json()?)
        }
        Command::SerializeAudit(a) => {
            cfg.input = Some(a.input.clone());
            if let Some(l) = a.lambda {
                cfg.serialize.lambdas = l;
            }
            if let Some(e) = a.eps {
                cfg.serialize.eps = e;
            }
            cfg.validate()?;
            let report = audit::serialize_audit(&read_records(&a.input)?, &cfg)?;
            emit(&cfg, &report.to_json()?)
        }
        Command::Report(a) => {
            let reports = a
                .reports
                .iter()
                .map(|p| read_text(p).and_then(|t| parse_report(&t)))
                .collect::<Result<Vec<_>>>()?;
            emit(&cfg, &summarize(&reports))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
