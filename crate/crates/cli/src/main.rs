use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use innovbench_cli::config::{parse_n_values, JudgeMode, RunConfig};
use innovbench_cli::{judge, ngram, report, verify, CliError, Outcome};

#[derive(Parser)]
#[command(name = "innovbench", version, about = "Innovation and hallucination bound verification and n-gram experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Run the theorem battery and write verify.csv / verify.json.
    Verify,
    /// Train n-gram models, generate, and write rates.csv.
    Ngram,
    /// Judge generations (by hand or remotely) and add judged rates.
    Judge,
    /// Draw figure1.svg from rates.csv.
    Report,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo draws per cell.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// δ value for the Monte Carlo cells (repeatable).
    #[arg(long, global = true)]
    delta: Vec<f64>,
    /// n-gram orders, e.g. `2-7` or `2,3,5`.
    #[arg(long, global = true)]
    n_values: Option<String>,
    /// Training corpus for `ngram`.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    judge_mode: Option<JudgeMode>,
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Remote judge model name.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Directory with train.iemb and gen_n{n}.iemb.
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    /// Log judge request and response bodies to stderr.
    #[arg(long, global = true)]
    debug_http: bool,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn resolve(c: Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = c.out {
        cfg.out = o;
    }
    if let Some(t) = c.trials {
        cfg.verify.trials = t;
    }
    if !c.delta.is_empty() {
        cfg.verify.deltas = Some(c.delta);
    }
    if let Some(n) = c.n_values {
        cfg.ngram.n_values = parse_n_values(&n).map_err(CliError::config)?;
    }
    if let Some(p) = c.corpus {
        cfg.ngram.corpus = Some(p);
    }
    if let Some(m) = c.judge_mode {
        cfg.judge.mode = m;
    }
    if let Some(e) = c.endpoint {
        cfg.judge.endpoint = e;
    }
    if let Some(m) = c.model {
        cfg.judge.model = m;
    }
    if let Some(e) = c.embeddings {
        cfg.ngram.embeddings = Some(e);
    }
    if c.debug_http {
        cfg.judge.debug_http = true;
    }
    if let Some(t) = c.threads {
        cfg.threads = Some(t);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(cli.common).and_then(|cfg| match cli.command {
        Command::Verify => verify::cmd_verify(&cfg),
        Command::Ngram => ngram::cmd_ngram(&cfg),
        Command::Judge => judge::cmd_judge(&cfg),
        Command::Report => report::cmd_report(&cfg),
    });
    let code = match result {
        Ok(Outcome { code, summary }) => {
            println!("{summary}");
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    };
    ExitCode::from(code as u8)
}
