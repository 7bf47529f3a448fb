//! `therblig`: JSON on stdout, diagnostics on stderr.
//!
//! Exit codes: 0 success, 1 operation error or rule violation, 2 usage error.

mod commands;
mod input;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use therblig_core::losses::{LossMode, Norm};
use therblig_core::{Rules, DEFAULT_MAX_LEN};

#[derive(Parser, Debug)]
#[command(name = "therblig", version, about = "Therblig contact-rule toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Object vocabulary: a JSON array of names or one name per line.
    #[arg(long, global = true, value_name = "PATH")]
    vocab: Option<PathBuf>,
    /// Maximum Therblig sequence length per chunk.
    #[arg(long, global = true, default_value_t = DEFAULT_MAX_LEN, value_name = "INT")]
    n: usize,
    /// Treat Hold on an object not in contact as a Rule 3 violation.
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set, value_name = "BOOL")]
    strict_hold: bool,
    /// Loss formulation [default: corrected, or the instance's own].
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Norm for the loss residuals [default: l1, or the instance's own].
    #[arg(long, global = true, value_enum)]
    norm: Option<NormArg>,
    /// Gumbel-Softmax temperature [default: 1.0, or the instance's own].
    #[arg(long, global = true, value_name = "FLOAT")]
    tau: Option<f64>,
    /// Seed for synthetic data generation.
    #[arg(long, global = true, default_value_t = 0, value_name = "INT")]
    seed: u64,
    /// Annotation store log.
    #[arg(long, global = true, env = "THERBLIG_STORE", default_value = "therblig-store.jsonl", value_name = "PATH")]
    store: PathBuf,
}

impl Global {
    fn rules(&self) -> Rules {
        Rules::new(self.strict_hold, self.n)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Literal,
    Corrected,
}

impl From<ModeArg> for LossMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Literal => LossMode::Literal,
            ModeArg::Corrected => LossMode::Corrected,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormArg {
    L1,
    L2,
}

impl From<NormArg> for Norm {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::L1 => Norm::L1,
            NormArg::L2 => Norm::L2,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate every record of an annotation JSONL file.
    Validate { file: PathBuf },
    /// List the legal next Therbligs from a contact state.
    Filter {
        /// Current contact state, e.g. "[knife,bowl]".
        #[arg(long)]
        state: String,
        /// Restrict to moves that can still reach this state.
        #[arg(long)]
        goal: Option<String>,
        /// Steps left for reaching the goal [default: --n].
        #[arg(long, requires = "goal")]
        remaining: Option<usize>,
    },
    /// Score predictions against ground truth.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Inputs are frame labelings ({"video_id", "labels"} per line).
        #[arg(long)]
        frames: bool,
        /// Also write one CSV row per video.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Evaluate the rule losses of a loss instance.
    Loss { instance: PathBuf },
    /// Compare analytic and finite-difference gradients of a loss instance.
    Gradcheck {
        instance: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Generate a synthetic rule-consistent dataset.
    Gen {
        /// Synthetic vocabulary size when --vocab is not given.
        #[arg(long, default_value_t = 10)]
        vocab_size: usize,
        #[arg(long, default_value_t = 1)]
        videos: usize,
        #[arg(long, default_value_t = 10)]
        chunks: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write the vocabulary used as a JSON array.
        #[arg(long, value_name = "PATH")]
        vocab_out: Option<PathBuf>,
    },
    /// Serve the annotation API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080", value_name = "HOST:PORT")]
        addr: String,
    },
    /// Load action segments from a CSV file into the store.
    Ingest { csv: PathBuf },
}

/// Result of a subcommand that ran to completion.
pub enum Outcome {
    Clean,
    /// Ran, but found violations or rejected input.
    Findings,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Findings) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            report::emit(&serde_json::json!({"error": format!("{e:#}")}));
            ExitCode::from(1)
        }
    }
}
