//! Command-line front end: argument parsing, run configuration and the
//! `train`, `eval`, `inspect`, `bench` and `gen-data` subcommands.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use cmunext::Error;

pub use config::RunConfig;

/// Exit status for a run that failed while computing.
pub const EXIT_RUNTIME: i32 = 1;
/// Exit status for bad arguments, configuration or input paths.
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "cmunext",
    version,
    about = "Train, evaluate and inspect CMUNeXt segmentation networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write weights, log and model card.
    Train(Flags),
    /// Evaluate stored weights (IoU / F1).
    Eval(Flags),
    /// Print parameter and MAC counts.
    Inspect(Flags),
    /// Measure single-image inference speed.
    Bench(Flags),
    /// Write a synthetic corpus as PNG files.
    GenData(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// Key-value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any config key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long, value_name = "C1,..,C5")]
    channels: Option<String>,
    #[arg(long, value_name = "L1,..,L5")]
    depths: Option<String>,
    #[arg(long, value_name = "K1,..,K5")]
    kernels: Option<String>,
    #[arg(long)]
    in_channels: Option<String>,
    #[arg(long, value_name = "halved|paired")]
    fusion_width: Option<String>,
    /// Directory holding `images/` and `masks/`.
    #[arg(long)]
    data: Option<String>,
    #[arg(long, value_name = "P1,P2")]
    prefixes: Option<String>,
    #[arg(long, value_name = "n=N,size=S[,seed=X]")]
    synthetic: Option<String>,
    #[arg(long)]
    size: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, value_name = "S1,S2")]
    seeds: Option<String>,
    #[arg(long, value_name = "auto|split|train")]
    eval_set: Option<String>,
    #[arg(long)]
    split_file: Option<String>,
    #[arg(long, value_name = "set|per-image")]
    metric_mode: Option<String>,
    /// Output directory.
    #[arg(long = "out")]
    out_dir: Option<String>,
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    warmup: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long, value_name = "table|kv")]
    format: Option<String>,
    #[arg(long)]
    no_augment: bool,
    #[arg(long)]
    dump_masks: bool,
    /// Report two FLOPs per multiply-accumulate.
    #[arg(long)]
    two_per_mac: bool,
}

impl Flags {
    fn into_config(self) -> cmunext::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let pairs = [
            ("variant", self.variant),
            ("channels", self.channels),
            ("depths", self.depths),
            ("kernels", self.kernels),
            ("in_channels", self.in_channels),
            ("fusion_width", self.fusion_width),
            ("data", self.data),
            ("prefixes", self.prefixes),
            ("synthetic", self.synthetic),
            ("size", self.size),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("lr", self.lr),
            ("seed", self.seed),
            ("seeds", self.seeds),
            ("eval_set", self.eval_set),
            ("split_file", self.split_file),
            ("metric_mode", self.metric_mode),
            ("out_dir", self.out_dir),
            ("weights", self.weights),
            ("warmup", self.warmup),
            ("iters", self.iters),
            ("format", self.format),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if self.no_augment {
            cfg.augment = false;
        }
        if self.dump_masks {
            cfg.dump_masks = true;
        }
        if self.two_per_mac {
            cfg.two_per_mac = true;
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config {
                field: kv.clone(),
                reason: "--set expects KEY=VALUE".into(),
            })?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. }
        | Error::MissingMask { .. }
        | Error::Io { .. }
        | Error::Image { .. }
        | Error::Format(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Runs one command line. Reports go to `out`; progress and errors to `err`.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{e}");
            return code;
        }
    };
    let (flags, name) = match cli.command {
        Command::Train(f) => (f, "train"),
        Command::Eval(f) => (f, "eval"),
        Command::Inspect(f) => (f, "inspect"),
        Command::Bench(f) => (f, "bench"),
        Command::GenData(f) => (f, "gen-data"),
    };
    let result = flags.into_config().and_then(|cfg| match name {
        "train" => commands::cmd_train(&cfg, err),
        "eval" => commands::cmd_eval(&cfg),
        "inspect" => commands::cmd_inspect(&cfg),
        "bench" => commands::cmd_bench(&cfg),
        _ => commands::cmd_gen_data(&cfg),
    });
    match result {
        Ok(report) => {
            let _ = out.write_all(report.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
