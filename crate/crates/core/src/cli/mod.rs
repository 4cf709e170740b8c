//! Command-line front end.
//!
//! Every config key is also a flag (`pretrain.batch_size` → `--pretrain.batch-size`).
//! Errors print one line, `error kind=<kind> exit=<code> message=<text>`, and
//! exit with 2 (usage/config), 3 (data) or 4 (numeric).

mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;

use clap::{Arg, ArgAction, ArgMatches, Command};

pub use commands::{
    cmd_ensemble, cmd_evaluate, cmd_gradcheck, cmd_importance, cmd_sweep, cmd_synth, cmd_train,
    resolve_sweep_key, run_sweep, SweepRow, SweepTable,
};
pub use config::{flag_name, parse_config_text, ImportanceSettings, RunConfig, SynthSettings, KEYS};

use crate::{Result, ScrError};

fn with_keys(mut cmd: Command) -> Command {
    cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("flat key = value config file"),
    );
    for (key, help) in KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(flag_name(key))
                .value_name("VALUE")
                .help(*help),
        );
    }
    cmd
}

fn command() -> Command {
    let predictions = || {
        Arg::new("predictions")
            .long("predictions")
            .value_name("FILE")
            .help("write per-row predictions as CSV")
    };
    Command::new("scr")
        .about("Supervised contrastive regression for tabular data")
        .subcommand_required(true)
        .subcommand(with_keys(Command::new("synth").about("write a synthetic dataset and its ground truth")))
        .subcommand(with_keys(Command::new("train").about("train, evaluate on the test split and save a checkpoint")))
        .subcommand(with_keys(
            Command::new("evaluate")
                .about("evaluate a checkpoint on a dataset")
                .arg(predictions()),
        ))
        .subcommand(with_keys(
            Command::new("ensemble")
                .about("average predictions of several checkpoints, one dataset each")
                .arg(
                    Arg::new("checkpoints")
                        .long("checkpoints")
                        .num_args(1..)
                        .required(true)
                        .action(ArgAction::Append),
                )
                .arg(
                    Arg::new("datasets")
                        .long("datasets")
                        .num_args(1..)
                        .required(true)
                        .action(ArgAction::Append),
                )
                .arg(predictions()),
        ))
        .subcommand(with_keys(Command::new("importance").about("grouped permutation feature importance")))
        .subcommand(with_keys(
            Command::new("sweep")
                .about("test r for each value of one hyperparameter")
                .arg(
                    Arg::new("key")
                        .long("key")
                        .required(true)
                        .help("b | c | tau | theta | seed, or a full config key"),
                )
                .arg(
                    Arg::new("values")
                        .long("values")
                        .required(true)
                        .value_delimiter(',')
                        .num_args(1..),
                ),
        ))
        .subcommand(
            Command::new("gradcheck")
                .about("finite-difference check of the MSE and contrastive gradients")
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .default_value("0")
                        .value_parser(clap::value_parser!(u64)),
                )
                .arg(
                    Arg::new("perturb")
                        .long("perturb")
                        .hide(true)
                        .default_value("0")
                        .value_parser(clap::value_parser!(f64)),
                ),
        )
}

fn resolve(m: &ArgMatches, env_seed: Option<&str>) -> Result<RunConfig> {
    let file = match m.get_one::<String>("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ScrError::io(path, e))?;
            parse_config_text(&text, path)?
        }
        None => Vec::new(),
    };
    let flags: Vec<(String, String)> = KEYS
        .iter()
        .filter_map(|(k, _)| m.get_one::<String>(k).map(|v| ((*k).to_owned(), v.clone())))
        .collect();
    RunConfig::resolve(env_seed, &file, &flags)
}

fn strings(m: &ArgMatches, id: &str) -> Vec<String> {
    m.get_many::<String>(id).map(|v| v.cloned().collect()).unwrap_or_default()
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            write!(out, "{e}").map_err(|e| ScrError::io("<stdout>", e))?;
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return Err(ScrError::Config(format!(
                "usage: {}",
                first.trim_start_matches("error: ")
            )));
        }
    };
    let (name, m) = matches.subcommand().expect("a subcommand is required");
    if name == "gradcheck" {
        let seed = *m.get_one::<u64>("seed").expect("defaulted");
        let perturb = *m.get_one::<f64>("perturb").expect("defaulted");
        return cmd_gradcheck(seed, perturb, out);
    }
    let cfg = resolve(m, env_seed)?;
    match name {
        "synth" => cmd_synth(&cfg, out),
        "train" => cmd_train(&cfg, out),
        "evaluate" => cmd_evaluate(&cfg, m.get_one::<String>("predictions").map(Into::into), out),
        "ensemble" => cmd_ensemble(
            &strings(m, "checkpoints"),
            &strings(m, "datasets"),
            m.get_one::<String>("predictions").map(Into::into),
            out,
        ),
        "importance" => cmd_importance(&cfg, out),
        "sweep" => {
            let key = m.get_one::<String>("key").expect("required");
            cmd_sweep(&cfg, key, &strings(m, "values"), out)
        }
        _ => unreachable!("unknown subcommand {name}"),
    }
}

/// The single-line error message printed on failure.
pub fn error_line(err: &ScrError) -> String {
    let message = err.to_string().replace(['\n', '\r'], " ");
    format!("error kind={} exit={} message={}", err.kind(), err.exit_code(), message)
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_env() -> i32 {
    let env_seed = std::env::var("SCR_SEED").ok();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(std::env::args_os(), env_seed.as_deref(), &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            eprintln!("{}", error_line(&e));
            e.exit_code()
        }
    }
}
