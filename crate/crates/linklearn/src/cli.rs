//! Command-line entry points: `train`, `baseline`, `eval`, and `plot`.
//!
//! Every run writes its fully resolved configuration next to its outputs, so
//! any result directory can be reproduced from what it contains. Exit codes:
//! 0 on success, 1 with a one-line diagnostic on a runtime failure, 2 on a
//! usage error.

use crate::channel::ChannelKind;
use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::{parse_config, parse_config_str, ExperimentConfig};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_checkpoint, export_bler_csv, load_bler_csv, load_log_csv, log_csv_row, SweepConfig,
    LOG_CSV_HEADER,
};
use crate::plot::{plot_bler_curves, plot_training_log};
use crate::train::{BaselineSession, EpisodeRecord, TrainSession};
use clap::{Args, Parser, Subcommand};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "linklearn",
    version,
    about = "Train and evaluate learned transmitter/receiver pairs over fading channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the reinforcement-learned link (reward-only transmitter feedback).
    Train(TrainArgs),
    /// Train the fully differentiable end-to-end baseline.
    Baseline(TrainArgs),
    /// Sweep a trained checkpoint across an SNR grid and record BLER/BER.
    Eval(EvalArgs),
    /// Render training-log and error-rate CSVs as SVG figures.
    Plot(PlotArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed, overriding config file and --set.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the config echo, log, and checkpoints.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Dotted-key config override, e.g. --set channel.kind=awgn (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Resume from a checkpoint; settings come from the checkpoint
    /// (adjustable with --set, e.g. to extend train.episodes).
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Configuration file replacing the checkpoint's stored settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed for the sweep, overriding config and --set.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the config echo and curve CSV.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Dotted-key config override (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// First SNR point in dB.
    #[arg(long)]
    snr_start: Option<f64>,
    /// Last SNR point in dB.
    #[arg(long)]
    snr_end: Option<f64>,
    /// Grid spacing in dB.
    #[arg(long)]
    snr_step: Option<f64>,
    /// Blocks per SNR point.
    #[arg(long)]
    blocks: Option<usize>,
    /// Channel to sweep over: awgn, rayleigh, or rician.
    #[arg(long)]
    channel: Option<String>,
    /// Line-of-sight power ratio for the rician channel.
    #[arg(long)]
    rician_factor: Option<f64>,
}

#[derive(Args)]
struct PlotArgs {
    /// Training-log CSV to render (reward, critic loss, receiver loss).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Error-rate curve CSV to render; repeat to overlay curves.
    #[arg(long)]
    curve: Vec<PathBuf>,
    /// Output directory for the figures.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Binary entry point. Returns the process exit code instead of exiting so
/// tests can drive it in-process.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version print to stdout with code 0; usage errors
            // print to stderr with code 2.
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(&args, false),
        Command::Baseline(args) => cmd_train(&args, true),
        Command::Eval(args) => cmd_eval(&args),
        Command::Plot(args) => cmd_plot(&args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Parses the configuration sources shared by train/baseline/eval: file (or
/// defaults), then --set overrides, then --seed.
fn resolve_config(
    config: &Option<PathBuf>,
    seed: Option<u64>,
    set: &[String],
) -> Result<ExperimentConfig> {
    let mut cfg = parse_config(config.as_deref(), set).map_err(|e| match (&e, config) {
        (Error::Io(io), Some(path)) => {
            Error::InvalidArgument(format!("cannot read config `{}`: {io}", path.display()))
        }
        _ => e,
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_checkpoint_named(path: &Path) -> Result<Checkpoint> {
    load_checkpoint(path).map_err(|e| match e {
        Error::Io(io) => {
            Error::InvalidArgument(format!("cannot read checkpoint `{}`: {io}", path.display()))
        }
        other => other,
    })
}

/// The episode loop shared by both training systems.
trait TrainDriver {
    fn episodes_done(&self) -> u64;
    fn run_episode(&mut self) -> Result<EpisodeRecord>;
    fn checkpoint(&self) -> Checkpoint;
    fn config(&self) -> &ExperimentConfig;
}

impl TrainDriver for TrainSession {
    fn episodes_done(&self) -> u64 {
        TrainSession::episodes_done(self)
    }
    fn run_episode(&mut self) -> Result<EpisodeRecord> {
        TrainSession::run_episode(self)
    }
    fn checkpoint(&self) -> Checkpoint {
        TrainSession::checkpoint(self)
    }
    fn config(&self) -> &ExperimentConfig {
        TrainSession::config(self)
    }
}

impl TrainDriver for BaselineSession {
    fn episodes_done(&self) -> u64 {
        BaselineSession::episodes_done(self)
    }
    fn run_episode(&mut self) -> Result<EpisodeRecord> {
        BaselineSession::run_episode(self)
    }
    fn checkpoint(&self) -> Checkpoint {
        BaselineSession::checkpoint(self)
    }
    fn config(&self) -> &ExperimentConfig {
        BaselineSession::config(self)
    }
}

/// Opens the streaming log: fresh with a header, or appending to an existing
/// file when resuming into the same directory.
fn open_log(path: &Path, resume: bool) -> Result<BufWriter<File>> {
    if resume && path.exists() {
        return Ok(BufWriter::new(OpenOptions::new().append(true).open(path)?));
    }
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{LOG_CSV_HEADER}")?;
    Ok(file)
}

/// Runs the episode loop: stream every record to log.csv, checkpoint at the
/// configured cadence plus a final one, and preserve the last healthy state
/// if an episode diverges.
fn drive_training(session: &mut dyn TrainDriver, out: &Path, resuming: bool) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let cfg = session.config().clone();
    std::fs::write(out.join("config.toml"), cfg.to_toml_string())?;
    let mut log = open_log(&out.join("log.csv"), resuming)?;
    let every = cfg.train.checkpoint_every.max(1) as u64;
    let total = cfg.train.episodes as u64;
    println!(
        "{} | profile {} | seed {} | K={} | episodes {}..{} x {} steps | channel {} @ {} dB",
        if resuming { "resuming" } else { "starting" },
        cfg.profile,
        cfg.seed,
        cfg.train.k,
        session.episodes_done() + 1,
        total,
        cfg.train.steps_per_episode,
        cfg.channel.kind,
        cfg.train.snr_db,
    );
    let mut saved = 0usize;
    while session.episodes_done() < total {
        let record = match session.run_episode() {
            Ok(record) => record,
            Err(e) => {
                // Updates validate before mutating, so the session still
                // holds the last healthy state — keep it for a post-mortem.
                let rescue = out.join("checkpoint_emergency.bin");
                if save_checkpoint(&session.checkpoint(), &rescue).is_ok() {
                    eprintln!("saved last healthy state to {}", rescue.display());
                }
                return Err(e);
            }
        };
        writeln!(log, "{}", log_csv_row(&record))?;
        log.flush()?;
        if record.episode % every == 0 {
            save_checkpoint(
                &session.checkpoint(),
                &out.join(format!("checkpoint_{:06}.bin", record.episode)),
            )?;
            saved += 1;
            println!(
                "episode {}/{}: reward/step {:.4}, critic loss {:.4}, receiver loss {:.4}",
                record.episode, total, record.reward_mean, record.critic_loss, record.receiver_loss,
            );
        }
    }
    save_checkpoint(&session.checkpoint(), &out.join("checkpoint_final.bin"))?;
    println!(
        "wrote {}, {} cadence checkpoint(s), and checkpoint_final.bin",
        out.join("log.csv").display(),
        saved,
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs, baseline: bool) -> Result<()> {
    if let Some(resume) = &args.resume {
        if args.config.is_some() {
            return Err(Error::InvalidArgument(
                "--config cannot be combined with --resume; settings come from the checkpoint \
                 (use --set to adjust)"
                    .into(),
            ));
        }
        if args.seed.is_some() {
            return Err(Error::InvalidArgument(
                "--seed cannot be combined with --resume; the generator state comes from the \
                 checkpoint"
                    .into(),
            ));
        }
        let mut ck = load_checkpoint_named(resume)?;
        if !args.set.is_empty() {
            ck.config = parse_config_str(&ck.config.to_toml_string(), &args.set)?;
        }
        if baseline {
            drive_training(&mut BaselineSession::from_checkpoint(ck)?, &args.out, true)
        } else {
            drive_training(&mut TrainSession::from_checkpoint(ck)?, &args.out, true)
        }
    } else {
        let cfg = resolve_config(&args.config, args.seed, &args.set)?;
        if baseline {
            drive_training(&mut BaselineSession::new(cfg)?, &args.out, false)
        } else {
            drive_training(&mut TrainSession::new(cfg)?, &args.out, false)
        }
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let ck = load_checkpoint_named(&args.checkpoint)?;
    // Settings come from the checkpoint unless a file replaces them; --set
    // applies to either source, and the dedicated flags win over both.
    let mut cfg = if args.config.is_some() {
        resolve_config(&args.config, args.seed, &args.set)?
    } else {
        let mut cfg = parse_config_str(&ck.config.to_toml_string(), &args.set)?;
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        cfg
    };
    if let Some(v) = args.snr_start {
        cfg.eval.snr_start_db = v;
    }
    if let Some(v) = args.snr_end {
        cfg.eval.snr_end_db = v;
    }
    if let Some(v) = args.snr_step {
        cfg.eval.snr_step_db = v;
    }
    if let Some(v) = args.blocks {
        cfg.eval.blocks = v;
    }
    if let Some(name) = &args.channel {
        cfg.channel.kind = ChannelKind::from_str(name)?;
    }
    if let Some(v) = args.rician_factor {
        cfg.channel.rician_factor = v;
    }
    cfg.validate()?;
    let sweep = SweepConfig::from_experiment(&cfg);
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("config.toml"), cfg.to_toml_string())?;
    let curve = evaluate_checkpoint(&ck, &sweep)?;
    for r in &curve.records {
        println!(
            "snr {:>5.1} dB: bler {:.6}, ber {:.6} ({} blocks)",
            r.snr_db, r.bler, r.ber, r.num_blocks
        );
    }
    let csv = args.out.join("bler.csv");
    export_bler_csv(&curve, &csv)?;
    println!("evaluated {} on {} | wrote {}", curve.source, curve.channel, csv.display());
    Ok(())
}

fn cmd_plot(args: &PlotArgs) -> Result<()> {
    if args.log.is_none() && args.curve.is_empty() {
        return Err(Error::InvalidArgument(
            "nothing to plot: pass --log and/or --curve".into(),
        ));
    }
    std::fs::create_dir_all(&args.out)?;
    if let Some(log) = &args.log {
        let records = load_log_csv(log)?;
        for path in plot_training_log(&records, &args.out)? {
            println!("wrote {}", path.display());
        }
    }
    if !args.curve.is_empty() {
        let curves = args
            .curve
            .iter()
            .map(|p| {
                let label = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string());
                Ok((label, load_bler_csv(p)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let path = args.out.join("bler.svg");
        plot_bler_curves(&curves, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_exits_zero_and_unknown_flags_exit_two() {
        assert_eq!(cli_main(["linklearn", "--help"]), 0);
        assert_eq!(cli_main(["linklearn", "train", "--help"]), 0);
        assert_eq!(cli_main(["linklearn", "--bogus"]), 2);
        assert_eq!(cli_main(["linklearn", "frobnicate"]), 2);
        assert_eq!(cli_main(["linklearn", "eval"]), 2, "eval requires --checkpoint");
    }

    #[test]
    fn missing_config_file_fails_with_exit_one() {
        let out = std::env::temp_dir().join(format!("cli-test-{}", std::process::id()));
        let code = cli_main([
            "linklearn",
            "train",
            "--config",
            "/nonexistent/missing.toml",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn plot_without_inputs_is_a_runtime_error() {
        assert_eq!(cli_main(["linklearn", "plot"]), 1);
    }

    #[test]
    fn resume_rejects_conflicting_sources() {
        let args = TrainArgs {
            config: Some(PathBuf::from("x.toml")),
            seed: None,
            out: PathBuf::from("out"),
            set: vec![],
            resume: Some(PathBuf::from("ck.bin")),
        };
        assert!(matches!(cmd_train(&args, false), Err(Error::InvalidArgument(_))));
        let args = TrainArgs {
            config: None,
            seed: Some(7),
            out: PathBuf::from("out"),
            set: vec![],
            resume: Some(PathBuf::from("ck.bin")),
        };
        assert!(matches!(cmd_train(&args, true), Err(Error::InvalidArgument(_))));
    }
}
