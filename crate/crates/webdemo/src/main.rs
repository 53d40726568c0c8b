//! Command-line wrapper: point it at a checkpoint (and optionally at measured
//! sweep CSVs) and it writes one self-contained interactive HTML page.

use clap::Parser;
use linklearn::checkpoint::load_checkpoint;
use linklearn::error::{Error, Result};
use linklearn::eval::load_bler_csv;
use std::path::PathBuf;
use std::process::ExitCode;
use webdemo::PageSpec;

#[derive(Debug, Parser)]
#[command(
    name = "webdemo",
    about = "Bakes a trained link into a single interactive web page",
    after_help = "Examples:\n  \
        webdemo --checkpoint out/checkpoint_final.bin --curve out-eval/bler.csv\n  \
        webdemo --untrained --k 8 --out untrained.html"
)]
struct Args {
    /// Trained checkpoint whose deployed transmitter/receiver pair to embed.
    #[arg(long, conflicts_with = "untrained", required_unless_present = "untrained")]
    checkpoint: Option<PathBuf>,

    /// Embed freshly initialized networks instead of a checkpoint.
    #[arg(long)]
    untrained: bool,

    /// Bits per block (only with --untrained).
    #[arg(long, default_value_t = 8)]
    k: usize,

    /// Hidden-width multiplier (only with --untrained).
    #[arg(long, default_value_t = 1.0)]
    width_scale: f64,

    /// Parameter seed (only with --untrained).
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Measured sweep CSV to embed in the curve explorer; repeatable. The
    /// file stem becomes the curve label, except that a conventional
    /// `bler.csv` is labeled by its directory instead.
    #[arg(long = "curve", value_name = "CSV")]
    curves: Vec<PathBuf>,

    /// Where to write the page.
    #[arg(long, default_value = "demo.html")]
    out: PathBuf,
}

fn run(args: &Args) -> Result<()> {
    let mut page = match &args.checkpoint {
        Some(path) => {
            let ck = load_checkpoint(path).map_err(|e| match e {
                Error::Io(io) => Error::InvalidArgument(format!(
                    "cannot read checkpoint `{}`: {io}",
                    path.display()
                )),
                other => other,
            })?;
            PageSpec::from_checkpoint(&ck)?
        }
        None => PageSpec::untrained(args.k, args.width_scale, args.seed)?,
    };
    for path in &args.curves {
        let records = load_bler_csv(path).map_err(|e| match e {
            Error::Io(io) => {
                Error::InvalidArgument(format!("cannot read curve `{}`: {io}", path.display()))
            }
            other => other,
        })?;
        page.add_curve(curve_label(path), records);
    }
    let html = page.render()?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&args.out, &html)?;
    println!("wrote {} ({} KiB)", args.out.display(), html.len() / 1024);
    Ok(())
}

/// Every sweep writes a `bler.csv`, so that stem says nothing — fall back to
/// the directory name, which is where runs actually differ.
fn curve_label(path: &std::path::Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    if let Some(s) = &stem {
        if s != "bler" {
            return s.clone();
        }
    }
    path.parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .or(stem)
        .unwrap_or_else(|| path.display().to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
