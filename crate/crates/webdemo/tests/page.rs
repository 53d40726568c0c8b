//! End-to-end checks of the generated page: the embedded JavaScript forward
//! passes are executed under node (when available) and compared against the
//! native reference vectors baked into the same page, and the binary is
//! driven through its argument contract.

use linklearn::checkpoint::save_checkpoint;
use linklearn::config::parse_config_str;
use linklearn::eval::{evaluate_checkpoint, export_bler_csv, SweepConfig};
use linklearn::train::run_training;
use std::path::{Path, PathBuf};
use std::process::Command;
use webdemo::PageSpec;

/// Pulls the pure-numerics script block (data plus forward passes, no DOM
/// access) out of a rendered page.
fn core_script(page: &str) -> &str {
    let open = "<script id=\"nn-core\">";
    let start = page.find(open).expect("core script present") + open.len();
    let end = page[start..].find("</script>").expect("core script closed") + start;
    &page[start..end]
}

/// Runs `source` under node and returns (exit code, stdout). `None` when node
/// is not installed, so callers can skip rather than fail.
fn run_node(dir: &Path, source: &str) -> Option<(i32, String)> {
    let path = dir.join("harness.js");
    std::fs::write(&path, source).unwrap();
    match Command::new("node").arg(&path).output() {
        Ok(out) => Some((
            out.status.code().unwrap_or(-1),
            String::from_utf8_lossy(&out.stdout).into_owned()
                + &String::from_utf8_lossy(&out.stderr),
        )),
        Err(_) => None,
    }
}

#[test]
fn page_javascript_reproduces_native_numerics() {
    let page = PageSpec::untrained(7, 0.08, 11).unwrap().render().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let harness = format!(
        "{}\n\
         const r = runSelfTest(MODEL, SELFTEST);\n\
         console.log(JSON.stringify(r));\n\
         if (!r.pass) process.exit(3);\n\
         // The transmitted block must carry power exactly K.\n\
         const tx = txForward(MODEL, SELFTEST.bits);\n\
         let p = 0;\n\
         for (const v of tx) p += v * v;\n\
         if (Math.abs(p - MODEL.k) > 1e-9) process.exit(4);\n",
        core_script(&page)
    );
    match run_node(dir.path(), &harness) {
        Some((code, out)) => {
            assert_eq!(code, 0, "node harness failed: {out}");
            assert!(out.contains("\"pass\":true"), "self test did not pass: {out}");
        }
        None => eprintln!("node not installed; skipping the JavaScript comparison"),
    }
}

#[test]
fn tampered_weights_fail_the_page_self_test() {
    let page = PageSpec::untrained(6, 0.08, 4).unwrap().render().unwrap();
    let dir = tempfile::tempdir().unwrap();
    // Shift one batch-norm running mean after the reference vectors were
    // computed; the page must notice.
    let harness = format!(
        "{}\n\
         MODEL.rx[0].bn.m[0] += 0.25;\n\
         const r = runSelfTest(MODEL, SELFTEST);\n\
         console.log(JSON.stringify(r));\n\
         process.exit(r.pass ? 5 : 0);\n",
        core_script(&page)
    );
    match run_node(dir.path(), &harness) {
        Some((code, out)) => {
            assert_eq!(code, 0, "tampering went unnoticed: {out}");
            assert!(out.contains("\"pass\":false"), "expected a failing check: {out}");
        }
        None => eprintln!("node not installed; skipping the JavaScript comparison"),
    }
}

fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_webdemo"))
}

#[test]
fn binary_bakes_a_page_from_a_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(
        "",
        &[
            "seed=5".into(),
            "train.episodes=1".into(),
            "train.steps_per_episode=3".into(),
            "train.k=5".into(),
            "train.checkpoint_every=10".into(),
            "network.width_scale=0.05".into(),
            "agent.batch_size=2".into(),
            "agent.buffer_capacity=64".into(),
            "eval.snr_start_db=0.0".into(),
            "eval.snr_end_db=4.0".into(),
            "eval.snr_step_db=2.0".into(),
            "eval.blocks=20".into(),
        ],
    )
    .unwrap();
    let (_, ck) = run_training(&cfg, |_| Ok(())).unwrap();
    let ck_path = dir.path().join("trained.bin");
    save_checkpoint(&ck, &ck_path).unwrap();
    let sweep = SweepConfig::from_experiment(&ck.config);
    let curve = evaluate_checkpoint(&ck, &sweep).unwrap();
    let csv_path = dir.path().join("measured.csv");
    export_bler_csv(&curve, &csv_path).unwrap();

    let out_path = dir.path().join("page.html");
    let out = Command::new(bin())
        .args([
            "--checkpoint",
            ck_path.to_str().unwrap(),
            "--curve",
            csv_path.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let page = std::fs::read_to_string(&out_path).unwrap();
    assert!(page.contains("\"system\":\"ddpg\""));
    assert!(page.contains("measured"), "curve label missing");
    assert!(page.starts_with("<!doctype html>"));
}

#[test]
fn binary_argument_contract_holds() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("untrained.html");

    // Neither source: usage error.
    let out = Command::new(bin()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Both sources: usage error.
    let out = Command::new(bin())
        .args(["--checkpoint", "x.bin", "--untrained"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Missing checkpoint file: clean runtime failure naming the path.
    let out = Command::new(bin())
        .args(["--checkpoint", "/no/such/checkpoint.bin"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/no/such/checkpoint.bin"), "{err}");

    // Untrained path works without any prior artifacts.
    let out = Command::new(bin())
        .args(["--untrained", "--k", "6", "--width-scale", "0.05", "--out", out_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&out_path).unwrap().contains("\"system\":\"untrained\""));
}
