use std::path::{Path, PathBuf};
use std::process::Command;

use pcmri::io;
use pcmri::pipeline::{frame_dir, ReconFields, DATA_FILE, TRUTH_FILE};
use pcmri::Component;
use pcmri_cli::{cli_main, EXIT_CONFIG, EXIT_FORMAT, EXIT_IO, EXIT_OK, EXIT_USAGE};

fn run(args: &[&str]) -> i32 {
    cli_main(std::iter::once("pcmri").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate_small(out: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec![
        "simulate", "--out", p(out), "--width", "24", "--height", "24", "--radius", "5", "--frames", "1",
    ];
    args.extend_from_slice(extra);
    assert_eq!(run(&args), EXIT_OK);
    frame_dir(out, Component::Z, 0)
}

#[test]
fn full_noiseless_sampling_is_inverted_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let frame = simulate_small(&sim, &["--sigma", "0", "--fraction", "1"]);
    let recon = tmp.path().join("zf");
    assert_eq!(
        run(&["reconstruct", "--data", p(&frame.join(DATA_FILE)), "--method", "zerofill", "--out", p(&recon)]),
        EXIT_OK
    );
    let report = tmp.path().join("eval");
    assert_eq!(
        run(&["eval", "--truth", p(&frame.join(TRUTH_FILE)), "--recon", p(&recon), "--out", p(&report)]),
        EXIT_OK
    );
    let truth = io::read_truth(&frame.join(TRUTH_FILE)).unwrap();
    let r = ReconFields::read(&recon).unwrap().evaluate(&truth).unwrap();
    for m in r.magnitude_mse.iter().chain(&r.phase_mse_full) {
        assert!(*m <= 1e-10, "{r:?}");
    }
    assert!(r.velocity_mse_full <= 1e-10);
    assert!(report.with_extension("csv").exists() && report.with_extension("txt").exists());
}

#[test]
fn truncated_dataset_is_a_format_error() {
    let tmp = tempfile::tempdir().unwrap();
    let frame = simulate_small(&tmp.path().join("sim"), &[]);
    let data = frame.join(DATA_FILE);
    let bytes = std::fs::read(&data).unwrap();
    std::fs::write(&data, &bytes[..bytes.len() - 9]).unwrap();
    let out = tmp.path().join("r");
    assert_eq!(
        run(&["reconstruct", "--data", p(&data), "--method", "zerofill", "--out", p(&out)]),
        EXIT_FORMAT
    );
}

#[test]
fn usage_io_and_config_errors_have_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["simulate", "--out", p(tmp.path()), "--no-such-flag"]), EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    let missing = tmp.path().join("missing.pcdata");
    assert_eq!(
        run(&["reconstruct", "--data", p(&missing), "--method", "joint", "--out", p(tmp.path())]),
        EXIT_IO
    );
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "width = 24\nwidht = 32\n").unwrap();
    assert_eq!(run(&["simulate", "--out", p(tmp.path()), "--config", p(&cfg)]), EXIT_CONFIG);
    assert_eq!(run(&["simulate", "--out", p(tmp.path()), "--set", "fraction=2"]), EXIT_CONFIG);
    assert_eq!(run(&["--help"]), EXIT_OK);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "# small grid\nwidth = 20\nheight = 20\nradius = 4\nframes = 1\nfraction = 0.3\nseed = 3\n").unwrap();
    let out = tmp.path().join("sim");
    assert_eq!(
        run(&["simulate", "--out", p(&out), "--config", p(&cfg), "--width", "28", "--set", "height=26"]),
        EXIT_OK
    );
    let mask = io::read_mask(&out.join("mask.pcmask")).unwrap();
    assert_eq!((mask.shape().width, mask.shape().height), (28, 26));
    assert_eq!(mask.seed(), 3);
}

#[test]
fn render_checks_style_against_field_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let frame = simulate_small(&tmp.path().join("sim"), &["--fraction", "0.5"]);
    let recon = tmp.path().join("zf");
    assert_eq!(
        run(&["reconstruct", "--data", p(&frame.join(DATA_FILE)), "--method", "zerofill", "--out", p(&recon)]),
        EXIT_OK
    );
    let magnitude = recon.join("magnitude_1.pcfield");
    let velocity = recon.join("velocity.pcfield");
    let png = tmp.path().join("img/mag.png");
    assert_eq!(run(&["render", "--style", "gray", "--field", p(&magnitude), "--out", p(&png)]), EXIT_OK);
    assert!(png.exists() && png.with_extension("range.txt").exists());
    let bad = tmp.path().join("bad.png");
    assert_eq!(
        run(&["render", "--style", "signed-colormap", "--field", p(&magnitude), "--out", p(&bad)]),
        EXIT_CONFIG
    );
    assert!(!bad.exists());
    let svg = tmp.path().join("v.svg");
    assert_eq!(run(&["render", "--style", "quiver", "--field-z", p(&velocity), "--out", p(&svg)]), EXIT_OK);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn joint_history_is_written_as_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let frame = simulate_small(&tmp.path().join("sim"), &["--fraction", "0.4"]);
    let out = tmp.path().join("joint");
    let history = tmp.path().join("history.csv");
    assert_eq!(
        run(&[
            "reconstruct", "--data", p(&frame.join(DATA_FILE)), "--method", "joint", "--out", p(&out),
            "--history", p(&history), "--stop-rule", "fixed", "--outer-max", "3", "--inner-iters", "50",
        ]),
        EXIT_OK
    );
    let text = std::fs::read_to_string(&history).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    let columns = lines[0].split(',').count();
    assert!(lines[1..].iter().all(|l| l.split(',').count() == columns));
    assert!(out.join("label_4.pcfield").exists());

    let zf = tmp.path().join("zf");
    assert_eq!(
        run(&[
            "reconstruct", "--data", p(&frame.join(DATA_FILE)), "--method", "zerofill", "--out", p(&zf),
            "--history", p(&history),
        ]),
        EXIT_CONFIG
    );
}

fn phase_total(csv: &str, method: &str) -> f64 {
    let row = csv.lines().find(|l| l.starts_with(&format!("{method},"))).unwrap();
    row.split(',').skip(5).take(4).map(|v| v.parse::<f64>().unwrap()).sum()
}

#[test]
fn pipeline_binary_favours_joint_phase() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let status = Command::new(env!("CARGO_BIN_EXE_pcmri"))
        .args(["pipeline", "--out", p(&out), "--fraction", "0.11", "--seed", "7"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = std::fs::read_to_string(frame_dir(&out, Component::Z, 0).join("report.csv")).unwrap();
    let joint = phase_total(&csv, "joint");
    let sequential = phase_total(&csv, "sequential");
    assert!(joint < sequential, "joint {joint} sequential {sequential}");
    assert!(out.join("summary.txt").exists());
}
