use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const EXE: &str = env!("CARGO_BIN_EXE_dpsqkd");

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn dpsqkd(args: &[&str], out_dir: &Path) -> Output {
    Command::new(EXE)
        .args(args)
        .env("DPSQKD_OUT_DIR", out_dir)
        .output()
        .unwrap()
}

fn stdout_of(args: &[&str]) -> String {
    let dir = tempfile::tempdir().unwrap();
    let out = dpsqkd(args, dir.path());
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn file_output(args: &[&str]) -> String {
    let dir = tempfile::tempdir().unwrap();
    let path: PathBuf = dir.path().join("out.csv");
    let mut full: Vec<&str> = args.to_vec();
    let p = path.to_str().unwrap().to_owned();
    full.extend(["--out", &p]);
    let out = dpsqkd(&full, dir.path());
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    fs::read_to_string(path).unwrap()
}

#[test]
fn pchar_golden() {
    assert_eq!(
        stdout_of(&["pchar", "--mu", "0.1", "--a", "0"]),
        golden("pchar_mu0.1.txt")
    );
    assert_eq!(
        stdout_of(&["pchar", "--mu", "0.2", "--a", "5", "--format", "csv"]),
        golden("pchar_mu0.2_a5.csv")
    );
}

#[test]
fn keyrate_golden() {
    assert_eq!(
        file_output(&[
            "keyrate",
            "--eta",
            "0.001:1:10log",
            "--a",
            "0,1,3,5",
            "--ebit",
            "0.01",
            "--mu",
            "optimize"
        ]),
        golden("keyrate_optimized.csv")
    );
    assert_eq!(
        file_output(&["keyrate", "--eta", "0.1,0.5,1", "--a", "0", "--mu", "0.05"]),
        golden("keyrate_fixed.csv")
    );
}

#[test]
fn simulate_golden() {
    let args = [
        "simulate",
        "--blocks",
        "1000000",
        "--mu",
        "0.01",
        "--eta",
        "1",
        "--misalignment",
        "0.2",
        "--seed",
        "7",
    ];
    assert_eq!(stdout_of(&args), golden("simulate_seed7.csv"));
    let mut text = args.to_vec();
    text.extend(["--format", "text"]);
    assert_eq!(stdout_of(&text), golden("simulate_seed7.txt"));
}

#[test]
fn verify_operator_report_golden() {
    assert_eq!(
        stdout_of(&["verify", "--pairs", "0"]),
        golden("verify_pairs0.txt")
    );
}

#[test]
fn keyrate_full_sweep_shape() {
    let csv = file_output(&[
        "keyrate",
        "--eta",
        "0.01:1:50log",
        "--a",
        "0,1,3,5",
        "--ebit",
        "0.01",
        "--mu",
        "optimize",
    ]);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), dpsqkd::bounds::SWEEP_CSV_HEADER);
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 200);
    for block in rows.chunks(4) {
        let eta = block[0][0];
        assert!(block.iter().all(|r| r[0] == eta));
        for w in block.windows(2) {
            assert!(w[1][11] <= w[0][11], "eta={eta}");
        }
    }
}

#[test]
fn keyrate_writes_default_file_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpsqkd(&["keyrate", "--eta", "0.1:1:4", "--a", "0,5"], dir.path());
    assert!(out.status.success());
    let summary = String::from_utf8(out.stdout).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.starts_with("a_percent=0 max_R="));
    let csv = fs::read_to_string(dir.path().join("keyrate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn full_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.txt");
    let out = dpsqkd(
        &[
            "verify",
            "--pairs",
            "20",
            "--states",
            "2000",
            "--out",
            report.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(fs::read_to_string(report).unwrap(), text);
    assert!(!text.contains("FAIL"));
    for name in [
        "povm_completeness_max_dev",
        "projector_completeness_max_dev",
        "main_pro_random_sigma[2000]",
    ] {
        assert!(
            text.lines()
                .any(|l| l.starts_with(name) && l.ends_with("PASS")),
            "{name}"
        );
    }
    // 11 structured pairs plus 20 random ones, 10 inequalities each.
    let pair_lines = text.lines().filter(|l| l.starts_with("pair")).count();
    assert_eq!(pair_lines, 310);
    assert!(text.contains("channel/eta=1/mu=0.01/eph_le_ephU"));
}

#[test]
fn fault_injection_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpsqkd(
        &[
            "verify",
            "--perturb-w2",
            "0.6",
            "--pairs",
            "2",
            "--states",
            "100",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.ends_with("FAIL")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| dpsqkd(args, dir.path()).status.code();
    assert_eq!(code(&["pchar", "--mu", "0", "--a", "0"]), Some(2));
    assert_eq!(
        code(&["pchar", "--mu", "0.1", "--state-file", "x"]),
        Some(2)
    );
    assert_eq!(code(&["keyrate", "--eta", "2"]), Some(2));
    assert_eq!(code(&["keyrate", "--eta", "0:1:3log"]), Some(2));
    assert_eq!(code(&["keyrate", "--a", "100"]), Some(2));
    assert_eq!(code(&["simulate", "--eta", "0"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
    assert_eq!(
        code(&["keyrate", "--eta", "1", "--out", "/nonexistent/x.csv"]),
        Some(1)
    );
    assert_eq!(code(&["--version"]), Some(0));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    fs::write(
        &cfg,
        "# pinned run\nblocks = 1000000\nmu = 0.01\neta = 1\nmisalignment = 0.2\nseed = 7\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(
        stdout_of(&["simulate", "--config", cfg]),
        golden("simulate_seed7.csv")
    );
    let other = stdout_of(&["simulate", "--config", cfg, "--seed", "8"]);
    assert_ne!(other, golden("simulate_seed7.csv"));
    assert!(other
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("1000000,1,0.01,0,8,"));
}
