//! Black-box tests for the `quorumwall` binary: spawn the real executable
//! and assert on exit codes and printed output.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    run_in(args, None)
}

fn run_in(args: &[&str], cwd: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_quorumwall"));
    cmd.args(args).env_remove("QUORUMWALL_CONFIG_DIR");
    if let Some(dir) = cwd {
        cmd.current_dir(dir);
    }
    cmd.output().expect("binary spawns")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn count_reports_exact_family_sizes() {
    let out = run(&["count"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        stdout(&out).trim(),
        "earth=992 leo=496 moon=248 mars=217 ratio=4.57"
    );
}

#[test]
fn count_flat_flag_appends_the_flat_family() {
    let out = run(&["count", "--flat"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("flat=217"), "got: {}", stdout(&out));
}

#[test]
fn verify_passes_on_the_shipped_families() {
    let out = run(&["verify"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("PASS"), "got: {text}");
    assert!(!text.contains("FAIL"), "got: {text}");
    assert!(text.contains("all hold"), "got: {text}");
}

#[test]
fn verify_mutation_is_caught_with_a_counterexample() {
    let out = run(&["verify", "--mutate", "drop-earth:leo"]);
    assert_eq!(out.status.code(), Some(1), "mutation must flip the exit code");
    let text = stdout(&out);
    assert!(text.contains("FAIL"), "got: {text}");
    assert!(text.contains("counterexample"), "got: {text}");
}

#[test]
fn read_wall_reports_mars_blocked_during_its_blackout() {
    let out = run(&["read-wall", "--blackout", "mars", "--coverage", "full"]);
    assert!(out.status.success());
    assert_eq!(
        stdout(&out).trim(),
        "earth:LIVE leo:LIVE moon:LIVE mars:BLOCKED"
    );
}

#[test]
fn read_wall_flags_sparse_leo_as_a_phase2_problem() {
    let out = run(&["read-wall", "--coverage", "sparse"]);
    assert!(out.status.success());
    assert!(
        stdout(&out).contains("leo:BLOCKED(phase2)"),
        "got: {}",
        stdout(&out)
    );
}

#[test]
fn read_wall_is_all_live_under_clear_skies() {
    let out = run(&["read-wall"]);
    assert!(out.status.success());
    assert_eq!(
        stdout(&out).trim(),
        "earth:LIVE leo:LIVE moon:LIVE mars:LIVE"
    );
}

#[test]
fn read_wall_crash_blocks_strict_phase2_until_k_relaxes() {
    let strict = run(&["read-wall", "--crashes", "1"]);
    assert!(strict.status.success());
    assert_eq!(
        stdout(&strict).trim(),
        "earth:BLOCKED(phase2) leo:BLOCKED(phase2) moon:BLOCKED(phase2) mars:BLOCKED(phase2)"
    );
    let relaxed = run(&["read-wall", "--crashes", "1", "--k", "4"]);
    assert!(relaxed.status.success());
    assert_eq!(
        stdout(&relaxed).trim(),
        "earth:LIVE leo:LIVE moon:LIVE mars:LIVE"
    );
}

#[test]
fn unknown_flags_are_usage_errors() {
    let out = run(&["count", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_a_filtered_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("earth.csv");
    let out = run(&[
        "sweep",
        "tier_liveness",
        "--seeds",
        "1..2",
        "--filter",
        "earth",
        "-o",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("wrote 2 rows"), "got: {}", stdout(&out));
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "header plus one row per point");
    assert_eq!(lines[0], quorumwall::CSV_HEADER);
    assert!(lines[1].starts_with("wall,earth,full,"), "got: {}", lines[1]);
    assert!(lines[2].starts_with("wall,earth,sparse,"), "got: {}", lines[2]);
}

#[test]
fn sweep_reads_families_from_a_config_dir_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("sweeps")).unwrap();
    std::fs::write(
        dir.path().join("sweeps").join("mini.cfg"),
        "family mini\ndefault blackout_s=0\ndefault sim_end_s=500\npoint tier=earth\n",
    )
    .unwrap();
    let out_path = dir.path().join("mini.csv");
    let out = run(&[
        "sweep",
        "mini",
        "--config-dir",
        dir.path().to_str().unwrap(),
        "--seeds",
        "7",
        "-o",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("wrote 1 rows"), "got: {}", stdout(&out));
    assert!(out_path.exists());
    // The builtin catalog has no `mini`, so without the override this fails.
    let missing = run(&["sweep", "mini", "--seeds", "7"]);
    assert!(!missing.status.success());
}
