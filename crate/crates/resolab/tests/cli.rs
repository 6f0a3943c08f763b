use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use resolab::output::strip_timestamp;

const SWEEP: &str = r#"
seed = 11
preset = "nontrapping"

[experiment]
h_list = [0.04, 0.035, 0.03, 0.025]
"#;

fn resolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resolab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn preset_list_names_every_preset() {
    let out = resolab(&["preset-list"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "nontrapping",
        "catenoid_full",
        "catenoid_thm1",
        "prop53",
        "lemma52_full",
        "elliptic",
    ] {
        assert!(
            text.lines().any(|l| l.starts_with(name)),
            "{name} missing from {text}"
        );
    }
}

#[test]
fn missing_profile_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[experiment]\nprediction = \"log_loss\"\n");
    let out = resolab(&[
        "sweep",
        "-c",
        &cfg,
        "-o",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing key `profile`"));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    for text in [
        "seeed = 3\n",
        "[profile]\nparams = [1.0]\n",
        "preset = \"no_such_preset\"\n",
    ] {
        let cfg = write_config(dir.path(), text);
        let out = resolab(&["sweep", "-c", &cfg, "-o", o.to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{text}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn unwritable_output_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = resolab(&[
        "flow",
        "--profile",
        "catenoid",
        "-o",
        blocker.join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn escape_on_the_catenoid_passes_every_clause() {
    let dir = tempfile::tempdir().unwrap();
    let out = resolab(&[
        "escape",
        "--profile",
        "catenoid",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let report = read(dir.path(), "escape_report.tsv");
    let rows: Vec<&str> = report
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect();
    assert!(rows.len() >= 13);
    assert!(
        rows.iter().all(|r| r.split('\t').nth(1) == Some("yes")),
        "{report}"
    );
    let grid = read(dir.path(), "escape_grid.tsv");
    assert!(grid.lines().any(|l| l == "s\tsigma\tq\thpq"));
    let doc: serde_json::Value = serde_json::from_str(&read(dir.path(), "escape.json")).unwrap();
    assert_eq!(doc["result"]["passed"], serde_json::Value::Bool(true));
    assert_eq!(doc["seed"], 0x5eed);
}

#[test]
fn flow_and_classify_write_headers_with_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 5\n[profile]\nkind = \"double_well\"\nhalf_width = 6.0\n[flow]\ns = 0.5\nmu = 0.8\nt_final = 50.0\n[classify]\npoints = [[0.0, 1.0, 1.0]]\n",
    );
    let o = dir.path().join("o");
    for cmd in ["flow", "classify"] {
        let out = resolab(&[cmd, "-c", &cfg, "-o", o.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{cmd}");
    }
    for f in ["flow.tsv", "orbits.tsv", "points.tsv"] {
        let text = read(&o, f);
        assert!(text.starts_with("# artifact resolab"), "{f}");
        assert!(
            text.contains("\n# schema 1\n")
                && text.contains("\n# seed 5\n")
                && text.contains("\n# config_sha256 "),
            "{f}"
        );
    }
    assert_eq!(
        read(&o, "orbits.tsv")
            .lines()
            .filter(|l| !l.starts_with('#'))
            .count(),
        7
    );
    assert!(read(&o, "points.tsv").contains("\ttrapped\t"));
}

#[test]
fn sweep_reruns_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SWEEP);
    let runs = [("a", "1"), ("b", "1"), ("c", "2")];
    for (sub, threads) in runs {
        let out = resolab(&[
            "sweep",
            "-c",
            &cfg,
            "-o",
            dir.path().join(sub).to_str().unwrap(),
            "-j",
            threads,
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for f in [
        "sweep.tsv",
        "sweep.json",
        "sweep_plot.tsv",
        "sweep_audit.tsv",
    ] {
        let a = strip_timestamp(&read(&dir.path().join("a"), f));
        for sub in ["b", "c"] {
            assert_eq!(
                a,
                strip_timestamp(&read(&dir.path().join(sub), f)),
                "{f} differs in {sub}"
            );
        }
    }
    let tsv = read(&dir.path().join("a"), "sweep.tsv");
    assert!(tsv.contains("\n# fit pure_alpha "));
    assert!(tsv.contains("\n# anchor nontrapping bound C/h\n"));
}

#[test]
fn seed_flag_changes_the_header_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SWEEP);
    let mut hashes = Vec::new();
    for (sub, seed) in [("a", "1"), ("b", "2")] {
        let o = dir.path().join(sub);
        let out = resolab(&[
            "resolve",
            "-c",
            &cfg,
            "--seed",
            seed,
            "--h",
            "0.04",
            "-o",
            o.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        let text = read(&o, "resolve_modes.tsv");
        assert!(text.contains(&format!("\n# seed {seed}\n")));
        hashes.push(
            text.lines()
                .find(|l| l.starts_with("# config_sha256"))
                .unwrap()
                .to_string(),
        );
    }
    assert_ne!(hashes[0], hashes[1]);
}

#[test]
fn failed_gluing_check_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "preset = \"lemma52_full\"\n[experiment]\nh_list = [0.04, 0.03]\n",
    );
    let out = resolab(&[
        "glue",
        "-c",
        &cfg,
        "-o",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("pass identities vanish to 1e-10"), "{text}");
    assert!(text.contains("FAIL |A0 A1| decays"), "{text}");
}
