use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_puf-entropy"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// Two devices whose oscillator pairs are ordered oppositely, giving an
/// unbiased Bit-Alias of exactly 0.5 at all 256 positions.
fn complementary_dataset(dir: &Path) -> PathBuf {
    let a: Vec<String> = (0..256).flat_map(|_| ["201.5".to_string(), "200.25".to_string()]).collect();
    let b: Vec<String> = (0..256).flat_map(|_| ["199.0".to_string(), "200.75".to_string()]).collect();
    let path = dir.join("unbiased.txt");
    std::fs::write(&path, format!("{}\n{}\n", a.join(" "), b.join(" "))).unwrap();
    path
}

/// Deterministic skewed frequencies: a fixed offset per oscillator plus a
/// small per-device term.
fn skewed_dataset(dir: &Path, devices: usize) -> PathBuf {
    let mut text = String::new();
    for d in 0..devices {
        let row: Vec<String> = (0..512)
            .map(|i| {
                let offset = ((i * 7919) % 113) as f64 / 40.0;
                let noise = (((d * 131 + i * 17) % 97) as f64 - 48.0) / 25.0;
                format!("{:.4}", 200.0 + offset + noise)
            })
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let path = dir.join("skewed.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn missing_dataset_exits_with_data_error() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["--dataset", "nope.txt", "bitalias"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let ds = complementary_dataset(dir.path());
    let ds = ds.to_str().unwrap();
    assert_eq!(code(&run(dir.path(), &["--dataset", ds, "entropy", "--code", "bch9_3_1"])), 2);
    assert_eq!(code(&run(dir.path(), &["--dataset", ds, "grouping", "--code", "rep3", "--theta-delta", "0"])), 2);

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "codes = [\"rep3\"]\nunknown_key = 1\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["--config", cfg.to_str().unwrap(), "bitalias"])), 2);

    let out = bin()
        .current_dir(dir.path())
        .env("PUF_ENTROPY_THREADS", "zero")
        .args(["--dataset", ds, "bitalias"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn capability_limits_exit_with_four() {
    let dir = TempDir::new().unwrap();
    let ds = complementary_dataset(dir.path());
    let ds = ds.to_str().unwrap();
    let out = run(dir.path(), &["--dataset", ds, "entropy", "--code", "bch31_6_7", "--require-exact"]);
    assert_eq!(code(&out), 4);
    let out = run(dir.path(), &["--dataset", ds, "keyrank", "--code", "bch63_7_15", "--method", "exact"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn bitalias_of_two_devices_is_exact() {
    let dir = TempDir::new().unwrap();
    // pair 0: 1,1   pair 1: 1,0   pair 2: 0,0   pair 3: equal, tie gives 0
    let path = dir.path().join("toy.txt");
    std::fs::write(&path, "# toy\n5 4 3 2 1 2 7 7\n9 8 5 6 1 3 7 7\n").unwrap();
    let out = run(dir.path(), &["--dataset", path.to_str().unwrap(), "--out", "o", "bitalias"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(dir.path().join("o/bitalias.json"));
    let p: Vec<f64> = doc["p"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(p, vec![1.0, 0.5, 0.0, 0.0]);
    assert_eq!(doc["ties"]["count"], 2);
    assert!(doc["config"].is_object());
    let csv = std::fs::read_to_string(dir.path().join("o/bitalias.csv")).unwrap();
    assert!(csv.starts_with('#'));
}

#[test]
fn unbiased_responses_keep_all_key_bits() {
    let dir = TempDir::new().unwrap();
    let ds = complementary_dataset(dir.path());
    let out = run(
        dir.path(),
        &["--dataset", ds.to_str().unwrap(), "--out", "o", "table", "--codes", "rep3,bch7_4_1,bch31_6_7"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(dir.path().join("o/table.json"));
    for row in doc["rows"].as_array().unwrap() {
        let k = row["k"].as_f64().unwrap();
        assert!((row["l_tilde"].as_f64().unwrap() - k).abs() < 1e-9);
        for g in row["grouping"].as_array().unwrap() {
            assert!((g["bound"].as_f64().unwrap() - k).abs() < 1e-9);
        }
        if row["code"] == "(31,6,7)" {
            assert!(row["h_exact_ind"].is_null());
        } else {
            assert!((row["h_exact_ind"].as_f64().unwrap() - k).abs() < 1e-9);
            assert!((row["h_exact_iid"].as_f64().unwrap() - k).abs() < 1e-9);
        }
    }
    let csv = std::fs::read_to_string(dir.path().join("o/table.csv")).unwrap();
    let bch31 = csv.lines().find(|l| l.starts_with("\"(31,6,7)\"")).unwrap();
    assert!(bch31.contains(",NaN,NaN,"), "{bch31}");
    assert!(csv.lines().any(|l| l.starts_with("code,n,m,m_tilde,k,")));
}

#[test]
fn keyrank_reports_are_bounded_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let ds = skewed_dataset(dir.path(), 12);
    let ds = ds.to_str().unwrap();
    let args = |out: &'static str| {
        vec!["--dataset", ds, "--devices", "0-9", "--out", out, "keyrank", "--code", "rep3", "--keys", "3", "--seed", "11"]
    };
    assert_eq!(code(&run(dir.path(), &args("a"))), 0);
    assert_eq!(code(&run(dir.path(), &args("b"))), 0);
    let a = std::fs::read_to_string(dir.path().join("a/keyrank_rep3.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b/keyrank_rep3.csv")).unwrap();
    // the configuration echo names the output directory
    let strip = |s: &str| s.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&a), strip(&b));

    let rows: Vec<&str> = a.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "device,key_index,log2_rank_lower,log2_rank_est,log2_rank_upper");
    assert_eq!(rows.len(), 1 + 10 * 3);
    for line in &rows[1..] {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cells[2] <= cells[3] && cells[3] <= cells[4]);
        assert!(cells[4] <= 85.0 + 1e-9);
    }
    let doc = read_json(dir.path().join("a/keyrank_rep3.json"));
    assert_eq!(doc["all_key_invariant"], true);
    assert!(doc["grouping_bound"].as_array().unwrap().len() == 2);
}

#[test]
fn grouping_emits_response_group_table() {
    let dir = TempDir::new().unwrap();
    let ds = skewed_dataset(dir.path(), 8);
    let out = run(
        dir.path(),
        &[
            "--dataset",
            ds.to_str().unwrap(),
            "--out",
            "o",
            "grouping",
            "--code",
            "bch15_5_3",
            "--theta-delta",
            "0.1",
            "--emit-table",
            "o/groups.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("o/groups.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("block,row,zeta_1")));
    let doc = read_json(dir.path().join("o/grouping_bch15_5_3_0.1.json"));
    let total = doc["result"]["total"].as_f64().unwrap();
    let per_block: f64 = doc["result"]["per_block"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - per_block).abs() < 1e-9);
    for b in doc["brackets"].as_array().unwrap() {
        assert!(b["h_high"].as_f64().unwrap() <= b["h_low"].as_f64().unwrap() + 1e-9);
    }
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = TempDir::new().unwrap();
    skewed_dataset(dir.path(), 6);
    let cfg = dir.path().join("analysis.toml");
    std::fs::write(
        &cfg,
        "codes = [\"rep5\"]\ntheta_delta = [0.1]\noutput_dir = \"res\"\n[dataset]\npath = \"skewed.csv\"\ndelimiter = \"comma\"\n",
    )
    .unwrap();
    let out = run(dir.path(), &["--config", "analysis.toml", "--mode", "lowest", "table", "--no-exact"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(dir.path().join("res/table.json"));
    assert_eq!(doc["config"]["mode"], "lowest");
    assert_eq!(doc["config"]["exact"], false);
    assert_eq!(doc["rows"].as_array().unwrap().len(), 1);
    assert!(doc["rows"][0]["h_exact_iid"].is_null());
}
