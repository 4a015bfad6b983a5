use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deepbf_core::deepbf::{BfEstimator, Direction};
use deepbf_core::nn::{Arch, Network};
use deepbf_core::rngdist::RngStream;
use tempfile::TempDir;

fn deepbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepbf")).args(args).env("DEEPBF_THREADS", "2").output().unwrap()
}

fn ok(args: &[&str]) {
    let out = deepbf(args);
    assert!(out.status.success(), "deepbf {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.json"), config).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }
}

const SMALL: &str = r#"{
    "pair": {"name": "data3"},
    "n": 2,
    "seed": 11,
    "train": {"iterations": 150, "batch_per_model": 16},
    "abc": {"total_samples": 10000, "strata": 10, "per_stratum_keep": 20, "final_keep": 50},
    "eval": {"t0": 200}
}"#;

/// Data rows of a CSV written by the CLI, after the stamp and header lines.
fn rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let stamp = lines.next().unwrap().to_string();
    let _header = lines.next().unwrap();
    (stamp, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

#[test]
fn train_and_abc_reruns_are_byte_identical() {
    let ws = Workspace::new(SMALL);
    ok(&["simulate", "--config", &ws.arg("run.json"), "--count", "5", "--out", &ws.arg("data.csv")]);
    for tag in ["a", "b"] {
        ok(&["train", "--config", &ws.arg("run.json"), "--quiet", "--out", &ws.arg(&format!("ckpt_{tag}.json"))]);
        let data = ws.arg("data.csv");
        ok(&["abc", "--config", &ws.arg("run.json"), "--data", &data, "--out", &ws.arg(&format!("abc_{tag}.csv"))]);
    }
    assert_eq!(fs::read(ws.path("ckpt_a.json")).unwrap(), fs::read(ws.path("ckpt_b.json")).unwrap());
    assert_eq!(fs::read(ws.path("abc_a.csv")).unwrap(), fs::read(ws.path("abc_b.csv")).unwrap());
}

#[test]
fn neutral_checkpoint_estimates_unit_bf() {
    let ws = Workspace::new(SMALL);
    let mut net = Network::build(&Arch::fnn(), 2, &mut RngStream::new(3, 0)).unwrap();
    net.zero_output_layer();
    let mut est = BfEstimator::from_network(net, 2, Direction::Forward, 0.0).unwrap();
    est.pair = "data1".into();
    est.save(&ws.path("half.json")).unwrap();
    fs::write(ws.path("obs.csv"), "y1,y2\n0,0\n3,1\n12,40\n").unwrap();
    ok(&["estimate", "--checkpoint", &ws.arg("half.json"), "--data", &ws.arg("obs.csv"), "--out", &ws.arg("e.csv")]);
    let (_, table) = rows(&ws.path("e.csv"));
    assert_eq!(table.len(), 3);
    for row in table {
        assert_eq!(row[1], "1.0");
        assert_eq!(row[2], "0.0");
    }
}

#[test]
fn abc_with_full_settings_stays_in_range() {
    let config = r#"{
        "pair": {"name": "data1"},
        "n": 2,
        "seed": 3,
        "abc": {"total_samples": 1200000, "strata": 1200, "per_stratum_keep": 5, "final_keep": 120}
    }"#;
    let ws = Workspace::new(config);
    ok(&["simulate", "--config", &ws.arg("run.json"), "--count", "10", "--out", &ws.arg("data.csv")]);
    ok(&["abc", "--config", &ws.arg("run.json"), "--data", &ws.arg("data.csv"), "--out", &ws.arg("abc.csv")]);
    let (_, table) = rows(&ws.path("abc.csv"));
    assert_eq!(table.len(), 20);
    for row in table {
        let v: f64 = row[1].parse().unwrap();
        assert!((1.0 / 121.0..=121.0).contains(&v), "{row:?}");
        let (n1, n2): (usize, usize) = (row[2].parse().unwrap(), row[3].parse().unwrap());
        assert_eq!(n1 + n2, 120);
    }
}

#[test]
fn exit_codes() {
    let ws = Workspace::new(r#"{"pair": {"name": "data1"}, "n": 2, "seed": 1, "bogus": 3}"#);
    assert_eq!(deepbf(&["train", "--config", &ws.arg("run.json")]).status.code(), Some(2));
    assert_eq!(deepbf(&["train", "--config", &ws.arg("missing.json")]).status.code(), Some(2));
    assert_eq!(deepbf(&["train"]).status.code(), Some(1));
    assert_eq!(deepbf(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(deepbf(&["--help"]).status.code(), Some(0));
    assert_eq!(deepbf(&["--version"]).status.code(), Some(0));
    let ws = Workspace::new(r#"{"pair": {"name": "data1"}, "n": 0, "seed": 1}"#);
    let out = deepbf(&["abc", "--config", &ws.arg("run.json"), "--data", &ws.arg("run.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn outputs_carry_provenance() {
    let ws = Workspace::new(SMALL);
    let cfg = ws.arg("run.json");
    ok(&["simulate", "--config", &cfg, "--count", "3", "--out", &ws.arg("data.csv")]);
    ok(&["evaluate", "--config", &cfg, "--out-dir", &ws.arg("eval")]);
    let (stamp, table) = rows(&ws.path("data.csv"));
    assert_eq!(table.len(), 6);
    let fields: Vec<&str> = stamp.split(' ').collect();
    assert_eq!(fields[..3], ["#", "deepbf", env!("CARGO_PKG_VERSION")]);
    let hash = fields[3].strip_prefix("config_hash=").unwrap();
    assert!(hash.len() == 64 && hash.chars().all(|c| c.is_ascii_hexdigit()), "{hash}");
    assert_eq!(fields[4], "seed=11");
    let (eval_stamp, _) = rows(&ws.path("eval/eval.csv"));
    assert_eq!(eval_stamp, stamp);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ws.path("eval/eval.json")).unwrap()).unwrap();
    assert_eq!(json["config_hash"], hash);
    assert_eq!(json["seed"], 11);
    // the closed form evaluated against itself
    assert_eq!(json["spearman_rho"], 1.0);
}
