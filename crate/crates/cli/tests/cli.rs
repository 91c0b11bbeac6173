use std::path::{Path, PathBuf};

use hyperexpand::graph::families;
use hyperexpand::{BipartiteExpander, Graph};
use hyperexpand_cli::run;
use serde_json::Value;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Out {
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let code = run(std::iter::once("hyperexpand").chain(args.iter().copied()), &mut stdout, &mut stderr);
    Out {
        code,
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
    }
}

fn json(out: &Out) -> Value {
    assert_eq!(out.code, 0, "{}", out.stderr);
    serde_json::from_str(&out.stdout).unwrap()
}

fn write_graph(dir: &Path, name: &str, g: &Graph) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, g.to_json()).unwrap();
    p
}

#[test]
fn generate_examples() {
    let out = cli(&["generate", "--n", "8", "--k", "3", "--seed", "7"]);
    let v = json(&out);
    assert_eq!(v["config"]["command"], "generate");
    assert_eq!(v["tool_version"], hyperexpand_cli::TOOL_VERSION);
    let b = BipartiteExpander::from_json(&out.stdout).unwrap();
    assert_eq!(b.graph().is_k_regular(), Some(3));

    let k33 = BipartiteExpander::from_json(&cli(&["generate", "--n", "3", "--k", "3"]).stdout).unwrap();
    assert_eq!(*k33.graph(), families::complete_bipartite(3, 3));

    let bad = cli(&["generate", "--n", "2", "--k", "5"]);
    assert_eq!(bad.code, 1);
    assert!(bad.stderr.contains("exceeds"));
    assert_eq!(cli(&["generate", "--n", "8"]).code, 1);
    assert_eq!(cli(&["generate", "--n", "8", "--k", "8", "--seed", "1"]).code, 2);
}

#[test]
fn edge_list_output_reads_back() {
    let out = cli(&["generate", "--n", "6", "--k", "2", "--seed", "3", "--format", "edgelist"]);
    assert_eq!(out.code, 0);
    assert!(out.stdout.starts_with("# config: {\"command\":\"generate\""));
    let g = Graph::from_edge_list(&out.stdout, None).unwrap();
    assert_eq!((g.n(), g.is_k_regular()), (12, Some(2)));
}

#[test]
fn analyze_examples() {
    let dir = tempfile::tempdir().unwrap();
    let k33 = write_graph(dir.path(), "k33.json", &families::complete_bipartite(3, 3));
    let v = json(&cli(&["analyze", "-i", k33.to_str().unwrap()]));
    assert_eq!(v["ramanujan"], true);
    assert_eq!(v["chung_bound"], 2.0);

    let cl16 = write_graph(dir.path(), "cl16.json", &families::circular_ladder(16));
    assert_eq!(json(&cli(&["analyze", "-i", cl16.to_str().unwrap()]))["ramanujan"], false);

    let path = write_graph(dir.path(), "path.json", &families::path(4));
    let out = cli(&["analyze", "-i", path.to_str().unwrap()]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.contains("not regular"));
}

#[test]
fn analyze_accepts_expanders_and_edge_lists() {
    let dir = tempfile::tempdir().unwrap();
    let gen = cli(&["generate", "--n", "5", "--k", "3", "--seed", "2"]);
    let p = dir.path().join("b.json");
    std::fs::write(&p, &gen.stdout).unwrap();
    assert_eq!(json(&cli(&["analyze", "-i", p.to_str().unwrap()]))["n"], 10);
    let e = dir.path().join("c.txt");
    std::fs::write(&e, families::cycle(6).to_edge_list()).unwrap();
    assert_eq!(json(&cli(&["analyze", "-i", e.to_str().unwrap()]))["k"], 2);
}

#[test]
fn verify_examples() {
    let dir = tempfile::tempdir().unwrap();
    let k33 = write_graph(dir.path(), "k33.json", &families::complete_bipartite(3, 3));
    let v = json(&cli(&["verify", "-i", k33.to_str().unwrap()]));
    assert_eq!(v["vertex_expansion"]["status"], "known-discrepancy");
    assert_eq!(v["vertex_expansion"]["expansion"], 1.0);
    assert_eq!(v["vertex_expansion"]["bound"], 1.5);
    assert_eq!(v["chung"]["status"], "pass");
    assert_eq!(v["dodziuk"]["status"], "pass");

    let c6 = write_graph(dir.path(), "c6.json", &families::cycle(6));
    let v = json(&cli(&["verify", "-i", c6.to_str().unwrap()]));
    for check in ["chung", "vertex_expansion", "dodziuk"] {
        assert_eq!(v[check]["status"], "pass", "{check}");
    }

    let c30 = write_graph(dir.path(), "c30.json", &families::cycle(30));
    assert_eq!(cli(&["verify", "-i", c30.to_str().unwrap()]).code, 1);
}

#[test]
fn rewire_examples() {
    let dir = tempfile::tempdir().unwrap();
    let c4 = write_graph(dir.path(), "c4.json", &families::cycle(4));
    let out = cli(&["rewire", "-i", c4.to_str().unwrap(), "--k", "3", "--seed", "5", "--layers", "4"]);
    let inst = hyperexpand::rewire::RewiredInstance::from_json(&out.stdout).unwrap();
    assert_eq!(inst.expander().matchings(), &[vec![2, 0, 3, 1], vec![3, 2, 1, 0], vec![0, 1, 2, 3]]);

    let one = write_graph(dir.path(), "one.json", &Graph::empty(1));
    let v = json(&cli(&["rewire", "-i", one.to_str().unwrap(), "--k", "1"]));
    assert_eq!(v["total_nodes"], 2);

    let missing = dir.path().join("missing.json");
    assert_eq!(cli(&["rewire", "-i", missing.to_str().unwrap()]).code, 1);
}

#[test]
fn train_examples() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("m.csv");
    let v = json(&cli(&["train", "--depth", "1", "--layers", "2", "--epochs", "500", "--seed", "1", "--metrics", metrics.to_str().unwrap()]));
    assert_eq!(v["runs"][0]["final_accuracy"], 1.0);
    let csv = std::fs::read_to_string(&metrics).unwrap();
    assert!(csv.starts_with("# config: "));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 501);

    let out = cli(&["train", "--depth", "1", "--lr", "0", "--epochs", "4", "--dataset-size", "20", "--metrics", metrics.to_str().unwrap()]);
    assert_eq!(out.code, 0);
    let losses: Vec<String> = std::fs::read_to_string(&metrics)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().to_string())
        .collect();
    assert_eq!(losses.len(), 4);
    assert!(losses.iter().all(|l| *l == losses[0]));

    let v = json(&cli(&[
        "train", "--depth", "2", "--layers", "3", "--rewire", "--k", "3", "--mode", "summation",
        "--compare-plain", "--seeds", "4,5", "--epochs", "2", "--dataset-size", "16",
    ]));
    let models: Vec<(u64, String)> = v["runs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["seed"].as_u64().unwrap(), r["model"].as_str().unwrap().to_string()))
        .collect();
    assert_eq!(
        models,
        [(4, "rewired"), (4, "plain"), (5, "rewired"), (5, "plain")].map(|(s, m)| (s, m.to_string()))
    );
    assert!(v["runs"][0]["final_accuracy"].is_f64());

    let diverge = cli(&["train", "--lr", "1e200", "--clip-norm", "0", "--epochs", "50", "--dataset-size", "16"]);
    assert_eq!(diverge.code, 3, "{}", diverge.stderr);
    assert_eq!(cli(&["train", "--depth", "0"]).code, 1);
}

#[test]
fn bench_reports_every_size() {
    let v = json(&cli(&["bench", "--sizes", "4,8", "--repeats", "1"]));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["vertices"], 16);
}

#[test]
fn replay_reproduces_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert_eq!(cli(&["generate", "--n", "10", "--k", "4", "--seed", "9", "-o", a.to_str().unwrap()]).code, 0);
    assert_eq!(cli(&["replay", "--config", a.to_str().unwrap(), "-o", b.to_str().unwrap()]).code, 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let garbage = dir.path().join("g.json");
    std::fs::write(&garbage, "{\"config\":{\"command\":\"nope\"}}").unwrap();
    assert_eq!(cli(&["replay", "--config", garbage.to_str().unwrap()]).code, 1);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_hyperexpand");
    let status = |args: &[&str]| std::process::Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["generate", "--n", "3", "--k", "3"]), Some(0));
    assert_eq!(status(&["generate", "--n", "2", "--k", "5"]), Some(1));
    assert_eq!(status(&["no-such-command"]), Some(1));
    assert_eq!(status(&["generate", "--n", "8", "--k", "8", "--seed", "1"]), Some(2));
    assert_eq!(status(&["--version"]), Some(0));
}
