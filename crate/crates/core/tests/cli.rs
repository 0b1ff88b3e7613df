//! End-to-end runs of the `ra3lab` binary against the shipped fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ra3lab::cli::{EXIT_CHECK_FAILED, EXIT_IO, EXIT_OK, EXIT_USAGE};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn ra3lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ra3lab")).args(args).env("RA3LAB_THREADS", "2").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn plan(out: &Path) -> Output {
    ra3lab(&[
        "plan",
        "--mdp",
        s(&fixture("chain_mdp.json")),
        "--options",
        s(&fixture("chain_options.json")),
        "--eps",
        "1e-3",
        "--out",
        s(out),
    ])
}

fn prune(out: &Path, seed: &str) -> Output {
    ra3lab(&[
        "prune",
        "--dist",
        s(&fixture("pruning_tasks.json")),
        "--eps",
        "0.1",
        "--sigma",
        "0.5",
        "--delta",
        "0.1",
        "--constant",
        "1.25",
        "--replications",
        "40",
        "--seed",
        seed,
        "--out",
        s(out),
    ])
}

fn gen(spec: &Path, out: &Path) -> Output {
    ra3lab(&["gen", "--spec", s(spec), "--out", s(out)])
}

#[test]
fn plan_writes_report_with_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan.json");
    let o = plan(&out);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn prune_csv_columns_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("prune.csv");
    assert_eq!(code(&prune(&out, "3")), EXIT_OK);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "replication,n_demos,survived_suboptimal,pruning_error");
    assert_eq!(lines.count(), 40);
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("prune.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "prune");
    assert!(meta["config_hash"].is_string());
}

#[test]
fn same_inputs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    assert_eq!(code(&prune(&a, "9")), EXIT_OK);
    assert_eq!(code(&prune(&b, "9")), EXIT_OK);
    assert_eq!(code(&prune(&c, "10")), EXIT_OK);
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));

    let (g1, g2) = (dir.path().join("g1.jsonl"), dir.path().join("g2.jsonl"));
    assert_eq!(code(&gen(&fixture("skill_world.json"), &g1)), EXIT_OK);
    assert_eq!(code(&gen(&fixture("skill_world.json"), &g2)), EXIT_OK);
    assert_eq!(read(&g1), read(&g2));
    assert_eq!(String::from_utf8(read(&g1)).unwrap().lines().count(), 520);
}

#[test]
fn ra3_then_rlvr() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("world.jsonl");
    assert_eq!(code(&gen(&fixture("skill_world.json"), &corpus)), EXIT_OK);
    let run = dir.path().join("run");
    let o = ra3lab(&[
        "ra3",
        "--corpus",
        s(&corpus),
        "--config",
        s(&fixture("ra3_config.json")),
        "--iters",
        "2",
        "--out",
        s(&run),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "model.json", "ntp_model.json", "bootstrapped.jsonl", "reward_trace.csv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let trace = std::fs::read_to_string(run.join("reward_trace.csv")).unwrap();
    assert!(trace.lines().count() > 1);

    let cfg = dir.path().join("grpo.json");
    std::fs::write(&cfg, r#"{"group_size": 4, "learning_rate": 1.0, "n_updates": 3}"#).unwrap();
    let out = dir.path().join("curves.csv");
    let o = ra3lab(&[
        "rlvr",
        "--prior",
        s(&run.join("model.json")),
        "--prior",
        s(&run.join("ntp_model.json")),
        "--tasks",
        s(&fixture("rlvr_tasks.json")),
        "--config",
        s(&cfg),
        "--seeds",
        "2",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("prior,seed,update,mean_reward\n"));
    // two priors, two seeds, updates 0..=3
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 4);
}

#[test]
fn unknown_config_key_is_a_usage_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grpo.json");
    std::fs::write(&cfg, r#"{"group_size": 4, "learning_rat": 1.0}"#).unwrap();
    let out = dir.path().join("curves.csv");
    let o = ra3lab(&[
        "rlvr",
        "--prior",
        s(&fixture("rlvr_tasks.json")),
        "--tasks",
        s(&fixture("rlvr_tasks.json")),
        "--config",
        s(&cfg),
        "--seeds",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), EXIT_USAGE);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
    assert!(std::fs::read_dir(dir.path()).unwrap().count() == 1, "no stray temp files");
}

#[test]
fn exit_codes_separate_usage_from_io() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ra3lab(&["plan", "--eps", "0.1"])), EXIT_USAGE);
    assert_eq!(code(&ra3lab(&["verify", "--check", "13"])), EXIT_USAGE);
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&gen(&missing, &dir.path().join("x.jsonl"))), EXIT_IO);
    // output directory that does not exist
    assert_eq!(code(&plan(&dir.path().join("no/such/dir/plan.json"))), EXIT_IO);
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_ra3lab"))
        .args(["verify", "--check", "4"])
        .env("RA3LAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&bad_threads), EXIT_USAGE);
    assert_ne!(EXIT_CHECK_FAILED, EXIT_OK);
}

#[test]
fn verify_subset_prints_table() {
    let o = ra3lab(&["verify", "--check", "3", "--check", "4"]);
    assert_eq!(code(&o), EXIT_OK);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 2);
}

#[test]
fn shipped_fixtures_match_generators() {
    for (name, contents) in ra3lab::fixtures::shipped_files().unwrap() {
        let on_disk = std::fs::read_to_string(fixture(name)).unwrap();
        assert_eq!(on_disk, contents, "{name} is stale; rerun the export_fixtures example");
    }
}
