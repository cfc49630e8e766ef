use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn evswitch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evswitch")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = evswitch(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

const TASK: &str = "pick the pepper and place on the purple plate";

#[test]
fn run_writes_reproducible_trace_and_meta() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&["run", "--task", TASK, "--seed", "12", "--mode", "hybrid", "--out", dir.to_str().unwrap()]);
    }
    assert_eq!(read(&a, "trace.jsonl"), read(&b, "trace.jsonl"));
    assert_eq!(read(&a, "meta.json"), read(&b, "meta.json"));

    let meta: serde_json::Value = serde_json::from_slice(&read(&a, "meta.json")).unwrap();
    assert_eq!(meta["seed"], 12);
    assert_eq!(meta["instruction"], TASK);
    assert!(meta["score"].as_f64().is_some());
    let trace = String::from_utf8(read(&a, "trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count() as u64, meta["ticks"].as_u64().unwrap());
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    for key in ["tick", "phase", "active_policy", "arm", "hand", "sigma_vla", "sigma_grasp"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }

    let c = tmp.path().join("c");
    ok(&["run", "--task", TASK, "--seed", "12", "--mode", "baseline", "--out", c.to_str().unwrap()]);
    assert_ne!(read(&a, "trace.jsonl"), read(&c, "trace.jsonl"));
}

#[test]
fn bad_input_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = evswitch(&["run", "--task", "make coffee", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = evswitch(&["eval", "nonsense", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!evswitch(&["export", tmp.path().to_str().unwrap()]).status.success());
}

#[test]
fn collect_validate_export() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = tmp.path().join("plan.toml");
    std::fs::write(
        &plan,
        "name = \"tiny\"\nvla_per_combo = 1\nrecovery_per_object = 1\n[diffusion]\ntape = 2\npaper = 2\npepper = 2\n",
    )
    .unwrap();
    let ds = tmp.path().join("ds");
    let ds_s = ds.to_str().unwrap();
    let said = ok(&["collect", "--plan", plan.to_str().unwrap(), "--seed", "4", "--out", ds_s]);
    assert!(said.starts_with("12 episodes"), "{said}");
    assert!(ok(&["validate", ds_s]).contains("0 violations"));
    assert!(ok(&["export", "--vla", ds_s]).starts_with("vla:"));
    assert!(ok(&["export", "--diffusion", ds_s]).starts_with("diffusion:"));
    assert!(ds.join("export/diffusion/samples.jsonl").exists());

    // a second collect into the same directory refuses to overwrite
    assert_eq!(evswitch(&["collect", "--plan", plan.to_str().unwrap(), "--out", ds_s]).status.code(), Some(2));

    let victim = std::fs::read_dir(ds.join("episodes")).unwrap().next().unwrap().unwrap().path();
    std::fs::remove_dir_all(victim).unwrap();
    let out = evswitch(&["validate", "--json", ds_s]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["violations"][0]["rule"], "count");
}

#[test]
fn eval_writes_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("eval.toml");
    std::fs::write(&cfg, "[recovery]\ntrials = 4\n").unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let said = ok(&["eval", "recovery", "--config", cfg.to_str().unwrap(), "--seed", "3", "--out", dir.to_str().unwrap()]);
        assert!(said.contains("PASS"), "{said}");
    }
    assert_eq!(read(&a, "results.csv"), read(&b, "results.csv"));
    assert_eq!(read(&a, "report.md"), read(&b, "report.md"));
    let traces: Vec<_> = std::fs::read_dir(a.join("traces")).unwrap().collect();
    assert!(!traces.is_empty());

    std::fs::write(&cfg, "[end_to_end]\nepisodes = 2\nobjects = [\"tape\"]\nplates = [\"yellow\"]\n").unwrap();
    let c = tmp.path().join("c");
    let out = evswitch(&["eval", "baseline", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(out.status.code().unwrap() < 2, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(read(&c, "results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("baseline,tape,yellow,2,"));
}

#[test]
fn remote_approach_policy_gives_the_same_episode() {
    let tmp = tempfile::tempdir().unwrap();
    let mut server = Command::new(env!("CARGO_BIN_EXE_evswitch"))
        .args(["serve-policy", "--policy", "vla", "--bind", "127.0.0.1:0", "--seed", "21"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().rsplit(' ').next().unwrap().to_string();

    let (local, remote) = (tmp.path().join("local"), tmp.path().join("remote"));
    ok(&["run", "--task", TASK, "--seed", "21", "--out", local.to_str().unwrap()]);
    ok(&["run", "--task", TASK, "--seed", "21", "--remote-vla", &addr, "--deadline-ms", "5000", "--out", remote.to_str().unwrap()]);
    server.kill().unwrap();
    let _ = server.wait();
    assert_eq!(read(&local, "trace.jsonl"), read(&remote, "trace.jsonl"));
    assert_eq!(read(&local, "meta.json"), read(&remote, "meta.json"));
}
