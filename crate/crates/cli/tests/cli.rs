use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn msq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msq")).args(args).output().expect("run msq")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("msq-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios").join(format!("{name}.json"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Writes a copy of a bundled scenario with some fields replaced.
fn variant(name: &str, dir: &Path, edits: serde_json::Value) -> PathBuf {
    let mut doc = json(&bundled(name));
    for (k, v) in edits.as_object().unwrap() {
        doc[k] = v.clone();
    }
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, doc.to_string()).unwrap();
    path
}

#[test]
fn generate_is_reproducible_and_valid() {
    let dir = scratch("generate");
    let (a, b) = (dir.join("a"), dir.join("b"));
    for out in [&a, &b] {
        let o = msq(&["generate", "--region", "hexagon", "--target", "50", "--seed", "4", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let net = fs::read(a.join("network.json")).unwrap();
    assert_eq!(net, fs::read(b.join("network.json")).unwrap());
    assert_eq!(json(&a.join("manifest.json"))["config_hash"], json(&b.join("manifest.json"))["config_hash"]);
    let doc = json(&a.join("network.json"));
    assert!(doc["nodes"].as_array().unwrap().len() <= 50);
    assert_eq!(json(&a.join("validation.json"))["issues"], serde_json::json!([]));
}

#[test]
fn target_below_initial_size_is_a_config_error() {
    let o = msq(&["generate", "--target", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plan_route_optimize_chain() {
    let dir = scratch("chain");
    let g = dir.join("g");
    assert!(msq(&["generate", "--target", "40", "--seed", "1", "--out", s(&g)]).status.success());
    let network = g.join("network.json");
    let p = dir.join("p");
    assert!(msq(&["plan", "--network", s(&network), "--scheme", "all-clockwise", "--out", s(&p)]).status.success());
    let plan = p.join("plan.json");
    assert!(p.join("manifest.json").exists());

    let o = msq(&["route", "--network", s(&network), "--plan", s(&plan), "--source", "0", "--terminal", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let route: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(route["ratio"].as_f64().unwrap() <= 2.0 + 1e-9);
    assert_eq!(route["cycle_trace"].as_array().unwrap().len(), route["hops"].as_u64().unwrap() as usize);

    let demands = dir.join("demands.json");
    fs::write(&demands, r#"{"0,2": 0.5, "1,0": 0.25}"#).unwrap();
    let o = msq(&["optimize", "--network", s(&network), "--plan", s(&plan), "--demands", s(&demands)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sol: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(sol["margins"].as_object().unwrap().values().all(|m| m.as_f64().unwrap() > 0.0));
    assert!(sol["cost"].as_f64().unwrap() <= sol["initial_cost"].as_f64().unwrap());
}

#[test]
fn routing_errors_map_to_exit_codes() {
    let dir = scratch("route-errors");
    assert!(msq(&["generate", "--out", s(&dir)]).status.success());
    let network = dir.join("network.json");
    assert_eq!(msq(&["route", "--network", s(&network), "--source", "0", "--terminal", "9"]).status.code(), Some(2));
    let damage = dir.join("damage.json");
    fs::write(&damage, r#"{"removed_edges": [[0, 1], [0, 2]]}"#).unwrap();
    let o = msq(&["route", "--network", s(&network), "--source", "0", "--terminal", "1", "--damage", s(&damage)]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(msq(&["route", "--network", "missing.json", "--source", "0", "--terminal", "1"]).status.code(), Some(2));
}

#[test]
fn pipeline_writes_every_stage() {
    let dir = scratch("pipeline");
    let scenario = variant("tandem", &dir, serde_json::json!({"horizon": 20000.0}));
    let out = dir.join("out");
    let o = msq(&["pipeline", s(&scenario), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["network.json", "plan.json", "solution.json", "metrics.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let mean = json(&out.join("metrics.json"))["mean_delay"].as_f64().unwrap();
    let expected = 1.0 / 1.5 + 1.0 / 2.5 + 1.0 / 1.5;
    assert!((mean - expected).abs() / expected < 0.1, "{mean}");
    assert_eq!(json(&out.join("manifest.json"))["subcommand"], "pipeline");
}

#[test]
fn unstable_rates_exit_with_config_error() {
    let dir = scratch("unstable");
    let scenario = variant("tandem", &dir, serde_json::json!({"rates": {"1": 2.0, "5": 0.3, "9": 2.0}}));
    let o = msq(&["simulate", s(&scenario)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("c5"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn replications_do_not_depend_on_thread_count() {
    let dir = scratch("replications");
    let scenario = bundled("recovery-ferry");
    let (one, many) = (dir.join("one"), dir.join("many"));
    for (out, jobs) in [(&one, "1"), (&many, "3")] {
        let o = msq(&["simulate", s(&scenario), "--replications", "3", "--jobs", jobs, "--format", "csv", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(one.join("summary.json")).unwrap(), fs::read(many.join("summary.json")).unwrap());
    for rep in ["rep-000", "rep-001", "rep-002"] {
        for f in ["messages.csv", "events.csv", "pairs.csv"] {
            assert_eq!(fs::read(one.join(rep).join(f)).unwrap(), fs::read(many.join(rep).join(f)).unwrap(), "{rep}/{f}");
        }
        let hash = |d: &Path| json(&d.join(rep).join("manifest.json"))["config_hash"].clone();
        assert_eq!(hash(&one), hash(&many));
    }
    let summary = json(&one.join("summary.json"));
    assert_eq!(summary["replications"].as_array().unwrap().len(), 3);
    assert!(summary["std_error"].is_number());
}

#[test]
fn mode_override_rejects_events_in_queue_mode() {
    let o = msq(&["simulate", s(&bundled("recovery-node")), "--mode", "queue"]);
    assert_eq!(o.status.code(), Some(2));
}
