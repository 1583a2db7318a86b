use std::path::PathBuf;
use std::process::{Command, Output};

fn qsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsched"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn repo(rel: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", rel].iter().collect();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn schedule_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("s.json");
    let report = dir.path().join("r.csv");
    for scheduler in ["pts-np-edf", "rcpsp-np-edf", "rcpsp-np-fpr"] {
        let o = qsched(&[
            "schedule",
            "--topology",
            &repo("topologies/ring.json"),
            "--demands",
            &repo("demands/ring_small.json"),
            "--scheduler",
            scheduler,
            "--out",
            sched.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let csv = std::fs::read_to_string(&report).unwrap();
        assert!(csv.starts_with("demand_id,r_min,achieved_rate,"));
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().last().unwrap().starts_with("total,"));

        let o = qsched(&[
            "validate",
            "--topology",
            &repo("topologies/ring.json"),
            "--demands",
            &repo("demands/ring_small.json"),
            "--schedule",
            sched.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stdout(&o));
        assert!(stdout(&o).starts_with("ok:"));
    }
}

#[test]
fn validate_catches_a_tampered_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("s.json");
    let o = qsched(&[
        "schedule",
        "--topology",
        &repo("topologies/ring.json"),
        "--demands",
        &repo("demands/ring_small.json"),
        "--out",
        sched.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sched).unwrap()).unwrap();
    let ops = v["ops"].as_array_mut().unwrap();
    assert!(!ops.is_empty());
    let s = ops[0]["start"].as_u64().unwrap();
    ops[0]["start"] = (s + 1).into();
    std::fs::write(&sched, v.to_string()).unwrap();
    let o = qsched(&[
        "validate",
        "--topology",
        &repo("topologies/ring.json"),
        "--demands",
        &repo("demands/ring_small.json"),
        "--schedule",
        sched.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("OffsetMismatch"));
}

#[test]
fn sweep_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(threads);
        let o = qsched(&[
            "sweep",
            "--topology",
            &repo("topologies/ring.json"),
            "--out",
            out.to_str().unwrap(),
            "--reps",
            "4",
            "--loads",
            "12.5,25",
            "--seed",
            "9",
            "--threads",
            threads,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((
            std::fs::read(out.join("rows.csv")).unwrap(),
            std::fs::read(out.join("aggregates.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let agg = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert_eq!(agg.lines().count(), 1 + 3 * 2);
}

#[test]
fn oracle_agrees_on_small_sets() {
    let o = qsched(&["oracle", "5/6", "1/6"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("hyperperiod 6"));
    assert!(text.contains("t0 edf [0]"));
    assert!(text.contains("t1 edf [5]"));
    assert!(text.contains("edf complete: true, exhaustive feasible: true"));
}

#[test]
fn bad_input_is_an_error() {
    let o = qsched(&["oracle", "7/6"]);
    assert_eq!(o.status.code(), Some(2));
    let o = qsched(&["schedule", "--topology", "/nonexistent.json", "--demands", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("loading topology"));
}

#[test]
fn builtin_topology_matches_shipped_file() {
    let o = qsched(&["topology", "ring"]);
    assert!(o.status.success());
    let shipped = std::fs::read_to_string(repo("topologies/ring.json")).unwrap();
    assert_eq!(stdout(&o), shipped);
}
