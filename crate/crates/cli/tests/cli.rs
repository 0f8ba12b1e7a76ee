//! End-to-end runs of the `evocache` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn evocache(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evocache"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A skewed trace with interleaved one-time objects, one `object_id,size` per line.
fn write_trace(dir: &Path, name: &str, len: u64) -> PathBuf {
    let path = dir.join(name);
    let mut text = String::new();
    let mut x: u64 = 12345;
    for t in 0..len {
        x = x
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let r = (x >> 33) % 1000;
        let id = if t % 5 == 4 { 10_000 + t } else { r * r / 5000 };
        text.push_str(&format!("{id},{}\n", 100 + id % 7));
    }
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_writes_results_csv() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write_trace(dir.path(), "t.csv", 3000);
    let out = dir.path().join("results.csv");
    let o = evocache(&[
        "simulate",
        "--trace",
        s(&trace),
        "--bundled",
        "s5_loop",
        "--policy",
        "builtin:lru",
        "--policy",
        "builtin:fifo",
        "--capacity",
        "abs:10",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "trace,policy,capacity,capacity_value,mode,requests,hits,misses,object_hit_rate,byte_hit_rate,evictions"
    );
    assert_eq!(lines.len(), 5);
    // Rows are sorted by trace, then policy; a path label sorts before `s5_loop`.
    assert!(lines[1].contains(",fifo,abs:10,10,slots,3000,"));
    assert!(lines[2].contains(",lru,abs:10,10,slots,3000,"));
    // A 100-object loop never hits in 10 slots.
    assert!(lines[4].starts_with("s5_loop,lru,abs:10,10,slots,20000,0,20000,0,0,"));
    assert!(stdout(&o).starts_with("trace"));
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write_trace(dir.path(), "t.csv", 2000);
    let args = |out: &Path| {
        vec![
            "simulate".to_string(),
            "--trace".into(),
            s(&trace).into(),
            "--policy".into(),
            "builtin:s3fifo".into(),
            "--policy".into(),
            "builtin:gdsf,mechanism=samplesort:4".into(),
            "--capacity".into(),
            "frac:0.05".into(),
            "--mode".into(),
            "bytes".into(),
            "--seed".into(),
            "9".into(),
            "--format".into(),
            "json".into(),
            "--out".into(),
            s(out).into(),
        ]
    };
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let run = |out: &Path| {
        let args = args(out);
        evocache(&args.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let (oa, ob) = (run(&a), run(&b));
    assert!(oa.status.success(), "{}", stderr(&oa));
    assert_eq!(oa.stdout, ob.stdout);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&oa.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[0]["mode"], "bytes");
}

#[test]
fn fifo_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write_trace(dir.path(), "t.csv", 2000);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = evocache(&[
            "simulate",
            "--trace",
            s(&trace),
            "--policy",
            "builtin:fifo",
            "--capacity",
            "frac:0.01",
            "--out",
            s(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert!(String::from_utf8(bytes)
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .contains(",fifo,small,"));
}

/// Best-counts over the bundled suite agree with a recount done directly on the results CSV.
#[test]
fn best_counts_match_a_recount_of_the_suite() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("suite.csv");
    let listing = stdout(&evocache(&["gen", "--list"]));
    let suite: Vec<&str> = listing
        .lines()
        .take(12)
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    let mut args = vec!["simulate", "--out", s(&results), "--format", "csv"];
    for name in &suite {
        args.extend(["--bundled", name]);
    }
    for p in [
        "builtin:lru",
        "builtin:lfu",
        "builtin:fifo",
        "builtin:sieve",
    ] {
        args.extend(["--policy", p]);
    }
    for c in ["tiny", "small"] {
        args.extend(["--capacity", c]);
    }
    let o = evocache(&args);
    assert!(o.status.success(), "{}", stderr(&o));

    // Recount: max object_hit_rate per (capacity, trace), crediting every tie.
    let text = std::fs::read_to_string(&results).unwrap();
    let mut per: std::collections::BTreeMap<(String, String), Vec<(String, f64)>> =
        Default::default();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        per.entry((f[2].to_string(), f[0].to_string()))
            .or_default()
            .push((f[1].to_string(), f[8].parse().unwrap()));
    }
    assert_eq!(per.len(), 24);
    let mut expected: std::collections::BTreeMap<(String, String), usize> = Default::default();
    for ((cap, _), rows) in &per {
        let best = rows.iter().map(|r| r.1).fold(f64::MIN, f64::max);
        for (p, v) in rows {
            *expected.entry((cap.clone(), p.clone())).or_default() += usize::from(*v == best);
        }
    }

    let o = evocache(&[
        "report",
        "best-counts",
        "--results",
        s(&results),
        "--format",
        "csv",
        "--tie-tolerance",
        "0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut got: std::collections::BTreeMap<(String, String), usize> = Default::default();
    for line in stdout(&o).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[4], "12");
        got.insert((f[0].to_string(), f[2].to_string()), f[3].parse().unwrap());
    }
    assert_eq!(got, expected);
}

#[test]
fn unknown_builtin_is_a_usage_error() {
    let o = evocache(&[
        "simulate",
        "--bundled",
        "s1_zipf08",
        "--policy",
        "builtin:nope",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown builtin policy"));
    let o = evocache(&["simulate", "--policy", "builtin:lru"]);
    assert_eq!(o.status.code(), Some(2));
    let topo = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/s3fifo_topology.json");
    let topo_ref = format!("topo:{}", s(&topo));
    let o = evocache(&[
        "simulate",
        "--bundled",
        "s1_zipf08",
        "--policy",
        &topo_ref,
        "--mode",
        "bytes",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = evocache(&[
        "simulate",
        "--trace",
        s(&dir.path().join("missing.csv")),
        "--policy",
        "builtin:lru",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn help_exits_zero() {
    for args in [
        &["--help"][..],
        &["simulate", "--help"],
        &["report", "best-counts", "--help"],
    ] {
        let o = evocache(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}");
        assert!(stdout(&o).contains("Usage"));
    }
}

#[test]
fn best_counts_credit_ties() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("r.csv");
    std::fs::write(
        &results,
        "trace,policy,capacity,capacity_value,mode,requests,hits,misses,object_hit_rate,byte_hit_rate,evictions\n\
         a,lru,small,10,slots,100,50,50,0.5,0.5,40\n\
         a,lfu,small,10,slots,100,50,50,0.5,0.4,40\n\
         a,fifo,small,10,slots,100,30,70,0.3,0.3,60\n\
         b,lru,small,10,slots,100,20,80,0.2,0.2,70\n\
         b,lfu,small,10,slots,100,40,60,0.4,0.4,50\n\
         b,fifo,small,10,slots,100,40,60,0.4,0.4,50\n\
         c,lru,small,10,slots,100,90,10,0.9,0.9,0\n",
    )
    .unwrap();
    let o = evocache(&[
        "report",
        "best-counts",
        "--results",
        s(&results),
        "--format",
        "csv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        "capacity,mode,policy,best_count,traces\nsmall,slots,lfu,2,2\nsmall,slots,fifo,1,2\nsmall,slots,lru,1,2\n"
    );

    let o = evocache(&[
        "report",
        "mrr",
        "--results",
        s(&results),
        "--format",
        "csv",
        "--per-instance",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<(String, f64)> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (format!("{}/{}", f[0], f[3]), f[4].parse().unwrap())
        })
        .collect();
    // FIFO misses 70 on `a` and 60 on `b`; `c` has no FIFO row.
    let expected = [
        ("a/lfu", 2.0 / 7.0),
        ("a/lru", 2.0 / 7.0),
        ("b/lfu", 0.0),
        ("b/lru", -1.0 / 3.0),
    ];
    assert_eq!(rows.len(), expected.len());
    for ((k, v), (ek, ev)) in rows.iter().zip(expected) {
        assert_eq!(k, ek);
        assert!((v - ev).abs() < 1e-12, "{k}: {v} vs {ev}");
    }
}

#[test]
fn search_writes_every_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write_trace(dir.path(), "t.csv", 1500);
    let db = dir.path().join("db.jsonl");
    let o = evocache(&[
        "search",
        "--trace",
        s(&trace),
        "--capacity",
        "abs:20",
        "--rounds",
        "10",
        "--per-round",
        "25",
        "--seed",
        "4",
        "--db",
        s(&db),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = std::fs::read_to_string(&db).unwrap();
    assert_eq!(rows.lines().count(), 1 + 10 * 25);
    let out = stdout(&o);
    assert!(out.contains("stopped: reached the round limit"), "{out}");
    assert!(out.contains("best objective: "));
    for line in rows.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["status"].is_string());
    }
}

#[test]
fn search_replays_recorded_replies() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write_trace(dir.path(), "t.csv", 1000);
    let replay = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/llm_replay.jsonl");
    let db = dir.path().join("db.jsonl");
    let rec = dir.path().join("rec.jsonl");
    let o = evocache(&[
        "search",
        "--trace",
        s(&trace),
        "--capacity",
        "abs:20",
        "--generator",
        "llm",
        "--replay",
        s(&replay),
        "--record",
        s(&rec),
        "--rounds",
        "1",
        "--db",
        s(&db),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&db).unwrap().lines().count(), 26);
    assert_eq!(std::fs::read_to_string(&rec).unwrap().lines().count(), 25);
}

#[test]
fn cluster_then_classify() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let assignments = dir.path().join("assign.csv");
    let o = evocache(&[
        "cluster",
        "--families",
        "4",
        "--k",
        "3",
        "--seed",
        "7",
        "--restarts",
        "3",
        "--prefix",
        "5000",
        "--model",
        s(&model),
        "--assignments",
        s(&assignments),
        "--format",
        "csv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 4, "{out}");
    let sizes: usize = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(sizes, 12);
    assert!(stderr(&o).contains("family purity"));
    assert_eq!(
        std::fs::read_to_string(&assignments)
            .unwrap()
            .lines()
            .count(),
        13
    );

    // A family member is placed in a cluster; a one-object trace is far from all of them.
    let odd = dir.path().join("odd.csv");
    let text = "1,1000000\n".repeat(5000);
    std::fs::write(&odd, text).unwrap();
    let o = evocache(&[
        "classify",
        "--model",
        s(&model),
        "--bundled",
        "zipf_00",
        s(&odd),
        "--prefix",
        "5000",
        "--format",
        "csv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "trace,class,nearest,distance");
    assert!(
        lines
            .iter()
            .any(|l| l.starts_with("zipf_00,") && !l.contains(",novel,")),
        "{out}"
    );
    assert!(lines.iter().any(|l| l.contains("odd.csv,novel,")), "{out}");
}

#[test]
fn cluster_ten_centroids() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let o = evocache(&[
        "cluster",
        "--families",
        "4",
        "--k",
        "10",
        "--seed",
        "7",
        "--prefix",
        "50000",
        "--model",
        s(&model),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(v["centroids"].as_array().unwrap().len(), 10);
    // Header plus one line per cluster.
    assert_eq!(stdout(&o).lines().count(), 11);
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write_trace(dir.path(), "t.csv", 1000);
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "trace": [s(&trace)],
            "policy": ["builtin:lru", "builtin:sieve"],
            "capacity": "abs:5",
            "format": "csv",
        })
        .to_string(),
    )
    .unwrap();
    let o = evocache(&["simulate", "--config", s(&config), "--capacity", "abs:7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 3);
    assert!(
        out.lines().skip(1).all(|l| l.contains(",abs:7,7,")),
        "{out}"
    );
    assert!(out.contains(",sieve,"));
}

#[test]
fn gen_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let o = evocache(&["gen", "--bundled", "s4_uniform", "--out-dir", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let path = dir.path().join("s4_uniform.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 20_000);
    // The written trace simulates the same as the bundled one.
    let run = |args: &[&str]| {
        let mut full = vec!["simulate", "--policy", "builtin:lfu", "--format", "csv"];
        full.extend_from_slice(args);
        let o = evocache(&full);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
            .lines()
            .nth(1)
            .unwrap()
            .split_once(',')
            .unwrap()
            .1
            .to_string()
    };
    assert_eq!(
        run(&["--trace", s(&path)]),
        run(&["--bundled", "s4_uniform"])
    );
    let o = evocache(&["gen", "--bundled", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    let o = evocache(&["gen", "--list"]);
    assert!(stdout(&o).contains("zipf_scan\t-"));
    assert!(stdout(&o).contains("loop_09\tloop"));
}
