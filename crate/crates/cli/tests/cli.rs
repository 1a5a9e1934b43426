use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const FAST: &[&str] = &[
    "--set",
    "n_trips=4",
    "--set",
    "world.n_days=2",
    "--set",
    "world.route_length_m=2500",
    "--set",
    "train.pretrain.epochs=10",
    "--set",
    "train.supervised.epochs=30",
];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_speedprof"));
    c.env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let mut full = vec!["--json"];
    full.extend_from_slice(args);
    let out = run(&full);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON object")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn with_fast<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(FAST);
    v
}

/// Synthetic world in `dir/w`; returns its config path.
fn world(dir: &Path) -> PathBuf {
    let out = dir.join("w");
    ok_json(&with_fast(&["synth-world", "--out", s(&out)]));
    out.join("config.json")
}

fn error_class(out: &Output) -> String {
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err
        .lines()
        .rev()
        .find(|l| l.starts_with("error["))
        .unwrap_or_else(|| panic!("no error line in {err}"));
    line["error[".len()..line.find(']').unwrap()].to_string()
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn pipeline_on_defaults_predicts_every_standard_point() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path().join("w");
    let synth = ok_json(&with_fast(&["synth-world", "--out", s(&w)]));
    let n_sp = synth["standard_points"].as_u64().unwrap() as usize;
    assert_eq!(n_sp, 26);
    let cfg = w.join("config.json");
    let ds = tmp.path().join("data/ds.csv");
    let model = tmp.path().join("model.json");
    let pred = tmp.path().join("pred.csv");

    let built = ok_json(&with_fast(&["build-dataset", "--config", s(&cfg), "--out", s(&ds)]));
    assert_eq!(built["trips"], 4);
    assert_eq!(built["rows"].as_u64().unwrap() as usize, 4 * n_sp);
    ok_json(&with_fast(&["train", "--config", s(&cfg), "--dataset", s(&ds), "--model-out", s(&model)]));
    let p = ok_json(&[
        "predict",
        "--config",
        s(&cfg),
        "--model",
        s(&model),
        "--trip-start",
        "2015-03-03T08:00:00Z",
        "--out",
        s(&pred),
    ]);
    assert_eq!(p["standard_points"].as_u64().unwrap() as usize, n_sp);

    let text = std::fs::read_to_string(&pred).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), n_sp);
    for (i, r) in rows.iter().enumerate() {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols[0].parse::<usize>().unwrap(), i);
        let v: f64 = cols[5].parse().unwrap();
        assert!(v.is_finite() && (0.0..60.0).contains(&v), "row {i}: {v}");
    }
}

#[test]
fn missing_input_exits_2_with_class() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "extract-tmc",
        "--route",
        s(&tmp.path().join("absent.csv")),
        "--sections",
        s(&tmp.path().join("absent2.csv")),
        "--archive",
        s(tmp.path()),
        "--out",
        s(&tmp.path().join("h.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_class(&out), "io.missing_input");
    assert!(out.stdout.is_empty());
    assert!(!tmp.path().join("h.csv").exists());

    let out = run(&["build-dataset", "--config", s(&tmp.path().join("nope.json")), "--out", s(&tmp.path().join("d.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_class(&out), "io.missing_input");

    // Defaults point at files relative to an empty directory.
    std::fs::write(tmp.path().join("empty.json"), "{}").unwrap();
    let out = run(&["build-dataset", "--config", s(&tmp.path().join("empty.json")), "--out", s(&tmp.path().join("d.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_class(&out), "io.missing_input");
    assert!(!tmp.path().join("d.csv").exists());
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("o");
    for set in ["no_such_key=1", "features.history_r=0", "grid.tmc_k=[0]", "train.supervised.batch_size=0", "world.typo=3", "seed"] {
        let out = run(&["synth-world", "--out", s(&out_dir), "--set", set]);
        assert_eq!(out.status.code(), Some(2), "{set}");
        assert_eq!(error_class(&out), "config.invalid", "{set}");
    }
    assert!(!out_dir.exists());

    std::fs::write(tmp.path().join("bad.json"), "{ not json").unwrap();
    let out = run(&["synth-world", "--config", s(&tmp.path().join("bad.json")), "--out", s(&out_dir)]);
    assert_eq!(error_class(&out), "config.invalid");

    let out = run(&["predict", "--model", "m.json", "--trip-start", "yesterday", "--out", "p.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_class(&out), "usage.invalid");

    let out = run(&["sweep", "--out", s(&out_dir), "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_class(&out), "usage.invalid");
}

#[test]
fn runtime_failure_exits_1_and_leaves_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let ds = tmp.path().join("ds.csv");
    ok_json(&with_fast(&["build-dataset", "--config", s(&cfg), "--out", s(&ds)]));
    let model = tmp.path().join("model.json");
    let out = run(&[
        "train",
        "--config",
        s(&cfg),
        "--dataset",
        s(&ds),
        "--model-out",
        s(&model),
        "--set",
        "train.supervised.learning_rate=1e300",
        "--set",
        "train.supervised.epochs=3",
        "--set",
        "train.pretrain.learning_rate=1e300",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_class(&out), "nn.non_finite_loss");
    assert!(!model.exists());
}

#[test]
fn one_config_sweep_reports_learned_plus_three_baselines() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let rep = tmp.path().join("rep");
    let sw = ok_json(&with_fast(&["sweep", "--config", s(&cfg), "--out", s(&rep), "--workers", "2"]));
    assert_eq!(sw["summary_rows"], 4);
    assert_eq!(sw["best_config"], "cfg0000");

    let summary = std::fs::read_to_string(rep.join("summary.csv")).unwrap();
    let ids: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(ids.len(), 4);
    assert!(ids.contains(&"cfg0000"));
    for b in ["baseline_tmc_direct", "baseline_average_speed", "baseline_posted_speed"] {
        assert!(ids.contains(&b), "{ids:?}");
    }
    assert!(rep.join("report.csv").exists() && rep.join("profiles.csv").exists() && rep.join("config.json").exists());

    let r = ok_json(&["report", "--in", s(&rep), "--plots"]);
    assert_eq!(r["rows"], 4);
    assert_eq!(r["plots"].as_array().unwrap().len(), 4);
    let table = std::fs::read_to_string(rep.join("summary.md")).unwrap();
    assert_eq!(table.lines().count(), 2 + 4);
    let svg = std::fs::read_to_string(rep.join("plots/trip_000.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 5);
}

#[test]
fn subcommands_are_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        ok_json(&with_fast(&["synth-world", "--out", s(d)]));
    }
    assert_eq!(files_under(&a), files_under(&b));

    let cfg = a.join("config.json");
    let run_chain = |tag: &str, workers: &str| -> Vec<Vec<u8>> {
        let ds = tmp.path().join(format!("ds_{tag}.csv"));
        let model = tmp.path().join(format!("model_{tag}.json"));
        let pred = tmp.path().join(format!("pred_{tag}.csv"));
        let rep = tmp.path().join(format!("rep_{tag}"));
        let hist = tmp.path().join(format!("hist_{tag}.csv"));
        ok_json(&with_fast(&["build-dataset", "--config", s(&cfg), "--out", s(&ds)]));
        ok_json(&with_fast(&["train", "--config", s(&cfg), "--dataset", s(&ds), "--model-out", s(&model)]));
        ok_json(&["predict", "--config", s(&cfg), "--model", s(&model), "--trip-start", "1425373200", "--out", s(&pred)]);
        ok_json(&with_fast(&["sweep", "--config", s(&cfg), "--out", s(&rep), "--workers", workers]));
        ok_json(&["report", "--in", s(&rep), "--plots"]);
        ok_json(&[
            "extract-tmc",
            "--route",
            s(&a.join("route.csv")),
            "--sections",
            s(&a.join("sections.csv")),
            "--archive",
            s(&a.join("tmc")),
            "--out",
            s(&hist),
        ]);
        let mut bytes: Vec<Vec<u8>> = [&ds, &model, &pred, &hist].iter().map(|p| std::fs::read(p).unwrap()).collect();
        bytes.extend(files_under(&rep).into_iter().map(|(_, b)| b));
        bytes
    };
    assert_eq!(run_chain("x", "1"), run_chain("y", "3"));
}

#[test]
fn help_documents_every_flag() {
    let expect: &[(&str, &[&str])] = &[
        ("synth-world", &["--config", "--set", "--out", "--json", "--log-level"]),
        ("extract-tmc", &["--route", "--sections", "--archive", "--out", "--mapping-out", "--spacing-m", "--threshold-m"]),
        ("build-dataset", &["--config", "--set", "--out"]),
        ("train", &["--config", "--set", "--dataset", "--model-out"]),
        ("predict", &["--config", "--set", "--model", "--trip-start", "--start-speed", "--out"]),
        ("sweep", &["--config", "--set", "--out", "--workers"]),
        ("report", &["--in", "--plots"]),
    ];
    for (cmd, flags) in expect {
        let out = run(&[cmd, "--help"]);
        assert!(out.status.success(), "{cmd}");
        let text = String::from_utf8_lossy(&out.stdout);
        for f in *flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}
