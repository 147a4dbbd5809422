use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jeanie_core::fewshot::{synth_corpus, SynthParams};
use jeanie_core::skeleton::{load_sequences, to_json_line, SkeletonSequence};
use serde_json::Value;
use tempfile::TempDir;

fn jeanie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jeanie"))
        .args(args)
        .env("JEANIE_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn corpus_text(seqs: &[SkeletonSequence]) -> String {
    seqs.iter().map(|s| to_json_line(s, None) + "\n").collect()
}

fn sample_sequences(n: usize) -> Vec<SkeletonSequence> {
    synth_corpus(&SynthParams {
        n_classes: n,
        per_class: 1,
        joints: 5,
        frames: 16,
        seed: 3,
        ..SynthParams::default()
    })
    .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_single_cell_reproduces_input() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "in.jsonl", &corpus_text(&sample_sequences(2)));
    let cfg = write(dir.path(), "c.toml", "eta_az = 0\neta_alt = 0\n");
    let out = dir.path().join("views");
    let r = jeanie(&[
        "--config",
        s(&cfg),
        "--output",
        s(&out),
        "simulate-views",
        s(&input),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let files: Vec<_> = std::fs::read_dir(&out).unwrap().collect();
    assert_eq!(files.len(), 1);
    let written = load_sequences(&out.join("view_0_0.jsonl")).unwrap();
    assert_eq!(written, load_sequences(&input).unwrap());
    let first_line = std::fs::read_to_string(out.join("view_0_0.jsonl")).unwrap();
    let doc: Value = serde_json::from_str(first_line.lines().next().unwrap()).unwrap();
    assert_eq!(doc["view"]["mode"], "euler");
    assert_eq!(doc["view"]["azimuth"], 0.0);
}

#[test]
fn simulate_default_grid_writes_49_views() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "in.jsonl", &corpus_text(&sample_sequences(1)));
    let out = dir.path().join("views");
    let r = jeanie(&["--output", s(&out), "simulate-views", s(&input)]);
    assert!(r.status.success());
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 49);
    let corner = std::fs::read_to_string(out.join("view_0_6.jsonl")).unwrap();
    let doc: Value = serde_json::from_str(corner.trim()).unwrap();
    assert_eq!(doc["view"]["azimuth"], -45.0);
    assert_eq!(doc["view"]["altitude"], 45.0);
}

#[test]
fn simulate_reports_malformed_line() {
    let dir = TempDir::new().unwrap();
    let mut text = corpus_text(&sample_sequences(2));
    text.push_str("{\"joints\": 5, \"frames\": [[[0,0\n");
    let input = write(dir.path(), "bad.jsonl", &text);
    let r = jeanie(&[
        "--output",
        s(&dir.path().join("v")),
        "simulate-views",
        s(&input),
    ]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn align_identical_is_near_zero_on_center_diagonal() {
    let dir = TempDir::new().unwrap();
    let seq = &sample_sequences(1)[0];
    let f = write(dir.path(), "q.json", &to_json_line(seq, None));
    let doc = stdout_json(&jeanie(&["--method", "jeanie", "align", s(&f), s(&f)]));
    let shape: Vec<usize> = serde_json::from_value(doc["shape"].clone()).unwrap();
    let (k, kp, tau, tau_p) = (shape[0], shape[1], shape[2], shape[3]);
    let gamma = doc["gamma"].as_f64().unwrap();
    let slack = gamma * ((k * kp) as f64 * 3f64.powi(tau.max(tau_p) as i32)).ln();
    let d = doc["distance"].as_f64().unwrap();
    assert!(d <= slack, "{d} > {slack}");
    let path: Vec<[usize; 4]> = serde_json::from_value(doc["path"].clone()).unwrap();
    let expected: Vec<[usize; 4]> = (0..tau).map(|t| [k / 2, kp / 2, t, t]).collect();
    assert_eq!(path, expected);
    assert_eq!(doc["per_view"].as_array().unwrap().len(), k);
}

#[test]
fn align_softdtw_equals_jeanie_on_single_view() {
    let dir = TempDir::new().unwrap();
    let seqs = sample_sequences(2);
    let q = write(dir.path(), "q.json", &to_json_line(&seqs[0], None));
    let p = write(dir.path(), "p.json", &to_json_line(&seqs[1], None));
    let cfg = write(
        dir.path(),
        "c.toml",
        "eta_az = 0\neta_alt = 0\ngamma = 0.1\n",
    );
    let a = stdout_json(&jeanie(&[
        "--config",
        s(&cfg),
        "--method",
        "softdtw",
        "align",
        s(&q),
        s(&p),
    ]));
    let b = stdout_json(&jeanie(&[
        "--config",
        s(&cfg),
        "--method",
        "jeanie",
        "align",
        s(&q),
        s(&p),
    ]));
    assert_eq!(a["distance"], b["distance"]);
    assert!(a["distance"].as_f64().unwrap() > 0.0);
}

#[test]
fn align_missing_file_fails() {
    let dir = TempDir::new().unwrap();
    let q = write(
        dir.path(),
        "q.json",
        &to_json_line(&sample_sequences(1)[0], None),
    );
    let r = jeanie(&["align", s(&q), s(&dir.path().join("missing.json"))]);
    assert_eq!(r.status.code(), Some(2));
    assert!(r.stdout.is_empty());
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing.json"));
}

#[test]
fn config_errors_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let q = write(
        dir.path(),
        "q.json",
        &to_json_line(&sample_sequences(1)[0], None),
    );
    let bad_value = write(dir.path(), "a.toml", "gamma = -1.0\n");
    let unknown = write(dir.path(), "b.toml", "gama = 1.0\n");
    let unparsable = write(dir.path(), "c.toml", "gamma = \n");
    for (cfg, code) in [(&bad_value, 1), (&unknown, 1), (&unparsable, 2)] {
        let r = jeanie(&["--config", s(cfg), "align", s(&q), s(&q)]);
        assert_eq!(
            r.status.code(),
            Some(code),
            "{}",
            String::from_utf8_lossy(&r.stderr)
        );
    }
}

#[test]
fn config_hash_ignores_key_order() {
    let dir = TempDir::new().unwrap();
    let q = write(
        dir.path(),
        "q.json",
        &to_json_line(&sample_sequences(1)[0], None),
    );
    let a = write(dir.path(), "a.toml", "iota = 1\ngamma = 0.01\neta_az = 1\n");
    let b = write(
        dir.path(),
        "b.toml",
        "eta_az=1\n\n  gamma = 0.01   # temperature\niota=1\n",
    );
    let ra = stdout_json(&jeanie(&["--config", s(&a), "align", s(&q), s(&q)]));
    let rb = stdout_json(&jeanie(&["--config", s(&b), "align", s(&q), s(&q)]));
    assert_eq!(ra["config_hash"], rb["config_hash"]);
    assert_eq!(ra, rb);
}

const SMALL: &str = "episodes = 100\nn_way = 3\n\
    [synth]\nclasses = 4\nper_class = 3\njoints = 6\nframes = 16\n";

#[test]
fn episode_separable_classes_are_perfect() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("{SMALL}view_noise_deg = 0.0\ncoord_noise = 0.0\n"),
    );
    let doc = stdout_json(&jeanie(&["--config", s(&cfg), "episode", "--synthetic"]));
    for rec in doc["records"].as_array().unwrap() {
        assert_eq!(rec["accuracy"].as_f64().unwrap(), 1.0, "{}", rec["method"]);
        assert_eq!(rec["episodes"], 100);
        assert_eq!(rec["per_episode"].as_array().unwrap().len(), 100);
    }
}

#[test]
fn episode_reads_corpus_file() {
    let dir = TempDir::new().unwrap();
    let seqs = synth_corpus(&SynthParams {
        n_classes: 3,
        per_class: 2,
        joints: 5,
        frames: 12,
        ..SynthParams::default()
    })
    .unwrap();
    let corpus = write(dir.path(), "corpus.jsonl", &corpus_text(&seqs));
    let cfg = write(dir.path(), "c.toml", "episodes = 5\nn_way = 2\n");
    let doc = stdout_json(&jeanie(&[
        "--config",
        s(&cfg),
        "--method",
        "fvm",
        "episode",
        s(&corpus),
    ]));
    let recs = doc["records"].as_array().unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["method"], "fvm");

    let too_many = write(dir.path(), "d.toml", "episodes = 5\nn_way = 4\n");
    let r = jeanie(&["--config", s(&too_many), "episode", s(&corpus)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("classes"));
}

fn strip_timing(mut doc: Value) -> Value {
    for rec in doc["records"].as_array_mut().unwrap() {
        rec.as_object_mut().unwrap().remove("wall_time_s");
    }
    doc
}

#[test]
fn episode_is_reproducible_under_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let run = |csv: &Path, jobs: &str| {
        let out = jeanie(&[
            "--config",
            s(&cfg),
            "--seed",
            "11",
            "--jobs",
            jobs,
            "episode",
            "--synthetic",
            "--csv",
            s(csv),
        ]);
        (
            strip_timing(stdout_json(&out)),
            std::fs::read_to_string(csv).unwrap(),
        )
    };
    let (j1, c1) = run(&dir.path().join("a.csv"), "1");
    let (j2, c2) = run(&dir.path().join("b.csv"), "4");
    assert_eq!(j1, j2);
    assert_eq!(c1, c2);
    assert_eq!(j1["seed"], 11);

    let mut reader = csv::Reader::from_reader(c1.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header[..3], ["run_id", "method", "episodes"]);
    let rows: Vec<_> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let (_, c3) = {
        let out = jeanie(&[
            "--config",
            s(&cfg),
            "--seed",
            "12",
            "episode",
            "--synthetic",
            "--csv",
            s(&dir.path().join("c.csv")),
        ]);
        assert!(out.status.success());
        (
            (),
            std::fs::read_to_string(dir.path().join("c.csv")).unwrap(),
        )
    };
    assert_ne!(c1, c3);
}

#[test]
fn episode_jeanie_beats_softdtw_under_view_noise() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", "episodes = 150\n");
    let doc = stdout_json(&jeanie(&[
        "--config",
        s(&cfg),
        "episode",
        "--synthetic",
        "--methods",
        "softdtw,jeanie",
    ]));
    let acc = |i: usize| doc["records"][i]["accuracy"].as_f64().unwrap();
    assert_eq!(doc["records"][0]["method"], "softdtw");
    assert!(acc(1) > acc(0), "jeanie {} vs softdtw {}", acc(1), acc(0));
}

#[test]
fn oracle_default_passes() {
    let r = jeanie(&["oracle", "--trials", "60"]);
    assert!(r.status.success());
    let text = String::from_utf8_lossy(&r.stdout);
    for name in [
        "oracle",
        "reduction",
        "gradient",
        "ordering",
        "monotonicity",
    ] {
        let line = text.lines().find(|l| l.starts_with(name)).unwrap();
        assert!(line.contains("PASS"), "{line}");
    }
    let oracle_line = text.lines().find(|l| l.starts_with("oracle")).unwrap();
    let max: f64 = oracle_line
        .split_whitespace()
        .find_map(|w| w.strip_prefix("max_error="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(max <= 1e-9);
}

#[test]
fn oracle_small_gamma_engages_ordering() {
    let r = jeanie(&["oracle", "--trials", "30", "--gamma", "1e-6"]);
    assert!(r.status.success());
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text
        .lines()
        .any(|l| l.starts_with("ordering") && l.contains("PASS runs=30")));
    assert!(text
        .lines()
        .any(|l| l.starts_with("gradient") && l.contains("skipped")));

    let r = jeanie(&["oracle", "--trials", "30", "--gamma", "0.5"]);
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text
        .lines()
        .any(|l| l.starts_with("ordering") && l.contains("skipped")));
}

#[test]
fn oracle_zero_trials_warns() {
    let r = jeanie(&["oracle", "--trials", "0"]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).contains("warning"));
}

fn bench_rows(args: &[&str]) -> Vec<(String, [usize; 5], f64)> {
    let r = jeanie(args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let mut reader = csv::Reader::from_reader(r.stdout.as_slice());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["method", "K", "K'", "tau", "tau_p", "iota", "mean_us", "p95_us"]
    );
    reader
        .records()
        .map(|rec| {
            let rec = rec.unwrap();
            let n = |i: usize| rec[i].parse::<usize>().unwrap();
            (
                rec[0].to_string(),
                [n(1), n(2), n(3), n(4), n(5)],
                rec[6].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn bench_csv_shape() {
    let rows = bench_rows(&[
        "bench", "--reps", "2", "--size", "2,1,3,3", "--size", "1,1,4,2",
    ]);
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0].1, [2, 1, 3, 3, 2]);
    assert!(rows.iter().all(|r| r.2 >= 0.0));
}

#[test]
fn bench_complexity_trends() {
    // single view: jeanie runs the same recursion as soft-DTW
    let rows = bench_rows(&[
        "--jobs",
        "1",
        "bench",
        "--reps",
        "200",
        "--size",
        "1,1,64,64",
    ]);
    let t = |m: &str| rows.iter().find(|r| r.0 == m).unwrap().2;
    assert!(
        t("jeanie") <= 2.0 * t("softdtw"),
        "jeanie {} softdtw {}",
        t("jeanie"),
        t("softdtw")
    );

    let rows = bench_rows(&[
        "--jobs",
        "1",
        "--method",
        "jeanie",
        "bench",
        "--reps",
        "20",
        "--size",
        "3,3,24,24",
        "--size",
        "3,3,48,24",
    ]);
    let ratio = rows[1].2 / rows[0].2;
    assert!(
        (1.4..=3.0).contains(&ratio),
        "doubling tau scaled time by {ratio}"
    );
}
