use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn intlstm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intlstm")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = intlstm(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(args: &[&str]) -> i32 {
    intlstm(args).status.code().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Work {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    /// Generates, calibrates and quantizes one model.
    fn pipeline(&self, variant: &str, dims: &str) {
        ok(&[
            "gen",
            "--variant",
            variant,
            "--dims",
            dims,
            "--seed",
            "3",
            "--out",
            &self.p("m.json"),
            "--data-out",
            &self.p("d.json"),
            "--seq-len",
            "12",
            "--num-seq",
            "2",
        ]);
        ok(&[
            "calibrate",
            "--model",
            &self.p("m.json"),
            "--data",
            &self.p("d.json"),
            "--out",
            &self.p("s.json"),
        ]);
        ok(&[
            "quantize",
            "--model",
            &self.p("m.json"),
            "--stats",
            &self.p("s.json"),
            "--out",
            &self.p("q.json"),
        ]);
    }
}

#[test]
fn gen_is_deterministic() {
    let w = Work::new();
    for name in ["a", "b"] {
        ok(&[
            "gen",
            "--variant",
            "ln,proj",
            "--dims",
            "4,6,3",
            "--seed",
            "9",
            "--out",
            &w.p(&format!("{name}.json")),
            "--data-out",
            &w.p(&format!("{name}-d.json")),
        ]);
    }
    assert_eq!(fs::read(w.path("a.json")).unwrap(), fs::read(w.path("b.json")).unwrap());
    assert_eq!(
        fs::read(w.path("a-d.json")).unwrap(),
        fs::read(w.path("b-d.json")).unwrap()
    );
    ok(&[
        "gen",
        "--variant",
        "ln,proj",
        "--dims",
        "4,6,3",
        "--seed",
        "10",
        "--out",
        &w.p("c.json"),
    ]);
    assert_ne!(fs::read(w.path("a.json")).unwrap(), fs::read(w.path("c.json")).unwrap());
}

#[test]
fn gen_shapes_and_cifg() {
    let w = Work::new();
    ok(&[
        "gen",
        "--variant",
        "cifg,proj",
        "--dims",
        "16,32,16",
        "--out",
        &w.p("m.json"),
    ]);
    let m = read_json(&w.path("m.json"));
    let t = m["tensors"].as_object().unwrap();
    assert!(t.keys().all(|k| !k.ends_with("_i")));
    assert_eq!(t["W_f"]["shape"], serde_json::json!([32, 16]));
    assert_eq!(t["R_f"]["shape"], serde_json::json!([32, 16]));
    assert_eq!(t["W_proj"]["shape"], serde_json::json!([16, 32]));
}

#[test]
fn usage_errors_exit_1() {
    let w = Work::new();
    assert_eq!(
        code(&["calibrate", "--model", &w.p("m.json"), "--out", &w.p("s.json")]),
        1
    );
    assert_eq!(
        code(&[
            "gen",
            "--variant",
            "ln,bogus",
            "--dims",
            "1,2,2",
            "--out",
            &w.p("m.json")
        ]),
        1
    );
    assert_eq!(
        code(&["gen", "--variant", "none", "--dims", "1,2", "--out", &w.p("m.json")]),
        1
    );
    assert_eq!(
        code(&["gen", "--variant", "none", "--dims", "1,2,3", "--out", &w.p("m.json")]),
        1
    );
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn data_errors_exit_2() {
    let w = Work::new();
    assert_eq!(
        code(&[
            "run",
            "--model",
            &w.p("missing.json"),
            "--input",
            &w.p("d.json"),
            "--out",
            &w.p("r.json")
        ]),
        2
    );
    w.pipeline("none", "3,4,4");
    // a quantized model where a float one is required
    assert_eq!(
        code(&[
            "calibrate",
            "--model",
            &w.p("q.json"),
            "--data",
            &w.p("d.json"),
            "--out",
            &w.p("x.json")
        ]),
        2
    );
    fs::write(
        w.path("empty.json"),
        r#"{"format_version":1,"kind":"sequences","sequences":[]}"#,
    )
    .unwrap();
    let out = intlstm(&[
        "calibrate",
        "--model",
        &w.p("m.json"),
        "--data",
        &w.p("empty.json"),
        "--out",
        &w.p("x.json"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn calibrate_zero_data_gives_envelope() {
    let w = Work::new();
    ok(&[
        "gen",
        "--variant",
        "peephole",
        "--dims",
        "2,3,3",
        "--out",
        &w.p("m.json"),
    ]);
    fs::write(
        w.path("d.json"),
        r#"{"format_version":1,"kind":"sequences","sequences":[{"inputs":[[0.0,0.0],[0.0,0.0]]}]}"#,
    )
    .unwrap();
    ok(&[
        "calibrate",
        "--model",
        &w.p("m.json"),
        "--data",
        &w.p("d.json"),
        "--out",
        &w.p("s.json"),
    ]);
    let s = read_json(&w.path("s.json"));
    assert_eq!(s["kind"], "stats");
    assert_eq!(s["tensors"]["x"]["min"], 0.0);
    assert_eq!(s["tensors"]["x"]["max"], 0.0);
    assert_eq!(s["tensors"]["x"]["count"], 4);
}

#[test]
fn quantize_reports_missing_tensor() {
    let w = Work::new();
    w.pipeline("ln", "3,4,4");
    let mut s = read_json(&w.path("s.json"));
    s["tensors"].as_object_mut().unwrap().remove("g_o");
    fs::write(w.path("s2.json"), s.to_string()).unwrap();
    let out = intlstm(&[
        "quantize",
        "--model",
        &w.p("m.json"),
        "--stats",
        &w.p("s2.json"),
        "--out",
        &w.p("q2.json"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("g_o"));

    // stats for another variant
    ok(&[
        "gen",
        "--variant",
        "none",
        "--dims",
        "3,4,4",
        "--out",
        &w.p("plain.json"),
    ]);
    assert_eq!(
        code(&[
            "quantize",
            "--model",
            &w.p("plain.json"),
            "--stats",
            &w.p("s.json"),
            "--out",
            &w.p("q3.json")
        ]),
        2
    );
}

#[test]
fn quantized_file_round_trips_through_the_cli() {
    let w = Work::new();
    w.pipeline("ln,proj,peephole", "3,5,2");
    let q = read_json(&w.path("q.json"));
    assert_eq!(q["kind"], "quantized");
    // quantizing again from the same inputs is byte-identical
    ok(&[
        "quantize",
        "--model",
        &w.p("m.json"),
        "--stats",
        &w.p("s.json"),
        "--out",
        &w.p("q2.json"),
    ]);
    assert_eq!(
        fs::read(w.path("q.json")).unwrap(),
        fs::read(w.path("q2.json")).unwrap()
    );
}

#[test]
fn run_is_deterministic_and_dumps_state() {
    let w = Work::new();
    w.pipeline("peephole,cifg", "3,4,4");
    for (model, engine) in [("m.json", "float"), ("q.json", "integer")] {
        ok(&[
            "run",
            "--model",
            &w.p(model),
            "--input",
            &w.p("d.json"),
            "--out",
            &w.p("r1.json"),
            "--dump-state",
        ]);
        ok(&[
            "run",
            "--model",
            &w.p(model),
            "--input",
            &w.p("d.json"),
            "--out",
            &w.p("r2.json"),
            "--dump-state",
        ]);
        assert_eq!(
            fs::read(w.path("r1.json")).unwrap(),
            fs::read(w.path("r2.json")).unwrap()
        );
        let r = read_json(&w.path("r1.json"));
        assert_eq!(r["engine"], engine);
        assert_eq!(r["sequences"][0]["h"].as_array().unwrap().len(), 12);
        assert_eq!(r["sequences"][0]["c"][0].as_array().unwrap().len(), 4);
    }
}

#[test]
fn run_empty_and_mismatched_input() {
    let w = Work::new();
    w.pipeline("none", "3,4,4");
    fs::write(
        w.path("e.json"),
        r#"{"format_version":1,"kind":"sequences","sequences":[{"inputs":[]}]}"#,
    )
    .unwrap();
    ok(&[
        "run",
        "--model",
        &w.p("q.json"),
        "--input",
        &w.p("e.json"),
        "--out",
        &w.p("r.json"),
    ]);
    assert_eq!(read_json(&w.path("r.json"))["sequences"][0]["h"], serde_json::json!([]));
    fs::write(
        w.path("bad.json"),
        r#"{"format_version":1,"kind":"sequences","sequences":[{"inputs":[[1.0,2.0]]}]}"#,
    )
    .unwrap();
    assert_eq!(
        code(&[
            "run",
            "--model",
            &w.p("q.json"),
            "--input",
            &w.p("bad.json"),
            "--out",
            &w.p("r.json")
        ]),
        2
    );
}

#[test]
fn compare_writes_report() {
    let w = Work::new();
    w.pipeline("ln,peephole", "3,6,6");
    ok(&[
        "compare",
        "--float",
        &w.p("m.json"),
        "--quant",
        &w.p("q.json"),
        "--data",
        &w.p("d.json"),
        "--report",
        &w.p("c.json"),
    ]);
    let r = read_json(&w.path("c.json"));
    assert_eq!(r["kind"], "compare");
    assert_eq!(r["overall"]["elements"], 2 * 12 * 6);
    assert_eq!(r["sequences"][0]["trajectory"].as_array().unwrap().len(), 12);
    let ks: Vec<u64> = r["overall"]["within"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w["k"].as_u64().unwrap())
        .collect();
    assert_eq!(ks, [1, 3, 16]);

    // swapped roles and mismatched models are data errors
    assert_eq!(
        code(&[
            "compare",
            "--float",
            &w.p("q.json"),
            "--quant",
            &w.p("m.json"),
            "--data",
            &w.p("d.json"),
            "--report",
            &w.p("x.json")
        ]),
        2
    );
    ok(&[
        "gen",
        "--variant",
        "none",
        "--dims",
        "3,6,6",
        "--out",
        &w.p("other.json"),
    ]);
    assert_eq!(
        code(&[
            "compare",
            "--float",
            &w.p("other.json"),
            "--quant",
            &w.p("q.json"),
            "--data",
            &w.p("d.json"),
            "--report",
            &w.p("x.json")
        ]),
        2
    );
}

#[test]
fn bench_reports_engines() {
    let w = Work::new();
    w.pipeline("none", "3,4,4");
    ok(&[
        "bench",
        "--model",
        &w.p("m.json"),
        "--steps",
        "0",
        "--out",
        &w.p("b0.json"),
    ]);
    assert_eq!(read_json(&w.path("b0.json"))["engines"], serde_json::json!([]));

    ok(&[
        "bench",
        "--model",
        &w.p("m.json"),
        "--steps",
        "50",
        "--out",
        &w.p("b.json"),
    ]);
    let engines: Vec<String> = read_json(&w.path("b.json"))["engines"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["engine"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(engines, ["float", "integer"]);

    let out = intlstm(&["bench", "--model", &w.p("q.json"), "--steps", "50"]);
    assert!(out.status.success());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["engines"].as_array().unwrap().len(), 1);
    assert_eq!(r["engines"][0]["engine"], "integer");
    assert!(r["engines"][0]["steps_per_second"].as_f64().unwrap() > 0.0);
}
