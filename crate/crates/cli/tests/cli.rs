use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mixseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixseg")).args(args).output().expect("spawn mixseg")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gen_small(dir: &Path, seed: &str) -> Output {
    let o = mixseg(&["gen-data", "--out", dir.to_str().unwrap(), "--seed", seed, "--size", "32x32", "--counts", "3,4,4,3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    o
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, "iterations = 3\nbatch_size = 2\nseed = 5\n").unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gen_data_defaults_and_checksum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("corpus");
    let o = mixseg(&["gen-data", "--out", out.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let checksum = stdout(&o).trim().to_string();
    assert_eq!(checksum.len(), 64);

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let samples = manifest["samples"].as_array().unwrap();
    let count = |split: &str, prefix: &str| {
        samples
            .iter()
            .filter(|s| s["split"] == split && s["id"].as_str().unwrap().starts_with(prefix))
            .count()
    };
    assert_eq!(samples.len(), 560);
    assert_eq!(count("test", ""), 100);
    assert_eq!(count("train", "pixel"), 60);
    assert_eq!(count("train", "box"), 200);
    assert_eq!(count("train", "scribble"), 200);
}

#[test]
fn gen_data_same_seed_same_checksum() {
    let tmp = tempfile::tempdir().unwrap();
    let a = gen_small(&tmp.path().join("a"), "9");
    let b = gen_small(&tmp.path().join("b"), "9");
    let c = gen_small(&tmp.path().join("c"), "10");
    assert_eq!(stdout(&a), stdout(&b));
    assert_ne!(stdout(&a), stdout(&c));
}

#[test]
fn gen_data_rejects_missing_pixel_stream() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("corpus");
    let o = mixseg(&["gen-data", "--out", out.to_str().unwrap(), "--counts", "0,10,10,5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let o = mixseg(&["gen-data", "--out", out.to_str().unwrap(), "--size", "32"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = mixseg(&["gradcheck", "--sed", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_missing_corpus_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("no-such-corpus");
    let o = mixseg(&["train", "--data", missing.to_str().unwrap(), "--out", tmp.path().join("run").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(missing.to_str().unwrap()), "{}", stderr(&o));
}

#[test]
fn train_rejects_unknown_config_key() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("corpus");
    gen_small(&data, "1");
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "learning_rate = 0.01\nwarmup = 5\n").unwrap();
    let out = tmp.path().join("run");
    let o = mixseg(&["train", "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("warmup"));
    assert!(!out.exists());
}

#[test]
fn train_is_deterministic_and_toggles_zero_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("corpus");
    gen_small(&data, "2");
    let cfg = write_config(tmp.path());
    let run = |name: &str, extra: &[&str]| {
        let out = tmp.path().join(name);
        let mut args = vec!["train", "--data", data.to_str().unwrap(), "--config", &cfg, "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = mixseg(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        out
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    let losses = |dir: &Path| fs::read(dir.join("losses.csv")).unwrap();
    assert_eq!(losses(&a), losses(&b));
    assert!(a.join("eval.csv").is_file());
    assert!(a.join("checkpoint").join("index.json").is_file());

    let off = run("off", &["--toggle-sp", "off", "--toggle-bme", "off", "--toggle-lr", "off"]);
    let text = String::from_utf8(losses(&off)).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        for name in ["l_sp", "l_scribble", "l_lr"] {
            assert_eq!(r[col(name)], 0.0);
        }
        assert_eq!(r[col("l_total")], r[col("l_pixel")]);
    }
}

#[test]
fn eval_and_export_viz_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("corpus");
    gen_small(&data, "4");
    let cfg = write_config(tmp.path());
    let run = tmp.path().join("run");
    let o = mixseg(&["train", "--data", data.to_str().unwrap(), "--config", &cfg, "--out", run.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ck = run.join("checkpoint");

    let o = mixseg(&["eval", "--checkpoint", ck.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("wavg"));

    let viz = tmp.path().join("viz");
    let o = mixseg(&["export-viz", "--checkpoint", ck.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", viz.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ppms: Vec<_> = fs::read_dir(&viz)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "ppm"))
        .collect();
    assert_eq!(ppms.len(), 3);
    let first = fs::read(ppms[0].path()).unwrap();
    assert!(first.starts_with(b"P6\n96 32\n255\n"));
    let csv = fs::read_to_string(viz.join("dice.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    // Same per-image values as the library's evaluate.
    let corpus = mixseg::data::read_corpus(&data).unwrap();
    let loaded = mixseg::checkpoint::Checkpoint::load(&ck).unwrap();
    let report = mixseg::eval::evaluate(&loaded.encoder, &loaded.params, &mixseg::trainer::test_sets(&corpus)).unwrap();
    for (line, m) in csv.lines().skip(1).zip(&report.images) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], m.id);
        assert!((f[1].parse::<f64>().unwrap() - m.dice).abs() <= 1e-9);
    }
}

#[test]
fn export_viz_rejects_mismatched_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let small = tmp.path().join("small");
    gen_small(&small, "1");
    let cfg = write_config(tmp.path());
    let run = tmp.path().join("run");
    let o = mixseg(&["train", "--data", small.to_str().unwrap(), "--config", &cfg, "--out", run.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let other = tmp.path().join("other");
    let o = mixseg(&["gen-data", "--out", other.to_str().unwrap(), "--size", "64x32", "--counts", "2,2,2,2"]);
    assert_eq!(o.status.code(), Some(0));
    let viz = tmp.path().join("viz");
    let o = mixseg(&[
        "export-viz",
        "--checkpoint",
        run.join("checkpoint").to_str().unwrap(),
        "--data",
        other.to_str().unwrap(),
        "--out",
        viz.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hash"), "{}", stderr(&o));
    assert!(!viz.exists());
}

#[test]
fn gradcheck_passes_and_reports_every_op() {
    let o = mixseg(&["gradcheck", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for name in mixseg::gradsuite::op_names() {
        assert!(out.lines().any(|l| l.split_whitespace().next() == Some(name)), "missing row {name}");
    }
}

#[test]
fn gradcheck_corrupted_op_fails_by_name() {
    let o = mixseg(&["gradcheck", "--corrupt-op", "loss_bme"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("loss_bme"), "{}", stderr(&o));
    let o = mixseg(&["gradcheck", "--corrupt-op", "no_such_op"]);
    assert_eq!(o.status.code(), Some(2));
}
