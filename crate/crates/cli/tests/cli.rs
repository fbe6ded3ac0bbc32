use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dntdf::harness::data::load_images;
use dntdf::harness::model_io::load_model;
use dntdf::harness::pnm;

fn dntdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dntdf"))
        .args(args)
        .env("DNTDF_THREADS", "2")
        .output()
        .expect("spawn dntdf")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (
                path.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&path).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_is_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    for d in [&a, &b] {
        let o = dntdf(&["synth", "--n", "10", "--size", "64", "--seed", "7", "--out", p(d)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for sub in ["images", "masks"] {
        let (x, y) = (dir_bytes(&a.join(sub)), dir_bytes(&b.join(sub)));
        assert_eq!(x.len(), 10);
        assert_eq!(x, y);
    }
}

#[test]
fn count_prints_cost_table() {
    let o = dntdf(&["count", "--backbone", "resnet50", "--r", "4", "--input", "288"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for needle in ["decoder-total", "total", "dec-params", "dec-macs", "   4 "] {
        assert!(text.contains(needle), "missing {needle:?} in\n{text}");
    }
    let o = dntdf(&[
        "count",
        "--backbone",
        "tiny",
        "--table",
        "2,4",
        "--input",
        "64",
        "--csv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn count_writes_layer_csv() {
    let t = tempfile::tempdir().unwrap();
    let csv = t.path().join("layers.csv");
    let o = dntdf(&[
        "count",
        "--backbone",
        "efficientnet-b0",
        "--r",
        "8",
        "--input",
        "224",
        "--layers",
        p(&csv),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("node,name,component,params,macs\n"));
    assert!(text.lines().count() > 50);
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["count", "--bogus"][..],
        &["frobnicate"][..],
        &["synth", "--n", "many", "--out", "x"][..],
        &["eval", "--masks", "m", "--report", "r"][..],
    ] {
        let o = dntdf(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).starts_with("error:"), "{args:?}: {}", stderr(&o));
    }
    let o = dntdf(&["count", "--bogus"]);
    assert!(stderr(&o).contains("Usage: dntdf count"), "{}", stderr(&o));
}

#[test]
fn runtime_errors_exit_1() {
    let t = tempfile::tempdir().unwrap();
    let missing = t.path().join("none.json");
    let o = dntdf(&[
        "predict",
        "--model",
        p(&missing),
        "--images",
        p(t.path()),
        "--out",
        p(t.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
    let o = dntdf(&["count", "--backbone", "resnet50", "--r", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let cfg = t.path().join("bad.cfg");
    fs::write(&cfg, "epochs = 2\nlearning_rate = 3\n").unwrap();
    let o = dntdf(&["train", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn eval_of_masks_against_themselves_is_perfect() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    assert!(
        dntdf(&["synth", "--n", "5", "--size", "64", "--seed", "3", "--out", p(&data)])
            .status
            .success()
    );
    let report = t.path().join("out").join("report.txt");
    let pr = t.path().join("out").join("pr.csv");
    let masks = data.join("masks");
    let o = dntdf(&[
        "eval",
        "--predictions",
        p(&masks),
        "--masks",
        p(&masks),
        "--report",
        p(&report),
        "--pr",
        p(&pr),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("f_max: 1.000"), "{text}");
    assert!(text.contains("mae: 0.000"), "{text}");
    assert!(text.contains("s_measure: 1.000"), "{text}");
    assert_eq!(fs::read_to_string(&pr).unwrap().lines().count(), 257);
}

#[test]
fn train_predict_eval_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    assert!(
        dntdf(&["synth", "--n", "4", "--size", "64", "--seed", "5", "--out", p(&data)])
            .status
            .success()
    );
    let cfg = t.path().join("run.cfg");
    fs::write(
        &cfg,
        "# tiny smoke run\nwidths = [4, 8, 8, 16, 16]\nepochs = 2\nlr = 1e-3\n\
         train_images = \"data/images\"\ntrain_masks = \"data/masks\"\n\
         model_out = \"model/m.json\"\nlog = \"train.log\"\n",
    )
    .unwrap();
    let o = dntdf(&["train", "--config", p(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("epoch=2"));
    assert_eq!(
        fs::read_to_string(t.path().join("train.log")).unwrap().lines().count(),
        2
    );

    let model_path = t.path().join("model").join("m.json");
    let maps = t.path().join("maps");
    let o = dntdf(&[
        "predict",
        "--model",
        p(&model_path),
        "--images",
        p(&data.join("images")),
        "--out",
        p(&maps),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    // written maps equal round(255 P) of an in-process prediction
    let model = load_model(&model_path).unwrap();
    for (id, image) in load_images(&data.join("images")).unwrap() {
        let expected = model.predict(&image).unwrap();
        let got = pnm::read(&maps.join(format!("{id}.pgm"))).unwrap();
        assert_eq!((got.width, got.height), (64, 64));
        for (&g, &e) in got.data.iter().zip(expected.data()) {
            assert_eq!(g as f32, (255.0 * e).round());
        }
    }

    let report = t.path().join("report.txt");
    let o = dntdf(&[
        "eval",
        "--model",
        p(&model_path),
        "--images",
        p(&data.join("images")),
        "--masks",
        p(&data.join("masks")),
        "--report",
        p(&report),
        "--mode",
        "pooled",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("images: 4") && text.contains("f_mode: pooled"), "{text}");
}
