use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use esr_core::bench::read_registry;
use esr_core::imageio::{load_image, load_weights, save_pnm, Image};
use serde_json::Value;

fn esr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_esr"))
        .args(args)
        .env("ESR_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = esr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

fn fails(args: &[&str], code: i32) -> String {
    let out = esr(args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pattern(w: usize, h: usize, channels: usize, seed: usize) -> Image {
    let data = (0..w * h * channels)
        .map(|i| {
            let (p, c) = (i / channels, i % channels);
            let (y, x) = (p / w, p % w);
            (((x / 5 + y / 7 + seed) % 3) * 90 + c * 20) as f32
        })
        .collect();
    Image::new(w, h, channels, data).unwrap()
}

fn dataset(root: &Path, name: &str, n: usize, side: usize) -> PathBuf {
    let dir = root.join(name);
    std::fs::create_dir_all(&dir).unwrap();
    for i in 0..n {
        save_pnm(&dir.join(format!("{i}.pgm")), &pattern(side, side, 1, i)).unwrap();
    }
    dir
}

#[test]
fn bicubic_upscale_doubles_size_and_keeps_dc() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in.pgm");
    let output = tmp.path().join("out.pgm");
    save_pnm(&input, &Image::new(10, 10, 1, vec![128.0; 100]).unwrap()).unwrap();
    let summary = ok(&["upscale", "--model", "Bicubic_s2", "--input", s(&input), "--output", s(&output)]);
    assert_eq!((summary["width"].as_u64(), summary["height"].as_u64()), (Some(20), Some(20)));
    let img = load_image(&output).unwrap();
    assert_eq!((img.width, img.height, img.channels), (20, 20, 1));
    assert!(img.data.iter().all(|&v| (v - 128.0).abs() <= 1.0));
}

#[test]
fn colour_upscale_keeps_grey_grey() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in.ppm");
    let output = tmp.path().join("out.ppm");
    let grey = pattern(12, 9, 1, 0);
    let rgb: Vec<f32> = grey.data.iter().flat_map(|&v| [v; 3]).collect();
    save_pnm(&input, &Image::new(12, 9, 3, rgb).unwrap()).unwrap();
    ok(&["--quiet", "upscale", "--model", "Bicubic_s3", "--input", s(&input), "--output", s(&output)]);
    let img = load_image(&output).unwrap();
    assert_eq!((img.width, img.height, img.channels), (36, 27, 3));
    for px in img.data.chunks(3) {
        assert!((px[0] - px[1]).abs() <= 1.0 && (px[1] - px[2]).abs() <= 1.0, "{px:?}");
    }
}

#[test]
fn missing_weights_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in.pgm");
    save_pnm(&input, &pattern(8, 8, 1, 0)).unwrap();
    let missing = tmp.path().join("nope.esrw");
    let err = fails(
        &["upscale", "--weights", s(&missing), "--input", s(&input), "--output", s(&tmp.path().join("o.pgm"))],
        3,
    );
    assert!(err.contains("weights: not found"), "{err}");
}

#[test]
fn train_is_reproducible_and_loadable() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), "train", 3, 40);
    let a = tmp.path().join("a.esrw");
    let b = tmp.path().join("b.esrw");
    for out in [&a, &b] {
        let summary = ok(&[
            "--quiet", "train", "--arch", "eSR-TM_s2_K3_C2", "--data", s(&data), "--epochs", "5", "--seed", "4",
            "--patch", "24", "--minibatch", "2", "--out", s(out),
        ]);
        assert_eq!(summary["model"], "eSR-TM_s2_K3_C2");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let (spec, bank) = load_weights(&a).unwrap();
    assert_eq!(spec.to_string(), "eSR-TM_s2_K3_C2");
    assert!(bank.all_finite());
    let history = std::fs::read_to_string(tmp.path().join("a.loss.csv")).unwrap();
    assert_eq!(history.lines().count(), 6);

    let input = tmp.path().join("in.pgm");
    save_pnm(&input, &pattern(9, 7, 1, 1)).unwrap();
    let out = tmp.path().join("up.pgm");
    ok(&["upscale", "--weights", s(&a), "--input", s(&input), "--output", s(&out)]);
    assert_eq!(load_image(&out).unwrap().width, 18);
}

#[test]
fn train_rejects_incomplete_names_and_empty_data() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m.esrw");
    let err = fails(&["train", "--arch", "eSR-TM_s2_K3", "--data", s(tmp.path()), "--out", s(&out)], 2);
    assert!(err.contains("eSR-TM_s2_K3"), "{err}");
    fails(&["train", "--arch", "eSR-TM_s2_K3_C2", "--data", s(tmp.path()), "--out", s(&out)], 3);
    fails(&["train", "--arch", "Bicubic_s2", "--data", s(tmp.path()), "--out", s(&out)], 2);
}

#[test]
fn eval_writes_registry_keys_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path(), "Mini", 2, 32);
    let reg = tmp.path().join("registry.json");
    let first = ok(&["eval", "--model", "Bicubic_s2", "--data", s(&data), "--scale", "2", "--json", s(&reg)]);
    let text = std::fs::read_to_string(&reg).unwrap();
    let record = &read_registry(text.as_bytes()).unwrap()["Bicubic_s2"];
    assert_eq!(record.parameters, Some(100));
    assert_eq!(record.psnr["Mini"], first["psnr"].as_f64().unwrap());
    let raw: Value = serde_json::from_str(&text).unwrap();
    assert!(raw["Bicubic_s2"]["psnr_Mini"].is_number());
    assert!(raw["Bicubic_s2"]["ssim_Mini"].is_number());

    ok(&["eval", "--model", "Bicubic_s2", "--data", s(&data), "--json", s(&reg)]);
    assert_eq!(std::fs::read_to_string(&reg).unwrap(), text);

    fails(&["eval", "--model", "Bicubic_s2", "--data", s(&data), "--scale", "3"], 2);
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    fails(&["eval", "--model", "Bicubic_s2", "--data", s(&empty)], 3);
}

#[test]
fn bench_records_speed_key() {
    let tmp = tempfile::tempdir().unwrap();
    let reg = tmp.path().join("registry.json");
    let summary = ok(&[
        "bench", "--model", "eSR-MAX_s2_K3_C1", "--width", "96", "--height", "54", "--runs", "1", "--json", s(&reg),
        "--device-label", "desk",
    ]);
    let samples = summary["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 1);
    let min = summary["min_seconds"].as_f64().unwrap();
    let expected = (96.0 * 54.0 * 4.0) / (min * 1920.0 * 1080.0);
    assert!((summary["speed_fhd"].as_f64().unwrap() - expected).abs() <= 1e-9 * expected);
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(&reg).unwrap()).unwrap();
    assert!(raw["eSR-MAX_s2_K3_C1"]["speed_desk"].is_number());
    fails(&["bench", "--model", "Bicubic_s2", "--width", "0"], 2);
}

#[test]
fn inspect_emits_each_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let t = |name: &str| tmp.path().join(name);

    ok(&["inspect", "--model", "Bicubic_s2", "--emit", "filters", "--out", s(&t("bicubic.pgm"))]);
    let grid = load_image(&t("bicubic.pgm")).unwrap();
    assert_eq!((grid.width, grid.height), (10, 10));

    ok(&["inspect", "--model", "eSR-TM_s2_K3_C4", "--emit", "corr", "--out", s(&t("corr.csv"))]);
    let corr = std::fs::read_to_string(t("corr.csv")).unwrap();
    assert_eq!(corr.lines().count(), 4);
    assert!(corr.lines().all(|l| l.split(',').count() == 4));

    let err = fails(&["inspect", "--model", "eSR-MAX_s2_K3_C4", "--emit", "corr", "--out", s(&t("x.csv"))], 2);
    assert!(err.contains("role unavailable"), "{err}");

    let spec = ok(&["inspect", "--model", "eSR-TR_s3_K5_C2", "--emit", "spectrum", "--out", s(&t("spec.csv"))]);
    assert_eq!(spec["role"], "value");
    let rows = std::fs::read_to_string(t("spec.csv")).unwrap();
    assert_eq!(rows.lines().count(), 64);

    let reg = t("registry.json");
    std::fs::write(
        &reg,
        r#"{"A":{"parameters":10,"psnr_Set5":30.0,"speed_local":5.0},"B":{"parameters":20,"psnr_Set5":31.0,"speed_local":2.0},"C":{"parameters":5}}"#,
    )
    .unwrap();
    let sc = ok(&[
        "inspect", "--emit", "scatter", "--registry", s(&reg), "--dataset", "Set5", "--out", s(&t("scatter.csv")),
    ]);
    assert_eq!(sc["skipped"], 1);
    assert_eq!(
        std::fs::read_to_string(t("scatter.csv")).unwrap(),
        "model,parameters,speed,psnr\nB,20,2,31\nA,10,5,30\n"
    );
}

#[test]
fn summary_json_file_matches_stdout() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in.pgm");
    save_pnm(&input, &pattern(6, 6, 1, 0)).unwrap();
    let summary_file = tmp.path().join("summary.json");
    let out = tmp.path().join("o.pgm");
    let stdout = ok(&[
        "upscale", "--model", "Bicubic_s4", "--input", s(&input), "--output", s(&out), "--json", s(&summary_file),
    ]);
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&summary_file).unwrap()).unwrap();
    assert_eq!(written, stdout);
}

#[test]
fn usage_errors_exit_two() {
    fails(&["upscale", "--input", "a.pgm", "--output", "b.pgm"], 2);
    fails(&["frobnicate"], 2);
    let out = Command::new(env!("CARGO_BIN_EXE_esr"))
        .args(["bench", "--model", "Bicubic_s2", "--runs", "1", "--width", "4", "--height", "4"])
        .env("ESR_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
