mod common;

use common::*;
use esr_core::imageio::{save_pnm, Image};
use esr_core::metrics::psnr;
use esr_core::models::{init_weights, Arch, ModelSpec};
use esr_core::train::{history_csv, train_loop, TrainConfig, Trainer};
use esr_core::{Error, Shape};

#[test]
fn linear_model_recovers_a_linear_teacher() {
    let spec = ModelSpec::single_layer(Arch::EsrMax, 2, 5, 1);
    let teacher = init_weights(&spec, 100).unwrap();
    let mut trainer = Trainer::new(init_weights(&spec, 7).unwrap(), &TrainConfig::default()).unwrap();
    let mut r = rng(0);
    for step in 0..1500 {
        let lr = random_tensor(&mut r, Shape::new(4, 1, 12, 12), 0.0, 255.0);
        let hr = teacher.upscale(&lr).unwrap();
        let rate = if step < 1000 { 1e-2 } else { 1e-3 };
        trainer.step(&lr, &hr, rate).unwrap();
    }
    let probe = random_tensor(&mut r, Shape::new(1, 1, 32, 32), 0.0, 255.0);
    let want = teacher.upscale(&probe).unwrap();
    let got = trainer.weights().upscale(&probe).unwrap();
    let db = psnr(&got, &want).unwrap();
    assert!(db >= 45.0, "{db:.2} dB");
}

#[test]
fn training_reduces_loss_and_writes_history() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..3 {
        let img = Image::new(48, 48, 1, shapes_image(&mut rng(i), 48, 48)).unwrap();
        save_pnm(&dir.path().join(format!("{i}.pgm")), &img).unwrap();
    }
    let spec = ModelSpec::single_layer(Arch::EsrTm, 2, 3, 2);
    let cfg = TrainConfig {
        lr0: 1e-2,
        minibatch: 3,
        patch_size: Some(24),
        steps_per_epoch: Some(10),
        ..TrainConfig::with_epochs(20)
    };
    let mut seen = 0;
    let out = train_loop(&spec, dir.path(), &cfg, |_| seen += 1).unwrap();
    assert_eq!(seen, 20);
    assert_eq!(out.skipped, 0);
    let first = out.history.first().unwrap().mean_loss;
    let last = out.history.last().unwrap().mean_loss;
    assert!(last < 0.5 * first, "{first} -> {last}");
    let csv = history_csv(&out.history);
    assert_eq!(csv.lines().count(), 21);
    assert!(csv.starts_with("epoch,lr,mean_loss\n0,0.01,"));
}

#[test]
fn training_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::single_layer(Arch::EsrMax, 2, 3, 1);
    assert!(train_loop(&spec, dir.path(), &TrainConfig::with_epochs(1), |_| {}).is_err());
    save_pnm(&dir.path().join("tiny.pgm"), &Image::new(8, 8, 1, vec![0.0; 64]).unwrap()).unwrap();
    assert!(train_loop(&spec, dir.path(), &TrainConfig::with_epochs(1), |_| {}).is_err());
    let lr = Shape::new(1, 1, 4, 4);
    let mut t = Trainer::new(init_weights(&spec, 0).unwrap(), &TrainConfig::default()).unwrap();
    let bad = esr_core::Tensor::full(lr, f32::NAN);
    let hr = esr_core::Tensor::zeros(Shape::new(1, 1, 8, 8));
    assert!(matches!(t.step(&bad, &hr, 1e-3), Err(Error::NonFinite(_))));
}
