use skinet_core::data::{load_dataset, DatasetKind};
use skinet_core::segnet::{build_segnet, train_segnet, SegNetConfig, TrainConfig};

#[test]
#[ignore]
fn calibrate_seg_overfit() {
    let dir = tempfile::tempdir().unwrap();
    skinet_core::synth::write_seg_dataset(dir.path(), 10, 32, 4242).unwrap();
    let manifest = load_dataset(dir.path(), DatasetKind::Segmentation).unwrap();
    let cfg = SegNetConfig::desk();
    let model = build_segnet(&cfg, 7).unwrap();
    let tc = TrainConfig { learning_rate: 2e-3, batch_size: 10, epochs: 60, ..TrainConfig::default() };
    let t0 = std::time::Instant::now();
    let (_, hist) = train_segnet(model, &manifest, &manifest, &tc, 11).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    for e in hist.iter().step_by(5).chain(hist.last()) {
        println!(
            "epoch {:3}  loss {:.4}  DI {:.4}  JI {:.4}",
            e.epoch, e.train_loss, e.val_dice, e.val_jaccard
        );
    }
    let best = hist.iter().map(|e| e.val_dice).fold(f64::MIN, f64::max);
    println!("best DI {best:.4} in {secs:.1}s");
}

#[test]
#[ignore]
fn calibrate_clf_overfit() {
    use skinet_core::classifier::{build_classifier, train_classifier, ClassifierConfig};
    use skinet_core::data::AugmentationSpec;
    let dir = tempfile::tempdir().unwrap();
    skinet_core::synth::write_clf_dataset(dir.path(), 10, 5, 32, 909).unwrap();
    let manifest = load_dataset(dir.path(), DatasetKind::Classification).unwrap();
    let model = build_classifier(&ClassifierConfig::desk(5), 21).unwrap();
    let tc = TrainConfig { learning_rate: 2e-3, batch_size: 10, epochs: 40, ..TrainConfig::default() };
    let t0 = std::time::Instant::now();
    let (_, hist) =
        train_classifier(model, &manifest, &manifest, &tc, &AugmentationSpec::disabled(), 33).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    for e in hist.iter().step_by(5).chain(hist.last()) {
        println!("epoch {:3}  loss {:.4}  acc {:.4}", e.epoch, e.train_loss, e.val_accuracy);
    }
    let best = hist.iter().map(|e| e.val_accuracy).fold(f64::MIN, f64::max);
    println!("best acc {best:.4} in {secs:.1}s");
}
