//! Calibration probe for the end-to-end smoke scale.

use sdx_core::cnn::{build_proposed_cnn, train_classifier, TrainConfig};
use sdx_core::eeg::{zscore_normalize, Label, SubjectRecording};
use sdx_core::pipeline::split_before_augment;
use sdx_core::spectrogram::{build_spectrogram_dataset, Spectrogram, StftConfig};

fn recording(subject: usize, label: Label) -> SubjectRecording {
    let detune = subject as f64 * 0.25;
    let band = if label == Label::Sch { 32.0 } else { 15.0 };
    let data: Vec<Vec<f64>> = (0..16)
        .map(|ch| {
            (0..7680)
                .map(|t| {
                    let tt = t as f64 / 128.0;
                    let drift = 1.0 + 0.5 * (2.0 * std::f64::consts::PI * tt / 13.0).sin();
                    let wobble = 1.5 * (2.0 * std::f64::consts::PI * tt / 29.0).sin();
                    let base = drift
                        * (2.0 * std::f64::consts::PI * (10.0 + detune + wobble) * tt).sin()
                        + 0.4
                            * (2.0 * std::f64::consts::PI * (3.0 + 0.1 * ch as f64) * tt
                                + ch as f64)
                                .sin();
                    let marker =
                        (2.0 * std::f64::consts::PI * (band + detune - wobble) * tt).sin();
                    let noise = ((((t * 37 + ch * 101 + subject * 13) * 2654435761) % 997) as f64
                        / 997.0
                        - 0.5)
                        * 0.6;
                    base + 3.0 * drift * marker + noise
                })
                .collect()
        })
        .collect();
    SubjectRecording::new(
        format!("{label}{subject:03}"),
        label,
        128,
        (0..16).map(|c| format!("ch{c}")).collect(),
        data,
    )
    .unwrap()
}

fn main() {
    let t0 = std::time::Instant::now();
    let recordings: Vec<SubjectRecording> = (0..42)
        .map(|i| {
            let label = if i < 21 { Label::Norm } else { Label::Sch };
            zscore_normalize(&recording(i % 21, label)).unwrap().0
        })
        .collect();
    let dataset = build_spectrogram_dataset(&recordings, &StftConfig::default()).unwrap();
    println!("built {} images in {:?}", dataset.resized.len(), t0.elapsed());

    let manifest = split_before_augment(&dataset.resized, 0.2, 900).unwrap();
    let (train, test) = manifest.apply(&dataset.resized).unwrap();
    let train: Vec<Spectrogram> = train.into_iter().cloned().collect();
    let test: Vec<Spectrogram> = test.into_iter().cloned().collect();

    for lr in [2e-4f64, 4e-4] {
        let t1 = std::time::Instant::now();
        let mut model = build_proposed_cnn::<f32>(901);
        let cfg = TrainConfig::new(lr, 32, 6, 902);
        let history = train_classifier(&mut model, &train, &test, &cfg).unwrap();
        for h in &history {
            println!(
                "lr {lr}: epoch {} train {:.3}/{:.4} test {:.3}/{:.4}",
                h.epoch, h.train_accuracy, h.train_loss, h.test_accuracy, h.test_loss
            );
        }
        println!("training took {:?}", t1.elapsed());
    }
}
