//! Property tests over the preprocessing invariants.

use proptest::prelude::*;
use sdx_core::eeg::{segment_and_concat, Label, SubjectRecording};
use sdx_core::spectrogram::{
    build_spectrogram_dataset, log_normalize, Origin, Provenance, Spectrogram, StftConfig,
};

fn recording(channels: usize, rate: usize, t: usize, salt: u64) -> SubjectRecording {
    SubjectRecording::new(
        "prop",
        Label::Norm,
        rate,
        (0..channels).map(|c| format!("ch{c}")).collect(),
        (0..channels)
            .map(|c| {
                (0..t)
                    .map(|i|

                        ((i as u64 * 2654435761 + c as u64 * 97 + salt) % 1009) as f64 / 1009.0
                            - 0.5)
                    .collect()
            })
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// floor(T / (5 * rate)) segments, each holding every channel's window.
    #[test]
    fn segment_count_follows_floor_rule(
        t in 1usize..40_000,
        channels in 1usize..8,
        rate_ix in 0usize..2,
        salt in 0u64..1000,
    ) {
        let rate = [128usize, 250][rate_ix];
        let rec = recording(channels, rate, t, salt);
        let window = 5 * rate;
        match segment_and_concat(&rec) {
            Ok(segments) => {
                prop_assert!(t >= window);
                prop_assert_eq!(segments.len(), t / window);
                for (si, seg) in segments.iter().enumerate() {
                    prop_assert_eq!(seg.data.len(), channels * window);
                    // indexing oracle: element k comes from
                    // samples[k / window][si * window + k % window]
                    for k in [0, seg.data.len() / 2, seg.data.len() - 1] {
                        let expect = rec.samples[k / window][si * window + k % window];
                        prop_assert_eq!(seg.data[k], expect);
                    }
                }
            }
            Err(_) => prop_assert!(t < window),
        }
    }

    /// log-normalization lands in [0,1] and preserves pixel ordering.
    #[test]
    fn log_normalize_preserves_order(values in proptest::collection::vec(0f32..1e6, 6..64)) {
        let cols = 2;
        let rows = values.len() / cols;
        let values = values[..rows * cols].to_vec();
        let spec = Spectrogram {
            freq_bins: rows,
            time_frames: cols,
            values: values.clone(),
            provenance: Provenance {
                subject_id: "p".into(),
                segment_index: 0,
                origin: Origin::Real,
            },
            label: Label::Sch,
        };
        let n = log_normalize(&spec);
        prop_assert!(n.values.iter().all(|v| (0.0..=1.0).contains(v)));
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] < values[j] {
                    prop_assert!(n.values[i] <= n.values[j]);
                }
            }
        }
    }
}

#[test]
fn empty_corpus_builds_empty_dataset() {
    let dataset = build_spectrogram_dataset(&[], &StftConfig::default()).unwrap();
    assert!(dataset.native.is_empty() && dataset.resized.is_empty());
}
