//! Property tests for the toolkit's stated invariants.

use ndarray::ArrayD;
use proptest::prelude::*;
use specfuse::data::{parse_protocol_text, ProtocolEntry};
use specfuse::features::{fit_to_length, lfcc_frame_count, CropPolicy, LfccConfig};
use specfuse::losses::{recon_loss, total_loss, ReconNorm};
use specfuse::metrics::{compute_eer, Label, ScoreRecord};

fn records(bona: &[f64], spoof: &[f64]) -> Vec<ScoreRecord> {
    let mut v = Vec::new();
    for (i, &s) in bona.iter().enumerate() {
        v.push(ScoreRecord::new(format!("B{i}"), "-", Label::Bonafide, s).unwrap());
    }
    for (i, &s) in spoof.iter().enumerate() {
        v.push(ScoreRecord::new(format!("S{i}"), "A01", Label::Spoof, s).unwrap());
    }
    v
}

proptest! {
    /// EER only depends on score ordering: strictly increasing transforms
    /// leave it unchanged.
    #[test]
    fn eer_invariant_under_increasing_transforms(
        bona in prop::collection::vec(-5.0f64..5.0, 1..20),
        spoof in prop::collection::vec(-5.0f64..5.0, 1..20),
        scale in 0.1f64..10.0,
        shift in -3.0f64..3.0,
    ) {
        let base = records(&bona, &spoof);
        let (eer0, _) = compute_eer(&base).unwrap();
        let transforms: [&dyn Fn(f64) -> f64; 3] = [
            &|x| scale * x + shift,
            &|x| x.powi(3),
            &|x| x.exp() / (1.0 + x.exp()) , // logistic
        ];
        for f in transforms {
            let mapped: Vec<ScoreRecord> = base
                .iter()
                .map(|r| ScoreRecord::new(r.utt_id.clone(), r.attack_id.clone(), r.label, f(r.score)).unwrap())
                .collect();
            let (eer1, _) = compute_eer(&mapped).unwrap();
            prop_assert!((eer0 - eer1).abs() < 1e-12, "{eer0} vs {eer1}");
        }
    }

    /// Flipping labels and negating scores leaves the EER unchanged.
    #[test]
    fn eer_symmetric_under_label_flip_and_negation(
        bona in prop::collection::vec(-5.0f64..5.0, 1..15),
        spoof in prop::collection::vec(-5.0f64..5.0, 1..15),
    ) {
        let base = records(&bona, &spoof);
        let flipped: Vec<ScoreRecord> = base
            .iter()
            .map(|r| {
                let (label, attack) = match r.label {
                    Label::Bonafide => (Label::Spoof, "A01".to_string()),
                    Label::Spoof => (Label::Bonafide, "-".to_string()),
                };
                ScoreRecord::new(r.utt_id.clone(), attack, label, -r.score).unwrap()
            })
            .collect();
        let (a, _) = compute_eer(&base).unwrap();
        let (b, _) = compute_eer(&flipped).unwrap();
        prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    /// parse . serialize == identity on protocol entry lists.
    #[test]
    fn protocol_round_trip_identity(entries in prop::collection::vec(protocol_entry(), 1..30)) {
        let text = specfuse::data::serialize_protocol(&entries);
        let parsed = parse_protocol_text(&text).unwrap();
        prop_assert_eq!(entries, parsed);
    }

    /// Reconstruction distance is symmetric and absolutely homogeneous.
    #[test]
    fn recon_loss_symmetry_and_homogeneity(
        data in prop::collection::vec(-10.0f64..10.0, 4..40),
        lambda in -4.0f64..4.0,
    ) {
        let n = data.len() / 2;
        let a = ArrayD::from_shape_vec(ndarray::IxDyn(&[n]), data[..n].to_vec()).unwrap();
        let b = ArrayD::from_shape_vec(ndarray::IxDyn(&[n]), data[n..2*n].to_vec()).unwrap();
        let ab = recon_loss(&a, &b, ReconNorm::MeanAbs).unwrap();
        let ba = recon_loss(&b, &a, ReconNorm::MeanAbs).unwrap();
        prop_assert_eq!(ab, ba);
        let scaled = recon_loss(&a.mapv(|v| v * lambda), &b.mapv(|v| v * lambda), ReconNorm::MeanAbs).unwrap();
        prop_assert!((scaled - lambda.abs() * ab).abs() < 1e-9);
        prop_assert!(ab >= 0.0);
    }

    /// total = alpha*(l1+l2) + lcls, and it is linear in each component.
    #[test]
    fn total_loss_arithmetic_and_linearity(
        l1 in 0.0f64..50.0,
        l2 in 0.0f64..50.0,
        lcls in 0.0f64..50.0,
        alpha in 0.0f64..10.0,
        k in 0.0f64..5.0,
    ) {
        let b = total_loss(l1, l2, lcls, alpha).unwrap();
        prop_assert!((b.total - (alpha * (l1 + l2) + lcls)).abs() < 1e-12);
        // linearity in l1 with the rest fixed
        let b2 = total_loss(k * l1, l2, lcls, alpha).unwrap();
        prop_assert!(((b2.total - b.total) - alpha * (k - 1.0) * l1).abs() < 1e-9);
    }

    /// Tiling and cropping always produce the target length; short inputs
    /// repeat periodically.
    #[test]
    fn fit_to_length_respects_the_contract(
        len in 1usize..4000,
        target in 1usize..4000,
    ) {
        let samples: Vec<f64> = (0..len).map(|i| (i % 97) as f64 / 97.0).collect();
        let out = fit_to_length(samples.clone(), target, CropPolicy::Head);
        prop_assert_eq!(out.len(), target);
        if len >= target {
            prop_assert_eq!(&out[..], &samples[..target]);
        } else {
            for (i, v) in out.iter().enumerate() {
                prop_assert_eq!(*v, samples[i % len]);
            }
        }
    }
}

/// The closed-form LFCC frame count against direct frame enumeration, over
/// 1000 random lengths.
#[test]
fn lfcc_frame_count_matches_enumeration_for_random_lengths() {
    let cfg = LfccConfig::default();
    let (frame, hop) = (cfg.frame_samples(), cfg.hop_samples());
    let mut state = 0x12345678u64;
    for _ in 0..1000 {
        // xorshift for cheap deterministic lengths
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let len = frame + (state as usize % 200_000);
        let mut count = 0usize;
        let mut start = 0usize;
        while start + frame <= len {
            count += 1;
            start += hop;
        }
        assert_eq!(lfcc_frame_count(len, &cfg), count, "len {len}");
    }
}

fn protocol_entry() -> impl Strategy<Value = ProtocolEntry> {
    let ident = "[A-Za-z0-9_]{1,12}";
    (ident, ident, ident, prop::bool::ANY, 1u8..20).prop_map(
        |(spk, utt, sys, bona, attack_no)| {
            if bona {
                ProtocolEntry {
                    speaker_id: spk,
                    utt_id: utt,
                    system_id: sys,
                    attack_id: "-".into(),
                    key: Label::Bonafide,
                }
            } else {
                ProtocolEntry {
                    speaker_id: spk,
                    utt_id: utt,
                    system_id: sys,
                    attack_id: format!("A{attack_no:02}"),
                    key: Label::Spoof,
                }
            }
        },
    )
}
