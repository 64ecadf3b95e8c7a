use proptest::prelude::*;

use recomp::harmony::{build_chord_vocab, label_measure, make_triplets, ChordVocab, SlotPitch};
use recomp::score::{tonic_shift, Mode};

const LABELS: [&str; 6] = ["I", "ii42", "V65", "vi", "IV6", "viio"];

/// Diatonic scale degrees of C major and C natural minor.
fn scale(mode: Mode) -> [u8; 7] {
    match mode {
        Mode::Major => [0, 2, 4, 5, 7, 9, 11],
        Mode::Minor => [0, 2, 3, 5, 7, 8, 10],
    }
}

proptest! {
    #[test]
    fn triplets_keep_length_and_chain(labels in prop::collection::vec(0usize..6, 1..40)) {
        let t = make_triplets(&labels).unwrap();
        prop_assert_eq!(t.len(), labels.len());
        prop_assert_eq!(t[0][0], labels[0]);
        prop_assert_eq!(t[labels.len() - 1][2], labels[labels.len() - 1]);
        for (i, w) in t.iter().enumerate() {
            prop_assert_eq!(w[1], labels[i]);
        }
        for w in t.windows(2) {
            prop_assert_eq!(w[0][1], w[1][0]);
            prop_assert_eq!(w[0][2], w[1][1]);
        }
    }

    #[test]
    fn vocab_text_round_trip(labels in prop::collection::vec(0usize..6, 0..30)) {
        let vocab = build_chord_vocab(labels.iter().map(|&i| LABELS[i]));
        let back = ChordVocab::from_text(&vocab.to_text()).unwrap();
        prop_assert_eq!(back.labels(), vocab.labels());
        prop_assert_eq!(back.fingerprint(), vocab.fingerprint());
        for (id, label) in vocab.labels().iter().enumerate() {
            prop_assert_eq!(vocab.id(label), Some(id));
        }
        let mut first_seen: Vec<&str> = Vec::new();
        for &i in &labels {
            if !first_seen.contains(&LABELS[i]) {
                first_seen.push(LABELS[i]);
            }
        }
        prop_assert_eq!(vocab.labels().to_vec(), first_seen.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    }

    /// A chord written in another key labels like the same chord in C once shifted by the tonic.
    #[test]
    fn labels_follow_normalization(
        degree in 0usize..7,
        seventh in any::<bool>(),
        minor in any::<bool>(),
        tonic in 0u8..12,
        octaves in prop::collection::vec(0u8..3, 4),
    ) {
        let mode = if minor { Mode::Minor } else { Mode::Major };
        let sc = scale(mode);
        let tones: Vec<u8> = (0..3 + usize::from(seventh)).map(|k| sc[(degree + 2 * k) % 7]).collect();
        let in_c: Vec<SlotPitch> = tones
            .iter()
            .zip(&octaves)
            .enumerate()
            .map(|(slot, (&pc, &o))| SlotPitch { slot, pitch: 48 + 12 * o + pc })
            .collect();
        let moved: Vec<SlotPitch> = in_c.iter().map(|s| SlotPitch { slot: s.slot, pitch: s.pitch + tonic }).collect();
        let back: Vec<SlotPitch> = moved
            .iter()
            .map(|s| SlotPitch { slot: s.slot, pitch: (s.pitch as i32 + tonic_shift(tonic)) as u8 })
            .collect();
        prop_assert_eq!(label_measure(&back, mode), label_measure(&in_c, mode));
    }
}

#[test]
fn triplets_of_nothing_is_an_error() {
    assert!(make_triplets::<&str>(&[]).is_err());
    assert_eq!(make_triplets(&["i"]).unwrap(), vec![["i", "i", "i"]]);
}
