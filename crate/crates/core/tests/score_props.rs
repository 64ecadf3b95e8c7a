use num_rational::Rational64;
use proptest::prelude::*;

use recomp::score::{
    estimate_key, normalize_key, parse_kern_with_warnings, read_midi, roll_notes, rolls_to_midi, score_to_rolls,
    Measure, NoteEvent, Part, PianoRollMeasure, RollNote, Score, ToneVocab,
};

const TONES: usize = 12;

fn vocab() -> ToneVocab {
    ToneVocab::from_pitches((0..10).map(|i| 48 + 3 * i as u8))
}

/// One voice of one 4/4 measure: (slots, Some(row) | None) runs filling 16 slots.
fn voice_runs() -> impl Strategy<Value = Vec<(usize, Option<usize>)>> {
    prop::collection::vec((1usize..=6, prop::option::weighted(0.8, 0usize..10)), 1..10).prop_map(|raw| {
        let mut out: Vec<(usize, Option<usize>)> = Vec::new();
        let mut used = 0;
        for (len, row) in raw {
            let len = len.min(16 - used);
            if len == 0 {
                break;
            }
            // adjacent equal pitches would merge into one run
            let row = match (out.last(), row) {
                (Some((_, Some(prev))), Some(r)) if *prev == r => Some((r + 1) % 10),
                _ => row,
            };
            out.push((len, row));
            used += len;
        }
        if used < 16 {
            out.push((16 - used, None));
        }
        out
    })
}

fn measure_runs() -> impl Strategy<Value = Vec<Vec<(usize, Option<usize>)>>> {
    prop::collection::vec(voice_runs(), 4)
}

fn to_score(measures: &[Vec<Vec<(usize, Option<usize>)>>], vocab: &ToneVocab) -> Score {
    let mut parts = vec![Part::default(); 4];
    for m in measures {
        for (v, runs) in m.iter().enumerate() {
            let mut onset = 0;
            let mut events = Vec::new();
            for &(len, row) in runs {
                events.push(NoteEvent {
                    onset: Rational64::new(onset as i64, 4),
                    duration: Rational64::new(len as i64, 4),
                    pitch: row.map(|r| vocab.pitch(r).unwrap()),
                });
                onset += len;
            }
            parts[v].measures.push(Measure { events });
        }
    }
    Score {
        parts,
        measure_lengths: vec![Rational64::from_integer(4); measures.len()],
    }
}

fn arbitrary_roll() -> impl Strategy<Value = PianoRollMeasure> {
    prop::collection::vec(prop::bool::weighted(0.15), 10 * 16 * 4).prop_map(|bits| {
        let mut cells: Vec<u8> = bits.into_iter().map(u8::from).collect();
        // rows 10 and 11 are padding and stay empty
        cells.extend(std::iter::repeat_n(0, 2 * 16 * 4));
        PianoRollMeasure::from_cells(TONES, 4, cells).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slot_aligned_scores_survive_quantization(measures in prop::collection::vec(measure_runs(), 1..4)) {
        let vocab = vocab();
        prop_assert_eq!(vocab.padded_size(), TONES);
        let rolls = score_to_rolls(&to_score(&measures, &vocab), &vocab, 4).unwrap();
        for (roll, m) in rolls.iter().zip(&measures) {
            let mut want = Vec::new();
            for (voice, runs) in m.iter().enumerate() {
                let mut start = 0;
                for &(len, row) in runs {
                    if let Some(row) = row {
                        want.push(RollNote { voice, row, start, len });
                    }
                    start += len;
                }
            }
            want.sort();
            prop_assert_eq!(roll.notes(), want);
            prop_assert!(roll.cells().iter().all(|&c| c <= 1));
            prop_assert!((vocab.raw_size()..TONES).all(|r| (0..16).all(|s| (0..4).all(|v| !roll.get(r, s, v)))));
        }
    }

    #[test]
    fn midi_reparses_to_the_merged_notes(rolls in prop::collection::vec(arbitrary_roll(), 1..4), tempo in 200_000u32..1_000_000) {
        let vocab = vocab();
        let bytes = rolls_to_midi(&rolls, &vocab, tempo).unwrap();
        let file = read_midi(&bytes).unwrap();
        prop_assert_eq!(file.division, 480);
        prop_assert_eq!(file.tempo_us, Some(tempo));
        prop_assert_eq!(file.end_tick, rolls.len() as u64 * 16 * 120);
        prop_assert_eq!(file.notes, roll_notes(&rolls, &vocab));
    }

    #[test]
    fn key_normalization_is_idempotent(
        pitches in prop::collection::vec((36u8..90, 1i64..8), 4..40),
        shift in 0u8..12,
    ) {
        let events: Vec<NoteEvent> = pitches
            .iter()
            .scan(0, |t, &(p, d)| {
                let e = NoteEvent { onset: Rational64::new(*t, 4), duration: Rational64::new(d, 4), pitch: Some(p + shift) };
                *t += d;
                Some(e)
            })
            .collect();
        let total: i64 = pitches.iter().map(|p| p.1).sum();
        let score = Score {
            parts: vec![Part { measures: vec![Measure { events }] }],
            measure_lengths: vec![Rational64::new(total, 4)],
        };
        let key = estimate_key(&score).unwrap();
        let once = normalize_key(&score, &key);
        let again_key = estimate_key(&once).unwrap();
        prop_assert_eq!(again_key.tonic, 0);
        prop_assert_eq!(again_key.mode, key.mode);
        prop_assert_eq!(normalize_key(&once, &again_key), once);
    }

    #[test]
    fn parser_never_panics(text in "[*!=.a-gA-Gr#0-9\\-\t\n k]{0,200}") {
        if let Err(e) = parse_kern_with_warnings(&text) {
            let lines = text.lines().count();
            match e {
                recomp::Error::Parse { line, .. } => prop_assert!(line <= lines),
                other => prop_assert!(false, "unexpected error kind {:?}", other),
            }
        }
    }

    #[test]
    fn each_skipped_line_warns_once(extra in prop::collection::vec((0usize..6, 0usize..3), 0..8)) {
        let mut lines = vec![
            "**kern\t**kern".to_string(),
            "*M4/4\t*M4/4".into(),
            "4c\t4e".into(),
            "4d\t4f".into(),
            "2e\t2g".into(),
            "=1\t=1".into(),
            "1c\t1C".into(),
            "==\t==".into(),
        ];
        let kinds = ["*clefG2\t*clefF4", "!! a comment", "*k[]\t*"];
        let mut expected = 0;
        for &(pos, kind) in extra.iter().rev() {
            lines.insert(1 + pos, kinds[kind].to_string());
            expected += usize::from(kind != 1);
        }
        lines.push("*-\t*-".into());
        let (score, warnings) = parse_kern_with_warnings(&lines.join("\n")).unwrap();
        prop_assert_eq!(warnings.len(), expected);
        let mut warned: Vec<usize> = warnings.iter().map(|w| w.line).collect();
        warned.dedup();
        prop_assert_eq!(warned.len(), expected);
        prop_assert_eq!(score.measure_count(), 2);
    }
}
