//! Deterministic four-voice diatonic pieces in the kern subset, with known chords.

use recomp_tensor::Rng;

use crate::score::Mode;

const SCALE_MAJOR: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const SCALE_MINOR: [u8; 7] = [0, 2, 3, 5, 7, 8, 10];
const NAMES: [&str; 12] = ["c", "c#", "d", "d#", "e", "f", "f#", "g", "g#", "a", "a#", "b"];
/// Inclusive MIDI ranges, bass first.
const RANGES: [(u8, u8); 4] = [(36, 52), (53, 64), (60, 71), (67, 79)];

/// A generated piece and the chord planted in each measure.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthPiece {
    pub name: String,
    pub kern: String,
    pub tonic: u8,
    pub mode: Mode,
    /// Rendered root-position label per measure, relative to the tonic.
    pub chords: Vec<String>,
}

fn kern_pitch(midi: u8) -> String {
    let octave = i32::from(midi / 12) - 1;
    let name = NAMES[usize::from(midi % 12)];
    let (letter, acc) = name.split_at(1);
    let body = if octave >= 4 {
        letter.repeat((octave - 3) as usize)
    } else {
        letter.to_uppercase().repeat((4 - octave) as usize)
    };
    format!("{body}{acc}")
}

fn kern_duration(slots: usize) -> &'static str {
    match slots {
        16 => "1",
        8 => "2",
        4 => "4",
        _ => unreachable!("synthetic rhythms use 4, 8 or 16 slots"),
    }
}

/// Pitches of pitch class `pc` inside `range`.
fn candidates(pc: u8, (lo, hi): (u8, u8)) -> Vec<u8> {
    (lo..=hi).filter(|p| p % 12 == pc).collect()
}

fn rhythm(rng: &mut Rng) -> Vec<usize> {
    const PATTERNS: [&[usize]; 5] = [&[16], &[8, 8], &[4, 4, 8], &[8, 4, 4], &[4, 4, 4, 4]];
    PATTERNS[rng.below(PATTERNS.len())].to_vec()
}

fn degree_label(mode: Mode, degree: usize) -> &'static str {
    match mode {
        Mode::Major => ["I", "ii", "iii", "IV", "V", "vi", "viio"][degree],
        Mode::Minor => ["i", "iio", "III", "iv", "v", "VI", "VII"][degree],
    }
}

/// Degrees (0-based) for `measures` bars in four-bar phrases I, x, V, I, closing on the tonic.
fn progression(mode: Mode, measures: usize, rng: &mut Rng) -> Vec<usize> {
    let middle: &[usize] = match mode {
        Mode::Major => &[1, 3, 5],
        Mode::Minor => &[2, 3, 5],
    };
    (0..measures)
        .map(|m| match m % 4 {
            _ if m + 1 == measures => 0,
            0 | 3 => 0,
            1 => *rng.choose(middle),
            _ => 4,
        })
        .collect()
}

/// `pieces` pieces of `measures_per_piece` bars each; mostly major, every third piece minor.
pub fn synth_corpus(seed: u64, pieces: usize, measures_per_piece: usize) -> Vec<SynthPiece> {
    let mut rng = Rng::seed(seed);
    (0..pieces)
        .map(|i| {
            let mode = if i % 3 == 2 { Mode::Minor } else { Mode::Major };
            let tonic = rng.below(12) as u8;
            synth_piece(format!("synth{i:03}"), tonic, mode, measures_per_piece, &mut rng)
        })
        .collect()
}

fn synth_piece(name: String, tonic: u8, mode: Mode, measures: usize, rng: &mut Rng) -> SynthPiece {
    let scale = match mode {
        Mode::Major => SCALE_MAJOR,
        Mode::Minor => SCALE_MINOR,
    };
    let degrees = progression(mode, measures, rng);
    // per voice, per measure: (pitch, slots) tokens
    let mut voices: Vec<Vec<Vec<(u8, usize)>>> = vec![Vec::new(); 4];
    for &d in &degrees {
        let tones: [u8; 3] = [0, 2, 4].map(|k| (tonic + scale[(d + k) % 7]) % 12);
        // bass takes the root; the upper voices start on a rotation of root/third/fifth
        // that always includes the third and the fifth
        let rot = rng.below(3);
        let starts = [[1, 2, 0], [2, 0, 1], [1, 0, 2]][rot];
        for v in 0..4 {
            let first_pc = if v == 0 { tones[0] } else { tones[starts[v - 1]] };
            let mut bar = Vec::new();
            for (n, slots) in rhythm(rng).into_iter().enumerate() {
                let pc = if n == 0 { first_pc } else { tones[[0, 0, 1, 2][rng.below(4)]] };
                let options = candidates(pc, RANGES[v]);
                bar.push((*rng.choose(&options), slots));
            }
            voices[v].push(bar);
        }
    }

    let mut kern = String::new();
    kern.push_str(&["**kern"; 4].join("\t"));
    kern.push('\n');
    kern.push_str(&["*M4/4"; 4].join("\t"));
    kern.push('\n');
    for m in 0..measures {
        if m > 0 {
            kern.push_str(&vec![format!("={}", m + 1); 4].join("\t"));
            kern.push('\n');
        }
        // merge the onsets of all voices into rows
        let mut onsets: Vec<usize> = Vec::new();
        for v in &voices {
            let mut t = 0;
            for &(_, s) in &v[m] {
                onsets.push(t);
                t += s;
            }
        }
        onsets.sort_unstable();
        onsets.dedup();
        for &t in &onsets {
            let row: Vec<String> = voices
                .iter()
                .map(|v| {
                    let mut at = 0;
                    for &(p, s) in &v[m] {
                        if at == t {
                            return format!("{}{}", kern_duration(s), kern_pitch(p));
                        }
                        at += s;
                    }
                    ".".to_string()
                })
                .collect();
            kern.push_str(&row.join("\t"));
            kern.push('\n');
        }
    }
    kern.push_str(&["=="; 4].join("\t"));
    kern.push('\n');
    kern.push_str(&["*-"; 4].join("\t"));
    kern.push('\n');

    SynthPiece {
        name,
        kern,
        tonic,
        mode,
        chords: degrees.iter().map(|&d| degree_label(mode, d).to_string()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmony::{label_measure, roll_pitches};
    use crate::score::{
        build_tone_vocab, estimate_key, normalize_key, parse_kern_with_warnings, score_to_rolls, KeyEstimate,
    };

    #[test]
    fn kern_octaves() {
        assert_eq!(kern_pitch(60), "c");
        assert_eq!(kern_pitch(72), "cc");
        assert_eq!(kern_pitch(48), "C");
        assert_eq!(kern_pitch(36), "CC");
        assert_eq!(kern_pitch(61), "c#");
        assert_eq!(kern_pitch(47), "BB");
    }

    #[test]
    fn same_seed_same_files() {
        assert_eq!(synth_corpus(3, 4, 5), synth_corpus(3, 4, 5));
        assert_ne!(synth_corpus(3, 4, 5), synth_corpus(4, 4, 5));
    }

    #[test]
    fn parses_cleanly_with_four_parts() {
        for piece in synth_corpus(11, 6, 6) {
            let (score, warnings) = parse_kern_with_warnings(&piece.kern).unwrap();
            assert!(warnings.is_empty(), "{warnings:?}");
            assert_eq!(score.part_count(), 4);
            assert_eq!(score.measure_count(), 6);
        }
    }

    #[test]
    fn measures_label_to_planted_chords() {
        for piece in synth_corpus(21, 9, 6) {
            let score = parse_kern_with_warnings(&piece.kern).unwrap().0;
            let key = KeyEstimate {
                tonic: piece.tonic,
                mode: piece.mode,
                score: 1.0,
            };
            let norm = normalize_key(&score, &key);
            let vocab = build_tone_vocab([&norm]).unwrap();
            let labels: Vec<String> = score_to_rolls(&norm, &vocab, 4)
                .unwrap()
                .iter()
                .map(|r| label_measure(&roll_pitches(r, &vocab), piece.mode).to_string())
                .collect();
            assert_eq!(labels, piece.chords, "{}", piece.name);
        }
    }

    #[test]
    fn key_estimate_recovers_planted_key() {
        for piece in synth_corpus(24, 30, 6) {
            let score = parse_kern_with_warnings(&piece.kern).unwrap().0;
            let key = estimate_key(&score).unwrap();
            assert_eq!((key.tonic, key.mode), (piece.tonic, piece.mode), "{}", piece.name);
        }
    }
}
