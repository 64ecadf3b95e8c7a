//! Krumhansl-Schmuckler key finding and transposition to a C tonic.

use num_traits::ToPrimitive;

use super::model::Score;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Major,
    Minor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyEstimate {
    /// Pitch class 0-11, C = 0.
    pub tonic: u8,
    pub mode: Mode,
    /// Pearson correlation of the winning profile.
    pub score: f64,
}

/// Krumhansl-Kessler probe-tone ratings, tonic first.
const MAJOR_PROFILE: [f64; 12] = [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88];
const MINOR_PROFILE: [f64; 12] = [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17];

/// Duration-weighted pitch-class histogram.
pub fn pitch_class_histogram(score: &Score) -> [f64; 12] {
    let mut hist = [0.0; 12];
    for (pitch, e) in score.pitched_events() {
        hist[(pitch % 12) as usize] += e.duration.to_f64().unwrap_or(0.0);
    }
    hist
}

fn correlation(a: &[f64; 12], b: &[f64; 12]) -> f64 {
    let ma = a.iter().sum::<f64>() / 12.0;
    let mb = b.iter().sum::<f64>() / 12.0;
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for i in 0..12 {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma).powi(2);
        db += (b[i] - mb).powi(2);
    }
    if da == 0.0 || db == 0.0 {
        0.0
    } else {
        num / (da * db).sqrt()
    }
}

/// Best of the 24 major/minor keys for a histogram.
///
/// Ties go to the lower tonic, then major before minor.
pub fn estimate_key_from_histogram(hist: &[f64; 12]) -> KeyEstimate {
    let mut best: Option<KeyEstimate> = None;
    for tonic in 0..12u8 {
        for (mode, profile) in [(Mode::Major, &MAJOR_PROFILE), (Mode::Minor, &MINOR_PROFILE)] {
            let mut rotated = [0.0; 12];
            for (pc, slot) in rotated.iter_mut().enumerate() {
                *slot = profile[(pc + 12 - tonic as usize) % 12];
            }
            let score = correlation(hist, &rotated);
            if best.is_none_or(|b| score > b.score) {
                best = Some(KeyEstimate { tonic, mode, score });
            }
        }
    }
    best.expect("24 candidates")
}

pub fn estimate_key(score: &Score) -> Result<KeyEstimate> {
    let hist = pitch_class_histogram(score);
    if hist.iter().all(|&h| h == 0.0) {
        return Err(Error::invalid("cannot estimate the key of a score without pitched notes"));
    }
    Ok(estimate_key_from_histogram(&hist))
}

/// Semitone shift taking `tonic` to C, in `[-6, +5]`.
pub fn tonic_shift(tonic: u8) -> i32 {
    (-(tonic as i32) + 6).rem_euclid(12) - 6
}

/// Transpose so the tonic becomes C; the mode is unchanged.
///
/// Pitches pushed outside 0-127 are folded back by octaves (with a warning).
pub fn normalize_key(score: &Score, key: &KeyEstimate) -> Score {
    let shift = tonic_shift(key.tonic);
    score.map_pitches(|p| {
        let mut q = p as i32 + shift;
        if !(0..=127).contains(&q) {
            while q < 0 {
                q += 12;
            }
            while q > 127 {
                q -= 12;
            }
            log::warn!("pitch {p} shifted by {shift} leaves MIDI range; folded to {q}");
        }
        q as u8
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::kern::parse_kern;

    fn scale(offset: u8) -> Score {
        let steps = [0u8, 2, 4, 5, 7, 9, 11, 12];
        let names = ["c", "d", "e", "f", "g", "a", "b", "cc"];
        // Build via kern for C, transpose numerically otherwise.
        let text: String = std::iter::once("**kern\n".to_string())
            .chain(names.iter().map(|n| format!("4{n}\n")))
            .chain(std::iter::once("*-\n".to_string()))
            .collect();
        let s = parse_kern(&text).unwrap();
        assert_eq!(s.pitched_events().map(|(p, _)| p - 60).collect::<Vec<_>>(), steps);
        s.map_pitches(|p| p + offset)
    }

    #[test]
    fn c_major_scale() {
        let k = estimate_key(&scale(0)).unwrap();
        assert_eq!((k.tonic, k.mode), (0, Mode::Major));
    }

    #[test]
    fn transposed_scale_follows() {
        let k = estimate_key(&scale(7)).unwrap();
        assert_eq!((k.tonic, k.mode), (7, Mode::Major));
    }

    #[test]
    fn repeated_c_resolves_to_tonic_zero() {
        let s = parse_kern("**kern\n4c\n4c\n4C\n*-\n").unwrap();
        assert_eq!(estimate_key(&s).unwrap().tonic, 0);
    }

    #[test]
    fn all_rests_is_an_error() {
        let s = parse_kern("**kern\n4r\n*-\n").unwrap();
        assert!(estimate_key(&s).is_err());
    }

    #[test]
    fn shift_formula() {
        assert_eq!(tonic_shift(0), 0);
        assert_eq!(tonic_shift(7), 5);
        assert_eq!(tonic_shift(6), -6);
        assert_eq!(tonic_shift(5), -5);
        assert_eq!(tonic_shift(11), 1);
    }

    #[test]
    fn normalize_is_idempotent_and_lands_on_c() {
        for t in 0..12 {
            let s = scale(t);
            let k = estimate_key(&s).unwrap();
            let n = normalize_key(&s, &k);
            let k2 = estimate_key(&n).unwrap();
            assert_eq!(k2.tonic, 0, "offset {t}");
            assert_eq!(k2.mode, k.mode);
            assert_eq!(normalize_key(&n, &k2), n);
        }
    }

    #[test]
    fn out_of_range_pitches_fold_by_octave() {
        let s = parse_kern("**kern\n4cccccc\n*-\n").unwrap(); // MIDI 120
        let n = normalize_key(&s, &KeyEstimate { tonic: 1, mode: Mode::Major, score: 0.0 });
        assert_eq!(n.pitched_events().next().unwrap().0, 119);
        let high = s.map_pitches(|_| 126);
        let n = normalize_key(&high, &KeyEstimate { tonic: 9, mode: Mode::Major, score: 0.0 });
        assert_eq!(n.pitched_events().next().unwrap().0, 117);
    }
}
