//! Tone vocabulary and binary piano-roll measures.

use std::collections::BTreeSet;

use num_rational::Rational64;
use recomp_tensor::{Scalar, Tensor};

use super::model::{Quarters, Score};
use crate::error::{Error, Result};

/// Quantized time slots per measure, regardless of meter.
pub const TIMESTEPS: usize = 16;

/// Sorted pitches of a key-normalized corpus, padded to a multiple of 4 rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToneVocab {
    pitches: Vec<u8>,
    rows: [Option<u16>; 128],
}

impl ToneVocab {
    pub fn from_pitches(pitches: impl IntoIterator<Item = u8>) -> Self {
        let pitches: Vec<u8> = pitches.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let mut rows = [None; 128];
        for (i, &p) in pitches.iter().enumerate() {
            rows[p as usize & 127] = Some(i as u16);
        }
        Self { pitches, rows }
    }

    pub fn pitches(&self) -> &[u8] {
        &self.pitches
    }

    pub fn raw_size(&self) -> usize {
        self.pitches.len()
    }

    /// Rows in a roll: `raw_size` rounded up to a multiple of 4.
    pub fn padded_size(&self) -> usize {
        self.pitches.len().div_ceil(4) * 4
    }

    pub fn row(&self, pitch: u8) -> Option<usize> {
        self.rows.get(pitch as usize).copied().flatten().map(usize::from)
    }

    pub fn pitch(&self, row: usize) -> Option<u8> {
        self.pitches.get(row).copied()
    }

    /// CRC32 of the pitch list; embedded in checkpoints.
    pub fn fingerprint(&self) -> u32 {
        crc32fast::hash(&self.pitches)
    }
}

/// Distinct pitches over a set of (already normalized) scores.
pub fn build_tone_vocab<'a>(corpus: impl IntoIterator<Item = &'a Score>) -> Result<ToneVocab> {
    let mut seen = false;
    let mut pitches = BTreeSet::new();
    for s in corpus {
        seen = true;
        pitches.extend(s.pitched_events().map(|(p, _)| p));
    }
    if !seen {
        return Err(Error::invalid("tone vocabulary needs a nonempty corpus"));
    }
    Ok(ToneVocab::from_pitches(pitches))
}

/// One measure: `tones x 16 x voices` cells in `{0, 1}`, tone row 0 lowest.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PianoRollMeasure {
    tones: usize,
    voices: usize,
    cells: Vec<u8>,
}

impl PianoRollMeasure {
    pub fn empty(tones: usize, voices: usize) -> Self {
        Self {
            tones,
            voices,
            cells: vec![0; tones * TIMESTEPS * voices],
        }
    }

    pub fn tones(&self) -> usize {
        self.tones
    }

    pub fn voices(&self) -> usize {
        self.voices
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.tones, TIMESTEPS, self.voices]
    }

    fn index(&self, row: usize, slot: usize, voice: usize) -> usize {
        assert!(row < self.tones && slot < TIMESTEPS && voice < self.voices, "roll index out of range");
        (row * TIMESTEPS + slot) * self.voices + voice
    }

    pub fn get(&self, row: usize, slot: usize, voice: usize) -> bool {
        self.cells[self.index(row, slot, voice)] != 0
    }

    pub fn set(&mut self, row: usize, slot: usize, voice: usize, on: bool) {
        let i = self.index(row, slot, voice);
        self.cells[i] = on as u8;
    }

    /// Cells in `[row][slot][voice]` order.
    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn from_cells(tones: usize, voices: usize, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != tones * TIMESTEPS * voices || cells.iter().any(|&c| c > 1) {
            return Err(Error::invalid("roll cells must be tones*16*voices values in {0,1}"));
        }
        Ok(Self { tones, voices, cells })
    }

    /// Threshold `[tones, 16, voices]` probabilities at `threshold` (strictly above is on).
    pub fn from_probabilities<T: Scalar>(probs: &[T], tones: usize, voices: usize, threshold: f64) -> Result<Self> {
        let t = T::lit(threshold);
        Self::from_cells(tones, voices, probs.iter().map(|&p| (p > t) as u8).collect())
    }

    pub fn active(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    pub fn hamming(&self, other: &Self) -> usize {
        assert_eq!(self.shape(), other.shape(), "roll shapes");
        self.cells.iter().zip(&other.cells).filter(|(a, b)| a != b).count()
    }

    /// Maximal runs of active cells per `(voice, row)`.
    pub fn notes(&self) -> Vec<RollNote> {
        let mut out = Vec::new();
        for voice in 0..self.voices {
            for row in 0..self.tones {
                let mut slot = 0;
                while slot < TIMESTEPS {
                    if self.get(row, slot, voice) {
                        let start = slot;
                        while slot < TIMESTEPS && self.get(row, slot, voice) {
                            slot += 1;
                        }
                        out.push(RollNote {
                            voice,
                            row,
                            start,
                            len: slot - start,
                        });
                    } else {
                        slot += 1;
                    }
                }
            }
        }
        out.sort();
        out
    }
}

/// A merged run of cells in one measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RollNote {
    pub voice: usize,
    pub row: usize,
    pub start: usize,
    pub len: usize,
}

/// `floor(x + 1/2)`.
fn round_half_up(x: Rational64) -> i64 {
    (x + Rational64::new(1, 2)).floor().to_integer()
}

/// Slot range `[start, end)` of an event; at least one slot.
pub fn event_slots(onset: Quarters, duration: Quarters, length: Quarters) -> (usize, usize) {
    let scale = Rational64::from_integer(TIMESTEPS as i64) / length;
    let start = round_half_up(onset * scale).clamp(0, TIMESTEPS as i64 - 1) as usize;
    let end = round_half_up((onset + duration) * scale).clamp(0, TIMESTEPS as i64) as usize;
    (start, end.max(start + 1))
}

/// Quantize every measure to 16 slots; voice `v` writes channel `v`.
pub fn score_to_rolls(score: &Score, vocab: &ToneVocab, voices: usize) -> Result<Vec<PianoRollMeasure>> {
    if score.part_count() != voices {
        return Err(Error::invalid(format!(
            "score has {} parts, expected {voices}",
            score.part_count()
        )));
    }
    let mut rolls = Vec::with_capacity(score.measure_count());
    for (m, &length) in score.measure_lengths.iter().enumerate() {
        let mut roll = PianoRollMeasure::empty(vocab.padded_size(), voices);
        for (voice, part) in score.parts.iter().enumerate() {
            for e in &part.measures[m].events {
                let Some(pitch) = e.pitch else { continue };
                let row = vocab.row(pitch).ok_or(Error::PitchNotInVocab(pitch))?;
                let (start, end) = event_slots(e.onset, e.duration, length);
                for slot in start..end {
                    roll.set(row, slot, voice, true);
                }
            }
        }
        rolls.push(roll);
    }
    Ok(rolls)
}

/// Stack measures into an `[N, tones, 16, voices]` tensor.
pub fn rolls_to_tensor<T: Scalar>(rolls: &[PianoRollMeasure]) -> Result<Tensor<T>> {
    let first = rolls.first().ok_or_else(|| Error::invalid("no rolls"))?;
    let mut data = Vec::with_capacity(rolls.len() * first.cells.len());
    for r in rolls {
        if r.shape() != first.shape() {
            return Err(Error::invalid("rolls of different shapes in one batch"));
        }
        data.extend(r.cells.iter().map(|&c| if c != 0 { T::one() } else { T::zero() }));
    }
    let [t, s, v] = first.shape();
    Ok(Tensor::new(vec![rolls.len(), t, s, v], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::kern::parse_kern;

    fn q(n: i64, d: i64) -> Quarters {
        Rational64::new(n, d)
    }

    #[test]
    fn vocab_padding() {
        let v = ToneVocab::from_pitches(30..79u8);
        assert_eq!((v.raw_size(), v.padded_size()), (49, 52));
        let one = ToneVocab::from_pitches([60]);
        assert_eq!((one.raw_size(), one.padded_size()), (1, 4));
        assert_eq!(ToneVocab::from_pitches([60, 60, 62]), ToneVocab::from_pitches([62, 60]));
        assert_eq!(one.row(60), Some(0));
        assert_eq!(one.row(61), None);
    }

    #[test]
    fn slot_rounding() {
        assert_eq!(event_slots(q(0, 1), q(1, 1), q(4, 1)), (0, 4));
        assert_eq!(event_slots(q(0, 1), q(4, 1), q(4, 1)), (0, 16));
        // 16 * 1/3 = 5.33 -> 5
        assert_eq!(event_slots(q(0, 1), q(1, 1), q(3, 1)), (0, 5));
        // 16 * 2/3 = 10.67 -> 11
        assert_eq!(event_slots(q(1, 1), q(1, 1), q(3, 1)), (5, 11));
        // tiny note still gets one slot
        assert_eq!(event_slots(q(0, 1), q(1, 64), q(4, 1)), (0, 1));
        // half-way rounds up
        assert_eq!(event_slots(q(1, 8), q(1, 8), q(4, 1)), (1, 1 + 1));
    }

    #[test]
    fn quarter_c_fills_four_slots() {
        let s = parse_kern("**kern\n*M4/4\n4c\n4r\n2r\n*-\n").unwrap();
        let v = ToneVocab::from_pitches([55, 60]);
        let r = &score_to_rolls(&s, &v, 1).unwrap()[0];
        assert_eq!(r.shape(), [4, 16, 1]);
        let on: Vec<usize> = (0..16).filter(|&t| r.get(1, t, 0)).collect();
        assert_eq!(on, vec![0, 1, 2, 3]);
        assert_eq!(r.active(), 4);
    }

    #[test]
    fn missing_pitch_is_named() {
        let s = parse_kern("**kern\n1d\n*-\n").unwrap();
        let e = score_to_rolls(&s, &ToneVocab::from_pitches([60]), 1).unwrap_err();
        assert!(matches!(e, Error::PitchNotInVocab(62)));
    }

    #[test]
    fn voice_count_is_enforced() {
        let s = parse_kern("**kern\n1c\n*-\n").unwrap();
        assert!(score_to_rolls(&s, &ToneVocab::from_pitches([60]), 4).is_err());
    }

    #[test]
    fn notes_merge_runs() {
        let mut r = PianoRollMeasure::empty(4, 2);
        for t in 2..6 {
            r.set(1, t, 1, true);
        }
        r.set(1, 8, 1, true);
        assert_eq!(
            r.notes(),
            vec![
                RollNote { voice: 1, row: 1, start: 2, len: 4 },
                RollNote { voice: 1, row: 1, start: 8, len: 1 }
            ]
        );
    }
}
