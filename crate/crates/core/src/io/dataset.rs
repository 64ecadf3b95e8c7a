//! Corpus of labeled piano-roll measures with a contiguous holdout span.

use std::ops::Range;
use std::path::Path;

use super::{read_file, write_atomic, Dec, Enc};
use crate::error::{Error, Result};
use crate::harmony::{build_chord_vocab, label_measure, make_triplets, roll_pitches, ChordTriplet, ChordVocab};
use crate::score::{
    build_tone_vocab, estimate_key, normalize_key, parse_kern, score_to_rolls, Mode, PianoRollMeasure, Score,
    ToneVocab, TIMESTEPS,
};

const MAGIC: &[u8; 4] = b"RCDS";
pub const VERSION: u32 = 1;
/// Parts a piece needs to be kept.
pub const VOICES: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PieceInfo {
    pub name: String,
    pub tonic: u8,
    pub mode: Mode,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeasureRecord {
    pub piece: usize,
    pub chord: usize,
    pub roll: PianoRollMeasure,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub voices: usize,
    pub tones: ToneVocab,
    pub chords: ChordVocab,
    pub pieces: Vec<PieceInfo>,
    /// Corpus order: pieces in input order, measures in score order.
    pub measures: Vec<MeasureRecord>,
    pub holdout: Range<usize>,
}

impl Dataset {
    /// Parse, keep four-part pieces, normalize keys, build vocabularies and label every
    /// measure. The last `holdout` measures are held out.
    pub fn build(inputs: &[(String, String)], holdout: usize) -> Result<Self> {
        let mut kept: Vec<(PieceInfo, Score)> = Vec::new();
        for (name, text) in inputs {
            let score = match parse_kern(text) {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("{name}: skipped, {e}");
                    continue;
                }
            };
            if score.part_count() != VOICES {
                log::warn!("{name}: skipped, {} parts", score.part_count());
                continue;
            }
            let key = match estimate_key(&score) {
                Ok(k) => k,
                Err(e) => {
                    log::warn!("{name}: skipped, {e}");
                    continue;
                }
            };
            let info = PieceInfo {
                name: name.clone(),
                tonic: key.tonic,
                mode: key.mode,
            };
            kept.push((info, normalize_key(&score, &key)));
        }
        if kept.is_empty() {
            return Err(Error::invalid("no four-part pieces in the input"));
        }
        let tones = build_tone_vocab(kept.iter().map(|(_, s)| s))?;

        let mut measures = Vec::new();
        let mut labels = Vec::new();
        for (piece, (info, score)) in kept.iter().enumerate() {
            for roll in score_to_rolls(score, &tones, VOICES)? {
                labels.push(label_measure(&roll_pitches(&roll, &tones), info.mode).to_string());
                measures.push(MeasureRecord { piece, chord: 0, roll });
            }
        }
        let chords = build_chord_vocab(labels.iter().map(String::as_str));
        for (m, l) in measures.iter_mut().zip(&labels) {
            m.chord = chords.id(l).expect("label in its own vocabulary");
        }
        let total = measures.len();
        if holdout >= total {
            return Err(Error::invalid(format!(
                "holdout of {holdout} measures leaves nothing to train on ({total} measures)"
            )));
        }
        Ok(Self {
            voices: VOICES,
            tones,
            chords,
            pieces: kept.into_iter().map(|(i, _)| i).collect(),
            measures,
            holdout: total - holdout..total,
        })
    }

    /// `*.krn` files of a directory in file-name order.
    pub fn build_from_dir(dir: &Path, holdout: usize) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "krn"))
            .collect();
        paths.sort();
        let mut inputs = Vec::with_capacity(paths.len());
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            inputs.push((name, text));
        }
        Self::build(&inputs, holdout)
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.tones.padded_size()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|i| !self.holdout.contains(i)).collect()
    }

    pub fn rolls(&self) -> Vec<PianoRollMeasure> {
        self.measures.iter().map(|m| m.roll.clone()).collect()
    }

    /// Previous/current/next chord per measure; borders repeat within each piece.
    pub fn triplets(&self) -> Vec<ChordTriplet> {
        let mut out = Vec::with_capacity(self.len());
        let mut start = 0;
        while start < self.len() {
            let piece = self.measures[start].piece;
            let end = (start..self.len())
                .find(|&i| self.measures[i].piece != piece)
                .unwrap_or(self.len());
            let ids: Vec<usize> = self.measures[start..end].iter().map(|m| m.chord).collect();
            out.extend(
                make_triplets(&ids)
                    .expect("pieces have measures")
                    .into_iter()
                    .map(|[p, c, n]| ChordTriplet::new(p, c, n)),
            );
            start = end;
        }
        out
    }

    /// Chord labels of the held-out span, in order.
    pub fn holdout_labels(&self) -> Vec<&str> {
        self.measures[self.holdout.clone()]
            .iter()
            .map(|m| self.chords.label(m.chord).expect("chord id in vocabulary"))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Enc::new(MAGIC, VERSION);
        e.len32(self.voices);
        e.len32(TIMESTEPS);
        e.len32(self.tones.raw_size());
        e.len32(self.tones.padded_size());
        e.len32(self.chords.len());
        e.len32(self.measures.len());
        e.len32(self.holdout.start);
        e.len32(self.holdout.len());
        e.bytes(self.tones.pitches());
        for l in self.chords.labels() {
            e.str(l);
        }
        e.len32(self.pieces.len());
        for p in &self.pieces {
            e.str(&p.name);
            e.u8(match p.mode {
                Mode::Major => 0,
                Mode::Minor => 1,
            });
            e.u8(p.tonic);
        }
        for m in &self.measures {
            e.len32(m.piece);
            e.len32(m.chord);
            e.bytes(&pack_bits(m.roll.cells()));
        }
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = Dec::open(bytes, MAGIC, VERSION)?;
        let voices = d.len()?;
        let steps = d.len()?;
        if steps != TIMESTEPS || voices == 0 {
            return Err(d.corrupt(format!("unsupported layout: {voices} voices, {steps} timesteps")));
        }
        let raw = d.len()?;
        let padded = d.len()?;
        let n_chords = d.len()?;
        let n_measures = d.len()?;
        let hold_start = d.len()?;
        let hold_len = d.len()?;
        let tones = ToneVocab::from_pitches(d.take(raw)?.iter().copied());
        if tones.raw_size() != raw || tones.padded_size() != padded {
            return Err(d.corrupt("tone vocabulary is not sorted and distinct"));
        }
        let mut chords = ChordVocab::new();
        for _ in 0..n_chords {
            let l = d.str()?;
            if chords.insert(&l) != chords.len() - 1 {
                return Err(d.corrupt(format!("duplicate chord label {l}")));
            }
        }
        let n_pieces = d.len()?;
        let mut pieces = Vec::new();
        for _ in 0..n_pieces {
            let name = d.str()?;
            let mode = match d.u8()? {
                0 => Mode::Major,
                1 => Mode::Minor,
                m => return Err(d.corrupt(format!("bad mode {m}"))),
            };
            let tonic = d.u8()?;
            pieces.push(PieceInfo { name, tonic, mode });
        }
        let cells = padded * TIMESTEPS * voices;
        let mut measures = Vec::with_capacity(n_measures);
        for _ in 0..n_measures {
            let piece = d.len()?;
            let chord = d.len()?;
            if piece >= n_pieces || chord >= n_chords {
                return Err(d.corrupt("measure references an unknown piece or chord"));
            }
            let bits = unpack_bits(d.take(cells.div_ceil(8))?, cells);
            let roll = PianoRollMeasure::from_cells(padded, voices, bits)?;
            measures.push(MeasureRecord { piece, chord, roll });
        }
        if hold_start + hold_len != n_measures || hold_len >= n_measures {
            return Err(d.corrupt("holdout span must be a proper tail of the corpus"));
        }
        d.end()?;
        Ok(Self {
            voices,
            tones,
            chords,
            pieces,
            measures,
            holdout: hold_start..n_measures,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// LSB-first.
fn pack_bits(cells: &[u8]) -> Vec<u8> {
    cells
        .chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b & 1) << i)))
        .collect()
}

fn unpack_bits(bytes: &[u8], n: usize) -> Vec<u8> {
    (0..n).map(|i| (bytes[i / 8] >> (i % 8)) & 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_corpus;

    fn inputs(pieces: usize, measures: usize) -> Vec<(String, String)> {
        synth_corpus(5, pieces, measures)
            .into_iter()
            .map(|p| (p.name, p.kern))
            .collect()
    }

    #[test]
    fn holdout_split_arithmetic() {
        let ds = Dataset::build(&inputs(2, 4), 2).unwrap();
        assert_eq!(ds.len(), 8);
        assert_eq!(ds.train_indices(), (0..6).collect::<Vec<_>>());
        assert_eq!(ds.holdout, 6..8);
        assert_eq!(ds.holdout_labels().len(), 2);
    }

    #[test]
    fn holdout_must_leave_training_data() {
        assert!(Dataset::build(&inputs(1, 4), 4).is_err());
    }

    #[test]
    fn non_four_part_pieces_are_dropped() {
        let mut inp = inputs(1, 3);
        inp.push(("solo".into(), "**kern\n4c\n*-\n".into()));
        let ds = Dataset::build(&inp, 0).unwrap();
        assert_eq!(ds.pieces.len(), 1);
        assert!(Dataset::build(&inp[1..], 0).is_err());
    }

    #[test]
    fn bytes_round_trip_and_are_deterministic() {
        let a = Dataset::build(&inputs(3, 5), 3).unwrap();
        let b = Dataset::build(&inputs(3, 5), 3).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(Dataset::from_bytes(&a.to_bytes()).unwrap(), a);
    }

    #[test]
    fn triplets_stay_inside_pieces() {
        let ds = Dataset::build(&inputs(2, 4), 0).unwrap();
        let t = ds.triplets();
        assert_eq!(t.len(), 8);
        assert_eq!(t[4].prev, ds.measures[4].chord);
        assert_eq!(t[3].next, ds.measures[3].chord);
    }

    #[test]
    fn bit_packing() {
        let cells = vec![1, 0, 1, 1, 0, 0, 0, 0, 1];
        let packed = pack_bits(&cells);
        assert_eq!(packed, vec![0b0000_1101, 0b1]);
        assert_eq!(unpack_bits(&packed, cells.len()), cells);
    }
}
