//! Roman-numeral chord labels and previous/current/next conditioning triplets.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::score::{Mode, PianoRollMeasure, ToneVocab, TIMESTEPS};

pub const REST: &str = "REST";

const MAJOR_SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const MINOR_SCALE: [u8; 7] = [0, 2, 3, 5, 7, 8, 10];
const NUMERALS: [&str; 7] = ["I", "II", "III", "IV", "V", "VI", "VII"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quality {
    Major,
    Minor,
    Diminished,
    Augmented,
}

/// A diatonic triad or seventh chord with its inversion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ChordLabel {
    /// Scale degree 1..=7.
    pub degree: u8,
    /// Quality of the underlying triad.
    pub quality: Quality,
    pub seventh: bool,
    /// 0 root, 1 third, 2 fifth, 3 seventh in the bass.
    pub inversion: u8,
}

impl ChordLabel {
    pub fn figure(&self) -> &'static str {
        match (self.seventh, self.inversion) {
            (false, 0) => "",
            (false, 1) => "6",
            (false, _) => "64",
            (true, 0) => "7",
            (true, 1) => "65",
            (true, 2) => "43",
            (true, _) => "42",
        }
    }
}

impl fmt::Display for ChordLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let numeral = NUMERALS[usize::from(self.degree - 1)];
        match self.quality {
            Quality::Major => write!(f, "{numeral}")?,
            Quality::Minor => write!(f, "{}", numeral.to_lowercase())?,
            Quality::Diminished => write!(f, "{}o", numeral.to_lowercase())?,
            Quality::Augmented => write!(f, "{numeral}+")?,
        }
        f.write_str(self.figure())
    }
}

/// Label of one measure: a chord, or the rest sentinel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Harmony {
    Rest,
    Chord(ChordLabel),
}

impl fmt::Display for Harmony {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Harmony::Rest => f.write_str(REST),
            Harmony::Chord(c) => c.fmt(f),
        }
    }
}

/// One sounding cell: a pitch active during a slot (any voice).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotPitch {
    pub slot: usize,
    pub pitch: u8,
}

/// Active cells of a roll in pitch terms; padded rows are ignored.
pub fn roll_pitches(roll: &PianoRollMeasure, vocab: &ToneVocab) -> Vec<SlotPitch> {
    let mut out = Vec::new();
    for row in 0..roll.tones().min(vocab.raw_size()) {
        let pitch = vocab.pitch(row).expect("row within raw vocabulary");
        for slot in 0..TIMESTEPS {
            for v in 0..roll.voices() {
                if roll.get(row, slot, v) {
                    out.push(SlotPitch { slot, pitch });
                }
            }
        }
    }
    out
}

struct Template {
    degree: u8,
    seventh: bool,
    /// Root, third, fifth and (for sevenths) seventh pitch classes.
    tones: Vec<u8>,
}

fn templates(mode: Mode) -> Vec<Template> {
    let scale = match mode {
        Mode::Major => MAJOR_SCALE,
        Mode::Minor => MINOR_SCALE,
    };
    let mut out = Vec::with_capacity(14);
    for seventh in [false, true] {
        for d in 0..7 {
            let n = if seventh { 4 } else { 3 };
            out.push(Template {
                degree: d as u8 + 1,
                seventh,
                tones: (0..n).map(|k| scale[(d + 2 * k) % 7]).collect(),
            });
        }
    }
    out
}

fn quality(tones: &[u8]) -> Quality {
    let third = (tones[1] + 12 - tones[0]) % 12;
    let fifth = (tones[2] + 12 - tones[0]) % 12;
    match (third, fifth) {
        (4, 8) => Quality::Augmented,
        (4, _) => Quality::Major,
        (3, 6) => Quality::Diminished,
        _ => Quality::Minor,
    }
}

/// Best diatonic chord for a measure of a key-normalized piece.
///
/// Each template scores the fraction of its pitch classes present minus half
/// the duration mass falling outside it. Ties go to the triad, then the lower
/// degree. The inversion comes from the lowest pitch at the first sounding slot.
pub fn label_measure(cells: &[SlotPitch], mode: Mode) -> Harmony {
    let Some(first_slot) = cells.iter().map(|c| c.slot).min() else {
        return Harmony::Rest;
    };
    let mut hist = [0f64; 12];
    for c in cells {
        hist[usize::from(c.pitch % 12)] += 1.0;
    }
    let total: f64 = hist.iter().sum();

    let mut best: Option<(f64, &Template)> = None;
    let all = templates(mode);
    for t in &all {
        let present = t.tones.iter().filter(|&&pc| hist[usize::from(pc)] > 0.0).count();
        let inside: f64 = t.tones.iter().map(|&pc| hist[usize::from(pc)]).sum();
        let score = present as f64 / t.tones.len() as f64 - 0.5 * (total - inside) / total;
        // templates are already in tie-break order, so only a strict gain wins
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, t));
        }
    }
    let (_, t) = best.expect("templates are nonempty");
    let bass = cells
        .iter()
        .filter(|c| c.slot == first_slot)
        .map(|c| c.pitch)
        .min()
        .expect("first slot has a pitch");
    let inversion = t.tones.iter().position(|&pc| pc == bass % 12).unwrap_or(0) as u8;
    Harmony::Chord(ChordLabel {
        degree: t.degree,
        quality: quality(&t.tones),
        seventh: t.seventh,
        inversion,
    })
}

/// `(prev, cur, next)` per position, repeating the first and last labels at the borders.
pub fn make_triplets<T: Clone>(labels: &[T]) -> Result<Vec<[T; 3]>> {
    if labels.is_empty() {
        return Err(Error::invalid("cannot build triplets from an empty label list"));
    }
    let n = labels.len();
    Ok((0..n)
        .map(|t| {
            [
                labels[t.saturating_sub(1)].clone(),
                labels[t].clone(),
                labels[(t + 1).min(n - 1)].clone(),
            ]
        })
        .collect())
}

/// Chord-vocabulary ids of the previous, current and next measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ChordTriplet {
    pub prev: usize,
    pub cur: usize,
    pub next: usize,
}

impl ChordTriplet {
    pub fn new(prev: usize, cur: usize, next: usize) -> Self {
        Self { prev, cur, next }
    }

    pub fn ids(&self) -> [usize; 3] {
        [self.prev, self.cur, self.next]
    }
}

/// Bijection between rendered labels and ids, in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChordVocab {
    labels: Vec<String>,
    ids: HashMap<String, usize>,
}

impl ChordVocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Id of `label`, appending it if new.
    pub fn insert(&mut self, label: &str) -> usize {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        let id = self.labels.len();
        self.labels.push(label.to_string());
        self.ids.insert(label.to_string(), id);
        id
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.ids.get(label).copied()
    }

    /// Like [`id`](Self::id) but an unknown label is an error listing the vocabulary.
    pub fn require(&self, label: &str) -> Result<usize> {
        self.id(label).ok_or_else(|| Error::UnknownChord {
            label: label.to_string(),
            vocab: self.labels.join(","),
        })
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One `label<TAB>id` line per entry.
    pub fn to_text(&self) -> String {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{l}\t{i}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut v = Self::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let parse_err = |message: &str| Error::Parse {
                line: i + 1,
                message: message.to_string(),
            };
            let (label, id) = line.split_once('\t').ok_or_else(|| parse_err("expected label<TAB>id"))?;
            let id: usize = id.trim().parse().map_err(|_| parse_err("id is not an integer"))?;
            if label.is_empty() || id != v.len() || v.id(label).is_some() {
                return Err(parse_err("ids must be dense, ordered and unique"));
            }
            v.insert(label);
        }
        Ok(v)
    }

    /// CRC32 of the text form; embedded in checkpoints.
    pub fn fingerprint(&self) -> u32 {
        crc32fast::hash(self.to_text().as_bytes())
    }
}

pub fn build_chord_vocab<'a>(labels: impl IntoIterator<Item = &'a str>) -> ChordVocab {
    let mut v = ChordVocab::new();
    for l in labels {
        v.insert(l);
    }
    v
}
