//! Score parsing, key normalization and piano-roll conversion.

pub mod kern;
pub mod key;
pub mod model;
pub mod roll;

pub use kern::{parse_kern, parse_kern_with_warnings, ParseWarning};
pub use key::{estimate_key, normalize_key, tonic_shift, KeyEstimate, Mode};
pub use model::{Measure, NoteEvent, Part, Quarters, Score};
pub use roll::{build_tone_vocab, score_to_rolls, PianoRollMeasure, RollNote, ToneVocab, TIMESTEPS};
pub mod midi;
pub mod ppm;

pub use midi::{read_midi, roll_notes, rolls_to_midi, MidiFile, MidiNote};
pub use ppm::rolls_to_ppm;
