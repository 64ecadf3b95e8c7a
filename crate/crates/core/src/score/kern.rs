//! Reader for a strict subset of Humdrum `**kern`.
//!
//! One tab-separated spine per part. Supported: duration digits (`1 2 4 8 16`,
//! plus `0` breve and `32`) with dots, pitch letters in kern octave spelling,
//! `#`/`-` accidentals, rests, barlines, null tokens, `*M` meters and the
//! `*-` terminator. Beaming, stem, tie and phrase marks are ignored. Every
//! other interpretation or unsupported token is skipped with one warning per
//! line; malformed notes and ragged rows are errors.

use num_rational::Rational64;

use super::model::{Measure, NoteEvent, Part, Quarters, Score};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Spine {
    Kern,
    Other,
}

/// Marks that carry no duration or pitch information.
const DECORATIONS: &[char] = &[
    '[', ']', '_', '(', ')', '{', '}', 'L', 'J', 'K', 'k', '/', '\\', ';', '\'', '`', '~', '^', 'x', 'X', 'y', 'n', '&',
    '<', '>', 'v', 'V', 'u', 'U', 'o', 'O', 't', 'T', 'w', 'W', 'M', 'm', 'S', 's', '$', ':', '|', 'Z', 'z', 'N',
];

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parse kern text, logging warnings.
pub fn parse_kern(text: &str) -> Result<Score> {
    let (score, warnings) = parse_kern_with_warnings(text)?;
    for w in &warnings {
        log::warn!("kern line {}: {}", w.line, w.message);
    }
    Ok(score)
}

/// Parse kern text; every skipped construct yields exactly one warning for its line.
pub fn parse_kern_with_warnings(text: &str) -> Result<(Score, Vec<ParseWarning>)> {
    Parser::default().run(text)
}

#[derive(Default)]
struct Parser {
    spines: Option<Vec<Spine>>,
    /// Index into `spines` of each part.
    kern_columns: Vec<usize>,
    parts: Vec<Part>,
    current: Vec<Measure>,
    cursors: Vec<Quarters>,
    measure_lengths: Vec<Quarters>,
    meter: Option<Quarters>,
    terminated: bool,
    warnings: Vec<ParseWarning>,
}

impl Parser {
    fn run(mut self, text: &str) -> Result<(Score, Vec<ParseWarning>)> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim_end_matches('\r');
            if self.terminated || raw.trim().is_empty() || raw.starts_with('!') {
                continue;
            }
            let tokens: Vec<&str> = raw.split('\t').collect();
            if raw.starts_with("**") {
                self.header(line, &tokens)?;
                continue;
            }
            let Some(spines) = &self.spines else {
                return Err(err(line, "data before the **kern header"));
            };
            if tokens.len() != spines.len() {
                return Err(err(
                    line,
                    format!("expected {} spines, found {}", spines.len(), tokens.len()),
                ));
            }
            if raw.starts_with('*') {
                self.interpretation(line, &tokens)?;
            } else if raw.starts_with('=') {
                if let Some(bad) = tokens.iter().find(|t| !t.starts_with('=')) {
                    return Err(err(line, format!("barline row has non-barline token {bad:?}")));
                }
                self.close_measure();
            } else {
                self.data(line, &tokens)?;
            }
        }
        if self.spines.is_none() {
            return Err(err(0, "no **kern header"));
        }
        self.close_measure();
        let score = Score {
            parts: self.parts,
            measure_lengths: self.measure_lengths,
        };
        Ok((score, self.warnings))
    }

    fn warn(&mut self, line: usize, message: String) {
        self.warnings.push(ParseWarning { line, message });
    }

    fn header(&mut self, line: usize, tokens: &[&str]) -> Result<()> {
        if self.spines.is_some() {
            return Err(err(line, "repeated exclusive interpretation"));
        }
        if let Some(bad) = tokens.iter().find(|t| !t.starts_with("**")) {
            return Err(err(line, format!("malformed header token {bad:?}")));
        }
        let spines: Vec<Spine> = tokens
            .iter()
            .map(|&t| if t == "**kern" { Spine::Kern } else { Spine::Other })
            .collect();
        self.kern_columns = spines
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Spine::Kern)
            .map(|(i, _)| i)
            .collect();
        if self.kern_columns.is_empty() {
            return Err(err(line, "no **kern spines"));
        }
        let others: Vec<&str> = tokens.iter().copied().filter(|&t| t != "**kern").collect();
        if !others.is_empty() {
            self.warn(line, format!("ignoring non-kern spines {others:?}"));
        }
        let n = self.kern_columns.len();
        self.parts = vec![Part::default(); n];
        self.current = vec![Measure::default(); n];
        self.cursors = vec![Rational64::from_integer(0); n];
        self.spines = Some(spines);
        Ok(())
    }

    fn interpretation(&mut self, line: usize, tokens: &[&str]) -> Result<()> {
        let mut skipped = Vec::new();
        let mut terminators = 0;
        for &t in tokens {
            match t {
                "*" => {}
                "*-" => terminators += 1,
                "*^" | "*v" | "*+" | "*x" => {
                    return Err(err(line, format!("spine manipulation {t:?} is not supported")))
                }
                _ if t.starts_with("*M") && parse_meter(&t[2..]).is_some() => {
                    self.meter = parse_meter(&t[2..]);
                }
                _ => skipped.push(t),
            }
        }
        if terminators == tokens.len() {
            self.terminated = true;
        } else if terminators > 0 {
            return Err(err(line, "partial spine termination"));
        }
        if !skipped.is_empty() {
            self.warn(line, format!("skipping interpretations {skipped:?}"));
        }
        Ok(())
    }

    fn data(&mut self, line: usize, tokens: &[&str]) -> Result<()> {
        let mut notes = Vec::new();
        for &col in &self.kern_columns {
            notes.push(tokens[col]);
        }
        let mut skipped = Vec::new();
        for (part, token) in notes.into_iter().enumerate() {
            if token == "." {
                continue;
            }
            let mut subtokens = token.split(' ').filter(|s| !s.is_empty());
            let first = subtokens.next().ok_or_else(|| err(line, "empty token"))?;
            if subtokens.next().is_some() {
                skipped.push(format!("chord {token:?} (kept first note)"));
            }
            match parse_note(first).map_err(|m| err(line, format!("{m} in token {token:?}")))? {
                Some(note) => {
                    let onset = self.cursors[part];
                    self.current[part].events.push(NoteEvent {
                        onset,
                        duration: note.0,
                        pitch: note.1,
                    });
                    self.cursors[part] = onset + note.0;
                }
                None => skipped.push(format!("grace note {token:?}")),
            }
        }
        if !skipped.is_empty() {
            self.warn(line, format!("skipping {}", skipped.join(", ")));
        }
        Ok(())
    }

    fn close_measure(&mut self) {
        if self.current.iter().all(|m| m.events.is_empty()) {
            return;
        }
        let content = self.cursors.iter().copied().max().unwrap_or_default();
        let length = match self.meter {
            Some(m) if m >= content => m,
            _ => content,
        };
        for (part, m) in self.parts.iter_mut().zip(self.current.iter_mut()) {
            part.measures.push(std::mem::take(m));
        }
        self.cursors.iter_mut().for_each(|c| *c = Rational64::from_integer(0));
        self.measure_lengths.push(length);
    }
}

/// `"3/4"` to a length in quarters.
fn parse_meter(s: &str) -> Option<Quarters> {
    let (num, den) = s.split_once('/')?;
    let num: i64 = num.parse().ok()?;
    let den: i64 = den.parse().ok()?;
    (num > 0 && den > 0).then(|| Rational64::new(4 * num, den))
}

/// `Ok(None)` for grace notes, which are skipped.
fn parse_note(token: &str) -> std::result::Result<Option<(Quarters, Option<u8>)>, String> {
    if token.contains(['q', 'Q']) {
        return Ok(None);
    }
    let core: String = token.chars().filter(|c| !DECORATIONS.contains(c)).collect();
    let digits: String = core.chars().take_while(|c| c.is_ascii_digit()).collect();
    let mut base = match digits.as_str() {
        "0" => Rational64::from_integer(8),
        "1" | "2" | "4" | "8" | "16" | "32" => Rational64::new(4, digits.parse().unwrap()),
        "" => return Err("missing duration".into()),
        other => return Err(format!("unsupported duration {other}")),
    };
    let rest = &core[digits.len()..];
    let dots = rest.chars().take_while(|&c| c == '.').count();
    let mut add = base;
    for _ in 0..dots {
        add /= 2;
        base += add;
    }
    let rest = &rest[dots..];
    let letters: String = rest.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    let accidentals = &rest[letters.len()..];
    if letters.chars().all(|c| c == 'r') && !letters.is_empty() {
        if !accidentals.is_empty() {
            return Err("accidental on a rest".into());
        }
        return Ok(Some((base, None)));
    }
    let first = letters.chars().next().ok_or("missing pitch")?;
    if !letters.chars().all(|c| c == first) || !"abcdefgABCDEFG".contains(first) {
        return Err(format!("malformed pitch {letters:?}"));
    }
    let pc: i32 = match first.to_ascii_lowercase() {
        'c' => 0,
        'd' => 2,
        'e' => 4,
        'f' => 5,
        'g' => 7,
        'a' => 9,
        _ => 11,
    };
    let reps = letters.len() as i32;
    let octave = if first.is_ascii_lowercase() { 3 + reps } else { 4 - reps };
    let alter: i32 = if accidentals.chars().all(|c| c == '#') {
        accidentals.len() as i32
    } else if accidentals.chars().all(|c| c == '-') {
        -(accidentals.len() as i32)
    } else {
        return Err(format!("malformed accidentals {accidentals:?}"));
    };
    let midi = 12 * (octave + 1) + pc + alter;
    let midi = u8::try_from(midi)
        .ok()
        .filter(|&m| m <= 127)
        .ok_or_else(|| format!("pitch {midi} outside MIDI range"))?;
    Ok(Some((base, Some(midi))))
}
