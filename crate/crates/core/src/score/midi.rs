//! Standard MIDI (format 0) export of piano rolls, plus a small reader.

use super::roll::{PianoRollMeasure, ToneVocab, TIMESTEPS};
use crate::error::{Error, Result};

pub const DIVISION: u16 = 480;
pub const VELOCITY: u8 = 80;
/// 120 bpm.
pub const DEFAULT_TEMPO_US: u32 = 500_000;
const TICKS_PER_SLOT: u64 = DIVISION as u64 / 4;

/// A sounding note in absolute ticks, `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MidiNote {
    pub start: u64,
    pub end: u64,
    pub channel: u8,
    pub pitch: u8,
}

/// Parsed contents of a format 0 file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MidiFile {
    pub division: u16,
    pub tempo_us: Option<u32>,
    pub notes: Vec<MidiNote>,
    pub end_tick: u64,
}

/// Merged notes of concatenated measures. Runs continue across barlines;
/// rows beyond the raw vocabulary carry no pitch and are dropped.
pub fn roll_notes(rolls: &[PianoRollMeasure], vocab: &ToneVocab) -> Vec<MidiNote> {
    let Some(first) = rolls.first() else { return Vec::new() };
    let (tones, voices) = (first.tones(), first.voices());
    let total = rolls.len() * TIMESTEPS;
    let cell = |t: usize, row: usize, v: usize| rolls[t / TIMESTEPS].get(row, t % TIMESTEPS, v);
    let mut notes = Vec::new();
    for v in 0..voices {
        for row in 0..tones {
            let Some(pitch) = vocab.pitch(row) else { continue };
            let mut t = 0;
            while t < total {
                if !cell(t, row, v) {
                    t += 1;
                    continue;
                }
                let start = t;
                while t < total && cell(t, row, v) {
                    t += 1;
                }
                notes.push(MidiNote {
                    start: start as u64 * TICKS_PER_SLOT,
                    end: t as u64 * TICKS_PER_SLOT,
                    channel: v as u8,
                    pitch,
                });
            }
        }
    }
    notes.sort();
    notes
}

fn write_vlq(out: &mut Vec<u8>, mut v: u64) {
    let mut buf = [0u8; 10];
    let mut i = buf.len() - 1;
    buf[i] = (v & 0x7f) as u8;
    v >>= 7;
    while v > 0 {
        i -= 1;
        buf[i] = 0x80 | (v & 0x7f) as u8;
        v >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Encode measures as one format 0 track, 4 slots per quarter.
pub fn rolls_to_midi(rolls: &[PianoRollMeasure], vocab: &ToneVocab, tempo_us: u32) -> Result<Vec<u8>> {
    if rolls.is_empty() {
        return Err(Error::invalid("cannot export an empty roll list"));
    }
    if rolls.iter().any(|r| r.voices() > 16 || r.shape() != rolls[0].shape()) {
        return Err(Error::invalid("rolls must share one shape with at most 16 voices"));
    }
    // (tick, is_on, channel, pitch): offs sort before ons at the same tick.
    let mut events: Vec<(u64, bool, u8, u8)> = Vec::new();
    for n in roll_notes(rolls, vocab) {
        events.push((n.start, true, n.channel, n.pitch));
        events.push((n.end, false, n.channel, n.pitch));
    }
    events.sort();

    let mut track = Vec::new();
    track.extend_from_slice(&[0x00, 0xff, 0x51, 0x03]);
    track.extend_from_slice(&tempo_us.to_be_bytes()[1..]);
    let mut now = 0;
    for (tick, on, ch, pitch) in events {
        write_vlq(&mut track, tick - now);
        now = tick;
        if on {
            track.extend_from_slice(&[0x90 | ch, pitch, VELOCITY]);
        } else {
            track.extend_from_slice(&[0x80 | ch, pitch, 0]);
        }
    }
    let end = (rolls.len() * TIMESTEPS) as u64 * TICKS_PER_SLOT;
    write_vlq(&mut track, end - now);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&DIVISION.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn corrupt(&self, detail: &str) -> Error {
        Error::Corrupt {
            offset: self.pos,
            detail: detail.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| self.corrupt("unexpected end of MIDI data"))?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn vlq(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..4 {
            let b = self.u8()?;
            v = (v << 7) | u64::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(self.corrupt("variable-length quantity longer than 4 bytes"))
    }
}

/// Read a format 0 file: tempo, notes and total length. Handles running
/// status and note-on with velocity 0 as note-off.
pub fn read_midi(bytes: &[u8]) -> Result<MidiFile> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != b"MThd" || c.u32()? != 6 {
        return Err(Error::Corrupt {
            offset: 0,
            detail: "missing MThd header".into(),
        });
    }
    let format = c.u16()?;
    let ntrks = c.u16()?;
    let division = c.u16()?;
    if format != 0 || ntrks != 1 {
        return Err(c.corrupt("only single-track format 0 files are supported"));
    }
    if c.take(4)? != b"MTrk" {
        return Err(c.corrupt("missing MTrk chunk"));
    }
    let len = c.u32()? as usize;
    let stop = c.pos + len;
    if stop > bytes.len() {
        return Err(c.corrupt("track length exceeds file"));
    }

    let mut now = 0u64;
    let mut status = 0u8;
    let mut tempo_us = None;
    let mut open: std::collections::BTreeMap<(u8, u8), u64> = Default::default();
    let mut notes = Vec::new();
    while c.pos < stop {
        now += c.vlq()?;
        let mut b = c.u8()?;
        if b == 0xff {
            let kind = c.u8()?;
            let n = c.vlq()? as usize;
            let data = c.take(n)?;
            match kind {
                0x51 if n == 3 => tempo_us = Some(u32::from_be_bytes([0, data[0], data[1], data[2]])),
                0x2f => break,
                _ => {}
            }
            continue;
        }
        if b == 0xf0 || b == 0xf7 {
            let n = c.vlq()? as usize;
            c.take(n)?;
            continue;
        }
        let first = if b & 0x80 != 0 {
            status = b;
            c.u8()?
        } else {
            if status == 0 {
                return Err(c.corrupt("running status without a prior status byte"));
            }
            let d = b;
            b = status;
            d
        };
        let ch = b & 0x0f;
        match b & 0xf0 {
            0x80 | 0x90 => {
                let vel = c.u8()?;
                let key = (ch, first);
                if b & 0xf0 == 0x90 && vel > 0 {
                    open.insert(key, now);
                } else if let Some(start) = open.remove(&key) {
                    notes.push(MidiNote {
                        start,
                        end: now,
                        channel: ch,
                        pitch: first,
                    });
                }
            }
            0xa0 | 0xb0 | 0xe0 => {
                c.u8()?;
            }
            0xc0 | 0xd0 => {}
            _ => return Err(c.corrupt("unsupported status byte")),
        }
    }
    if !open.is_empty() {
        return Err(c.corrupt("track ended with sounding notes"));
    }
    notes.sort();
    Ok(MidiFile {
        division,
        tempo_us,
        notes,
        end_tick: now,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> ToneVocab {
        ToneVocab::from_pitches([55, 60, 64, 67])
    }

    #[test]
    fn header_bytes() {
        let bytes = rolls_to_midi(&[PianoRollMeasure::empty(4, 4)], &vocab(), DEFAULT_TEMPO_US).unwrap();
        assert_eq!(
            &bytes[..14],
            &[0x4D, 0x54, 0x68, 0x64, 0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xE0]
        );
    }

    #[test]
    fn quarter_c_encoding() {
        let mut r = PianoRollMeasure::empty(4, 4);
        for t in 0..4 {
            r.set(1, t, 0, true);
        }
        let bytes = rolls_to_midi(&[r], &vocab(), DEFAULT_TEMPO_US).unwrap();
        let track = &bytes[22..];
        // tempo meta, then note-on at delta 0, note-off after 480 ticks (VLQ 83 60)
        assert_eq!(&track[..7], &[0x00, 0xff, 0x51, 0x03, 0x07, 0xa1, 0x20]);
        assert_eq!(&track[7..11], &[0x00, 0x90, 0x3c, 0x50]);
        assert_eq!(&track[11..16], &[0x83, 0x60, 0x80, 0x3c, 0x00]);
        // end of track after the remaining 12 slots = 1440 ticks (VLQ 8B 20)
        assert_eq!(&track[16..], &[0x8b, 0x20, 0xff, 0x2f, 0x00]);
    }

    #[test]
    fn empty_measure_still_advances() {
        let bytes = rolls_to_midi(&vec![PianoRollMeasure::empty(4, 4); 2], &vocab(), DEFAULT_TEMPO_US).unwrap();
        let m = read_midi(&bytes).unwrap();
        assert!(m.notes.is_empty());
        assert_eq!(m.end_tick, 2 * 16 * 120);
        assert_eq!(m.tempo_us, Some(DEFAULT_TEMPO_US));
    }

    #[test]
    fn empty_list_is_an_error() {
        assert!(rolls_to_midi(&[], &vocab(), DEFAULT_TEMPO_US).is_err());
    }

    #[test]
    fn runs_merge_across_barlines() {
        let mut a = PianoRollMeasure::empty(4, 2);
        let mut b = PianoRollMeasure::empty(4, 2);
        a.set(2, 15, 1, true);
        b.set(2, 0, 1, true);
        let notes = roll_notes(&[a, b], &vocab());
        assert_eq!(
            notes,
            vec![MidiNote {
                start: 15 * 120,
                end: 17 * 120,
                channel: 1,
                pitch: 64
            }]
        );
    }

    #[test]
    fn reader_handles_running_status() {
        let track = [
            0x00, 0x90, 60, 80, // on
            0x00, 64, 80, // running-status on
            0x60, 60, 0, // running-status off via velocity 0
            0x00, 0x80, 64, 0, 0x00, 0xff, 0x2f, 0x00,
        ];
        let mut bytes = b"MThd\0\0\0\x06\0\0\0\x01\x01\xe0MTrk".to_vec();
        bytes.extend_from_slice(&(track.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&track);
        let m = read_midi(&bytes).unwrap();
        assert_eq!(m.notes.len(), 2);
        assert!(m.notes.iter().all(|n| n.start == 0 && n.end == 0x60));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let mut r = PianoRollMeasure::empty(4, 1);
        r.set(0, 0, 0, true);
        let bytes = rolls_to_midi(&[r], &vocab(), DEFAULT_TEMPO_US).unwrap();
        assert!(matches!(read_midi(&bytes[..bytes.len() - 4]), Err(Error::Corrupt { .. })));
    }
}
