//! Binary PPM rendering of piano rolls, one colour per voice.

use super::roll::{PianoRollMeasure, TIMESTEPS};
use crate::error::{Error, Result};

/// Colours for voices 0..4; further voices cycle.
pub const VOICE_COLOURS: [[u8; 3]; 4] = [[200, 0, 0], [0, 160, 0], [0, 0, 200], [180, 120, 0]];

/// P6 image, `16 * measures` wide and `tones` tall with tone row 0 at the bottom.
pub fn rolls_to_ppm(rolls: &[PianoRollMeasure]) -> Result<Vec<u8>> {
    let first = rolls.first().ok_or_else(|| Error::invalid("cannot render an empty roll list"))?;
    if rolls.iter().any(|r| r.shape() != first.shape()) {
        return Err(Error::invalid("rolls of different shapes in one image"));
    }
    let (height, width) = (first.tones(), TIMESTEPS * rolls.len());
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.reserve(width * height * 3);
    for y in 0..height {
        let row = height - 1 - y;
        for x in 0..width {
            let roll = &rolls[x / TIMESTEPS];
            let mut rgb = [0u16; 3];
            let mut any = false;
            for v in 0..roll.voices() {
                if roll.get(row, x % TIMESTEPS, v) {
                    any = true;
                    let c = VOICE_COLOURS[v % VOICE_COLOURS.len()];
                    (0..3).for_each(|k| rgb[k] += u16::from(c[k]));
                }
            }
            if any {
                out.extend(rgb.iter().map(|&c| c.min(255) as u8));
            } else {
                out.extend_from_slice(&[255, 255, 255]);
            }
        }
    }
    Ok(out)
}
