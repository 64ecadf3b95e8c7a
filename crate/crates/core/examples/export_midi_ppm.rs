//! Render a synthetic piece to MIDI and a PPM piano-roll image.
//!
//! cargo run --example export_midi_ppm -- OUT_PREFIX

use recomp::io::Dataset;
use recomp::score::midi::DEFAULT_TEMPO_US;
use recomp::score::{read_midi, rolls_to_midi, rolls_to_ppm};
use recomp::synth::synth_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prefix = std::env::args().nth(1).unwrap_or_else(|| "piece".into());
    let p = synth_corpus(7, 1, 8).remove(0);
    let ds = Dataset::build(&[(p.name, p.kern)], 0)?;
    let rolls = ds.rolls();

    let midi = rolls_to_midi(&rolls, &ds.tones, DEFAULT_TEMPO_US)?;
    let ppm = rolls_to_ppm(&rolls)?;
    std::fs::write(format!("{prefix}.mid"), &midi)?;
    std::fs::write(format!("{prefix}.ppm"), &ppm)?;

    let parsed = read_midi(&midi)?;
    println!(
        "wrote {prefix}.mid ({} bytes, {} notes, {} ticks) and {prefix}.ppm ({}x{})",
        midi.len(),
        parsed.notes.len(),
        parsed.end_tick,
        16 * rolls.len(),
        ds.rows()
    );
    Ok(())
}
