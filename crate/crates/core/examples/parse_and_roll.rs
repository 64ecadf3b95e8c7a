//! Parse a kern file, move it to C, and print its first measure as a piano roll.
//!
//! cargo run --example parse_and_roll -- [FILE.krn]

use recomp::score::{build_tone_vocab, estimate_key, normalize_key, parse_kern_with_warnings, score_to_rolls};
use recomp::synth::synth_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => synth_corpus(3, 1, 4).remove(0).kern,
    };
    let (score, warnings) = parse_kern_with_warnings(&text)?;
    for w in &warnings {
        eprintln!("line {}: {}", w.line, w.message);
    }
    let key = estimate_key(&score)?;
    println!(
        "{} parts, {} measures, key tonic {} {:?} (r = {:.3})",
        score.part_count(),
        score.measure_count(),
        key.tonic,
        key.mode,
        key.score
    );
    let normalized = normalize_key(&score, &key);
    let vocab = build_tone_vocab([&normalized])?;
    println!("{} distinct pitches, padded to {} rows", vocab.raw_size(), vocab.padded_size());

    let rolls = score_to_rolls(&normalized, &vocab, score.part_count())?;
    let roll = &rolls[0];
    for row in (0..roll.tones()).rev() {
        let line: String = (0..16)
            .map(|s| match (0..roll.voices()).find(|&v| roll.get(row, s, v)) {
                Some(v) => char::from(b'0' + v as u8),
                None => '.',
            })
            .collect();
        let name = vocab.pitch(row).map_or("pad".to_string(), |p| p.to_string());
        println!("{name:>4} {line}");
    }
    Ok(())
}
