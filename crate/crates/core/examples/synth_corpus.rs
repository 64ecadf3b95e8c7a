//! Write a synthetic four-voice corpus as kern files.
//!
//! cargo run --example synth_corpus -- OUT_DIR [PIECES] [MEASURES] [SEED]

use std::path::PathBuf;

use recomp::synth::synth_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = PathBuf::from(args.first().ok_or("usage: synth_corpus OUT_DIR [PIECES] [MEASURES] [SEED]")?);
    let pieces = args.get(1).map_or(Ok(8), |s| s.parse())?;
    let measures = args.get(2).map_or(Ok(8), |s| s.parse())?;
    let seed = args.get(3).map_or(Ok(0), |s| s.parse())?;

    std::fs::create_dir_all(&dir)?;
    for p in synth_corpus(seed, pieces, measures) {
        let path = dir.join(format!("{}.krn", p.name));
        std::fs::write(&path, &p.kern)?;
        println!("{}  tonic {} {:?}  {}", path.display(), p.tonic, p.mode, p.chords.join(" "));
    }
    Ok(())
}
