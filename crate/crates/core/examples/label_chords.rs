//! Label every measure of a synthetic corpus and show the conditioning triplets.
//!
//! cargo run --example label_chords -- [PIECES] [SEED]

use recomp::io::Dataset;
use recomp::synth::synth_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let pieces = args.first().map_or(Ok(3), |s| s.parse())?;
    let seed = args.get(1).map_or(Ok(0), |s| s.parse())?;
    let corpus = synth_corpus(seed, pieces, 8);
    let inputs: Vec<(String, String)> = corpus.iter().map(|p| (p.name.clone(), p.kern.clone())).collect();
    let ds = Dataset::build(&inputs, 0)?;

    let triplets = ds.triplets();
    for (piece, planted) in ds.pieces.iter().zip(&corpus) {
        println!("{} ({:?}), planted: {}", piece.name, piece.mode, planted.chords.join(" "));
        for (i, m) in ds.measures.iter().enumerate().filter(|(_, m)| ds.pieces[m.piece].name == piece.name) {
            let [p, c, n] = triplets[i].ids().map(|id| ds.chords.label(id).unwrap_or("?"));
            println!("  measure {i:>3}: {c:<6} ({p}, {c}, {n})  id {}", m.chord);
        }
    }
    println!("chord vocabulary:\n{}", ds.chords.to_text());
    Ok(())
}
