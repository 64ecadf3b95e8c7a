//! The whole workflow on a small synthetic corpus: dataset, VQ-VAE, codes,
//! prior, and a generated chord sequence written as MIDI and PPM.
//!
//! cargo run --release --example end_to_end -- OUT_DIR [VQ_STEPS] [PRIOR_STEPS]

use std::path::PathBuf;

use recomp::pipeline::{self, Generation, PriorTraining, VqVaeTraining};
use recomp::synth::synth_corpus;
use recomp::train::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.first().map_or("recomp-demo", String::as_str));
    let vq_steps = args.get(1).map_or(Ok(300), |s| s.parse())?;
    let prior_steps = args.get(2).map_or(Ok(100), |s| s.parse())?;

    let kern = out.join("kern");
    std::fs::create_dir_all(&kern)?;
    for p in synth_corpus(0, 6, 8) {
        std::fs::write(kern.join(format!("{}.krn", p.name)), p.kern)?;
    }
    let data = out.join("data.rcds");
    let ds = pipeline::build_dataset(&kern, 8, &data)?;
    println!("dataset: {} measures, {} rows, chords {:?}", ds.len(), ds.rows(), ds.chords.labels());

    let vq = out.join("vqvae.ckpt");
    pipeline::run_train_vqvae(&VqVaeTraining {
        data: data.clone(),
        train: TrainConfig::new(vq_steps, 64, 0),
        channels: None,
        out: vq.clone(),
        loss_csv: None,
    })?;
    let codes = out.join("codes.rccd");
    pipeline::run_encode(&data, &vq, &codes)?;

    let prior = out.join("prior.ckpt");
    pipeline::run_train_prior(&PriorTraining {
        codes,
        data,
        train: TrainConfig::new(prior_steps, 50, 0),
        spatial: true,
        out: prior.clone(),
        loss_csv: None,
    })?;

    // The held-out chords, with both boundary repeats, drive generation.
    let held = ds.holdout_labels();
    let mut chords = vec![held[0]];
    chords.extend(&held);
    chords.push(held[held.len() - 1]);
    let g = pipeline::run_generate(&Generation {
        vqvae: vq,
        prior,
        chords: chords.join(","),
        temperature: 1.0,
        seed: 0,
        spatial: true,
        out_midi: out.join("generated.mid"),
        out_ppm: out.join("generated.ppm"),
    })?;
    println!("generated {} measures over {}", g.rolls.len(), chords.join(" "));
    println!("wrote {}", out.join("generated.mid").display());
    Ok(())
}
