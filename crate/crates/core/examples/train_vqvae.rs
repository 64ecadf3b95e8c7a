//! Overfit the VQ-VAE on a tiny synthetic corpus until reconstruction is exact.
//!
//! cargo run --release --example train_vqvae -- [MAX_STEPS]

use recomp::io::Dataset;
use recomp::synth::synth_corpus;
use recomp::train::{train_vqvae, TrainConfig};
use recomp::vqvae::{VqVae, VqVaeConfig};
use recomp_tensor::{Adam, AdamConfig, Rng};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let max_steps: u64 = std::env::args().nth(1).map_or(Ok(2000), |s| s.parse())?;
    let inputs: Vec<_> = synth_corpus(1, 2, 4).into_iter().map(|p| (p.name, p.kern)).collect();
    let ds = Dataset::build(&inputs, 0)?;
    let rolls = ds.rolls();
    let config = VqVaeConfig {
        tones: ds.rows(),
        ..VqVaeConfig::default()
    };
    let mut model: VqVae<f32> = VqVae::new(config, &mut Rng::seed(1))?;
    let mut adam = Adam::new(AdamConfig::default());

    let mut step = 0;
    while step < max_steps {
        let losses = train_vqvae(&mut model, &mut adam, &rolls, &ds.train_indices(), &TrainConfig::new(50, 64, step), &mut |_| {})?;
        step += 50;
        let grids = model.encode_codes(&rolls)?;
        let errors: usize = model.reconstruct(&grids, 0.5)?.iter().zip(&rolls).map(|(a, b)| a.hamming(b)).sum();
        println!("step {step:>5}  loss {:.5}  cell errors {errors}", losses.last().map_or(0.0, |r| r.loss));
        if errors == 0 {
            let used: std::collections::BTreeSet<usize> = grids.iter().flat_map(|g| g.ids()).collect();
            println!("exact after {step} steps; {} distinct codes in use", used.len());
            break;
        }
    }
    Ok(())
}
