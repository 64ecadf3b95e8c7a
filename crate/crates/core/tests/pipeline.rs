use std::path::Path;

use recomp::io::{Checkpoint, Dataset};
use recomp::pipeline::{
    self, run_encode, run_train_prior, run_train_vqvae, vqvae_from_checkpoint, PriorTraining, VqVaeTraining,
};
use recomp::synth::synth_corpus;
use recomp::train::{conditioning, train_prior, train_vqvae, TrainConfig};
use recomp::prior::{Prior, PriorConfig};
use recomp::vqvae::{VqVae, VqVaeConfig};
use recomp::Error;
use recomp_tensor::{Adam, AdamConfig, Rng};

const SMALL: [usize; 4] = [8, 8, 8, 8];

fn corpus(seed: u64, pieces: usize, measures: usize) -> Vec<(String, String)> {
    synth_corpus(seed, pieces, measures)
        .into_iter()
        .map(|p| (p.name, p.kern))
        .collect()
}

fn write_dataset(dir: &Path, name: &str, seed: u64, holdout: usize) -> std::path::PathBuf {
    let ds = Dataset::build(&corpus(seed, 3, 4), holdout).unwrap();
    let path = dir.join(name);
    ds.save(&path).unwrap();
    path
}

fn vq_opts(data: &Path, out: &Path, steps: u64, seed: u64) -> VqVaeTraining {
    VqVaeTraining {
        data: data.to_path_buf(),
        train: TrainConfig::new(steps, 4, seed),
        channels: Some(SMALL),
        out: out.to_path_buf(),
        loss_csv: None,
    }
}

#[test]
fn holdout_measures_never_reach_a_batch() {
    let ds = Dataset::build(&corpus(2, 3, 4), 5).unwrap();
    assert_eq!(ds.holdout, 7..12);
    let rolls = ds.rolls();
    let train = ds.train_indices();
    let config = VqVaeConfig {
        tones: ds.rows(),
        channels: SMALL,
        codebook_size: 16,
        ..VqVaeConfig::default()
    };
    let mut vq: VqVae<f32> = VqVae::new(config, &mut Rng::seed(1)).unwrap();
    let mut adam = Adam::new(AdamConfig::default());
    let mut seen = Vec::new();
    train_vqvae(&mut vq, &mut adam, &rolls, &train, &TrainConfig::new(12, 3, 4), &mut |b| {
        seen.extend_from_slice(b)
    })
    .unwrap();

    let grids = vq.encode_codes(&rolls).unwrap();
    let piece_of: Vec<usize> = ds.measures.iter().map(|m| m.piece).collect();
    let conds = conditioning(&ds.triplets(), &grids, &piece_of, true);
    let config = PriorConfig {
        codebook_size: 16,
        channels: 8,
        layers: 3,
        grid_h: grids[0].h,
        ..PriorConfig::new(ds.chords.len(), true)
    };
    let mut prior: Prior<f32> = Prior::new(config, &mut Rng::seed(2)).unwrap();
    let mut adam = Adam::new(AdamConfig::default());
    train_prior(&mut prior, &mut adam, &grids, &conds, &train, &TrainConfig::new(12, 3, 5), &mut |b| {
        seen.extend_from_slice(b)
    })
    .unwrap();

    assert_eq!(seen.len(), 72);
    assert!(seen.iter().all(|i| !ds.holdout.contains(i)), "{seen:?}");
}

#[test]
fn checkpoint_save_load_save_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), "d.rcds", 3, 0);
    let out = dir.path().join("vq.ckpt");
    run_train_vqvae(&vq_opts(&data, &out, 3, 1)).unwrap();
    let first = std::fs::read(&out).unwrap();
    let loaded = vqvae_from_checkpoint(&Checkpoint::load(&out).unwrap()).unwrap();
    let again = pipeline::vqvae_checkpoint(&loaded.model, &loaded.adam, &loaded.echo).to_bytes();
    assert_eq!(first, again);
    assert_eq!(loaded.adam.steps(), 3);
}

#[test]
fn zero_steps_and_fixed_seed_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), "d.rcds", 4, 0);
    let read = |name: &str, steps, seed| {
        let out = dir.path().join(name);
        run_train_vqvae(&vq_opts(&data, &out, steps, seed)).unwrap();
        std::fs::read(out).unwrap()
    };
    assert_eq!(read("a", 0, 7), read("b", 0, 7));
    assert_ne!(read("c", 0, 7), read("d", 0, 8));
    assert_eq!(read("e", 2, 7), read("f", 2, 7));
    let csv = std::fs::read_to_string(dir.path().join("e.loss.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("step,loss"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn eval_outputs_ignore_batch_composition() {
    let ds = Dataset::build(&corpus(5, 2, 4), 0).unwrap();
    let rolls = ds.rolls();
    let config = VqVaeConfig {
        tones: ds.rows(),
        channels: SMALL,
        ..VqVaeConfig::default()
    };
    let mut vq: VqVae<f32> = VqVae::new(config, &mut Rng::seed(3)).unwrap();
    let mut adam = Adam::new(AdamConfig::default());
    train_vqvae(&mut vq, &mut adam, &rolls, &ds.train_indices(), &TrainConfig::new(5, 4, 1), &mut |_| {}).unwrap();
    let together = vq.encode_codes(&rolls).unwrap();
    let alone: Vec<_> = rolls.iter().flat_map(|r| vq.encode_codes(std::slice::from_ref(r)).unwrap()).collect();
    assert_eq!(together, alone);
    let back_together = vq.reconstruct(&together, 0.5).unwrap();
    let back_reversed: Vec<_> = {
        let rev: Vec<_> = together.iter().rev().cloned().collect();
        let mut r = vq.reconstruct(&rev, 0.5).unwrap();
        r.reverse();
        r
    };
    assert_eq!(back_together, back_reversed);
}

#[test]
fn prior_refuses_codes_from_another_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let data_a = write_dataset(dir.path(), "a.rcds", 6, 0);
    let vq = dir.path().join("vq.ckpt");
    run_train_vqvae(&vq_opts(&data_a, &vq, 1, 0)).unwrap();
    let codes = dir.path().join("a.codes");
    run_encode(&data_a, &vq, &codes).unwrap();

    // A single-pitch-range corpus gives a different tone vocabulary.
    let other = Dataset::build(&corpus(99, 1, 2), 0).unwrap();
    assert_ne!(other.tones.fingerprint(), Dataset::load(&data_a).unwrap().tones.fingerprint());
    let data_b = dir.path().join("b.rcds");
    other.save(&data_b).unwrap();

    let opts = PriorTraining {
        codes: codes.clone(),
        data: data_b.clone(),
        train: TrainConfig::new(0, 2, 0),
        spatial: false,
        out: dir.path().join("prior.ckpt"),
        loss_csv: None,
    };
    assert!(matches!(run_train_prior(&opts), Err(Error::VocabMismatch(_))));
    assert!(!opts.out.exists());
    assert!(matches!(run_encode(&data_b, &vq, &codes), Err(Error::VocabMismatch(_))));
}
