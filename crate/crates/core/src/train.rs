//! Seeded minibatch loading and the Adam training loops.

use recomp_tensor::{Adam, AdamConfig, Rng, Scalar};

use crate::error::{Error, Result};
use crate::harmony::ChordTriplet;
use crate::prior::{CondSpec, Prior};
use crate::score::roll::rolls_to_tensor;
use crate::score::PianoRollMeasure;
use crate::vqvae::{CodeGrid, VqVae};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn new(steps: u64, batch: usize, seed: u64) -> Self {
        Self {
            steps,
            batch,
            seed,
            adam: AdamConfig::default(),
        }
    }
}

/// Cycles through seeded permutations of a fixed index set.
#[derive(Clone, Debug)]
pub struct Loader {
    indices: Vec<usize>,
    batch: usize,
    rng: Rng,
    order: Vec<usize>,
    pos: usize,
}

impl Loader {
    /// Batches of `min(batch, indices.len())` drawn from `indices` only.
    pub fn new(indices: Vec<usize>, batch: usize, seed: u64) -> Result<Self> {
        if indices.is_empty() || batch == 0 {
            return Err(Error::invalid("loader needs a nonempty index set and a positive batch"));
        }
        let batch = batch.min(indices.len());
        Ok(Self {
            indices,
            batch,
            rng: Rng::seed(seed),
            order: Vec::new(),
            pos: 0,
        })
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            if self.pos == self.order.len() {
                self.order = self.indices.clone();
                self.rng.shuffle(&mut self.order);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Loss after each step, one record per step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub loss: f64,
}

pub fn losses_csv(records: &[LossRecord]) -> String {
    let mut s = String::from("step,loss\n");
    for r in records {
        s.push_str(&format!("{},{}\n", r.step, r.loss));
    }
    s
}

fn diverged(step: u64, e: impl std::fmt::Display) -> Error {
    Error::Diverged {
        step,
        detail: e.to_string(),
    }
}

/// Train on `rolls[i]` for `i` in `train`. `observe` sees every batch's indices.
pub fn train_vqvae<T: Scalar>(
    model: &mut VqVae<T>,
    adam: &mut Adam<T>,
    rolls: &[PianoRollMeasure],
    train: &[usize],
    cfg: &TrainConfig,
    observe: &mut dyn FnMut(&[usize]),
) -> Result<Vec<LossRecord>> {
    if train.iter().any(|&i| i >= rolls.len()) {
        return Err(Error::invalid("training index out of range"));
    }
    let mut loader = Loader::new(train.to_vec(), cfg.batch, cfg.seed)?;
    let mut records = Vec::with_capacity(cfg.steps as usize);
    let start = adam.steps();
    for step in start + 1..=start + cfg.steps {
        let idx = loader.next_batch();
        observe(&idx);
        let batch: Vec<PianoRollMeasure> = idx.iter().map(|&i| rolls[i].clone()).collect();
        let x = rolls_to_tensor::<T>(&batch)?;
        let losses = model.train_step(adam, &x).map_err(|e| diverged(step, e))?;
        if !losses.total.is_finite() {
            return Err(diverged(step, "non-finite loss"));
        }
        log::debug!("vqvae step {step}: loss {:.6}", losses.total);
        records.push(LossRecord {
            step,
            loss: losses.total,
        });
    }
    Ok(records)
}

/// Train on `(grids[i], conds[i])` for `i` in `train`.
pub fn train_prior<T: Scalar>(
    model: &mut Prior<T>,
    adam: &mut Adam<T>,
    grids: &[CodeGrid],
    conds: &[CondSpec],
    train: &[usize],
    cfg: &TrainConfig,
    observe: &mut dyn FnMut(&[usize]),
) -> Result<Vec<LossRecord>> {
    if grids.len() != conds.len() {
        return Err(Error::invalid(format!(
            "{} code grids but {} conditioning entries",
            grids.len(),
            conds.len()
        )));
    }
    if train.iter().any(|&i| i >= grids.len()) {
        return Err(Error::invalid("training index out of range"));
    }
    let mut loader = Loader::new(train.to_vec(), cfg.batch, cfg.seed)?;
    let mut records = Vec::with_capacity(cfg.steps as usize);
    let start = adam.steps();
    for step in start + 1..=start + cfg.steps {
        let idx = loader.next_batch();
        observe(&idx);
        let g: Vec<CodeGrid> = idx.iter().map(|&i| grids[i].clone()).collect();
        let c: Vec<CondSpec> = idx.iter().map(|&i| conds[i].clone()).collect();
        let loss = model.train_step(adam, &g, &c).map_err(|e| diverged(step, e))?;
        if !loss.is_finite() {
            return Err(diverged(step, "non-finite loss"));
        }
        log::debug!("prior step {step}: loss {loss:.6}");
        records.push(LossRecord { step, loss });
    }
    Ok(records)
}

/// Conditioning for each measure: its triplet, plus the previous measure's grid
/// within the same piece when `spatial` is set (`None` at a piece's first measure).
pub fn conditioning(
    triplets: &[ChordTriplet],
    grids: &[CodeGrid],
    piece_of: &[usize],
    spatial: bool,
) -> Vec<CondSpec> {
    triplets
        .iter()
        .enumerate()
        .map(|(i, &triplet)| CondSpec {
            triplet,
            spatial: (spatial && i > 0 && piece_of[i - 1] == piece_of[i]).then(|| grids[i - 1].clone()),
        })
        .collect()
}
