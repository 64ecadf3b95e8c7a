//! End-to-end commands: dataset building, training, encoding and generation.

use std::path::{Path, PathBuf};

use recomp_tensor::{Adam, AdamConfig, AdamState, Rng, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmony::ChordVocab;
use crate::io::{write_atomic, Checkpoint, CodesFile, Dataset, Entry, ModelKind};
use crate::nn::Params;
use crate::prior::{generate_sequence, Prior, PriorConfig};
use crate::score::{rolls_to_midi, rolls_to_ppm, PianoRollMeasure, ToneVocab};
use crate::score::midi::DEFAULT_TEMPO_US;
use crate::train::{conditioning, losses_csv, train_prior, train_vqvae, LossRecord, TrainConfig};
use crate::vqvae::{CodeGrid, VqVae, VqVaeConfig};

/// Vocabularies a model was trained against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabMeta {
    pub tone_pitches: Vec<u8>,
    pub tone_fingerprint: u32,
    pub chord_labels: Vec<String>,
    pub chord_fingerprint: u32,
}

impl VocabMeta {
    pub fn of(dataset: &Dataset) -> Self {
        Self {
            tone_pitches: dataset.tones.pitches().to_vec(),
            tone_fingerprint: dataset.tones.fingerprint(),
            chord_labels: dataset.chords.labels().to_vec(),
            chord_fingerprint: dataset.chords.fingerprint(),
        }
    }

    pub fn tones(&self) -> ToneVocab {
        ToneVocab::from_pitches(self.tone_pitches.iter().copied())
    }

    pub fn chords(&self) -> ChordVocab {
        let mut v = ChordVocab::new();
        self.chord_labels.iter().for_each(|l| {
            v.insert(l);
        });
        v
    }

    /// Fingerprints must agree with the dataset.
    pub fn check_against(&self, dataset: &Dataset, chords_matter: bool) -> Result<()> {
        if self.tone_fingerprint != dataset.tones.fingerprint() {
            return Err(Error::VocabMismatch(format!(
                "tone vocabulary fingerprint {:08x} differs from the dataset's {:08x}",
                self.tone_fingerprint,
                dataset.tones.fingerprint()
            )));
        }
        if chords_matter && self.chord_fingerprint != dataset.chords.fingerprint() {
            return Err(Error::VocabMismatch(format!(
                "chord vocabulary fingerprint {:08x} differs from the dataset's {:08x}",
                self.chord_fingerprint,
                dataset.chords.fingerprint()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainEcho {
    /// Optimizer steps taken so far.
    pub steps: u64,
    pub batch: usize,
    pub seed: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl TrainEcho {
    fn new(cfg: &TrainConfig, steps: u64) -> Self {
        Self {
            steps,
            batch: cfg.batch,
            seed: cfg.seed,
            lr: cfg.adam.lr,
            beta1: cfg.adam.beta1,
            beta2: cfg.adam.beta2,
            eps: cfg.adam.eps,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqVaeEcho {
    pub model: VqVaeConfig,
    pub vocab: VocabMeta,
    pub training: TrainEcho,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorEcho {
    pub model: PriorConfig,
    pub vocab: VocabMeta,
    pub training: TrainEcho,
}

fn to_toml<S: Serialize>(v: &S) -> String {
    toml::to_string(v).expect("config echo serializes")
}

fn from_toml<S: for<'de> Deserialize<'de>>(text: &str) -> Result<S> {
    toml::from_str(text).map_err(|e| Error::invalid(format!("bad checkpoint config: {e}")))
}

fn put_params(ck: &mut Checkpoint, params: &Params<f32>, adam: &Adam<f32>) {
    for (k, t) in &params.tensors {
        ck.put(format!("param.{k}"), t.clone());
    }
    for (k, st) in &adam.states {
        let shape = params.tensors[k].shape().to_vec();
        ck.put(format!("adam.m.{k}"), Tensor::new(shape.clone(), st.m.clone()).expect("moment shape"));
        ck.put(format!("adam.v.{k}"), Tensor::new(shape, st.v.clone()).expect("moment shape"));
        ck.put_u32(format!("adam.t.{k}"), st.t as u32);
    }
}

fn take_params(ck: &Checkpoint, fresh: &Params<f32>, adam_cfg: AdamConfig) -> Result<(Params<f32>, Adam<f32>)> {
    let mut params = Params::new();
    for (k, e) in ck.with_prefix("param.") {
        match e {
            Entry::F32(t) => params.insert(k, t.clone()),
            _ => return Err(Error::invalid(format!("parameter {k} is not a float tensor"))),
        }
    }
    fresh.check_layout(&params)?;
    let mut adam = Adam::new(adam_cfg);
    for (k, _) in ck.with_prefix("adam.t.") {
        let p = params.get(k)?;
        let m = ck.tensor(&format!("adam.m.{k}"))?;
        let v = ck.tensor(&format!("adam.v.{k}"))?;
        if m.shape() != p.shape() || v.shape() != p.shape() {
            return Err(Error::invalid(format!("optimizer moments for {k} have the wrong shape")));
        }
        let state = AdamState {
            m: m.data().to_vec(),
            v: v.data().to_vec(),
            t: u64::from(ck.scalar_u32(&format!("adam.t.{k}"))?),
        };
        adam.states.insert(k.to_string(), state);
    }
    Ok((params, adam))
}

pub fn vqvae_checkpoint(model: &VqVae<f32>, adam: &Adam<f32>, echo: &VqVaeEcho) -> Checkpoint {
    let mut ck = Checkpoint::new(ModelKind::VqVae, to_toml(echo));
    put_params(&mut ck, &model.params, adam);
    for (name, st) in &model.norms {
        let (mean, var) = st.running().expect("norm states start initialized");
        ck.put(format!("norm.{name}.mean"), Tensor::new(vec![mean.len()], mean.to_vec()).expect("mean"));
        ck.put(format!("norm.{name}.var"), Tensor::new(vec![var.len()], var.to_vec()).expect("var"));
    }
    ck
}

/// A trained first stage with its optimizer state and config echo.
#[derive(Clone, Debug)]
pub struct LoadedVqVae {
    pub model: VqVae<f32>,
    pub adam: Adam<f32>,
    pub echo: VqVaeEcho,
}

pub fn vqvae_from_checkpoint(ck: &Checkpoint) -> Result<LoadedVqVae> {
    ck.expect_kind(ModelKind::VqVae)?;
    let echo: VqVaeEcho = from_toml(&ck.config)?;
    let mut model = VqVae::new(echo.model.clone(), &mut Rng::seed(0))?;
    let (params, adam) = take_params(ck, &model.params, echo.training.adam())?;
    model.params = params;
    for (name, st) in model.norms.iter_mut() {
        let mean = ck.tensor(&format!("norm.{name}.mean"))?.data().to_vec();
        let var = ck.tensor(&format!("norm.{name}.var"))?.data().to_vec();
        st.set_running(mean, var)?;
    }
    Ok(LoadedVqVae { model, adam, echo })
}

pub fn prior_checkpoint(model: &Prior<f32>, adam: &Adam<f32>, echo: &PriorEcho) -> Checkpoint {
    let mut ck = Checkpoint::new(ModelKind::Prior, to_toml(echo));
    put_params(&mut ck, &model.params, adam);
    ck
}

#[derive(Clone, Debug)]
pub struct LoadedPrior {
    pub model: Prior<f32>,
    pub adam: Adam<f32>,
    pub echo: PriorEcho,
}

pub fn prior_from_checkpoint(ck: &Checkpoint) -> Result<LoadedPrior> {
    ck.expect_kind(ModelKind::Prior)?;
    let echo: PriorEcho = from_toml(&ck.config)?;
    let mut model = Prior::new(echo.model.clone(), &mut Rng::seed(0))?;
    let (params, adam) = take_params(ck, &model.params, echo.training.adam())?;
    model.params = params;
    Ok(LoadedPrior { model, adam, echo })
}

/// `build-dataset`.
pub fn build_dataset(input_dir: &Path, holdout: usize, out: &Path) -> Result<Dataset> {
    let ds = Dataset::build_from_dir(input_dir, holdout)?;
    ds.save(out)?;
    log::info!(
        "{} pieces, {} measures ({} held out), {} tones padded to {}, {} chord labels",
        ds.pieces.len(),
        ds.len(),
        ds.holdout.len(),
        ds.tones.raw_size(),
        ds.rows(),
        ds.chords.len()
    );
    Ok(ds)
}

/// Options of `train-vqvae`.
#[derive(Clone, Debug)]
pub struct VqVaeTraining {
    pub data: PathBuf,
    pub train: TrainConfig,
    pub channels: Option<[usize; 4]>,
    pub out: PathBuf,
    pub loss_csv: Option<PathBuf>,
}

fn loss_path(out: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".loss.csv");
        PathBuf::from(s)
    })
}

fn write_losses(path: &Path, records: &[LossRecord]) -> Result<()> {
    write_atomic(path, losses_csv(records).as_bytes())
}

/// `train-vqvae`: fresh model seeded by `train.seed`, trained on the non-holdout measures.
pub fn run_train_vqvae(opts: &VqVaeTraining) -> Result<LoadedVqVae> {
    let ds = Dataset::load(&opts.data)?;
    let mut config = VqVaeConfig {
        tones: ds.rows(),
        voices: ds.voices,
        ..VqVaeConfig::default()
    };
    if let Some(c) = opts.channels {
        config.channels = c;
    }
    let mut model = VqVae::new(config, &mut Rng::seed(opts.train.seed))?;
    let mut adam = Adam::new(opts.train.adam);
    let rolls = ds.rolls();
    let records = train_vqvae(
        &mut model,
        &mut adam,
        &rolls,
        &ds.train_indices(),
        &TrainConfig {
            seed: opts.train.seed.wrapping_add(1),
            ..opts.train.clone()
        },
        &mut |_| {},
    )?;
    if let Some(last) = records.last() {
        log::info!("vqvae: {} steps, final loss {:.6}", last.step, last.loss);
    }
    let echo = VqVaeEcho {
        model: model.config.clone(),
        vocab: VocabMeta::of(&ds),
        training: TrainEcho::new(&opts.train, adam.steps()),
    };
    vqvae_checkpoint(&model, &adam, &echo).save(&opts.out)?;
    write_losses(&loss_path(&opts.out, &opts.loss_csv), &records)?;
    Ok(LoadedVqVae { model, adam, echo })
}

/// `encode`: codes of every dataset measure, holdout included, in corpus order.
pub fn run_encode(data: &Path, vqvae: &Path, out: &Path) -> Result<CodesFile> {
    let ds = Dataset::load(data)?;
    let vq = vqvae_from_checkpoint(&Checkpoint::load(vqvae)?)?;
    vq.echo.vocab.check_against(&ds, false)?;
    let grids = vq.model.encode_codes(&ds.rolls())?;
    let file = CodesFile {
        codebook_size: vq.model.config.codebook_size,
        tone_fingerprint: vq.echo.vocab.tone_fingerprint,
        grids,
    };
    file.save(out)?;
    Ok(file)
}

/// Options of `train-prior`.
#[derive(Clone, Debug)]
pub struct PriorTraining {
    pub codes: PathBuf,
    pub data: PathBuf,
    pub train: TrainConfig,
    pub spatial: bool,
    pub out: PathBuf,
    pub loss_csv: Option<PathBuf>,
}

pub fn run_train_prior(opts: &PriorTraining) -> Result<LoadedPrior> {
    let ds = Dataset::load(&opts.data)?;
    let codes = CodesFile::load(&opts.codes)?;
    if codes.tone_fingerprint != ds.tones.fingerprint() {
        return Err(Error::VocabMismatch(
            "codes were produced by a VQ-VAE trained on a different tone vocabulary".into(),
        ));
    }
    if codes.grids.len() != ds.len() {
        return Err(Error::VocabMismatch(format!(
            "{} code grids for {} dataset measures",
            codes.grids.len(),
            ds.len()
        )));
    }
    let first = &codes.grids[0];
    let config = PriorConfig {
        codebook_size: codes.codebook_size,
        chord_vocab: ds.chords.len(),
        grid_h: first.h,
        grid_w: first.w,
        ..PriorConfig::new(ds.chords.len(), opts.spatial)
    };
    let mut model = Prior::new(config, &mut Rng::seed(opts.train.seed))?;
    let mut adam = Adam::new(opts.train.adam);
    let pieces: Vec<usize> = ds.measures.iter().map(|m| m.piece).collect();
    let conds = conditioning(&ds.triplets(), &codes.grids, &pieces, opts.spatial);
    let records = train_prior(
        &mut model,
        &mut adam,
        &codes.grids,
        &conds,
        &ds.train_indices(),
        &TrainConfig {
            seed: opts.train.seed.wrapping_add(1),
            ..opts.train.clone()
        },
        &mut |_| {},
    )?;
    if let Some(last) = records.last() {
        log::info!("prior: {} steps, final loss {:.6}", last.step, last.loss);
    }
    let echo = PriorEcho {
        model: model.config.clone(),
        vocab: VocabMeta::of(&ds),
        training: TrainEcho::new(&opts.train, adam.steps()),
    };
    prior_checkpoint(&model, &adam, &echo).save(&opts.out)?;
    write_losses(&loss_path(&opts.out, &opts.loss_csv), &records)?;
    Ok(LoadedPrior { model, adam, echo })
}

/// Options of `generate`.
#[derive(Clone, Debug)]
pub struct Generation {
    pub vqvae: PathBuf,
    pub prior: PathBuf,
    /// Comma-separated labels including both boundary repeats.
    pub chords: String,
    pub temperature: f64,
    pub seed: u64,
    pub spatial: bool,
    pub out_midi: PathBuf,
    pub out_ppm: PathBuf,
}

/// Sampled grids and the decoded measures.
#[derive(Clone, Debug)]
pub struct Generated {
    pub grids: Vec<CodeGrid>,
    pub rolls: Vec<PianoRollMeasure>,
    pub midi: Vec<u8>,
    pub ppm: Vec<u8>,
}

pub fn parse_chords(text: &str) -> Vec<&str> {
    text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// Sample, decode and render without touching the filesystem.
pub fn generate(vq: &LoadedVqVae, prior: &LoadedPrior, chords: &str, temperature: f64, seed: u64, spatial: bool) -> Result<Generated> {
    let (a, b) = (&vq.echo.vocab, &prior.echo.vocab);
    if a.tone_fingerprint != b.tone_fingerprint {
        return Err(Error::VocabMismatch(
            "VQ-VAE and prior were trained on different tone vocabularies".into(),
        ));
    }
    let vqc = &vq.model.config;
    let pc = &prior.model.config;
    if (pc.grid_h, pc.grid_w) != vqc.grid_dims() || pc.codebook_size != vqc.codebook_size {
        return Err(Error::VocabMismatch("prior grid or codebook does not match the VQ-VAE".into()));
    }
    let labels = parse_chords(chords);
    let grids = generate_sequence(&prior.model, &labels, &b.chords(), spatial, temperature, seed)?;
    let rolls = vq.model.reconstruct(&grids, 0.5)?;
    let midi = rolls_to_midi(&rolls, &a.tones(), DEFAULT_TEMPO_US)?;
    let ppm = rolls_to_ppm(&rolls)?;
    Ok(Generated { grids, rolls, midi, ppm })
}

/// `generate`.
pub fn run_generate(opts: &Generation) -> Result<Generated> {
    let vq = vqvae_from_checkpoint(&Checkpoint::load(&opts.vqvae)?)?;
    let prior = prior_from_checkpoint(&Checkpoint::load(&opts.prior)?)?;
    let out = generate(&vq, &prior, &opts.chords, opts.temperature, opts.seed, opts.spatial)?;
    write_atomic(&opts.out_midi, &out.midi)?;
    write_atomic(&opts.out_ppm, &out.ppm)?;
    Ok(out)
}
