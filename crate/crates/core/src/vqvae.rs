//! First stage: convolutional VQ-VAE mapping piano-roll measures to grids of codes.

use std::collections::BTreeMap;

use recomp_tensor::{
    init, Adam, BatchNormState, ConvOpts, NormMode, Rng, Scalar, Tape, Tensor, TensorError, Var,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Bound, Params};
use crate::score::{PianoRollMeasure, TIMESTEPS};

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before the binary cross-entropy.
pub const CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqVaeConfig {
    pub tones: usize,
    pub voices: usize,
    /// Encoder widths; the last is the code dimension.
    pub channels: [usize; 4],
    pub kernel: usize,
    pub codebook_size: usize,
    pub beta: f64,
}

impl Default for VqVaeConfig {
    fn default() -> Self {
        Self {
            tones: 52,
            voices: 4,
            channels: [64, 128, 256, 256],
            kernel: 4,
            codebook_size: 256,
            beta: 0.25,
        }
    }
}

impl VqVaeConfig {
    pub fn code_dim(&self) -> usize {
        self.channels[3]
    }

    /// Latent grid `(tones / 4, 16 / 4)`.
    pub fn grid_dims(&self) -> (usize, usize) {
        (self.tones / 4, TIMESTEPS / 4)
    }

    fn validate(&self) -> Result<()> {
        if self.tones == 0 || self.tones % 4 != 0 {
            return Err(Error::invalid(format!("tone rows must be a positive multiple of 4, got {}", self.tones)));
        }
        if self.voices == 0 || self.kernel == 0 || self.codebook_size == 0 || self.channels.contains(&0) {
            return Err(Error::invalid("vqvae sizes must be positive"));
        }
        if self.codebook_size > usize::from(u16::MAX) + 1 {
            return Err(Error::invalid("codebook size must fit in 16 bits"));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::invalid("commitment weight must be non-negative"));
        }
        Ok(())
    }
}

/// One measure's grid of code indices, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CodeGrid {
    pub h: usize,
    pub w: usize,
    pub codes: Vec<u16>,
}

impl CodeGrid {
    pub fn new(h: usize, w: usize, codes: Vec<u16>) -> Result<Self> {
        if codes.len() != h * w {
            return Err(Error::invalid(format!("grid {h}x{w} needs {} codes, got {}", h * w, codes.len())));
        }
        Ok(Self { h, w, codes })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            codes: vec![0; h * w],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        usize::from(self.codes[i * self.w + j])
    }

    pub fn set(&mut self, i: usize, j: usize, code: usize) {
        self.codes[i * self.w + j] = code as u16;
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.codes.iter().map(|&c| usize::from(c))
    }

    pub fn check(&self, codebook_size: usize) -> Result<()> {
        match self.codes.iter().find(|&&c| usize::from(c) >= codebook_size) {
            Some(&c) => Err(TensorError::Index {
                op: "code grid",
                index: usize::from(c),
                size: codebook_size,
            }
            .into()),
            None => Ok(()),
        }
    }
}

/// Loss terms of one training batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VqLosses {
    pub reconstruction: f64,
    pub codebook: f64,
    pub commitment: f64,
    pub total: f64,
}

/// Nearest codebook row per vector of `z` (`[.., D]`), ties to the lowest index.
pub fn nearest_codes<T: Scalar>(z: &Tensor<T>, codebook: &Tensor<T>) -> Result<Vec<usize>> {
    let d = z.last_dim();
    if codebook.rank() != 2 || codebook.shape()[1] != d {
        return Err(TensorError::Shape {
            op: "quantize",
            left: z.shape().to_vec(),
            right: codebook.shape().to_vec(),
        }
        .into());
    }
    let k = codebook.shape()[0];
    let e = codebook.data();
    Ok(z.data()
        .chunks(d)
        .map(|v| {
            let mut best = (T::infinity(), 0);
            for c in 0..k {
                let dist = v
                    .iter()
                    .zip(&e[c * d..(c + 1) * d])
                    .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
                if dist < best.0 {
                    best = (dist, c);
                }
            }
            best.1
        })
        .collect())
}

/// Tape nodes produced by [`quantize`].
#[derive(Clone, Debug)]
pub struct Quantized {
    /// Codebook rows, forward value of the decoder input.
    pub z_q: Var,
    /// Same value as `z_q`, gradient routed to `z_e` unchanged.
    pub straight_through: Var,
    pub indices: Vec<usize>,
}

/// Snap `z_e` to its nearest codebook rows.
pub fn quantize<T: Scalar>(tape: &mut Tape<T>, z_e: Var, codebook: Var) -> Result<Quantized> {
    let indices = nearest_codes(tape.value(z_e), tape.value(codebook))?;
    let shape = tape.shape(z_e).to_vec();
    let lead = &shape[..shape.len() - 1];
    let z_q = tape.embedding(codebook, &indices, lead)?;
    let straight_through = tape.straight_through(z_e, z_q)?;
    Ok(Quantized {
        z_q,
        straight_through,
        indices,
    })
}

/// Reconstruction, codebook and commitment terms; returns `(total, [bce, codebook, commitment])`.
pub fn vqvae_loss<T: Scalar>(
    tape: &mut Tape<T>,
    x: &Tensor<T>,
    probs: Var,
    z_e: Var,
    z_q: Var,
    beta: f64,
) -> Result<(Var, [Var; 3])> {
    let bce = tape.bce(probs, x)?;
    let ze_sg = tape.stop_gradient(z_e);
    let zq_sg = tape.stop_gradient(z_q);
    let codebook = tape.mse(ze_sg, z_q)?;
    let commitment = tape.mse(z_e, zq_sg)?;
    let weighted = tape.scale(commitment, T::lit(beta))?;
    let sum = tape.add(bce, codebook)?;
    let total = tape.add(sum, weighted)?;
    Ok((total, [bce, codebook, commitment]))
}

const ENCODER: [(&str, usize, bool); 4] = [("enc0", 2, true), ("enc1", 2, true), ("enc2", 1, true), ("enc3", 1, false)];
const DECODER: [(&str, usize, bool); 4] = [("dec0", 1, true), ("dec1", 1, true), ("dec2", 2, true), ("dec3", 2, false)];

#[derive(Clone, Debug, PartialEq)]
pub struct VqVae<T> {
    pub config: VqVaeConfig,
    pub params: Params<T>,
    /// Running statistics per normalized layer, keyed by layer name.
    pub norms: BTreeMap<String, BatchNormState<T>>,
}

impl<T: Scalar> VqVae<T> {
    pub fn new(config: VqVaeConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let k = config.kernel;
        let c = config.channels;
        let enc_io = [(config.voices, c[0]), (c[0], c[1]), (c[1], c[2]), (c[2], c[3])];
        let dec_io = [(c[3], c[2]), (c[2], c[1]), (c[1], c[0]), (c[0], config.voices)];
        let mut params = Params::new();
        let mut norms = BTreeMap::new();
        for ((name, _, norm), (cin, cout)) in ENCODER.iter().zip(enc_io) {
            params.insert(format!("{name}.kernel"), init::conv_kernel(k, k, cin, cout, rng));
            params.insert(format!("{name}.bias"), Tensor::zeros(vec![cout]));
            if *norm {
                params.insert(format!("{name}.gamma"), Tensor::ones(vec![cout]));
                params.insert(format!("{name}.beta"), Tensor::zeros(vec![cout]));
                norms.insert(name.to_string(), BatchNormState::with_unit_stats(cout));
            }
        }
        for ((name, _, norm), (cin, cout)) in DECODER.iter().zip(dec_io) {
            // transpose kernels are laid out [kh, kw, out, in]
            params.insert(format!("{name}.kernel"), init::conv_kernel(k, k, cout, cin, rng));
            params.insert(format!("{name}.bias"), Tensor::zeros(vec![cout]));
            if *norm {
                params.insert(format!("{name}.gamma"), Tensor::ones(vec![cout]));
                params.insert(format!("{name}.beta"), Tensor::zeros(vec![cout]));
                norms.insert(name.to_string(), BatchNormState::with_unit_stats(cout));
            }
        }
        let limit = 1.0 / config.codebook_size as f64;
        params.insert("codebook", init::uniform(&[config.codebook_size, config.code_dim()], limit, rng));
        Ok(Self { config, params, norms })
    }

    pub fn codebook(&self) -> &Tensor<T> {
        self.params.get("codebook").expect("codebook parameter")
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let c = &self.config;
        if shape.len() != 4 || shape[1] != c.tones || shape[2] != TIMESTEPS || shape[3] != c.voices {
            return Err(TensorError::Shape {
                op: "vqvae encode",
                left: shape.to_vec(),
                right: vec![0, c.tones, TIMESTEPS, c.voices],
            }
            .into());
        }
        Ok(())
    }

    fn norm_act(
        &mut self,
        tape: &mut Tape<T>,
        p: &Bound,
        name: &str,
        x: Var,
        mode: NormMode,
    ) -> Result<Var> {
        let state = self.norms.get_mut(name).expect("norm state");
        let y = tape.batch_norm(
            x,
            p.var(&format!("{name}.gamma")),
            p.var(&format!("{name}.beta")),
            state,
            mode,
        )?;
        Ok(tape.relu(y)?)
    }

    /// `[N, tones, 16, voices] -> [N, h, w, D]`. Train mode updates running statistics.
    pub fn encode_on(&mut self, tape: &mut Tape<T>, p: &Bound, x: Var, mode: NormMode) -> Result<Var> {
        self.check_input(tape.shape(x))?;
        let mut h = x;
        for (name, stride, norm) in ENCODER {
            h = tape.conv2d(
                h,
                p.var(&format!("{name}.kernel")),
                Some(p.var(&format!("{name}.bias"))),
                ConvOpts::strided(stride),
            )?;
            if norm {
                h = self.norm_act(tape, p, name, h, mode)?;
            }
        }
        Ok(h)
    }

    /// `[N, h, w, D] -> [N, tones, 16, voices]` probabilities in `[CLAMP, 1 - CLAMP]`.
    pub fn decode_on(&mut self, tape: &mut Tape<T>, p: &Bound, z: Var, mode: NormMode) -> Result<Var> {
        let (gh, gw) = self.config.grid_dims();
        let s = tape.shape(z);
        if s.len() != 4 || s[1] != gh || s[2] != gw || s[3] != self.config.code_dim() {
            return Err(TensorError::Shape {
                op: "vqvae decode",
                left: s.to_vec(),
                right: vec![0, gh, gw, self.config.code_dim()],
            }
            .into());
        }
        let mut h = z;
        for (name, stride, norm) in DECODER {
            h = tape.conv2d_transpose(
                h,
                p.var(&format!("{name}.kernel")),
                Some(p.var(&format!("{name}.bias"))),
                (stride, stride),
            )?;
            if norm {
                h = self.norm_act(tape, p, name, h, mode)?;
            }
        }
        let probs = tape.sigmoid(h)?;
        Ok(tape.clamp(probs, T::lit(CLAMP), T::lit(1.0 - CLAMP))?)
    }

    /// Eval-mode encoder output.
    pub fn encode(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let z = self.eval_shell().encode_on(&mut tape, &p, xv, NormMode::Eval)?;
        Ok(tape.value(z).clone())
    }

    /// Eval-mode decoder output.
    pub fn decode(&self, z_q: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let zv = tape.constant(z_q.clone());
        let y = self.eval_shell().decode_on(&mut tape, &p, zv, NormMode::Eval)?;
        Ok(tape.value(y).clone())
    }

    // The forward passes take `&mut self` for the norm states; eval mode
    // leaves them untouched, so a copy without parameters is enough.
    fn eval_shell(&self) -> Self {
        Self {
            config: self.config.clone(),
            params: Params::new(),
            norms: self.norms.clone(),
        }
    }

    /// Eval-mode codes for a batch of rolls.
    pub fn encode_codes(&self, rolls: &[PianoRollMeasure]) -> Result<Vec<CodeGrid>> {
        let (h, w) = self.config.grid_dims();
        let mut out = Vec::with_capacity(rolls.len());
        for chunk in rolls.chunks(64) {
            let x = crate::score::roll::rolls_to_tensor::<T>(chunk)?;
            let z = self.encode(&x)?;
            let idx = nearest_codes(&z, self.codebook())?;
            for g in idx.chunks(h * w) {
                out.push(CodeGrid::new(h, w, g.iter().map(|&c| c as u16).collect())?);
            }
        }
        Ok(out)
    }

    /// Codebook rows for each grid: `[N, h, w, D]`.
    pub fn embed_codes(&self, grids: &[CodeGrid]) -> Result<Tensor<T>> {
        let (h, w) = self.config.grid_dims();
        let d = self.config.code_dim();
        let e = self.codebook().data();
        let mut data = Vec::with_capacity(grids.len() * h * w * d);
        for g in grids {
            if (g.h, g.w) != (h, w) {
                return Err(Error::invalid(format!("grid {}x{} does not match latent {h}x{w}", g.h, g.w)));
            }
            g.check(self.config.codebook_size)?;
            for c in g.ids() {
                data.extend_from_slice(&e[c * d..(c + 1) * d]);
            }
        }
        Ok(Tensor::new(vec![grids.len(), h, w, d], data)?)
    }

    /// Decode grids and threshold at `threshold` (strictly above is on).
    pub fn reconstruct(&self, grids: &[CodeGrid], threshold: f64) -> Result<Vec<PianoRollMeasure>> {
        if grids.is_empty() {
            return Ok(Vec::new());
        }
        let probs = self.decode(&self.embed_codes(grids)?)?;
        let per = self.config.tones * TIMESTEPS * self.config.voices;
        probs
            .data()
            .chunks(per)
            .map(|p| PianoRollMeasure::from_probabilities(p, self.config.tones, self.config.voices, threshold))
            .collect()
    }

    /// One Adam step on a batch in train mode.
    pub fn train_step(&mut self, adam: &mut Adam<T>, x: &Tensor<T>) -> Result<VqLosses> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, true);
        let xv = tape.constant(x.clone());
        let z_e = self.encode_on(&mut tape, &p, xv, NormMode::Train)?;
        let q = quantize(&mut tape, z_e, p.var("codebook"))?;
        let probs = self.decode_on(&mut tape, &p, q.straight_through, NormMode::Train)?;
        let (total, [bce, cb, commit]) = vqvae_loss(&mut tape, x, probs, z_e, q.z_q, self.config.beta)?;
        let scalar = |v: Var| tape.value(v).data()[0].to_f64().unwrap_or(f64::NAN);
        let losses = VqLosses {
            reconstruction: scalar(bce),
            codebook: scalar(cb),
            commitment: scalar(commit),
            total: scalar(total),
        };
        let grads = tape.backward(total)?;
        let grads = p.grads(&tape, &grads);
        adam.step(&mut self.params.tensors, grads.iter().map(|(k, g)| (k.as_str(), g.clone())))?;
        Ok(losses)
    }
}
