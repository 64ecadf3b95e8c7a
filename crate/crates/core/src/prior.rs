//! Second stage: gated masked-convolution autoregressive model over code grids,
//! conditioned on chord triplets and optionally the previous measure's grid.

use recomp_tensor::{init, Adam, ConvOpts, MaskKind, MaskSpec, Rng, Scalar, Tape, Tensor, TensorError, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmony::{ChordTriplet, ChordVocab};
use crate::nn::{Bound, Params};
use crate::vqvae::CodeGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub codebook_size: usize,
    /// Projection channels of every gated layer.
    pub channels: usize,
    pub layers: usize,
    pub first_kernel: usize,
    pub kernel: usize,
    pub chord_vocab: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    /// Whether the previous measure's grid is an input.
    pub spatial: bool,
}

impl PriorConfig {
    pub fn new(chord_vocab: usize, spatial: bool) -> Self {
        Self {
            codebook_size: 256,
            channels: 64,
            layers: 15,
            first_kernel: 5,
            kernel: 3,
            chord_vocab,
            grid_h: 13,
            grid_w: 4,
            spatial,
        }
    }

    fn validate(&self) -> Result<()> {
        if [self.codebook_size, self.channels, self.layers, self.chord_vocab, self.grid_h, self.grid_w].contains(&0) {
            return Err(Error::invalid("prior sizes must be positive"));
        }
        MaskSpec::new(MaskKind::A, self.first_kernel, self.first_kernel)?;
        MaskSpec::new(MaskKind::B, self.kernel, self.kernel)?;
        Ok(())
    }

    pub fn positions(&self) -> usize {
        self.grid_h * self.grid_w
    }
}

/// What one measure is generated from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CondSpec {
    pub triplet: ChordTriplet,
    /// Previous measure's grid; `None` gives an all-zero spatial map.
    pub spatial: Option<CodeGrid>,
}

impl CondSpec {
    pub fn chords(triplet: ChordTriplet) -> Self {
        Self { triplet, spatial: None }
    }
}

pub(crate) fn layer_name(l: usize) -> String {
    format!("layer{l:02}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prior<T> {
    pub config: PriorConfig,
    pub params: Params<T>,
}

impl<T: Scalar> Prior<T> {
    pub fn new(config: PriorConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (c, k, v) = (config.channels, config.codebook_size, config.chord_vocab);
        let mut p = Params::new();
        p.insert("code_embed", init::glorot_uniform(&[k, c], k, c, rng));
        for table in ["chord_prev", "chord_cur", "chord_next"] {
            p.insert(table, init::glorot_uniform(&[v, c], v, c, rng));
        }
        if config.spatial {
            p.insert("spatial_embed", init::glorot_uniform(&[k, c], k, c, rng));
        }
        for l in 0..config.layers {
            let name = layer_name(l);
            let ks = if l == 0 { config.first_kernel } else { config.kernel };
            p.insert(format!("{name}.kernel"), init::conv_kernel(ks, ks, c, 2 * c, rng));
            p.insert(format!("{name}.bias"), Tensor::zeros(vec![2 * c]));
            p.insert(format!("{name}.cond_vec"), init::glorot_uniform(&[3 * c, 2 * c], 3 * c, 2 * c, rng));
            if config.spatial {
                p.insert(format!("{name}.cond_spatial"), init::conv_kernel(1, 1, c, 2 * c, rng));
            }
        }
        p.insert("head0.kernel", init::conv_kernel(1, 1, c, c, rng));
        p.insert("head0.bias", Tensor::zeros(vec![c]));
        p.insert("head1.kernel", init::conv_kernel(1, 1, c, k, rng));
        p.insert("head1.bias", Tensor::zeros(vec![k]));
        Ok(Self { config, params: p })
    }

    fn check_inputs(&self, grids: &[CodeGrid], conds: &[CondSpec]) -> Result<()> {
        let cfg = &self.config;
        if grids.is_empty() || grids.len() != conds.len() {
            return Err(Error::invalid(format!(
                "{} grids with {} conditioning entries",
                grids.len(),
                conds.len()
            )));
        }
        for g in grids.iter().chain(conds.iter().filter_map(|c| c.spatial.as_ref())) {
            if (g.h, g.w) != (cfg.grid_h, cfg.grid_w) {
                return Err(Error::invalid(format!(
                    "grid {}x{} does not match the prior's {}x{}",
                    g.h, g.w, cfg.grid_h, cfg.grid_w
                )));
            }
            g.check(cfg.codebook_size)?;
        }
        if !cfg.spatial && conds.iter().any(|c| c.spatial.is_some()) {
            return Err(Error::invalid("this prior was built without spatial conditioning"));
        }
        for c in conds {
            if let Some(&id) = c.triplet.ids().iter().find(|&&id| id >= cfg.chord_vocab) {
                return Err(TensorError::Index {
                    op: "chord embedding",
                    index: id,
                    size: cfg.chord_vocab,
                }
                .into());
            }
        }
        Ok(())
    }

    /// Teacher-forced logits `[N, h, w, K]`; position `p` sees only grid entries before `p`.
    pub fn logits_on(&self, tape: &mut Tape<T>, p: &Bound, grids: &[CodeGrid], conds: &[CondSpec]) -> Result<Var> {
        self.check_inputs(grids, conds)?;
        let cfg = &self.config;
        let n = grids.len();
        let c = cfg.channels;
        let lead = [n, cfg.grid_h, cfg.grid_w];
        let ids: Vec<usize> = grids.iter().flat_map(|g| g.ids()).collect();
        let mut x = tape.embedding(p.var("code_embed"), &ids, &lead)?;

        let pick = |f: fn(&ChordTriplet) -> usize| conds.iter().map(|c| f(&c.triplet)).collect::<Vec<_>>();
        let prev = tape.embedding(p.var("chord_prev"), &pick(|t| t.prev), &[n])?;
        let cur = tape.embedding(p.var("chord_cur"), &pick(|t| t.cur), &[n])?;
        let next = tape.embedding(p.var("chord_next"), &pick(|t| t.next), &[n])?;
        let h = tape.concat_last(&[prev, cur, next])?;

        let spatial = if cfg.spatial {
            let ids: Vec<Option<usize>> = conds
                .iter()
                .flat_map(|cd| match &cd.spatial {
                    Some(g) => g.ids().map(Some).collect::<Vec<_>>(),
                    None => vec![None; cfg.positions()],
                })
                .collect();
            Some(tape.embedding_or_zero(p.var("spatial_embed"), &ids, &lead)?)
        } else {
            None
        };

        for l in 0..cfg.layers {
            let name = layer_name(l);
            let (kind, ks) = if l == 0 {
                (MaskKind::A, cfg.first_kernel)
            } else {
                (MaskKind::B, cfg.kernel)
            };
            let mask = MaskSpec::new(kind, ks, ks)?;
            let mut pre = tape.conv2d(
                x,
                p.var(&format!("{name}.kernel")),
                Some(p.var(&format!("{name}.bias"))),
                ConvOpts::masked(mask),
            )?;
            let cv = tape.matmul(h, p.var(&format!("{name}.cond_vec")))?;
            pre = tape.add_channels(pre, cv)?;
            if let Some(s) = spatial {
                let sc = tape.conv2d(s, p.var(&format!("{name}.cond_spatial")), None, ConvOpts::default())?;
                pre = tape.add(pre, sc)?;
            }
            let f = tape.slice_last(pre, 0, c)?;
            let g = tape.slice_last(pre, c, c)?;
            let out = tape.gated_unit(f, g)?;
            x = if l == 0 { out } else { tape.add(x, out)? };
        }
        let h0 = tape.conv2d(x, p.var("head0.kernel"), Some(p.var("head0.bias")), ConvOpts::default())?;
        let h0 = tape.relu(h0)?;
        Ok(tape.conv2d(h0, p.var("head1.kernel"), Some(p.var("head1.bias")), ConvOpts::default())?)
    }

    pub fn logits(&self, grids: &[CodeGrid], conds: &[CondSpec]) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let l = self.logits_on(&mut tape, &p, grids, conds)?;
        Ok(tape.value(l).clone())
    }

    /// Mean categorical cross-entropy of the teacher-forced logits.
    pub fn loss_on(&self, tape: &mut Tape<T>, p: &Bound, grids: &[CodeGrid], conds: &[CondSpec]) -> Result<Var> {
        let logits = self.logits_on(tape, p, grids, conds)?;
        let targets: Vec<usize> = grids.iter().flat_map(|g| g.ids()).collect();
        Ok(tape.cross_entropy(logits, &targets)?)
    }

    pub fn train_step(&mut self, adam: &mut Adam<T>, grids: &[CodeGrid], conds: &[CondSpec]) -> Result<f64> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, true);
        let loss = self.loss_on(&mut tape, &p, grids, conds)?;
        let value = tape.value(loss).data()[0].to_f64().unwrap_or(f64::NAN);
        let grads = tape.backward(loss)?;
        let grads = p.grads(&tape, &grads);
        adam.step(&mut self.params.tensors, grads.iter().map(|(k, g)| (k.as_str(), g.clone())))?;
        Ok(value)
    }

    /// Sample one grid per conditioning entry in raster order, one network
    /// evaluation per position. Temperature 0 takes the argmax (lowest index on ties).
    /// Random draws are taken position by position, then entry by entry.
    pub fn sample(&self, conds: &[CondSpec], temperature: f64, rng: &mut Rng) -> Result<Vec<CodeGrid>> {
        if !(temperature >= 0.0) || !temperature.is_finite() {
            return Err(Error::invalid(format!("temperature must be a finite value >= 0, got {temperature}")));
        }
        let cfg = &self.config;
        let k = cfg.codebook_size;
        let mut grids = vec![CodeGrid::zeros(cfg.grid_h, cfg.grid_w); conds.len()];
        if conds.is_empty() {
            return Ok(grids);
        }
        for pos in 0..cfg.positions() {
            let logits = self.logits(&grids, conds)?;
            for (n, g) in grids.iter_mut().enumerate() {
                let off = (n * cfg.positions() + pos) * k;
                let row: Vec<f64> = logits.data()[off..off + k]
                    .iter()
                    .map(|v| v.to_f64().unwrap_or(f64::NAN))
                    .collect();
                g.codes[pos] = pick(&row, temperature, rng) as u16;
            }
        }
        Ok(grids)
    }
}

fn pick(logits: &[f64], temperature: f64, rng: &mut Rng) -> usize {
    if temperature == 0.0 {
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        return best;
    }
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let weights: Vec<f64> = logits.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    rng.categorical(&weights)
}

/// Triplet ids for each interior position of a label sequence whose first and
/// last labels are the boundary repeats.
pub fn interior_triplets(labels: &[&str], vocab: &ChordVocab) -> Result<Vec<ChordTriplet>> {
    if labels.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 chord labels (including both boundary repeats), got {}",
            labels.len()
        )));
    }
    let ids = labels.iter().map(|l| vocab.require(l)).collect::<Result<Vec<_>>>()?;
    Ok(ids.windows(3).map(|w| ChordTriplet::new(w[0], w[1], w[2])).collect())
}

/// One grid per interior label. With `use_spatial`, each measure is also conditioned on
/// the grid sampled for the measure before it (the first measure gets the zero map).
pub fn generate_sequence<T: Scalar>(
    prior: &Prior<T>,
    labels: &[&str],
    vocab: &ChordVocab,
    use_spatial: bool,
    temperature: f64,
    seed: u64,
) -> Result<Vec<CodeGrid>> {
    let triplets = interior_triplets(labels, vocab)?;
    if use_spatial && !prior.config.spatial {
        return Err(Error::invalid("spatial generation needs a prior trained with spatial conditioning"));
    }
    let mut rng = Rng::seed(seed);
    let mut out: Vec<CodeGrid> = Vec::with_capacity(triplets.len());
    for t in triplets {
        let cond = CondSpec {
            triplet: t,
            spatial: if use_spatial { out.last().cloned() } else { None },
        };
        out.push(prior.sample(&[cond], temperature, &mut rng)?.remove(0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(spatial: bool) -> PriorConfig {
        PriorConfig {
            codebook_size: 5,
            channels: 4,
            layers: 3,
            first_kernel: 3,
            kernel: 3,
            chord_vocab: 3,
            grid_h: 3,
            grid_w: 2,
            spatial,
        }
    }

    #[test]
    fn reference_layout() {
        let m: Prior<f32> = Prior::new(PriorConfig::new(7, true), &mut Rng::seed(0)).unwrap();
        assert_eq!(m.params.get("layer00.kernel").unwrap().shape(), [5, 5, 64, 128]);
        assert_eq!(m.params.get("layer14.kernel").unwrap().shape(), [3, 3, 64, 128]);
        assert!(m.params.get("layer15.kernel").is_err());
        assert_eq!(m.params.get("head1.kernel").unwrap().shape(), [1, 1, 64, 256]);
        assert_eq!(m.params.get("layer03.cond_vec").unwrap().shape(), [192, 128]);
        let g = CodeGrid::zeros(13, 4);
        let l = m.logits(&[g], &[CondSpec::chords(ChordTriplet::new(0, 1, 2))]).unwrap();
        assert_eq!(l.shape(), [1, 13, 4, 256]);
    }

    #[test]
    fn chord_ids_are_range_checked() {
        let m: Prior<f64> = Prior::new(tiny(false), &mut Rng::seed(0)).unwrap();
        let e = m.logits(&[CodeGrid::zeros(3, 2)], &[CondSpec::chords(ChordTriplet::new(0, 3, 0))]);
        assert!(matches!(e, Err(Error::Tensor(TensorError::Index { .. }))));
    }

    #[test]
    fn spatial_input_needs_spatial_model() {
        let m: Prior<f64> = Prior::new(tiny(false), &mut Rng::seed(0)).unwrap();
        let c = CondSpec {
            triplet: ChordTriplet::new(0, 0, 0),
            spatial: Some(CodeGrid::zeros(3, 2)),
        };
        assert!(m.logits(&[CodeGrid::zeros(3, 2)], &[c]).is_err());
    }

    #[test]
    fn greedy_sampling_is_self_consistent() {
        let m: Prior<f64> = Prior::new(tiny(true), &mut Rng::seed(4)).unwrap();
        let cond = CondSpec::chords(ChordTriplet::new(1, 2, 0));
        let a = m.sample(&[cond.clone()], 0.0, &mut Rng::seed(1)).unwrap();
        let b = m.sample(&[cond.clone()], 0.0, &mut Rng::seed(2)).unwrap();
        assert_eq!(a, b);
        let logits = m.logits(&a, &[cond]).unwrap();
        let argmax: Vec<u16> = logits
            .data()
            .chunks(5)
            .map(|r| pick(&r.to_vec(), 0.0, &mut Rng::seed(0)) as u16)
            .collect();
        assert_eq!(argmax, a[0].codes);
    }

    #[test]
    fn seeded_sampling_repeats() {
        let m: Prior<f64> = Prior::new(tiny(false), &mut Rng::seed(4)).unwrap();
        let cond = [CondSpec::chords(ChordTriplet::new(0, 1, 2))];
        let a = m.sample(&cond, 1.0, &mut Rng::seed(8)).unwrap();
        assert_eq!(a, m.sample(&cond, 1.0, &mut Rng::seed(8)).unwrap());
        assert!(m.sample(&cond, -1.0, &mut Rng::seed(8)).is_err());
    }

    #[test]
    fn sequence_length_and_unknown_labels() {
        let vocab = crate::harmony::build_chord_vocab(["I", "IV", "V"]);
        let m: Prior<f64> = Prior::new(tiny(true), &mut Rng::seed(4)).unwrap();
        let labels = ["I", "I", "IV", "V", "I", "I"];
        let seq = generate_sequence(&m, &labels, &vocab, true, 1.0, 3).unwrap();
        assert_eq!(seq.len(), 4);
        let e = generate_sequence(&m, &["I", "vi", "I"], &vocab, false, 1.0, 3).unwrap_err();
        assert!(matches!(e, Error::UnknownChord { .. }));
        assert!(generate_sequence(&m, &["I", "I"], &vocab, false, 1.0, 3).is_err());
    }
}
