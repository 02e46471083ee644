//! Seeded synthetic datasets with known attribute/object structure.
//!
//! Every attribute `a` gets a unit latent `α_a ∈ R^d` and every object `o` a
//! unit latent `ω_o`. An image of pair `(a, o)` carries `α_a` (plus noise) at
//! the first `⌈l/2⌉` positions and `ω_o` (plus noise) at the rest.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding_store::{Dataset, ImageRecord, Pair, Split, WordVectors};
use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::rng::{stream_rng, Rng, STREAM_SYNTH};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_attr: usize,
    pub n_obj: usize,
    /// Channels per position; must be even.
    pub d: usize,
    /// Spatial positions.
    pub l: usize,
    pub images_per_pair: usize,
    pub sigma: f64,
    pub unseen_frac: f64,
    pub word_dim: usize,
    pub seed: u64,
    /// Seen-pair train fraction; val takes `val_frac`, test the remainder.
    pub train_frac: f64,
    pub val_frac: f64,
    /// Unseen-pair val fraction; test takes the remainder.
    pub unseen_val_frac: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_attr: 8,
            n_obj: 10,
            d: 16,
            l: 8,
            images_per_pair: 10,
            sigma: 0.1,
            unseen_frac: 0.25,
            word_dim: 16,
            seed: 42,
            train_frac: 0.6,
            val_frac: 0.2,
            unseen_val_frac: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_attr == 0 || self.n_obj == 0 {
            return bad("n_attr and n_obj must be at least 1");
        }
        if self.d == 0 || !self.d.is_multiple_of(2) {
            return bad("d must be a positive even number");
        }
        if self.l == 0 || self.images_per_pair == 0 || self.word_dim == 0 {
            return bad("l, images_per_pair and word_dim must be at least 1");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.unseen_frac) {
            return bad("unseen_frac must lie in [0, 1)");
        }
        let fracs = [self.train_frac, self.val_frac, self.unseen_val_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || self.train_frac + self.val_frac > 1.0 {
            return bad("split fractions must lie in [0, 1] and train_frac + val_frac ≤ 1");
        }
        Ok(())
    }

    /// Number of spatial positions carrying the attribute signal.
    pub fn attr_positions(&self) -> usize {
        self.l.div_ceil(2)
    }
}

/// Generated dataset plus the ground-truth latents behind it.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub attr_latents: Vec<Vec<f64>>,
    pub obj_latents: Vec<Vec<f64>>,
}

pub fn synth_generate(config: &SynthConfig) -> Result<Dataset> {
    synth_generate_with_latents(config).map(|o| o.dataset)
}

fn round_f32(v: f64) -> f64 {
    f64::from(v as f32)
}

fn normal_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    loop {
        let v = normal_vec(rng, n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Greedily holds out `count` pairs in shuffled order, skipping any holdout
/// that would leave a primitive without a training pair.
fn choose_unseen(
    rng: &mut Rng,
    pairs: &[Pair],
    n_attr: usize,
    n_obj: usize,
    count: usize,
) -> Result<Vec<bool>> {
    let mut attr_left = vec![0usize; n_attr];
    let mut obj_left = vec![0usize; n_obj];
    for p in pairs {
        attr_left[p.attr] += 1;
        obj_left[p.obj] += 1;
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(rng);
    let mut unseen = vec![false; pairs.len()];
    let mut held = 0;
    for i in order {
        if held == count {
            break;
        }
        let p = pairs[i];
        if attr_left[p.attr] > 1 && obj_left[p.obj] > 1 {
            attr_left[p.attr] -= 1;
            obj_left[p.obj] -= 1;
            unseen[i] = true;
            held += 1;
        }
    }
    if held < count {
        return Err(Error::Config(format!(
            "cannot hold out {count} of {} pairs without orphaning a primitive (managed {held})",
            pairs.len()
        )));
    }
    Ok(unseen)
}

fn split_counts(n: usize, fracs: &[f64]) -> Vec<usize> {
    let mut left = n;
    let mut out = Vec::with_capacity(fracs.len() + 1);
    for &f in fracs {
        let k = ((n as f64) * f).round() as usize;
        let k = k.min(left);
        out.push(k);
        left -= k;
    }
    out.push(left);
    out
}

pub fn synth_generate_with_latents(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, STREAM_SYNTH);
    let (d, l) = (config.d, config.l);

    let attr_latents: Vec<Vec<f64>> = (0..config.n_attr).map(|_| unit_vec(&mut rng, d)).collect();
    let obj_latents: Vec<Vec<f64>> = (0..config.n_obj).map(|_| unit_vec(&mut rng, d)).collect();
    let round_all = |vs: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        vs.into_iter()
            .map(|v| v.into_iter().map(round_f32).collect())
            .collect()
    };
    let attr_words = round_all(
        (0..config.n_attr)
            .map(|_| normal_vec(&mut rng, config.word_dim))
            .collect(),
    );
    let obj_words = round_all(
        (0..config.n_obj)
            .map(|_| normal_vec(&mut rng, config.word_dim))
            .collect(),
    );

    let pairs: Vec<Pair> = (0..config.n_attr)
        .flat_map(|attr| (0..config.n_obj).map(move |obj| Pair { attr, obj }))
        .collect();
    let holdout = (config.unseen_frac * pairs.len() as f64).ceil() as usize;
    let unseen = choose_unseen(&mut rng, &pairs, config.n_attr, config.n_obj, holdout)?;

    let attributes: Vec<String> = (0..config.n_attr).map(|i| format!("attr{i:02}")).collect();
    let objects: Vec<String> = (0..config.n_obj).map(|i| format!("obj{i:02}")).collect();

    let n = config.images_per_pair;
    let seen_counts = split_counts(n, &[config.train_frac, config.val_frac]);
    let unseen_counts = split_counts(n, &[0.0, config.unseen_val_frac]);
    let attr_positions = config.attr_positions();

    let mut images = Vec::with_capacity(pairs.len() * n);
    for (pi, p) in pairs.iter().enumerate() {
        let counts = if unseen[pi] { &unseen_counts } else { &seen_counts };
        let splits = std::iter::repeat_n(Split::Train, counts[0])
            .chain(std::iter::repeat_n(Split::Val, counts[1]))
            .chain(std::iter::repeat_n(Split::Test, counts[2]));
        for (k, split) in splits.enumerate() {
            let mut data = vec![0.0; d * l];
            for j in 0..l {
                let base = if j < attr_positions {
                    &attr_latents[p.attr]
                } else {
                    &obj_latents[p.obj]
                };
                for c in 0..d {
                    let noise: f64 = rng.sample(StandardNormal);
                    data[c * l + j] = round_f32(base[c] + config.sigma * noise);
                }
            }
            images.push(ImageRecord {
                id: format!("{}-{}-{k:03}", attributes[p.attr], objects[p.obj]),
                attr: p.attr,
                obj: p.obj,
                split,
                feature: Tensor::new(vec![d, l], data)?,
            });
        }
    }

    let words = WordVectors::new(attr_words, obj_words)?;
    let dataset = Dataset::new(attributes, objects, pairs, words, images)?;
    Ok(SynthOutput {
        dataset,
        attr_latents,
        obj_latents,
    })
}
