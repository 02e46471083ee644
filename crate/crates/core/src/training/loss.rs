//! Composite cross-entropy objective over a triplet batch.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::disentangle;
use crate::embedding_store::Dataset;
use crate::error::{Error, Result};
use crate::model::{
    attr_word_matrix, feature_tensor, obj_word_matrix, ops, pair_word_matrix, ModelParams,
    ParamVars,
};
use crate::numeric::{Graph, Tensor, Var};
use crate::scalar::Scalar;
use crate::training::sampling::Triplet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub pair: f64,
    pub attr: f64,
    pub obj: f64,
    pub non_attr: f64,
    pub non_obj: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pair: 1.0,
            attr: 1.0,
            obj: 1.0,
            non_attr: 1.0,
            non_obj: 1.0,
        }
    }
}

impl LossWeights {
    pub fn pair_only() -> Self {
        Self {
            pair: 1.0,
            attr: 0.0,
            obj: 0.0,
            non_attr: 0.0,
            non_obj: 0.0,
        }
    }

    fn any_auxiliary(&self) -> bool {
        [self.attr, self.obj, self.non_attr, self.non_obj]
            .iter()
            .any(|&w| w != 0.0)
    }
}

/// Dataset-derived constants reused by every batch: feature maps and word
/// matrices in the model's scalar type, and the seen-pair candidate list.
#[derive(Clone, Debug)]
pub struct LossContext<T: Scalar = f64> {
    pub features: Vec<Tensor<T>>,
    /// Training candidates: seen pair indices, ascending.
    pub seen_pairs: Vec<usize>,
    seen_position: Vec<Option<usize>>,
    pub pair_words: Tensor<T>,
    pub attr_words: Tensor<T>,
    pub obj_words: Tensor<T>,
    attr_of: Vec<usize>,
    obj_of: Vec<usize>,
    pair_of: Vec<usize>,
}

impl<T: Scalar> LossContext<T> {
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let vocab = dataset.vocab();
        let seen_pairs = vocab.seen_pairs();
        let mut seen_position = vec![None; vocab.num_pairs()];
        for (pos, &p) in seen_pairs.iter().enumerate() {
            seen_position[p] = Some(pos);
        }
        let seen: Vec<_> = seen_pairs.iter().map(|&p| vocab.pair(p)).collect();
        Ok(Self {
            features: dataset.images().iter().map(|i| feature_tensor(&i.feature)).collect(),
            seen_position,
            pair_words: pair_word_matrix(dataset.words(), &seen)?,
            attr_words: attr_word_matrix(dataset.words())?,
            obj_words: obj_word_matrix(dataset.words())?,
            attr_of: dataset.images().iter().map(|i| i.attr).collect(),
            obj_of: dataset.images().iter().map(|i| i.obj).collect(),
            pair_of: dataset.images().iter().map(|i| dataset.pair_index_of(i)).collect(),
            seen_pairs,
        })
    }

    /// Adds every image the batch touches as a constant node.
    pub fn constant_features(&self, g: &mut Graph<T>, batch: &[Triplet]) -> BTreeMap<usize, Var> {
        let mut out = BTreeMap::new();
        for t in batch {
            for i in [Some(t.anchor), t.same_attr, t.same_obj].into_iter().flatten() {
                out.entry(i)
                    .or_insert_with(|| g.constant(self.features[i].clone()));
            }
        }
        out
    }
}

fn weighted_ce<T: Scalar>(
    g: &mut Graph<T>,
    terms: &mut Vec<Var>,
    weight: f64,
    logits: impl FnOnce(&mut Graph<T>) -> Result<Var>,
    target: usize,
) -> Result<()> {
    if weight == 0.0 {
        return Ok(());
    }
    let l = logits(g)?;
    let ce = g.cross_entropy(l, target)?;
    terms.push(g.scale(ce, T::lit(weight)));
    Ok(())
}

/// Records the batch objective on `g` and returns its scalar node.
///
/// `features` maps image indices to the feature-map nodes to use; training
/// passes constants, gradient checks may pass differentiable leaves.
pub fn batch_loss_node<T: Scalar>(
    g: &mut Graph<T>,
    p: &ParamVars<T>,
    ctx: &LossContext<T>,
    batch: &[Triplet],
    features: &BTreeMap<usize, Var>,
    weights: &LossWeights,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Contract("batch_loss needs a non-empty batch".into()));
    }
    let feature = |i: usize| {
        features
            .get(&i)
            .copied()
            .ok_or_else(|| Error::Contract(format!("no feature node for image {i}")))
    };

    let pair_emb = if weights.pair != 0.0 {
        let words = g.constant(ctx.pair_words.clone());
        Some(ops::pair_embeddings(g, p, words)?)
    } else {
        None
    };
    let needs_heads = weights.any_auxiliary() && batch.iter().any(Triplet::is_complete);
    let heads = if needs_heads {
        let aw = g.constant(ctx.attr_words.clone());
        let ow = g.constant(ctx.obj_words.clone());
        Some((ops::attr_embeddings(g, p, aw)?, ops::obj_embeddings(g, p, ow)?))
    } else {
        None
    };

    // projects a length-d vector through the visual head, giving e×1
    let project = |g: &mut Graph<T>, v: Var| -> Result<Var> {
        let d = g.value(v).len();
        let col = g.reshape(v, &[d, 1])?;
        ops::project_visual(g, p, col)
    };
    let logits_against = |g: &mut Graph<T>, q: Var, cands: Var| -> Result<Var> {
        let s = ops::scores(g, p, q, cands)?;
        let n = g.value(s).len();
        g.reshape(s, &[n])
    };

    let mut terms = Vec::new();
    for t in batch {
        let f = feature(t.anchor)?;
        if let Some(pair_emb) = pair_emb {
            let target = ctx.seen_position[ctx.pair_of[t.anchor]].ok_or_else(|| {
                Error::Contract(format!("anchor {} does not carry a seen pair", t.anchor))
            })?;
            weighted_ce(
                g,
                &mut terms,
                weights.pair,
                |g| {
                    let pooled = ops::mean_pool(g, f)?;
                    let img = ops::project_visual(g, p, pooled)?;
                    logits_against(g, img, pair_emb)
                },
                target,
            )?;
        }

        let (Some((attr_emb, obj_emb)), Some(fa_idx), Some(fo_idx)) = (heads, t.same_attr, t.same_obj)
        else {
            continue;
        };
        let fa = feature(fa_idx)?;
        let fo = feature(fo_idx)?;
        let v = disentangle::ops::disentangle(g, f, fa, fo)?;
        let targets = [
            (weights.attr, v.v_attr, attr_emb, ctx.attr_of[t.anchor]),
            (weights.obj, v.v_obj, obj_emb, ctx.obj_of[t.anchor]),
            (weights.non_attr, v.v_non_attr, attr_emb, ctx.attr_of[fo_idx]),
            (weights.non_obj, v.v_non_obj, obj_emb, ctx.obj_of[fa_idx]),
        ];
        for (w, feat, cands, target) in targets {
            weighted_ce(
                g,
                &mut terms,
                w,
                |g| {
                    let q = project(g, feat)?;
                    logits_against(g, q, cands)
                },
                target,
            )?;
        }
    }
    let total = g.add_all(&terms)?;
    Ok(g.scale(total, T::one() / T::lit(batch.len() as f64)))
}

/// Value of the batch objective.
pub fn batch_loss<T: Scalar>(
    params: &ModelParams<T>,
    ctx: &LossContext<T>,
    batch: &[Triplet],
    weights: &LossWeights,
) -> Result<T> {
    let mut g = Graph::new();
    let p = params.attach(&mut g, false);
    let feats = ctx.constant_features(&mut g, batch);
    let loss = batch_loss_node(&mut g, &p, ctx, batch, &feats, weights)?;
    Ok(g.value(loss).item())
}

/// Objective value and its gradient for every parameter tensor, in
/// [`crate::model::PARAM_NAMES`] order.
pub fn loss_and_grads<T: Scalar>(
    params: &ModelParams<T>,
    ctx: &LossContext<T>,
    batch: &[Triplet],
    weights: &LossWeights,
) -> Result<(T, Vec<Tensor<T>>)> {
    let mut g = Graph::new();
    let p = params.attach(&mut g, true);
    let feats = ctx.constant_features(&mut g, batch);
    let loss = batch_loss_node(&mut g, &p, ctx, batch, &feats, weights)?;
    let value = g.value(loss).item();
    let grads = g.backward(loss)?;
    let out = p
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| grads.get_or_zeros(v, t.shape()))
        .collect();
    Ok((value, out))
}
