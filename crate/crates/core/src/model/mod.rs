//! Visual head, compositional word encoder, primitive word heads, and the
//! cosine classifier over attribute–object pairs.
//!
//! Image embedding: mean over the `l` positions of a `d×l` feature map, then
//! an affine map to `R^e`. Pair embedding: a two-layer rectifier network on
//! the concatenated `[attr ∥ obj]` word vectors. Primitive embeddings: one
//! affine head per primitive kind. Scores are `cos(image, pair) / τ`.

mod checkpoint;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::embedding_store::{FeatureMap, Pair, WordVectors};
use crate::error::{Error, Result};
use crate::numeric::{softmax, Graph, Tensor, Var};
use crate::rng::{stream_rng, STREAM_INIT};
use crate::scalar::Scalar;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
    CheckpointHeader, CHECKPOINT_MAGIC,
};

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_EMBED: usize = 32;
pub const DEFAULT_TEMPERATURE: f64 = 0.05;

/// Sizes fixed at construction: feature channels `d`, positions `l`, word
/// width `w`, hidden width `h`, embedding width `e`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d: usize,
    pub l: usize,
    pub w: usize,
    pub h: usize,
    pub e: usize,
}

impl ModelDims {
    pub fn new(d: usize, l: usize, w: usize) -> Self {
        Self {
            d,
            l,
            w,
            h: DEFAULT_HIDDEN,
            e: DEFAULT_EMBED,
        }
    }
}

/// All trainable tensors of the model plus the fixed temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Scalar = f64> {
    pub dims: ModelDims,
    pub temperature: T,
    pub visual_w: Tensor<T>,
    pub visual_b: Tensor<T>,
    pub pair_w1: Tensor<T>,
    pub pair_b1: Tensor<T>,
    pub pair_w2: Tensor<T>,
    pub pair_b2: Tensor<T>,
    pub attr_w: Tensor<T>,
    pub attr_b: Tensor<T>,
    pub obj_w: Tensor<T>,
    pub obj_b: Tensor<T>,
}

/// Names of the parameter tensors, in [`ModelParams::tensors`] order.
pub const PARAM_NAMES: [&str; 10] = [
    "visual_w", "visual_b", "pair_w1", "pair_b1", "pair_w2", "pair_b2", "attr_w", "attr_b",
    "obj_w", "obj_b",
];

fn xavier<T: Scalar>(rng: &mut crate::rng::Rng, rows: usize, cols: usize) -> Tensor<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::lit(rng.random_range(-bound..=bound)))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

impl<T: Scalar> ModelParams<T> {
    /// Glorot-uniform weights from the `init` stream of `seed`, zero biases.
    pub fn init(dims: ModelDims, temperature: T, seed: u64) -> Result<Self> {
        // negated so that NaN is rejected too
        if !(temperature > T::zero()) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if [dims.d, dims.l, dims.w, dims.h, dims.e].contains(&0) {
            return Err(Error::Config(format!("model dimensions must be positive: {dims:?}")));
        }
        let mut rng = stream_rng(seed, STREAM_INIT);
        let ModelDims { d, w, h, e, .. } = dims;
        Ok(Self {
            dims,
            temperature,
            visual_w: xavier(&mut rng, e, d),
            visual_b: Tensor::zeros(&[e]),
            pair_w1: xavier(&mut rng, h, 2 * w),
            pair_b1: Tensor::zeros(&[h]),
            pair_w2: xavier(&mut rng, e, h),
            pair_b2: Tensor::zeros(&[e]),
            attr_w: xavier(&mut rng, e, w),
            attr_b: Tensor::zeros(&[e]),
            obj_w: xavier(&mut rng, e, w),
            obj_b: Tensor::zeros(&[e]),
        })
    }

    pub fn tensors(&self) -> [&Tensor<T>; 10] {
        [
            &self.visual_w,
            &self.visual_b,
            &self.pair_w1,
            &self.pair_b1,
            &self.pair_w2,
            &self.pair_b2,
            &self.attr_w,
            &self.attr_b,
            &self.obj_w,
            &self.obj_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 10] {
        [
            &mut self.visual_w,
            &mut self.visual_b,
            &mut self.pair_w1,
            &mut self.pair_b1,
            &mut self.pair_w2,
            &mut self.pair_b2,
            &mut self.attr_w,
            &mut self.attr_b,
            &mut self.obj_w,
            &mut self.obj_b,
        ]
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameter values concatenated in [`PARAM_NAMES`] order.
    pub fn flatten(&self) -> Tensor<T> {
        let mut data = Vec::with_capacity(self.num_values());
        for t in self.tensors() {
            data.extend_from_slice(t.data());
        }
        Tensor::vector(data)
    }

    /// Inverse of [`flatten`](Self::flatten), keeping dims and temperature.
    pub fn with_flat(&self, flat: &Tensor<T>) -> Result<Self> {
        if flat.len() != self.num_values() {
            return Err(Error::dim("with_flat", &[self.num_values()], flat.shape()));
        }
        let mut out = self.clone();
        let mut offset = 0;
        for t in out.tensors_mut() {
            let n = t.len();
            *t = Tensor::new(t.shape().to_vec(), flat.data()[offset..offset + n].to_vec())?;
            offset += n;
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.temperature.is_finite() && self.tensors().iter().all(|t| t.is_finite())
    }

    /// Registers every tensor on `g`, as trainable leaves or as constants.
    pub fn attach(&self, g: &mut Graph<T>, trainable: bool) -> ParamVars<T> {
        let [visual_w, visual_b, pair_w1, pair_b1, pair_w2, pair_b2, attr_w, attr_b, obj_w, obj_b] =
            self.tensors().map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            });
        ParamVars {
            temperature: self.temperature,
            visual_w,
            visual_b,
            pair_w1,
            pair_b1,
            pair_w2,
            pair_b2,
            attr_w,
            attr_b,
            obj_w,
            obj_b,
        }
    }

    /// Carves parameter nodes out of one flat vector node laid out as
    /// [`flatten`](Self::flatten) produces.
    pub fn attach_flat(&self, g: &mut Graph<T>, flat: Var) -> Result<ParamVars<T>> {
        let mut offset = 0;
        let mut vars = Vec::with_capacity(10);
        for t in self.tensors() {
            let s = g.slice(flat, offset, t.len())?;
            vars.push(g.reshape(s, t.shape())?);
            offset += t.len();
        }
        Ok(ParamVars {
            temperature: self.temperature,
            visual_w: vars[0],
            visual_b: vars[1],
            pair_w1: vars[2],
            pair_b1: vars[3],
            pair_w2: vars[4],
            pair_b2: vars[5],
            attr_w: vars[6],
            attr_b: vars[7],
            obj_w: vars[8],
            obj_b: vars[9],
        })
    }

    fn check_feature(&self, f: &FeatureMap) -> Result<()> {
        let want = [self.dims.d, self.dims.l];
        if f.shape() != want {
            return Err(Error::dim("encode_image", f.shape(), &want));
        }
        Ok(())
    }

    fn check_word(&self, v: &[T]) -> Result<()> {
        if v.len() != self.dims.w {
            return Err(Error::dim("word vector", &[v.len()], &[self.dims.w]));
        }
        Ok(())
    }
}

/// Graph handles for every parameter tensor.
#[derive(Clone, Copy, Debug)]
pub struct ParamVars<T: Scalar = f64> {
    pub temperature: T,
    pub visual_w: Var,
    pub visual_b: Var,
    pub pair_w1: Var,
    pub pair_b1: Var,
    pub pair_w2: Var,
    pub pair_b2: Var,
    pub attr_w: Var,
    pub attr_b: Var,
    pub obj_w: Var,
    pub obj_b: Var,
}

impl<T: Scalar> ParamVars<T> {
    /// Handles in [`PARAM_NAMES`] order.
    pub fn vars(&self) -> [Var; 10] {
        [
            self.visual_w,
            self.visual_b,
            self.pair_w1,
            self.pair_b1,
            self.pair_w2,
            self.pair_b2,
            self.attr_w,
            self.attr_b,
            self.obj_w,
            self.obj_b,
        ]
    }
}

/// Differentiable building blocks shared by training and inference.
pub mod ops {
    use super::*;

    /// Mean over the columns of a `d×l` map, as a `d×1` column.
    pub fn mean_pool<T: Scalar>(g: &mut Graph<T>, feature: Var) -> Result<Var> {
        let l = g.value(feature).cols();
        let weights = g.constant(Tensor::full(&[l, 1], T::one() / T::lit(l as f64)));
        g.matmul(feature, weights)
    }

    /// Visual linear layer applied to each column of a `d×k` matrix, giving `e×k`.
    pub fn project_visual<T: Scalar>(g: &mut Graph<T>, p: &ParamVars<T>, cols: Var) -> Result<Var> {
        let z = g.matmul(p.visual_w, cols)?;
        g.add_col_bias(z, p.visual_b)
    }

    /// Pair encoder over a `2w×n` matrix of concatenated word vectors, giving `e×n`.
    pub fn pair_embeddings<T: Scalar>(g: &mut Graph<T>, p: &ParamVars<T>, words: Var) -> Result<Var> {
        let z1 = g.matmul(p.pair_w1, words)?;
        let z1 = g.add_col_bias(z1, p.pair_b1)?;
        let hidden = g.relu(z1);
        let z2 = g.matmul(p.pair_w2, hidden)?;
        g.add_col_bias(z2, p.pair_b2)
    }

    /// Attribute head over a `w×n` matrix of word vectors, giving `e×n`.
    pub fn attr_embeddings<T: Scalar>(g: &mut Graph<T>, p: &ParamVars<T>, words: Var) -> Result<Var> {
        let z = g.matmul(p.attr_w, words)?;
        g.add_col_bias(z, p.attr_b)
    }

    /// Object head over a `w×n` matrix of word vectors, giving `e×n`.
    pub fn obj_embeddings<T: Scalar>(g: &mut Graph<T>, p: &ParamVars<T>, words: Var) -> Result<Var> {
        let z = g.matmul(p.obj_w, words)?;
        g.add_col_bias(z, p.obj_b)
    }

    /// `cos / τ` between every column of `queries` (`e×k`) and every column
    /// of `candidates` (`e×n`), giving `k×n`.
    pub fn scores<T: Scalar>(
        g: &mut Graph<T>,
        p: &ParamVars<T>,
        queries: Var,
        candidates: Var,
    ) -> Result<Var> {
        let c = g.col_cosine(queries, candidates)?;
        Ok(g.scale(c, T::one() / p.temperature))
    }
}

/// Word-vector matrices as graph inputs.
pub fn pair_word_matrix<T: Scalar>(words: &WordVectors, pairs: &[Pair]) -> Result<Tensor<T>> {
    let cols: Vec<Vec<T>> = pairs
        .iter()
        .map(|p| {
            words
                .attr(p.attr)
                .iter()
                .chain(words.obj(p.obj))
                .map(|&v| T::lit(v))
                .collect()
        })
        .collect();
    let refs: Vec<&[T]> = cols.iter().map(Vec::as_slice).collect();
    Tensor::from_cols(&refs)
}

pub fn attr_word_matrix<T: Scalar>(words: &WordVectors) -> Result<Tensor<T>> {
    word_matrix((0..words.num_attrs()).map(|i| words.attr(i)))
}

pub fn obj_word_matrix<T: Scalar>(words: &WordVectors) -> Result<Tensor<T>> {
    word_matrix((0..words.num_objs()).map(|i| words.obj(i)))
}

fn word_matrix<'a, T: Scalar>(vecs: impl Iterator<Item = &'a [f64]>) -> Result<Tensor<T>> {
    let cols: Vec<Vec<T>> = vecs.map(|v| v.iter().map(|&x| T::lit(x)).collect()).collect();
    let refs: Vec<&[T]> = cols.iter().map(Vec::as_slice).collect();
    Tensor::from_cols(&refs)
}

/// Converts an f64 feature map to the model's scalar type.
pub fn feature_tensor<T: Scalar>(f: &FeatureMap) -> Tensor<T> {
    Tensor::new(f.shape().to_vec(), f.data().iter().map(|&v| T::lit(v)).collect())
        .expect("same shape")
}

fn column_to_vector<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    Tensor::vector(t.data().to_vec())
}

/// Image embedding: mean pooling over positions, then the visual affine map.
pub fn encode_image<T: Scalar>(params: &ModelParams<T>, f: &FeatureMap) -> Result<Tensor<T>> {
    Ok(column_to_vector(&embed_images(params, &[f])?))
}

/// Embeddings of many images as the columns of an `e×n` matrix.
pub fn embed_images<T: Scalar>(params: &ModelParams<T>, features: &[&FeatureMap]) -> Result<Tensor<T>> {
    let d = params.dims.d;
    let mut pooled = vec![T::zero(); d * features.len()];
    let n = features.len();
    for (k, f) in features.iter().enumerate() {
        params.check_feature(f)?;
        let l = f.cols();
        for c in 0..d {
            let mut acc = T::zero();
            for &v in f.row(c) {
                acc += T::lit(v);
            }
            pooled[c * n + k] = acc / T::lit(l as f64);
        }
    }
    let mut g = Graph::new();
    let p = params.attach(&mut g, false);
    let x = g.constant(Tensor::new(vec![d, n], pooled)?);
    let out = ops::project_visual(&mut g, &p, x)?;
    Ok(g.value(out).clone())
}

/// Pair embedding of `[attr_vec ∥ obj_vec]`.
pub fn encode_pair<T: Scalar>(params: &ModelParams<T>, attr_vec: &[T], obj_vec: &[T]) -> Result<Tensor<T>> {
    params.check_word(attr_vec)?;
    params.check_word(obj_vec)?;
    let mut g = Graph::new();
    let p = params.attach(&mut g, false);
    let mut x = attr_vec.to_vec();
    x.extend_from_slice(obj_vec);
    let x = g.constant(Tensor::new(vec![x.len(), 1], x)?);
    let out = ops::pair_embeddings(&mut g, &p, x)?;
    Ok(column_to_vector(g.value(out)))
}

/// Pair embeddings for `pairs` as the columns of an `e×n` matrix.
pub fn embed_pairs<T: Scalar>(params: &ModelParams<T>, words: &WordVectors, pairs: &[Pair]) -> Result<Tensor<T>> {
    if words.dim() != params.dims.w {
        return Err(Error::dim("embed_pairs", &[words.dim()], &[params.dims.w]));
    }
    let mut g = Graph::new();
    let p = params.attach(&mut g, false);
    let x = g.constant(pair_word_matrix(words, pairs)?);
    let out = ops::pair_embeddings(&mut g, &p, x)?;
    Ok(g.value(out).clone())
}

pub fn encode_attr<T: Scalar>(params: &ModelParams<T>, attr_vec: &[T]) -> Result<Tensor<T>> {
    params.check_word(attr_vec)?;
    let mut g = Graph::new();
    let p = params.attach(&mut g, false);
    let x = g.constant(Tensor::new(vec![attr_vec.len(), 1], attr_vec.to_vec())?);
    let out = ops::attr_embeddings(&mut g, &p, x)?;
    Ok(column_to_vector(g.value(out)))
}

pub fn encode_obj<T: Scalar>(params: &ModelParams<T>, obj_vec: &[T]) -> Result<Tensor<T>> {
    params.check_word(obj_vec)?;
    let mut g = Graph::new();
    let p = params.attach(&mut g, false);
    let x = g.constant(Tensor::new(vec![obj_vec.len(), 1], obj_vec.to_vec())?);
    let out = ops::obj_embeddings(&mut g, &p, x)?;
    Ok(column_to_vector(g.value(out)))
}

/// `cos(img, pair) / τ`.
pub fn score<T: Scalar>(params: &ModelParams<T>, img: &Tensor<T>, pair: &Tensor<T>) -> Result<T> {
    Ok(crate::numeric::cosine(img.data(), pair.data())? / params.temperature)
}

/// Class probabilities of `f` over `candidates`.
pub fn classify<T: Scalar>(
    params: &ModelParams<T>,
    f: &FeatureMap,
    candidates: &[Pair],
    words: &WordVectors,
) -> Result<Vec<T>> {
    if candidates.is_empty() {
        return Err(Error::Contract("classify needs at least one candidate".into()));
    }
    let img = encode_image(params, f)?;
    let pairs = embed_pairs(params, words, candidates)?;
    let scores = (0..candidates.len())
        .map(|j| score(params, &img, &Tensor::vector(pairs.col(j))))
        .collect::<Result<Vec<T>>>()?;
    Ok(softmax(&scores))
}
