//! Datasets of precomputed feature maps and word vectors.
//!
//! A [`Dataset`] bundles the [`Vocabulary`] (primitives and pairs), one
//! [`WordVectors`] table, and the image records with their split. Datasets
//! come from a JSON manifest on disk ([`load_dataset`]) or from the seeded
//! generator ([`synth_generate`]).

mod manifest;
mod synth;
mod tensor_file;
mod words;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;

pub use manifest::{load_dataset, save_dataset, Manifest, ManifestImage, MANIFEST_FILE};
pub use synth::{synth_generate, synth_generate_with_latents, SynthConfig, SynthOutput};
pub use tensor_file::{read_tensor, read_tensor_from, write_tensor, write_tensor_to, TENSOR_MAGIC};
pub use words::{format_word_vectors, load_word_vectors, parse_word_vectors, ParsedWordVectors};

/// `d×l` matrix of channel vectors at `l` spatial positions.
pub type FeatureMap = Tensor<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub attr: usize,
    pub obj: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Attribute and object names, the pair list, and which pairs occur in training.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    attributes: Vec<String>,
    objects: Vec<String>,
    pairs: Vec<Pair>,
    seen: Vec<bool>,
    pair_lookup: HashMap<Pair, usize>,
}

impl Vocabulary {
    fn new(attributes: Vec<String>, objects: Vec<String>, pairs: Vec<Pair>) -> Result<Self> {
        check_unique("attribute", &attributes)?;
        check_unique("object", &objects)?;
        let mut pair_lookup = HashMap::with_capacity(pairs.len());
        for (i, &p) in pairs.iter().enumerate() {
            if p.attr >= attributes.len() || p.obj >= objects.len() {
                return Err(Error::load(
                    format!("pair #{i}"),
                    "pair references an unknown primitive",
                ));
            }
            if pair_lookup.insert(p, i).is_some() {
                return Err(Error::load(
                    format!("pair ({}, {})", attributes[p.attr], objects[p.obj]),
                    "duplicate pair",
                ));
            }
        }
        let seen = vec![false; pairs.len()];
        Ok(Self {
            attributes,
            objects,
            pairs,
            seen,
            pair_lookup,
        })
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn pair(&self, index: usize) -> Pair {
        self.pairs[index]
    }

    pub fn pair_index(&self, pair: Pair) -> Option<usize> {
        self.pair_lookup.get(&pair).copied()
    }

    pub fn is_seen(&self, pair_index: usize) -> bool {
        self.seen[pair_index]
    }

    /// Indices of seen pairs, ascending.
    pub fn seen_pairs(&self) -> Vec<usize> {
        (0..self.pairs.len()).filter(|&i| self.seen[i]).collect()
    }

    /// Indices of unseen pairs, ascending.
    pub fn unseen_pairs(&self) -> Vec<usize> {
        (0..self.pairs.len()).filter(|&i| !self.seen[i]).collect()
    }

    pub fn attr_index(&self, name: &str) -> Result<usize> {
        lookup_name("attribute", &self.attributes, name)
    }

    pub fn obj_index(&self, name: &str) -> Result<usize> {
        lookup_name("object", &self.objects, name)
    }

    pub fn pair_name(&self, index: usize) -> String {
        let p = self.pairs[index];
        format!("{} {}", self.attributes[p.attr], self.objects[p.obj])
    }
}

fn check_unique(kind: &str, names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::load(format!("{kind} {n:?}"), "duplicate name"));
        }
    }
    Ok(())
}

fn lookup_name(kind: &'static str, names: &[String], name: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::Vocabulary {
            kind,
            name: name.to_string(),
            valid: names.join(", "),
        })
}

/// One word vector per attribute and per object, all of length `dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct WordVectors {
    dim: usize,
    attrs: Vec<Vec<f64>>,
    objs: Vec<Vec<f64>>,
}

impl WordVectors {
    pub fn new(attrs: Vec<Vec<f64>>, objs: Vec<Vec<f64>>) -> Result<Self> {
        let dim = attrs
            .first()
            .or(objs.first())
            .map_or(0, Vec::len);
        for (i, v) in attrs.iter().chain(&objs).enumerate() {
            if v.len() != dim {
                return Err(Error::load(
                    format!("word vector #{i}"),
                    format!("length {} differs from {dim}", v.len()),
                ));
            }
        }
        Ok(Self { dim, attrs, objs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn attr(&self, index: usize) -> &[f64] {
        &self.attrs[index]
    }

    pub fn obj(&self, index: usize) -> &[f64] {
        &self.objs[index]
    }

    pub fn num_attrs(&self) -> usize {
        self.attrs.len()
    }

    pub fn num_objs(&self) -> usize {
        self.objs.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub attr: usize,
    pub obj: usize,
    pub split: Split,
    pub feature: FeatureMap,
}

impl ImageRecord {
    pub fn pair(&self) -> Pair {
        Pair {
            attr: self.attr,
            obj: self.obj,
        }
    }
}

/// Fully materialized, validated dataset. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    vocab: Vocabulary,
    words: WordVectors,
    images: Vec<ImageRecord>,
    feature_shape: (usize, usize),
}

impl Dataset {
    /// Validates and assembles a dataset. Seen pairs are exactly the pairs
    /// carried by training images.
    pub fn new(
        attributes: Vec<String>,
        objects: Vec<String>,
        pairs: Vec<Pair>,
        words: WordVectors,
        images: Vec<ImageRecord>,
    ) -> Result<Self> {
        let mut vocab = Vocabulary::new(attributes, objects, pairs)?;
        if words.num_attrs() != vocab.attributes.len() || words.num_objs() != vocab.objects.len() {
            return Err(Error::load(
                "word vectors",
                "vector count does not match vocabulary",
            ));
        }

        let mut ids = HashSet::with_capacity(images.len());
        let mut feature_shape = None;
        for img in &images {
            if !ids.insert(img.id.as_str()) {
                return Err(Error::load(format!("image {:?}", img.id), "duplicate image id"));
            }
            let Some(pair_idx) = vocab.pair_index(img.pair()) else {
                return Err(Error::load(
                    format!("image {:?}", img.id),
                    "attribute/object pair is not in the pair list",
                ));
            };
            let shape = match img.feature.shape() {
                &[d, l] => (d, l),
                other => {
                    return Err(Error::load(
                        format!("image {:?}", img.id),
                        format!("feature map must be d×l, got shape {other:?}"),
                    ))
                }
            };
            match feature_shape {
                None => feature_shape = Some(shape),
                Some(s) if s != shape => {
                    return Err(Error::load(
                        format!("image {:?}", img.id),
                        format!("feature shape {shape:?} differs from {s:?}"),
                    ))
                }
                Some(_) => {}
            }
            if !img.feature.is_finite() {
                return Err(Error::load(
                    format!("image {:?}", img.id),
                    "feature map has non-finite values",
                ));
            }
            if img.split == Split::Train {
                vocab.seen[pair_idx] = true;
            }
        }

        let mut attr_cover = vec![false; vocab.attributes.len()];
        let mut obj_cover = vec![false; vocab.objects.len()];
        for img in images.iter().filter(|i| i.split == Split::Train) {
            attr_cover[img.attr] = true;
            obj_cover[img.obj] = true;
        }
        if let Some(a) = attr_cover.iter().position(|c| !c) {
            return Err(Error::load(
                format!("attribute {:?}", vocab.attributes[a]),
                "never appears in a training image",
            ));
        }
        if let Some(o) = obj_cover.iter().position(|c| !c) {
            return Err(Error::load(
                format!("object {:?}", vocab.objects[o]),
                "never appears in a training image",
            ));
        }

        Ok(Self {
            vocab,
            words,
            images,
            feature_shape: feature_shape.unwrap_or((0, 0)),
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn words(&self) -> &WordVectors {
        &self.words
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn image(&self, index: usize) -> &ImageRecord {
        &self.images[index]
    }

    /// `(d, l)` shared by every feature map.
    pub fn feature_shape(&self) -> (usize, usize) {
        self.feature_shape
    }

    pub fn pair_index_of(&self, image: &ImageRecord) -> usize {
        self.vocab
            .pair_index(image.pair())
            .expect("validated at construction")
    }

    /// Indices of images in `split`, ascending.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.images.len())
            .filter(|&i| self.images[i].split == split)
            .collect()
    }
}

/// Training images usable as partners for one anchor.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TripletPools {
    /// Same attribute, different object.
    pub same_attr: Vec<usize>,
    /// Same object, different attribute.
    pub same_obj: Vec<usize>,
}

/// Partner pools for the training image at `anchor` (indices into
/// [`Dataset::images`], ascending). Either pool may be empty.
pub fn triplet_candidates(dataset: &Dataset, anchor: usize) -> TripletPools {
    let a = &dataset.images[anchor];
    let mut pools = TripletPools::default();
    for (i, img) in dataset.images.iter().enumerate() {
        if img.split != Split::Train {
            continue;
        }
        if img.attr == a.attr && img.obj != a.obj {
            pools.same_attr.push(i);
        } else if img.obj == a.obj && img.attr != a.attr {
            pools.same_obj.push(i);
        }
    }
    pools
}
