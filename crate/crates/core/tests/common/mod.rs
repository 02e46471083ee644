#![allow(dead_code)]

pub mod oracle;

use czsl::embedding_store::{synth_generate, Dataset, SynthConfig, WordVectors};
use czsl::model::{ModelDims, ModelParams};

pub fn small_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_attr: 4,
        n_obj: 5,
        d: 6,
        l: 4,
        images_per_pair: 4,
        word_dim: 5,
        seed,
        ..SynthConfig::default()
    }
}

pub fn small_dataset(seed: u64) -> Dataset {
    synth_generate(&small_config(seed)).unwrap()
}

/// Small dataset where attributes 0 and 1 share a word vector, so their
/// pairs with the same object embed identically, and where consecutive
/// images of every pair share a feature map.
pub fn tie_dataset(seed: u64) -> Dataset {
    let ds = small_dataset(seed);
    let w = ds.words();
    let mut attrs: Vec<Vec<f64>> = (0..w.num_attrs()).map(|i| w.attr(i).to_vec()).collect();
    attrs[1] = attrs[0].clone();
    let objs = (0..w.num_objs()).map(|i| w.obj(i).to_vec()).collect();
    let mut images = ds.images().to_vec();
    for i in (1..images.len()).step_by(2) {
        if images[i].pair() == images[i - 1].pair() && images[i].split == images[i - 1].split {
            images[i].feature = images[i - 1].feature.clone();
        }
    }
    let v = ds.vocab();
    Dataset::new(
        v.attributes().to_vec(),
        v.objects().to_vec(),
        v.pairs().to_vec(),
        WordVectors::new(attrs, objs).unwrap(),
        images,
    )
    .unwrap()
}

pub fn params_for(ds: &Dataset, seed: u64) -> ModelParams<f64> {
    let (d, l) = ds.feature_shape();
    let dims = ModelDims {
        d,
        l,
        w: ds.words().dim(),
        h: 12,
        e: 8,
    };
    ModelParams::init(dims, 0.05, seed).unwrap()
}
