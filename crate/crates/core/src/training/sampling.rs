//! Triplet construction: every anchor is paired with a same-attribute and a
//! same-object training image when such images exist.

use rand::seq::{index, IndexedRandom, SliceRandom};

use crate::embedding_store::{triplet_candidates, Dataset, Split, TripletPools};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub same_attr: Option<usize>,
    pub same_obj: Option<usize>,
}

impl Triplet {
    pub fn is_complete(&self) -> bool {
        self.same_attr.is_some() && self.same_obj.is_some()
    }
}

pub type TripletBatch = Vec<Triplet>;

/// Cached partner pools per pair.
#[derive(Clone, Debug)]
pub struct TripletSampler {
    train: Vec<usize>,
    pools: Vec<Option<TripletPools>>,
    pair_of: Vec<usize>,
}

impl TripletSampler {
    pub fn new(dataset: &Dataset) -> Self {
        let train = dataset.split_indices(Split::Train);
        let mut pools = vec![None; dataset.vocab().num_pairs()];
        let pair_of: Vec<usize> = dataset
            .images()
            .iter()
            .map(|img| dataset.pair_index_of(img))
            .collect();
        for &i in &train {
            let slot = &mut pools[pair_of[i]];
            if slot.is_none() {
                *slot = Some(triplet_candidates(dataset, i));
            }
        }
        Self {
            train,
            pools,
            pair_of,
        }
    }

    pub fn num_train(&self) -> usize {
        self.train.len()
    }

    pub fn pools(&self, anchor: usize) -> &TripletPools {
        self.pools[self.pair_of[anchor]]
            .as_ref()
            .expect("anchor is a training image")
    }

    /// Partners drawn uniformly from the anchor's pools.
    pub fn triplet(&self, anchor: usize, rng: &mut Rng) -> Triplet {
        let pools = self.pools(anchor);
        Triplet {
            anchor,
            same_attr: pools.same_attr.choose(rng).copied(),
            same_obj: pools.same_obj.choose(rng).copied(),
        }
    }

    /// One pass over the shuffled training images, chunked into batches.
    pub fn epoch(&self, rng: &mut Rng, batch_size: usize) -> Vec<TripletBatch> {
        let mut order = self.train.clone();
        order.shuffle(rng);
        order
            .chunks(batch_size.max(1))
            .map(|chunk| chunk.iter().map(|&a| self.triplet(a, rng)).collect())
            .collect()
    }

    /// `min(batch_size, #train)` distinct anchors drawn uniformly.
    pub fn sample(&self, rng: &mut Rng, batch_size: usize) -> TripletBatch {
        let k = batch_size.min(self.train.len());
        index::sample(rng, self.train.len(), k)
            .into_iter()
            .map(|i| self.triplet(self.train[i], rng))
            .collect()
    }
}

/// Draws a batch of distinct training anchors with uniformly chosen partners.
pub fn sample_batch(dataset: &Dataset, rng: &mut Rng, batch_size: usize) -> TripletBatch {
    TripletSampler::new(dataset).sample(rng, batch_size)
}
