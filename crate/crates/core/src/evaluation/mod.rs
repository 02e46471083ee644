//! Open-world retrieval metrics.
//!
//! Every test image is scored against every pair in the vocabulary. A
//! calibration bias added to unseen-pair scores trades seen accuracy for
//! unseen accuracy; sweeping it traces the seen/unseen curve whose area is
//! reported alongside plain top-k accuracies.

mod report;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::embedding_store::{Dataset, ImageRecord, Split};
use crate::error::{Error, Result};
use crate::model::{embed_images, embed_pairs, encode_pair, score, ModelParams};
use crate::numeric::{cosine, Tensor};

pub use report::{evaluate, EvalReport, KRow, ScenarioCounts, SplitReport, CSV_HEADER};

/// Stand-in for an infinite bias.
pub const BIAS_LIMIT: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Images whose pair is seen in training; hit when the pair is in the top k.
    Seen,
    /// Images whose pair is unseen in training; hit when the pair is in the top k.
    Unseen,
    /// All images; hit when any top-k pair has the right object.
    Object,
    /// All images; hit when any top-k pair has the right attribute.
    Attr,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Seen, Scenario::Unseen, Scenario::Object, Scenario::Attr];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub pair: usize,
    pub score: f64,
}

/// Orders candidates by biased score, descending; equal scores keep
/// ascending pair index. `bias` is added to every unseen candidate.
pub fn rank_scored(
    scores: &[f64],
    candidates: &[usize],
    is_unseen: impl Fn(usize) -> bool,
    bias: f64,
) -> Result<Vec<RankedPair>> {
    if candidates.is_empty() {
        return Err(Error::Contract("rank_pairs needs at least one candidate".into()));
    }
    let mut ranked: Vec<RankedPair> = candidates
        .iter()
        .zip(scores)
        .map(|(&pair, &s)| RankedPair {
            pair,
            score: if is_unseen(pair) { s + bias } else { s },
        })
        .collect();
    ranked.sort_by(|a, b| by_score_then_index(a.score, a.pair, b.score, b.pair));
    Ok(ranked)
}

fn by_score_then_index(sa: f64, ia: usize, sb: f64, ib: usize) -> Ordering {
    sb.total_cmp(&sa).then(ia.cmp(&ib))
}

/// Ranks `candidates` (pair indices) for one feature map.
pub fn rank_pairs(
    params: &ModelParams<f64>,
    dataset: &Dataset,
    image: &ImageRecord,
    candidates: &[usize],
    bias: f64,
) -> Result<Vec<RankedPair>> {
    if candidates.is_empty() {
        return Err(Error::Contract("rank_pairs needs at least one candidate".into()));
    }
    let vocab = dataset.vocab();
    let pairs: Vec<_> = candidates.iter().map(|&i| vocab.pair(i)).collect();
    let img = embed_images(params, &[&image.feature])?;
    let emb = embed_pairs(params, dataset.words(), &pairs)?;
    let scores = img.col_cosine(&emb)?.scale(1.0 / params.temperature);
    rank_scored(scores.data(), candidates, |p| !vocab.is_seen(p), bias)
}

/// Scores of a set of images against every pair of the vocabulary.
#[derive(Clone, Debug)]
pub struct ScoreTable {
    /// Dataset image indices, one per row.
    pub images: Vec<usize>,
    /// `scores[row][pair]`.
    pub scores: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn new(params: &ModelParams<f64>, dataset: &Dataset, images: &[usize]) -> Result<Self> {
        let pairs = dataset.vocab().pairs();
        let feats: Vec<_> = images.iter().map(|&i| &dataset.image(i).feature).collect();
        let img = embed_images(params, &feats)?;
        let emb = embed_pairs(params, dataset.words(), pairs)?;
        let s = img.col_cosine(&emb)?.scale(1.0 / params.temperature);
        let scores = (0..images.len()).map(|r| s.row(r).to_vec()).collect();
        Ok(Self {
            images: images.to_vec(),
            scores,
        })
    }

    /// Multiplies every score by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        self.affine(factor, 0.0)
    }

    /// Applies `s ↦ factor·s + shift` to every score.
    pub fn affine(&self, factor: f64, shift: f64) -> Self {
        Self {
            images: self.images.clone(),
            scores: self
                .scores
                .iter()
                .map(|row| row.iter().map(|&s| factor * s + shift).collect())
                .collect(),
        }
    }
}

/// Metric computations over a precomputed [`ScoreTable`].
#[derive(Clone, Debug)]
pub struct Evaluator<'a> {
    dataset: &'a Dataset,
    table: ScoreTable,
    unseen: Vec<bool>,
}

impl<'a> Evaluator<'a> {
    pub fn new(params: &ModelParams<f64>, dataset: &'a Dataset, split: Split) -> Result<Self> {
        let table = ScoreTable::new(params, dataset, &dataset.split_indices(split))?;
        Ok(Self::from_table(dataset, table))
    }

    pub fn from_table(dataset: &'a Dataset, table: ScoreTable) -> Self {
        let vocab = dataset.vocab();
        let unseen = (0..vocab.num_pairs()).map(|p| !vocab.is_seen(p)).collect();
        Self {
            dataset,
            table,
            unseen,
        }
    }

    pub fn table(&self) -> &ScoreTable {
        &self.table
    }

    fn truth(&self, row: usize) -> usize {
        self.dataset
            .pair_index_of(self.dataset.image(self.table.images[row]))
    }

    /// Rows belonging to `scenario`'s population.
    pub fn population(&self, scenario: Scenario) -> Vec<usize> {
        (0..self.table.images.len())
            .filter(|&r| match scenario {
                Scenario::Seen => !self.unseen[self.truth(r)],
                Scenario::Unseen => self.unseen[self.truth(r)],
                Scenario::Object | Scenario::Attr => true,
            })
            .collect()
    }

    fn biased(&self, row: usize, pair: usize, bias: f64) -> f64 {
        let s = self.table.scores[row][pair];
        if self.unseen[pair] {
            s + bias
        } else {
            s
        }
    }

    /// Zero-based position of the true pair in the biased ranking over all pairs.
    pub fn truth_rank(&self, row: usize, bias: f64) -> usize {
        let t = self.truth(row);
        let st = self.biased(row, t, bias);
        (0..self.unseen.len())
            .filter(|&j| {
                by_score_then_index(self.biased(row, j, bias), j, st, t) == Ordering::Less
            })
            .count()
    }

    /// Full biased ranking of one row.
    pub fn ranking(&self, row: usize, bias: f64) -> Vec<RankedPair> {
        let all: Vec<usize> = (0..self.unseen.len()).collect();
        rank_scored(&self.table.scores[row], &all, |p| self.unseen[p], bias)
            .expect("vocabulary has pairs")
    }

    fn hit(&self, row: usize, scenario: Scenario, k: usize, bias: f64) -> bool {
        match scenario {
            Scenario::Seen | Scenario::Unseen => self.truth_rank(row, bias) < k,
            Scenario::Object | Scenario::Attr => {
                let vocab = self.dataset.vocab();
                let truth = vocab.pair(self.truth(row));
                self.ranking(row, bias).iter().take(k).any(|r| {
                    let p = vocab.pair(r.pair);
                    match scenario {
                        Scenario::Object => p.obj == truth.obj,
                        _ => p.attr == truth.attr,
                    }
                })
            }
        }
    }

    /// Fraction of the scenario's population hit at `k`; `None` when the
    /// population is empty.
    pub fn topk_accuracy(&self, scenario: Scenario, k: usize, bias: f64) -> Result<Option<f64>> {
        if k == 0 {
            return Err(Error::Contract("k must be at least 1".into()));
        }
        let pop = self.population(scenario);
        if pop.is_empty() {
            return Ok(None);
        }
        let hits = pop.iter().filter(|&&r| self.hit(r, scenario, k, bias)).count();
        Ok(Some(hits as f64 / pop.len() as f64))
    }

    /// Seen-population accuracy when only seen pairs compete.
    pub fn closed_world_seen_accuracy(&self, k: usize) -> Option<f64> {
        self.restricted_accuracy(false, k)
    }

    /// Unseen-population accuracy when only unseen pairs compete.
    pub fn closed_world_unseen_accuracy(&self, k: usize) -> Option<f64> {
        self.restricted_accuracy(true, k)
    }

    fn restricted_accuracy(&self, unseen: bool, k: usize) -> Option<f64> {
        let scenario = if unseen { Scenario::Unseen } else { Scenario::Seen };
        let pop = self.population(scenario);
        if pop.is_empty() {
            return None;
        }
        let hits = pop
            .iter()
            .filter(|&&r| {
                let t = self.truth(r);
                let st = self.table.scores[r][t];
                let rank = (0..self.unseen.len())
                    .filter(|&j| self.unseen[j] == unseen)
                    .filter(|&j| {
                        by_score_then_index(self.table.scores[r][j], j, st, t) == Ordering::Less
                    })
                    .count();
                rank < k
            })
            .count();
        Some(hits as f64 / pop.len() as f64)
    }

    /// Biases at which the seen/unseen trade-off is sampled: each image's
    /// best-seen minus best-unseen score, `±BIAS_LIMIT`, and the midpoints
    /// between consecutive distinct values.
    pub fn bias_sweep(&self) -> Vec<f64> {
        let mut crit = vec![-BIAS_LIMIT, BIAS_LIMIT];
        for row in self.population(Scenario::Seen)
            .into_iter()
            .chain(self.population(Scenario::Unseen))
        {
            let scores = &self.table.scores[row];
            let best = |unseen: bool| {
                scores
                    .iter()
                    .enumerate()
                    .filter(|&(p, _)| self.unseen[p] == unseen)
                    .map(|(_, &s)| s)
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            crit.push(best(false) - best(true));
        }
        crit.sort_by(f64::total_cmp);
        crit.dedup();
        let mut sweep = Vec::with_capacity(crit.len() * 2);
        for w in crit.windows(2) {
            sweep.push(w[0]);
            sweep.push(0.5 * (w[0] + w[1]));
        }
        sweep.extend(crit.last());
        sweep
    }

    /// `(bias, seen accuracy, unseen accuracy)` at every sweep point.
    pub fn sweep_curve(&self, k: usize) -> Result<Vec<(f64, f64, f64)>> {
        let seen_pop = self.population(Scenario::Seen);
        let unseen_pop = self.population(Scenario::Unseen);
        if seen_pop.is_empty() || unseen_pop.is_empty() {
            return Err(Error::Contract(
                "AUC needs both seen and unseen test images".into(),
            ));
        }
        if k == 0 {
            return Err(Error::Contract("k must be at least 1".into()));
        }
        let frac = |pop: &[usize], bias| {
            pop.iter().filter(|&&r| self.truth_rank(r, bias) < k).count() as f64 / pop.len() as f64
        };
        Ok(self
            .bias_sweep()
            .into_iter()
            .map(|b| (b, frac(&seen_pop, b), frac(&unseen_pop, b)))
            .collect())
    }

    /// Trapezoid area under unseen accuracy as a function of seen accuracy.
    pub fn auc(&self, k: usize) -> Result<f64> {
        let mut pts: Vec<(f64, f64, f64)> = self.sweep_curve(k)?;
        // seen ascending; within equal seen, larger bias first
        pts.sort_by(|a, b| a.1.total_cmp(&b.1).then(b.0.total_cmp(&a.0)));
        Ok(pts
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) * (w[0].2 + w[1].2) * 0.5)
            .sum())
    }
}

/// Top-k accuracy for one split and scenario.
pub fn topk_accuracy(
    params: &ModelParams<f64>,
    dataset: &Dataset,
    split: Split,
    scenario: Scenario,
    k: usize,
    bias: f64,
) -> Result<Option<f64>> {
    Evaluator::new(params, dataset, split)?.topk_accuracy(scenario, k, bias)
}

/// Bias-sweep AUC at `k` for one split.
pub fn auc(params: &ModelParams<f64>, dataset: &Dataset, split: Split, k: usize) -> Result<f64> {
    Evaluator::new(params, dataset, split)?.auc(k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievedImage {
    pub id: String,
    pub score: f64,
}

/// Sorts images by descending score against an embedded query; equal scores
/// keep ascending id. Returns at most `k`.
pub fn rank_images(
    query: &Tensor<f64>,
    image_embeddings: &[(String, Tensor<f64>)],
    temperature: f64,
    k: usize,
) -> Result<Vec<RetrievedImage>> {
    let mut out = image_embeddings
        .iter()
        .map(|(id, emb)| {
            Ok(RetrievedImage {
                id: id.clone(),
                score: cosine(emb.data(), query.data())? / temperature,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    out.truncate(k);
    Ok(out)
}

/// Text-to-image retrieval for an `(attribute, object)` query.
pub fn retrieve_images(
    params: &ModelParams<f64>,
    dataset: &Dataset,
    query: (&str, &str),
    images: &[&ImageRecord],
    k: usize,
) -> Result<Vec<RetrievedImage>> {
    let vocab = dataset.vocab();
    let a = vocab.attr_index(query.0)?;
    let o = vocab.obj_index(query.1)?;
    let words = dataset.words();
    let q = encode_pair(params, words.attr(a), words.obj(o))?;
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let feats: Vec<_> = images.iter().map(|i| &i.feature).collect();
    let emb = embed_images(params, &feats)?;
    let embs: Vec<(String, Tensor<f64>)> = images
        .iter()
        .enumerate()
        .map(|(c, img)| (img.id.clone(), Tensor::vector(emb.col(c))))
        .collect();
    rank_images(&q, &embs, params.temperature, k)
}

/// `score` re-exported for callers computing single similarities.
pub fn pair_score(params: &ModelParams<f64>, img: &Tensor<f64>, pair: &Tensor<f64>) -> Result<f64> {
    score(params, img, pair)
}
