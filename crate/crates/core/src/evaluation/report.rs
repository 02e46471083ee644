use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::embedding_store::{Dataset, Split};
use crate::error::{Error, Result};
use crate::evaluation::{Evaluator, Scenario};
use crate::model::ModelParams;

pub const CSV_HEADER: &str = "split,k,seen,unseen,object,attr,auc";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub splits: Vec<SplitReport>,
    /// Free-form settings echoed by the caller (paths, seed, ...).
    #[serde(default)]
    pub config: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitReport {
    pub split: Split,
    pub counts: ScenarioCounts,
    pub rows: Vec<KRow>,
}

/// Population sizes behind each accuracy column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioCounts {
    pub seen: usize,
    pub unseen: usize,
    pub object: usize,
    pub attr: usize,
}

/// One row of the results table. Accuracies are fractions in `[0, 1]`;
/// `None` marks an empty population.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KRow {
    pub k: usize,
    pub seen: Option<f64>,
    pub unseen: Option<f64>,
    pub object: Option<f64>,
    pub attr: Option<f64>,
    pub auc: Option<f64>,
}

/// Zero-bias top-k accuracies and bias-sweep AUC for every split and k.
pub fn evaluate(
    params: &ModelParams<f64>,
    dataset: &Dataset,
    splits: &[Split],
    ks: &[usize],
) -> Result<EvalReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("top-k values must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(splits.len());
    for &split in splits {
        let ev = Evaluator::new(params, dataset, split)?;
        let counts = ScenarioCounts {
            seen: ev.population(Scenario::Seen).len(),
            unseen: ev.population(Scenario::Unseen).len(),
            object: ev.population(Scenario::Object).len(),
            attr: ev.population(Scenario::Attr).len(),
        };
        let has_auc = counts.seen > 0 && counts.unseen > 0;
        let rows = ks
            .iter()
            .map(|&k| {
                Ok(KRow {
                    k,
                    seen: ev.topk_accuracy(Scenario::Seen, k, 0.0)?,
                    unseen: ev.topk_accuracy(Scenario::Unseen, k, 0.0)?,
                    object: ev.topk_accuracy(Scenario::Object, k, 0.0)?,
                    attr: ev.topk_accuracy(Scenario::Attr, k, 0.0)?,
                    auc: if has_auc { Some(ev.auc(k)?) } else { None },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(SplitReport { split, counts, rows });
    }
    Ok(EvalReport {
        ks: ks.to_vec(),
        splits: out,
        config: BTreeMap::new(),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.1}", 100.0 * x)).unwrap_or_else(|| "-".into())
}

impl EvalReport {
    pub fn split(&self, split: Split) -> Option<&SplitReport> {
        self.splits.iter().find(|s| s.split == split)
    }

    /// One line per (split, k); empty cells for empty populations.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for sr in &self.splits {
            for r in &sr.rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    sr.split.as_str(),
                    r.k,
                    cell(r.seen),
                    cell(r.unseen),
                    cell(r.object),
                    cell(r.attr),
                    cell(r.auc)
                );
            }
        }
        s
    }

    /// Human-readable table, percentages with one decimal.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for sr in &self.splits {
            let c = sr.counts;
            let _ = writeln!(
                s,
                "{} (seen {}, unseen {} images)",
                sr.split.as_str(),
                c.seen,
                c.unseen
            );
            let _ = writeln!(
                s,
                "{:>4} {:>7} {:>7} {:>7} {:>7} {:>7}",
                "k", "seen", "unseen", "object", "attr", "auc"
            );
            for r in &sr.rows {
                let _ = writeln!(
                    s,
                    "{:>4} {:>7} {:>7} {:>7} {:>7} {:>7}",
                    r.k,
                    pct(r.seen),
                    pct(r.unseen),
                    pct(r.object),
                    pct(r.attr),
                    pct(r.auc)
                );
            }
        }
        s
    }
}
