use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use serde::Serialize;
use serde_json::json;

use czsl::embedding_store::{load_dataset, save_dataset, synth_generate, Dataset, Split, SynthConfig};
use czsl::evaluation::{evaluate, retrieve_images};
use czsl::gradcheck_suite::run_suite;
use czsl::model::{load_checkpoint, save_checkpoint, Checkpoint, ModelDims};
use czsl::training::{AdamConfig, LossWeights, TrainConfig};

use crate::config::{EvalArgs, GradcheckArgs, Globals, RetrieveArgs, SynthArgs, TrainArgs};
use crate::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.czk";
pub const HISTORY_FILE: &str = "loss_history.jsonl";
pub const REPORT_FILE: &str = "eval_report.json";
pub const TABLE_FILE: &str = "eval_table.csv";
pub const GRADCHECK_FILE: &str = "gradcheck_report.json";
pub const DEFAULT_TOPK: [usize; 3] = [1, 2, 3];
pub const DEFAULT_RETRIEVE_K: usize = 5;
pub const DEFAULT_CASES: usize = 100;

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn synth(g: &Globals, a: SynthArgs) -> Result<ExitCode, CliError> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n_attr: a.n_attr.unwrap_or(d.n_attr),
        n_obj: a.n_obj.unwrap_or(d.n_obj),
        d: a.d.unwrap_or(d.d),
        l: a.l.unwrap_or(d.l),
        images_per_pair: a.images_per_pair.unwrap_or(d.images_per_pair),
        sigma: a.sigma.unwrap_or(d.sigma),
        unseen_frac: a.unseen_frac.unwrap_or(d.unseen_frac),
        word_dim: a.word_dim.unwrap_or(d.word_dim),
        seed: g.seed,
        train_frac: a.train_frac.unwrap_or(d.train_frac),
        val_frac: a.val_frac.unwrap_or(d.val_frac),
        unseen_val_frac: a.unseen_val_frac.unwrap_or(d.unseen_val_frac),
    };
    let out = g.out()?;
    let dataset = synth_generate(&cfg)?;
    create_dir(out)?;
    save_dataset(&dataset, out)?;
    print_summary(&dataset);
    Ok(ExitCode::SUCCESS)
}

fn print_summary(ds: &Dataset) {
    let v = ds.vocab();
    println!(
        "{} attributes, {} objects, {} pairs ({} seen, {} unseen)",
        v.attributes().len(),
        v.objects().len(),
        v.num_pairs(),
        v.seen_pairs().len(),
        v.unseen_pairs().len()
    );
    println!(
        "{} images: train {}, val {}, test {}",
        ds.images().len(),
        ds.split_indices(Split::Train).len(),
        ds.split_indices(Split::Val).len(),
        ds.split_indices(Split::Test).len()
    );
}

pub fn train_config(g: &Globals, a: &TrainArgs) -> TrainConfig {
    let d = TrainConfig::default();
    let adam = AdamConfig::default();
    let w = LossWeights::default();
    TrainConfig {
        epochs: a.epochs.unwrap_or(d.epochs),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        adam: AdamConfig {
            learning_rate: a.lr.unwrap_or(adam.learning_rate),
            beta1: a.beta1.unwrap_or(adam.beta1),
            beta2: a.beta2.unwrap_or(adam.beta2),
            eps: a.adam_eps.unwrap_or(adam.eps),
        },
        weights: LossWeights {
            pair: a.lambda_pair.unwrap_or(w.pair),
            attr: a.lambda_attr.unwrap_or(w.attr),
            obj: a.lambda_obj.unwrap_or(w.obj),
            non_attr: a.lambda_non_attr.unwrap_or(w.non_attr),
            non_obj: a.lambda_non_obj.unwrap_or(w.non_obj),
        },
        seed: g.seed,
        hidden: a.hidden.unwrap_or(d.hidden),
        embed: a.embed.unwrap_or(d.embed),
        temperature: a.temperature.unwrap_or(d.temperature),
        checkpoint_path: None,
        checkpoint_interval: a.checkpoint_interval.unwrap_or(d.checkpoint_interval),
    }
}

pub fn train(g: &Globals, a: TrainArgs) -> Result<ExitCode, CliError> {
    let dataset = load_dataset(g.data()?)?;
    let out = g.out()?;
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let cfg = TrainConfig {
        checkpoint_path: Some(ckpt_path.clone()),
        ..train_config(g, &a)
    };
    cfg.validate()?;
    create_dir(out)?;
    let outcome = czsl::training::train(&dataset, &cfg)?;
    save_checkpoint(&ckpt_path, &Checkpoint::new(outcome.params, cfg.seed, cfg.epochs))?;

    let wall_clock = a.wall_clock.unwrap_or(false);
    let mut history = String::new();
    for rec in &outcome.history {
        let line = json!({
            "epoch": rec.epoch,
            "mean_loss": rec.mean_loss,
            "wall_ms": if wall_clock { rec.wall_ms } else { 0 },
        });
        history.push_str(&line.to_string());
        history.push('\n');
    }
    write(&out.join(HISTORY_FILE), &history)?;
    match (outcome.history.first(), outcome.history.last()) {
        (Some(f), Some(l)) => println!(
            "trained {} epochs: mean loss {:.6} -> {:.6}",
            cfg.epochs, f.mean_loss, l.mean_loss
        ),
        _ => println!("0 epochs: wrote initial parameters"),
    }
    println!("checkpoint: {}", ckpt_path.display());
    Ok(ExitCode::SUCCESS)
}

fn load_matching_checkpoint(
    g: &Globals,
    explicit: Option<&Path>,
    dataset: &Dataset,
) -> Result<Checkpoint, CliError> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => g.out()?.join(CHECKPOINT_FILE),
    };
    let ckpt = load_checkpoint(&path)?;
    let ModelDims { d, l, w, .. } = ckpt.params.dims;
    let (dd, dl) = dataset.feature_shape();
    let dw = dataset.words().dim();
    if (d, l, w) != (dd, dl, dw) {
        return Err(CliError::runtime(format!(
            "checkpoint expects features {d}x{l} and word vectors of length {w}, \
             but the dataset has features {dd}x{dl} and word vectors of length {dw}"
        )));
    }
    Ok(ckpt)
}

pub fn eval(g: &Globals, a: EvalArgs) -> Result<ExitCode, CliError> {
    let data = g.data()?;
    let dataset = load_dataset(data)?;
    let ckpt = load_matching_checkpoint(g, a.checkpoint.as_deref(), &dataset)?;
    let out = g.out()?;
    let ks = a.topk.unwrap_or_else(|| DEFAULT_TOPK.to_vec());
    let mut report = evaluate(&ckpt.params, &dataset, &[Split::Val, Split::Test], &ks)?;
    let echo: BTreeMap<String, serde_json::Value> = [
        ("data", json!(data.display().to_string())),
        ("epoch", json!(ckpt.header.epoch)),
        ("seed", json!(ckpt.header.seed)),
        ("tau", json!(ckpt.header.tau)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    report.config = echo;

    create_dir(out)?;
    write(&out.join(REPORT_FILE), &pretty(&report)?)?;
    write(&out.join(TABLE_FILE), &report.to_csv())?;
    print!("{}", report.to_table());
    Ok(ExitCode::SUCCESS)
}

pub fn retrieve(g: &Globals, a: RetrieveArgs) -> Result<ExitCode, CliError> {
    let query = a
        .query
        .as_deref()
        .ok_or_else(|| CliError::usage("--query \"ATTRIBUTE OBJECT\" is required"))?;
    let tokens: Vec<&str> = query.split_whitespace().collect();
    let [attr, obj] = tokens[..] else {
        return Err(CliError::usage(format!(
            "query must be two tokens, attribute then object; got {query:?}"
        )));
    };
    let k = a.topk.unwrap_or(DEFAULT_RETRIEVE_K);
    if k == 0 {
        return Err(CliError::usage("topk must be at least 1"));
    }
    let split = match a.split.as_deref().unwrap_or("test") {
        "train" => Some(Split::Train),
        "val" => Some(Split::Val),
        "test" => Some(Split::Test),
        "all" => None,
        other => {
            return Err(CliError::usage(format!(
                "unknown split {other:?}; expected train, val, test or all"
            )))
        }
    };
    let dataset = load_dataset(g.data()?)?;
    // vocabulary errors before touching the checkpoint
    dataset.vocab().attr_index(attr)?;
    dataset.vocab().obj_index(obj)?;
    let ckpt = load_matching_checkpoint(g, a.checkpoint.as_deref(), &dataset)?;
    let pool: Vec<_> = dataset
        .images()
        .iter()
        .filter(|i| split.is_none_or(|s| i.split == s))
        .collect();
    let hits = retrieve_images(&ckpt.params, &dataset, (attr, obj), &pool, k)?;
    for (rank, h) in hits.iter().enumerate() {
        println!("{}\t{}\t{:.6}", rank + 1, h.id, h.score);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(g: &Globals, a: GradcheckArgs) -> Result<ExitCode, CliError> {
    let cases = a.cases.unwrap_or(DEFAULT_CASES);
    if cases == 0 {
        return Err(CliError::usage("cases must be at least 1"));
    }
    if let Some(t) = a.threshold {
        // negated so that NaN is rejected too
        if !(t >= 0.0) {
            return Err(CliError::usage("threshold must be non-negative"));
        }
    }
    let mut results = run_suite(g.seed..g.seed + cases as u64)?;
    if let Some(t) = a.threshold {
        for r in &mut results {
            r.tolerance = t;
            r.passed = r.max_rel_error < t;
        }
    }

    // per-check summary in suite order
    let mut order: Vec<&str> = Vec::new();
    for r in &results {
        if !order.contains(&r.name.as_str()) {
            order.push(&r.name);
        }
    }
    println!(
        "{:<18} {:>6} {:>12} {:>12} {:>10}",
        "check", "passed", "worst rel", "worst scaled", "tolerance"
    );
    for name in &order {
        let rs: Vec<_> = results.iter().filter(|r| r.name == *name).collect();
        let passed = rs.iter().filter(|r| r.passed).count();
        let rel = rs.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
        let scaled = rs.iter().map(|r| r.scaled_error).fold(0.0, f64::max);
        println!(
            "{:<18} {:>3}/{:<3} {:>12.3e} {:>12.3e} {:>10.0e}",
            name,
            passed,
            rs.len(),
            rel,
            scaled,
            rs[0].tolerance
        );
    }
    let worst = results
        .iter()
        .max_by(|x, y| (x.max_rel_error / x.tolerance).total_cmp(&(y.max_rel_error / y.tolerance)))
        .expect("suite is non-empty");
    println!(
        "worst offender: {} (seed {}): relative error {:.3e}, tolerance {:.0e}",
        worst.name, worst.seed, worst.max_rel_error, worst.tolerance
    );
    if let Some(out) = &g.out {
        create_dir(out)?;
        write(&out.join(GRADCHECK_FILE), &pretty(&results)?)?;
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        println!("all {} checks passed", results.len());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{failed} of {} checks failed", results.len());
        Ok(ExitCode::from(1))
    }
}
