mod common;

use common::{params_for, small_dataset};
use czsl::embedding_store::{synth_generate, SynthConfig};
use czsl::model::{load_checkpoint, ModelParams};
use czsl::numeric::grad_check;
use czsl::rng::stream_rng;
use czsl::training::{
    batch_loss, batch_loss_node, loss_and_grads, train, LossContext, LossWeights, TrainConfig,
    Triplet, TripletSampler,
};

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        hidden: 16,
        embed: 8,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_returns_the_initialization() {
    let ds = small_dataset(1);
    let cfg = quick(0);
    let out = train(&ds, &cfg).unwrap();
    assert!(out.history.is_empty());
    let init = ModelParams::init(cfg.dims_for(&ds), cfg.temperature, cfg.seed).unwrap();
    assert_eq!(out.params, init);
}

#[test]
fn same_seed_gives_identical_runs() {
    let ds = small_dataset(2);
    let a = train(&ds, &quick(3)).unwrap();
    let b = train(&ds, &quick(3)).unwrap();
    assert_eq!(a.params, b.params);
    let losses = |h: &[czsl::training::EpochRecord]| h.iter().map(|r| (r.epoch, r.mean_loss.to_bits())).collect::<Vec<_>>();
    assert_eq!(losses(&a.history), losses(&b.history));
    let c = train(&ds, &TrainConfig { seed: 3, ..quick(3) }).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn epochs_are_numbered_from_one() {
    let ds = small_dataset(2);
    let out = train(&ds, &quick(4)).unwrap();
    let epochs: Vec<usize> = out.history.iter().map(|r| r.epoch).collect();
    assert_eq!(epochs, [1, 2, 3, 4]);
    assert!(out.history.iter().all(|r| r.mean_loss.is_finite() && r.mean_loss > 0.0));
}

#[test]
fn checkpoints_land_at_the_interval() {
    let ds = small_dataset(2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.czk");
    let cfg = TrainConfig {
        checkpoint_path: Some(path.clone()),
        checkpoint_interval: 2,
        ..quick(5)
    };
    train(&ds, &cfg).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap().header.epoch, 4);
}

#[test]
fn invalid_config_is_rejected() {
    let ds = small_dataset(2);
    for cfg in [
        TrainConfig { batch_size: 0, ..quick(1) },
        TrainConfig { temperature: 0.0, ..quick(1) },
        TrainConfig { weights: LossWeights { attr: -1.0, ..LossWeights::default() }, ..quick(1) },
    ] {
        assert!(matches!(train(&ds, &cfg), Err(czsl::Error::Config(_))));
    }
}

#[test]
fn two_triplet_batch_gradient_checks() {
    let ds = small_dataset(5);
    let ctx = LossContext::<f64>::new(&ds).unwrap();
    let sampler = TripletSampler::new(&ds);
    let mut rng = stream_rng(5, "test");
    let mut batch: Vec<Triplet> = Vec::new();
    while batch.len() < 2 {
        let t = sampler.sample(&mut rng, 1)[0];
        if t.is_complete() {
            batch.push(t);
        }
    }
    let params = params_for(&ds, 5);
    let weights = LossWeights::default();
    let err = grad_check(
        |g, flat| {
            let p = params.attach_flat(g, flat)?;
            let feats = ctx.constant_features(g, &batch);
            batch_loss_node(g, &p, &ctx, &batch, &feats, &weights)
        },
        &params.flatten(),
    )
    .unwrap();
    assert!(err < 1e-5, "{err:e}");

    let (value, grads) = loss_and_grads(&params, &ctx, &batch, &weights).unwrap();
    assert_eq!(value, batch_loss(&params, &ctx, &batch, &weights).unwrap());
    assert_eq!(grads.len(), 10);
}

#[test]
fn incomplete_triplets_only_train_the_pair_term() {
    let ds = small_dataset(6);
    let ctx = LossContext::<f64>::new(&ds).unwrap();
    let sampler = TripletSampler::new(&ds);
    let mut rng = stream_rng(6, "test");
    let t = sampler.sample(&mut rng, 1)[0];
    let lonely = Triplet { same_attr: None, same_obj: None, ..t };
    let params = params_for(&ds, 6);
    let full = batch_loss(&params, &ctx, &[lonely], &LossWeights::default()).unwrap();
    let pair = batch_loss(&params, &ctx, &[lonely], &LossWeights::pair_only()).unwrap();
    assert_eq!(full, pair);
}

#[test]
fn noiseless_training_halves_the_loss_within_fifty_epochs() {
    let ds = synth_generate(&SynthConfig { sigma: 0.0, ..SynthConfig::default() }).unwrap();
    let out = train(&ds, &TrainConfig { epochs: 50, ..TrainConfig::default() }).unwrap();
    let first = out.history.first().unwrap().mean_loss;
    let last = out.history.last().unwrap().mean_loss;
    assert!(last < 0.5 * first, "{first} -> {last}");
}
