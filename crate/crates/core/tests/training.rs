use dan::dataset::{gen_world, Split, WorldConfig};
use dan::evaluator::EvalPairs;
use dan::trainer::{init_model, pair_loss_on, train, TrainConfig, Trained};
use dan::{ModelKind, Rng};

fn loss(model: &Trained<f64>, pairs: &EvalPairs<f64>) -> f64 {
    match model {
        Trained::Dan(p) => pair_loss_on(p, pairs).unwrap(),
        Trained::Ablation(p) => pair_loss_on(p, pairs).unwrap(),
        Trained::Classifier(_) => unreachable!(),
    }
}

// Full default world, full regime: takes tens of seconds in an optimised build.
#[test]
fn default_world_training_halves_train_loss() {
    let world = gen_world::<f64>(&WorldConfig::default(), &mut Rng::new(0)).unwrap();
    let cfg = TrainConfig::default();
    let pairs = EvalPairs::build(&world, Split::Train, None, 0).unwrap();
    for kind in [ModelKind::Dan, ModelKind::Ablation] {
        let initial = loss(&init_model(kind, &world, &cfg, &mut Rng::new(cfg.seed)).unwrap(), &pairs);
        let (trained, history) = train(kind, &world, &cfg).unwrap();
        let last = loss(&trained, &pairs);
        assert!(
            last <= 0.5 * initial,
            "{kind:?}: train loss {initial:.4} -> {last:.4} after {} epochs",
            history.records.len()
        );
    }
}
