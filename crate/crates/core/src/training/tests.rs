use super::*;
use crate::datamodel::{ImageTensor, ScoreMap};
use crate::model::ModelVariant;

fn losses_cfg() -> TrainConfig {
    TrainConfig::default()
}

fn run(losses: &[f64]) -> TrainState {
    let cfg = losses_cfg();
    losses.iter().fold(TrainState::new(&cfg), |s, &l| plateau_step(&s, l, &cfg))
}

#[test]
fn improvement_keeps_rate() {
    let s = run(&[1.0, 0.8]);
    assert_eq!(s.current_lr, 0.015);
    assert_eq!(s.best_val_loss, 0.8);
    assert_eq!(s.plateau_events, 0);
    assert_eq!(s.epoch, 2);
}

#[test]
fn plateau_halves_rate() {
    assert_eq!(run(&[1.0, 1.0]).current_lr, 0.0075);
    let s = run(&[1.0, 1.0, 1.0]);
    assert_eq!(s.current_lr, 0.00375);
    assert_eq!(s.plateau_events, 2);
    assert_eq!(s.best_val_loss, 1.0);
}

#[test]
fn improvement_below_epsilon_is_a_plateau() {
    assert_eq!(run(&[1.0, 1.0 - 5e-5]).current_lr, 0.0075);
    assert_eq!(run(&[1.0, 1.0 - 2e-4]).current_lr, 0.015);
}

#[test]
fn patience_counts_consecutive_epochs() {
    let cfg = TrainConfig {
        plateau_patience_epochs: 2,
        ..TrainConfig::default()
    };
    let s = [1.0, 1.0, 0.5, 0.6, 0.6]
        .iter()
        .fold(TrainState::new(&cfg), |s, &l| plateau_step(&s, l, &cfg));
    assert_eq!(s.plateau_events, 1);
    assert_eq!(s.best_val_loss, 0.5);
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    for bad in [
        TrainConfig { anneal_factor: 1.0, ..Default::default() },
        TrainConfig { batch_size: 0, ..Default::default() },
        TrainConfig { lr0: -1.0, ..Default::default() },
        TrainConfig { target_side: 63, ..Default::default() },
    ] {
        assert!(bad.validate().is_err());
    }
    let parsed: TrainConfig = serde_json::from_str(r#"{"max_epochs": 5}"#).unwrap();
    assert_eq!((parsed.max_epochs, parsed.batch_size, parsed.lr0), (5, 32, 0.015));
}

#[test]
fn trailing_singleton_folded() {
    let order: Vec<usize> = (0..9).collect();
    let b = batches(&order, 4);
    assert_eq!(b.iter().map(|b| b.len()).collect::<Vec<_>>(), [4, 5]);
    assert_eq!(batches(&order[..1], 4).len(), 1);
    assert_eq!(batches(&order[..8], 4).len(), 2);
}

/// Separable toy: positives respond on the left half of the map, negatives on
/// the right.
fn toy(n: usize, side: usize) -> Vec<Example> {
    let g = side / 2;
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let mut region = vec![0f32; g * g];
            for y in 0..g {
                for x in 0..g {
                    let left = x < g / 2;
                    if left == positive && (x + y + i) % 3 != 0 {
                        region[y * g + x] = 0.9;
                    }
                }
            }
            let map = ScoreMap::from_planes(g, g, region.clone(), region).unwrap();
            let v = (i % 5) as f32 / 5.0;
            Example {
                id: format!("t{i}"),
                image: ImageTensor::filled(side, side, v).unwrap(),
                map,
                target: if positive { 1.0 } else { 0.0 },
            }
        })
        .collect()
}

fn linear_cfg(side: usize) -> ModelConfig {
    ModelConfig {
        image_side: side,
        ..ModelConfig::new(ModelVariant::BinarizedLinear)
    }
}

#[test]
fn separable_linear_toy_converges() {
    let data = toy(20, 32);
    let cfg = TrainConfig {
        max_epochs: 50,
        target_side: 32,
        ..TrainConfig::default()
    };
    let (model, state) = train(&data, &data, &linear_cfg(32), &cfg).unwrap();
    let best = state.train_losses().into_iter().fold(f64::INFINITY, f64::min);
    assert!(best < 0.1, "train loss {best}");
    assert_eq!(state.history[0].lr, 0.015);
    assert_eq!(state.history[0].epoch, 0);
    let probs = evaluate(&model, &data, 32).unwrap().1;
    for (p, e) in probs.iter().zip(&data) {
        assert_eq!(*p >= 0.5, e.is_positive());
    }
}

#[test]
fn same_seed_same_history() {
    let data = toy(12, 32);
    let model_cfg = ModelConfig {
        image_side: 32,
        head_width: 2,
        kernel_size: 5,
        ..ModelConfig::new(ModelVariant::CraftMasked)
    };
    let cfg = TrainConfig {
        max_epochs: 3,
        batch_size: 4,
        target_side: 32,
        seed: 5,
        ..TrainConfig::default()
    };
    let (a, sa) = train(&data, &data, &model_cfg, &cfg).unwrap();
    let (b, sb) = train(&data, &data, &model_cfg, &cfg).unwrap();
    assert_eq!(sa, sb);
    assert_eq!(a.params().to_raw().unwrap(), b.params().to_raw().unwrap());
    assert!(sa.train_losses().iter().all(|l| l.is_finite()));
    let lrs: Vec<f64> = sa.history.iter().map(|r| r.lr).collect();
    assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn single_class_rejected() {
    let data: Vec<_> = toy(10, 32).into_iter().filter(|e| e.is_positive()).collect();
    let cfg = TrainConfig {
        target_side: 32,
        ..TrainConfig::default()
    };
    assert!(matches!(
        train(&data, &data, &linear_cfg(32), &cfg),
        Err(Error::SingleClass)
    ));
}

#[test]
fn divergence_reported() {
    let data = toy(10, 32);
    let cfg = TrainConfig {
        target_side: 32,
        lr0: 1e30,
        max_epochs: 5,
        ..TrainConfig::default()
    };
    assert!(matches!(
        train(&data, &data, &linear_cfg(32), &cfg),
        Err(Error::Diverged { .. })
    ));
}

#[test]
fn side_mismatch_rejected() {
    let data = toy(10, 32);
    let cfg = TrainConfig::default();
    assert!(train(&data, &data, &linear_cfg(32), &cfg).is_err());
}

#[test]
fn history_csv_has_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = losses_cfg();
    let mut state = TrainState::new(&cfg);
    state.history.push(EpochRecord {
        epoch: 0,
        lr: 0.015,
        train_loss: 0.7,
        val_loss: 0.69,
        val_auc: Some(0.5),
        val_precision: None,
        val_recall: None,
        val_f1: None,
    });
    let path = dir.path().join("history.csv");
    write_history_csv(&path, &state).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,lr,train_loss,val_loss,val_auc,val_precision,val_recall,val_f1"
    );
    assert_eq!(lines.next().unwrap(), "0,0.015,0.7,0.69,0.5,,,");
}
