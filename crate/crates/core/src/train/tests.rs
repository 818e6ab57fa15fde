use super::*;
use crate::data::{synthetic_regression, synthetic_regression_with_noise};
use crate::revnet::{init, InitScheme};

fn gn_cfg(lr: f64) -> TrainConfig {
    TrainConfig {
        loss: LossKind::SquareLoss,
        optimizer: OptimizerSpec::gn(GnConfig { lr, pinv: crate::linalg::PinvPolicy::EXACT, weight_decay: 0.0 }),
        regime: Regime::FullBatch,
        batch_seed: 0,
        augment: false,
        track_batch_loss: false,
    }
}

#[test]
fn full_batch_gn_fits_synthetic() {
    let (train, _) = synthetic_regression(8, 8, 3).unwrap();
    let model = init(8, 64, 2, 8, 1, InitScheme::default()).unwrap();
    let mut t = Trainer::new(model, gn_cfg(0.5), &train).unwrap();
    let first = evaluate(&t.model, &train, LossKind::SquareLoss, 64).unwrap().loss;
    let mut reached = None;
    for k in 1..=40 {
        t.step().unwrap();
        if evaluate(&t.model, &train, LossKind::SquareLoss, 64).unwrap().loss < 1e-6 {
            reached = Some(k);
            break;
        }
    }
    assert!(reached.is_some(), "loss from {first} never fell below 1e-6");
    assert_eq!(t.epoch(), reached.unwrap());
}

#[test]
fn runs_are_deterministic() {
    let (train, _) = synthetic_regression(6, 40, 2).unwrap();
    let run = |kind: OptimizerKind| {
        let mut cfg = gn_cfg(0.3);
        cfg.optimizer.schedule = vec![(0, kind)];
        cfg.optimizer.sgd.lr = 0.05;
        cfg.regime = Regime::MiniBatch(8);
        cfg.batch_seed = 4;
        cfg.track_batch_loss = true;
        let model = init(6, 12, 2, 6, 5, InitScheme::default()).unwrap();
        let mut t = Trainer::new(model, cfg, &train).unwrap();
        let recs: Vec<StepRecord> = (0..2).flat_map(|_| t.run_epoch().unwrap()).collect();
        (t.model, recs)
    };
    for kind in [OptimizerKind::Gn, OptimizerKind::Sgd, OptimizerKind::Adam] {
        let (m1, r1) = run(kind);
        let (m2, r2) = run(kind);
        assert_eq!(m1, m2);
        assert_eq!(r1, r2);
        assert_eq!(r1.len(), 10);
        assert!(r1.iter().all(|r| r.loss_after.is_some() && r.optimizer == kind));
    }
}

#[test]
fn schedule_switches_at_epoch() {
    let (train, _) = synthetic_regression(4, 16, 1).unwrap();
    let mut cfg = gn_cfg(0.5);
    cfg.optimizer.schedule = vec![(0, OptimizerKind::Adam), (2, OptimizerKind::Gn)];
    cfg.regime = Regime::MiniBatch(4);
    let model = init(4, 8, 1, 4, 0, InitScheme::default()).unwrap();
    let mut t = Trainer::new(model, cfg, &train).unwrap();
    let kinds: Vec<OptimizerKind> = (0..3).flat_map(|_| t.run_epoch().unwrap()).map(|r| r.optimizer).collect();
    assert_eq!(kinds[..8], [OptimizerKind::Adam; 8]);
    assert_eq!(kinds[8..], [OptimizerKind::Gn; 4]);
}

#[test]
fn divergence_is_reported() {
    let (train, _) = synthetic_regression_with_noise(4, 16, 1, 0.0).unwrap();
    let mut cfg = gn_cfg(0.5);
    cfg.optimizer = OptimizerSpec::sgd(SgdConfig { lr: 1e6, weight_decay: 0.0 });
    let model = init(4, 8, 2, 4, 0, InitScheme::Xavier).unwrap();
    let mut t = Trainer::new(model, cfg, &train).unwrap();
    let err = (0..50).find_map(|_| t.step().err()).expect("diverges");
    assert!(matches!(err, TrainError::Diverged { .. }), "{err}");
}

#[test]
fn config_errors() {
    let (train, _) = synthetic_regression(4, 16, 1).unwrap();
    let model = init(6, 8, 1, 4, 0, InitScheme::default()).unwrap();
    assert!(Trainer::new(model, gn_cfg(0.5), &train).is_err());
    let model = init(4, 8, 1, 4, 0, InitScheme::default()).unwrap();
    let mut cfg = gn_cfg(0.5);
    cfg.augment = true;
    assert!(Trainer::new(model.clone(), cfg, &train).is_err());
    let mut cfg = gn_cfg(0.5);
    cfg.regime = Regime::MiniBatch(17);
    assert!(Trainer::new(model, cfg, &train).is_err());
}

#[test]
fn evaluate_chunking_is_consistent() {
    let (train, _) = synthetic_regression(4, 37, 1).unwrap();
    let model = init(4, 8, 2, 4, 0, InitScheme::Xavier).unwrap();
    let a = evaluate(&model, &train, LossKind::SquareLoss, 1000).unwrap();
    let b = evaluate(&model, &train, LossKind::SquareLoss, 5).unwrap();
    assert!((a.loss - b.loss).abs() <= 1e-12 * a.loss);
    assert_eq!(a.accuracy, None);
}
