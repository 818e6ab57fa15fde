use super::*;
use crate::linalg::PinvPolicy;
use crate::losses::{functional_gradient, loss_value, LossKind, TargetBatch};
use crate::revnet::{init, logits, Activation, CouplingBlock, InitScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn regression_instance(d: usize, dp: usize, depth: usize, n: usize, seed: u32) -> (RevMlp, Mat, TargetBatch) {
    let model = init(d, dp, depth, d, seed, InitScheme::Gaussian { sigma: 1e-3 }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64 + 1);
    let x = random_mat(d, n, &mut rng);
    // targets a modest perturbation of the (near-identity) initial map
    let y = TargetBatch::Regression(x.add(&random_mat(d, n, &mut rng).scale(0.1)).unwrap());
    (model, x, y)
}

fn eps_norm(model: &RevMlp, x: &Mat, y: &TargetBatch) -> f64 {
    let f = logits(&model.predict(x).unwrap(), model.d_y());
    functional_gradient(LossKind::SquareLoss, &f, y, model.d()).unwrap().frobenius_norm()
}

#[test]
fn gn_fixed_point() {
    let (mut model, x, _) = regression_instance(4, 16, 2, 2, 1);
    let y = TargetBatch::Regression(model.predict(&x).unwrap());
    let before = model.weights();
    let cfg = GnConfig { lr: 1.0, pinv: PinvPolicy::EXACT, weight_decay: 0.0 };
    let report = gn_step(&mut model, &x, &y, LossKind::SquareLoss, &cfg).unwrap();
    assert_eq!(report.eps_norm, 0.0);
    assert_eq!(model.weights(), before);
}

#[test]
fn gn_full_step_contracts_residual() {
    for seed in 0..5 {
        let (mut model, x, y) = regression_instance(4, 16, 1, 2, seed);
        let e0 = eps_norm(&model, &x, &y);
        let cfg = GnConfig { lr: 1.0, pinv: PinvPolicy::EXACT, weight_decay: 0.0 };
        let report = gn_step(&mut model, &x, &y, LossKind::SquareLoss, &cfg).unwrap();
        assert_eq!(report.blocks[0].rank1, 2);
        let e1 = eps_norm(&model, &x, &y);
        assert!(e1 <= 0.15 * e0, "seed {seed}: {e1} vs {e0}");
    }
}

#[test]
fn gn_small_step_follows_linear_dynamics() {
    for seed in 0..5 {
        let (mut model, x, y) = regression_instance(4, 16, 1, 2, seed);
        let e0 = eps_norm(&model, &x, &y);
        let cfg = GnConfig { lr: 0.1, pinv: PinvPolicy::EXACT, weight_decay: 0.0 };
        gn_step(&mut model, &x, &y, LossKind::SquareLoss, &cfg).unwrap();
        let ratio = eps_norm(&model, &x, &y) / e0;
        assert!((ratio - 0.9).abs() <= 0.02, "seed {seed}: ratio {ratio}");
    }
}

#[test]
fn gn_rejects_wide_batch_unless_no_bottleneck() {
    let (mut model, x, y) = regression_instance(4, 2, 1, 3, 0);
    let cfg = GnConfig::new(0.5);
    assert!(matches!(gn_step(&mut model, &x, &y, LossKind::SquareLoss, &cfg), Err(OptimError::Precondition { .. })));

    let spec = crate::revnet::ModelSpec {
        d: 4,
        d_prime: 0,
        depth: 1,
        d_y: 4,
        seed: 0,
        init: InitScheme::Gaussian { sigma: 0.1 },
        no_bottleneck: true,
        activation: Activation::Relu,
    };
    let mut model = RevMlp::from_spec(&spec).unwrap();
    let x = Mat::from_fn(4, 3, |i, j| 1.0 + (i + j) as f64);
    let report = gn_step(&mut model, &x, &y, LossKind::SquareLoss, &cfg).unwrap();
    assert!(report.precondition_waived);
}

#[test]
fn gn_degenerate_rank_aborts() {
    // all activations zero: σ(Va X²) = 0
    let (mut model, _, y) = regression_instance(4, 16, 1, 2, 0);
    let x = Mat::zeros(4, 2);
    let err = gn_step(&mut model, &x, &y, LossKind::SquareLoss, &GnConfig::new(1.0)).unwrap_err();
    assert!(matches!(err, OptimError::Degenerate { block: 0, half: 1, .. }));
    assert_eq!(model.step(), 0);
}

#[test]
fn gn_noise_policy_is_reproducible() {
    let (m0, x, y) = regression_instance(8, 16, 2, 4, 3);
    let cfg = GnConfig { lr: 0.5, pinv: PinvPolicy::Noise { frac: 0.1, seed: 4 }, weight_decay: 0.0 };
    let run = || {
        let mut m = m0.clone();
        for _ in 0..3 {
            gn_step(&mut m, &x, &y, LossKind::SquareLoss, &cfg).unwrap();
        }
        m
    };
    assert_eq!(run(), run());
}

#[test]
fn sgd_zero_error_is_noop() {
    let (mut model, x, _) = regression_instance(4, 8, 2, 3, 2);
    let before = model.weights();
    let (_, cache) = model.forward(&x).unwrap();
    sgd_step(&mut model, &cache, &Mat::zeros(4, 3), &SgdConfig { lr: 0.1, weight_decay: 0.0 }).unwrap();
    assert_eq!(model.weights(), before);
}

#[test]
fn sgd_linear_block_hand_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (w1, w2, va, vb) = (random_mat(2, 3, &mut rng), random_mat(2, 3, &mut rng), random_mat(3, 2, &mut rng), random_mat(3, 2, &mut rng));
    let blk = CouplingBlock::new(w1.clone(), w2.clone(), va.clone(), vb.clone()).unwrap();
    let mut model = RevMlp::from_blocks(vec![blk], 4, Activation::Linear).unwrap();
    let x = random_mat(4, 5, &mut rng);
    let eps = random_mat(4, 5, &mut rng);
    let (x1, x2) = (x.row_block(0, 2), x.row_block(2, 4));
    let (e1, e2) = (eps.row_block(0, 2), eps.row_block(2, 4));
    // y1 = x1 + W1 Va x2,  y2 = x2 + W2 Vb y1
    let y1 = x1.add(&w1.matmul(&va).unwrap().matmul(&x2).unwrap()).unwrap();
    let g2 = e2.matmul_t(&vb.matmul(&y1).unwrap()).unwrap();
    let u1 = e1.add(&vb.t_matmul(&w2.t_matmul(&e2).unwrap()).unwrap()).unwrap();
    let g1 = u1.matmul_t(&va.matmul(&x2).unwrap()).unwrap();

    let (_, cache) = model.forward(&x).unwrap();
    sgd_step(&mut model, &cache, &eps, &SgdConfig { lr: 0.1, weight_decay: 0.0 }).unwrap();
    let want1 = w1.sub(&g1.scale(0.1)).unwrap();
    let want2 = w2.sub(&g2.scale(0.1)).unwrap();
    assert!(model.blocks()[0].w1().sub(&want1).unwrap().max_abs() < 1e-14);
    assert!(model.blocks()[0].w2().sub(&want2).unwrap().max_abs() < 1e-14);
}

#[test]
fn sgd_descends_on_quadratic() {
    let (mut model, x, y) = regression_instance(6, 12, 2, 4, 5);
    let mut prev = f64::INFINITY;
    for _ in 0..20 {
        let (out, cache) = model.forward(&x).unwrap();
        let f = logits(&out, 6);
        let loss = loss_value(LossKind::SquareLoss, &f, &y).unwrap();
        assert!(loss < prev);
        prev = loss;
        let eps = functional_gradient(LossKind::SquareLoss, &f, &y, 6).unwrap();
        sgd_step(&mut model, &cache, &eps, &SgdConfig { lr: 0.05, weight_decay: 0.0 }).unwrap();
    }
}

#[test]
fn sgd_rejects_stale_cache() {
    let (mut model, x, _) = regression_instance(4, 8, 1, 2, 1);
    let (_, cache) = model.forward(&x).unwrap();
    let eps = Mat::zeros(4, 2);
    sgd_step(&mut model, &cache, &eps, &SgdConfig { lr: 0.1, weight_decay: 0.0 }).unwrap();
    assert!(sgd_step(&mut model, &cache, &eps, &SgdConfig { lr: 0.1, weight_decay: 0.0 }).is_err());
}

#[test]
fn adam_scalar_first_step() {
    let cfg = AdamConfig::new(0.01);
    let mut w = Mat::from_rows(&[[0.5]]);
    let (mut m, mut v) = (Mat::zeros(1, 1), Mat::zeros(1, 1));
    adam_update(&mut w, &Mat::from_rows(&[[1.0]]), &mut m, &mut v, &cfg, 1.0 - 0.9, 1.0 - 0.999);
    // m̂ = 1, v̂ = 1
    let step = w[(0, 0)] - 0.5;
    assert!((step + 0.01).abs() < 1e-9, "{step}");
}

#[test]
fn adam_zero_gradient_keeps_weights() {
    let (mut model, x, _) = regression_instance(4, 8, 2, 3, 7);
    let before = model.weights();
    let mut state = OptState::new();
    for _ in 0..3 {
        let (_, cache) = model.forward(&x).unwrap();
        adam_step(&mut model, &cache, &Mat::zeros(4, 3), &AdamConfig::new(0.1), &mut state).unwrap();
    }
    assert_eq!(model.weights(), before);
    assert_eq!(state.step, 3);
}

#[test]
fn adam_is_deterministic() {
    let run = || {
        let (mut model, x, y) = regression_instance(6, 10, 2, 4, 8);
        let mut state = OptState::new();
        for _ in 0..5 {
            let (out, cache) = model.forward(&x).unwrap();
            let eps = functional_gradient(LossKind::SquareLoss, &logits(&out, 6), &y, 6).unwrap();
            let cfg = AdamConfig { weight_decay: 0.01, ..AdamConfig::new(1e-3) };
            adam_step(&mut model, &cache, &eps, &cfg, &mut state).unwrap();
        }
        model
    };
    assert_eq!(run(), run());
}

#[test]
fn schedule_thresholds() {
    use OptimizerKind::*;
    assert_eq!(switch_schedule(7, &[(0, Sgd)]).unwrap(), Sgd);
    let s = [(0, Adam), (50, Gn)];
    assert_eq!(switch_schedule(49, &s).unwrap(), Adam);
    assert_eq!(switch_schedule(50, &s).unwrap(), Gn);
    assert!(switch_schedule(1, &[(0, Adam), (5, Gn), (5, Sgd)]).is_err());
    assert!(switch_schedule(1, &[(2, Adam)]).is_err());
    assert!(switch_schedule(1, &[]).is_err());
}
