use super::suite::{nearby_targets, random_instance, random_spd};
use super::*;
use crate::revnet::{Activation, CouplingBlock};

#[test]
fn zero_weight_jacobian_has_kronecker_structure() {
    let (base, x) = random_instance(4, 3, 1, 2, 5, 0.3).unwrap();
    let b = &base.blocks()[0];
    let blk = CouplingBlock::new(Mat::zeros(2, 3), Mat::zeros(2, 3), b.va().clone(), b.vb().clone()).unwrap();
    let model = RevMlp::from_blocks(vec![blk], 4, Activation::Relu).unwrap();
    let jac = dense_jacobian(&model, &x).unwrap();
    assert_eq!(jac.j.shape(), (2 * 4, 2 * 2 * 3));
    let (_, cache) = model.forward(&x).unwrap();
    let c = &cache.blocks()[0];
    let eye = Mat::identity(2);
    // rows of x¹ against w1: s1ᵀ ⊗ I; x² against w1 vanishes with W² = 0
    let (sel1, sel2) = half_selectors(2, 2);
    let w1_cols: Vec<usize> = (0..6).collect();
    let w2_cols: Vec<usize> = (6..12).collect();
    let j_w1 = jac.j.select_cols(&w1_cols);
    let j_w2 = jac.j.select_cols(&w2_cols);
    assert_eq!(sel1.matmul(&j_w1).unwrap(), kron(&c.s1.transpose(), &eye));
    assert_eq!(sel2.matmul(&j_w1).unwrap().max_abs(), 0.0);
    assert_eq!(sel2.matmul(&j_w2).unwrap(), kron(&c.s2.transpose(), &eye));
}

#[test]
fn reverse_mode_and_blockwise_jacobians_agree() {
    for (d, dp, depth, n, seed) in super::suite::instance_family(6) {
        let (model, x) = random_instance(d, dp, depth, n, seed, 0.3).unwrap();
        let jac = dense_jacobian(&model, &x).unwrap();
        assert!(jac.fd_rel_error <= 1e-5, "fd {}", jac.fd_rel_error);
        let blockwise = dense_jacobian_blockwise(&model, &x).unwrap();
        assert!(rel_frobenius(&blockwise, &jac.j).unwrap() < 1e-12);
        assert_eq!(jac.j.shape(), (n * d, depth * d * dp));
    }
}

#[test]
fn one_block_right_inverse_is_pseudoinverse() {
    let (model, x) = random_instance(4, 8, 1, 3, 8, 0.3).unwrap();
    let ri = dense_right_inverse(&model, &x).unwrap();
    let j = dense_jacobian(&model, &x).unwrap().j;
    let jp = pseudoinverse(&j, PinvPolicy::Truncate { rtol: 1e-12, atol: 0.0 }).unwrap().matrix;
    assert!(rel_frobenius(&ri, &jp).unwrap() <= 1e-7);
    assert!(j.matmul(&ri).unwrap().sub(&Mat::identity(12)).unwrap().max_abs() <= 1e-8);
    assert_eq!(ri.matvec(&[0.0; 12]).unwrap(), vec![0.0; 32]);
}

#[test]
fn multi_block_right_inverse_is_not_the_pseudoinverse() {
    // the stacked right inverse satisfies J J⊣ = I but differs from J⁺
    let (model, x) = random_instance(4, 8, 2, 2, 3, 0.3).unwrap();
    let ri = dense_right_inverse(&model, &x).unwrap();
    let j = dense_jacobian(&model, &x).unwrap().j;
    assert!(j.matmul(&ri).unwrap().sub(&Mat::identity(8)).unwrap().max_abs() <= 1e-8);
    let jp = pseudoinverse(&j, PinvPolicy::Truncate { rtol: 1e-12, atol: 0.0 }).unwrap().matrix;
    assert!(rel_frobenius(&ri, &jp).unwrap() > 1e-3);
}

#[test]
fn size_guard() {
    let (model, x) = random_instance(16, 64, 2, 40, 1, 0.1).unwrap();
    assert!(matches!(dense_jacobian(&model, &x), Err(OracleError::TooLarge(_))));
}

#[test]
fn rank_deficiency_reported() {
    let (model, _) = random_instance(4, 2, 1, 3, 1, 0.3).unwrap();
    let x = Mat::from_fn(4, 3, |i, j| (i + j) as f64);
    assert!(matches!(dense_right_inverse(&model, &x), Err(OracleError::RankDeficient { .. })));
}

#[test]
fn projection_cases() {
    let (model, x) = random_instance(4, 8, 1, 2, 1, 0.3).unwrap();
    let rep = check_projection(&model, &x, &Mat::identity(8)).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep.residuals["max_abs_A_minus_I"] <= 1e-6);
    let rep = check_projection(&model, &x, &random_spd(8, 4)).unwrap();
    assert!(rep.pass, "{rep:?}");

    let (model, x) = random_instance(4, 2, 1, 4, 2, 0.3).unwrap();
    let rep = check_projection(&model, &x, &Mat::identity(16)).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep.residuals["rank_A"] < 16.0);
    assert_eq!(rep.residuals["rank_A"], rep.residuals["rank_J"]);

    let mut not_spd = Mat::identity(16);
    not_spd[(0, 0)] = -1.0;
    assert!(matches!(check_projection(&model, &x, &not_spd), Err(OracleError::NotSpd)));
}

#[test]
fn newton_function_space_cases() {
    let (model, x) = random_instance(4, 16, 1, 2, 7, 0.3).unwrap();
    let y = nearby_targets(&x, 1);
    let rep = check_newton_function_space(&model, &x, &y, &Mat::identity(8)).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep.residuals.contains_key("rel_gn_step_vs_pinv"));
    let rep = check_newton_function_space(&model, &x, &y, &random_spd(8, 2)).unwrap();
    assert!(rep.pass, "{rep:?}");
    // ε = 0: both steps vanish
    let y0 = model.predict(&x).unwrap();
    let rep = check_newton_function_space(&model, &x, &y0, &Mat::identity(8)).unwrap();
    assert!(rep.pass);
    assert_eq!(rep.residuals["rel_ggn_vs_function_space"], 0.0);
}

#[test]
fn gn_step_matches_dense_and_catches_sign_flip() {
    let (model, x) = random_instance(4, 8, 2, 3, 12, 0.3).unwrap();
    let y = nearby_targets(&x, 2);
    let rep = check_gn_step_dense(&model, &x, &y, 0.7, layerwise_deltas).unwrap();
    assert!(rep.pass, "{rep:?}");

    // W² update with the B-term sign flipped
    let tampered = |m: &RevMlp, cache: &ActivationCache, eps: &Mat| -> std::result::Result<Vec<WeightPair>, OptimError> {
        let tangents = m.inverse_jvp_all(cache, eps)?;
        let mut out = Vec::new();
        for (b, ((g1, g2), c)) in tangents.into_iter().zip(cache.blocks()).enumerate() {
            let d1 = g1.matmul(&pseudoinverse(&c.s1, PinvPolicy::EXACT)?.matrix)?;
            let rhs = g2.add(&m.weight_jvp_x2(cache, b, &d1)?)?;
            let d2 = rhs.matmul(&pseudoinverse(&c.s2, PinvPolicy::EXACT)?.matrix)?;
            out.push(WeightPair { w1: d1.scale(0.5), w2: d2.scale(0.5) });
        }
        Ok(out)
    };
    let rep = check_gn_step_dense(&model, &x, &y, 0.7, tampered).unwrap();
    assert!(!rep.pass);
}

#[test]
fn identical_right_inverses_give_zero_gap() {
    let (model, x) = random_instance(4, 8, 2, 2, 11, 1e-3).unwrap();
    let y = nearby_targets(&x, 11);
    let a = trajectory(&model, &x, &y, 0.1, 5, RightInverse::Layerwise).unwrap();
    let b = trajectory(&model, &x, &y, 0.1, 5, RightInverse::Layerwise).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fast_suite_passes() {
    let reports = run_suite(SuiteLevel::Fast);
    for r in &reports {
        assert!(r.pass, "{}", serde_json::to_string(r).unwrap());
    }
    assert!(reports.len() > 20);
}

#[test]
fn report_json_shape() {
    let (model, x) = random_instance(4, 8, 1, 2, 1, 0.3).unwrap();
    let rep = check_layerwise_mpp(&model, &x).unwrap();
    let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
    for key in ["check", "instance_params", "residuals", "pass"] {
        assert!(v.get(key).is_some());
    }
}
