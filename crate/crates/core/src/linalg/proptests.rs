use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;

/// `k` orthonormal columns of length `m` by modified Gram-Schmidt.
fn orthonormal(m: usize, k: usize, rng: &mut ChaCha8Rng) -> Mat {
    let mut q = Mat::zeros(m, k);
    let mut j = 0;
    while j < k {
        let mut v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for p in 0..j {
                let proj: f64 = (0..m).map(|i| q[(i, p)] * v[i]).sum();
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi -= proj * q[(i, p)];
                }
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        for (i, vi) in v.iter().enumerate() {
            q[(i, j)] = vi / norm;
        }
        j += 1;
    }
    q
}

/// `m × n` matrix with prescribed singular values, log-spaced from 1 down
/// to `1/cond`, of which the last `m.min(n) − rank` are zeroed.
fn conditioned(m: usize, n: usize, cond: f64, rank: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = m.min(n);
    let u = orthonormal(m, r, &mut rng);
    let v = orthonormal(n, r, &mut rng);
    let mut us = u.clone();
    for k in 0..r {
        let s = if k >= rank {
            0.0
        } else if r == 1 {
            1.0
        } else {
            cond.powf(-(k as f64) / (r - 1) as f64)
        };
        for i in 0..m {
            us[(i, k)] *= s;
        }
    }
    us.matmul_t(&v).unwrap()
}

fn orth_err(q: &Mat) -> f64 {
    let g = q.t_matmul(q).unwrap();
    g.sub(&Mat::identity(g.rows())).unwrap().max_abs()
}

fn case() -> impl Strategy<Value = (usize, usize, f64, u64)> {
    (1usize..=64, 1usize..=64, 0.0f64..=6.0, any::<u64>()).prop_map(|(m, n, e, s)| (m, n, 10f64.powf(e), s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn svd_invariants((m, n, cond, seed) in case()) {
        let a = conditioned(m, n, cond, m.min(n), seed);
        let f = svd(&a).unwrap();
        prop_assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(orth_err(&f.u) <= 1e-10);
        prop_assert!(orth_err(&f.vt.transpose()) <= 1e-10);
        let rec = f.reconstruct().sub(&a).unwrap().frobenius_norm();
        prop_assert!(rec <= 1e-10 * a.frobenius_norm(), "reconstruction {}", rec);
        // singular values match the construction
        prop_assert!((f.s[0] - 1.0).abs() <= 1e-10);
        let smallest = if f.s.len() == 1 { 1.0 } else { 1.0 / cond };
        prop_assert!((f.s[f.s.len() - 1] - smallest).abs() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn moore_penrose_property((m, n, cond, seed) in case(), drop in 0usize..4) {
        let rank = m.min(n).saturating_sub(drop).max(1);
        let a = conditioned(m, n, cond, rank, seed);
        let p = pseudoinverse(&a, PinvPolicy::EXACT).unwrap().matrix;
        let apa = a.matmul(&p).unwrap().matmul(&a).unwrap();
        prop_assert!(apa.sub(&a).unwrap().frobenius_norm() <= 1e-8 * a.frobenius_norm());

        // v in the row space: A A⁺ A v = A v
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = a.transpose().matvec(&w).unwrap();
        let av = a.matvec(&v).unwrap();
        let apav = apa.matvec(&v).unwrap();
        let err = apav.iter().zip(&av).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-8 * a.frobenius_norm() * vn, "row space {}", err);
    }

    #[test]
    fn pinv_scale_equivariant((m, n, cond, seed) in case(), c in 1e-3f64..1e3, rtol in prop_oneof![Just(0.0), 1e-4f64..0.5]) {
        let a = conditioned(m, n, cond, m.min(n), seed);
        let policy = PinvPolicy::Truncate { rtol, atol: 0.0 };
        let p = pseudoinverse(&a, policy).unwrap().matrix;
        let pc = pseudoinverse(&a.scale(c), policy).unwrap().matrix;
        let want = p.scale(1.0 / c);
        prop_assert!(pc.sub(&want).unwrap().frobenius_norm() <= 1e-10 * want.frobenius_norm());
    }
}
