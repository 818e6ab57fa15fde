//! Dense `f64` linear algebra: matrix arithmetic, SVD, regularized
//! pseudoinverses and a few small dense solvers used by the oracles.

mod mat;
mod pinv;
mod svd;
#[cfg(test)]
mod proptests;

pub use mat::Mat;
pub use pinv::{pseudoinverse, PinvPolicy, Pseudoinverse};
pub use svd::{svd, Svd};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },
    #[error("data length {got} does not match shape (expected {expected})")]
    DataLength { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{0}: empty matrix")]
    Empty(&'static str),
    #[error("jacobi iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("{0}: zero-norm operand")]
    ZeroNorm(&'static str),
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("invalid pseudoinverse policy {0:?}")]
    InvalidPolicy(PinvPolicy),
}

/// `⟨a, b⟩_F / (‖a‖_F ‖b‖_F)`.
pub fn frobenius_cosine(a: &Mat, b: &Mat) -> Result<f64, LinalgError> {
    let ab = a.dot(b)?;
    let na = a.frobenius_norm();
    let nb = b.frobenius_norm();
    if na == 0.0 || nb == 0.0 {
        return Err(LinalgError::ZeroNorm("frobenius_cosine"));
    }
    Ok((ab / (na * nb)).clamp(-1.0, 1.0))
}

/// Inverse of a square matrix by Gauss-Jordan elimination with partial pivoting.
pub fn inverse(a: &Mat) -> Result<Mat, LinalgError> {
    let n = a.rows();
    if n != a.cols() {
        return Err(LinalgError::Shape { op: "inverse", lhs: a.shape(), rhs: a.shape() });
    }
    let mut w = a.clone();
    let mut inv = Mat::identity(n);
    let scale = a.max_abs();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| w[(i, col)].abs().total_cmp(&w[(j, col)].abs()))
            .unwrap_or(col);
        if w[(pivot, col)].abs() <= f64::EPSILON * scale * n as f64 {
            return Err(LinalgError::Singular);
        }
        if pivot != col {
            for j in 0..n {
                let t = w[(col, j)];
                w[(col, j)] = w[(pivot, j)];
                w[(pivot, j)] = t;
                let t = inv[(col, j)];
                inv[(col, j)] = inv[(pivot, j)];
                inv[(pivot, j)] = t;
            }
        }
        let p = 1.0 / w[(col, col)];
        for j in 0..n {
            w[(col, j)] *= p;
            inv[(col, j)] *= p;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = w[(i, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                w[(i, j)] -= f * w[(col, j)];
                inv[(i, j)] -= f * inv[(col, j)];
            }
        }
    }
    Ok(inv)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// the columns of the second matrix.
pub fn sym_eigen(a: &Mat) -> Result<(Vec<f64>, Mat), LinalgError> {
    let n = a.rows();
    if n != a.cols() {
        return Err(LinalgError::NotSymmetric);
    }
    if !a.is_symmetric(1e-10 * a.max_abs().max(1.0)) {
        return Err(LinalgError::NotSymmetric);
    }
    let mut w = a.clone();
    let mut v = Mat::identity(n);
    for sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| w[(i, j)] * w[(i, j)])
            .sum();
        let total = w.frobenius_norm();
        if off.sqrt() <= 1e-15 * total || total == 0.0 {
            break;
        }
        if sweep == 99 {
            return Err(LinalgError::NoConvergence { sweeps: 100 });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (w[(q, q)] - w[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (wkp, wkq) = (w[(k, p)], w[(k, q)]);
                    w[(k, p)] = c * wkp - s * wkq;
                    w[(k, q)] = s * wkp + c * wkq;
                }
                for k in 0..n {
                    let (wpk, wqk) = (w[(p, k)], w[(q, k)]);
                    w[(p, k)] = c * wpk - s * wqk;
                    w[(q, k)] = s * wpk + c * wqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(j, j)].total_cmp(&w[(i, i)]));
    let values = order.iter().map(|&i| w[(i, i)]).collect();
    Ok((values, v.select_cols(&order)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_basic_cases() {
        let a = Mat::from_rows(&[[1.0, 2.0], [3.0, -1.0]]);
        assert!((frobenius_cosine(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!((frobenius_cosine(&a, &a.scale(-1.0)).unwrap() + 1.0).abs() < 1e-15);
        let swap = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(frobenius_cosine(&Mat::identity(2), &swap).unwrap(), 0.0);
        assert!(matches!(frobenius_cosine(&a, &Mat::zeros(2, 2)), Err(LinalgError::ZeroNorm(_))));
    }

    #[test]
    fn inverse_roundtrip_and_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Mat::from_fn(6, 6, |i, j| rng.gen_range(-1.0..1.0) + if i == j { 3.0 } else { 0.0 });
        let inv = inverse(&a).unwrap();
        assert!(a.matmul(&inv).unwrap().sub(&Mat::identity(6)).unwrap().max_abs() < 1e-12);
        assert_eq!(inverse(&Mat::zeros(2, 2)), Err(LinalgError::Singular));
    }

    #[test]
    fn symmetric_eigen_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = Mat::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let a = b.add(&b.transpose()).unwrap();
        let (vals, vecs) = sym_eigen(&a).unwrap();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let rec = vecs.matmul(&Mat::diag(&vals)).unwrap().matmul_t(&vecs).unwrap();
        assert!(rec.sub(&a).unwrap().max_abs() < 1e-12);
        assert!(sym_eigen(&b).is_err() || b.is_symmetric(1e-12));
    }
}
