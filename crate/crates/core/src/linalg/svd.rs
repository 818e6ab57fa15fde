//! Thin singular value decomposition by one-sided (Hestenes) Jacobi.
//!
//! Columns of the input are rotated pairwise until they are mutually
//! orthogonal to a relative tolerance; the column norms are then the singular
//! values. One-sided Jacobi computes small singular values to high relative
//! accuracy, which the oracle checks rely on.

use super::{LinalgError, Mat};

/// Relative off-diagonal tolerance: a pair is left alone once
/// `|⟨a_p, a_q⟩| ≤ TOL · ‖a_p‖ ‖a_q‖`.
const TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 80;

/// `A = U · diag(s) · Vᵀ` with `r = min(m, n)`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m × r`, orthonormal columns.
    pub u: Mat,
    /// Descending, non-negative.
    pub s: Vec<f64>,
    /// `r × n`, orthonormal rows.
    pub vt: Mat,
}

impl Svd {
    pub fn reconstruct(&self) -> Mat {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (v, s) in us.row_mut(i).iter_mut().zip(&self.s) {
                *v *= s;
            }
        }
        us.matmul(&self.vt).expect("svd factors are conformable")
    }

    /// Number of singular values strictly above `threshold`.
    pub fn rank_above(&self, threshold: f64) -> usize {
        self.s.iter().filter(|&&s| s > threshold).count()
    }
}

pub fn svd(a: &Mat) -> Result<Svd, LinalgError> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(LinalgError::Empty("svd"));
    }
    a.check_finite("svd input")?;
    if m >= n {
        // Rows of aᵀ are the columns of a.
        let (u_t, s, vt) = jacobi_tall(a.transpose(), m, n)?;
        Ok(Svd { u: u_t.transpose(), s, vt })
    } else {
        // a = (aᵀ)ᵀ: factor aᵀ (n × m, tall) and swap the roles of U and V.
        let (u_t, s, vt) = jacobi_tall(a.clone(), n, m)?;
        Ok(Svd { u: vt.transpose(), s, vt: u_t })
    }
}

/// One-sided Jacobi on a tall `m × n` matrix given as its transpose `w`
/// (`n × m`, one row per column of the original).
///
/// Returns `(Uᵀ, s, Vᵀ)` with `Uᵀ` of shape `n × m`.
fn jacobi_tall(mut w: Mat, m: usize, n: usize) -> Result<(Mat, Vec<f64>, Mat), LinalgError> {
    debug_assert_eq!(w.shape(), (n, m));
    let mut v = Mat::identity(n);
    let mut norms: Vec<f64> = (0..n).map(|i| dot(w.row(i), w.row(i))).collect();

    let mut converged = n == 1;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(LinalgError::NoConvergence { sweeps });
        }
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let (wp, wq) = two_rows(&mut w, p, q);
                let gamma = dot(wp, wq);
                if gamma.abs() <= TOL * (alpha.sqrt() * beta.sqrt()) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(wp, wq, c, s);
                let (vp, vq) = two_rows(&mut v, p, q);
                rotate(vp, vq, c, s);
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
        // Cached norms drift slightly under the update formula.
        for (i, nrm) in norms.iter_mut().enumerate() {
            *nrm = dot(w.row(i), w.row(i));
        }
        converged = !rotated;
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sigma: Vec<f64> = norms.iter().map(|x| x.sqrt()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

    let mut ut = Mat::zeros(n, m);
    let mut vt = Mat::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        let sv = sigma[i];
        s.push(sv);
        vt.row_mut(k).copy_from_slice(v.row(i));
        if sv > f64::MIN_POSITIVE * 1e8 {
            let inv = 1.0 / sv;
            for (d, x) in ut.row_mut(k).iter_mut().zip(w.row(i)) {
                *d = x * inv;
            }
        } else {
            missing.push(k);
        }
    }
    complete_orthonormal_rows(&mut ut, &missing);
    Ok((ut, s, vt))
}

/// Fills the listed rows of `q` with unit vectors orthogonal to every other
/// row. Used for the left singular vectors of exactly-zero singular values.
fn complete_orthonormal_rows(q: &mut Mat, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let dim = q.cols();
    let mut filled: Vec<bool> = vec![true; q.rows()];
    for &k in missing {
        filled[k] = false;
    }
    let mut next_basis = 0;
    for &k in missing {
        loop {
            assert!(next_basis < dim, "cannot complete an orthonormal basis");
            let mut cand = vec![0.0; dim];
            cand[next_basis] = 1.0;
            next_basis += 1;
            for _ in 0..2 {
                for (r, &ok) in filled.iter().enumerate() {
                    if !ok {
                        continue;
                    }
                    let proj = dot(q.row(r), &cand);
                    for (c, x) in cand.iter_mut().zip(q.row(r)) {
                        *c -= proj * x;
                    }
                }
            }
            let nrm = dot(&cand, &cand).sqrt();
            if nrm > 1e-8 {
                for (d, c) in q.row_mut(k).iter_mut().zip(&cand) {
                    *d = c / nrm;
                }
                filled[k] = true;
                break;
            }
        }
    }
}

fn two_rows(m: &mut Mat, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let c = m.cols();
    let (head, tail) = m.as_mut_slice().split_at_mut(q * c);
    (&mut head[p * c..(p + 1) * c], &mut tail[..c])
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}
