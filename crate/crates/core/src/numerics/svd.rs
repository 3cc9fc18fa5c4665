//! Singular value decomposition and the norms derived from it.

use super::Matrix;
use crate::error::{Error, Result};

/// Thin SVD `M = Σ σᵢ uᵢ vᵢᵀ` with `K = min(rows, cols)` triples.
#[derive(Clone, Debug)]
pub struct Svd {
    /// Non-increasing, non-negative.
    pub singular_values: Vec<f64>,
    /// rows × K, orthonormal columns.
    pub left_vectors: Matrix,
    /// cols × K, orthonormal columns.
    pub right_vectors: Matrix,
}

impl Svd {
    pub fn rank_count(&self) -> usize {
        self.singular_values.len()
    }

    /// `Σ σᵢ uᵢ vᵢᵀ` summed over the given 0-based index range.
    pub fn partial_sum(&self, range: std::ops::Range<usize>) -> Matrix {
        let (d, h) = (self.left_vectors.rows(), self.right_vectors.rows());
        let mut out = Matrix::zeros(d, h);
        for k in range {
            let s = self.singular_values[k];
            for i in 0..d {
                let us = self.left_vectors.get(i, k) * s;
                for j in 0..h {
                    let v = out.get(i, j) + us * self.right_vectors.get(j, k);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.partial_sum(0..self.singular_values.len())
    }
}

const MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Rotations orthogonalize the columns of the thinner orientation of `m`;
/// the accumulated rotations give the right singular vectors and the
/// normalized columns the left ones.
pub fn svd(m: &Matrix) -> Result<Svd> {
    m.ensure_finite("svd input")
        .map_err(|_| Error::invalid("svd input contains non-finite values"))?;
    if m.rows() >= m.cols() {
        jacobi_tall(m)
    } else {
        let t = jacobi_tall(&m.transpose())?;
        Ok(Svd {
            singular_values: t.singular_values,
            left_vectors: t.right_vectors,
            right_vectors: t.left_vectors,
        })
    }
}

fn jacobi_tall(m: &Matrix) -> Result<Svd> {
    let (rows, n) = m.shape();
    // column-major working copies
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = cols.iter().map(|c| (norm(c), 0)).collect();
    for (i, o) in order.iter_mut().enumerate() {
        o.1 = i;
    }
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let sigma_max = order.first().map_or(0.0, |o| o.0);
    let tiny = sigma_max * (rows.max(n) as f64) * eps;
    let mut singular_values = Vec::with_capacity(n);
    let mut left: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut right: Vec<Vec<f64>> = Vec::with_capacity(n);
    for &(s, idx) in &order {
        singular_values.push(s);
        left.push(if s > tiny && s > 0.0 {
            cols[idx].iter().map(|x| x / s).collect()
        } else {
            vec![0.0; rows]
        });
        right.push(v[idx].clone());
    }
    orthonormalize(&mut left);
    orthonormalize(&mut right);

    Ok(Svd {
        singular_values,
        left_vectors: Matrix::from_columns(&left)?,
        right_vectors: Matrix::from_columns(&right)?,
    })
}

fn rotate(vecs: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = vecs.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Modified Gram-Schmidt, two passes, in the given order. Columns that
/// collapse (zero singular values) are replaced by fresh basis directions.
fn orthonormalize(vecs: &mut [Vec<f64>]) {
    let dim = vecs.first().map_or(0, Vec::len);
    let mut next_basis = 0;
    for i in 0..vecs.len() {
        let original = norm(&vecs[i]);
        for _ in 0..2 {
            for j in 0..i {
                let proj = dot(&vecs[i], &vecs[j]);
                let (done, cur) = vecs.split_at_mut(i);
                for (x, y) in cur[0].iter_mut().zip(&done[j]) {
                    *x -= proj * y;
                }
            }
        }
        let mut nrm = norm(&vecs[i]);
        if nrm <= 1e-8 * original || nrm == 0.0 {
            // replacement direction: first basis vector with a solid component
            // outside the span of the columns already fixed
            loop {
                assert!(next_basis < dim, "ran out of basis vectors");
                let mut e = vec![0.0; dim];
                e[next_basis] = 1.0;
                next_basis += 1;
                for _ in 0..2 {
                    for v in &vecs[..i] {
                        let proj = dot(&e, v);
                        for (x, y) in e.iter_mut().zip(v) {
                            *x -= proj * y;
                        }
                    }
                }
                nrm = norm(&e);
                if nrm > 1e-3 {
                    vecs[i] = e;
                    break;
                }
            }
        }
        for x in vecs[i].iter_mut() {
            *x /= nrm;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Largest singular value by power iteration on `MᵀM`, applied as two
/// matrix-vector products (`O(rows·cols)` per step).
///
/// Stops once the eigen-residual `‖MᵀMv − λv‖` drops below `tol·λ`, which
/// bounds the relative error of `σ̂₁ = √λ` by about `tol/2`. A small spectral
/// gap slows convergence; exhausting `max_iters` yields
/// [`Error::ConvergenceFailure`] carrying the last estimate.
pub fn top_singular_value(m: &Matrix, tol: f64, max_iters: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    m.ensure_finite("power iteration input")
        .map_err(|_| Error::invalid("power iteration input contains non-finite values"))?;
    let h = m.cols();
    // deterministic start with no special alignment to coordinate axes
    let mut v: Vec<f64> = (0..h)
        .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.754_877_666).sin())
        .collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let mut lambda = 0.0;
    for _ in 0..max_iters {
        let mv = m.matvec(&v)?;
        let w = m.tr_matvec(&mv)?;
        lambda = dot(&v, &w);
        let residual: f64 = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - lambda * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if lambda > 0.0 && residual <= tol * lambda {
            return Ok(lambda.sqrt());
        }
        let nw = norm(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Err(Error::ConvergenceFailure {
        iterations: max_iters,
        last_estimate: lambda.max(0.0).sqrt(),
    })
}

/// `√(Σ Mᵢⱼ²)`, which equals `‖σ‖₂`.
pub fn frobenius_norm(m: &Matrix) -> f64 {
    norm(m.data())
}

/// Induced L1 norm: the largest absolute column sum.
pub fn l1_operator_norm(m: &Matrix) -> f64 {
    let mut sums = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (s, v) in sums.iter_mut().zip(m.row(i)) {
            *s += v.abs();
        }
    }
    sums.into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn uniform_rank_one() {
        let m = Matrix::from_fn(4, 2, |_, _| 0.25);
        let s = svd(&m).unwrap();
        assert_close(s.singular_values[0], (2.0f64 / 4.0).sqrt(), 1e-14);
        assert_close(s.singular_values[1], 0.0, 1e-14);
        let r = s.reconstruct();
        for (a, b) in r.data().iter().zip(m.data()) {
            assert_close(*a, *b, 1e-14);
        }
        assert_close(top_singular_value(&m, 1e-12, 1000).unwrap(), 0.5f64.sqrt(), 1e-12);
    }

    #[test]
    fn identity_spectrum() {
        let s = svd(&Matrix::identity(3)).unwrap();
        assert_eq!(s.singular_values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_power_iteration() {
        let m = Matrix::from_fn(3, 3, |i, j| if i == j { [3.0, 1.0, 0.5][i] } else { 0.0 });
        assert_close(top_singular_value(&m, 1e-10, 10_000).unwrap(), 3.0, 3e-10);
    }

    #[test]
    fn zero_matrix() {
        let z = Matrix::zeros(4, 4);
        assert_eq!(frobenius_norm(&z), 0.0);
        assert_eq!(top_singular_value(&z, 1e-8, 10).unwrap(), 0.0);
        let s = svd(&z).unwrap();
        assert!(s.singular_values.iter().all(|&x| x == 0.0));
        // vectors are still an orthonormal frame
        let g = s.left_vectors.transpose().matmul(&s.left_vectors).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_close(g.get(i, j), if i == j { 1.0 } else { 0.0 }, 1e-12);
            }
        }
    }

    #[test]
    fn wide_matrix_swaps_factors() {
        let m = Matrix::from_fn(2, 5, |i, j| (i + 1) as f64 * (j as f64 - 1.0));
        let s = svd(&m).unwrap();
        assert_eq!(s.left_vectors.shape(), (2, 2));
        assert_eq!(s.right_vectors.shape(), (5, 2));
        let r = s.reconstruct();
        for (a, b) in r.data().iter().zip(m.data()) {
            assert_close(*a, *b, 1e-12);
        }
    }

    #[test]
    fn degenerate_gap_reports_failure() {
        // σ₁ and σ₂ differ by 1e-9: the iterate barely turns towards v₁
        let m = Matrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => 1.0 + 1e-9,
            (1, 1) => 1.0,
            _ => 0.0,
        });
        match top_singular_value(&m, 1e-15, 3) {
            Err(Error::ConvergenceFailure {
                iterations,
                last_estimate,
            }) => {
                assert_eq!(iterations, 3);
                assert!((last_estimate - 1.0).abs() < 1e-6);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = Matrix::identity(2);
        m.set(0, 1, f64::NAN);
        assert!(matches!(svd(&m), Err(Error::InvalidInput(_))));
        assert!(top_singular_value(&m, 1e-6, 10).is_err());
        assert!(top_singular_value(&Matrix::identity(2), 0.0, 10).is_err());
    }

    #[test]
    fn l1_norm_column_stochastic() {
        let m = Matrix::new(2, 2, vec![0.3, 1.0, 0.7, 0.0]).unwrap();
        assert_close(l1_operator_norm(&m), 1.0, 1e-15);
        assert_eq!(l1_operator_norm(&Matrix::identity(3)), 1.0);
        assert_close(frobenius_norm(&Matrix::identity(3)), 3f64.sqrt(), 1e-15);
    }
}
