//! Small dense linear algebra: Jacobi eigen/SVD, power iteration, Gram–Schmidt.
//!
//! Mode sizes at desk scale are small, so the simple Jacobi sweeps are plenty.

use crate::tensor::DenseMatrix;

/// Off-diagonal stopping threshold for the cyclic Jacobi sweeps, relative to ‖A‖_F.
pub const JACOBI_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix.
///
/// Eigenvalues are returned in descending order with matching eigenvector
/// columns.
pub fn symmetric_eigen(a: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "symmetric_eigen needs a square matrix");
    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    let scale = a.frob_norm();
    if scale > 0.0 {
        // one polishing sweep after the threshold is met; Jacobi converges
        // quadratically so this lands near machine precision
        let mut polish = false;
        for _ in 0..MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
                .map(|(p, q)| m.get(p, q).powi(2))
                .sum::<f64>()
                .sqrt();
            if polish || off == 0.0 {
                break;
            }
            polish = off <= JACOBI_TOL * scale;
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m.get(p, q);
                    if apq.abs() <= f64::MIN_POSITIVE {
                        continue;
                    }
                    let app = m.get(p, p);
                    let aqq = m.get(q, q);
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = m.get(k, p);
                        let akq = m.get(k, q);
                        m.set(k, p, c * akp - s * akq);
                        m.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = m.get(p, k);
                        let aqk = m.get(q, k);
                        m.set(p, k, c * apk - s * aqk);
                        m.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    (values, vectors)
}

/// Thin singular value decomposition `a = U diag(s) Vᵀ` by one-sided Jacobi.
pub struct Svd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

pub fn svd(a: &DenseMatrix) -> Svd {
    if a.rows() < a.cols() {
        let t = svd(&a.transpose());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let (m, n) = (a.rows(), a.cols());
    let mut w = a.clone();
    let mut v = DenseMatrix::identity(n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for k in 0..m {
                    let x = w.get(k, p);
                    let y = w.get(k, q);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let x = w.get(k, p);
                    let y = w.get(k, q);
                    w.set(k, p, c * x - s * y);
                    w.set(k, q, s * x + c * y);
                }
                for k in 0..n {
                    let x = v.get(k, p);
                    let y = v.get(k, q);
                    v.set(k, p, c * x - s * y);
                    v.set(k, q, s * x + c * y);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let tiny = s.first().copied().unwrap_or(0.0) * 1e-14 * (m.max(n) as f64);
    let mut u = DenseMatrix::zeros(m, n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (c, &j) in order.iter().enumerate() {
        let col: Vec<f64> = if norms[j] > tiny && norms[j] > 0.0 {
            w.column(j).iter().map(|x| x / norms[j]).collect()
        } else {
            complete_basis(&basis, m)
        };
        for (r, &x) in col.iter().enumerate() {
            u.set(r, c, x);
        }
        basis.push(col);
    }
    let v = DenseMatrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Svd { u, s, v }
}

/// A unit vector orthogonal to every vector in `basis`.
fn complete_basis(basis: &[Vec<f64>], m: usize) -> Vec<f64> {
    for e in 0..m {
        let mut x = vec![0.0; m];
        x[e] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let d: f64 = b.iter().zip(&x).map(|(p, q)| p * q).sum();
                for (xi, bi) in x.iter_mut().zip(b) {
                    *xi -= d * bi;
                }
            }
        }
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm > 1e-6 {
            return x.into_iter().map(|v| v / nrm).collect();
        }
    }
    vec![0.0; m]
}

/// Largest singular value by power iteration on the smaller of `aᵀa`, `aaᵀ`.
///
/// Returns `None` when the Rayleigh quotient has not settled to `tol`
/// (relative) within `max_iter` steps.
pub fn spectral_norm(a: &DenseMatrix, max_iter: usize, tol: f64) -> Option<f64> {
    let g = if a.rows() < a.cols() { a.transpose().gram() } else { a.gram() };
    let n = g.rows();
    if a.frob_norm() == 0.0 {
        return Some(0.0);
    }
    // deterministic start with no exact orthogonality to a dominant direction in practice
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return Some(0.0);
        }
        x.iter_mut().for_each(|v| *v /= nrm);
        let y: Vec<f64> = (0..n).map(|i| (0..n).map(|j| g.get(i, j) * x[j]).sum()).collect();
        let next: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
        let converged = (next - lambda).abs() <= tol * next.abs().max(f64::MIN_POSITIVE);
        lambda = next;
        x = y;
        if converged {
            return Some(lambda.max(0.0).sqrt());
        }
    }
    None
}

/// Modified Gram–Schmidt on the columns of `a`; returns a matrix with
/// orthonormal columns spanning the same space (rank-deficient columns are
/// completed with an arbitrary orthonormal direction).
pub fn orthonormalize_columns(a: &DenseMatrix) -> DenseMatrix {
    let (m, n) = (a.rows(), a.cols());
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut x = a.column(j).to_vec();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = b.iter().zip(&x).map(|(p, q)| p * q).sum();
                for (xi, bi) in x.iter_mut().zip(b) {
                    *xi -= d * bi;
                }
            }
        }
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let col = if nrm > 1e-12 { x.into_iter().map(|v| v / nrm).collect() } else { complete_basis(&basis, m) };
        basis.push(col);
    }
    DenseMatrix::from_fn(m, n, |i, j| basis[j][i])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormality_error(u: &DenseMatrix) -> f64 {
        u.gram().sub(&DenseMatrix::identity(u.cols())).frob_norm()
    }

    #[test]
    fn eigen_of_diagonal_is_sorted() {
        let (vals, vecs) = symmetric_eigen(&DenseMatrix::diag(&[1.0, 5.0, 3.0]));
        assert_eq!(vals, vec![5.0, 3.0, 1.0]);
        assert_eq!(vecs.get(1, 0).abs(), 1.0);
    }

    #[test]
    fn eigen_reconstructs_symmetric_matrix() {
        let b = DenseMatrix::from_fn(4, 4, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let a = b.add(&b.transpose());
        let (vals, vecs) = symmetric_eigen(&a);
        assert!(orthonormality_error(&vecs) < 1e-12);
        let rebuilt = vecs.matmul(&DenseMatrix::diag(&vals)).unwrap().matmul(&vecs.transpose()).unwrap();
        assert!(rebuilt.sub(&a).frob_norm() < 1e-10);
    }

    #[test]
    fn svd_reconstructs_rectangular() {
        for (r, c) in [(5, 3), (3, 5), (4, 4)] {
            let a = DenseMatrix::from_fn(r, c, |i, j| ((i * 7 + j * 11) % 5) as f64 * 0.3 - (i as f64) * 0.1);
            let d = svd(&a);
            assert!(orthonormality_error(&d.u) < 1e-10);
            assert!(orthonormality_error(&d.v) < 1e-10);
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
            let rebuilt = d.u.matmul(&DenseMatrix::diag(&d.s)).unwrap().matmul(&d.v.transpose()).unwrap();
            assert!(rebuilt.sub(&a).frob_norm() < 1e-10, "{r}x{c}");
        }
    }

    #[test]
    fn svd_of_rank_deficient_completes_basis() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0], &[0.0, 0.0]]).unwrap();
        let d = svd(&a);
        assert!(d.s[1].abs() < 1e-12);
        assert!(orthonormality_error(&d.u) < 1e-10);
    }

    #[test]
    fn power_iteration_matches_top_singular_value() {
        let a = DenseMatrix::from_rows(&[&[3.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        let s = spectral_norm(&a, 50, 1e-12).unwrap();
        assert!((s - 3.0).abs() < 1e-8);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(2, 2), 50, 1e-8), Some(0.0));
    }

    #[test]
    fn gram_schmidt_orthonormal() {
        let a = DenseMatrix::from_fn(6, 3, |i, j| ((i + 1) * (j + 2)) as f64 + (i * j) as f64 * 0.5);
        let q = orthonormalize_columns(&a);
        assert!(orthonormality_error(&q) < 1e-12);
    }
}
