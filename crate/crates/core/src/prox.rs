//! Regularizers and their proximal operators
//! `prox(p) = argmin_q λ·J(q) + (t/2)‖q − p‖²`.
//!
//! Groups for the sparse group lasso are the columns of a matrix and the
//! last-mode slices of a tensor.

use serde::{Deserialize, Serialize};

use crate::error::{DcotError, Result};
use crate::linalg::svd;
use crate::tensor::{DenseMatrix, DenseTensor};

/// Default weight of the L1 part of the sparse group lasso.
pub const DEFAULT_SGL_MIX: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PenaltyKind {
    #[default]
    None,
    L1,
    FrobSq,
    /// Sum of singular values; matrices only.
    Nuclear,
    /// Indicator of the nonnegative orthant, active whenever `λ > 0`.
    Nonneg,
    /// `mix·‖q‖₁ + (1 − mix)·Σ_g ‖q_g‖₂`
    SparseGroupLasso { mix: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    #[serde(flatten)]
    pub kind: PenaltyKind,
    #[serde(default)]
    pub lambda: f64,
}

impl Penalty {
    pub fn new(kind: PenaltyKind, lambda: f64) -> Self {
        Penalty { kind, lambda }
    }

    pub fn none() -> Self {
        Penalty::default()
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Penalty { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(DcotError::InvalidParameter(format!("penalty weight {} must be >= 0", self.lambda)));
        }
        if let PenaltyKind::SparseGroupLasso { mix } = self.kind {
            if !(0.0..=1.0).contains(&mix) {
                return Err(DcotError::InvalidParameter(format!("group lasso mix {mix} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn is_identity(&self) -> bool {
        self.lambda == 0.0 || self.kind == PenaltyKind::None
    }
}

fn check_step(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(DcotError::InvalidParameter(format!("prox step {t} must be positive")))
    }
}

fn soft_threshold(v: f64, tau: f64) -> f64 {
    v.signum() * (v.abs() - tau).max(0.0)
}

/// Elementwise part of the prox shared by matrices and tensors, applied to
/// a buffer split into contiguous groups of `group_len`.
fn prox_flat(data: &mut [f64], group_len: usize, penalty: &Penalty, t: f64) {
    let tau = penalty.lambda / t;
    match penalty.kind {
        PenaltyKind::None | PenaltyKind::Nuclear => {}
        PenaltyKind::L1 => data.iter_mut().for_each(|v| *v = soft_threshold(*v, tau)),
        PenaltyKind::FrobSq => {
            let f = t / (t + 2.0 * penalty.lambda);
            data.iter_mut().for_each(|v| *v *= f);
        }
        PenaltyKind::Nonneg => data.iter_mut().for_each(|v| *v = v.max(0.0)),
        PenaltyKind::SparseGroupLasso { mix } => {
            data.iter_mut().for_each(|v| *v = soft_threshold(*v, mix * tau));
            let g_tau = (1.0 - mix) * tau;
            for g in data.chunks_mut(group_len.max(1)) {
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let f = if norm > g_tau { 1.0 - g_tau / norm } else { 0.0 };
                g.iter_mut().for_each(|v| *v *= f);
            }
        }
    }
}

fn flat_value(data: &[f64], group_len: usize, penalty: &Penalty) -> f64 {
    let l1 = || data.iter().map(|v| v.abs()).sum::<f64>();
    let j = match penalty.kind {
        PenaltyKind::None => 0.0,
        PenaltyKind::L1 => l1(),
        PenaltyKind::FrobSq => data.iter().map(|v| v * v).sum(),
        PenaltyKind::Nonneg => {
            if data.iter().all(|&v| v >= 0.0) {
                0.0
            } else {
                f64::INFINITY
            }
        }
        PenaltyKind::SparseGroupLasso { mix } => {
            let groups: f64 =
                data.chunks(group_len.max(1)).map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt()).sum();
            mix * l1() + (1.0 - mix) * groups
        }
        PenaltyKind::Nuclear => unreachable!("nuclear norm handled by the matrix path"),
    };
    if penalty.lambda == 0.0 {
        0.0
    } else {
        penalty.lambda * j
    }
}

pub fn penalty_value_matrix(q: &DenseMatrix, penalty: &Penalty) -> f64 {
    if penalty.kind == PenaltyKind::Nuclear {
        if penalty.lambda == 0.0 {
            return 0.0;
        }
        return penalty.lambda * svd(q).s.iter().sum::<f64>();
    }
    flat_value(q.data(), q.rows(), penalty)
}

pub fn penalty_value_tensor(q: &DenseTensor, penalty: &Penalty) -> Result<f64> {
    if penalty.kind == PenaltyKind::Nuclear && penalty.lambda != 0.0 {
        return Err(DcotError::InvalidParameter("nuclear norm is only defined for matrices".into()));
    }
    if penalty.kind == PenaltyKind::Nuclear {
        return Ok(0.0);
    }
    Ok(flat_value(q.data(), slice_len(q), penalty))
}

fn slice_len(q: &DenseTensor) -> usize {
    let dims = q.dims();
    dims[..dims.len() - 1].iter().product()
}

pub fn prox_matrix(p: &DenseMatrix, penalty: &Penalty, t: f64) -> Result<DenseMatrix> {
    penalty.validate()?;
    check_step(t)?;
    if penalty.is_identity() {
        return Ok(p.clone());
    }
    if penalty.kind == PenaltyKind::Nuclear {
        let tau = penalty.lambda / t;
        let d = svd(p);
        let shrunk: Vec<f64> = d.s.iter().map(|s| (s - tau).max(0.0)).collect();
        return Ok(DenseMatrix::from_fn(p.rows(), p.cols(), |i, j| {
            shrunk.iter().enumerate().map(|(k, &s)| d.u.get(i, k) * s * d.v.get(j, k)).sum()
        }));
    }
    let mut out = p.clone();
    let rows = out.rows();
    prox_flat(out.data_mut(), rows, penalty, t);
    Ok(out)
}

pub fn prox_tensor(p: &DenseTensor, penalty: &Penalty, t: f64) -> Result<DenseTensor> {
    penalty.validate()?;
    check_step(t)?;
    if penalty.is_identity() {
        return Ok(p.clone());
    }
    if penalty.kind == PenaltyKind::Nuclear {
        return Err(DcotError::InvalidParameter("nuclear norm is only defined for matrices".into()));
    }
    let mut out = p.clone();
    let g = slice_len(p);
    prox_flat(out.data_mut(), g, penalty, t);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_soft_threshold() {
        let p = DenseMatrix::from_rows(&[&[3.0, -0.5], &[-2.0, 1.0]]).unwrap();
        let q = prox_matrix(&p, &Penalty::new(PenaltyKind::L1, 1.0), 1.0).unwrap();
        assert_eq!(q, DenseMatrix::from_rows(&[&[2.0, 0.0], &[-1.0, 0.0]]).unwrap());
    }

    #[test]
    fn frob_sq_shrinks() {
        let p = DenseMatrix::from_rows(&[&[4.0]]).unwrap();
        let q = prox_matrix(&p, &Penalty::new(PenaltyKind::FrobSq, 1.0), 2.0).unwrap();
        assert_eq!(q.get(0, 0), 2.0);
    }

    #[test]
    fn nuclear_on_diagonal() {
        let p = DenseMatrix::diag(&[3.0, 1.0]);
        let q = prox_matrix(&p, &Penalty::new(PenaltyKind::Nuclear, 1.0), 1.0).unwrap();
        let want = DenseMatrix::diag(&[2.0, 0.0]);
        assert!(q.sub(&want).frob_norm() < 1e-12);
        let t = DenseTensor::zeros(crate::tensor::Shape::new(vec![2, 2, 2]).unwrap());
        assert!(prox_tensor(&t, &Penalty::new(PenaltyKind::Nuclear, 1.0), 1.0).is_err());
    }

    #[test]
    fn zero_lambda_is_bitwise_identity() {
        let p = DenseMatrix::from_rows(&[&[0.1 + 0.2, -7.3e-9], &[1e300, -0.0]]).unwrap();
        for kind in [
            PenaltyKind::L1,
            PenaltyKind::FrobSq,
            PenaltyKind::Nuclear,
            PenaltyKind::Nonneg,
            PenaltyKind::SparseGroupLasso { mix: 0.5 },
        ] {
            let q = prox_matrix(&p, &Penalty::new(kind, 0.0), 0.37).unwrap();
            assert!(q.data().iter().zip(p.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn group_lasso_kills_small_groups() {
        let p = DenseMatrix::from_rows(&[&[0.3, 5.0], &[0.4, 0.0]]).unwrap();
        let q = prox_matrix(&p, &Penalty::new(PenaltyKind::SparseGroupLasso { mix: 0.0 }, 1.0), 1.0).unwrap();
        assert_eq!(q.column(0), vec![0.0, 0.0]);
        assert!((q.get(0, 1) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = DenseMatrix::zeros(1, 1);
        assert!(prox_matrix(&p, &Penalty::new(PenaltyKind::L1, -1.0), 1.0).is_err());
        assert!(prox_matrix(&p, &Penalty::new(PenaltyKind::L1, 1.0), 0.0).is_err());
        assert!(prox_matrix(&p, &Penalty::new(PenaltyKind::SparseGroupLasso { mix: 1.5 }, 1.0), 1.0).is_err());
    }
}
