//! Smoothed data-fit losses `F(Z) = (1/P) Σ_i Σ_j s_ij f(z_i, x_j)`.
//!
//! Every family here is affine in the per-target aggregates of
//! [`SmoothingStats`], so values, gradients and curvature bounds are computed
//! from `(w, m, q)` without touching the weights again.

use serde::{Deserialize, Serialize};

use crate::error::{DcotError, Result};
use crate::observation::ObservationSet;
use crate::similarity::{DegeneratePolicy, SimilarityModel, SmoothingStats};
use crate::tensor::DenseTensor;

/// Offset keeping the gamma loss finite at `z = 0`.
pub const GAMMA_EPS: f64 = 1e-6;
/// Lower clamp of `z` inside the Poisson logarithm.
pub const POISSON_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    #[default]
    Gaussian,
    Bernoulli,
    Poisson,
    Gamma,
}

impl LossFamily {
    /// Whether the family needs `z > 0`.
    pub fn positive_domain(self) -> bool {
        matches!(self, LossFamily::Poisson | LossFamily::Gamma)
    }

    /// Rejects data outside the family's support.
    pub fn check_data(self, omega: &ObservationSet) -> Result<()> {
        match self {
            LossFamily::Gaussian => Ok(()),
            LossFamily::Bernoulli => omega.check_values(|v| v == 0.0 || v == 1.0, "binary"),
            LossFamily::Poisson => omega.check_values(|v| v >= 0.0 && v.fract() == 0.0, "a nonnegative count"),
            LossFamily::Gamma => omega.check_values(|v| v > 0.0, "positive"),
        }
    }

    /// Per-pair loss `f(z, x)`.
    pub fn pointwise(self, z: f64, x: f64) -> f64 {
        match self {
            LossFamily::Gaussian => (z - x) * (z - x),
            LossFamily::Bernoulli => softplus(z) - x * z,
            LossFamily::Poisson => z - x * z.max(POISSON_FLOOR).ln(),
            LossFamily::Gamma => (z + GAMMA_EPS).ln() + x / (z + GAMMA_EPS),
        }
    }

    /// `Σ_j s_ij f(z, x_j)` from the aggregates of target `i`.
    pub fn aggregate(self, z: f64, w: f64, m: f64, q: f64) -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        match self {
            LossFamily::Gaussian => w * z * z - 2.0 * m * z + q,
            LossFamily::Bernoulli => w * softplus(z) - m * z,
            LossFamily::Poisson => w * z - m * z.max(POISSON_FLOOR).ln(),
            LossFamily::Gamma => w * (z + GAMMA_EPS).ln() + m / (z + GAMMA_EPS),
        }
    }

    /// Derivative of [`aggregate`](Self::aggregate) with respect to `z`.
    pub fn aggregate_derivative(self, z: f64, w: f64, m: f64) -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        match self {
            LossFamily::Gaussian => 2.0 * (w * z - m),
            LossFamily::Bernoulli => w * sigmoid(z) - m,
            LossFamily::Poisson => w - m / z.max(POISSON_FLOOR),
            LossFamily::Gamma => {
                let s = z + GAMMA_EPS;
                w / s - m / (s * s)
            }
        }
    }

    /// Second derivative of [`aggregate`](Self::aggregate).
    pub fn aggregate_curvature(self, z: f64, w: f64, m: f64) -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        match self {
            LossFamily::Gaussian => 2.0 * w,
            LossFamily::Bernoulli => {
                let s = sigmoid(z);
                w * s * (1.0 - s)
            }
            LossFamily::Poisson => m / (z.max(POISSON_FLOOR) * z.max(POISSON_FLOOR)),
            LossFamily::Gamma => {
                let s = z + GAMMA_EPS;
                -w / (s * s) + 2.0 * m / (s * s * s)
            }
        }
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A loss family bound to precomputed smoothing aggregates.
#[derive(Clone, Debug)]
pub struct SmoothedLoss {
    pub family: LossFamily,
    pub stats: SmoothingStats,
}

impl SmoothedLoss {
    pub fn new(family: LossFamily, sim: &SimilarityModel, omega: &ObservationSet, policy: DegeneratePolicy) -> Result<Self> {
        family.check_data(omega)?;
        let stats = SmoothingStats::build(sim, omega, policy)?;
        Ok(SmoothedLoss { family, stats })
    }

    /// Plain (unsmoothed) loss over `Ω`.
    pub fn unsmoothed(family: LossFamily, omega: &ObservationSet) -> Result<Self> {
        Self::new(family, &SimilarityModel::identity(omega.shape()), omega, DegeneratePolicy::Skip)
    }

    fn denominator(&self) -> f64 {
        self.stats.numel() as f64
    }

    fn check(&self, z: &DenseTensor) -> Result<()> {
        if z.shape() != &self.stats.shape {
            return Err(DcotError::DimensionMismatch(format!(
                "Z has shape {:?}, loss expects {:?}",
                z.dims(),
                self.stats.shape.dims()
            )));
        }
        if self.family.positive_domain() {
            if let Some((l, v)) = z.data().iter().enumerate().find(|(_, v)| v.is_nan() || **v <= 0.0) {
                return Err(DcotError::Domain(format!(
                    "{:?} loss needs Z > 0, got {v} at {:?}",
                    self.family,
                    self.stats.shape.multi_index(l)
                )));
            }
        }
        Ok(())
    }

    pub fn value(&self, z: &DenseTensor) -> Result<f64> {
        self.check(z)?;
        let s = &self.stats;
        let total: f64 = (0..s.numel())
            .map(|i| self.family.aggregate(z.data()[i], s.w[i], s.m[i], s.q[i]))
            .sum();
        Ok(total / self.denominator())
    }

    pub fn gradient(&self, z: &DenseTensor) -> Result<DenseTensor> {
        self.check(z)?;
        let s = &self.stats;
        let p = self.denominator();
        let data = (0..s.numel())
            .map(|i| self.family.aggregate_derivative(z.data()[i], s.w[i], s.m[i]) / p)
            .collect();
        DenseTensor::new(s.shape.clone(), data)
    }

    /// Lipschitz constant of `∇F`. For the positive-domain families the
    /// bound holds on `{z ≥ z_min}`.
    pub fn lipschitz(&self, z_min: f64) -> f64 {
        let s = &self.stats;
        let p = self.denominator();
        let bound = |f: &dyn Fn(f64, f64) -> f64| s.w.iter().zip(&s.m).map(|(&w, &m)| f(w, m)).fold(0.0, f64::max) / p;
        match self.family {
            LossFamily::Gaussian => bound(&|w, _| 2.0 * w),
            LossFamily::Bernoulli => bound(&|w, _| 0.25 * w),
            LossFamily::Poisson => {
                let zm = z_min.max(POISSON_FLOOR);
                bound(&|_, m| m / (zm * zm))
            }
            LossFamily::Gamma => {
                let s0 = z_min.max(0.0) + GAMMA_EPS;
                bound(&|w, m| w / (s0 * s0) + 2.0 * m / (s0 * s0 * s0))
            }
        }
    }
}
