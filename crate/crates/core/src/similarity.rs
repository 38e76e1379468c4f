//! Kernel similarities between fibers, label consistencies, and the
//! Kronecker-product smoothing weights built from them.
//!
//! The weight linking a target cell `i = (i_1 … i_N)` to an observed source
//! `j` is `∏_n s_n[i_n, j_n] · c_n[i_n, j_n]`. The full `(∏I_n)²` weight
//! matrix is never stored: each mode keeps the `neighbor_cap` strongest
//! partners of every index, and the weights of one target are enumerated over
//! the product of those lists.

use serde::{Deserialize, Serialize};

use crate::error::{DcotError, Result};
use crate::observation::ObservationSet;
use crate::tensor::{DenseMatrix, Shape};

/// Number of bandwidths in the default multi-kernel average.
pub const DEFAULT_KERNEL_COUNT: usize = 10;
pub const DEFAULT_NEIGHBOR_CAP: usize = 32;
/// Label consistency for fibers of the same subject.
pub const SAME_LABEL: f64 = 0.8;
/// Label consistency for fibers of different subjects.
pub const DIFFERENT_LABEL: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Kernel {
    /// `K(u) = exp(-u²/2)`
    Gaussian,
    /// Exponential kernel on the Euclidean distance, `K(u) = exp(-u)`.
    Euclid,
    /// `min(ξ, exp(-u²/2))`
    Truncated { xi: f64 },
}

impl Kernel {
    /// Kernel value at scaled distance `u = ‖y_i − y_j‖ / h`.
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Kernel::Gaussian => (-0.5 * u * u).exp(),
            Kernel::Euclid => (-u).exp(),
            Kernel::Truncated { xi } => xi.min((-0.5 * u * u).exp()),
        }
    }
}

/// Pairwise similarities of one mode's fibers.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSimilarity {
    /// Kernel similarities `s[i, j]`, symmetric and nonnegative.
    pub s: DenseMatrix,
    /// Label consistencies `c[i, j]` in `[0, 1]`.
    pub c: DenseMatrix,
}

impl ModeSimilarity {
    pub fn new(s: DenseMatrix, c: DenseMatrix) -> Result<Self> {
        let n = s.rows();
        if s.cols() != n || c.rows() != n || c.cols() != n {
            return Err(DcotError::DimensionMismatch(format!(
                "similarity {}x{} and consistency {}x{} must be equal squares",
                s.rows(),
                s.cols(),
                c.rows(),
                c.cols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let (sv, cv) = (s.get(i, j), c.get(i, j));
                if !(sv >= 0.0 && sv.is_finite()) {
                    return Err(DcotError::InvalidParameter(format!("similarity s[{i},{j}] = {sv}")));
                }
                if !(0.0..=1.0).contains(&cv) {
                    return Err(DcotError::InvalidParameter(format!("consistency c[{i},{j}] = {cv}")));
                }
                if sv != s.get(j, i) || cv != c.get(j, i) {
                    return Err(DcotError::InvalidParameter(format!("mode similarity not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(ModeSimilarity { s, c })
    }

    /// `s = I`, `c = 1`: every index is only similar to itself.
    pub fn identity(n: usize) -> Self {
        ModeSimilarity { s: DenseMatrix::identity(n), c: DenseMatrix::from_fn(n, n, |_, _| 1.0) }
    }

    pub fn len(&self) -> usize {
        self.s.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_consistency(self, c: DenseMatrix) -> Result<Self> {
        ModeSimilarity::new(self.s, c)
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.s.get(i, j) * self.c.get(i, j)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Kernel similarity of feature vectors, averaged over `bandwidths`.
pub fn mode_similarity(features: &[Vec<f64>], kernel: Kernel, bandwidths: &[f64]) -> Result<ModeSimilarity> {
    if features.is_empty() {
        return Err(DcotError::InvalidParameter("empty feature set".into()));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(DcotError::InvalidParameter("feature vectors have different lengths".into()));
    }
    if bandwidths.is_empty() {
        return Err(DcotError::InvalidParameter("no bandwidths given".into()));
    }
    if let Some(h) = bandwidths.iter().find(|&&h| !(h > 0.0 && h.is_finite())) {
        return Err(DcotError::InvalidParameter(format!("bandwidth {h} is not positive")));
    }
    if let Kernel::Truncated { xi } = kernel {
        if xi.is_nan() || xi < 0.0 {
            return Err(DcotError::InvalidParameter(format!("truncation level {xi} is negative")));
        }
    }
    let n = features.len();
    let mut s = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let d = distance(&features[i], &features[j]);
            let v = bandwidths.iter().map(|&h| kernel.eval(d / h)).sum::<f64>() / bandwidths.len() as f64;
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    ModeSimilarity::new(s, DenseMatrix::from_fn(n, n, |_, _| 1.0))
}

/// Ten geometric bandwidths spanning `[0.1 h̄, 10 h̄]`, where `h̄` is the
/// median pairwise distance of the features (1 when all features coincide).
pub fn default_bandwidths(features: &[Vec<f64>]) -> Vec<f64> {
    let mut d: Vec<f64> = (0..features.len())
        .flat_map(|i| (i + 1..features.len()).map(move |j| (i, j)))
        .map(|(i, j)| distance(&features[i], &features[j]))
        .collect();
    d.sort_by(f64::total_cmp);
    let median = if d.is_empty() {
        0.0
    } else if d.len() % 2 == 1 {
        d[d.len() / 2]
    } else {
        0.5 * (d[d.len() / 2 - 1] + d[d.len() / 2])
    };
    let center = if median > 0.0 { median } else { 1.0 };
    geometric_bandwidths(0.1 * center, 10.0 * center, DEFAULT_KERNEL_COUNT)
}

pub fn geometric_bandwidths(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![(lo * hi).sqrt()];
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|k| lo * (ratio * k as f64).exp()).collect()
}

/// `c[i, j] = same` when `labels[i] == labels[j]`, `diff` otherwise.
pub fn label_consistency(labels: &[usize], same: f64, diff: f64) -> Result<DenseMatrix> {
    if !(0.0 <= diff && diff <= same && same <= 1.0) {
        return Err(DcotError::InvalidParameter(format!(
            "label consistencies need 0 <= diff <= same <= 1, got same={same}, diff={diff}"
        )));
    }
    if labels.is_empty() {
        return Err(DcotError::InvalidParameter("no labels".into()));
    }
    let n = labels.len();
    Ok(DenseMatrix::from_fn(n, n, |i, j| if labels[i] == labels[j] { same } else { diff }))
}

/// What to do when every retained weight of a target vanishes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneratePolicy {
    /// The target contributes nothing to the loss.
    #[default]
    Skip,
    /// Weight 1 on the target itself if observed, else uniform over Ω.
    SelfOrUniform,
}

#[derive(Clone, Debug)]
pub struct SimilarityModel {
    pub per_mode: Vec<ModeSimilarity>,
    pub neighbor_cap: usize,
    pub normalized: bool,
    /// Per mode, per index: retained `(partner, s·c)` pairs by descending weight.
    neighbors: Vec<Vec<Vec<(usize, f64)>>>,
}

impl SimilarityModel {
    pub fn new(per_mode: Vec<ModeSimilarity>, neighbor_cap: usize, normalized: bool) -> Result<Self> {
        if per_mode.is_empty() {
            return Err(DcotError::InvalidParameter("similarity needs at least one mode".into()));
        }
        if neighbor_cap == 0 {
            return Err(DcotError::InvalidParameter("neighbor cap must be positive".into()));
        }
        let neighbors = per_mode
            .iter()
            .map(|ms| {
                (0..ms.len())
                    .map(|i| {
                        let mut row: Vec<(usize, f64)> =
                            (0..ms.len()).map(|j| (j, ms.weight(i, j))).filter(|&(_, w)| w > 0.0).collect();
                        row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                        row.truncate(neighbor_cap);
                        row
                    })
                    .collect()
            })
            .collect();
        Ok(SimilarityModel { per_mode, neighbor_cap, normalized, neighbors })
    }

    /// No smoothing: each cell is only paired with itself.
    pub fn identity(shape: &Shape) -> Self {
        let per_mode = shape.dims().iter().map(|&d| ModeSimilarity::identity(d)).collect();
        SimilarityModel::new(per_mode, 1, true).expect("identity similarity is valid")
    }

    pub fn check_shape(&self, shape: &Shape) -> Result<()> {
        if self.per_mode.len() != shape.ndim()
            || self.per_mode.iter().zip(shape.dims()).any(|(m, &d)| m.len() != d)
        {
            return Err(DcotError::DimensionMismatch(format!(
                "similarity sizes {:?} do not match tensor shape {shape:?}",
                self.per_mode.iter().map(|m| m.len()).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }

    /// Untruncated Kronecker weight between two cells.
    pub fn kronecker_weight(&self, target: &[usize], source: &[usize]) -> f64 {
        self.per_mode.iter().zip(target.iter().zip(source)).map(|(m, (&i, &j))| m.weight(i, j)).product()
    }

    pub fn mode_neighbors(&self, mode: usize, index: usize) -> &[(usize, f64)] {
        &self.neighbors[mode][index]
    }

    /// Calls `visit(source_linear, raw_weight)` for every retained observed source.
    fn for_each_source(&self, shape: &Shape, target: &[usize], observed: &[Option<f64>], mut visit: impl FnMut(usize, f64)) {
        let strides = shape.strides();
        let lists: Vec<&[(usize, f64)]> =
            target.iter().enumerate().map(|(n, &i)| self.neighbors[n][i].as_slice()).collect();
        if lists.iter().any(|l| l.is_empty()) {
            return;
        }
        let ndim = lists.len();
        let mut cursor = vec![0usize; ndim];
        loop {
            let mut lin = 0;
            let mut w = 1.0;
            for n in 0..ndim {
                let (j, wn) = lists[n][cursor[n]];
                lin += j * strides[n];
                w *= wn;
            }
            if observed[lin].is_some() && w > 0.0 {
                visit(lin, w);
            }
            let mut n = 0;
            loop {
                cursor[n] += 1;
                if cursor[n] < lists[n].len() {
                    break;
                }
                cursor[n] = 0;
                n += 1;
                if n == ndim {
                    return;
                }
            }
        }
    }
}

/// Retained smoothing weights of one target over the observed sources,
/// sorted by descending weight. Normalized to sum 1 when the model says so.
pub fn smoothing_weights(sim: &SimilarityModel, target: &[usize], omega: &ObservationSet) -> Result<Vec<(Vec<usize>, f64)>> {
    let shape = omega.shape();
    sim.check_shape(shape)?;
    shape.linear_index(target)?;
    if omega.is_empty() {
        return Err(DcotError::InvalidObservations("no observed entries".into()));
    }
    let observed = omega.dense_lookup();
    let mut out = Vec::new();
    sim.for_each_source(shape, target, &observed, |l, w| out.push((l, w)));
    let total: f64 = out.iter().map(|e| e.1).sum();
    if total <= 0.0 {
        return Err(DcotError::DegenerateWeights(target.to_vec()));
    }
    if sim.normalized {
        out.iter_mut().for_each(|e| e.1 /= total);
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(out.into_iter().map(|(l, w)| (shape.multi_index(l), w)).collect())
}

/// Per-target aggregates of the smoothing weights, which is all any of the
/// loss families needs: `w = Σ_j s_ij`, `m = Σ_j s_ij x_j`, `q = Σ_j s_ij x_j²`.
///
/// The weights do not depend on the model, so these are computed once per
/// (similarity, observations) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingStats {
    pub shape: Shape,
    pub w: Vec<f64>,
    pub m: Vec<f64>,
    pub q: Vec<f64>,
    /// Targets whose retained weights all vanished.
    pub degenerate: usize,
}

impl SmoothingStats {
    pub fn build(sim: &SimilarityModel, omega: &ObservationSet, policy: DegeneratePolicy) -> Result<Self> {
        let shape = omega.shape().clone();
        sim.check_shape(&shape)?;
        if omega.is_empty() {
            return Err(DcotError::InvalidObservations("no observed entries".into()));
        }
        let observed = omega.dense_lookup();
        let p = shape.numel();
        let (mut w, mut m, mut q) = (vec![0.0; p], vec![0.0; p], vec![0.0; p]);
        let mut degenerate = 0;
        let uniform = {
            let n = omega.len() as f64;
            let sum: f64 = omega.values().iter().sum();
            let sq: f64 = omega.values().iter().map(|v| v * v).sum();
            (sum / n, sq / n)
        };
        for t in 0..p {
            let target = shape.multi_index(t);
            let (mut tw, mut tm, mut tq) = (0.0, 0.0, 0.0);
            sim.for_each_source(&shape, &target, &observed, |l, wt| {
                let x = observed[l].expect("visited sources are observed");
                tw += wt;
                tm += wt * x;
                tq += wt * x * x;
            });
            if tw <= 0.0 {
                degenerate += 1;
                match policy {
                    DegeneratePolicy::Skip => {}
                    DegeneratePolicy::SelfOrUniform => match observed[t] {
                        Some(x) => (tw, tm, tq) = (1.0, x, x * x),
                        None => (tw, tm, tq) = (1.0, uniform.0, uniform.1),
                    },
                }
            } else if sim.normalized {
                tm /= tw;
                tq /= tw;
                tw = 1.0;
            }
            w[t] = tw;
            m[t] = tm;
            q[t] = tq;
        }
        if degenerate > 0 {
            log::debug!("{degenerate} of {p} targets have no retained observed neighbours ({policy:?})");
        }
        Ok(SmoothingStats { shape, w, m, q, degenerate })
    }

    pub fn numel(&self) -> usize {
        self.w.len()
    }
}
