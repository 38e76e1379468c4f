//! Accuracy metrics, hold-out splits, penalty-weight grids and synthetic
//! data with a planted double-core structure.

use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DcotError, Result};
use crate::linalg::orthonormalize_columns;
use crate::loss::LossFamily;
use crate::model::{tie_heterogeneous_core, DcotModel, SliceGroup, SubjectPartition, TieReducer};
use crate::observation::ObservationSet;
use crate::similarity::{
    default_bandwidths, label_consistency, mode_similarity, Kernel, ModeSimilarity, SimilarityModel, DIFFERENT_LABEL,
    SAME_LABEL,
};
use crate::tensor::{matricize, DenseMatrix, DenseTensor, Shape};

/// `sqrt(mean over Ω of (pred − x)²)`.
pub fn rmse(pred: &DenseTensor, omega: &ObservationSet) -> Result<f64> {
    if pred.shape() != omega.shape() {
        return Err(DcotError::DimensionMismatch(format!(
            "prediction {:?} against observations {:?}",
            pred.dims(),
            omega.shape().dims()
        )));
    }
    if omega.is_empty() {
        return Err(DcotError::InvalidObservations("RMSE over an empty set".into()));
    }
    let sum: f64 = omega.iter().map(|(l, v)| (pred.data()[l] - v).powi(2)).sum();
    Ok((sum / omega.len() as f64).sqrt())
}

/// Seeded random split of `omega` into (train, test), with
/// `round(train_fraction·|Ω|)` training entries. Both parts must be nonempty.
pub fn holdout_split(omega: &ObservationSet, train_fraction: f64, seed: u64) -> Result<(ObservationSet, ObservationSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DcotError::InvalidParameter(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let n = omega.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(DcotError::InvalidParameter(format!(
            "splitting {n} entries at fraction {train_fraction} leaves an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_train = vec![false; n];
    order[..n_train].iter().for_each(|&k| is_train[k] = true);
    Ok((omega.select(|k| is_train[k]), omega.select(|k| !is_train[k])))
}

/// The 61 weights `10^{0.1(ν − 31)}`, `ν = 1…61`, from `1e-3` to `1e3`.
pub fn lambda_grid() -> Vec<f64> {
    (1..=61).map(|nu: i32| 10f64.powf(0.1 * f64::from(nu - 31))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridRow {
    /// One shared weight, or one weight per penalized block.
    pub lambda: Vec<f64>,
    /// Validation RMSE, or `None` when the fit failed.
    pub rmse: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridReport {
    pub rows: Vec<GridRow>,
    pub best_lambda: Vec<f64>,
    pub best_rmse: f64,
}

/// Prefers more regularization: larger total weight, then lexicographically larger.
fn heavier(a: &[f64], b: &[f64]) -> bool {
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    sa > sb || (sa == sb && a.iter().zip(b).find(|(x, y)| x != y).is_some_and(|(x, y)| x > y))
}

/// Evaluates `fit(λ)` on every candidate, scoring predictions on `valid`
/// with `threads` workers. The smallest RMSE wins; exact ties go to the
/// more regularized candidate.
pub fn grid_search<F>(candidates: &[Vec<f64>], valid: &ObservationSet, threads: usize, fit: F) -> Result<GridReport>
where
    F: Fn(&[f64]) -> Result<DenseTensor> + Sync,
{
    if candidates.is_empty() {
        return Err(DcotError::InvalidParameter("empty lambda grid".into()));
    }
    let slots: Vec<Mutex<Option<GridRow>>> = candidates.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    let work = || loop {
        let k = {
            let mut guard = next.lock().expect("grid counter poisoned");
            let k = *guard;
            *guard += 1;
            k
        };
        if k >= candidates.len() {
            break;
        }
        let lambda = candidates[k].clone();
        let row = match fit(&lambda).and_then(|pred| rmse(&pred, valid)) {
            Ok(r) => GridRow { lambda, rmse: Some(r), note: String::new() },
            Err(e) => GridRow { lambda, rmse: None, note: e.to_string() },
        };
        *slots[k].lock().expect("grid slot poisoned") = Some(row);
    };
    let threads = threads.max(1).min(candidates.len());
    if threads == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(work);
            }
        });
    }
    let rows: Vec<GridRow> =
        slots.into_iter().map(|m| m.into_inner().expect("grid slot poisoned").expect("every slot filled")).collect();
    let mut best: Option<(&[f64], f64)> = None;
    for row in &rows {
        if let Some(r) = row.rmse {
            let better = match best {
                None => true,
                Some((bl, br)) => r < br || (r == br && heavier(&row.lambda, bl)),
            };
            if better {
                best = Some((&row.lambda, r));
            }
        }
    }
    let (best_lambda, best_rmse) = best.ok_or_else(|| DcotError::Other("every grid point failed to fit".into()))?;
    Ok(GridReport { best_lambda: best_lambda.to_vec(), best_rmse, rows })
}

/// Description of a synthetic data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub shape: Vec<usize>,
    pub ranks: Vec<usize>,
    pub partition: SubjectPartition,
    pub family: LossFamily,
    /// Gaussian standard deviation, or the coefficient of variation of gamma
    /// noise. Ignored for bernoulli and poisson.
    pub noise: f64,
    /// Probability that an entry is missing.
    pub missing: f64,
    pub seed: u64,
    /// Standard deviation of the free core entries; `None` gives
    /// `sqrt(∏I / ∏R)`, i.e. entries of unit mean square.
    pub core_scale: Option<f64>,
    /// Size of the tied core relative to the free core.
    pub subject_core_scale: f64,
    /// Modes whose factor is the identity (rank must equal size).
    pub identity_modes: Vec<usize>,
    /// Make every slice of `G` along the partition mode identical, so that
    /// subjects differ only through `H`.
    pub shared_global_core: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            shape: vec![10, 10, 10],
            ranks: vec![3, 3, 3],
            partition: SubjectPartition::none(),
            family: LossFamily::Gaussian,
            noise: 0.0,
            missing: 0.0,
            seed: 0,
            core_scale: None,
            subject_core_scale: 1.0,
            identity_modes: Vec::new(),
            shared_global_core: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub model: DcotModel,
    /// Noise-free signal (mean for the non-gaussian families).
    pub signal: DenseTensor,
    /// Noisy tensor with every entry present.
    pub full: DenseTensor,
    pub observed: ObservationSet,
    /// Complement of `observed`, with the noisy values.
    pub missing: ObservationSet,
    /// Per mode, one feature vector per index: the rows of `U^(n) (G + H)_(n)`.
    pub features: Vec<Vec<Vec<f64>>>,
    /// Subject labels along the partition mode.
    pub labels: Vec<usize>,
}

impl SynthData {
    /// Kernel similarity on the planted features of `modes`, with label
    /// consistency on the partition mode; every other mode only pairs an
    /// index with itself.
    pub fn similarity(&self, kernel: Kernel, modes: &[usize], neighbor_cap: usize) -> Result<SimilarityModel> {
        let p = &self.model.partition;
        let per_mode = self
            .features
            .iter()
            .enumerate()
            .map(|(n, f)| {
                if !modes.contains(&n) {
                    return Ok(ModeSimilarity::identity(f.len()));
                }
                let ms = mode_similarity(f, kernel, &default_bandwidths(f))?;
                if !p.is_empty() && p.mode == n {
                    ms.with_consistency(label_consistency(&self.labels, SAME_LABEL, DIFFERENT_LABEL)?)
                } else {
                    Ok(ms)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        SimilarityModel::new(per_mode, neighbor_cap, true)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn synthesize(spec: &SynthSpec) -> Result<SynthData> {
    let shape = Shape::new(spec.shape.clone())?;
    let ndim = shape.ndim();
    if spec.ranks.len() != ndim {
        return Err(DcotError::DimensionMismatch(format!("{} ranks for a {ndim}-way tensor", spec.ranks.len())));
    }
    let core_shape = Shape::new(spec.ranks.clone())?;
    for (n, (&r, &d)) in spec.ranks.iter().zip(shape.dims()).enumerate() {
        if r > d {
            return Err(DcotError::RankExceedsMode { mode: n + 1, rank: r, size: d });
        }
    }
    if !(0.0..1.0).contains(&spec.missing) {
        return Err(DcotError::InvalidParameter(format!("missing rate {} outside [0, 1)", spec.missing)));
    }
    if !(spec.noise >= 0.0 && spec.subject_core_scale >= 0.0) {
        return Err(DcotError::InvalidParameter("noise and subject core scale must be nonnegative".into()));
    }
    spec.partition.validate(&core_shape)?;
    let positive = spec.family.positive_domain();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let mut factors = Vec::with_capacity(ndim);
    for n in 0..ndim {
        let (size, rank) = (shape.dim(n), spec.ranks[n]);
        let u = if spec.identity_modes.contains(&n) {
            if size != rank {
                return Err(DcotError::InvalidParameter(format!(
                    "identity factor on mode {} needs rank = size",
                    n + 1
                )));
            }
            DenseMatrix::identity(size)
        } else {
            let raw = DenseMatrix::from_fn(size, rank, |_, _| normal(&mut rng));
            if positive {
                let abs = DenseMatrix::from_fn(size, rank, |i, j| raw.get(i, j).abs());
                let norms: Vec<f64> = (0..rank).map(|j| abs.column(j).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
                DenseMatrix::from_fn(size, rank, |i, j| abs.get(i, j) / norms[j])
            } else {
                orthonormalize_columns(&raw)
            }
        };
        factors.push(u);
    }
    let scale = spec.core_scale.unwrap_or_else(|| (shape.numel() as f64 / core_shape.numel() as f64).sqrt());
    let mut draw_core = |s: f64| {
        DenseTensor::from_fn(core_shape.clone(), |_| {
            let v = s * normal(&mut rng);
            if positive {
                v.abs()
            } else {
                v
            }
        })
    };
    let mut core_g = draw_core(scale);
    if spec.shared_global_core && !spec.partition.is_empty() {
        let mode = spec.partition.mode;
        let all = SubjectPartition::new(mode, vec![SliceGroup::new((0..core_shape.dim(mode)).collect())]);
        core_g = tie_heterogeneous_core(&core_g, &all, TieReducer::Representative)?;
    }
    let raw_h = draw_core(scale * spec.subject_core_scale);
    let core_h = if spec.partition.is_empty() {
        DenseTensor::zeros(core_shape.clone())
    } else {
        let tied = tie_heterogeneous_core(&raw_h, &spec.partition, TieReducer::Representative)?;
        // only the grouped part of H is kept; everything else belongs to G
        let positions = spec.partition.slice_positions(&core_shape)?;
        let mut mask = DenseTensor::zeros(core_shape.clone());
        positions.iter().flatten().flatten().for_each(|&p| mask.data_mut()[p] = 1.0);
        tied.zip_map(&mask, |v, m| v * m)
    };
    let model = DcotModel::new(factors, core_g, core_h, spec.partition.clone())?;
    let signal = model.reconstruct()?;

    let mut noisy = Vec::with_capacity(signal.len());
    for &mu in signal.data() {
        let x = match spec.family {
            LossFamily::Gaussian => mu + spec.noise * normal(&mut rng),
            LossFamily::Bernoulli => f64::from(u8::from(rng.random::<f64>() < sigmoid(mu))),
            LossFamily::Poisson => {
                if mu > 0.0 {
                    Poisson::new(mu).map_err(|e| DcotError::Other(e.to_string()))?.sample(&mut rng)
                } else {
                    0.0
                }
            }
            LossFamily::Gamma => {
                let mean = mu.max(1e-6);
                if spec.noise == 0.0 {
                    mean
                } else {
                    let k = 1.0 / (spec.noise * spec.noise);
                    Gamma::new(k, mean / k).map_err(|e| DcotError::Other(e.to_string()))?.sample(&mut rng)
                }
            }
        };
        noisy.push(x);
    }
    let full = DenseTensor::new(shape.clone(), noisy)?;
    let mut keep: Vec<bool> = (0..full.len()).map(|_| rng.random::<f64>() >= spec.missing).collect();
    if !keep.iter().any(|&k| k) {
        keep[0] = true;
    }
    let observed = ObservationSet::from_dense(&full).select(|k| keep[k]);
    let missing = ObservationSet::from_dense(&full).select(|k| !keep[k]);

    let combined = model.combined_core();
    let mut features = Vec::with_capacity(ndim);
    for (n, u) in model.factors.iter().enumerate() {
        let loadings = u.matmul(&matricize(&combined, n)?)?;
        features.push((0..loadings.rows()).map(|i| (0..loadings.cols()).map(|j| loadings.get(i, j)).collect()).collect());
    }
    let labels = subject_labels(&model);
    Ok(SynthData { model, signal, full, observed, missing, features, labels })
}

/// Label of each data index along the partition mode: the group owning the
/// core slice with the largest loading, or the group count when that slice
/// is ungrouped.
fn subject_labels(model: &DcotModel) -> Vec<usize> {
    let p = &model.partition;
    if p.is_empty() {
        return Vec::new();
    }
    let u = &model.factors[p.mode];
    let groups = p.groups.len();
    (0..u.rows())
        .map(|i| {
            let r = (0..u.cols())
                .max_by(|&a, &b| u.get(i, a).abs().total_cmp(&u.get(i, b).abs()).then(b.cmp(&a)))
                .unwrap_or(0);
            p.groups.iter().position(|g| g.members.contains(&r)).unwrap_or(groups)
        })
        .collect()
}
