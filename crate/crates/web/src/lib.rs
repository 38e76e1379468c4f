//! Browser bindings for the demo page in `www/`.
//!
//! Three operations are exposed: proximal maps evaluated along a line,
//! the weight matrix of a kernel-plus-label similarity, and an
//! interactive completion run on a small planted tensor.

use dcot::eval::{rmse, synthesize, SynthData, SynthSpec};
use dcot::model::{InitKind, InitStrategy, SubjectPartition};
use dcot::prox::{prox_matrix, Penalty, PenaltyKind};
use dcot::similarity::{label_consistency, mode_similarity, DegeneratePolicy, Kernel};
use dcot::solver::{estimate_moduli, ModuliSchedule, Moduli, SolverState};
use dcot::{DcotError, DenseMatrix, DenseTensor, LossFamily, SmoothedLoss, Solver, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js(e: DcotError) -> JsError {
    JsError::new(&e.to_string())
}

fn penalty_kind(name: &str, mix: f64) -> Result<PenaltyKind, JsError> {
    Ok(match name {
        "l1" => PenaltyKind::L1,
        "frob_sq" => PenaltyKind::FrobSq,
        "nonneg" => PenaltyKind::Nonneg,
        "nuclear" => PenaltyKind::Nuclear,
        "sparse_group_lasso" => PenaltyKind::SparseGroupLasso { mix },
        other => return Err(JsError::new(&format!("unknown penalty `{other}`"))),
    })
}

fn kernel(name: &str, xi: f64) -> Result<Kernel, JsError> {
    Ok(match name {
        "gaussian" => Kernel::Gaussian,
        "euclid" => Kernel::Euclid,
        "truncated" => Kernel::Truncated { xi },
        other => return Err(JsError::new(&format!("unknown kernel `{other}`"))),
    })
}

/// First coordinate of the prox of the column `[x, companion]` for every
/// `x` in `xs`. The companion entry shows how the group and nuclear
/// penalties couple the two coordinates.
#[wasm_bindgen]
pub fn prox_curve(kind: &str, lambda: f64, t: f64, mix: f64, companion: f64, xs: &[f64]) -> Result<Vec<f64>, JsError> {
    let pen = Penalty::new(penalty_kind(kind, mix)?, lambda);
    xs.iter()
        .map(|&x| {
            let p = DenseMatrix::from_fn(2, 1, |i, _| if i == 0 { x } else { companion });
            prox_matrix(&p, &pen, t).map(|q| q.get(0, 0)).map_err(js)
        })
        .collect()
}

/// Row-major `n × n` matrix of kernel similarity times label consistency
/// for `n` points spread along a line with seeded jitter, labelled in
/// `groups` contiguous runs.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn similarity_matrix(
    n: usize,
    kernel_name: &str,
    xi: f64,
    bandwidth: f64,
    groups: usize,
    same: f64,
    different: f64,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feats: Vec<Vec<f64>> =
        (0..n).map(|i| vec![i as f64 / n.max(1) as f64 + rng.random_range(-0.05..0.05), rng.random_range(-0.1..0.1)]).collect();
    let labels: Vec<usize> = (0..n).map(|i| i * groups.max(1) / n.max(1)).collect();
    let ms = mode_similarity(&feats, kernel(kernel_name, xi)?, &[bandwidth])
        .and_then(|m| m.with_consistency(label_consistency(&labels, same, different)?))
        .map_err(js)?;
    Ok((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| ms.weight(i, j)).collect())
}

/// A planted `size × size × 4` completion problem and a solver that can be
/// advanced a few sweeps at a time. Mode 1 indexes subjects in four
/// contiguous groups that differ only through the tied core; `rank` applies
/// to mode 2.
#[wasm_bindgen]
pub struct CompletionDemo {
    data: SynthData,
    solver: Solver,
    state: SolverState,
    moduli: Moduli,
    estimate: DenseTensor,
}

#[wasm_bindgen]
impl CompletionDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, rank: usize, missing: f64, noise: f64, seed: u64, smoothed: bool) -> Result<CompletionDemo, JsError> {
        let ranks = [size, rank, 2];
        let partition = SubjectPartition::contiguous(0, size, size.div_ceil(4));
        let data = synthesize(&SynthSpec {
            shape: vec![size, size, 4],
            ranks: ranks.to_vec(),
            partition: partition.clone(),
            noise,
            missing,
            seed,
            identity_modes: vec![0],
            shared_global_core: true,
            ..Default::default()
        })
        .map_err(js)?;
        let loss = if smoothed {
            let sim = data.similarity(Kernel::Gaussian, &[0], 4).map_err(js)?;
            SmoothedLoss::new(LossFamily::Gaussian, &sim, &data.observed, DegeneratePolicy::Skip)
        } else {
            SmoothedLoss::unsmoothed(LossFamily::Gaussian, &data.observed)
        }
        .map_err(js)?;
        let config = SolverConfig { moduli: ModuliSchedule::PerBlock, frozen_factors: vec![0], ..Default::default() };
        let solver = Solver::new(loss, config).map_err(js)?;
        let init = InitStrategy::per_mode(vec![InitKind::Identity, InitKind::Hosvd, InitKind::Hosvd], seed);
        let state = solver.initial_state(&data.observed, &ranks, &init, partition).map_err(js)?;
        let moduli = estimate_moduli(&state.model, solver.gamma, &solver.config).map_err(js)?;
        let estimate = state.model.reconstruct().map_err(js)?;
        Ok(CompletionDemo { data, solver, state, moduli, estimate })
    }

    pub fn size(&self) -> usize {
        self.data.signal.dims()[0]
    }

    pub fn iteration(&self) -> usize {
        self.state.iteration
    }

    /// Runs `sweeps` sweeps; returns `[iteration, lagrangian, train RMSE,
    /// held-out RMSE]` per sweep, flattened.
    pub fn step(&mut self, sweeps: usize) -> Result<Vec<f64>, JsError> {
        let mut out = Vec::with_capacity(4 * sweeps);
        for _ in 0..sweeps {
            let (recon, row) = self.solver.step(&mut self.state, &self.moduli).map_err(js)?;
            if !row.lagrangian.is_finite() {
                return Err(JsError::new("solver diverged"));
            }
            let train = rmse(&recon, &self.data.observed).map_err(js)?;
            let test = if self.data.missing.is_empty() { f64::NAN } else { rmse(&recon, &self.data.missing).map_err(js)? };
            out.extend([row.iteration as f64, row.lagrangian, train, test]);
            self.estimate = recon;
        }
        Ok(out)
    }

    /// Frontal slice `k` (row-major) of `"truth"`, `"observed"` (missing
    /// cells are `NaN`) or `"estimate"`.
    pub fn slice(&self, which: &str, k: usize) -> Result<Vec<f64>, JsError> {
        let t = match which {
            "truth" => self.data.signal.clone(),
            "observed" => self.data.observed.to_dense(f64::NAN),
            "estimate" => self.estimate.clone(),
            other => return Err(JsError::new(&format!("unknown slice `{other}`"))),
        };
        let n = self.size();
        if k >= t.dims()[2] {
            return Err(JsError::new("slice index out of range"));
        }
        Ok((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| t.get(&[i, j, k]).unwrap_or(f64::NAN)).collect())
    }
}
