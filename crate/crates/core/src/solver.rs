//! Linearized multi-block ADMM for the penalized double-core problem.
//!
//! With the splitting `Z = (G + H) ×_1 U^(1) ⋯ ×_N U^(N)` the augmented
//! Lagrangian is
//!
//! ```text
//! L = F(Z) + Σ_n λ_n J(U^(n)) + λ_g J(G) + λ_h J(H)
//!     − ⟨Y, recon − Z⟩ + (γ/2)‖recon − Z‖²
//! ```
//!
//! One sweep updates the factors in order, then `G`, then `H`, each by a
//! proximal step on the linearized smooth part, solves the `Z` subproblem
//! exactly, and finishes with the dual ascent `Y ← Y − γ(recon − Z)`.
//! At the `Z` optimum this gives `Y = −∇F(Z)`.

use serde::{Deserialize, Serialize};

use crate::error::{DcotError, Result};
use crate::lbfgs::{self, LbfgsOptions};
use crate::linalg::spectral_norm;
use crate::loss::{LossFamily, SmoothedLoss};
use crate::model::{project_core, tie_heterogeneous_core, DcotModel, InitStrategy, SubjectPartition, TieReducer};
use crate::model::init_factors;
use crate::observation::ObservationSet;
use crate::prox::{penalty_value_matrix, penalty_value_tensor, prox_matrix, prox_tensor, Penalty};
use crate::tensor::{matricize, n_mode_product_transposed, multilinear_product_transposed, DenseMatrix, DenseTensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZSolver {
    /// Closed form for gaussian losses, quasi-Newton otherwise.
    #[default]
    Auto,
    ClosedForm,
    QuasiNewton,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualInit {
    /// `Y₀ = −∇F(Z₀)`, the value every later iterate satisfies.
    #[default]
    Gradient,
    Zero,
}

/// When the block moduli `ϱ` are recomputed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModuliSchedule {
    /// Estimated once from the initial iterate.
    Fixed,
    /// Re-estimated at the start of every `every`-th sweep.
    Periodic { every: usize },
    /// Re-estimated right before each block update.
    PerBlock,
}

impl Default for ModuliSchedule {
    fn default() -> Self {
        ModuliSchedule::Periodic { every: 10 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Penalties {
    /// One penalty shared by all factors, or one per mode.
    pub factors: Vec<Penalty>,
    pub core_g: Penalty,
    pub core_h: Penalty,
}

impl Penalties {
    pub fn factor(&self, mode: usize) -> Penalty {
        match self.factors.len() {
            0 => Penalty::none(),
            1 => self.factors[0],
            _ => self.factors[mode],
        }
    }

    /// Same penalty kinds, every weight replaced by `lambda`.
    pub fn with_shared_lambda(&self, lambda: f64) -> Penalties {
        Penalties {
            factors: self.factors.iter().map(|p| p.with_lambda(lambda)).collect(),
            core_g: self.core_g.with_lambda(lambda),
            core_h: self.core_h.with_lambda(lambda),
        }
    }

    pub fn validate(&self, ndim: usize) -> Result<()> {
        if self.factors.len() > 1 && self.factors.len() != ndim {
            return Err(DcotError::InvalidParameter(format!(
                "{} factor penalties for a {ndim}-way model",
                self.factors.len()
            )));
        }
        self.factors.iter().chain([&self.core_g, &self.core_h]).try_for_each(Penalty::validate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Requested augmented-Lagrangian weight; raised to at least
    /// `2·gamma_margin·L_F`.
    pub gamma: f64,
    pub gamma_margin: f64,
    /// Primal residual tolerance; `None` means `1e-6·‖X_Ω‖`.
    pub tol_primal: Option<f64>,
    /// Tolerance on the total block step, relative to `1 + ‖Z‖`.
    pub tol_step: f64,
    pub moduli: ModuliSchedule,
    pub moduli_safety: f64,
    pub moduli_floor: f64,
    pub power_iters: usize,
    pub power_tol: f64,
    pub z_solver: ZSolver,
    /// Accuracy of the quasi-Newton `Z` solve, as a gradient norm relative to `γ`.
    pub z_tol: f64,
    pub lbfgs_memory: usize,
    pub lbfgs_max_iter: usize,
    /// Lower bound on `Z` for the positive-domain families.
    pub positive_floor: f64,
    pub dual_init: DualInit,
    /// Keep `H = 0`, which turns the model into a plain Tucker fit.
    pub freeze_h: bool,
    /// Modes (0-based) whose factor keeps its initial value.
    pub frozen_factors: Vec<usize>,
    pub reducer: TieReducer,
    /// Abort once the Lagrangian exceeds this multiple of its initial magnitude.
    pub divergence_factor: f64,
    pub penalties: Penalties,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iter: 500,
            gamma: 0.0,
            gamma_margin: 1.05,
            tol_primal: None,
            tol_step: 1e-8,
            moduli: ModuliSchedule::default(),
            moduli_safety: 1.1,
            moduli_floor: 1e-8,
            power_iters: 50,
            power_tol: 1e-8,
            z_solver: ZSolver::Auto,
            z_tol: 1e-10,
            lbfgs_memory: 10,
            lbfgs_max_iter: 200,
            positive_floor: 1e-2,
            dual_init: DualInit::Gradient,
            freeze_h: false,
            frozen_factors: Vec::new(),
            reducer: TieReducer::Mean,
            divergence_factor: 10.0,
            penalties: Penalties::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, ndim: usize) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(DcotError::InvalidParameter(format!("{what} must be positive, got {v}")))
            }
        };
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(DcotError::InvalidParameter(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.gamma_margin < 1.0 {
            return Err(DcotError::InvalidParameter(format!("gamma margin {} is below 1", self.gamma_margin)));
        }
        if self.moduli_safety <= 1.0 {
            return Err(DcotError::InvalidParameter(format!("moduli safety {} must exceed 1", self.moduli_safety)));
        }
        if let Some(t) = self.tol_primal {
            positive(t, "primal tolerance")?;
        }
        positive(self.tol_step, "step tolerance")?;
        positive(self.moduli_floor, "moduli floor")?;
        positive(self.power_tol, "power-iteration tolerance")?;
        positive(self.z_tol, "Z tolerance")?;
        positive(self.positive_floor, "positive floor")?;
        positive(self.divergence_factor, "divergence factor")?;
        if let Some(&m) = self.frozen_factors.iter().find(|&&m| m >= ndim) {
            return Err(DcotError::InvalidParameter(format!("frozen factor mode {} out of range", m + 1)));
        }
        if let ModuliSchedule::Periodic { every: 0 } = self.moduli {
            return Err(DcotError::InvalidParameter("moduli period must be positive".into()));
        }
        if self.power_iters == 0 || self.lbfgs_memory == 0 || self.lbfgs_max_iter == 0 {
            return Err(DcotError::InvalidParameter("iteration counts must be positive".into()));
        }
        Ok(())
    }
}

/// Step moduli `ϱ` of the factor, `G` and `H` blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Moduli {
    pub factors: Vec<f64>,
    pub core_g: f64,
    pub core_h: f64,
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub model: DcotModel,
    pub z: DenseTensor,
    pub y: DenseTensor,
    pub iteration: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub lagrangian: f64,
    pub loss: f64,
    pub penalty: f64,
    pub primal_residual: f64,
    /// `‖Y_{k+1} − Y_k‖`
    pub dual_change: f64,
    /// `‖Z_{k+1} − Z_k‖`
    pub z_change: f64,
    /// Euclidean norm of the change of all primal blocks.
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIter,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    /// Row 0 is the initial state.
    pub rows: Vec<TraceRow>,
    pub stop: StopReason,
    pub gamma: f64,
    pub lipschitz_f: f64,
}

impl ConvergenceTrace {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }

    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("trace has an initial row")
    }
}

/// `M = γ(recon − Z) − Y`, the gradient of the augmented terms with respect
/// to the reconstruction.
pub fn residual_tensor(recon: &DenseTensor, z: &DenseTensor, y: &DenseTensor, gamma: f64) -> DenseTensor {
    let mut m = recon.sub(z).scale(gamma);
    m.axpy(-1.0, y);
    m
}

/// Gradient of the smooth augmented part with respect to `U^(n)`:
/// `M_(n) (⊗_{t≠n} U^(t)) C_(n)ᵀ` with `C = G + H`.
pub fn factor_gradient(model: &DcotModel, m: &DenseTensor, mode: usize) -> Result<DenseMatrix> {
    let mut t = m.clone();
    for (k, u) in model.factors.iter().enumerate() {
        if k != mode {
            t = n_mode_product_transposed(&t, u, k)?;
        }
    }
    let c = model.combined_core();
    matricize(&t, mode)?.matmul(&matricize(&c, mode)?.transpose())
}

/// Gradient with respect to either core: `M ×_1 U^(1)ᵀ ⋯ ×_N U^(N)ᵀ`.
pub fn core_gradient(model: &DcotModel, m: &DenseTensor) -> Result<DenseTensor> {
    multilinear_product_transposed(m, &model.factors)
}

fn norm_or_frobenius(a: &DenseMatrix, cfg: &SolverConfig) -> f64 {
    spectral_norm(a, cfg.power_iters, cfg.power_tol).unwrap_or_else(|| a.frob_norm())
}

/// Upper bounds on the block Lipschitz constants at the current iterate,
/// inflated by the safety factor and floored.
pub fn estimate_moduli(model: &DcotModel, gamma: f64, cfg: &SolverConfig) -> Result<Moduli> {
    let norms: Vec<f64> = model.factors.iter().map(|u| norm_or_frobenius(u, cfg)).collect();
    let c = model.combined_core();
    let mut factors = Vec::with_capacity(norms.len());
    for n in 0..norms.len() {
        factors.push(factor_bound(&c, &norms, n, gamma, cfg)?);
    }
    let core = core_bound(&norms, gamma, cfg);
    Ok(Moduli { factors, core_g: core, core_h: core })
}

fn inflate(l: f64, cfg: &SolverConfig) -> f64 {
    (cfg.moduli_safety * l).max(cfg.moduli_floor)
}

fn factor_bound(c: &DenseTensor, norms: &[f64], mode: usize, gamma: f64, cfg: &SolverConfig) -> Result<f64> {
    let cn = norm_or_frobenius(&matricize(c, mode)?, cfg);
    let others: f64 = norms.iter().enumerate().filter(|&(k, _)| k != mode).map(|(_, v)| v * v).product();
    Ok(inflate(gamma * cn * cn * others, cfg))
}

fn core_bound(norms: &[f64], gamma: f64, cfg: &SolverConfig) -> f64 {
    inflate(gamma * norms.iter().map(|v| v * v).product::<f64>(), cfg)
}

fn factor_modulus(model: &DcotModel, gamma: f64, cfg: &SolverConfig, mode: usize) -> Result<f64> {
    let norms: Vec<f64> = model.factors.iter().map(|u| norm_or_frobenius(u, cfg)).collect();
    factor_bound(&model.combined_core(), &norms, mode, gamma, cfg)
}

fn core_modulus(model: &DcotModel, gamma: f64, cfg: &SolverConfig) -> f64 {
    let norms: Vec<f64> = model.factors.iter().map(|u| norm_or_frobenius(u, cfg)).collect();
    core_bound(&norms, gamma, cfg)
}

/// The linearized ADMM problem: a bound loss plus solver settings.
#[derive(Clone, Debug)]
pub struct Solver {
    pub loss: SmoothedLoss,
    pub config: SolverConfig,
    pub gamma: f64,
    pub lipschitz_f: f64,
}

impl Solver {
    pub fn new(loss: SmoothedLoss, config: SolverConfig) -> Result<Self> {
        config.validate(loss.stats.shape.ndim())?;
        let floor = if loss.family.positive_domain() { config.positive_floor } else { 0.0 };
        let lipschitz_f = loss.lipschitz(floor);
        let gamma = config.gamma.max(2.0 * config.gamma_margin * lipschitz_f);
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(DcotError::InvalidParameter(format!(
                "augmented weight {gamma} is not positive; supply gamma for a loss with zero curvature"
            )));
        }
        Ok(Solver { loss, config, gamma, lipschitz_f })
    }

    fn z_lower(&self) -> Option<f64> {
        self.loss.family.positive_domain().then_some(self.config.positive_floor)
    }

    /// `Z₀`: observed values in place, the observed mean elsewhere (0 for
    /// bernoulli logits), clamped into the loss domain.
    pub fn initial_z(&self, omega: &ObservationSet) -> Result<DenseTensor> {
        if omega.shape() != &self.loss.stats.shape {
            return Err(DcotError::DimensionMismatch(format!(
                "observations of shape {:?} for a loss of shape {:?}",
                omega.shape(),
                self.loss.stats.shape
            )));
        }
        let fill = match self.loss.family {
            LossFamily::Bernoulli => 0.0,
            _ => omega.mean(),
        };
        let mut z = omega.to_dense(fill);
        if let Some(lb) = self.z_lower() {
            z = z.map(|v| v.max(lb));
        }
        Ok(z)
    }

    /// Factors from `init` fitted to `Z₀`; the projected core `P` is split
    /// as `H₀ = tie(P)/2`, `G₀ = P − H₀`.
    pub fn initial_state(
        &self,
        omega: &ObservationSet,
        ranks: &[usize],
        init: &InitStrategy,
        partition: SubjectPartition,
    ) -> Result<SolverState> {
        let z = self.initial_z(omega)?;
        let factors = init_factors(&z, ranks, init)?;
        let projected = project_core(&z, &factors)?;
        let (core_g, core_h) = if self.config.freeze_h {
            let zero = DenseTensor::zeros(projected.shape().clone());
            (projected, zero)
        } else {
            let h = tie_heterogeneous_core(&projected, &partition, self.config.reducer)?.scale(0.5);
            (projected.sub(&h), h)
        };
        let model = DcotModel::new(factors, core_g, core_h, partition)?;
        self.state_from(model, z)
    }

    /// State for a given model and `Z₀`, with the configured dual start.
    pub fn state_from(&self, model: DcotModel, z: DenseTensor) -> Result<SolverState> {
        model.validate()?;
        if model.data_shape() != self.loss.stats.shape || z.shape() != &self.loss.stats.shape {
            return Err(DcotError::DimensionMismatch("model, Z and loss shapes differ".into()));
        }
        self.config.penalties.validate(model.ndim())?;
        let y = match self.config.dual_init {
            DualInit::Gradient => self.loss.gradient(&z)?.scale(-1.0),
            DualInit::Zero => DenseTensor::zeros(z.shape().clone()),
        };
        Ok(SolverState { model, z, y, iteration: 0 })
    }

    pub fn penalty_value(&self, model: &DcotModel) -> Result<f64> {
        let p = &self.config.penalties;
        let mut total = 0.0;
        for (n, u) in model.factors.iter().enumerate() {
            total += penalty_value_matrix(u, &p.factor(n));
        }
        total += penalty_value_tensor(&model.core_g, &p.core_g)?;
        if !self.config.freeze_h {
            total += penalty_value_tensor(&model.core_h, &p.core_h)?;
        }
        Ok(total)
    }

    /// Augmented Lagrangian at `state`.
    pub fn lagrangian_value(&self, state: &SolverState) -> Result<f64> {
        let recon = state.model.reconstruct()?;
        self.lagrangian_parts(state, &recon).map(|(l, _, _)| l)
    }

    fn lagrangian_parts(&self, state: &SolverState, recon: &DenseTensor) -> Result<(f64, f64, f64)> {
        let loss = self.loss.value(&state.z)?;
        let penalty = self.penalty_value(&state.model)?;
        let r = recon.sub(&state.z);
        let inner: f64 = state.y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
        let quad = r.data().iter().map(|v| v * v).sum::<f64>();
        Ok((loss + penalty - inner + 0.5 * self.gamma * quad, loss, penalty))
    }

    fn trace_row(&self, state: &SolverState, recon: &DenseTensor, dual: f64, dz: f64, step: f64) -> Result<TraceRow> {
        let (lagrangian, loss, penalty) = self.lagrangian_parts(state, recon)?;
        Ok(TraceRow {
            iteration: state.iteration,
            lagrangian,
            loss,
            penalty,
            primal_residual: recon.sub(&state.z).frob_norm(),
            dual_change: dual,
            z_change: dz,
            step,
        })
    }

    fn use_closed_form(&self) -> Result<bool> {
        match (self.config.z_solver, self.loss.family) {
            (ZSolver::Auto, LossFamily::Gaussian) | (ZSolver::ClosedForm, LossFamily::Gaussian) => Ok(true),
            (ZSolver::ClosedForm, f) => {
                Err(DcotError::InvalidParameter(format!("no closed-form Z step for the {f:?} loss")))
            }
            _ => Ok(false),
        }
    }

    /// `argmin_Z F(Z) + (γ/2)‖Z − c‖²` with `c = recon − Y/γ`.
    pub fn update_z(&self, recon: &DenseTensor, y: &DenseTensor, warm: &DenseTensor) -> Result<DenseTensor> {
        let gamma = self.gamma;
        let target = recon.zip_map(y, |r, yv| r - yv / gamma);
        let s = &self.loss.stats;
        let p = s.numel() as f64;
        if self.use_closed_form()? {
            let data = (0..s.numel())
                .map(|i| (2.0 * s.m[i] / p + gamma * target.data()[i]) / (2.0 * s.w[i] / p + gamma))
                .collect();
            return DenseTensor::new(target.shape().clone(), data);
        }
        let family = self.loss.family;
        let objective = |z: &[f64], g: &mut [f64]| {
            let mut value = 0.0;
            for i in 0..z.len() {
                let d = z[i] - target.data()[i];
                value += family.aggregate(z[i], s.w[i], s.m[i], s.q[i]) / p + 0.5 * gamma * d * d;
                g[i] = family.aggregate_derivative(z[i], s.w[i], s.m[i]) / p + gamma * d;
            }
            value
        };
        let opts = LbfgsOptions {
            memory: self.config.lbfgs_memory,
            max_iter: self.config.lbfgs_max_iter,
            grad_tol: self.config.z_tol * gamma,
            lower_bound: self.z_lower(),
        };
        let start = match self.z_lower() {
            Some(lb) => warm.map(|v| v.max(lb)),
            None => warm.clone(),
        };
        let report = lbfgs::minimize(start.into_data(), objective, &opts)?;
        if !report.converged {
            log::warn!(
                "Z step stopped at gradient norm {:.3e} after {} iterations",
                report.grad_norm,
                report.iterations
            );
        }
        DenseTensor::new(target.shape().clone(), report.x)
    }

    /// One full sweep. Returns the new reconstruction and the trace row.
    pub fn step(&self, state: &mut SolverState, moduli: &Moduli) -> Result<(DenseTensor, TraceRow)> {
        let cfg = &self.config;
        let gamma = self.gamma;
        let per_block = cfg.moduli == ModuliSchedule::PerBlock;
        let mut step_sq = 0.0;
        let mut recon = state.model.reconstruct()?;

        for n in 0..state.model.ndim() {
            if cfg.frozen_factors.contains(&n) {
                continue;
            }
            let rho = if per_block { factor_modulus(&state.model, gamma, cfg, n)? } else { moduli.factors[n] };
            let m = residual_tensor(&recon, &state.z, &state.y, gamma);
            let grad = factor_gradient(&state.model, &m, n)?;
            let u = &state.model.factors[n];
            let trial = u.sub(&grad.scale(1.0 / rho));
            let next = prox_matrix(&trial, &cfg.penalties.factor(n), rho)?;
            step_sq += next.sub(u).frob_norm().powi(2);
            state.model.factors[n] = next;
            recon = state.model.reconstruct()?;
        }

        let rho_g = if per_block { core_modulus(&state.model, gamma, cfg) } else { moduli.core_g };
        let m = residual_tensor(&recon, &state.z, &state.y, gamma);
        let grad = core_gradient(&state.model, &m)?;
        let trial = state.model.core_g.sub(&grad.scale(1.0 / rho_g));
        let next = prox_tensor(&trial, &cfg.penalties.core_g, rho_g)?;
        step_sq += next.sub(&state.model.core_g).frob_norm().powi(2);
        state.model.core_g = next;
        recon = state.model.reconstruct()?;

        if !cfg.freeze_h {
            let rho_h = if per_block { core_modulus(&state.model, gamma, cfg) } else { moduli.core_h };
            let m = residual_tensor(&recon, &state.z, &state.y, gamma);
            let grad = core_gradient(&state.model, &m)?;
            let partition = &state.model.partition;
            let trial = tie_heterogeneous_core(&state.model.core_h.sub(&grad.scale(1.0 / rho_h)), partition, cfg.reducer)?;
            let shrunk = prox_tensor(&trial, &cfg.penalties.core_h, rho_h)?;
            let next = tie_heterogeneous_core(&shrunk, partition, cfg.reducer)?;
            step_sq += next.sub(&state.model.core_h).frob_norm().powi(2);
            state.model.core_h = next;
            recon = state.model.reconstruct()?;
        }

        let z_next = self.update_z(&recon, &state.y, &state.z)?;
        let dz = z_next.sub(&state.z).frob_norm();
        step_sq += dz * dz;
        state.z = z_next;

        let y_next = state.y.zip_map(&recon.sub(&state.z), |yv, r| yv - gamma * r);
        let dual = y_next.sub(&state.y).frob_norm();
        state.y = y_next;
        state.iteration += 1;

        let row = self.trace_row(state, &recon, dual, dz, step_sq.sqrt())?;
        Ok((recon, row))
    }

    /// Runs sweeps until convergence or `max_iter`, starting from `state`.
    pub fn run(&self, mut state: SolverState, omega_norm: f64) -> Result<(SolverState, ConvergenceTrace)> {
        let cfg = &self.config;
        let tol_primal = cfg.tol_primal.unwrap_or(1e-6 * omega_norm);
        let recon = state.model.reconstruct()?;
        let first = self.trace_row(&state, &recon, 0.0, 0.0, 0.0)?;
        let start = first.lagrangian;
        let limit = cfg.divergence_factor * start.abs().max(1e-12 * (1.0 + omega_norm * omega_norm));
        let mut rows = vec![first];
        let mut moduli = estimate_moduli(&state.model, self.gamma, cfg)?;
        let mut stop = StopReason::MaxIter;
        for k in 0..cfg.max_iter {
            if let ModuliSchedule::Periodic { every } = cfg.moduli {
                if k > 0 && k % every == 0 {
                    moduli = estimate_moduli(&state.model, self.gamma, cfg)?;
                }
            }
            let (_, row) = self.step(&mut state, &moduli)?;
            if !row.lagrangian.is_finite() || row.lagrangian > limit {
                return Err(DcotError::Diverged {
                    iteration: row.iteration,
                    reason: format!("augmented Lagrangian {:.6e} against initial {:.6e}", row.lagrangian, start),
                });
            }
            let done = row.primal_residual <= tol_primal && row.step <= cfg.tol_step * (1.0 + state.z.frob_norm());
            log::debug!(
                "iter {:>5}  L={:.10e}  primal={:.3e}  step={:.3e}",
                row.iteration,
                row.lagrangian,
                row.primal_residual,
                row.step
            );
            rows.push(row);
            if done {
                stop = StopReason::Converged;
                break;
            }
        }
        Ok((state, ConvergenceTrace { rows, stop, gamma: self.gamma, lipschitz_f: self.lipschitz_f }))
    }
}

/// Fits a model to `omega` from the given initialization.
pub fn solve(
    omega: &ObservationSet,
    loss: SmoothedLoss,
    ranks: &[usize],
    init: &InitStrategy,
    partition: SubjectPartition,
    config: SolverConfig,
) -> Result<(SolverState, ConvergenceTrace)> {
    let solver = Solver::new(loss, config)?;
    let state = solver.initial_state(omega, ranks, init, partition)?;
    solver.run(state, omega.frob_norm())
}
