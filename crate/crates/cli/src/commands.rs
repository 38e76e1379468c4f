use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use dcot::eval::{grid_search as search, holdout_split, lambda_grid, rmse, synthesize};
use dcot::io::{
    load_coo, load_dense, matrix_to_tensor, read_features, read_labels, save_coo, save_dense, tensor_to_matrix,
    write_features, write_labels,
};
use dcot::similarity::{default_bandwidths, label_consistency, mode_similarity, ModeSimilarity, SimilarityModel};
use dcot::solver::{ConvergenceTrace, Penalties, SolverState};
use dcot::{DcotModel, DenseTensor, ObservationSet, SmoothedLoss, Solver, SubjectPartition};
use serde_json::{json, Value};

use crate::config::{Format, RunConfig, SimilarityKind};
use crate::error::{setup, CliError};

const TRACE_HEADER: &str = "iteration,lagrangian,loss,penalty,primal_residual,dual_change,z_change,step";

fn output_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    cfg.output.as_deref().ok_or_else(|| CliError::Config("no output directory: set `output` or pass --output".into()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn is_dense_file(path: &Path) -> Result<bool, CliError> {
    let mut magic = [0u8; 4];
    let mut f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let n = f.read(&mut magic).map_err(|e| CliError::io(path, e))?;
    Ok(n == 4 && &magic == b"DCOT")
}

/// Observed entries from a COO file, or from a dense file with `NaN` for
/// missing cells. The format is detected from the file's first bytes.
pub fn read_observations(path: &Path) -> Result<ObservationSet, CliError> {
    if is_dense_file(path)? {
        Ok(ObservationSet::from_dense(&load_dense(path).map_err(|e| CliError::input(path, e))?))
    } else {
        load_coo(path).map_err(|e| CliError::input(path, e))
    }
}

/// A full tensor: a dense file, or a COO file with unlisted cells set to `NaN`.
pub fn read_full(path: &Path) -> Result<DenseTensor, CliError> {
    if is_dense_file(path)? {
        load_dense(path).map_err(|e| CliError::input(path, e))
    } else {
        Ok(load_coo(path).map_err(|e| CliError::input(path, e))?.to_dense(f64::NAN))
    }
}

fn write_dense(path: &Path, t: &DenseTensor) -> Result<(), CliError> {
    save_dense(path, t).map_err(|e| CliError::input(path, e))
}

fn write_observations(dir: &Path, stem: &str, obs: &ObservationSet, format: Format) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    match format {
        Format::Coo => save_coo(&path, obs).map_err(|e| CliError::input(&path, e))?,
        Format::Dense => write_dense(&path, &obs.to_dense(f64::NAN))?,
    }
    Ok(path)
}

fn write_text(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    write_text(path, |w| writeln!(w, "{text}"))
}

/// Writes `model_g.dct`, `model_h.dct` and `factor_1.dct` … `factor_N.dct`.
pub fn write_model(dir: &Path, model: &DcotModel) -> Result<(), CliError> {
    write_dense(&dir.join("model_g.dct"), &model.core_g)?;
    write_dense(&dir.join("model_h.dct"), &model.core_h)?;
    for (n, u) in model.factors.iter().enumerate() {
        write_dense(&dir.join(format!("factor_{}.dct", n + 1)), &matrix_to_tensor(u))?;
    }
    Ok(())
}

/// Reads a model written by [`write_model`]. The partition is not stored;
/// reconstruction does not need it.
pub fn read_model(dir: &Path) -> Result<DcotModel, CliError> {
    let load = |name: &str| {
        let path = dir.join(name);
        load_dense(&path).map_err(|e| CliError::input(&path, e))
    };
    let core_g = load("model_g.dct")?;
    let core_h = load("model_h.dct")?;
    let factors = (1..=core_g.shape().ndim())
        .map(|n| {
            let name = format!("factor_{n}.dct");
            tensor_to_matrix(&load(&name)?).map_err(|e| CliError::input(&dir.join(&name), e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    DcotModel::new(factors, core_g, core_h, SubjectPartition::none()).map_err(|e| CliError::input(dir, e))
}

fn write_trace(path: &Path, trace: &ConvergenceTrace) -> Result<(), CliError> {
    write_text(path, |w| {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &trace.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.iteration, r.lagrangian, r.loss, r.penalty, r.primal_residual, r.dual_change, r.z_change, r.step
            )?;
        }
        Ok(())
    })
}

fn effective_config(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).expect("config always serializes")
}

/// The smoothed loss described by the `loss` section.
pub fn build_loss(cfg: &RunConfig, omega: &ObservationSet) -> Result<SmoothedLoss, CliError> {
    let family = cfg.loss.family;
    family.check_data(omega).map_err(setup)?;
    let sim_cfg = &cfg.loss.similarity;
    if sim_cfg.kind == SimilarityKind::None {
        return SmoothedLoss::unsmoothed(family, omega).map_err(setup);
    }
    let shape = omega.shape();
    let ndim = shape.ndim();
    for (what, len) in [("features", sim_cfg.features.len()), ("labels", sim_cfg.labels.len())] {
        if len != 0 && len != ndim {
            return Err(CliError::Config(format!("similarity {what} lists {len} entries for a {ndim}-way tensor")));
        }
    }
    let mut per_mode = Vec::with_capacity(ndim);
    for n in 0..ndim {
        let size = shape.dim(n);
        let mut ms = match sim_cfg.features.get(n).and_then(Option::as_ref) {
            None => ModeSimilarity::identity(size),
            Some(path) => {
                let file = File::open(path).map_err(|e| CliError::io(path, e))?;
                let rows = read_features(file).map_err(|e| CliError::input(path, e))?;
                if rows.len() != size {
                    return Err(CliError::Config(format!(
                        "{}: {} feature rows for mode {} of size {size}",
                        path.display(),
                        rows.len(),
                        n + 1
                    )));
                }
                let bw = sim_cfg.bandwidths.clone().unwrap_or_else(|| default_bandwidths(&rows));
                mode_similarity(&rows, sim_cfg.kernel, &bw).map_err(setup)?
            }
        };
        if let Some(path) = sim_cfg.labels.get(n).and_then(Option::as_ref) {
            let file = File::open(path).map_err(|e| CliError::io(path, e))?;
            let labels = read_labels(file).map_err(|e| CliError::input(path, e))?;
            if labels.len() != size {
                return Err(CliError::Config(format!(
                    "{}: {} labels for mode {} of size {size}",
                    path.display(),
                    labels.len(),
                    n + 1
                )));
            }
            let c = label_consistency(&labels, sim_cfg.same_label, sim_cfg.different_label).map_err(setup)?;
            ms = ms.with_consistency(c).map_err(setup)?;
        }
        per_mode.push(ms);
    }
    let sim = SimilarityModel::new(per_mode, sim_cfg.neighbor_cap, sim_cfg.normalized).map_err(setup)?;
    sim.check_shape(shape).map_err(setup)?;
    SmoothedLoss::new(family, &sim, omega, sim_cfg.degenerate).map_err(setup)
}

fn observed_data(cfg: &RunConfig) -> Result<(ObservationSet, Option<ObservationSet>), CliError> {
    let data = cfg.data.as_ref().ok_or_else(|| CliError::Config("missing `data` section".into()))?;
    let omega = read_observations(&data.observed)?;
    let test = match &data.test {
        Some(p) => {
            let t = read_observations(p)?;
            if t.shape() != omega.shape() {
                return Err(CliError::Config(format!(
                    "test entries have shape {:?}, observed {:?}",
                    t.shape().dims(),
                    omega.shape().dims()
                )));
            }
            Some(t)
        }
        None => None,
    };
    Ok((omega, test))
}

/// Solver plus initial state, with every setup error reported as a config error.
fn prepare(cfg: &RunConfig, loss: SmoothedLoss, omega: &ObservationSet) -> Result<(Solver, SolverState), CliError> {
    let ndim = omega.shape().ndim();
    if cfg.model.ranks.len() != ndim {
        return Err(CliError::Config(format!("model.ranks has {} entries for a {ndim}-way tensor", cfg.model.ranks.len())));
    }
    let solver = Solver::new(loss, cfg.solver.clone()).map_err(setup)?;
    let state = solver
        .initial_state(omega, &cfg.model.ranks, &cfg.model.strategy(), cfg.model.subject_partition()?)
        .map_err(setup)?;
    Ok((solver, state))
}

pub fn factorize(cfg: &RunConfig, complete: bool) -> Result<Value, CliError> {
    let dir = output_dir(cfg)?;
    let (omega, test) = observed_data(cfg)?;
    let loss = build_loss(cfg, &omega)?;
    let (solver, state) = prepare(cfg, loss, &omega)?;
    let (state, trace) = solver.run(state, omega.frob_norm()).map_err(CliError::Solver)?;
    let recon = state.model.reconstruct().map_err(CliError::Solver)?;
    let train_rmse = rmse(&recon, &omega).map_err(CliError::Solver)?;
    let test_rmse = test.as_ref().map(|t| rmse(&recon, t)).transpose().map_err(CliError::Solver)?;

    create_dir(dir)?;
    write_model(dir, &state.model)?;
    write_trace(&dir.join("trace.csv"), &trace)?;
    if complete {
        let full = ObservationSet::from_dense(&recon);
        write_observations(dir, "completed", &full, cfg.format)?;
    }
    let summary = json!({
        "command": if complete { "complete" } else { "factorize" },
        "config": effective_config(cfg),
        "gamma": trace.gamma,
        "lipschitz_f": trace.lipschitz_f,
        "stop": trace.stop,
        "iterations": trace.last().iteration,
        "final": trace.last(),
        "train_rmse": train_rmse,
        "test_rmse": test_rmse,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn synth(cfg: &RunConfig) -> Result<Value, CliError> {
    let dir = output_dir(cfg)?;
    let spec = cfg.synth.as_ref().ok_or_else(|| CliError::Config("missing `synth` section".into()))?.to_spec()?;
    let data = synthesize(&spec).map_err(setup)?;

    create_dir(dir)?;
    let observed = write_observations(dir, "observed", &data.observed, cfg.format)?;
    let held_out = write_observations(dir, "missing", &data.missing, cfg.format)?;
    write_dense(&dir.join("truth.dct"), &data.signal)?;
    write_dense(&dir.join("full.dct"), &data.full)?;
    write_model(dir, &data.model)?;
    for (n, rows) in data.features.iter().enumerate() {
        write_text(&dir.join(format!("features_{}.txt", n + 1)), |w| {
            write_features(&mut *w, rows).map_err(std::io::Error::other)
        })?;
    }
    if !data.labels.is_empty() {
        write_text(&dir.join("labels.txt"), |w| write_labels(&mut *w, &data.labels).map_err(std::io::Error::other))?;
    }
    let name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned());
    let summary = json!({
        "command": "synth",
        "config": effective_config(cfg),
        "observed": name(&observed),
        "missing": name(&held_out),
        "observed_count": data.observed.len(),
        "missing_count": data.missing.len(),
        "signal_norm": data.signal.frob_norm(),
    });
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Scores `evaluate.prediction` against `evaluate.reference`. The summary is
/// written only when an output directory is configured.
pub fn evaluate(cfg: &RunConfig) -> Result<Value, CliError> {
    let ev = cfg.evaluate.as_ref().ok_or_else(|| CliError::Config("missing `evaluate` section".into()))?;
    let prediction = if ev.prediction.is_dir() {
        read_model(&ev.prediction)?.reconstruct().map_err(|e| CliError::input(&ev.prediction, e))?
    } else {
        read_full(&ev.prediction)?
    };
    let reference = read_observations(&ev.reference)?;
    let score = rmse(&prediction, &reference).map_err(|e| CliError::Config(e.to_string()))?;
    let summary = json!({
        "command": "evaluate",
        "config": effective_config(cfg),
        "entries": reference.len(),
        "rmse": score,
    });
    if let Some(dir) = cfg.output.as_deref() {
        create_dir(dir)?;
        write_json(&dir.join("summary.json"), &summary)?;
    }
    Ok(summary)
}

fn penalties_for(base: &Penalties, lambda: &[f64]) -> Penalties {
    match *lambda {
        [shared] => base.with_shared_lambda(shared),
        [f, g, h] => Penalties {
            factors: base.factors.iter().map(|p| p.with_lambda(f)).collect(),
            core_g: base.core_g.with_lambda(g),
            core_h: base.core_h.with_lambda(h),
        },
        _ => unreachable!("candidates hold one or three weights"),
    }
}

pub fn grid_search(cfg: &RunConfig) -> Result<Value, CliError> {
    let dir = output_dir(cfg)?;
    let grid = &cfg.grid;
    let base = &cfg.solver.penalties;
    let penalized = base.factors.iter().chain([&base.core_g, &base.core_h]).any(|p| p.kind != Default::default());
    if !penalized {
        return Err(CliError::Config("grid search needs at least one penalty kind in solver.penalties".into()));
    }
    let weights = grid.lambdas.clone().unwrap_or_else(lambda_grid);
    if weights.is_empty() || weights.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
        return Err(CliError::Config("grid.lambdas must be a nonempty list of finite weights >= 0".into()));
    }
    let candidates: Vec<Vec<f64>> = if grid.per_block {
        let mut out = Vec::with_capacity(weights.len().pow(3));
        for &f in &weights {
            for &g in &weights {
                for &h in &weights {
                    out.push(vec![f, g, h]);
                }
            }
        }
        out
    } else {
        weights.iter().map(|&l| vec![l]).collect()
    };

    let (omega, _) = observed_data(cfg)?;
    let (train, valid) = holdout_split(&omega, grid.train_fraction, grid.split_seed).map_err(setup)?;
    let loss = build_loss(cfg, &train)?;
    // surfaces setup errors once, before any fitting
    prepare(cfg, loss.clone(), &train)?;
    let partition = cfg.model.subject_partition()?;
    let strategy = cfg.model.strategy();
    let fit = |lambda: &[f64]| {
        let mut solver_cfg = cfg.solver.clone();
        solver_cfg.penalties = penalties_for(base, lambda);
        let solver = Solver::new(loss.clone(), solver_cfg)?;
        let state = solver.initial_state(&train, &cfg.model.ranks, &strategy, partition.clone())?;
        let (state, _) = solver.run(state, train.frob_norm())?;
        state.model.reconstruct()
    };
    let report = search(&candidates, &valid, cfg.threads, fit).map_err(CliError::Solver)?;

    create_dir(dir)?;
    write_text(&dir.join("grid.csv"), |w| {
        if grid.per_block {
            writeln!(w, "lambda_factors,lambda_g,lambda_h,rmse,note")?;
        } else {
            writeln!(w, "lambda,rmse,note")?;
        }
        for row in &report.rows {
            let lam: Vec<String> = row.lambda.iter().map(f64::to_string).collect();
            let score = row.rmse.map(|r| r.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{}", lam.join(","), score, row.note.replace([',', '\n'], ";"))?;
        }
        Ok(())
    })?;
    let summary = json!({
        "command": "grid-search",
        "config": effective_config(cfg),
        "train_entries": train.len(),
        "validation_entries": valid.len(),
        "best_lambda": report.best_lambda,
        "best_rmse": report.best_rmse,
        "failed": report.rows.iter().filter(|r| r.rmse.is_none()).count(),
    });
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}
