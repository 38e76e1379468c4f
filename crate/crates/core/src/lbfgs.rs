//! Limited-memory BFGS with an optional elementwise lower bound.
//!
//! Bound handling is the simple active-set variant: coordinates sitting on
//! the bound with a gradient pushing outward are frozen for the iteration,
//! and trial points are projected back onto the box.

use std::collections::VecDeque;

use crate::error::{DcotError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the projected gradient's Euclidean norm drops below this.
    pub grad_tol: f64,
    pub lower_bound: Option<f64>,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { memory: 10, max_iter: 200, grad_tol: 1e-10, lower_bound: None }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient with the components that cannot move (on the bound, pointing
/// outward) zeroed.
fn projected_gradient(x: &[f64], g: &[f64], lower: Option<f64>) -> Vec<f64> {
    match lower {
        None => g.to_vec(),
        Some(lb) => x.iter().zip(g).map(|(&xi, &gi)| if xi <= lb && gi > 0.0 { 0.0 } else { gi }).collect(),
    }
}

/// Minimizes `f`, which returns the value and writes the gradient into its
/// second argument.
pub fn minimize(
    x0: Vec<f64>,
    mut f: impl FnMut(&[f64], &mut [f64]) -> f64,
    opts: &LbfgsOptions,
) -> Result<LbfgsReport> {
    let n = x0.len();
    let project = |x: &mut [f64]| {
        if let Some(lb) = opts.lower_bound {
            x.iter_mut().for_each(|v| *v = v.max(lb));
        }
    };
    let mut x = x0;
    project(&mut x);
    let mut g = vec![0.0; n];
    let mut value = f(&x, &mut g);
    if !value.is_finite() {
        return Err(DcotError::InnerSolver { grad_norm: f64::NAN, iterations: 0 });
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut pg = projected_gradient(&x, &g, opts.lower_bound);
    let mut grad_norm = dot(&pg, &pg).sqrt();
    let mut iterations = 0;
    while grad_norm > opts.grad_tol && iterations < opts.max_iter {
        iterations += 1;
        // two-loop recursion on the free coordinates
        let mut d = pg.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let scale = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        d.iter_mut().zip(&pg).for_each(|(di, &p)| if p == 0.0 { *di = 0.0 } else { *di = -*di });
        if dot(&d, &pg) >= 0.0 {
            // not a descent direction: restart from steepest descent
            history.clear();
            d = pg.iter().map(|v| -v).collect();
        }
        if history.is_empty() {
            let dn = dot(&d, &d).sqrt();
            if dn > 1.0 {
                d.iter_mut().for_each(|v| *v /= dn);
            }
        }

        let mut step = 1.0;
        let mut trial = vec![0.0; n];
        let mut g_trial = vec![0.0; n];
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            trial.iter_mut().zip(x.iter().zip(&d)).for_each(|(t, (xi, di))| *t = xi + step * di);
            project(&mut trial);
            let v = f(&trial, &mut g_trial);
            let decrease: f64 = g.iter().zip(trial.iter().zip(&x)).map(|(gi, (t, xi))| gi * (t - xi)).sum();
            if v.is_finite() && v <= value + ARMIJO * decrease {
                accepted = Some(v);
                break;
            }
            step *= 0.5;
        }
        let Some(v) = accepted else {
            if grad_norm <= opts.grad_tol.sqrt() {
                // stalled at round-off level
                break;
            }
            return Err(DcotError::InnerSolver { grad_norm, iterations });
        };
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == opts.memory.max(1) {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_trial);
        value = v;
        pg = projected_gradient(&x, &g, opts.lower_bound);
        grad_norm = dot(&pg, &pg).sqrt();
    }
    Ok(LbfgsReport { x, value, grad_norm, iterations, converged: grad_norm <= opts.grad_tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let r = minimize(vec![-1.2, 1.0], f, &LbfgsOptions { max_iter: 500, ..Default::default() }).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn respects_lower_bound() {
        // min (x + 1)² subject to x >= 0.5
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] + 1.0);
            (x[0] + 1.0).powi(2)
        };
        let opts = LbfgsOptions { lower_bound: Some(0.5), ..Default::default() };
        let r = minimize(vec![3.0], f, &opts).unwrap();
        assert_eq!(r.x[0], 0.5);
        assert!(r.converged);
    }

    #[test]
    fn separable_quadratic() {
        let c = [1.0, -2.0, 3.5, 0.25];
        let w = [1.0, 10.0, 0.1, 3.0];
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..4 {
                g[i] = w[i] * (x[i] - c[i]);
                v += 0.5 * w[i] * (x[i] - c[i]).powi(2);
            }
            v
        };
        let r = minimize(vec![0.0; 4], f, &LbfgsOptions { grad_tol: 1e-13, ..Default::default() }).unwrap();
        for (x, c) in r.x.iter().zip(c) {
            assert!((x - c).abs() < 1e-12);
        }
    }
}
