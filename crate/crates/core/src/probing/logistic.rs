//! L2-regularized logistic regression fitted with L-BFGS.
//!
//! Objective: `mean_i log(1 + exp(-s_i (w.x_i + b))) + lambda/2 |w|^2` with
//! `s_i = ±1`; the bias is not penalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Regularized objective at the returned point.
    pub objective: f64,
    pub iterations: usize,
    pub grad_max_norm: f64,
    pub converged: bool,
}

/// `log(1 + exp(-z))` without overflow.
fn log1p_exp_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

pub fn objective(x: &[Vec<f64>], y: &[bool], weights: &[f64], bias: f64, lambda: f64) -> f64 {
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let z = crate::linalg::dot(xi, weights) + bias;
            log1p_exp_neg(if yi { z } else { -z })
        })
        .sum::<f64>()
        / x.len() as f64;
    loss + 0.5 * lambda * crate::linalg::dot(weights, weights)
}

/// Objective and gradient with respect to `[w..., b]`.
fn value_and_grad(x: &[Vec<f64>], y: &[bool], theta: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let k = theta.len() - 1;
    let (w, b) = (&theta[..k], theta[k]);
    let n = x.len() as f64;
    let mut grad = vec![0.0; k + 1];
    let mut loss = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let s = if yi { 1.0 } else { -1.0 };
        let z = s * (crate::linalg::dot(xi, w) + b);
        loss += log1p_exp_neg(z);
        // d/dz log(1 + e^-z) = -sigmoid(-z)
        let coef = -s * crate::linalg::sigmoid(-z) / n;
        for (g, v) in grad.iter_mut().zip(xi) {
            *g += coef * v;
        }
        grad[k] += coef;
    }
    for (g, wj) in grad.iter_mut().zip(w) {
        *g += lambda * wj;
    }
    (loss / n + 0.5 * lambda * crate::linalg::dot(w, w), grad)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes the objective from `w = 0, b = 0`. Converged means the gradient
/// max-norm fell below `tol` within `max_iter` iterations.
pub fn fit_logistic(x: &[Vec<f64>], y: &[bool], lambda: f64, max_iter: usize, tol: f64) -> Result<LogisticFit> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Data(format!("{} rows for {} labels", x.len(), y.len())));
    }
    let k = x[0].len();
    if x.iter().any(|r| r.len() != k || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data("activations must be finite rows of equal length".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    let mut theta = vec![0.0; k + 1];
    let (mut f, mut g) = value_and_grad(x, y, &theta, lambda);
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(MEMORY);
    let mut iterations = 0;
    while iterations < max_iter && max_abs(&g) >= tol {
        iterations += 1;
        let mut d = two_loop(&g, &history);
        let mut slope = crate::linalg::dot(&g, &d);
        if slope >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -crate::linalg::dot(&g, &g);
        }
        let slack = 8.0 * f64::EPSILON * f.abs();
        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = theta.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let (ft, gt) = value_and_grad(x, y, &trial, lambda);
            if ft <= f + ARMIJO * t * slope + slack {
                break Some((trial, ft, gt));
            }
            t *= 0.5;
            if t < 1e-20 {
                break None;
            }
        };
        let Some((next, f_next, g_next)) = accepted else { break };
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = crate::linalg::dot(&s, &yv);
        if sy > 1e-300 {
            if history.len() == MEMORY {
                history.remove(0);
            }
            history.push((s, yv, 1.0 / sy));
        }
        theta = next;
        f = f_next;
        g = g_next;
    }
    let grad_max_norm = max_abs(&g);
    let bias = theta.pop().expect("bias slot");
    Ok(LogisticFit {
        weights: theta,
        bias,
        objective: f,
        iterations,
        grad_max_norm,
        converged: grad_max_norm < tol,
    })
}

fn two_loop(g: &[f64], history: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * crate::linalg::dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.last() {
        let gamma = crate::linalg::dot(s, y) / crate::linalg::dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * crate::linalg::dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Vec<Vec<f64>>, Vec<bool>) {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 - 20.0) / 7.0, ((i * 7) % 11) as f64 / 5.0]).collect();
        let y = (0..40).map(|i| (i * 13) % 40 > 15).collect();
        (x, y)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = data();
        let theta = vec![0.3, -0.7, 0.2];
        let (_, g) = value_and_grad(&x, &y, &theta, 0.1);
        for j in 0..3 {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += 1e-6;
            dn[j] -= 1e-6;
            let fd = (value_and_grad(&x, &y, &up, 0.1).0 - value_and_grad(&x, &y, &dn, 0.1).0) / 2e-6;
            assert!((fd - g[j]).abs() < 1e-7);
        }
    }

    #[test]
    fn flipping_labels_negates_the_solution() {
        let (x, y) = data();
        let flipped: Vec<bool> = y.iter().map(|v| !v).collect();
        let a = fit_logistic(&x, &y, 0.05, 500, 1e-10).unwrap();
        let b = fit_logistic(&x, &flipped, 0.05, 500, 1e-10).unwrap();
        assert!((a.bias + b.bias).abs() < 1e-7);
        for (u, v) in a.weights.iter().zip(&b.weights) {
            assert!((u + v).abs() < 1e-7);
        }
        assert!((a.objective - b.objective).abs() < 1e-12);
    }

    #[test]
    fn huge_lambda_shrinks_weights() {
        let (x, y) = data();
        let fit = fit_logistic(&x, &y, 1e6, 500, 1e-8).unwrap();
        assert!(crate::linalg::dot(&fit.weights, &fit.weights).sqrt() < 1e-2);
    }

    #[test]
    fn non_finite_input_is_a_data_error() {
        let x = vec![vec![f64::NAN], vec![1.0]];
        assert!(matches!(fit_logistic(&x, &[true, false], 0.1, 10, 1e-8), Err(Error::Data(_))));
    }
}
