//! Binary L2-regularized logistic regression (two-class maximum entropy).
//!
//! Objective: `sum_i log(1 + exp(-y_i z_i)) + ||w||^2 / (2C)` with
//! `z_i = w . x_i + b`, `y_i = +1` for deceptive. The bias is not penalized.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::{FeatureSpace, FeatureVector};

const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Inverse regularization strength; `f64::INFINITY` disables the penalty.
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxentModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub objective: f64,
    /// Hash of the feature space the weights index into; empty when trained on raw vectors.
    pub space_hash: String,
}

fn sign(label: Option<Label>) -> Result<f64> {
    match label {
        Some(Label::Deceptive) => Ok(1.0),
        Some(Label::Authentic) => Ok(-1.0),
        None => Err(Error::invalid("training example without a label")),
    }
}

/// `log(1 + exp(x))` without overflow.
fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_dims(weights: &[f64], data: &[FeatureVector]) -> Result<()> {
    for x in data {
        if let Some(&last) = x.indices.last() {
            if last as usize >= weights.len() {
                return Err(Error::DimensionMismatch {
                    expected: weights.len(),
                    got: last as usize + 1,
                });
            }
        }
    }
    Ok(())
}

fn regularizer(weights: &[f64], c: f64) -> f64 {
    if c.is_infinite() {
        0.0
    } else {
        weights.iter().map(|w| w * w).sum::<f64>() / (2.0 * c)
    }
}

/// Loss and gradient. The gradient has `weights.len() + 1` entries, the bias
/// derivative last. Examples are reduced in fixed-size chunks in order, so
/// the result does not depend on the thread count.
pub fn nll_and_grad(weights: &[f64], bias: f64, data: &[FeatureVector], c: f64) -> Result<(f64, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::invalid("no training examples"));
    }
    if !(c > 0.0) {
        return Err(Error::invalid(format!("C must be positive, got {c}")));
    }
    check_dims(weights, data)?;
    let dim = weights.len();
    let partials: Vec<Result<(f64, Vec<f64>)>> = data
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; dim + 1];
            for x in chunk {
                let y = sign(x.label)?;
                let z = x.dot(weights) + bias;
                loss += log1p_exp(-y * z);
                let g = -y * sigmoid(-y * z);
                for (i, v) in x.iter() {
                    grad[i] += g * v;
                }
                grad[dim] += g;
            }
            Ok((loss, grad))
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; dim + 1];
    for p in partials {
        let (l, g) = p?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    loss += regularizer(weights, c);
    if c.is_finite() {
        for (g, w) in grad.iter_mut().zip(weights) {
            *g += w / c;
        }
    }
    Ok((loss, grad))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Trains from zero weights.
pub fn train(data: &[FeatureVector], dim: usize, config: &TrainConfig) -> Result<MaxentModel> {
    train_from(data, &vec![0.0; dim + 1], config)
}

/// L-BFGS (memory 10) with backtracking Armijo line search from `init`
/// (weights followed by bias).
pub fn train_from(data: &[FeatureVector], init: &[f64], config: &TrainConfig) -> Result<MaxentModel> {
    if init.is_empty() {
        return Err(Error::invalid("initial point must include the bias"));
    }
    let pos = data.iter().filter(|x| x.label == Some(Label::Deceptive)).count();
    if pos == 0 || pos == data.len() {
        return Err(Error::SingleClass);
    }
    let dim = init.len() - 1;
    let eval = |p: &[f64]| nll_and_grad(&p[..dim], p[dim], data, config.c);

    let mut x = init.to_vec();
    let (mut f, mut g) = eval(&x)?;
    if !f.is_finite() {
        return Err(Error::NonFinite);
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    while iterations < config.max_iter && norm(&g) > config.tol {
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y))
            .unwrap_or_else(|| 1.0 / norm(&g).max(1.0));
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (fc, gc) = eval(&cand)?;
            if fc.is_finite() && fc <= f + 1e-4 * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((xn, fnew, gnew)) = accepted else {
            // No decrease representable at this precision.
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if history.len() == 10 {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let converged_f = (f - fnew).abs() <= f64::EPSILON * f.abs().max(1.0);
        x = xn;
        f = fnew;
        g = gnew;
        if converged_f && norm(&g) <= config.tol.max(1e-10) * 1e3 {
            break;
        }
    }
    if !f.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let bias = x.pop().expect("bias entry");
    Ok(MaxentModel {
        weights: x,
        bias,
        c: config.c,
        iterations,
        grad_norm: norm(&g),
        objective: f,
        space_hash: String::new(),
    })
}

impl MaxentModel {
    pub fn zero(dim: usize) -> Self {
        MaxentModel {
            weights: vec![0.0; dim],
            bias: 0.0,
            c: 1.0,
            iterations: 0,
            grad_norm: f64::NAN,
            objective: f64::NAN,
            space_hash: String::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, x: &FeatureVector) -> f64 {
        x.iter()
            .filter(|(i, _)| *i < self.weights.len())
            .map(|(i, v)| self.weights[i] * v)
            .sum::<f64>()
            + self.bias
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.score(x))
    }

    /// Deceptive iff the probability is at least `threshold`.
    pub fn predict(&self, x: &FeatureVector, threshold: f64) -> Label {
        if self.predict_proba(x) >= threshold {
            Label::Deceptive
        } else {
            Label::Authentic
        }
    }

    pub fn predict_all(&self, xs: &[FeatureVector], threshold: f64) -> Vec<Label> {
        xs.iter().map(|x| self.predict(x, threshold)).collect()
    }

    pub fn to_text(&self, space: &FeatureSpace) -> Result<String> {
        if space.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: self.dim(),
            });
        }
        let mut out = String::from("revspam maxent v1\n");
        let _ = writeln!(out, "space {}", space.hash());
        let _ = writeln!(out, "c {}", self.c);
        let _ = writeln!(out, "bias {}", self.bias);
        let _ = writeln!(out, "iterations {}", self.iterations);
        let _ = writeln!(out, "grad_norm {}", self.grad_norm);
        let _ = writeln!(out, "objective {}", self.objective);
        let names = space.dimension_names();
        for (name, w) in names.iter().zip(&self.weights) {
            if *w != 0.0 {
                let _ = writeln!(out, "{}\t{}", name, w);
            }
        }
        Ok(out)
    }

    pub fn from_text(text: &str, space: &FeatureSpace) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("model file: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some("revspam maxent v1") {
            return Err(bad("missing or unsupported version line".into()));
        }
        let mut field = |key: &str| -> Result<String> {
            lines
                .next()
                .and_then(|l| l.strip_prefix(key))
                .and_then(|l| l.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("missing {key}")))
        };
        let hash = field("space")?;
        if hash != space.hash() {
            return Err(bad("feature-space hash mismatch".into()));
        }
        let num = |s: String| s.parse::<f64>().map_err(|_| bad(format!("bad number {s}")));
        let c = num(field("c")?)?;
        let bias = num(field("bias")?)?;
        let iterations = field("iterations")?
            .parse()
            .map_err(|_| bad("bad iterations".into()))?;
        let grad_norm = num(field("grad_norm")?)?;
        let objective = num(field("objective")?)?;
        let mut weights = vec![0.0; space.dim()];
        for line in lines {
            let (name, w) = line.rsplit_once('\t').ok_or_else(|| bad(format!("bad weight line {line}")))?;
            let i = space
                .index_of(name)
                .ok_or_else(|| bad(format!("unknown dimension {name}")))?;
            weights[i] = num(w.to_string())?;
        }
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(MaxentModel {
            weights,
            bias,
            c,
            iterations,
            grad_norm,
            objective,
            space_hash: hash,
        })
    }

    pub fn save(&self, path: &Path, space: &FeatureSpace) -> Result<()> {
        std::fs::write(path, self.to_text(space)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, space: &FeatureSpace) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, space)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(pairs: &[(usize, f64)], label: Label) -> FeatureVector {
        FeatureVector::from_pairs(pairs.to_vec(), Some(label))
    }

    #[test]
    fn zero_weights_give_ln2_per_example() {
        let data = [ex(&[(0, 3.0)], Label::Deceptive)];
        let (loss, _) = nll_and_grad(&[0.0], 0.0, &data, 1.0).unwrap();
        assert_eq!(loss, std::f64::consts::LN_2);
    }

    #[test]
    fn doubling_c_halves_regularizer() {
        let w = [0.5, -2.0];
        assert_eq!(regularizer(&w, 2.0), regularizer(&w, 1.0) / 2.0);
        assert_eq!(regularizer(&w, f64::INFINITY), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let data = [ex(&[(4, 1.0)], Label::Deceptive)];
        assert!(matches!(
            nll_and_grad(&[0.0; 2], 0.0, &data, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn separable_one_dimensional() {
        let data = [ex(&[(0, 1.0)], Label::Deceptive), ex(&[(0, -1.0)], Label::Authentic)];
        let m = train(&data, 1, &TrainConfig::default()).unwrap();
        assert!(m.weights[0] > 0.0);
        assert_eq!(m.predict(&data[0], 0.5), Label::Deceptive);
        assert_eq!(m.predict(&data[1], 0.5), Label::Authentic);
        let (zero_obj, _) = nll_and_grad(&[0.0], 0.0, &data, 1.0).unwrap();
        assert!(m.objective <= zero_obj);
        assert!(m.grad_norm <= 1e-6);
    }

    #[test]
    fn single_class_rejected() {
        let data = [ex(&[(0, 1.0)], Label::Deceptive)];
        assert!(matches!(train(&data, 1, &TrainConfig::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn threshold_boundary() {
        let m = MaxentModel::zero(1);
        let x = ex(&[(0, 1.0)], Label::Authentic);
        assert_eq!(m.predict_proba(&x), 0.5);
        assert_eq!(m.predict(&x, 0.5), Label::Deceptive);
        let mut m = m;
        m.bias = (0.49f64 / 0.51).ln();
        assert_eq!(m.predict(&x, 0.5), Label::Authentic);
        m.bias = 800.0;
        assert_eq!(m.predict_proba(&x), 1.0);
    }

    #[test]
    fn sigmoid_and_softplus_are_stable() {
        assert_eq!(log1p_exp(1000.0), 1000.0);
        assert_eq!(log1p_exp(-1000.0), 0.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
    }
}
