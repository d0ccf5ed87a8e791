//! Linear evaluation: ℓ2-regularized multinomial logistic regression on
//! frozen embeddings, scored over repeated splits.

use std::io::Write;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{GcaError, Result};
use crate::graph::{random_split, Split};

pub const DEFAULT_L2_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
pub const DEFAULT_RUNS: usize = 20;
pub const DEFAULT_MAX_ITER: usize = 2000;
pub const GRAD_TOL: f64 = 1e-6;

/// A fitted classifier. `weights` is `(F' + 1) × C` with the bias in the
/// last row.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub weights: Array2<f64>,
    pub converged: bool,
    /// Infinity norm of the final gradient.
    pub grad_norm: f64,
    pub iterations: usize,
    pub objective: f64,
}

fn with_bias(emb: ArrayView2<'_, f64>, rows: &[usize]) -> Array2<f64> {
    let f = emb.ncols();
    let mut out = Array2::ones((rows.len(), f + 1));
    for (r, &i) in rows.iter().enumerate() {
        out.slice_mut(s![r, ..f]).assign(&emb.row(i));
    }
    out
}

/// Mean softmax cross-entropy plus `(l2/2)‖W‖²` over the non-bias rows, and
/// its gradient.
fn objective_and_grad(x: &Array2<f64>, y: &[usize], w: &Array2<f64>, l2: f64) -> (f64, Array2<f64>) {
    let n = x.nrows() as f64;
    let mut probs = x.dot(w);
    let mut loss = 0.0;
    for (mut row, &label) in probs.axis_iter_mut(Axis(0)).zip(y) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        loss -= (row[label] / total).ln();
        row /= total;
    }
    for (mut row, &label) in probs.axis_iter_mut(Axis(0)).zip(y) {
        row[label] -= 1.0;
    }
    let mut grad = x.t().dot(&probs) / n;
    let body = w.nrows() - 1;
    let penalty = w.slice(s![..body, ..]).iter().map(|v| v * v).sum::<f64>();
    grad.slice_mut(s![..body, ..]).scaled_add(l2, &w.slice(s![..body, ..]));
    (loss / n + 0.5 * l2 * penalty, grad)
}

fn inf_norm(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Fits on the rows in `train_idx` by full-batch gradient descent with a
/// Barzilai-Borwein trial step and Armijo backtracking, starting from zero.
///
/// Hitting `max_iter` is not an error: the fit is returned with
/// `converged = false` and the final gradient norm.
pub fn fit_logistic(
    emb: ArrayView2<'_, f64>,
    labels: &[usize],
    num_classes: usize,
    train_idx: &[usize],
    l2: f64,
    max_iter: usize,
) -> Result<LogisticFit> {
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(GcaError::InvalidConfig(format!("l2 = {l2} must be non-negative")));
    }
    if num_classes == 0 || train_idx.is_empty() {
        return Err(GcaError::InvalidSplit("empty training set or no classes".into()));
    }
    if labels.len() != emb.nrows() {
        return Err(GcaError::Shape(format!(
            "{} labels for {} embeddings",
            labels.len(),
            emb.nrows()
        )));
    }
    let mut y = Vec::with_capacity(train_idx.len());
    for &i in train_idx {
        let label = *labels.get(i).ok_or_else(|| {
            GcaError::InvalidSplit(format!("training index {i} out of range"))
        })?;
        if label >= num_classes {
            return Err(GcaError::InvalidSplit(format!("label {label} at node {i} >= {num_classes}")));
        }
        y.push(label);
    }
    if emb.iter().any(|v| !v.is_finite()) {
        return Err(GcaError::NonFinite("probe embeddings".into()));
    }
    let x = with_bias(emb, train_idx);
    let mut w = Array2::<f64>::zeros((x.ncols(), num_classes));
    let (mut obj, mut grad) = objective_and_grad(&x, &y, &w, l2);
    let mut step = 1.0;
    let mut prev: Option<(Array2<f64>, Array2<f64>)> = None;
    let mut iterations = 0;
    while iterations < max_iter && inf_norm(&grad) >= GRAD_TOL {
        if let Some((dw, dg)) = &prev {
            let sy: f64 = (dw * dg).sum();
            let ss: f64 = dw.iter().map(|v| v * v).sum();
            if sy > 1e-300 {
                step = (ss / sy).clamp(1e-10, 1e10);
            }
        }
        let g_sq: f64 = grad.iter().map(|v| v * v).sum();
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &w - &(step * &grad);
            let (trial_obj, trial_grad) = objective_and_grad(&x, &y, &trial, l2);
            if trial_obj.is_finite() && trial_obj <= obj - 1e-4 * step * g_sq {
                accepted = Some((trial, trial_obj, trial_grad));
                break;
            }
            step *= 0.5;
        }
        let Some((next_w, next_obj, next_grad)) = accepted else {
            break;
        };
        prev = Some((&next_w - &w, &next_grad - &grad));
        w = next_w;
        obj = next_obj;
        grad = next_grad;
        iterations += 1;
    }
    let grad_norm = inf_norm(&grad);
    let converged = grad_norm < GRAD_TOL;
    if !converged {
        log::debug!("logistic probe stopped after {iterations} iterations, gradient norm {grad_norm:.3e}");
    }
    Ok(LogisticFit {
        weights: w,
        converged,
        grad_norm,
        iterations,
        objective: obj,
    })
}

/// Regularized objective of `weights` on the given rows.
pub fn logistic_objective(
    emb: ArrayView2<'_, f64>,
    labels: &[usize],
    idx: &[usize],
    weights: &Array2<f64>,
    l2: f64,
) -> f64 {
    let x = with_bias(emb, idx);
    let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    objective_and_grad(&x, &y, weights, l2).0
}

/// Arg-max class per requested row; ties go to the lowest class index.
pub fn predict(emb: ArrayView2<'_, f64>, weights: &Array2<f64>, rows: &[usize]) -> Vec<usize> {
    let scores = with_bias(emb, rows).dot(weights);
    scores
        .axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                .0
        })
        .collect()
}

pub fn accuracy(emb: ArrayView2<'_, f64>, weights: &Array2<f64>, labels: &[usize], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let correct = predict(emb, weights, rows)
        .iter()
        .zip(rows)
        .filter(|(p, &i)| **p == labels[i])
        .count();
    correct as f64 / rows.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub n_runs: usize,
    pub split_seed_base: u64,
    pub l2_grid: Vec<f64>,
    pub max_iter: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            n_runs: DEFAULT_RUNS,
            split_seed_base: 0,
            l2_grid: DEFAULT_L2_GRID.to_vec(),
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Outcome of one split: the selected strength and its test accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub l2: f64,
    pub val_accuracy: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub runs: Vec<RunResult>,
    pub mean: f64,
    /// Population standard deviation of the per-run accuracies.
    pub std: f64,
}

impl ProbeResult {
    pub fn from_runs(runs: Vec<RunResult>) -> Self {
        let n = runs.len().max(1) as f64;
        let mean = runs.iter().map(|r| r.accuracy).sum::<f64>() / n;
        let var = runs.iter().map(|r| (r.accuracy - mean).powi(2)).sum::<f64>() / n;
        Self {
            runs,
            mean,
            std: var.sqrt(),
        }
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.accuracy).collect()
    }

    /// Writes `run,seed,l2,accuracy` rows and a final `mean±std` line.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "run\tseed\tl2\taccuracy")?;
        for (i, r) in self.runs.iter().enumerate() {
            writeln!(out, "{i}\t{}\t{}\t{:.6}", r.seed, r.l2, r.accuracy)?;
        }
        writeln!(out, "# mean±std\t{:.4}±{:.4}", self.mean, self.std)
    }
}

/// Chooses `l2` from `grid` by validation accuracy (first best wins) and
/// reports the test accuracy of that fit.
pub fn evaluate_split(
    emb: ArrayView2<'_, f64>,
    labels: &[usize],
    num_classes: usize,
    split: &Split,
    grid: &[f64],
    max_iter: usize,
) -> Result<(f64, f64, f64)> {
    split.validate(emb.nrows())?;
    if grid.is_empty() {
        return Err(GcaError::InvalidConfig("empty l2 grid".into()));
    }
    let mut best: Option<(f64, f64, Array2<f64>)> = None;
    for &l2 in grid {
        let fit = fit_logistic(emb, labels, num_classes, &split.train, l2, max_iter)?;
        let val = accuracy(emb, &fit.weights, labels, &split.val);
        if best.as_ref().is_none_or(|b| val > b.1) {
            best = Some((l2, val, fit.weights));
        }
    }
    let (l2, val, weights) = best.expect("grid is non-empty");
    Ok((l2, val, accuracy(emb, &weights, labels, &split.test)))
}

/// Runs the probe `config.n_runs` times. Run `r` uses the stored split
/// `r mod len` when `stored` is non-empty, otherwise a fresh random split
/// seeded with `split_seed_base + r`.
pub fn evaluate(
    emb: ArrayView2<'_, f64>,
    labels: &[usize],
    num_classes: usize,
    stored: Option<&[Split]>,
    config: &ProbeConfig,
) -> Result<ProbeResult> {
    if config.n_runs == 0 {
        return Err(GcaError::InvalidConfig("at least one probe run is required".into()));
    }
    if labels.len() != emb.nrows() {
        return Err(GcaError::Shape(format!(
            "{} labels for {} embeddings",
            labels.len(),
            emb.nrows()
        )));
    }
    let stored = stored.filter(|s| !s.is_empty());
    let runs = (0..config.n_runs)
        .into_par_iter()
        .map(|r| {
            let seed = config.split_seed_base + r as u64;
            let split = match stored {
                Some(splits) => splits[r % splits.len()].clone(),
                None => random_split(emb.nrows(), seed)?,
            };
            let (l2, val_accuracy, accuracy) =
                evaluate_split(emb, labels, num_classes, &split, &config.l2_grid, config.max_iter)?;
            Ok(RunResult {
                seed,
                l2,
                val_accuracy,
                accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeResult::from_runs(runs))
}

/// One-hot encoding of `labels`.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), num_classes));
    for (i, &c) in labels.iter().enumerate() {
        out[[i, c]] = 1.0;
    }
    out
}

/// Per-class frequency of `labels` over `rows`.
pub fn class_frequencies(labels: &[usize], num_classes: usize, rows: &[usize]) -> Array1<f64> {
    let mut out = Array1::zeros(num_classes);
    for &i in rows {
        out[labels[i]] += 1.0;
    }
    out / rows.len().max(1) as f64
}
