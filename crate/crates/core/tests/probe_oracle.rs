//! The gradient-descent probe against an independent damped Newton solver
//! for the same regularized objective.

use gca::graph::random_split;
use gca::probe::{accuracy, fit_logistic, logistic_objective};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blobs(seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [[0.0, 2.0], [-1.8, -1.0], [1.8, -1.0]];
    let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
    let emb = Array2::from_shape_fn((300, 2), |(i, k)| {
        // Box-Muller normal noise
        let (a, b): (f64, f64) = (rng.random_range(1e-12..1.0), rng.random());
        centers[labels[i]][k] + 1.2 * (-2.0 * a.ln()).sqrt() * (std::f64::consts::TAU * b).cos()
    });
    (emb, labels)
}

/// Mean softmax cross-entropy + (l2/2)‖W_body‖², minimized by Newton steps
/// with a pseudo-inverse (the objective is flat along a shared bias shift).
fn newton_reference(emb: &Array2<f64>, labels: &[usize], rows: &[usize], classes: usize, l2: f64) -> Array2<f64> {
    let f = emb.ncols() + 1;
    let dim = f * classes;
    let n = rows.len() as f64;
    let sample = |i: usize| -> Vec<f64> {
        let mut x: Vec<f64> = emb.row(i).to_vec();
        x.push(1.0);
        x
    };
    let objective = |w: &DVector<f64>| -> f64 {
        let mut total = 0.0;
        for &i in rows {
            let x = sample(i);
            let logits: Vec<f64> = (0..classes).map(|c| (0..f).map(|j| x[j] * w[j * classes + c]).sum()).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            total += lse - logits[labels[i]];
        }
        let penalty: f64 = (0..(f - 1) * classes).map(|k| w[k] * w[k]).sum();
        total / n + 0.5 * l2 * penalty
    };
    let mut w = DVector::<f64>::zeros(dim);
    for _ in 0..100 {
        let mut grad = DVector::<f64>::zeros(dim);
        let mut hess = DMatrix::<f64>::zeros(dim, dim);
        for &i in rows {
            let x = sample(i);
            let logits: Vec<f64> = (0..classes).map(|c| (0..f).map(|j| x[j] * w[j * classes + c]).sum()).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let p: Vec<f64> = exps.iter().map(|e| e / z).collect();
            for j in 0..f {
                for c in 0..classes {
                    let y = f64::from(u8::from(labels[i] == c));
                    grad[j * classes + c] += x[j] * (p[c] - y) / n;
                    for k in 0..f {
                        for d in 0..classes {
                            let delta = f64::from(u8::from(c == d));
                            hess[(j * classes + c, k * classes + d)] += x[j] * x[k] * p[c] * (delta - p[d]) / n;
                        }
                    }
                }
            }
        }
        for k in 0..(f - 1) * classes {
            grad[k] += l2 * w[k];
            hess[(k, k)] += l2;
        }
        if grad.amax() < 1e-12 {
            break;
        }
        let step = hess.svd(true, true).solve(&grad, 1e-12).expect("svd solve");
        let current = objective(&w);
        let mut t = 1.0;
        while objective(&(&w - &step * t)) > current && t > 1e-8 {
            t *= 0.5;
        }
        w -= step * t;
    }
    Array2::from_shape_fn((f, classes), |(j, c)| w[j * classes + c])
}

#[test]
fn matches_independent_newton_solver() {
    for seed in 0..3 {
        let (emb, labels) = blobs(seed);
        let split = random_split(300, seed).unwrap();
        let train: Vec<usize> = split.train.iter().chain(&split.val).copied().collect();
        for l2 in [1e-3, 1e-1] {
            let ours = fit_logistic(emb.view(), &labels, 3, &train, l2, 5000).unwrap();
            assert!(ours.converged, "seed {seed} l2 {l2}: gradient {}", ours.grad_norm);
            let reference = newton_reference(&emb, &labels, &train, 3, l2);
            let ref_obj = logistic_objective(emb.view(), &labels, &train, &reference, l2);
            assert!(ours.objective <= ref_obj + 1e-9, "{} vs {ref_obj}", ours.objective);
            assert!((ours.objective - ref_obj).abs() < 1e-9);
            let a = accuracy(emb.view(), &ours.weights, &labels, &split.test);
            let b = accuracy(emb.view(), &reference, &labels, &split.test);
            assert!((a - b).abs() <= 0.02, "seed {seed} l2 {l2}: {a} vs {b}");
            assert!(a > 0.6, "blobs should be learnable, got {a}");
        }
    }
}
