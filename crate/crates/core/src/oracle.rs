//! Independent reference implementations used to verify the optimized code
//! paths: central finite differences, a literal double-loop objective, a dense
//! Jacobi eigensolver and a stochastic block model generator.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{GcaError, Result};
use crate::graph::Graph;

pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// Central-difference gradient of `f` at `point`.
pub fn finite_diff<F>(f: F, point: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let plus = f(&x);
        x[i] = orig - eps;
        let minus = f(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(GcaError::NonFinite(format!("finite difference at coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// The contrastive objective computed term by term with explicit loops.
pub fn naive_loss(z_u: &Array2<f64>, z_v: &Array2<f64>, tau: f64) -> Result<f64> {
    let n = z_u.nrows();
    if z_v.dim() != z_u.dim() || n == 0 {
        return Err(GcaError::Shape("views must be non-empty and equally shaped".into()));
    }
    let rows = |z: &Array2<f64>, which: &'static str| -> Result<Vec<Vec<f64>>> {
        z.outer_iter()
            .enumerate()
            .map(|(row, r)| {
                if r.iter().all(|&x| x == 0.0) {
                    Err(GcaError::ZeroNormRow { which, row })
                } else {
                    Ok(r.to_vec())
                }
            })
            .collect()
    };
    let u = rows(z_u, "first view")?;
    let v = rows(z_v, "second view")?;
    let pair_loss = |anchor: &[Vec<f64>], other: &[Vec<f64>], i: usize| -> f64 {
        let pos = (cosine(&anchor[i], &other[i]) / tau).exp();
        let mut denom = pos;
        for k in 0..n {
            if k != i {
                denom += (cosine(&anchor[i], &other[k]) / tau).exp();
                denom += (cosine(&anchor[i], &anchor[k]) / tau).exp();
            }
        }
        (pos / denom).ln()
    };
    let mut total = 0.0;
    for i in 0..n {
        total += pair_loss(&u, &v, i) + pair_loss(&v, &u, i);
    }
    Ok(total / (2.0 * n as f64))
}

/// Leading eigenpair of a small symmetric matrix.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Array1<f64>,
}

/// Cyclic Jacobi rotations on a symmetric matrix; returns the largest
/// eigenvalue and its unit eigenvector, signed so that its entries sum to a
/// non-negative value.
pub fn dense_eigen(matrix: &Array2<f64>) -> Result<Eigenpair> {
    let n = matrix.nrows();
    if matrix.ncols() != n || n == 0 || n > 64 {
        return Err(GcaError::Shape(format!("dense_eigen needs square 1..=64, got {:?}", matrix.dim())));
    }
    let mut a = matrix.clone();
    let mut vecs = Array2::<f64>::eye(n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[[p, q]] * a[[p, q]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = vecs[[k, p]];
                    let vkq = vecs[[k, q]];
                    vecs[[k, p]] = c * vkp - s * vkq;
                    vecs[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let (best, value) = (0..n)
        .map(|i| (i, a[[i, i]]))
        .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    let mut vector = vecs.column(best).to_owned();
    let norm = vector.dot(&vector).sqrt();
    vector /= norm;
    if vector.sum() < 0.0 {
        vector.mapv_inplace(|x| -x);
    }
    Ok(Eigenpair { value, vector })
}

/// Stochastic block model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmConfig {
    pub n_per_block: usize,
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Probability of flipping each feature bit.
    pub feature_noise: f64,
}

/// Generates an undirected SBM with labels equal to block ids. Features are
/// the one-hot block indicator tiled across `feature_dim` columns (column `j`
/// indicates block `j mod blocks`) with independent bit flips.
pub fn sbm_generate<R: Rng + ?Sized>(config: &SbmConfig, rng: &mut R) -> Result<Graph> {
    let SbmConfig {
        n_per_block,
        blocks,
        p_in,
        p_out,
        feature_dim,
        feature_noise,
    } = *config;
    if p_in <= p_out {
        return Err(GcaError::InvalidConfig(format!("p_in {p_in} must exceed p_out {p_out}")));
    }
    for p in [p_in, p_out, feature_noise] {
        if !(0.0..=1.0).contains(&p) {
            return Err(GcaError::InvalidConfig(format!("probability {p} outside [0, 1]")));
        }
    }
    if blocks == 0 || n_per_block == 0 || feature_dim == 0 {
        return Err(GcaError::InvalidConfig("SBM dimensions must be positive".into()));
    }
    let n = n_per_block * blocks;
    let labels: Vec<usize> = (0..n).map(|i| i / n_per_block).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let mut features = Array2::<f32>::zeros((n, feature_dim));
    for u in 0..n {
        for j in 0..feature_dim {
            let bit = j % blocks == labels[u];
            let flip = rng.random::<f64>() < feature_noise;
            features[[u, j]] = if bit ^ flip { 1.0 } else { 0.0 };
        }
    }
    Graph::from_edges(n, &edges, false, features, Some(labels), Some(blocks))
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman inputs differ in length");
    let ra = ranks(a);
    let rb = ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn finite_diff_quadratic_and_linear() {
        let x = [0.3, -1.2, 2.5];
        let g = finite_diff(|p| p.iter().map(|v| v * v).sum::<f64>() / 2.0, &x, DEFAULT_FD_EPS).unwrap();
        for (a, b) in g.iter().zip(&x) {
            assert!((a - b).abs() < 1e-9);
        }
        let g = finite_diff(|p| 2.0 * p[0] - 3.0 * p[1] + p[2], &x, DEFAULT_FD_EPS).unwrap();
        for (a, b) in g.iter().zip(&[2.0, -3.0, 1.0]) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(finite_diff(|p| 1.0 / p[0], &[0.0], 1e-5).is_ok());
        assert!(finite_diff(|p| (p[0] - 1e-5).ln(), &[0.0], 1e-5).is_err());
    }

    #[test]
    fn naive_loss_single_row_and_zero_row() {
        let one = Array2::from_shape_vec((1, 2), vec![1.0, 2.0]).unwrap();
        assert!(naive_loss(&one, &one, 0.5).unwrap().abs() < 1e-15);
        let zero = Array2::zeros((1, 2));
        assert!(naive_loss(&zero, &one, 0.5).is_err());
    }

    #[test]
    fn eigen_examples() {
        let id = Array2::<f64>::eye(3);
        let e = dense_eigen(&id).unwrap();
        assert!((e.value - 1.0).abs() < 1e-12);
        assert!((id.dot(&e.vector) - &e.vector).iter().all(|r| r.abs() < 1e-12));

        let k4 = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 0.0 } else { 1.0 });
        let e = dense_eigen(&k4).unwrap();
        assert!((e.value - 3.0).abs() < 1e-10);
        assert!(e.vector.iter().all(|v| (v - 0.5).abs() < 1e-10));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = Array2::from_shape_simple_fn((8, 8), || rng.random_range(-1.0..1.0));
        let sym = &r + &r.t();
        let e = dense_eigen(&sym).unwrap();
        let res = sym.dot(&e.vector) - &e.vector * e.value;
        assert!(res.dot(&res).sqrt() < 1e-8);
    }

    #[test]
    fn sbm_block_diagonal_without_cross_edges() {
        let cfg = SbmConfig {
            n_per_block: 20,
            blocks: 3,
            p_in: 0.3,
            p_out: 0.0,
            feature_dim: 6,
            feature_noise: 0.1,
        };
        let g = sbm_generate(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let labels = g.labels().unwrap();
        assert_eq!(labels[25], 1);
        assert!(g.arcs().all(|(u, v)| labels[u] == labels[v]));
        assert!(g.binary_features());
        assert!(sbm_generate(&SbmConfig { p_in: 0.1, p_out: 0.2, ..cfg }, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn spearman_basic() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 1.0, 2.0], &[1.0, 1.0, 2.0]) - 1.0).abs() < 1e-15);
    }
}
