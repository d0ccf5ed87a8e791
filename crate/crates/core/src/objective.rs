//! The two-view contrastive objective, its gradient with respect to the
//! projected embeddings, and the estimators used to check its relationship to
//! InfoNCE and to a triplet loss.
//!
//! For anchor `u_i` the positive is `v_i`; negatives are every other row of
//! both views:
//!
//! ```text
//! l(u_i, v_i) = log  e^{θ(u_i,v_i)/τ} / ( Σ_k e^{θ(u_i,v_k)/τ} + Σ_{k≠i} e^{θ(u_i,u_k)/τ} )
//! J = 1/(2N) Σ_i [ l(u_i, v_i) + l(v_i, u_i) ]
//! ```
//!
//! with `θ` the cosine similarity. `J` is maximized during training.

use std::io::Write;

use ndarray::{Array1, Array2, Axis};

use crate::error::{GcaError, Result};

/// Objective value and gradients of `J` w.r.t. both projected views.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub objective: f64,
    pub grad_u: Array2<f64>,
    pub grad_v: Array2<f64>,
    pub tau: f64,
}

fn check_inputs(z_u: &Array2<f64>, z_v: &Array2<f64>, tau: f64) -> Result<()> {
    if z_u.dim() != z_v.dim() {
        return Err(GcaError::Shape(format!("views {:?} vs {:?}", z_u.dim(), z_v.dim())));
    }
    if z_u.nrows() == 0 {
        return Err(GcaError::Shape("empty batch".into()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(GcaError::InvalidConfig(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// Row-normalizes `z` by `max(‖z_i‖, floor)`, returning the unit rows and
/// the divisors. With `floor == 0` a zero row is an error.
fn normalize_rows(z: &Array2<f64>, which: &'static str, floor: f64) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms = z.map_axis(Axis(1), |row| row.dot(&row).sqrt());
    if let Some(row) = norms.iter().position(|&n| (n == 0.0 && floor == 0.0) || !n.is_finite()) {
        return Err(GcaError::ZeroNormRow { which, row });
    }
    let divisors = norms.mapv(|n| n.max(floor));
    let unit = z / &divisors.view().insert_axis(Axis(1));
    Ok((unit, divisors))
}

/// Back-propagates `d` (gradient w.r.t. unit rows) through row normalization.
/// Rows whose norm was below the floor were scaled linearly.
fn normalize_backward(unit: &Array2<f64>, divisors: &Array1<f64>, floor: f64, d: &Array2<f64>) -> Array2<f64> {
    let mut out = d / &divisors.view().insert_axis(Axis(1));
    for (i, mut row) in out.outer_iter_mut().enumerate() {
        let u = unit.row(i);
        let norm = divisors[i] * u.dot(&u).sqrt();
        if norm >= floor {
            let radial = u.dot(&d.row(i));
            row.scaled_add(-radial / divisors[i], &u);
        }
    }
    out
}

/// Cosine similarity matrix `û_i · v̂_j / τ`.
fn scaled_cosines(z_u: &Array2<f64>, z_v: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    let (u, _) = normalize_rows(z_u, "first view", 0.0)?;
    let (v, _) = normalize_rows(z_v, "second view", 0.0)?;
    Ok(u.dot(&v.t()) / tau)
}

/// Computes `J` and its exact gradients. Zero rows are rejected.
pub fn contrastive_objective(z_u: &Array2<f64>, z_v: &Array2<f64>, tau: f64) -> Result<LossReport> {
    contrastive_objective_floored(z_u, z_v, tau, 0.0)
}

/// Like [`contrastive_objective`], but rows are divided by
/// `max(‖z_i‖, norm_floor)` so an all-zero row has zero similarity to
/// everything instead of failing.
pub fn contrastive_objective_floored(
    z_u: &Array2<f64>,
    z_v: &Array2<f64>,
    tau: f64,
    norm_floor: f64,
) -> Result<LossReport> {
    check_inputs(z_u, z_v, tau)?;
    if !(norm_floor >= 0.0 && norm_floor.is_finite()) {
        return Err(GcaError::InvalidConfig(format!("norm floor must be non-negative, got {norm_floor}")));
    }
    let n = z_u.nrows();
    let (u, u_norms) = normalize_rows(z_u, "first view", norm_floor)?;
    let (v, v_norms) = normalize_rows(z_v, "second view", norm_floor)?;

    let between = u.dot(&v.t()) / tau; // B_ik = θ(u_i, v_k)/τ
    let within_u = u.dot(&u.t()) / tau;
    let within_v = v.dot(&v.t()) / tau;
    // Every similarity is at most 1/τ; shifting by it keeps exp() bounded.
    let shift = 1.0 / tau;
    let e_between = between.mapv(|b| (b - shift).exp());
    let mut e_u = within_u.mapv(|b| (b - shift).exp());
    let mut e_v = within_v.mapv(|b| (b - shift).exp());
    e_u.diag_mut().fill(0.0);
    e_v.diag_mut().fill(0.0);

    // Denominators for anchors in U (rows of B) and in V (columns of B). Both
    // sides accumulate in the same order so that swapping the views gives a
    // bit-identical objective.
    let e_between_t = e_between.t().as_standard_layout().into_owned();
    let denominators = |between: &Array2<f64>, within: &Array2<f64>| -> Array1<f64> {
        Array1::from_shape_fn(n, |i| {
            let mut acc = 0.0;
            for &x in between.row(i) {
                acc += x;
            }
            for &x in within.row(i) {
                acc += x;
            }
            acc
        })
    };
    let denom_u = denominators(&e_between, &e_u);
    let denom_v = denominators(&e_between_t, &e_v);

    let mut total = 0.0;
    for i in 0..n {
        let pos = between[[i, i]] - shift;
        total += (pos - denom_u[i].ln()) + (pos - denom_v[i].ln());
    }
    let scale = 1.0 / (2.0 * n as f64);
    let objective = total * scale;

    // dJ/dB: (I - A) + (I - C)^T with A_ik = e^{B_ik}/D^u_i, C_ik = e^{B_ki}/D^v_i.
    let mut g_between = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for k in 0..n {
            let a = e_between[[i, k]] / denom_u[i];
            let c = e_between[[i, k]] / denom_v[k];
            g_between[[i, k]] = -(a + c);
        }
        g_between[[i, i]] += 2.0;
    }
    g_between *= scale;
    // dJ/dR^u_ik = -e^{R^u_ik}/D^u_i (diagonal already zero)
    let g_u = -(&e_u / &denom_u.view().insert_axis(Axis(1))) * scale;
    let g_v = -(&e_v / &denom_v.view().insert_axis(Axis(1))) * scale;

    let d_unit_u = (g_between.dot(&v) + (&g_u + &g_u.t()).dot(&u)) / tau;
    let d_unit_v = (g_between.t().dot(&u) + (&g_v + &g_v.t()).dot(&v)) / tau;

    Ok(LossReport {
        objective,
        grad_u: normalize_backward(&u, &u_norms, norm_floor, &d_unit_u),
        grad_v: normalize_backward(&v, &v_norms, norm_floor, &d_unit_v),
        tau,
    })
}

/// Single-direction InfoNCE estimate with the same cosine critic:
/// `1/N Σ_i log( e^{θ_ii/τ} / (1/N Σ_j e^{θ_ij/τ}) )`.
pub fn infonce_estimate(z_u: &Array2<f64>, z_v: &Array2<f64>, tau: f64) -> Result<f64> {
    check_inputs(z_u, z_v, tau)?;
    let n = z_u.nrows() as f64;
    let b = scaled_cosines(z_u, z_v, tau)?;
    let shift = 1.0 / tau;
    let mut total = 0.0;
    for (i, row) in b.outer_iter().enumerate() {
        let mean_exp = row.iter().map(|&x| (x - shift).exp()).sum::<f64>() / n;
        total += (row[i] - shift) - mean_exp.ln();
    }
    Ok(total / n)
}

/// Per-anchor triplet surrogate paired with the per-anchor `-l(u_i, v_i)`
/// under an inner-product critic on unit-norm rows.
#[derive(Debug, Clone)]
pub struct TripletReport {
    /// `4Nτ + Σ_{j≠i} [(‖u_i−v_i‖² − ‖u_i−v_j‖²) + (‖u_i−v_i‖² − ‖u_i−u_j‖²)]`
    pub surrogate: Vec<f64>,
    /// `-l(u_i, v_i)` with `θ(u, v) = uᵀv`.
    pub neg_pair_loss: Vec<f64>,
}

pub const UNIT_NORM_TOL: f64 = 1e-8;

/// Triplet-loss surrogate for each anchor. Rows must be unit-normalized.
pub fn triplet_surrogate(z_u: &Array2<f64>, z_v: &Array2<f64>, tau: f64) -> Result<TripletReport> {
    check_inputs(z_u, z_v, tau)?;
    for (which, z) in [("first view", z_u), ("second view", z_v)] {
        for (row, r) in z.outer_iter().enumerate() {
            let norm = r.dot(&r).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(GcaError::NotNormalized { which, row, norm });
            }
        }
    }
    let n = z_u.nrows();
    let uv = z_u.dot(&z_v.t());
    let uu = z_u.dot(&z_u.t());
    let sq = |dot: f64| 2.0 - 2.0 * dot; // ‖a−b‖² for unit vectors
    let mut surrogate = Vec::with_capacity(n);
    let mut neg_pair_loss = Vec::with_capacity(n);
    for i in 0..n {
        let pos = sq(uv[[i, i]]);
        let mut bracket = 0.0;
        let mut denom = 0.0;
        for j in 0..n {
            denom += ((uv[[i, j]] - uv[[i, i]]) / tau).exp();
            if j != i {
                bracket += (pos - sq(uv[[i, j]])) + (pos - sq(uu[[i, j]]));
                denom += ((uu[[i, j]] - uv[[i, i]]) / tau).exp();
            }
        }
        surrogate.push(4.0 * n as f64 * tau + bracket);
        neg_pair_loss.push(denom.ln());
    }
    Ok(TripletReport {
        surrogate,
        neg_pair_loss,
    })
}

/// Writes the three `N×N` scaled similarity matrices (between views, within
/// the first, within the second) as tab-separated blocks.
pub fn write_similarity_tsv<W: Write>(
    z_u: &Array2<f64>,
    z_v: &Array2<f64>,
    tau: f64,
    mut out: W,
) -> Result<()> {
    check_inputs(z_u, z_v, tau)?;
    let io = |e: std::io::Error| GcaError::Io {
        path: "<similarity dump>".into(),
        source: e,
    };
    for (name, a, b) in [("between", z_u, z_v), ("within_u", z_u, z_u), ("within_v", z_v, z_v)] {
        let m = scaled_cosines(a, b, tau)?;
        writeln!(out, "# {name}").map_err(io)?;
        for row in m.outer_iter() {
            let line: Vec<String> = row.iter().map(|x| format!("{x:.6}")).collect();
            writeln!(out, "{}", line.join("\t")).map_err(io)?;
        }
    }
    Ok(())
}
