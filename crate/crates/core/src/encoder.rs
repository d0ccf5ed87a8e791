//! Two-layer GCN encoder `f` and two-layer MLP projector `g`, with exact
//! reverse-mode gradients for this fixed architecture.
//!
//! Row-vector convention throughout: for a view with propagation operator `S`
//! and features `X`,
//!
//! ```text
//! A1 = S X W1     H1 = act(A1)
//! A2 = S H1 W2    H  = act(A2)        (embeddings)
//! P  = H G1 + b1  Q  = relu(P)
//! Z  = Q G2 + b2                      (projected embeddings)
//! ```

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{GcaError, Result};
use crate::graph::NormAdjacency;

/// Slope used for randomized-leaky configurations: the midpoint of the
/// conventional `[1/8, 1/3]` range.
pub const RRELU_MIDPOINT_SLOPE: f64 = (1.0 / 8.0 + 1.0 / 3.0) / 2.0;
pub const PRELU_INIT_SLOPE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// Leaky ReLU with one learnable slope per GCN layer.
    Prelu,
    /// Leaky ReLU with a fixed negative slope.
    Leaky(f64),
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Relu => f.write_str("relu"),
            Self::Prelu => f.write_str("prelu"),
            Self::Leaky(slope) => write!(f, "leaky:{slope}"),
        }
    }
}

impl FromStr for Activation {
    type Err = GcaError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "relu" => Ok(Self::Relu),
            "prelu" => Ok(Self::Prelu),
            "rrelu" => Ok(Self::Leaky(RRELU_MIDPOINT_SLOPE)),
            _ => {
                let slope = lower
                    .strip_prefix("leaky:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        GcaError::InvalidConfig(format!(
                            "unknown activation {s:?} (expected relu, prelu, rrelu or leaky:<slope>)"
                        ))
                    })?;
                Ok(Self::Leaky(slope))
            }
        }
    }
}

/// Encoder and projector parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub activation: Activation,
    /// Learnable negative slopes for the two GCN layers; ignored unless the
    /// activation is [`Activation::Prelu`].
    pub prelu_slopes: [f64; 2],
    pub g1: Array2<f64>,
    pub b1: Array1<f64>,
    pub g2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Gradients laid out like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub prelu_slopes: [f64; 2],
    pub g1: Array2<f64>,
    pub b1: Array1<f64>,
    pub g2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Uniform Glorot initialization on `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    assert!(fan_in > 0 && fan_out > 0, "glorot_init needs positive dimensions");
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..=bound))
}

impl ModelParams {
    /// Glorot-initialized weights, zero biases, PReLU slopes at 0.25.
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let w1 = glorot_init(in_dim, hidden, rng);
        let w2 = glorot_init(hidden, out_dim, rng);
        let g1 = glorot_init(out_dim, out_dim, rng);
        let g2 = glorot_init(out_dim, out_dim, rng);
        Self {
            w1,
            w2,
            activation,
            prelu_slopes: [PRELU_INIT_SLOPE; 2],
            g1,
            b1: Array1::zeros(out_dim),
            g2,
            b2: Array1::zeros(out_dim),
        }
    }

    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            w1: Array2::zeros((in_dim, hidden)),
            w2: Array2::zeros((hidden, out_dim)),
            activation,
            prelu_slopes: [PRELU_INIT_SLOPE; 2],
            g1: Array2::zeros((out_dim, out_dim)),
            b1: Array1::zeros(out_dim),
            g2: Array2::zeros((out_dim, out_dim)),
            b2: Array1::zeros(out_dim),
        }
    }

    /// `(input features, hidden width, output width)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w1.nrows(), self.w1.ncols(), self.w2.ncols())
    }

    fn slope(&self, layer: usize) -> f64 {
        match self.activation {
            Activation::Relu => 0.0,
            Activation::Prelu => self.prelu_slopes[layer],
            Activation::Leaky(s) => s,
        }
    }

    fn check_shapes(&self) -> Result<()> {
        let (f, h, o) = self.dims();
        let ok = self.w2.nrows() == h
            && self.g1.dim() == (o, o)
            && self.g2.dim() == (o, o)
            && self.b1.len() == o
            && self.b2.len() == o;
        if ok && f > 0 && h > 0 && o > 0 {
            Ok(())
        } else {
            Err(GcaError::Shape("inconsistent model parameter shapes".into()))
        }
    }

    /// Mutable parameter blocks paired with whether weight decay applies.
    /// Order matches [`ParamGrads::blocks`].
    pub fn blocks_mut(&mut self) -> [(&mut [f64], bool); 7] {
        [
            (self.w1.as_slice_mut().expect("standard layout"), true),
            (self.w2.as_slice_mut().expect("standard layout"), true),
            (&mut self.prelu_slopes[..], false),
            (self.g1.as_slice_mut().expect("standard layout"), true),
            (self.b1.as_slice_mut().expect("standard layout"), false),
            (self.g2.as_slice_mut().expect("standard layout"), true),
            (self.b2.as_slice_mut().expect("standard layout"), false),
        ]
    }

    pub fn blocks(&self) -> [&[f64]; 7] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            &self.prelu_slopes[..],
            self.g1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.g2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
    }

    /// All parameters flattened in block order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().into_iter().flatten().copied().collect()
    }

    /// Inverse of [`ModelParams::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for (block, _) in self.blocks_mut() {
            let len = block.len();
            block.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    pub fn num_values(&self) -> usize {
        self.w1.len() + self.w2.len() + 2 + self.g1.len() + self.b1.len() + self.g2.len() + self.b2.len()
    }
}

impl ParamGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            w1: Array2::zeros(params.w1.raw_dim()),
            w2: Array2::zeros(params.w2.raw_dim()),
            prelu_slopes: [0.0; 2],
            g1: Array2::zeros(params.g1.raw_dim()),
            b1: Array1::zeros(params.b1.raw_dim()),
            g2: Array2::zeros(params.g2.raw_dim()),
            b2: Array1::zeros(params.b2.raw_dim()),
        }
    }

    pub fn blocks(&self) -> [&[f64]; 7] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            &self.prelu_slopes[..],
            self.g1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.g2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().into_iter().flatten().copied().collect()
    }

    fn add_assign(&mut self, other: &ParamGrads) {
        self.w1 += &other.w1;
        self.w2 += &other.w2;
        self.prelu_slopes[0] += other.prelu_slopes[0];
        self.prelu_slopes[1] += other.prelu_slopes[1];
        self.g1 += &other.g1;
        self.b1 += &other.b1;
        self.g2 += &other.g2;
        self.b2 += &other.b2;
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Cached intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<'a> {
    s: &'a NormAdjacency,
    x: &'a Array2<f64>,
    a1: Array2<f64>,
    h1: Array2<f64>,
    a2: Array2<f64>,
    h2: Array2<f64>,
    projector: Option<(Array2<f64>, Array2<f64>)>,
}

impl ForwardTrace<'_> {
    /// Encoder output `H`.
    pub fn embeddings(&self) -> &Array2<f64> {
        &self.h2
    }
}

fn leaky(a: &Array2<f64>, slope: f64) -> Array2<f64> {
    a.mapv(|v| if v > 0.0 { v } else { slope * v })
}

fn ensure_finite(m: &Array2<f64>, layer: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GcaError::NonFinite(layer.into()))
    }
}

/// Runs the encoder: `H = act(S act(S X W1) W2)`.
pub fn encode<'a>(
    params: &ModelParams,
    s: &'a NormAdjacency,
    x: &'a Array2<f64>,
) -> Result<(Array2<f64>, ForwardTrace<'a>)> {
    params.check_shapes()?;
    if x.nrows() != s.dim() || x.ncols() != params.w1.nrows() {
        return Err(GcaError::Shape(format!(
            "features {:?} vs operator {} and W1 {:?}",
            x.dim(),
            s.dim(),
            params.w1.dim()
        )));
    }
    let a1 = s.matmul(x.dot(&params.w1).view());
    let h1 = leaky(&a1, params.slope(0));
    ensure_finite(&h1, "GCN layer 1")?;
    let a2 = s.matmul(h1.dot(&params.w2).view());
    let h2 = leaky(&a2, params.slope(1));
    ensure_finite(&h2, "GCN layer 2")?;
    let trace = ForwardTrace {
        s,
        x,
        a1,
        h1,
        a2,
        h2: h2.clone(),
        projector: None,
    };
    Ok((h2, trace))
}

fn projector_parts(params: &ModelParams, h: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let p = h.dot(&params.g1) + &params.b1;
    let q = p.mapv(|v| v.max(0.0));
    let z = q.dot(&params.g2) + &params.b2;
    (p, q, z)
}

/// Applies the projector `Z = relu(H G1 + b1) G2 + b2` row-wise.
pub fn project(params: &ModelParams, h: &Array2<f64>) -> Result<Array2<f64>> {
    if h.ncols() != params.g1.nrows() {
        return Err(GcaError::Shape(format!(
            "embedding width {} vs projector input {}",
            h.ncols(),
            params.g1.nrows()
        )));
    }
    Ok(projector_parts(params, h).2)
}

/// Encoder followed by projector, keeping everything needed by [`backward`].
pub fn forward<'a>(
    params: &ModelParams,
    s: &'a NormAdjacency,
    x: &'a Array2<f64>,
) -> Result<(Array2<f64>, ForwardTrace<'a>)> {
    let (h, mut trace) = encode(params, s, x)?;
    let (p, q, z) = projector_parts(params, &h);
    ensure_finite(&z, "projector")?;
    trace.projector = Some((p, q));
    Ok((z, trace))
}

fn backward_one(params: &ModelParams, trace: &ForwardTrace<'_>, dz: &Array2<f64>) -> Result<ParamGrads> {
    let (p, q) = trace
        .projector
        .as_ref()
        .ok_or_else(|| GcaError::Shape("trace lacks projector intermediates".into()))?;
    if dz.dim() != q.dim() {
        return Err(GcaError::Shape(format!(
            "upstream gradient {:?} vs projected output {:?}",
            dz.dim(),
            q.dim()
        )));
    }
    let mut grads = ParamGrads::zeros_like(params);

    grads.g2 = q.t().dot(dz);
    grads.b2 = dz.sum_axis(Axis(0));
    let mut dp = dz.dot(&params.g2.t());
    dp.zip_mut_with(p, |d, &pv| {
        if pv <= 0.0 {
            *d = 0.0
        }
    });
    grads.g1 = trace.h2.t().dot(&dp);
    grads.b1 = dp.sum_axis(Axis(0));
    let dh2 = dp.dot(&params.g1.t());

    let (da2, dslope2) = leaky_backward(&dh2, &trace.a2, params.slope(1));
    // A2 = S (H1 W2)
    let st_da2 = trace.s.transpose_matmul(da2.view());
    grads.w2 = trace.h1.t().dot(&st_da2);
    let dh1 = st_da2.dot(&params.w2.t());

    let (da1, dslope1) = leaky_backward(&dh1, &trace.a1, params.slope(0));
    // A1 = S (X W1)
    let st_da1 = trace.s.transpose_matmul(da1.view());
    grads.w1 = trace.x.t().dot(&st_da1);

    if params.activation == Activation::Prelu {
        grads.prelu_slopes = [dslope1, dslope2];
    }
    Ok(grads)
}

/// Gradient through a leaky unit: returns `dL/dA` and `dL/dslope`.
fn leaky_backward(dh: &Array2<f64>, a: &Array2<f64>, slope: f64) -> (Array2<f64>, f64) {
    let mut da = dh.clone();
    let mut dslope = 0.0;
    da.zip_mut_with(a, |d, &av| {
        if av <= 0.0 {
            dslope += *d * av;
            *d *= slope;
        }
    });
    (da, dslope)
}

/// Parameter gradients for a loss whose upstream gradients w.r.t. each view's
/// projected output are given. Per-view contributions are summed in the
/// order supplied.
pub fn backward(params: &ModelParams, views: &[(&ForwardTrace<'_>, &Array2<f64>)]) -> Result<ParamGrads> {
    let mut total = ParamGrads::zeros_like(params);
    for (trace, dz) in views {
        total.add_assign(&backward_one(params, trace, dz)?);
    }
    Ok(total)
}

/// Same as [`backward`] but computes the per-view terms in parallel; the sum
/// is still taken in view order, so results are bit-identical.
pub fn backward_par(params: &ModelParams, views: &[(&ForwardTrace<'_>, &Array2<f64>)]) -> Result<ParamGrads> {
    use rayon::prelude::*;
    let parts: Vec<Result<ParamGrads>> = views
        .par_iter()
        .map(|(trace, dz)| backward_one(params, trace, dz))
        .collect();
    let mut total = ParamGrads::zeros_like(params);
    for part in parts {
        total.add_assign(&part?);
    }
    Ok(total)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"GCAMODEL";
const CHECKPOINT_VERSION: u32 = 1;

/// Serializes parameters as: magic `GCAMODEL`, `u32` version, three `u64`
/// dimensions `(F, H, F')`, `u8` activation tag (0 relu, 1 prelu, 2 leaky),
/// `f64` fixed slope, two `f64` PReLU slopes, then `W1, W2, G1, b1, G2, b2`
/// row-major. Everything little-endian.
pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> std::io::Result<()> {
    let (f, h, o) = params.dims();
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for d in [f, h, o] {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    let (tag, fixed) = match params.activation {
        Activation::Relu => (0u8, 0.0),
        Activation::Prelu => (1u8, 0.0),
        Activation::Leaky(s) => (2u8, s),
    };
    out.write_all(&[tag])?;
    out.write_all(&fixed.to_le_bytes())?;
    for s in params.prelu_slopes {
        out.write_all(&s.to_le_bytes())?;
    }
    for block in [
        params.w1.as_slice(),
        params.w2.as_slice(),
        params.g1.as_slice(),
        params.b1.as_slice(),
        params.g2.as_slice(),
        params.b2.as_slice(),
    ] {
        for v in block.expect("standard layout") {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn take<const N: usize>(bytes: &[u8], pos: &mut usize) -> Result<[u8; N]> {
    let slice = bytes
        .get(*pos..*pos + N)
        .ok_or_else(|| GcaError::Checkpoint("truncated file".into()))?;
    *pos += N;
    Ok(slice.try_into().expect("length checked"))
}

/// Parses the format written by [`write_checkpoint`].
pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| GcaError::Checkpoint(e.to_string()))?;
    let mut pos = 0;
    if &take::<8>(&bytes, &mut pos)? != CHECKPOINT_MAGIC {
        return Err(GcaError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&bytes, &mut pos)?);
    if version != CHECKPOINT_VERSION {
        return Err(GcaError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = usize::try_from(u64::from_le_bytes(take(&bytes, &mut pos)?))
            .map_err(|_| GcaError::Checkpoint("dimension overflow".into()))?;
    }
    let [f, h, o] = dims;
    let tag = take::<1>(&bytes, &mut pos)?[0];
    let fixed = f64::from_le_bytes(take(&bytes, &mut pos)?);
    let activation = match tag {
        0 => Activation::Relu,
        1 => Activation::Prelu,
        2 => Activation::Leaky(fixed),
        t => return Err(GcaError::Checkpoint(format!("unknown activation tag {t}"))),
    };
    let mut params = ModelParams::zeros(f, h, o, activation);
    for s in &mut params.prelu_slopes {
        *s = f64::from_le_bytes(take(&bytes, &mut pos)?);
    }
    let expected = pos + 8 * (params.num_values() - 2);
    if bytes.len() != expected {
        return Err(GcaError::Checkpoint(format!(
            "expected {expected} bytes for dimensions ({f}, {h}, {o}), found {}",
            bytes.len()
        )));
    }
    for (i, (block, _)) in params.blocks_mut().into_iter().enumerate() {
        if i == 2 {
            continue;
        }
        for v in block.iter_mut() {
            *v = f64::from_le_bytes(take(&bytes, &mut pos)?);
        }
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf).expect("write to vec");
    fs::write(path, buf).map_err(|source| GcaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(GcaError::MissingFile(path.to_path_buf()));
    }
    let file = fs::File::open(path).map_err(|source| GcaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoint(std::io::BufReader::new(file))
}
