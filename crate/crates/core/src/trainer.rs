//! Training configuration, Adam, and the two-view training loop.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::AugmentationPlan;
use crate::centrality::{node_centrality, CentralityMeasure};
use crate::encoder::{backward_par, encode, forward, Activation, ModelParams, ParamGrads, RRELU_MIDPOINT_SLOPE};
use crate::error::{GcaError, Result};
use crate::graph::{normalized_adjacency, Graph};
use crate::objective::contrastive_objective_floored;

/// Ablation variants: which levels use centrality-driven probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Adaptive topology and attributes.
    Gca,
    /// Uniform topology, adaptive attributes.
    GcaT,
    /// Adaptive topology, uniform attributes.
    GcaA,
    /// Uniform on both levels.
    GcaTA,
}

impl Variant {
    /// `(adaptive_topology, adaptive_attribute)`
    pub fn switches(self) -> (bool, bool) {
        match self {
            Self::Gca => (true, true),
            Self::GcaT => (false, true),
            Self::GcaA => (true, false),
            Self::GcaTA => (false, false),
        }
    }
}

impl FromStr for Variant {
    type Err = GcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gca" => Ok(Self::Gca),
            "gca-t" => Ok(Self::GcaT),
            "gca-a" => Ok(Self::GcaA),
            "gca-t-a" => Ok(Self::GcaTA),
            other => Err(GcaError::InvalidConfig(format!(
                "unknown variant {other:?} (expected gca, gca-t, gca-a or gca-t-a)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub p_e1: f64,
    pub p_e2: f64,
    pub p_f1: f64,
    pub p_f2: f64,
    pub p_tau: f64,
    pub tau: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub weight_decay: f64,
    pub centrality_measure: CentralityMeasure,
    pub adaptive_topology: bool,
    pub adaptive_attribute: bool,
    pub seed: u64,
}

pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-5;

/// Rows of the projected views are divided by at least this much, so a node
/// whose view collapsed to zero does not abort training.
pub const TRAINING_NORM_FLOOR: f64 = 1e-12;

impl Default for TrainConfig {
    /// The Amazon-Photo row of the published settings with degree centrality.
    fn default() -> Self {
        Self::preset("amazon-photo").expect("built-in preset")
    }
}

impl TrainConfig {
    /// Published per-dataset settings: `wiki-cs`, `amazon-computers`,
    /// `amazon-photo`, `coauthor-cs`, `coauthor-physics`.
    pub fn preset(name: &str) -> Result<Self> {
        let rrelu = Activation::Leaky(RRELU_MIDPOINT_SLOPE);
        #[rustfmt::skip]
        let row = match name {
            "wiki-cs" =>          (0.2, 0.4, 0.1, 0.1, 0.6, 0.01,   3000, 256, Activation::Prelu),
            "amazon-computers" => (0.5, 0.5, 0.2, 0.1, 0.1, 0.01,   1500, 128, Activation::Prelu),
            "amazon-photo" =>     (0.3, 0.5, 0.1, 0.1, 0.3, 0.1,    2000, 256, Activation::Relu),
            "coauthor-cs" =>      (0.3, 0.2, 0.3, 0.4, 0.4, 0.0005, 1000, 256, rrelu),
            "coauthor-physics" => (0.4, 0.1, 0.1, 0.4, 0.5, 0.01,   1500, 128, rrelu),
            other => return Err(GcaError::InvalidConfig(format!("unknown preset {other:?}"))),
        };
        let (p_e1, p_e2, p_f1, p_f2, tau, learning_rate, epochs, hidden_dim, activation) = row;
        Ok(Self {
            p_e1,
            p_e2,
            p_f1,
            p_f2,
            p_tau: 0.7,
            tau,
            learning_rate,
            epochs,
            hidden_dim,
            activation,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            centrality_measure: CentralityMeasure::Degree,
            adaptive_topology: true,
            adaptive_attribute: true,
            seed: 0,
        })
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        (self.adaptive_topology, self.adaptive_attribute) = variant.switches();
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_e1", self.p_e1),
            ("p_e2", self.p_e2),
            ("p_f1", self.p_f1),
            ("p_f2", self.p_f2),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(GcaError::InvalidConfig(format!("{name} = {p} is outside [0, 1)")));
            }
        }
        if !(self.p_tau > 0.0 && self.p_tau < 1.0) {
            return Err(GcaError::InvalidConfig(format!("p_tau = {} is outside (0, 1)", self.p_tau)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(GcaError::InvalidConfig(format!("tau = {} must be positive", self.tau)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GcaError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(GcaError::InvalidConfig("weight_decay must be non-negative".into()));
        }
        if self.epochs == 0 || self.hidden_dim == 0 {
            return Err(GcaError::InvalidConfig("epochs and hidden_dim must be at least 1".into()));
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are ignored; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| GcaError::Parse {
                file: "config".into(),
                line: lineno + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
                v.parse().map_err(|_| format!("cannot parse {v:?}"))
            }
            fn flag(v: &str) -> std::result::Result<bool, String> {
                match v {
                    "true" | "1" | "yes" => Ok(true),
                    "false" | "0" | "no" => Ok(false),
                    _ => Err(format!("expected a boolean, got {v:?}")),
                }
            }
            let result: std::result::Result<(), String> = (|| {
                match key {
                    "p_e1" => config.p_e1 = num(value)?,
                    "p_e2" => config.p_e2 = num(value)?,
                    "p_f1" => config.p_f1 = num(value)?,
                    "p_f2" => config.p_f2 = num(value)?,
                    "p_tau" => config.p_tau = num(value)?,
                    "tau" => config.tau = num(value)?,
                    "learning_rate" => config.learning_rate = num(value)?,
                    "epochs" => config.epochs = num(value)?,
                    "hidden_dim" => config.hidden_dim = num(value)?,
                    "activation" => config.activation = value.parse().map_err(|e: GcaError| e.to_string())?,
                    "weight_decay" => config.weight_decay = num(value)?,
                    "centrality_measure" => {
                        config.centrality_measure = value.parse().map_err(|e: GcaError| e.to_string())?
                    }
                    "adaptive_topology" => config.adaptive_topology = flag(value)?,
                    "adaptive_attribute" => config.adaptive_attribute = flag(value)?,
                    "seed" => config.seed = num(value)?,
                    other => return Err(format!("unknown key {other:?}")),
                }
                Ok(())
            })();
            result.map_err(err)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Renders the configuration in the format accepted by [`TrainConfig::parse`].
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "p_e1 = {}", self.p_e1);
        let _ = writeln!(s, "p_e2 = {}", self.p_e2);
        let _ = writeln!(s, "p_f1 = {}", self.p_f1);
        let _ = writeln!(s, "p_f2 = {}", self.p_f2);
        let _ = writeln!(s, "p_tau = {}", self.p_tau);
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "hidden_dim = {}", self.hidden_dim);
        let _ = writeln!(s, "activation = {}", self.activation);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(s, "centrality_measure = {}", self.centrality_measure);
        let _ = writeln!(s, "adaptive_topology = {}", self.adaptive_topology);
        let _ = writeln!(s, "adaptive_attribute = {}", self.adaptive_attribute);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

/// Adam moment estimates, one buffer per parameter block.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.blocks().iter().map(|b| vec![0.0; b.len()]).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update minimizing the loss whose gradient is `grads`. Weight
/// decay is added to the gradient of weight matrices only.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut ModelParams,
    grads: &ParamGrads,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(GcaError::NonFinite("parameter gradient".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let grad_blocks = grads.blocks();
    for (k, (block, decay)) in params.blocks_mut().into_iter().enumerate() {
        let g = grad_blocks[k];
        if g.len() != block.len() {
            return Err(GcaError::Shape("gradient and parameter blocks differ".into()));
        }
        let (m, v) = (&mut state.first[k], &mut state.second[k]);
        for i in 0..block.len() {
            let gi = if decay { g[i] + weight_decay * block[i] } else { g[i] };
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            block[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Final parameters and the per-epoch training loss (`-J`).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub losses: Vec<f64>,
}

/// Trains encoder and projector on `graph`; see [`train_with`].
pub fn train(graph: &Graph, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(graph, config, |_, _| {})
}

/// Trains and calls `on_epoch(epoch, loss)` after every update.
///
/// Centralities and both augmentation plans are computed once from the
/// input graph; each epoch draws two fresh views, maximizes `J` by Adam
/// descent on `-J`, and records `-J`. The whole run is determined by
/// `config.seed`.
pub fn train_with<F: FnMut(usize, f64)>(
    graph: &Graph,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let f = graph.num_features();
    if f == 0 || graph.num_nodes() == 0 {
        return Err(GcaError::InvalidGraph("graph needs nodes and features".into()));
    }
    let mut params = ModelParams::init(f, config.hidden_dim, config.hidden_dim, config.activation, &mut rng);

    let nc = if config.adaptive_topology || config.adaptive_attribute {
        Some(node_centrality(graph, config.centrality_measure)?)
    } else {
        None
    };
    let plan = |p_e, p_f| {
        AugmentationPlan::from_centrality(
            graph,
            nc.as_ref(),
            p_e,
            p_f,
            config.p_tau,
            config.adaptive_topology,
            config.adaptive_attribute,
        )
    };
    let plan1 = plan(config.p_e1, config.p_f1)?;
    let plan2 = plan(config.p_e2, config.p_f2)?;

    let x = graph.features_f64();
    let mut adam = AdamState::new(&params);
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let view1 = plan1.sample(&mut rng);
        let view2 = plan2.sample(&mut rng);
        let (s1, x1) = (view1.norm_adjacency(graph), view1.masked_features(&x));
        let (s2, x2) = (view2.norm_adjacency(graph), view2.masked_features(&x));

        let (first, second) = rayon::join(|| forward(&params, &s1, &x1), || forward(&params, &s2, &x2));
        let (z1, trace1) = first?;
        let (z2, trace2) = second?;
        let report = contrastive_objective_floored(&z1, &z2, config.tau, TRAINING_NORM_FLOOR)?;
        if !report.objective.is_finite() {
            return Err(GcaError::Diverged {
                epoch,
                value: report.objective,
            });
        }
        let loss = -report.objective;
        let d1 = -report.grad_u;
        let d2 = -report.grad_v;
        let grads = backward_par(&params, &[(&trace1, &d1), (&trace2, &d2)])?;
        adam_step(&mut adam, &mut params, &grads, config.learning_rate, config.weight_decay)
            .map_err(|_| GcaError::Diverged { epoch, value: loss })?;
        losses.push(loss);
        on_epoch(epoch, loss);
    }
    Ok(TrainOutcome { params, losses })
}

/// Encoder output on the uncorrupted graph.
pub fn embed(params: &ModelParams, graph: &Graph) -> Result<Array2<f64>> {
    let s = normalized_adjacency(graph);
    let x = graph.features_f64();
    Ok(encode(params, &s, &x)?.0)
}
