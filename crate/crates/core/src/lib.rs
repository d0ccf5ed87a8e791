//! Graph contrastive representation learning with centrality-driven
//! adaptive augmentation.
//!
//! Two stochastically corrupted views of a graph are generated by removing
//! edges and masking feature dimensions with probabilities that shrink for
//! structurally important edges and features. A two-layer GCN encoder with
//! a projection head is trained to pull the two embeddings of each node
//! together and push all other nodes apart. Embeddings are scored with a
//! linear logistic-regression probe.

pub mod augment;
pub mod centrality;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod objective;
pub mod oracle;
pub mod probe;
pub mod trainer;

pub use augment::{build_plan, sample_view, AugmentationPlan, ViewSample};
pub use centrality::{edge_centrality, node_centrality, CentralityMeasure, EdgeWeights, NodeCentrality};
pub use encoder::{Activation, ModelParams};
pub use error::{GcaError, Result};
pub use graph::{karate_club, load_dataset, normalized_adjacency, save_dataset, Dataset, Graph, NormAdjacency, Split};
pub use objective::contrastive_objective;
pub use probe::{evaluate, fit_logistic, ProbeConfig, ProbeResult};
pub use trainer::{embed, train, TrainConfig, TrainOutcome, Variant};
