//! Graph storage, the portable dataset directory format, node splits and the
//! symmetric normalized adjacency operator used by the GCN encoder.
//!
//! Undirected graphs are stored as symmetric arc pairs in CSR form, so `(u, v)`
//! and `(v, u)` both appear. Column indices within a row are sorted.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GcaError, Result};

pub const META_FILE: &str = "meta.json";
pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.tsv";
pub const SPLITS_FILE: &str = "splits.json";

/// A graph with dense node features and optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    directed: bool,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    features: Array2<f32>,
    labels: Option<Vec<usize>>,
    num_classes: Option<usize>,
    binary_features: bool,
}

impl Graph {
    /// Builds a graph from an edge list.
    ///
    /// For undirected graphs each pair may be listed in either orientation (or
    /// both); the stored arc set is symmetrized. Self-loops and duplicate
    /// edges are dropped with a warning.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(usize, usize)],
        directed: bool,
        features: Array2<f32>,
        labels: Option<Vec<usize>>,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        if features.nrows() != num_nodes {
            return Err(GcaError::CountMismatch {
                what: "feature rows",
                declared: num_nodes,
                found: features.nrows(),
            });
        }
        let mut pairs = Vec::with_capacity(edges.len());
        let mut self_loops = 0usize;
        for (line, &(u, v)) in edges.iter().enumerate() {
            for (idx, what) in [(u, "source node"), (v, "target node")] {
                if idx >= num_nodes {
                    return Err(GcaError::IndexOutOfRange {
                        what,
                        index: idx,
                        limit: num_nodes,
                        line: line + 1,
                    });
                }
            }
            if u == v {
                self_loops += 1;
            } else if directed {
                pairs.push((u, v));
            } else {
                pairs.push((u.min(v), u.max(v)));
            }
        }
        if self_loops > 0 {
            log::warn!("dropped {self_loops} self-loop(s)");
        }
        pairs.sort_unstable();
        let before = pairs.len();
        pairs.dedup();
        if pairs.len() < before {
            log::warn!("removed {} duplicate edge(s)", before - pairs.len());
        }
        let mut arcs = pairs;
        if !directed {
            let reversed: Vec<_> = arcs.iter().map(|&(u, v)| (v, u)).collect();
            arcs.extend(reversed);
            arcs.sort_unstable();
        }

        let mut row_offsets = vec![0usize; num_nodes + 1];
        for &(u, _) in &arcs {
            row_offsets[u + 1] += 1;
        }
        for i in 0..num_nodes {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices = arcs.iter().map(|&(_, v)| v).collect();
        Self::from_parts(num_nodes, directed, row_offsets, col_indices, features, labels, num_classes)
    }

    fn from_parts(
        num_nodes: usize,
        directed: bool,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        features: Array2<f32>,
        labels: Option<Vec<usize>>,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        if let Some(labels) = &labels {
            if labels.len() != num_nodes {
                return Err(GcaError::CountMismatch {
                    what: "labels",
                    declared: num_nodes,
                    found: labels.len(),
                });
            }
            let classes = num_classes.ok_or_else(|| {
                GcaError::InvalidGraph("labels present without a class count".into())
            })?;
            if let Some((line, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
                return Err(GcaError::IndexOutOfRange {
                    what: "label",
                    index: label,
                    limit: classes,
                    line: line + 1,
                });
            }
        }
        for ((node, dim), value) in features.indexed_iter() {
            if !value.is_finite() {
                return Err(GcaError::NonFiniteFeature { node, dim });
            }
        }
        let binary_features = features.iter().all(|&x| x == 0.0 || x == 1.0);
        Ok(Self {
            num_nodes,
            directed,
            row_offsets,
            col_indices,
            features,
            labels,
            num_classes,
            binary_features,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of stored arcs (both orientations of an undirected pair count).
    pub fn num_arcs(&self) -> usize {
        self.col_indices.len()
    }

    /// Number of edges as reported in dataset statistics: undirected pairs for
    /// undirected graphs, arcs otherwise.
    pub fn num_edges(&self) -> usize {
        if self.directed {
            self.num_arcs()
        } else {
            self.num_arcs() / 2
        }
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn binary_features(&self) -> bool {
        self.binary_features
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn features_f64(&self) -> Array2<f64> {
        self.features.mapv(f64::from)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    /// Out-neighbors of `u` (all neighbors for undirected graphs), sorted.
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[u]..self.row_offsets[u + 1]]
    }

    /// Iterates `(source, target)` over all arcs in CSR order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |u| self.neighbors(u).iter().map(move |&v| (u, v)))
    }

    /// Index of arc `(u, v)` in CSR order, if stored.
    pub fn arc_index(&self, u: usize, v: usize) -> Option<usize> {
        self.neighbors(u)
            .binary_search(&v)
            .ok()
            .map(|pos| self.row_offsets[u] + pos)
    }

    /// Groups arcs into the units that are sampled together: for undirected
    /// graphs each pair `u < v` yields `(arc(u,v), Some(arc(v,u)))`, for
    /// directed graphs every arc stands alone.
    pub fn edge_units(&self) -> Vec<(usize, Option<usize>)> {
        let mut units = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes {
            for (pos, &v) in self.neighbors(u).iter().enumerate() {
                let arc = self.row_offsets[u] + pos;
                if self.directed {
                    units.push((arc, None));
                } else if u < v {
                    let rev = self
                        .arc_index(v, u)
                        .expect("undirected graph stores both orientations");
                    units.push((arc, Some(rev)));
                }
            }
        }
        units
    }

    /// Returns a copy keeping only the arcs flagged in `keep` and replacing the
    /// feature matrix. Node count, labels and direction are preserved.
    pub fn with_arcs_and_features(&self, keep: &[bool], features: Array2<f32>) -> Result<Self> {
        if keep.len() != self.num_arcs() {
            return Err(GcaError::Shape(format!(
                "arc mask has {} entries, graph has {} arcs",
                keep.len(),
                self.num_arcs()
            )));
        }
        if features.dim() != self.features.dim() {
            return Err(GcaError::Shape("replacement features differ in shape".into()));
        }
        let mut row_offsets = Vec::with_capacity(self.num_nodes + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for u in 0..self.num_nodes {
            for arc in self.row_offsets[u]..self.row_offsets[u + 1] {
                if keep[arc] {
                    col_indices.push(self.col_indices[arc]);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self::from_parts(
            self.num_nodes,
            self.directed,
            row_offsets,
            col_indices,
            features,
            self.labels.clone(),
            self.num_classes,
        )
    }

    /// Undirected edge list with `u < v` (or all arcs for directed graphs).
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.arcs().filter(|&(u, v)| self.directed || u < v).collect()
    }
}

/// The Zachary karate club network with identity features and the two-club
/// split as labels (0 = instructor's club, 1 = officer's club).
pub fn karate_club() -> Graph {
    const EDGES: [(usize, usize); 78] = [
        (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6), (0, 7), (0, 8), (0, 10), (0, 11),
        (0, 12), (0, 13), (0, 17), (0, 19), (0, 21), (0, 31), (1, 2), (1, 3), (1, 7), (1, 13),
        (1, 17), (1, 19), (1, 21), (1, 30), (2, 3), (2, 7), (2, 8), (2, 9), (2, 13), (2, 27),
        (2, 28), (2, 32), (3, 7), (3, 12), (3, 13), (4, 6), (4, 10), (5, 6), (5, 10), (5, 16),
        (6, 16), (8, 30), (8, 32), (8, 33), (9, 33), (13, 33), (14, 32), (14, 33), (15, 32),
        (15, 33), (18, 32), (18, 33), (19, 33), (20, 32), (20, 33), (22, 32), (22, 33),
        (23, 25), (23, 27), (23, 29), (23, 32), (23, 33), (24, 25), (24, 27), (24, 31),
        (25, 31), (26, 29), (26, 33), (27, 33), (28, 31), (28, 33), (29, 32), (29, 33),
        (30, 32), (30, 33), (31, 32), (31, 33), (32, 33),
    ];
    const OFFICER: [usize; 17] = [9, 14, 15, 18, 20, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32, 33];
    let n = 34;
    let labels = (0..n).map(|i| usize::from(OFFICER.contains(&i))).collect();
    Graph::from_edges(n, &EDGES, false, Array2::eye(n), Some(labels), Some(2))
        .expect("built-in karate graph is valid")
}

/// Disjoint train/validation/test node sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    #[serde(alias = "train_idx")]
    pub train: Vec<usize>,
    #[serde(alias = "val_idx")]
    pub val: Vec<usize>,
    #[serde(alias = "test_idx")]
    pub test: Vec<usize>,
}

impl Split {
    /// Checks disjointness, non-emptiness and range against `num_nodes`.
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let mut seen = vec![false; num_nodes];
        for (name, part) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if part.is_empty() {
                return Err(GcaError::InvalidSplit(format!("{name} set is empty")));
            }
            for &node in part {
                if node >= num_nodes {
                    return Err(GcaError::InvalidSplit(format!(
                        "{name} node {node} out of range for {num_nodes} nodes"
                    )));
                }
                if std::mem::replace(&mut seen[node], true) {
                    return Err(GcaError::InvalidSplit(format!(
                        "node {node} appears more than once"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Random 10% / 10% / 80% split of `0..num_nodes` determined by `seed`.
pub fn random_split(num_nodes: usize, seed: u64) -> Result<Split> {
    if num_nodes < 10 {
        return Err(GcaError::InvalidSplit(format!(
            "need at least 10 nodes for a 10/10/80 split, got {num_nodes}"
        )));
    }
    let mut perm: Vec<usize> = (0..num_nodes).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let part = num_nodes / 10;
    let test = perm.split_off(2 * part);
    let val = perm.split_off(part);
    Ok(Split { train: perm, val, test })
}

/// `D^{-1/2} (A + I) D^{-1/2}` in CSR form with 64-bit values.
///
/// Row `i` aggregates node `i` itself and its in-neighbors, and `D` counts
/// in-degree plus the self-loop; for undirected graphs this is the usual
/// symmetric operator.
#[derive(Debug, Clone, PartialEq)]
pub struct NormAdjacency {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl NormAdjacency {
    /// Builds the operator from the arcs of `graph` selected by `keep`
    /// (all arcs when `None`).
    pub fn from_graph_arcs(graph: &Graph, keep: Option<&[bool]>) -> Self {
        let n = graph.num_nodes();
        let kept = |arc: usize| keep.is_none_or(|k| k[arc]);
        // incoming lists: arc u -> v contributes u to row v
        let mut counts = vec![1usize; n];
        for u in 0..n {
            for arc in graph.row_offsets[u]..graph.row_offsets[u + 1] {
                if kept(arc) {
                    counts[graph.col_indices[arc]] += 1;
                }
            }
        }
        let mut row_offsets = vec![0usize; n + 1];
        for i in 0..n {
            row_offsets[i + 1] = row_offsets[i] + counts[i];
        }
        let mut fill = row_offsets[..n].to_vec();
        let mut col_indices = vec![0usize; row_offsets[n]];
        for i in 0..n {
            col_indices[fill[i]] = i;
            fill[i] += 1;
        }
        for u in 0..n {
            for arc in graph.row_offsets[u]..graph.row_offsets[u + 1] {
                if kept(arc) {
                    let v = graph.col_indices[arc];
                    col_indices[fill[v]] = u;
                    fill[v] += 1;
                }
            }
        }
        let inv_sqrt: Vec<f64> = counts.iter().map(|&d| 1.0 / (d as f64).sqrt()).collect();
        let mut values = vec![0.0; col_indices.len()];
        for i in 0..n {
            let row = row_offsets[i]..row_offsets[i + 1];
            col_indices[row.clone()].sort_unstable();
            for k in row {
                values[k] = inv_sqrt[i] * inv_sqrt[col_indices[k]];
            }
        }
        Self {
            n,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Identity operator on `n` nodes (an edgeless graph).
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Degree including the self-loop, recovered from the diagonal entry.
    pub fn self_loop_degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| 1.0 / self.get(i, i)).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]];
        match row.binary_search(&j) {
            Ok(pos) => self.values[self.row_offsets[i] + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut dense = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                dense[[i, self.col_indices[k]]] = self.values[k];
            }
        }
        dense
    }

    /// `S · x`
    pub fn matmul(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n, "operator/matrix row mismatch");
        let mut out = Array2::zeros((self.n, x.ncols()));
        for (i, mut out_row) in out.outer_iter_mut().enumerate() {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                out_row.scaled_add(self.values[k], &x.row(self.col_indices[k]));
            }
        }
        out
    }

    /// `Sᵀ · x`
    pub fn transpose_matmul(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n, "operator/matrix row mismatch");
        let mut out = Array2::zeros((self.n, x.ncols()));
        for i in 0..self.n {
            let row = x.row(i);
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                out.row_mut(self.col_indices[k]).scaled_add(self.values[k], &row);
            }
        }
        out
    }

    /// Largest entry-wise asymmetry `|S_ij - S_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                let j = self.col_indices[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Builds the normalized propagation operator of `graph`.
pub fn normalized_adjacency(graph: &Graph) -> NormAdjacency {
    NormAdjacency::from_graph_arcs(graph, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub directed: bool,
}

/// A loaded dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Graph,
    pub splits: Option<Vec<Split>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SplitsFile {
    Many(Vec<Split>),
    One(Split),
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(GcaError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| GcaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_index(token: &str, file: &str, line: usize) -> Result<usize> {
    token.parse().map_err(|_| GcaError::Parse {
        file: file.into(),
        line,
        msg: format!("expected a non-negative integer, got {token:?}"),
    })
}

/// Loads a portable dataset directory (`meta.json`, `edges.tsv`,
/// `features.bin`, optional `labels.tsv` and `splits.json`).
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(GcaError::MissingFile(dir.to_path_buf()));
    }
    let meta_path = dir.join(META_FILE);
    let meta: DatasetMeta =
        serde_json::from_str(&read_text(&meta_path)?).map_err(|e| GcaError::Parse {
            file: META_FILE.into(),
            line: e.line(),
            msg: e.to_string(),
        })?;
    let n = meta.num_nodes;

    let mut edges = Vec::new();
    for (lineno, line) in read_text(&dir.join(EDGES_FILE))?.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let (Some(src), Some(dst), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(GcaError::Parse {
                file: EDGES_FILE.into(),
                line: line_no,
                msg: "expected exactly two columns".into(),
            });
        };
        let src = parse_index(src, EDGES_FILE, line_no)?;
        let dst = parse_index(dst, EDGES_FILE, line_no)?;
        for (what, index) in [("source node", src), ("target node", dst)] {
            if index >= n {
                return Err(GcaError::IndexOutOfRange {
                    what,
                    index,
                    limit: n,
                    line: line_no,
                });
            }
        }
        edges.push((src, dst));
    }

    let feat_path = dir.join(FEATURES_FILE);
    if !feat_path.exists() {
        return Err(GcaError::MissingFile(feat_path));
    }
    let bytes = fs::read(&feat_path).map_err(|source| GcaError::Io {
        path: feat_path.clone(),
        source,
    })?;
    let expected = n * meta.num_features * 4;
    if bytes.len() != expected {
        return Err(GcaError::CountMismatch {
            what: "feature bytes",
            declared: expected,
            found: bytes.len(),
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let features = Array2::from_shape_vec((n, meta.num_features), values)
        .map_err(|e| GcaError::Shape(e.to_string()))?;

    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() {
        let mut labels = Vec::with_capacity(n);
        for (lineno, line) in read_text(&labels_path)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            labels.push(parse_index(line, LABELS_FILE, lineno + 1)?);
        }
        Some(labels)
    } else {
        None
    };

    let graph = Graph::from_edges(
        n,
        &edges,
        meta.directed,
        features,
        labels,
        Some(meta.num_classes).filter(|_| labels_path.exists()),
    )?;
    if graph.num_edges() != meta.num_edges {
        return Err(GcaError::CountMismatch {
            what: "edges",
            declared: meta.num_edges,
            found: graph.num_edges(),
        });
    }

    let splits_path = dir.join(SPLITS_FILE);
    let splits = if splits_path.exists() {
        let parsed: SplitsFile =
            serde_json::from_str(&read_text(&splits_path)?).map_err(|e| GcaError::Parse {
                file: SPLITS_FILE.into(),
                line: e.line(),
                msg: e.to_string(),
            })?;
        let splits = match parsed {
            SplitsFile::Many(v) => v,
            SplitsFile::One(s) => vec![s],
        };
        for split in &splits {
            split.validate(n)?;
        }
        Some(splits)
    } else {
        None
    };

    Ok(Dataset { graph, splits })
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(&path, bytes).map_err(|source| GcaError::Io { path, source })
}

/// Writes `graph` (and optional stored splits) in the portable format.
pub fn save_dataset(dir: impl AsRef<Path>, graph: &Graph, splits: Option<&[Split]>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| GcaError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let meta = DatasetMeta {
        num_nodes: graph.num_nodes(),
        num_edges: graph.num_edges(),
        num_features: graph.num_features(),
        num_classes: graph.num_classes().unwrap_or(0),
        directed: graph.is_directed(),
    };
    let meta_json = serde_json::to_string(&meta).expect("meta serializes");
    write_file(dir.join(META_FILE), meta_json.as_bytes())?;

    let mut edges = Vec::new();
    for (u, v) in graph.edge_list() {
        writeln!(edges, "{u}\t{v}").expect("write to vec");
    }
    write_file(dir.join(EDGES_FILE), &edges)?;

    let mut features = Vec::with_capacity(graph.features().len() * 4);
    for value in graph.features().iter() {
        features.extend_from_slice(&value.to_le_bytes());
    }
    write_file(dir.join(FEATURES_FILE), &features)?;

    if let Some(labels) = graph.labels() {
        let mut out = Vec::new();
        for label in labels {
            writeln!(out, "{label}").expect("write to vec");
        }
        write_file(dir.join(LABELS_FILE), &out)?;
    }
    if let Some(splits) = splits {
        let json = serde_json::to_string(splits).expect("splits serialize");
        write_file(dir.join(SPLITS_FILE), json.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn no_features(n: usize) -> Array2<f32> {
        Array2::zeros((n, 1))
    }

    #[test]
    fn path_graph_is_symmetric() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)], false, no_features(3), None, None).unwrap();
        assert_eq!(g.num_arcs(), 4);
        assert_eq!(g.num_edges(), 2);
        for (u, v) in g.arcs() {
            assert!(g.arc_index(v, u).is_some());
        }
        assert_eq!(g.neighbors(1), &[0, 2]);
    }

    #[test]
    fn duplicates_and_self_loops_are_dropped() {
        let g = Graph::from_edges(
            3,
            &[(0, 1), (1, 0), (0, 1), (2, 2)],
            false,
            no_features(3),
            None,
            None,
        )
        .unwrap();
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn out_of_range_edge_is_rejected() {
        let err = Graph::from_edges(2, &[(0, 5)], false, no_features(2), None, None).unwrap_err();
        assert!(matches!(err, GcaError::IndexOutOfRange { index: 5, .. }));
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let err = Graph::from_edges(2, &[], false, no_features(2), Some(vec![0, 3]), Some(2))
            .unwrap_err();
        assert!(matches!(err, GcaError::IndexOutOfRange { what: "label", .. }));
    }

    #[test]
    fn non_finite_feature_is_rejected() {
        let feats = array![[0.0f32], [f32::NAN]];
        let err = Graph::from_edges(2, &[], false, feats, None, None).unwrap_err();
        assert!(matches!(err, GcaError::NonFiniteFeature { node: 1, dim: 0 }));
    }

    #[test]
    fn binary_flag_detection() {
        let bin = Graph::from_edges(2, &[], false, array![[0.0f32, 1.0], [1.0, 1.0]], None, None)
            .unwrap();
        assert!(bin.binary_features());
        let dense = Graph::from_edges(2, &[], false, array![[0.5f32, 1.0], [1.0, 1.0]], None, None)
            .unwrap();
        assert!(!dense.binary_features());
    }

    #[test]
    fn empty_edge_graph() {
        let g = Graph::from_edges(3, &[], false, no_features(3), None, None).unwrap();
        assert_eq!(g.num_arcs(), 0);
        let s = normalized_adjacency(&g);
        assert_eq!(s.to_dense(), Array2::<f64>::eye(3));
    }

    #[test]
    fn single_edge_normalization() {
        let g = Graph::from_edges(2, &[(0, 1)], false, no_features(2), None, None).unwrap();
        let s = normalized_adjacency(&g).to_dense();
        assert!((&s - &array![[0.5, 0.5], [0.5, 0.5]]).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn sqrt_degree_is_fixed_point() {
        let g = karate_club();
        let s = normalized_adjacency(&g);
        let d = s.self_loop_degrees();
        let x = Array2::from_shape_fn((g.num_nodes(), 1), |(i, _)| d[i].sqrt());
        let y = s.matmul(x.view());
        let residual = (&y - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(residual < 1e-9, "residual {residual}");
        assert!(s.max_asymmetry() < 1e-12);
    }

    #[test]
    fn transpose_matmul_matches_dense() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (3, 2), (0, 3)], true, no_features(4), None, None)
            .unwrap();
        let s = normalized_adjacency(&g);
        let x = Array2::from_shape_fn((4, 2), |(i, j)| (i * 2 + j) as f64 - 3.0);
        let dense = s.to_dense();
        let expect = dense.t().dot(&x);
        let got = s.transpose_matmul(x.view());
        assert!((&expect - &got).iter().all(|v| v.abs() < 1e-14));
        assert!((&dense.dot(&x) - &s.matmul(x.view())).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn directed_operator_aggregates_in_neighbors() {
        // 0 -> 1: row 1 holds node 0, row 0 only itself
        let g = Graph::from_edges(2, &[(0, 1)], true, no_features(2), None, None).unwrap();
        let s = normalized_adjacency(&g).to_dense();
        assert_eq!(s[[0, 0]], 1.0);
        assert_eq!(s[[0, 1]], 0.0);
        assert!((s[[1, 0]] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((s[[1, 1]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn split_sizes() {
        let s = random_split(100, 7).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (10, 10, 80));
        s.validate(100).unwrap();
        assert_eq!(s, random_split(100, 7).unwrap());
        assert_ne!(s, random_split(100, 8).unwrap());

        let big = random_split(11_701, 0).unwrap();
        assert_eq!((big.train.len(), big.val.len(), big.test.len()), (1170, 1170, 9361));
        assert!(random_split(9, 0).is_err());
    }

    #[test]
    fn split_validation_catches_overlap() {
        let s = Split {
            train: vec![0],
            val: vec![0],
            test: vec![1],
        };
        assert!(s.validate(2).is_err());
    }

    #[test]
    fn edge_units_pair_reverse_arcs() {
        let g = karate_club();
        let units = g.edge_units();
        assert_eq!(units.len(), 78);
        let cols = g.col_indices();
        for (arc, rev) in units {
            let rev = rev.unwrap();
            assert_ne!(arc, rev);
            assert!(cols[arc] != cols[rev]);
        }
    }
}
