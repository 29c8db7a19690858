//! Random DAGs and structural-equation simulators for synthetic benchmarks.
//!
//! Nodes are 0-based and the identity order is always topological: every
//! edge `i -> j` has `i < j`.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Table;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn empty(d: usize) -> Self {
        Dag {
            parents: vec![Vec::new(); d],
        }
    }

    /// Builds a DAG from `(from, to)` edges; every edge must satisfy `from < to`.
    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut parents = vec![BTreeSet::new(); d];
        for &(i, j) in edges {
            if j >= d || i >= j {
                return Err(Error::Data(format!(
                    "edge {i}->{j} is not forward in the identity order of {d} nodes"
                )));
            }
            parents[j].insert(i);
        }
        Ok(Dag {
            parents: parents.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.parents.len()
    }

    /// Sorted parent list of node `j`.
    pub fn parents(&self, j: usize) -> &[usize] {
        &self.parents[j]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.parents[j].binary_search(&i).is_ok()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(j, ps)| ps.iter().map(move |&i| (i, j)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// Total degree (in + out) of every node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.dim()];
        for (i, j) in self.edges() {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }
}

/// Erdős–Rényi DAG: each forward pair is an edge with probability
/// `min(1, expected_edges / C(d, 2))`.
pub fn sample_er_dag(d: usize, expected_edges: usize, seed: u64) -> Result<Dag> {
    if d == 0 {
        return Err(Error::usage("DAG needs at least one node"));
    }
    let pairs = d * (d - 1) / 2;
    let p = if pairs == 0 {
        0.0
    } else {
        (expected_edges as f64 / pairs as f64).min(1.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for j in 1..d {
        for i in 0..j {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Dag::from_edges(d, &edges)
}

/// Preferential-attachment DAG: node `j` links to `min(attach_m, j)` distinct
/// earlier nodes, each chosen with probability proportional to degree + 1.
pub fn sample_sf_dag(d: usize, attach_m: usize, seed: u64) -> Result<Dag> {
    if d < 2 || attach_m == 0 {
        return Err(Error::usage("scale-free DAG needs d >= 2 and attach_m >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut degree = vec![0usize; d];
    let mut edges = Vec::new();
    for j in 1..d {
        let mut chosen: Vec<usize> = Vec::new();
        for _ in 0..attach_m.min(j) {
            let total: usize = (0..j)
                .filter(|i| !chosen.contains(i))
                .map(|i| degree[i] + 1)
                .sum();
            let mut ticket = rng.random_range(0..total);
            let pick = (0..j)
                .filter(|i| !chosen.contains(i))
                .find(|&i| {
                    let w = degree[i] + 1;
                    if ticket < w {
                        true
                    } else {
                        ticket -= w;
                        false
                    }
                })
                .expect("ticket within total weight");
            chosen.push(pick);
        }
        for &i in &chosen {
            degree[i] += 1;
            degree[j] += 1;
            edges.push((i, j));
        }
    }
    Dag::from_edges(d, &edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemKind {
    Linear,
    Nonlinear,
}

impl std::str::FromStr for SemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(SemKind::Linear),
            "nonlinear" => Ok(SemKind::Nonlinear),
            other => Err(Error::usage(format!("unknown SEM kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for SemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SemKind::Linear => "linear",
            SemKind::Nonlinear => "nonlinear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemSpec {
    pub kind: SemKind,
    pub weight_low: f64,
    pub weight_high: f64,
    pub sign_flip_prob: f64,
    pub noise_std: f64,
}

impl SemSpec {
    pub fn new(kind: SemKind) -> Self {
        SemSpec {
            kind,
            weight_low: 0.5,
            weight_high: 2.0,
            sign_flip_prob: 0.5,
            noise_std: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.weight_low <= self.weight_high)
            || !(0.0..=1.0).contains(&self.sign_flip_prob)
            || !(self.noise_std >= 0.0)
        {
            return Err(Error::usage("invalid SEM specification"));
        }
        Ok(())
    }
}

/// Edge weights aligned with [`Dag::parents`]. Linear mechanisms use one
/// projection per node, nonlinear ones three (tanh, cos, sin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemWeights {
    /// `projections[j][m]` has one weight per parent of `j`.
    pub projections: Vec<Vec<Vec<f64>>>,
}

pub fn sample_weights(dag: &Dag, spec: &SemSpec, seed: u64) -> Result<SemWeights> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = match spec.kind {
        SemKind::Linear => 1,
        SemKind::Nonlinear => 3,
    };
    let draw = |rng: &mut ChaCha8Rng| {
        let mag = if spec.weight_low == spec.weight_high {
            spec.weight_low
        } else {
            rng.random_range(spec.weight_low..=spec.weight_high)
        };
        if rng.random::<f64>() < spec.sign_flip_prob {
            -mag
        } else {
            mag
        }
    };
    let projections = (0..dag.dim())
        .map(|j| {
            (0..count)
                .map(|_| dag.parents(j).iter().map(|_| draw(&mut rng)).collect())
                .collect()
        })
        .collect();
    Ok(SemWeights { projections })
}

/// Draws `n` samples of `X_j = f_j(Π_j) + z_j` in topological order.
///
/// A node without parents has projection 0, so nonlinear roots are `1 + z_j`
/// and linear roots are `z_j`.
pub fn simulate(dag: &Dag, weights: &SemWeights, spec: &SemSpec, n: usize, seed: u64) -> Result<Table> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::usage("simulate needs n >= 1"));
    }
    let d = dag.dim();
    if weights.projections.len() != d {
        return Err(Error::shape("weights do not match DAG"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..d {
            let parents = dag.parents(j);
            let row = &values[i * d..(i + 1) * d];
            let proj = |m: usize| -> f64 {
                parents
                    .iter()
                    .zip(&weights.projections[j][m])
                    .map(|(&p, &w)| w * row[p])
                    .sum()
            };
            let mean = match spec.kind {
                SemKind::Linear => proj(0),
                SemKind::Nonlinear => proj(0).tanh() + proj(1).cos() + proj(2).sin(),
            };
            let z: f64 = rng.sample(StandardNormal);
            values[i * d + j] = mean + spec.noise_std * z;
        }
    }
    Table::new(Table::default_names(d), n, values)
}

/// Node `j` together with all of its ancestors.
pub fn ancestor_closure(dag: &Dag, j: usize) -> Result<BTreeSet<usize>> {
    if j >= dag.dim() {
        return Err(Error::usage(format!("node {j} out of range")));
    }
    let mut closure = BTreeSet::from([j]);
    let mut frontier = vec![j];
    while let Some(v) = frontier.pop() {
        for &p in dag.parents(v) {
            if closure.insert(p) {
                frontier.push(p);
            }
        }
    }
    Ok(closure)
}

/// `max_j |ancestor_closure(j)|`.
pub fn max_ancestor_size(dag: &Dag) -> usize {
    (0..dag.dim())
        .map(|j| ancestor_closure(dag, j).map_or(0, |s| s.len()))
        .max()
        .unwrap_or(0)
}

/// Ground-truth graph file written next to simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagFile {
    pub d: usize,
    /// `[from, to]`, 0-based column indices.
    pub edges: Vec<[usize; 2]>,
    pub kind: SemKind,
    pub seed: u64,
}

impl DagFile {
    pub fn new(dag: &Dag, kind: SemKind, seed: u64) -> Self {
        DagFile {
            d: dag.dim(),
            edges: dag.edges().into_iter().map(|(i, j)| [i, j]).collect(),
            kind,
            seed,
        }
    }

    pub fn to_dag(&self) -> Result<Dag> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        Dag::from_edges(self.d, &edges)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
