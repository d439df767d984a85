//! Weighted k-nearest-neighbor graph over superpixels.
//!
//! The edge weight between two superpixels is a product of two Gaussian
//! kernels: a spectral kernel blending the mean and neighbor-weighted
//! features (balanced by `kernel_beta`), and a spatial kernel over centroid
//! distance. Both exponents are non-positive, so weights live in `[0, 1]`
//! with 1 meaning most similar. The edge set keeps the union of each node's
//! `k_nn` strongest partners — an edge survives if either endpoint ranks the
//! other among its nearest — which makes the weight matrix symmetric by
//! construction.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::SuperpixelFeatures;
use crate::superpixel::euclid_sq;

/// Parameters of graph construction and the label-propagation solve.
///
/// The similarity balance `kernel_beta` and the propagation regularizer `mu`
/// are distinct knobs kept under distinct names to avoid mix-ups: from `mu`
/// derive `lgc_beta = mu / (1 + mu)` and `alpha = 1 - lgc_beta`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GraphConfig {
    /// Balance between mean and neighbor-weighted features in the spectral
    /// kernel, in `[0, 1]`: 1 uses only mean features.
    pub kernel_beta: f64,
    /// Width of the spectral kernel.
    pub sigma_s: f64,
    /// Width of the spatial (centroid) kernel. Strongly scene-dependent;
    /// the dataset presets override the placeholder default.
    pub sigma_l: f64,
    /// Neighbors ranked per node when building the edge set.
    pub k_nn: usize,
    /// Label-propagation regularizer (fit-to-labels strength).
    pub mu: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            kernel_beta: 0.9,
            sigma_s: 0.20,
            sigma_l: 1.0,
            k_nn: 8,
            mu: 0.125,
        }
    }
}

impl GraphConfig {
    /// Check parameter ranges against a graph of `num_nodes` nodes.
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        self.validate_bounds()?;
        if self.k_nn >= num_nodes {
            return Err(Error::Config(format!(
                "k_nn {} must be smaller than the number of superpixels {num_nodes}",
                self.k_nn
            )));
        }
        Ok(())
    }

    /// Check the parameter ranges that do not depend on the graph size.
    pub fn validate_bounds(&self) -> Result<()> {
        if !(self.kernel_beta.is_finite() && (0.0..=1.0).contains(&self.kernel_beta)) {
            return Err(Error::Config(format!(
                "kernel_beta must lie in [0, 1], got {}",
                self.kernel_beta
            )));
        }
        for (name, v) in [("sigma_s", self.sigma_s), ("sigma_l", self.sigma_l)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::Config(format!(
                "mu must be positive and finite, got {}",
                self.mu
            )));
        }
        if self.k_nn == 0 {
            return Err(Error::Config("k_nn must be at least 1".to_string()));
        }
        Ok(())
    }

    /// Share of the initial labels retained at the fixed point:
    /// `mu / (1 + mu)`.
    pub fn lgc_beta(&self) -> f64 {
        self.mu / (1.0 + self.mu)
    }

    /// Propagation strength `1 - lgc_beta`.
    pub fn alpha(&self) -> f64 {
        1.0 - self.lgc_beta()
    }
}

/// Symmetric weighted graph stored as sorted per-node adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    /// For each node, `(partner, weight)` sorted by partner index.
    neighbors: Vec<Vec<(u32, f64)>>,
    /// Row sums of the weight matrix.
    degrees: Vec<f64>,
}

impl WeightedGraph {
    /// Build a graph from an explicit undirected edge list. Each `(i, j, w)`
    /// inserts the edge in both directions; weights must lie in `[0, 1]`,
    /// self-loops and duplicate pairs are rejected. Nodes may end up
    /// isolated, which the propagation solve handles.
    pub fn from_edges(num_nodes: usize, edges: &[(u32, u32, f64)]) -> Result<Self> {
        let mut neighbors: Vec<Vec<(u32, f64)>> = vec![Vec::new(); num_nodes];
        for &(i, j, w) in edges {
            let (iu, ju) = (i as usize, j as usize);
            if iu >= num_nodes || ju >= num_nodes {
                return Err(Error::Dimension(format!(
                    "edge ({i}, {j}) is out of range for {num_nodes} nodes"
                )));
            }
            if iu == ju {
                return Err(Error::Data(format!("self-loop on node {i}")));
            }
            if !(w.is_finite() && (0.0..=1.0).contains(&w)) {
                return Err(Error::Data(format!(
                    "edge ({i}, {j}) has weight {w} outside [0, 1]"
                )));
            }
            neighbors[iu].push((j, w));
            neighbors[ju].push((i, w));
        }
        for (i, list) in neighbors.iter_mut().enumerate() {
            list.sort_unstable_by_key(|&(j, _)| j);
            if list.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::Data(format!("duplicate edge on node {i}")));
            }
        }
        let degrees = neighbors
            .iter()
            .map(|list| list.iter().map(|&(_, w)| w).sum())
            .collect();
        Ok(Self { neighbors, degrees })
    }

    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// `(partner, weight)` pairs of node `i`, sorted by partner index.
    pub fn neighbors_of(&self, i: usize) -> &[(u32, f64)] {
        &self.neighbors[i]
    }

    /// Weighted degree `D_ii` of node `i`.
    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    /// Weight of edge `(i, j)`, zero when the edge is absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.neighbors[i]
            .binary_search_by_key(&(j as u32), |&(p, _)| p)
            .map_or(0.0, |pos| self.neighbors[i][pos].1)
    }
}

/// Similarity weight between superpixels `i` and `j`: the product of the
/// spectral kernel `exp(((beta - 1)·‖S^w_i - S^w_j‖² - beta·‖S^m_i -
/// S^m_j‖²) / sigma_s²)` and the spatial kernel `exp(-‖S^p_i - S^p_j‖² /
/// sigma_l²)`. Always in `[0, 1]`.
pub fn pair_weight(i: usize, j: usize, features: &SuperpixelFeatures, cfg: &GraphConfig) -> f64 {
    let beta = cfg.kernel_beta;
    let dw = euclid_sq(features.weighted_of(i), features.weighted_of(j));
    let dm = euclid_sq(features.mean_of(i), features.mean_of(j));
    let s = (((beta - 1.0) * dw - beta * dm) / (cfg.sigma_s * cfg.sigma_s)).exp();
    let (xi, yi) = features.centroid_of(i);
    let (xj, yj) = features.centroid_of(j);
    let dp = (xi - xj) * (xi - xj) + (yi - yj) * (yi - yj);
    let l = (-dp / (cfg.sigma_l * cfg.sigma_l)).exp();
    s * l
}

/// Build the k-nearest-neighbor graph over all superpixels: every node
/// ranks all partners by [`pair_weight`] (descending, ties to the lower
/// index) and an edge is kept when either endpoint ranks the other within
/// its top `k_nn`.
pub fn build_knn_graph(features: &SuperpixelFeatures, cfg: &GraphConfig) -> Result<WeightedGraph> {
    let k = features.len();
    cfg.validate(k)?;

    // Dense pairwise weights, one row per node. Computing w_ij and w_ji
    // independently is safe: both evaluate the same expression on the same
    // operands, so the matrix is bitwise symmetric.
    let rows: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        pair_weight(i, j, features, cfg)
                    }
                })
                .collect()
        })
        .collect();

    let chosen: Vec<Vec<u32>> = rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let mut order: Vec<u32> = (0..k as u32).filter(|&j| j as usize != i).collect();
            order.sort_unstable_by(|&a, &b| {
                row[b as usize]
                    .partial_cmp(&row[a as usize])
                    .expect("weights are finite")
                    .then(a.cmp(&b))
            });
            order.truncate(cfg.k_nn);
            order
        })
        .collect();

    let mut keeps = vec![false; k * k];
    for (i, list) in chosen.iter().enumerate() {
        for &j in list {
            keeps[i * k + j as usize] = true;
            keeps[j as usize * k + i] = true;
        }
    }

    let neighbors: Vec<Vec<(u32, f64)>> = (0..k)
        .map(|i| {
            (0..k as u32)
                .filter(|&j| keeps[i * k + j as usize])
                .map(|j| (j, rows[i][j as usize]))
                .collect()
        })
        .collect();
    let degrees = neighbors
        .iter()
        .map(|list| list.iter().map(|&(_, w)| w).sum())
        .collect();
    Ok(WeightedGraph { neighbors, degrees })
}
