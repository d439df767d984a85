//! Label propagation over the superpixel graph.
//!
//! Training pixels are lifted onto superpixels as soft label rows, then
//! spread across the graph by minimizing
//!
//! ```text
//! Q(F) = 1/2 Σ_{i<j} W_ij ‖F_i/√D_i − F_j/√D_j‖² + (μ/2) ‖F − Y‖²_F
//! ```
//!
//! whose unique minimizer solves `(I − αS)F = lgc_beta·Y` with the
//! symmetrically normalized adjacency `S = D^{−1/2} W D^{−1/2}`,
//! `lgc_beta = μ/(1+μ)`, and `α = 1 − lgc_beta`. The solve is a dense
//! Cholesky factorization up to [`DENSE_SOLVE_LIMIT`] nodes and a per-class
//! conjugate gradient beyond that — never a low-rank approximation, since
//! the contracted graph is small by design. Isolated nodes take zero rows
//! of `S` (the limit of the normalization) and end at `lgc_beta` times
//! their initial row. Row classes then come from the row-wise argmax and
//! flow back to pixels through the superpixel assignment.

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::sampling::TrainingSet;
use crate::superpixel::SuperpixelMap;

/// Node count up to which the propagation system is solved by dense
/// factorization; larger graphs use conjugate gradients.
pub const DENSE_SOLVE_LIMIT: usize = 4096;

/// Convergence tolerance (relative residual) of the conjugate-gradient
/// fallback.
pub const CG_TOLERANCE: f64 = 1e-10;

/// What a [`LabelMatrix`] holds: initial evidence or a propagation result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRole {
    /// Lifted training labels `Y`.
    Initial,
    /// Propagated scores `F`.
    Solved,
}

/// How lifted label rows are normalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelLift {
    /// Divide class counts by the *labeled* pixels of the superpixel; rows
    /// with any evidence sum to exactly 1.
    #[default]
    Labeled,
    /// Divide by the total pixel count of the superpixel; sparse evidence
    /// yields proportionally weaker rows.
    All,
}

/// Per-superpixel class scores: one row per node, one column per class
/// (class `l` lives in column `l - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    role: LabelRole,
}

impl LabelMatrix {
    /// Wrap row-major data; entries must be finite.
    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>, role: LabelRole) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "label matrix of {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "label matrix entry ({}, {}) is not finite",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            role,
        })
    }

    pub fn zeros(rows: usize, cols: usize, role: LabelRole) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            role,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn role(&self) -> LabelRole {
        self.role
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Row-major entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Whether row `row` carries any positive evidence.
    pub fn is_labeled(&self, row: usize) -> bool {
        self.row(row).iter().any(|&v| v > 0.0)
    }

    /// Number of rows with any positive evidence.
    pub fn labeled_count(&self) -> usize {
        (0..self.rows).filter(|&r| self.is_labeled(r)).count()
    }
}

/// Lift training pixels onto superpixels: row `v` holds the class
/// proportions of the training pixels inside superpixel `v` (normalized per
/// `mode`), or zeros when none of its pixels are labeled.
pub fn lift_labels(
    map: &SuperpixelMap,
    train: &TrainingSet,
    num_classes: u16,
    mode: LabelLift,
) -> LabelMatrix {
    let k = map.len();
    let c = num_classes as usize;
    let mut counts = vec![0.0f64; k * c];
    let mut labeled = vec![0usize; k];
    for sample in train.samples() {
        assert!(
            sample.x < map.width() && sample.y < map.height(),
            "training pixel ({}, {}) is outside the {}x{} map",
            sample.x,
            sample.y,
            map.width(),
            map.height()
        );
        assert!(
            (1..=num_classes).contains(&sample.class),
            "training class {} is outside 1..={num_classes}",
            sample.class
        );
        let v = map.assignment()[sample.y * map.width() + sample.x] as usize;
        counts[v * c + (sample.class - 1) as usize] += 1.0;
        labeled[v] += 1;
    }
    let mut data = vec![0.0f64; k * c];
    for v in 0..k {
        if labeled[v] == 0 {
            continue;
        }
        let divisor = match mode {
            LabelLift::Labeled => labeled[v] as f64,
            LabelLift::All => map.pixels_of(v).len() as f64,
        };
        for l in 0..c {
            data[v * c + l] = counts[v * c + l] / divisor;
        }
    }
    LabelMatrix {
        rows: k,
        cols: c,
        data,
        role: LabelRole::Initial,
    }
}

/// Propagate `y` over the graph: the unique minimizer of the quadratic cost
/// (see the module docs), `F = lgc_beta·(I − αS)^{−1}·Y`.
pub fn lgc_solve(graph: &WeightedGraph, y: &LabelMatrix, mu: f64) -> Result<LabelMatrix> {
    let k = graph.num_nodes();
    let c = y.cols();
    if y.rows() != k {
        return Err(Error::Dimension(format!(
            "label matrix has {} rows for a graph of {k} nodes",
            y.rows()
        )));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::Config(format!(
            "mu must be positive and finite, got {mu}"
        )));
    }
    if y.labeled_count() == 0 {
        return Err(Error::Data(
            "label propagation needs at least one labeled superpixel".to_string(),
        ));
    }
    let lgc_beta = mu / (1.0 + mu);
    let alpha = 1.0 - lgc_beta;
    let inv_sqrt_d: Vec<f64> = (0..k)
        .map(|i| {
            let d = graph.degree(i);
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();

    let data = if k <= DENSE_SOLVE_LIMIT {
        solve_dense(graph, &inv_sqrt_d, alpha, lgc_beta, y)?
    } else {
        solve_cg(graph, &inv_sqrt_d, alpha, lgc_beta, y)?
    };
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "label propagation produced non-finite scores".to_string(),
        ));
    }
    Ok(LabelMatrix {
        rows: k,
        cols: c,
        data,
        role: LabelRole::Solved,
    })
}

fn solve_dense(
    graph: &WeightedGraph,
    inv_sqrt_d: &[f64],
    alpha: f64,
    lgc_beta: f64,
    y: &LabelMatrix,
) -> Result<Vec<f64>> {
    let k = graph.num_nodes();
    let c = y.cols();
    let mut a = DMatrix::<f64>::identity(k, k);
    for i in 0..k {
        for &(j, w) in graph.neighbors_of(i) {
            if w > 0.0 {
                // Grouped so the (i, j) and (j, i) entries round identically.
                a[(i, j as usize)] -= (alpha * w) * (inv_sqrt_d[i] * inv_sqrt_d[j as usize]);
            }
        }
    }
    let b = DMatrix::from_fn(k, c, |r, l| lgc_beta * y.get(r, l));
    let chol = Cholesky::new(a).ok_or_else(|| {
        Error::Numerical("propagation system is not positive definite".to_string())
    })?;
    let f = chol.solve(&b);
    let mut data = vec![0.0f64; k * c];
    for r in 0..k {
        for l in 0..c {
            data[r * c + l] = f[(r, l)];
        }
    }
    Ok(data)
}

fn solve_cg(
    graph: &WeightedGraph,
    inv_sqrt_d: &[f64],
    alpha: f64,
    lgc_beta: f64,
    y: &LabelMatrix,
) -> Result<Vec<f64>> {
    let k = graph.num_nodes();
    let c = y.cols();
    let apply = |x: &[f64], out: &mut [f64]| {
        for i in 0..k {
            let mut acc = 0.0;
            for &(j, w) in graph.neighbors_of(i) {
                if w > 0.0 {
                    acc += w * inv_sqrt_d[j as usize] * x[j as usize];
                }
            }
            out[i] = x[i] - alpha * inv_sqrt_d[i] * acc;
        }
    };

    let columns: Vec<Vec<f64>> = (0..c)
        .into_par_iter()
        .map(|l| {
            let b: Vec<f64> = (0..k).map(|r| lgc_beta * y.get(r, l)).collect();
            let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut x = vec![0.0f64; k];
            if b_norm == 0.0 {
                return Ok(x);
            }
            let mut r = b;
            let mut p = r.clone();
            let mut ap = vec![0.0f64; k];
            let mut rs: f64 = r.iter().map(|v| v * v).sum();
            let max_iters = 20_000;
            for _ in 0..max_iters {
                if rs.sqrt() <= CG_TOLERANCE * b_norm {
                    return Ok(x);
                }
                apply(&p, &mut ap);
                let p_ap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
                let step = rs / p_ap;
                for i in 0..k {
                    x[i] += step * p[i];
                    r[i] -= step * ap[i];
                }
                let rs_new: f64 = r.iter().map(|v| v * v).sum();
                let dir = rs_new / rs;
                for i in 0..k {
                    p[i] = r[i] + dir * p[i];
                }
                rs = rs_new;
            }
            if rs.sqrt() <= CG_TOLERANCE * b_norm {
                Ok(x)
            } else {
                Err(Error::Numerical(format!(
                    "conjugate gradient stalled at relative residual {:.3e}",
                    rs.sqrt() / b_norm
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut data = vec![0.0f64; k * c];
    for (l, col) in columns.iter().enumerate() {
        for r in 0..k {
            data[r * c + l] = col[r];
        }
    }
    Ok(data)
}

/// The quadratic objective the propagation minimizes: smoothness over
/// unordered edges plus the `μ`-weighted fit to the initial labels.
/// Isolated nodes contribute only to the fit term.
pub fn lgc_cost(graph: &WeightedGraph, f: &LabelMatrix, y: &LabelMatrix, mu: f64) -> f64 {
    let k = graph.num_nodes();
    let c = f.cols();
    let mut smooth = 0.0;
    for i in 0..k {
        let di = graph.degree(i);
        for &(j, w) in graph.neighbors_of(i) {
            let j = j as usize;
            if j <= i || w <= 0.0 {
                continue;
            }
            let (isi, isj) = (1.0 / di.sqrt(), 1.0 / graph.degree(j).sqrt());
            for l in 0..c {
                let d = f.get(i, l) * isi - f.get(j, l) * isj;
                smooth += w * d * d;
            }
        }
    }
    let fit: f64 = f
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    0.5 * smooth + 0.5 * mu * fit
}

/// Row-wise class decision: the 1-based argmax, ties to the lowest class;
/// rows with no positive score become the unclassified sentinel 0.
pub fn assign_labels(f: &LabelMatrix) -> Vec<u16> {
    (0..f.rows())
        .map(|r| {
            let mut best = 0.0f64;
            let mut best_class = 0u16;
            for (idx, &v) in f.row(r).iter().enumerate() {
                if v > best {
                    best = v;
                    best_class = idx as u16 + 1;
                }
            }
            best_class
        })
        .collect()
}

/// Expand per-superpixel classes to a per-pixel map.
pub fn project_to_pixels(map: &SuperpixelMap, labels: &[u16]) -> Vec<u16> {
    assert_eq!(
        labels.len(),
        map.len(),
        "one class per superpixel is required"
    );
    map.assignment()
        .iter()
        .map(|&v| labels[v as usize])
        .collect()
}
