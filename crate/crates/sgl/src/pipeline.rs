//! End-to-end classification pipeline and parameter sweeps.
//!
//! [`run_pipeline`] wires the stages together: spectral reduction, local
//! covariance estimation, superpixel segmentation, feature extraction, graph
//! construction, label propagation, pixel projection, and scoring. Every
//! stage is deterministic for a fixed [`RunConfig`], so the returned
//! [`RunReport`] serializes to identical bytes across runs and thread counts;
//! wall-clock numbers live in the separate [`StageTimings`] so they never
//! contaminate that guarantee.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SuperpixelFeatures;
use crate::graph::{build_knn_graph, GraphConfig, WeightedGraph};
use crate::io::Scene;
use crate::lgc::{
    assign_labels, lgc_solve, lift_labels, project_to_pixels, LabelLift, LabelMatrix,
};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::pca::{pca_fit, pca_reduce, PcaOptions};
use crate::sampling::{sample_training_pixels, TrainingSet};
use crate::superpixel::{hms_segment, CovarianceField, HmsConfig, SuperpixelMap};

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 3] = ["indian_pines", "salinas", "pavia_university"];

/// Complete, serializable configuration of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Preset this configuration started from, if any.
    pub preset: Option<String>,
    pub pca: PcaOptions,
    pub hms: HmsConfig,
    pub graph: GraphConfig,
    /// Bandwidth of the neighbor-weight softmax in feature extraction.
    pub feature_bandwidth: f64,
    /// How superpixel label rows are normalized before propagation.
    pub label_lift: LabelLift,
    /// Training pixels drawn per class.
    pub per_class: usize,
    /// Seed for the training draw (and the `mu` jitter, when enabled).
    pub seed: u64,
    /// Draw `mu` uniformly from `[0.1, 0.15]` per run instead of using the
    /// configured value.
    pub mu_jitter: bool,
    /// Score training pixels along with the held-out ones.
    pub include_train_in_eval: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            pca: PcaOptions::default(),
            hms: HmsConfig::default(),
            graph: GraphConfig::default(),
            feature_bandwidth: 15.0,
            label_lift: LabelLift::default(),
            per_class: 10,
            seed: 0,
            mu_jitter: false,
            include_train_in_eval: false,
        }
    }
}

impl RunConfig {
    /// Check every field against its module's bounds for a `width` x `height`
    /// scene. The k-nearest-neighbor count is checked again once the actual
    /// superpixel count is known.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(self.feature_bandwidth.is_finite() && self.feature_bandwidth > 0.0) {
            return Err(Error::Config(format!(
                "feature bandwidth must be positive and finite, got {}",
                self.feature_bandwidth
            )));
        }
        if self.per_class == 0 {
            return Err(Error::Config(
                "per_class must be at least 1 training pixel".into(),
            ));
        }
        self.hms.validate(width, height)?;
        self.graph.validate_bounds()
    }
}

/// Parameter bundle tuned for a dataset family: `indian_pines`, `salinas`,
/// or `pavia_university`.
pub fn preset(name: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let (kernel_beta, sigma_l, k_init) = match name {
        "indian_pines" => (0.9, 0.45, 1200),
        "salinas" => (0.9, 3.6, 1400),
        "pavia_university" => (0.1, 18.5, 2400),
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}'; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    cfg.preset = Some(name.to_string());
    cfg.graph.kernel_beta = kernel_beta;
    cfg.graph.sigma_l = sigma_l;
    cfg.hms.k_init = k_init;
    Ok(cfg)
}

/// Deterministic summary of one pipeline run. For a fixed config and seed its
/// JSON serialization is byte-identical across runs and thread counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub width: usize,
    pub height: usize,
    pub input_bands: usize,
    /// Spectral dimensions kept by PCA.
    pub pca_dims: usize,
    /// Fraction of total variance the kept dimensions explain.
    pub pca_explained: f64,
    pub num_superpixels: usize,
    pub hms_iterations: usize,
    pub hms_final_energy: f64,
    pub graph_edges: usize,
    /// Effective label-fit weight (after jitter, when enabled).
    pub mu: f64,
    /// Propagation strength `1 - mu/(1 + mu)`.
    pub alpha: f64,
    /// Max-norm residual of the propagation fixed-point equation.
    pub solve_residual: f64,
    pub training_pixels: usize,
    /// Classes with fewer labeled pixels than requested.
    pub training_short_classes: Vec<u16>,
    pub metrics: MetricsReport,
}

/// Wall-clock seconds per stage; kept apart from [`RunReport`] because
/// timings differ run to run while the report must not.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StageTimings {
    pub pca_s: f64,
    pub covariance_s: f64,
    pub segmentation_s: f64,
    pub features_s: f64,
    pub graph_s: f64,
    pub solve_s: f64,
    pub metrics_s: f64,
    pub total_s: f64,
}

/// Everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub superpixels: SuperpixelMap,
    /// Final class per superpixel (`0` = unclassifiable).
    pub superpixel_labels: Vec<u16>,
    /// Final class per pixel, row-major.
    pub pixel_labels: Vec<u16>,
    pub training: TrainingSet,
    pub report: RunReport,
    pub timings: StageTimings,
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let value = f();
    *slot = start.elapsed().as_secs_f64();
    value
}

/// Effective `mu` for a run: the configured value, or a seeded uniform draw
/// from `[0.1, 0.15]` when jitter is enabled. The draw uses its own stream so
/// the training sample is identical with jitter on or off.
fn effective_mu(cfg: &RunConfig) -> f64 {
    if cfg.mu_jitter {
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1));
        0.1 + 0.05 * rng.gen::<f64>()
    } else {
        cfg.graph.mu
    }
}

/// Max-norm residual of `F - alpha*S*F - (1 - alpha)*Y` at the returned
/// solution, with `S` the symmetrically normalized adjacency.
fn solve_residual(graph: &WeightedGraph, f: &LabelMatrix, y: &LabelMatrix, mu: f64) -> f64 {
    let n = graph.num_nodes();
    let alpha = 1.0 / (1.0 + mu);
    let lgc_beta = mu / (1.0 + mu);
    let inv_sqrt_d: Vec<f64> = (0..n)
        .map(|i| {
            let d = graph.degree(i);
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut worst = 0.0f64;
    for i in 0..n {
        for c in 0..f.cols() {
            let mut sf = 0.0;
            for &(j, w) in graph.neighbors_of(i) {
                sf += w * inv_sqrt_d[j as usize] * f.get(j as usize, c);
            }
            let r = f.get(i, c) - alpha * inv_sqrt_d[i] * sf - lgc_beta * y.get(i, c);
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Run the full pipeline on a loaded scene.
///
/// The scene must carry a ground truth: training pixels are drawn from it and
/// the held-out remainder is scored. Errors are tagged with the stage that
/// produced them.
pub fn run_pipeline(scene: &Scene, cfg: &RunConfig) -> Result<PipelineOutput> {
    let total_start = Instant::now();
    let cube = &scene.cube;
    cfg.validate(cube.width(), cube.height())
        .map_err(|e| e.in_stage("config"))?;
    let gt = scene
        .ground_truth
        .as_ref()
        .ok_or_else(|| Error::Data("scene has no ground truth to train from".into()))
        .map_err(|e| e.in_stage("sampling"))?;
    let training =
        sample_training_pixels(gt, cfg.per_class, cfg.seed).map_err(|e| e.in_stage("sampling"))?;

    let mut timings = StageTimings::default();
    let model =
        timed(&mut timings.pca_s, || pca_fit(cube, &cfg.pca)).map_err(|e| e.in_stage("pca"))?;
    let reduced = pca_reduce(cube, &model).map_err(|e| e.in_stage("pca"))?;

    let field = timed(&mut timings.covariance_s, || {
        CovarianceField::compute(&reduced, cfg.hms.cov_window, cfg.hms.cov_regularization)
    })
    .map_err(|e| e.in_stage("covariance"))?;

    let hms = timed(&mut timings.segmentation_s, || {
        hms_segment(&reduced, &field, &cfg.hms)
    })
    .map_err(|e| e.in_stage("segmentation"))?;
    let map = &hms.map;

    let features = timed(&mut timings.features_s, || {
        SuperpixelFeatures::extract(map, &reduced, cfg.feature_bandwidth)
    })
    .map_err(|e| e.in_stage("features"))?;

    let mu = effective_mu(cfg);
    let graph_cfg = GraphConfig { mu, ..cfg.graph };
    let graph = timed(&mut timings.graph_s, || {
        graph_cfg.validate(map.len())?;
        build_knn_graph(&features, &graph_cfg)
    })
    .map_err(|e| e.in_stage("graph"))?;

    let (superpixel_labels, pixel_labels, residual) = timed(&mut timings.solve_s, || {
        let y = lift_labels(map, &training, gt.num_classes(), cfg.label_lift);
        let f = lgc_solve(&graph, &y, mu)?;
        let residual = solve_residual(&graph, &f, &y, mu);
        let sp_labels = assign_labels(&f);
        let px_labels = project_to_pixels(map, &sp_labels);
        Ok::<_, Error>((sp_labels, px_labels, residual))
    })
    .map_err(|e| e.in_stage("solve"))?;

    let exclude = if cfg.include_train_in_eval {
        None
    } else {
        Some(&training)
    };
    let metrics = timed(&mut timings.metrics_s, || {
        compute_metrics(&pixel_labels, gt, exclude)
    })
    .map_err(|e| e.in_stage("metrics"))?;

    timings.total_s = total_start.elapsed().as_secs_f64();
    let report = RunReport {
        config: cfg.clone(),
        width: cube.width(),
        height: cube.height(),
        input_bands: cube.bands(),
        pca_dims: reduced.dims(),
        pca_explained: model.explained_variance_ratio().iter().sum(),
        num_superpixels: map.len(),
        hms_iterations: hms.iterations,
        hms_final_energy: hms.final_energy(),
        graph_edges: graph.num_edges(),
        mu,
        alpha: graph_cfg.alpha(),
        solve_residual: residual,
        training_pixels: training.len(),
        training_short_classes: training.short_classes().to_vec(),
        metrics,
    };
    Ok(PipelineOutput {
        superpixels: hms.map,
        superpixel_labels,
        pixel_labels,
        training,
        report,
        timings,
    })
}

/// One aggregated row of a superpixel-count sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub mean_oa: f64,
    pub std_oa: f64,
}

/// Sweep the target superpixel count, repeating each setting with fresh
/// training draws (seeds `base.seed + rep`).
///
/// Repetitions run as independent parallel pipelines; each row aggregates its
/// repetitions in a fixed order, so the result is deterministic. `std_oa` is
/// the sample standard deviation, zero for a single repetition.
pub fn sweep_k(
    scene: &Scene,
    base: &RunConfig,
    k_values: &[usize],
    repetitions: usize,
) -> Result<Vec<SweepRow>> {
    if repetitions == 0 {
        return Err(Error::Config("sweep needs at least one repetition".into()));
    }
    if k_values.is_empty() {
        return Err(Error::Config("sweep needs at least one value of K".into()));
    }
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let oas: Vec<f64> = (0..repetitions)
            .into_par_iter()
            .map(|rep| {
                let mut cfg = base.clone();
                cfg.hms.k_init = k;
                cfg.seed = base.seed.wrapping_add(rep as u64);
                run_pipeline(scene, &cfg).map(|out| out.report.metrics.oa)
            })
            .collect::<Result<_>>()?;
        let n = oas.len() as f64;
        let mean_oa = oas.iter().sum::<f64>() / n;
        let std_oa = if oas.len() < 2 {
            0.0
        } else {
            (oas.iter()
                .map(|&x| (x - mean_oa) * (x - mean_oa))
                .sum::<f64>()
                / (n - 1.0))
                .sqrt()
        };
        rows.push(SweepRow { k, mean_oa, std_oa });
    }
    Ok(rows)
}

/// Serialize sweep rows as `k,mean_oa,std_oa` CSV. Floats use the shortest
/// representation that parses back to the identical value.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("k,mean_oa,std_oa\n");
    for row in rows {
        out.push_str(&format!("{},{},{}\n", row.k, row.mean_oa, row.std_oa));
    }
    out
}

/// Parse CSV produced by [`sweep_csv`].
pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("k,mean_oa,std_oa") => {}
        other => {
            return Err(Error::Data(format!(
                "unexpected sweep CSV header: {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let row = (|| {
            Some(SweepRow {
                k: fields.next()?.parse().ok()?,
                mean_oa: fields.next()?.parse().ok()?,
                std_oa: fields.next()?.parse().ok()?,
            })
        })()
        .filter(|_| fields.next().is_none())
        .ok_or_else(|| Error::Data(format!("malformed sweep CSV row: {line:?}")))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Cap the global thread pool from the `SGL_THREADS` environment variable.
/// Returns the effective thread count. Only the first call in a process can
/// change the pool; later calls report the existing size.
pub fn init_thread_pool() -> usize {
    if let Ok(raw) = std::env::var("SGL_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
    rayon::current_num_threads()
}
