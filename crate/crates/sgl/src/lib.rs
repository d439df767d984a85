//! Semi-supervised classification of multi-band raster images over a
//! superpixel graph.
//!
//! The pipeline, end to end:
//!
//! 1. Load a cube ([`io::load_cube`]) or generate one
//!    ([`synthetic::generate_synthetic_scene`]).
//! 2. Reduce its spectral dimension by PCA ([`pca`]).
//! 3. Oversegment the reduced image into compact, spectrally homogeneous
//!    superpixels using local covariance structure ([`superpixel`]).
//! 4. Summarize each superpixel by mean, neighborhood-weighted, and centroid
//!    features ([`features`]).
//! 5. Connect superpixels in a weighted k-nearest-neighbor graph and spread
//!    the training labels over it ([`graph`], [`lgc`]).
//! 6. Project superpixel labels back to pixels and score the result
//!    ([`metrics`]).
//!
//! [`pipeline::run_pipeline`] wires the stages together; the `sgl` binary
//! exposes them as subcommands.

pub mod cube;
pub mod error;
pub mod features;
pub mod graph;
pub mod io;
pub mod lgc;
pub mod metrics;
pub mod pca;
pub mod pipeline;
pub mod render;
pub mod sampling;
pub mod superpixel;
pub mod synthetic;

pub use cube::{GroundTruth, HyperspectralCube};
pub use error::{Error, ErrorClass, Result};
pub use features::SuperpixelFeatures;
pub use graph::{build_knn_graph, GraphConfig, WeightedGraph};
pub use io::{
    load_cube, load_label_map, save_cube, save_label_map, write_json, write_raw_u32le, CubeHeader,
    LabelMapHeader, Scene,
};
pub use lgc::{
    assign_labels, lgc_cost, lgc_solve, lift_labels, project_to_pixels, LabelLift, LabelMatrix,
    LabelRole,
};
pub use metrics::{compute_metrics, ConfusionMatrix, MetricsReport};
pub use pca::{pca_fit, pca_reduce, PcaModel, PcaOptions, ReducedImage};
pub use pipeline::{
    init_thread_pool, preset, run_pipeline, sweep_k, PipelineOutput, RunConfig, RunReport,
    StageTimings, SweepRow,
};
pub use render::{render_map, write_map_image, Palette};
pub use sampling::{sample_training_pixels, TrainingSample, TrainingSet};
pub use superpixel::{
    enforce_connectivity, hms_segment, CovarianceField, HmsConfig, HmsResult, SuperpixelMap,
};
pub use synthetic::{
    generate_synthetic_scene, min_spectrum_separation, RegionLayout, SyntheticSceneSpec,
};
