//! Command-line front end for the superpixel-graph classification library.
//!
//! Subcommands cover the full workflow: `synth` writes a synthetic labeled
//! scene, `segment` oversegments a scene into superpixels, `classify` runs
//! the end-to-end pipeline, `sweep` aggregates accuracy across superpixel
//! counts, and `eval` scores a saved label map. Exit codes: 0 success,
//! 1 usage error, 2 data error, 3 numerical failure. The `SGL_THREADS`
//! environment variable caps the worker-thread count.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sgl::io::{load_cube, load_label_map, save_cube, save_label_map, write_json, write_raw_u32le};
use sgl::pipeline::{preset, run_pipeline, sweep_csv, sweep_k, RunConfig};
use sgl::render::{overlay_boundaries, render_map, write_png, write_ppm, Palette};
use sgl::superpixel::{hms_segment, CovarianceField, HmsConfig};
use sgl::synthetic::{generate_synthetic_scene, SyntheticSceneSpec};
use sgl::{compute_metrics, pca_fit, pca_reduce, sample_training_pixels, LabelLift, PcaOptions};

#[derive(Parser)]
#[command(
    name = "sgl",
    version,
    about = "Semi-supervised image classification over a superpixel graph"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled scene from a JSON description.
    Synth(SynthArgs),
    /// Oversegment a scene into superpixels.
    Segment(SegmentArgs),
    /// Run the full classification pipeline on a labeled scene.
    Classify(ClassifyArgs),
    /// Sweep the superpixel count and aggregate accuracy over repetitions.
    Sweep(SweepArgs),
    /// Score a saved label map against a scene's ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON file describing the scene (dimensions, spectra, noise, layout).
    #[arg(long)]
    spec: PathBuf,
    /// Directory for the generated scene files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Base name of the written scene files.
    #[arg(long, default_value = "scene")]
    name: String,
}

#[derive(Args)]
struct SegmentArgs {
    /// Scene header JSON.
    #[arg(long)]
    input: PathBuf,
    /// Directory for the assignment raster and boundary images.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Target superpixel count.
    #[arg(long)]
    k: Option<usize>,
    /// Spatial compactness weight of the clustering distance.
    #[arg(long)]
    compactness: Option<f64>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Scene header JSON; its ground truth supplies the training pixels.
    #[arg(long)]
    input: PathBuf,
    /// Directory for rasters, maps, and reports.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Target superpixel count.
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Scene header JSON; its ground truth supplies the training pixels.
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated superpixel counts to test.
    #[arg(long, value_delimiter = ',', required = true)]
    k_values: Vec<usize>,
    /// Training redraws per superpixel count.
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    /// Output CSV path.
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Label-map header JSON to score.
    #[arg(long)]
    pred: PathBuf,
    /// Scene header JSON carrying the ground truth.
    #[arg(long)]
    truth: PathBuf,
    /// Re-draw the training set with this per-class count to exclude it.
    #[arg(long, requires = "seed")]
    per_class: Option<usize>,
    /// Seed the training draw was made with.
    #[arg(long, requires = "per_class")]
    seed: Option<u64>,
    /// Score training pixels too, even when the draw is reconstructable.
    #[arg(long)]
    include_train: bool,
    /// Also write the metrics report to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Pipeline parameters shared by `classify` and `sweep`. Flags override the
/// preset or config file they start from.
#[derive(Args)]
struct ParamArgs {
    /// Parameter preset: indian_pines, salinas, or pavia_university.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON run-configuration file to start from.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Balance between mean and neighbor-weighted features, in [0, 1].
    #[arg(long)]
    kernel_beta: Option<f64>,
    /// Spectral kernel bandwidth.
    #[arg(long)]
    sigma_s: Option<f64>,
    /// Spatial kernel bandwidth, in pixels.
    #[arg(long)]
    sigma_l: Option<f64>,
    /// Neighbors per node in the superpixel graph.
    #[arg(long)]
    knn: Option<usize>,
    /// Label-fit weight of the propagation solve.
    #[arg(long)]
    mu: Option<f64>,
    /// Draw mu uniformly from [0.1, 0.15] per run instead (seeded).
    #[arg(long)]
    mu_jitter: bool,
    /// Neighbor-weight softmax bandwidth of feature extraction.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Superpixel label normalization before propagation.
    #[arg(long, value_enum)]
    label_lift: Option<LabelLiftArg>,
    /// Training pixels drawn per class.
    #[arg(long)]
    per_class: Option<usize>,
    /// Random seed for the training draw.
    #[arg(long)]
    seed: Option<u64>,
    /// Score training pixels along with the held-out ones.
    #[arg(long)]
    eval_include_train: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelLiftArg {
    /// Divide each superpixel's label row by its labeled-pixel count.
    Labeled,
    /// Divide by the superpixel's total pixel count.
    All,
}

impl From<LabelLiftArg> for LabelLift {
    fn from(arg: LabelLiftArg) -> Self {
        match arg {
            LabelLiftArg::Labeled => LabelLift::Labeled,
            LabelLiftArg::All => LabelLift::All,
        }
    }
}

impl ParamArgs {
    fn build_config(&self, k: Option<usize>) -> anyhow::Result<RunConfig> {
        let mut cfg = match (&self.preset, &self.config) {
            (Some(name), _) => preset(name)?,
            (None, Some(path)) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading run config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing run config {}", path.display()))?
            }
            (None, None) => RunConfig::default(),
        };
        if let Some(k) = k {
            cfg.hms.k_init = k;
        }
        if let Some(v) = self.kernel_beta {
            cfg.graph.kernel_beta = v;
        }
        if let Some(v) = self.sigma_s {
            cfg.graph.sigma_s = v;
        }
        if let Some(v) = self.sigma_l {
            cfg.graph.sigma_l = v;
        }
        if let Some(v) = self.knn {
            cfg.graph.k_nn = v;
        }
        if let Some(v) = self.mu {
            cfg.graph.mu = v;
        }
        if self.mu_jitter {
            cfg.mu_jitter = true;
        }
        if let Some(v) = self.bandwidth {
            cfg.feature_bandwidth = v;
        }
        if let Some(v) = self.label_lift {
            cfg.label_lift = v.into();
        }
        if let Some(v) = self.per_class {
            cfg.per_class = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if self.eval_include_train {
            cfg.include_train_in_eval = true;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let benign = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return if benign {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    sgl::init_thread_pool();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", format_error(&err));
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Print a summary line without panicking when stdout is a closed pipe
/// (e.g. `sgl classify ... | head -1`).
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{text}");
}

/// Flatten an error chain, skipping causes a wrapper already spelled out.
fn format_error(err: &anyhow::Error) -> String {
    let mut text = err.to_string();
    for cause in err.chain().skip(1) {
        let detail = cause.to_string();
        if !text.contains(&detail) {
            text.push_str(": ");
            text.push_str(&detail);
        }
    }
    text
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(lib) = cause.downcast_ref::<sgl::Error>() {
            return match lib.class() {
                sgl::ErrorClass::Usage => 1,
                sgl::ErrorClass::Data => 2,
                sgl::ErrorClass::Numerical => 3,
            };
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Segment(args) => run_segment(args),
        Command::Classify(args) => run_classify(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Eval(args) => run_eval(args),
    }
}

fn run_synth(args: SynthArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("reading scene description {}", args.spec.display()))?;
    let spec: SyntheticSceneSpec = serde_json::from_str(&text)
        .with_context(|| format!("parsing scene description {}", args.spec.display()))?;
    let scene = generate_synthetic_scene(&spec)?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let header = args.out_dir.join(format!("{}.json", args.name));
    save_cube(&scene.cube, scene.ground_truth.as_ref(), &header)?;
    emit(&format!(
        "wrote {} ({}x{}, {} bands, {} classes)",
        header.display(),
        scene.cube.width(),
        scene.cube.height(),
        scene.cube.bands(),
        spec.num_classes
    ));
    Ok(())
}

/// Deterministic summary written next to a segmentation's assignment raster.
#[derive(Serialize)]
struct SegmentSummary {
    width: usize,
    height: usize,
    num_superpixels: usize,
    iterations: usize,
    final_energy: f64,
    config: HmsConfig,
    /// Raw `u32le` row-major assignment payload, relative to this file.
    data_file: String,
}

fn run_segment(args: SegmentArgs) -> anyhow::Result<()> {
    let scene = load_cube(&args.input)?;
    let mut cfg = HmsConfig::default();
    if let Some(k) = args.k {
        cfg.k_init = k;
    }
    if let Some(c) = args.compactness {
        cfg.compactness = c;
    }

    let model = pca_fit(&scene.cube, &PcaOptions::default())?;
    let reduced = pca_reduce(&scene.cube, &model)?;
    let field = CovarianceField::compute(&reduced, cfg.cov_window, cfg.cov_regularization)?;
    let hms = hms_segment(&reduced, &field, &cfg)?;
    let map = &hms.map;

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let raster = args.out_dir.join("assignment.u32");
    write_raw_u32le(&raster, map.assignment())?;
    write_json(
        &SegmentSummary {
            width: map.width(),
            height: map.height(),
            num_superpixels: map.len(),
            iterations: hms.iterations,
            final_energy: hms.final_energy(),
            config: cfg,
            data_file: "assignment.u32".into(),
        },
        &args.out_dir.join("assignment.json"),
    )?;

    // Boundary sketch: light canvas, one-pixel black lines between regions.
    let mut rgb = vec![220u8; map.width() * map.height() * 3];
    overlay_boundaries(
        &mut rgb,
        map.width(),
        map.height(),
        map.assignment(),
        [0, 0, 0],
    )?;
    write_ppm(
        &args.out_dir.join("boundaries.ppm"),
        map.width(),
        map.height(),
        &rgb,
    )?;
    write_png(
        &args.out_dir.join("boundaries.png"),
        map.width(),
        map.height(),
        &rgb,
    )?;

    emit(&format!(
        "wrote {} ({} superpixels in {} iterations)",
        raster.display(),
        map.len(),
        hms.iterations
    ));
    Ok(())
}

fn run_classify(args: ClassifyArgs) -> anyhow::Result<()> {
    let scene = load_cube(&args.input)?;
    let cfg = args.params.build_config(args.k)?;
    let out = run_pipeline(&scene, &cfg)?;

    let (w, h) = (scene.cube.width(), scene.cube.height());
    let num_classes = scene
        .ground_truth
        .as_ref()
        .map(|gt| gt.num_classes())
        .unwrap_or(0);
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    save_label_map(
        &out.pixel_labels,
        w,
        h,
        num_classes,
        &args.out_dir.join("labels.json"),
    )?;
    write_json(&out.report, &args.out_dir.join("report.json"))?;
    write_json(&out.timings, &args.out_dir.join("timings.json"))?;

    let palette = Palette::distinct(num_classes);
    let rgb = render_map(&out.pixel_labels, w, h, &palette)?;
    write_ppm(&args.out_dir.join("map.ppm"), w, h, &rgb)?;
    write_png(&args.out_dir.join("map.png"), w, h, &rgb)?;

    let m = &out.report.metrics;
    emit(&format!(
        "{} superpixels, {} evaluated pixels: OA {:.4}, AA {:.4}, kappa {:.4}",
        out.report.num_superpixels, m.n_eval, m.oa, m.aa, m.kappa
    ));
    emit(&format!(
        "wrote labels.json, report.json, timings.json, map.ppm, map.png to {}",
        args.out_dir.display()
    ));
    Ok(())
}

fn run_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let scene = load_cube(&args.input)?;
    let base = args.params.build_config(None)?;
    let rows = sweep_k(&scene, &base, &args.k_values, args.repetitions)?;
    let csv = sweep_csv(&rows);
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(&args.out, &csv).with_context(|| format!("writing {}", args.out.display()))?;
    {
        use std::io::Write;
        let _ = write!(std::io::stdout(), "{csv}");
    }
    Ok(())
}

fn run_eval(args: EvalArgs) -> anyhow::Result<()> {
    let (labels, _header) = load_label_map(&args.pred)?;
    let scene = load_cube(&args.truth)?;
    let gt = scene
        .ground_truth
        .as_ref()
        .ok_or_else(|| sgl::Error::Data("scene has no ground truth to score against".into()))?;

    let training = match (args.per_class, args.seed, args.include_train) {
        (Some(per_class), Some(seed), false) => Some(sample_training_pixels(gt, per_class, seed)?),
        _ => None,
    };
    let metrics = compute_metrics(&labels, gt, training.as_ref())?;
    let text = serde_json::to_string_pretty(&metrics)?;
    emit(&text);
    if let Some(out) = &args.out {
        write_json(&metrics, out)?;
    }
    Ok(())
}
