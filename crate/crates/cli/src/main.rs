//! `densekp`: label generation, training, inference, matching and evaluation from one binary.
//!
//! Exit status is 0 on success, 1 for runtime or data failures and 2 for usage or config errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use densekp::config::AppConfig;
use densekp::dataset::{load_sequence, parse_homography_file, split_corpus};
use densekp::descmatch::{count_correct, nndr_match, ransac_homography, write_matches_csv};
use densekp::detectors::{KeypointDetector, ProfileName};
use densekp::espnet::{
    infer_mask, mask_to_keypoints, train, train_with_validation, validate_weights, write_loss_log, ModelWeights,
};
use densekp::fusion::{generate_corpus, read_manifest};
use densekp::imgcore::{load_image, rgb_to_gray, save_mask, write_keypoints_csv};
use densekp::metrics::{evaluate_sequence, keypoint_density, DetectorSpec, RepeatabilityMode};

#[derive(Debug, Parser)]
#[command(name = "densekp", version, about = "Dense keypoint detection and evaluation")]
struct Cli {
    /// JSON config file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every seeded step (overrides the config's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect keypoints in one image and write them as CSV.
    Detect(DetectArgs),
    /// Build fused training labels for a directory of images.
    Fuse(FuseArgs),
    /// Train the segmentation network on a label manifest.
    Train(TrainArgs),
    /// Predict a keypoint mask with trained weights.
    Infer(InferArgs),
    /// Evaluate a detector on a six-image sequence with ground-truth homographies.
    Eval(EvalArgs),
    /// Match two images, verifying with a homography file or RANSAC.
    Match(MatchArgs),
}

#[derive(Debug, Args)]
struct DetectorArgs {
    /// sift-dog, orb, brisk, fast, agast, harris, shi-tomasi or deep.
    #[arg(long, short)]
    detector: String,
    /// Threshold profile for classical detectors: normal or low.
    #[arg(long, default_value = "normal")]
    profile: String,
    /// Weights file, required by the deep detector.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Probability threshold for the deep detector (defaults to the config's train.tau_default).
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    image: PathBuf,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Output CSV (defaults to `<output_dir>/<image stem>.<detector>.csv`).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FuseArgs {
    src: PathBuf,
    out: PathBuf,
    /// Fraction of images to photometrically degrade.
    #[arg(long, default_value_t = 0.25)]
    fraction: f64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    manifest: PathBuf,
    /// Where to write the trained weights.
    #[arg(long, short)]
    out: PathBuf,
    /// Loss log CSV (defaults to the weights path with a `.loss.csv` suffix).
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr_max: Option<f64>,
    #[arg(long)]
    lr_min: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    input_size: Option<usize>,
    /// Hold out this fraction of samples for validation; without it the training set is reused.
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Not supported; passing it is a usage error.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InferArgs {
    image: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    /// Output mask (defaults to `<output_dir>/<image stem>.mask.<pgm|png>`).
    #[arg(long)]
    out_mask: Option<PathBuf>,
    /// Also write the mask pixels as a keypoint CSV.
    #[arg(long)]
    keypoints: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MatchSettingsArgs {
    /// Match verification distance in pixels.
    #[arg(long)]
    eps: Option<f64>,
    /// Nearest-neighbour distance ratio threshold.
    #[arg(long)]
    ratio: Option<f64>,
    /// Rotate SIFT patches to their dominant orientation.
    #[arg(long)]
    oriented: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    sequence: PathBuf,
    #[command(flatten)]
    detector: DetectorArgs,
    #[command(flatten)]
    settings: MatchSettingsArgs,
    /// Count every keypoint inside the overlap instead of requiring a partner within eps.
    #[arg(long)]
    presence: bool,
    /// Directory for `<sequence>.json` and `<sequence>.csv` (defaults to the config's output_dir).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MatchArgs {
    image_a: PathBuf,
    image_b: PathBuf,
    /// Ground-truth homography from A to B; without it RANSAC estimates one.
    #[arg(long)]
    homography: Option<PathBuf>,
    #[command(flatten)]
    detector: DetectorArgs,
    #[command(flatten)]
    settings: MatchSettingsArgs,
    #[arg(long)]
    ransac_iters: Option<usize>,
    /// Matches CSV (defaults to `<output_dir>/matches.csv`).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<densekp::Error> for Failure {
    fn from(e: densekp::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(msg.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let mut cfg = match &cli.config {
        Some(p) => AppConfig::load(p).map_err(|e| usage(format!("config {}: {e}", p.display())))?,
        None => AppConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    match cli.command {
        Command::Detect(a) => cmd_detect(&cfg, a),
        Command::Fuse(a) => cmd_fuse(&cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Infer(a) => cmd_infer(&cfg, a),
        Command::Eval(a) => cmd_eval(cfg, a),
        Command::Match(a) => cmd_match(cfg, a),
    }
}

fn check_tau(tau: f64) -> Result<f64, Failure> {
    if tau > 0.0 && tau < 1.0 {
        Ok(tau)
    } else {
        Err(usage(format!("--tau must lie in (0, 1), got {tau}")))
    }
}

fn load_weights(path: &Path) -> Result<ModelWeights, Failure> {
    let w = ModelWeights::load(path).with_context(|| format!("loading weights {}", path.display()))?;
    validate_weights(&w).with_context(|| format!("weights {}", path.display()))?;
    Ok(w)
}

fn resolve_detector(cfg: &AppConfig, a: &DetectorArgs) -> Result<DetectorSpec, Failure> {
    if a.detector == "deep" {
        let path = a.weights.as_ref().ok_or_else(|| usage("the deep detector requires --weights"))?;
        let tau = check_tau(a.tau.unwrap_or(cfg.train.tau_default))?;
        return Ok(DetectorSpec::Deep {
            weights: Arc::new(load_weights(path)?),
            tau,
        });
    }
    let detector: KeypointDetector = a.detector.parse().map_err(usage)?;
    let name: ProfileName = a.profile.parse().map_err(usage)?;
    let profile = cfg.profile(name).map_err(usage)?;
    Ok(DetectorSpec::Classical { detector, profile })
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

fn ensure_parent(p: &Path) -> anyhow::Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn cmd_detect(cfg: &AppConfig, a: DetectArgs) -> CmdResult {
    let spec = resolve_detector(cfg, &a.detector)?;
    let img = load_image(&a.image)?;
    let kps = spec.detect(&img, &rgb_to_gray(&img))?;
    let out = a
        .out
        .unwrap_or_else(|| cfg.io.output_dir.join(format!("{}.{}.csv", stem(&a.image), a.detector.detector)));
    ensure_parent(&out)?;
    write_keypoints_csv(&kps, &out)?;
    println!("keypoints: {}", kps.len());
    println!("density: {}", keypoint_density(kps.len(), img.width(), img.height())?);
    println!("csv: {}", out.display());
    Ok(())
}

fn cmd_fuse(cfg: &AppConfig, a: FuseArgs) -> CmdResult {
    if !(0.0..=1.0).contains(&a.fraction) {
        return Err(usage(format!("--fraction must lie in [0, 1], got {}", a.fraction)));
    }
    let corpus = generate_corpus(&a.src, &a.out, a.fraction, cfg.seed)
        .with_context(|| format!("building labels from {}", a.src.display()))?;
    println!("manifest: {}", corpus.manifest_path.display());
    println!("samples: {}", corpus.samples.len());
    println!("degraded: {}", corpus.samples.iter().filter(|s| s.degraded).count());
    println!("skipped: {}", corpus.skipped.len());
    Ok(())
}

fn cmd_train(mut cfg: AppConfig, a: TrainArgs) -> CmdResult {
    if a.resume.is_some() {
        return Err(usage("--resume is not supported; training always starts from a fresh initialization"));
    }
    let t = &mut cfg.train;
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.lr_max = a.lr_max.unwrap_or(t.lr_max);
    t.lr_min = a.lr_min.unwrap_or(t.lr_min);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.input_size = a.input_size.unwrap_or(t.input_size);
    t.validate().map_err(usage)?;
    if let Some(f) = a.val_fraction {
        if !(f > 0.0 && f < 1.0) {
            return Err(usage(format!("--val-fraction must lie in (0, 1), got {f}")));
        }
    }

    let samples = read_manifest(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let outcome = match a.val_fraction {
        Some(f) => {
            let split = split_corpus(&samples, 1.0 - f, cfg.seed)?;
            log::info!("training on {} samples, validating on {}", split.train.len(), split.val.len());
            train_with_validation(&split.train, &split.val, &cfg.train)?
        }
        None => train(&samples, &cfg.train)?,
    };
    ensure_parent(&a.out)?;
    outcome.weights.save(&a.out)?;
    let loss_csv = a.loss_csv.unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".loss.csv");
        PathBuf::from(s)
    });
    write_loss_log(&outcome.loss_log, &loss_csv)?;
    let last = outcome.loss_log.last().expect("at least one epoch");
    println!("weights: {}", a.out.display());
    println!("loss log: {}", loss_csv.display());
    println!("best epoch: {}", outcome.best_epoch);
    println!("final train loss: {}", last.train_loss);
    println!("final val loss: {}", last.val_loss);
    Ok(())
}

fn cmd_infer(cfg: &AppConfig, a: InferArgs) -> CmdResult {
    let tau = check_tau(a.tau.unwrap_or(cfg.train.tau_default))?;
    let weights = load_weights(&a.weights)?;
    let img = load_image(&a.image)?;
    let (prob, mask) = infer_mask(&img, &weights, tau)?;
    let out = a.out_mask.unwrap_or_else(|| {
        cfg.io
            .output_dir
            .join(format!("{}.mask.{}", stem(&a.image), cfg.io.image_format.mask_extension()))
    });
    ensure_parent(&out)?;
    save_mask(&mask, &out)?;
    let kps = mask_to_keypoints(&mask, Some(&prob));
    if let Some(p) = &a.keypoints {
        ensure_parent(p)?;
        write_keypoints_csv(&kps, p)?;
    }
    println!("keypoints: {}", kps.len());
    println!("density: {}", keypoint_density(kps.len(), img.width(), img.height())?);
    println!("mask: {}", out.display());
    Ok(())
}

fn apply_settings(cfg: &mut AppConfig, s: &MatchSettingsArgs) -> Result<(), Failure> {
    let m = &mut cfg.matching;
    m.eps = s.eps.unwrap_or(m.eps);
    m.ratio = s.ratio.unwrap_or(m.ratio);
    m.oriented |= s.oriented;
    cfg.validate().map_err(usage)
}

fn cmd_eval(mut cfg: AppConfig, a: EvalArgs) -> CmdResult {
    apply_settings(&mut cfg, &a.settings)?;
    if a.presence {
        cfg.matching.repeatability_mode = RepeatabilityMode::Presence;
    }
    let spec = resolve_detector(&cfg, &a.detector)?;
    let seq = load_sequence(&a.sequence)?;
    let descriptor = spec.default_descriptor(cfg.matching.oriented, cfg.seed);
    let report = evaluate_sequence(&seq, &spec, &descriptor, &cfg.eval_settings())?;
    let out_dir = a.out_dir.unwrap_or_else(|| cfg.io.output_dir.clone());
    report.write(&out_dir, &report.sequence)?;
    for r in &report.records {
        println!(
            "pair {}: n_a={} n_b={} repeatability={:.4} matches={} correct={}",
            r.pair, r.n_a, r.n_b, r.repeatability, r.n_matches, r.n_correct
        );
    }
    println!("avg repeatability: {}", report.aggregates.avg_repeatability);
    println!("avg density: {}", report.aggregates.avg_density);
    println!("total correct: {}", report.aggregates.total_correct);
    println!("report: {}", out_dir.join(format!("{}.json", report.sequence)).display());
    Ok(())
}

fn cmd_match(mut cfg: AppConfig, a: MatchArgs) -> CmdResult {
    apply_settings(&mut cfg, &a.settings)?;
    if let Some(n) = a.ransac_iters {
        if n == 0 {
            return Err(usage("--ransac-iters must be at least 1"));
        }
        cfg.matching.ransac_iters = n;
    }
    let spec = resolve_detector(&cfg, &a.detector)?;
    let h_gt = a.homography.as_ref().map(parse_homography_file).transpose()?;
    let (img_a, img_b) = (load_image(&a.image_a)?, load_image(&a.image_b)?);
    let (gray_a, gray_b) = (rgb_to_gray(&img_a), rgb_to_gray(&img_b));
    let kps_a = spec.detect(&img_a, &gray_a)?;
    let kps_b = spec.detect(&img_b, &gray_b)?;
    let descriptor = spec.default_descriptor(cfg.matching.oriented, cfg.seed);
    let desc_a = descriptor.describe(&gray_a, &kps_a)?;
    let desc_b = descriptor.describe(&gray_b, &kps_b)?;
    let matches = nndr_match(&desc_a, &desc_b, cfg.matching.ratio)?;
    let out = a.out.unwrap_or_else(|| cfg.io.output_dir.join("matches.csv"));
    ensure_parent(&out)?;
    write_matches_csv(&matches, &out)?;
    println!("keypoints: {} {}", kps_a.len(), kps_b.len());
    println!("matches: {}", matches.len());
    match h_gt {
        Some(h) => {
            let n = count_correct(&matches, &kps_a, &kps_b, &h, cfg.matching.eps)?;
            println!("correct: {n}");
        }
        None => {
            let m = &cfg.matching;
            let r = ransac_homography(&kps_a, &kps_b, &matches, m.ransac_iters, m.ransac_eps, cfg.seed)
                .context("estimating a homography")?;
            println!("inliers: {}", r.inlier_count());
        }
    }
    println!("csv: {}", out.display());
    Ok(())
}
