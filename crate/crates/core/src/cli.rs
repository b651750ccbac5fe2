//! The `homalign` command line.
//!
//! Exit codes: 0 success, 1 other failure, 2 bad flags or config, 3 I/O
//! failure, 4 missing or invalid checkpoint, 5 image dimension mismatch.
//!
//! `--config FILE` supplies defaults as `key = value` lines (`#` starts a
//! comment); keys are the subcommand's long flag names. Flags given on the
//! command line take precedence over the file.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::datagen::{generate_pairs, read_dataset, synthetic_pairs, write_dataset, DatasetMeta};
use crate::error::Error;
use crate::eval::{evaluate_model, make_test_set, PckConfig, DEFAULT_KEYPOINTS};
use crate::geometry::TransformRanges;
use crate::imaging::{bilinear_sample, checkerboard_overlay, load_png, save_png, warp_image, Image};
use crate::loss::LossWeights;
use crate::regression::{align, ModelState, DEFAULT_ENSEMBLE_WEIGHT};
use crate::texture::TextureConfig;
use crate::training::{train_with_progress, Stage, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_CHECKPOINT: i32 = 4;
pub const EXIT_DIMENSIONS: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "homalign", version, about = "Progressive homography alignment", propagate_version = true)]
pub struct Cli {
    /// `key = value` defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic training dataset.
    GenData(GenDataArgs),
    /// Train one stage of the schedule.
    Train(TrainArgs),
    /// Align a source image to a target with a trained model.
    Align(AlignArgs),
    /// Report PCK on a test set derived from a dataset.
    Eval(EvalArgs),
    /// Render a checkerboard overlay of two images.
    Overlay(OverlayArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Directory of PNG source images; procedural textures when omitted.
    #[arg(long, value_name = "DIR")]
    pub sources: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output image side in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    /// Channels of procedural textures (1 or 3).
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Maximum rotation in degrees.
    #[arg(long, default_value_t = 180.0)]
    pub rotation: f64,
    /// Maximum shear in degrees.
    #[arg(long, default_value_t = 60.0)]
    pub shear: f64,
    /// Maximum perspective tilt in degrees.
    #[arg(long, default_value_t = 20.0)]
    pub perspective: f64,
    /// Maximum translation in pixels at 256 px, rescaled to --size.
    #[arg(long, default_value_t = 100.0)]
    pub translation: f64,
    /// Isotropic scale interval.
    #[arg(long, default_value = "1,1", value_name = "LO,HI")]
    pub scale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Affine,
    PerspHom,
    Full,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Affine => Stage::Affine,
            StageArg::PerspHom => Stage::PerspectiveHom,
            StageArg::Full => Stage::FullEnsemble,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub stage: StageArg,
    #[arg(long, value_name = "CKPT")]
    pub out: PathBuf,
    /// Checkpoint to start from; required for persp-hom and full.
    #[arg(long, value_name = "CKPT")]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.4)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.2)]
    pub delta: f64,
    /// Side of the loss grid.
    #[arg(long, default_value_t = 20)]
    pub grid: usize,
    #[arg(long, default_value_t = DEFAULT_ENSEMBLE_WEIGHT)]
    pub ensemble_weight: f64,
    /// Keep the feature extractor trainable in persp-hom and full.
    #[arg(long, action = ArgAction::SetTrue)]
    pub train_extractor: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignMethod {
    Affine,
    Hom,
    Ensemble,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long, value_name = "CKPT")]
    pub model: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub source: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub target: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub out: PathBuf,
    /// Write the 8 parameters as text.
    #[arg(long, value_name = "TXT")]
    pub params_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AlignMethod::Ensemble)]
    pub method: AlignMethod,
    #[arg(long, default_value_t = DEFAULT_ENSEMBLE_WEIGHT)]
    pub ensemble_weight: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "CKPT")]
    pub model: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.03,0.01")]
    pub taus: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_KEYPOINTS)]
    pub keypoints: usize,
    /// Factor widening the dataset's transform ranges for the test set.
    #[arg(long, default_value_t = 1.5)]
    pub scale_up: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Average per-pair PCK instead of pooling keypoints.
    #[arg(long = "macro", action = ArgAction::SetTrue)]
    pub macro_average: bool,
    #[arg(long, default_value_t = DEFAULT_ENSEMBLE_WEIGHT)]
    pub ensemble_weight: f64,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    #[arg(long, value_name = "PNG")]
    pub image_a: PathBuf,
    #[arg(long, value_name = "PNG")]
    pub image_b: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub tiles: usize,
    #[arg(long, value_name = "PNG")]
    pub out: PathBuf,
}

/// A failed invocation: exit code plus message for standard error.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }

    /// Exit code for a library error in a generic context.
    fn from_error(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } | Error::MissingFile(_) | Error::UnsupportedFormat { .. } | Error::ManifestParse { .. } => EXIT_IO,
            Error::DimensionMismatch(_) | Error::DimensionNotDivisible { .. } => EXIT_DIMENSIONS,
            Error::ChecksumMismatch { .. } | Error::VersionMismatch { .. } | Error::MalformedCheckpoint(_) => EXIT_CHECKPOINT,
            Error::InvalidConfig(_) | Error::InvalidRanges(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Self::new(code, e.to_string())
    }

    /// Any failure to obtain a usable model is a checkpoint error.
    fn checkpoint(path: &Path, e: Error) -> Self {
        Self::new(EXIT_CHECKPOINT, format!("cannot load checkpoint {}: {e}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::from_error(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first), runs the subcommand, and returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match parse(args.into_iter().map(Into::into).collect()) {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version arrive here with exit code 0
            let text = e.message.trim_end();
            let _ = if e.code == EXIT_OK { writeln!(out, "{text}") } else { writeln!(err, "{text}") };
            return e.code;
        }
    };
    match execute(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn clap_error(e: clap::Error) -> CliError {
    let code = e.exit_code();
    CliError::new(code, e.render().to_string())
}

/// Parses the command line, then folds in `--config` values for flags that
/// were not given explicitly.
pub fn parse(args: Vec<OsString>) -> CliResult<Cli> {
    let matches = Cli::command().try_get_matches_from(&args).map_err(clap_error)?;
    let mut args = args;
    if let Some(path) = matches.get_one::<PathBuf>("config") {
        let (name, sub) = matches.subcommand().expect("subcommand is required");
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(EXIT_IO, format!("cannot read config {}: {e}", path.display())))?;
        let command = Cli::command();
        let sub_cmd = command.find_subcommand(name).expect("known subcommand");
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| CliError::usage(format!("{}:{lineno}: expected `key = value`", path.display())))?;
            let arg = sub_cmd
                .get_arguments()
                .find(|a| a.get_long() == Some(key) && key != "config" && key != "help" && key != "version")
                .ok_or_else(|| CliError::usage(format!("{}:{lineno}: unknown key {key:?} for {name}", path.display())))?;
            if sub.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
                continue;
            }
            if matches!(arg.get_action(), ArgAction::SetTrue) {
                match value {
                    "true" => args.push(format!("--{key}").into()),
                    "false" => {}
                    other => {
                        return Err(CliError::usage(format!("{}:{lineno}: {key} expects true or false, got {other:?}", path.display())))
                    }
                }
            } else {
                args.push(format!("--{key}={value}").into());
            }
        }
        let merged = Cli::command().try_get_matches_from(&args).map_err(clap_error)?;
        return Cli::from_arg_matches(&merged).map_err(clap_error);
    }
    Cli::from_arg_matches(&matches).map_err(clap_error)
}

pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::GenData(a) => gen_data(&a, out),
        Command::Train(a) => train(&a, out, err),
        Command::Align(a) => align_cmd(&a),
        Command::Eval(a) => eval(&a, out, err),
        Command::Overlay(a) => overlay(&a),
    }
}

fn parse_scale(text: &str) -> CliResult<(f64, f64)> {
    let bad = || CliError::usage(format!("--scale expects LO,HI, got {text:?}"));
    let (lo, hi) = text.split_once(',').ok_or_else(bad)?;
    Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

/// Bilinear resampling of the whole frame to `size x size`.
fn resample(img: &Image, size: usize) -> crate::Result<Image> {
    if img.height() == size && img.width() == size {
        return Ok(img.clone());
    }
    let grid = Image::zeros(size, size, 1)?;
    Image::from_fn(size, size, img.channels(), |r, c, k| bilinear_sample(img, grid.pixel_to_normalized(r, c))[k])
}

fn load_sources(dir: &Path, size: usize) -> CliResult<Vec<Image>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::new(EXIT_IO, format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    let mut images = Vec::new();
    for p in &paths {
        match load_png(p) {
            Ok(img) => images.push(resample(&img, size)?),
            Err(Error::UnsupportedFormat { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    if images.is_empty() {
        return Err(CliError::new(EXIT_IO, format!("no readable PNG images in {}", dir.display())));
    }
    Ok(images)
}

fn gen_data(a: &GenDataArgs, out: &mut dyn Write) -> CliResult<()> {
    let (scale_lo, scale_hi) = parse_scale(&a.scale)?;
    if a.size < 2 {
        return Err(CliError::usage("--size must be >= 2"));
    }
    if a.channels != 1 && a.channels != 3 {
        return Err(CliError::usage("--channels must be 1 or 3"));
    }
    let ranges = TransformRanges {
        max_rotation_deg: a.rotation,
        max_shear_deg: a.shear,
        max_perspective_deg: a.perspective,
        max_translation_px: a.translation,
        image_size_px: 256,
        scale_lo,
        scale_hi,
    }
    .for_image_size(a.size);
    ranges.validate()?;
    let pairs = match &a.sources {
        Some(dir) => generate_pairs(&load_sources(dir, a.size)?, a.count, &ranges, a.seed)?,
        None => {
            let tex = TextureConfig { channels: a.channels, ..TextureConfig::new(a.size) };
            synthetic_pairs(a.count, &tex, &ranges, a.seed)?
        }
    };
    let meta = DatasetMeta { image_size_px: a.size, seed: a.seed, ranges: Some(ranges) };
    let manifest = write_dataset(&pairs, &a.out, &meta)?;
    writeln!(out, "wrote {} records to {}", manifest.records.len(), a.out.display()).map_err(stdout_error)?;
    Ok(())
}

fn stdout_error(e: std::io::Error) -> CliError {
    CliError::new(EXIT_IO, format!("cannot write to standard output: {e}"))
}

fn train(a: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let stage: Stage = a.stage.into();
    let dataset = read_dataset(&a.data)?;
    if dataset.is_empty() {
        return Err(CliError::from_error(Error::EmptyDataset));
    }
    let data = dataset.load_all()?;
    let (h, w, d) = data[0].source.dims();

    let init = match (&a.init, stage) {
        (Some(path), _) => load_checkpoint(path).map_err(|e| CliError::checkpoint(path, e))?,
        (None, Stage::Affine) => ModelState::new(d, h, w, a.seed)?,
        (None, _) => {
            return Err(CliError::new(
                EXIT_CHECKPOINT,
                format!("--stage {} needs --init with a checkpoint from the affine stage", stage.name()),
            ))
        }
    };
    if init.image_hw() != (h, w) || init.channels() != d {
        return Err(CliError::new(
            EXIT_DIMENSIONS,
            format!("model expects {:?}x{} images, dataset has {h}x{w}x{d}", init.image_hw(), init.channels()),
        ));
    }

    let cfg = TrainConfig {
        stage,
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: a.seed,
        loss_weights: LossWeights::new(a.alpha, a.beta, a.gamma, a.delta)?,
        grid_n: a.grid,
        ensemble_weight: a.ensemble_weight,
        train_extractor: a.train_extractor,
        ..TrainConfig::new(stage)
    };
    writeln!(out, "epoch\tl_aff\tl_pers\tl_hom\tl_en\ttotal").map_err(stdout_error)?;
    let mut write_err = None;
    let (model, report) = train_with_progress(&data, &cfg, init, |e, b| {
        if let Err(err) = writeln!(out, "{}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}", e + 1, b.l_aff, b.l_pers, b.l_hom, b.l_en, b.total) {
            write_err.get_or_insert(err);
        }
    })?;
    if let Some(e) = write_err {
        return Err(stdout_error(e));
    }
    save_checkpoint(&model, &a.out)?;
    if !report.skipped_steps.is_empty() {
        let _ = writeln!(err, "skipped {} non-finite steps: {:?}", report.skipped_steps.len(), report.skipped_steps);
    }
    Ok(())
}

fn load_model(path: &Path) -> CliResult<ModelState> {
    load_checkpoint(path).map_err(|e| CliError::checkpoint(path, e))
}

fn check_model_dims(m: &ModelState, img: &Image, what: &str) -> CliResult<()> {
    let (h, w, d) = img.dims();
    if m.image_hw() != (h, w) || m.channels() != d {
        let (mh, mw) = m.image_hw();
        return Err(CliError::new(EXIT_DIMENSIONS, format!("{what} is {h}x{w}x{d}, model expects {mh}x{mw}x{}", m.channels())));
    }
    Ok(())
}

/// Space-separated shortest round-trip decimal representation.
pub fn format_params(p: &crate::HomographyParams) -> String {
    p.0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn parse_params(text: &str) -> Option<crate::HomographyParams> {
    let v: Vec<f64> = text.split_whitespace().map(|t| t.parse().ok()).collect::<Option<_>>()?;
    Some(crate::HomographyParams(v.try_into().ok()?))
}

fn align_cmd(a: &AlignArgs) -> CliResult<()> {
    let m = load_model(&a.model)?;
    let source = load_png(&a.source)?;
    let target = load_png(&a.target)?;
    if source.dims() != target.dims() {
        return Err(CliError::new(EXIT_DIMENSIONS, format!("source is {:?}, target is {:?}", source.dims(), target.dims())));
    }
    check_model_dims(&m, &source, "source")?;
    let out = align(&source, &target, &m, a.ensemble_weight)?;
    let theta = match a.method {
        AlignMethod::Affine => out.theta_aff.lift(),
        AlignMethod::Hom => out.theta_hom,
        AlignMethod::Ensemble => out.theta_en,
    };
    let warped = warp_image(&source, &theta)?;
    save_png(&warped, &a.out)?;
    if let Some(p) = &a.params_out {
        std::fs::write(p, format!("{}\n", format_params(&theta))).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn eval(a: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let m = load_model(&a.model)?;
    let dataset = read_dataset(&a.data)?;
    if dataset.is_empty() {
        return Err(CliError::from_error(Error::EmptyDataset));
    }
    let sources = (0..dataset.len()).map(|i| dataset.load_pair(i).map(|p| p.source)).collect::<crate::Result<Vec<_>>>()?;
    check_model_dims(&m, &sources[0], "dataset image")?;
    let size = dataset.manifest.image_size_px;
    let ranges = dataset.manifest.ranges.unwrap_or_else(|| TransformRanges::standard().for_image_size(size));
    let records = make_test_set(&sources, &ranges, a.scale_up, a.keypoints, a.seed)?;
    let (h, w, _) = sources[0].dims();
    let cfg = PckConfig { taus: a.taus.clone(), h, w, macro_average: a.macro_average };
    let report = evaluate_model(&m, &records, &cfg, a.ensemble_weight)?;
    out.write_all(report.to_tsv().as_bytes()).map_err(stdout_error)?;
    let _ = err.write_all(report.render_aligned().as_bytes());
    Ok(())
}

fn overlay(a: &OverlayArgs) -> CliResult<()> {
    let img_a = load_png(&a.image_a)?;
    let img_b = load_png(&a.image_b)?;
    if a.tiles == 0 {
        return Err(CliError::usage("--tiles must be >= 1"));
    }
    let o = checkerboard_overlay(&img_a, &img_b, a.tiles)?;
    save_png(&o, &a.out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_ok(args: &[&str]) -> Cli {
        parse(args.iter().map(OsString::from).collect()).unwrap()
    }

    #[test]
    fn defaults_follow_documented_values() {
        let cli = parse_ok(&["homalign", "gen-data", "--out", "x"]);
        let Command::GenData(g) = cli.command else { panic!() };
        assert_eq!((g.rotation, g.shear, g.perspective, g.translation), (180.0, 60.0, 20.0, 100.0));
        assert_eq!(g.size, 256);
        let cli = parse_ok(&["homalign", "eval", "--model", "m", "--data", "d"]);
        let Command::Eval(e) = cli.command else { panic!() };
        assert_eq!(e.taus, vec![0.05, 0.03, 0.01]);
        assert_eq!(e.keypoints, 20);
        let cli = parse_ok(&["homalign", "overlay", "--image-a", "a", "--image-b", "b", "--out", "o"]);
        let Command::Overlay(o) = cli.command else { panic!() };
        assert_eq!(o.tiles, 8);
    }

    #[test]
    fn config_fills_unset_flags_only() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("train.conf");
        std::fs::write(&cfg, "# staged run\nepochs = 7\nlr = 0.01  # faster\ntrain-extractor = true\n").unwrap();
        let cli = parse_ok(&[
            "homalign", "train", "--data", "d", "--stage", "affine", "--out", "o", "--lr", "0.5", "--config", cfg.to_str().unwrap(),
        ]);
        let Command::Train(t) = cli.command else { panic!() };
        assert_eq!(t.epochs, 7);
        assert_eq!(t.lr, 0.5);
        assert!(t.train_extractor);
    }

    #[test]
    fn unknown_config_key_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.conf");
        std::fs::write(&cfg, "epochs = 3\n\nlearning_rate = 1\n").unwrap();
        let e = parse(
            ["homalign", "train", "--data", "d", "--stage", "affine", "--out", "o", "--config", cfg.to_str().unwrap()]
                .iter()
                .map(OsString::from)
                .collect(),
        )
        .unwrap_err();
        assert_eq!(e.code, EXIT_USAGE);
        assert!(e.message.contains(":3:"), "{}", e.message);
    }

    #[test]
    fn bad_flags_exit_2() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(run(["homalign", "train", "--stage", "bogus"], &mut out, &mut err), EXIT_USAGE);
        assert_eq!(run(["homalign", "gen-data", "--out", "x", "--count", "-1"], &mut out, &mut err), EXIT_USAGE);
    }

    #[test]
    fn params_text_round_trips_exactly() {
        let p = crate::HomographyParams([0.1, -1.0 / 3.0, 2e-17, 1.0, 0.9999999999999999, -0.0, 1e-300, 0.25]);
        let back = parse_params(&format_params(&p)).unwrap();
        for (a, b) in p.0.iter().zip(back.0.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(parse_params("1 2 3").is_none());
    }
}
