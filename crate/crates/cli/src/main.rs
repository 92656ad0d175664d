//! `dmscope` command-line front end.
//!
//! Exit codes: 0 success or in-scope verdict, 1 I/O or data error, 2 usage
//! error, 3 out-of-domain verdict.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dmscope::histogram::{BinningConfig, PerformanceHistogram};
use dmscope::imageio::{self, Image};
use dmscope::metrics::{ConfusionAccumulator, PsnrConfig};
use dmscope::observer::{self, Clock, DmReport, DomainReference, ObserverConfig, Verdict, DEFAULT_MIN_BATCH};
use dmscope::rankcorr::{kendall_tau, kendall_tau_with_tolerance, PairedSeries};
use dmscope::reconstruction::{score_corpus, Reconstructor};
use dmscope::synthcorpus::{self, CorpusKind, CorpusSpec, Shift};
use serde_json::json;

// stdout may be a closed pipe (`| head`); that is not worth a panic
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(io::stdout(), $($arg)*);
    }};
}

const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_OUT_OF_DOMAIN: u8 = 3;

#[derive(Parser)]
#[command(
    name = "dmscope",
    version,
    about = "Label-free domain-mismatch estimation from PSNR histograms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus as a PPM/PGM directory.
    GenCorpus(GenCorpusArgs),
    /// Score a source corpus and write an uncalibrated reference profile.
    BuildReference(BuildReferenceArgs),
    /// Calibrate a profile on an in-domain validation corpus (threshold = 2 x DM).
    Calibrate(CalibrateArgs),
    /// Score a target corpus against a profile and report DM and verdict.
    Evaluate(EvaluateArgs),
    /// Mean IoU of paired ground-truth and prediction label maps.
    Miou(MiouArgs),
    /// Kendall tau-b of two numeric series.
    Kendall(KendallArgs),
    /// Write a profile's or a corpus's histogram as CSV.
    HistExport(HistExportArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Output directory; receives images/ and, for labelled kinds, labels/.
    #[arg(long)]
    out: PathBuf,
    /// gradient, checker, noise or blotch.
    #[arg(long, default_value = "gradient")]
    kind: CorpusKind,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Brightness offset in normalized units, in [-1, 1].
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    brightness: f64,
    /// Side of the box blur; 1 disables it.
    #[arg(long, default_value_t = 1)]
    blur: u32,
    /// Additive noise amplitude in normalized units, in [0, 2].
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Also write pred/ with this fraction of label pixels flipped.
    #[arg(long)]
    flip: Option<f64>,
}

#[derive(Args)]
struct ScoringArgs {
    /// Reconstructor: identity, quantize:K, blur_resample:F or pseudo_noise:A[:SEED].
    #[arg(long, default_value = "quantize:8")]
    recon: Reconstructor,
    /// Histogram binning as lo:hi:width in dB.
    #[arg(long, default_value = "10:45:0.5")]
    bins: BinningConfig,
}

#[derive(Args)]
struct BuildReferenceArgs {
    #[arg(long)]
    images: PathBuf,
    /// Profile JSON to write.
    #[arg(long)]
    profile: PathBuf,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[arg(long)]
    hist_csv: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Profile JSON, rewritten in place.
    #[arg(long)]
    profile: PathBuf,
    /// In-domain validation corpus.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Use this validation DM instead of scoring a corpus.
    #[arg(long, conflicts_with = "images", required_unless_present = "images")]
    validation_dm: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MIN_BATCH)]
    min_batch: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    images: PathBuf,
    /// Report JSON to write; an array of reports in window mode.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Histogram CSV of the whole target corpus.
    #[arg(long)]
    hist_csv: Option<PathBuf>,
    /// Evaluate sliding windows of this many images.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, requires = "window")]
    stride: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MIN_BATCH)]
    min_batch: usize,
    /// Stamp reports with the Unix epoch instead of the current time.
    #[arg(long)]
    fixed_clock: bool,
}

#[derive(Args)]
struct MiouArgs {
    /// Ground-truth label maps.
    #[arg(long)]
    labels: PathBuf,
    /// Predicted label maps, matched to --labels by file name.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    classes: usize,
}

#[derive(Args)]
struct KendallArgs {
    /// Two-column CSV; a non-numeric first row is treated as a header.
    #[arg(long, conflicts_with_all = ["a", "b"], required_unless_present_all = ["a", "b"])]
    csv: Option<PathBuf>,
    /// First series, comma-separated.
    #[arg(long, requires = "b", value_delimiter = ',', allow_negative_numbers = true)]
    a: Option<Vec<f64>>,
    /// Second series, comma-separated.
    #[arg(long, requires = "a", value_delimiter = ',', allow_negative_numbers = true)]
    b: Option<Vec<f64>>,
    /// Treat values closer than this as tied.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct HistExportArgs {
    #[arg(long, conflicts_with = "images", required_unless_present = "images")]
    profile: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    hist_csv: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Io(String),
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Io(_) => EXIT_IO,
            Self::Usage(_) => EXIT_USAGE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Io(m) | Self::Usage(m) => f.write_str(m),
        }
    }
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

fn usage_err(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn observer_err(e: observer::ObserverError) -> CliError {
    use observer::ObserverError as E;
    match e {
        E::InvalidWindow { .. } | E::StreamTooShort { .. } | E::BatchTooSmall { .. } => usage_err(e),
        other => io_err(other),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::BuildReference(a) => build_reference(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Miou(a) => miou(a),
        Command::Kendall(a) => kendall(a),
        Command::HistExport(a) => hist_export(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(format!("{}: {e}", path.display())))
}

fn write_hist_csv(hist: &PerformanceHistogram, path: Option<&Path>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    hist.write_csv(&mut buf).map_err(io_err)?;
    match path {
        Some(p) => fs::write(p, buf).map_err(|e| io_err(format!("{}: {e}", p.display()))),
        None => io::stdout().write_all(&buf).map_err(io_err),
    }
}

/// Loads a corpus, warning about unreadable files; fails only if none loads.
fn load_images(dir: &Path) -> Result<Vec<Image>, CliError> {
    let load = imageio::load_corpus(dir).map_err(io_err)?;
    for (path, e) in &load.failures {
        eprintln!("warning: skipping {}: {e}", path.display());
    }
    if load.images.is_empty() {
        return Err(io_err(format!("no readable images in {}", dir.display())));
    }
    Ok(load.images.into_iter().map(|(_, img)| img).collect())
}

fn gen_corpus(a: GenCorpusArgs) -> Result<u8, CliError> {
    let spec = CorpusSpec::new(a.kind, a.count, a.height, a.width, a.seed).with_shift(Shift {
        brightness_offset: a.brightness,
        blur_factor: a.blur,
        noise_amplitude: a.noise,
    });
    let corpus = synthcorpus::generate_corpus(&spec).map_err(usage_err)?;
    let (image_dir, label_dir) = synthcorpus::write_corpus(&a.out, &corpus).map_err(io_err)?;
    say!("wrote {} images to {}", corpus.images.len(), image_dir.display());
    if let Some(dir) = label_dir {
        say!("wrote {} label maps to {}", corpus.images.len(), dir.display());
    }
    if let Some(fraction) = a.flip {
        let Some(labels) = &corpus.labels else {
            return Err(usage_err(format!("--flip needs a labelled kind, not {:?}", a.kind)));
        };
        let pred_dir = a.out.join("pred");
        fs::create_dir_all(&pred_dir).map_err(|e| io_err(format!("{}: {e}", pred_dir.display())))?;
        for (i, gt) in labels.iter().enumerate() {
            let pred = synthcorpus::perturb_labels(gt, fraction, a.seed ^ (i as u64)).map_err(usage_err)?;
            imageio::write_labelmap_pgm(pred_dir.join(format!("{i:04}.pgm")), &pred).map_err(io_err)?;
        }
        say!("wrote {} perturbed label maps to {}", labels.len(), pred_dir.display());
    }
    Ok(0)
}

fn build_reference(a: BuildReferenceArgs) -> Result<u8, CliError> {
    let images = load_images(&a.images)?;
    let cfg = ObserverConfig::default();
    let reference = observer::build_reference(
        &images,
        a.scoring.recon,
        a.scoring.bins,
        a.images.display().to_string(),
        &cfg,
    )
    .map_err(observer_err)?;
    reference.save(&a.profile).map_err(observer_err)?;
    if let Some(path) = &a.hist_csv {
        write_hist_csv(reference.histogram(), Some(path))?;
    }
    say!(
        "reference {} from {} images ({}), written to {}",
        reference.reference_id(),
        images.len(),
        reference.reconstructor(),
        a.profile.display()
    );
    Ok(0)
}

fn calibrate(a: CalibrateArgs) -> Result<u8, CliError> {
    let reference = DomainReference::load(&a.profile).map_err(observer_err)?;
    let calibrated = match (a.validation_dm, &a.images) {
        (Some(dm), _) if dm.is_finite() && dm >= 0.0 => reference.with_validation_dm(dm),
        (Some(dm), _) => return Err(usage_err(format!("validation DM {dm} must be finite and non-negative"))),
        (None, None) => return Err(usage_err("give --images or --validation-dm")),
        (None, Some(dir)) => {
            let images = load_images(dir)?;
            let cfg = ObserverConfig {
                min_batch: a.min_batch,
                ..Default::default()
            };
            reference.calibrate(&images, &cfg).map_err(observer_err)?
        }
    };
    calibrated.save(&a.profile).map_err(observer_err)?;
    let c = calibrated.calibration().expect("just calibrated");
    say!(
        "validation DM {:.2} dB, threshold {:.2} dB, written to {}",
        c.validation_dm_db,
        c.threshold_db,
        a.profile.display()
    );
    Ok(0)
}

fn evaluate(a: EvaluateArgs) -> Result<u8, CliError> {
    let reference = DomainReference::load(&a.profile).map_err(observer_err)?;
    let images = load_images(&a.images)?;
    let cfg = ObserverConfig {
        psnr: PsnrConfig::default(),
        min_batch: a.min_batch,
        clock: if a.fixed_clock { Clock::epoch() } else { Clock::System },
    };
    let reports = match a.window {
        Some(window) => {
            let stride = a.stride.unwrap_or(window);
            observer::sliding_window_observe(&reference, &images, window, stride, &cfg).map_err(observer_err)?
        }
        None => vec![observer::evaluate_batch(&reference, &images, &cfg).map_err(observer_err)?],
    };

    if let Some(path) = &a.report {
        let text = if a.window.is_some() {
            serde_json::to_string_pretty(&reports)
        } else {
            serde_json::to_string_pretty(&reports[0])
        }
        .map_err(io_err)?;
        write_file(path, &(text + "\n"))?;
    }
    if let Some(path) = &a.hist_csv {
        let scores = score_corpus(reference.reconstructor(), &images, &cfg.psnr).map_err(io_err)?;
        let hist = PerformanceHistogram::build(&scores, *reference.binning()).map_err(io_err)?;
        write_hist_csv(&hist, Some(path))?;
    }
    for r in &reports {
        print_summary(r);
    }
    if reports.iter().any(|r| r.verdict == Verdict::Uncalibrated) {
        eprintln!("note: profile is uncalibrated; run `dmscope calibrate` to obtain a verdict");
    }
    Ok(if reports.iter().any(|r| r.verdict == Verdict::OutOfDomain) {
        EXIT_OUT_OF_DOMAIN
    } else {
        0
    })
}

fn print_summary(r: &DmReport) {
    match r.window_index {
        Some(i) => say!("window {i}: {}", r.summary()),
        None => say!("{}", r.summary()),
    }
}

fn miou(a: MiouArgs) -> Result<u8, CliError> {
    let gt_files = imageio::list_rasters(&a.labels).map_err(io_err)?;
    if gt_files.is_empty() {
        return Err(io_err(format!("no label maps in {}", a.labels.display())));
    }
    let mut acc = ConfusionAccumulator::new(a.classes);
    for gt_path in &gt_files {
        let name = gt_path.file_name().expect("listed files have names");
        let pred_path = a.pred.join(name);
        let gt = imageio::load_labelmap(gt_path, a.classes).map_err(io_err)?;
        let pred = imageio::load_labelmap(&pred_path, a.classes).map_err(io_err)?;
        acc.accumulate(&gt, &pred)
            .map_err(|e| io_err(format!("{}: {e}", gt_path.display())))?;
    }
    let miou = acc.miou().map_err(io_err)?;
    let out = json!({
        "miou": miou,
        "class_iou": acc.class_iou(),
        "class_count": a.classes,
        "pairs": gt_files.len(),
    });
    say!("{}", serde_json::to_string_pretty(&out).map_err(io_err)?);
    Ok(0)
}

fn read_series_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(format!("{}: {e}", path.display())))?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| io_err(format!("{}: {e}", path.display())))?;
        if record.len() != 2 {
            return Err(io_err(format!(
                "{}: row {} has {} columns, expected 2",
                path.display(),
                line + 1,
                record.len()
            )));
        }
        match (record[0].parse::<f64>(), record[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                a.push(x);
                b.push(y);
            }
            _ if line == 0 => {}
            _ => return Err(io_err(format!("{}: row {} is not numeric", path.display(), line + 1))),
        }
    }
    Ok((a, b))
}

fn kendall(a: KendallArgs) -> Result<u8, CliError> {
    let (xs, ys) = match (&a.csv, a.a, a.b) {
        (Some(path), _, _) => read_series_csv(path)?,
        (None, Some(x), Some(y)) => (x, y),
        _ => return Err(usage_err("give --csv or both --a and --b")),
    };
    let series = PairedSeries::new(xs, ys).map_err(usage_err)?;
    let result = match a.tolerance {
        Some(t) => kendall_tau_with_tolerance(&series, t),
        None => kendall_tau(&series),
    }
    .map_err(usage_err)?;
    say!("{}", serde_json::to_string_pretty(&result).map_err(io_err)?);
    Ok(0)
}

fn hist_export(a: HistExportArgs) -> Result<u8, CliError> {
    let hist = match (&a.profile, &a.images) {
        (Some(profile), _) => DomainReference::load(profile)
            .map_err(observer_err)?
            .histogram()
            .clone(),
        (None, Some(dir)) => {
            let images = load_images(dir)?;
            let scores = score_corpus(&a.scoring.recon, &images, &PsnrConfig::default()).map_err(io_err)?;
            PerformanceHistogram::build(&scores, a.scoring.bins).map_err(io_err)?
        }
        (None, None) => return Err(usage_err("give --profile or --images")),
    };
    write_hist_csv(&hist, a.hist_csv.as_deref())?;
    Ok(0)
}
