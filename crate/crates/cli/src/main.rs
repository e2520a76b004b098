use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use linefit_core::angles::Severity;
use linefit_core::eval::{evaluate, load_dataset, score, write_rows_csv, Annotation, EvalSummary};
use linefit_core::fit::{FitConfig, RhoKind};
use linefit_core::heatmap::{export_pgm, read_hvah, write_hvah, Heatmap};
use linefit_core::pipeline::{analyze, Analysis};
use linefit_core::raster::{rasterize, RasterConfig};
use linefit_core::simulate::{
    gen_annotation, keypoint_experiment, line_width_sweep, simulate_prediction, CorruptionConfig,
    KeypointConfig,
};
use linefit_core::{Error, INPUT_HEIGHT, INPUT_WIDTH};

mod overlay;

#[derive(Parser, Debug)]
#[command(
    name = "linefit-hva",
    version,
    about = "Robust bone-axis lines and hallux valgus angles from heatmaps"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Robust loss for line fitting.
    #[arg(long, global = true, default_value = "welsch")]
    rho: RhoKind,
    /// Cells strictly above this probability become points.
    #[arg(long, global = true, default_value_t = 0.5)]
    threshold: f64,
    /// Label line width in heatmap cells.
    #[arg(long, global = true, default_value_t = 4)]
    line_width: u32,
    /// Input pixels per heatmap cell.
    #[arg(long, global = true, default_value_t = 4)]
    scale: u32,
    #[arg(long, global = true, default_value_t = 100)]
    max_iter: usize,
    /// Convergence threshold on direction change, radians.
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
    /// Accuracy thresholds in degrees.
    #[arg(long, global = true, value_delimiter = ',', default_value = "3,5")]
    acc_thresholds: Vec<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Human-readable tables instead of JSON.
    #[arg(long, global = true)]
    pretty: bool,
}

#[derive(Args, Debug, Clone)]
struct CorruptionArgs {
    /// Fraction of foreground cells zeroed.
    #[arg(long, default_value_t = 0.0)]
    drop_rate: f64,
    /// Endpoint jitter before rasterizing, pixels.
    #[arg(long, default_value_t = 0.0)]
    jitter_sigma: f64,
    #[arg(long, default_value_t = 0)]
    blob_count: usize,
    /// Blob radius in cells.
    #[arg(long, default_value_t = 4.0)]
    blob_radius: f64,
    #[arg(long, default_value_t = 0.9)]
    blob_value: f32,
    /// Per-cell additive noise.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
}

impl CorruptionArgs {
    fn config(&self, seed: u64) -> CorruptionConfig {
        CorruptionConfig {
            drop_rate: self.drop_rate,
            jitter_sigma: self.jitter_sigma,
            blob_count: self.blob_count,
            blob_radius: self.blob_radius,
            blob_value: self.blob_value,
            noise_sigma: self.noise_sigma,
            seed,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the three bone axes of one heatmap and report the angles.
    Fit {
        heatmap: PathBuf,
        /// Ground truth to score against.
        #[arg(long)]
        annotation: Option<PathBuf>,
    },
    /// Score a directory of <stem>.json / <stem>.hvah pairs.
    Eval {
        dir: PathBuf,
        /// Re-simulate predictions at each label width instead of reading heatmaps.
        #[arg(long, value_delimiter = ',')]
        sweep_widths: Option<Vec<u32>>,
        #[command(flatten)]
        corruption: CorruptionArgs,
    },
    /// Rasterize an annotation into a label heatmap.
    Rasterize {
        annotation: PathBuf,
        /// Write one channel as binary PGM instead of HVAH.
        #[arg(long)]
        pgm_channel: Option<usize>,
    },
    /// Write a seeded synthetic dataset.
    Simulate {
        #[arg(long, default_value_t = 65)]
        count: usize,
        #[command(flatten)]
        corruption: CorruptionArgs,
    },
    /// Compare keypoint-count baselines with the dense pipeline.
    Keypoints {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        k: Vec<usize>,
        /// Per-point jitter, pixels.
        #[arg(long, default_value_t = 2.0)]
        jitter: f64,
        /// Segment length, pixels.
        #[arg(long, default_value_t = 60.0)]
        length: f64,
    },
    /// Draw fitted lines and extracted points as SVG.
    Overlay { heatmap: PathBuf },
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Compute(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Compute(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Compute(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::TooFewPoints { .. } | Error::DegeneratePoints => Failure::Compute(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn with_path(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| match Failure::from(e) {
        Failure::Input(m) => Failure::Input(format!("{}: {m}", path.display())),
        other => other,
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("linefit-hva: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn configure_threads() -> CliResult {
    let Ok(raw) = std::env::var("LINEFIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::Input(format!(
            "LINEFIT_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Input(e.to_string()))
}

impl Common {
    fn fit_config(&self) -> CliResult<FitConfig> {
        let cfg = FitConfig {
            rho: self.rho,
            max_iter: self.max_iter,
            tol: self.tol,
            ..FitConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn raster_config(&self) -> CliResult<RasterConfig> {
        if self.scale == 0 || INPUT_WIDTH % self.scale != 0 || INPUT_HEIGHT % self.scale != 0 {
            return Err(Failure::Input(format!(
                "--scale must divide {INPUT_WIDTH} and {INPUT_HEIGHT}, got {}",
                self.scale
            )));
        }
        let cfg = RasterConfig {
            line_width: self.line_width,
            grid_width: INPUT_WIDTH / self.scale,
            grid_height: INPUT_HEIGHT / self.scale,
            scale: self.scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Failure::Input(format!(
                "--threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.acc_thresholds.is_empty() || self.acc_thresholds.iter().any(|t| !(*t > 0.0)) {
            return Err(Failure::Input(
                "--acc-thresholds must be positive degrees".into(),
            ));
        }
        self.fit_config()?;
        Ok(())
    }

    /// Writer for `--out`, or stdout.
    fn sink(&self) -> CliResult<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(fs::File::create(path)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

fn run(cli: Cli) -> CliResult {
    configure_threads()?;
    cli.common.validate()?;
    let c = &cli.common;
    match &cli.command {
        Command::Fit {
            heatmap,
            annotation,
        } => cmd_fit(c, heatmap, annotation.as_deref()),
        Command::Eval {
            dir,
            sweep_widths,
            corruption,
        } => cmd_eval(c, dir, sweep_widths.as_deref(), corruption),
        Command::Rasterize {
            annotation,
            pgm_channel,
        } => cmd_rasterize(c, annotation, *pgm_channel),
        Command::Simulate { count, corruption } => cmd_simulate(c, *count, corruption),
        Command::Keypoints {
            trials,
            k,
            jitter,
            length,
        } => cmd_keypoints(c, *trials, k, *jitter, *length),
        Command::Overlay { heatmap } => cmd_overlay(c, heatmap),
    }
}

fn load_heatmap(path: &Path) -> CliResult<Heatmap> {
    let file =
        fs::File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    read_hvah(io::BufReader::new(file)).map_err(with_path(path))
}

fn load_annotation(path: &Path) -> CliResult<Annotation> {
    Annotation::load(path).map_err(with_path(path))
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> CliResult {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| Failure::Input(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ChannelReport {
    channel: usize,
    points: usize,
    nx: f64,
    ny: f64,
    d: f64,
    iterations: usize,
    converged: bool,
    scale: f64,
}

#[derive(Serialize)]
struct GroundTruth {
    alpha: f64,
    beta: f64,
    err_alpha: f64,
    err_beta: f64,
}

#[derive(Serialize)]
struct FitReport {
    rho: String,
    channels: Vec<ChannelReport>,
    alpha: f64,
    beta: f64,
    hva_class: Severity,
    ima_class: Severity,
    #[serde(skip_serializing_if = "Option::is_none")]
    ground_truth: Option<GroundTruth>,
}

fn fit_report(
    c: &Common,
    analysis: &Analysis,
    annotation: Option<&Annotation>,
) -> CliResult<FitReport> {
    if let Some(e) = analysis.first_error() {
        return Err(Failure::Compute(e.to_string()));
    }
    let report = analysis
        .report
        .expect("report exists when every channel fitted");
    let channels = analysis
        .fits
        .iter()
        .zip(&analysis.points)
        .enumerate()
        .map(|(channel, (fit, points))| {
            let fit = fit.as_ref().expect("checked above");
            ChannelReport {
                channel,
                points: points.len(),
                nx: fit.line.nx,
                ny: fit.line.ny,
                d: fit.line.d,
                iterations: fit.iterations,
                converged: fit.converged,
                scale: fit.scale,
            }
        })
        .collect();
    let ground_truth = annotation
        .map(|a| -> CliResult<GroundTruth> {
            let row = score(a, Some(&report))?;
            Ok(GroundTruth {
                alpha: row.gt_alpha,
                beta: row.gt_beta,
                err_alpha: row.err_alpha,
                err_beta: row.err_beta,
            })
        })
        .transpose()?;
    Ok(FitReport {
        rho: c.rho.to_string(),
        channels,
        alpha: report.alpha.value(),
        beta: report.beta.value(),
        hva_class: report.hva_class,
        ima_class: report.ima_class,
        ground_truth,
    })
}

fn cmd_fit(c: &Common, heatmap: &Path, annotation: Option<&Path>) -> CliResult {
    let h = load_heatmap(heatmap)?;
    let annotation = annotation.map(load_annotation).transpose()?;
    let analysis = analyze(&h, c.threshold, &c.fit_config()?)?;
    let report = fit_report(c, &analysis, annotation.as_ref())?;
    let mut out = c.sink()?;
    if !c.pretty {
        return write_json(&mut out, &report);
    }
    writeln!(
        out,
        "channel  points       nx         ny          d   iters"
    )?;
    for ch in &report.channels {
        writeln!(
            out,
            "{:>7} {:>7} {:>9.5} {:>10.5} {:>10.3} {:>7}",
            ch.channel, ch.points, ch.nx, ch.ny, ch.d, ch.iterations
        )?;
    }
    writeln!(out, "HVA {:.2} deg ({})", report.alpha, report.hva_class)?;
    writeln!(out, "IMA {:.2} deg ({})", report.beta, report.ima_class)?;
    if let Some(gt) = &report.ground_truth {
        writeln!(
            out,
            "ground truth HVA {:.2} (error {:.2}), IMA {:.2} (error {:.2})",
            gt.alpha, gt.err_alpha, gt.beta, gt.err_beta
        )?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct WidthSummary {
    line_width: u32,
    summary: EvalSummary,
}

fn cmd_eval(
    c: &Common,
    dir: &Path,
    sweep: Option<&[u32]>,
    corruption: &CorruptionArgs,
) -> CliResult {
    let fit_cfg = c.fit_config()?;
    let out_dir = c.out.clone().unwrap_or_else(|| dir.to_path_buf());
    fs::create_dir_all(&out_dir)?;

    let Some(widths) = sweep else {
        let dataset = load_dataset(dir).map_err(with_path(dir))?;
        let (rows, summary) = evaluate(&dataset, &fit_cfg, &c.acc_thresholds, c.threshold)?;
        write_rows_csv(&rows, fs::File::create(out_dir.join("rows.csv"))?)?;
        write_json(
            &mut fs::File::create(out_dir.join("summary.json"))?,
            &summary,
        )?;
        let mut out = BufWriter::new(io::stdout().lock());
        if c.pretty {
            print_grid(
                &mut out,
                &[WidthSummary {
                    line_width: c.line_width,
                    summary,
                }],
            )?;
            out.flush()?;
            return Ok(());
        }
        return write_json(&mut out, &summary);
    };

    let annotations: Vec<Annotation> = load_dataset(dir)
        .map_err(with_path(dir))?
        .into_iter()
        .map(|(a, _)| a)
        .collect();
    let columns = line_width_sweep(
        &annotations,
        widths,
        &c.raster_config()?,
        &corruption.config(c.seed),
        &fit_cfg,
        &c.acc_thresholds,
        c.threshold,
    )?;
    let mut grid = Vec::with_capacity(columns.len());
    for col in columns {
        let path = out_dir.join(format!("rows_d{}.csv", col.line_width));
        write_rows_csv(&col.rows, fs::File::create(path)?)?;
        grid.push(WidthSummary {
            line_width: col.line_width,
            summary: col.summary,
        });
    }
    write_json(&mut fs::File::create(out_dir.join("summary.json"))?, &grid)?;
    let mut out = BufWriter::new(io::stdout().lock());
    if c.pretty {
        print_grid(&mut out, &grid)?;
        out.flush()?;
        return Ok(());
    }
    write_json(&mut out, &grid)
}

fn print_grid(out: &mut dyn Write, grid: &[WidthSummary]) -> CliResult {
    let Some(first) = grid.first() else {
        return Ok(());
    };
    let mut header = format!("{:>4} {:>5} {:>6}", "d", "n", "failed");
    for e in &first.summary.acc {
        header += &format!(
            " {:>10} {:>10}",
            format!("acc{}a", e.threshold),
            format!("acc{}b", e.threshold)
        );
    }
    header += &format!(" {:>8} {:>8}", "mae_a", "mae_b");
    writeln!(out, "{header}")?;
    for col in grid {
        let s = &col.summary;
        let mut line = format!("{:>4} {:>5} {:>6}", col.line_width, s.n, s.failures);
        for e in &s.acc {
            line += &format!(" {:>10.3} {:>10.3}", e.alpha, e.beta);
        }
        line += &format!(" {:>8.3} {:>8.3}", s.mae_alpha, s.mae_beta);
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn cmd_rasterize(c: &Common, annotation: &Path, pgm_channel: Option<usize>) -> CliResult {
    let a = load_annotation(annotation)?;
    let h = rasterize(&a.network_segments()?, &c.raster_config()?)?;
    let mut out = c.sink()?;
    match pgm_channel {
        Some(channel) => export_pgm(&h, channel, &mut out)?,
        None => write_hvah(&h, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateReport {
    dir: String,
    count: usize,
    seed: u64,
    corruption: CorruptionConfig,
}

fn cmd_simulate(c: &Common, count: usize, corruption: &CorruptionArgs) -> CliResult {
    let dir = c
        .out
        .as_ref()
        .ok_or_else(|| Failure::Input("simulate needs --out DIR".into()))?;
    if count == 0 {
        return Err(Failure::Input("--count must be >= 1".into()));
    }
    let raster = c.raster_config()?;
    let base = corruption.config(c.seed);
    base.validate()?;
    fs::create_dir_all(dir)?;
    for i in 0..count as u64 {
        let a = gen_annotation(c.seed ^ i);
        let h = simulate_prediction(&a, &raster, &base.with_seed(base.seed ^ i))?;
        let stem = format!("img_{i:04}");
        fs::write(dir.join(format!("{stem}.json")), a.to_json()?)?;
        let mut file = BufWriter::new(fs::File::create(dir.join(format!("{stem}.hvah")))?);
        write_hvah(&h, &mut file)?;
        file.flush()?;
    }
    let report = SimulateReport {
        dir: dir.display().to_string(),
        count,
        seed: c.seed,
        corruption: base,
    };
    write_json(&mut BufWriter::new(io::stdout().lock()), &report)
}

#[derive(Serialize)]
struct SeriesRow {
    k: Option<usize>,
    mean: f64,
    median: f64,
    above_3deg: f64,
}

fn cmd_keypoints(c: &Common, trials: usize, k: &[usize], jitter: f64, length: f64) -> CliResult {
    let cfg = KeypointConfig {
        n_trials: trials,
        k_values: k.to_vec(),
        jitter_sigma: jitter,
        seed: c.seed,
        segment_length: length,
        line_width: c.line_width,
    };
    let report = keypoint_experiment(&cfg)?;
    let rows: Vec<SeriesRow> = report
        .keypoints
        .iter()
        .chain(std::iter::once(&report.dense))
        .map(|s| SeriesRow {
            k: s.k,
            mean: s.mean,
            median: s.median,
            above_3deg: s.fraction_above(3.0),
        })
        .collect();
    let mut out = c.sink()?;
    if !c.pretty {
        return write_json(&mut out, &rows);
    }
    writeln!(
        out,
        "{:>6} {:>10} {:>10} {:>10}",
        "k", "mean", "median", ">3deg"
    )?;
    for r in &rows {
        let k = r.k.map_or_else(|| "dense".to_string(), |k| k.to_string());
        writeln!(
            out,
            "{k:>6} {:>10.4} {:>10.4} {:>10.3}",
            r.mean, r.median, r.above_3deg
        )?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_overlay(c: &Common, heatmap: &Path) -> CliResult {
    let h = load_heatmap(heatmap)?;
    let analysis = analyze(&h, c.threshold, &c.fit_config()?)?;
    for (channel, fit) in analysis.fits.iter().enumerate() {
        if let Err(e) = fit {
            eprintln!("linefit-hva: warning: channel {channel}: {e}");
        }
    }
    let mut out = c.sink()?;
    out.write_all(overlay::render(&analysis).as_bytes())?;
    out.flush()?;
    Ok(())
}
