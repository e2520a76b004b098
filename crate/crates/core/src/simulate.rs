//! Seeded stand-in for the segmentation network.
//!
//! Generates plausible three-bone annotations, corrupts their label
//! heatmaps into "predictions", and runs the keypoint-count experiment.
//! Everything is a pure function of its seed; see [`crate::rng`] for the
//! exact random-number rules.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, Annotation, EvalRow, EvalSummary};
use crate::extract::{extract_points, PointSet};
use crate::fit::{fit_keypoints, fit_line, FitConfig};
use crate::geometry::{angle_between, line_from_segment, Point, Segment};
use crate::heatmap::Heatmap;
use crate::raster::{rasterize, RasterConfig};
use crate::rng::SplitMix;
use crate::{INPUT_HEIGHT, INPUT_WIDTH};

/// Sampling range of the hallux valgus angle, degrees.
pub const ALPHA_RANGE: (f64, f64) = (0.0, 45.0);
/// Sampling range of the inter-metatarsal angle, degrees.
pub const BETA_RANGE: (f64, f64) = (5.0, 20.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionConfig {
    /// Fraction of foreground cells zeroed.
    pub drop_rate: f64,
    /// Std of the Gaussian endpoint perturbation before rasterizing, pixels.
    pub jitter_sigma: f64,
    pub blob_count: usize,
    /// Blob disc radius, cells.
    pub blob_radius: f64,
    pub blob_value: f32,
    /// Std of additive per-cell noise; results are clamped to `[0, 1]`.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            drop_rate: 0.0,
            jitter_sigma: 0.0,
            blob_count: 0,
            blob_radius: 4.0,
            blob_value: 0.9,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return bad(format!("drop rate {} outside [0, 1]", self.drop_rate));
        }
        if !(0.0..=1.0).contains(&self.blob_value) {
            return bad(format!("blob value {} outside [0, 1]", self.blob_value));
        }
        for (name, v) in [
            ("jitter sigma", self.jitter_sigma),
            ("noise sigma", self.noise_sigma),
            ("blob radius", self.blob_radius),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Draws alpha and beta, then builds the annotation around them.
pub fn gen_annotation(seed: u64) -> Annotation {
    let mut rng = SplitMix::new(seed);
    let alpha = rng.uniform(ALPHA_RANGE.0, ALPHA_RANGE.1);
    let beta = rng.uniform(BETA_RANGE.0, BETA_RANGE.1);
    build_annotation(&mut rng, seed, alpha, beta)
}

/// Annotation with prescribed angles; the remaining geometry comes from `seed`.
pub fn gen_annotation_with(seed: u64, alpha: f64, beta: f64) -> Result<Annotation> {
    if !(0.0..=ALPHA_RANGE.1).contains(&alpha) || !(0.0..=BETA_RANGE.1).contains(&beta) {
        return Err(Error::InvalidConfig(format!(
            "alpha must lie in [0, {}] and beta in [0, {}]",
            ALPHA_RANGE.1, BETA_RANGE.1
        )));
    }
    let mut rng = SplitMix::new(seed);
    Ok(build_annotation(&mut rng, seed, alpha, beta))
}

fn unit_dir(theta_deg: f64) -> (f64, f64) {
    // Measured from "up" (toward the toes, -y), positive toward +x.
    let t = theta_deg.to_radians();
    (t.sin(), -t.cos())
}

fn along(p: Point, dir: (f64, f64), len: f64) -> Point {
    Point::new(p.x + dir.0 * len, p.y + dir.1 * len)
}

/// Left-foot layout in the 512x1024 network frame, toes up. The first
/// metatarsal sits medially (smaller x) and diverges from the second by
/// beta; the phalanx deviates laterally from the first metatarsal by alpha.
fn build_annotation(rng: &mut SplitMix, seed: u64, alpha: f64, beta: f64) -> Annotation {
    let theta_m2 = rng.uniform(0.0, 10.0);
    let theta_m1 = theta_m2 - beta;
    let theta_pp = theta_m1 + alpha;

    let base1 = Point::new(rng.uniform(200.0, 240.0), rng.uniform(780.0, 840.0));
    let len1 = rng.uniform(250.0, 300.0);
    let head1 = along(base1, unit_dir(theta_m1), len1);

    let gap = rng.uniform(15.0, 25.0);
    let len_pp = rng.uniform(130.0, 170.0);
    let pp_start = along(head1, unit_dir(theta_pp), gap);
    let pp_end = along(pp_start, unit_dir(theta_pp), len_pp);

    let base2 = Point::new(
        base1.x + rng.uniform(50.0, 70.0),
        base1.y + rng.uniform(0.0, 20.0),
    );
    let len2 = rng.uniform(260.0, 320.0);
    let head2 = along(base2, unit_dir(theta_m2), len2);

    Annotation {
        image_id: format!("sim_{seed:016x}"),
        image_w: INPUT_WIDTH,
        image_h: INPUT_HEIGHT,
        segments: [
            Segment {
                a: pp_start,
                b: pp_end,
            },
            Segment { a: base1, b: head1 },
            Segment { a: base2, b: head2 },
        ],
        gt_alpha: Some(alpha),
        gt_beta: Some(beta),
    }
}

/// Where a blob disc was painted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub channel: usize,
    /// Center in cell units (column, row).
    pub col: f64,
    pub row: f64,
    pub radius: f64,
}

impl Blob {
    pub fn covers(&self, row: usize, col: usize) -> bool {
        let dx = col as f64 + 0.5 - self.col;
        let dy = row as f64 + 0.5 - self.row;
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedPrediction {
    pub heatmap: Heatmap,
    pub jittered: Vec<Segment>,
    pub blobs: Vec<Blob>,
}

/// Corrupted label heatmap standing in for a network prediction.
///
/// Steps, in order: jitter endpoints, rasterize, drop foreground cells, add
/// clamped Gaussian noise, paint blobs.
pub fn simulate_prediction(
    a: &Annotation,
    raster: &RasterConfig,
    c: &CorruptionConfig,
) -> Result<Heatmap> {
    Ok(simulate_prediction_detailed(a, raster, c)?.heatmap)
}

pub fn simulate_prediction_detailed(
    a: &Annotation,
    raster: &RasterConfig,
    c: &CorruptionConfig,
) -> Result<SimulatedPrediction> {
    c.validate()?;
    let mut rng = SplitMix::new(c.seed);

    let jittered: Vec<Segment> = a
        .network_segments()?
        .iter()
        .map(|s| {
            let mut j = |p: Point| {
                Point::new(
                    p.x + rng.normal(0.0, c.jitter_sigma),
                    p.y + rng.normal(0.0, c.jitter_sigma),
                )
            };
            let a = j(s.a);
            let b = j(s.b);
            Segment { a, b }
        })
        .collect();
    let mut h = rasterize(&jittered, raster)?;

    let (w, rows) = (h.width() as usize, h.height() as usize);
    let channels = h.channels() as usize;
    if c.drop_rate > 0.0 {
        for ch in 0..channels {
            for v in h.channel_mut(ch) {
                if *v > 0.0 && rng.unit() < c.drop_rate {
                    *v = 0.0;
                }
            }
        }
    }

    if c.noise_sigma > 0.0 {
        for ch in 0..channels {
            for v in h.channel_mut(ch) {
                let noisy = f64::from(*v) + rng.normal(0.0, c.noise_sigma);
                *v = noisy.clamp(0.0, 1.0) as f32;
            }
        }
    }

    let mut blobs = Vec::with_capacity(c.blob_count);
    for _ in 0..c.blob_count {
        let blob = Blob {
            channel: rng.below(channels as u64) as usize,
            col: rng.uniform(0.0, w as f64),
            row: rng.uniform(0.0, rows as f64),
            radius: c.blob_radius,
        };
        let r = blob.radius;
        let r0 = (blob.row - r - 0.5).ceil().max(0.0) as usize;
        let r1 = ((blob.row + r - 0.5).floor().max(-1.0) as i64).min(rows as i64 - 1);
        let c0 = (blob.col - r - 0.5).ceil().max(0.0) as usize;
        let c1 = ((blob.col + r - 0.5).floor().max(-1.0) as i64).min(w as i64 - 1);
        if r1 >= 0 && c1 >= 0 {
            for row in r0..=r1 as usize {
                for col in c0..=c1 as usize {
                    if blob.covers(row, col) {
                        h.set(blob.channel, row, col, c.blob_value);
                    }
                }
            }
        }
        blobs.push(blob);
    }

    Ok(SimulatedPrediction {
        heatmap: h,
        jittered,
        blobs,
    })
}

/// `n` annotations with their simulated predictions. Image `i` uses
/// annotation seed `seed ^ i` and corruption seed `corruption.seed ^ i`.
pub fn gen_dataset(
    n: usize,
    seed: u64,
    raster: &RasterConfig,
    corruption: &CorruptionConfig,
) -> Result<Vec<(Annotation, Heatmap)>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let a = gen_annotation(seed ^ i);
            let h = simulate_prediction(&a, raster, &corruption.with_seed(corruption.seed ^ i))?;
            Ok((a, h))
        })
        .collect()
}

/// One column of a line-width comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WidthColumn {
    pub line_width: u32,
    pub summary: EvalSummary,
    #[serde(skip)]
    pub rows: Vec<EvalRow>,
}

/// Re-simulates every annotation at each label width and evaluates it.
/// Image `i` uses corruption seed `corruption.seed ^ i` for every width, so
/// the columns share their endpoint jitter.
pub fn line_width_sweep(
    annotations: &[Annotation],
    widths: &[u32],
    base: &RasterConfig,
    corruption: &CorruptionConfig,
    fit_cfg: &FitConfig,
    thresholds: &[f64],
    extract_threshold: f64,
) -> Result<Vec<WidthColumn>> {
    if widths.is_empty() {
        return Err(Error::InvalidConfig("no line widths given".into()));
    }
    if annotations.is_empty() {
        return Err(Error::EmptyDataset);
    }
    widths
        .iter()
        .map(|&d| {
            let raster = base.with_line_width(d);
            let dataset = annotations
                .par_iter()
                .enumerate()
                .map(|(i, a)| {
                    let c = corruption.with_seed(corruption.seed ^ i as u64);
                    Ok((a.clone(), simulate_prediction(a, &raster, &c)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let (rows, summary) = evaluate(&dataset, fit_cfg, thresholds, extract_threshold)?;
            Ok(WidthColumn {
                line_width: d,
                summary,
                rows,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointConfig {
    pub n_trials: usize,
    pub k_values: Vec<usize>,
    /// Std of the isotropic Gaussian jitter per predicted point, pixels.
    pub jitter_sigma: f64,
    pub seed: u64,
    pub segment_length: f64,
    /// Label width of the dense pipeline, cells.
    pub line_width: u32,
}

impl Default for KeypointConfig {
    fn default() -> Self {
        Self {
            n_trials: 1000,
            k_values: vec![2, 3, 4],
            jitter_sigma: 2.0,
            seed: 0,
            segment_length: 60.0,
            line_width: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    /// Number of keypoints, or `None` for the dense pipeline.
    pub k: Option<usize>,
    pub mean: f64,
    pub median: f64,
    /// Per-trial angle errors, degrees, in trial order.
    pub errors: Vec<f64>,
}

impl ErrorSeries {
    fn new(k: Option<usize>, errors: Vec<f64>) -> Self {
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Self {
            k,
            mean: errors.iter().sum::<f64>() / n as f64,
            median,
            errors,
        }
    }

    pub fn fraction_above(&self, deg: f64) -> f64 {
        self.errors.iter().filter(|&&e| e > deg).count() as f64 / self.errors.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointReport {
    pub keypoints: Vec<ErrorSeries>,
    pub dense: ErrorSeries,
}

struct TrialErrors {
    keypoints: Vec<f64>,
    dense: f64,
}

/// Compares k-keypoint line estimates with the dense label pipeline.
///
/// Each trial places a segment of `segment_length` pixels with uniform
/// position and orientation. For each k, the k evenly spaced points from
/// endpoint to endpoint are jittered independently and fitted by plain
/// total least squares. The dense pipeline rasterizes the same segment,
/// extracts its cells, jitters every extracted point with the same noise
/// model and fits with WELSCH.
pub fn keypoint_experiment(cfg: &KeypointConfig) -> Result<KeypointReport> {
    if cfg.n_trials == 0 {
        return Err(Error::InvalidConfig("n_trials must be >= 1".into()));
    }
    if cfg.k_values.is_empty() || cfg.k_values.iter().any(|&k| k < 2) {
        return Err(Error::InvalidConfig("every k must be >= 2".into()));
    }
    if !(cfg.jitter_sigma >= 0.0) || !(cfg.segment_length > 0.0) {
        return Err(Error::InvalidConfig(
            "jitter must be >= 0 and length > 0".into(),
        ));
    }
    let raster = RasterConfig::default().with_line_width(cfg.line_width);
    raster.validate()?;

    let trials = (0..cfg.n_trials as u64)
        .into_par_iter()
        .map(|t| run_trial(cfg, &raster, t))
        .collect::<Result<Vec<_>>>()?;

    let keypoints = cfg
        .k_values
        .iter()
        .enumerate()
        .map(|(i, &k)| ErrorSeries::new(Some(k), trials.iter().map(|t| t.keypoints[i]).collect()))
        .collect();
    let dense = ErrorSeries::new(None, trials.iter().map(|t| t.dense).collect());
    Ok(KeypointReport { keypoints, dense })
}

fn run_trial(cfg: &KeypointConfig, raster: &RasterConfig, trial: u64) -> Result<TrialErrors> {
    let mut rng = SplitMix::derive(cfg.seed, trial);
    let margin = cfg.segment_length;
    let center = Point::new(
        rng.uniform(margin, INPUT_WIDTH as f64 - margin),
        rng.uniform(margin, INPUT_HEIGHT as f64 - margin),
    );
    let theta = rng.uniform(0.0, std::f64::consts::PI);
    let half = cfg.segment_length / 2.0;
    let (dx, dy) = (theta.cos() * half, theta.sin() * half);
    let segment = Segment::new(
        Point::new(center.x - dx, center.y - dy),
        Point::new(center.x + dx, center.y + dy),
    )?;
    let truth = line_from_segment(&segment)?;
    let sigma = cfg.jitter_sigma;

    let mut keypoints = Vec::with_capacity(cfg.k_values.len());
    for &k in &cfg.k_values {
        let samples: Vec<Point> = (0..k)
            .map(|i| {
                let p = segment.lerp(i as f64 / (k - 1) as f64);
                Point::new(p.x + rng.normal(0.0, sigma), p.y + rng.normal(0.0, sigma))
            })
            .collect();
        let line = fit_keypoints(&samples)?;
        keypoints.push(angle_between(&line, &truth).value());
    }

    let h = rasterize(&[segment], raster)?;
    let mut points = extract_points(&h, 0, 0.5)?;
    for p in &mut points.points {
        p.x += rng.normal(0.0, sigma);
        p.y += rng.normal(0.0, sigma);
    }
    let dense = dense_error(&points, &truth)?;
    Ok(TrialErrors { keypoints, dense })
}

fn dense_error(points: &PointSet, truth: &crate::geometry::Line) -> Result<f64> {
    let fit = fit_line(points, &FitConfig::default())?;
    Ok(angle_between(&fit.line, truth).value())
}
