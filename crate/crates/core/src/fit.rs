//! Robust line fitting by iteratively reweighted total least squares.
//!
//! Every iteration fits the weighted principal axis of the points, measures
//! orthogonal residuals, rescales them by a MAD estimate and turns the
//! scaled residuals into new weights through the selected M-estimator.
//! Because the weighted principal axis is the exact minimizer of the
//! weighted sum of squared orthogonal residuals, each step decreases the
//! robust objective for a fixed scale.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::PointSet;
use crate::geometry::{Line, Point};
use crate::rng::SplitMix;

/// Guard for the L1 weight at zero residual.
pub const L1_EPSILON: f64 = 1e-8;
/// Gaussian consistency factor for the median absolute deviation.
pub const MAD_CONSISTENCY: f64 = 1.4826;
/// Smallest residual scale, in pixels.
pub const MIN_SCALE: f64 = 1e-6;

/// M-estimator loss. Tuning constants apply to residuals already divided by
/// the robust scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "c", rename_all = "lowercase")]
pub enum RhoKind {
    L2,
    L1,
    L12,
    Fair(f64),
    Huber(f64),
    Welsch(f64),
}

impl RhoKind {
    pub const FAIR_C: f64 = 1.3998;
    pub const HUBER_C: f64 = 1.345;
    pub const WELSCH_C: f64 = 2.9846;

    pub const ALL_NAMES: [&'static str; 6] = ["l2", "l1", "l12", "fair", "huber", "welsch"];

    pub fn fair() -> Self {
        Self::Fair(Self::FAIR_C)
    }

    pub fn huber() -> Self {
        Self::Huber(Self::HUBER_C)
    }

    pub fn welsch() -> Self {
        Self::Welsch(Self::WELSCH_C)
    }

    /// All six kinds with their default constants.
    pub fn all() -> [RhoKind; 6] {
        [
            Self::L2,
            Self::L1,
            Self::L12,
            Self::fair(),
            Self::huber(),
            Self::welsch(),
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::L2 => "l2",
            Self::L1 => "l1",
            Self::L12 => "l12",
            Self::Fair(_) => "fair",
            Self::Huber(_) => "huber",
            Self::Welsch(_) => "welsch",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Fair(c) | Self::Huber(c) | Self::Welsch(c) if !(c > 0.0 && c.is_finite()) => {
                Err(Error::InvalidConfig(format!(
                    "{} tuning constant must be > 0, got {c}",
                    self.name()
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn rho(&self, r: f64) -> f64 {
        let a = r.abs();
        match *self {
            Self::L2 => r * r / 2.0,
            Self::L1 => a,
            Self::L12 => 2.0 * ((1.0 + r * r / 2.0).sqrt() - 1.0),
            Self::Fair(c) => c * c * (a / c - (a / c).ln_1p()),
            Self::Huber(c) => {
                if a <= c {
                    r * r / 2.0
                } else {
                    c * a - c * c / 2.0
                }
            }
            Self::Welsch(c) => c * c / 2.0 * (1.0 - (-(r / c) * (r / c)).exp()),
        }
    }

    /// IRLS weight `psi(r) / r`.
    pub fn weight(&self, r: f64) -> f64 {
        let a = r.abs();
        match *self {
            Self::L2 => 1.0,
            Self::L1 => 1.0 / a.max(L1_EPSILON),
            Self::L12 => 1.0 / (1.0 + r * r / 2.0).sqrt(),
            Self::Fair(c) => 1.0 / (1.0 + a / c),
            Self::Huber(c) => {
                if a <= c {
                    1.0
                } else {
                    c / a
                }
            }
            Self::Welsch(c) => (-(r / c) * (r / c)).exp(),
        }
    }
}

impl Default for RhoKind {
    fn default() -> Self {
        Self::welsch()
    }
}

impl fmt::Display for RhoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RhoKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Self::L2),
            "l1" => Ok(Self::L1),
            "l12" => Ok(Self::L12),
            "fair" => Ok(Self::fair()),
            "huber" => Ok(Self::huber()),
            "welsch" => Ok(Self::welsch()),
            other => Err(Error::InvalidConfig(format!(
                "unknown rho '{other}', expected one of {}",
                Self::ALL_NAMES.join("|")
            ))),
        }
    }
}

pub fn rho(kind: RhoKind, r: f64) -> f64 {
    kind.rho(r)
}

pub fn weight(kind: RhoKind, r: f64) -> f64 {
    kind.weight(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub rho: RhoKind,
    pub max_iter: usize,
    /// Convergence threshold on the change of line direction, in radians.
    pub tol: f64,
    pub min_points: usize,
    /// Multiply IRLS weights by the cell probabilities of the point set.
    pub use_confidences: bool,
    /// Point pairs scored for a high-breakdown starting line; zero keeps
    /// only the uniform-weight start.
    pub init_samples: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rho: RhoKind::welsch(),
            max_iter: 100,
            tol: 1e-6,
            min_points: 2,
            use_confidences: false,
            init_samples: 200,
        }
    }
}

impl FitConfig {
    pub fn with_rho(self, rho: RhoKind) -> Self {
        Self { rho, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        self.rho.validate()?;
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be > 0".into()));
        }
        if self.min_points < 2 {
            return Err(Error::InvalidConfig("min_points must be >= 2".into()));
        }
        Ok(())
    }
}

/// Line and residual scale produced by one IRLS iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub line: Line,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub line: Line,
    pub iterations: usize,
    pub converged: bool,
    /// Sum of `rho(r_i / scale)` at the returned line.
    pub final_objective: f64,
    /// Residual scale (pixels) at the returned line.
    pub scale: f64,
    /// Final per-point weights, normalized into `[0, 1]`.
    pub inlier_weights: Vec<f64>,
    pub trace: Vec<Iterate>,
}

/// Weighted principal-axis line. Returns `DegeneratePoints` when the
/// weighted scatter has rank zero.
fn weighted_tls(points: &[Point], weights: &[f64]) -> Result<Line> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegeneratePoints);
    }
    let (mut mx, mut my) = (0.0, 0.0);
    for (p, &w) in points.iter().zip(weights) {
        mx += w * p.x;
        my += w * p.y;
    }
    mx /= total;
    my /= total;

    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (p, &w) in points.iter().zip(weights) {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    let trace = sxx + syy;
    let spread = 1e-12 * (1.0 + mx.abs() + my.abs());
    if trace / total <= spread * spread {
        return Err(Error::DegeneratePoints);
    }

    // Isotropic scatter has no principal axis; prefer vertical.
    let tie = 1e-12 * trace;
    let (dir_x, dir_y) = if (sxx - syy).abs() <= tie && sxy.abs() <= tie {
        (0.0, 1.0)
    } else {
        // Major eigenvector of the scatter matrix; pick the better-conditioned
        // of the two equivalent forms.
        let half = 0.5 * (sxx - syy);
        let lambda = 0.5 * trace + half.hypot(sxy);
        let u = (sxy, lambda - sxx);
        let v = (lambda - syy, sxy);
        if u.0.hypot(u.1) >= v.0.hypot(v.1) {
            u
        } else {
            v
        }
    };
    Line::through(Point::new(mx, my), dir_x, dir_y)
}

/// Angle in radians between two undirected lines.
fn rotation_between(a: &Line, b: &Line) -> f64 {
    let dot = (a.nx * b.nx + a.ny * b.ny).abs();
    let cross = (a.nx * b.ny - a.ny * b.nx).abs();
    cross.atan2(dot)
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let (below, mid, _) = values.select_nth_unstable_by(n / 2, f64::total_cmp);
    let upper = *mid;
    if n % 2 == 1 {
        upper
    } else {
        let lower = below.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// `1.4826 * median(|r - median(r)|)`, floored at [`MIN_SCALE`].
pub fn mad_scale(residuals: &[f64]) -> f64 {
    if residuals.is_empty() {
        return MIN_SCALE;
    }
    let mut buf = residuals.to_vec();
    let center = median(&mut buf);
    for (b, r) in buf.iter_mut().zip(residuals) {
        *b = (r - center).abs();
    }
    (MAD_CONSISTENCY * median(&mut buf)).max(MIN_SCALE)
}

fn priors(pts: &PointSet, cfg: &FitConfig) -> Vec<f64> {
    if cfg.use_confidences && pts.confidences.len() == pts.points.len() {
        pts.confidences.iter().map(|&c| f64::from(c)).collect()
    } else {
        vec![1.0; pts.points.len()]
    }
}

/// Robust objective of `line` for a fixed residual `scale`.
pub fn objective(pts: &PointSet, line: &Line, scale: f64, cfg: &FitConfig) -> f64 {
    priors(pts, cfg)
        .iter()
        .zip(&pts.points)
        .map(|(w, p)| w * cfg.rho.rho(line.signed_distance(*p) / scale))
        .sum()
}

/// Fits a line to `pts` by IRLS on orthogonal residuals.
///
/// The first run starts from uniform weights. With `init_samples > 0`, a
/// second run starts from the best of that many lines through point pairs,
/// scored by the residual scale they induce (a fixed pseudo-random
/// sequence, so results stay deterministic). The run ending at the smaller
/// residual scale is returned. `L2` ignores its start and always makes a
/// single run.
///
/// Non-convergence is not an error: the last iterate is returned with
/// `iterations == max_iter` and `converged == false`.
pub fn fit_line(pts: &PointSet, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let n = pts.points.len();
    if n < cfg.min_points {
        return Err(Error::TooFewPoints {
            channel: Some(pts.source_channel),
            found: n,
            required: cfg.min_points,
        });
    }
    let prior = priors(pts, cfg);
    let mut best = irls(&pts.points, &prior, cfg, None)?;

    if cfg.rho != RhoKind::L2 && cfg.init_samples > 0 {
        if let Some(start) = best_pair_line(&pts.points, cfg.init_samples) {
            if let Ok(run) = irls(&pts.points, &prior, cfg, Some(start)) {
                if run.last().scale < best.last().scale {
                    best = run;
                }
            }
        }
    }

    let last = best.last();
    let mut weights: Vec<f64> = pts
        .points
        .iter()
        .map(|p| cfg.rho.weight(last.line.signed_distance(*p) / last.scale))
        .collect();
    let top = weights.iter().cloned().fold(1.0, f64::max);
    for w in &mut weights {
        *w /= top;
    }

    Ok(FitResult {
        line: last.line,
        iterations: best.trace.len(),
        converged: best.converged,
        final_objective: objective(pts, &last.line, last.scale, cfg),
        scale: last.scale,
        inlier_weights: weights,
        trace: best.trace,
    })
}

const PAIR_SEED: u64 = 0x6c69_6e65_6669_7400;

/// Line through the sampled point pair with the smallest residual scale.
fn best_pair_line(points: &[Point], samples: usize) -> Option<Line> {
    let n = points.len();
    let mut rng = SplitMix::new(PAIR_SEED ^ n as u64);
    let mut residuals = vec![0.0; n];
    let mut best: Option<(f64, Line)> = None;
    for _ in 0..samples {
        let i = rng.below(n as u64) as usize;
        let j = (i + 1 + rng.below(n as u64 - 1) as usize) % n;
        let (a, b) = (points[i], points[j]);
        let Ok(line) = Line::through(a, b.x - a.x, b.y - a.y) else {
            continue;
        };
        for (r, p) in residuals.iter_mut().zip(points) {
            *r = line.signed_distance(*p);
        }
        let scale = mad_scale(&residuals);
        if best.is_none_or(|(s, _)| scale < s) {
            best = Some((scale, line));
        }
    }
    best.map(|(_, line)| line)
}

struct Run {
    trace: Vec<Iterate>,
    converged: bool,
}

impl Run {
    fn last(&self) -> Iterate {
        *self.trace.last().expect("at least one iterate")
    }
}

fn irls(points: &[Point], prior: &[f64], cfg: &FitConfig, start: Option<Line>) -> Result<Run> {
    let n = points.len();
    let mut residuals = vec![0.0; n];
    let mut robust = vec![1.0; n];
    let reweight = |line: &Line, residuals: &mut [f64], robust: &mut [f64]| {
        for (r, p) in residuals.iter_mut().zip(points) {
            *r = line.signed_distance(*p);
        }
        let scale = mad_scale(residuals);
        for (w, r) in robust.iter_mut().zip(residuals.iter()) {
            *w = cfg.rho.weight(r / scale);
        }
        scale
    };

    let mut weights = prior.to_vec();
    if let Some(line) = &start {
        reweight(line, &mut residuals, &mut robust);
        for ((w, p), r) in weights.iter_mut().zip(prior).zip(&robust) {
            *w = p * r;
        }
    }
    let mut previous = start;
    let mut trace: Vec<Iterate> = Vec::new();
    let mut converged = false;

    for it in 0..cfg.max_iter {
        let line = match weighted_tls(points, &weights) {
            Ok(line) => line,
            // All weight collapsed onto a point; keep the previous iterate.
            Err(_) if it > 0 => break,
            Err(e) => return Err(e),
        };
        let scale = reweight(&line, &mut residuals, &mut robust);
        trace.push(Iterate { line, scale });
        if let Some(prev) = previous {
            if rotation_between(&prev, &line) < cfg.tol {
                converged = true;
                break;
            }
        }
        previous = Some(line);
        for ((w, p), r) in weights.iter_mut().zip(prior).zip(&robust) {
            *w = p * r;
        }
    }
    Ok(Run { trace, converged })
}

/// Plain single-pass total-least-squares line through the given samples.
pub fn fit_keypoints(samples: &[Point]) -> Result<Line> {
    if samples.len() < 2 {
        return Err(Error::TooFewPoints {
            channel: None,
            found: samples.len(),
            required: 2,
        });
    }
    weighted_tls(samples, &vec![1.0; samples.len()])
}
