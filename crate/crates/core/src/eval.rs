//! Angle-error metrics and dataset evaluation.
//!
//! `acc^t` is the fraction of images whose absolute angle error is strictly
//! below `t` degrees. Images whose prediction cannot be fitted count as a
//! 90 degree error instead of being dropped.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angles::AngleReport;
use crate::error::{Error, Result};
use crate::fit::FitConfig;
use crate::geometry::{
    angle_between, line_from_segment, preprocess_transform, Line, Point, Segment,
};
use crate::heatmap::{read_hvah, Heatmap};
use crate::pipeline::analyze;

pub const DEFAULT_ACC_THRESHOLDS: [f64; 2] = [3.0, 5.0];
/// Error assigned to an image whose prediction could not be fitted.
pub const FAILURE_ERROR_DEG: f64 = 90.0;
/// Allowed disagreement between stored and recomputed ground-truth angles.
pub const GT_ANGLE_TOLERANCE_DEG: f64 = 0.01;

/// Ground truth for one image: three bone axes in original pixels, ordered
/// proximal phalanx, first metatarsal, second metatarsal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnnotationFile", into = "AnnotationFile")]
pub struct Annotation {
    pub image_id: String,
    pub image_w: u32,
    pub image_h: u32,
    pub segments: [Segment; 3],
    pub gt_alpha: Option<f64>,
    pub gt_beta: Option<f64>,
}

/// On-disk JSON shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnnotationFile {
    image: String,
    width: u32,
    height: u32,
    segments: Vec<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta_deg: Option<f64>,
}

impl TryFrom<AnnotationFile> for Annotation {
    type Error = Error;

    fn try_from(f: AnnotationFile) -> Result<Self> {
        let segments: Vec<Segment> = f
            .segments
            .iter()
            .map(|[a, b]| Segment {
                a: Point::new(a[0], a[1]),
                b: Point::new(b[0], b[1]),
            })
            .collect();
        let segments: [Segment; 3] = segments.try_into().map_err(|v: Vec<_>| {
            Error::InvalidAnnotation(format!("expected 3 segments, got {}", v.len()))
        })?;
        let a = Annotation {
            image_id: f.image,
            image_w: f.width,
            image_h: f.height,
            segments,
            gt_alpha: f.alpha_deg,
            gt_beta: f.beta_deg,
        };
        a.validate()?;
        Ok(a)
    }
}

impl From<Annotation> for AnnotationFile {
    fn from(a: Annotation) -> Self {
        Self {
            image: a.image_id,
            width: a.image_w,
            height: a.image_h,
            segments: a
                .segments
                .iter()
                .map(|s| [[s.a.x, s.a.y], [s.b.x, s.b.y]])
                .collect(),
            alpha_deg: a.gt_alpha,
            beta_deg: a.gt_beta,
        }
    }
}

impl Annotation {
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.segments.iter().enumerate() {
            s.validate().map_err(|_| {
                Error::InvalidAnnotation(format!("{}: segment {i} is degenerate", self.image_id))
            })?;
        }
        let (alpha, beta) = self.recomputed_angles()?;
        for (name, stored, recomputed) in [
            ("alpha", self.gt_alpha, alpha),
            ("beta", self.gt_beta, beta),
        ] {
            if let Some(v) = stored {
                if !((v - recomputed).abs() <= GT_ANGLE_TOLERANCE_DEG) {
                    return Err(Error::InvalidAnnotation(format!(
                        "{}: stored {name} {v} deg disagrees with segments ({recomputed:.4} deg)",
                        self.image_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn lines(&self) -> Result<[Line; 3]> {
        Ok([
            line_from_segment(&self.segments[0])?,
            line_from_segment(&self.segments[1])?,
            line_from_segment(&self.segments[2])?,
        ])
    }

    fn recomputed_angles(&self) -> Result<(f64, f64)> {
        let [l0, l1, l2] = self.lines()?;
        Ok((
            angle_between(&l0, &l1).value(),
            angle_between(&l1, &l2).value(),
        ))
    }

    /// Ground-truth (alpha, beta): stored values when present, otherwise
    /// recomputed from the segments.
    pub fn gt_angles(&self) -> Result<(f64, f64)> {
        let (alpha, beta) = self.recomputed_angles()?;
        Ok((self.gt_alpha.unwrap_or(alpha), self.gt_beta.unwrap_or(beta)))
    }

    /// Segments mapped into network-input pixels.
    pub fn network_segments(&self) -> Result<[Segment; 3]> {
        let t = preprocess_transform(self.image_w, self.image_h)?;
        Ok(self.segments.map(|s| t.forward_segment(&s)))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub image_id: String,
    pub pred_alpha: Option<f64>,
    pub pred_beta: Option<f64>,
    pub gt_alpha: f64,
    pub gt_beta: f64,
    pub err_alpha: f64,
    pub err_beta: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccEntry {
    pub threshold: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n: usize,
    pub failures: usize,
    pub mae_alpha: f64,
    pub mae_beta: f64,
    pub acc: Vec<AccEntry>,
}

impl EvalSummary {
    pub fn acc_at(&self, threshold: f64) -> Option<&AccEntry> {
        self.acc.iter().find(|e| e.threshold == threshold)
    }
}

/// Compensated (Neumaier) summation.
fn stable_sum(values: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Fraction of `errors` strictly below `t`.
pub fn acc_t(errors: &[f64], t: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(t > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "threshold must be > 0, got {t}"
        )));
    }
    let hits = errors.iter().filter(|&&e| e < t).count();
    Ok(hits as f64 / errors.len() as f64)
}

/// Mean absolute error in degrees.
pub fn mae(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(stable_sum(errors) / errors.len() as f64)
}

fn validate_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() || thresholds.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidConfig(format!(
            "accuracy thresholds must be a non-empty list of positive degrees, got {thresholds:?}"
        )));
    }
    Ok(())
}

/// Scores one prediction against its annotation.
pub fn score(annotation: &Annotation, report: Option<&AngleReport>) -> Result<EvalRow> {
    let (gt_alpha, gt_beta) = annotation.gt_angles()?;
    Ok(match report {
        Some(r) => EvalRow {
            image_id: annotation.image_id.clone(),
            pred_alpha: Some(r.alpha.value()),
            pred_beta: Some(r.beta.value()),
            gt_alpha,
            gt_beta,
            err_alpha: (r.alpha.value() - gt_alpha).abs(),
            err_beta: (r.beta.value() - gt_beta).abs(),
            failed: false,
        },
        None => EvalRow {
            image_id: annotation.image_id.clone(),
            pred_alpha: None,
            pred_beta: None,
            gt_alpha,
            gt_beta,
            err_alpha: FAILURE_ERROR_DEG,
            err_beta: FAILURE_ERROR_DEG,
            failed: true,
        },
    })
}

/// Aggregates rows into MAE and `acc^t` per threshold.
pub fn summarize(rows: &[EvalRow], thresholds: &[f64]) -> Result<EvalSummary> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    validate_thresholds(thresholds)?;
    let ea: Vec<f64> = rows.iter().map(|r| r.err_alpha).collect();
    let eb: Vec<f64> = rows.iter().map(|r| r.err_beta).collect();
    let acc = thresholds
        .iter()
        .map(|&t| {
            Ok(AccEntry {
                threshold: t,
                alpha: acc_t(&ea, t)?,
                beta: acc_t(&eb, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary {
        n: rows.len(),
        failures: rows.iter().filter(|r| r.failed).count(),
        mae_alpha: mae(&ea)?,
        mae_beta: mae(&eb)?,
        acc,
    })
}

/// Extracts, fits and scores every image. Rows keep dataset order.
pub fn evaluate(
    dataset: &[(Annotation, Heatmap)],
    fit_cfg: &FitConfig,
    thresholds: &[f64],
    extract_threshold: f64,
) -> Result<(Vec<EvalRow>, EvalSummary)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    validate_thresholds(thresholds)?;
    fit_cfg.validate()?;
    let rows = dataset
        .par_iter()
        .map(|(annotation, h)| {
            let analysis = analyze(h, extract_threshold, fit_cfg)?;
            score(annotation, analysis.report.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&rows, thresholds)?;
    Ok((rows, summary))
}

/// Pairs `<stem>.json` annotations with `<stem>.hvah` heatmaps in `dir`,
/// sorted by stem. Any file without a partner is reported.
pub fn find_pairs(dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut json: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut hvah: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()).map(str::to_owned),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        match ext {
            "json" => json.insert(stem, path),
            "hvah" => hvah.insert(stem, path),
            _ => None,
        };
    }
    let mut unpaired: Vec<String> = json
        .iter()
        .filter(|(k, _)| !hvah.contains_key(*k))
        .chain(hvah.iter().filter(|(k, _)| !json.contains_key(*k)))
        .map(|(_, p)| p.display().to_string())
        .collect();
    if !unpaired.is_empty() {
        unpaired.sort();
        return Err(Error::UnpairedFiles(unpaired));
    }
    if json.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(json
        .into_iter()
        .map(|(k, j)| {
            let h = hvah.remove(&k).expect("paired above");
            (j, h)
        })
        .collect())
}

pub fn load_dataset(dir: &Path) -> Result<Vec<(Annotation, Heatmap)>> {
    find_pairs(dir)?
        .into_iter()
        .map(|(j, h)| {
            let annotation = Annotation::load(&j)?;
            let heatmap = read_hvah(std::io::BufReader::new(fs::File::open(&h)?))?;
            Ok((annotation, heatmap))
        })
        .collect()
}

pub fn write_rows_csv<W: Write>(rows: &[EvalRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
