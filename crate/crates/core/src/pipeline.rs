//! Heatmap -> points -> lines -> angles for one image.

use crate::angles::{compute_report, AngleReport};
use crate::error::{Error, Result};
use crate::extract::{extract_points, PointSet};
use crate::fit::{fit_line, FitConfig, FitResult};
use crate::heatmap::Heatmap;
use crate::HEATMAP_CHANNELS;

#[derive(Debug)]
pub struct Analysis {
    /// Per channel: the extracted points (always) and the fit, if it succeeded.
    pub points: Vec<PointSet>,
    pub fits: Vec<Result<FitResult>>,
    /// Present only when all three channels were fitted.
    pub report: Option<AngleReport>,
}

impl Analysis {
    /// First fit failure, in channel order.
    pub fn first_error(&self) -> Option<&Error> {
        self.fits.iter().find_map(|f| f.as_ref().err())
    }
}

pub fn check_three_channels(h: &Heatmap) -> Result<()> {
    if h.channels() != HEATMAP_CHANNELS {
        return Err(Error::InvalidConfig(format!(
            "expected {HEATMAP_CHANNELS} channels (phalanx, first metatarsal, second metatarsal), got {}",
            h.channels()
        )));
    }
    Ok(())
}

/// Runs extraction and fitting on all three channels. Fit failures are kept
/// per channel; only configuration and shape problems are returned as `Err`.
pub fn analyze(h: &Heatmap, threshold: f64, cfg: &FitConfig) -> Result<Analysis> {
    check_three_channels(h)?;
    cfg.validate()?;
    let points = (0..HEATMAP_CHANNELS as usize)
        .map(|c| extract_points(h, c, threshold))
        .collect::<Result<Vec<_>>>()?;
    let fits: Vec<_> = points.iter().map(|p| fit_line(p, cfg)).collect();
    let report = match (&fits[0], &fits[1], &fits[2]) {
        (Ok(a), Ok(b), Ok(c)) => Some(compute_report(&a.line, &b.line, &c.line)),
        _ => None,
    };
    Ok(Analysis {
        points,
        fits,
        report,
    })
}
