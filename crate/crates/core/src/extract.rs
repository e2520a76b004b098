//! Thresholding of a predicted channel into a point set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::heatmap::Heatmap;
use crate::raster::cell_center;

/// Foreground decision threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Above-threshold cell centers of one channel, in original-image pixels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Point>,
    /// Cell probability for each entry of `points`.
    pub confidences: Vec<f32>,
    pub source_channel: usize,
}

impl PointSet {
    pub fn from_points(points: Vec<Point>, source_channel: usize) -> Self {
        let confidences = vec![1.0; points.len()];
        Self {
            points,
            confidences,
            source_channel,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Collects every cell of `channel` strictly above `threshold`, in row-major
/// order, mapped to its center in original-image pixels.
pub fn extract_points(h: &Heatmap, channel: usize, threshold: f64) -> Result<PointSet> {
    let plane = h.channel(channel)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "threshold {threshold} must lie strictly between 0 and 1"
        )));
    }
    let width = h.width() as usize;
    let mut out = PointSet {
        source_channel: channel,
        ..Default::default()
    };
    for (i, &v) in plane.iter().enumerate() {
        if f64::from(v) > threshold {
            out.points
                .push(cell_center(i / width, i % width, h.scale()));
            out.confidences.push(v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{line_from_segment, Segment};
    use crate::raster::{rasterize, RasterConfig};
    use proptest::prelude::*;

    #[test]
    fn empty_channel() {
        let h = Heatmap::zeros(8, 8, 1, 4).unwrap();
        assert!(extract_points(&h, 0, 0.5).unwrap().is_empty());
    }

    #[test]
    fn single_cell_center() {
        let mut h = Heatmap::zeros(8, 8, 2, 4).unwrap();
        h.set(1, 2, 3, 0.9);
        let ps = extract_points(&h, 1, 0.5).unwrap();
        assert_eq!(ps.points, vec![Point::new(14.0, 10.0)]);
        assert_eq!(ps.source_channel, 1);
    }

    #[test]
    fn threshold_is_strict() {
        let mut h = Heatmap::zeros(2, 1, 1, 1).unwrap();
        h.set(0, 0, 0, 0.5);
        h.set(0, 0, 1, 0.5000001);
        let ps = extract_points(&h, 0, 0.5).unwrap();
        assert_eq!(ps.points, vec![Point::new(1.5, 0.5)]);
    }

    #[test]
    fn bad_channel_and_threshold() {
        let h = Heatmap::zeros(2, 2, 3, 4).unwrap();
        assert!(matches!(
            extract_points(&h, 3, 0.5),
            Err(Error::ChannelOutOfRange {
                channel: 3,
                channels: 3
            })
        ));
        assert!(extract_points(&h, 0, 1.0).is_err());
        assert!(extract_points(&h, 0, 0.0).is_err());
    }

    #[test]
    fn label_channel_round_trip_count() {
        let s = Segment::new(Point::new(100.0, 100.0), Point::new(180.0, 600.0)).unwrap();
        let h = rasterize(&[s], &RasterConfig::default()).unwrap();
        let ps = extract_points(&h, 0, 0.5).unwrap();
        assert_eq!(ps.len(), h.count_above(0, 0.0).unwrap());
    }

    proptest! {
        #[test]
        fn raising_threshold_never_adds(vals in proptest::collection::vec(0.0f32..=1.0, 48),
                                        t1 in 0.01..0.99f64, t2 in 0.01..0.99f64) {
            let h = Heatmap::from_values(8, 6, 1, 4, vals).unwrap();
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let a = extract_points(&h, 0, lo).unwrap();
            let b = extract_points(&h, 0, hi).unwrap();
            prop_assert!(b.points.iter().all(|p| a.points.contains(p)));
        }

        #[test]
        fn label_points_stay_near_segment(ax in 20.0..490.0f64, ay in 20.0..1000.0f64,
                                          bx in 20.0..490.0f64, by in 20.0..1000.0f64, d in 1u32..9) {
            prop_assume!((ax - bx).hypot(ay - by) > 1.0);
            let s = Segment::new(Point::new(ax, ay), Point::new(bx, by)).unwrap();
            let cfg = RasterConfig::default().with_line_width(d);
            let h = rasterize(&[s], &cfg).unwrap();
            let ps = extract_points(&h, 0, 0.5).unwrap();
            let bound = d as f64 * 4.0 / 2.0 + 4.0 * std::f64::consts::SQRT_2 / 2.0;
            let line = line_from_segment(&s).unwrap();
            for p in &ps.points {
                prop_assert!(s.distance_to(*p) <= bound);
                prop_assert!(line.signed_distance(*p).abs() <= bound);
            }
        }
    }
}
