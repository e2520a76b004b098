//! Hard 0/1 line-segment labels at heatmap resolution.
//!
//! A cell belongs to channel `i` when its center, measured in original-image
//! pixels, lies within `line_width * scale / 2` of segment `i` (a capsule).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Segment};
use crate::heatmap::Heatmap;
use crate::{HEATMAP_HEIGHT, HEATMAP_SCALE, HEATMAP_WIDTH};

/// Line width used when nothing else is requested.
pub const DEFAULT_LINE_WIDTH: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterConfig {
    /// Stroke width in cells.
    pub line_width: u32,
    pub grid_width: u32,
    pub grid_height: u32,
    /// Original-image pixels per cell.
    pub scale: u32,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            line_width: DEFAULT_LINE_WIDTH,
            grid_width: HEATMAP_WIDTH,
            grid_height: HEATMAP_HEIGHT,
            scale: HEATMAP_SCALE,
        }
    }
}

impl RasterConfig {
    pub fn with_line_width(self, line_width: u32) -> Self {
        Self { line_width, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.line_width == 0 {
            return Err(Error::InvalidConfig("line width must be >= 1".into()));
        }
        if self.grid_width == 0 || self.grid_height == 0 || self.scale == 0 {
            return Err(Error::InvalidConfig(format!(
                "grid {}x{} with scale {} is empty",
                self.grid_width, self.grid_height, self.scale
            )));
        }
        Ok(())
    }

    /// Capsule radius in original-image pixels.
    pub fn radius_px(&self) -> f64 {
        self.line_width as f64 * self.scale as f64 / 2.0
    }
}

/// Center of cell `(row, col)` in original-image pixels.
pub fn cell_center(row: usize, col: usize, scale: u32) -> Point {
    let s = scale as f64;
    Point::new((col as f64 + 0.5) * s, (row as f64 + 0.5) * s)
}

/// Rasterizes one channel per segment.
pub fn rasterize(segments: &[Segment], cfg: &RasterConfig) -> Result<Heatmap> {
    cfg.validate()?;
    if segments.is_empty() {
        return Err(Error::InvalidConfig("nothing to rasterize".into()));
    }
    for s in segments {
        s.validate()?;
    }
    let mut h = Heatmap::zeros(
        cfg.grid_width,
        cfg.grid_height,
        segments.len() as u32,
        cfg.scale,
    )?;
    for (channel, s) in segments.iter().enumerate() {
        paint_capsule(h.channel_mut(channel), s, cfg);
    }
    Ok(h)
}

fn paint_capsule(plane: &mut [f32], s: &Segment, cfg: &RasterConfig) {
    let radius = cfg.radius_px();
    let scale = cfg.scale as f64;
    let (w, h) = (cfg.grid_width as i64, cfg.grid_height as i64);

    // Cell index range whose centers can reach the capsule's bounding box.
    let span = |lo: f64, hi: f64, n: i64| -> Option<(usize, usize)> {
        let first = (((lo - radius) / scale) - 0.5).ceil().max(0.0);
        let last = (((hi + radius) / scale) - 0.5).floor().min((n - 1) as f64);
        (first <= last).then_some((first as usize, last as usize))
    };
    let Some((c0, c1)) = span(s.a.x.min(s.b.x), s.a.x.max(s.b.x), w) else {
        return;
    };
    let Some((r0, r1)) = span(s.a.y.min(s.b.y), s.a.y.max(s.b.y), h) else {
        return;
    };

    for row in r0..=r1 {
        for col in c0..=c1 {
            if s.distance_to(cell_center(row, col, cfg.scale)) <= radius {
                plane[row * w as usize + col] = 1.0;
            }
        }
    }
}

/// One rasterization per line width, all on the grid of `base`.
pub fn sweep_widths(
    segments: &[Segment],
    widths: &[u32],
    base: &RasterConfig,
) -> Result<Vec<Heatmap>> {
    if widths.is_empty() {
        return Err(Error::InvalidConfig("no line widths given".into()));
    }
    widths
        .iter()
        .map(|&d| rasterize(segments, &base.with_line_width(d)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_cfg(line_width: u32) -> RasterConfig {
        RasterConfig {
            line_width,
            grid_width: 32,
            grid_height: 16,
            scale: 4,
        }
    }

    /// Independent oracle: visits every cell and measures the distance to the
    /// segment by dense sampling refined with a closed-form projection.
    fn brute_force(s: &Segment, cfg: &RasterConfig) -> Vec<(usize, usize)> {
        let r = cfg.line_width as f64 * cfg.scale as f64 / 2.0;
        let mut out = Vec::new();
        for row in 0..cfg.grid_height as usize {
            for col in 0..cfg.grid_width as usize {
                let cx = (col as f64 + 0.5) * cfg.scale as f64;
                let cy = (row as f64 + 0.5) * cfg.scale as f64;
                let (ux, uy) = (s.b.x - s.a.x, s.b.y - s.a.y);
                let t = ((cx - s.a.x) * ux + (cy - s.a.y) * uy) / (ux * ux + uy * uy);
                let dist = if t <= 0.0 {
                    (cx - s.a.x).hypot(cy - s.a.y)
                } else if t >= 1.0 {
                    (cx - s.b.x).hypot(cy - s.b.y)
                } else {
                    ((cx - s.a.x) * uy - (cy - s.a.y) * ux).abs() / ux.hypot(uy)
                };
                if dist <= r + 1e-12 {
                    out.push((row, col));
                }
            }
        }
        out
    }

    fn foreground(h: &Heatmap, channel: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for row in 0..h.height() as usize {
            for col in 0..h.width() as usize {
                if h.get(channel, row, col) > 0.0 {
                    out.push((row, col));
                }
            }
        }
        out
    }

    fn seg(ax: f64, ay: f64, bx: f64, by: f64) -> Segment {
        Segment::new(Point::new(ax, ay), Point::new(bx, by)).unwrap()
    }

    #[test]
    fn horizontal_segment_width_one() {
        let s = seg(8.0, 8.0, 88.0, 8.0);
        let cfg = small_cfg(1);
        let h = rasterize(&[s], &cfg).unwrap();
        let fg = foreground(&h, 0);
        assert_eq!(fg, brute_force(&s, &cfg));
        // y = 8 sits on the boundary between rows 1 and 2; both centers are
        // exactly 2 px away and the inclusive rule keeps both.
        let rows: std::collections::BTreeSet<_> = fg.iter().map(|&(r, _)| r).collect();
        assert_eq!(rows.into_iter().collect::<Vec<_>>(), vec![1, 2]);
        // cols whose centers fall in [6, 90]
        assert!(fg.iter().all(|&(_, c)| (1..=22).contains(&c)));
    }

    #[test]
    fn horizontal_segment_on_cell_centers() {
        // y = 50 is a row of cell centers: width 1 gives one row, width 8
        // reaches exactly 4 cells either side, and the inclusive rule keeps
        // both outermost rows.
        let cfg = RasterConfig {
            grid_height: 64,
            ..small_cfg(1)
        };
        let s = seg(40.0, 50.0, 100.0, 50.0);
        let rows = |d: u32| {
            let h = rasterize(&[s], &cfg.with_line_width(d)).unwrap();
            let fg = foreground(&h, 0);
            assert_eq!(fg, brute_force(&s, &cfg.with_line_width(d)));
            let set: std::collections::BTreeSet<_> = fg.iter().map(|&(r, _)| r).collect();
            set.len()
        };
        assert_eq!(rows(1), 1);
        // radius 16 around y=50: centers 34..66 -> rows 8..16 = 9 rows
        assert_eq!(rows(8), 9);
    }

    #[test]
    fn width_eight_matches_oracle() {
        let s = seg(8.0, 8.0, 88.0, 8.0);
        let cfg = small_cfg(8);
        let h = rasterize(&[s], &cfg).unwrap();
        assert_eq!(foreground(&h, 0), brute_force(&s, &cfg));
    }

    #[test]
    fn outside_grid_is_empty() {
        let s = seg(-500.0, -500.0, -400.0, -450.0);
        let h = rasterize(&[s], &small_cfg(4)).unwrap();
        assert!(h.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn errors() {
        let p = Point::new(1.0, 1.0);
        let bad = Segment { a: p, b: p };
        assert!(matches!(
            rasterize(&[bad], &small_cfg(1)),
            Err(Error::DegenerateSegment)
        ));
        assert!(rasterize(&[], &small_cfg(1)).is_err());
        assert!(rasterize(&[seg(0.0, 0.0, 1.0, 1.0)], &small_cfg(0)).is_err());
        assert!(sweep_widths(&[seg(0.0, 0.0, 1.0, 1.0)], &[], &small_cfg(1)).is_err());
    }

    #[test]
    fn sweep_shapes() {
        let s = [seg(10.0, 5.0, 100.0, 50.0)];
        let cfg = small_cfg(1);
        let all = sweep_widths(&s, &[1, 2, 4, 8], &cfg).unwrap();
        assert_eq!(all.len(), 4);
        let single = sweep_widths(&s, &[1], &cfg).unwrap();
        assert_eq!(single[0], rasterize(&s, &cfg).unwrap());
        let counts: Vec<_> = all.iter().map(|h| h.count_above(0, 0.5).unwrap()).collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    }

    proptest! {
        #[test]
        fn matches_brute_force(ax in -20.0..150.0f64, ay in -20.0..80.0f64,
                               bx in -20.0..150.0f64, by in -20.0..80.0f64, d in 1u32..9) {
            prop_assume!((ax - bx).hypot(ay - by) > 1e-3);
            let s = seg(ax, ay, bx, by);
            let cfg = small_cfg(d);
            let h = rasterize(&[s], &cfg).unwrap();
            prop_assert_eq!(foreground(&h, 0), brute_force(&s, &cfg));
            prop_assert!(h.values().iter().all(|&v| v == 0.0 || v == 1.0));
        }

        #[test]
        fn wider_is_superset(ax in 0.0..128.0f64, ay in 0.0..64.0f64,
                             bx in 0.0..128.0f64, by in 0.0..64.0f64, d in 1u32..8, extra in 1u32..4) {
            prop_assume!((ax - bx).hypot(ay - by) > 1e-3);
            let s = [seg(ax, ay, bx, by)];
            let thin = rasterize(&s, &small_cfg(d)).unwrap();
            let thick = rasterize(&s, &small_cfg(d + extra)).unwrap();
            for (a, b) in thin.values().iter().zip(thick.values()) {
                prop_assert!(*a <= *b);
            }
        }

        #[test]
        fn integer_cell_translation(ax in 24.0..40.0f64, ay in 16.0..30.0f64,
                                    bx in 24.0..40.0f64, by in 16.0..30.0f64,
                                    dc in 0usize..4, dr in 0usize..3, d in 1u32..3) {
            prop_assume!((ax - bx).hypot(ay - by) > 1e-3);
            let cfg = small_cfg(d);
            let s = seg(ax, ay, bx, by);
            let (tx, ty) = (dc as f64 * 4.0, dr as f64 * 4.0);
            let t = seg(ax + tx, ay + ty, bx + tx, by + ty);
            let a = rasterize(&[s], &cfg).unwrap();
            let b = rasterize(&[t], &cfg).unwrap();
            let shifted: Vec<_> = foreground(&a, 0).into_iter().map(|(r, c)| (r + dr, c + dc)).collect();
            prop_assert_eq!(shifted, foreground(&b, 0));
        }
    }
}
