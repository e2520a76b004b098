//! Planar primitives in image pixel coordinates.
//!
//! The origin is the top-left corner of the image, `x` grows to the right and
//! `y` grows downward. Lines are undirected and stored in unit-normal form
//! `nx * x + ny * y = d` with a canonical sign, so two descriptions of the
//! same line compare equal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{INPUT_HEIGHT, INPUT_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A closed segment between two endpoints, e.g. one annotated bone axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    /// Builds a segment, rejecting coincident endpoints.
    pub fn new(a: Point, b: Point) -> Result<Self> {
        let s = Self { a, b };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.a.x, self.a.y, self.b.x, self.b.y]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.a == self.b {
            return Err(Error::DegenerateSegment);
        }
        Ok(())
    }

    pub fn reversed(&self) -> Self {
        Self {
            a: self.b,
            b: self.a,
        }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(&self.b)
    }

    /// Point at parameter `t` in `[0, 1]` from `a` to `b`.
    pub fn lerp(&self, t: f64) -> Point {
        Point::new(
            self.a.x + t * (self.b.x - self.a.x),
            self.a.y + t * (self.b.y - self.a.y),
        )
    }

    /// Euclidean distance from `p` to the closed segment.
    pub fn distance_to(&self, p: Point) -> f64 {
        let dx = self.b.x - self.a.x;
        let dy = self.b.y - self.a.y;
        let len2 = dx * dx + dy * dy;
        let t = (((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len2).clamp(0.0, 1.0);
        let cx = self.a.x + t * dx;
        let cy = self.a.y + t * dy;
        (p.x - cx).hypot(p.y - cy)
    }
}

/// Undirected line `nx * x + ny * y = d` with a unit normal.
///
/// Canonical sign: `ny > 0`, or `ny == 0` and `nx > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub nx: f64,
    pub ny: f64,
    pub d: f64,
}

impl Line {
    /// Normalizes and canonicalizes an arbitrary (non-zero) normal.
    pub fn from_normal(nx: f64, ny: f64, d: f64) -> Result<Self> {
        let norm = nx.hypot(ny);
        if !(norm > 0.0) || !norm.is_finite() || !d.is_finite() {
            return Err(Error::DegenerateSegment);
        }
        let (mut nx, mut ny, mut d) = (nx / norm, ny / norm, d / norm);
        if ny < 0.0 || (ny == 0.0 && nx < 0.0) {
            nx = -nx;
            ny = -ny;
            d = -d;
        }
        // fold negative zeros
        Ok(Self {
            nx: nx + 0.0,
            ny: ny + 0.0,
            d: d + 0.0,
        })
    }

    /// Line through `p` with the given (not necessarily unit) direction.
    pub fn through(p: Point, dir_x: f64, dir_y: f64) -> Result<Self> {
        let norm = dir_x.hypot(dir_y);
        if !(norm > 0.0) {
            return Err(Error::DegenerateSegment);
        }
        let (nx, ny) = (-dir_y / norm, dir_x / norm);
        Self::from_normal(nx, ny, nx * p.x + ny * p.y)
    }

    /// Unit direction vector, rotated +90 degrees from the normal.
    pub fn direction(&self) -> (f64, f64) {
        (self.ny, -self.nx)
    }

    pub fn signed_distance(&self, p: Point) -> f64 {
        self.nx * p.x + self.ny * p.y - self.d
    }

    /// Orthogonal projection of `p` onto the line.
    pub fn project(&self, p: Point) -> Point {
        let r = self.signed_distance(p);
        Point::new(p.x - r * self.nx, p.y - r * self.ny)
    }
}

/// Angle between two undirected lines, in degrees within `[0, 90]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngleDeg(f64);

impl AngleDeg {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=90.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::AngleOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for AngleDeg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3}°", self.0)
    }
}

/// Canonical line through both endpoints of `s`.
///
/// The offset is computed from the endpoint midpoint so that a segment and
/// its reversal produce bit-identical lines.
pub fn line_from_segment(s: &Segment) -> Result<Line> {
    s.validate()?;
    let dx = s.b.x - s.a.x;
    let dy = s.b.y - s.a.y;
    let norm = dx.hypot(dy);
    let (mut nx, mut ny) = (-dy / norm, dx / norm);
    if ny < 0.0 || (ny == 0.0 && nx < 0.0) {
        nx = -nx;
        ny = -ny;
    }
    let d = (nx * (s.a.x + s.b.x) + ny * (s.a.y + s.b.y)) * 0.5;
    Ok(Line {
        nx: nx + 0.0,
        ny: ny + 0.0,
        d: d + 0.0,
    })
}

/// Angle between two undirected lines, `acos(|n1 . n2|)` in degrees.
///
/// Evaluated as `atan2(|n1 x n2|, |n1 . n2|)`, which is exact-symmetric and
/// stays well conditioned for nearly parallel lines.
pub fn angle_between(l1: &Line, l2: &Line) -> AngleDeg {
    let dot = (l1.nx * l2.nx + l1.ny * l2.ny).abs();
    let cross = (l1.nx * l2.ny - l1.ny * l2.nx).abs();
    AngleDeg(cross.atan2(dot).to_degrees().clamp(0.0, 90.0))
}

/// Proportional resize to the network input width followed by a bottom
/// crop or bottom pad to the network input height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub src_width: u32,
    pub src_height: u32,
    pub scale: f64,
    /// `round(src_height * scale)`, half away from zero.
    pub scaled_height: u32,
    pub crop_rows: u32,
    pub pad_rows: u32,
}

pub fn preprocess_transform(src_w: u32, src_h: u32) -> Result<Preprocess> {
    if src_w == 0 || src_h == 0 {
        return Err(Error::InvalidConfig(format!(
            "source image must be at least 1x1, got {src_w}x{src_h}"
        )));
    }
    let scale = INPUT_WIDTH as f64 / src_w as f64;
    let scaled_height = (src_h as f64 * scale).round() as u32;
    let target = INPUT_HEIGHT;
    Ok(Preprocess {
        src_width: src_w,
        src_height: src_h,
        scale,
        scaled_height,
        crop_rows: scaled_height.saturating_sub(target),
        pad_rows: target.saturating_sub(scaled_height),
    })
}

impl Preprocess {
    /// Maps a source-image point into network-input pixels. The top edge is
    /// the anchor, so cropping or padding never shifts coordinates.
    pub fn forward(&self, p: Point) -> Point {
        Point::new(p.x * self.scale, p.y * self.scale)
    }

    pub fn inverse(&self, p: Point) -> Point {
        Point::new(p.x / self.scale, p.y / self.scale)
    }

    pub fn forward_segment(&self, s: &Segment) -> Segment {
        Segment {
            a: self.forward(s.a),
            b: self.forward(s.b),
        }
    }

    /// Whether a network-input point survives the bottom crop.
    pub fn in_bounds(&self, p: Point) -> bool {
        (0.0..=INPUT_WIDTH as f64).contains(&p.x) && (0.0..=INPUT_HEIGHT as f64).contains(&p.y)
    }
}
