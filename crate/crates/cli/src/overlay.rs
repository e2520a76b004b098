use std::fmt::Write;

use linefit_core::geometry::Line;
use linefit_core::pipeline::Analysis;
use linefit_core::{INPUT_HEIGHT, INPUT_WIDTH};

/// Stroke colors for phalanx, first metatarsal and second metatarsal.
pub const CHANNEL_COLORS: [&str; 3] = ["red", "green", "blue"];

/// Endpoints of `line` clipped to the `width` x `height` frame, if it
/// crosses the frame at all.
pub fn clip_to_frame(line: &Line, width: f64, height: f64) -> Option<((f64, f64), (f64, f64))> {
    let (dx, dy) = line.direction();
    let (ox, oy) = (line.nx * line.d, line.ny * line.d);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (o, dir, max) in [(ox, dx, width), (oy, dy, height)] {
        if dir.abs() < 1e-12 {
            if o < 0.0 || o > max {
                return None;
            }
            continue;
        }
        let (a, b) = ((0.0 - o) / dir, (max - o) / dir);
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    }
    if lo > hi {
        return None;
    }
    Some(((ox + lo * dx, oy + lo * dy), (ox + hi * dx, oy + hi * dy)))
}

pub fn render(analysis: &Analysis) -> String {
    let (w, h) = (INPUT_WIDTH, INPUT_HEIGHT);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="black"/>"#);

    for (channel, points) in analysis.points.iter().enumerate() {
        let color = CHANNEL_COLORS[channel % 3];
        let _ = writeln!(svg, r#"<g fill="{color}" fill-opacity="0.5">"#);
        for p in &points.points {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="1.5"/>"#, p.x, p.y);
        }
        svg.push_str("</g>\n");
    }

    for (channel, fit) in analysis.fits.iter().enumerate() {
        let color = CHANNEL_COLORS[channel % 3];
        let clipped = match fit {
            Ok(fit) => clip_to_frame(&fit.line, w as f64, h as f64)
                .ok_or_else(|| "line misses the frame".to_string()),
            Err(e) => Err(e.to_string()),
        };
        match clipped {
            Ok(((x1, y1), (x2, y2))) => {
                let _ = writeln!(
                    svg,
                    r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{color}" stroke-width="2"/>"#
                );
            }
            Err(msg) => {
                let _ = writeln!(
                    svg,
                    "<!-- warning: channel {channel}: {} -->",
                    msg.replace("--", "- -")
                );
            }
        }
    }

    let label = match &analysis.report {
        Some(r) => format!(
            "alpha {:.2} deg ({}), beta {:.2} deg ({})",
            r.alpha.value(),
            r.hva_class,
            r.beta.value(),
            r.ima_class
        ),
        None => "alpha n/a, beta n/a".to_string(),
    };
    let _ = writeln!(
        svg,
        r#"<text x="10" y="24" fill="white" font-family="monospace" font-size="16">{label}</text>"#
    );
    svg.push_str("</svg>\n");
    svg
}
