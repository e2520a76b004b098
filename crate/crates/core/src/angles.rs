//! Hallux valgus angle (HVA, alpha) and inter-metatarsal angle (IMA, beta)
//! with their severity grades.
//!
//! Channel order is fixed: 0 proximal phalanx, 1 first metatarsal,
//! 2 second metatarsal.

use serde::{Deserialize, Serialize};

use crate::geometry::{angle_between, AngleDeg, Line};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Normal,
    Mild,
    Moderate,
    Severe,
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Severity::Normal => "normal",
            Severity::Mild => "mild",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
        })
    }
}

/// Lower bounds (degrees) of mild, moderate and severe. Each class runs up
/// to the next lower bound, so the integer gaps in the clinical table
/// (e.g. 20-21) belong to the lower class.
pub const HVA_BOUNDS: [f64; 3] = [15.0, 21.0, 40.0];
pub const IMA_BOUNDS: [f64; 3] = [9.0, 12.0, 18.0];

fn grade(value: f64, bounds: &[f64; 3]) -> Severity {
    if value >= bounds[2] {
        Severity::Severe
    } else if value >= bounds[1] {
        Severity::Moderate
    } else if value >= bounds[0] {
        Severity::Mild
    } else {
        Severity::Normal
    }
}

pub fn classify_hva(hva: AngleDeg) -> Severity {
    grade(hva.value(), &HVA_BOUNDS)
}

pub fn classify_ima(ima: AngleDeg) -> Severity {
    grade(ima.value(), &IMA_BOUNDS)
}

/// Grades HVA and IMA independently.
pub fn classify(hva: AngleDeg, ima: AngleDeg) -> (Severity, Severity) {
    (classify_hva(hva), classify_ima(ima))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleReport {
    pub alpha: AngleDeg,
    pub beta: AngleDeg,
    pub hva_class: Severity,
    pub ima_class: Severity,
}

pub fn compute_report(l0: &Line, l1: &Line, l2: &Line) -> AngleReport {
    let alpha = angle_between(l0, l1);
    let beta = angle_between(l1, l2);
    let (hva_class, ima_class) = classify(alpha, beta);
    AngleReport {
        alpha,
        beta,
        hva_class,
        ima_class,
    }
}
