//! Segmentation error (fraction of disagreeing pixels) and verification
//! rates from genuine/impostor match scores.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::SegmentationMask;
use crate::error::{Result, SegError};

#[derive(Debug, Clone, PartialEq)]
pub struct SegScore {
    pub per_image_errors: Vec<(String, f64)>,
    pub average_error: f64,
}

/// Per-image XOR fraction and its mean. Masks are paired by position.
pub fn nice1_error(predicted: &[SegmentationMask], truth: &[SegmentationMask]) -> Result<SegScore> {
    let ids: Vec<String> = (0..predicted.len()).map(|i| format!("{i}")).collect();
    nice1_error_named(&ids, predicted, truth)
}

pub fn nice1_error_named(
    ids: &[String],
    predicted: &[SegmentationMask],
    truth: &[SegmentationMask],
) -> Result<SegScore> {
    if predicted.len() != truth.len() || ids.len() != predicted.len() {
        return Err(SegError::Shape(format!(
            "{} predictions for {} ground-truth masks",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(SegError::Invalid("no masks to score".into()));
    }
    let mut per_image = Vec::with_capacity(predicted.len());
    for ((id, p), t) in ids.iter().zip(predicted).zip(truth) {
        if p.dims() != t.dims() {
            return Err(SegError::Shape(format!(
                "{id}: predicted {:?} vs truth {:?}",
                p.dims(),
                t.dims()
            )));
        }
        let disagree = p.pixels().iter().zip(t.pixels()).filter(|(a, b)| a != b).count();
        per_image.push((id.clone(), disagree as f64 / p.pixels().len() as f64));
    }
    let average_error = per_image.iter().map(|(_, e)| e).sum::<f64>() / per_image.len() as f64;
    Ok(SegScore {
        per_image_errors: per_image,
        average_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    HigherIsMatch,
    LowerIsMatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    pub polarity: Polarity,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>, polarity: Polarity) -> Result<Self> {
        if genuine.is_empty() || impostor.is_empty() {
            return Err(SegError::Invalid(
                "genuine and impostor score lists must be non-empty".into(),
            ));
        }
        if genuine.iter().chain(&impostor).any(|s| !s.is_finite()) {
            return Err(SegError::Invalid("match scores must be finite".into()));
        }
        Ok(Self {
            genuine,
            impostor,
            polarity,
        })
    }

    /// Scores oriented so that higher means match.
    fn oriented(&self) -> (Vec<f64>, Vec<f64>) {
        let sign = self.sign();
        (
            self.genuine.iter().map(|s| sign * s).collect(),
            self.impostor.iter().map(|s| sign * s).collect(),
        )
    }

    fn sign(&self) -> f64 {
        match self.polarity {
            Polarity::HigherIsMatch => 1.0,
            Polarity::LowerIsMatch => -1.0,
        }
    }
}

fn accepted(scores: &[f64], t: f64) -> usize {
    scores.iter().filter(|&&s| s >= t).count()
}

/// Distinct oriented scores, descending.
fn thresholds(genuine: &[f64], impostor: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    all.sort_by(|a, b| b.total_cmp(a));
    all.dedup();
    all
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub gar: f64,
    pub far: f64,
    /// Decision threshold in the caller's polarity; infinite when nothing
    /// can be accepted within the FAR budget.
    pub threshold: f64,
}

/// Genuine accept rate at the most permissive threshold whose false accept
/// rate is at most `far_target`. A score equal to the threshold is accepted;
/// the reported threshold is the loosest score value that still satisfies
/// the budget.
pub fn gar_at_far(scores: &ScoreSet, far_target: f64) -> Result<OperatingPoint> {
    if !(0.0..=1.0).contains(&far_target) {
        return Err(SegError::Invalid(format!(
            "FAR target must be in [0, 1], got {far_target}"
        )));
    }
    let (g, i) = scores.oriented();
    let (ng, ni) = (g.len() as f64, i.len() as f64);
    let mut best = OperatingPoint {
        gar: 0.0,
        far: 0.0,
        threshold: f64::INFINITY,
    };
    // FAR grows as the threshold falls, so stop at the first violation
    for t in thresholds(&g, &i) {
        let far = accepted(&i, t) as f64 / ni;
        if far > far_target {
            break;
        }
        best = OperatingPoint {
            gar: accepted(&g, t) as f64 / ng,
            far,
            threshold: t,
        };
    }
    best.threshold *= scores.sign();
    Ok(best)
}

/// `(far, gar)` for thresholds `+∞`, every distinct score (loosening), and
/// `−∞`; consecutive duplicate points are merged.
pub fn roc_points(scores: &ScoreSet) -> Vec<(f64, f64)> {
    let (g, i) = scores.oriented();
    let (ng, ni) = (g.len() as f64, i.len() as f64);
    let mut points = vec![(0.0, 0.0)];
    for t in thresholds(&g, &i) {
        points.push((accepted(&i, t) as f64 / ni, accepted(&g, t) as f64 / ng));
    }
    points.push((1.0, 1.0));
    points.dedup();
    points
}

/// One real per line; blank lines and `#` comments are skipped.
pub fn load_scores(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| SegError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| SegError::ManifestLine {
            path: path.to_path_buf(),
            line: n + 1,
            message: format!("not a number: {line:?}"),
        })?;
        out.push(v);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocSummary {
    pub points: Vec<(f64, f64)>,
    pub operating: OperatingPoint,
    pub far_target: f64,
}

pub fn format_report(seg: Option<&SegScore>, roc: Option<&RocSummary>) -> String {
    let mut out = String::new();
    if let Some(seg) = seg {
        out.push_str("image\terror\n");
        for (id, e) in &seg.per_image_errors {
            writeln!(out, "{id}\t{e:.6}").unwrap();
        }
        writeln!(out, "average\t{:.6}", seg.average_error).unwrap();
    }
    if let Some(roc) = roc {
        if !out.is_empty() {
            out.push('\n');
        }
        writeln!(
            out,
            "far_target\t{}\ngar\t{:.6}\nthreshold\t{}",
            roc.far_target, roc.operating.gar, roc.operating.threshold
        )
        .unwrap();
        out.push_str("\nfar\tgar\n");
        for (far, gar) in &roc.points {
            writeln!(out, "{far:.6}\t{gar:.6}").unwrap();
        }
    }
    out
}

/// Tab-separated report; identical inputs give identical bytes.
pub fn write_report(seg: Option<&SegScore>, roc: Option<&RocSummary>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| SegError::io(dir, e))?;
    }
    std::fs::write(path, format_report(seg, roc)).map_err(|e| SegError::io(path, e))
}
