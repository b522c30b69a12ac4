//! Sequence-aware fold splitting, the split-fraction schedule, and the
//! workload sweep over it.
//!
//! Within every video sequence fold 1 is a prefix in frame order, so the
//! first frame of each sequence is always annotated by hand and fold 1
//! grows monotonically with the fraction.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationSet, ImageRecord};
use crate::error::{check_half_open_unit, check_unit, Error, Result};
use crate::workload::{estimate, TimingModel, WorkloadEstimate};

/// Slack on `fraction * frames` before rounding up, so that e.g.
/// `0.07 * 100` counts as 7 frames rather than 8.
const CEIL_SLACK: f64 = 1e-9;

/// Fold-1 fractions swept by default: 1..=10 % in 1 % steps, then
/// 15..=95 % in 5 % steps.
pub fn schedule() -> Vec<f64> {
    (1..=10)
        .chain((15..=95).step_by(5))
        .map(|p| f64::from(p) / 100.0)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPoint {
    pub fraction: f64,
    /// Ordered by sequence, then frame.
    pub fold1_image_ids: Vec<u64>,
    pub fold2_image_ids: Vec<u64>,
}

/// Number of frames of an `n`-frame sequence that go to fold 1.
pub fn fold1_frames(fraction: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let k = (fraction * n as f64 - CEIL_SLACK).ceil().max(1.0) as usize;
    k.min(n)
}

/// Splits images into folds: each sequence contributes its first
/// `ceil(fraction * frames)` frames (at least one) to fold 1.
pub fn split(images: &[ImageRecord], fraction: f64) -> Result<SplitPoint> {
    check_half_open_unit("split fraction", fraction)?;
    if images.is_empty() {
        return Err(Error::Validation("cannot split an empty dataset".into()));
    }
    let mut sequences: BTreeMap<&str, Vec<&ImageRecord>> = BTreeMap::new();
    for im in images {
        sequences.entry(im.sequence_id.as_str()).or_default().push(im);
    }
    let mut fold1 = Vec::new();
    let mut fold2 = Vec::new();
    for frames in sequences.values_mut() {
        frames.sort_by_key(|im| (im.frame_index, im.id));
        let k = fold1_frames(fraction, frames.len());
        fold1.extend(frames[..k].iter().map(|im| im.id));
        fold2.extend(frames[k..].iter().map(|im| im.id));
    }
    Ok(SplitPoint {
        fraction,
        fold1_image_ids: fold1,
        fold2_image_ids: fold2,
    })
}

pub fn split_set(set: &AnnotationSet, fraction: f64) -> Result<SplitPoint> {
    split(&set.images, fraction)
}

/// Detector quality measured (or modeled) after training on a fold-1 fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityPoint {
    pub fraction: f64,
    pub precision: f64,
    pub recall: f64,
    /// Measured number of fold-2 proposals, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityCurve {
    points: Vec<QualityPoint>,
}

impl QualityCurve {
    pub fn new(points: Vec<QualityPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation("quality curve has no points".into()));
        }
        for p in &points {
            check_half_open_unit("quality fraction", p.fraction)?;
            check_unit("precision", p.precision)?;
            check_unit("recall", p.recall)?;
            if let Some(m) = p.map {
                check_unit("map", m)?;
            }
            if let Some(d) = p.detections {
                if !(d.is_finite() && d >= 0.0) {
                    return Err(Error::Validation(format!("detections {d} must be non-negative")));
                }
            }
        }
        if points.windows(2).any(|w| w[0].fraction >= w[1].fraction) {
            return Err(Error::Validation(
                "quality fractions must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[QualityPoint] {
        &self.points
    }

    /// Same quality at every fraction of `fractions`.
    pub fn constant(fractions: &[f64], precision: f64, recall: f64) -> Result<Self> {
        Self::new(
            fractions
                .iter()
                .map(|&fraction| QualityPoint {
                    fraction,
                    precision,
                    recall,
                    detections: None,
                    map: None,
                })
                .collect(),
        )
    }

    /// Saturating model `p(f) = r(f) = 1 - exp(-f / kappa)`.
    pub fn saturating(kappa: f64, fractions: &[f64]) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::OutOfRange {
                name: "kappa",
                range: "(0, inf)",
                value: kappa,
            });
        }
        Self::new(
            fractions
                .iter()
                .map(|&fraction| {
                    let q = 1.0 - (-fraction / kappa).exp();
                    QualityPoint {
                        fraction,
                        precision: q,
                        recall: q,
                        detections: None,
                        map: None,
                    }
                })
                .collect(),
        )
    }

    /// Quality at `fraction`, linearly interpolated between neighbours.
    pub fn at(&self, fraction: f64) -> Result<QualityPoint> {
        let first = self.points[0];
        let last = *self.points.last().expect("non-empty");
        let tol = 1e-12;
        if fraction < first.fraction - tol || fraction > last.fraction + tol {
            return Err(Error::Extrapolation {
                fraction,
                low: first.fraction,
                high: last.fraction,
            });
        }
        if let Some(p) = self.points.iter().find(|p| (p.fraction - fraction).abs() <= tol) {
            return Ok(QualityPoint { fraction, ..*p });
        }
        let hi = self
            .points
            .iter()
            .position(|p| p.fraction > fraction)
            .expect("inside hull");
        let (a, b) = (self.points[hi - 1], self.points[hi]);
        let t = (fraction - a.fraction) / (b.fraction - a.fraction);
        let lerp = |x: f64, y: f64| x + t * (y - x);
        let both = |x: Option<f64>, y: Option<f64>| Some(lerp(x?, y?));
        Ok(QualityPoint {
            fraction,
            precision: lerp(a.precision, b.precision),
            recall: lerp(a.recall, b.recall),
            detections: both(a.detections, b.detections),
            map: both(a.map, b.map),
        })
    }

    /// Reads a JSON array of `{fraction, precision, recall[, detections][, map]}`.
    pub fn from_json(document: &[u8]) -> Result<Self> {
        let points: Vec<QualityPoint> =
            serde_json::from_slice(document).map_err(|e| Error::json("quality curve", &e))?;
        Self::new(points)
    }

    /// Reads CSV with a header naming `fraction,precision,recall` and
    /// optionally `detections` and `map`.
    pub fn from_csv(document: &[u8]) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(document);
        let points = reader
            .deserialize::<QualityPoint>()
            .enumerate()
            .map(|(n, row)| {
                row.map_err(|e| Error::Parse {
                    location: format!("quality curve row {}", n + 1),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Operations,
    Time,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "operations" => Ok(Objective::Operations),
            "time" => Ok(Objective::Time),
            other => Err(Error::Validation(format!("unknown objective {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadPoint {
    pub fraction: f64,
    pub total_operations: f64,
    pub total_time_s: Option<f64>,
    /// Full breakdown; absent for curves read from published totals.
    pub estimate: Option<WorkloadEstimate>,
}

impl WorkloadPoint {
    pub fn from_estimate(fraction: f64, est: WorkloadEstimate) -> Self {
        Self {
            fraction,
            total_operations: est.total_operations,
            total_time_s: Some(est.total_time_s),
            estimate: Some(est),
        }
    }

    fn objective(&self, objective: Objective) -> Option<f64> {
        match objective {
            Objective::Operations => Some(self.total_operations),
            Objective::Time => self.total_time_s,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadCurve {
    pub points: Vec<WorkloadPoint>,
}

#[derive(Deserialize)]
struct TotalsRow {
    fraction: f64,
    total_operations: f64,
    #[serde(default)]
    total_time_s: Option<f64>,
}

impl WorkloadCurve {
    /// Curve from bare `(fraction, total_operations)` totals.
    pub fn from_totals(rows: &[(f64, f64)]) -> Self {
        let mut points: Vec<WorkloadPoint> = rows
            .iter()
            .map(|&(fraction, total_operations)| WorkloadPoint {
                fraction,
                total_operations,
                total_time_s: None,
                estimate: None,
            })
            .collect();
        points.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
        Self { points }
    }

    /// Reads CSV with columns `fraction,total_operations[,total_time_s]`.
    pub fn from_totals_csv(document: &[u8]) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(document);
        let mut points = Vec::new();
        for (n, row) in reader.deserialize::<TotalsRow>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                location: format!("totals row {}", n + 1),
                message: e.to_string(),
            })?;
            check_half_open_unit("fraction", row.fraction)?;
            points.push(WorkloadPoint {
                fraction: row.fraction,
                total_operations: row.total_operations,
                total_time_s: row.total_time_s,
                estimate: None,
            });
        }
        points.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
        Ok(Self { points })
    }

    /// Rows `fraction,initial,additions,removals,total_operations,total_time_s`.
    /// Columns unknown for a point are left empty.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["fraction", "initial", "additions", "removals", "total_operations", "total_time_s"])
            .expect("in-memory write");
        for p in &self.points {
            let (initial, additions, removals) = match &p.estimate {
                Some(e) => (e.initial.to_string(), e.additions.to_string(), e.removals.to_string()),
                None => Default::default(),
            };
            w.write_record([
                p.fraction.to_string(),
                initial,
                additions,
                removals,
                p.total_operations.to_string(),
                p.total_time_s.map(|t| t.to_string()).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Workload at every scheduled fraction.
pub fn sweep(dataset: &AnnotationSet, quality: &QualityCurve, timing: &TimingModel) -> Result<WorkloadCurve> {
    sweep_fractions(dataset, quality, timing, &schedule())
}

/// Workload at each of `fractions`.
///
/// Fold sizes come from [`split`]; the proposal count is the quality
/// point's measured `detections`, else `objects * recall / precision`
/// (zero when precision is zero).
pub fn sweep_fractions(
    dataset: &AnnotationSet,
    quality: &QualityCurve,
    timing: &TimingModel,
    fractions: &[f64],
) -> Result<WorkloadCurve> {
    timing.validate()?;
    let mut points = fractions
        .par_iter()
        .map(|&f| {
            let sp = split_set(dataset, f)?;
            let count = |ids: &[u64]| ids.iter().map(|&id| dataset.boxes_for(id).len() as u64).sum::<u64>();
            let initial = count(&sp.fold1_image_ids);
            let objects = count(&sp.fold2_image_ids);
            let q = quality.at(f)?;
            let detections = q.detections.unwrap_or(if q.precision > 0.0 {
                objects as f64 * q.recall / q.precision
            } else {
                0.0
            });
            let est = estimate(initial, objects, detections, q.precision, q.recall, timing)?;
            Ok(WorkloadPoint::from_estimate(f, est))
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
    Ok(WorkloadCurve { points })
}

/// Fraction minimizing the objective; ties go to the smaller fraction.
pub fn optimum(curve: &WorkloadCurve, objective: Objective) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for p in &curve.points {
        let v = p.objective(objective).ok_or(Error::Missing {
            op: "time objective",
            needed: "total_time_s on every curve point",
        })?;
        let better = match best {
            None => true,
            Some((bf, bv)) => v < bv || (v == bv && p.fraction < bf),
        };
        if better {
            best = Some((p.fraction, v));
        }
    }
    best.map(|(f, _)| f)
        .ok_or(Error::Missing {
            op: "optimum",
            needed: "a non-empty curve",
        })
}

/// A workload curve together with its optimum, as served to the UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub objective: Objective,
    pub optimum: f64,
    pub curve: WorkloadCurve,
}

impl Plan {
    pub fn new(curve: WorkloadCurve, objective: Objective) -> Result<Self> {
        let optimum = optimum(&curve, objective)?;
        Ok(Self {
            objective,
            optimum,
            curve,
        })
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("plan serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(document: &[u8]) -> Result<Self> {
        serde_json::from_slice(document).map_err(|e| Error::json("plan", &e))
    }
}

/// Display rounding for fractional counts (half up).
pub fn round_half_up(value: f64) -> i64 {
    (value + 0.5).floor() as i64
}
