//! Manual-operation counts and the wall-clock time model of a two-stage
//! campaign.
//!
//! Fold 1 costs one from-scratch annotation per object. Fold 2 costs one
//! addition per missed object and one removal per false proposal; a
//! mislocated box therefore costs two operations. Expected counts derived
//! from aggregate rates are kept fractional.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::events::{OperationEvent, OperationKind, StageTag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingModel {
    /// Seconds per box annotated from scratch.
    pub t1: f64,
    /// Seconds per correction (one addition or one removal).
    pub t2: f64,
    /// Gaps longer than this are treated as idle time when fitting.
    pub idle_cutoff: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        Self {
            t1: 10.15,
            t2: 5.20,
            idle_cutoff: 60.0,
        }
    }
}

impl TimingModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t1", self.t1), ("t2", self.t2), ("idle_cutoff", self.idle_cutoff)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::OutOfRange {
                    name,
                    range: "(0, inf)",
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Time to annotate `objects` boxes entirely by hand.
    pub fn manual_time(&self, objects: u64) -> f64 {
        objects as f64 * self.t1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadEstimate {
    /// Boxes annotated from scratch in fold 1.
    pub initial: u64,
    pub additions: f64,
    pub removals: f64,
    /// `additions + removals`.
    pub corrections: f64,
    pub total_operations: f64,
    pub total_time_s: f64,
    pub t1: f64,
    pub t2: f64,
}

impl WorkloadEstimate {
    /// Builds an estimate from operation counts.
    pub fn from_counts(initial: u64, additions: f64, removals: f64, timing: &TimingModel) -> Self {
        let corrections = additions + removals;
        Self {
            initial,
            additions,
            removals,
            corrections,
            total_operations: initial as f64 + additions + removals,
            total_time_s: timing.t1 * initial as f64 + timing.t2 * corrections,
            t1: timing.t1,
            t2: timing.t2,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let v = serde_json::json!({
            "initial": self.initial,
            "additions": self.additions,
            "removals": self.removals,
            "total_operations": self.total_operations,
            "total_time_s": self.total_time_s,
            "timing": { "t1": self.t1, "t2": self.t2 },
        });
        let mut out = serde_json::to_vec_pretty(&v).expect("estimate serializes");
        out.push(b'\n');
        out
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["initial", "additions", "removals", "total_operations", "total_time_s", "t1", "t2"])
            .expect("in-memory write");
        w.write_record([
            self.initial.to_string(),
            self.additions.to_string(),
            self.removals.to_string(),
            self.total_operations.to_string(),
            self.total_time_s.to_string(),
            self.t1.to_string(),
            self.t2.to_string(),
        ])
        .expect("in-memory write");
        w.into_inner().expect("in-memory flush")
    }
}

/// Expected additions: objects the detector misses.
pub fn estimate_additions(fold2_objects: u64, recall: f64) -> Result<f64> {
    check_unit("recall", recall)?;
    Ok(fold2_objects as f64 * (1.0 - recall))
}

/// Expected removals: proposals that match no object.
pub fn estimate_removals(fold2_detections: f64, precision: f64) -> Result<f64> {
    check_unit("precision", precision)?;
    if !(fold2_detections.is_finite() && fold2_detections >= 0.0) {
        return Err(Error::OutOfRange {
            name: "detections",
            range: "[0, inf)",
            value: fold2_detections,
        });
    }
    Ok(fold2_detections * (1.0 - precision))
}

pub fn estimate(
    initial: u64,
    fold2_objects: u64,
    fold2_detections: f64,
    precision: f64,
    recall: f64,
    timing: &TimingModel,
) -> Result<WorkloadEstimate> {
    timing.validate()?;
    let additions = estimate_additions(fold2_objects, recall)?;
    let removals = estimate_removals(fold2_detections, precision)?;
    Ok(WorkloadEstimate::from_counts(initial, additions, removals, timing))
}

/// Fraction of the fully manual annotation time saved by `est`.
/// Negative when the estimate is slower than annotating everything by hand.
pub fn savings_vs_manual(est: &WorkloadEstimate, total_objects: u64, timing: &TimingModel) -> Result<f64> {
    if total_objects == 0 {
        return Err(Error::Validation("savings need at least one object".into()));
    }
    timing.validate()?;
    Ok(1.0 - est.total_time_s / timing.manual_time(total_objects))
}

/// Timing constants fitted from a log, with flags telling which constants
/// fell back to the base model for lack of data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingFit {
    pub model: TimingModel,
    pub t1_samples: usize,
    pub t2_samples: usize,
    pub t1_from_data: bool,
    pub t2_from_data: bool,
}

impl TimingFit {
    pub fn insufficient_data(&self) -> bool {
        !(self.t1_from_data && self.t2_from_data)
    }
}

/// Fits `t1` and `t2` from an operation log.
///
/// Each event's duration is the gap since the previous event of the same
/// session. Fold-1 additions feed `t1`; fold-2 additions and removals feed
/// `t2`. Gaps above `base.idle_cutoff` are dropped. Constants without any
/// sample keep their value from `base`.
pub fn fit_timing(events: &[OperationEvent], base: &TimingModel) -> Result<TimingFit> {
    base.validate()?;
    let mut last: BTreeMap<&str, i64> = BTreeMap::new();
    let mut fold1 = Vec::new();
    let mut fold2 = Vec::new();
    for (n, e) in events.iter().enumerate() {
        let prev = last.insert(e.session_id.as_str(), e.ts_ms);
        let Some(prev) = prev else { continue };
        if e.ts_ms < prev {
            return Err(Error::LogIntegrity(format!(
                "event {n} of session {:?} goes back in time ({} < {prev})",
                e.session_id, e.ts_ms
            )));
        }
        let gap = (e.ts_ms - prev) as f64 / 1000.0;
        if gap > base.idle_cutoff {
            continue;
        }
        match (e.stage_tag, e.kind()) {
            (StageTag::Fold1, OperationKind::Add) => fold1.push(gap),
            (StageTag::Fold2, OperationKind::Add | OperationKind::Remove) => fold2.push(gap),
            _ => {}
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut model = *base;
    if !fold1.is_empty() {
        model.t1 = mean(&fold1);
    }
    if !fold2.is_empty() {
        model.t2 = mean(&fold2);
    }
    Ok(TimingFit {
        model,
        t1_samples: fold1.len(),
        t2_samples: fold2.len(),
        t1_from_data: !fold1.is_empty(),
        t2_from_data: !fold2.is_empty(),
    })
}
