//! The two-stage annotation workflow as an event-sourced state machine.
//!
//! A campaign moves through
//! `Initialized -> Fold1Annotation -> AwaitingProposals -> Fold2Correction -> Finalized`.
//! Training a detector and predicting fold 2 happen outside: the engine
//! waits in `AwaitingProposals` until proposals are imported from a file.
//! Every human action is an [`OperationEvent`] appended to the campaign log;
//! replaying the log over the state it started from reproduces the current
//! working sets exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{write_coco_ground_truth, AnnotationSet, DetectionSet, ImageRecord, Manifest};
use crate::error::{check_half_open_unit, Error, Result};
use crate::events::{append_jsonl, read_jsonl, Operation, OperationEvent, OperationKind, StageTag};
use crate::geometry::LabeledBox;
use crate::metrics::{match_image, report, MatchConfig, MatchReport};
use crate::split::{split, SplitPoint};
use crate::workload::{estimate, TimingModel, WorkloadEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initialized,
    Fold1Annotation,
    AwaitingProposals,
    Fold2Correction,
    Finalized,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Initialized => "initialized",
            Stage::Fold1Annotation => "fold1_annotation",
            Stage::AwaitingProposals => "awaiting_proposals",
            Stage::Fold2Correction => "fold2_correction",
            Stage::Finalized => "finalized",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageStatus {
    Pending,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source", content = "index")]
pub enum BoxOrigin {
    /// Imported proposal; the index points into the image's detection list.
    Proposal(usize),
    Added,
}

/// One slot of an image's working set. Removed slots stay in place so
/// that slot indices remain stable references.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingBox {
    pub label: LabeledBox,
    pub origin: BoxOrigin,
    pub removed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkingSet {
    slots: Vec<WorkingBox>,
}

impl WorkingSet {
    pub fn from_proposals(proposals: impl IntoIterator<Item = (usize, LabeledBox)>) -> Self {
        Self {
            slots: proposals
                .into_iter()
                .map(|(i, label)| WorkingBox {
                    label,
                    origin: BoxOrigin::Proposal(i),
                    removed: false,
                })
                .collect(),
        }
    }

    pub fn slots(&self) -> &[WorkingBox] {
        &self.slots
    }

    /// Live boxes with their slot index.
    pub fn live(&self) -> impl Iterator<Item = (usize, &LabeledBox)> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.removed)
            .map(|(i, s)| (i, &s.label))
    }

    pub fn live_boxes(&self) -> Vec<LabeledBox> {
        self.live().map(|(_, b)| *b).collect()
    }

    fn add(&mut self, label: LabeledBox) {
        self.slots.push(WorkingBox {
            label,
            origin: BoxOrigin::Added,
            removed: false,
        });
    }

    fn remove(&mut self, image_id: u64, target_ref: usize) -> Result<()> {
        match self.slots.get_mut(target_ref) {
            Some(slot) if !slot.removed => {
                slot.removed = true;
                Ok(())
            }
            _ => Err(Error::StaleReference {
                image_id,
                target_ref,
            }),
        }
    }
}

/// How fold 1 gets its labels.
#[derive(Debug, Clone)]
pub enum Fold1Labels {
    /// A human annotates fold 1 inside the campaign.
    Manual,
    /// Labels already exist; fold-1 images are taken from this set.
    Prelabeled(AnnotationSet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    stage: Stage,
    split: SplitPoint,
    images: Vec<ImageRecord>,
    categories: BTreeMap<u32, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    external_category_ids: BTreeMap<u32, i64>,
    fold_of: BTreeMap<u64, StageTag>,
    fold1_annotations: AnnotationSet,
    fold2_proposals: DetectionSet,
    working: BTreeMap<u64, WorkingSet>,
    image_status: BTreeMap<u64, ImageStatus>,
    matching: MatchConfig,
    #[serde(skip)]
    log: Vec<OperationEvent>,
}

/// Splits the images and opens a campaign.
///
/// With [`Fold1Labels::Manual`] the campaign starts in `Fold1Annotation`;
/// with pre-supplied labels it starts in `AwaitingProposals`.
pub fn init_campaign(
    images: Vec<ImageRecord>,
    categories: BTreeMap<u32, String>,
    fraction: f64,
    fold1: Fold1Labels,
    matching: &MatchConfig,
) -> Result<CampaignState> {
    check_half_open_unit("split fraction", fraction)?;
    matching.validate()?;
    if images.is_empty() {
        return Err(Error::Validation("campaign needs at least one image".into()));
    }
    let probe = AnnotationSet::new(images.clone(), categories.clone());
    probe.validate()?;
    let sp = split(&images, fraction)?;
    let mut fold_of = BTreeMap::new();
    for &id in &sp.fold1_image_ids {
        fold_of.insert(id, StageTag::Fold1);
    }
    for &id in &sp.fold2_image_ids {
        fold_of.insert(id, StageTag::Fold2);
    }

    let mut state = CampaignState {
        stage: Stage::Initialized,
        split: sp,
        images,
        categories,
        external_category_ids: BTreeMap::new(),
        fold_of,
        fold1_annotations: AnnotationSet::default(),
        fold2_proposals: DetectionSet::default(),
        working: BTreeMap::new(),
        image_status: BTreeMap::new(),
        matching: *matching,
        log: Vec::new(),
    };

    match fold1 {
        Fold1Labels::Manual => {
            for &id in &state.split.fold1_image_ids {
                state.working.insert(id, WorkingSet::default());
                state.image_status.insert(id, ImageStatus::Pending);
            }
            state.stage = Stage::Fold1Annotation;
        }
        Fold1Labels::Prelabeled(labels) => {
            if labels.categories != state.categories {
                return Err(Error::Validation(
                    "fold-1 labels use a different category table".into(),
                ));
            }
            let missing: Vec<i64> = state
                .split
                .fold1_image_ids
                .iter()
                .filter(|&&id| labels.image(id).is_none())
                .map(|&id| id as i64)
                .collect();
            if !missing.is_empty() {
                return Err(Error::Referential {
                    what: "fold-1 labels lack images",
                    ids: missing,
                });
            }
            state.external_category_ids = labels.external_category_ids.clone();
            state.fold1_annotations = labels.subset(&state.split.fold1_image_ids);
            state.fold1_annotations.validate()?;
            for &id in &state.split.fold1_image_ids {
                state.image_status.insert(id, ImageStatus::Done);
            }
            state.stage = Stage::AwaitingProposals;
        }
    }
    Ok(state)
}

impl CampaignState {
    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn split(&self) -> &SplitPoint {
        &self.split
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn image(&self, id: u64) -> Option<&ImageRecord> {
        self.images.iter().find(|im| im.id == id)
    }

    pub fn categories(&self) -> &BTreeMap<u32, String> {
        &self.categories
    }

    pub fn fold_of(&self, id: u64) -> Option<StageTag> {
        self.fold_of.get(&id).copied()
    }

    pub fn status(&self, id: u64) -> Option<ImageStatus> {
        self.image_status.get(&id).copied()
    }

    pub fn working(&self) -> &BTreeMap<u64, WorkingSet> {
        &self.working
    }

    pub fn working_set(&self, id: u64) -> Option<&WorkingSet> {
        self.working.get(&id)
    }

    pub fn fold1_annotations(&self) -> &AnnotationSet {
        &self.fold1_annotations
    }

    pub fn fold2_proposals(&self) -> &DetectionSet {
        &self.fold2_proposals
    }

    pub fn matching(&self) -> &MatchConfig {
        &self.matching
    }

    pub fn log(&self) -> &[OperationEvent] {
        &self.log
    }

    /// Fold tag that events must carry in the current stage.
    pub fn active_fold(&self) -> Option<StageTag> {
        match self.stage {
            Stage::Fold1Annotation => Some(StageTag::Fold1),
            Stage::Fold2Correction => Some(StageTag::Fold2),
            _ => None,
        }
    }

    /// Images still pending, ascending.
    pub fn pending_images(&self) -> Vec<u64> {
        self.image_status
            .iter()
            .filter(|(_, s)| **s == ImageStatus::Pending)
            .map(|(&id, _)| id)
            .collect()
    }

    fn wrong_stage(&self, detail: impl Into<String>) -> Error {
        Error::WrongStage {
            stage: self.stage.to_string(),
            detail: detail.into(),
        }
    }

    /// Loads fold-2 proposals. Those scoring at or above
    /// `cfg.score_threshold` become the working boxes of their images.
    pub fn import_proposals(&mut self, det: &DetectionSet, cfg: &MatchConfig) -> Result<()> {
        if self.stage != Stage::AwaitingProposals {
            return Err(self.wrong_stage("proposals can only be imported after fold 1"));
        }
        cfg.validate()?;
        for (&id, boxes) in &det.boxes {
            match self.fold_of(id) {
                None => return Err(Error::UnknownImage(id)),
                Some(StageTag::Fold1) => {
                    return Err(Error::FoldViolation {
                        image_id: id,
                        expected: 2,
                        actual: 1,
                    })
                }
                Some(StageTag::Fold2) => {}
            }
            for b in boxes {
                let s = b.score.ok_or_else(|| Error::Validation(format!("proposal on image {id} has no score")))?;
                crate::error::check_unit("score", s)?;
                if !self.categories.contains_key(&b.category_id) {
                    return Err(Error::Referential {
                        what: "proposals reference unknown category ids",
                        ids: vec![i64::from(b.category_id)],
                    });
                }
            }
        }
        let mut next = self.clone();
        for &id in &next.split.fold2_image_ids {
            let retained = det
                .boxes_for(id)
                .iter()
                .copied()
                .enumerate()
                .filter(|(_, b)| b.score.unwrap_or(0.0) >= cfg.score_threshold);
            next.working.insert(id, WorkingSet::from_proposals(retained));
            next.image_status.insert(id, ImageStatus::Pending);
        }
        next.fold2_proposals = det.clone();
        next.matching = *cfg;
        next.stage = Stage::Fold2Correction;
        *self = next;
        Ok(())
    }

    /// Applies a batch of events atomically: either all of them are applied
    /// and logged, or the state is left untouched.
    pub fn apply_operations(&mut self, events: &[OperationEvent]) -> Result<()> {
        if events.is_empty() {
            return Ok(());
        }
        let mut next = self.clone();
        for e in events {
            next.apply_one(e)?;
        }
        *self = next;
        Ok(())
    }

    fn apply_one(&mut self, e: &OperationEvent) -> Result<()> {
        let Some(fold) = self.active_fold() else {
            return Err(self.wrong_stage("no annotation stage is open"));
        };
        let image_fold = self.fold_of(e.image_id).ok_or(Error::UnknownImage(e.image_id))?;
        if image_fold != fold {
            return Err(Error::FoldViolation {
                image_id: e.image_id,
                expected: fold_number(fold),
                actual: fold_number(image_fold),
            });
        }
        if e.stage_tag != fold {
            return Err(self.wrong_stage(format!("event tagged {:?}", e.stage_tag)));
        }
        if self.status(e.image_id) == Some(ImageStatus::Done) {
            return Err(Error::ImageDone(e.image_id));
        }
        if let Some(prev) = self.log.iter().rev().find(|p| p.session_id == e.session_id) {
            if e.ts_ms < prev.ts_ms {
                return Err(Error::LogIntegrity(format!(
                    "session {:?} timestamp {} precedes {}",
                    e.session_id, e.ts_ms, prev.ts_ms
                )));
            }
        }
        match e.op {
            Operation::Add { bbox, category_id } => {
                if !self.categories.contains_key(&category_id) {
                    return Err(Error::Referential {
                        what: "added box references unknown category id",
                        ids: vec![i64::from(category_id)],
                    });
                }
                let im = self.image(e.image_id).expect("image of known fold");
                if bbox.x() < 0.0
                    || bbox.y() < 0.0
                    || bbox.x_max() > f64::from(im.width)
                    || bbox.y_max() > f64::from(im.height)
                {
                    return Err(Error::Validation(format!(
                        "added box {:?} leaves image {}",
                        <[f64; 4]>::from(bbox),
                        e.image_id
                    )));
                }
                let label = LabeledBox::truth(bbox, category_id)?;
                self.working.entry(e.image_id).or_default().add(label);
            }
            Operation::Remove { target_ref } => {
                self.working
                    .entry(e.image_id)
                    .or_default()
                    .remove(e.image_id, target_ref)?;
            }
            Operation::AcceptAll => {
                self.image_status.insert(e.image_id, ImageStatus::Done);
            }
        }
        self.log.push(e.clone());
        if self.stage == Stage::Fold1Annotation && self.pending_images().is_empty() {
            self.complete_fold1();
        }
        Ok(())
    }

    fn complete_fold1(&mut self) {
        let images: Vec<ImageRecord> = self
            .split
            .fold1_image_ids
            .iter()
            .filter_map(|&id| self.image(id).cloned())
            .collect();
        let mut set = AnnotationSet::new(images, self.categories.clone());
        set.external_category_ids = self.external_category_ids.clone();
        for &id in &self.split.fold1_image_ids {
            let boxes = self
                .working
                .get(&id)
                .map(|w| w.live().map(|(_, b)| b.without_score()).collect())
                .unwrap_or_default();
            set.boxes.insert(id, boxes);
        }
        self.fold1_annotations = set;
        self.stage = Stage::AwaitingProposals;
    }

    /// Current labels of every image: fold-1 annotations (or fold-1 working
    /// sets while they are being drawn) and live fold-2 working boxes.
    pub fn current_annotations(&self) -> AnnotationSet {
        let mut set = AnnotationSet::new(self.images.clone(), self.categories.clone());
        set.external_category_ids = self.external_category_ids.clone();
        for im in &self.images {
            let boxes: Vec<LabeledBox> = match self.fold_of(im.id) {
                Some(StageTag::Fold1) if self.stage > Stage::Fold1Annotation => {
                    self.fold1_annotations.boxes_for(im.id).to_vec()
                }
                _ => self
                    .working
                    .get(&im.id)
                    .map(|w| w.live().map(|(_, b)| b.without_score()).collect())
                    .unwrap_or_default(),
            };
            set.boxes.insert(im.id, boxes);
        }
        set
    }

    /// Merges fold 1 and the corrected fold 2 into the final dataset.
    /// Calling it again after success returns the same set.
    pub fn finalize(&mut self) -> Result<AnnotationSet> {
        if !matches!(self.stage, Stage::Fold2Correction | Stage::Finalized) {
            return Err(self.wrong_stage("fold 2 has not been imported"));
        }
        let pending = self.pending_images();
        if !pending.is_empty() {
            return Err(Error::Incomplete { pending });
        }
        let set = self.current_annotations();
        set.validate()?;
        self.stage = Stage::Finalized;
        Ok(set)
    }

    /// Rebuilds a state by applying `events` on top of `base`.
    pub fn replay(base: &CampaignState, events: &[OperationEvent]) -> Result<CampaignState> {
        let mut state = base.clone();
        state.apply_operations(events)?;
        Ok(state)
    }

    /// Progress and the projected remaining correction time.
    pub fn stats(&self, timing: &TimingModel) -> ProgressReport {
        let count = |fold: StageTag, kind: OperationKind| {
            self.log
                .iter()
                .filter(|e| e.stage_tag == fold && e.kind() == kind)
                .count()
        };
        let fold1_additions = count(StageTag::Fold1, OperationKind::Add);
        let fold1_removals = count(StageTag::Fold1, OperationKind::Remove);
        let additions = count(StageTag::Fold2, OperationKind::Add);
        let removals = count(StageTag::Fold2, OperationKind::Remove);
        let accepts = self.log.iter().filter(|e| e.kind() == OperationKind::AcceptAll).count();

        let status_count = |ids: &[u64], want: ImageStatus| {
            ids.iter().filter(|&&id| self.status(id) == Some(want)).count()
        };
        let fold1 = &self.split.fold1_image_ids;
        let fold2 = &self.split.fold2_image_ids;

        let initial = if self.stage > Stage::Fold1Annotation {
            self.fold1_annotations.instance_count() as u64
        } else {
            fold1
                .iter()
                .filter_map(|id| self.working.get(id))
                .map(|w| w.live().count() as u64)
                .sum()
        };
        let performed = WorkloadEstimate::from_counts(initial, additions as f64, removals as f64, timing);

        ProgressReport {
            stage: self.stage,
            fraction: self.split.fraction,
            fold1_done: status_count(fold1, ImageStatus::Done),
            fold1_pending: status_count(fold1, ImageStatus::Pending),
            fold2_done: status_count(fold2, ImageStatus::Done),
            fold2_pending: status_count(fold2, ImageStatus::Pending),
            fold1_additions,
            fold1_removals,
            additions,
            removals,
            accepts,
            performed,
            projection: self.project(timing),
        }
    }

    fn project(&self, timing: &TimingModel) -> Projection {
        let (mut proposals_done, mut removed_done, mut live_done) = (0usize, 0usize, 0usize);
        let (mut pending_images, mut pending_proposals, mut pending_corrections) = (0usize, 0usize, 0usize);
        let pending_ids: Vec<u64> = if self.stage == Stage::Fold2Correction {
            self.split.fold2_image_ids.clone()
        } else {
            Vec::new()
        };
        for &id in &pending_ids {
            let Some(w) = self.working.get(&id) else { continue };
            let proposals = w.slots.iter().filter(|s| matches!(s.origin, BoxOrigin::Proposal(_)));
            if self.status(id) == Some(ImageStatus::Done) {
                for s in proposals {
                    proposals_done += 1;
                    removed_done += usize::from(s.removed);
                }
                live_done += w.live().count();
            } else {
                pending_images += 1;
                pending_proposals += proposals.count();
                pending_corrections += self
                    .log
                    .iter()
                    .filter(|e| e.image_id == id && e.kind() != OperationKind::AcceptAll)
                    .count();
            }
        }
        let correct = (proposals_done - removed_done) as f64;
        let rates_observed = proposals_done > 0 && live_done > 0;
        let (precision, recall) = if rates_observed {
            (correct / proposals_done as f64, correct / live_done as f64)
        } else {
            (1.0, 1.0)
        };
        let d = pending_proposals as f64;
        let expected_removals = d * (1.0 - precision);
        let expected_additions = if recall > 0.0 {
            d * precision / recall * (1.0 - recall)
        } else {
            0.0
        };
        let expected_corrections =
            (expected_removals + expected_additions - pending_corrections as f64).max(0.0);
        Projection {
            pending_images,
            pending_proposals,
            precision,
            recall,
            rates_observed,
            expected_corrections,
            expected_time_s: timing.t2 * expected_corrections,
        }
    }
}

fn fold_number(tag: StageTag) -> u8 {
    match tag {
        StageTag::Fold1 => 1,
        StageTag::Fold2 => 2,
    }
}

/// Expected remaining fold-2 work, extrapolated from the precision and
/// recall observed on finished images. Without finished images the rates
/// default to 1 and `rates_observed` is false.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub pending_images: usize,
    pub pending_proposals: usize,
    pub precision: f64,
    pub recall: f64,
    pub rates_observed: bool,
    pub expected_corrections: f64,
    pub expected_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressReport {
    pub stage: Stage,
    pub fraction: f64,
    pub fold1_done: usize,
    pub fold1_pending: usize,
    pub fold2_done: usize,
    pub fold2_pending: usize,
    pub fold1_additions: usize,
    pub fold1_removals: usize,
    /// Fold-2 additions so far.
    pub additions: usize,
    /// Fold-2 removals so far.
    pub removals: usize,
    pub accepts: usize,
    /// Work performed so far, priced with the timing model.
    pub performed: WorkloadEstimate,
    pub projection: Projection,
}

// ---------------------------------------------------------------------------
// Simulated annotator

/// Deterministic clock for simulated sessions: fold-1 additions advance it
/// by `t1`, corrections by `t2`, acceptances not at all.
#[derive(Debug, Clone)]
pub struct SimClock {
    pub session_id: String,
    pub now_ms: i64,
    pub timing: TimingModel,
}

impl SimClock {
    pub fn new(session_id: impl Into<String>, start_ms: i64, timing: TimingModel) -> Self {
        Self {
            session_id: session_id.into(),
            now_ms: start_ms,
            timing,
        }
    }

    fn event(&mut self, image_id: u64, stage_tag: StageTag, op: Operation) -> OperationEvent {
        let step = match (stage_tag, op.kind()) {
            (_, OperationKind::AcceptAll) => 0.0,
            (StageTag::Fold1, _) => self.timing.t1,
            (StageTag::Fold2, _) => self.timing.t2,
        };
        self.now_ms += (step * 1000.0).round() as i64;
        OperationEvent {
            ts_ms: self.now_ms,
            session_id: self.session_id.clone(),
            image_id,
            op,
            stage_tag,
        }
    }
}

/// Events a perfect annotator emits to correct `working` towards `gt`.
///
/// Per image (ascending id): the working boxes are matched to the ground
/// truth; every unmatched working box is removed, then every unmatched
/// ground-truth box is added, both in index order. Matched boxes are left
/// alone. Working boxes without a score count as score 1 for the match
/// order; no score filtering is applied. Images absent from `gt` are
/// skipped.
pub fn simulate_annotator(
    gt: &AnnotationSet,
    working: &BTreeMap<u64, WorkingSet>,
    cfg: &MatchConfig,
    clock: &mut SimClock,
) -> Result<Vec<OperationEvent>> {
    let cfg = cfg.unfiltered();
    let mut events = Vec::new();
    for (&id, w) in working {
        if gt.image(id).is_none() {
            continue;
        }
        let live: Vec<(usize, LabeledBox)> = w
            .live()
            .map(|(slot, b)| {
                (
                    slot,
                    LabeledBox {
                        score: Some(b.score.unwrap_or(1.0)),
                        ..*b
                    },
                )
            })
            .collect();
        let det: Vec<LabeledBox> = live.iter().map(|(_, b)| *b).collect();
        let truth = gt.boxes_for(id);
        let m = match_image(truth, &det, &cfg)?;
        let mut fps = m.false_positives.clone();
        fps.sort_unstable();
        for di in fps {
            events.push(clock.event(id, StageTag::Fold2, Operation::Remove { target_ref: live[di].0 }));
        }
        for gi in m.false_negatives {
            let b = truth[gi];
            events.push(clock.event(
                id,
                StageTag::Fold2,
                Operation::Add {
                    bbox: b.bbox,
                    category_id: b.category_id,
                },
            ));
        }
    }
    Ok(events)
}

/// Events of an annotator drawing every ground-truth box of the given
/// fold-1 images from scratch.
pub fn simulate_fold1(gt: &AnnotationSet, image_ids: &[u64], clock: &mut SimClock) -> Vec<OperationEvent> {
    let mut events = Vec::new();
    for &id in image_ids {
        for b in gt.boxes_for(id) {
            events.push(clock.event(
                id,
                StageTag::Fold1,
                Operation::Add {
                    bbox: b.bbox,
                    category_id: b.category_id,
                },
            ));
        }
    }
    events
}

/// One `accept_all` per image.
pub fn accept_events(image_ids: &[u64], stage_tag: StageTag, clock: &mut SimClock) -> Vec<OperationEvent> {
    image_ids
        .iter()
        .map(|&id| clock.event(id, stage_tag, Operation::AcceptAll))
        .collect()
}

/// End-to-end result of [`simulate_campaign`].
#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub state: CampaignState,
    pub final_set: AnnotationSet,
    /// Fold-2 matching of proposals against ground truth.
    pub report: MatchReport,
    /// Workload predicted from `report` precision and recall.
    pub predicted: WorkloadEstimate,
    /// Workload counted from the simulated event log.
    pub simulated: WorkloadEstimate,
}

/// Runs a complete campaign with a simulated annotator.
///
/// Proposals for fold-1 images are dropped before import, as a detector
/// trained on fold 1 is only run on fold 2.
pub fn simulate_campaign(
    gt: &AnnotationSet,
    proposals: &DetectionSet,
    fraction: f64,
    cfg: &MatchConfig,
    timing: &TimingModel,
) -> Result<SimulationOutcome> {
    let mut state = init_campaign(gt.images.clone(), gt.categories.clone(), fraction, Fold1Labels::Manual, cfg)?;
    state.external_category_ids = gt.external_category_ids.clone();
    let mut clock = SimClock::new("simulated", 0, *timing);
    let fold1 = state.split.fold1_image_ids.clone();
    let fold2 = state.split.fold2_image_ids.clone();

    let mut batch = simulate_fold1(gt, &fold1, &mut clock);
    batch.extend(accept_events(&fold1, StageTag::Fold1, &mut clock));
    state.apply_operations(&batch)?;

    let mut fold2_det = DetectionSet::default();
    for &id in &fold2 {
        if let Some(v) = proposals.boxes.get(&id) {
            fold2_det.boxes.insert(id, v.clone());
        }
    }
    state.import_proposals(&fold2_det, cfg)?;

    let gt2 = gt.subset(&fold2);
    let results: Vec<_> = fold2
        .iter()
        .map(|&id| match_image(gt2.boxes_for(id), fold2_det.boxes_for(id), cfg))
        .collect::<Result<_>>()?;
    let rep = report(&results);

    let mut batch = simulate_annotator(&gt2, &state.working, cfg, &mut clock)?;
    batch.extend(accept_events(&fold2, StageTag::Fold2, &mut clock));
    state.apply_operations(&batch)?;
    let final_set = state.finalize()?;

    let initial = gt.subset(&fold1).instance_count() as u64;
    let predicted = estimate(
        initial,
        gt2.instance_count() as u64,
        rep.detections() as f64,
        rep.precision,
        rep.recall,
        timing,
    )?;
    let st = state.stats(timing);
    let simulated = WorkloadEstimate::from_counts(
        st.fold1_additions as u64,
        st.additions as f64,
        st.removals as f64,
        timing,
    );
    Ok(SimulationOutcome {
        state,
        final_set,
        report: rep,
        predicted,
        simulated,
    })
}

// ---------------------------------------------------------------------------
// Persistence

const SNAPSHOT_FILE: &str = "campaign.json";
const LOG_FILE: &str = "events.jsonl";
const WORKING_FILE: &str = "working.coco.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Snapshot {
    manifest: Manifest,
    /// Number of log events already folded into `state`.
    log_len: usize,
    state: CampaignState,
}

/// A campaign directory: snapshot, append-only event log, and the current
/// working sets exported as COCO.
#[derive(Debug, Clone)]
pub struct CampaignStore {
    dir: PathBuf,
}

impl CampaignStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }

    pub fn exists(&self) -> bool {
        self.dir.join(SNAPSHOT_FILE).exists()
    }

    /// Writes a snapshot of `state` covering its whole in-memory log.
    pub fn save(&self, manifest: &Manifest, state: &CampaignState) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let snap = Snapshot {
            manifest: manifest.clone(),
            log_len: state.log.len(),
            state: state.clone(),
        };
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let mut bytes = serde_json::to_vec_pretty(&snap).expect("snapshot serializes");
        bytes.push(b'\n');
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        let working = self.dir.join(WORKING_FILE);
        fs::write(&working, write_coco_ground_truth(&state.current_annotations()))
            .map_err(|e| Error::io(&working, e))
    }

    /// Loads the snapshot and replays log events recorded after it.
    pub fn load(&self) -> Result<(Manifest, CampaignState)> {
        let path = self.dir.join(SNAPSHOT_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let snap: Snapshot = serde_json::from_slice(&bytes).map_err(|e| Error::json("campaign snapshot", &e))?;
        let events = read_jsonl(&self.log_path())?;
        if events.len() < snap.log_len {
            return Err(Error::LogIntegrity(format!(
                "log holds {} events but the snapshot covers {}",
                events.len(),
                snap.log_len
            )));
        }
        let mut state = snap.state;
        state.log = events[..snap.log_len].to_vec();
        state.apply_operations(&events[snap.log_len..])?;
        Ok((snap.manifest, state))
    }

    /// Appends events to the log file.
    pub fn append(&self, events: &[OperationEvent]) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        append_jsonl(&self.log_path(), events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn truth(x: f64, y: f64, c: u32) -> LabeledBox {
        LabeledBox::truth(bb(x, y, 10.0, 10.0), c).unwrap()
    }

    /// Two sequences of five frames, one box per image in category 1 plus a
    /// category-2 box on even ids.
    fn toy() -> AnnotationSet {
        let images: Vec<ImageRecord> = (1..=10)
            .map(|id| {
                let seq = if id <= 5 { "a" } else { "b" };
                ImageRecord::from_file_name(id, format!("{seq}_{id:03}.jpg"), 200, 200)
            })
            .collect();
        let cats = BTreeMap::from([(1, "chair".to_string()), (2, "clock".to_string())]);
        let mut set = AnnotationSet::new(images, cats);
        for id in 1..=10u64 {
            let mut v = vec![truth(10.0, 10.0, 1)];
            if id % 2 == 0 {
                v.push(truth(100.0, 100.0, 2));
            }
            set.boxes.insert(id, v);
        }
        set
    }

    fn manual(set: &AnnotationSet, f: f64) -> CampaignState {
        init_campaign(set.images.clone(), set.categories.clone(), f, Fold1Labels::Manual, &MatchConfig::default()).unwrap()
    }

    fn clock() -> SimClock {
        SimClock::new("t", 0, TimingModel::default())
    }

    fn through_fold1(set: &AnnotationSet, f: f64) -> CampaignState {
        let mut st = manual(set, f);
        let fold1 = st.split().fold1_image_ids.clone();
        let mut c = clock();
        let mut ev = simulate_fold1(set, &fold1, &mut c);
        ev.extend(accept_events(&fold1, StageTag::Fold1, &mut c));
        st.apply_operations(&ev).unwrap();
        st
    }

    fn ev(image_id: u64, ts_ms: i64, tag: StageTag, op: Operation) -> OperationEvent {
        OperationEvent {
            ts_ms,
            session_id: "s".into(),
            image_id,
            op,
            stage_tag: tag,
        }
    }

    #[test]
    fn init_splits_and_opens_fold1() {
        let set = toy();
        let st = manual(&set, 0.05);
        assert_eq!(st.stage(), Stage::Fold1Annotation);
        assert!(st.split().fold1_image_ids.len() >= 2);
        assert_eq!(st.split().fold1_image_ids, vec![1, 6]);
    }

    #[test]
    fn init_with_labels_awaits_proposals() {
        let set = toy();
        let st = init_campaign(
            set.images.clone(),
            set.categories.clone(),
            0.4,
            Fold1Labels::Prelabeled(set.clone()),
            &MatchConfig::default(),
        )
        .unwrap();
        assert_eq!(st.stage(), Stage::AwaitingProposals);
        assert_eq!(st.fold1_annotations().images.len(), 4);
        assert_eq!(st.fold1_annotations().instance_count(), 6);
    }

    #[test]
    fn init_rejects_bad_input() {
        let set = toy();
        let cfg = MatchConfig::default();
        assert!(init_campaign(set.images.clone(), set.categories.clone(), 0.0, Fold1Labels::Manual, &cfg).is_err());
        assert!(init_campaign(vec![], set.categories.clone(), 0.5, Fold1Labels::Manual, &cfg).is_err());
    }

    #[test]
    fn fold1_completion_moves_to_awaiting() {
        let set = toy();
        let st = through_fold1(&set, 0.4);
        assert_eq!(st.stage(), Stage::AwaitingProposals);
        assert_eq!(st.fold1_annotations(), &set.subset(&[1, 2, 6, 7]));
    }

    #[test]
    fn import_empty_and_below_threshold() {
        let set = toy();
        let mut st = through_fold1(&set, 0.4);
        let mut low = st.clone();
        st.import_proposals(&DetectionSet::default(), &MatchConfig::default()).unwrap();
        assert_eq!(st.stage(), Stage::Fold2Correction);
        for &id in &st.split().fold2_image_ids {
            assert_eq!(st.working_set(id).unwrap().live().count(), 0);
            assert_eq!(st.status(id), Some(ImageStatus::Pending));
        }
        let weak = DetectionSet {
            boxes: BTreeMap::from([(3, vec![LabeledBox::detection(bb(0.0, 0.0, 5.0, 5.0), 1, 0.2).unwrap()])]),
        };
        low.import_proposals(&weak, &MatchConfig::default()).unwrap();
        assert_eq!(low.working(), st.working());
    }

    #[test]
    fn import_filters_mixed_scores() {
        let set = toy();
        let mut st = through_fold1(&set, 0.4);
        let d = |s| LabeledBox::detection(bb(0.0, 0.0, 5.0, 5.0), 1, s).unwrap();
        let det = DetectionSet {
            boxes: BTreeMap::from([(3, vec![d(0.9), d(0.49), d(0.5), d(0.1)]), (8, vec![d(0.51)])]),
        };
        st.import_proposals(&det, &MatchConfig::default()).unwrap();
        let kept: Vec<_> = st.working_set(3).unwrap().slots().iter().map(|s| (s.origin, s.label.score)).collect();
        assert_eq!(
            kept,
            vec![(BoxOrigin::Proposal(0), Some(0.9)), (BoxOrigin::Proposal(2), Some(0.5))]
        );
        assert_eq!(st.working_set(8).unwrap().live().count(), 1);
    }

    #[test]
    fn import_rejects_fold1_images_and_wrong_stage() {
        let set = toy();
        let mut st = through_fold1(&set, 0.4);
        let det = DetectionSet {
            boxes: BTreeMap::from([(1, vec![LabeledBox::detection(bb(0.0, 0.0, 5.0, 5.0), 1, 0.9).unwrap()])]),
        };
        assert!(matches!(st.import_proposals(&det, &MatchConfig::default()), Err(Error::FoldViolation { .. })));
        let mut fresh = manual(&set, 0.4);
        assert!(matches!(
            fresh.import_proposals(&DetectionSet::default(), &MatchConfig::default()),
            Err(Error::WrongStage { .. })
        ));
    }

    #[test]
    fn simulated_annotator_cases() {
        let cats = BTreeMap::from([(1, "x".to_string())]);
        let mut gt = AnnotationSet::new(vec![ImageRecord::from_file_name(1, "a_1.jpg", 100, 100)], cats);
        gt.boxes.insert(1, vec![truth(0.0, 0.0, 1)]);
        let cfg = MatchConfig::default();

        let same = BTreeMap::from([(1, WorkingSet::from_proposals([(0, LabeledBox { score: Some(0.9), ..truth(0.0, 0.0, 1) })]))]);
        assert!(simulate_annotator(&gt, &same, &cfg, &mut clock()).unwrap().is_empty());

        let none = BTreeMap::from([(1, WorkingSet::default())]);
        let evs = simulate_annotator(&gt, &none, &cfg, &mut clock()).unwrap();
        assert_eq!(evs.len(), 1);
        assert_eq!(evs[0].kind(), OperationKind::Add);

        // (0,0,10,10) vs (0,0,10,4): IoU 0.4
        let off = LabeledBox::detection(bb(0.0, 0.0, 10.0, 4.0), 1, 0.9).unwrap();
        let mis = BTreeMap::from([(1, WorkingSet::from_proposals([(0, off)]))]);
        let evs = simulate_annotator(&gt, &mis, &cfg, &mut clock()).unwrap();
        let kinds: Vec<_> = evs.iter().map(|e| e.kind()).collect();
        assert_eq!(kinds, vec![OperationKind::Remove, OperationKind::Add]);
        assert_eq!(evs[0].op, Operation::Remove { target_ref: 0 });
    }

    #[test]
    fn apply_rules() {
        let set = toy();
        let mut st = through_fold1(&set, 0.4);
        st.import_proposals(&DetectionSet::from_truth(&set.subset(&[3, 4, 5, 8, 9, 10])), &MatchConfig::default())
            .unwrap();
        let before = st.clone();
        st.apply_operations(&[]).unwrap();
        assert_eq!(st, before);

        let add = Operation::Add { bbox: bb(50.0, 50.0, 5.0, 5.0), category_id: 1 };
        st.apply_operations(&[
            ev(3, 10, StageTag::Fold2, add),
            ev(3, 20, StageTag::Fold2, Operation::Remove { target_ref: 1 }),
        ])
        .unwrap();
        assert_eq!(st.working_set(3).unwrap().live_boxes(), before.working_set(3).unwrap().live_boxes());
        assert_eq!(st.log().len(), before.log().len() + 2);

        let stale = st.apply_operations(&[ev(3, 30, StageTag::Fold2, Operation::Remove { target_ref: 1 })]);
        assert!(matches!(stale, Err(Error::StaleReference { image_id: 3, target_ref: 1 })));
        let unknown = st.apply_operations(&[ev(3, 30, StageTag::Fold2, Operation::Remove { target_ref: 9 })]);
        assert!(matches!(unknown, Err(Error::StaleReference { .. })));

        st.apply_operations(&[ev(3, 40, StageTag::Fold2, Operation::AcceptAll)]).unwrap();
        let done = st.apply_operations(&[ev(3, 50, StageTag::Fold2, add)]);
        assert!(matches!(done, Err(Error::ImageDone(3))));

        let fold1 = st.apply_operations(&[ev(1, 50, StageTag::Fold2, add)]);
        assert!(matches!(fold1, Err(Error::FoldViolation { .. })));
        let back = st.apply_operations(&[ev(4, 5, StageTag::Fold2, add)]);
        assert!(matches!(back, Err(Error::LogIntegrity(_))));
        let outside = Operation::Add { bbox: bb(195.0, 0.0, 10.0, 10.0), category_id: 1 };
        assert!(st.apply_operations(&[ev(4, 60, StageTag::Fold2, outside)]).is_err());
    }

    #[test]
    fn failed_batch_leaves_state_untouched() {
        let set = toy();
        let mut st = through_fold1(&set, 0.4);
        st.import_proposals(&DetectionSet::default(), &MatchConfig::default()).unwrap();
        let before = st.clone();
        let add = Operation::Add { bbox: bb(50.0, 50.0, 5.0, 5.0), category_id: 1 };
        let r = st.apply_operations(&[
            ev(3, 10, StageTag::Fold2, add),
            ev(3, 20, StageTag::Fold2, Operation::Remove { target_ref: 7 }),
        ]);
        assert!(r.is_err());
        assert_eq!(st, before);
        assert_eq!(st.log(), before.log());
    }

    #[test]
    fn stage_order_is_enforced() {
        let set = toy();
        let mut st = through_fold1(&set, 0.4);
        st.import_proposals(&DetectionSet::default(), &MatchConfig::default()).unwrap();
        let before = st.clone();
        assert!(st.import_proposals(&DetectionSet::default(), &MatchConfig::default()).is_err());
        let r = st.apply_operations(&[ev(1, 10, StageTag::Fold1, Operation::AcceptAll)]);
        assert!(r.is_err());
        assert_eq!(st, before);
    }

    #[test]
    fn finalize_rules() {
        let set = toy();
        let mut st = through_fold1(&set, 0.4);
        assert!(matches!(st.finalize(), Err(Error::WrongStage { .. })));
        st.import_proposals(&DetectionSet::default(), &MatchConfig::default()).unwrap();
        match st.finalize() {
            Err(Error::Incomplete { pending }) => assert_eq!(pending, vec![3, 4, 5, 8, 9, 10]),
            other => panic!("unexpected {other:?}"),
        }
        let fold2 = st.split().fold2_image_ids.clone();
        let mut c = SimClock::new("t", 1_000_000, TimingModel::default());
        let mut batch = simulate_annotator(&set.subset(&fold2), st.working(), &MatchConfig::default(), &mut c).unwrap();
        batch.extend(accept_events(&fold2, StageTag::Fold2, &mut c));
        st.apply_operations(&batch).unwrap();
        let out = st.finalize().unwrap();
        assert_eq!(st.stage(), Stage::Finalized);
        assert_eq!(out, set);
        assert_eq!(st.finalize().unwrap(), out);
    }

    #[test]
    fn all_manual_campaign() {
        let set = toy();
        let mut st = through_fold1(&set, 1.0);
        st.import_proposals(&DetectionSet::default(), &MatchConfig::default()).unwrap();
        let out = st.finalize().unwrap();
        assert_eq!(&out, st.fold1_annotations());
        assert_eq!(out, set);
    }

    #[test]
    fn end_to_end_category_counts() {
        let set = toy();
        let mut det = DetectionSet::from_truth(&set);
        // shift one proposal off target, drop another, add a spurious one
        det.boxes.get_mut(&3).unwrap()[0].bbox = bb(14.0, 10.0, 10.0, 10.0);
        det.boxes.get_mut(&4).unwrap().pop();
        det.boxes
            .get_mut(&5)
            .unwrap()
            .push(LabeledBox::detection(bb(150.0, 150.0, 10.0, 10.0), 2, 0.8).unwrap());
        let out = simulate_campaign(&set, &det, 0.4, &MatchConfig::default(), &TimingModel::default()).unwrap();
        assert_eq!(crate::dataset::summarize(&out.final_set), crate::dataset::summarize(&set));
        // (14,10) vs (10,10): IoU 60/140 < 0.5 -> remove + add;
        // dropped -> add; spurious -> remove
        assert_eq!(out.simulated.additions, 2.0);
        assert_eq!(out.simulated.removals, 2.0);
        assert!((out.predicted.additions - 2.0).abs() < 1e-9);
        assert!((out.predicted.removals - 2.0).abs() < 1e-9);
    }

    #[test]
    fn stats_counts_and_projection() {
        let set = toy();
        let fresh = manual(&set, 0.4);
        let s = fresh.stats(&TimingModel::default());
        assert_eq!((s.fold1_additions, s.additions, s.removals, s.accepts), (0, 0, 0, 0));
        assert_eq!(s.fold1_pending, 4);
        assert_eq!(s.projection.expected_corrections, 0.0);
        assert!(!s.projection.rates_observed);

        let mut st = manual(&set, 0.4);
        let k = 3;
        let evs: Vec<_> = (0..k)
            .map(|i| ev(1, i, StageTag::Fold1, Operation::Add { bbox: bb(0.0, 0.0, 5.0, 5.0), category_id: 1 }))
            .collect();
        st.apply_operations(&evs).unwrap();
        assert_eq!(st.stats(&TimingModel::default()).fold1_additions, 3);
    }

    #[test]
    fn projection_from_running_rates() {
        // fold 2 = images 3,4,5,8,9,10; every image gets 4 proposals.
        let set = toy();
        let mut st = through_fold1(&set, 0.4);
        let d = |x| LabeledBox::detection(bb(x, 0.0, 5.0, 5.0), 1, 0.9).unwrap();
        let det = DetectionSet {
            boxes: [3, 4, 5, 8, 9, 10]
                .into_iter()
                .map(|id| (id, vec![d(0.0), d(20.0), d(40.0), d(60.0)]))
                .collect(),
        };
        st.import_proposals(&det, &MatchConfig::default()).unwrap();
        // Images 3,4,5: one removal and two additions each, then accepted.
        let mut ts = 0;
        let mut batch = Vec::new();
        for id in [3u64, 4, 5] {
            let mut push = |op| {
                ts += 1;
                batch.push(ev(id, ts, StageTag::Fold2, op));
            };
            push(Operation::Remove { target_ref: 0 });
            push(Operation::Add { bbox: bb(100.0, 100.0, 5.0, 5.0), category_id: 1 });
            push(Operation::Add { bbox: bb(120.0, 100.0, 5.0, 5.0), category_id: 1 });
            push(Operation::AcceptAll);
        }
        st.apply_operations(&batch).unwrap();
        let s = st.stats(&TimingModel::default());
        // done: 12 proposals, 3 removed -> 9 correct; 15 final boxes.
        // precision 3/4, recall 3/5; 12 pending proposals
        // removals 12 * 1/4 = 3; objects 12 * (3/4) / (3/5) = 15; additions 15 * 2/5 = 6
        let p = s.projection;
        assert!(p.rates_observed);
        assert!((p.precision - 0.75).abs() < 1e-12);
        assert!((p.recall - 0.6).abs() < 1e-12);
        assert_eq!(p.pending_images, 3);
        assert_eq!(p.pending_proposals, 12);
        assert!((p.expected_corrections - 9.0).abs() < 1e-9);
        assert!((p.expected_time_s - 9.0 * 5.20).abs() < 1e-9);
        assert_eq!((s.additions, s.removals, s.fold2_done, s.fold2_pending), (6, 3, 3, 3));
    }

    #[test]
    fn store_round_trip_replays_log() {
        let set = toy();
        let dir = tempfile::tempdir().unwrap();
        let store = CampaignStore::new(dir.path());
        let mut st = through_fold1(&set, 0.4);
        st.import_proposals(&DetectionSet::from_truth(&set.subset(&[3, 4])), &MatchConfig::default())
            .unwrap();
        let manifest = Manifest::default();
        store.append(st.log()).unwrap();
        store.save(&manifest, &st).unwrap();

        let batch = vec![
            ev(3, 10_000_000, StageTag::Fold2, Operation::Remove { target_ref: 0 }),
            ev(3, 10_000_100, StageTag::Fold2, Operation::AcceptAll),
        ];
        st.apply_operations(&batch).unwrap();
        store.append(&batch).unwrap();

        let (m, loaded) = store.load().unwrap();
        assert_eq!(m, manifest);
        assert_eq!(loaded, st);
        assert_eq!(loaded.log(), st.log());
        assert!(dir.path().join(WORKING_FILE).exists());
    }
}
