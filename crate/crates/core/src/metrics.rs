//! Greedy IoU matching, precision / recall, and average precision at a
//! single IoU threshold.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationSet, DetectionSet};
use crate::error::{check_half_open_unit, check_unit, Error, Result};
use crate::geometry::LabeledBox;

/// Number of recall levels `0, 0.01, ..., 1.00` sampled by [`average_precision`].
pub const RECALL_LEVELS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub iou_threshold: f64,
    /// Detections scoring below this are ignored by [`match_image`].
    pub score_threshold: f64,
    /// When set, a detection may only match ground truth of its own category.
    pub class_aware: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            score_threshold: 0.5,
            class_aware: true,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        check_half_open_unit("iou threshold", self.iou_threshold)?;
        check_unit("score threshold", self.score_threshold)
    }

    /// Same config with score filtering disabled.
    pub fn unfiltered(&self) -> MatchConfig {
        MatchConfig {
            score_threshold: 0.0,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    /// Index into the ground-truth slice.
    pub gt: usize,
    /// Index into the detection slice.
    pub det: usize,
    pub iou: f64,
}

/// Outcome of matching one image. All refs index the input slices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matched_pairs: Vec<MatchedPair>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.matched_pairs.len()
    }

    /// Whether detection `det` ended up matched.
    pub fn is_matched_detection(&self, det: usize) -> bool {
        self.matched_pairs.iter().any(|p| p.det == det)
    }
}

/// Matches detections to ground truth on one image.
///
/// Detections at or above `cfg.score_threshold` are visited by descending
/// score (ties keep input order). Each claims the unmatched ground-truth
/// box with the highest IoU at or above the threshold, the lowest index
/// winning ties. Unclaimed detections are false positives, unclaimed
/// ground truth false negatives. Filtered-out detections appear nowhere.
pub fn match_image(gt: &[LabeledBox], det: &[LabeledBox], cfg: &MatchConfig) -> Result<MatchResult> {
    cfg.validate()?;
    if gt.iter().any(|g| g.score.is_some()) {
        return Err(Error::InputRole);
    }
    let mut order = Vec::with_capacity(det.len());
    for (i, d) in det.iter().enumerate() {
        let score = d
            .score
            .ok_or_else(|| Error::Validation(format!("detection {i} has no score")))?;
        if score >= cfg.score_threshold {
            order.push((i, score));
        }
    }
    order.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut taken = vec![false; gt.len()];
    let mut result = MatchResult::default();
    for (di, _) in order {
        let d = &det[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gt.iter().enumerate() {
            if taken[gi] || (cfg.class_aware && g.category_id != d.category_id) {
                continue;
            }
            let iou = g.bbox.iou(&d.bbox);
            if iou >= cfg.iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, iou)) => {
                taken[gi] = true;
                result.matched_pairs.push(MatchedPair { gt: gi, det: di, iou });
            }
            None => result.false_positives.push(di),
        }
    }
    result.false_negatives = taken
        .iter()
        .enumerate()
        .filter(|(_, &t)| !t)
        .map(|(i, _)| i)
        .collect();
    Ok(result)
}

/// Matches every image of `gt` against `det`. Results are in image-id order.
pub fn match_sets(
    gt: &AnnotationSet,
    det: &DetectionSet,
    cfg: &MatchConfig,
) -> Result<Vec<(u64, MatchResult)>> {
    check_detection_images(gt, det)?;
    gt.boxes
        .par_iter()
        .map(|(&id, g)| Ok((id, match_image(g, det.boxes_for(id), cfg)?)))
        .collect()
}

fn check_detection_images(gt: &AnnotationSet, det: &DetectionSet) -> Result<()> {
    let unknown: Vec<i64> = det
        .boxes
        .keys()
        .filter(|id| !gt.boxes.contains_key(id))
        .map(|&id| id as i64)
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(Error::Referential {
            what: "detections reference unknown image ids",
            ids: unknown,
        })
    }
}

/// Aggregate counts with the precision / recall ratios.
///
/// A ratio with a zero denominator is reported as 0 and its `*_defined`
/// flag is cleared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
}

impl MatchReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                (0.0, false)
            } else {
                (num as f64 / den as f64, true)
            }
        };
        let (precision, precision_defined) = ratio(tp, tp + fp);
        let (recall, recall_defined) = ratio(tp, tp + fn_);
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            precision_defined,
            recall_defined,
        }
    }

    /// Number of detections that were considered.
    pub fn detections(&self) -> usize {
        self.tp + self.fp
    }

    /// Number of ground-truth objects that were considered.
    pub fn objects(&self) -> usize {
        self.tp + self.fn_
    }
}

pub fn report<'a>(results: impl IntoIterator<Item = &'a MatchResult>) -> MatchReport {
    let (tp, fp, fn_) = results.into_iter().fold((0, 0, 0), |(tp, fp, fn_), r| {
        (
            tp + r.matched_pairs.len(),
            fp + r.false_positives.len(),
            fn_ + r.false_negatives.len(),
        )
    });
    MatchReport::from_counts(tp, fp, fn_)
}

/// Average precision of one category at `cfg.iou_threshold`.
///
/// Detections are matched per image, pooled, and swept by descending score;
/// tied scores enter the curve together, so every curve point corresponds
/// to a score threshold. The result is the mean over the 101 recall levels
/// of the highest precision reached at or beyond each level (0 where the
/// level is never reached). Returns `None` when the category has no ground
/// truth. The score threshold of `cfg` is not applied.
pub fn average_precision(
    gt: &BTreeMap<u64, Vec<LabeledBox>>,
    det: &BTreeMap<u64, Vec<LabeledBox>>,
    category_id: u32,
    cfg: &MatchConfig,
) -> Result<Option<f64>> {
    let cfg = MatchConfig {
        class_aware: true,
        ..cfg.unfiltered()
    };
    let of_category = |v: &[LabeledBox]| -> Vec<LabeledBox> {
        v.iter()
            .filter(|b| b.category_id == category_id)
            .copied()
            .collect()
    };

    let mut total_gt = 0usize;
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for (id, g) in gt {
        let g = of_category(g);
        total_gt += g.len();
        let d = of_category(det.get(id).map_or(&[], Vec::as_slice));
        if d.is_empty() {
            continue;
        }
        let m = match_image(&g, &d, &cfg)?;
        for (i, b) in d.iter().enumerate() {
            scored.push((b.score.unwrap_or(0.0), m.is_matched_detection(i)));
        }
    }
    if total_gt == 0 {
        return Ok(None);
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    // (recall, precision) after each group of equal scores
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let s = scored[i].0;
        while i < scored.len() && scored[i].0 == s {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push((tp as f64 / total_gt as f64, tp as f64 / (tp + fp) as f64));
    }

    // Precision envelope from the right: best precision at recall >= r.
    let mut envelope = vec![0.0f64; curve.len()];
    let mut best = 0.0f64;
    for (k, &(_, p)) in curve.iter().enumerate().rev() {
        best = best.max(p);
        envelope[k] = best;
    }
    let mut sum = 0.0;
    let mut cursor = 0;
    for level in 0..RECALL_LEVELS {
        let r = level as f64 / (RECALL_LEVELS - 1) as f64;
        while cursor < curve.len() && curve[cursor].0 < r {
            cursor += 1;
        }
        if cursor < curve.len() {
            sum += envelope[cursor];
        }
    }
    Ok(Some(sum / RECALL_LEVELS as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_category_ap: BTreeMap<u32, f64>,
    /// Mean of `per_category_ap`; 0 when no category has ground truth.
    #[serde(rename = "map")]
    pub map_value: f64,
    /// Categories without ground-truth instances, left out of the mean.
    pub excluded_categories: Vec<u32>,
    pub config: MatchConfig,
}

impl EvalReport {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["category", "ap"]).expect("in-memory write");
        for (c, ap) in &self.per_category_ap {
            w.write_record([c.to_string(), ap.to_string()])
                .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Per-category AP and their mean over categories with ground truth.
///
/// Matching is always class-aware here; `cfg.class_aware` only affects
/// [`match_image`].
pub fn evaluate(gt: &AnnotationSet, det: &DetectionSet, cfg: &MatchConfig) -> Result<EvalReport> {
    cfg.validate()?;
    check_detection_images(gt, det)?;
    let per: Vec<(u32, Option<f64>)> = gt
        .categories
        .keys()
        .copied()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|c| Ok((c, average_precision(&gt.boxes, &det.boxes, c, cfg)?)))
        .collect::<Result<_>>()?;
    let mut per_category_ap = BTreeMap::new();
    let mut excluded_categories = Vec::new();
    for (c, ap) in per {
        match ap {
            Some(v) => {
                per_category_ap.insert(c, v);
            }
            None => excluded_categories.push(c),
        }
    }
    let map_value = if per_category_ap.is_empty() {
        0.0
    } else {
        per_category_ap.values().sum::<f64>() / per_category_ap.len() as f64
    };
    Ok(EvalReport {
        per_category_ap,
        map_value,
        excluded_categories,
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use proptest::prelude::*;

    fn gtb(x: f64, y: f64, w: f64, h: f64, c: u32) -> LabeledBox {
        LabeledBox::truth(BoundingBox::new(x, y, w, h).unwrap(), c).unwrap()
    }

    fn detb(x: f64, y: f64, w: f64, h: f64, c: u32, s: f64) -> LabeledBox {
        LabeledBox::detection(BoundingBox::new(x, y, w, h).unwrap(), c, s).unwrap()
    }

    /// Independent greedy reference: repeatedly selects the best remaining
    /// detection by linear scan instead of sorting.
    fn greedy_reference(gt: &[LabeledBox], det: &[LabeledBox], cfg: &MatchConfig) -> MatchResult {
        let mut pending: Vec<usize> = (0..det.len())
            .filter(|&i| det[i].score.unwrap() >= cfg.score_threshold)
            .collect();
        let mut free: Vec<bool> = vec![true; gt.len()];
        let mut out = MatchResult::default();
        while !pending.is_empty() {
            let mut pick = 0;
            for k in 1..pending.len() {
                if det[pending[k]].score.unwrap() > det[pending[pick]].score.unwrap() {
                    pick = k;
                }
            }
            let di = pending.remove(pick);
            let cands: Vec<(usize, f64)> = (0..gt.len())
                .filter(|&g| free[g] && (!cfg.class_aware || gt[g].category_id == det[di].category_id))
                .map(|g| (g, gt[g].bbox.iou(&det[di].bbox)))
                .filter(|&(_, iou)| iou >= cfg.iou_threshold)
                .collect();
            let top = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
            match cands.iter().find(|c| c.1 == top) {
                Some(&(g, iou)) => {
                    free[g] = false;
                    out.matched_pairs.push(MatchedPair { gt: g, det: di, iou });
                }
                None => out.false_positives.push(di),
            }
        }
        out.false_negatives = (0..gt.len()).filter(|&g| free[g]).collect();
        out
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn identical_boxes_all_match() {
        let gt = vec![gtb(0.0, 0.0, 10.0, 10.0, 1), gtb(50.0, 50.0, 10.0, 10.0, 2)];
        let det: Vec<_> = gt.iter().map(|g| LabeledBox { score: Some(1.0), ..*g }).collect();
        let r = match_image(&gt, &det, &MatchConfig::default()).unwrap();
        assert_eq!(r.tp(), 2);
        assert!(r.false_positives.is_empty() && r.false_negatives.is_empty());
    }

    #[test]
    fn empty_detections_leave_false_negatives() {
        let gt = vec![gtb(0.0, 0.0, 1.0, 1.0, 1); 3];
        let r = match_image(&gt, &[], &MatchConfig::default()).unwrap();
        assert_eq!(r.false_negatives, vec![0, 1, 2]);
    }

    #[test]
    fn scores_on_truth_rejected() {
        let g = detb(0.0, 0.0, 1.0, 1.0, 1, 0.5);
        assert!(matches!(
            match_image(&[g], &[], &MatchConfig::default()),
            Err(Error::InputRole)
        ));
    }

    #[test]
    fn crafted_overlaps_match_reference_over_all_score_orderings() {
        let gt = vec![gtb(0.0, 0.0, 10.0, 10.0, 1), gtb(6.0, 0.0, 10.0, 10.0, 1)];
        let boxes = [
            BoundingBox::new(3.0, 0.0, 10.0, 10.0).unwrap(),
            BoundingBox::new(1.0, 0.0, 10.0, 10.0).unwrap(),
            BoundingBox::new(6.0, 1.0, 10.0, 10.0).unwrap(),
        ];
        let scores = [0.9, 0.7, 0.6];
        let cfg = MatchConfig::default().unfiltered();
        for perm in permutations(3) {
            let det: Vec<_> = perm
                .iter()
                .enumerate()
                .map(|(i, &p)| LabeledBox::detection(boxes[i], 1, scores[p]).unwrap())
                .collect();
            assert_eq!(match_image(&gt, &det, &cfg).unwrap(), greedy_reference(&gt, &det, &cfg));
        }
    }

    #[test]
    fn wrong_category_is_false_positive_when_class_aware() {
        let gt = vec![gtb(0.0, 0.0, 10.0, 10.0, 1)];
        let det = vec![detb(0.0, 0.0, 10.0, 10.0, 2, 0.9)];
        let r = match_image(&gt, &det, &MatchConfig::default()).unwrap();
        assert_eq!((r.tp(), r.false_positives.len(), r.false_negatives.len()), (0, 1, 1));
        let agnostic = MatchConfig { class_aware: false, ..Default::default() };
        assert_eq!(match_image(&gt, &det, &agnostic).unwrap().tp(), 1);
    }

    #[test]
    fn score_threshold_filters() {
        let gt = vec![gtb(0.0, 0.0, 10.0, 10.0, 1)];
        let det = vec![detb(0.0, 0.0, 10.0, 10.0, 1, 0.4), detb(40.0, 0.0, 10.0, 10.0, 1, 0.6)];
        let r = match_image(&gt, &det, &MatchConfig::default()).unwrap();
        assert_eq!(r.false_positives, vec![1]);
        assert_eq!(r.false_negatives, vec![0]);
    }

    #[test]
    fn report_ratios() {
        let r = MatchReport::from_counts(8, 2, 0);
        assert_eq!(r.precision, 0.8);
        let r = MatchReport::from_counts(8, 0, 8);
        assert_eq!(r.recall, 0.5);
        let r = report(&[MatchResult::default()]);
        assert_eq!((r.precision, r.precision_defined), (0.0, false));
        assert_eq!((r.recall, r.recall_defined), (0.0, false));
    }

    fn single(gt: Vec<LabeledBox>, det: Vec<LabeledBox>) -> f64 {
        let g = BTreeMap::from([(1u64, gt)]);
        let d = BTreeMap::from([(1u64, det)]);
        average_precision(&g, &d, 1, &MatchConfig::default()).unwrap().unwrap()
    }

    #[test]
    fn ap_single_detection() {
        let g = gtb(0.0, 0.0, 10.0, 10.0, 1);
        // IoU 0.6: (0,0,10,10) vs (0,0,10,6) -> 60 / 100
        assert_eq!(single(vec![g], vec![detb(0.0, 0.0, 10.0, 6.0, 1, 0.3)]), 1.0);
        // IoU 0.4
        assert_eq!(single(vec![g], vec![detb(0.0, 0.0, 10.0, 4.0, 1, 0.3)]), 0.0);
    }

    #[test]
    fn ap_fixture_three_gt_four_det() {
        // Five-point curve worked by hand (split into threshold groups):
        //   0.9 TP -> (1/3, 1)   0.8 FP -> (1/3, 1/2)
        //   0.7 TP -> (2/3, 2/3) 0.6 TP -> (1, 3/4)
        // envelope: levels 0..=33 -> 1, 34..=66 -> 3/4, 67..=100 -> 3/4
        let gt = vec![
            gtb(0.0, 0.0, 10.0, 10.0, 1),
            gtb(20.0, 0.0, 10.0, 10.0, 1),
            gtb(40.0, 0.0, 10.0, 10.0, 1),
        ];
        let det = vec![
            detb(0.0, 0.0, 10.0, 10.0, 1, 0.9),
            detb(80.0, 80.0, 10.0, 10.0, 1, 0.8),
            detb(21.0, 0.0, 10.0, 10.0, 1, 0.7),
            detb(40.0, 1.0, 10.0, 10.0, 1, 0.6),
        ];
        let expected = (34.0 * 1.0 + 67.0 * 0.75) / 101.0;
        assert!((single(gt, det) - expected).abs() < 1e-12);
    }

    #[test]
    fn ap_absent_category_is_none() {
        let g = BTreeMap::from([(1u64, vec![gtb(0.0, 0.0, 1.0, 1.0, 1)])]);
        assert_eq!(average_precision(&g, &BTreeMap::new(), 2, &MatchConfig::default()).unwrap(), None);
    }

    fn two_category_set() -> AnnotationSet {
        use crate::dataset::ImageRecord;
        let images = vec![
            ImageRecord::from_file_name(1, "s_1.png", 100, 100),
            ImageRecord::from_file_name(2, "s_2.png", 100, 100),
        ];
        let cats = BTreeMap::from([(1, "a".to_string()), (2, "b".to_string()), (3, "c".to_string())]);
        let mut set = AnnotationSet::new(images, cats);
        set.boxes.insert(1, vec![gtb(0.0, 0.0, 10.0, 10.0, 1), gtb(50.0, 50.0, 10.0, 10.0, 2)]);
        set.boxes.insert(2, vec![gtb(0.0, 0.0, 10.0, 10.0, 1)]);
        set
    }

    #[test]
    fn evaluate_perfect_and_wrong_category() {
        let set = two_category_set();
        let cfg = MatchConfig::default();
        let perfect = evaluate(&set, &DetectionSet::from_truth(&set), &cfg).unwrap();
        assert_eq!(perfect.map_value, 1.0);
        assert_eq!(perfect.excluded_categories, vec![3]);

        let mut wrong = DetectionSet::from_truth(&set);
        for v in wrong.boxes.values_mut() {
            for b in v {
                b.category_id = if b.category_id == 1 { 2 } else { 1 };
            }
        }
        assert_eq!(evaluate(&set, &wrong, &cfg).unwrap().map_value, 0.0);
    }

    #[test]
    fn evaluate_two_categories_mean() {
        // category 1: hit on image 1 (0.9), miss on image 2 -> recall 1/2,
        //   precision 1 -> levels 0..=50 -> 51/101
        // category 2: single perfect detection -> 1
        let set = two_category_set();
        let det = DetectionSet {
            boxes: BTreeMap::from([
                (1, vec![detb(0.0, 0.0, 10.0, 10.0, 1, 0.9), detb(50.0, 50.0, 10.0, 10.0, 2, 0.5)]),
            ]),
        };
        let r = evaluate(&set, &det, &MatchConfig::default()).unwrap();
        let a1 = 51.0 / 101.0;
        assert!((r.per_category_ap[&1] - a1).abs() < 1e-12);
        assert_eq!(r.per_category_ap[&2], 1.0);
        assert!((r.map_value - (a1 + 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_rejects_unknown_image() {
        let set = two_category_set();
        let det = DetectionSet {
            boxes: BTreeMap::from([(99, vec![detb(0.0, 0.0, 1.0, 1.0, 1, 0.5)])]),
        };
        assert!(matches!(
            evaluate(&set, &det, &MatchConfig::default()),
            Err(Error::Referential { .. })
        ));
    }

    #[test]
    fn eval_exports() {
        let set = two_category_set();
        let r = evaluate(&set, &DetectionSet::from_truth(&set), &MatchConfig::default()).unwrap();
        let csv = String::from_utf8(r.to_csv()).unwrap();
        assert_eq!(csv, "category,ap\n1,1\n2,1\n");
        let json: serde_json::Value = serde_json::from_slice(&r.to_json()).unwrap();
        assert_eq!(json["map"], 1.0);
        assert_eq!(json["config"]["iou_threshold"], 0.5);
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<LabeledBox>, Vec<LabeledBox>)> {
        let bx = (0u8..6, 0u8..6, 1u8..5, 1u8..5, 1u32..3);
        let gt = prop::collection::vec(bx.clone(), 0..6)
            .prop_map(|v| v.into_iter().map(|(x, y, w, h, c)| gtb(x as f64 * 2.0, y as f64 * 2.0, w as f64 * 3.0, h as f64 * 3.0, c)).collect());
        let det = prop::collection::vec((bx, 0u8..=10), 0..7).prop_map(|v| {
            v.into_iter()
                .map(|((x, y, w, h, c), s)| detb(x as f64 * 2.0, y as f64 * 2.0, w as f64 * 3.0, h as f64 * 3.0, c, s as f64 / 10.0))
                .collect()
        });
        (gt, det)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn counting_identities((gt, det) in arb_instance(), tau in 0.05..1.0f64, st in 0.0..1.0f64, aware: bool) {
            let cfg = MatchConfig { iou_threshold: tau, score_threshold: st, class_aware: aware };
            let r = match_image(&gt, &det, &cfg).unwrap();
            let considered = det.iter().filter(|d| d.score.unwrap() >= st).count();
            prop_assert_eq!(r.matched_pairs.len() + r.false_negatives.len(), gt.len());
            prop_assert_eq!(r.matched_pairs.len() + r.false_positives.len(), considered);
            let mut gts: Vec<usize> = r.matched_pairs.iter().map(|p| p.gt).chain(r.false_negatives.iter().copied()).collect();
            gts.sort_unstable();
            gts.dedup();
            prop_assert_eq!(gts.len(), gt.len());
            let mut dets: Vec<usize> = r.matched_pairs.iter().map(|p| p.det).chain(r.false_positives.iter().copied()).collect();
            dets.sort_unstable();
            dets.dedup();
            prop_assert_eq!(dets.len(), considered);
            prop_assert_eq!(r, greedy_reference(&gt, &det, &cfg));
        }

        #[test]
        fn raising_score_threshold_shrinks_considered((gt, det) in arb_instance(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let at = |st| {
                let r = match_image(&gt, &det, &MatchConfig { score_threshold: st, ..Default::default() }).unwrap();
                r.tp() + r.false_positives.len()
            };
            prop_assert!(at(hi) <= at(lo));
        }

        #[test]
        fn raising_iou_threshold_never_adds_matches((gt, det) in arb_instance(), a in 0.05..1.0f64, b in 0.05..1.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let tp = |tau| match_image(&gt, &det, &MatchConfig { iou_threshold: tau, ..Default::default() }).unwrap().tp();
            prop_assert!(tp(hi) <= tp(lo));
        }

        #[test]
        fn gt_order_irrelevant_without_ties(
            raw in prop::collection::vec((0.0..40.0f64, 0.0..40.0f64, 5.0..20.0f64, 5.0..20.0f64), 1..6),
            dets in prop::collection::vec((0.0..40.0f64, 0.0..40.0f64, 5.0..20.0f64, 5.0..20.0f64, 0.0..1.0f64), 0..6),
            seed in any::<u64>(),
        ) {
            let gt: Vec<_> = raw.iter().map(|&(x, y, w, h)| gtb(x, y, w, h, 1)).collect();
            let det: Vec<_> = dets.iter().map(|&(x, y, w, h, s)| detb(x, y, w, h, 1, s)).collect();
            let mut perm: Vec<usize> = (0..gt.len()).collect();
            let mut state = seed;
            for i in (1..perm.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (state >> 33) as usize % (i + 1));
            }
            let shuffled: Vec<_> = perm.iter().map(|&i| gt[i]).collect();
            let cfg = MatchConfig::default().unfiltered();
            let base = match_image(&gt, &det, &cfg).unwrap();
            let other = match_image(&shuffled, &det, &cfg).unwrap();
            let mut a: Vec<(usize, usize)> = base.matched_pairs.iter().map(|p| (p.det, p.gt)).collect();
            let mut b: Vec<(usize, usize)> = other.matched_pairs.iter().map(|p| (p.det, perm[p.gt])).collect();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn ap_in_unit_interval((gt, det) in arb_instance()) {
            let g = BTreeMap::from([(1u64, gt)]);
            let d = BTreeMap::from([(1u64, det)]);
            for c in 1..3 {
                if let Some(ap) = average_precision(&g, &d, c, &MatchConfig::default()).unwrap() {
                    prop_assert!((0.0..=1.0).contains(&ap));
                }
            }
        }
    }
}
