//! Seeded synthetic datasets and detector proposals.
//!
//! Used by examples and tests where real footage or a trained detector is
//! not available. Everything here is deterministic for a given seed.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{AnnotationSet, DetectionSet, ImageRecord};
use crate::error::{check_unit, Error, Result};
use crate::geometry::{BoundingBox, LabeledBox};

/// Shape of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    /// Sequence names with their frame counts.
    pub sequences: Vec<(String, u32)>,
    /// Category names with exact instance totals.
    pub categories: Vec<(String, usize)>,
    pub width: u32,
    pub height: u32,
    /// Upper bound on boxes per image; 0 means unbounded.
    pub max_boxes_per_image: usize,
    pub seed: u64,
}

impl DatasetSpec {
    /// Six indoor walk-through sequences, 2213 frames and 4595 boxes in
    /// seven categories.
    pub fn tut_indoor(seed: u64) -> Self {
        let sequences = [412, 388, 365, 371, 340, 337]
            .iter()
            .enumerate()
            .map(|(i, &n)| (format!("hallway{}", i + 1), n))
            .collect();
        let categories = [
            ("fire_extinguisher", 1684),
            ("chair", 1662),
            ("clock", 380),
            ("trash_bin", 306),
            ("screen", 262),
            ("exit_sign", 220),
            ("printer", 81),
        ]
        .iter()
        .map(|&(n, c)| (n.to_string(), c))
        .collect();
        Self {
            sequences,
            categories,
            width: 640,
            height: 480,
            max_boxes_per_image: 0,
            seed,
        }
    }
}

fn random_box(rng: &mut ChaCha8Rng, width: u32, height: u32) -> BoundingBox {
    let (wf, hf) = (f64::from(width), f64::from(height));
    let w = rng.gen_range(0.05..0.35) * wf;
    let h = rng.gen_range(0.05..0.35) * hf;
    let x = rng.gen_range(0.0..wf - w);
    let y = rng.gen_range(0.0..hf - h);
    BoundingBox::new(x.floor(), y.floor(), w.floor().max(1.0), h.floor().max(1.0)).expect("positive size")
}

/// Generates ground truth matching `spec` exactly: frame counts per
/// sequence and instance totals per category. Image ids run from 1 in
/// sequence order; boxes land on uniformly chosen frames.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<AnnotationSet> {
    let frames: u64 = spec.sequences.iter().map(|(_, n)| u64::from(*n)).sum();
    let boxes: usize = spec.categories.iter().map(|(_, c)| c).sum();
    if frames == 0 {
        return Err(Error::Validation("synthetic dataset needs at least one frame".into()));
    }
    if spec.max_boxes_per_image > 0 && boxes as u64 > frames * spec.max_boxes_per_image as u64 {
        return Err(Error::Validation("more boxes than the per-image bound allows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut images = Vec::with_capacity(frames as usize);
    for (seq, n) in &spec.sequences {
        for frame in 0..*n {
            let id = images.len() as u64 + 1;
            images.push(ImageRecord {
                id,
                file_name: format!("{seq}/{frame:05}.jpg"),
                width: spec.width,
                height: spec.height,
                sequence_id: seq.clone(),
                frame_index: frame,
            });
        }
    }
    let categories: BTreeMap<u32, String> = spec
        .categories
        .iter()
        .enumerate()
        .map(|(i, (n, _))| (i as u32 + 1, n.clone()))
        .collect();
    let mut set = AnnotationSet::new(images, categories);
    for (ci, (_, count)) in spec.categories.iter().enumerate() {
        for _ in 0..*count {
            let id = loop {
                let id = rng.gen_range(1..=frames);
                if spec.max_boxes_per_image == 0 || set.boxes_for(id).len() < spec.max_boxes_per_image {
                    break id;
                }
            };
            let b = random_box(&mut rng, spec.width, spec.height);
            set.boxes
                .get_mut(&id)
                .expect("every image has a box list")
                .push(LabeledBox::truth(b, ci as u32 + 1)?);
        }
    }
    Ok(set)
}

/// How proposals deviate from the ground truth. Rates are per box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalNoise {
    /// Object not detected at all.
    pub miss_rate: f64,
    /// Detected far enough off to fail the IoU test.
    pub mislocate_rate: f64,
    /// Detected in the right place with the wrong category.
    pub confusion_rate: f64,
    /// Relative coordinate jitter for detected boxes, as a share of the
    /// box size. Values up to 0.05 keep IoU well above 0.8.
    pub jitter: f64,
    /// Mean number of spurious boxes per image.
    pub spurious_per_image: f64,
    /// Additional spurious boxes per detected object.
    pub spurious_per_detection: f64,
    /// Share of proposals scored below 0.5, so that the default score
    /// threshold hides them.
    pub low_score_rate: f64,
}

impl Default for ProposalNoise {
    fn default() -> Self {
        Self {
            miss_rate: 0.1,
            mislocate_rate: 0.05,
            confusion_rate: 0.03,
            jitter: 0.03,
            spurious_per_image: 0.2,
            spurious_per_detection: 0.0,
            low_score_rate: 0.05,
        }
    }
}

impl ProposalNoise {
    /// Noise that yields roughly the given precision and recall at the
    /// default thresholds.
    pub fn targeting(precision: f64, recall: f64) -> Result<Self> {
        check_unit("precision", precision)?;
        check_unit("recall", recall)?;
        if precision == 0.0 {
            return Err(Error::Validation("target precision must be positive".into()));
        }
        Ok(Self {
            miss_rate: 1.0 - recall,
            mislocate_rate: 0.0,
            confusion_rate: 0.0,
            jitter: 0.02,
            spurious_per_image: 0.0,
            spurious_per_detection: (1.0 - precision) / precision,
            low_score_rate: 0.0,
        })
    }

    fn validate(&self) -> Result<()> {
        check_unit("miss rate", self.miss_rate)?;
        check_unit("mislocate rate", self.mislocate_rate)?;
        check_unit("confusion rate", self.confusion_rate)?;
        check_unit("low score rate", self.low_score_rate)?;
        if !(self.spurious_per_image >= 0.0 && self.spurious_per_detection >= 0.0) {
            return Err(Error::Validation("spurious box rates must be non-negative".into()));
        }
        if !(0.0..=0.5).contains(&self.jitter) {
            return Err(Error::OutOfRange {
                name: "jitter",
                range: "[0, 0.5]",
                value: self.jitter,
            });
        }
        Ok(())
    }
}

fn fit_inside(b: BoundingBox, width: u32, height: u32) -> BoundingBox {
    let w = b.w().min(f64::from(width));
    let h = b.h().min(f64::from(height));
    let x = b.x().clamp(0.0, f64::from(width) - w);
    let y = b.y().clamp(0.0, f64::from(height) - h);
    BoundingBox::new(x, y, w, h).expect("size kept positive")
}

/// Draws detector-like proposals from ground truth.
pub fn perturb(gt: &AnnotationSet, noise: &ProposalNoise, seed: u64) -> Result<DetectionSet> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ncat = gt.categories.len() as u32;
    let mut out = DetectionSet::default();
    for im in &gt.images {
        let mut det = Vec::new();
        let score = |rng: &mut ChaCha8Rng| {
            if rng.gen_bool(noise.low_score_rate) {
                rng.gen_range(0.0..0.5)
            } else {
                rng.gen_range(0.5..=1.0)
            }
        };
        for t in gt.boxes_for(im.id) {
            if rng.gen_bool(noise.miss_rate) {
                continue;
            }
            let b = t.bbox;
            let placed = if rng.gen_bool(noise.mislocate_rate) {
                // shift by more than a full box so the overlap vanishes
                let dx = if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * b.w() * rng.gen_range(1.05..1.5);
                let dy = if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * b.h() * rng.gen_range(1.05..1.5);
                BoundingBox::new(b.x() + dx, b.y() + dy, b.w(), b.h())?
            } else {
                let j = noise.jitter;
                let dx = rng.gen_range(-j..=j) * b.w();
                let dy = rng.gen_range(-j..=j) * b.h();
                let sw = 1.0 + rng.gen_range(-j..=j);
                let sh = 1.0 + rng.gen_range(-j..=j);
                BoundingBox::new(b.x() + dx, b.y() + dy, b.w() * sw, b.h() * sh)?
            };
            let mut category = t.category_id;
            if ncat > 1 && rng.gen_bool(noise.confusion_rate) {
                category = rng.gen_range(1..ncat);
                if category >= t.category_id {
                    category += 1;
                }
            }
            let s = score(&mut rng);
            det.push(LabeledBox::detection(fit_inside(placed, im.width, im.height), category, s)?);
        }
        let mean = noise.spurious_per_image + noise.spurious_per_detection * det.len() as f64;
        let spurious = mean.floor() as usize + usize::from(rng.gen_bool(mean.fract()));
        for _ in 0..spurious {
            let b = random_box(&mut rng, im.width, im.height);
            let c = rng.gen_range(1..=ncat.max(1));
            let s = score(&mut rng);
            det.push(LabeledBox::detection(b, c, s)?);
        }
        // detectors report in no particular order
        for i in (1..det.len()).rev() {
            det.swap(i, rng.gen_range(0..=i));
        }
        if !det.is_empty() {
            out.boxes.insert(im.id, det);
        }
    }
    Ok(out)
}
