//! Ground-truth and detection sets, their COCO / Pascal VOC codecs, the
//! campaign manifest, and dataset summaries.
//!
//! Category ids inside an [`AnnotationSet`] are always contiguous from 1.
//! Ids found in a source document are ranked ascending and renumbered;
//! any id that changed is kept in [`AnnotationSet::external_category_ids`]
//! so that writing the set back reproduces the original numbering.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, LabeledBox};
use crate::metrics::MatchConfig;
use crate::workload::TimingModel;

/// Scores up to this far above 1 are float noise and get clamped.
const SCORE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    pub sequence_id: String,
    /// Position of the frame within its video sequence.
    pub frame_index: u32,
}

impl ImageRecord {
    /// Builds a record whose sequence metadata is derived from `file_name`.
    pub fn from_file_name(id: u64, file_name: impl Into<String>, width: u32, height: u32) -> Self {
        let file_name = file_name.into();
        let (sequence_id, frame_index) = derive_sequence(&file_name);
        Self {
            id,
            file_name,
            width,
            height,
            sequence_id,
            frame_index,
        }
    }
}

/// Splits a file name into `(sequence, frame)`: the text before the last
/// run of digits in the final path component (extension removed, trailing
/// separators trimmed) and the value of that run. Names without digits form a one-frame sequence.
pub fn derive_sequence(file_name: &str) -> (String, u32) {
    let component_start = file_name.rfind(['/', '\\']).map_or(0, |i| i + 1);
    let stem = match file_name[component_start..].rfind('.') {
        Some(dot) if dot > 0 => &file_name[..component_start + dot],
        _ => file_name,
    };
    let bytes = stem.as_bytes();
    let Some(end) = bytes[component_start..]
        .iter()
        .rposition(u8::is_ascii_digit)
        .map(|i| i + component_start)
    else {
        return (stem.to_string(), 0);
    };
    let start = bytes[component_start..end]
        .iter()
        .rposition(|c| !c.is_ascii_digit())
        .map_or(component_start, |i| i + component_start + 1);
    let digits = &stem[start..=end];
    // Overlong runs keep only their low-order digits.
    let tail = &digits[digits.len().saturating_sub(9)..];
    let frame = tail.parse().unwrap_or(0);
    let prefix = stem[..start].trim_end_matches(['_', '-', '.', ' ', '/', '\\']);
    (prefix.to_string(), frame)
}

/// A fully labeled dataset: images, categories and unscored boxes per image.
///
/// `boxes` holds an entry (possibly empty) for every image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub images: Vec<ImageRecord>,
    pub categories: BTreeMap<u32, String>,
    pub boxes: BTreeMap<u64, Vec<LabeledBox>>,
    /// Source-document category id for every internal id that differs from it.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external_category_ids: BTreeMap<u32, i64>,
}

impl AnnotationSet {
    pub fn new(images: Vec<ImageRecord>, categories: BTreeMap<u32, String>) -> Self {
        let boxes = images.iter().map(|im| (im.id, Vec::new())).collect();
        Self {
            images,
            categories,
            boxes,
            external_category_ids: BTreeMap::new(),
        }
    }

    pub fn image(&self, id: u64) -> Option<&ImageRecord> {
        self.images.iter().find(|im| im.id == id)
    }

    pub fn boxes_for(&self, id: u64) -> &[LabeledBox] {
        self.boxes.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn instance_count(&self) -> usize {
        self.boxes.values().map(Vec::len).sum()
    }

    pub fn external_category(&self, internal: u32) -> i64 {
        self.external_category_ids
            .get(&internal)
            .copied()
            .unwrap_or(i64::from(internal))
    }

    pub fn internal_category(&self, external: i64) -> Option<u32> {
        self.categories
            .keys()
            .copied()
            .find(|&id| self.external_category(id) == external)
    }

    /// Restricts the set to the given images, keeping categories.
    pub fn subset(&self, ids: &[u64]) -> AnnotationSet {
        let keep: BTreeSet<u64> = ids.iter().copied().collect();
        let images: Vec<ImageRecord> = self
            .images
            .iter()
            .filter(|im| keep.contains(&im.id))
            .cloned()
            .collect();
        let boxes = images
            .iter()
            .map(|im| (im.id, self.boxes_for(im.id).to_vec()))
            .collect();
        AnnotationSet {
            images,
            categories: self.categories.clone(),
            boxes,
            external_category_ids: self.external_category_ids.clone(),
        }
    }

    /// Checks every structural invariant of the set.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        let mut frames = BTreeSet::new();
        let mut dup_ids = Vec::new();
        for im in &self.images {
            if im.width == 0 || im.height == 0 {
                return Err(Error::Validation(format!("image {} has zero size", im.id)));
            }
            if !ids.insert(im.id) {
                dup_ids.push(im.id as i64);
            }
            if !frames.insert((im.sequence_id.as_str(), im.frame_index)) {
                return Err(Error::Validation(format!(
                    "frame {} appears twice in sequence {:?}",
                    im.frame_index, im.sequence_id
                )));
            }
        }
        if !dup_ids.is_empty() {
            return Err(Error::Referential {
                what: "duplicate image ids",
                ids: dup_ids,
            });
        }
        let expected: Vec<u32> = (1..=self.categories.len() as u32).collect();
        if !self.categories.keys().copied().eq(expected) {
            return Err(Error::Validation(
                "category ids must be contiguous from 1".into(),
            ));
        }
        let externals: Vec<i64> = self
            .categories
            .keys()
            .map(|&c| self.external_category(c))
            .collect();
        if externals.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "external category ids must increase with internal ids".into(),
            ));
        }

        let dangling_images: Vec<i64> = self
            .boxes
            .keys()
            .filter(|id| !ids.contains(id))
            .map(|&id| id as i64)
            .collect();
        if !dangling_images.is_empty() {
            return Err(Error::Referential {
                what: "boxes reference unknown image ids",
                ids: dangling_images,
            });
        }
        let mut dangling_categories = BTreeSet::new();
        for im in &self.images {
            if !self.boxes.contains_key(&im.id) {
                return Err(Error::Validation(format!("image {} has no box list", im.id)));
            }
            for b in self.boxes_for(im.id) {
                if b.score.is_some() {
                    return Err(Error::InputRole);
                }
                if !self.categories.contains_key(&b.category_id) {
                    dangling_categories.insert(b.category_id as i64);
                }
                let bb = b.bbox;
                if bb.x() < 0.0
                    || bb.y() < 0.0
                    || bb.x_max() > f64::from(im.width)
                    || bb.y_max() > f64::from(im.height)
                {
                    return Err(Error::Validation(format!(
                        "box {:?} leaves image {}",
                        <[f64; 4]>::from(bb),
                        im.id
                    )));
                }
            }
        }
        if !dangling_categories.is_empty() {
            return Err(Error::Referential {
                what: "boxes reference unknown category ids",
                ids: dangling_categories.into_iter().collect(),
            });
        }
        Ok(())
    }
}

/// Scored detector proposals per image. Category ids are internal ids
/// of the ground-truth set they are compared against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub boxes: BTreeMap<u64, Vec<LabeledBox>>,
}

impl DetectionSet {
    pub fn boxes_for(&self, id: u64) -> &[LabeledBox] {
        self.boxes.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.boxes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Perfect detector: every ground-truth box reported with score 1.
    pub fn from_truth(set: &AnnotationSet) -> DetectionSet {
        let boxes = set
            .boxes
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(&id, v)| {
                let scored = v
                    .iter()
                    .map(|b| LabeledBox {
                        score: Some(1.0),
                        ..*b
                    })
                    .collect();
                (id, scored)
            })
            .collect();
        DetectionSet { boxes }
    }
}

/// Per-dataset counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub image_count: usize,
    pub instance_count: usize,
    pub category_count: usize,
    pub per_category_counts: BTreeMap<u32, usize>,
}

impl DatasetSummary {
    pub fn max_category_count(&self) -> Option<usize> {
        self.per_category_counts.values().copied().max()
    }

    pub fn min_category_count(&self) -> Option<usize> {
        self.per_category_counts.values().copied().min()
    }
}

pub fn summarize(set: &AnnotationSet) -> DatasetSummary {
    let mut per_category_counts: BTreeMap<u32, usize> =
        set.categories.keys().map(|&c| (c, 0)).collect();
    for b in set.boxes.values().flatten() {
        *per_category_counts.entry(b.category_id).or_default() += 1;
    }
    DatasetSummary {
        image_count: set.images.len(),
        instance_count: per_category_counts.values().sum(),
        category_count: set.categories.len(),
        per_category_counts,
    }
}

// ---------------------------------------------------------------------------
// COCO

#[derive(Deserialize)]
struct CocoDocIn {
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotationIn>,
    #[serde(default)]
    categories: Vec<CocoCategory>,
}

#[derive(Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sequence_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame_index: Option<u32>,
}

#[derive(Deserialize)]
struct CocoAnnotationIn {
    image_id: u64,
    category_id: i64,
    bbox: [f64; 4],
}

#[derive(Serialize)]
struct CocoAnnotationOut {
    id: u64,
    image_id: u64,
    category_id: i64,
    bbox: [f64; 4],
    area: f64,
    iscrowd: u8,
}

#[derive(Serialize, Deserialize)]
struct CocoCategory {
    id: i64,
    name: String,
}

#[derive(Serialize)]
struct CocoDocOut {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotationOut>,
    categories: Vec<CocoCategory>,
}

#[derive(Serialize, Deserialize)]
struct CocoDetection {
    image_id: u64,
    category_id: i64,
    bbox: [f64; 4],
    score: f64,
}

/// Ranks source category ids ascending and returns `(categories, side map,
/// external -> internal lookup)`.
type Interned = (BTreeMap<u32, String>, BTreeMap<u32, i64>, BTreeMap<i64, u32>);

fn intern_categories(raw: Vec<(i64, String)>) -> Result<Interned> {
    let mut sorted = raw;
    sorted.sort_by_key(|(id, _)| *id);
    if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Referential {
            what: "duplicate category ids",
            ids: vec![w[0].0],
        });
    }
    let mut categories = BTreeMap::new();
    let mut side = BTreeMap::new();
    let mut lookup = BTreeMap::new();
    for (rank, (external, name)) in sorted.into_iter().enumerate() {
        let internal = rank as u32 + 1;
        if external != i64::from(internal) {
            side.insert(internal, external);
        }
        lookup.insert(external, internal);
        categories.insert(internal, name);
    }
    Ok((categories, side, lookup))
}

fn clamp_into(bbox: BoundingBox, im: &ImageRecord, source: &str) -> Result<BoundingBox> {
    let (w, h) = (f64::from(im.width), f64::from(im.height));
    match bbox.clamp_to(w, h) {
        Some(c) if c == bbox => Ok(c),
        Some(c) => {
            warn!(
                "{source}: box {:?} overflows image {} ({}x{}); clamped",
                <[f64; 4]>::from(bbox),
                im.id,
                im.width,
                im.height
            );
            Ok(c)
        }
        None => Err(Error::DegenerateBox {
            file: source.to_string(),
            detail: format!(
                "box {:?} lies entirely outside image {}",
                <[f64; 4]>::from(bbox),
                im.id
            ),
        }),
    }
}

/// Parses a COCO annotation document.
pub fn parse_coco_ground_truth(document: &[u8]) -> Result<AnnotationSet> {
    let doc: CocoDocIn =
        serde_json::from_slice(document).map_err(|e| Error::json("coco document", &e))?;

    let (categories, external_category_ids, lookup) =
        intern_categories(doc.categories.into_iter().map(|c| (c.id, c.name)).collect())?;

    let images: Vec<ImageRecord> = doc
        .images
        .into_iter()
        .map(|im| {
            let (derived_seq, derived_frame) = derive_sequence(&im.file_name);
            ImageRecord {
                id: im.id,
                sequence_id: im.sequence_id.unwrap_or(derived_seq),
                frame_index: im.frame_index.unwrap_or(derived_frame),
                file_name: im.file_name,
                width: im.width,
                height: im.height,
            }
        })
        .collect();
    let mut set = AnnotationSet::new(images, categories);
    set.external_category_ids = external_category_ids;

    let index: BTreeMap<u64, usize> = set
        .images
        .iter()
        .enumerate()
        .map(|(i, im)| (im.id, i))
        .collect();
    let mut missing_images = BTreeSet::new();
    let mut missing_categories = BTreeSet::new();
    for (n, ann) in doc.annotations.iter().enumerate() {
        let Some(&slot) = index.get(&ann.image_id) else {
            missing_images.insert(ann.image_id as i64);
            continue;
        };
        let Some(&category_id) = lookup.get(&ann.category_id) else {
            missing_categories.insert(ann.category_id);
            continue;
        };
        let location = format!("annotations[{n}]");
        let bbox = BoundingBox::try_from(ann.bbox).map_err(|e| Error::Parse {
            location: location.clone(),
            message: e.to_string(),
        })?;
        let bbox = clamp_into(bbox, &set.images[slot], &location)?;
        set.boxes
            .entry(ann.image_id)
            .or_default()
            .push(LabeledBox::truth(bbox, category_id)?);
    }
    if !missing_images.is_empty() {
        return Err(Error::Referential {
            what: "annotations reference unknown image ids",
            ids: missing_images.into_iter().collect(),
        });
    }
    if !missing_categories.is_empty() {
        return Err(Error::Referential {
            what: "annotations reference unknown category ids",
            ids: missing_categories.into_iter().collect(),
        });
    }
    set.validate()?;
    Ok(set)
}

/// Serializes a set as a pretty-printed COCO document. Annotation ids are
/// assigned sequentially from 1; source category ids are restored.
pub fn write_coco_ground_truth(set: &AnnotationSet) -> Vec<u8> {
    let images = set
        .images
        .iter()
        .map(|im| CocoImage {
            id: im.id,
            file_name: im.file_name.clone(),
            width: im.width,
            height: im.height,
            sequence_id: Some(im.sequence_id.clone()),
            frame_index: Some(im.frame_index),
        })
        .collect();
    let mut annotations = Vec::with_capacity(set.instance_count());
    for im in &set.images {
        for b in set.boxes_for(im.id) {
            annotations.push(CocoAnnotationOut {
                id: annotations.len() as u64 + 1,
                image_id: im.id,
                category_id: set.external_category(b.category_id),
                bbox: b.bbox.into(),
                area: b.bbox.area(),
                iscrowd: 0,
            });
        }
    }
    let categories = set
        .categories
        .iter()
        .map(|(&id, name)| CocoCategory {
            id: set.external_category(id),
            name: name.clone(),
        })
        .collect();
    let doc = CocoDocOut {
        images,
        annotations,
        categories,
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("coco document serializes");
    out.push(b'\n');
    out
}

fn parse_detection_entries(document: &[u8]) -> Result<Vec<CocoDetection>> {
    let raw: Vec<serde_json::Value> =
        serde_json::from_slice(document).map_err(|e| Error::json("detections document", &e))?;
    raw.into_iter()
        .enumerate()
        .map(|(n, v)| {
            serde_json::from_value::<CocoDetection>(v).map_err(|e| Error::Parse {
                location: format!("detections[{n}]"),
                message: e.to_string(),
            })
        })
        .collect()
}

fn detection_box(n: usize, entry: &CocoDetection, category_id: u32) -> Result<LabeledBox> {
    let location = format!("detections[{n}]");
    let score = if entry.score > 1.0 && entry.score <= 1.0 + SCORE_SLACK {
        1.0
    } else {
        entry.score
    };
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::Validation(format!(
            "{location}: score {} outside [0, 1]",
            entry.score
        )));
    }
    let bbox = BoundingBox::try_from(entry.bbox).map_err(|e| Error::Parse {
        location,
        message: e.to_string(),
    })?;
    LabeledBox::detection(bbox, category_id, score)
}

/// Parses a COCO results array, keeping category ids verbatim.
pub fn parse_coco_detections(document: &[u8]) -> Result<DetectionSet> {
    let mut set = DetectionSet::default();
    for (n, entry) in parse_detection_entries(document)?.iter().enumerate() {
        let category_id = u32::try_from(entry.category_id)
            .ok()
            .filter(|&c| c >= 1)
            .ok_or_else(|| Error::Parse {
                location: format!("detections[{n}]"),
                message: format!("category id {} is not a positive integer", entry.category_id),
            })?;
        let b = detection_box(n, entry, category_id)?;
        set.boxes.entry(entry.image_id).or_default().push(b);
    }
    Ok(set)
}

/// Parses a COCO results array against `truth`, translating source
/// category ids to the set's internal ids.
pub fn parse_coco_detections_for(document: &[u8], truth: &AnnotationSet) -> Result<DetectionSet> {
    let mut set = DetectionSet::default();
    let mut unknown_categories = BTreeSet::new();
    for (n, entry) in parse_detection_entries(document)?.iter().enumerate() {
        let Some(category_id) = truth.internal_category(entry.category_id) else {
            unknown_categories.insert(entry.category_id);
            continue;
        };
        let b = detection_box(n, entry, category_id)?;
        set.boxes.entry(entry.image_id).or_default().push(b);
    }
    if !unknown_categories.is_empty() {
        return Err(Error::Referential {
            what: "detections reference unknown category ids",
            ids: unknown_categories.into_iter().collect(),
        });
    }
    Ok(set)
}

/// Serializes detections as a COCO results array. With `truth`, internal
/// category ids are mapped back to the source numbering.
pub fn write_coco_detections(det: &DetectionSet, truth: Option<&AnnotationSet>) -> Vec<u8> {
    let entries: Vec<CocoDetection> = det
        .boxes
        .iter()
        .flat_map(|(&image_id, v)| {
            v.iter().map(move |b| CocoDetection {
                image_id,
                category_id: truth.map_or(i64::from(b.category_id), |t| {
                    t.external_category(b.category_id)
                }),
                bbox: b.bbox.into(),
                score: b.score.unwrap_or(1.0),
            })
        })
        .collect();
    let mut out = serde_json::to_vec_pretty(&entries).expect("detections serialize");
    out.push(b'\n');
    out
}

pub fn read_coco_ground_truth(path: &Path) -> Result<AnnotationSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_coco_ground_truth(&bytes).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

// ---------------------------------------------------------------------------
// Pascal VOC

struct VocFile {
    file_name: String,
    width: u32,
    height: u32,
    objects: Vec<(String, BoundingBox)>,
}

fn voc_child<'a>(node: roxmltree::Node<'a, 'a>, tag: &str) -> Option<roxmltree::Node<'a, 'a>> {
    node.children().find(|c| c.has_tag_name(tag))
}

fn voc_text(node: roxmltree::Node, tag: &str) -> Option<String> {
    voc_child(node, tag).and_then(|c| c.text()).map(|t| t.trim().to_string())
}

fn parse_voc_file(path: &Path) -> Result<VocFile> {
    let file = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc = roxmltree::Document::parse(&text).map_err(|e| Error::Parse {
        location: file.clone(),
        message: e.to_string(),
    })?;
    let root = doc.root_element();
    let bad = |message: String| Error::Parse {
        location: file.clone(),
        message,
    };
    let file_name = voc_text(root, "filename").unwrap_or_else(|| {
        let stem = path.file_stem().unwrap_or_default().to_string_lossy();
        format!("{stem}.jpg")
    });
    let size = voc_child(root, "size").ok_or_else(|| bad("missing <size>".into()))?;
    let dim = |tag: &str| -> Result<u32> {
        voc_text(size, tag)
            .and_then(|t| t.parse::<f64>().ok())
            .filter(|v| *v >= 1.0 && v.fract() == 0.0)
            .map(|v| v as u32)
            .ok_or_else(|| bad(format!("missing or invalid <size><{tag}>")))
    };
    let (width, height) = (dim("width")?, dim("height")?);

    let mut objects = Vec::new();
    for obj in root.children().filter(|c| c.has_tag_name("object")) {
        let name = voc_text(obj, "name").ok_or_else(|| bad("object without <name>".into()))?;
        let bnd = voc_child(obj, "bndbox").ok_or_else(|| bad("object without <bndbox>".into()))?;
        let coord = |tag: &str| -> Result<f64> {
            voc_text(bnd, tag)
                .and_then(|t| t.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("missing or invalid <{tag}>")))
        };
        let (xmin, ymin, xmax, ymax) = (coord("xmin")?, coord("ymin")?, coord("xmax")?, coord("ymax")?);
        if xmax <= xmin || ymax <= ymin {
            return Err(Error::DegenerateBox {
                file,
                detail: format!("object {name:?} has corners ({xmin}, {ymin}, {xmax}, {ymax})"),
            });
        }
        objects.push((name, BoundingBox::from_corners(xmin, ymin, xmax, ymax)?));
    }
    Ok(VocFile {
        file_name,
        width,
        height,
        objects,
    })
}

/// Reads every `*.xml` file in `dir` (sorted by name) as one image.
///
/// Image ids are assigned from 1 in file order; category names are sorted
/// and numbered from 1.
pub fn parse_voc_directory(dir: &Path) -> Result<AnnotationSet> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")))
        .collect();
    paths.sort();
    let files = paths
        .iter()
        .map(|p| parse_voc_file(p))
        .collect::<Result<Vec<_>>>()?;

    let names: BTreeSet<&str> = files
        .iter()
        .flat_map(|f| f.objects.iter().map(|(n, _)| n.as_str()))
        .collect();
    let lookup: BTreeMap<&str, u32> = names
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, i as u32 + 1))
        .collect();
    let categories = lookup.iter().map(|(&n, &id)| (id, n.to_string())).collect();

    let images = files
        .iter()
        .enumerate()
        .map(|(i, f)| ImageRecord::from_file_name(i as u64 + 1, &f.file_name, f.width, f.height))
        .collect();
    let mut set = AnnotationSet::new(images, categories);
    for (i, (f, path)) in files.iter().zip(&paths).enumerate() {
        let im = set.images[i].clone();
        let source = path.display().to_string();
        let list = set.boxes.entry(im.id).or_default();
        for (name, bbox) in &f.objects {
            let bbox = clamp_into(*bbox, &im, &source)?;
            list.push(LabeledBox::truth(bbox, lookup[name.as_str()])?);
        }
    }
    set.validate()?;
    Ok(set)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders one image of `set` as a Pascal VOC document.
pub fn write_voc_document(set: &AnnotationSet, image: &ImageRecord) -> String {
    let mut xml = String::new();
    xml.push_str("<annotation>\n");
    xml.push_str(&format!("  <filename>{}</filename>\n", xml_escape(&image.file_name)));
    xml.push_str(&format!(
        "  <size>\n    <width>{}</width>\n    <height>{}</height>\n    <depth>3</depth>\n  </size>\n",
        image.width, image.height
    ));
    for b in set.boxes_for(image.id) {
        let name = set
            .categories
            .get(&b.category_id)
            .map_or_else(|| b.category_id.to_string(), |n| xml_escape(n));
        xml.push_str(&format!(
            "  <object>\n    <name>{name}</name>\n    <bndbox>\n      <xmin>{}</xmin>\n      <ymin>{}</ymin>\n      <xmax>{}</xmax>\n      <ymax>{}</ymax>\n    </bndbox>\n  </object>\n",
            b.bbox.x(),
            b.bbox.y(),
            b.bbox.x_max(),
            b.bbox.y_max()
        ));
    }
    xml.push_str("</annotation>\n");
    xml
}

/// Writes one VOC XML per image into `dir`. File names are the image file
/// name with path separators flattened and the extension replaced.
pub fn write_voc_directory(set: &AnnotationSet, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for im in &set.images {
        let flat = im.file_name.replace(['/', '\\'], "_");
        let stem = Path::new(&flat)
            .file_stem()
            .map_or_else(|| im.id.to_string(), |s| s.to_string_lossy().into_owned());
        let path = dir.join(format!("{stem}.xml"));
        fs::write(&path, write_voc_document(set, im)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// Campaign manifest

/// Campaign configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Manifest {
    /// COCO document with the images to annotate. Boxes in it, if any, are
    /// treated as ground truth for simulation and evaluation.
    pub dataset: Option<PathBuf>,
    /// Fold-1 labels produced outside the tool.
    pub fold1_labels: Option<PathBuf>,
    /// Detector proposals for fold 2 (COCO results array).
    pub detections: Option<PathBuf>,
    pub split_fraction: f64,
    pub timing: TimingModel,
    pub matching: MatchConfig,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            dataset: None,
            fold1_labels: None,
            detections: None,
            split_fraction: 0.05,
            timing: TimingModel::default(),
            matching: MatchConfig::default(),
        }
    }
}

impl Manifest {
    pub fn parse(document: &[u8]) -> Result<Manifest> {
        let m: Manifest =
            serde_json::from_slice(document).map_err(|e| Error::json("manifest", &e))?;
        m.timing.validate()?;
        m.matching.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&bytes)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("manifest serializes");
        out.push(b'\n');
        out
    }
}
