//! Reference implementations used as test oracles. They are written from
//! the definitions, independently of the library code they check.

#![allow(dead_code)]

use std::collections::BTreeMap;

/// (x, y, w, h, category, score)
pub type RawBox = (f64, f64, f64, f64, u32, f64);

pub fn iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let ix = (a.0 + a.2).min(b.0 + b.2) - a.0.max(b.0);
    let iy = (a.1 + a.3).min(b.1 + b.3) - a.1.max(b.1);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.2 * a.3 + b.2 * b.3 - inter)
}

fn geom(b: &RawBox) -> (f64, f64, f64, f64) {
    (b.0, b.1, b.2, b.3)
}

/// Greedy matching: detections by descending score (stable), each taking
/// the unmatched same-category truth with the highest IoU at or above
/// `tau`, lowest index on ties. Returns (tp, fp, fn).
pub fn greedy_counts(gt: &[RawBox], det: &[RawBox], tau: f64) -> (usize, usize, usize) {
    let mut order: Vec<usize> = (0..det.len()).collect();
    order.sort_by(|&i, &j| det[j].5.partial_cmp(&det[i].5).unwrap());
    let mut taken = vec![false; gt.len()];
    let mut tp = 0;
    for &d in &order {
        let mut best: Option<(usize, f64)> = None;
        for (g, t) in gt.iter().enumerate() {
            if taken[g] || t.4 != det[d].4 {
                continue;
            }
            let v = iou(geom(t), geom(&det[d]));
            if v >= tau && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            tp += 1;
        }
    }
    (tp, det.len() - tp, gt.len() - tp)
}

/// AP by brute force: for every distinct score `s`, keep the detections
/// scoring at least `s`, match each image from scratch and record
/// (recall, precision). AP averages, over recall levels 0, 0.01, ..., 1,
/// the best precision among points whose recall reaches the level.
pub fn brute_force_ap(images: &[(Vec<RawBox>, Vec<RawBox>)], category: u32, tau: f64) -> Option<f64> {
    let per: Vec<(Vec<RawBox>, Vec<RawBox>)> = images
        .iter()
        .map(|(g, d)| {
            (
                g.iter().filter(|b| b.4 == category).copied().collect(),
                d.iter().filter(|b| b.4 == category).copied().collect(),
            )
        })
        .collect();
    let npos: usize = per.iter().map(|(g, _)| g.len()).sum();
    if npos == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = per.iter().flat_map(|(_, d)| d.iter().map(|b| b.5)).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut points = Vec::new();
    for &s in &thresholds {
        let (mut tp, mut fp) = (0, 0);
        for (g, d) in &per {
            let kept: Vec<RawBox> = d.iter().filter(|b| b.5 >= s).copied().collect();
            let (t, f, _) = greedy_counts(g, &kept, tau);
            tp += t;
            fp += f;
        }
        points.push((tp as f64 / npos as f64, tp as f64 / (tp + fp) as f64));
    }
    let mut sum = 0.0;
    for k in 0..=100 {
        let level = k as f64 / 100.0;
        let best = points
            .iter()
            .filter(|(r, _)| *r >= level)
            .map(|(_, p)| *p)
            .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))));
        sum += best.unwrap_or(0.0);
    }
    Some(sum / 101.0)
}

/// mAP over categories that have ground truth; 0 when none has.
pub fn brute_force_map(images: &[(Vec<RawBox>, Vec<RawBox>)], categories: &[u32], tau: f64) -> f64 {
    let aps: Vec<f64> = categories
        .iter()
        .filter_map(|&c| brute_force_ap(images, c, tau))
        .collect();
    if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    }
}

/// Size of a maximum matching between `a` and `b` where an edge joins
/// boxes of the same category with IoU at least `tau` (augmenting paths).
pub fn max_cover(a: &[RawBox], b: &[RawBox], tau: f64) -> usize {
    let adj: Vec<Vec<usize>> = a
        .iter()
        .map(|x| {
            b.iter()
                .enumerate()
                .filter(|(_, y)| x.4 == y.4 && iou(geom(x), geom(y)) >= tau)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; b.len()];
    fn augment(i: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|k| augment(k, adj, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut size = 0;
    for i in 0..a.len() {
        let mut seen = vec![false; b.len()];
        if augment(i, &adj, &mut seen, &mut owner) {
            size += 1;
        }
    }
    size
}

/// Per-sequence frame lists in frame order.
pub fn frames_by_sequence(images: &[(u64, String, u32)]) -> BTreeMap<String, Vec<(u32, u64)>> {
    let mut seqs: BTreeMap<String, Vec<(u32, u64)>> = BTreeMap::new();
    for (id, seq, frame) in images {
        seqs.entry(seq.clone()).or_default().push((*frame, *id));
    }
    for v in seqs.values_mut() {
        v.sort();
    }
    seqs
}
