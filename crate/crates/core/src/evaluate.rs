//! Instance-level evaluation with average precision at IoU thresholds.
//!
//! Predictions are ranked by a confidence score and matched greedily, one
//! to one, to the unmatched ground-truth instance of highest IoU. AP is the
//! exact area under the precision-recall curve after making precision
//! monotone non-increasing in recall.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, RoiMask, SignedDistVolume};

pub const DEFAULT_THRESHOLDS: [f64; 2] = [0.5, 0.75];

/// Sparse ground-truth x prediction overlap counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMatchTable {
    pub gt_sizes: BTreeMap<u32, u64>,
    pub pred_sizes: BTreeMap<u32, u64>,
    pub overlaps: BTreeMap<(u32, u32), u64>,
}

impl InstanceMatchTable {
    pub fn iou(&self, gt: u32, pred: u32) -> f64 {
        let inter = self.overlaps.get(&(gt, pred)).copied().unwrap_or(0);
        if inter == 0 {
            return 0.0;
        }
        let union = self.gt_sizes[&gt] + self.pred_sizes[&pred] - inter;
        inter as f64 / union as f64
    }
}

#[derive(Default)]
struct Partial {
    gt: HashMap<u32, u64>,
    pred: HashMap<u32, u64>,
    pairs: HashMap<(u32, u32), u64>,
}

impl Partial {
    fn merge(mut self, other: Partial) -> Partial {
        for (k, v) in other.gt {
            *self.gt.entry(k).or_insert(0) += v;
        }
        for (k, v) in other.pred {
            *self.pred.entry(k).or_insert(0) += v;
        }
        for (k, v) in other.pairs {
            *self.pairs.entry(k).or_insert(0) += v;
        }
        self
    }
}

/// Counts instance sizes and pairwise intersections, ignoring voxels where
/// `roi` is 0. Processed in z-slabs that are merged afterwards.
pub fn overlap_table(
    gt: &LabelVolume,
    pred: &LabelVolume,
    roi: Option<&RoiMask>,
) -> Result<InstanceMatchTable> {
    gt.ensure_same_shape(pred)?;
    if let Some(roi) = roi {
        gt.ensure_same_shape(roi)?;
    }
    let [_, ny, nx] = gt.shape().0;
    let slab = ny * nx;
    let g = gt.data();
    let p = pred.data();
    let m = roi.map(|r| r.data());

    let partial = (0..gt.shape().0[0])
        .into_par_iter()
        .fold(Partial::default, |mut acc, z| {
            for i in z * slab..(z + 1) * slab {
                if m.is_some_and(|m| m[i] == 0) {
                    continue;
                }
                let (a, b) = (g[i], p[i]);
                if a != 0 {
                    *acc.gt.entry(a).or_insert(0) += 1;
                }
                if b != 0 {
                    *acc.pred.entry(b).or_insert(0) += 1;
                }
                if a != 0 && b != 0 {
                    *acc.pairs.entry((a, b)).or_insert(0) += 1;
                }
            }
            acc
        })
        .reduce(Partial::default, Partial::merge);

    Ok(InstanceMatchTable {
        gt_sizes: partial.gt.into_iter().collect(),
        pred_sizes: partial.pred.into_iter().collect(),
        overlaps: partial.pairs.into_iter().collect(),
    })
}

/// Outcome of matching at one IoU threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// (precision, recall) after each ranked prediction.
    pub pr_curve: Vec<(f64, f64)>,
}

/// Orders predictions by descending score, ties by ascending id.
pub fn rank(scores: &[(u32, f64)]) -> Vec<(u32, f64)> {
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Greedy score-ordered matching. A prediction is a true positive when its
/// best still-unmatched ground truth has IoU strictly above the threshold.
pub fn match_and_score(
    table: &InstanceMatchTable,
    iou_threshold: f64,
    scores: &[(u32, f64)],
) -> Result<MatchResult> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::InvalidParam(format!(
            "IoU threshold must be in (0, 1), got {iou_threshold}"
        )));
    }
    let score_of: HashMap<u32, f64> = scores.iter().copied().collect();
    if let Some(&missing) = table.pred_sizes.keys().find(|id| !score_of.contains_key(id)) {
        return Err(Error::MissingScore(missing));
    }
    let ranked: Vec<(u32, f64)> = rank(
        &table
            .pred_sizes
            .keys()
            .map(|&id| (id, score_of[&id]))
            .collect::<Vec<_>>(),
    );

    let mut candidates: HashMap<u32, Vec<u32>> = HashMap::new();
    for &(g, p) in table.overlaps.keys() {
        candidates.entry(p).or_default().push(g);
    }

    let n_gt = table.gt_sizes.len();
    let mut matched: HashMap<u32, bool> = HashMap::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut pr_curve = Vec::with_capacity(ranked.len());
    for &(p, _) in &ranked {
        let mut best: Option<(f64, u32)> = None;
        // candidates come from a BTreeMap walk, so gt ids ascend
        for &g in candidates.get(&p).map(Vec::as_slice).unwrap_or(&[]) {
            if matched.contains_key(&g) {
                continue;
            }
            let iou = table.iou(g, p);
            if best.is_none_or(|(b, _)| iou > b) {
                best = Some((iou, g));
            }
        }
        match best {
            Some((iou, g)) if iou > iou_threshold => {
                matched.insert(g, true);
                tp += 1;
            }
            _ => fp += 1,
        }
        let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
        pr_curve.push((tp as f64 / (tp + fp) as f64, recall));
    }
    Ok(MatchResult {
        tp,
        fp,
        fn_: n_gt - tp,
        pr_curve,
    })
}

/// Area under the monotone precision envelope.
///
/// With no ground truth the score is 1 when there are also no predictions
/// and 0 otherwise.
pub fn area_under_pr(pr_curve: &[(f64, f64)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return if pr_curve.is_empty() { 1.0 } else { 0.0 };
    }
    let mut precision: Vec<f64> = pr_curve.iter().map(|p| p.0).collect();
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (&(_, recall), &p) in pr_curve.iter().zip(&precision) {
        area += (recall - prev_recall) * p;
        prev_recall = recall;
    }
    area
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScore {
    pub iou_threshold: f64,
    pub ap: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct APReport {
    pub ap50: f64,
    pub ap75: f64,
    pub mean: f64,
    pub num_gt: usize,
    pub num_pred: usize,
    pub per_threshold: Vec<ThresholdScore>,
}

/// AP at 0.5 and 0.75 plus every threshold in `thresholds`.
///
/// Predictions are ranked with [`default_scores`] computed on the
/// ROI-masked prediction, using `distance` when given.
pub fn average_precision(
    gt: &LabelVolume,
    pred: &LabelVolume,
    roi: Option<&RoiMask>,
    distance: Option<&SignedDistVolume>,
    thresholds: &[f64],
) -> Result<APReport> {
    let table = overlap_table(gt, pred, roi)?;
    let masked_pred;
    let scored = match roi {
        Some(roi) => {
            masked_pred = crate::volume::apply_roi(pred, roi)?;
            &masked_pred
        }
        None => pred,
    };
    let scores = default_scores(scored, distance)?;
    report_from_table(&table, &scores, thresholds)
}

pub fn report_from_table(
    table: &InstanceMatchTable,
    scores: &[(u32, f64)],
    thresholds: &[f64],
) -> Result<APReport> {
    let n_gt = table.gt_sizes.len();
    let score_at = |t: f64| -> Result<ThresholdScore> {
        let m = match_and_score(table, t, scores)?;
        Ok(ThresholdScore {
            iou_threshold: t,
            ap: area_under_pr(&m.pr_curve, n_gt),
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
        })
    };
    let ap50 = score_at(0.5)?.ap;
    let ap75 = score_at(0.75)?.ap;
    let per_threshold = thresholds.iter().map(|&t| score_at(t)).collect::<Result<_>>()?;
    Ok(APReport {
        ap50,
        ap75,
        mean: (ap50 + ap75) / 2.0,
        num_gt: n_gt,
        num_pred: table.pred_sizes.len(),
        per_threshold,
    })
}

/// Confidence per predicted instance, in rank order: mean predicted
/// distance over the instance when `distance` is given, otherwise the
/// voxel count. Ties go to the smaller id.
pub fn default_scores(
    pred: &LabelVolume,
    distance: Option<&SignedDistVolume>,
) -> Result<Vec<(u32, f64)>> {
    let mut acc: BTreeMap<u32, (u64, f64)> = BTreeMap::new();
    match distance {
        Some(d) => {
            pred.ensure_same_shape(d)?;
            for (&l, &v) in pred.data().iter().zip(d.data()) {
                if l != 0 {
                    let e = acc.entry(l).or_insert((0, 0.0));
                    e.0 += 1;
                    e.1 += v as f64;
                }
            }
        }
        None => {
            for &l in pred.data() {
                if l != 0 {
                    acc.entry(l).or_insert((0, 0.0)).0 += 1;
                }
            }
        }
    }
    let scores: Vec<(u32, f64)> = acc
        .into_iter()
        .map(|(id, (n, sum))| {
            let s = if distance.is_some() { sum / n as f64 } else { n as f64 };
            (id, s)
        })
        .collect();
    Ok(rank(&scores))
}
