//! IoU, greedy matching, per-image average precision and dataset mAP.
//!
//! Evaluation follows the single-lesion-type ground truth of each image:
//! predictions are first filtered by `min_score`, then (optionally) reduced to
//! the lesion class the image was annotated for, so correct detections of the
//! other class are not counted as false positives. AP is computed per image
//! with all-point interpolation and mAP is the mean over evaluated images.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, Split};
use crate::error::{invalid, Error, Result};
use crate::instances::{InstanceAnnotation, LesionClass};
use crate::raster::{BBox, BinaryMask};
use crate::rle::Rle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouMode {
    #[default]
    Mask,
    Bbox,
}

impl FromStr for IouMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask" => Ok(IouMode::Mask),
            "bbox" => Ok(IouMode::Bbox),
            other => Err(invalid(format!("iou mode must be mask or bbox, got {other:?}"))),
        }
    }
}

/// A predicted lesion instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub class_id: LesionClass,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_rle: Option<Rle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
}

impl DetectionRecord {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::Validation(format!(
                "prediction on {:?} has score {} outside [0, 1]",
                self.image_id, self.score
            )));
        }
        match (&self.mask_rle, self.bbox) {
            (None, None) => {
                Err(Error::Validation(format!("prediction on {:?} has neither mask_rle nor bbox", self.image_id)))
            }
            (Some(m), Some(b)) => match m.bbox() {
                Ok(tight) if tight == b => Ok(()),
                Ok(tight) => Err(Error::Validation(format!(
                    "prediction on {:?}: bbox {b:?} is not the tight box {tight:?} of its mask",
                    self.image_id
                ))),
                Err(_) => {
                    Err(Error::Validation(format!("prediction on {:?} has an empty mask but a bbox", self.image_id)))
                }
            },
            _ => Ok(()),
        }
    }

    /// The stated bbox, or the tight box of the mask.
    pub fn effective_bbox(&self) -> Option<BBox> {
        self.bbox.or_else(|| self.mask_rle.as_ref().and_then(|m| m.bbox().ok()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    pub iou_mode: IouMode,
    /// Detections scoring below this are discarded before matching.
    pub min_score: f64,
    pub apply_type_filter: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { thresholds: vec![0.35, 0.50, 0.75], iou_mode: IouMode::Mask, min_score: 0.35, apply_type_filter: true }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(invalid("at least one IoU threshold is required"));
        }
        if self.thresholds.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(invalid(format!("IoU thresholds must be in (0, 1], got {:?}", self.thresholds)));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(format!("IoU thresholds must be strictly ascending, got {:?}", self.thresholds)));
        }
        if !(0.0..=1.0).contains(&self.min_score) {
            return Err(invalid(format!("min_score must be in [0, 1], got {}", self.min_score)));
        }
        Ok(())
    }
}

/// `|a ∩ b| / |a ∪ b|`.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(invalid(format!(
            "mask shapes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    if union == 0 {
        return Err(Error::UndefinedIou);
    }
    Ok(inter as f64 / union as f64)
}

/// IoU of encoded masks, computed on runs.
pub fn rle_iou(a: &Rle, b: &Rle) -> Result<f64> {
    if a.size != b.size {
        return Err(invalid(format!("mask sizes differ: {:?} vs {:?}", a.size, b.size)));
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return Err(Error::UndefinedIou);
    }
    Ok(inter as f64 / union as f64)
}

pub fn bbox_iou(a: BBox, b: BBox) -> f64 {
    let iw = a.right().min(b.right()).saturating_sub(a.x.max(b.x)) as u64;
    let ih = a.bottom().min(b.bottom()).saturating_sub(a.y.max(b.y)) as u64;
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Keeps only predictions of the lesion class annotated for the image.
pub fn filter_by_annotated_type(preds: &[DetectionRecord], hint: LesionClass) -> Vec<DetectionRecord> {
    preds.iter().filter(|p| p.class_id == hint).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedOutcome {
    /// Index into the prediction slice passed to [`match_detections`].
    pub pred_index: usize,
    /// Matched ground truth, `None` for a false positive.
    pub gt_index: Option<usize>,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// Outcomes in descending score order.
    pub ranked: Vec<RankedOutcome>,
    pub unmatched_gts: Vec<usize>,
}

impl Matching {
    pub fn true_positives(&self) -> usize {
        self.ranked.iter().filter(|o| o.gt_index.is_some()).count()
    }

    pub fn false_positives(&self) -> usize {
        self.ranked.len() - self.true_positives()
    }

    pub fn false_negatives(&self) -> usize {
        self.unmatched_gts.len()
    }

    /// TP flags in rank order.
    pub fn hits(&self) -> Vec<bool> {
        self.ranked.iter().map(|o| o.gt_index.is_some()).collect()
    }
}

fn pair_iou(pred: &DetectionRecord, gt: &InstanceAnnotation, mode: IouMode) -> Result<f64> {
    match mode {
        IouMode::Mask => {
            let m = pred.mask_rle.as_ref().ok_or_else(|| {
                Error::Validation(format!("mask IoU needs mask_rle on prediction for {:?}", pred.image_id))
            })?;
            rle_iou(m, &gt.mask_rle)
        }
        IouMode::Bbox => {
            let b = pred
                .effective_bbox()
                .ok_or_else(|| Error::Validation(format!("prediction on {:?} has no usable bbox", pred.image_id)))?;
            Ok(bbox_iou(b, gt.bbox))
        }
    }
}

/// Greedy matching of one image's predictions to its ground truth.
///
/// Predictions are visited by descending score (equal scores keep input
/// order). Each takes the still-unmatched ground truth of its class with the
/// highest IoU (lowest index on ties) when that IoU is at least
/// `iou_threshold`; otherwise it is a false positive.
pub fn match_detections(
    preds: &[DetectionRecord],
    gts: &[InstanceAnnotation],
    iou_threshold: f64,
    iou_mode: IouMode,
) -> Result<Matching> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    let mut taken = vec![false; gts.len()];
    let mut ranked = Vec::with_capacity(preds.len());
    for pi in order {
        let pred = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if taken[gi] || gt.class_id != pred.class_id {
                continue;
            }
            let iou = pair_iou(pred, gt, iou_mode)?;
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, iou)) if iou >= iou_threshold => {
                taken[gi] = true;
                ranked.push(RankedOutcome { pred_index: pi, gt_index: Some(gi), iou });
            }
            other => ranked.push(RankedOutcome { pred_index: pi, gt_index: None, iou: other.map_or(0.0, |b| b.1) }),
        }
    }
    let unmatched_gts = taken.iter().enumerate().filter(|(_, &t)| !t).map(|(i, _)| i).collect();
    Ok(Matching { ranked, unmatched_gts })
}

/// Area under the all-point interpolated precision/recall curve of a ranked
/// TP/FP sequence against `n_gt` ground-truth objects.
pub fn ap_from_hits(hits: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(hits.len());
    for (k, &hit) in hits.iter().enumerate() {
        tp += hit as usize;
        points.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
    }
    // precision envelope from the right
    for i in (0..points.len().saturating_sub(1)).rev() {
        points[i].1 = points[i].1.max(points[i + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &(recall, precision) in &points {
        if recall > prev_recall {
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
    }
    ap
}

/// Per-image AP at one IoU threshold. `None` when there is no ground truth:
/// such an image is excluded from the mean rather than scored.
pub fn average_precision(
    preds: &[DetectionRecord],
    gts: &[InstanceAnnotation],
    iou_threshold: f64,
    iou_mode: IouMode,
) -> Result<Option<f64>> {
    if gts.is_empty() {
        return Ok(None);
    }
    let m = match_detections(preds, gts, iou_threshold, iou_mode)?;
    Ok(Some(ap_from_hits(&m.hits(), gts.len())))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBreakdown {
    pub evaluated_images: usize,
    pub map_per_threshold: Vec<f64>,
    pub counts: Vec<MatchCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub iou_mode: IouMode,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub split: Option<Split>,
    pub evaluated_images: usize,
    /// Images without ground truth, left out of the mean.
    pub excluded_images: Vec<String>,
    /// AP per threshold for each evaluated image.
    pub per_image: BTreeMap<String, Vec<f64>>,
    /// Mean of `per_image` APs at each threshold; 0 when nothing was evaluated.
    pub map_per_threshold: Vec<f64>,
    pub per_class: BTreeMap<String, ClassBreakdown>,
    pub counts: Vec<MatchCounts>,
}

/// Order used before matching: score descending, then a content key, so the
/// result does not depend on the order predictions were listed in.
fn canonical_order(a: &DetectionRecord, b: &DetectionRecord) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.class_id.cmp(&b.class_id))
        .then(a.bbox.cmp(&b.bbox))
        .then(a.mask_rle.cmp(&b.mask_rle))
}

struct Accumulator {
    aps: Vec<Vec<f64>>,
    counts: Vec<MatchCounts>,
    images: usize,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self { aps: vec![Vec::new(); n], counts: vec![MatchCounts::default(); n], images: 0 }
    }

    fn add(&mut self, preds: &[DetectionRecord], gts: &[InstanceAnnotation], cfg: &EvalConfig) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(cfg.thresholds.len());
        for (t, &thr) in cfg.thresholds.iter().enumerate() {
            let m = match_detections(preds, gts, thr, cfg.iou_mode)?;
            let ap = ap_from_hits(&m.hits(), gts.len());
            self.aps[t].push(ap);
            self.counts[t].tp += m.true_positives();
            self.counts[t].fp += m.false_positives();
            self.counts[t].fn_ += m.false_negatives();
            row.push(ap);
        }
        self.images += 1;
        Ok(row)
    }

    fn means(&self) -> Vec<f64> {
        self.aps.iter().map(|v| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 }).collect()
    }
}

fn validate_predictions(manifest: &DatasetManifest, preds: &[DetectionRecord], cfg: &EvalConfig) -> Result<()> {
    let dims: HashMap<&str, [u32; 2]> =
        manifest.images.iter().map(|i| (i.image_id.as_str(), [i.height, i.width])).collect();
    for p in preds {
        let size = dims.get(p.image_id.as_str()).ok_or_else(|| Error::DanglingImageId(p.image_id.clone()))?;
        p.validate()?;
        if let Some(m) = &p.mask_rle {
            if m.size != *size {
                return Err(Error::Validation(format!(
                    "prediction mask size {:?} does not match image {:?} of size {size:?}",
                    m.size, p.image_id
                )));
            }
        }
        if cfg.iou_mode == IouMode::Mask && p.mask_rle.is_none() {
            return Err(Error::Validation(format!(
                "mask IoU mode needs mask_rle on every prediction (image {:?})",
                p.image_id
            )));
        }
    }
    Ok(())
}

/// Evaluates every image of the manifest.
pub fn evaluate_dataset(
    manifest: &DatasetManifest,
    predictions: &[DetectionRecord],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    evaluate_subset(manifest, predictions, cfg, None)
}

/// Evaluates the images of one split, or all images for `None`.
/// Predictions on images outside the split are ignored.
pub fn evaluate_subset(
    manifest: &DatasetManifest,
    predictions: &[DetectionRecord],
    cfg: &EvalConfig,
    split: Option<Split>,
) -> Result<EvalReport> {
    cfg.validate()?;
    manifest.validate()?;
    validate_predictions(manifest, predictions, cfg)?;

    let mut preds_by_image: HashMap<&str, Vec<DetectionRecord>> = HashMap::new();
    for p in predictions.iter().filter(|p| p.score >= cfg.min_score) {
        preds_by_image.entry(p.image_id.as_str()).or_default().push(p.clone());
    }
    let gts_by_image = manifest.annotations_by_image();

    let mut images: Vec<_> = manifest.images.iter().filter(|i| split.is_none_or(|s| i.split == s)).collect();
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let n = cfg.thresholds.len();
    let mut pooled = Accumulator::new(n);
    let mut per_class: BTreeMap<LesionClass, Accumulator> =
        LesionClass::ALL.iter().map(|&c| (c, Accumulator::new(n))).collect();
    let mut per_image = BTreeMap::new();
    let mut excluded_images = Vec::new();

    for img in images {
        let mut preds = preds_by_image.remove(img.image_id.as_str()).unwrap_or_default();
        if cfg.apply_type_filter {
            preds = filter_by_annotated_type(&preds, img.source_class_hint);
        }
        preds.sort_by(canonical_order);
        let gts: Vec<InstanceAnnotation> = gts_by_image
            .get(img.image_id.as_str())
            .map(|v| v.iter().map(|a| (*a).clone()).collect())
            .unwrap_or_default();
        if gts.is_empty() {
            excluded_images.push(img.image_id.clone());
            continue;
        }
        let row = pooled.add(&preds, &gts, cfg)?;
        per_image.insert(img.image_id.clone(), row);

        for (class, acc) in per_class.iter_mut() {
            let class_gts: Vec<InstanceAnnotation> = gts.iter().filter(|g| g.class_id == *class).cloned().collect();
            if class_gts.is_empty() {
                continue;
            }
            let class_preds: Vec<DetectionRecord> = preds.iter().filter(|p| p.class_id == *class).cloned().collect();
            acc.add(&class_preds, &class_gts, cfg)?;
        }
    }

    Ok(EvalReport {
        thresholds: cfg.thresholds.clone(),
        iou_mode: cfg.iou_mode,
        split,
        evaluated_images: pooled.images,
        excluded_images,
        per_image,
        map_per_threshold: pooled.means(),
        per_class: per_class
            .into_iter()
            .map(|(c, acc)| {
                (
                    c.name().to_owned(),
                    ClassBreakdown {
                        evaluated_images: acc.images,
                        map_per_threshold: acc.means(),
                        counts: acc.counts.clone(),
                    },
                )
            })
            .collect(),
        counts: pooled.counts,
    })
}

/// Column label for a threshold, e.g. `0.35 -> "mAP35"`.
pub fn threshold_label(t: f64) -> String {
    format!("mAP{}", (t * 100.0).round() as u32)
}

/// Table with one row per `(label, report)`: `split,mAP35,mAP50,mAP75`.
pub fn reports_to_csv(rows: &[(String, &EvalReport)]) -> String {
    let mut out = String::from("split");
    if let Some((_, first)) = rows.first() {
        for &t in &first.thresholds {
            out.push(',');
            out.push_str(&threshold_label(t));
        }
    }
    out.push('\n');
    for (label, report) in rows {
        out.push_str(label);
        for v in &report.map_per_threshold {
            let _ = write!(out, ",{v:.4}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ImageEntry;
    use proptest::prelude::*;

    fn rect_mask(w: usize, h: usize, x0: usize, y0: usize, rw: usize, rh: usize) -> BinaryMask {
        let mut m = BinaryMask::new(w, h);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                m.set(x, y, true);
            }
        }
        m
    }

    fn gt(id: u32, class: LesionClass, m: &BinaryMask) -> InstanceAnnotation {
        InstanceAnnotation::from_rle(id, "img", class, Rle::encode(m)).unwrap()
    }

    fn pred(class: LesionClass, score: f64, m: &BinaryMask) -> DetectionRecord {
        let rle = Rle::encode(m);
        DetectionRecord { image_id: "img".into(), class_id: class, score, bbox: rle.bbox().ok(), mask_rle: Some(rle) }
    }

    const EX: LesionClass = LesionClass::Exudate;
    const MA: LesionClass = LesionClass::Microaneurysm;

    #[test]
    fn iou_basic_cases() {
        let a = rect_mask(40, 40, 5, 5, 10, 10);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &rect_mask(40, 40, 25, 25, 5, 5)).unwrap(), 0.0);
        let shifted = rect_mask(40, 40, 10, 5, 10, 10);
        // pixel count: overlap 5x10 = 50, union 150
        let inter = a.data().iter().zip(shifted.data()).filter(|(x, y)| **x && **y).count();
        let union = a.data().iter().zip(shifted.data()).filter(|(x, y)| **x || **y).count();
        assert_eq!((inter, union), (50, 150));
        assert_eq!(mask_iou(&a, &shifted).unwrap(), 50.0 / 150.0);
        assert_eq!(mask_iou(&a, &shifted).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn iou_errors() {
        assert!(matches!(mask_iou(&BinaryMask::new(3, 3), &BinaryMask::new(3, 3)), Err(Error::UndefinedIou)));
        assert!(matches!(mask_iou(&BinaryMask::new(3, 3), &BinaryMask::new(3, 4)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn bbox_iou_same_shapes() {
        let a = BBox::new(5, 5, 10, 10);
        assert_eq!(bbox_iou(a, a), 1.0);
        assert_eq!(bbox_iou(a, BBox::new(25, 25, 5, 5)), 0.0);
        assert_eq!(bbox_iou(a, BBox::new(10, 5, 10, 10)), 1.0 / 3.0);
        assert_eq!(bbox_iou(a, BBox::new(15, 5, 3, 3)), 0.0);
    }

    #[test]
    fn type_filter() {
        let m = rect_mask(8, 8, 1, 1, 2, 2);
        let preds = vec![pred(EX, 0.9, &m), pred(MA, 0.8, &m), pred(EX, 0.7, &m)];
        assert_eq!(filter_by_annotated_type(&preds, EX).len(), 2);
        let only_ex = vec![pred(EX, 0.9, &m)];
        assert!(filter_by_annotated_type(&only_ex, MA).is_empty());
    }

    #[test]
    fn type_filter_matches_linear_scan() {
        let m = rect_mask(8, 8, 1, 1, 2, 2);
        let classes = [EX, MA, MA, EX, EX, MA, EX, MA, MA, EX];
        let preds: Vec<_> = classes.iter().enumerate().map(|(i, &c)| pred(c, i as f64 / 10.0, &m)).collect();
        let mut brute = Vec::new();
        for p in &preds {
            if p.class_id == MA {
                brute.push(p.clone());
            }
        }
        assert_eq!(filter_by_annotated_type(&preds, MA), brute);
    }

    /// A 10x10 ground truth and a prediction with IoU exactly 0.6:
    /// 10x10 vs 8x10 inside it would be 0.8, so use 6x10 inside -> 60/100.
    fn iou_six_tenths() -> (InstanceAnnotation, DetectionRecord) {
        let g = rect_mask(40, 40, 5, 5, 10, 10);
        let p = rect_mask(40, 40, 5, 5, 6, 10);
        assert_eq!(mask_iou(&g, &p).unwrap(), 0.6);
        (gt(1, EX, &g), pred(EX, 0.9, &p))
    }

    #[test]
    fn single_pair_threshold_cases() {
        let (g, p) = iou_six_tenths();
        let m = match_detections(std::slice::from_ref(&p), std::slice::from_ref(&g), 0.5, IouMode::Mask).unwrap();
        assert_eq!((m.true_positives(), m.false_positives(), m.false_negatives()), (1, 0, 0));
        let m = match_detections(std::slice::from_ref(&p), std::slice::from_ref(&g), 0.75, IouMode::Mask).unwrap();
        assert_eq!((m.true_positives(), m.false_positives(), m.false_negatives()), (0, 1, 1));
        assert_eq!(
            average_precision(std::slice::from_ref(&p), std::slice::from_ref(&g), 0.5, IouMode::Mask).unwrap(),
            Some(1.0)
        );
        assert_eq!(average_precision(&[p], &[g], 0.75, IouMode::Mask).unwrap(), Some(0.0));
    }

    #[test]
    fn one_gt_two_preds() {
        let g = rect_mask(20, 20, 2, 2, 6, 6);
        let preds = vec![pred(EX, 0.4, &g), pred(EX, 0.9, &g)];
        let m = match_detections(&preds, &[gt(1, EX, &g)], 0.5, IouMode::Mask).unwrap();
        assert_eq!(m.ranked[0], RankedOutcome { pred_index: 1, gt_index: Some(0), iou: 1.0 });
        assert_eq!(m.ranked[1].gt_index, None);
    }

    #[test]
    fn no_preds_all_false_negatives() {
        let gts = vec![gt(1, EX, &rect_mask(9, 9, 0, 0, 2, 2)), gt(2, EX, &rect_mask(9, 9, 5, 5, 2, 2))];
        let m = match_detections(&[], &gts, 0.5, IouMode::Mask).unwrap();
        assert_eq!(m.false_negatives(), 2);
        assert_eq!(average_precision(&[], &gts, 0.5, IouMode::Mask).unwrap(), Some(0.0));
    }

    #[test]
    fn class_mismatch_never_matches() {
        let g = rect_mask(9, 9, 1, 1, 3, 3);
        let m = match_detections(&[pred(MA, 1.0, &g)], &[gt(1, EX, &g)], 0.5, IouMode::Mask).unwrap();
        assert_eq!((m.true_positives(), m.false_negatives()), (0, 1));
    }

    #[test]
    fn ap_hand_cases() {
        assert_eq!(ap_from_hits(&[true, true], 2), 1.0);
        assert_eq!(ap_from_hits(&[], 2), 0.0);
        // TP, FP, TP over 2 GT: 0.5 * 1 + 0.5 * 2/3
        assert!((ap_from_hits(&[true, false, true], 2) - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
        assert!((ap_from_hits(&[true, false, true], 2) - 0.833_333_333_3).abs() < 1e-9);
        assert_eq!(ap_from_hits(&[false, true], 1), 0.5);
    }

    /// Brute force: for each recall level reached, max precision over all
    /// prefixes at or beyond it, summed over recall increments.
    fn brute_ap(hits: &[bool], n_gt: usize) -> f64 {
        let prefix = |k: usize| {
            let tp = hits[..k].iter().filter(|&&h| h).count();
            (tp as f64 / n_gt as f64, tp as f64 / k as f64)
        };
        let mut ap = 0.0;
        let mut prev = 0.0;
        for k in 1..=hits.len() {
            let (r, _) = prefix(k);
            if r > prev {
                let best = (k..=hits.len()).map(|j| prefix(j).1).fold(0.0, f64::max);
                ap += (r - prev) * best;
                prev = r;
            }
        }
        ap
    }

    #[test]
    fn empty_gt_is_excluded() {
        assert_eq!(average_precision(&[], &[], 0.5, IouMode::Mask).unwrap(), None);
    }

    fn manifest_one(hint: LesionClass, gts: Vec<InstanceAnnotation>) -> DatasetManifest {
        DatasetManifest::new(
            vec![ImageEntry {
                image_id: "img".into(),
                file_name: "img.png".into(),
                width: 40,
                height: 40,
                source_class_hint: hint,
                split: Split::Test,
            }],
            gts,
        )
    }

    #[test]
    fn dataset_perfect_and_empty() {
        let a = rect_mask(40, 40, 2, 2, 4, 4);
        let b = rect_mask(40, 40, 12, 12, 6, 3);
        let gts = vec![gt(1, EX, &a), gt(2, EX, &b)];
        let m = manifest_one(EX, gts);
        let preds = vec![pred(EX, 1.0, &a), pred(EX, 1.0, &b)];
        let r = evaluate_dataset(&m, &preds, &EvalConfig::default()).unwrap();
        assert_eq!(r.map_per_threshold, vec![1.0, 1.0, 1.0]);
        let r = evaluate_dataset(&m, &[], &EvalConfig::default()).unwrap();
        assert_eq!(r.map_per_threshold, vec![0.0, 0.0, 0.0]);
        assert_eq!(r.counts[0], MatchCounts { tp: 0, fp: 0, fn_: 2 });
    }

    #[test]
    fn type_filter_removes_other_class_false_positives() {
        let a = rect_mask(40, 40, 2, 2, 4, 4);
        let other = rect_mask(40, 40, 20, 20, 3, 3);
        let m = manifest_one(EX, vec![gt(1, EX, &a)]);
        let preds = vec![pred(MA, 0.95, &other), pred(EX, 0.9, &a)];
        let filtered = evaluate_dataset(&m, &preds, &EvalConfig::default()).unwrap();
        assert_eq!(filtered.map_per_threshold[0], 1.0);
        let unfiltered =
            evaluate_dataset(&m, &preds, &EvalConfig { apply_type_filter: false, ..Default::default() }).unwrap();
        assert_eq!(unfiltered.map_per_threshold[0], 0.5);
    }

    #[test]
    fn min_score_filter() {
        let a = rect_mask(40, 40, 2, 2, 4, 4);
        let m = manifest_one(EX, vec![gt(1, EX, &a)]);
        let r = evaluate_dataset(&m, &[pred(EX, 0.2, &a)], &EvalConfig::default()).unwrap();
        assert_eq!(r.map_per_threshold[0], 0.0);
    }

    #[test]
    fn dangling_prediction_rejected() {
        let a = rect_mask(40, 40, 2, 2, 4, 4);
        let m = manifest_one(EX, vec![gt(1, EX, &a)]);
        let mut p = pred(EX, 0.9, &a);
        p.image_id = "nope".into();
        assert!(matches!(evaluate_dataset(&m, &[p], &EvalConfig::default()), Err(Error::DanglingImageId(_))));
    }

    #[test]
    fn bbox_mode_accepts_box_only_predictions() {
        let a = rect_mask(40, 40, 2, 2, 4, 4);
        let m = manifest_one(EX, vec![gt(1, EX, &a)]);
        let p = DetectionRecord {
            image_id: "img".into(),
            class_id: EX,
            score: 0.9,
            mask_rle: None,
            bbox: Some(BBox::new(2, 2, 4, 4)),
        };
        let cfg = EvalConfig { iou_mode: IouMode::Bbox, ..Default::default() };
        assert_eq!(evaluate_dataset(&m, std::slice::from_ref(&p), &cfg).unwrap().map_per_threshold, vec![1.0; 3]);
        assert!(evaluate_dataset(&m, &[p], &EvalConfig::default()).is_err());
    }

    #[test]
    fn record_validation() {
        let a = rect_mask(40, 40, 2, 2, 4, 4);
        let mut p = pred(EX, 0.5, &a);
        p.validate().unwrap();
        p.bbox = Some(BBox::new(2, 2, 5, 4));
        assert!(p.validate().is_err());
        p.bbox = None;
        p.score = 1.5;
        assert!(p.validate().is_err());
        p.score = 0.5;
        p.mask_rle = None;
        assert!(p.validate().is_err());
    }

    #[test]
    fn eval_config_validation_and_json() {
        EvalConfig::default().validate().unwrap();
        assert!(EvalConfig { thresholds: vec![0.5, 0.35], ..Default::default() }.validate().is_err());
        assert!(EvalConfig { thresholds: vec![0.0], ..Default::default() }.validate().is_err());
        assert!(EvalConfig { thresholds: vec![], ..Default::default() }.validate().is_err());
        let json = serde_json::to_string(&EvalConfig::default()).unwrap();
        assert_eq!(
            json,
            r#"{"thresholds":[0.35,0.5,0.75],"iou_mode":"mask","min_score":0.35,"apply_type_filter":true}"#
        );
    }

    #[test]
    fn csv_layout() {
        let a = rect_mask(40, 40, 2, 2, 4, 4);
        let m = manifest_one(EX, vec![gt(1, EX, &a)]);
        let r = evaluate_dataset(&m, &[pred(EX, 1.0, &a)], &EvalConfig::default()).unwrap();
        let csv = reports_to_csv(&[("test".into(), &r)]);
        assert_eq!(csv, "split,mAP35,mAP50,mAP75\ntest,1.0000,1.0000,1.0000\n");
    }

    /// Random scene: a few disjoint GT squares and predictions jittered around them.
    fn scene() -> impl Strategy<Value = (Vec<InstanceAnnotation>, Vec<DetectionRecord>)> {
        (
            proptest::collection::vec((0usize..5, 0usize..5, 2usize..5), 1..4),
            proptest::collection::vec((0usize..4, -2isize..3, -2isize..3, 1usize..6, 0u32..100, any::<bool>()), 0..8),
        )
            .prop_map(|(gspecs, pspecs)| {
                let gts: Vec<_> = gspecs
                    .iter()
                    .enumerate()
                    .map(|(i, &(gx, gy, s))| gt(i as u32 + 1, EX, &rect_mask(40, 40, i * 12 + gx, gy + 10, s, s)))
                    .collect();
                let preds = pspecs
                    .iter()
                    .map(|&(target, dx, dy, s, score, cls)| {
                        let b = gts[target % gts.len()].bbox;
                        let x = (b.x as isize + dx).clamp(0, 30) as usize;
                        let y = (b.y as isize + dy).clamp(0, 30) as usize;
                        pred(if cls { EX } else { MA }, score as f64 / 100.0, &rect_mask(40, 40, x, y, s, s))
                    })
                    .collect();
                (gts, preds)
            })
    }

    proptest! {
        #[test]
        fn ap_matches_brute_force(hits in proptest::collection::vec(any::<bool>(), 0..20), extra in 0usize..5) {
            let n_gt = hits.iter().filter(|&&h| h).count() + extra;
            prop_assume!(n_gt > 0);
            prop_assert!((ap_from_hits(&hits, n_gt) - brute_ap(&hits, n_gt)).abs() < 1e-12);
        }

        #[test]
        fn mask_iou_properties(seed in any::<u64>(), w in 1usize..20, h in 1usize..20) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let a = BinaryMask::from_vec(w, h, (0..w * h).map(|_| rng.chance(0.4)).collect()).unwrap();
            let b = BinaryMask::from_vec(w, h, (0..w * h).map(|_| rng.chance(0.4)).collect()).unwrap();
            if let Ok(v) = mask_iou(&a, &b) {
                prop_assert_eq!(v, mask_iou(&b, &a).unwrap());
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(v, rle_iou(&Rle::encode(&a), &Rle::encode(&b)).unwrap());
            }
            if !a.is_empty() {
                prop_assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
            }
        }

        #[test]
        fn duplicate_of_matched_tp_never_raises_ap((gts, preds) in scene(), which in 0usize..8) {
            let m = manifest_one(EX, gts.clone());
            let cfg = EvalConfig { min_score: 0.0, ..Default::default() };
            let base = evaluate_dataset(&m, &preds, &cfg).unwrap();
            for (t, &thr) in cfg.thresholds.iter().enumerate() {
                let mut sorted = preds.clone();
                sorted.sort_by(canonical_order);
                let filtered = filter_by_annotated_type(&sorted, EX);
                let matching = match_detections(&filtered, &gts, thr, IouMode::Mask).unwrap();
                let tps: Vec<_> = matching.ranked.iter().filter(|o| o.gt_index.is_some()).collect();
                if tps.is_empty() {
                    continue;
                }
                let dup = filtered[tps[which % tps.len()].pred_index].clone();
                let mut more = preds.clone();
                more.push(dup);
                let after = evaluate_dataset(&m, &more, &cfg).unwrap();
                prop_assert!(after.map_per_threshold[t] <= base.map_per_threshold[t] + 1e-12);
            }
        }

        #[test]
        fn permutation_invariant((gts, preds) in scene(), seed in any::<u64>()) {
            let m = manifest_one(EX, gts);
            let cfg = EvalConfig { min_score: 0.0, ..Default::default() };
            let mut shuffled = preds.clone();
            crate::rng::SplitMix64::new(seed).shuffle(&mut shuffled);
            prop_assert_eq!(evaluate_dataset(&m, &preds, &cfg).unwrap(), evaluate_dataset(&m, &shuffled, &cfg).unwrap());
        }

        #[test]
        fn map_monotone_in_threshold((gts, preds) in scene()) {
            let m = manifest_one(EX, gts);
            let cfg = EvalConfig { min_score: 0.0, ..Default::default() };
            let r = evaluate_dataset(&m, &preds, &cfg).unwrap();
            prop_assert!(r.map_per_threshold.windows(2).all(|w| w[0] >= w[1]));
            for v in &r.map_per_threshold {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }
}
