//! Detection scoring, matching against ground truth, and mAP in Default
//! (all test images) and Known-Object (images containing the object) modes.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::features::{iou, BoundingBox, GroundTruth, PairSample, Vocabulary};
use crate::network::{score_hoi, GraphMode, PdNet};
use crate::scalar::Scalar;
use crate::training::PriorCache;

pub const IOU_THRESHOLD: f64 = 0.5;
const SCORE_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    #[serde(rename = "image")]
    pub image_id: String,
    pub verb: String,
    pub object: String,
    pub human_box: BoundingBox,
    pub object_box: BoundingBox,
    pub score: f64,
}

pub type Category = (String, String);

/// Scores every (test pair, verb) candidate. Outside zero-shot mode only
/// verbs the model was trained on for the pair's object are scored; in
/// zero-shot mode every vocabulary verb valid for the object is, with unseen
/// objects routed to a classifier slot.
pub fn detect<T: Scalar>(
    model: &PdNet<T>,
    pairs: &[PairSample],
    embeddings: &EmbeddingTable,
    vocabulary: &Vocabulary,
    zero_shot: bool,
) -> Result<Vec<DetectionRecord>> {
    let graph = model.graph(GraphMode::Infer)?;
    let mut known: HashMap<&str, Vec<&str>> = HashMap::new();
    for e in &model.index.entries {
        known
            .entry(e.object.as_str())
            .or_default()
            .push(e.verb.as_str());
    }
    let mut priors = PriorCache::default();
    let mut pending = Vec::new();
    let mut rows = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let object = pair.object.category.as_str();
        let verbs: Vec<String> = if zero_shot {
            vocabulary.verbs_for(object)
        } else {
            let mut v: Vec<String> = known
                .get(object)
                .map(|v| v.iter().map(|s| s.to_string()).collect())
                .unwrap_or_default();
            v.sort();
            v.dedup();
            v
        };
        for verb in verbs {
            let mut row = model.row(pair, &verb, embeddings, zero_shot)?;
            row.prior = priors.get(embeddings, &verb, object)?.to_vec();
            rows.push(row);
            pending.push((i, verb));
        }
    }
    let mut out = Vec::with_capacity(rows.len());
    for (chunk_rows, chunk_meta) in rows.chunks(SCORE_BATCH).zip(pending.chunks(SCORE_BATCH)) {
        let s_pd = model.classify_rows(&graph, chunk_rows)?;
        for (p, (i, verb)) in s_pd.into_iter().zip(chunk_meta) {
            let pair = &pairs[*i];
            out.push(DetectionRecord {
                image_id: pair.image_id.clone(),
                verb: verb.clone(),
                object: pair.object.category.clone(),
                human_box: pair.human.bbox,
                object_box: pair.object.bbox,
                score: score_hoi(pair.human.score, pair.object.score, p, pair.interactiveness)?,
            });
        }
    }
    Ok(out)
}

/// Greedy matching of score-ordered detections of one category. A detection
/// is a true positive when an unmatched ground truth in the same image has
/// `min(IoU_human, IoU_object) >= threshold`; the best such ground truth is
/// taken, earlier ones winning ties.
pub fn match_detections(
    detections: &[&DetectionRecord],
    truths: &[&GroundTruth],
    threshold: f64,
) -> Vec<bool> {
    let mut used = vec![false; truths.len()];
    let mut by_image: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, g) in truths.iter().enumerate() {
        by_image.entry(g.image_id.as_str()).or_default().push(j);
    }
    detections
        .iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for &j in by_image
                .get(d.image_id.as_str())
                .map_or(&[][..], Vec::as_slice)
            {
                if used[j] {
                    continue;
                }
                let g = truths[j];
                let m = iou(&d.human_box, &g.human_box).min(iou(&d.object_box, &g.object_box));
                if m >= threshold && best.is_none_or(|(_, b)| m > b) {
                    best = Some((j, m));
                }
            }
            match best {
                Some((j, _)) => {
                    used[j] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Area under the precision-recall curve with precision made monotone from
/// the right, evaluated at every true positive. `None` when the category has
/// neither ground truth nor detections.
pub fn average_precision(flags: &[bool], n_gt: usize) -> Result<Option<f64>> {
    let tp_total = flags.iter().filter(|&&f| f).count();
    if tp_total > n_gt {
        return Err(Error::invalid(format!(
            "{tp_total} true positives for {n_gt} ground truths"
        )));
    }
    if n_gt == 0 {
        return Ok(if flags.is_empty() { None } else { Some(0.0) });
    }
    let mut precision = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (k, &f) in flags.iter().enumerate() {
        tp += usize::from(f);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let ap = flags
        .iter()
        .zip(&precision)
        .filter(|(f, _)| **f)
        .map(|(_, p)| p)
        .sum::<f64>()
        / n_gt as f64;
    Ok(Some(ap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Every test image counts for every category.
    #[serde(rename = "DT")]
    Default,
    /// Only images whose ground truth contains the category's object.
    #[serde(rename = "KO")]
    KnownObject,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DT" | "DEFAULT" => Ok(Mode::Default),
            "KO" | "KNOWN-OBJECT" => Ok(Mode::KnownObject),
            other => Err(Error::invalid(format!("unknown evaluation mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAp {
    pub verb: String,
    pub object: String,
    pub n_gt: usize,
    pub rare: bool,
    /// Fractions in [0, 1]; `None` when excluded.
    pub ap_dt: Option<f64>,
    pub ap_ko: Option<f64>,
}

impl CategoryAp {
    pub fn ap(&self, mode: Mode) -> Option<f64> {
        match mode {
            Mode::Default => self.ap_dt,
            Mode::KnownObject => self.ap_ko,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub categories: Vec<CategoryAp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMap {
    pub full: Option<f64>,
    pub rare: Option<f64>,
    pub non_rare: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl EvalReport {
    /// Mean AP in percent over the categories accepted by `filter`.
    pub fn map_where(&self, mode: Mode, filter: impl Fn(&CategoryAp) -> bool) -> Option<f64> {
        mean(
            self.categories
                .iter()
                .filter(|c| filter(c))
                .filter_map(|c| c.ap(mode)),
        )
        .map(|m| 100.0 * m)
    }

    pub fn map(&self, mode: Mode) -> SplitMap {
        SplitMap {
            full: self.map_where(mode, |_| true),
            rare: self.map_where(mode, |c| c.rare),
            non_rare: self.map_where(mode, |c| !c.rare),
        }
    }

    /// Mean AP in percent per verb.
    pub fn per_verb(&self, mode: Mode) -> BTreeMap<String, f64> {
        let verbs: BTreeSet<&str> = self.categories.iter().map(|c| c.verb.as_str()).collect();
        verbs
            .into_iter()
            .filter_map(|v| {
                self.map_where(mode, |c| c.verb == v)
                    .map(|m| (v.to_owned(), m))
            })
            .collect()
    }
}

fn sorted_by_score<'a>(dets: &[&'a DetectionRecord]) -> Vec<&'a DetectionRecord> {
    let mut v = dets.to_vec();
    // stable: equal scores keep input order
    v.sort_by(|a, b| b.score.total_cmp(&a.score));
    v
}

/// AP of one category under `mode`.
pub fn category_ap(
    mode: Mode,
    category: &Category,
    detections: &[&DetectionRecord],
    truths: &[&GroundTruth],
    images_with_object: &HashSet<&str>,
) -> Result<Option<f64>> {
    let dets: Vec<&DetectionRecord> = match mode {
        Mode::Default => detections.to_vec(),
        Mode::KnownObject => detections
            .iter()
            .copied()
            .filter(|d| images_with_object.contains(d.image_id.as_str()))
            .collect(),
    };
    let dets = sorted_by_score(&dets);
    let flags = match_detections(&dets, truths, IOU_THRESHOLD);
    average_precision(&flags, truths.len())
        .map_err(|e| Error::invalid(format!("category ({}, {}): {e}", category.0, category.1)))
}

/// Per-category AP in both modes over `categories`. Detections of other
/// categories are rejected; ground truth of other categories is ignored.
pub fn evaluate(
    detections: &[DetectionRecord],
    truths: &[GroundTruth],
    categories: &BTreeSet<Category>,
    rare: &BTreeSet<Category>,
) -> Result<EvalReport> {
    let mut dets: BTreeMap<Category, Vec<&DetectionRecord>> = BTreeMap::new();
    for (i, d) in detections.iter().enumerate() {
        let key = (d.verb.clone(), d.object.clone());
        if !categories.contains(&key) {
            return Err(Error::invalid(format!(
                "detection {i}: unknown category ({}, {})",
                d.verb, d.object
            )));
        }
        if !(0.0..=1.0).contains(&d.score) {
            return Err(Error::invalid(format!(
                "detection {i}: score {} outside [0, 1]",
                d.score
            )));
        }
        dets.entry(key).or_default().push(d);
    }
    let mut gts: BTreeMap<Category, Vec<&GroundTruth>> = BTreeMap::new();
    let mut images_by_object: HashMap<&str, HashSet<&str>> = HashMap::new();
    for g in truths {
        images_by_object
            .entry(g.object.as_str())
            .or_default()
            .insert(g.image_id.as_str());
        gts.entry((g.verb.clone(), g.object.clone()))
            .or_default()
            .push(g);
    }
    let empty_images = HashSet::new();
    let mut out = Vec::with_capacity(categories.len());
    for c in categories {
        let d = dets.get(c).map_or(&[][..], Vec::as_slice);
        let t = gts.get(c).map_or(&[][..], Vec::as_slice);
        let images = images_by_object.get(c.1.as_str()).unwrap_or(&empty_images);
        out.push(CategoryAp {
            verb: c.0.clone(),
            object: c.1.clone(),
            n_gt: t.len(),
            rare: rare.contains(c),
            ap_dt: category_ap(Mode::Default, c, d, t, images)?,
            ap_ko: category_ap(Mode::KnownObject, c, d, t, images)?,
        });
    }
    Ok(EvalReport { categories: out })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{:.4}", 100.0 * x))
}

fn pct_already(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.4}"))
}

/// Report text: one row per category (`category, n_gt, AP_DT, AP_KO`, APs in
/// percent) followed by Full, Rare and Non-Rare summary rows.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    let dt = report.map(Mode::Default);
    let ko = report.map(Mode::KnownObject);
    let n_gt = |f: &dyn Fn(&CategoryAp) -> bool| -> usize {
        report
            .categories
            .iter()
            .filter(|c| f(c))
            .map(|c| c.n_gt)
            .sum()
    };
    let summary = [
        ("Full", n_gt(&|_| true), dt.full, ko.full),
        ("Rare", n_gt(&|c| c.rare), dt.rare, ko.rare),
        ("Non-Rare", n_gt(&|c| !c.rare), dt.non_rare, ko.non_rare),
    ];
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str("category,n_gt,AP_DT,AP_KO\n");
            if report.categories.is_empty() {
                return out;
            }
            for c in &report.categories {
                writeln!(
                    out,
                    "{} {},{},{},{}",
                    c.verb,
                    c.object,
                    c.n_gt,
                    pct(c.ap_dt),
                    pct(c.ap_ko)
                )
                .expect("string write");
            }
            for (name, n, d, k) in summary {
                writeln!(out, "{name},{n},{},{}", pct_already(d), pct_already(k))
                    .expect("string write");
            }
        }
        ReportFormat::Markdown => {
            out.push_str("| category | n_gt | AP_DT | AP_KO |\n|---|---:|---:|---:|\n");
            if report.categories.is_empty() {
                return out;
            }
            for c in &report.categories {
                writeln!(
                    out,
                    "| {} {} | {} | {} | {} |",
                    c.verb,
                    c.object,
                    c.n_gt,
                    pct(c.ap_dt),
                    pct(c.ap_ko)
                )
                .expect("string write");
            }
            for (name, n, d, k) in summary {
                writeln!(
                    out,
                    "| **{name}** | {n} | {} | {} |",
                    pct_already(d),
                    pct_already(k)
                )
                .expect("string write");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn gt(image: &str, h: BoundingBox, o: BoundingBox) -> GroundTruth {
        GroundTruth {
            image_id: image.into(),
            verb: "ride".into(),
            object: "horse".into(),
            human_box: h,
            object_box: o,
        }
    }

    fn det(image: &str, h: BoundingBox, o: BoundingBox, score: f64) -> DetectionRecord {
        DetectionRecord {
            image_id: image.into(),
            verb: "ride".into(),
            object: "horse".into(),
            human_box: h,
            object_box: o,
            score,
        }
    }

    #[test]
    fn hand_pinned_ap() {
        assert_eq!(average_precision(&[true], 1).unwrap(), Some(1.0));
        assert_eq!(average_precision(&[false, true], 1).unwrap(), Some(0.5));
        assert_eq!(average_precision(&[true, false], 2).unwrap(), Some(0.5));
        assert_eq!(average_precision(&[], 0).unwrap(), None);
        assert_eq!(average_precision(&[false], 0).unwrap(), Some(0.0));
        assert!(average_precision(&[true, true], 1).is_err());
    }

    #[test]
    fn single_match_rule() {
        let h = bx(0.0, 0.0, 10.0, 10.0);
        let o = bx(20.0, 0.0, 30.0, 10.0);
        let g = gt("a", h, o);
        let d1 = det("a", h, o, 0.9);
        let d2 = det("a", h, o, 0.8);
        assert_eq!(match_detections(&[&d1, &d2], &[&g], 0.5), vec![true, false]);
    }

    #[test]
    fn both_boxes_must_match() {
        let h = bx(0.0, 0.0, 10.0, 10.0);
        let o = bx(20.0, 0.0, 30.0, 10.0);
        let g = gt("a", h, o);
        // human IoU 0.8, object IoU about 0.3
        let d = det(
            "a",
            bx(0.0, 0.0, 10.0, 8.0),
            bx(25.385, 0.0, 35.385, 10.0),
            1.0,
        );
        assert!((iou(&d.human_box, &h) - 0.8).abs() < 1e-12);
        assert!(iou(&d.object_box, &o) < 0.31);
        assert_eq!(match_detections(&[&d], &[&g], 0.5), vec![false]);
    }

    #[test]
    fn threshold_is_inclusive() {
        let h = bx(0.0, 0.0, 10.0, 10.0);
        let g = gt("a", h, h);
        // shifted by 10/3 gives IoU exactly 0.5
        let s = bx(10.0 / 3.0, 0.0, 10.0 + 10.0 / 3.0, 10.0);
        let m = iou(&s, &h);
        let d = det("a", s, s, 1.0);
        assert_eq!(match_detections(&[&d], &[&g], m), vec![true]);
    }

    #[test]
    fn perfect_detections_score_full_map() {
        let h = bx(0.0, 0.0, 10.0, 10.0);
        let o = bx(5.0, 5.0, 20.0, 20.0);
        let truths = vec![gt("a", h, o), gt("b", h, o)];
        let dets = vec![det("a", h, o, 1.0), det("b", h, o, 1.0)];
        let cats = BTreeSet::from([("ride".to_owned(), "horse".to_owned())]);
        let r = evaluate(&dets, &truths, &cats, &BTreeSet::new()).unwrap();
        assert_eq!(r.map(Mode::Default).full, Some(100.0));
        assert_eq!(r.map(Mode::KnownObject).full, Some(100.0));
        assert_eq!(r.map(Mode::Default).rare, None);
    }

    #[test]
    fn known_object_mode_drops_foreign_images() {
        let h = bx(0.0, 0.0, 10.0, 10.0);
        let o = bx(5.0, 5.0, 20.0, 20.0);
        let truths = vec![gt("a", h, o)];
        let dets = vec![det("b", h, o, 0.9), det("a", h, o, 0.5)];
        let cats = BTreeSet::from([("ride".to_owned(), "horse".to_owned())]);
        let r = evaluate(&dets, &truths, &cats, &BTreeSet::new()).unwrap();
        assert_eq!(r.categories[0].ap_dt, Some(0.5));
        assert_eq!(r.categories[0].ap_ko, Some(1.0));
    }

    #[test]
    fn unknown_category_rejected() {
        let h = bx(0.0, 0.0, 10.0, 10.0);
        let mut d = det("a", h, h, 0.5);
        d.verb = "eat".into();
        let cats = BTreeSet::from([("ride".to_owned(), "horse".to_owned())]);
        assert!(evaluate(&[d], &[], &cats, &BTreeSet::new()).is_err());
    }

    #[test]
    fn reports_are_stable() {
        let empty = EvalReport { categories: vec![] };
        assert_eq!(
            emit_report(&empty, ReportFormat::Csv),
            "category,n_gt,AP_DT,AP_KO\n"
        );
        let r = EvalReport {
            categories: vec![CategoryAp {
                verb: "ride".into(),
                object: "horse".into(),
                n_gt: 2,
                rare: true,
                ap_dt: Some(0.5),
                ap_ko: Some(0.75),
            }],
        };
        let md = emit_report(&r, ReportFormat::Markdown);
        assert_eq!(md.lines().count(), 2 + 1 + 3);
        assert_eq!(md, emit_report(&r, ReportFormat::Markdown));
        let csv = emit_report(&r, ReportFormat::Csv);
        assert!(csv.contains("ride horse,2,50.0000,75.0000"));
        assert!(csv.contains("Non-Rare,0,n/a,n/a"));
    }
}
