//! End-to-end runs shared by the command line and the benchmark tests.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::clustering::Scheme;
use crate::error::{Error, Result};
use crate::evaluation::{detect, evaluate, Category, DetectionRecord, EvalReport, Mode, SplitMap};
use crate::features::Dataset;
use crate::network::{AblationConfig, LpcaVariant, PdNet};
use crate::scalar::Scalar;
use crate::training::{train, TrainConfig, TrainLog};

pub fn seen_categories(ds: &Dataset) -> BTreeSet<Category> {
    ds.vocabulary.pairs.iter().cloned().collect()
}

pub fn unseen_categories(ds: &Dataset) -> BTreeSet<Category> {
    ds.vocabulary.unseen_pairs.iter().cloned().collect()
}

#[derive(Debug, Clone)]
pub struct Evaluated {
    pub detections: Vec<DetectionRecord>,
    pub report: EvalReport,
}

/// Scores the test split and evaluates it. Outside zero-shot mode only seen
/// categories are evaluated.
pub fn evaluate_model<T: Scalar>(
    model: &PdNet<T>,
    ds: &Dataset,
    zero_shot: bool,
) -> Result<Evaluated> {
    let detections = detect(model, &ds.test, &ds.embeddings, &ds.vocabulary, zero_shot)?;
    let categories = if zero_shot {
        ds.vocabulary.all_pairs()
    } else {
        seen_categories(ds)
    };
    let report = evaluate(
        &detections,
        &ds.ground_truth,
        &categories,
        &ds.rare_categories(),
    )?;
    Ok(Evaluated { detections, report })
}

pub fn detections_to_jsonl(dets: &[DetectionRecord]) -> Result<String> {
    let mut out = String::new();
    for d in dets {
        out.push_str(&serde_json::to_string(d)?);
        out.push('\n');
    }
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.4}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitScore {
    pub dt: Option<f64>,
    pub ko: Option<f64>,
}

/// mAP (percent) on unseen, seen and all categories of a zero-shot report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotSplits {
    pub unseen: SplitScore,
    pub seen: SplitScore,
    pub full: SplitScore,
}

pub fn zero_shot_splits(report: &EvalReport, ds: &Dataset) -> ZeroShotSplits {
    let unseen = unseen_categories(ds);
    let is_unseen =
        |c: &crate::evaluation::CategoryAp| unseen.contains(&(c.verb.clone(), c.object.clone()));
    let score = |f: &dyn Fn(&crate::evaluation::CategoryAp) -> bool| SplitScore {
        dt: report.map_where(Mode::Default, f),
        ko: report.map_where(Mode::KnownObject, f),
    };
    ZeroShotSplits {
        unseen: score(&|c| is_unseen(c)),
        seen: score(&|c| !is_unseen(c)),
        full: score(&|_| true),
    }
}

/// Markdown table, one row per model.
pub fn zero_shot_table(rows: &[(String, ZeroShotSplits)]) -> String {
    let mut out = String::from(
        "| model | unseen DT | seen DT | full DT | unseen KO | seen KO | full KO |\n|---|---:|---:|---:|---:|---:|---:|\n",
    );
    for (name, z) in rows {
        writeln!(
            out,
            "| {name} | {} | {} | {} | {} | {} | {} |",
            cell(z.unseen.dt),
            cell(z.seen.dt),
            cell(z.full.dt),
            cell(z.unseen.ko),
            cell(z.seen.ko),
            cell(z.full.ko)
        )
        .expect("string write");
    }
    out
}

/// Cartesian product in the order scheme, LPCA variant, fusion, prior
/// concatenation.
pub fn ablation_grid(
    schemes: &[Scheme],
    lpca: &[LpcaVariant],
    pamf: &[bool],
    lpfa: &[bool],
) -> Vec<AblationConfig> {
    let mut out = Vec::new();
    for &scheme in schemes {
        for &l in lpca {
            for &p in pamf {
                for &f in lpfa {
                    let a = AblationConfig {
                        lpca: l,
                        lpfa: f,
                        pamf: p,
                        scheme,
                    };
                    if !out.contains(&a) {
                        out.push(a);
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct AblationRun<T> {
    pub ablation: AblationConfig,
    pub model: PdNet<T>,
    pub log: TrainLog,
    pub evaluated: Evaluated,
}

/// Trains and evaluates one model per configuration; everything else in
/// `base` is shared.
pub fn run_ablation<T: Scalar>(
    ds: &Dataset,
    base: &TrainConfig,
    grid: &[AblationConfig],
) -> Result<Vec<AblationRun<T>>> {
    if grid.is_empty() {
        return Err(Error::invalid("empty ablation grid"));
    }
    grid.iter()
        .map(|&ablation| {
            let config = TrainConfig {
                ablation,
                ..base.clone()
            };
            let (model, log) = train::<T>(ds, &config)?;
            let evaluated = evaluate_model(&model, ds, false)?;
            Ok(AblationRun {
                ablation,
                model,
                log,
                evaluated,
            })
        })
        .collect()
}

/// Markdown comparison table with DT and KO Full / Rare / Non-Rare mAP.
pub fn comparison_table(rows: &[(AblationConfig, SplitMap, SplitMap)]) -> String {
    let mut out = String::from(
        "| scheme | LPCA | PAMF | LPFA | DT Full | DT Rare | DT Non-Rare | KO Full | KO Rare | KO Non-Rare |\n\
         |---|---|---|---|---:|---:|---:|---:|---:|---:|\n",
    );
    let on = |b: bool| if b { "on" } else { "off" };
    for (a, dt, ko) in rows {
        writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            a.scheme,
            a.lpca,
            on(a.pamf),
            on(a.lpfa),
            cell(dt.full),
            cell(dt.rare),
            cell(dt.non_rare),
            cell(ko.full),
            cell(ko.rare),
            cell(ko.non_rare)
        )
        .expect("string write");
    }
    out
}
