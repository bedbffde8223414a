use std::collections::BTreeSet;

use pdnet::evaluation::{Category, DetectionRecord, Mode};
use pdnet::features::{iou, BoundingBox, GroundTruth};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute-force reference: precision envelope taken as an explicit maximum
/// over all later ranks, recall steps summed one ground truth at a time.
pub fn oracle_ap(flags: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return (!flags.is_empty()).then_some(0.0);
    }
    let precision_at =
        |k: usize| flags[..=k].iter().filter(|&&f| f).count() as f64 / (k + 1) as f64;
    let mut ap = 0.0;
    for k in 0..flags.len() {
        if flags[k] {
            let best = (k..flags.len()).map(precision_at).fold(0.0, f64::max);
            ap += best / n_gt as f64;
        }
    }
    Some(ap)
}

/// Reference matcher over the whole ground-truth list of a category.
pub fn oracle_flags(dets: &[&DetectionRecord], gts: &[&GroundTruth]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut taken = vec![false; gts.len()];
    let mut flags = Vec::new();
    for i in order {
        let d = dets[i];
        let mut best = None;
        let mut best_overlap = -1.0;
        for (j, g) in gts.iter().enumerate() {
            if taken[j] || g.image_id != d.image_id {
                continue;
            }
            let overlap = f64::min(
                iou(&d.human_box, &g.human_box),
                iou(&d.object_box, &g.object_box),
            );
            if overlap >= 0.5 && overlap > best_overlap {
                best = Some(j);
                best_overlap = overlap;
            }
        }
        if let Some(j) = best {
            taken[j] = true;
        }
        flags.push(best.is_some());
    }
    flags
}

pub struct Scene {
    pub dets: Vec<DetectionRecord>,
    pub gts: Vec<GroundTruth>,
    pub categories: BTreeSet<Category>,
}

/// Boxes snap to a coarse grid so exact ties and threshold hits occur.
fn grid_box(rng: &mut ChaCha8Rng) -> BoundingBox {
    let x = rng.random_range(0..4) as f64 * 10.0;
    let y = rng.random_range(0..4) as f64 * 10.0;
    let w = rng.random_range(1..4) as f64 * 10.0;
    let h = rng.random_range(1..4) as f64 * 10.0;
    BoundingBox::new(x, y, x + w, y + h).unwrap()
}

fn jitter(rng: &mut ChaCha8Rng, b: &BoundingBox) -> BoundingBox {
    if rng.random_bool(0.3) {
        return grid_box(rng);
    }
    let d = rng.random_range(0..3) as f64 * 5.0;
    BoundingBox::new(b.x1 + d, b.y1, b.x2 + d, b.y2).unwrap()
}

pub fn micro_scene(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let categories: BTreeSet<Category> = [("ride", "horse"), ("feed", "horse"), ("hold", "cup")]
        .iter()
        .map(|(v, o)| (v.to_string(), o.to_string()))
        .collect();
    let images = rng.random_range(1..=4);
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for (verb, object) in &categories {
        for _ in 0..rng.random_range(0..=5) {
            gts.push(GroundTruth {
                image_id: format!("img{}", rng.random_range(0..images)),
                verb: verb.clone(),
                object: object.clone(),
                human_box: grid_box(&mut rng),
                object_box: grid_box(&mut rng),
            });
        }
    }
    for (verb, object) in &categories {
        for _ in 0..rng.random_range(0..=10) {
            let anchor = gts
                .iter()
                .filter(|g| &g.verb == verb && &g.object == object)
                .nth(rng.random_range(0..6));
            let (image_id, human_box, object_box) = match anchor {
                Some(g) => (
                    g.image_id.clone(),
                    jitter(&mut rng, &g.human_box),
                    jitter(&mut rng, &g.object_box),
                ),
                None => (
                    format!("img{}", rng.random_range(0..images)),
                    grid_box(&mut rng),
                    grid_box(&mut rng),
                ),
            };
            dets.push(DetectionRecord {
                image_id,
                verb: verb.clone(),
                object: object.clone(),
                human_box,
                object_box,
                // a few distinct values so that equal scores happen
                score: rng.random_range(0..5) as f64 / 4.0,
            });
        }
    }
    Scene {
        dets,
        gts,
        categories,
    }
}

pub fn oracle_map(scene: &Scene, mode: Mode) -> Option<f64> {
    let mut aps = Vec::new();
    for c in &scene.categories {
        let gts: Vec<&GroundTruth> = scene
            .gts
            .iter()
            .filter(|g| g.verb == c.0 && g.object == c.1)
            .collect();
        let dets: Vec<&DetectionRecord> = scene
            .dets
            .iter()
            .filter(|d| d.verb == c.0 && d.object == c.1)
            .filter(|d| {
                mode == Mode::Default
                    || scene
                        .gts
                        .iter()
                        .any(|g| g.object == c.1 && g.image_id == d.image_id)
            })
            .collect();
        if let Some(ap) = oracle_ap(&oracle_flags(&dets, &gts), gts.len()) {
            aps.push(ap);
        }
    }
    (!aps.is_empty()).then(|| 100.0 * aps.iter().sum::<f64>() / aps.len() as f64)
}
