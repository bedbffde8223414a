//! Seeded synthetic polysemy benchmark.
//!
//! Every verb owns a disjoint set of objects. The objects of a verb fall into
//! latent groups, and groups gather into embedding families: an object's word
//! embedding is its family centre plus a group offset plus a little noise, so
//! K-means with `k = families` finds families and with `k = groups` finds
//! groups.
//!
//! Each (verb, group) has its own prototype in every stream. Even groups carry
//! their vector-stream signal in the pose stream, odd groups in the spatial
//! stream; the human appearance prototype lives on a group-specific subset of
//! channels. A hard negative is a positive of its own object with one stream
//! replaced by another group's prototype of the same verb:
//!
//! * `stream`: its informative stream is pure noise and the silent stream
//!   carries a group of opposite parity;
//! * `pattern`: its informative stream carries a group of equal parity;
//! * `appearance`: its human appearance stream carries another group;
//! * `idle`: the human lacks the verb's action cue.
//!
//! The action cue is a verb-level direction in the human stream added with a
//! random sign, so no single linear projection detects it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::data::{Dataset, GroundTruth, Instance, PairSample, Vocabulary, HUMAN_CATEGORY};
use super::encode::{POSE_DIM, SPATIAL_DIM};
use super::geometry::BoundingBox;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::seed;

pub const GENERATOR_FILE: &str = "generator.json";

const IMAGE_WIDTH: f64 = 640.0;
const IMAGE_HEIGHT: f64 = 480.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub verbs: usize,
    /// Seen objects per verb.
    pub objects_per_verb: usize,
    /// Latent feature groups per verb.
    pub groups_per_verb: usize,
    /// Embedding families per verb; groups are split evenly among them.
    pub families_per_verb: usize,
    /// Extra objects per verb that appear only in the test split.
    pub unseen_per_verb: usize,
    pub appearance_dim: usize,
    pub embedding_dim: usize,
    pub union_stream: bool,
    /// Training positives of a non-rare category.
    pub train_positives: usize,
    pub rare_fraction: f64,
    pub rare_min: usize,
    pub rare_max: usize,
    pub train_negative_ratio: f64,
    pub test_positives: usize,
    pub test_negative_ratio: f64,
    /// Fraction of negatives that carry a conflicting prototype.
    pub hard_fraction: f64,
    /// Relative frequency of the `stream`, `pattern`, `appearance` and
    /// `idle` conflicts.
    pub conflict_weights: [f64; 4],
    /// Draw `appearance` donors from the object's own embedding family only.
    pub family_appearance_donors: bool,
    pub signal: f64,
    pub appearance_signal: f64,
    pub identity_scale: f64,
    /// Share of an object's appearance identity common to its latent group.
    pub identity_sharing: f64,
    /// Amplitude of the verb-level action cue in the human stream. The cue
    /// appears with a random sign (mirrored performance of the action).
    pub action_cue: f64,
    /// Fraction of appearance channels carrying a group's prototype.
    pub appearance_support: f64,
    /// Per-entry feature noise standard deviation.
    pub noise: f64,
    /// Per-entry embedding scale (word2vec-like).
    pub embedding_scale: f64,
    /// Group offset relative to the family centre.
    pub group_spread: f64,
    /// Object noise relative to the family centre.
    pub object_spread: f64,
    pub iou_min: f64,
    pub iou_max: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            verbs: 6,
            objects_per_verb: 8,
            groups_per_verb: 4,
            families_per_verb: 2,
            unseen_per_verb: 1,
            appearance_dim: 32,
            embedding_dim: 300,
            union_stream: false,
            train_positives: 24,
            rare_fraction: 0.25,
            rare_min: 1,
            rare_max: 6,
            train_negative_ratio: 1.5,
            test_positives: 8,
            test_negative_ratio: 2.0,
            hard_fraction: 0.7,
            conflict_weights: [1.0, 1.0, 1.0, 0.0],
            family_appearance_donors: true,
            signal: 1.0,
            appearance_signal: 1.0,
            identity_scale: 1.0,
            identity_sharing: 0.0,
            action_cue: 0.0,
            appearance_support: 0.25,
            noise: 0.3,
            embedding_scale: 0.15,
            group_spread: 0.6,
            object_spread: 0.15,
            iou_min: 0.45,
            iou_max: 0.95,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if self.verbs == 0 || self.objects_per_verb == 0 {
            return fail("synthetic config needs at least one verb and one object".into());
        }
        if self.groups_per_verb == 0 || self.groups_per_verb > self.objects_per_verb {
            return fail(format!(
                "groups_per_verb = {} must be in [1, objects_per_verb = {}]",
                self.groups_per_verb, self.objects_per_verb
            ));
        }
        if self.families_per_verb == 0
            || self.families_per_verb > self.groups_per_verb
            || self.groups_per_verb % self.families_per_verb != 0
        {
            return fail(format!(
                "families_per_verb = {} must divide groups_per_verb = {}",
                self.families_per_verb, self.groups_per_verb
            ));
        }
        if self.appearance_dim < 2 || self.embedding_dim == 0 {
            return fail("appearance_dim must be >= 2 and embedding_dim >= 1".into());
        }
        if self.rare_min == 0 || self.rare_min > self.rare_max || self.rare_max >= 10 {
            return fail("rare sample range must satisfy 1 <= rare_min <= rare_max <= 9".into());
        }
        for (name, v) in [
            ("rare_fraction", self.rare_fraction),
            ("hard_fraction", self.hard_fraction),
            ("appearance_support", self.appearance_support),
            ("identity_sharing", self.identity_sharing),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.train_positives == 0 || self.test_positives == 0 {
            return fail("train_positives and test_positives must be positive".into());
        }
        let non_negative = [
            self.train_negative_ratio,
            self.test_negative_ratio,
            self.signal,
            self.appearance_signal,
            self.identity_scale,
            self.action_cue,
            self.noise,
            self.embedding_scale,
            self.group_spread,
            self.object_spread,
        ];
        if non_negative.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || self
                .conflict_weights
                .iter()
                .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return fail(
                "ratios, scales and conflict weights must be finite and non-negative".into(),
            );
        }
        if !(0.0 < self.iou_min && self.iou_min <= self.iou_max && self.iou_max <= 1.0) {
            return fail("IoU range must satisfy 0 < iou_min <= iou_max <= 1".into());
        }
        Ok(())
    }
}

/// Feature prototypes of one (verb, group). The vector stream that is silent
/// for the group has an all-zero prototype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPrototypes {
    pub verb: String,
    pub group: usize,
    pub family: usize,
    /// `S` or `P`.
    pub informative_stream: String,
    pub human: Vec<f64>,
    pub spatial: Vec<f64>,
    pub pose: Vec<f64>,
    pub union: Vec<f64>,
    /// Appearance shared by the group's objects.
    pub object: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub name: String,
    pub verb: String,
    pub group: usize,
    pub family: usize,
    pub unseen: bool,
    pub rare: bool,
    pub train_positives: usize,
    pub identity: Vec<f64>,
}

/// Everything needed to reproduce or audit a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub seed: u64,
    pub config: SyntheticConfig,
    pub objects: Vec<ObjectRecord>,
    pub prototypes: Vec<GroupPrototypes>,
    /// Verb-level human appearance cue, one per verb.
    pub action_cues: BTreeMap<String, Vec<f64>>,
}

impl GeneratorRecord {
    pub fn object(&self, name: &str) -> Option<&ObjectRecord> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn prototypes(&self, verb: &str, group: usize) -> Option<&GroupPrototypes> {
        self.prototypes
            .iter()
            .find(|p| p.verb == verb && p.group == group)
    }

    /// Latent group of each seen object of `verb`, in sorted object order.
    pub fn groups_of(&self, verb: &str) -> Vec<usize> {
        let mut objs: Vec<&ObjectRecord> = self
            .objects
            .iter()
            .filter(|o| o.verb == verb && !o.unseen)
            .collect();
        objs.sort_by(|a, b| a.name.cmp(&b.name));
        objs.iter().map(|o| o.group).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    pub record: GeneratorRecord,
}

impl SyntheticDataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.dataset.save(dir)?;
        self.record.save(&dir.join(GENERATOR_FILE))
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; n];
    }
    let d = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| d.sample(rng)).collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, n, 1.0);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| x * s).collect()
}

fn add_noise(rng: &mut ChaCha8Rng, base: &[f64], std: f64) -> Vec<f64> {
    if std == 0.0 {
        return base.to_vec();
    }
    let d = Normal::new(0.0, std).expect("finite std");
    base.iter().map(|x| x + d.sample(rng)).collect()
}

/// Moves `b` so that its IoU with the original is exactly `target`.
fn perturb_to_iou(rng: &mut ChaCha8Rng, b: &BoundingBox, target: f64) -> BoundingBox {
    let horizontal = rng.random_bool(0.5);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let extent = if horizontal { b.width() } else { b.height() };
    let shift = sign * extent * (1.0 - target) / (1.0 + target);
    if horizontal {
        b.translated(shift, 0.0)
    } else {
        b.translated(0.0, shift)
    }
}

fn random_box(rng: &mut ChaCha8Rng, min: f64, max: f64) -> BoundingBox {
    let w = rng.random_range(min..max);
    let h = rng.random_range(min..max);
    let x = rng.random_range(0.0..IMAGE_WIDTH - max);
    let y = rng.random_range(0.0..IMAGE_HEIGHT - max);
    BoundingBox {
        x1: x,
        y1: y,
        x2: x + w,
        y2: y + h,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Conflict {
    Stream,
    Pattern,
    Appearance,
    Idle,
}

struct Features {
    h: Vec<f64>,
    o: Vec<f64>,
    s: Vec<f64>,
    p: Vec<f64>,
    u: Option<Vec<f64>>,
}

struct Generator<'a> {
    cfg: &'a SyntheticConfig,
    record: GeneratorRecord,
}

impl Generator<'_> {
    fn protos(&self, verb: &str, group: usize) -> &GroupPrototypes {
        self.record
            .prototypes(verb, group)
            .expect("prototype exists")
    }

    /// `human` plus the verb's action cue with a random sign.
    fn acting(&self, rng: &mut ChaCha8Rng, verb: &str, human: &[f64]) -> Vec<f64> {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let cue = &self.record.action_cues[verb];
        let h: Vec<f64> = human.iter().zip(cue).map(|(a, c)| a + sign * c).collect();
        add_noise(rng, &h, self.cfg.noise)
    }

    fn positive(&self, rng: &mut ChaCha8Rng, obj: &ObjectRecord) -> Features {
        let p = self.protos(&obj.verb, obj.group);
        let n = self.cfg.noise;
        Features {
            h: self.acting(rng, &obj.verb, &p.human),
            o: add_noise(rng, &obj.identity, n),
            s: add_noise(rng, &p.spatial, n),
            p: add_noise(rng, &p.pose, n),
            u: self.cfg.union_stream.then(|| add_noise(rng, &p.union, n)),
        }
    }

    fn negative(&self, rng: &mut ChaCha8Rng, obj: &ObjectRecord) -> Features {
        let cfg = self.cfg;
        let n = cfg.noise;
        let k_a = cfg.appearance_dim;
        if !rng.random_bool(cfg.hard_fraction) {
            return Features {
                h: gaussian_vec(rng, k_a, n),
                o: add_noise(rng, &obj.identity, n),
                s: gaussian_vec(rng, SPATIAL_DIM, n),
                p: gaussian_vec(rng, POSE_DIM, n),
                u: cfg.union_stream.then(|| gaussian_vec(rng, k_a, n)),
            };
        }
        // a hard negative looks positive everywhere except for one conflict
        let mut f = self.positive(rng, obj);
        let g = obj.group;
        let groups = cfg.groups_per_verb;
        let opposite: Vec<usize> = (0..groups).filter(|h| h % 2 != g % 2).collect();
        let same: Vec<usize> = (0..groups).filter(|h| *h != g && h % 2 == g % 2).collect();
        let per_family = groups / cfg.families_per_verb;
        let other: Vec<usize> = (0..groups)
            .filter(|h| {
                *h != g && (!cfg.family_appearance_donors || h / per_family == g / per_family)
            })
            .collect();
        let own = vec![g];
        let mut options = Vec::new();
        for (kind, pool, w) in [
            (Conflict::Stream, &opposite, cfg.conflict_weights[0]),
            (Conflict::Pattern, &same, cfg.conflict_weights[1]),
            (Conflict::Appearance, &other, cfg.conflict_weights[2]),
            (Conflict::Idle, &own, cfg.conflict_weights[3]),
        ] {
            if !pool.is_empty() && w > 0.0 {
                options.push((kind, pool, w));
            }
        }
        let total: f64 = options.iter().map(|o| o.2).sum();
        if total == 0.0 {
            return f;
        }
        let mut pick = rng.random_range(0.0..total);
        let (kind, pool) = options
            .iter()
            .find(|o| {
                if pick < o.2 {
                    true
                } else {
                    pick -= o.2;
                    false
                }
            })
            .map(|o| (o.0, o.1))
            .unwrap_or((options[options.len() - 1].0, options[options.len() - 1].1));
        let donor = self.protos(&obj.verb, pool[rng.random_range(0..pool.len())]);
        let own_is_spatial = g % 2 == 1;
        match kind {
            Conflict::Stream => {
                // own informative stream goes quiet, the silent one lights up
                if own_is_spatial {
                    f.s = gaussian_vec(rng, SPATIAL_DIM, n);
                    f.p = add_noise(rng, &donor.pose, n);
                } else {
                    f.p = gaussian_vec(rng, POSE_DIM, n);
                    f.s = add_noise(rng, &donor.spatial, n);
                }
            }
            Conflict::Pattern => {
                if own_is_spatial {
                    f.s = add_noise(rng, &donor.spatial, n);
                } else {
                    f.p = add_noise(rng, &donor.pose, n);
                }
            }
            Conflict::Appearance => {
                f.h = self.acting(rng, &obj.verb, &donor.human);
                if let Some(u) = f.u.as_mut() {
                    *u = add_noise(rng, &donor.union, n);
                }
            }
            Conflict::Idle => f.h = add_noise(rng, &donor.human, n),
        }
        f
    }
}

fn make_pair(
    image_id: &str,
    human: &Instance,
    object: Instance,
    f: Features,
    positives: BTreeSet<String>,
) -> PairSample {
    PairSample {
        image_id: image_id.to_owned(),
        width: IMAGE_WIDTH,
        height: IMAGE_HEIGHT,
        human: human.clone(),
        object,
        h_app: f.h,
        o_app: f.o,
        spatial: f.s,
        pose: f.p,
        union_app: f.u,
        interactiveness: 1.0,
        positives,
    }
}

/// Generates a dataset and its generator record; a pure function of
/// `(config, seed)`.
pub fn generate_synthetic(cfg: &SyntheticConfig, seed_value: u64) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut emb_rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, "synthetic.embeddings"));
    let mut proto_rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, "synthetic.prototypes"));
    let mut split_rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, "synthetic.splits"));

    let k_a = cfg.appearance_dim;
    let dim = cfg.embedding_dim;
    let groups_per_family = cfg.groups_per_verb / cfg.families_per_verb;
    let verbs: Vec<String> = (0..cfg.verbs).map(|v| format!("verb{v:02}")).collect();
    let mut embeddings = EmbeddingTable::new(dim);
    let mut objects = Vec::new();
    let mut prototypes: Vec<GroupPrototypes> = Vec::new();
    let mut action_cues = BTreeMap::new();
    let support = ((cfg.appearance_support * k_a as f64).round() as usize).clamp(1, k_a);

    for verb in &verbs {
        embeddings.insert(verb, gaussian_vec(&mut emb_rng, dim, cfg.embedding_scale))?;
        action_cues.insert(
            verb.clone(),
            scaled(&unit_vec(&mut proto_rng, k_a), cfg.action_cue),
        );
        let families: Vec<Vec<f64>> = (0..cfg.families_per_verb)
            .map(|_| gaussian_vec(&mut emb_rng, dim, cfg.embedding_scale))
            .collect();
        let group_centres: Vec<Vec<f64>> = (0..cfg.groups_per_verb)
            .map(|g| {
                let offset =
                    gaussian_vec(&mut emb_rng, dim, cfg.embedding_scale * cfg.group_spread);
                families[g / groups_per_family]
                    .iter()
                    .zip(offset)
                    .map(|(a, b)| a + b)
                    .collect()
            })
            .collect();
        for g in 0..cfg.groups_per_verb {
            let informative = if g % 2 == 0 { "P" } else { "S" };
            let mut channels: Vec<usize> = (0..k_a).collect();
            channels.shuffle(&mut proto_rng);
            let mut human = vec![0.0; k_a];
            let weights = unit_vec(&mut proto_rng, support);
            for (&c, w) in channels[..support].iter().zip(weights) {
                human[c] = w * cfg.appearance_signal;
            }
            let spatial = scaled(&unit_vec(&mut proto_rng, SPATIAL_DIM), cfg.signal);
            let pose = scaled(&unit_vec(&mut proto_rng, POSE_DIM), cfg.signal);
            let union = scaled(&unit_vec(&mut proto_rng, k_a), cfg.appearance_signal);
            let object = unit_vec(&mut proto_rng, k_a);
            prototypes.push(GroupPrototypes {
                verb: verb.clone(),
                group: g,
                family: g / groups_per_family,
                informative_stream: informative.to_owned(),
                human,
                spatial: if informative == "S" {
                    spatial
                } else {
                    vec![0.0; SPATIAL_DIM]
                },
                pose: if informative == "P" {
                    pose
                } else {
                    vec![0.0; POSE_DIM]
                },
                union,
                object,
            });
        }
        let total = cfg.objects_per_verb + cfg.unseen_per_verb;
        for j in 0..total {
            let g = j % cfg.groups_per_verb;
            let name = format!("{verb}_obj{j:02}");
            let noise = gaussian_vec(&mut emb_rng, dim, cfg.embedding_scale * cfg.object_spread);
            let e: Vec<f64> = group_centres[g]
                .iter()
                .zip(noise)
                .map(|(a, b)| a + b)
                .collect();
            embeddings.insert(&name, e)?;
            objects.push(ObjectRecord {
                name,
                verb: verb.clone(),
                group: g,
                family: g / groups_per_family,
                unseen: j >= cfg.objects_per_verb,
                rare: false,
                train_positives: 0,
                identity: {
                    let own = unit_vec(&mut proto_rng, k_a);
                    let shared = &prototypes[prototypes.len() - cfg.groups_per_verb + g].object;
                    let (a, b) = (
                        cfg.identity_sharing.sqrt(),
                        (1.0 - cfg.identity_sharing).sqrt(),
                    );
                    let mixed: Vec<f64> = shared
                        .iter()
                        .zip(&own)
                        .map(|(x, y)| a * x + b * y)
                        .collect();
                    let norm = mixed.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    scaled(&mixed, cfg.identity_scale / norm)
                },
            });
        }
    }

    // rare categories: a fixed fraction of the seen ones
    let seen: Vec<usize> = (0..objects.len()).filter(|&i| !objects[i].unseen).collect();
    let n_rare = (cfg.rare_fraction * seen.len() as f64).round() as usize;
    let mut order = seen.clone();
    order.shuffle(&mut split_rng);
    let rare: BTreeSet<usize> = order[..n_rare].iter().copied().collect();
    for &i in &seen {
        objects[i].rare = rare.contains(&i);
        objects[i].train_positives = if objects[i].rare {
            split_rng.random_range(cfg.rare_min..=cfg.rare_max)
        } else {
            cfg.train_positives
        };
    }

    let mut vocabulary = Vocabulary {
        verbs: verbs.clone(),
        objects: objects.iter().map(|o| o.name.clone()).collect(),
        pairs: Vec::new(),
        unseen_pairs: Vec::new(),
    };
    for o in &objects {
        let key = (o.verb.clone(), o.name.clone());
        if o.unseen {
            vocabulary.unseen_pairs.push(key);
        } else {
            vocabulary.pairs.push(key);
        }
    }

    let generator = Generator {
        cfg,
        record: GeneratorRecord {
            seed: seed_value,
            config: cfg.clone(),
            objects,
            prototypes,
            action_cues,
        },
    };

    let train = generate_train(&generator, seed_value);
    let (test, ground_truth) = generate_test(&generator, seed_value);
    let dataset = Dataset {
        vocabulary,
        embeddings,
        train,
        test,
        ground_truth,
    };
    dataset.validate()?;
    Ok(SyntheticDataset {
        dataset,
        record: generator.record,
    })
}

fn instance(bbox: BoundingBox, category: &str, score: f64) -> Instance {
    Instance {
        bbox,
        category: category.to_owned(),
        score,
    }
}

fn negative_count(rng: &mut ChaCha8Rng, positives: usize, ratio: f64) -> usize {
    let x = positives as f64 * ratio;
    let base = x.floor();
    base as usize + usize::from(rng.random_bool(x - base))
}

fn generate_train(g: &Generator<'_>, seed_value: u64) -> Vec<PairSample> {
    let mut out = Vec::new();
    for (i, obj) in g
        .record
        .objects
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.unseen)
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, &format!("train.{i}")));
        let negatives = negative_count(&mut rng, obj.train_positives, g.cfg.train_negative_ratio);
        for k in 0..obj.train_positives + negatives {
            let positive = k < obj.train_positives;
            let f = if positive {
                g.positive(&mut rng, obj)
            } else {
                g.negative(&mut rng, obj)
            };
            let hb = random_box(&mut rng, 60.0, 160.0);
            let ob = random_box(&mut rng, 30.0, 120.0);
            let human = instance(hb, HUMAN_CATEGORY, 1.0);
            let positives = if positive {
                BTreeSet::from([obj.verb.clone()])
            } else {
                BTreeSet::new()
            };
            let image = format!("train-{}-{k:03}", obj.name);
            out.push(make_pair(
                &image,
                &human,
                instance(ob, &obj.name, 1.0),
                f,
                positives,
            ));
        }
    }
    out
}

fn generate_test(g: &Generator<'_>, seed_value: u64) -> (Vec<PairSample>, Vec<GroundTruth>) {
    let cfg = g.cfg;
    // (object index, positive?) for every test pair, then shuffled into
    // images of one human and two objects
    let mut plan: Vec<(usize, bool)> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, "test.plan"));
    for (i, _) in g.record.objects.iter().enumerate() {
        let negatives = negative_count(&mut rng, cfg.test_positives, cfg.test_negative_ratio);
        plan.extend((0..cfg.test_positives).map(|_| (i, true)));
        plan.extend((0..negatives).map(|_| (i, false)));
    }
    plan.shuffle(&mut rng);

    let mut pairs = Vec::new();
    let mut truth = Vec::new();
    for (n, chunk) in plan.chunks(2).enumerate() {
        let image = format!("test-{n:05}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, &image));
        let h_gt = random_box(&mut rng, 60.0, 160.0);
        let h_iou = rng.random_range(cfg.iou_min..=cfg.iou_max);
        let h_det = perturb_to_iou(&mut rng, &h_gt, h_iou);
        let h_score = detection_score(&mut rng, h_iou);
        let human = instance(h_det, HUMAN_CATEGORY, h_score);
        for &(i, positive) in chunk {
            let obj = &g.record.objects[i];
            let f = if positive {
                g.positive(&mut rng, obj)
            } else {
                g.negative(&mut rng, obj)
            };
            let o_gt = random_box(&mut rng, 30.0, 120.0);
            let o_iou = rng.random_range(cfg.iou_min..=cfg.iou_max);
            let o_det = perturb_to_iou(&mut rng, &o_gt, o_iou);
            let o_score = detection_score(&mut rng, o_iou);
            let mut positives = BTreeSet::new();
            if positive {
                positives.insert(obj.verb.clone());
                truth.push(GroundTruth {
                    image_id: image.clone(),
                    verb: obj.verb.clone(),
                    object: obj.name.clone(),
                    human_box: h_gt,
                    object_box: o_gt,
                });
            }
            pairs.push(make_pair(
                &image,
                &human,
                instance(o_det, &obj.name, o_score),
                f,
                positives,
            ));
        }
    }
    (pairs, truth)
}

fn detection_score(rng: &mut ChaCha8Rng, iou: f64) -> f64 {
    let noise = Normal::new(0.0, 0.05).expect("finite std").sample(rng);
    (iou + noise).clamp(0.01, 1.0)
}
