//! Per-verb object clustering and classifier-slot indexing.
//!
//! For every verb the objects it is seen with are grouped by spherical
//! K-means over their word embeddings. The classifier index then maps each
//! (verb, object) category to an output slot of the stream blocks under one
//! of three schemes:
//!
//! * `SH`: one slot per verb, shared by all its objects;
//! * `SP`: one slot per (verb, object) category;
//! * `CSP`: one slot per (verb, object cluster).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::seed;

/// Valid objects for each verb.
pub type VerbObjectTable = BTreeMap<String, BTreeSet<String>>;

pub const KMEANS_MAX_ITERS: usize = 300;

/// `C_v = max(1, floor(sqrt(n)))`.
pub fn cluster_count(n_objects: usize) -> Result<usize> {
    if n_objects == 0 {
        return Err(Error::invalid("cluster count needs at least one object"));
    }
    Ok(n_objects.isqrt().max(1))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot(a, b) / (na * nb)
}

/// Index of the centroid with the smallest cosine distance, lowest index on ties.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = cosine_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    /// Unit-norm centroids.
    pub centroids: Vec<Vec<f64>>,
    /// Total cosine distance after every assignment step.
    pub objective_trace: Vec<f64>,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }
}

/// Spherical K-means under cosine distance with k-means++ seeding.
///
/// Points are unit-normalized first, so cosine distance equals half the
/// squared Euclidean distance and the mean update (re-normalized) applies.
pub fn kmeans_cosine(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    if k > points.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    let unit: Vec<Vec<f64>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            normalized(p).ok_or_else(|| Error::invalid(format!("point {i} has zero norm")))
        })
        .collect::<Result<_>>()?;
    let n = unit.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut chosen = vec![rng.random_range(0..n)];
    while chosen.len() < k {
        let centroids: Vec<Vec<f64>> = chosen.iter().map(|&i| unit[i].clone()).collect();
        let weights: Vec<f64> = unit
            .iter()
            .map(|p| nearest(p, &centroids).1.max(0.0))
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
    }
    let mut centroids: Vec<Vec<f64>> = chosen.iter().map(|&i| unit[i].clone()).collect();
    let mut assignments: Vec<usize> = vec![usize::MAX; n];
    let mut trace = Vec::new();

    for _ in 0..KMEANS_MAX_ITERS {
        let mut next: Vec<usize> = Vec::with_capacity(n);
        let mut dists: Vec<f64> = Vec::with_capacity(n);
        for p in &unit {
            let (j, d) = nearest(p, &centroids);
            next.push(j);
            dists.push(d);
        }
        repair_empty(&unit, &mut next, &mut dists, &mut centroids);
        trace.push(dists.iter().sum());
        let changed = next != assignments;
        assignments = next;
        if !changed {
            break;
        }
        for (j, c) in centroids.iter_mut().enumerate() {
            let mut mean = vec![0.0; c.len()];
            for (p, _) in unit.iter().zip(&assignments).filter(|(_, &a)| a == j) {
                for (m, x) in mean.iter_mut().zip(p) {
                    *m += x;
                }
            }
            // antipodal members can cancel out; keep the previous direction then
            if let Some(u) = normalized(&mean) {
                *c = u;
            }
        }
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        objective_trace: trace,
    })
}

/// Gives every empty cluster the point farthest from its centroid, taken
/// from a cluster that keeps at least one member.
fn repair_empty(
    unit: &[Vec<f64>],
    assignments: &mut [usize],
    dists: &mut [f64],
    centroids: &mut [Vec<f64>],
) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = (0..unit.len()).filter(|&i| sizes[assignments[i]] > 1).fold(
            None::<usize>,
            |best, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            },
        );
        let Some(i) = donor else {
            return;
        };
        assignments[i] = empty;
        dists[i] = 0.0;
        centroids[empty] = unit[i].clone();
    }
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_rows * sum_cols / total;
    let max = (sum_rows + sum_cols) / 2.0;
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbClusters {
    pub verb: String,
    /// Valid objects, sorted.
    pub objects: Vec<String>,
    pub cluster_count: usize,
    /// Cluster of each entry of `objects`.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub verbs: Vec<VerbClusters>,
}

impl ClusterModel {
    /// Clusters every verb's objects with `C_v = cluster_count(|O_v|)`.
    pub fn build(table: &VerbObjectTable, embeddings: &EmbeddingTable, seed: u64) -> Result<Self> {
        let mut verbs = Vec::new();
        for (verb, objects) in table {
            let objects: Vec<String> = objects.iter().cloned().collect();
            let points = objects
                .iter()
                .map(|o| embeddings.lookup(o))
                .collect::<Result<Vec<_>>>()?;
            let k = cluster_count(objects.len())?;
            let km = kmeans_cosine(&points, k, seed::derive(seed, verb))
                .map_err(|e| Error::invalid(format!("clustering verb `{verb}`: {e}")))?;
            verbs.push(VerbClusters {
                verb: verb.clone(),
                objects,
                cluster_count: k,
                assignments: km.assignments,
                centroids: km.centroids,
            });
        }
        let model = Self { verbs };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.verbs {
            if v.cluster_count == 0 || v.cluster_count > v.objects.len().max(1) {
                return Err(Error::invalid(format!(
                    "verb `{}`: cluster count {} outside [1, {}]",
                    v.verb,
                    v.cluster_count,
                    v.objects.len()
                )));
            }
            if v.assignments.len() != v.objects.len() || v.centroids.len() != v.cluster_count {
                return Err(Error::invalid(format!(
                    "verb `{}`: assignments/centroids do not match objects/cluster count",
                    v.verb
                )));
            }
            if let Some(a) = v.assignments.iter().find(|&&a| a >= v.cluster_count) {
                return Err(Error::invalid(format!(
                    "verb `{}`: assignment {a} out of range",
                    v.verb
                )));
            }
            for c in &v.centroids {
                if (norm(c) - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "verb `{}`: centroid is not unit-normalized",
                        v.verb
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn verb(&self, verb: &str) -> Option<&VerbClusters> {
        self.verbs.iter().find(|v| v.verb == verb)
    }

    pub fn cluster_of(&self, verb: &str, object: &str) -> Option<usize> {
        let v = self.verb(verb)?;
        let i = v.objects.iter().position(|o| o == object)?;
        Some(v.assignments[i])
    }

    /// Nearest centroid of `verb` under cosine distance; ties go to the lowest index.
    pub fn route_unseen(&self, verb: &str, embedding: &[f64]) -> Result<usize> {
        let v = self
            .verb(verb)
            .ok_or_else(|| Error::invalid(format!("verb `{verb}` has no clusters")))?;
        if norm(embedding) == 0.0 {
            return Err(Error::invalid("cannot route a zero embedding"));
        }
        Ok(nearest(embedding, &v.centroids).0)
    }

    pub fn total_clusters(&self) -> usize {
        self.verbs.iter().map(|v| v.cluster_count).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }

    /// SHA-256 of the manifest text; checkpoints record it.
    pub fn digest(&self) -> Result<String> {
        Ok(seed::digest_hex(self.to_json()?.as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "SH")]
    Shared,
    #[serde(rename = "SP")]
    Specific,
    #[serde(rename = "CSP")]
    Clustered,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Shared, Scheme::Specific, Scheme::Clustered];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Shared => "SH",
            Scheme::Specific => "SP",
            Scheme::Clustered => "CSP",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SH" => Ok(Scheme::Shared),
            "SP" => Ok(Scheme::Specific),
            "CSP" => Ok(Scheme::Clustered),
            other => Err(Error::invalid(format!(
                "unknown classifier scheme `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotEntry {
    pub verb: String,
    pub object: String,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSlot {
    pub verb: String,
    pub cluster: usize,
    pub slot: usize,
}

/// Mapping from (verb, object) categories to classifier slots `0..k_c`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierIndex {
    pub scheme: Scheme,
    pub k_c: usize,
    pub entries: Vec<SlotEntry>,
    /// Slot of each verb under `SH`.
    #[serde(default)]
    pub verb_slots: Vec<(String, usize)>,
    /// Slot of each (verb, cluster) under `CSP`.
    #[serde(default)]
    pub cluster_slots: Vec<ClusterSlot>,
}

impl ClassifierIndex {
    /// Slots are numbered densely, verbs in table order, then objects (SP) or
    /// clusters (CSP) in order.
    pub fn build(
        scheme: Scheme,
        table: &VerbObjectTable,
        clusters: Option<&ClusterModel>,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        let mut verb_slots = Vec::new();
        let mut cluster_slots = Vec::new();
        let mut next = 0usize;
        for (verb, objects) in table {
            match scheme {
                Scheme::Shared => {
                    verb_slots.push((verb.clone(), next));
                    for o in objects {
                        entries.push(SlotEntry {
                            verb: verb.clone(),
                            object: o.clone(),
                            slot: next,
                        });
                    }
                    next += 1;
                }
                Scheme::Specific => {
                    for o in objects {
                        entries.push(SlotEntry {
                            verb: verb.clone(),
                            object: o.clone(),
                            slot: next,
                        });
                        next += 1;
                    }
                }
                Scheme::Clustered => {
                    let model = clusters
                        .ok_or_else(|| Error::invalid("CSP index needs a cluster model"))?;
                    let vc = model.verb(verb).ok_or_else(|| {
                        Error::invalid(format!("cluster model has no entry for verb `{verb}`"))
                    })?;
                    for c in 0..vc.cluster_count {
                        cluster_slots.push(ClusterSlot {
                            verb: verb.clone(),
                            cluster: c,
                            slot: next + c,
                        });
                    }
                    for o in objects {
                        let c = model.cluster_of(verb, o).ok_or_else(|| {
                            Error::invalid(format!("no cluster assignment for ({verb}, {o})"))
                        })?;
                        entries.push(SlotEntry {
                            verb: verb.clone(),
                            object: o.clone(),
                            slot: next + c,
                        });
                    }
                    next += vc.cluster_count;
                }
            }
        }
        Ok(Self {
            scheme,
            k_c: next,
            entries,
            verb_slots,
            cluster_slots,
        })
    }

    pub fn slot(&self, verb: &str, object: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.verb == verb && e.object == object)
            .map(|e| e.slot)
    }

    pub fn verb_slot(&self, verb: &str) -> Option<usize> {
        self.verb_slots
            .iter()
            .find(|(v, _)| v == verb)
            .map(|(_, s)| *s)
    }

    pub fn cluster_slot(&self, verb: &str, cluster: usize) -> Option<usize> {
        self.cluster_slots
            .iter()
            .find(|c| c.verb == verb && c.cluster == cluster)
            .map(|c| c.slot)
    }

    /// Slot for a (verb, object) category that was not seen in training:
    /// the verb slot under SH, the routed cluster slot under CSP. SP has no
    /// slot for unseen objects.
    pub fn unseen_slot(
        &self,
        verb: &str,
        object_embedding: &[f64],
        clusters: Option<&ClusterModel>,
    ) -> Result<usize> {
        match self.scheme {
            Scheme::Shared => self
                .verb_slot(verb)
                .ok_or_else(|| Error::invalid(format!("unknown verb `{verb}`"))),
            Scheme::Specific => Err(Error::invalid(
                "SP classifiers have no slot for unseen objects",
            )),
            Scheme::Clustered => {
                let model =
                    clusters.ok_or_else(|| Error::invalid("routing needs a cluster model"))?;
                let c = model.route_unseen(verb, object_embedding)?;
                self.cluster_slot(verb, c)
                    .ok_or_else(|| Error::invalid(format!("no slot for ({verb}, cluster {c})")))
            }
        }
    }
}
