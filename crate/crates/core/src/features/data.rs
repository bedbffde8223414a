//! Pair samples, ground truth, vocabularies and their on-disk formats.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::encode::{POSE_DIM, SPATIAL_DIM};
use super::geometry::BoundingBox;
use crate::clustering::VerbObjectTable;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};

/// Category name used for human detections.
pub const HUMAN_CATEGORY: &str = "person";
/// Categories with fewer training positives than this are rare.
pub const RARE_THRESHOLD: usize = 10;

pub const VOCABULARY_FILE: &str = "vocabulary.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub category: String,
    pub score: f64,
}

impl Instance {
    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::invalid(format!(
                "detection score {} outside [0, 1]",
                self.score
            )));
        }
        Ok(())
    }
}

/// One candidate human-object pair with precomputed stream features.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    pub human: Instance,
    pub object: Instance,
    pub h_app: Vec<f64>,
    pub o_app: Vec<f64>,
    pub spatial: Vec<f64>,
    pub pose: Vec<f64>,
    pub union_app: Option<Vec<f64>>,
    pub interactiveness: f64,
    pub positives: BTreeSet<String>,
}

impl PairSample {
    /// Feature vector of stream `name` (`H`, `O`, `S`, `P` or `U`).
    pub fn stream(&self, name: &str) -> Option<&[f64]> {
        match name {
            "H" => Some(&self.h_app),
            "O" => Some(&self.o_app),
            "S" => Some(&self.spatial),
            "P" => Some(&self.pose),
            "U" => self.union_app.as_deref(),
            _ => None,
        }
    }

    pub fn appearance_dim(&self) -> usize {
        self.h_app.len()
    }

    pub fn validate(&self, valid: Option<&BTreeSet<(String, String)>>) -> Result<()> {
        self.human.validate()?;
        self.object.validate()?;
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        let k_a = self.h_app.len();
        if k_a == 0 || self.o_app.len() != k_a {
            return Err(Error::invalid(format!(
                "appearance features must be non-empty and equal length (H {}, O {})",
                k_a,
                self.o_app.len()
            )));
        }
        if let Some(u) = &self.union_app {
            if u.len() != k_a {
                return Err(Error::invalid(format!(
                    "union feature has {} values, expected {k_a}",
                    u.len()
                )));
            }
        }
        if self.spatial.len() != SPATIAL_DIM {
            return Err(Error::invalid(format!(
                "spatial feature has {} values, expected {SPATIAL_DIM}",
                self.spatial.len()
            )));
        }
        if self.pose.len() != POSE_DIM {
            return Err(Error::invalid(format!(
                "pose feature has {} values, expected {POSE_DIM}",
                self.pose.len()
            )));
        }
        let all = [&self.h_app, &self.o_app, &self.spatial, &self.pose]
            .into_iter()
            .chain(self.union_app.as_ref());
        for v in all {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("feature vector contains a non-finite value"));
            }
        }
        if !(0.0..=1.0).contains(&self.interactiveness) {
            return Err(Error::invalid(format!(
                "interactiveness {} outside [0, 1]",
                self.interactiveness
            )));
        }
        if let Some(valid) = valid {
            for verb in &self.positives {
                if !valid.contains(&(verb.clone(), self.object.category.clone())) {
                    return Err(Error::invalid(format!(
                        "verb `{verb}` is not valid for object `{}`",
                        self.object.category
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(rename = "image")]
    pub image_id: String,
    pub verb: String,
    pub object: String,
    pub human_box: BoundingBox,
    pub object_box: BoundingBox,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub verbs: Vec<String>,
    pub objects: Vec<String>,
    /// Valid (verb, object) categories.
    pub pairs: Vec<(String, String)>,
    /// Categories held out of training, present only at zero-shot test time.
    #[serde(default)]
    pub unseen_pairs: Vec<(String, String)>,
}

impl Vocabulary {
    pub fn validate(&self) -> Result<()> {
        let verbs: BTreeSet<&str> = self.verbs.iter().map(String::as_str).collect();
        let objects: BTreeSet<&str> = self.objects.iter().map(String::as_str).collect();
        if verbs.len() != self.verbs.len() || objects.len() != self.objects.len() {
            return Err(Error::invalid("vocabulary lists a verb or object twice"));
        }
        let mut seen = BTreeSet::new();
        for (v, o) in self.pairs.iter().chain(&self.unseen_pairs) {
            if !verbs.contains(v.as_str()) || !objects.contains(o.as_str()) {
                return Err(Error::invalid(format!(
                    "vocabulary pair ({v}, {o}) uses an unlisted verb or object"
                )));
            }
            if !seen.insert((v, o)) {
                return Err(Error::invalid(format!(
                    "vocabulary pair ({v}, {o}) listed twice"
                )));
            }
        }
        Ok(())
    }

    /// Seen and unseen categories together.
    pub fn all_pairs(&self) -> BTreeSet<(String, String)> {
        self.pairs
            .iter()
            .chain(&self.unseen_pairs)
            .cloned()
            .collect()
    }

    pub fn table(&self) -> VerbObjectTable {
        let mut t = VerbObjectTable::new();
        for (v, o) in &self.pairs {
            t.entry(v.clone()).or_default().insert(o.clone());
        }
        t
    }

    /// Verbs valid for `object` among seen and unseen categories, in verb order.
    pub fn verbs_for(&self, object: &str) -> Vec<String> {
        let valid = self.all_pairs();
        self.verbs
            .iter()
            .filter(|v| valid.contains(&((*v).clone(), object.to_owned())))
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocabulary: Vocabulary,
    pub embeddings: EmbeddingTable,
    pub train: Vec<PairSample>,
    pub test: Vec<PairSample>,
    pub ground_truth: Vec<GroundTruth>,
}

impl Dataset {
    /// Positive training samples per (verb, object) category.
    pub fn training_counts(&self) -> BTreeMap<(String, String), usize> {
        let mut counts = BTreeMap::new();
        for s in &self.train {
            for v in &s.positives {
                *counts
                    .entry((v.clone(), s.object.category.clone()))
                    .or_default() += 1;
            }
        }
        counts
    }

    /// Valid objects per verb as observed in the training annotations.
    pub fn training_table(&self) -> VerbObjectTable {
        let mut t = VerbObjectTable::new();
        for (v, o) in self.training_counts().into_keys() {
            t.entry(v).or_default().insert(o);
        }
        t
    }

    pub fn rare_categories(&self) -> BTreeSet<(String, String)> {
        self.training_counts()
            .into_iter()
            .filter(|(_, n)| *n < RARE_THRESHOLD)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn appearance_dim(&self) -> usize {
        self.train
            .first()
            .or(self.test.first())
            .map_or(0, PairSample::appearance_dim)
    }

    pub fn has_union_stream(&self) -> bool {
        self.train
            .first()
            .or(self.test.first())
            .is_some_and(|s| s.union_app.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        self.vocabulary.validate()?;
        let valid = self.vocabulary.all_pairs();
        let k_a = self.appearance_dim();
        let union = self.has_union_stream();
        for (split, samples) in [("train", &self.train), ("test", &self.test)] {
            for (i, s) in samples.iter().enumerate() {
                let ctx = |e: Error| Error::invalid(format!("{split} record {i}: {e}"));
                s.validate(Some(&valid)).map_err(ctx)?;
                if s.appearance_dim() != k_a || s.union_app.is_some() != union {
                    return Err(ctx(Error::invalid(
                        "appearance streams differ from the first record",
                    )));
                }
            }
        }
        for (i, g) in self.ground_truth.iter().enumerate() {
            if !valid.contains(&(g.verb.clone(), g.object.clone())) {
                return Err(Error::invalid(format!(
                    "ground truth record {i}: ({}, {}) is not a vocabulary category",
                    g.verb, g.object
                )));
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let vocab_path = dir.join(VOCABULARY_FILE);
        let vocab_text = fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
        let vocabulary: Vocabulary =
            serde_json::from_str(&vocab_text).map_err(|e| Error::Parse {
                path: vocab_path.clone(),
                line: e.line(),
                msg: e.to_string(),
            })?;
        let ds = Self {
            vocabulary,
            embeddings: EmbeddingTable::load(&dir.join(EMBEDDINGS_FILE))?,
            train: read_pairs(&dir.join(TRAIN_FILE))?,
            test: read_pairs(&dir.join(TEST_FILE))?,
            ground_truth: read_ground_truth(&dir.join(GROUND_TRUTH_FILE))?,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| -> Result<()> {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write(
            VOCABULARY_FILE,
            serde_json::to_string_pretty(&self.vocabulary)? + "\n",
        )?;
        write(EMBEDDINGS_FILE, self.embeddings.to_text())?;
        write(TRAIN_FILE, pairs_to_jsonl(&self.train))?;
        write(TEST_FILE, pairs_to_jsonl(&self.test))?;
        write(
            GROUND_TRUTH_FILE,
            ground_truth_to_jsonl(&self.ground_truth)?,
        )?;
        Ok(())
    }
}

/// Little-endian `f64` bytes, base-64 encoded.
pub fn encode_payload(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

/// Accepts either a base-64 string from [`encode_payload`] or a plain array.
pub fn decode_payload(value: &Value) -> std::result::Result<Vec<f64>, String> {
    match value {
        Value::String(s) => {
            let bytes = STANDARD
                .decode(s)
                .map_err(|e| format!("bad base-64 payload: {e}"))?;
            if bytes.len() % 8 != 0 {
                return Err(format!(
                    "payload of {} bytes is not a whole number of f64",
                    bytes.len()
                ));
            }
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        }
        Value::Array(items) => items
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| format!("`{v}` is not a number")))
            .collect(),
        other => Err(format!(
            "feature payload must be a string or array, got {other}"
        )),
    }
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    image: String,
    width: f64,
    height: f64,
    human: Instance,
    object: Instance,
    features: BTreeMap<String, Value>,
    #[serde(default = "one")]
    interactiveness: f64,
    #[serde(default)]
    positives: Vec<String>,
}

fn one() -> f64 {
    1.0
}

impl PairRecord {
    fn from_sample(s: &PairSample) -> Self {
        let mut features = BTreeMap::new();
        let mut put = |k: &str, v: &[f64]| {
            features.insert(k.to_owned(), Value::String(encode_payload(v)));
        };
        put("H", &s.h_app);
        put("O", &s.o_app);
        put("S", &s.spatial);
        put("P", &s.pose);
        if let Some(u) = &s.union_app {
            put("U", u);
        }
        Self {
            image: s.image_id.clone(),
            width: s.width,
            height: s.height,
            human: s.human.clone(),
            object: s.object.clone(),
            features,
            interactiveness: s.interactiveness,
            positives: s.positives.iter().cloned().collect(),
        }
    }

    fn into_sample(mut self) -> std::result::Result<PairSample, String> {
        let mut take = |k: &str| -> std::result::Result<Option<Vec<f64>>, String> {
            self.features
                .remove(k)
                .map(|v| decode_payload(&v).map_err(|e| format!("stream {k}: {e}")))
                .transpose()
        };
        let need = |v: Option<Vec<f64>>, k: &str| v.ok_or_else(|| format!("missing stream {k}"));
        let h_app = need(take("H")?, "H")?;
        let o_app = need(take("O")?, "O")?;
        let spatial = need(take("S")?, "S")?;
        let pose = need(take("P")?, "P")?;
        let union_app = take("U")?;
        if let Some(k) = self.features.keys().next() {
            return Err(format!("unknown stream `{k}`"));
        }
        let positives: BTreeSet<String> = self.positives.iter().cloned().collect();
        if positives.len() != self.positives.len() {
            return Err("positive verb listed twice".into());
        }
        Ok(PairSample {
            image_id: self.image,
            width: self.width,
            height: self.height,
            human: self.human,
            object: self.object,
            h_app,
            o_app,
            spatial,
            pose,
            union_app,
            interactiveness: self.interactiveness,
            positives,
        })
    }
}

pub fn pairs_to_jsonl(samples: &[PairSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(&PairRecord::from_sample(s)).expect("pair record"));
        out.push('\n');
    }
    out
}

fn parse_error(path: &Path, line: usize, msg: String) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        msg,
    }
}

/// Parses pair records; errors name the 1-based line of the offending record.
pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<PairSample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord = serde_json::from_str(line)
            .map_err(|e| parse_error(path, i + 1, format!("record {}: {e}", out.len())))?;
        let sample = record
            .into_sample()
            .map_err(|e| parse_error(path, i + 1, format!("record {}: {e}", out.len())))?;
        sample
            .validate(None)
            .map_err(|e| parse_error(path, i + 1, format!("record {}: {e}", out.len())))?;
        out.push(sample);
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<PairSample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, path)
}

pub fn ground_truth_to_jsonl(records: &[GroundTruth]) -> Result<String> {
    let mut out = String::new();
    for g in records {
        out.push_str(&serde_json::to_string(g)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruth>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let g: GroundTruth = serde_json::from_str(line)
            .map_err(|e| parse_error(path, i + 1, format!("record {}: {e}", out.len())))?;
        out.push(g);
    }
    Ok(out)
}

/// Keeps, per category, the 10 highest-scoring instances and then drops
/// those scoring below 0.01. Returns indices into `instances` in input order.
pub fn filter_proposals(instances: &[Instance]) -> Vec<usize> {
    const TOP_K: usize = 10;
    const MIN_SCORE: f64 = 0.01;
    let mut by_category: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        by_category.entry(&inst.category).or_default().push(i);
    }
    let mut keep = Vec::new();
    for mut idx in by_category.into_values() {
        // stable sort keeps input order among equal scores
        idx.sort_by(|&a, &b| instances[b].score.total_cmp(&instances[a].score));
        keep.extend(
            idx.into_iter()
                .take(TOP_K)
                .filter(|&i| instances[i].score >= MIN_SCORE),
        );
    }
    keep.sort_unstable();
    keep
}
