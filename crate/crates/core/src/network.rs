//! The verb-classification network: language-guided channel attention on
//! appearance streams, prior concatenation on vector streams, per-stream
//! blocks with slot-selected outputs and prior-driven stream fusion.
//!
//! One graph evaluates a batch of rows; a row is one (pair, verb) query.
//! Graph inputs:
//!
//! | name      | shape            |
//! |-----------|------------------|
//! | `prior`   | `[n, prior_dim]` |
//! | `feat.X`  | `[n, dim_X]`     |
//! | `slot`    | `[n, k_c]` one-hot |
//! | `label`   | `[n, 1]` (training) |
//! | `weight`  | `[n, 1]` (training) |

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{ClassifierIndex, ClusterModel, Scheme};
use crate::diffmath::{
    checkpoint, grad_check, Evaluation, GradCheckOptions, GradCheckReport, Graph, GraphBuilder,
    Inputs, NodeId, ParamCheck, ParamStore, Tensor,
};
use crate::embeddings::{make_prior, EmbeddingTable, PRIOR_DIM};
use crate::error::{Error, Result};
use crate::features::{PairSample, POSE_DIM, SPATIAL_DIM};
use crate::scalar::Scalar;
use crate::seed;

/// Hidden width of the fusion head.
pub const PAMF_HIDDEN: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    /// Refined by channel attention.
    Appearance,
    /// Augmented with the language prior.
    Vector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub name: String,
    pub kind: StreamKind,
    pub dim: usize,
}

impl StreamSpec {
    pub fn appearance(name: &str, dim: usize) -> Self {
        Self {
            name: name.to_owned(),
            kind: StreamKind::Appearance,
            dim,
        }
    }

    pub fn vector(name: &str, dim: usize) -> Self {
        Self {
            name: name.to_owned(),
            kind: StreamKind::Vector,
            dim,
        }
    }

    /// H, O, S and P; with `union` an extra appearance stream U.
    pub fn standard(k_a: usize, union: bool) -> Vec<Self> {
        let mut v = vec![
            Self::appearance("H", k_a),
            Self::appearance("O", k_a),
            Self::vector("S", SPATIAL_DIM),
            Self::vector("P", POSE_DIM),
        ];
        if union {
            v.push(Self::appearance("U", k_a));
        }
        v
    }

    fn validate(&self, k_a: usize) -> Result<()> {
        let expected = match self.name.as_str() {
            "H" | "O" | "U" => (StreamKind::Appearance, k_a),
            "S" => (StreamKind::Vector, SPATIAL_DIM),
            "P" => (StreamKind::Vector, POSE_DIM),
            other => return Err(Error::invalid(format!("unknown stream `{other}`"))),
        };
        if (self.kind, self.dim) != expected {
            return Err(Error::invalid(format!(
                "stream {} must be {:?} with {} values, got {:?} with {}",
                self.name, expected.0, expected.1, self.kind, self.dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LpcaVariant {
    #[serde(rename = "full")]
    Full,
    /// Attention from the appearance feature alone.
    #[serde(rename = "plain-CA")]
    PlainCa,
    /// Full graph without the auxiliary verification loss.
    #[serde(rename = "no-S_au")]
    NoSau,
    /// The prior-weighted feature goes straight to the block.
    #[serde(rename = "no-C_att")]
    NoCatt,
    /// Attention from the projected prior concatenated with the feature.
    #[serde(rename = "concat-DA")]
    ConcatDa,
    #[serde(rename = "off")]
    Off,
}

impl LpcaVariant {
    pub const ALL: [LpcaVariant; 6] = [
        LpcaVariant::Full,
        LpcaVariant::PlainCa,
        LpcaVariant::NoSau,
        LpcaVariant::NoCatt,
        LpcaVariant::ConcatDa,
        LpcaVariant::Off,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LpcaVariant::Full => "full",
            LpcaVariant::PlainCa => "plain-CA",
            LpcaVariant::NoSau => "no-S_au",
            LpcaVariant::NoCatt => "no-C_att",
            LpcaVariant::ConcatDa => "concat-DA",
            LpcaVariant::Off => "off",
        }
    }

    fn projects_prior(self) -> bool {
        matches!(
            self,
            LpcaVariant::Full | LpcaVariant::NoSau | LpcaVariant::NoCatt | LpcaVariant::ConcatDa
        )
    }

    /// Whether the auxiliary score enters the training loss.
    pub fn auxiliary_loss(self) -> bool {
        matches!(
            self,
            LpcaVariant::Full | LpcaVariant::NoCatt | LpcaVariant::ConcatDa
        )
    }
}

impl fmt::Display for LpcaVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LpcaVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|v| v.name().to_ascii_lowercase().replace('_', "-") == key)
            .ok_or_else(|| Error::invalid(format!("unknown LPCA variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub lpca: LpcaVariant,
    pub lpfa: bool,
    pub pamf: bool,
    pub scheme: Scheme,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            lpca: LpcaVariant::Full,
            lpfa: true,
            pamf: true,
            scheme: Scheme::Clustered,
        }
    }
}

impl AblationConfig {
    /// Shared classifiers without any prior-driven component.
    pub fn baseline() -> Self {
        Self {
            lpca: LpcaVariant::Off,
            lpfa: false,
            pamf: false,
            scheme: Scheme::Shared,
        }
    }

    /// Short label such as `CSP/full/lpfa/pamf`.
    pub fn label(&self) -> String {
        let mut s = format!("{}/{}", self.scheme, self.lpca);
        if self.lpfa {
            s.push_str("/lpfa");
        }
        if self.pamf {
            s.push_str("/pamf");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub streams: Vec<StreamSpec>,
    pub k_a: usize,
    pub k_c: usize,
    pub prior_dim: usize,
    /// Caps the hidden width of the stream blocks; `None` uses the input width.
    pub block_hidden: Option<usize>,
    pub ablation: AblationConfig,
}

impl ModelConfig {
    pub fn new(k_a: usize, k_c: usize, ablation: AblationConfig) -> Self {
        Self {
            streams: StreamSpec::standard(k_a, false),
            k_a,
            k_c,
            prior_dim: PRIOR_DIM,
            block_hidden: None,
            ablation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_c == 0 {
            return Err(Error::invalid("K_C must be at least 1"));
        }
        if self.k_a == 0 || self.prior_dim == 0 {
            return Err(Error::invalid("K_A and the prior width must be positive"));
        }
        if self.block_hidden == Some(0) {
            return Err(Error::invalid("block_hidden must be positive"));
        }
        if self.streams.is_empty() {
            return Err(Error::invalid("at least one stream is required"));
        }
        for (i, s) in self.streams.iter().enumerate() {
            s.validate(self.k_a)?;
            if self.streams[..i].iter().any(|t| t.name == s.name) {
                return Err(Error::invalid(format!("stream {} listed twice", s.name)));
            }
        }
        Ok(())
    }

    fn attention_hidden(&self) -> usize {
        (self.k_a / 2).max(1)
    }

    fn block_input(&self, s: &StreamSpec) -> usize {
        match s.kind {
            StreamKind::Vector if self.ablation.lpfa => s.dim + self.prior_dim,
            _ => s.dim,
        }
    }

    fn block_hidden_width(&self, input: usize) -> usize {
        self.block_hidden.map_or(input, |cap| cap.min(input))
    }

    fn block_layers(s: &StreamSpec) -> usize {
        match s.kind {
            StreamKind::Appearance => 2,
            StreamKind::Vector => 3,
        }
    }

    /// Every parameter tensor with its `[fan_in, fan_out]` shape.
    pub fn param_shapes(&self) -> BTreeMap<String, (usize, usize)> {
        let mut shapes = BTreeMap::new();
        let k_a = self.k_a;
        let half = self.attention_hidden();
        let lpca = self.ablation.lpca;
        for s in &self.streams {
            let n = &s.name;
            if s.kind == StreamKind::Appearance {
                if lpca.projects_prior() {
                    shapes.insert(format!("lpca.{n}.proj1"), (self.prior_dim, half));
                    shapes.insert(format!("lpca.{n}.proj2"), (half, k_a));
                }
                match lpca {
                    LpcaVariant::Full | LpcaVariant::NoSau | LpcaVariant::PlainCa => {
                        shapes.insert(format!("lpca.{n}.att1"), (k_a, half));
                        shapes.insert(format!("lpca.{n}.att2"), (half, k_a));
                    }
                    LpcaVariant::ConcatDa => {
                        shapes.insert(format!("lpca.{n}.att1"), (2 * k_a, half));
                        shapes.insert(format!("lpca.{n}.att2"), (half, k_a));
                    }
                    LpcaVariant::NoCatt | LpcaVariant::Off => {}
                }
            }
            let input = self.block_input(s);
            let hidden = self.block_hidden_width(input);
            let layers = Self::block_layers(s);
            for l in 1..=layers {
                let fan_in = if l == 1 { input } else { hidden };
                let fan_out = if l == layers { self.k_c } else { hidden };
                shapes.insert(format!("block.{n}.fc{l}"), (fan_in, fan_out));
            }
        }
        if self.ablation.pamf {
            shapes.insert("pamf.fc1".into(), (self.prior_dim, PAMF_HIDDEN));
            shapes.insert("pamf.fc2".into(), (PAMF_HIDDEN, self.streams.len()));
        }
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.param_shapes().values().map(|(i, o)| i * o + o).sum()
    }
}

/// Symmetric uniform weights with bound `1/sqrt(fan_in)`, zero biases.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed_value: u64) -> Result<ParamStore<T>> {
    config.validate()?;
    let mut params = ParamStore::new();
    for (name, (fan_in, fan_out)) in config.param_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, &name));
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w: Vec<T> = (0..fan_in * fan_out)
            .map(|_| T::lit(rng.random_range(-bound..=bound)))
            .collect();
        params.insert(format!("{name}.w"), Tensor::matrix(fan_in, fan_out, w)?);
        params.insert(format!("{name}.b"), Tensor::zeros(&[fan_out]));
    }
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphMode {
    /// Adds the loss and every auxiliary score.
    Train,
    /// Final scores only; auxiliary scores are skipped.
    Infer,
}

/// A built network graph and its notable nodes.
#[derive(Debug, Clone)]
pub struct ModelGraph<T> {
    pub graph: Graph<T>,
    pub mode: GraphMode,
    pub s_pd: NodeId,
    pub loss: Option<NodeId>,
}

fn dense_stack<T: Scalar>(
    b: &mut GraphBuilder<T>,
    x: NodeId,
    prefix: &str,
    layers: usize,
) -> Result<NodeId> {
    let mut h = x;
    for l in 1..=layers {
        h = b.dense(h, &format!("{prefix}.fc{l}"))?;
        if l < layers {
            h = b.relu(h);
        }
    }
    Ok(h)
}

/// Builds the graph for `config`. Outputs: `s_pd`, `logit.X`, `refined.X`,
/// `c_att.X`, `s_au.X`, `pamf`, and in training mode `loss`, `loss.pd` and
/// `loss.au.X`.
pub fn build_graph<T: Scalar>(config: &ModelConfig, mode: GraphMode) -> Result<ModelGraph<T>> {
    config.validate()?;
    let mut b = GraphBuilder::<T>::new();
    let prior = b.input("prior");
    let slot = b.input("slot");
    let lpca = config.ablation.lpca;
    let mut logits = Vec::new();
    let mut aux = Vec::new();

    for s in &config.streams {
        let n = &s.name;
        let feat = b.input(&format!("feat.{n}"));
        let refined = match s.kind {
            StreamKind::Appearance => {
                let l_a = if lpca.projects_prior() {
                    let h = b.dense(prior, &format!("lpca.{n}.proj1"))?;
                    let h = b.relu(h);
                    let p = b.dense(h, &format!("lpca.{n}.proj2"))?;
                    Some(b.l2_normalize(p))
                } else {
                    None
                };
                let l_b = l_a.map(|l| b.hadamard(feat, l));
                if let (Some(l_b), GraphMode::Train) = (l_b, mode) {
                    let sum = b.sum_elements(l_b);
                    let s_au = b.sigmoid(sum);
                    b.output(&format!("s_au.{n}"), s_au);
                    if lpca.auxiliary_loss() {
                        aux.push((n.clone(), s_au));
                    }
                }
                let attention_input = match (lpca, l_a, l_b) {
                    (LpcaVariant::Full | LpcaVariant::NoSau, _, Some(l_b)) => Some(l_b),
                    (LpcaVariant::PlainCa, _, _) => Some(feat),
                    (LpcaVariant::ConcatDa, Some(l_a), _) => Some(b.concat(&[l_a, feat])),
                    _ => None,
                };
                match (attention_input, lpca) {
                    (Some(x), _) => {
                        let h = b.dense(x, &format!("lpca.{n}.att1"))?;
                        let h = b.relu(h);
                        let d = b.dense(h, &format!("lpca.{n}.att2"))?;
                        let c_att = b.sigmoid(d);
                        b.output(&format!("c_att.{n}"), c_att);
                        b.hadamard(feat, c_att)
                    }
                    (None, LpcaVariant::NoCatt) => l_b.expect("no-C_att projects the prior"),
                    (None, _) => feat,
                }
            }
            StreamKind::Vector if config.ablation.lpfa => b.concat(&[feat, prior]),
            StreamKind::Vector => feat,
        };
        b.output(&format!("refined.{n}"), refined);
        let out = dense_stack(
            &mut b,
            refined,
            &format!("block.{n}"),
            ModelConfig::block_layers(s),
        )?;
        let picked = b.hadamard(out, slot);
        let logit = b.sum_elements(picked);
        b.output(&format!("logit.{n}"), logit);
        logits.push(logit);
    }

    let stacked = b.concat(&logits);
    let fused = if config.ablation.pamf {
        let h = b.dense(prior, "pamf.fc1")?;
        let h = b.relu(h);
        let a = b.dense(h, "pamf.fc2")?;
        let a = b.sigmoid(a);
        b.output("pamf", a);
        let weighted = b.hadamard(stacked, a);
        b.sum_elements(weighted)
    } else {
        b.sum_elements(stacked)
    };
    let s_pd = b.sigmoid(fused);
    b.output("s_pd", s_pd);

    let loss = if mode == GraphMode::Train {
        let label = b.input("label");
        let weight = b.input("weight");
        let pd = b.bce(s_pd, label, Some(weight));
        b.output("loss.pd", pd);
        let mut terms = vec![pd];
        for (n, s_au) in &aux {
            let t = b.bce(*s_au, label, Some(weight));
            b.output(&format!("loss.au.{n}"), t);
            terms.push(t);
        }
        let total = if terms.len() == 1 {
            terms[0]
        } else {
            let c = b.concat(&terms);
            b.sum_elements(c)
        };
        b.output("loss", total);
        Some(total)
    } else {
        None
    };

    Ok(ModelGraph {
        graph: b.build(),
        mode,
        s_pd,
        loss,
    })
}

/// `[feature ∥ prior]`.
pub fn lpfa_augment(feature: &[f64], prior: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(feature.len() + prior.len());
    v.extend_from_slice(feature);
    v.extend_from_slice(prior);
    v
}

/// Final detection score `S_h · S_o · S_PD · S_I`.
pub fn score_hoi(s_h: f64, s_o: f64, s_pd: f64, s_i: f64) -> Result<f64> {
    for (name, v) in [("S_h", s_h), ("S_o", s_o), ("S_PD", s_pd), ("S_I", s_i)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} = {v} outside [0, 1]")));
        }
    }
    Ok(s_h * s_o * s_pd * s_i)
}

/// One (pair, verb) query.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub prior: Vec<f64>,
    /// Feature vector per stream name.
    pub features: BTreeMap<String, Vec<f64>>,
    pub slot: usize,
    pub label: f64,
    pub weight: f64,
}

/// Packs rows into graph inputs.
pub fn batch_inputs<T: Scalar, R: Borrow<Row>>(
    config: &ModelConfig,
    rows: &[R],
    with_targets: bool,
) -> Result<Inputs<T>> {
    if rows.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = rows.len();
    let lit = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
    let mut inputs = Inputs::new();
    let mut prior = Vec::with_capacity(n * config.prior_dim);
    for r in rows.iter().map(Borrow::borrow) {
        if r.prior.len() != config.prior_dim {
            return Err(Error::invalid(format!(
                "prior has {} values, expected {}",
                r.prior.len(),
                config.prior_dim
            )));
        }
        prior.extend(lit(&r.prior));
    }
    inputs.insert("prior".into(), Tensor::matrix(n, config.prior_dim, prior)?);
    for s in &config.streams {
        let mut data = Vec::with_capacity(n * s.dim);
        for r in rows.iter().map(Borrow::borrow) {
            let f = r
                .features
                .get(&s.name)
                .ok_or_else(|| Error::invalid(format!("row lacks stream {}", s.name)))?;
            if f.len() != s.dim {
                return Err(Error::invalid(format!(
                    "stream {} has {} values, expected {}",
                    s.name,
                    f.len(),
                    s.dim
                )));
            }
            data.extend(lit(f));
        }
        inputs.insert(format!("feat.{}", s.name), Tensor::matrix(n, s.dim, data)?);
    }
    let mut slot = vec![T::zero(); n * config.k_c];
    for (i, r) in rows.iter().map(Borrow::borrow).enumerate() {
        if r.slot >= config.k_c {
            return Err(Error::invalid(format!(
                "slot {} out of range for K_C = {}",
                r.slot, config.k_c
            )));
        }
        slot[i * config.k_c + r.slot] = T::one();
    }
    inputs.insert("slot".into(), Tensor::matrix(n, config.k_c, slot)?);
    if with_targets {
        let label = rows.iter().map(|r| T::lit(r.borrow().label)).collect();
        let weight = rows.iter().map(|r| T::lit(r.borrow().weight)).collect();
        inputs.insert("label".into(), Tensor::matrix(n, 1, label)?);
        inputs.insert("weight".into(), Tensor::matrix(n, 1, weight)?);
    }
    Ok(inputs)
}

/// Header stored alongside checkpoint parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub config: ModelConfig,
    pub index: ClassifierIndex,
    pub clusters: Option<ClusterModel>,
    pub cluster_digest: Option<String>,
    pub parameter_count: usize,
}

/// A configured network with its parameters and classifier index.
#[derive(Debug, Clone)]
pub struct PdNet<T> {
    pub config: ModelConfig,
    pub index: ClassifierIndex,
    pub clusters: Option<ClusterModel>,
    pub params: ParamStore<T>,
}

impl<T: Scalar> PdNet<T> {
    pub fn new(
        config: ModelConfig,
        index: ClassifierIndex,
        clusters: Option<ClusterModel>,
        seed_value: u64,
    ) -> Result<Self> {
        if index.k_c != config.k_c {
            return Err(Error::invalid(format!(
                "index has K_C = {}, model expects {}",
                index.k_c, config.k_c
            )));
        }
        if index.scheme != config.ablation.scheme {
            return Err(Error::invalid(format!(
                "index scheme {} differs from model scheme {}",
                index.scheme, config.ablation.scheme
            )));
        }
        if index.scheme == Scheme::Clustered && clusters.is_none() {
            return Err(Error::invalid("CSP models need their cluster model"));
        }
        let params = init_params(&config, seed_value)?;
        Ok(Self {
            config,
            index,
            clusters,
            params,
        })
    }

    pub fn graph(&self, mode: GraphMode) -> Result<ModelGraph<T>> {
        build_graph(&self.config, mode)
    }

    /// Classifier slot of (verb, object). Without `zero_shot` only categories
    /// known to the index are accepted; with it, unseen objects are routed.
    pub fn slot_for(
        &self,
        verb: &str,
        object: &str,
        embeddings: &EmbeddingTable,
        zero_shot: bool,
    ) -> Result<usize> {
        if let Some(s) = self.index.slot(verb, object) {
            return Ok(s);
        }
        if !zero_shot {
            return Err(Error::invalid(format!(
                "({verb}, {object}) is not a known category"
            )));
        }
        let e = embeddings.lookup(object)?;
        self.index.unseen_slot(verb, &e, self.clusters.as_ref())
    }

    /// Builds the query row of `pair` for `verb`.
    pub fn row(
        &self,
        pair: &PairSample,
        verb: &str,
        embeddings: &EmbeddingTable,
        zero_shot: bool,
    ) -> Result<Row> {
        let object = &pair.object.category;
        let slot = self.slot_for(verb, object, embeddings, zero_shot)?;
        let prior = make_prior(embeddings, verb, object)?.values;
        let mut features = BTreeMap::new();
        for s in &self.config.streams {
            let f = pair
                .stream(&s.name)
                .ok_or_else(|| Error::invalid(format!("pair lacks stream {}", s.name)))?;
            features.insert(s.name.clone(), f.to_vec());
        }
        Ok(Row {
            prior,
            features,
            slot,
            label: if pair.positives.contains(verb) {
                1.0
            } else {
                0.0
            },
            weight: 1.0,
        })
    }

    pub fn evaluate<R: Borrow<Row>>(
        &self,
        graph: &ModelGraph<T>,
        rows: &[R],
    ) -> Result<Evaluation<T>> {
        let inputs = batch_inputs::<T, R>(&self.config, rows, graph.mode == GraphMode::Train)?;
        graph.graph.evaluate(&self.params, &inputs)
    }

    /// `S_PD` of every row.
    pub fn classify_rows<R: Borrow<Row>>(
        &self,
        graph: &ModelGraph<T>,
        rows: &[R],
    ) -> Result<Vec<f64>> {
        let ev = self.evaluate(graph, rows)?;
        Ok(ev
            .value(graph.s_pd)
            .data()
            .iter()
            .map(|v| v.as_f64())
            .collect())
    }

    pub fn classify_pair(
        &self,
        pair: &PairSample,
        verb: &str,
        embeddings: &EmbeddingTable,
        zero_shot: bool,
    ) -> Result<f64> {
        let row = self.row(pair, verb, embeddings, zero_shot)?;
        let g = self.graph(GraphMode::Infer)?;
        Ok(self.classify_rows(&g, &[row])?[0])
    }

    pub fn header(&self) -> Result<ModelHeader> {
        Ok(ModelHeader {
            config: self.config.clone(),
            index: self.index.clone(),
            clusters: self.clusters.clone(),
            cluster_digest: self
                .clusters
                .as_ref()
                .map(ClusterModel::digest)
                .transpose()?,
            parameter_count: self.config.parameter_count(),
        })
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        let header = serde_json::to_value(self.header()?)?;
        checkpoint::encode_params(header, &self.params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()?).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint. A provided cluster manifest must match the digest
    /// recorded in the header, and `scheme` (when given) the stored scheme.
    pub fn load(
        path: &Path,
        manifest: Option<&ClusterModel>,
        scheme: Option<Scheme>,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text, path, manifest, scheme)
    }

    pub fn from_checkpoint(
        text: &str,
        path: &Path,
        manifest: Option<&ClusterModel>,
        scheme: Option<Scheme>,
    ) -> Result<Self> {
        let (header, params) = checkpoint::decode_params::<T>(text, path)?;
        let header: ModelHeader = serde_json::from_value(header).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: 0,
            msg: format!("checkpoint header: {e}"),
        })?;
        if let Some(want) = scheme {
            if want != header.config.ablation.scheme {
                return Err(Error::invalid(format!(
                    "checkpoint uses scheme {}, configuration asks for {want}",
                    header.config.ablation.scheme
                )));
            }
        }
        if let Some(m) = manifest {
            let digest = m.digest()?;
            if header.cluster_digest.as_deref() != Some(digest.as_str()) {
                return Err(Error::invalid(format!(
                    "cluster manifest digest {digest} does not match the checkpoint ({})",
                    header.cluster_digest.as_deref().unwrap_or("none")
                )));
            }
        }
        let shapes = header.config.param_shapes();
        for (name, (i, o)) in &shapes {
            let w = params.get(&format!("{name}.w"));
            let b = params.get(&format!("{name}.b"));
            let ok =
                w.is_some_and(|w| w.shape() == [*i, *o]) && b.is_some_and(|b| b.shape() == [*o]);
            if !ok {
                return Err(Error::invalid(format!(
                    "checkpoint parameter {name} is missing or has the wrong shape"
                )));
            }
        }
        if params.len() != 2 * shapes.len() {
            return Err(Error::invalid("checkpoint has unexpected parameters"));
        }
        Ok(Self {
            config: header.config,
            index: header.index,
            clusters: header.clusters,
            params,
        })
    }
}


/// Finite-difference check of the composed network for every LPCA variant
/// (fusion and prior concatenation on). Each of `points` seeded draws
/// re-samples the parameters (biases included) and a two-row batch and checks
/// one random entry of every parameter tensor. Blocks are capped at 16 hidden units.
pub fn network_grad_check(
    k_a: usize,
    k_c: usize,
    points: usize,
    seed_value: u64,
) -> Result<Vec<(String, GradCheckReport)>> {
    let mut out = Vec::new();
    for variant in LpcaVariant::ALL {
        let ablation = AblationConfig {
            lpca: variant,
            ..AblationConfig::default()
        };
        let config = ModelConfig {
            block_hidden: Some(16),
            ..ModelConfig::new(k_a, k_c, ablation)
        };
        let g = build_graph::<f64>(&config, GraphMode::Train)?;
        let loss = g.loss.expect("training graph");
        let mut merged: BTreeMap<String, ParamCheck> = BTreeMap::new();
        let opts = GradCheckOptions::default();
        for p in 0..points {
            let point_seed = seed::derive(seed_value, &format!("{variant}.{p}"));
            let mut params = init_params::<f64>(&config, point_seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(point_seed);
            // zero biases put dead-ReLU rows exactly on the kink of the
            // normalisation at the origin
            for (name, t) in params.iter_mut() {
                if name.ends_with(".b") {
                    for v in t.data_mut() {
                        *v = rng.random_range(-0.1..0.1);
                    }
                }
            }
            let mut uniform =
                |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
            let rows: Vec<Row> = (0..2)
                .map(|i| Row {
                    prior: uniform(config.prior_dim),
                    features: config
                        .streams
                        .iter()
                        .map(|s| (s.name.clone(), uniform(s.dim)))
                        .collect(),
                    slot: (p + i) % k_c,
                    label: (i % 2) as f64,
                    weight: 0.5,
                })
                .collect();
            let inputs = batch_inputs::<f64, Row>(&config, &rows, true)?;
            let report = grad_check(
                &g.graph,
                &params,
                &inputs,
                loss,
                &GradCheckOptions {
                    max_entries: Some(1),
                    seed: point_seed,
                    ..opts
                },
            )?;
            for c in report.params {
                let m = merged.entry(c.name.clone()).or_insert(ParamCheck {
                    name: c.name.clone(),
                    entries_checked: 0,
                    max_rel_error: 0.0,
                    max_abs_gradient: 0.0,
                    passed: true,
                });
                m.entries_checked += c.entries_checked;
                m.max_rel_error = m.max_rel_error.max(c.max_rel_error);
                m.max_abs_gradient = m.max_abs_gradient.max(c.max_abs_gradient);
                m.passed &= c.passed;
            }
        }
        out.push((
            variant.name().to_owned(),
            GradCheckReport {
                tolerance: opts.tolerance,
                params: merged.into_values().collect(),
            },
        ));
    }
    Ok(out)
}
