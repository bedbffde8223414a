//! Minibatch Adam training of the network with the verification loss.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{ClassifierIndex, ClusterModel, Scheme, VerbObjectTable};
use crate::diffmath::{Adam, AdamConfig};
use crate::embeddings::{make_prior, EmbeddingTable};
use crate::error::{Error, Result};
use crate::features::{Dataset, PairSample};
use crate::network::{AblationConfig, GraphMode, ModelConfig, PdNet, Row, StreamSpec};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Pairs per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    /// Negative pairs kept per positive pair in each epoch.
    pub negative_ratio: f64,
    pub ablation: AblationConfig,
    /// Average the per-verb losses of a pair instead of summing them.
    pub average_verbs: bool,
    /// Optional cap on the hidden width of the stream blocks.
    pub block_hidden: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            negative_ratio: 3.0,
            ablation: AblationConfig::default(),
            average_verbs: true,
            block_hidden: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.negative_ratio.is_finite() && self.negative_ratio >= 0.0) {
            return Err(Error::invalid(
                "negative_ratio must be finite and non-negative",
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(
                "learning_rate must be finite and non-negative",
            ));
        }
        if self.block_hidden == Some(0) {
            return Err(Error::invalid("block_hidden must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub pairs: usize,
    /// Mean pair loss.
    pub loss: f64,
    /// Mean of the fused-score term.
    pub pd_loss: f64,
    /// Mean auxiliary term per appearance stream.
    pub aux_loss: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    pub fn to_csv(&self) -> String {
        let aux: Vec<String> = self
            .epochs
            .first()
            .map(|e| e.aux_loss.keys().cloned().collect())
            .unwrap_or_default();
        let mut out = String::from("epoch,pairs,loss,pd_loss");
        for a in &aux {
            write!(out, ",aux_loss_{a}").expect("string write");
        }
        out.push('\n');
        for e in &self.epochs {
            write!(out, "{},{},{},{}", e.epoch, e.pairs, e.loss, e.pd_loss).expect("string write");
            for a in &aux {
                write!(out, ",{}", e.aux_loss.get(a).copied().unwrap_or(0.0))
                    .expect("string write");
            }
            out.push('\n');
        }
        out
    }
}

/// Looks up and caches language priors by category.
#[derive(Debug, Default)]
pub struct PriorCache {
    priors: HashMap<(String, String), Vec<f64>>,
}

impl PriorCache {
    pub fn get(&mut self, embeddings: &EmbeddingTable, verb: &str, object: &str) -> Result<&[f64]> {
        let key = (verb.to_owned(), object.to_owned());
        if !self.priors.contains_key(&key) {
            let p = make_prior(embeddings, verb, object)?.values;
            self.priors.insert(key.clone(), p);
        }
        Ok(&self.priors[&key])
    }
}

/// Verbs evaluated for `object` during training: those the index knows.
fn training_verbs(index: &ClassifierIndex, object: &str) -> Vec<String> {
    let mut verbs: Vec<String> = index
        .entries
        .iter()
        .filter(|e| e.object == object)
        .map(|e| e.verb.clone())
        .collect();
    verbs.sort();
    verbs.dedup();
    verbs
}

/// Rows of one pair: every valid verb, labelled from the positive set and
/// weighted so that the pair contributes the mean of its verb losses.
pub fn pair_rows<T: Scalar>(
    model: &PdNet<T>,
    pair: &PairSample,
    embeddings: &EmbeddingTable,
    priors: &mut PriorCache,
    average: bool,
) -> Result<Vec<Row>> {
    let verbs = training_verbs(&model.index, &pair.object.category);
    if verbs.is_empty() {
        return Err(Error::invalid(format!(
            "no valid verbs for object `{}`",
            pair.object.category
        )));
    }
    let weight = if average {
        1.0 / verbs.len() as f64
    } else {
        1.0
    };
    let mut features = BTreeMap::new();
    for s in &model.config.streams {
        let f = pair
            .stream(&s.name)
            .ok_or_else(|| Error::invalid(format!("pair lacks stream {}", s.name)))?;
        features.insert(s.name.clone(), f.to_vec());
    }
    let mut rows = Vec::with_capacity(verbs.len());
    for verb in verbs {
        let slot = model
            .index
            .slot(&verb, &pair.object.category)
            .expect("verb taken from the index");
        rows.push(Row {
            prior: priors
                .get(embeddings, &verb, &pair.object.category)?
                .to_vec(),
            features: features.clone(),
            slot,
            label: if pair.positives.contains(&verb) {
                1.0
            } else {
                0.0
            },
            weight,
        });
    }
    Ok(rows)
}

/// Loss of one pair: mean over its valid verbs of the fused-score BCE plus
/// the active auxiliary BCE terms.
pub fn pair_loss<T: Scalar>(
    model: &PdNet<T>,
    pair: &PairSample,
    embeddings: &EmbeddingTable,
) -> Result<f64> {
    let rows = pair_rows(model, pair, embeddings, &mut PriorCache::default(), true)?;
    let g = model.graph(GraphMode::Train)?;
    let ev = model.evaluate(&g, &rows)?;
    Ok(ev.value(g.loss.expect("training graph")).data()[0].as_f64())
}

/// Builds the classifier index (and clusters under CSP) for `table`.
pub fn build_classifiers(
    scheme: Scheme,
    table: &VerbObjectTable,
    embeddings: &EmbeddingTable,
    seed_value: u64,
) -> Result<(ClassifierIndex, Option<ClusterModel>)> {
    let clusters = match scheme {
        Scheme::Clustered => Some(ClusterModel::build(
            table,
            embeddings,
            seed::derive(seed_value, "clusters"),
        )?),
        _ => None,
    };
    let index = ClassifierIndex::build(scheme, table, clusters.as_ref())?;
    Ok((index, clusters))
}

/// Fresh model for `dataset` under `config`.
pub fn init_model<T: Scalar>(dataset: &Dataset, config: &TrainConfig) -> Result<PdNet<T>> {
    let table = dataset.training_table();
    if table.is_empty() {
        return Err(Error::invalid("training split has no positive pairs"));
    }
    let (index, clusters) = build_classifiers(
        config.ablation.scheme,
        &table,
        &dataset.embeddings,
        config.seed,
    )?;
    let k_a = dataset.appearance_dim();
    let model_config = ModelConfig {
        streams: StreamSpec::standard(k_a, dataset.has_union_stream()),
        k_a,
        k_c: index.k_c,
        prior_dim: 2 * dataset.embeddings.dim(),
        block_hidden: config.block_hidden,
        ablation: config.ablation,
    };
    PdNet::new(
        model_config,
        index,
        clusters,
        seed::derive(config.seed, "init"),
    )
}

/// Trains from scratch. Bit-deterministic given `(dataset, config)`.
pub fn train<T: Scalar>(dataset: &Dataset, config: &TrainConfig) -> Result<(PdNet<T>, TrainLog)> {
    config.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let mut model = init_model::<T>(dataset, config)?;
    let graph = model.graph(GraphMode::Train)?;
    let loss_node = graph.loss.expect("training graph");
    let aux_names: Vec<String> = model
        .config
        .streams
        .iter()
        .filter(|s| {
            graph
                .graph
                .output_node(&format!("loss.au.{}", s.name))
                .is_some()
        })
        .map(|s| s.name.clone())
        .collect();

    let mut priors = PriorCache::default();
    let mut positives: Vec<Vec<Row>> = Vec::new();
    let mut negatives: Vec<Vec<Row>> = Vec::new();
    for pair in &dataset.train {
        // pairs whose object never occurs as a positive have no valid verb
        if training_verbs(&model.index, &pair.object.category).is_empty() {
            continue;
        }
        let rows = pair_rows(
            &model,
            pair,
            &dataset.embeddings,
            &mut priors,
            config.average_verbs,
        )?;
        if rows.iter().any(|r| r.label > 0.0) {
            positives.push(rows);
        } else {
            negatives.push(rows);
        }
    }

    let mut adam = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "shuffle"));
    let neg_keep =
        ((config.negative_ratio * positives.len() as f64).ceil() as usize).min(negatives.len());
    let mut log = TrainLog::default();

    for epoch in 1..=config.epochs {
        let mut neg_order: Vec<usize> = (0..negatives.len()).collect();
        neg_order.shuffle(&mut rng);
        let mut order: Vec<&Vec<Row>> = positives
            .iter()
            .chain(neg_order[..neg_keep].iter().map(|&i| &negatives[i]))
            .collect();
        order.shuffle(&mut rng);

        let mut total = 0.0;
        let mut pd = 0.0;
        let mut aux: BTreeMap<String, f64> = aux_names.iter().map(|n| (n.clone(), 0.0)).collect();
        for batch in order.chunks(config.batch_size) {
            let rows: Vec<&Row> = batch.iter().flat_map(|r| r.iter()).collect();
            let ev = model.evaluate(&graph, &rows)?;
            total += ev.value(loss_node).data()[0].as_f64();
            pd += ev.output("loss.pd").expect("pd loss").data()[0].as_f64();
            for (name, acc) in aux.iter_mut() {
                *acc += ev
                    .output(&format!("loss.au.{name}"))
                    .expect("aux loss")
                    .data()[0]
                    .as_f64();
            }
            let grads = graph.graph.backward(&ev, loss_node)?;
            adam.step(&mut model.params, &grads)?;
        }
        let n = order.len().max(1) as f64;
        log.epochs.push(EpochLog {
            epoch,
            pairs: order.len(),
            loss: total / n,
            pd_loss: pd / n,
            aux_loss: aux.into_iter().map(|(k, v)| (k, v / n)).collect(),
        });
    }
    Ok((model, log))
}

pub fn save_checkpoint<T: Scalar>(model: &PdNet<T>, path: &Path) -> Result<()> {
    model.save(path)
}

pub fn load_checkpoint<T: Scalar>(
    path: &Path,
    manifest: Option<&ClusterModel>,
    scheme: Option<Scheme>,
) -> Result<PdNet<T>> {
    PdNet::load(path, manifest, scheme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{generate_synthetic, SyntheticConfig};
    use crate::network::LpcaVariant;

    fn tiny() -> Dataset {
        let cfg = SyntheticConfig {
            verbs: 2,
            objects_per_verb: 4,
            groups_per_verb: 2,
            families_per_verb: 1,
            appearance_dim: 6,
            embedding_dim: 8,
            train_positives: 6,
            rare_min: 1,
            rare_max: 2,
            test_positives: 2,
            ..SyntheticConfig::default()
        };
        generate_synthetic(&cfg, 3).unwrap().dataset
    }

    fn config(scheme: Scheme, lpca: LpcaVariant) -> TrainConfig {
        TrainConfig {
            epochs: 3,
            learning_rate: 1e-2,
            batch_size: 8,
            block_hidden: Some(8),
            ablation: AblationConfig {
                scheme,
                lpca,
                ..AblationConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    fn zeroed(model: &mut PdNet<f64>) {
        for t in model.params.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn zero_parameters_give_three_ln2() {
        let ds = tiny();
        let mut m = init_model::<f64>(&ds, &config(Scheme::Shared, LpcaVariant::Full)).unwrap();
        zeroed(&mut m);
        let pair = ds.train.iter().find(|p| !p.positives.is_empty()).unwrap();
        let loss = pair_loss(&m, pair, &ds.embeddings).unwrap();
        assert!(
            (loss - 3.0 * std::f64::consts::LN_2).abs() < 1e-12,
            "{loss}"
        );
    }

    #[test]
    fn plain_attention_has_only_the_fused_term() {
        let ds = tiny();
        let mut m = init_model::<f64>(&ds, &config(Scheme::Shared, LpcaVariant::PlainCa)).unwrap();
        zeroed(&mut m);
        let loss = pair_loss(&m, &ds.train[0], &ds.embeddings).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn loss_decreases_and_runs_repeat() {
        let ds = tiny();
        let cfg = TrainConfig {
            epochs: 6,
            ..config(Scheme::Clustered, LpcaVariant::Full)
        };
        let (a, log) = train::<f64>(&ds, &cfg).unwrap();
        let l = log.losses();
        assert!(l.last().unwrap() < l.first().unwrap(), "{l:?}");
        let (b, log2) = train::<f64>(&ds, &cfg).unwrap();
        assert_eq!(log, log2);
        assert_eq!(a.params, b.params);
        assert!(log
            .to_csv()
            .starts_with("epoch,pairs,loss,pd_loss,aux_loss_"));
    }

    #[test]
    fn zero_learning_rate_keeps_initial_parameters() {
        let ds = tiny();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..config(Scheme::Specific, LpcaVariant::Full)
        };
        let (m, _) = train::<f64>(&ds, &cfg).unwrap();
        assert_eq!(m.params, init_model::<f64>(&ds, &cfg).unwrap().params);
    }

    #[test]
    fn invalid_configs_rejected() {
        let ds = tiny();
        for bad in [
            TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                learning_rate: f64::NAN,
                ..TrainConfig::default()
            },
            TrainConfig {
                negative_ratio: -1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                block_hidden: Some(0),
                ..TrainConfig::default()
            },
        ] {
            assert!(train::<f64>(&ds, &bad).unwrap_err().is_validation());
        }
    }

    #[test]
    fn checkpoint_round_trip_and_checks() {
        let ds = tiny();
        let cfg = TrainConfig {
            epochs: 1,
            ..config(Scheme::Clustered, LpcaVariant::Full)
        };
        let (m, _) = train::<f64>(&ds, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&m, &p).unwrap();
        let back =
            load_checkpoint::<f64>(&p, m.clusters.as_ref(), Some(Scheme::Clustered)).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.index, m.index);
        let pair = &ds.test[0];
        let verb = &m
            .index
            .entries
            .iter()
            .find(|e| e.object == pair.object.category)
            .unwrap()
            .verb;
        assert_eq!(
            back.classify_pair(pair, verb, &ds.embeddings, false)
                .unwrap(),
            m.classify_pair(pair, verb, &ds.embeddings, false).unwrap()
        );

        assert!(load_checkpoint::<f64>(&p, None, Some(Scheme::Shared)).is_err());
        let mut other = m.clusters.clone().unwrap();
        other.verbs.pop();
        assert!(load_checkpoint::<f64>(&p, Some(&other), None).is_err());

        let text = std::fs::read_to_string(&p).unwrap();
        let cut = dir.path().join("cut.ckpt");
        std::fs::write(&cut, &text[..text.len() / 2]).unwrap();
        assert!(load_checkpoint::<f64>(&cut, None, None).is_err());
    }
}
