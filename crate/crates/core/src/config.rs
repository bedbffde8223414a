//! Flat key-value run configuration (TOML) with `key=value` overrides.
//!
//! Every key lives at the top level. Synthetic-generator keys carry the field
//! names of [`SyntheticConfig`]; training keys mirror [`TrainConfig`] with the
//! ablation switches flattened (`scheme`, `lpca`, `lpfa`, `pamf`).

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::clustering::Scheme;
use crate::error::{Error, Result};
use crate::evaluation::ReportFormat;
use crate::features::SyntheticConfig;
use crate::network::{AblationConfig, LpcaVariant};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainKeys {
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    negative_ratio: f64,
    average_verbs: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    block_hidden: Option<usize>,
    scheme: Scheme,
    lpca: LpcaVariant,
    lpfa: bool,
    pamf: bool,
}

impl Default for TrainKeys {
    fn default() -> Self {
        TrainKeys::from(&TrainConfig::default())
    }
}

impl From<&TrainConfig> for TrainKeys {
    fn from(t: &TrainConfig) -> Self {
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            negative_ratio: t.negative_ratio,
            average_verbs: t.average_verbs,
            block_hidden: t.block_hidden,
            scheme: t.ablation.scheme,
            lpca: t.ablation.lpca,
            lpfa: t.ablation.lpfa,
            pamf: t.ablation.pamf,
        }
    }
}

/// Keys that are neither generator nor training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunKeys {
    pub seed: u64,
    /// Dataset directory read by `train`, `eval`, `cluster`, `ablate`, `zero-shot`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Checkpoint read by `eval`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Generate a synthetic dataset in-run when `data` is not set.
    pub synthesize: bool,
    pub report_format: ReportFormat,
    /// Score unseen objects by routing them to a classifier (eval only).
    pub zero_shot: bool,
    pub ablate_schemes: Vec<Scheme>,
    pub ablate_lpca: Vec<LpcaVariant>,
    pub ablate_pamf: Vec<bool>,
    pub ablate_lpfa: Vec<bool>,
    pub gradcheck_points: usize,
    pub gradcheck_appearance_dim: usize,
    pub gradcheck_classifiers: usize,
}

impl Default for RunKeys {
    fn default() -> Self {
        Self {
            seed: 0,
            data: None,
            checkpoint: None,
            synthesize: true,
            report_format: ReportFormat::Csv,
            zero_shot: false,
            ablate_schemes: Scheme::ALL.to_vec(),
            ablate_lpca: vec![LpcaVariant::Full],
            ablate_pamf: vec![true],
            ablate_lpfa: vec![true],
            gradcheck_points: 100,
            gradcheck_appearance_dim: 8,
            gradcheck_classifiers: 3,
        }
    }
}

/// Effective configuration of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run: RunKeys,
    pub synthetic: SyntheticConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run: RunKeys::default(),
            synthetic: SyntheticConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Keys of a section; `optional` lists fields skipped when unset.
fn keys_of<T: Serialize + Default>(optional: &[&str]) -> Vec<String> {
    let mut keys: Vec<String> = Table::try_from(T::default())
        .expect("config defaults serialize")
        .keys()
        .cloned()
        .collect();
    keys.extend(optional.iter().map(|k| k.to_string()));
    keys
}

fn section<T: DeserializeOwned>(table: Table, what: &str) -> Result<T> {
    T::deserialize(Value::Table(table))
        .map_err(|e| Error::invalid(format!("{what} configuration: {}", e.message())))
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses a flat TOML document; nested tables are rejected.
pub fn parse_table(text: &str, path: &Path) -> Result<Table> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        path: path.to_owned(),
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        msg: e.message().to_owned(),
    })?;
    if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: 0,
            msg: format!("`{k}`: nested tables are not supported; use flat keys"),
        });
    }
    Ok(table)
}

/// Applies `key=value`. The value is read as a TOML value, falling back to a
/// bare string (`scheme=SH`).
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::invalid(format!(
            "override `{assignment}` has an empty key"
        )));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()));
    table.insert(key.to_owned(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_table(table: &Table) -> Result<Self> {
        let synthetic_keys = keys_of::<SyntheticConfig>(&[]);
        let train_keys = keys_of::<TrainKeys>(&["block_hidden"]);
        let run_keys = keys_of::<RunKeys>(&["data", "checkpoint"]);
        let (mut syn, mut tr, mut run) = (Table::new(), Table::new(), Table::new());
        for (k, v) in table {
            let target = if run_keys.contains(k) {
                &mut run
            } else if train_keys.contains(k) {
                &mut tr
            } else if synthetic_keys.contains(k) {
                &mut syn
            } else {
                return Err(Error::invalid(format!("unknown config key `{k}`")));
            };
            target.insert(k.clone(), v.clone());
        }
        let run: RunKeys = section(run, "run")?;
        let synthetic: SyntheticConfig = section(syn, "synthetic")?;
        let t: TrainKeys = section(tr, "training")?;
        let train = TrainConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            seed: run.seed,
            negative_ratio: t.negative_ratio,
            ablation: AblationConfig {
                lpca: t.lpca,
                lpfa: t.lpfa,
                pamf: t.pamf,
                scheme: t.scheme,
            },
            average_verbs: t.average_verbs,
            block_hidden: t.block_hidden,
        };
        let cfg = Self {
            run,
            synthetic,
            train,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.train.validate()?;
        let r = &self.run;
        if r.ablate_schemes.is_empty()
            || r.ablate_lpca.is_empty()
            || r.ablate_pamf.is_empty()
            || r.ablate_lpfa.is_empty()
        {
            return Err(Error::invalid("ablation lists must not be empty"));
        }
        if r.gradcheck_points == 0 || r.gradcheck_appearance_dim < 2 || r.gradcheck_classifiers == 0
        {
            return Err(Error::invalid(
                "grad-check sizes must be positive (appearance dim >= 2)",
            ));
        }
        Ok(())
    }

    /// Config file (optional), then overrides, then an explicit seed.
    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                parse_table(&text, p)?
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        if let Some(s) = seed {
            let s = i64::try_from(s).map_err(|_| Error::invalid("seed must fit in 63 bits"))?;
            table.insert("seed".into(), Value::Integer(s));
        }
        Self::from_table(&table)
    }

    pub fn to_table(&self) -> Table {
        let mut out = Table::new();
        for part in [
            Table::try_from(&self.run),
            Table::try_from(&self.synthetic),
            Table::try_from(TrainKeys::from(&self.train)),
        ] {
            out.extend(part.expect("config serializes"));
        }
        out
    }

    /// Flat TOML with sorted keys; reparses to the same configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_table()).expect("flat table serializes")
    }

    pub fn seed(&self) -> u64 {
        self.run.seed
    }
}
