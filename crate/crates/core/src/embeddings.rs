//! Word-embedding tables and the verb–object language prior.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Word2vec-style embedding width.
pub const EMBEDDING_DIM: usize = 300;
/// Language prior width: verb embedding followed by object embedding.
pub const PRIOR_DIM: usize = 2 * EMBEDDING_DIM;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::invalid(format!(
                "embedding for `{token}` has {} values, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        if self.vectors.contains_key(token) {
            return Err(Error::invalid(format!("duplicate token `{token}`")));
        }
        self.vectors.insert(token.to_owned(), vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Tokens in sorted order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut t: Vec<&str> = self.vectors.keys().map(String::as_str).collect();
        t.sort_unstable();
        t
    }

    /// Exact hit, or for phrases joined by `_` or spaces the mean of the
    /// constituent tokens that are present.
    pub fn lookup(&self, token: &str) -> Result<Vec<f64>> {
        if let Some(v) = self.vectors.get(token) {
            return Ok(v.clone());
        }
        let mut sum = vec![0.0; self.dim];
        let mut found = 0usize;
        for part in token.split(['_', ' ']).filter(|p| !p.is_empty()) {
            if let Some(v) = self.vectors.get(part) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                found += 1;
            }
        }
        if found == 0 {
            return Err(Error::UnknownToken(token.to_owned()));
        }
        let n = found as f64;
        Ok(sum.into_iter().map(|s| s / n).collect())
    }

    /// Parses the text format: one `token v1 v2 … vd` line per token.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::Parse {
                path: path.to_owned(),
                line: line_no,
                msg,
            };
            let mut fields = line.split_ascii_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| err(format!("`{f}` is not a finite number")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
            if values.is_empty() || values.len() != t.dim {
                return Err(err(format!(
                    "`{token}` has {} values, expected {}",
                    values.len(),
                    t.dim
                )));
            }
            if t.vectors.contains_key(token) {
                return Err(err(format!("duplicate token `{token}`")));
            }
            t.vectors.insert(token.to_owned(), values);
        }
        table.ok_or_else(|| Error::Parse {
            path: path.to_owned(),
            line: 0,
            msg: "no embeddings".into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Text format with tokens sorted, so equal tables produce equal files.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for token in self.tokens() {
            out.push_str(token);
            for v in &self.vectors[token] {
                write!(out, " {v}").expect("string write");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Concatenated verb and object embeddings, verb first.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguagePrior {
    pub verb: String,
    pub object: String,
    pub values: Vec<f64>,
}

pub fn make_prior(table: &EmbeddingTable, verb: &str, object: &str) -> Result<LanguagePrior> {
    let mut values = table.lookup(verb)?;
    values.extend(table.lookup(object)?);
    Ok(LanguagePrior {
        verb: verb.to_owned(),
        object: object.to_owned(),
        values,
    })
}

/// Precomputed priors for a fixed set of (verb, object) categories.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriorBank {
    dim: usize,
    priors: BTreeMap<(String, String), Vec<f64>>,
}

impl PriorBank {
    pub fn build<'a>(
        table: &EmbeddingTable,
        categories: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let mut priors = BTreeMap::new();
        for (verb, object) in categories {
            let key = (verb.to_owned(), object.to_owned());
            if !priors.contains_key(&key) {
                priors.insert(key, make_prior(table, verb, object)?.values);
            }
        }
        Ok(Self {
            dim: 2 * table.dim(),
            priors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, verb: &str, object: &str) -> Result<&[f64]> {
        self.priors
            .get(&(verb.to_owned(), object.to_owned()))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownToken(format!("{verb} {object}")))
    }
}
