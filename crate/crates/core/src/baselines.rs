//! Query likelihood with Dirichlet smoothing, and its mixture with a user
//! word profile.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::SplitCorpus;
use crate::error::{Error, Result};
use crate::model::RankedList;

pub const MU_GRID: [f64; 3] = [2000.0, 6000.0, 10000.0];
pub const DEFAULT_PROFILE_THRESHOLD: u64 = 50;

/// Term statistics of one document per product.
#[derive(Debug, Clone)]
pub struct LanguageModelIndex {
    tf: Vec<HashMap<String, u64>>,
    lengths: Vec<u64>,
    collection: HashMap<String, f64>,
}

impl LanguageModelIndex {
    /// Documents are the products' concatenated training reviews. Products
    /// without any review get an empty document.
    pub fn build(corpus: &SplitCorpus) -> Self {
        let mut docs: Vec<Vec<String>> = vec![Vec::new(); corpus.products.len()];
        for r in &corpus.reviews {
            docs[r.product].extend(r.tokens.iter().cloned());
        }
        Self::from_documents(&docs)
    }

    pub fn from_documents(docs: &[Vec<String>]) -> Self {
        let mut tf = Vec::with_capacity(docs.len());
        let mut lengths = Vec::with_capacity(docs.len());
        let mut totals: HashMap<String, u64> = HashMap::new();
        for d in docs {
            let mut counts: HashMap<String, u64> = HashMap::new();
            for w in d {
                *counts.entry(w.clone()).or_default() += 1;
                *totals.entry(w.clone()).or_default() += 1;
            }
            tf.push(counts);
            lengths.push(d.len() as u64);
        }
        let n: u64 = totals.values().sum();
        let collection = totals.into_iter().map(|(w, c)| (w, c as f64 / n as f64)).collect();
        LanguageModelIndex { tf, lengths, collection }
    }

    pub fn len(&self) -> usize {
        self.tf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tf.is_empty()
    }

    pub fn collection_prob(&self, word: &str) -> Option<f64> {
        self.collection.get(word).copied()
    }

    pub fn tf(&self, product: usize, word: &str) -> u64 {
        self.tf[product].get(word).copied().unwrap_or(0)
    }

    pub fn doc_len(&self, product: usize) -> u64 {
        self.lengths[product]
    }

    /// Σ log((tf + mu P(w|C)) / (|D| + mu)) over query words present in the
    /// collection.
    pub fn ql_score(&self, query: &[String], product: usize, mu: f64) -> Result<f64> {
        if mu <= 0.0 {
            return Err(Error::Config("mu must be positive".into()));
        }
        let len = self.lengths[product] as f64;
        let mut s = 0.0;
        for w in query {
            let Some(pc) = self.collection.get(w) else {
                log::warn!("query word `{w}` never occurs in the collection; skipped");
                continue;
            };
            let tf = self.tf(product, w) as f64;
            s += ((tf + mu * pc) / (len + mu)).ln();
        }
        Ok(s)
    }

    pub fn rank(&self, query: &[String], mu: f64) -> Result<RankedList> {
        let scores = (0..self.len())
            .map(|p| self.ql_score(query, p, mu))
            .collect::<Result<Vec<_>>>()?;
        RankedList::from_scores(scores)
    }
}

/// Frequent words of each user's own training reviews.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserWordProfile {
    /// Sorted word list per user index.
    pub words: Vec<Vec<String>>,
    pub threshold: u64,
}

impl UserWordProfile {
    /// Keeps words occurring more than `threshold` times.
    pub fn build(corpus: &SplitCorpus, threshold: u64) -> Self {
        let mut counts: Vec<HashMap<&str, u64>> = vec![HashMap::new(); corpus.users.len()];
        for r in &corpus.reviews {
            for t in &r.tokens {
                *counts[r.user].entry(t.as_str()).or_default() += 1;
            }
        }
        let words = counts
            .into_iter()
            .map(|c| {
                c.into_iter()
                    .filter(|&(_, n)| n > threshold)
                    .map(|(w, _)| w.to_string())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect()
            })
            .collect();
        UserWordProfile { words, threshold }
    }

    pub fn user(&self, u: usize) -> &[String] {
        &self.words[u]
    }
}

/// `lambda * QL(Q|D) + (1 - lambda) * QL(U|D)`, mixed in the log domain.
pub fn uql_score(
    index: &LanguageModelIndex,
    profile: &[String],
    query: &[String],
    product: usize,
    mu: f64,
    lambda: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let q = index.ql_score(query, product, mu)?;
    if lambda == 1.0 {
        return Ok(q);
    }
    if profile.is_empty() {
        return Ok(q);
    }
    let u = index.ql_score(profile, product, mu)?;
    Ok(lambda * q + (1.0 - lambda) * u)
}

pub fn uql_rank(index: &LanguageModelIndex, profile: &[String], query: &[String], mu: f64, lambda: f64) -> Result<RankedList> {
    if profile.is_empty() && lambda < 1.0 {
        log::warn!("empty user word profile; falling back to query likelihood");
    }
    let scores = (0..index.len())
        .map(|p| uql_score(index, profile, query, p, mu, lambda))
        .collect::<Result<Vec<_>>>()?;
    RankedList::from_scores(scores)
}
