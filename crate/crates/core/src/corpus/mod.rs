//! Review/metadata ingestion, query extraction, filtering and chronological
//! train/validation/test splitting.

mod build;
mod io;
mod parse;
mod text;

pub use build::{build_corpus, CorpusConfig};
pub use io::{CorpusSummary, DATA_FILES};
pub use parse::{parse_meta, parse_reviews, ParseStats};
pub use text::{default_stopwords, extract_query, tokenize, STOPWORDS};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReview {
    pub user_id: String,
    pub product_id: String,
    pub review_text: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductMeta {
    pub product_id: String,
    /// Root-to-leaf category term lists.
    pub category_paths: Vec<Vec<String>>,
}

/// One purchase. `product` indexes [`SplitCorpus::products`], `query_id`
/// indexes [`SplitCorpus::queries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub product: usize,
    pub query_id: usize,
    pub timestamp: i64,
}

/// A user's full chronological history. The last interaction is the test
/// instance, the second-last the validation instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserHistory {
    pub user_id: String,
    pub interactions: Vec<Interaction>,
}

impl UserHistory {
    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn train(&self) -> &[Interaction] {
        &self.interactions[..self.interactions.len() - 2]
    }

    pub fn validation(&self) -> &Interaction {
        &self.interactions[self.interactions.len() - 2]
    }

    pub fn test(&self) -> &Interaction {
        &self.interactions[self.interactions.len() - 1]
    }
}

/// A training-side review, already tokenised and vocabulary-filtered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainReview {
    pub user: usize,
    pub product: usize,
    pub timestamp: i64,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub users: usize,
    pub products: usize,
    pub queries: usize,
    pub interactions: usize,
    pub words: usize,
    pub products_without_query: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCorpus {
    /// Sorted by `user_id`.
    pub users: Vec<UserHistory>,
    /// Sorted product ids; position is the product index.
    pub products: Vec<String>,
    /// Query texts; position is the query id.
    pub queries: Vec<String>,
    /// Word vocabulary with training-side frequencies.
    pub vocab: Vec<(String, u64)>,
    /// Reviews of training interactions only, in per-user chronological order.
    pub reviews: Vec<TrainReview>,
    pub config: CorpusConfig,
    pub counts: CorpusCounts,
}

/// Which held-out interaction an evaluation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Validation,
    Test,
}

impl Split {
    /// Index of the target interaction and the length of the usable history
    /// preceding it.
    pub fn target_index(self, history: &UserHistory) -> usize {
        match self {
            Split::Validation => history.len() - 2,
            Split::Test => history.len() - 1,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "validation" | "valid" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(crate::Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

impl SplitCorpus {
    pub fn product_index(&self, product_id: &str) -> Option<usize> {
        self.products.binary_search_by(|p| p.as_str().cmp(product_id)).ok()
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.users
            .binary_search_by(|u| u.user_id.as_str().cmp(user_id))
            .ok()
    }

    /// Per-product documents: concatenated training reviews in chronological
    /// order. Products without any training review fall back to their query
    /// text so that every product has a nonempty document.
    pub fn product_documents(&self) -> Vec<Vec<String>> {
        let mut docs: Vec<Vec<(i64, usize, &TrainReview)>> = vec![Vec::new(); self.products.len()];
        for (i, r) in self.reviews.iter().enumerate() {
            docs[r.product].push((r.timestamp, i, r));
        }
        let mut fallback: Vec<Option<usize>> = vec![None; self.products.len()];
        for u in &self.users {
            for it in &u.interactions {
                fallback[it.product].get_or_insert(it.query_id);
            }
        }
        docs.into_iter()
            .enumerate()
            .map(|(p, mut rs)| {
                rs.sort_by_key(|&(t, i, _)| (t, i));
                let tokens: Vec<String> = rs.iter().flat_map(|(_, _, r)| r.tokens.iter().cloned()).collect();
                if tokens.is_empty() {
                    let q = fallback[p].expect("every product has an interaction");
                    tokenize(&self.queries[q])
                } else {
                    tokens
                }
            })
            .collect()
    }

    pub fn query_tokens(&self, query_id: usize) -> Vec<String> {
        tokenize(&self.queries[query_id])
    }
}
