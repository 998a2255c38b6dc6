use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::text::{default_stopwords, extract_query, tokenize};
use crate::corpus::{
    CorpusCounts, Interaction, ProductMeta, RawReview, SplitCorpus, TrainReview, UserHistory,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub min_user_interactions: usize,
    pub min_product_interactions: usize,
    /// Review words occurring fewer times than this are dropped.
    pub min_word_freq: u64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            min_user_interactions: 10,
            min_product_interactions: 1,
            min_word_freq: 5,
            seed: 0,
        }
    }
}

/// Picks one query per product, filters users/products to a fixpoint and
/// splits each user's chronological history.
pub fn build_corpus(
    reviews: &[RawReview],
    meta: &[ProductMeta],
    config: &CorpusConfig,
) -> Result<SplitCorpus> {
    if config.min_user_interactions < 3 {
        return Err(Error::Config(
            "min_user_interactions must be at least 3 to leave a training pair".into(),
        ));
    }
    let stopwords = default_stopwords();

    // One query per product; iterate in id order so the RNG stream is stable.
    let mut by_product: BTreeMap<&str, &ProductMeta> = BTreeMap::new();
    for m in meta {
        by_product.entry(m.product_id.as_str()).or_insert(m);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut product_query: HashMap<&str, String> = HashMap::new();
    let mut products_without_query = 0;
    for (&pid, m) in &by_product {
        let candidates: Vec<String> = m
            .category_paths
            .iter()
            .filter_map(|p| extract_query(p, &stopwords))
            .collect();
        if candidates.is_empty() {
            log::warn!("product {pid}: every category path is empty after filtering; dropped");
            products_without_query += 1;
            continue;
        }
        let pick = rng.gen_range(0..candidates.len());
        product_query.insert(pid, candidates[pick].clone());
    }

    let mut alive: Vec<usize> = (0..reviews.len())
        .filter(|&i| product_query.contains_key(reviews[i].product_id.as_str()))
        .collect();

    loop {
        let before = alive.len();
        let mut per_user: HashMap<&str, usize> = HashMap::new();
        for &i in &alive {
            *per_user.entry(reviews[i].user_id.as_str()).or_default() += 1;
        }
        alive.retain(|&i| per_user[reviews[i].user_id.as_str()] >= config.min_user_interactions);
        let mut per_product: HashMap<&str, usize> = HashMap::new();
        for &i in &alive {
            *per_product.entry(reviews[i].product_id.as_str()).or_default() += 1;
        }
        alive.retain(|&i| {
            per_product[reviews[i].product_id.as_str()] >= config.min_product_interactions
        });
        if alive.len() == before {
            break;
        }
    }
    if alive.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let products: Vec<String> = alive
        .iter()
        .map(|&i| reviews[i].product_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let queries: Vec<String> = products
        .iter()
        .map(|p| product_query[p.as_str()].clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let product_idx: HashMap<&str, usize> =
        products.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let query_idx: HashMap<&str, usize> =
        queries.iter().enumerate().map(|(i, q)| (q.as_str(), i)).collect();

    let mut grouped: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in &alive {
        grouped.entry(reviews[i].user_id.as_str()).or_default().push(i);
    }

    let mut users = Vec::with_capacity(grouped.len());
    // (user, review index) of every training interaction, chronological per user
    let mut train_side: Vec<(usize, usize)> = Vec::new();
    for (u, (uid, mut idx)) in grouped.into_iter().enumerate() {
        // stable: input order breaks timestamp ties
        idx.sort_by_key(|&i| (reviews[i].timestamp, i));
        let interactions: Vec<Interaction> = idx
            .iter()
            .map(|&i| {
                let r = &reviews[i];
                Interaction {
                    product: product_idx[r.product_id.as_str()],
                    query_id: query_idx[product_query[r.product_id.as_str()].as_str()],
                    timestamp: r.timestamp,
                }
            })
            .collect();
        let n_train = idx.len() - 2;
        train_side.extend(idx[..n_train].iter().map(|&i| (u, i)));
        users.push(UserHistory {
            user_id: uid.to_string(),
            interactions,
        });
    }

    // Vocabulary from training reviews only; query words are always kept.
    let tokenized: Vec<Vec<String>> = train_side
        .iter()
        .map(|&(_, i)| tokenize(&reviews[i].review_text))
        .collect();
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for toks in &tokenized {
        for t in toks {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let query_words: BTreeSet<String> = queries.iter().flat_map(|q| tokenize(q)).collect();
    let mut vocab: Vec<(String, u64)> = freq
        .iter()
        .filter(|&(w, &c)| c >= config.min_word_freq && !query_words.contains(*w))
        .map(|(w, &c)| (w.to_string(), c))
        .collect();
    for w in &query_words {
        let c = freq.get(w.as_str()).copied().unwrap_or(0);
        let in_queries = queries
            .iter()
            .filter(|q| q.split(' ').any(|t| t == w))
            .count() as u64;
        vocab.push((w.clone(), c + in_queries));
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let keep: HashSet<&str> = vocab.iter().map(|(w, _)| w.as_str()).collect();

    let train_reviews: Vec<TrainReview> = train_side
        .iter()
        .zip(tokenized.iter())
        .map(|(&(u, i), toks)| TrainReview {
            user: u,
            product: product_idx[reviews[i].product_id.as_str()],
            timestamp: reviews[i].timestamp,
            tokens: toks.iter().filter(|t| keep.contains(t.as_str())).cloned().collect(),
        })
        .collect();

    let counts = CorpusCounts {
        users: users.len(),
        products: products.len(),
        queries: queries.len(),
        interactions: alive.len(),
        words: vocab.len(),
        products_without_query,
    };
    Ok(SplitCorpus {
        users,
        products,
        queries,
        vocab,
        reviews: train_reviews,
        config: config.clone(),
        counts,
    })
}
