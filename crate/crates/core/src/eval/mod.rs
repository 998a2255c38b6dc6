//! Ranking metrics over held-out purchases, significance tests and
//! attention export.

mod metrics;
mod stats;

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{hit_ratio, ndcg_single, reciprocal_rank, DEFAULT_CUTOFF};
pub use stats::{paired_ttest, TTest};

use crate::corpus::{Split, SplitCorpus};
use crate::error::{Error, Result};
use crate::model::{Features, Model, Pair, RankedList};

pub const METRICS_FILE: &str = "metrics.json";
pub const INSTANCES_FILE: &str = "instances.jsonl";
pub const ATTENTION_FILE: &str = "attn.jsonl";
pub const SIGNIFICANCE_FILE: &str = "significance.json";

/// One held-out (user, query, product) instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub user: usize,
    pub user_id: String,
    pub query: usize,
    pub product: usize,
    /// 1-based rank of `product` in the full catalog.
    pub rank: usize,
    pub hr: f64,
    pub rr: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub hr: f64,
    pub mrr: f64,
    pub ndcg: f64,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub model: String,
    pub dataset: String,
    pub split: Split,
    pub cutoff: usize,
    pub metrics: Metrics,
    #[serde(skip)]
    pub instances: Vec<Instance>,
}

impl Metrics {
    pub fn mean(instances: &[Instance]) -> Metrics {
        let n = instances.len();
        if n == 0 {
            return Metrics::default();
        }
        let avg = |f: fn(&Instance) -> f64| instances.iter().map(f).sum::<f64>() / n as f64;
        Metrics {
            hr: avg(|i| i.hr),
            mrr: avg(|i| i.rr),
            ndcg: avg(|i| i.ndcg),
            instances: n,
        }
    }
}

impl EvalResult {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(METRICS_FILE);
        let text = serde_json::to_string_pretty(self).expect("serializable");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        let path = dir.join(INSTANCES_FILE);
        let mut out = String::new();
        for inst in &self.instances {
            out.push_str(&serde_json::to_string(inst).expect("serializable"));
            out.push('\n');
        }
        fs::write(&path, out).map_err(|e| Error::io(&path, e))
    }

    pub fn read_instances(dir: &Path) -> Result<Vec<Instance>> {
        let path = dir.join(INSTANCES_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::format(&path, e.to_string())))
            .collect()
    }

    /// Per-instance values of one metric (`hr`, `mrr` or `ndcg`).
    pub fn column(instances: &[Instance], metric: &str) -> Result<Vec<f64>> {
        let f: fn(&Instance) -> f64 = match metric {
            "hr" => |i| i.hr,
            "mrr" | "rr" => |i| i.rr,
            "ndcg" => |i| i.ndcg,
            other => {
                return Err(Error::Unknown {
                    kind: "metric",
                    key: other.to_string(),
                })
            }
        };
        Ok(instances.iter().map(f).collect())
    }
}

/// Scores one instance from its ranking.
pub fn instance(user: usize, user_id: &str, target: Pair, ranked: &RankedList, cutoff: usize) -> Result<Instance> {
    let rank = ranked.rank_of(target.product).ok_or_else(|| Error::Unknown {
        kind: "product in ranking",
        key: target.product.to_string(),
    })?;
    Ok(Instance {
        user,
        user_id: user_id.to_string(),
        query: target.query,
        product: target.product,
        rank,
        hr: hit_ratio(rank, cutoff),
        rr: reciprocal_rank(rank, cutoff),
        ndcg: ndcg_single(rank, cutoff),
    })
}

/// Evaluates any ranker over every user's held-out purchase. `rank` receives
/// the user index, the user's full history and the target position. Users
/// are processed in parallel; output order follows user order.
pub fn evaluate_with<F>(name: &str, corpus: &SplitCorpus, split: Split, cutoff: usize, rank: F) -> Result<EvalResult>
where
    F: Fn(usize, &[Pair], usize) -> Result<RankedList> + Sync,
{
    let instances = corpus
        .users
        .par_iter()
        .enumerate()
        .map(|(u, user)| {
            let history: Vec<Pair> = user.interactions.iter().map(Pair::from).collect();
            let pos = split.target_index(user);
            let ranked = rank(u, &history, pos)?;
            instance(u, &user.user_id, history[pos], &ranked, cutoff)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalResult {
        model: name.to_string(),
        dataset: String::new(),
        split,
        cutoff,
        metrics: Metrics::mean(&instances),
        instances,
    })
}

/// Full-catalog evaluation of a neural model.
pub fn evaluate(model: &Model, corpus: &SplitCorpus, features: &Features, split: Split, cutoff: usize) -> Result<EvalResult> {
    let catalog = model.project_catalog(features)?;
    evaluate_with(model.variant.name(), corpus, split, cutoff, |_, history, pos| {
        let ctx = model.context(features, history, pos)?;
        let repr = model.represent(features, &ctx, features.query(history[pos].query))?;
        model.rank(&repr, &catalog)
    })
}

/// Attention weights behind one scored instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub user_id: String,
    pub query: String,
    pub product: String,
    pub previous_queries: Vec<String>,
    pub previous_products: Vec<String>,
    pub short_alpha: Option<Vec<f64>>,
    pub long_alpha: Option<Vec<f64>>,
}

/// One record per user for the held-out purchase of `split`.
pub fn dump_attention(model: &Model, corpus: &SplitCorpus, features: &Features, split: Split) -> Result<Vec<AttentionRecord>> {
    corpus
        .users
        .iter()
        .map(|user| {
            let history: Vec<Pair> = user.interactions.iter().map(Pair::from).collect();
            let pos = split.target_index(user);
            let ctx = model.context(features, &history, pos)?;
            let target = history[pos];
            let repr = model.represent(features, &ctx, features.query(target.query))?;
            Ok(AttentionRecord {
                user_id: user.user_id.clone(),
                query: corpus.queries[target.query].clone(),
                product: corpus.products[target.product].clone(),
                previous_queries: ctx.window.iter().map(|p| corpus.queries[p.query].clone()).collect(),
                previous_products: ctx.window.iter().map(|p| corpus.products[p.product].clone()).collect(),
                short_alpha: repr.short_alpha,
                long_alpha: repr.long_alpha,
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for row in rows {
        let line = serde_json::to_string(row).expect("serializable");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Pairwise t-test of two runs on matched instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub a: String,
    pub b: String,
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub test: TTest,
}

pub fn significance(a_name: &str, a: &[Instance], b_name: &str, b: &[Instance], metric: &str) -> Result<Significance> {
    let key = |i: &Instance| (i.user_id.clone(), i.query, i.product);
    let mut a_sorted: Vec<&Instance> = a.iter().collect();
    let mut b_sorted: Vec<&Instance> = b.iter().collect();
    a_sorted.sort_by_key(|i| key(i));
    b_sorted.sort_by_key(|i| key(i));
    if a_sorted.len() != b_sorted.len() || a_sorted.iter().zip(&b_sorted).any(|(x, y)| key(x) != key(y)) {
        return Err(Error::Config("runs do not cover the same instances".into()));
    }
    let a_owned: Vec<Instance> = a_sorted.into_iter().cloned().collect();
    let b_owned: Vec<Instance> = b_sorted.into_iter().cloned().collect();
    let va = EvalResult::column(&a_owned, metric)?;
    let vb = EvalResult::column(&b_owned, metric)?;
    let n = va.len().max(1) as f64;
    Ok(Significance {
        a: a_name.to_string(),
        b: b_name.to_string(),
        metric: metric.to_string(),
        mean_a: va.iter().sum::<f64>() / n,
        mean_b: vb.iter().sum::<f64>() / n,
        test: paired_ttest(&va, &vb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn metrics_from_rankings_match_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let n = rng.gen_range(1..60);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64).collect();
            let ranked = RankedList::from_scores(scores.clone()).unwrap();
            let target = rng.gen_range(0..n);
            let inst = instance(0, "u", Pair { query: 0, product: target }, &ranked, 20).unwrap();
            // oracle: strictly better products plus equal-score products with a smaller index
            let rank = 1 + (0..n)
                .filter(|&j| scores[j] > scores[target] || (scores[j] == scores[target] && j < target))
                .count();
            assert_eq!(inst.rank, rank);
            assert_eq!(inst.ndcg, if rank <= 20 { 1.0 / ((rank + 1) as f64).log2() } else { 0.0 });
        }
    }

    #[test]
    fn aggregates_are_means() {
        let mk = |rank| instance(0, "u", Pair { query: 0, product: 0 }, &RankedList {
            order: {
                let mut o: Vec<usize> = (1..rank).collect();
                o.push(0);
                o
            },
            scores: vec![0.0; rank],
        }, 20)
        .unwrap();
        let insts = vec![mk(1), mk(3), mk(30)];
        let m = Metrics::mean(&insts);
        assert!((m.hr - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.ndcg - 0.5).abs() < 1e-15);
        assert!((m.mrr - (1.0 + 1.0 / 3.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn significance_matches_instances_by_key() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<Instance> = (0..10)
            .map(|u| Instance {
                user: u,
                user_id: format!("u{u}"),
                query: 0,
                product: u,
                rank: 1,
                hr: 1.0,
                rr: 1.0,
                ndcg: rng.gen(),
            })
            .collect();
        let mut b = a.clone();
        b.shuffle(&mut rng);
        let s = significance("a", &a, "b", &b, "ndcg").unwrap();
        assert_eq!(s.test.p, 1.0);
        b.pop();
        assert!(significance("a", &a, "b", &b, "ndcg").is_err());
    }
}
