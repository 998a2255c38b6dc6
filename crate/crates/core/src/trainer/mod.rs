//! Chronological per-user training with BPR loss and momentum SGD.

mod sgd;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use sgd::{Sgd, StepStats};

use crate::corpus::{Split, SplitCorpus};
use crate::error::{Error, Result};
use crate::eval::{self, Metrics, DEFAULT_CUTOFF};
use crate::model::{forward, Config, Features, LongTermState, Model, ParamVars, Pair, UserContext, Variant};
use crate::numerics::{log_sigmoid, Graph, Var};

/// `-log sigmoid(s_pos - s_neg) + l2 * norm_sq`.
pub fn bpr_loss(s_pos: f64, s_neg: f64, l2: f64, norm_sq: f64) -> f64 {
    -log_sigmoid(s_pos - s_neg) + l2 * norm_sq
}

/// Graph form of [`bpr_loss`]; the penalty covers every var in `params`.
pub fn bpr_loss_var(g: &mut Graph, s_pos: Var, s_neg: Var, l2: f64, params: &[Var]) -> Result<Var> {
    let diff = g.sub(s_pos, s_neg)?;
    let ls = g.log_sigmoid(diff);
    let mut loss = g.neg(ls);
    if l2 > 0.0 {
        let coef = g.vector(vec![l2])?;
        for &p in params {
            let sq = g.sum_squares(p);
            let term = g.mul(sq, coef)?;
            loss = g.add(loss, term)?;
        }
    }
    Ok(loss)
}

/// `n` products drawn uniformly with replacement, never `positive`.
pub fn sample_negatives<R: Rng + ?Sized>(positive: usize, catalog: usize, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if catalog < 2 {
        return Err(Error::Config("negative sampling needs at least two products".into()));
    }
    Ok((0..n)
        .map(|_| {
            // draw from the catalog minus one slot, then skip over the positive
            let j = rng.gen_range(0..catalog - 1);
            if j >= positive {
                j + 1
            } else {
                j
            }
        })
        .collect())
}

/// Builds the loss for one (context, query, positive, negative) triplet.
pub fn triplet_loss(
    g: &mut Graph,
    p: &ParamVars,
    model: &Model,
    features: &Features,
    ctx: &UserContext,
    query: usize,
    positive: usize,
    negative: usize,
) -> Result<Var> {
    let repr = model.build(g, p, features, ctx, features.query(query))?;
    let score = |g: &mut Graph, product: usize| -> Result<Var> {
        let x = g.vector(features.product(product).iter().map(|&v| v as f64).collect())?;
        let y = forward::project_product(g, p, x)?;
        g.cosine(repr.output, y)
    };
    let s_pos = score(g, positive)?;
    let s_neg = score(g, negative)?;
    bpr_loss_var(g, s_pos, s_neg, model.config.l2, &p.all())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
    pub max_grad_norm: f64,
    /// Largest gradient norm actually applied (after clipping).
    pub max_clipped_norm: f64,
    pub clipped_steps: usize,
    pub validation: Option<Metrics>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Evaluate on the validation split after every epoch and keep the best.
    pub validate: bool,
    pub cutoff: usize,
    /// Record `(user, position)` of every consumed purchase.
    pub trace_consumption: bool,
}

impl TrainOptions {
    pub fn with_validation() -> Self {
        TrainOptions {
            validate: true,
            cutoff: DEFAULT_CUTOFF,
            trace_consumption: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Best-validation model, or the last one without validation.
    pub model: Model,
    pub best_epoch: Option<usize>,
    pub epochs: Vec<EpochLog>,
    pub consumption: Vec<(usize, usize)>,
}

/// Runs one epoch over every user in a seeded order. Returns the epoch log
/// without validation.
pub fn train_epoch(
    model: &mut Model,
    opt: &mut Sgd,
    corpus: &SplitCorpus,
    features: &Features,
    epoch: usize,
    mut trace: Option<&mut Vec<(usize, usize)>>,
) -> Result<EpochLog> {
    let start = Instant::now();
    let cfg = model.config.clone();
    let m = cfg.m;
    let n_products = features.n_products();
    let mut order: Vec<usize> = (0..corpus.users.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch));
    order.shuffle(&mut rng);
    let mut log = EpochLog {
        epoch,
        mean_loss: 0.0,
        steps: 0,
        max_grad_norm: 0.0,
        max_clipped_norm: 0.0,
        clipped_steps: 0,
        validation: None,
        wall_seconds: 0.0,
    };
    let mut total = 0.0;
    for u in order {
        let history: Vec<Pair> = corpus.users[u].train().iter().map(Pair::from).collect();
        if history.len() < m + 1 && epoch == 0 {
            log::warn!(
                "user {} has {} training purchases; used for preference initialization only",
                corpus.users[u].user_id,
                history.len()
            );
        }
        let mut state = LongTermState::new(cfg.k);
        for i in 0..history.len() {
            if i >= m {
                let ctx = UserContext {
                    pref: state.g.clone(),
                    window: history[i - m..i].to_vec(),
                };
                let target = history[i];
                let negatives = sample_negatives(target.product, n_products, cfg.negatives, &mut rng)?;
                for neg in negatives {
                    let mut g = Graph::new();
                    let p = model.params.load_into(&mut g);
                    let loss = triplet_loss(&mut g, &p, model, features, &ctx, target.query, target.product, neg)?;
                    g.backward(loss)?;
                    let mut grads: Vec<Vec<f64>> = p.all().iter().map(|&v| g.grad(v)).collect();
                    let stats = opt.step(&mut model.params, &mut grads)?;
                    total += g.scalar(loss);
                    log.steps += 1;
                    log.max_grad_norm = log.max_grad_norm.max(stats.norm);
                    log.max_clipped_norm = log.max_clipped_norm.max(stats.clipped_norm);
                    if stats.norm > opt.clip_norm {
                        log.clipped_steps += 1;
                    }
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push((u, i));
            }
            model.observe(&mut state, features, &history, i)?;
        }
    }
    log.mean_loss = if log.steps == 0 { 0.0 } else { total / log.steps as f64 };
    log.wall_seconds = start.elapsed().as_secs_f64();
    Ok(log)
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains a fresh model; the optional `log_path` receives one JSON line per
/// epoch.
pub fn train(
    corpus: &SplitCorpus,
    features: &Features,
    config: &Config,
    variant: Variant,
    options: &TrainOptions,
    log_path: Option<&Path>,
) -> Result<TrainReport> {
    config.validate()?;
    if features.k() != config.k {
        return Err(Error::Config(format!(
            "embeddings have k = {}, model config has k = {}",
            features.k(),
            config.k
        )));
    }
    let mut model = Model::new(config.clone(), variant)?;
    let mut opt = Sgd::new(&model.params, config.lr, config.momentum, config.clip_norm);
    let mut log_file = match log_path {
        Some(path) => {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            Some((std::fs::File::create(path).map_err(|e| Error::io(path, e))?, path))
        }
        None => None,
    };
    let mut report = TrainReport {
        model: model.clone(),
        best_epoch: None,
        epochs: Vec::new(),
        consumption: Vec::new(),
    };
    let mut best = f64::NEG_INFINITY;
    let cutoff = if options.cutoff == 0 { DEFAULT_CUTOFF } else { options.cutoff };
    for epoch in 0..config.epochs {
        let trace = options.trace_consumption.then_some(&mut report.consumption);
        let mut log = train_epoch(&mut model, &mut opt, corpus, features, epoch, trace)?;
        if options.validate {
            let r = eval::evaluate(&model, corpus, features, Split::Validation, cutoff)?;
            if r.metrics.ndcg > best {
                best = r.metrics.ndcg;
                report.model = model.clone();
                report.best_epoch = Some(epoch);
            }
            log.validation = Some(r.metrics);
        } else {
            report.model = model.clone();
        }
        log::info!(
            "epoch {epoch}: loss {:.5} over {} steps{}",
            log.mean_loss,
            log.steps,
            log.validation.map(|m| format!(", validation ndcg {:.4}", m.ndcg)).unwrap_or_default()
        );
        if let Some((f, path)) = log_file.as_mut() {
            let line = serde_json::to_string(&log).expect("serializable");
            writeln!(f, "{line}").map_err(|e| Error::io(*path, e))?;
        }
        report.epochs.push(log);
    }
    if config.epochs == 0 {
        report.model = model;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusConfig, CorpusCounts, Interaction, UserHistory};

    #[test]
    fn bpr_closed_forms() {
        assert!((bpr_loss(0.3, 0.3, 0.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bpr_loss(0.8, 0.2, 0.0, 0.0) - 0.4375).abs() < 1e-4);
        assert!((bpr_loss(1e3, -1e3, 0.5, 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negatives_exclude_positive_and_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_negatives(0, 2, 5, &mut rng).unwrap(), vec![1; 5]);
        assert_eq!(sample_negatives(3, 10, 5, &mut rng).unwrap().len(), 5);
        let draws = sample_negatives(4, 10, 100_000, &mut rng).unwrap();
        let mut counts = [0usize; 10];
        for d in draws {
            counts[d] += 1;
        }
        assert_eq!(counts[4], 0);
        let expect = 100_000.0 / 9.0;
        for (i, &c) in counts.iter().enumerate() {
            if i != 4 {
                assert!(((c as f64 - expect) / expect).abs() < 0.03, "{i}: {c}");
            }
        }
        assert!(sample_negatives(0, 1, 1, &mut rng).is_err());
    }

    #[test]
    fn l2_term_adds_exactly_lambda_norm() {
        let model = Model::new(Config { k: 3, m: 2, layers: 1, ..Config::default() }, Variant::ALSTP).unwrap();
        let feats = toy_features(3, 4);
        let ctx = UserContext { pref: vec![0.1, 0.0, -0.2], window: vec![Pair { query: 0, product: 1 }, Pair { query: 1, product: 2 }] };
        let eval_loss = |l2: f64| {
            let mut m = model.clone();
            m.config.l2 = l2;
            let mut g = Graph::new();
            let p = m.params.load_into(&mut g);
            let loss = triplet_loss(&mut g, &p, &m, &feats, &ctx, 2, 3, 0).unwrap();
            g.scalar(loss)
        };
        let lam = 0.01;
        let diff = eval_loss(lam) - eval_loss(0.0);
        // the tape holds f64 copies of the f32 parameters
        assert!((diff - lam * model.params.norm_sq()).abs() < 1e-9);
    }

    fn toy_features(k: usize, n: usize) -> Features {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let products = (0..n * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let queries = (0..n * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Features::new(k, products, queries).unwrap()
    }

    /// Three users whose next purchase is always the product after the
    /// previous one.
    fn toy_corpus(n_products: usize) -> SplitCorpus {
        let users: Vec<UserHistory> = (0..3)
            .map(|u| UserHistory {
                user_id: format!("u{u}"),
                interactions: (0..14)
                    .map(|i| {
                        let p = (u * 3 + i) % n_products;
                        Interaction { product: p, query_id: p, timestamp: i as i64 }
                    })
                    .collect(),
            })
            .collect();
        SplitCorpus {
            users,
            products: (0..n_products).map(|i| format!("p{i}")).collect(),
            queries: (0..n_products).map(|i| format!("q{i}")).collect(),
            vocab: vec![],
            reviews: vec![],
            config: CorpusConfig::default(),
            counts: CorpusCounts::default(),
        }
    }

    fn toy_config() -> Config {
        Config { k: 6, m: 2, layers: 1, lr: 0.01, epochs: 4, ..Config::default() }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let corpus = toy_corpus(8);
        let feats = toy_features(6, 8);
        let cfg = Config { lr: 0.0, epochs: 1, ..toy_config() };
        let start = Model::new(cfg.clone(), Variant::ALSTP).unwrap();
        let r = train(&corpus, &feats, &cfg, Variant::ALSTP, &TrainOptions::default(), None).unwrap();
        assert_eq!(r.model.params, start.params);
        assert!(r.epochs[0].steps > 0);
    }

    #[test]
    fn consumption_is_chronological_per_user() {
        let corpus = toy_corpus(8);
        let feats = toy_features(6, 8);
        let opts = TrainOptions { trace_consumption: true, ..TrainOptions::default() };
        let r = train(&corpus, &feats, &Config { epochs: 2, ..toy_config() }, Variant::ALSTP, &opts, None).unwrap();
        let mut last: std::collections::HashMap<usize, usize> = Default::default();
        let mut epoch_boundaries = 0;
        for &(u, i) in &r.consumption {
            match last.get(&u) {
                Some(&prev) if i <= prev => {
                    assert_eq!(i, 0, "user {u} went back to {i}");
                    epoch_boundaries += 1;
                }
                _ => {}
            }
            last.insert(u, i);
        }
        assert_eq!(epoch_boundaries, 3);
    }

    #[test]
    fn identical_seeds_give_identical_models() {
        let corpus = toy_corpus(8);
        let feats = toy_features(6, 8);
        let opts = TrainOptions::with_validation();
        let a = train(&corpus, &feats, &toy_config(), Variant::ALSTP, &opts, None).unwrap();
        let b = train(&corpus, &feats, &toy_config(), Variant::ALSTP, &opts, None).unwrap();
        assert_eq!(a.model.checksum(), b.model.checksum());
        let best = a.epochs[a.best_epoch.unwrap()].validation.unwrap().ndcg;
        assert!(a.epochs.iter().all(|e| e.validation.unwrap().ndcg <= best));
        assert!(a.epochs.iter().all(|e| e.max_clipped_norm <= 5.0 + 1e-5));
    }
}
