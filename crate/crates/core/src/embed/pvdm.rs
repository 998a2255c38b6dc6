//! Distributed-memory paragraph vectors trained with negative sampling.
//!
//! For every position the center word is predicted from the mean of the
//! document vector and the surrounding context word vectors.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::UnigramSampler;
use crate::numerics::{log_sigmoid, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvdmConfig {
    pub k: usize,
    /// Context words on each side of the center word.
    pub window: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub lr: f64,
    pub min_lr: f64,
    /// Epochs used when fitting a vector for an unseen query.
    pub infer_epochs: usize,
    pub seed: u64,
}

impl Default for PvdmConfig {
    fn default() -> Self {
        PvdmConfig {
            k: 256,
            window: 5,
            epochs: 20,
            negatives: 5,
            lr: 0.025,
            min_lr: 0.0001,
            infer_epochs: 50,
            seed: 0,
        }
    }
}

/// A token sequence over the word vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: usize,
    pub tokens: Vec<usize>,
}

/// Mutable training state: row-major `n x k` matrices.
#[derive(Debug, Clone)]
pub(crate) struct PvdmState {
    pub docs: Vec<f32>,
    pub words: Vec<f32>,
    pub outputs: Vec<f32>,
}

pub(crate) fn stream_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 over the combined key
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn init_rows<R: Rng>(rows: usize, k: usize, rng: &mut R) -> Vec<f32> {
    let bound = 0.5 / k as f32;
    (0..rows * k).map(|_| rng.gen_range(-bound..bound)).collect()
}

pub(crate) fn learning_rate(cfg: &PvdmConfig, epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 {
        return cfg.lr;
    }
    cfg.lr - (cfg.lr - cfg.min_lr) * epoch as f64 / (epochs - 1) as f64
}

/// One pass over a document. Returns (summed loss, positions). With
/// `learn_shared` off only `doc_vec` moves.
#[allow(clippy::too_many_arguments)]
pub(crate) fn train_document(
    doc_vec: &mut [f32],
    tokens: &[usize],
    words: &mut [f32],
    outputs: &mut [f32],
    sampler: &UnigramSampler,
    cfg: &PvdmConfig,
    lr: f64,
    learn_shared: bool,
    rng: &mut ChaCha8Rng,
) -> (f64, usize) {
    let k = doc_vec.len();
    let mut hidden = vec![0f64; k];
    let mut neu1e = vec![0f64; k];
    let mut loss = 0.0;
    let mut targets = Vec::with_capacity(cfg.negatives + 1);
    for (i, &center) in tokens.iter().enumerate() {
        let lo = i.saturating_sub(cfg.window);
        let hi = (i + cfg.window + 1).min(tokens.len());
        let context: Vec<usize> = (lo..hi).filter(|&j| j != i).map(|j| tokens[j]).collect();
        let count = (1 + context.len()) as f64;

        for (h, &d) in hidden.iter_mut().zip(doc_vec.iter()) {
            *h = d as f64;
        }
        for &c in &context {
            for (h, &w) in hidden.iter_mut().zip(&words[c * k..(c + 1) * k]) {
                *h += w as f64;
            }
        }
        hidden.iter_mut().for_each(|h| *h /= count);
        neu1e.iter_mut().for_each(|e| *e = 0.0);

        targets.clear();
        targets.push((center, 1.0));
        if sampler.len() > 1 {
            while targets.len() < cfg.negatives + 1 {
                let w = sampler.sample(rng);
                if w != center {
                    targets.push((w, 0.0));
                }
            }
        }
        for &(t, label) in &targets {
            let out = &mut outputs[t * k..(t + 1) * k];
            let dot: f64 = hidden.iter().zip(out.iter()).map(|(h, &o)| h * o as f64).sum();
            loss -= if label > 0.0 { log_sigmoid(dot) } else { log_sigmoid(-dot) };
            let g = (label - sigmoid(dot)) * lr;
            for j in 0..k {
                neu1e[j] += g * out[j] as f64;
                if learn_shared {
                    out[j] += (g * hidden[j]) as f32;
                }
            }
        }

        // d(hidden)/d(input) = 1/count for each averaged input
        for (d, e) in doc_vec.iter_mut().zip(&neu1e) {
            *d += (e / count) as f32;
        }
        if learn_shared {
            for &c in &context {
                for (w, e) in words[c * k..(c + 1) * k].iter_mut().zip(&neu1e) {
                    *w += (e / count) as f32;
                }
            }
        }
    }
    (loss, tokens.len())
}

/// Trains document, word and output vectors. Returns the state and the mean
/// per-position loss of every epoch.
pub(crate) fn train(
    docs: &[Document],
    n_docs: usize,
    word_freq: &[u64],
    cfg: &PvdmConfig,
) -> (PvdmState, Vec<f64>) {
    let k = cfg.k;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = PvdmState {
        docs: init_rows(n_docs, k, &mut rng),
        words: init_rows(word_freq.len(), k, &mut rng),
        outputs: vec![0.0; word_freq.len() * k],
    };
    let sampler = UnigramSampler::new(word_freq);
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = learning_rate(cfg, epoch, cfg.epochs);
        let mut epoch_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, epoch as u64, u64::MAX));
        order.shuffle(&mut epoch_rng);
        let (mut total, mut positions) = (0.0, 0usize);
        for &di in &order {
            let doc = &docs[di];
            let mut doc_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, epoch as u64, doc.doc_id as u64));
            let row = doc.doc_id * k;
            let (l, n) = train_document(
                &mut state.docs[row..row + k],
                &doc.tokens,
                &mut state.words,
                &mut state.outputs,
                &sampler,
                cfg,
                lr,
                true,
                &mut doc_rng,
            );
            total += l;
            positions += n;
        }
        losses.push(if positions == 0 { 0.0 } else { total / positions as f64 });
    }
    (state, losses)
}
