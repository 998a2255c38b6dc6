//! Flat `key = value` run settings covering every stage of the pipeline.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Unknown keys are errors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::DEFAULT_PROFILE_THRESHOLD;
use crate::corpus::CorpusConfig;
use crate::embed::PvdmConfig;
use crate::error::{Error, Result};
use crate::eval::DEFAULT_CUTOFF;
use crate::model::Config;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub embed: PvdmConfig,
    pub model: Config,
    pub cutoff: usize,
    pub mu: f64,
    pub lambda_mix: f64,
    pub profile_threshold: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seed: 0,
            corpus: CorpusConfig::default(),
            embed: PvdmConfig::default(),
            model: Config::default(),
            cutoff: DEFAULT_CUTOFF,
            mu: 2000.0,
            lambda_mix: 0.5,
            profile_threshold: DEFAULT_PROFILE_THRESHOLD,
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "k",
    "m",
    "f",
    "beta",
    "layers",
    "negatives",
    "lr",
    "momentum",
    "clip",
    "l2",
    "epochs",
    "shared_projection",
    "embed_window",
    "embed_epochs",
    "embed_negatives",
    "embed_lr",
    "embed_min_lr",
    "infer_epochs",
    "min_user_interactions",
    "min_product_interactions",
    "min_word_freq",
    "cutoff",
    "mu",
    "lambda_mix",
    "profile_threshold",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl Settings {
    /// Sets one key. `k` sets both the embedding and model dimension and
    /// `seed` seeds every stage.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => {
                let s: u64 = parse(key, v)?;
                self.seed = s;
                self.corpus.seed = s;
                self.embed.seed = s;
                self.model.seed = s;
            }
            "k" => {
                let k = parse(key, v)?;
                self.model.k = k;
                self.embed.k = k;
            }
            "m" => self.model.m = parse(key, v)?,
            "f" => self.model.f = if v == "none" { None } else { Some(parse(key, v)?) },
            "beta" => self.model.beta = parse(key, v)?,
            "layers" => self.model.layers = parse(key, v)?,
            "negatives" => self.model.negatives = parse(key, v)?,
            "lr" => self.model.lr = parse(key, v)?,
            "momentum" => self.model.momentum = parse(key, v)?,
            "clip" => self.model.clip_norm = parse(key, v)?,
            "l2" => self.model.l2 = parse(key, v)?,
            "epochs" => self.model.epochs = parse(key, v)?,
            "shared_projection" => self.model.shared_projection = parse(key, v)?,
            "embed_window" => self.embed.window = parse(key, v)?,
            "embed_epochs" => self.embed.epochs = parse(key, v)?,
            "embed_negatives" => self.embed.negatives = parse(key, v)?,
            "embed_lr" => self.embed.lr = parse(key, v)?,
            "embed_min_lr" => self.embed.min_lr = parse(key, v)?,
            "infer_epochs" => self.embed.infer_epochs = parse(key, v)?,
            "min_user_interactions" => self.corpus.min_user_interactions = parse(key, v)?,
            "min_product_interactions" => self.corpus.min_product_interactions = parse(key, v)?,
            "min_word_freq" => self.corpus.min_word_freq = parse(key, v)?,
            "cutoff" => self.cutoff = parse(key, v)?,
            "mu" => self.mu = parse(key, v)?,
            "lambda_mix" => self.lambda_mix = parse(key, v)?,
            "profile_threshold" => self.profile_threshold = parse(key, v)?,
            other => {
                return Err(Error::Unknown {
                    kind: "config key",
                    key: other.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.model;
        Some(match key {
            "seed" => self.seed.to_string(),
            "k" => m.k.to_string(),
            "m" => m.m.to_string(),
            "f" => m.f.map_or("none".to_string(), |f| f.to_string()),
            "beta" => m.beta.to_string(),
            "layers" => m.layers.to_string(),
            "negatives" => m.negatives.to_string(),
            "lr" => m.lr.to_string(),
            "momentum" => m.momentum.to_string(),
            "clip" => m.clip_norm.to_string(),
            "l2" => m.l2.to_string(),
            "epochs" => m.epochs.to_string(),
            "shared_projection" => m.shared_projection.to_string(),
            "embed_window" => self.embed.window.to_string(),
            "embed_epochs" => self.embed.epochs.to_string(),
            "embed_negatives" => self.embed.negatives.to_string(),
            "embed_lr" => self.embed.lr.to_string(),
            "embed_min_lr" => self.embed.min_lr.to_string(),
            "infer_epochs" => self.embed.infer_epochs.to_string(),
            "min_user_interactions" => self.corpus.min_user_interactions.to_string(),
            "min_product_interactions" => self.corpus.min_product_interactions.to_string(),
            "min_word_freq" => self.corpus.min_word_freq.to_string(),
            "cutoff" => self.cutoff.to_string(),
            "mu" => self.mu.to_string(),
            "lambda_mix" => self.lambda_mix.to_string(),
            "profile_threshold" => self.profile_threshold.to_string(),
            _ => return None,
        })
    }

    /// Every key in file syntax; re-applying it reproduces `self`.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        let mut s = Settings::default();
        s.apply_text("# comment\nk = 8\n\nbeta=0.25\nf = 6\nseed = 3\nshared_projection = false\n").unwrap();
        assert_eq!((s.model.k, s.embed.k, s.model.beta, s.model.f), (8, 8, 0.25, Some(6)));
        assert_eq!((s.corpus.seed, s.embed.seed, s.model.seed), (3, 3, 3));
        let mut t = Settings::default();
        t.apply_text(&s.to_text()).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn bad_lines_are_rejected() {
        let mut s = Settings::default();
        assert!(matches!(s.apply_text("nope = 1"), Err(Error::Unknown { .. })));
        assert!(s.apply_text("k 8").is_err());
        assert!(s.apply_text("k = eight").is_err());
    }
}
