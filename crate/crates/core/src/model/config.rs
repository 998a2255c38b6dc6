use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model and optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    /// Embedding dimension shared by queries, products and user preferences.
    pub k: usize,
    /// Short-term window size; also the long-term update period.
    pub m: usize,
    /// Hidden width of the short-term attention network; `None` means `k`.
    pub f: Option<usize>,
    /// Long-term update rate.
    pub beta: f64,
    /// Number of fusion tower layers.
    pub layers: usize,
    /// Negatives sampled per positive pair.
    pub negatives: usize,
    pub lr: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    /// L2 coefficient on trainable parameters.
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Queries and products share one projection layer.
    pub shared_projection: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            k: 256,
            m: 4,
            f: None,
            beta: 0.5,
            layers: 2,
            negatives: 5,
            lr: 1e-4,
            momentum: 0.9,
            clip_norm: 5.0,
            l2: 0.0,
            epochs: 20,
            seed: 0,
            shared_projection: true,
        }
    }
}

impl Config {
    pub fn attention_width(&self) -> usize {
        self.f.unwrap_or(self.k)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k", self.k),
            ("m", self.m),
            ("f", self.attention_width()),
            ("layers", self.layers),
            ("negatives", self.negatives),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if self.lr < 0.0 || self.l2 < 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("lr and l2 must be nonnegative, momentum in [0, 1)".into()));
        }
        Ok(())
    }

    /// Layer output widths of the fusion tower for a given input width,
    /// shrinking linearly to `k`.
    pub fn tower_widths(&self, input: usize) -> Vec<usize> {
        let l = self.layers;
        (1..=l)
            .map(|i| input - (input - self.k) * i / l)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tower_is_three_two_one() {
        let c = Config { k: 8, ..Config::default() };
        assert_eq!(c.tower_widths(24), vec![16, 8]);
        let c = Config { k: 8, layers: 1, ..Config::default() };
        assert_eq!(c.tower_widths(24), vec![8]);
    }

    #[test]
    fn tower_strictly_decreasing() {
        for k in 1..12 {
            for layers in 1..=(2 * k).min(6) {
                let c = Config { k, layers, ..Config::default() };
                let w = c.tower_widths(3 * k);
                assert_eq!(*w.last().unwrap(), k);
                let mut prev = 3 * k;
                for &x in &w {
                    assert!(x < prev, "k={k} layers={layers} widths={w:?}");
                    prev = x;
                }
            }
        }
    }

    #[test]
    fn validation() {
        assert!(Config::default().validate().is_ok());
        assert!(Config { beta: 1.5, ..Config::default() }.validate().is_err());
        assert!(Config { m: 0, ..Config::default() }.validate().is_err());
        assert!(Config { clip_norm: 0.0, ..Config::default() }.validate().is_err());
    }
}
