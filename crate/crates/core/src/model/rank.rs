use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full-catalog ranking for one query. Products are indices into the
/// id-sorted catalog, so ascending index is ascending product id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    /// Product indices, best first.
    pub order: Vec<usize>,
    /// Score of every product, indexed by product.
    pub scores: Vec<f64>,
}

impl RankedList {
    /// Sorts descending by score; equal scores keep ascending product index.
    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| s.is_nan()) {
            return Err(Error::NonFinite(format!("score of product {i}")));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("no NaN").then(a.cmp(&b)));
        Ok(RankedList { order, scores })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 1-based rank of a product.
    pub fn rank_of(&self, product: usize) -> Option<usize> {
        self.order.iter().position(|&p| p == product).map(|i| i + 1)
    }

    pub fn top(&self, n: usize) -> &[usize] {
        &self.order[..n.min(self.order.len())]
    }
}

/// Cosine of two plain vectors; zero norms are an error.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 {
        return Err(Error::ZeroNorm("cosine"));
    }
    if nb == 0.0 {
        return Err(Error::ZeroNorm("cosine"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}
