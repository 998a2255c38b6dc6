//! Single-relevant-item ranking metrics.

pub const DEFAULT_CUTOFF: usize = 20;

pub fn hit_ratio(rank: usize, cutoff: usize) -> f64 {
    assert!(rank >= 1, "ranks are 1-based");
    if rank <= cutoff {
        1.0
    } else {
        0.0
    }
}

pub fn reciprocal_rank(rank: usize, cutoff: usize) -> f64 {
    assert!(rank >= 1, "ranks are 1-based");
    if rank <= cutoff {
        1.0 / rank as f64
    } else {
        0.0
    }
}

/// NDCG with one relevant item, so the ideal DCG is 1.
pub fn ndcg_single(rank: usize, cutoff: usize) -> f64 {
    assert!(rank >= 1, "ranks are 1-based");
    if rank <= cutoff {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}
