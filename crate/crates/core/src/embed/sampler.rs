use rand::Rng;

/// Draws word ids proportionally to `frequency^0.75`.
#[derive(Debug, Clone)]
pub struct UnigramSampler {
    cumulative: Vec<f64>,
}

impl UnigramSampler {
    pub const POWER: f64 = 0.75;

    pub fn new(frequencies: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = frequencies
            .iter()
            .map(|&f| {
                acc += (f as f64).powf(Self::POWER);
                acc
            })
            .collect();
        UnigramSampler { cumulative }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Normalised sampling probability of each word.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.cumulative.last().copied().unwrap_or(0.0);
        let mut prev = 0.0;
        self.cumulative
            .iter()
            .map(|&c| {
                let p = (c - prev) / total;
                prev = c;
                p
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("nonempty sampler");
        let x = rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= x)
            .min(self.cumulative.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn empirical_frequencies_match() {
        let freqs = [100u64, 50, 20, 10, 5, 1];
        let sampler = UnigramSampler::new(&freqs);
        let total: f64 = freqs.iter().map(|&f| (f as f64).powf(0.75)).sum();
        let expected: Vec<f64> = freqs.iter().map(|&f| (f as f64).powf(0.75) / total).collect();
        for (p, e) in sampler.probabilities().iter().zip(&expected) {
            assert!((p - e).abs() < 1e-12);
        }

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let mut counts = vec![0usize; freqs.len()];
        for _ in 0..draws {
            counts[sampler.sample(&mut rng)] += 1;
        }
        // every word expected at least a few thousand times, so 5% relative holds
        for (i, &c) in counts.iter().enumerate().take(5) {
            let want = expected[i] * draws as f64;
            let rel = (c as f64 - want).abs() / want;
            assert!(rel < 0.05, "word {i}: {c} vs {want}");
        }
        // chi-square over all six cells, 5 dof; 20.5 is the 0.999 quantile
        let chi2: f64 = counts
            .iter()
            .zip(&expected)
            .map(|(&c, &e)| {
                let want = e * draws as f64;
                (c as f64 - want).powi(2) / want
            })
            .sum();
        assert!(chi2 < 20.5, "chi2 = {chi2}");
    }
}
