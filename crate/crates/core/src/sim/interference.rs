//! Time-averaged interference estimate per pair and RB.

/// Exponential moving average of the realized interference, W.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceEstimate {
    beta: f64,
    est: Vec<Vec<f64>>,
}

impl InterferenceEstimate {
    pub fn new(n_pairs: usize, n_rbs: usize, beta: f64) -> Self {
        Self {
            beta,
            est: vec![vec![0.0; n_rbs]; n_pairs],
        }
    }

    pub fn get(&self, pair: usize, rb: usize) -> f64 {
        self.est[pair][rb]
    }

    /// `I <- (1 - beta) I + beta * realized`
    pub fn update(&mut self, pair: usize, rb: usize, realized: f64) {
        let e = &mut self.est[pair][rb];
        *e = (1.0 - self.beta) * *e + self.beta * realized;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_to_constant() {
        let mut e = InterferenceEstimate::new(1, 1, 0.05);
        for _ in 0..1000 {
            e.update(0, 0, 2.0);
        }
        assert!((e.get(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn extreme_factors() {
        let mut e = InterferenceEstimate::new(1, 2, 1.0);
        e.update(0, 1, 3.0);
        e.update(0, 1, 7.0);
        assert_eq!(e.get(0, 1), 7.0);
        let mut f = InterferenceEstimate::new(1, 1, 0.0);
        f.update(0, 0, 5.0);
        assert_eq!(f.get(0, 0), 0.0);
    }
}
