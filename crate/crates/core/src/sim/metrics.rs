//! Run-level metric accumulation.

use crate::config::Protocol;

/// Summary of one run. Every field is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub protocol: Protocol,
    pub n_pairs: usize,
    pub seed: u64,
    pub slots: u64,
    /// W per pair per slot.
    pub avg_power_w: f64,
    pub avg_queue_bits: f64,
    pub max_queue_bits: u64,
    /// Fraction of pair-slots with the queue below the threshold.
    pub reliability: f64,
    pub outage: f64,
    pub tail_mean_bits: f64,
    pub tail_std_bits: f64,
    pub n_excess_samples: usize,
    pub bits_exchanged: u64,
    pub n_events: usize,
    pub blocked_slots: u64,
    /// Final scale estimate in bits.
    pub sigma: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Accumulator {
    pub slots: u64,
    pub pair_slots: u64,
    pub power: f64,
    pub queue: u128,
    pub max_queue: u64,
    pub below: u64,
    pub blocked: u64,
}

impl Accumulator {
    pub fn record_pair(&mut self, power: f64, queue: u64, q0: u64, blocked: bool) {
        self.pair_slots += 1;
        self.power += power;
        self.queue += u128::from(queue);
        self.max_queue = self.max_queue.max(queue);
        self.below += u64::from(queue < q0);
        self.blocked += u64::from(blocked);
    }
}

/// `(mean, sample standard deviation)`, zeros when undefined.
pub fn mean_std(xs: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = xs.into_iter().collect();
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
