//! Traffic arrivals, the data queue, the virtual queues and the block-maxima excess sampler.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::gpd::GpdParams;
use crate::scalar::{pos, Scalar};

/// Poisson bit arrivals with mean `mean_rate * slot` per slot.
#[derive(Debug, Clone)]
pub struct TrafficSource {
    mean_rate: f64,
    slot: f64,
    law: Option<Poisson<f64>>,
}

impl TrafficSource {
    /// `mean_rate` in bits/s, `slot` in seconds.
    pub fn new(mean_rate: f64, slot: f64) -> Result<Self> {
        if !(mean_rate >= 0.0) || !mean_rate.is_finite() {
            return Err(Error::domain("mean_rate", mean_rate, ">= 0"));
        }
        if !(slot > 0.0) {
            return Err(Error::domain("slot", slot, "> 0"));
        }
        let lambda = mean_rate * slot;
        let law = if lambda > 0.0 {
            Some(
                Poisson::new(lambda)
                    .map_err(|_| Error::domain("mean_rate", mean_rate, "finite"))?,
            )
        } else {
            None
        };
        Ok(Self {
            mean_rate,
            slot,
            law,
        })
    }

    pub fn mean_rate(&self) -> f64 {
        self.mean_rate
    }

    pub fn mean_per_slot(&self) -> f64 {
        self.mean_rate * self.slot
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.law {
            Some(p) => p.sample(rng) as u64,
            None => 0,
        }
    }
}

/// Data queue plus the three virtual queues of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QueueState<T> {
    /// bits
    pub q: u64,
    /// Reliability queue, bits.
    pub vq_rel: T,
    /// First-moment queue, bits.
    pub vq_m1: T,
    /// Second-moment queue, bits^2.
    pub vq_m2: T,
}

/// `max(0, q + arrivals - served)`
#[inline]
pub fn step_queue(q: u64, arrivals: u64, served: u64) -> u64 {
    (q + arrivals).saturating_sub(served)
}

/// Updates the virtual queues after the data queue moved from `q_prev` to `q_next`.
///
/// The tail indicator is evaluated on `q_prev`.
pub fn step_virtual_queues<T: Scalar>(
    state: &QueueState<T>,
    q_next: u64,
    q_prev: u64,
    theta: &GpdParams<T>,
    eps: T,
    q0: u64,
) -> Result<QueueState<T>> {
    let (m1, m2) = theta.moments()?;
    let qn = T::lit(q_next as f64);
    let q0f = T::lit(q0 as f64);
    let mut next = *state;
    next.q = q_next;
    next.vq_rel = pos(state.vq_rel + qn - eps * q0f);
    if q_prev > q0 {
        let u = qn - q0f;
        next.vq_m1 = pos(state.vq_m1 + u - m1);
        next.vq_m2 = pos(state.vq_m2 + u * u - m2);
    }
    Ok(next)
}

/// At most one excess sample per block of `block_len` slots: the block maximum minus the
/// threshold, kept only when positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcessSampler {
    block_len: u64,
    threshold: u64,
    running_max: u64,
    samples: Vec<u64>,
    max_sample: u64,
}

impl ExcessSampler {
    pub fn new(block_len: u64, threshold: u64) -> Result<Self> {
        if block_len == 0 {
            return Err(Error::domain("block_len", 0.0, ">= 1"));
        }
        Ok(Self {
            block_len,
            threshold,
            running_max: 0,
            samples: Vec::new(),
            max_sample: 0,
        })
    }

    /// Records the queue at `slot`; returns the sample produced when `slot` closes a block.
    pub fn observe(&mut self, slot: u64, q: u64) -> Option<u64> {
        self.running_max = self.running_max.max(q);
        if (slot + 1) % self.block_len != 0 {
            return None;
        }
        let peak = std::mem::take(&mut self.running_max);
        if peak > self.threshold {
            let x = peak - self.threshold;
            self.samples.push(x);
            self.max_sample = self.max_sample.max(x);
            Some(x)
        } else {
            None
        }
    }

    pub fn samples(&self) -> &[u64] {
        &self.samples
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }

    /// Largest sample, 0 when empty.
    pub fn max_sample(&self) -> u64 {
        self.max_sample
    }

    pub fn block_len(&self) -> u64 {
        self.block_len
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }
}
