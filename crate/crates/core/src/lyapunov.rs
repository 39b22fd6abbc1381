//! Drift-plus-penalty weights, water-filling power allocation and drift-bound checks.

use crate::error::Result;
use crate::gpd::GpdParams;
use crate::queues::{step_queue, step_virtual_queues, QueueState};
use crate::scalar::Scalar;

/// Which constraints the per-pair weight accounts for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightRule {
    /// Stability, reliability and both tail-moment constraints.
    Full,
    /// Queue stability only.
    QueueStability,
    /// Stability plus the Markov reliability bound, no tail terms.
    QueueReliability,
}

/// Drift-plus-penalty weight `psi` of one pair.
pub fn compute_weight<T: Scalar>(
    rule: WeightRule,
    state: &QueueState<T>,
    theta: &GpdParams<T>,
    eps: T,
    q0: u64,
    bandwidth: T,
) -> Result<T> {
    let pre = bandwidth / T::LN_2();
    let q = T::lit(state.q as f64);
    let q0f = T::lit(q0 as f64);
    let base = (T::one() + state.vq_rel - eps * q0f) * q - eps * state.vq_rel;
    let inner = match rule {
        WeightRule::QueueStability => q,
        WeightRule::QueueReliability => base,
        WeightRule::Full => {
            let (m1, m2) = theta.moments()?;
            let tail = if state.q > q0 {
                let u = q - q0f;
                q + state.vq_m1 - q0f - m1 + T::lit(2.0) * u * (state.vq_m2 + u * u - m2)
            } else {
                T::zero()
            };
            base + tail
        }
    };
    Ok(pre * inner)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation<T> {
    /// W, one entry per allocated RB.
    pub per_rb_power: Vec<T>,
    /// Multiplier of the sum-power constraint.
    pub dual: T,
}

impl<T: Scalar> PowerAllocation<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            per_rb_power: vec![T::zero(); n],
            dual: T::zero(),
        }
    }

    pub fn total(&self) -> T {
        self.per_rb_power.iter().fold(T::zero(), |a, &p| a + p)
    }
}

/// Minimizes `sum_f [v p_f - psi ln(1 + gamma_f p_f)]` subject to `sum p_f <= p_max`, `p_f >= 0`.
///
/// Exact: the water level is found by sorting the inverse gains, no bisection.
pub fn water_fill<T: Scalar>(psi: T, v: T, cinr: &[T], p_max: T) -> PowerAllocation<T> {
    let n = cinr.len();
    if !(psi > T::zero()) || n == 0 || !(p_max > T::zero()) {
        return PowerAllocation::zeros(n);
    }
    let usable = |g: T| g > T::zero() && g.is_finite();
    let floor_of = |g: T| T::one() / g;
    let fill = |mu: T| -> Vec<T> {
        cinr.iter()
            .map(|&g| {
                if usable(g) {
                    crate::scalar::pos(mu - floor_of(g))
                } else {
                    T::zero()
                }
            })
            .collect()
    };

    if v > T::zero() {
        let free = fill(psi / v);
        let s = free.iter().fold(T::zero(), |a, &p| a + p);
        if s <= p_max {
            return PowerAllocation {
                per_rb_power: free,
                dual: T::zero(),
            };
        }
    }

    let mut floors: Vec<T> = cinr
        .iter()
        .copied()
        .filter(|&g| usable(g))
        .map(floor_of)
        .collect();
    if floors.is_empty() {
        return PowerAllocation::zeros(n);
    }
    floors.sort_by(|a, b| a.partial_cmp(b).expect("finite floors"));
    let mut acc = T::zero();
    let mut mu = T::zero();
    for (k, &a) in floors.iter().enumerate() {
        acc = acc + a;
        let cand = (p_max + acc) / T::from_count(k + 1);
        if cand > a {
            mu = cand;
        } else {
            break;
        }
    }
    let dual = crate::scalar::pos(psi / mu - v);
    PowerAllocation {
        per_rb_power: fill(mu),
        dual,
    }
}

/// Per-pair objective being minimized by [`water_fill`].
pub fn objective<T: Scalar>(psi: T, v: T, cinr: &[T], power: &[T]) -> T {
    cinr.iter().zip(power).fold(T::zero(), |acc, (&g, &p)| {
        acc + v * p - psi * (g * p).ln_1p()
    })
}

/// Largest relative violation of the optimality conditions of an allocation.
pub fn kkt_residual<T: Scalar>(
    psi: T,
    v: T,
    cinr: &[T],
    p_max: T,
    alloc: &PowerAllocation<T>,
) -> T {
    let level = v + alloc.dual;
    let mut worst = T::zero();
    if psi <= T::zero() {
        return alloc.total() / p_max;
    }
    for (&g, &p) in cinr.iter().zip(&alloc.per_rb_power) {
        if p < T::zero() {
            worst = worst.max(-p / p_max);
        }
        let marginal = psi * g / (T::one() + g * p);
        let r = if p > T::zero() {
            (marginal - level).abs() / level.max(marginal)
        } else {
            crate::scalar::pos(marginal - level) / level.max(marginal)
        };
        worst = worst.max(r);
    }
    let total = alloc.total();
    worst = worst.max(crate::scalar::pos(total - p_max) / p_max);
    let slack = alloc.dual * (p_max - total) / (p_max * level.max(T::min_positive_value()));
    worst.max(slack.abs())
}

/// One pair's record for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotTrace<T> {
    pub state: QueueState<T>,
    pub arrivals: u64,
    /// Offered service in bits; departures are capped by the queue content.
    pub served: u64,
}

impl<T: Scalar> SlotTrace<T> {
    /// Bits actually leaving the queue.
    pub fn departures(&self) -> u64 {
        self.served.min(self.state.q + self.arrivals)
    }
}

/// Terms of the one-slot drift bound `B + sum_v [C_v + (a_v - d_v) L_v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftDiagnostics<T> {
    pub bound_b: T,
    pub const_terms: Vec<T>,
    /// `(a_v - d_v) L_v`
    pub control_terms: Vec<T>,
    /// `Q0 + sigma / (1 - xi)`
    pub moment1: T,
    /// `2 sigma^2 / ((1 - xi)(1 - 2 xi))`
    pub moment2: T,
    pub realized_drift: T,
    pub bound: T,
    /// Magnitude of the largest summand, for rounding-aware comparisons.
    pub scale: T,
}

impl<T: Scalar> DriftDiagnostics<T> {
    /// Whether the realized drift respects the bound up to rounding.
    pub fn holds(&self) -> bool {
        self.realized_drift <= self.bound + T::lit(64.0) * T::epsilon() * self.scale
    }
}

/// Evaluates the drift bound on one slot and the drift actually realized by the queue updates.
pub fn drift_bound_diagnostics<T: Scalar>(
    trace: &[SlotTrace<T>],
    theta: &GpdParams<T>,
    eps: T,
    q0: u64,
) -> Result<DriftDiagnostics<T>> {
    let (mean, d2) = theta.moments()?;
    let q0f = T::lit(q0 as f64);
    let d1 = q0f + mean;
    let half = T::lit(0.5);
    let two = T::lit(2.0);

    let mut bound_b = T::zero();
    let mut const_terms = Vec::with_capacity(trace.len());
    let mut control_terms = Vec::with_capacity(trace.len());
    let mut realized = T::zero();
    let mut scale = T::zero();
    for rec in trace {
        let s = &rec.state;
        let q = T::lit(s.q as f64);
        let delta = T::lit(rec.arrivals as f64) - T::lit(rec.departures() as f64);
        let dd = delta * delta;
        let tail = s.q > q0;
        let u = q - q0f;
        let (x, y, z) = (s.vq_rel, s.vq_m1, s.vq_m2);

        let a1 = dd * half;
        let a2 = (q * q + dd + eps * eps * q0f * q0f) * half;
        let (a3, a4) = if tail {
            let w = u * u + dd - d2;
            (
                (q * q + dd + d1 * d1) * half,
                w * w * half + (u * u + dd) * z + two * (u * u + u * delta) * dd,
            )
        } else {
            (T::zero(), T::zero())
        };
        let b1 = x * (q - eps * q0f) - eps * q0f * q;
        let b2 = if tail {
            (y - d1) * q - d1 * y
        } else {
            T::zero()
        };
        let mut lin = two * q + x - eps * q0f;
        if tail {
            lin = lin + q + y - d1 + two * u * (z + u * u - d2);
        }
        let b = a1 + a2 + a3 + a4;
        bound_b = bound_b + b;
        const_terms.push(b1 + b2);
        control_terms.push(delta * lin);

        let q_next = step_queue(s.q, rec.arrivals, rec.served);
        let next = step_virtual_queues(s, q_next, s.q, theta, eps, q0)?;
        let sq = |v: T| v * v;
        let qn = T::lit(q_next as f64);
        realized = realized
            + half
                * (sq(qn) - sq(q) + sq(next.vq_rel) - sq(x) + sq(next.vq_m1) - sq(y)
                    + sq(next.vq_m2)
                    - sq(z));
        for t in [
            a1,
            a2,
            a3,
            a4,
            b1.abs(),
            b2.abs(),
            (delta * lin).abs(),
            sq(qn),
            sq(next.vq_m2),
            sq(z),
        ] {
            scale = scale + t.abs();
        }
    }
    let bound = bound_b
        + const_terms.iter().fold(T::zero(), |a, &c| a + c)
        + control_terms.iter().fold(T::zero(), |a, &c| a + c);
    Ok(DriftDiagnostics {
        bound_b,
        const_terms,
        control_terms,
        moment1: d1,
        moment2: d2,
        realized_drift: realized,
        bound,
        scale,
    })
}
