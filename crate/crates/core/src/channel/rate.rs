//! Achievable-rate formulas and the complementary error function.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `bandwidth * log2(1 + sinr)`, bits/s.
pub fn shannon_rate_per_rb<T: Scalar>(sinr: T, bandwidth: T) -> T {
    bandwidth * sinr.max(T::zero()).ln_1p() / T::LN_2()
}

/// Normal-approximation rate at block length `block_len` and error probability `err_prob`.
pub fn finite_block_rate<T: Scalar>(sinr: T, block_len: T, err_prob: T, bandwidth: T) -> Result<T> {
    Ok(FiniteBlockRate::new(block_len, err_prob)?.rate(sinr, bandwidth))
}

/// [`finite_block_rate`] with the inverse-erfc factor computed once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteBlockRate<T> {
    block_len: T,
    q: T,
}

impl<T: Scalar> FiniteBlockRate<T> {
    pub fn new(block_len: T, err_prob: T) -> Result<Self> {
        let e = err_prob.as_f64();
        if !(e > 0.0 && e <= 0.5) {
            return Err(Error::domain("err_prob", e, "in (0, 0.5]"));
        }
        if !(block_len > T::zero()) {
            return Err(Error::domain("block_len", block_len.as_f64(), "> 0"));
        }
        Ok(Self {
            block_len,
            q: T::lit(erfcinv(2.0 * e)),
        })
    }

    pub fn rate(&self, sinr: T, bandwidth: T) -> T {
        let s = sinr.max(T::zero());
        let two = T::lit(2.0);
        let dispersion = (two * s * (s + two)).sqrt() * self.q
            / (self.block_len.sqrt() * (s + T::one()) * T::LN_2());
        bandwidth * crate::scalar::pos(s.ln_1p() / T::LN_2() - dispersion)
    }
}

/// Complementary error function, accurate to about 1e-15 relative.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.0 {
        1.0 - erf_series(x)
    } else {
        erfc_cf(x)
    }
}

// erf(x) = 2/sqrt(pi) * sum (-1)^n x^(2n+1) / (n! (2n+1))
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= -x2 / n;
        let add = term / (2.0 * n + 1.0);
        sum += add;
        if add.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum * std::f64::consts::FRAC_2_SQRT_PI
}

// Modified Lentz on erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))).
fn erfc_cf(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (f * std::f64::consts::PI.sqrt())
}

/// Inverse of [`erfc`] on `(0, 2)`, by bisection followed by Newton refinement.
pub fn erfcinv(y: f64) -> f64 {
    if !(y > 0.0 && y < 2.0) {
        return match y {
            y if y == 0.0 => f64::INFINITY,
            y if y == 2.0 => f64::NEG_INFINITY,
            _ => f64::NAN,
        };
    }
    if y == 1.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (-27.0f64, 27.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if erfc(mid) > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let slope = -std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp();
        if slope == 0.0 {
            break;
        }
        let step = (erfc(x) - y) / slope;
        if !step.is_finite() {
            break;
        }
        x -= step;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shannon_examples() {
        assert_eq!(shannon_rate_per_rb(0.0, 180e3), 0.0);
        assert!((shannon_rate_per_rb(1.0f64, 180e3) - 180_000.0).abs() < 1e-9);
        assert!((shannon_rate_per_rb(3.0f64, 1.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn erfc_reference_values() {
        // reference values from tables of erfc
        let cases = [
            (0.0, 1.0),
            (0.5, 0.479_500_122_186_953_5),
            (1.0, 0.157_299_207_050_285_13),
            (2.0, 0.004_677_734_981_047_266),
            (3.0, 2.209_049_699_858_544e-5),
            (-1.0, 1.842_700_792_949_715),
        ];
        for (x, want) in cases {
            let got = erfc(x);
            assert!(
                (got - want).abs() <= 1e-14 * want.max(1e-300) + 1e-16,
                "erfc({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn erfcinv_round_trips() {
        for &y in &[1e-12, 1e-6, 0.002, 0.02, 0.5, 1.0, 1.3, 1.98] {
            let x = erfcinv(y);
            assert!((erfc(x) - y).abs() <= 1e-12 * y.max(1e-3), "y={y} x={x}");
        }
        // erfcinv(0.02) = 1.644976357...
        assert!((erfcinv(0.02) - 1.644_976_357_133_187_8).abs() < 1e-10);
    }

    #[test]
    fn half_error_probability_is_shannon() {
        for s in [0.0, 0.1, 1.0, 37.0] {
            let a: f64 = finite_block_rate(s, 400.0, 0.5, 180e3).unwrap();
            assert_eq!(a, shannon_rate_per_rb(s, 180e3));
        }
    }

    #[test]
    fn dispersion_penalty() {
        let sh = shannon_rate_per_rb(10.0f64, 180e3);
        let fb = finite_block_rate(10.0, 400.0, 0.01, 180e3).unwrap();
        assert!(fb < sh);
        let long = finite_block_rate(10.0, 1e12, 0.01, 180e3).unwrap();
        assert!((long - sh).abs() / sh < 1e-4);
        assert_eq!(finite_block_rate(0.0, 400.0, 0.01, 180e3).unwrap(), 0.0);
    }

    #[test]
    fn bad_error_probability() {
        assert!(finite_block_rate(1.0, 400.0, 0.0, 1.0).is_err());
        assert!(finite_block_rate(1.0, 400.0, 0.6, 1.0).is_err());
    }
}
