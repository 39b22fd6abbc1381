//! Generalized Pareto distribution: density, moments, likelihood, gradient and SVRGD.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower bound on the scale parameter.
pub const SIGMA_MIN: f64 = 1e-6;
/// Upper bound on the shape parameter; keeps the second moment finite.
pub const XI_MAX: f64 = 0.49;
/// Relative inflation of the largest sample applied when projecting SVRGD iterates, so
/// iterates never sit exactly on the support boundary where the gradient blows up.
pub const SUPPORT_MARGIN: f64 = 1e-3;

// below this |xi * x / sigma| the shape derivative uses its power series
const SERIES_CUTOFF: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GpdParams<T> {
    pub sigma: T,
    pub xi: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradientPair<T> {
    pub d_sigma: T,
    pub d_xi: T,
}

/// Per-component step sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSize<T> {
    pub sigma: T,
    pub xi: T,
}

impl<T: Scalar> GpdParams<T> {
    pub fn new(sigma: T, xi: T) -> Self {
        Self { sigma, xi }
    }

    /// `1 + xi * x / sigma`
    #[inline]
    pub fn support_factor(&self, x: T) -> T {
        T::one() + self.xi * x / self.sigma
    }

    /// Whether every sample up to `max_sample` lies strictly inside the support.
    pub fn is_feasible(&self, max_sample: T) -> bool {
        self.sigma > T::zero() && self.xi < T::one() && self.support_factor(max_sample) > T::zero()
    }

    pub fn pdf(&self, x: T) -> Result<T> {
        self.check_point(x)?;
        Ok(self.log_pdf_unchecked(x).exp())
    }

    pub fn log_pdf(&self, x: T) -> Result<T> {
        self.check_point(x)?;
        Ok(self.log_pdf_unchecked(x))
    }

    /// `P(X > x)`
    pub fn survival(&self, x: T) -> T {
        if x <= T::zero() {
            return T::one();
        }
        let u = x / self.sigma;
        if self.xi == T::zero() {
            return (-u).exp();
        }
        let f = T::one() + self.xi * u;
        if f <= T::zero() {
            return T::zero();
        }
        (-(self.xi * u).ln_1p() / self.xi).exp()
    }

    /// Inverse CDF at probability `p` in `[0, 1)`.
    pub fn quantile(&self, p: T) -> T {
        let l = (-p).ln_1p();
        if self.xi == T::zero() {
            -self.sigma * l
        } else {
            self.sigma * (-self.xi * l).exp_m1() / self.xi
        }
    }

    /// `(E[X], E[X^2])`
    pub fn moments(&self) -> Result<(T, T)> {
        if !(self.xi < T::lit(0.5)) {
            return Err(Error::MomentDomain {
                xi: self.xi.as_f64(),
            });
        }
        let one = T::one();
        let two = T::lit(2.0);
        let mean = self.sigma / (one - self.xi);
        let second = two * self.sigma * self.sigma / ((one - self.xi) * (one - two * self.xi));
        Ok((mean, second))
    }

    /// Draws one value by inversion.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u: f64 = rng.random();
        self.quantile(T::lit(u))
    }

    fn check_point(&self, x: T) -> Result<()> {
        if x < T::zero() || !(self.sigma > T::zero()) || self.support_factor(x) < T::zero() {
            return Err(Error::OutsideSupport {
                x: x.as_f64(),
                sigma: self.sigma.as_f64(),
                xi: self.xi.as_f64(),
            });
        }
        Ok(())
    }

    fn log_pdf_unchecked(&self, x: T) -> T {
        -loss_unchecked(x, self)
    }
}

// -log pdf for one sample; the caller guarantees the support condition
#[inline]
fn loss_unchecked<T: Scalar>(x: T, th: &GpdParams<T>) -> T {
    let u = x / th.sigma;
    if th.xi == T::zero() {
        th.sigma.ln() + u
    } else {
        th.sigma.ln() + (T::one() + T::one() / th.xi) * (th.xi * u).ln_1p()
    }
}

/// Negative log density of one sample.
pub fn sample_loss<T: Scalar>(x: T, theta: &GpdParams<T>) -> Result<T> {
    if !(theta.sigma > T::zero()) || !(theta.support_factor(x) > T::zero()) {
        return Err(Error::Infeasible {
            sigma: theta.sigma.as_f64(),
            xi: theta.xi.as_f64(),
        });
    }
    Ok(loss_unchecked(x, theta))
}

/// Average negative log-likelihood of `samples`.
pub fn nll<T: Scalar>(samples: &[T], theta: &GpdParams<T>) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut acc = T::zero();
    for &x in samples {
        acc = acc + sample_loss(x, theta)?;
    }
    Ok(acc / T::from_count(samples.len()))
}

/// Gradient of the per-sample negative log density with respect to `(sigma, xi)`.
pub fn nll_gradient<T: Scalar>(x: T, theta: &GpdParams<T>) -> Result<GradientPair<T>> {
    let (s, xi) = (theta.sigma, theta.xi);
    let u = x / s;
    let f = T::one() + xi * u;
    if !(f > T::zero()) || !(s > T::zero()) {
        return Err(Error::SingularGradient { x: x.as_f64() });
    }
    let d_sigma = (T::one() - u) / (s * f);
    let z = xi * u;
    let d_xi = if z.abs() < T::lit(SERIES_CUTOFF) {
        shape_derivative_series(u, xi)
    } else {
        -z.ln_1p() / (xi * xi) + (T::one() + T::one() / xi) * u / f
    };
    Ok(GradientPair { d_sigma, d_xi })
}

// sum_{k>=1} k xi^(k-1) (-1)^k [u^(k+1)/(k+1) - u^k/k]
fn shape_derivative_series<T: Scalar>(u: T, xi: T) -> T {
    let mut sum = T::zero();
    let mut uk = u;
    let mut xik = T::one();
    let mut sign = -T::one();
    for k in 1..=14 {
        let kf = T::from_count(k);
        let lk = sign * (uk * u / (kf + T::one()) - uk / kf);
        let term = kf * xik * lk;
        sum = sum + term;
        if term.abs() <= T::epsilon() * T::lit(1e-2) * sum.abs() {
            break;
        }
        uk = uk * u;
        xik = xik * xi;
        sign = -sign;
    }
    sum
}

/// Mean gradient over `samples`.
pub fn mean_gradient<T: Scalar>(samples: &[T], theta: &GpdParams<T>) -> Result<GradientPair<T>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut g = GradientPair::default();
    for &x in samples {
        g = g + nll_gradient(x, theta)?;
    }
    Ok(g.scale(T::one() / T::from_count(samples.len())))
}

impl<T: Scalar> std::ops::Add for GradientPair<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            d_sigma: self.d_sigma + o.d_sigma,
            d_xi: self.d_xi + o.d_xi,
        }
    }
}

impl<T: Scalar> std::ops::Sub for GradientPair<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            d_sigma: self.d_sigma - o.d_sigma,
            d_xi: self.d_xi - o.d_xi,
        }
    }
}

impl<T: Scalar> GradientPair<T> {
    pub fn new(d_sigma: T, d_xi: T) -> Self {
        Self { d_sigma, d_xi }
    }

    pub fn scale(self, k: T) -> Self {
        Self {
            d_sigma: self.d_sigma * k,
            d_xi: self.d_xi * k,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_sigma.is_finite() && self.d_xi.is_finite()
    }
}

impl<T: Scalar> StepSize<T> {
    pub fn new(sigma: T, xi: T) -> Self {
        Self { sigma, xi }
    }

    pub fn scale(self, k: T) -> Self {
        Self {
            sigma: self.sigma * k,
            xi: self.xi * k,
        }
    }
}

/// Euclidean projection onto `{sigma >= SIGMA_MIN, xi <= XI_MAX, sigma + xi * max_sample >= 0}`.
///
/// The last constraint is dropped when `max_sample` is zero.
pub fn project_feasible<T: Scalar>(candidate: GpdParams<T>, max_sample: T) -> GpdParams<T> {
    let smin = T::lit(SIGMA_MIN);
    let xmax = T::lit(XI_MAX);
    let m = max_sample.max(T::zero());
    let has_support = m > T::zero();
    let tol = T::epsilon() * T::lit(64.0);
    let feasible = |p: &GpdParams<T>| {
        let scale = T::one().max(p.sigma.abs()).max((p.xi * m).abs());
        p.sigma >= smin - tol * scale
            && p.xi <= xmax + tol
            && (!has_support || p.sigma + p.xi * m >= -tol * scale)
    };
    if feasible(&candidate) {
        return candidate;
    }
    let c = candidate;
    let mut cands = vec![
        GpdParams::new(smin, c.xi),
        GpdParams::new(c.sigma, xmax),
        GpdParams::new(smin, xmax),
    ];
    if has_support {
        let k = (c.sigma + c.xi * m) / (T::one() + m * m);
        cands.push(GpdParams::new(c.sigma - k, c.xi - k * m));
        cands.push(GpdParams::new(smin, -smin / m));
    }
    let mut best: Option<(T, GpdParams<T>)> = None;
    for p in cands {
        if !feasible(&p) {
            continue;
        }
        let d = (p.sigma - c.sigma).powi(2) + (p.xi - c.xi).powi(2);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, p));
        }
    }
    let mut p = best.map(|b| b.1).unwrap_or(GpdParams::new(smin, T::zero()));
    p.sigma = p.sigma.max(smin);
    p.xi = p.xi.min(xmax);
    if has_support && p.sigma + p.xi * m < T::zero() {
        p.xi = -p.sigma / m;
    }
    p
}

/// Projection used inside the optimizers: the support constraint is tightened by
/// [`SUPPORT_MARGIN`] so the largest sample keeps a positive support factor.
pub fn project_interior<T: Scalar>(candidate: GpdParams<T>, max_sample: T) -> GpdParams<T> {
    project_feasible(candidate, max_sample * T::lit(1.0 + SUPPORT_MARGIN))
}

/// One variance-reduced step from `theta` with variance-correction anchor `anchor`:
/// `theta - step * (grad_theta(x) - grad_anchor(x) + g)`, projected back into the interior.
pub fn svrg_update<T: Scalar>(
    theta: &GpdParams<T>,
    anchor: &GpdParams<T>,
    x: T,
    g: &GradientPair<T>,
    step: &StepSize<T>,
    max_sample: T,
) -> Result<GpdParams<T>> {
    let d = if theta == anchor {
        *g
    } else {
        nll_gradient(x, theta)? - nll_gradient(x, anchor)? + *g
    };
    let y = GpdParams::new(
        theta.sigma - step.sigma * d.d_sigma,
        theta.xi - step.xi * d.d_xi,
    );
    Ok(project_interior(y, max_sample))
}

/// SVRGD iterate with the running average of its past iterates as anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrgdState<T> {
    pub theta: GpdParams<T>,
    /// Mean of all iterates before the current one; equals `theta` before the first step.
    pub theta_avg: GpdParams<T>,
    pub avg_gradient: GradientPair<T>,
    pub iteration: u64,
    pub step_size: StepSize<T>,
}

impl<T: Scalar> SvrgdState<T> {
    pub fn new(
        theta: GpdParams<T>,
        gradient: GradientPair<T>,
        step_size: StepSize<T>,
    ) -> Result<Self> {
        if !(step_size.sigma >= T::zero() && step_size.xi >= T::zero()) {
            return Err(Error::domain(
                "step",
                step_size.sigma.min(step_size.xi).as_f64(),
                ">= 0",
            ));
        }
        Ok(Self {
            theta,
            theta_avg: theta,
            avg_gradient: gradient,
            iteration: 0,
            step_size,
        })
    }
}

/// Advances `state` by one sample, using `anchor_gradient` as the full-gradient estimate.
pub fn svrgd_step<T: Scalar>(
    state: &SvrgdState<T>,
    sample: T,
    anchor_gradient: GradientPair<T>,
    max_sample: T,
) -> Result<SvrgdState<T>> {
    let theta = svrg_update(
        &state.theta,
        &state.theta_avg,
        sample,
        &anchor_gradient,
        &state.step_size,
        max_sample,
    )?;
    let n = T::lit((state.iteration + 1) as f64);
    let prev_n = T::lit(state.iteration as f64);
    let theta_avg = if state.iteration == 0 {
        state.theta
    } else {
        GpdParams::new(
            (state.theta_avg.sigma * prev_n + state.theta.sigma) / n,
            (state.theta_avg.xi * prev_n + state.theta.xi) / n,
        )
    };
    Ok(SvrgdState {
        theta,
        theta_avg,
        avg_gradient: anchor_gradient,
        iteration: state.iteration + 1,
        step_size: state.step_size,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions<T> {
    /// Starting point in data units; `None` starts from the method-of-moments estimate.
    pub initial: Option<GpdParams<T>>,
    /// Step sizes for data rescaled to unit mean.
    pub step: StepSize<T>,
    pub max_epochs: usize,
    /// Stop once an epoch changes the nll by less than this.
    pub tol: T,
    pub seed: u64,
}

impl<T: Scalar> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            initial: None,
            step: StepSize::new(T::lit(0.002), T::lit(0.002)),
            max_epochs: 200,
            tol: T::lit(1e-10),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult<T> {
    pub theta: GpdParams<T>,
    pub nll: T,
    pub epochs: usize,
}

/// Method-of-moments estimate for unit-mean data, with the shape clamped to `[-0.4, 0.4]`.
fn moment_start<T: Scalar>(data: &[T]) -> GpdParams<T> {
    let n = T::from_count(data.len());
    let var = data
        .iter()
        .fold(T::zero(), |a, &x| a + (x - T::one()) * (x - T::one()))
        / n;
    if !(var > T::zero()) {
        return GpdParams::new(T::one(), T::zero());
    }
    let half = T::lit(0.5);
    let xi = (half * (T::one() - T::one() / var))
        .max(T::lit(-0.4))
        .min(T::lit(0.4));
    GpdParams::new(T::one() - xi, xi)
}

/// Maximum-likelihood fit by epoch-wise SVRG.
///
/// Samples are rescaled to unit mean, each epoch anchors at the current iterate with the
/// exact full gradient, then takes one projected step per sample in a random order. An epoch
/// that raises the nll is rolled back and the step halved.
pub fn fit_gpd<T: Scalar>(samples: &[T], opts: &FitOptions<T>) -> Result<FitResult<T>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if let Some(&bad) = samples
        .iter()
        .find(|&&x| !(x > T::zero()) || !x.is_finite())
    {
        return Err(Error::Data(format!(
            "excess samples must be positive and finite, got {bad}"
        )));
    }
    let n = T::from_count(samples.len());
    let scale = samples.iter().fold(T::zero(), |a, &x| a + x) / n;
    let data: Vec<T> = samples.iter().map(|&x| x / scale).collect();
    let max = data.iter().fold(T::zero(), |a, &x| a.max(x));

    let start = match opts.initial {
        Some(p) => GpdParams::new(p.sigma / scale, p.xi),
        None => moment_start(&data),
    };
    let mut theta = project_interior(start, max);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut last = nll(&data, &theta)?;
    let mut step = opts.step;
    let mut epochs = 0;
    for _ in 0..opts.max_epochs {
        epochs += 1;
        let anchor = theta;
        let g = mean_gradient(&data, &anchor)?;
        order.shuffle(&mut rng);
        for &i in &order {
            theta = svrg_update(&theta, &anchor, data[i], &g, &step, max)?;
        }
        let cur = nll(&data, &theta)?;
        if !(cur <= last) {
            theta = anchor;
            step = step.scale(T::lit(0.5));
            continue;
        }
        let done = last - cur < opts.tol;
        last = cur;
        if done {
            break;
        }
    }
    let theta = GpdParams::new(theta.sigma * scale, theta.xi);
    // rescaling shifts the average nll by ln(scale)
    Ok(FitResult {
        theta,
        nll: last + scale.ln(),
        epochs,
    })
}
