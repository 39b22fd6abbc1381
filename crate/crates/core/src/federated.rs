//! Centralized, synchronous-federated and asynchronous-federated GPD estimation at the RSU,
//! and the payload/delay accounting of every exchange.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gpd::{
    mean_gradient, nll_gradient, project_interior, svrg_update, GpdParams, GradientPair, StepSize,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LearningProtocol {
    Cen,
    Sync,
    Async,
}

/// What a VUE shares with the RSU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalModel<T> {
    pub gradient: GradientPair<T>,
    pub theta: GpdParams<T>,
    pub sample_count: usize,
    pub max_sample: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalModel<T> {
    pub theta: GpdParams<T>,
    pub gradient: GradientPair<T>,
    pub total_samples: usize,
    pub global_max_sample: T,
}

impl<T: Scalar> GlobalModel<T> {
    pub fn initial(theta: GpdParams<T>, gradient: GradientPair<T>) -> Self {
        Self {
            theta,
            gradient,
            total_samples: 0,
            global_max_sample: T::zero(),
        }
    }
}

/// Payload sizes in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommCostParams {
    pub s_gradient: u64,
    pub s_params: u64,
    pub s_queue_sample: u64,
}

impl Default for CommCostParams {
    fn default() -> Self {
        Self {
            s_gradient: 16,
            s_params: 16,
            s_queue_sample: 8,
        }
    }
}

impl CommCostParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("size_gradient_bits", self.s_gradient),
            ("size_params_bits", self.s_params),
            ("size_sample_bits", self.s_queue_sample),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "payload size must be positive"));
            }
        }
        Ok(())
    }

    /// Local or global model payload.
    pub fn model_bits(&self) -> u64 {
        self.s_gradient + self.s_params + self.s_queue_sample
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

/// A payload that has to cross the VUE-RSU link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transfer {
    pub vue: usize,
    pub direction: Direction,
    pub payload_bits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeEvent {
    pub slot: u64,
    pub vue: usize,
    pub direction: Direction,
    pub payload_bits: u64,
    /// bits/s
    pub rate: f64,
    /// s
    pub duration: f64,
    pub slots_blocked: u64,
}

impl ExchangeEvent {
    pub fn new(slot: u64, transfer: Transfer, rate: f64, slot_len: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::domain("exchange rate", rate, "> 0 and finite"));
        }
        let duration = transfer.payload_bits as f64 / rate;
        let slots_blocked = (duration / slot_len).ceil() as u64;
        Ok(Self {
            slot,
            vue: transfer.vue,
            direction: transfer.direction,
            payload_bits: transfer.payload_bits,
            rate,
            duration,
            slots_blocked,
        })
    }
}

pub fn total_bits_exchanged(events: &[ExchangeEvent]) -> u64 {
    events.iter().map(|e| e.payload_bits).sum()
}

/// One sweep of variance-reduced steps over `samples` in the order `order`, anchored at the
/// global model. Returns the final iterate and the sum of per-sample gradients seen.
fn svrg_sweep<T: Scalar>(
    start: GpdParams<T>,
    global: &GlobalModel<T>,
    samples: &[T],
    order: &[usize],
    step: &StepSize<T>,
    max_sample: T,
) -> Result<(GpdParams<T>, GradientPair<T>)> {
    // before the first aggregation the RSU holds no data gradient: anchor on the local one
    // newer samples may lie beyond the support of the global model
    let anchor = project_interior(global.theta, max_sample);
    let g = if global.total_samples == 0 {
        mean_gradient(samples, &anchor)?
    } else {
        global.gradient
    };
    let mut theta = start;
    let mut acc = GradientPair::default();
    for &i in order {
        let x = samples[i];
        acc = acc + nll_gradient(x, &theta)?;
        theta = svrg_update(&theta, &anchor, x, &g, step, max_sample)?;
        theta = trust_region(theta, anchor.sigma, max_sample);
    }
    Ok((theta, acc))
}

/// Per-sample step of one round: `base / n`, with the scale component further multiplied by
/// the squared anchor scale so that rescaling the data rescales the trajectory.
fn round_step<T: Scalar>(base: &StepSize<T>, n: usize, anchor_sigma: T) -> StepSize<T> {
    let inv = T::one() / T::from_count(n);
    StepSize::new(
        base.sigma * anchor_sigma * anchor_sigma * inv,
        base.xi * inv,
    )
}

/// Keeps the scale within a factor of two of the round's anchor.
fn trust_region<T: Scalar>(theta: GpdParams<T>, anchor_sigma: T, max_sample: T) -> GpdParams<T> {
    let two = T::lit(2.0);
    let sigma = theta.sigma.max(anchor_sigma / two).min(anchor_sigma * two);
    if sigma == theta.sigma {
        return theta;
    }
    project_interior(GpdParams::new(sigma, theta.xi), max_sample)
}

fn max_of<T: Scalar>(samples: &[T]) -> T {
    samples.iter().fold(T::zero(), |a, &x| a.max(x))
}

/// Local SVRGD pass of one VUE over its whole sample set.
///
/// Starts from the global estimate with step `base_step / M`, and runs `iterations` sweeps,
/// each over a fresh random permutation with the gradient accumulator reset.
pub fn local_pass<T: Scalar, R: rand::Rng + ?Sized>(
    samples: &[T],
    global: &GlobalModel<T>,
    base_step: &StepSize<T>,
    iterations: usize,
    rng: &mut R,
) -> Result<LocalModel<T>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let m = samples.len();
    let step = round_step(base_step, m, global.theta.sigma);
    let max_sample = max_of(samples);
    let mut theta = project_interior(global.theta, max_sample);
    let mut gradient = GradientPair::default();
    let mut order: Vec<usize> = (0..m).collect();
    for _ in 0..iterations.max(1) {
        order.shuffle(rng);
        let (t, g) = svrg_sweep(theta, global, samples, &order, &step, max_sample)?;
        theta = t;
        gradient = g;
    }
    Ok(LocalModel {
        gradient,
        theta,
        sample_count: m,
        max_sample,
    })
}

/// Sample-count weighted model averaging.
pub fn global_average<T: Scalar>(
    global: &GlobalModel<T>,
    locals: &[&LocalModel<T>],
) -> Result<GlobalModel<T>> {
    let total: usize = locals.iter().map(|l| l.sample_count).sum();
    if total == 0 {
        return Err(Error::ZeroSamples);
    }
    let n = T::from_count(total);
    let prev = global.theta;
    let mut ds = T::zero();
    let mut dx = T::zero();
    let mut g = GradientPair::default();
    let mut max_sample = global.global_max_sample;
    for l in locals {
        let w = T::from_count(l.sample_count) / n;
        ds = ds + w * (l.theta.sigma - prev.sigma);
        dx = dx + w * (l.theta.xi - prev.xi);
        g = g + l.gradient;
        max_sample = max_sample.max(l.max_sample);
    }
    let theta = project_interior(GpdParams::new(prev.sigma + ds, prev.xi + dx), max_sample);
    Ok(GlobalModel {
        theta,
        gradient: g.scale(T::one() / n),
        total_samples: total,
        global_max_sample: max_sample,
    })
}

/// Learning hyper-parameters shared by all protocols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningParams<T> {
    pub step: StepSize<T>,
    pub iterations: usize,
    pub theta0: GpdParams<T>,
    pub gradient0: GradientPair<T>,
    pub sizes: CommCostParams,
}

/// Estimation state held at the roadside unit.
#[derive(Debug, Clone)]
pub struct Rsu<T> {
    protocol: LearningProtocol,
    params: LearningParams<T>,
    global: GlobalModel<T>,
    latest: Vec<Option<LocalModel<T>>>,
    uploaded: Vec<usize>,
    fired: Vec<usize>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Rsu<T> {
    pub fn new(
        protocol: LearningProtocol,
        n_vues: usize,
        params: LearningParams<T>,
        seed: u64,
    ) -> Result<Self> {
        params.sizes.validate()?;
        if params.iterations == 0 {
            return Err(Error::invalid("svrgd_iterations", "must be at least 1"));
        }
        Ok(Self {
            protocol,
            params,
            global: GlobalModel::initial(params.theta0, params.gradient0),
            latest: vec![None; n_vues],
            uploaded: vec![0; n_vues],
            fired: vec![0; n_vues],
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn protocol(&self) -> LearningProtocol {
        self.protocol
    }

    pub fn global(&self) -> &GlobalModel<T> {
        &self.global
    }

    pub fn latest(&self, vue: usize) -> Option<&LocalModel<T>> {
        self.latest.get(vue).and_then(|m| m.as_ref())
    }

    /// Centralized round: every VUE uploads its new samples, the RSU sweeps the pooled set
    /// and every VUE downloads the parameters.
    pub fn cen_round(&mut self, samples: &[&[T]]) -> Result<Vec<Transfer>> {
        self.check_len(samples.len())?;
        let sizes = self.params.sizes;
        let mut transfers = Vec::with_capacity(2 * samples.len());
        for (v, s) in samples.iter().enumerate() {
            let new = s.len().saturating_sub(self.uploaded[v]);
            self.uploaded[v] = s.len();
            transfers.push(Transfer {
                vue: v,
                direction: Direction::Up,
                payload_bits: sizes.s_queue_sample * new as u64,
            });
        }
        let pooled: Vec<T> = samples.iter().flat_map(|s| s.iter().copied()).collect();
        if !pooled.is_empty() {
            let n = pooled.len();
            let step = round_step(&self.params.step, n, self.global.theta.sigma);
            let max_sample = max_of(&pooled).max(self.global.global_max_sample);
            let mut theta = project_interior(self.global.theta, max_sample);
            let mut gsum = GradientPair::default();
            let mut order: Vec<usize> = (0..n).collect();
            for _ in 0..self.params.iterations {
                order.shuffle(&mut self.rng);
                let (t, g) = svrg_sweep(theta, &self.global, &pooled, &order, &step, max_sample)?;
                theta = t;
                gsum = g;
            }
            let theta = project_interior(theta, max_sample);
            self.global = GlobalModel {
                theta,
                gradient: gsum.scale(T::one() / T::from_count(n)),
                total_samples: n,
                global_max_sample: max_sample,
            };
        }
        for v in 0..samples.len() {
            transfers.push(Transfer {
                vue: v,
                direction: Direction::Down,
                payload_bits: sizes.s_params,
            });
        }
        Ok(transfers)
    }

    /// Synchronous round: every VUE runs a local pass and uploads its model, the RSU averages
    /// once and every VUE downloads the global model.
    pub fn sync_round(&mut self, samples: &[&[T]]) -> Result<Vec<Transfer>> {
        self.check_len(samples.len())?;
        let bits = self.params.sizes.model_bits();
        let mut locals = Vec::new();
        for s in samples {
            if s.is_empty() {
                continue;
            }
            locals.push(local_pass(
                s,
                &self.global,
                &self.params.step,
                self.params.iterations,
                &mut self.rng,
            )?);
        }
        if !locals.is_empty() {
            let refs: Vec<&LocalModel<T>> = locals.iter().collect();
            self.global = global_average(&self.global, &refs)?;
        }
        let mut transfers: Vec<Transfer> = (0..samples.len())
            .map(|v| Transfer {
                vue: v,
                direction: Direction::Up,
                payload_bits: bits,
            })
            .collect();
        transfers.extend((0..samples.len()).map(|v| Transfer {
            vue: v,
            direction: Direction::Down,
            payload_bits: bits,
        }));
        Ok(transfers)
    }

    /// Whether `vue` has collected another `m0` samples since it last fired.
    pub fn async_due(&self, vue: usize, sample_count: usize, m0: usize) -> bool {
        m0 > 0 && sample_count >= (self.fired[vue] + 1) * m0
    }

    /// Asynchronous update by one VUE: local pass, upload, merge with the latest models of
    /// all VUEs, download to this VUE only.
    pub fn async_fire(&mut self, vue: usize, samples: &[T]) -> Result<Vec<Transfer>> {
        if vue >= self.latest.len() {
            return Err(Error::invalid("vue", format!("index {vue} out of range")));
        }
        let local = local_pass(
            samples,
            &self.global,
            &self.params.step,
            self.params.iterations,
            &mut self.rng,
        )?;
        self.latest[vue] = Some(local);
        self.fired[vue] += 1;
        let refs: Vec<&LocalModel<T>> = self.latest.iter().flatten().collect();
        self.global = global_average(&self.global, &refs)?;
        let bits = self.params.sizes.model_bits();
        Ok(vec![
            Transfer {
                vue,
                direction: Direction::Up,
                payload_bits: bits,
            },
            Transfer {
                vue,
                direction: Direction::Down,
                payload_bits: bits,
            },
        ])
    }

    pub fn fire_count(&self, vue: usize) -> usize {
        self.fired[vue]
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.latest.len() {
            return Err(Error::invalid(
                "samples",
                format!("expected {} VUEs, got {n}", self.latest.len()),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> LearningParams<f64> {
        LearningParams {
            step: StepSize::new(0.05, 0.05),
            iterations: 2,
            theta0: GpdParams::new(1.0, 0.0),
            gradient0: GradientPair::new(0.0, 0.0),
            sizes: CommCostParams::default(),
        }
    }

    fn lm(s: f64, x: f64, m: usize) -> LocalModel<f64> {
        LocalModel {
            gradient: GradientPair::new(0.0, 0.0),
            theta: GpdParams::new(s, x),
            sample_count: m,
            max_sample: 1.0,
        }
    }

    #[test]
    fn average_examples() {
        let g = GlobalModel::initial(GpdParams::new(1.0, 0.0), GradientPair::default());
        let a = lm(1.0, 0.0, 1);
        let b = lm(3.0, 0.2, 3);
        let out = global_average(&g, &[&a, &b]).unwrap();
        assert!((out.theta.sigma - 2.5).abs() < 1e-15 && (out.theta.xi - 0.15).abs() < 1e-15);
        assert_eq!(out.total_samples, 4);

        let single = global_average(&g, &[&b]).unwrap();
        assert!((single.theta.sigma - 3.0).abs() < 1e-15 && (single.theta.xi - 0.2).abs() < 1e-15);
        assert!(matches!(
            global_average(&g, &[&lm(2.0, 0.0, 0)]),
            Err(Error::ZeroSamples)
        ));
    }

    #[test]
    fn single_sample_pass_cancels() {
        let g = GlobalModel {
            total_samples: 5,
            ..GlobalModel::initial(GpdParams::new(1.0, 0.1), GradientPair::new(0.4, -0.2))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = local_pass(&[0.8f64], &g, &StepSize::new(0.1, 0.1), 1, &mut rng).unwrap();
        assert!((l.theta.sigma - 0.96).abs() < 1e-15 && (l.theta.xi - 0.12).abs() < 1e-15);
        assert_eq!(l.gradient, nll_gradient(0.8, &g.theta).unwrap());
    }

    #[test]
    fn first_round_anchors_on_local_gradient() {
        let g = GlobalModel::initial(GpdParams::new(1.0, 0.0), GradientPair::new(1.0, 1000.0));
        let x = 0.8f64;
        let l = local_pass(
            &[x],
            &g,
            &StepSize::new(0.1, 0.1),
            1,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let d = nll_gradient(x, &g.theta).unwrap();
        assert!((l.theta.sigma - (1.0 - 0.1 * d.d_sigma)).abs() < 1e-15);
        assert!((l.theta.xi - (-0.1 * d.d_xi)).abs() < 1e-15);
    }

    #[test]
    fn anchor_projected_onto_new_support() {
        let g = GlobalModel {
            total_samples: 3,
            global_max_sample: 1.5,
            ..GlobalModel::initial(GpdParams::new(1.0, -0.5), GradientPair::new(0.1, 0.1))
        };
        let l = local_pass(
            &[0.5, 3.0],
            &g,
            &StepSize::new(0.1, 0.1),
            2,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert!(l.theta.is_feasible(3.0));
    }

    #[test]
    fn scale_moves_at_most_twofold_per_round() {
        let g = GlobalModel::initial(GpdParams::new(1.0, 0.0), GradientPair::default());
        let xs = [80.0, 120.0, 95.0, 300.0];
        let l = local_pass(
            &xs,
            &g,
            &StepSize::new(50.0, 0.005),
            2,
            &mut ChaCha8Rng::seed_from_u64(2),
        )
        .unwrap();
        assert!(l.theta.sigma <= 2.0 + 1e-12 && l.theta.sigma >= 0.5);
    }

    #[test]
    fn step_scales_with_sample_count() {
        let g = GlobalModel::initial(GpdParams::new(1.0, 0.1), GradientPair::new(0.4, -0.2));
        let a = local_pass(
            &[0.5, 1.5],
            &g,
            &StepSize::new(0.1, 0.1),
            1,
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        let b = local_pass(
            &[0.5, 1.5],
            &g,
            &StepSize::new(0.1, 0.1),
            1,
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sync_payloads() {
        let mut rsu = Rsu::new(LearningProtocol::Sync, 3, params(), 1).unwrap();
        let s: Vec<Vec<f64>> = vec![vec![0.5, 1.2], vec![], vec![2.0]];
        let refs: Vec<&[f64]> = s.iter().map(|v| v.as_slice()).collect();
        let t = rsu.sync_round(&refs).unwrap();
        assert_eq!(t.iter().map(|t| t.payload_bits).sum::<u64>(), 3 * 2 * 40);
    }

    #[test]
    fn cen_charges_new_samples_only() {
        let mut rsu = Rsu::new(LearningProtocol::Cen, 2, params(), 1).unwrap();
        let mut s: Vec<Vec<f64>> = vec![vec![0.5; 10], vec![]];
        let refs: Vec<&[f64]> = s.iter().map(|v| v.as_slice()).collect();
        let t = rsu.cen_round(&refs).unwrap();
        assert_eq!(t[0].payload_bits, 80);
        assert_eq!(t[1].payload_bits, 0);
        s[0].push(1.0);
        let refs: Vec<&[f64]> = s.iter().map(|v| v.as_slice()).collect();
        let t = rsu.cen_round(&refs).unwrap();
        assert_eq!(t[0].payload_bits, 8);
        assert_eq!(
            t.iter().filter(|t| t.direction == Direction::Down).count(),
            2
        );
    }

    #[test]
    fn empty_cen_round_keeps_theta() {
        let mut rsu = Rsu::new(LearningProtocol::Cen, 2, params(), 1).unwrap();
        let before = *rsu.global();
        let t = rsu.cen_round(&[&[], &[]]).unwrap();
        assert_eq!(*rsu.global(), before);
        assert_eq!(total_bits_exchanged(&[]), 0);
        assert_eq!(t.iter().map(|t| t.payload_bits).sum::<u64>(), 32);
    }

    #[test]
    fn upload_duration_example() {
        let ev = ExchangeEvent::new(
            0,
            Transfer {
                vue: 0,
                direction: Direction::Up,
                payload_bits: 80,
            },
            8000.0,
            1e-3,
        )
        .unwrap();
        assert!((ev.duration - 0.01).abs() < 1e-15);
        assert_eq!(ev.slots_blocked, 10);
    }

    #[test]
    fn async_counting_rule() {
        let mut rsu = Rsu::new(LearningProtocol::Async, 2, params(), 1).unwrap();
        let mut fires = vec![];
        let mut samples = vec![];
        for block in 0..30 {
            if [3, 9, 14, 22].contains(&block) {
                samples.push(1.0);
            }
            if rsu.async_due(0, samples.len(), 4) {
                rsu.async_fire(0, &samples).unwrap();
                fires.push(block);
            }
        }
        assert_eq!(fires, vec![22]);
        assert_eq!(rsu.global().theta, rsu.latest(0).unwrap().theta);
    }
}
