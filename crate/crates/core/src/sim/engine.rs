//! The per-slot loop: mobility, fading, power control, service, queues, sampling, learning.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::interference::InterferenceEstimate;
use super::metrics::{mean_std, Accumulator, Metrics};
use super::zones::{build_zone_map, ZoneMap};
use crate::channel::{
    classify_link, classify_to_intersection, path_loss, path_loss_offsets, shannon_rate_per_rb,
    ChannelParams, FadingSampler, FiniteBlockRate, Grid, VuePair,
};
use crate::config::{Protocol, ScenarioConfig};
use crate::error::{Error, Result};
use crate::federated::{
    CommCostParams, ExchangeEvent, LearningParams, LearningProtocol, Rsu, Transfer,
};
use crate::gpd::{GpdParams, GradientPair, StepSize};
use crate::lyapunov::{compute_weight, water_fill, WeightRule};
use crate::queues::{step_queue, step_virtual_queues, ExcessSampler, QueueState, TrafficSource};

const STREAM_PLACEMENT: u64 = 0;
const STREAM_CHANNEL: u64 = 1;
const STREAM_ARRIVALS: u64 = 2;
const STREAM_LEARNING: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// What happened to every pair in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: u64,
    pub arrivals: Vec<u64>,
    /// Offered service, bits.
    pub served: Vec<u64>,
    /// Total transmit power, W.
    pub power: Vec<f64>,
    /// Queue after the update, bits.
    pub queue: Vec<u64>,
    pub blocked: Vec<bool>,
    pub events: Vec<ExchangeEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeseriesRow {
    pub slot: u64,
    pub avg_queue_bits: f64,
    pub max_queue_bits: u64,
    pub avg_power_w: f64,
    pub blocked_pairs: usize,
    pub sigma: f64,
    pub xi: f64,
}

#[derive(Clone, Copy)]
enum RateLaw {
    Shannon,
    FiniteBlock(FiniteBlockRate<f64>),
}

/// Co-channel group of one slot: the pairs sharing a zone color.
#[derive(Default)]
struct Group {
    members: Vec<usize>,
    rbs: Vec<usize>,
    /// `gain[(rx * n + tx) * n_rbs + f]`, indices into `members`.
    gain: Vec<f64>,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    grid: Grid<f64>,
    channel: ChannelParams<f64>,
    fading: FadingSampler,
    zones: ZoneMap,
    pairs: Vec<VuePair<f64>>,
    traffic: TrafficSource,
    queues: Vec<QueueState<f64>>,
    samplers: Vec<ExcessSampler>,
    learn_samples: Vec<Vec<f64>>,
    theta_known: Vec<GpdParams<f64>>,
    rsu: Option<Rsu<f64>>,
    rsu_at: (usize, usize),
    rule: Option<WeightRule>,
    rate_law: RateLaw,
    noise: f64,
    est: InterferenceEstimate,
    blocked_until: Vec<u64>,
    chan_rng: ChaCha8Rng,
    arr_rng: ChaCha8Rng,
    slot: u64,
    acc: Accumulator,
    events: Vec<ExchangeEvent>,
    timeseries: Option<Vec<TimeseriesRow>>,
    groups: Vec<Group>,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = Grid::new(
            cfg.grid_side_m,
            cfg.grid_roads,
            cfg.lane_width_m,
            cfg.lanes_per_direction,
        )?;
        let channel = ChannelParams::from_db(
            cfg.alpha0_db,
            cfg.alpha0_prime_db,
            cfg.pathloss_exponent,
            cfg.d0_m,
            cfg.nakagami_m,
            cfg.rb_bandwidth_hz,
            cfg.noise_psd_dbm_hz,
        )?;
        let fading = FadingSampler::new(cfg.nakagami_m)?;
        let zones = build_zone_map(&grid, cfg.n_rbs)?;

        let mut place_rng = stream(cfg.seed, STREAM_PLACEMENT);
        let mut lanes = grid.lanes();
        {
            use rand::seq::SliceRandom;
            lanes.shuffle(&mut place_rng);
        }
        let speed = cfg.speed_kmh / 3.6;
        let mut pairs = Vec::with_capacity(cfg.n_pairs);
        for id in 0..cfg.n_pairs {
            let lane = lanes[id % lanes.len()];
            let along = rand::Rng::random::<f64>(&mut place_rng) * cfg.grid_side_m;
            pairs.push(VuePair::new(&grid, id, lane, along, speed, cfg.pair_gap_m)?);
        }

        let traffic = TrafficSource::new(cfg.arrival_rate_bps, cfg.slot_s)?;
        let samplers = (0..cfg.n_pairs)
            .map(|_| ExcessSampler::new(cfg.block_slots, cfg.q0_bits))
            .collect::<Result<Vec<_>>>()?;
        let theta0 = GpdParams::new(cfg.theta0.0, cfg.theta0.1);
        let learning = match cfg.protocol {
            Protocol::Cen => Some(LearningProtocol::Cen),
            Protocol::Sync => Some(LearningProtocol::Sync),
            Protocol::Async => Some(LearningProtocol::Async),
            _ => None,
        };
        let rsu = match learning {
            Some(p) => Some(Rsu::new(
                p,
                cfg.n_pairs,
                LearningParams {
                    step: StepSize::new(cfg.step.0, cfg.step.1),
                    iterations: cfg.svrgd_iterations,
                    theta0,
                    gradient0: GradientPair::new(cfg.grad0.0, cfg.grad0.1),
                    sizes: CommCostParams {
                        s_gradient: cfg.size_gradient_bits,
                        s_params: cfg.size_params_bits,
                        s_queue_sample: cfg.size_sample_bits,
                    },
                },
                rand::RngCore::next_u64(&mut stream(cfg.seed, STREAM_LEARNING)),
            )?),
            None => None,
        };
        let rule = match cfg.protocol {
            Protocol::Cen | Protocol::Sync | Protocol::Async => Some(WeightRule::Full),
            Protocol::Qso => Some(WeightRule::QueueStability),
            Protocol::Qsr => Some(WeightRule::QueueReliability),
            Protocol::Fp => None,
        };
        let rate_law = if cfg.finite_block {
            let block_len = cfg
                .block_len()
                .ok_or_else(|| Error::invalid("fb_block_len", "unknown block length"))?;
            RateLaw::FiniteBlock(FiniteBlockRate::new(block_len, cfg.fb_error_prob)?)
        } else {
            RateLaw::Shannon
        };
        let noise = channel.noise_power_per_rb();
        Ok(Self {
            grid,
            channel,
            fading,
            est: InterferenceEstimate::new(cfg.n_pairs, cfg.n_rbs, cfg.interference_ema),
            zones,
            pairs,
            traffic,
            queues: vec![QueueState::default(); cfg.n_pairs],
            samplers,
            learn_samples: vec![Vec::new(); cfg.n_pairs],
            theta_known: vec![theta0; cfg.n_pairs],
            rsu,
            rsu_at: (cfg.rsu_road_x, cfg.rsu_road_y),
            rule,
            rate_law,
            noise,
            blocked_until: vec![0; cfg.n_pairs],
            chan_rng: stream(cfg.seed, STREAM_CHANNEL),
            arr_rng: stream(cfg.seed, STREAM_ARRIVALS),
            slot: 0,
            acc: Accumulator::default(),
            events: Vec::new(),
            timeseries: cfg.timeseries.then(Vec::new),
            groups: Vec::new(),
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn pairs(&self) -> &[VuePair<f64>] {
        &self.pairs
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.grid
    }

    pub fn zones(&self) -> &ZoneMap {
        &self.zones
    }

    pub fn queues(&self) -> &[QueueState<f64>] {
        &self.queues
    }

    /// First slot in which each pair may transmit again.
    pub fn blocked_until(&self) -> &[u64] {
        &self.blocked_until
    }

    pub fn events(&self) -> &[ExchangeEvent] {
        &self.events
    }

    pub fn samplers(&self) -> &[ExcessSampler] {
        &self.samplers
    }

    pub fn rsu(&self) -> Option<&Rsu<f64>> {
        self.rsu.as_ref()
    }

    pub fn timeseries(&self) -> Option<&[TimeseriesRow]> {
        self.timeseries.as_deref()
    }

    /// Estimate the pair's controller currently uses, with the scale in bits.
    pub fn theta_bits(&self, pair: usize) -> GpdParams<f64> {
        let t = self.theta_known[pair];
        GpdParams::new(t.sigma * self.cfg.learning_unit_bits, t.xi)
    }

    fn rate_per_rb(&self, sinr: f64) -> f64 {
        let w = self.channel.bandwidth_per_rb;
        match self.rate_law {
            RateLaw::Shannon => shannon_rate_per_rb(sinr, w),
            RateLaw::FiniteBlock(law) => law.rate(sinr, w),
        }
    }

    /// Redraws the co-channel groups and their per-RB gains.
    fn draw_channels(&mut self) -> Result<()> {
        let n_colors = self.zones.n_colors();
        self.groups.resize_with(n_colors, Group::default);
        for g in &mut self.groups {
            g.members.clear();
        }
        for (v, p) in self.pairs.iter().enumerate() {
            let zone = self.zones.zone_of(&self.grid, &p.tx);
            self.groups[self.zones.color(zone)].members.push(v);
        }
        for (c, g) in self.groups.iter_mut().enumerate() {
            g.rbs.clear();
            g.rbs.extend_from_slice(self.zones.color_rbs(c));
            let n = g.members.len();
            let r = g.rbs.len();
            g.gain.resize(n * n * r, 0.0);
            for (ri, &rx) in g.members.iter().enumerate() {
                for (ti, &tx) in g.members.iter().enumerate() {
                    let (a, b) = (&self.pairs[tx].tx, &self.pairs[rx].rx);
                    let class = classify_link(&self.grid, a, b, self.channel.d0);
                    let pl = path_loss(&self.grid, a, b, class, &self.channel)?;
                    let base = (ri * n + ti) * r;
                    for f in 0..r {
                        g.gain[base + f] = pl * self.fading.draw(class, &mut self.chan_rng);
                    }
                }
            }
        }
        Ok(())
    }

    /// Single-user VUE-RSU rate over the pair's RBs, bits/s.
    fn rsu_link_rate(&self, pair: usize, power: f64) -> Result<f64> {
        let tx = &self.pairs[pair].tx;
        let (rx, ry) = self.grid.intersection(self.rsu_at.0, self.rsu_at.1);
        let class = classify_to_intersection(
            &self.grid,
            tx,
            self.rsu_at.0,
            self.rsu_at.1,
            self.channel.d0,
        );
        let pl = path_loss_offsets(
            self.grid.delta(tx.x, rx),
            self.grid.delta(tx.y, ry),
            class,
            &self.channel,
        )?;
        let zone = self.zones.zone_of(&self.grid, tx);
        let n = self.zones.zone_rbs(zone).len() as f64;
        let snr = power / n * pl / self.noise;
        Ok(n * shannon_rate_per_rb(snr, self.channel.bandwidth_per_rb))
    }

    fn to_events(&mut self, transfers: &[Transfer]) -> Result<Vec<ExchangeEvent>> {
        let t = self.slot;
        // equal time sharing among the VUEs of one co-channel group exchanging in this slot
        let mut per_color = vec![0usize; self.zones.n_colors()];
        let mut seen = vec![false; self.pairs.len()];
        for tr in transfers.iter().filter(|t| t.payload_bits > 0) {
            if !seen[tr.vue] {
                seen[tr.vue] = true;
                let zone = self.zones.zone_of(&self.grid, &self.pairs[tr.vue].tx);
                per_color[self.zones.color(zone)] += 1;
            }
        }
        let mut out = Vec::with_capacity(transfers.len());
        for &tr in transfers.iter().filter(|t| t.payload_bits > 0) {
            let zone = self.zones.zone_of(&self.grid, &self.pairs[tr.vue].tx);
            let share = per_color[self.zones.color(zone)].max(1) as f64;
            let power = match tr.direction {
                crate::federated::Direction::Up => self.cfg.p_max_w,
                crate::federated::Direction::Down => self.cfg.rsu_power_w,
            };
            let rate = self.rsu_link_rate(tr.vue, power)? / share;
            let ev = ExchangeEvent::new(t, tr, rate, self.cfg.slot_s)?;
            let b = &mut self.blocked_until[tr.vue];
            *b = (*b).max(t + 1) + ev.slots_blocked;
            out.push(ev);
        }
        Ok(out)
    }

    fn learning_step(&mut self, new_sample: &[bool]) -> Result<Vec<ExchangeEvent>> {
        let Some(rsu) = self.rsu.as_mut() else {
            return Ok(Vec::new());
        };
        let t = self.slot;
        let mut transfers = Vec::new();
        match rsu.protocol() {
            LearningProtocol::Cen | LearningProtocol::Sync => {
                if (t + 1) % self.cfg.sync_period_slots == 0 {
                    let refs: Vec<&[f64]> =
                        self.learn_samples.iter().map(|s| s.as_slice()).collect();
                    transfers = if rsu.protocol() == LearningProtocol::Cen {
                        rsu.cen_round(&refs)?
                    } else {
                        rsu.sync_round(&refs)?
                    };
                    let theta = rsu.global().theta;
                    self.theta_known.iter_mut().for_each(|k| *k = theta);
                }
            }
            LearningProtocol::Async => {
                for v in 0..self.pairs.len() {
                    if new_sample[v]
                        && rsu.async_due(v, self.learn_samples[v].len(), self.cfg.async_threshold)
                    {
                        transfers.extend(rsu.async_fire(v, &self.learn_samples[v])?);
                        self.theta_known[v] = rsu.global().theta;
                    }
                }
            }
        }
        if transfers.is_empty() {
            return Ok(Vec::new());
        }
        self.to_events(&transfers)
    }

    /// Advances the world by one slot.
    pub fn run_slot(&mut self) -> Result<SlotRecord> {
        let t = self.slot;
        self.step_inner().map_err(|e| Error::Slot {
            slot: t,
            source: Box::new(e),
        })
    }

    fn step_inner(&mut self) -> Result<SlotRecord> {
        let t = self.slot;
        let k = self.pairs.len();
        let dt = self.cfg.slot_s;
        for p in &mut self.pairs {
            p.step(&self.grid, dt);
        }
        self.draw_channels()?;

        // power allocation on each pair's RBs, in group order
        let blocked: Vec<bool> = (0..k).map(|v| t < self.blocked_until[v]).collect();
        let mut power: Vec<Vec<f64>> = vec![Vec::new(); k];
        for g in &self.groups {
            let n = g.members.len();
            let r = g.rbs.len();
            for (i, &v) in g.members.iter().enumerate() {
                if blocked[v] {
                    power[v] = vec![0.0; r];
                    continue;
                }
                power[v] = match self.rule {
                    None => vec![self.cfg.fp_power_w / r as f64; r],
                    Some(rule) => {
                        let theta = self.theta_bits(v);
                        let psi = compute_weight(
                            rule,
                            &self.queues[v],
                            &theta,
                            self.cfg.outage_eps,
                            self.cfg.q0_bits,
                            self.channel.bandwidth_per_rb,
                        )?;
                        let base = (i * n + i) * r;
                        let cinr: Vec<f64> = (0..r)
                            .map(|f| g.gain[base + f] / (self.est.get(v, g.rbs[f]) + self.noise))
                            .collect();
                        water_fill(psi, self.cfg.tradeoff_v, &cinr, self.cfg.p_max_w).per_rb_power
                    }
                };
            }
        }

        // realized interference and service
        let mut served = vec![0u64; k];
        let mut realized_i: Vec<Vec<f64>> = vec![Vec::new(); k];
        for g in &self.groups {
            let n = g.members.len();
            let r = g.rbs.len();
            for (i, &v) in g.members.iter().enumerate() {
                let mut rate = 0.0;
                let mut iv = vec![0.0; r];
                for f in 0..r {
                    let mut interference = 0.0;
                    for (j, &u) in g.members.iter().enumerate() {
                        if j != i {
                            interference += g.gain[(i * n + j) * r + f] * power[u][f];
                        }
                    }
                    iv[f] = interference;
                    let p = power[v][f];
                    if p > 0.0 {
                        let sinr = g.gain[(i * n + i) * r + f] * p / (interference + self.noise);
                        rate += self.rate_per_rb(sinr);
                    }
                }
                realized_i[v] = iv;
                served[v] = if blocked[v] {
                    0
                } else {
                    (rate * dt).floor() as u64
                };
            }
        }

        let arrivals: Vec<u64> = (0..k)
            .map(|_| self.traffic.draw(&mut self.arr_rng))
            .collect();
        let mut new_sample = vec![false; k];
        let mut queue = vec![0u64; k];
        for v in 0..k {
            let prev = self.queues[v];
            let q_next = step_queue(prev.q, arrivals[v], served[v]);
            let mut next = match self.rule {
                Some(WeightRule::Full) => step_virtual_queues(
                    &prev,
                    q_next,
                    prev.q,
                    &self.theta_bits(v),
                    self.cfg.outage_eps,
                    self.cfg.q0_bits,
                )?,
                Some(WeightRule::QueueReliability) => {
                    let mut n = step_virtual_queues(
                        &prev,
                        q_next,
                        prev.q,
                        &self.theta_bits(v),
                        self.cfg.outage_eps,
                        self.cfg.q0_bits,
                    )?;
                    n.vq_m1 = prev.vq_m1;
                    n.vq_m2 = prev.vq_m2;
                    n
                }
                _ => prev,
            };
            next.q = q_next;
            self.queues[v] = next;
            queue[v] = q_next;
            if let Some(x) = self.samplers[v].observe(t, q_next) {
                self.learn_samples[v].push(x as f64 / self.cfg.learning_unit_bits);
                new_sample[v] = true;
            }
        }

        let events = self.learning_step(&new_sample)?;

        for g in &self.groups {
            for &v in &g.members {
                for (f, &rb) in g.rbs.iter().enumerate() {
                    self.est.update(v, rb, realized_i[v][f]);
                }
            }
        }

        let totals: Vec<f64> = power.iter().map(|p| p.iter().sum()).collect();
        self.acc.slots += 1;
        for v in 0..k {
            self.acc
                .record_pair(totals[v], queue[v], self.cfg.q0_bits, blocked[v]);
        }
        if self.timeseries.is_some() {
            let row = TimeseriesRow {
                slot: t,
                avg_queue_bits: if k > 0 {
                    queue.iter().sum::<u64>() as f64 / k as f64
                } else {
                    0.0
                },
                max_queue_bits: queue.iter().copied().max().unwrap_or(0),
                avg_power_w: if k > 0 {
                    totals.iter().sum::<f64>() / k as f64
                } else {
                    0.0
                },
                blocked_pairs: blocked.iter().filter(|&&b| b).count(),
                sigma: self.global_theta_bits().sigma,
                xi: self.global_theta_bits().xi,
            };
            if let Some(ts) = self.timeseries.as_mut() {
                ts.push(row);
            }
        }
        self.events.extend_from_slice(&events);
        self.slot += 1;
        Ok(SlotRecord {
            slot: t,
            arrivals,
            served,
            power: totals,
            queue,
            blocked,
            events,
        })
    }

    /// Network-wide estimate in bits: the RSU's global model, or the initial value for
    /// protocols that do not learn.
    pub fn global_theta_bits(&self) -> GpdParams<f64> {
        let t = match &self.rsu {
            Some(r) => r.global().theta,
            None => GpdParams::new(self.cfg.theta0.0, self.cfg.theta0.1),
        };
        GpdParams::new(t.sigma * self.cfg.learning_unit_bits, t.xi)
    }

    /// Runs the remaining slots up to the configured horizon.
    pub fn run_to_horizon(&mut self) -> Result<()> {
        while self.slot < self.cfg.horizon_slots {
            self.run_slot()?;
        }
        Ok(())
    }

    /// Excess samples of all pairs as `(pair, bits)`, pair-major.
    pub fn excess_samples(&self) -> Vec<(usize, u64)> {
        self.samplers
            .iter()
            .enumerate()
            .flat_map(|(v, s)| s.samples().iter().map(move |&x| (v, x)))
            .collect()
    }

    pub fn metrics(&self) -> Metrics {
        let a = &self.acc;
        let ps = a.pair_slots.max(1) as f64;
        let reliability = if a.pair_slots == 0 {
            1.0
        } else {
            a.below as f64 / ps
        };
        let (tail_mean, tail_std) =
            mean_std(self.excess_samples().into_iter().map(|(_, x)| x as f64));
        let theta = self.global_theta_bits();
        Metrics {
            protocol: self.cfg.protocol,
            n_pairs: self.pairs.len(),
            seed: self.cfg.seed,
            slots: a.slots,
            avg_power_w: a.power / ps,
            avg_queue_bits: a.queue as f64 / ps,
            max_queue_bits: a.max_queue,
            reliability,
            outage: 1.0 - reliability,
            tail_mean_bits: tail_mean,
            tail_std_bits: tail_std,
            n_excess_samples: self.samplers.iter().map(|s| s.count()).sum(),
            bits_exchanged: crate::federated::total_bits_exchanged(&self.events),
            n_events: self.events.len(),
            blocked_slots: a.blocked,
            sigma: theta.sigma,
            xi: theta.xi,
        }
    }
}

/// Runs `cfg` under a baseline policy and returns its metrics.
pub fn run_baseline(mode: Protocol, cfg: &ScenarioConfig) -> Result<Metrics> {
    if !matches!(mode, Protocol::Fp | Protocol::Qso | Protocol::Qsr) {
        return Err(Error::invalid(
            "protocol",
            format!("{mode} is not a baseline"),
        ));
    }
    let mut c = cfg.clone();
    c.protocol = mode;
    let mut sim = Simulation::new(&c)?;
    sim.run_to_horizon()?;
    Ok(sim.metrics())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(protocol: Protocol, k: usize, horizon: u64) -> ScenarioConfig {
        ScenarioConfig {
            protocol,
            n_pairs: k,
            horizon_slots: horizon,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn smoke_run() {
        let mut sim = Simulation::new(&cfg(Protocol::Async, 4, 1000)).unwrap();
        sim.run_to_horizon().unwrap();
        let m = sim.metrics();
        assert_eq!(m.slots, 1000);
        assert!((0.0..=1.0).contains(&m.reliability));
    }

    #[test]
    fn blocked_pairs_serve_nothing() {
        let mut c = cfg(Protocol::Sync, 4, 300);
        c.sync_period_slots = 50;
        let mut sim = Simulation::new(&c).unwrap();
        let mut saw_block = false;
        for _ in 0..300 {
            let r = sim.run_slot().unwrap();
            for v in 0..4 {
                if r.blocked[v] {
                    saw_block = true;
                    assert_eq!(r.served[v], 0);
                    assert_eq!(r.power[v], 0.0);
                }
            }
        }
        assert!(saw_block);
    }

    #[test]
    fn fixed_power_zero_starves_queues() {
        let mut c = cfg(Protocol::Fp, 2, 200);
        c.fp_power_w = 0.0;
        let mut sim = Simulation::new(&c).unwrap();
        let mut total = vec![0u64; 2];
        for _ in 0..200 {
            let r = sim.run_slot().unwrap();
            for v in 0..2 {
                total[v] += r.arrivals[v];
                assert_eq!(r.queue[v], total[v]);
            }
        }
    }

    #[test]
    fn baseline_rejects_learning_protocols() {
        assert!(run_baseline(Protocol::Cen, &cfg(Protocol::Cen, 1, 1)).is_err());
    }

    #[test]
    fn zero_horizon() {
        let mut sim = Simulation::new(&cfg(Protocol::Qsr, 3, 0)).unwrap();
        sim.run_to_horizon().unwrap();
        let m = sim.metrics();
        assert_eq!(m.slots, 0);
        assert_eq!(m.reliability, 1.0);
        assert_eq!(m.avg_power_w, 0.0);
    }
}
