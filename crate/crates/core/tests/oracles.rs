//! Worked examples checked against values computed independently in the test.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tailfed::channel::{path_loss_offsets, shannon_rate_per_rb, ChannelParams, LosClass};
use tailfed::federated::{
    global_average, CommCostParams, Direction, ExchangeEvent, GlobalModel, LearningParams,
    LearningProtocol, LocalModel, Rsu, Transfer,
};
use tailfed::gpd::{fit_gpd, nll, project_feasible, FitOptions, GpdParams, GradientPair, StepSize};
use tailfed::lyapunov::{compute_weight, water_fill, WeightRule};
use tailfed::queues::{step_virtual_queues, QueueState};
use tailfed::report::{emit_ccdf, ks_distance, metrics_csv, sweep};
use tailfed::sim::{build_zone_map, Simulation};
use tailfed::{Grid64, Protocol, ScenarioConfig};

fn urban() -> ChannelParams<f64> {
    ChannelParams::from_db(-68.5, -54.5, 1.61, 15.0, 1.41, 180e3, -174.0).unwrap()
}

#[test]
fn los_and_nlos_path_loss() {
    let p = urban();
    let los = path_loss_offsets(50.0, 0.0, LosClass::Los, &p).unwrap();
    let want = 10f64.powf(-6.85) * 50f64.powf(-1.61);
    assert!((los - want).abs() < 1e-12 * want);
    assert!((los - 2.60e-10).abs() < 0.01e-10);
    let nlos = path_loss_offsets(10.0, 10.0, LosClass::Nlos, &p).unwrap();
    let want = 10f64.powf(-5.45) * 100f64.powf(-1.61);
    assert!((nlos - want).abs() < 1e-12 * want);
}

#[test]
fn unit_snr_serves_180_bits_per_slot() {
    let bits = (shannon_rate_per_rb(1.0f64, 180e3) * 1e-3).floor();
    assert_eq!(bits, 180.0);
}

#[test]
fn first_moment_queue_example() {
    let st = QueueState {
        q: 12,
        vq_rel: 0.0,
        vq_m1: 0.0,
        vq_m2: 0.0,
    };
    let n = step_virtual_queues(&st, 12, 12, &GpdParams::new(1.0, 0.0), 0.001, 10).unwrap();
    assert_eq!(n.vq_m1, 1.0);
}

#[test]
fn weight_above_threshold_by_hand() {
    let (q0, sigma, eps, w) = (46_290.0f64, 1000.0f64, 0.001f64, 180e3f64);
    let q = q0 + 100.0;
    let st = QueueState {
        q: q as u64,
        ..Default::default()
    };
    let got = compute_weight(
        WeightRule::Full,
        &st,
        &GpdParams::new(sigma, 0.0),
        eps,
        46_290,
        w,
    )
    .unwrap();
    let (m1, m2) = (sigma, 2.0 * sigma * sigma);
    let u = q - q0;
    let want = w / 2f64.ln() * ((1.0 - eps * q0) * q + (q - q0 - m1) + 2.0 * u * (u * u - m2));
    assert!((got - want).abs() <= 1e-12 * want.abs());
}

#[test]
fn reduced_weight_matches_full_below_threshold() {
    let th = GpdParams::new(1000.0, 0.1);
    for q in [0u64, 10, 5_000, 46_290] {
        let st = QueueState {
            q,
            vq_rel: 37.0,
            vq_m1: 0.0,
            vq_m2: 0.0,
        };
        let full = compute_weight(WeightRule::Full, &st, &th, 0.001, 46_290, 180e3).unwrap();
        let qsr =
            compute_weight(WeightRule::QueueReliability, &st, &th, 0.001, 46_290, 180e3).unwrap();
        assert_eq!(full, qsr);
    }
}

#[test]
fn water_filling_examples() {
    let a = water_fill(2.0f64, 1.0, &[1.0], 10.0);
    assert!((a.per_rb_power[0] - 1.0).abs() < 1e-12 && a.dual == 0.0);
    let b = water_fill(100.0f64, 1.0, &[1.0, 1.0], 2.0);
    assert!((b.per_rb_power[0] - 1.0).abs() < 1e-12 && (b.per_rb_power[1] - 1.0).abs() < 1e-12);
    assert!((b.dual - 49.0).abs() < 1e-9);
}

#[test]
fn projection_matches_grid_search() {
    let c = GpdParams::new(1.0f64, -2.0);
    let p = project_feasible(c, 1.0);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let n = 2000;
    for i in 0..=n {
        for j in 0..=n {
            let s = 1e-6 + 3.0 * i as f64 / n as f64;
            let x = -3.0 + 3.49 * j as f64 / n as f64;
            if s + x < 0.0 {
                continue;
            }
            let d = (s - 1.0).powi(2) + (x + 2.0).powi(2);
            if d < best.0 {
                best = (d, s, x);
            }
        }
    }
    assert!((p.sigma - 1.5).abs() < 1e-12 && (p.xi + 1.5).abs() < 1e-12);
    assert!(
        (p.sigma - best.1).abs() < 5e-3 && (p.xi - best.2).abs() < 5e-3,
        "{p:?} {best:?}"
    );
}

#[test]
fn weighted_average_example() {
    let g = GlobalModel::initial(GpdParams::new(1.0, 0.0), GradientPair::default());
    let lm = |s: f64, x: f64, m: usize| LocalModel {
        theta: GpdParams::new(s, x),
        gradient: GradientPair::default(),
        sample_count: m,
        max_sample: 0.0,
    };
    let out = global_average(&g, &[&lm(1.0, 0.0, 1), &lm(3.0, 0.2, 3)]).unwrap();
    assert!((out.theta.sigma - 2.5).abs() < 1e-12 && (out.theta.xi - 0.15).abs() < 1e-12);
}

#[test]
fn upload_blocks_ten_slots() {
    let tr = Transfer {
        vue: 0,
        direction: Direction::Up,
        payload_bits: 10 * 8,
    };
    let e = ExchangeEvent::new(0, tr, 8_000.0, 1e-3).unwrap();
    assert!((e.duration - 0.01).abs() < 1e-15);
    assert_eq!(e.slots_blocked, 10);
}

fn params() -> LearningParams<f64> {
    LearningParams {
        step: StepSize::new(50.0, 0.005),
        iterations: 2,
        theta0: GpdParams::new(1.0, 0.0),
        gradient0: GradientPair::new(1.0, 1000.0),
        sizes: CommCostParams::default(),
    }
}

fn gpd_draws(n: usize, seed: u64) -> Vec<f64> {
    let t = GpdParams::new(1.0, 0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| t.sample(&mut rng)).collect()
}

#[test]
fn single_vue_protocols_agree() {
    let xs = gpd_draws(60, 4);
    let mut cen = Rsu::new(LearningProtocol::Cen, 1, params(), 9).unwrap();
    let mut syn = Rsu::new(LearningProtocol::Sync, 1, params(), 9).unwrap();
    let mut asy = Rsu::new(LearningProtocol::Async, 1, params(), 9).unwrap();
    for round in 1..=6 {
        let s = &xs[..10 * round];
        cen.cen_round(&[s]).unwrap();
        syn.sync_round(&[s]).unwrap();
        assert!(asy.async_due(0, s.len(), 10));
        asy.async_fire(0, s).unwrap();
        let (a, b, c) = (cen.global().theta, syn.global().theta, asy.global().theta);
        assert!(
            (a.sigma - b.sigma).abs() <= 1e-12 && (a.xi - b.xi).abs() <= 1e-12,
            "round {round}: {a:?} {b:?}"
        );
        assert!(
            (b.sigma - c.sigma).abs() <= 1e-12 && (b.xi - c.xi).abs() <= 1e-12,
            "round {round}: {b:?} {c:?}"
        );
    }
}

#[test]
fn centralized_pooling_is_partition_blind() {
    let xs = gpd_draws(90, 5);
    let mut split = Rsu::new(LearningProtocol::Cen, 3, params(), 2).unwrap();
    let mut whole = Rsu::new(LearningProtocol::Cen, 1, params(), 2).unwrap();
    split
        .cen_round(&[&xs[..30], &xs[30..60], &xs[60..]])
        .unwrap();
    whole.cen_round(&[&xs[..]]).unwrap();
    assert_eq!(split.global().theta, whole.global().theta);
}

#[test]
fn sync_round_payload() {
    let xs = gpd_draws(40, 6);
    let parts: Vec<&[f64]> = xs.chunks(10).collect();
    let mut rsu = Rsu::new(LearningProtocol::Sync, parts.len(), params(), 0).unwrap();
    let bits: u64 = rsu
        .sync_round(&parts)
        .unwrap()
        .iter()
        .map(|t| t.payload_bits)
        .sum();
    assert_eq!(bits, parts.len() as u64 * 2 * 40);
}

#[test]
fn true_parameters_beat_a_coarse_grid() {
    let xs = gpd_draws(5000, 7);
    let truth = nll(&xs, &GpdParams::new(1.0, 0.2)).unwrap();
    for ds in [-0.3, 0.3] {
        for dx in [-0.15, 0.15] {
            let other = nll(&xs, &GpdParams::new(1.0 + ds, 0.2 + dx)).unwrap();
            assert!(truth < other);
        }
    }
}

#[test]
fn fitted_ccdf_close_to_empirical() {
    let xs = gpd_draws(5000, 8);
    let fit = fit_gpd(&xs, &FitOptions::default()).unwrap();
    let d = ks_distance(&emit_ccdf(&xs, &fit.theta).unwrap());
    assert!(d < 0.03, "KS distance {d}");
}

#[test]
fn zones_of_the_reference_grid() {
    let grid = Grid64::new(250.0, 3, 4.0, 2).unwrap();
    let z = build_zone_map(&grid, 60).unwrap();
    assert_eq!(z.n_zones(), 24);
    assert_eq!(z.n_colors(), 4);
    for c in 0..4 {
        assert_eq!(z.color_rbs(c).len(), 15);
    }
}

#[test]
fn smoke_run_and_queue_stability_baseline() {
    let cfg = ScenarioConfig {
        n_pairs: 4,
        horizon_slots: 1000,
        protocol: Protocol::Qso,
        ..Default::default()
    };
    let mut sim = Simulation::new(&cfg).unwrap();
    for _ in 0..1000 {
        sim.run_slot().unwrap();
        assert!(sim
            .queues()
            .iter()
            .all(|q| q.vq_rel == 0.0 && q.vq_m1 == 0.0 && q.vq_m2 == 0.0));
    }
    let m = sim.metrics();
    assert!((0.0..=1.0).contains(&m.reliability));
}

#[test]
fn reliability_baseline_freezes_moment_queues() {
    let cfg = ScenarioConfig {
        n_pairs: 3,
        horizon_slots: 500,
        protocol: Protocol::Qsr,
        ..Default::default()
    };
    let mut sim = Simulation::new(&cfg).unwrap();
    sim.run_to_horizon().unwrap();
    assert!(sim
        .queues()
        .iter()
        .all(|q| q.vq_m1 == 0.0 && q.vq_m2 == 0.0));
    assert!(sim.queues().iter().any(|q| q.vq_rel > 0.0));
}

#[test]
fn fixed_zero_power_grows_queues_linearly() {
    let cfg = ScenarioConfig {
        n_pairs: 2,
        horizon_slots: 2000,
        protocol: Protocol::Fp,
        fp_power_w: 0.0,
        ..Default::default()
    };
    let mut sim = Simulation::new(&cfg).unwrap();
    sim.run_to_horizon().unwrap();
    for q in sim.queues() {
        let per_slot = q.q as f64 / 2000.0;
        assert!((per_slot - 500.0).abs() < 10.0, "{per_slot}");
    }
}

#[test]
fn sweep_rows_and_determinism() {
    let cfg = ScenarioConfig {
        horizon_slots: 300,
        ..Default::default()
    };
    let run = || {
        let reports = sweep(&cfg, &[4, 8, 16], &[Protocol::Qsr, Protocol::Async]).unwrap();
        metrics_csv(reports.iter().map(|r| &r.metrics)).unwrap()
    };
    let a = run();
    assert_eq!(a.lines().count(), 1 + 6);
    assert_eq!(a, run());
}
