//! Run reports and their CSV form.
//!
//! All tables are UTF-8, comma separated, with a header row. Floats use Rust's shortest
//! round-trip formatting, so output does not depend on the locale.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::{Protocol, ScenarioConfig};
use crate::error::{Error, Result};
use crate::federated::ExchangeEvent;
use crate::gpd::GpdParams;
use crate::sim::{Metrics, Simulation, TimeseriesRow};

/// Units: bits for queues and payloads, W for power, probabilities for reliability/outage.
pub const METRICS_HEADER: &str =
    "protocol,K,seed,slots,avg_power_w,avg_queue_bits,max_queue_bits,reliability,outage,\
tail_mean_bits,tail_std_bits,n_excess_samples,bits_exchanged,n_events,blocked_slots,sigma_bits,xi";
pub const EXCESS_HEADER: &str = "pair,excess_bits";
pub const EVENTS_HEADER: &str =
    "slot,pair,direction,payload_bits,rate_bps,duration_s,slots_blocked";
pub const TIMESERIES_HEADER: &str =
    "slot,avg_queue_bits,max_queue_bits,avg_power_w,blocked_pairs,sigma_bits,xi";
pub const CCDF_HEADER: &str = "excess_bits,empirical_ccdf,fitted_ccdf";

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub metrics: Metrics,
    pub timeseries: Option<Vec<TimeseriesRow>>,
    /// `(pair, excess bits)`, pair-major.
    pub excess_samples: Vec<(usize, u64)>,
    pub events: Vec<ExchangeEvent>,
}

pub fn run_experiment(cfg: &ScenarioConfig) -> Result<RunReport> {
    let mut sim = Simulation::new(cfg)?;
    sim.run_to_horizon()?;
    Ok(RunReport {
        config: cfg.clone(),
        metrics: sim.metrics(),
        timeseries: sim.timeseries().map(|t| t.to_vec()),
        excess_samples: sim.excess_samples(),
        events: sim.events().to_vec(),
    })
}

/// One run per `(K, protocol)`, K-major, each with its own world built from `cfg`.
pub fn sweep(cfg: &ScenarioConfig, ks: &[usize], protocols: &[Protocol]) -> Result<Vec<RunReport>> {
    let mut out = Vec::with_capacity(ks.len() * protocols.len());
    for &k in ks {
        for &p in protocols {
            let c = ScenarioConfig {
                n_pairs: k,
                protocol: p,
                ..cfg.clone()
            };
            out.push(run_experiment(&c)?);
        }
    }
    Ok(out)
}

fn num(x: f64, what: &str) -> Result<String> {
    if x.is_finite() {
        Ok(format!("{x}"))
    } else {
        Err(Error::Data(format!("non-finite value for {what}")))
    }
}

pub fn metrics_row(m: &Metrics) -> Result<String> {
    Ok(format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        m.protocol,
        m.n_pairs,
        m.seed,
        m.slots,
        num(m.avg_power_w, "avg_power_w")?,
        num(m.avg_queue_bits, "avg_queue_bits")?,
        m.max_queue_bits,
        num(m.reliability, "reliability")?,
        num(m.outage, "outage")?,
        num(m.tail_mean_bits, "tail_mean_bits")?,
        num(m.tail_std_bits, "tail_std_bits")?,
        m.n_excess_samples,
        m.bits_exchanged,
        m.n_events,
        m.blocked_slots,
        num(m.sigma, "sigma")?,
        num(m.xi, "xi")?,
    ))
}

pub fn metrics_csv<'a>(metrics: impl IntoIterator<Item = &'a Metrics>) -> Result<String> {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for m in metrics {
        s.push_str(&metrics_row(m)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn excess_csv(samples: &[(usize, u64)]) -> String {
    let mut s = String::from(EXCESS_HEADER);
    s.push('\n');
    for (v, x) in samples {
        let _ = writeln!(s, "{v},{x}");
    }
    s
}

pub fn events_csv(events: &[ExchangeEvent]) -> Result<String> {
    let mut s = String::from(EVENTS_HEADER);
    s.push('\n');
    for e in events {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            e.slot,
            e.vue,
            e.direction.as_str(),
            e.payload_bits,
            num(e.rate, "rate")?,
            num(e.duration, "duration")?,
            e.slots_blocked
        );
    }
    Ok(s)
}

pub fn timeseries_csv(rows: &[TimeseriesRow]) -> Result<String> {
    let mut s = String::from(TIMESERIES_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.slot,
            num(r.avg_queue_bits, "avg_queue_bits")?,
            r.max_queue_bits,
            num(r.avg_power_w, "avg_power_w")?,
            r.blocked_pairs,
            num(r.sigma, "sigma")?,
            num(r.xi, "xi")?
        );
    }
    Ok(s)
}

impl RunReport {
    /// Writes `config.txt`, `metrics.csv`, `excess_samples.csv`, `events.csv` and, when
    /// enabled, `timeseries.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.txt"), self.config.to_text())?;
        fs::write(dir.join("metrics.csv"), metrics_csv([&self.metrics])?)?;
        fs::write(
            dir.join("excess_samples.csv"),
            excess_csv(&self.excess_samples),
        )?;
        fs::write(dir.join("events.csv"), events_csv(&self.events)?)?;
        if let Some(ts) = &self.timeseries {
            fs::write(dir.join("timeseries.csv"), timeseries_csv(ts)?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcdfPoint {
    pub x: f64,
    /// Fraction of samples `>= x`, i.e. the survival just left of `x`.
    pub empirical: f64,
    pub fitted: f64,
}

/// Empirical CCDF over the sorted samples next to the survival function of `theta`.
pub fn emit_ccdf(samples: &[f64], theta: &GpdParams<f64>) -> Result<Vec<CcdfPoint>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::Data(format!("non-finite sample {bad}")));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| CcdfPoint {
            x,
            empirical: (n - i as f64) / n,
            fitted: theta.survival(x),
        })
        .collect())
}

/// Largest gap between the empirical and fitted columns, on both sides of each jump.
pub fn ks_distance(points: &[CcdfPoint]) -> f64 {
    let n = points.len() as f64;
    points
        .iter()
        .map(|p| {
            (p.empirical - p.fitted)
                .abs()
                .max((p.empirical - 1.0 / n - p.fitted).abs())
        })
        .fold(0.0, f64::max)
}

pub fn ccdf_csv(points: &[CcdfPoint]) -> Result<String> {
    let mut s = String::from(CCDF_HEADER);
    s.push('\n');
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{}",
            num(p.x, "x")?,
            num(p.empirical, "empirical")?,
            num(p.fitted, "fitted")?
        );
    }
    Ok(s)
}

/// Reads the last column of a CSV with a header row as positive samples.
pub fn read_samples_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    if lines.next().is_none() {
        return Err(Error::EmptySamples);
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let field = line.rsplit(',').next().unwrap_or("").trim();
        let x: f64 = field
            .parse()
            .map_err(|_| Error::Data(format!("line {}: `{field}` is not a number", i + 1)))?;
        out.push(x);
    }
    Ok(out)
}
