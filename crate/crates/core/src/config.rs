//! Flat `key = value` scenario configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Power/learning policy of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Cen,
    Sync,
    Async,
    Fp,
    Qso,
    Qsr,
}

impl Protocol {
    pub const ALL: [Protocol; 6] = [
        Protocol::Cen,
        Protocol::Sync,
        Protocol::Async,
        Protocol::Fp,
        Protocol::Qso,
        Protocol::Qsr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Cen => "cen",
            Protocol::Sync => "sync",
            Protocol::Async => "async",
            Protocol::Fp => "fp",
            Protocol::Qso => "qso",
            Protocol::Qsr => "qsr",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let p = s.trim().to_ascii_lowercase();
        Protocol::ALL
            .into_iter()
            .find(|x| x.as_str() == p)
            .ok_or_else(|| {
                Error::invalid(
                    "protocol",
                    format!(
                        "unknown protocol {s:?}; expected one of cen, sync, async, fp, qso, qsr"
                    ),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub grid_side_m: f64,
    /// Roads per axis; the grid has `grid_roads^2` intersections.
    pub grid_roads: usize,
    pub lane_width_m: f64,
    pub lanes_per_direction: usize,
    pub n_pairs: usize,
    pub speed_kmh: f64,
    pub pair_gap_m: f64,
    pub protocol: Protocol,
    pub horizon_slots: u64,
    pub seed: u64,
    pub slot_s: f64,
    pub alpha0_db: f64,
    pub alpha0_prime_db: f64,
    pub pathloss_exponent: f64,
    pub d0_m: f64,
    pub nakagami_m: f64,
    pub rb_bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub q0_bits: u64,
    pub outage_eps: f64,
    pub block_slots: u64,
    /// (sigma, xi) step sizes.
    pub step: (f64, f64),
    pub theta0: (f64, f64),
    pub grad0: (f64, f64),
    pub p_max_w: f64,
    pub n_rbs: usize,
    pub arrival_rate_bps: f64,
    pub size_sample_bits: u64,
    pub size_gradient_bits: u64,
    pub size_params_bits: u64,
    pub tradeoff_v: f64,
    pub sync_period_slots: u64,
    pub async_threshold: usize,
    pub svrgd_iterations: usize,
    pub interference_ema: f64,
    pub fp_power_w: f64,
    pub finite_block: bool,
    pub fb_error_prob: f64,
    /// Overrides the speed lookup when set.
    pub fb_block_len: Option<f64>,
    pub rsu_road_x: usize,
    pub rsu_road_y: usize,
    pub rsu_power_w: f64,
    /// Excess samples are divided by this before learning.
    pub learning_unit_bits: f64,
    pub timeseries: bool,
    pub output_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            grid_side_m: 250.0,
            grid_roads: 3,
            lane_width_m: 4.0,
            lanes_per_direction: 2,
            n_pairs: 8,
            speed_kmh: 60.0,
            pair_gap_m: 50.0,
            protocol: Protocol::Async,
            horizon_slots: 10_000,
            seed: 1,
            slot_s: 1e-3,
            alpha0_db: -68.5,
            alpha0_prime_db: -54.5,
            pathloss_exponent: 1.61,
            d0_m: 15.0,
            nakagami_m: 1.41,
            rb_bandwidth_hz: 180e3,
            noise_psd_dbm_hz: -174.0,
            q0_bits: 46_290,
            outage_eps: 0.001,
            block_slots: 10,
            step: (50.0, 0.005),
            theta0: (1.0, 0.0),
            grad0: (1.0, 1000.0),
            p_max_w: 10.0,
            n_rbs: 60,
            arrival_rate_bps: 500e3,
            size_sample_bits: 8,
            size_gradient_bits: 16,
            size_params_bits: 16,
            tradeoff_v: 1.0,
            sync_period_slots: 1000,
            async_threshold: 4,
            svrgd_iterations: 2,
            interference_ema: 0.05,
            fp_power_w: 1.0,
            finite_block: false,
            fb_error_prob: 0.5,
            fb_block_len: None,
            rsu_road_x: 1,
            rsu_road_y: 1,
            rsu_power_w: 10.0,
            learning_unit_bits: 1000.0,
            timeseries: false,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| Error::invalid(key, format!("cannot parse {v:?} as a number")))
}

fn parse_pair(key: &str, v: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = v.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::invalid(
            key,
            format!("expected two comma-separated numbers, got {v:?}"),
        ));
    }
    Ok((parse_num(key, parts[0])?, parse_num(key, parts[1])?))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::invalid(
            key,
            format!("expected true/false, got {v:?}"),
        )),
    }
}

/// Speed-dependent block length for the finite-block rate, bits.
pub fn block_len_for_speed(speed_kmh: f64) -> Option<f64> {
    [(40.0, 800.0), (60.0, 534.0), (80.0, 400.0)]
        .into_iter()
        .find(|(s, _)| (speed_kmh - s).abs() < 1e-9)
        .map(|(_, l)| l)
}

impl ScenarioConfig {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "grid_side_m" => self.grid_side_m = parse_num(key, v)?,
            "grid_roads" => self.grid_roads = parse_num(key, v)?,
            "lane_width_m" => self.lane_width_m = parse_num(key, v)?,
            "lanes_per_direction" => self.lanes_per_direction = parse_num(key, v)?,
            "n_pairs" => self.n_pairs = parse_num(key, v)?,
            "speed_kmh" => self.speed_kmh = parse_num(key, v)?,
            "pair_gap_m" => self.pair_gap_m = parse_num(key, v)?,
            "protocol" => self.protocol = v.parse()?,
            "horizon_slots" => self.horizon_slots = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "slot_s" => self.slot_s = parse_num(key, v)?,
            "alpha0_db" => self.alpha0_db = parse_num(key, v)?,
            "alpha0_prime_db" => self.alpha0_prime_db = parse_num(key, v)?,
            "pathloss_exponent" => self.pathloss_exponent = parse_num(key, v)?,
            "d0_m" => self.d0_m = parse_num(key, v)?,
            "nakagami_m" => self.nakagami_m = parse_num(key, v)?,
            "rb_bandwidth_hz" => self.rb_bandwidth_hz = parse_num(key, v)?,
            "noise_psd_dbm_hz" => self.noise_psd_dbm_hz = parse_num(key, v)?,
            "q0_bits" => self.q0_bits = parse_num(key, v)?,
            "outage_eps" => self.outage_eps = parse_num(key, v)?,
            "block_slots" => self.block_slots = parse_num(key, v)?,
            "step" => self.step = parse_pair(key, v)?,
            "theta0" => self.theta0 = parse_pair(key, v)?,
            "grad0" => self.grad0 = parse_pair(key, v)?,
            "p_max_w" => self.p_max_w = parse_num(key, v)?,
            "n_rbs" => self.n_rbs = parse_num(key, v)?,
            "arrival_rate_bps" => self.arrival_rate_bps = parse_num(key, v)?,
            "size_sample_bits" => self.size_sample_bits = parse_num(key, v)?,
            "size_gradient_bits" => self.size_gradient_bits = parse_num(key, v)?,
            "size_params_bits" => self.size_params_bits = parse_num(key, v)?,
            "tradeoff_v" => self.tradeoff_v = parse_num(key, v)?,
            "sync_period_slots" => self.sync_period_slots = parse_num(key, v)?,
            "async_threshold" => self.async_threshold = parse_num(key, v)?,
            "svrgd_iterations" => self.svrgd_iterations = parse_num(key, v)?,
            "interference_ema" => self.interference_ema = parse_num(key, v)?,
            "fp_power_w" => self.fp_power_w = parse_num(key, v)?,
            "finite_block" => self.finite_block = parse_bool(key, v)?,
            "fb_error_prob" => self.fb_error_prob = parse_num(key, v)?,
            "fb_block_len" => {
                self.fb_block_len = if v.trim().is_empty() {
                    None
                } else {
                    Some(parse_num(key, v)?)
                }
            }
            "rsu_road_x" => self.rsu_road_x = parse_num(key, v)?,
            "rsu_road_y" => self.rsu_road_y = parse_num(key, v)?,
            "rsu_power_w" => self.rsu_power_w = parse_num(key, v)?,
            "learning_unit_bits" => self.learning_unit_bits = parse_num(key, v)?,
            "timeseries" => self.timeseries = parse_bool(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v.trim()),
            _ => return Err(Error::invalid(key, "unknown key")),
        }
        Ok(())
    }

    /// All keys with their current values, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let pair = |p: (f64, f64)| format!("{},{}", p.0, p.1);
        vec![
            ("grid_side_m", self.grid_side_m.to_string()),
            ("grid_roads", self.grid_roads.to_string()),
            ("lane_width_m", self.lane_width_m.to_string()),
            ("lanes_per_direction", self.lanes_per_direction.to_string()),
            ("n_pairs", self.n_pairs.to_string()),
            ("speed_kmh", self.speed_kmh.to_string()),
            ("pair_gap_m", self.pair_gap_m.to_string()),
            ("protocol", self.protocol.to_string()),
            ("horizon_slots", self.horizon_slots.to_string()),
            ("seed", self.seed.to_string()),
            ("slot_s", self.slot_s.to_string()),
            ("alpha0_db", self.alpha0_db.to_string()),
            ("alpha0_prime_db", self.alpha0_prime_db.to_string()),
            ("pathloss_exponent", self.pathloss_exponent.to_string()),
            ("d0_m", self.d0_m.to_string()),
            ("nakagami_m", self.nakagami_m.to_string()),
            ("rb_bandwidth_hz", self.rb_bandwidth_hz.to_string()),
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz.to_string()),
            ("q0_bits", self.q0_bits.to_string()),
            ("outage_eps", self.outage_eps.to_string()),
            ("block_slots", self.block_slots.to_string()),
            ("step", pair(self.step)),
            ("theta0", pair(self.theta0)),
            ("grad0", pair(self.grad0)),
            ("p_max_w", self.p_max_w.to_string()),
            ("n_rbs", self.n_rbs.to_string()),
            ("arrival_rate_bps", self.arrival_rate_bps.to_string()),
            ("size_sample_bits", self.size_sample_bits.to_string()),
            ("size_gradient_bits", self.size_gradient_bits.to_string()),
            ("size_params_bits", self.size_params_bits.to_string()),
            ("tradeoff_v", self.tradeoff_v.to_string()),
            ("sync_period_slots", self.sync_period_slots.to_string()),
            ("async_threshold", self.async_threshold.to_string()),
            ("svrgd_iterations", self.svrgd_iterations.to_string()),
            ("interference_ema", self.interference_ema.to_string()),
            ("fp_power_w", self.fp_power_w.to_string()),
            ("finite_block", self.finite_block.to_string()),
            ("fb_error_prob", self.fb_error_prob.to_string()),
            (
                "fb_block_len",
                self.fb_block_len.map(|l| l.to_string()).unwrap_or_default(),
            ),
            ("rsu_road_x", self.rsu_road_x.to_string()),
            ("rsu_road_y", self.rsu_road_y.to_string()),
            ("rsu_power_w", self.rsu_power_w.to_string()),
            ("learning_unit_bits", self.learning_unit_bits.to_string()),
            ("timeseries", self.timeseries.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
        ]
    }

    /// Parses configuration text on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
                line: line_no,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::ConfigParse {
                    line: line_no,
                    msg: format!("duplicate key {k:?}"),
                });
            }
            cfg.set(k, v).map_err(|e| match e {
                Error::ConfigInvalid { field, msg } if msg == "unknown key" => Error::ConfigParse {
                    line: line_no,
                    msg: format!("unknown key {field:?}"),
                },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Serializes every key; parsing the result yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grid_side_m", self.grid_side_m),
            ("lane_width_m", self.lane_width_m),
            ("pair_gap_m", self.pair_gap_m),
            ("slot_s", self.slot_s),
            ("pathloss_exponent", self.pathloss_exponent),
            ("d0_m", self.d0_m),
            ("nakagami_m", self.nakagami_m),
            ("rb_bandwidth_hz", self.rb_bandwidth_hz),
            ("p_max_w", self.p_max_w),
            ("rsu_power_w", self.rsu_power_w),
            ("learning_unit_bits", self.learning_unit_bits),
            ("step.sigma", self.step.0),
            ("step.xi", self.step.1),
            ("theta0.sigma", self.theta0.0),
        ];
        for (k, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(
                    k,
                    format!("must be positive and finite, got {v}"),
                ));
            }
        }
        let non_negative = [
            ("speed_kmh", self.speed_kmh),
            ("arrival_rate_bps", self.arrival_rate_bps),
            ("tradeoff_v", self.tradeoff_v),
            ("fp_power_w", self.fp_power_w),
        ];
        for (k, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(
                    k,
                    format!("must be non-negative and finite, got {v}"),
                ));
            }
        }
        for (k, v) in [
            ("alpha0_db", self.alpha0_db),
            ("alpha0_prime_db", self.alpha0_prime_db),
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz),
            ("theta0.xi", self.theta0.1),
            ("grad0.sigma", self.grad0.0),
            ("grad0.xi", self.grad0.1),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(k, "must be finite"));
            }
        }
        if !(self.outage_eps > 0.0 && self.outage_eps < 1.0) {
            return Err(Error::invalid(
                "outage_eps",
                format!("must lie in (0, 1), got {}", self.outage_eps),
            ));
        }
        if !(self.theta0.1 < crate::gpd::XI_MAX) {
            return Err(Error::invalid("theta0", "shape must stay below 0.49"));
        }
        if !(self.interference_ema >= 0.0 && self.interference_ema <= 1.0) {
            return Err(Error::invalid("interference_ema", "must lie in [0, 1]"));
        }
        if !(self.fb_error_prob > 0.0 && self.fb_error_prob <= 0.5) {
            return Err(Error::invalid("fb_error_prob", "must lie in (0, 0.5]"));
        }
        if let Some(l) = self.fb_block_len {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::invalid("fb_block_len", "must be positive"));
            }
        } else if self.finite_block && block_len_for_speed(self.speed_kmh).is_none() {
            return Err(Error::invalid(
                "fb_block_len",
                format!(
                    "no block length known for {} km/h; set fb_block_len",
                    self.speed_kmh
                ),
            ));
        }
        for (k, v) in [
            ("grid_roads", self.grid_roads),
            ("lanes_per_direction", self.lanes_per_direction),
            ("n_rbs", self.n_rbs),
            ("svrgd_iterations", self.svrgd_iterations),
            ("async_threshold", self.async_threshold),
        ] {
            if v == 0 {
                return Err(Error::invalid(k, "must be at least 1"));
            }
        }
        for (k, v) in [
            ("block_slots", self.block_slots),
            ("sync_period_slots", self.sync_period_slots),
        ] {
            if v == 0 {
                return Err(Error::invalid(k, "must be at least 1"));
            }
        }
        for (k, v) in [
            ("size_sample_bits", self.size_sample_bits),
            ("size_gradient_bits", self.size_gradient_bits),
            ("size_params_bits", self.size_params_bits),
        ] {
            if v == 0 {
                return Err(Error::invalid(k, "must be at least 1"));
            }
        }
        if self.rsu_road_x >= self.grid_roads || self.rsu_road_y >= self.grid_roads {
            return Err(Error::invalid(
                "rsu_road_x",
                "RSU must sit on an existing intersection",
            ));
        }
        if self.pair_gap_m >= self.grid_side_m {
            return Err(Error::invalid(
                "pair_gap_m",
                "gap must be shorter than the grid side",
            ));
        }
        Ok(())
    }

    /// Block length in bits for the finite-block rate.
    pub fn block_len(&self) -> Option<f64> {
        self.fb_block_len
            .or_else(|| block_len_for_speed(self.speed_kmh))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(
            ScenarioConfig::parse("").unwrap(),
            ScenarioConfig::default()
        );
        let d = ScenarioConfig::default();
        assert_eq!(d.q0_bits, 46290);
        assert_eq!(d.step, (50.0, 0.005));
        assert_eq!(d.grad0, (1.0, 1000.0));
    }

    #[test]
    fn epsilon_out_of_range() {
        let e = ScenarioConfig::parse("outage_eps = 2").unwrap_err();
        assert!(
            matches!(e, Error::ConfigInvalid { ref field, .. } if field == "outage_eps"),
            "{e:?}"
        );
    }

    #[test]
    fn unknown_key_reports_line() {
        let e = ScenarioConfig::parse("# c\nseed = 3\nfoo = 1\n").unwrap_err();
        assert!(matches!(e, Error::ConfigParse { line: 3, .. }), "{e:?}");
    }

    #[test]
    fn round_trip() {
        let c = ScenarioConfig::parse(
            "protocol = QSR\nstep = 0.5, 0.01\nfb_block_len = 123.5\nslot_s = 0.0005",
        )
        .unwrap();
        let text = c.to_text();
        let again = ScenarioConfig::parse(&text).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.to_text(), text);
    }

    #[test]
    fn unknown_speed_needs_block_len() {
        assert!(ScenarioConfig::parse("finite_block = true\nspeed_kmh = 50").is_err());
        assert!(
            ScenarioConfig::parse("finite_block = true\nspeed_kmh = 50\nfb_block_len = 600")
                .is_ok()
        );
        assert_eq!(block_len_for_speed(60.0), Some(534.0));
    }

    #[test]
    fn malformed_line() {
        assert!(matches!(
            ScenarioConfig::parse("seed 3"),
            Err(Error::ConfigParse { line: 1, .. })
        ));
        assert!(matches!(
            ScenarioConfig::parse("seed = x"),
            Err(Error::ConfigInvalid { .. })
        ));
    }
}
