//! Link classification and the three-regime urban path-loss model at 5.9 GHz.

use super::geometry::{Axis, Grid, Position};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest per-coordinate NLOS offset, m.
pub const NLOS_MIN_OFFSET: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LosClass {
    Los,
    Wlos,
    Nlos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams<T> {
    /// Linear LOS/WLOS path-loss coefficient.
    pub alpha0: T,
    /// Linear NLOS path-loss coefficient.
    pub alpha0_prime: T,
    pub rho: T,
    /// Intersection proximity bound, m.
    pub d0: T,
    pub nakagami_m: T,
    /// Hz
    pub bandwidth_per_rb: T,
    /// W/Hz
    pub noise_psd: T,
}

/// `10^(db/10)`
pub fn db_to_linear<T: Scalar>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(10.0))
}

/// dBm/Hz to W/Hz.
pub fn dbm_to_watts<T: Scalar>(dbm: T) -> T {
    db_to_linear(dbm) * T::lit(1e-3)
}

impl<T: Scalar> ChannelParams<T> {
    pub fn from_db(
        alpha0_db: T,
        alpha0_prime_db: T,
        rho: T,
        d0: T,
        nakagami_m: T,
        bandwidth_per_rb: T,
        noise_psd_dbm_hz: T,
    ) -> Result<Self> {
        let p = Self {
            alpha0: db_to_linear(alpha0_db),
            alpha0_prime: db_to_linear(alpha0_prime_db),
            rho,
            d0,
            nakagami_m,
            bandwidth_per_rb,
            noise_psd: dbm_to_watts(noise_psd_dbm_hz),
        };
        p.validate()?;
        Ok(p)
    }

    /// Urban 5.9 GHz defaults: alpha0 = -68.5 dB, alpha0' = -54.5 dB, rho = 1.61, d0 = 15 m,
    /// m = 1.41, 180 kHz RBs and -174 dBm/Hz noise.
    pub fn urban_5g9() -> Self {
        Self::from_db(
            T::lit(-68.5),
            T::lit(-54.5),
            T::lit(1.61),
            T::lit(15.0),
            T::lit(1.41),
            T::lit(180e3),
            T::lit(-174.0),
        )
        .expect("built-in channel constants are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha0", self.alpha0),
            ("alpha0_prime", self.alpha0_prime),
            ("pathloss_exponent", self.rho),
            ("d0_m", self.d0),
            ("nakagami_m", self.nakagami_m),
            ("rb_bandwidth_hz", self.bandwidth_per_rb),
            ("noise_psd", self.noise_psd),
        ];
        for (name, v) in fields {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::invalid(
                    name,
                    format!("must be positive and finite, got {v}"),
                ));
            }
        }
        let limit = self.alpha0 * (self.d0 / T::lit(2.0)).powf(self.rho);
        if !(self.alpha0_prime < limit) {
            return Err(Error::invalid(
                "alpha0_prime",
                format!(
                    "NLOS coefficient {} must stay below alpha0*(d0/2)^rho = {}",
                    self.alpha0_prime, limit
                ),
            ));
        }
        Ok(())
    }

    /// Noise power over one RB, W.
    pub fn noise_power_per_rb(&self) -> T {
        self.noise_psd * self.bandwidth_per_rb
    }
}

/// Classifies the link from `tx` to `rx`.
///
/// LOS when both ends are on the same road; WLOS when they are on perpendicular roads and
/// either end is within `d0` of the intersection of those roads; NLOS otherwise.
pub fn classify_link<T: Scalar>(
    grid: &Grid<T>,
    tx: &Position<T>,
    rx: &Position<T>,
    d0: T,
) -> LosClass {
    let (a, b) = (tx.lane, rx.lane);
    if a.axis == b.axis {
        return if a.road == b.road {
            LosClass::Los
        } else {
            LosClass::Nlos
        };
    }
    let (h, v) = if a.axis == Axis::Horizontal {
        (tx, rx)
    } else {
        (rx, tx)
    };
    let (ix, iy) = grid.intersection(v.lane.road, h.lane.road);
    let near_h = grid.delta(h.x, ix).abs() <= d0;
    let near_v = grid.delta(v.y, iy).abs() <= d0;
    if near_h || near_v {
        LosClass::Wlos
    } else {
        LosClass::Nlos
    }
}

/// Linear path-loss gain for a link with coordinate offsets `(dx, dy)`.
///
/// NLOS offsets are clamped to at least [`NLOS_MIN_OFFSET`] per coordinate.
pub fn path_loss_offsets<T: Scalar>(
    dx: T,
    dy: T,
    class: LosClass,
    params: &ChannelParams<T>,
) -> Result<T> {
    let (ax, ay) = (dx.abs(), dy.abs());
    let gain = match class {
        LosClass::Los => {
            let d = ax.hypot(ay);
            if !(d > T::zero()) {
                return Err(Error::DegenerateGeometry(
                    "LOS link with zero Euclidean distance".into(),
                ));
            }
            params.alpha0 * d.powf(-params.rho)
        }
        LosClass::Wlos => {
            let d = ax + ay;
            if !(d > T::zero()) {
                return Err(Error::DegenerateGeometry(
                    "WLOS link with zero Manhattan distance".into(),
                ));
            }
            params.alpha0 * d.powf(-params.rho)
        }
        LosClass::Nlos => {
            let m = T::lit(NLOS_MIN_OFFSET);
            let prod = ax.max(m) * ay.max(m);
            params.alpha0_prime * prod.powf(-params.rho)
        }
    };
    Ok(gain)
}

pub fn path_loss<T: Scalar>(
    grid: &Grid<T>,
    tx: &Position<T>,
    rx: &Position<T>,
    class: LosClass,
    params: &ChannelParams<T>,
) -> Result<T> {
    path_loss_offsets(
        grid.delta(tx.x, rx.x),
        grid.delta(tx.y, rx.y),
        class,
        params,
    )
}

/// Classifies a link between a vehicle and a fixed node sitting at intersection
/// `(vx, hy)`, such as a roadside unit.
pub fn classify_to_intersection<T: Scalar>(
    grid: &Grid<T>,
    pos: &Position<T>,
    vx: usize,
    hy: usize,
    d0: T,
) -> LosClass {
    let (road_here, cross_road) = match pos.lane.axis {
        Axis::Horizontal => (hy, vx),
        Axis::Vertical => (vx, hy),
    };
    if pos.lane.road == road_here {
        return LosClass::Los;
    }
    // the node's perpendicular road meets our road here
    let meet = grid.road_coord(cross_road);
    if grid.delta(pos.along(), meet).abs() <= d0 {
        LosClass::Wlos
    } else {
        LosClass::Nlos
    }
}
