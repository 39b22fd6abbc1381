//! Small-scale fading draws, normalized to unit mean power.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};

use super::pathloss::LosClass;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-class fading power distribution: exponential for LOS, Gamma(m, 1/m) otherwise.
#[derive(Debug, Clone)]
pub struct FadingSampler {
    nakagami: Gamma<f64>,
}

impl FadingSampler {
    pub fn new(nakagami_m: f64) -> Result<Self> {
        let nakagami = Gamma::new(nakagami_m, 1.0 / nakagami_m)
            .map_err(|_| Error::domain("nakagami_m", nakagami_m, "> 0"))?;
        Ok(Self { nakagami })
    }

    pub fn draw<R: Rng + ?Sized>(&self, class: LosClass, rng: &mut R) -> f64 {
        match class {
            LosClass::Los => Exp1.sample(rng),
            LosClass::Wlos | LosClass::Nlos => self.nakagami.sample(rng),
        }
    }

    pub fn draw_into<T: Scalar, R: Rng + ?Sized>(
        &self,
        class: LosClass,
        out: &mut [T],
        rng: &mut R,
    ) {
        for g in out.iter_mut() {
            *g = T::lit(self.draw(class, rng));
        }
    }
}

/// One fading gain per RB.
pub fn draw_fading<T: Scalar, R: Rng + ?Sized>(
    sampler: &FadingSampler,
    class: LosClass,
    n_rbs: usize,
    rng: &mut R,
) -> Vec<T> {
    let mut v = vec![T::zero(); n_rbs];
    sampler.draw_into(class, &mut v, rng);
    v
}

/// Realized channel of one link for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState<T> {
    pub tx_pair: usize,
    pub rx_pair: usize,
    pub los_class: LosClass,
    pub path_loss: T,
    pub fading_per_rb: Vec<T>,
    pub gain_per_rb: Vec<T>,
}

impl<T: Scalar> ChannelState<T> {
    pub fn new(
        tx_pair: usize,
        rx_pair: usize,
        los_class: LosClass,
        path_loss: T,
        fading_per_rb: Vec<T>,
    ) -> Self {
        let gain_per_rb = fading_per_rb.iter().map(|&f| f * path_loss).collect();
        Self {
            tx_pair,
            rx_pair,
            los_class,
            path_loss,
            fading_per_rb,
            gain_per_rb,
        }
    }
}
