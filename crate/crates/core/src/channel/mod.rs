//! Grid geometry, path loss, fading and link rates.

pub mod fading;
pub mod geometry;
pub mod pathloss;
pub mod rate;

pub use fading::{draw_fading, ChannelState, FadingSampler};
pub use geometry::{Axis, Grid, Heading, Lane, Position, VuePair};
pub use pathloss::{
    classify_link, classify_to_intersection, path_loss, path_loss_offsets, ChannelParams, LosClass,
};
pub use rate::{erfc, erfcinv, finite_block_rate, shannon_rate_per_rb, FiniteBlockRate};
