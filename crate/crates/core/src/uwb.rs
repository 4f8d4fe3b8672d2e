//! Ultra-wideband two-way ranging over a broadcast schedule.
//!
//! Six nodes share one radio channel. A full round needs only `2n - 1`
//! transmissions: every node transmits once in a first pass, then all but
//! the last transmit again in a second pass. Any ordered pair `(x, y)` with
//! `x < y` can then treat node x's first transmission as its poll, node y's
//! first transmission as the response, and node x's second transmission as
//! the final, giving alternative double-sided timing for all 15 pairs at
//! once.
//!
//! The double-sided combination
//! `tof = (Tround1 * Tround2 - Treply1 * Treply2) / (Tround1 + Tround2 + Treply1 + Treply2)`
//! is exact for ideal clocks regardless of how asymmetric the reply delays
//! are, and first-order immune to clock drift: two clocks drifting apart by
//! e parts bias the distance by about `d * e / 2`, versus roughly
//! `Treply * e / 2 * c` for a single-sided estimate.

use crate::geometry::Vec3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Maximum crystal tolerance the clock model accepts, in parts per million.
pub const MAX_CLOCK_PPM: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UwbError {
    #[error("clock drift {0} ppm exceeds +/-{MAX_CLOCK_PPM} ppm")]
    DriftOutOfRange(f64),
    #[error("invalid transcript: {0}")]
    InvalidTranscript(String),
}

/// Affine clock with timestamp jitter: `local(t) = (1 + ppm * 1e-6) * t + phase`,
/// plus an independent Gaussian draw per recorded timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    pub ppm: f64,
    pub phase_s: f64,
    pub jitter_std_s: f64,
}

impl Default for ClockModel {
    fn default() -> Self {
        ClockModel { ppm: 0.0, phase_s: 0.0, jitter_std_s: 100e-12 }
    }
}

impl ClockModel {
    pub fn new(ppm: f64, phase_s: f64, jitter_std_s: f64) -> Result<Self, UwbError> {
        if !ppm.is_finite() || ppm.abs() > MAX_CLOCK_PPM {
            return Err(UwbError::DriftOutOfRange(ppm));
        }
        assert!(jitter_std_s >= 0.0, "jitter std must be non-negative");
        Ok(ClockModel { ppm, phase_s, jitter_std_s })
    }

    /// Ideal clock: no drift, no phase, no jitter.
    pub fn ideal() -> Self {
        ClockModel { ppm: 0.0, phase_s: 0.0, jitter_std_s: 0.0 }
    }

    fn local(&self, t: f64) -> f64 {
        (1.0 + self.ppm * 1e-6) * t + self.phase_s
    }
}

/// One slot of the broadcast schedule: which node transmits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxSlot {
    pub slot: usize,
    pub node: usize,
}

/// The `2n - 1` transmission order: nodes `0..n` in pass one, then nodes
/// `0..n-1` in pass two.
pub fn schedule_broadcast(n_nodes: usize) -> Vec<TxSlot> {
    assert!(n_nodes >= 2, "ranging needs at least two nodes");
    let mut slots = Vec::with_capacity(2 * n_nodes - 1);
    for node in 0..n_nodes {
        slots.push(TxSlot { slot: slots.len(), node });
    }
    for node in 0..n_nodes - 1 {
        slots.push(TxSlot { slot: slots.len(), node });
    }
    slots
}

/// Slot indices a pair `(x, y)`, `x < y`, uses within the broadcast round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSlots {
    pub poll: usize,
    pub response: usize,
    pub final_tx: usize,
}

pub fn pair_slots(n_nodes: usize, x: usize, y: usize) -> PairSlots {
    assert!(x < y && y < n_nodes, "pair must satisfy x < y < n_nodes");
    PairSlots { poll: x, response: y, final_tx: n_nodes + x }
}

/// The four locally measured durations a pair extracts from a round, in
/// seconds of the respective node's own clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTiming {
    pub x: usize,
    pub y: usize,
    pub t_round1: f64,
    pub t_reply1: f64,
    pub t_round2: f64,
    pub t_reply2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RangingConfig {
    /// Wait between hearing the previous slot and transmitting, seconds.
    pub reply_delay_s: f64,
    pub seed: u64,
}

impl Default for RangingConfig {
    fn default() -> Self {
        RangingConfig { reply_delay_s: 300e-6, seed: 0 }
    }
}

/// Simulates one broadcast round over static node positions and returns the
/// per-pair timing transcript.
///
/// The physical timeline is built first: slot j fires `reply_delay_s` after
/// its transmitter hears slot j-1. Every node records one timestamp per
/// slot on its own clock (its transmit instant for its own slots, the
/// arrival instant otherwise), and pair durations are then differences of
/// those shared stamps. A round lasts a few milliseconds, so positions are
/// treated as constant for its duration.
pub fn simulate_ranging(
    positions: &[Vec3],
    clocks: &[ClockModel],
    cfg: &RangingConfig,
) -> Vec<PairTiming> {
    let n = positions.len();
    assert_eq!(clocks.len(), n, "one clock per node");
    let schedule = schedule_broadcast(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // True transmit times.
    let mut tx_time = vec![0.0f64; schedule.len()];
    for j in 1..schedule.len() {
        let hop = (positions[schedule[j].node] - positions[schedule[j - 1].node]).norm();
        tx_time[j] = tx_time[j - 1] + hop / SPEED_OF_LIGHT_M_S + cfg.reply_delay_s;
    }

    // stamps[j][i]: node i's local timestamp for slot j.
    let mut stamps = vec![vec![0.0f64; n]; schedule.len()];
    for (j, slot) in schedule.iter().enumerate() {
        for i in 0..n {
            let true_t = if i == slot.node {
                tx_time[j]
            } else {
                tx_time[j] + (positions[i] - positions[slot.node]).norm() / SPEED_OF_LIGHT_M_S
            };
            let jitter = if clocks[i].jitter_std_s > 0.0 {
                Normal::new(0.0, clocks[i].jitter_std_s).unwrap().sample(&mut rng)
            } else {
                0.0
            };
            stamps[j][i] = clocks[i].local(true_t) + jitter;
        }
    }

    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for x in 0..n {
        for y in x + 1..n {
            let s = pair_slots(n, x, y);
            out.push(PairTiming {
                x,
                y,
                t_round1: stamps[s.response][x] - stamps[s.poll][x],
                t_reply1: stamps[s.response][y] - stamps[s.poll][y],
                t_round2: stamps[s.final_tx][y] - stamps[s.response][y],
                t_reply2: stamps[s.final_tx][x] - stamps[s.response][x],
            });
        }
    }
    out
}

/// Alternative double-sided recovery. Fails if the transcript is physically
/// impossible (non-positive duration sum).
pub fn recover_distance(timing: &PairTiming) -> Result<f64, UwbError> {
    let denom = timing.t_round1 + timing.t_round2 + timing.t_reply1 + timing.t_reply2;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(UwbError::InvalidTranscript(format!(
            "pair ({}, {}) duration sum {denom} is not positive",
            timing.x, timing.y
        )));
    }
    let tof =
        (timing.t_round1 * timing.t_round2 - timing.t_reply1 * timing.t_reply2) / denom;
    Ok(tof * SPEED_OF_LIGHT_M_S)
}

/// Single-sided estimate from the first exchange only, for comparison:
/// `(Tround1 - Treply1) / 2 * c`. Carries the full drift-times-reply bias.
pub fn single_sided_estimate(timing: &PairTiming) -> f64 {
    0.5 * (timing.t_round1 - timing.t_reply1) * SPEED_OF_LIGHT_M_S
}

/// Convenience: one round then recovery, distances ordered like the pair
/// table (lexicographic x < y).
pub fn ranging_distances(
    positions: &[Vec3],
    clocks: &[ClockModel],
    cfg: &RangingConfig,
) -> Result<Vec<f64>, UwbError> {
    simulate_ranging(positions, clocks, cfg).iter().map(recover_distance).collect()
}
