//! Destination feedback (decentralized mode) and the global controller used
//! as the centralized baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::Action;
use crate::error::{Error, Result};
use crate::world::{Topology, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Decentralized,
    Centralized,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Decentralized, Mode::Centralized];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Decentralized => "decentralized",
            Mode::Centralized => "centralized",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "decentralized" => Ok(Mode::Decentralized),
            "centralized" => Ok(Mode::Centralized),
            other => Err(Error::config(format!(
                "unknown mode `{other}` (expected decentralized or centralized)"
            ))),
        }
    }
}

/// What one source achieved in the phase that just ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceReport {
    pub source: usize,
    pub delivered_fraction: f64,
    /// Live relays in both the source's and the destination's neighbourhood.
    pub potential_relays: Vec<usize>,
}

/// Broadcast from a destination to every relay in its neighbourhood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackMessage {
    pub destination: usize,
    /// Sorted by source id.
    pub per_source: Vec<SourceReport>,
}

impl FeedbackMessage {
    pub fn report(&self, source: usize) -> Option<&SourceReport> {
        self.per_source
            .binary_search_by_key(&source, |r| r.source)
            .ok()
            .map(|i| &self.per_source[i])
    }

    /// Relays that hear this broadcast.
    pub fn recipients<'w>(&self, world: &'w WorldState) -> &'w [usize] {
        &world.topology.dest_neighbors[self.destination]
    }
}

/// Part of a relay's observation contributed by feedback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackFragment {
    pub delivered_fraction: f64,
    pub redundant_relays: usize,
}

/// Per-source delivered fraction: the best among relays assigned to the
/// source that actually forwarded (`Some`) this phase, 0 if none did.
pub fn delivered_by_source(world: &WorldState, per_relay: &[Option<f64>]) -> Vec<f64> {
    let mut best = vec![0.0f64; world.sensors.len()];
    for (relay, delivered) in per_relay.iter().enumerate() {
        if let (Some(d), Some(source)) = (delivered, world.topology.assignment[relay]) {
            best[source] = best[source].max(*d);
        }
    }
    best
}

/// Feedback for every source routed through `dest`.
pub fn build_feedback(dest: usize, per_relay: &[Option<f64>], world: &WorldState) -> FeedbackMessage {
    let delivered = delivered_by_source(world, per_relay);
    let per_source = world
        .sensors
        .iter()
        .filter(|s| s.destination == dest)
        .map(|s| SourceReport {
            source: s.id,
            delivered_fraction: delivered[s.id],
            potential_relays: world.potential_relays(s.id),
        })
        .collect();
    FeedbackMessage {
        destination: dest,
        per_source,
    }
}

/// Reads a broadcast from the point of view of `relay`. Feedback about a
/// source the relay does not serve, or cannot reach, is discarded.
pub fn receive_feedback(
    relay: usize,
    assigned_source: Option<usize>,
    msg: &FeedbackMessage,
    topology: &Topology,
) -> Option<FeedbackFragment> {
    let source = assigned_source?;
    let report = msg.report(source)?;
    if !topology.is_sensor_neighbor(source, relay) {
        return None;
    }
    let redundant_relays = report.potential_relays.iter().filter(|&&r| r != relay).count();
    Some(FeedbackFragment {
        delivered_fraction: report.delivered_fraction,
        redundant_relays,
    })
}

/// Global controller memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// Exponential moving average of delivered fraction, per relay.
    pub delivery_history: Vec<Option<f64>>,
    /// Relay currently forwarding for each source.
    pub current_active: Vec<Option<usize>>,
    /// Weight of the newest phase in the moving average.
    pub history_weight: f64,
}

impl ControllerState {
    pub fn new(relays: usize, sources: usize, history_weight: f64) -> Self {
        ControllerState {
            delivery_history: vec![None; relays],
            current_active: vec![None; sources],
            history_weight,
        }
    }

    pub fn record(&mut self, relay: usize, delivered: f64) {
        let w = self.history_weight;
        let h = &mut self.delivery_history[relay];
        *h = Some(match *h {
            None => delivered,
            Some(prev) => w * delivered + (1.0 - w) * prev,
        });
    }
}

/// Picks the relay with the best delivery history among `candidates`;
/// relays never used before are scored by `probe` (predicted delivered
/// fraction). Ties go to the lowest id. `None` when no candidate is alive.
pub fn centralized_select(
    ctrl: &mut ControllerState,
    source: usize,
    candidates: &[usize],
    mut probe: impl FnMut(usize) -> f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &r in candidates {
        let score = ctrl.delivery_history[r].unwrap_or_else(|| probe(r));
        match best {
            Some((b, s)) if score < s || (score == s && r > b) => {}
            _ => best = Some((r, score)),
        }
    }
    let chosen = best.map(|(r, _)| r);
    ctrl.current_active[source] = chosen;
    chosen
}

/// One-step descent: try a δ step either way and keep the transmit action
/// with the lower predicted outage (ties move closer).
pub fn centralized_policy(world: &WorldState, relay: usize, source: usize) -> Result<Action> {
    let node = &world.relays[relay];
    let bound = world.mobility_bound;
    let delta = world.channel.step_delta;
    let closer = world.outage_at(relay, source, (node.displacement + delta).min(bound))?;
    let farther = world.outage_at(relay, source, (node.displacement - delta).max(-bound))?;
    Ok(if farther.probability < closer.probability {
        Action::MoveFartherTx
    } else {
        Action::MoveCloserTx
    })
}
