//! Network topology, node state, mobility and energy accounting.

use std::fmt;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::Action;
use crate::channel::{effective_distances, ChannelParams, LinkGeometry};
use crate::coordination::Mode;
use crate::error::{Error, Result};

/// RNG stream used for episode resets, kept apart from topology generation.
const RESET_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// `self + t·(other − self)`.
    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        Point::new(
            self.x + t * (other.x - self.x),
            self.y + t * (other.y - self.y),
        )
    }
}

/// Energy in nano-units. Integer so per-step charges sum exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Energy(pub u64);

impl Energy {
    const SCALE: f64 = 1e9;

    pub const ZERO: Energy = Energy(0);

    pub fn from_units(units: f64) -> Energy {
        debug_assert!(units >= 0.0);
        Energy((units * Self::SCALE).round() as u64)
    }

    pub fn units(self) -> f64 {
        self.0 as f64 / Self::SCALE
    }

    pub fn saturating_sub(self, other: Energy) -> Energy {
        Energy(self.0.saturating_sub(other.0))
    }
}

impl std::ops::Add for Energy {
    type Output = Energy;

    fn add(self, rhs: Energy) -> Energy {
        Energy(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for Energy {
    fn add_assign(&mut self, rhs: Energy) {
        self.0 += rhs.0;
    }
}

/// Per-action energy costs, in battery units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    pub capacity: f64,
    /// Cost of one δ step.
    pub move_cost: f64,
    /// Cost of one transmission at `reference_power`; scales linearly with P_R.
    pub transmit_cost: f64,
    pub reference_power: f64,
    pub idle_cost: f64,
    /// Charged to every live relay on every step under central control.
    pub sync_cost: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            capacity: 5000.0,
            move_cost: 0.5,
            transmit_cost: 0.5,
            reference_power: 0.3,
            idle_cost: 0.0,
            sync_cost: 0.2,
        }
    }
}

impl EnergyModel {
    /// Cost of a move-and-transmit step for a relay radiating `tx_power`.
    pub fn move_tx_cost(&self, tx_power: f64) -> f64 {
        self.move_cost + self.transmit_cost * tx_power / self.reference_power
    }

    /// Total charge for one step.
    pub fn step_cost(&self, action: Action, tx_power: f64, mode: Mode) -> Energy {
        let mut units = if action.transmits() {
            self.move_tx_cost(tx_power)
        } else {
            self.idle_cost
        };
        if mode == Mode::Centralized {
            units += self.sync_cost;
        }
        Energy::from_units(units)
    }

    pub(crate) fn violations(&self, out: &mut Vec<String>) {
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            out.push(format!("`energy.capacity` must be > 0 (got {})", self.capacity));
        }
        for (name, v) in [
            ("move_cost", self.move_cost),
            ("transmit_cost", self.transmit_cost),
            ("idle_cost", self.idle_cost),
            ("sync_cost", self.sync_cost),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                out.push(format!("`energy.{name}` must be >= 0 (got {v})"));
            }
        }
        if !(self.reference_power.is_finite() && self.reference_power > 0.0) {
            out.push(format!(
                "`energy.reference_power` must be > 0 (got {})",
                self.reference_power
            ));
        }
    }
}

/// Deployment parameters for randomly generated worlds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    pub width: f64,
    pub height: f64,
    pub sensor_power_min: f64,
    pub sensor_power_max: f64,
    pub relay_power: f64,
    /// Relays never drift further than this from their home position, metres.
    pub mobility_bound: f64,
    pub comm_radius: f64,
    /// Maximum number of sensors a relay may neighbour.
    pub max_sensor_degree: usize,
    pub sources: usize,
    pub destinations: usize,
    pub relays: usize,
    /// Relays spawn at a uniform fraction in this range of the way from
    /// their source to its destination.
    pub relay_fraction_min: f64,
    pub relay_fraction_max: f64,
    /// Allowed source–destination separation, metres.
    pub link_min: f64,
    pub link_max: f64,
    /// At each episode reset, displacements are redrawn uniformly in
    /// `[−reset_displacement, reset_displacement]`.
    pub reset_displacement: f64,
    /// Optional explicit deployment that replaces random generation.
    pub scenario: Option<PathBuf>,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            width: 80.0,
            height: 80.0,
            sensor_power_min: 0.001,
            sensor_power_max: 0.3,
            relay_power: 0.3,
            mobility_bound: 30.0,
            comm_radius: 40.0,
            max_sensor_degree: 6,
            sources: 1,
            destinations: 1,
            relays: 3,
            relay_fraction_min: 0.3,
            relay_fraction_max: 0.7,
            link_min: 10.0,
            link_max: 27.0,
            reset_displacement: 30.0,
            scenario: None,
        }
    }
}

impl WorldParams {
    pub(crate) fn violations(&self, out: &mut Vec<String>) {
        let mut positive = |name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("`environment.{name}` must be > 0 (got {v})"));
            }
        };
        positive("width", self.width);
        positive("height", self.height);
        positive("sensor_power_min", self.sensor_power_min);
        positive("sensor_power_max", self.sensor_power_max);
        positive("relay_power", self.relay_power);
        positive("mobility_bound", self.mobility_bound);
        positive("comm_radius", self.comm_radius);
        if self.sensor_power_min > self.sensor_power_max {
            out.push("`environment.sensor_power_min` exceeds `sensor_power_max`".into());
        }
        if self.max_sensor_degree == 0 {
            out.push("`environment.max_sensor_degree` must be >= 1".into());
        }
        if self.sources == 0 {
            out.push("`environment.sources` must be >= 1".into());
        }
        if self.destinations == 0 {
            out.push("`environment.destinations` must be >= 1".into());
        }
        if self.relays == 0 {
            out.push("`environment.relays` must be >= 1".into());
        }
        let f = (self.relay_fraction_min, self.relay_fraction_max);
        if !(0.0..=1.0).contains(&f.0) || !(0.0..=1.0).contains(&f.1) || f.0 > f.1 {
            out.push(format!(
                "`environment.relay_fraction_min/max` must satisfy 0 <= min <= max <= 1 (got {} / {})",
                f.0, f.1
            ));
        }
        if !(self.link_min.is_finite() && self.link_min >= 0.0 && self.link_min <= self.link_max)
        {
            out.push(format!(
                "`environment.link_min/max` must satisfy 0 <= min <= max (got {} / {})",
                self.link_min, self.link_max
            ));
        }
        if !(self.reset_displacement.is_finite()
            && self.reset_displacement >= 0.0
            && self.reset_displacement <= self.mobility_bound)
        {
            out.push(format!(
                "`environment.reset_displacement` must lie in [0, mobility_bound] (got {})",
                self.reset_displacement
            ));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorNode {
    pub id: usize,
    pub position: Point,
    /// Transmit power P_I, watts.
    pub tx_power: f64,
    pub destination: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayNode {
    pub id: usize,
    pub home_position: Point,
    /// Signed offset along the sensor–destination axis, positive toward the
    /// destination.
    pub displacement: f64,
    /// Transmit power P_R, watts.
    pub tx_power: f64,
    pub battery: Energy,
    pub battery_capacity: Energy,
    pub alive: bool,
}

impl RelayNode {
    pub fn consumed(&self) -> Energy {
        self.battery_capacity.saturating_sub(self.battery)
    }

    pub fn consumed_fraction(&self) -> f64 {
        self.consumed().0 as f64 / self.battery_capacity.0 as f64
    }

    fn recharge(&mut self) {
        self.battery = self.battery_capacity;
        self.alive = self.battery > Energy::ZERO;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Destination {
    pub id: usize,
    pub position: Point,
}

/// Neighbourhoods and the relay → source assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    /// For each source, relay ids in its neighbourhood (sorted).
    pub sensor_neighbors: Vec<Vec<usize>>,
    /// For each destination, relay ids in its neighbourhood (sorted).
    pub dest_neighbors: Vec<Vec<usize>>,
    /// For each relay, the single source it forwards for, if any.
    pub assignment: Vec<Option<usize>>,
}

impl Topology {
    pub fn is_sensor_neighbor(&self, source: usize, relay: usize) -> bool {
        self.sensor_neighbors[source].binary_search(&relay).is_ok()
    }

    pub fn is_dest_neighbor(&self, dest: usize, relay: usize) -> bool {
        self.dest_neighbors[dest].binary_search(&relay).is_ok()
    }

    /// Number of sources neighbouring `relay`.
    pub fn sensor_degree(&self, relay: usize) -> usize {
        self.sensor_neighbors
            .iter()
            .filter(|n| n.binary_search(&relay).is_ok())
            .count()
    }

    /// Relays assigned to `source`, ascending.
    pub fn serving(&self, source: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, s)| **s == Some(source))
            .map(|(r, _)| r)
    }
}

/// Complete simulation state for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub sensors: Vec<SensorNode>,
    pub relays: Vec<RelayNode>,
    pub destinations: Vec<Destination>,
    pub topology: Topology,
    pub channel: ChannelParams,
    pub mobility_bound: f64,
    pub reset_displacement: f64,
    pub sensor_labels: Vec<String>,
    pub relay_labels: Vec<String>,
    pub destination_labels: Vec<String>,
    pub(crate) reset_rng: ChaCha8Rng,
}

impl fmt::Display for WorldState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.sensors {
            let n: Vec<_> = self.topology.sensor_neighbors[s.id]
                .iter()
                .map(|&r| self.relay_labels[r].as_str())
                .collect();
            writeln!(
                f,
                "source {} at ({:.2}, {:.2}) P_I={:.4} W -> {}; N = {{{}}}",
                self.sensor_labels[s.id],
                s.position.x,
                s.position.y,
                s.tx_power,
                self.destination_labels[s.destination],
                n.join(", ")
            )?;
        }
        for d in &self.destinations {
            let n: Vec<_> = self.topology.dest_neighbors[d.id]
                .iter()
                .map(|&r| self.relay_labels[r].as_str())
                .collect();
            writeln!(
                f,
                "destination {} at ({:.2}, {:.2}); N = {{{}}}",
                self.destination_labels[d.id],
                d.position.x,
                d.position.y,
                n.join(", ")
            )?;
        }
        for r in &self.relays {
            let serves = self.topology.assignment[r.id]
                .map(|s| self.sensor_labels[s].clone())
                .unwrap_or_else(|| "-".into());
            writeln!(
                f,
                "relay {} at ({:.2}, {:.2}) serves {}",
                self.relay_labels[r.id], r.home_position.x, r.home_position.y, serves
            )?;
        }
        Ok(())
    }
}

impl WorldState {
    pub(crate) fn reset_rng_for(seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(RESET_STREAM);
        rng
    }

    /// Start-of-episode reset: refill batteries and redraw displacements.
    pub fn reset(&mut self) {
        let span = self.reset_displacement;
        for relay in &mut self.relays {
            relay.recharge();
            relay.displacement = if span > 0.0 {
                self.reset_rng.random_range(-span..=span)
            } else {
                0.0
            };
        }
    }

    /// Live relays assigned to `source`.
    pub fn alive_serving(&self, source: usize) -> impl Iterator<Item = usize> + '_ {
        self.topology
            .serving(source)
            .filter(move |&r| self.relays[r].alive)
    }

    /// Live relays that could carry traffic from `source` to its destination.
    pub fn potential_relays(&self, source: usize) -> Vec<usize> {
        let dest = self.sensors[source].destination;
        self.topology.sensor_neighbors[source]
            .iter()
            .copied()
            .filter(|&r| self.relays[r].alive && self.topology.is_dest_neighbor(dest, r))
            .collect()
    }

    /// Outage for `relay` forwarding `source`'s traffic at its current displacement.
    pub fn outage(&self, relay: usize, source: usize) -> Result<crate::channel::Outage> {
        self.outage_at(relay, source, self.relays[relay].displacement)
    }

    /// Outage if `relay` were displaced by `displacement` instead.
    pub fn outage_at(
        &self,
        relay: usize,
        source: usize,
        displacement: f64,
    ) -> Result<crate::channel::Outage> {
        let dest = self.sensors[source].destination;
        let base = self.base_geometry(relay, source, dest)?;
        let geom = effective_distances(base, displacement, &self.channel);
        crate::channel::outage(
            self.sensors[source].tx_power,
            self.relays[relay].tx_power,
            geom,
            &self.channel,
        )
    }

    fn base_geometry(&self, relay: usize, source: usize, dest: usize) -> Result<LinkGeometry> {
        if source >= self.sensors.len() || relay >= self.relays.len() || dest >= self.destinations.len()
        {
            return Err(Error::Topology(format!(
                "unknown node (relay {relay}, source {source}, destination {dest})"
            )));
        }
        if !self.topology.is_sensor_neighbor(source, relay) {
            return Err(Error::Topology(format!(
                "relay {} is not a neighbour of source {}",
                self.relay_labels[relay], self.sensor_labels[source]
            )));
        }
        let home = self.relays[relay].home_position;
        Ok(LinkGeometry::new(
            home.distance(&self.sensors[source].position),
            home.distance(&self.destinations[dest].position),
        ))
    }
}

/// Hop distances for `relay` between `source` and `dest`, after displacement.
pub fn link_geometry(
    world: &WorldState,
    relay: usize,
    source: usize,
    dest: usize,
) -> Result<LinkGeometry> {
    let base = world.base_geometry(relay, source, dest)?;
    Ok(effective_distances(
        base,
        world.relays[relay].displacement,
        &world.channel,
    ))
}

/// Moves a relay by `direction·δ`, saturating at `±bound`.
pub fn apply_move(
    relay: &RelayNode,
    direction: i8,
    channel: &ChannelParams,
    bound: f64,
) -> Result<RelayNode> {
    if !relay.alive {
        return Err(Error::State(format!("relay {} is dead", relay.id)));
    }
    let mut moved = *relay;
    moved.displacement =
        (relay.displacement + f64::from(direction.signum()) * channel.step_delta).clamp(-bound, bound);
    Ok(moved)
}

/// Charges one step's energy and updates the alive flag. Returns the relay
/// and the energy actually drawn.
pub fn charge_energy(
    relay: &RelayNode,
    action: Action,
    mode: Mode,
    model: &EnergyModel,
) -> (RelayNode, Energy) {
    let mut charged = *relay;
    let cost = model.step_cost(action, relay.tx_power, mode);
    charged.battery = relay.battery.saturating_sub(cost);
    charged.alive = charged.battery > Energy::ZERO;
    (charged, relay.battery.saturating_sub(charged.battery))
}

/// Builds a world from parameters: explicit scenario if one is configured,
/// random deployment otherwise. Deterministic in `(params, seed)`.
pub fn init_world(
    params: &WorldParams,
    channel: &ChannelParams,
    energy: &EnergyModel,
    seed: u64,
) -> Result<WorldState> {
    let mut problems = Vec::new();
    params.violations(&mut problems);
    if let Err(Error::Config(mut c)) = channel.validate() {
        problems.append(&mut c);
    }
    energy.violations(&mut problems);
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    if let Some(path) = &params.scenario {
        let scenario = crate::scenario::Scenario::load(path)?;
        return scenario.build(params, channel, energy, seed);
    }
    random_world(params, channel, energy, seed)
}

fn random_world(
    params: &WorldParams,
    channel: &ChannelParams,
    energy: &EnergyModel,
    seed: u64,
) -> Result<WorldState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform_point =
        |rng: &mut ChaCha8Rng| Point::new(rng.random_range(0.0..=params.width), rng.random_range(0.0..=params.height));

    let destinations: Vec<Destination> = (0..params.destinations)
        .map(|id| Destination {
            id,
            position: uniform_point(&mut rng),
        })
        .collect();

    const MAX_ATTEMPTS: usize = 100_000;
    let mut sensors = Vec::with_capacity(params.sources);
    for id in 0..params.sources {
        let destination = id % params.destinations;
        let dest_pos = destinations[destination].position;
        let mut placed = None;
        for _ in 0..MAX_ATTEMPTS {
            let p = uniform_point(&mut rng);
            let d = p.distance(&dest_pos);
            if d >= params.link_min && d <= params.link_max {
                placed = Some(p);
                break;
            }
        }
        let position = placed.ok_or_else(|| {
            Error::config(format!(
                "cannot place source {id} within [{}, {}] m of its destination inside the {}x{} m space",
                params.link_min, params.link_max, params.width, params.height
            ))
        })?;
        let tx_power = rng.random_range(params.sensor_power_min..=params.sensor_power_max);
        sensors.push(SensorNode {
            id,
            position,
            tx_power,
            destination,
        });
    }

    let capacity = Energy::from_units(energy.capacity);
    let relays: Vec<RelayNode> = (0..params.relays)
        .map(|id| {
            let primary = &sensors[id % params.sources];
            let dest = destinations[primary.destination].position;
            let fraction = rng.random_range(params.relay_fraction_min..=params.relay_fraction_max);
            RelayNode {
                id,
                home_position: primary.position.lerp(&dest, fraction),
                displacement: 0.0,
                tx_power: params.relay_power,
                battery: capacity,
                battery_capacity: capacity,
                alive: true,
            }
        })
        .collect();

    let topology = radius_topology(&sensors, &relays, &destinations, params)?;
    let world = WorldState {
        sensor_labels: (0..sensors.len()).map(source_label).collect(),
        relay_labels: (0..relays.len()).map(|i| format!("R{}", i + 1)).collect(),
        destination_labels: (0..destinations.len()).map(|i| format!("D{}", i + 1)).collect(),
        sensors,
        relays,
        destinations,
        topology,
        channel: *channel,
        mobility_bound: params.mobility_bound,
        reset_displacement: params.reset_displacement,
        reset_rng: WorldState::reset_rng_for(seed),
    };
    check_coverage(&world)?;
    Ok(world)
}

fn source_label(i: usize) -> String {
    if i < 26 {
        ((b'A' + i as u8) as char).to_string()
    } else {
        format!("S{}", i + 1)
    }
}

/// Neighbourhoods from the communication radius, with the relay degree cap
/// enforced by keeping each relay's nearest sensors.
fn radius_topology(
    sensors: &[SensorNode],
    relays: &[RelayNode],
    destinations: &[Destination],
    params: &WorldParams,
) -> Result<Topology> {
    let mut sensor_neighbors = vec![Vec::new(); sensors.len()];
    for r in relays {
        let mut near: Vec<(f64, usize)> = sensors
            .iter()
            .map(|s| (r.home_position.distance(&s.position), s.id))
            .filter(|(d, _)| *d <= params.comm_radius)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, s) in near.iter().take(params.max_sensor_degree) {
            sensor_neighbors[s].push(r.id);
        }
    }
    let dest_neighbors = destinations
        .iter()
        .map(|d| {
            relays
                .iter()
                .filter(|r| r.home_position.distance(&d.position) <= params.comm_radius)
                .map(|r| r.id)
                .collect()
        })
        .collect();
    Ok(assign(sensors, relays, sensor_neighbors, dest_neighbors))
}

/// Completes a topology with the relay → source assignment. Each relay
/// serves the reachable source with the fewest candidate relays (ties:
/// nearest, then lowest id).
pub(crate) fn assign(
    sensors: &[SensorNode],
    relays: &[RelayNode],
    mut sensor_neighbors: Vec<Vec<usize>>,
    mut dest_neighbors: Vec<Vec<usize>>,
) -> Topology {
    for n in sensor_neighbors.iter_mut().chain(dest_neighbors.iter_mut()) {
        n.sort_unstable();
        n.dedup();
    }
    let candidates = |s: &SensorNode, r: usize| {
        sensor_neighbors[s.id].binary_search(&r).is_ok()
            && dest_neighbors[s.destination].binary_search(&r).is_ok()
    };
    let candidate_count: Vec<usize> = sensors
        .iter()
        .map(|s| relays.iter().filter(|r| candidates(s, r.id)).count())
        .collect();
    let assignment = relays
        .iter()
        .map(|r| {
            sensors
                .iter()
                .filter(|s| candidates(s, r.id))
                .min_by(|a, b| {
                    candidate_count[a.id]
                        .cmp(&candidate_count[b.id])
                        .then(
                            r.home_position
                                .distance(&a.position)
                                .total_cmp(&r.home_position.distance(&b.position)),
                        )
                        .then(a.id.cmp(&b.id))
                })
                .map(|s| s.id)
        })
        .collect();
    Topology {
        sensor_neighbors,
        dest_neighbors,
        assignment,
    }
}

pub(crate) fn check_coverage(world: &WorldState) -> Result<()> {
    let uncovered: Vec<String> = world
        .sensors
        .iter()
        .filter(|s| world.topology.serving(s.id).next().is_none())
        .map(|s| {
            format!(
                "source {} has no relay reaching both it and destination {}",
                world.sensor_labels[s.id], world.destination_labels[s.destination]
            )
        })
        .collect();
    if uncovered.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(uncovered))
    }
}
