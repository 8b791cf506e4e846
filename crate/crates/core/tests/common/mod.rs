//! Property checks shared by the invariant tests and the acceptance report.
#![allow(dead_code)]

pub mod oracle;

use fogrelay::agent::{Action, QTable, StateIndex};
use fogrelay::channel::{outage, ChannelParams, LinkGeometry};
use fogrelay::config::SimConfig;
use fogrelay::coordination::{receive_feedback, FeedbackMessage, Mode, SourceReport};
use fogrelay::engine::{Simulation, Termination};
use fogrelay::world::{apply_move, charge_energy, Energy, EnergyModel, Point, RelayNode, Topology};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};

pub const CASES: u32 = 10_000;

pub fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    TestRunner::new_with_rng(config, rng)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

/// Q-values stay in [0, 1000] and each update touches one cell.
pub fn q_value_bound(cases: u32) -> Result<(), String> {
    let step = (0..27usize, 0..3usize, any::<bool>(), 0..27usize);
    run(cases, prop::collection::vec(step, 1..200), |steps| {
        let mut q = QTable::for_relay(&Default::default());
        for (s, a, goal, next) in steps {
            let before = q.values().to_vec();
            q.update(s, a, if goal { 100.0 } else { 0.0 }, next);
            for (i, (&b, &v)) in before.iter().zip(q.values()).enumerate() {
                prop_assert!((0.0..=1000.0).contains(&v), "Q = {v}");
                if i != s * 3 + a {
                    prop_assert_eq!(b, v);
                }
            }
        }
        Ok(())
    })
}

fn relay(battery: f64, displacement: f64) -> RelayNode {
    RelayNode {
        id: 0,
        home_position: Point::new(0.0, 0.0),
        displacement,
        tx_power: 0.3,
        battery: Energy::from_units(battery),
        battery_capacity: Energy::from_units(battery),
        alive: battery > 0.0,
    }
}

/// Battery never negative, alive iff charged, ledger exact.
pub fn battery_nonnegative(cases: u32) -> Result<(), String> {
    let s = (0.0..50.0f64, any::<bool>(), prop::collection::vec(0..3usize, 1..300));
    run(cases, s, |(capacity, central, actions)| {
        let mode = if central { Mode::Centralized } else { Mode::Decentralized };
        let model = EnergyModel::default();
        let ch = ChannelParams::default();
        let mut r = relay(capacity, 0.0);
        let mut drawn = Energy::ZERO;
        for a in actions {
            if !r.alive {
                break;
            }
            let action = Action::from_index(a);
            if action.transmits() {
                r = apply_move(&r, action.direction(), &ch, 30.0).unwrap();
            }
            let (next, e) = charge_energy(&r, action, mode, &model);
            r = next;
            drawn += e;
            prop_assert!(r.battery <= r.battery_capacity);
            prop_assert_eq!(r.alive, r.battery > Energy::ZERO);
        }
        prop_assert_eq!(drawn, r.battery_capacity.saturating_sub(r.battery));
        Ok(())
    })
}

/// Displacement never leaves [−30, 30].
pub fn displacement_bound(cases: u32) -> Result<(), String> {
    let s = (-30.0..=30.0f64, prop::collection::vec(-1i8..=1, 1..400));
    run(cases, s, |(start, moves)| {
        let ch = ChannelParams::default();
        let mut r = relay(1e6, start);
        for d in moves {
            r = apply_move(&r, d, &ch, 30.0).unwrap();
            prop_assert!((-30.0..=30.0).contains(&r.displacement), "{}", r.displacement);
        }
        Ok(())
    })
}

/// Every episode ends for exactly one reason, consistent with the final state.
pub fn termination_trichotomy(cases: u32) -> Result<(), String> {
    let s = (
        any::<u64>(),
        1..=5usize,
        any::<bool>(),
        1..300u64,
        1.0..400.0f64,
    );
    run(cases, s, |(seed, relays, central, max_steps, capacity)| {
        let mut cfg = SimConfig::default();
        cfg.environment.relays = relays;
        cfg.agent.max_steps = max_steps;
        cfg.energy.capacity = capacity;
        let mode = if central { Mode::Centralized } else { Mode::Decentralized };
        let mut sim = Simulation::new(&cfg, mode, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let rec = sim.run_episode().map_err(|e| TestCaseError::fail(e.to_string()))?;
        let sources = sim.world.sensors.len();
        let dead = (0..sources).any(|s| sim.world.alive_serving(s).next().is_none());
        prop_assert!(rec.steps >= 1 && rec.steps <= max_steps);
        match rec.termination {
            Termination::Goal => prop_assert!(rec.delivered.iter().all(|&d| d >= 0.95)),
            Termination::Death => prop_assert!(dead),
            Termination::MaxStep => {
                prop_assert_eq!(rec.steps, max_steps);
                prop_assert!(!dead);
            }
        }
        Ok(())
    })
}

/// Feedback about a source a relay cannot serve is never used.
pub fn discard_soundness(cases: u32) -> Result<(), String> {
    let s = (1..=3usize, 1..=4usize).prop_flat_map(|(sources, relays)| {
        (
            prop::collection::vec(prop::collection::vec(any::<bool>(), relays), sources),
            prop::collection::vec(prop::option::of(0..sources), relays),
            prop::collection::vec(prop::collection::vec(any::<bool>(), relays), sources),
            prop::collection::vec(0.0..=1.0f64, sources),
        )
    });
    run(cases, s, |(membership, assignment, potential, delivered)| {
        let relays = assignment.len();
        let sensor_neighbors: Vec<Vec<usize>> = membership
            .iter()
            .map(|m| (0..relays).filter(|&r| m[r]).collect())
            .collect();
        let topology = Topology {
            sensor_neighbors: sensor_neighbors.clone(),
            dest_neighbors: vec![(0..relays).collect()],
            assignment: assignment.clone(),
        };
        let msg = FeedbackMessage {
            destination: 0,
            per_source: potential
                .iter()
                .enumerate()
                .map(|(s, p)| SourceReport {
                    source: s,
                    delivered_fraction: delivered[s],
                    potential_relays: (0..relays).filter(|&r| p[r]).collect(),
                })
                .collect(),
        };
        for (r, &assigned) in assignment.iter().enumerate() {
            let got = receive_feedback(r, assigned, &msg, &topology);
            match assigned {
                Some(s) if sensor_neighbors[s].contains(&r) => {
                    let f = got.expect("servable source must be heard");
                    let others = msg.per_source[s].potential_relays.iter().filter(|&&x| x != r).count();
                    prop_assert_eq!(f.redundant_relays, others);
                    prop_assert_eq!(f.delivered_fraction, delivered[s]);
                }
                _ => prop_assert!(got.is_none()),
            }
        }
        Ok(())
    })
}

/// Clamped outage lies in [0, 1] for any positive inputs.
pub fn clamped_outage(cases: u32) -> Result<(), String> {
    let s = (1e-6..10.0f64, 1e-6..10.0f64, 0.1..1000.0f64, 0.1..1000.0f64);
    run(cases, s, |(pi, pr, di, ds)| {
        let o = outage(pi, pr, LinkGeometry::new(di, ds), &ChannelParams::default())
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(o.raw.is_finite());
        prop_assert!((0.0..=1.0).contains(&o.probability));
        prop_assert_eq!(o.probability, o.raw.clamp(0.0, 1.0));
        Ok(())
    })
}

pub type Property = fn(u32) -> Result<(), String>;

pub const INVARIANTS: [(&str, Property); 6] = [
    ("Q-value bound [0, 1000]", q_value_bound),
    ("battery >= 0", battery_nonnegative),
    ("displacement in [-30, 30]", displacement_bound),
    ("termination trichotomy", termination_trichotomy),
    ("discard soundness", discard_soundness),
    ("clamped outage in [0, 1]", clamped_outage),
];

pub fn state(i: usize) -> StateIndex {
    StateIndex::from_index(i)
}
