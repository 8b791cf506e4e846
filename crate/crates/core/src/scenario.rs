//! Explicit deployments loaded from TOML.
//!
//! ```toml
//! [[destination]]
//! name = "D"
//! position = [70.0, 40.0]
//! relays = ["R1", "R2"]          # optional; defaults to comm_radius rule
//!
//! [[sensor]]
//! name = "A"
//! position = [15.0, 45.0]
//! power = 0.2                    # P_I, watts
//! destination = "D"
//! relays = ["R1"]                # optional neighbourhood N_A
//!
//! [[relay]]
//! name = "R1"
//! position = [42.0, 45.0]        # home position
//! power = 0.3                    # optional; defaults to environment.relay_power
//! ```

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::world::{
    assign, check_coverage, Destination, Energy, EnergyModel, Point, RelayNode, SensorNode,
    WorldParams, WorldState,
};

const THREE_SOURCES: &str = include_str!("../scenarios/three_sources.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(rename = "sensor", default)]
    pub sensors: Vec<ScenarioSensor>,
    #[serde(rename = "relay", default)]
    pub relays: Vec<ScenarioRelay>,
    #[serde(rename = "destination", default)]
    pub destinations: Vec<ScenarioDestination>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSensor {
    pub name: String,
    pub position: [f64; 2],
    pub power: f64,
    pub destination: String,
    pub relays: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRelay {
    pub name: String,
    pub position: [f64; 2],
    pub power: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDestination {
    pub name: String,
    pub position: [f64; 2],
    pub relays: Option<Vec<String>>,
}

fn line_of(text: &str, offset: usize) -> u64 {
    text[..offset.min(text.len())].matches('\n').count() as u64 + 1
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scenario::parse(&text)
    }

    /// Three sources, three relays and one server: A via {R1, R2}, B via
    /// {R2}, C via {R1, R2, R3}; the server hears all three relays.
    pub fn three_sources() -> Scenario {
        Scenario::parse(THREE_SOURCES).expect("bundled scenario parses")
    }

    pub fn build(
        &self,
        params: &WorldParams,
        channel: &ChannelParams,
        energy: &EnergyModel,
        seed: u64,
    ) -> Result<WorldState> {
        let mut problems = Vec::new();
        if self.sensors.is_empty() {
            problems.push("scenario has no [[sensor]] entries".to_string());
        }
        if self.relays.is_empty() {
            problems.push("scenario has no [[relay]] entries".to_string());
        }
        if self.destinations.is_empty() {
            problems.push("scenario has no [[destination]] entries".to_string());
        }

        let index = |kind: &str, names: Vec<&str>, problems: &mut Vec<String>| {
            let mut map = HashMap::new();
            for (i, n) in names.into_iter().enumerate() {
                if map.insert(n.to_string(), i).is_some() {
                    problems.push(format!("duplicate {kind} name `{n}`"));
                }
            }
            map
        };
        let relay_ids = index(
            "relay",
            self.relays.iter().map(|r| r.name.as_str()).collect(),
            &mut problems,
        );
        let dest_ids = index(
            "destination",
            self.destinations.iter().map(|d| d.name.as_str()).collect(),
            &mut problems,
        );
        index(
            "sensor",
            self.sensors.iter().map(|s| s.name.as_str()).collect(),
            &mut problems,
        );

        let resolve = |names: &[String], owner: &str, problems: &mut Vec<String>| -> Vec<usize> {
            names
                .iter()
                .filter_map(|n| match relay_ids.get(n) {
                    Some(&i) => Some(i),
                    None => {
                        problems.push(format!("{owner} lists unknown relay `{n}`"));
                        None
                    }
                })
                .collect()
        };

        let mut sensors = Vec::new();
        let mut sensor_neighbors = Vec::new();
        for (id, s) in self.sensors.iter().enumerate() {
            if !(s.power.is_finite() && s.power > 0.0) {
                problems.push(format!("sensor `{}` power must be > 0", s.name));
            }
            let Some(&destination) = dest_ids.get(&s.destination) else {
                problems.push(format!(
                    "sensor `{}` routes to unknown destination `{}`",
                    s.name, s.destination
                ));
                continue;
            };
            let position = Point::new(s.position[0], s.position[1]);
            let neighbors = match &s.relays {
                Some(names) => resolve(names, &format!("sensor `{}`", s.name), &mut problems),
                None => self
                    .relays
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| {
                        Point::new(r.position[0], r.position[1]).distance(&position)
                            <= params.comm_radius
                    })
                    .map(|(i, _)| i)
                    .collect(),
            };
            sensor_neighbors.push(neighbors);
            sensors.push(SensorNode {
                id,
                position,
                tx_power: s.power,
                destination,
            });
        }

        let destinations: Vec<Destination> = self
            .destinations
            .iter()
            .enumerate()
            .map(|(id, d)| Destination {
                id,
                position: Point::new(d.position[0], d.position[1]),
            })
            .collect();
        let dest_neighbors: Vec<Vec<usize>> = self
            .destinations
            .iter()
            .map(|d| match &d.relays {
                Some(names) => resolve(names, &format!("destination `{}`", d.name), &mut problems),
                None => self
                    .relays
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| {
                        Point::new(r.position[0], r.position[1])
                            .distance(&Point::new(d.position[0], d.position[1]))
                            <= params.comm_radius
                    })
                    .map(|(i, _)| i)
                    .collect(),
            })
            .collect();

        let capacity = Energy::from_units(energy.capacity);
        let relays: Vec<RelayNode> = self
            .relays
            .iter()
            .enumerate()
            .map(|(id, r)| {
                let tx_power = r.power.unwrap_or(params.relay_power);
                if !(tx_power.is_finite() && tx_power > 0.0) {
                    problems.push(format!("relay `{}` power must be > 0", r.name));
                }
                RelayNode {
                    id,
                    home_position: Point::new(r.position[0], r.position[1]),
                    displacement: 0.0,
                    tx_power,
                    battery: capacity,
                    battery_capacity: capacity,
                    alive: true,
                }
            })
            .collect();

        for r in &relays {
            let degree = sensor_neighbors
                .iter()
                .filter(|n: &&Vec<usize>| n.contains(&r.id))
                .count();
            if degree > params.max_sensor_degree {
                problems.push(format!(
                    "relay `{}` neighbours {degree} sensors, more than max_sensor_degree = {}",
                    self.relays[r.id].name, params.max_sensor_degree
                ));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }

        let topology = assign(&sensors, &relays, sensor_neighbors, dest_neighbors);
        let world = WorldState {
            sensor_labels: self.sensors.iter().map(|s| s.name.clone()).collect(),
            relay_labels: self.relays.iter().map(|r| r.name.clone()).collect(),
            destination_labels: self.destinations.iter().map(|d| d.name.clone()).collect(),
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
}
