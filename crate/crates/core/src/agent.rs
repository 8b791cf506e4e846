//! Tabular Q-learning for a single relay agent.
//!
//! The agent observes `(outage, energy consumed, redundant relays)`, bins each
//! component into three levels (27 states) and chooses among three actions.

use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a relay does in one transmission phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// Step toward the destination, then forward.
    MoveCloserTx,
    /// Step away from the destination, then forward.
    MoveFartherTx,
    /// Stay put and stay silent.
    DoNothing,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::MoveCloserTx, Action::MoveFartherTx, Action::DoNothing];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            Action::MoveCloserTx => 0,
            Action::MoveFartherTx => 1,
            Action::DoNothing => 2,
        }
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    pub fn transmits(self) -> bool {
        !matches!(self, Action::DoNothing)
    }

    /// Signed unit of motion along the relay axis (+1 = toward destination).
    pub fn direction(self) -> i8 {
        match self {
            Action::MoveCloserTx => 1,
            Action::MoveFartherTx => -1,
            Action::DoNothing => 0,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::MoveCloserTx => "move_closer_tx",
            Action::MoveFartherTx => "move_farther_tx",
            Action::DoNothing => "do_nothing",
        })
    }
}

/// Continuous local view of one relay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub outage_fraction: f64,
    pub energy_consumed_fraction: f64,
    /// Other relays able to serve the same source (self excluded).
    pub redundant_relays: usize,
}

impl Observation {
    /// Observation at the start of an episode: nothing sent yet, full battery.
    pub fn initial(redundant_relays: usize) -> Self {
        Observation {
            outage_fraction: 1.0,
            energy_consumed_fraction: 0.0,
            redundant_relays,
        }
    }
}

/// Discretized observation, one of 27 states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateIndex {
    pub outage_bin: u8,
    pub energy_bin: u8,
    pub redundancy_bin: u8,
}

impl StateIndex {
    pub const COUNT: usize = 27;

    pub fn new(outage_bin: u8, energy_bin: u8, redundancy_bin: u8) -> Self {
        debug_assert!(outage_bin < 3 && energy_bin < 3 && redundancy_bin < 3);
        StateIndex {
            outage_bin,
            energy_bin,
            redundancy_bin,
        }
    }

    pub fn index(self) -> usize {
        self.outage_bin as usize * 9 + self.energy_bin as usize * 3 + self.redundancy_bin as usize
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < Self::COUNT, "state index {i} out of range");
        StateIndex::new((i / 9) as u8, (i / 3 % 3) as u8, (i % 3) as u8)
    }

    pub fn all() -> impl Iterator<Item = StateIndex> {
        (0..Self::COUNT).map(StateIndex::from_index)
    }
}

impl fmt::Display for StateIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{})",
            self.outage_bin, self.energy_bin, self.redundancy_bin
        )
    }
}

fn third_bin(name: &str, v: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!("{name} fraction {v} outside [0, 1]")));
    }
    Ok(if v < 1.0 / 3.0 {
        0
    } else if v < 2.0 / 3.0 {
        1
    } else {
        2
    })
}

/// Bins fractions into `[0, 1/3) | [1/3, 2/3) | [2/3, 1]` and the redundant
/// relay count into `0 | 1 | ≥2`.
pub fn discretize(obs: &Observation) -> Result<StateIndex> {
    Ok(StateIndex::new(
        third_bin("outage", obs.outage_fraction)?,
        third_bin("energy", obs.energy_consumed_fraction)?,
        obs.redundant_relays.min(2) as u8,
    ))
}

/// Learning constants and episode limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningParams {
    pub learning_rate: f64,
    pub discount: f64,
    /// ε = exp(−epsilon_decay · episode).
    pub epsilon_decay: f64,
    pub episodes: u32,
    pub max_steps: u64,
    /// Minimum delivered fraction for a phase to count as a success.
    pub goal_threshold: f64,
    pub reward_goal: f64,
}

impl Default for LearningParams {
    fn default() -> Self {
        LearningParams {
            learning_rate: 0.1,
            discount: 0.9,
            epsilon_decay: 0.0015,
            episodes: 100,
            max_steps: 100_000,
            goal_threshold: 0.95,
            reward_goal: 100.0,
        }
    }
}

/// Exploration rate for a zero-based episode index.
pub fn epsilon(episode: u32, params: &LearningParams) -> f64 {
    (-params.epsilon_decay * episode as f64).exp()
}

/// Whether a relay's phase met the goal.
pub fn goal_reached(delivered_fraction: f64, alive: bool, params: &LearningParams) -> bool {
    alive && delivered_fraction >= params.goal_threshold
}

/// `reward_goal` (100 by default) on success, 0 otherwise.
pub fn reward(goal_reached: bool, params: &LearningParams) -> f64 {
    if goal_reached {
        params.reward_goal
    } else {
        0.0
    }
}

/// Dense action-value table with visit counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    visits: Vec<u64>,
    pub learning_rate: f64,
    pub discount: f64,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize, learning_rate: f64, discount: f64) -> Self {
        QTable {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
            visits: vec![0; n_states * n_actions],
            learning_rate,
            discount,
        }
    }

    /// The 27 × 3 table used by a relay agent.
    pub fn for_relay(params: &LearningParams) -> Self {
        QTable::new(
            StateIndex::COUNT,
            Action::COUNT,
            params.learning_rate,
            params.discount,
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.n_actions + action] = value;
    }

    pub fn visits(&self, state: usize, action: usize) -> u64 {
        self.visits[state * self.n_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// One temporal-difference step:
    /// `Q(s,a) += α·(r + γ·max_a' Q(s',a') − Q(s,a))`. Returns the new value.
    pub fn update(&mut self, state: usize, action: usize, reward: f64, next_state: usize) -> f64 {
        let target = reward + self.discount * self.max_value(next_state);
        let i = state * self.n_actions + action;
        let q = self.values[i];
        let updated = q + self.learning_rate * (target - q);
        self.values[i] = updated;
        self.visits[i] += 1;
        updated
    }

    /// Argmax over the row; ties broken uniformly at random.
    pub fn greedy<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let row = self.row(state);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut ties = [0usize; 16];
        let mut n = 0;
        for (a, &v) in row.iter().enumerate() {
            if v == best && n < ties.len() {
                ties[n] = a;
                n += 1;
            }
        }
        if n == 1 {
            ties[0]
        } else {
            ties[rng.random_range(0..n)]
        }
    }

    /// ε-greedy choice.
    pub fn select<R: Rng + ?Sized>(&self, state: usize, epsilon: f64, rng: &mut R) -> usize {
        if rng.random::<f64>() < epsilon {
            rng.random_range(0..self.n_actions)
        } else {
            self.greedy(state, rng)
        }
    }

    /// Writes the relay table as text, one labelled row per state.
    pub fn dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "{:<10}", "state")?;
        for a in 0..self.n_actions {
            if self.n_actions == Action::COUNT {
                write!(out, " {:>22}", Action::from_index(a).to_string())?;
            } else {
                write!(out, " {:>22}", format!("a{a}"))?;
            }
        }
        writeln!(out)?;
        for s in 0..self.n_states {
            if self.n_states == StateIndex::COUNT {
                write!(out, "{:<10}", StateIndex::from_index(s).to_string())?;
            } else {
                write!(out, "{:<10}", s)?;
            }
            for &v in self.row(s) {
                write!(out, " {:>22}", v)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// ε-greedy action for a relay state.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    state: StateIndex,
    epsilon: f64,
    rng: &mut R,
) -> Action {
    Action::from_index(q.select(state.index(), epsilon, rng))
}

/// Applies one update to a relay table.
pub fn update(q: &mut QTable, state: StateIndex, action: Action, reward: f64, next: StateIndex) {
    q.update(state.index(), action.index(), reward, next.index());
}
