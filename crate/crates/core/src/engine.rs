//! Step, episode, run and batch loops.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{
    discretize, epsilon, goal_reached, reward, select_action, update, Action, LearningParams,
    Observation, QTable, StateIndex,
};
use crate::config::{CoordinationParams, SimConfig};
use crate::coordination::{
    build_feedback, centralized_policy, centralized_select, delivered_by_source, receive_feedback,
    ControllerState, FeedbackFragment, Mode,
};
use crate::error::{Error, Result};
use crate::world::{apply_move, charge_energy, init_world, Energy, EnergyModel, WorldState};

const POLICY_STREAM: u64 = 2;
const PACKET_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Every source met the delivery threshold in the same step.
    Goal,
    /// Some source lost its last live relay.
    Death,
    MaxStep,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Goal => "goal",
            Termination::Death => "death",
            Termination::MaxStep => "max_step",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Termination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "goal" => Ok(Termination::Goal),
            "death" => Ok(Termination::Death),
            "max_step" => Ok(Termination::MaxStep),
            other => Err(Error::Domain(format!("unknown termination `{other}`"))),
        }
    }
}

/// What one live relay did in a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayStep {
    pub relay: usize,
    pub state: StateIndex,
    pub action: Action,
    /// Outage fraction the relay observed (1.0 when it stayed silent).
    pub outage: f64,
    pub energy_drawn: Energy,
    pub next_state: StateIndex,
    pub reward: f64,
    pub goal: bool,
    pub updated: bool,
    pub alive_after: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Relays alive at the start of the step, ascending id.
    pub relays: Vec<RelayStep>,
    /// Per source: best delivered fraction among its forwarding relays.
    pub delivered: Vec<f64>,
    pub source_goal: Vec<bool>,
    /// Outage evaluations whose raw value had to be clamped.
    pub clamped: u32,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelayEpisodeStats {
    pub reward_sum: f64,
    pub consumed_fraction: f64,
    /// Indexed by [`Action::index`].
    pub actions: [u64; 3],
    pub steps_alive: u64,
    pub goal_steps: u64,
    pub q_updates: u64,
}

impl RelayEpisodeStats {
    /// Whether the relay transmitted at least once.
    pub fn active(&self) -> bool {
        self.actions[Action::MoveCloserTx.index()] + self.actions[Action::MoveFartherTx.index()] > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based.
    pub episode: u32,
    pub termination: Termination,
    pub steps: u64,
    pub epsilon: f64,
    pub relays: Vec<RelayEpisodeStats>,
    /// Per source, at termination. On death, sources left without a live
    /// relay count as 0.
    pub delivered: Vec<f64>,
    pub clamped_outages: u64,
    pub wall_ms: f64,
}

impl EpisodeRecord {
    pub fn reward_sum(&self) -> f64 {
        self.relays.iter().map(|r| r.reward_sum).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub mode: Mode,
    pub relay_count: usize,
    /// Index within the batch; 0 for a standalone run.
    pub run: u32,
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub config_fingerprint: String,
    /// Ordered by (mode, relay_count, run).
    pub runs: Vec<RunResult>,
}

/// One run's mutable state: world, agents and controller.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub world: WorldState,
    pub agents: Vec<QTable>,
    pub controller: ControllerState,
    pub mode: Mode,
    pub learning: LearningParams,
    pub energy: EnergyModel,
    pub coordination: CoordinationParams,
    observations: Vec<Observation>,
    policy_rng: ChaCha8Rng,
    packet_rng: ChaCha8Rng,
    fixed_action: Option<Action>,
    epsilon_override: Option<f64>,
    episodes_run: u32,
    steps: u64,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Simulation {
    pub fn new(config: &SimConfig, mode: Mode, seed: u64) -> Result<Simulation> {
        let channel = config.channel_params();
        let world = init_world(&config.environment, &channel, &config.energy, seed)?;
        Simulation::from_world(world, config, mode, seed)
    }

    pub fn from_world(
        world: WorldState,
        config: &SimConfig,
        mode: Mode,
        seed: u64,
    ) -> Result<Simulation> {
        config.validate()?;
        let learning = config.learning_params();
        let n = world.relays.len();
        let mut sim = Simulation {
            agents: vec![QTable::for_relay(&learning); n],
            controller: ControllerState::new(
                n,
                world.sensors.len(),
                config.coordination.history_weight,
            ),
            observations: vec![Observation::initial(0); n],
            world,
            mode,
            learning,
            energy: config.energy,
            coordination: config.coordination.clone(),
            policy_rng: stream(seed, POLICY_STREAM),
            packet_rng: stream(seed, PACKET_STREAM),
            fixed_action: None,
            epsilon_override: None,
            episodes_run: 0,
            steps: 0,
        };
        sim.reset_observations();
        Ok(sim)
    }

    /// Every live relay takes `action` and nothing learns. `None` restores
    /// the normal policy.
    pub fn set_fixed_action(&mut self, action: Option<Action>) {
        self.fixed_action = action;
    }

    /// Replaces the per-episode ε schedule.
    pub fn set_epsilon(&mut self, eps: Option<f64>) {
        self.epsilon_override = eps;
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn redundancy(&self, relay: usize) -> usize {
        match self.world.topology.assignment[relay] {
            Some(s) if self.world.topology.is_sensor_neighbor(s, relay) => self
                .world
                .potential_relays(s)
                .iter()
                .filter(|&&r| r != relay)
                .count(),
            _ => 0,
        }
    }

    fn reset_observations(&mut self) {
        for r in 0..self.world.relays.len() {
            self.observations[r] = Observation::initial(self.redundancy(r));
        }
        self.steps = 0;
    }

    /// Refills batteries, redraws displacements and resets observations.
    /// Q-tables and controller memory persist.
    pub fn reset(&mut self) {
        self.world.reset();
        self.reset_observations();
    }

    fn source_dead(&self) -> bool {
        (0..self.world.sensors.len()).any(|s| self.world.alive_serving(s).next().is_none())
    }

    fn choose_actions(&mut self, alive: &[usize], eps: f64, states: &[StateIndex]) -> Result<Vec<Action>> {
        if let Some(a) = self.fixed_action {
            return Ok(vec![a; alive.len()]);
        }
        match self.mode {
            Mode::Decentralized => Ok(alive
                .iter()
                .zip(states)
                .map(|(&r, &s)| select_action(&self.agents[r], s, eps, &mut self.policy_rng))
                .collect()),
            Mode::Centralized => {
                let mut actions = vec![Action::DoNothing; alive.len()];
                for source in 0..self.world.sensors.len() {
                    let candidates: Vec<usize> = self.world.alive_serving(source).collect();
                    let world = &self.world;
                    let chosen = centralized_select(&mut self.controller, source, &candidates, |r| {
                        world.outage(r, source).map(|o| o.delivered()).unwrap_or(0.0)
                    });
                    if let Some(r) = chosen {
                        let i = alive.binary_search(&r).expect("selected relay is alive");
                        actions[i] = centralized_policy(&self.world, r, source)?;
                    }
                }
                Ok(actions)
            }
        }
    }

    /// One transmission phase for every live relay.
    pub fn step(&mut self, eps: f64) -> Result<StepOutcome> {
        let n = self.world.relays.len();
        let alive: Vec<usize> = (0..n).filter(|&r| self.world.relays[r].alive).collect();
        let states = alive
            .iter()
            .map(|&r| discretize(&self.observations[r]))
            .collect::<Result<Vec<_>>>()?;
        let actions = self.choose_actions(&alive, eps, &states)?;

        let channel = self.world.channel;
        let bound = self.world.mobility_bound;
        let mut per_relay: Vec<Option<f64>> = vec![None; n];
        let mut outages = vec![1.0; alive.len()];
        let mut drawn = vec![Energy::ZERO; alive.len()];
        let mut clamped = 0;
        for (i, (&r, &action)) in alive.iter().zip(&actions).enumerate() {
            if action.transmits() {
                let moved = apply_move(&self.world.relays[r], action.direction(), &channel, bound)?;
                self.world.relays[r] = moved;
                if let Some(source) = self.world.topology.assignment[r] {
                    let o = self.world.outage(r, source)?;
                    clamped += u32::from(o.clamped());
                    let delivered = if self.coordination.stochastic_packets {
                        let m = self.coordination.packets_per_phase;
                        let bin = Binomial::new(u64::from(m), o.delivered())
                            .map_err(|e| Error::Domain(e.to_string()))?;
                        bin.sample(&mut self.packet_rng) as f64 / f64::from(m)
                    } else {
                        o.delivered()
                    };
                    per_relay[r] = Some(delivered);
                    outages[i] = 1.0 - delivered;
                }
            }
            let (charged, energy) = charge_energy(&self.world.relays[r], action, self.mode, &self.energy);
            self.world.relays[r] = charged;
            drawn[i] = energy;
        }

        let delivered = delivered_by_source(&self.world, &per_relay);
        let mut fragments: Vec<Option<FeedbackFragment>> = vec![None; n];
        for dest in 0..self.world.destinations.len() {
            let msg = build_feedback(dest, &per_relay, &self.world);
            for &r in msg.recipients(&self.world) {
                let assigned = self.world.topology.assignment[r];
                if let Some(f) = receive_feedback(r, assigned, &msg, &self.world.topology) {
                    fragments[r] = Some(f);
                }
            }
        }

        let learn = self.mode == Mode::Decentralized && self.fixed_action.is_none();
        let mut relays = Vec::with_capacity(alive.len());
        for (i, &r) in alive.iter().enumerate() {
            let node = &self.world.relays[r];
            let obs = &mut self.observations[r];
            obs.outage_fraction = outages[i];
            obs.energy_consumed_fraction = node.consumed_fraction();
            if let Some(f) = fragments[r] {
                obs.redundant_relays = f.redundant_relays;
            }
            let next_state = discretize(obs)?;
            let goal = fragments[r]
                .map(|f| goal_reached(f.delivered_fraction, node.alive, &self.learning))
                .unwrap_or(false);
            let rew = reward(goal, &self.learning);
            if learn {
                update(&mut self.agents[r], states[i], actions[i], rew, next_state);
            }
            relays.push(RelayStep {
                relay: r,
                state: states[i],
                action: actions[i],
                outage: outages[i],
                energy_drawn: drawn[i],
                next_state,
                reward: rew,
                goal,
                updated: learn,
                alive_after: node.alive,
            });
        }

        if self.mode == Mode::Centralized {
            for source in 0..self.world.sensors.len() {
                if let Some(r) = self.controller.current_active[source] {
                    if let Some(d) = per_relay[r] {
                        self.controller.record(r, d);
                    }
                }
            }
        }

        self.steps += 1;
        let source_goal: Vec<bool> = delivered
            .iter()
            .map(|&d| d >= self.learning.goal_threshold)
            .collect();
        let termination = if source_goal.iter().all(|&g| g) {
            Some(Termination::Goal)
        } else if self.source_dead() {
            Some(Termination::Death)
        } else if self.steps >= self.learning.max_steps {
            Some(Termination::MaxStep)
        } else {
            None
        };
        Ok(StepOutcome {
            relays,
            delivered,
            source_goal,
            clamped,
            termination,
        })
    }

    /// Resets the world and steps until a terminal condition.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let start = Instant::now();
        let index = self.episodes_run;
        let eps = self.epsilon_override.unwrap_or_else(|| epsilon(index, &self.learning));
        self.reset();
        let n = self.world.relays.len();
        let mut stats = vec![RelayEpisodeStats::default(); n];
        let mut clamped = 0u64;
        let (termination, mut delivered) = loop {
            let out = self.step(eps)?;
            clamped += u64::from(out.clamped);
            for rs in &out.relays {
                let s = &mut stats[rs.relay];
                s.reward_sum += rs.reward;
                s.actions[rs.action.index()] += 1;
                s.steps_alive += 1;
                s.goal_steps += u64::from(rs.goal);
                s.q_updates += u64::from(rs.updated);
            }
            if let Some(t) = out.termination {
                break (t, out.delivered);
            }
        };
        if termination == Termination::Death {
            for (s, d) in delivered.iter_mut().enumerate() {
                if self.world.alive_serving(s).next().is_none() {
                    *d = 0.0;
                }
            }
        }
        for (s, relay) in stats.iter_mut().zip(&self.world.relays) {
            s.consumed_fraction = relay.consumed_fraction();
        }
        self.episodes_run += 1;
        Ok(EpisodeRecord {
            episode: index + 1,
            termination,
            steps: self.steps,
            epsilon: eps,
            relays: stats,
            delivered,
            clamped_outages: clamped,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }
}

/// `config.agent.episodes` episodes on one world, sharing agents throughout.
pub fn run_experiment(config: &SimConfig, seed: u64, mode: Mode) -> Result<RunResult> {
    run_experiment_with(config, seed, mode).map(|(r, _)| r)
}

/// Like [`run_experiment`], also returning the trained simulation.
pub fn run_experiment_with(
    config: &SimConfig,
    seed: u64,
    mode: Mode,
) -> Result<(RunResult, Simulation)> {
    let start = Instant::now();
    let mut sim = Simulation::new(config, mode, seed)?;
    let episodes = (0..config.agent.episodes)
        .map(|_| sim.run_episode())
        .collect::<Result<Vec<_>>>()?;
    let result = RunResult {
        mode,
        relay_count: config.environment.relays,
        run: 0,
        seed,
        episodes,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((result, sim))
}

/// One cell of a batch sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub mode: Mode,
    pub relay_count: usize,
    pub run: u32,
    pub seed: u64,
}

/// Sweep cells in output order: mode, then relay count, then run.
pub fn batch_jobs(base_seed: u64, runs: u32, modes: &[Mode], relay_counts: &[usize]) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &mode in modes {
        for &relay_count in relay_counts {
            for run in 0..runs {
                jobs.push(Job {
                    mode,
                    relay_count,
                    run,
                    seed: base_seed.wrapping_add(u64::from(run)),
                });
            }
        }
    }
    jobs
}

pub fn run_job(config: &SimConfig, job: Job) -> Result<RunResult> {
    let mut cfg = config.clone();
    cfg.environment.relays = job.relay_count;
    cfg.experiment.mode = job.mode;
    let mut r = run_experiment(&cfg, job.seed, job.mode)?;
    r.run = job.run;
    Ok(r)
}

/// Runs every cell, in parallel across `workers` threads (0 = all cores).
/// `progress` is called once per finished run with (done, total, result).
pub fn run_batch(
    config: &SimConfig,
    base_seed: u64,
    runs: u32,
    modes: &[Mode],
    relay_counts: &[usize],
    workers: usize,
    progress: &(dyn Fn(usize, usize, &RunResult) + Sync),
) -> Result<BatchResult> {
    if runs == 0 {
        return Err(Error::config("`experiment.runs` must be >= 1"));
    }
    let jobs = batch_jobs(base_seed, runs, modes, relay_counts);
    let total = jobs.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<RunResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|&job| {
                let r = run_job(config, job)?;
                let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                progress(k, total, &r);
                Ok(r)
            })
            .collect()
    });
    Ok(BatchResult {
        config_fingerprint: config.fingerprint(),
        runs: results.into_iter().collect::<Result<Vec<_>>>()?,
    })
}
