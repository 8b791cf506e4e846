//! Layered configuration: built-in defaults ← TOML file ← command-line overrides.
//!
//! The file format is TOML with one table per concern. Every key is
//! optional; see `fogrelay.example.toml` at the repository root for the full
//! list with defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::LearningParams;
use crate::channel::ChannelParams;
use crate::coordination::Mode;
use crate::error::{Error, Result};
use crate::world::{EnergyModel, WorldParams};

/// Name of the resolved-config file written next to every CSV output.
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub noise_power: f64,
    pub snr_threshold: f64,
    pub sigma: f64,
    pub delta: f64,
    pub distance_floor: f64,
    pub delta_mode: crate::channel::DeltaMode,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection::from(ChannelParams::default())
    }
}

impl From<ChannelParams> for ChannelSection {
    fn from(c: ChannelParams) -> Self {
        ChannelSection {
            noise_power: c.noise_power,
            snr_threshold: c.snr_threshold,
            sigma: c.path_loss_exponent,
            delta: c.step_delta,
            distance_floor: c.distance_floor,
            delta_mode: c.delta_mode,
        }
    }
}

impl From<&ChannelSection> for ChannelParams {
    fn from(c: &ChannelSection) -> Self {
        ChannelParams {
            noise_power: c.noise_power,
            snr_threshold: c.snr_threshold,
            path_loss_exponent: c.sigma,
            step_delta: c.delta,
            distance_floor: c.distance_floor,
            delta_mode: c.delta_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_decay: f64,
    pub episodes: u32,
    pub max_steps: u64,
    pub goal_threshold: f64,
    pub reward_goal: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        let p = LearningParams::default();
        AgentSection {
            alpha: p.learning_rate,
            gamma: p.discount,
            epsilon_decay: p.epsilon_decay,
            episodes: p.episodes,
            max_steps: p.max_steps,
            goal_threshold: p.goal_threshold,
            reward_goal: p.reward_goal,
        }
    }
}

impl From<&AgentSection> for LearningParams {
    fn from(a: &AgentSection) -> Self {
        LearningParams {
            learning_rate: a.alpha,
            discount: a.gamma,
            epsilon_decay: a.epsilon_decay,
            episodes: a.episodes,
            max_steps: a.max_steps,
            goal_threshold: a.goal_threshold,
            reward_goal: a.reward_goal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoordinationParams {
    /// Weight of the newest phase in the controller's delivery average.
    pub history_weight: f64,
    /// Sample per-phase delivery from `packets_per_phase` Bernoulli packets
    /// instead of using 1 − P_out directly.
    pub stochastic_packets: bool,
    pub packets_per_phase: u32,
}

impl Default for CoordinationParams {
    fn default() -> Self {
        CoordinationParams {
            history_weight: 0.3,
            stochastic_packets: false,
            packets_per_phase: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    pub seed: u64,
    pub mode: Mode,
    pub runs: u32,
    pub relay_counts: Vec<usize>,
    /// Episodes at the end of each run pooled into summaries.
    pub last_k: u32,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            seed: 0,
            mode: Mode::Decentralized,
            runs: 50,
            relay_counts: vec![1, 2, 3, 4, 5],
            last_k: 40,
        }
    }
}

/// Fully resolved simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub environment: WorldParams,
    pub channel: ChannelSection,
    pub agent: AgentSection,
    pub energy: EnergyModel,
    pub coordination: CoordinationParams,
    pub experiment: ExperimentParams,
}

/// Command-line layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<u32>,
    pub mode: Option<Mode>,
    pub relays: Option<usize>,
    pub episodes: Option<u32>,
    pub max_steps: Option<u64>,
}

impl Overrides {
    /// Reduced protocol for quick checks: 2 runs of 10 episodes capped at
    /// 10 000 steps. Explicit flags still win.
    pub fn smoke(mut self) -> Self {
        self.runs.get_or_insert(2);
        self.episodes.get_or_insert(10);
        self.max_steps.get_or_insert(10_000);
        self
    }
}

impl SimConfig {
    pub fn channel_params(&self) -> ChannelParams {
        ChannelParams::from(&self.channel)
    }

    pub fn learning_params(&self) -> LearningParams {
        LearningParams::from(&self.agent)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.experiment.seed = v;
        }
        if let Some(v) = o.runs {
            self.experiment.runs = v;
        }
        if let Some(v) = o.mode {
            self.experiment.mode = v;
        }
        if let Some(v) = o.relays {
            self.environment.relays = v;
        }
        if let Some(v) = o.episodes {
            self.agent.episodes = v;
            // Fewer episodes than the pooling window: pool them all.
            self.experiment.last_k = self.experiment.last_k.min(v);
        }
        if let Some(v) = o.max_steps {
            self.agent.max_steps = v;
        }
    }

    /// Every out-of-range value, each message naming its key.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.environment.violations(&mut out);
        if let Err(Error::Config(c)) = self.channel_params().validate() {
            out.extend(c.into_iter().map(|m| m.replacen('`', "`channel.", 1)));
        }
        self.energy.violations(&mut out);

        let a = &self.agent;
        if !(a.alpha > 0.0 && a.alpha <= 1.0) {
            out.push(format!("`agent.alpha` must lie in (0, 1] (got {})", a.alpha));
        }
        if !(0.0..=1.0).contains(&a.gamma) {
            out.push(format!("`agent.gamma` must lie in [0, 1] (got {})", a.gamma));
        }
        if !(a.epsilon_decay.is_finite() && a.epsilon_decay >= 0.0) {
            out.push(format!(
                "`agent.epsilon_decay` must be >= 0 (got {})",
                a.epsilon_decay
            ));
        }
        if a.episodes == 0 {
            out.push("`agent.episodes` must be >= 1".into());
        }
        if a.max_steps == 0 {
            out.push("`agent.max_steps` must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&a.goal_threshold) {
            out.push(format!(
                "`agent.goal_threshold` must lie in [0, 1] (got {})",
                a.goal_threshold
            ));
        }
        if !(a.reward_goal.is_finite() && a.reward_goal >= 0.0) {
            out.push(format!(
                "`agent.reward_goal` must be >= 0 (got {})",
                a.reward_goal
            ));
        }

        let c = &self.coordination;
        if !(c.history_weight > 0.0 && c.history_weight <= 1.0) {
            out.push(format!(
                "`coordination.history_weight` must lie in (0, 1] (got {})",
                c.history_weight
            ));
        }
        if c.packets_per_phase == 0 {
            out.push("`coordination.packets_per_phase` must be >= 1".into());
        }

        let e = &self.experiment;
        if e.runs == 0 {
            out.push("`experiment.runs` must be >= 1".into());
        }
        if e.relay_counts.is_empty() || e.relay_counts.contains(&0) {
            out.push("`experiment.relay_counts` must be a non-empty list of positive counts".into());
        }
        if e.last_k == 0 || e.last_k > a.episodes {
            out.push(format!(
                "`experiment.last_k` must lie in [1, agent.episodes = {}] (got {})",
                a.episodes, e.last_k
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Parses TOML text on top of the defaults. Unknown keys and type errors
    /// are reported before range checks.
    pub fn from_toml(text: &str) -> Result<SimConfig> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start].matches('\n').count() as u64 + 1)
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        let unknown = unknown_keys(&table);
        if !unknown.is_empty() {
            return Err(Error::Config(
                unknown.into_iter().map(|k| format!("unknown key `{k}`")).collect(),
            ));
        }
        let cfg: SimConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.message().trim().to_string()))?;
        Ok(cfg)
    }

    /// Defaults, then `path` if given, then `overrides`; validated.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<SimConfig> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let mut cfg = SimConfig::from_toml(&text)?;
                // Scenario paths are relative to the config file.
                if let Some(s) = cfg.environment.scenario.as_mut() {
                    if s.is_relative() {
                        if let Some(dir) = p.parent() {
                            *s = dir.join(&*s);
                        }
                    }
                }
                cfg
            }
            None => SimConfig::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Writes the resolved config, headed by its fingerprint, into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        let text = format!("# fingerprint: {}\n{}", self.fingerprint(), self.to_toml());
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn unknown_keys(table: &toml::Table) -> Vec<String> {
    let known = toml::Table::try_from(SimConfig::default()).expect("defaults serialize");
    let mut out = Vec::new();
    for (section, value) in table {
        let Some(known_section) = known.get(section).and_then(|v| v.as_table()) else {
            out.push(section.clone());
            continue;
        };
        let Some(entries) = value.as_table() else {
            continue;
        };
        for key in entries.keys() {
            let optional = section == "environment" && key == "scenario";
            if !known_section.contains_key(key) && !optional {
                out.push(format!("{section}.{key}"));
            }
        }
    }
    out
}
