//! Tabular Q-learning scheduler.
//!
//! States are discretized to (hour, price tier, remaining runtime per
//! shiftable appliance, temperature band per zone). Actions enumerate every
//! on/off combination of the shiftable appliances crossed with a few heat
//! levels per heated zone. The table carries its own action layout so a
//! stored table can be replayed against a live twin.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_indexed, derive_seed};
use crate::twin::{
    check_action, Action, ApplianceKind, BuildingState, Feedback, StepBreakdown, StepOutcome,
    Twin, TwinConfig, TwinError,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("no legal action at hour {0}")]
    NoLegalAction(u32),
    #[error("invalid agent parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("q-table file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("feedback sink: {0}")]
    Sink(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AgentError + '_ {
    move |source| AgentError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Per-episode multiplier of the exploration rate.
    pub epsilon_decay: f64,
    pub episodes: usize,
    /// Discrete heat settings per heated zone, including zero.
    #[serde(default = "default_heat_levels")]
    pub heat_levels: usize,
    /// Width of a temperature band, °C.
    #[serde(default = "default_band")]
    pub temp_band_width: f64,
}

fn default_heat_levels() -> usize {
    3
}

fn default_band() -> f64 {
    2.0
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            alpha: 0.5,
            gamma: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.998,
            episodes: 3000,
            heat_levels: default_heat_levels(),
            temp_band_width: default_band(),
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Params(m.into()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(unit(self.epsilon_start) && unit(self.epsilon_end) && self.epsilon_end <= self.epsilon_start) {
            return bad("epsilon schedule must satisfy 0 <= end <= start <= 1");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad("epsilon decay must lie in (0, 1]");
        }
        if self.episodes == 0 {
            return bad("episodes must be positive");
        }
        if self.heat_levels == 0 {
            return bad("heat_levels must be positive");
        }
        if !(self.temp_band_width > 0.0 && self.temp_band_width.is_finite()) {
            return bad("temperature band width must be positive");
        }
        Ok(())
    }

    /// Exploration rate of episode `episode`.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let decayed = self.epsilon_start * self.epsilon_decay.powi(episode.min(i32::MAX as usize) as i32);
        decayed.max(self.epsilon_end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: u32,
    pub end: u32,
}

impl Window {
    fn contains(&self, t: u32) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heater {
    pub rating_kw: f64,
    pub window: Window,
}

/// Encoding of discrete actions.
///
/// Index layout: the low `n_shiftable` bits are appliance commands; the
/// remaining quotient is a mixed-radix number of heat levels, zone 0 first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub shiftable: Vec<Window>,
    /// One entry per zone; `None` for unheated zones.
    pub heaters: Vec<Option<Heater>>,
    pub heat_levels: usize,
}

impl ActionSpace {
    pub fn from_config(config: &TwinConfig, heat_levels: usize) -> Self {
        let shiftable = config
            .shiftable()
            .map(|(_, a)| Window {
                start: a.earliest_start,
                end: a.latest_end,
            })
            .collect();
        let heaters = (0..config.zones.len())
            .map(|k| {
                config
                    .appliances
                    .iter()
                    .find(|a| a.kind == ApplianceKind::Thermal && a.zone == Some(k))
                    .map(|a| Heater {
                        rating_kw: a.power_rating,
                        window: Window {
                            start: a.earliest_start,
                            end: a.latest_end,
                        },
                    })
            })
            .collect();
        ActionSpace {
            shiftable,
            heaters,
            heat_levels: heat_levels.max(1),
        }
    }

    fn zone_levels(&self, zone: usize) -> usize {
        if self.heaters[zone].is_some() {
            self.heat_levels
        } else {
            1
        }
    }

    pub fn len(&self) -> usize {
        let heat: usize = (0..self.heaters.len()).map(|k| self.zone_levels(k)).product();
        (1usize << self.shiftable.len()) * heat
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn split(&self, index: usize) -> (usize, Vec<usize>) {
        let bits = index & ((1usize << self.shiftable.len()) - 1);
        let mut rest = index >> self.shiftable.len();
        let levels = (0..self.heaters.len())
            .map(|k| {
                let radix = self.zone_levels(k);
                let level = rest % radix;
                rest /= radix;
                level
            })
            .collect();
        (bits, levels)
    }

    pub fn decode(&self, index: usize) -> Action {
        let (bits, levels) = self.split(index);
        let appliance_commands = (0..self.shiftable.len()).map(|i| bits >> i & 1 == 1).collect();
        let heat_power = levels
            .iter()
            .zip(&self.heaters)
            .map(|(&level, h)| match h {
                Some(h) if self.heat_levels > 1 => {
                    h.rating_kw * level as f64 / (self.heat_levels - 1) as f64
                }
                _ => 0.0,
            })
            .collect();
        Action {
            appliance_commands,
            heat_power,
        }
    }

    pub fn is_legal(&self, index: usize, hour: u32) -> bool {
        if index >= self.len() {
            return false;
        }
        let (bits, levels) = self.split(index);
        let commands_ok = self
            .shiftable
            .iter()
            .enumerate()
            .all(|(i, w)| bits >> i & 1 == 0 || w.contains(hour));
        let heat_ok = levels.iter().zip(&self.heaters).all(|(&level, h)| {
            level == 0 || h.as_ref().is_some_and(|h| h.window.contains(hour))
        });
        commands_ok && heat_ok
    }

    /// Legal action indices at `hour`, ascending.
    pub fn legal(&self, hour: u32) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_legal(i, hour)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateKey {
    pub hour: u32,
    pub price_tier: u8,
    pub remaining: Vec<u32>,
    pub temp_band: Vec<i64>,
}

/// Maps twin states to table keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    /// Upper bounds of the low and middle price tiers.
    pub tier_bounds: [f64; 2],
    pub band_width: f64,
}

impl Discretizer {
    /// Tiers at the terciles of the daily price curve.
    pub fn from_config(config: &TwinConfig, band_width: f64) -> Self {
        let mut sorted = config.price_curve.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        Discretizer {
            tier_bounds: [sorted[n / 3 - 1], sorted[2 * n / 3 - 1]],
            band_width,
        }
    }

    pub fn price_tier(&self, price: f64) -> u8 {
        if price <= self.tier_bounds[0] {
            0
        } else if price <= self.tier_bounds[1] {
            1
        } else {
            2
        }
    }

    pub fn key(&self, config: &TwinConfig, state: &BuildingState) -> StateKey {
        StateKey {
            hour: state.t,
            price_tier: self.price_tier(state.price),
            remaining: state.remaining_runtime(config),
            temp_band: state
                .zone_temp
                .iter()
                .map(|t| (t / self.band_width).floor() as i64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TableEntry {
    state: StateKey,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableFile {
    n_actions: usize,
    action_space: ActionSpace,
    discretizer: Discretizer,
    entries: Vec<TableEntry>,
}

/// Action values; entries never written read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    space: ActionSpace,
    discretizer: Discretizer,
    values: BTreeMap<StateKey, Vec<f64>>,
}

impl QTable {
    pub fn new(space: ActionSpace, discretizer: Discretizer) -> Self {
        QTable {
            space,
            discretizer,
            values: BTreeMap::new(),
        }
    }

    pub fn for_config(config: &TwinConfig, params: &AgentParams) -> Self {
        Self::new(
            ActionSpace::from_config(config, params.heat_levels),
            Discretizer::from_config(config, params.temp_band_width),
        )
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn discretizer(&self) -> &Discretizer {
        &self.discretizer
    }

    pub fn n_actions(&self) -> usize {
        self.space.len()
    }

    /// Number of states with at least one written entry.
    pub fn n_states(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, state: &StateKey, action: usize) -> f64 {
        self.values
            .get(state)
            .and_then(|v| v.get(action))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, state: &StateKey, action: usize, value: f64) {
        let n = self.n_actions();
        let row = self
            .values
            .entry(state.clone())
            .or_insert_with(|| vec![0.0; n]);
        row[action] = value;
    }

    /// Multiplies every stored value by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for v in self.values.values_mut().flatten() {
            *v *= factor;
        }
    }

    pub fn legal(&self, state: &StateKey) -> Vec<usize> {
        self.space.legal(state.hour)
    }

    /// Highest-valued legal action; ties go to the lowest index.
    pub fn greedy(&self, state: &StateKey) -> Result<usize, AgentError> {
        let legal = self.legal(state);
        let mut best: Option<(usize, f64)> = None;
        for a in legal {
            let v = self.get(state, a);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((a, v));
            }
        }
        best.map(|(a, _)| a).ok_or(AgentError::NoLegalAction(state.hour))
    }

    fn max_legal(&self, state: &StateKey) -> f64 {
        self.legal(state)
            .into_iter()
            .map(|a| self.get(state, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Q(s,a) += α (r + γ max_a' Q(s',a') [not done] − Q(s,a)).
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        state: &StateKey,
        action: usize,
        reward: f64,
        next: &StateKey,
        done: bool,
        alpha: f64,
        gamma: f64,
    ) {
        let bootstrap = if done {
            0.0
        } else {
            let m = self.max_legal(next);
            if m.is_finite() {
                m
            } else {
                0.0
            }
        };
        let current = self.get(state, action);
        let updated = current + alpha * (reward + gamma * bootstrap - current);
        if updated != current || self.values.contains_key(state) {
            self.set(state, action, updated);
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), AgentError> {
        let path = path.as_ref();
        let file = TableFile {
            n_actions: self.n_actions(),
            action_space: self.space.clone(),
            discretizer: self.discretizer.clone(),
            entries: self
                .values
                .iter()
                .map(|(state, values)| TableEntry {
                    state: state.clone(),
                    values: values.clone(),
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text + "\n").map_err(io_err(path))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, AgentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let file: TableFile = serde_json::from_str(&text)?;
        let mut table = QTable::new(file.action_space, file.discretizer);
        if file.n_actions != table.n_actions() {
            return Err(AgentError::Params(format!(
                "table declares {} actions, layout has {}",
                file.n_actions,
                table.n_actions()
            )));
        }
        for e in file.entries {
            if e.values.len() != file.n_actions || e.values.iter().any(|v| !v.is_finite()) {
                return Err(AgentError::Params(format!("malformed entry for hour {}", e.state.hour)));
            }
            table.values.insert(e.state, e.values);
        }
        Ok(table)
    }
}

/// ε-greedy choice over the legal actions of `state`.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    state: &StateKey,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, AgentError> {
    let legal = q.legal(state);
    if legal.is_empty() {
        return Err(AgentError::NoLegalAction(state.hour));
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(legal[rng.random_range(0..legal.len())]);
    }
    q.greedy(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReturn {
    pub episode: usize,
    pub epsilon: f64,
    /// Undiscounted sum of rewards.
    pub total_return: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub table: QTable,
    pub returns: Vec<EpisodeReturn>,
}

/// Twin noise seed of training episode `episode`.
pub fn episode_seed(root: u64, episode: usize) -> u64 {
    derive_indexed(root, "agent/episode", episode as u64)
}

/// Q-learning against the twin for `params.episodes` episodes.
pub fn train(config: &TwinConfig, params: &AgentParams, seed: u64) -> Result<TrainedAgent, AgentError> {
    params.validate()?;
    let mut twin = Twin::new(config.clone(), episode_seed(seed, 0))?;
    let mut table = QTable::for_config(config, params);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "agent/explore"));
    let mut returns = Vec::with_capacity(params.episodes);

    for episode in 0..params.episodes {
        let epsilon = params.epsilon(episode);
        let mut state = twin.reset(episode_seed(seed, episode)).clone();
        let mut total_return = 0.0;
        loop {
            let key = table.discretizer.key(config, &state);
            let a = select_action(&table, &key, epsilon, &mut rng)?;
            let out = twin.step(&table.space.decode(a))?;
            let next_key = table.discretizer.key(config, &out.next);
            table.update(&key, a, out.reward, &next_key, out.done, params.alpha, params.gamma);
            total_return += out.reward;
            state = out.next;
            if out.done {
                break;
            }
        }
        returns.push(EpisodeReturn {
            episode,
            epsilon,
            total_return,
        });
    }
    Ok(TrainedAgent { table, returns })
}

pub fn write_returns_csv(returns: &[EpisodeReturn], path: impl AsRef<Path>) -> Result<(), AgentError> {
    let path = path.as_ref();
    let mut out = String::from("episode,epsilon,return\n");
    for r in returns {
        out.push_str(&format!("{},{},{}\n", r.episode, r.epsilon, r.total_return));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// One executed step of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: u32,
    pub action: Action,
    pub reward: f64,
    pub breakdown: StepBreakdown,
    pub zone_temp: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Episode {
    pub steps: Vec<StepRecord>,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Energy cost of the grid draw.
    pub fn total_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.breakdown.cost).sum()
    }

    /// Cost plus weighted discomfort and unmet demand, i.e. −Σ reward.
    pub fn objective(&self) -> f64 {
        -self.total_reward()
    }

    /// Whether shiftable appliance `i` (in shiftable order) ran at hour `t`.
    pub fn commanded(&self, i: usize, t: u32) -> bool {
        self.steps
            .iter()
            .find(|s| s.t == t)
            .is_some_and(|s| s.action.appliance_commands[i])
    }
}

fn record(t: u32, action: Action, out: &StepOutcome) -> StepRecord {
    StepRecord {
        t,
        action,
        reward: out.reward,
        breakdown: out.breakdown.clone(),
        zone_temp: out.next.zone_temp.clone(),
    }
}

/// Runs one episode under an arbitrary state-feedback policy.
pub fn rollout_with<F>(config: &TwinConfig, seed: u64, mut policy: F) -> Result<Episode, AgentError>
where
    F: FnMut(&TwinConfig, &BuildingState) -> Result<Action, AgentError>,
{
    let mut twin = Twin::new(config.clone(), seed)?;
    let mut episode = Episode::default();
    while !twin.is_done() {
        let state = twin.state().clone();
        let action = policy(config, &state)?;
        let out = twin.step(&action)?;
        episode.steps.push(record(state.t, action, &out));
    }
    Ok(episode)
}

/// Greedy rollout of `table`.
pub fn greedy_rollout(table: &QTable, config: &TwinConfig, seed: u64) -> Result<Episode, AgentError> {
    rollout_with(config, seed, |cfg, state| {
        let key = table.discretizer.key(cfg, state);
        Ok(table.space.decode(table.greedy(&key)?))
    })
}

/// Naive schedule: every shiftable appliance on throughout its window and
/// every heater at full power.
pub fn always_on_action(config: &TwinConfig, state: &BuildingState) -> Action {
    Action {
        appliance_commands: config.shiftable().map(|(_, a)| a.in_window(state.t)).collect(),
        heat_power: (0..config.zones.len()).map(|k| config.max_heat(k, state.t)).collect(),
    }
}

pub fn always_on_rollout(config: &TwinConfig, seed: u64) -> Result<Episode, AgentError> {
    rollout_with(config, seed, |cfg, state| Ok(always_on_action(cfg, state)))
}

/// Receives executed actions and their measured feedback.
pub trait FeedbackSink {
    fn record(&mut self, action: &Action, outcome: &StepOutcome, feedback: &Feedback) -> Result<(), AgentError>;
}

/// Sink that keeps nothing.
pub struct NullSink;

impl FeedbackSink for NullSink {
    fn record(&mut self, _: &Action, _: &StepOutcome, _: &Feedback) -> Result<(), AgentError> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub step: StepRecord,
    /// Table action index, `None` when the fallback no-op was executed.
    pub action_index: Option<usize>,
    pub fallback: bool,
    /// Time from reading the state to having a validated action, seconds.
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub decisions: Vec<Decision>,
}

impl TrajectoryLog {
    pub fn episode(&self) -> Episode {
        Episode {
            steps: self.decisions.iter().map(|d| d.step.clone()).collect(),
        }
    }

    pub fn fallbacks(&self) -> usize {
        self.decisions.iter().filter(|d| d.fallback).count()
    }

    pub fn mean_latency_s(&self) -> f64 {
        if self.decisions.is_empty() {
            return 0.0;
        }
        self.decisions.iter().map(|d| d.latency_s).sum::<f64>() / self.decisions.len() as f64
    }
}

/// Closed loop against a live twin until its episode ends: read state,
/// choose greedily, execute, collect feedback, synchronize the twin and
/// forward the feedback to `sink`.
///
/// An action the live twin rejects is replaced by the idle action.
pub fn realtime_optimize(
    table: &QTable,
    twin: &mut Twin,
    sink: &mut dyn FeedbackSink,
) -> Result<TrajectoryLog, AgentError> {
    let mut log = TrajectoryLog::default();
    while !twin.is_done() {
        let started = Instant::now();
        let state = twin.state().clone();
        let key = table.discretizer.key(twin.config(), &state);
        let chosen = table.greedy(&key).ok();
        let (action_index, action) = match chosen.map(|a| (a, table.space.decode(a))) {
            Some((a, action)) if check_action(twin.config(), &state, &action).is_ok() => (Some(a), action),
            _ => (None, Action::idle(twin.config())),
        };
        let latency_s = started.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);

        let out = twin.step(&action)?;
        let feedback = Feedback {
            t: out.next.t,
            consumption_kwh: out.breakdown.total_load_kwh,
            grid_kwh: out.breakdown.grid_kwh,
            renewable_kwh: out.breakdown.renewable_used_kwh,
            zone_temp: out.next.zone_temp.clone(),
        };
        twin.synchronize(&feedback)?;
        sink.record(&action, &out, &feedback)?;
        log.decisions.push(Decision {
            step: record(state.t, action, &out),
            action_index,
            fallback: action_index.is_none(),
            latency_s,
        });
    }
    Ok(log)
}
