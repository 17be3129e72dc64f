//! End-to-end runs: data generation, surrogate and agent training,
//! ledger-logged simulation, evaluation and plot-ready data bundles.
//!
//! Every artifact is written under one output directory with fixed names,
//! and every random stream is derived from the run's root seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::agent::{
    self, realtime_optimize, AgentError, AgentParams, Episode, FeedbackSink, QTable, TrainedAgent,
};
use crate::datagen::{self, DataError, DatasetRow, Scenario, Tolerance};
use crate::eval::{self, EvalError, LinearModel};
use crate::ledger::{self, Ledger, LedgerError, NetParams, TxKind};
use crate::seed::{derive_indexed, derive_seed};
use crate::surrogate::{
    self, Activation, Coupling, LossWeights, PhysicsNode, Standardizer, SurrogateError, SurrogateNet,
    TrainOptions, TrainReport, TrainingBatch,
};
use crate::twin::{Action, Feedback, StepOutcome, Twin, TwinConfig, TwinError, DT_HOURS};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("ledger verification failed: {0}")]
    Tampered(String),
    #[error("missing artifact {}; run the upstream step first", .0.display())]
    MissingArtifact(PathBuf),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Artifact { path: String, reason: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// 1 for bad input or configuration, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Tampered(_) | PipelineError::MissingArtifact(_) | PipelineError::Data(_) => 1,
            PipelineError::Twin(TwinError::Config(_)) => 1,
            PipelineError::Agent(AgentError::Params(_)) => 1,
            PipelineError::Ledger(LedgerError::Config(_)) => 1,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub dataset: String,
    pub weights: String,
    pub loss_history: String,
    pub qtable: String,
    pub returns: String,
    pub ledger: String,
    pub ledger_json: String,
    pub report_dir: String,
    pub bundle_dir: String,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            dataset: "dataset.csv".into(),
            weights: "surrogate.json".into(),
            loss_history: "surrogate_loss.csv".into(),
            qtable: "qtable.json".into(),
            returns: "returns.csv".into(),
            ledger: "ledger.bin".into(),
            ledger_json: "ledger.json".into(),
            report_dir: "report".into(),
            bundle_dir: "bundle".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Twin episodes recorded as training and test data.
    pub trace_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub hours: usize,
    #[serde(default)]
    pub scenario: Scenario,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams {
            hours: 168,
            scenario: Scenario::default(),
        }
    }
}

fn default_network() -> NetParams {
    NetParams {
        throughput: 100.0,
        latency: 0.05,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    pub twin: TwinConfig,
    pub loss: LossWeights,
    pub agent: AgentParams,
    pub surrogate: SurrogateParams,
    #[serde(default = "default_network")]
    pub network: NetParams,
    #[serde(default)]
    pub dataset: DatasetParams,
}

const DEMO: &str = include_str!("../configs/demo.json");

/// Participants allowed to write to the simulation ledger.
pub const PARTICIPANTS: [&str; 3] = ["agent", "meter", "twin"];

impl RunConfig {
    pub fn demo() -> Self {
        serde_json::from_str(DEMO).expect("bundled demo config parses")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.twin.validate()?;
        self.agent.validate()?;
        let cfg = |m: &str| Err(PipelineError::Config(m.to_owned()));
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !nonneg(self.loss.lambda_physics) || !nonneg(self.loss.mu_comfort) {
            return cfg("loss weights must be finite and >= 0");
        }
        let s = &self.surrogate;
        if s.hidden.is_empty() || s.hidden.contains(&0) {
            return cfg("surrogate needs at least one non-empty hidden layer");
        }
        if !(s.learning_rate > 0.0 && s.learning_rate.is_finite()) || s.epochs == 0 {
            return cfg("surrogate learning rate must be > 0 and epochs >= 1");
        }
        if s.trace_episodes < 5 {
            return cfg("surrogate needs at least 5 trace episodes for a held-out split");
        }
        if self.dataset.hours == 0 {
            return cfg("dataset hours must be >= 1");
        }
        self.network.validate()?;
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(PipelineError::MissingArtifact(path))
    }
}

// ---------------------------------------------------------------- gen-data

pub fn gen_data(cfg: &RunConfig, out: &Path, hours: Option<usize>, round3: bool) -> Result<Vec<DatasetRow>> {
    let hours = hours.unwrap_or(cfg.dataset.hours);
    if hours == 0 {
        return Err(PipelineError::Config("--hours must be >= 1".into()));
    }
    let rows = datagen::generate(derive_seed(cfg.seed, "datagen"), hours, &cfg.dataset.scenario);
    write_file(&out.join(&cfg.paths.dataset), datagen::to_csv(&rows, round3)?)?;
    Ok(rows)
}

// ---------------------------------------------------------- surrogate data

/// Number of input features of the surrogate.
pub const N_FEATURES: usize = 7;

/// One recorded twin episode, rows `rows` of [`SurrogateData`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub rows: Range<usize>,
    /// C·T of zone 0 at every hour boundary, kWh.
    pub energy: Vec<f64>,
    /// Heat flow to outdoors per hour, kW.
    pub power_loss: Vec<f64>,
    /// Consumption other than zone 0 heating, kWh.
    pub offset_kwh: Vec<f64>,
    pub desired_temp: Vec<f64>,
    pub actual_temp: Vec<f64>,
}

/// Consumption dataset recorded from the twin under a randomized
/// thermostat policy. Features per hour: hour of day / 24, price, outdoor
/// temperature, zone 0 temperature, thermostat setpoint, non-heating
/// appliance load and the previous hour's consumption. Target: total
/// consumption in kWh.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateData {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub traces: Vec<Trace>,
    pub train_traces: Vec<usize>,
    pub test_traces: Vec<usize>,
}

/// Heating needed to close the gap to `setpoint` within 1.5 °C, capped at `max`.
fn thermostat(setpoint: f64, temp: f64, max: f64) -> f64 {
    max * ((setpoint - temp) / 1.5).clamp(0.0, 1.0)
}

pub fn surrogate_data(cfg: &RunConfig) -> Result<SurrogateData> {
    let twin_cfg = &cfg.twin;
    if twin_cfg.zones.is_empty() {
        return Err(PipelineError::Config("surrogate traces need at least one zone".into()));
    }
    let mut data = SurrogateData {
        features: Vec::new(),
        targets: Vec::new(),
        traces: Vec::new(),
        train_traces: Vec::new(),
        test_traces: Vec::new(),
    };
    let zone = &twin_cfg.zones[0];
    for k in 0..cfg.surrogate.trace_episodes {
        let mut twin = Twin::new(twin_cfg.clone(), derive_indexed(cfg.seed, "surrogate/twin", k as u64))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_indexed(cfg.seed, "surrogate/policy", k as u64));
        let shift: f64 = rng.random_range(-3.0..=1.0);
        let start = data.features.len();
        let mut previous_kwh = 0.0;
        let mut trace = Trace {
            rows: start..start,
            energy: vec![zone.c_th * twin.state().zone_temp[0]],
            power_loss: Vec::new(),
            offset_kwh: Vec::new(),
            desired_temp: Vec::new(),
            actual_temp: Vec::new(),
        };
        while !twin.is_done() {
            let s = twin.state().clone();
            let setpoints: Vec<f64> = twin_cfg.comfort.desired_temp.iter().map(|d| d + shift).collect();
            let action = Action {
                appliance_commands: twin_cfg
                    .shiftable()
                    .map(|(_, a)| a.in_window(s.t) && rng.random_bool(0.5))
                    .collect(),
                heat_power: (0..twin_cfg.zones.len())
                    .map(|z| thermostat(setpoints[z], s.zone_temp[z], twin_cfg.max_heat(z, s.t)))
                    .collect(),
            };
            let out = twin.step(&action)?;
            let b = &out.breakdown;
            let other_heat: f64 = b.heat_kwh.iter().skip(1).sum();
            let appliance_kwh = b.total_load_kwh - b.heat_kwh.iter().sum::<f64>();
            data.features.push(vec![
                f64::from(s.t % 24) / 24.0,
                s.price,
                s.outdoor_temp,
                s.zone_temp[0],
                setpoints[0],
                appliance_kwh / DT_HOURS + other_heat / DT_HOURS,
                previous_kwh,
            ]);
            previous_kwh = b.total_load_kwh;
            data.targets.push(b.total_load_kwh);
            trace.energy.push(zone.c_th * out.next.zone_temp[0]);
            trace.power_loss.push((s.zone_temp[0] - s.outdoor_temp) / zone.r_th);
            trace.offset_kwh.push(b.total_load_kwh - b.heat_kwh[0]);
            trace.desired_temp.push(twin_cfg.comfort.desired_temp[0]);
            trace.actual_temp.push(out.next.zone_temp[0]);
        }
        trace.rows = start..data.features.len();
        data.traces.push(trace);
    }
    let (train, test) = eval::train_test_split(data.traces.len(), derive_seed(cfg.seed, "surrogate/split"));
    data.train_traces = train;
    data.test_traces = test;
    data.train_traces.sort_unstable();
    data.test_traces.sort_unstable();
    Ok(data)
}

impl SurrogateData {
    pub fn rows(&self, traces: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for &k in traces {
            let r = self.traces[k].rows.clone();
            x.extend_from_slice(&self.features[r.clone()]);
            y.extend_from_slice(&self.targets[r]);
        }
        (x, y)
    }

    /// Training batch over `traces`, with one coupled energy-balance node per trace.
    pub fn batch(&self, traces: &[usize]) -> TrainingBatch {
        let (features, targets) = self.rows(traces);
        let mut nodes = Vec::new();
        let mut desired_temp = Vec::new();
        let mut actual_temp = Vec::new();
        let mut base = 0;
        for &k in traces {
            let tr = &self.traces[k];
            let n = tr.rows.len();
            nodes.push(PhysicsNode {
                energy: tr.energy.clone(),
                power_in: vec![0.0; n],
                power_loss: tr.power_loss.clone(),
                coupling: Some(Coupling {
                    rows: (base..base + n).collect(),
                    offset_kwh: tr.offset_kwh.clone(),
                }),
            });
            desired_temp.extend_from_slice(&tr.desired_temp);
            actual_temp.extend_from_slice(&tr.actual_temp);
            base += n;
        }
        TrainingBatch {
            features,
            targets,
            nodes,
            desired_temp,
            actual_temp,
            dt_hours: DT_HOURS,
        }
    }
}

// --------------------------------------------------------- train-surrogate

pub fn train_surrogate(cfg: &RunConfig, out: &Path) -> Result<TrainReport> {
    let data = surrogate_data(cfg)?;
    let batch = data.batch(&data.train_traces);
    let mut sizes = vec![N_FEATURES];
    sizes.extend_from_slice(&cfg.surrogate.hidden);
    sizes.push(1);
    let mut net = SurrogateNet::new(&sizes, cfg.surrogate.activation, derive_seed(cfg.seed, "surrogate/init"))?;
    net.input_scaling = Some(Standardizer::fit(&batch.features)?);
    let report = surrogate::train(
        &batch,
        &mut net,
        &cfg.loss,
        &TrainOptions {
            learning_rate: cfg.surrogate.learning_rate,
            epochs: cfg.surrogate.epochs,
        },
    )?;
    let weights = out.join(&cfg.paths.weights);
    if let Some(dir) = weights.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    net.save_json(&weights)?;
    let mut csv = String::from("epoch,data,physics,comfort,total\n");
    for (i, l) in report.history.iter().chain([&report.final_loss]).enumerate() {
        let _ = writeln!(csv, "{i},{},{},{},{}", l.data, l.physics, l.comfort, l.total);
    }
    write_file(&out.join(&cfg.paths.loss_history), csv)?;
    Ok(report)
}

// ------------------------------------------------------------- train-agent

pub fn train_agent(cfg: &RunConfig, out: &Path) -> Result<TrainedAgent> {
    let trained = agent::train(&cfg.twin, &cfg.agent, derive_seed(cfg.seed, "agent"))?;
    let qtable = out.join(&cfg.paths.qtable);
    if let Some(dir) = qtable.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    trained.table.save_json(&qtable)?;
    agent::write_returns_csv(&trained.returns, out.join(&cfg.paths.returns))?;
    Ok(trained)
}

// ---------------------------------------------------------------- simulate

/// Seed of the live twin in `simulate`; the naive schedule replays the same weather.
pub fn simulation_seed(cfg: &RunConfig) -> u64 {
    derive_seed(cfg.seed, "simulate")
}

/// Writes each executed step to the ledger as three transactions and one block.
pub struct LedgerSink {
    pub ledger: Ledger,
    pub network: NetParams,
    pub real_delay: bool,
    pub consensus_time_s: f64,
}

impl LedgerSink {
    pub fn new(network: NetParams, real_delay: bool) -> Self {
        LedgerSink {
            ledger: Ledger::new(PARTICIPANTS),
            network,
            real_delay,
            consensus_time_s: 0.0,
        }
    }

    fn log(&mut self, action: &Action, outcome: &StepOutcome, feedback: &Feedback) -> std::result::Result<(), LedgerError> {
        let t = feedback.t.saturating_sub(1);
        let b = &outcome.breakdown;
        let meter = json!({
            "t": t,
            "consumption_kwh": feedback.consumption_kwh,
            "grid_kwh": feedback.grid_kwh,
            "renewable_kwh": feedback.renewable_kwh,
            "solar_kwh": b.solar_kwh,
            "wind_kwh": b.wind_kwh,
        });
        let act = json!({
            "t": t,
            "appliance_commands": action.appliance_commands,
            "heat_power": action.heat_power,
        });
        let fb = json!({
            "t": feedback.t,
            "zone_temp": feedback.zone_temp,
            "cost": b.cost,
            "reward": outcome.reward,
        });
        let bytes = |v: serde_json::Value| serde_json::to_vec(&v).expect("json values serialize");
        self.ledger.submit(t, TxKind::MeterReading, "meter", bytes(meter))?;
        self.ledger.submit(t, TxKind::Action, "agent", bytes(act))?;
        self.ledger.submit(t, TxKind::Feedback, "twin", bytes(fb))?;
        let time = self.ledger.commit(&self.network)?;
        self.consensus_time_s += time;
        if self.real_delay {
            std::thread::sleep(Duration::from_secs_f64(time));
        }
        Ok(())
    }
}

impl FeedbackSink for LedgerSink {
    fn record(&mut self, action: &Action, outcome: &StepOutcome, feedback: &Feedback) -> std::result::Result<(), AgentError> {
        self.log(action, outcome, feedback)
            .map_err(|e| AgentError::Sink(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub horizon: u32,
    pub agent_cost: f64,
    pub naive_cost: f64,
    pub agent_return: f64,
    pub naive_return: f64,
    pub fallbacks: usize,
    pub ledger_blocks: usize,
    pub ledger_transactions: usize,
    pub simulated_consensus_time_s: f64,
}

/// Outcome of [`simulate`]. Decision latency is wall-clock and kept out of
/// the artifacts so reruns stay byte-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub summary: SimulationSummary,
    pub agent: Episode,
    pub naive: Episode,
    pub mean_latency_s: f64,
}

pub const TRAJECTORY_AGENT: &str = "trajectory_agent.csv";
pub const TRAJECTORY_NAIVE: &str = "trajectory_naive.csv";
pub const SIMULATION_SUMMARY: &str = "simulation.json";

fn trajectory_csv(cfg: &TwinConfig, episode: &Episode) -> String {
    let mut out = String::from(
        "t,price,load_kwh,heat_kwh,solar_kwh,wind_kwh,renewable_used_kwh,grid_kwh,cost,discomfort,unmet_kwh,reward",
    );
    for z in 0..cfg.zones.len() {
        let _ = write!(out, ",zone_temp_{z}");
    }
    for (_, a) in cfg.shiftable() {
        let _ = write!(out, ",on_{}", a.id);
    }
    out.push('\n');
    for s in &episode.steps {
        let b = &s.breakdown;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.t,
            cfg.price_at(s.t),
            b.total_load_kwh,
            b.heat_kwh.iter().sum::<f64>(),
            b.solar_kwh,
            b.wind_kwh,
            b.renewable_used_kwh,
            b.grid_kwh,
            b.cost,
            b.discomfort,
            b.unmet_kwh,
            s.reward
        );
        for temp in &s.zone_temp {
            let _ = write!(out, ",{temp}");
        }
        for &on in &s.action.appliance_commands {
            let _ = write!(out, ",{}", u8::from(on));
        }
        out.push('\n');
    }
    out
}

pub fn simulate(cfg: &RunConfig, out: &Path, real_delay: bool) -> Result<SimulationRun> {
    let table = QTable::load_json(require(out.join(&cfg.paths.qtable))?)?;
    let seed = simulation_seed(cfg);
    let mut twin = Twin::new(cfg.twin.clone(), seed)?;
    let mut sink = LedgerSink::new(cfg.network, real_delay);
    let log = realtime_optimize(&table, &mut twin, &mut sink)?;
    let agent = log.episode();
    let naive = agent::always_on_rollout(&cfg.twin, seed)?;

    let blocks = sink.ledger.blocks();
    ledger::save_chain(blocks, out.join(&cfg.paths.ledger))?;
    write_file(&out.join(&cfg.paths.ledger_json), ledger::export_json(blocks)?)?;
    write_file(&out.join(TRAJECTORY_AGENT), trajectory_csv(&cfg.twin, &agent))?;
    write_file(&out.join(TRAJECTORY_NAIVE), trajectory_csv(&cfg.twin, &naive))?;

    let summary = SimulationSummary {
        horizon: cfg.twin.horizon,
        agent_cost: agent.total_cost(),
        naive_cost: naive.total_cost(),
        agent_return: agent.total_reward(),
        naive_return: naive.total_reward(),
        fallbacks: log.fallbacks(),
        ledger_blocks: blocks.len(),
        ledger_transactions: blocks.iter().map(|b| b.transactions.len()).sum(),
        simulated_consensus_time_s: sink.consensus_time_s,
    };
    write_json(&out.join(SIMULATION_SUMMARY), &summary)?;
    Ok(SimulationRun {
        summary,
        agent,
        naive,
        mean_latency_s: log.mean_latency_s(),
    })
}

// ---------------------------------------------------------------- evaluate

/// Numeric CSV table keyed by column name.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: BTreeMap<String, Vec<f64>>,
    pub len: usize,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let path = require(path.to_path_buf())?;
        let bad = |reason: String| PipelineError::Artifact {
            path: path.display().to_string(),
            reason,
        };
        let mut reader = csv::Reader::from_path(&path).map_err(|e| bad(e.to_string()))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        let mut len = 0;
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            for (c, field) in rec.iter().enumerate() {
                let v = field
                    .parse::<f64>()
                    .map_err(|e| bad(format!("row {}, column {}: {e}", i + 1, headers[c])))?;
                cols[c].push(v);
            }
            len += 1;
        }
        Ok(Table {
            columns: headers.into_iter().zip(cols).collect(),
            len,
        })
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| PipelineError::Artifact {
                path: "table".into(),
                reason: format!("missing column {name}"),
            })
    }
}

/// Informational real-time fields; none of them is a pass/fail gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub agent_cost: f64,
    pub naive_cost: f64,
    pub energy_cost_reduction_pct: f64,
    /// Hours with every zone within 1 °C of its setpoint.
    pub user_comfort_index_pct: f64,
    /// Share of available renewable output consumed on site.
    pub renewable_utilization_pct: f64,
    pub agent_consumption_kwh: f64,
    pub naive_consumption_kwh: f64,
    pub surrogate_mae: f64,
    pub linear_mae: f64,
}

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const COVERAGE_CSV: &str = "coverage.csv";
pub const SUMMARY_JSON: &str = "summary.json";

pub const COMFORT_BAND_C: f64 = 1.0;

/// Per-hour coverage rows: the naive schedule is the baseline, the agent
/// the optimized run, and traditional coverage is the renewable share the
/// naive schedule actually consumed.
pub fn coverage_rows(agent: &Table, naive: &Table) -> Result<Vec<DatasetRow>> {
    let t = agent.column("t")?;
    let after = agent.column("load_kwh")?;
    let before = naive.column("load_kwh")?;
    let solar = agent.column("solar_kwh")?;
    let wind = agent.column("wind_kwh")?;
    let naive_used = naive.column("renewable_used_kwh")?;
    if agent.len != naive.len {
        return Err(PipelineError::Artifact {
            path: TRAJECTORY_NAIVE.into(),
            reason: format!("{} rows, agent trajectory has {}", naive.len, agent.len),
        });
    }
    let mut rows = Vec::with_capacity(agent.len);
    for i in 0..agent.len {
        let renewable = solar[i] + wind[i];
        rows.push(DatasetRow {
            timestamp: t[i] as u32,
            baseline_consumption_kwh: before[i],
            optimized_consumption_kwh: after[i],
            solar_output_kwh: solar[i],
            wind_output_kwh: wind[i],
            total_renewable_output_kwh: renewable,
            proposed_model_coverage_pct: eval::renewable_coverage(renewable, before[i])?,
            traditional_model_coverage_pct: eval::renewable_coverage(naive_used[i], before[i])?,
        });
    }
    datagen::validate(&rows, Tolerance::EXACT)?;
    Ok(rows)
}

pub fn evaluate(cfg: &RunConfig, out: &Path) -> Result<EvaluationSummary> {
    let net = SurrogateNet::load_json(require(out.join(&cfg.paths.weights))?)?;
    let agent = Table::read(&out.join(TRAJECTORY_AGENT))?;
    let naive = Table::read(&out.join(TRAJECTORY_NAIVE))?;
    let report_dir = out.join(&cfg.paths.report_dir);

    let data = surrogate_data(cfg)?;
    let (x_train, y_train) = data.rows(&data.train_traces);
    let (x_test, y_test) = data.rows(&data.test_traces);
    let linear = LinearModel::fit(&x_train, &y_train)?;
    let surrogate_pred = net.forward(&x_test)?;
    let linear_pred = linear.predict(&x_test);
    let report = eval::comparison_report(
        &[
            ("PINN Surrogate".to_owned(), surrogate_pred.clone()),
            ("Linear Regression".to_owned(), linear_pred.clone()),
        ],
        &y_test,
        None,
    )?;
    write_file(&report_dir.join(REPORT_CSV), report.to_csv())?;
    write_file(&report_dir.join(REPORT_TXT), report.to_text())?;
    let mut preds = String::from("index,actual_kwh,surrogate_kwh,linear_kwh\n");
    for (i, ((y, s), l)) in y_test.iter().zip(&surrogate_pred).zip(&linear_pred).enumerate() {
        let _ = writeln!(preds, "{i},{y},{s},{l}");
    }
    write_file(&report_dir.join(PREDICTIONS_CSV), preds)?;

    let rows = coverage_rows(&agent, &naive)?;
    write_file(&report_dir.join(COVERAGE_CSV), datagen::to_csv(&rows, false)?)?;

    let sum = |t: &Table, c: &str| -> Result<f64> { Ok(t.column(c)?.iter().sum()) };
    let agent_cost = sum(&agent, "cost")?;
    let naive_cost = sum(&naive, "cost")?;
    let available = sum(&agent, "solar_kwh")? + sum(&agent, "wind_kwh")?;
    let mut comfortable = 0usize;
    for i in 0..agent.len {
        let ok = cfg.twin.comfort.desired_temp.iter().enumerate().all(|(z, d)| {
            agent
                .columns
                .get(&format!("zone_temp_{z}"))
                .is_some_and(|c| (c[i] - d).abs() <= COMFORT_BAND_C)
        });
        comfortable += usize::from(ok);
    }
    let pct = |num: f64, den: f64| if den > 0.0 { 100.0 * num / den } else { 0.0 };
    let summary = EvaluationSummary {
        agent_cost,
        naive_cost,
        energy_cost_reduction_pct: pct(naive_cost - agent_cost, naive_cost),
        user_comfort_index_pct: pct(comfortable as f64, agent.len as f64),
        renewable_utilization_pct: pct(sum(&agent, "renewable_used_kwh")?, available),
        agent_consumption_kwh: sum(&agent, "load_kwh")?,
        naive_consumption_kwh: sum(&naive, "load_kwh")?,
        surrogate_mae: report.rows[0].mae,
        linear_mae: report.rows[1].mae,
    };
    write_json(&report_dir.join(SUMMARY_JSON), &summary)?;
    Ok(summary)
}

// ------------------------------------------------------------ report bundle

pub const HISTOGRAM_BINS: usize = 10;

/// Plot-ready CSVs from a completed simulate + evaluate run.
pub fn report_bundle(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let report_dir = out.join(&cfg.paths.report_dir);
    let agent = Table::read(&out.join(TRAJECTORY_AGENT))?;
    let naive = Table::read(&out.join(TRAJECTORY_NAIVE))?;
    let preds = Table::read(&report_dir.join(PREDICTIONS_CSV))?;
    require(report_dir.join(COVERAGE_CSV))?;
    let dir = out.join(&cfg.paths.bundle_dir);

    let t = agent.column("t")?;
    let mut before_after = String::from("hour,before_kwh,after_kwh\n");
    for ((h, b), a) in t.iter().zip(naive.column("load_kwh")?).zip(agent.column("load_kwh")?) {
        let _ = writeln!(before_after, "{h},{b},{a}");
    }
    write_file(&dir.join("before_after.csv"), before_after)?;

    let mut renewables = String::from("hour,solar_kwh,wind_kwh,total_kwh\n");
    for ((h, s), w) in t.iter().zip(agent.column("solar_kwh")?).zip(agent.column("wind_kwh")?) {
        let _ = writeln!(renewables, "{h},{s},{w},{}", s + w);
    }
    write_file(&dir.join("renewables.csv"), renewables)?;

    let errors: Vec<f64> = preds
        .column("surrogate_kwh")?
        .iter()
        .zip(preds.column("actual_kwh")?)
        .map(|(p, y)| p - y)
        .collect();
    let mut hist = String::from("lower,upper,count\n");
    for b in eval::histogram(&errors, HISTOGRAM_BINS) {
        let _ = writeln!(hist, "{},{},{}", b.lower, b.upper, b.count);
    }
    write_file(&dir.join("error_histogram.csv"), hist)?;

    let mut cumulative = String::from("index,abs_error,cumulative_abs_error\n");
    for (i, (e, c)) in errors.iter().zip(eval::cumulative_abs_error(&errors)).enumerate() {
        let _ = writeln!(cumulative, "{i},{},{c}", e.abs());
    }
    write_file(&dir.join("cumulative_error.csv"), cumulative)?;
    Ok(dir)
}

// --------------------------------------------------------------------- all

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub simulation: SimulationRun,
    pub evaluation: EvaluationSummary,
}

/// Every step in order, as the CLI's `run` subcommand does.
pub fn run_all(cfg: &RunConfig, out: &Path, real_delay: bool) -> Result<PipelineRun> {
    gen_data(cfg, out, None, false)?;
    train_surrogate(cfg, out)?;
    train_agent(cfg, out)?;
    let simulation = simulate(cfg, out, real_delay)?;
    let evaluation = evaluate(cfg, out)?;
    report_bundle(cfg, out)?;
    Ok(PipelineRun { simulation, evaluation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_config_is_valid() {
        let cfg = RunConfig::demo();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.twin.horizon, 24);
        assert_eq!(cfg.twin.appliances.len(), 3);
    }

    #[test]
    fn negative_loss_weight_is_rejected() {
        let mut cfg = RunConfig::demo();
        cfg.loss.lambda_physics = -1.0;
        let e = cfg.validate().unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn physics_residual_vanishes_at_recorded_consumption() {
        let mut cfg = RunConfig::demo();
        cfg.surrogate.trace_episodes = 5;
        let data = surrogate_data(&cfg).unwrap();
        let batch = data.batch(&data.train_traces);
        for node in &batch.nodes {
            let c = node.coupling.as_ref().unwrap();
            let p_in: Vec<f64> = c
                .rows
                .iter()
                .zip(&c.offset_kwh)
                .map(|(&r, off)| (batch.targets[r] - off) / DT_HOURS)
                .collect();
            let res = surrogate::balance_residuals(&node.energy, &p_in, &node.power_loss, DT_HOURS).unwrap();
            assert!(res.iter().all(|r| r.abs() < 1e-9), "{res:?}");
        }
    }

    #[test]
    fn missing_artifact_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let e = report_bundle(&RunConfig::demo(), dir.path()).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains(TRAJECTORY_AGENT), "{e}");
    }
}
