//! Oracles and fixtures shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use gridtwin::surrogate::{
    self, Activation, Coupling, LossWeights, PhysicsNode, SurrogateNet, TrainingBatch,
};
use gridtwin::twin::{
    transition, Action, ApplianceKind, ApplianceSpec, ComfortProfile, NoiseConfig, PanelConfig,
    TurbineConfig, TwinConfig, WeatherConfig, ZoneConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Table 3 of the paper transcribed in the dataset schema, three decimals as published.
pub const TABLE3_CSV: &str = "\
Timestamp,Baseline_Consumption_kWh,Optimized_Consumption_kWh,Solar_Output_kWh,Wind_Output_kWh,Total_Renewable_Output_kWh,Proposed_Model_Coverage_%,Traditional_Model_Coverage_%
1,7.617,7.537,0.075,0.011,0.086,1.124,0.915
2,7.470,7.030,0.190,0.269,0.459,6.140,5.287
3,14.063,12.984,0.146,1.123,1.269,9.024,7.688
4,7.495,6.772,0.120,0.662,0.782,10.436,7.626
5,7.719,6.881,0.031,0.885,0.917,11.874,8.666
6,12.594,12.097,0.031,0.482,0.514,4.079,3.074
7,9.497,8.937,0.012,0.560,0.571,6.017,4.647
8,12.767,11.799,0.173,1.033,1.207,9.451,7.388
9,5.654,5.517,0.120,0.026,0.146,2.591,2.166
10,9.876,9.601,0.142,0.198,0.339,3.437,2.445
";

// ------------------------------------------------------------ twin fixtures

pub fn shiftable(id: &str, kw: f64, start: u32, end: u32, runtime: u32) -> ApplianceSpec {
    ApplianceSpec {
        id: id.into(),
        power_rating: kw,
        kind: ApplianceKind::Shiftable,
        earliest_start: start,
        latest_end: end,
        required_runtime: runtime,
        zone: None,
    }
}

pub fn heater(kw: f64, zone: usize, start: u32, end: u32) -> ApplianceSpec {
    ApplianceSpec {
        id: format!("heater{zone}"),
        power_rating: kw,
        kind: ApplianceKind::Thermal,
        earliest_start: start,
        latest_end: end,
        required_runtime: 0,
        zone: Some(zone),
    }
}

/// Hour-of-day tariff: the given prices for the first hours, 1.0 afterwards.
pub fn tariff(first: &[f64]) -> Vec<f64> {
    let mut p = vec![1.0; 24];
    p[..first.len()].copy_from_slice(first);
    p
}

/// Deterministic instance without renewables, so cost = price · load.
pub fn instance(appliances: Vec<ApplianceSpec>, zones: Vec<ZoneConfig>, prices: &[f64], horizon: u32) -> TwinConfig {
    let desired = vec![21.0; zones.len()];
    TwinConfig {
        appliances,
        zones,
        panel: PanelConfig {
            efficiency: 0.2,
            area_m2: 10.0,
            rated_kw: 2.0,
        },
        turbine: TurbineConfig {
            cut_in: 3.0,
            rated_speed: 12.0,
            cut_out: 25.0,
            rated_kw: 3.0,
        },
        price_curve: tariff(prices),
        comfort: ComfortProfile {
            desired_temp: desired,
            beta: 0.0,
            lambda_unsat: 10.0,
        },
        noise: NoiseConfig::default(),
        weather: WeatherConfig::Hourly {
            irradiance: vec![0.0; 24],
            wind_speed: vec![0.0; 24],
            outdoor_temp: vec![10.0; 24],
        },
        horizon,
        seed: 0,
    }
}

/// Per-hour legal actions, built directly from the windows: every on/off
/// combination of in-window shiftables times `heat_levels` evenly spaced
/// settings per heater that is inside its window.
pub fn legal_actions(cfg: &TwinConfig, heat_levels: usize, t: u32) -> Vec<Action> {
    let mut out = vec![Action {
        appliance_commands: Vec::new(),
        heat_power: Vec::new(),
    }];
    for a in cfg.appliances.iter().filter(|a| a.kind == ApplianceKind::Shiftable) {
        let choices: &[bool] = if a.in_window(t) { &[false, true] } else { &[false] };
        out = out
            .into_iter()
            .flat_map(|act| {
                choices.iter().map(move |&on| {
                    let mut next = act.clone();
                    next.appliance_commands.push(on);
                    next
                })
            })
            .collect();
    }
    for z in 0..cfg.zones.len() {
        let h = cfg
            .appliances
            .iter()
            .find(|a| a.kind == ApplianceKind::Thermal && a.zone == Some(z));
        let levels: Vec<f64> = match h {
            Some(h) if h.in_window(t) => (0..heat_levels)
                .map(|k| h.power_rating * k as f64 / (heat_levels - 1) as f64)
                .collect(),
            _ => vec![0.0],
        };
        out = out
            .into_iter()
            .flat_map(|act| {
                levels.iter().map(move |&p| {
                    let mut next = act.clone();
                    next.heat_power.push(p);
                    next
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone)]
pub struct BruteForce {
    pub schedules: usize,
    pub best_objective: f64,
    pub best_cost: f64,
}

/// Exhaustive search over every legal action sequence of a noise-free instance.
pub fn brute_force(cfg: &TwinConfig, heat_levels: usize) -> BruteForce {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let start = gridtwin::twin::initial_state(cfg, &mut rng);
    let mut best = BruteForce {
        schedules: 0,
        best_objective: f64::INFINITY,
        best_cost: f64::INFINITY,
    };
    let mut stack = vec![(start, 0.0, 0.0)];
    while let Some((state, objective, cost)) = stack.pop() {
        if state.t == cfg.horizon {
            best.schedules += 1;
            if objective < best.best_objective {
                best.best_objective = objective;
                best.best_cost = cost;
            }
            continue;
        }
        for action in legal_actions(cfg, heat_levels, state.t) {
            let out = transition(cfg, &state, &action, &mut rng).expect("legal action");
            stack.push((out.next, objective - out.reward, cost + out.breakdown.cost));
        }
    }
    best
}

// ------------------------------------------------------------ metric oracles

/// Straight textbook formulas, written independently of the library.
pub fn oracle_regression(pred: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = y.len() as f64;
    let errors: Vec<f64> = pred.iter().zip(y).map(|(p, t)| p - t).collect();
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / n;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    let mbe = errors.iter().sum::<f64>() / n;
    (mae, mse.sqrt(), 1.0 - mse / var, mbe)
}

pub fn oracle_classification(pred: &[f64], y: &[f64], threshold: f64) -> (f64, f64, f64, f64) {
    let p: Vec<bool> = pred.iter().map(|v| *v >= threshold).collect();
    let a: Vec<bool> = y.iter().map(|v| *v >= threshold).collect();
    let count = |f: &dyn Fn(bool, bool) -> bool| p.iter().zip(&a).filter(|(x, y)| f(**x, **y)).count() as f64;
    let tp = count(&|x, y| x && y);
    let fp = count(&|x, y| x && !y);
    let fneg = count(&|x, y| !x && y);
    let correct = count(&|x, y| x == y);
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (correct / y.len() as f64, precision, recall, f1)
}

/// OLS coefficients through the SVD pseudo-inverse, intercept first.
pub fn pinv_ols(features: &[Vec<f64>], targets: &[f64]) -> Vec<f64> {
    let n = features.len();
    let w = features[0].len();
    let x = DMatrix::from_fn(n, w + 1, |i, j| if j == 0 { 1.0 } else { features[i][j - 1] });
    let y = DVector::from_column_slice(targets);
    let pinv = x.pseudo_inverse(1e-12).expect("svd converges");
    (pinv * y).iter().copied().collect()
}

// --------------------------------------------------------- surrogate oracles

/// Forward pass with explicit matrices, applying input scaling if present.
pub fn oracle_forward(net: &SurrogateNet, features: &[Vec<f64>]) -> Vec<f64> {
    features
        .iter()
        .map(|row| {
            let mut v: Vec<f64> = match &net.input_scaling {
                Some(s) => row
                    .iter()
                    .zip(s.mean.iter().zip(&s.scale))
                    .map(|(x, (m, sc))| (x - m) / sc)
                    .collect(),
                None => row.clone(),
            };
            let last = net.layers.len() - 1;
            for (k, layer) in net.layers.iter().enumerate() {
                let w = DMatrix::from_fn(layer.weights.len(), v.len(), |i, j| layer.weights[i][j]);
                let z = w * DVector::from_column_slice(&v) + DVector::from_column_slice(&layer.biases);
                v = z
                    .iter()
                    .map(|&x| {
                        if k == last {
                            x
                        } else {
                            match net.activation {
                                Activation::Tanh => x.tanh(),
                                Activation::Relu => x.max(0.0),
                            }
                        }
                    })
                    .collect();
            }
            v[0]
        })
        .collect()
}

/// Random batch with every loss term active, including a coupled node.
pub fn random_batch(rng: &mut ChaCha8Rng, width: usize, rows: usize) -> TrainingBatch {
    let features: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..width).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    let targets = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = rows.min(4);
    let node = |rng: &mut ChaCha8Rng, len: usize| PhysicsNode {
        energy: (0..=len).map(|_| rng.random_range(0.0..3.0)).collect(),
        power_in: (0..len).map(|_| rng.random_range(0.0..1.0)).collect(),
        power_loss: (0..len).map(|_| rng.random_range(0.0..1.0)).collect(),
        coupling: None,
    };
    let plain = node(rng, 3);
    let mut coupled = node(rng, n);
    coupled.coupling = Some(Coupling {
        rows: (0..n).collect(),
        offset_kwh: (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
    });
    TrainingBatch {
        features,
        targets,
        nodes: vec![plain, coupled],
        desired_temp: vec![21.0, 22.0],
        actual_temp: vec![20.5, 22.75],
        dt_hours: 1.0,
    }
}

/// Largest relative deviation between the analytic gradient and central
/// differences with step `h`.
pub fn gradient_check(batch: &TrainingBatch, net: &SurrogateNet, weights: &LossWeights, h: f64) -> f64 {
    let (_, grad) = surrogate::gradient(batch, net, weights).expect("gradient");
    let analytic = surrogate::flatten(&grad);
    let base = net.params();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_params(&p).unwrap();
        let up = surrogate::total_loss(batch, &probe, weights).unwrap().total;
        p[i] = base[i] - h;
        probe.set_params(&p).unwrap();
        let down = surrogate::total_loss(batch, &probe, weights).unwrap().total;
        let fd = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(fd.abs()).max(1e-8);
        worst = worst.max((analytic[i] - fd).abs() / scale);
    }
    worst
}

/// The twenty net shapes of the gradient check: inputs 2..=6 × hidden {4, 8, 12, 16}.
pub fn gradient_shapes() -> Vec<Vec<usize>> {
    (2..=6)
        .flat_map(|i| [4, 8, 12, 16].map(|h| vec![i, h, 1]))
        .collect()
}

// ------------------------------------------------------ scheduling instances

pub fn zone(initial: f64, r_th: f64, c_th: f64) -> ZoneConfig {
    ZoneConfig {
        name: "z".into(),
        initial_temp: initial,
        r_th,
        c_th,
    }
}

pub fn optimality_params(heat_levels: usize, band: f64) -> gridtwin::agent::AgentParams {
    gridtwin::agent::AgentParams {
        alpha: 0.5,
        gamma: 1.0,
        epsilon_start: 1.0,
        epsilon_end: 0.05,
        epsilon_decay: 0.995,
        episodes: 1500,
        heat_levels,
        temp_band_width: band,
    }
}

/// Small instances whose legal schedules can be enumerated (at most 12 each).
pub fn optimality_instances() -> Vec<(&'static str, TwinConfig, gridtwin::agent::AgentParams)> {
    let mut heated = instance(vec![heater(2.0, 0, 0, 1)], vec![zone(20.0, 5.0, 2.0)], &[0.1, 0.3], 2);
    heated.comfort.beta = 0.5;
    let mut heated3 = heated.clone();
    heated3.price_curve = tariff(&[0.4, 0.05]);
    let mut mixed = instance(
        vec![shiftable("w", 1.0, 0, 1, 1), heater(2.0, 0, 1, 1)],
        vec![zone(20.0, 5.0, 2.0)],
        &[0.3, 0.1],
        2,
    );
    mixed.comfort.beta = 0.2;
    vec![
        (
            "one appliance, cheap middle hour",
            instance(vec![shiftable("w", 1.0, 0, 2, 1)], vec![], &[0.5, 0.1, 0.5], 3),
            optimality_params(3, 2.0),
        ),
        (
            "two-hour runtime",
            instance(vec![shiftable("w", 1.0, 0, 2, 2)], vec![], &[0.3, 0.1, 0.2], 3),
            optimality_params(3, 2.0),
        ),
        (
            "two appliances, overlapping windows",
            instance(
                vec![shiftable("a", 1.0, 0, 1, 1), shiftable("b", 2.0, 1, 1, 1)],
                vec![],
                &[0.2, 0.4],
                2,
            ),
            optimality_params(3, 2.0),
        ),
        ("heater, two levels", heated, optimality_params(2, 0.25)),
        ("heater, three levels", heated3, optimality_params(3, 0.25)),
        ("appliance and heater", mixed, optimality_params(2, 0.25)),
        (
            "zero prices",
            instance(vec![shiftable("w", 1.0, 0, 2, 1)], vec![], &[0.0, 0.0, 0.0], 3),
            optimality_params(3, 2.0),
        ),
    ]
}

pub struct OptimalityOutcome {
    pub schedules: usize,
    pub brute_objective: f64,
    pub brute_cost: f64,
    pub agent_objective: f64,
    pub agent_cost: f64,
}

impl OptimalityOutcome {
    pub fn optimal(&self) -> bool {
        let tol = 1e-12 * self.brute_objective.abs().max(1.0);
        (self.agent_objective - self.brute_objective).abs() <= tol
            && (self.agent_cost - self.brute_cost).abs() <= tol
    }
}

pub fn check_optimality(cfg: &TwinConfig, params: &gridtwin::agent::AgentParams, seed: u64) -> OptimalityOutcome {
    let bf = brute_force(cfg, params.heat_levels);
    let trained = gridtwin::agent::train(cfg, params, seed).expect("training succeeds");
    let ep = gridtwin::agent::greedy_rollout(&trained.table, cfg, 0).expect("rollout succeeds");
    OptimalityOutcome {
        schedules: bf.schedules,
        brute_objective: bf.best_objective,
        brute_cost: bf.best_cost,
        agent_objective: ep.objective(),
        agent_cost: ep.total_cost(),
    }
}

// -------------------------------------------------------------------- ledger

/// Chain of `blocks` blocks (genesis included), 1–3 transactions each.
pub fn sample_chain(blocks: usize, seed: u64) -> gridtwin::ledger::Ledger {
    use gridtwin::ledger::{Ledger, NetParams, TxKind};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = Ledger::new(["meter", "agent", "twin"]);
    let params = NetParams {
        throughput: 50.0,
        latency: 0.1,
    };
    for b in 1..blocks {
        for k in 0..rng.random_range(1..=3usize) {
            let (kind, author) = [
                (TxKind::MeterReading, "meter"),
                (TxKind::Action, "agent"),
                (TxKind::Feedback, "twin"),
            ][k];
            let payload = format!("{{\"block\":{b},\"value\":{}}}", rng.random_range(0.0..10.0f64)).into_bytes();
            ledger.submit(b as u32, kind, author, payload).unwrap();
        }
        ledger.commit(&params).unwrap();
    }
    ledger
}

// ------------------------------------------------------------------ artifacts

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).expect("readable file"));
            }
        }
    }
    out
}
