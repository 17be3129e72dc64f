//! Feed-forward consumption surrogate trained on a physics-penalized loss.
//!
//! The total loss is `data + lambda_physics * physics + mu_comfort * comfort`:
//!
//! * `data`: squared prediction error per sample,
//! * `physics`: squared energy-balance residual `dE/dt - P_in + P_loss` per
//!   node and interval, with a forward-difference derivative,
//! * `comfort`: squared deviation of actual from desired temperature.
//!
//! A physics node may be *coupled* to the network: its power input is then
//! the predicted consumption of a sample minus a known offset, so the
//! residual constrains the predictions. Uncoupled nodes contribute a
//! parameter-independent penalty.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("weights file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation and its image.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Dense layer. `weights[o][i]` connects input `i` to output `o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            weights: vec![vec![0.0; inputs]; outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn affine(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

/// Per-feature affine map applied before the first layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Column means and standard deviations; constant columns get scale 1.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, SurrogateError> {
        let Some(first) = rows.first() else {
            return Err(SurrogateError::Input("cannot standardize zero rows".into()));
        };
        let n = rows.len() as f64;
        let width = first.len();
        let mut mean = vec![0.0; width];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        let mut scale = vec![0.0; width];
        for r in rows {
            for ((s, x), m) in scale.iter_mut().zip(r).zip(&mean) {
                *s += (x - m).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
        }
        Ok(Standardizer { mean, scale })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateNet {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub layers: Vec<Layer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_scaling: Option<Standardizer>,
}

/// Gradient with the same layout as the network's layers.
pub type Gradient = Vec<Layer>;

impl SurrogateNet {
    /// Seeded network with weights and biases uniform in ±1/√fan_in.
    pub fn new(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self, SurrogateError> {
        let mut net = Self::zeros(layer_sizes, activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let fan_in = layer.weights[0].len();
            let bound = 1.0 / (fan_in as f64).sqrt();
            for row in &mut layer.weights {
                for w in row.iter_mut() {
                    *w = rng.random_range(-bound..=bound);
                }
            }
            for b in &mut layer.biases {
                *b = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self, SurrogateError> {
        if layer_sizes.len() < 2 {
            return Err(SurrogateError::Shape("need at least input and output sizes".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(SurrogateError::Shape("layer sizes must be positive".into()));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(SurrogateError::Shape("output layer must have exactly one unit".into()));
        }
        let layers = layer_sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(SurrogateNet {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            layers,
            input_scaling: None,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Checks that stored matrices agree with `layer_sizes` and are finite.
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.layers.len() + 1 != self.layer_sizes.len() {
            return Err(SurrogateError::Shape("layer count disagrees with layer_sizes".into()));
        }
        if self.layer_sizes.last() != Some(&1) {
            return Err(SurrogateError::Shape("output layer must have exactly one unit".into()));
        }
        for (l, (layer, w)) in self.layers.iter().zip(self.layer_sizes.windows(2)).enumerate() {
            let ok = layer.weights.len() == w[1]
                && layer.biases.len() == w[1]
                && layer.weights.iter().all(|r| r.len() == w[0]);
            if !ok {
                return Err(SurrogateError::Shape(format!("layer {l} is not {}x{}", w[1], w[0])));
            }
            let finite = layer.weights.iter().flatten().chain(&layer.biases).all(|x| x.is_finite());
            if !finite {
                return Err(SurrogateError::Input(format!("layer {l} has non-finite parameters")));
            }
        }
        if let Some(s) = &self.input_scaling {
            if s.mean.len() != self.input_width() || s.scale.len() != self.input_width() {
                return Err(SurrogateError::Shape("input scaling width".into()));
            }
        }
        Ok(())
    }

    fn check_features(&self, features: &[Vec<f64>]) -> Result<(), SurrogateError> {
        if let Some((i, row)) = features
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != self.input_width())
        {
            return Err(SurrogateError::Shape(format!(
                "row {i} has {} features, network expects {}",
                row.len(),
                self.input_width()
            )));
        }
        Ok(())
    }

    fn scaled(&self, row: &[f64]) -> Vec<f64> {
        match &self.input_scaling {
            Some(s) => s.apply(row),
            None => row.to_vec(),
        }
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let last = self.layers.len() - 1;
        let mut a = self.scaled(row);
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&a);
            a = if l == last {
                z
            } else {
                z.into_iter().map(|v| self.activation.apply(v)).collect()
            };
        }
        a[0]
    }

    /// One prediction per feature row.
    pub fn forward(&self, features: &[Vec<f64>]) -> Result<Vec<f64>, SurrogateError> {
        self.check_features(features)?;
        Ok(features.iter().map(|r| self.predict_row(r)).collect())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.biases.len() * (l.weights[0].len() + 1))
            .sum()
    }

    /// Parameters in layer order: each layer's weights row-major, then biases.
    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), SurrogateError> {
        if flat.len() != self.param_count() {
            return Err(SurrogateError::Shape(format!(
                "{} parameters for a network with {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut it = flat.iter();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().flatten() {
                *w = *it.next().unwrap();
            }
            for b in &mut layer.biases {
                *b = *it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), SurrogateError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|source| SurrogateError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, SurrogateError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SurrogateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let net: SurrogateNet = serde_json::from_str(&text)?;
        net.validate()?;
        Ok(net)
    }
}

/// Flattens a gradient in the same order as [`SurrogateNet::params`].
pub fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().flatten().chain(&l.biases).copied())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_physics: f64,
    pub mu_comfort: f64,
    /// Use means instead of sums for every loss component.
    #[serde(default)]
    pub normalize_losses: bool,
}

impl LossWeights {
    pub fn new(lambda_physics: f64, mu_comfort: f64) -> Self {
        LossWeights {
            lambda_physics,
            mu_comfort,
            normalize_losses: false,
        }
    }

    fn validate(&self) -> Result<(), SurrogateError> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if ok(self.lambda_physics) && ok(self.mu_comfort) {
            Ok(())
        } else {
            Err(SurrogateError::Input("loss weights must be finite and non-negative".into()))
        }
    }
}

/// Predicted power input of a coupled node: `(yhat[rows[t]] - offset_kwh[t]) / dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub rows: Vec<usize>,
    pub offset_kwh: Vec<f64>,
}

/// Energy balance data for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsNode {
    /// Stored energy samples, kWh; one more than the number of intervals.
    pub energy: Vec<f64>,
    /// kW per interval. Ignored when the node is coupled.
    pub power_in: Vec<f64>,
    /// kW per interval.
    pub power_loss: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Coupling>,
}

impl PhysicsNode {
    pub fn intervals(&self) -> usize {
        self.energy.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingBatch {
    pub features: Vec<Vec<f64>>,
    /// kWh
    pub targets: Vec<f64>,
    #[serde(default)]
    pub nodes: Vec<PhysicsNode>,
    #[serde(default)]
    pub desired_temp: Vec<f64>,
    #[serde(default)]
    pub actual_temp: Vec<f64>,
    pub dt_hours: f64,
}

impl TrainingBatch {
    /// Data term only.
    pub fn data_only(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Self {
        TrainingBatch {
            features,
            targets,
            nodes: Vec::new(),
            desired_temp: Vec::new(),
            actual_temp: Vec::new(),
            dt_hours: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.features.is_empty() {
            return Err(SurrogateError::Input("batch has no samples".into()));
        }
        if self.features.len() != self.targets.len() {
            return Err(SurrogateError::Shape(format!(
                "{} feature rows for {} targets",
                self.features.len(),
                self.targets.len()
            )));
        }
        if !(self.dt_hours > 0.0 && self.dt_hours.is_finite()) {
            return Err(SurrogateError::Input("dt must be positive".into()));
        }
        if self.desired_temp.len() != self.actual_temp.len() {
            return Err(SurrogateError::Shape("comfort series lengths differ".into()));
        }
        for (j, node) in self.nodes.iter().enumerate() {
            let m = node.intervals();
            if node.energy.len() < 2 {
                return Err(SurrogateError::Input(format!("node {j} needs at least two energy samples")));
            }
            if node.power_in.len() != m || node.power_loss.len() != m {
                return Err(SurrogateError::Shape(format!("node {j}: power series must have {m} entries")));
            }
            if let Some(c) = &node.coupling {
                if c.rows.len() != m || c.offset_kwh.len() != m {
                    return Err(SurrogateError::Shape(format!("node {j}: coupling must have {m} entries")));
                }
                if let Some(r) = c.rows.iter().find(|&&r| r >= self.targets.len()) {
                    return Err(SurrogateError::Shape(format!("node {j}: coupling row {r} out of range")));
                }
            }
        }
        Ok(())
    }

    fn physics_intervals(&self) -> usize {
        self.nodes.iter().map(PhysicsNode::intervals).sum()
    }
}

/// Σ (ŷ − y)².
pub fn loss_data(predicted: &[f64], actual: &[f64]) -> Result<f64, SurrogateError> {
    if predicted.is_empty() {
        return Err(SurrogateError::Input("data loss over zero samples".into()));
    }
    if predicted.len() != actual.len() {
        return Err(SurrogateError::Shape(format!(
            "{} predictions for {} targets",
            predicted.len(),
            actual.len()
        )));
    }
    Ok(predicted.iter().zip(actual).map(|(p, y)| (p - y).powi(2)).sum())
}

/// Energy-balance residuals of one node, kW.
pub fn balance_residuals(energy: &[f64], power_in: &[f64], power_loss: &[f64], dt: f64) -> Result<Vec<f64>, SurrogateError> {
    if energy.len() < 2 {
        return Err(SurrogateError::Input("energy series needs at least two samples".into()));
    }
    let m = energy.len() - 1;
    if power_in.len() != m || power_loss.len() != m {
        return Err(SurrogateError::Shape(format!("power series must have {m} entries")));
    }
    if !(dt > 0.0) {
        return Err(SurrogateError::Input("dt must be positive".into()));
    }
    Ok(energy
        .windows(2)
        .zip(power_in.iter().zip(power_loss))
        .map(|(e, (p_in, p_loss))| (e[1] - e[0]) / dt - p_in + p_loss)
        .collect())
}

/// Σ_j Σ_t ((E_j[t+1] − E_j[t])/Δt − P_in,j[t] + P_loss,j[t])².
pub fn loss_physics(
    energy: &[Vec<f64>],
    power_in: &[Vec<f64>],
    power_loss: &[Vec<f64>],
    dt: f64,
) -> Result<f64, SurrogateError> {
    if energy.len() != power_in.len() || energy.len() != power_loss.len() {
        return Err(SurrogateError::Shape("node counts differ".into()));
    }
    let mut total = 0.0;
    for ((e, p_in), p_loss) in energy.iter().zip(power_in).zip(power_loss) {
        total += balance_residuals(e, p_in, p_loss, dt)?.iter().map(|r| r * r).sum::<f64>();
    }
    Ok(total)
}

/// Σ (desired − actual)².
pub fn loss_comfort(desired: &[f64], actual: &[f64]) -> Result<f64, SurrogateError> {
    if desired.is_empty() {
        return Err(SurrogateError::Input("comfort loss over zero samples".into()));
    }
    if desired.len() != actual.len() {
        return Err(SurrogateError::Shape("comfort series lengths differ".into()));
    }
    Ok(desired.iter().zip(actual).map(|(d, a)| (d - a).powi(2)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub data: f64,
    pub physics: f64,
    pub comfort: f64,
    pub total: f64,
}

/// Residuals of every node, using predictions for coupled inputs.
fn batch_residuals(batch: &TrainingBatch, predictions: &[f64]) -> Result<Vec<Vec<f64>>, SurrogateError> {
    batch
        .nodes
        .iter()
        .map(|node| match &node.coupling {
            None => balance_residuals(&node.energy, &node.power_in, &node.power_loss, batch.dt_hours),
            Some(c) => {
                let p_in: Vec<f64> = c
                    .rows
                    .iter()
                    .zip(&c.offset_kwh)
                    .map(|(&r, off)| (predictions[r] - off) / batch.dt_hours)
                    .collect();
                balance_residuals(&node.energy, &p_in, &node.power_loss, batch.dt_hours)
            }
        })
        .collect()
}

struct Scales {
    data: f64,
    physics: f64,
    comfort: f64,
}

fn scales(batch: &TrainingBatch, weights: &LossWeights) -> Scales {
    if weights.normalize_losses {
        let inv = |n: usize| if n == 0 { 0.0 } else { 1.0 / n as f64 };
        Scales {
            data: inv(batch.targets.len()),
            physics: inv(batch.physics_intervals()),
            comfort: inv(batch.desired_temp.len()),
        }
    } else {
        Scales {
            data: 1.0,
            physics: 1.0,
            comfort: 1.0,
        }
    }
}

fn combine(batch: &TrainingBatch, weights: &LossWeights, predictions: &[f64], residuals: &[Vec<f64>]) -> Result<LossBreakdown, SurrogateError> {
    let s = scales(batch, weights);
    let data = s.data * loss_data(predictions, &batch.targets)?;
    let physics = s.physics * residuals.iter().flatten().map(|r| r * r).sum::<f64>();
    let comfort = if batch.desired_temp.is_empty() {
        0.0
    } else {
        s.comfort * loss_comfort(&batch.desired_temp, &batch.actual_temp)?
    };
    Ok(LossBreakdown {
        data,
        physics,
        comfort,
        total: data + weights.lambda_physics * physics + weights.mu_comfort * comfort,
    })
}

/// `data + lambda_physics * physics + mu_comfort * comfort` on `batch`.
pub fn total_loss(batch: &TrainingBatch, net: &SurrogateNet, weights: &LossWeights) -> Result<LossBreakdown, SurrogateError> {
    batch.validate()?;
    weights.validate()?;
    let predictions = net.forward(&batch.features)?;
    let residuals = batch_residuals(batch, &predictions)?;
    combine(batch, weights, &predictions, &residuals)
}

/// Loss and its exact gradient with respect to every weight and bias,
/// by reverse-mode accumulation over the batch rows in order.
pub fn gradient(batch: &TrainingBatch, net: &SurrogateNet, weights: &LossWeights) -> Result<(LossBreakdown, Gradient), SurrogateError> {
    batch.validate()?;
    weights.validate()?;
    net.check_features(&batch.features)?;
    let n_layers = net.layers.len();

    // Forward pass, keeping pre-activations and activations of every layer.
    let mut traces: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = Vec::with_capacity(batch.features.len());
    let mut predictions = Vec::with_capacity(batch.features.len());
    for row in &batch.features {
        let mut zs = Vec::with_capacity(n_layers);
        let mut acts = vec![net.scaled(row)];
        for (l, layer) in net.layers.iter().enumerate() {
            let z = layer.affine(acts.last().unwrap());
            let a = if l + 1 == n_layers {
                z.clone()
            } else {
                z.iter().map(|&v| net.activation.apply(v)).collect()
            };
            zs.push(z);
            acts.push(a);
        }
        predictions.push(acts[n_layers][0]);
        traces.push((zs, acts));
    }

    let residuals = batch_residuals(batch, &predictions)?;
    let loss = combine(batch, weights, &predictions, &residuals)?;

    // dL/dŷ per row.
    let s = scales(batch, weights);
    let mut dy: Vec<f64> = predictions
        .iter()
        .zip(&batch.targets)
        .map(|(p, y)| 2.0 * s.data * (p - y))
        .collect();
    for (node, res) in batch.nodes.iter().zip(&residuals) {
        if let Some(c) = &node.coupling {
            for (&r, res_t) in c.rows.iter().zip(res) {
                dy[r] -= weights.lambda_physics * s.physics * 2.0 * res_t / batch.dt_hours;
            }
        }
    }

    let mut grad: Gradient = net
        .layers
        .iter()
        .map(|l| Layer::zeros(l.weights[0].len(), l.biases.len()))
        .collect();
    for ((zs, acts), g_out) in traces.iter().zip(&dy) {
        let mut delta = vec![*g_out];
        for l in (0..n_layers).rev() {
            let input = &acts[l];
            let g = &mut grad[l];
            for (o, d) in delta.iter().enumerate() {
                for (gw, x) in g.weights[o].iter_mut().zip(input) {
                    *gw += d * x;
                }
                g.biases[o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &net.layers[l].weights;
            delta = (0..input.len())
                .map(|i| {
                    let back: f64 = delta.iter().enumerate().map(|(o, d)| w[o][i] * d).sum();
                    back * net.activation.derivative(zs[l - 1][i], input[i])
                })
                .collect();
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Loss at the start of every epoch.
    pub history: Vec<LossBreakdown>,
    pub final_loss: LossBreakdown,
}

/// Full-batch gradient descent on the composite loss.
pub fn train(
    batch: &TrainingBatch,
    net: &mut SurrogateNet,
    weights: &LossWeights,
    options: &TrainOptions,
) -> Result<TrainReport, SurrogateError> {
    if !(options.learning_rate >= 0.0 && options.learning_rate.is_finite()) {
        return Err(SurrogateError::Input("learning rate must be finite and >= 0".into()));
    }
    if options.epochs == 0 {
        return Err(SurrogateError::Input("at least one epoch is required".into()));
    }
    let mut history = Vec::with_capacity(options.epochs);
    let mut params = net.params();
    for epoch in 0..options.epochs {
        let (loss, grad) = gradient(batch, net, weights)?;
        if !loss.total.is_finite() {
            return Err(SurrogateError::Diverged { epoch, loss: loss.total });
        }
        history.push(loss);
        for (p, g) in params.iter_mut().zip(flatten(&grad)) {
            *p -= options.learning_rate * g;
        }
        net.set_params(&params)?;
    }
    let final_loss = total_loss(batch, net, weights)?;
    if !final_loss.total.is_finite() {
        return Err(SurrogateError::Diverged {
            epoch: options.epochs,
            loss: final_loss.total,
        });
    }
    Ok(TrainReport { history, final_loss })
}
