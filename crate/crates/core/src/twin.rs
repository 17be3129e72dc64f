//! Digital twin of a small building.
//!
//! The twin advances an hourly state (zone temperatures, appliance status,
//! weather, tariff) under an agent action and a seeded weather disturbance.
//! Zones follow a first-order RC model; renewable output is consumed before
//! grid energy.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Length of one twin step, hours.
pub const DT_HOURS: f64 = 1.0;

#[derive(Debug, Error)]
pub enum TwinError {
    #[error("invalid twin configuration: {0}")]
    Config(String),
    #[error("illegal action at hour {hour}: {reason}")]
    IllegalAction { hour: u32, reason: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("episode already finished at hour {0}")]
    EpisodeOver(u32),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing twin config: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplianceKind {
    /// Agent-controlled on/off load that must run `required_runtime` hours
    /// inside its window.
    Shiftable,
    /// Heater of one zone; `power_rating` caps the zone's heat power.
    Thermal,
    /// Uncontrolled load, on for every hour of its window.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceSpec {
    pub id: String,
    /// kW
    pub power_rating: f64,
    pub kind: ApplianceKind,
    pub earliest_start: u32,
    pub latest_end: u32,
    #[serde(default)]
    pub required_runtime: u32,
    /// Zone heated by a thermal appliance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zone: Option<usize>,
}

impl ApplianceSpec {
    pub fn in_window(&self, t: u32) -> bool {
        self.earliest_start <= t && t <= self.latest_end
    }

    /// Number of window hours at or after `t`.
    pub fn slots_from(&self, t: u32) -> u32 {
        if t > self.latest_end {
            0
        } else {
            self.latest_end - t.max(self.earliest_start) + 1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneConfig {
    pub name: String,
    /// °C
    pub initial_temp: f64,
    /// Thermal resistance to outdoors, °C/kW.
    pub r_th: f64,
    /// Thermal capacitance, kWh/°C.
    pub c_th: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelConfig {
    pub efficiency: f64,
    pub area_m2: f64,
    pub rated_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurbineConfig {
    /// m/s
    pub cut_in: f64,
    pub rated_speed: f64,
    pub cut_out: f64,
    pub rated_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComfortProfile {
    /// °C per zone.
    pub desired_temp: Vec<f64>,
    /// Weight of squared temperature deviation against energy cost.
    pub beta: f64,
    /// Weight of unmet appliance demand (kWh) against energy cost.
    pub lambda_unsat: f64,
}

/// Standard deviations of the additive weather disturbance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    #[serde(default)]
    pub irradiance_sigma: f64,
    #[serde(default)]
    pub wind_sigma: f64,
    #[serde(default)]
    pub outdoor_temp_sigma: f64,
}

/// Undisturbed weather, indexed by hour of day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WeatherConfig {
    Diurnal {
        /// W/m² at solar noon.
        peak_irradiance: f64,
        sunrise: u32,
        sunset: u32,
        wind_mean: f64,
        wind_amplitude: f64,
        outdoor_mean: f64,
        outdoor_amplitude: f64,
    },
    Hourly {
        irradiance: Vec<f64>,
        wind_speed: Vec<f64>,
        outdoor_temp: Vec<f64>,
    },
}

impl WeatherConfig {
    /// (irradiance W/m², wind m/s, outdoor °C) at hour `t`.
    pub fn base(&self, t: u32) -> (f64, f64, f64) {
        let h = t % 24;
        match self {
            WeatherConfig::Diurnal {
                peak_irradiance,
                sunrise,
                sunset,
                wind_mean,
                wind_amplitude,
                outdoor_mean,
                outdoor_amplitude,
            } => {
                let irradiance = if h >= *sunrise && h < *sunset {
                    let day = f64::from(sunset - sunrise);
                    peak_irradiance * (std::f64::consts::PI * (f64::from(h - sunrise) + 0.5) / day).sin()
                } else {
                    0.0
                };
                let phase = 2.0 * std::f64::consts::PI * f64::from(h) / 24.0;
                let wind = (wind_mean + wind_amplitude * phase.sin()).max(0.0);
                let outdoor = outdoor_mean
                    + outdoor_amplitude
                        * (2.0 * std::f64::consts::PI * (f64::from(h) - 15.0) / 24.0).cos();
                (irradiance, wind, outdoor)
            }
            WeatherConfig::Hourly {
                irradiance,
                wind_speed,
                outdoor_temp,
            } => {
                let i = h as usize;
                (irradiance[i], wind_speed[i], outdoor_temp[i])
            }
        }
    }
}

fn default_horizon() -> u32 {
    24
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinConfig {
    pub appliances: Vec<ApplianceSpec>,
    pub zones: Vec<ZoneConfig>,
    pub panel: PanelConfig,
    pub turbine: TurbineConfig,
    /// Tariff per hour of day, currency/kWh. Exactly 24 entries.
    pub price_curve: Vec<f64>,
    pub comfort: ComfortProfile,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub weather: WeatherConfig,
    #[serde(default = "default_horizon")]
    pub horizon: u32,
    #[serde(default)]
    pub seed: u64,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TwinError> {
    if cond {
        Ok(())
    } else {
        Err(TwinError::Config(msg()))
    }
}

fn finite_nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

impl TwinConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, TwinError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TwinError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: TwinConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TwinError> {
        check(!self.appliances.is_empty(), || "appliance list is empty".into())?;
        check(self.horizon >= 1, || "horizon must be at least 1".into())?;
        check(self.price_curve.len() == 24, || {
            format!("price curve needs 24 entries, got {}", self.price_curve.len())
        })?;
        check(self.price_curve.iter().all(|p| finite_nonneg(*p)), || {
            "prices must be finite and non-negative".into()
        })?;
        check(self.comfort.desired_temp.len() == self.zones.len(), || {
            format!(
                "{} desired temperatures for {} zones",
                self.comfort.desired_temp.len(),
                self.zones.len()
            )
        })?;
        check(self.comfort.desired_temp.iter().all(|t| t.is_finite()), || {
            "desired temperatures must be finite".into()
        })?;
        check(
            finite_nonneg(self.comfort.beta) && finite_nonneg(self.comfort.lambda_unsat),
            || "comfort weights must be non-negative".into(),
        )?;
        for z in &self.zones {
            check(z.initial_temp.is_finite(), || format!("zone {}: initial temperature", z.name))?;
            check(z.r_th > 0.0 && z.r_th.is_finite(), || format!("zone {}: r_th must be > 0", z.name))?;
            check(z.c_th > 0.0 && z.c_th.is_finite(), || format!("zone {}: c_th must be > 0", z.name))?;
        }
        let mut heated = vec![false; self.zones.len()];
        for a in &self.appliances {
            check(a.power_rating > 0.0 && a.power_rating.is_finite(), || {
                format!("appliance {}: power rating must be > 0", a.id)
            })?;
            check(a.earliest_start <= a.latest_end, || {
                format!("appliance {}: earliest_start after latest_end", a.id)
            })?;
            check(a.latest_end < self.horizon, || {
                format!("appliance {}: window ends beyond the horizon", a.id)
            })?;
            check(
                a.required_runtime <= a.latest_end - a.earliest_start + 1,
                || format!("appliance {}: required runtime exceeds its window", a.id),
            )?;
            if a.kind == ApplianceKind::Thermal {
                let zone = a.zone.ok_or_else(|| {
                    TwinError::Config(format!("thermal appliance {} has no zone", a.id))
                })?;
                check(zone < self.zones.len(), || {
                    format!("thermal appliance {}: zone {zone} does not exist", a.id)
                })?;
                check(!heated[zone], || format!("zone {zone} has more than one heater"))?;
                heated[zone] = true;
            }
        }
        let p = &self.panel;
        check(
            (0.0..=1.0).contains(&p.efficiency) && finite_nonneg(p.area_m2) && finite_nonneg(p.rated_kw),
            || "panel parameters out of range".into(),
        )?;
        validate_turbine(&self.turbine)?;
        let n = &self.noise;
        check(
            finite_nonneg(n.irradiance_sigma)
                && finite_nonneg(n.wind_sigma)
                && finite_nonneg(n.outdoor_temp_sigma),
            || "noise sigmas must be non-negative".into(),
        )?;
        match &self.weather {
            WeatherConfig::Diurnal { sunrise, sunset, peak_irradiance, .. } => {
                check(sunrise < sunset && *sunset <= 24, || "sunrise must precede sunset".into())?;
                check(finite_nonneg(*peak_irradiance), || "peak irradiance must be >= 0".into())?;
            }
            WeatherConfig::Hourly {
                irradiance,
                wind_speed,
                outdoor_temp,
            } => {
                check(
                    irradiance.len() == 24 && wind_speed.len() == 24 && outdoor_temp.len() == 24,
                    || "hourly weather needs 24 entries per channel".into(),
                )?;
                check(
                    irradiance.iter().chain(wind_speed).all(|x| finite_nonneg(*x))
                        && outdoor_temp.iter().all(|x| x.is_finite()),
                    || "hourly weather values out of range".into(),
                )?;
            }
        }
        Ok(())
    }

    pub fn shiftable(&self) -> impl Iterator<Item = (usize, &ApplianceSpec)> {
        self.appliances
            .iter()
            .enumerate()
            .filter(|(_, a)| a.kind == ApplianceKind::Shiftable)
    }

    pub fn n_shiftable(&self) -> usize {
        self.shiftable().count()
    }

    /// Heater power available to `zone` at hour `t`, kW.
    pub fn max_heat(&self, zone: usize, t: u32) -> f64 {
        self.appliances
            .iter()
            .filter(|a| a.kind == ApplianceKind::Thermal && a.zone == Some(zone) && a.in_window(t))
            .map(|a| a.power_rating)
            .sum()
    }

    pub fn price_at(&self, t: u32) -> f64 {
        self.price_curve[(t % 24) as usize]
    }
}

fn validate_turbine(t: &TurbineConfig) -> Result<(), TwinError> {
    check(t.cut_in >= 0.0 && t.cut_in < t.rated_speed, || {
        format!("turbine cut-in {} must be below rated speed {}", t.cut_in, t.rated_speed)
    })?;
    check(t.rated_speed <= t.cut_out && t.cut_out.is_finite(), || {
        "turbine rated speed must not exceed cut-out".into()
    })?;
    check(finite_nonneg(t.rated_kw), || "turbine rating must be >= 0".into())
}

/// PV output in kW for a plane-of-array irradiance in W/m².
pub fn solar_output(irradiance: f64, panel: &PanelConfig) -> Result<f64, TwinError> {
    if !(irradiance >= 0.0) {
        return Err(TwinError::Input(format!("irradiance {irradiance} is negative")));
    }
    Ok((panel.efficiency * panel.area_m2 * irradiance / 1000.0).min(panel.rated_kw))
}

/// Turbine output in kW: zero outside [cut-in, cut-out], cubic ramp up to
/// the rated speed, flat at rating above it.
pub fn wind_output(speed: f64, turbine: &TurbineConfig) -> Result<f64, TwinError> {
    validate_turbine(turbine)?;
    if !(speed >= 0.0) {
        return Err(TwinError::Input(format!("wind speed {speed} is negative")));
    }
    let t = turbine;
    Ok(if speed < t.cut_in || speed > t.cut_out {
        0.0
    } else if speed >= t.rated_speed {
        t.rated_kw
    } else {
        t.rated_kw * ((speed - t.cut_in) / (t.rated_speed - t.cut_in)).powi(3)
    })
}

/// One draw of the additive weather disturbance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Disturbance {
    pub irradiance_noise: f64,
    pub wind_noise: f64,
    pub outdoor_temp_noise: f64,
}

/// Zero-mean Gaussian truncated at ±3σ. Consumes no randomness when σ = 0.
fn truncated_normal<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated as finite and positive");
    loop {
        let x = normal.sample(rng);
        if x.abs() <= 3.0 * sigma {
            return x;
        }
    }
}

impl Disturbance {
    pub fn sample<R: Rng + ?Sized>(noise: &NoiseConfig, rng: &mut R) -> Self {
        Disturbance {
            irradiance_noise: truncated_normal(noise.irradiance_sigma, rng),
            wind_noise: truncated_normal(noise.wind_sigma, rng),
            outdoor_temp_noise: truncated_normal(noise.outdoor_temp_sigma, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingState {
    pub t: u32,
    /// °C per zone.
    pub zone_temp: Vec<f64>,
    /// Status of every appliance during the step that led here.
    pub appliance_on: Vec<bool>,
    /// Hours each appliance has run so far this episode.
    pub runtime_done: Vec<u32>,
    pub price: f64,
    pub solar_irradiance: f64,
    pub wind_speed: f64,
    pub outdoor_temp: f64,
    pub cumulative_cost: f64,
}

impl BuildingState {
    /// Hours still owed by each shiftable appliance, in shiftable order.
    pub fn remaining_runtime(&self, config: &TwinConfig) -> Vec<u32> {
        config
            .shiftable()
            .map(|(i, a)| a.required_runtime.saturating_sub(self.runtime_done[i]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// One command per shiftable appliance, in configuration order.
    pub appliance_commands: Vec<bool>,
    /// Requested heat power per zone, kW. Clamped to the heater bounds.
    pub heat_power: Vec<f64>,
}

impl Action {
    /// Everything off, no heating.
    pub fn idle(config: &TwinConfig) -> Self {
        Action {
            appliance_commands: vec![false; config.n_shiftable()],
            heat_power: vec![0.0; config.zones.len()],
        }
    }
}

fn weather_at<R: Rng + ?Sized>(config: &TwinConfig, t: u32, rng: &mut R) -> (f64, f64, f64) {
    let (irr, wind, out) = config.weather.base(t);
    let d = Disturbance::sample(&config.noise, rng);
    (
        (irr + d.irradiance_noise).max(0.0),
        (wind + d.wind_noise).max(0.0),
        out + d.outdoor_temp_noise,
    )
}

/// Initial state of an episode.
pub fn initial_state<R: Rng + ?Sized>(config: &TwinConfig, rng: &mut R) -> BuildingState {
    let (solar_irradiance, wind_speed, outdoor_temp) = weather_at(config, 0, rng);
    BuildingState {
        t: 0,
        zone_temp: config.zones.iter().map(|z| z.initial_temp).collect(),
        appliance_on: vec![false; config.appliances.len()],
        runtime_done: vec![0; config.appliances.len()],
        price: config.price_at(0),
        solar_irradiance,
        wind_speed,
        outdoor_temp,
        cumulative_cost: 0.0,
    }
}

/// Checks the discrete part of `action` against the state's hour.
pub fn check_action(config: &TwinConfig, state: &BuildingState, action: &Action) -> Result<(), TwinError> {
    let illegal = |reason: String| TwinError::IllegalAction { hour: state.t, reason };
    if action.appliance_commands.len() != config.n_shiftable() {
        return Err(illegal(format!(
            "{} appliance commands for {} shiftable appliances",
            action.appliance_commands.len(),
            config.n_shiftable()
        )));
    }
    if action.heat_power.len() != config.zones.len() {
        return Err(illegal(format!(
            "{} heat settings for {} zones",
            action.heat_power.len(),
            config.zones.len()
        )));
    }
    if let Some(k) = action.heat_power.iter().position(|p| p.is_nan()) {
        return Err(illegal(format!("heat power for zone {k} is NaN")));
    }
    for ((_, a), &on) in config.shiftable().zip(&action.appliance_commands) {
        if on && !a.in_window(state.t) {
            return Err(illegal(format!(
                "{} commanded on outside its window [{}, {}]",
                a.id, a.earliest_start, a.latest_end
            )));
        }
    }
    Ok(())
}

fn shortfall(config: &TwinConfig, remaining: impl Iterator<Item = u32>, slots_t: u32) -> f64 {
    config
        .shiftable()
        .zip(remaining)
        .map(|((_, a), r)| a.power_rating * f64::from(r.saturating_sub(a.slots_from(slots_t))))
        .sum()
}

/// Unmet shiftable demand (kWh) already locked in at the start of `state`'s hour.
pub fn unmet_level(config: &TwinConfig, state: &BuildingState) -> f64 {
    shortfall(config, state.remaining_runtime(config).into_iter(), state.t)
}

/// Unmet shiftable demand (kWh) locked in once `action` has been applied:
/// hours owed that no longer fit in what is left of each window, weighted
/// by power rating.
pub fn unmet_demand(config: &TwinConfig, state: &BuildingState, action: &Action) -> f64 {
    let remaining = state
        .remaining_runtime(config)
        .into_iter()
        .zip(&action.appliance_commands)
        .map(|(r, &on)| r.saturating_sub(u32::from(on)));
    shortfall(config, remaining, state.t + 1)
}

/// Per-step accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepBreakdown {
    pub total_load_kwh: f64,
    /// Heat delivered per zone after clamping, kWh.
    pub heat_kwh: Vec<f64>,
    pub solar_kwh: f64,
    pub wind_kwh: f64,
    pub renewable_used_kwh: f64,
    pub grid_kwh: f64,
    /// Energy cost of the grid draw.
    pub cost: f64,
    /// Σ (desired − actual)² over zones at the end of the step.
    pub discomfort: f64,
    /// Unmet demand newly locked in by this step, kWh.
    pub unmet_kwh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: BuildingState,
    pub reward: f64,
    pub done: bool,
    pub breakdown: StepBreakdown,
}

/// Advances `state` by one hour under `action`.
///
/// The reward is `-(cost + beta * discomfort + lambda_unsat * unmet)` where
/// `unmet` is the increment of locked-in shortfall, so an episode is charged
/// once for every kWh of demand left unserved.
pub fn transition<R: Rng + ?Sized>(
    config: &TwinConfig,
    state: &BuildingState,
    action: &Action,
    rng: &mut R,
) -> Result<StepOutcome, TwinError> {
    if state.t >= config.horizon {
        return Err(TwinError::EpisodeOver(state.t));
    }
    check_action(config, state, action)?;
    let t = state.t;

    let heat: Vec<f64> = action
        .heat_power
        .iter()
        .enumerate()
        .map(|(k, p)| p.clamp(0.0, config.max_heat(k, t)))
        .collect();

    let mut appliance_on = vec![false; config.appliances.len()];
    let mut load_kw = 0.0;
    let mut commands = action.appliance_commands.iter();
    for (i, a) in config.appliances.iter().enumerate() {
        let on = match a.kind {
            ApplianceKind::Shiftable => *commands.next().expect("command count checked"),
            ApplianceKind::Fixed => a.in_window(t),
            ApplianceKind::Thermal => a.zone.is_some_and(|z| heat[z] > 0.0),
        };
        appliance_on[i] = on;
        if on && a.kind != ApplianceKind::Thermal {
            load_kw += a.power_rating;
        }
    }
    load_kw += heat.iter().sum::<f64>();
    let total_load_kwh = load_kw * DT_HOURS;

    let solar_kwh = solar_output(state.solar_irradiance, &config.panel)? * DT_HOURS;
    let wind_kwh = wind_output(state.wind_speed, &config.turbine)? * DT_HOURS;
    let renewable_used_kwh = total_load_kwh.min(solar_kwh + wind_kwh);
    let grid_kwh = (total_load_kwh - renewable_used_kwh).max(0.0);
    let cost = state.price * grid_kwh;

    let zone_temp: Vec<f64> = config
        .zones
        .iter()
        .zip(&state.zone_temp)
        .zip(&heat)
        .map(|((z, &temp), &p)| {
            temp + (DT_HOURS / z.c_th) * (p - (temp - state.outdoor_temp) / z.r_th)
        })
        .collect();
    let discomfort: f64 = config
        .comfort
        .desired_temp
        .iter()
        .zip(&zone_temp)
        .map(|(d, a)| (d - a).powi(2))
        .sum();

    let unmet_kwh = (unmet_demand(config, state, action) - unmet_level(config, state)).max(0.0);
    let reward = -(cost + config.comfort.beta * discomfort + config.comfort.lambda_unsat * unmet_kwh);

    let runtime_done = state
        .runtime_done
        .iter()
        .zip(&appliance_on)
        .map(|(d, &on)| d + u32::from(on))
        .collect();

    let next_t = t + 1;
    let (solar_irradiance, wind_speed, outdoor_temp) = weather_at(config, next_t, rng);
    let next = BuildingState {
        t: next_t,
        zone_temp,
        appliance_on,
        runtime_done,
        price: config.price_at(next_t),
        solar_irradiance,
        wind_speed,
        outdoor_temp,
        cumulative_cost: state.cumulative_cost + cost,
    };
    Ok(StepOutcome {
        next,
        reward,
        done: next_t == config.horizon,
        breakdown: StepBreakdown {
            total_load_kwh,
            heat_kwh: heat.iter().map(|p| p * DT_HOURS).collect(),
            solar_kwh,
            wind_kwh,
            renewable_used_kwh,
            grid_kwh,
            cost,
            discomfort,
            unmet_kwh,
        },
    })
}

/// Measurements written back into the twin after an action executes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub t: u32,
    pub consumption_kwh: f64,
    pub grid_kwh: f64,
    pub renewable_kwh: f64,
    pub zone_temp: Vec<f64>,
}

/// Stateful twin: owns the configuration, the disturbance stream and the
/// current state.
#[derive(Debug, Clone)]
pub struct Twin {
    config: TwinConfig,
    rng: ChaCha8Rng,
    state: BuildingState,
}

impl Twin {
    /// Validates `config` and resets to hour 0 under `seed`.
    pub fn new(config: TwinConfig, seed: u64) -> Result<Self, TwinError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = initial_state(&config, &mut rng);
        Ok(Twin { config, rng, state })
    }

    pub fn reset(&mut self, seed: u64) -> &BuildingState {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = initial_state(&self.config, &mut self.rng);
        &self.state
    }

    pub fn config(&self) -> &TwinConfig {
        &self.config
    }

    pub fn state(&self) -> &BuildingState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.t >= self.config.horizon
    }

    pub fn step(&mut self, action: &Action) -> Result<StepOutcome, TwinError> {
        let outcome = transition(&self.config, &self.state, action, &mut self.rng)?;
        self.state = outcome.next.clone();
        Ok(outcome)
    }

    /// Overwrites sensed quantities with measured feedback.
    pub fn synchronize(&mut self, feedback: &Feedback) -> Result<(), TwinError> {
        if feedback.zone_temp.len() != self.state.zone_temp.len() {
            return Err(TwinError::Input(format!(
                "feedback carries {} zone temperatures, twin has {}",
                feedback.zone_temp.len(),
                self.state.zone_temp.len()
            )));
        }
        if feedback.t != self.state.t {
            return Err(TwinError::Input(format!(
                "feedback for hour {} applied at hour {}",
                feedback.t, self.state.t
            )));
        }
        self.state.zone_temp.clone_from(&feedback.zone_temp);
        Ok(())
    }
}
