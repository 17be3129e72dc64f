//! Seeded synthetic hourly dataset in the consumption/renewables schema.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::CoverageRow;
use crate::twin::{wind_output, TurbineConfig};

pub const HEADER: [&str; 8] = [
    "Timestamp",
    "Baseline_Consumption_kWh",
    "Optimized_Consumption_kWh",
    "Solar_Output_kWh",
    "Wind_Output_kWh",
    "Total_Renewable_Output_kWh",
    "Proposed_Model_Coverage_%",
    "Traditional_Model_Coverage_%",
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema error: expected header {expected:?}, found {found:?}")]
    Schema { expected: Vec<String>, found: Vec<String> },
    #[error("data error in {} row(s): {}", .0.len(), format_rows(.0))]
    Invalid(Vec<RowViolation>),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// A failed invariant; `row` is 1-based, counting data rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct RowViolation {
    pub row: usize,
    pub reason: String,
}

fn format_rows(v: &[RowViolation]) -> String {
    v.iter()
        .map(|r| format!("row {}: {}", r.row, r.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub timestamp: u32,
    pub baseline_consumption_kwh: f64,
    pub optimized_consumption_kwh: f64,
    pub solar_output_kwh: f64,
    pub wind_output_kwh: f64,
    pub total_renewable_output_kwh: f64,
    pub proposed_model_coverage_pct: f64,
    pub traditional_model_coverage_pct: f64,
}

impl DatasetRow {
    pub fn coverage(&self) -> CoverageRow {
        CoverageRow {
            baseline_kwh: self.baseline_consumption_kwh,
            optimized_kwh: self.optimized_consumption_kwh,
            solar_kwh: self.solar_output_kwh,
            wind_kwh: self.wind_output_kwh,
            renewable_kwh: self.total_renewable_output_kwh,
            proposed_pct: self.proposed_model_coverage_pct,
            traditional_pct: self.traditional_model_coverage_pct,
        }
    }

    fn values(&self) -> [f64; 7] {
        [
            self.baseline_consumption_kwh,
            self.optimized_consumption_kwh,
            self.solar_output_kwh,
            self.wind_output_kwh,
            self.total_renewable_output_kwh,
            self.proposed_model_coverage_pct,
            self.traditional_model_coverage_pct,
        ]
    }
}

/// Absolute tolerances for the additive and coverage identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub renewable_sum: f64,
    pub coverage_pct: f64,
}

impl Tolerance {
    /// Full-precision data.
    pub const EXACT: Tolerance = Tolerance {
        renewable_sum: 1e-9,
        coverage_pct: 1e-9,
    };
    /// Data published at three decimals: three rounded terms in the sum, and
    /// a percentage computed before rounding its inputs.
    pub const ROUNDED_3DP: Tolerance = Tolerance {
        renewable_sum: 0.0015 + 1e-9,
        coverage_pct: 0.02,
    };
}

/// Checks one row's invariants; returns every failure.
pub fn row_violations(row: &DatasetRow, tol: Tolerance) -> Vec<String> {
    let mut out = Vec::new();
    if row.values().iter().any(|v| !v.is_finite() || *v < 0.0) {
        out.push("values must be finite and non-negative".to_owned());
        return out;
    }
    let sum = row.solar_output_kwh + row.wind_output_kwh;
    if (row.total_renewable_output_kwh - sum).abs() > tol.renewable_sum {
        out.push(format!(
            "total renewable {} differs from solar + wind {}",
            row.total_renewable_output_kwh, sum
        ));
    }
    if row.optimized_consumption_kwh > row.baseline_consumption_kwh {
        out.push(format!(
            "optimized consumption {} exceeds baseline {}",
            row.optimized_consumption_kwh, row.baseline_consumption_kwh
        ));
    }
    if row.baseline_consumption_kwh <= 0.0 {
        out.push("baseline consumption must be positive".to_owned());
    } else {
        let expected = 100.0 * row.total_renewable_output_kwh / row.baseline_consumption_kwh;
        if (row.proposed_model_coverage_pct - expected).abs() > tol.coverage_pct {
            out.push(format!(
                "proposed coverage {} differs from recomputed {}",
                row.proposed_model_coverage_pct, expected
            ));
        }
    }
    if row.traditional_model_coverage_pct > row.proposed_model_coverage_pct {
        out.push("traditional coverage exceeds proposed coverage".to_owned());
    }
    out
}

pub fn validate(rows: &[DatasetRow], tol: Tolerance) -> Result<(), DataError> {
    let violations: Vec<RowViolation> = rows
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            row_violations(r, tol)
                .into_iter()
                .map(move |reason| RowViolation { row: i + 1, reason })
        })
        .collect();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(DataError::Invalid(violations))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// kWh per hour outside the peaks.
    pub base_load_kwh: f64,
    pub morning_peak_kwh: f64,
    pub evening_peak_kwh: f64,
    pub demand_noise_kwh: f64,
    /// kWh at solar noon under a clear sky.
    pub solar_peak_kwh: f64,
    pub wind_mean_speed: f64,
    /// AR(1) coefficient of hourly wind speed.
    pub wind_persistence: f64,
    pub wind_noise: f64,
    pub turbine: TurbineConfig,
    /// Range of the daily fraction of consumption shaved by optimization.
    pub shave_range: [f64; 2],
    /// Range of traditional coverage as a fraction of proposed coverage.
    pub traditional_ratio: [f64; 2],
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            base_load_kwh: 6.0,
            morning_peak_kwh: 3.0,
            evening_peak_kwh: 5.0,
            demand_noise_kwh: 0.8,
            solar_peak_kwh: 1.6,
            wind_mean_speed: 6.5,
            wind_persistence: 0.8,
            wind_noise: 1.2,
            turbine: TurbineConfig {
                cut_in: 3.0,
                rated_speed: 12.0,
                cut_out: 25.0,
                rated_kw: 3.0,
            },
            shave_range: [0.10, 0.20],
            traditional_ratio: [0.65, 0.95],
        }
    }
}

const SUNRISE: u32 = 6;
const SUNSET: u32 = 20;

fn is_peak_hour(h: u32) -> bool {
    (7..=9).contains(&h) || (17..=21).contains(&h)
}

fn bump(h: f64, centre: f64, width: f64) -> f64 {
    (-((h - centre) / width).powi(2)).exp()
}

/// `n_hours` rows starting at hour 0. Solar output is zero outside 06:00–20:00.
pub fn generate(seed: u64, n_hours: usize, scenario: &Scenario) -> Vec<DatasetRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let demand_noise = Normal::new(0.0, scenario.demand_noise_kwh.max(0.0)).expect("finite sigma");
    let wind_noise = Normal::new(0.0, scenario.wind_noise.max(0.0)).expect("finite sigma");
    let mut wind_speed = scenario.wind_mean_speed;
    let mut shave = 0.0;
    let mut rows = Vec::with_capacity(n_hours);
    for t in 0..n_hours as u32 {
        let h = t % 24;
        if h == 0 {
            shave = rng.random_range(scenario.shave_range[0]..=scenario.shave_range[1]);
        }
        let hf = f64::from(h);
        let baseline = (scenario.base_load_kwh
            + scenario.morning_peak_kwh * bump(hf, 8.0, 1.5)
            + scenario.evening_peak_kwh * bump(hf, 19.0, 2.0)
            + demand_noise.sample(&mut rng))
        .max(0.5);
        let cut = if is_peak_hour(h) { 1.5 * shave } else { 0.6 * shave };
        let optimized = baseline * (1.0 - cut);

        let solar = if (SUNRISE..SUNSET).contains(&h) {
            let clear = (std::f64::consts::PI * (hf - f64::from(SUNRISE) + 0.5) / f64::from(SUNSET - SUNRISE)).sin();
            scenario.solar_peak_kwh * clear * rng.random_range(0.3..=1.0)
        } else {
            0.0
        };
        wind_speed = (scenario.wind_mean_speed
            + scenario.wind_persistence * (wind_speed - scenario.wind_mean_speed)
            + wind_noise.sample(&mut rng))
        .max(0.0);
        let wind = wind_output(wind_speed, &scenario.turbine).unwrap_or(0.0);
        let renewable = solar + wind;
        let proposed = 100.0 * renewable / baseline;
        let traditional = proposed * rng.random_range(scenario.traditional_ratio[0]..=scenario.traditional_ratio[1]);
        rows.push(DatasetRow {
            timestamp: t,
            baseline_consumption_kwh: baseline,
            optimized_consumption_kwh: optimized,
            solar_output_kwh: solar,
            wind_output_kwh: wind,
            total_renewable_output_kwh: renewable,
            proposed_model_coverage_pct: proposed,
            traditional_model_coverage_pct: traditional,
        });
    }
    rows
}

fn fmt(v: f64, round3: bool) -> String {
    if round3 {
        format!("{v:.3}")
    } else {
        format!("{v}")
    }
}

/// CSV text. Full precision unless `round3`.
pub fn to_csv(rows: &[DatasetRow], round3: bool) -> Result<String, DataError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for r in rows {
        let mut record = vec![r.timestamp.to_string()];
        record.extend(r.values().iter().map(|v| fmt(*v, round3)));
        w.write_record(&record)?;
    }
    let bytes = w.into_inner().map_err(|e| DataError::Io {
        path: "<memory>".into(),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

pub fn write_csv(rows: &[DatasetRow], path: impl AsRef<Path>, round3: bool) -> Result<(), DataError> {
    let path = path.as_ref();
    std::fs::write(path, to_csv(rows, round3)?).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses CSV text with the exact header, then validates every row.
pub fn parse_csv(text: &str, tol: Tolerance) -> Result<Vec<DatasetRow>, DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let found: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if found != HEADER {
        return Err(DataError::Schema {
            expected: HEADER.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let parsed = (|| {
            let timestamp = record[0].parse::<u32>().map_err(|e| format!("Timestamp: {e}"))?;
            let mut v = [0.0; 7];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = record[k + 1]
                    .parse::<f64>()
                    .map_err(|e| format!("{}: {e}", HEADER[k + 1]))?;
            }
            Ok::<_, String>(DatasetRow {
                timestamp,
                baseline_consumption_kwh: v[0],
                optimized_consumption_kwh: v[1],
                solar_output_kwh: v[2],
                wind_output_kwh: v[3],
                total_renewable_output_kwh: v[4],
                proposed_model_coverage_pct: v[5],
                traditional_model_coverage_pct: v[6],
            })
        })();
        match parsed {
            Ok(r) => rows.push(r),
            Err(reason) => bad.push(RowViolation { row: i + 1, reason }),
        }
    }
    if !bad.is_empty() {
        return Err(DataError::Invalid(bad));
    }
    validate(&rows, tol)?;
    Ok(rows)
}

pub fn load_csv(path: impl AsRef<Path>, tol: Tolerance) -> Result<Vec<DatasetRow>, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text, tol)
}
