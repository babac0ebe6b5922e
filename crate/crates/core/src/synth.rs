//! Deterministic single-zone HVAC simulator with fault injection.
//!
//! One row per minute. Outdoor temperature follows a daily sinusoid, a
//! bang-bang thermostat drives heating and cooling around a 22 degC setpoint
//! with 0.5 degC hysteresis, and the zone integrates
//!
//! ```text
//! zone[t+1] = zone[t] + a*(outdoor - zone) + b*heat - c*cool + d*occupancy
//!           + vent*damper_pos*(outdoor - zone) + noise
//! ```
//!
//! Faults that act on the plant (damper, coil, control logic) re-run the
//! dynamics forward from the window start so downstream columns respond.
//! Sensor faults only distort the reported `zone_temp`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::{FeatureMeta, FeatureRole, TableError, TimeSeriesTable};

pub const ROWS_PER_DAY: usize = 1440;
const OCCUPIED_FROM: usize = 8 * 60;
const OCCUPIED_UNTIL: usize = 18 * 60;
/// Largest sensor offset, reached at intensity 1.
pub const MAX_SENSOR_OFFSET: f64 = 5.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    Config(String),
    #[error("fault window {start}:{end} is outside a table of {rows} rows")]
    Window { start: usize, end: usize, rows: usize },
    #[error("fault intensity {0} is outside (0, 1]")]
    Intensity(f64),
    #[error("unknown fault kind `{0}`")]
    UnknownFault(String),
    #[error("table is missing simulator column `{0}`")]
    Column(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub length: usize,
    pub seed: u64,
    pub outdoor_mean: f64,
    pub outdoor_amplitude: f64,
    /// Envelope conductance per step.
    pub a: f64,
    /// Heating gain per step.
    pub b: f64,
    /// Cooling gain per step.
    pub c: f64,
    /// Occupant heat gain per step.
    pub d: f64,
    /// Outdoor-air exchange per step at a fully open damper.
    pub ventilation: f64,
    pub noise_sigma: f64,
    pub setpoint: f64,
    pub hysteresis: f64,
    pub initial_zone_temp: f64,
    /// When false all HVAC commands stay at zero.
    pub controls_enabled: bool,
    /// When false the building is never occupied.
    pub occupancy_enabled: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            length: 2 * ROWS_PER_DAY,
            seed: 0,
            outdoor_mean: 10.0,
            outdoor_amplitude: 6.0,
            a: 0.004,
            b: 0.08,
            c: 0.1,
            d: 0.01,
            ventilation: 0.004,
            noise_sigma: 0.02,
            setpoint: 22.0,
            hysteresis: 0.5,
            initial_zone_temp: 21.0,
            controls_enabled: true,
            occupancy_enabled: true,
        }
    }
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.length < 2 {
            return Err(SimError::Config("length must be at least 2".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(SimError::Config("noise sigma must be >= 0".into()));
        }
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(SimError::Config("a must lie in (0, 1)".into()));
        }
        if self.hysteresis < 0.0 {
            return Err(SimError::Config("hysteresis must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    HeatingCoilLeak,
    DamperStuck,
    SensorBias,
    SensorDrift,
    SimultaneousHeatCool,
}

impl FaultKind {
    pub const ALL: [FaultKind; 5] = [
        FaultKind::HeatingCoilLeak,
        FaultKind::DamperStuck,
        FaultKind::SensorBias,
        FaultKind::SensorDrift,
        FaultKind::SimultaneousHeatCool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FaultKind::HeatingCoilLeak => "heating_coil_leak",
            FaultKind::DamperStuck => "damper_stuck",
            FaultKind::SensorBias => "sensor_bias",
            FaultKind::SensorDrift => "sensor_drift",
            FaultKind::SimultaneousHeatCool => "simultaneous_heat_cool",
        }
    }

    pub fn is_sensor_fault(self) -> bool {
        matches!(self, FaultKind::SensorBias | FaultKind::SensorDrift)
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaultKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SimError::UnknownFault(s.to_string()))
    }
}

/// A fault active on rows `start..end` (end exclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub intensity: f64,
    pub start: usize,
    pub end: usize,
}

impl FaultSpec {
    pub fn new(kind: FaultKind, intensity: f64, window: std::ops::Range<usize>) -> Self {
        Self {
            kind,
            intensity,
            start: window.start,
            end: window.end,
        }
    }

    fn validate(&self, rows: usize) -> Result<(), SimError> {
        if !(self.intensity > 0.0 && self.intensity <= 1.0) {
            return Err(SimError::Intensity(self.intensity));
        }
        if self.start >= self.end || self.end > rows {
            return Err(SimError::Window {
                start: self.start,
                end: self.end,
                rows,
            });
        }
        Ok(())
    }

    fn active(&self, t: usize) -> bool {
        self.start <= t && t < self.end
    }
}

/// Column names in table order.
pub const COLUMNS: [&str; 9] = [
    "outdoor_temp",
    "zone_temp",
    "heat_cmd",
    "cool_cmd",
    "damper_cmd",
    "damper_pos",
    "fan_status",
    "fan_speed",
    "occupancy",
];

const OUTDOOR: usize = 0;
const ZONE: usize = 1;
const HEAT: usize = 2;
const COOL: usize = 3;
const DAMPER_CMD: usize = 4;
const DAMPER_POS: usize = 5;
const FAN_STATUS: usize = 6;
const FAN_SPEED: usize = 7;
const OCCUPANCY: usize = 8;

/// Metadata for the simulator's columns with physical role text.
pub fn feature_meta() -> Vec<FeatureMeta> {
    use FeatureRole::*;
    vec![
        FeatureMeta::new("outdoor_temp", "degC", "outdoor air dry-bulb temperature, the main driver of envelope heat loss and gain", Sensor),
        FeatureMeta::new("zone_temp", "degC", "measured zone air temperature, reflects indoor thermal conditions and comfort", Sensor),
        FeatureMeta::new("heat_cmd", "binary", "heating coil valve command from the thermostat, 1 when heating is requested", Command),
        FeatureMeta::new("cool_cmd", "binary", "cooling coil valve command from the thermostat, 1 when cooling is requested", Command),
        FeatureMeta::new("damper_cmd", "fraction", "commanded outdoor-air damper position, fraction open", Command),
        FeatureMeta::new("damper_pos", "fraction", "actual outdoor-air damper position, fraction open", Sensor),
        FeatureMeta::new("fan_status", "binary", "supply fan on/off status, follows the occupancy schedule", Status),
        FeatureMeta::new("fan_speed", "fraction", "supply fan speed, proportional to the zone setpoint error", Command),
        FeatureMeta::new("occupancy", "binary", "occupancy schedule flag, 1 during working hours when occupants add internal heat gains", Status),
    ]
}

struct Noise {
    outdoor: Vec<f64>,
    zone: Vec<f64>,
}

fn noise(cfg: &SimConfig) -> Noise {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut outdoor = Vec::with_capacity(cfg.length);
    let mut zone = Vec::with_capacity(cfg.length);
    if cfg.noise_sigma == 0.0 {
        outdoor.resize(cfg.length, 0.0);
        zone.resize(cfg.length, 0.0);
    } else {
        let dist = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated");
        for _ in 0..cfg.length {
            outdoor.push(dist.sample(&mut rng));
            zone.push(dist.sample(&mut rng));
        }
    }
    Noise { outdoor, zone }
}

fn occupied(cfg: &SimConfig, t: usize) -> bool {
    let minute = t % ROWS_PER_DAY;
    cfg.occupancy_enabled && (OCCUPIED_FROM..OCCUPIED_UNTIL).contains(&minute)
}

/// Generates a fault-free labeled table (all labels 0).
pub fn simulate(cfg: &SimConfig) -> Result<TimeSeriesTable, SimError> {
    Simulator::new(cfg.clone())?.simulate()
}

/// Injects `spec` into a table produced by a simulator with config `cfg`.
pub fn inject_fault(
    table: &TimeSeriesTable,
    spec: &FaultSpec,
    cfg: &SimConfig,
) -> Result<TimeSeriesTable, SimError> {
    Simulator::new(cfg.clone())?.inject_fault(table, spec)
}

#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn simulate(&self) -> Result<TimeSeriesTable, SimError> {
        let cfg = &self.cfg;
        let n = cfg.length;
        let noise = noise(cfg);
        let mut cols = vec![vec![0.0; n]; COLUMNS.len()];
        for t in 0..n {
            cols[OUTDOOR][t] = cfg.outdoor_mean
                + cfg.outdoor_amplitude * (2.0 * PI * t as f64 / ROWS_PER_DAY as f64).sin()
                + noise.outdoor[t];
            cols[OCCUPANCY][t] = f64::from(u8::from(occupied(cfg, t)));
        }
        cols[ZONE][0] = cfg.initial_zone_temp;
        self.run_from(&mut cols, &noise, 0, None);
        Ok(TimeSeriesTable::new(
            feature_meta(),
            cols,
            (0..n as i64).map(|t| t * 60).collect(),
            Some(vec![0; n]),
        )?)
    }

    /// Re-runs the plant from row `start` onward, with `fault` active on its
    /// window. Outdoor temperature and occupancy are exogenous and kept.
    fn run_from(&self, cols: &mut [Vec<f64>], noise: &Noise, start: usize, fault: Option<&FaultSpec>) {
        let cfg = &self.cfg;
        let n = cols[ZONE].len();
        let (lo, hi) = (cfg.setpoint - cfg.hysteresis, cfg.setpoint + cfg.hysteresis);
        let mut heating = start > 0 && cols[HEAT][start - 1] > 0.5;
        let mut cooling = start > 0 && cols[COOL][start - 1] > 0.5;
        let mut stuck_at: Option<f64> = None;

        for t in start..n {
            let zone = cols[ZONE][t];
            let outdoor = cols[OUTDOOR][t];
            let occ = cols[OCCUPANCY][t] > 0.5;
            let active = fault.filter(|f| f.active(t));

            if cfg.controls_enabled {
                if zone < lo {
                    heating = true;
                } else if zone >= cfg.setpoint {
                    heating = false;
                }
                if zone > hi {
                    cooling = true;
                } else if zone <= cfg.setpoint {
                    cooling = false;
                }
            }
            let (mut heat, mut cool) = (f64::from(u8::from(heating)), f64::from(u8::from(cooling)));
            let damper_cmd = if cfg.controls_enabled {
                let base = if occ { 0.3 } else { 0.1 };
                (base + 0.02 * (outdoor - cfg.outdoor_mean)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut damper_pos = damper_cmd;
            let mut leak = 0.0;

            match active.map(|f| (f.kind, f.intensity)) {
                Some((FaultKind::DamperStuck, _)) => {
                    damper_pos = *stuck_at.get_or_insert(damper_cmd);
                }
                Some((FaultKind::HeatingCoilLeak, intensity)) if heat == 0.0 => {
                    leak = cfg.b * intensity;
                }
                Some((FaultKind::SimultaneousHeatCool, _)) => {
                    heat = 1.0;
                    cool = 1.0;
                }
                _ => {}
            }

            cols[HEAT][t] = heat;
            cols[COOL][t] = cool;
            cols[DAMPER_CMD][t] = damper_cmd;
            cols[DAMPER_POS][t] = damper_pos;
            cols[FAN_STATUS][t] = f64::from(u8::from(occ));
            cols[FAN_SPEED][t] = if cfg.controls_enabled {
                (0.4 * (cfg.setpoint - zone).abs()).clamp(0.0, 1.0)
            } else {
                0.0
            };

            if t + 1 < n {
                let occ_gain = if occ { cfg.d } else { 0.0 };
                cols[ZONE][t + 1] = zone
                    + cfg.a * (outdoor - zone)
                    + cfg.b * heat
                    - cfg.c * cool
                    + occ_gain
                    + cfg.ventilation * damper_pos * (outdoor - zone)
                    + leak
                    + noise.zone[t];
            }
        }
    }

    /// Applies `spec` to `table` and labels its window. Plant faults
    /// overwrite every row from the window start onward, so inject multiple
    /// faults in chronological order.
    pub fn inject_fault(
        &self,
        table: &TimeSeriesTable,
        spec: &FaultSpec,
    ) -> Result<TimeSeriesTable, SimError> {
        let n = table.len();
        spec.validate(n)?;
        let mut cols = Vec::with_capacity(COLUMNS.len());
        for name in COLUMNS {
            cols.push(
                table
                    .column(name)
                    .ok_or_else(|| SimError::Column(name.to_string()))?
                    .to_vec(),
            );
        }

        match spec.kind {
            FaultKind::SensorBias => {
                let offset = MAX_SENSOR_OFFSET * spec.intensity;
                for v in &mut cols[ZONE][spec.start..spec.end] {
                    *v += offset;
                }
            }
            FaultKind::SensorDrift => {
                let span = (spec.end - spec.start).saturating_sub(1).max(1) as f64;
                let top = MAX_SENSOR_OFFSET * spec.intensity;
                for (k, v) in cols[ZONE][spec.start..spec.end].iter_mut().enumerate() {
                    *v += top * k as f64 / span;
                }
            }
            _ => {
                let mut cfg = self.cfg.clone();
                cfg.length = n;
                let noise = noise(&cfg);
                self.run_from(&mut cols, &noise, spec.start, Some(spec));
            }
        }

        let mut labels = table.labels().map(<[u8]>::to_vec).unwrap_or_else(|| vec![0; n]);
        labels[spec.start..spec.end].fill(1);

        let mut out = table.clone();
        for (name, col) in COLUMNS.iter().zip(cols) {
            out = out.with_column(name, col)?;
        }
        Ok(out.with_labels(Some(labels))?)
    }
}

/// Fault-free run followed by one injected fault.
pub fn faulted_corpus(cfg: &SimConfig, spec: &FaultSpec) -> Result<TimeSeriesTable, SimError> {
    let sim = Simulator::new(cfg.clone())?;
    sim.inject_fault(&sim.simulate()?, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col<'a>(t: &'a TimeSeriesTable, name: &str) -> &'a [f64] {
        t.column(name).unwrap()
    }

    fn variance(xs: &[f64]) -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn deterministic_in_seed() {
        let a = simulate(&SimConfig::with_seed(42)).unwrap();
        let b = simulate(&SimConfig::with_seed(42)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate(&SimConfig::with_seed(43)).unwrap());
        assert!(a.labels().unwrap().iter().all(|&l| l == 0));
        assert_eq!(a.len(), 2880);
        assert_eq!(a.feature_names().collect::<Vec<_>>(), COLUMNS);
    }

    // Independent re-statement of the noiseless recurrence for the first
    // unoccupied hour (no occupancy gain, constant outdoor temperature).
    #[test]
    fn noiseless_run_matches_hand_recurrence() {
        let cfg = SimConfig {
            noise_sigma: 0.0,
            outdoor_amplitude: 0.0,
            ..SimConfig::with_seed(1)
        };
        let table = simulate(&cfg).unwrap();
        let zone = col(&table, "zone_temp");

        let (out, mut z, mut heating) = (cfg.outdoor_mean, cfg.initial_zone_temp, false);
        let damper = (0.1f64 + 0.0).clamp(0.0, 1.0);
        let mut expected = vec![z];
        for _ in 0..49 {
            if z < 21.5 {
                heating = true;
            } else if z >= 22.0 {
                heating = false;
            }
            let heat = if heating { 1.0 } else { 0.0 };
            z = z + cfg.a * (out - z) + cfg.b * heat + cfg.ventilation * damper * (out - z);
            expected.push(z);
        }
        for (t, (got, want)) in zone.iter().zip(&expected).enumerate() {
            assert!((got - want).abs() < 1e-12, "row {t}: {got} vs {want}");
        }

        // monotone approach from below until the setpoint is first reached
        let first_top = zone.iter().position(|&v| v >= 22.0).unwrap();
        assert!(zone[..=first_top].windows(2).all(|w| w[1] > w[0]));
        // afterwards the zone stays inside the hysteresis band plus one step
        let step = cfg.b + cfg.a * 12.0 + cfg.ventilation * 0.3 * 12.0 + cfg.d;
        for &v in &zone[first_top..] {
            assert!(v > 21.5 - step && v < 22.5 + step, "{v}");
        }
    }

    #[test]
    fn zone_drifts_to_outdoor_without_hvac() {
        let cfg = SimConfig {
            noise_sigma: 0.0,
            controls_enabled: false,
            occupancy_enabled: false,
            initial_zone_temp: 25.0,
            ..SimConfig::with_seed(3)
        };
        let t = simulate(&cfg).unwrap();
        let (zone, out) = (col(&t, "zone_temp"), col(&t, "outdoor_temp"));
        for i in 0..t.len() - 1 {
            let step = zone[i + 1] - zone[i];
            let pull = out[i] - zone[i];
            assert!(step * pull >= 0.0 && step.abs() <= pull.abs(), "row {i}");
        }
    }

    #[test]
    fn sensor_bias_adds_exact_offset() {
        let cfg = SimConfig::with_seed(42);
        let clean = simulate(&cfg).unwrap();
        let spec = FaultSpec::new(FaultKind::SensorBias, 1.0, 100..200);
        let faulty = inject_fault(&clean, &spec, &cfg).unwrap();
        assert_eq!(col(&faulty, "zone_temp")[150], col(&clean, "zone_temp")[150] + 5.0);
        assert_eq!(col(&faulty, "zone_temp")[99], col(&clean, "zone_temp")[99]);
        assert_eq!(col(&faulty, "zone_temp")[200], col(&clean, "zone_temp")[200]);
        let labels = faulty.labels().unwrap();
        assert!(labels.iter().enumerate().all(|(i, &l)| (l == 1) == (100..200).contains(&i)));
    }

    #[test]
    fn sensor_drift_ramps_to_full_offset() {
        let cfg = SimConfig::with_seed(5);
        let clean = simulate(&cfg).unwrap();
        let spec = FaultSpec::new(FaultKind::SensorDrift, 0.5, 10..21);
        let faulty = inject_fault(&clean, &spec, &cfg).unwrap();
        let diff = |t: usize| col(&faulty, "zone_temp")[t] - col(&clean, "zone_temp")[t];
        assert_eq!(diff(10), 0.0);
        assert!((diff(15) - 1.25).abs() < 1e-12);
        assert!((diff(20) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn damper_stuck_freezes_position() {
        let cfg = SimConfig::with_seed(7);
        let t = faulted_corpus(&cfg, &FaultSpec::new(FaultKind::DamperStuck, 0.8, 1000..1400)).unwrap();
        let pos = &col(&t, "damper_pos")[1000..1400];
        assert!(pos.iter().all(|&v| v == pos[0]));
        assert!(variance(&col(&t, "damper_cmd")[1000..1400]) > 0.0);
        assert_eq!(col(&t, "damper_pos")[1400], col(&t, "damper_cmd")[1400]);
    }

    #[test]
    fn plant_faults_perturb_the_zone() {
        let cfg = SimConfig::with_seed(9);
        let clean = simulate(&cfg).unwrap();
        for kind in [FaultKind::HeatingCoilLeak, FaultKind::SimultaneousHeatCool, FaultKind::DamperStuck] {
            let t = inject_fault(&clean, &FaultSpec::new(kind, 1.0, 500..900), &cfg).unwrap();
            let (z, z0) = (col(&t, "zone_temp"), col(&clean, "zone_temp"));
            assert_eq!(z[..=500], z0[..=500], "{kind}");
            assert!(z[501..900].iter().zip(&z0[501..900]).any(|(a, b)| a != b), "{kind}");
        }
        let t = inject_fault(&clean, &FaultSpec::new(FaultKind::SimultaneousHeatCool, 1.0, 500..900), &cfg).unwrap();
        assert!(col(&t, "heat_cmd")[500..900].iter().all(|&v| v == 1.0));
        assert!(col(&t, "cool_cmd")[500..900].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn invalid_specs() {
        let cfg = SimConfig::with_seed(1);
        let clean = simulate(&cfg).unwrap();
        assert!(matches!(
            inject_fault(&clean, &FaultSpec::new(FaultKind::SensorBias, 1.0, 2800..2900), &cfg),
            Err(SimError::Window { .. })
        ));
        assert!(matches!(
            inject_fault(&clean, &FaultSpec::new(FaultKind::SensorBias, 0.0, 1..2), &cfg),
            Err(SimError::Intensity(_))
        ));
        assert!("sensor_bias".parse::<FaultKind>().is_ok());
        assert!("gremlins".parse::<FaultKind>().is_err());
        assert!(simulate(&SimConfig { length: 1, ..cfg.clone() }).is_err());
        assert!(simulate(&SimConfig { a: 1.0, ..cfg }).is_err());
    }
}
