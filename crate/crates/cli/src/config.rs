//! Experiment configuration: a JSON document read by `simulate` and `tune`.

use std::path::{Path, PathBuf};

use isr_core::demand::VolumeDistribution;
use isr_core::sim::{PolicyConfig, SimConfig};
use isr_core::{generate_city, City, ShiftConfig, SolverParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ConfigError;

pub const DEFAULT_CLUSTERS: usize = 100;
pub const DEFAULT_AREA_KM: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CitySource {
    /// A `city.json` written by `gen-city`; relative paths are resolved
    /// against the config file.
    File(PathBuf),
    Generate {
        seed: u64,
        #[serde(default = "default_clusters")]
        clusters: usize,
        #[serde(default = "default_area")]
        area_km: f64,
    },
}

fn default_clusters() -> usize {
    DEFAULT_CLUSTERS
}

fn default_area() -> f64 {
    DEFAULT_AREA_KM
}

impl Default for CitySource {
    fn default() -> Self {
        CitySource::Generate {
            seed: 0,
            clusters: DEFAULT_CLUSTERS,
            area_km: DEFAULT_AREA_KM,
        }
    }
}

impl CitySource {
    pub fn load(&self, base: &Path) -> Result<City, ConfigError> {
        match self {
            CitySource::File(path) => {
                let path = base.join(path);
                City::load(&path).map_err(|e| ConfigError(format!("city {}: {e}", path.display())))
            }
            &CitySource::Generate {
                seed,
                clusters,
                area_km,
            } => {
                if clusters == 0 || !(area_km > 0.0) {
                    return Err(ConfigError("generated city needs clusters > 0 and area_km > 0".into()));
                }
                let (synthetic, matrix) = generate_city(seed, clusters, area_km);
                Ok(synthetic.into_city(matrix, ShiftConfig::default()))
            }
        }
    }
}

/// One policy under study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub policy: PolicyConfig,
    /// Overrides the city's fleet size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicles: Option<usize>,
}

/// Integrated-policy grid for `tune`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneGrid {
    pub epsilon: Vec<f64>,
    pub rho_km: Vec<f64>,
    pub sensor: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vehicles: Option<usize>,
}

impl Default for TuneGrid {
    fn default() -> Self {
        TuneGrid {
            epsilon: (0..=10).map(|k| k as f64 / 100.0).collect(),
            rho_km: (0..=10).map(|k| f64::from(1u32 << k)).collect(),
            sensor: false,
            vehicles: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub city: CitySource,
    pub scenarios: Vec<Scenario>,
    /// Every scenario is also run with each of these fleet sizes.
    pub fleet_sizes: Vec<usize>,
    /// Every scenario is also run with each of these sensor settings.
    pub sensor: Vec<bool>,
    pub seeds: Vec<u64>,
    pub horizon_days: u32,
    pub warmup_days: u32,
    pub solver: SolverParams,
    pub volumes: VolumeDistribution,
    pub tune: TuneGrid,
    /// Write the event log of every cell.
    pub write_logs: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        ExperimentConfig {
            city: CitySource::default(),
            scenarios: Vec::new(),
            fleet_sizes: Vec::new(),
            sensor: Vec::new(),
            seeds: vec![0],
            horizon_days: sim.horizon_days,
            warmup_days: sim.warmup_days,
            solver: sim.solver,
            volumes: sim.volumes,
            tune: TuneGrid::default(),
            write_logs: false,
        }
    }
}

/// A fully expanded scenario: policy, fleet size and display id.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub id: String,
    pub policy: PolicyConfig,
    pub vehicles: Option<usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError("at least one seed is required".into()));
        }
        if self.warmup_days >= self.horizon_days {
            return Err(ConfigError(format!(
                "warm-up ({} days) must be shorter than the horizon ({} days)",
                self.warmup_days, self.horizon_days
            )));
        }
        if self.fleet_sizes.contains(&0) || self.scenarios.iter().any(|s| s.vehicles == Some(0)) {
            return Err(ConfigError("fleet sizes must be positive".into()));
        }
        let mut names: Vec<&str> = self.scenarios.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) || names.iter().any(|n| !valid_name(n)) {
            return Err(ConfigError(
                "scenario names must be unique, non-empty and use only letters, digits, '-', '_' or '.'".into(),
            ));
        }
        for s in &self.scenarios {
            if let PolicyConfig::Isr { epsilon, rho_km, .. } = s.policy {
                check_isr(epsilon, rho_km)?;
            }
        }
        self.volumes.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(())
    }

    /// Short hex digest of the canonical form of the config.
    pub fn hash(&self) -> String {
        config_hash(self)
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            horizon_days: self.horizon_days,
            warmup_days: self.warmup_days,
            seed,
            solver: self.solver.clone(),
            volumes: self.volumes,
            log_deposits: false,
        }
    }

    /// Scenarios crossed with the fleet sizes and sensor settings.
    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for s in &self.scenarios {
            let fleets: Vec<Option<usize>> = if self.fleet_sizes.is_empty() {
                vec![s.vehicles]
            } else {
                self.fleet_sizes.iter().copied().map(Some).collect()
            };
            let sensors: Vec<Option<bool>> = if self.sensor.is_empty() {
                vec![None]
            } else {
                self.sensor.iter().copied().map(Some).collect()
            };
            for &vehicles in &fleets {
                for &sensor in &sensors {
                    let mut id = s.name.clone();
                    if !self.fleet_sizes.is_empty() {
                        id.push_str(&format!("-v{}", vehicles.unwrap_or_default()));
                    }
                    let policy = match sensor {
                        Some(on) => {
                            id.push_str(if on { "-sensor" } else { "-nosensor" });
                            s.policy.clone().with_sensor(on)
                        }
                        None => s.policy.clone(),
                    };
                    out.push(Variant { id, policy, vehicles });
                }
            }
        }
        out
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

pub(crate) fn check_isr(epsilon: f64, rho_km: f64) -> Result<(), ConfigError> {
    if !(0.0..1.0).contains(&epsilon) || !(rho_km >= 0.0) || !rho_km.is_finite() {
        return Err(ConfigError(format!(
            "integrated policy needs 0 <= epsilon < 1 and a finite rho >= 0 (got {epsilon}, {rho_km})"
        )));
    }
    Ok(())
}

/// Sixteen hex digits of the SHA-256 of a value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("configs serialise");
    hex::encode(&Sha256::digest(&json)[..8])
}
