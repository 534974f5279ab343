//! Simulation configuration: structured text (TOML) with keys mirroring
//! the `SimConfig` field names.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::market::ISPS_PER_DAY;
use crate::settlement::Mechanism;

/// Where the alternative mechanism applies during congestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Uniform base mechanism everywhere, flags ignored.
    None,
    /// Alt mechanism in all regions whenever any region is flagged.
    Global,
    /// Alt mechanism only in flagged regions.
    Local,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Seeds {
    #[serde(default = "default_seed")]
    pub fleet: u64,
    #[serde(default = "default_seed")]
    pub da: u64,
    #[serde(default = "default_seed")]
    pub rt: u64,
}

fn default_seed() -> u64 {
    1
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            fleet: 1,
            da: 1,
            rt: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// DA scenario count (the RT fan is fixed at up×down).
    #[serde(default = "default_da_count")]
    pub da_count: usize,
    #[serde(default = "default_da_sigma")]
    pub da_sigma_rel: f64,
    #[serde(default = "default_rt_count")]
    pub rt_up_count: usize,
    #[serde(default = "default_rt_count")]
    pub rt_down_count: usize,
    #[serde(default = "default_rt_sigma")]
    pub rt_sigma_rel: f64,
}

fn default_da_count() -> usize {
    10
}
fn default_da_sigma() -> f64 {
    0.2
}
fn default_rt_count() -> usize {
    5
}
fn default_rt_sigma() -> f64 {
    0.5
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            da_count: default_da_count(),
            da_sigma_rel: default_da_sigma(),
            rt_up_count: default_rt_count(),
            rt_down_count: default_rt_count(),
            rt_sigma_rel: default_rt_sigma(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RtConfig {
    /// Lookahead window of the rolling-horizon model, in ISPs.
    /// 0 means "to the end of the day".
    #[serde(default)]
    pub lookahead_isps: usize,
}

impl Default for RtConfig {
    fn default() -> Self {
        RtConfig { lookahead_isps: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DsoConfig {
    /// Add the envelope-feasible worst-case BRP deviation to the
    /// projected flow before flagging.
    #[serde(default = "default_true")]
    pub worst_case: bool,
    /// Loading threshold above which the DSO flags congestion.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_true() -> bool {
    true
}
fn default_threshold() -> f64 {
    1.0
}

impl Default for DsoConfig {
    fn default() -> Self {
        DsoConfig {
            worst_case: true,
            threshold: 1.0,
        }
    }
}

/// Arrival/departure/trip-energy distributions for session generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MobilityParams {
    #[serde(default = "default_departure_mean")]
    pub departure_mean_h: f64,
    #[serde(default = "default_departure_sigma")]
    pub departure_sigma_h: f64,
    #[serde(default = "default_arrival_mean")]
    pub arrival_mean_h: f64,
    #[serde(default = "default_arrival_sigma")]
    pub arrival_sigma_h: f64,
    #[serde(default = "default_trip_min")]
    pub trip_kwh_min: f64,
    #[serde(default = "default_trip_max")]
    pub trip_kwh_max: f64,
    /// Nights covered by the generated sessions.
    #[serde(default = "default_horizon_days")]
    pub horizon_days: usize,
}

fn default_departure_mean() -> f64 {
    8.0
}
fn default_departure_sigma() -> f64 {
    1.0
}
fn default_arrival_mean() -> f64 {
    18.0
}
fn default_arrival_sigma() -> f64 {
    1.5
}
fn default_trip_min() -> f64 {
    5.0
}
fn default_trip_max() -> f64 {
    25.0
}
fn default_horizon_days() -> usize {
    1
}

impl Default for MobilityParams {
    fn default() -> Self {
        MobilityParams {
            departure_mean_h: default_departure_mean(),
            departure_sigma_h: default_departure_sigma(),
            arrival_mean_h: default_arrival_mean(),
            arrival_sigma_h: default_arrival_sigma(),
            trip_kwh_min: default_trip_min(),
            trip_kwh_max: default_trip_max(),
            horizon_days: default_horizon_days(),
        }
    }
}

/// One region: connection-point rating, exogenous profiles, attached fleet.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionConfig {
    pub id: String,
    pub line_rating_mw: f64,
    /// Baseload profile, MW. Length 1 (constant), 96 (daily, repeated) or
    /// the full horizon.
    pub baseload_profile_mw: Vec<f64>,
    /// PV infeed profile, MW. Same length rules as the baseload.
    #[serde(default)]
    pub pv_profile_mw: Vec<f64>,
    #[serde(default = "default_n_batteries")]
    pub n_batteries: usize,
    #[serde(default = "default_group_size")]
    pub group_size: usize,
}

fn default_n_batteries() -> usize {
    5
}
fn default_group_size() -> usize {
    100
}

impl RegionConfig {
    /// Expand a profile to per-ISP resolution over `horizon` ISPs.
    pub fn expand_profile(profile: &[f64], horizon: usize) -> Result<Vec<f64>> {
        match profile.len() {
            0 => Ok(vec![0.0; horizon]),
            1 => Ok(vec![profile[0]; horizon]),
            ISPS_PER_DAY => Ok((0..horizon).map(|t| profile[t % ISPS_PER_DAY]).collect()),
            n if n == horizon => Ok(profile.to_vec()),
            n => Err(SimError::Validation(format!(
                "profile length {n} is not 1, {ISPS_PER_DAY} or the horizon {horizon}"
            ))),
        }
    }

    pub fn baseload(&self, horizon: usize) -> Result<Vec<f64>> {
        Self::expand_profile(&self.baseload_profile_mw, horizon)
    }

    pub fn pv(&self, horizon: usize) -> Result<Vec<f64>> {
        Self::expand_profile(&self.pv_profile_mw, horizon)
    }
}

/// Full simulation configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub retail_price: f64,
    pub eta: f64,
    #[serde(default = "default_alt")]
    pub alt_mechanism: Mechanism,
    #[serde(default = "default_scope")]
    pub scope: Scope,
    pub horizon_days: usize,
    /// Market data file, relative to the config file.
    pub market_file: PathBuf,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub scenarios: ScenarioConfig,
    #[serde(default)]
    pub rt: RtConfig,
    #[serde(default)]
    pub dso: DsoConfig,
    #[serde(default)]
    pub mobility: MobilityParams,
    pub regions: Vec<RegionConfig>,
}

fn default_alt() -> Mechanism {
    Mechanism::TwoPrice
}
fn default_scope() -> Scope {
    Scope::None
}

impl SimConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        let mut config: SimConfig = toml::from_str(&text)
            .map_err(|e| SimError::parse(path, e.span().map(|s| s.start).unwrap_or(0), e.message()))?;
        if let Some(dir) = path.parent() {
            if config.market_file.is_relative() {
                config.market_file = dir.join(&config.market_file);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(SimError::Validation(format!(
                "eta {} outside (0, 1]",
                self.eta
            )));
        }
        if !self.retail_price.is_finite() {
            return Err(SimError::Validation("retail_price not finite".to_string()));
        }
        if self.horizon_days == 0 {
            return Err(SimError::Validation("horizon_days must be >= 1".to_string()));
        }
        if self.regions.is_empty() {
            return Err(SimError::Validation("at least one region required".to_string()));
        }
        if self.alt_mechanism == Mechanism::Single {
            return Err(SimError::Validation(
                "alt_mechanism must be two_price or dual_price".to_string(),
            ));
        }
        for region in &self.regions {
            if region.line_rating_mw <= 0.0 {
                return Err(SimError::Validation(format!(
                    "region {}: line_rating_mw must be > 0",
                    region.id
                )));
            }
        }
        if self.scenarios.rt_up_count == 0 || self.scenarios.rt_down_count == 0 {
            return Err(SimError::Validation("rt scenario counts must be >= 1".to_string()));
        }
        Ok(())
    }

    /// Horizon in ISPs.
    pub fn horizon(&self) -> usize {
        self.horizon_days * ISPS_PER_DAY
    }
}
