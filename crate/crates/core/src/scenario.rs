//! Reproducible run description, read from JSON.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::CoverageMap;
use crate::dynamics::SignalThresholds;
use crate::qos::{
    self, LatencyVariant, QosError, QosTarget, RadioConfig, RegulatoryCap, RoadGeometry,
    TrafficModel,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("platoon size analytics infeasible: {0}")]
    Infeasible(#[from] QosError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPlatoon {
    pub size: u64,
    /// Front bumper of the leader.
    pub lead_position_m: f64,
    #[serde(default)]
    pub subchannel: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub road_length_m: f64,
    pub duration_s: f64,
    #[serde(default = "default_timestep")]
    pub timestep_s: f64,
    #[serde(default)]
    pub seed: u64,
    pub geometry: RoadGeometry,
    pub radio: RadioConfig,
    pub traffic: TrafficModel,
    pub qos: QosTarget,
    pub cap: RegulatoryCap,
    pub thresholds: SignalThresholds,
    #[serde(default = "default_range")]
    pub transmission_range_m: f64,
    #[serde(default)]
    pub latency_variant: LatencyVariant,
    pub initial_platoons: Vec<InitialPlatoon>,
    #[serde(default)]
    pub coverage: CoverageMap,
    /// Standard deviation of log-normal shadowing; 0 disables it.
    #[serde(default)]
    pub shadowing_sigma_db: f64,
    #[serde(default = "default_speed_delta")]
    pub speed_delta_mps: f64,
    #[serde(default = "default_guard")]
    pub guard_margin_m: f64,
}

fn default_timestep() -> f64 {
    0.1
}

fn default_range() -> f64 {
    1000.0
}

fn default_speed_delta() -> f64 {
    2.0
}

fn default_guard() -> f64 {
    50.0
}

/// Size caps in and out of base-station coverage, with the slot budget they
/// were derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageCaps {
    pub n_slots: u64,
    pub in_coverage: u64,
    pub out_of_coverage: u64,
}

impl CoverageCaps {
    pub fn compute(
        radio: &RadioConfig,
        traffic: &TrafficModel,
        qos: &QosTarget,
        cap: &RegulatoryCap,
        variant: LatencyVariant,
    ) -> Result<Self, QosError> {
        Ok(Self {
            n_slots: qos::slots_per_interval(radio, traffic)?,
            in_coverage: qos::platoon_size_in_coverage(radio, traffic, qos, cap, variant)?,
            out_of_coverage: qos::platoon_size_out_of_coverage(radio, traffic, qos, cap)?,
        })
    }
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Number of steps a run takes, `ceil(duration / timestep)`.
    pub fn steps(&self) -> u64 {
        ((self.duration_s / self.timestep_s) - 1e-9).ceil().max(1.0) as u64
    }

    /// Checks every scenario invariant and returns the coverage caps.
    pub fn validate(&self) -> Result<CoverageCaps, ScenarioError> {
        let positive = [
            ("road_length_m", self.road_length_m),
            ("timestep_s", self.timestep_s),
            ("transmission_range_m", self.transmission_range_m),
            ("speed_delta_mps", self.speed_delta_mps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be > 0")));
            }
        }
        if !(self.duration_s >= self.timestep_s && self.duration_s.is_finite()) {
            return Err(invalid("duration_s must be >= timestep_s"));
        }
        if !(self.guard_margin_m >= 0.0) {
            return Err(invalid("guard_margin_m must be >= 0"));
        }
        if !(self.shadowing_sigma_db >= 0.0 && self.shadowing_sigma_db.is_finite()) {
            return Err(invalid("shadowing_sigma_db must be >= 0"));
        }
        if self.speed_delta_mps >= self.geometry.speed_mps() {
            return Err(invalid("speed_delta_mps must be below the cruise speed"));
        }
        self.coverage.validate().map_err(ScenarioError::Invalid)?;
        if self.initial_platoons.is_empty() {
            return Err(invalid("at least one initial platoon is required"));
        }

        let caps = CoverageCaps::compute(
            &self.radio,
            &self.traffic,
            &self.qos,
            &self.cap,
            self.latency_variant,
        )?;
        let limit = caps.in_coverage;

        let mut spans: Vec<(f64, f64)> = Vec::new();
        for (i, p) in self.initial_platoons.iter().enumerate() {
            if p.size == 0 {
                return Err(invalid(format!("initial platoon {i} is empty")));
            }
            if p.size > limit {
                return Err(invalid(format!(
                    "initial platoon {i} has {} vehicles, above the cap of {limit}",
                    p.size
                )));
            }
            if p.subchannel >= self.radio.subchannel_count() {
                return Err(invalid(format!(
                    "initial platoon {i} uses sub-channel {} of {}",
                    p.subchannel,
                    self.radio.subchannel_count()
                )));
            }
            let head = p.lead_position_m;
            let tail = head - self.geometry.platoon_length_m(p.size);
            if !(head.is_finite() && tail >= 0.0 && head <= self.road_length_m) {
                return Err(invalid(format!(
                    "initial platoon {i} does not fit on the road"
                )));
            }
            spans.push((head, tail));
        }
        spans.sort_by(|a, b| b.0.total_cmp(&a.0));
        if spans.windows(2).any(|w| w[1].0 > w[0].1) {
            return Err(invalid("initial platoons overlap"));
        }
        Ok(caps)
    }
}
