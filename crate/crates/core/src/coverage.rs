//! Base-station geometry and the log-distance signal model.

use serde::{Deserialize, Serialize};

/// Signal reported where no base station exists.
pub const NO_SIGNAL_DBM: f64 = f64::NEG_INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStation {
    pub position_m: f64,
    pub tx_power_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageMap {
    #[serde(default)]
    pub base_stations: Vec<BaseStation>,
    #[serde(default = "default_exponent")]
    pub pathloss_exponent: f64,
    #[serde(default = "default_reference_distance")]
    pub reference_distance_m: f64,
    /// Loss at the reference distance; the default is free-space loss at 1 m
    /// for a 5.9 GHz carrier.
    #[serde(default = "default_reference_loss")]
    pub reference_loss_db: f64,
}

fn default_exponent() -> f64 {
    3.0
}

fn default_reference_distance() -> f64 {
    1.0
}

fn default_reference_loss() -> f64 {
    47.9
}

impl Default for CoverageMap {
    fn default() -> Self {
        Self {
            base_stations: Vec::new(),
            pathloss_exponent: default_exponent(),
            reference_distance_m: default_reference_distance(),
            reference_loss_db: default_reference_loss(),
        }
    }
}

impl CoverageMap {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.pathloss_exponent >= 2.0) {
            return Err(format!(
                "pathloss_exponent must be >= 2, got {}",
                self.pathloss_exponent
            ));
        }
        if !(self.reference_distance_m > 0.0) {
            return Err("reference_distance_m must be > 0".into());
        }
        if !self.reference_loss_db.is_finite() {
            return Err("reference_loss_db must be finite".into());
        }
        for bs in &self.base_stations {
            if !(bs.position_m.is_finite() && bs.tx_power_dbm.is_finite()) {
                return Err("base station position and power must be finite".into());
            }
        }
        Ok(())
    }

    /// Distance from a base station at which the received signal equals
    /// `level_dbm`.
    pub fn range_for_level(&self, tx_power_dbm: f64, level_dbm: f64) -> f64 {
        let excess = tx_power_dbm - self.reference_loss_db - level_dbm;
        self.reference_distance_m * 10f64.powf(excess / (10.0 * self.pathloss_exponent))
    }
}

/// Strongest received base-station signal at `position_m`.
pub fn signal_strength(position_m: f64, map: &CoverageMap) -> f64 {
    map.base_stations
        .iter()
        .map(|bs| {
            let d = (position_m - bs.position_m)
                .abs()
                .max(map.reference_distance_m);
            bs.tx_power_dbm
                - map.reference_loss_db
                - 10.0 * map.pathloss_exponent * (d / map.reference_distance_m).log10()
        })
        .fold(NO_SIGNAL_DBM, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_bs() -> CoverageMap {
        CoverageMap {
            base_stations: vec![BaseStation {
                position_m: 0.0,
                tx_power_dbm: 46.0,
            }],
            pathloss_exponent: 3.0,
            reference_distance_m: 1.0,
            reference_loss_db: 40.0,
        }
    }

    #[test]
    fn empty_map_has_no_signal() {
        assert_eq!(
            signal_strength(123.0, &CoverageMap::default()),
            NO_SIGNAL_DBM
        );
    }

    #[test]
    fn reference_distance_has_no_pathloss() {
        let m = one_bs();
        assert_eq!(signal_strength(1.0, &m), 6.0);
        assert_eq!(signal_strength(0.2, &m), 6.0);
    }

    #[test]
    fn doubling_distance_costs_alpha_times_3db() {
        let m = one_bs();
        let drop = signal_strength(500.0, &m) - signal_strength(1000.0, &m);
        assert!((drop - 30.0 * 2f64.log10()).abs() < 1e-12);
        assert!((drop - 9.03).abs() < 0.01);
    }

    #[test]
    fn strongest_station_wins() {
        let mut m = one_bs();
        m.base_stations.push(BaseStation {
            position_m: 4000.0,
            tx_power_dbm: 46.0,
        });
        assert_eq!(signal_strength(3999.0, &m), 6.0);
        assert!((signal_strength(1500.0, &m) - signal_strength(2500.0, &m)).abs() < 1e-12);
    }

    #[test]
    fn level_range_inverts_signal() {
        let m = one_bs();
        let r = m.range_for_level(46.0, -90.0);
        assert!((signal_strength(r, &m) + 90.0).abs() < 1e-9);
    }

    #[test]
    fn validation() {
        let mut m = one_bs();
        m.pathloss_exponent = 1.5;
        assert!(m.validate().is_err());
        assert!(one_bs().validate().is_ok());
    }
}
