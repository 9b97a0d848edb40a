//! Experiment configuration: TOML schema, defaults, and validation.

use crate::wire::Mac;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config read error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{key}: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Aetherflow,
    Bridge,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Aetherflow => "aetherflow",
            Mode::Bridge => "bridge",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "aetherflow" => Ok(Mode::Aetherflow),
            "bridge" => Ok(Mode::Bridge),
            other => Err(format!("unknown mode {other:?} (aetherflow or bridge)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    Fixed,
    Trend,
}

impl std::str::FromStr for PredictorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(PredictorKind::Fixed),
            "trend" => Ok(PredictorKind::Trend),
            other => Err(format!("unknown predictor {other:?} (fixed or trend)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentCfg {
    pub mode: Mode,
    #[serde(default = "d_predictor")]
    pub predictor: PredictorKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_duration")]
    pub duration_s: f64,
    #[serde(default = "d_load")]
    pub offered_load_bps: f64,
    #[serde(default = "d_payload")]
    pub datagram_payload_bytes: u32,
    #[serde(default = "d_interval")]
    pub measure_interval_s: f64,
    #[serde(default = "d_threshold")]
    pub handoff_threshold_bps: f64,
    #[serde(default = "d_window_start")]
    pub handoff_window_start_s: f64,
}

fn d_predictor() -> PredictorKind {
    PredictorKind::Fixed
}
fn d_duration() -> f64 {
    30.0
}
fn d_load() -> f64 {
    9_000_000.0
}
fn d_payload() -> u32 {
    1470
}
fn d_interval() -> f64 {
    0.5
}
fn d_threshold() -> f64 {
    8_000_000.0
}
fn d_window_start() -> f64 {
    7.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandoffCfg {
    #[serde(default = "d_fire_at")]
    pub fire_at_s: f64,
    #[serde(default = "d_margin")]
    pub trend_margin_db: f64,
    #[serde(default = "d_revert")]
    pub revert_timeout_s: f64,
}

fn d_fire_at() -> f64 {
    7.0
}
fn d_margin() -> f64 {
    3.0
}
fn d_revert() -> f64 {
    15.0
}

impl Default for HandoffCfg {
    fn default() -> Self {
        HandoffCfg {
            fire_at_s: d_fire_at(),
            trend_margin_db: d_margin(),
            revert_timeout_s: d_revert(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioCfg {
    #[serde(default = "d_pl0")]
    pub pl0_db: f64,
    #[serde(default = "d_d0")]
    pub d0_m: f64,
    #[serde(default = "d_exp")]
    pub exponent_n: f64,
    #[serde(default = "d_sigma")]
    pub shadow_sigma_db: f64,
}

fn d_pl0() -> f64 {
    40.0
}
fn d_d0() -> f64 {
    1.0
}
fn d_exp() -> f64 {
    3.0
}
fn d_sigma() -> f64 {
    2.0
}

impl Default for RadioCfg {
    fn default() -> Self {
        RadioCfg {
            pl0_db: d_pl0(),
            d0_m: d_d0(),
            exponent_n: d_exp(),
            shadow_sigma_db: d_sigma(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchCfg {
    pub datapath_id: u64,
    pub server_port: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorCfg {
    pub server_mac: Mac,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApCfg {
    pub datapath_id: u64,
    pub switch_port: u32,
    pub position: [f64; 2],
    #[serde(default = "d_tx_power")]
    pub tx_power_dbm: i8,
    #[serde(default = "d_channel")]
    pub channel: u8,
    pub ssid: String,
    pub bssid: Mac,
}

fn d_tx_power() -> i8 {
    20
}
fn d_channel() -> u8 {
    6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationCfg {
    pub mac: Mac,
    /// [t_s, x_m, y_m] rows, times strictly increasing.
    pub waypoints: Vec<[f64; 3]>,
    #[serde(default = "d_true")]
    pub roaming: bool,
    #[serde(default = "d_true")]
    pub disassoc_on_leave: bool,
    #[serde(default = "d_roam_threshold")]
    pub roam_threshold_dbm: f64,
    #[serde(default = "d_hysteresis")]
    pub hysteresis_db: f64,
    #[serde(default = "d_scan_interval")]
    pub scan_interval_s: f64,
    #[serde(default = "d_scan_duration")]
    pub scan_duration_s: f64,
    #[serde(default = "d_auth_delay")]
    pub auth_assoc_delay_s: f64,
    #[serde(default = "d_keepalive")]
    pub upstream_keepalive_s: f64,
}

fn d_true() -> bool {
    true
}
fn d_roam_threshold() -> f64 {
    -75.0
}
fn d_hysteresis() -> f64 {
    5.0
}
fn d_scan_interval() -> f64 {
    0.5
}
fn d_scan_duration() -> f64 {
    0.2
}
fn d_auth_delay() -> f64 {
    0.05
}
fn d_keepalive() -> f64 {
    1.0
}

/// Physical cabling inventory; informational only, the switch ports on the
/// AP entries are authoritative.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkCfg {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: ExperimentCfg,
    #[serde(default)]
    pub handoff: HandoffCfg,
    #[serde(default)]
    pub radio: RadioCfg,
    pub switch: SwitchCfg,
    pub generator: GeneratorCfg,
    pub aps: Vec<ApCfg>,
    pub stations: Vec<StationCfg>,
    #[serde(default)]
    pub links: Vec<LinkCfg>,
}

pub const DEFAULT_CONFIG_TOML: &str = include_str!("../../configs/default.toml");

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn default_config() -> Self {
        Self::from_toml(DEFAULT_CONFIG_TOML).expect("built-in config must be valid")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let e = &self.experiment;
        if e.duration_s <= 0.0 {
            return Err(invalid("experiment.duration_s", "must be positive"));
        }
        if e.offered_load_bps <= 0.0 {
            return Err(invalid("experiment.offered_load_bps", "must be positive"));
        }
        if e.datagram_payload_bytes == 0 {
            return Err(invalid("experiment.datagram_payload_bytes", "must be positive"));
        }
        if e.measure_interval_s <= 0.0 {
            return Err(invalid("experiment.measure_interval_s", "must be positive"));
        }
        if e.handoff_threshold_bps <= 0.0 {
            return Err(invalid("experiment.handoff_threshold_bps", "must be positive"));
        }
        if e.handoff_window_start_s < 0.0 {
            return Err(invalid("experiment.handoff_window_start_s", "must not be negative"));
        }
        if self.radio.exponent_n <= 0.0 {
            return Err(invalid("radio.exponent_n", "must be positive"));
        }
        if self.radio.d0_m <= 0.0 {
            return Err(invalid("radio.d0_m", "must be positive"));
        }
        if self.radio.shadow_sigma_db < 0.0 {
            return Err(invalid("radio.shadow_sigma_db", "must not be negative"));
        }
        if self.aps.len() < 2 {
            return Err(invalid("aps", "need at least two APs"));
        }
        if self.stations.is_empty() {
            return Err(invalid("stations", "need at least one station"));
        }
        let mut dpids = vec![self.switch.datapath_id];
        dpids.extend(self.aps.iter().map(|a| a.datapath_id));
        let mut sorted = dpids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != dpids.len() {
            return Err(invalid("aps.datapath_id", "datapath ids must be unique"));
        }
        let mut ports: Vec<u32> = self.aps.iter().map(|a| a.switch_port).collect();
        ports.push(self.switch.server_port);
        let mut psorted = ports.clone();
        psorted.sort_unstable();
        psorted.dedup();
        if psorted.len() != ports.len() {
            return Err(invalid("aps.switch_port", "switch ports must be unique"));
        }
        for (i, ap) in self.aps.iter().enumerate() {
            if ap.ssid.len() > 32 {
                return Err(invalid(&format!("aps[{i}].ssid"), "ssid longer than 32 bytes"));
            }
        }
        for (i, sta) in self.stations.iter().enumerate() {
            if sta.waypoints.is_empty() {
                return Err(invalid(&format!("stations[{i}].waypoints"), "need at least one waypoint"));
            }
            for w in sta.waypoints.windows(2) {
                if w[1][0] <= w[0][0] {
                    return Err(invalid(
                        &format!("stations[{i}].waypoints"),
                        format!("times must be strictly increasing: {} then {}", w[0][0], w[1][0]),
                    ));
                }
            }
            for p in [
                (sta.scan_interval_s, "scan_interval_s"),
                (sta.scan_duration_s, "scan_duration_s"),
                (sta.upstream_keepalive_s, "upstream_keepalive_s"),
            ] {
                if p.0 <= 0.0 {
                    return Err(invalid(&format!("stations[{i}].{}", p.1), "must be positive"));
                }
            }
            if sta.auth_assoc_delay_s < 0.0 {
                return Err(invalid(
                    &format!("stations[{i}].auth_assoc_delay_s"),
                    "must not be negative",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_parses() {
        let cfg = Config::default_config();
        assert_eq!(cfg.experiment.mode, Mode::Aetherflow);
        assert_eq!(cfg.aps.len(), 2);
        assert_eq!(cfg.experiment.duration_s, 30.0);
        assert_eq!(cfg.experiment.offered_load_bps, 9_000_000.0);
        assert_eq!(cfg.experiment.measure_interval_s, 0.5);
        assert_eq!(cfg.experiment.handoff_threshold_bps, 8_000_000.0);
    }

    #[test]
    fn validation_reports_key_path() {
        let mut text = DEFAULT_CONFIG_TOML.to_string();
        text = text.replace("duration_s = 30.0", "duration_s = -1.0");
        let err = Config::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("experiment.duration_s"), "{err}");
    }

    #[test]
    fn bad_waypoint_order_rejected() {
        let mut cfg = Config::default_config();
        cfg.stations[0].waypoints = vec![[1.0, 0.0, 0.0], [1.0, 5.0, 0.0]];
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("waypoints"), "{err}");
    }

    #[test]
    fn duplicate_dpids_rejected() {
        let mut cfg = Config::default_config();
        cfg.aps[1].datapath_id = cfg.aps[0].datapath_id;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{DEFAULT_CONFIG_TOML}\n[bogus]\nx = 1\n");
        assert!(Config::from_toml(&text).is_err());
    }

    #[test]
    fn bad_mac_rejected() {
        let text = DEFAULT_CONFIG_TOML.replace("02:00:00:00:00:01", "02:00:00:00:zz");
        assert!(Config::from_toml(&text).is_err());
    }
}
