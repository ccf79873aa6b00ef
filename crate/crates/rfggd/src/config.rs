//! JSON run configuration.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "model": { "kind": "car", "c": 0.3 },
//!   "experiment": { "kind": "car_grid", "x0": 0.5 },
//!   "seed": 7
//! }
//! ```
//!
//! Every section other than `schema_version`, `model` and `experiment` is
//! optional, as is every field inside a section. Unknown keys are rejected.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rfggd_core::plant::{car_model, unicycle_model, CarModel, LeaderTrajectory, ParamVector, RateBox, UnicycleConfig, UnicycleModel};
use rfggd_core::rfggd::RfggdConfig;
use rfggd_core::{Mat, Vector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RunError};
use crate::experiments::{GridSpec, Range};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelConfig,
    #[serde(default)]
    pub rfggd: RfggdSection,
    pub experiment: ExperimentConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Car(CarSection),
    Unicycle(UnicycleSection),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarSection {
    pub c: f64,
    pub dt: f64,
}

impl Default for CarSection {
    fn default() -> Self {
        Self { c: 0.3, dt: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnicycleSection {
    pub s_min: f64,
    pub s_max: f64,
    /// Half field of view in degrees.
    pub gamma_deg: f64,
    pub s_d: f64,
    pub dt: f64,
    pub leader_origin: [f64; 2],
    pub leader_speed: f64,
    pub leader_amplitude: f64,
    /// Angular frequency of the lateral velocity, rad/s.
    pub leader_frequency: f64,
    /// Diagonal of the input cost.
    pub input_weight: [f64; 2],
    pub slack_weight: f64,
    pub smooth_min_sharpness: f64,
}

impl Default for UnicycleSection {
    fn default() -> Self {
        let d = UnicycleConfig::default();
        Self {
            s_min: d.s_min,
            s_max: d.s_max,
            gamma_deg: d.gamma.to_degrees(),
            s_d: d.s_d,
            dt: d.dt,
            leader_origin: d.leader.origin,
            leader_speed: d.leader.forward_speed,
            leader_amplitude: d.leader.lateral_amplitude,
            leader_frequency: d.leader.lateral_frequency,
            input_weight: [d.input_weight[(0, 0)], d.input_weight[(1, 1)]],
            slack_weight: d.slack_weight,
            smooth_min_sharpness: d.smooth_min_sharpness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfggdSection {
    pub learning_rate: f64,
    pub trust_radius: f64,
    pub regularization: f64,
    pub max_case2_iters: usize,
    pub max_backtracks: usize,
    pub rate_min: f64,
    pub rate_max: f64,
    pub lookahead: usize,
}

impl Default for RfggdSection {
    fn default() -> Self {
        let d = RfggdConfig::default();
        Self {
            learning_rate: d.learning_rate,
            trust_radius: d.trust_radius,
            regularization: d.regularization,
            max_case2_iters: d.max_case2_iters,
            max_backtracks: d.max_backtracks,
            rate_min: d.rate_box.min,
            rate_max: d.rate_box.max,
            lookahead: d.lookahead,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentConfig {
    CarGrid(CarGridSection),
    CarRfggd(CarRfggdSection),
    Follow(FollowSection),
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::CarGrid(_) => "car_grid",
            Self::CarRfggd(_) => "car_rfggd",
            Self::Follow(_) => "follow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarGridSection {
    /// `[min, max, count]`.
    pub a: (f64, f64, usize),
    pub b: (f64, f64, usize),
    pub x0: f64,
    pub horizon_cap: usize,
    pub svg: bool,
}

impl Default for CarGridSection {
    fn default() -> Self {
        Self {
            a: (1e-3, 5.0, 50),
            b: (1e-3, 5.0, 50),
            x0: 0.5,
            horizon_cap: 100,
            svg: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarRfggdSection {
    pub x0: f64,
    /// Explicit `(a, b)` starting points.
    pub inits: Vec<(f64, f64)>,
    /// Extra starting points drawn uniformly from `init_range` with the run seed.
    pub random_inits: usize,
    pub init_range: (f64, f64),
    pub horizon_cap: usize,
    /// Case-1 steps taken once an init is feasible to the cap.
    pub case1_steps: usize,
}

impl Default for CarRfggdSection {
    fn default() -> Self {
        Self {
            x0: 0.5,
            inits: vec![(0.01, 0.02), (0.02, 0.005)],
            random_inits: 0,
            init_range: (1e-3, 0.05),
            horizon_cap: 100,
            case1_steps: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FollowSection {
    pub sim_steps: usize,
    /// Follower `[x, y, heading]`.
    pub x0: [f64; 3],
    pub clf_rate: f64,
    pub cbf_rates: [f64; 3],
}

impl Default for FollowSection {
    fn default() -> Self {
        Self {
            sim_steps: 500,
            x0: [0.0, 0.0, 0.0],
            clf_rate: 0.5,
            cbf_rates: [0.5, 0.5, 0.5],
        }
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(RunError::config(field, format!("must be finite (got {v})")))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(RunError::config(field, format!("must be positive (got {v})")))
    }
}

impl CarSection {
    pub fn build(&self) -> Result<CarModel> {
        finite("model.c", self.c)?;
        if self.c >= 1.0 {
            return Err(RunError::config("model.c", format!("must be < 1 (got {})", self.c)));
        }
        positive("model.dt", self.dt)?;
        car_model(self.c, self.dt).map_err(|e| RunError::config("model", e))
    }
}

impl UnicycleSection {
    pub fn build(&self) -> Result<UnicycleModel> {
        positive("model.s_min", self.s_min)?;
        if !(self.s_min < self.s_d && self.s_d < self.s_max) {
            return Err(RunError::config("model.s_d", "need s_min < s_d < s_max"));
        }
        if !(self.gamma_deg > 0.0 && self.gamma_deg < 90.0) {
            return Err(RunError::config("model.gamma_deg", format!("must lie in (0, 90) (got {})", self.gamma_deg)));
        }
        positive("model.dt", self.dt)?;
        finite("model.leader_origin", self.leader_origin[0])?;
        finite("model.leader_origin", self.leader_origin[1])?;
        finite("model.leader_speed", self.leader_speed)?;
        finite("model.leader_amplitude", self.leader_amplitude)?;
        finite("model.leader_frequency", self.leader_frequency)?;
        positive("model.input_weight", self.input_weight[0])?;
        positive("model.input_weight", self.input_weight[1])?;
        positive("model.slack_weight", self.slack_weight)?;
        positive("model.smooth_min_sharpness", self.smooth_min_sharpness)?;
        let cfg = UnicycleConfig {
            s_min: self.s_min,
            s_max: self.s_max,
            gamma: self.gamma_deg * PI / 180.0,
            s_d: self.s_d,
            dt: self.dt,
            leader: LeaderTrajectory {
                origin: self.leader_origin,
                forward_speed: self.leader_speed,
                lateral_amplitude: self.leader_amplitude,
                lateral_frequency: self.leader_frequency,
            },
            input_weight: Mat::from_diagonal(&Vector::from_row_slice(&self.input_weight)),
            slack_weight: self.slack_weight,
            smooth_min_sharpness: self.smooth_min_sharpness,
        };
        unicycle_model(cfg).map_err(|e| RunError::config("model", e))
    }
}

impl RfggdSection {
    pub fn build(&self) -> Result<RfggdConfig> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(RunError::config("rfggd.learning_rate", format!("must be finite and >= 0 (got {})", self.learning_rate)));
        }
        if !(self.trust_radius > 0.0) {
            return Err(RunError::config("rfggd.trust_radius", format!("must be positive (got {})", self.trust_radius)));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(RunError::config("rfggd.regularization", format!("must be finite and >= 0 (got {})", self.regularization)));
        }
        positive("rfggd.rate_min", self.rate_min)?;
        if !(self.rate_max > self.rate_min && self.rate_max.is_finite()) {
            return Err(RunError::config("rfggd.rate_max", "must be finite and exceed rate_min"));
        }
        if self.lookahead == 0 {
            return Err(RunError::config("rfggd.lookahead", "must be at least 1"));
        }
        Ok(RfggdConfig {
            learning_rate: self.learning_rate,
            trust_radius: self.trust_radius,
            regularization: self.regularization,
            max_case2_iters: self.max_case2_iters,
            max_backtracks: self.max_backtracks,
            rate_box: RateBox {
                min: self.rate_min,
                max: self.rate_max,
            },
            lookahead: self.lookahead,
        })
    }
}

fn range(field: &str, r: (f64, f64, usize), bounds: &RateBox) -> Result<Range> {
    if r.2 < 2 {
        return Err(RunError::config(field, format!("count must be at least 2 (got {})", r.2)));
    }
    if !(r.0 < r.1) || !bounds.contains(r.0) || !bounds.contains(r.1) {
        return Err(RunError::config(
            field,
            format!("need min < max inside [{}, {}] (got {} .. {})", bounds.min, bounds.max, r.0, r.1),
        ));
    }
    Ok(Range {
        min: r.0,
        max: r.1,
        count: r.2,
    })
}

impl CarGridSection {
    pub fn build(&self, car: &CarModel, bounds: &RateBox) -> Result<GridSpec> {
        finite("experiment.x0", self.x0)?;
        if self.horizon_cap == 0 {
            return Err(RunError::config("experiment.horizon_cap", "must be at least 1"));
        }
        Ok(GridSpec {
            a: range("experiment.a", self.a, bounds)?,
            b: range("experiment.b", self.b, bounds)?,
            c: car.c,
            dt: car.dt,
            x0: self.x0,
            horizon_cap: self.horizon_cap,
        })
    }
}

impl CarRfggdSection {
    pub fn validate(&self, bounds: &RateBox) -> Result<()> {
        finite("experiment.x0", self.x0)?;
        if self.horizon_cap == 0 {
            return Err(RunError::config("experiment.horizon_cap", "must be at least 1"));
        }
        for (a, b) in &self.inits {
            if !bounds.contains(*a) || !bounds.contains(*b) {
                return Err(RunError::config("experiment.inits", format!("({a}, {b}) lies outside the rate box")));
            }
        }
        let (lo, hi) = self.init_range;
        if self.random_inits > 0 && !(lo < hi && bounds.contains(lo) && bounds.contains(hi)) {
            return Err(RunError::config("experiment.init_range", "need min < max inside the rate box"));
        }
        if self.inits.is_empty() && self.random_inits == 0 {
            return Err(RunError::config("experiment.inits", "no initial parameters given"));
        }
        Ok(())
    }
}

impl FollowSection {
    pub fn params(&self, bounds: &RateBox) -> Result<ParamVector> {
        for (field, v) in [("experiment.clf_rate", self.clf_rate)]
            .into_iter()
            .chain(self.cbf_rates.iter().map(|v| ("experiment.cbf_rates", *v)))
        {
            if !bounds.contains(v) {
                return Err(RunError::config(field, format!("{v} lies outside the rate box")));
            }
        }
        for v in self.x0 {
            finite("experiment.x0", v)?;
        }
        Ok(ParamVector::with_clf(self.clf_rate, &self.cbf_rates))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(RunError::config(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", cfg.schema_version),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            RunError::Config(msg) => RunError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(model: &str, experiment: &str) -> String {
        format!(r#"{{"schema_version": 1, "model": {model}, "experiment": {experiment}}}"#)
    }

    #[test]
    fn defaults_fill_missing_fields() {
        let cfg = RunConfig::from_json(&minimal(r#"{"kind": "car"}"#, r#"{"kind": "car_grid"}"#)).unwrap();
        assert_eq!(cfg.model, ModelConfig::Car(CarSection::default()));
        assert_eq!(cfg.rfggd, RfggdSection::default());
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.experiment.kind(), "car_grid");
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::from_json(&minimal(r#"{"kind": "unicycle", "s_d": 0.8}"#, r#"{"kind": "follow"}"#)).unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_json(&minimal(r#"{"kind": "car", "speed": 1}"#, r#"{"kind": "car_grid"}"#)).unwrap_err();
        assert!(err.to_string().contains("speed"), "{err}");
        let text = r#"{"schema_version": 1, "model": {"kind": "car"}, "experiment": {"kind": "car_grid"}, "extra": 0}"#;
        assert!(RunConfig::from_json(text).is_err());
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let text = r#"{"schema_version": 2, "model": {"kind": "car"}, "experiment": {"kind": "car_grid"}}"#;
        assert!(RunConfig::from_json(text).unwrap_err().to_string().contains("schema_version"));
    }

    #[test]
    fn invalid_values_name_their_field() {
        let car = CarSection { c: 1.5, dt: 0.01 };
        assert!(car.build().unwrap_err().to_string().contains("model.c"));
        let r = RfggdSection {
            trust_radius: 0.0,
            ..RfggdSection::default()
        };
        assert!(r.build().unwrap_err().to_string().contains("rfggd.trust_radius"));
        let grid = CarGridSection {
            a: (0.1, 0.5, 1),
            ..CarGridSection::default()
        };
        let model = CarSection::default().build().unwrap();
        let err = grid.build(&model, &RateBox::default()).unwrap_err();
        assert!(err.to_string().contains("experiment.a"));
        assert_eq!(err.exit_code(), 2);
    }
}
