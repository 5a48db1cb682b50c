//! Experiment configuration: TOML on disk, resolved on top of a profile.

use std::fmt;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ArrayShape, Arrays, RadioConfig};
use crate::scene::{orientation_from_euler_deg, Scene};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Small arrays, runs in seconds.
    #[default]
    Desk,
    /// Full-size arrays of the reference setup. Slow.
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(ConfigError::Parse(format!("unknown profile `{other}` (desk|paper)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "proposed-energy")]
    ProposedEnergy,
    #[serde(rename = "proposed-delay")]
    ProposedDelay,
    #[serde(rename = "ls-baseline")]
    LsBaseline,
    #[serde(rename = "exip-oracle")]
    ExipOracle,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::ProposedEnergy,
        Method::ProposedDelay,
        Method::LsBaseline,
        Method::ExipOracle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::ProposedEnergy => "proposed-energy",
            Method::ProposedDelay => "proposed-delay",
            Method::LsBaseline => "ls-baseline",
            Method::ExipOracle => "exip-oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "snr_db")]
    SnrDb,
    #[serde(rename = "M")]
    RisElements,
    #[serde(rename = "Q")]
    RisCount,
    #[serde(rename = "T")]
    TimeSlots,
    #[serde(rename = "K_BU")]
    RicianBu,
    #[serde(rename = "L_BU")]
    PathlossBu,
    #[serde(rename = "clock_bias_ns")]
    ClockBiasNs,
    #[serde(rename = "phase_design")]
    PhaseDesign,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::SnrDb => "snr_db",
            SweepVariable::RisElements => "M",
            SweepVariable::RisCount => "Q",
            SweepVariable::TimeSlots => "T",
            SweepVariable::RicianBu => "K_BU",
            SweepVariable::PathlossBu => "L_BU",
            SweepVariable::ClockBiasNs => "clock_bias_ns",
            SweepVariable::PhaseDesign => "phase_design",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Number(f64),
    Label(String),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Number(x) => write!(f, "{x}"),
            SweepValue::Label(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseChoice {
    Svd,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub ue: [f64; 3],
    pub ris: Vec<[f64; 3]>,
    /// Yaw, pitch, roll in degrees.
    pub rotation_deg: [f64; 3],
    pub clock_bias_ns: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArraysConfig {
    pub bs: [usize; 2],
    pub ue: [usize; 2],
    pub ris: [usize; 2],
    /// Number of RIS in use; the first entries of the scene list.
    pub ris_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignConfig {
    pub phase_design: PhaseChoice,
    /// Half-widths of the served region around each RIS-to-UE direction, degrees.
    pub half_width_deg: [f64; 2],
    pub grid: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimatorOptions {
    pub angle_points: Option<usize>,
    pub delay_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<SweepValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub scene: SceneConfig,
    pub arrays: ArraysConfig,
    pub radio: RadioConfig,
    pub snr_db: f64,
    /// Random small-scale phases and scattered components per trial.
    pub fading: bool,
    pub design: DesignConfig,
    pub estimator: EstimatorOptions,
    pub sweep: Sweep,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
}

impl ExperimentConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let scene = SceneConfig {
            ue: [50.0, 10.0, -20.0],
            ris: vec![[30.0, -5.0, -2.0], [16.0, 20.0, 31.0]],
            rotation_deg: [0.0; 3],
            clock_bias_ns: 50.0,
        };
        let design = DesignConfig {
            phase_design: PhaseChoice::Svd,
            half_width_deg: [10.0, 10.0],
            grid: [16, 16],
        };
        let sweep = Sweep {
            variable: SweepVariable::SnrDb,
            values: vec![SweepValue::Number(10.0)],
        };
        let (arrays, radio) = match profile {
            Profile::Desk => (
                ArraysConfig {
                    bs: [4, 4],
                    ue: [8, 8],
                    ris: [8, 8],
                    ris_count: 2,
                },
                RadioConfig {
                    subcarriers: 48,
                    bandwidth: 64e6,
                    carrier: 30e9,
                    time_slots: 32,
                    tx_power: 1.0,
                    rician_bu: 10.0,
                    rician_ru: 10.0,
                    pathloss_bu: 4.5,
                    pathloss_ris: 2.0,
                },
            ),
            Profile::Paper => (
                ArraysConfig {
                    bs: [10, 10],
                    ue: [8, 8],
                    ris: [20, 20],
                    ris_count: 2,
                },
                RadioConfig {
                    subcarriers: 64,
                    bandwidth: 100e6,
                    carrier: 30e9,
                    time_slots: 200,
                    tx_power: 1.0,
                    rician_bu: 10.0,
                    rician_ru: 10.0,
                    pathloss_bu: 4.5,
                    pathloss_ris: 2.0,
                },
            ),
        };
        ExperimentConfig {
            profile,
            scene,
            arrays,
            radio,
            snr_db: 10.0,
            fading: true,
            design,
            estimator: EstimatorOptions::default(),
            sweep,
            trials: 200,
            seed: 1,
            methods: vec![Method::ProposedEnergy, Method::LsBaseline],
        }
    }

    pub fn arrays(&self) -> Arrays {
        Arrays {
            bs: ArrayShape::new(self.arrays.bs[0], self.arrays.bs[1]),
            ue: ArrayShape::new(self.arrays.ue[0], self.arrays.ue[1]),
            ris: ArrayShape::new(self.arrays.ris[0], self.arrays.ris[1]),
        }
    }

    pub fn orientation(&self) -> Matrix3<f64> {
        let [yaw, pitch, roll] = self.scene.rotation_deg;
        orientation_from_euler_deg(yaw, pitch, roll)
    }

    pub fn scene(&self) -> Scene {
        Scene {
            ue: Vector3::from(self.scene.ue),
            ris: self.scene.ris[..self.arrays.ris_count]
                .iter()
                .map(|p| Vector3::from(*p))
                .collect(),
            orientation: self.orientation(),
            clock_bias: self.scene.clock_bias_ns * 1e-9,
        }
    }

    /// Copy with one sweep variable set.
    pub fn with_value(&self, variable: SweepVariable, value: &SweepValue) -> Result<Self, ConfigError> {
        let mut out = self.clone();
        let name = variable.name();
        let number = || match value {
            SweepValue::Number(x) => Ok(*x),
            SweepValue::Label(s) => Err(ConfigError::Parse(format!(
                "sweep value `{s}` for {name} is not a number"
            ))),
        };
        let count = |x: f64| {
            if x >= 0.0 && x.fract() == 0.0 && x < 1e9 {
                Ok(x as usize)
            } else {
                Err(ConfigError::Parse(format!("sweep value {x} for {name} is not a count")))
            }
        };
        match variable {
            SweepVariable::SnrDb => out.snr_db = number()?,
            SweepVariable::RisElements => {
                let m = count(number()?)?;
                let side = (m as f64).sqrt().round() as usize;
                if side * side != m {
                    return Err(ConfigError::Constraint(format!(
                        "M = {m} must be a square element count"
                    )));
                }
                out.arrays.ris = [side, side];
            }
            SweepVariable::RisCount => out.arrays.ris_count = count(number()?)?,
            SweepVariable::TimeSlots => out.radio.time_slots = count(number()?)?,
            SweepVariable::RicianBu => out.radio.rician_bu = number()?,
            SweepVariable::PathlossBu => out.radio.pathloss_bu = number()?,
            SweepVariable::ClockBiasNs => out.scene.clock_bias_ns = number()?,
            SweepVariable::PhaseDesign => {
                out.design.phase_design = match value {
                    SweepValue::Label(s) if s == "svd" => PhaseChoice::Svd,
                    SweepValue::Label(s) if s == "random" => PhaseChoice::Random,
                    other => {
                        return Err(ConfigError::Parse(format!(
                            "phase_design value `{other}` is neither \"svd\" nor \"random\""
                        )))
                    }
                }
            }
        }
        Ok(out)
    }

    /// Checks the dimension and range constraints of one operating point.
    pub fn validate_point(&self) -> Result<(), ConfigError> {
        let q = self.arrays.ris_count;
        let paths = q + 1;
        let fail = |msg: String| Err(ConfigError::Constraint(msg));
        if q > self.scene.ris.len() {
            return fail(format!(
                "Q = {q} exceeds the {} RIS listed in [scene]",
                self.scene.ris.len()
            ));
        }
        for (name, [r, c]) in [("BS", self.arrays.bs), ("UE", self.arrays.ue)] {
            if r <= paths || c <= paths {
                return fail(format!(
                    "{name} array {r}x{c}: need rows > Q+1 and cols > Q+1 (Q+1 = {paths})"
                ));
            }
        }
        if self.arrays.ris[0] == 0 || self.arrays.ris[1] == 0 {
            return fail("RIS array must have at least one element per axis".into());
        }
        let n = self.arrays.bs[0] * self.arrays.bs[1];
        if self.radio.time_slots < n {
            return fail(format!("T >= N (T = {}, N = {n})", self.radio.time_slots));
        }
        if self.radio.subcarriers <= paths {
            return fail(format!("K > Q+1 (K = {}, Q+1 = {paths})", self.radio.subcarriers));
        }
        let positive = [
            ("bandwidth_hz", self.radio.bandwidth),
            ("carrier_hz", self.radio.carrier),
            ("tx_power", self.radio.tx_power),
            ("pathloss_bu", self.radio.pathloss_bu),
            ("pathloss_ris", self.radio.pathloss_ris),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return fail(format!("{name} > 0 (got {v})"));
            }
        }
        for (name, v) in [("rician_bu", self.radio.rician_bu), ("rician_ru", self.radio.rician_ru)] {
            if !(v >= 0.0) {
                return fail(format!("{name} >= 0 (got {v})"));
            }
        }
        if self.snr_db.is_nan() {
            return fail("snr_db must be a number".into());
        }
        let window = 10.0 / self.radio.bandwidth;
        let bias = self.scene.clock_bias_ns * 1e-9;
        if !(bias.abs() <= window * (1.0 + 1e-12)) {
            return fail(format!(
                "|clock_bias| <= 10/W = {:.3} ns (got {bias:e} s)",
                window * 1e9
            ));
        }
        let [hw_el, hw_az] = self.design.half_width_deg;
        if !(hw_el >= 0.0 && hw_az >= 0.0) {
            return fail("design half widths >= 0".into());
        }
        if self.design.grid[0] == 0 || self.design.grid[1] == 0 {
            return fail("design grid >= 1 per axis".into());
        }
        let scene = self.scene();
        scene.validate().or_else(|e| fail(format!("scene: {e}")))?;
        let c = crate::scene::SPEED_OF_LIGHT;
        let mut delays = vec![scene.ue.norm() / c + scene.clock_bias];
        for r in &scene.ris {
            delays.push((r.norm() + (scene.ue - r).norm()) / c + scene.clock_bias);
        }
        let window = self.radio.delay_window();
        if let Some(bad) = delays.iter().find(|t| !(**t >= 0.0 && **t < window)) {
            return fail(format!(
                "every path delay in [0, K/W) = [0, {:.1} ns): got {:.1} ns",
                window * 1e9,
                bad * 1e9
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::Constraint("trials >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(ConfigError::Constraint("at least one method".into()));
        }
        self.validate_point()?;
        for v in &self.sweep.values {
            self.with_value(self.sweep.variable, v)?.validate_point()?;
        }
        Ok(())
    }
}

// On-disk layout. Every key is optional and overrides the profile.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    profile: Option<Profile>,
    trials: Option<usize>,
    seed: Option<u64>,
    snr_db: Option<f64>,
    fading: Option<bool>,
    methods: Option<Vec<Method>>,
    scene: Option<RawScene>,
    arrays: Option<RawArrays>,
    radio: Option<RawRadio>,
    sweep: Option<RawSweep>,
    estimator: Option<RawEstimator>,
    design: Option<RawDesign>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    ue: Option<[f64; 3]>,
    ris: Option<Vec<[f64; 3]>>,
    rotation_deg: Option<[f64; 3]>,
    clock_bias_ns: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArrays {
    bs: Option<[usize; 2]>,
    ue: Option<[usize; 2]>,
    ris: Option<[usize; 2]>,
    #[serde(rename = "Q")]
    q: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRadio {
    subcarriers: Option<usize>,
    bandwidth_hz: Option<f64>,
    carrier_hz: Option<f64>,
    time_slots: Option<usize>,
    tx_power: Option<f64>,
    rician_bu: Option<f64>,
    rician_ru: Option<f64>,
    pathloss_bu: Option<f64>,
    pathloss_ris: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    variable: SweepVariable,
    values: Vec<SweepValue>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimator {
    angle_points: Option<usize>,
    delay_points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    phase_design: Option<PhaseChoice>,
    half_width_deg: Option<[f64; 2]>,
    grid: Option<[usize; 2]>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RawConfig {
    fn resolve(self, profile_override: Option<Profile>) -> ExperimentConfig {
        let profile = profile_override.or(self.profile).unwrap_or_default();
        let mut c = ExperimentConfig::for_profile(profile);
        set(&mut c.trials, self.trials);
        set(&mut c.seed, self.seed);
        set(&mut c.snr_db, self.snr_db);
        set(&mut c.fading, self.fading);
        set(&mut c.methods, self.methods);
        if let Some(s) = self.scene {
            set(&mut c.scene.ue, s.ue);
            if let Some(ris) = s.ris {
                c.arrays.ris_count = ris.len();
                c.scene.ris = ris;
            }
            set(&mut c.scene.rotation_deg, s.rotation_deg);
            set(&mut c.scene.clock_bias_ns, s.clock_bias_ns);
        }
        if let Some(a) = self.arrays {
            set(&mut c.arrays.bs, a.bs);
            set(&mut c.arrays.ue, a.ue);
            set(&mut c.arrays.ris, a.ris);
            set(&mut c.arrays.ris_count, a.q);
        }
        if let Some(r) = self.radio {
            set(&mut c.radio.subcarriers, r.subcarriers);
            set(&mut c.radio.bandwidth, r.bandwidth_hz);
            set(&mut c.radio.carrier, r.carrier_hz);
            set(&mut c.radio.time_slots, r.time_slots);
            set(&mut c.radio.tx_power, r.tx_power);
            set(&mut c.radio.rician_bu, r.rician_bu);
            set(&mut c.radio.rician_ru, r.rician_ru);
            set(&mut c.radio.pathloss_bu, r.pathloss_bu);
            set(&mut c.radio.pathloss_ris, r.pathloss_ris);
        }
        if let Some(s) = self.sweep {
            c.sweep = Sweep {
                variable: s.variable,
                values: s.values,
            };
        }
        if let Some(e) = self.estimator {
            c.estimator = EstimatorOptions {
                angle_points: e.angle_points,
                delay_points: e.delay_points,
            };
        }
        if let Some(d) = self.design {
            set(&mut c.design.phase_design, d.phase_design);
            set(&mut c.design.half_width_deg, d.half_width_deg);
            set(&mut c.design.grid, d.grid);
        }
        c
    }
}

/// Parses and validates a configuration given as TOML text.
pub fn parse_config_str(text: &str, profile: Option<Profile>) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let config = raw.resolve(profile);
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path, profile: Option<Profile>) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text, profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_desk_defaults() {
        let c = parse_config_str("", None).unwrap();
        assert_eq!(c, ExperimentConfig::for_profile(Profile::Desk));
    }

    #[test]
    fn reference_sizes_parse() {
        let text = r#"
            [arrays]
            bs = [10, 10]
            ue = [8, 8]
            ris = [20, 20]
            [radio]
            subcarriers = 64
            bandwidth_hz = 100e6
            time_slots = 200
        "#;
        let c = parse_config_str(text, None).unwrap();
        assert_eq!(c.arrays().bs.len(), 100);
        assert_eq!(c.arrays().ris.len(), 400);
        let paper = ExperimentConfig::for_profile(Profile::Paper);
        assert_eq!((c.arrays, c.radio), (paper.arrays, paper.radio));
    }

    #[test]
    fn too_few_slots_is_rejected() {
        let text = "[arrays]\nbs = [10, 10]\n[radio]\ntime_slots = 50\n";
        match parse_config_str(text, None) {
            Err(ConfigError::Constraint(msg)) => assert!(msg.contains("T >= N"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_subcarriers_is_rejected() {
        let text = "[radio]\nsubcarriers = 3\n";
        match parse_config_str(text, None) {
            Err(ConfigError::Constraint(msg)) => assert!(msg.contains("K > Q+1"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            parse_config_str("[radio]\nsubcarrier = 3\n", None),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            parse_config_str("trails = 3\n", None),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn sweep_values_are_checked() {
        let bad = "[sweep]\nvariable = \"M\"\nvalues = [16, 20]\n";
        assert!(matches!(parse_config_str(bad, None), Err(ConfigError::Constraint(_))));
        let bad = "[sweep]\nvariable = \"phase_design\"\nvalues = [\"svd\", \"best\"]\n";
        assert!(matches!(parse_config_str(bad, None), Err(ConfigError::Parse(_))));
        let ok = "[sweep]\nvariable = \"Q\"\nvalues = [1, 2]\n";
        let c = parse_config_str(ok, None).unwrap();
        assert_eq!(
            c.with_value(c.sweep.variable, &c.sweep.values[0])
                .unwrap()
                .scene()
                .ris
                .len(),
            1
        );
    }

    #[test]
    fn cli_profile_wins() {
        let c = parse_config_str("profile = \"desk\"\n", Some(Profile::Paper)).unwrap();
        assert_eq!(c.profile, Profile::Paper);
    }
}
