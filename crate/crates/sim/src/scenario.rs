//! Scenario files: TOML in, validated [`Scenario`] out.
//!
//! Every field except `seed` has a default. The resolved scenario, defaults
//! included, is echoed in the report.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use qcoop_core::interferometer::MachZehnderConfig;
use qcoop_core::qkd::{EveConfig, QkdConfig, SampleSize};
use qcoop_core::robotnet::{
    Agent, AgentId, AgentKind, CombinedConfig, Command, CommandMapping, KeyPolicy, LinkModel, Role, Vec3,
};
use qcoop_core::spdc::{CoincidenceWindow, DetectorId, DetectorSpec, PumpSource};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Interferometer,
    QkdSession,
    Entanglement,
    CombinedRobots,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterferometerParams {
    /// Phase difference in radians. When absent it follows from the arm
    /// lengths.
    pub delta: Option<f64>,
    pub arm1_length: f64,
    pub arm2_length: f64,
    pub wavelength: f64,
    pub arm2_blocked: bool,
    pub splitter_amplitude: f64,
}

impl Default for InterferometerParams {
    fn default() -> Self {
        Self {
            delta: None,
            arm1_length: 1.0,
            arm2_length: 1.0,
            wavelength: 1.0,
            arm2_blocked: false,
            splitter_amplitude: FRAC_1_SQRT_2,
        }
    }
}

impl InterferometerParams {
    pub fn config(&self) -> MachZehnderConfig {
        MachZehnderConfig {
            arm1_length: self.arm1_length,
            arm2_length: self.arm2_length,
            wavelength: self.wavelength,
            arm2_blocked: self.arm2_blocked,
            splitter_amplitude: self.splitter_amplitude,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EveParams {
    pub enabled: bool,
    pub intercept_probability: f64,
}

impl Default for EveParams {
    fn default() -> Self {
        Self { enabled: false, intercept_probability: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QkdParams {
    pub eve: EveParams,
    /// Share of the sifted key disclosed for error estimation.
    pub compare_fraction: f64,
    /// QBER above which the session aborts.
    pub qber_threshold: f64,
}

impl Default for QkdParams {
    fn default() -> Self {
        Self { eve: EveParams::default(), compare_fraction: 0.1, qber_threshold: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    pub wavelength_min_nm: f64,
    pub wavelength_max_nm: f64,
    pub efficiency: f64,
    pub dark_count_rate_hz: f64,
    pub timing_jitter_ns: f64,
    pub clock_offset_ns: i64,
    pub propagation_delay_ns: i64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        let d = DetectorSpec::default();
        Self {
            wavelength_min_nm: d.wavelength_min_nm,
            wavelength_max_nm: d.wavelength_max_nm,
            efficiency: d.efficiency,
            dark_count_rate_hz: d.dark_count_rate_hz,
            timing_jitter_ns: d.timing_jitter_ns,
            clock_offset_ns: d.clock_offset_ns,
            propagation_delay_ns: d.propagation_delay_ns,
        }
    }
}

impl DetectorParams {
    pub fn spec(&self, id: u32) -> DetectorSpec {
        DetectorSpec {
            id: DetectorId(id),
            wavelength_min_nm: self.wavelength_min_nm,
            wavelength_max_nm: self.wavelength_max_nm,
            efficiency: self.efficiency,
            dark_count_rate_hz: self.dark_count_rate_hz,
            timing_jitter_ns: self.timing_jitter_ns,
            clock_offset_ns: self.clock_offset_ns,
            propagation_delay_ns: self.propagation_delay_ns,
            ..DetectorSpec::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpdcParams {
    pub pump_wavelength_nm: f64,
    pub pump_power_mw: f64,
    pub pair_rate_hz: f64,
    /// Non-degenerate operation; the idler follows from energy conservation.
    pub signal_wavelength_nm: Option<f64>,
    pub duration_ns: u64,
    pub tau_ns: i64,
    pub analyzer_a_deg: f64,
    pub analyzer_b_deg: f64,
    pub detector_a: DetectorParams,
    pub detector_b: DetectorParams,
}

impl Default for SpdcParams {
    fn default() -> Self {
        let p = PumpSource::default();
        Self {
            pump_wavelength_nm: p.wavelength_nm,
            pump_power_mw: p.power_mw,
            pair_rate_hz: p.pair_rate_hz,
            signal_wavelength_nm: p.signal_wavelength_nm,
            duration_ns: 1_000_000,
            tau_ns: 25,
            analyzer_a_deg: 0.0,
            analyzer_b_deg: 0.0,
            detector_a: DetectorParams::default(),
            detector_b: DetectorParams::default(),
        }
    }
}

impl SpdcParams {
    pub fn source(&self) -> PumpSource {
        PumpSource {
            wavelength_nm: self.pump_wavelength_nm,
            power_mw: self.pump_power_mw,
            pair_rate_hz: self.pair_rate_hz,
            signal_wavelength_nm: self.signal_wavelength_nm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CommandSpec {
    MoveConstantVelocity { speed: f64 },
    Halt,
    Task { task_id: u32 },
}

impl From<CommandSpec> for Command {
    fn from(c: CommandSpec) -> Self {
        match c {
            CommandSpec::MoveConstantVelocity { speed } => Command::MoveConstantVelocity { speed },
            CommandSpec::Halt => Command::Halt,
            CommandSpec::Task { task_id } => Command::Task { task_id },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingParams {
    pub zero: Option<CommandSpec>,
    pub one: Option<CommandSpec>,
}

impl Default for MappingParams {
    fn default() -> Self {
        Self {
            zero: Some(CommandSpec::Halt),
            one: Some(CommandSpec::MoveConstantVelocity { speed: 1.0 }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkParams {
    pub max_range_m: f64,
    pub max_pointing_error_deg: f64,
    pub availability: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        let l = LinkModel::default();
        Self {
            max_range_m: l.max_range_m,
            max_pointing_error_deg: l.max_pointing_error_deg,
            availability: l.availability,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentParams {
    pub id: u32,
    pub role: Role,
    pub kind: AgentKind,
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub z: f64,
    #[serde(default)]
    pub heading_deg: f64,
}

impl AgentParams {
    pub fn agent(&self) -> Agent {
        Agent::new(AgentId(self.id), self.role, self.kind, Vec3::new(self.x, self.y, self.z), self.heading_deg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    pub agents: Vec<AgentParams>,
    pub robot_a: u32,
    pub robot_b: u32,
    pub leader: Option<u32>,
    pub policy: KeyPolicy,
    pub task_id: u32,
    pub mapping: MappingParams,
    pub link: LinkParams,
    pub dt_s: f64,
    pub horizon_steps: u64,
    pub bits_per_step: usize,
    pub fail_safe: CommandSpec,
}

impl Default for RobotParams {
    fn default() -> Self {
        let agent = |id, role, kind, y, z| AgentParams { id, role, kind, x: 0.0, y, z, heading_deg: 0.0 };
        Self {
            agents: vec![
                agent(1, Role::Alice, AgentKind::Ground, 0.0, 0.0),
                agent(2, Role::Bob, AgentKind::Ground, 5.0, 0.0),
                agent(3, Role::Leader, AgentKind::Aerial, 0.0, 10.0),
            ],
            robot_a: 1,
            robot_b: 2,
            leader: None,
            policy: KeyPolicy::Pairwise,
            task_id: 1,
            mapping: MappingParams::default(),
            link: LinkParams::default(),
            dt_s: 0.1,
            horizon_steps: 50,
            bits_per_step: 1,
            fail_safe: CommandSpec::Halt,
        }
    }
}

/// A validated scenario with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub experiment: Experiment,
    pub photon_count: u64,
    pub interferometer: InterferometerParams,
    pub qkd: QkdParams,
    pub spdc: SpdcParams,
    pub robots: RobotParams,
}

/// The file as written: identical to [`Scenario`] but `seed` may be missing
/// until validation.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default = "default_name")]
    name: String,
    seed: Option<u64>,
    experiment: Experiment,
    #[serde(default = "default_photon_count")]
    photon_count: u64,
    #[serde(default)]
    interferometer: InterferometerParams,
    #[serde(default)]
    qkd: QkdParams,
    #[serde(default)]
    spdc: SpdcParams,
    #[serde(default)]
    robots: RobotParams,
}

fn default_name() -> String {
    "unnamed".into()
}

fn default_photon_count() -> u64 {
    1000
}

impl Scenario {
    /// A scenario of the given kind with every parameter at its default.
    pub fn with_defaults(name: &str, seed: u64, experiment: Experiment) -> Self {
        Self {
            name: name.into(),
            seed,
            experiment,
            photon_count: default_photon_count(),
            interferometer: InterferometerParams::default(),
            qkd: QkdParams::default(),
            spdc: SpdcParams::default(),
            robots: RobotParams::default(),
        }
    }

    pub fn qkd_config(&self) -> QkdConfig {
        QkdConfig {
            photons: self.photon_count,
            eve: EveConfig {
                enabled: self.qkd.eve.enabled,
                intercept_probability: self.qkd.eve.intercept_probability,
            },
            sample: SampleSize::Fraction(self.qkd.compare_fraction),
            qber_threshold: self.qkd.qber_threshold,
        }
    }

    pub fn combined_config(&self) -> CombinedConfig {
        let r = &self.robots;
        CombinedConfig {
            source: self.spdc.source(),
            detector_a: self.spdc.detector_a.spec(0),
            detector_b: self.spdc.detector_b.spec(1),
            window: CoincidenceWindow { tau_ns: self.spdc.tau_ns },
            entanglement_horizon_ns: self.spdc.duration_ns,
            agents: r.agents.iter().map(AgentParams::agent).collect(),
            robot_a: AgentId(r.robot_a),
            robot_b: AgentId(r.robot_b),
            leader: r.leader.map(AgentId),
            task_id: r.task_id,
            qkd: self.qkd_config(),
            policy: r.policy,
            mapping: CommandMapping {
                zero: r.mapping.zero.map(Into::into),
                one: r.mapping.one.map(Into::into),
            },
            link: LinkModel {
                max_range_m: r.link.max_range_m,
                max_pointing_error_deg: r.link.max_pointing_error_deg,
                availability: r.link.availability,
            },
            dt_s: r.dt_s,
            horizon_steps: r.horizon_steps,
            bits_per_step: r.bits_per_step,
            fail_safe: r.fail_safe.into(),
        }
    }

    /// Check every invariant; the error names the first violated field.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let i = &self.interferometer;
        if let Some(d) = i.delta {
            finite("interferometer.delta", d)?;
        }
        positive("interferometer.arm1_length", i.arm1_length)?;
        positive("interferometer.arm2_length", i.arm2_length)?;
        positive("interferometer.wavelength", i.wavelength)?;
        probability("interferometer.splitter_amplitude", i.splitter_amplitude)?;

        let q = &self.qkd;
        probability("qkd.eve.intercept_probability", q.eve.intercept_probability)?;
        probability("qkd.compare_fraction", q.compare_fraction)?;
        if q.compare_fraction == 0.0 {
            return Err(HarnessError::validation("qkd.compare_fraction", "must be above 0"));
        }
        probability("qkd.qber_threshold", q.qber_threshold)?;

        let s = &self.spdc;
        positive("spdc.pump_wavelength_nm", s.pump_wavelength_nm)?;
        non_negative("spdc.pump_power_mw", s.pump_power_mw)?;
        non_negative("spdc.pair_rate_hz", s.pair_rate_hz)?;
        if let Some(w) = s.signal_wavelength_nm {
            finite("spdc.signal_wavelength_nm", w)?;
            if w <= s.pump_wavelength_nm {
                return Err(HarnessError::validation(
                    "spdc.signal_wavelength_nm",
                    "must be longer than the pump wavelength",
                ));
            }
        }
        if s.tau_ns < 0 {
            return Err(HarnessError::validation("spdc.tau_ns", "must not be negative"));
        }
        finite("spdc.analyzer_a_deg", s.analyzer_a_deg)?;
        finite("spdc.analyzer_b_deg", s.analyzer_b_deg)?;
        for (name, d) in [("spdc.detector_a", &s.detector_a), ("spdc.detector_b", &s.detector_b)] {
            probability(&format!("{name}.efficiency"), d.efficiency)?;
            non_negative(&format!("{name}.dark_count_rate_hz"), d.dark_count_rate_hz)?;
            non_negative(&format!("{name}.timing_jitter_ns"), d.timing_jitter_ns)?;
            finite(&format!("{name}.wavelength_min_nm"), d.wavelength_min_nm)?;
            finite(&format!("{name}.wavelength_max_nm"), d.wavelength_max_nm)?;
            if d.wavelength_min_nm > d.wavelength_max_nm {
                return Err(HarnessError::validation(
                    format!("{name}.wavelength_max_nm"),
                    "must not be below wavelength_min_nm",
                ));
            }
        }

        let r = &self.robots;
        let mut ids = BTreeSet::new();
        for a in &r.agents {
            if !ids.insert(a.id) {
                return Err(HarnessError::validation("robots.agents.id", format!("agent id {} repeated", a.id)));
            }
            for (axis, v) in [("x", a.x), ("y", a.y), ("z", a.z), ("heading_deg", a.heading_deg)] {
                finite(&format!("robots.agents.{axis}"), v)?;
            }
        }
        for (field, id) in [("robots.robot_a", r.robot_a), ("robots.robot_b", r.robot_b)] {
            if !ids.contains(&id) {
                return Err(HarnessError::validation(field, format!("no agent with id {id}")));
            }
        }
        if r.robot_a == r.robot_b {
            return Err(HarnessError::validation("robots.robot_b", "must differ from robot_a"));
        }
        match (r.policy, r.leader) {
            (_, Some(id)) if !ids.contains(&id) => {
                return Err(HarnessError::validation("robots.leader", format!("no agent with id {id}")));
            }
            (KeyPolicy::LeaderToEach, None) => {
                return Err(HarnessError::validation("robots.leader", "required by the leader_to_each policy"));
            }
            _ => {}
        }
        for (field, c) in [
            ("robots.mapping.zero", r.mapping.zero),
            ("robots.mapping.one", r.mapping.one),
            ("robots.fail_safe", Some(r.fail_safe)),
        ] {
            if let Some(CommandSpec::MoveConstantVelocity { speed }) = c {
                finite(&format!("{field}.speed"), speed)?;
            }
        }
        non_negative("robots.link.max_range_m", r.link.max_range_m)?;
        non_negative("robots.link.max_pointing_error_deg", r.link.max_pointing_error_deg)?;
        probability("robots.link.availability", r.link.availability)?;
        positive("robots.dt_s", r.dt_s)?;
        if r.bits_per_step == 0 {
            return Err(HarnessError::validation("robots.bits_per_step", "must be at least 1"));
        }
        Ok(())
    }
}

fn finite(field: &str, v: f64) -> Result<(), HarnessError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(HarnessError::validation(field, "must be a finite number"))
    }
}

fn positive(field: &str, v: f64) -> Result<(), HarnessError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(HarnessError::validation(field, "must be positive"))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), HarnessError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(HarnessError::validation(field, "must not be negative"))
    }
}

fn probability(field: &str, v: f64) -> Result<(), HarnessError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(HarnessError::validation(field, format!("{v} is outside [0, 1]")))
    }
}

/// Parse and validate scenario text. `seed_override` replaces (or supplies)
/// the file's seed.
pub fn parse_scenario(text: &str, path: &Path, seed_override: Option<u64>) -> Result<Scenario, HarnessError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| parse_error(text, path, &e))?;
    let seed = seed_override
        .or(file.seed)
        .ok_or_else(|| HarnessError::validation("seed", "required; runs never draw entropy implicitly"))?;
    let scenario = Scenario {
        name: file.name,
        seed,
        experiment: file.experiment,
        photon_count: file.photon_count,
        interferometer: file.interferometer,
        qkd: file.qkd,
        spdc: file.spdc,
        robots: file.robots,
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path, seed_override: Option<u64>) -> Result<Scenario, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_scenario(&text, path, seed_override)
}

fn parse_error(text: &str, path: &Path, e: &toml::de::Error) -> HarnessError {
    let offset = e.span().map_or(0, |s| s.start).min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let column = before[line_start..].chars().count() + 1;
    let line_text = text[line_start..].lines().next().unwrap_or("");
    let message = e.message().to_string();
    // Prefer the key named in the message, else the key on the error line.
    let field = message
        .split('`')
        .nth(1)
        .filter(|_| message.contains("field"))
        .map(str::to_string)
        .or_else(|| {
            line_text
                .split_once('=')
                .map(|(k, _)| k.trim().to_string())
                .filter(|k| !k.is_empty())
        });
    HarnessError::Parse { path: path.to_path_buf(), line, column, field, message }
}
