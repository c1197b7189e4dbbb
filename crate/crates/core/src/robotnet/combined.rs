//! Entanglement-triggered key exchange driving two robots.
//!
//! A pair source between two robots feeds one counter on each. The first
//! coincidence that belongs to a real pair dispatches an identical task to
//! both robots and opens a key exchange; the resulting key bits are mapped to
//! motion commands, one bit per tick by default. If the exchange aborts the
//! robots receive the fail-safe command instead.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{
    link_available, map_bit_to_command, Agent, AgentId, Command, CommandMapping,
    DispatchRecord, EntanglementDispatcher, LinkModel, RobotError, TrajectoryRecord, World,
};
use crate::channel::{Message, PublicChannel};
use crate::qkd::{run_session_with_link, Bit, QkdConfig, QkdError, QkdSessionReport, SessionStreams};
use crate::rng::RandomStream;
use crate::spdc::{
    bandpass_filter, detect, find_coincidences, generate_dark_counts, sort_events, Arm,
    Coincidence, CoincidenceWindow, DetectionEvent, DetectorSpec, FilterResult, PairGenerator,
    PumpSource, SpdcError,
};

/// Who exchanges keys once the pair is triggered.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum KeyPolicy {
    /// One session between the two entangled robots; both act on the shared key.
    Pairwise,
    /// The leader runs an independent session with each robot.
    LeaderToEach,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombinedConfig {
    pub source: PumpSource,
    pub detector_a: DetectorSpec,
    pub detector_b: DetectorSpec,
    pub window: CoincidenceWindow,
    /// How long the source runs looking for a trigger.
    pub entanglement_horizon_ns: u64,
    pub agents: Vec<Agent>,
    pub robot_a: AgentId,
    pub robot_b: AgentId,
    pub leader: Option<AgentId>,
    pub task_id: u32,
    pub qkd: QkdConfig,
    pub policy: KeyPolicy,
    pub mapping: CommandMapping,
    pub link: LinkModel,
    pub dt_s: f64,
    pub horizon_steps: u64,
    pub bits_per_step: usize,
    pub fail_safe: Command,
}

/// A key exchange run for the scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct SubSession {
    pub label: String,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub report: QkdSessionReport,
    pub channel: Vec<Message>,
}

/// Key and command stream one robot acted on.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotPlan {
    pub agent: AgentId,
    pub key: Vec<Bit>,
    /// `(tick, command)` in issue order.
    pub commands: Vec<(u64, Command)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombinedTranscript {
    pub pairs_generated: u64,
    pub events_a: Vec<DetectionEvent>,
    pub events_b: Vec<DetectionEvent>,
    pub coincidences: Vec<Coincidence>,
    pub dispatch: Option<DispatchRecord>,
    pub sessions: Vec<SubSession>,
    pub aborted: bool,
    pub plans: Vec<RobotPlan>,
    pub trajectory: Vec<TrajectoryRecord>,
    pub final_agents: Vec<Agent>,
    /// Draw counters per named stream, in a fixed order.
    pub stream_draws: Vec<(String, u64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CombinedError {
    Spdc(SpdcError),
    Qkd(QkdError),
    Robot(RobotError),
}

impl From<SpdcError> for CombinedError {
    fn from(e: SpdcError) -> Self {
        CombinedError::Spdc(e)
    }
}

impl From<QkdError> for CombinedError {
    fn from(e: QkdError) -> Self {
        CombinedError::Qkd(e)
    }
}

impl From<RobotError> for CombinedError {
    fn from(e: RobotError) -> Self {
        CombinedError::Robot(e)
    }
}

impl fmt::Display for CombinedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CombinedError::Spdc(e) => write!(f, "entanglement: {e}"),
            CombinedError::Qkd(e) => write!(f, "key exchange: {e}"),
            CombinedError::Robot(e) => write!(f, "robots: {e}"),
        }
    }
}

impl core::error::Error for CombinedError {}

fn detect_arm(
    pairs: &mut [crate::spdc::EntangledPair],
    arm: Arm,
    spec: &DetectorSpec,
    rng: &mut RandomStream,
) -> Result<Vec<DetectionEvent>, SpdcError> {
    let mut out = Vec::new();
    for pair in pairs.iter_mut() {
        let photon = pair.photon_mut(arm);
        if bandpass_filter(photon) == FilterResult::Block {
            continue;
        }
        if let Some(ev) = detect(photon, spec, rng)? {
            out.push(ev);
        }
    }
    Ok(out)
}

/// Run the combined scenario under `seed`.
pub fn combined_scenario(config: &CombinedConfig, seed: u64) -> Result<CombinedTranscript, CombinedError> {
    if config.bits_per_step == 0 {
        return Err(RobotError::InvalidConfig("bits_per_step").into());
    }
    if config.robot_a == config.robot_b {
        return Err(RobotError::InvalidConfig("robot_b").into());
    }
    config.detector_a.validate()?;
    config.detector_b.validate()?;
    let mut world = World::new(config.agents.clone(), config.dt_s)?;
    let agent = |id: AgentId| world.agent(id).cloned().ok_or(RobotError::UnknownAgent(id));
    let robot_a = agent(config.robot_a)?;
    let robot_b = agent(config.robot_b)?;
    let leader = match (config.policy, config.leader) {
        (KeyPolicy::LeaderToEach, Some(id)) => Some(agent(id)?),
        (KeyPolicy::LeaderToEach, None) => return Err(RobotError::InvalidConfig("leader").into()),
        (KeyPolicy::Pairwise, _) => None,
    };

    let mut source_rng = RandomStream::substream(seed, "spdc/source");
    let mut det_a_rng = RandomStream::substream(seed, "spdc/detector_a");
    let mut det_b_rng = RandomStream::substream(seed, "spdc/detector_b");

    let mut generator = PairGenerator::new(config.source);
    let mut pairs = generator.generate(config.entanglement_horizon_ns, &mut source_rng)?;
    let mut events_a = detect_arm(&mut pairs, Arm::Signal, &config.detector_a, &mut det_a_rng)?;
    let mut events_b = detect_arm(&mut pairs, Arm::Idler, &config.detector_b, &mut det_b_rng)?;
    events_a.extend(generate_dark_counts(&config.detector_a, config.entanglement_horizon_ns, &mut det_a_rng));
    events_b.extend(generate_dark_counts(&config.detector_b, config.entanglement_horizon_ns, &mut det_b_rng));
    sort_events(&mut events_a);
    sort_events(&mut events_b);
    let coincidences = find_coincidences(&events_a, &events_b, config.window)?;

    let mut dispatcher = EntanglementDispatcher::new();
    let trigger = coincidences.iter().find(|c| c.pair().is_some());
    let dispatch = match trigger {
        Some(c) => Some(dispatcher.trigger(c, config.robot_a, config.robot_b, config.task_id, &mut world)?),
        None => None,
    };

    let mut sessions = Vec::new();
    let mut link_rngs: Vec<(String, RandomStream)> = Vec::new();
    let mut qkd_draws: Vec<(String, SessionStreams)> = Vec::new();
    if dispatch.is_some() {
        let pairings: Vec<(&str, &Agent, &Agent)> = match &leader {
            None => alloc::vec![("pair", &robot_a, &robot_b)],
            Some(l) => alloc::vec![("leader_a", l, &robot_a), ("leader_b", l, &robot_b)],
        };
        for (label, tx, rx) in pairings {
            let prefix = alloc::format!("qkd/{label}");
            let mut streams = SessionStreams::new(seed, &prefix);
            let link_name = alloc::format!("link/{label}");
            let mut link_rng = RandomStream::substream(seed, &link_name);
            let mut channel = PublicChannel::new();
            let report = run_session_with_link(&config.qkd, &mut streams, &mut channel, |_| {
                link_available(tx, rx, &config.link, &mut link_rng)
            })?;
            sessions.push(SubSession {
                label: label.into(),
                sender: tx.id,
                receiver: rx.id,
                report,
                channel: channel.transcript().to_vec(),
            });
            link_rngs.push((link_name, link_rng));
            qkd_draws.push((prefix, streams));
        }
    }
    let aborted = sessions.iter().any(|s| s.report.abort);

    // Keys each robot acts on.
    let keys: Vec<(AgentId, Vec<Bit>)> = match (&leader, sessions.as_slice()) {
        (_, []) => Vec::new(),
        (None, [s]) => alloc::vec![
            (config.robot_a, s.report.final_key.bits.clone()),
            (config.robot_b, s.report.bob_final_key.bits.clone()),
        ],
        (_, many) => many.iter().map(|s| (s.receiver, s.report.bob_final_key.bits.clone())).collect(),
    };

    let mut plans: Vec<RobotPlan> = keys
        .into_iter()
        .map(|(agent, key)| RobotPlan { agent, key, commands: Vec::new() })
        .collect();

    for step in 0..config.horizon_steps {
        let tick = world.tick;
        let mut commands = Vec::new();
        // Key-driven motion starts the tick after the trigger.
        if dispatch.is_some() && step > 0 {
            for plan in plans.iter_mut() {
                if aborted {
                    if step == 1 {
                        commands.push((plan.agent, config.fail_safe));
                        plan.commands.push((tick, config.fail_safe));
                    }
                    continue;
                }
                let start = (step as usize - 1) * config.bits_per_step;
                if start > plan.key.len() {
                    continue;
                }
                if start == plan.key.len() {
                    // Key exhausted: stop once.
                    commands.push((plan.agent, Command::Halt));
                    plan.commands.push((tick, Command::Halt));
                    continue;
                }
                let end = (start + config.bits_per_step).min(plan.key.len());
                for &bit in &plan.key[start..end] {
                    let c = map_bit_to_command(bit, &config.mapping)?;
                    commands.push((plan.agent, c));
                    plan.commands.push((tick, c));
                }
            }
        }
        world.step(&commands)?;
    }

    let mut stream_draws = alloc::vec![
        (String::from("spdc/source"), source_rng.counter()),
        (String::from("spdc/detector_a"), det_a_rng.counter()),
        (String::from("spdc/detector_b"), det_b_rng.counter()),
    ];
    for (prefix, s) in &qkd_draws {
        for (name, rng) in [("alice", &s.alice), ("bob", &s.bob), ("eve", &s.eve), ("sampling", &s.sampling)] {
            stream_draws.push((alloc::format!("{prefix}/{name}"), rng.counter()));
        }
    }
    for (name, rng) in &link_rngs {
        stream_draws.push((name.clone(), rng.counter()));
    }

    Ok(CombinedTranscript {
        pairs_generated: pairs.len() as u64,
        events_a,
        events_b,
        coincidences,
        dispatch,
        sessions,
        aborted,
        plans,
        trajectory: world.trajectory,
        final_agents: world.agents,
        stream_draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qkd::EveConfig;
    use crate::robotnet::{AgentKind, Role, Vec3};
    use crate::spdc::DetectorId;
    use alloc::vec;

    fn config() -> CombinedConfig {
        let ideal = |id| DetectorSpec {
            id: DetectorId(id),
            efficiency: 1.0,
            timing_jitter_ns: 0.0,
            ..Default::default()
        };
        CombinedConfig {
            source: PumpSource { pair_rate_hz: 1.0e6, ..Default::default() },
            detector_a: ideal(0),
            detector_b: ideal(1),
            window: CoincidenceWindow { tau_ns: 25 },
            entanglement_horizon_ns: 10_000,
            agents: vec![
                Agent::new(AgentId(1), Role::Alice, AgentKind::Ground, Vec3::ZERO, 0.0),
                Agent::new(AgentId(2), Role::Bob, AgentKind::Ground, Vec3::new(0.0, 5.0, 0.0), 0.0),
                Agent::new(AgentId(3), Role::Leader, AgentKind::Aerial, Vec3::new(0.0, 0.0, 10.0), 0.0),
            ],
            robot_a: AgentId(1),
            robot_b: AgentId(2),
            leader: Some(AgentId(3)),
            task_id: 42,
            qkd: QkdConfig { photons: 100, ..Default::default() },
            policy: KeyPolicy::Pairwise,
            mapping: CommandMapping::motion(0.5),
            link: LinkModel::default(),
            dt_s: 0.1,
            horizon_steps: 80,
            bits_per_step: 1,
            fail_safe: Command::Halt,
        }
    }

    #[test]
    fn pairwise_robots_follow_the_same_commands() {
        let t = combined_scenario(&config(), 5).unwrap();
        let d = t.dispatch.expect("trigger");
        assert_eq!(d.tick, 0);
        assert_eq!(t.sessions.len(), 1);
        assert!(!t.aborted);
        let [a, b] = [&t.plans[0], &t.plans[1]];
        assert_eq!(a.key, b.key);
        assert!(!a.key.is_empty());
        assert_eq!(a.commands, b.commands);
        let ra = t.final_agents.iter().find(|x| x.id == AgentId(1)).unwrap();
        let rb = t.final_agents.iter().find(|x| x.id == AgentId(2)).unwrap();
        assert_eq!(ra.task_log, vec![(42, 0)]);
        assert_eq!(ra.task_log, rb.task_log);
        // identical starting headings and commands give identical displacement
        assert_eq!(ra.pose.x, rb.pose.x - 0.0);
        assert_eq!(ra.pose.y, rb.pose.y - 5.0);
    }

    #[test]
    fn no_pairs_no_session() {
        let mut cfg = config();
        cfg.source.pair_rate_hz = 0.0;
        let t = combined_scenario(&cfg, 5).unwrap();
        assert!(t.dispatch.is_none() && t.sessions.is_empty() && t.plans.is_empty());
        assert_eq!(t.trajectory.len(), 80 * 3);
        assert!(t.final_agents.iter().all(|a| a.pose == cfg.agents.iter().find(|b| b.id == a.id).unwrap().pose));
    }

    #[test]
    fn eavesdropping_halts_both() {
        let mut cfg = config();
        cfg.qkd.eve = EveConfig { enabled: true, intercept_probability: 1.0 };
        cfg.qkd.photons = 400;
        let t = combined_scenario(&cfg, 9).unwrap();
        assert!(t.aborted);
        for plan in &t.plans {
            assert_eq!(plan.commands, vec![(1, Command::Halt)]);
        }
        for a in &t.final_agents {
            assert_eq!(a.velocity, Vec3::ZERO);
        }
    }

    #[test]
    fn leader_policy_runs_two_sessions() {
        let mut cfg = config();
        cfg.policy = KeyPolicy::LeaderToEach;
        let t = combined_scenario(&cfg, 5).unwrap();
        assert_eq!(t.sessions.len(), 2);
        assert_eq!(t.sessions[0].sender, AgentId(3));
        assert_eq!(t.plans[0].agent, AgentId(1));
        assert_eq!(t.plans[1].agent, AgentId(2));
        cfg.leader = None;
        assert_eq!(
            combined_scenario(&cfg, 5).unwrap_err(),
            CombinedError::Robot(RobotError::InvalidConfig("leader"))
        );
    }

    #[test]
    fn deterministic() {
        assert_eq!(combined_scenario(&config(), 77), combined_scenario(&config(), 77));
    }
}
