//! Ground and aerial robots driven by key bits and entanglement triggers.
//!
//! The world advances in fixed ticks. Commands issued for a tick are applied
//! at the start of [`World::step`] and the resulting motion integrated over
//! `dt`. Optical tracking between robots is reduced to [`LinkModel`]: a range
//! limit, a yaw pointing cone and a residual availability probability.

mod combined;

pub use combined::{
    combined_scenario, CombinedConfig, CombinedTranscript, KeyPolicy, RobotPlan, SubSession,
};

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use crate::angle;
use crate::photonics::PairId;
use crate::qkd::Bit;
use crate::rng::RandomStream;
use crate::spdc::Coincidence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Role {
    Alice,
    Bob,
    Eve,
    Leader,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AgentKind {
    Ground,
    Aerial,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Self = Self { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
    }

    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Command {
    /// Rectilinear translation along the current heading.
    MoveConstantVelocity { speed: f64 },
    /// Velocity set to zero.
    Halt,
    /// A discrete task identified by number.
    Task { task_id: u32 },
}

impl Command {
    pub fn label(&self) -> &'static str {
        match self {
            Command::MoveConstantVelocity { .. } => "move",
            Command::Halt => "halt",
            Command::Task { .. } => "task",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Agent {
    pub id: AgentId,
    pub role: Role,
    pub kind: AgentKind,
    pub pose: Vec3,
    pub heading_deg: f64,
    pub velocity: Vec3,
    /// Executed tasks as `(task_id, tick)`.
    pub task_log: Vec<(u32, u64)>,
}

impl Agent {
    pub fn new(id: AgentId, role: Role, kind: AgentKind, pose: Vec3, heading_deg: f64) -> Self {
        let pose = match kind {
            AgentKind::Ground => Vec3 { z: 0.0, ..pose },
            AgentKind::Aerial => pose,
        };
        Self { id, role, kind, pose, heading_deg, velocity: Vec3::ZERO, task_log: Vec::new() }
    }
}

/// What each key bit means to the actuators.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CommandMapping {
    pub zero: Option<Command>,
    pub one: Option<Command>,
}

impl CommandMapping {
    /// 1 drives forward at `speed`, 0 stops.
    pub fn motion(speed: f64) -> Self {
        Self {
            zero: Some(Command::Halt),
            one: Some(Command::MoveConstantVelocity { speed }),
        }
    }
}

impl Default for CommandMapping {
    fn default() -> Self {
        Self::motion(1.0)
    }
}

pub fn map_bit_to_command(bit: Bit, mapping: &CommandMapping) -> Result<Command, RobotError> {
    match bit {
        Bit::Zero => mapping.zero,
        Bit::One => mapping.one,
    }
    .ok_or(RobotError::UnmappedBit(bit))
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinkModel {
    pub max_range_m: f64,
    pub max_pointing_error_deg: f64,
    pub availability: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self { max_range_m: 100.0, max_pointing_error_deg: 180.0, availability: 1.0 }
    }
}

impl LinkModel {
    /// Range and pointing only, no random draw.
    pub fn geometry_ok(&self, tx: &Agent, rx: &Agent) -> bool {
        let los = rx.pose.sub(tx.pose);
        if los.norm() > self.max_range_m {
            return false;
        }
        if los.x == 0.0 && los.y == 0.0 {
            // Directly above/below or co-located: the tilt servo covers it.
            return true;
        }
        let bearing = angle::to_degrees(libm::atan2(los.y, los.x));
        libm::fabs(angle::signed_diff(bearing, tx.heading_deg)) <= self.max_pointing_error_deg
    }
}

/// Whether a photon sent from `tx` this slot reaches `rx`.
pub fn link_available(tx: &Agent, rx: &Agent, model: &LinkModel, rng: &mut RandomStream) -> bool {
    model.geometry_ok(tx, rx) && rng.bernoulli(model.availability)
}

/// Apply a command to an agent's velocity or task log.
fn issue(agent: &mut Agent, command: Command, tick: u64) {
    match command {
        Command::MoveConstantVelocity { speed } => {
            let h = agent.heading_deg;
            agent.velocity = Vec3::new(speed * angle::cos_deg(h), speed * angle::sin_deg(h), 0.0);
        }
        Command::Halt => agent.velocity = Vec3::ZERO,
        Command::Task { task_id } => agent.task_log.push((task_id, tick)),
    }
}

fn integrate(agent: &mut Agent, dt_s: f64) {
    if agent.kind == AgentKind::Ground {
        agent.velocity.z = 0.0;
    }
    agent.pose.x += agent.velocity.x * dt_s;
    agent.pose.y += agent.velocity.y * dt_s;
    agent.pose.z += agent.velocity.z * dt_s;
    if agent.kind == AgentKind::Ground {
        agent.pose.z = 0.0;
    }
}

/// Advance every agent by `dt_s`. `commands` pairs agent ids with commands
/// issued this tick; they apply in order, so the last motion command wins.
/// Agents without a command keep their velocity.
pub fn step_world(
    agents: &mut [Agent],
    commands: &[(AgentId, Command)],
    tick: u64,
    dt_s: f64,
) -> Result<(), RobotError> {
    if !(dt_s > 0.0) {
        return Err(RobotError::NonPositiveTimeStep);
    }
    for (id, _) in commands {
        if !agents.iter().any(|a| a.id == *id) {
            return Err(RobotError::UnknownAgent(*id));
        }
    }
    for agent in agents.iter_mut() {
        let id = agent.id;
        for (_, c) in commands.iter().filter(|(target, _)| *target == id) {
            issue(agent, *c, tick);
        }
        integrate(agent, dt_s);
    }
    Ok(())
}

/// One line of the trajectory log.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryRecord {
    pub tick: u64,
    pub agent: AgentId,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub command: Option<Command>,
}

/// Agents plus the tick counter and a queue of commands for the next tick.
#[derive(Clone, Debug)]
pub struct World {
    pub agents: Vec<Agent>,
    pub tick: u64,
    pub dt_s: f64,
    pending: Vec<(AgentId, Command)>,
    pub trajectory: Vec<TrajectoryRecord>,
}

impl World {
    pub fn new(agents: Vec<Agent>, dt_s: f64) -> Result<Self, RobotError> {
        if !(dt_s > 0.0) {
            return Err(RobotError::NonPositiveTimeStep);
        }
        let mut seen = BTreeSet::new();
        for a in &agents {
            if !seen.insert(a.id) {
                return Err(RobotError::DuplicateAgent(a.id));
            }
        }
        Ok(Self { agents, tick: 0, dt_s, pending: Vec::new(), trajectory: Vec::new() })
    }

    pub fn agent(&self, id: AgentId) -> Option<&Agent> {
        self.agents.iter().find(|a| a.id == id)
    }

    /// Queue a command for the next tick.
    pub fn schedule(&mut self, id: AgentId, command: Command) -> Result<(), RobotError> {
        if self.agent(id).is_none() {
            return Err(RobotError::UnknownAgent(id));
        }
        self.pending.push((id, command));
        Ok(())
    }

    /// Apply queued and given commands, integrate, log, advance the tick.
    pub fn step(&mut self, commands: &[(AgentId, Command)]) -> Result<(), RobotError> {
        let mut all = core::mem::take(&mut self.pending);
        all.extend_from_slice(commands);
        step_world(&mut self.agents, &all, self.tick, self.dt_s)?;
        for a in &self.agents {
            let command = all.iter().rev().find(|(id, _)| *id == a.id).map(|(_, c)| *c);
            self.trajectory.push(TrajectoryRecord {
                tick: self.tick,
                agent: a.id,
                x: a.pose.x,
                y: a.pose.y,
                z: a.pose.z,
                command,
            });
        }
        self.tick += 1;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DispatchRecord {
    pub pair: PairId,
    pub task_id: u32,
    pub tick: u64,
    pub robots: [AgentId; 2],
}

/// Turns coincidences into simultaneous tasks, each pair at most once.
#[derive(Clone, Debug, Default)]
pub struct EntanglementDispatcher {
    dispatched: BTreeSet<PairId>,
    pub log: Vec<DispatchRecord>,
}

impl EntanglementDispatcher {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queue `Task(task_id)` for both robots on the world's next tick.
    pub fn trigger(
        &mut self,
        coincidence: &Coincidence,
        robot_a: AgentId,
        robot_b: AgentId,
        task_id: u32,
        world: &mut World,
    ) -> Result<DispatchRecord, RobotError> {
        let pair = coincidence.pair().ok_or(RobotError::NotAPair)?;
        if self.dispatched.contains(&pair) {
            return Err(RobotError::StaleCoincidence(pair));
        }
        world.schedule(robot_a, Command::Task { task_id })?;
        world.schedule(robot_b, Command::Task { task_id })?;
        self.dispatched.insert(pair);
        let record = DispatchRecord { pair, task_id, tick: world.tick, robots: [robot_a, robot_b] };
        self.log.push(record);
        Ok(record)
    }
}

/// Free-function form of [`EntanglementDispatcher::trigger`].
pub fn entanglement_trigger(
    dispatcher: &mut EntanglementDispatcher,
    coincidence: &Coincidence,
    robot_a: AgentId,
    robot_b: AgentId,
    task_id: u32,
    world: &mut World,
) -> Result<DispatchRecord, RobotError> {
    dispatcher.trigger(coincidence, robot_a, robot_b, task_id, world)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RobotError {
    UnmappedBit(Bit),
    StaleCoincidence(PairId),
    /// The coincidence is accidental: its events do not come from one pair.
    NotAPair,
    UnknownAgent(AgentId),
    DuplicateAgent(AgentId),
    NonPositiveTimeStep,
    InvalidConfig(&'static str),
}

impl fmt::Display for RobotError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RobotError::UnmappedBit(b) => write!(f, "no command mapped to bit {b}"),
            RobotError::StaleCoincidence(p) => write!(f, "pair {} was already dispatched", p.0),
            RobotError::NotAPair => f.write_str("coincidence does not come from one entangled pair"),
            RobotError::UnknownAgent(id) => write!(f, "unknown agent {id}"),
            RobotError::DuplicateAgent(id) => write!(f, "duplicate agent id {id}"),
            RobotError::NonPositiveTimeStep => f.write_str("time step must be positive"),
            RobotError::InvalidConfig(field) => write!(f, "invalid robot parameter {field}"),
        }
    }
}

impl core::error::Error for RobotError {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::PhotonId;
    use crate::spdc::{DetectionEvent, DetectorId, EventSource};
    use alloc::vec;

    fn ground(id: u32, x: f64, heading: f64) -> Agent {
        Agent::new(AgentId(id), Role::Alice, AgentKind::Ground, Vec3::new(x, 0.0, 0.0), heading)
    }

    fn coincidence(pair: u64) -> Coincidence {
        let ev = |d: u32, photon: u64| DetectionEvent {
            detector: DetectorId(d),
            timestamp_ns: 10,
            source: EventSource::TruePhoton { photon: PhotonId(photon), pair: Some(PairId(pair)) },
        };
        Coincidence { a: ev(0, 2 * pair), b: ev(1, 2 * pair + 1) }
    }

    #[test]
    fn default_mapping() {
        let m = CommandMapping::motion(0.5);
        assert_eq!(map_bit_to_command(Bit::One, &m), Ok(Command::MoveConstantVelocity { speed: 0.5 }));
        assert_eq!(map_bit_to_command(Bit::Zero, &m), Ok(Command::Halt));
    }

    #[test]
    fn custom_mapping() {
        let m = CommandMapping {
            zero: Some(Command::Task { task_id: 7 }),
            one: Some(Command::Task { task_id: 9 }),
        };
        assert_eq!(map_bit_to_command(Bit::Zero, &m), Ok(Command::Task { task_id: 7 }));
        let partial = CommandMapping { zero: None, ..m };
        assert_eq!(map_bit_to_command(Bit::Zero, &partial), Err(RobotError::UnmappedBit(Bit::Zero)));
    }

    #[test]
    fn link_geometry() {
        let mut rng = RandomStream::new(0);
        let model = LinkModel { max_range_m: 10.0, max_pointing_error_deg: 5.0, availability: 1.0 };
        let a = ground(0, 0.0, 0.0);
        assert!(link_available(&a, &ground(1, 0.0, 0.0), &model, &mut rng));
        assert!(link_available(&a, &ground(1, 9.0, 0.0), &model, &mut rng));
        assert!(!link_available(&a, &ground(1, 11.0, 0.0), &model, &mut rng));
        // behind the transmitter
        assert!(!link_available(&a, &ground(1, -3.0, 0.0), &model, &mut rng));
        let off_axis = Agent::new(AgentId(2), Role::Bob, AgentKind::Ground, Vec3::new(5.0, 1.0, 0.0), 0.0);
        // atan(1/5) = 11.3° > 5°
        assert!(!link_available(&a, &off_axis, &model, &mut rng));
        let drone = Agent::new(AgentId(3), Role::Alice, AgentKind::Aerial, Vec3::new(0.0, 0.0, 5.0), 90.0);
        assert!(link_available(&drone, &a, &model, &mut rng));
    }

    #[test]
    fn link_availability_rate() {
        let mut rng = RandomStream::new(77);
        let model = LinkModel { availability: 0.9, ..Default::default() };
        let (a, b) = (ground(0, 0.0, 0.0), ground(1, 1.0, 0.0));
        let up = (0..100_000).filter(|_| link_available(&a, &b, &model, &mut rng)).count();
        let frac = up as f64 / 100_000.0;
        assert!((frac - 0.9).abs() <= 0.01, "{frac}");
    }

    #[test]
    fn stepping() {
        let mut agents = vec![ground(0, 0.0, 0.0)];
        step_world(&mut agents, &[(AgentId(0), Command::Halt)], 0, 1.0).unwrap();
        assert_eq!(agents[0].pose, Vec3::ZERO);
        step_world(&mut agents, &[(AgentId(0), Command::MoveConstantVelocity { speed: 1.0 })], 1, 2.0)
            .unwrap();
        assert_eq!(agents[0].pose, Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(step_world(&mut agents, &[], 2, 0.0), Err(RobotError::NonPositiveTimeStep));
        assert_eq!(
            step_world(&mut agents, &[(AgentId(9), Command::Halt)], 2, 1.0),
            Err(RobotError::UnknownAgent(AgentId(9)))
        );
    }

    #[test]
    fn ground_agents_stay_on_the_floor() {
        let mut a = ground(0, 0.0, 30.0);
        a.velocity = Vec3::new(0.0, 0.0, 3.0);
        let mut agents = vec![a];
        for t in 0..10 {
            step_world(&mut agents, &[], t, 0.5).unwrap();
            assert_eq!(agents[0].pose.z, 0.0);
        }
    }

    #[test]
    fn trigger_is_simultaneous_and_one_shot() {
        let mut world = World::new(vec![ground(0, 0.0, 0.0), ground(1, 5.0, 0.0)], 0.1).unwrap();
        let mut dispatcher = EntanglementDispatcher::new();
        world.step(&[]).unwrap();
        let c = coincidence(4);
        let rec = dispatcher.trigger(&c, AgentId(0), AgentId(1), 3, &mut world).unwrap();
        assert_eq!(rec.tick, 1);
        world.step(&[]).unwrap();
        assert_eq!(world.agents[0].task_log, vec![(3, 1)]);
        assert_eq!(world.agents[1].task_log, vec![(3, 1)]);
        assert_eq!(
            dispatcher.trigger(&c, AgentId(0), AgentId(1), 3, &mut world),
            Err(RobotError::StaleCoincidence(PairId(4)))
        );
    }

    #[test]
    fn accidental_coincidence_is_rejected() {
        let mut world = World::new(vec![ground(0, 0.0, 0.0), ground(1, 5.0, 0.0)], 0.1).unwrap();
        let mut c = coincidence(1);
        c.b.source = EventSource::DarkCount;
        assert_eq!(
            EntanglementDispatcher::new().trigger(&c, AgentId(0), AgentId(1), 1, &mut world),
            Err(RobotError::NotAPair)
        );
    }

    #[test]
    fn duplicate_agents_rejected() {
        assert_eq!(
            World::new(vec![ground(0, 0.0, 0.0), ground(0, 1.0, 0.0)], 1.0).err(),
            Some(RobotError::DuplicateAgent(AgentId(0)))
        );
    }
}
