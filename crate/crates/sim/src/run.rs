//! Dispatch a scenario to its experiment and summarize the result.

use qcoop_core::channel::{Message, PublicChannel};
use qcoop_core::interferometer::{detection_probability, distribution_for_phase, sample_outcomes};
use qcoop_core::qkd::{run_session, Bit, QkdSessionReport, SessionStreams};
use qcoop_core::robotnet::{combined_scenario, CombinedTranscript};
use qcoop_core::rng::stream_id;
use qcoop_core::spdc::{
    bandpass_filter, detect, find_coincidences, generate_dark_counts, generate_pairs, sort_events, Arm,
    CoincidenceWindow, DetectionEvent, EventSource, FilterResult,
};
use qcoop_core::{Port, RandomStream};
use serde_json::json;

use crate::report::{
    trajectory_csv, AgentSummary, EntanglementSummary, Event, InterferometerSummary, PlanSummary, QkdSummary,
    RobotsSummary, RunOutput, RunStatus, SessionSummary, SimulationReport, StreamDraws, TriggerSummary,
};
use crate::scenario::{Experiment, Scenario};

fn digest(text: &str) -> String {
    format!("{:016x}", stream_id(text))
}

fn bit_string(bits: &[Bit]) -> String {
    bits.iter().map(|b| if *b == Bit::One { '1' } else { '0' }).collect()
}

fn fraction(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

struct Recorder {
    events: Vec<Event>,
    streams: Vec<StreamDraws>,
}

impl Recorder {
    fn new() -> Self {
        Self { events: Vec::new(), streams: Vec::new() }
    }

    fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    fn draws(&mut self, name: &str, draws: u64) {
        self.streams.push(StreamDraws { stream: name.into(), draws });
    }

    fn channel(&mut self, stream: &str, messages: &[Message]) {
        for (seq, m) in messages.iter().enumerate() {
            let (t, kind, payload) = match m {
                Message::Basis { from, index, basis } => {
                    (*index as i64, "basis", json!({ "seq": seq, "from": from, "basis": basis.symbol() }))
                }
                Message::Bit { from, index, bit } => {
                    (*index as i64, "bit", json!({ "seq": seq, "from": from, "bit": bit.as_u8() }))
                }
                Message::ArrivalTimes { from, timestamps_ns } => {
                    (0, "arrival_times", json!({ "seq": seq, "from": from, "timestamps_ns": timestamps_ns }))
                }
            };
            self.push(Event::new(t, stream, kind, payload));
        }
    }
}

fn qkd_summary(r: &QkdSessionReport, channel_messages: usize) -> QkdSummary {
    QkdSummary {
        photons_sent: r.photons_sent,
        photons_detected: r.photons_detected,
        intercepted: r.intercepted,
        sifted_length: r.sifted_length as u64,
        sifted_fraction: fraction(r.sifted_length as u64, r.photons_sent),
        compared: r.compared_count as u64,
        mismatches: r.mismatches as u64,
        qber: r.qber,
        eve_detected: r.eve_detected,
        abort: r.abort,
        final_key_length: r.final_key.len() as u64,
        keys_identical: r.final_key.bits == r.bob_final_key.bits,
        final_key_digest: digest(&bit_string(&r.final_key.bits)),
        channel_messages: channel_messages as u64,
    }
}

fn run_interferometer(s: &Scenario, rec: &mut Recorder, report: &mut SimulationReport) -> Result<(), String> {
    let p = &s.interferometer;
    let cfg = p.config();
    let (delta, dist) = match p.delta {
        Some(d) => (d, distribution_for_phase(d, p.arm2_blocked, p.splitter_amplitude)),
        None => (cfg.phase_difference().map_err(|e| e.to_string())?, detection_probability(&cfg)),
    };
    let dist = dist.map_err(|e| e.to_string())?;
    let name = "interferometer/photons";
    let mut rng = RandomStream::substream(s.seed, name);
    let counts = sample_outcomes(&dist, s.photon_count, &mut rng);
    rec.draws(name, rng.counter());
    rec.push(Event::new(
        0,
        name,
        "outcome_counts",
        json!({ "b": counts.detector_b, "c": counts.detector_c, "absorbed": counts.absorbed }),
    ));
    let n = s.photon_count;
    report.interferometer = Some(InterferometerSummary {
        delta,
        arm2_blocked: p.arm2_blocked,
        p_detector_b: dist.p_detector_b,
        p_detector_c: dist.p_detector_c,
        p_absorbed: dist.p_absorbed,
        photons: n,
        count_b: counts.detector_b,
        count_c: counts.detector_c,
        count_absorbed: counts.absorbed,
        fraction_b: fraction(counts.detector_b, n),
        fraction_c: fraction(counts.detector_c, n),
        fraction_absorbed: fraction(counts.absorbed, n),
    });
    Ok(())
}

fn run_qkd(s: &Scenario, rec: &mut Recorder, report: &mut SimulationReport) -> Result<(), String> {
    let mut streams = SessionStreams::new(s.seed, "qkd");
    let mut channel = PublicChannel::new();
    let result = run_session(&s.qkd_config(), &mut streams, &mut channel);
    for (name, rng) in [
        ("qkd/alice", &streams.alice),
        ("qkd/bob", &streams.bob),
        ("qkd/eve", &streams.eve),
        ("qkd/sampling", &streams.sampling),
    ] {
        rec.draws(name, rng.counter());
    }
    rec.channel("qkd/channel", channel.transcript());
    let r = result.map_err(|e| e.to_string())?;
    let summary = qkd_summary(&r, channel.transcript().len());
    if summary.abort {
        report.status = RunStatus::Aborted;
    }
    report.qkd = Some(summary);
    Ok(())
}

fn detection_event(e: &DetectionEvent, stream: &str) -> Event {
    let (source, pair) = match e.source {
        EventSource::TruePhoton { pair, .. } => ("photon", pair.map(|p| p.0)),
        EventSource::DarkCount => ("dark", None),
    };
    Event::new(e.timestamp_ns, stream, "detection", json!({ "detector": e.detector.0, "source": source, "pair": pair }))
}

fn run_entanglement(s: &Scenario, rec: &mut Recorder, report: &mut SimulationReport) -> Result<(), String> {
    let p = &s.spdc;
    let source = p.source();
    let (signal_nm, idler_nm) = source.pair_wavelengths().map_err(|e| e.to_string())?;
    let spec_a = p.detector_a.spec(0);
    let spec_b = p.detector_b.spec(1);
    spec_a.validate().map_err(|e| e.to_string())?;
    spec_b.validate().map_err(|e| e.to_string())?;

    let mut source_rng = RandomStream::substream(s.seed, "spdc/source");
    let mut analyzer_rng = RandomStream::substream(s.seed, "spdc/analyzer");
    let mut det_a_rng = RandomStream::substream(s.seed, "spdc/detector_a");
    let mut det_b_rng = RandomStream::substream(s.seed, "spdc/detector_b");

    let mut pairs = generate_pairs(&source, p.duration_ns, &mut source_rng).map_err(|e| e.to_string())?;
    let mut max_residual: f64 = 0.0;
    let (mut transmits, mut anticorrelated) = (0u64, 0u64);
    for pair in pairs.iter_mut() {
        let residual = 1.0 / source.wavelength_nm - 1.0 / pair.signal.wavelength_nm - 1.0 / pair.idler.wavelength_nm;
        max_residual = max_residual.max(residual.abs());
        let a = pair.measure(Arm::Signal, p.analyzer_a_deg, &mut analyzer_rng).map_err(|e| e.to_string())?;
        let b = pair.measure(Arm::Idler, p.analyzer_b_deg, &mut analyzer_rng).map_err(|e| e.to_string())?;
        transmits += (a == Port::Transmit) as u64;
        anticorrelated += (a != b) as u64;
    }

    let mut arm_events = |arm: Arm, spec, rng: &mut RandomStream| -> Result<Vec<DetectionEvent>, String> {
        let mut out = Vec::new();
        for pair in pairs.iter_mut() {
            let photon = pair.photon_mut(arm);
            if bandpass_filter(photon) == FilterResult::Block {
                continue;
            }
            if let Some(ev) = detect(photon, spec, rng).map_err(|e| e.to_string())? {
                out.push(ev);
            }
        }
        Ok(out)
    };
    let mut events_a = arm_events(Arm::Signal, &spec_a, &mut det_a_rng)?;
    let mut events_b = arm_events(Arm::Idler, &spec_b, &mut det_b_rng)?;
    let dark_a = generate_dark_counts(&spec_a, p.duration_ns, &mut det_a_rng);
    let dark_b = generate_dark_counts(&spec_b, p.duration_ns, &mut det_b_rng);
    let (n_dark_a, n_dark_b) = (dark_a.len() as u64, dark_b.len() as u64);
    events_a.extend(dark_a);
    events_b.extend(dark_b);
    sort_events(&mut events_a);
    sort_events(&mut events_b);
    let coincidences =
        find_coincidences(&events_a, &events_b, CoincidenceWindow { tau_ns: p.tau_ns }).map_err(|e| e.to_string())?;
    let true_coincidences = coincidences.iter().filter(|c| c.pair().is_some()).count() as u64;

    for (name, rng) in [
        ("spdc/source", &source_rng),
        ("spdc/analyzer", &analyzer_rng),
        ("spdc/detector_a", &det_a_rng),
        ("spdc/detector_b", &det_b_rng),
    ] {
        rec.draws(name, rng.counter());
    }
    for e in &events_a {
        rec.push(detection_event(e, "spdc/detector_a"));
    }
    for e in &events_b {
        rec.push(detection_event(e, "spdc/detector_b"));
    }
    for c in &coincidences {
        rec.push(Event::new(
            c.a.timestamp_ns,
            "spdc/coincidence",
            "coincidence",
            json!({ "t_a": c.a.timestamp_ns, "t_b": c.b.timestamp_ns, "pair": c.pair().map(|p| p.0) }),
        ));
    }

    let duration_s = p.duration_ns as f64 * 1e-9;
    let expected_accidentals = if duration_s > 0.0 {
        let rate_a = events_a.len() as f64 / duration_s;
        let rate_b = events_b.len() as f64 / duration_s;
        (2 * p.tau_ns + 1) as f64 * 1e-9 * rate_a * rate_b * duration_s
    } else {
        0.0
    };
    let n_pairs = pairs.len() as u64;
    report.entanglement = Some(EntanglementSummary {
        pairs_generated: n_pairs,
        signal_wavelength_nm: signal_nm,
        idler_wavelength_nm: idler_nm,
        max_energy_residual: max_residual,
        analyzer_a_deg: p.analyzer_a_deg,
        analyzer_b_deg: p.analyzer_b_deg,
        signal_transmit_fraction: fraction(transmits, n_pairs),
        anticorrelated_fraction: fraction(anticorrelated, n_pairs),
        events_a: events_a.len() as u64,
        events_b: events_b.len() as u64,
        dark_events_a: n_dark_a,
        dark_events_b: n_dark_b,
        coincidences: coincidences.len() as u64,
        true_coincidences,
        accidental_coincidences: coincidences.len() as u64 - true_coincidences,
        expected_accidentals,
    });
    Ok(())
}

fn robots_summary(t: &CombinedTranscript, s: &Scenario) -> Result<RobotsSummary, String> {
    let start = |id: u32| s.robots.agents.iter().find(|a| a.id == id);
    Ok(RobotsSummary {
        pairs_generated: t.pairs_generated,
        coincidences: t.coincidences.len() as u64,
        trigger: t.dispatch.as_ref().map(|d| TriggerSummary {
            pair: d.pair.0,
            task_id: d.task_id,
            tick: d.tick,
            robots: [d.robots[0].0, d.robots[1].0],
        }),
        sessions: t
            .sessions
            .iter()
            .map(|x| SessionSummary {
                label: x.label.clone(),
                sender: x.sender.0,
                receiver: x.receiver.0,
                qkd: qkd_summary(&x.report, x.channel.len()),
            })
            .collect(),
        aborted: t.aborted,
        plans: t
            .plans
            .iter()
            .map(|p| PlanSummary {
                agent: p.agent.0,
                key_length: p.key.len() as u64,
                commands: p.commands.iter().map(|(tick, c)| format!("{tick}:{}", c.label())).collect(),
            })
            .collect(),
        agents: t
            .final_agents
            .iter()
            .map(|a| {
                let displacement = start(a.id.0).map_or(0.0, |s0| {
                    let (dx, dy, dz) = (a.pose.x - s0.x, a.pose.y - s0.y, a.pose.z - s0.z);
                    (dx * dx + dy * dy + dz * dz).sqrt()
                });
                AgentSummary {
                    id: a.id.0,
                    x: a.pose.x,
                    y: a.pose.y,
                    z: a.pose.z,
                    displacement,
                    task_log: a.task_log.clone(),
                }
            })
            .collect(),
        trajectory_rows: t.trajectory.len() as u64,
        trajectory_digest: digest(&trajectory_csv(&t.trajectory).map_err(|e| e.to_string())?),
    })
}

fn run_robots(s: &Scenario, rec: &mut Recorder, report: &mut SimulationReport) -> Result<Vec<qcoop_core::robotnet::TrajectoryRecord>, String> {
    let t = combined_scenario(&s.combined_config(), s.seed).map_err(|e| e.to_string())?;
    for (name, draws) in &t.stream_draws {
        rec.draws(name, *draws);
    }
    for e in &t.events_a {
        rec.push(detection_event(e, "spdc/detector_a"));
    }
    for e in &t.events_b {
        rec.push(detection_event(e, "spdc/detector_b"));
    }
    if let Some(d) = &t.dispatch {
        rec.push(Event::new(
            d.tick as i64,
            "robot/dispatch",
            "entanglement_trigger",
            json!({ "pair": d.pair.0, "task_id": d.task_id, "robots": [d.robots[0].0, d.robots[1].0] }),
        ));
    }
    for sub in &t.sessions {
        rec.channel(&format!("qkd/{}/channel", sub.label), &sub.channel);
    }
    for plan in &t.plans {
        for (tick, c) in &plan.commands {
            rec.push(Event::new(
                *tick as i64,
                format!("robot/{}", plan.agent.0),
                "command",
                serde_json::to_value(c).unwrap_or_default(),
            ));
        }
    }
    let summary = robots_summary(&t, s)?;
    if summary.aborted {
        report.status = RunStatus::Aborted;
    }
    report.robots = Some(summary);
    Ok(t.trajectory)
}

/// Run one scenario. Failures are recorded in the report, not returned.
pub fn run_scenario(s: &Scenario) -> RunOutput {
    let mut report = SimulationReport {
        name: s.name.clone(),
        seed: s.seed,
        experiment: Some(s.experiment),
        scenario: Some(s.clone()),
        ..SimulationReport::default()
    };
    let mut rec = Recorder::new();
    let mut trajectory = Vec::new();
    let outcome = match s.experiment {
        Experiment::Interferometer => run_interferometer(s, &mut rec, &mut report),
        Experiment::QkdSession => run_qkd(s, &mut rec, &mut report),
        Experiment::Entanglement => run_entanglement(s, &mut rec, &mut report),
        Experiment::CombinedRobots => run_robots(s, &mut rec, &mut report).map(|t| trajectory = t),
    };
    if let Err(msg) = outcome {
        report.status = RunStatus::Failed;
        report.failure = Some(msg.clone());
        rec.push(Event::new(0, "harness", "failure", json!({ "message": msg })));
    }
    for d in &rec.streams {
        rec.events.push(Event::new(0, d.stream.clone(), "draws", json!({ "count": d.draws })));
    }
    report.streams = rec.streams;
    report.event_count = rec.events.len() as u64;
    RunOutput { report, events: rec.events, trajectory }
}
