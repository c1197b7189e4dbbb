//! Quick invariant battery behind the `selftest` subcommand.

use std::f64::consts::PI;

use qcoop_core::interferometer::{distribution_for_phase, sample_outcomes};
use qcoop_core::qkd::Bit;
use qcoop_core::robotnet::{map_bit_to_command, Agent, AgentId, AgentKind, CommandMapping, Role, Vec3, World};
use qcoop_core::spdc::{generate_pairs, match_timestamps, Arm, PumpSource};
use qcoop_core::RandomStream;

use crate::report::{events_ndjson, report_json};
use crate::run::run_scenario;
use crate::scenario::{Experiment, Scenario};
use crate::table1::verify_table1;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn greedy_quadratic(a: &[i64], b: &[i64], tau: i64) -> Vec<(usize, usize)> {
    let mut used = vec![false; b.len()];
    let mut out = Vec::new();
    for (i, &ta) in a.iter().enumerate() {
        if let Some(j) = (0..b.len()).find(|&j| !used[j] && (ta - b[j]).abs() <= tau) {
            used[j] = true;
            out.push((i, j));
        }
    }
    out
}

pub fn run_selftest(seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();

    checks.push(match verify_table1(100_000, seed) {
        Ok(rows) => {
            let failed: Vec<usize> = rows.iter().filter(|r| !r.passed).map(|r| r.row).collect();
            check("truth table", failed.is_empty(), format!("failed rows: {failed:?}"))
        }
        Err(e) => check("truth table", false, e.to_string()),
    });

    let n = 10_000;
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    let mut rng = RandomStream::substream(seed, "selftest/interferometer");
    let in_phase = sample_outcomes(&distribution_for_phase(0.0, false, amp).unwrap(), n, &mut rng);
    let opposed = sample_outcomes(&distribution_for_phase(PI, false, amp).unwrap(), n, &mut rng);
    checks.push(check(
        "interferometer extremes",
        in_phase.detector_b == n && opposed.detector_b == 0,
        format!("B at 0: {}, B at pi: {}", in_phase.detector_b, opposed.detector_b),
    ));
    let blocked = sample_outcomes(&distribution_for_phase(0.0, true, amp).unwrap(), n, &mut rng);
    let f = |c: u64| c as f64 / n as f64;
    checks.push(check(
        "blocked arm",
        (f(blocked.detector_b) - 0.25).abs() < 0.02
            && (f(blocked.detector_c) - 0.25).abs() < 0.02
            && (f(blocked.absorbed) - 0.5).abs() < 0.02,
        format!("{:?}", blocked),
    ));

    let mut s = Scenario::with_defaults("selftest", seed, Experiment::QkdSession);
    s.photon_count = 10_000;
    match run_scenario(&s).report.qkd {
        Some(q) => checks.push(check(
            "key exchange without eavesdropper",
            q.qber == 0.0 && q.keys_identical && (q.sifted_fraction - 0.5).abs() < 0.02,
            format!("qber {}, sifted fraction {}", q.qber, q.sifted_fraction),
        )),
        None => checks.push(check("key exchange without eavesdropper", false, "no summary".into())),
    }
    s.qkd.eve.enabled = true;
    s.qkd.compare_fraction = 1.0;
    s.photon_count = 20_000;
    match run_scenario(&s).report.qkd {
        Some(q) => checks.push(check(
            "intercept-resend error rate",
            (q.qber - 0.25).abs() < 0.03 && q.eve_detected,
            format!("qber {}", q.qber),
        )),
        None => checks.push(check("intercept-resend error rate", false, "no summary".into())),
    }

    let mut rng = RandomStream::substream(seed, "selftest/spdc");
    let degenerate = PumpSource::default().pair_wavelengths();
    let skewed = PumpSource { signal_wavelength_nm: Some(780.0), ..PumpSource::default() };
    let worst = generate_pairs(&skewed, 100_000, &mut rng)
        .map(|pairs| {
            pairs
                .iter()
                .map(|p| (1.0 / 405.0 - 1.0 / p.signal.wavelength_nm - 1.0 / p.idler.wavelength_nm).abs())
                .fold(0.0, f64::max)
        })
        .unwrap_or(f64::INFINITY);
    checks.push(check(
        "pair energy conservation",
        degenerate == Ok((810.0, 810.0)) && worst <= 1e-12,
        format!("degenerate {degenerate:?}, worst residual {worst:e}"),
    ));

    let mut pairs = generate_pairs(&PumpSource::default(), 10_000_000, &mut rng).unwrap_or_default();
    let angle = rng.uniform() * 180.0;
    let anti = pairs
        .iter_mut()
        .map(|p| {
            let a = p.measure(Arm::Signal, angle, &mut rng);
            let b = p.measure(Arm::Idler, angle, &mut rng);
            matches!((a, b), (Ok(x), Ok(y)) if x != y)
        })
        .filter(|&anti| anti)
        .count();
    checks.push(check(
        "same-angle anticorrelation",
        !pairs.is_empty() && anti == pairs.len(),
        format!("{anti}/{} at {angle:.3} deg", pairs.len()),
    ));

    let mut rng = RandomStream::substream(seed, "selftest/matcher");
    let mut agree = true;
    for _ in 0..50 {
        let mut a: Vec<i64> = (0..rng.uniform_int(0, 300)).map(|_| rng.uniform_int(0, 5_000)).collect();
        let mut b: Vec<i64> = (0..rng.uniform_int(0, 300)).map(|_| rng.uniform_int(0, 5_000)).collect();
        a.sort_unstable();
        b.sort_unstable();
        let tau = rng.uniform_int(0, 40);
        agree &= match_timestamps(&a, &b, tau).ok() == Some(greedy_quadratic(&a, &b, tau));
    }
    checks.push(check("coincidence matcher", agree, "50 random inputs against the quadratic scan".into()));

    let robot = (|| {
        let mut world = World::new(
            vec![Agent::new(AgentId(1), Role::Alice, AgentKind::Ground, Vec3::ZERO, 0.0)],
            0.1,
        )
        .ok()?;
        let mapping = CommandMapping::default();
        let mut trace = Vec::new();
        for bit in [Bit::One, Bit::Zero, Bit::One, Bit::One] {
            let c = map_bit_to_command(bit, &mapping).ok()?;
            trace.push(c.label());
            world.step(&[(AgentId(1), c)]).ok()?;
        }
        Some((world.agents[0].pose.x, trace))
    })();
    checks.push(match robot {
        Some((x, trace)) => check(
            "key-driven motion",
            (x - 0.3).abs() < 1e-12 && trace == ["move", "halt", "move", "move"],
            format!("displacement {x}, trace {trace:?}"),
        ),
        None => check("key-driven motion", false, "world rejected the commands".into()),
    });

    let s = Scenario::with_defaults("selftest", seed, Experiment::CombinedRobots);
    let (a, b) = (run_scenario(&s), run_scenario(&s));
    let same = report_json(&a.report).ok() == report_json(&b.report).ok()
        && events_ndjson(&a.events).ok() == events_ndjson(&b.events).ok();
    checks.push(check("determinism", same, "combined scenario run twice".into()));

    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        for c in run_selftest(3) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
