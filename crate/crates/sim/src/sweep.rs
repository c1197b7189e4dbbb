//! Parameter grids over a base scenario.
//!
//! Every grid point reruns the scenario with the same seed, so points share
//! their random streams and differ only through the swept parameter.

use serde::Serialize;

use crate::error::HarnessError;
use crate::report::round_sig;
use crate::run::run_scenario;
use crate::scenario::{Experiment, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    /// Interferometer phase difference, radians, on a half-open grid.
    Delta,
    /// Eavesdropper intercept probability, on a closed grid.
    InterceptProbability,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaRow {
    pub delta: f64,
    pub p_detector_b: f64,
    pub photons: u64,
    pub count_b: u64,
    pub count_c: u64,
    pub fraction_b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterceptRow {
    pub intercept_probability: f64,
    pub photons: u64,
    pub intercepted: u64,
    pub sifted_length: u64,
    pub compared: u64,
    pub qber: f64,
    pub eve_detected: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SweepTable {
    Delta(Vec<DeltaRow>),
    InterceptProbability(Vec<InterceptRow>),
}

impl SweepTable {
    pub fn len(&self) -> usize {
        match self {
            SweepTable::Delta(r) => r.len(),
            SweepTable::InterceptProbability(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        fn rows<T: Serialize>(rows: &[T]) -> Result<String, HarnessError> {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| HarnessError::Internal(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| HarnessError::Internal(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| HarnessError::Internal(e.to_string()))
        }
        match self {
            SweepTable::Delta(r) => rows(r),
            SweepTable::InterceptProbability(r) => rows(r),
        }
    }
}

/// `steps` points from `from` toward `to`; `to` itself is included only when
/// `closed`.
pub fn grid(from: f64, to: f64, steps: usize, closed: bool) -> Vec<f64> {
    match (steps, closed) {
        (0, _) => Vec::new(),
        (1, _) => vec![from],
        (n, true) => (0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect(),
        (n, false) => (0..n).map(|i| from + (to - from) * i as f64 / n as f64).collect(),
    }
}

pub fn sweep(base: &Scenario, param: SweepParam, values: &[f64]) -> Result<SweepTable, HarnessError> {
    let mut s = base.clone();
    match param {
        SweepParam::Delta => {
            s.experiment = Experiment::Interferometer;
            let mut rows = Vec::with_capacity(values.len());
            for &delta in values {
                s.interferometer.delta = Some(delta);
                s.validate()?;
                let out = run_scenario(&s);
                let i = out
                    .report
                    .interferometer
                    .ok_or_else(|| HarnessError::Internal(out.report.failure.unwrap_or_default()))?;
                rows.push(DeltaRow {
                    delta: round_sig(delta),
                    p_detector_b: round_sig(i.p_detector_b),
                    photons: i.photons,
                    count_b: i.count_b,
                    count_c: i.count_c,
                    fraction_b: round_sig(i.fraction_b),
                });
            }
            Ok(SweepTable::Delta(rows))
        }
        SweepParam::InterceptProbability => {
            s.experiment = Experiment::QkdSession;
            s.qkd.eve.enabled = true;
            let mut rows = Vec::with_capacity(values.len());
            for &p in values {
                s.qkd.eve.intercept_probability = p;
                s.validate()?;
                let out = run_scenario(&s);
                let q = out.report.qkd.ok_or_else(|| HarnessError::Internal(out.report.failure.unwrap_or_default()))?;
                rows.push(InterceptRow {
                    intercept_probability: round_sig(p),
                    photons: q.photons_sent,
                    intercepted: q.intercepted,
                    sifted_length: q.sifted_length,
                    compared: q.compared,
                    qber: round_sig(q.qber),
                    eve_detected: q.eve_detected,
                });
            }
            Ok(SweepTable::InterceptProbability(rows))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn twenty_phase_points() {
        let s = Scenario::with_defaults("sweep", 4, Experiment::Interferometer);
        let table = sweep(&s, SweepParam::Delta, &grid(0.0, 2.0 * PI, 20, false)).unwrap();
        let csv = table.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("delta,p_detector_b,photons,count_b,count_c,fraction_b"));
        let deltas: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(deltas.len(), 20);
        assert!(deltas.windows(2).all(|w| w[0] < w[1]));
        assert!(*deltas.last().unwrap() < 2.0 * PI);
    }

    #[test]
    fn qber_grows_with_interception() {
        let mut s = Scenario::with_defaults("sweep", 4, Experiment::QkdSession);
        s.photon_count = 20_000;
        s.qkd.compare_fraction = 1.0;
        let SweepTable::InterceptProbability(rows) =
            sweep(&s, SweepParam::InterceptProbability, &grid(0.0, 1.0, 5, true)).unwrap()
        else {
            unreachable!()
        };
        assert_eq!(rows[0].qber, 0.0);
        for r in &rows {
            // intercepting a fraction p of photons gives QBER p/4
            assert!((r.qber - r.intercept_probability / 4.0).abs() < 0.015, "{r:?}");
        }
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid(0.0, 1.0, 5, true), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(grid(0.0, 1.0, 4, false), vec![0.0, 0.25, 0.5, 0.75]);
        assert!(grid(0.0, 1.0, 0, true).is_empty());
    }
}
