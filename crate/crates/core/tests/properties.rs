use std::collections::BTreeSet;

use proptest::prelude::*;
use qcoop_core::interferometer::distribution_for_phase;
use qcoop_core::photonics::{compose_probability, hwp_rotate, malus_probability, ProbabilityAmplitude};
use qcoop_core::spdc::match_timestamps;
use qcoop_core::PolarizationState;

/// O(n*m) greedy: each `a`, in order, scans all of `b` for the earliest
/// unmatched event inside the window.
fn brute_force_match(a: &[i64], b: &[i64], tau: i64) -> Vec<(usize, usize)> {
    let mut used = vec![false; b.len()];
    let mut out = Vec::new();
    for (i, &ta) in a.iter().enumerate() {
        for (j, &tb) in b.iter().enumerate() {
            if !used[j] && (ta - tb).abs() <= tau {
                used[j] = true;
                out.push((i, j));
                break;
            }
        }
    }
    out
}

fn sorted_times(max_len: usize, span: i64) -> impl Strategy<Value = Vec<i64>> {
    proptest::collection::vec(0..span, 0..max_len).prop_map(|mut v| {
        v.sort_unstable();
        v
    })
}

proptest! {
    #[test]
    fn hwp_rotations_compose(theta in -720.0f64..720.0, a1 in -360.0f64..360.0, a2 in -360.0f64..360.0) {
        let s = PolarizationState::new(theta);
        let two_steps = hwp_rotate(hwp_rotate(s, a1), a2).degrees();
        let one_step = hwp_rotate(s, a1 + a2).degrees();
        // both are in [-45, 135); compare modulo 180
        let d = (two_steps - one_step).rem_euclid(180.0);
        prop_assert!(d < 1e-9 || 180.0 - d < 1e-9, "{} vs {}", two_steps, one_step);
    }

    #[test]
    fn hwp_on_half_degree_grid_is_exact(theta in -400i32..400, a1 in -400i32..400, a2 in -400i32..400) {
        let s = PolarizationState::new(theta as f64 * 0.5);
        let (a1, a2) = (a1 as f64 * 0.5, a2 as f64 * 0.5);
        prop_assert_eq!(hwp_rotate(hwp_rotate(s, a1), a2), hwp_rotate(s, a1 + a2));
    }

    #[test]
    fn canonical_range(theta in -1e6f64..1e6) {
        let d = PolarizationState::new(theta).degrees();
        prop_assert!((-45.0..135.0).contains(&d));
    }

    #[test]
    fn malus_symmetric_and_bounded(t in -360.0f64..360.0, a in -360.0f64..360.0) {
        let p = malus_probability(PolarizationState::new(t), a);
        let q = malus_probability(PolarizationState::new(a), t);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p - q).abs() < 1e-12);
        // independent oracle: projection of unit Jones vectors
        let expected = (t.to_radians().cos() * a.to_radians().cos()
            + t.to_radians().sin() * a.to_radians().sin()).powi(2);
        prop_assert!((p - expected).abs() < 1e-9);
    }

    #[test]
    fn malus_zero_exactly_when_crossed(t in -200i32..200, k in -3i32..3) {
        let t = t as f64 * 0.5;
        let axis = t + 90.0 + 180.0 * k as f64;
        prop_assert_eq!(malus_probability(PolarizationState::new(t), axis), 0.0);
        let off = malus_probability(PolarizationState::new(t), axis + 0.5);
        prop_assert!(off > 0.0);
    }

    #[test]
    fn single_amplitude_rule(m in 0.0f64..=1.0, phase in -10.0f64..10.0) {
        let a = ProbabilityAmplitude::new(m, phase).unwrap();
        let p_ind = compose_probability(&[a], false).unwrap();
        let p_dist = compose_probability(&[a], true).unwrap();
        prop_assert!((p_ind - m * m).abs() < 1e-12);
        prop_assert!((p_dist - m * m).abs() < 1e-15);
    }

    #[test]
    fn interferometer_conserves(delta in -50.0f64..50.0) {
        let d = distribution_for_phase(delta, false, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        prop_assert!((d.p_detector_b + d.p_detector_c - 1.0).abs() < 1e-12);
        let shifted = distribution_for_phase(delta + 2.0 * std::f64::consts::PI, false, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        prop_assert!((d.p_detector_b - shifted.p_detector_b).abs() < 1e-12);
    }

    #[test]
    fn matcher_equals_brute_force(a in sorted_times(200, 5_000), b in sorted_times(200, 5_000), tau in 0i64..60) {
        prop_assert_eq!(match_timestamps(&a, &b, tau).unwrap(), brute_force_match(&a, &b, tau));
    }

    #[test]
    fn matcher_is_symmetric(a in sorted_times(200, 3_000), b in sorted_times(200, 3_000), tau in 0i64..60) {
        let ab: BTreeSet<(i64, i64)> = match_timestamps(&a, &b, tau).unwrap()
            .into_iter().map(|(i, j)| (a[i], b[j])).collect();
        let ba: BTreeSet<(i64, i64)> = match_timestamps(&b, &a, tau).unwrap()
            .into_iter().map(|(j, i)| (a[i], b[j])).collect();
        prop_assert_eq!(ab.len(), ba.len());
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn zero_window_only_identical(a in sorted_times(100, 300), b in sorted_times(100, 300)) {
        for (i, j) in match_timestamps(&a, &b, 0).unwrap() {
            prop_assert_eq!(a[i], b[j]);
        }
    }

    #[test]
    fn matching_is_one_to_one(a in sorted_times(300, 2_000), b in sorted_times(300, 2_000), tau in 0i64..100) {
        let m = match_timestamps(&a, &b, tau).unwrap();
        let ai: BTreeSet<usize> = m.iter().map(|p| p.0).collect();
        let bj: BTreeSet<usize> = m.iter().map(|p| p.1).collect();
        prop_assert_eq!(ai.len(), m.len());
        prop_assert_eq!(bj.len(), m.len());
    }
}
