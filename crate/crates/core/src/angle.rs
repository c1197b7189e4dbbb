//! Degree arithmetic with exact results on the quarter turns.
//!
//! `fmod` is exact in IEEE arithmetic and sums of half-degree multiples are
//! exactly representable, so plate compositions on the BB84 grid never drift.

use core::f64::consts::PI;

/// Reduce `deg` into `[low, low + period)`.
pub fn wrap(deg: f64, low: f64, period: f64) -> f64 {
    let shifted = libm::fmod(deg - low, period);
    let shifted = if shifted < 0.0 { shifted + period } else { shifted };
    // fmod of a tiny negative value plus period can round up to period.
    if shifted >= period {
        low
    } else {
        shifted + low
    }
}

/// `cos` of an angle in degrees. Exact (0, ±1) at multiples of 90°.
pub fn cos_deg(deg: f64) -> f64 {
    let d = wrap(deg, 0.0, 360.0);
    if d == 0.0 {
        1.0
    } else if d == 90.0 || d == 270.0 {
        0.0
    } else if d == 180.0 {
        -1.0
    } else {
        libm::cos(d.to_radians())
    }
}

/// `sin` of an angle in degrees. Exact at multiples of 90°.
pub fn sin_deg(deg: f64) -> f64 {
    cos_deg(deg - 90.0)
}

/// `cos^2` of an angle in degrees, computed as `(1 + cos 2d) / 2` so that
/// 0°, 45° and 90° map to exactly 1, 1/2 and 0.
pub fn cos_sq_deg(deg: f64) -> f64 {
    ((1.0 + cos_deg(2.0 * deg)) / 2.0).clamp(0.0, 1.0)
}

/// Signed difference `a - b` wrapped into `[-180, 180)`.
pub fn signed_diff(a: f64, b: f64) -> f64 {
    wrap(a - b, -180.0, 360.0)
}

pub fn to_radians(deg: f64) -> f64 {
    deg * PI / 180.0
}

pub fn to_degrees(rad: f64) -> f64 {
    rad * 180.0 / PI
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_into_canonical_range() {
        assert_eq!(wrap(135.0, -45.0, 180.0), -45.0);
        assert_eq!(wrap(-45.0, -45.0, 180.0), -45.0);
        assert_eq!(wrap(180.0, -45.0, 180.0), 0.0);
        assert_eq!(wrap(-90.0, -45.0, 180.0), 90.0);
        assert_eq!(wrap(405.0, -45.0, 180.0), 45.0);
        assert_eq!(wrap(-1e-18, 0.0, 360.0), 0.0);
    }

    #[test]
    fn quarter_turns_are_exact() {
        assert_eq!(cos_deg(90.0), 0.0);
        assert_eq!(cos_deg(-270.0), 0.0);
        assert_eq!(cos_deg(180.0), -1.0);
        assert_eq!(sin_deg(90.0), 1.0);
        assert_eq!(cos_sq_deg(45.0), 0.5);
        assert_eq!(cos_sq_deg(-45.0), 0.5);
        assert_eq!(cos_sq_deg(90.0), 0.0);
    }

    #[test]
    fn matches_libm_off_grid() {
        for i in 0..100 {
            let d = i as f64 * 3.7 - 50.0;
            let expected = libm::cos(d * PI / 180.0);
            assert!((cos_deg(d) - expected).abs() < 1e-12, "{d}");
        }
    }
}
