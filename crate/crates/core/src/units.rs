//! Angle and unit helpers. Internally everything is SI with angles in radians;
//! degrees only appear at file and CLI boundaries.

use std::f64::consts::{PI, TAU};

pub const KNOT_MPS: f64 = 0.514_444;

#[inline]
pub fn deg(value: f64) -> f64 {
    value.to_radians()
}

/// Wraps an angle into `(-pi, pi]`.
#[inline]
pub fn wrap_pi(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Wraps an angle into `[0, 2pi)`.
#[inline]
pub fn wrap_two_pi(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Absolute angular distance in `[0, pi]`.
#[inline]
pub fn angle_between(a: f64, b: f64) -> f64 {
    wrap_pi(a - b).abs()
}
