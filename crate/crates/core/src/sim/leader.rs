//! Motion scripts for the leader arm in the tracking task.

use std::f64::consts::{PI, TAU};

use crate::liegroup::Twist;

/// Amplitudes of the periodic leader trajectory (mm, rad).
pub const LEADER_AMPLITUDE: [f64; 6] = [75.0, 75.0, 75.0, 25.0 * PI / 180.0, 25.0 * PI / 180.0, 25.0 * PI / 180.0];
pub const LEADER_PHASE: [f64; 6] = [PI / 2.0, 0.0, 0.0, 0.0, 0.0, 0.0];
pub const LEADER_PERIOD: f64 = 30.0;

/// `2 pi b / T * cos(2 pi t / T + phase)` componentwise.
///
/// # Panics
/// If `period` is not positive.
pub fn leader_twist(t: f64, amplitude: &[f64; 6], phase: &[f64; 6], period: f64) -> Twist {
    assert!(period > 0.0, "leader period must be positive, got {period}");
    let w = TAU / period;
    Twist::from_array(std::array::from_fn(|i| w * amplitude[i] * (w * t + phase[i]).cos()))
}

/// Leader motion, expressed as a body twist of the held object.
#[derive(Clone, Debug, PartialEq)]
pub enum LeaderMotion {
    Still,
    Periodic {
        amplitude: [f64; 6],
        phase: [f64; 6],
        period: f64,
    },
    /// Out-and-back moves along one component at a time: `translation_mm` for the
    /// first three components and `rotation_deg` for the last three, each leg
    /// lasting `leg_s` with a raised-cosine velocity profile.
    SingleAxis {
        translation_mm: f64,
        rotation_deg: f64,
        leg_s: f64,
    },
}

impl LeaderMotion {
    pub fn periodic() -> Self {
        Self::Periodic {
            amplitude: LEADER_AMPLITUDE,
            phase: LEADER_PHASE,
            period: LEADER_PERIOD,
        }
    }

    pub fn single_axis() -> Self {
        Self::SingleAxis {
            translation_mm: 200.0,
            rotation_deg: 60.0,
            leg_s: 10.0,
        }
    }

    /// Total length of the script, if it has one.
    pub fn duration(&self) -> Option<f64> {
        match self {
            Self::SingleAxis { leg_s, .. } => Some(12.0 * leg_s),
            _ => None,
        }
    }

    pub fn twist(&self, t: f64) -> Twist {
        match self {
            Self::Still => Twist::zero(),
            Self::Periodic {
                amplitude,
                phase,
                period,
            } => leader_twist(t, amplitude, phase, *period),
            Self::SingleAxis {
                translation_mm,
                rotation_deg,
                leg_s,
            } => {
                let leg = (t / leg_s).floor();
                if t < 0.0 || leg >= 12.0 {
                    return Twist::zero();
                }
                let leg = leg as usize;
                let axis = leg / 2;
                let sign = if leg % 2 == 0 { 1.0 } else { -1.0 };
                let dist = if axis < 3 { *translation_mm } else { rotation_deg.to_radians() };
                let s = (t - leg as f64 * leg_s) / leg_s;
                // Raised cosine: integrates to `dist` over one leg, zero speed at both ends.
                let speed = dist / leg_s * (1.0 - (TAU * s).cos());
                let mut v = [0.0; 6];
                v[axis] = sign * speed;
                Twist::from_array(v)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leader_initial_velocity() {
        let v = leader_twist(0.0, &LEADER_AMPLITUDE, &LEADER_PHASE, LEADER_PERIOD);
        assert!(v[0].abs() < 1e-14);
        assert!((v[1] - 15.707963267948966).abs() < 1e-12);
    }

    #[test]
    fn single_axis_legs_return_home() {
        let m = LeaderMotion::single_axis();
        let dt = 1e-3;
        let n = (m.duration().unwrap() / dt).round() as usize;
        let mut total = [0.0; 6];
        let mut peak: f64 = 0.0;
        let mut disp = 0.0;
        for k in 0..n {
            let v = m.twist((k as f64 + 0.5) * dt);
            for i in 0..6 {
                total[i] += v[i] * dt;
            }
            if k < 10_000 {
                disp += v[0] * dt;
            }
            peak = peak.max(v[0]);
        }
        assert!((disp - 200.0).abs() < 1e-6);
        assert!(total.iter().all(|x| x.abs() < 1e-6));
        assert!(peak > 0.0);
    }
}
