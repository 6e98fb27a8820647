//! Hitch-angle controller.
//!
//! Local planners emit a bicycle-frame command `(v, omega)` for the trailer
//! axle. The tractor cannot execute it directly: the command is turned into a
//! target hitch angle via the path curvature, a P-controller rotates the
//! tractor toward that angle, and a Gaussian gate holds back the longitudinal
//! speed until the hitch angle has caught up.

use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::kinematics::{TractorCommand, TrailerState, VehicleParams};

/// Below this speed a nonzero turn rate cannot be mapped to a curvature.
pub const V_EPS: f64 = 1e-3;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum ControlError {
    #[error("cannot turn in place: v = {v}, omega = {omega}")]
    DegenerateCommand { v: f64, omega: f64 },
}

/// Bicycle-frame command: longitudinal speed and yaw rate of the trailer axle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VelocityCommand {
    pub v: f64,
    pub omega: f64,
}

impl VelocityCommand {
    pub const fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringSolution {
    pub kappa: f64,
    pub delta_target: f64,
}

/// Wraps `a` into `[-pi, pi)`; equal to the floored `(a + pi) mod 2pi - pi`.
#[inline]
pub fn normalize_angle(a: f64) -> f64 {
    if (-PI..PI).contains(&a) {
        return a;
    }
    // Both steps are exact: the floored remainder, and the subtraction of
    // values within a factor of two of each other.
    let r = a.rem_euclid(TAU);
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

/// Curvature of the requested motion and the steering angle that realizes it,
/// clamped to the hitch limit.
pub fn target_steering(
    cmd: VelocityCommand,
    p: &VehicleParams,
) -> Result<SteeringSolution, ControlError> {
    let kappa = if cmd.v.abs() >= V_EPS {
        cmd.omega / cmd.v
    } else if cmd.omega == 0.0 {
        0.0
    } else {
        return Err(ControlError::DegenerateCommand {
            v: cmd.v,
            omega: cmd.omega,
        });
    };
    let delta_target = (p.wheelbase * kappa)
        .atan()
        .clamp(-p.delta_max, p.delta_max);
    Ok(SteeringSolution {
        kappa,
        delta_target,
    })
}

/// Longitudinal gate `exp(-dd^2 / alpha^2)` in `(0, 1]`.
#[inline]
pub fn gate_factor(deviation: f64, alpha: f64) -> f64 {
    (-(deviation * deviation) / (alpha * alpha)).exp()
}

/// P-control toward `delta_target` with the gated speed `v`.
fn regulate(v: f64, delta_target: f64, s: &TrailerState, p: &VehicleParams) -> TractorCommand {
    let deviation = normalize_angle(delta_target - s.delta);
    let omega = (p.kp * deviation).clamp(-p.omega_max, p.omega_max);
    let v = (v * gate_factor(deviation, p.alpha)).clamp(-p.v_max, p.v_max);
    TractorCommand { v, omega }
}

/// Stateless form of [`HitchController::command`]. A degenerate command holds
/// the current hitch angle and stops.
pub fn control_step(cmd: VelocityCommand, s: &TrailerState, p: &VehicleParams) -> TractorCommand {
    HitchController::new().command(cmd, s, p)
}

/// Controller session for one simulation loop. Remembers the last steering
/// target so a degenerate command (stop with residual turn) keeps regulating
/// toward it instead of snapping the hitch straight.
#[derive(Debug, Clone, Default)]
pub struct HitchController {
    held_target: Option<f64>,
}

impl HitchController {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn held_target(&self) -> Option<f64> {
        self.held_target
    }

    pub fn command(
        &mut self,
        cmd: VelocityCommand,
        s: &TrailerState,
        p: &VehicleParams,
    ) -> TractorCommand {
        match target_steering(cmd, p) {
            Ok(sol) => {
                self.held_target = Some(sol.delta_target);
                regulate(cmd.v, sol.delta_target, s, p)
            }
            Err(ControlError::DegenerateCommand { .. }) => {
                let target = self.held_target.unwrap_or(s.delta);
                regulate(0.0, target, s, p)
            }
        }
    }
}
