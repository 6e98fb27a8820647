//! Tractor-trailer kinematics with an on-axle hitch.
//!
//! The trailer axle is the rear axle of a bicycle model and the tractor's
//! rotation center is the steering axle, `wheelbase` ahead of it. Because the
//! hitch sits on the tractor's rotation axis, the tractor position depends only
//! on the trailer pose:
//!
//! ```text
//! tractor = trailer + L (cos theta, sin theta),   psi = theta + delta
//! theta_dot = (v / L) sin delta,                   delta_dot = omega - theta_dot
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Circle, Footprint, Point2, Pose2D};
use crate::hitch::normalize_angle;

pub const DEFAULT_DT: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("time step {0} outside (0, 0.1]")]
    TimeStep(f64),
    #[error("invalid vehicle parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Hitch to trailer-axle distance.
    pub wheelbase: f64,
    pub delta_max: f64,
    pub v_max: f64,
    pub omega_max: f64,
    /// Hitch P-gain, 1/s.
    pub kp: f64,
    /// Width of the Gaussian speed gate, rad.
    pub alpha: f64,
    /// Tractor outline in the tractor frame.
    pub tractor_footprint: Footprint,
    /// Global-planning outline in the trailer frame.
    pub trailer_footprint: Footprint,
    /// Local-planning two-circle model in the trailer frame.
    pub local_footprint: Footprint,
    /// Radius of the circular safety zone around the tractor center.
    pub safety_radius: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let wheelbase = 1.0;
        let tractor_footprint = Footprint::Rectangle {
            length: 0.5,
            width: 0.35,
            offset_x: 0.0,
        };
        Self {
            wheelbase,
            delta_max: 1.2,
            v_max: 0.8,
            omega_max: 1.0,
            kp: 2.0,
            alpha: 0.5,
            tractor_footprint,
            // Spans the trailer axle circle and the tractor safety disk.
            trailer_footprint: Footprint::Rectangle {
                length: 1.65,
                width: 0.7,
                offset_x: 0.525,
            },
            local_footprint: Footprint::TwoCircles {
                circle_1: Circle {
                    offset_x: wheelbase,
                    radius: 0.35,
                },
                circle_2: Circle {
                    offset_x: 0.0,
                    radius: 0.35,
                },
            },
            safety_radius: tractor_footprint.circumradius() + 0.05,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let checks = [
            (pos(self.wheelbase), "wheelbase must be > 0"),
            (
                pos(self.delta_max) && self.delta_max < std::f64::consts::FRAC_PI_2,
                "delta_max must lie in (0, pi/2)",
            ),
            (pos(self.v_max), "v_max must be > 0"),
            (pos(self.omega_max), "omega_max must be > 0"),
            (pos(self.kp), "kp must be > 0"),
            (pos(self.alpha), "alpha must be > 0"),
            (pos(self.safety_radius), "safety_radius must be > 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(KinematicsError::Params(msg.into()));
            }
        }
        for fp in [
            &self.tractor_footprint,
            &self.trailer_footprint,
            &self.local_footprint,
        ] {
            fp.validate()
                .map_err(|e| KinematicsError::Params(e.to_string()))?;
        }
        Ok(())
    }

    /// Largest trailer-path curvature reachable within the hitch limit.
    pub fn kappa_max(&self) -> f64 {
        self.delta_max.tan() / self.wheelbase
    }
}

/// Tractor-frame command `(v', omega')`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TractorCommand {
    pub v: f64,
    pub omega: f64,
}

impl TractorCommand {
    pub const fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrailerState {
    /// Frame at the center of the fixed-caster axle.
    pub trailer_pose: Pose2D,
    /// Tractor heading minus trailer heading.
    pub delta: f64,
    pub v_tractor: f64,
    pub omega_tractor: f64,
}

impl TrailerState {
    pub fn new(trailer_pose: Pose2D, delta: f64) -> Self {
        Self {
            trailer_pose,
            delta: normalize_angle(delta),
            v_tractor: 0.0,
            omega_tractor: 0.0,
        }
    }
}

pub fn derive_tractor_pose(s: &TrailerState, p: &VehicleParams) -> Pose2D {
    let pose = &s.trailer_pose;
    let (sin, cos) = pose.theta().sin_cos();
    Pose2D::new(
        pose.x() + p.wheelbase * cos,
        pose.y() + p.wheelbase * sin,
        pose.theta() + s.delta,
    )
}

pub fn tractor_position(s: &TrailerState, p: &VehicleParams) -> Point2 {
    s.trailer_pose.transform(p.wheelbase, 0.0)
}

/// Tractor position, tractor heading, trailer heading.
#[derive(Clone, Copy)]
struct Coupled {
    x: f64,
    y: f64,
    psi: f64,
    theta: f64,
}

impl Coupled {
    fn rate(&self, v: f64, omega: f64, wheelbase: f64) -> Coupled {
        Coupled {
            x: v * self.psi.cos(),
            y: v * self.psi.sin(),
            psi: omega,
            theta: v / wheelbase * (self.psi - self.theta).sin(),
        }
    }

    fn advance(&self, d: &Coupled, h: f64) -> Coupled {
        Coupled {
            x: self.x + h * d.x,
            y: self.y + h * d.y,
            psi: self.psi + h * d.psi,
            theta: self.theta + h * d.theta,
        }
    }
}

/// Advances the coupled system by `dt` with the explicit midpoint rule.
///
/// The tractor is integrated as a unicycle together with the trailer heading;
/// the trailer position and hitch angle are then recovered from the rigid
/// coupling so the redundant coordinates cannot drift apart.
pub fn step(
    s: &TrailerState,
    cmd: TractorCommand,
    dt: f64,
    p: &VehicleParams,
) -> Result<TrailerState, KinematicsError> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(KinematicsError::TimeStep(dt));
    }
    let l = p.wheelbase;
    let tractor = tractor_position(s, p);
    let theta = s.trailer_pose.theta();
    let y0 = Coupled {
        x: tractor.x,
        y: tractor.y,
        psi: theta + s.delta,
        theta,
    };
    let k1 = y0.rate(cmd.v, cmd.omega, l);
    let mid = y0.advance(&k1, 0.5 * dt);
    let k2 = mid.rate(cmd.v, cmd.omega, l);
    let y1 = y0.advance(&k2, dt);

    let (sin, cos) = y1.theta.sin_cos();
    Ok(TrailerState {
        trailer_pose: Pose2D::new(y1.x - l * cos, y1.y - l * sin, y1.theta),
        delta: normalize_angle(y1.psi - y1.theta),
        v_tractor: cmd.v,
        omega_tractor: cmd.omega,
    })
}
