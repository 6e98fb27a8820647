//! Local path tracking: pure pursuit at the trailer axle with a speed governor
//! for goal approach and obstacle proximity.

use serde::{Deserialize, Serialize};

use crate::grid::{OccupancyGrid, Pose2D};
use crate::hitch::{normalize_angle, VelocityCommand};
use crate::kinematics::{TrailerState, VehicleParams};
use crate::lattice::{GlobalPath, GoalTolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub lookahead: f64,
    pub v_cruise: f64,
    /// Distance to the path end below which speed ramps down.
    pub slow_radius: f64,
    /// Fraction of cruise speed kept at the end of the goal ramp.
    pub min_speed_fraction: f64,
    /// Clearance below which speed ramps down.
    pub obstacle_slow_band: f64,
    /// Fraction of speed kept inside the band while clearance is positive;
    /// speed drops to 0 only at contact.
    pub obstacle_min_fraction: f64,
    /// Half-size of the obstacle search window around each circle.
    pub local_window: f64,
    pub goal_tol: GoalTolerance,
    /// Seconds with obstacle-forced zero speed before reporting blocked.
    pub blocked_after: f64,
    /// Seconds without progress before reporting stuck.
    pub stuck_after: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lookahead: 0.8,
            v_cruise: 0.6,
            slow_radius: 0.7,
            min_speed_fraction: 0.25,
            obstacle_slow_band: 0.15,
            obstacle_min_fraction: 0.25,
            local_window: 2.0,
            goal_tol: GoalTolerance::default(),
            blocked_after: 5.0,
            stuck_after: 15.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self, p: &VehicleParams) -> Result<(), String> {
        if !(self.lookahead > 0.0) {
            return Err("lookahead must be > 0".into());
        }
        if !(self.v_cruise > 0.0 && self.v_cruise <= p.v_max) {
            return Err(format!("v_cruise must be in (0, v_max = {}]", p.v_max));
        }
        if !(self.slow_radius > 0.0) {
            return Err("slow_radius must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.min_speed_fraction) || self.min_speed_fraction == 0.0 {
            return Err("min_speed_fraction must be in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.obstacle_min_fraction) {
            return Err("obstacle_min_fraction must be in [0, 1]".into());
        }
        if !(self.obstacle_slow_band > 0.0 && self.local_window > 0.0) {
            return Err("obstacle_slow_band and local_window must be > 0".into());
        }
        if !(self.goal_tol.xy > 0.0 && self.goal_tol.theta > 0.0) {
            return Err("goal tolerances must be > 0".into());
        }
        if !(self.blocked_after > 0.0 && self.stuck_after > 0.0) {
            return Err("blocked_after and stuck_after must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerState {
    Tracking,
    GoalReached,
    Blocked,
    Stuck,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerStatus {
    pub state: TrackerState,
    pub progress_index: usize,
    pub time_without_progress: f64,
    /// Obstacle speed factor of the last command, in `[0, 1]`.
    pub obstacle_factor: f64,
}

/// Minimum drop in goal distance (m) or heading error (rad) counted as progress.
const PROGRESS_EPS: f64 = 0.02;

/// Tracking session for one path. Progress never moves backwards.
#[derive(Debug, Clone)]
pub struct PathTracker {
    cfg: TrackerConfig,
    progress_index: usize,
    best_goal_dist: f64,
    best_heading_err: f64,
    since_progress: f64,
    blocked_for: f64,
}

impl PathTracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self {
            cfg,
            progress_index: 0,
            best_goal_dist: f64::INFINITY,
            best_heading_err: f64::INFINITY,
            since_progress: 0.0,
            blocked_for: 0.0,
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Restarts progress bookkeeping for a new path.
    pub fn reset(&mut self) {
        *self = Self::new(self.cfg);
    }

    /// One control period of `dt` seconds. `path` must be non-empty.
    pub fn track(
        &mut self,
        path: &GlobalPath,
        s: &TrailerState,
        grid: &OccupancyGrid,
        p: &VehicleParams,
        dt: f64,
    ) -> (VelocityCommand, TrackerStatus) {
        let cfg = self.cfg;
        let pose = s.trailer_pose;
        let pos = pose.position();
        let end = path.end();
        let goal_dist = pos.distance(&end.position());
        let heading_err = normalize_angle(end.theta() - pose.theta());

        // Closest pose, searched forward from the current progress.
        let poses = &path.poses;
        let mut closest = self.progress_index;
        let mut best = pos.distance(&poses[closest].position());
        let mut travelled = 0.0;
        for k in self.progress_index + 1..poses.len() {
            travelled += poses[k - 1].position().distance(&poses[k].position());
            let d = pos.distance(&poses[k].position());
            if d < best {
                best = d;
                closest = k;
            }
            if travelled > best + 2.0 * cfg.lookahead {
                break;
            }
        }

        let mut progressed = closest > self.progress_index;
        self.progress_index = closest;
        if goal_dist < self.best_goal_dist - PROGRESS_EPS {
            self.best_goal_dist = goal_dist;
            progressed = true;
        }
        if goal_dist <= cfg.goal_tol.xy && heading_err.abs() < self.best_heading_err - PROGRESS_EPS
        {
            self.best_heading_err = heading_err.abs();
            progressed = true;
        }
        if progressed {
            self.since_progress = 0.0;
        } else {
            self.since_progress += dt;
        }

        let obstacle_factor = self.obstacle_factor(&pose, grid, p);
        let status = |this: &Self, state| TrackerStatus {
            state,
            progress_index: this.progress_index,
            time_without_progress: this.since_progress,
            obstacle_factor,
        };
        let kmax = p.kappa_max();

        if goal_dist <= cfg.goal_tol.xy && heading_err.abs() <= cfg.goal_tol.theta {
            self.blocked_for = 0.0;
            return (
                VelocityCommand::default(),
                status(self, TrackerState::GoalReached),
            );
        }

        let (v_nominal, kappa) = if goal_dist <= cfg.goal_tol.xy && self.at_path_end(&pose, path) {
            // Position is fine but heading is not: creep along the tightest arc.
            let v = cfg.v_cruise * cfg.min_speed_fraction;
            (v, kmax.copysign(heading_err))
        } else {
            let target = self.lookahead_point(path, closest, &pose);
            let local = pose.to_local(target);
            let dist = local.x.hypot(local.y);
            let kappa = if dist > 1e-9 {
                2.0 * (local.y / dist) / dist
            } else {
                0.0
            };
            let ramp = (goal_dist / cfg.slow_radius).clamp(cfg.min_speed_fraction, 1.0);
            (cfg.v_cruise * ramp, kappa.clamp(-kmax, kmax))
        };

        let v = v_nominal * obstacle_factor;
        if v <= 0.0 {
            self.blocked_for += dt;
        } else {
            self.blocked_for = 0.0;
        }
        let state = if self.blocked_for > cfg.blocked_after {
            TrackerState::Blocked
        } else if self.since_progress > cfg.stuck_after {
            TrackerState::Stuck
        } else {
            TrackerState::Tracking
        };
        (VelocityCommand::new(v, v * kappa), status(self, state))
    }

    /// True once the trailer has reached the final path pose or passed it.
    fn at_path_end(&self, pose: &Pose2D, path: &GlobalPath) -> bool {
        let end = path.end();
        let ahead = end.to_local(pose.position()).x;
        self.progress_index + 1 >= path.poses.len() || ahead >= -0.05
    }

    /// First pose at least `lookahead` away, past `from`. Beyond the path end
    /// the final pose is extended straight along its heading.
    fn lookahead_point(
        &self,
        path: &GlobalPath,
        from: usize,
        pose: &Pose2D,
    ) -> crate::grid::Point2 {
        let pos = pose.position();
        let la = self.cfg.lookahead;
        for q in &path.poses[from..] {
            if q.position().distance(&pos) >= la {
                return q.position();
            }
        }
        let end = path.end();
        // Solve |end + t*dir - pos| = la for the forward root.
        let local = end.to_local(pos);
        let disc = la * la - local.y * local.y;
        let t = if disc > 0.0 {
            local.x + disc.sqrt()
        } else {
            local.x.max(0.0)
        };
        end.transform(t.max(0.0), 0.0)
    }

    fn obstacle_factor(&self, pose: &Pose2D, grid: &OccupancyGrid, p: &VehicleParams) -> f64 {
        let band = self.cfg.obstacle_slow_band;
        // Nothing beyond the band changes the factor.
        let clearance = clearance(grid, pose, p, self.cfg.local_window.min(band));
        if clearance <= 0.0 {
            return 0.0;
        }
        (clearance / band).clamp(self.cfg.obstacle_min_fraction, 1.0)
    }
}

/// Smallest gap between the local two-circle footprint at the trailer pose and
/// an occupied cell, searched within `window` beyond each circle.
pub fn clearance(grid: &OccupancyGrid, pose: &Pose2D, p: &VehicleParams, window: f64) -> f64 {
    p.local_footprint
        .circles_at(pose)
        .into_iter()
        .map(|(c, r)| grid.nearest_occupied_distance(c, r + window) - r)
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CellIndex, Point2};

    fn straight_path(len: f64) -> GlobalPath {
        let n = (len / 0.05).round() as usize;
        GlobalPath {
            poses: (0..=n)
                .map(|k| Pose2D::new(1.0 + k as f64 * 0.05, 5.0, 0.0))
                .collect(),
            total_cost: len,
            length: len,
            primitive_ids: Vec::new(),
        }
    }

    fn open_grid() -> OccupancyGrid {
        OccupancyGrid::new(0.05, Point2::new(0.0, 0.0), 200, 200).unwrap()
    }

    #[test]
    fn aligned_on_straight_path() {
        let p = VehicleParams::default();
        let mut t = PathTracker::new(TrackerConfig::default());
        let s = TrailerState::new(Pose2D::new(1.0, 5.0, 0.0), 0.0);
        let (cmd, st) = t.track(&straight_path(5.0), &s, &open_grid(), &p, 0.02);
        assert_eq!(cmd, VelocityCommand::new(0.6, 0.0));
        assert_eq!(st.state, TrackerState::Tracking);
    }

    #[test]
    fn quarter_bearing_curvature() {
        let p = VehicleParams::default();
        let cfg = TrackerConfig {
            lookahead: 1.0,
            ..TrackerConfig::default()
        };
        let mut t = PathTracker::new(cfg);
        // Heading south while the path runs east: the lookahead point sits 90 degrees left.
        let s = TrailerState::new(Pose2D::new(1.0, 5.0, -std::f64::consts::FRAC_PI_2), 0.0);
        let (cmd, _) = t.track(&straight_path(5.0), &s, &open_grid(), &p, 0.02);
        let kappa = cmd.omega / cmd.v;
        assert!((kappa - 2.0f64.min(p.kappa_max())).abs() < 1e-9, "{kappa}");
        let tight = TrackerConfig {
            lookahead: 0.5,
            ..TrackerConfig::default()
        };
        let (cmd, _) =
            PathTracker::new(tight).track(&straight_path(5.0), &s, &open_grid(), &p, 0.02);
        assert!((cmd.omega / cmd.v - p.kappa_max()).abs() < 1e-9);
    }

    #[test]
    fn goal_reached_and_ramp() {
        let p = VehicleParams::default();
        let mut t = PathTracker::new(TrackerConfig::default());
        let path = straight_path(5.0);
        let s = TrailerState::new(Pose2D::new(5.8, 5.0, 0.0), 0.0);
        let (cmd, st) = t.track(&path, &s, &open_grid(), &p, 0.02);
        assert_eq!(st.state, TrackerState::GoalReached);
        assert_eq!(cmd, VelocityCommand::default());
        let s = TrailerState::new(Pose2D::new(5.4, 5.0, 0.0), 0.0);
        let (cmd, _) =
            PathTracker::new(TrackerConfig::default()).track(&path, &s, &open_grid(), &p, 0.02);
        assert!((cmd.v - 0.6 * 0.6 / 0.7).abs() < 1e-9);
    }

    #[test]
    fn heading_creep_turns_toward_goal_heading() {
        let p = VehicleParams::default();
        let mut t = PathTracker::new(TrackerConfig::default());
        let s = TrailerState::new(Pose2D::new(6.0, 5.0, -0.4), 0.0);
        let (cmd, st) = t.track(&straight_path(5.0), &s, &open_grid(), &p, 0.02);
        assert_eq!(st.state, TrackerState::Tracking);
        assert!(cmd.v > 0.0 && cmd.omega > 0.0);
        assert!((cmd.omega / cmd.v - p.kappa_max()).abs() < 1e-9);
    }

    #[test]
    fn wall_at_footprint_blocks() {
        let p = VehicleParams::default();
        let mut grid = open_grid();
        // The trailer axle circle reaches down to y = 4.65, inside row 93.
        for x in 0..200 {
            grid.set_occupied(CellIndex::new(x, 93), true);
        }
        let s = TrailerState::new(Pose2D::new(1.0, 5.0, 0.0), 0.0);
        let mut t = PathTracker::new(TrackerConfig::default());
        let path = straight_path(5.0);
        let mut last = None;
        for _ in 0..300 {
            let (cmd, st) = t.track(&path, &s, &grid, &p, 0.02);
            assert_eq!(cmd.v, 0.0);
            last = Some(st);
        }
        assert_eq!(last.unwrap().state, TrackerState::Blocked);
    }

    #[test]
    fn no_progress_becomes_stuck() {
        let p = VehicleParams::default();
        let cfg = TrackerConfig {
            stuck_after: 1.0,
            ..TrackerConfig::default()
        };
        let mut t = PathTracker::new(cfg);
        let s = TrailerState::new(Pose2D::new(3.0, 6.0, 0.0), 0.0);
        let mut state = TrackerState::Tracking;
        for _ in 0..100 {
            state = t
                .track(&straight_path(5.0), &s, &open_grid(), &p, 0.02)
                .1
                .state;
        }
        assert_eq!(state, TrackerState::Stuck);
    }
}
