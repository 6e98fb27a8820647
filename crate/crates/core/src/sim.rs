//! Deterministic closed-loop simulation: plan, track, hitch control and
//! kinematic integration, with goal checks and the tractor safety zone.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellIndex, OccupancyGrid, Point2, Pose2D};
use crate::hitch::{normalize_angle, HitchController};
use crate::kinematics::{derive_tractor_pose, step, TractorCommand, TrailerState, VehicleParams};
use crate::lattice::{
    generate_primitives, remaining_path_blocked, GlobalPath, GoalTolerance, LatticeConfig,
    PlanError, Planner, PrimitiveSet,
};
use crate::tracker::{PathTracker, TrackerConfig, TrackerState};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Circle obstacle moving at constant velocity and bouncing off static walls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicObstacle {
    pub center: (f64, f64),
    pub radius: f64,
    #[serde(default)]
    pub velocity: (f64, f64),
    /// Simulation time at which the obstacle appears.
    #[serde(default)]
    pub appear_at: f64,
}

impl DynamicObstacle {
    fn center(&self) -> Point2 {
        Point2::new(self.center.0, self.center.1)
    }

    fn active(&self, t: f64) -> bool {
        t >= self.appear_at
    }
}

#[derive(Debug, Clone)]
pub struct SimWorld {
    pub static_grid: Arc<OccupancyGrid>,
    pub obstacles: Vec<DynamicObstacle>,
    pub time: f64,
    pub dt: f64,
    pub rng_seed: u64,
    steps: u64,
}

impl SimWorld {
    pub fn new(static_grid: Arc<OccupancyGrid>, dt: f64, rng_seed: u64) -> Self {
        Self {
            static_grid,
            obstacles: Vec::new(),
            time: 0.0,
            dt,
            rng_seed,
            steps: 0,
        }
    }

    pub fn with_obstacles(mut self, obstacles: Vec<DynamicObstacle>) -> Self {
        self.obstacles = obstacles;
        self
    }

    fn any_active(&self) -> bool {
        self.obstacles.iter().any(|o| o.active(self.time))
    }

    /// Static grid with the active obstacles rasterized by cell center.
    pub fn current_grid(&self) -> OccupancyGrid {
        let mut g = (*self.static_grid).clone();
        for o in self.obstacles.iter().filter(|o| o.active(self.time)) {
            let c = o.center();
            let lo = g.world_to_cell_unchecked(Point2::new(c.x - o.radius, c.y - o.radius));
            let hi = g.world_to_cell_unchecked(Point2::new(c.x + o.radius, c.y + o.radius));
            for y in lo.1.max(0)..=hi.1.min(g.height() as i64 - 1) {
                for x in lo.0.max(0)..=hi.0.min(g.width() as i64 - 1) {
                    let cell = CellIndex::new(x as usize, y as usize);
                    if g.cell_center(cell).distance(&c) <= o.radius {
                        g.set_occupied(cell, true);
                    }
                }
            }
        }
        g
    }

    /// Distance from `p` to the nearest active obstacle boundary.
    fn obstacle_distance(&self, p: Point2) -> f64 {
        self.obstacles
            .iter()
            .filter(|o| o.active(self.time))
            .map(|o| (o.center().distance(&p) - o.radius).max(0.0))
            .fold(f64::INFINITY, f64::min)
    }

    fn advance(&mut self) {
        let dt = self.dt;
        let grid = Arc::clone(&self.static_grid);
        let (w, h) = grid.extent();
        let origin = grid.origin();
        let blocked = |c: Point2, r: f64| {
            c.x - r < origin.x
                || c.y - r < origin.y
                || c.x + r > origin.x + w
                || c.y + r > origin.y + h
                || grid.nearest_occupied_distance(c, r) < r
        };
        for o in self.obstacles.iter_mut().filter(|o| o.active(self.time)) {
            let (vx, vy) = o.velocity;
            if vx == 0.0 && vy == 0.0 {
                continue;
            }
            let c = o.center();
            for (fx, fy) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
                let next = Point2::new(c.x + fx * vx * dt, c.y + fy * vy * dt);
                if !blocked(next, o.radius) {
                    o.center = (next.x, next.y);
                    o.velocity = (fx * vx, fy * vy);
                    break;
                }
            }
        }
        self.steps += 1;
        self.time = self.steps as f64 * dt;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    /// Per-target time budget, seconds.
    pub timeout: f64,
    pub max_replans: usize,
    /// Success region around each target.
    pub goal_tol: GoalTolerance,
    /// Goal region handed to the global planner; tighter than `goal_tol` so
    /// the path ends well inside the success region.
    pub plan_tol: GoalTolerance,
    /// Search radius for a collision-free lattice start near the vehicle.
    pub start_snap_radius: f64,
    /// Cost of a lattice start's offset from the vehicle, relative to path cost.
    pub start_offset_scale: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: crate::kinematics::DEFAULT_DT,
            timeout: 120.0,
            max_replans: 3,
            goal_tol: GoalTolerance::default(),
            plan_tol: GoalTolerance {
                xy: 0.2,
                theta: 0.2,
            },
            start_snap_radius: 0.3,
            start_offset_scale: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    SafetyZone,
    TrackerStuck,
    Timeout,
    /// The global planner found no path, even after replanning.
    NoPath,
}

impl AbortReason {
    pub const ALL: [AbortReason; 4] = [
        AbortReason::SafetyZone,
        AbortReason::TrackerStuck,
        AbortReason::Timeout,
        AbortReason::NoPath,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AbortReason::SafetyZone => "safety_zone",
            AbortReason::TrackerStuck => "tracker_stuck",
            AbortReason::Timeout => "timeout",
            AbortReason::NoPath => "no_path",
        }
    }
}

/// One trajectory sample: state at `t` and the command applied from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: TrailerState,
    pub tractor: Point2,
    pub cmd: TractorCommand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetResult {
    pub target: Pose2D,
    pub reached: bool,
    pub duration: f64,
    pub abort_reason: Option<AbortReason>,
    pub replans: usize,
    pub trajectory: Vec<Sample>,
}

pub const TRAJECTORY_HEADER: &str =
    "t,x_trailer,y_trailer,theta,delta,x_tractor,y_tractor,v_cmd,omega_cmd";

/// Trajectory as CSV; floats use the shortest round-trip representation.
pub fn trajectory_csv(samples: &[Sample]) -> String {
    let mut out = String::with_capacity(samples.len() * 96);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for s in samples {
        let p = s.state.trailer_pose;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.t,
            p.x(),
            p.y(),
            p.theta(),
            s.state.delta,
            s.tractor.x,
            s.tractor.y,
            s.cmd.v,
            s.cmd.omega
        );
    }
    out
}

/// Whether `pose` is within `tol` of `target`.
pub fn within(pose: &Pose2D, target: &Pose2D, tol: &GoalTolerance) -> bool {
    pose.position().distance(&target.position()) <= tol.xy
        && normalize_angle(pose.theta() - target.theta()).abs() <= tol.theta
}

/// Closed-loop simulator. The planner for the static grid is built once and
/// may be shared between simulators over the same map.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub world: SimWorld,
    params: VehicleParams,
    tracker_cfg: TrackerConfig,
    cfg: SimConfig,
    planner: Arc<Planner>,
}

impl Simulator {
    pub fn new(
        world: SimWorld,
        params: VehicleParams,
        lattice: &LatticeConfig,
        tracker_cfg: TrackerConfig,
        cfg: SimConfig,
    ) -> Result<Self, SimError> {
        let set = Arc::new(generate_primitives(lattice)?);
        let planner = Arc::new(Planner::new(
            &world.static_grid,
            &params.trailer_footprint,
            set,
        )?);
        Self::with_planner(world, params, planner, tracker_cfg, cfg)
    }

    pub fn with_planner(
        world: SimWorld,
        params: VehicleParams,
        planner: Arc<Planner>,
        tracker_cfg: TrackerConfig,
        cfg: SimConfig,
    ) -> Result<Self, SimError> {
        params
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        tracker_cfg.validate(&params).map_err(SimError::Config)?;
        if !(cfg.dt > 0.0 && cfg.dt <= 0.1) {
            return Err(SimError::Config(format!("dt {} outside (0, 0.1]", cfg.dt)));
        }
        if !(cfg.timeout > 0.0) {
            return Err(SimError::Config("timeout must be > 0".into()));
        }
        let mut world = world;
        world.dt = cfg.dt;
        Ok(Self {
            world,
            params,
            tracker_cfg,
            cfg,
            planner,
        })
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn planner(&self) -> &Arc<Planner> {
        &self.planner
    }

    fn plan(
        &self,
        s: &TrailerState,
        target: &Pose2D,
        grid: Option<&OccupancyGrid>,
    ) -> Option<GlobalPath> {
        let dynamic;
        let planner: &Planner = match grid {
            Some(g) => {
                dynamic = Planner::new(
                    g,
                    &self.params.trailer_footprint,
                    Arc::new(PrimitiveSet::clone(self.planner.primitives())),
                )
                .ok()?;
                &dynamic
            }
            None => &self.planner,
        };
        planner
            .plan_near(
                &s.trailer_pose,
                self.cfg.start_snap_radius,
                self.cfg.start_offset_scale,
                target,
                &self.cfg.plan_tol,
            )
            .ok()
            .flatten()
    }

    /// Tractor safety zone violated by a static wall or an active obstacle.
    fn safety_violated(&self, s: &TrailerState) -> bool {
        let c = derive_tractor_pose(s, &self.params).position();
        let r = self.params.safety_radius;
        self.world.static_grid.nearest_occupied_distance(c, r) < r
            || self.world.obstacle_distance(c) < r
    }

    /// Drives toward `target` until success, abort or timeout. The final state
    /// is returned whatever the outcome.
    pub fn run_to_target(
        &mut self,
        s0: TrailerState,
        target: Pose2D,
    ) -> (TargetResult, TrailerState) {
        let dt = self.cfg.dt;
        let t0 = self.world.time;
        let mut s = s0;
        let mut trajectory = Vec::new();
        let mut replans = 0;
        let mut tracker = PathTracker::new(TrackerConfig {
            goal_tol: GoalTolerance {
                xy: self.cfg.plan_tol.xy.min(self.tracker_cfg.goal_tol.xy),
                theta: self.tracker_cfg.goal_tol.theta,
            },
            ..self.tracker_cfg
        });
        let mut controller = HitchController::new();
        let dynamic_grid = |w: &SimWorld| w.any_active().then(|| w.current_grid());
        let mut path = self.plan(&s, &target, dynamic_grid(&self.world).as_ref());

        let outcome = loop {
            let elapsed = self.world.time - t0;
            let sample = |cmd| Sample {
                t: self.world.time,
                state: s,
                tractor: derive_tractor_pose(&s, &self.params).position(),
                cmd,
            };
            if within(&s.trailer_pose, &target, &self.cfg.goal_tol) {
                trajectory.push(sample(TractorCommand::default()));
                break None;
            }
            if self.safety_violated(&s) {
                trajectory.push(sample(TractorCommand::default()));
                break Some(AbortReason::SafetyZone);
            }
            if elapsed >= self.cfg.timeout - 1e-9 {
                trajectory.push(sample(TractorCommand::default()));
                break Some(AbortReason::Timeout);
            }
            let grid_now = dynamic_grid(&self.world);
            let Some(current) = path.as_ref() else {
                trajectory.push(sample(TractorCommand::default()));
                break Some(AbortReason::NoPath);
            };
            let grid_ref = grid_now.as_ref().unwrap_or(&self.world.static_grid);
            let (cmd, status) = tracker.track(current, &s, grid_ref, &self.params, dt);
            let mut replan = status.state == TrackerState::Blocked;
            if let Some(g) = grid_now.as_ref() {
                replan |= remaining_path_blocked(
                    current,
                    status.progress_index,
                    g,
                    &self.params.trailer_footprint,
                );
            }
            if status.state == TrackerState::Stuck {
                trajectory.push(sample(TractorCommand::default()));
                break Some(AbortReason::TrackerStuck);
            }
            if replan && replans < self.cfg.max_replans {
                replans += 1;
                path = self.plan(&s, &target, grid_now.as_ref());
                tracker.reset();
                continue;
            }
            let u = controller.command(cmd, &s, &self.params);
            trajectory.push(sample(u));
            s = step(&s, u, dt, &self.params).expect("validated time step");
            self.world.advance();
        };
        let result = TargetResult {
            target,
            reached: outcome.is_none(),
            duration: self.world.time - t0,
            abort_reason: outcome,
            replans,
            trajectory,
        };
        (result, s)
    }

    /// Visits `targets` in order, threading the state. A safety-zone abort
    /// ends the sequence; other failures move on to the next target.
    pub fn run_sequence(&mut self, s0: TrailerState, targets: &[Pose2D]) -> Vec<TargetResult> {
        let mut s = s0;
        let mut out = Vec::with_capacity(targets.len());
        for &t in targets {
            let (r, next) = self.run_to_target(s, t);
            s = next;
            let abort = r.abort_reason == Some(AbortReason::SafetyZone);
            out.push(r);
            if abort {
                break;
            }
        }
        out
    }

    /// Simulated sensor returns around the tractor: boundary samples of active
    /// obstacles with a seeded phase, plus centers of occupied static cells.
    pub fn sense_points(&self, s: &TrailerState, radius: f64) -> Vec<Point2> {
        sense_points(&self.world, s, &self.params, radius)
    }
}

/// Boundary samples per obstacle in [`sense_points`].
pub const SENSE_SAMPLES: usize = 16;

pub fn sense_points(
    world: &SimWorld,
    s: &TrailerState,
    p: &VehicleParams,
    radius: f64,
) -> Vec<Point2> {
    let mut out = Vec::new();
    if radius <= 0.0 {
        return out;
    }
    let c = derive_tractor_pose(s, p).position();
    let mut rng = ChaCha8Rng::seed_from_u64(world.rng_seed ^ world.steps.rotate_left(32));
    for o in world.obstacles.iter().filter(|o| o.active(world.time)) {
        if o.center().distance(&c) - o.radius > radius {
            continue;
        }
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        for k in 0..SENSE_SAMPLES {
            let a = phase + k as f64 * std::f64::consts::TAU / SENSE_SAMPLES as f64;
            out.push(Point2::new(
                o.center.0 + o.radius * a.cos(),
                o.center.1 + o.radius * a.sin(),
            ));
        }
    }
    let g = &world.static_grid;
    let lo = g.world_to_cell_unchecked(Point2::new(c.x - radius, c.y - radius));
    let hi = g.world_to_cell_unchecked(Point2::new(c.x + radius, c.y + radius));
    for y in lo.1.max(0)..=hi.1.min(g.height() as i64 - 1) {
        for x in lo.0.max(0)..=hi.0.min(g.width() as i64 - 1) {
            let cell = CellIndex::new(x as usize, y as usize);
            let center = g.cell_center(cell);
            if g.is_occupied(cell) && center.distance(&c) <= radius {
                out.push(center);
            }
        }
    }
    out
}
