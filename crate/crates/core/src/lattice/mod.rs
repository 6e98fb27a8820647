//! Global planning over a state lattice of curvature-bounded motion primitives.
//!
//! Lattice states are `(cell_x, cell_y, heading_index)` for the trailer-axle
//! frame. Heading indices map to the directions of small integer vectors so
//! that straight primitives along every heading end exactly on lattice points;
//! turning primitives are fitted as a straight segment plus one constant-curvature
//! arc ending exactly on a lattice pose.

mod primitives;
mod search;

pub use primitives::{
    generate_primitives, heading_directions, read_primset, write_primset, LatticeDelta,
    MotionPrimitive, PrimitiveSet, Shape,
};
pub use search::{plan, GlobalPath, Planner};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{collision_free, Footprint, OccupancyGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid lattice configuration: {0}")]
    Config(String),
    #[error("start pose is in collision or outside the lattice")]
    InvalidStart,
    #[error("goal pose lies outside the grid")]
    GoalOutOfBounds,
    #[error("malformed primitive file: {0}")]
    Primset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    /// Per meter of travel.
    pub length: f64,
    /// Per radian of heading change.
    pub turning: f64,
    /// Multiplier applied to reverse primitives.
    pub reverse: f64,
    /// Extra cost fraction for primitives that pass within the clearance
    /// margin of an obstacle.
    pub proximity: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            length: 1.0,
            turning: 0.1,
            reverse: 5.0,
            proximity: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub xy_resolution: f64,
    pub num_headings: usize,
    pub kappa_max: f64,
    pub primitive_lengths: Vec<f64>,
    pub allow_reverse: bool,
    pub cost_weights: CostWeights,
    /// Inflation applied to the planning footprint.
    pub footprint_margin: f64,
    /// Further inflation that marks a primitive as close to obstacles.
    pub clearance_margin: f64,
    /// Expansion budget; the search reports no path once it is spent.
    pub max_expansions: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            xy_resolution: 0.1,
            num_headings: 16,
            kappa_max: 1.2f64.tan(),
            primitive_lengths: vec![0.2, 0.6],
            allow_reverse: false,
            cost_weights: CostWeights::default(),
            footprint_margin: 0.05,
            clearance_margin: 0.3,
            max_expansions: 2_000_000,
        }
    }
}

impl LatticeConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        let err = |m: &str| Err(PlanError::Config(m.into()));
        if !(self.xy_resolution.is_finite() && self.xy_resolution > 0.0) {
            return err("xy_resolution must be > 0");
        }
        if self.num_headings < 8 || !self.num_headings.is_multiple_of(4) {
            return err("num_headings must be >= 8 and divisible by 4");
        }
        if !(self.kappa_max.is_finite() && self.kappa_max > 0.0) {
            return err("kappa_max must be > 0");
        }
        if self.primitive_lengths.is_empty()
            || self
                .primitive_lengths
                .iter()
                .any(|l| !(l.is_finite() && *l > 0.0))
        {
            return err("primitive_lengths must be non-empty and positive");
        }
        let w = &self.cost_weights;
        if !(w.length > 0.0 && w.turning >= 0.0 && w.reverse >= 1.0 && w.proximity >= 0.0) {
            return err("cost weights need length > 0, turning >= 0, reverse >= 1, proximity >= 0");
        }
        if !(self.footprint_margin >= 0.0 && self.clearance_margin >= 0.0) {
            return err("footprint_margin and clearance_margin must be >= 0");
        }
        Ok(())
    }

    /// Angular width of one heading bin.
    pub fn bin_angle(&self) -> f64 {
        std::f64::consts::TAU / self.num_headings as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalTolerance {
    pub xy: f64,
    pub theta: f64,
}

impl Default for GoalTolerance {
    fn default() -> Self {
        Self {
            xy: 0.5,
            theta: 0.2,
        }
    }
}

/// True iff any path pose from `from_index` onward collides with `grid`.
pub fn remaining_path_blocked(
    path: &GlobalPath,
    from_index: usize,
    grid: &OccupancyGrid,
    fp: &Footprint,
) -> bool {
    path.poses
        .iter()
        .skip(from_index)
        .any(|pose| !collision_free(grid, pose, fp))
}

/// True iff any pose of `path` collides with the current `grid`.
pub fn replan_needed(path: &GlobalPath, grid: &OccupancyGrid, fp: &Footprint) -> bool {
    remaining_path_blocked(path, 0, grid, fp)
}
