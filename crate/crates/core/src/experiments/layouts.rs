//! Corridor test courses on a 0.05 m grid.
//!
//! Both courses share a square outer wall of thickness [`WALL`] around a
//! `length` x `length` interior whose lower-left corner is at `(WALL, WALL)`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::grid::{OccupancyGrid, Point2, Pose2D};

use super::ExperimentError;

pub const RESOLUTION: f64 = 0.05;
pub const WALL: f64 = 0.2;
pub const MIN_WIDTH: f64 = 1.0;
pub const MAX_WIDTH: f64 = 3.0;
/// Width of the uncritical legs of the single-corner course.
pub const WIDE_LEG: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct Course {
    pub grid: OccupancyGrid,
    pub waypoints: Vec<Pose2D>,
}

fn cells(m: f64) -> usize {
    (m / RESOLUTION).round() as usize
}

fn check_width(width: f64, length: f64) -> Result<(), ExperimentError> {
    if !(MIN_WIDTH..=MAX_WIDTH).contains(&width) {
        return Err(ExperimentError::Width(width));
    }
    if !(length.is_finite() && length >= 2.0 * MAX_WIDTH + 1.0) {
        return Err(ExperimentError::Scenario(format!(
            "corridor_length must be at least {} m",
            2.0 * MAX_WIDTH + 1.0
        )));
    }
    Ok(())
}

/// Outer ring wall plus a solid central block spanning `[x0, x1) x [y0, y1)` in meters.
fn ring(length: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> OccupancyGrid {
    let wall = cells(WALL);
    let n = cells(length) + 2 * wall;
    let (bx0, bx1, by0, by1) = (cells(x0), cells(x1), cells(y0), cells(y1));
    let mut occ = vec![false; n * n];
    for y in 0..n {
        for x in 0..n {
            let outer = x < wall || y < wall || x >= n - wall || y >= n - wall;
            let block = (bx0..bx1).contains(&x) && (by0..by1).contains(&y);
            occ[y * n + x] = outer || block;
        }
    }
    OccupancyGrid::from_cells(RESOLUTION, Point2::new(0.0, 0.0), n, n, occ)
        .expect("course dimensions are positive")
}

/// Square loop with all four corridors `width` wide. Waypoints P0..P3 sit
/// mid-corridor on the bottom, right, top and left sides, heading
/// counterclockwise.
pub fn make_loop_course(width: f64, length: f64) -> Result<Course, ExperimentError> {
    check_width(width, length)?;
    let (lo, hi) = (WALL, WALL + length);
    let grid = ring(length, lo + width, hi - width, lo + width, hi - width);
    let mid = lo + length / 2.0;
    let waypoints = vec![
        Pose2D::new(mid, lo + width / 2.0, 0.0),
        Pose2D::new(hi - width / 2.0, mid, FRAC_PI_2),
        Pose2D::new(mid, hi - width / 2.0, PI),
        Pose2D::new(lo + width / 2.0, mid, -FRAC_PI_2),
    ];
    Ok(Course { grid, waypoints })
}

/// Loop whose bottom and right corridors are `width` wide and whose top and
/// left corridors are [`WIDE_LEG`] wide, so only the bottom-right corner is
/// critical. P0 is mid-corridor on the bottom leg, P1 on the right leg.
pub fn make_single_corner(width: f64, length: f64) -> Result<Course, ExperimentError> {
    check_width(width, length)?;
    let (lo, hi) = (WALL, WALL + length);
    let grid = ring(length, lo + WIDE_LEG, hi - width, lo + width, hi - WIDE_LEG);
    let mid = lo + length / 2.0;
    let waypoints = vec![
        Pose2D::new(mid, lo + width / 2.0, 0.0),
        Pose2D::new(hi - width / 2.0, mid, FRAC_PI_2),
    ];
    Ok(Course { grid, waypoints })
}
