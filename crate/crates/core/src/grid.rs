//! Occupancy-grid world, footprints and collision queries.
//!
//! ## Coordinate frames
//!
//! - **Cell coordinates**: integer `(x, y)` indices, row 0 holds the minimum y.
//! - **World coordinates**: meters. The grid origin is the world position of the
//!   lower-left corner of cell `(0, 0)`. Cells are half-open: a point on a cell
//!   boundary belongs to the higher-index cell.
//!
//! A cell belongs to a footprint when its *center* lies inside the footprint shape.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hitch::normalize_angle;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("malformed map header: {0}")]
    Header(String),
    #[error("map body has {found} {what}, header declares {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("unknown glyph {glyph:?} at row {row}, column {col}")]
    UnknownGlyph { glyph: char, row: usize, col: usize },
    #[error("invalid grid geometry: {0}")]
    Geometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Planar pose. The heading is kept in `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2D {
    x: f64,
    y: f64,
    theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }

    #[inline]
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Point at `(forward, left)` in this pose's frame.
    pub fn transform(&self, forward: f64, left: f64) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(
            self.x + c * forward - s * left,
            self.y + s * forward + c * left,
        )
    }

    /// `p` expressed in this pose's frame.
    pub fn to_local(&self, p: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        Point2::new(c * dx + s * dy, -s * dx + c * dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellIndex {
    pub x: usize,
    pub y: usize,
}

impl CellIndex {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// Binary occupancy grid. Immutable once handed to the planner or simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: Point2,
    width: usize,
    height: usize,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    /// All-free grid.
    pub fn new(
        resolution: f64,
        origin: Point2,
        width: usize,
        height: usize,
    ) -> Result<Self, GridError> {
        Self::from_cells(
            resolution,
            origin,
            width,
            height,
            vec![false; width * height],
        )
    }

    /// `cells` is row-major with row 0 at the minimum y; `true` means occupied.
    pub fn from_cells(
        resolution: f64,
        origin: Point2,
        width: usize,
        height: usize,
        cells: Vec<bool>,
    ) -> Result<Self, GridError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(GridError::Geometry(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(GridError::Geometry("origin must be finite".into()));
        }
        if width == 0 || height == 0 {
            return Err(GridError::Geometry(format!(
                "grid must be at least 1x1, got {width}x{height}"
            )));
        }
        if cells.len() != width * height {
            return Err(GridError::DimensionMismatch {
                what: "cells",
                expected: width * height,
                found: cells.len(),
            });
        }
        Ok(Self {
            resolution,
            origin,
            width,
            height,
            cells,
        })
    }

    #[inline]
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    #[inline]
    pub fn origin(&self) -> Point2 {
        self.origin
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Extent of the grid in meters along x and y.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    #[inline]
    fn index(&self, cell: CellIndex) -> usize {
        cell.y * self.width + cell.x
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Panics if `cell` is out of bounds.
    #[inline]
    pub fn is_occupied(&self, cell: CellIndex) -> bool {
        assert!(
            cell.x < self.width && cell.y < self.height,
            "cell out of bounds"
        );
        self.cells[self.index(cell)]
    }

    /// Occupancy at signed coordinates; `None` outside the grid.
    #[inline]
    pub fn occupied_at(&self, x: i64, y: i64) -> Option<bool> {
        if self.in_bounds(x, y) {
            Some(self.cells[y as usize * self.width + x as usize])
        } else {
            None
        }
    }

    pub fn set_occupied(&mut self, cell: CellIndex, occupied: bool) {
        assert!(
            cell.x < self.width && cell.y < self.height,
            "cell out of bounds"
        );
        let idx = self.index(cell);
        self.cells[idx] = occupied;
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn cell_center(&self, cell: CellIndex) -> Point2 {
        Point2::new(
            self.origin.x + (cell.x as f64 + 0.5) * self.resolution,
            self.origin.y + (cell.y as f64 + 0.5) * self.resolution,
        )
    }

    /// Signed cell coordinates of `p`, without bounds checks.
    #[inline]
    pub fn world_to_cell_unchecked(&self, p: Point2) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.resolution).floor() as i64,
            ((p.y - self.origin.y) / self.resolution).floor() as i64,
        )
    }

    /// Cell containing `p`, or `None` when `p` lies outside the grid.
    pub fn world_to_cell(&self, p: Point2) -> Option<CellIndex> {
        let (x, y) = self.world_to_cell_unchecked(p);
        self.in_bounds(x, y)
            .then(|| CellIndex::new(x as usize, y as usize))
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = (CellIndex, bool)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, &occ)| (CellIndex::new(i % self.width, i / self.width), occ))
    }

    /// Distance from `p` to the nearest occupied cell square, searching only
    /// within `max_range`. Returns `f64::INFINITY` when nothing is in range.
    pub fn nearest_occupied_distance(&self, p: Point2, max_range: f64) -> f64 {
        let res = self.resolution;
        let (x0, y0) = self.world_to_cell_unchecked(Point2::new(p.x - max_range, p.y - max_range));
        let (x1, y1) = self.world_to_cell_unchecked(Point2::new(p.x + max_range, p.y + max_range));
        let x0 = x0.max(0);
        let y0 = y0.max(0);
        let x1 = x1.min(self.width as i64 - 1);
        let y1 = y1.min(self.height as i64 - 1);
        let mut best_sq = f64::INFINITY;
        for cy in y0..=y1 {
            let row = cy as usize * self.width;
            let lo_y = self.origin.y + cy as f64 * res;
            let dy = if p.y < lo_y {
                lo_y - p.y
            } else if p.y > lo_y + res {
                p.y - lo_y - res
            } else {
                0.0
            };
            let dy_sq = dy * dy;
            if dy_sq >= best_sq {
                continue;
            }
            for cx in x0..=x1 {
                if !self.cells[row + cx as usize] {
                    continue;
                }
                let lo_x = self.origin.x + cx as f64 * res;
                let dx = if p.x < lo_x {
                    lo_x - p.x
                } else if p.x > lo_x + res {
                    p.x - lo_x - res
                } else {
                    0.0
                };
                let d = dx * dx + dy_sq;
                if d < best_sq {
                    best_sq = d;
                }
            }
        }
        let d = best_sq.sqrt();
        if d <= max_range {
            d
        } else {
            f64::INFINITY
        }
    }
}

/// One circle of a [`Footprint::TwoCircles`] model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circle {
    /// Longitudinal offset from the base frame.
    pub offset_x: f64,
    pub radius: f64,
}

/// Vehicle outline in its base frame (x forward).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Footprint {
    /// Axis-aligned rectangle centered at `(offset_x, 0)`.
    Rectangle {
        length: f64,
        width: f64,
        offset_x: f64,
    },
    TwoCircles {
        circle_1: Circle,
        circle_2: Circle,
    },
}

impl Footprint {
    pub fn validate(&self) -> Result<(), GridError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        let valid = match *self {
            Footprint::Rectangle {
                length,
                width,
                offset_x,
            } => ok(length) && ok(width) && offset_x.is_finite(),
            Footprint::TwoCircles { circle_1, circle_2 } => {
                ok(circle_1.radius)
                    && ok(circle_2.radius)
                    && circle_1.offset_x.is_finite()
                    && circle_2.offset_x.is_finite()
            }
        };
        if valid {
            Ok(())
        } else {
            Err(GridError::Geometry(format!("invalid footprint {self:?}")))
        }
    }

    /// The same shape grown by `margin` on every side.
    pub fn inflated(&self, margin: f64) -> Footprint {
        match *self {
            Footprint::Rectangle {
                length,
                width,
                offset_x,
            } => Footprint::Rectangle {
                length: length + 2.0 * margin,
                width: width + 2.0 * margin,
                offset_x,
            },
            Footprint::TwoCircles { circle_1, circle_2 } => Footprint::TwoCircles {
                circle_1: Circle {
                    radius: circle_1.radius + margin,
                    ..circle_1
                },
                circle_2: Circle {
                    radius: circle_2.radius + margin,
                    ..circle_2
                },
            },
        }
    }

    /// Distance from the base frame origin to the farthest point of the shape.
    pub fn circumradius(&self) -> f64 {
        match *self {
            Footprint::Rectangle {
                length,
                width,
                offset_x,
            } => (offset_x.abs() + length / 2.0).hypot(width / 2.0),
            Footprint::TwoCircles { circle_1, circle_2 } => (circle_1.offset_x.abs()
                + circle_1.radius)
                .max(circle_2.offset_x.abs() + circle_2.radius),
        }
    }

    /// World-frame circle centers and radii for a two-circle model placed at `pose`.
    pub fn circles_at(&self, pose: &Pose2D) -> Vec<(Point2, f64)> {
        match *self {
            Footprint::Rectangle { .. } => Vec::new(),
            Footprint::TwoCircles { circle_1, circle_2 } => vec![
                (pose.transform(circle_1.offset_x, 0.0), circle_1.radius),
                (pose.transform(circle_2.offset_x, 0.0), circle_2.radius),
            ],
        }
    }

    /// Whether world point `p` lies inside the footprint placed at `pose`.
    pub fn contains(&self, pose: &Pose2D, p: Point2) -> bool {
        match *self {
            Footprint::Rectangle {
                length,
                width,
                offset_x,
            } => {
                let local = pose.to_local(p);
                (local.x - offset_x).abs() <= length / 2.0 && local.y.abs() <= width / 2.0
            }
            Footprint::TwoCircles { circle_1, circle_2 } => {
                let local = pose.to_local(p);
                [circle_1, circle_2].iter().any(|c| {
                    let dx = local.x - c.offset_x;
                    dx * dx + local.y * local.y <= c.radius * c.radius
                })
            }
        }
    }

    /// World-frame axis-aligned bounds `(min, max)` of the shape at `pose`.
    pub fn world_bounds(&self, pose: &Pose2D) -> (Point2, Point2) {
        match *self {
            Footprint::Rectangle {
                length,
                width,
                offset_x,
            } => {
                let (hl, hw) = (length / 2.0, width / 2.0);
                let corners = [
                    pose.transform(offset_x - hl, -hw),
                    pose.transform(offset_x + hl, -hw),
                    pose.transform(offset_x + hl, hw),
                    pose.transform(offset_x - hl, hw),
                ];
                let mut lo = corners[0];
                let mut hi = corners[0];
                for c in &corners[1..] {
                    lo.x = lo.x.min(c.x);
                    lo.y = lo.y.min(c.y);
                    hi.x = hi.x.max(c.x);
                    hi.y = hi.y.max(c.y);
                }
                (lo, hi)
            }
            Footprint::TwoCircles { .. } => {
                let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for (c, r) in self.circles_at(pose) {
                    lo.x = lo.x.min(c.x - r);
                    lo.y = lo.y.min(c.y - r);
                    hi.x = hi.x.max(c.x + r);
                    hi.y = hi.y.max(c.y + r);
                }
                (lo, hi)
            }
        }
    }
}

/// Cells (signed, possibly outside any grid) whose centers lie inside `fp` at
/// `pose`, for a lattice of the given resolution and origin. Row-major order.
pub fn footprint_cells_unbounded(
    resolution: f64,
    origin: Point2,
    pose: &Pose2D,
    fp: &Footprint,
) -> Vec<(i64, i64)> {
    let (lo, hi) = fp.world_bounds(pose);
    // A center at (i + 0.5) * res lies in [lo, hi] only for i in this range.
    let x0 = ((lo.x - origin.x) / resolution - 0.5).ceil() as i64;
    let x1 = ((hi.x - origin.x) / resolution - 0.5).floor() as i64;
    let y0 = ((lo.y - origin.y) / resolution - 0.5).ceil() as i64;
    let y1 = ((hi.y - origin.y) / resolution - 0.5).floor() as i64;
    let mut out = Vec::new();
    for cy in y0..=y1 {
        let py = origin.y + (cy as f64 + 0.5) * resolution;
        for cx in x0..=x1 {
            let px = origin.x + (cx as f64 + 0.5) * resolution;
            if fp.contains(pose, Point2::new(px, py)) {
                out.push((cx, cy));
            }
        }
    }
    out
}

/// In-bounds cells whose centers lie inside the footprint, sorted row-major.
pub fn footprint_cells(grid: &OccupancyGrid, pose: &Pose2D, fp: &Footprint) -> Vec<CellIndex> {
    footprint_cells_unbounded(grid.resolution, grid.origin, pose, fp)
        .into_iter()
        .filter(|&(x, y)| grid.in_bounds(x, y))
        .map(|(x, y)| CellIndex::new(x as usize, y as usize))
        .collect()
}

/// True iff no footprint cell is occupied. Cells outside the grid count as free.
pub fn collision_free(grid: &OccupancyGrid, pose: &Pose2D, fp: &Footprint) -> bool {
    footprint_cells_unbounded(grid.resolution, grid.origin, pose, fp)
        .into_iter()
        .all(|(x, y)| grid.occupied_at(x, y) != Some(true))
}

const MAP_MAGIC: &str = "gridmap v1";

/// Parses the `gridmap v1` text format.
pub fn load_grid(text: &str) -> Result<OccupancyGrid, GridError> {
    let mut lines = text.split('\n');
    match lines.next() {
        Some(MAP_MAGIC) => {}
        other => {
            return Err(GridError::Header(format!(
                "expected {MAP_MAGIC:?}, found {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let header = lines
        .next()
        .ok_or_else(|| GridError::Header("missing geometry line".into()))?;
    let tokens: Vec<&str> = header.split(' ').collect();
    if tokens.len() != 8
        || tokens[0] != "resolution"
        || tokens[2] != "origin"
        || tokens[5] != "size"
    {
        return Err(GridError::Header(format!(
            "expected `resolution <r> origin <x> <y> size <w> <h>`, found {header:?}"
        )));
    }
    let float = |s: &str| -> Result<f64, GridError> {
        s.parse::<f64>()
            .map_err(|_| GridError::Header(format!("bad number {s:?}")))
    };
    let int = |s: &str| -> Result<usize, GridError> {
        s.parse::<usize>()
            .map_err(|_| GridError::Header(format!("bad integer {s:?}")))
    };
    let resolution = float(tokens[1])?;
    let origin = Point2::new(float(tokens[3])?, float(tokens[4])?);
    let width = int(tokens[6])?;
    let height = int(tokens[7])?;

    let mut rows: Vec<&str> = lines.collect();
    // A terminating LF leaves one empty trailing element.
    if rows.last() == Some(&"") {
        rows.pop();
    }
    if rows.len() != height {
        return Err(GridError::DimensionMismatch {
            what: "rows",
            expected: height,
            found: rows.len(),
        });
    }
    let mut cells = Vec::with_capacity(width * height);
    for (row, line) in rows.iter().enumerate() {
        let n = line.chars().count();
        if n != width {
            return Err(GridError::DimensionMismatch {
                what: "columns",
                expected: width,
                found: n,
            });
        }
        for (col, glyph) in line.chars().enumerate() {
            match glyph {
                '#' => cells.push(true),
                '.' => cells.push(false),
                _ => return Err(GridError::UnknownGlyph { glyph, row, col }),
            }
        }
    }
    OccupancyGrid::from_cells(resolution, origin, width, height, cells)
}

/// Serializes to the `gridmap v1` text format (LF line endings).
pub fn save_grid(grid: &OccupancyGrid) -> String {
    let mut out = String::with_capacity((grid.width + 1) * grid.height + 64);
    let _ = writeln!(out, "{MAP_MAGIC}");
    let _ = writeln!(
        out,
        "resolution {} origin {} {} size {} {}",
        grid.resolution, grid.origin.x, grid.origin.y, grid.width, grid.height
    );
    for row in grid.cells.chunks(grid.width) {
        out.extend(row.iter().map(|&occ| if occ { '#' } else { '.' }));
        out.push('\n');
    }
    out
}
