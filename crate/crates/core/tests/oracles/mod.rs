//! Brute-force reference implementations for the integration tests.
//!
//! Nothing here calls into the library's algorithms. The library types are
//! used only as plain data (grid cells, footprint dimensions, primitive
//! samples), and every computation is redone from first principles, slowly.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, TAU};

use trailernav_core::cover::RectCover;
use trailernav_core::grid::{CellIndex, Footprint, OccupancyGrid, Pose2D};
use trailernav_core::lattice::PrimitiveSet;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub case_id: String,
    pub expected: f64,
    pub actual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn numeric(case_id: impl Into<String>, expected: f64, actual: f64, tolerance: f64) -> Self {
        let pass = (expected - actual).abs() <= tolerance
            || (expected.is_infinite() && expected == actual);
        Self {
            case_id: case_id.into(),
            expected,
            actual,
            tolerance,
            pass,
        }
    }

    /// Discrete check: `actual` counts mismatches, which must be zero.
    pub fn discrete(case_id: impl Into<String>, mismatches: usize) -> Self {
        Self {
            case_id: case_id.into(),
            expected: 0.0,
            actual: mismatches as f64,
            tolerance: 0.0,
            pass: mismatches == 0,
        }
    }
}

fn wrap(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

/// Shape of a footprint as plain numbers, grown by `margin`.
#[derive(Debug, Clone, Copy)]
pub enum Shape {
    /// Center offset, half length, half width.
    Rect(f64, f64, f64),
    /// Two (offset, radius) discs.
    Discs([(f64, f64); 2]),
}

impl Shape {
    pub fn of(fp: &Footprint, margin: f64) -> Self {
        match *fp {
            Footprint::Rectangle {
                length,
                width,
                offset_x,
            } => Shape::Rect(offset_x, length / 2.0 + margin, width / 2.0 + margin),
            Footprint::TwoCircles { circle_1, circle_2 } => Shape::Discs([
                (circle_1.offset_x, circle_1.radius + margin),
                (circle_2.offset_x, circle_2.radius + margin),
            ]),
        }
    }

    /// Point `(px, py)` inside the shape placed at `(x, y, th)`.
    pub fn contains(&self, x: f64, y: f64, th: f64, px: f64, py: f64) -> bool {
        let (s, c) = th.sin_cos();
        let (dx, dy) = (px - x, py - y);
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        match *self {
            Shape::Rect(off, hl, hw) => (lx - off).abs() <= hl && ly.abs() <= hw,
            Shape::Discs(d) => d
                .iter()
                .any(|&(off, r)| (lx - off) * (lx - off) + ly * ly <= r * r),
        }
    }

    pub fn reach(&self) -> f64 {
        match *self {
            Shape::Rect(off, hl, hw) => (off.abs() + hl).hypot(hw),
            Shape::Discs(d) => d.iter().map(|&(o, r)| o.abs() + r).fold(0.0, f64::max),
        }
    }

    /// Sample points covering the shape densely, in its own frame.
    fn samples(&self, spacing: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let span = |lo: f64, hi: f64| {
            let n = ((hi - lo) / spacing).ceil().max(1.0) as usize;
            (0..=n).map(move |k| lo + (hi - lo) * k as f64 / n as f64)
        };
        match *self {
            Shape::Rect(off, hl, hw) => {
                for x in span(off - hl, off + hl) {
                    for y in span(-hw, hw) {
                        out.push((x, y));
                    }
                }
            }
            Shape::Discs(d) => {
                for (off, r) in d {
                    for x in span(off - r, off + r) {
                        for y in span(-r, r) {
                            if (x - off).powi(2) + y * y <= r * r {
                                out.push((x, y));
                            }
                        }
                    }
                    // The rim, so thin overlaps are not missed.
                    let n = (TAU * r / spacing).ceil() as usize;
                    for k in 0..n {
                        let a = TAU * k as f64 / n as f64;
                        out.push((off + r * a.cos(), r * a.sin()));
                    }
                }
            }
        }
        out
    }
}

/// Every grid cell whose center is inside the footprint, by exhaustive scan,
/// in row-major order.
pub fn dense_footprint_cells(
    grid: &OccupancyGrid,
    pose: &Pose2D,
    fp: &Footprint,
) -> Vec<(usize, usize)> {
    let shape = Shape::of(fp, 0.0);
    let (r, o) = (grid.resolution(), grid.origin());
    let mut out = Vec::new();
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            let cx = o.x + (x as f64 + 0.5) * r;
            let cy = o.y + (y as f64 + 0.5) * r;
            if shape.contains(pose.x(), pose.y(), pose.theta(), cx, cy) {
                out.push((x, y));
            }
        }
    }
    out
}

/// Overlap test by point sampling: true iff some sample of the footprint
/// falls into an occupied cell or outside the grid.
pub fn dense_collides(grid: &OccupancyGrid, pose: &Pose2D, fp: &Footprint) -> bool {
    let shape = Shape::of(fp, 0.0);
    let (r, o) = (grid.resolution(), grid.origin());
    let (s, c) = pose.theta().sin_cos();
    shape.samples(r / 4.0).into_iter().any(|(lx, ly)| {
        let wx = pose.x() + c * lx - s * ly;
        let wy = pose.y() + s * lx + c * ly;
        let cx = ((wx - o.x) / r).floor();
        let cy = ((wy - o.y) / r).floor();
        if cx < 0.0 || cy < 0.0 || cx >= grid.width() as f64 || cy >= grid.height() as f64 {
            return true;
        }
        grid.is_occupied(CellIndex::new(cx as usize, cy as usize))
    })
}

/// Closed-form trailer motion at hitch equilibrium.
///
/// With the hitch angle held at `delta` (by the tractor turn rate
/// `v sin(delta) / L`), the trailer axle moves at `v cos(delta)` along a circle
/// of radius `R = L / tan(delta)`, turning left for positive `delta`. Starting
/// at the origin with heading 0, after time `t` it has swept
/// `phi = v cos(delta) t / R` and sits at `(R sin phi, R (1 - cos phi))` with
/// heading `phi`.
pub fn arc_reference(delta: f64, v: f64, l: f64, t: f64) -> Pose2D {
    assert!(delta.abs() < PI / 2.0 && delta != 0.0);
    let r = l / delta.tan();
    let phi = v * delta.cos() * t / r;
    Pose2D::new(r * phi.sin(), r * (1.0 - phi.cos()), phi)
}

/// Cover soundness and completeness, cell by cell: every rectangle lies in
/// bounds and holds only free cells, and every free cell is covered exactly
/// once.
pub fn coverage_verifier(case_id: &str, grid: &OccupancyGrid, cover: &RectCover) -> OracleReport {
    let (w, h) = (grid.width(), grid.height());
    let mut count = vec![0u32; w * h];
    let mut bad = 0;
    for r in &cover.rects {
        if r.min_x > r.max_x || r.min_y > r.max_y || r.max_x >= w || r.max_y >= h {
            bad += 1;
            continue;
        }
        for y in r.min_y..=r.max_y {
            for x in r.min_x..=r.max_x {
                count[y * w + x] += 1;
                if grid.is_occupied(CellIndex::new(x, y)) {
                    bad += 1;
                }
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            let free = !grid.is_occupied(CellIndex::new(x, y));
            let n = count[y * w + x];
            if (free && n != 1) || (!free && n != 0) {
                bad += 1;
            }
        }
    }
    OracleReport::discrete(case_id, bad)
}

/// Cell offsets relative to a lattice point.
type Offsets = Vec<(i64, i64)>;

/// Lattice graph of one grid and primitive set, fully materialized.
///
/// Lattice point `(i, j)` sits on the corner of cell `(i m, j m)`, where
/// `m = xy_resolution / grid resolution`, for `i m < width`. A motion is
/// allowed when each cell whose center lies inside the margin-grown footprint
/// at any sampled pose is inside the grid and free, and the footprint at the
/// end pose is free too. Its cost is the primitive cost, times
/// `1 + proximity` when the footprint grown by the clearance margin as well
/// reaches an occupied or outside cell.
pub struct LatticeGraph {
    pub nx: usize,
    pub ny: usize,
    pub nh: usize,
    pub valid: Vec<bool>,
    /// Outgoing `(target, cost)` per state.
    pub edges: Vec<Vec<(usize, f64)>>,
    xy: f64,
    origin: (f64, f64),
    headings: Vec<f64>,
}

fn rel_cells(res: f64, shape: &Shape, q: &Pose2D) -> Vec<(i64, i64)> {
    let reach = shape.reach() + q.x().abs().max(q.y().abs()) + res;
    let n = (reach / res).ceil() as i64 + 1;
    let mut out = Vec::new();
    for b in -n..=n {
        for a in -n..=n {
            let cx = (a as f64 + 0.5) * res;
            let cy = (b as f64 + 0.5) * res;
            if shape.contains(q.x(), q.y(), q.theta(), cx, cy) {
                out.push((a, b));
            }
        }
    }
    out
}

impl LatticeGraph {
    pub fn build(grid: &OccupancyGrid, fp: &Footprint, set: &PrimitiveSet) -> Self {
        let cfg = &set.config;
        let res = grid.resolution();
        let m = (cfg.xy_resolution / res).round() as i64;
        let (w, h) = (grid.width() as i64, grid.height() as i64);
        let nx = ((w - 1) / m + 1) as usize;
        let ny = ((h - 1) / m + 1) as usize;
        let nh = cfg.num_headings;
        let body = Shape::of(fp, cfg.footprint_margin);
        let halo = Shape::of(fp, cfg.footprint_margin + cfg.clearance_margin);
        let prox = cfg.cost_weights.proximity;

        let blocked = |cells: &[(i64, i64)], i: usize, j: usize| {
            cells.iter().any(|&(a, b)| {
                let (x, y) = (i as i64 * m + a, j as i64 * m + b);
                x < 0
                    || y < 0
                    || x >= w
                    || y >= h
                    || grid.is_occupied(CellIndex::new(x as usize, y as usize))
            })
        };

        let idx = |i: usize, j: usize, k: usize| (j * nx + i) * nh + k;
        let at_rest: Vec<Vec<(i64, i64)>> = set
            .headings
            .iter()
            .map(|&th| rel_cells(res, &body, &Pose2D::new(0.0, 0.0, th)))
            .collect();
        let mut valid = vec![false; nx * ny * nh];
        for j in 0..ny {
            for i in 0..nx {
                for k in 0..nh {
                    valid[idx(i, j, k)] = !blocked(&at_rest[k], i, j);
                }
            }
        }

        let swept: Vec<(Offsets, Offsets)> = set
            .primitives
            .iter()
            .map(|p| {
                let mut body_cells = Vec::new();
                let mut halo_cells = Vec::new();
                for q in &p.sampled_poses {
                    body_cells.extend(rel_cells(res, &body, q));
                    if prox > 0.0 && cfg.clearance_margin > 0.0 {
                        halo_cells.extend(rel_cells(res, &halo, q));
                    }
                }
                body_cells.sort_unstable();
                body_cells.dedup();
                halo_cells.sort_unstable();
                halo_cells.dedup();
                (body_cells, halo_cells)
            })
            .collect();

        let mut edges = vec![Vec::new(); nx * ny * nh];
        for j in 0..ny {
            for i in 0..nx {
                for (pid, p) in set.primitives.iter().enumerate() {
                    let k = p.start_heading;
                    let from = idx(i, j, k);
                    if !valid[from] {
                        continue;
                    }
                    let (ti, tj) = (i as i64 + p.delta.dx as i64, j as i64 + p.delta.dy as i64);
                    if ti < 0 || tj < 0 || ti >= nx as i64 || tj >= ny as i64 {
                        continue;
                    }
                    let to = idx(ti as usize, tj as usize, p.end_heading);
                    if !valid[to] || blocked(&swept[pid].0, i, j) {
                        continue;
                    }
                    let near = !swept[pid].1.is_empty() && blocked(&swept[pid].1, i, j);
                    let cost = if near { p.cost * (1.0 + prox) } else { p.cost };
                    edges[from].push((to, cost));
                }
            }
        }
        Self {
            nx,
            ny,
            nh,
            valid,
            edges,
            xy: cfg.xy_resolution,
            origin: (grid.origin().x, grid.origin().y),
            headings: set.headings.clone(),
        }
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (j * self.nx + i) * self.nh + k
    }

    fn in_goal(&self, s: usize, goal: &Pose2D, xy: f64, th: f64) -> bool {
        let k = s % self.nh;
        let c = s / self.nh;
        let px = self.origin.0 + (c % self.nx) as f64 * self.xy;
        let py = self.origin.1 + (c / self.nx) as f64 * self.xy;
        (px - goal.x()).hypot(py - goal.y()) <= xy
            && wrap(self.headings[k] - goal.theta()).abs() <= th
    }
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Optimal cost from `start` to any state within `(xy, th)` of `goal`, by
/// plain Dijkstra over the whole graph. `None` when no goal state is reachable
/// or the start state itself is invalid.
pub fn dijkstra_reference(
    graph: &LatticeGraph,
    start: (usize, usize, usize),
    goal: &Pose2D,
    xy: f64,
    th: f64,
) -> Option<f64> {
    let s = graph.index(start.0, start.1, start.2);
    if !graph.valid[s] {
        return None;
    }
    let mut dist = vec![f64::INFINITY; graph.valid.len()];
    dist[s] = 0.0;
    let mut heap = BinaryHeap::from([Item(0.0, s)]);
    let mut best = f64::INFINITY;
    while let Some(Item(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if graph.in_goal(u, goal, xy, th) {
            best = best.min(d);
        }
        for &(v, c) in &graph.edges[u] {
            if d + c < dist[v] {
                dist[v] = d + c;
                heap.push(Item(d + c, v));
            }
        }
    }
    best.is_finite().then_some(best)
}

/// Turning rate between consecutive path poses measured on the circle through
/// both: `2 sin(dtheta / 2) / chord`. Exact for poses sampled on one arc.
pub fn discrete_curvatures(poses: &[Pose2D]) -> Vec<f64> {
    poses
        .windows(2)
        .filter_map(|w| {
            let chord = (w[1].x() - w[0].x()).hypot(w[1].y() - w[0].y());
            (chord > 1e-12)
                .then(|| (2.0 * (wrap(w[1].theta() - w[0].theta()) / 2.0).sin() / chord).abs())
        })
        .collect()
}
