use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use super::primitives::{generate_primitives, PrimitiveSet};
use super::{GoalTolerance, LatticeConfig, PlanError};
use crate::grid::{footprint_cells_unbounded, Footprint, OccupancyGrid, Point2, Pose2D};
use crate::hitch::normalize_angle;

/// Dense planned path in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPath {
    pub poses: Vec<Pose2D>,
    pub total_cost: f64,
    pub length: f64,
    pub primitive_ids: Vec<usize>,
}

impl GlobalPath {
    pub fn end(&self) -> Pose2D {
        *self.poses.last().expect("paths are never empty")
    }
}

/// Cells of one row, relative to a lattice point: `dy` and inclusive `[x0, x1]`.
#[derive(Debug, Clone, Copy)]
struct Span {
    dy: i32,
    x0: i32,
    x1: i32,
}

#[derive(Debug, Clone)]
struct Swept {
    spans: Vec<Span>,
    min: (i32, i32),
    max: (i32, i32),
}

impl Swept {
    fn from_cells(mut cells: Vec<(i64, i64)>) -> Self {
        cells.sort_by_key(|&(x, y)| (y, x));
        cells.dedup();
        let mut spans: Vec<Span> = Vec::new();
        let mut min = (i32::MAX, i32::MAX);
        let mut max = (i32::MIN, i32::MIN);
        for (x, y) in cells {
            let (x, y) = (x as i32, y as i32);
            min = (min.0.min(x), min.1.min(y));
            max = (max.0.max(x), max.1.max(y));
            match spans.last_mut() {
                Some(s) if s.dy == y && s.x1 + 1 == x => s.x1 = x,
                _ => spans.push(Span {
                    dy: y,
                    x0: x,
                    x1: x,
                }),
            }
        }
        Self { spans, min, max }
    }
}

/// Occupancy as packed bit rows.
#[derive(Debug, Clone)]
struct BitGrid {
    width: i32,
    height: i32,
    words: usize,
    bits: Vec<u64>,
}

impl BitGrid {
    fn new(grid: &OccupancyGrid) -> Self {
        let (w, h) = (grid.width(), grid.height());
        let words = w.div_ceil(64);
        let mut bits = vec![0u64; words * h];
        for (c, occ) in grid.iter_cells() {
            if occ {
                bits[c.y * words + c.x / 64] |= 1 << (c.x % 64);
            }
        }
        Self {
            width: w as i32,
            height: h as i32,
            words,
            bits,
        }
    }

    fn row_any(&self, y: i32, x0: i32, x1: i32) -> bool {
        let row = &self.bits[y as usize * self.words..][..self.words];
        let (w0, w1) = (x0 as usize / 64, x1 as usize / 64);
        for (w, &word) in row.iter().enumerate().take(w1 + 1).skip(w0) {
            let lo = if w == w0 { x0 as u32 % 64 } else { 0 };
            let hi = if w == w1 { x1 as u32 % 64 } else { 63 };
            let mask = (u64::MAX >> (63 - hi)) & (u64::MAX << lo);
            if word & mask != 0 {
                return true;
            }
        }
        false
    }

    /// Free and fully inside the grid when placed at cell `(cx, cy)`.
    fn free(&self, s: &Swept, cx: i32, cy: i32) -> bool {
        if cx + s.min.0 < 0
            || cy + s.min.1 < 0
            || cx + s.max.0 >= self.width
            || cy + s.max.1 >= self.height
        {
            return false;
        }
        !s.spans
            .iter()
            .any(|sp| self.row_any(cy + sp.dy, cx + sp.x0, cx + sp.x1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    f: f64,
    h: f64,
    state: usize,
    g: f64,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(other.h.total_cmp(&self.h))
            .then(other.state.cmp(&self.state))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lattice search context for one static grid. Building it precomputes swept
/// cells and state validity, so reuse it across plans on the same grid.
///
/// Lattice point `(i, j)` sits at `origin + (i, j) * xy_resolution`. Motions
/// whose footprint leaves the grid are treated as blocked.
#[derive(Debug, Clone)]
pub struct Planner {
    set: Arc<PrimitiveSet>,
    bits: BitGrid,
    origin: Point2,
    step: i32,
    nx: usize,
    ny: usize,
    swept: Vec<Swept>,
    /// Swept cells with the clearance margin added; empty when proximity is off.
    near: Vec<Swept>,
    valid: Vec<bool>,
    /// Distinct displacements with their cheapest cost, for the heuristic.
    moves: Vec<(i32, i32, f64)>,
}

impl Planner {
    /// `fp` is the planning footprint in the trailer frame; the configured
    /// margin is added here.
    pub fn new(
        grid: &OccupancyGrid,
        fp: &Footprint,
        set: Arc<PrimitiveSet>,
    ) -> Result<Self, PlanError> {
        let cfg = &set.config;
        cfg.validate()?;
        fp.validate()
            .map_err(|e| PlanError::Config(format!("footprint: {e}")))?;
        let ratio = cfg.xy_resolution / grid.resolution();
        let step = ratio.round();
        if step < 1.0 || (ratio - step).abs() > 1e-9 {
            return Err(PlanError::Config(format!(
                "xy_resolution {} must be an integer multiple of the grid resolution {}",
                cfg.xy_resolution,
                grid.resolution()
            )));
        }
        let step = step as i32;
        let res = grid.resolution();
        let zero = Point2::new(0.0, 0.0);
        let sweep = |fp: &Footprint| -> Vec<Swept> {
            set.primitives
                .iter()
                .map(|p| {
                    let cells = p
                        .sampled_poses
                        .iter()
                        .flat_map(|pose| footprint_cells_unbounded(res, zero, pose, fp))
                        .collect();
                    Swept::from_cells(cells)
                })
                .collect()
        };
        let near = if cfg.cost_weights.proximity > 0.0 && cfg.clearance_margin > 0.0 {
            sweep(&fp.inflated(cfg.footprint_margin + cfg.clearance_margin))
        } else {
            Vec::new()
        };
        let fp = fp.inflated(cfg.footprint_margin);
        let swept = sweep(&fp);
        let at_heading: Vec<Swept> = set
            .headings
            .iter()
            .map(|&th| {
                Swept::from_cells(footprint_cells_unbounded(
                    res,
                    zero,
                    &Pose2D::new(0.0, 0.0, th),
                    &fp,
                ))
            })
            .collect();
        let bits = BitGrid::new(grid);
        let nx = (grid.width() - 1) / step as usize + 1;
        let ny = (grid.height() - 1) / step as usize + 1;
        let nh = set.num_headings();
        let mut valid = vec![false; nx * ny * nh];
        for j in 0..ny {
            for i in 0..nx {
                for (h, s) in at_heading.iter().enumerate() {
                    valid[(j * nx + i) * nh + h] = bits.free(s, i as i32 * step, j as i32 * step);
                }
            }
        }
        let mut best: BTreeMap<(i32, i32), f64> = BTreeMap::new();
        for p in &set.primitives {
            let e = best
                .entry((p.delta.dx, p.delta.dy))
                .or_insert(f64::INFINITY);
            *e = e.min(p.cost);
        }
        let moves = best.into_iter().map(|((dx, dy), c)| (dx, dy, c)).collect();
        Ok(Self {
            origin: grid.origin(),
            set,
            bits,
            step,
            nx,
            ny,
            swept,
            near,
            valid,
            moves,
        })
    }

    pub fn primitives(&self) -> &PrimitiveSet {
        &self.set
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.set.config
    }

    /// Lattice extent `(nx, ny, headings)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.set.num_headings())
    }

    fn index(&self, i: usize, j: usize, h: usize) -> usize {
        (j * self.nx + i) * self.set.num_headings() + h
    }

    fn unindex(&self, s: usize) -> (usize, usize, usize) {
        let nh = self.set.num_headings();
        let h = s % nh;
        let c = s / nh;
        (c % self.nx, c / self.nx, h)
    }

    fn point(&self, i: usize, j: usize) -> Point2 {
        let r = self.set.config.xy_resolution;
        Point2::new(self.origin.x + i as f64 * r, self.origin.y + j as f64 * r)
    }

    pub fn lattice_pose(&self, i: usize, j: usize, h: usize) -> Pose2D {
        let p = self.point(i, j);
        Pose2D::new(p.x, p.y, self.set.headings[h])
    }

    /// Nearest lattice state to `pose`, if its position is inside the lattice.
    pub fn snap(&self, pose: &Pose2D) -> Option<(usize, usize, usize)> {
        let r = self.set.config.xy_resolution;
        let i = ((pose.x() - self.origin.x) / r).round();
        let j = ((pose.y() - self.origin.y) / r).round();
        if i < 0.0 || j < 0.0 || i >= self.nx as f64 || j >= self.ny as f64 {
            return None;
        }
        Some((
            i as usize,
            j as usize,
            self.set.nearest_heading(pose.theta()),
        ))
    }

    pub fn state_valid(&self, i: usize, j: usize, h: usize) -> bool {
        i < self.nx && j < self.ny && h < self.set.num_headings() && self.valid[self.index(i, j, h)]
    }

    /// Valid lattice state closest to `pose` within `radius` meters, preferring
    /// the nearest heading bins. Ties break on index order.
    pub fn nearest_valid_state(&self, pose: &Pose2D, radius: f64) -> Option<(usize, usize, usize)> {
        let r = self.set.config.xy_resolution;
        let nh = self.set.num_headings();
        let reach = (radius / r).ceil() as i64;
        let ci = ((pose.x() - self.origin.x) / r).round() as i64;
        let cj = ((pose.y() - self.origin.y) / r).round() as i64;
        let mut best: Option<(f64, (usize, usize, usize))> = None;
        for j in cj - reach..=cj + reach {
            for i in ci - reach..=ci + reach {
                if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
                    continue;
                }
                let (i, j) = (i as usize, j as usize);
                let d = self.point(i, j).distance(&pose.position());
                if d > radius {
                    continue;
                }
                for h in 0..nh {
                    if !self.valid[self.index(i, j, h)] {
                        continue;
                    }
                    let dth = normalize_angle(self.set.headings[h] - pose.theta()).abs();
                    // One heading bin weighs like one lattice step.
                    let score = d + dth / self.set.config.bin_angle() * r;
                    if best.is_none_or(|(b, _)| score < b - 1e-12) {
                        best = Some((score, (i, j, h)));
                    }
                }
            }
        }
        best.map(|(_, s)| s)
    }

    fn in_goal(&self, i: usize, j: usize, h: usize, goal: &Pose2D, tol: &GoalTolerance) -> bool {
        self.point(i, j).distance(&goal.position()) <= tol.xy
            && normalize_angle(self.set.headings[h] - goal.theta()).abs() <= tol.theta
    }

    /// Relaxed cost-to-go over positions: primitive displacements at their
    /// cheapest cost, between positions that admit some valid heading.
    fn position_heuristic(&self, goal: &Pose2D, tol: &GoalTolerance) -> Option<Vec<f64>> {
        let nh = self.set.num_headings();
        let mut dist = vec![f64::INFINITY; self.nx * self.ny];
        let mut heap = BinaryHeap::new();
        let r = self.set.config.xy_resolution;
        let reach = (tol.xy / r).ceil() as i64 + 1;
        let gi = ((goal.x() - self.origin.x) / r).round() as i64;
        let gj = ((goal.y() - self.origin.y) / r).round() as i64;
        for j in (gj - reach).max(0)..=(gj + reach).min(self.ny as i64 - 1) {
            for i in (gi - reach).max(0)..=(gi + reach).min(self.nx as i64 - 1) {
                let (i, j) = (i as usize, j as usize);
                if (0..nh)
                    .any(|h| self.valid[self.index(i, j, h)] && self.in_goal(i, j, h, goal, tol))
                {
                    let c = j * self.nx + i;
                    dist[c] = 0.0;
                    heap.push(Entry {
                        f: 0.0,
                        h: 0.0,
                        state: c,
                        g: 0.0,
                    });
                }
            }
        }
        if heap.is_empty() {
            return None;
        }
        let pos_valid = |c: usize| (0..nh).any(|h| self.valid[c * nh + h]);
        while let Some(Entry { g, state: c, .. }) = heap.pop() {
            if g > dist[c] {
                continue;
            }
            let (i, j) = ((c % self.nx) as i64, (c / self.nx) as i64);
            for &(dx, dy, cost) in &self.moves {
                // Predecessor p with p + d = c.
                let (pi, pj) = (i - i64::from(dx), j - i64::from(dy));
                if pi < 0 || pj < 0 || pi >= self.nx as i64 || pj >= self.ny as i64 {
                    continue;
                }
                let p = pj as usize * self.nx + pi as usize;
                let ng = g + cost;
                if ng < dist[p] && pos_valid(p) {
                    dist[p] = ng;
                    heap.push(Entry {
                        f: ng,
                        h: 0.0,
                        state: p,
                        g: ng,
                    });
                }
            }
        }
        Some(dist)
    }

    /// Plans from the lattice state nearest `start`.
    pub fn plan(
        &self,
        start: &Pose2D,
        goal: &Pose2D,
        tol: &GoalTolerance,
    ) -> Result<Option<GlobalPath>, PlanError> {
        let s = self.snap(start).ok_or(PlanError::InvalidStart)?;
        if !self.state_valid(s.0, s.1, s.2) {
            return Err(PlanError::InvalidStart);
        }
        self.plan_from_state(s, goal, tol)
    }

    /// Plans from an explicit lattice state.
    pub fn plan_from_state(
        &self,
        start: (usize, usize, usize),
        goal: &Pose2D,
        tol: &GoalTolerance,
    ) -> Result<Option<GlobalPath>, PlanError> {
        if !self.state_valid(start.0, start.1, start.2) {
            return Err(PlanError::InvalidStart);
        }
        self.search(&[(start, 0.0)], goal, tol)
    }

    /// Plans from any valid lattice state within `radius` of `pose`. Each
    /// candidate start is charged its offset from the pose at `offset_scale`
    /// times the length and turning weights, so the search picks the cheapest
    /// combination of start offset and path. A large scale keeps the start
    /// near the pose unless nearer states cannot reach the goal.
    pub fn plan_near(
        &self,
        pose: &Pose2D,
        radius: f64,
        offset_scale: f64,
        goal: &Pose2D,
        tol: &GoalTolerance,
    ) -> Result<Option<GlobalPath>, PlanError> {
        let w = self.set.config.cost_weights;
        let r = self.set.config.xy_resolution;
        let reach = (radius / r).ceil() as i64;
        let ci = ((pose.x() - self.origin.x) / r).round() as i64;
        let cj = ((pose.y() - self.origin.y) / r).round() as i64;
        let half_bin = self.set.config.bin_angle() / 2.0;
        let mut starts = Vec::new();
        for j in cj - reach..=cj + reach {
            for i in ci - reach..=ci + reach {
                if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
                    continue;
                }
                let (i, j) = (i as usize, j as usize);
                let d = self.point(i, j).distance(&pose.position());
                if d > radius {
                    continue;
                }
                for h in 0..self.set.num_headings() {
                    let dth = normalize_angle(self.set.headings[h] - pose.theta()).abs();
                    // The two bins around the current heading.
                    if dth <= half_bin * 2.0 && self.valid[self.index(i, j, h)] {
                        starts.push(((i, j, h), offset_scale * (w.length * d + w.turning * dth)));
                    }
                }
            }
        }
        if starts.is_empty() {
            return Err(PlanError::InvalidStart);
        }
        self.search(&starts, goal, tol)
    }

    /// Primitive cost, raised by the proximity weight when the motion passes
    /// within the clearance margin of an obstacle or the grid edge.
    fn edge_cost(&self, id: usize, cost: f64, cx: i32, cy: i32) -> f64 {
        match self.near.get(id) {
            Some(s) if !self.bits.free(s, cx, cy) => {
                cost * (1.0 + self.set.config.cost_weights.proximity)
            }
            _ => cost,
        }
    }

    fn search(
        &self,
        starts: &[((usize, usize, usize), f64)],
        goal: &Pose2D,
        tol: &GoalTolerance,
    ) -> Result<Option<GlobalPath>, PlanError> {
        let (lo, hi) = (self.origin, self.point(self.nx - 1, self.ny - 1));
        let r = self.set.config.xy_resolution;
        if goal.x() < lo.x || goal.y() < lo.y || goal.x() > hi.x + r || goal.y() > hi.y + r {
            return Err(PlanError::GoalOutOfBounds);
        }
        let Some(h2d) = self.position_heuristic(goal, tol) else {
            return Ok(None);
        };
        let w_len = self.set.config.cost_weights.length;
        let heuristic = |i: usize, j: usize| {
            let euclid = w_len * (self.point(i, j).distance(&goal.position()) - tol.xy).max(0.0);
            h2d[j * self.nx + i].max(euclid)
        };

        let nstates = self.valid.len();
        let mut g = vec![f64::INFINITY; nstates];
        let mut parent: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); nstates];
        let mut heap = BinaryHeap::new();
        for &((si, sj, sh), g0) in starts {
            let start = self.index(si, sj, sh);
            let h0 = heuristic(si, sj);
            if h0.is_finite() && g0 < g[start] {
                g[start] = g0;
                heap.push(Entry {
                    f: g0 + h0,
                    h: h0,
                    state: start,
                    g: g0,
                });
            }
        }
        let mut expansions = 0usize;
        while let Some(e) = heap.pop() {
            if e.g > g[e.state] {
                continue;
            }
            let (i, j, h) = self.unindex(e.state);
            if self.in_goal(i, j, h, goal, tol) {
                return Ok(Some(self.reconstruct(e.state, &parent, &g)));
            }
            expansions += 1;
            if expansions > self.set.config.max_expansions {
                return Ok(None);
            }
            let (cx, cy) = (i as i32 * self.step, j as i32 * self.step);
            for p in self.set.from_heading(h) {
                let (ni, nj) = (
                    i as i64 + i64::from(p.delta.dx),
                    j as i64 + i64::from(p.delta.dy),
                );
                if ni < 0 || nj < 0 || ni >= self.nx as i64 || nj >= self.ny as i64 {
                    continue;
                }
                let (ni, nj) = (ni as usize, nj as usize);
                let next = self.index(ni, nj, p.end_heading);
                if e.g + p.cost >= g[next] || !self.valid[next] {
                    continue;
                }
                let hn = heuristic(ni, nj);
                if !hn.is_finite() || !self.bits.free(&self.swept[p.id], cx, cy) {
                    continue;
                }
                let ng = e.g + self.edge_cost(p.id, p.cost, cx, cy);
                if ng >= g[next] {
                    continue;
                }
                g[next] = ng;
                parent[next] = (e.state, p.id);
                heap.push(Entry {
                    f: ng + hn,
                    h: hn,
                    state: next,
                    g: ng,
                });
            }
        }
        Ok(None)
    }

    /// Path cost excludes the start offset charged by [`Planner::plan_near`].
    fn reconstruct(&self, end: usize, parent: &[(usize, usize)], g: &[f64]) -> GlobalPath {
        let mut chain = Vec::new();
        let mut s = end;
        while parent[s].0 != usize::MAX {
            chain.push(parent[s]);
            s = parent[s].0;
        }
        chain.reverse();
        let cost = g[end] - g[s];
        let (i, j, h) = self.unindex(s);
        let mut poses = vec![self.lattice_pose(i, j, h)];
        let mut ids = Vec::with_capacity(chain.len());
        let mut length = 0.0;
        for (from, id) in chain {
            let (i, j, _) = self.unindex(from);
            let base = self.point(i, j);
            let prim = &self.set.primitives[id];
            poses.extend(
                prim.sampled_poses
                    .iter()
                    .skip(1)
                    .map(|q| Pose2D::new(base.x + q.x(), base.y + q.y(), q.theta())),
            );
            ids.push(id);
            length += prim.arc_length;
        }
        GlobalPath {
            poses,
            total_cost: cost,
            length,
            primitive_ids: ids,
        }
    }
}

/// One-shot planning: builds the primitive set and planner, then searches.
/// Returns `Ok(None)` when no lattice path reaches the goal region.
pub fn plan(
    grid: &OccupancyGrid,
    start: &Pose2D,
    goal: &Pose2D,
    fp: &Footprint,
    cfg: &LatticeConfig,
    tol: &GoalTolerance,
) -> Result<Option<GlobalPath>, PlanError> {
    let set = Arc::new(generate_primitives(cfg)?);
    Planner::new(grid, fp, set)?.plan(start, goal, tol)
}
