use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{LatticeConfig, PlanError};
use crate::grid::Pose2D;
use crate::hitch::normalize_angle;

/// Quantized displacement of a primitive, in lattice cells and heading bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LatticeDelta {
    pub dx: i32,
    pub dy: i32,
    pub dheading: i32,
}

/// Geometry of a primitive in its direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Shape {
    Straight,
    /// Straight segment followed by an arc.
    LineArc,
    /// Arc followed by a straight segment.
    ArcLine,
}

impl Shape {
    fn code(self) -> &'static str {
        match self {
            Shape::Straight => "S",
            Shape::LineArc => "LA",
            Shape::ArcLine => "AL",
        }
    }

    fn parse(s: &str) -> Option<Shape> {
        match s {
            "S" => Some(Shape::Straight),
            "LA" => Some(Shape::LineArc),
            "AL" => Some(Shape::ArcLine),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionPrimitive {
    pub id: usize,
    pub start_heading: usize,
    pub end_heading: usize,
    pub delta: LatticeDelta,
    pub shape: Shape,
    pub reverse: bool,
    /// Signed curvature of the arc part (0 for straights).
    pub curvature: f64,
    pub line_length: f64,
    /// Total traveled length, straight plus arc.
    pub arc_length: f64,
    /// Poses relative to the start lattice point, absolute headings.
    pub sampled_poses: Vec<Pose2D>,
    pub cost: f64,
}

/// Primitives for every start heading of one lattice configuration.
#[derive(Debug, Clone)]
pub struct PrimitiveSet {
    pub config: LatticeConfig,
    /// Integer direction vector of every heading index.
    pub directions: Vec<(i32, i32)>,
    /// Heading angle of every heading index.
    pub headings: Vec<f64>,
    pub primitives: Vec<MotionPrimitive>,
    /// Requested primitives that had no curvature-feasible lattice endpoint.
    pub dropped: usize,
    by_heading: Vec<Vec<usize>>,
}

impl PrimitiveSet {
    fn from_parts(
        config: LatticeConfig,
        directions: Vec<(i32, i32)>,
        mut primitives: Vec<MotionPrimitive>,
        dropped: usize,
    ) -> Self {
        primitives.sort_by(|a, b| {
            (a.start_heading, a.reverse, a.delta, a.shape).cmp(&(
                b.start_heading,
                b.reverse,
                b.delta,
                b.shape,
            ))
        });
        let mut by_heading = vec![Vec::new(); config.num_headings];
        for (i, p) in primitives.iter_mut().enumerate() {
            p.id = i;
            by_heading[p.start_heading].push(i);
        }
        let headings = directions
            .iter()
            .map(|&(a, b)| f64::from(b).atan2(f64::from(a)))
            .collect();
        Self {
            config,
            directions,
            headings,
            primitives,
            dropped,
            by_heading,
        }
    }

    pub fn from_heading(&self, heading: usize) -> impl Iterator<Item = &MotionPrimitive> {
        self.by_heading[heading]
            .iter()
            .map(|&i| &self.primitives[i])
    }

    pub fn num_headings(&self) -> usize {
        self.config.num_headings
    }

    /// Heading index closest to angle `theta`.
    pub fn nearest_heading(&self, theta: f64) -> usize {
        let mut best = 0;
        let mut best_err = f64::INFINITY;
        for (i, &h) in self.headings.iter().enumerate() {
            let err = normalize_angle(theta - h).abs();
            if err < best_err {
                best_err = err;
                best = i;
            }
        }
        best
    }
}

fn gcd(a: i32, b: i32) -> i32 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Integer direction vectors approximating `num_headings` evenly spaced angles.
///
/// The first quadrant is searched with the smallest component bound that keeps
/// every heading distinct and within a quarter bin of its nominal angle; the
/// other quadrants are exact 90 degree rotations.
pub fn heading_directions(num_headings: usize) -> Vec<(i32, i32)> {
    let quarter = num_headings / 4;
    let bin = std::f64::consts::TAU / num_headings as f64;
    let mut first = Vec::new();
    for bound in 1..=64 {
        first.clear();
        let mut worst = 0.0f64;
        for k in 0..quarter {
            let target = k as f64 * bin;
            let mut best: Option<((i32, i32), f64, i32)> = None;
            for a in 1..=bound {
                for b in 0..=bound {
                    if gcd(a, b) != 1 {
                        continue;
                    }
                    let err = (f64::from(b).atan2(f64::from(a)) - target).abs();
                    let norm = a * a + b * b;
                    let better = match best {
                        None => true,
                        Some((_, e, n)) => {
                            err < e - 1e-12 || ((err - e).abs() <= 1e-12 && norm < n)
                        }
                    };
                    if better {
                        best = Some(((a, b), err, norm));
                    }
                }
            }
            let (dir, err, _) = best.expect("non-empty candidate set");
            worst = worst.max(err);
            first.push(dir);
        }
        let mut distinct = first.clone();
        distinct.sort();
        distinct.dedup();
        if distinct.len() == quarter && worst < bin / 4.0 {
            break;
        }
    }
    let mut dirs = Vec::with_capacity(num_headings);
    for q in 0..4 {
        for &(a, b) in &first {
            dirs.push(rotate_quarter_int((a, b), q));
        }
    }
    dirs
}

fn rotate_quarter_int((x, y): (i32, i32), quarters: usize) -> (i32, i32) {
    match quarters % 4 {
        0 => (x, y),
        1 => (-y, x),
        2 => (-x, -y),
        _ => (y, -x),
    }
}

/// Curvature-feasible path from the origin at heading `theta0` to `(x, y, theta1)`.
#[derive(Debug, Clone, Copy)]
struct Fit {
    shape: Shape,
    line_length: f64,
    curvature: f64,
    turn: f64,
}

impl Fit {
    fn arc_part(&self) -> f64 {
        if self.curvature == 0.0 {
            0.0
        } else {
            self.turn / self.curvature
        }
    }

    fn length(&self) -> f64 {
        self.line_length + self.arc_part()
    }

    /// Pose after traveling `s` along the fit.
    fn pose_at(&self, theta0: f64, s: f64) -> (f64, f64, f64) {
        let line = |x: f64, y: f64, th: f64, d: f64| (x + d * th.cos(), y + d * th.sin(), th);
        let arc = |x: f64, y: f64, th: f64, d: f64| {
            let k = self.curvature;
            let th1 = th + k * d;
            (
                x + (th1.sin() - th.sin()) / k,
                y + (th.cos() - th1.cos()) / k,
                th1,
            )
        };
        match self.shape {
            Shape::Straight => line(0.0, 0.0, theta0, s),
            Shape::LineArc => {
                if s <= self.line_length {
                    line(0.0, 0.0, theta0, s)
                } else {
                    let (x, y, th) = line(0.0, 0.0, theta0, self.line_length);
                    arc(x, y, th, s - self.line_length)
                }
            }
            Shape::ArcLine => {
                let a = self.arc_part();
                if s <= a {
                    arc(0.0, 0.0, theta0, s)
                } else {
                    let (x, y, th) = arc(0.0, 0.0, theta0, a);
                    line(x, y, th, s - a)
                }
            }
        }
    }
}

fn fit_endpoint(
    theta0: f64,
    x: f64,
    y: f64,
    theta1: f64,
    kappa_max: f64,
    shape: Shape,
) -> Option<Fit> {
    let turn = normalize_angle(theta1 - theta0);
    let (s0, c0) = theta0.sin_cos();
    let (s1, c1) = theta1.sin_cos();
    if shape == Shape::Straight {
        let along = c0 * x + s0 * y;
        let across = -s0 * x + c0 * y;
        let ok = turn.abs() < 1e-12 && across.abs() < 1e-9 && along > 0.0;
        return ok.then_some(Fit {
            shape,
            line_length: along,
            curvature: 0.0,
            turn: 0.0,
        });
    }
    if turn.abs() < 1e-9 {
        return None;
    }
    // Arc displacement per unit radius.
    let vx = s1 - s0;
    let vy = c0 - c1;
    let (line_length, radius) = match shape {
        Shape::LineArc => {
            let det = c0 * vy - s0 * vx;
            if det.abs() < 1e-12 {
                return None;
            }
            ((x * vy - y * vx) / det, (c0 * y - s0 * x) / det)
        }
        Shape::ArcLine => {
            let det = vx * s1 - vy * c1;
            if det.abs() < 1e-12 {
                return None;
            }
            ((vx * y - vy * x) / det, (x * s1 - y * c1) / det)
        }
        Shape::Straight => unreachable!(),
    };
    if line_length < -1e-9 || radius * turn <= 0.0 {
        return None;
    }
    let mut curvature = 1.0 / radius;
    if curvature.abs() > kappa_max * (1.0 + 1e-12) {
        return None;
    }
    curvature = curvature.clamp(-kappa_max, kappa_max);
    Some(Fit {
        shape,
        line_length: line_length.max(0.0),
        curvature,
        turn,
    })
}

fn sample_fit(fit: &Fit, theta0: f64, end: Pose2D, spacing: f64) -> Vec<Pose2D> {
    let length = fit.length();
    let n = (length / spacing).ceil().max(1.0) as usize;
    let mut poses = Vec::with_capacity(n + 1);
    poses.push(Pose2D::new(0.0, 0.0, theta0));
    for i in 1..n {
        let (x, y, th) = fit.pose_at(theta0, length * i as f64 / n as f64);
        poses.push(Pose2D::new(x, y, th));
    }
    poses.push(end);
    poses
}

/// Half-size, in lattice cells, of the endpoint search around an exact arc end.
const SNAP_WINDOW: i32 = 3;

struct Builder<'a> {
    cfg: &'a LatticeConfig,
    dirs: &'a [(i32, i32)],
    headings: Vec<f64>,
}

impl Builder<'_> {
    fn spacing(&self) -> f64 {
        self.cfg.xy_resolution / 2.0
    }

    fn cost(&self, fit: &Fit, reverse: bool) -> f64 {
        let w = &self.cfg.cost_weights;
        let base = w.length * fit.length() + w.turning * fit.turn.abs();
        if reverse {
            base * w.reverse
        } else {
            base
        }
    }

    /// Forward primitive from `start` heading to the lattice pose `(dx, dy, end)`.
    fn build(
        &self,
        start: usize,
        dx: i32,
        dy: i32,
        end: usize,
        shape: Shape,
    ) -> Option<MotionPrimitive> {
        let res = self.cfg.xy_resolution;
        let n = self.cfg.num_headings as i32;
        let (theta0, theta1) = (self.headings[start], self.headings[end]);
        let (x, y) = (f64::from(dx) * res, f64::from(dy) * res);
        let fit = fit_endpoint(theta0, x, y, theta1, self.cfg.kappa_max, shape)?;
        let end_pose = Pose2D::new(x, y, theta1);
        let dheading = (end as i32 - start as i32).rem_euclid(n);
        let dheading = if dheading > n / 2 {
            dheading - n
        } else {
            dheading
        };
        Some(MotionPrimitive {
            id: 0,
            start_heading: start,
            end_heading: end,
            delta: LatticeDelta { dx, dy, dheading },
            shape,
            reverse: false,
            curvature: fit.curvature,
            line_length: fit.line_length,
            arc_length: fit.length(),
            sampled_poses: sample_fit(&fit, theta0, end_pose, self.spacing()),
            cost: self.cost(&fit, false),
        })
    }

    fn straight(&self, start: usize, length: f64) -> Option<MotionPrimitive> {
        let (a, b) = self.dirs[start];
        let step = f64::from(a).hypot(f64::from(b)) * self.cfg.xy_resolution;
        let k = (length / step).round().max(1.0) as i32;
        self.build(start, k * a, k * b, start, Shape::Straight)
    }

    /// Best lattice fit of a constant-curvature arc of `length` and `kappa`.
    fn arc(&self, start: usize, length: f64, kappa: f64) -> Option<MotionPrimitive> {
        let res = self.cfg.xy_resolution;
        let theta0 = self.headings[start];
        let theta1 = theta0 + kappa * length;
        let ex = (theta1.sin() - theta0.sin()) / kappa;
        let ey = (theta0.cos() - theta1.cos()) / kappa;
        // Two nearest end headings.
        let mut by_err: Vec<(f64, usize)> = self
            .headings
            .iter()
            .enumerate()
            .map(|(i, &h)| (normalize_angle(theta1 - h).abs(), i))
            .collect();
        by_err.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // Feasible line+arc endpoints form a wedge behind the exact arc end, so
        // a few cells around it are searched.
        let (fx, fy) = ((ex / res).round() as i32, (ey / res).round() as i32);
        let mut best: Option<(f64, MotionPrimitive)> = None;
        for &(_, end) in by_err.iter().take(2) {
            if end == start {
                continue;
            }
            for (ox, oy) in (-SNAP_WINDOW..=SNAP_WINDOW)
                .flat_map(|oy| (-SNAP_WINDOW..=SNAP_WINDOW).map(move |ox| (ox, oy)))
            {
                let (dx, dy) = (fx + ox, fy + oy);
                let err = (f64::from(dx) * res - ex).hypot(f64::from(dy) * res - ey);
                for shape in [Shape::LineArc, Shape::ArcLine] {
                    if let Some(p) = self.build(start, dx, dy, end, shape) {
                        let score = err + (p.curvature - kappa).abs() * 1e-6;
                        if best.as_ref().is_none_or(|(s, _)| score < *s - 1e-12) {
                            best = Some((score, p));
                        }
                    }
                }
            }
        }
        best.map(|(_, p)| p)
    }

    /// Same displacement driven backwards: geometry of the forward primitive
    /// from the opposite heading, with headings flipped back.
    fn reversed(&self, fwd: &MotionPrimitive) -> MotionPrimitive {
        let n = self.cfg.num_headings;
        let half = n / 2;
        MotionPrimitive {
            start_heading: (fwd.start_heading + half) % n,
            end_heading: (fwd.end_heading + half) % n,
            reverse: true,
            sampled_poses: fwd
                .sampled_poses
                .iter()
                .map(|p| Pose2D::new(p.x(), p.y(), p.theta() + std::f64::consts::PI))
                .collect(),
            cost: fwd.cost * self.cfg.cost_weights.reverse,
            ..fwd.clone()
        }
    }
}

/// Rebuilds a first-quadrant primitive rotated by `q` quarter turns.
fn rotated(b: &Builder<'_>, p: &MotionPrimitive, q: usize) -> Option<MotionPrimitive> {
    let n = b.cfg.num_headings;
    let (dx, dy) = rotate_quarter_int((p.delta.dx, p.delta.dy), q);
    let shift = q * n / 4;
    b.build(
        (p.start_heading + shift) % n,
        dx,
        dy,
        (p.end_heading + shift) % n,
        p.shape,
    )
}

/// Builds the primitive set: for every start heading one straight primitive
/// per length, plus arcs at `{+-kappa_max, +-kappa_max/2}` snapped to the lattice.
/// Reverse variants are added iff `allow_reverse`.
pub fn generate_primitives(cfg: &LatticeConfig) -> Result<PrimitiveSet, PlanError> {
    cfg.validate()?;
    let n = cfg.num_headings;
    let dirs = heading_directions(n);
    let headings: Vec<f64> = dirs
        .iter()
        .map(|&(a, b)| f64::from(b).atan2(f64::from(a)))
        .collect();
    let builder = Builder {
        cfg,
        dirs: &dirs,
        headings: headings.clone(),
    };
    let curvatures = [
        cfg.kappa_max,
        cfg.kappa_max / 2.0,
        -cfg.kappa_max / 2.0,
        -cfg.kappa_max,
    ];

    let mut quadrant = Vec::new();
    let mut dropped = 0;
    for start in 0..n / 4 {
        for &length in &cfg.primitive_lengths {
            match builder.straight(start, length) {
                Some(p) => quadrant.push(p),
                None => dropped += 4,
            }
            for &kappa in &curvatures {
                match builder.arc(start, length, kappa) {
                    Some(p) => quadrant.push(p),
                    None => dropped += 4,
                }
            }
        }
    }
    let mut all: Vec<MotionPrimitive> = Vec::new();
    for q in 0..4 {
        for p in &quadrant {
            match rotated(&builder, p, q) {
                Some(r) => all.push(r),
                None => dropped += 1,
            }
        }
    }
    if cfg.allow_reverse {
        let rev: Vec<_> = all.iter().map(|p| builder.reversed(p)).collect();
        all.extend(rev);
    }
    // Keep the cheapest primitive per (start, reverse, displacement).
    let mut unique: BTreeMap<(usize, bool, LatticeDelta), MotionPrimitive> = BTreeMap::new();
    for p in all {
        let key = (p.start_heading, p.reverse, p.delta);
        match unique.get(&key) {
            Some(q) if q.cost <= p.cost => {}
            _ => {
                unique.insert(key, p);
            }
        }
    }
    Ok(PrimitiveSet::from_parts(
        cfg.clone(),
        dirs,
        unique.into_values().collect(),
        dropped,
    ))
}

const PRIMSET_MAGIC: &str = "primset v1";

/// `primset v1`: a header with the lattice geometry, then one primitive per line:
/// `start_heading dx dy dheading shape reverse curvature length cost`.
pub fn write_primset(set: &PrimitiveSet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{PRIMSET_MAGIC}");
    let _ = writeln!(
        out,
        "headings {} resolution {} count {}",
        set.config.num_headings,
        set.config.xy_resolution,
        set.primitives.len()
    );
    for p in &set.primitives {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            p.start_heading,
            p.delta.dx,
            p.delta.dy,
            p.delta.dheading,
            p.shape.code(),
            u8::from(p.reverse),
            p.curvature,
            p.arc_length,
            p.cost
        );
    }
    out
}

/// Reads a `primset v1` file. Geometry is rebuilt from the quantized endpoints
/// and checked against the recorded curvature and length.
pub fn read_primset(text: &str, cfg: &LatticeConfig) -> Result<PrimitiveSet, PlanError> {
    cfg.validate()?;
    let bad = |m: String| PlanError::Primset(m);
    let mut lines = text.lines();
    if lines.next() != Some(PRIMSET_MAGIC) {
        return Err(bad(format!("missing {PRIMSET_MAGIC:?} header")));
    }
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("missing geometry line".into()))?
        .split(' ')
        .collect();
    if header.len() != 6
        || header[0] != "headings"
        || header[2] != "resolution"
        || header[4] != "count"
    {
        return Err(bad(
            "expected `headings <n> resolution <r> count <c>`".into()
        ));
    }
    let n: usize = header[1]
        .parse()
        .map_err(|_| bad("bad heading count".into()))?;
    let res: f64 = header[3]
        .parse()
        .map_err(|_| bad("bad resolution".into()))?;
    let count: usize = header[5].parse().map_err(|_| bad("bad count".into()))?;
    if n != cfg.num_headings || res != cfg.xy_resolution {
        return Err(bad(format!(
            "file lattice ({n} headings, {res} m) differs from configuration"
        )));
    }
    let dirs = heading_directions(n);
    let headings: Vec<f64> = dirs
        .iter()
        .map(|&(a, b)| f64::from(b).atan2(f64::from(a)))
        .collect();
    let builder = Builder {
        cfg,
        dirs: &dirs,
        headings,
    };
    let mut prims = Vec::with_capacity(count);
    for (lineno, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(' ').collect();
        if f.len() != 9 {
            return Err(bad(format!("record {lineno}: expected 9 fields")));
        }
        let int = |s: &str| {
            s.parse::<i64>()
                .map_err(|_| bad(format!("record {lineno}: bad integer {s:?}")))
        };
        let float = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(format!("record {lineno}: bad number {s:?}")))
        };
        let start = int(f[0])?;
        let (dx, dy, dh) = (int(f[1])? as i32, int(f[2])? as i32, int(f[3])?);
        let shape = Shape::parse(f[4]).ok_or_else(|| bad(format!("record {lineno}: bad shape")))?;
        let reverse = match f[5] {
            "0" => false,
            "1" => true,
            _ => return Err(bad(format!("record {lineno}: bad reverse flag"))),
        };
        let (curvature, length, cost) = (float(f[6])?, float(f[7])?, float(f[8])?);
        if start < 0 || start as usize >= n {
            return Err(bad(format!("record {lineno}: heading out of range")));
        }
        let start = start as usize;
        let end = (start as i64 + dh).rem_euclid(n as i64) as usize;
        let p = if reverse {
            let half = n / 2;
            let fwd = builder
                .build((start + half) % n, dx, dy, (end + half) % n, shape)
                .ok_or_else(|| bad(format!("record {lineno}: infeasible geometry")))?;
            builder.reversed(&fwd)
        } else {
            builder
                .build(start, dx, dy, end, shape)
                .ok_or_else(|| bad(format!("record {lineno}: infeasible geometry")))?
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + b.abs());
        if !(close(p.curvature, curvature) && close(p.arc_length, length) && close(p.cost, cost)) {
            return Err(bad(format!(
                "record {lineno}: geometry does not match recorded values"
            )));
        }
        prims.push(p);
    }
    if prims.len() != count {
        return Err(bad(format!(
            "header declares {count} records, found {}",
            prims.len()
        )));
    }
    Ok(PrimitiveSet::from_parts(cfg.clone(), dirs, prims, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn sixteen_heading_directions() {
        let d = heading_directions(16);
        assert_eq!(&d[..4], &[(1, 0), (2, 1), (1, 1), (1, 2)]);
        assert_eq!(d[4], (0, 1));
        assert_eq!(d[8], (-1, 0));
        assert_eq!(
            heading_directions(8),
            vec![
                (1, 0),
                (1, 1),
                (0, 1),
                (-1, 1),
                (-1, 0),
                (-1, -1),
                (0, -1),
                (1, -1)
            ]
        );
    }

    #[test]
    fn straight_heading_zero() {
        let cfg = LatticeConfig {
            xy_resolution: 0.25,
            primitive_lengths: vec![0.5],
            ..LatticeConfig::default()
        };
        let set = generate_primitives(&cfg).unwrap();
        let straight: Vec<_> = set
            .from_heading(0)
            .filter(|p| p.shape == Shape::Straight)
            .collect();
        assert_eq!(straight.len(), 1);
        assert_eq!(
            straight[0].delta,
            LatticeDelta {
                dx: 2,
                dy: 0,
                dheading: 0
            }
        );
        assert_eq!(straight[0].curvature, 0.0);
        assert!((straight[0].arc_length - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_bin_arc_length() {
        // Eight headings are exactly 45 degrees apart; a fine lattice makes the
        // snapped arc almost the requested one.
        let kappa_max = 2.0;
        let bin = std::f64::consts::FRAC_PI_4;
        let res = 1e-4;
        let cfg = LatticeConfig {
            xy_resolution: res,
            num_headings: 8,
            kappa_max,
            primitive_lengths: vec![bin / kappa_max],
            ..LatticeConfig::default()
        };
        let set = generate_primitives(&cfg).unwrap();
        let p = set
            .from_heading(0)
            .find(|p| p.delta.dheading == 1 && p.shape != Shape::Straight && p.curvature > 1.5)
            .expect("left arc");
        assert!(
            (p.arc_length - bin / kappa_max).abs() < 5.0 * res,
            "{}",
            p.arc_length
        );
        assert!(p.curvature <= kappa_max);
    }

    #[test]
    fn curvature_bound_and_exact_endpoints() {
        let cfg = LatticeConfig::default();
        let set = generate_primitives(&cfg).unwrap();
        assert!(!set.primitives.is_empty());
        for p in &set.primitives {
            assert!(p.curvature.abs() <= cfg.kappa_max, "{p:?}");
            let last = p.sampled_poses.last().unwrap();
            assert!((last.x() - f64::from(p.delta.dx) * cfg.xy_resolution).abs() < 1e-12);
            assert!((last.y() - f64::from(p.delta.dy) * cfg.xy_resolution).abs() < 1e-12);
            assert_eq!(
                last.theta(),
                Pose2D::new(0.0, 0.0, set.headings[p.end_heading]).theta()
            );
            for w in p.sampled_poses.windows(2) {
                let d = w[0].position().distance(&w[1].position());
                assert!(d <= cfg.xy_resolution + 1e-12);
            }
            // Poses interior to the fit agree with the pinned endpoint.
            let n = p.sampled_poses.len();
            if n > 2 {
                let a = p.sampled_poses[n - 2];
                let b = p.sampled_poses[n - 1];
                assert!(a.position().distance(&b.position()) < cfg.xy_resolution);
            }
        }
    }

    #[test]
    fn closed_under_quarter_rotation() {
        let set = generate_primitives(&LatticeConfig::default()).unwrap();
        let n = set.num_headings() as i32;
        let key = |p: &MotionPrimitive| {
            (
                p.start_heading as i32,
                p.delta,
                p.reverse,
                (p.curvature * 1e9).round() as i64,
                (p.arc_length * 1e9).round() as i64,
            )
        };
        let original: BTreeSet<_> = set.primitives.iter().map(key).collect();
        let rotated: BTreeSet<_> = set
            .primitives
            .iter()
            .map(|p| {
                let (dx, dy) = rotate_quarter_int((p.delta.dx, p.delta.dy), 1);
                (
                    (p.start_heading as i32 + n / 4) % n,
                    LatticeDelta {
                        dx,
                        dy,
                        dheading: p.delta.dheading,
                    },
                    p.reverse,
                    (p.curvature * 1e9).round() as i64,
                    (p.arc_length * 1e9).round() as i64,
                )
            })
            .collect();
        assert_eq!(original, rotated);
    }

    #[test]
    fn reverse_only_when_allowed() {
        let fwd = generate_primitives(&LatticeConfig::default()).unwrap();
        assert!(fwd.primitives.iter().all(|p| !p.reverse));
        let both = generate_primitives(&LatticeConfig {
            allow_reverse: true,
            ..LatticeConfig::default()
        })
        .unwrap();
        let rev: Vec<_> = both.primitives.iter().filter(|p| p.reverse).collect();
        assert_eq!(rev.len(), fwd.primitives.len());
        for p in rev {
            let h = both.headings[p.start_heading];
            let d = &p.sampled_poses[1];
            // Moving against the heading.
            assert!(d.x() * h.cos() + d.y() * h.sin() < 0.0);
            assert!(
                (p.cost
                    - 5.0
                        * fwd
                            .primitives
                            .iter()
                            .find(|q| q.delta == p.delta
                                && q.start_heading == (p.start_heading + 8) % 16)
                            .unwrap()
                            .cost)
                    .abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn primset_round_trip() {
        let cfg = LatticeConfig {
            allow_reverse: true,
            ..LatticeConfig::default()
        };
        let set = generate_primitives(&cfg).unwrap();
        let text = write_primset(&set);
        let back = read_primset(&text, &cfg).unwrap();
        assert_eq!(back.primitives, set.primitives);
        assert_eq!(write_primset(&back), text);
    }

    #[test]
    fn primset_rejects_mismatch() {
        let cfg = LatticeConfig::default();
        let text = write_primset(&generate_primitives(&cfg).unwrap());
        let other = LatticeConfig {
            xy_resolution: 0.05,
            ..cfg.clone()
        };
        assert!(read_primset(&text, &other).is_err());
        assert!(read_primset("primset v0\n", &cfg).is_err());
        let tampered = text.replacen(" S 0 ", " S 1 ", 1);
        // A reverse version of a forward record has a different cost.
        assert!(read_primset(&tampered, &cfg).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = LatticeConfig {
            num_headings: 10,
            ..LatticeConfig::default()
        };
        assert!(matches!(
            generate_primitives(&cfg),
            Err(PlanError::Config(_))
        ));
    }
}
