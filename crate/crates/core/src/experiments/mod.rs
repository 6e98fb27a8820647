//! Corridor-width experiments: scenario files, batch execution, metrics and
//! the results directory.

pub mod layouts;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Pose2D;
use crate::kinematics::{TrailerState, VehicleParams};
use crate::lattice::{generate_primitives, GoalTolerance, LatticeConfig, Planner};
use crate::sim::{
    trajectory_csv, AbortReason, SimConfig, SimError, SimWorld, Simulator, TargetResult,
};
use crate::tracker::TrackerConfig;

pub use layouts::{make_loop_course, make_single_corner, Course};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("corridor width {0} m outside the valid range [1.0, 3.0] m")]
    Width(f64),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Square loop, P0 -> P1 -> P2 -> P3 -> P0 per run.
    LoopCourse,
    /// One critical corner, alternating P0 and P1 starting from P1.
    SingleCorner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub layout: Layout,
    /// Corridor widths to sweep, meters.
    pub widths: Vec<f64>,
    /// Interior side of the outer wall, meters.
    pub corridor_length: f64,
    pub runs: usize,
    /// Single corner only: number of P0/P1 round trips per run.
    pub round_trips: usize,
    /// Per-run seeds; when shorter than `runs`, missing seeds are
    /// `base_seed + run`.
    pub seeds: Vec<u64>,
    pub base_seed: u64,
    /// Uniform start-pose jitter, meters and radians.
    pub jitter_xy: f64,
    pub jitter_theta: f64,
    pub tolerances: GoalTolerance,
    pub vehicle: VehicleParams,
    pub lattice: LatticeConfig,
    pub tracker: TrackerConfig,
    pub sim: SimConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            layout: Layout::LoopCourse,
            widths: vec![2.0, 1.9, 1.8, 1.7, 1.6, 1.5, 1.4],
            corridor_length: 10.0,
            runs: 25,
            round_trips: 5,
            seeds: Vec::new(),
            base_seed: 1,
            jitter_xy: 0.02,
            jitter_theta: 0.02,
            tolerances: GoalTolerance::default(),
            vehicle: VehicleParams::default(),
            lattice: LatticeConfig::default(),
            tracker: TrackerConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let sc: Scenario =
            toml::from_str(text).map_err(|e| ExperimentError::Scenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Fully resolved configuration, every field explicit.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Scenario(m));
        if self.widths.is_empty() {
            return bad("widths must not be empty".into());
        }
        for &w in &self.widths {
            if !(layouts::MIN_WIDTH..=layouts::MAX_WIDTH).contains(&w) {
                return Err(ExperimentError::Width(w));
            }
        }
        if self.runs == 0 {
            return bad("runs must be >= 1".into());
        }
        if self.layout == Layout::SingleCorner && self.round_trips == 0 {
            return bad("round_trips must be >= 1".into());
        }
        if !(self.jitter_xy >= 0.0 && self.jitter_theta >= 0.0) {
            return bad("jitter must be >= 0".into());
        }
        if !(self.tolerances.xy > 0.0 && self.tolerances.theta > 0.0) {
            return bad("tolerances must be > 0".into());
        }
        self.vehicle
            .validate()
            .map_err(|e| ExperimentError::Scenario(e.to_string()))?;
        self.lattice
            .validate()
            .map_err(|e| ExperimentError::Scenario(e.to_string()))?;
        self.tracker
            .validate(&self.vehicle)
            .map_err(ExperimentError::Scenario)?;
        // Rejects bad lengths before any work starts.
        self.course(self.widths[0])?;
        Ok(())
    }

    pub fn seed(&self, run: usize) -> u64 {
        self.seeds
            .get(run)
            .copied()
            .unwrap_or(self.base_seed.wrapping_add(run as u64))
    }

    pub fn course(&self, width: f64) -> Result<Course, ExperimentError> {
        match self.layout {
            Layout::LoopCourse => make_loop_course(width, self.corridor_length),
            Layout::SingleCorner => make_single_corner(width, self.corridor_length),
        }
    }

    /// Start pose and target sequence of one run, before jitter.
    pub fn protocol(&self, course: &Course) -> (Pose2D, Vec<Pose2D>) {
        let w = &course.waypoints;
        match self.layout {
            Layout::LoopCourse => (w[0], vec![w[1], w[2], w[3], w[0]]),
            Layout::SingleCorner => {
                let targets = (0..self.round_trips).flat_map(|_| [w[0], w[1]]).collect();
                (w[1], targets)
            }
        }
    }

    pub fn targets_per_run(&self) -> usize {
        match self.layout {
            Layout::LoopCourse => 4,
            Layout::SingleCorner => 2 * self.round_trips,
        }
    }

    fn jittered(&self, start: Pose2D, seed: u64) -> Pose2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = |a: f64| {
            if a > 0.0 {
                rng.random_range(-a..=a)
            } else {
                0.0
            }
        };
        let (dx, dy, dth) = (u(self.jitter_xy), u(self.jitter_xy), u(self.jitter_theta));
        Pose2D::new(start.x() + dx, start.y() + dy, start.theta() + dth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub width: f64,
    pub run: usize,
    pub seed: u64,
    pub start: Pose2D,
    pub targets: Vec<TargetResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidthMetrics {
    pub width: f64,
    pub runs: usize,
    /// Targets the protocol schedules, `runs * targets_per_run`.
    pub targets_scheduled: usize,
    /// Targets actually driven to; fewer when safety aborts end runs early.
    pub targets_attempted: usize,
    pub targets_reached: usize,
    /// `targets_reached / targets_scheduled`.
    pub success_rate: f64,
    /// Mean duration over reached targets; NaN when none was reached.
    pub mean_time_per_target: f64,
    pub aborts_by_reason: BTreeMap<AbortReason, usize>,
    /// Reached count per position in the target sequence.
    pub reached_by_target: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchMetrics {
    pub per_width: Vec<WidthMetrics>,
}

impl BatchMetrics {
    pub fn width(&self, w: f64) -> Option<&WidthMetrics> {
        self.per_width.iter().find(|m| (m.width - w).abs() < 1e-9)
    }
}

/// Minimal per-target record, enough to recompute every metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetRecord {
    pub reached: bool,
    pub duration: f64,
    pub abort_reason: Option<AbortReason>,
}

impl From<&TargetResult> for TargetRecord {
    fn from(r: &TargetResult) -> Self {
        Self {
            reached: r.reached,
            duration: r.duration,
            abort_reason: r.abort_reason,
        }
    }
}

/// Aggregates `(width, run, records)` triples sorted by width then run.
pub fn compute_metrics(
    widths: &[f64],
    targets_per_run: usize,
    runs: &[(f64, usize, Vec<TargetRecord>)],
) -> BatchMetrics {
    let per_width = widths
        .iter()
        .map(|&w| {
            let mine: Vec<_> = runs.iter().filter(|r| r.0 == w).collect();
            let mut reached = 0;
            let mut attempted = 0;
            let mut time = 0.0;
            let mut aborts = BTreeMap::new();
            let mut by_target = vec![0; targets_per_run];
            for (_, _, recs) in &mine {
                for (k, r) in recs.iter().enumerate() {
                    attempted += 1;
                    if r.reached {
                        reached += 1;
                        time += r.duration;
                        if let Some(slot) = by_target.get_mut(k) {
                            *slot += 1;
                        }
                    }
                    if let Some(a) = r.abort_reason {
                        *aborts.entry(a).or_insert(0) += 1;
                    }
                }
            }
            let scheduled = mine.len() * targets_per_run;
            WidthMetrics {
                width: w,
                runs: mine.len(),
                targets_scheduled: scheduled,
                targets_attempted: attempted,
                targets_reached: reached,
                success_rate: if scheduled > 0 {
                    reached as f64 / scheduled as f64
                } else {
                    0.0
                },
                mean_time_per_target: if reached > 0 {
                    time / reached as f64
                } else {
                    f64::NAN
                },
                aborts_by_reason: aborts,
                reached_by_target: by_target,
            }
        })
        .collect();
    BatchMetrics { per_width }
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub metrics: BatchMetrics,
    /// Sorted by width (scenario order) then run index.
    pub runs: Vec<RunResult>,
}

fn thread_pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool")
}

/// Runs every width and run of the scenario on `threads` workers. Results do
/// not depend on the thread count.
pub fn run_batch(sc: &Scenario, threads: usize) -> Result<BatchOutput, ExperimentError> {
    sc.validate()?;
    let pool = thread_pool(threads);
    let set = Arc::new(generate_primitives(&sc.lattice).map_err(SimError::from)?);
    let mut sim_cfg = sc.sim;
    sim_cfg.goal_tol = sc.tolerances;
    let mut tracker_cfg = sc.tracker;
    tracker_cfg.goal_tol = sc.tolerances;

    let courses: Vec<(Course, Arc<Planner>)> = pool.install(|| {
        sc.widths
            .par_iter()
            .map(|&w| {
                let course = sc.course(w)?;
                let planner = Planner::new(
                    &course.grid,
                    &sc.vehicle.trailer_footprint,
                    Arc::clone(&set),
                )
                .map_err(SimError::from)?;
                Ok((course, Arc::new(planner)))
            })
            .collect::<Result<_, ExperimentError>>()
    })?;

    let jobs: Vec<(usize, usize)> = (0..sc.widths.len())
        .flat_map(|wi| (0..sc.runs).map(move |r| (wi, r)))
        .collect();
    let runs: Vec<RunResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(wi, run)| {
                let (course, planner) = &courses[wi];
                let seed = sc.seed(run);
                let (start, targets) = sc.protocol(course);
                let start = sc.jittered(start, seed);
                let world = SimWorld::new(Arc::new(course.grid.clone()), sim_cfg.dt, seed);
                let mut sim = Simulator::with_planner(
                    world,
                    sc.vehicle,
                    Arc::clone(planner),
                    tracker_cfg,
                    sim_cfg,
                )?;
                let results = sim.run_sequence(TrailerState::new(start, 0.0), &targets);
                Ok(RunResult {
                    width: sc.widths[wi],
                    run,
                    seed,
                    start,
                    targets: results,
                })
            })
            .collect::<Result<_, ExperimentError>>()
    })?;

    let records: Vec<_> = runs
        .iter()
        .map(|r| {
            (
                r.width,
                r.run,
                r.targets.iter().map(TargetRecord::from).collect(),
            )
        })
        .collect();
    let metrics = compute_metrics(&sc.widths, sc.targets_per_run(), &records);
    Ok(BatchOutput { metrics, runs })
}

/// Directory name used for a width in the results tree.
pub fn width_dir(w: f64) -> String {
    format!("{w:.2}")
}

pub fn metrics_csv(m: &BatchMetrics) -> String {
    let mut out = String::from(
        "width,runs,targets_scheduled,targets_attempted,targets_reached,success_rate,mean_time_per_target",
    );
    for a in AbortReason::ALL {
        let _ = write!(out, ",aborts_{}", a.as_str());
    }
    out.push_str(",reached_by_target\n");
    for w in &m.per_width {
        // Empty when no target was reached.
        let mean = if w.mean_time_per_target.is_nan() {
            String::new()
        } else {
            w.mean_time_per_target.to_string()
        };
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            w.width,
            w.runs,
            w.targets_scheduled,
            w.targets_attempted,
            w.targets_reached,
            w.success_rate,
            mean
        );
        for a in AbortReason::ALL {
            let _ = write!(out, ",{}", w.aborts_by_reason.get(&a).copied().unwrap_or(0));
        }
        let by: Vec<String> = w.reached_by_target.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(out, ",{}", by.join(";"));
    }
    out
}

const RESULTS_HEADER: &str = "target,x,y,theta,reached,duration,abort_reason,replans";

fn results_csv(r: &RunResult) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for (k, t) in r.targets.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            k,
            t.target.x(),
            t.target.y(),
            t.target.theta(),
            u8::from(t.reached),
            t.duration,
            t.abort_reason.map_or("none", AbortReason::as_str),
            t.replans
        );
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Writes `metrics.csv`, `scenario.lock` and
/// `runs/<width>/<run>/{results.csv, <target>.csv}` under `dir`.
pub fn write_results(dir: &Path, sc: &Scenario, out: &BatchOutput) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for r in &out.runs {
        let run_dir = dir
            .join("runs")
            .join(width_dir(r.width))
            .join(format!("{:03}", r.run));
        fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
        write_file(&run_dir.join("results.csv"), &results_csv(r))?;
        for (k, t) in r.targets.iter().enumerate() {
            write_file(
                &run_dir.join(format!("{k}.csv")),
                &trajectory_csv(&t.trajectory),
            )?;
        }
    }
    write_file(&dir.join("scenario.lock"), &sc.to_toml())?;
    write_file(&dir.join("metrics.csv"), &metrics_csv(&out.metrics))
}

/// Rebuilds the metrics from the per-run `results.csv` files under `dir`.
pub fn recompute_metrics(dir: &Path, sc: &Scenario) -> Result<BatchMetrics, ExperimentError> {
    let bad = |m: String| ExperimentError::Scenario(m);
    let mut records = Vec::new();
    for &w in &sc.widths {
        for run in 0..sc.runs {
            let path = dir
                .join("runs")
                .join(width_dir(w))
                .join(format!("{run:03}"))
                .join("results.csv");
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let mut recs = Vec::new();
            for line in text.lines().skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 8 {
                    return Err(bad(format!("{}: malformed row", path.display())));
                }
                let abort_reason = match f[6] {
                    "none" => None,
                    s => Some(
                        AbortReason::ALL
                            .into_iter()
                            .find(|a| a.as_str() == s)
                            .ok_or_else(|| bad(format!("unknown abort reason {s}")))?,
                    ),
                };
                recs.push(TargetRecord {
                    reached: f[4] == "1",
                    duration: f[5]
                        .parse()
                        .map_err(|_| bad(format!("{}: bad duration", path.display())))?,
                    abort_reason,
                });
            }
            records.push((w, run, recs));
        }
    }
    Ok(compute_metrics(&sc.widths, sc.targets_per_run(), &records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_defaults_round_trip() {
        let sc = Scenario::default();
        let text = sc.to_toml();
        assert_eq!(Scenario::from_toml(&text).unwrap(), sc);
        let partial =
            Scenario::from_toml("layout = \"single_corner\"\nwidths = [1.5]\nruns = 2\n").unwrap();
        assert_eq!(partial.layout, Layout::SingleCorner);
        assert_eq!(partial.lattice, LatticeConfig::default());
    }

    #[test]
    fn scenario_rejects_unknown_and_invalid() {
        assert!(Scenario::from_toml("bogus = 1\n").is_err());
        assert!(matches!(
            Scenario::from_toml("widths = [0.5]\n"),
            Err(ExperimentError::Width(_))
        ));
        assert!(Scenario::from_toml("runs = 0\n").is_err());
    }

    #[test]
    fn protocols() {
        let sc = Scenario::default();
        let c = sc.course(2.0).unwrap();
        let (start, targets) = sc.protocol(&c);
        assert_eq!(start, c.waypoints[0]);
        assert_eq!(
            targets,
            vec![
                c.waypoints[1],
                c.waypoints[2],
                c.waypoints[3],
                c.waypoints[0]
            ]
        );
        let sc = Scenario {
            layout: Layout::SingleCorner,
            round_trips: 2,
            ..Scenario::default()
        };
        let c = sc.course(1.5).unwrap();
        let (start, targets) = sc.protocol(&c);
        assert_eq!(start, c.waypoints[1]);
        assert_eq!(targets.len(), 4);
        assert_eq!(targets[0], c.waypoints[0]);
    }

    #[test]
    fn jitter_is_bounded_and_seeded() {
        let sc = Scenario::default();
        let p = Pose2D::new(5.0, 1.0, 0.0);
        let a = sc.jittered(p, 3);
        assert_eq!(a, sc.jittered(p, 3));
        assert_ne!(a, sc.jittered(p, 4));
        assert!(
            (a.x() - 5.0).abs() <= 0.02 && (a.y() - 1.0).abs() <= 0.02 && a.theta().abs() <= 0.02
        );
    }

    #[test]
    fn metrics_counting() {
        let ok = TargetRecord {
            reached: true,
            duration: 10.0,
            abort_reason: None,
        };
        let stuck = TargetRecord {
            reached: false,
            duration: 3.0,
            abort_reason: Some(AbortReason::TrackerStuck),
        };
        let safety = TargetRecord {
            reached: false,
            duration: 1.0,
            abort_reason: Some(AbortReason::SafetyZone),
        };
        let runs = vec![
            (1.5, 0, vec![ok, stuck, ok, ok]),
            (1.5, 1, vec![ok, safety]),
        ];
        let m = compute_metrics(&[1.5], 4, &runs);
        let w = &m.per_width[0];
        assert_eq!(
            (w.targets_scheduled, w.targets_attempted, w.targets_reached),
            (8, 6, 4)
        );
        assert_eq!(w.success_rate, 0.5);
        assert_eq!(w.mean_time_per_target, 10.0);
        assert_eq!(w.reached_by_target, vec![2, 0, 1, 1]);
        assert_eq!(w.aborts_by_reason[&AbortReason::SafetyZone], 1);
        let csv = metrics_csv(&m);
        assert!(
            csv.ends_with("1.5,2,8,6,4,0.5,10,1,1,0,0,2;0;1;1\n"),
            "{csv}"
        );
    }
}
