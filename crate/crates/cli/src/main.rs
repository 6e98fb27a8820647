use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use trailernav_core::cover::{build_cover, save_cover};
use trailernav_core::experiments::{
    make_loop_course, make_single_corner, run_batch, write_results, Scenario,
};
use trailernav_core::grid::{load_grid, save_grid, OccupancyGrid, Pose2D};
use trailernav_core::kinematics::{TrailerState, VehicleParams};
use trailernav_core::lattice::{plan, GoalTolerance, LatticeConfig, PlanError};
use trailernav_core::sim::{trajectory_csv, SimConfig, SimWorld, Simulator};
use trailernav_core::tracker::TrackerConfig;

#[derive(Parser)]
#[command(
    name = "trailernav",
    about = "Planning and simulation for an on-axle tractor-trailer robot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Loop,
    Corner,
}

#[derive(Subcommand)]
enum Command {
    /// Write an experiment course map and its waypoints.
    GenMap {
        #[arg(long, value_enum)]
        layout: LayoutArg,
        /// Corridor width, meters.
        #[arg(long)]
        width: f64,
        /// Interior side of the outer wall, meters.
        #[arg(long, default_value_t = 10.0)]
        length: f64,
        /// Map file; waypoints go to `<out>.waypoints.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan a lattice path for the trailer.
    Plan {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        start: Pose2D,
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        goal: Pose2D,
        #[arg(long, default_value_t = 0.2)]
        tol_xy: f64,
        #[arg(long, default_value_t = 0.2)]
        tol_theta: f64,
        /// Dense path CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drive the closed loop through one or more targets.
    Simulate {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        start: Pose2D,
        /// Repeat for a target sequence.
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true, required = true)]
        goal: Vec<Pose2D>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for one trajectory CSV per target.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario batch and write the results tree.
    Experiment {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the available cores.
        #[arg(long, env = "TRAILERNAV_THREADS")]
        parallel: Option<usize>,
    },
    /// Decompose a map's free space into rectangles.
    Cover {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the version.
    Version,
}

/// 1 is a domain failure, 2 a usage or input error.
enum Failure {
    Domain(anyhow::Error),
    Usage(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn parse_pose(s: &str) -> Result<Pose2D, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|f| f.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("expected x,y,theta: {e}"))?;
    match v[..] {
        [x, y, th] if v.iter().all(|c| c.is_finite()) => Ok(Pose2D::new(x, y, th)),
        _ => Err("expected three finite numbers x,y,theta".into()),
    }
}

fn read_map(path: &Path) -> anyhow::Result<OccupancyGrid> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_grid(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".waypoints.csv");
    PathBuf::from(name)
}

fn gen_map(layout: LayoutArg, width: f64, length: f64, out: &Path) -> Outcome {
    let course = match layout {
        LayoutArg::Loop => make_loop_course(width, length),
        LayoutArg::Corner => make_single_corner(width, length),
    }?;
    let mut wp = String::from("name,x,y,theta\n");
    for (k, p) in course.waypoints.iter().enumerate() {
        let _ = writeln!(wp, "P{k},{},{},{}", p.x(), p.y(), p.theta());
    }
    write(out, &save_grid(&course.grid))?;
    write(&sidecar(out), &wp)?;
    println!(
        "map {} ({} x {} cells)",
        out.display(),
        course.grid.width(),
        course.grid.height()
    );
    println!("waypoints {}", course.waypoints.len());
    Ok(())
}

fn plan_cmd(
    map: &Path,
    start: Pose2D,
    goal: Pose2D,
    tol: GoalTolerance,
    out: Option<&Path>,
) -> Outcome {
    if !(tol.xy > 0.0 && tol.theta > 0.0) {
        return Err(Failure::Usage(anyhow!("tolerances must be > 0")));
    }
    let grid = read_map(map)?;
    let fp = VehicleParams::default().trailer_footprint;
    let path = match plan(&grid, &start, &goal, &fp, &LatticeConfig::default(), &tol) {
        Ok(Some(p)) => p,
        Ok(None) => return Err(Failure::Domain(anyhow!("no path to the goal region"))),
        Err(e @ (PlanError::InvalidStart | PlanError::GoalOutOfBounds)) => {
            return Err(Failure::Domain(e.into()))
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(out) = out {
        let mut csv = String::from("x,y,theta\n");
        for p in &path.poses {
            let _ = writeln!(csv, "{},{},{}", p.x(), p.y(), p.theta());
        }
        write(out, &csv)?;
    }
    println!("cost {}", path.total_cost);
    println!("length {}", path.length);
    println!("poses {}", path.poses.len());
    Ok(())
}

fn simulate(map: &Path, start: Pose2D, goals: &[Pose2D], seed: u64, out: Option<&Path>) -> Outcome {
    let grid = read_map(map)?;
    let cfg = SimConfig::default();
    let world = SimWorld::new(Arc::new(grid), cfg.dt, seed);
    let mut sim = Simulator::new(
        world,
        VehicleParams::default(),
        &LatticeConfig::default(),
        TrackerConfig::default(),
        cfg,
    )?;
    let results = sim.run_sequence(TrailerState::new(start, 0.0), goals);
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (k, r) in results.iter().enumerate() {
            write(
                &dir.join(format!("{k}.csv")),
                &trajectory_csv(&r.trajectory),
            )?;
        }
    }
    println!("target,reached,duration,abort_reason,replans");
    for (k, r) in results.iter().enumerate() {
        let reason = r.abort_reason.map_or("none", |a| a.as_str());
        println!(
            "{k},{},{},{reason},{}",
            u8::from(r.reached),
            r.duration,
            r.replans
        );
    }
    let reached = results.iter().filter(|r| r.reached).count();
    if reached < goals.len() {
        return Err(Failure::Domain(anyhow!(
            "{reached} of {} targets reached",
            goals.len()
        )));
    }
    Ok(())
}

fn experiment(scenario: &Path, out: &Path, parallel: Option<usize>) -> Outcome {
    let text =
        fs::read_to_string(scenario).with_context(|| format!("reading {}", scenario.display()))?;
    let sc = Scenario::from_toml(&text)?;
    let threads = match parallel {
        Some(0) => return Err(Failure::Usage(anyhow!("--parallel must be >= 1"))),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let batch = run_batch(&sc, threads)?;
    write_results(out, &sc, &batch).map_err(|e| Failure::Domain(e.into()))?;
    for m in &batch.metrics.per_width {
        println!(
            "width {:.2}: {}/{} targets reached, mean {:.2} s",
            m.width, m.targets_reached, m.targets_scheduled, m.mean_time_per_target
        );
    }
    Ok(())
}

fn cover(map: &Path, out: &Path) -> Outcome {
    let grid = read_map(map)?;
    let c = build_cover(&grid);
    write(out, &save_cover(&c))?;
    let free = grid.iter_cells().filter(|(_, occ)| !occ).count();
    println!("rectangles {} free_cells {free}", c.rects.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenMap {
            layout,
            width,
            length,
            out,
        } => gen_map(layout, width, length, &out),
        Command::Plan {
            map,
            start,
            goal,
            tol_xy,
            tol_theta,
            out,
        } => plan_cmd(
            &map,
            start,
            goal,
            GoalTolerance {
                xy: tol_xy,
                theta: tol_theta,
            },
            out.as_deref(),
        ),
        Command::Simulate {
            map,
            start,
            goal,
            seed,
            out,
        } => simulate(&map, start, &goal, seed, out.as_deref()),
        Command::Experiment {
            scenario,
            out,
            parallel,
        } => experiment(&scenario, &out, parallel),
        Command::Cover { map, out } => cover(&map, &out),
        Command::Version => {
            println!("trailernav {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
