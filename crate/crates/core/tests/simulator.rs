mod oracles;

use std::sync::Arc;
use std::time::Instant;

use oracles::coverage_verifier;
use trailernav_core::cover::{build_cover, filter_points};
use trailernav_core::experiments::make_loop_course;
use trailernav_core::grid::*;
use trailernav_core::hitch::normalize_angle;
use trailernav_core::kinematics::{TrailerState, VehicleParams};
use trailernav_core::lattice::LatticeConfig;
use trailernav_core::sim::*;
use trailernav_core::tracker::TrackerConfig;

fn open_grid() -> OccupancyGrid {
    OccupancyGrid::new(0.05, Point2::new(0.0, 0.0), 200, 200).unwrap()
}

fn simulator(grid: OccupancyGrid, obstacles: Vec<DynamicObstacle>) -> Simulator {
    let world = SimWorld::new(Arc::new(grid), 0.02, 11).with_obstacles(obstacles);
    Simulator::new(
        world,
        VehicleParams::default(),
        &LatticeConfig::default(),
        TrackerConfig::default(),
        SimConfig::default(),
    )
    .unwrap()
}

fn at(x: f64, y: f64, th: f64) -> TrailerState {
    TrailerState::new(Pose2D::new(x, y, th), 0.0)
}

/// Post-hoc checks every trajectory must satisfy.
fn check_result(r: &TargetResult, p: &VehicleParams, dt: f64) {
    for w in r.trajectory.windows(2) {
        let moved = w[0].tractor.distance(&w[1].tractor);
        assert!(
            moved <= p.v_max * dt * (1.0 + 1e-9),
            "tractor jumped {moved}"
        );
        assert!(w[1].t > w[0].t);
    }
    if r.reached {
        assert_eq!(r.abort_reason, None);
        let end = r.trajectory.last().unwrap().state.trailer_pose;
        assert!(end.position().distance(&r.target.position()) <= 0.5);
        assert!(normalize_angle(end.theta() - r.target.theta()).abs() <= 0.2);
    } else {
        assert!(r.abort_reason.is_some());
    }
}

#[test]
fn straight_target_reached_in_expected_time() {
    let mut sim = simulator(open_grid(), Vec::new());
    let (r, s) = sim.run_to_target(at(2.0, 5.0, 0.0), Pose2D::new(7.0, 5.0, 0.0));
    assert!(r.reached, "{:?}", r.abort_reason);
    let nominal = 5.0 / 0.6;
    assert!(
        (r.duration - nominal).abs() <= 0.3 * nominal,
        "{}",
        r.duration
    );
    assert_eq!(s, r.trajectory.last().unwrap().state);
    check_result(&r, sim.params(), 0.02);
}

#[test]
fn occupied_goal_region_fails() {
    let mut grid = open_grid();
    for y in 80..120 {
        for x in 130..170 {
            grid.set_occupied(CellIndex::new(x, y), true);
        }
    }
    let mut sim = simulator(grid, Vec::new());
    let (r, _) = sim.run_to_target(at(2.0, 5.0, 0.0), Pose2D::new(7.5, 5.0, 0.0));
    assert!(!r.reached);
    assert!(matches!(
        r.abort_reason,
        Some(AbortReason::TrackerStuck | AbortReason::NoPath | AbortReason::Timeout)
    ));
    check_result(&r, sim.params(), 0.02);
}

#[test]
fn obstacle_on_tractor_aborts() {
    let target = Pose2D::new(8.0, 5.0, 0.0);
    let mut clean = simulator(open_grid(), Vec::new());
    let (free_run, _) = clean.run_to_target(at(2.0, 5.0, 0.0), target);
    let k = free_run.trajectory.iter().position(|s| s.t >= 3.0).unwrap();
    let tractor = free_run.trajectory[k].tractor;
    let drop = DynamicObstacle {
        center: (tractor.x, tractor.y),
        radius: 0.1,
        velocity: (0.0, 0.0),
        appear_at: free_run.trajectory[k].t,
    };
    let mut sim = simulator(open_grid(), vec![drop]);
    let (r, _) = sim.run_to_target(at(2.0, 5.0, 0.0), target);
    assert_eq!(r.abort_reason, Some(AbortReason::SafetyZone));
    assert!((r.duration - free_run.trajectory[k].t).abs() < 1e-9);
    assert_eq!(&r.trajectory[..k], &free_run.trajectory[..k]);
}

#[test]
fn sequence_protocol() {
    let course = make_loop_course(2.0, 10.0).unwrap();
    let wp = course.waypoints.clone();
    let s0 = TrailerState::new(wp[0], 0.0);

    let mut sim = simulator(course.grid.clone(), Vec::new());
    let all = sim.run_sequence(s0, &[wp[1], wp[2], wp[3], wp[0]]);
    assert_eq!(all.iter().filter(|r| r.reached).count(), 4);

    // An unreachable second target fails; the run continues.
    let inside_block = Pose2D::new(5.2, 5.2, 0.0);
    let mut sim = simulator(course.grid.clone(), Vec::new());
    let res = sim.run_sequence(s0, &[wp[1], inside_block, wp[3], wp[0]]);
    assert_eq!(res.len(), 4);
    assert!(res[0].reached && !res[1].reached);
    assert!(
        res[2].reached && res[3].reached,
        "{:?}",
        res.iter().map(|r| r.abort_reason).collect::<Vec<_>>()
    );
    for r in &res {
        check_result(r, sim.params(), 0.02);
    }

    // A safety abort on the second leg ends the run.
    let t1 = all[0].duration;
    let leg2 = &all[1].trajectory;
    let k = leg2.len() / 2;
    let hit = DynamicObstacle {
        center: (leg2[k].tractor.x, leg2[k].tractor.y),
        radius: 0.1,
        velocity: (0.0, 0.0),
        appear_at: leg2[k].t,
    };
    assert!(leg2[k].t > t1);
    let mut sim = simulator(course.grid, vec![hit]);
    let res = sim.run_sequence(s0, &[wp[1], wp[2], wp[3], wp[0]]);
    assert_eq!(res.len(), 2);
    assert_eq!(res[1].abort_reason, Some(AbortReason::SafetyZone));
}

#[test]
fn runs_are_bit_identical() {
    let course = make_loop_course(1.6, 10.0).unwrap();
    let wp = course.waypoints.clone();
    let run = || {
        let mut sim = simulator(course.grid.clone(), Vec::new());
        sim.run_sequence(
            TrailerState::new(
                Pose2D::new(wp[0].x() + 0.013, wp[0].y() - 0.007, 0.011),
                0.0,
            ),
            &[wp[1], wp[2]],
        )
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    let csv_a: Vec<String> = a.iter().map(|r| trajectory_csv(&r.trajectory)).collect();
    let csv_b: Vec<String> = b.iter().map(|r| trajectory_csv(&r.trajectory)).collect();
    assert_eq!(csv_a, csv_b);
}

#[test]
fn trajectory_csv_round_trips() {
    let mut sim = simulator(open_grid(), Vec::new());
    let (r, _) = sim.run_to_target(at(2.0, 5.0, 0.1), Pose2D::new(6.0, 6.0, 0.4));
    let csv = trajectory_csv(&r.trajectory);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(TRAJECTORY_HEADER));
    assert!(!csv.contains('\r') && csv.ends_with('\n'));
    for (line, s) in lines.zip(&r.trajectory) {
        let v: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        let p = s.state.trailer_pose;
        let want = [
            s.t,
            p.x(),
            p.y(),
            p.theta(),
            s.state.delta,
            s.tractor.x,
            s.tractor.y,
            s.cmd.v,
            s.cmd.omega,
        ];
        assert_eq!(
            v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            want.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
    assert_eq!(csv.lines().count(), r.trajectory.len() + 1);
}

#[test]
fn sensing_contract() {
    let course = make_loop_course(2.0, 10.0).unwrap();
    let grid = course.grid.clone();
    let s = TrailerState::new(course.waypoints[0], 0.0);
    let p = VehicleParams::default();
    let empty = SimWorld::new(Arc::new(grid.clone()), 0.02, 3);
    assert!(sense_points(&empty, &s, &p, 0.0).is_empty());

    let tractor = trailernav_core::kinematics::tractor_position(&s, &p);
    let ob = DynamicObstacle {
        center: (tractor.x + 1.5, tractor.y),
        radius: 0.25,
        velocity: (0.0, 0.0),
        appear_at: 0.0,
    };
    let world = SimWorld::new(Arc::new(grid.clone()), 0.02, 3).with_obstacles(vec![ob]);
    let pts = sense_points(&world, &s, &p, 3.0);
    let on_circle: Vec<_> = pts
        .iter()
        .filter(|q| ((q.x - ob.center.0).hypot(q.y - ob.center.1) - ob.radius).abs() <= 1e-9)
        .collect();
    assert!(on_circle.len() >= 8);
    assert_eq!(sense_points(&world, &s, &p, 3.0), pts);

    // The whitelist keeps the obstacle returns in the aisle and drops walls.
    let cover = build_cover(&grid);
    assert!(coverage_verifier("loop-2.0", &grid, &cover).pass);
    let kept = filter_points(&cover, &grid, &pts);
    let aisle: Vec<Point2> = pts
        .iter()
        .copied()
        .filter(|q| grid.world_to_cell(*q).is_some_and(|c| !grid.is_occupied(c)))
        .collect();
    assert_eq!(kept, aisle);
    assert_eq!(kept.len(), on_circle.len());
    assert!(pts.len() > kept.len());
}

#[test]
fn faster_than_real_time() {
    let course = make_loop_course(1.8, 10.0).unwrap();
    let wp = course.waypoints.clone();
    let mut sim = simulator(course.grid, Vec::new());
    let t = Instant::now();
    let res = sim.run_sequence(TrailerState::new(wp[0], 0.0), &[wp[1], wp[2], wp[3], wp[0]]);
    let wall = t.elapsed().as_secs_f64();
    let simulated: f64 = res.iter().map(|r| r.duration).sum();
    assert!(
        simulated >= 20.0 * wall,
        "simulated {simulated} s in {wall} s"
    );
}
