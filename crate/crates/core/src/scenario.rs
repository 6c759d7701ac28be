//! Driving-scenario presets: two dynamic relative trajectories (collision
//! avoidance and platooning) and two static location sets (state-of-the-art
//! comparison sweep and operational-range grid).
//!
//! Dynamic presets are parametric waypoint profiles blended with quintic
//! smoothsteps; headings follow the velocity direction (small-sideslip
//! Ackermann surrogate), so wheels roll along the path tangent. The ego
//! vehicle is the frame reference and keeps pose `(0, 0, 0)`; the target
//! pose is its rear-face center in that frame.

use crate::geometry::{normalize_angle, VehiclePose};
use serde::{Deserialize, Serialize};

/// Quintic smoothstep: 0 to 1 with zero first and second derivatives at
/// both ends; input clamped to [0, 1].
pub fn smoothstep5(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

/// One time sample of the relative scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t_s: f64,
    pub ego: VehiclePose,
    pub target: VehiclePose,
}

/// Time-ordered relative trajectory at a fixed sampling step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTrajectory {
    pub samples: Vec<TrajectorySample>,
    pub dt_s: f64,
}

impl ScenarioTrajectory {
    pub fn duration_s(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t_s)
    }

    /// Poses at an arbitrary time, linearly interpolated and clamped to the
    /// trajectory span.
    pub fn poses_at(&self, t: f64) -> (VehiclePose, VehiclePose) {
        let n = self.samples.len();
        if n == 1 || t <= self.samples[0].t_s {
            let s = self.samples[0];
            return (s.ego, s.target);
        }
        if t >= self.samples[n - 1].t_s {
            let s = self.samples[n - 1];
            return (s.ego, s.target);
        }
        let idx = ((t - self.samples[0].t_s) / self.dt_s) as usize;
        let idx = idx.min(n - 2);
        let (a, b) = (self.samples[idx], self.samples[idx + 1]);
        let w = ((t - a.t_s) / (b.t_s - a.t_s)).clamp(0.0, 1.0);
        let lerp_pose = |p: VehiclePose, q: VehiclePose| {
            VehiclePose::new(
                p.x + w * (q.x - p.x),
                p.y + w * (q.y - p.y),
                p.heading + w * normalize_angle(q.heading - p.heading),
            )
        };
        (lerp_pose(a.ego, b.ego), lerp_pose(a.target, b.target))
    }

    /// Largest |curvature| of the target path, 1/m, over samples at or
    /// above the given absolute speed.
    pub fn max_curvature(&self, ego_speed_mps: f64, min_speed_mps: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.samples.windows(2) {
            let dt = w[1].t_s - w[0].t_s;
            let vx = (w[1].target.x - w[0].target.x) / dt;
            let vy = (w[1].target.y - w[0].target.y) / dt + ego_speed_mps;
            let speed = vx.hypot(vy);
            if speed < min_speed_mps {
                continue;
            }
            let dpsi = normalize_angle(w[1].target.heading - w[0].target.heading);
            worst = worst.max((dpsi / dt / speed).abs());
        }
        worst
    }
}

/// Collision-avoidance preset: a leading target brakes hard while finishing
/// a lane change into the ego lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sm1Params {
    pub duration_s: f64,
    pub dt_s: f64,
    pub ego_speed_mps: f64,
    /// Longitudinal gap at t = 0, meters.
    pub initial_range_m: f64,
    /// Longitudinal gap at the end, meters.
    pub final_range_m: f64,
    /// Lane the target comes from (negative = left), meters.
    pub lane_offset_m: f64,
    /// Lane-change smoothstep window; starts before t = 0 so the maneuver
    /// is already underway (tail lights initially angled away).
    pub merge_start_s: f64,
    pub merge_end_s: f64,
}

impl Default for Sm1Params {
    fn default() -> Self {
        Self {
            duration_s: 1.0,
            dt_s: 1e-3,
            ego_speed_mps: 25.0,
            initial_range_m: 11.0,
            final_range_m: 3.5,
            lane_offset_m: -3.5,
            merge_start_s: -0.15,
            merge_end_s: 0.45,
        }
    }
}

/// Platooning preset: join from the left lane, hold the gap, exit right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sm2Params {
    pub duration_s: f64,
    pub dt_s: f64,
    pub ego_speed_mps: f64,
    /// Longitudinal gap before the ego closes up, meters.
    pub approach_range_m: f64,
    /// Steady platooning gap, meters.
    pub platoon_range_m: f64,
    /// Gap-closing completes at this time, seconds.
    pub approach_end_s: f64,
    pub join_lane_offset_m: f64,
    pub join_start_s: f64,
    pub join_end_s: f64,
    pub exit_lane_offset_m: f64,
    pub exit_start_s: f64,
    pub exit_end_s: f64,
}

impl Default for Sm2Params {
    fn default() -> Self {
        // Like the platooning figures this compresses formation, cruise and
        // dispersion into one second, so the maneuvers are sportier than
        // real lane changes. The exit completes just before the end: with
        // the tail straightened at full lateral offset and a tight gap, the
        // far TX leaves the 60-degree emission cone of both QRXs.
        Self {
            duration_s: 1.0,
            dt_s: 1e-3,
            ego_speed_mps: 20.0,
            approach_range_m: 4.0,
            platoon_range_m: 1.9,
            approach_end_s: 0.3,
            join_lane_offset_m: -3.5,
            join_start_s: -0.1,
            join_end_s: 0.4,
            exit_lane_offset_m: 3.5,
            exit_start_s: 0.55,
            exit_end_s: 0.98,
        }
    }
}

/// Static comparison sweep: parallel vehicles, lateral offset swept from
/// zero outward at a fixed longitudinal distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sm3Params {
    pub longitudinal_m: f64,
    pub max_lateral_m: f64,
    pub n_locations: usize,
}

impl Default for Sm3Params {
    fn default() -> Self {
        Self {
            longitudinal_m: 10.0,
            max_lateral_m: 3.5,
            n_locations: 8,
        }
    }
}

/// Operational-range grid over three lanes and the forward corridor, with a
/// set of target headings evaluated at every location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sm4Params {
    /// Lateral half-span around the ego bumper center, meters.
    pub lateral_half_span_m: f64,
    pub lateral_step_m: f64,
    pub min_range_m: f64,
    pub max_range_m: f64,
    pub range_step_m: f64,
    /// Target headings evaluated per location, degrees.
    pub headings_deg: Vec<f64>,
}

impl Default for Sm4Params {
    fn default() -> Self {
        Self {
            lateral_half_span_m: 3.0,
            lateral_step_m: 0.5,
            min_range_m: 1.0,
            max_range_m: 15.0,
            range_step_m: 0.5,
            // Ten headings spanning the orientations a platoon member or a
            // plausible collision threat can take.
            headings_deg: (0..10).map(|i| -36.0 + 8.0 * i as f64).collect(),
        }
    }
}

/// One static target location of the SM3 sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticLocation {
    pub target: VehiclePose,
    pub lateral_m: f64,
    pub range_m: f64,
}

/// One grid cell of the SM4 range characterization.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLocation {
    pub x_m: f64,
    pub y_m: f64,
    pub headings_rad: Vec<f64>,
}

/// Build the SM1 trajectory.
pub fn sm1_trajectory(p: &Sm1Params) -> Result<ScenarioTrajectory, ScenarioError> {
    if p.duration_s <= 0.0
        || p.dt_s <= 0.0
        || p.initial_range_m <= p.final_range_m
        || p.final_range_m <= 0.0
        || p.merge_end_s <= p.merge_start_s
    {
        return Err(ScenarioError::InvalidParams);
    }
    let lateral = |t: f64| {
        p.lane_offset_m
            * (1.0 - smoothstep5((t - p.merge_start_s) / (p.merge_end_s - p.merge_start_s)))
    };
    let longitudinal = |t: f64| {
        p.initial_range_m + (p.final_range_m - p.initial_range_m) * smoothstep5(t / p.duration_s)
    };
    build_relative_trajectory(p.duration_s, p.dt_s, p.ego_speed_mps, lateral, longitudinal)
}

/// Build the SM2 trajectory.
pub fn sm2_trajectory(p: &Sm2Params) -> Result<ScenarioTrajectory, ScenarioError> {
    if p.duration_s <= 0.0
        || p.dt_s <= 0.0
        || p.platoon_range_m <= 0.0
        || p.join_end_s <= p.join_start_s
        || p.exit_end_s <= p.exit_start_s
    {
        return Err(ScenarioError::InvalidParams);
    }
    let lateral = |t: f64| {
        p.join_lane_offset_m
            * (1.0 - smoothstep5((t - p.join_start_s) / (p.join_end_s - p.join_start_s)))
            + p.exit_lane_offset_m
                * smoothstep5((t - p.exit_start_s) / (p.exit_end_s - p.exit_start_s))
    };
    let longitudinal = |t: f64| {
        p.approach_range_m
            + (p.platoon_range_m - p.approach_range_m) * smoothstep5(t / p.approach_end_s)
    };
    build_relative_trajectory(p.duration_s, p.dt_s, p.ego_speed_mps, lateral, longitudinal)
}

/// Build the SM3 static location sweep (parallel headings).
pub fn sm3_locations(p: &Sm3Params) -> Result<Vec<StaticLocation>, ScenarioError> {
    if p.longitudinal_m <= 0.0 || p.max_lateral_m < 0.0 || p.n_locations < 1 {
        return Err(ScenarioError::InvalidParams);
    }
    Ok((0..p.n_locations)
        .map(|i| {
            let lateral = if p.n_locations == 1 {
                0.0
            } else {
                p.max_lateral_m * i as f64 / (p.n_locations - 1) as f64
            };
            StaticLocation {
                target: VehiclePose::new(lateral, p.longitudinal_m, 0.0),
                lateral_m: lateral,
                range_m: p.longitudinal_m,
            }
        })
        .collect())
}

/// Build the SM4 location grid.
pub fn sm4_grid(p: &Sm4Params) -> Result<Vec<GridLocation>, ScenarioError> {
    if p.lateral_step_m <= 0.0
        || p.range_step_m <= 0.0
        || p.max_range_m <= p.min_range_m
        || p.headings_deg.is_empty()
    {
        return Err(ScenarioError::InvalidParams);
    }
    let headings: Vec<f64> = p.headings_deg.iter().map(|d| d.to_radians()).collect();
    let n_x = (2.0 * p.lateral_half_span_m / p.lateral_step_m).round() as usize + 1;
    let n_y = ((p.max_range_m - p.min_range_m) / p.range_step_m).round() as usize + 1;
    let mut grid = Vec::with_capacity(n_x * n_y);
    for iy in 0..n_y {
        for ix in 0..n_x {
            grid.push(GridLocation {
                x_m: -p.lateral_half_span_m + ix as f64 * p.lateral_step_m,
                y_m: p.min_range_m + iy as f64 * p.range_step_m,
                headings_rad: headings.clone(),
            });
        }
    }
    Ok(grid)
}

fn build_relative_trajectory(
    duration_s: f64,
    dt_s: f64,
    ego_speed_mps: f64,
    lateral: impl Fn(f64) -> f64,
    longitudinal: impl Fn(f64) -> f64,
) -> Result<ScenarioTrajectory, ScenarioError> {
    let n = (duration_s / dt_s).round() as usize + 1;
    let ego = VehiclePose::new(0.0, 0.0, 0.0);
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt_s;
        // Heading follows the absolute velocity direction (no sideslip);
        // central difference over one step. Rightward motion (+x) is a
        // clockwise, hence negative, heading.
        let h = dt_s / 2.0;
        let vx = (lateral(t + h) - lateral(t - h)) / dt_s;
        let vy = (longitudinal(t + h) - longitudinal(t - h)) / dt_s + ego_speed_mps;
        samples.push(TrajectorySample {
            t_s: t,
            ego,
            target: VehiclePose::new(lateral(t), longitudinal(t), (-vx).atan2(vy)),
        });
    }
    let traj = ScenarioTrajectory { samples, dt_s };
    // Ackermann small-sideslip plausibility.
    if traj.max_curvature(ego_speed_mps, 30.0 / 3.6) > 0.2 {
        return Err(ScenarioError::InvalidParams);
    }
    Ok(traj)
}

/// Errors for scenario generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioError {
    /// Parameters outside validity bounds (ordering, positivity, or the
    /// curvature plausibility limit).
    InvalidParams,
}

impl std::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScenarioError::InvalidParams => write!(f, "scenario parameters out of validity bounds"),
        }
    }
}

impl std::error::Error for ScenarioError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sm1_shape() {
        let p = Sm1Params::default();
        let traj = sm1_trajectory(&p).unwrap();
        assert!((traj.duration_s() - 1.0).abs() < 1e-9);
        // Strictly increasing time.
        for w in traj.samples.windows(2) {
            assert!(w[1].t_s > w[0].t_s);
        }
        let first = traj.samples.first().unwrap().target;
        let last = traj.samples.last().unwrap().target;
        // Starts mid-maneuver in the other lane with a nonzero heading.
        assert!(first.x < -0.5 && first.heading.abs() > 5f64.to_radians());
        // Ends merged, aligned and much closer.
        assert!(last.x.abs() < 0.05 && last.heading.abs() < 2f64.to_radians());
        assert!(last.y < first.y - 5.0);
    }

    #[test]
    fn sm2_shape() {
        let traj = sm2_trajectory(&Sm2Params::default()).unwrap();
        let mid = traj.poses_at(0.5).1;
        // Straight-road platooning mid-segment: centered, aligned, tight gap.
        assert!(mid.x.abs() < 0.05 && mid.heading.abs() < 2f64.to_radians());
        assert!((mid.y - 1.9).abs() < 0.1);
        // Exit finished at the end: full lateral offset, straightened tail.
        let last = traj.samples.last().unwrap().target;
        assert!(last.x > 3.3 && last.heading.abs() < 3f64.to_radians());
        // Mid-exit the nose points right (clockwise = negative heading).
        let exiting = traj.poses_at(0.76).1;
        assert!(exiting.heading < -10f64.to_radians());
    }

    #[test]
    fn curvature_within_plausibility() {
        let t1 = sm1_trajectory(&Sm1Params::default()).unwrap();
        assert!(t1.max_curvature(25.0, 30.0 / 3.6) <= 0.2);
        let t2 = sm2_trajectory(&Sm2Params::default()).unwrap();
        assert!(t2.max_curvature(20.0, 30.0 / 3.6) <= 0.2);
    }

    #[test]
    fn sm3_parallel_sweep() {
        let locs = sm3_locations(&Sm3Params::default()).unwrap();
        assert_eq!(locs.len(), 8);
        // First location dead ahead, all parallel, lateral strictly rising.
        assert_eq!(locs[0].target.x, 0.0);
        for w in locs.windows(2) {
            assert!(w[1].lateral_m > w[0].lateral_m);
        }
        assert!((locs.last().unwrap().lateral_m - 3.5).abs() < 1e-12);
        for loc in &locs {
            assert_eq!(loc.target.heading, 0.0);
            assert_eq!(loc.target.y, 10.0);
        }
    }

    #[test]
    fn sm4_grid_bounds() {
        let grid = sm4_grid(&Sm4Params::default()).unwrap();
        assert_eq!(grid.len(), 13 * 29);
        let xs: Vec<f64> = grid.iter().map(|g| g.x_m).collect();
        let ys: Vec<f64> = grid.iter().map(|g| g.y_m).collect();
        assert!(xs.iter().cloned().fold(f64::INFINITY, f64::min) == -3.0);
        assert!(xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) == 3.0);
        assert!(ys.iter().cloned().fold(f64::INFINITY, f64::min) == 1.0);
        assert!(ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) == 15.0);
        assert_eq!(grid[0].headings_rad.len(), 10);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = Sm1Params::default();
        p.final_range_m = 20.0; // farther than the start: not a braking scene
        assert_eq!(sm1_trajectory(&p).err(), Some(ScenarioError::InvalidParams));
        let mut p = Sm4Params::default();
        p.headings_deg.clear();
        assert_eq!(sm4_grid(&p).err(), Some(ScenarioError::InvalidParams));
    }

    #[test]
    fn interpolation_clamps_and_blends() {
        let traj = sm2_trajectory(&Sm2Params::default()).unwrap();
        let (_, before) = traj.poses_at(-1.0);
        assert_eq!(before, traj.samples[0].target);
        let (_, after) = traj.poses_at(99.0);
        assert_eq!(after, traj.samples.last().unwrap().target);
        let (_, mid) = traj.poses_at(0.5005);
        let (a, b) = (traj.poses_at(0.500).1, traj.poses_at(0.501).1);
        assert!(mid.y >= a.y.min(b.y) && mid.y <= a.y.max(b.y));
    }
}
