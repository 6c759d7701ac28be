//! Vehicle geometry, coordinate frames and true angle-of-arrival relations.
//!
//! Conventions used throughout the crate: the road plane is 2D, `x` is
//! lateral (rightward positive), `y` is longitudinal (forward positive),
//! and headings are measured counterclockwise from the +y axis in radians.
//! Localization happens in the receiver frame whose origin sits at QRX 1
//! with QRX 2 at `(L, 0)`, so a transmitter dead ahead of QRX 1 has AoA
//! zero at QRX 1 and a small negative AoA at QRX 2.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Sub};

/// 2D point or displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Euclidean distance to another point.
    pub fn distance_to(&self, other: Point) -> f64 {
        (*self - other).norm()
    }

    /// Rotate counterclockwise by `angle` radians (about the origin).
    pub fn rotated(&self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// Wrap an angle to the `(-pi, pi]` interval.
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Pose of a vehicle reference point in the road plane.
///
/// The reference point is the center of the face that carries the VLC
/// units: the front face for the ego vehicle (QRXs) and the rear face for
/// a leading target vehicle (tail-light TXs). Heading 0 faces +y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehiclePose {
    pub x: f64,
    pub y: f64,
    /// Radians, normalized to `(-pi, pi]`, counterclockwise from +y.
    pub heading: f64,
}

impl VehiclePose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Mounting layout of the VLC units on a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleGeometry {
    /// Separation `L` between the two QRXs, meters.
    pub rx_separation_m: f64,
    /// Separation `D` between the two TXs, meters.
    pub tx_separation_m: f64,
    /// Vehicle body length, meters.
    pub body_length_m: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self {
            rx_separation_m: 1.6,
            tx_separation_m: 1.6,
            body_length_m: 5.0,
        }
    }
}

impl VehicleGeometry {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.rx_separation_m <= 0.0 || self.tx_separation_m <= 0.0 || self.body_length_m <= 0.0
        {
            return Err(GeometryError::InvalidGeometry);
        }
        Ok(())
    }
}

/// One VLC transmitter unit mounted on a vehicle light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxUnit {
    /// Offset from the vehicle reference point, in the vehicle frame (m).
    pub local_offset: Point,
    /// Facing direction in the vehicle frame; 0 = vehicle forward.
    pub facing: f64,
    /// Peak optical power `gamma_j * max|s_j|`, watts.
    pub optical_power_w: f64,
    /// Lambertian emission order `m` (integer, >= 1).
    pub lambertian_order: u32,
    /// BFSK tone pair assigned to this unit, Hz.
    pub tone_pair_hz: (f64, f64),
    /// Half-angle of the emission cone used for visibility tests, radians.
    pub emission_half_angle: f64,
}

impl TxUnit {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.optical_power_w <= 0.0
            || self.lambertian_order < 1
            || self.tone_pair_hz.0 == self.tone_pair_hz.1
            || self.emission_half_angle <= 0.0
        {
            return Err(GeometryError::InvalidTxUnit);
        }
        Ok(())
    }
}

/// Build the two tail-light TX units of a leading target vehicle.
///
/// TX 1 sits on the corner nearest QRX 1 when the vehicles are aligned
/// (lateral offset `-D/2`), TX 2 at `+D/2`; both face backward.
pub fn tail_tx_units(
    geom: &VehicleGeometry,
    optical_power_w: f64,
    lambertian_order: u32,
    emission_half_angle: f64,
    tones: [(f64, f64); 2],
) -> [TxUnit; 2] {
    let d = geom.tx_separation_m;
    let mk = |off: f64, tone_pair_hz: (f64, f64)| TxUnit {
        local_offset: Point::new(off, 0.0),
        facing: PI,
        optical_power_w,
        lambertian_order,
        tone_pair_hz,
        emission_half_angle,
    };
    [mk(-d / 2.0, tones[0]), mk(d / 2.0, tones[1])]
}

/// Target TX positions and facings expressed in the ego receiver frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeTargetState {
    /// TX 1 position relative to QRX 1, meters.
    pub p1: Point,
    /// TX 2 position relative to QRX 1, meters.
    pub p2: Point,
    /// TX facing directions in the ego frame.
    pub tx_facings: (f64, f64),
}

/// World positions of the two QRXs for an ego pose.
///
/// QRX 1 is the left receiver (at `-L/2` from the front-face center),
/// QRX 2 the right one.
pub fn qrx_world_positions(ego: &VehiclePose, geom: &VehicleGeometry) -> [Point; 2] {
    let l = geom.rx_separation_m;
    let left = Point::new(-l / 2.0, 0.0).rotated(ego.heading);
    let right = Point::new(l / 2.0, 0.0).rotated(ego.heading);
    [ego.position() + left, ego.position() + right]
}

/// Express the target's rear TX positions in the ego receiver frame.
///
/// The frame has its origin at QRX 1 and its +x axis toward QRX 2, so QRX 2
/// sits at `(L, 0)`. TXs are the rear corners of the target body, `D` apart
/// and symmetric about its centerline; tail lights face backward.
pub fn relative_tx_positions(
    ego: &VehiclePose,
    target: &VehiclePose,
    geom: &VehicleGeometry,
) -> RelativeTargetState {
    let qrx1 = qrx_world_positions(ego, geom)[0];
    let d = geom.tx_separation_m;

    let tx1_world = target.position() + Point::new(-d / 2.0, 0.0).rotated(target.heading);
    let tx2_world = target.position() + Point::new(d / 2.0, 0.0).rotated(target.heading);

    let to_ego = |p: Point| (p - qrx1).rotated(-ego.heading);
    let facing = normalize_angle(target.heading + PI - ego.heading);

    RelativeTargetState {
        p1: to_ego(tx1_world),
        p2: to_ego(tx2_world),
        tx_facings: (facing, facing),
    }
}

/// Receiver selector for [`true_aoa`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RxIndex {
    Rx1,
    Rx2,
}

impl RxIndex {
    pub const BOTH: [RxIndex; 2] = [RxIndex::Rx1, RxIndex::Rx2];

    /// Receiver position in the ego frame.
    pub fn position(&self, rx_separation: f64) -> Point {
        match self {
            RxIndex::Rx1 => Point::new(0.0, 0.0),
            RxIndex::Rx2 => Point::new(rx_separation, 0.0),
        }
    }
}

/// Geometric AoA of a point `p` (ego frame) at the selected receiver.
///
/// `theta = atan2(x, y)` at QRX 1 and `atan2(x - L, y)` at QRX 2, measured
/// from the receiver boresight (+y), positive toward +x. Only points ahead
/// of the receiver baseline (`y > 0`) have a defined AoA.
pub fn true_aoa(p: Point, rx: RxIndex, rx_separation: f64) -> Result<f64, GeometryError> {
    if p.y <= 0.0 {
        return Err(GeometryError::BehindBaseline);
    }
    let dx = match rx {
        RxIndex::Rx1 => p.x,
        RxIndex::Rx2 => p.x - rx_separation,
    };
    Ok(dx.atan2(p.y))
}

/// Direction a heading-convention angle points at (unit vector).
///
/// Heading 0 is +y and positive angles rotate counterclockwise, so the
/// vector is `(-sin h, cos h)`.
pub fn heading_direction(heading: f64) -> Point {
    Point::new(-heading.sin(), heading.cos())
}

/// Unsigned angle between a heading-convention direction and a vector.
pub fn angle_from_heading(heading: f64, v: Point) -> f64 {
    let d = heading_direction(heading);
    let dot = d.x * v.x + d.y * v.y;
    let cross = d.x * v.y - d.y * v.x;
    cross.atan2(dot).abs()
}

/// Line-of-sight visibility test between a TX and an RX in the ego frame.
///
/// The link is up iff the RX lies inside the TX emission cone and the TX
/// lies inside the RX field-of-view cone. The RX boresight is +y; `rx_fov`
/// is the half-angle of the total FoV (e.g. 80 degrees for "±80° total").
pub fn link_visible(
    tx_facing: f64,
    tx_pos: Point,
    rx_pos: Point,
    emission_half_angle: f64,
    rx_fov: f64,
) -> bool {
    if angle_from_heading(tx_facing, rx_pos - tx_pos) > emission_half_angle {
        return false;
    }
    let to_tx = tx_pos - rx_pos;
    let incidence = to_tx.x.atan2(to_tx.y).abs();
    incidence <= rx_fov
}

/// Errors for geometric operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryError {
    /// The point lies on or behind the receiver baseline (`y <= 0`).
    BehindBaseline,
    /// Non-positive separations or body length.
    InvalidGeometry,
    /// TX unit parameters violate their invariants.
    InvalidTxUnit,
}

impl std::fmt::Display for GeometryError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeometryError::BehindBaseline => {
                write!(f, "point is on or behind the receiver baseline (y <= 0)")
            }
            GeometryError::InvalidGeometry => write!(f, "vehicle geometry values must be positive"),
            GeometryError::InvalidTxUnit => write!(f, "TX unit parameters violate invariants"),
        }
    }
}

impl std::error::Error for GeometryError {}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DEG: f64 = PI / 180.0;

    fn geom() -> VehicleGeometry {
        VehicleGeometry::default()
    }

    #[test]
    fn aligned_frames_tx_over_qrx() {
        // Ego at origin heading 0, target rear face 5 m ahead, centered.
        let ego = VehiclePose::new(0.0, 0.0, 0.0);
        let target = VehiclePose::new(0.0, 5.0, 0.0);
        let rel = relative_tx_positions(&ego, &target, &geom());
        assert!((rel.p1.x - 0.0).abs() < 1e-12 && (rel.p1.y - 5.0).abs() < 1e-12);
        assert!((rel.p2.x - 1.6).abs() < 1e-12 && (rel.p2.y - 5.0).abs() < 1e-12);
    }

    #[test]
    fn lateral_shift_translates_tx_positions() {
        let ego = VehiclePose::new(0.0, 0.0, 0.0);
        let target = VehiclePose::new(0.8, 5.0, 0.0);
        let rel = relative_tx_positions(&ego, &target, &geom());
        assert!((rel.p1.x - 0.8).abs() < 1e-12 && (rel.p1.y - 5.0).abs() < 1e-12);
        assert!((rel.p2.x - 2.4).abs() < 1e-12 && (rel.p2.y - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_preserves_tx_separation() {
        let ego = VehiclePose::new(0.0, 0.0, 0.0);
        for deg in [-40.0, -15.0, 10.0, 35.0] {
            let target = VehiclePose::new(1.0, 7.0, deg * DEG);
            let rel = relative_tx_positions(&ego, &target, &geom());
            assert!((rel.p1.distance_to(rel.p2) - 1.6).abs() < 1e-9);
        }
    }

    #[test]
    fn true_aoa_examples() {
        let l = 1.6;
        assert_eq!(true_aoa(Point::new(0.0, 5.0), RxIndex::Rx1, l).unwrap(), 0.0);
        let a = true_aoa(Point::new(1.6, 1.6), RxIndex::Rx1, l).unwrap();
        assert!((a - 45.0 * DEG).abs() < 1e-12);
        let b = true_aoa(Point::new(1.6, 1.6), RxIndex::Rx2, l).unwrap();
        assert!(b.abs() < 1e-12);
        // arctan(0.8 / 5)  =  9.0903 degrees (calculator oracle)
        let c = true_aoa(Point::new(0.8, 5.0), RxIndex::Rx1, l).unwrap();
        assert!((c / DEG - 9.0903).abs() < 1e-3);
        let d = true_aoa(Point::new(0.8, 5.0), RxIndex::Rx2, l).unwrap();
        assert!((d / DEG + 9.0903).abs() < 1e-3);
    }

    #[test]
    fn true_aoa_behind_baseline() {
        assert_eq!(
            true_aoa(Point::new(1.0, 0.0), RxIndex::Rx1, 1.6),
            Err(GeometryError::BehindBaseline)
        );
        assert_eq!(
            true_aoa(Point::new(1.0, -2.0), RxIndex::Rx2, 1.6),
            Err(GeometryError::BehindBaseline)
        );
    }

    #[test]
    fn visibility_cases() {
        let half = 60.0 * DEG;
        let fov = 80.0 * DEG;
        // TX above the RX facing straight down at it.
        assert!(link_visible(
            PI,
            Point::new(0.0, 5.0),
            Point::new(0.0, 0.0),
            half,
            fov
        ));
        // TX facing +y with the RX behind it.
        assert!(!link_visible(
            0.0,
            Point::new(0.0, 5.0),
            Point::new(0.0, 0.0),
            half,
            fov
        ));
        // RX sees the TX at 85 degrees off boresight: outside the ±80° FoV.
        let tx = Point::new((85.0 * DEG).tan(), 1.0);
        assert!(!link_visible(PI, tx, Point::new(0.0, 0.0), PI, fov));
    }

    #[test]
    fn heading_normalization() {
        let p = VehiclePose::new(0.0, 0.0, 3.0 * PI);
        assert!((p.heading - PI).abs() < 1e-12);
        let q = VehiclePose::new(0.0, 0.0, -PI);
        assert!((q.heading - PI).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn aoa_is_odd_in_x(x in -20.0f64..20.0, y in 0.1f64..30.0) {
            let a = true_aoa(Point::new(x, y), RxIndex::Rx1, 1.6).unwrap();
            let b = true_aoa(Point::new(-x, y), RxIndex::Rx1, 1.6).unwrap();
            prop_assert!((a + b).abs() < 1e-12);
        }

        #[test]
        fn rigid_body_separation(
            ex in -5.0f64..5.0, ey in -5.0f64..5.0, eh in -PI..PI,
            tx in -10.0f64..10.0, ty in -10.0f64..10.0, th in -PI..PI,
        ) {
            let ego = VehiclePose::new(ex, ey, eh);
            let target = VehiclePose::new(tx, ty, th);
            let rel = relative_tx_positions(&ego, &target, &geom());
            prop_assert!((rel.p1.distance_to(rel.p2) - 1.6).abs() < 1e-9);
        }
    }
}
