//! Dual-AoA triangulation of the target TX positions and the localization
//! error metric.
//!
//! Each TX sits at the apex of the triangle formed by its two AoA rays and
//! the receiver baseline `L`, so its position follows from the law of
//! sines:
//!
//! `x = L (1 + sin(t2) cos(t1) / sin(t1 - t2))`,
//! `y = L  cos(t2) cos(t1) / sin(t1 - t2)`.

use crate::geometry::{Point, RelativeTargetState};

/// Minimum |sin(t1 - t2)| accepted before the rays count as parallel.
/// Keeps the implied range below ~1e6 * L, far outside any scenario.
pub const DEGENERACY_THRESHOLD: f64 = 1e-6;

/// Triangulate one TX position from its AoA pair.
///
/// `theta1`/`theta2` are the AoAs at QRX 1 and QRX 2 and `l` the receiver
/// separation. Succeeds only for geometry placing the TX ahead of the
/// baseline (`y > 0`).
pub fn triangulate(theta1: f64, theta2: f64, l: f64) -> Result<Point, VlpError> {
    let denom = (theta1 - theta2).sin();
    if denom.abs() < DEGENERACY_THRESHOLD {
        return Err(VlpError::DegenerateGeometry);
    }
    let x = l * (1.0 + theta2.sin() * theta1.cos() / denom);
    let y = l * (theta2.cos() * theta1.cos() / denom);
    if y <= 0.0 {
        return Err(VlpError::NegativeRange);
    }
    Ok(Point::new(x, y))
}

/// Position estimates for both target TXs at one measurement instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionEstimate {
    pub p1: Option<Point>,
    pub p2: Option<Point>,
    /// Buffer-midpoint timestamp the estimate refers to, seconds.
    pub timestamp_s: f64,
}

impl PositionEstimate {
    pub fn valid1(&self) -> bool {
        self.p1.is_some()
    }

    pub fn valid2(&self) -> bool {
        self.p2.is_some()
    }

    /// Both TXs estimated: the cycle fully localizes the vehicle.
    pub fn complete(&self) -> bool {
        self.p1.is_some() && self.p2.is_some()
    }
}

/// Euclidean position errors of one estimate against the true state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationError {
    /// |p1 - p1_hat|, meters.
    pub e1: f64,
    /// |p2 - p2_hat|, meters.
    pub e2: f64,
    /// sqrt(e1^2 + e2^2), meters.
    pub norm: f64,
}

/// Compare an estimate against the true relative state.
///
/// Requires both TX estimates; incomplete estimates carry no error value.
pub fn localization_error(
    truth: &RelativeTargetState,
    est: &PositionEstimate,
) -> Result<LocalizationError, VlpError> {
    let (p1, p2) = match (est.p1, est.p2) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(VlpError::Unavailable),
    };
    let e1 = truth.p1.distance_to(p1);
    let e2 = truth.p2.distance_to(p2);
    Ok(LocalizationError {
        e1,
        e2,
        norm: e1.hypot(e2),
    })
}

/// Errors for the localization stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlpError {
    /// AoA rays are (near) parallel; no finite intersection.
    DegenerateGeometry,
    /// The measurement pair implies a target behind the baseline.
    NegativeRange,
    /// Estimate is incomplete; no error metric available.
    Unavailable,
}

impl std::fmt::Display for VlpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VlpError::DegenerateGeometry => write!(f, "AoA rays are parallel within tolerance"),
            VlpError::NegativeRange => write!(f, "triangulated position lies behind the baseline"),
            VlpError::Unavailable => write!(f, "estimate unavailable"),
        }
    }
}

impl std::error::Error for VlpError {}
