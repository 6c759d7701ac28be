//! QRX optical model: defocused-spot geometry on the quadrant photodiode,
//! per-quadrant power fractions, the forward map from AoA to quadrant power
//! ratio and its tabulated inverse, and the field-of-view relation.
//!
//! The lens truncates the incoming beam to an approximately uniform
//! ("flat-top") spot of diameter `d_S = d_L - n * d_X` whose center is
//! displaced by `d_T = d_X * tan(theta)` from the QPD center. Quadrant
//! powers are the exact overlap areas of that uniform disk with the four
//! QPD quadrants, computed analytically.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default number of samples in the inverse lookup table.
pub const DEFAULT_TABLE_POINTS: usize = 2048;

/// Lens/QPD optical configuration of one QRX. Lengths in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QrxOpticalConfig {
    /// Lens diameter `d_L`, mm.
    pub lens_diameter_mm: f64,
    /// Lens refractive index `n`.
    pub refractive_index: f64,
    /// QPD side length `d_H`, mm.
    pub qpd_side_mm: f64,
    /// Lens-QPD distance `d_X`, mm.
    pub lens_gap_mm: f64,
    /// Inter-quadrant dead gap, mm (0 = ideal QPD).
    pub dead_gap_mm: f64,
}

impl Default for QrxOpticalConfig {
    /// PMMA lens over a 6.3 mm QPD: the shipped reference design.
    fn default() -> Self {
        Self {
            lens_diameter_mm: 7.1,
            refractive_index: 1.5,
            qpd_side_mm: 6.3,
            lens_gap_mm: 0.55,
            dead_gap_mm: 0.0,
        }
    }
}

impl QrxOpticalConfig {
    pub fn new(
        lens_diameter_mm: f64,
        refractive_index: f64,
        qpd_side_mm: f64,
        lens_gap_mm: f64,
    ) -> Result<Self, OpticsError> {
        let cfg = Self {
            lens_diameter_mm,
            refractive_index,
            qpd_side_mm,
            lens_gap_mm,
            dead_gap_mm: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        if self.lens_diameter_mm <= 0.0
            || self.refractive_index <= 0.0
            || self.qpd_side_mm <= 0.0
            || self.lens_gap_mm <= 0.0
            || self.dead_gap_mm < 0.0
        {
            return Err(OpticsError::NonPositiveParameter);
        }
        spot_diameter_mm(self.lens_diameter_mm, self.refractive_index, self.lens_gap_mm)?;
        Ok(())
    }

    /// Spot diameter `d_S` for this configuration, mm.
    pub fn spot_diameter_mm(&self) -> f64 {
        self.lens_diameter_mm - self.refractive_index * self.lens_gap_mm
    }

    /// Field of view half-angle: `arctan(d_S / (2 d_X))`, radians.
    ///
    /// AoAs beyond this value park the spot entirely in one half of the
    /// QPD, saturating the power ratio at ±1.
    pub fn fov(&self) -> f64 {
        (self.spot_diameter_mm() / (2.0 * self.lens_gap_mm)).atan()
    }

    /// True iff the spot is small enough for the power ratio to be
    /// one-to-one around boresight (`d_S < d_H * sqrt(2)`).
    pub fn is_bijective(&self) -> bool {
        self.spot_diameter_mm() < self.qpd_side_mm * std::f64::consts::SQRT_2
    }
}

/// Spot diameter (FWHM of the flat-top distribution): `d_S = d_L - n * d_X`.
pub fn spot_diameter_mm(d_l: f64, n: f64, d_x: f64) -> Result<f64, OpticsError> {
    let d_s = d_l - n * d_x;
    if d_s <= 0.0 {
        return Err(OpticsError::NonPositiveSpot);
    }
    Ok(d_s)
}

/// Spot center displacement from the QPD center: `d_T = d_X * tan(theta)`.
pub fn spot_displacement_mm(d_x: f64, theta: f64) -> f64 {
    d_x * theta.tan()
}

/// Fraction of the collected spot power falling on each QPD quadrant.
///
/// Quadrants are labeled A (top-left), B (top-right), C (bottom-left),
/// D (bottom-right) as seen along the optical axis, with positive AoA
/// displacing the spot toward B/D. Fractions sum to at most 1; power
/// spilling off the QPD is lost.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadrantFractions {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl QuadrantFractions {
    pub fn sum(&self) -> f64 {
        self.a + self.b + self.c + self.d
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }
}

/// Split the uniform spot across the four quadrants for a given AoA.
///
/// 2D localization displaces the spot along the horizontal QPD axis only;
/// the vertical split stays symmetric. AoAs at or beyond ±90° leave the
/// forward hemisphere and collect nothing.
pub fn quadrant_fractions(theta: f64, cfg: &QrxOpticalConfig) -> QuadrantFractions {
    if !theta.is_finite() || theta.abs() >= PI / 2.0 {
        return QuadrantFractions::default();
    }
    let r = cfg.spot_diameter_mm() / 2.0;
    let dt = spot_displacement_mm(cfg.lens_gap_mm, theta);
    let half = cfg.qpd_side_mm / 2.0;
    let g = cfg.dead_gap_mm / 2.0;
    if g >= half {
        return QuadrantFractions::default();
    }

    let spot_area = PI * r * r;
    let q = |x1: f64, x2: f64, y1: f64, y2: f64| circle_rect_area(dt, 0.0, r, x1, x2, y1, y2);
    QuadrantFractions {
        a: q(-half, -g, g, half) / spot_area,
        b: q(g, half, g, half) / spot_area,
        c: q(-half, -g, -half, -g) / spot_area,
        d: q(g, half, -half, -g) / spot_area,
    }
}

/// Forward QRX map: AoA to horizontal quadrant power ratio.
///
/// `Phi = ((B + D) - (A + C)) / (A + B + C + D)`, in `[-1, 1]`.
pub fn f_qrx(theta: f64, cfg: &QrxOpticalConfig) -> Result<f64, OpticsError> {
    let fr = quadrant_fractions(theta, cfg);
    let total = fr.sum();
    if total <= 0.0 {
        return Err(OpticsError::ZeroIllumination);
    }
    Ok(((fr.b + fr.d) - (fr.a + fr.c)) / total)
}

/// Tabulated inverse of the forward map, used for AoA measurement.
///
/// Built once offline per optical configuration and then shared read-only;
/// lookups interpolate linearly between samples.
#[derive(Debug, Clone)]
pub struct GqrxTable {
    phi_grid: Vec<f64>,
    theta_grid: Vec<f64>,
    theta_fov: f64,
}

impl GqrxTable {
    /// Sample the forward map over `(-theta_fov, +theta_fov)` and store the
    /// `(Phi, theta)` pairs for inverse lookup.
    ///
    /// Fails with [`OpticsError::BijectionViolated`] when the configuration
    /// makes the ratio non-injective (spot larger than the QPD diagonal, or
    /// any non-monotone stretch on the sampled grid).
    pub fn build(cfg: &QrxOpticalConfig, n_points: usize) -> Result<Self, OpticsError> {
        cfg.validate()?;
        if !cfg.is_bijective() {
            return Err(OpticsError::BijectionViolated);
        }
        let fov = cfg.fov();
        let n = n_points.max(16);
        let mut phi_grid = Vec::with_capacity(n);
        let mut theta_grid = Vec::with_capacity(n);
        for i in 0..n {
            let theta = -fov + 2.0 * fov * (i as f64) / ((n - 1) as f64);
            let phi = f_qrx(theta, cfg)?;
            if let Some(&prev) = phi_grid.last() {
                if phi <= prev + 1e-12 {
                    return Err(OpticsError::BijectionViolated);
                }
            }
            phi_grid.push(phi);
            theta_grid.push(theta);
        }
        Ok(Self {
            phi_grid,
            theta_grid,
            theta_fov: fov,
        })
    }

    /// Inverse lookup with linear interpolation; the input is clamped to
    /// the tabulated ratio range, so saturated ratios map to ±FoV.
    pub fn lookup(&self, phi: f64) -> f64 {
        let n = self.phi_grid.len();
        if phi <= self.phi_grid[0] {
            return self.theta_grid[0];
        }
        if phi >= self.phi_grid[n - 1] {
            return self.theta_grid[n - 1];
        }
        let idx = self.phi_grid.partition_point(|&p| p < phi);
        let (p0, p1) = (self.phi_grid[idx - 1], self.phi_grid[idx]);
        let (t0, t1) = (self.theta_grid[idx - 1], self.theta_grid[idx]);
        let w = (phi - p0) / (p1 - p0);
        t0 + w * (t1 - t0)
    }

    pub fn theta_fov(&self) -> f64 {
        self.theta_fov
    }

    pub fn len(&self) -> usize {
        self.phi_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi_grid.is_empty()
    }

    /// Iterate over the stored `(theta, phi)` pairs.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.theta_grid
            .iter()
            .zip(self.phi_grid.iter())
            .map(|(&t, &p)| (t, p))
    }
}

/// Errors for the optical model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpticsError {
    /// A length or index parameter was zero or negative.
    NonPositiveParameter,
    /// `d_L - n * d_X <= 0`: the configuration focuses past the QPD.
    NonPositiveSpot,
    /// The forward map is not one-to-one for this configuration.
    BijectionViolated,
    /// No spot power reaches the QPD at the requested AoA.
    ZeroIllumination,
}

impl std::fmt::Display for OpticsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OpticsError::NonPositiveParameter => {
                write!(f, "optical configuration parameters must be positive")
            }
            OpticsError::NonPositiveSpot => write!(f, "spot diameter d_L - n*d_X is not positive"),
            OpticsError::BijectionViolated => {
                write!(f, "quadrant power ratio is not bijective for this configuration")
            }
            OpticsError::ZeroIllumination => write!(f, "no quadrant receives any spot power"),
        }
    }
}

impl std::error::Error for OpticsError {}

// --- circle / rectangle overlap -------------------------------------------

/// Antiderivative of sqrt(r^2 - x^2).
fn semicircle_integral(x: f64, r: f64) -> f64 {
    let xc = x.clamp(-r, r);
    0.5 * (xc * (r * r - xc * xc).max(0.0).sqrt() + r * r * (xc / r).clamp(-1.0, 1.0).asin())
}

/// Exact area of the intersection of a disk (center `(cx, cy)`, radius `r`)
/// with the axis-aligned rectangle `[x1, x2] x [y1, y2]`.
///
/// The chord length is integrated analytically over x, splitting the range
/// at the abscissas where the clamping against the rectangle's horizontal
/// edges switches on or off.
pub fn circle_rect_area(cx: f64, cy: f64, r: f64, x1: f64, x2: f64, y1: f64, y2: f64) -> f64 {
    debug_assert!(r > 0.0 && x2 >= x1 && y2 >= y1);
    let (a1, a2) = (x1 - cx, x2 - cx);
    let (b1, b2) = (y1 - cy, y2 - cy);
    if b1 >= r || b2 <= -r {
        return 0.0;
    }
    let lo = a1.max(-r);
    let hi = a2.min(r);
    if lo >= hi {
        return 0.0;
    }

    let mut cuts = [lo, hi, 0.0, 0.0, 0.0, 0.0];
    let mut n_cuts = 2;
    for b in [b1, b2] {
        if b.abs() < r {
            let x = (r * r - b * b).sqrt();
            for root in [-x, x] {
                if root > lo && root < hi {
                    cuts[n_cuts] = root;
                    n_cuts += 1;
                }
            }
        }
    }
    let cuts = &mut cuts[..n_cuts];
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (u, v) = (w[0], w[1]);
        if v - u <= 0.0 {
            continue;
        }
        let m = 0.5 * (u + v);
        let h = (r * r - m * m).max(0.0).sqrt();
        let top_clamped = b2 < h;
        let bot_clamped = b1 > -h;
        let top = if top_clamped { b2 } else { h };
        let bot = if bot_clamped { b1 } else { -h };
        if top <= bot {
            continue;
        }
        let di = semicircle_integral(v, r) - semicircle_integral(u, r);
        area += if top_clamped { b2 * (v - u) } else { di };
        area -= if bot_clamped { b1 * (v - u) } else { -di };
    }
    area.max(0.0)
}
