//! Fisher information and Cramer-Rao bound for the dual-AoA geometry, plus
//! Monte Carlo estimation of the AoA noise level that feeds it.
//!
//! The observation vector is the four AoA measurements
//! `[t_11, t_12, t_21, t_22]` (TX j seen by QRX i, QRX-major order), each
//! contaminated by zero-mean Gaussian noise. The parameters are the two TX
//! positions `[x1, y1, x2, y2]`. The only nonzero derivatives are
//!
//! `d t_1j / d x_j =  y_j / (x_j^2 + y_j^2)`,
//! `d t_1j / d y_j = -x_j / (x_j^2 + y_j^2)`,
//! `d t_2j / d x_j =  y_j / ((x_j - L)^2 + y_j^2)`,
//! `d t_2j / d y_j = -(x_j - L) / ((x_j - L)^2 + y_j^2)`,
//!
//! which makes the 4x4 information matrix exactly block-diagonal per TX.

use crate::channel::{quadrant_noise_variance, ChannelCondition, TiaConfig};
use crate::engine::{PreparedSim, SimParams};
use crate::geometry::{Point, VehiclePose};
use crate::optics::{quadrant_fractions, GqrxTable, QrxOpticalConfig};
use rayon::prelude::*;

/// Condition-number ceiling past which the FIM counts as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Standard deviation of the AoA measurement noise per channel, radians,
/// in `[t_11, t_12, t_21, t_22]` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoANoiseModel {
    pub sigma: [f64; 4],
}

impl AoANoiseModel {
    /// Same noise level on all four channels.
    pub fn uniform(sigma: f64) -> Self {
        Self { sigma: [sigma; 4] }
    }

    pub fn validate(&self) -> Result<(), CrlbError> {
        if self.sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(CrlbError::InvalidNoise);
        }
        Ok(())
    }
}

/// Fisher information matrix and the bounds derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct CrlbResult {
    pub fim: [[f64; 4]; 4],
    /// Per-coordinate variance lower bounds for `(x1, y1, x2, y2)`, m^2.
    pub variances: [f64; 4],
    /// Per-TX position bounds `sqrt(var_x + var_y)`, meters.
    pub position_bounds: [f64; 2],
}

/// Build the 4x4 FIM for TX positions `p1`, `p2` and receiver baseline `l`.
pub fn fim(
    p1: Point,
    p2: Point,
    l: f64,
    noise: &AoANoiseModel,
) -> Result<[[f64; 4]; 4], CrlbError> {
    noise.validate()?;
    if p1.y <= 0.0 || p2.y <= 0.0 {
        return Err(CrlbError::BehindBaseline);
    }

    let mut f = [[0.0f64; 4]; 4];
    for (tx, p) in [p1, p2].into_iter().enumerate() {
        let r1_sq = p.x * p.x + p.y * p.y;
        let r2_sq = (p.x - l) * (p.x - l) + p.y * p.y;
        // (channel derivative wrt x, wrt y, channel noise sigma)
        let contributions = [
            (p.y / r1_sq, -p.x / r1_sq, noise.sigma[tx]),
            (p.y / r2_sq, -(p.x - l) / r2_sq, noise.sigma[2 + tx]),
        ];
        let (ix, iy) = (2 * tx, 2 * tx + 1);
        for (gx, gy, sigma) in contributions {
            let w = 1.0 / (sigma * sigma);
            f[ix][ix] += w * gx * gx;
            f[ix][iy] += w * gx * gy;
            f[iy][ix] += w * gy * gx;
            f[iy][iy] += w * gy * gy;
        }
    }
    if f.iter().any(|row| row.iter().all(|v| *v == 0.0)) {
        return Err(CrlbError::SingularFim);
    }
    debug_assert!(fim_is_psd(&f));
    Ok(f)
}

/// Symmetry plus non-negative block eigenvalues (the FIM is block-diagonal
/// 2x2, so the eigenvalues are available in closed form).
fn fim_is_psd(f: &[[f64; 4]; 4]) -> bool {
    let trace: f64 = (0..4).map(|i| f[i][i]).sum();
    let tol = -1e-9 * trace;
    for i in 0..4 {
        for j in 0..4 {
            if (f[i][j] - f[j][i]).abs() > 1e-9 * trace.max(1.0) {
                return false;
            }
        }
    }
    for b in [0, 2] {
        let (a, d, c) = (f[b][b], f[b + 1][b + 1], f[b][b + 1]);
        let disc = ((a - d) * 0.5).hypot(c);
        let mid = (a + d) * 0.5;
        if mid - disc < tol {
            return false;
        }
    }
    true
}

/// Invert the FIM and read off the per-coordinate variance bounds.
pub fn crlb(f: &[[f64; 4]; 4]) -> Result<CrlbResult, CrlbError> {
    let inv = invert4(f).ok_or(CrlbError::SingularFim)?;
    if norm1(f) * norm1(&inv) > CONDITION_LIMIT {
        return Err(CrlbError::SingularFim);
    }
    let variances = [inv[0][0], inv[1][1], inv[2][2], inv[3][3]];
    if variances.iter().any(|v| *v < 0.0) {
        return Err(CrlbError::SingularFim);
    }
    Ok(CrlbResult {
        fim: *f,
        variances,
        position_bounds: [
            (variances[0] + variances[1]).sqrt(),
            (variances[2] + variances[3]).sqrt(),
        ],
    })
}

/// Estimate the per-channel AoA noise by running the full measurement
/// pipeline at a static geometry. The per-trial RNG seed is the base seed
/// XOR the trial index.
pub fn estimate_aoa_sigma(
    target: &VehiclePose,
    params: &SimParams,
    n_trials: usize,
    seed: u64,
) -> Result<AoANoiseModel, CrlbError> {
    if n_trials < 100 {
        return Err(CrlbError::InsufficientTrials);
    }
    let sim = PreparedSim::new(params).map_err(|_| CrlbError::MeasurementUnavailable)?;
    let samples: Vec<[Option<f64>; 4]> = (0..n_trials)
        .into_par_iter()
        .map(|trial| sim.static_aoa(target, seed ^ trial as u64))
        .collect();

    let mut sigma = [0.0f64; 4];
    for ch in 0..4 {
        let values: Vec<f64> = samples.iter().filter_map(|s| s[ch]).collect();
        // The geometry is static and pre-checked visible; demand that the
        // overwhelming majority of trials produced a measurement.
        if values.len() < n_trials / 2 || values.len() < 2 {
            return Err(CrlbError::MeasurementUnavailable);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        sigma[ch] = var.sqrt();
    }
    Ok(AoANoiseModel { sigma })
}

/// Small-signal analytic propagation of the channel AWGN into the AoA
/// measurement, for cross-checking the Monte Carlo estimate.
///
/// Propagates per-quadrant correlation noise through the power ratio and
/// the local slope of the inverse table. Single-link approximation: shot
/// noise from other transmitters is ignored.
pub fn analytic_aoa_sigma(
    theta: f64,
    received_power_w: f64,
    qrx: &QrxOpticalConfig,
    table: &GqrxTable,
    tia: &TiaConfig,
    cond: &ChannelCondition,
    h_buf: usize,
    waveform_mean_square: f64,
) -> f64 {
    let fr = quadrant_fractions(theta, qrx).as_array();
    let gamma = tia.responsivity_a_per_w;
    let total: f64 = gamma * received_power_w * fr.iter().sum::<f64>() * waveform_mean_square;

    // var(eps_q) = sigma_q^2 * mean(s^2) / h_buf, independent across quadrants.
    let eps_var: Vec<f64> = fr
        .iter()
        .map(|f_q| {
            quadrant_noise_variance(received_power_w * f_q, tia, cond) * waveform_mean_square
                / h_buf as f64
        })
        .collect();
    let var_sum: f64 = eps_var.iter().sum();
    let phi = crate::optics::f_qrx(theta, qrx).unwrap_or(0.0);
    // Ratio propagation: var(N/T) with N = (B+D)-(A+C), T the sum.
    let cov_nt = eps_var[1] + eps_var[3] - eps_var[0] - eps_var[2];
    let phi_var = (var_sum + phi * phi * var_sum - 2.0 * phi * cov_nt) / (total * total);

    // Local inverse-table slope d(theta)/d(phi).
    let dphi = 1e-4;
    let slope = (table.lookup(phi + dphi) - table.lookup(phi - dphi)) / (2.0 * dphi);
    phi_var.sqrt() * slope.abs()
}

fn norm1(m: &[[f64; 4]; 4]) -> f64 {
    (0..4)
        .map(|j| (0..4).map(|i| m[i][j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Gauss-Jordan inversion with partial pivoting.
fn invert4(m: &[[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut a = *m;
    let mut inv = [[0.0f64; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let pivot_row = (col..4)
            .max_by(|&a_i, &b_i| a[a_i][col].abs().partial_cmp(&a[b_i][col].abs()).unwrap())?;
        if a[pivot_row][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot_row);
        inv.swap(col, pivot_row);
        let pivot = a[col][col];
        for j in 0..4 {
            a[col][j] /= pivot;
            inv[col][j] /= pivot;
        }
        for row in 0..4 {
            if row == col {
                continue;
            }
            let factor = a[row][col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..4 {
                a[row][j] -= factor * a[col][j];
                inv[row][j] -= factor * inv[col][j];
            }
        }
    }
    Some(inv)
}

/// Errors for the bound computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrlbError {
    /// Fewer than 100 Monte Carlo trials requested.
    InsufficientTrials,
    /// The pipeline failed to produce measurements at the static geometry.
    MeasurementUnavailable,
    /// Noise model has non-positive entries.
    InvalidNoise,
    /// A TX lies on or behind the receiver baseline.
    BehindBaseline,
    /// FIM not invertible (all-zero row or condition number too large).
    SingularFim,
}

impl std::fmt::Display for CrlbError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CrlbError::InsufficientTrials => write!(f, "at least 100 trials required"),
            CrlbError::MeasurementUnavailable => {
                write!(f, "pipeline produced too few valid AoA measurements")
            }
            CrlbError::InvalidNoise => write!(f, "AoA noise sigmas must be positive"),
            CrlbError::BehindBaseline => write!(f, "TX position behind the receiver baseline"),
            CrlbError::SingularFim => write!(f, "Fisher information matrix is singular"),
        }
    }
}

impl std::error::Error for CrlbError {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{true_aoa, RxIndex};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fim_reference_values() {
        // p1 = (0.8, 5), L = 1.6, sigma = 1 mrad on all channels. Hand
        // evaluation of the derivative formulas gives F[x1,x1] = 7.6056e4,
        // F[y1,y1] = 1.9470e3, F[x1,y1] = 0 (symmetric geometry).
        let noise = AoANoiseModel::uniform(1e-3);
        let f = fim(Point::new(0.8, 5.0), Point::new(2.4, 5.0), 1.6, &noise).unwrap();
        assert!(((f[0][0] - 7.6056e4) / 7.6056e4).abs() < 1e-3, "{}", f[0][0]);
        assert!(((f[1][1] - 1.9470e3) / 1.9470e3).abs() < 1e-3, "{}", f[1][1]);
        assert!(f[0][1].abs() < 1e-9);
        // Cross-TX entries vanish exactly.
        for i in 0..2 {
            for j in 2..4 {
                assert_eq!(f[i][j], 0.0);
                assert_eq!(f[j][i], 0.0);
            }
        }
    }

    #[test]
    fn crlb_reference_values() {
        let noise = AoANoiseModel::uniform(1e-3);
        let f = fim(Point::new(0.8, 5.0), Point::new(2.4, 5.0), 1.6, &noise).unwrap();
        let result = crlb(&f).unwrap();
        // 2x2 inversion of the block above: std_x = 3.63 mm, std_y = 22.7 mm,
        // position bound = 2.30 cm.
        assert!((result.variances[0].sqrt() - 3.626e-3).abs() < 1e-5);
        assert!((result.variances[1].sqrt() - 2.2663e-2).abs() < 1e-5);
        assert!((result.position_bounds[0] - 2.2951e-2).abs() < 1e-5);
    }

    #[test]
    fn sigma_scaling_linearity() {
        let p1 = Point::new(0.3, 4.0);
        let p2 = Point::new(1.9, 4.0);
        let base = crlb(&fim(p1, p2, 1.6, &AoANoiseModel::uniform(1e-3)).unwrap()).unwrap();
        let scaled = crlb(&fim(p1, p2, 1.6, &AoANoiseModel::uniform(3e-3)).unwrap()).unwrap();
        for tx in 0..2 {
            let ratio = scaled.position_bounds[tx] / base.position_bounds[tx];
            assert!((ratio - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_geometry_decouples_x_and_y() {
        // x1 = L/2 puts the TX on the perpendicular bisector of the
        // baseline; the cross term cancels by symmetry.
        let noise = AoANoiseModel::uniform(2e-3);
        let f = fim(Point::new(0.8, 7.0), Point::new(2.4, 7.0), 1.6, &noise).unwrap();
        assert!(f[0][1].abs() < 1e-12);
    }

    #[test]
    fn fim_matches_finite_difference_jacobian() {
        // Independent oracle: central finite differences of the true AoA
        // map, assembled into J^T W J, against the closed-form FIM.
        let mut rng = ChaCha8Rng::seed_from_u64(0xF1B);
        let l = 1.6;
        for _ in 0..100 {
            let p1 = Point::new(rng.random_range(-4.0..4.0), rng.random_range(0.5..15.0));
            let p2 = Point::new(rng.random_range(-4.0..4.0), rng.random_range(0.5..15.0));
            let noise = AoANoiseModel {
                sigma: std::array::from_fn(|_| rng.random_range(1e-4..5e-3)),
            };
            let analytic = fim(p1, p2, l, &noise).unwrap();

            let h = 1e-6;
            let aoa = |p: Point, rx: RxIndex| true_aoa(p, rx, l).unwrap();
            let mut numeric = [[0.0f64; 4]; 4];
            for (tx, p) in [p1, p2].into_iter().enumerate() {
                for (ch_local, rx) in RxIndex::BOTH.into_iter().enumerate() {
                    let sigma = noise.sigma[2 * ch_local + tx];
                    let w = 1.0 / (sigma * sigma);
                    let gx = (aoa(Point::new(p.x + h, p.y), rx)
                        - aoa(Point::new(p.x - h, p.y), rx))
                        / (2.0 * h);
                    let gy = (aoa(Point::new(p.x, p.y + h), rx)
                        - aoa(Point::new(p.x, p.y - h), rx))
                        / (2.0 * h);
                    let (ix, iy) = (2 * tx, 2 * tx + 1);
                    numeric[ix][ix] += w * gx * gx;
                    numeric[ix][iy] += w * gx * gy;
                    numeric[iy][ix] += w * gx * gy;
                    numeric[iy][iy] += w * gy * gy;
                }
            }
            for i in 0..4 {
                for j in 0..4 {
                    let scale = analytic[i][i].max(analytic[j][j]);
                    assert!(
                        (analytic[i][j] - numeric[i][j]).abs() <= 1e-6 * scale,
                        "entry ({i},{j}): {} vs {}",
                        analytic[i][j],
                        numeric[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn singular_inputs_rejected() {
        let noise = AoANoiseModel::uniform(1e-3);
        assert_eq!(
            fim(Point::new(0.0, -1.0), Point::new(1.6, 5.0), 1.6, &noise).err(),
            Some(CrlbError::BehindBaseline)
        );
        assert_eq!(
            fim(Point::new(0.0, 5.0), Point::new(1.6, 5.0), 1.6, &AoANoiseModel::uniform(0.0))
                .err(),
            Some(CrlbError::InvalidNoise)
        );
        let singular = [[0.0f64; 4]; 4];
        assert_eq!(crlb(&singular).err(), Some(CrlbError::SingularFim));
    }

    #[test]
    fn invert4_recovers_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let mut m = [[0.0f64; 4]; 4];
            for row in m.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.random_range(-2.0..2.0);
                }
            }
            // Diagonal dominance keeps the test matrices well conditioned.
            for i in 0..4 {
                m[i][i] += 5.0;
            }
            let inv = invert4(&m).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let prod: f64 = (0..4).map(|k| m[i][k] * inv[k][j]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((prod - expect).abs() < 1e-9);
                }
            }
        }
    }
}
