//! Line-of-sight optical channel: Lambertian emission, inverse-square
//! propagation, weather attenuation, background light, and the shot/thermal
//! noise of the receiver front end.
//!
//! Powers are optical watts at the lens; the TIA converts the photocurrent
//! `gamma * P_r` into a voltage through its feedback resistance. Noise is
//! additive white Gaussian photocurrent with variance
//!
//! `sigma^2 = 2 q gamma P_r B  +  2 q I_bg I_B2 B  +  sigma_thm^2`
//!
//! where the thermal term is
//! `4 k T (I_B2 B / R_F + (2 pi C_T)^2 / g_m * Gamma I_B3 B^3)`.

use crate::geometry::{angle_from_heading, link_visible, Point, TxUnit};
use crate::optics::QuadrantFractions;
use crate::signal::QuadrantBuffer;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Coulomb electron charge, C.
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Ambient light level at the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ambient {
    /// Night-time driving: 10 uA background current.
    Night,
    /// Day-time indirect sunlight: 750 uA background current.
    DayIndirect,
}

impl Ambient {
    /// Background illumination current `I_bg`, amperes.
    pub fn background_current_a(&self) -> f64 {
        match self {
            Ambient::Night => 10e-6,
            Ambient::DayIndirect => 750e-6,
        }
    }
}

/// Weather along the optical path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weather {
    Clear,
    /// Heavy rain (about 10 mm/hr): 0.1 dB/m.
    Rain,
    /// Dense fog (about 200 m visibility): 0.3 dB/m.
    Fog,
}

impl Weather {
    pub fn attenuation_db_per_m(&self) -> f64 {
        match self {
            Weather::Clear => 0.0,
            Weather::Rain => 0.1,
            Weather::Fog => 0.3,
        }
    }
}

/// Combined ambient/weather channel context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelCondition {
    pub ambient: Ambient,
    pub weather: Weather,
}

impl ChannelCondition {
    pub fn new(ambient: Ambient, weather: Weather) -> Self {
        Self { ambient, weather }
    }

    pub fn night_clear() -> Self {
        Self::new(Ambient::Night, Weather::Clear)
    }

    pub fn day_rain() -> Self {
        Self::new(Ambient::DayIndirect, Weather::Rain)
    }
}

impl Default for ChannelCondition {
    fn default() -> Self {
        Self::night_clear()
    }
}

/// FET transimpedance front-end parameters of one quadrant channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TiaConfig {
    /// Photodiode responsivity `gamma`, A/W.
    pub responsivity_a_per_w: f64,
    /// Front-end bandwidth `B`, Hz.
    pub bandwidth_hz: f64,
    /// Input capacitance `C_T`, farads (per quadrant channel).
    pub capacitance_f: f64,
    /// Feedback resistance `R_F`, ohms.
    pub feedback_ohms: f64,
    /// FET transconductance `g_m`, siemens.
    pub transconductance_s: f64,
    /// FET channel noise factor `Gamma`.
    pub fet_noise_factor: f64,
    /// Noise bandwidth factor `I_B2`.
    pub i_b2: f64,
    /// Noise bandwidth factor `I_B3`.
    pub i_b3: f64,
    /// Circuit temperature, kelvin.
    pub temperature_k: f64,
    /// Open-loop voltage gain `G` with `R_F = G / (2 pi B C_T)`.
    pub open_loop_gain: f64,
}

impl Default for TiaConfig {
    fn default() -> Self {
        Self {
            responsivity_a_per_w: 0.5,
            bandwidth_hz: 10e6,
            capacitance_f: 45e-12,
            feedback_ohms: 2840.0,
            transconductance_s: 30e-3,
            fet_noise_factor: 1.5,
            i_b2: 0.562,
            i_b3: 0.0868,
            temperature_k: 298.0,
            // Consistent with R_F = G / (2 pi B C_T) for the values above.
            open_loop_gain: 8.03,
        }
    }
}

impl TiaConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let all_positive = self.responsivity_a_per_w > 0.0
            && self.bandwidth_hz > 0.0
            && self.capacitance_f > 0.0
            && self.feedback_ohms > 0.0
            && self.transconductance_s > 0.0
            && self.fet_noise_factor > 0.0
            && self.i_b2 > 0.0
            && self.i_b3 > 0.0
            && self.temperature_k > 0.0
            && self.open_loop_gain > 0.0;
        if !all_positive {
            return Err(ChannelError::InvalidTia);
        }
        let implied_rf =
            self.open_loop_gain / (2.0 * PI * self.bandwidth_hz * self.capacitance_f);
        if ((implied_rf - self.feedback_ohms) / self.feedback_ohms).abs() > 0.05 {
            return Err(ChannelError::InvalidTia);
        }
        Ok(())
    }
}

/// Relative Lambertian radiant intensity `cos^m(phi)`; zero outside the
/// forward hemisphere. Equals 1/2 at the half-power angle.
pub fn lambertian_relative(order: u32, phi: f64) -> f64 {
    if phi.abs() >= PI / 2.0 {
        return 0.0;
    }
    phi.cos().powi(order as i32)
}

/// Peak radiant intensity of a unit-power Lambertian source: `(m+1)/(2 pi)`
/// per steradian, so that the intensity integrates to the total power.
pub fn lambertian_peak_per_sr(order: u32) -> f64 {
    (order as f64 + 1.0) / (2.0 * PI)
}

/// Lambertian order for a given half-power angle:
/// `m = floor(-ln 2 / ln(cos(phi_half)))`.
pub fn lambertian_order_for_half_angle(phi_half: f64) -> u32 {
    (-(2.0f64.ln()) / phi_half.cos().ln()).floor() as u32
}

/// Multiplicative optical power factor for weather over a path length:
/// `10^(-att_dB_per_m * d / 10)`.
pub fn weather_factor(distance_m: f64, cond: &ChannelCondition) -> f64 {
    10f64.powf(-cond.weather.attenuation_db_per_m() * distance_m / 10.0)
}

/// Geometric gain of one TX-to-RX line-of-sight link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGain {
    /// Optical power gain `P_r / P_tx` (weather included).
    pub h: f64,
    /// Peak received optical power, watts.
    pub received_power_w: f64,
    /// Emission angle at the TX, radians.
    pub emission_angle: f64,
    /// Incidence AoA at the RX boresight, radians.
    pub incidence_aoa: f64,
    /// TX-RX distance, meters.
    pub distance_m: f64,
}

/// Evaluate one link's geometric gain in the ego frame (RX boresight +y).
///
/// `P_r = P_tx * w(d) * (m+1)/(2 pi) * cos^m(phi) * A cos(theta) / d^2`.
/// Fails with [`ChannelError::LinkDown`] when the RX is outside the TX
/// emission cone or the TX outside the RX field of view.
pub fn link_gain(
    tx: &TxUnit,
    rx_aperture_area_m2: f64,
    tx_pos: Point,
    tx_facing: f64,
    rx_pos: Point,
    rx_fov: f64,
    cond: &ChannelCondition,
) -> Result<LinkGain, ChannelError> {
    if !link_visible(tx_facing, tx_pos, rx_pos, tx.emission_half_angle, rx_fov) {
        return Err(ChannelError::LinkDown);
    }
    let to_rx = rx_pos - tx_pos;
    let distance = to_rx.norm();
    let emission = angle_from_heading(tx_facing, to_rx);
    let to_tx = tx_pos - rx_pos;
    let incidence = to_tx.x.atan2(to_tx.y);

    let h = weather_factor(distance, cond)
        * lambertian_peak_per_sr(tx.lambertian_order)
        * lambertian_relative(tx.lambertian_order, emission)
        * rx_aperture_area_m2
        * incidence.cos().max(0.0)
        / (distance * distance);

    Ok(LinkGain {
        h,
        received_power_w: tx.optical_power_w * h,
        emission_angle: emission,
        incidence_aoa: incidence,
        distance_m: distance,
    })
}

/// Shot noise photocurrent variance (A^2):
/// `2 q gamma P_r B + 2 q I_bg I_B2 B`.
pub fn shot_variance(p_r_w: f64, i_bg_a: f64, tia: &TiaConfig) -> f64 {
    2.0 * ELECTRON_CHARGE * tia.responsivity_a_per_w * p_r_w * tia.bandwidth_hz
        + 2.0 * ELECTRON_CHARGE * i_bg_a * tia.i_b2 * tia.bandwidth_hz
}

/// Thermal noise photocurrent variance (A^2) of the FET TIA front end.
pub fn thermal_variance(tia: &TiaConfig) -> f64 {
    let c = 2.0 * PI * tia.capacitance_f;
    4.0 * BOLTZMANN
        * tia.temperature_k
        * (tia.i_b2 * tia.bandwidth_hz / tia.feedback_ohms
            + c * c / tia.transconductance_s
                * tia.fet_noise_factor
                * tia.i_b3
                * tia.bandwidth_hz.powi(3))
}

/// Total AWGN photocurrent variance for a full receiver channel (A^2).
pub fn noise_variance(p_r_w: f64, tia: &TiaConfig, cond: &ChannelCondition) -> f64 {
    shot_variance(p_r_w, cond.ambient.background_current_a(), tia) + thermal_variance(tia)
}

/// Per-quadrant AWGN variance. Each quadrant runs its own TIA: it sees its
/// share of the signal power in the signal-dependent shot term, a quarter
/// of the background current, and the full thermal noise.
pub fn quadrant_noise_variance(
    quadrant_signal_power_w: f64,
    tia: &TiaConfig,
    cond: &ChannelCondition,
) -> f64 {
    shot_variance(
        quadrant_signal_power_w,
        cond.ambient.background_current_a() / 4.0,
        tia,
    ) + thermal_variance(tia)
}

/// One TX signal incident on a QRX, ready for quadrant synthesis.
#[derive(Debug, Clone, Copy)]
pub struct IncidentSignal<'a> {
    /// Unit-amplitude transmit waveform samples.
    pub waveform: &'a [f64],
    pub gain: LinkGain,
    pub fractions: QuadrantFractions,
}

/// Synthesize the four sampled TIA voltage readings for one buffer window.
///
/// For quadrant `q` each sample is
/// `R_F * (sum_j gamma P_rj f_qj s_j[w] + n_q[w])` with independent AWGN
/// across quadrants and samples. `noise_scale` scales the noise standard
/// deviation (0 disables noise while keeping the RNG stream aligned).
pub fn synthesize_quadrants(
    signals: &[IncidentSignal<'_>],
    tia: &TiaConfig,
    cond: &ChannelCondition,
    rng: &mut ChaCha8Rng,
    noise_scale: f64,
    w0: usize,
    sample_period_s: f64,
) -> QuadrantBuffer {
    let len = signals.first().map_or(0, |s| s.waveform.len());
    let mut readings: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; len]);
    synthesize_quadrants_into(signals, tia, cond, rng, noise_scale, &mut readings, 0, len);
    QuadrantBuffer {
        readings,
        w0,
        sample_period_s,
    }
}

/// Fill `readings[q][offset..offset+len]` with synthesized samples.
///
/// Exposed separately so the engine can stitch a buffer from several
/// geometry blocks without reallocating.
pub fn synthesize_quadrants_into(
    signals: &[IncidentSignal<'_>],
    tia: &TiaConfig,
    cond: &ChannelCondition,
    rng: &mut ChaCha8Rng,
    noise_scale: f64,
    readings: &mut [Vec<f64>; 4],
    offset: usize,
    len: usize,
) {
    let gamma = tia.responsivity_a_per_w;
    let r_f = tia.feedback_ohms;

    // Per-quadrant signal amplitudes (photocurrent) and noise sigmas.
    let mut amp = [[0.0f64; 4]; 8];
    debug_assert!(signals.len() <= amp.len());
    let mut sigma = [0.0f64; 4];
    for q in 0..4 {
        let mut quadrant_power = 0.0;
        for (j, s) in signals.iter().enumerate() {
            let f_q = s.fractions.as_array()[q];
            amp[j][q] = gamma * s.gain.received_power_w * f_q;
            quadrant_power += s.gain.received_power_w * f_q;
        }
        sigma[q] = quadrant_noise_variance(quadrant_power, tia, cond).sqrt() * noise_scale;
    }

    for w in 0..len {
        for (q, channel) in readings.iter_mut().enumerate() {
            let noise: f64 = StandardNormal.sample(rng);
            let mut current = sigma[q] * noise;
            for (j, s) in signals.iter().enumerate() {
                current += amp[j][q] * s.waveform[w];
            }
            channel[offset + w] = r_f * current;
        }
    }
}

/// Single-link convenience wrapper around [`synthesize_quadrants`].
pub fn synthesize_quadrant_readings(
    clean_waveform: &[f64],
    gain: &LinkGain,
    fractions: &QuadrantFractions,
    tia: &TiaConfig,
    cond: &ChannelCondition,
    rng_seed: u64,
) -> QuadrantBuffer {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let signal = IncidentSignal {
        waveform: clean_waveform,
        gain: *gain,
        fractions: *fractions,
    };
    synthesize_quadrants(&[signal], tia, cond, &mut rng, 1.0, 0, 1e-6)
}

/// Errors for the channel model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelError {
    /// TX and RX are not mutually visible.
    LinkDown,
    /// TIA parameters non-positive or inconsistent with the gain relation.
    InvalidTia,
}

impl std::fmt::Display for ChannelError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChannelError::LinkDown => write!(f, "line-of-sight link is down"),
            ChannelError::InvalidTia => write!(
                f,
                "TIA parameters must be positive and satisfy R_F = G/(2 pi B C_T) within 5%"
            ),
        }
    }
}

impl std::error::Error for ChannelError {}
