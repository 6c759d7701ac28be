//! BFSK waveform generation, demodulation/remodulation, and the
//! buffer-correlation AoA measurement pipeline, including the processing
//! latency model.
//!
//! Bits ride on one of two sinusoid tones. The receiver buffers `h_buf`
//! sampled quadrant readings, demodulates the (noisy) quadrant sum,
//! remodulates the decided bits into a clean unit-amplitude reference, and
//! correlates each quadrant against that reference to estimate per-quadrant
//! signal powers. The power ratio then indexes the inverse QRX table.

use crate::optics::GqrxTable;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// BFSK modulation parameters for one transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfskConfig {
    /// Tone for bit 0, Hz.
    pub tone0_hz: f64,
    /// Tone for bit 1, Hz.
    pub tone1_hz: f64,
    /// Bit rate, bits/s.
    pub bit_rate_hz: f64,
    /// Sampling period `T_s`, seconds.
    pub sample_period_s: f64,
    /// Peak amplitude in unit photocurrent.
    pub amplitude: f64,
}

impl BfskConfig {
    pub fn new(tones: (f64, f64), bit_rate_hz: f64, sample_period_s: f64) -> Self {
        Self {
            tone0_hz: tones.0,
            tone1_hz: tones.1,
            bit_rate_hz,
            sample_period_s,
            amplitude: 1.0,
        }
    }

    /// Samples per bit (validated to be an integer count).
    pub fn samples_per_bit(&self) -> usize {
        (1.0 / (self.bit_rate_hz * self.sample_period_s)).round() as usize
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        let fs = 1.0 / self.sample_period_s;
        if !(self.tone0_hz > 0.0 && self.tone1_hz > 0.0 && self.tone0_hz != self.tone1_hz) {
            return Err(SignalError::InvalidConfig);
        }
        if self.bit_rate_hz <= 0.0 || self.sample_period_s <= 0.0 || self.amplitude <= 0.0 {
            return Err(SignalError::InvalidConfig);
        }
        // Nyquist for the higher tone.
        if fs <= 2.0 * self.tone0_hz.max(self.tone1_hz) {
            return Err(SignalError::InvalidConfig);
        }
        // Integer samples per bit keeps bit windows aligned to the grid.
        let spb = fs / self.bit_rate_hz;
        if (spb - spb.round()).abs() > 1e-9 || spb < 2.0 {
            return Err(SignalError::InvalidConfig);
        }
        Ok(())
    }

    fn tone(&self, bit: u8) -> f64 {
        if bit == 0 {
            self.tone0_hz
        } else {
            self.tone1_hz
        }
    }
}

/// Streaming phase-continuous BFSK modulator.
#[derive(Debug, Clone)]
pub struct BfskModulator {
    cfg: BfskConfig,
    phase: f64,
}

impl BfskModulator {
    pub fn new(cfg: BfskConfig) -> Self {
        Self { cfg, phase: 0.0 }
    }

    /// Produce the next sample for the given bit and advance the phase.
    pub fn step(&mut self, bit: u8) -> f64 {
        let s = self.cfg.amplitude * self.phase.sin();
        self.phase += 2.0 * PI * self.cfg.tone(bit) * self.cfg.sample_period_s;
        if self.phase > 2.0 * PI {
            self.phase -= 2.0 * PI;
        }
        s
    }
}

/// Modulate a bit sequence into a phase-continuous BFSK waveform.
pub fn bfsk_modulate(bits: &[u8], cfg: &BfskConfig) -> Vec<f64> {
    let spb = cfg.samples_per_bit();
    let mut modulator = BfskModulator::new(*cfg);
    let mut out = Vec::with_capacity(bits.len() * spb);
    for &bit in bits {
        for _ in 0..spb {
            out.push(modulator.step(bit));
        }
    }
    out
}

/// Sampled per-quadrant TIA voltage readings for one estimation cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantBuffer {
    /// Four equal-length sample sequences, volts (A, B, C, D).
    pub readings: [Vec<f64>; 4],
    /// Sample index of the first buffered sample.
    pub w0: usize,
    /// Sampling period, seconds.
    pub sample_period_s: f64,
}

impl QuadrantBuffer {
    pub fn len(&self) -> usize {
        self.readings[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings[0].is_empty()
    }

    /// Sum of the four quadrant channels (the full-aperture signal).
    pub fn quadrant_sum(&self) -> Vec<f64> {
        let mut sum = self.readings[0].clone();
        for q in 1..4 {
            for (acc, v) in sum.iter_mut().zip(self.readings[q].iter()) {
                *acc += v;
            }
        }
        sum
    }

    /// Timestamp of the buffer midpoint: `T_s * (w0 + h_buf / 2)`.
    pub fn midpoint_time_s(&self) -> f64 {
        self.sample_period_s * (self.w0 as f64 + self.len() as f64 / 2.0)
    }
}

/// Per-bit decision margin below which a bit counts as unreliable.
///
/// Tone energies of pure noise are an iid exponential pair, whose relative
/// margin |E1-E0|/(E1+E0) is uniform on [0, 1]; requiring 0.6 makes a
/// signal-free buffer fail the majority test while leaving generous room
/// for genuine signals, whose margins sit near 1.
const DECODE_MARGIN: f64 = 0.6;

/// Demodulate a buffered waveform and remodulate the decided bits.
///
/// Decision is per-bit noncoherent tone-energy comparison using quadrature
/// correlation at the two tones. Returns the bits and the clean
/// unit-amplitude reference `s_hat` aligned with the buffer. Fails with
/// [`SignalError::DecodeFailure`] when more than half of the bits have an
/// energy margin under the threshold, which signals loss of link.
pub fn demod_remod(buffer_sum: &[f64], cfg: &BfskConfig) -> Result<(Vec<u8>, Vec<f64>), SignalError> {
    let spb = cfg.samples_per_bit();
    if buffer_sum.len() < spb {
        return Err(SignalError::DecodeFailure);
    }
    let n_bits = buffer_sum.len() / spb;
    let mut bits = Vec::with_capacity(n_bits);
    let mut weak = 0usize;

    let omega0 = 2.0 * PI * cfg.tone0_hz * cfg.sample_period_s;
    let omega1 = 2.0 * PI * cfg.tone1_hz * cfg.sample_period_s;
    for b in 0..n_bits {
        let window = &buffer_sum[b * spb..(b + 1) * spb];
        let e0 = tone_energy(window, omega0);
        let e1 = tone_energy(window, omega1);
        bits.push(u8::from(e1 > e0));
        let margin = (e1 - e0).abs() / (e0 + e1 + f64::MIN_POSITIVE);
        if margin < DECODE_MARGIN {
            weak += 1;
        }
    }
    if 2 * weak > n_bits {
        return Err(SignalError::DecodeFailure);
    }

    let mut clean_cfg = *cfg;
    clean_cfg.amplitude = 1.0;
    let s_hat = bfsk_modulate(&bits, &clean_cfg);
    Ok((bits, s_hat))
}

/// Quadrature tone energy of a window at normalized pulsation `omega`.
fn tone_energy(window: &[f64], omega: f64) -> f64 {
    let mut acc_sin = 0.0;
    let mut acc_cos = 0.0;
    let (step_sin, step_cos) = omega.sin_cos();
    // Iteratively rotate the reference phasor; avoids a sin/cos per sample.
    let mut ref_sin = 0.0f64;
    let mut ref_cos = 1.0f64;
    for &x in window {
        acc_sin += x * ref_sin;
        acc_cos += x * ref_cos;
        let next_sin = ref_sin * step_cos + ref_cos * step_sin;
        let next_cos = ref_cos * step_cos - ref_sin * step_sin;
        ref_sin = next_sin;
        ref_cos = next_cos;
    }
    acc_sin * acc_sin + acc_cos * acc_cos
}

/// Per-quadrant signal power estimates:
/// `eps_q = (1/h_buf) * sum_w Q_q[w] * s_hat[w]`.
pub fn estimate_quadrant_power(buffer: &QuadrantBuffer, s_hat: &[f64]) -> [f64; 4] {
    assert_eq!(buffer.len(), s_hat.len(), "buffer and reference length mismatch");
    let h = buffer.len() as f64;
    std::array::from_fn(|q| {
        buffer.readings[q]
            .iter()
            .zip(s_hat.iter())
            .map(|(r, s)| r * s)
            .sum::<f64>()
            / h
    })
}

/// One AoA measurement produced from a quadrant buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoAMeasurement {
    /// Measured AoA, radians.
    pub theta_hat: f64,
    /// Quadrant power ratio fed to the inverse table.
    pub phi_hat: f64,
    /// Per-quadrant power estimates (A, B, C, D).
    pub per_quadrant_power: [f64; 4],
    /// Buffer midpoint timestamp, seconds.
    pub timestamp_s: f64,
    /// False when the ratio saturated (|phi| >= 1): theta is clamped to the
    /// FoV edge and should not be used for localization.
    pub valid: bool,
}

/// Turn per-quadrant power estimates into an AoA measurement via the
/// inverse QRX table.
pub fn measure_aoa(
    eps: [f64; 4],
    table: &GqrxTable,
    timestamp_s: f64,
) -> Result<AoAMeasurement, SignalError> {
    let total: f64 = eps.iter().sum();
    if total <= 0.0 {
        return Err(SignalError::InvalidPower);
    }
    let phi = ((eps[1] + eps[3]) - (eps[0] + eps[2])) / total;
    let valid = phi.abs() < 1.0;
    let theta = table.lookup(phi.clamp(-1.0, 1.0));
    Ok(AoAMeasurement {
        theta_hat: theta,
        phi_hat: phi,
        per_quadrant_power: eps,
        timestamp_s,
        valid,
    })
}

/// Processing-cost model of the measurement pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    /// Scale on the FFT-like demod/remod term.
    pub k_alpha: f64,
    /// Additive demod/remod constant, operations.
    pub k_beta: f64,
    /// Operations for the inverse-table lookup.
    pub h_lookup: f64,
    /// Processor clock period, seconds.
    pub clock_period_s: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            k_alpha: 1.0,
            k_beta: 0.0,
            h_lookup: 64.0,
            clock_period_s: 0.33e-9,
        }
    }
}

/// Latency and rate figures for a buffer length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyReport {
    /// Processing time `t_uP`, seconds.
    pub processing_s: f64,
    /// Measurement rate `f_u = 1 / (T_s h_buf)`, Hz.
    pub rate_hz: f64,
    /// Fixed delay `T_s h_buf / 2 + t_uP`, seconds.
    pub fixed_delay_s: f64,
}

/// Evaluate the latency model:
/// `t_uP = T_FP (k_a h log2 h + k_b) + T_FP (2 h + h_LU)`.
pub fn latency(model: &LatencyModel, h_buf: usize, sample_period_s: f64) -> LatencyReport {
    let h = h_buf as f64;
    let demod = model.clock_period_s * (model.k_alpha * h * h.log2() + model.k_beta);
    let lookup = model.clock_period_s * (2.0 * h + model.h_lookup);
    let processing = demod + lookup;
    LatencyReport {
        processing_s: processing,
        rate_hz: 1.0 / (sample_period_s * h),
        fixed_delay_s: sample_period_s * h / 2.0 + processing,
    }
}

/// Errors for the signal pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalError {
    /// Configuration violates Nyquist or bit-grid constraints.
    InvalidConfig,
    /// Too many unreliable bits: the link is effectively down.
    DecodeFailure,
    /// Non-positive total quadrant power; no measurement possible.
    InvalidPower,
}

impl std::fmt::Display for SignalError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SignalError::InvalidConfig => write!(f, "invalid BFSK configuration"),
            SignalError::DecodeFailure => write!(f, "decode failure: energy margin too low"),
            SignalError::InvalidPower => write!(f, "total estimated quadrant power is not positive"),
        }
    }
}

impl std::error::Error for SignalError {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{quadrant_fractions, GqrxTable, QrxOpticalConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const DEG: f64 = PI / 180.0;

    fn tx1_cfg() -> BfskConfig {
        BfskConfig::new((5e3, 6e3), 1e3, 1e-6)
    }

    fn tx2_cfg() -> BfskConfig {
        BfskConfig::new((12e3, 13e3), 1e3, 1e-6)
    }

    fn random_bits(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0..2u8)).collect()
    }

    #[test]
    fn config_validation() {
        tx1_cfg().validate().unwrap();
        tx2_cfg().validate().unwrap();
        let mut bad = tx1_cfg();
        bad.sample_period_s = 1e-4; // 10 kHz sampling < 2 * 6 kHz
        assert_eq!(bad.validate(), Err(SignalError::InvalidConfig));
        let mut ragged = tx1_cfg();
        ragged.bit_rate_hz = 333.0; // non-integer samples per bit
        assert_eq!(ragged.validate(), Err(SignalError::InvalidConfig));
    }

    #[test]
    fn modulated_tone_properties() {
        let cfg = tx1_cfg();
        let wave = bfsk_modulate(&[0], &cfg);
        assert_eq!(wave.len(), cfg.samples_per_bit());
        // Unit amplitude, values within [-1, 1], peak close to 1.
        let peak = wave.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        assert!(peak <= 1.0 + 1e-12 && peak > 0.99);
        // Whole-cycle mean square of a sinusoid is 1/2.
        let msq = wave.iter().map(|s| s * s).sum::<f64>() / wave.len() as f64;
        assert!((msq - 0.5).abs() < 1e-6, "mean square {msq}");
    }

    #[test]
    fn phase_continuity_across_bits() {
        let cfg = tx1_cfg();
        let wave = bfsk_modulate(&random_bits(16, 3), &cfg);
        // No jump larger than the maximum per-sample slope of either tone.
        let max_step = 2.0 * PI * 6e3 * cfg.sample_period_s * 1.01;
        for w in wave.windows(2) {
            assert!((w[1] - w[0]).abs() <= max_step);
        }
    }

    #[test]
    fn noiseless_loopback() {
        for cfg in [tx1_cfg(), tx2_cfg()] {
            let bits = random_bits(64, 11);
            let wave = bfsk_modulate(&bits, &cfg);
            let (decoded, s_hat) = demod_remod(&wave, &cfg).unwrap();
            assert_eq!(decoded, bits);
            for (a, b) in s_hat.iter().zip(wave.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loopback_at_20db_snr_is_error_free() {
        // 10^4 bits at 20 dB amplitude SNR: expect zero bit errors.
        let cfg = tx1_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(0x20DB);
        let mut total_errors = 0usize;
        for chunk in 0..10 {
            let bits = random_bits(1000, 100 + chunk);
            let mut wave = bfsk_modulate(&bits, &cfg);
            let sigma = 0.1; // amplitude 1.0 -> 20 dB
            for s in wave.iter_mut() {
                *s += sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            let (decoded, _) = demod_remod(&wave, &cfg).unwrap();
            total_errors += decoded
                .iter()
                .zip(bits.iter())
                .filter(|(a, b)| a != b)
                .count();
        }
        assert_eq!(total_errors, 0);
    }

    #[test]
    fn pure_noise_fails_decode() {
        let cfg = tx1_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(0xDEAD);
        let mut failures = 0;
        for _ in 0..10 {
            let noise: Vec<f64> = (0..20_000)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            if demod_remod(&noise, &cfg).is_err() {
                failures += 1;
            }
        }
        assert!(failures >= 7, "only {failures}/10 noise buffers failed decode");
    }

    #[test]
    fn quadrant_power_estimation_noiseless() {
        let cfg = tx1_cfg();
        let bits = random_bits(20, 5);
        let s_hat = bfsk_modulate(&bits, &cfg);
        let c = [0.7, 1.1, 0.4, 0.9];
        let buffer = QuadrantBuffer {
            readings: std::array::from_fn(|q| s_hat.iter().map(|s| c[q] * s).collect()),
            w0: 0,
            sample_period_s: cfg.sample_period_s,
        };
        let msq = s_hat.iter().map(|s| s * s).sum::<f64>() / s_hat.len() as f64;
        let eps = estimate_quadrant_power(&buffer, &s_hat);
        for q in 0..4 {
            assert!((eps[q] - c[q] * msq).abs() < 1e-12);
            assert!((eps[q] - c[q] * 0.5).abs() < 1e-3);
        }
    }

    #[test]
    fn quadrant_power_noise_floor_shrinks_with_buffer() {
        // Zero-mean noise only: |eps| < 3 sigma / sqrt(h_buf).
        let cfg = tx1_cfg();
        let sigma = 1.0;
        for h in [2_000usize, 20_000] {
            let bits = random_bits(h / cfg.samples_per_bit(), 9);
            let s_hat = bfsk_modulate(&bits, &cfg);
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let buffer = QuadrantBuffer {
                readings: std::array::from_fn(|_| {
                    (0..h)
                        .map(|_| sigma * rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .collect()
                }),
                w0: 0,
                sample_period_s: cfg.sample_period_s,
            };
            let eps = estimate_quadrant_power(&buffer, &s_hat);
            // Correlating against a ~unit-power reference: std ~ sigma*sqrt(msq/h).
            let bound = 3.0 * sigma / (h as f64 * 0.5).sqrt();
            for e in eps {
                assert!(e.abs() < bound, "h={h}: eps {e} vs bound {bound}");
            }
        }
    }

    #[test]
    fn cross_tone_rejection() {
        // A second transmitter on the other tone pair contributes < 1% of
        // its own power to the correlation estimate over a full buffer.
        let cfg1 = tx1_cfg();
        let cfg2 = tx2_cfg();
        let bits1 = random_bits(20, 21);
        let bits2 = random_bits(20, 22);
        let s1 = bfsk_modulate(&bits1, &cfg1);
        let s2 = bfsk_modulate(&bits2, &cfg2);
        let own: f64 = s2.iter().map(|s| s * s).sum::<f64>() / s2.len() as f64;
        let leak: f64 = s1.iter().zip(s2.iter()).map(|(a, b)| a * b).sum::<f64>() / s1.len() as f64;
        assert!(leak.abs() < 0.01 * own, "leakage {leak} vs own power {own}");
    }

    #[test]
    fn aoa_measurement_pipeline_identity() {
        let qrx = QrxOpticalConfig::default();
        let table = GqrxTable::build(&qrx, 2048).unwrap();
        // Equal powers on all quadrants: boresight.
        let m = measure_aoa([0.2; 4], &table, 0.5).unwrap();
        assert!(m.valid && m.theta_hat.abs() < 1e-9 && m.phi_hat.abs() < 1e-12);
        assert_eq!(m.timestamp_s, 0.5);

        // Powers generated from the forward model at 30 degrees.
        let fr = quadrant_fractions(30.0 * DEG, &qrx);
        let m = measure_aoa(fr.as_array(), &table, 0.0).unwrap();
        assert!(m.valid);
        assert!(
            (m.theta_hat - 30.0 * DEG).abs() < 0.1 * DEG,
            "theta {} deg",
            m.theta_hat / DEG
        );

        // Saturated ratio: flagged invalid, clamped to the FoV edge.
        let m = measure_aoa([0.0, 0.3, 0.0, 0.4], &table, 0.0).unwrap();
        assert!(!m.valid && (m.phi_hat - 1.0).abs() < 1e-12);
        assert!((m.theta_hat - table.theta_fov()).abs() < 1e-9);

        assert_eq!(
            measure_aoa([0.0; 4], &table, 0.0),
            Err(SignalError::InvalidPower)
        );
    }

    #[test]
    fn latency_model_values() {
        let model = LatencyModel::default();
        let report = latency(&model, 20_000, 1e-6);
        assert!((report.rate_hz - 50.0).abs() < 1e-9);
        let report_100 = latency(&model, 10_000, 1e-6);
        assert!((report_100.rate_hz - 100.0).abs() < 1e-9);
        // Frozen evaluation of the cost expression for h = 20000,
        // T_FP = 0.33 ns: 0.33e-9*(20000*log2(20000)) + 0.33e-9*(40064).
        let expected = 0.33e-9 * (20_000.0f64 * 20_000.0f64.log2()) + 0.33e-9 * 40_064.0;
        assert!((report.processing_s - expected).abs() < 1e-15);
        assert!(report.processing_s < 1e-3);
        assert!((report.fixed_delay_s - (0.01 + report.processing_s)).abs() < 1e-12);
    }
}
