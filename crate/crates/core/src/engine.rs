//! Per-buffer simulation engine: evolves the scene, synthesizes noisy
//! quadrant readings for both QRXs, runs the measurement pipeline and
//! triangulation each estimation cycle, and aggregates error traces.
//!
//! A cycle spans `h_buf = 1/(f_u T_s)` samples. Within a buffer the
//! geometry is refreshed in 1 ms sample blocks, so a moving target sweeps
//! the channel gain across the buffer (the envelope effect emerges rather
//! than being modeled separately). Runs are deterministic given the seed;
//! independent trials/cells derive their streams as `seed XOR trial`.

use crate::channel::{
    link_gain, quadrant_noise_variance, ChannelCondition, ChannelError, IncidentSignal, LinkGain,
    TiaConfig,
};
use crate::geometry::{
    relative_tx_positions, tail_tx_units, GeometryError, Point, RelativeTargetState, TxUnit,
    VehicleGeometry, VehiclePose,
};
use crate::optics::{quadrant_fractions, GqrxTable, OpticsError, QrxOpticalConfig};
use crate::scenario::{
    sm1_trajectory, sm2_trajectory, sm3_locations, GridLocation, ScenarioError,
    ScenarioTrajectory, Sm1Params, Sm2Params, Sm3Params, Sm4Params, TrajectorySample,
};
use crate::signal::{
    demod_remod, estimate_quadrant_power, measure_aoa, BfskConfig, BfskModulator, QuadrantBuffer,
    SignalError,
};
use crate::vlp::{localization_error, triangulate, LocalizationError, PositionEstimate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Geometry refresh granularity inside a buffer, seconds.
pub const GEOMETRY_BLOCK_S: f64 = 1e-3;

/// Stream-separation tags for the per-run RNG streams.
const NOISE_STREAM_TAG: [u64; 2] = [0x9E37_79B9_7F4A_7C15, 0xD1B5_4A32_D192_ED03];
const BIT_STREAM_TAG: [u64; 2] = [0xC2B2_AE3D_27D4_EB4F, 0x1656_67B1_9E37_79F9];

/// Full parameter set of one simulation, excluding the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub geometry: VehicleGeometry,
    pub qrx: QrxOpticalConfig,
    pub tia: TiaConfig,
    pub condition: ChannelCondition,
    /// Peak TX optical power, watts (tail light).
    pub tx_optical_power_w: f64,
    /// Lambertian order of the TX beam pattern.
    pub lambertian_order: u32,
    /// TX emission cone half-angle for visibility, degrees.
    pub tx_emission_half_angle_deg: f64,
    /// BFSK tone pairs of the two TXs, Hz.
    pub tx1_tones_hz: (f64, f64),
    pub tx2_tones_hz: (f64, f64),
    pub bit_rate_hz: f64,
    /// Sampling period `T_s`, seconds.
    pub sample_period_s: f64,
    /// Localization rate `f_u`, Hz.
    pub rate_hz: f64,
    /// Collection aperture area per QRX, m^2.
    pub rx_aperture_area_m2: f64,
    /// Inverse-table resolution.
    pub gqrx_table_points: usize,
    /// Scale on every noise standard deviation (0 disables noise while
    /// keeping RNG streams aligned).
    pub noise_scale: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            geometry: VehicleGeometry::default(),
            qrx: QrxOpticalConfig::default(),
            tia: TiaConfig::default(),
            condition: ChannelCondition::default(),
            tx_optical_power_w: 2.0,
            lambertian_order: 11,
            tx_emission_half_angle_deg: 60.0,
            tx1_tones_hz: (5e3, 6e3),
            tx2_tones_hz: (12e3, 13e3),
            bit_rate_hz: 1e3,
            sample_period_s: 1e-6,
            rate_hz: 50.0,
            rx_aperture_area_m2: 50e-6,
            gqrx_table_points: crate::optics::DEFAULT_TABLE_POINTS,
            noise_scale: 1.0,
        }
    }
}

impl SimParams {
    pub fn bfsk_configs(&self) -> [BfskConfig; 2] {
        [
            BfskConfig::new(self.tx1_tones_hz, self.bit_rate_hz, self.sample_period_s),
            BfskConfig::new(self.tx2_tones_hz, self.bit_rate_hz, self.sample_period_s),
        ]
    }

    /// Buffer length for the configured rate.
    pub fn h_buf(&self) -> usize {
        (1.0 / (self.rate_hz * self.sample_period_s)).round() as usize
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        self.geometry.validate()?;
        self.qrx.validate()?;
        self.tia.validate()?;
        for cfg in self.bfsk_configs() {
            cfg.validate()?;
        }
        if !(10.0..=1000.0).contains(&self.rate_hz) {
            return Err(EngineError::InvalidRate);
        }
        if self.tx_optical_power_w <= 0.0
            || self.rx_aperture_area_m2 <= 0.0
            || self.noise_scale < 0.0
            || self.tx_emission_half_angle_deg <= 0.0
        {
            return Err(EngineError::InvalidParams);
        }
        // Rate consistency: f_u * h_buf * T_s = 1 with an integer h_buf that
        // aligns to the bit grid (buffers start on bit boundaries).
        let h = 1.0 / (self.rate_hz * self.sample_period_s);
        if (h - h.round()).abs() > 1e-6 {
            return Err(EngineError::InvalidRate);
        }
        let spb = self.bfsk_configs()[0].samples_per_bit();
        if self.h_buf() % spb != 0 {
            return Err(EngineError::InvalidRate);
        }
        Ok(())
    }
}

/// Scenario selector for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioConfig {
    Sm1(Sm1Params),
    Sm2(Sm2Params),
    Sm3(Sm3Params),
    Sm4(Sm4Params),
    /// Fixed relative geometry for a given duration.
    Static {
        target: VehiclePose,
        duration_s: f64,
    },
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub params: SimParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub n_repeats: usize,
}

fn default_repeats() -> usize {
    1
}

/// Result of one estimation cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    /// Buffer midpoint timestamp, seconds.
    pub t_s: f64,
    /// True TX positions at the midpoint.
    pub truth: RelativeTargetState,
    pub estimate: PositionEstimate,
    /// Per-TX and joint errors; present only for complete estimates.
    pub error: Option<LocalizationError>,
    /// Post-TIA electrical SNR per link, dB, `[rx][tx]`; None when down.
    pub snr_db: [[Option<f64>; 2]; 2],
}

impl CycleRecord {
    pub fn complete(&self) -> bool {
        self.estimate.complete()
    }
}

/// Aggregate statistics of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub n_cycles: usize,
    /// Fraction of cycles with both TX estimates valid.
    pub availability: f64,
    pub mean_norm_e_m: Option<f64>,
    pub median_norm_e_m: Option<f64>,
    pub p95_norm_e_m: Option<f64>,
}

/// Per-cycle records plus summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub records: Vec<CycleRecord>,
    pub summary: RunSummary,
}

impl RunResult {
    fn from_records(records: Vec<CycleRecord>) -> Self {
        let n = records.len();
        let mut norms: Vec<f64> = records
            .iter()
            .filter_map(|r| r.error.map(|e| e.norm))
            .collect();
        norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let availability = if n == 0 {
            0.0
        } else {
            norms.len() as f64 / n as f64
        };
        let percentile = |q: f64| -> Option<f64> {
            if norms.is_empty() {
                None
            } else {
                let idx = ((norms.len() - 1) as f64 * q).round() as usize;
                Some(norms[idx])
            }
        };
        let mean = if norms.is_empty() {
            None
        } else {
            Some(norms.iter().sum::<f64>() / norms.len() as f64)
        };
        RunResult {
            summary: RunSummary {
                n_cycles: n,
                availability,
                mean_norm_e_m: mean,
                median_norm_e_m: percentile(0.5),
                p95_norm_e_m: percentile(0.95),
            },
            records,
        }
    }
}

// --- simulator core ---------------------------------------------------------

/// Immutable precomputed state shared by all cycles (and across parallel
/// trials) for one parameter set.
pub struct PreparedSim {
    params: SimParams,
    table: GqrxTable,
    bfsk: [BfskConfig; 2],
    tx_units: [TxUnit; 2],
    rx_fov: f64,
    h_buf: usize,
    spb: usize,
    block_len: usize,
}

/// Mutable per-run streams: RNGs, modulator phases and the sample clock.
pub struct RunStreams {
    noise: [ChaCha8Rng; 2],
    bits: [BitStream; 2],
    modulators: [BfskModulator; 2],
    /// Global sample clock (index of the next sample to synthesize).
    w: usize,
    scratch: Scratch,
}

struct BitStream {
    rng: ChaCha8Rng,
    spb: usize,
    current: u8,
    next_boundary: usize,
}

impl BitStream {
    fn bit_for(&mut self, w: usize) -> u8 {
        while w >= self.next_boundary {
            self.current = self.rng.random_range(0..2u8);
            self.next_boundary += self.spb;
        }
        self.current
    }
}

#[derive(Default)]
struct Scratch {
    wave: [Vec<f64>; 2],
    readings: [[Vec<f64>; 4]; 2],
    sum: Vec<f64>,
}

struct LinkState {
    visible: bool,
    gain: LinkGain,
    fractions: crate::optics::QuadrantFractions,
}

impl PreparedSim {
    pub fn new(params: &SimParams) -> Result<Self, EngineError> {
        params.validate()?;
        let table = GqrxTable::build(&params.qrx, params.gqrx_table_points)?;
        let bfsk = params.bfsk_configs();
        let tx_units = tail_tx_units(
            &params.geometry,
            params.tx_optical_power_w,
            params.lambertian_order,
            params.tx_emission_half_angle_deg.to_radians(),
            [params.tx1_tones_hz, params.tx2_tones_hz],
        );
        for tx in &tx_units {
            tx.validate()?;
        }
        let h_buf = params.h_buf();
        let block_len = ((GEOMETRY_BLOCK_S / params.sample_period_s).round() as usize)
            .clamp(1, h_buf);
        Ok(Self {
            rx_fov: params.qrx.fov(),
            table,
            bfsk,
            tx_units,
            h_buf,
            spb: params.bfsk_configs()[0].samples_per_bit(),
            block_len,
            params: params.clone(),
        })
    }

    pub fn table(&self) -> &GqrxTable {
        &self.table
    }

    pub fn h_buf(&self) -> usize {
        self.h_buf
    }

    pub fn update_period_s(&self) -> f64 {
        self.h_buf as f64 * self.params.sample_period_s
    }

    /// Fresh streams for a run or an independent trial.
    pub fn streams(&self, seed: u64) -> RunStreams {
        RunStreams {
            noise: [
                ChaCha8Rng::seed_from_u64(seed ^ NOISE_STREAM_TAG[0]),
                ChaCha8Rng::seed_from_u64(seed ^ NOISE_STREAM_TAG[1]),
            ],
            bits: std::array::from_fn(|j| BitStream {
                rng: ChaCha8Rng::seed_from_u64(seed ^ BIT_STREAM_TAG[j]),
                spb: self.spb,
                current: 0,
                next_boundary: 0,
            }),
            modulators: std::array::from_fn(|j| BfskModulator::new(self.bfsk[j])),
            w: 0,
            scratch: Scratch::default(),
        }
    }

    fn link_state(&self, rel: &RelativeTargetState, rx: usize, tx: usize) -> LinkState {
        let tx_pos = if tx == 0 { rel.p1 } else { rel.p2 };
        let tx_facing = if tx == 0 {
            rel.tx_facings.0
        } else {
            rel.tx_facings.1
        };
        let rx_pos = if rx == 0 {
            Point::new(0.0, 0.0)
        } else {
            Point::new(self.params.geometry.rx_separation_m, 0.0)
        };
        match link_gain(
            &self.tx_units[tx],
            self.params.rx_aperture_area_m2,
            tx_pos,
            tx_facing,
            rx_pos,
            self.rx_fov,
            &self.params.condition,
        ) {
            Ok(gain) => LinkState {
                visible: true,
                fractions: quadrant_fractions(gain.incidence_aoa, &self.params.qrx),
                gain,
            },
            Err(_) => LinkState {
                visible: false,
                gain: LinkGain {
                    h: 0.0,
                    received_power_w: 0.0,
                    emission_angle: 0.0,
                    incidence_aoa: 0.0,
                    distance_m: tx_pos.distance_to(rx_pos).max(f64::MIN_POSITIVE),
                },
                fractions: crate::optics::QuadrantFractions::default(),
            },
        }
    }

    /// Simulate one estimation cycle of `scene` starting at the stream
    /// clock. Returns the cycle record and the raw per-channel AoAs in
    /// `[t11, t12, t21, t22]` order.
    pub fn run_cycle<F>(&self, scene: F, streams: &mut RunStreams) -> (CycleRecord, [Option<f64>; 4])
    where
        F: Fn(f64) -> (VehiclePose, VehiclePose),
    {
        let params = &self.params;
        let ts = params.sample_period_s;
        let w0 = streams.w;
        let h = self.h_buf;

        for q in 0..4 {
            for rx in 0..2 {
                streams.scratch.readings[rx][q].resize(h, 0.0);
            }
        }
        for j in 0..2 {
            streams.scratch.wave[j].resize(self.block_len, 0.0);
        }

        // Mid-cycle link states are captured for the SNR bookkeeping.
        let mut mid_links: Option<[[LinkState; 2]; 2]> = None;
        let mid_block = (h / self.block_len) / 2;

        let mut offset = 0usize;
        let mut block_idx = 0usize;
        while offset < h {
            let len = self.block_len.min(h - offset);
            let t_block = ts * (w0 + offset) as f64 + ts * len as f64 / 2.0;
            let (ego, target) = scene(t_block);
            let rel = relative_tx_positions(&ego, &target, &params.geometry);
            let links: [[LinkState; 2]; 2] =
                std::array::from_fn(|rx| std::array::from_fn(|tx| self.link_state(&rel, rx, tx)));

            // Transmit waveforms for this block (shared by both QRXs).
            for j in 0..2 {
                let (bits, modulator) = (&mut streams.bits[j], &mut streams.modulators[j]);
                let wave = &mut streams.scratch.wave[j];
                for (i, slot) in wave[..len].iter_mut().enumerate() {
                    let bit = bits.bit_for(w0 + offset + i);
                    *slot = modulator.step(bit);
                }
            }

            for rx in 0..2 {
                let signals: Vec<IncidentSignal<'_>> = (0..2)
                    .map(|j| IncidentSignal {
                        waveform: &streams.scratch.wave[j][..len],
                        gain: links[rx][j].gain,
                        fractions: links[rx][j].fractions,
                    })
                    .collect();
                crate::channel::synthesize_quadrants_into(
                    &signals,
                    &params.tia,
                    &params.condition,
                    &mut streams.noise[rx],
                    params.noise_scale,
                    &mut streams.scratch.readings[rx],
                    offset,
                    len,
                );
            }

            if block_idx == mid_block {
                mid_links = Some(links);
            }
            offset += len;
            block_idx += 1;
        }
        streams.w += h;

        // Measurement pipeline per QRX per TX.
        let t_mid = ts * (w0 as f64 + h as f64 / 2.0);
        let mut thetas = [None; 4];
        for rx in 0..2 {
            let buffer = QuadrantBuffer {
                readings: std::array::from_fn(|q| {
                    std::mem::take(&mut streams.scratch.readings[rx][q])
                }),
                w0,
                sample_period_s: ts,
            };
            streams.scratch.sum.clear();
            streams.scratch.sum.extend_from_slice(&buffer.readings[0]);
            for q in 1..4 {
                for (acc, v) in streams
                    .scratch
                    .sum
                    .iter_mut()
                    .zip(buffer.readings[q].iter())
                {
                    *acc += v;
                }
            }
            for tx in 0..2 {
                let measured = demod_remod(&streams.scratch.sum, &self.bfsk[tx])
                    .ok()
                    .and_then(|(_, s_hat)| {
                        let eps = estimate_quadrant_power(&buffer, &s_hat);
                        measure_aoa(eps, &self.table, t_mid).ok()
                    })
                    .filter(|m| m.valid);
                thetas[2 * rx + tx] = measured.map(|m| m.theta_hat);
            }
            // Hand the buffers back to the scratch pool.
            let QuadrantBuffer { readings, .. } = buffer;
            streams.scratch.readings[rx] = readings;
        }

        let (ego_mid, target_mid) = scene(t_mid);
        let truth = relative_tx_positions(&ego_mid, &target_mid, &params.geometry);

        let l = params.geometry.rx_separation_m;
        let position = |tx: usize| {
            match (thetas[tx], thetas[2 + tx]) {
                (Some(t1), Some(t2)) => triangulate(t1, t2, l).ok(),
                _ => None,
            }
        };
        let estimate = PositionEstimate {
            p1: position(0),
            p2: position(1),
            timestamp_s: t_mid,
        };
        let error = localization_error(&truth, &estimate).ok();

        let snr_db = match &mid_links {
            Some(links) => std::array::from_fn(|rx| {
                std::array::from_fn(|tx| {
                    let link = &links[rx][tx];
                    if !link.visible {
                        return None;
                    }
                    let gamma = params.tia.responsivity_a_per_w;
                    let amp = gamma * link.gain.received_power_w * link.fractions.sum();
                    let noise_sum: f64 = link
                        .fractions
                        .as_array()
                        .iter()
                        .map(|f_q| {
                            quadrant_noise_variance(
                                link.gain.received_power_w * f_q,
                                &params.tia,
                                &params.condition,
                            )
                        })
                        .sum();
                    Some(10.0 * (amp * amp * 0.5 / noise_sum).log10())
                })
            }),
            None => [[None; 2]; 2],
        };

        (
            CycleRecord {
                t_s: t_mid,
                truth,
                estimate,
                error,
                snr_db,
            },
            thetas,
        )
    }

    /// One independent static cycle; fresh streams from `seed`.
    pub fn static_cycle(&self, target: &VehiclePose, seed: u64) -> CycleRecord {
        let ego = VehiclePose::new(0.0, 0.0, 0.0);
        let mut streams = self.streams(seed);
        let (record, _) = self.run_cycle(|_| (ego, *target), &mut streams);
        record
    }

    /// One independent static cycle returning the raw AoA measurements.
    pub fn static_aoa(&self, target: &VehiclePose, seed: u64) -> [Option<f64>; 4] {
        let ego = VehiclePose::new(0.0, 0.0, 0.0);
        let mut streams = self.streams(seed);
        let (_, thetas) = self.run_cycle(|_| (ego, *target), &mut streams);
        thetas
    }
}

/// Convenience wrapper: one static-cycle AoA measurement set.
pub fn measure_static_aoa(
    target: &VehiclePose,
    params: &SimParams,
    seed: u64,
) -> [Option<f64>; 4] {
    match PreparedSim::new(params) {
        Ok(sim) => sim.static_aoa(target, seed),
        Err(_) => [None; 4],
    }
}

// --- run drivers ------------------------------------------------------------

/// Execute a full run for the configured scenario.
///
/// SM1/SM2/static scenarios evolve a trajectory; SM3 runs its location
/// sweep with `n_repeats` independent cycles per location. SM4 is driven
/// by [`sweep_grid`] instead.
pub fn run(config: &RunConfig) -> Result<RunResult, EngineError> {
    match &config.scenario {
        ScenarioConfig::Sm1(p) => {
            run_trajectory(&sm1_trajectory(p)?, &config.params, config.seed)
        }
        ScenarioConfig::Sm2(p) => {
            run_trajectory(&sm2_trajectory(p)?, &config.params, config.seed)
        }
        ScenarioConfig::Static { target, duration_s } => {
            let traj = static_trajectory(*target, *duration_s);
            run_trajectory(&traj, &config.params, config.seed)
        }
        ScenarioConfig::Sm3(p) => {
            let sm3 = run_sm3(&config.params, p, config.seed, config.n_repeats.max(1))?;
            Ok(RunResult::from_records(sm3.records))
        }
        ScenarioConfig::Sm4(_) => Err(EngineError::UseSweep),
    }
}

fn static_trajectory(target: VehiclePose, duration_s: f64) -> ScenarioTrajectory {
    let ego = VehiclePose::new(0.0, 0.0, 0.0);
    ScenarioTrajectory {
        samples: vec![
            TrajectorySample { t_s: 0.0, ego, target },
            TrajectorySample { t_s: duration_s, ego, target },
        ],
        dt_s: duration_s,
    }
}

/// Run every estimation cycle of a trajectory sequentially (the geometry
/// evolves, so cycles share the waveform and noise streams).
pub fn run_trajectory(
    traj: &ScenarioTrajectory,
    params: &SimParams,
    seed: u64,
) -> Result<RunResult, EngineError> {
    let sim = PreparedSim::new(params)?;
    let n_cycles = ((traj.duration_s() * params.rate_hz) + 1e-9).floor() as usize;
    let mut streams = sim.streams(seed);
    let mut records = Vec::with_capacity(n_cycles);
    for _ in 0..n_cycles {
        let (record, _) = sim.run_cycle(|t| traj.poses_at(t), &mut streams);
        records.push(record);
    }
    Ok(RunResult::from_records(records))
}

/// Per-location statistics of the SM3 sweep (TX 1 only, matching the
/// single-TX comparison it reproduces).
#[derive(Debug, Clone, PartialEq)]
pub struct Sm3LocationStats {
    pub lateral_m: f64,
    pub mean_abs_x_error_m: f64,
    pub mean_abs_y_error_m: f64,
    pub n_valid: usize,
    pub n_total: usize,
}

/// SM3 sweep result.
#[derive(Debug, Clone, PartialEq)]
pub struct Sm3Result {
    pub records: Vec<CycleRecord>,
    pub per_location: Vec<Sm3LocationStats>,
    /// Mean |x1_hat - x1| over all valid cycles of the sweep.
    pub mean_abs_x_error_m: f64,
    /// Mean |y1_hat - y1| over all valid cycles of the sweep.
    pub mean_abs_y_error_m: f64,
}

/// Simulate `iterations` independent estimation cycles at each SM3
/// location. Trials run in parallel with `seed XOR trial` streams.
pub fn run_sm3(
    params: &SimParams,
    sm3: &Sm3Params,
    seed: u64,
    iterations: usize,
) -> Result<Sm3Result, EngineError> {
    let sim = PreparedSim::new(params)?;
    let locations = sm3_locations(sm3)?;
    let t_u = sim.update_period_s();

    let mut records = Vec::with_capacity(locations.len() * iterations);
    let mut per_location = Vec::with_capacity(locations.len());
    for (li, loc) in locations.iter().enumerate() {
        let mut cycle_records: Vec<CycleRecord> = (0..iterations)
            .into_par_iter()
            .map(|it| {
                let trial = (li * iterations + it) as u64;
                sim.static_cycle(&loc.target, seed ^ trial)
            })
            .collect();
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut n_valid = 0usize;
        for r in &cycle_records {
            if let Some(p1_hat) = r.estimate.p1 {
                sx += (p1_hat.x - r.truth.p1.x).abs();
                sy += (p1_hat.y - r.truth.p1.y).abs();
                n_valid += 1;
            }
        }
        per_location.push(Sm3LocationStats {
            lateral_m: loc.lateral_m,
            mean_abs_x_error_m: if n_valid > 0 { sx / n_valid as f64 } else { f64::NAN },
            mean_abs_y_error_m: if n_valid > 0 { sy / n_valid as f64 } else { f64::NAN },
            n_valid,
            n_total: iterations,
        });
        // Relabel timestamps so the sweep reads as consecutive cycles.
        for (it, r) in cycle_records.iter_mut().enumerate() {
            r.t_s = ((li * iterations + it) as f64 + 0.5) * t_u;
        }
        records.extend(cycle_records);
    }

    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for loc in &per_location {
        if loc.n_valid > 0 {
            sx += loc.mean_abs_x_error_m * loc.n_valid as f64;
            sy += loc.mean_abs_y_error_m * loc.n_valid as f64;
            n += loc.n_valid;
        }
    }
    if n == 0 {
        return Err(EngineError::NoValidCycles);
    }
    Ok(Sm3Result {
        records,
        per_location,
        mean_abs_x_error_m: sx / n as f64,
        mean_abs_y_error_m: sy / n as f64,
    })
}

/// One SM4 heatmap cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapRecord {
    pub x_m: f64,
    pub y_m: f64,
    /// Mean error norm over feasible orientations and repeats; None when
    /// no orientation has all links visible (colorless zone).
    pub mean_err_m: Option<f64>,
    /// Valid cycles / attempted cycles (0 when nothing is feasible).
    pub availability: f64,
}

/// Characterize the operational range: for every grid location, average
/// the localization error over all feasible target orientations and
/// `n_repeats` seeds. Cells run in parallel; results are merged by index.
pub fn sweep_grid(
    params: &SimParams,
    sm4: &Sm4Params,
    seed: u64,
    n_repeats: usize,
) -> Result<Vec<HeatmapRecord>, EngineError> {
    let sim = PreparedSim::new(params)?;
    let grid = crate::scenario::sm4_grid(sm4)?;
    let n_repeats = n_repeats.max(1);
    let n_headings = grid.first().map_or(0, |g| g.headings_rad.len());

    let records: Vec<HeatmapRecord> = grid
        .par_iter()
        .enumerate()
        .map(|(ci, cell)| sweep_cell(&sim, cell, ci, n_headings, n_repeats, seed))
        .collect();
    Ok(records)
}

fn sweep_cell(
    sim: &PreparedSim,
    cell: &GridLocation,
    cell_index: usize,
    n_headings: usize,
    n_repeats: usize,
    seed: u64,
) -> HeatmapRecord {
    let ego = VehiclePose::new(0.0, 0.0, 0.0);
    let params = &sim.params;
    let mut err_sum = 0.0;
    let mut n_valid = 0usize;
    let mut attempted = 0usize;
    for (hi, &heading) in cell.headings_rad.iter().enumerate() {
        let target = VehiclePose::new(cell.x_m, cell.y_m, heading);
        // Feasible = every TX-QRX link visible for this orientation.
        let rel = relative_tx_positions(&ego, &target, &params.geometry);
        let all_visible = (0..2).all(|rx| (0..2).all(|tx| sim.link_state(&rel, rx, tx).visible));
        if !all_visible {
            continue;
        }
        for rep in 0..n_repeats {
            attempted += 1;
            let trial = ((cell_index * n_headings + hi) * n_repeats + rep) as u64;
            let record = sim.static_cycle(&target, seed ^ trial);
            if let Some(e) = record.error {
                err_sum += e.norm;
                n_valid += 1;
            }
        }
    }
    HeatmapRecord {
        x_m: cell.x_m,
        y_m: cell.y_m,
        mean_err_m: (n_valid > 0).then(|| err_sum / n_valid as f64),
        availability: if attempted == 0 {
            0.0
        } else {
            n_valid as f64 / attempted as f64
        },
    }
}

/// Dense error trace with zero-order hold between estimates: at each time
/// step the last complete estimate is compared against the current true
/// geometry. This is the error a consumer of the estimates experiences,
/// including staleness between updates.
pub fn zoh_error_profile(
    records: &[CycleRecord],
    traj: &ScenarioTrajectory,
    geom: &VehicleGeometry,
    dt_s: f64,
) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut held: Option<&CycleRecord> = None;
    let mut next = 0usize;
    let duration = traj.duration_s();
    let mut t = 0.0;
    while t <= duration + 1e-12 {
        while next < records.len() && records[next].t_s <= t {
            if records[next].complete() {
                held = Some(&records[next]);
            }
            next += 1;
        }
        if let Some(rec) = held {
            let (ego, target) = traj.poses_at(t);
            let truth = relative_tx_positions(&ego, &target, geom);
            if let Ok(err) = localization_error(&truth, &rec.estimate) {
                out.push((t, err.norm));
            }
        }
        t += dt_s;
    }
    out
}

/// Mean of a ZOH error profile over a time window.
pub fn mean_zoh_error(profile: &[(f64, f64)], t_from: f64, t_to: f64) -> Option<f64> {
    let vals: Vec<f64> = profile
        .iter()
        .filter(|(t, _)| *t >= t_from && *t <= t_to)
        .map(|(_, e)| *e)
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Errors for the engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EngineError {
    Geometry(GeometryError),
    Optics(OpticsError),
    Channel(ChannelError),
    Signal(SignalError),
    Scenario(ScenarioError),
    /// Rate outside [10, 1000] Hz or not commensurate with the sample/bit grid.
    InvalidRate,
    /// Non-positive powers, areas or scales.
    InvalidParams,
    /// SM4 runs through `sweep_grid`, not `run`.
    UseSweep,
    /// Every simulated cycle was invalid.
    NoValidCycles,
}

impl std::fmt::Display for EngineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EngineError::Geometry(e) => write!(f, "geometry: {e}"),
            EngineError::Optics(e) => write!(f, "optics: {e}"),
            EngineError::Channel(e) => write!(f, "channel: {e}"),
            EngineError::Signal(e) => write!(f, "signal: {e}"),
            EngineError::Scenario(e) => write!(f, "scenario: {e}"),
            EngineError::InvalidRate => write!(
                f,
                "rate must lie in [10, 1000] Hz and divide the sample and bit grids"
            ),
            EngineError::InvalidParams => write!(f, "non-positive simulation parameters"),
            EngineError::UseSweep => write!(f, "SM4 is driven by sweep_grid, not run"),
            EngineError::NoValidCycles => write!(f, "no cycle produced a valid estimate"),
        }
    }
}

impl std::error::Error for EngineError {}

impl From<GeometryError> for EngineError {
    fn from(e: GeometryError) -> Self {
        EngineError::Geometry(e)
    }
}
impl From<OpticsError> for EngineError {
    fn from(e: OpticsError) -> Self {
        EngineError::Optics(e)
    }
}
impl From<ChannelError> for EngineError {
    fn from(e: ChannelError) -> Self {
        EngineError::Channel(e)
    }
}
impl From<SignalError> for EngineError {
    fn from(e: SignalError) -> Self {
        EngineError::Signal(e)
    }
}
impl From<ScenarioError> for EngineError {
    fn from(e: ScenarioError) -> Self {
        EngineError::Scenario(e)
    }
}
