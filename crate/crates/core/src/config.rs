//! Run configuration files: TOML with every field optional and the
//! reference design as defaults, plus a stable hash for tagging outputs.
//!
//! Schema (all tables/keys optional unless marked):
//!
//! ```toml
//! seed = 7                       # RNG seed (default 0)
//! n_repeats = 1                  # repeats / SM3 iterations
//!
//! [scenario]                     # required: scenario selector
//! kind = "sm2"                   # sm1 | sm2 | sm3 | sm4 | static
//! # ... preset-specific keys, e.g. platoon_range_m = 1.9
//!
//! [params]
//! rate_hz = 50.0                 # localization rate f_u
//! sample_period_s = 1e-6         # T_s
//! bit_rate_hz = 1e3
//! tx_optical_power_w = 2.0
//! lambertian_order = 11
//! tx_emission_half_angle_deg = 60.0
//! tx1_tones_hz = [5e3, 6e3]
//! tx2_tones_hz = [12e3, 13e3]
//! rx_aperture_area_m2 = 50e-6
//! gqrx_table_points = 2048
//! noise_scale = 1.0
//!
//! [params.condition]
//! ambient = "night"              # night | day_indirect
//! weather = "clear"              # clear | rain | fog
//!
//! [params.geometry]
//! rx_separation_m = 1.6
//! tx_separation_m = 1.6
//! body_length_m = 5.0
//!
//! [params.qrx]
//! lens_diameter_mm = 7.1
//! refractive_index = 1.5
//! qpd_side_mm = 6.3
//! lens_gap_mm = 0.55
//! dead_gap_mm = 0.0
//!
//! [params.tia]
//! responsivity_a_per_w = 0.5
//! bandwidth_hz = 10e6
//! capacitance_f = 45e-12
//! feedback_ohms = 2840.0
//! transconductance_s = 30e-3
//! fet_noise_factor = 1.5
//! i_b2 = 0.562
//! i_b3 = 0.0868
//! temperature_k = 298.0
//! open_loop_gain = 8.03
//! ```

use crate::engine::{RunConfig, ScenarioConfig, SimParams};
use crate::scenario::Sm2Params;
use std::path::Path;

/// Load a run configuration from a TOML file.
pub fn load_run_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
    parse_run_config(&text)
}

/// Parse a run configuration from TOML text.
pub fn parse_run_config(text: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Serialize a configuration back to canonical TOML.
pub fn to_toml(config: &RunConfig) -> String {
    toml::to_string_pretty(config).expect("run config serializes")
}

/// Reference configuration: the platooning scenario with the shipped
/// receiver design under night/clear conditions.
pub fn default_run_config() -> RunConfig {
    RunConfig {
        scenario: ScenarioConfig::Sm2(Sm2Params::default()),
        params: SimParams::default(),
        seed: 0,
        n_repeats: 1,
    }
}

/// FNV-1a hash of the canonical serialized configuration; embedded in SVG
/// outputs so plots stay traceable to their settings.
pub fn config_hash(config: &RunConfig) -> u64 {
    fnv1a(to_toml(config).as_bytes())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Errors for configuration handling.
#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "config io: {e}"),
            ConfigError::Parse(e) => write!(f, "config parse: {e}"),
        }
    }
}

impl std::error::Error for ConfigError {}
