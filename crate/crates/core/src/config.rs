//! Scenario configuration.
//!
//! Configs are flat `key = value` text files (SI units, `#` comments).
//! Defaults reproduce the cell, feedback and power settings of the
//! reference evaluation: 50 pairs in a 500 m cell, N_RB = 2, N_OC = 3,
//! Delta_shift = 1, P_max = 250 mW, -174 dBm/Hz noise with a 9 dB figure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::amc::{db_to_linear, AmcTable};
use crate::error::ConfigError;
use crate::scenario::PathLossModel;

/// Every recognised key with its unit and a short description.
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("cell_radius_m", "m", "cell radius R_c"),
    ("n_pairs", "count", "number of D2D pairs N"),
    ("d_min_m", "m", "minimum pair distance"),
    ("d_max_m", "m", "maximum pair distance"),
    ("bandwidth_rb", "count", "D2D bandwidth in resource blocks"),
    ("n_rb_feedback", "count", "RBs reserved for feedback N_RB"),
    ("delta_shift", "count", "PUCCH cyclic shift spacing Delta_shift"),
    ("n_oc", "count", "orthogonal cover codes N_OC"),
    ("k1", "count", "CSI reports per slot, 0 = 12*N_RB"),
    ("k2", "count", "indicator REs per slot, 0 = N_RB*12*N_OC/Delta_shift"),
    ("p_max_w", "W", "maximum transmit power P_max"),
    ("quantized_powers_w", "W list", "4 reporting power levels, comma separated"),
    ("noise_density_dbm_hz", "dBm/Hz", "thermal noise density"),
    ("noise_figure_db", "dB", "receiver noise figure"),
    ("allocation_bandwidth_hz", "Hz", "bandwidth of one scheduled allocation"),
    ("gamma_th_db", "dB", "SNR threshold defining the throughput target"),
    ("load_factor", "ratio", "share of the gamma_th rate demanded by all pairs together"),
    ("r_th_bps", "bps", "per-pair throughput target R_th, 0 = derive from gamma_th_db"),
    ("v_weight", "W^-1 bps^2", "Lyapunov weight V"),
    ("t_p_slots", "slots", "period T_p for the mapping bookkeeping"),
    ("epsilon_collision", "probability", "target collision probability epsilon"),
    ("mc_samples", "count", "fading draws for the subset estimator"),
    ("slot_duration_s", "s", "slot duration"),
    ("path_loss_model", "id", "dual-slope | power-law"),
    ("carrier_ghz", "GHz", "carrier frequency (dual-slope)"),
    ("antenna_height_m", "m", "antenna height (dual-slope)"),
    ("pl_exponent", "-", "exponent (power-law)"),
    ("pl_ref_db", "dB", "loss at 1 m (power-law)"),
    ("amc_table", "path", "CSV with snr_db,rate_bps, empty = built-in table"),
    ("tune_snr_db", "dB", "SNR threshold S used by V(epsilon)"),
    ("tune_rate", "rate unit", "bit-rate R used by V(epsilon)"),
    ("tune_r_th", "rate unit", "throughput target R_th used by V(epsilon)"),
    ("seed", "u64", "base random seed"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub cell_radius_m: f64,
    pub n_pairs: usize,
    pub d_min_m: f64,
    pub d_max_m: f64,
    pub bandwidth_rb: usize,
    pub n_rb_feedback: usize,
    pub delta_shift: usize,
    pub n_oc: usize,
    pub k1: usize,
    pub k2: usize,
    pub p_max_w: f64,
    pub quantized_powers_w: Vec<f64>,
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub allocation_bandwidth_hz: f64,
    pub gamma_th_db: f64,
    pub load_factor: f64,
    pub r_th_bps: f64,
    pub v_weight: f64,
    pub t_p_slots: u64,
    pub epsilon_collision: f64,
    pub mc_samples: usize,
    pub slot_duration_s: f64,
    pub path_loss_model: String,
    pub carrier_ghz: f64,
    pub antenna_height_m: f64,
    pub pl_exponent: f64,
    pub pl_ref_db: f64,
    pub amc_table: Option<PathBuf>,
    pub tune_snr_db: f64,
    pub tune_rate: f64,
    pub tune_r_th: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            cell_radius_m: 500.0,
            n_pairs: 50,
            d_min_m: 3.0,
            d_max_m: 350.0,
            bandwidth_rb: 50,
            n_rb_feedback: 2,
            delta_shift: 1,
            n_oc: 3,
            k1: 0,
            k2: 0,
            p_max_w: 0.25,
            quantized_powers_w: vec![0.05, 0.10, 0.15, 0.20],
            noise_density_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            allocation_bandwidth_hz: 10e6,
            gamma_th_db: 14.0,
            load_factor: 0.5,
            r_th_bps: 0.0,
            v_weight: 1e12,
            t_p_slots: 1_000_000,
            epsilon_collision: 0.1,
            mc_samples: 500,
            slot_duration_s: 1e-3,
            path_loss_model: "dual-slope".to_string(),
            carrier_ghz: 2.0,
            antenna_height_m: 1.5,
            pl_exponent: 3.67,
            pl_ref_db: 38.46,
            amc_table: None,
            tune_snr_db: 80.0,
            tune_rate: 700.0,
            tune_r_th: 500.0,
            seed: 1,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| ConfigError::invalid(key, format!("`{value}`: {e}")))
}

impl ScenarioConfig {
    /// Reads a config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        // relative AMC table paths resolve against the config file's directory
        if let (Some(table), Some(dir)) = (cfg.amc_table.as_mut(), path.parent()) {
            if table.is_relative() {
                *table = dir.join(&*table);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (key, value) = kv.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line: 0,
            text: kv.to_string(),
        })?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "cell_radius_m" => self.cell_radius_m = parse_num(key, value)?,
            "n_pairs" => self.n_pairs = parse_num(key, value)?,
            "d_min_m" => self.d_min_m = parse_num(key, value)?,
            "d_max_m" => self.d_max_m = parse_num(key, value)?,
            "bandwidth_rb" => self.bandwidth_rb = parse_num(key, value)?,
            "n_rb_feedback" => self.n_rb_feedback = parse_num(key, value)?,
            "delta_shift" => self.delta_shift = parse_num(key, value)?,
            "n_oc" => self.n_oc = parse_num(key, value)?,
            "k1" => self.k1 = parse_num(key, value)?,
            "k2" => self.k2 = parse_num(key, value)?,
            "p_max_w" => self.p_max_w = parse_num(key, value)?,
            "quantized_powers_w" => {
                self.quantized_powers_w = value
                    .split(',')
                    .map(|v| parse_num::<f64>(key, v.trim()))
                    .collect::<Result<_, _>>()?
            }
            "noise_density_dbm_hz" => self.noise_density_dbm_hz = parse_num(key, value)?,
            "noise_figure_db" => self.noise_figure_db = parse_num(key, value)?,
            "allocation_bandwidth_hz" => self.allocation_bandwidth_hz = parse_num(key, value)?,
            "gamma_th_db" => self.gamma_th_db = parse_num(key, value)?,
            "load_factor" => self.load_factor = parse_num(key, value)?,
            "r_th_bps" => self.r_th_bps = parse_num(key, value)?,
            "v_weight" => self.v_weight = parse_num(key, value)?,
            "t_p_slots" => self.t_p_slots = parse_num(key, value)?,
            "epsilon_collision" => self.epsilon_collision = parse_num(key, value)?,
            "mc_samples" => self.mc_samples = parse_num(key, value)?,
            "slot_duration_s" => self.slot_duration_s = parse_num(key, value)?,
            "path_loss_model" => match value {
                "dual-slope" | "power-law" => self.path_loss_model = value.to_string(),
                _ => return Err(ConfigError::invalid(key, format!("unknown model `{value}`"))),
            },
            "carrier_ghz" => self.carrier_ghz = parse_num(key, value)?,
            "antenna_height_m" => self.antenna_height_m = parse_num(key, value)?,
            "pl_exponent" => self.pl_exponent = parse_num(key, value)?,
            "pl_ref_db" => self.pl_ref_db = parse_num(key, value)?,
            "amc_table" => {
                self.amc_table = (!value.is_empty()).then(|| PathBuf::from(value));
            }
            "tune_snr_db" => self.tune_snr_db = parse_num(key, value)?,
            "tune_rate" => self.tune_rate = parse_num(key, value)?,
            "tune_r_th" => self.tune_r_th = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, reason))
            }
        };
        check(self.cell_radius_m > 0.0, "cell_radius_m", "must be > 0")?;
        check(self.n_pairs >= 1, "n_pairs", "must be >= 1")?;
        check(self.d_min_m > 0.0, "d_min_m", "must be > 0")?;
        check(self.d_min_m < self.d_max_m, "d_max_m", "must exceed d_min_m")?;
        check(
            self.d_max_m <= 2.0 * self.cell_radius_m,
            "d_max_m",
            "must be <= 2 * cell_radius_m",
        )?;
        check(self.p_max_w > 0.0, "p_max_w", "must be > 0")?;
        check(
            self.quantized_powers_w.len() == 4,
            "quantized_powers_w",
            "exactly 4 levels expected",
        )?;
        check(
            self.quantized_powers_w.windows(2).all(|w| w[0] < w[1])
                && self.quantized_powers_w[0] > 0.0,
            "quantized_powers_w",
            "levels must be positive and strictly increasing",
        )?;
        check(
            self.quantized_powers_w.iter().all(|&p| p <= self.p_max_w),
            "quantized_powers_w",
            "levels must not exceed p_max_w",
        )?;
        check(
            self.epsilon_collision > 0.0 && self.epsilon_collision < 1.0,
            "epsilon_collision",
            "must lie in (0, 1)",
        )?;
        check(self.allocation_bandwidth_hz > 0.0, "allocation_bandwidth_hz", "must be > 0")?;
        check(self.load_factor > 0.0, "load_factor", "must be > 0")?;
        check(self.r_th_bps >= 0.0, "r_th_bps", "must be >= 0")?;
        check(self.v_weight > 0.0, "v_weight", "must be > 0")?;
        check(self.t_p_slots >= 1, "t_p_slots", "must be >= 1")?;
        check(self.mc_samples >= 1, "mc_samples", "must be >= 1")?;
        check(self.slot_duration_s > 0.0, "slot_duration_s", "must be > 0")?;
        check(self.bandwidth_rb >= 1, "bandwidth_rb", "must be >= 1")?;
        check(self.k2 != 1, "k2", "an explicit K2 must be >= 2")?;
        Ok(())
    }

    pub fn path_loss_model(&self) -> PathLossModel {
        match self.path_loss_model.as_str() {
            "power-law" => PathLossModel::PowerLaw {
                exponent: self.pl_exponent,
                ref_loss_db: self.pl_ref_db,
            },
            _ => PathLossModel::DualSlope {
                carrier_ghz: self.carrier_ghz,
                antenna_height_m: self.antenna_height_m,
            },
        }
    }

    /// Noise power over one allocation: density + 10log10(bandwidth) + figure.
    pub fn noise_power_w(&self) -> f64 {
        let dbm = self.noise_density_dbm_hz
            + 10.0 * self.allocation_bandwidth_hz.log10()
            + self.noise_figure_db;
        db_to_linear(dbm - 30.0)
    }

    /// Loads the configured AMC table, or the built-in one.
    pub fn load_amc_table(&self) -> Result<AmcTable, ConfigError> {
        match &self.amc_table {
            Some(path) => AmcTable::from_csv_path(path),
            None => Ok(crate::amc::default_amc_table()),
        }
    }

    /// Per-pair throughput target. An explicit `r_th_bps` wins; otherwise
    /// the pairs together demand `load_factor` times the rate unlocked at
    /// `gamma_th_db`.
    pub fn r_th(&self, table: &AmcTable) -> Result<f64, ConfigError> {
        if self.r_th_bps > 0.0 {
            return Ok(self.r_th_bps);
        }
        let rate = table.rate_at_db(self.gamma_th_db).ok_or_else(|| {
            ConfigError::invalid("gamma_th_db", "below the lowest AMC threshold")
        })?;
        Ok(self.load_factor * rate / self.n_pairs as f64)
    }

    /// Serialises every key, one `key = value` per line, in `CONFIG_KEYS` order.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for (key, unit, _) in CONFIG_KEYS {
            let value = match *key {
                "cell_radius_m" => self.cell_radius_m.to_string(),
                "n_pairs" => self.n_pairs.to_string(),
                "d_min_m" => self.d_min_m.to_string(),
                "d_max_m" => self.d_max_m.to_string(),
                "bandwidth_rb" => self.bandwidth_rb.to_string(),
                "n_rb_feedback" => self.n_rb_feedback.to_string(),
                "delta_shift" => self.delta_shift.to_string(),
                "n_oc" => self.n_oc.to_string(),
                "k1" => self.k1.to_string(),
                "k2" => self.k2.to_string(),
                "p_max_w" => self.p_max_w.to_string(),
                "quantized_powers_w" => self
                    .quantized_powers_w
                    .iter()
                    .map(f64::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
                "noise_density_dbm_hz" => self.noise_density_dbm_hz.to_string(),
                "noise_figure_db" => self.noise_figure_db.to_string(),
                "allocation_bandwidth_hz" => self.allocation_bandwidth_hz.to_string(),
                "gamma_th_db" => self.gamma_th_db.to_string(),
                "load_factor" => self.load_factor.to_string(),
                "r_th_bps" => self.r_th_bps.to_string(),
                "v_weight" => format!("{:e}", self.v_weight),
                "t_p_slots" => self.t_p_slots.to_string(),
                "epsilon_collision" => self.epsilon_collision.to_string(),
                "mc_samples" => self.mc_samples.to_string(),
                "slot_duration_s" => self.slot_duration_s.to_string(),
                "path_loss_model" => self.path_loss_model.clone(),
                "carrier_ghz" => self.carrier_ghz.to_string(),
                "antenna_height_m" => self.antenna_height_m.to_string(),
                "pl_exponent" => self.pl_exponent.to_string(),
                "pl_ref_db" => self.pl_ref_db.to_string(),
                "amc_table" => self
                    .amc_table
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
                "tune_snr_db" => self.tune_snr_db.to_string(),
                "tune_rate" => self.tune_rate.to_string(),
                "tune_r_th" => self.tune_r_th.to_string(),
                "seed" => self.seed.to_string(),
                _ => unreachable!("CONFIG_KEYS and to_kv_string out of sync"),
            };
            let _ = writeln!(out, "{key} = {value}  # {unit}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = ScenarioConfig::default();
        cfg.n_pairs = 12;
        cfg.v_weight = 3.5e13;
        cfg.quantized_powers_w = vec![0.01, 0.02, 0.03, 0.04];
        let mut back = ScenarioConfig::default();
        back.apply_text(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let mut cfg = ScenarioConfig::default();
        let err = cfg.apply_text("n_pairs = 4\nbogus_key = 1\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("bogus_key".into()));
        let err = cfg.apply_override("n_pairs=four").unwrap_err();
        assert_eq!(err.key(), Some("n_pairs"));
    }

    #[test]
    fn invariant_violations() {
        let bad = ScenarioConfig {
            d_min_m: 400.0,
            ..ScenarioConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().key(), Some("d_max_m"));
        let bad = ScenarioConfig {
            quantized_powers_w: vec![0.1, 0.05, 0.15, 0.2],
            ..ScenarioConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().key(), Some("quantized_powers_w"));
        let bad = ScenarioConfig {
            epsilon_collision: 1.0,
            ..ScenarioConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn noise_power_composition() {
        // -174 + 70 + 9 = -95 dBm over 10 MHz
        let cfg = ScenarioConfig::default();
        assert!((cfg.noise_power_w() / 10f64.powf(-12.5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn throughput_target_derivation() {
        let table = crate::amc::default_amc_table();
        let cfg = ScenarioConfig {
            n_pairs: 10,
            gamma_th_db: 14.0,
            load_factor: 0.5,
            ..ScenarioConfig::default()
        };
        assert!((cfg.r_th(&table).unwrap() - 35_000.0).abs() < 1e-6);
        let explicit = ScenarioConfig {
            r_th_bps: 1234.0,
            ..cfg
        };
        assert_eq!(explicit.r_th(&table).unwrap(), 1234.0);
    }
}
