//! Cell scenario: random pair drop and link path loss.
//!
//! Path loss is stored as a linear *loss* `L >= 1`, so that the received
//! power over a link is `P * |h|^2 / L`. Every module uses that convention.

use rand::Rng;

use crate::config::ScenarioConfig;

/// Speed of light, m/s.
const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Height of the environment clutter subtracted from the antenna height to
/// get the effective height used by the breakpoint distance.
const ENVIRONMENT_HEIGHT_M: f64 = 0.7;

/// Path-loss model selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathLossModel {
    /// Dual-slope LOS street model (free-space floor, breakpoint at
    /// `4 h'^2 f / c`), outdoor-to-outdoor D2D flavour.
    DualSlope { carrier_ghz: f64, antenna_height_m: f64 },
    /// `L(d) = L_ref * d^exponent`, with `L_ref` the loss at 1 m.
    PowerLaw { exponent: f64, ref_loss_db: f64 },
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel::DualSlope {
            carrier_ghz: 2.0,
            antenna_height_m: 1.5,
        }
    }
}

impl PathLossModel {
    /// Model id as used in config files.
    pub fn id(&self) -> &'static str {
        match self {
            PathLossModel::DualSlope { .. } => "dual-slope",
            PathLossModel::PowerLaw { .. } => "power-law",
        }
    }

    /// Path loss in dB at `distance_m` (> 0).
    pub fn loss_db(&self, distance_m: f64) -> f64 {
        debug_assert!(distance_m > 0.0);
        match *self {
            PathLossModel::PowerLaw {
                exponent,
                ref_loss_db,
            } => ref_loss_db + 10.0 * exponent * distance_m.log10(),
            PathLossModel::DualSlope {
                carrier_ghz,
                antenna_height_m,
            } => {
                let h_eff = (antenna_height_m - ENVIRONMENT_HEIGHT_M).max(0.1);
                let fc_hz = carrier_ghz * 1e9;
                let breakpoint_m = 4.0 * h_eff * h_eff * fc_hz / SPEED_OF_LIGHT;
                let lg = distance_m.log10();
                let free_space = 20.0 * lg + 46.4 + 20.0 * (carrier_ghz / 5.0).log10();
                let los = if distance_m < breakpoint_m {
                    22.7 * lg + 27.0 + 20.0 * carrier_ghz.log10()
                } else {
                    40.0 * lg + 7.56 - 2.0 * 17.3 * h_eff.log10() + 2.7 * carrier_ghz.log10()
                };
                free_space.max(los)
            }
        }
    }

    /// Linear path loss (`>= 1` for realistic distances).
    pub fn loss_linear(&self, distance_m: f64) -> f64 {
        10f64.powf(self.loss_db(distance_m) / 10.0)
    }
}

/// Linear path loss for a model looked up by id.
pub fn path_loss(distance_m: f64, model_id: &str, cfg: &ScenarioConfig) -> Option<f64> {
    let model = match model_id {
        "dual-slope" => PathLossModel::DualSlope {
            carrier_ghz: cfg.carrier_ghz,
            antenna_height_m: cfg.antenna_height_m,
        },
        "power-law" => PathLossModel::PowerLaw {
            exponent: cfg.pl_exponent,
            ref_loss_db: cfg.pl_ref_db,
        },
        _ => return None,
    };
    Some(model.loss_linear(distance_m))
}

/// One transmitter/receiver pair.
#[derive(Debug, Clone, PartialEq)]
pub struct D2DPair {
    pub id: usize,
    /// Transmitter position relative to the cell centre (m).
    pub tx_position: (f64, f64),
    pub distance_m: f64,
    /// Linear loss, received power = `P * |h|^2 / path_loss_linear`.
    pub path_loss_linear: f64,
}

impl D2DPair {
    pub fn path_loss_db(&self) -> f64 {
        10.0 * self.path_loss_linear.log10()
    }
}

/// Drops `cfg.n_pairs` pairs: transmitters uniform in the cell disc, pair
/// distance uniform in `[d_min, d_max]` and independent of position.
pub fn drop_pairs<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<D2DPair> {
    let model = cfg.path_loss_model();
    (0..cfg.n_pairs)
        .map(|id| {
            // sqrt of a uniform radius fraction gives a uniform density over the disc
            let radius = cfg.cell_radius_m * rng.random::<f64>().sqrt();
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let distance_m = rng.random_range(cfg.d_min_m..=cfg.d_max_m);
            D2DPair {
                id,
                tx_position: (radius * angle.cos(), radius * angle.sin()),
                distance_m,
                path_loss_linear: model.loss_linear(distance_m),
            }
        })
        .collect()
}
