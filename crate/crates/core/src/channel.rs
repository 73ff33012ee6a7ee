//! Block Rayleigh fading and minimum-power link adaptation.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::amc::AmcTable;
use crate::config::ScenarioConfig;

/// Squared magnitude `|h|^2` of a unit-variance Rayleigh coefficient,
/// constant over one slot.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FadingSample {
    pub h_squared: f64,
}

/// `|h|^2 ~ Exp(1)`.
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> FadingSample {
    FadingSample {
        h_squared: Exp1.sample(rng),
    }
}

/// Noise and power cap shared by every link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub noise_w: f64,
    pub p_max_w: f64,
}

impl LinkBudget {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            noise_w: cfg.noise_power_w(),
            p_max_w: cfg.p_max_w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerRatePoint {
    /// 1-based AMC index.
    pub m: usize,
    pub power_w: f64,
    /// Delivered rate: the table rate when feasible, 0 when the cap binds.
    pub rate_bps: f64,
    pub feasible: bool,
}

/// Uncapped power needed to reach threshold `m`: `S_m * N_o * L / |h|^2`.
#[inline]
pub fn uncapped_power(path_loss: f64, h2: FadingSample, m: usize, budget: &LinkBudget, table: &AmcTable) -> f64 {
    table.threshold(m) * budget.noise_w * path_loss / h2.h_squared
}

/// Minimum power reaching `S_m`, capped at `P_max`. A capped point cannot
/// reach the threshold and delivers no rate.
pub fn required_power(
    path_loss: f64,
    h2: FadingSample,
    m: usize,
    budget: &LinkBudget,
    table: &AmcTable,
) -> PowerRatePoint {
    let uncapped = uncapped_power(path_loss, h2, m, budget, table);
    let feasible = uncapped <= budget.p_max_w;
    PowerRatePoint {
        m,
        power_w: uncapped.min(budget.p_max_w),
        rate_bps: if feasible { table.rate(m) } else { 0.0 },
        feasible,
    }
}

/// One point per AMC entry, `m = 1..=M`.
pub fn achievable_set(
    path_loss: f64,
    h2: FadingSample,
    budget: &LinkBudget,
    table: &AmcTable,
) -> Vec<PowerRatePoint> {
    (1..=table.len())
        .map(|m| required_power(path_loss, h2, m, budget, table))
        .collect()
}

/// Highest feasible AMC index, `None` when even `m = 1` needs more than `P_max`.
pub fn max_feasible_index(
    path_loss: f64,
    h2: FadingSample,
    budget: &LinkBudget,
    table: &AmcTable,
) -> Option<usize> {
    let count = (1..=table.len())
        .take_while(|&m| uncapped_power(path_loss, h2, m, budget, table) <= budget.p_max_w)
        .count();
    (count > 0).then_some(count)
}
