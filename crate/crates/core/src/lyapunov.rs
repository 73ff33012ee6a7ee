//! Virtual queues and the per-pair drift-plus-penalty metric.
//!
//! Each pair carries a virtual queue `Q_n` that grows by `R_th` per slot and
//! drains by the rate it is served; keeping every queue stable enforces the
//! long-run throughput target. A pair's metric is the best
//! `V * P_{n,m} - Q_n * R_m` over the rates it can reach this slot.

use crate::amc::AmcTable;
use crate::channel::{uncapped_power, FadingSample, LinkBudget, PowerRatePoint};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VirtualQueue {
    pub backlog: f64,
}

/// `Q(t+1) = max(Q(t) - served, 0) + r_th`.
pub fn queue_update(q: VirtualQueue, served_rate: f64, r_th: f64) -> VirtualQueue {
    debug_assert!(served_rate >= 0.0);
    VirtualQueue {
        backlog: (q.backlog - served_rate).max(0.0) + r_th,
    }
}

/// Weight `V` plus the mapping state `(r, f)` and the slot index `t` within
/// the current period. Starts at `r = 1`, `f = 0`, `t = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovParams {
    pub v_weight: f64,
    pub r: usize,
    pub f: u32,
    pub slot: u64,
}

impl LyapunovParams {
    pub fn new(v_weight: f64) -> Self {
        Self {
            v_weight,
            r: 1,
            f: 0,
            slot: 1,
        }
    }

    /// Moves to the next slot; `t` wraps back to 1 after `t_p` slots.
    pub fn advance(&mut self, t_p: u64) {
        self.slot = if self.slot >= t_p { 1 } else { self.slot + 1 };
    }
}

/// Outcome of minimising a pair's metric over the AMC table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    /// `+inf` when no rate is reachable under `P_max`.
    pub v: f64,
    pub best: Option<PowerRatePoint>,
}

impl Metric {
    pub const INFEASIBLE: Metric = Metric {
        v: f64::INFINITY,
        best: None,
    };

    pub fn m_star(&self) -> Option<usize> {
        self.best.map(|p| p.m)
    }

    pub fn is_feasible(&self) -> bool {
        self.best.is_some()
    }
}

/// `v = min_m V * P_{n,m} - Q * R_m` over feasible `m`; ties keep the lowest `m`.
pub fn metric_v(
    path_loss: f64,
    h2: FadingSample,
    q: VirtualQueue,
    v_weight: f64,
    budget: &LinkBudget,
    table: &AmcTable,
) -> Metric {
    let mut out = Metric::INFEASIBLE;
    for m in 1..=table.len() {
        let power = uncapped_power(path_loss, h2, m, budget, table);
        if power > budget.p_max_w {
            // thresholds increase, so every higher m is out of reach too
            break;
        }
        let rate = table.rate(m);
        let v = v_weight * power - q.backlog * rate;
        if v < out.v {
            out = Metric {
                v,
                best: Some(PowerRatePoint {
                    m,
                    power_w: power,
                    rate_bps: rate,
                    feasible: true,
                }),
            };
        }
    }
    out
}

/// Lower and upper ends of the indexing interval at slot `t`:
/// `v_min = -t R_th R_M` and
/// `v_max = v_min + r (V P_max - R_th R_1 - v_min) / K2^f`.
pub fn metric_bounds(params: &LyapunovParams, r_th: f64, p_max_w: f64, table: &AmcTable, k2: usize) -> (f64, f64) {
    debug_assert!(params.slot >= 1 && k2 >= 2);
    let v_min = -(params.slot as f64) * r_th * table.highest_rate();
    let span = params.v_weight * p_max_w - r_th * table.lowest_rate() - v_min;
    let v_max = v_min + params.r as f64 * span / (k2 as f64).powi(params.f as i32);
    (v_min, v_max)
}
