//! Per-slot scheduling policies.
//!
//! Exactly one pair transmits per slot. All policies minimise the
//! drift-plus-penalty metric `V P - Q R` and differ only in what the base
//! station knows when it decides:
//!
//! * `Ideal` sees every pair's exact metric.
//! * `Centralized` receives quantized power reports from a subset of at most
//!   `K1` pairs chosen to minimise the expected best metric.
//! * `Distributed` receives one content-free indicator per pair whose RE
//!   index encodes the quantized metric.
//! * `RoundRobin` polls fixed blocks of `K1` pairs in circular order.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::amc::AmcTable;
use crate::channel::{sample_fading, FadingSample, LinkBudget};
use crate::feedback::{
    assemble_frame, build_map, quantize, resolve_frame, update_mapping, FeedbackCapacity,
    FeedbackFrame,
};
use crate::lyapunov::{metric_bounds, metric_v, LyapunovParams, Metric, VirtualQueue};
use crate::scenario::D2DPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    Ideal,
    Centralized,
    Distributed,
    RoundRobin,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::Ideal,
        Policy::Centralized,
        Policy::Distributed,
        Policy::RoundRobin,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Policy::Ideal => "ideal",
            Policy::Centralized => "centralized",
            Policy::Distributed => "distributed",
            Policy::RoundRobin => "round-robin",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ideal" => Ok(Policy::Ideal),
            "centralized" => Ok(Policy::Centralized),
            "distributed" => Ok(Policy::Distributed),
            "round-robin" | "roundrobin" | "rr" => Ok(Policy::RoundRobin),
            _ => Err(format!(
                "unknown policy `{s}` (expected ideal, centralized, distributed or round-robin)"
            )),
        }
    }
}

/// Static description of one dropped network: everything a policy needs
/// besides the per-slot fading and queues.
#[derive(Debug, Clone)]
pub struct Network {
    pub pairs: Vec<D2DPair>,
    pub budget: LinkBudget,
    pub table: AmcTable,
    pub r_th: f64,
    pub capacity: FeedbackCapacity,
    pub quantized_powers_w: Vec<f64>,
    pub mc_samples: usize,
}

impl Network {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn metric(&self, n: usize, h2: FadingSample, q: VirtualQueue, v_weight: f64) -> Metric {
        metric_v(self.pairs[n].path_loss_linear, h2, q, v_weight, &self.budget, &self.table)
    }

    /// Reported power: the smallest grid level at or above `power_w`,
    /// clamped to the largest level.
    pub fn quantize_power(&self, power_w: f64) -> f64 {
        quantize_power_up(power_w, &self.quantized_powers_w)
    }
}

pub fn quantize_power_up(power_w: f64, grid: &[f64]) -> f64 {
    grid.iter()
        .copied()
        .find(|&p| p >= power_w)
        .unwrap_or_else(|| grid[grid.len() - 1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub policy: Policy,
    pub scheduled: Option<usize>,
    /// AMC index used by the scheduled pair.
    pub m: Option<usize>,
    pub power_w: f64,
    pub rate_bps: f64,
    /// Exact metric `V P - Q R` of the scheduled pair (`+inf` when idle).
    pub metric: f64,
    pub collision_index: Option<usize>,
    /// CSI reports (centralized, round-robin) or indicators (distributed) sent.
    pub feedback_cost: usize,
}

impl SlotOutcome {
    pub fn idle(policy: Policy) -> Self {
        Self {
            policy,
            scheduled: None,
            m: None,
            power_w: 0.0,
            rate_bps: 0.0,
            metric: f64::INFINITY,
            collision_index: None,
            feedback_cost: 0,
        }
    }

    fn granted(policy: Policy, n: usize, metric: Metric) -> Self {
        match metric.best {
            Some(point) => Self {
                policy,
                scheduled: Some(n),
                m: Some(point.m),
                power_w: point.power_w,
                rate_bps: point.rate_bps,
                metric: metric.v,
                collision_index: None,
                feedback_cost: 0,
            },
            None => Self::idle(policy),
        }
    }
}

/// Index of the smallest finite value, ties to the lowest index.
fn argmin_finite<I: IntoIterator<Item = (usize, f64)>>(values: I) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

pub fn ideal_schedule(
    net: &Network,
    fading: &[FadingSample],
    queues: &[VirtualQueue],
    params: &LyapunovParams,
) -> SlotOutcome {
    let metrics: Vec<Metric> = (0..net.len())
        .map(|n| net.metric(n, fading[n], queues[n], params.v_weight))
        .collect();
    match argmin_finite(metrics.iter().map(|m| m.v).enumerate()) {
        Some(n) => SlotOutcome::granted(Policy::Ideal, n, metrics[n]),
        None => SlotOutcome::idle(Policy::Ideal),
    }
}

/// The `K1` pairs allowed to report CSI this slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CentralizedState {
    /// Selected pair ids, ascending.
    pub subset: Vec<usize>,
    pub mc_samples: usize,
}

/// Greedy forward selection of at most `k1` columns minimising
/// `sum_s min_{n in subset} values[n][s]`.
///
/// `values[n][s]` is pair `n`'s metric under fading draw `s`; every pair is
/// evaluated on the same draws. Each round adds the pair with the smallest
/// resulting sum (ties to the lowest id), so the result always holds
/// `min(k1, N)` pairs.
pub fn greedy_subset(values: &[Vec<f64>], k1: usize, ceiling: f64) -> Vec<usize> {
    let n = values.len();
    let samples = values.first().map_or(0, Vec::len);
    let mut current = vec![ceiling; samples];
    let mut chosen = vec![false; n];
    let mut subset = Vec::with_capacity(k1.min(n));
    for _ in 0..k1.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for (cand, row) in values.iter().enumerate() {
            if chosen[cand] {
                continue;
            }
            let total: f64 = current.iter().zip(row).map(|(&c, &v)| c.min(v)).sum();
            if best.is_none_or(|(_, b)| total < b) {
                best = Some((cand, total));
            }
        }
        let Some((pick, _)) = best else { break };
        chosen[pick] = true;
        subset.push(pick);
        for (c, &v) in current.iter_mut().zip(&values[pick]) {
            *c = c.min(v);
        }
    }
    subset.sort_unstable();
    subset
}

/// Monte-Carlo estimate of `E_h[min_{n in subset} v_n]` on a sample matrix.
pub fn subset_objective(values: &[Vec<f64>], subset: &[usize], ceiling: f64) -> f64 {
    let samples = values.first().map_or(0, Vec::len);
    if samples == 0 {
        return ceiling;
    }
    let total: f64 = (0..samples)
        .map(|s| subset.iter().fold(ceiling, |acc, &n| acc.min(values[n][s])))
        .sum();
    total / samples as f64
}

/// Metric ceiling used by the subset estimator: an unreachable pair counts
/// as `V * P_max`, above any feasible metric.
pub fn estimator_ceiling(net: &Network, v_weight: f64) -> f64 {
    v_weight * net.budget.p_max_w
}

/// Draws `mc_samples` common fading realisations and evaluates every pair's
/// metric on them. Infeasible draws are clipped to the estimator ceiling.
pub fn sample_metric_matrix<R: Rng + ?Sized>(
    net: &Network,
    queues: &[VirtualQueue],
    v_weight: f64,
    mc_samples: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let ceiling = estimator_ceiling(net, v_weight);
    let mut values = vec![Vec::with_capacity(mc_samples); net.len()];
    for _ in 0..mc_samples {
        for (n, row) in values.iter_mut().enumerate() {
            let v = net.metric(n, sample_fading(rng), queues[n], v_weight).v;
            row.push(v.min(ceiling));
        }
    }
    values
}

pub fn select_subset<R: Rng + ?Sized>(
    net: &Network,
    queues: &[VirtualQueue],
    params: &LyapunovParams,
    rng: &mut R,
) -> CentralizedState {
    let k1 = net.capacity.k1;
    let subset = if net.len() <= k1 {
        (0..net.len()).collect()
    } else {
        let values = sample_metric_matrix(net, queues, params.v_weight, net.mc_samples, rng);
        greedy_subset(&values, k1, estimator_ceiling(net, params.v_weight))
    };
    CentralizedState {
        subset,
        mc_samples: net.mc_samples,
    }
}

/// Base-station choice among reporting pairs: argmin of `V P~ - Q R` with
/// `P~` the reported (quantized) power. The winner transmits at its true power.
fn schedule_among_reports(
    policy: Policy,
    members: &[usize],
    net: &Network,
    fading: &[FadingSample],
    queues: &[VirtualQueue],
    v_weight: f64,
) -> SlotOutcome {
    let metrics: Vec<(usize, Metric)> = members
        .iter()
        .map(|&n| (n, net.metric(n, fading[n], queues[n], v_weight)))
        .collect();
    let reported = metrics.iter().map(|(n, m)| {
        let score = match m.best {
            Some(p) => v_weight * net.quantize_power(p.power_w) - queues[*n].backlog * p.rate_bps,
            None => f64::INFINITY,
        };
        (*n, score)
    });
    // members are ascending, so argmin over (id, score) keeps the lowest-id tie rule
    let mut outcome = match argmin_finite(reported) {
        Some(n) => {
            let metric = metrics.iter().find(|(id, _)| *id == n).map(|(_, m)| *m).unwrap();
            SlotOutcome::granted(policy, n, metric)
        }
        None => SlotOutcome::idle(policy),
    };
    outcome.feedback_cost = members.len();
    outcome
}

pub fn centralized_schedule(
    state: &CentralizedState,
    net: &Network,
    fading: &[FadingSample],
    queues: &[VirtualQueue],
    params: &LyapunovParams,
) -> SlotOutcome {
    schedule_among_reports(
        Policy::Centralized,
        &state.subset,
        net,
        fading,
        queues,
        params.v_weight,
    )
}

/// `K1` consecutive ids starting at `slot * K1 mod N`, wrapping, ascending.
pub fn round_robin_subset(slot: u64, n_pairs: usize, k1: usize) -> Vec<usize> {
    if n_pairs <= k1 {
        return (0..n_pairs).collect();
    }
    let start = ((slot % n_pairs as u64) * (k1 as u64 % n_pairs as u64)) % n_pairs as u64;
    let mut ids: Vec<usize> = (0..k1).map(|i| (start as usize + i) % n_pairs).collect();
    ids.sort_unstable();
    ids
}

pub fn round_robin_schedule(
    slot: u64,
    net: &Network,
    fading: &[FadingSample],
    queues: &[VirtualQueue],
    params: &LyapunovParams,
) -> SlotOutcome {
    let members = round_robin_subset(slot, net.len(), net.capacity.k1);
    schedule_among_reports(Policy::RoundRobin, &members, net, fading, queues, params.v_weight)
}

#[derive(Debug, Clone)]
pub struct DistributedSlot {
    pub outcome: SlotOutcome,
    /// Mapping state for the next slot.
    pub params: LyapunovParams,
    pub frame: FeedbackFrame,
}

/// RE placements: every pair with a reachable rate quantizes its metric on
/// the shared map. Unreachable pairs stay silent.
pub fn distributed_placements(metrics: &[Metric], params: &LyapunovParams, net: &Network) -> Vec<(usize, usize)> {
    let k2 = net.capacity.k2;
    let (v_min, v_max) = metric_bounds(params, net.r_th, net.budget.p_max_w, &net.table, k2);
    let map = build_map(v_min, v_max, k2).ok();
    metrics
        .iter()
        .enumerate()
        .filter(|(_, m)| m.is_feasible())
        .map(|(n, m)| {
            let re = match &map {
                Some(map) => quantize(m.v, map).1,
                // interval collapsed below float resolution: everything sits above it
                None => k2,
            };
            (n, re)
        })
        .collect()
}

pub fn distributed_schedule(
    net: &Network,
    fading: &[FadingSample],
    queues: &[VirtualQueue],
    params: &LyapunovParams,
) -> DistributedSlot {
    let metrics: Vec<Metric> = (0..net.len())
        .map(|n| net.metric(n, fading[n], queues[n], params.v_weight))
        .collect();
    let placements = distributed_placements(&metrics, params, net);
    let frame = assemble_frame(&placements).expect("one placement per pair");
    let resolution = resolve_frame(&frame);
    let mut outcome = match resolution.winner {
        Some(n) => SlotOutcome::granted(Policy::Distributed, n, metrics[n]),
        None => SlotOutcome::idle(Policy::Distributed),
    };
    outcome.collision_index = resolution.collision_index;
    outcome.feedback_cost = placements.len();
    let next = match resolution.collision_index {
        Some(c) => update_mapping(*params, c, net.capacity.k2),
        None => *params,
    };
    DistributedSlot {
        outcome,
        params: next,
        frame,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amc::default_amc_table;
    use crate::config::ScenarioConfig;
    use crate::scenario::drop_pairs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn network(n_pairs: usize, k1: usize, k2: usize, seed: u64) -> Network {
        let cfg = ScenarioConfig {
            n_pairs,
            d_max_m: 150.0,
            ..ScenarioConfig::default()
        };
        let table = default_amc_table();
        Network {
            pairs: drop_pairs(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)),
            budget: LinkBudget::from_config(&cfg),
            r_th: cfg.r_th(&table).unwrap(),
            table,
            capacity: FeedbackCapacity { k1, k2 },
            quantized_powers_w: cfg.quantized_powers_w.clone(),
            mc_samples: 200,
        }
    }

    fn random_state(net: &Network, seed: u64) -> (Vec<FadingSample>, Vec<VirtualQueue>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fading = (0..net.len()).map(|_| sample_fading(&mut rng)).collect();
        let queues = (0..net.len())
            .map(|_| VirtualQueue {
                backlog: rng.random_range(0.0..2e5),
            })
            .collect();
        (fading, queues)
    }

    #[test]
    fn policy_ids_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.id().parse::<Policy>().unwrap(), p);
        }
        assert!("fifo".parse::<Policy>().is_err());
    }

    #[test]
    fn power_grid_ceiling() {
        let grid = [0.05, 0.10, 0.15, 0.20];
        assert_eq!(quantize_power_up(0.12, &grid), 0.15);
        assert_eq!(quantize_power_up(0.05, &grid), 0.05);
        assert_eq!(quantize_power_up(0.001, &grid), 0.05);
        assert_eq!(quantize_power_up(0.24, &grid), 0.20);
    }

    #[test]
    fn ideal_single_pair() {
        let net = network(1, 4, 12, 3);
        let (fading, queues) = random_state(&net, 4);
        let out = ideal_schedule(&net, &[FadingSample { h_squared: 10.0 }], &queues, &LyapunovParams::new(1e12));
        assert_eq!(out.scheduled, Some(0));
        let _ = fading;
    }

    #[test]
    fn ideal_all_infeasible() {
        let net = network(3, 4, 12, 3);
        let fading = vec![FadingSample { h_squared: 1e-12 }; 3];
        let queues = vec![VirtualQueue::default(); 3];
        let out = ideal_schedule(&net, &fading, &queues, &LyapunovParams::new(1e12));
        assert_eq!(out.scheduled, None);
        assert_eq!((out.power_w, out.rate_bps), (0.0, 0.0));
    }

    #[test]
    fn ideal_matches_brute_force() {
        let net = network(5, 4, 12, 11);
        for seed in 0..50 {
            let (fading, queues) = random_state(&net, seed);
            let params = LyapunovParams::new(1e12);
            let out = ideal_schedule(&net, &fading, &queues, &params);
            // brute force over pairs and rates, written out independently
            let mut best = (f64::INFINITY, None);
            for n in 0..5 {
                for m in 1..=net.table.len() {
                    let p = net.table.threshold(m) * net.budget.noise_w * net.pairs[n].path_loss_linear
                        / fading[n].h_squared;
                    if p > net.budget.p_max_w {
                        continue;
                    }
                    let v = 1e12 * p - queues[n].backlog * net.table.rate(m);
                    if v < best.0 {
                        best = (v, Some(n));
                    }
                }
            }
            assert_eq!(out.scheduled, best.1);
        }
    }

    #[test]
    fn greedy_keeps_everyone_when_small() {
        let net = network(3, 4, 12, 2);
        let queues = vec![VirtualQueue::default(); 3];
        let state = select_subset(&net, &queues, &LyapunovParams::new(1e12), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(state.subset, vec![0, 1, 2]);
        let values = vec![vec![1.0, 2.0], vec![3.0, 0.5], vec![9.0, 9.0]];
        assert_eq!(greedy_subset(&values, 5, 10.0), vec![0, 1, 2]);
    }

    #[test]
    fn greedy_tie_goes_to_lowest_id() {
        let row = vec![4.0, -2.0, 1.0, 0.0];
        let values = vec![vec![9.0; 4], row.clone(), row, vec![8.0; 4]];
        assert_eq!(greedy_subset(&values, 1, 100.0), vec![1]);
    }

    #[test]
    fn greedy_close_to_exhaustive() {
        let net = network(6, 3, 12, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let queues: Vec<VirtualQueue> = (0..6)
            .map(|_| VirtualQueue { backlog: rng.random_range(0.0..1e5) })
            .collect();
        let values = sample_metric_matrix(&net, &queues, 1e12, 2000, &mut rng);
        let ceiling = estimator_ceiling(&net, 1e12);
        let greedy = subset_objective(&values, &greedy_subset(&values, 3, ceiling), ceiling);
        let mut exhaustive = f64::INFINITY;
        for a in 0..6 {
            for b in a + 1..6 {
                for c in b + 1..6 {
                    exhaustive = exhaustive.min(subset_objective(&values, &[a, b, c], ceiling));
                }
            }
        }
        assert!(greedy >= exhaustive);
        assert!((greedy - exhaustive).abs() <= 0.02 * exhaustive.abs(), "{greedy} vs {exhaustive}");
    }

    #[test]
    fn centralized_single_member_and_infeasible() {
        let net = network(4, 1, 12, 5);
        let queues = vec![VirtualQueue { backlog: 1e4 }; 4];
        let fading = vec![FadingSample { h_squared: 5.0 }; 4];
        let state = CentralizedState { subset: vec![2], mc_samples: 1 };
        let out = centralized_schedule(&state, &net, &fading, &queues, &LyapunovParams::new(1e12));
        assert_eq!(out.scheduled, Some(2));
        assert_eq!(out.feedback_cost, 1);
        let fading = vec![FadingSample { h_squared: 1e-12 }; 4];
        let out = centralized_schedule(&state, &net, &fading, &queues, &LyapunovParams::new(1e12));
        assert_eq!(out.scheduled, None);
    }

    #[test]
    fn winner_transmits_true_power() {
        let net = network(4, 4, 12, 5);
        let (fading, queues) = random_state(&net, 17);
        let params = LyapunovParams::new(1e12);
        let state = CentralizedState { subset: vec![0, 1, 2, 3], mc_samples: 1 };
        let out = centralized_schedule(&state, &net, &fading, &queues, &params);
        if let Some(n) = out.scheduled {
            let exact = net.metric(n, fading[n], queues[n], 1e12);
            assert_eq!(out.power_w, exact.best.unwrap().power_w);
        }
    }

    #[test]
    fn round_robin_rotation() {
        assert_eq!(round_robin_subset(0, 6, 2), vec![0, 1]);
        assert_eq!(round_robin_subset(1, 6, 2), vec![2, 3]);
        assert_eq!(round_robin_subset(2, 6, 2), vec![4, 5]);
        assert_eq!(round_robin_subset(3, 6, 2), vec![0, 1]);
        assert_eq!(round_robin_subset(1, 10, 4), vec![4, 5, 6, 7]);
        assert_eq!(round_robin_subset(2, 10, 4), vec![0, 1, 8, 9]);
        assert_eq!(round_robin_subset(7, 3, 4), vec![0, 1, 2]);
    }

    #[test]
    fn round_robin_degenerates_to_centralized() {
        let net = network(3, 4, 12, 9);
        let params = LyapunovParams::new(1e12);
        for seed in 0..20 {
            let (fading, queues) = random_state(&net, seed);
            let state = select_subset(&net, &queues, &params, &mut ChaCha8Rng::seed_from_u64(seed));
            let c = centralized_schedule(&state, &net, &fading, &queues, &params);
            let r = round_robin_schedule(seed, &net, &fading, &queues, &params);
            assert_eq!(c.scheduled, r.scheduled);
            assert_eq!(c.power_w, r.power_w);
        }
    }

    #[test]
    fn distributed_single_pair_never_collides() {
        let net = network(1, 4, 12, 1);
        let mut params = LyapunovParams::new(1e12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let fading = [sample_fading(&mut rng)];
            let queues = [VirtualQueue { backlog: 5e4 }];
            let slot = distributed_schedule(&net, &fading, &queues, &params);
            assert_eq!(slot.outcome.collision_index, None);
            let feasible = net.metric(0, fading[0], queues[0], 1e12).is_feasible();
            assert_eq!(slot.outcome.scheduled.is_some(), feasible);
            params = slot.params;
        }
    }

    #[test]
    fn distributed_all_on_one_level_collides() {
        // identical pairs, identical fading and queues: every indicator on one RE
        let mut net = network(3, 4, 12, 1);
        let proto = net.pairs[0].clone();
        for (i, p) in net.pairs.iter_mut().enumerate() {
            *p = D2DPair { id: i, ..proto.clone() };
        }
        let fading = vec![FadingSample { h_squared: 2.0 }; 3];
        let queues = vec![VirtualQueue { backlog: 1e4 }; 3];
        let params = LyapunovParams::new(1e12);
        let slot = distributed_schedule(&net, &fading, &queues, &params);
        assert_eq!(slot.outcome.scheduled, None);
        let c = slot.outcome.collision_index.unwrap();
        assert_eq!(slot.frame.occupancy()[&c], vec![0, 1, 2]);
        assert_eq!(slot.params.r, c);
        assert_eq!(slot.params.f, if c < 12 { 1 } else { 0 });
    }
}
