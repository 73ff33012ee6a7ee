//! Slot-by-slot simulation, realization fan-out and policy comparison.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{sample_fading, FadingSample, LinkBudget};
use crate::config::ScenarioConfig;
use crate::error::ConfigError;
use crate::feedback::{effective_capacities, FeedbackFrame};
use crate::lyapunov::{queue_update, LyapunovParams, VirtualQueue};
use crate::scenario::drop_pairs;
use crate::schedulers::{
    centralized_schedule, distributed_schedule, ideal_schedule, round_robin_schedule,
    select_subset, Network, Policy, SlotOutcome,
};
use crate::stats::{mean_ci95, MeanCi};

const STREAM_DROP: u64 = 0xD809;
const STREAM_FADING: u64 = 0xFAD1;
const STREAM_ESTIMATOR: u64 = 0xE571;

/// One splitmix64 step.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_4776_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `tags` into `base` with splitmix64; distinct tag paths give
/// independent-looking seeds.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

pub fn realization_seed(base_seed: u64, realization: usize) -> u64 {
    derive_seed(base_seed, &[realization as u64])
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub policies: Vec<Policy>,
    pub slots: u64,
    pub realizations: usize,
    /// All policies see the same fading stream in each realization.
    pub paired_fading: bool,
    pub base_seed: u64,
    /// Leading share of slots excluded from the averages.
    pub warmup_fraction: f64,
    pub jobs: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            policies: Policy::ALL.to_vec(),
            slots: 10_000,
            realizations: 10,
            paired_fading: true,
            base_seed: 1,
            warmup_fraction: 0.2,
            jobs: 1,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.slots == 0 {
            return Err(ConfigError::invalid("slots", "must be >= 1"));
        }
        if self.realizations == 0 {
            return Err(ConfigError::invalid("realizations", "must be >= 1"));
        }
        if self.policies.is_empty() {
            return Err(ConfigError::invalid("policy", "at least one policy is required"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(ConfigError::invalid("warmup_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }

    fn warmup_slots(&self) -> u64 {
        ((self.warmup_fraction * self.slots as f64).floor() as u64).min(self.slots - 1)
    }
}

/// Builds the network of one realization: pair drop plus the static link model.
pub fn build_network(cfg: &ScenarioConfig, seed: u64) -> Result<Network, ConfigError> {
    cfg.validate()?;
    let table = cfg.load_amc_table()?;
    let capacity = effective_capacities(cfg).map_err(|e| ConfigError::invalid("n_rb_feedback", e.to_string()))?;
    if capacity.k1 == 0 {
        return Err(ConfigError::invalid("k1", "must be >= 1"));
    }
    if capacity.k2 < 2 {
        return Err(ConfigError::invalid("k2", "at least 2 indicator REs are needed"));
    }
    let mut drop_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STREAM_DROP]));
    Ok(Network {
        pairs: drop_pairs(cfg, &mut drop_rng),
        budget: LinkBudget::from_config(cfg),
        r_th: cfg.r_th(&table)?,
        table,
        capacity,
        quantized_powers_w: cfg.quantized_powers_w.clone(),
        mc_samples: cfg.mc_samples,
    })
}

/// Mutable state of one policy within one realization.
#[derive(Debug, Clone)]
pub struct SimState {
    pub queues: Vec<VirtualQueue>,
    pub params: LyapunovParams,
    /// 0-based index of the next slot.
    pub slot: u64,
    fading_rng: ChaCha8Rng,
    estimator_rng: ChaCha8Rng,
}

impl SimState {
    pub fn new(n_pairs: usize, v_weight: f64, fading_seed: u64, estimator_seed: u64) -> Self {
        Self {
            queues: vec![VirtualQueue::default(); n_pairs],
            params: LyapunovParams::new(v_weight),
            slot: 0,
            fading_rng: ChaCha8Rng::seed_from_u64(fading_seed),
            estimator_rng: ChaCha8Rng::seed_from_u64(estimator_seed),
        }
    }

    /// State for `policy` in the realization seeded by `seed`.
    pub fn for_policy(net: &Network, v_weight: f64, seed: u64, policy: Policy, paired_fading: bool) -> Self {
        let fading_seed = if paired_fading {
            derive_seed(seed, &[STREAM_FADING])
        } else {
            derive_seed(seed, &[STREAM_FADING, policy as u64 + 1])
        };
        let estimator_seed = derive_seed(seed, &[STREAM_ESTIMATOR, policy as u64]);
        Self::new(net.len(), v_weight, fading_seed, estimator_seed)
    }

    pub fn sum_queue(&self) -> f64 {
        self.queues.iter().map(|q| q.backlog).sum()
    }
}

#[derive(Debug, Clone)]
pub struct SlotRecord {
    pub slot: u64,
    pub fading: Vec<FadingSample>,
    pub outcome: SlotOutcome,
    /// Indicator frame, distributed policy only.
    pub frame: Option<FeedbackFrame>,
}

/// Runs one policy on already drawn fading, without touching the queues.
pub fn decide(
    state: &mut SimState,
    net: &Network,
    policy: Policy,
    fading: &[FadingSample],
) -> (SlotOutcome, Option<FeedbackFrame>) {
    match policy {
        Policy::Ideal => (ideal_schedule(net, fading, &state.queues, &state.params), None),
        Policy::Centralized => {
            let subset = select_subset(net, &state.queues, &state.params, &mut state.estimator_rng);
            (centralized_schedule(&subset, net, fading, &state.queues, &state.params), None)
        }
        Policy::RoundRobin => (
            round_robin_schedule(state.slot, net, fading, &state.queues, &state.params),
            None,
        ),
        Policy::Distributed => {
            let out = distributed_schedule(net, fading, &state.queues, &state.params);
            state.params = out.params;
            (out.outcome, Some(out.frame))
        }
    }
}

/// Draws fading, lets `policy` decide, serves the winner and updates every
/// virtual queue.
pub fn run_slot(state: &mut SimState, net: &Network, policy: Policy, t_p: u64) -> SlotRecord {
    let fading: Vec<FadingSample> = (0..net.len()).map(|_| sample_fading(&mut state.fading_rng)).collect();
    let (outcome, frame) = decide(state, net, policy, &fading);
    for (n, q) in state.queues.iter_mut().enumerate() {
        let served = if outcome.scheduled == Some(n) { outcome.rate_bps } else { 0.0 };
        *q = queue_update(*q, served, net.r_th);
    }
    let record = SlotRecord {
        slot: state.slot,
        fading,
        outcome,
        frame,
    };
    state.slot += 1;
    state.params.advance(t_p);
    record
}

/// Aggregates over the post-warmup window of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub policy: Policy,
    pub seed: u64,
    pub total_energy_j: f64,
    pub total_bits: f64,
    pub per_pair_avg_rate_bps: Vec<f64>,
    pub avg_sum_queue: f64,
    /// Slots with at least one RE collision.
    pub collision_count: u64,
    /// Slots where collisions left nobody scheduled.
    pub overall_collision_count: u64,
    pub scheduled_slot_fraction: f64,
    /// Slots in the averaging window.
    pub slots: u64,
    pub slot_duration_s: f64,
    pub r_th: f64,
    /// Mean of `sum_n Q_n` over each quarter of the whole run.
    pub sum_queue_quarters: [f64; 4],
}

impl RunMetrics {
    /// Time-average transmit power, idle slots counted as zero.
    pub fn avg_power_w(&self) -> f64 {
        self.total_energy_j / (self.slots as f64 * self.slot_duration_s)
    }

    /// Delivered bits per joule.
    pub fn energy_efficiency(&self) -> f64 {
        if self.total_energy_j > 0.0 {
            self.total_bits / self.total_energy_j
        } else {
            0.0
        }
    }

    pub fn collision_rate(&self) -> f64 {
        self.collision_count as f64 / self.slots as f64
    }

    /// Worst pair's average rate relative to `R_th`.
    pub fn min_rate_ratio(&self) -> f64 {
        self.per_pair_avg_rate_bps
            .iter()
            .fold(f64::INFINITY, |acc, &r| acc.min(r / self.r_th))
    }
}

/// Streams per-slot rows while a realization runs.
pub trait SlotObserver {
    fn on_slot(&mut self, state: &SimState, record: &SlotRecord);
}

impl SlotObserver for () {
    fn on_slot(&mut self, _: &SimState, _: &SlotRecord) {}
}

pub fn run_with_observer<O: SlotObserver + ?Sized>(
    cfg: &ScenarioConfig,
    engine: &EngineConfig,
    net: &Network,
    policy: Policy,
    seed: u64,
    observer: &mut O,
) -> RunMetrics {
    let mut state = SimState::for_policy(net, cfg.v_weight, seed, policy, engine.paired_fading);
    let warmup = engine.warmup_slots();
    let window = engine.slots - warmup;
    let quarter_len = (engine.slots as f64 / 4.0).max(1.0);
    let mut quarters = [0.0f64; 4];
    let mut quarter_counts = [0u64; 4];
    let mut pair_bits = vec![0.0f64; net.len()];
    let (mut energy, mut bits, mut queue_acc) = (0.0, 0.0, 0.0);
    let (mut collisions, mut overall, mut scheduled) = (0u64, 0u64, 0u64);

    for t in 0..engine.slots {
        let record = run_slot(&mut state, net, policy, cfg.t_p_slots);
        let sum_q = state.sum_queue();
        let quarter = ((t as f64 / quarter_len) as usize).min(3);
        quarters[quarter] += sum_q;
        quarter_counts[quarter] += 1;
        if t >= warmup {
            let out = &record.outcome;
            energy += out.power_w * cfg.slot_duration_s;
            bits += out.rate_bps * cfg.slot_duration_s;
            queue_acc += sum_q;
            if let Some(n) = out.scheduled {
                pair_bits[n] += out.rate_bps;
                scheduled += 1;
            }
            if out.collision_index.is_some() {
                collisions += 1;
                if out.scheduled.is_none() {
                    overall += 1;
                }
            }
        }
        observer.on_slot(&state, &record);
    }
    for (q, c) in quarters.iter_mut().zip(quarter_counts) {
        if c > 0 {
            *q /= c as f64;
        }
    }
    RunMetrics {
        policy,
        seed,
        total_energy_j: energy,
        total_bits: bits,
        per_pair_avg_rate_bps: pair_bits.iter().map(|b| b / window as f64).collect(),
        avg_sum_queue: queue_acc / window as f64,
        collision_count: collisions,
        overall_collision_count: overall,
        scheduled_slot_fraction: scheduled as f64 / window as f64,
        slots: window,
        slot_duration_s: cfg.slot_duration_s,
        r_th: net.r_th,
        sum_queue_quarters: quarters,
    }
}

/// Fresh drop from `seed`, then `engine.slots` slots of `policy`.
pub fn run_realization(
    cfg: &ScenarioConfig,
    engine: &EngineConfig,
    policy: Policy,
    seed: u64,
) -> Result<RunMetrics, ConfigError> {
    let net = build_network(cfg, seed)?;
    Ok(run_with_observer(cfg, engine, &net, policy, seed, &mut ()))
}

/// One row of `runs.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub gamma_th_db: f64,
    pub realization: usize,
    pub metrics: RunMetrics,
}

/// One row of `summary.csv`: statistics across realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub gamma_th_db: f64,
    pub policy: Policy,
    pub realizations: usize,
    pub avg_power_w: MeanCi,
    pub ee_bits_per_j: MeanCi,
    pub avg_sum_queue: f64,
    pub collision_rate: f64,
    pub scheduled_fraction: f64,
    /// Smallest per-pair rate ratio `rate / R_th` over all realizations.
    pub min_rate_ratio: f64,
    /// `100 (1 - P / P_rr)` against round-robin at the same threshold.
    pub ec_reduction_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub runs: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
}

impl Comparison {
    pub fn summary_for(&self, gamma_th_db: f64, policy: Policy) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.policy == policy && s.gamma_th_db == gamma_th_db)
    }

    pub fn runs_for(&self, gamma_th_db: f64, policy: Policy) -> impl Iterator<Item = &RunRow> {
        self.runs
            .iter()
            .filter(move |r| r.metrics.policy == policy && r.gamma_th_db == gamma_th_db)
    }
}

fn thread_pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("rayon pool")
}

/// Runs every (threshold, realization, policy) combination and summarises
/// per (threshold, policy). Output order and values do not depend on `jobs`.
pub fn compare_policies(
    cfg: &ScenarioConfig,
    engine: &EngineConfig,
    gammas_db: &[f64],
) -> Result<Comparison, ConfigError> {
    engine.validate()?;
    let gammas: Vec<f64> = if gammas_db.is_empty() {
        vec![cfg.gamma_th_db]
    } else {
        gammas_db.to_vec()
    };
    let mut tasks = Vec::new();
    let mut networks = Vec::new();
    for (gi, &gamma) in gammas.iter().enumerate() {
        let gcfg = ScenarioConfig {
            gamma_th_db: gamma,
            ..cfg.clone()
        };
        for r in 0..engine.realizations {
            let seed = realization_seed(engine.base_seed, r);
            networks.push((gi, r, build_network(&gcfg, seed)?, seed));
        }
    }
    for (ni, _) in networks.iter().enumerate() {
        for &policy in &engine.policies {
            tasks.push((ni, policy));
        }
    }
    let results: Vec<RunMetrics> = thread_pool(engine.jobs).install(|| {
        tasks
            .par_iter()
            .map(|&(ni, policy)| {
                let (_, _, net, seed) = &networks[ni];
                run_with_observer(cfg, engine, net, policy, *seed, &mut ())
            })
            .collect()
    });
    let runs: Vec<RunRow> = tasks
        .iter()
        .zip(results)
        .map(|(&(ni, _), metrics)| RunRow {
            gamma_th_db: gammas[networks[ni].0],
            realization: networks[ni].1,
            metrics,
        })
        .collect();
    let summary = summarise(&runs, &gammas, &engine.policies);
    Ok(Comparison { runs, summary })
}

fn summarise(runs: &[RunRow], gammas: &[f64], policies: &[Policy]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &gamma in gammas {
        let mut per_policy = Vec::new();
        for &policy in policies {
            let sel: Vec<&RunMetrics> = runs
                .iter()
                .filter(|r| r.gamma_th_db == gamma && r.metrics.policy == policy)
                .map(|r| &r.metrics)
                .collect();
            let n = sel.len() as f64;
            let powers: Vec<f64> = sel.iter().map(|m| m.avg_power_w()).collect();
            let ees: Vec<f64> = sel.iter().map(|m| m.energy_efficiency()).collect();
            per_policy.push(SummaryRow {
                gamma_th_db: gamma,
                policy,
                realizations: sel.len(),
                avg_power_w: mean_ci95(&powers),
                ee_bits_per_j: mean_ci95(&ees),
                avg_sum_queue: sel.iter().map(|m| m.avg_sum_queue).sum::<f64>() / n,
                collision_rate: sel.iter().map(|m| m.collision_rate()).sum::<f64>() / n,
                scheduled_fraction: sel.iter().map(|m| m.scheduled_slot_fraction).sum::<f64>() / n,
                min_rate_ratio: sel.iter().map(|m| m.min_rate_ratio()).fold(f64::INFINITY, f64::min),
                ec_reduction_pct: None,
            });
        }
        let rr_power = per_policy
            .iter()
            .find(|s| s.policy == Policy::RoundRobin)
            .map(|s| s.avg_power_w.mean);
        for row in &mut per_policy {
            row.ec_reduction_pct = rr_power
                .filter(|&p| p > 0.0)
                .map(|p| 100.0 * (1.0 - row.avg_power_w.mean / p));
        }
        rows.extend(per_policy);
    }
    rows
}

pub const RUNS_HEADER: &str = "seed,policy,gamma_th_db,avg_power_w,ee_bits_per_j,avg_sum_queue,collision_rate,scheduled_fraction,total_energy_j,total_bits,min_rate_ratio,realization";

pub const SUMMARY_HEADER: &str = "gamma_th_db,policy,realizations,avg_power_w_mean,avg_power_w_ci95,ee_bits_per_j_mean,ee_bits_per_j_ci95,avg_sum_queue_mean,collision_rate_mean,scheduled_fraction_mean,min_rate_ratio,ec_reduction_vs_rr_pct";

pub const TRACE_HEADER: &str = "gamma_th_db,realization,policy,slot,scheduled,m,power_w,rate_bps,collision_index,sum_queue";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_runs_csv<W: Write>(out: &mut W, runs: &[RunRow]) -> std::io::Result<()> {
    writeln!(out, "{RUNS_HEADER}")?;
    for r in runs {
        let m = &r.metrics;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            m.seed,
            m.policy,
            r.gamma_th_db,
            m.avg_power_w(),
            m.energy_efficiency(),
            m.avg_sum_queue,
            m.collision_rate(),
            m.scheduled_slot_fraction,
            m.total_energy_j,
            m.total_bits,
            m.min_rate_ratio(),
            r.realization
        )?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: &mut W, rows: &[SummaryRow]) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for s in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.gamma_th_db,
            s.policy,
            s.realizations,
            s.avg_power_w.mean,
            s.avg_power_w.half_width,
            s.ee_bits_per_j.mean,
            s.ee_bits_per_j.half_width,
            s.avg_sum_queue,
            s.collision_rate,
            s.scheduled_fraction,
            s.min_rate_ratio,
            opt(s.ec_reduction_pct)
        )?;
    }
    Ok(())
}

/// Writes one `trace.csv` row per slot.
pub struct TraceWriter<'a, W: Write> {
    pub out: &'a mut W,
    pub gamma_th_db: f64,
    pub realization: usize,
    pub policy: Policy,
    pub error: Option<std::io::Error>,
}

impl<W: Write> SlotObserver for TraceWriter<'_, W> {
    fn on_slot(&mut self, state: &SimState, record: &SlotRecord) {
        if self.error.is_some() {
            return;
        }
        let o = &record.outcome;
        if let Err(e) = writeln!(
            self.out,
            "{},{},{},{},{},{},{},{},{},{}",
            self.gamma_th_db,
            self.realization,
            self.policy,
            record.slot,
            opt(o.scheduled),
            opt(o.m),
            o.power_w,
            o.rate_bps,
            opt(o.collision_index),
            state.sum_queue()
        ) {
            self.error = Some(e);
        }
    }
}
