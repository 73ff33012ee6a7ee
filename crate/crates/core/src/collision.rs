//! Overall-collision probability of the indicator feedback, single-rate case.
//!
//! With one rate `R` at threshold `S` and no power cap, pair `i`'s metric is
//! `v_i = V S N_o L_i / |h_i|^2 - Q_i R`. Since `|h_i|^2 ~ Exp(1)`,
//!
//! ```text
//! P(v_i <= x) = exp(c_i(x)),   c_i(x) = -V S N_o L_i / (x + Q_i R)   for x > -Q_i R
//! ```
//!
//! and 0 otherwise. Quantizing down onto levels `a_1 < ... < a_K` puts pair
//! `i` on RE `j` when `v_i` falls in `(a_j, a_{j+1}]`, with the first RE
//! taking everything below `a_2` and the last everything above `a_K`.
//! An overall collision is a frame with no singly-occupied RE.
//!
//! Three routes are provided:
//! * [`collision_probability_prefix_sum`], the double sum over (pair, RE) of
//!   "pair alone on RE, no lower RE held by a single other pair", with
//!   per-RE independence. It is cheap (`O(N^2 K)`) but only approximate and
//!   can leave `[0, 1]`.
//! * [`collision_probability`], the exact probability of the event, by
//!   recursion over REs on subsets of pairs (`O(K 3^N)`, small `N` only).
//! * [`mc_collision_oracle`], direct simulation through the same
//!   quantize/resolve code the scheduler uses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::amc::{db_to_linear, AmcEntry, AmcTable};
use crate::channel::sample_fading;
use crate::config::ScenarioConfig;
use crate::error::{AnalysisError, ConfigError};
use crate::feedback::{assemble_frame, build_map, effective_capacities, quantize, resolve_frame, IndexingMap};
use crate::lyapunov::{metric_bounds, LyapunovParams};

/// Largest pair count accepted by the exact evaluator.
pub const MAX_EXACT_PAIRS: usize = 12;

/// Independent streams used by the Monte-Carlo oracle, fixed so that the
/// estimate does not depend on the thread count.
const ORACLE_STREAMS: u64 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionModelInput {
    pub v_weight: f64,
    pub snr_threshold_linear: f64,
    pub rate_bps: f64,
    pub noise_w: f64,
    /// Linear losses `L_i` (received power `P |h|^2 / L_i`).
    pub path_losses: Vec<f64>,
    pub queue_backlogs: Vec<f64>,
    pub map: IndexingMap,
}

impl CollisionModelInput {
    pub fn n_pairs(&self) -> usize {
        self.path_losses.len()
    }

    pub fn k2(&self) -> usize {
        self.map.k2()
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.path_losses.is_empty() {
            return Err(AnalysisError::Input("at least one pair is required".into()));
        }
        if self.path_losses.len() != self.queue_backlogs.len() {
            return Err(AnalysisError::Input(
                "path_losses and queue_backlogs lengths differ".into(),
            ));
        }
        if self.v_weight < 0.0 || self.snr_threshold_linear <= 0.0 || self.noise_w <= 0.0 {
            return Err(AnalysisError::Input("V >= 0, S > 0 and N_o > 0 required".into()));
        }
        Ok(())
    }

    /// Single-rate metric of pair `i` under fading `h2`.
    pub fn metric(&self, i: usize, h2: f64) -> f64 {
        self.v_weight * self.snr_threshold_linear * self.noise_w * self.path_losses[i] / h2
            - self.queue_backlogs[i] * self.rate_bps
    }

    fn scale(&self, i: usize) -> f64 {
        self.v_weight * self.snr_threshold_linear * self.noise_w * self.path_losses[i]
    }

    /// `P(v_i <= x)`, with the limits at `x = -inf`, `+inf` and `x <= -Q_i R`.
    pub fn metric_cdf(&self, i: usize, x: f64) -> f64 {
        if x == f64::INFINITY {
            return 1.0;
        }
        let denom = x + self.queue_backlogs[i] * self.rate_bps;
        if denom <= 0.0 {
            return 0.0;
        }
        (-self.scale(i) / denom).exp()
    }

    /// `P(A_{i,j})`: pair `i` lands on RE `j` (1-based).
    pub fn level_probability(&self, i: usize, j: usize) -> f64 {
        let k = self.k2();
        let lower = if j == 1 { f64::NEG_INFINITY } else { self.map.level(j) };
        let upper = if j == k { f64::INFINITY } else { self.map.level(j + 1) };
        let lo = if lower == f64::NEG_INFINITY { 0.0 } else { self.metric_cdf(i, lower) };
        (self.metric_cdf(i, upper) - lo).clamp(0.0, 1.0)
    }

    fn level_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n_pairs())
            .map(|i| (1..=self.k2()).map(|j| self.level_probability(i, j)).collect())
            .collect()
    }
}

/// `c_{i,j} = -V S N_o L_i / (a_j + Q_i R)` for `1 <= j <= K`; `j = K + 1`
/// stands for `a = +inf` and gives 0.
pub fn c_coeff(input: &CollisionModelInput, i: usize, j: usize) -> Result<f64, AnalysisError> {
    if j == input.k2() + 1 {
        return Ok(0.0);
    }
    let denom = input.map.level(j) + input.queue_backlogs[i] * input.rate_bps;
    if denom <= 0.0 {
        return Err(AnalysisError::Domain {
            pair: i,
            level: j,
            value: denom,
        });
    }
    Ok(-input.scale(i) / denom)
}

/// Probability that pair `i` is the only one on RE `j`.
pub fn p_bar(input: &CollisionModelInput, i: usize, j: usize) -> f64 {
    let own = input.level_probability(i, j);
    let log_others: f64 = (0..input.n_pairs())
        .filter(|&k| k != i)
        .map(|k| (-input.level_probability(k, j)).ln_1p())
        .sum();
    own * log_others.exp()
}

fn p_bar_matrix(input: &CollisionModelInput) -> Vec<Vec<f64>> {
    let probs = input.level_matrix();
    let n = input.n_pairs();
    let k = input.k2();
    // log(1 - P(A_{l,j})) summed over all pairs, so each p_bar drops its own term
    let log_free: Vec<f64> = (0..k)
        .map(|j| (0..n).map(|l| (-probs[l][j]).ln_1p()).sum())
        .collect();
    (0..n)
        .map(|i| {
            (0..k)
                .map(|j| {
                    let p = probs[i][j];
                    if p >= 1.0 {
                        // the others' product cannot be recovered by subtraction here
                        let rest: f64 = (0..n).filter(|&l| l != i).map(|l| (-probs[l][j]).ln_1p()).sum();
                        rest.exp()
                    } else {
                        p * (log_free[j] - (-p).ln_1p()).exp()
                    }
                })
                .collect()
        })
        .collect()
}

/// `1 - sum_i sum_j p_bar{i,j} prod_{k<j} (1 - sum_{l != i} p_bar{l,k})`.
///
/// Treats REs as independent and ignores that pair `i` itself cannot sit
/// below `j`; returned unclamped so the approximation error stays visible.
pub fn collision_probability_prefix_sum(input: &CollisionModelInput) -> Result<f64, AnalysisError> {
    input.validate()?;
    let pbar = p_bar_matrix(input);
    let n = input.n_pairs();
    let k = input.k2();
    let column: Vec<f64> = (0..k).map(|j| (0..n).map(|l| pbar[l][j]).sum()).collect();
    let mut success = 0.0;
    for i in 0..n {
        let mut log_prefix = 0.0f64;
        for j in 0..k {
            success += pbar[i][j] * log_prefix.exp();
            let others = (column[j] - pbar[i][j]).clamp(0.0, 1.0);
            log_prefix += (-others).ln_1p();
        }
    }
    Ok(1.0 - success)
}

/// Exact overall-collision probability.
///
/// Walks the REs in order keeping the set of pairs already placed; each RE
/// takes either nobody or at least two of the remaining pairs.
pub fn collision_probability(input: &CollisionModelInput) -> Result<f64, AnalysisError> {
    input.validate()?;
    let n = input.n_pairs();
    if n > MAX_EXACT_PAIRS {
        return Err(AnalysisError::Input(format!(
            "exact evaluation supports at most {MAX_EXACT_PAIRS} pairs, got {n}"
        )));
    }
    let probs = input.level_matrix();
    let full = (1usize << n) - 1;
    let mut dp = vec![0.0f64; 1 << n];
    dp[0] = 1.0;
    for j in 0..input.k2() {
        // product of P(A_{i,j}) over each subset, built from the lowest set bit
        let mut weight = vec![1.0f64; 1 << n];
        for mask in 1..=full {
            let low = mask.trailing_zeros() as usize;
            weight[mask] = weight[mask & (mask - 1)] * probs[low][j];
        }
        let mut next = vec![0.0f64; 1 << n];
        for placed in 0..=full {
            let mass = dp[placed];
            if mass == 0.0 {
                continue;
            }
            let free = full & !placed;
            let mut sub = free;
            loop {
                if sub.count_ones() != 1 {
                    next[placed | sub] += mass * weight[sub];
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & free;
            }
        }
        dp = next;
    }
    Ok(dp[full].clamp(0.0, 1.0))
}

/// Simulates `draws` frames and counts overall collisions. Returns the
/// frequency and its binomial standard error.
pub fn mc_collision_oracle<R: Rng + ?Sized>(
    input: &CollisionModelInput,
    draws: u64,
    rng: &mut R,
) -> Result<(f64, f64), AnalysisError> {
    input.validate()?;
    if draws == 0 {
        return Err(AnalysisError::Input("draws must be >= 1".into()));
    }
    let seeds: Vec<u64> = (0..ORACLE_STREAMS).map(|_| rng.random()).collect();
    let collisions: u64 = seeds
        .par_iter()
        .enumerate()
        .map(|(s, &seed)| {
            let share = draws / ORACLE_STREAMS + u64::from((s as u64) < draws % ORACLE_STREAMS);
            let mut stream = ChaCha8Rng::seed_from_u64(seed);
            let mut placements = Vec::with_capacity(input.n_pairs());
            let mut hits = 0u64;
            for _ in 0..share {
                placements.clear();
                for i in 0..input.n_pairs() {
                    let v = input.metric(i, sample_fading(&mut stream).h_squared);
                    placements.push((i, quantize(v, &input.map).1));
                }
                let frame = assemble_frame(&placements).expect("one placement per pair");
                if resolve_frame(&frame).winner.is_none() {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let p = collisions as f64 / draws as f64;
    Ok((p, (p * (1.0 - p) / draws as f64).sqrt()))
}

/// `eps' = (1 - ((1 - eps) / (N K))^(1 / (N + K))) / (2N)`.
pub fn epsilon_prime(eps: f64, n_pairs: usize, k2: usize) -> f64 {
    let (n, k) = (n_pairs as f64, k2 as f64);
    (1.0 - ((1.0 - eps) / (n * k)).powf(1.0 / (n + k))) / (2.0 * n)
}

/// Inputs of the V(epsilon) tuning rule. Rates only need consistent units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningInputs {
    pub eps: f64,
    pub r_th: f64,
    pub rate: f64,
    pub t_p: f64,
    pub p_max_w: f64,
    pub snr_threshold_linear: f64,
    pub noise_w: f64,
    /// Linear loss of the shortest allowed link, so `S N_o L_min` is the
    /// power the best link needs at unit fading.
    pub l_min: f64,
    pub n_pairs: usize,
    pub k2: usize,
}

/// `V(eps) = -R_th R ln(eps') T_p / (P_max ln(eps') + S N_o L_min)`.
pub fn v_for_epsilon(inp: &TuningInputs) -> Result<f64, AnalysisError> {
    if !(inp.eps > 0.0 && inp.eps < 1.0) {
        return Err(AnalysisError::Input(format!("epsilon {} outside (0, 1)", inp.eps)));
    }
    if inp.n_pairs == 0 || inp.k2 == 0 {
        return Err(AnalysisError::Input("N and K2 must be >= 1".into()));
    }
    let eps_p = epsilon_prime(inp.eps, inp.n_pairs, inp.k2);
    if !(eps_p > 0.0 && eps_p < 1.0) {
        return Err(AnalysisError::Regime(format!("eps' = {eps_p} outside (0, 1)")));
    }
    let ln = eps_p.ln();
    let denom = inp.p_max_w * ln + inp.snr_threshold_linear * inp.noise_w * inp.l_min;
    let v = -inp.r_th * inp.rate * ln * inp.t_p / denom;
    if !(denom > 0.0) || !v.is_finite() || v <= 0.0 {
        return Err(AnalysisError::Regime(format!(
            "P_max ln(eps') + S N_o L_min = {denom:e} must be > 0 (best-link power {:e} W vs P_max |ln eps'| = {:e} W)",
            inp.snr_threshold_linear * inp.noise_w * inp.l_min,
            -inp.p_max_w * ln
        )));
    }
    Ok(v)
}

/// Single-rate setting shared by the analysis and its simulation check:
/// one AMC entry `(S, R)`, every queue at `R_th`, indexing levels taken
/// from the mapping bounds at the first slot of a period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleRateRegime {
    pub v_weight: f64,
    pub snr_threshold_linear: f64,
    pub rate_bps: f64,
    pub noise_w: f64,
    pub p_max_w: f64,
    pub r_th: f64,
    pub k2: usize,
}

impl SingleRateRegime {
    pub fn input(&self, path_losses: &[f64]) -> Result<CollisionModelInput, AnalysisError> {
        let table = AmcTable::new(vec![AmcEntry {
            snr_threshold_linear: self.snr_threshold_linear,
            rate_bps: self.rate_bps,
        }])
        .map_err(|e| AnalysisError::Input(e.to_string()))?;
        let params = LyapunovParams::new(self.v_weight);
        let (v_min, v_max) = metric_bounds(&params, self.r_th, self.p_max_w, &table, self.k2);
        let map = build_map(v_min, v_max, self.k2).map_err(|e| AnalysisError::Regime(e.to_string()))?;
        let input = CollisionModelInput {
            v_weight: self.v_weight,
            snr_threshold_linear: self.snr_threshold_linear,
            rate_bps: self.rate_bps,
            noise_w: self.noise_w,
            path_losses: path_losses.to_vec(),
            queue_backlogs: vec![self.r_th; path_losses.len()],
            map,
        };
        input.validate()?;
        Ok(input)
    }

    /// Tuning inputs for the same setting with `l_min` the smallest loss.
    pub fn tuning(&self, eps: f64, t_p: f64, l_min: f64, n_pairs: usize) -> TuningInputs {
        TuningInputs {
            eps,
            r_th: self.r_th,
            rate: self.rate_bps,
            t_p,
            p_max_w: self.p_max_w,
            snr_threshold_linear: self.snr_threshold_linear,
            noise_w: self.noise_w,
            l_min,
            n_pairs,
            k2: self.k2,
        }
    }
}

/// Tuning inputs from a scenario: `tune_*` values for `S`, `R` and `R_th`,
/// power and noise per resource block, and the loss at `d_min_m`.
pub fn tuning_inputs_from_config(cfg: &ScenarioConfig, eps: f64) -> Result<TuningInputs, ConfigError> {
    cfg.validate()?;
    let cap = effective_capacities(cfg).map_err(|e| ConfigError::invalid("n_rb_feedback", e.to_string()))?;
    let rb = cfg.bandwidth_rb as f64;
    let noise_dbm = cfg.noise_density_dbm_hz + 10.0 * (cfg.allocation_bandwidth_hz / rb).log10() + cfg.noise_figure_db;
    Ok(TuningInputs {
        eps,
        r_th: cfg.tune_r_th,
        rate: cfg.tune_rate,
        t_p: cfg.t_p_slots as f64,
        p_max_w: cfg.p_max_w / rb,
        snr_threshold_linear: db_to_linear(cfg.tune_snr_db),
        noise_w: db_to_linear(noise_dbm - 30.0),
        l_min: cfg.path_loss_model().loss_linear(cfg.d_min_m),
        n_pairs: cfg.n_pairs,
        k2: cap.k2,
    })
}
