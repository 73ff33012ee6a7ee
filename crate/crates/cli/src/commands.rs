use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use d2d_sched::amc::db_to_linear;
use d2d_sched::collision::{
    collision_probability, collision_probability_prefix_sum, epsilon_prime, mc_collision_oracle,
    tuning_inputs_from_config, v_for_epsilon, SingleRateRegime, MAX_EXACT_PAIRS,
};
use d2d_sched::engine::{
    build_network, compare_policies, realization_seed, run_with_observer, write_runs_csv,
    write_summary_csv, TraceWriter, TRACE_HEADER,
};
use d2d_sched::{ConfigError, EngineConfig, Policy, ScenarioConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Cli, Command, Common, SimArgs};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    match &cli.command {
        Command::GenScenario => gen_scenario(&cfg, &cli.common),
        Command::Run(args) => {
            let policy: Policy = args.policy.parse().map_err(|e: String| ConfigError::invalid("policy", e))?;
            simulate(&cfg, &cli.common, &args.sim, vec![policy], &[], false)
        }
        Command::Compare(args) => {
            let policies = if args.policy.is_empty() {
                Policy::ALL.to_vec()
            } else {
                args.policy
                    .iter()
                    .map(|p| p.parse().map_err(|e: String| ConfigError::invalid("policy", e)))
                    .collect::<Result<Vec<Policy>, _>>()?
            };
            let gammas = match &args.gamma_sweep {
                Some(s) => parse_sweep(s)?,
                None => vec![cfg.gamma_th_db],
            };
            simulate(&cfg, &cli.common, &args.sim, policies, &gammas, true)
        }
        Command::Collision(args) => collision(&cfg, &cli.common, args.epsilon, args.draws),
        Command::TuneV(args) => tune_v(&cfg, &cli.common, args.epsilon),
    }
}

fn load_config(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::from_file(path)?,
        None => ScenarioConfig::default(),
    };
    for kv in &common.overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out(cfg: &ScenarioConfig, common: &Common) -> Result<()> {
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    fs::write(common.out.join("effective_config.txt"), cfg.to_kv_string())
        .context("writing effective_config.txt")?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Parses `A:B:STEP` into the inclusive grid `A, A+STEP, ...` up to `B`.
pub fn parse_sweep(s: &str) -> Result<Vec<f64>, ConfigError> {
    let bad = |reason: &str| ConfigError::invalid("gamma-sweep", format!("{s:?}: {reason}"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad("expected numbers A:B:STEP"))?;
    let [a, b, step] = parts[..] else {
        return Err(bad("expected A:B:STEP"));
    };
    if !(step > 0.0) || b < a {
        return Err(bad("need STEP > 0 and B >= A"));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| a + i as f64 * step).collect())
}

fn gen_scenario(cfg: &ScenarioConfig, common: &Common) -> Result<()> {
    prepare_out(cfg, common)?;
    let net = build_network(cfg, realization_seed(cfg.seed, 0))?;
    let mut out = create(&common.out, "pairs.csv")?;
    writeln!(out, "id,distance_m,path_loss_db")?;
    for p in &net.pairs {
        writeln!(out, "{},{},{}", p.id, p.distance_m, p.path_loss_db())?;
    }
    out.flush()?;
    println!("{} pairs, R_th = {} bps", net.len(), net.r_th);
    Ok(())
}

fn engine_config(cfg: &ScenarioConfig, common: &Common, sim: &SimArgs, policies: Vec<Policy>) -> EngineConfig {
    EngineConfig {
        policies,
        slots: sim.slots,
        realizations: sim.realizations,
        paired_fading: !sim.unpaired,
        base_seed: cfg.seed,
        warmup_fraction: sim.warmup,
        jobs: common.jobs,
    }
}

fn simulate(
    cfg: &ScenarioConfig,
    common: &Common,
    sim: &SimArgs,
    policies: Vec<Policy>,
    gammas: &[f64],
    summary: bool,
) -> Result<()> {
    let engine = engine_config(cfg, common, sim, policies);
    engine.validate()?;
    prepare_out(cfg, common)?;
    let cmp = compare_policies(cfg, &engine, gammas)?;
    let mut runs = create(&common.out, "runs.csv")?;
    write_runs_csv(&mut runs, &cmp.runs)?;
    runs.flush()?;
    if summary {
        let mut out = create(&common.out, "summary.csv")?;
        write_summary_csv(&mut out, &cmp.summary)?;
        out.flush()?;
    }
    if sim.trace {
        write_trace(cfg, &engine, gammas, &common.out)?;
    }
    for s in &cmp.summary {
        println!(
            "gamma {:>5} dB  {:<12} P = {:.4e} W  EE = {:.4e} b/J  EC reduction {}",
            s.gamma_th_db,
            s.policy.id(),
            s.avg_power_w.mean,
            s.ee_bits_per_j.mean,
            s.ec_reduction_pct.map(|r| format!("{r:.1}%")).unwrap_or_else(|| "-".into())
        );
    }
    Ok(())
}

/// Re-runs every combination sequentially with a trace observer attached.
fn write_trace(cfg: &ScenarioConfig, engine: &EngineConfig, gammas: &[f64], dir: &Path) -> Result<()> {
    let mut out = create(dir, "trace.csv")?;
    writeln!(out, "{TRACE_HEADER}")?;
    let gammas = if gammas.is_empty() { vec![cfg.gamma_th_db] } else { gammas.to_vec() };
    for gamma in gammas {
        let gcfg = ScenarioConfig { gamma_th_db: gamma, ..cfg.clone() };
        for r in 0..engine.realizations {
            let seed = realization_seed(engine.base_seed, r);
            let net = build_network(&gcfg, seed)?;
            for &policy in &engine.policies {
                let mut tw = TraceWriter {
                    out: &mut out,
                    gamma_th_db: gamma,
                    realization: r,
                    policy,
                    error: None,
                };
                run_with_observer(&gcfg, engine, &net, policy, seed, &mut tw);
                if let Some(e) = tw.error {
                    return Err(e).context("writing trace.csv");
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn collision(cfg: &ScenarioConfig, common: &Common, epsilon: Option<f64>, draws: u64) -> Result<()> {
    let eps = epsilon.unwrap_or(cfg.epsilon_collision);
    prepare_out(cfg, common)?;
    let net = build_network(cfg, realization_seed(cfg.seed, 0))?;
    let snr = db_to_linear(cfg.gamma_th_db);
    let Some(rate) = net.table.rate_at_db(cfg.gamma_th_db) else {
        bail!(ConfigError::invalid("gamma_th_db", "below the lowest AMC threshold"));
    };
    let regime = SingleRateRegime {
        v_weight: cfg.v_weight,
        snr_threshold_linear: snr,
        rate_bps: rate,
        noise_w: net.budget.noise_w,
        p_max_w: net.budget.p_max_w,
        r_th: net.r_th,
        k2: net.capacity.k2,
    };
    let losses: Vec<f64> = net.pairs.iter().map(|p| p.path_loss_linear).collect();
    let input = regime.input(&losses)?;
    let exact = if input.n_pairs() <= MAX_EXACT_PAIRS {
        collision_probability(&input)?.to_string()
    } else {
        String::new()
    };
    let prefix = collision_probability_prefix_sum(&input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(realization_seed(cfg.seed, 0) ^ 0xC011);
    let (mc, stderr) = mc_collision_oracle(&input, draws, &mut rng)?;
    let l_min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let v_eps = v_for_epsilon(&regime.tuning(eps, cfg.t_p_slots as f64, l_min, input.n_pairs()))
        .map(|v| v.to_string())
        .unwrap_or_default();
    let header = "n_pairs,k2,p_collision_exact,p_collision_prefix_sum,p_collision_mc,mc_stderr,epsilon,v_epsilon";
    let row = format!(
        "{},{},{exact},{prefix},{mc},{stderr},{eps},{v_eps}",
        input.n_pairs(),
        input.k2()
    );
    fs::write(common.out.join("collision.csv"), format!("{header}\n{row}\n"))?;
    println!("{header}\n{row}");
    Ok(())
}

fn tune_v(cfg: &ScenarioConfig, common: &Common, epsilon: Option<f64>) -> Result<()> {
    let eps = epsilon.unwrap_or(cfg.epsilon_collision);
    let inputs = tuning_inputs_from_config(cfg, eps)?;
    let v = v_for_epsilon(&inputs)?;
    prepare_out(cfg, common)?;
    let header = "epsilon,epsilon_prime,n_pairs,k2,l_min_db,v";
    let row = format!(
        "{eps},{},{},{},{},{v}",
        epsilon_prime(eps, inputs.n_pairs, inputs.k2),
        inputs.n_pairs,
        inputs.k2,
        10.0 * inputs.l_min.log10()
    );
    fs::write(common.out.join("tune_v.csv"), format!("{header}\n{row}\n"))?;
    println!("{header}\n{row}");
    Ok(())
}
