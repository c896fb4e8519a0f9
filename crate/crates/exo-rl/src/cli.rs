//! Command-line harness: run experiments from JSON configs, verify the
//! structural lemmas on randomized instances, run the ID baseline contrast,
//! and emit reproducible CSV/JSON artifacts.

use std::fs;
use std::path::{Path as FsPath, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_exact_id, IdCoverageReport};
use crate::classifier::SoftmaxHyper;
use crate::core::{derive_episode_seed, Path, PpeConfig};
use crate::env::{
    build_combolock, build_id_counterexample, build_random_near_det, build_tabular,
    EmissionSpec, ExBmdpEnv,
};
use crate::error::{ExoRlError, Result};
use crate::metrics::{decoder_accuracy, RunMetrics};
use crate::oracle::{
    deterministic_cover, endo_occupancy, endogenous_policy, exact_gap, exact_optimal_value,
    exo_occupancy, joint_occupancy, l1_occupancy_gap, open_loop_value, LatentPolicy, RewardScope,
};
use crate::planning::{monte_carlo_policy_value, psdp, vi_plan, PolicyClassKind, PsdpConfig};
use crate::ppe::{
    det_twin_target, elimination_error_counts, recover_decoder, run_ppe, ClassifierSpec,
    RecoveredModel,
};

fn log_enabled() -> bool {
    matches!(
        std::env::var("EXO_RL_LOG").as_deref(),
        Ok(v) if !v.is_empty() && v != "0" && v != "off"
    )
}

fn log_info(msg: &str) {
    if log_enabled() {
        eprintln!("[exo-rl] {msg}");
    }
}

/// Write `contents` to `path` via a temp file and rename, so readers never
/// observe a partial file.
pub fn write_atomic(path: &FsPath, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| ExoRlError::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Configuration schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvConfig {
    Combolock {
        horizon: usize,
        #[serde(default)]
        lock_seed: u64,
        #[serde(default = "default_noise_sigma")]
        noise_sigma: f64,
        #[serde(default = "default_lock_actions")]
        action_count: usize,
        /// Swap the dense emission for the identity one (tabular work).
        #[serde(default)]
        identity: bool,
    },
    Tabular {
        /// Path to an environment document, or the document inline.
        #[serde(default)]
        path: Option<String>,
        #[serde(default)]
        doc: Option<serde_json::Value>,
    },
    IdCounterexample,
}

fn default_noise_sigma() -> f64 {
    0.1
}

fn default_lock_actions() -> usize {
    10
}

impl EnvConfig {
    pub fn build(&self) -> Result<ExBmdpEnv> {
        match self {
            EnvConfig::Combolock {
                horizon,
                lock_seed,
                noise_sigma,
                action_count,
                identity,
            } => {
                let env = build_combolock(*horizon, *lock_seed, *noise_sigma, *action_count)?;
                Ok(if *identity { env.identity_twin() } else { env })
            }
            EnvConfig::Tabular { path, doc } => match (path, doc) {
                (Some(p), None) => build_tabular(&fs::read_to_string(p)?),
                (None, Some(d)) => build_tabular(&d.to_string()),
                _ => Err(ExoRlError::Config(
                    "tabular env needs exactly one of `path` or `doc`".into(),
                )),
            },
            EnvConfig::IdCounterexample => Ok(build_id_counterexample()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierConfig {
    Tabular {
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
    Softmax {
        #[serde(default)]
        hyper: SoftmaxHyper,
    },
    Cheating,
}

fn default_smoothing() -> f64 {
    1.0
}

impl ClassifierConfig {
    fn to_spec(&self) -> ClassifierSpec {
        match self {
            ClassifierConfig::Tabular { smoothing } => ClassifierSpec::Tabular {
                smoothing: *smoothing,
            },
            ClassifierConfig::Softmax { hyper } => ClassifierSpec::Softmax(hyper.clone()),
            ClassifierConfig::Cheating => ClassifierSpec::Cheating,
        }
    }
}

/// PPE knobs exposed in the config file; `horizon` and `seed` are filled in
/// from the environment and the run seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PpeOverrides {
    pub delta: f64,
    pub eta: f64,
    pub n_override: Option<usize>,
    pub elimination_threshold_numerator: f64,
    pub decoder_margin_fraction: f64,
    pub f_class_size_log: f64,
    pub fresh_gap_samples: bool,
}

impl Default for PpeOverrides {
    fn default() -> Self {
        let d = PpeConfig::default();
        PpeOverrides {
            delta: d.delta,
            eta: d.eta,
            n_override: d.n_override,
            elimination_threshold_numerator: d.elimination_threshold_numerator,
            decoder_margin_fraction: d.decoder_margin_fraction,
            f_class_size_log: d.f_class_size_log,
            fresh_gap_samples: d.fresh_gap_samples,
        }
    }
}

impl PpeOverrides {
    pub fn to_ppe_config(&self, horizon: usize, seed: u64) -> PpeConfig {
        PpeConfig {
            horizon,
            delta: self.delta,
            eta: self.eta,
            n_override: self.n_override,
            elimination_threshold_numerator: self.elimination_threshold_numerator,
            decoder_margin_fraction: self.decoder_margin_fraction,
            f_class_size_log: self.f_class_size_log,
            fresh_gap_samples: self.fresh_gap_samples,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlannerConfig {
    Vi,
    Psdp {
        #[serde(default = "default_psdp_n")]
        n_per_level: usize,
        #[serde(default = "default_policy_class")]
        policy_class: PolicyClassKind,
        #[serde(default = "default_eval_episodes")]
        eval_episodes: usize,
    },
}

fn default_psdp_n() -> usize {
    10_000
}

fn default_policy_class() -> PolicyClassKind {
    PolicyClassKind::Tabular
}

fn default_eval_episodes() -> usize {
    1_000
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig::Vi
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub ppe: PpeOverrides,
    #[serde(default)]
    pub planner: PlannerConfig,
    /// Evaluation pairs for decoder accuracy; 0 skips the measurement.
    #[serde(default = "default_decoder_pairs")]
    pub decoder_pairs: usize,
}

fn default_decoder_pairs() -> usize {
    1_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub algo: AlgoConfig,
    #[serde(default)]
    pub output_dir: Option<String>,
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &FsPath) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(ExoRlError::Config("seeds must be nonempty".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Per-seed pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub metrics: RunMetrics,
    pub model: RecoveredModel,
    /// Open-loop plan when the VI planner is used.
    pub plan_actions: Option<Path>,
}

/// Optimal value used as the regret reference, computed exactly on the
/// identity twin (same latent dynamics, tabular emission).
pub fn optimal_value(env: &ExBmdpEnv) -> Result<f64> {
    let twin = env.identity_twin();
    let scope = if twin.reward_full.is_some() {
        RewardScope::Full
    } else {
        RewardScope::Endogenous
    };
    Ok(exact_optimal_value(&twin, scope)?.value)
}

/// Build env once per seed, run PPE, optionally plan and evaluate, measure
/// decoder accuracy. Fully deterministic given (config, seed).
pub fn run_seed(env: &ExBmdpEnv, algo: &AlgoConfig, seed: u64, with_plan: bool) -> Result<SeedOutcome> {
    let cfg = algo.ppe.to_ppe_config(env.horizon(), seed);
    let spec = algo.classifier.to_spec();
    log_info(&format!("seed {seed}: running PPE"));
    let run = run_ppe(env, &cfg, &spec)?;
    let (type1, type2) = elimination_error_counts(&run.levels, env);
    let mut episodes_total = run.episodes_used;

    let (value, plan_actions) = if with_plan {
        match &algo.planner {
            PlannerConfig::Vi => {
                let plan = vi_plan(&run.model)?;
                // Open-loop value is emission-independent: score it exactly
                // on the identity twin.
                let v = open_loop_value(&env.identity_twin(), &plan.actions)?;
                (Some(v), Some(plan.actions))
            }
            PlannerConfig::Psdp {
                n_per_level,
                policy_class,
                eval_episodes,
            } => {
                let covers = run.cover_paths();
                let policy = psdp(
                    env,
                    &covers,
                    &PsdpConfig {
                        n_per_level: *n_per_level,
                        seed,
                    },
                    *policy_class,
                )?;
                episodes_total += n_per_level * env.horizon();
                let v = monte_carlo_policy_value(env, &policy, *eval_episodes, seed)?;
                episodes_total += eval_episodes;
                (Some(v), None)
            }
        }
    } else {
        (None, None)
    };

    let decoder_acc = if algo.decoder_pairs > 0 {
        let level = run.levels.last().ok_or_else(|| {
            ExoRlError::Planning("PPE produced no levels".into())
        })?;
        let decoder = recover_decoder(level, &cfg);
        let acc = decoder_accuracy(
            env,
            &decoder,
            &level.survivor_paths(),
            algo.decoder_pairs,
            derive_episode_seed(seed, 5 << 32, 0),
        )?;
        episodes_total += 2 * algo.decoder_pairs;
        Some(acc)
    } else {
        None
    };

    let regret = match value {
        Some(v) => Some(optimal_value(env)? - v),
        None => None,
    };
    Ok(SeedOutcome {
        metrics: RunMetrics {
            seed,
            horizon: env.horizon(),
            episodes_ppe: run.episodes_used,
            episodes_total,
            cover_sizes: run.model.state_counts.clone(),
            type1_errors: type1,
            type2_errors: type2,
            decoder_accuracy: decoder_acc,
            policy_value: value,
            regret,
        },
        model: run.model,
        plan_actions,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with a stable header; float columns use Rust's shortest round-trip
/// formatting, so identical runs produce identical bytes.
pub fn metrics_csv(rows: &[RunMetrics]) -> String {
    let horizon = rows.first().map(|r| r.horizon).unwrap_or(0);
    let mut header = String::from("seed,H,episodes_ppe,episodes_total");
    for h in 1..=horizon {
        header.push_str(&format!(",cover_{h}"));
    }
    header.push_str(",type1,type2,decoder_accuracy,value,regret");
    let mut out = header;
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}",
            r.seed, r.horizon, r.episodes_ppe, r.episodes_total
        ));
        for c in &r.cover_sizes {
            out.push_str(&format!(",{c}"));
        }
        out.push_str(&format!(
            ",{},{},{},{},{}\n",
            r.type1_errors,
            r.type2_errors,
            fmt_opt(r.decoder_accuracy),
            fmt_opt(r.policy_value),
            fmt_opt(r.regret),
        ));
    }
    out
}

#[derive(Debug, Serialize)]
struct RunDocument<'a> {
    config: &'a ExperimentConfig,
    version: &'static str,
    results: &'a [SeedOutcome],
}

/// Execute every seed of the experiment and write `metrics.csv` and
/// `run.json` into `out_dir`. `workers` bounds the rayon pool used for
/// episode collection; results are identical for any worker count.
pub fn cmd_run(
    config: &ExperimentConfig,
    out_dir: &FsPath,
    workers: Option<usize>,
) -> Result<Vec<SeedOutcome>> {
    config.validate()?;
    let env = config.env.build()?;
    let work = || -> Result<Vec<SeedOutcome>> {
        config
            .seeds
            .iter()
            .map(|&s| run_seed(&env, &config.algo, s, true))
            .collect()
    };
    let outcomes = match workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| ExoRlError::Config(format!("worker pool: {e}")))?
            .install(work),
        None => work(),
    }?;
    let rows: Vec<RunMetrics> = outcomes.iter().map(|o| o.metrics.clone()).collect();
    write_atomic(&out_dir.join("metrics.csv"), &metrics_csv(&rows))?;
    let doc = RunDocument {
        config,
        version: env!("CARGO_PKG_VERSION"),
        results: &outcomes,
    };
    write_atomic(
        &out_dir.join("run.json"),
        &serde_json::to_string_pretty(&doc)?,
    )?;
    log_info(&format!("wrote {}", out_dir.join("metrics.csv").display()));
    Ok(outcomes)
}

// ---------------------------------------------------------------------------
// Lemma verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckOutcome {
    Pass,
    Fail,
    OutOfRegime,
}

const LEMMA_TOL: f64 = 1e-9;

/// Extended path set Υ_h built from the deterministic cover of level h−1.
fn extended_cover(env: &ExBmdpEnv, cover: &[Vec<(usize, Path)>], h: usize) -> Vec<Path> {
    let mut ext = Vec::new();
    for (_, p) in &cover[h - 2] {
        for a in 0..env.action_count() {
            ext.push(p.extend(crate::core::Action(a)));
        }
    }
    ext
}

/// Margin dichotomy: with η ≤ 1/(4SH), exact gaps of same-target pairs stay
/// at or below 1/(4|Υ|) and cross-target pairs at or above 1/|Υ|. Instances
/// outside that regime are reported as such, not failed.
pub fn check_margin_dichotomy(env: &ExBmdpEnv) -> Result<CheckOutcome> {
    let s_max = *env
        .endo
        .states_per_level
        .iter()
        .max()
        .expect("nonempty levels") as f64;
    if env.eta_certificate > 1.0 / (4.0 * s_max * env.horizon() as f64) + LEMMA_TOL {
        return Ok(CheckOutcome::OutOfRegime);
    }
    let cover = deterministic_cover(env);
    for h in 2..=env.horizon() {
        let ext = extended_cover(env, &cover, h);
        let u = ext.len() as f64;
        let targets: Vec<usize> = ext.iter().map(|p| det_twin_target(&env.endo, p)).collect();
        for i in 0..ext.len() {
            for j in i + 1..ext.len() {
                let gap = exact_gap(env, &ext, h, i, j)?;
                let ok = if targets[i] == targets[j] {
                    gap <= 1.0 / (4.0 * u) + LEMMA_TOL
                } else {
                    gap >= 1.0 / u - LEMMA_TOL
                };
                if !ok {
                    return Ok(CheckOutcome::Fail);
                }
            }
        }
    }
    Ok(CheckOutcome::Pass)
}

/// Open-loop path wrapped as a latent policy (state-independent rows).
fn open_loop_policy(env: &ExBmdpEnv, path: &Path) -> LatentPolicy {
    let xi_count = env.exo.state_count();
    (0..env.horizon())
        .map(|hi| {
            let mut row = vec![1.0 / env.action_count() as f64; env.action_count()];
            if hi < path.len() {
                row = vec![0.0; env.action_count()];
                row[path.actions[hi].0] = 1.0;
            }
            (0..env.endo.states_per_level[hi])
                .map(|_| vec![row.clone(); xi_count])
                .collect()
        })
        .collect()
}

/// Factorization: under any open-loop path, the exact joint latent occupancy
/// is the product of the endogenous and exogenous marginals.
pub fn check_factorization(env: &ExBmdpEnv, path: &Path) -> Result<bool> {
    for h in 1..=env.horizon() {
        let joint = joint_occupancy(env, &open_loop_policy(env, path), h)?;
        let endo = endo_occupancy(env, path, h)?;
        let exo = exo_occupancy(env, h)?;
        for (s, row) in joint.iter().enumerate() {
            for (xi, &p) in row.iter().enumerate() {
                if (p - endo.values[s] * exo.values[xi]).abs() > LEMMA_TOL {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Decoupling: any endogenous (state-only) policy keeps the joint occupancy
/// factored, and restricting optimization to endogenous policies loses
/// nothing when rewards are endogenous.
pub fn check_decoupling(env: &ExBmdpEnv, seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4445_4350);
    let choice: Vec<Vec<usize>> = (0..env.horizon())
        .map(|hi| {
            (0..env.endo.states_per_level[hi])
                .map(|_| rng.gen_range(0..env.action_count()))
                .collect()
        })
        .collect();
    let policy = endogenous_policy(env, &choice);
    for h in 1..=env.horizon() {
        let joint = joint_occupancy(env, &policy, h)?;
        let endo: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
        let exo = exo_occupancy(env, h)?;
        for (s, row) in joint.iter().enumerate() {
            for (xi, &p) in row.iter().enumerate() {
                if (p - endo[s] * exo.values[xi]).abs() > LEMMA_TOL {
                    return Ok(false);
                }
            }
        }
    }
    if env.reward_full.is_none() {
        let v_endo = exact_optimal_value(env, RewardScope::Endogenous)?.value;
        let v_full = exact_optimal_value(env, RewardScope::Full)?.value;
        if (v_endo - v_full).abs() > LEMMA_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Environment whose endogenous kernel is the deterministic twin of `env`'s.
pub fn deterministic_twin_env(env: &ExBmdpEnv) -> Result<ExBmdpEnv> {
    let (start, det) = env.endo.deterministic_twin();
    let mut endo = env.endo.clone();
    endo.mu = vec![0.0; endo.states_per_level[0]];
    endo.mu[start] = 1.0;
    for (hi, level) in endo.transitions.iter_mut().enumerate() {
        for (s, per_action) in level.iter_mut().enumerate() {
            for (a, row) in per_action.iter_mut().enumerate() {
                for p in row.iter_mut() {
                    *p = 0.0;
                }
                row[det[hi][s][a]] = 1.0;
            }
        }
    }
    ExBmdpEnv::new(endo, env.exo.clone(), EmissionSpec::Identity)
}

/// Perturbation bound: occupancies of `env` and its deterministic twin stay
/// within η·h in L1, where η is the worst per-row L1 kernel distance.
pub fn check_perturbation(env: &ExBmdpEnv) -> Result<bool> {
    let twin = deterministic_twin_env(env)?;
    let row_l1 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    };
    let mut eta = row_l1(&env.endo.mu, &twin.endo.mu);
    for (la, lb) in env.endo.transitions.iter().zip(&twin.endo.transitions) {
        for (pa, pb) in la.iter().zip(lb) {
            for (ra, rb) in pa.iter().zip(pb) {
                eta = eta.max(row_l1(ra, rb));
            }
        }
    }
    for (_, path) in deterministic_cover(env).last().expect("nonempty cover") {
        for h in 1..=env.horizon() {
            let gap = l1_occupancy_gap(env, &twin, path, h)?;
            if gap > eta * h as f64 + LEMMA_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaInstanceReport {
    pub instance: usize,
    pub seed: u64,
    pub margin: CheckOutcome,
    pub factorization: bool,
    pub decoupling: bool,
    pub perturbation: bool,
}

impl LemmaInstanceReport {
    pub fn all_pass(&self) -> bool {
        self.margin != CheckOutcome::Fail
            && self.factorization
            && self.decoupling
            && self.perturbation
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaReport {
    pub instances: Vec<LemmaInstanceReport>,
}

impl LemmaReport {
    pub fn all_pass(&self) -> bool {
        self.instances.iter().all(|i| i.all_pass())
    }
}

/// Draw a random in-regime instance and run every lemma check on it.
pub fn lemma_instance_report(master_seed: u64, instance: usize) -> Result<LemmaInstanceReport> {
    let seed = derive_episode_seed(master_seed, 6 << 32, instance as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = rng.gen_range(2..=6usize);
    let max_states = rng.gen_range(2..=6usize);
    let action_count = rng.gen_range(2..=4usize);
    let exo_states = rng.gen_range(1..=3usize);
    let eta = rng.gen_range(0.0..=1.0) / (4.0 * max_states as f64 * horizon as f64);
    let env = build_random_near_det(seed, horizon, max_states, action_count, eta, exo_states)?;
    let cover = deterministic_cover(&env);
    let (_, probe) = cover.last().expect("nonempty cover")[0].clone();
    Ok(LemmaInstanceReport {
        instance,
        seed,
        margin: check_margin_dichotomy(&env)?,
        factorization: check_factorization(&env, &probe)?,
        decoupling: check_decoupling(&env, seed)?,
        perturbation: check_perturbation(&env)?,
    })
}

/// Generate `instances` randomized environments, run all lemma checks, and
/// write `lemma_report.json` into `out_dir`.
pub fn cmd_verify_lemmas(instances: usize, seed: u64, out_dir: &FsPath) -> Result<LemmaReport> {
    let reports = (0..instances)
        .map(|i| lemma_instance_report(seed, i))
        .collect::<Result<Vec<_>>>()?;
    let report = LemmaReport { instances: reports };
    write_atomic(
        &out_dir.join("lemma_report.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// ID baseline contrast
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineLevelRow {
    pub h: usize,
    pub reachable: usize,
    pub id_covered: usize,
    pub ppe_covered: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineContrast {
    pub id_report: IdCoverageReport,
    pub levels: Vec<BaselineLevelRow>,
}

/// Run the exact ID baseline and cheating-classifier PPE on the same
/// deterministic environment and report per-level coverage side by side.
pub fn cmd_baseline_id(env_config: &EnvConfig, out_dir: &FsPath) -> Result<BaselineContrast> {
    let env = env_config.build()?;
    let id_report = run_exact_id(&env)?;
    let cfg = PpeConfig {
        horizon: env.horizon(),
        n_override: Some(32),
        ..PpeConfig::default()
    };
    let run = run_ppe(&env, &cfg, &ClassifierSpec::Cheating)?;
    let mut levels = Vec::new();
    for h in 1..=env.horizon() {
        let ppe_covered = if h == 1 {
            1
        } else {
            let mut targets: Vec<usize> = run.levels[h - 2]
                .survivor_paths()
                .iter()
                .map(|p| det_twin_target(&env.endo, p))
                .collect();
            targets.sort_unstable();
            targets.dedup();
            targets.len()
        };
        levels.push(BaselineLevelRow {
            h,
            reachable: id_report.reachable_states[h - 1].len(),
            id_covered: id_report.covered_states[h - 1].len(),
            ppe_covered,
        });
    }
    let contrast = BaselineContrast { id_report, levels };
    write_atomic(
        &out_dir.join("baseline_id.json"),
        &serde_json::to_string_pretty(&contrast)?,
    )?;
    println!("h  reachable  id_covered  ppe_covered");
    for row in &contrast.levels {
        println!(
            "{:<2} {:<10} {:<11} {}",
            row.h, row.reachable, row.id_covered, row.ppe_covered
        );
    }
    Ok(contrast)
}

// ---------------------------------------------------------------------------
// Argument parsing and dispatch
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(name = "exo-rl", about = "Exogenous-block MDP experiment harness")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline (PPE, planning, evaluation) for every seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seed list overriding the config.
        #[arg(long)]
        seeds: Option<String>,
        /// Worker threads for episode collection.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Verify the structural lemmas on randomized instances.
    VerifyLemmas {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Master seed for instance generation.
        #[arg(long, default_value = "0")]
        seeds: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Contrast the exact ID baseline with cheating-classifier PPE.
    BaselineId {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run PPE and the planner, printing value and regret per seed.
    Plan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run PPE and report decoder accuracy per seed.
    DecodeEval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u64>()
                .map_err(|_| ExoRlError::Config(format!("invalid seed `{tok}`")))
        })
        .collect()
}

fn resolve_config(
    path: &FsPath,
    out: &Option<PathBuf>,
    seeds: &Option<String>,
) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::from_path(path)?;
    if let Some(s) = seeds {
        config.seeds = parse_seeds(s)?;
        config.validate()?;
    }
    let out_dir = out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((config, out_dir))
}

fn with_pool<T: Send>(
    workers: Option<usize>,
    work: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    match workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| ExoRlError::Config(format!("worker pool: {e}")))?
            .install(work),
        None => work(),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            workers,
        } => {
            let (config, out_dir) = resolve_config(&config, &out, &seeds)?;
            cmd_run(&config, &out_dir, workers)?;
            Ok(())
        }
        Command::VerifyLemmas {
            instances,
            seeds,
            out,
        } => {
            let seed = *parse_seeds(&seeds)?.first().unwrap_or(&0);
            let out_dir = out.unwrap_or_else(|| PathBuf::from("."));
            let report = cmd_verify_lemmas(instances, seed, &out_dir)?;
            if report.all_pass() {
                println!("all {} instances pass", report.instances.len());
                Ok(())
            } else {
                Err(ExoRlError::Planning("lemma verification failed".into()))
            }
        }
        Command::BaselineId { config, out } => {
            let doc = fs::read_to_string(&config)?;
            let env_config: EnvConfig = serde_json::from_str(&doc)?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from("."));
            cmd_baseline_id(&env_config, &out_dir)?;
            Ok(())
        }
        Command::Plan {
            config,
            out,
            seeds,
            workers,
        } => {
            let (mut config, out_dir) = resolve_config(&config, &out, &seeds)?;
            config.algo.decoder_pairs = 0;
            let env = config.env.build()?;
            let outcomes = with_pool(workers, || {
                config
                    .seeds
                    .iter()
                    .map(|&s| run_seed(&env, &config.algo, s, true))
                    .collect::<Result<Vec<_>>>()
            })?;
            for o in &outcomes {
                println!(
                    "seed {} value {} regret {}",
                    o.metrics.seed,
                    fmt_opt(o.metrics.policy_value),
                    fmt_opt(o.metrics.regret)
                );
            }
            write_atomic(
                &out_dir.join("plan.json"),
                &serde_json::to_string_pretty(&outcomes)?,
            )?;
            Ok(())
        }
        Command::DecodeEval {
            config,
            out,
            seeds,
            workers,
        } => {
            let (config, out_dir) = resolve_config(&config, &out, &seeds)?;
            let env = config.env.build()?;
            let outcomes = with_pool(workers, || {
                config
                    .seeds
                    .iter()
                    .map(|&s| run_seed(&env, &config.algo, s, false))
                    .collect::<Result<Vec<_>>>()
            })?;
            for o in &outcomes {
                println!(
                    "seed {} decoder_accuracy {}",
                    o.metrics.seed,
                    fmt_opt(o.metrics.decoder_accuracy)
                );
            }
            write_atomic(
                &out_dir.join("decode_eval.json"),
                &serde_json::to_string_pretty(&outcomes)?,
            )?;
            Ok(())
        }
    }
}

/// Process entry point: returns the exit code. Config and validation errors
/// exit 2; runtime failures exit 1.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                ExoRlError::Config(_) | ExoRlError::EnvValidation(_) | ExoRlError::Json(_) => 2,
                _ => 1,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lock_config(dir: &FsPath) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{
                "env": {{"kind": "combolock", "horizon": 3, "lock_seed": 1,
                         "action_count": 3, "identity": true}},
                "algo": {{
                    "classifier": {{"kind": "cheating"}},
                    "ppe": {{"n_override": 64}},
                    "planner": {{"kind": "vi"}},
                    "decoder_pairs": 200
                }},
                "output_dir": "{}",
                "seeds": [7, 8]
            }}"#,
            dir.display()
        ))
        .unwrap()
    }

    #[test]
    fn run_writes_metrics_and_run_json() {
        let dir = tempfile::tempdir().unwrap();
        let config = lock_config(dir.path());
        let outcomes = cmd_run(&config, dir.path(), Some(2)).unwrap();
        assert_eq!(outcomes.len(), 2);
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(csv.starts_with("seed,H,episodes_ppe,episodes_total,cover_1,cover_2,cover_3"));
        assert_eq!(csv.lines().count(), 3);
        let run_json = fs::read_to_string(dir.path().join("run.json")).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&run_json).unwrap();
        assert_eq!(doc["results"].as_array().unwrap().len(), 2);
        // Cheating classifier on the deterministic lock plans optimally.
        for o in &outcomes {
            assert!(o.metrics.regret.unwrap() <= 1e-9);
        }
    }

    #[test]
    fn identical_runs_produce_identical_csv_across_worker_counts() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let config = lock_config(dir1.path());
        cmd_run(&config, dir1.path(), Some(1)).unwrap();
        cmd_run(&config, dir2.path(), Some(4)).unwrap();
        let a = fs::read(dir1.path().join("metrics.csv")).unwrap();
        let b = fs::read(dir2.path().join("metrics.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_env_kind_is_a_config_error() {
        let err = ExperimentConfig::from_json(
            r#"{"env": {"kind": "maze"}, "algo": {"classifier": {"kind": "cheating"}},
                "seeds": [1]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("maze") || err.to_string().contains("variant"));
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        assert!(ExperimentConfig::from_json(
            r#"{"env": {"kind": "id-counterexample"},
                "algo": {"classifier": {"kind": "cheating"}}, "seeds": []}"#,
        )
        .is_err());
    }

    #[test]
    fn verify_lemmas_passes_on_small_batch() {
        let dir = tempfile::tempdir().unwrap();
        let report = cmd_verify_lemmas(5, 3, dir.path()).unwrap();
        assert_eq!(report.instances.len(), 5);
        assert!(report.all_pass());
        assert!(dir.path().join("lemma_report.json").exists());
    }

    #[test]
    fn zero_instances_is_trivially_passing() {
        let dir = tempfile::tempdir().unwrap();
        let report = cmd_verify_lemmas(0, 0, dir.path()).unwrap();
        assert!(report.all_pass());
    }

    #[test]
    fn out_of_regime_instance_is_reported_not_failed() {
        let env = build_random_near_det(5, 3, 4, 2, 0.2, 1).unwrap();
        assert_eq!(
            check_margin_dichotomy(&env).unwrap(),
            CheckOutcome::OutOfRegime
        );
    }

    #[test]
    fn baseline_contrast_on_counterexample() {
        let dir = tempfile::tempdir().unwrap();
        let contrast = cmd_baseline_id(&EnvConfig::IdCounterexample, dir.path()).unwrap();
        let last = contrast.levels.last().unwrap();
        assert_eq!(last.reachable, 2);
        assert_eq!(last.id_covered, 1);
        assert_eq!(last.ppe_covered, 2);
    }

    #[test]
    fn seed_list_parsing() {
        assert_eq!(parse_seeds("1, 2,3").unwrap(), vec![1, 2, 3]);
        assert!(parse_seeds("1,x").is_err());
    }
}
