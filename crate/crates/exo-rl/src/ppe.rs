//! Predictive path elimination: level-by-level dataset collection, classifier
//! fitting, pairwise gap estimation, threshold elimination with merge-map
//! bookkeeping, decoder extraction, and recovered-model construction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    cheating_classifier, fit_softmax, fit_tabular, LabeledDataset, PathClassifier, SoftmaxHyper,
};
use crate::core::{default_sample_count, derive_episode_seed, Action, Observation, Path, PpeConfig};
use crate::env::{EndoMdpSpec, ExBmdpEnv};
use crate::error::{ExoRlError, Result};

/// Which classifier realization a PPE run fits at each level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ClassifierSpec {
    Tabular { smoothing: f64 },
    Softmax(SoftmaxHyper),
    /// Exact Bayes predictor from the oracle; tabular emissions only.
    Cheating,
}

/// Everything PPE produced at one level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyCoverLevel {
    pub h: usize,
    /// Υ_h = Ψ_{h−1} ∘ 𝒜 in fixed index order: path (p, a) has idx p·A + a.
    pub extended: Vec<Path>,
    /// Indices into `extended` that survived elimination, ascending.
    pub survivors: Vec<usize>,
    /// Merge classes aligned with `survivors`; each class lists the extended
    /// indices merged into that representative (representative included).
    pub merge_map: Vec<Vec<usize>>,
    /// For every extended index, its surviving representative index.
    pub representative: Vec<usize>,
    pub classifier: PathClassifier,
    /// Estimated gaps Δ̂(i,j) for the full extended set (diagnostic; only
    /// alive pairs were acted upon).
    pub gap_matrix: Vec<Vec<f64>>,
    /// Mean reward observed at step h−1 per extended index.
    pub reward_estimates: Vec<f64>,
    pub episodes_used: usize,
}

impl PolicyCoverLevel {
    pub fn survivor_paths(&self) -> Vec<Path> {
        self.survivors.iter().map(|&i| self.extended[i].clone()).collect()
    }

    /// Position of an extended index's representative within `survivors`.
    pub fn abstract_state_of(&self, idx: usize) -> usize {
        let rep = self.representative[idx];
        self.survivors.iter().position(|&s| s == rep).expect("representative survives")
    }

    /// Partition sanity: classes disjoint, cover Υ_h, representatives are
    /// class minima and survive.
    pub fn check_partition(&self) -> Result<()> {
        let k = self.extended.len();
        let mut seen = vec![false; k];
        for (pos, class) in self.merge_map.iter().enumerate() {
            let rep = self.survivors[pos];
            if class.iter().min() != Some(&rep) {
                return Err(ExoRlError::Config(format!(
                    "class {pos} representative {rep} is not its minimum"
                )));
            }
            for &i in class {
                if seen[i] {
                    return Err(ExoRlError::Config(format!("index {i} in two classes")));
                }
                seen[i] = true;
                if self.representative[i] != rep {
                    return Err(ExoRlError::Config(format!(
                        "index {i} has representative {} but lives in class of {rep}",
                        self.representative[i]
                    )));
                }
            }
        }
        if !seen.iter().all(|&b| b) {
            return Err(ExoRlError::Config("merge map does not cover Υ_h".into()));
        }
        Ok(())
    }
}

/// The recovered deterministic latent model. Level h has one abstract state
/// per surviving path (level 1 has the single root state).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveredModel {
    pub horizon: usize,
    pub action_count: usize,
    /// |Ŝ_h| per level, h = 1..H.
    pub state_counts: Vec<usize>,
    /// `transitions[h-1][ŝ][a]` = abstract successor at level h+1, h = 1..H−1.
    pub transitions: Vec<Vec<Vec<usize>>>,
    /// `rewards[h-1][ŝ][a]` estimated mean reward, h = 1..H.
    pub rewards: Vec<Vec<Vec<f64>>>,
}

/// Full PPE output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpeRun {
    pub levels: Vec<PolicyCoverLevel>,
    pub model: RecoveredModel,
    pub episodes_used: usize,
}

impl PpeRun {
    /// Per-level policy covers: the root path at level 1, survivors after.
    pub fn cover_paths(&self) -> Vec<Vec<Path>> {
        let mut covers = vec![vec![Path::empty()]];
        covers.extend(self.levels.iter().map(|l| l.survivor_paths()));
        covers
    }
}

fn fit_classifier(
    env: &ExBmdpEnv,
    spec: &ClassifierSpec,
    extended: &[Path],
    h: usize,
    data: &LabeledDataset,
    cfg: &PpeConfig,
) -> Result<PathClassifier> {
    match spec {
        ClassifierSpec::Tabular { smoothing } => fit_tabular(data, *smoothing),
        ClassifierSpec::Softmax(hyper) => {
            let mut hyper = hyper.clone();
            hyper.seed = derive_episode_seed(cfg.seed, h as u64, u64::MAX);
            fit_softmax(data, &hyper)
        }
        ClassifierSpec::Cheating => cheating_classifier(env, extended, h),
    }
}

/// Collect `n` labeled episodes for level `h`: label υ ~ Unf(extended), then
/// one episode along υ recording (x_h, idx(υ), r_{h−1}). The `level_key`
/// separates seed streams (training vs fresh gap data vs reward sweep), and
/// results are assembled in episode-index order, so output is independent of
/// worker count.
fn collect_level_dataset(
    env: &ExBmdpEnv,
    extended: &[Path],
    n: usize,
    master_seed: u64,
    level_key: u64,
) -> Result<Vec<(Observation, usize, f64)>> {
    (0..n)
        .into_par_iter()
        .map(|ep| {
            let s = derive_episode_seed(master_seed, level_key, ep as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let label = rng.gen_range(0..extended.len());
            let traj = env.sample_episode(&extended[label], rng.gen::<u64>(), false)?;
            // A path of length k yields k+1 observations (k for full-length
            // paths): the last observation is x reached by the path, and the
            // last reward is the one taken at its final action.
            let obs = traj.observations.last().expect("nonempty").clone();
            let reward = *traj.rewards.last().expect("nonempty path");
            Ok((obs, label, reward))
        })
        .collect()
}

fn estimate_gaps(
    classifier: &PathClassifier,
    data: &[(Observation, usize, f64)],
    k: usize,
) -> Result<Vec<Vec<f64>>> {
    let predictions: Vec<Vec<f64>> = data
        .par_iter()
        .map(|(obs, _, _)| classifier.predict_proba(obs))
        .collect::<Result<_>>()?;
    let inv = 1.0 / data.len() as f64;
    let mut gaps = vec![vec![0.0; k]; k];
    for p in &predictions {
        for i in 0..k {
            for j in i + 1..k {
                gaps[i][j] += (p[i] - p[j]).abs() * inv;
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            gaps[i][j] = gaps[j][i];
        }
    }
    Ok(gaps)
}

/// One PPE level: extend the previous survivors by every action, collect a
/// dataset, fit the classifier, estimate pairwise gaps, and eliminate paths
/// whose gap to a smaller-index alive path is at most (5/8)/|Υ_h|.
pub fn ppe_level(
    env: &ExBmdpEnv,
    prev_survivors: &[Path],
    h: usize,
    cfg: &PpeConfig,
    spec: &ClassifierSpec,
) -> Result<PolicyCoverLevel> {
    cfg.validate()?;
    if h < 2 || h > cfg.horizon {
        return Err(ExoRlError::Config(format!("ppe level {h} outside 2..=H")));
    }
    if prev_survivors.is_empty() {
        return Err(ExoRlError::Config("previous cover is empty".into()));
    }
    let a_count = env.action_count();
    let extended: Vec<Path> = prev_survivors
        .iter()
        .flat_map(|p| (0..a_count).map(move |a| p.extend(Action(a))))
        .collect();
    let k = extended.len();
    let n = match cfg.n_override {
        Some(n) => n,
        None => default_sample_count(
            k,
            cfg.f_class_size_log,
            prev_survivors.len(),
            a_count,
            cfg.horizon,
            cfg.delta,
        )?,
    };

    let data = collect_level_dataset(env, &extended, n, cfg.seed, h as u64)?;
    let mut episodes_used = n;
    let mut reward_sums = vec![(0.0, 0usize); k];
    for (_, label, r) in &data {
        reward_sums[*label].0 += r;
        reward_sums[*label].1 += 1;
    }
    let reward_estimates: Vec<f64> = reward_sums
        .iter()
        .map(|(sum, c)| if *c > 0 { sum / *c as f64 } else { 0.0 })
        .collect();

    let dataset = LabeledDataset {
        examples: data.iter().map(|(o, y, _)| (o.clone(), *y)).collect(),
        class_count: k,
    };
    let classifier = fit_classifier(env, spec, &extended, h, &dataset, cfg)?;

    let gap_data = if cfg.fresh_gap_samples {
        episodes_used += n;
        collect_level_dataset(env, &extended, n, cfg.seed, h as u64 | (1 << 32))?
    } else {
        data
    };
    let gap_matrix = estimate_gaps(&classifier, &gap_data, k)?;

    let threshold = cfg.elimination_threshold_numerator / k as f64;
    let mut alive = vec![true; k];
    let mut representative: Vec<usize> = (0..k).collect();
    let mut classes: Vec<Vec<usize>> = (0..k).map(|i| vec![i]).collect();
    for i in 0..k {
        if !alive[i] {
            continue;
        }
        for j in i + 1..k {
            if !alive[j] {
                continue;
            }
            if gap_matrix[i][j] <= threshold {
                alive[j] = false;
                let absorbed = std::mem::take(&mut classes[j]);
                for &m in &absorbed {
                    representative[m] = i;
                }
                classes[i].extend(absorbed);
            }
        }
    }
    let survivors: Vec<usize> = (0..k).filter(|&i| alive[i]).collect();
    let merge_map: Vec<Vec<usize>> = survivors
        .iter()
        .map(|&i| {
            let mut class = classes[i].clone();
            class.sort_unstable();
            class
        })
        .collect();

    let level = PolicyCoverLevel {
        h,
        extended,
        survivors,
        merge_map,
        representative,
        classifier,
        gap_matrix,
        reward_estimates,
        episodes_used,
    };
    level.check_partition()?;
    Ok(level)
}

/// Run PPE for h = 2..H, then one extra reward sweep over Ψ_H ∘ 𝒜 to fill
/// the final-step reward estimates, and assemble the recovered model.
pub fn run_ppe(env: &ExBmdpEnv, cfg: &PpeConfig, spec: &ClassifierSpec) -> Result<PpeRun> {
    cfg.validate()?;
    if cfg.horizon < 2 {
        return Err(ExoRlError::Config("PPE requires horizon >= 2".into()));
    }
    if cfg.horizon != env.horizon() {
        return Err(ExoRlError::Config(format!(
            "config horizon {} does not match environment horizon {}",
            cfg.horizon,
            env.horizon()
        )));
    }
    let a_count = env.action_count();
    let mut levels: Vec<PolicyCoverLevel> = Vec::new();
    let mut psi: Vec<Path> = vec![Path::empty()];
    let mut episodes_used = 0usize;
    for h in 2..=cfg.horizon {
        let level = ppe_level(env, &psi, h, cfg, spec)
            .map_err(|e| ExoRlError::Config(format!("PPE failed at level {h}: {e}")))?;
        episodes_used += level.episodes_used;
        psi = level.survivor_paths();
        levels.push(level);
    }

    // Final-reward sweep: roll each Ψ_H ∘ a to observe the step-H reward.
    let final_extended: Vec<Path> = psi
        .iter()
        .flat_map(|p| (0..a_count).map(move |a| p.extend(Action(a))))
        .collect();
    let kf = final_extended.len();
    let n_final = match cfg.n_override {
        Some(n) => n,
        None => default_sample_count(
            kf,
            cfg.f_class_size_log,
            psi.len(),
            a_count,
            cfg.horizon,
            cfg.delta,
        )?,
    };
    let sweep: Vec<(Observation, usize, f64)> = collect_level_dataset(
        env,
        &final_extended,
        n_final,
        cfg.seed,
        cfg.horizon as u64 + 1,
    )?;
    episodes_used += n_final;
    // Full-length paths: the step-H reward is the trajectory's last.
    let mut final_sums = vec![(0.0, 0usize); kf];
    for (_, label, r) in &sweep {
        final_sums[*label].0 += r;
        final_sums[*label].1 += 1;
    }
    let final_rewards: Vec<f64> = final_sums
        .iter()
        .map(|(sum, c)| if *c > 0 { sum / *c as f64 } else { 0.0 })
        .collect();

    let model = assemble_model(env, cfg, &levels, &final_rewards)?;
    Ok(PpeRun {
        levels,
        model,
        episodes_used,
    })
}

fn assemble_model(
    env: &ExBmdpEnv,
    cfg: &PpeConfig,
    levels: &[PolicyCoverLevel],
    final_rewards: &[f64],
) -> Result<RecoveredModel> {
    let horizon = cfg.horizon;
    let a_count = env.action_count();
    let mut state_counts = vec![1usize];
    state_counts.extend(levels.iter().map(|l| l.survivors.len()));

    let mut transitions = Vec::with_capacity(horizon - 1);
    let mut rewards = Vec::with_capacity(horizon);
    for (li, level) in levels.iter().enumerate() {
        let prev_count = state_counts[li];
        let mut t_level = vec![vec![0usize; a_count]; prev_count];
        let mut r_level = vec![vec![0.0; a_count]; prev_count];
        for p in 0..prev_count {
            for a in 0..a_count {
                let idx = p * a_count + a;
                t_level[p][a] = level.abstract_state_of(idx);
                r_level[p][a] = level.reward_estimates[idx];
            }
        }
        transitions.push(t_level);
        rewards.push(r_level);
    }
    // Step-H rewards from the sweep.
    let last_count = *state_counts.last().unwrap();
    let mut r_last = vec![vec![0.0; a_count]; last_count];
    for p in 0..last_count {
        for a in 0..a_count {
            r_last[p][a] = final_rewards[p * a_count + a];
        }
    }
    rewards.push(r_last);

    Ok(RecoveredModel {
        horizon,
        action_count: a_count,
        state_counts,
        transitions,
        rewards,
    })
}

/// The learned endogenous state decoder of one level: assign an observation
/// to the smallest path index within `margin` of the classifier's maximum,
/// then map through the merge map to the surviving representative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Decoder {
    pub h: usize,
    pub classifier: PathClassifier,
    pub representative: Vec<usize>,
    pub survivors: Vec<usize>,
    pub margin: f64,
}

impl Decoder {
    /// Abstract state id (position within the survivor list).
    pub fn decode(&self, obs: &Observation) -> Result<usize> {
        let probs = self.classifier.predict_proba(obs)?;
        let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let i = probs
            .iter()
            .position(|&p| p >= max - self.margin)
            .expect("max always qualifies");
        let rep = self.representative[i];
        Ok(self
            .survivors
            .iter()
            .position(|&s| s == rep)
            .expect("representative survives"))
    }
}

pub fn recover_decoder(level: &PolicyCoverLevel, cfg: &PpeConfig) -> Decoder {
    Decoder {
        h: level.h,
        classifier: level.classifier.clone(),
        representative: level.representative.clone(),
        survivors: level.survivors.clone(),
        margin: cfg.decoder_margin_fraction / level.extended.len() as f64,
    }
}

/// The endo state reached by following `path` in the deterministic twin.
pub fn det_twin_target(endo: &EndoMdpSpec, path: &Path) -> usize {
    let (start, det) = endo.deterministic_twin();
    let mut s = start;
    for (hi, a) in path.actions.iter().enumerate() {
        s = det[hi][s][a.0];
    }
    s
}

/// Count elimination errors against the deterministic-twin ground truth:
/// type 1 = pairs merged although their paths reach different endo states,
/// type 2 = pairs separated although their paths reach the same endo state.
/// Summed over all levels and all pairs of Υ_h.
pub fn elimination_error_counts(levels: &[PolicyCoverLevel], env: &ExBmdpEnv) -> (usize, usize) {
    let mut type1 = 0;
    let mut type2 = 0;
    for level in levels {
        let targets: Vec<usize> = level
            .extended
            .iter()
            .map(|p| det_twin_target(&env.endo, p))
            .collect();
        for i in 0..level.extended.len() {
            for j in i + 1..level.extended.len() {
                let merged = level.representative[i] == level.representative[j];
                let same_state = targets[i] == targets[j];
                match (merged, same_state) {
                    (true, false) => type1 += 1,
                    (false, true) => type2 += 1,
                    _ => {}
                }
            }
        }
    }
    (type1, type2)
}
