//! Evaluation metrics: decoder accuracy, recovered-model isomorphism, and
//! the per-run summary record emitted by the experiment harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{derive_episode_seed, Path};
use crate::env::ExBmdpEnv;
use crate::error::{ExoRlError, Result};
use crate::ppe::{Decoder, RecoveredModel};

/// Summary of one experiment run, one row of the metrics table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub horizon: usize,
    /// Episodes consumed by PPE itself (dataset collection and the final
    /// reward sweep).
    pub episodes_ppe: usize,
    /// All environment episodes, including planner fitting, Monte Carlo
    /// evaluation, and decoder-accuracy probes.
    pub episodes_total: usize,
    /// |Ψ_h| per level, h = 1..H.
    pub cover_sizes: Vec<usize>,
    /// Distinct-state pairs that were wrongly merged.
    pub type1_errors: usize,
    /// Same-state pairs that were kept apart.
    pub type2_errors: usize,
    pub decoder_accuracy: Option<f64>,
    pub policy_value: Option<f64>,
    /// Optimal value minus achieved policy value.
    pub regret: Option<f64>,
}

/// Pairwise decoder accuracy at level `decoder.h`: sample `pairs` pairs of
/// observations, each drawn by rolling in with a cover path chosen uniformly,
/// and score agreement of the predicate "decoded ids equal" with the ground
/// truth "latent endo states equal". Uses the recorded latent channel, so it
/// works for dense emissions too.
pub fn decoder_accuracy(
    env: &ExBmdpEnv,
    decoder: &Decoder,
    cover: &[Path],
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    if cover.is_empty() || pairs == 0 {
        return Err(ExoRlError::Config(
            "decoder accuracy needs a nonempty cover and at least one pair".into(),
        ));
    }
    for path in cover {
        if path.len() + 1 != decoder.h {
            return Err(ExoRlError::Config(format!(
                "cover path of length {} does not reach decoder level {}",
                path.len(),
                decoder.h
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4445_4341);
    let mut agree = 0usize;
    for k in 0..pairs {
        let mut sample = |slot: u64| -> Result<(usize, usize)> {
            let path = &cover[rng.gen_range(0..cover.len())];
            let ep_seed = derive_episode_seed(seed, decoder.h as u64, 2 * k as u64 + slot);
            let traj = env.sample_episode(path, ep_seed, true)?;
            let obs = traj.observations.last().expect("nonempty episode");
            let s = *traj
                .latent_endo
                .as_ref()
                .expect("latent recorded")
                .last()
                .expect("nonempty episode");
            Ok((decoder.decode(obs)?, s))
        };
        let (d1, s1) = sample(0)?;
        let (d2, s2) = sample(1)?;
        if (d1 == d2) == (s1 == s2) {
            agree += 1;
        }
    }
    Ok(agree as f64 / pairs as f64)
}

/// Check that a recovered model is isomorphic (up to state relabeling) to the
/// reachable part of the environment's deterministic twin, with matching
/// rewards up to `reward_tol`. Returns `Ok(None)` on success and
/// `Ok(Some((h, abstract_state, action)))` as a witness of the first
/// mismatch. Environments with observation-dependent rewards are refused.
pub fn model_isomorphic(
    model: &RecoveredModel,
    env: &ExBmdpEnv,
    reward_tol: f64,
) -> Result<Option<(usize, usize, usize)>> {
    if env.reward_full.is_some() {
        return Err(ExoRlError::Unsupported(
            "isomorphism check expects endogenous rewards only".into(),
        ));
    }
    if model.horizon != env.horizon() || model.action_count != env.action_count() {
        return Ok(Some((1, 0, 0)));
    }
    let (start, det) = env.endo.deterministic_twin();
    let reachable = env.endo.deterministic_reachable();
    let horizon = model.horizon;
    let a_count = model.action_count;

    // map[h-1][ŝ] = Some(ground state); built forward from level 1.
    let mut map: Vec<Vec<Option<usize>>> = model
        .state_counts
        .iter()
        .map(|&n| vec![None; n])
        .collect();
    if model.state_counts.first() != Some(&1) {
        return Ok(Some((1, 0, 0)));
    }
    map[0][0] = Some(start);
    for h in 1..=horizon {
        if model.state_counts[h - 1] != reachable[h - 1].len() {
            return Ok(Some((h, 0, 0)));
        }
        for shat in 0..model.state_counts[h - 1] {
            let s = match map[h - 1][shat] {
                Some(s) => s,
                // Unmapped despite matching counts → not reachable in the
                // model from its level-1 state, so no bijection commutes.
                None => return Ok(Some((h, shat, 0))),
            };
            for a in 0..a_count {
                let r_true = env.endo.rewards[h - 1][s][a];
                if (model.rewards[h - 1][shat][a] - r_true).abs() > reward_tol {
                    return Ok(Some((h, shat, a)));
                }
                if h == horizon {
                    continue;
                }
                let that = model.transitions[h - 1][shat][a];
                let t_true = det[h - 1][s][a];
                match map[h][that] {
                    Some(existing) if existing != t_true => return Ok(Some((h, shat, a))),
                    Some(_) => {}
                    None => {
                        // Injectivity: t_true must not already be claimed.
                        if map[h].iter().any(|m| *m == Some(t_true)) {
                            return Ok(Some((h, shat, a)));
                        }
                        map[h][that] = Some(t_true);
                    }
                }
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::PpeConfig;
    use crate::env::{build_combolock, build_id_counterexample};
    use crate::ppe::{recover_decoder, run_ppe, ClassifierSpec};

    fn small_lock_ppe() -> (ExBmdpEnv, crate::ppe::PpeRun, PpeConfig) {
        let env = build_combolock(3, 7, 0.1, 3).unwrap().identity_twin();
        let cfg = PpeConfig {
            horizon: 3,
            n_override: Some(64),
            seed: 11,
            ..PpeConfig::default()
        };
        let run = run_ppe(&env, &cfg, &ClassifierSpec::Cheating).unwrap();
        (env, run, cfg)
    }

    #[test]
    fn cheating_decoder_scores_perfect_accuracy() {
        let (env, run, cfg) = small_lock_ppe();
        let level = run.levels.last().unwrap();
        let decoder = recover_decoder(level, &cfg);
        let acc = decoder_accuracy(&env, &decoder, &level.survivor_paths(), 500, 99).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn collapsed_decoder_scores_below_one() {
        let (env, run, cfg) = small_lock_ppe();
        let level = run.levels.last().unwrap();
        let mut decoder = recover_decoder(level, &cfg);
        // Force every observation into the first survivor.
        decoder.margin = 2.0;
        let acc = decoder_accuracy(&env, &decoder, &level.survivor_paths(), 500, 99).unwrap();
        assert!(acc < 1.0, "accuracy {acc}");
    }

    #[test]
    fn accuracy_rejects_mismatched_cover_lengths() {
        let (env, run, cfg) = small_lock_ppe();
        let level = run.levels.last().unwrap();
        let decoder = recover_decoder(level, &cfg);
        assert!(decoder_accuracy(&env, &decoder, &[Path::empty()], 10, 1).is_err());
    }

    #[test]
    fn recovered_lock_model_is_isomorphic() {
        let (env, run, _) = small_lock_ppe();
        assert_eq!(model_isomorphic(&run.model, &env, 0.05).unwrap(), None);
    }

    #[test]
    fn isomorphism_survives_relabeling() {
        let (env, run, _) = small_lock_ppe();
        let mut model = run.model.clone();
        // Swap abstract states 0 and 1 at the last level.
        let last = model.horizon - 1;
        let perm = |s: usize| match s {
            0 => 1,
            1 => 0,
            other => other,
        };
        for row in model.transitions[last - 1].iter_mut() {
            for t in row.iter_mut() {
                *t = perm(*t);
            }
        }
        model.rewards[last].swap(0, 1);
        assert_eq!(model_isomorphic(&model, &env, 0.05).unwrap(), None);
    }

    #[test]
    fn corrupted_transition_yields_witness() {
        let (env, run, _) = small_lock_ppe();
        let mut model = run.model.clone();
        // Redirect every level-1 edge to abstract state 0, which strands the
        // other level-2 states; no relabeling can repair that.
        for t in model.transitions[0][0].iter_mut() {
            *t = 0;
        }
        let witness = model_isomorphic(&model, &env, 0.05).unwrap();
        assert!(witness.is_some());
    }

    #[test]
    fn corrupted_reward_yields_witness_at_offending_entry() {
        let (env, run, _) = small_lock_ppe();
        let mut model = run.model.clone();
        let last = model.horizon - 1;
        model.rewards[last][0][0] += 0.5;
        let witness = model_isomorphic(&model, &env, 0.05).unwrap();
        assert_eq!(witness, Some((model.horizon, 0, 0)));
    }

    #[test]
    fn wrong_state_count_is_rejected() {
        let env = build_id_counterexample();
        let (env_lock, run, _) = small_lock_ppe();
        let _ = env_lock;
        assert!(model_isomorphic(&run.model, &env, 0.05)
            .unwrap()
            .is_some());
    }
}
