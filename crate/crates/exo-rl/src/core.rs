//! Foundational domain types: actions, paths, observations, trajectories,
//! run configuration, and deterministic per-episode seeding.

use serde::{Deserialize, Serialize};

use crate::error::{ExoRlError, Result};

/// An action index in `[0, A)` for the owning environment's action count `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action(pub usize);

/// An open-loop policy: a fixed action sequence executed from the start.
///
/// A path of length `h-1` determines the visitation distribution at step `h`.
/// The empty path is the level-1 root.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Path {
    pub actions: Vec<Action>,
}

impl Path {
    pub fn empty() -> Self {
        Path { actions: Vec::new() }
    }

    pub fn from_indices(indices: &[usize]) -> Self {
        Path {
            actions: indices.iter().map(|&a| Action(a)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// One-step extension `self ∘ a`.
    pub fn extend(&self, a: Action) -> Self {
        let mut actions = self.actions.clone();
        actions.push(a);
        Path { actions }
    }
}

/// An observation emitted by an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Observation {
    /// Observation id in `[0, |X|)` for tabular emissions.
    Discrete(usize),
    /// Real-valued feature vector with fixed per-environment dimensionality.
    Dense(Vec<f64>),
}

/// One episode: observation/action/reward triples, plus optional ground-truth
/// latent channels for debugging and evaluation.
///
/// Layout convention: a full episode holds `H` observations, `H` actions and
/// `H` rewards; the final transition past the horizon is not emitted. A
/// partial rollout executing `k < H` actions holds `k + 1` observations so the
/// state reached after the last action is visible.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub observations: Vec<Observation>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub latent_endo: Option<Vec<usize>>,
    pub latent_exo: Option<Vec<usize>>,
}

/// Configuration for a PPE run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpeConfig {
    pub horizon: usize,
    pub delta: f64,
    /// Stochasticity level of the endogenous dynamics.
    pub eta: f64,
    /// When set, overrides the per-level sample count entirely.
    pub n_override: Option<usize>,
    /// Elimination threshold at level h is this numerator divided by |Υ_h|.
    pub elimination_threshold_numerator: f64,
    /// Decoder slack at level h is this fraction divided by |Υ_h|.
    pub decoder_margin_fraction: f64,
    /// Proxy for log|F| in the sample-count formula (parametric classes).
    pub f_class_size_log: f64,
    /// Estimate gaps on a fresh dataset instead of the training set.
    pub fresh_gap_samples: bool,
    pub seed: u64,
}

impl Default for PpeConfig {
    fn default() -> Self {
        PpeConfig {
            horizon: 2,
            delta: 0.05,
            eta: 0.0,
            n_override: None,
            elimination_threshold_numerator: 5.0 / 8.0,
            decoder_margin_fraction: 0.5,
            f_class_size_log: 0.0,
            fresh_gap_samples: false,
            seed: 0,
        }
    }
}

impl PpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(ExoRlError::Config("horizon must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ExoRlError::Config("delta must lie in (0,1)".into()));
        }
        if self.eta < 0.0 {
            return Err(ExoRlError::Config("eta must be >= 0".into()));
        }
        if let Some(n) = self.n_override {
            if n < 1 {
                return Err(ExoRlError::Config("n_override must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// True when `eta` exceeds the 1/(4SH) regime the guarantees assume.
    pub fn outside_theory_regime(&self, state_count: usize) -> bool {
        self.eta > 0.0 && self.eta > 1.0 / (4.0 * state_count as f64 * self.horizon as f64)
    }
}

/// SplitMix64 avalanche step.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic per-episode seed from (master seed, level, episode index).
///
/// Counter-based mixing so parallel collection is order-independent: the seed
/// depends only on the three inputs, never on worker scheduling.
pub fn derive_episode_seed(master_seed: u64, level: u64, episode_index: u64) -> u64 {
    let a = splitmix64(master_seed ^ 0x243f_6a88_85a3_08d3);
    let b = splitmix64(a ^ level);
    splitmix64(b ^ episode_index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Per-level dataset size from the sample-count formula
/// `ceil(16 (|Ψ∘A|)^2 (log|F| + log(|Ψ| A H / δ)))`, clamped to at least 1.
pub fn default_sample_count(
    cover_size_times_a: usize,
    f_class_size_log: f64,
    cover_size: usize,
    action_count: usize,
    horizon: usize,
    delta: f64,
) -> Result<usize> {
    if cover_size_times_a == 0 || cover_size == 0 || action_count == 0 || horizon == 0 {
        return Err(ExoRlError::Config(
            "sample-count inputs must be positive".into(),
        ));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(ExoRlError::Config("delta must lie in (0,1]".into()));
    }
    let ext = cover_size_times_a as f64;
    let log_term =
        f_class_size_log + ((cover_size * action_count * horizon) as f64 / delta).ln();
    let n = 16.0 * ext * ext * log_term;
    if !n.is_finite() || n > u32::MAX as f64 {
        return Err(ExoRlError::SampleCountOverflow(n));
    }
    Ok((n.ceil() as usize).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn seed_derivation_is_deterministic() {
        let s = derive_episode_seed(42, 3, 17);
        assert_eq!(s, derive_episode_seed(42, 3, 17));
    }

    #[test]
    fn seed_derivation_distinguishes_episodes() {
        assert_ne!(derive_episode_seed(7, 2, 0), derive_episode_seed(7, 2, 1));
        assert_ne!(derive_episode_seed(7, 2, 0), derive_episode_seed(7, 3, 0));
        assert_ne!(derive_episode_seed(7, 2, 0), derive_episode_seed(8, 2, 0));
    }

    #[test]
    fn seed_derivation_no_collisions_over_many_triples() {
        // 10^4 random-ish triples, require pairwise distinct outputs.
        let mut seen = HashSet::new();
        let mut x: u64 = 0x1234_5678;
        for _ in 0..10_000 {
            x = splitmix64(x);
            let master = x;
            x = splitmix64(x);
            let level = x % 64;
            x = splitmix64(x);
            let ep = x % 100_000;
            assert!(seen.insert(derive_episode_seed(master, level, ep)));
        }
    }

    #[test]
    fn sample_count_matches_hand_evaluation() {
        // 16 * 2^2 * ln(1*2*2/0.5) = 64 * ln 8 = 133.08... -> 134
        let n = default_sample_count(2, 0.0, 1, 2, 2, 0.5).unwrap();
        assert_eq!(n, 134);
    }

    #[test]
    fn sample_count_clamps_to_one_at_log_boundary() {
        // cover*A*H/δ = 1 gives log term 0; clamp to minimum 1.
        let n = default_sample_count(1, 0.0, 1, 1, 1, 1.0).unwrap();
        assert_eq!(n, 1);
    }

    #[test]
    fn sample_count_overflow_reports_magnitude() {
        let err = default_sample_count(1 << 20, 0.0, 1 << 18, 4, 100, 1e-9).unwrap_err();
        assert!(matches!(err, ExoRlError::SampleCountOverflow(_)));
    }

    #[test]
    fn path_extension_and_equality() {
        let p = Path::from_indices(&[0, 1]);
        let q = p.extend(Action(2));
        assert_eq!(q, Path::from_indices(&[0, 1, 2]));
        assert_ne!(p, q);
        assert!(Path::empty().is_empty());
    }

    proptest! {
        #[test]
        fn seed_derivation_pure(master in any::<u64>(), level in 0u64..64, ep in any::<u64>()) {
            prop_assert_eq!(
                derive_episode_seed(master, level, ep),
                derive_episode_seed(master, level, ep)
            );
        }

        #[test]
        fn sample_count_monotone_in_cover_extension(
            ext in 1usize..200,
            flog in 0.0f64..10.0,
            cover in 1usize..20,
        ) {
            let a = default_sample_count(ext, flog, cover, 3, 5, 0.1).unwrap();
            let b = default_sample_count(ext + 1, flog, cover, 3, 5, 0.1).unwrap();
            prop_assert!(b >= a);
            let c = default_sample_count(ext, flog + 1.0, cover, 3, 5, 0.1).unwrap();
            prop_assert!(c >= a);
        }
    }
}
