//! Planners over PPE's outputs: value iteration on the recovered
//! deterministic model (endogenous rewards) and policy search by dynamic
//! programming with an offline contextual-bandit oracle (general rewards).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::core::{derive_episode_seed, Action, Observation, Path};
use crate::env::ExBmdpEnv;
use crate::error::{ExoRlError, Result};
use crate::ppe::RecoveredModel;

/// A fixed action sequence together with its model value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpenLoopPlan {
    pub actions: Path,
    pub expected_value: f64,
}

fn check_model(model: &RecoveredModel) -> Result<()> {
    let horizon = model.horizon;
    if model.state_counts.len() != horizon
        || model.transitions.len() != horizon - 1
        || model.rewards.len() != horizon
    {
        return Err(ExoRlError::Planning("model tables have wrong level counts".into()));
    }
    for (hi, t_level) in model.transitions.iter().enumerate() {
        if t_level.len() != model.state_counts[hi] {
            return Err(ExoRlError::Planning(format!(
                "transitions at level {} have {} states, expected {}",
                hi + 1,
                t_level.len(),
                model.state_counts[hi]
            )));
        }
        for row in t_level {
            if row.len() != model.action_count
                || row.iter().any(|&s| s >= model.state_counts[hi + 1])
            {
                return Err(ExoRlError::Planning(format!(
                    "transition row at level {} is incomplete or out of range",
                    hi + 1
                )));
            }
        }
    }
    for (hi, r_level) in model.rewards.iter().enumerate() {
        if r_level.len() != model.state_counts[hi]
            || r_level.iter().any(|row| row.len() != model.action_count)
        {
            return Err(ExoRlError::Planning(format!(
                "reward table at level {} is incomplete",
                hi + 1
            )));
        }
    }
    Ok(())
}

/// Backward induction on the recovered deterministic model. The greedy
/// policy from the unique level-1 state is an open-loop sequence; ties break
/// toward the smaller action index.
pub fn vi_plan(model: &RecoveredModel) -> Result<OpenLoopPlan> {
    check_model(model)?;
    let horizon = model.horizon;
    let mut v = vec![0.0; model.state_counts[horizon - 1]];
    let mut choice = vec![Vec::new(); horizon];
    for h in (1..=horizon).rev() {
        let states = model.state_counts[h - 1];
        let mut vh = vec![0.0; states];
        let mut ch = vec![0usize; states];
        for s in 0..states {
            let mut best = f64::NEG_INFINITY;
            for a in 0..model.action_count {
                let mut q = model.rewards[h - 1][s][a];
                if h < horizon {
                    q += v[model.transitions[h - 1][s][a]];
                }
                if q > best {
                    best = q;
                    ch[s] = a;
                }
            }
            vh[s] = best;
        }
        v = vh;
        choice[h - 1] = ch;
    }
    let expected_value = v[0];
    let mut actions = Vec::with_capacity(horizon);
    let mut s = 0usize;
    for h in 1..=horizon {
        let a = choice[h - 1][s];
        actions.push(a);
        if h < horizon {
            s = model.transitions[h - 1][s][a];
        }
    }
    Ok(OpenLoopPlan {
        actions: Path::from_indices(&actions),
        expected_value,
    })
}

/// Brute-force maximum over all A^H open-loop sequences; test oracle for
/// `vi_plan`. Refuses when A^H exceeds `cap`.
pub fn exhaustive_open_loop(model: &RecoveredModel, cap: usize) -> Result<OpenLoopPlan> {
    check_model(model)?;
    let total = (model.action_count as f64).powi(model.horizon as i32);
    if !total.is_finite() || total > cap as f64 {
        return Err(ExoRlError::Planning(format!(
            "A^H = {total} exceeds enumeration cap {cap}"
        )));
    }
    let mut best: Option<OpenLoopPlan> = None;
    let total = total as usize;
    for code in 0..total {
        let mut c = code;
        let mut s = 0usize;
        let mut value = 0.0;
        let mut actions = Vec::with_capacity(model.horizon);
        for h in 1..=model.horizon {
            let a = c % model.action_count;
            c /= model.action_count;
            actions.push(a);
            value += model.rewards[h - 1][s][a];
            if h < model.horizon {
                s = model.transitions[h - 1][s][a];
            }
        }
        if best.as_ref().map_or(true, |b| value > b.expected_value) {
            best = Some(OpenLoopPlan {
                actions: Path::from_indices(&actions),
                expected_value: value,
            });
        }
    }
    Ok(best.expect("at least one sequence"))
}

/// Monte Carlo reward estimates: roll each cover path extended by each
/// action `n_per_pair` times and average the final-step reward.
/// `covers[h-1]` lists the level-h cover paths (level 1 is the root).
/// Returns `R̂[h-1][ŝ][a]`.
pub fn estimate_rewards(
    env: &ExBmdpEnv,
    covers: &[Vec<Path>],
    n_per_pair: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if n_per_pair == 0 {
        return Err(ExoRlError::Planning("n_per_pair must be >= 1".into()));
    }
    let a_count = env.action_count();
    covers
        .iter()
        .enumerate()
        .map(|(hi, level_paths)| {
            level_paths
                .iter()
                .enumerate()
                .map(|(p, path)| {
                    (0..a_count)
                        .map(|a| {
                            let extended = path.extend(Action(a));
                            let key = (hi as u64) << 24 | (p as u64) << 8 | a as u64;
                            let total: f64 = (0..n_per_pair)
                                .into_par_iter()
                                .map(|ep| {
                                    let s = derive_episode_seed(seed, key, ep as u64);
                                    let traj = env.sample_episode(&extended, s, false)?;
                                    Ok(*traj.rewards.last().expect("nonempty path"))
                                })
                                .collect::<Result<Vec<f64>>>()?
                                .iter()
                                .sum();
                            Ok(total / n_per_pair as f64)
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<Vec<f64>>>>()
        })
        .collect()
}

/// One step of a nonstationary policy: argmax over per-action scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum StepPolicy {
    /// Per discrete observation, per-action scores; unseen observations fall
    /// back to action 0.
    TabularArgmax { scores: BTreeMap<usize, Vec<f64>> },
    /// Per-action linear scorers over dense observations (bias appended).
    LinearArgmax {
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
}

fn argmax_smallest(scores: &[f64]) -> usize {
    let mut best = 0usize;
    for (a, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = a;
        }
    }
    best
}

impl StepPolicy {
    pub fn act(&self, obs: &Observation) -> Result<Action> {
        match (self, obs) {
            (StepPolicy::TabularArgmax { scores }, Observation::Discrete(x)) => {
                Ok(Action(scores.get(x).map_or(0, |row| argmax_smallest(row))))
            }
            (StepPolicy::LinearArgmax { weights, bias }, Observation::Dense(v)) => {
                let scores: Vec<f64> = weights
                    .iter()
                    .zip(bias)
                    .map(|(w, b)| b + w.iter().zip(v).map(|(wi, vi)| wi * vi).sum::<f64>())
                    .collect();
                Ok(Action(argmax_smallest(&scores)))
            }
            _ => Err(ExoRlError::Planning(
                "observation kind does not match policy kind".into(),
            )),
        }
    }
}

/// Per-step observation policies for h = 1..H.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonStationaryPolicy {
    pub steps: Vec<StepPolicy>,
}

impl NonStationaryPolicy {
    pub fn act(&self, h: usize, obs: &Observation) -> Result<Action> {
        self.steps
            .get(h - 1)
            .ok_or_else(|| ExoRlError::Planning(format!("no policy for step {h}")))?
            .act(obs)
    }
}

/// Policy class used by the contextual-bandit oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyClassKind {
    /// Tabular argmax over discrete observations.
    Tabular,
    /// Linear per-action scorers over dense observations.
    Linear,
}

/// Offline contextual-bandit optimization over logged tuples
/// (observation, logged action, propensity, reward-to-go): maximizes the
/// importance-weighted empirical value within the policy class.
pub fn cb_optimize(
    data: &[(Observation, Action, f64, f64)],
    action_count: usize,
    kind: PolicyClassKind,
) -> Result<StepPolicy> {
    if data.is_empty() {
        return Err(ExoRlError::Planning("empty contextual-bandit dataset".into()));
    }
    match kind {
        PolicyClassKind::Tabular => {
            let mut scores: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for (obs, a, propensity, q) in data {
                let x = match obs {
                    Observation::Discrete(x) => *x,
                    _ => {
                        return Err(ExoRlError::Planning(
                            "tabular policy class requires discrete observations".into(),
                        ))
                    }
                };
                scores.entry(x).or_insert_with(|| vec![0.0; action_count])[a.0] +=
                    q / propensity;
            }
            Ok(StepPolicy::TabularArgmax { scores })
        }
        PolicyClassKind::Linear => {
            let dim = match &data[0].0 {
                Observation::Dense(v) => v.len(),
                _ => {
                    return Err(ExoRlError::Planning(
                        "linear policy class requires dense observations".into(),
                    ))
                }
            };
            // Per-action least squares on inverse-propensity-weighted targets
            // y^a_n = (q_n / p_n) · 1{a_n = a}, features (x, 1).
            let d = dim + 1;
            let mut weights = Vec::with_capacity(action_count);
            let mut bias = Vec::with_capacity(action_count);
            // Shared Gram matrix X^T X (targets differ per action).
            let mut gram = vec![vec![0.0; d]; d];
            for (obs, _, _, _) in data {
                let v = match obs {
                    Observation::Dense(v) => v,
                    _ => {
                        return Err(ExoRlError::Planning(
                            "inconsistent observation kinds in dataset".into(),
                        ))
                    }
                };
                if v.len() != dim {
                    return Err(ExoRlError::Planning(
                        "inconsistent observation dims in dataset".into(),
                    ));
                }
                for i in 0..d {
                    let xi = if i < dim { v[i] } else { 1.0 };
                    for j in i..d {
                        let xj = if j < dim { v[j] } else { 1.0 };
                        gram[i][j] += xi * xj;
                    }
                }
            }
            for i in 0..d {
                for j in 0..i {
                    gram[i][j] = gram[j][i];
                }
                gram[i][i] += 1e-8; // ridge for numerical stability
            }
            for a in 0..action_count {
                let mut rhs = vec![0.0; d];
                for (obs, la, propensity, q) in data {
                    if la.0 != a {
                        continue;
                    }
                    let v = match obs {
                        Observation::Dense(v) => v,
                        _ => unreachable!(),
                    };
                    let y = q / propensity;
                    for (i, slot) in rhs.iter_mut().enumerate() {
                        *slot += y * if i < dim { v[i] } else { 1.0 };
                    }
                }
                let w = solve_symmetric(&gram, &rhs)?;
                bias.push(w[dim]);
                weights.push(w[..dim].to_vec());
            }
            Ok(StepPolicy::LinearArgmax { weights, bias })
        }
    }
}

/// Gaussian elimination with partial pivoting for the small dense systems of
/// the linear policy class.
fn solve_symmetric(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|row| row.clone()).collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if m[pivot][col].abs() < 1e-14 {
            return Err(ExoRlError::Planning("singular regression system".into()));
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut v = rhs[row];
        for k in row + 1..n {
            v -= m[row][k] * x[k];
        }
        x[row] = v / m[row][row];
    }
    Ok(x)
}

/// PSDP configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsdpConfig {
    pub n_per_level: usize,
    pub seed: u64,
}

/// Policy search by dynamic programming. For h = H..1: roll a uniformly
/// chosen level-h cover path, take a uniform action at step h, follow the
/// partially built policy afterwards, and record the realized return-to-go;
/// then fit the step-h policy with the contextual-bandit oracle.
/// `covers[h-1]` lists the level-h cover paths.
pub fn psdp(
    env: &ExBmdpEnv,
    covers: &[Vec<Path>],
    cfg: &PsdpConfig,
    kind: PolicyClassKind,
) -> Result<NonStationaryPolicy> {
    let horizon = env.horizon();
    if covers.len() != horizon {
        return Err(ExoRlError::Planning(format!(
            "{} covers provided, horizon is {horizon}",
            covers.len()
        )));
    }
    if cfg.n_per_level == 0 {
        return Err(ExoRlError::Planning("n_per_level must be >= 1".into()));
    }
    let a_count = env.action_count();
    let mut steps: Vec<StepPolicy> = Vec::new(); // built back to front
    for h in (1..=horizon).rev() {
        let level_paths = &covers[h - 1];
        if level_paths.is_empty() {
            return Err(ExoRlError::Planning(format!("empty cover at level {h}")));
        }
        let suffix = NonStationaryPolicy {
            steps: steps.clone(),
        };
        let data: Vec<(Observation, Action, f64, f64)> = (0..cfg.n_per_level)
            .into_par_iter()
            .map(|ep| {
                let s = derive_episode_seed(cfg.seed, (3 << 32) | h as u64, ep as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let path = &level_paths[rng.gen_range(0..level_paths.len())];
                let a = Action(rng.gen_range(0..a_count));
                let ep_seed = rng.gen::<u64>();
                let mut failure: Option<ExoRlError> = None;
                let traj = env.sample_episode_with_policy(
                    |step, obs| {
                        if step < h {
                            path.actions[step - 1]
                        } else if step == h {
                            a
                        } else {
                            // suffix holds πₕ₊₁..π_H at positions step-h-1
                            match suffix.steps[step - h - 1].act(obs) {
                                Ok(action) => action,
                                Err(e) => {
                                    failure = Some(e);
                                    Action(0)
                                }
                            }
                        }
                    },
                    ep_seed,
                    false,
                )?;
                if let Some(e) = failure {
                    return Err(e);
                }
                let q: f64 = traj.rewards[h - 1..].iter().sum();
                Ok((traj.observations[h - 1].clone(), a, 1.0 / a_count as f64, q))
            })
            .collect::<Result<_>>()?;
        let step_policy = cb_optimize(&data, a_count, kind)?;
        steps.insert(0, step_policy);
    }
    Ok(NonStationaryPolicy { steps })
}

/// Monte Carlo estimate of a policy's expected return.
pub fn monte_carlo_policy_value(
    env: &ExBmdpEnv,
    policy: &NonStationaryPolicy,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    let total: f64 = (0..episodes)
        .into_par_iter()
        .map(|ep| {
            let s = derive_episode_seed(seed, 4 << 32, ep as u64);
            let mut failure: Option<ExoRlError> = None;
            let traj = env.sample_episode_with_policy(
                |h, obs| match policy.act(h, obs) {
                    Ok(a) => a,
                    Err(e) => {
                        failure = Some(e);
                        Action(0)
                    }
                },
                s,
                false,
            )?;
            if let Some(e) = failure {
                return Err(e);
            }
            Ok(traj.rewards.iter().sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    Ok(total / episodes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_combolock, build_tabular, combolock_good_sequences};
    use crate::ppe::{run_ppe, ClassifierSpec};

    fn random_det_model(seed: u64, horizon: usize, states: usize, actions: usize) -> RecoveredModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RecoveredModel {
            horizon,
            action_count: actions,
            state_counts: vec![1]
                .into_iter()
                .chain((1..horizon).map(|_| rng.gen_range(1..=states)))
                .collect::<Vec<_>>(),
            transitions: Vec::new(),
            rewards: Vec::new(),
        }
        .complete_random(&mut rng)
    }

    impl RecoveredModel {
        fn complete_random(mut self, rng: &mut ChaCha8Rng) -> Self {
            for hi in 0..self.horizon - 1 {
                let next = self.state_counts[hi + 1];
                self.transitions.push(
                    (0..self.state_counts[hi])
                        .map(|_| (0..self.action_count).map(|_| rng.gen_range(0..next)).collect())
                        .collect(),
                );
            }
            for hi in 0..self.horizon {
                self.rewards.push(
                    (0..self.state_counts[hi])
                        .map(|_| (0..self.action_count).map(|_| rng.gen::<f64>()).collect())
                        .collect(),
                );
            }
            self
        }
    }

    #[test]
    fn zero_reward_model_plans_all_zero_actions() {
        let mut model = random_det_model(1, 4, 3, 3);
        for level in model.rewards.iter_mut() {
            for row in level.iter_mut() {
                row.iter_mut().for_each(|r| *r = 0.0);
            }
        }
        let plan = vi_plan(&model).unwrap();
        assert_eq!(plan.expected_value, 0.0);
        assert!(plan.actions.actions.iter().all(|a| a.0 == 0));
    }

    #[test]
    fn vi_matches_exhaustive_enumeration() {
        for seed in 0..20u64 {
            let model = random_det_model(seed, 4, 3, 3);
            let vi = vi_plan(&model).unwrap();
            let brute = exhaustive_open_loop(&model, 100_000).unwrap();
            assert!(
                (vi.expected_value - brute.expected_value).abs() < 1e-12,
                "seed {seed}: {} vs {}",
                vi.expected_value,
                brute.expected_value
            );
        }
    }

    #[test]
    fn vi_recovers_combolock_good_sequence() {
        let env = build_combolock(3, 14, 0.0, 4).unwrap().identity_twin();
        let cfg = crate::core::PpeConfig {
            horizon: 3,
            seed: 5,
            n_override: Some(300),
            ..Default::default()
        };
        let run = run_ppe(&env, &cfg, &ClassifierSpec::Cheating).unwrap();
        let plan = vi_plan(&run.model).unwrap();
        assert!((plan.expected_value - 1.0).abs() < 1e-12);
        let (good_a, _) = combolock_good_sequences(3, 14, 4);
        assert_eq!(plan.actions, Path::from_indices(&good_a));
    }

    #[test]
    fn estimate_rewards_exact_for_deterministic_rewards() {
        let env = build_tabular(
            r#"{
            "H": 2, "A": 2, "endo_states": [1, 2], "mu": [1.0],
            "T": [[[[1.0, 0.0], [0.0, 1.0]]]],
            "R": [[[0.0, 0.0]], [[1.0, 0.0], [0.0, 0.5]]],
            "exo": {"states": 1, "mu_xi": [1.0], "T_xi": [[1.0]]},
            "emission": {"kind": "identity"}
        }"#,
        )
        .unwrap();
        let covers = vec![
            vec![Path::empty()],
            vec![Path::from_indices(&[0]), Path::from_indices(&[1])],
        ];
        let r = estimate_rewards(&env, &covers, 20, 3).unwrap();
        assert_eq!(r[1][0], vec![1.0, 0.0]);
        assert_eq!(r[1][1], vec![0.0, 0.5]);
        assert!(r
            .iter()
            .flatten()
            .flatten()
            .all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn estimate_rewards_bernoulli_concentrates() {
        // Reward is 1 iff the exogenous bit is 1 (probability 1/2) — realized
        // through a full-state reward override.
        let mut env = build_tabular(
            r#"{
            "H": 1, "A": 1, "endo_states": [1], "mu": [1.0],
            "T": [],
            "exo": {"states": 2, "mu_xi": [0.5, 0.5], "T_xi": [[1.0, 0.0], [0.0, 1.0]]},
            "emission": {"kind": "identity"}
        }"#,
        )
        .unwrap();
        env.reward_full = Some(vec![vec![vec![vec![0.0], vec![1.0]]]]);
        let n = 10_000;
        let r = estimate_rewards(&env, &[vec![Path::empty()]], n, 9).unwrap();
        let sigma = (0.25f64 / n as f64).sqrt();
        assert!((r[0][0][0] - 0.5).abs() <= 3.0 * sigma, "{}", r[0][0][0]);
    }

    #[test]
    fn cb_optimize_picks_rewarding_action() {
        let data: Vec<(Observation, Action, f64, f64)> = (0..100)
            .map(|i| {
                let a = i % 2;
                (Observation::Discrete(0), Action(a), 0.5, a as f64)
            })
            .collect();
        let policy = cb_optimize(&data, 2, PolicyClassKind::Tabular).unwrap();
        assert_eq!(policy.act(&Observation::Discrete(0)).unwrap(), Action(1));
        // unseen observation falls back to action 0
        assert_eq!(policy.act(&Observation::Discrete(7)).unwrap(), Action(0));
    }

    #[test]
    fn cb_optimize_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<(Observation, Action, f64, f64)> = (0..500)
            .map(|_| {
                let x = rng.gen_range(0..4);
                let a = rng.gen_range(0..3);
                let q = rng.gen::<f64>();
                (Observation::Discrete(x), Action(a), 1.0 / 3.0, q)
            })
            .collect();
        let scaled: Vec<_> = data
            .iter()
            .map(|(o, a, p, q)| (o.clone(), *a, *p, q * 7.5))
            .collect();
        let p1 = cb_optimize(&data, 3, PolicyClassKind::Tabular).unwrap();
        let p2 = cb_optimize(&scaled, 3, PolicyClassKind::Tabular).unwrap();
        for x in 0..4 {
            let obs = Observation::Discrete(x);
            assert_eq!(p1.act(&obs).unwrap(), p2.act(&obs).unwrap());
        }
    }

    #[test]
    fn cb_optimize_linear_separates_simple_contexts() {
        // Context +1 rewards action 0; context -1 rewards action 1.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<(Observation, Action, f64, f64)> = (0..2000)
            .map(|_| {
                let ctx: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let a = rng.gen_range(0..2);
                let q = if (ctx > 0.0) == (a == 0) { 1.0 } else { 0.0 };
                (Observation::Dense(vec![ctx]), Action(a), 0.5, q)
            })
            .collect();
        let policy = cb_optimize(&data, 2, PolicyClassKind::Linear).unwrap();
        assert_eq!(policy.act(&Observation::Dense(vec![1.0])).unwrap(), Action(0));
        assert_eq!(policy.act(&Observation::Dense(vec![-1.0])).unwrap(), Action(1));
    }

    #[test]
    fn psdp_solves_one_step_bandit() {
        let env = build_tabular(
            r#"{
            "H": 1, "A": 2, "endo_states": [1], "mu": [1.0],
            "T": [],
            "R": [[[0.0, 1.0]]],
            "exo": {"states": 1, "mu_xi": [1.0], "T_xi": [[1.0]]},
            "emission": {"kind": "identity"}
        }"#,
        )
        .unwrap();
        let covers = vec![vec![Path::empty()]];
        let cfg = PsdpConfig {
            n_per_level: 100,
            seed: 2,
        };
        let policy = psdp(&env, &covers, &cfg, PolicyClassKind::Tabular).unwrap();
        assert_eq!(policy.act(1, &Observation::Discrete(0)).unwrap(), Action(1));
        let v = monte_carlo_policy_value(&env, &policy, 200, 3).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn psdp_reaches_optimal_value_on_small_lock() {
        let env = build_combolock(3, 21, 0.0, 3).unwrap().identity_twin();
        let cfg = crate::core::PpeConfig {
            horizon: 3,
            seed: 6,
            n_override: Some(200),
            ..Default::default()
        };
        let run = run_ppe(&env, &cfg, &ClassifierSpec::Cheating).unwrap();
        let covers = run.cover_paths();
        let policy = psdp(
            &env,
            &covers,
            &PsdpConfig {
                n_per_level: 2000,
                seed: 7,
            },
            PolicyClassKind::Tabular,
        )
        .unwrap();
        let v = monte_carlo_policy_value(&env, &policy, 2000, 11).unwrap();
        assert!(v > 0.95, "value {v}");
    }

}
