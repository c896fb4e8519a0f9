//! Multiclass path classifiers: tabular count-based MLE for discrete
//! observations, a linear-softmax model trained by minibatch gradient
//! descent for dense observations, and a ground-truth "cheating" classifier
//! that wraps the exact Bayes predictor for isolating algorithmic
//! correctness from learning error.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{Observation, Path};
use crate::env::{EmissionSpec, ExBmdpEnv};
use crate::error::{ExoRlError, Result};
use crate::oracle::bayes_classifier;

/// Observations labeled with path indices in `[0, class_count)`.
#[derive(Debug, Clone, Default)]
pub struct LabeledDataset {
    pub examples: Vec<(Observation, usize)>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn validate(&self) -> Result<()> {
        if self.examples.is_empty() {
            return Err(ExoRlError::Classifier("empty dataset".into()));
        }
        if self.class_count == 0 {
            return Err(ExoRlError::Classifier("class count must be >= 1".into()));
        }
        if let Some((_, y)) = self.examples.iter().find(|(_, y)| *y >= self.class_count) {
            return Err(ExoRlError::Classifier(format!(
                "label {y} outside [0, {})",
                self.class_count
            )));
        }
        Ok(())
    }
}

/// Hyperparameters for softmax training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SoftmaxHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SoftmaxHyper {
    fn default() -> Self {
        SoftmaxHyper {
            learning_rate: 0.001,
            epochs: 50,
            batch_size: 256,
            patience: 20,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

/// How a cheating classifier maps discrete observations to endo states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ObsDecoder {
    /// Identity emission: s = observation id / xi_count.
    PairIndex { xi_count: usize },
    /// TableDiscrete emission: explicit observation → state map for a level.
    Table { obs_to_state: Vec<Option<usize>> },
}

/// A fitted classifier producing a probability vector over path indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PathClassifier {
    #[serde(rename = "tabular")]
    Tabular {
        class_count: usize,
        smoothing: f64,
        /// observation id → per-class counts
        #[serde(with = "counts_as_pairs")]
        counts: BTreeMap<usize, Vec<f64>>,
    },
    #[serde(rename = "softmax")]
    Softmax {
        class_count: usize,
        dim: usize,
        /// `weights[k]` is the weight row of class k.
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    #[serde(rename = "cheating-ref")]
    CheatingRef {
        class_count: usize,
        decoder: ObsDecoder,
        /// Exact conditional per endo state; `None` marks states unreachable
        /// under the cover (predicted uniform).
        probs_per_state: Vec<Option<Vec<f64>>>,
    },
}

impl PathClassifier {
    pub fn class_count(&self) -> usize {
        match self {
            PathClassifier::Tabular { class_count, .. }
            | PathClassifier::Softmax { class_count, .. }
            | PathClassifier::CheatingRef { class_count, .. } => *class_count,
        }
    }

    /// Probability vector over path indices; nonnegative, sums to 1.
    pub fn predict_proba(&self, obs: &Observation) -> Result<Vec<f64>> {
        match (self, obs) {
            (
                PathClassifier::Tabular {
                    class_count,
                    smoothing,
                    counts,
                },
                Observation::Discrete(x),
            ) => {
                let k = *class_count;
                match counts.get(x) {
                    Some(row) => {
                        let total: f64 = row.iter().sum();
                        let denom = total + k as f64 * smoothing;
                        if denom == 0.0 {
                            Ok(vec![1.0 / k as f64; k])
                        } else {
                            Ok(row.iter().map(|c| (c + smoothing) / denom).collect())
                        }
                    }
                    None => Ok(vec![1.0 / k as f64; k]),
                }
            }
            (
                PathClassifier::Softmax {
                    class_count,
                    dim,
                    weights,
                    bias,
                },
                Observation::Dense(v),
            ) => {
                if v.len() != *dim {
                    return Err(ExoRlError::Classifier(format!(
                        "observation dim {} does not match model dim {dim}",
                        v.len()
                    )));
                }
                Ok(softmax_probs(weights, bias, v, *class_count))
            }
            (
                PathClassifier::CheatingRef {
                    class_count,
                    decoder,
                    probs_per_state,
                },
                Observation::Discrete(x),
            ) => {
                let s = match decoder {
                    ObsDecoder::PairIndex { xi_count } => x / xi_count,
                    ObsDecoder::Table { obs_to_state } => {
                        obs_to_state.get(*x).copied().flatten().ok_or_else(|| {
                            ExoRlError::Classifier(format!(
                                "observation {x} outside the emission support"
                            ))
                        })?
                    }
                };
                match probs_per_state.get(s) {
                    Some(Some(row)) => Ok(row.clone()),
                    _ => Ok(vec![1.0 / *class_count as f64; *class_count]),
                }
            }
            _ => Err(ExoRlError::Classifier(
                "observation kind does not match classifier kind".into(),
            )),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// JSON maps require string keys, and internally tagged enums buffer
/// content in a way that breaks integer-key round trips; store the count
/// table as a list of (observation, counts) pairs instead.
mod counts_as_pairs {
    use super::BTreeMap;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(
        m: &BTreeMap<usize, Vec<f64>>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        m.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<usize, Vec<f64>>, D::Error> {
        Ok(Vec::<(usize, Vec<f64>)>::deserialize(d)?
            .into_iter()
            .collect())
    }
}

fn softmax_probs(weights: &[Vec<f64>], bias: &[f64], x: &[f64], k: usize) -> Vec<f64> {
    let mut logits = vec![0.0; k];
    for (c, logit) in logits.iter_mut().enumerate() {
        *logit = bias[c] + weights[c].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= z;
    }
    probs
}

/// Exact count-based MLE with additive smoothing; unseen observations
/// predict uniform.
pub fn fit_tabular(data: &LabeledDataset, smoothing: f64) -> Result<PathClassifier> {
    data.validate()?;
    if smoothing < 0.0 {
        return Err(ExoRlError::Classifier("smoothing must be >= 0".into()));
    }
    let k = data.class_count;
    let mut counts: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (obs, y) in &data.examples {
        let x = match obs {
            Observation::Discrete(x) => *x,
            Observation::Dense(_) => {
                return Err(ExoRlError::Classifier(
                    "tabular fitting requires discrete observations".into(),
                ))
            }
        };
        counts.entry(x).or_insert_with(|| vec![0.0; k])[*y] += 1.0;
    }
    Ok(PathClassifier::Tabular {
        class_count: k,
        smoothing,
        counts,
    })
}

/// Mean NLL and its analytic gradient over a set of example indices.
fn nll_and_grad(
    weights: &[Vec<f64>],
    bias: &[f64],
    data: &LabeledDataset,
    indices: &[usize],
    grad_w: Option<&mut [Vec<f64>]>,
    grad_b: Option<&mut [f64]>,
) -> f64 {
    let k = data.class_count;
    let inv = 1.0 / indices.len() as f64;
    let mut loss = 0.0;
    let mut gw = grad_w;
    let mut gb = grad_b;
    if let Some(gw) = gw.as_deref_mut() {
        for row in gw.iter_mut() {
            row.iter_mut().for_each(|g| *g = 0.0);
        }
    }
    if let Some(gb) = gb.as_deref_mut() {
        gb.iter_mut().for_each(|g| *g = 0.0);
    }
    for &n in indices {
        let (obs, y) = &data.examples[n];
        let x = match obs {
            Observation::Dense(v) => v,
            _ => unreachable!("validated dense"),
        };
        let probs = softmax_probs(weights, bias, x, k);
        loss -= probs[*y].max(1e-300).ln() * inv;
        if gw.is_some() || gb.is_some() {
            for c in 0..k {
                let err = (probs[c] - if c == *y { 1.0 } else { 0.0 }) * inv;
                if let Some(gw) = gw.as_deref_mut() {
                    for (g, v) in gw[c].iter_mut().zip(x) {
                        *g += err * v;
                    }
                }
                if let Some(gb) = gb.as_deref_mut() {
                    gb[c] += err;
                }
            }
        }
    }
    loss
}

/// Single-layer softmax trained by minibatch Adam with early stopping on a
/// held-out validation split. Deterministic given `hyper.seed`.
pub fn fit_softmax(data: &LabeledDataset, hyper: &SoftmaxHyper) -> Result<PathClassifier> {
    data.validate()?;
    let dim = match &data.examples[0].0 {
        Observation::Dense(v) => v.len(),
        _ => {
            return Err(ExoRlError::Classifier(
                "softmax fitting requires dense observations".into(),
            ))
        }
    };
    for (obs, _) in &data.examples {
        match obs {
            Observation::Dense(v) if v.len() == dim => {}
            Observation::Dense(v) => {
                return Err(ExoRlError::Classifier(format!(
                    "inconsistent observation dims {} vs {dim}",
                    v.len()
                )))
            }
            _ => {
                return Err(ExoRlError::Classifier(
                    "softmax fitting requires dense observations".into(),
                ))
            }
        }
    }
    if !(0.0..1.0).contains(&hyper.validation_fraction) {
        return Err(ExoRlError::Classifier(
            "validation_fraction must lie in [0, 1)".into(),
        ));
    }
    let k = data.class_count;
    let n = data.examples.len();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x534f_4654);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let val_n = ((n as f64) * hyper.validation_fraction).floor() as usize;
    let (val_idx, train_idx) = order.split_at(val_n);
    if train_idx.is_empty() {
        return Err(ExoRlError::Classifier(
            "no training examples remain after the validation split".into(),
        ));
    }

    let mut weights = vec![vec![0.0; dim]; k];
    let mut bias = vec![0.0; k];
    // Adam state.
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m_w = vec![vec![0.0; dim]; k];
    let mut v_w = vec![vec![0.0; dim]; k];
    let mut m_b = vec![0.0; k];
    let mut v_b = vec![0.0; k];
    let mut step = 0usize;

    let mut best = (f64::INFINITY, weights.clone(), bias.clone());
    let mut stall = 0usize;
    let mut grad_w = vec![vec![0.0; dim]; k];
    let mut grad_b = vec![0.0; k];
    let mut train_order = train_idx.to_vec();

    for epoch in 0..hyper.epochs {
        train_order.shuffle(&mut rng);
        for batch in train_order.chunks(hyper.batch_size.max(1)) {
            let loss = nll_and_grad(
                &weights,
                &bias,
                data,
                batch,
                Some(&mut grad_w),
                Some(&mut grad_b),
            );
            if !loss.is_finite() {
                return Err(ExoRlError::Classifier(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            step += 1;
            let corr1 = 1.0 - beta1.powi(step as i32);
            let corr2 = 1.0 - beta2.powi(step as i32);
            for c in 0..k {
                for d in 0..dim {
                    let g = grad_w[c][d];
                    m_w[c][d] = beta1 * m_w[c][d] + (1.0 - beta1) * g;
                    v_w[c][d] = beta2 * v_w[c][d] + (1.0 - beta2) * g * g;
                    weights[c][d] -= hyper.learning_rate * (m_w[c][d] / corr1)
                        / ((v_w[c][d] / corr2).sqrt() + eps);
                }
                let g = grad_b[c];
                m_b[c] = beta1 * m_b[c] + (1.0 - beta1) * g;
                v_b[c] = beta2 * v_b[c] + (1.0 - beta2) * g * g;
                bias[c] -=
                    hyper.learning_rate * (m_b[c] / corr1) / ((v_b[c] / corr2).sqrt() + eps);
            }
        }
        let monitored = if val_idx.is_empty() { train_idx } else { val_idx };
        let val_loss = nll_and_grad(&weights, &bias, data, monitored, None, None);
        if !val_loss.is_finite() {
            return Err(ExoRlError::Classifier(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        if val_loss < best.0 - 1e-12 {
            best = (val_loss, weights.clone(), bias.clone());
            stall = 0;
        } else {
            stall += 1;
            if stall >= hyper.patience {
                break;
            }
        }
    }
    Ok(PathClassifier::Softmax {
        class_count: k,
        dim,
        weights: best.1,
        bias: best.2,
    })
}

/// Ground-truth classifier realizing the exact Bayes predictor for a uniform
/// roll-in over `paths` at level `h`. Requires a tabular emission.
pub fn cheating_classifier(env: &ExBmdpEnv, paths: &[Path], h: usize) -> Result<PathClassifier> {
    let decoder = match &env.emission {
        EmissionSpec::Identity => ObsDecoder::PairIndex {
            xi_count: env.exo.state_count(),
        },
        EmissionSpec::TableDiscrete {
            q,
            observation_count,
        } => {
            let mut obs_to_state = vec![None; *observation_count];
            for (s, per_xi) in q[h - 1].iter().enumerate() {
                for row in per_xi {
                    for (x, &p) in row.iter().enumerate() {
                        if p > 0.0 {
                            obs_to_state[x] = Some(s);
                        }
                    }
                }
            }
            ObsDecoder::Table { obs_to_state }
        }
        EmissionSpec::DenseEncoder { .. } => {
            return Err(ExoRlError::Unsupported(
                "cheating classifier requires a tabular emission; use the identity twin".into(),
            ))
        }
    };
    let bayes = bayes_classifier(env, paths, h)?;
    Ok(PathClassifier::CheatingRef {
        class_count: paths.len(),
        decoder,
        probs_per_state: bayes.probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::Path;
    use crate::env::build_tabular;
    use crate::oracle::observation_distribution;
    use proptest::prelude::*;
    use rand::Rng;

    fn dataset_from_env(
        env: &ExBmdpEnv,
        paths: &[Path],
        h: usize,
        n: usize,
        seed: u64,
    ) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut examples = Vec::with_capacity(n);
        for i in 0..n {
            let label = rng.gen_range(0..paths.len());
            let traj = env
                .sample_episode(&paths[label], seed.wrapping_add(i as u64 * 7919), false)
                .unwrap();
            examples.push((traj.observations[h - 1].clone(), label));
        }
        LabeledDataset {
            examples,
            class_count: paths.len(),
        }
    }

    /// Two-level env with stochastic emissions so observations are varied:
    /// 2 endo states at level 2, 2 exo states, identity emission.
    fn noisy_two_path_env() -> ExBmdpEnv {
        build_tabular(
            r#"{
            "H": 2, "A": 2, "endo_states": [1, 2], "mu": [1.0],
            "T": [[[[1.0, 0.0], [0.0, 1.0]]]],
            "exo": {"states": 2, "mu_xi": [0.5, 0.5], "T_xi": [[0.7, 0.3], [0.3, 0.7]]},
            "emission": {"kind": "identity"}
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn tabular_single_class_mass() {
        let data = LabeledDataset {
            examples: vec![(Observation::Discrete(3), 0); 4],
            class_count: 2,
        };
        let clf = fit_tabular(&data, 0.5).unwrap();
        let p = clf.predict_proba(&Observation::Discrete(3)).unwrap();
        assert!((p[0] - 4.5 / 5.0).abs() < 1e-12);
        assert!((p[1] - 0.5 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn tabular_unseen_observation_is_uniform() {
        let data = LabeledDataset {
            examples: vec![(Observation::Discrete(0), 1)],
            class_count: 3,
        };
        let clf = fit_tabular(&data, 0.5).unwrap();
        let p = clf.predict_proba(&Observation::Discrete(99)).unwrap();
        assert_eq!(p, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn tabular_zero_smoothing_gives_empirical_frequencies() {
        let data = LabeledDataset {
            examples: vec![
                (Observation::Discrete(0), 0),
                (Observation::Discrete(0), 0),
                (Observation::Discrete(0), 1),
            ],
            class_count: 2,
        };
        let clf = fit_tabular(&data, 0.0).unwrap();
        let p = clf.predict_proba(&Observation::Discrete(0)).unwrap();
        assert_eq!(p, vec![2.0 / 3.0, 1.0 / 3.0]);
    }

    /// Weighted total-variation distance between a fitted classifier and the
    /// Bayes predictor, under the exact roll-in observation distribution.
    fn tv_to_bayes(env: &ExBmdpEnv, paths: &[Path], h: usize, clf: &PathClassifier) -> f64 {
        let bayes = cheating_classifier(env, paths, h).unwrap();
        // identity emission: enumerate obs ids s * |Ξ| + ξ
        let xi_count = env.exo.state_count();
        let states = env.endo.states_per_level[h - 1];
        let mut err = 0.0;
        // roll-in obs distribution = average over paths of joint occupancy
        for s in 0..states {
            for xi in 0..xi_count {
                let obs = Observation::Discrete(s * xi_count + xi);
                let mut mass = 0.0;
                for p in paths {
                    let occ = crate::oracle::endo_occupancy(env, p, h).unwrap();
                    let exo = crate::oracle::exo_occupancy(env, h).unwrap();
                    mass += occ.values[s] * exo.values[xi] / paths.len() as f64;
                }
                if mass == 0.0 {
                    continue;
                }
                let fh = clf.predict_proba(&obs).unwrap();
                let fs = bayes.predict_proba(&obs).unwrap();
                err += mass
                    * 0.5
                    * fh.iter()
                        .zip(&fs)
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>();
            }
        }
        err
    }

    #[test]
    fn tabular_mle_error_shrinks_with_sample_size() {
        let env = noisy_two_path_env();
        let paths = [Path::from_indices(&[0]), Path::from_indices(&[1])];
        let small = fit_tabular(&dataset_from_env(&env, &paths, 2, 100, 1), 0.5).unwrap();
        let large = fit_tabular(&dataset_from_env(&env, &paths, 2, 10_000, 2), 0.5).unwrap();
        let e_small = tv_to_bayes(&env, &paths, 2, &small);
        let e_large = tv_to_bayes(&env, &paths, 2, &large);
        assert!(e_large <= e_small + 1e-9, "{e_large} vs {e_small}");
        assert!(e_large < 0.05, "{e_large}");
    }

    #[test]
    fn softmax_separates_opposite_unit_vectors() {
        let mut examples = Vec::new();
        for _ in 0..100 {
            examples.push((Observation::Dense(vec![1.0, 0.0]), 0));
            examples.push((Observation::Dense(vec![-1.0, 0.0]), 1));
        }
        let data = LabeledDataset {
            examples,
            class_count: 2,
        };
        let hyper = SoftmaxHyper {
            learning_rate: 0.05,
            epochs: 50,
            validation_fraction: 0.0,
            ..Default::default()
        };
        let clf = fit_softmax(&data, &hyper).unwrap();
        let correct = data
            .examples
            .iter()
            .filter(|(obs, y)| {
                let p = clf.predict_proba(obs).unwrap();
                let pred = if p[0] >= p[1] { 0 } else { 1 };
                pred == *y
            })
            .count();
        assert_eq!(correct, data.examples.len());
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (k, dim) = (3usize, 4usize);
        let examples: Vec<(Observation, usize)> = (0..20)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                (Observation::Dense(v), rng.gen_range(0..k))
            })
            .collect();
        let data = LabeledDataset {
            examples,
            class_count: k,
        };
        let indices: Vec<usize> = (0..data.examples.len()).collect();
        for _ in 0..10 {
            let weights: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect())
                .collect();
            let bias: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() - 0.5).collect();
            let mut gw = vec![vec![0.0; dim]; k];
            let mut gb = vec![0.0; k];
            nll_and_grad(&weights, &bias, &data, &indices, Some(&mut gw), Some(&mut gb));
            let h = 1e-6;
            for c in 0..k {
                for d in 0..dim {
                    let mut wp = weights.clone();
                    wp[c][d] += h;
                    let lp = nll_and_grad(&wp, &bias, &data, &indices, None, None);
                    let mut wm = weights.clone();
                    wm[c][d] -= h;
                    let lm = nll_and_grad(&wm, &bias, &data, &indices, None, None);
                    let fd = (lp - lm) / (2.0 * h);
                    let rel = (gw[c][d] - fd).abs() / fd.abs().max(1e-3);
                    assert!(rel < 1e-5, "w[{c}][{d}]: analytic {} fd {fd}", gw[c][d]);
                }
                let mut bp = bias.clone();
                bp[c] += h;
                let lp = nll_and_grad(&weights, &bp, &data, &indices, None, None);
                let mut bm = bias.clone();
                bm[c] -= h;
                let lm = nll_and_grad(&weights, &bm, &data, &indices, None, None);
                let fd = (lp - lm) / (2.0 * h);
                let rel = (gb[c] - fd).abs() / fd.abs().max(1e-3);
                assert!(rel < 1e-5, "b[{c}]: analytic {} fd {fd}", gb[c]);
            }
        }
    }

    #[test]
    fn softmax_is_permutation_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = 3usize;
        let examples: Vec<(Observation, usize)> = (0..300)
            .map(|_| {
                let y = rng.gen_range(0..k);
                let mut v = vec![0.0; k];
                v[y] = 1.0;
                for item in v.iter_mut() {
                    *item += 0.1 * (rng.gen::<f64>() - 0.5);
                }
                (Observation::Dense(v), y)
            })
            .collect();
        let perm = [2usize, 0, 1];
        let permuted: Vec<(Observation, usize)> = examples
            .iter()
            .map(|(o, y)| (o.clone(), perm[*y]))
            .collect();
        let hyper = SoftmaxHyper {
            epochs: 10,
            ..Default::default()
        };
        let a = fit_softmax(
            &LabeledDataset {
                examples,
                class_count: k,
            },
            &hyper,
        )
        .unwrap();
        let b = fit_softmax(
            &LabeledDataset {
                examples: permuted,
                class_count: k,
            },
            &hyper,
        )
        .unwrap();
        let query = Observation::Dense(vec![0.9, 0.2, -0.1]);
        let pa = a.predict_proba(&query).unwrap();
        let pb = b.predict_proba(&query).unwrap();
        for (y, &py) in perm.iter().enumerate() {
            assert!((pa[y] - pb[py]).abs() < 1e-6, "class {y}: {} vs {}", pa[y], pb[py]);
        }
    }

    #[test]
    fn cheating_matches_bayes_on_table_emission() {
        let doc = r#"{
            "H": 2, "A": 2, "endo_states": [1, 2], "mu": [1.0],
            "T": [[[[0.9, 0.1], [0.1, 0.9]]]],
            "exo": {"states": 1, "mu_xi": [1.0], "T_xi": [[1.0]]},
            "emission": {"kind": "table", "observation_count": 5,
                "q": [
                    [[[1.0, 0.0, 0.0, 0.0, 0.0]]],
                    [[[0.0, 0.5, 0.5, 0.0, 0.0]], [[0.0, 0.0, 0.0, 0.3, 0.7]]]
                ]}
        }"#;
        let env = build_tabular(doc).unwrap();
        let paths = [Path::from_indices(&[0]), Path::from_indices(&[1])];
        let clf = cheating_classifier(&env, &paths, 2).unwrap();
        let bayes = bayes_classifier(&env, &paths, 2).unwrap();
        let dist = observation_distribution(&env, &paths[0], 2).unwrap();
        for (x, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let p = clf.predict_proba(&Observation::Discrete(x)).unwrap();
            let s = env.phi_star(2, &Observation::Discrete(x)).unwrap();
            assert_eq!(&p, bayes.probs[s].as_ref().unwrap());
        }
    }

    #[test]
    fn two_paths_same_state_predict_half_half() {
        let env = noisy_two_path_env();
        let paths = [Path::from_indices(&[1]), Path::from_indices(&[1])];
        let clf = cheating_classifier(&env, &paths, 2).unwrap();
        // state 1 with either exo value
        for xi in 0..2 {
            let p = clf
                .predict_proba(&Observation::Discrete(1 * 2 + xi))
                .unwrap();
            assert_eq!(p, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn serialization_round_trips() {
        let data = LabeledDataset {
            examples: vec![
                (Observation::Discrete(0), 0),
                (Observation::Discrete(1), 1),
            ],
            class_count: 2,
        };
        let clf = fit_tabular(&data, 0.5).unwrap();
        let json = clf.to_json().unwrap();
        assert!(json.contains("\"kind\":\"tabular\""));
        let back = PathClassifier::from_json(&json).unwrap();
        let p0 = clf.predict_proba(&Observation::Discrete(0)).unwrap();
        let p1 = back.predict_proba(&Observation::Discrete(0)).unwrap();
        assert_eq!(p0, p1);
    }

    proptest! {
        #[test]
        fn predictions_are_normalized(
            labels in proptest::collection::vec(0usize..4, 5..50),
            obs in proptest::collection::vec(0usize..6, 5..50),
            query in 0usize..10,
        ) {
            let n = labels.len().min(obs.len());
            let data = LabeledDataset {
                examples: (0..n).map(|i| (Observation::Discrete(obs[i]), labels[i])).collect(),
                class_count: 4,
            };
            let clf = fit_tabular(&data, 0.5).unwrap();
            let p = clf.predict_proba(&Observation::Discrete(query)).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn softmax_predictions_are_normalized(
            w in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 4),
            b in proptest::collection::vec(-5.0f64..5.0, 4),
            x in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let clf = PathClassifier::Softmax { class_count: 4, dim: 3, weights: w, bias: b };
            let p = clf.predict_proba(&Observation::Dense(x)).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}
