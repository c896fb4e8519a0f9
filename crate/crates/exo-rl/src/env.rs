//! Exogenous block MDP environments: tabular specifications, emission
//! processes, episode sampling, and concrete benchmark builders.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{Action, Observation, Path, Trajectory};
use crate::error::{ExoRlError, Result};

/// Endogenous (action-dependent) layered MDP over integer state ids.
///
/// Level `h` (1-indexed) has `states_per_level[h-1]` states. Transition
/// tables cover levels `1..H-1`; reward tables cover all `H` levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndoMdpSpec {
    pub horizon: usize,
    pub action_count: usize,
    pub states_per_level: Vec<usize>,
    /// Start distribution over level-1 states.
    pub mu: Vec<f64>,
    /// `transitions[h-1][s][a][s']` = T_h(s' | s, a), for h in 1..H-1.
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `rewards[h-1][s][a]` in [0, 1]; all-zero when a document omits R.
    pub rewards: Vec<Vec<Vec<f64>>>,
}

const ROW_TOL: f64 = 1e-12;

fn check_distribution(probs: &[f64], what: &str) -> Result<()> {
    let mut sum = 0.0;
    for &p in probs {
        if !(0.0..=1.0 + ROW_TOL).contains(&p) {
            return Err(ExoRlError::EnvValidation(format!(
                "{what}: probability {p} outside [0,1]"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(ExoRlError::EnvValidation(format!(
            "{what}: row sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

impl EndoMdpSpec {
    pub fn validate(&self) -> Result<()> {
        let h_count = self.horizon;
        if h_count == 0 {
            return Err(ExoRlError::EnvValidation("horizon must be >= 1".into()));
        }
        if self.action_count == 0 {
            return Err(ExoRlError::EnvValidation("action count must be >= 1".into()));
        }
        if self.states_per_level.len() != h_count {
            return Err(ExoRlError::EnvValidation(format!(
                "states_per_level has {} entries, horizon is {h_count}",
                self.states_per_level.len()
            )));
        }
        if self.mu.len() != self.states_per_level[0] {
            return Err(ExoRlError::EnvValidation(format!(
                "mu has {} entries, level 1 has {} states",
                self.mu.len(),
                self.states_per_level[0]
            )));
        }
        check_distribution(&self.mu, "mu")?;
        if self.transitions.len() != h_count - 1 {
            return Err(ExoRlError::EnvValidation(format!(
                "T has {} levels, expected {}",
                self.transitions.len(),
                h_count - 1
            )));
        }
        for (hi, level) in self.transitions.iter().enumerate() {
            let h = hi + 1;
            if level.len() != self.states_per_level[hi] {
                return Err(ExoRlError::EnvValidation(format!(
                    "T[h={h}] has {} states, expected {}",
                    level.len(),
                    self.states_per_level[hi]
                )));
            }
            for (s, per_action) in level.iter().enumerate() {
                if per_action.len() != self.action_count {
                    return Err(ExoRlError::EnvValidation(format!(
                        "T[h={h}][s={s}] has {} actions, expected {}",
                        per_action.len(),
                        self.action_count
                    )));
                }
                for (a, row) in per_action.iter().enumerate() {
                    if row.len() != self.states_per_level[hi + 1] {
                        return Err(ExoRlError::EnvValidation(format!(
                            "T[h={h}][s={s}][a={a}] has {} targets, expected {}",
                            row.len(),
                            self.states_per_level[hi + 1]
                        )));
                    }
                    check_distribution(row, &format!("T[h={h}][s={s}][a={a}]"))?;
                }
            }
        }
        if self.rewards.len() != h_count {
            return Err(ExoRlError::EnvValidation(format!(
                "R has {} levels, expected {h_count}",
                self.rewards.len()
            )));
        }
        for (hi, level) in self.rewards.iter().enumerate() {
            let h = hi + 1;
            if level.len() != self.states_per_level[hi] {
                return Err(ExoRlError::EnvValidation(format!(
                    "R[h={h}] has {} states, expected {}",
                    level.len(),
                    self.states_per_level[hi]
                )));
            }
            for (s, row) in level.iter().enumerate() {
                if row.len() != self.action_count {
                    return Err(ExoRlError::EnvValidation(format!(
                        "R[h={h}][s={s}] has {} actions, expected {}",
                        row.len(),
                        self.action_count
                    )));
                }
                for (a, &r) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&r) {
                        return Err(ExoRlError::EnvValidation(format!(
                            "R[h={h}][s={s}][a={a}] = {r} outside [0,1]"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Near-determinism certificate: max over rows (including mu) of
    /// `1 - max_{s'} T(s'|s,a)`.
    pub fn eta_certificate(&self) -> f64 {
        let row_eta = |row: &[f64]| 1.0 - row.iter().cloned().fold(0.0_f64, f64::max);
        let mut eta = row_eta(&self.mu);
        for level in &self.transitions {
            for per_action in level {
                for row in per_action {
                    eta = eta.max(row_eta(row));
                }
            }
        }
        eta.max(0.0)
    }

    /// Deterministic twin: argmax start state and argmax transition targets,
    /// `det_transitions[h-1][s][a] = s'`. Ties break to the smaller id.
    pub fn deterministic_twin(&self) -> (usize, Vec<Vec<Vec<usize>>>) {
        let argmax = |row: &[f64]| {
            row.iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |best, (i, &p)| {
                    if p > best.1 {
                        (i, p)
                    } else {
                        best
                    }
                })
                .0
        };
        let start = argmax(&self.mu);
        let det = self
            .transitions
            .iter()
            .map(|level| {
                level
                    .iter()
                    .map(|per_action| per_action.iter().map(|row| argmax(row)).collect())
                    .collect()
            })
            .collect();
        (start, det)
    }

    /// States of each level reachable in the deterministic twin, ascending.
    pub fn deterministic_reachable(&self) -> Vec<Vec<usize>> {
        let (start, det) = self.deterministic_twin();
        let mut levels = vec![vec![start]];
        for hi in 0..self.horizon - 1 {
            let mut next: Vec<usize> = Vec::new();
            for &s in &levels[hi] {
                for a in 0..self.action_count {
                    let t = det[hi][s][a];
                    if !next.contains(&t) {
                        next.push(t);
                    }
                }
            }
            next.sort_unstable();
            levels.push(next);
        }
        levels
    }
}

/// Exogenous chain: action-independent by construction (no action argument).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ExoChainSpec {
    Tabular { mu_xi: Vec<f64>, t_xi: Vec<Vec<f64>> },
    /// Independent bit vector, uniform start, each bit flipping with
    /// probability `flip_p` per step.
    Bits { bits: usize, flip_p: f64 },
}

/// Cap on exogenous bit counts that still admit exact enumeration.
pub const MAX_ENUMERABLE_BITS: usize = 20;

impl ExoChainSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ExoChainSpec::Tabular { mu_xi, t_xi } => {
                if mu_xi.is_empty() {
                    return Err(ExoRlError::EnvValidation("exo mu_xi is empty".into()));
                }
                check_distribution(mu_xi, "exo mu_xi")?;
                if t_xi.len() != mu_xi.len() {
                    return Err(ExoRlError::EnvValidation(format!(
                        "T_xi has {} rows, expected {}",
                        t_xi.len(),
                        mu_xi.len()
                    )));
                }
                for (xi, row) in t_xi.iter().enumerate() {
                    if row.len() != mu_xi.len() {
                        return Err(ExoRlError::EnvValidation(format!(
                            "T_xi[xi={xi}] has {} targets, expected {}",
                            row.len(),
                            mu_xi.len()
                        )));
                    }
                    check_distribution(row, &format!("T_xi[xi={xi}]"))?;
                }
                Ok(())
            }
            ExoChainSpec::Bits { bits, flip_p } => {
                if *bits == 0 || *bits > MAX_ENUMERABLE_BITS {
                    return Err(ExoRlError::EnvValidation(format!(
                        "exo bit count {bits} outside 1..={MAX_ENUMERABLE_BITS}"
                    )));
                }
                if !(0.0..=1.0).contains(flip_p) {
                    return Err(ExoRlError::EnvValidation(format!(
                        "flip_p {flip_p} outside [0,1]"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn state_count(&self) -> usize {
        match self {
            ExoChainSpec::Tabular { mu_xi, .. } => mu_xi.len(),
            ExoChainSpec::Bits { bits, .. } => 1 << bits,
        }
    }

    /// Exact start distribution over enumerated exogenous states.
    pub fn marginal_mu(&self) -> Vec<f64> {
        match self {
            ExoChainSpec::Tabular { mu_xi, .. } => mu_xi.clone(),
            ExoChainSpec::Bits { bits, .. } => {
                vec![1.0 / (1usize << bits) as f64; 1 << bits]
            }
        }
    }

    /// Exact transition probability between enumerated exogenous states.
    pub fn transition_prob(&self, from: usize, to: usize) -> f64 {
        match self {
            ExoChainSpec::Tabular { t_xi, .. } => t_xi[from][to],
            ExoChainSpec::Bits { bits, flip_p } => {
                let diff = (from ^ to).count_ones() as usize;
                flip_p.powi(diff as i32) * (1.0 - flip_p).powi((*bits - diff) as i32)
            }
        }
    }

    fn sample_start(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            ExoChainSpec::Tabular { mu_xi, .. } => sample_index(mu_xi, rng),
            ExoChainSpec::Bits { bits, .. } => rng.gen_range(0..(1usize << bits)),
        }
    }

    fn sample_step(&self, xi: usize, rng: &mut ChaCha8Rng) -> usize {
        match self {
            ExoChainSpec::Tabular { t_xi, .. } => sample_index(&t_xi[xi], rng),
            ExoChainSpec::Bits { bits, flip_p } => {
                let mut next = xi;
                for b in 0..*bits {
                    if rng.gen::<f64>() < *flip_p {
                        next ^= 1 << b;
                    }
                }
                next
            }
        }
    }
}

/// Emission process mapping latent state (s, ξ) to observations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EmissionSpec {
    /// Observation id = s · |Ξ| + ξ with level-local state ids.
    Identity,
    /// `q[h-1][s][xi]` = stochastic row over observation ids, with supports
    /// disjoint across distinct latent states.
    TableDiscrete {
        q: Vec<Vec<Vec<Vec<f64>>>>,
        observation_count: usize,
    },
    /// One-hot(global endo state) ∥ exogenous bits, per-dimension Gaussian
    /// noise, zero-padded to a power of two, then a Sylvester Hadamard
    /// multiply (fast Walsh-Hadamard transform).
    DenseEncoder {
        noise_sigma: f64,
        state_dim: usize,
        bit_count: usize,
        padded_dim: usize,
    },
}

/// In-place unnormalized fast Walsh-Hadamard transform; `v.len()` must be a
/// power of two. Applying it twice multiplies the input by `v.len()`.
pub fn fwht(v: &mut [f64]) {
    let n = v.len();
    debug_assert!(n.is_power_of_two());
    let mut len = 1;
    while len < n {
        let mut i = 0;
        while i < n {
            for j in i..i + len {
                let a = v[j];
                let b = v[j + len];
                v[j] = a + b;
                v[j + len] = a - b;
            }
            i += len * 2;
        }
        len *= 2;
    }
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A complete exogenous block MDP: endogenous dynamics, exogenous chain,
/// emission process, plus the computed near-determinism certificate.
///
/// Immutable after construction; all sampling randomness lives in per-call
/// RNGs, so environments are freely shareable across threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExBmdpEnv {
    pub endo: EndoMdpSpec,
    pub exo: ExoChainSpec,
    pub emission: EmissionSpec,
    pub eta_certificate: f64,
    /// Optional full-state reward override `[h-1][s][xi][a]`; when present it
    /// replaces the endogenous reward table (used to study exogenous-reward
    /// behaviour; not part of the serialized document schema).
    pub reward_full: Option<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl ExBmdpEnv {
    pub fn new(endo: EndoMdpSpec, exo: ExoChainSpec, emission: EmissionSpec) -> Result<Self> {
        endo.validate()?;
        exo.validate()?;
        let env = ExBmdpEnv {
            eta_certificate: endo.eta_certificate(),
            endo,
            exo,
            emission,
            reward_full: None,
        };
        env.validate_emission()?;
        Ok(env)
    }

    fn validate_emission(&self) -> Result<()> {
        match &self.emission {
            EmissionSpec::Identity => Ok(()),
            EmissionSpec::TableDiscrete {
                q,
                observation_count,
            } => {
                let xi_count = self.exo.state_count();
                if q.len() != self.endo.horizon {
                    return Err(ExoRlError::EnvValidation(format!(
                        "emission q has {} levels, expected {}",
                        q.len(),
                        self.endo.horizon
                    )));
                }
                // Block property: every observation id maps to at most one
                // latent (s, ξ) pair across all levels.
                let mut owner: Vec<Option<(usize, usize)>> = vec![None; *observation_count];
                for (hi, level) in q.iter().enumerate() {
                    let h = hi + 1;
                    if level.len() != self.endo.states_per_level[hi] {
                        return Err(ExoRlError::EnvValidation(format!(
                            "emission q[h={h}] has {} states, expected {}",
                            level.len(),
                            self.endo.states_per_level[hi]
                        )));
                    }
                    for (s, per_xi) in level.iter().enumerate() {
                        if per_xi.len() != xi_count {
                            return Err(ExoRlError::EnvValidation(format!(
                                "emission q[h={h}][s={s}] has {} exo entries, expected {xi_count}",
                                per_xi.len()
                            )));
                        }
                        for (xi, row) in per_xi.iter().enumerate() {
                            if row.len() != *observation_count {
                                return Err(ExoRlError::EnvValidation(format!(
                                    "emission q[h={h}][s={s}][xi={xi}] has {} observations, expected {observation_count}",
                                    row.len()
                                )));
                            }
                            check_distribution(row, &format!("emission q[h={h}][s={s}][xi={xi}]"))?;
                            for (x, &p) in row.iter().enumerate() {
                                if p > 0.0 {
                                    match owner[x] {
                                        None => owner[x] = Some((s, xi)),
                                        Some(prev) if prev == (s, xi) => {}
                                        Some((ps, pxi)) => {
                                            return Err(ExoRlError::EnvValidation(format!(
                                                "emission supports overlap: observation {x} emitted by both (s={ps}, xi={pxi}) and (s={s}, xi={xi}) at h={h}"
                                            )));
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Ok(())
            }
            EmissionSpec::DenseEncoder {
                noise_sigma,
                state_dim,
                bit_count,
                padded_dim,
            } => {
                if *noise_sigma < 0.0 {
                    return Err(ExoRlError::EnvValidation("noise_sigma must be >= 0".into()));
                }
                let total: usize = self.endo.states_per_level.iter().sum();
                if *state_dim != total {
                    return Err(ExoRlError::EnvValidation(format!(
                        "dense state_dim {state_dim} does not match total state count {total}"
                    )));
                }
                match &self.exo {
                    ExoChainSpec::Bits { bits, .. } if *bits == *bit_count => {}
                    _ => {
                        return Err(ExoRlError::EnvValidation(
                            "dense emission requires a bit-vector exogenous chain matching bit_count".into(),
                        ))
                    }
                }
                if !padded_dim.is_power_of_two() || *padded_dim < state_dim + bit_count {
                    return Err(ExoRlError::EnvValidation(format!(
                        "padded_dim {padded_dim} must be a power of two >= {}",
                        state_dim + bit_count
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn horizon(&self) -> usize {
        self.endo.horizon
    }

    pub fn action_count(&self) -> usize {
        self.endo.action_count
    }

    pub fn is_tabular_emission(&self) -> bool {
        !matches!(self.emission, EmissionSpec::DenseEncoder { .. })
    }

    /// Global index of level-local endo state `s` at level `h` (1-indexed).
    pub fn global_state_index(&self, h: usize, s: usize) -> usize {
        self.endo.states_per_level[..h - 1].iter().sum::<usize>() + s
    }

    /// (level, local id) of a global endo state index.
    pub fn level_of_global(&self, g: usize) -> Option<(usize, usize)> {
        let mut offset = 0;
        for (hi, &n) in self.endo.states_per_level.iter().enumerate() {
            if g < offset + n {
                return Some((hi + 1, g - offset));
            }
            offset += n;
        }
        None
    }

    pub fn reward(&self, h: usize, s: usize, xi: usize, a: Action) -> f64 {
        match &self.reward_full {
            Some(table) => table[h - 1][s][xi][a.0],
            None => self.endo.rewards[h - 1][s][a.0],
        }
    }

    fn emit(&self, h: usize, s: usize, xi: usize, rng: &mut ChaCha8Rng) -> Observation {
        match &self.emission {
            EmissionSpec::Identity => Observation::Discrete(s * self.exo.state_count() + xi),
            EmissionSpec::TableDiscrete { q, .. } => {
                Observation::Discrete(sample_index(&q[h - 1][s][xi], rng))
            }
            EmissionSpec::DenseEncoder {
                noise_sigma,
                state_dim,
                bit_count,
                padded_dim,
            } => {
                let mut v = vec![0.0; *padded_dim];
                v[self.global_state_index(h, s)] = 1.0;
                for b in 0..*bit_count {
                    v[state_dim + b] = ((xi >> b) & 1) as f64;
                }
                if *noise_sigma > 0.0 {
                    for item in v.iter_mut().take(state_dim + bit_count) {
                        *item += noise_sigma * gaussian(rng);
                    }
                }
                fwht(&mut v);
                Observation::Dense(v)
            }
        }
    }

    /// Ground-truth endogenous decoder (level-local id). Exact for
    /// Identity/TableDiscrete; for DenseEncoder this is a debug facility that
    /// inverts the Hadamard multiply and takes the largest state coordinate.
    pub fn phi_star(&self, h: usize, obs: &Observation) -> Result<usize> {
        match (&self.emission, obs) {
            (EmissionSpec::Identity, Observation::Discrete(x)) => {
                Ok(x / self.exo.state_count())
            }
            (EmissionSpec::TableDiscrete { q, .. }, Observation::Discrete(x)) => {
                let xi_count = self.exo.state_count();
                for (s, per_xi) in q[h - 1].iter().enumerate() {
                    for xi in 0..xi_count {
                        if per_xi[xi][*x] > 0.0 {
                            return Ok(s);
                        }
                    }
                }
                Err(ExoRlError::EnvValidation(format!(
                    "observation {x} not emitted at level {h}"
                )))
            }
            (EmissionSpec::DenseEncoder { .. }, Observation::Dense(v)) => {
                let (global, _) = self.decode_dense(v);
                match self.level_of_global(global) {
                    Some((level, local)) if level == h => Ok(local),
                    _ => Err(ExoRlError::EnvValidation(format!(
                        "dense observation decodes to global state {global}, outside level {h}"
                    ))),
                }
            }
            _ => Err(ExoRlError::Unsupported(
                "observation kind does not match emission".into(),
            )),
        }
    }

    /// Ground-truth exogenous decoder, analogous to [`ExBmdpEnv::phi_star`].
    pub fn phi_star_exo(&self, h: usize, obs: &Observation) -> Result<usize> {
        match (&self.emission, obs) {
            (EmissionSpec::Identity, Observation::Discrete(x)) => {
                Ok(x % self.exo.state_count())
            }
            (EmissionSpec::TableDiscrete { q, .. }, Observation::Discrete(x)) => {
                let xi_count = self.exo.state_count();
                for per_xi in q[h - 1].iter() {
                    for (xi, row) in per_xi.iter().enumerate().take(xi_count) {
                        if row[*x] > 0.0 {
                            return Ok(xi);
                        }
                    }
                }
                Err(ExoRlError::EnvValidation(format!(
                    "observation {x} not emitted at level {h}"
                )))
            }
            (EmissionSpec::DenseEncoder { .. }, Observation::Dense(v)) => {
                Ok(self.decode_dense(v).1)
            }
            _ => Err(ExoRlError::Unsupported(
                "observation kind does not match emission".into(),
            )),
        }
    }

    /// Invert a dense observation to (global endo state, exo bits).
    pub fn decode_dense(&self, v: &[f64]) -> (usize, usize) {
        let (state_dim, bit_count) = match &self.emission {
            EmissionSpec::DenseEncoder {
                state_dim,
                bit_count,
                ..
            } => (*state_dim, *bit_count),
            _ => panic!("decode_dense on non-dense emission"),
        };
        let mut w = v.to_vec();
        fwht(&mut w);
        let n = w.len() as f64;
        for item in w.iter_mut() {
            *item /= n;
        }
        let global = w[..state_dim]
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |best, (i, &p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            })
            .0;
        let mut xi = 0usize;
        for b in 0..bit_count {
            if w[state_dim + b] > 0.5 {
                xi |= 1 << b;
            }
        }
        (global, xi)
    }

    /// Execute the open-loop `path` from the start; deterministic given
    /// `seed`. A path of length `k < H` yields `k + 1` observations (the
    /// state reached after the last action is emitted); a full-length path
    /// yields `H` observations, actions, and rewards.
    pub fn sample_episode(&self, path: &Path, seed: u64, record_latent: bool) -> Result<Trajectory> {
        if path.len() > self.horizon() {
            return Err(ExoRlError::Config(format!(
                "path length {} exceeds horizon {}",
                path.len(),
                self.horizon()
            )));
        }
        let actions = path.actions.clone();
        self.sample_impl(seed, path.len(), record_latent, move |h, _| actions[h - 1])
    }

    /// Execute a full episode with a per-step policy callback.
    pub fn sample_episode_with_policy<F>(
        &self,
        policy: F,
        seed: u64,
        record_latent: bool,
    ) -> Result<Trajectory>
    where
        F: FnMut(usize, &Observation) -> Action,
    {
        self.sample_impl(seed, self.horizon(), record_latent, policy)
    }

    fn sample_impl<F>(
        &self,
        seed: u64,
        steps: usize,
        record_latent: bool,
        mut act: F,
    ) -> Result<Trajectory>
    where
        F: FnMut(usize, &Observation) -> Action,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = sample_index(&self.endo.mu, &mut rng);
        let mut xi = self.exo.sample_start(&mut rng);
        let mut traj = Trajectory::default();
        if record_latent {
            traj.latent_endo = Some(Vec::new());
            traj.latent_exo = Some(Vec::new());
        }
        let record = |traj: &mut Trajectory, s: usize, xi: usize| {
            if let Some(v) = traj.latent_endo.as_mut() {
                v.push(s);
            }
            if let Some(v) = traj.latent_exo.as_mut() {
                v.push(xi);
            }
        };
        for h in 1..=steps {
            let x = self.emit(h, s, xi, &mut rng);
            record(&mut traj, s, xi);
            let a = act(h, &x);
            if a.0 >= self.action_count() {
                return Err(ExoRlError::Config(format!(
                    "action {} outside [0, {})",
                    a.0,
                    self.action_count()
                )));
            }
            traj.rewards.push(self.reward(h, s, xi, a));
            traj.observations.push(x);
            traj.actions.push(a);
            if h < self.horizon() {
                s = sample_index(&self.endo.transitions[h - 1][s][a.0], &mut rng);
                xi = self.exo.sample_step(xi, &mut rng);
            }
        }
        if steps < self.horizon() {
            let x = self.emit(steps + 1, s, xi, &mut rng);
            record(&mut traj, s, xi);
            traj.observations.push(x);
        }
        Ok(traj)
    }

    /// Same dynamics with Identity emission, for exact-DP use on dense envs.
    pub fn identity_twin(&self) -> ExBmdpEnv {
        ExBmdpEnv {
            endo: self.endo.clone(),
            exo: self.exo.clone(),
            emission: EmissionSpec::Identity,
            eta_certificate: self.eta_certificate,
            reward_full: self.reward_full.clone(),
        }
    }
}

/// The two good action sequences of the combination lock for a given seed,
/// `(a_h)` and `(a'_h)` with `a_h != a'_h` at every level.
pub fn combolock_good_sequences(
    horizon: usize,
    seed: u64,
    action_count: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4c4f_434b);
    let mut good_a = Vec::with_capacity(horizon);
    let mut good_b = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let a = rng.gen_range(0..action_count);
        let mut b = rng.gen_range(0..action_count - 1);
        if b >= a {
            b += 1;
        }
        good_a.push(a);
        good_b.push(b);
    }
    (good_a, good_b)
}

/// Combination-lock benchmark: one start state, then per level an a-chain
/// state, a b-chain state, and an absorbing failure state. The good action
/// `a_h` advances the a-chain, `a'_h` advances the b-chain, and every other
/// action falls to the failure chain. Reward 1.0 for `a_H` at the final
/// a-state, 0.1 for `a'_H` at the final b-state. Exogenous state is `H`
/// independent bits flipping with probability 0.1. Observations are dense:
/// one-hot over all `3H-2` states concatenated with the exogenous bits,
/// Gaussian noise per dimension, zero-padded to a power of two, and passed
/// through a Hadamard multiply.
pub fn build_combolock(
    horizon: usize,
    seed: u64,
    noise_sigma: f64,
    action_count: usize,
) -> Result<ExBmdpEnv> {
    if horizon < 2 {
        return Err(ExoRlError::Config("combolock requires horizon >= 2".into()));
    }
    if action_count < 2 {
        return Err(ExoRlError::Config("combolock requires >= 2 actions".into()));
    }
    let (good_a, good_b) = combolock_good_sequences(horizon, seed, action_count);
    let mut states_per_level = vec![1];
    states_per_level.extend(std::iter::repeat(3).take(horizon - 1));

    let det_row = |target: usize, width: usize| {
        let mut row = vec![0.0; width];
        row[target] = 1.0;
        row
    };
    let mut transitions = Vec::with_capacity(horizon - 1);
    // Level 1 -> 2: the single start state.
    let level1: Vec<Vec<Vec<f64>>> = vec![(0..action_count)
        .map(|a| {
            let target = if a == good_a[0] {
                0
            } else if a == good_b[0] {
                1
            } else {
                2
            };
            det_row(target, 3)
        })
        .collect()];
    transitions.push(level1);
    for h in 2..horizon {
        let hi = h - 1;
        let level: Vec<Vec<Vec<f64>>> = (0..3usize)
            .map(|s| {
                (0..action_count)
                    .map(|a| {
                        let target = match s {
                            0 if a == good_a[hi] => 0,
                            1 if a == good_b[hi] => 1,
                            _ => 2,
                        };
                        det_row(target, 3)
                    })
                    .collect()
            })
            .collect();
        transitions.push(level);
    }

    let mut rewards = vec![vec![vec![0.0; action_count]; 1]];
    rewards.extend((2..=horizon).map(|_| vec![vec![0.0; action_count]; 3]));
    rewards[horizon - 1][0][good_a[horizon - 1]] = 1.0;
    rewards[horizon - 1][1][good_b[horizon - 1]] = 0.1;

    let endo = EndoMdpSpec {
        horizon,
        action_count,
        states_per_level,
        mu: vec![1.0],
        transitions,
        rewards,
    };
    let state_dim = 3 * horizon - 2;
    let padded_dim = (state_dim + horizon).next_power_of_two();
    ExBmdpEnv::new(
        endo,
        ExoChainSpec::Bits {
            bits: horizon,
            flip_p: 0.1,
        },
        EmissionSpec::DenseEncoder {
            noise_sigma,
            state_dim,
            bit_count: horizon,
            padded_dim,
        },
    )
}

/// Deterministic 3-level MDP on which exact inverse-dynamics abstraction
/// fails to produce a policy cover: the two terminal states have disjoint
/// parent sets, yet each deterministic policy reaches only one of them.
pub fn build_id_counterexample() -> ExBmdpEnv {
    let endo = EndoMdpSpec {
        horizon: 3,
        action_count: 2,
        states_per_level: vec![1, 2, 2],
        mu: vec![1.0],
        transitions: vec![
            // s1 -(0)-> s_2a, s1 -(1)-> s_2b
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            // both actions: s_2a -> s_3a, s_2b -> s_3b
            vec![
                vec![vec![1.0, 0.0], vec![1.0, 0.0]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
        ],
        rewards: vec![
            vec![vec![0.0, 0.0]],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        ],
    };
    let exo = ExoChainSpec::Tabular {
        mu_xi: vec![1.0],
        t_xi: vec![vec![1.0]],
    };
    ExBmdpEnv::new(endo, exo, EmissionSpec::Identity).expect("static instance is valid")
}

/// Randomized near-deterministic tabular instance: deterministic skeleton
/// drawn from `seed`, each transition row and the start distribution
/// perturbed so the top probability is exactly `1 - eta` (when the target
/// level has more than one state). Identity emission, random small exogenous
/// chain.
pub fn build_random_near_det(
    seed: u64,
    horizon: usize,
    max_states: usize,
    action_count: usize,
    eta: f64,
    exo_states: usize,
) -> Result<ExBmdpEnv> {
    if horizon == 0 || max_states == 0 || action_count == 0 || exo_states == 0 {
        return Err(ExoRlError::Config("all sizes must be positive".into()));
    }
    if !(0.0..0.5).contains(&eta) {
        return Err(ExoRlError::Config("eta must lie in [0, 0.5)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5244_4e56);
    let states_per_level: Vec<usize> = (0..horizon)
        .map(|_| rng.gen_range(1..=max_states))
        .collect();
    let perturbed_row = |target: usize, width: usize| {
        let mut row = vec![0.0; width];
        if width == 1 {
            row[0] = 1.0;
        } else {
            let spread = eta / (width - 1) as f64;
            for item in row.iter_mut() {
                *item = spread;
            }
            row[target] = 1.0 - eta;
        }
        row
    };
    let mu = perturbed_row(rng.gen_range(0..states_per_level[0]), states_per_level[0]);
    let transitions: Vec<Vec<Vec<Vec<f64>>>> = (0..horizon - 1)
        .map(|hi| {
            (0..states_per_level[hi])
                .map(|_| {
                    (0..action_count)
                        .map(|_| {
                            perturbed_row(
                                rng.gen_range(0..states_per_level[hi + 1]),
                                states_per_level[hi + 1],
                            )
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let rewards: Vec<Vec<Vec<f64>>> = (0..horizon)
        .map(|hi| {
            (0..states_per_level[hi])
                .map(|_| (0..action_count).map(|_| rng.gen::<f64>()).collect())
                .collect()
        })
        .collect();
    let mu_xi: Vec<f64> = {
        let raw: Vec<f64> = (0..exo_states).map(|_| rng.gen::<f64>() + 0.05).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    };
    let t_xi: Vec<Vec<f64>> = (0..exo_states)
        .map(|_| {
            let raw: Vec<f64> = (0..exo_states).map(|_| rng.gen::<f64>() + 0.05).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|p| p / total).collect()
        })
        .collect();
    let endo = EndoMdpSpec {
        horizon,
        action_count,
        states_per_level,
        mu,
        transitions,
        rewards,
    };
    ExBmdpEnv::new(endo, ExoChainSpec::Tabular { mu_xi, t_xi }, EmissionSpec::Identity)
}

#[derive(Debug, Deserialize)]
struct TabularDoc {
    #[serde(rename = "H")]
    horizon: usize,
    #[serde(rename = "A")]
    action_count: usize,
    endo_states: Vec<usize>,
    mu: Vec<f64>,
    #[serde(rename = "T")]
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(rename = "R")]
    rewards: Option<Vec<Vec<Vec<f64>>>>,
    exo: ExoDoc,
    emission: EmissionDoc,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ExoDoc {
    Tabular {
        #[allow(dead_code)]
        states: usize,
        mu_xi: Vec<f64>,
        #[serde(rename = "T_xi")]
        t_xi: Vec<Vec<f64>>,
    },
    Bits {
        bits: usize,
        flip_p: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind")]
enum EmissionDoc {
    #[serde(rename = "identity")]
    Identity,
    #[serde(rename = "table")]
    Table {
        q: Vec<Vec<Vec<Vec<f64>>>>,
        observation_count: usize,
    },
    #[serde(rename = "dense")]
    Dense { noise_sigma: f64 },
}

/// Build an environment from the JSON document schema. Validation failures
/// name the offending entry.
pub fn build_tabular(json: &str) -> Result<ExBmdpEnv> {
    let doc: TabularDoc = serde_json::from_str(json)?;
    let rewards = doc.rewards.unwrap_or_else(|| {
        doc.endo_states
            .iter()
            .map(|&n| vec![vec![0.0; doc.action_count]; n])
            .collect()
    });
    let endo = EndoMdpSpec {
        horizon: doc.horizon,
        action_count: doc.action_count,
        states_per_level: doc.endo_states,
        mu: doc.mu,
        transitions: doc.transitions,
        rewards,
    };
    let exo = match doc.exo {
        ExoDoc::Tabular { mu_xi, t_xi, .. } => ExoChainSpec::Tabular { mu_xi, t_xi },
        ExoDoc::Bits { bits, flip_p } => ExoChainSpec::Bits { bits, flip_p },
    };
    let emission = match doc.emission {
        EmissionDoc::Identity => EmissionSpec::Identity,
        EmissionDoc::Table {
            q,
            observation_count,
        } => EmissionSpec::TableDiscrete {
            q,
            observation_count,
        },
        EmissionDoc::Dense { noise_sigma } => {
            let state_dim: usize = endo.states_per_level.iter().sum();
            let bit_count = match &exo {
                ExoChainSpec::Bits { bits, .. } => *bits,
                _ => {
                    return Err(ExoRlError::EnvValidation(
                        "dense emission requires bit-vector exogenous chain".into(),
                    ))
                }
            };
            EmissionSpec::DenseEncoder {
                noise_sigma,
                state_dim,
                bit_count,
                padded_dim: (state_dim + bit_count).next_power_of_two(),
            }
        }
    };
    ExBmdpEnv::new(endo, exo, emission)
}
