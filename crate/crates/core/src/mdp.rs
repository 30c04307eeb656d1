//! Tabular MDPs, deterministic policies, and perturbed policy execution.
//!
//! Indexing convention: steps run `h = 0..H` internally, states `s = 0..S`,
//! actions `a = 0..A`. Value tables carry an extra terminal layer `H` that is
//! identically zero. Human-facing messages report steps 1-based.

use ndarray::{Array2, Array3, Array4, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Transition rows must sum to one within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("constant rewards; choose r_max > r_min")]
    DegenerateRewardRange,
    #[error("raw reward {value} outside declared range [{r_min}, {r_max}]")]
    RawRewardOutOfRange { value: f64, r_min: f64, r_max: f64 },
    #[error("reward not normalized: {0} outside [0, 1]")]
    RewardNotNormalized(f64),
}

/// How realized rewards are drawn around the mean reward table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardNoise {
    /// Realized reward equals the mean.
    Deterministic,
    /// Realized reward is 1 with probability equal to the mean, else 0.
    Bernoulli,
}

/// A finite-horizon tabular MDP with rewards in `[0, 1]` and a single
/// deterministic initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Transition tensor `[H, S, A, S]`; each row is a distribution over
    /// next states.
    pub transitions: Array4<f64>,
    /// Mean-reward tensor `[H, S, A]`.
    pub rewards: Array3<f64>,
    pub reward_noise: RewardNoise,
    pub initial_state: usize,
}

impl TabularMdp {
    pub fn new(
        transitions: Array4<f64>,
        rewards: Array3<f64>,
        reward_noise: RewardNoise,
        initial_state: usize,
    ) -> Self {
        let (h, s, a, s2) = transitions.dim();
        assert_eq!(s, s2, "transition tensor must be [H, S, A, S]");
        assert_eq!(rewards.dim(), (h, s, a), "reward tensor must be [H, S, A]");
        assert!(initial_state < s, "initial state out of range");
        TabularMdp {
            num_states: s,
            num_actions: a,
            horizon: h,
            transitions,
            rewards,
            reward_noise,
            initial_state,
        }
    }

    /// Checks every invariant and reports all violations instead of aborting
    /// on the first. An empty list means the MDP is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        for hh in 0..self.horizon {
            for ss in 0..self.num_states {
                for aa in 0..self.num_actions {
                    let row = self.transitions.slice(ndarray::s![hh, ss, aa, ..]);
                    let mut sum = 0.0;
                    for &p in row.iter() {
                        if p < 0.0 {
                            violations.push(format!(
                                "negative probability {p} in row ({},{ss},{aa})",
                                hh + 1
                            ));
                        }
                        sum += p;
                    }
                    if (sum - 1.0).abs() > SIMPLEX_TOL {
                        violations.push(format!("row ({},{ss},{aa}) sums to {sum}", hh + 1));
                    }
                    let r = self.rewards[[hh, ss, aa]];
                    if !(0.0..=1.0).contains(&r) {
                        violations.push(format!("reward ({},{ss},{aa}) out of [0,1]: {r}", hh + 1));
                    }
                }
            }
        }
        violations
    }

    /// Samples one environment transition. The next state is drawn from the
    /// transition row, then the reward per `reward_noise`.
    pub fn sample_step(&self, h: usize, s: usize, a: usize, rng: &mut impl Rng) -> (f64, usize) {
        let row = self.transitions.slice(ndarray::s![h, s, a, ..]);
        let next = sample_categorical(row, rng);
        let mean = self.rewards[[h, s, a]];
        let reward = match self.reward_noise {
            RewardNoise::Deterministic => mean,
            RewardNoise::Bernoulli => {
                if rng.gen::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
        };
        (reward, next)
    }
}

/// Samples an index from a probability row. Rows are only guaranteed to sum
/// to one within [`SIMPLEX_TOL`], so leftover mass falls to the last entry
/// with positive probability.
pub fn sample_categorical(row: ArrayView1<f64>, rng: &mut impl Rng) -> usize {
    let mut u = rng.gen::<f64>();
    let mut last_positive = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            if u < p {
                return i;
            }
            u -= p;
        }
    }
    last_positive
}

/// One action per `(step, state)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicPolicy {
    /// Action table `[H, S]`.
    pub actions: Array2<usize>,
}

impl DeterministicPolicy {
    pub fn new(actions: Array2<usize>) -> Self {
        DeterministicPolicy { actions }
    }

    /// The policy that plays `action` everywhere.
    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        DeterministicPolicy {
            actions: Array2::from_elem((horizon, num_states), action),
        }
    }

    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[[h, s]]
    }

    pub fn horizon(&self) -> usize {
        self.actions.nrows()
    }

    pub fn num_states(&self) -> usize {
        self.actions.ncols()
    }

    /// True when every entry indexes a valid action.
    pub fn is_valid_for(&self, mdp: &TabularMdp) -> bool {
        self.horizon() == mdp.horizon
            && self.num_states() == mdp.num_states
            && self.actions.iter().all(|&a| a < mdp.num_actions)
    }
}

/// Perturbed execution of an agent policy: with probability `rho` the
/// adversary's action is taken instead of the agent's.
#[derive(Debug, Clone)]
pub struct ExecutionModel {
    pub agent_policy: DeterministicPolicy,
    pub adversary_policy: DeterministicPolicy,
    pub rho: f64,
}

impl ExecutionModel {
    pub fn new(
        agent_policy: DeterministicPolicy,
        adversary_policy: DeterministicPolicy,
        rho: f64,
    ) -> Self {
        assert!((0.0..=1.0).contains(&rho), "rho must lie in [0, 1]");
        ExecutionModel {
            agent_policy,
            adversary_policy,
            rho,
        }
    }

    /// Draws the executed action; the flag records whether the adversarial
    /// branch fired.
    pub fn sample_executed_action(&self, h: usize, s: usize, rng: &mut impl Rng) -> (usize, bool) {
        sample_mixture_action(
            self.agent_policy.action(h, s),
            self.adversary_policy.action(h, s),
            self.rho,
            rng,
        )
    }
}

/// Shared draw for every `(1-rho, rho)` action mixture in the crate.
pub(crate) fn sample_mixture_action(
    agent_action: usize,
    adversary_action: usize,
    rho: f64,
    rng: &mut impl Rng,
) -> (usize, bool) {
    if rho > 0.0 && rng.gen::<f64>() < rho {
        (adversary_action, true)
    } else {
        (agent_action, false)
    }
}

/// One executed step of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub state: usize,
    pub executed_action: usize,
    pub realized_reward: f64,
    pub next_state: usize,
}

/// A full episode of length `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub episode_return: f64,
}

impl Trajectory {
    pub fn from_steps(steps: Vec<TrajectoryStep>) -> Self {
        let episode_return = steps.iter().map(|st| st.realized_reward).sum();
        Trajectory {
            steps,
            episode_return,
        }
    }
}

/// Exact value tables of a fixed agent/adversary pair under mixture
/// execution: `c` is the state value `[H+1, S]`, `d` the action value
/// `[H, S, A]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactEvaluation {
    pub c: Array2<f64>,
    pub d: Array3<f64>,
}

impl ExactEvaluation {
    /// Expected return of the perturbed execution from the initial state.
    pub fn initial_value(&self, mdp: &TabularMdp) -> f64 {
        self.c[[0, mdp.initial_state]]
    }
}

/// Backward induction for a fixed agent/adversary pair:
/// `d[h](s,a) = R[h](s,a) + sum_s' P[h](s'|s,a) c[h+1](s')` and
/// `c[h](s) = (1-rho) d[h](s, agent) + rho d[h](s, adversary)`.
pub fn evaluate_policy_pair_exact(
    mdp: &TabularMdp,
    agent: &DeterministicPolicy,
    adversary: &DeterministicPolicy,
    rho: f64,
) -> ExactEvaluation {
    assert!((0.0..=1.0).contains(&rho));
    let (h_max, s_max, a_max) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut c = Array2::<f64>::zeros((h_max + 1, s_max));
    let mut d = Array3::<f64>::zeros((h_max, s_max, a_max));

    for hh in (0..h_max).rev() {
        for ss in 0..s_max {
            for aa in 0..a_max {
                let mut expected_next = 0.0;
                for ss_next in 0..s_max {
                    expected_next += mdp.transitions[[hh, ss, aa, ss_next]] * c[[hh + 1, ss_next]];
                }
                d[[hh, ss, aa]] = mdp.rewards[[hh, ss, aa]] + expected_next;
            }
            let agent_a = agent.action(hh, ss);
            let adv_a = adversary.action(hh, ss);
            c[[hh, ss]] = (1.0 - rho) * d[[hh, ss, agent_a]] + rho * d[[hh, ss, adv_a]];
        }
    }
    ExactEvaluation { c, d }
}

/// Expectation of a Q row under an action distribution.
pub fn apply_d_operator(dist: ArrayView1<f64>, q_row: ArrayView1<f64>) -> f64 {
    assert_eq!(
        dist.len(),
        q_row.len(),
        "distribution/Q-row length mismatch"
    );
    dist.iter().zip(q_row.iter()).map(|(p, q)| p * q).sum()
}

/// Variance of a value vector under a next-state distribution, clamped at
/// zero to absorb floating-point negatives.
pub fn apply_v_operator(p_row: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    assert_eq!(p_row.len(), v.len(), "distribution/value length mismatch");
    let mut mean = 0.0;
    let mut mean_sq = 0.0;
    for (&p, &x) in p_row.iter().zip(v.iter()) {
        mean += p * x;
        mean_sq += p * x * x;
    }
    (mean_sq - mean * mean).max(0.0)
}

/// Affine map between raw and normalized reward scales:
/// `raw = scale * normalized + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScale {
    pub scale: f64,
    pub offset: f64,
}

impl RewardScale {
    /// The identity map (raw rewards already in `[0, 1]`).
    pub fn identity() -> Self {
        RewardScale {
            scale: 1.0,
            offset: 0.0,
        }
    }

    pub fn to_raw(&self, normalized: f64) -> f64 {
        self.scale * normalized + self.offset
    }

    pub fn to_normalized(&self, raw: f64) -> f64 {
        (raw - self.offset) / self.scale
    }

    /// Converts a normalized episode return into raw scale; each of the
    /// `horizon` per-step rewards contributes one offset.
    pub fn return_to_raw(&self, normalized_return: f64, horizon: usize) -> f64 {
        self.scale * normalized_return + horizon as f64 * self.offset
    }
}

/// Maps raw rewards into `[0, 1]` via `(r - r_min) / (r_max - r_min)`,
/// returning the affine parameters that invert the map exactly.
pub fn normalize_rewards(
    raw: &Array3<f64>,
    r_min: f64,
    r_max: f64,
) -> Result<(Array3<f64>, RewardScale), MdpError> {
    if r_max <= r_min {
        return Err(MdpError::DegenerateRewardRange);
    }
    for &value in raw.iter() {
        if value < r_min || value > r_max {
            return Err(MdpError::RawRewardOutOfRange {
                value,
                r_min,
                r_max,
            });
        }
    }
    let span = r_max - r_min;
    let normalized = raw.mapv(|r| (r - r_min) / span);
    Ok((
        normalized,
        RewardScale {
            scale: span,
            offset: r_min,
        },
    ))
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax_lowest(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

/// Index of the smallest entry, lowest index on ties.
pub(crate) fn argmin_lowest(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v < best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::{arr1, Array3, Array4};

    fn single_state_mdp(p: f64, r: f64) -> TabularMdp {
        let transitions = Array4::from_elem((1, 1, 1, 1), p);
        let rewards = Array3::from_elem((1, 1, 1), r);
        TabularMdp::new(transitions, rewards, RewardNoise::Deterministic, 0)
    }

    #[test]
    fn validate_accepts_smallest_mdp() {
        assert!(single_state_mdp(1.0, 0.5).validate().is_empty());
    }

    #[test]
    fn validate_reports_broken_simplex() {
        let violations = single_state_mdp(0.9, 0.5).validate();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].contains("(1,0,0)"), "{}", violations[0]);
        assert!(violations[0].contains("sums to 0.9"), "{}", violations[0]);
    }

    #[test]
    fn validate_tolerates_tiny_simplex_slack() {
        assert!(single_state_mdp(1.0 + 5e-10, 0.5).validate().is_empty());
        assert!(!single_state_mdp(1.0 + 5e-9, 0.5).validate().is_empty());
        assert!(!single_state_mdp(1.0 - 5e-9, 0.5).validate().is_empty());
    }

    #[test]
    fn validate_reports_reward_out_of_range() {
        let violations = single_state_mdp(1.0, 1.5).validate();
        assert_eq!(violations.len(), 1);
        assert!(
            violations[0].contains("reward (1,0,0)"),
            "{}",
            violations[0]
        );
    }

    #[test]
    fn normalize_maps_cliff_endpoints() {
        let raw = Array3::from_shape_vec((1, 1, 3), vec![-100.0, -1.0, 0.0]).unwrap();
        let (norm, scale) = normalize_rewards(&raw, -100.0, 0.0).unwrap();
        assert_eq!(norm[[0, 0, 0]], 0.0);
        assert!((norm[[0, 0, 1]] - 0.99).abs() < 1e-12);
        assert_eq!(norm[[0, 0, 2]], 1.0);
        for idx in 0..3 {
            let back = scale.to_raw(norm[[0, 0, idx]]);
            assert!((back - raw[[0, 0, idx]]).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_is_identity_on_unit_range() {
        let raw = Array3::from_shape_vec((1, 1, 2), vec![0.25, 0.75]).unwrap();
        let (norm, scale) = normalize_rewards(&raw, 0.0, 1.0).unwrap();
        assert_eq!(norm, raw);
        assert_eq!(scale, RewardScale::identity());
    }

    #[test]
    fn normalize_midpoint() {
        let raw = Array3::from_elem((1, 1, 1), -1.0);
        let (norm, _) = normalize_rewards(&raw, -2.0, 0.0).unwrap();
        assert_eq!(norm[[0, 0, 0]], 0.5);
    }

    #[test]
    fn normalize_rejects_degenerate_range() {
        let raw = Array3::from_elem((1, 1, 1), 0.5);
        let err = normalize_rewards(&raw, 0.5, 0.5).unwrap_err();
        assert!(err.to_string().contains("constant rewards"));
    }

    #[test]
    fn sample_step_point_mass() {
        let mut transitions = Array4::zeros((1, 4, 1, 4));
        for ss in 0..4 {
            transitions[[0, ss, 0, 3]] = 1.0;
        }
        let rewards = Array3::from_elem((1, 4, 1), 0.7);
        let mdp = TabularMdp::new(transitions, rewards, RewardNoise::Deterministic, 0);
        let mut rng = stream(123, "test");
        for _ in 0..10 {
            assert_eq!(mdp.sample_step(0, 0, 0, &mut rng), (0.7, 3));
        }
    }

    #[test]
    fn sample_step_uniform_frequencies() {
        let transitions = Array4::from_elem((1, 2, 1, 2), 0.5);
        let rewards = Array3::from_elem((1, 2, 1), 0.0);
        let mdp = TabularMdp::new(transitions, rewards, RewardNoise::Deterministic, 0);
        let mut rng = stream(42, "lln");
        let n = 100_000;
        let mut count0 = 0usize;
        for _ in 0..n {
            if mdp.sample_step(0, 0, 0, &mut rng).1 == 0 {
                count0 += 1;
            }
        }
        let freq = count0 as f64 / n as f64;
        assert!((0.49..=0.51).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn sample_step_bernoulli_mean() {
        let transitions = Array4::from_elem((1, 1, 1, 1), 1.0);
        let rewards = Array3::from_elem((1, 1, 1), 0.25);
        let mdp = TabularMdp::new(transitions, rewards, RewardNoise::Bernoulli, 0);
        let mut rng = stream(42, "bernoulli");
        let n = 100_000;
        let total: f64 = (0..n).map(|_| mdp.sample_step(0, 0, 0, &mut rng).0).sum();
        let mean = total / n as f64;
        assert!((0.24..=0.26).contains(&mean), "mean {mean}");
    }

    #[test]
    fn executed_action_at_rho_extremes() {
        let agent = DeterministicPolicy::constant(2, 3, 1);
        let adversary = DeterministicPolicy::constant(2, 3, 2);
        let mut rng = stream(5, "exec");

        let exec = ExecutionModel::new(agent.clone(), adversary.clone(), 0.0);
        for _ in 0..50 {
            assert_eq!(exec.sample_executed_action(0, 0, &mut rng), (1, false));
        }
        let exec = ExecutionModel::new(agent, adversary, 1.0);
        for _ in 0..50 {
            assert_eq!(exec.sample_executed_action(1, 2, &mut rng), (2, true));
        }
    }

    #[test]
    fn executed_action_adversarial_fraction() {
        let exec = ExecutionModel::new(
            DeterministicPolicy::constant(1, 1, 0),
            DeterministicPolicy::constant(1, 1, 1),
            0.2,
        );
        let mut rng = stream(11, "exec-freq");
        let n = 100_000;
        let adversarial = (0..n)
            .filter(|_| exec.sample_executed_action(0, 0, &mut rng).1)
            .count();
        let frac = adversarial as f64 / n as f64;
        assert!((0.19..=0.21).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn pair_evaluation_one_step_mixture() {
        let transitions = Array4::from_elem((1, 1, 2, 1), 1.0);
        let rewards = Array3::from_shape_vec((1, 1, 2), vec![1.0, 0.0]).unwrap();
        let mdp = TabularMdp::new(transitions, rewards, RewardNoise::Deterministic, 0);
        let agent = DeterministicPolicy::constant(1, 1, 0);
        let adversary = DeterministicPolicy::constant(1, 1, 1);
        let eval = evaluate_policy_pair_exact(&mdp, &agent, &adversary, 0.2);
        assert!((eval.c[[0, 0]] - 0.8).abs() < 1e-15);
    }

    // Plain policy evaluation written independently of the mixture recursion.
    fn plain_policy_value(mdp: &TabularMdp, policy: &DeterministicPolicy) -> Array2<f64> {
        let mut v = Array2::<f64>::zeros((mdp.horizon + 1, mdp.num_states));
        for hh in (0..mdp.horizon).rev() {
            for ss in 0..mdp.num_states {
                let aa = policy.action(hh, ss);
                let mut next = 0.0;
                for ss_next in 0..mdp.num_states {
                    next += mdp.transitions[[hh, ss, aa, ss_next]] * v[[hh + 1, ss_next]];
                }
                v[[hh, ss]] = mdp.rewards[[hh, ss, aa]] + next;
            }
        }
        v
    }

    #[test]
    fn pair_evaluation_reduces_to_policy_evaluation_at_rho_zero() {
        let mdp = crate::envs::build_random_mdp(3, 2, 3, 1.0, 99);
        let agent = DeterministicPolicy::constant(3, 3, 1);
        let adversary = DeterministicPolicy::constant(3, 3, 0);
        let eval = evaluate_policy_pair_exact(&mdp, &agent, &adversary, 0.0);
        let plain = plain_policy_value(&mdp, &agent);
        for hh in 0..=3 {
            for ss in 0..3 {
                assert!((eval.c[[hh, ss]] - plain[[hh, ss]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pair_evaluation_matches_monte_carlo() {
        let mdp = crate::envs::build_random_mdp(3, 2, 3, 1.0, 7);
        let agent = DeterministicPolicy::constant(3, 3, 0);
        let adversary = DeterministicPolicy::constant(3, 3, 1);
        let rho = 0.3;
        let exact = evaluate_policy_pair_exact(&mdp, &agent, &adversary, rho).initial_value(&mdp);

        let exec = ExecutionModel::new(agent, adversary, rho);
        let mut rng = stream(2024, "mc");
        let n = 100_000;
        let mut returns = Vec::with_capacity(n);
        for _ in 0..n {
            let mut ss = mdp.initial_state;
            let mut total = 0.0;
            for hh in 0..mdp.horizon {
                let (aa, _) = exec.sample_executed_action(hh, ss, &mut rng);
                let (r, next) = mdp.sample_step(hh, ss, aa, &mut rng);
                total += r;
                ss = next;
            }
            returns.push(total);
        }
        let mean: f64 = returns.iter().sum::<f64>() / n as f64;
        let var: f64 =
            returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n as f64 - 1.0);
        let stderr = (var / n as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * stderr.max(1e-6),
            "mc {mean} vs exact {exact} (stderr {stderr})"
        );
    }

    // The exact pair value is a polynomial of degree at most H in rho, so
    // interpolating through H+1 evaluations must reproduce a held-out rho.
    #[test]
    fn pair_evaluation_is_polynomial_in_rho() {
        let mdp = crate::envs::build_random_mdp(3, 2, 3, 1.0, 31);
        let agent = DeterministicPolicy::constant(3, 3, 0);
        let adversary = DeterministicPolicy::constant(3, 3, 1);
        let h = mdp.horizon;

        let nodes: Vec<f64> = (0..=h).map(|j| j as f64 / h as f64).collect();
        let values: Vec<f64> = nodes
            .iter()
            .map(|&r| evaluate_policy_pair_exact(&mdp, &agent, &adversary, r).initial_value(&mdp))
            .collect();

        let held_out = 0.37;
        let mut interpolated = 0.0;
        for j in 0..nodes.len() {
            let mut basis = 1.0;
            for m in 0..nodes.len() {
                if m != j {
                    basis *= (held_out - nodes[m]) / (nodes[j] - nodes[m]);
                }
            }
            interpolated += basis * values[j];
        }
        let direct =
            evaluate_policy_pair_exact(&mdp, &agent, &adversary, held_out).initial_value(&mdp);
        assert!((interpolated - direct).abs() < 1e-9);
    }

    #[test]
    fn d_operator_examples() {
        assert_eq!(
            apply_d_operator(arr1(&[0.0, 1.0]).view(), arr1(&[3.0, 5.0]).view()),
            5.0
        );
        assert_eq!(
            apply_d_operator(arr1(&[0.5, 0.5]).view(), arr1(&[2.0, 4.0]).view()),
            3.0
        );
        assert!(
            (apply_d_operator(arr1(&[0.8, 0.2]).view(), arr1(&[1.0, 0.0]).view()) - 0.8).abs()
                < 1e-15
        );
    }

    #[test]
    fn v_operator_examples() {
        assert_eq!(
            apply_v_operator(arr1(&[1.0, 0.0]).view(), arr1(&[3.0, 9.0]).view()),
            0.0
        );
        assert_eq!(
            apply_v_operator(arr1(&[0.5, 0.5]).view(), arr1(&[0.0, 2.0]).view()),
            1.0
        );
        assert_eq!(
            apply_v_operator(arr1(&[0.3, 0.7]).view(), arr1(&[4.0, 4.0]).view()),
            0.0
        );
    }

    proptest::proptest! {
        #[test]
        fn v_operator_shift_invariant(
            weights in proptest::collection::vec(0.01f64..1.0, 4),
            values in proptest::collection::vec(-5.0f64..5.0, 4),
            shift in -10.0f64..10.0,
        ) {
            let total: f64 = weights.iter().sum();
            let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
            let a = apply_v_operator(arr1(&p).view(), arr1(&values).view());
            let b = apply_v_operator(arr1(&p).view(), arr1(&shifted).view());
            proptest::prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn categorical_sampling_stays_in_support(seed in 0u64..1000) {
            let mut rng = stream(seed, "support");
            let row = arr1(&[0.0, 0.5, 0.5, 0.0]);
            let drawn = sample_categorical(row.view(), &mut rng);
            proptest::prop_assert!(drawn == 1 || drawn == 2);
        }
    }
}
