//! Model-based action-robust learner with policy certificates.
//!
//! Each episode has two phases. The sampling phase executes the mixture of
//! the current optimistic policy (probability `1-rho`) and the current
//! pessimistic policy (probability `rho`) against the environment and folds
//! the observations into empirical reward and transition estimates. The
//! planning phase then rebuilds the optimistic/pessimistic value pairs by a
//! bonus-augmented backward pass and derives the next episode's policies.
//! The interval `[v_under, v_bar]` at the initial state is the episode's
//! certificate; the narrowest certificate seen so far decides the output
//! policy.

use crate::mdp::{
    apply_v_operator, argmax_lowest, argmin_lowest, sample_mixture_action, DeterministicPolicy,
    MdpError, TabularMdp, Trajectory, TrajectoryStep,
};
use ndarray::{Array2, Array3, Array4, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Shared learner settings. `iota` is the confidence log-term
/// `ln(2*S*A*H*K / delta)` recomputed from the other fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub num_episodes: usize,
    pub rho: f64,
    pub delta: f64,
    pub iota: f64,
    /// Multiplier on the exploration bonus. 1.0 keeps the analysis-exact
    /// bonus; smaller values trade the high-probability guarantee for
    /// practical convergence speed on benchmark instances.
    pub bonus_scale: f64,
}

impl LearnerConfig {
    pub fn new(num_episodes: usize, rho: f64, delta: f64, mdp: &TabularMdp) -> Self {
        Self::with_dims(
            num_episodes,
            rho,
            delta,
            mdp.num_states,
            mdp.num_actions,
            mdp.horizon,
        )
    }

    pub fn with_dims(
        num_episodes: usize,
        rho: f64,
        delta: f64,
        num_states: usize,
        num_actions: usize,
        horizon: usize,
    ) -> Self {
        assert!(num_episodes >= 1);
        assert!((0.0..=1.0).contains(&rho));
        assert!(delta > 0.0 && delta <= 1.0);
        let iota =
            (2.0 * num_states as f64 * num_actions as f64 * horizon as f64 * num_episodes as f64
                / delta)
                .ln();
        LearnerConfig {
            num_episodes,
            rho,
            delta,
            iota,
            bonus_scale: 1.0,
        }
    }

    pub fn with_bonus_scale(mut self, bonus_scale: f64) -> Self {
        assert!(bonus_scale > 0.0);
        self.bonus_scale = bonus_scale;
        self
    }
}

/// Per-episode certificate: an interval around the optimal robust value and
/// the current policy's robust value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub lower: f64,
    pub upper: f64,
    pub epsilon: f64,
    pub episode: usize,
}

/// Mutable learner state. Value tables are `[H+1, S]` / `[H, S, A]` with a
/// zero terminal layer.
#[derive(Debug, Clone)]
pub struct ArrlcState {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub visit_counts: Array3<u64>,
    pub transition_counts: Array4<u64>,
    pub reward_means: Array3<f64>,
    pub empirical_transitions: Array4<f64>,
    pub q_bar: Array3<f64>,
    pub q_under: Array3<f64>,
    pub v_bar: Array2<f64>,
    pub v_under: Array2<f64>,
    pub pi_bar: DeterministicPolicy,
    pub pi_under: DeterministicPolicy,
    /// Narrowest certificate width seen so far.
    pub delta: f64,
    /// Policy of the episode that produced `delta`; defined from episode one
    /// so the learner always has an output.
    pub pi_out: DeterministicPolicy,
    pub episode: usize,
}

impl ArrlcState {
    /// Optimistic values start at the remaining horizon, pessimistic values
    /// at zero, and the certificate tracker at the full horizon.
    pub fn new(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        let mut q_bar = Array3::<f64>::zeros((horizon, num_states, num_actions));
        let mut v_bar = Array2::<f64>::zeros((horizon + 1, num_states));
        for hh in 0..horizon {
            let remaining = (horizon - hh) as f64;
            q_bar.slice_mut(ndarray::s![hh, .., ..]).fill(remaining);
            v_bar.slice_mut(ndarray::s![hh, ..]).fill(remaining);
        }
        ArrlcState {
            num_states,
            num_actions,
            horizon,
            visit_counts: Array3::zeros((horizon, num_states, num_actions)),
            transition_counts: Array4::zeros((horizon, num_states, num_actions, num_states)),
            reward_means: Array3::zeros((horizon, num_states, num_actions)),
            empirical_transitions: Array4::zeros((horizon, num_states, num_actions, num_states)),
            q_bar,
            q_under: Array3::zeros((horizon, num_states, num_actions)),
            v_bar,
            v_under: Array2::zeros((horizon + 1, num_states)),
            pi_bar: DeterministicPolicy::constant(horizon, num_states, 0),
            pi_under: DeterministicPolicy::constant(horizon, num_states, 0),
            delta: horizon as f64,
            pi_out: DeterministicPolicy::constant(horizon, num_states, 0),
            episode: 0,
        }
    }

    /// Behavior draw: the optimistic action with probability `1-rho`, the
    /// pessimistic action with probability `rho`.
    pub fn act(&self, h: usize, s: usize, rho: f64, rng: &mut impl Rng) -> (usize, bool) {
        sample_mixture_action(
            self.pi_bar.action(h, s),
            self.pi_under.action(h, s),
            rho,
            rng,
        )
    }

    /// Folds one transition into the empirical model: incremental reward
    /// mean and count-ratio transition row.
    pub fn observe(
        &mut self,
        h: usize,
        s: usize,
        a: usize,
        reward: f64,
        s_next: usize,
    ) -> Result<(), MdpError> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(MdpError::RewardNotNormalized(reward));
        }
        self.visit_counts[[h, s, a]] += 1;
        self.transition_counts[[h, s, a, s_next]] += 1;
        let n = self.visit_counts[[h, s, a]] as f64;
        let mean = self.reward_means[[h, s, a]];
        self.reward_means[[h, s, a]] = mean + (reward - mean) / n;
        for ss_next in 0..self.num_states {
            self.empirical_transitions[[h, s, a, ss_next]] =
                self.transition_counts[[h, s, a, ss_next]] as f64 / n;
        }
        Ok(())
    }

    /// Exploration bonus at a visited pair, before any scaling.
    pub fn bonus_theta(&self, h: usize, s: usize, a: usize, iota: f64) -> f64 {
        let n = self.visit_counts[[h, s, a]];
        assert!(n > 0, "bonus requested for an unvisited pair");
        bonus_theta(
            self.empirical_transitions.slice(ndarray::s![h, s, a, ..]),
            self.v_bar.slice(ndarray::s![h + 1, ..]),
            self.v_under.slice(ndarray::s![h + 1, ..]),
            self.reward_means[[h, s, a]],
            n,
            iota,
            self.horizon,
        )
    }

    /// Backward planning pass. Visited pairs get bonus-augmented clipped
    /// value updates; unvisited pairs keep their initialization. Policies and
    /// state values are refreshed at every state from the full action range.
    pub fn plan(&mut self, config: &LearnerConfig) {
        let rho = config.rho;
        for hh in (0..self.horizon).rev() {
            let remaining = (self.horizon - hh) as f64;
            for ss in 0..self.num_states {
                for aa in 0..self.num_actions {
                    let n = self.visit_counts[[hh, ss, aa]];
                    if n == 0 {
                        continue;
                    }
                    let theta = config.bonus_scale * self.bonus_theta(hh, ss, aa, config.iota);
                    let p_row = self
                        .empirical_transitions
                        .slice(ndarray::s![hh, ss, aa, ..]);
                    let expected_bar = dot(p_row, self.v_bar.slice(ndarray::s![hh + 1, ..]));
                    let expected_under = dot(p_row, self.v_under.slice(ndarray::s![hh + 1, ..]));
                    let r_hat = self.reward_means[[hh, ss, aa]];
                    self.q_bar[[hh, ss, aa]] = (r_hat + expected_bar + theta).min(remaining);
                    self.q_under[[hh, ss, aa]] = (r_hat + expected_under - theta).max(0.0);
                }
                let bar_row = self.q_bar.slice(ndarray::s![hh, ss, ..]);
                let under_row = self.q_under.slice(ndarray::s![hh, ss, ..]);
                let best = argmax_lowest(bar_row);
                let worst = argmin_lowest(under_row);
                self.pi_bar.actions[[hh, ss]] = best;
                self.pi_under.actions[[hh, ss]] = worst;
                self.v_bar[[hh, ss]] =
                    (1.0 - rho) * bar_row[best] + rho * self.q_bar[[hh, ss, worst]];
                self.v_under[[hh, ss]] = (1.0 - rho) * under_row[best] + rho * under_row[worst];

                debug_assert!(self.v_under[[hh, ss]] <= self.v_bar[[hh, ss]] + 1e-12);
                debug_assert!(self.v_bar[[hh, ss]] <= remaining + 1e-12);
                debug_assert!(self.v_under[[hh, ss]] >= -1e-12);
            }
        }
    }

    /// Emits this episode's certificate and keeps the narrowest one as the
    /// output policy. Must run before [`ArrlcState::plan`] so the interval
    /// matches the policy that was just executed.
    pub fn certificate_update(&mut self, s1: usize) -> Certificate {
        self.episode += 1;
        let lower = self.v_under[[0, s1]];
        let upper = self.v_bar[[0, s1]];
        let epsilon = upper - lower;
        if epsilon < self.delta {
            self.delta = epsilon;
            self.pi_out = self.pi_bar.clone();
        }
        Certificate {
            lower,
            upper,
            epsilon,
            episode: self.episode,
        }
    }
}

fn dot(p: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    p.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

/// The four-term exploration bonus: empirical variance of the midpoint of
/// the value pair, empirical reward concentration, the certificate width
/// carried one step, and a `1/n` correction.
pub fn bonus_theta(
    p_row: ArrayView1<f64>,
    v_bar_next: ArrayView1<f64>,
    v_under_next: ArrayView1<f64>,
    r_hat: f64,
    n: u64,
    iota: f64,
    horizon: usize,
) -> f64 {
    let n = n as f64;
    let h = horizon as f64;
    let midpoint: Vec<f64> = v_bar_next
        .iter()
        .zip(v_under_next.iter())
        .map(|(b, u)| 0.5 * (b + u))
        .collect();
    let variance = apply_v_operator(p_row, ArrayView1::from(&midpoint));
    let width: f64 = p_row
        .iter()
        .zip(v_bar_next.iter().zip(v_under_next.iter()))
        .map(|(p, (b, u))| p * (b - u))
        .sum();
    (2.0 * variance * iota / n).sqrt()
        + (2.0 * r_hat * iota / n).sqrt()
        + width / h
        + (24.0 * h * h + 7.0 * h + 7.0) * iota / (3.0 * n)
}

/// Everything the caller can see about one finished episode.
pub struct EpisodeView<'a> {
    pub certificate: Certificate,
    /// Policy that produced the episode's behavior (the optimistic side of
    /// the mixture).
    pub behavior_policy: &'a DeterministicPolicy,
    pub trajectory: &'a Trajectory,
    /// Narrowest certificate width so far.
    pub delta: f64,
}

/// Full training loop with a per-episode observer; the observer runs after
/// the certificate is settled but sees the pre-planning tables, matching the
/// order of the per-episode phases.
pub fn arrlc_run_with(
    mdp: &TabularMdp,
    config: &LearnerConfig,
    rng: &mut impl Rng,
    mut on_episode: impl FnMut(EpisodeView),
) -> (DeterministicPolicy, ArrlcState) {
    let mut state = ArrlcState::new(mdp.num_states, mdp.num_actions, mdp.horizon);
    for _ in 0..config.num_episodes {
        let behavior_policy = state.pi_bar.clone();
        let mut steps = Vec::with_capacity(mdp.horizon);
        let mut ss = mdp.initial_state;
        for hh in 0..mdp.horizon {
            let (aa, _) = state.act(hh, ss, config.rho, rng);
            let (reward, ss_next) = mdp.sample_step(hh, ss, aa, rng);
            state
                .observe(hh, ss, aa, reward, ss_next)
                .expect("environment rewards are normalized");
            steps.push(TrajectoryStep {
                step: hh,
                state: ss,
                executed_action: aa,
                realized_reward: reward,
                next_state: ss_next,
            });
            ss = ss_next;
        }
        let trajectory = Trajectory::from_steps(steps);
        let certificate = state.certificate_update(mdp.initial_state);
        on_episode(EpisodeView {
            certificate,
            behavior_policy: &behavior_policy,
            trajectory: &trajectory,
            delta: state.delta,
        });
        state.plan(config);
    }
    (state.pi_out.clone(), state)
}

/// Collected result of [`arrlc_run_with`].
pub struct ArrlcRun {
    pub pi_out: DeterministicPolicy,
    pub certificates: Vec<Certificate>,
    /// Behavior policy of each episode, aligned with `certificates`.
    pub policies: Vec<DeterministicPolicy>,
    pub trajectories: Vec<Trajectory>,
}

pub fn arrlc_run(mdp: &TabularMdp, config: &LearnerConfig, rng: &mut impl Rng) -> ArrlcRun {
    let mut certificates = Vec::with_capacity(config.num_episodes);
    let mut policies = Vec::with_capacity(config.num_episodes);
    let mut trajectories = Vec::with_capacity(config.num_episodes);
    let (pi_out, _) = arrlc_run_with(mdp, config, rng, |view| {
        certificates.push(view.certificate);
        policies.push(view.behavior_policy.clone());
        trajectories.push(view.trajectory.clone());
    });
    ArrlcRun {
        pi_out,
        certificates,
        policies,
        trajectories,
    }
}
