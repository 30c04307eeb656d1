//! Model-free action-robust Q-learning with Hoeffding bonuses.
//!
//! Q values update only along the sampled trajectory through the
//! `(1-alpha_t, alpha_t)` mixture rule, with an optimism bonus `+b_t` on the
//! upper table and `-b_t` on the lower one. State values update monotonically
//! (`min` for the upper, `max` for the lower), and the output policy at a
//! state only moves when the new candidate does not lower the certified
//! lower bound there.

use crate::arrlc::{Certificate, LearnerConfig};
use crate::mdp::{
    argmax_lowest, argmin_lowest, sample_mixture_action, DeterministicPolicy, MdpError, TabularMdp,
    Trajectory, TrajectoryStep,
};
use ndarray::{Array2, Array3};
use rand::Rng;

/// Step size `(H+1)/(H+t)`; `t` counts visits of the updated pair.
pub fn learning_rate(t: u64, horizon: usize) -> f64 {
    assert!(t >= 1, "learning rate needs a positive visit count");
    (horizon as f64 + 1.0) / (horizon as f64 + t as f64)
}

/// Optimism bonus `sqrt(H^3 * iota / t)`.
pub fn hoeffding_bonus(t: u64, horizon: usize, iota: f64) -> f64 {
    assert!(t >= 1);
    let h = horizon as f64;
    (h * h * h * iota / t as f64).sqrt()
}

/// Effective weights `alpha_t^i` of the `i`-th of `t` mixture updates
/// (index 0 is the weight of the initialization). Computed by the update
/// recursion itself: every new step scales all previous weights by
/// `1 - alpha_t`.
pub fn decay_weights(t: u64, horizon: usize) -> Vec<f64> {
    let mut weights = vec![1.0];
    for step in 1..=t {
        let alpha = learning_rate(step, horizon);
        for w in weights.iter_mut() {
            *w *= 1.0 - alpha;
        }
        weights.push(alpha);
    }
    weights
}

#[derive(Debug, Clone, Copy)]
struct PendingFreeze {
    h: usize,
    s: usize,
    previous_agent_action: usize,
}

/// Mutable learner state; carries its [`LearnerConfig`] for the whole run.
#[derive(Debug, Clone)]
pub struct UcbhState {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub config: LearnerConfig,
    pub visit_counts: Array3<u64>,
    pub q_bar: Array3<f64>,
    pub q_under: Array3<f64>,
    pub v_bar: Array2<f64>,
    pub v_under: Array2<f64>,
    /// Output-policy candidates for the next episode.
    pub pi_bar: DeterministicPolicy,
    pub pi_under: DeterministicPolicy,
    pub episode: usize,
    pending_freeze: Option<PendingFreeze>,
}

impl UcbhState {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        config: LearnerConfig,
    ) -> Self {
        let mut q_bar = Array3::<f64>::zeros((horizon, num_states, num_actions));
        let mut v_bar = Array2::<f64>::zeros((horizon + 1, num_states));
        for hh in 0..horizon {
            let remaining = (horizon - hh) as f64;
            q_bar.slice_mut(ndarray::s![hh, .., ..]).fill(remaining);
            v_bar.slice_mut(ndarray::s![hh, ..]).fill(remaining);
        }
        UcbhState {
            num_states,
            num_actions,
            horizon,
            config,
            visit_counts: Array3::zeros((horizon, num_states, num_actions)),
            q_bar,
            q_under: Array3::zeros((horizon, num_states, num_actions)),
            v_bar,
            v_under: Array2::zeros((horizon + 1, num_states)),
            pi_bar: DeterministicPolicy::constant(horizon, num_states, 0),
            pi_under: DeterministicPolicy::constant(horizon, num_states, 0),
            episode: 0,
            pending_freeze: None,
        }
    }

    /// Behavior draw straight from the current Q tables: the argmax of the
    /// upper table with probability `1-rho`, the argmin of the lower table
    /// with probability `rho`.
    pub fn act(&self, h: usize, s: usize, rng: &mut impl Rng) -> (usize, bool) {
        let optimistic = argmax_lowest(self.q_bar.slice(ndarray::s![h, s, ..]));
        let pessimistic = argmin_lowest(self.q_under.slice(ndarray::s![h, s, ..]));
        sample_mixture_action(optimistic, pessimistic, self.config.rho, rng)
    }

    /// Mixture update of both Q tables at the visited pair, followed by the
    /// monotone state-value updates and the candidate policy refresh. The
    /// upper Q is clamped to the remaining horizon and the lower Q to zero,
    /// keeping both tables inside the value range the bonuses assume.
    pub fn step_update(
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
        let t = self.visit_counts[[h, s, a]];
        let alpha = learning_rate(t, self.horizon);
        let bonus = self.config.bonus_scale * hoeffding_bonus(t, self.horizon, self.config.iota);
        let remaining = (self.horizon - h) as f64;

        let target_bar = reward + self.v_bar[[h + 1, s_next]] + bonus;
        let target_under = reward + self.v_under[[h + 1, s_next]] - bonus;
        self.q_bar[[h, s, a]] =
            ((1.0 - alpha) * self.q_bar[[h, s, a]] + alpha * target_bar).min(remaining);
        self.q_under[[h, s, a]] =
            ((1.0 - alpha) * self.q_under[[h, s, a]] + alpha * target_under).max(0.0);

        let previous_agent_action = self.pi_bar.action(h, s);
        let candidate_bar = argmax_lowest(self.q_bar.slice(ndarray::s![h, s, ..]));
        let candidate_under = argmin_lowest(self.q_under.slice(ndarray::s![h, s, ..]));
        self.pi_bar.actions[[h, s]] = candidate_bar;
        self.pi_under.actions[[h, s]] = candidate_under;

        let old_v_bar = self.v_bar[[h, s]];
        let old_v_under = self.v_under[[h, s]];
        self.v_bar[[h, s]] = old_v_bar.min(self.mixture_value(&self.q_bar, h, s));
        self.v_under[[h, s]] = old_v_under.max(self.mixture_value(&self.q_under, h, s));
        debug_assert!(self.v_bar[[h, s]] <= old_v_bar);
        debug_assert!(self.v_under[[h, s]] >= old_v_under);

        self.pending_freeze = Some(PendingFreeze {
            h,
            s,
            previous_agent_action,
        });
        Ok(())
    }

    /// `(1-rho) q(s, pi_bar) + rho q(s, pi_under)` for the current candidates.
    fn mixture_value(&self, q: &Array3<f64>, h: usize, s: usize) -> f64 {
        let rho = self.config.rho;
        (1.0 - rho) * q[[h, s, self.pi_bar.action(h, s)]]
            + rho * q[[h, s, self.pi_under.action(h, s)]]
    }

    /// Output-policy freeze: when the freshly updated candidate pair
    /// certifies a strictly lower value than the lower bound already held at
    /// this state, the agent's candidate action reverts to its previous
    /// value.
    pub fn policy_freeze(&mut self, h: usize, s: usize) {
        let pending = self
            .pending_freeze
            .take()
            .expect("policy_freeze must follow step_update");
        assert!(pending.h == h && pending.s == s, "freeze target mismatch");
        let lower_candidate = self.mixture_value(&self.q_under, h, s);
        if self.v_under[[h, s]] > lower_candidate {
            self.pi_bar.actions[[h, s]] = pending.previous_agent_action;
        }
    }
}

/// Per-episode view handed to the run observer.
pub struct UcbhEpisodeView<'a> {
    pub certificate: Certificate,
    /// Output-policy snapshot after the episode's updates and freezes.
    pub output_policy: &'a DeterministicPolicy,
    pub trajectory: &'a Trajectory,
}

/// Full training loop; returns the final output policy.
pub fn ucbh_run_with(
    mdp: &TabularMdp,
    config: &LearnerConfig,
    rng: &mut impl Rng,
    mut on_episode: impl FnMut(UcbhEpisodeView),
) -> (DeterministicPolicy, UcbhState) {
    let mut state = UcbhState::new(mdp.num_states, mdp.num_actions, mdp.horizon, *config);
    for _ in 0..config.num_episodes {
        state.episode += 1;
        let mut steps = Vec::with_capacity(mdp.horizon);
        let mut ss = mdp.initial_state;
        for hh in 0..mdp.horizon {
            let (aa, _) = state.act(hh, ss, rng);
            let (reward, ss_next) = mdp.sample_step(hh, ss, aa, rng);
            state
                .step_update(hh, ss, aa, reward, ss_next)
                .expect("environment rewards are normalized");
            state.policy_freeze(hh, ss);
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
        let lower = state.v_under[[0, mdp.initial_state]];
        let upper = state.v_bar[[0, mdp.initial_state]];
        let certificate = Certificate {
            lower,
            upper,
            epsilon: upper - lower,
            episode: state.episode,
        };
        on_episode(UcbhEpisodeView {
            certificate,
            output_policy: &state.pi_bar,
            trajectory: &trajectory,
        });
    }
    (state.pi_bar.clone(), state)
}

/// Collected result of [`ucbh_run_with`].
pub struct UcbhRun {
    pub pi_out: DeterministicPolicy,
    pub certificates: Vec<Certificate>,
    /// Output-policy snapshot per episode, aligned with `certificates`.
    pub policies: Vec<DeterministicPolicy>,
    pub trajectories: Vec<Trajectory>,
}

pub fn ucbh_run(mdp: &TabularMdp, config: &LearnerConfig, rng: &mut impl Rng) -> UcbhRun {
    let mut certificates = Vec::with_capacity(config.num_episodes);
    let mut policies = Vec::with_capacity(config.num_episodes);
    let mut trajectories = Vec::with_capacity(config.num_episodes);
    let (pi_out, _) = ucbh_run_with(mdp, config, rng, |view| {
        certificates.push(view.certificate);
        policies.push(view.output_policy.clone());
        trajectories.push(view.trajectory.clone());
    });
    UcbhRun {
        pi_out,
        certificates,
        policies,
        trajectories,
    }
}
