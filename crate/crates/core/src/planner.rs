//! Exact solutions of the action-robust control problem.
//!
//! The robust Bellman recursions run backward over steps: action values are
//! `Q[h](s,a) = R[h](s,a) + P[h]V[h+1](s,a)` and state values mix the
//! maximizing and minimizing actions with weights `1-rho` and `rho`. The
//! brute-force enumerators exist purely as independent cross-checks of the
//! dynamic program and of the max-min/min-max duality.

use crate::mdp::{
    argmax_lowest, argmin_lowest, evaluate_policy_pair_exact, DeterministicPolicy, TabularMdp,
};
use ndarray::{Array2, Array3};
use thiserror::Error;

/// Maximum number of deterministic policies the enumerators will sweep.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("instance too large to enumerate: A^(S*H) = {policies} exceeds {limit}")]
    InstanceTooLarge { policies: u128, limit: u128 },
}

/// Fixed point of the robust Bellman optimality recursion, together with the
/// optimal robust policy and the optimal adversary.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustSolution {
    /// `[H+1, S]`, terminal layer zero.
    pub v_star: Array2<f64>,
    /// `[H, S, A]`.
    pub q_star: Array3<f64>,
    pub pi_star: DeterministicPolicy,
    pub pi_minus: DeterministicPolicy,
    pub rho: f64,
}

impl RobustSolution {
    pub fn initial_value(&self, mdp: &TabularMdp) -> f64 {
        self.v_star[[0, mdp.initial_state]]
    }
}

/// Worst-case value tables of a fixed agent policy, with the adversary that
/// attains them.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustPolicyValue {
    /// `[H+1, S]`, terminal layer zero.
    pub v_pi: Array2<f64>,
    /// `[H, S, A]`.
    pub q_pi: Array3<f64>,
    pub best_response_adversary: DeterministicPolicy,
}

impl RobustPolicyValue {
    pub fn initial_value(&self, mdp: &TabularMdp) -> f64 {
        self.v_pi[[0, mdp.initial_state]]
    }
}

/// Solves the robust control problem exactly by backward induction. Ties in
/// the argmax/argmin break toward the lowest action index.
pub fn solve_robust_optimal(mdp: &TabularMdp, rho: f64) -> RobustSolution {
    assert!((0.0..=1.0).contains(&rho));
    let (h_max, s_max, a_max) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut v_star = Array2::<f64>::zeros((h_max + 1, s_max));
    let mut q_star = Array3::<f64>::zeros((h_max, s_max, a_max));
    let mut pi_star = Array2::<usize>::zeros((h_max, s_max));
    let mut pi_minus = Array2::<usize>::zeros((h_max, s_max));

    for hh in (0..h_max).rev() {
        for ss in 0..s_max {
            for aa in 0..a_max {
                let mut expected_next = 0.0;
                for ss_next in 0..s_max {
                    expected_next +=
                        mdp.transitions[[hh, ss, aa, ss_next]] * v_star[[hh + 1, ss_next]];
                }
                q_star[[hh, ss, aa]] = mdp.rewards[[hh, ss, aa]] + expected_next;
            }
            let row = q_star.slice(ndarray::s![hh, ss, ..]);
            let best = argmax_lowest(row);
            let worst = argmin_lowest(row);
            pi_star[[hh, ss]] = best;
            pi_minus[[hh, ss]] = worst;
            v_star[[hh, ss]] = (1.0 - rho) * row[best] + rho * row[worst];
        }
    }
    RobustSolution {
        v_star,
        q_star,
        pi_star: DeterministicPolicy::new(pi_star),
        pi_minus: DeterministicPolicy::new(pi_minus),
        rho,
    }
}

/// Worst-case evaluation of a fixed agent policy: the same backward
/// recursion with the agent action pinned and the adversary minimizing.
pub fn evaluate_robust_policy(
    mdp: &TabularMdp,
    pi: &DeterministicPolicy,
    rho: f64,
) -> RobustPolicyValue {
    assert!((0.0..=1.0).contains(&rho));
    assert!(pi.is_valid_for(mdp), "policy does not match MDP dimensions");
    let (h_max, s_max, a_max) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut v_pi = Array2::<f64>::zeros((h_max + 1, s_max));
    let mut q_pi = Array3::<f64>::zeros((h_max, s_max, a_max));
    let mut adversary = Array2::<usize>::zeros((h_max, s_max));

    for hh in (0..h_max).rev() {
        for ss in 0..s_max {
            for aa in 0..a_max {
                let mut expected_next = 0.0;
                for ss_next in 0..s_max {
                    expected_next +=
                        mdp.transitions[[hh, ss, aa, ss_next]] * v_pi[[hh + 1, ss_next]];
                }
                q_pi[[hh, ss, aa]] = mdp.rewards[[hh, ss, aa]] + expected_next;
            }
            let row = q_pi.slice(ndarray::s![hh, ss, ..]);
            let worst = argmin_lowest(row);
            adversary[[hh, ss]] = worst;
            v_pi[[hh, ss]] = (1.0 - rho) * row[pi.action(hh, ss)] + rho * row[worst];
        }
    }
    RobustPolicyValue {
        v_pi,
        q_pi,
        best_response_adversary: DeterministicPolicy::new(adversary),
    }
}

/// Number of deterministic policies, or an error if it exceeds the
/// enumeration guard.
fn policy_count(mdp: &TabularMdp) -> Result<u128, PlannerError> {
    let entries = (mdp.num_states * mdp.horizon) as u32;
    let count = (mdp.num_actions as u128)
        .checked_pow(entries)
        .filter(|&c| c <= ENUMERATION_LIMIT)
        .ok_or(PlannerError::InstanceTooLarge {
            policies: (mdp.num_actions as u128)
                .checked_pow(entries)
                .unwrap_or(u128::MAX),
            limit: ENUMERATION_LIMIT,
        })?;
    Ok(count)
}

/// Decodes a policy index as base-A digits over the `(h, s)` table.
fn policy_from_index(mut index: u128, mdp: &TabularMdp) -> DeterministicPolicy {
    let mut actions = Array2::<usize>::zeros((mdp.horizon, mdp.num_states));
    for hh in 0..mdp.horizon {
        for ss in 0..mdp.num_states {
            actions[[hh, ss]] = (index % mdp.num_actions as u128) as usize;
            index /= mdp.num_actions as u128;
        }
    }
    DeterministicPolicy::new(actions)
}

/// Max-min value at the initial state by exhaustive enumeration of agent
/// policies, with the inner minimization solved by the best-response
/// recursion. Exists to certify [`solve_robust_optimal`].
pub fn brute_force_minimax(
    mdp: &TabularMdp,
    rho: f64,
) -> Result<(f64, DeterministicPolicy), PlannerError> {
    let count = policy_count(mdp)?;
    let mut best_value = f64::NEG_INFINITY;
    let mut best_policy = None;
    for index in 0..count {
        let pi = policy_from_index(index, mdp);
        let value = evaluate_robust_policy(mdp, &pi, rho).initial_value(mdp);
        if value > best_value {
            best_value = value;
            best_policy = Some(pi);
        }
    }
    Ok((best_value, best_policy.expect("at least one policy")))
}

/// Fully enumerated variant: both the agent and the adversary are swept, and
/// every pair goes through the exact pair evaluation. Quadratically slower;
/// kept as a secondary cross-check for the smallest instances.
pub fn brute_force_minimax_enumerated(
    mdp: &TabularMdp,
    rho: f64,
) -> Result<(f64, DeterministicPolicy), PlannerError> {
    let count = policy_count(mdp)?;
    let mut best_value = f64::NEG_INFINITY;
    let mut best_policy = None;
    for agent_index in 0..count {
        let agent = policy_from_index(agent_index, mdp);
        let mut worst = f64::INFINITY;
        for adv_index in 0..count {
            let adversary = policy_from_index(adv_index, mdp);
            let value = evaluate_policy_pair_exact(mdp, &agent, &adversary, rho).initial_value(mdp);
            worst = worst.min(value);
        }
        if worst > best_value {
            best_value = worst;
            best_policy = Some(agent);
        }
    }
    Ok((best_value, best_policy.expect("at least one policy")))
}

/// Best-response value of the agent against a fixed adversary policy.
fn best_response_agent_value(mdp: &TabularMdp, adversary: &DeterministicPolicy, rho: f64) -> f64 {
    let (h_max, s_max, a_max) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut c = Array2::<f64>::zeros((h_max + 1, s_max));
    for hh in (0..h_max).rev() {
        for ss in 0..s_max {
            let mut d_row = vec![0.0; a_max];
            for (aa, d) in d_row.iter_mut().enumerate() {
                let mut expected_next = 0.0;
                for ss_next in 0..s_max {
                    expected_next += mdp.transitions[[hh, ss, aa, ss_next]] * c[[hh + 1, ss_next]];
                }
                *d = mdp.rewards[[hh, ss, aa]] + expected_next;
            }
            let best = d_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            c[[hh, ss]] = (1.0 - rho) * best + rho * d_row[adversary.action(hh, ss)];
        }
    }
    c[[0, mdp.initial_state]]
}

/// Max-min and min-max values of the control problem at the initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityReport {
    pub max_min: f64,
    pub min_max: f64,
    pub gap: f64,
}

/// Computes both orders of optimization by enumeration: agents outer for
/// max-min, adversaries outer for min-max. The gap is zero in exact
/// arithmetic.
pub fn verify_perfect_duality(mdp: &TabularMdp, rho: f64) -> Result<DualityReport, PlannerError> {
    let (max_min, _) = brute_force_minimax(mdp, rho)?;
    let count = policy_count(mdp)?;
    let mut min_max = f64::INFINITY;
    for index in 0..count {
        let adversary = policy_from_index(index, mdp);
        min_max = min_max.min(best_response_agent_value(mdp, &adversary, rho));
    }
    Ok(DualityReport {
        max_min,
        min_max,
        gap: (max_min - min_max).abs(),
    })
}
