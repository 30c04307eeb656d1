//! Perturbed-execution evaluation and oracle instrumentation.
//!
//! The test protocol runs a learned policy in the environment while an
//! independent perturbation stream replaces the chosen action with
//! probability `p`, either by a uniformly random action or by a fixed
//! adversarial policy. Regret instrumentation compares per-episode policies
//! against the exact robust oracle.

use crate::arrlc::Certificate;
use crate::mdp::{DeterministicPolicy, RewardScale, TabularMdp};
use crate::planner::{evaluate_robust_policy, solve_robust_optimal, RobustSolution};
use crate::rng::indexed_stream;
use rand::Rng;
use std::collections::HashMap;

/// Test-time action replacement mode.
#[derive(Debug, Clone)]
pub enum PerturbKind {
    None,
    /// Uniform over all actions, including the policy's own.
    UniformRandom,
    FixedPolicy(DeterministicPolicy),
}

impl PerturbKind {
    pub fn label(&self) -> &'static str {
        match self {
            PerturbKind::None => "none",
            PerturbKind::UniformRandom => "random",
            PerturbKind::FixedPolicy(_) => "fixed",
        }
    }
}

/// Perturbation protocol: `kind` decides the replacement action, `p` how
/// often it fires.
#[derive(Debug, Clone)]
pub struct PerturbationSpec {
    pub kind: PerturbKind,
    pub p: f64,
}

impl PerturbationSpec {
    pub fn none() -> Self {
        PerturbationSpec {
            kind: PerturbKind::None,
            p: 0.0,
        }
    }

    pub fn new(kind: PerturbKind, p: f64) -> Self {
        assert!((0.0..=1.0).contains(&p));
        PerturbationSpec { kind, p }
    }
}

/// Monte Carlo estimate of a policy's perturbed return. Raw-scale numbers
/// are exact affine images of the normalized ones.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub mean_return_raw: f64,
    pub mean_return_normalized: f64,
    /// Standard error of the raw per-trajectory returns.
    pub std_error: f64,
    pub n_trajectories: usize,
    /// Raw-scale return of every trajectory.
    pub per_trajectory_returns: Vec<f64>,
}

/// Rolls out `n_trajectories` episodes of `policy` under the perturbation
/// protocol. Environment noise and perturbation draws use separate streams
/// derived per trajectory, so reports are reproducible and trajectories are
/// order-independent.
pub fn rollout_perturbed(
    mdp: &TabularMdp,
    policy: &DeterministicPolicy,
    spec: &PerturbationSpec,
    n_trajectories: usize,
    scale: Option<&RewardScale>,
    rng: &mut impl Rng,
) -> EvaluationReport {
    assert!(n_trajectories >= 1);
    assert!(
        policy.is_valid_for(mdp),
        "policy does not match MDP dimensions"
    );
    if let PerturbKind::FixedPolicy(adversary) = &spec.kind {
        assert!(
            adversary.is_valid_for(mdp),
            "adversary does not match MDP dimensions"
        );
    }
    let identity = RewardScale::identity();
    let scale = scale.unwrap_or(&identity);
    let base_seed = rng.gen::<u64>();

    let mut normalized_returns = Vec::with_capacity(n_trajectories);
    for traj in 0..n_trajectories {
        let mut env_rng = indexed_stream(base_seed, "rollout-env", traj as u64);
        let mut perturb_rng = indexed_stream(base_seed, "rollout-perturb", traj as u64);
        let mut ss = mdp.initial_state;
        let mut total = 0.0;
        for hh in 0..mdp.horizon {
            let mut aa = policy.action(hh, ss);
            match &spec.kind {
                PerturbKind::None => {}
                PerturbKind::UniformRandom => {
                    if perturb_rng.gen::<f64>() < spec.p {
                        aa = perturb_rng.gen_range(0..mdp.num_actions);
                    }
                }
                PerturbKind::FixedPolicy(adversary) => {
                    if perturb_rng.gen::<f64>() < spec.p {
                        aa = adversary.action(hh, ss);
                    }
                }
            }
            let (reward, ss_next) = mdp.sample_step(hh, ss, aa, &mut env_rng);
            total += reward;
            ss = ss_next;
        }
        normalized_returns.push(total);
    }

    let n = n_trajectories as f64;
    let mean_norm = normalized_returns.iter().sum::<f64>() / n;
    let per_trajectory_returns: Vec<f64> = normalized_returns
        .iter()
        .map(|&r| scale.return_to_raw(r, mdp.horizon))
        .collect();
    let mean_raw = per_trajectory_returns.iter().sum::<f64>() / n;
    let std_error = if n_trajectories > 1 {
        let var = per_trajectory_returns
            .iter()
            .map(|r| (r - mean_raw) * (r - mean_raw))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };

    EvaluationReport {
        mean_return_raw: mean_raw,
        mean_return_normalized: mean_norm,
        std_error,
        n_trajectories,
        per_trajectory_returns,
    }
}

/// One episode's oracle comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretRecord {
    pub episode: usize,
    pub v_star: f64,
    pub v_pi_bar: f64,
    pub increment: f64,
    pub cumulative: f64,
}

/// Streaming regret instrumentation against the oracle. Exact policy
/// evaluation runs every episode on small instances and every tenth episode
/// above [`RegretAccumulator::THINNING_THRESHOLD`] table entries (carrying
/// the last value forward); repeated policies are cached either way.
pub struct RegretAccumulator {
    solution: RobustSolution,
    mdp: TabularMdp,
    rho: f64,
    evaluate_every: usize,
    cache: HashMap<Vec<usize>, f64>,
    last_value: f64,
    cumulative: f64,
    episode: usize,
}

impl RegretAccumulator {
    pub const THINNING_THRESHOLD: usize = 10_000;

    pub fn new(mdp: &TabularMdp, rho: f64) -> Self {
        let solution = solve_robust_optimal(mdp, rho);
        let table_entries = mdp.num_states * mdp.num_actions * mdp.horizon;
        let evaluate_every = if table_entries <= Self::THINNING_THRESHOLD {
            1
        } else {
            10
        };
        RegretAccumulator {
            last_value: solution.initial_value(mdp),
            solution,
            mdp: mdp.clone(),
            rho,
            evaluate_every,
            cache: HashMap::new(),
            cumulative: 0.0,
            episode: 0,
        }
    }

    pub fn v_star(&self) -> f64 {
        self.solution.initial_value(&self.mdp)
    }

    /// Folds in the next episode's policy and returns its record.
    pub fn observe(&mut self, policy: &DeterministicPolicy) -> RegretRecord {
        self.episode += 1;
        if (self.episode - 1).is_multiple_of(self.evaluate_every) {
            let key: Vec<usize> = policy.actions.iter().copied().collect();
            let mdp = &self.mdp;
            let rho = self.rho;
            self.last_value = *self
                .cache
                .entry(key)
                .or_insert_with(|| evaluate_robust_policy(mdp, policy, rho).initial_value(mdp));
        }
        let v_star = self.v_star();
        let increment = v_star - self.last_value;
        self.cumulative += increment;
        RegretRecord {
            episode: self.episode,
            v_star,
            v_pi_bar: self.last_value,
            increment,
            cumulative: self.cumulative,
        }
    }

    pub fn cumulative(&self) -> f64 {
        self.cumulative
    }
}

/// Regret curve of a recorded run.
pub fn compute_regret_curve(
    mdp: &TabularMdp,
    rho: f64,
    per_episode_policies: &[DeterministicPolicy],
) -> Vec<RegretRecord> {
    let mut accumulator = RegretAccumulator::new(mdp, rho);
    per_episode_policies
        .iter()
        .map(|pi| accumulator.observe(pi))
        .collect()
}

/// Certificate audit outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichAudit {
    pub violations: usize,
    pub episodes: usize,
    pub fraction: f64,
}

/// Counts episodes whose certificate fails to bracket the pair of oracle
/// values: the lower end must not exceed the policy's robust value and the
/// upper end must not fall below the optimal robust value.
pub fn sandwich_audit(
    mdp: &TabularMdp,
    rho: f64,
    certificates: &[Certificate],
    per_episode_policies: &[DeterministicPolicy],
) -> SandwichAudit {
    assert_eq!(certificates.len(), per_episode_policies.len());
    let v_star = solve_robust_optimal(mdp, rho).initial_value(mdp);
    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut violations = 0usize;
    for (certificate, policy) in certificates.iter().zip(per_episode_policies.iter()) {
        let key: Vec<usize> = policy.actions.iter().copied().collect();
        let v_pi = *cache
            .entry(key)
            .or_insert_with(|| evaluate_robust_policy(mdp, policy, rho).initial_value(mdp));
        if certificate.lower > v_pi + 1e-9 || certificate.upper < v_star - 1e-9 {
            violations += 1;
        }
    }
    let episodes = certificates.len();
    SandwichAudit {
        violations,
        episodes,
        fraction: if episodes == 0 {
            0.0
        } else {
            violations as f64 / episodes as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{build_cliff_walking, build_random_mdp};
    use crate::mdp::evaluate_policy_pair_exact;
    use crate::rng::stream;

    #[test]
    fn unperturbed_deterministic_rollout_matches_exact_evaluation() {
        let (mdp, scale) = build_cliff_walking(8);
        let policy = DeterministicPolicy::constant(8, mdp.num_states, crate::envs::ACTION_UP);
        let spec = PerturbationSpec::none();
        let report = rollout_perturbed(&mdp, &policy, &spec, 20, Some(&scale), &mut stream(1, "e"));
        let exact = evaluate_policy_pair_exact(&mdp, &policy, &policy, 0.0).initial_value(&mdp);
        assert!((report.mean_return_normalized - exact).abs() < 1e-12);
        assert!(report.std_error < 1e-12);
        let expected_raw = scale.return_to_raw(exact, 8);
        assert!((report.mean_return_raw - expected_raw).abs() < 1e-9);
    }

    #[test]
    fn fixed_policy_perturbation_matches_exact_mixture() {
        let mdp = build_random_mdp(3, 2, 3, 1.0, 61);
        let agent = DeterministicPolicy::constant(3, 3, 0);
        let adversary = DeterministicPolicy::constant(3, 3, 1);
        let rho = 0.3;
        let exact = evaluate_policy_pair_exact(&mdp, &agent, &adversary, rho).initial_value(&mdp);
        let spec = PerturbationSpec::new(PerturbKind::FixedPolicy(adversary), rho);
        let n = 100_000;
        let report = rollout_perturbed(&mdp, &agent, &spec, n, None, &mut stream(2, "mc"));
        let tol = 3.0 * report.std_error.max(1e-6);
        assert!(
            (report.mean_return_normalized - exact).abs() <= tol,
            "mc {} vs exact {exact} (3se {tol})",
            report.mean_return_normalized
        );
    }

    #[test]
    fn full_perturbation_ignores_the_agent_policy() {
        let mdp = build_random_mdp(3, 2, 2, 1.0, 71);
        let adversary = DeterministicPolicy::constant(2, 3, 1);
        let spec = PerturbationSpec::new(PerturbKind::FixedPolicy(adversary.clone()), 1.0);
        let agent_a = DeterministicPolicy::constant(2, 3, 0);
        let exact = evaluate_policy_pair_exact(&mdp, &agent_a, &adversary, 1.0).initial_value(&mdp);
        let report = rollout_perturbed(&mdp, &agent_a, &spec, 50_000, None, &mut stream(3, "p1"));
        let tol = 3.0 * report.std_error.max(1e-6);
        assert!((report.mean_return_normalized - exact).abs() <= tol);
    }

    #[test]
    fn reports_are_seed_deterministic() {
        let mdp = build_random_mdp(3, 2, 3, 1.0, 81);
        let policy = DeterministicPolicy::constant(3, 3, 0);
        let spec = PerturbationSpec::new(PerturbKind::UniformRandom, 0.25);
        let a = rollout_perturbed(&mdp, &policy, &spec, 500, None, &mut stream(4, "det"));
        let b = rollout_perturbed(&mdp, &policy, &spec, 500, None, &mut stream(4, "det"));
        assert_eq!(a.per_trajectory_returns, b.per_trajectory_returns);
    }

    #[test]
    fn report_statistics_are_consistent() {
        let mdp = build_random_mdp(3, 2, 3, 1.0, 91);
        let policy = DeterministicPolicy::constant(3, 3, 1);
        let spec = PerturbationSpec::new(PerturbKind::UniformRandom, 0.5);
        let report = rollout_perturbed(&mdp, &policy, &spec, 400, None, &mut stream(5, "stats"));
        assert_eq!(report.n_trajectories, 400);
        let mean: f64 =
            report.per_trajectory_returns.iter().sum::<f64>() / report.n_trajectories as f64;
        assert!((mean - report.mean_return_raw).abs() < 1e-12);
    }

    #[test]
    fn optimal_policies_have_zero_regret() {
        let mdp = build_random_mdp(3, 2, 3, 1.0, 101);
        let rho = 0.2;
        let pi_star = solve_robust_optimal(&mdp, rho).pi_star;
        let policies = vec![pi_star; 50];
        let curve = compute_regret_curve(&mdp, rho, &policies);
        assert!(curve.last().unwrap().cumulative.abs() < 1e-9);
        for record in &curve {
            assert!(record.increment >= -1e-9);
        }
    }

    #[test]
    fn constant_suboptimal_policies_have_linear_regret() {
        let mdp = build_random_mdp(3, 2, 3, 1.0, 111);
        let rho = 0.2;
        // Pick the worse of the two constant policies.
        let candidates = [
            DeterministicPolicy::constant(3, 3, 0),
            DeterministicPolicy::constant(3, 3, 1),
        ];
        let worst = candidates
            .iter()
            .min_by(|a, b| {
                let va = evaluate_robust_policy(&mdp, a, rho).initial_value(&mdp);
                let vb = evaluate_robust_policy(&mdp, b, rho).initial_value(&mdp);
                va.partial_cmp(&vb).unwrap()
            })
            .unwrap()
            .clone();
        let policies = vec![worst; 40];
        let curve = compute_regret_curve(&mdp, rho, &policies);
        let first = curve.first().unwrap().increment;
        assert!(first > 1e-6, "worst policy should have positive regret");
        let last = curve.last().unwrap();
        assert!((last.cumulative - 40.0 * first).abs() < 1e-9);
    }

    #[test]
    fn audit_accepts_exact_and_vacuous_certificates() {
        let mdp = build_random_mdp(3, 2, 3, 1.0, 121);
        let rho = 0.25;
        let solution = solve_robust_optimal(&mdp, rho);
        let v_star = solution.initial_value(&mdp);
        let pi = solution.pi_star.clone();
        let v_pi = evaluate_robust_policy(&mdp, &pi, rho).initial_value(&mdp);

        let exact_cert = Certificate {
            lower: v_pi,
            upper: v_star,
            epsilon: v_star - v_pi,
            episode: 1,
        };
        let vacuous_cert = Certificate {
            lower: 0.0,
            upper: mdp.horizon as f64,
            epsilon: mdp.horizon as f64,
            episode: 2,
        };
        let audit = sandwich_audit(
            &mdp,
            rho,
            &[exact_cert, vacuous_cert],
            &[pi.clone(), pi.clone()],
        );
        assert_eq!(audit.violations, 0);

        // A certificate whose lower end overshoots the policy value is a
        // violation.
        let broken = Certificate {
            lower: v_pi + 0.5,
            upper: v_star + 1.0,
            epsilon: 0.5,
            episode: 3,
        };
        let audit = sandwich_audit(&mdp, rho, &[broken], &[pi]);
        assert_eq!(audit.violations, 1);
        assert_eq!(audit.fraction, 1.0);
    }
}
