//! JSON file formats for MDPs, policies, and robust solutions.
//!
//! Tensors are serialized as nested arrays in `[H][S][A](S)` order with
//! probabilities as decimal floats, so the files stay readable and
//! independent of the in-memory layout.

use crate::mdp::{DeterministicPolicy, RewardNoise, TabularMdp};
use crate::planner::RobustSolution;
use ndarray::{Array2, Array3, Array4};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("inconsistent dimensions in {context}: expected {expected}, found {found}")]
    Dimensions {
        context: &'static str,
        expected: String,
        found: String,
    },
}

/// On-disk MDP document.
#[derive(Debug, Serialize, Deserialize)]
pub struct MdpFile {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "P")]
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(rename = "R")]
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub s1: usize,
    pub reward_noise: RewardNoise,
}

impl MdpFile {
    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        let transitions = (0..mdp.horizon)
            .map(|hh| {
                (0..mdp.num_states)
                    .map(|ss| {
                        (0..mdp.num_actions)
                            .map(|aa| {
                                (0..mdp.num_states)
                                    .map(|ss_next| mdp.transitions[[hh, ss, aa, ss_next]])
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let rewards = (0..mdp.horizon)
            .map(|hh| {
                (0..mdp.num_states)
                    .map(|ss| {
                        (0..mdp.num_actions)
                            .map(|aa| mdp.rewards[[hh, ss, aa]])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        MdpFile {
            num_states: mdp.num_states,
            num_actions: mdp.num_actions,
            horizon: mdp.horizon,
            transitions,
            rewards,
            s1: mdp.initial_state,
            reward_noise: mdp.reward_noise,
        }
    }

    pub fn into_mdp(self) -> Result<TabularMdp, IoError> {
        let (h, s, a) = (self.horizon, self.num_states, self.num_actions);
        let mut transitions = Array4::<f64>::zeros((h, s, a, s));
        let mut rewards = Array3::<f64>::zeros((h, s, a));
        for hh in 0..h {
            for ss in 0..s {
                for aa in 0..a {
                    let row = self
                        .transitions
                        .get(hh)
                        .and_then(|x| x.get(ss))
                        .and_then(|x| x.get(aa))
                        .filter(|row| row.len() == s)
                        .ok_or_else(|| IoError::Dimensions {
                            context: "transition tensor",
                            expected: format!("[{h}][{s}][{a}][{s}]"),
                            found: "ragged or truncated array".into(),
                        })?;
                    for (ss_next, &p) in row.iter().enumerate() {
                        transitions[[hh, ss, aa, ss_next]] = p;
                    }
                    rewards[[hh, ss, aa]] = *self
                        .rewards
                        .get(hh)
                        .and_then(|x| x.get(ss))
                        .and_then(|x| x.get(aa))
                        .ok_or_else(|| IoError::Dimensions {
                            context: "reward tensor",
                            expected: format!("[{h}][{s}][{a}]"),
                            found: "ragged or truncated array".into(),
                        })?;
                }
            }
        }
        Ok(TabularMdp::new(
            transitions,
            rewards,
            self.reward_noise,
            self.s1,
        ))
    }
}

pub fn save_mdp(path: &Path, mdp: &TabularMdp) -> Result<(), IoError> {
    let file = MdpFile::from_mdp(mdp);
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_mdp(path: &Path) -> Result<TabularMdp, IoError> {
    let file: MdpFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    file.into_mdp()
}

/// On-disk deterministic policy: the `[H][S]` action table.
#[derive(Debug, Serialize, Deserialize)]
pub struct PolicyFile {
    pub actions: Vec<Vec<usize>>,
}

impl PolicyFile {
    pub fn from_policy(policy: &DeterministicPolicy) -> Self {
        PolicyFile {
            actions: (0..policy.horizon())
                .map(|hh| {
                    (0..policy.num_states())
                        .map(|ss| policy.action(hh, ss))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn into_policy(self) -> Result<DeterministicPolicy, IoError> {
        let h = self.actions.len();
        let s = self.actions.first().map(|row| row.len()).unwrap_or(0);
        if h == 0 || s == 0 || self.actions.iter().any(|row| row.len() != s) {
            return Err(IoError::Dimensions {
                context: "policy table",
                expected: "rectangular [H][S] array".into(),
                found: format!("{h} rows"),
            });
        }
        let mut actions = Array2::<usize>::zeros((h, s));
        for (hh, row) in self.actions.iter().enumerate() {
            for (ss, &aa) in row.iter().enumerate() {
                actions[[hh, ss]] = aa;
            }
        }
        Ok(DeterministicPolicy::new(actions))
    }
}

pub fn save_policy(path: &Path, policy: &DeterministicPolicy) -> Result<(), IoError> {
    let file = PolicyFile::from_policy(policy);
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<DeterministicPolicy, IoError> {
    let file: PolicyFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    file.into_policy()
}

/// On-disk robust solution: value tables plus both extremal policies.
#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionFile {
    #[serde(rename = "V_star")]
    pub v_star: Vec<Vec<f64>>,
    #[serde(rename = "Q_star")]
    pub q_star: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "pi_star")]
    pub pi_star: Vec<Vec<usize>>,
    #[serde(rename = "pi_minus")]
    pub pi_minus: Vec<Vec<usize>>,
    pub rho: f64,
}

impl SolutionFile {
    pub fn from_solution(solution: &RobustSolution) -> Self {
        let (h1, s) = solution.v_star.dim();
        let (_, _, a) = solution.q_star.dim();
        SolutionFile {
            v_star: (0..h1)
                .map(|hh| (0..s).map(|ss| solution.v_star[[hh, ss]]).collect())
                .collect(),
            q_star: (0..h1 - 1)
                .map(|hh| {
                    (0..s)
                        .map(|ss| (0..a).map(|aa| solution.q_star[[hh, ss, aa]]).collect())
                        .collect()
                })
                .collect(),
            pi_star: PolicyFile::from_policy(&solution.pi_star).actions,
            pi_minus: PolicyFile::from_policy(&solution.pi_minus).actions,
            rho: solution.rho,
        }
    }
}

pub fn save_solution(path: &Path, solution: &RobustSolution) -> Result<(), IoError> {
    let file = SolutionFile::from_solution(solution);
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}
