//! Benchmark environment constructors.
//!
//! All constructors produce MDPs that pass [`TabularMdp::validate`] and use
//! time-homogeneous dynamics replicated across steps.

use crate::mdp::{normalize_rewards, DeterministicPolicy, RewardNoise, RewardScale, TabularMdp};
use ndarray::{Array3, Array4};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvSpecError {
    #[error(
        "unknown environment '{0}'; expected cliff, chain:n=..,slip=.. or random:S=..,A=..,seed=.."
    )]
    UnknownEnv(String),
    #[error("bad parameter '{0}' in environment spec")]
    BadParameter(String),
    #[error("missing parameter '{0}' in environment spec")]
    MissingParameter(&'static str),
}

/// Grid geometry of the cliff-walking environment: a 4x12 board whose bottom
/// row holds the start, the goal, and the cliff between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
}

/// Actions in grid order.
pub const ACTION_UP: usize = 0;
pub const ACTION_RIGHT: usize = 1;
pub const ACTION_DOWN: usize = 2;
pub const ACTION_LEFT: usize = 3;

impl GridSpec {
    pub fn standard() -> Self {
        GridSpec {
            rows: 4,
            cols: 12,
            start: (3, 0),
            goal: (3, 11),
        }
    }

    pub fn is_cliff(&self, row: usize, col: usize) -> bool {
        row == self.rows - 1 && col >= 1 && col < self.cols - 1
    }

    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Grid cells plus the explicit absorbing state reached from the goal.
    pub fn num_states(&self) -> usize {
        self.rows * self.cols + 1
    }

    pub fn absorbing_index(&self) -> usize {
        self.rows * self.cols
    }

    fn step(&self, row: usize, col: usize, action: usize) -> (usize, usize) {
        let (dr, dc): (isize, isize) = match action {
            ACTION_UP => (-1, 0),
            ACTION_RIGHT => (0, 1),
            ACTION_DOWN => (1, 0),
            ACTION_LEFT => (0, -1),
            _ => panic!("invalid grid action {action}"),
        };
        let nr = row as isize + dr;
        let nc = col as isize + dc;
        if nr < 0 || nr >= self.rows as isize || nc < 0 || nc >= self.cols as isize {
            (row, col) // off-grid moves keep position
        } else {
            (nr as usize, nc as usize)
        }
    }
}

const CLIFF_RAW_FALL: f64 = -100.0;
const CLIFF_RAW_MOVE: f64 = -1.0;
const CLIFF_RAW_GOAL: f64 = 0.0;

/// Cliff walking on the standard 4x12 grid. Moving into a cliff cell
/// teleports back to the start with raw reward -100, every other move costs
/// -1, and the goal leads into an absorbing state paying the raw reward 0
/// for each remaining step. Raw rewards are normalized into `[0, 1]` with
/// bounds `[-100, 0]`.
pub fn build_cliff_walking(horizon: usize) -> (TabularMdp, RewardScale) {
    assert!(horizon >= 1);
    let grid = GridSpec::standard();
    let s = grid.num_states();
    let a = 4;
    let absorbing = grid.absorbing_index();
    let start = grid.cell_index(grid.start.0, grid.start.1);
    let goal = grid.cell_index(grid.goal.0, grid.goal.1);

    let mut transitions_h = Array3::<f64>::zeros((s, a, s));
    let mut raw_rewards_h = Array3::<f64>::zeros((1, s, a));

    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let ss = grid.cell_index(row, col);
            for aa in 0..a {
                if ss == goal {
                    transitions_h[[ss, aa, absorbing]] = 1.0;
                    raw_rewards_h[[0, ss, aa]] = CLIFF_RAW_GOAL;
                } else if grid.is_cliff(row, col) {
                    // Unreachable in play; falling semantics keep the rows
                    // valid distributions.
                    transitions_h[[ss, aa, start]] = 1.0;
                    raw_rewards_h[[0, ss, aa]] = CLIFF_RAW_FALL;
                } else {
                    let (nr, nc) = grid.step(row, col, aa);
                    if grid.is_cliff(nr, nc) {
                        transitions_h[[ss, aa, start]] = 1.0;
                        raw_rewards_h[[0, ss, aa]] = CLIFF_RAW_FALL;
                    } else {
                        transitions_h[[ss, aa, grid.cell_index(nr, nc)]] = 1.0;
                        raw_rewards_h[[0, ss, aa]] = CLIFF_RAW_MOVE;
                    }
                }
            }
        }
    }
    for aa in 0..a {
        transitions_h[[absorbing, aa, absorbing]] = 1.0;
        raw_rewards_h[[0, absorbing, aa]] = CLIFF_RAW_GOAL;
    }

    let (normalized_h, scale) =
        normalize_rewards(&raw_rewards_h, CLIFF_RAW_FALL, CLIFF_RAW_GOAL).expect("fixed range");

    let mut transitions = Array4::<f64>::zeros((horizon, s, a, s));
    let mut rewards = Array3::<f64>::zeros((horizon, s, a));
    for hh in 0..horizon {
        for ss in 0..s {
            for aa in 0..a {
                rewards[[hh, ss, aa]] = normalized_h[[0, ss, aa]];
                for ss_next in 0..s {
                    transitions[[hh, ss, aa, ss_next]] = transitions_h[[ss, aa, ss_next]];
                }
            }
        }
    }

    (
        TabularMdp::new(transitions, rewards, RewardNoise::Deterministic, start),
        scale,
    )
}

/// The cliff-walking test adversary: a step toward the bottom at every
/// `(step, state)`.
pub fn build_fixed_adversary_cliff(horizon: usize) -> DeterministicPolicy {
    DeterministicPolicy::constant(horizon, GridSpec::standard().num_states(), ACTION_DOWN)
}

/// Random test instance: transition rows drawn from a symmetric Dirichlet,
/// mean rewards uniform on `[0, 1]`, deterministic given the seed.
pub fn build_random_mdp(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    concentration: f64,
    seed: u64,
) -> TabularMdp {
    assert!(num_states >= 1 && num_actions >= 1 && horizon >= 1);
    assert!(concentration > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Array4::<f64>::zeros((horizon, num_states, num_actions, num_states));
    let mut rewards = Array3::<f64>::zeros((horizon, num_states, num_actions));

    for hh in 0..horizon {
        for ss in 0..num_states {
            for aa in 0..num_actions {
                if num_states == 1 {
                    transitions[[hh, ss, aa, 0]] = 1.0;
                } else {
                    let dirichlet =
                        Dirichlet::new_with_size(concentration, num_states).expect("valid alpha");
                    let row = dirichlet.sample(&mut rng);
                    for (ss_next, &p) in row.iter().enumerate() {
                        transitions[[hh, ss, aa, ss_next]] = p;
                    }
                }
                rewards[[hh, ss, aa]] = rng.gen::<f64>();
            }
        }
    }
    TabularMdp::new(transitions, rewards, RewardNoise::Deterministic, 0)
}

/// Hard-exploration chain: `right` advances with probability `1 - slip`,
/// `left` resets to state 0. Reward 1 sits at the far end under `right`; a
/// distractor reward 0.01 sits at state 0 under `left`.
pub fn build_chain_mdp(n: usize, horizon: usize, slip: f64) -> TabularMdp {
    assert!(n >= 2);
    assert!((0.0..=0.5).contains(&slip));
    let num_actions = 2;
    let (left, right) = (0usize, 1usize);
    let mut transitions = Array4::<f64>::zeros((horizon, n, num_actions, n));
    let mut rewards = Array3::<f64>::zeros((horizon, n, num_actions));

    for hh in 0..horizon {
        for ss in 0..n {
            transitions[[hh, ss, left, 0]] = 1.0;
            if ss + 1 < n {
                transitions[[hh, ss, right, ss + 1]] = 1.0 - slip;
                transitions[[hh, ss, right, ss]] = slip;
            } else {
                transitions[[hh, ss, right, ss]] = 1.0;
            }
        }
        rewards[[hh, 0, left]] = 0.01;
        rewards[[hh, n - 1, right]] = 1.0;
    }
    TabularMdp::new(transitions, rewards, RewardNoise::Deterministic, 0)
}

/// Environment selector as used by the command line: `cliff`,
/// `chain:n=..,slip=..`, or `random:S=..,A=..,seed=..[,conc=..]`.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    Cliff,
    Chain {
        n: usize,
        slip: f64,
    },
    Random {
        s: usize,
        a: usize,
        seed: u64,
        concentration: f64,
    },
}

impl EnvSpec {
    /// Builds the environment at the given horizon; the reward scale is only
    /// present when raw rewards were normalized.
    pub fn build(&self, horizon: usize) -> (TabularMdp, Option<RewardScale>) {
        match self {
            EnvSpec::Cliff => {
                let (mdp, scale) = build_cliff_walking(horizon);
                (mdp, Some(scale))
            }
            EnvSpec::Chain { n, slip } => (build_chain_mdp(*n, horizon, *slip), None),
            EnvSpec::Random {
                s,
                a,
                seed,
                concentration,
            } => (
                build_random_mdp(*s, *a, horizon, *concentration, *seed),
                None,
            ),
        }
    }

    /// Short name for output files.
    pub fn slug(&self) -> String {
        match self {
            EnvSpec::Cliff => "cliff".into(),
            EnvSpec::Chain { n, slip } => format!("chain-n{n}-slip{slip}"),
            EnvSpec::Random { s, a, seed, .. } => format!("random-S{s}-A{a}-seed{seed}"),
        }
    }
}

fn parse_pairs(body: &str) -> Result<Vec<(String, String)>, EnvSpecError> {
    body.split(',')
        .filter(|part| !part.is_empty())
        .map(|part| {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| EnvSpecError::BadParameter(part.to_string()))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn lookup<T: FromStr>(
    pairs: &[(String, String)],
    key: &'static str,
) -> Result<Option<T>, EnvSpecError> {
    match pairs.iter().find(|(k, _)| k == key) {
        None => Ok(None),
        Some((_, v)) => v
            .parse::<T>()
            .map(Some)
            .map_err(|_| EnvSpecError::BadParameter(format!("{key}={v}"))),
    }
}

impl FromStr for EnvSpec {
    type Err = EnvSpecError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let (name, body) = match spec.split_once(':') {
            Some((n, b)) => (n, b),
            None => (spec, ""),
        };
        match name {
            "cliff" => Ok(EnvSpec::Cliff),
            "chain" => {
                let pairs = parse_pairs(body)?;
                Ok(EnvSpec::Chain {
                    n: lookup(&pairs, "n")?.ok_or(EnvSpecError::MissingParameter("n"))?,
                    slip: lookup(&pairs, "slip")?.unwrap_or(0.0),
                })
            }
            "random" => {
                let pairs = parse_pairs(body)?;
                Ok(EnvSpec::Random {
                    s: lookup(&pairs, "S")?.ok_or(EnvSpecError::MissingParameter("S"))?,
                    a: lookup(&pairs, "A")?.ok_or(EnvSpecError::MissingParameter("A"))?,
                    seed: lookup(&pairs, "seed")?.ok_or(EnvSpecError::MissingParameter("seed"))?,
                    concentration: lookup(&pairs, "conc")?.unwrap_or(1.0),
                })
            }
            other => Err(EnvSpecError::UnknownEnv(other.to_string())),
        }
    }
}
