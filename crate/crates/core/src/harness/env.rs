//! Small finite environments whose return distributions can be computed
//! exactly. Each one is a finite MDP model plus an observation map; the
//! stateful [`Environment`] samples from that model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One possible result of taking an action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub reward: f64,
    /// `None` when the transition ends the episode.
    pub next: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvKind {
    /// `k` states in a line; stepping off the left end pays `left`,
    /// stepping off the right end pays `right`, other moves pay 0.
    Chain {
        k: usize,
        left: Vec<(f64, f64)>,
        right: Vec<(f64, f64)>,
    },
    /// `size × size` grid, start top-left, goal bottom-right, reward 1 on
    /// reaching the goal. Observations are one-hot cells.
    Grid { size: usize },
    /// The grid rendered as a single-channel `image × image` picture: the
    /// agent's cell at 1.0, the goal's at 0.5.
    Image { size: usize, image: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub horizon: usize,
}

fn check_distribution(name: &str, atoms: &[(f64, f64)]) -> Result<()> {
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    if atoms.is_empty() || atoms.iter().any(|&(v, p)| !v.is_finite() || !(p > 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParam(format!(
            "{name} reward distribution must have positive probabilities summing to 1, got {atoms:?}"
        )));
    }
    Ok(())
}

impl EnvSpec {
    /// The chain used by the end-to-end check: five states, left exit pays
    /// 0.5, right exit pays 0 or 2 with equal odds.
    pub fn default_chain() -> Self {
        Self {
            kind: EnvKind::Chain {
                k: 5,
                left: vec![(0.5, 1.0)],
                right: vec![(0.0, 0.5), (2.0, 0.5)],
            },
            horizon: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParam("horizon must be ≥ 1".into()));
        }
        match &self.kind {
            EnvKind::Chain { k, left, right } => {
                if *k < 2 {
                    return Err(Error::InvalidParam(format!("chain needs k ≥ 2, got {k}")));
                }
                check_distribution("left", left)?;
                check_distribution("right", right)
            }
            EnvKind::Grid { size } => {
                if *size < 2 {
                    return Err(Error::InvalidParam(format!("grid needs size ≥ 2, got {size}")));
                }
                Ok(())
            }
            EnvKind::Image { size, image } => {
                if *size < 2 || *image < *size {
                    return Err(Error::InvalidParam(format!(
                        "image grid needs size ≥ 2 and image ≥ size, got {size} and {image}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn num_states(&self) -> usize {
        match self.kind {
            EnvKind::Chain { k, .. } => k,
            EnvKind::Grid { size } | EnvKind::Image { size, .. } => size * size,
        }
    }

    pub fn num_actions(&self) -> usize {
        match self.kind {
            EnvKind::Chain { .. } => 2,
            EnvKind::Grid { .. } | EnvKind::Image { .. } => 4,
        }
    }

    pub fn start_state(&self) -> usize {
        match self.kind {
            EnvKind::Chain { k, .. } => k / 2,
            EnvKind::Grid { .. } | EnvKind::Image { .. } => 0,
        }
    }

    /// Observation length.
    pub fn obs_dim(&self) -> usize {
        match self.kind {
            EnvKind::Chain { k, .. } => k,
            EnvKind::Grid { size } => size * size,
            EnvKind::Image { image, .. } => image * image,
        }
    }

    /// Largest return any trajectory can collect.
    pub fn max_return(&self) -> f64 {
        let max = |atoms: &[(f64, f64)]| atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
        match &self.kind {
            EnvKind::Chain { left, right, .. } => max(left).max(max(right)).max(0.0),
            EnvKind::Grid { .. } | EnvKind::Image { .. } => 1.0,
        }
    }

    pub fn outcomes(&self, state: usize, action: usize) -> Result<Vec<Outcome>> {
        if action >= self.num_actions() {
            return Err(Error::InvalidAction {
                action,
                count: self.num_actions(),
            });
        }
        if state >= self.num_states() {
            return Err(Error::InvalidParam(format!("state {state} out of range")));
        }
        let step = |next: usize| vec![Outcome { prob: 1.0, reward: 0.0, next: Some(next) }];
        let exit = |atoms: &[(f64, f64)]| {
            atoms
                .iter()
                .map(|&(reward, prob)| Outcome { prob, reward, next: None })
                .collect()
        };
        Ok(match &self.kind {
            EnvKind::Chain { k, left, right } => match action {
                0 if state == 0 => exit(left),
                0 => step(state - 1),
                _ if state + 1 == *k => exit(right),
                _ => step(state + 1),
            },
            EnvKind::Grid { size } | EnvKind::Image { size, .. } => {
                let (r, c) = (state / size, state % size);
                let (r, c) = match action {
                    0 => (r.saturating_sub(1), c),
                    1 => ((r + 1).min(size - 1), c),
                    2 => (r, c.saturating_sub(1)),
                    _ => (r, (c + 1).min(size - 1)),
                };
                let next = r * size + c;
                if next == size * size - 1 {
                    vec![Outcome { prob: 1.0, reward: 1.0, next: None }]
                } else {
                    step(next)
                }
            }
        })
    }

    pub fn observe(&self, state: usize) -> Vec<f64> {
        match self.kind {
            EnvKind::Chain { .. } | EnvKind::Grid { .. } => {
                let mut o = vec![0.0; self.obs_dim()];
                o[state] = 1.0;
                o
            }
            EnvKind::Image { size, image } => {
                let mut o = vec![0.0; image * image];
                let cell = image / size;
                let mut paint = |s: usize, v: f64| {
                    let (r, c) = (s / size, s % size);
                    for y in r * cell..(r + 1) * cell {
                        for x in c * cell..(c + 1) * cell {
                            o[y * image + x] = v;
                        }
                    }
                };
                paint(size * size - 1, 0.5);
                paint(state, 1.0);
                o
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// The episode ended inside the MDP (no bootstrap).
    pub terminal: bool,
    /// The horizon was reached; the state is not terminal.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// A running episode of an [`EnvSpec`].
#[derive(Debug, Clone)]
pub struct Environment {
    spec: EnvSpec,
    state: Option<usize>,
    t: usize,
    rng: ChaCha8Rng,
}

impl Environment {
    pub fn new(spec: EnvSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            state: None,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn state(&self) -> Option<usize> {
        self.state
    }

    pub fn reset(&mut self) -> Vec<f64> {
        let s = self.spec.start_state();
        self.state = Some(s);
        self.t = 0;
        self.spec.observe(s)
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        let state = self
            .state
            .ok_or_else(|| Error::InvalidParam("step called on a finished episode; reset first".into()))?;
        let outcomes = self.spec.outcomes(state, action)?;
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        let mut chosen = outcomes[outcomes.len() - 1];
        for o in &outcomes {
            acc += o.prob;
            if u < acc {
                chosen = *o;
                break;
            }
        }
        self.t += 1;
        let truncated = chosen.next.is_some() && self.t >= self.spec.horizon;
        self.state = if truncated { None } else { chosen.next };
        let obs = match chosen.next {
            Some(s) => self.spec.observe(s),
            None => vec![0.0; self.spec.obs_dim()],
        };
        Ok(StepResult {
            obs,
            reward: chosen.reward,
            terminal: chosen.next.is_none(),
            truncated,
        })
    }
}
