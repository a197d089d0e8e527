//! Corpus mixing ratios as a non-stationary bandit over data sources.
//!
//! Each source's training loss is its reward: a source the model still finds
//! hard earns a larger share of the next phase. The default policy is EXP3
//! with an exploration floor ε, so every source keeps at least ε of the mix.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::model::{FieldError, Record};

pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_ETA: f64 = 0.1;
pub const DEFAULT_WINDOW: usize = 100;
/// Weights never drop below this after renormalization.
pub const MIN_WEIGHT: f64 = 1e-150;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MixerError {
    #[error("need at least 2 sources, got {0}")]
    TooFewSources(usize),
    #[error("duplicate source `{0}`")]
    DuplicateSource(String),
    #[error("epsilon {epsilon} outside [0, 1/{k})")]
    Epsilon { epsilon: f64, k: usize },
    #[error("eta must be positive and finite, got {0}")]
    Eta(f64),
    #[error("normalization window must be >= 1")]
    Window,
    #[error("unknown source `{0}`")]
    UnknownSource(String),
    #[error("reward for `{source_id}` is not finite")]
    NonFinite { source_id: String },
    #[error("reward {reward} for `{source_id}` outside [0, 1] under identity normalization")]
    OutOfRange { source_id: String, reward: f64 },
    #[error("step {step} for `{source_id}` is before previous step {previous}")]
    StepRegression {
        source_id: String,
        step: u64,
        previous: u64,
    },
    #[error("phase length must be >= 1")]
    PhaseLength,
}

/// One loss observation for a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardEvent {
    pub source_id: String,
    pub reward: f64,
    pub step: u64,
}

impl Record for RewardEvent {
    const KIND: &'static str = "reward_event";

    fn validate(&self) -> Result<(), FieldError> {
        if self.source_id.trim().is_empty() {
            return Err(FieldError::new("source_id", "must be nonempty"));
        }
        if !self.reward.is_finite() {
            return Err(FieldError::new("reward", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Exp3,
    Ucb1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Normalization {
    /// Min-max over the last `window` raw rewards of every source, pooled.
    /// A degenerate range yields 0.
    WindowedMinMax { window: usize },
    /// Rewards are already in [0, 1].
    Identity,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization::WindowedMinMax { window: DEFAULT_WINDOW }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixerState {
    pub sources: Vec<String>,
    pub weights: Vec<f64>,
    pub epsilon: f64,
    pub eta: f64,
    pub policy: Policy,
    pub normalization: Normalization,
    pub t: u64,
    pub pulls: Vec<u64>,
    /// Sum of normalized rewards per source (UCB1 means).
    pub reward_sums: Vec<f64>,
    pub last_step: Vec<Option<u64>>,
    /// Raw rewards inside the normalization window, per source.
    pub recent: Vec<VecDeque<f64>>,
}

/// Uniform EXP3 state with windowed min-max normalization.
pub fn init_mixer<S: AsRef<str>>(sources: &[S], epsilon: f64, eta: f64) -> Result<MixerState, MixerError> {
    let k = sources.len();
    if k < 2 {
        return Err(MixerError::TooFewSources(k));
    }
    let mut seen = std::collections::HashSet::new();
    for s in sources {
        if !seen.insert(s.as_ref()) {
            return Err(MixerError::DuplicateSource(s.as_ref().to_string()));
        }
    }
    if !(0.0..1.0 / k as f64).contains(&epsilon) {
        return Err(MixerError::Epsilon { epsilon, k });
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(MixerError::Eta(eta));
    }
    Ok(MixerState {
        sources: sources.iter().map(|s| s.as_ref().to_string()).collect(),
        weights: vec![1.0; k],
        epsilon,
        eta,
        policy: Policy::Exp3,
        normalization: Normalization::default(),
        t: 0,
        pulls: vec![0; k],
        reward_sums: vec![0.0; k],
        last_step: vec![None; k],
        recent: vec![VecDeque::new(); k],
    })
}

impl MixerState {
    pub fn with_policy(mut self, policy: Policy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Result<Self, MixerError> {
        if matches!(normalization, Normalization::WindowedMinMax { window: 0 }) {
            return Err(MixerError::Window);
        }
        self.normalization = normalization;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.sources.len()
    }

    fn index_of(&self, source: &str) -> Result<usize, MixerError> {
        self.sources
            .iter()
            .position(|s| s == source)
            .ok_or_else(|| MixerError::UnknownSource(source.to_string()))
    }

    fn ucb_arm(&self) -> usize {
        if let Some(unpulled) = self.pulls.iter().position(|&n| n == 0) {
            return unpulled;
        }
        let ln_t = (self.t.max(1) as f64).ln();
        let index = |i: usize| {
            let n = self.pulls[i] as f64;
            self.reward_sums[i] / n + (2.0 * ln_t / n).sqrt()
        };
        (0..self.k()).fold(0, |best, i| if index(i) > index(best) { i } else { best })
    }

    /// Normalizes a raw reward after recording it in the source's window.
    fn normalize(&mut self, i: usize, reward: f64) -> Result<f64, MixerError> {
        match self.normalization {
            Normalization::Identity => {
                if !(0.0..=1.0).contains(&reward) {
                    return Err(MixerError::OutOfRange {
                        source_id: self.sources[i].clone(),
                        reward,
                    });
                }
                Ok(reward)
            }
            Normalization::WindowedMinMax { window } => {
                let recent = &mut self.recent[i];
                recent.push_back(reward);
                while recent.len() > window {
                    recent.pop_front();
                }
                let (lo, hi) = self
                    .recent
                    .iter()
                    .flatten()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                        (lo.min(r), hi.max(r))
                    });
                let range = hi - lo;
                if range.is_nan() || range <= f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
                    return Ok(0.0);
                }
                Ok(((reward - lo) / range).clamp(0.0, 1.0))
            }
        }
    }
}

/// Current sampling distribution over sources, in source order.
pub fn sample_ratios(state: &MixerState) -> Vec<f64> {
    let k = state.k() as f64;
    let eps = state.epsilon;
    match state.policy {
        Policy::Exp3 => {
            let total: f64 = state.weights.iter().sum();
            state
                .weights
                .iter()
                .map(|w| (1.0 - k * eps) * w / total + eps)
                .collect()
        }
        Policy::Ucb1 => {
            let arm = state.ucb_arm();
            (0..state.k())
                .map(|i| if i == arm { 1.0 - (k - 1.0) * eps } else { eps })
                .collect()
        }
    }
}

/// Applies one reward event.
pub fn update(state: &mut MixerState, event: &RewardEvent) -> Result<(), MixerError> {
    let i = state.index_of(&event.source_id)?;
    if !event.reward.is_finite() {
        return Err(MixerError::NonFinite {
            source_id: event.source_id.clone(),
        });
    }
    if let Some(previous) = state.last_step[i] {
        if event.step < previous {
            return Err(MixerError::StepRegression {
                source_id: event.source_id.clone(),
                step: event.step,
                previous,
            });
        }
    }
    let p = sample_ratios(state)[i];
    let reward = state.normalize(i, event.reward)?;
    if state.policy == Policy::Exp3 {
        let k = state.k() as f64;
        state.weights[i] *= (state.eta * (reward / p) / k).exp();
        let mean = state.weights.iter().sum::<f64>() / k;
        for w in &mut state.weights {
            *w = (*w / mean).max(MIN_WEIGHT);
        }
    }
    state.last_step[i] = Some(event.step);
    state.reward_sums[i] += reward;
    state.pulls[i] += 1;
    state.t += 1;
    Ok(())
}

/// Ratios emitted after `events` events of a replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRatios {
    pub phase: usize,
    pub events: usize,
    pub ratios: BTreeMap<String, f64>,
}

impl Record for PhaseRatios {
    const KIND: &'static str = "phase_ratios";

    fn validate(&self) -> Result<(), FieldError> {
        if self.ratios.values().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(FieldError::new("ratios", "entries must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Replays `events` in order: the initial vector, one after every
/// `phase_len` events, and one more for a trailing partial phase.
pub fn schedule<'a>(
    mut state: MixerState,
    events: impl IntoIterator<Item = &'a RewardEvent>,
    phase_len: usize,
) -> Result<(Vec<PhaseRatios>, MixerState), MixerError> {
    if phase_len == 0 {
        return Err(MixerError::PhaseLength);
    }
    let snapshot = |state: &MixerState, phase: usize, events: usize| PhaseRatios {
        phase,
        events,
        ratios: state.sources.iter().cloned().zip(sample_ratios(state)).collect(),
    };
    let mut out = vec![snapshot(&state, 0, 0)];
    let mut seen = 0;
    for event in events {
        update(&mut state, event)?;
        seen += 1;
        if seen % phase_len == 0 {
            out.push(snapshot(&state, out.len(), seen));
        }
    }
    if seen % phase_len != 0 {
        out.push(snapshot(&state, out.len(), seen));
    }
    Ok((out, state))
}
