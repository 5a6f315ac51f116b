//! Compact linear-softmax navigation policy over engineered features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::reward::{active_subgoal, SubgoalProgress};
use crate::synth::Episode;
use crate::world::{heading_delta, Action, ActionSequence, Kinematics, UavState, MAX_CHUNK_LEN};

pub const NUM_ACTIONS: usize = 4;
pub const FEATURE_DIM: usize = 10;
/// Distance at which the normalized-distance feature saturates.
pub const DEFAULT_D_NORM_M: f64 = 200.0;

/// Layout: `[bearing, distance, sin h, cos h, progress, last: none F L R STOP]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn bearing(&self) -> f64 {
        self.0[0]
    }

    pub fn distance(&self) -> f64 {
        self.0[1]
    }
}

/// Features describing the UAV relative to its active subgoal. After the
/// final node is reached, bearing and distance are both zero.
pub fn featurize(
    episode: &Episode,
    state: &UavState,
    progress: &SubgoalProgress,
    last_action: Option<Action>,
    d_norm: f64,
) -> Result<FeatureVector> {
    let subgoal = active_subgoal(episode, progress)?;
    // Once every node is reached there is nothing left to steer toward.
    let dist = if progress.target_reached(episode) {
        0.0
    } else {
        state.position.distance_to(&subgoal.position)
    };
    let bearing = if dist > 1e-9 {
        heading_delta(state.heading, state.position.bearing_to(&subgoal.position)) / 180.0
    } else {
        0.0
    };
    let mut f = [0.0; FEATURE_DIM];
    f[0] = bearing;
    f[1] = dist.min(d_norm) / d_norm;
    f[2] = state.heading.radians().sin();
    f[3] = state.heading.radians().cos();
    f[4] = progress.fraction(episode);
    let slot = last_action.map_or(0, |a| a.index() + 1);
    f[5 + slot] = 1.0;
    Ok(FeatureVector(f))
}

/// Weight matrix (actions x features, row-major) plus bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            weights: vec![0.0; NUM_ACTIONS * dim],
            bias: vec![0.0; NUM_ACTIONS],
        }
    }

    pub fn random<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(dim);
        for w in p.weights.iter_mut().chain(p.bias.iter_mut()) {
            *w = rng.random_range(-scale..=scale);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checkpoint form: weights row-major, then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn from_flat(dim: usize, flat: &[f64]) -> Result<Self> {
        let expected = NUM_ACTIONS * (dim + 1);
        if flat.len() != expected {
            return Err(invalid(format!(
                "checkpoint has {} scalars, expected {expected}",
                flat.len()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(invalid("checkpoint contains non-finite values"));
        }
        let (w, b) = flat.split_at(NUM_ACTIONS * dim);
        Ok(Self {
            dim,
            weights: w.to_vec(),
            bias: b.to_vec(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    pub fn weight(&self, action: usize, feature: usize) -> f64 {
        self.weights[action * self.dim + feature]
    }

    pub fn set_weight(&mut self, action: usize, feature: usize, value: f64) {
        self.weights[action * self.dim + feature] = value;
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn set_bias(&mut self, action: usize, value: f64) {
        self.bias[action] = value;
    }

    /// `self += scale * other`, with `other` in flat layout.
    pub fn add_scaled(&mut self, flat: &[f64], scale: f64) {
        debug_assert_eq!(flat.len(), self.len());
        let (w, b) = flat.split_at(self.weights.len());
        for (p, g) in self.weights.iter_mut().zip(w) {
            *p += scale * g;
        }
        for (p, g) in self.bias.iter_mut().zip(b) {
            *p += scale * g;
        }
    }

    pub fn logits(&self, features: &[f64]) -> [f64; NUM_ACTIONS] {
        debug_assert_eq!(features.len(), self.dim);
        let mut z = [0.0; NUM_ACTIONS];
        for (a, zi) in z.iter_mut().enumerate() {
            let row = &self.weights[a * self.dim..(a + 1) * self.dim];
            *zi = self.bias[a] + row.iter().zip(features).map(|(w, f)| w * f).sum::<f64>();
        }
        z
    }

    pub fn probabilities(&self, features: &[f64]) -> [f64; NUM_ACTIONS] {
        softmax(&self.logits(features), 1.0)
    }

    pub fn log_prob(&self, features: &[f64], action: Action) -> f64 {
        log_softmax(&self.logits(features), 1.0)[action.index()]
    }

    /// Gradient of `log pi(action | features)` in flat layout, added into
    /// `out` scaled by `scale`.
    pub fn accumulate_log_prob_grad(
        &self,
        features: &[f64],
        action: Action,
        scale: f64,
        out: &mut [f64],
    ) {
        let p = self.probabilities(features);
        let bias_offset = NUM_ACTIONS * self.dim;
        for k in 0..NUM_ACTIONS {
            let coeff = scale * (f64::from(u8::from(k == action.index())) - p[k]);
            if coeff == 0.0 {
                continue;
            }
            let row = &mut out[k * self.dim..(k + 1) * self.dim];
            for (g, f) in row.iter_mut().zip(features) {
                *g += coeff * f;
            }
            out[bias_offset + k] += coeff;
        }
    }
}

pub fn log_softmax(logits: &[f64; NUM_ACTIONS], temperature: f64) -> [f64; NUM_ACTIONS] {
    let scaled = logits.map(|z| z / temperature);
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    scaled.map(|z| z - lse)
}

pub fn softmax(logits: &[f64; NUM_ACTIONS], temperature: f64) -> [f64; NUM_ACTIONS] {
    log_softmax(logits, temperature).map(f64::exp)
}

/// How actions are drawn from the policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Argmax; ties go to the lowest action index.
    Greedy,
    Temperature(f64),
}

/// Picks one action and returns it with its log-probability. Greedy mode
/// reports the log-probability under the untempered softmax.
pub fn policy_step<R: Rng + ?Sized>(
    params: &PolicyParams,
    features: &FeatureVector,
    rng: &mut R,
    sampling: Sampling,
) -> (Action, f64) {
    let logits = params.logits(features.as_slice());
    match sampling {
        Sampling::Greedy => {
            let mut best = 0;
            for k in 1..NUM_ACTIONS {
                if logits[k] > logits[best] {
                    best = k;
                }
            }
            (Action::ALL[best], log_softmax(&logits, 1.0)[best])
        }
        Sampling::Temperature(t) => {
            let logp = log_softmax(&logits, t);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = NUM_ACTIONS - 1;
            for (k, lp) in logp.iter().enumerate() {
                acc += lp.exp();
                if u < acc {
                    pick = k;
                    break;
                }
            }
            (Action::ALL[pick], logp[pick])
        }
    }
}

/// One sampled primitive decision with the inputs needed to re-score it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub features: FeatureVector,
    pub action: Action,
    pub logprob: f64,
}

/// Mutable context a rollout carries between actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutState {
    pub state: UavState,
    pub progress: SubgoalProgress,
    pub last_action: Option<Action>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkRollout {
    pub sequence: ActionSequence,
    pub steps: Vec<StepRecord>,
    pub end: RolloutState,
}

/// Settings shared by every rollout of a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutSettings {
    pub kinematics: Kinematics,
    pub node_threshold_m: f64,
    pub d_norm_m: f64,
    pub max_len: usize,
}

impl Default for RolloutSettings {
    fn default() -> Self {
        Self {
            kinematics: Kinematics::default(),
            node_threshold_m: 10.0,
            d_norm_m: DEFAULT_D_NORM_M,
            max_len: MAX_CHUNK_LEN,
        }
    }
}

/// Samples actions one at a time, re-featurizing after each, until STOP
/// or `max_len` actions.
pub fn rollout_chunk<R: Rng + ?Sized>(
    params: &PolicyParams,
    episode: &Episode,
    start: RolloutState,
    settings: &RolloutSettings,
    rng: &mut R,
    sampling: Sampling,
) -> Result<ChunkRollout> {
    let max_len = settings.max_len.clamp(1, MAX_CHUNK_LEN);
    let mut ctx = start;
    let mut steps = Vec::with_capacity(max_len);
    for _ in 0..max_len {
        let features = featurize(
            episode,
            &ctx.state,
            &ctx.progress,
            ctx.last_action,
            settings.d_norm_m,
        )?;
        let (action, logprob) = policy_step(params, &features, rng, sampling);
        steps.push(StepRecord {
            features,
            action,
            logprob,
        });
        ctx.state = settings.kinematics.apply(ctx.state, action);
        ctx.progress
            .observe(episode, ctx.state.position, settings.node_threshold_m);
        ctx.last_action = Some(action);
        if action == Action::Stop {
            break;
        }
    }
    let sequence = ActionSequence::new(steps.iter().map(|s| s.action).collect())?;
    Ok(ChunkRollout {
        sequence,
        steps,
        end: ctx,
    })
}
