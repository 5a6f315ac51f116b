//! Two-stage training of the compact policy: behavior cloning on expert
//! chunks, then group-relative policy optimization with the step reward.
//!
//! The GRPO stage samples a training episode and one of its decision steps,
//! restores the expert's state there, draws a group of chunks from the
//! current policy, scores each with the multi-objective reward against the
//! expert chunk for that step, and takes one ascent step on the clipped
//! surrogate with group-standardized advantages.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harness::{run_suite, PolicyAgent, RunConfig};
use crate::metrics::EvalReport;
use crate::policy::{
    featurize, rollout_chunk, FeatureVector, PolicyParams, RolloutSettings, RolloutState,
    Sampling, StepRecord, FEATURE_DIM, NUM_ACTIONS,
};
use crate::reward::{score_step, RewardConfig, SubgoalProgress};
use crate::seed;
use crate::synth::{synthesize_episode, Difficulty, Episode, SynthConfig};
use crate::world::{Action, WorldConfig, WorldMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "bc")]
    BcOnly,
    #[serde(rename = "grpo")]
    GrpoOnly,
    #[serde(rename = "bc+grpo")]
    BcThenGrpo,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::BcOnly => "bc",
            Stage::GrpoOnly => "grpo",
            Stage::BcThenGrpo => "bc+grpo",
        }
    }

    fn runs_bc(self) -> bool {
        matches!(self, Stage::BcOnly | Stage::BcThenGrpo)
    }

    fn runs_grpo(self) -> bool {
        matches!(self, Stage::GrpoOnly | Stage::BcThenGrpo)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bc" => Ok(Stage::BcOnly),
            "grpo" => Ok(Stage::GrpoOnly),
            "bc+grpo" => Ok(Stage::BcThenGrpo),
            other => Err(invalid(format!(
                "unknown stage {other:?} (expected bc, grpo or bc+grpo)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub group_size: usize,
    pub learning_rate: f64,
    pub updates: usize,
    pub clip_ratio: f64,
    pub max_decision_steps: usize,
    pub seed: u64,
    pub bc_epochs: usize,
    pub bc_learning_rate: f64,
    pub init_scale: f64,
    pub train_episodes: usize,
    pub heldout_episodes: usize,
    /// Greedy held-out evaluation every this many updates (0 disables).
    pub eval_every: usize,
    pub d_norm_m: f64,
    pub difficulties: Vec<Difficulty>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            learning_rate: 1e-4,
            updates: 1500,
            clip_ratio: 0.2,
            max_decision_steps: 50,
            seed: 0,
            bc_epochs: 300,
            bc_learning_rate: 0.05,
            init_scale: 0.01,
            train_episodes: 200,
            heldout_episodes: 100,
            eval_every: 100,
            d_norm_m: crate::policy::DEFAULT_D_NORM_M,
            difficulties: vec![Difficulty::Easy, Difficulty::Medium],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(invalid("group size must be at least 2"));
        }
        if !(self.learning_rate > 0.0 && self.bc_learning_rate > 0.0) {
            return Err(invalid("learning rates must be positive"));
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return Err(invalid("clip ratio must lie in (0, 1)"));
        }
        if self.max_decision_steps == 0 || self.train_episodes == 0 || self.heldout_episodes == 0 {
            return Err(invalid("step and episode counts must be positive"));
        }
        if !(self.d_norm_m > 0.0) {
            return Err(invalid("d_norm must be positive"));
        }
        if self.difficulties.is_empty() {
            return Err(invalid("at least one difficulty must be allowed"));
        }
        Ok(())
    }
}

/// Expert (features, action) pairs from replaying every expert action.
pub fn expert_samples(
    episode: &Episode,
    settings: &RolloutSettings,
) -> Result<Vec<(FeatureVector, Action)>> {
    let kin = &settings.kinematics;
    let mut state = episode.start();
    let mut progress = SubgoalProgress::new();
    progress.observe(episode, state.position, settings.node_threshold_m);
    let mut last = None;
    let mut out = Vec::with_capacity(episode.expert.len());
    for &a in &episode.expert {
        out.push((
            featurize(episode, &state, &progress, last, settings.d_norm_m)?,
            a,
        ));
        state = kin.apply(state, a);
        progress.observe(episode, state.position, settings.node_threshold_m);
        last = Some(a);
    }
    Ok(out)
}

/// Rollout context at the start of every expert chunk.
pub fn chunk_contexts(episode: &Episode, settings: &RolloutSettings) -> Vec<RolloutState> {
    let kin = &settings.kinematics;
    let mut ctx = RolloutState {
        state: episode.start(),
        progress: SubgoalProgress::new(),
        last_action: None,
    };
    ctx.progress
        .observe(episode, ctx.state.position, settings.node_threshold_m);
    let mut out = Vec::with_capacity(episode.expert_chunks.len());
    for chunk in &episode.expert_chunks {
        out.push(ctx);
        for &a in chunk.actions() {
            ctx.state = kin.apply(ctx.state, a);
            ctx.progress
                .observe(episode, ctx.state.position, settings.node_threshold_m);
            ctx.last_action = Some(a);
        }
    }
    out
}

/// Mean cross-entropy and its gradient (flat layout) over labeled samples.
pub fn cross_entropy(params: &PolicyParams, samples: &[(FeatureVector, Action)]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.len()];
    if samples.is_empty() {
        return (0.0, grad);
    }
    let scale = 1.0 / samples.len() as f64;
    let mut loss = 0.0;
    for (f, a) in samples {
        loss -= params.log_prob(f.as_slice(), *a);
        // d(-log p)/dθ = -d(log p)/dθ
        params.accumulate_log_prob_grad(f.as_slice(), *a, -scale, &mut grad);
    }
    (loss * scale, grad)
}

/// Greedy-decision accuracy on labeled samples.
pub fn accuracy(params: &PolicyParams, samples: &[(FeatureVector, Action)]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut rng = seed::rng_for(0, &[]);
    let hits = samples
        .iter()
        .filter(|(f, a)| crate::policy::policy_step(params, f, &mut rng, Sampling::Greedy).0 == *a)
        .count();
    hits as f64 / samples.len() as f64
}

/// Full-batch Adam descent on expert cross-entropy. Returns the trained
/// parameters and the loss before each epoch plus the final loss.
pub fn bc_pretrain(
    params: &PolicyParams,
    episodes: &[Episode],
    settings: &RolloutSettings,
    epochs: usize,
    lr: f64,
) -> Result<(PolicyParams, Vec<f64>)> {
    if episodes.is_empty() {
        return Err(invalid("behavior cloning needs at least one episode"));
    }
    let mut samples = Vec::new();
    for ep in episodes {
        samples.extend(expert_samples(ep, settings)?);
    }
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let mut p = params.clone();
    let mut m = vec![0.0; p.len()];
    let mut v = vec![0.0; p.len()];
    let mut step = vec![0.0; p.len()];
    let mut losses = Vec::with_capacity(epochs + 1);
    for epoch in 1..=epochs {
        let (loss, grad) = cross_entropy(&p, &samples);
        losses.push(loss);
        let c1 = 1.0 - BETA1.powi(epoch as i32);
        let c2 = 1.0 - BETA2.powi(epoch as i32);
        for i in 0..grad.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            step[i] = (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
        }
        p.add_scaled(&step, -lr);
    }
    losses.push(cross_entropy(&p, &samples).0);
    if !p.is_finite() {
        return Err(Error::NonFiniteGradient(
            "behavior cloning diverged; lower the learning rate".into(),
        ));
    }
    Ok((p, losses))
}

/// Group-standardized advantages: `(r - mean) / (std + 1e-8)`, all zero for
/// a degenerate group.
pub fn group_advantages(rewards: &[f64]) -> Vec<f64> {
    let n = rewards.len() as f64;
    if rewards.is_empty() {
        return Vec::new();
    }
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-12 * mean.abs().max(1.0) {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / (std + 1e-8)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub steps: Vec<StepRecord>,
    pub reward: f64,
}

/// G rollouts from one shared starting context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub rollouts: Vec<RolloutRecord>,
}

impl GroupSample {
    pub fn validate(&self) -> Result<()> {
        if self.rollouts.len() < 2 {
            return Err(invalid("a group needs at least two rollouts"));
        }
        if self.rollouts.iter().any(|r| r.steps.is_empty()) {
            return Err(invalid("every rollout needs at least one step"));
        }
        Ok(())
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.rollouts.iter().map(|r| r.reward).collect()
    }

    pub fn mean_reward(&self) -> f64 {
        let r = self.rewards();
        r.iter().sum::<f64>() / r.len().max(1) as f64
    }
}

/// Clipped surrogate, averaged over each rollout's actions and then over
/// the group.
pub fn surrogate_objective(
    params: &PolicyParams,
    group: &GroupSample,
    advantages: &[f64],
    clip: f64,
) -> f64 {
    let g = group.rollouts.len() as f64;
    group
        .rollouts
        .iter()
        .zip(advantages)
        .map(|(r, &adv)| {
            let per_step: f64 = r
                .steps
                .iter()
                .map(|s| {
                    let ratio = (params.log_prob(s.features.as_slice(), s.action) - s.logprob).exp();
                    (ratio * adv).min(ratio.clamp(1.0 - clip, 1.0 + clip) * adv)
                })
                .sum();
            per_step / r.steps.len() as f64
        })
        .sum::<f64>()
        / g
}

/// Analytic gradient of [`surrogate_objective`] in flat layout. Terms whose
/// clipped branch is active contribute nothing.
pub fn surrogate_gradient(
    params: &PolicyParams,
    group: &GroupSample,
    advantages: &[f64],
    clip: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; params.len()];
    let g = group.rollouts.len() as f64;
    for (r, &adv) in group.rollouts.iter().zip(advantages) {
        if adv == 0.0 {
            continue;
        }
        let weight = 1.0 / (g * r.steps.len() as f64);
        for s in &r.steps {
            let ratio = (params.log_prob(s.features.as_slice(), s.action) - s.logprob).exp();
            let clipped = (adv > 0.0 && ratio > 1.0 + clip) || (adv < 0.0 && ratio < 1.0 - clip);
            if clipped {
                continue;
            }
            params.accumulate_log_prob_grad(s.features.as_slice(), s.action, weight * ratio * adv, &mut grad);
        }
    }
    grad
}

/// One gradient-ascent step on the clipped surrogate.
pub fn grpo_update(params: &PolicyParams, group: &GroupSample, cfg: &TrainConfig) -> Result<PolicyParams> {
    group.validate()?;
    let advantages = group_advantages(&group.rewards());
    let grad = surrogate_gradient(params, group, &advantages, cfg.clip_ratio);
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(format!(
            "component {i} of {} is {}; rewards {:?}",
            grad.len(),
            grad[i],
            group.rewards()
        )));
    }
    let mut next = params.clone();
    next.add_scaled(&grad, cfg.learning_rate);
    Ok(next)
}

/// A fixed set of training and held-out episodes in one world.
#[derive(Debug, Clone)]
pub struct TrainingSuite {
    pub world: WorldMap,
    pub train: Vec<Episode>,
    pub heldout: Vec<Episode>,
}

/// Builds the training world and its episodes from the synthesis seed, so
/// every training seed sees the same data.
pub fn training_suite(
    world_cfg: &WorldConfig,
    synth_cfg: &SynthConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainingSuite> {
    let world = WorldMap::generate(
        "train_world",
        world_cfg,
        seed::derive_seed(synth_cfg.seed, &[seed::tag("train_world")]),
    )?;
    let cfg = SynthConfig {
        difficulties: train_cfg.difficulties.clone(),
        ..synth_cfg.clone()
    };
    let make = |name: &str, n: usize| -> Result<Vec<Episode>> {
        (0..n)
            .map(|i| {
                let id = format!("{name}_{i:05}");
                let s = seed::derive_seed(synth_cfg.seed, &[seed::tag(name), i as u64]);
                let mut ep = synthesize_episode(&world, &cfg, &id, s)?;
                ep.split = name.to_owned();
                Ok(ep)
            })
            .collect()
    };
    let train = make("train", train_cfg.train_episodes)?;
    let heldout = make("heldout", train_cfg.heldout_episodes)?;
    Ok(TrainingSuite {
        world,
        train,
        heldout,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub update: usize,
    pub mean_reward: Option<f64>,
    pub eval_sr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub curve: Vec<CurvePoint>,
    pub bc_losses: Vec<f64>,
    pub heldout: EvalReport,
}

/// Greedy evaluation of `params` over `episodes`.
pub fn evaluate_policy(
    params: &PolicyParams,
    episodes: &[Episode],
    world: &WorldMap,
    settings: &RolloutSettings,
    run_cfg: &RunConfig,
) -> Result<EvalReport> {
    let out = run_suite(
        || {
            Ok(Box::new(PolicyAgent::new(
                params.clone(),
                Sampling::Greedy,
                *settings,
            )) as Box<dyn crate::harness::Agent>)
        },
        episodes,
        world,
        run_cfg,
    )?;
    Ok(out.report)
}

/// Runs the selected stage plan. Deterministic for fixed configs.
pub fn train(
    world_cfg: &WorldConfig,
    synth_cfg: &SynthConfig,
    reward_cfg: &RewardConfig,
    run_cfg: &RunConfig,
    train_cfg: &TrainConfig,
    stage: Stage,
) -> Result<TrainOutcome> {
    let suite = training_suite(world_cfg, synth_cfg, train_cfg)?;
    train_on(&suite, reward_cfg, run_cfg, train_cfg, stage)
}

/// [`train`] on a prebuilt suite.
pub fn train_on(
    suite: &TrainingSuite,
    reward_cfg: &RewardConfig,
    run_cfg: &RunConfig,
    train_cfg: &TrainConfig,
    stage: Stage,
) -> Result<TrainOutcome> {
    train_cfg.validate()?;
    reward_cfg.validate()?;
    let settings = RolloutSettings {
        kinematics: suite.world.kinematics,
        node_threshold_m: reward_cfg.node_threshold_m,
        d_norm_m: train_cfg.d_norm_m,
        ..Default::default()
    };
    let eval_cfg = RunConfig {
        max_decision_steps: train_cfg.max_decision_steps,
        seed: train_cfg.seed,
        ..run_cfg.clone()
    };
    let eval = |p: &PolicyParams| -> Result<EvalReport> {
        evaluate_policy(p, &suite.heldout, &suite.world, &settings, &eval_cfg)
    };

    let mut rng = seed::rng_for(train_cfg.seed, &[seed::tag("train")]);
    let mut params = PolicyParams::random(FEATURE_DIM, train_cfg.init_scale, &mut rng);
    let mut curve = Vec::new();
    let mut bc_losses = Vec::new();

    if stage.runs_bc() {
        let (p, losses) = bc_pretrain(
            &params,
            &suite.train,
            &settings,
            train_cfg.bc_epochs,
            train_cfg.bc_learning_rate,
        )?;
        params = p;
        bc_losses = losses;
    }
    let mut last_report = eval(&params)?;
    curve.push(CurvePoint {
        update: 0,
        mean_reward: None,
        eval_sr: Some(last_report.overall.sr),
    });

    if stage.runs_grpo() {
        let contexts: Vec<Vec<RolloutState>> = suite
            .train
            .iter()
            .map(|ep| chunk_contexts(ep, &settings))
            .collect();
        let slots: Vec<(usize, usize)> = contexts
            .iter()
            .enumerate()
            .flat_map(|(e, c)| (0..c.len()).map(move |k| (e, k)))
            .collect();
        for update in 1..=train_cfg.updates {
            let (e, k) = slots[rng.random_range(0..slots.len())];
            let episode = &suite.train[e];
            let start = contexts[e][k];
            let gt = episode.gt_chunk(k);
            let mut rollouts = Vec::with_capacity(train_cfg.group_size);
            for _ in 0..train_cfg.group_size {
                let r = rollout_chunk(
                    &params,
                    episode,
                    start,
                    &settings,
                    &mut rng,
                    Sampling::Temperature(1.0),
                )?;
                let scored = score_step(
                    episode,
                    &settings.kinematics,
                    start.state,
                    start.progress,
                    &r.sequence.to_output_text(),
                    &gt,
                    reward_cfg,
                )?;
                rollouts.push(RolloutRecord {
                    steps: r.steps,
                    reward: scored.breakdown.r_all,
                });
            }
            let group = GroupSample { rollouts };
            params = grpo_update(&params, &group, train_cfg)?;
            let due = train_cfg.eval_every > 0 && update % train_cfg.eval_every == 0;
            let eval_sr = if due || update == train_cfg.updates {
                last_report = eval(&params)?;
                Some(last_report.overall.sr)
            } else {
                None
            };
            curve.push(CurvePoint {
                update,
                mean_reward: Some(group.mean_reward()),
                eval_sr,
            });
        }
    }

    debug_assert_eq!(params.len(), NUM_ACTIONS * (FEATURE_DIM + 1));
    Ok(TrainOutcome {
        params,
        curve,
        bc_losses,
        heldout: last_report,
    })
}
