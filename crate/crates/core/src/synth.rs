//! Episode synthesis: start/target selection, greedy landmark-chain planning
//! under a maximum-gap constraint, receding-horizon expert trajectories,
//! difficulty labels and template instructions.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed;
use crate::world::{
    Action, ActionSequence, Heading, Kinematics, Landmark, Position, UavState, WorldMap,
    MAX_CHUNK_LEN,
};

/// Path-length breakpoints separating Easy/Medium and Medium/Hard.
pub const EASY_MEDIUM_BREAK_M: f64 = 135.0;
pub const MEDIUM_HARD_BREAK_M: f64 = 235.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Difficulty::Easy => "Easy",
            Difficulty::Medium => "Medium",
            Difficulty::Hard => "Hard",
        };
        f.write_str(s)
    }
}

pub fn classify_difficulty(path_length_m: f64) -> Difficulty {
    if path_length_m < EASY_MEDIUM_BREAK_M {
        Difficulty::Easy
    } else if path_length_m < MEDIUM_HARD_BREAK_M {
        Difficulty::Medium
    } else {
        Difficulty::Hard
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Largest allowed gap between consecutive chain nodes.
    pub d_max_m: f64,
    /// Accepted range for the number of landmarks on a route, target included.
    pub min_landmarks: usize,
    pub max_landmarks: usize,
    /// Arrival tolerance for intermediate landmarks.
    pub node_threshold_m: f64,
    /// Arrival tolerance for the final segment; at most `success_threshold_m`.
    pub target_threshold_m: f64,
    pub horizon: usize,
    pub success_threshold_m: f64,
    /// Primitive-action budget per segment.
    pub segment_budget: usize,
    pub min_target_distance_m: f64,
    pub max_target_distance_m: f64,
    /// Difficulty labels an accepted episode may carry.
    pub difficulties: Vec<Difficulty>,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            d_max_m: 70.0,
            min_landmarks: 2,
            max_landmarks: 6,
            node_threshold_m: 10.0,
            target_threshold_m: 15.0,
            horizon: 3,
            success_threshold_m: 20.0,
            segment_budget: 200,
            min_target_distance_m: 60.0,
            max_target_distance_m: 260.0,
            difficulties: Difficulty::ALL.to_vec(),
            max_attempts: 500,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(invalid("horizon must be at least 1"));
        }
        if !(self.node_threshold_m > 0.0 && self.success_threshold_m > 0.0 && self.d_max_m > 0.0)
        {
            return Err(invalid("thresholds and D_max must be positive"));
        }
        if !(self.target_threshold_m > 0.0 && self.target_threshold_m <= self.success_threshold_m) {
            return Err(invalid("target threshold must lie in (0, success_threshold]"));
        }
        if self.min_landmarks > self.max_landmarks {
            return Err(invalid("min_landmarks exceeds max_landmarks"));
        }
        if !(self.min_target_distance_m >= 0.0
            && self.max_target_distance_m >= self.min_target_distance_m)
        {
            return Err(invalid("target distance range is invalid"));
        }
        if self.difficulties.is_empty() {
            return Err(invalid("at least one difficulty must be allowed"));
        }
        Ok(())
    }
}

/// Why a synthesis attempt was discarded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    /// No landmark within D_max brings the chain closer to the target.
    SparseLandmarks,
    TooFewLandmarks(usize),
    TooManyLandmarks,
    /// The look-ahead search ran out of budget on a segment.
    SegmentFailure { segment: usize },
    NoTargetInRange,
    DifficultyFiltered(Difficulty),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::SparseLandmarks => f.write_str("sparse landmarks"),
            Rejection::TooFewLandmarks(n) => write!(f, "too few landmarks ({n})"),
            Rejection::TooManyLandmarks => f.write_str("too many landmarks"),
            Rejection::SegmentFailure { segment } => write!(f, "segment {segment} failed"),
            Rejection::NoTargetInRange => f.write_str("no target in distance range"),
            Rejection::DifficultyFiltered(d) => write!(f, "difficulty {d} filtered"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeChain {
    pub start: UavState,
    pub intermediate: Vec<Landmark>,
    pub target: Landmark,
}

impl NodeChain {
    /// Landmarks on the route: intermediates plus the target.
    pub fn landmark_count(&self) -> usize {
        self.intermediate.len() + 1
    }

    /// Positions of every node after the start, target last.
    pub fn node_positions(&self) -> Vec<Position> {
        self.intermediate
            .iter()
            .chain(std::iter::once(&self.target))
            .map(|l| l.position)
            .collect()
    }

    pub fn max_gap(&self) -> f64 {
        let mut prev = self.start.position;
        let mut gap: f64 = 0.0;
        for p in self.node_positions() {
            gap = gap.max(prev.distance_to(&p));
            prev = p;
        }
        gap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub seed: u64,
    /// Id of the world map the episode was synthesized in.
    pub world: String,
    #[serde(default)]
    pub split: String,
    pub chain: NodeChain,
    pub expert: Vec<Action>,
    pub expert_chunks: Vec<ActionSequence>,
    /// Expert state on arrival at each chain node after the start, target last.
    pub node_states: Vec<UavState>,
    pub instruction: String,
    pub difficulty: Difficulty,
    pub path_length_m: f64,
}

impl Episode {
    pub fn start(&self) -> UavState {
        self.chain.start
    }

    pub fn target(&self) -> Position {
        self.chain.target.position
    }

    /// Straight-line start-to-target distance, the SPL reference length.
    pub fn shortest_path_m(&self) -> f64 {
        self.chain.start.position.distance_to(&self.chain.target.position)
    }

    /// Expert chunk for a decision step; past the end the expert would stop.
    pub fn gt_chunk(&self, step_index: usize) -> ActionSequence {
        self.expert_chunks
            .get(step_index)
            .cloned()
            .unwrap_or_else(ActionSequence::stop)
    }

    /// Expert state at the start of each decision step.
    pub fn chunk_start_states(&self, kin: &Kinematics) -> Vec<UavState> {
        let mut states = Vec::with_capacity(self.expert_chunks.len());
        let mut s = self.chain.start;
        for chunk in &self.expert_chunks {
            states.push(s);
            s = kin.apply_sequence(s, chunk).final_state;
        }
        states
    }
}

/// Uniform position over the bounds, heading on the 30° grid.
pub fn sample_start<R: Rng + ?Sized>(world: &WorldMap, rng: &mut R) -> UavState {
    let position = world.bounds.sample(rng);
    let k = rng.random_range(0..12);
    UavState {
        position,
        heading: Heading::wrap(-150.0 + 30.0 * k as f64),
    }
}

/// Greedy corridor planning: hop to the landmark within D_max that lands
/// closest to the target until the target itself is within D_max.
pub fn plan_landmarks(
    world: &WorldMap,
    start: UavState,
    target: &Landmark,
    cfg: &SynthConfig,
) -> std::result::Result<NodeChain, Rejection> {
    let goal = target.position;
    let mut current = start.position;
    let mut chain: Vec<Landmark> = Vec::new();
    let mut used = vec![target.id];
    loop {
        let remaining = current.distance_to(&goal);
        if remaining <= cfg.d_max_m {
            break;
        }
        let best = world
            .landmarks
            .iter()
            .filter(|l| !used.contains(&l.id))
            .filter(|l| current.distance_to(&l.position) <= cfg.d_max_m)
            .map(|l| (l.position.distance_to(&goal), l))
            .filter(|(d, _)| *d < remaining)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
        let Some((_, next)) = best else {
            return Err(Rejection::SparseLandmarks);
        };
        if chain.len() + 1 >= cfg.max_landmarks {
            return Err(Rejection::TooManyLandmarks);
        }
        used.push(next.id);
        current = next.position;
        chain.push(next.clone());
    }
    if chain.len() + 1 < cfg.min_landmarks {
        return Err(Rejection::TooFewLandmarks(chain.len() + 1));
    }
    Ok(NodeChain {
        start,
        intermediate: chain,
        target: target.clone(),
    })
}

/// First action of the length-`horizon` movement sequence whose end point is
/// closest to `goal`. Exhaustive; ties go to the lexicographically first
/// sequence under MOVE_FORWARD < TURN_LEFT < TURN_RIGHT.
pub fn lookahead_step(kin: &Kinematics, state: UavState, goal: Position, horizon: usize) -> Action {
    fn search(
        kin: &Kinematics,
        state: UavState,
        goal: Position,
        depth: usize,
        first: Action,
        best: &mut (f64, Action),
    ) {
        if depth == 0 {
            let d = state.position.distance_to(&goal);
            if d < best.0 - 1e-9 {
                *best = (d, first);
            }
            return;
        }
        for a in Action::MOVES {
            search(kin, kin.apply(state, a), goal, depth - 1, first, best);
        }
    }

    let horizon = horizon.max(1);
    let mut best = (f64::INFINITY, Action::MoveForward);
    for a in Action::MOVES {
        search(kin, kin.apply(state, a), goal, horizon - 1, a, &mut best);
    }
    best.1
}

/// Receding-horizon segment: commit one look-ahead action at a time until
/// strictly inside `threshold` of `node`.
pub fn lookahead_segment(
    kin: &Kinematics,
    from: UavState,
    node: Position,
    threshold: f64,
    horizon: usize,
    budget: usize,
) -> Option<(Vec<Action>, UavState)> {
    let mut state = from;
    let mut actions = Vec::new();
    while state.position.distance_to(&node) >= threshold {
        if actions.len() >= budget {
            return None;
        }
        let a = lookahead_step(kin, state, node, horizon);
        state = kin.apply(state, a);
        actions.push(a);
    }
    Some((actions, state))
}

/// Splits a full expert action list into decision-step chunks of at most 8.
pub fn chunk_expert(expert: &[Action]) -> Vec<ActionSequence> {
    expert
        .chunks(MAX_CHUNK_LEN)
        .map(|c| ActionSequence::new(c.to_vec()).expect("chunks of a valid expert are valid"))
        .collect()
}

/// Expert trajectory through every chain node, ending in STOP.
pub fn synthesize_trajectory(
    world: &WorldMap,
    chain: NodeChain,
    cfg: &SynthConfig,
    id: impl Into<String>,
    episode_seed: u64,
) -> std::result::Result<Episode, Rejection> {
    let kin = &world.kinematics;
    let mut state = chain.start;
    let mut expert = Vec::new();
    let mut node_states = Vec::new();
    let nodes = chain.node_positions();
    let last = nodes.len() - 1;
    for (segment, node) in nodes.into_iter().enumerate() {
        let threshold = if segment == last {
            cfg.target_threshold_m
        } else {
            cfg.node_threshold_m
        };
        let (actions, end) = lookahead_segment(
            kin,
            state,
            node,
            threshold,
            cfg.horizon,
            cfg.segment_budget,
        )
        .ok_or(Rejection::SegmentFailure { segment })?;
        expert.extend(actions);
        node_states.push(end);
        state = end;
    }
    expert.push(Action::Stop);
    let path_length_m = kin.path_length(&expert);
    let difficulty = classify_difficulty(path_length_m);
    let instruction = render_instruction(&chain);
    Ok(Episode {
        id: id.into(),
        seed: episode_seed,
        world: world.id.clone(),
        split: String::new(),
        expert_chunks: chunk_expert(&expert),
        chain,
        expert,
        node_states,
        instruction,
        difficulty,
        path_length_m,
    })
}

/// One clause per landmark in chain order; the last names the target.
pub fn render_instruction(chain: &NodeChain) -> String {
    let target = format!("fly to the {} and stop.", chain.target.label);
    if chain.intermediate.is_empty() {
        let mut s = target;
        s.replace_range(0..1, "F");
        return s;
    }
    let mut clauses: Vec<String> = chain
        .intermediate
        .iter()
        .map(|l| format!("head toward the {}", l.label))
        .collect();
    clauses[0].replace_range(0..1, "H");
    clauses.push(target);
    clauses.join(", then ")
}

/// Samples a start and a target landmark at a distance within the
/// configured range.
fn sample_task<R: Rng + ?Sized>(
    world: &WorldMap,
    cfg: &SynthConfig,
    rng: &mut R,
) -> std::result::Result<(UavState, Landmark), Rejection> {
    let start = sample_start(world, rng);
    let candidates: Vec<&Landmark> = world
        .landmarks
        .iter()
        .filter(|l| {
            let d = start.position.distance_to(&l.position);
            d >= cfg.min_target_distance_m && d <= cfg.max_target_distance_m
        })
        .collect();
    if candidates.is_empty() {
        return Err(Rejection::NoTargetInRange);
    }
    let target = candidates[rng.random_range(0..candidates.len())].clone();
    Ok((start, target))
}

/// One synthesis attempt with a caller-supplied RNG.
pub fn try_synthesize<R: Rng + ?Sized>(
    world: &WorldMap,
    cfg: &SynthConfig,
    id: &str,
    episode_seed: u64,
    rng: &mut R,
) -> std::result::Result<Episode, Rejection> {
    let (start, target) = sample_task(world, cfg, rng)?;
    let chain = plan_landmarks(world, start, &target, cfg)?;
    let episode = synthesize_trajectory(world, chain, cfg, id, episode_seed)?;
    if !cfg.difficulties.contains(&episode.difficulty) {
        return Err(Rejection::DifficultyFiltered(episode.difficulty));
    }
    Ok(episode)
}

/// Deterministic episode from `(world, config, episode_seed)`, retrying
/// rejected samples up to `max_attempts` times.
pub fn synthesize_episode(
    world: &WorldMap,
    cfg: &SynthConfig,
    id: &str,
    episode_seed: u64,
) -> Result<Episode> {
    cfg.validate()?;
    let mut rng = seed::rng_for(episode_seed, &[seed::tag("episode")]);
    let mut last = None;
    for _ in 0..cfg.max_attempts.max(1) {
        match try_synthesize(world, cfg, id, episode_seed, &mut rng) {
            Ok(ep) => return Ok(ep),
            Err(r) => last = Some(r),
        }
    }
    Err(invalid(format!(
        "episode {id}: no accepted sample after {} attempts (last rejection: {})",
        cfg.max_attempts,
        last.map(|r| r.to_string()).unwrap_or_default()
    )))
}
