//! Navigation metrics (NE, SR, OSR, SPL), stop diagnostics and report
//! aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::synth::{Difficulty, Episode};
use crate::world::{euclidean_distance, Action, Kinematics, Position, UavState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    Stop,
    MaxSteps,
    FormatAbort,
}

/// Raw record of one evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub episode_id: String,
    /// Start state followed by every post-action state.
    pub states: Vec<UavState>,
    /// Executed primitive actions (STOP included when emitted).
    pub actions: Vec<Action>,
    /// Raw agent output per query, retries included.
    pub outputs: Vec<String>,
    pub termination: TerminationCause,
    /// Transport or envelope failure that ended the episode, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub wall_time_ms: u64,
}

impl TrajectoryLog {
    pub fn final_position(&self) -> Position {
        self.states
            .last()
            .map(|s| s.position)
            .unwrap_or_default()
    }

    pub fn decision_steps(&self) -> usize {
        self.outputs.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopClass {
    Correct,
    EarlyStop,
    MissedStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub split: String,
    pub difficulty: Difficulty,
    pub ne: f64,
    pub success: bool,
    pub oracle_success: bool,
    pub spl: f64,
    pub stop_class: StopClass,
    pub termination: TerminationCause,
    pub path_length_m: f64,
    pub shortest_path_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

pub fn navigation_error(final_position: Position, target: Position) -> f64 {
    euclidean_distance(final_position, target)
}

/// Success is strict: exactly at the threshold counts as a miss.
pub fn is_success(ne: f64, threshold: f64) -> bool {
    ne < threshold
}

pub fn oracle_success(log: &TrajectoryLog, target: Position, threshold: f64) -> bool {
    log.states
        .iter()
        .any(|s| euclidean_distance(s.position, target) < threshold)
}

pub fn spl(success: bool, shortest: f64, actual: f64) -> Result<f64> {
    if !(shortest > 0.0) {
        return Err(invalid("shortest path length must be positive"));
    }
    if !(actual >= 0.0) {
        return Err(invalid("actual path length must be non-negative"));
    }
    Ok(if success {
        shortest / actual.max(shortest)
    } else {
        0.0
    })
}

pub fn stop_class(log: &TrajectoryLog, target: Position, threshold: f64) -> StopClass {
    let ne = navigation_error(log.final_position(), target);
    match log.termination {
        TerminationCause::Stop if ne >= threshold => StopClass::EarlyStop,
        TerminationCause::MaxSteps if oracle_success(log, target, threshold) => {
            StopClass::MissedStop
        }
        _ => StopClass::Correct,
    }
}

/// Every metric for one episode from its log.
pub fn evaluate_log(
    log: &TrajectoryLog,
    episode: &Episode,
    kin: &Kinematics,
    threshold: f64,
) -> Result<EpisodeResult> {
    if log.states.is_empty() {
        return Err(invalid(format!("log for {} has no states", log.episode_id)));
    }
    let target = episode.target();
    let ne = navigation_error(log.final_position(), target);
    let success = is_success(ne, threshold);
    let path_length_m = kin.path_length(&log.actions);
    let shortest_path_m = episode.shortest_path_m();
    Ok(EpisodeResult {
        episode_id: episode.id.clone(),
        split: episode.split.clone(),
        difficulty: episode.difficulty,
        ne,
        success,
        oracle_success: oracle_success(log, target, threshold),
        spl: spl(success, shortest_path_m, path_length_m)?,
        stop_class: stop_class(log, target, threshold),
        termination: log.termination,
        path_length_m,
        shortest_path_m,
        failure: log.failure.clone(),
    })
}

/// Aggregate metrics for a group of episodes; rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    #[serde(rename = "NE")]
    pub ne: f64,
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "OSR")]
    pub osr: f64,
    #[serde(rename = "SPL")]
    pub spl: f64,
    pub early_stop: usize,
    pub missed_stop: usize,
    pub format_abort: usize,
}

impl GroupStats {
    fn from_results(results: &[&EpisodeResult]) -> Self {
        let n = results.len() as f64;
        let pct = |f: &dyn Fn(&EpisodeResult) -> bool| {
            100.0 * results.iter().filter(|r| f(r)).count() as f64 / n
        };
        Self {
            count: results.len(),
            ne: results.iter().map(|r| r.ne).sum::<f64>() / n,
            sr: pct(&|r| r.success),
            osr: pct(&|r| r.oracle_success),
            spl: 100.0 * results.iter().map(|r| r.spl).sum::<f64>() / n,
            early_stop: results
                .iter()
                .filter(|r| r.stop_class == StopClass::EarlyStop)
                .count(),
            missed_stop: results
                .iter()
                .filter(|r| r.stop_class == StopClass::MissedStop)
                .count(),
            format_abort: results
                .iter()
                .filter(|r| r.termination == TerminationCause::FormatAbort)
                .count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMeta {
    pub agent: String,
    pub memory: String,
    pub success_threshold_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub overall: GroupStats,
    pub by_split: BTreeMap<String, GroupStats>,
    pub by_difficulty: BTreeMap<String, GroupStats>,
}

/// Aggregates per-episode results. Results are ordered by episode id
/// first, so the report does not depend on input order.
pub fn aggregate(results: &[EpisodeResult], meta: ReportMeta) -> Result<EvalReport> {
    if results.is_empty() {
        return Err(invalid("cannot aggregate an empty result set"));
    }
    let mut sorted: Vec<&EpisodeResult> = results.iter().collect();
    sorted.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));

    let mut by_split: BTreeMap<String, Vec<&EpisodeResult>> = BTreeMap::new();
    let mut by_difficulty: BTreeMap<String, Vec<&EpisodeResult>> = BTreeMap::new();
    for r in &sorted {
        by_split.entry(r.split.clone()).or_default().push(r);
        by_difficulty
            .entry(r.difficulty.to_string())
            .or_default()
            .push(r);
    }
    let stats = |m: BTreeMap<String, Vec<&EpisodeResult>>| {
        m.into_iter()
            .map(|(k, v)| (k, GroupStats::from_results(&v)))
            .collect()
    };
    Ok(EvalReport {
        meta,
        overall: GroupStats::from_results(&sorted),
        by_split: stats(by_split),
        by_difficulty: stats(by_difficulty),
    })
}
