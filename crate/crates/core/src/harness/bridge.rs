//! Line-delimited JSON bridge to external agent processes.
//!
//! The harness writes one `observe` object per decision step on the agent's
//! stdin and reads one `act` object back from its stdout:
//!
//! ```text
//! -> {"type":"observe","episode_id":"...","step":3,"instruction":"...",
//!     "state":{"x":..,"y":..,"heading":..},"action_history":["MOVE_FORWARD",..],
//!     "current_frame":{..},"history_frames":[{..},..]}
//! <- {"type":"act","output":"[\"MOVE_FORWARD\",\"STOP\"]"}
//! ```
//!
//! Anything the agent prints on stderr is passed through untouched.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Agent, AgentFailure};
use crate::error::{Error, Result};
use crate::memory::Observation;
use crate::synth::Episode;
use crate::world::{Action, Heading, Position, SensorFrame, UavState, WorldMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireState {
    pub x: f64,
    pub y: f64,
    pub heading: Heading,
}

impl From<UavState> for WireState {
    fn from(s: UavState) -> Self {
        Self {
            x: s.position.x,
            y: s.position.y,
            heading: s.heading,
        }
    }
}

impl From<WireState> for UavState {
    fn from(w: WireState) -> Self {
        UavState {
            position: Position::new(w.x, w.y),
            heading: w.heading,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserveMessage {
    pub episode_id: String,
    pub step: usize,
    pub instruction: String,
    pub state: WireState,
    pub action_history: Vec<Action>,
    pub current_frame: SensorFrame,
    pub history_frames: Vec<SensorFrame>,
}

impl ObserveMessage {
    pub fn new(episode_id: &str, obs: &Observation) -> Self {
        Self {
            episode_id: episode_id.to_owned(),
            step: obs.step,
            instruction: obs.instruction.clone(),
            state: obs.state.into(),
            action_history: obs.action_history.clone(),
            current_frame: obs.current_frame.clone(),
            history_frames: obs.history_frames.clone(),
        }
    }

    pub fn observation(&self) -> Observation {
        Observation {
            instruction: self.instruction.clone(),
            state: self.state.into(),
            action_history: self.action_history.clone(),
            current_frame: self.current_frame.clone(),
            history_frames: self.history_frames.clone(),
            step: self.step,
        }
    }
}

/// One line on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BridgeMessage {
    Observe(ObserveMessage),
    Act { output: String },
}

pub fn encode(msg: &BridgeMessage) -> Result<String> {
    Ok(serde_json::to_string(msg)?)
}

pub fn decode(line: &str) -> Result<BridgeMessage> {
    Ok(serde_json::from_str(line.trim_end_matches(['\r', '\n']))?)
}

/// Extracts the raw output from an agent reply line.
pub fn decode_act(line: &str) -> std::result::Result<String, AgentFailure> {
    match decode(line) {
        Ok(BridgeMessage::Act { output }) => Ok(output),
        Ok(BridgeMessage::Observe(_)) => Err(AgentFailure::Envelope(
            "expected an act message, got observe".into(),
        )),
        Err(e) => Err(AgentFailure::Envelope(e.to_string())),
    }
}

/// Agent hosted in a child process (`sh -c <command>`).
pub struct BridgeAgent {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    episode_id: String,
}

impl BridgeAgent {
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Bridge(format!("cannot spawn {command:?}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| Error::Bridge("agent stdout unavailable".into()))?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            command: command.to_owned(),
            child,
            stdin,
            lines: rx,
            timeout,
            episode_id: String::new(),
        })
    }
}

impl Agent for BridgeAgent {
    fn name(&self) -> String {
        format!("bridge:{}", self.command)
    }

    fn begin_episode(&mut self, episode: &Episode, _world: &WorldMap, _seed: u64) -> Result<()> {
        self.episode_id = episode.id.clone();
        Ok(())
    }

    fn decide(&mut self, obs: &Observation) -> std::result::Result<String, AgentFailure> {
        let msg = BridgeMessage::Observe(ObserveMessage::new(&self.episode_id, obs));
        let line = encode(&msg).map_err(|e| AgentFailure::Transport(e.to_string()))?;
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| AgentFailure::Transport("agent stdin closed".into()))?;
        writeln!(stdin, "{line}")
            .and_then(|_| stdin.flush())
            .map_err(|e| AgentFailure::Transport(e.to_string()))?;
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => decode_act(&reply),
            Ok(Err(e)) => Err(AgentFailure::Transport(e.to_string())),
            Err(RecvTimeoutError::Timeout) => Err(AgentFailure::Timeout),
            Err(RecvTimeoutError::Disconnected) => {
                Err(AgentFailure::Transport("agent closed its stdout".into()))
            }
        }
    }
}

impl Drop for BridgeAgent {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
