//! Planar world model: positions, headings, the four-action UAV kinematics
//! and landmark-based sensor frames.
//!
//! Headings use a compass convention: 0° points north (+y) and angles grow
//! clockwise, so 90° is due east. Every [`Heading`] lives in (-180, 180].

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Maximum number of primitive actions in one decision step.
pub const MAX_CHUNK_LEN: usize = 8;

/// Planar position in meters (x east, y north).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance_to(&self, other: &Position) -> f64 {
        euclidean_distance(*self, *other)
    }

    /// Compass bearing (degrees) from `self` toward `other`.
    pub fn bearing_to(&self, other: &Position) -> Heading {
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        Heading::wrap(dx.atan2(dy).to_degrees())
    }
}

/// Heading angle in degrees, normalized to (-180, 180].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Heading(f64);

impl Heading {
    pub fn new(raw: f64) -> Result<Self> {
        normalize_heading(raw)
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }

    /// Infallible normalization for values already known to be finite.
    pub(crate) fn wrap(raw: f64) -> Self {
        debug_assert!(raw.is_finite());
        if raw > -180.0 && raw <= 180.0 {
            return Heading(raw);
        }
        let r = raw.rem_euclid(360.0);
        if r > 180.0 {
            Heading(r - 360.0)
        } else {
            Heading(r)
        }
    }
}

impl TryFrom<f64> for Heading {
    type Error = Error;

    fn try_from(raw: f64) -> Result<Self> {
        normalize_heading(raw)
    }
}

impl From<Heading> for f64 {
    fn from(h: Heading) -> f64 {
        h.0
    }
}

/// Normalizes an angle into (-180, 180]. Already-normalized values are
/// returned bit-for-bit unchanged.
pub fn normalize_heading(raw: f64) -> Result<Heading> {
    if !raw.is_finite() {
        return Err(invalid(format!("heading must be finite, got {raw}")));
    }
    Ok(Heading::wrap(raw))
}

/// Signed shortest rotation from `from` to `to`, in (-180, 180].
pub fn heading_delta(from: Heading, to: Heading) -> f64 {
    Heading::wrap(to.0 - from.0).0
}

/// Position plus heading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UavState {
    pub position: Position,
    pub heading: Heading,
}

impl UavState {
    pub fn new(x: f64, y: f64, heading_deg: f64) -> Result<Self> {
        let position = Position::new(x, y);
        if !position.is_finite() {
            return Err(invalid("position must be finite"));
        }
        Ok(Self {
            position,
            heading: normalize_heading(heading_deg)?,
        })
    }
}

/// The closed four-token action vocabulary.
///
/// Variant order doubles as the lexicographic tie-break order used by the
/// look-ahead search and greedy policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    MoveForward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl Action {
    pub const ALL: [Action; 4] = [
        Action::MoveForward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Stop,
    ];

    /// Movement actions (everything but STOP), in tie-break order.
    pub const MOVES: [Action; 3] = [Action::MoveForward, Action::TurnLeft, Action::TurnRight];

    pub fn token(self) -> &'static str {
        match self {
            Action::MoveForward => "MOVE_FORWARD",
            Action::TurnLeft => "TURN_LEFT",
            Action::TurnRight => "TURN_RIGHT",
            Action::Stop => "STOP",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "MOVE_FORWARD" => Ok(Action::MoveForward),
            "TURN_LEFT" => Ok(Action::TurnLeft),
            "TURN_RIGHT" => Ok(Action::TurnRight),
            "STOP" => Ok(Action::Stop),
            other => Err(Error::Format(format!("unknown action token {other:?}"))),
        }
    }
}

/// One decision step worth of actions: 1..=8 actions, STOP only as the last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Action>", into = "Vec<Action>")]
pub struct ActionSequence(Vec<Action>);

impl ActionSequence {
    pub fn new(actions: Vec<Action>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Format("action sequence is empty".into()));
        }
        if actions.len() > MAX_CHUNK_LEN {
            return Err(Error::Format(format!(
                "action sequence has {} actions, at most {MAX_CHUNK_LEN} allowed",
                actions.len()
            )));
        }
        if let Some(pos) = actions.iter().position(|a| *a == Action::Stop) {
            if pos + 1 != actions.len() {
                return Err(Error::Format("STOP must be the final action".into()));
            }
        }
        Ok(Self(actions))
    }

    pub fn stop() -> Self {
        Self(vec![Action::Stop])
    }

    pub fn actions(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ends_with_stop(&self) -> bool {
        self.0.last() == Some(&Action::Stop)
    }

    /// Renders the sequence in the JSON-list output format agents emit.
    pub fn to_output_text(&self) -> String {
        let tokens: Vec<&str> = self.0.iter().map(|a| a.token()).collect();
        serde_json::to_string(&tokens).expect("string list always serializes")
    }
}

impl TryFrom<Vec<Action>> for ActionSequence {
    type Error = Error;

    fn try_from(actions: Vec<Action>) -> Result<Self> {
        Self::new(actions)
    }
}

impl From<ActionSequence> for Vec<Action> {
    fn from(seq: ActionSequence) -> Vec<Action> {
        seq.0
    }
}

/// Step length and turn granularity of the discrete action space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Kinematics {
    pub forward_m: f64,
    pub turn_deg: f64,
}

impl Default for Kinematics {
    fn default() -> Self {
        Self {
            forward_m: 5.0,
            turn_deg: 30.0,
        }
    }
}

/// Result of executing an action sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutcome {
    pub final_state: UavState,
    /// Post-action state after every action, in order.
    pub visited: Vec<UavState>,
    pub terminated: bool,
}

impl Kinematics {
    pub fn apply(&self, state: UavState, action: Action) -> UavState {
        match action {
            Action::MoveForward => {
                let theta = state.heading.radians();
                UavState {
                    position: Position::new(
                        state.position.x + self.forward_m * theta.sin(),
                        state.position.y + self.forward_m * theta.cos(),
                    ),
                    heading: state.heading,
                }
            }
            Action::TurnLeft => UavState {
                position: state.position,
                heading: Heading::wrap(state.heading.0 - self.turn_deg),
            },
            Action::TurnRight => UavState {
                position: state.position,
                heading: Heading::wrap(state.heading.0 + self.turn_deg),
            },
            Action::Stop => state,
        }
    }

    pub fn apply_sequence(&self, state: UavState, seq: &ActionSequence) -> SequenceOutcome {
        let mut visited = Vec::with_capacity(seq.len());
        let mut current = state;
        for &action in seq.actions() {
            current = self.apply(current, action);
            visited.push(current);
        }
        SequenceOutcome {
            final_state: current,
            visited,
            terminated: seq.ends_with_stop(),
        }
    }

    /// Distance covered by a list of actions: only forwards contribute.
    pub fn path_length(&self, actions: &[Action]) -> f64 {
        actions.iter().filter(|a| **a == Action::MoveForward).count() as f64 * self.forward_m
    }
}

/// Applies one action under the default 5 m / 30° kinematics.
pub fn apply_action(state: UavState, action: Action) -> UavState {
    Kinematics::default().apply(state, action)
}

/// Folds a validated sequence under the default kinematics.
pub fn apply_sequence(state: UavState, seq: &ActionSequence) -> SequenceOutcome {
    Kinematics::default().apply_sequence(state, seq)
}

pub fn euclidean_distance(a: Position, b: Position) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: u32,
    pub position: Position,
    pub radius: f64,
    pub label: String,
}

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn contains(&self, p: Position) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn center(&self) -> Position {
        Position::new(
            0.5 * (self.min_x + self.max_x),
            0.5 * (self.min_y + self.max_y),
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Position {
        let x = if self.max_x > self.min_x {
            rng.random_range(self.min_x..=self.max_x)
        } else {
            self.min_x
        };
        let y = if self.max_y > self.min_y {
            rng.random_range(self.min_y..=self.max_y)
        } else {
            self.min_y
        };
        Position::new(x, y)
    }
}

/// Parameters for procedurally generated landmark fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub landmark_count: usize,
    pub min_landmark_radius_m: f64,
    pub max_landmark_radius_m: f64,
    pub kinematics: Kinematics,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            width_m: 600.0,
            height_m: 600.0,
            landmark_count: 1000,
            min_landmark_radius_m: 2.0,
            max_landmark_radius_m: 8.0,
            kinematics: Kinematics::default(),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.width_m >= 0.0 && self.height_m >= 0.0) {
            return Err(invalid("world extent must be non-negative"));
        }
        if !(self.min_landmark_radius_m > 0.0
            && self.max_landmark_radius_m >= self.min_landmark_radius_m)
        {
            return Err(invalid("landmark radii must be positive and ordered"));
        }
        if !(self.kinematics.forward_m > 0.0 && self.kinematics.turn_deg > 0.0) {
            return Err(invalid("kinematics step sizes must be positive"));
        }
        Ok(())
    }
}

const LANDMARK_COLORS: [&str; 8] = [
    "red", "white", "gray", "blue", "green", "brown", "yellow", "black",
];
const LANDMARK_KINDS: [&str; 12] = [
    "water tower",
    "office block",
    "warehouse",
    "parking lot",
    "church spire",
    "radio mast",
    "roundabout",
    "football pitch",
    "apartment tower",
    "greenhouse",
    "bridge pier",
    "silo",
];

/// Landmark field the UAV flies over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldMap {
    pub id: String,
    pub bounds: Bounds,
    pub landmarks: Vec<Landmark>,
    pub rng_seed: u64,
    #[serde(default)]
    pub kinematics: Kinematics,
}

impl WorldMap {
    /// Builds a map from explicit landmarks, checking bounds and id uniqueness.
    pub fn new(
        id: impl Into<String>,
        bounds: Bounds,
        landmarks: Vec<Landmark>,
        rng_seed: u64,
    ) -> Result<Self> {
        let mut ids: Vec<u32> = landmarks.iter().map(|l| l.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("landmark ids must be unique"));
        }
        for l in &landmarks {
            if !bounds.contains(l.position) {
                return Err(invalid(format!("landmark {} lies outside bounds", l.id)));
            }
            if !(l.radius > 0.0) {
                return Err(invalid(format!("landmark {} has non-positive radius", l.id)));
            }
        }
        Ok(Self {
            id: id.into(),
            bounds,
            landmarks,
            rng_seed,
            kinematics: Kinematics::default(),
        })
    }

    /// Deterministically scatters landmarks uniformly over the bounds.
    pub fn generate(id: impl Into<String>, cfg: &WorldConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bounds = Bounds {
            min_x: 0.0,
            min_y: 0.0,
            max_x: cfg.width_m,
            max_y: cfg.height_m,
        };
        let landmarks = (0..cfg.landmark_count)
            .map(|i| {
                let position = bounds.sample(&mut rng);
                let radius = rng.random_range(cfg.min_landmark_radius_m..=cfg.max_landmark_radius_m);
                let color = LANDMARK_COLORS[rng.random_range(0..LANDMARK_COLORS.len())];
                let kind = LANDMARK_KINDS[rng.random_range(0..LANDMARK_KINDS.len())];
                Landmark {
                    id: i as u32,
                    position,
                    radius,
                    label: format!("{color} {kind}"),
                }
            })
            .collect();
        let mut world = Self::new(id, bounds, landmarks, seed)?;
        world.kinematics = cfg.kinematics;
        Ok(world)
    }

    pub fn landmark(&self, id: u32) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleLandmark {
    pub id: u32,
    /// Relative bearing in (-180, 180]; 0 is straight ahead.
    pub bearing_deg: f64,
    pub distance_m: f64,
}

/// Feature-level stand-in for a first-person camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub step: usize,
    pub heading: Heading,
    pub visible: Vec<VisibleLandmark>,
}

/// Lists the landmarks within `sensor_radius`, nearest first.
pub fn render_frame(
    world: &WorldMap,
    state: &UavState,
    step: usize,
    sensor_radius: f64,
) -> Result<SensorFrame> {
    if !(sensor_radius > 0.0) {
        return Err(invalid("sensor radius must be positive"));
    }
    let mut visible: Vec<VisibleLandmark> = world
        .landmarks
        .iter()
        .filter_map(|l| {
            let distance_m = state.position.distance_to(&l.position);
            (distance_m <= sensor_radius).then(|| VisibleLandmark {
                id: l.id,
                bearing_deg: heading_delta(state.heading, state.position.bearing_to(&l.position)),
                distance_m,
            })
        })
        .collect();
    visible.sort_by(|a, b| a.distance_m.total_cmp(&b.distance_m).then(a.id.cmp(&b.id)));
    Ok(SensorFrame {
        step,
        heading: state.heading,
        visible,
    })
}
