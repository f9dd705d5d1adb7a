//! Problem data: targets moving along timed linear segments, the shared depot,
//! and the instance file format.
//!
//! Segments are the unit the formulations work with. A target owns one or more
//! segments; a maximal chain of time-contiguous segments is one of its time
//! windows. Windows are derived on demand and never stored.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Current instance file version.
pub const FORMAT_VERSION: u32 = 1;

/// Relative slack used when comparing positions of abutting segments and
/// segment endpoints against the arena boundary.
const GEOMETRY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// One linear piece of a target trajectory inside a time window.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: usize,
    pub target_id: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub p_start: Point2,
    pub p_end: Point2,
    velocity: Point2,
}

impl Segment {
    pub fn new(
        id: usize,
        target_id: usize,
        t_start: f64,
        t_end: f64,
        p_start: Point2,
        p_end: Point2,
    ) -> Self {
        let velocity = (p_end - p_start) * (1.0 / (t_end - t_start));
        Self {
            id,
            target_id,
            t_start,
            t_end,
            p_start,
            p_end,
            velocity,
        }
    }

    /// `(p_end - p_start) / (t_end - t_start)`; non-finite for degenerate segments.
    pub fn velocity(&self) -> Point2 {
        self.velocity
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn contains_time(&self, t: f64) -> bool {
        self.t_start <= t && t <= self.t_end
    }

    /// Position of the target at time `t`, which must lie inside the segment's window.
    pub fn position_at(&self, t: f64) -> Result<Point2, ModelError> {
        if !self.contains_time(t) {
            return Err(ModelError::OutsideWindow {
                segment: self.id,
                time: t,
                t_start: self.t_start,
                t_end: self.t_end,
            });
        }
        Ok(self.position_unchecked(t))
    }

    /// Affine extrapolation of the segment to any `t`. Endpoints are returned verbatim.
    pub fn position_unchecked(&self, t: f64) -> Point2 {
        if t == self.t_start {
            self.p_start
        } else if t == self.t_end {
            self.p_end
        } else {
            self.p_start + self.velocity * (t - self.t_start)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub id: usize,
    pub segments: Vec<Segment>,
}

impl Target {
    /// Maximal chains of time-contiguous segments, as `[start, end]` intervals.
    pub fn windows(&self) -> Vec<(f64, f64)> {
        let mut windows: Vec<(f64, f64)> = Vec::new();
        for seg in &self.segments {
            match windows.last_mut() {
                Some(last) if last.1 == seg.t_start => last.1 = seg.t_end,
                _ => windows.push((seg.t_start, seg.t_end)),
            }
        }
        windows
    }

    pub fn max_speed(&self) -> f64 {
        self.segments.iter().map(Segment::speed).fold(0.0, f64::max)
    }
}

/// A complete problem: depot, fleet, horizon and target trajectories.
///
/// Segment ids are dense, `1..=n_segments()`, in (target, time) order. Both
/// depot copies sit at `depot`; the start copy has window `[0, 0]` and the end
/// copy `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub depot: Point2,
    pub n_agents: usize,
    pub v_max: f64,
    pub horizon: f64,
    pub arena_side: f64,
    pub targets: Vec<Target>,
}

/// Segment as given by a caller or a file, before id assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub t_start: f64,
    pub t_end: f64,
    pub p_start: Point2,
    pub p_end: Point2,
}

impl SegmentSpec {
    /// A target parked at `p` for `[t_start, t_end]`.
    pub fn stationary(p: Point2, t_start: f64, t_end: f64) -> Self {
        Self {
            t_start,
            t_end,
            p_start: p,
            p_end: p,
        }
    }
}

impl Instance {
    /// Builds an instance from per-target segment lists. Targets get ids
    /// `1..=n` in the given order, segments are sorted by start time and
    /// numbered densely across the instance.
    pub fn new(
        depot: Point2,
        n_agents: usize,
        v_max: f64,
        horizon: f64,
        arena_side: f64,
        targets: Vec<Vec<SegmentSpec>>,
    ) -> Self {
        let mut next_id = 1;
        let targets = targets
            .into_iter()
            .enumerate()
            .map(|(k, mut specs)| {
                specs.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
                let target_id = k + 1;
                let segments = specs
                    .into_iter()
                    .map(|s| {
                        let seg = Segment::new(
                            next_id, target_id, s.t_start, s.t_end, s.p_start, s.p_end,
                        );
                        next_id += 1;
                        seg
                    })
                    .collect();
                Target {
                    id: target_id,
                    segments,
                }
            })
            .collect();
        Self {
            depot,
            n_agents,
            v_max,
            horizon,
            arena_side,
            targets,
        }
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn n_segments(&self) -> usize {
        self.targets.iter().map(|t| t.segments.len()).sum()
    }

    pub fn segments(&self) -> impl Iterator<Item = &Segment> + '_ {
        self.targets.iter().flat_map(|t| t.segments.iter())
    }

    /// Looks up a segment by its id.
    pub fn segment(&self, id: usize) -> Option<&Segment> {
        // ids are dense in (target, time) order for instances built through `new`
        let mut seen = 0;
        for target in &self.targets {
            if id > seen && id <= seen + target.segments.len() {
                let seg = &target.segments[id - seen - 1];
                if seg.id == id {
                    return Some(seg);
                }
                break;
            }
            seen += target.segments.len();
        }
        self.segments().find(|s| s.id == id)
    }

    pub fn target(&self, id: usize) -> Option<&Target> {
        self.targets.iter().find(|t| t.id == id)
    }

    /// Big-M distance: the diagonal of the arena square.
    pub fn big_m_distance(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.arena_side
    }

    /// Copy with a different fleet size.
    pub fn with_agents(&self, n_agents: usize) -> Self {
        Self {
            n_agents,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

impl Finding {
    fn error(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            message: message.into(),
        }
    }

    fn warning(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Checks the structural assumptions the formulations rely on. Never fails;
/// a target moving at or above the agent speed is reported as a warning only.
pub fn validate_instance(inst: &Instance) -> Vec<Finding> {
    let mut out = Vec::new();

    if !inst.depot.is_finite() {
        out.push(Finding::error("depot position is not finite"));
    }
    for (name, value) in [
        ("v_max", inst.v_max),
        ("horizon", inst.horizon),
        ("arena_side", inst.arena_side),
    ] {
        if !(value.is_finite() && value > 0.0) {
            out.push(Finding::error(format!("{name} must be positive and finite, got {value}")));
        }
    }
    if inst.n_agents == 0 {
        out.push(Finding::error("n_agents must be at least 1"));
    }
    if inst.targets.is_empty() {
        out.push(Finding::error("instance has no targets"));
    }

    let half = inst.arena_side / 2.0;
    let slack = GEOMETRY_EPS * inst.arena_side.max(1.0);
    let inside = |p: Point2| {
        (p.x - inst.depot.x).abs() <= half + slack && (p.y - inst.depot.y).abs() <= half + slack
    };

    let mut seen_targets = std::collections::BTreeSet::new();
    let mut seen_segments = std::collections::BTreeSet::new();
    for target in &inst.targets {
        if !seen_targets.insert(target.id) {
            out.push(Finding::error(format!("duplicate target id {}", target.id)));
        }
        if target.id == 0 || target.id > inst.targets.len() {
            out.push(Finding::error(format!(
                "target id {} outside 1..={}",
                target.id,
                inst.targets.len()
            )));
        }
        if target.segments.is_empty() {
            out.push(Finding::error(format!("target {} has no segments", target.id)));
        }
        let mut prev: Option<&Segment> = None;
        for seg in &target.segments {
            let label = format!("target {} segment {}", target.id, seg.id);
            if seg.id == 0 || !seen_segments.insert(seg.id) {
                out.push(Finding::error(format!("{label}: segment id must be a unique positive integer")));
            }
            if seg.target_id != target.id {
                out.push(Finding::error(format!(
                    "{label}: records owner {} instead of {}",
                    seg.target_id, target.id
                )));
            }
            let finite = seg.t_start.is_finite()
                && seg.t_end.is_finite()
                && seg.p_start.is_finite()
                && seg.p_end.is_finite();
            if !finite {
                out.push(Finding::error(format!("{label}: non-finite time or position")));
                continue;
            }
            if seg.t_start >= seg.t_end {
                out.push(Finding::error(format!(
                    "{label}: degenerate or reversed time interval [{}, {}]",
                    seg.t_start, seg.t_end
                )));
                continue;
            }
            if seg.t_start < 0.0 || seg.t_end > inst.horizon {
                out.push(Finding::error(format!(
                    "{label}: interval [{}, {}] leaves the horizon [0, {}]",
                    seg.t_start, seg.t_end, inst.horizon
                )));
            }
            if !inside(seg.p_start) || !inside(seg.p_end) {
                out.push(Finding::error(format!("{label}: endpoint outside the arena")));
            }
            if seg.speed() >= inst.v_max {
                out.push(Finding::warning(format!(
                    "{label}: target speed {} is not below v_max {}",
                    seg.speed(),
                    inst.v_max
                )));
            }
            if let Some(p) = prev {
                if seg.t_start < p.t_end {
                    out.push(Finding::error(format!(
                        "{label}: overlaps or precedes segment {}",
                        p.id
                    )));
                } else if seg.t_start == p.t_end
                    && p.p_end.distance(seg.p_start) > slack
                {
                    out.push(Finding::error(format!(
                        "{label}: jumps from {} to {} at t = {}",
                        p.p_end, seg.p_start, seg.t_start
                    )));
                }
            }
            prev = Some(seg);
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    version: u32,
    arena_side: f64,
    horizon: f64,
    v_max: f64,
    n_agents: usize,
    depot: Point2,
    targets: Vec<TargetFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetFile {
    id: usize,
    segments: Vec<SegmentSpec>,
}

/// Parses and validates an instance file. Warnings are dropped; errors are returned.
pub fn load_instance(bytes: &[u8]) -> Result<Instance, ModelError> {
    let file: InstanceFile = serde_json::from_slice(bytes).map_err(|e| ModelError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.version != FORMAT_VERSION {
        return Err(ModelError::UnsupportedVersion(file.version));
    }
    let mut targets = file.targets;
    targets.sort_by_key(|t| t.id);
    let ids: Vec<usize> = targets.iter().map(|t| t.id).collect();
    if ids.iter().enumerate().any(|(k, &id)| id != k + 1) {
        return Err(ModelError::Invalid(vec![Finding::error(format!(
            "target ids must be exactly 1..={}, got {:?}",
            ids.len(),
            ids
        ))]));
    }
    let inst = Instance::new(
        file.depot,
        file.n_agents,
        file.v_max,
        file.horizon,
        file.arena_side,
        targets.into_iter().map(|t| t.segments).collect(),
    );
    let errors: Vec<Finding> = validate_instance(&inst)
        .into_iter()
        .filter(Finding::is_error)
        .collect();
    if errors.is_empty() {
        Ok(inst)
    } else {
        Err(ModelError::Invalid(errors))
    }
}

/// Serializes an instance. Floats are written in shortest round-trip form, so
/// `load_instance(&save_instance(x))` reproduces every value bit for bit.
pub fn save_instance(inst: &Instance) -> Vec<u8> {
    let file = InstanceFile {
        version: FORMAT_VERSION,
        arena_side: inst.arena_side,
        horizon: inst.horizon,
        v_max: inst.v_max,
        n_agents: inst.n_agents,
        depot: inst.depot,
        targets: inst
            .targets
            .iter()
            .map(|t| TargetFile {
                id: t.id,
                segments: t
                    .segments
                    .iter()
                    .map(|s| SegmentSpec {
                        t_start: s.t_start,
                        t_end: s.t_end,
                        p_start: s.p_start,
                        p_end: s.p_end,
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&file).expect("instance serialization cannot fail");
    bytes.push(b'\n');
    bytes
}
