//! Agent tours from integral model assignments, and an independent checker
//! for candidate solutions against the physical problem.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::conic::{ConicModel, Label, Role};
use crate::error::RecoveryError;
use crate::formulation::FormulationKind;
use crate::graph::{NodeId, SegmentGraph};
use crate::model::{Instance, Point2};

/// Flow values within this distance of 0/1 are rounded.
pub const INT_TOL: f64 = 1e-6;
/// Allowed mismatch between recomputed and encoded visit positions.
pub const POSITION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub node: NodeId,
    pub time: f64,
    pub position: Point2,
}

/// One agent's route `s -> ... -> s'`; empty for an agent that stays home.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub agent_id: usize,
    pub visits: Vec<Visit>,
    pub length: f64,
}

impl Tour {
    fn from_visits(agent_id: usize, visits: Vec<Visit>) -> Self {
        let length = leg_lengths(&visits).sum();
        Self {
            agent_id,
            visits,
            length,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.visits.is_empty()
    }

    /// Segment ids visited, in order.
    pub fn segments(&self) -> Vec<usize> {
        self.visits
            .iter()
            .filter_map(|v| match v.node {
                NodeId::Segment { seg_id } => Some(seg_id),
                _ => None,
            })
            .collect()
    }
}

fn leg_lengths(visits: &[Visit]) -> impl Iterator<Item = f64> + '_ {
    visits.windows(2).map(|w| w[0].position.distance(w[1].position))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub tours: Vec<Tour>,
    pub total_length: f64,
}

impl Solution {
    pub fn new(tours: Vec<Tour>) -> Self {
        let total_length = tours.iter().map(|t| t.length).sum();
        Self {
            tours,
            total_length,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Tours from an assignment of either formulation.
pub fn recover(
    kind: FormulationKind,
    inst: &Instance,
    graph: &SegmentGraph,
    model: &ConicModel,
    x: &[f64],
) -> Result<Solution, RecoveryError> {
    match kind {
        FormulationKind::Baseline => recover_baseline_tours(inst, graph, model, x),
        FormulationKind::NewMicp => recover_tours(inst, graph, model, x),
    }
}

/// Tours from an integral assignment of the agent-free formulation.
///
/// The selected edges are split into depot-to-depot paths, discovered from
/// `s` in edge index order and handed to agents `1, 2, ...`; remaining agents
/// idle. Visit times come from the edge time variables (`zt` of the edge
/// leaving `s`, `zt'` of the edge entering every other node); positions are
/// recomputed from the segment motion and checked against the encoded ones.
pub fn recover_tours(
    inst: &Instance,
    graph: &SegmentGraph,
    model: &ConicModel,
    x: &[f64],
) -> Result<Solution, RecoveryError> {
    check_len(model, x)?;
    let value = |label: Label| -> Result<f64, RecoveryError> {
        model
            .var(&label)
            .map(|v| x[v.0])
            .ok_or_else(|| RecoveryError::MissingLabel(label.to_string()))
    };
    let mut selected = Vec::with_capacity(graph.edge_count());
    for e in 0..graph.edge_count() {
        selected.push(round_flow(value(Label::scalar(Role::FlowY, e, None))?, e)?);
    }
    let paths = extract_paths(graph, &selected)?;
    if paths.len() > inst.n_agents {
        return Err(RecoveryError::Structure(format!(
            "{} paths for {} agents",
            paths.len(),
            inst.n_agents
        )));
    }

    let mut tours = Vec::with_capacity(inst.n_agents);
    for (k, path) in paths.iter().enumerate() {
        let first = path[0];
        let mut visits = vec![Visit {
            node: NodeId::DepotStart,
            time: value(Label::scalar(Role::ZTimeTail, first, None))?,
            position: inst.depot,
        }];
        for &e in path {
            let head = graph.edges()[e].head;
            let node = graph.node(head);
            let time = value(Label::scalar(Role::ZTimeHead, e, None))?;
            let position = node.position(time);
            let encoded = Point2::new(
                value(Label::new(Role::ZPosHead, e, None, 0))?,
                value(Label::new(Role::ZPosHead, e, None, 1))?,
            );
            if position.distance(encoded) > POSITION_TOL {
                return Err(RecoveryError::Position {
                    segment: head,
                    expected: position.to_string(),
                    found: encoded.to_string(),
                });
            }
            visits.push(Visit {
                node: node.id,
                time,
                position,
            });
        }
        tours.push(Tour::from_visits(k + 1, visits));
    }
    for k in paths.len()..inst.n_agents {
        tours.push(Tour::from_visits(k + 1, Vec::new()));
    }
    Ok(Solution::new(tours))
}

/// Tours from an integral assignment of the big-M baseline, one per agent,
/// with visit times read from the agent's node time variables.
pub fn recover_baseline_tours(
    inst: &Instance,
    graph: &SegmentGraph,
    model: &ConicModel,
    x: &[f64],
) -> Result<Solution, RecoveryError> {
    check_len(model, x)?;
    let value = |label: Label| -> Result<f64, RecoveryError> {
        model
            .var(&label)
            .map(|v| x[v.0])
            .ok_or_else(|| RecoveryError::MissingLabel(label.to_string()))
    };
    let mut tours = Vec::with_capacity(inst.n_agents);
    let mut covered = vec![0usize; graph.node_count()];
    for k in 1..=inst.n_agents {
        let mut selected = Vec::with_capacity(graph.edge_count());
        for e in 0..graph.edge_count() {
            selected.push(round_flow(value(Label::scalar(Role::FlowY, e, Some(k)))?, e)?);
        }
        let paths = extract_paths(graph, &selected)?;
        let visits = match paths.as_slice() {
            [] => Vec::new(),
            [path] => {
                let mut nodes = vec![graph.source()];
                nodes.extend(path.iter().map(|&e| graph.edges()[e].head));
                let mut visits = Vec::with_capacity(nodes.len());
                for i in nodes {
                    covered[i] += 1;
                    let time = value(Label::scalar(Role::TimeT, i, Some(k)))?;
                    let node = graph.node(i);
                    visits.push(Visit {
                        node: node.id,
                        time,
                        position: node.position(time),
                    });
                }
                visits
            }
            _ => {
                return Err(RecoveryError::Structure(format!(
                    "agent {k} leaves the depot {} times",
                    paths.len()
                )))
            }
        };
        tours.push(Tour::from_visits(k, visits));
    }
    if let Some(i) = graph.segment_nodes().find(|&i| covered[i] > 1) {
        return Err(RecoveryError::Structure(format!(
            "segment node {i} is on several agents' tours"
        )));
    }
    Ok(Solution::new(tours))
}

fn check_len(model: &ConicModel, x: &[f64]) -> Result<(), RecoveryError> {
    if x.len() == model.num_vars() {
        Ok(())
    } else {
        Err(RecoveryError::Length {
            got: x.len(),
            expected: model.num_vars(),
        })
    }
}

fn round_flow(y: f64, edge: usize) -> Result<bool, RecoveryError> {
    if (y - 1.0).abs() <= INT_TOL {
        Ok(true)
    } else if y.abs() <= INT_TOL {
        Ok(false)
    } else {
        Err(RecoveryError::Structure(format!("edge {edge} has fractional flow {y}")))
    }
}

/// Splits the selected edges into vertex-disjoint `s -> s'` paths. Every
/// selected edge must lie on exactly one of them.
fn extract_paths(graph: &SegmentGraph, selected: &[bool]) -> Result<Vec<Vec<usize>>, RecoveryError> {
    let mut used = vec![false; selected.len()];
    let mut seen = vec![false; graph.node_count()];
    let mut paths = Vec::new();
    for &first in graph.out_edges(graph.source()) {
        if !selected[first] {
            continue;
        }
        used[first] = true;
        let mut path = vec![first];
        let mut node = graph.edges()[first].head;
        while node != graph.sink() {
            if std::mem::replace(&mut seen[node], true) {
                return Err(RecoveryError::Structure(format!(
                    "node {} is entered more than once",
                    graph.node(node).id
                )));
            }
            let mut next = graph.out_edges(node).iter().copied().filter(|&e| selected[e]);
            let (Some(e), None) = (next.next(), next.next()) else {
                return Err(RecoveryError::Structure(format!(
                    "node {} does not have exactly one selected outgoing edge",
                    graph.node(node).id
                )));
            };
            used[e] = true;
            path.push(e);
            node = graph.edges()[e].head;
        }
        paths.push(path);
    }
    if let Some(e) = (0..selected.len()).find(|&e| selected[e] && !used[e]) {
        let edge = graph.edges()[e];
        return Err(RecoveryError::Structure(format!(
            "edge {} -> {} is selected but not on a depot path",
            graph.node(edge.tail).id,
            graph.node(edge.head).id
        )));
    }
    Ok(paths)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FindingKind {
    Structure,
    Departure,
    Window,
    Position,
    Speed,
    Coverage,
    Length,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFinding {
    pub kind: FindingKind,
    pub message: String,
}

impl fmt::Display for SolutionFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

/// Checks a solution against the problem statement: departure at time 0,
/// visit times inside windows, visit positions on the target, legs within the
/// speed limit, every target visited exactly once and lengths that add up.
pub fn validate_solution(inst: &Instance, sol: &Solution, tol: f64) -> Vec<SolutionFinding> {
    let mut out = Vec::new();
    let mut push = |kind, message: String| out.push(SolutionFinding { kind, message });
    let mut visits_per_target: BTreeMap<usize, usize> = inst.targets.iter().map(|t| (t.id, 0)).collect();

    for tour in &sol.tours {
        let agent = tour.agent_id;
        if tour.is_idle() {
            if tour.length.abs() > tol {
                push(FindingKind::Length, format!("agent {agent}: idle tour has length {}", tour.length));
            }
            continue;
        }
        let first = tour.visits.first().expect("tour is not idle");
        let last = tour.visits.last().expect("tour is not idle");
        if first.node != NodeId::DepotStart || last.node != NodeId::DepotEnd || tour.visits.len() < 2 {
            push(FindingKind::Structure, format!("agent {agent}: tour must run from s to s'"));
        }
        if first.node == NodeId::DepotStart && first.time.abs() > tol {
            push(FindingKind::Departure, format!("agent {agent}: departs at {}", first.time));
        }

        for (k, visit) in tour.visits.iter().enumerate() {
            let (window, expected) = match visit.node {
                NodeId::DepotStart => {
                    if k != 0 {
                        push(FindingKind::Structure, format!("agent {agent}: s inside the tour"));
                    }
                    (None, inst.depot)
                }
                NodeId::DepotEnd => {
                    if k + 1 != tour.visits.len() {
                        push(FindingKind::Structure, format!("agent {agent}: s' inside the tour"));
                    }
                    (Some((0.0, inst.horizon)), inst.depot)
                }
                NodeId::Segment { seg_id } => match inst.segment(seg_id) {
                    Some(seg) => {
                        *visits_per_target.entry(seg.target_id).or_default() += 1;
                        (Some((seg.t_start, seg.t_end)), seg.position_unchecked(visit.time))
                    }
                    None => {
                        push(FindingKind::Structure, format!("agent {agent}: unknown segment {seg_id}"));
                        continue;
                    }
                },
            };
            if let Some((lo, hi)) = window {
                if visit.time < lo - tol || visit.time > hi + tol {
                    push(
                        FindingKind::Window,
                        format!("agent {agent}: visit of {} at {} outside [{lo}, {hi}]", visit.node, visit.time),
                    );
                }
            }
            if visit.position.distance(expected) > tol {
                push(
                    FindingKind::Position,
                    format!(
                        "agent {agent}: visit of {} at {} is off the target by {}",
                        visit.node,
                        visit.position,
                        visit.position.distance(expected)
                    ),
                );
            }
        }

        for w in tour.visits.windows(2) {
            let distance = w[0].position.distance(w[1].position);
            let reach = inst.v_max * (w[1].time - w[0].time);
            if distance > reach + tol {
                push(
                    FindingKind::Speed,
                    format!(
                        "agent {agent}: leg {} -> {} covers {distance} in {} s",
                        w[0].node,
                        w[1].node,
                        w[1].time - w[0].time
                    ),
                );
            }
        }

        let length: f64 = leg_lengths(&tour.visits).sum();
        if (length - tour.length).abs() > tol {
            push(FindingKind::Length, format!("agent {agent}: reported length {} but legs sum to {length}", tour.length));
        }
    }

    for (target, count) in visits_per_target {
        if count != 1 {
            push(FindingKind::Coverage, format!("target {target} visited {count} times"));
        }
    }
    let total: f64 = sol.tours.iter().map(|t| t.length).sum();
    if (total - sol.total_length).abs() > tol {
        push(FindingKind::Length, format!("total length {} but tours sum to {total}", sol.total_length));
    }
    out
}
