//! The directed graph over segment nodes and the two depot copies.
//!
//! Node indices: `0` is the start depot `s`, `1..=n_segments` are segment
//! nodes (index equals segment id) and `n_segments + 1` is the end depot `s'`.
//! Edges: `s` to every segment, every segment to every segment of a different
//! target, every segment to `s'`. Edge indices are dense and sorted by
//! `(tail, head)`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::model::{Instance, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeId {
    DepotStart,
    DepotEnd,
    Segment { seg_id: usize },
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::DepotStart => f.write_str("s"),
            NodeId::DepotEnd => f.write_str("s'"),
            NodeId::Segment { seg_id } => write!(f, "{seg_id}"),
        }
    }
}

/// Kinematic data of a node: time window and the affine position law
/// `p(t) = p_start + (t - t_start) * velocity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeData {
    pub id: NodeId,
    /// Owning target; `None` for the depot copies.
    pub target: Option<usize>,
    pub t_start: f64,
    pub t_end: f64,
    pub p_start: Point2,
    pub velocity: Point2,
}

impl NodeData {
    pub fn position(&self, t: f64) -> Point2 {
        self.p_start + self.velocity * (t - self.t_start)
    }

    /// `p_start - t_start * velocity`, the position law's constant term.
    pub fn offset(&self) -> Point2 {
        self.p_start - self.velocity * self.t_start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGraph {
    nodes: Vec<NodeData>,
    edges: Vec<Edge>,
    clusters: BTreeMap<usize, Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    out_adj: Vec<Vec<usize>>,
}

pub fn build_graph(inst: &Instance) -> SegmentGraph {
    let n_seg = inst.n_segments();
    let mut nodes = Vec::with_capacity(n_seg + 2);
    nodes.push(NodeData {
        id: NodeId::DepotStart,
        target: None,
        t_start: 0.0,
        t_end: 0.0,
        p_start: inst.depot,
        velocity: Point2::ORIGIN,
    });
    let mut segs: Vec<_> = inst.segments().collect();
    segs.sort_by_key(|s| s.id);
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for seg in segs {
        let index = nodes.len();
        clusters.entry(seg.target_id).or_default().push(index);
        nodes.push(NodeData {
            id: NodeId::Segment { seg_id: seg.id },
            target: Some(seg.target_id),
            t_start: seg.t_start,
            t_end: seg.t_end,
            p_start: seg.p_start,
            velocity: seg.velocity(),
        });
    }
    nodes.push(NodeData {
        id: NodeId::DepotEnd,
        target: None,
        t_start: 0.0,
        t_end: inst.horizon,
        p_start: inst.depot,
        velocity: Point2::ORIGIN,
    });

    let sink = nodes.len() - 1;
    let mut edges = Vec::new();
    for head in 1..sink {
        edges.push(Edge { tail: 0, head });
    }
    for tail in 1..sink {
        for head in 1..sink {
            if nodes[tail].target != nodes[head].target {
                edges.push(Edge { tail, head });
            }
        }
        edges.push(Edge { tail, head: sink });
    }

    let mut in_adj = vec![Vec::new(); nodes.len()];
    let mut out_adj = vec![Vec::new(); nodes.len()];
    for (k, e) in edges.iter().enumerate() {
        out_adj[e.tail].push(k);
        in_adj[e.head].push(k);
    }
    SegmentGraph {
        nodes,
        edges,
        clusters,
        in_adj,
        out_adj,
    }
}

impl SegmentGraph {
    pub fn source(&self) -> usize {
        0
    }

    pub fn sink(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Node indices of the segment nodes.
    pub fn segment_nodes(&self) -> std::ops::Range<usize> {
        1..self.sink()
    }

    pub fn node(&self, index: usize) -> &NodeData {
        &self.nodes[index]
    }

    pub fn nodes(&self) -> &[NodeData] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Node indices of each target's segments, keyed by target id.
    pub fn clusters(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.clusters
    }

    pub fn in_edges(&self, node: usize) -> &[usize] {
        &self.in_adj[node]
    }

    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_adj[node]
    }

    /// Node index of a segment id.
    pub fn node_of_segment(&self, seg_id: usize) -> Option<usize> {
        (seg_id >= 1 && seg_id < self.sink()).then_some(seg_id)
    }

    pub fn edge_between(&self, tail: usize, head: usize) -> Option<usize> {
        self.out_adj
            .get(tail)?
            .iter()
            .copied()
            .find(|&k| self.edges[k].head == head)
    }

    /// One `tail head` pair per line, depot copies written as `s` and `s'`.
    pub fn dump_edges(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{} {}", self.nodes[e.tail].id, self.nodes[e.head].id);
        }
        out
    }
}
