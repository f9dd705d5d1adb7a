//! The two mixed-integer conic formulations.
//!
//! [`build_baseline`] is the big-M model with one copy of every edge and node
//! variable per agent. [`build_new_micp`] drops node variables and agent
//! indices: each edge carries the tail and head visit (time, position) scaled
//! by its flow variable, so an unused edge collapses to zero instead of being
//! switched off by big-M constants, and the number of touring agents is the
//! integer depot flow `alpha`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conic::{AffineExpr, ConicModel, Label, Role, Sense, VarRef};
use crate::graph::SegmentGraph;
use crate::model::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormulationKind {
    Baseline,
    #[serde(rename = "micp")]
    NewMicp,
}

impl FormulationKind {
    pub const ALL: [FormulationKind; 2] = [FormulationKind::Baseline, FormulationKind::NewMicp];

    pub fn as_str(self) -> &'static str {
        match self {
            FormulationKind::Baseline => "baseline",
            FormulationKind::NewMicp => "micp",
        }
    }
}

impl fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormulationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(FormulationKind::Baseline),
            "micp" => Ok(FormulationKind::NewMicp),
            other => Err(format!("unknown formulation `{other}` (expected baseline or micp)")),
        }
    }
}

pub fn build_model(kind: FormulationKind, inst: &Instance, graph: &SegmentGraph) -> ConicModel {
    match kind {
        FormulationKind::Baseline => build_baseline(inst, graph),
        FormulationKind::NewMicp => build_new_micp(inst, graph),
    }
}

/// Big-M baseline.
///
/// Per agent `k` and edge `e = (i, j)`: binary `y`, cost `l >= 0`, planar
/// displacement `lxy`, relaxed cost `lbar >= 0`. Per agent and node: visit time
/// `t` bounded by the node window. Positions are not materialized; the
/// displacement row substitutes the affine position law of both endpoints.
///
/// Sizes with `m` agents: `m * (5|E| + |V|)` variables,
/// `2m + n + m|V_seg| + 4m|E|` linear rows and `m|E|` cones.
pub fn build_baseline(inst: &Instance, graph: &SegmentGraph) -> ConicModel {
    let m = inst.n_agents;
    let v_max = inst.v_max;
    let horizon = inst.horizon;
    let big_r = inst.big_m_distance();
    let mut model = ConicModel::new();

    struct EdgeVars {
        y: VarRef,
        l: VarRef,
        lxy: [VarRef; 2],
        lbar: VarRef,
    }

    let mut times: Vec<Vec<VarRef>> = Vec::with_capacity(m);
    let mut edge_vars: Vec<Vec<EdgeVars>> = Vec::with_capacity(m);
    for k in 1..=m {
        times.push(
            graph
                .nodes()
                .iter()
                .enumerate()
                .map(|(i, node)| {
                    model.add_continuous(
                        Label::scalar(Role::TimeT, i, Some(k)),
                        node.t_start,
                        node.t_end,
                    )
                })
                .collect(),
        );
        edge_vars.push(
            (0..graph.edge_count())
                .map(|e| EdgeVars {
                    y: model.add_binary(Label::scalar(Role::FlowY, e, Some(k))),
                    l: model.add_continuous(Label::scalar(Role::CostL, e, Some(k)), 0.0, f64::INFINITY),
                    lxy: [0, 1].map(|c| {
                        model.add_continuous(
                            Label::new(Role::CostLxy, e, Some(k), c),
                            f64::NEG_INFINITY,
                            f64::INFINITY,
                        )
                    }),
                    lbar: model.add_continuous(Label::scalar(Role::LBar, e, Some(k)), 0.0, f64::INFINITY),
                })
                .collect(),
        );
    }

    model.objective = edge_vars
        .iter()
        .flat_map(|per_agent| per_agent.iter().map(|ev| (ev.l, 1.0)))
        .collect();

    let flow = |k: usize, edges: &[usize]| -> Vec<(VarRef, f64)> {
        edges.iter().map(|&e| (edge_vars[k][e].y, 1.0)).collect()
    };

    // each agent leaves and returns at most once
    for k in 0..m {
        model.add_row(flow(k, graph.out_edges(graph.source())), Sense::Le, 1.0);
    }
    for k in 0..m {
        model.add_row(flow(k, graph.in_edges(graph.sink())), Sense::Le, 1.0);
    }
    // one visit per target, by some agent at some segment
    for members in graph.clusters().values() {
        let terms = (0..m)
            .flat_map(|k| members.iter().flat_map(move |&i| flow(k, graph.in_edges(i))))
            .collect();
        model.add_row(terms, Sense::Eq, 1.0);
    }
    // flow conservation at segment nodes
    for k in 0..m {
        for i in graph.segment_nodes() {
            let mut terms = flow(k, graph.in_edges(i));
            terms.extend(graph.out_edges(i).iter().map(|&e| (edge_vars[k][e].y, -1.0)));
            model.add_row(terms, Sense::Eq, 0.0);
        }
    }

    for k in 0..m {
        for (e, edge) in graph.edges().iter().enumerate() {
            let ev = &edge_vars[k][e];
            let (ti, tj) = (times[k][edge.tail], times[k][edge.head]);
            let (ni, nj) = (graph.node(edge.tail), graph.node(edge.head));

            // l <= v_max (t_j - t_i + T (1 - y))
            model.add_row(
                vec![(ev.l, 1.0), (tj, -v_max), (ti, v_max), (ev.y, v_max * horizon)],
                Sense::Le,
                v_max * horizon,
            );

            // lxy = p_j(t_j) - p_i(t_i)
            let (oi, oj) = (ni.offset(), nj.offset());
            let comps = [
                (ni.velocity.x, nj.velocity.x, oj.x - oi.x),
                (ni.velocity.y, nj.velocity.y, oj.y - oi.y),
            ];
            for (c, (vi, vj, rhs)) in comps.into_iter().enumerate() {
                model.add_row(vec![(ev.lxy[c], 1.0), (tj, -vj), (ti, vi)], Sense::Eq, rhs);
            }

            // lbar = l + R (1 - y)
            model.add_row(
                vec![(ev.lbar, 1.0), (ev.l, -1.0), (ev.y, big_r)],
                Sense::Eq,
                big_r,
            );

            model.add_cone(
                AffineExpr::var(ev.lbar),
                vec![AffineExpr::var(ev.lxy[0]), AffineExpr::var(ev.lxy[1])],
            );
        }
    }
    model
}

/// Agent-free formulation with edge-wise perspective variables.
///
/// Per edge `e = (i, j)`: binary `y`, cost `l >= 0`, displacement `lxy`, tail
/// visit `(zp, zt)` and head visit `(zp', zt')`, all free. One `alpha` in
/// `[1, m]` equals both depot flows.
///
/// Sizes: `10|E| + 1` variables (independent of `m`),
/// `2 + n + 2|V_seg| + 11|E|` linear rows and `|E|` cones.
pub fn build_new_micp(inst: &Instance, graph: &SegmentGraph) -> ConicModel {
    let v_max = inst.v_max;
    let mut model = ConicModel::new();
    let free = (f64::NEG_INFINITY, f64::INFINITY);

    struct EdgeVars {
        y: VarRef,
        l: VarRef,
        lxy: [VarRef; 2],
        zt_tail: VarRef,
        zt_head: VarRef,
        zp_tail: [VarRef; 2],
        zp_head: [VarRef; 2],
    }

    let ev: Vec<EdgeVars> = (0..graph.edge_count())
        .map(|e| {
            let mut planar = |role: Role| {
                [0, 1].map(|c| model.add_continuous(Label::new(role, e, None, c), free.0, free.1))
            };
            let lxy = planar(Role::CostLxy);
            let zp_tail = planar(Role::ZPosTail);
            let zp_head = planar(Role::ZPosHead);
            EdgeVars {
                y: model.add_binary(Label::scalar(Role::FlowY, e, None)),
                l: model.add_continuous(Label::scalar(Role::CostL, e, None), 0.0, f64::INFINITY),
                lxy,
                zt_tail: model.add_continuous(Label::scalar(Role::ZTimeTail, e, None), free.0, free.1),
                zt_head: model.add_continuous(Label::scalar(Role::ZTimeHead, e, None), free.0, free.1),
                zp_tail,
                zp_head,
            }
        })
        .collect();
    let alpha = model.add_continuous(
        Label::scalar(Role::Alpha, 0, None),
        1.0,
        inst.n_agents as f64,
    );

    model.objective = ev.iter().map(|v| (v.l, 1.0)).collect();

    let flow = |edges: &[usize]| -> Vec<(VarRef, f64)> { edges.iter().map(|&e| (ev[e].y, 1.0)).collect() };

    let mut out_s = flow(graph.out_edges(graph.source()));
    out_s.push((alpha, -1.0));
    model.add_row(out_s, Sense::Eq, 0.0);
    let mut in_sink = flow(graph.in_edges(graph.sink()));
    in_sink.push((alpha, -1.0));
    model.add_row(in_sink, Sense::Eq, 0.0);

    for members in graph.clusters().values() {
        let terms = members.iter().flat_map(|&i| flow(graph.in_edges(i))).collect();
        model.add_row(terms, Sense::Eq, 1.0);
    }

    // flow conservation and time continuity through segment nodes
    for i in graph.segment_nodes() {
        let mut terms = flow(graph.in_edges(i));
        terms.extend(graph.out_edges(i).iter().map(|&e| (ev[e].y, -1.0)));
        model.add_row(terms, Sense::Eq, 0.0);

        let mut terms: Vec<(VarRef, f64)> =
            graph.in_edges(i).iter().map(|&e| (ev[e].zt_head, 1.0)).collect();
        terms.extend(graph.out_edges(i).iter().map(|&e| (ev[e].zt_tail, -1.0)));
        model.add_row(terms, Sense::Eq, 0.0);
    }

    for (e, edge) in graph.edges().iter().enumerate() {
        let v = &ev[e];
        let (ni, nj) = (graph.node(edge.tail), graph.node(edge.head));

        // y t_lo <= z <= y t_hi at both ends
        for (z, node) in [(v.zt_tail, ni), (v.zt_head, nj)] {
            model.add_row(vec![(z, 1.0), (v.y, -node.t_start)], Sense::Ge, 0.0);
            model.add_row(vec![(z, 1.0), (v.y, -node.t_end)], Sense::Le, 0.0);
        }

        // z_p = velocity z_t + y (p_start - t_start velocity) at both ends
        for (zp, zt, node) in [(v.zp_tail, v.zt_tail, ni), (v.zp_head, v.zt_head, nj)] {
            let offset = node.offset();
            let parts = [(node.velocity.x, offset.x), (node.velocity.y, offset.y)];
            for (c, (vel, off)) in parts.into_iter().enumerate() {
                model.add_row(vec![(zp[c], 1.0), (zt, -vel), (v.y, -off)], Sense::Eq, 0.0);
            }
        }

        // l <= v_max (zt' - zt)
        model.add_row(
            vec![(v.l, 1.0), (v.zt_head, -v_max), (v.zt_tail, v_max)],
            Sense::Le,
            0.0,
        );

        // lxy = zp' - zp
        for c in 0..2 {
            model.add_row(
                vec![(v.lxy[c], 1.0), (v.zp_head[c], -1.0), (v.zp_tail[c], 1.0)],
                Sense::Eq,
                0.0,
            );
        }

        model.add_cone(
            AffineExpr::var(v.l),
            vec![AffineExpr::var(v.lxy[0]), AffineExpr::var(v.lxy[1])],
        );
    }
    model
}
