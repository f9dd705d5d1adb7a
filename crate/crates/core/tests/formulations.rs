//! Known tours written into each formulation by hand: the assignment must be
//! feasible and cost exactly the tour length, and breaking the tour must
//! break the assignment.

use mttsp_core::generate::{generate_instance, GenConfig};
use mttsp_core::graph::NodeId;
use mttsp_core::oracle::{brute_force_optimum, OracleLimits};
use mttsp_core::*;

const TOL: f64 = 1e-6;

/// (graph node, time) per stop of every touring agent.
fn stops(graph: &SegmentGraph, sol: &Solution) -> Vec<Vec<(usize, f64)>> {
    sol.tours
        .iter()
        .filter(|t| !t.is_idle())
        .map(|t| {
            t.visits
                .iter()
                .map(|v| {
                    let node = match v.node {
                        NodeId::DepotStart => graph.source(),
                        NodeId::DepotEnd => graph.sink(),
                        NodeId::Segment { seg_id } => graph.node_of_segment(seg_id).unwrap(),
                    };
                    (node, v.time)
                })
                .collect()
        })
        .collect()
}

fn set(model: &ConicModel, x: &mut [f64], label: Label, value: f64) {
    let v = model.var(&label).unwrap_or_else(|| panic!("no variable {label:?}"));
    x[v.0] = value;
}

fn new_micp_assignment(model: &ConicModel, graph: &SegmentGraph, tours: &[Vec<(usize, f64)>]) -> Vec<f64> {
    let mut x = vec![0.0; model.num_vars()];
    set(model, &mut x, Label::scalar(Role::Alpha, 0, None), tours.len() as f64);
    for tour in tours {
        for w in tour.windows(2) {
            let ((i, ti), (j, tj)) = (w[0], w[1]);
            let e = graph.edge_between(i, j).unwrap();
            let (pi, pj) = (graph.node(i).position(ti), graph.node(j).position(tj));
            set(model, &mut x, Label::scalar(Role::FlowY, e, None), 1.0);
            set(model, &mut x, Label::scalar(Role::ZTimeTail, e, None), ti);
            set(model, &mut x, Label::scalar(Role::ZTimeHead, e, None), tj);
            for (c, (a, b)) in [(pi.x, pj.x), (pi.y, pj.y)].into_iter().enumerate() {
                set(model, &mut x, Label::new(Role::ZPosTail, e, None, c as u8), a);
                set(model, &mut x, Label::new(Role::ZPosHead, e, None, c as u8), b);
                set(model, &mut x, Label::new(Role::CostLxy, e, None, c as u8), b - a);
            }
            set(model, &mut x, Label::scalar(Role::CostL, e, None), pi.distance(pj));
        }
    }
    x
}

fn baseline_assignment(
    inst: &Instance,
    model: &ConicModel,
    graph: &SegmentGraph,
    tours: &[Vec<(usize, f64)>],
) -> Vec<f64> {
    let big_r = inst.big_m_distance();
    let mut x = vec![0.0; model.num_vars()];
    for k in 1..=inst.n_agents {
        // unvisited nodes sit at the start of their window
        let mut time: Vec<f64> = graph.nodes().iter().map(|n| n.t_start).collect();
        let tour = tours.get(k - 1);
        for &(i, t) in tour.into_iter().flatten() {
            time[i] = t;
        }
        for (i, &t) in time.iter().enumerate() {
            set(model, &mut x, Label::scalar(Role::TimeT, i, Some(k)), t);
        }
        let used: Vec<usize> = tour
            .map(|t| t.windows(2).map(|w| graph.edge_between(w[0].0, w[1].0).unwrap()).collect())
            .unwrap_or_default();
        for (e, edge) in graph.edges().iter().enumerate() {
            let d = graph.node(edge.head).position(time[edge.head]) - graph.node(edge.tail).position(time[edge.tail]);
            let y = used.contains(&e);
            let l = if y { d.norm() } else { 0.0 };
            set(model, &mut x, Label::scalar(Role::FlowY, e, Some(k)), y as u8 as f64);
            set(model, &mut x, Label::scalar(Role::CostL, e, Some(k)), l);
            set(model, &mut x, Label::new(Role::CostLxy, e, Some(k), 0), d.x);
            set(model, &mut x, Label::new(Role::CostLxy, e, Some(k), 1), d.y);
            set(model, &mut x, Label::scalar(Role::LBar, e, Some(k)), l + if y { 0.0 } else { big_r });
        }
    }
    x
}

fn assign(kind: FormulationKind, inst: &Instance, model: &ConicModel, graph: &SegmentGraph, tours: &[Vec<(usize, f64)>]) -> Vec<f64> {
    match kind {
        FormulationKind::Baseline => baseline_assignment(inst, model, graph, tours),
        FormulationKind::NewMicp => new_micp_assignment(model, graph, tours),
    }
}

#[test]
fn oracle_tours_are_feasible_in_both_formulations() {
    for (n, m, seed) in [(2, 1, 1), (3, 1, 2), (3, 2, 3), (4, 2, 4), (4, 3, 5)] {
        let inst = generate_instance(&GenConfig::new(n, 40.0, seed)).unwrap().with_agents(m);
        let graph = build_graph(&inst);
        let oracle = brute_force_optimum(&inst, OracleLimits::default(), &SolverOptions::default()).unwrap();
        let tours = stops(&graph, &oracle.solution);
        for kind in FormulationKind::ALL {
            let model = build_model(kind, &inst, &graph);
            let x = assign(kind, &inst, &model, &graph, &tours);
            let violations = model.check_assignment(&x, TOL);
            assert!(violations.is_empty(), "{kind} n={n} m={m}: {violations:?}");
            let obj = model.objective_value(&x);
            let length = oracle.solution.total_length;
            assert!((obj - length).abs() <= 1e-9 * length, "{kind}: {obj} vs {length}");
            assert!((obj - oracle.objective).abs() <= 1e-6 * length);
        }
    }
}

#[test]
fn broken_tours_are_rejected() {
    let inst = generate_instance(&GenConfig::new(3, 40.0, 9)).unwrap().with_agents(2);
    let graph = build_graph(&inst);
    let oracle = brute_force_optimum(&inst, OracleLimits::default(), &SolverOptions::default()).unwrap();
    let tours = stops(&graph, &oracle.solution);

    // arrive at the first target at once: faster than any agent can fly
    let mut rushed = tours.clone();
    rushed[0][1].1 = 1e-3;
    // drop the last target from its tour (and from the graph walk)
    let mut skipped = tours.clone();
    let last = skipped.len() - 1;
    let len = skipped[last].len();
    if len > 3 {
        skipped[last].remove(len - 2);
    } else {
        skipped.pop();
    }

    for kind in FormulationKind::ALL {
        let model = build_model(kind, &inst, &graph);
        for (what, bad) in [("rushed", &rushed), ("skipped", &skipped)] {
            let x = assign(kind, &inst, &model, &graph, bad);
            assert!(!model.check_assignment(&x, TOL).is_empty(), "{kind} accepted a {what} tour");
        }
    }
}
