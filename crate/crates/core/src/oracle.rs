//! Exhaustive reference solver for tiny instances.
//!
//! Every assignment of targets to agents, visiting order and segment choice
//! is enumerated; for each fixed sequence the visit times are optimized by a
//! small convex program. Intercept geometry is also used by the instance
//! generator to certify feasibility.

use std::collections::BTreeMap;

use itertools::Itertools;

use crate::conic::{AffineExpr, ConicModel, Label, Role, Sense};
use crate::error::OracleError;
use crate::graph::NodeId;
use crate::model::{Instance, Point2, Segment};
use crate::recovery::{Solution, Tour, Visit};
use crate::socp::{solve_relaxation, RelaxStatus, SolverOptions};

/// Discriminants above `-DISC_CLAMP` count as tangency.
const DISC_CLAMP: f64 = 1e-12;

/// Earliest `t` in `[max(t0, t_start), t_end]` at which an agent leaving
/// `from` at `t0` with speed `v_max` can stand on the segment's target.
pub fn earliest_intercept(from: Point2, t0: f64, seg: &Segment, v_max: f64) -> Option<f64> {
    let lo = t0.max(seg.t_start);
    if lo > seg.t_end {
        return None;
    }
    // g(tau) = v_max^2 tau^2 - |w + v tau|^2 >= 0 with tau = t - t0 and w the
    // target position extrapolated back to t0, relative to `from`.
    let v = seg.velocity();
    let w = seg.position_unchecked(t0) - from;
    let a = v_max * v_max - v.dot(v);
    let b = -2.0 * w.dot(v);
    let c = -w.dot(w);
    let g = |tau: f64| (a * tau + b) * tau + c;
    let (tau_lo, tau_hi) = (lo - t0, seg.t_end - t0);
    if g(tau_lo) >= 0.0 || seg.position_unchecked(lo).distance(from) <= v_max * tau_lo {
        return Some(lo);
    }

    let tau = if a.abs() <= f64::EPSILON * (b.abs() + c.abs()).max(1.0) {
        // linear: b tau + c crosses upward only for b > 0
        (b > 0.0).then(|| -c / b)?
    } else {
        let mut disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            if disc < -DISC_CLAMP * (b * b).max(1.0) {
                return None;
            }
            disc = 0.0;
        }
        let sq = disc.sqrt();
        // numerically stable pair of roots
        let qq = -0.5 * (b + b.signum() * sq);
        let (r1, r2) = if qq == 0.0 {
            (0.0, 0.0)
        } else {
            let (x, y) = (qq / a, c / qq);
            (x.min(y), x.max(y))
        };
        if a > 0.0 {
            // g < 0 strictly between the roots, and tau_lo is in there
            r2
        } else {
            // g >= 0 only between the roots; tau_lo lies left of them
            if tau_lo > r2 {
                return None;
            }
            r1
        }
    };
    (tau <= tau_hi).then_some(t0 + tau.max(tau_lo))
}

/// Ordered segment choices for each agent; agent `k` runs `routes[k]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct SequencePlan {
    pub routes: Vec<Vec<usize>>,
}

impl SequencePlan {
    pub fn single(route: Vec<usize>) -> Self {
        Self {
            routes: vec![route],
        }
    }
}

/// Completion time of the fastest tour through `route` (segment ids), back at
/// the depot; `None` if some intercept fails or the return misses the horizon.
///
/// Greedy earliest arrival is optimal when no target outruns the agent.
pub fn quickest_tour_time(inst: &Instance, route: &[usize]) -> Option<f64> {
    let (mut at, mut t) = (inst.depot, 0.0);
    for &id in route {
        let seg = inst.segment(id)?;
        t = earliest_intercept(at, t, seg, inst.v_max)?;
        at = seg.position_unchecked(t);
    }
    let back = t + at.distance(inst.depot) / inst.v_max;
    (back <= inst.horizon).then_some(back)
}

/// Optimal visit times along one agent's route.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteTiming {
    pub route: Vec<usize>,
    /// Visit time of each segment in `route`, then the return time.
    pub times: Vec<f64>,
    pub length: f64,
}

impl RouteTiming {
    fn tour(&self, inst: &Instance, agent_id: usize) -> Tour {
        if self.route.is_empty() {
            return Tour {
                agent_id,
                visits: Vec::new(),
                length: 0.0,
            };
        }
        let mut visits = vec![Visit {
            node: NodeId::DepotStart,
            time: 0.0,
            position: inst.depot,
        }];
        for (&id, &t) in self.route.iter().zip(&self.times) {
            let seg = inst.segment(id).expect("route refers to instance segments");
            visits.push(Visit {
                node: NodeId::Segment { seg_id: id },
                time: t,
                position: seg.position_unchecked(t),
            });
        }
        visits.push(Visit {
            node: NodeId::DepotEnd,
            time: *self.times.last().expect("return time"),
            position: inst.depot,
        });
        let length = visits
            .windows(2)
            .map(|w| w[0].position.distance(w[1].position))
            .sum();
        Tour {
            agent_id,
            visits,
            length,
        }
    }
}

/// Shortest single-agent tour through `route` with times free inside the
/// windows. `Ok(None)` when no timing is feasible.
pub fn route_min_length(
    inst: &Instance,
    route: &[usize],
    opts: &SolverOptions,
) -> Result<Option<RouteTiming>, OracleError> {
    if route.is_empty() {
        return Ok(Some(RouteTiming {
            route: Vec::new(),
            times: vec![0.0],
            length: 0.0,
        }));
    }
    let segs: Vec<&Segment> = route
        .iter()
        .map(|&id| inst.segment(id).ok_or(OracleError::Infeasible))
        .collect::<Result<_, _>>()?;

    let mut model = ConicModel::new();
    let mut times = Vec::with_capacity(segs.len() + 1);
    for (k, seg) in segs.iter().enumerate() {
        times.push(model.add_continuous(Label::scalar(Role::TimeT, k, None), seg.t_start, seg.t_end));
    }
    times.push(model.add_continuous(Label::scalar(Role::TimeT, segs.len(), None), 0.0, inst.horizon));

    // position of stop k as an affine expression of its time; stop 0 and the
    // last stop are the depot
    let position = |k: usize, c: usize| -> AffineExpr {
        let pick = |p: Point2| if c == 0 { p.x } else { p.y };
        if k == 0 || k == segs.len() + 1 {
            return AffineExpr::constant(pick(inst.depot));
        }
        let seg = segs[k - 1];
        let v = pick(seg.velocity());
        AffineExpr::new(vec![(times[k - 1], v)], pick(seg.p_start) - v * seg.t_start)
    };
    let time = |k: usize| -> AffineExpr {
        if k == 0 {
            AffineExpr::constant(0.0)
        } else {
            AffineExpr::var(times[k - 1])
        }
    };
    for k in 0..=segs.len() {
        let leg = model.add_continuous(Label::scalar(Role::CostL, k, None), 0.0, f64::INFINITY);
        model.objective.push((leg, 1.0));
        let diff = |c: usize| {
            let (head, tail) = (position(k + 1, c), position(k, c));
            let mut terms = head.terms;
            terms.extend(tail.terms.iter().map(|&(v, a)| (v, -a)));
            AffineExpr::new(terms, head.constant - tail.constant)
        };
        model.add_cone(AffineExpr::var(leg), vec![diff(0), diff(1)]);
        // leg <= v_max (t_{k+1} - t_k)
        let (head, tail) = (time(k + 1), time(k));
        let mut terms = vec![(leg, 1.0)];
        terms.extend(head.terms.iter().map(|&(v, a)| (v, -inst.v_max * a)));
        terms.extend(tail.terms.iter().map(|&(v, a)| (v, inst.v_max * a)));
        model.add_row(terms, Sense::Le, inst.v_max * (head.constant - tail.constant));
    }

    let res = solve_relaxation(&model, opts);
    match res.status {
        RelaxStatus::Optimal => Ok(Some(RouteTiming {
            route: route.to_vec(),
            times: times.iter().map(|v| res.solution[v.0]).collect(),
            length: res.objective,
        })),
        RelaxStatus::Infeasible => Ok(None),
        other => Err(OracleError::Solver(other)),
    }
}

/// Total length of the best timing of `plan`, or `None` if some route has no
/// feasible timing.
pub fn min_length_for_sequence(
    inst: &Instance,
    plan: &SequencePlan,
    opts: &SolverOptions,
) -> Result<Option<f64>, OracleError> {
    let mut total = 0.0;
    for route in &plan.routes {
        match route_min_length(inst, route, opts)? {
            Some(r) => total += r.length,
            None => return Ok(None),
        }
    }
    Ok(Some(total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_targets: usize,
    pub max_agents: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_targets: 5,
            max_agents: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub objective: f64,
    pub plan: SequencePlan,
    pub solution: Solution,
    /// Fixed-sequence programs solved.
    pub subproblems: usize,
}

/// Exact optimum by enumeration.
///
/// The cheapest route is computed once per target subset; the answer is the
/// cheapest split of all targets into at most `m` subsets. Agents are
/// identical, so splits are enumerated up to relabeling.
pub fn brute_force_optimum(
    inst: &Instance,
    limits: OracleLimits,
    opts: &SolverOptions,
) -> Result<OracleResult, OracleError> {
    let n = inst.n_targets();
    if n > limits.max_targets {
        return Err(OracleError::TooLarge {
            what: "targets",
            got: n,
            limit: limits.max_targets,
        });
    }
    if inst.n_agents > limits.max_agents {
        return Err(OracleError::TooLarge {
            what: "agents",
            got: inst.n_agents,
            limit: limits.max_agents,
        });
    }

    // greedy intercepts decide sequence feasibility exactly only when no
    // target outruns the agent; otherwise every sequence goes to the solver
    let prune = inst.targets.iter().all(|t| t.max_speed() <= inst.v_max);
    let mut subproblems = 0;
    let mut best: BTreeMap<u32, RouteTiming> = BTreeMap::new();
    for size in 1..=n {
        for order in (0..n).permutations(size) {
            let mask = order.iter().fold(0u32, |m, &k| m | 1 << k);
            let choices = order
                .iter()
                .map(|&k| inst.targets[k].segments.iter().map(|s| s.id).collect::<Vec<_>>())
                .multi_cartesian_product();
            for route in choices {
                if prune && quickest_tour_time(inst, &route).is_none() {
                    continue;
                }
                subproblems += 1;
                if let Some(timing) = route_min_length(inst, &route, opts)? {
                    let better = best.get(&mask).is_none_or(|b| timing.length < b.length);
                    if better {
                        best.insert(mask, timing);
                    }
                }
            }
        }
    }

    let full = (1u32 << n) - 1;
    let mut memo = BTreeMap::new();
    let (objective, masks) =
        best_split(full, inst.n_agents.max(1), &best, &mut memo).ok_or(OracleError::Infeasible)?;

    let mut routes: Vec<&RouteTiming> = masks.iter().map(|m| &best[m]).collect();
    routes.sort_by(|a, b| a.route.cmp(&b.route));
    let mut tours: Vec<Tour> = routes.iter().enumerate().map(|(k, r)| r.tour(inst, k + 1)).collect();
    for k in tours.len()..inst.n_agents {
        tours.push(Tour {
            agent_id: k + 1,
            visits: Vec::new(),
            length: 0.0,
        });
    }
    Ok(OracleResult {
        objective,
        plan: SequencePlan {
            routes: routes.iter().map(|r| r.route.clone()).collect(),
        },
        solution: Solution::new(tours),
        subproblems,
    })
}

/// Total length and chosen subsets of a cover, if one exists.
type Split = Option<(f64, Vec<u32>)>;

/// Cheapest cover of `mask` by at most `agents` disjoint routed subsets. The
/// subset holding the lowest remaining target is chosen first, which fixes
/// one representative per relabeling class.
fn best_split(
    mask: u32,
    agents: usize,
    best: &BTreeMap<u32, RouteTiming>,
    memo: &mut BTreeMap<(u32, usize), Split>,
) -> Split {
    if mask == 0 {
        return Some((0.0, Vec::new()));
    }
    if agents == 0 {
        return None;
    }
    if let Some(hit) = memo.get(&(mask, agents)) {
        return hit.clone();
    }
    let low = mask & mask.wrapping_neg();
    let rest = mask & !low;
    let mut answer: Option<(f64, Vec<u32>)> = None;
    // every subset of `rest`, joined with the lowest target
    let mut sub = rest;
    loop {
        let block = sub | low;
        if let Some(route) = best.get(&block) {
            if let Some((tail, mut blocks)) = best_split(mask & !block, agents - 1, best, memo) {
                let total = route.length + tail;
                if answer.as_ref().is_none_or(|(b, _)| total < *b) {
                    blocks.insert(0, block);
                    answer = Some((total, blocks));
                }
            }
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & rest;
    }
    memo.insert((mask, agents), answer.clone());
    answer
}
