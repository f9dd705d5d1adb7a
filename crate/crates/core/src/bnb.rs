//! Branch-and-bound over the binary variables of a [`ConicModel`].
//!
//! Every node is the continuous relaxation with some binaries fixed through
//! their bounds. Open nodes are kept in a best-first queue ordered by the
//! bound inherited from their parent (ties: first in, first out).
//! [`NodeSelection::DiveThenBestFirst`] dives depth-first until the first
//! incumbent instead. The branching variable is the most fractional binary
//! (ties: lowest index). A relaxation whose binaries are all within `int_tol`
//! of 0/1 is rounded, re-solved with the binaries fixed, checked against the
//! full model and offered as incumbent. There is no presolve, cut generation
//! or primal heuristic.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

use crate::conic::{ConicModel, VarRef};
use crate::socp::{solve_with_bounds, RelaxResult, RelaxStatus, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct BnbOptions {
    pub rel_gap_tol: f64,
    pub time_limit_s: f64,
    pub int_tol: f64,
    /// `None` means unlimited.
    pub node_limit: Option<u64>,
    /// The search is reproducible for any thread count; this flag is kept
    /// for interface parity and must stay `true`.
    pub deterministic: bool,
    /// Relaxations solved concurrently (speculatively, ahead of the queue).
    pub threads: usize,
    /// When set, equally fractional branching candidates are ordered by a
    /// seeded hash instead of by index.
    pub seed: Option<u64>,
    pub solver: SolverOptions,
    /// Accepted incumbents must pass `check_assignment` at this tolerance.
    pub feas_check_tol: f64,
    pub node_selection: NodeSelection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSelection {
    /// Smallest parent bound first, ties first in, first out.
    #[default]
    BestFirst,
    /// Depth-first until the first incumbent, best-first afterwards.
    DiveThenBestFirst,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            rel_gap_tol: 1e-4,
            time_limit_s: 1800.0,
            int_tol: 1e-6,
            node_limit: None,
            deterministic: true,
            threads: 1,
            seed: None,
            solver: SolverOptions::default(),
            feas_check_tol: 1e-6,
            node_selection: NodeSelection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Limit reached with an incumbent.
    Feasible,
    Infeasible,
    /// Limit reached without an incumbent.
    NoIncumbent,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NoIncumbent => "no_incumbent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// `+inf` without an incumbent.
    pub incumbent_objective: f64,
    pub best_bound: f64,
    pub gap_percent: f64,
    pub nodes_explored: u64,
    pub numerical_failures: u64,
    pub runtime: f64,
    /// Empty without an incumbent.
    pub incumbent_solution: Vec<f64>,
}

impl SolveReport {
    pub fn has_incumbent(&self) -> bool {
        !self.incumbent_solution.is_empty()
    }
}

/// Optimality gap in percent: `|c_f - c_lb| / |c_f| * 100`.
///
/// With `|c_f| < 1e-12` the gap is 0 if the bound matches and `+inf` otherwise.
pub fn gap_percent(c_f: f64, c_lb: f64) -> f64 {
    let diff = (c_f - c_lb).abs();
    if c_f.abs() < 1e-12 {
        if diff < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / c_f.abs() * 100.0
    }
}

/// A subproblem: binaries fixed on top of the model's own bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BnbNode {
    pub fixings: Vec<(VarRef, bool)>,
    pub parent_bound: f64,
    depth: u32,
    seq: u64,
}

impl BnbNode {
    fn root() -> Self {
        Self {
            fixings: Vec::new(),
            parent_bound: f64::NEG_INFINITY,
            depth: 0,
            seq: 0,
        }
    }

    /// The two children fixing `var` to 0 and to 1.
    pub fn branch(&self, var: VarRef, bound: f64, next_seq: &mut u64) -> [BnbNode; 2] {
        [false, true].map(|value| {
            let mut fixings = self.fixings.clone();
            fixings.push((var, value));
            *next_seq += 1;
            BnbNode {
                fixings,
                parent_bound: bound,
                depth: self.depth + 1,
                seq: *next_seq,
            }
        })
    }

    /// Model bounds with this node's fixings applied.
    pub fn bounds(&self, model: &ConicModel) -> (Vec<f64>, Vec<f64>) {
        let mut lower: Vec<f64> = model.vars.iter().map(|v| v.lower).collect();
        let mut upper: Vec<f64> = model.vars.iter().map(|v| v.upper).collect();
        for &(v, value) in &self.fixings {
            let x = if value { 1.0 } else { 0.0 };
            lower[v.0] = x;
            upper[v.0] = x;
        }
        (lower, upper)
    }
}

/// Heap entry: smallest parent bound first, then insertion order.
struct Queued(BnbNode);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: reverse both keys
        other
            .0
            .parent_bound
            .total_cmp(&self.0.parent_bound)
            .then(other.0.seq.cmp(&self.0.seq))
    }
}

/// Open nodes: a dive stack until the first incumbent, a best-first heap after.
struct Frontier {
    stack: Vec<BnbNode>,
    heap: BinaryHeap<Queued>,
}

impl Frontier {
    fn is_empty(&self) -> bool {
        self.stack.is_empty() && self.heap.is_empty()
    }

    fn len(&self) -> usize {
        self.stack.len() + self.heap.len()
    }

    fn min_bound(&self) -> f64 {
        let heap_min = self.heap.peek().map_or(f64::INFINITY, |q| q.0.parent_bound);
        self.stack
            .iter()
            .map(|n| n.parent_bound)
            .fold(heap_min, f64::min)
    }

    fn pop(&mut self) -> Option<BnbNode> {
        self.stack.pop().or_else(|| self.heap.pop().map(|q| q.0))
    }

    /// The next `k` nodes `pop` would return if nothing were pushed meanwhile.
    fn upcoming(&self, k: usize) -> Vec<&BnbNode> {
        let mut out: Vec<&BnbNode> = self.stack.iter().rev().take(k).collect();
        if out.len() < k {
            let mut rest: Vec<&Queued> = self.heap.iter().collect();
            rest.sort_by(|a, b| b.cmp(a));
            out.extend(rest.into_iter().take(k - out.len()).map(|q| &q.0));
        }
        out
    }

    fn push_children(&mut self, children: [BnbNode; 2], diving: bool, prefer_one: bool) {
        if diving {
            // the child popped first goes last
            let [zero, one] = children;
            if prefer_one {
                self.stack.push(zero);
                self.stack.push(one);
            } else {
                self.stack.push(one);
                self.stack.push(zero);
            }
        } else {
            for c in children {
                self.heap.push(Queued(c));
            }
        }
    }

    fn push_root(&mut self, dive: bool) {
        if dive {
            self.stack.push(BnbNode::root());
        } else {
            self.heap.push(Queued(BnbNode::root()));
        }
    }

    fn settle(&mut self) {
        for n in self.stack.drain(..) {
            self.heap.push(Queued(n));
        }
    }
}

struct Incumbent {
    objective: f64,
    solution: Vec<f64>,
}

/// Solves `model` to `rel_gap_tol` or until a limit is hit.
pub fn solve_mip(model: &ConicModel, opts: &BnbOptions) -> SolveReport {
    let start = Instant::now();
    let base = model.relax();
    let binaries = model.binaries();
    let gap_floor = |inc: f64| opts.rel_gap_tol * inc.abs().max(1e-10);

    let dive = opts.node_selection == NodeSelection::DiveThenBestFirst;
    let mut frontier = Frontier {
        stack: Vec::new(),
        heap: BinaryHeap::new(),
    };
    frontier.push_root(dive);
    let mut next_seq = 0u64;
    let mut incumbent: Option<Incumbent> = None;
    let mut nodes = 0u64;
    let mut failures = 0u64;
    let mut best_bound = f64::NEG_INFINITY;
    // smallest bound of any node discarded only because of the gap tolerance
    let mut pruned_floor = f64::INFINITY;
    let mut cache: HashMap<u64, RelaxResult> = HashMap::new();
    let mut hit_limit = false;

    let bound_now = |frontier: &Frontier, incumbent: &Option<Incumbent>, pruned_floor: f64| {
        let inc = incumbent.as_ref().map_or(f64::INFINITY, |i| i.objective);
        frontier.min_bound().min(pruned_floor).min(inc)
    };

    loop {
        best_bound = best_bound.max(bound_now(&frontier, &incumbent, pruned_floor));
        if frontier.is_empty() {
            break;
        }
        if let Some(inc) = &incumbent {
            if inc.objective - best_bound <= gap_floor(inc.objective) {
                break;
            }
        }
        if start.elapsed().as_secs_f64() >= opts.time_limit_s
            || opts.node_limit.is_some_and(|limit| nodes >= limit)
        {
            hit_limit = true;
            break;
        }

        let node = frontier.pop().expect("frontier is not empty");
        if let Some(inc) = &incumbent {
            if inc.objective - node.parent_bound <= gap_floor(inc.objective) {
                pruned_floor = pruned_floor.min(node.parent_bound);
                cache.remove(&node.seq);
                continue;
            }
        }

        let res = match cache.remove(&node.seq) {
            Some(res) => res,
            None => {
                if opts.threads > 1 {
                    prefetch(&base, &frontier, opts, &mut cache);
                }
                let (lower, upper) = node.bounds(&base);
                solve_with_bounds(&base, &lower, &upper, &opts.solver)
            }
        };
        nodes += 1;

        match res.status {
            RelaxStatus::Optimal => {}
            RelaxStatus::Infeasible => continue,
            RelaxStatus::Unbounded | RelaxStatus::NumericalFailure => {
                failures += 1;
                continue;
            }
        }
        let bound = node.parent_bound.max(res.objective.min(res.dual_objective));
        if let Some(inc) = &incumbent {
            if inc.objective - bound <= gap_floor(inc.objective) {
                pruned_floor = pruned_floor.min(bound);
                continue;
            }
        }

        match pick_branch_var(&binaries, &res.solution, opts) {
            Some(var) => {
                let value = res.solution[var.0];
                let children = node.branch(var, bound, &mut next_seq);
                frontier.push_children(children, dive && incumbent.is_none(), value >= 0.5);
            }
            None => {
                let Some(candidate) = polish(model, &base, &node, &binaries, &res, opts) else {
                    failures += 1;
                    continue;
                };
                let better = incumbent
                    .as_ref()
                    .is_none_or(|inc| candidate.objective < inc.objective);
                if better {
                    log::info!(
                        "node {nodes}: incumbent {:.6} (bound {:.6}, open {})",
                        candidate.objective,
                        best_bound,
                        frontier.len()
                    );
                    if incumbent.is_none() {
                        frontier.settle();
                    }
                    incumbent = Some(candidate);
                }
            }
        }
        if nodes.is_multiple_of(500) {
            log::debug!(
                "{nodes} nodes, bound {best_bound:.6}, incumbent {:?}, open {}",
                incumbent.as_ref().map(|i| i.objective),
                frontier.len()
            );
        }
    }

    let runtime = start.elapsed().as_secs_f64();
    match incumbent {
        Some(inc) => {
            let bound = best_bound.min(inc.objective);
            SolveReport {
                status: if hit_limit {
                    SolveStatus::Feasible
                } else {
                    SolveStatus::Optimal
                },
                incumbent_objective: inc.objective,
                best_bound: bound,
                gap_percent: gap_percent(inc.objective, bound),
                nodes_explored: nodes,
                numerical_failures: failures,
                runtime,
                incumbent_solution: inc.solution,
            }
        }
        None => SolveReport {
            status: if hit_limit {
                SolveStatus::NoIncumbent
            } else {
                SolveStatus::Infeasible
            },
            incumbent_objective: f64::INFINITY,
            best_bound: if hit_limit { best_bound } else { f64::INFINITY },
            gap_percent: f64::INFINITY,
            nodes_explored: nodes,
            numerical_failures: failures,
            runtime,
            incumbent_solution: Vec::new(),
        },
    }
}

/// Most fractional binary outside `int_tol`; `None` when the point is integral.
fn pick_branch_var(binaries: &[VarRef], x: &[f64], opts: &BnbOptions) -> Option<VarRef> {
    let mut best: Option<(f64, u64, VarRef)> = None;
    for &v in binaries {
        let value = x[v.0];
        let distance = value.min(1.0 - value);
        if distance <= opts.int_tol {
            continue;
        }
        let score = (value - 0.5).abs();
        let tie = opts.seed.map_or(v.0 as u64, |s| mix(s, v.0 as u64));
        let replace = match best {
            None => true,
            Some((s, t, _)) => score < s || (score == s && tie < t),
        };
        if replace {
            best = Some((score, tie, v));
        }
    }
    best.map(|(_, _, v)| v)
}

fn mix(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Rounds the binaries of an integral relaxation, re-solves the continuous
/// part and returns the point if it satisfies the original model.
fn polish(
    model: &ConicModel,
    base: &ConicModel,
    node: &BnbNode,
    binaries: &[VarRef],
    res: &RelaxResult,
    opts: &BnbOptions,
) -> Option<Incumbent> {
    let (mut lower, mut upper) = node.bounds(base);
    let mut already_fixed = true;
    for &v in binaries {
        let x = res.solution[v.0].round().clamp(0.0, 1.0);
        already_fixed &= lower[v.0] == upper[v.0];
        lower[v.0] = x;
        upper[v.0] = x;
    }
    let polished;
    let res = if already_fixed {
        res
    } else {
        polished = solve_with_bounds(base, &lower, &upper, &opts.solver);
        &polished
    };
    if res.status != RelaxStatus::Optimal {
        return None;
    }
    let violations = model.check_assignment(&res.solution, opts.feas_check_tol);
    if !violations.is_empty() {
        log::debug!("rounded point rejected: {:?}", &violations[..violations.len().min(3)]);
        return None;
    }
    Some(Incumbent {
        objective: res.objective,
        solution: res.solution.clone(),
    })
}

/// Solves the relaxations of the next few queued nodes on worker threads.
/// Results depend only on each node's fixings, so the search order and the
/// final report are the same as a single-threaded run.
fn prefetch(
    base: &ConicModel,
    frontier: &Frontier,
    opts: &BnbOptions,
    cache: &mut HashMap<u64, RelaxResult>,
) {
    let todo: Vec<&BnbNode> = frontier
        .upcoming(opts.threads - 1)
        .into_iter()
        .filter(|n| !cache.contains_key(&n.seq))
        .collect();
    if todo.is_empty() {
        return;
    }
    let results: Vec<(u64, RelaxResult)> = std::thread::scope(|scope| {
        let handles: Vec<_> = todo
            .iter()
            .map(|node| {
                scope.spawn(move || {
                    let (lower, upper) = node.bounds(base);
                    (node.seq, solve_with_bounds(base, &lower, &upper, &opts.solver))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("relaxation worker panicked"))
            .collect()
    });
    cache.extend(results);
}
