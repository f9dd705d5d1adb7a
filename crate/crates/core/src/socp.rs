//! Continuous SOCP solves of a [`ConicModel`].
//!
//! The model is handed to Clarabel, a primal-dual interior-point solver using
//! a homogeneous self-dual embedding over zero, nonnegative and second-order
//! cones. Integrality flags are ignored.
//!
//! Before the solver sees the problem, variables whose bounds coincide are
//! replaced by constants (so fixed binaries come back exactly 0 or 1), and
//! free variables defined by a single equality row are substituted into the
//! cones and the objective. Both steps are exact: the optimal value and every
//! feasible point are unchanged, only the linear algebra gets smaller. All
//! residuals are measured on the original model.

use std::collections::VecDeque;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::conic::{ConicModel, Sense};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Absolute tolerance on bound, row and cone residuals.
    pub feas_tol: f64,
    /// Relative tolerance on the primal-dual objective gap.
    pub gap_tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            gap_tol: 1e-8,
            max_iter: 200,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxResult {
    pub status: RelaxStatus,
    pub objective: f64,
    /// Dual objective; a lower bound on the optimum up to solver accuracy.
    pub dual_objective: f64,
    pub solution: Vec<f64>,
    pub max_primal_residual: f64,
    pub rel_duality_gap: f64,
    pub iterations: u32,
}

impl RelaxResult {
    fn failed(status: RelaxStatus, n: usize, iterations: u32) -> Self {
        Self {
            status,
            objective: f64::NAN,
            dual_objective: f64::NAN,
            solution: vec![f64::NAN; n],
            max_primal_residual: f64::INFINITY,
            rel_duality_gap: f64::INFINITY,
            iterations,
        }
    }
}

pub fn solve_relaxation(model: &ConicModel, opts: &SolverOptions) -> RelaxResult {
    let lower: Vec<f64> = model.vars.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = model.vars.iter().map(|v| v.upper).collect();
    solve_with_bounds(model, &lower, &upper, opts)
}

/// Sparse affine form over original variable indices.
#[derive(Debug, Clone, Default)]
struct Expr {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

impl Expr {
    fn coeff(&self, v: usize) -> f64 {
        self.terms.iter().find(|t| t.0 == v).map_or(0.0, |t| t.1)
    }

    /// Replaces `v` by `def`.
    fn substitute(&mut self, v: usize, def: &Expr) {
        let Some(pos) = self.terms.iter().position(|t| t.0 == v) else {
            return;
        };
        let c = self.terms.swap_remove(pos).1;
        self.constant += c * def.constant;
        for &(w, d) in &def.terms {
            match self.terms.iter_mut().find(|t| t.0 == w) {
                Some(t) => t.1 += c * d,
                None => self.terms.push((w, c * d)),
            }
        }
        self.terms.retain(|t| t.1 != 0.0);
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }
}

/// A linear row `expr (sense) 0`.
#[derive(Debug, Clone)]
struct Row {
    expr: Expr,
    sense: Sense,
}

/// The model with fixed variables folded in and defined variables removed.
struct Reduced {
    rows: Vec<Option<Row>>,
    cones: Vec<Vec<Expr>>,
    objective: Expr,
    fixed: Vec<Option<f64>>,
    /// Substituted variables with their definitions, in elimination order.
    defined: Vec<(usize, Expr)>,
}

impl Reduced {
    fn new(model: &ConicModel, lower: &[f64], upper: &[f64]) -> Self {
        let fixed: Vec<Option<f64>> = lower.iter().zip(upper).map(|(l, u)| (l == u).then_some(*l)).collect();
        let fold = |terms: &[(crate::conic::VarRef, f64)], constant: f64| {
            let mut e = Expr {
                terms: Vec::with_capacity(terms.len()),
                constant,
            };
            for &(v, c) in terms {
                match fixed[v.0] {
                    Some(x) => e.constant += c * x,
                    None => e.terms.push((v.0, c)),
                }
            }
            e
        };
        let rows = model
            .linear
            .iter()
            .map(|r| {
                Some(Row {
                    expr: fold(&r.terms, -r.rhs),
                    sense: r.sense,
                })
            })
            .collect();
        let cones = model
            .cones
            .iter()
            .map(|c| {
                std::iter::once(&c.bound)
                    .chain(&c.vector)
                    .map(|e| fold(&e.terms, e.constant))
                    .collect()
            })
            .collect();
        let objective = fold(&model.objective, 0.0);
        Self {
            rows,
            cones,
            objective,
            fixed,
            defined: Vec::new(),
        }
    }

    /// Substitutes free variables that occur in exactly one linear row, an
    /// equality, wherever else they occur (cones and objective only).
    fn eliminate(&mut self, lower: &[f64], upper: &[f64]) {
        let n = lower.len();
        let mut occurs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (r, row) in self.rows.iter().enumerate() {
            for &(v, _) in &row.as_ref().expect("fresh rows").expr.terms {
                occurs[v].push(r);
            }
        }
        let free = |v: usize| lower[v] == f64::NEG_INFINITY && upper[v] == f64::INFINITY;
        let mut cone_of: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, cone) in self.cones.iter().enumerate() {
            for e in cone {
                for &(v, _) in &e.terms {
                    if cone_of[v].last() != Some(&k) {
                        cone_of[v].push(k);
                    }
                }
            }
        }

        let mut queue: VecDeque<usize> = (0..n).filter(|&v| free(v) && occurs[v].len() == 1).collect();
        let mut gone = vec![false; n];
        while let Some(v) = queue.pop_front() {
            if gone[v] || occurs[v].len() != 1 {
                continue;
            }
            let r = occurs[v][0];
            let row = self.rows[r].as_ref().expect("live row");
            if row.sense != Sense::Eq {
                continue;
            }
            let a = row.expr.coeff(v);
            let scale = row.expr.terms.iter().fold(0.0f64, |m, t| m.max(t.1.abs()));
            if a.abs() < 1e-3 * scale {
                continue;
            }
            // v = -(rest) / a
            let def = Expr {
                terms: row
                    .expr
                    .terms
                    .iter()
                    .filter(|t| t.0 != v)
                    .map(|&(w, c)| (w, -c / a))
                    .collect(),
                constant: -row.expr.constant / a,
            };
            let row = self.rows[r].take().expect("live row");
            for &(w, _) in &row.expr.terms {
                occurs[w].retain(|&q| q != r);
                if w != v && !gone[w] && free(w) && occurs[w].len() == 1 {
                    queue.push_back(w);
                }
            }
            for &k in &std::mem::take(&mut cone_of[v]) {
                for e in &mut self.cones[k] {
                    e.substitute(v, &def);
                }
                for &(w, _) in &def.terms {
                    if !cone_of[w].contains(&k) {
                        cone_of[w].push(k);
                    }
                }
            }
            self.objective.substitute(v, &def);
            gone[v] = true;
            self.defined.push((v, def));
        }
    }

    /// Full assignment from the values of the kept variables.
    fn assemble(&self, kept: &[f64], column: &[usize]) -> Vec<f64> {
        let mut x: Vec<f64> = (0..column.len())
            .map(|k| match (self.fixed[k], column[k]) {
                (Some(v), _) => v,
                (None, usize::MAX) => 0.0,
                (None, j) => kept[j],
            })
            .collect();
        for (v, def) in self.defined.iter().rev() {
            x[*v] = def.eval(&x);
        }
        x
    }
}

/// Solves `model` with its variable bounds replaced by `lower`/`upper`.
pub(crate) fn solve_with_bounds(
    model: &ConicModel,
    lower: &[f64],
    upper: &[f64],
    opts: &SolverOptions,
) -> RelaxResult {
    let n = model.vars.len();
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return RelaxResult::failed(RelaxStatus::Infeasible, n, 0);
    }
    let mut red = Reduced::new(model, lower, upper);
    red.eliminate(lower, upper);
    let tol = opts.feas_tol;

    // columns for the variables left in play
    let mut column = vec![usize::MAX; n];
    let mut n_free = 0;
    let defined: Vec<bool> = {
        let mut d = vec![false; n];
        for (v, _) in &red.defined {
            d[*v] = true;
        }
        d
    };
    for k in 0..n {
        if red.fixed[k].is_none() && !defined[k] {
            column[k] = n_free;
            n_free += 1;
        }
    }
    let mut q = vec![0.0; n_free];
    for &(v, c) in &red.objective.terms {
        q[column[v]] += c;
    }

    // Clarabel form: A x + s = b with s in the cone. Constant rows and cones
    // are checked here and dropped.
    let mut rows = RowBuilder::default();
    let mut infeasible_constant = false;
    let mut push_row = |rows: &mut RowBuilder, expr: &Expr, sign: f64, eq: bool| -> bool {
        if expr.terms.is_empty() {
            let value = sign * expr.constant;
            infeasible_constant |= if eq { value.abs() > tol } else { value > tol };
            return false;
        }
        for &(v, c) in &expr.terms {
            rows.entry(rows.row, column[v], sign * c);
        }
        rows.b.push(-sign * expr.constant);
        rows.row += 1;
        true
    };

    let live: Vec<&Row> = red.rows.iter().flatten().collect();
    let mut zero_rows = 0;
    for row in live.iter().filter(|r| r.sense == Sense::Eq) {
        zero_rows += push_row(&mut rows, &row.expr, 1.0, true) as usize;
    }
    let mut nonneg_rows = 0;
    for row in &live {
        let sign = match row.sense {
            Sense::Eq => continue,
            Sense::Le => 1.0,
            Sense::Ge => -1.0,
        };
        nonneg_rows += push_row(&mut rows, &row.expr, sign, false) as usize;
    }
    for k in 0..n {
        let j = column[k];
        if j == usize::MAX {
            continue;
        }
        if lower[k].is_finite() {
            rows.entry(rows.row, j, -1.0);
            rows.b.push(-lower[k]);
            rows.row += 1;
            nonneg_rows += 1;
        }
        if upper[k].is_finite() {
            rows.entry(rows.row, j, 1.0);
            rows.b.push(upper[k]);
            rows.row += 1;
            nonneg_rows += 1;
        }
    }
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if zero_rows > 0 {
        cones.push(SupportedConeT::ZeroConeT(zero_rows));
    }
    if nonneg_rows > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(nonneg_rows));
    }
    for cone in &red.cones {
        if cone.iter().all(|e| e.terms.is_empty()) {
            let head = cone[0].constant;
            let tail = cone[1..].iter().map(|e| e.constant * e.constant).sum::<f64>().sqrt();
            infeasible_constant |= tail > head + tol;
            continue;
        }
        for e in cone {
            // s = b - A x must equal the expression: A = -coeffs, b = constant
            for &(v, c) in &e.terms {
                rows.entry(rows.row, column[v], -c);
            }
            rows.b.push(e.constant);
            rows.row += 1;
        }
        cones.push(SupportedConeT::SecondOrderConeT(cone.len()));
    }
    if infeasible_constant {
        return RelaxResult::failed(RelaxStatus::Infeasible, n, 0);
    }

    let offset = red.objective.constant;
    if n_free == 0 {
        // nothing left to optimize; evaluate the fixed point
        let x = red.assemble(&[], &column);
        let residual = max_residual(model, &x, lower, upper);
        let objective = model.objective_value(&x);
        let status = if residual <= tol {
            RelaxStatus::Optimal
        } else {
            RelaxStatus::Infeasible
        };
        return RelaxResult {
            status,
            objective,
            dual_objective: objective,
            solution: x,
            max_primal_residual: residual,
            rel_duality_gap: 0.0,
            iterations: 0,
        };
    }

    let a = CscMatrix::new_from_triplets(rows.row, n_free, rows.rows, rows.cols, rows.vals);
    let p = CscMatrix::zeros((n_free, n_free));

    // Clarabel's stopping tests are relative to the iterate norms while ours
    // are absolute, so a result it accepts can still miss feas_tol on large
    // coordinates; such results are re-solved with tighter internal targets.
    let mut iterations = 0;
    let mut last = RelaxResult::failed(RelaxStatus::NumericalFailure, n, 0);
    for tighten in [1e-2, 1e-4, 1e-6] {
        let settings = DefaultSettings {
            verbose: opts.verbose,
            max_iter: opts.max_iter,
            tol_gap_abs: opts.gap_tol * tighten * 1e2,
            tol_gap_rel: opts.gap_tol * tighten * 1e2,
            tol_feas: (tol * tighten).max(1e-14),
            presolve_enable: false,
            ..DefaultSettings::default()
        };
        let mut solver = match DefaultSolver::new(&p, &q, &a, &rows.b, &cones, settings) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("relaxation setup failed: {e}");
                return RelaxResult::failed(RelaxStatus::NumericalFailure, n, iterations);
            }
        };
        solver.solve();
        let sol = &solver.solution;
        iterations += sol.iterations;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                let x = red.assemble(&sol.x, &column);
                let objective = model.objective_value(&x);
                let dual_objective = sol.obj_val_dual + offset;
                let residual = max_residual(model, &x, lower, upper);
                let gap = (objective - dual_objective).abs() / objective.abs().max(1.0);
                let accepted = residual <= tol && gap <= opts.gap_tol;
                last = RelaxResult {
                    status: if accepted {
                        RelaxStatus::Optimal
                    } else {
                        RelaxStatus::NumericalFailure
                    },
                    objective,
                    dual_objective,
                    solution: x,
                    max_primal_residual: residual,
                    rel_duality_gap: gap,
                    iterations,
                };
                if accepted {
                    return last;
                }
                log::debug!(
                    "relaxation rejected: status {:?}, residual {residual:e}, gap {gap:e}",
                    sol.status
                );
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                return RelaxResult::failed(RelaxStatus::Infeasible, n, iterations)
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                return RelaxResult::failed(RelaxStatus::Unbounded, n, iterations)
            }
            other => {
                log::debug!("relaxation failed with {other:?}");
                last.iterations = iterations;
                return last;
            }
        }
    }
    last
}

/// Largest absolute violation of bounds, rows and cones.
fn max_residual(model: &ConicModel, x: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    if x.iter().any(|v| v.is_nan()) {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        worst = worst.max(lower[k] - x[k]).max(x[k] - upper[k]);
    }
    for row in &model.linear {
        worst = worst.max(row.violation(x));
    }
    for cone in &model.cones {
        worst = worst.max(cone.violation(x));
    }
    worst
}

#[derive(Default)]
struct RowBuilder {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    row: usize,
}

impl RowBuilder {
    fn entry(&mut self, row: usize, col: usize, val: f64) {
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(val);
    }
}
