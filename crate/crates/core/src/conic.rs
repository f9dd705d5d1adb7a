//! Mixed-integer second-order-cone model representation shared by the
//! formulation builders, the relaxation solver and the branch-and-bound.
//!
//! A model minimizes a linear objective over bounded variables, linear rows
//! and cones `||vector||_2 <= bound` whose entries are affine expressions.
//! Every variable a builder creates carries a [`Label`] so that recovery code
//! can address variables by role instead of by name.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::error::ConicError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarRef(pub usize);

impl VarRef {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDef {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub is_binary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(VarRef, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearRow {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum()
    }

    /// Amount by which `x` violates the row; zero when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub terms: Vec<(VarRef, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new(terms: Vec<(VarRef, f64)>, constant: f64) -> Self {
        Self { terms, constant }
    }

    pub fn var(v: VarRef) -> Self {
        Self::new(vec![(v, 1.0)], 0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(Vec::new(), c)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }
}

/// `||vector||_2 <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocRow {
    pub bound: AffineExpr,
    pub vector: Vec<AffineExpr>,
}

impl SocRow {
    pub fn violation(&self, x: &[f64]) -> f64 {
        let norm = self
            .vector
            .iter()
            .map(|e| e.eval(x).powi(2))
            .sum::<f64>()
            .sqrt();
        (norm - self.bound.eval(x)).max(0.0)
    }
}

/// Variable roles across both formulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    FlowY,
    CostL,
    CostLxy,
    TimeT,
    PosP,
    ZTimeTail,
    ZTimeHead,
    ZPosTail,
    ZPosHead,
    Alpha,
    LBar,
}

impl Role {
    fn symbol(self) -> &'static str {
        match self {
            Role::FlowY => "y",
            Role::CostL => "l",
            Role::CostLxy => "lxy",
            Role::TimeT => "t",
            Role::PosP => "p",
            Role::ZTimeTail => "zt",
            Role::ZTimeHead => "zt'",
            Role::ZPosTail => "zp",
            Role::ZPosHead => "zp'",
            Role::Alpha => "alpha",
            Role::LBar => "lbar",
        }
    }
}

/// Addresses one scalar variable: role, edge or node index, agent (baseline
/// only) and vector component (0 for scalars, 0/1 for planar quantities).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub role: Role,
    pub index: usize,
    pub agent: Option<usize>,
    pub component: u8,
}

impl Label {
    pub fn new(role: Role, index: usize, agent: Option<usize>, component: u8) -> Self {
        Self {
            role,
            index,
            agent,
            component,
        }
    }

    pub fn scalar(role: Role, index: usize, agent: Option<usize>) -> Self {
        Self::new(role, index, agent, 0)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}", self.role.symbol(), self.index)?;
        if let Some(k) = self.agent {
            write!(f, ",k{k}")?;
        }
        if matches!(
            self.role,
            Role::CostLxy | Role::PosP | Role::ZPosTail | Role::ZPosHead
        ) {
            write!(f, ",{}", if self.component == 0 { 'x' } else { 'y' })?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicModel {
    pub vars: Vec<VarDef>,
    pub linear: Vec<LinearRow>,
    pub cones: Vec<SocRow>,
    pub objective: Vec<(VarRef, f64)>,
    pub label_map: BTreeMap<Label, VarRef>,
}

/// One failed check from [`ConicModel::check_assignment`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Bound { var: usize, value: f64, excess: f64 },
    Integrality { var: usize, value: f64 },
    Linear { row: usize, excess: f64 },
    Cone { row: usize, excess: f64 },
}

impl ConicModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, label: Label, lower: f64, upper: f64, is_binary: bool) -> VarRef {
        let v = VarRef(self.vars.len());
        self.vars.push(VarDef {
            name: label.to_string(),
            lower,
            upper,
            is_binary,
        });
        let previous = self.label_map.insert(label, v);
        debug_assert!(previous.is_none(), "duplicate label {label}");
        v
    }

    pub fn add_binary(&mut self, label: Label) -> VarRef {
        self.add_var(label, 0.0, 1.0, true)
    }

    pub fn add_continuous(&mut self, label: Label, lower: f64, upper: f64) -> VarRef {
        self.add_var(label, lower, upper, false)
    }

    /// Adds a row, merging repeated variables and dropping zero coefficients.
    pub fn add_row(&mut self, terms: Vec<(VarRef, f64)>, sense: Sense, rhs: f64) {
        self.linear.push(LinearRow {
            terms: merge_terms(terms),
            sense,
            rhs,
        });
    }

    pub fn add_cone(&mut self, bound: AffineExpr, vector: Vec<AffineExpr>) {
        let tidy = |e: AffineExpr| AffineExpr::new(merge_terms(e.terms), e.constant);
        self.cones.push(SocRow {
            bound: tidy(bound),
            vector: vector.into_iter().map(tidy).collect(),
        });
    }

    pub fn var(&self, label: &Label) -> Option<VarRef> {
        self.label_map.get(label).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn binaries(&self) -> Vec<VarRef> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_binary)
            .map(|(k, _)| VarRef(k))
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * x[v.0]).sum()
    }

    /// Continuous relaxation: integrality flags cleared, bounds untouched.
    pub fn relax(&self) -> ConicModel {
        let mut out = self.clone();
        for v in &mut out.vars {
            v.is_binary = false;
        }
        out
    }

    /// Copy with `v` fixed to `value` through its bounds. Later fixings overwrite earlier ones.
    pub fn fix_binary(&self, v: VarRef, value: bool) -> Result<ConicModel, ConicError> {
        let mut out = self.clone();
        out.fix_in_place(v, value)?;
        Ok(out)
    }

    pub(crate) fn fix_in_place(&mut self, v: VarRef, value: bool) -> Result<(), ConicError> {
        let len = self.vars.len();
        let def = self
            .vars
            .get_mut(v.0)
            .ok_or(ConicError::VarOutOfRange { index: v.0, len })?;
        let x = if value { 1.0 } else { 0.0 };
        def.lower = x;
        def.upper = x;
        Ok(())
    }

    /// Evaluates bounds, integrality, rows and cones at `x` with absolute tolerance `tol`.
    pub fn check_assignment(&self, x: &[f64], tol: f64) -> Vec<Violation> {
        assert_eq!(x.len(), self.vars.len(), "assignment length mismatch");
        let mut out = Vec::new();
        for (k, (def, &value)) in self.vars.iter().zip(x).enumerate() {
            let excess = (def.lower - value).max(value - def.upper).max(0.0);
            if excess > tol || value.is_nan() {
                out.push(Violation::Bound {
                    var: k,
                    value,
                    excess,
                });
            }
            if def.is_binary && value.min(1.0 - value).abs() > tol {
                out.push(Violation::Integrality { var: k, value });
            }
        }
        for (k, row) in self.linear.iter().enumerate() {
            let excess = row.violation(x);
            if excess > tol || excess.is_nan() {
                out.push(Violation::Linear { row: k, excess });
            }
        }
        for (k, cone) in self.cones.iter().enumerate() {
            let excess = cone.violation(x);
            if excess > tol || excess.is_nan() {
                out.push(Violation::Cone { row: k, excess });
            }
        }
        out
    }

    /// Human-readable listing of variables, rows and cones. Not a stable format.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let name = |v: VarRef| self.vars[v.0].name.as_str();
        let terms = |ts: &[(VarRef, f64)]| {
            if ts.is_empty() {
                return "0".to_string();
            }
            ts.iter()
                .map(|&(v, c)| format!("{c:+} {}", name(v)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let affine = |e: &AffineExpr| {
            if e.terms.is_empty() {
                format!("{}", e.constant)
            } else if e.constant == 0.0 {
                terms(&e.terms)
            } else {
                format!("{} {:+}", terms(&e.terms), e.constant)
            }
        };
        let _ = writeln!(out, "minimize {}", terms(&self.objective));
        let _ = writeln!(out, "variables {}", self.vars.len());
        for v in &self.vars {
            let kind = if v.is_binary { " binary" } else { "" };
            let _ = writeln!(out, "  {} in [{}, {}]{kind}", v.name, v.lower, v.upper);
        }
        let _ = writeln!(out, "rows {}", self.linear.len());
        for r in &self.linear {
            let _ = writeln!(out, "  {} {} {}", terms(&r.terms), r.sense, r.rhs);
        }
        let _ = writeln!(out, "cones {}", self.cones.len());
        for c in &self.cones {
            let parts: Vec<String> = c.vector.iter().map(affine).collect();
            let _ = writeln!(out, "  || {} || <= {}", parts.join(" ; "), affine(&c.bound));
        }
        out
    }
}

fn merge_terms(terms: Vec<(VarRef, f64)>) -> Vec<(VarRef, f64)> {
    let mut merged: Vec<(VarRef, f64)> = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match merged.iter_mut().find(|(w, _)| *w == v) {
            Some(entry) => entry.1 += c,
            None => merged.push((v, c)),
        }
    }
    merged.retain(|&(_, c)| c != 0.0);
    merged
}
