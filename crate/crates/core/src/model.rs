//! Solver-neutral model representation.
//!
//! Every optimization problem in the crate is assembled into a [`Model`]:
//! typed variables, linear rows (optionally carrying bilinear terms), and a
//! linear objective. Rows carry a family tag so that assembled models can be
//! audited by constraint family.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

/// Family tag attached to each row.
pub type RowTag = &'static str;

#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub bilinear: Vec<(VarId, VarId, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
    pub tag: RowTag,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.terms.iter().map(|&(v, c)| c * x[v.0]).sum();
        let quad: f64 = self.bilinear.iter().map(|&(a, b, c)| c * x[a.0] * x[b.0]).sum();
        lin + quad
    }

    /// Amount by which the row is violated at `x` (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.sense {
            RowSense::Le => (a - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - a).max(0.0),
            RowSense::Eq => (a - self.rhs).abs(),
        }
    }

    /// Signed distance to the bound, positive when strictly satisfied.
    pub fn slack(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.sense {
            RowSense::Le => self.rhs - a,
            RowSense::Ge => a - self.rhs,
            RowSense::Eq => -(a - self.rhs).abs(),
        }
    }
}

/// Sparse affine expression `sum(c_j x_j) + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        LinExpr { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn term(v: VarId, c: f64) -> Self {
        LinExpr { terms: vec![(v, c)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: VarId, c: f64) -> &mut Self {
        if c != 0.0 {
            self.terms.push((v, c));
        }
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_scaled(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        if scale == 0.0 {
            return self;
        }
        for &(v, c) in &other.terms {
            self.terms.push((v, c * scale));
        }
        self.constant += other.constant * scale;
        self
    }

    pub fn scaled(&self, scale: f64) -> LinExpr {
        let mut e = LinExpr::new();
        e.add_scaled(self, scale);
        e
    }

    pub fn plus(mut self, other: &LinExpr) -> LinExpr {
        self.add_scaled(other, 1.0);
        self
    }

    pub fn minus(mut self, other: &LinExpr) -> LinExpr {
        self.add_scaled(other, -1.0);
        self
    }

    /// Merges duplicate variables and drops exact zeros.
    pub fn compact(&self) -> LinExpr {
        let mut map: BTreeMap<VarId, f64> = BTreeMap::new();
        for &(v, c) in &self.terms {
            *map.entry(v).or_insert(0.0) += c;
        }
        LinExpr {
            terms: map.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            constant: self.constant,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.compact().terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct Objective {
    pub sense: ObjSense,
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub name: String,
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
    pub objective: Objective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub what: String,
    pub amount: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated by {:.3e}", self.what, self.amount)
    }
}

impl Model {
    pub fn new(name: impl Into<String>, sense: ObjSense) -> Self {
        Model {
            name: name.into(),
            vars: Vec::new(),
            rows: Vec::new(),
            objective: Objective { sense, terms: Vec::new(), constant: 0.0 },
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> VarId {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        self.vars.push(Variable { name: name.into(), kind, lower, upper });
        VarId(self.vars.len() - 1)
    }

    pub fn continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    /// Adds `expr (sense) rhs`; the expression constant is moved to the right-hand side.
    pub fn add_row(&mut self, name: impl Into<String>, expr: &LinExpr, sense: RowSense, rhs: f64, tag: RowTag) -> RowId {
        let e = expr.compact();
        self.rows.push(Row {
            name: name.into(),
            terms: e.terms,
            bilinear: Vec::new(),
            sense,
            rhs: rhs - e.constant,
            tag,
        });
        RowId(self.rows.len() - 1)
    }

    pub fn add_bilinear_row(
        &mut self,
        name: impl Into<String>,
        expr: &LinExpr,
        bilinear: Vec<(VarId, VarId, f64)>,
        sense: RowSense,
        rhs: f64,
        tag: RowTag,
    ) -> RowId {
        let id = self.add_row(name, expr, sense, rhs, tag);
        self.rows[id.0].bilinear = bilinear;
        id
    }

    pub fn set_objective(&mut self, expr: &LinExpr) {
        let e = expr.compact();
        self.objective.terms = e.terms;
        self.objective.constant = e.constant;
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.constant + self.objective.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }

    pub fn has_integers(&self) -> bool {
        self.vars.iter().any(|v| v.kind != VarKind::Continuous)
    }

    pub fn has_bilinear(&self) -> bool {
        self.rows.iter().any(|r| !r.bilinear.is_empty())
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn count_rows_tagged(&self, tag: &str) -> usize {
        self.rows.iter().filter(|r| r.tag == tag).count()
    }

    pub fn fix_var(&mut self, v: VarId, value: f64) {
        self.vars[v.0].lower = value;
        self.vars[v.0].upper = value;
    }

    /// Checks bounds, integrality and rows at `x` with an absolute-plus-relative tolerance.
    pub fn check_point(&self, x: &[f64], tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        if x.len() != self.vars.len() {
            out.push(Violation { what: format!("point length {} != {}", x.len(), self.vars.len()), amount: f64::INFINITY });
            return out;
        }
        for (j, v) in self.vars.iter().enumerate() {
            let xv = x[j];
            let t = tol * (1.0 + xv.abs());
            if xv < v.lower - t {
                out.push(Violation { what: format!("lower bound of {}", v.name), amount: v.lower - xv });
            }
            if xv > v.upper + t {
                out.push(Violation { what: format!("upper bound of {}", v.name), amount: xv - v.upper });
            }
            if v.kind != VarKind::Continuous && (xv - xv.round()).abs() > tol.max(1e-6) {
                out.push(Violation { what: format!("integrality of {}", v.name), amount: (xv - xv.round()).abs() });
            }
        }
        for r in &self.rows {
            let scale = 1.0 + r.rhs.abs() + r.terms.iter().map(|&(v, c)| (c * x[v.0]).abs()).fold(0.0, f64::max);
            let viol = r.violation(x);
            if viol > tol * scale {
                out.push(Violation { what: format!("row {} [{}]", r.name, r.tag), amount: viol });
            }
        }
        out
    }
}
