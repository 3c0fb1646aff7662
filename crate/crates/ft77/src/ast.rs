//! Abstract syntax for the supported Fortran subset.
//!
//! The same AST carries fixed-form FORTRAN 77 input and the free-form
//! Fortran 95 the emitter produces; refactoring passes rewrite it in place.
//! `PartialEq` on statements and units is structural: source locations and
//! declaration provenance are ignored so parse/emit round trips compare
//! equal.

use std::collections::HashMap;

use crate::diag::Loc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseType {
    Integer,
    Real,
    Double,
    Logical,
    Character,
}

impl BaseType {
    pub fn fortran_name(self) -> &'static str {
        match self {
            BaseType::Integer => "integer",
            BaseType::Real => "real",
            BaseType::Double => "double precision",
            BaseType::Logical => "logical",
            BaseType::Character => "character",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, BaseType::Integer | BaseType::Real | BaseType::Double)
    }
}

/// The ANSI default typing rule: I-N integer, otherwise real.
pub fn implicit_type(name: &str) -> BaseType {
    match name.chars().next() {
        Some(c @ 'a'..='z') if ('i'..='n').contains(&c) => BaseType::Integer,
        _ => BaseType::Real,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclOrigin {
    Explicit,
    ImplicitRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Intent {
    In,
    Out,
    InOut,
}

impl Intent {
    pub fn keyword(self) -> &'static str {
        match self {
            Intent::In => "in",
            Intent::Out => "out",
            Intent::InOut => "inout",
        }
    }
}

/// One declared entity. Array extents are compile-time constants with an
/// implied lower bound of 1; rank is at most 7.
#[derive(Debug, Clone)]
pub struct Declaration {
    pub name: String,
    pub base: BaseType,
    pub char_len: Option<i64>,
    pub dims: Vec<i64>,
    pub origin: DeclOrigin,
    pub intent: Option<Intent>,
    pub param_value: Option<Expr>,
    pub loc: Loc,
}

impl Declaration {
    pub fn scalar(name: impl Into<String>, base: BaseType, origin: DeclOrigin) -> Self {
        Declaration {
            name: name.into(),
            base,
            char_len: None,
            dims: Vec::new(),
            origin,
            intent: None,
            param_value: None,
            loc: Loc::synthetic(),
        }
    }

    pub fn is_array(&self) -> bool {
        !self.dims.is_empty()
    }

    pub fn elem_count(&self) -> i64 {
        self.dims.iter().product()
    }
}

impl PartialEq for Declaration {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.base == other.base
            && self.char_len == other.char_len
            && self.dims == other.dims
            && self.intent == other.intent
            && self.param_value == other.param_value
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommonMember {
    pub name: String,
    pub dims: Vec<i64>,
}

/// A COMMON block declaration; `block` is empty for blank common.
#[derive(Debug, Clone)]
pub struct CommonBlockDecl {
    pub block: String,
    pub members: Vec<CommonMember>,
    pub loc: Loc,
}

impl CommonBlockDecl {
    /// Name usable in identifiers and reports.
    pub fn display_name(&self) -> &str {
        if self.block.is_empty() { "blank" } else { &self.block }
    }
}

impl PartialEq for CommonBlockDecl {
    fn eq(&self, other: &Self) -> bool {
        self.block == other.block && self.members == other.members
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    Program,
    Subroutine,
    Function,
    BlockData,
}

impl UnitKind {
    pub fn keyword(self) -> &'static str {
        match self {
            UnitKind::Program => "program",
            UnitKind::Subroutine => "subroutine",
            UnitKind::Function => "function",
            UnitKind::BlockData => "block data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UseDecl {
    pub module: String,
    pub only: Vec<String>,
}

/// Scalar or whole-array initialization from a BLOCK DATA unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DataInit {
    pub name: String,
    /// (repeat count, literal value) groups, flattened in declaration order.
    pub values: Vec<(u32, Expr)>,
}

#[derive(Debug, Clone)]
pub struct ProgramUnit {
    pub kind: UnitKind,
    pub name: String,
    pub args: Vec<String>,
    /// Declared result type for functions (`real function f(...)`).
    pub result_type: Option<BaseType>,
    pub decls: Vec<Declaration>,
    pub commons: Vec<CommonBlockDecl>,
    pub data: Vec<DataInit>,
    pub body: Vec<Stmt>,
    pub implicit_none: bool,
    pub uses: Vec<UseDecl>,
    /// Wrapping module name once modularized.
    pub module: Option<String>,
    pub loc: Loc,
}

impl ProgramUnit {
    pub fn new(kind: UnitKind, name: impl Into<String>, loc: Loc) -> Self {
        ProgramUnit {
            kind,
            name: name.into(),
            args: Vec::new(),
            result_type: None,
            decls: Vec::new(),
            commons: Vec::new(),
            data: Vec::new(),
            body: Vec::new(),
            implicit_none: false,
            uses: Vec::new(),
            module: None,
            loc,
        }
    }

    pub fn find_decl(&self, name: &str) -> Option<&Declaration> {
        self.decls.iter().find(|d| d.name == name)
    }

    pub fn find_decl_mut(&mut self, name: &str) -> Option<&mut Declaration> {
        self.decls.iter_mut().find(|d| d.name == name)
    }

    /// Integer parameter environment for folding dims and loop bounds.
    pub fn int_params(&self) -> HashMap<String, i64> {
        self.decls
            .iter()
            .filter_map(|d| match &d.param_value {
                Some(Expr::IntLit(v)) => Some((d.name.clone(), *v)),
                _ => None,
            })
            .collect()
    }
}

impl PartialEq for ProgramUnit {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.name == other.name
            && self.args == other.args
            && self.result_type == other.result_type
            && self.decls == other.decls
            && self.commons == other.commons
            && self.data == other.data
            && self.body == other.body
            && self.implicit_none == other.implicit_none
            && self.uses == other.uses
            && self.module == other.module
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LValue {
    Scalar(String),
    Elem(String, Vec<Expr>),
}

impl LValue {
    pub fn name(&self) -> &str {
        match self {
            LValue::Scalar(n) => n,
            LValue::Elem(n, _) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    IntLit(i64),
    RealLit { value: f64, double: bool },
    LogicalLit(bool),
    CharLit(String),
    Var(String),
    /// Array element reference; subscript arity equals declared rank.
    Elem(String, Vec<Expr>),
    /// Function reference: an intrinsic or a user function.
    Call(String, Vec<Expr>),
    Un(UnOp, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn real(value: f64) -> Self {
        Expr::RealLit { value, double: false }
    }

    /// Visit every node of the expression tree, outermost first.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Elem(_, subs) | Expr::Call(_, subs) => {
                for s in subs {
                    s.walk(f);
                }
            }
            Expr::Un(_, e) => e.walk(f),
            Expr::Bin(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }

    /// True if `name` occurs as a variable, array, or call anywhere inside.
    pub fn mentions(&self, name: &str) -> bool {
        let mut found = false;
        self.walk(&mut |e| match e {
            Expr::Var(n) | Expr::Elem(n, _) | Expr::Call(n, _) if n == name => found = true,
            _ => {}
        });
        found
    }
}

pub const INTRINSICS: &[&str] = &["abs", "sqrt", "min", "max", "mod", "exp", "sin", "cos"];

pub fn is_intrinsic(name: &str) -> bool {
    INTRINSICS.contains(&name)
}

/// Fold an expression to an integer constant under a parameter environment.
/// Returns None for anything non-constant.
pub fn eval_const_int(expr: &Expr, params: &HashMap<String, i64>) -> Option<i64> {
    match expr {
        Expr::IntLit(v) => Some(*v),
        Expr::Var(n) => params.get(n).copied(),
        Expr::Un(UnOp::Neg, e) => eval_const_int(e, params).map(|v| -v),
        Expr::Bin(op, a, b) => {
            let a = eval_const_int(a, params)?;
            let b = eval_const_int(b, params)?;
            match op {
                BinOp::Add => Some(a + b),
                BinOp::Sub => Some(a - b),
                BinOp::Mul => Some(a * b),
                BinOp::Div => (b != 0).then(|| a / b),
                BinOp::Pow => (0..=62).contains(&b).then(|| a.pow(b as u32)),
                _ => None,
            }
        }
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub label: Option<u32>,
    pub loc: Loc,
    pub kind: StmtKind,
}

impl Stmt {
    pub fn new(kind: StmtKind, loc: Loc) -> Self {
        Stmt { label: None, loc, kind }
    }
}

impl PartialEq for Stmt {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label && self.kind == other.kind
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign {
        target: LValue,
        value: Expr,
    },
    /// IF/ELSE IF/ELSE chain; a logical IF parses as a single-arm block.
    If {
        arms: Vec<(Expr, Vec<Stmt>)>,
        else_body: Option<Vec<Stmt>>,
    },
    /// Indexed DO loop. `term_label` is retained for labelled
    /// DO/CONTINUE loops until control-flow normalization drops it.
    Do {
        var: String,
        lower: Expr,
        upper: Expr,
        step: Option<Expr>,
        body: Vec<Stmt>,
        term_label: Option<u32>,
    },
    Goto(u32),
    Continue,
    Call {
        name: String,
        args: Vec<Expr>,
    },
    Return,
    Stop,
    /// List-directed PRINT/WRITE to standard output.
    Print {
        items: Vec<Expr>,
    },
    RegionBegin,
    RegionEnd,
}

/// Statement-tree walk over nested bodies, outermost first.
pub fn walk_stmts<'a>(stmts: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        match &s.kind {
            StmtKind::If { arms, else_body } => {
                for (_, body) in arms {
                    walk_stmts(body, f);
                }
                if let Some(body) = else_body {
                    walk_stmts(body, f);
                }
            }
            StmtKind::Do { body, .. } => walk_stmts(body, f),
            _ => {}
        }
    }
}

/// Mutable statement-tree walk, outermost first.
pub fn walk_stmts_mut(stmts: &mut [Stmt], f: &mut impl FnMut(&mut Stmt)) {
    for s in stmts {
        f(s);
        match &mut s.kind {
            StmtKind::If { arms, else_body } => {
                for (_, body) in arms {
                    walk_stmts_mut(body, f);
                }
                if let Some(body) = else_body {
                    walk_stmts_mut(body, f);
                }
            }
            StmtKind::Do { body, .. } => walk_stmts_mut(body, f),
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn implicit_rule_letters() {
        assert_eq!(implicit_type("k"), BaseType::Integer);
        assert_eq!(implicit_type("n2"), BaseType::Integer);
        assert_eq!(implicit_type("eta"), BaseType::Real);
        assert_eq!(implicit_type("x"), BaseType::Real);
    }

    #[test]
    fn const_folding_with_parameters() {
        let mut params = HashMap::new();
        params.insert("nx".to_string(), 100i64);
        let e = Expr::Bin(
            BinOp::Add,
            Box::new(Expr::Var("nx".into())),
            Box::new(Expr::IntLit(2)),
        );
        assert_eq!(eval_const_int(&e, &params), Some(102));
        assert_eq!(eval_const_int(&Expr::Var("m".into()), &params), None);
    }

    #[test]
    fn structural_eq_ignores_locations_and_origin() {
        let mut a = Declaration::scalar("k", BaseType::Integer, DeclOrigin::Explicit);
        let mut b = Declaration::scalar("k", BaseType::Integer, DeclOrigin::ImplicitRule);
        a.loc = Loc::new("x.f", 3, 1);
        b.loc = Loc::new("y.f95", 9, 1);
        assert_eq!(a, b);
    }
}
