//! Parser for the supported subset, covering both fixed-form FORTRAN 77
//! input and the free-form Fortran 95 the emitter writes.
//!
//! Parsing is two-pass: every logical line becomes a flat `RawStmt`, then a
//! frame stack folds DO/IF structure and program-unit boundaries. Labelled
//! DO loops terminate on a labelled CONTINUE (shared terminators close all
//! matching frames). Unsupported constructs are hard, located errors.

use std::collections::{HashMap, HashSet};

use crate::ast::*;
use crate::diag::{Diag, Loc, Result, Stage};
use crate::lexer::{self, Directive, StmtLine, Tok, Token};
use crate::source::{RawLine, SourceKind, SourceUnit};

pub fn parse_source(src: &SourceUnit) -> Result<Vec<ProgramUnit>> {
    let lines = crate::source::text_lines(src.path.clone(), &src.lines.join("\n"));
    parse_lines(src.kind, &lines)
}

pub fn parse_lines(kind: SourceKind, lines: &[RawLine]) -> Result<Vec<ProgramUnit>> {
    let stmt_lines = lexer::lex(kind, lines)?;
    parse_stmt_lines(&stmt_lines)
}

pub fn parse_text(
    path: impl Into<std::sync::Arc<str>>,
    kind: SourceKind,
    text: &str,
) -> Result<Vec<ProgramUnit>> {
    let stmt_lines = lexer::lex_text(path, kind, text)?;
    parse_stmt_lines(&stmt_lines)
}

// ---------------------------------------------------------------------------
// Pass A: one logical line -> one raw statement.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum RawStmt {
    ProgramHeader(String),
    SubroutineHeader(String, Vec<String>),
    FunctionHeader(Option<BaseType>, String, Vec<String>),
    BlockDataHeader(String),
    ModuleHeader(String),
    Contains,
    EndModule,
    EndUnit,
    TypeDecl {
        base: BaseType,
        char_len: Option<i64>,
        intent: Option<Intent>,
        parameter: bool,
        entities: Vec<(String, Vec<Expr>, Option<Expr>)>,
    },
    Dimension(Vec<(String, Vec<Expr>)>),
    Parameter(Vec<(String, Expr)>),
    Common {
        block: String,
        members: Vec<(String, Vec<Expr>)>,
    },
    ImplicitNone,
    Use(UseDecl),
    Data(Vec<(String, Vec<(u32, Expr)>)>),
    Exec(StmtKind),
    IfThen(Expr),
    ElseIf(Expr),
    Else,
    EndIf,
    DoHeader {
        var: String,
        lower: Expr,
        upper: Expr,
        step: Option<Expr>,
        term_label: Option<u32>,
    },
    EndDo,
}

struct Item {
    label: Option<u32>,
    loc: Loc,
    raw: RawStmt,
}

/// Token cursor over one logical statement line.
struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    loc: Loc,
    /// Names declared as arrays in the current unit, for distinguishing
    /// array elements from function references.
    arrays: &'a HashSet<String>,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek2(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos + 1).map(|t| &t.tok)
    }

    fn here(&self) -> Loc {
        self.toks.get(self.pos).map(|t| t.loc.clone()).unwrap_or_else(|| self.loc.clone())
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t.map(|t| &t.tok)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn error(&self, msg: impl Into<String>) -> Diag {
        Diag::at(Stage::Parse, self.here(), msg)
    }

    fn expect(&mut self, tok: &Tok) -> Result<()> {
        match self.peek() {
            Some(t) if t == tok => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.error(format!("expected {}, found {}", tok.describe(), t.describe()))),
            None => Err(self.error(format!("expected {}, found end of statement", tok.describe()))),
        }
    }

    fn expect_end(&self) -> Result<()> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error(format!(
                "unexpected {} after complete statement",
                self.peek().unwrap().describe()
            )))
        }
    }

    fn accept_kw(&mut self, kw: &str) -> bool {
        if let Some(Tok::Ident(s)) = self.peek() {
            if s == kw {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    fn expect_ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s.clone())
            }
            Some(t) => Err(self.error(format!("expected identifier, found {}", t.describe()))),
            None => Err(self.error("expected identifier, found end of statement")),
        }
    }

    fn expect_int(&mut self) -> Result<i64> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(*v)
            }
            Some(t) => Err(self.error(format!("expected integer, found {}", t.describe()))),
            None => Err(self.error("expected integer, found end of statement")),
        }
    }

    fn expect_label(&mut self) -> Result<u32> {
        let v = self.expect_int()?;
        u32::try_from(v).map_err(|_| self.error(format!("invalid label {v}")))
    }
}

const UNSUPPORTED_STMTS: &[&str] = &[
    "equivalence",
    "entry",
    "save",
    "external",
    "intrinsic",
    "format",
    "read",
    "open",
    "close",
    "rewind",
    "backspace",
    "endfile",
    "inquire",
    "pause",
    "assign",
    "namelist",
    "include",
];

fn parse_raw(line: &StmtLine, arrays: &HashSet<String>) -> Result<RawStmt> {
    let mut c = Cursor { toks: &line.tokens, pos: 0, loc: line.loc.clone(), arrays };
    let raw = parse_raw_inner(&mut c)?;
    c.expect_end()?;
    Ok(raw)
}

fn parse_raw_inner(c: &mut Cursor) -> Result<RawStmt> {
    let first = match c.peek() {
        Some(Tok::Ident(s)) => s.clone(),
        _ => return Err(c.error("statement must begin with a keyword or identifier")),
    };

    if UNSUPPORTED_STMTS.contains(&first.as_str()) {
        return Err(c.error(format!("unsupported: {}", first.to_ascii_uppercase())));
    }

    match first.as_str() {
        "program" => {
            c.next();
            Ok(RawStmt::ProgramHeader(c.expect_ident()?))
        }
        "subroutine" => {
            c.next();
            let name = c.expect_ident()?;
            Ok(RawStmt::SubroutineHeader(name, parse_arg_list(c)?))
        }
        "function" => {
            c.next();
            let name = c.expect_ident()?;
            Ok(RawStmt::FunctionHeader(None, name, parse_arg_list(c)?))
        }
        "module" => {
            c.next();
            Ok(RawStmt::ModuleHeader(c.expect_ident()?))
        }
        "contains" => {
            c.next();
            Ok(RawStmt::Contains)
        }
        "block" | "blockdata" => {
            c.next();
            if first == "block" && !c.accept_kw("data") {
                return Err(c.error("expected DATA after BLOCK"));
            }
            let name = if let Some(Tok::Ident(_)) = c.peek() {
                c.expect_ident()?
            } else {
                String::new()
            };
            Ok(RawStmt::BlockDataHeader(name))
        }
        "end" | "endif" | "enddo" => parse_end_family(c, &first),
        "integer" | "real" | "logical" | "character" | "double" | "doubleprecision" => {
            parse_type_decl_or_function(c, &first)
        }
        "dimension" => {
            c.next();
            let mut entities = Vec::new();
            loop {
                let name = c.expect_ident()?;
                let dims = parse_dim_list(c)?;
                if dims.is_empty() {
                    return Err(c.error(format!("DIMENSION entry '{name}' has no extents")));
                }
                entities.push((name, dims));
                if !matches!(c.peek(), Some(Tok::Comma)) {
                    break;
                }
                c.next();
            }
            Ok(RawStmt::Dimension(entities))
        }
        "parameter" => {
            c.next();
            c.expect(&Tok::LParen)?;
            let mut pairs = Vec::new();
            loop {
                let name = c.expect_ident()?;
                c.expect(&Tok::Assign)?;
                pairs.push((name, parse_expr(c)?));
                match c.next() {
                    Some(Tok::Comma) => continue,
                    Some(Tok::RParen) => break,
                    _ => return Err(c.error("expected ',' or ')' in PARAMETER list")),
                }
            }
            Ok(RawStmt::Parameter(pairs))
        }
        "common" => parse_common(c),
        "implicit" => {
            c.next();
            if c.accept_kw("none") {
                Ok(RawStmt::ImplicitNone)
            } else {
                Err(c.error("unsupported: IMPLICIT type ranges (only IMPLICIT NONE)"))
            }
        }
        "use" => {
            c.next();
            let module = c.expect_ident()?;
            let mut only = Vec::new();
            if matches!(c.peek(), Some(Tok::Comma)) {
                c.next();
                if !c.accept_kw("only") {
                    return Err(c.error("expected ONLY in USE statement"));
                }
                c.expect(&Tok::Colon)?;
                loop {
                    only.push(c.expect_ident()?);
                    if !matches!(c.peek(), Some(Tok::Comma)) {
                        break;
                    }
                    c.next();
                }
            }
            Ok(RawStmt::Use(UseDecl { module, only }))
        }
        "data" => parse_data(c),
        "if" => parse_if(c),
        "elseif" => {
            c.next();
            c.expect(&Tok::LParen)?;
            let cond = parse_expr(c)?;
            c.expect(&Tok::RParen)?;
            if !c.accept_kw("then") {
                return Err(c.error("expected THEN after ELSE IF condition"));
            }
            Ok(RawStmt::ElseIf(cond))
        }
        "else" => {
            c.next();
            if c.accept_kw("if") {
                c.expect(&Tok::LParen)?;
                let cond = parse_expr(c)?;
                c.expect(&Tok::RParen)?;
                if !c.accept_kw("then") {
                    return Err(c.error("expected THEN after ELSE IF condition"));
                }
                Ok(RawStmt::ElseIf(cond))
            } else {
                Ok(RawStmt::Else)
            }
        }
        "do" => parse_do(c),
        "goto" => {
            c.next();
            parse_goto_target(c)
        }
        "go" => {
            c.next();
            if !c.accept_kw("to") {
                return Err(c.error("expected TO after GO"));
            }
            parse_goto_target(c)
        }
        "continue" => {
            c.next();
            Ok(RawStmt::Exec(StmtKind::Continue))
        }
        "call" => {
            c.next();
            let name = c.expect_ident()?;
            let mut args = Vec::new();
            if matches!(c.peek(), Some(Tok::LParen)) {
                c.next();
                if !matches!(c.peek(), Some(Tok::RParen)) {
                    loop {
                        args.push(parse_expr(c)?);
                        match c.peek() {
                            Some(Tok::Comma) => {
                                c.next();
                            }
                            _ => break,
                        }
                    }
                }
                c.expect(&Tok::RParen)?;
            }
            Ok(RawStmt::Exec(StmtKind::Call { name, args }))
        }
        "return" => {
            c.next();
            Ok(RawStmt::Exec(StmtKind::Return))
        }
        "stop" => {
            c.next();
            Ok(RawStmt::Exec(StmtKind::Stop))
        }
        "print" => {
            c.next();
            c.expect(&Tok::Star)?;
            let mut items = Vec::new();
            if matches!(c.peek(), Some(Tok::Comma)) {
                c.next();
                loop {
                    items.push(parse_expr(c)?);
                    match c.peek() {
                        Some(Tok::Comma) => {
                            c.next();
                        }
                        _ => break,
                    }
                }
            }
            Ok(RawStmt::Exec(StmtKind::Print { items }))
        }
        "write" => {
            c.next();
            c.expect(&Tok::LParen)?;
            c.expect(&Tok::Star)?;
            c.expect(&Tok::Comma)?;
            c.expect(&Tok::Star)?;
            c.expect(&Tok::RParen)?;
            let mut items = Vec::new();
            if !c.at_end() {
                loop {
                    items.push(parse_expr(c)?);
                    match c.peek() {
                        Some(Tok::Comma) => {
                            c.next();
                        }
                        _ => break,
                    }
                }
            }
            Ok(RawStmt::Exec(StmtKind::Print { items }))
        }
        _ => parse_assignment(c),
    }
}

fn parse_goto_target(c: &mut Cursor) -> Result<RawStmt> {
    match c.peek() {
        Some(Tok::LParen) => Err(c.error("unsupported: computed GOTO")),
        Some(Tok::Ident(_)) => Err(c.error("unsupported: assigned GOTO")),
        _ => Ok(RawStmt::Exec(StmtKind::Goto(c.expect_label()?))),
    }
}

fn parse_end_family(c: &mut Cursor, first: &str) -> Result<RawStmt> {
    c.next();
    match first {
        "endif" => return Ok(RawStmt::EndIf),
        "enddo" => return Ok(RawStmt::EndDo),
        _ => {}
    }
    match c.peek() {
        None => Ok(RawStmt::EndUnit),
        Some(Tok::Ident(kw)) => {
            let kw = kw.clone();
            c.next();
            match kw.as_str() {
                "if" => Ok(RawStmt::EndIf),
                "do" => Ok(RawStmt::EndDo),
                "module" => {
                    if let Some(Tok::Ident(_)) = c.peek() {
                        c.next();
                    }
                    Ok(RawStmt::EndModule)
                }
                "program" | "subroutine" | "function" => {
                    if let Some(Tok::Ident(_)) = c.peek() {
                        c.next();
                    }
                    Ok(RawStmt::EndUnit)
                }
                "block" => {
                    c.accept_kw("data");
                    if let Some(Tok::Ident(_)) = c.peek() {
                        c.next();
                    }
                    Ok(RawStmt::EndUnit)
                }
                _ => Err(c.error(format!("unexpected '{kw}' after END"))),
            }
        }
        Some(t) => Err(c.error(format!("unexpected {} after END", t.describe()))),
    }
}

fn parse_arg_list(c: &mut Cursor) -> Result<Vec<String>> {
    let mut args = Vec::new();
    if matches!(c.peek(), Some(Tok::LParen)) {
        c.next();
        if !matches!(c.peek(), Some(Tok::RParen)) {
            loop {
                args.push(c.expect_ident()?);
                match c.peek() {
                    Some(Tok::Comma) => {
                        c.next();
                    }
                    _ => break,
                }
            }
        }
        c.expect(&Tok::RParen)?;
    }
    Ok(args)
}

fn parse_type_keyword(c: &mut Cursor, first: &str) -> Result<(BaseType, Option<i64>)> {
    c.next();
    let base = match first {
        "integer" => BaseType::Integer,
        "real" => BaseType::Real,
        "logical" => BaseType::Logical,
        "doubleprecision" => BaseType::Double,
        "double" => {
            if !c.accept_kw("precision") {
                return Err(c.error("expected PRECISION after DOUBLE"));
            }
            BaseType::Double
        }
        "character" => BaseType::Character,
        _ => unreachable!(),
    };
    let mut char_len = None;
    if base == BaseType::Character {
        match c.peek() {
            Some(Tok::Star) => {
                c.next();
                char_len = Some(c.expect_int()?);
            }
            Some(Tok::LParen) if matches!(c.peek2(), Some(Tok::Ident(k)) if k == "len") => {
                c.next();
                c.next();
                c.expect(&Tok::Assign)?;
                char_len = Some(c.expect_int()?);
                c.expect(&Tok::RParen)?;
            }
            _ => {}
        }
    }
    Ok((base, char_len))
}

fn parse_type_decl_or_function(c: &mut Cursor, first: &str) -> Result<RawStmt> {
    let (base, char_len) = parse_type_keyword(c, first)?;

    if c.accept_kw("function") {
        let name = c.expect_ident()?;
        return Ok(RawStmt::FunctionHeader(Some(base), name, parse_arg_list(c)?));
    }

    // Attribute list (free form): `, intent(in)` / `, parameter` up to `::`.
    let mut intent = None;
    let mut parameter = false;
    while matches!(c.peek(), Some(Tok::Comma)) {
        c.next();
        let attr = c.expect_ident()?;
        match attr.as_str() {
            "intent" => {
                c.expect(&Tok::LParen)?;
                let which = c.expect_ident()?;
                intent = Some(match which.as_str() {
                    "in" => Intent::In,
                    "out" => Intent::Out,
                    "inout" => Intent::InOut,
                    other => return Err(c.error(format!("unknown intent '{other}'"))),
                });
                c.expect(&Tok::RParen)?;
            }
            "parameter" => parameter = true,
            other => return Err(c.error(format!("unsupported declaration attribute '{other}'"))),
        }
    }
    if matches!(c.peek(), Some(Tok::DoubleColon)) {
        c.next();
    } else if intent.is_some() || parameter {
        return Err(c.error("expected '::' after attribute list"));
    }

    let mut entities = Vec::new();
    loop {
        let name = c.expect_ident()?;
        let dims = parse_dim_list(c)?;
        let init = if matches!(c.peek(), Some(Tok::Assign)) {
            c.next();
            Some(parse_expr(c)?)
        } else {
            None
        };
        if init.is_some() && !parameter {
            return Err(c.error("initializer requires the PARAMETER attribute"));
        }
        entities.push((name, dims, init));
        match c.peek() {
            Some(Tok::Comma) => {
                c.next();
            }
            _ => break,
        }
    }
    Ok(RawStmt::TypeDecl { base, char_len, intent, parameter, entities })
}

fn parse_dim_list(c: &mut Cursor) -> Result<Vec<Expr>> {
    let mut dims = Vec::new();
    if matches!(c.peek(), Some(Tok::LParen)) {
        c.next();
        loop {
            dims.push(parse_expr(c)?);
            match c.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::RParen) => break,
                _ => return Err(c.error("expected ',' or ')' in dimension list")),
            }
        }
        if dims.len() > 7 {
            return Err(c.error("array rank exceeds 7"));
        }
    }
    Ok(dims)
}

fn parse_common(c: &mut Cursor) -> Result<RawStmt> {
    c.next();
    let block = match c.peek() {
        Some(Tok::Slash) => {
            c.next();
            match c.peek() {
                Some(Tok::Slash) => {
                    c.next();
                    String::new()
                }
                _ => {
                    let name = c.expect_ident()?;
                    c.expect(&Tok::Slash)?;
                    name
                }
            }
        }
        _ => String::new(),
    };
    let mut members = Vec::new();
    loop {
        let name = c.expect_ident()?;
        let dims = parse_dim_list(c)?;
        members.push((name, dims));
        match c.peek() {
            Some(Tok::Comma) => {
                c.next();
            }
            _ => break,
        }
    }
    Ok(RawStmt::Common { block, members })
}

fn parse_data(c: &mut Cursor) -> Result<RawStmt> {
    c.next();
    let mut inits = Vec::new();
    loop {
        let name = c.expect_ident()?;
        c.expect(&Tok::Slash)?;
        let mut values = Vec::new();
        loop {
            let (repeat, value) = parse_data_value(c)?;
            values.push((repeat, value));
            match c.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::Slash) => break,
                _ => return Err(c.error("expected ',' or '/' in DATA value list")),
            }
        }
        inits.push((name, values));
        match c.peek() {
            Some(Tok::Comma) => {
                c.next();
            }
            _ => break,
        }
    }
    Ok(RawStmt::Data(inits))
}

fn parse_data_value(c: &mut Cursor) -> Result<(u32, Expr)> {
    // Either `literal` or `count * literal`.
    let mut repeat = 1u32;
    if let (Some(Tok::Int(n)), Some(Tok::Star)) = (c.peek(), c.peek2()) {
        repeat = u32::try_from(*n).map_err(|_| c.error("bad repeat count"))?;
        c.next();
        c.next();
    }
    let value = parse_literal_value(c)?;
    Ok((repeat, value))
}

fn parse_literal_value(c: &mut Cursor) -> Result<Expr> {
    let neg = match c.peek() {
        Some(Tok::Minus) => {
            c.next();
            true
        }
        Some(Tok::Plus) => {
            c.next();
            false
        }
        _ => false,
    };
    let e = match c.next() {
        Some(Tok::Int(v)) => Expr::IntLit(if neg { -v } else { *v }),
        Some(Tok::Real { value, double }) => {
            Expr::RealLit { value: if neg { -value } else { *value }, double: *double }
        }
        Some(Tok::Logical(b)) if !neg => Expr::LogicalLit(*b),
        Some(Tok::Char(s)) if !neg => Expr::CharLit(s.clone()),
        _ => return Err(c.error("expected a literal constant")),
    };
    Ok(e)
}

fn parse_if(c: &mut Cursor) -> Result<RawStmt> {
    c.next();
    c.expect(&Tok::LParen)?;
    let cond = parse_expr(c)?;
    c.expect(&Tok::RParen)?;
    if c.accept_kw("then") {
        return Ok(RawStmt::IfThen(cond));
    }
    // Logical IF: one simple statement on the same line.
    let inner = parse_raw_inner(c)?;
    let kind = match inner {
        RawStmt::Exec(k) => match k {
            StmtKind::Assign { .. }
            | StmtKind::Goto(_)
            | StmtKind::Call { .. }
            | StmtKind::Return
            | StmtKind::Stop
            | StmtKind::Continue
            | StmtKind::Print { .. } => k,
            _ => return Err(c.error("unsupported statement in logical IF")),
        },
        _ => return Err(c.error("unsupported statement in logical IF")),
    };
    let inner_stmt = Stmt::new(kind, c.loc.clone());
    Ok(RawStmt::Exec(StmtKind::If { arms: vec![(cond, vec![inner_stmt])], else_body: None }))
}

fn parse_do(c: &mut Cursor) -> Result<RawStmt> {
    c.next();
    let term_label = match c.peek() {
        Some(Tok::Int(v)) => {
            let v = *v;
            c.next();
            Some(u32::try_from(v).map_err(|_| c.error("invalid DO label"))?)
        }
        _ => None,
    };
    if let Some(Tok::Ident(kw)) = c.peek() {
        if kw == "while" {
            return Err(c.error("unsupported: DO WHILE"));
        }
    }
    let var = c.expect_ident()?;
    c.expect(&Tok::Assign)?;
    let lower = parse_expr(c)?;
    c.expect(&Tok::Comma)?;
    let upper = parse_expr(c)?;
    let step = if matches!(c.peek(), Some(Tok::Comma)) {
        c.next();
        Some(parse_expr(c)?)
    } else {
        None
    };
    Ok(RawStmt::DoHeader { var, lower, upper, step, term_label })
}

fn parse_assignment(c: &mut Cursor) -> Result<RawStmt> {
    let name = c.expect_ident()?;
    let target = if matches!(c.peek(), Some(Tok::LParen)) {
        if !c.arrays.contains(&name) {
            return Err(c.error(format!(
                "assignment to '{name}(...)' but '{name}' is not a declared array"
            )));
        }
        let subs = parse_paren_exprs(c)?;
        LValue::Elem(name, subs)
    } else {
        LValue::Scalar(name)
    };
    c.expect(&Tok::Assign)?;
    let value = parse_expr(c)?;
    Ok(RawStmt::Exec(StmtKind::Assign { target, value }))
}

fn parse_paren_exprs(c: &mut Cursor) -> Result<Vec<Expr>> {
    c.expect(&Tok::LParen)?;
    let mut out = Vec::new();
    if !matches!(c.peek(), Some(Tok::RParen)) {
        loop {
            out.push(parse_expr(c)?);
            match c.peek() {
                Some(Tok::Comma) => {
                    c.next();
                }
                _ => break,
            }
        }
    }
    c.expect(&Tok::RParen)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Expressions: precedence climbing, Fortran operator levels.
// ---------------------------------------------------------------------------

fn parse_expr(c: &mut Cursor) -> Result<Expr> {
    parse_or(c)
}

fn parse_or(c: &mut Cursor) -> Result<Expr> {
    let mut lhs = parse_and(c)?;
    while matches!(c.peek(), Some(Tok::Or)) {
        c.next();
        let rhs = parse_and(c)?;
        lhs = Expr::Bin(BinOp::Or, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_and(c: &mut Cursor) -> Result<Expr> {
    let mut lhs = parse_not(c)?;
    while matches!(c.peek(), Some(Tok::And)) {
        c.next();
        let rhs = parse_not(c)?;
        lhs = Expr::Bin(BinOp::And, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_not(c: &mut Cursor) -> Result<Expr> {
    if matches!(c.peek(), Some(Tok::Not)) {
        c.next();
        let e = parse_not(c)?;
        return Ok(Expr::Un(UnOp::Not, Box::new(e)));
    }
    parse_rel(c)
}

fn parse_rel(c: &mut Cursor) -> Result<Expr> {
    let lhs = parse_add(c)?;
    let op = match c.peek() {
        Some(Tok::Lt) => BinOp::Lt,
        Some(Tok::Le) => BinOp::Le,
        Some(Tok::Gt) => BinOp::Gt,
        Some(Tok::Ge) => BinOp::Ge,
        Some(Tok::Eq) => BinOp::Eq,
        Some(Tok::Ne) => BinOp::Ne,
        _ => return Ok(lhs),
    };
    c.next();
    let rhs = parse_add(c)?;
    Ok(Expr::Bin(op, Box::new(lhs), Box::new(rhs)))
}

fn parse_add(c: &mut Cursor) -> Result<Expr> {
    let mut lhs = match c.peek() {
        Some(Tok::Minus) => {
            c.next();
            let e = parse_mul(c)?;
            Expr::Un(UnOp::Neg, Box::new(e))
        }
        Some(Tok::Plus) => {
            c.next();
            parse_mul(c)?
        }
        _ => parse_mul(c)?,
    };
    loop {
        let op = match c.peek() {
            Some(Tok::Plus) => BinOp::Add,
            Some(Tok::Minus) => BinOp::Sub,
            _ => break,
        };
        c.next();
        let rhs = parse_mul(c)?;
        lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_mul(c: &mut Cursor) -> Result<Expr> {
    let mut lhs = parse_pow(c)?;
    loop {
        let op = match c.peek() {
            Some(Tok::Star) => BinOp::Mul,
            Some(Tok::Slash) => BinOp::Div,
            _ => break,
        };
        c.next();
        let rhs = parse_pow(c)?;
        lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_pow(c: &mut Cursor) -> Result<Expr> {
    let base = parse_primary(c)?;
    if matches!(c.peek(), Some(Tok::Pow)) {
        c.next();
        // Exponentiation is right-associative; allow a signed exponent.
        let exp = match c.peek() {
            Some(Tok::Minus) => {
                c.next();
                Expr::Un(UnOp::Neg, Box::new(parse_pow(c)?))
            }
            Some(Tok::Plus) => {
                c.next();
                parse_pow(c)?
            }
            _ => parse_pow(c)?,
        };
        return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
    }
    Ok(base)
}

fn parse_primary(c: &mut Cursor) -> Result<Expr> {
    match c.peek() {
        Some(Tok::Int(v)) => {
            let v = *v;
            c.next();
            Ok(Expr::IntLit(v))
        }
        Some(Tok::Real { value, double }) => {
            let (value, double) = (*value, *double);
            c.next();
            Ok(Expr::RealLit { value, double })
        }
        Some(Tok::Logical(b)) => {
            let b = *b;
            c.next();
            Ok(Expr::LogicalLit(b))
        }
        Some(Tok::Char(s)) => {
            let s = s.clone();
            c.next();
            Ok(Expr::CharLit(s))
        }
        Some(Tok::LParen) => {
            c.next();
            let e = parse_expr(c)?;
            c.expect(&Tok::RParen)?;
            Ok(e)
        }
        Some(Tok::Ident(name)) => {
            let name = name.clone();
            let loc = c.here();
            c.next();
            if matches!(c.peek(), Some(Tok::LParen)) {
                let args = parse_paren_exprs(c)?;
                if c.arrays.contains(&name) {
                    Ok(Expr::Elem(name, args))
                } else {
                    if args.is_empty() {
                        return Err(Diag::at(
                            Stage::Parse,
                            loc,
                            format!("function reference '{name}()' needs at least one argument"),
                        ));
                    }
                    Ok(Expr::Call(name, args))
                }
            } else {
                Ok(Expr::Var(name))
            }
        }
        Some(t) => Err(c.error(format!("unexpected {} in expression", t.describe()))),
        None => Err(c.error("unexpected end of statement in expression")),
    }
}

// ---------------------------------------------------------------------------
// Pass B: fold raw statements into program units.
// ---------------------------------------------------------------------------

enum Frame {
    Do {
        var: String,
        lower: Expr,
        upper: Expr,
        step: Option<Expr>,
        term_label: Option<u32>,
        label: Option<u32>,
        loc: Loc,
        body: Vec<Stmt>,
    },
    If {
        arms: Vec<(Expr, Vec<Stmt>)>,
        else_body: Option<Vec<Stmt>>,
        label: Option<u32>,
        loc: Loc,
    },
}

struct UnitBuilder {
    unit: ProgramUnit,
    in_decls: bool,
    frames: Vec<Frame>,
    params: HashMap<String, Expr>,
    arrays: HashSet<String>,
}

impl UnitBuilder {
    fn new(unit: ProgramUnit) -> Self {
        UnitBuilder {
            unit,
            in_decls: true,
            frames: Vec::new(),
            params: HashMap::new(),
            arrays: HashSet::new(),
        }
    }

    fn int_param_env(&self) -> HashMap<String, i64> {
        self.params
            .iter()
            .filter_map(|(k, v)| match v {
                Expr::IntLit(n) => Some((k.clone(), *n)),
                _ => None,
            })
            .collect()
    }

    fn push_stmt(&mut self, stmt: Stmt) {
        match self.frames.last_mut() {
            Some(Frame::Do { body, .. }) => body.push(stmt),
            Some(Frame::If { arms, else_body, .. }) => match else_body {
                Some(body) => body.push(stmt),
                None => arms.last_mut().expect("if frame has an arm").1.push(stmt),
            },
            None => self.unit.body.push(stmt),
        }
    }

    /// Close labelled DO frames whose terminator label matches `label`.
    fn close_labelled_dos(&mut self, label: u32, loc: &Loc) -> Result<bool> {
        let mut closed_any = false;
        while let Some(Frame::Do { term_label: Some(l), .. }) = self.frames.last() {
            if *l != label {
                break;
            }
            let frame = self.frames.pop().unwrap();
            if let Frame::Do { var, lower, upper, step, term_label, label: stmt_label, loc: do_loc, body } =
                frame
            {
                let stmt = Stmt {
                    label: stmt_label,
                    loc: do_loc,
                    kind: StmtKind::Do { var, lower, upper, step, body, term_label },
                };
                self.push_stmt(stmt);
                closed_any = true;
            }
        }
        if !closed_any {
            return Ok(false);
        }
        let _ = loc;
        Ok(true)
    }
}

fn parse_stmt_lines(lines: &[StmtLine]) -> Result<Vec<ProgramUnit>> {
    let mut units: Vec<ProgramUnit> = Vec::new();
    let mut builder: Option<UnitBuilder> = None;
    let mut pending_module: Option<String> = None;
    let empty_arrays = HashSet::new();

    for line in lines {
        if let Some(d) = line.directive {
            let kind = match d {
                Directive::RegionBegin => StmtKind::RegionBegin,
                Directive::RegionEnd => StmtKind::RegionEnd,
            };
            let b = builder.as_mut().ok_or_else(|| {
                Diag::at(Stage::Parse, line.loc.clone(), "region directive outside any program unit")
            })?;
            b.in_decls = false;
            b.push_stmt(Stmt::new(kind, line.loc.clone()));
            continue;
        }

        let arrays = builder.as_ref().map(|b| &b.arrays).unwrap_or(&empty_arrays);
        let raw = parse_raw(line, arrays)?;
        let loc = line.loc.clone();

        match raw {
            RawStmt::ProgramHeader(name) => {
                start_unit(&mut builder, &mut units, UnitKind::Program, name, vec![], None, &loc, &pending_module)?;
            }
            RawStmt::SubroutineHeader(name, args) => {
                start_unit(&mut builder, &mut units, UnitKind::Subroutine, name, args, None, &loc, &pending_module)?;
            }
            RawStmt::FunctionHeader(rt, name, args) => {
                start_unit(&mut builder, &mut units, UnitKind::Function, name, args, rt, &loc, &pending_module)?;
            }
            RawStmt::BlockDataHeader(name) => {
                let name = if name.is_empty() { "blockdata".to_string() } else { name };
                start_unit(&mut builder, &mut units, UnitKind::BlockData, name, vec![], None, &loc, &pending_module)?;
            }
            RawStmt::ModuleHeader(name) => {
                if builder.is_some() {
                    return Err(Diag::at(Stage::Parse, loc, "MODULE inside a program unit"));
                }
                pending_module = Some(name);
            }
            RawStmt::Contains => {
                if builder.is_some() || pending_module.is_none() {
                    return Err(Diag::at(Stage::Parse, loc, "CONTAINS outside a module"));
                }
            }
            RawStmt::EndModule => {
                if builder.is_some() {
                    return Err(Diag::at(Stage::Parse, loc, "END MODULE inside a program unit"));
                }
                if pending_module.take().is_none() {
                    return Err(Diag::at(Stage::Parse, loc, "END MODULE without MODULE"));
                }
            }
            RawStmt::EndUnit => {
                let b = builder
                    .take()
                    .ok_or_else(|| Diag::at(Stage::Parse, loc.clone(), "END outside any program unit"))?;
                units.push(finish_unit(b, &loc)?);
            }
            other => {
                let b = builder.as_mut().ok_or_else(|| {
                    Diag::at(Stage::Parse, loc.clone(), "statement outside any program unit")
                })?;
                process_in_unit(b, other, line.label, loc)?;
            }
        }
    }

    if let Some(b) = builder {
        return Err(Diag::at(
            Stage::Parse,
            b.unit.loc.clone(),
            format!("program unit '{}' is missing END", b.unit.name),
        ));
    }
    if let Some(m) = pending_module {
        return Err(Diag::unlocated(Stage::Parse, format!("module '{m}' is missing END MODULE")));
    }
    Ok(units)
}

#[allow(clippy::too_many_arguments)]
fn start_unit(
    builder: &mut Option<UnitBuilder>,
    _units: &mut [ProgramUnit],
    kind: UnitKind,
    name: String,
    args: Vec<String>,
    result_type: Option<BaseType>,
    loc: &Loc,
    pending_module: &Option<String>,
) -> Result<()> {
    if builder.is_some() {
        return Err(Diag::at(
            Stage::Parse,
            loc.clone(),
            format!("{} '{}' begins before previous unit ends", kind.keyword(), name),
        ));
    }
    let mut seen = HashSet::new();
    for a in &args {
        if !seen.insert(a.clone()) {
            return Err(Diag::at(
                Stage::Parse,
                loc.clone(),
                format!("duplicate dummy argument '{a}' in '{name}'"),
            ));
        }
    }
    let mut unit = ProgramUnit::new(kind, name, loc.clone());
    unit.args = args;
    unit.result_type = result_type;
    unit.module = pending_module.clone();
    *builder = Some(UnitBuilder::new(unit));
    Ok(())
}

fn process_in_unit(b: &mut UnitBuilder, raw: RawStmt, label: Option<u32>, loc: Loc) -> Result<()> {
    let is_decl = matches!(
        raw,
        RawStmt::TypeDecl { .. }
            | RawStmt::Dimension(_)
            | RawStmt::Parameter(_)
            | RawStmt::Common { .. }
            | RawStmt::ImplicitNone
            | RawStmt::Use(_)
            | RawStmt::Data(_)
    );

    if is_decl {
        if !b.in_decls {
            return Err(Diag::at(Stage::Parse, loc, "declaration after executable statement"));
        }
        if label.is_some() {
            return Err(Diag::at(Stage::Parse, loc, "statement label on a declaration"));
        }
        return process_decl(b, raw, loc);
    }

    b.in_decls = false;

    // A label matching open labelled-DO terminators must be a CONTINUE and
    // closes every matching frame (shared terminator form).
    if let Some(l) = label {
        let is_terminator = matches!(
            b.frames.last(),
            Some(Frame::Do { term_label: Some(t), .. }) if *t == l
        );
        if is_terminator {
            if !matches!(raw, RawStmt::Exec(StmtKind::Continue)) {
                return Err(Diag::at(
                    Stage::Parse,
                    loc,
                    format!("labelled DO must terminate on CONTINUE (label {l})"),
                ));
            }
            b.close_labelled_dos(l, &loc)?;
            return Ok(());
        }
    }

    match raw {
        RawStmt::Exec(kind) => {
            let mut stmt = Stmt::new(kind, loc);
            stmt.label = label;
            b.push_stmt(stmt);
        }
        RawStmt::IfThen(cond) => {
            b.frames.push(Frame::If { arms: vec![(cond, Vec::new())], else_body: None, label, loc });
        }
        RawStmt::ElseIf(cond) => match b.frames.last_mut() {
            Some(Frame::If { arms, else_body: None, .. }) => arms.push((cond, Vec::new())),
            _ => return Err(Diag::at(Stage::Parse, loc, "ELSE IF without matching IF")),
        },
        RawStmt::Else => match b.frames.last_mut() {
            Some(Frame::If { else_body: else_body @ None, .. }) => *else_body = Some(Vec::new()),
            _ => return Err(Diag::at(Stage::Parse, loc, "ELSE without matching IF")),
        },
        RawStmt::EndIf => match b.frames.pop() {
            Some(Frame::If { arms, else_body, label: if_label, loc: if_loc }) => {
                let stmt = Stmt { label: if_label, loc: if_loc, kind: StmtKind::If { arms, else_body } };
                b.push_stmt(stmt);
            }
            _ => return Err(Diag::at(Stage::Parse, loc, "END IF without matching IF")),
        },
        RawStmt::DoHeader { var, lower, upper, step, term_label } => {
            b.frames.push(Frame::Do { var, lower, upper, step, term_label, label, loc, body: Vec::new() });
        }
        RawStmt::EndDo => match b.frames.pop() {
            Some(Frame::Do { var, lower, upper, step, term_label: None, label: do_label, loc: do_loc, body }) => {
                let stmt = Stmt {
                    label: do_label,
                    loc: do_loc,
                    kind: StmtKind::Do { var, lower, upper, step, body, term_label: None },
                };
                b.push_stmt(stmt);
            }
            Some(Frame::Do { term_label: Some(l), .. }) => {
                return Err(Diag::at(
                    Stage::Parse,
                    loc,
                    format!("END DO closes a labelled DO expecting terminator {l}"),
                ));
            }
            _ => return Err(Diag::at(Stage::Parse, loc, "END DO without matching DO")),
        },
        _ => unreachable!("headers handled by caller"),
    }
    Ok(())
}

fn process_decl(b: &mut UnitBuilder, raw: RawStmt, loc: Loc) -> Result<()> {
    match raw {
        RawStmt::ImplicitNone => {
            b.unit.implicit_none = true;
        }
        RawStmt::Use(u) => {
            b.unit.uses.push(u);
        }
        RawStmt::TypeDecl { base, char_len, intent, parameter, entities } => {
            for (name, dim_exprs, init) in entities {
                let dims = fold_dims(b, &dim_exprs, &loc, &name)?;
                if !dims.is_empty() {
                    b.arrays.insert(name.clone());
                }
                let param_value = match init {
                    Some(e) if parameter => {
                        let v = fold_const_value(&e, &b.params).ok_or_else(|| {
                            Diag::at(
                                Stage::Parse,
                                loc.clone(),
                                format!("parameter '{name}' value is not a constant"),
                            )
                        })?;
                        b.params.insert(name.clone(), v.clone());
                        Some(v)
                    }
                    Some(_) => unreachable!("checked in pass A"),
                    None if parameter => {
                        return Err(Diag::at(
                            Stage::Parse,
                            loc.clone(),
                            format!("parameter '{name}' lacks a value"),
                        ));
                    }
                    None => None,
                };
                upsert_decl(b, &name, Some(base), char_len, dims, intent, param_value, &loc)?;
            }
        }
        RawStmt::Dimension(entities) => {
            for (name, dim_exprs) in entities {
                let dims = fold_dims(b, &dim_exprs, &loc, &name)?;
                b.arrays.insert(name.clone());
                upsert_decl(b, &name, None, None, dims, None, None, &loc)?;
            }
        }
        RawStmt::Parameter(pairs) => {
            for (name, expr) in pairs {
                let v = fold_const_value(&expr, &b.params).ok_or_else(|| {
                    Diag::at(
                        Stage::Parse,
                        loc.clone(),
                        format!("parameter '{name}' value is not a constant"),
                    )
                })?;
                b.params.insert(name.clone(), v.clone());
                match b.unit.find_decl_mut(&name) {
                    Some(d) => d.param_value = Some(v),
                    None => {
                        let mut d = Declaration::scalar(
                            name.clone(),
                            implicit_type(&name),
                            DeclOrigin::ImplicitRule,
                        );
                        d.param_value = Some(v);
                        d.loc = loc.clone();
                        b.unit.decls.push(d);
                    }
                }
            }
        }
        RawStmt::Common { block, members } => {
            let mut resolved = Vec::new();
            for (name, dim_exprs) in members {
                let dims = fold_dims(b, &dim_exprs, &loc, &name)?;
                if !dims.is_empty() {
                    b.arrays.insert(name.clone());
                }
                resolved.push(CommonMember { name, dims });
            }
            b.unit.commons.push(CommonBlockDecl { block, members: resolved, loc });
        }
        RawStmt::Data(inits) => {
            if b.unit.kind != UnitKind::BlockData {
                return Err(Diag::at(
                    Stage::Parse,
                    loc,
                    "unsupported: DATA outside BLOCK DATA (initialize with assignments)",
                ));
            }
            for (name, values) in inits {
                b.unit.data.push(DataInit { name, values });
            }
        }
        _ => unreachable!(),
    }
    Ok(())
}

fn fold_dims(b: &UnitBuilder, dim_exprs: &[Expr], loc: &Loc, name: &str) -> Result<Vec<i64>> {
    let env = b.int_param_env();
    let mut dims = Vec::new();
    for e in dim_exprs {
        let v = eval_const_int(e, &env).ok_or_else(|| {
            Diag::at(
                Stage::Parse,
                loc.clone(),
                format!("array '{name}' extent is not a compile-time constant (static allocation required)"),
            )
        })?;
        if v <= 0 {
            return Err(Diag::at(
                Stage::Parse,
                loc.clone(),
                format!("array '{name}' has non-positive extent {v}"),
            ));
        }
        dims.push(v);
    }
    Ok(dims)
}

fn fold_const_value(e: &Expr, params: &HashMap<String, Expr>) -> Option<Expr> {
    match e {
        Expr::IntLit(_) | Expr::RealLit { .. } | Expr::LogicalLit(_) => Some(e.clone()),
        Expr::Var(n) => params.get(n).cloned(),
        Expr::Un(UnOp::Neg, inner) => match fold_const_value(inner, params)? {
            Expr::IntLit(v) => Some(Expr::IntLit(-v)),
            Expr::RealLit { value, double } => Some(Expr::RealLit { value: -value, double }),
            _ => None,
        },
        Expr::Bin(op, a, b) => {
            let a = fold_const_value(a, params)?;
            let b = fold_const_value(b, params)?;
            fold_const_bin(*op, &a, &b)
        }
        _ => None,
    }
}

fn fold_const_bin(op: BinOp, a: &Expr, b: &Expr) -> Option<Expr> {
    use Expr::{IntLit, RealLit};
    match (a, b) {
        (IntLit(x), IntLit(y)) => {
            let v = match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if *y == 0 {
                        return None;
                    }
                    x / y
                }
                BinOp::Pow => {
                    if !(0..=62).contains(y) {
                        return None;
                    }
                    x.pow(*y as u32)
                }
                _ => return None,
            };
            Some(IntLit(v))
        }
        _ => {
            let (x, dx) = as_real(a)?;
            let (y, dy) = as_real(b)?;
            let v = match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
                BinOp::Pow => x.powf(y),
                _ => return None,
            };
            Some(RealLit { value: v, double: dx || dy })
        }
    }
}

fn as_real(e: &Expr) -> Option<(f64, bool)> {
    match e {
        Expr::IntLit(v) => Some((*v as f64, false)),
        Expr::RealLit { value, double } => Some((*value, *double)),
        _ => None,
    }
}

#[allow(clippy::too_many_arguments)]
fn upsert_decl(
    b: &mut UnitBuilder,
    name: &str,
    base: Option<BaseType>,
    char_len: Option<i64>,
    dims: Vec<i64>,
    intent: Option<Intent>,
    param_value: Option<Expr>,
    loc: &Loc,
) -> Result<()> {
    if let Some(d) = b.unit.find_decl_mut(name) {
        if let Some(base) = base {
            if d.origin == DeclOrigin::Explicit && d.base != base {
                return Err(Diag::at(
                    Stage::Parse,
                    loc.clone(),
                    format!("'{name}' declared with conflicting types"),
                ));
            }
            d.base = base;
            d.origin = DeclOrigin::Explicit;
        }
        if !dims.is_empty() {
            if !d.dims.is_empty() && d.dims != dims {
                return Err(Diag::at(
                    Stage::Parse,
                    loc.clone(),
                    format!("'{name}' dimensioned twice with different extents"),
                ));
            }
            d.dims = dims;
        }
        if char_len.is_some() {
            d.char_len = char_len;
        }
        if intent.is_some() {
            d.intent = intent;
        }
        if param_value.is_some() {
            d.param_value = param_value;
        }
        return Ok(());
    }
    let (base, origin) = match base {
        Some(bse) => (bse, DeclOrigin::Explicit),
        None => (implicit_type(name), DeclOrigin::ImplicitRule),
    };
    b.unit.decls.push(Declaration {
        name: name.to_string(),
        base,
        char_len,
        dims,
        origin,
        intent,
        param_value,
        loc: loc.clone(),
    });
    Ok(())
}

fn finish_unit(b: UnitBuilder, end_loc: &Loc) -> Result<ProgramUnit> {
    if !b.frames.is_empty() {
        let what = match b.frames.last().unwrap() {
            Frame::Do { term_label: Some(l), .. } => format!("DO loop awaiting terminator {l}"),
            Frame::Do { .. } => "DO loop awaiting END DO".to_string(),
            Frame::If { .. } => "IF block awaiting END IF".to_string(),
        };
        return Err(Diag::at(
            Stage::Parse,
            end_loc.clone(),
            format!("unbalanced control structure at END of '{}': {what}", b.unit.name),
        ));
    }
    let mut unit = b.unit;
    resolve_common_dims(&mut unit)?;
    check_labels(&unit)?;
    check_subscript_arity(&unit)?;
    Ok(unit)
}

/// Merge array extents declared on the common statement with extents from
/// type/DIMENSION declarations.
fn resolve_common_dims(unit: &mut ProgramUnit) -> Result<()> {
    let decl_dims: HashMap<String, Vec<i64>> =
        unit.decls.iter().map(|d| (d.name.clone(), d.dims.clone())).collect();
    let mut seen: HashSet<String> = HashSet::new();
    for common in &mut unit.commons {
        for m in &mut common.members {
            if !seen.insert(m.name.clone()) {
                return Err(Diag::at(
                    Stage::Parse,
                    common.loc.clone(),
                    format!("'{}' appears in more than one common block", m.name),
                ));
            }
            if let Some(dims) = decl_dims.get(&m.name) {
                if !dims.is_empty() {
                    if !m.dims.is_empty() && m.dims != *dims {
                        return Err(Diag::at(
                            Stage::Parse,
                            common.loc.clone(),
                            format!("common member '{}' dimensioned inconsistently", m.name),
                        ));
                    }
                    m.dims = dims.clone();
                }
            }
        }
    }
    Ok(())
}

fn check_labels(unit: &ProgramUnit) -> Result<()> {
    let mut defined: HashMap<u32, Loc> = HashMap::new();
    let mut dup: Option<(u32, Loc)> = None;
    walk_stmts(&unit.body, &mut |s| {
        if let Some(l) = s.label {
            if defined.insert(l, s.loc.clone()).is_some() && dup.is_none() {
                dup = Some((l, s.loc.clone()));
            }
        }
    });
    if let Some((l, loc)) = dup {
        return Err(Diag::at(Stage::Parse, loc, format!("duplicate statement label {l}")));
    }
    let mut missing: Option<(u32, Loc)> = None;
    walk_stmts(&unit.body, &mut |s| {
        if let StmtKind::Goto(t) = &s.kind {
            if !defined.contains_key(t) && missing.is_none() {
                missing = Some((*t, s.loc.clone()));
            }
        }
    });
    if let Some((l, loc)) = missing {
        return Err(Diag::at(
            Stage::Parse,
            loc,
            format!("GOTO target label {l} does not exist in '{}'", unit.name),
        ));
    }
    Ok(())
}

fn check_subscript_arity(unit: &ProgramUnit) -> Result<()> {
    let mut ranks: HashMap<&str, usize> = HashMap::new();
    for d in &unit.decls {
        if d.is_array() {
            ranks.insert(&d.name, d.dims.len());
        }
    }
    for common in &unit.commons {
        for m in &common.members {
            if !m.dims.is_empty() {
                ranks.entry(&m.name).or_insert(m.dims.len());
            }
        }
    }
    let mut bad: Option<(String, usize, usize, Loc)> = None;
    let mut check_expr = |e: &Expr, loc: &Loc, bad: &mut Option<(String, usize, usize, Loc)>| {
        e.walk(&mut |n| {
            if let Expr::Elem(name, subs) = n {
                if let Some(rank) = ranks.get(name.as_str()) {
                    if subs.len() != *rank && bad.is_none() {
                        *bad = Some((name.clone(), *rank, subs.len(), loc.clone()));
                    }
                }
            }
        });
    };
    walk_stmts(&unit.body, &mut |s| {
        let loc = &s.loc;
        match &s.kind {
            StmtKind::Assign { target, value } => {
                if let LValue::Elem(name, subs) = target {
                    if let Some(rank) = ranks.get(name.as_str()) {
                        if subs.len() != *rank && bad.is_none() {
                            bad = Some((name.clone(), *rank, subs.len(), loc.clone()));
                        }
                    }
                    for sub in subs {
                        check_expr(sub, loc, &mut bad);
                    }
                }
                check_expr(value, loc, &mut bad);
            }
            StmtKind::If { arms, .. } => {
                for (cond, _) in arms {
                    check_expr(cond, loc, &mut bad);
                }
            }
            StmtKind::Do { lower, upper, step, .. } => {
                check_expr(lower, loc, &mut bad);
                check_expr(upper, loc, &mut bad);
                if let Some(stp) = step {
                    check_expr(stp, loc, &mut bad);
                }
            }
            StmtKind::Call { args, .. } => {
                for a in args {
                    check_expr(a, loc, &mut bad);
                }
            }
            StmtKind::Print { items } => {
                for i in items {
                    check_expr(i, loc, &mut bad);
                }
            }
            _ => {}
        }
    });
    if let Some((name, rank, got, loc)) = bad {
        return Err(Diag::at(
            Stage::Parse,
            loc,
            format!("array '{name}' has rank {rank} but is subscripted with {got} subscripts"),
        ));
    }
    Ok(())
}
