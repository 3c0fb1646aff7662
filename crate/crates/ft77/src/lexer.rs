//! Tokenizer for fixed-form FORTRAN 77 and for the free-form Fortran 95
//! dialect the emitter produces.
//!
//! Output is a sequence of logical statement lines: continuations are merged,
//! comments dropped (except offload-region directives, which surface as
//! marker lines), and keywords/identifiers case-folded to lower case.

use std::sync::Arc;

use crate::diag::{Diag, Loc, Result, Stage};
use crate::source::{RawLine, SourceKind};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Real { value: f64, double: bool },
    Char(String),
    Logical(bool),
    LParen,
    RParen,
    Comma,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Pow,
    Colon,
    DoubleColon,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
    Not,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Int(v) => format!("integer {v}"),
            Tok::Real { value, .. } => format!("real {value}"),
            Tok::Char(s) => format!("character '{s}'"),
            Tok::Logical(b) => format!(".{b}."),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Assign => "'='".into(),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Pow => "'**'".into(),
            Tok::Colon => "':'".into(),
            Tok::DoubleColon => "'::'".into(),
            Tok::Lt => "'<'".into(),
            Tok::Le => "'<='".into(),
            Tok::Gt => "'>'".into(),
            Tok::Ge => "'>='".into(),
            Tok::Eq => "'=='".into(),
            Tok::Ne => "'/='".into(),
            Tok::And => "'.and.'".into(),
            Tok::Or => "'.or.'".into(),
            Tok::Not => "'.not.'".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub loc: Loc,
}

/// Offload-region comment directives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Directive {
    RegionBegin,
    RegionEnd,
}

/// One logical statement after continuation merging.
#[derive(Debug, Clone)]
pub struct StmtLine {
    pub label: Option<u32>,
    pub tokens: Vec<Token>,
    pub loc: Loc,
    pub directive: Option<Directive>,
}

pub fn lex(kind: SourceKind, lines: &[RawLine]) -> Result<Vec<StmtLine>> {
    match kind {
        SourceKind::FixedForm => lex_fixed(lines),
        SourceKind::FreeForm => lex_free(lines),
    }
}

fn directive_of(comment_text: &str) -> Option<Directive> {
    let t = comment_text.trim().to_ascii_lowercase();
    let rest = t.strip_prefix("$acc")?;
    match rest.trim() {
        "region begin" => Some(Directive::RegionBegin),
        "region end" => Some(Directive::RegionEnd),
        _ => None,
    }
}

fn lex_fixed(lines: &[RawLine]) -> Result<Vec<StmtLine>> {
    let mut out: Vec<StmtLine> = Vec::new();
    let mut current: Option<StmtLine> = None;

    for raw in lines {
        let chars: Vec<char> = raw.text.chars().collect();
        if chars.is_empty() || chars.iter().all(|c| *c == ' ') {
            continue;
        }
        let first = chars[0];
        if matches!(first, 'c' | 'C' | '*' | '!') {
            if let Some(d) = directive_of(&raw.text[1..]) {
                if let Some(s) = current.take() {
                    out.push(s);
                }
                out.push(StmtLine {
                    label: None,
                    tokens: Vec::new(),
                    loc: raw.loc.clone(),
                    directive: Some(d),
                });
            }
            continue;
        }
        if raw.text.contains('\t') {
            return Err(Diag::at(
                Stage::Lex,
                raw.loc.clone(),
                "tab-formatted source is not supported; use strict column layout",
            ));
        }

        // Columns 1-5: statement label. Column 6: continuation mark.
        let label_field: String = chars.iter().take(5).collect();
        let cont = chars.len() > 5 && chars[5] != ' ' && chars[5] != '0';
        let label = parse_label_field(&label_field, &raw.loc)?;

        // Columns 73+ are sequence numbers; discard them.
        let end = chars.len().min(72);
        let content: String = if chars.len() > 6 { chars[6..end].iter().collect() } else { String::new() };
        let content_loc = Loc { file: raw.loc.file.clone(), line: raw.loc.line, col: 7 };

        if cont {
            if label.is_some() {
                return Err(Diag::at(
                    Stage::Lex,
                    raw.loc.clone(),
                    "continuation line must have a blank label field",
                ));
            }
            let cur = current.as_mut().ok_or_else(|| {
                Diag::at(
                    Stage::Lex,
                    raw.loc.clone(),
                    "continuation line without a preceding statement",
                )
            })?;
            scan_tokens(&content, content_loc, &mut cur.tokens)?;
        } else {
            if let Some(s) = current.take() {
                out.push(s);
            }
            let mut tokens = Vec::new();
            scan_tokens(&content, content_loc.clone(), &mut tokens)?;
            if tokens.is_empty() && label.is_none() {
                continue;
            }
            current = Some(StmtLine { label, tokens, loc: raw.loc.clone(), directive: None });
        }
    }
    if let Some(s) = current.take() {
        out.push(s);
    }
    out.retain(|s| s.directive.is_some() || !s.tokens.is_empty());
    Ok(out)
}

fn parse_label_field(field: &str, loc: &Loc) -> Result<Option<u32>> {
    let digits: String = field.chars().filter(|c| !c.is_whitespace()).collect();
    if digits.is_empty() {
        return Ok(None);
    }
    digits.parse::<u32>().map(Some).map_err(|_| {
        Diag::at(Stage::Lex, loc.clone(), format!("invalid statement label '{}'", field.trim()))
    })
}

fn lex_free(lines: &[RawLine]) -> Result<Vec<StmtLine>> {
    let mut out: Vec<StmtLine> = Vec::new();
    let mut pending: Option<(String, Loc)> = None;

    for raw in lines {
        let mut text = raw.text.clone();
        // Strip a trailing comment, honoring character literal context.
        if let Some(pos) = comment_start(&text) {
            let comment = text[pos + 1..].to_string();
            if text[..pos].trim().is_empty() {
                if let Some(d) = directive_of(&comment) {
                    if let Some((buf, loc)) = pending.take() {
                        push_free_line(&buf, loc, &mut out)?;
                    }
                    out.push(StmtLine {
                        label: None,
                        tokens: Vec::new(),
                        loc: raw.loc.clone(),
                        directive: Some(d),
                    });
                }
                continue;
            }
            text.truncate(pos);
        }
        if text.trim().is_empty() {
            continue;
        }

        let continued = text.trim_end().ends_with('&');
        let mut piece = text.trim_end().to_string();
        if continued {
            piece.pop();
        }

        match pending.take() {
            Some((mut buf, loc)) => {
                let trimmed = piece.trim_start();
                let trimmed = trimmed.strip_prefix('&').unwrap_or(trimmed);
                buf.push(' ');
                buf.push_str(trimmed);
                if continued {
                    pending = Some((buf, loc));
                } else {
                    push_free_line(&buf, loc, &mut out)?;
                }
            }
            None => {
                if continued {
                    pending = Some((piece, raw.loc.clone()));
                } else {
                    push_free_line(&piece, raw.loc.clone(), &mut out)?;
                }
            }
        }
    }
    if let Some((buf, loc)) = pending {
        push_free_line(&buf, loc, &mut out)?;
    }
    Ok(out)
}

/// Position of a `!` comment delimiter outside any character literal.
fn comment_start(line: &str) -> Option<usize> {
    let mut in_char = false;
    for (i, c) in line.char_indices() {
        match c {
            '\'' => in_char = !in_char,
            '!' if !in_char => return Some(i),
            _ => {}
        }
    }
    None
}

fn push_free_line(text: &str, loc: Loc, out: &mut Vec<StmtLine>) -> Result<()> {
    let mut tokens = Vec::new();
    scan_tokens(text, loc.clone(), &mut tokens)?;
    if tokens.is_empty() {
        return Ok(());
    }
    // A leading integer literal followed by more tokens is a statement label.
    let mut label = None;
    if tokens.len() >= 2 {
        if let Tok::Int(v) = tokens[0].tok {
            if (0..=99999).contains(&v) && !matches!(tokens[1].tok, Tok::Assign) {
                label = Some(v as u32);
                tokens.remove(0);
            }
        }
    }
    out.push(StmtLine { label, tokens, loc, directive: None });
    Ok(())
}

const DOT_OPS: &[(&str, Tok)] = &[
    ("lt", Tok::Lt),
    ("le", Tok::Le),
    ("gt", Tok::Gt),
    ("ge", Tok::Ge),
    ("eq", Tok::Eq),
    ("ne", Tok::Ne),
    ("and", Tok::And),
    ("or", Tok::Or),
    ("not", Tok::Not),
    ("true", Tok::Logical(true)),
    ("false", Tok::Logical(false)),
];

/// Scan one segment of statement text into tokens. `base` locates the first
/// character of the segment.
fn scan_tokens(text: &str, base: Loc, out: &mut Vec<Token>) -> Result<()> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let here = |i: usize| Loc {
        file: base.file.clone(),
        line: base.line,
        col: base.col + i as u32,
    };
    while i < chars.len() {
        let c = chars[i];
        let loc = here(i);
        match c {
            ' ' => {
                i += 1;
            }
            '\'' => {
                let (s, len) = scan_char_literal(&chars[i..], &loc)?;
                out.push(Token { tok: Tok::Char(s), loc });
                i += len;
            }
            '(' => {
                out.push(Token { tok: Tok::LParen, loc });
                i += 1;
            }
            ')' => {
                out.push(Token { tok: Tok::RParen, loc });
                i += 1;
            }
            ',' => {
                out.push(Token { tok: Tok::Comma, loc });
                i += 1;
            }
            '+' => {
                out.push(Token { tok: Tok::Plus, loc });
                i += 1;
            }
            '-' => {
                out.push(Token { tok: Tok::Minus, loc });
                i += 1;
            }
            '*' => {
                if chars.get(i + 1) == Some(&'*') {
                    out.push(Token { tok: Tok::Pow, loc });
                    i += 2;
                } else {
                    out.push(Token { tok: Tok::Star, loc });
                    i += 1;
                }
            }
            '/' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Token { tok: Tok::Ne, loc });
                    i += 2;
                } else {
                    out.push(Token { tok: Tok::Slash, loc });
                    i += 1;
                }
            }
            '=' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Token { tok: Tok::Eq, loc });
                    i += 2;
                } else {
                    out.push(Token { tok: Tok::Assign, loc });
                    i += 1;
                }
            }
            '<' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Token { tok: Tok::Le, loc });
                    i += 2;
                } else {
                    out.push(Token { tok: Tok::Lt, loc });
                    i += 1;
                }
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Token { tok: Tok::Ge, loc });
                    i += 2;
                } else {
                    out.push(Token { tok: Tok::Gt, loc });
                    i += 1;
                }
            }
            ':' => {
                if chars.get(i + 1) == Some(&':') {
                    out.push(Token { tok: Tok::DoubleColon, loc });
                    i += 2;
                } else {
                    out.push(Token { tok: Tok::Colon, loc });
                    i += 1;
                }
            }
            '.' => {
                if chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                    let (tok, len) = scan_number(&chars[i..], &loc)?;
                    out.push(Token { tok, loc });
                    i += len;
                } else {
                    let (tok, len) = scan_dot_word(&chars[i..], &loc)?;
                    out.push(Token { tok, loc });
                    i += len;
                }
            }
            _ if c.is_ascii_digit() => {
                let (tok, len) = scan_number(&chars[i..], &loc)?;
                out.push(Token { tok, loc });
                i += len;
            }
            _ if c.is_ascii_alphabetic() => {
                let mut j = i + 1;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect::<String>().to_ascii_lowercase();
                out.push(Token { tok: Tok::Ident(word), loc });
                i = j;
            }
            _ => {
                return Err(Diag::at(Stage::Lex, loc, format!("unexpected character '{c}'")));
            }
        }
    }
    Ok(())
}

fn scan_char_literal(chars: &[char], loc: &Loc) -> Result<(String, usize)> {
    debug_assert_eq!(chars[0], '\'');
    let mut s = String::new();
    let mut i = 1;
    loop {
        match chars.get(i) {
            None => {
                return Err(Diag::at(Stage::Lex, loc.clone(), "unterminated character literal"));
            }
            Some('\'') => {
                if chars.get(i + 1) == Some(&'\'') {
                    s.push('\'');
                    i += 2;
                } else {
                    return Ok((s, i + 1));
                }
            }
            Some(c) => {
                s.push(*c);
                i += 1;
            }
        }
    }
}

/// `.word.` operators and logical literals.
fn scan_dot_word(chars: &[char], loc: &Loc) -> Result<(Tok, usize)> {
    let mut j = 1;
    while j < chars.len() && chars[j].is_ascii_alphabetic() {
        j += 1;
    }
    if chars.get(j) != Some(&'.') || j == 1 {
        return Err(Diag::at(Stage::Lex, loc.clone(), "malformed '.' operator"));
    }
    let word: String = chars[1..j].iter().collect::<String>().to_ascii_lowercase();
    for (name, tok) in DOT_OPS {
        if *name == word {
            return Ok((tok.clone(), j + 1));
        }
    }
    Err(Diag::at(Stage::Lex, loc.clone(), format!("unknown operator '.{word}.'")))
}

/// Numeric literal: integer, real with optional fraction, or exponent form
/// with `e` (default real) or `d` (double precision).
fn scan_number(chars: &[char], loc: &Loc) -> Result<(Tok, usize)> {
    let mut i = 0;
    while i < chars.len() && chars[i].is_ascii_digit() {
        i += 1;
    }
    let int_digits = i;
    let mut is_real = false;

    if i < chars.len() && chars[i] == '.' {
        // Guard against consuming the dot of `1.gt.2`.
        if !dot_starts_operator(&chars[i..]) {
            is_real = true;
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
        }
    }

    let mut is_double = false;
    if i < chars.len() && matches!(chars[i].to_ascii_lowercase(), 'e' | 'd') {
        let marker = chars[i].to_ascii_lowercase();
        let mut j = i + 1;
        if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
            j += 1;
        }
        if j < chars.len() && chars[j].is_ascii_digit() {
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            is_real = true;
            is_double = marker == 'd';
            i = j;
        }
    }

    if !is_real {
        if int_digits > 0 && chars.get(i).is_some_and(|c| c.to_ascii_lowercase() == 'h') {
            return Err(Diag::at(
                Stage::Lex,
                loc.clone(),
                "unsupported: Hollerith constant (convert to a quoted string)",
            ));
        }
        let text: String = chars[..i].iter().collect();
        let v = text.parse::<i64>().map_err(|_| {
            Diag::at(Stage::Lex, loc.clone(), format!("integer literal '{text}' out of range"))
        })?;
        return Ok((Tok::Int(v), i));
    }

    let text: String = chars[..i].iter().collect::<String>().to_ascii_lowercase().replace('d', "e");
    let value = text.parse::<f64>().map_err(|_| {
        Diag::at(Stage::Lex, loc.clone(), format!("malformed real literal '{text}'"))
    })?;
    Ok((Tok::Real { value, double: is_double }, i))
}

fn dot_starts_operator(chars: &[char]) -> bool {
    debug_assert_eq!(chars[0], '.');
    let mut j = 1;
    while j < chars.len() && chars[j].is_ascii_alphabetic() {
        j += 1;
    }
    if j == 1 || chars.get(j) != Some(&'.') {
        return false;
    }
    let word: String = chars[1..j].iter().collect::<String>().to_ascii_lowercase();
    DOT_OPS.iter().any(|(name, _)| *name == word)
}

/// Convenience for tests and the parser: lex raw text directly.
pub fn lex_text(path: impl Into<Arc<str>>, kind: SourceKind, text: &str) -> Result<Vec<StmtLine>> {
    lex(kind, &crate::source::text_lines(path, text))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(text: &str) -> Vec<StmtLine> {
        lex_text("t.f", SourceKind::FixedForm, text).unwrap()
    }

    #[test]
    fn minimal_statement() {
        let lines = fixed("      X = 1");
        assert_eq!(lines.len(), 1);
        let toks: Vec<&Tok> = lines[0].tokens.iter().map(|t| &t.tok).collect();
        assert_eq!(
            toks,
            vec![&Tok::Ident("x".into()), &Tok::Assign, &Tok::Int(1)]
        );
    }

    #[test]
    fn continuation_merges_into_one_logical_line() {
        let lines = fixed("      Y = 1 +\n     & 2");
        assert_eq!(lines.len(), 1);
        let toks: Vec<&Tok> = lines[0].tokens.iter().map(|t| &t.tok).collect();
        assert_eq!(
            toks,
            vec![
                &Tok::Ident("y".into()),
                &Tok::Assign,
                &Tok::Int(1),
                &Tok::Plus,
                &Tok::Int(2)
            ]
        );
    }

    #[test]
    fn comment_lines_contribute_nothing() {
        let lines = fixed("C this is a comment\n      X = 1");
        assert_eq!(lines.len(), 1);
    }

    #[test]
    fn continuation_first_is_an_error() {
        let err = lex_text("t.f", SourceKind::FixedForm, "     & 2").unwrap_err();
        assert!(err.message.contains("continuation"), "{err}");
        assert_eq!(err.loc.as_ref().unwrap().line, 1);
    }

    #[test]
    fn columns_past_72_are_discarded() {
        let mut line = String::from("      X = 1");
        while line.len() < 72 {
            line.push(' ');
        }
        line.push_str("GARBAGE+++");
        let lines = fixed(&line);
        assert_eq!(lines[0].tokens.len(), 3);
    }

    #[test]
    fn labels_come_from_columns_1_to_5() {
        let lines = fixed("   10 CONTINUE");
        assert_eq!(lines[0].label, Some(10));
    }

    #[test]
    fn keywords_are_case_folded() {
        let lines = fixed("      CaLL Foo(X)");
        assert_eq!(lines[0].tokens[0].tok, Tok::Ident("call".into()));
        assert_eq!(lines[0].tokens[1].tok, Tok::Ident("foo".into()));
    }

    #[test]
    fn dot_operators_and_adjacent_integers() {
        let lines = fixed("      L = 1.GT.2");
        let toks: Vec<&Tok> = lines[0].tokens.iter().map(|t| &t.tok).collect();
        assert_eq!(
            toks,
            vec![&Tok::Ident("l".into()), &Tok::Assign, &Tok::Int(1), &Tok::Gt, &Tok::Int(2)]
        );
    }

    #[test]
    fn real_and_double_literals() {
        let lines = fixed("      X = 1.5E-3 + 2D0 + .25");
        let reals: Vec<(f64, bool)> = lines[0]
            .tokens
            .iter()
            .filter_map(|t| match t.tok {
                Tok::Real { value, double } => Some((value, double)),
                _ => None,
            })
            .collect();
        assert_eq!(reals, vec![(1.5e-3, false), (2.0, true), (0.25, false)]);
    }

    #[test]
    fn hollerith_is_rejected() {
        let err = lex_text("t.f", SourceKind::FixedForm, "      X = 4HABCD").unwrap_err();
        assert!(err.message.contains("Hollerith"), "{err}");
    }

    #[test]
    fn tabs_are_rejected() {
        let err = lex_text("t.f", SourceKind::FixedForm, "\tX = 1").unwrap_err();
        assert!(err.message.contains("tab"), "{err}");
    }

    #[test]
    fn region_directives_survive_as_markers() {
        let lines = fixed("C$ACC REGION BEGIN\n      CALL F\n!$acc region end");
        assert_eq!(lines[0].directive, Some(Directive::RegionBegin));
        assert!(lines[1].directive.is_none());
        assert_eq!(lines[2].directive, Some(Directive::RegionEnd));
    }

    #[test]
    fn free_form_continuation_and_comments() {
        let lines = lex_text(
            "t.f95",
            SourceKind::FreeForm,
            "x = 1 + &  ! trailing comment\n  & 2\n! full comment\n10 continue",
        )
        .unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].tokens.len(), 5);
        assert_eq!(lines[1].label, Some(10));
        assert_eq!(lines[1].tokens[0].tok, Tok::Ident("continue".into()));
    }

    #[test]
    fn char_literals_with_escapes() {
        let lines = fixed("      S = 'it''s'");
        assert_eq!(lines[0].tokens[2].tok, Tok::Char("it's".into()));
    }
}
