//! Source file representation and loading.
//!
//! Fixed-form input follows the ANSI X3.9-1978 column layout: labels in
//! columns 1-5, a continuation mark in column 6, statement text in columns
//! 7-72. Anything past column 72 is ignored. Free-form input is the
//! compiler's own Fortran 95 output dialect.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::diag::{Diag, Loc, Result, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    FixedForm,
    FreeForm,
}

#[derive(Debug, Clone)]
pub struct SourceUnit {
    pub path: Arc<str>,
    pub lines: Vec<String>,
    pub kind: SourceKind,
}

impl SourceUnit {
    pub fn from_text(path: impl Into<Arc<str>>, kind: SourceKind, text: &str) -> Self {
        SourceUnit {
            path: path.into(),
            lines: text.lines().map(|l| l.to_string()).collect(),
            kind,
        }
    }

    /// Classify by extension: `.f95`/`.f90` are free-form, everything else
    /// (`.f`, `.f77`, `.for`) is fixed-form.
    pub fn kind_for_path(path: &Path) -> SourceKind {
        match path.extension().and_then(|e| e.to_str()) {
            Some("f90") | Some("f95") => SourceKind::FreeForm,
            _ => SourceKind::FixedForm,
        }
    }

    /// Load a file, resolving INCLUDE lines by literal textual inclusion
    /// relative to the including file.
    pub fn load(path: &Path) -> Result<Self> {
        let kind = Self::kind_for_path(path);
        let name: Arc<str> = Arc::from(path.to_string_lossy().as_ref());
        let mut lines = Vec::new();
        let mut stack = Vec::new();
        read_with_includes(path, kind, &mut lines, &mut stack)?;
        Ok(SourceUnit { path: name, lines: lines_to_strings(lines), kind })
    }
}

/// A raw line remembers where it came from so diagnostics survive inclusion.
#[derive(Debug, Clone)]
pub struct RawLine {
    pub text: String,
    pub loc: Loc,
}

fn lines_to_strings(lines: Vec<RawLine>) -> Vec<String> {
    lines.into_iter().map(|l| l.text).collect()
}

/// Load with include expansion, keeping per-line provenance.
pub fn load_lines(path: &Path) -> Result<(SourceKind, Vec<RawLine>)> {
    let kind = SourceUnit::kind_for_path(path);
    let mut lines = Vec::new();
    let mut stack = Vec::new();
    read_with_includes(path, kind, &mut lines, &mut stack)?;
    Ok((kind, lines))
}

/// Wrap in-memory text in the provenance form used by the lexer.
pub fn text_lines(path: impl Into<Arc<str>>, text: &str) -> Vec<RawLine> {
    let file: Arc<str> = path.into();
    text.lines()
        .enumerate()
        .map(|(i, l)| RawLine {
            text: l.to_string(),
            loc: Loc { file: file.clone(), line: i as u32 + 1, col: 1 },
        })
        .collect()
}

fn read_with_includes(
    path: &Path,
    kind: SourceKind,
    out: &mut Vec<RawLine>,
    stack: &mut Vec<PathBuf>,
) -> Result<()> {
    let canonical = path.to_path_buf();
    if stack.contains(&canonical) {
        return Err(Diag::unlocated(
            Stage::Config,
            format!("recursive INCLUDE of '{}'", path.display()),
        ));
    }
    if stack.len() > 16 {
        return Err(Diag::unlocated(Stage::Config, "INCLUDE nesting too deep"));
    }
    let text = std::fs::read_to_string(path).map_err(|e| {
        Diag::unlocated(Stage::Config, format!("cannot read '{}': {e}", path.display()))
    })?;
    stack.push(canonical);
    let file: Arc<str> = Arc::from(path.to_string_lossy().as_ref());
    for (i, line) in text.lines().enumerate() {
        let loc = Loc { file: file.clone(), line: i as u32 + 1, col: 1 };
        if let Some(inc) = include_target(line, kind) {
            let target = path.parent().unwrap_or(Path::new(".")).join(&inc);
            read_with_includes(&target, SourceUnit::kind_for_path(&target), out, stack)?;
        } else {
            out.push(RawLine { text: line.to_string(), loc });
        }
    }
    stack.pop();
    Ok(())
}

/// Match `INCLUDE 'file'` on a statement line (not a comment, not continued).
fn include_target(line: &str, kind: SourceKind) -> Option<String> {
    let stmt = match kind {
        SourceKind::FixedForm => {
            let first = line.chars().next();
            if matches!(first, Some('c') | Some('C') | Some('*') | Some('!')) {
                return None;
            }
            let chars: Vec<char> = line.chars().collect();
            if chars.len() > 5 && chars[5] != ' ' && chars[5] != '0' {
                return None;
            }
            let end = chars.len().min(72);
            if end <= 6 {
                return None;
            }
            chars[6..end].iter().collect::<String>()
        }
        SourceKind::FreeForm => line.to_string(),
    };
    let t = stmt.trim();
    let lower = t.to_ascii_lowercase();
    let rest = lower.strip_prefix("include")?;
    let rest = rest.trim_start();
    if !rest.starts_with('\'') {
        return None;
    }
    // Take the name between the quotes from the original (case-preserving) text.
    let t_rest = t[t.len() - rest.len()..].trim_start();
    let inner = &t_rest[1..];
    let close = inner.find('\'')?;
    Some(inner[..close].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn include_line_is_recognized() {
        assert_eq!(
            include_target("      INCLUDE 'params.h'", SourceKind::FixedForm),
            Some("params.h".to_string())
        );
        assert_eq!(include_target("C     INCLUDE 'params.h'", SourceKind::FixedForm), None);
        assert_eq!(
            include_target("include 'Mixed.Inc'", SourceKind::FreeForm),
            Some("Mixed.Inc".to_string())
        );
    }

    #[test]
    fn extension_classification() {
        assert_eq!(SourceUnit::kind_for_path(Path::new("a.f")), SourceKind::FixedForm);
        assert_eq!(SourceUnit::kind_for_path(Path::new("a.f77")), SourceKind::FixedForm);
        assert_eq!(SourceUnit::kind_for_path(Path::new("a.f95")), SourceKind::FreeForm);
    }
}
