//! Six-channel context assembly and prompt rendering.
//!
//! Sections render in a fixed order — Instruction, Recently Viewed Code,
//! Edit History, Structural Context, Cross File Dependencies, Outline,
//! Diagnostics, Response — with empty optional sections omitted. The
//! structural section wraps the editable region in start/cursor/end markers;
//! everything is byte-deterministic given the same inputs.

use std::collections::BTreeSet;
use std::path::Path;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc::{Document, Position, Span};
use crate::session::{EditRecord, ViewedSnippet};
use crate::syntax::{enclosing_chain, DiagnosticRecord, OutlineEntry, Severity, SymbolIndex, SyntaxNode};

pub const EDITABLE_REGION_START: &str = "<|editable_region_start|>";
pub const USER_CURSOR_MARKER: &str = "<|user_cursor_is_here|>";
pub const EDITABLE_REGION_END: &str = "<|editable_region_end|>";

pub const DEFAULT_INSTRUCTION: &str =
    "Analyze user edits and rewrite code with suggestions at cursor location.";

pub const DEFAULT_TOTAL_BUDGET: usize = 8192;
pub const DEFAULT_VIEWS_BUDGET: usize = 2048;
pub const DEFAULT_HISTORY_BUDGET: usize = 4096;
pub const DEFAULT_STRUCTURAL_BUDGET: usize = 2048;

/// Fallback window half-height (lines) when no enclosing node fits.
const FALLBACK_WINDOW_LINES: u32 = 20;

/// Recency half-life for viewed-snippet scoring, in logical ms.
const RECENCY_HALF_LIFE_MS: f64 = 30_000.0;

#[derive(Debug, Error)]
pub enum AssembleError {
    #[error("document already contains the marker literal {marker:?}")]
    MarkerCollision { marker: &'static str },
    #[error("structural budget too small: {0} bytes (minimum 64)")]
    BudgetTooSmall(usize),
    #[error("cursor position invalid: {0}")]
    BadCursor(#[from] crate::doc::DocError),
    #[error("structural context is required to assemble a prompt")]
    MissingStructuralContext,
}

/// The marker-annotated editable region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralContext {
    pub path: String,
    /// Region text with the three markers embedded.
    pub marked_text: String,
    /// Byte span of the unmarked region in the source document. The span
    /// covers whole lines and excludes the final line's newline.
    pub region_span: Span,
    /// Document version the region was extracted from.
    pub doc_version: u64,
    /// Cursor offset relative to `region_span.start`.
    pub cursor_offset: usize,
}

impl StructuralContext {
    /// The region text without any markers.
    pub fn region_text<'d>(&self, doc: &'d Document) -> &'d str {
        doc.slice_span(self.region_span)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBudgets {
    pub total: usize,
    pub views: usize,
    pub history: usize,
    pub structural: usize,
}

impl Default for PromptBudgets {
    fn default() -> Self {
        PromptBudgets {
            total: DEFAULT_TOTAL_BUDGET,
            views: DEFAULT_VIEWS_BUDGET,
            history: DEFAULT_HISTORY_BUDGET,
            structural: DEFAULT_STRUCTURAL_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SectionKind {
    Instruction,
    RecentlyViewedCode,
    EditHistory,
    StructuralContext,
    CrossFileDependencies,
    Outline,
    Diagnostics,
    Response,
}

impl SectionKind {
    pub fn header(self) -> &'static str {
        match self {
            SectionKind::Instruction => "Instruction:",
            SectionKind::RecentlyViewedCode => "Recently Viewed Code:",
            SectionKind::EditHistory => "Edit History:",
            SectionKind::StructuralContext => "Structural Context:",
            SectionKind::CrossFileDependencies => "Cross File Dependencies:",
            SectionKind::Outline => "Outline:",
            SectionKind::Diagnostics => "Diagnostics:",
            SectionKind::Response => "Response:",
        }
    }

    pub const ORDER: [SectionKind; 8] = [
        SectionKind::Instruction,
        SectionKind::RecentlyViewedCode,
        SectionKind::EditHistory,
        SectionKind::StructuralContext,
        SectionKind::CrossFileDependencies,
        SectionKind::Outline,
        SectionKind::Diagnostics,
        SectionKind::Response,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossFileDependency {
    pub name: String,
    pub signature: String,
    pub path: String,
}

/// A rendered prompt plus per-section content and spans into the rendering.
#[derive(Debug, Clone)]
pub struct AssembledPrompt {
    sections: Vec<(SectionKind, String)>,
    rendered: String,
    section_spans: Vec<(SectionKind, Span)>,
}

impl AssembledPrompt {
    pub fn rendered(&self) -> &str {
        &self.rendered
    }

    pub fn section(&self, kind: SectionKind) -> Option<&str> {
        self.sections
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, content)| content.as_str())
    }

    pub fn section_span(&self, kind: SectionKind) -> Option<Span> {
        self.section_spans
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, span)| *span)
    }

    pub fn sections(&self) -> &[(SectionKind, String)] {
        &self.sections
    }

    pub fn sha256(&self) -> String {
        use sha2::{Digest, Sha256};
        format!("{:x}", Sha256::digest(self.rendered.as_bytes()))
    }
}

/// Widest enclosing node that fits the byte budget, wrapped in markers; a
/// ±N-line cursor window when even the innermost node is too large.
pub fn extract_structural_context(
    doc: &Document,
    tree: &SyntaxNode,
    cursor: Position,
    max_bytes: usize,
) -> Result<StructuralContext, AssembleError> {
    if max_bytes < 64 {
        return Err(AssembleError::BudgetTooSmall(max_bytes));
    }
    for marker in [EDITABLE_REGION_START, USER_CURSOR_MARKER, EDITABLE_REGION_END] {
        if doc.text().contains(marker) {
            return Err(AssembleError::MarkerCollision {
                marker: match marker {
                    EDITABLE_REGION_START => EDITABLE_REGION_START,
                    USER_CURSOR_MARKER => USER_CURSOR_MARKER,
                    _ => EDITABLE_REGION_END,
                },
            });
        }
    }
    let cursor_offset = doc.offset_of(cursor)?;

    let chain = enclosing_chain(tree, cursor_offset);
    let mut region: Option<Span> = None;
    for node in chain.iter().rev() {
        let span = line_aligned(doc, node.span);
        if span.len() <= max_bytes {
            region = Some(span);
            break;
        }
    }
    let span = match region {
        Some(span) if span.contains(cursor_offset) || span.end == cursor_offset => span,
        _ => fallback_window(doc, cursor, max_bytes),
    };

    let relative = cursor_offset.saturating_sub(span.start).min(span.len());
    let inner = doc.slice_span(span);
    let mut marked = String::with_capacity(inner.len() + 80);
    marked.push_str(EDITABLE_REGION_START);
    marked.push('\n');
    marked.push_str(&inner[..relative]);
    marked.push_str(USER_CURSOR_MARKER);
    marked.push_str(&inner[relative..]);
    marked.push('\n');
    marked.push_str(EDITABLE_REGION_END);

    Ok(StructuralContext {
        path: doc.path().to_string(),
        marked_text: marked,
        region_span: span,
        doc_version: doc.version(),
        cursor_offset: relative,
    })
}

/// Expands a node span to whole lines, excluding the final newline.
fn line_aligned(doc: &Document, span: Span) -> Span {
    let start_pos = doc.position_of(span.start);
    let end_pos = doc.position_of(span.end.saturating_sub(1).max(span.start));
    let start = doc.line_start_offset(start_pos.line).unwrap_or(0);
    let end = doc.line_end_offset(end_pos.line).unwrap_or(doc.len());
    Span::new(start, end.max(start))
}

/// ±N lines around the cursor, shrunk until the bytes fit.
fn fallback_window(doc: &Document, cursor: Position, max_bytes: usize) -> Span {
    let mut lo = cursor.line.saturating_sub(FALLBACK_WINDOW_LINES);
    let mut hi = (cursor.line + FALLBACK_WINDOW_LINES).min(doc.line_count().saturating_sub(1));
    loop {
        let start = doc.line_start_offset(lo).unwrap_or(0);
        let end = doc.line_end_offset(hi).unwrap_or(doc.len());
        if end.saturating_sub(start) <= max_bytes || (lo == cursor.line && hi == cursor.line) {
            if end.saturating_sub(start) <= max_bytes {
                return Span::new(start, end.max(start));
            }
            // Even the cursor line is too big: clamp around the cursor on
            // char boundaries.
            let cursor_off = doc.offset_of(cursor).unwrap_or(start);
            let half = max_bytes / 2;
            let mut s = cursor_off.saturating_sub(half).max(start);
            let mut e = (cursor_off + half).min(end);
            let text = doc.text();
            while s < e && !text.is_char_boundary(s) {
                s += 1;
            }
            while e > s && !text.is_char_boundary(e) {
                e -= 1;
            }
            return Span::new(s, e);
        }
        // Drop the farther edge first.
        if hi - cursor.line >= cursor.line - lo && hi > cursor.line {
            hi -= 1;
        } else if lo < cursor.line {
            lo += 1;
        }
    }
}

static IDENTIFIER: Lazy<Regex> = Lazy::new(|| Regex::new(r"[A-Za-z_$][A-Za-z0-9_$]*").unwrap());

/// All identifier-like tokens, keywords excluded.
pub fn identifiers(text: &str) -> BTreeSet<String> {
    const SKIP: &[&str] = &[
        "package", "import", "public", "private", "protected", "static", "final", "class",
        "interface", "enum", "extends", "implements", "void", "int", "long", "boolean", "char",
        "byte", "short", "float", "double", "new", "return", "if", "else", "for", "while", "do",
        "switch", "case", "break", "continue", "try", "catch", "finally", "throw", "throws",
        "this", "super", "null", "true", "false", "abstract", "default", "synchronized", "native",
        "transient", "volatile", "strictfp", "instanceof", "var", "record",
    ];
    IDENTIFIER
        .find_iter(text)
        .map(|m| m.as_str().to_string())
        .filter(|t| !SKIP.contains(&t.as_str()))
        .collect()
}

/// Scores viewed snippets: 0.6 · recency decay + 0.4 · identifier Jaccard
/// overlap with the current document. Descending, ties broken by recency
/// then path.
pub fn rank_recent_views(
    snippets: &[ViewedSnippet],
    current_doc: &Document,
    k: usize,
    now_ms: u64,
) -> Vec<ViewedSnippet> {
    if k == 0 {
        return Vec::new();
    }
    let current_ids = identifiers(current_doc.text());
    let mut scored: Vec<ViewedSnippet> = snippets
        .iter()
        .map(|s| {
            let age = now_ms.saturating_sub(s.last_viewed) as f64;
            let recency = 0.5f64.powf(age / RECENCY_HALF_LIFE_MS);
            let snippet_ids = identifiers(&s.text);
            let union = current_ids.union(&snippet_ids).count();
            let overlap = if union == 0 {
                0.0
            } else {
                current_ids.intersection(&snippet_ids).count() as f64 / union as f64
            };
            let mut out = s.clone();
            out.relevance = 0.6 * recency + 0.4 * overlap;
            out
        })
        .collect();
    scored.sort_by(|a, b| {
        b.relevance
            .partial_cmp(&a.relevance)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.last_viewed.cmp(&a.last_viewed))
            .then(a.path.cmp(&b.path))
    });
    scored.truncate(k);
    scored
}

/// Fenced, most-recent-first rendering of edit records, truncated at record
/// boundaries to fit `byte_budget`.
pub fn serialize_edit_history(records_newest_first: &[EditRecord], byte_budget: usize) -> String {
    let mut out = String::new();
    for record in records_newest_first {
        let block = record.rendered();
        if out.len() + block.len() > byte_budget {
            break;
        }
        out.push_str(&block);
    }
    out
}

/// Identifiers in the region that resolve in the index to another file.
pub fn collect_dependencies(
    index: &SymbolIndex,
    region_text: &str,
    current_path: &str,
) -> Vec<CrossFileDependency> {
    let mut out = Vec::new();
    for name in identifiers(region_text) {
        for entry in index.lookup(&name) {
            if entry.path != current_path {
                out.push(CrossFileDependency {
                    name: name.clone(),
                    signature: entry.signature.clone(),
                    path: entry.path.clone(),
                });
            }
        }
    }
    out.sort_by(|a, b| (&a.name, &a.path, &a.signature).cmp(&(&b.name, &b.path, &b.signature)));
    out.dedup();
    out
}

/// Inputs for one prompt build.
#[derive(Debug, Clone)]
pub struct PromptInputs {
    pub instruction: String,
    pub views: Vec<ViewedSnippet>,
    pub history_newest_first: Vec<EditRecord>,
    pub structural: StructuralContext,
    pub dependencies: Vec<CrossFileDependency>,
    pub outline: Vec<OutlineEntry>,
    pub diagnostics: Vec<DiagnosticRecord>,
}

/// Renders the prompt. Over-budget prompts are trimmed in the fixed order
/// views → history → outline; the structural section is never cut.
pub fn assemble_prompt(
    mut inputs: PromptInputs,
    budgets: &PromptBudgets,
) -> Result<AssembledPrompt, AssembleError> {
    if inputs.structural.marked_text.is_empty() {
        return Err(AssembleError::MissingStructuralContext);
    }

    // Per-section budget for views first.
    while render_views(&inputs.views).len() > budgets.views && !inputs.views.is_empty() {
        inputs.views.pop();
    }

    let mut prompt = render_all(&inputs, budgets);
    while prompt.rendered.len() > budgets.total {
        if !inputs.views.is_empty() {
            inputs.views.pop();
        } else if !inputs.history_newest_first.is_empty() {
            inputs.history_newest_first.pop();
        } else if !inputs.outline.is_empty() {
            inputs.outline.pop();
        } else {
            break;
        }
        prompt = render_all(&inputs, budgets);
    }
    Ok(prompt)
}

fn render_views(views: &[ViewedSnippet]) -> String {
    let mut out = String::new();
    for snippet in views {
        out.push_str("file_path: ");
        out.push_str(&snippet.path);
        out.push('\n');
        out.push_str(&snippet.text);
        if !snippet.text.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

fn render_all(inputs: &PromptInputs, budgets: &PromptBudgets) -> AssembledPrompt {
    let views = render_views(&inputs.views);
    let history = serialize_edit_history(&inputs.history_newest_first, budgets.history);

    let structural = {
        let name = Path::new(&inputs.structural.path)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| inputs.structural.path.clone());
        format!("```{}\n{}\n```\n", name, inputs.structural.marked_text)
    };

    let mut deps = String::new();
    for dep in &inputs.dependencies {
        deps.push_str(&dep.path);
        deps.push('\n');
        deps.push_str(&dep.signature);
        deps.push('\n');
    }

    let mut outline = String::new();
    for entry in &inputs.outline {
        for _ in 0..entry.depth {
            outline.push_str("  ");
        }
        outline.push_str(&entry.signature);
        outline.push('\n');
    }

    let mut diagnostics = String::new();
    for d in &inputs.diagnostics {
        let severity = match d.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        diagnostics.push_str(&format!(
            "{}:{}:{} {}: {}\n",
            d.path,
            d.range.start.line + 1,
            d.range.start.col + 1,
            severity,
            d.message
        ));
    }

    let mut instruction = inputs.instruction.clone();
    if !instruction.ends_with('\n') {
        instruction.push('\n');
    }

    let contents: Vec<(SectionKind, String)> = vec![
        (SectionKind::Instruction, instruction),
        (SectionKind::RecentlyViewedCode, views),
        (SectionKind::EditHistory, history),
        (SectionKind::StructuralContext, structural),
        (SectionKind::CrossFileDependencies, deps),
        (SectionKind::Outline, outline),
        (SectionKind::Diagnostics, diagnostics),
        (SectionKind::Response, String::new()),
    ];

    let mut rendered = String::new();
    let mut sections = Vec::new();
    let mut spans = Vec::new();
    for (kind, content) in contents {
        let mandatory = matches!(
            kind,
            SectionKind::Instruction | SectionKind::StructuralContext | SectionKind::Response
        );
        if content.is_empty() && !mandatory {
            continue;
        }
        let start = rendered.len();
        rendered.push_str(kind.header());
        rendered.push('\n');
        rendered.push_str(&content);
        spans.push((kind, Span::new(start, rendered.len())));
        sections.push((kind, content));
    }

    AssembledPrompt {
        sections,
        rendered,
        section_spans: spans,
    }
}

/// Strips the three markers from a marked region, returning the inner text
/// and the cursor offset within it. Inverse of the marking done by
/// `extract_structural_context`; also applied to model output by the parser.
pub fn strip_markers(marked: &str) -> Option<(String, Option<usize>)> {
    let start = marked.find(EDITABLE_REGION_START)?;
    let end = marked.rfind(EDITABLE_REGION_END)?;
    let inner_start = start + EDITABLE_REGION_START.len();
    if end < inner_start {
        return None;
    }
    let mut inner = &marked[inner_start..end];
    inner = inner.strip_prefix('\n').unwrap_or(inner);
    inner = inner.strip_suffix('\n').unwrap_or(inner);
    match inner.find(USER_CURSOR_MARKER) {
        Some(pos) => {
            let mut text = String::with_capacity(inner.len());
            text.push_str(&inner[..pos]);
            text.push_str(&inner[pos + USER_CURSOR_MARKER.len()..]);
            Some((text, Some(pos)))
        }
        None => Some((inner.to_string(), None)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::Range;
    use crate::syntax::parse;

    fn doc(text: &str) -> Document {
        Document::new("A.java", text.to_string())
    }

    fn snippet(path: &str, text: &str, at: u64) -> ViewedSnippet {
        ViewedSnippet {
            path: path.into(),
            range: Range::new(Position::new(0, 0), Position::new(0, 0)),
            text: text.into(),
            last_viewed: at,
            relevance: 0.0,
        }
    }

    #[test]
    fn whole_class_fits_budget() {
        let d = doc("class A {\n  void f() {\n    int x = 1;\n  }\n}\n");
        let tree = parse(&d).unwrap();
        let ctx = extract_structural_context(&d, &tree, Position::new(2, 6), 4096).unwrap();
        let (inner, cursor) = strip_markers(&ctx.marked_text).unwrap();
        assert_eq!(inner, d.slice_span(ctx.region_span));
        assert!(cursor.is_some());
        // Big budget: the whole file is the region.
        assert_eq!(ctx.region_span.start, 0);
    }

    #[test]
    fn tiny_budget_falls_back_to_line_window() {
        let big_method: String = (0..400)
            .map(|i| format!("    int v{i} = {i};\n"))
            .collect();
        let src = format!("class A {{\n  void f() {{\n{big_method}  }}\n}}\n");
        let d = doc(&src);
        let tree = parse(&d).unwrap();
        let ctx = extract_structural_context(&d, &tree, Position::new(200, 4), 64).unwrap();
        assert!(ctx.region_span.len() <= 64);
        let (inner, _) = strip_markers(&ctx.marked_text).unwrap();
        assert_eq!(inner, d.slice_span(ctx.region_span));
    }

    #[test]
    fn marker_collision_rejected() {
        let d = doc("class A { String s; }\n// <|editable_region_start|>\n");
        let tree = parse(&d).unwrap();
        let err = extract_structural_context(&d, &tree, Position::new(0, 0), 4096).unwrap_err();
        assert!(matches!(err, AssembleError::MarkerCollision { .. }));
    }

    #[test]
    fn marker_grammar_holds() {
        let d = doc("class A {\n  void f() {}\n}\n");
        let tree = parse(&d).unwrap();
        let ctx = extract_structural_context(&d, &tree, Position::new(1, 2), 4096).unwrap();
        let text = &ctx.marked_text;
        assert_eq!(text.matches(EDITABLE_REGION_START).count(), 1);
        assert_eq!(text.matches(USER_CURSOR_MARKER).count(), 1);
        assert_eq!(text.matches(EDITABLE_REGION_END).count(), 1);
        let s = text.find(EDITABLE_REGION_START).unwrap();
        let c = text.find(USER_CURSOR_MARKER).unwrap();
        let e = text.find(EDITABLE_REGION_END).unwrap();
        assert!(s < c && c < e);
    }

    #[test]
    fn overlap_beats_equal_recency() {
        let d = doc("class Borrow {\n  Integer bookId;\n  Integer userId;\n}\n");
        let shared = snippet("x.java", "Borrow bookId userId lookup\n", 100);
        let unrelated = snippet("y.java", "completely different words here\n", 100);
        let ranked = rank_recent_views(&[unrelated, shared], &d, 2, 100);
        assert_eq!(ranked[0].path, "x.java");
        assert!(ranked[0].relevance > ranked[1].relevance);
    }

    #[test]
    fn k_zero_is_empty() {
        let d = doc("class A {}\n");
        let ranked = rank_recent_views(&[snippet("x.java", "x\n", 0)], &d, 0, 0);
        assert!(ranked.is_empty());
    }

    #[test]
    fn three_snippet_ranking_matches_hand_computed_scores() {
        // Current doc identifiers: {A, Borrow, bookId} (keywords excluded).
        let d = doc("class A { Borrow b; Integer bookId; }\n");
        // Hand computation with half-life 30000 ms, now = 30000:
        //   s1: age 0     -> recency 1.0;   ids {Borrow, bookId, b} ...
        //       current ids: {A, Borrow, Integer, b, bookId}
        //       s1 ids {Borrow, bookId} -> inter 2, union 5 -> 0.4
        //       score = 0.6*1.0 + 0.4*0.4 = 0.76
        //   s2: age 30000 -> recency 0.5;   ids {Borrow, bookId} -> 0.4
        //       score = 0.6*0.5 + 0.4*0.4 = 0.46
        //   s3: age 0     -> recency 1.0;   ids {zzz} -> inter 0 -> 0.0
        //       score = 0.6
        let s1 = snippet("s1.java", "Borrow bookId\n", 30_000);
        let s2 = snippet("s2.java", "Borrow bookId\n", 0);
        let s3 = snippet("s3.java", "zzz\n", 30_000);
        let ranked = rank_recent_views(&[s2.clone(), s3.clone(), s1.clone()], &d, 3, 30_000);
        let order: Vec<&str> = ranked.iter().map(|s| s.path.as_str()).collect();
        assert_eq!(order, ["s1.java", "s3.java", "s2.java"]);
        assert!((ranked[0].relevance - 0.76).abs() < 1e-9);
        assert!((ranked[1].relevance - 0.60).abs() < 1e-9);
        assert!((ranked[2].relevance - 0.46).abs() < 1e-9);
    }

    #[test]
    fn history_truncates_at_record_boundaries() {
        let records: Vec<EditRecord> = (0..10)
            .map(|i| EditRecord {
                file_path: "A.java".into(),
                hunk: format!("@@ -1,1 +1,1 @@\n-old{i}\n+new{i}\n"),
                origin: crate::session::EditOrigin::Typed,
                at_ms: i,
            })
            .collect();
        let newest_first: Vec<EditRecord> = records.iter().rev().cloned().collect();
        let two = newest_first[0].rendered().len() + newest_first[1].rendered().len();
        let out = serialize_edit_history(&newest_first, two + 1);
        assert!(out.contains("new9") && out.contains("new8"));
        assert!(!out.contains("new7"));
        // Intact blocks only.
        assert_eq!(out.matches("```\n").count(), 2);
    }

    #[test]
    fn deps_are_cross_file_only() {
        let a = Document::new("A.java", "class A { void helper() {} }".to_string());
        let b = Document::new("B.java", "class B { void helper() {} void only() {} }".to_string());
        let (index, _) = crate::syntax::index_documents([&a, &b]);
        let deps = collect_dependencies(&index, "helper(); only();", "A.java");
        assert_eq!(deps.len(), 2);
        assert!(deps.iter().all(|d| d.path == "B.java"));
        let deps_local = collect_dependencies(&index, "nothing_shared", "A.java");
        assert!(deps_local.is_empty());
    }

    fn minimal_inputs(d: &Document) -> PromptInputs {
        let tree = parse(d).unwrap();
        let structural =
            extract_structural_context(d, &tree, Position::new(0, 0), 2048).unwrap();
        PromptInputs {
            instruction: DEFAULT_INSTRUCTION.to_string(),
            views: vec![],
            history_newest_first: vec![],
            structural,
            dependencies: vec![],
            outline: vec![],
            diagnostics: vec![],
        }
    }

    #[test]
    fn empty_sections_are_omitted() {
        let d = doc("class A {}\n");
        let prompt = assemble_prompt(minimal_inputs(&d), &PromptBudgets::default()).unwrap();
        let text = prompt.rendered();
        assert!(text.contains("Instruction:\n"));
        assert!(text.contains("Structural Context:\n"));
        assert!(text.ends_with("Response:\n"));
        assert!(!text.contains("Diagnostics:"));
        assert!(!text.contains("Edit History:"));
        assert!(!text.contains("Recently Viewed Code:"));
    }

    #[test]
    fn assembly_is_deterministic() {
        let d = doc("class A {}\n");
        let p1 = assemble_prompt(minimal_inputs(&d), &PromptBudgets::default()).unwrap();
        let p2 = assemble_prompt(minimal_inputs(&d), &PromptBudgets::default()).unwrap();
        assert_eq!(p1.rendered(), p2.rendered());
    }

    #[test]
    fn trimming_drops_views_before_history_and_never_structural() {
        let d = doc("class A {\n  void f() {}\n}\n");
        let mut inputs = minimal_inputs(&d);
        inputs.views = vec![snippet("big.java", &"x".repeat(600), 0)];
        inputs.history_newest_first = vec![EditRecord {
            file_path: "A.java".into(),
            hunk: format!("@@ -1,1 +1,1 @@\n-a\n+{}\n", "y".repeat(300)),
            origin: crate::session::EditOrigin::Typed,
            at_ms: 0,
        }];
        let budgets = PromptBudgets {
            total: 700,
            ..PromptBudgets::default()
        };
        let prompt = assemble_prompt(inputs, &budgets).unwrap();
        assert!(prompt.rendered().len() <= 700);
        assert!(prompt.section(SectionKind::StructuralContext).is_some());
        assert!(prompt.section(SectionKind::RecentlyViewedCode).is_none());
    }
}
