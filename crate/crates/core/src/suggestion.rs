//! Turns raw predictions into actionable edits.
//!
//! The marked region is extracted from the model output, diffed line-wise
//! (with intra-line refinement for 1-for-1 replacements) against the
//! original region, then classified as No-Op, in-viewport edits, or edits
//! with a jump target. The core contract is the round trip:
//! `apply(diff(a, b), a) == b`, byte-exact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assemble::{
    strip_markers, StructuralContext, EDITABLE_REGION_END, EDITABLE_REGION_START,
    USER_CURSOR_MARKER,
};
use crate::diff::{line_diff_ops, split_keep_newlines, LineOp};
use crate::doc::{Document, Position, Range};
use crate::predict::Prediction;
use crate::session::{ActionOutcome, Session, SessionError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseSuggestionError {
    #[error("missing marker {0:?} in prediction")]
    MissingMarker(&'static str),
    #[error("marker {0:?} occurs more than once in prediction")]
    DuplicatedMarker(&'static str),
    #[error("end marker precedes start marker")]
    EndBeforeStart,
}

/// A single replacement in original-region coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextEdit {
    pub range: Range,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParsedSuggestion {
    NoOp,
    Edits(Vec<TextEdit>),
    EditsWithJump {
        edits: Vec<TextEdit>,
        target: (String, Position),
    },
}

impl ParsedSuggestion {
    pub fn kind_label(&self) -> &'static str {
        match self {
            ParsedSuggestion::NoOp => "no_op",
            ParsedSuggestion::Edits(_) => "edits",
            ParsedSuggestion::EditsWithJump { .. } => "jump",
        }
    }

    pub fn edits(&self) -> &[TextEdit] {
        match self {
            ParsedSuggestion::NoOp => &[],
            ParsedSuggestion::Edits(edits) => edits,
            ParsedSuggestion::EditsWithJump { edits, .. } => edits,
        }
    }
}

/// Region text strictly between the markers, cursor marker stripped.
pub fn extract_region(prediction: &Prediction) -> Result<String, ParseSuggestionError> {
    let raw = &prediction.raw_text;
    for marker in [EDITABLE_REGION_START, EDITABLE_REGION_END] {
        match raw.matches(marker).count() {
            0 => return Err(ParseSuggestionError::MissingMarker(marker_name(marker))),
            1 => {}
            _ => return Err(ParseSuggestionError::DuplicatedMarker(marker_name(marker))),
        }
    }
    if raw.matches(USER_CURSOR_MARKER).count() > 1 {
        return Err(ParseSuggestionError::DuplicatedMarker("user_cursor_is_here"));
    }
    let start = raw.find(EDITABLE_REGION_START).expect("checked");
    let end = raw.find(EDITABLE_REGION_END).expect("checked");
    if end < start {
        return Err(ParseSuggestionError::EndBeforeStart);
    }
    let (inner, _) = strip_markers(raw).ok_or(ParseSuggestionError::EndBeforeStart)?;
    Ok(inner)
}

fn marker_name(marker: &str) -> &'static str {
    match marker {
        EDITABLE_REGION_START => "editable_region_start",
        EDITABLE_REGION_END => "editable_region_end",
        _ => "user_cursor_is_here",
    }
}

/// Line-level LCS diff, refined to character ranges when a single line is
/// replaced by a single line. Edits are sorted and non-overlapping; applying
/// them to `original` yields `predicted`.
pub fn diff_region(original: &str, predicted: &str) -> Vec<TextEdit> {
    if original == predicted {
        return Vec::new();
    }
    let old_lines = split_keep_newlines(original);
    let new_lines = split_keep_newlines(predicted);
    let ops = line_diff_ops(&old_lines, &new_lines);

    // Line-start offsets in the original, plus a sentinel at EOF.
    let mut old_starts = Vec::with_capacity(old_lines.len() + 1);
    {
        let mut off = 0;
        for line in &old_lines {
            old_starts.push(off);
            off += line.len();
        }
        old_starts.push(off);
    }
    let odoc = Document::new("", original.to_string());

    let mut edits = Vec::new();
    let mut i = 0;
    while i < ops.len() {
        match ops[i] {
            LineOp::Context(..) => i += 1,
            _ => {
                let mut removed = Vec::new();
                let mut added = Vec::new();
                while i < ops.len() {
                    match ops[i] {
                        LineOp::Remove(idx) => {
                            removed.push(idx);
                            i += 1;
                        }
                        LineOp::Add(idx) => {
                            added.push(idx);
                            i += 1;
                        }
                        LineOp::Context(..) => break,
                    }
                }
                let replacement: String = added.iter().map(|&j| new_lines[j]).collect();
                let (start_off, end_off) = if removed.is_empty() {
                    // Pure insertion before the next old line (or at EOF).
                    let at = ops
                        .get(i)
                        .and_then(|op| match op {
                            LineOp::Context(oi, _) | LineOp::Remove(oi) => Some(old_starts[*oi]),
                            _ => None,
                        })
                        .unwrap_or(original.len());
                    (at, at)
                } else {
                    let first = *removed.first().unwrap();
                    let last = *removed.last().unwrap();
                    (old_starts[first], old_starts[last] + old_lines[last].len())
                };

                if removed.len() == 1 && added.len() == 1 {
                    // Intra-line refinement: trim the common prefix/suffix.
                    let old_line = old_lines[removed[0]];
                    let new_line = new_lines[added[0]];
                    let (ps, os_end, ns_end) = trim_common(old_line, new_line);
                    let range = Range::new(
                        odoc.position_of(start_off + ps),
                        odoc.position_of(start_off + os_end),
                    );
                    edits.push(TextEdit {
                        range,
                        replacement: new_line[ps..ns_end].to_string(),
                    });
                } else {
                    edits.push(TextEdit {
                        range: Range::new(odoc.position_of(start_off), odoc.position_of(end_off)),
                        replacement,
                    });
                }
            }
        }
    }
    edits
}

/// Common prefix length and end offsets after trimming the common suffix,
/// on char boundaries.
fn trim_common(old: &str, new: &str) -> (usize, usize, usize) {
    let ob = old.as_bytes();
    let nb = new.as_bytes();
    let mut prefix = 0;
    while prefix < ob.len() && prefix < nb.len() && ob[prefix] == nb[prefix] {
        prefix += 1;
    }
    while prefix > 0 && (!old.is_char_boundary(prefix) || !new.is_char_boundary(prefix)) {
        prefix -= 1;
    }
    let mut suffix = 0;
    while suffix < ob.len() - prefix && suffix < nb.len() - prefix
        && ob[ob.len() - 1 - suffix] == nb[nb.len() - 1 - suffix]
    {
        suffix += 1;
    }
    while suffix > 0
        && (!old.is_char_boundary(ob.len() - suffix) || !new.is_char_boundary(nb.len() - suffix))
    {
        suffix -= 1;
    }
    (prefix, ob.len() - suffix, nb.len() - suffix)
}

/// Applies region-coordinate edits to the original region text.
pub fn apply_edits(original: &str, edits: &[TextEdit]) -> String {
    let doc = Document::new("", original.to_string());
    let mut spans: Vec<(usize, usize, &str)> = edits
        .iter()
        .map(|e| {
            let span = doc.span_of(e.range).expect("edit in bounds");
            (span.start, span.end, e.replacement.as_str())
        })
        .collect();
    spans.sort_by_key(|(s, e, _)| (*s, *e));
    let mut out = String::with_capacity(original.len());
    let mut cursor = 0;
    for (start, end, replacement) in spans {
        out.push_str(&original[cursor..start]);
        out.push_str(replacement);
        cursor = end;
    }
    out.push_str(&original[cursor..]);
    out
}

/// Lines visible to the user; jump targets are edits landing outside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Viewport {
    pub first_line: u32,
    pub last_line: u32,
}

pub const DEFAULT_VIEWPORT_LINES: u32 = 50;

impl Viewport {
    /// A window of `DEFAULT_VIEWPORT_LINES` lines centered on the cursor.
    pub fn centered(cursor_line: u32, total_lines: u32) -> Self {
        let half = DEFAULT_VIEWPORT_LINES / 2;
        let first = cursor_line.saturating_sub(half);
        let last = (cursor_line + half).min(total_lines.saturating_sub(1));
        Viewport {
            first_line: first,
            last_line: last,
        }
    }

    pub fn contains(&self, line: u32) -> bool {
        self.first_line <= line && line <= self.last_line
    }
}

/// No edits → No-Op; first edit outside the viewport → jump to it; otherwise
/// plain edits. Edit ranges are region-relative, so the region's first
/// document line anchors them.
pub fn classify(
    edits: Vec<TextEdit>,
    path: &str,
    region_first_line: u32,
    viewport: Viewport,
) -> ParsedSuggestion {
    if edits.is_empty() {
        return ParsedSuggestion::NoOp;
    }
    let first = &edits[0];
    let doc_line = region_first_line + first.range.start.line;
    if !viewport.contains(doc_line) {
        let target = (
            path.to_string(),
            Position::new(doc_line, first.range.start.col),
        );
        ParsedSuggestion::EditsWithJump { edits, target }
    } else {
        ParsedSuggestion::Edits(edits)
    }
}

/// Region-relative edits mapped to document coordinates.
pub fn to_document_edits(
    doc: &Document,
    structural: &StructuralContext,
    suggestion: &ParsedSuggestion,
) -> Result<Vec<(Range, String)>, SessionError> {
    let region_start = doc.position_of(structural.region_span.start);
    Ok(suggestion
        .edits()
        .iter()
        .map(|e| {
            (
                Range::new(
                    to_doc_position(region_start, e.range.start),
                    to_doc_position(region_start, e.range.end),
                ),
                e.replacement.clone(),
            )
        })
        .collect())
}

/// Maps region-relative edits to document coordinates and applies them
/// atomically through the session (one suggestion-applied history record;
/// cursor moves to the jump target when present).
pub fn apply_suggestion(
    session: &mut Session,
    structural: &StructuralContext,
    suggestion: &ParsedSuggestion,
    at_ms: u64,
) -> Result<ActionOutcome, SessionError> {
    if suggestion.edits().is_empty() {
        return Ok(ActionOutcome {
            noop: true,
            ..Default::default()
        });
    }
    let doc = session.document(&structural.path)?;
    let doc_edits = to_document_edits(doc, structural, suggestion)?;
    let cursor_after = match suggestion {
        ParsedSuggestion::EditsWithJump { target, .. } => Some(target.1),
        _ => None,
    };
    session.apply_suggestion_edits(
        &structural.path,
        structural.doc_version,
        &doc_edits,
        cursor_after,
        at_ms,
    )
}

fn to_doc_position(region_start: Position, region_pos: Position) -> Position {
    if region_pos.line == 0 {
        Position::new(region_start.line, region_start.col + region_pos.col)
    } else {
        Position::new(region_start.line + region_pos.line, region_pos.col)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::{Prediction, PredictionSource};

    fn pred(text: &str) -> Prediction {
        Prediction {
            raw_text: text.to_string(),
            latency_ms: 0,
            source: PredictionSource::Echo,
        }
    }

    #[test]
    fn extract_well_formed() {
        let p = pred("<|editable_region_start|>\nabc<|user_cursor_is_here|>def\n<|editable_region_end|>");
        assert_eq!(extract_region(&p).unwrap(), "abcdef");
    }

    #[test]
    fn extract_missing_end_marker() {
        let p = pred("<|editable_region_start|>\nabc\n");
        assert_eq!(
            extract_region(&p).unwrap_err(),
            ParseSuggestionError::MissingMarker("editable_region_end")
        );
    }

    #[test]
    fn extract_duplicated_marker() {
        let p = pred("<|editable_region_start|><|editable_region_start|>x<|editable_region_end|>");
        assert!(matches!(
            extract_region(&p).unwrap_err(),
            ParseSuggestionError::DuplicatedMarker(_)
        ));
    }

    #[test]
    fn extract_end_before_start() {
        let p = pred("<|editable_region_end|>x<|editable_region_start|>");
        assert_eq!(extract_region(&p).unwrap_err(), ParseSuggestionError::EndBeforeStart);
    }

    #[test]
    fn identical_texts_diff_empty() {
        assert!(diff_region("a\nb\n", "a\nb\n").is_empty());
    }

    #[test]
    fn appended_line_is_single_insert() {
        let edits = diff_region("a\n", "a\nb\n");
        assert_eq!(edits.len(), 1);
        assert_eq!(edits[0].replacement, "b\n");
        assert_eq!(apply_edits("a\n", &edits), "a\nb\n");
    }

    #[test]
    fn one_for_one_replacement_refines_within_line() {
        let edits = diff_region("let value = 10;\n", "let value = 42;\n");
        assert_eq!(edits.len(), 1);
        assert_eq!(edits[0].replacement, "42");
        assert_eq!(edits[0].range.start.col, 12);
    }

    #[test]
    fn round_trip_exhaustive_small_strings() {
        // Brute-force oracle over every pair from a small alphabet of line
        // shapes, including newline-edge cases.
        let atoms = ["", "a", "b\n", "a\nb", "a\nb\n", "\n", "x\ny\nz\n", "a\na\n"];
        for a in atoms {
            for b in atoms {
                let edits = diff_region(a, b);
                assert_eq!(apply_edits(a, &edits), b, "a={a:?} b={b:?}");
                assert_eq!(edits.is_empty(), a == b);
                // Sorted and non-overlapping.
                for w in edits.windows(2) {
                    assert!(w[0].range.end <= w[1].range.start);
                }
            }
        }
    }

    #[test]
    fn classify_rules() {
        assert_eq!(
            classify(vec![], "f.java", 0, Viewport { first_line: 0, last_line: 50 }),
            ParsedSuggestion::NoOp
        );
        let edit = TextEdit {
            range: Range::new(Position::new(399, 0), Position::new(399, 0)),
            replacement: "x".into(),
        };
        let out = classify(
            vec![edit.clone()],
            "f.java",
            1,
            Viewport { first_line: 0, last_line: 50 },
        );
        match out {
            ParsedSuggestion::EditsWithJump { target, .. } => {
                assert_eq!(target.1.line, 400);
            }
            other => panic!("expected jump, got {other:?}"),
        }
        let near = TextEdit {
            range: Range::new(Position::new(3, 0), Position::new(3, 0)),
            replacement: "x".into(),
        };
        assert!(matches!(
            classify(vec![near], "f.java", 0, Viewport { first_line: 0, last_line: 50 }),
            ParsedSuggestion::Edits(_)
        ));
    }
}
