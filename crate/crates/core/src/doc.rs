//! Line-indexed documents with character-column positions.
//!
//! Positions are 0-based `(line, col)` pairs where `col` counts characters,
//! not bytes, so they stay stable across encodings. The line index is
//! re-derived after every mutation and the version counter increases on
//! every splice.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 0-based line/character position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub line: u32,
    pub col: u32,
}

impl Position {
    pub fn new(line: u32, col: u32) -> Self {
        Position { line, col }
    }
}

/// Half-open range in document order; `start <= end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Range {
    pub start: Position,
    pub end: Position,
}

impl Range {
    pub fn new(start: Position, end: Position) -> Self {
        Range { start, end }
    }

    pub fn point(pos: Position) -> Self {
        Range { start: pos, end: pos }
    }

    pub fn is_ordered(&self) -> bool {
        self.start <= self.end
    }
}

/// Byte span into a document's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, offset: usize) -> bool {
        self.start <= offset && offset < self.end
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DocError {
    #[error("position {line}:{col} out of bounds in {path}")]
    OutOfBounds { path: String, line: u32, col: u32 },
    #[error("range start after end: {start:?} > {end:?}")]
    InvertedRange { start: Position, end: Position },
}

/// A workspace file: full text, derived line index, monotonic version.
#[derive(Debug, Clone)]
pub struct Document {
    path: String,
    text: String,
    version: u64,
    line_starts: Vec<usize>,
}

impl Document {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let line_starts = compute_line_starts(&text);
        Document {
            path: path.into(),
            text,
            version: 1,
            line_starts,
        }
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    pub fn line_count(&self) -> u32 {
        self.line_starts.len() as u32
    }

    /// Line content without its trailing newline.
    pub fn line_text(&self, line: u32) -> Option<&str> {
        let start = *self.line_starts.get(line as usize)?;
        let end = self
            .line_starts
            .get(line as usize + 1)
            .map(|&next| next - 1)
            .unwrap_or(self.text.len());
        Some(&self.text[start..end])
    }

    pub fn line_start_offset(&self, line: u32) -> Option<usize> {
        self.line_starts.get(line as usize).copied()
    }

    /// End offset of a line's content, excluding the newline.
    pub fn line_end_offset(&self, line: u32) -> Option<usize> {
        self.line_text(line)
            .map(|t| self.line_starts[line as usize] + t.len())
    }

    pub fn end_position(&self) -> Position {
        let line = self.line_count().saturating_sub(1);
        let col = self
            .line_text(line)
            .map(|t| t.chars().count() as u32)
            .unwrap_or(0);
        Position::new(line, col)
    }

    /// Char-column position to byte offset; errors when out of bounds.
    pub fn offset_of(&self, pos: Position) -> Result<usize, DocError> {
        let oob = || DocError::OutOfBounds {
            path: self.path.clone(),
            line: pos.line,
            col: pos.col,
        };
        let line_text = self.line_text(pos.line).ok_or_else(oob)?;
        let line_start = self.line_starts[pos.line as usize];
        let mut chars = 0u32;
        for (byte_idx, _) in line_text.char_indices() {
            if chars == pos.col {
                return Ok(line_start + byte_idx);
            }
            chars += 1;
        }
        if chars == pos.col {
            return Ok(line_start + line_text.len());
        }
        Err(oob())
    }

    pub fn position_of(&self, offset: usize) -> Position {
        let offset = offset.min(self.text.len());
        let line = match self.line_starts.binary_search(&offset) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let line_start = self.line_starts[line];
        let col = self.text[line_start..offset].chars().count() as u32;
        Position::new(line as u32, col)
    }

    pub fn span_of(&self, range: Range) -> Result<Span, DocError> {
        if !range.is_ordered() {
            return Err(DocError::InvertedRange {
                start: range.start,
                end: range.end,
            });
        }
        let start = self.offset_of(range.start)?;
        let end = self.offset_of(range.end)?;
        Ok(Span::new(start, end))
    }

    pub fn slice(&self, range: Range) -> Result<&str, DocError> {
        let span = self.span_of(range)?;
        Ok(&self.text[span.start..span.end])
    }

    pub fn slice_span(&self, span: Span) -> &str {
        &self.text[span.start..span.end]
    }

    /// Replaces `range` with `replacement`; bumps the version and rebuilds the
    /// line index. Returns the removed text and the range now occupied by the
    /// replacement.
    pub fn splice(&mut self, range: Range, replacement: &str) -> Result<(String, Range), DocError> {
        let span = self.span_of(range)?;
        let removed = self.text[span.start..span.end].to_string();
        self.text.replace_range(span.start..span.end, replacement);
        self.line_starts = compute_line_starts(&self.text);
        self.version += 1;
        let new_end = self.position_of(span.start + replacement.len());
        Ok((removed, Range::new(range.start, new_end)))
    }

    pub fn full_range(&self) -> Range {
        Range::new(Position::new(0, 0), self.end_position())
    }

    /// Clamps a range to document bounds (used for viewed-file captures).
    pub fn clamp_range(&self, range: Range) -> Range {
        let clamp = |pos: Position| -> Position {
            let line = pos.line.min(self.line_count().saturating_sub(1));
            let max_col = self
                .line_text(line)
                .map(|t| t.chars().count() as u32)
                .unwrap_or(0);
            Position::new(line, pos.col.min(max_col))
        };
        let mut start = clamp(range.start);
        let mut end = clamp(range.end);
        if end < start {
            std::mem::swap(&mut start, &mut end);
        }
        Range::new(start, end)
    }
}

fn compute_line_starts(text: &str) -> Vec<usize> {
    let mut starts = vec![0usize];
    for (i, b) in text.bytes().enumerate() {
        if b == b'\n' {
            starts.push(i + 1);
        }
    }
    starts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_index_basics() {
        let doc = Document::new("a.txt", "ab\ncd\n");
        assert_eq!(doc.line_count(), 3);
        assert_eq!(doc.line_text(0), Some("ab"));
        assert_eq!(doc.line_text(1), Some("cd"));
        assert_eq!(doc.line_text(2), Some(""));
        assert_eq!(doc.line_text(3), None);
    }

    #[test]
    fn offsets_use_char_columns() {
        let doc = Document::new("a.txt", "héllo\nx");
        // 'é' is 2 bytes but one column.
        assert_eq!(doc.offset_of(Position::new(0, 2)).unwrap(), 3);
        assert_eq!(doc.offset_of(Position::new(0, 5)).unwrap(), 6);
        assert!(doc.offset_of(Position::new(0, 6)).is_err());
        assert_eq!(doc.position_of(3), Position::new(0, 2));
    }

    #[test]
    fn splice_bumps_version_and_reindexes() {
        let mut doc = Document::new("a.txt", "one\ntwo\nthree\n");
        let v0 = doc.version();
        let range = Range::new(Position::new(1, 0), Position::new(1, 3));
        let (removed, new_range) = doc.splice(range, "2\n2b").unwrap();
        assert_eq!(removed, "two");
        assert_eq!(doc.text(), "one\n2\n2b\nthree\n");
        assert_eq!(doc.version(), v0 + 1);
        assert_eq!(new_range.end, Position::new(2, 2));
    }

    #[test]
    fn out_of_bounds_positions_error() {
        let doc = Document::new("a.txt", "ab\n");
        assert!(doc.offset_of(Position::new(5, 0)).is_err());
        assert!(doc.offset_of(Position::new(0, 3)).is_err());
        // Position at end of last (empty) line is valid.
        assert!(doc.offset_of(Position::new(1, 0)).is_ok());
    }

    #[test]
    fn inverted_range_rejected() {
        let doc = Document::new("a.txt", "ab\ncd\n");
        let range = Range::new(Position::new(1, 0), Position::new(0, 0));
        assert!(matches!(doc.span_of(range), Err(DocError::InvertedRange { .. })));
    }
}
