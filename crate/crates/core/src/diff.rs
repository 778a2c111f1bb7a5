//! Line-level diffing and unified-diff hunks.
//!
//! Two consumers: edit records store a single spanning hunk per mutation, and
//! the suggestion parser diffs a predicted region against the original one.
//! Lines are compared including their newline byte so round-trips are
//! byte-exact, including files without a trailing newline.

use thiserror::Error;

/// Guard against quadratic blowup on pathological inputs: above this many DP
/// cells the diff falls back to trimming the common prefix/suffix and
/// replacing the middle wholesale (round-trip still holds).
const MAX_LCS_CELLS: usize = 16_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HunkError {
    #[error("malformed hunk header: {0}")]
    BadHeader(String),
    #[error("malformed hunk body line {line}: {text:?}")]
    BadBodyLine { line: usize, text: String },
    #[error("hunk counts disagree with body: header says -{old},+{new}, body has -{body_old},+{body_new}")]
    CountMismatch {
        old: usize,
        new: usize,
        body_old: usize,
        body_new: usize,
    },
    #[error("hunk does not apply at line {line}: expected {expected:?}, found {found:?}")]
    ApplyMismatch {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("hunk start {start} beyond end of text ({lines} lines)")]
    StartOutOfRange { start: usize, lines: usize },
}

/// Split into lines that keep their trailing newline; the final line may lack
/// one.
pub fn split_keep_newlines(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, b) in text.bytes().enumerate() {
        if b == b'\n' {
            out.push(&text[start..=i]);
            start = i + 1;
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

/// One aligned step of a line diff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineOp {
    /// Indexes into (old, new).
    Context(usize, usize),
    /// Index into old.
    Remove(usize),
    /// Index into new.
    Add(usize),
}

/// Longest-common-subsequence alignment of two line slices.
pub fn line_diff_ops(old: &[&str], new: &[&str]) -> Vec<LineOp> {
    // Trim common prefix/suffix first; it keeps the DP small for the common
    // case of a localized edit.
    let mut prefix = 0;
    while prefix < old.len() && prefix < new.len() && old[prefix] == new[prefix] {
        prefix += 1;
    }
    let mut suffix = 0;
    while suffix < old.len() - prefix && suffix < new.len() - prefix
        && old[old.len() - 1 - suffix] == new[new.len() - 1 - suffix]
    {
        suffix += 1;
    }
    let o = &old[prefix..old.len() - suffix];
    let n = &new[prefix..new.len() - suffix];

    let mut ops = Vec::with_capacity(old.len().max(new.len()));
    for i in 0..prefix {
        ops.push(LineOp::Context(i, i));
    }

    if o.len().saturating_mul(n.len()) > MAX_LCS_CELLS {
        for i in 0..o.len() {
            ops.push(LineOp::Remove(prefix + i));
        }
        for j in 0..n.len() {
            ops.push(LineOp::Add(prefix + j));
        }
    } else {
        // Classic LCS table; entries count matched lines.
        let rows = o.len() + 1;
        let cols = n.len() + 1;
        let mut table = vec![0u32; rows * cols];
        for i in (0..o.len()).rev() {
            for j in (0..n.len()).rev() {
                table[i * cols + j] = if o[i] == n[j] {
                    table[(i + 1) * cols + j + 1] + 1
                } else {
                    table[(i + 1) * cols + j].max(table[i * cols + j + 1])
                };
            }
        }
        let (mut i, mut j) = (0, 0);
        while i < o.len() && j < n.len() {
            if o[i] == n[j] {
                ops.push(LineOp::Context(prefix + i, prefix + j));
                i += 1;
                j += 1;
            } else if table[(i + 1) * cols + j] >= table[i * cols + j + 1] {
                ops.push(LineOp::Remove(prefix + i));
                i += 1;
            } else {
                ops.push(LineOp::Add(prefix + j));
                j += 1;
            }
        }
        while i < o.len() {
            ops.push(LineOp::Remove(prefix + i));
            i += 1;
        }
        while j < n.len() {
            ops.push(LineOp::Add(prefix + j));
            j += 1;
        }
    }

    for k in 0..suffix {
        ops.push(LineOp::Context(
            old.len() - suffix + k,
            new.len() - suffix + k,
        ));
    }
    ops
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HunkLine {
    Context(String),
    Remove(String),
    Add(String),
}

impl HunkLine {
    pub fn content(&self) -> &str {
        match self {
            HunkLine::Context(s) | HunkLine::Remove(s) | HunkLine::Add(s) => s,
        }
    }
}

/// A single unified-diff hunk: 1-based starts, line counts, body.
///
/// `old_no_newline` / `new_no_newline` mark a final line without trailing
/// newline (the `\ No newline at end of file` convention).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    pub old_start: usize,
    pub old_count: usize,
    pub new_start: usize,
    pub new_count: usize,
    pub lines: Vec<HunkLine>,
    pub old_no_newline: bool,
    pub new_no_newline: bool,
}

impl Hunk {
    pub fn header(&self) -> String {
        format!(
            "@@ -{},{} +{},{} @@",
            self.old_start, self.old_count, self.new_start, self.new_count
        )
    }

    /// Renders header plus body. Every body line is newline-terminated; the
    /// no-newline marker follows the affected side's last line.
    pub fn render(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        let last_old = self.last_index_on_old_side();
        let last_new = self.last_index_on_new_side();
        for (idx, line) in self.lines.iter().enumerate() {
            let (tag, text) = match line {
                HunkLine::Context(s) => (' ', s),
                HunkLine::Remove(s) => ('-', s),
                HunkLine::Add(s) => ('+', s),
            };
            out.push(tag);
            out.push_str(text);
            out.push('\n');
            let mark_old = self.old_no_newline && Some(idx) == last_old;
            let mark_new = self.new_no_newline && Some(idx) == last_new;
            if (mark_old && !matches!(line, HunkLine::Add(_)))
                || (mark_new && !matches!(line, HunkLine::Remove(_)))
            {
                out.push_str("\\ No newline at end of file\n");
            }
        }
        out
    }

    fn last_index_on_old_side(&self) -> Option<usize> {
        self.lines
            .iter()
            .rposition(|l| !matches!(l, HunkLine::Add(_)))
    }

    fn last_index_on_new_side(&self) -> Option<usize> {
        self.lines
            .iter()
            .rposition(|l| !matches!(l, HunkLine::Remove(_)))
    }

    /// Checks the header counts against the body.
    pub fn validate(&self) -> Result<(), HunkError> {
        let body_old = self
            .lines
            .iter()
            .filter(|l| !matches!(l, HunkLine::Add(_)))
            .count();
        let body_new = self
            .lines
            .iter()
            .filter(|l| !matches!(l, HunkLine::Remove(_)))
            .count();
        if body_old != self.old_count || body_new != self.new_count {
            return Err(HunkError::CountMismatch {
                old: self.old_count,
                new: self.new_count,
                body_old,
                body_new,
            });
        }
        Ok(())
    }

    /// Parses one rendered hunk (header line + body).
    pub fn parse(text: &str) -> Result<Hunk, HunkError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| HunkError::BadHeader(String::new()))?;
        let caps = parse_header(header).ok_or_else(|| HunkError::BadHeader(header.to_string()))?;
        let (old_start, old_count, new_start, new_count) = caps;
        let mut body = Vec::new();
        let mut old_no_newline = false;
        let mut new_no_newline = false;
        for (i, raw) in lines.enumerate() {
            if raw.starts_with('\\') {
                // Marker applies to the previous body line's side(s).
                match body.last() {
                    Some(HunkLine::Remove(_)) => old_no_newline = true,
                    Some(HunkLine::Add(_)) => new_no_newline = true,
                    Some(HunkLine::Context(_)) => {
                        old_no_newline = true;
                        new_no_newline = true;
                    }
                    None => {
                        return Err(HunkError::BadBodyLine {
                            line: i + 2,
                            text: raw.to_string(),
                        })
                    }
                }
                continue;
            }
            let (tag, rest) = match raw.chars().next() {
                Some(' ') => (' ', &raw[1..]),
                Some('-') => ('-', &raw[1..]),
                Some('+') => ('+', &raw[1..]),
                // An empty line inside a hunk body is a context line whose
                // content is empty (some tools drop the leading space).
                None => (' ', ""),
                _ => {
                    return Err(HunkError::BadBodyLine {
                        line: i + 2,
                        text: raw.to_string(),
                    })
                }
            };
            body.push(match tag {
                ' ' => HunkLine::Context(rest.to_string()),
                '-' => HunkLine::Remove(rest.to_string()),
                _ => HunkLine::Add(rest.to_string()),
            });
        }
        let hunk = Hunk {
            old_start,
            old_count,
            new_start,
            new_count,
            lines: body,
            old_no_newline,
            new_no_newline,
        };
        hunk.validate()?;
        Ok(hunk)
    }

    /// Applies the hunk to `text`, verifying context and removed lines.
    pub fn apply(&self, text: &str) -> Result<String, HunkError> {
        self.validate()?;
        let lines = split_keep_newlines(text);
        let start = if self.old_count == 0 {
            // Pure insertion: old_start names the line *after* which to insert.
            self.old_start
        } else {
            self.old_start - 1
        };
        if start > lines.len() {
            return Err(HunkError::StartOutOfRange {
                start: self.old_start,
                lines: lines.len(),
            });
        }
        let mut out = String::new();
        for line in &lines[..start] {
            out.push_str(line);
        }
        let mut cursor = start;
        for hl in &self.lines {
            match hl {
                HunkLine::Context(expected) | HunkLine::Remove(expected) => {
                    let found = lines.get(cursor).copied().unwrap_or("");
                    if found.trim_end_matches('\n') != expected {
                        return Err(HunkError::ApplyMismatch {
                            line: cursor + 1,
                            expected: expected.clone(),
                            found: found.trim_end_matches('\n').to_string(),
                        });
                    }
                    if matches!(hl, HunkLine::Context(_)) {
                        out.push_str(found);
                    }
                    cursor += 1;
                }
                HunkLine::Add(added) => {
                    out.push_str(added);
                    out.push('\n');
                }
            }
        }
        // Honor the new side's missing trailing newline when the hunk ends
        // the file with an added or context line.
        if self.new_no_newline && cursor >= lines.len() && out.ends_with('\n') {
            out.pop();
        }
        for line in &lines[cursor..] {
            out.push_str(line);
        }
        Ok(out)
    }
}

fn parse_header(header: &str) -> Option<(usize, usize, usize, usize)> {
    let rest = header.strip_prefix("@@ -")?;
    let (old_part, rest) = rest.split_once(" +")?;
    let (new_part, _) = rest.split_once(" @@")?;
    let parse_side = |s: &str| -> Option<(usize, usize)> {
        match s.split_once(',') {
            Some((a, b)) => Some((a.parse().ok()?, b.parse().ok()?)),
            None => Some((s.parse().ok()?, 1)),
        }
    };
    let (os, oc) = parse_side(old_part)?;
    let (ns, nc) = parse_side(new_part)?;
    Some((os, oc, ns, nc))
}

/// Builds one hunk spanning every change between `old` and `new`, with up to
/// `context` unchanged lines on each side. Returns `None` when the texts are
/// equal. Interior unchanged lines between distant changes are kept as
/// context so the result is always a single valid hunk.
pub fn hunk_between(old: &str, new: &str, context: usize) -> Option<Hunk> {
    if old == new {
        return None;
    }
    let old_lines = split_keep_newlines(old);
    let new_lines = split_keep_newlines(new);
    let ops = line_diff_ops(&old_lines, &new_lines);

    let first_change = ops.iter().position(|op| !matches!(op, LineOp::Context(..)))?;
    let last_change = ops.iter().rposition(|op| !matches!(op, LineOp::Context(..)))?;
    let from = first_change.saturating_sub(context);
    let to = (last_change + 1 + context).min(ops.len());

    let mut lines = Vec::new();
    let mut old_start = None;
    let mut new_start = None;
    let mut old_count = 0;
    let mut new_count = 0;
    for op in &ops[from..to] {
        match *op {
            LineOp::Context(i, j) => {
                old_start.get_or_insert(i + 1);
                new_start.get_or_insert(j + 1);
                old_count += 1;
                new_count += 1;
                lines.push(HunkLine::Context(
                    old_lines[i].trim_end_matches('\n').to_string(),
                ));
            }
            LineOp::Remove(i) => {
                old_start.get_or_insert(i + 1);
                old_count += 1;
                lines.push(HunkLine::Remove(
                    old_lines[i].trim_end_matches('\n').to_string(),
                ));
            }
            LineOp::Add(j) => {
                new_start.get_or_insert(j + 1);
                new_count += 1;
                lines.push(HunkLine::Add(
                    new_lines[j].trim_end_matches('\n').to_string(),
                ));
            }
        }
    }

    // Pure-insertion hunks anchor after the preceding old line.
    let old_start = old_start.unwrap_or_else(|| {
        ops[..from]
            .iter()
            .filter(|op| !matches!(op, LineOp::Add(_)))
            .count()
    });
    let new_start = new_start.unwrap_or(1);

    let touches_old_end = old_count > 0 && old_start + old_count - 1 == old_lines.len();
    let touches_new_end = new_count > 0 && new_start + new_count - 1 == new_lines.len();
    Some(Hunk {
        old_start,
        old_count,
        new_start,
        new_count,
        lines,
        old_no_newline: touches_old_end && !old.is_empty() && !old.ends_with('\n'),
        new_no_newline: touches_new_end && !new.is_empty() && !new.ends_with('\n'),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_replace_round_trips() {
        let old = "a\nb\nc\n";
        let new = "a\nB\nc\n";
        let hunk = hunk_between(old, new, 3).unwrap();
        assert_eq!(hunk.header(), "@@ -1,3 +1,3 @@");
        assert_eq!(hunk.apply(old).unwrap(), new);
    }

    #[test]
    fn append_at_eof() {
        let old = "a\n";
        let new = "a\nb\n";
        let hunk = hunk_between(old, new, 3).unwrap();
        assert_eq!(hunk.apply(old).unwrap(), new);
    }

    #[test]
    fn no_trailing_newline_round_trips() {
        let old = "a\nb";
        let new = "a\nc";
        let hunk = hunk_between(old, new, 1).unwrap();
        let rendered = hunk.render();
        assert!(rendered.contains("\\ No newline at end of file"));
        let reparsed = Hunk::parse(&rendered).unwrap();
        assert_eq!(reparsed.apply(old).unwrap(), new);
    }

    #[test]
    fn render_parse_round_trip() {
        let old = "one\ntwo\nthree\nfour\n";
        let new = "one\n2\n2.5\nthree\nfour\n";
        let hunk = hunk_between(old, new, 2).unwrap();
        let reparsed = Hunk::parse(&hunk.render()).unwrap();
        assert_eq!(reparsed, hunk);
        assert_eq!(reparsed.apply(old).unwrap(), new);
    }

    #[test]
    fn count_mismatch_rejected() {
        let bad = "@@ -1,2 +1,1 @@\n-a\n";
        assert!(matches!(
            Hunk::parse(bad),
            Err(HunkError::CountMismatch { .. })
        ));
    }

    #[test]
    fn apply_verifies_context() {
        let old = "a\nb\nc\n";
        let new = "a\nB\nc\n";
        let hunk = hunk_between(old, new, 1).unwrap();
        assert!(matches!(
            hunk.apply("x\ny\nz\n"),
            Err(HunkError::ApplyMismatch { .. })
        ));
    }

    #[test]
    fn distant_changes_become_one_spanning_hunk() {
        let old = "1\n2\n3\n4\n5\n6\n7\n8\n9\n10\n";
        let new = "one\n2\n3\n4\n5\n6\n7\n8\n9\nten\n";
        let hunk = hunk_between(old, new, 0).unwrap();
        assert_eq!(hunk.old_start, 1);
        assert_eq!(hunk.old_count, 10);
        assert_eq!(hunk.apply(old).unwrap(), new);
    }

    #[test]
    fn empty_to_content() {
        let old = "";
        let new = "x\ny\n";
        let hunk = hunk_between(old, new, 3).unwrap();
        assert_eq!(hunk.apply(old).unwrap(), new);
    }
}
