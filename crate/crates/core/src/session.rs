//! Session state: documents, user actions, edit history, viewed snippets and
//! trigger debouncing.
//!
//! A session is a single-writer state machine over a logical millisecond
//! clock. Mutating actions append unified-diff edit records (undo appends an
//! `UndoErased` record rather than dropping history), viewed files land in a
//! bounded LRU buffer, and trigger-set actions arm a debounce timer that
//! fires once the clock advances past the window with no newer action.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{hunk_between, Hunk};
use crate::doc::{DocError, Document, Position, Range};
use crate::syntax::DiagnosticRecord;

pub const DEFAULT_DEBOUNCE_MS: u64 = 300;
pub const DEFAULT_HISTORY_CAPACITY: usize = 16;
pub const DEFAULT_HISTORY_BYTE_BUDGET: usize = 4096;
pub const DEFAULT_VIEWED_CAPACITY: usize = 8;

/// Context width used when recording edit hunks.
pub const HUNK_CONTEXT_LINES: usize = 3;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown document: {0}")]
    UnknownPath(String),
    #[error(transparent)]
    Doc(#[from] DocError),
    #[error("action timestamps must be non-decreasing: {prev} then {next}")]
    ClockWentBackwards { prev: u64, next: u64 },
    #[error("document {path} changed since parse: expected version {expected}, found {found}")]
    StaleVersion {
        path: String,
        expected: u64,
        found: u64,
    },
}

/// Everything a user can do to the workspace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UserAction {
    Insert { path: String, pos: Position, text: String },
    Delete { path: String, range: Range },
    Replace { path: String, range: Range, text: String },
    AutoIndent { path: String, line: u32 },
    Undo { path: String },
    Redo { path: String },
    EmptyLineInsert { path: String, line: u32 },
    CursorMove { path: String, pos: Position },
    SelectionChange { path: String, range: Range },
    SaveFile { path: String },
    ViewFile { path: String, range: Range },
}

impl UserAction {
    pub fn path(&self) -> &str {
        match self {
            UserAction::Insert { path, .. }
            | UserAction::Delete { path, .. }
            | UserAction::Replace { path, .. }
            | UserAction::AutoIndent { path, .. }
            | UserAction::Undo { path }
            | UserAction::Redo { path }
            | UserAction::EmptyLineInsert { path, .. }
            | UserAction::CursorMove { path, .. }
            | UserAction::SelectionChange { path, .. }
            | UserAction::SaveFile { path }
            | UserAction::ViewFile { path, .. } => path,
        }
    }

    pub fn kind(&self) -> ActionKind {
        match self {
            UserAction::Insert { .. } => ActionKind::Insert,
            UserAction::Delete { .. } => ActionKind::Delete,
            UserAction::Replace { .. } => ActionKind::Replace,
            UserAction::AutoIndent { .. } => ActionKind::AutoIndent,
            UserAction::Undo { .. } => ActionKind::Undo,
            UserAction::Redo { .. } => ActionKind::Redo,
            UserAction::EmptyLineInsert { .. } => ActionKind::EmptyLineInsert,
            UserAction::CursorMove { .. } => ActionKind::CursorMove,
            UserAction::SelectionChange { .. } => ActionKind::SelectionChange,
            UserAction::SaveFile { .. } => ActionKind::SaveFile,
            UserAction::ViewFile { .. } => ActionKind::ViewFile,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Insert,
    Delete,
    Replace,
    AutoIndent,
    Undo,
    Redo,
    EmptyLineInsert,
    CursorMove,
    SelectionChange,
    SaveFile,
    ViewFile,
}

impl ActionKind {
    /// The trigger action set: every edit-shaped action plus cursor
    /// movements and selection changes. Saves and file views never arm the
    /// debounce timer.
    pub fn is_trigger(self) -> bool {
        !matches!(self, ActionKind::SaveFile | ActionKind::ViewFile)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditOrigin {
    Typed,
    UndoErased,
    SuggestionApplied,
}

/// One recorded mutation: a single unified-diff hunk against the pre-edit
/// text of `file_path`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRecord {
    pub file_path: String,
    pub hunk: String,
    pub origin: EditOrigin,
    pub at_ms: u64,
}

impl EditRecord {
    /// Fenced rendering used in prompts; its length also drives the history
    /// byte budget.
    pub fn rendered(&self) -> String {
        let name = Path::new(&self.file_path)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.file_path.clone());
        let mut out = format!("```{}\n", name);
        out.push_str(&self.hunk);
        if !self.hunk.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("```\n");
        out
    }
}

/// Bounded, append-only edit history. Oldest records are evicted when the
/// capacity or the serialized byte budget is exceeded.
#[derive(Debug, Clone)]
pub struct EditHistory {
    records: Vec<EditRecord>,
    capacity: usize,
    byte_budget: usize,
}

impl EditHistory {
    pub fn new(capacity: usize, byte_budget: usize) -> Self {
        EditHistory {
            records: Vec::new(),
            capacity,
            byte_budget,
        }
    }

    pub fn push(&mut self, record: EditRecord) {
        self.records.push(record);
        while self.records.len() > self.capacity {
            self.records.remove(0);
        }
        while self.serialized_len() > self.byte_budget && self.records.len() > 1 {
            self.records.remove(0);
        }
    }

    pub fn serialized_len(&self) -> usize {
        self.records.iter().map(|r| r.rendered().len()).sum()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Immutable copy, most recent first.
    pub fn snapshot(&self) -> Vec<EditRecord> {
        self.records.iter().rev().cloned().collect()
    }
}

/// A recently viewed slice of a file, captured at view time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewedSnippet {
    pub path: String,
    pub range: Range,
    pub text: String,
    pub last_viewed: u64,
    pub relevance: f64,
}

#[derive(Debug, Clone)]
pub struct ViewedBuffer {
    snippets: Vec<ViewedSnippet>,
    capacity: usize,
}

impl ViewedBuffer {
    pub fn new(capacity: usize) -> Self {
        ViewedBuffer {
            snippets: Vec::new(),
            capacity,
        }
    }

    /// Insert or refresh (LRU keyed by path).
    pub fn note(&mut self, snippet: ViewedSnippet) {
        self.snippets.retain(|s| s.path != snippet.path);
        self.snippets.push(snippet);
        while self.snippets.len() > self.capacity {
            let oldest = self
                .snippets
                .iter()
                .enumerate()
                .min_by_key(|(_, s)| (s.last_viewed, s.path.clone()))
                .map(|(i, _)| i)
                .expect("non-empty");
            self.snippets.remove(oldest);
        }
    }

    pub fn snippets(&self) -> &[ViewedSnippet] {
        &self.snippets
    }

    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }
}

/// Emitted when the debounce window elapses after a trigger-set action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub document_path: String,
    pub cursor: Position,
    pub cause: ActionKind,
    pub fired_at: u64,
}

#[derive(Debug, Clone)]
struct PendingTrigger {
    path: String,
    cursor: Position,
    cause: ActionKind,
    armed_at: u64,
}

#[derive(Debug, Clone)]
struct UndoEntry {
    /// Range the applied edit occupies in the current text.
    range: Range,
    /// Text it replaced.
    removed: String,
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub debounce_ms: u64,
    pub history_capacity: usize,
    pub history_byte_budget: usize,
    pub viewed_capacity: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            debounce_ms: DEFAULT_DEBOUNCE_MS,
            history_capacity: DEFAULT_HISTORY_CAPACITY,
            history_byte_budget: DEFAULT_HISTORY_BYTE_BUDGET,
            viewed_capacity: DEFAULT_VIEWED_CAPACITY,
        }
    }
}

/// Result of applying one action.
#[derive(Debug, Clone, Default)]
pub struct ActionOutcome {
    /// Trigger fired by advancing the clock to this action's timestamp.
    pub trigger: Option<TriggerEvent>,
    /// Path and new version when the action mutated a document.
    pub mutated: Option<(String, u64)>,
    /// Set when an undo/redo found nothing to do (signal, not failure).
    pub noop: bool,
}

#[derive(Debug)]
pub struct Session {
    docs: BTreeMap<String, Document>,
    undo_stacks: BTreeMap<String, Vec<UndoEntry>>,
    redo_stacks: BTreeMap<String, Vec<UndoEntry>>,
    history: EditHistory,
    viewed: ViewedBuffer,
    diagnostics: Vec<DiagnosticRecord>,
    clock_ms: u64,
    pending: Option<PendingTrigger>,
    cursor: Option<(String, Position)>,
    selection: Option<(String, Range)>,
    config: SessionConfig,
}

impl Session {
    pub fn new(config: SessionConfig) -> Self {
        Session {
            docs: BTreeMap::new(),
            undo_stacks: BTreeMap::new(),
            redo_stacks: BTreeMap::new(),
            history: EditHistory::new(config.history_capacity, config.history_byte_budget),
            viewed: ViewedBuffer::new(config.viewed_capacity),
            diagnostics: Vec::new(),
            clock_ms: 0,
            pending: None,
            cursor: None,
            selection: None,
            config,
        }
    }

    pub fn with_files<I, K, V>(config: SessionConfig, files: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut session = Session::new(config);
        for (path, text) in files {
            session.add_document(path.into(), text.into());
        }
        session
    }

    pub fn add_document(&mut self, path: String, text: String) {
        self.docs.insert(path.clone(), Document::new(path, text));
    }

    pub fn document(&self, path: &str) -> Result<&Document, SessionError> {
        self.docs
            .get(path)
            .ok_or_else(|| SessionError::UnknownPath(path.to_string()))
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn cursor(&self) -> Option<&(String, Position)> {
        self.cursor.as_ref()
    }

    pub fn viewed(&self) -> &ViewedBuffer {
        &self.viewed
    }

    pub fn set_diagnostics(&mut self, diagnostics: Vec<DiagnosticRecord>) {
        self.diagnostics = diagnostics;
    }

    pub fn diagnostics(&self) -> &[DiagnosticRecord] {
        &self.diagnostics
    }

    /// Advances the logical clock, firing the pending trigger if its window
    /// elapsed at or before `to_ms`.
    pub fn advance_clock(&mut self, to_ms: u64) -> Option<TriggerEvent> {
        let mut fired = None;
        if let Some(pending) = &self.pending {
            let due = pending.armed_at + self.config.debounce_ms;
            if to_ms >= due {
                fired = Some(TriggerEvent {
                    document_path: pending.path.clone(),
                    cursor: pending.cursor,
                    cause: pending.cause,
                    fired_at: due,
                });
                self.pending = None;
            }
        }
        self.clock_ms = self.clock_ms.max(to_ms);
        fired
    }

    /// Applies one action at `at_ms`. Advancing to `at_ms` may fire the
    /// trigger armed by an earlier action; the fired event is returned in
    /// the outcome.
    pub fn apply_action(
        &mut self,
        action: &UserAction,
        at_ms: u64,
    ) -> Result<ActionOutcome, SessionError> {
        if at_ms < self.clock_ms {
            return Err(SessionError::ClockWentBackwards {
                prev: self.clock_ms,
                next: at_ms,
            });
        }
        let mut outcome = ActionOutcome {
            trigger: self.advance_clock(at_ms),
            ..Default::default()
        };

        let path = action.path().to_string();
        if !self.docs.contains_key(&path) {
            return Err(SessionError::UnknownPath(path));
        }

        match action {
            UserAction::Insert { path, pos, text } => {
                self.mutate(path, Range::point(*pos), text, EditOrigin::Typed, at_ms, &mut outcome)?;
            }
            UserAction::Delete { path, range } => {
                self.mutate(path, *range, "", EditOrigin::Typed, at_ms, &mut outcome)?;
            }
            UserAction::Replace { path, range, text } => {
                self.mutate(path, *range, text, EditOrigin::Typed, at_ms, &mut outcome)?;
            }
            UserAction::AutoIndent { path, line } => {
                let (range, indent) = {
                    let doc = self.document(path)?;
                    let line_text = doc.line_text(*line).ok_or(DocError::OutOfBounds {
                        path: path.clone(),
                        line: *line,
                        col: 0,
                    })?;
                    let current: String =
                        line_text.chars().take_while(|c| c.is_whitespace()).collect();
                    // Indentation comes from the nearest non-blank line above.
                    let mut target = String::new();
                    for prev in (0..*line).rev() {
                        match doc.line_text(prev) {
                            Some(text) if !text.trim().is_empty() => {
                                target = text.chars().take_while(|c| c.is_whitespace()).collect();
                                break;
                            }
                            _ => {}
                        }
                    }
                    if current == target {
                        (None, target)
                    } else {
                        (
                            Some(Range::new(
                                Position::new(*line, 0),
                                Position::new(*line, current.chars().count() as u32),
                            )),
                            target,
                        )
                    }
                };
                match range {
                    Some(range) => {
                        self.mutate(path, range, &indent, EditOrigin::Typed, at_ms, &mut outcome)?
                    }
                    None => outcome.noop = true,
                }
            }
            UserAction::Undo { path } => {
                match self.undo_stacks.get_mut(path).and_then(|s| s.pop()) {
                    Some(entry) => {
                        let doc = self.docs.get_mut(path).expect("checked above");
                        let before = doc.text().to_string();
                        let (redone, new_range) = doc.splice(entry.range, &entry.removed)?;
                        let after = doc.text().to_string();
                        self.redo_stacks.entry(path.clone()).or_default().push(UndoEntry {
                            range: new_range,
                            removed: redone,
                        });
                        self.record_edit(path, &before, &after, EditOrigin::UndoErased, at_ms);
                        self.cursor = Some((path.clone(), entry.range.start));
                        outcome.mutated = Some((path.clone(), self.docs[path].version()));
                    }
                    None => outcome.noop = true,
                }
            }
            UserAction::Redo { path } => {
                match self.redo_stacks.get_mut(path).and_then(|s| s.pop()) {
                    Some(entry) => {
                        let doc = self.docs.get_mut(path).expect("checked above");
                        let before = doc.text().to_string();
                        let (undone, new_range) = doc.splice(entry.range, &entry.removed)?;
                        let after = doc.text().to_string();
                        self.undo_stacks.entry(path.clone()).or_default().push(UndoEntry {
                            range: new_range,
                            removed: undone,
                        });
                        self.record_edit(path, &before, &after, EditOrigin::Typed, at_ms);
                        self.cursor = Some((path.clone(), new_range.end));
                        outcome.mutated = Some((path.clone(), self.docs[path].version()));
                    }
                    None => outcome.noop = true,
                }
            }
            UserAction::EmptyLineInsert { path, line } => {
                let pos = {
                    let doc = self.document(path)?;
                    if doc.line_text(*line).is_none() {
                        return Err(SessionError::Doc(DocError::OutOfBounds {
                            path: path.clone(),
                            line: *line,
                            col: 0,
                        }));
                    }
                    Position::new(*line, 0)
                };
                self.mutate(path, Range::point(pos), "\n", EditOrigin::Typed, at_ms, &mut outcome)?;
                self.cursor = Some((path.clone(), pos));
            }
            UserAction::CursorMove { path, pos } => {
                self.document(path)?.offset_of(*pos)?;
                self.cursor = Some((path.clone(), *pos));
            }
            UserAction::SelectionChange { path, range } => {
                self.document(path)?.span_of(*range)?;
                self.selection = Some((path.clone(), *range));
                self.cursor = Some((path.clone(), range.end));
            }
            UserAction::SaveFile { .. } => {}
            UserAction::ViewFile { path, range } => {
                self.note_view(path, *range, at_ms)?;
            }
        }

        let kind = action.kind();
        if kind.is_trigger() {
            let cursor = self
                .cursor
                .clone()
                .map(|(_, p)| p)
                .unwrap_or(Position::new(0, 0));
            self.pending = Some(PendingTrigger {
                path: action.path().to_string(),
                cursor,
                cause: kind,
                armed_at: at_ms,
            });
        }
        Ok(outcome)
    }

    fn mutate(
        &mut self,
        path: &str,
        range: Range,
        replacement: &str,
        origin: EditOrigin,
        at_ms: u64,
        outcome: &mut ActionOutcome,
    ) -> Result<(), SessionError> {
        let doc = self
            .docs
            .get_mut(path)
            .ok_or_else(|| SessionError::UnknownPath(path.to_string()))?;
        let before = doc.text().to_string();
        let (removed, new_range) = doc.splice(range, replacement)?;
        let after = doc.text().to_string();
        self.undo_stacks.entry(path.to_string()).or_default().push(UndoEntry {
            range: new_range,
            removed,
        });
        self.redo_stacks.remove(path);
        self.record_edit(path, &before, &after, origin, at_ms);
        self.cursor = Some((path.to_string(), new_range.end));
        outcome.mutated = Some((path.to_string(), self.docs[path].version()));
        Ok(())
    }

    fn record_edit(&mut self, path: &str, before: &str, after: &str, origin: EditOrigin, at_ms: u64) {
        if let Some(hunk) = hunk_between(before, after, HUNK_CONTEXT_LINES) {
            self.history.push(EditRecord {
                file_path: path.to_string(),
                hunk: hunk.render(),
                origin,
                at_ms,
            });
        }
    }

    /// Registers a viewed snippet; the excerpt is captured from the current
    /// document text.
    pub fn note_view(&mut self, path: &str, range: Range, at_ms: u64) -> Result<(), SessionError> {
        let doc = self.document(path)?;
        let clamped = doc.clamp_range(range);
        let text = doc.slice(clamped)?.to_string();
        self.viewed.note(ViewedSnippet {
            path: path.to_string(),
            range: clamped,
            text,
            last_viewed: at_ms,
            relevance: 0.0,
        });
        self.clock_ms = self.clock_ms.max(at_ms);
        Ok(())
    }

    /// Edit history snapshot, most recent first.
    pub fn snapshot_history(&self) -> Vec<EditRecord> {
        self.history.snapshot()
    }

    pub fn history(&self) -> &EditHistory {
        &self.history
    }

    /// Applies a batch of document-coordinate edits atomically as one
    /// suggestion acceptance: one edit record, one pending trigger (the
    /// acceptance behaves like a text replacement).
    ///
    /// `expected_version` guards against applying a suggestion parsed from a
    /// stale document.
    pub fn apply_suggestion_edits(
        &mut self,
        path: &str,
        expected_version: u64,
        edits: &[(Range, String)],
        cursor_after: Option<Position>,
        at_ms: u64,
    ) -> Result<ActionOutcome, SessionError> {
        if at_ms < self.clock_ms {
            return Err(SessionError::ClockWentBackwards {
                prev: self.clock_ms,
                next: at_ms,
            });
        }
        let mut outcome = ActionOutcome {
            trigger: self.advance_clock(at_ms),
            ..Default::default()
        };
        let doc = self
            .docs
            .get_mut(path)
            .ok_or_else(|| SessionError::UnknownPath(path.to_string()))?;
        if doc.version() != expected_version {
            return Err(SessionError::StaleVersion {
                path: path.to_string(),
                expected: expected_version,
                found: doc.version(),
            });
        }
        let before = doc.text().to_string();
        // Last-to-first so earlier ranges stay valid.
        let mut sorted: Vec<&(Range, String)> = edits.iter().collect();
        sorted.sort_by_key(|(range, _)| (range.start, range.end));
        for (range, replacement) in sorted.iter().rev() {
            doc.splice(*range, replacement)?;
        }
        let after = doc.text().to_string();
        if before != after {
            let whole = doc.full_range();
            let (restore_range, restore_text) = affected_range(&before, &after)
                .unwrap_or((whole, before.clone()));
            self.undo_stacks.entry(path.to_string()).or_default().push(UndoEntry {
                range: restore_range,
                removed: restore_text,
            });
            self.redo_stacks.remove(path);
            self.record_edit(path, &before, &after, EditOrigin::SuggestionApplied, at_ms);
            outcome.mutated = Some((path.to_string(), self.docs[path].version()));
        } else {
            outcome.noop = true;
        }
        let cursor = cursor_after
            .or_else(|| self.cursor.as_ref().map(|(_, p)| *p))
            .unwrap_or(Position::new(0, 0));
        self.cursor = Some((path.to_string(), cursor));
        if before != after {
            self.pending = Some(PendingTrigger {
                path: path.to_string(),
                cursor,
                cause: ActionKind::Replace,
                armed_at: at_ms,
            });
        }
        Ok(outcome)
    }

    /// Stable digest of the full mutable state; used to verify isolation
    /// between harness runs.
    pub fn state_digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for doc in self.docs.values() {
            hasher.update(doc.path().as_bytes());
            hasher.update([0]);
            hasher.update(doc.text().as_bytes());
            hasher.update([0]);
            hasher.update(doc.version().to_le_bytes());
        }
        for record in &self.history.records {
            hasher.update(record.rendered().as_bytes());
        }
        for snippet in self.viewed.snippets() {
            hasher.update(snippet.path.as_bytes());
            hasher.update(snippet.text.as_bytes());
            hasher.update(snippet.last_viewed.to_le_bytes());
        }
        hasher.update(self.clock_ms.to_le_bytes());
        format!("{:x}", hasher.finalize())
    }
}

/// Minimal restore info for a whole-document change: the range the new text
/// region occupies and the old text it replaced, trimmed to the changed area.
fn affected_range(before: &str, after: &str) -> Option<(Range, String)> {
    if before == after {
        return None;
    }
    let b = before.as_bytes();
    let a = after.as_bytes();
    let mut prefix = 0;
    while prefix < b.len() && prefix < a.len() && b[prefix] == a[prefix] {
        prefix += 1;
    }
    // Keep prefix on a char boundary.
    while prefix > 0 && !after.is_char_boundary(prefix) {
        prefix -= 1;
    }
    let mut suffix = 0;
    while suffix < b.len() - prefix && suffix < a.len() - prefix
        && b[b.len() - 1 - suffix] == a[a.len() - 1 - suffix]
    {
        suffix += 1;
    }
    while suffix > 0 && !after.is_char_boundary(a.len() - suffix) {
        suffix -= 1;
    }
    let doc_after = Document::new("", after.to_string());
    let start = doc_after.position_of(prefix);
    let end = doc_after.position_of(a.len() - suffix);
    let removed = before[prefix..b.len() - suffix].to_string();
    Some((Range::new(start, end), removed))
}

/// Validates that an edit record's hunk parses and its header counts match
/// the body (the workspace-core hunk invariant).
pub fn validate_record_hunk(record: &EditRecord) -> Result<Hunk, crate::diff::HunkError> {
    Hunk::parse(&record.hunk)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session_with(path: &str, text: &str) -> Session {
        Session::with_files(SessionConfig::default(), [(path, text)])
    }

    fn insert(path: &str, line: u32, col: u32, text: &str) -> UserAction {
        UserAction::Insert {
            path: path.into(),
            pos: Position::new(line, col),
            text: text.into(),
        }
    }

    #[test]
    fn insert_mutates_and_records() {
        let mut s = session_with("a.java", "class A {\n}\n");
        s.apply_action(&insert("a.java", 1, 0, "x"), 0).unwrap();
        assert_eq!(s.document("a.java").unwrap().text(), "class A {\nx}\n");
        assert_eq!(s.snapshot_history().len(), 1);
    }

    #[test]
    fn debounced_burst_fires_once() {
        let mut s = session_with("a.java", "line\n");
        for (i, t) in [0u64, 50, 100].iter().enumerate() {
            let out = s
                .apply_action(&insert("a.java", 0, i as u32, "x"), *t)
                .unwrap();
            assert!(out.trigger.is_none());
        }
        let evt = s.advance_clock(400).expect("trigger after window");
        assert_eq!(evt.fired_at, 400);
        assert_eq!(evt.cause, ActionKind::Insert);
        assert!(s.advance_clock(10_000).is_none());
    }

    #[test]
    fn spaced_actions_fire_each() {
        let mut s = session_with("a.java", "line\n");
        let mut events = 0;
        for (i, t) in [0u64, 400, 800].iter().enumerate() {
            let out = s
                .apply_action(&insert("a.java", 0, i as u32, "x"), *t)
                .unwrap();
            if out.trigger.is_some() {
                events += 1;
            }
        }
        if s.advance_clock(2_000).is_some() {
            events += 1;
        }
        assert_eq!(events, 3);
    }

    #[test]
    fn undo_restores_text_but_history_is_append_only() {
        let mut s = session_with("a.java", "public class A {\n}\n");
        let before = s.document("a.java").unwrap().text().to_string();
        s.apply_action(
            &insert("a.java", 1, 0, "  String apiKey = \"sk-test-123456\";\n"),
            0,
        )
        .unwrap();
        s.apply_action(&UserAction::Undo { path: "a.java".into() }, 10)
            .unwrap();
        assert_eq!(s.document("a.java").unwrap().text(), before);
        let history = s.snapshot_history();
        assert_eq!(history.len(), 2);
        assert_eq!(history[0].origin, EditOrigin::UndoErased);
        assert_eq!(history[1].origin, EditOrigin::Typed);
        // The erased content is retained in both hunks.
        assert!(history[0].hunk.contains("sk-test-123456"));
    }

    #[test]
    fn undo_with_empty_stack_is_noop_not_error() {
        let mut s = session_with("a.java", "x\n");
        let out = s
            .apply_action(&UserAction::Undo { path: "a.java".into() }, 0)
            .unwrap();
        assert!(out.noop);
        assert!(out.mutated.is_none());
    }

    #[test]
    fn redo_after_undo_round_trips() {
        let mut s = session_with("a.java", "a\n");
        s.apply_action(&insert("a.java", 0, 1, "b"), 0).unwrap();
        let edited = s.document("a.java").unwrap().text().to_string();
        s.apply_action(&UserAction::Undo { path: "a.java".into() }, 1)
            .unwrap();
        s.apply_action(&UserAction::Redo { path: "a.java".into() }, 2)
            .unwrap();
        assert_eq!(s.document("a.java").unwrap().text(), edited);
    }

    #[test]
    fn viewed_buffer_is_lru_with_refresh() {
        let paths: Vec<String> = (0..9).map(|i| format!("f{i}.java")).collect();
        let mut s = Session::with_files(
            SessionConfig::default(),
            paths.iter().map(|p| (p.clone(), format!("// {p}\n"))),
        );
        for (i, p) in paths.iter().take(8).enumerate() {
            s.note_view(p, Range::new(Position::new(0, 0), Position::new(0, 2)), i as u64)
                .unwrap();
        }
        assert_eq!(s.viewed().len(), 8);
        // Refresh the oldest; then a 9th view evicts f1 (now the oldest).
        s.note_view(&paths[0], Range::new(Position::new(0, 0), Position::new(0, 2)), 100)
            .unwrap();
        s.note_view(&paths[8], Range::new(Position::new(0, 0), Position::new(0, 2)), 101)
            .unwrap();
        assert_eq!(s.viewed().len(), 8);
        assert!(s.viewed().snippets().iter().all(|sn| sn.path != "f1.java"));
        assert!(s.viewed().snippets().iter().any(|sn| sn.path == "f0.java"));
    }

    #[test]
    fn snapshot_is_reverse_chronological() {
        let mut s = session_with("a.java", "x\n");
        s.apply_action(&insert("a.java", 0, 0, "1"), 1).unwrap();
        s.apply_action(&insert("a.java", 0, 0, "2"), 2).unwrap();
        let snap = s.snapshot_history();
        assert_eq!(snap[0].at_ms, 2);
        assert_eq!(snap[1].at_ms, 1);
    }

    #[test]
    fn history_capacity_evicts_oldest() {
        let mut cfg = SessionConfig::default();
        cfg.history_capacity = 3;
        let mut s = Session::with_files(cfg, [("a.java", "x\n")]);
        for t in 0..5u64 {
            s.apply_action(&insert("a.java", 0, 0, "y"), t).unwrap();
        }
        let snap = s.snapshot_history();
        assert_eq!(snap.len(), 3);
        assert_eq!(snap.last().unwrap().at_ms, 2);
    }

    #[test]
    fn record_hunks_are_valid_and_reapply() {
        let mut s = session_with("a.java", "one\ntwo\nthree\n");
        let before = s.document("a.java").unwrap().text().to_string();
        s.apply_action(
            &UserAction::Replace {
                path: "a.java".into(),
                range: Range::new(Position::new(1, 0), Position::new(1, 3)),
                text: "TWO".into(),
            },
            0,
        )
        .unwrap();
        let after = s.document("a.java").unwrap().text().to_string();
        let record = &s.snapshot_history()[0];
        let hunk = validate_record_hunk(record).unwrap();
        assert_eq!(hunk.apply(&before).unwrap(), after);
    }

    #[test]
    fn empty_line_insert_and_autoindent() {
        let mut s = session_with("a.java", "  a\nb\n");
        s.apply_action(&UserAction::EmptyLineInsert { path: "a.java".into(), line: 1 }, 0)
            .unwrap();
        assert_eq!(s.document("a.java").unwrap().text(), "  a\n\nb\n");
        s.apply_action(&UserAction::AutoIndent { path: "a.java".into(), line: 2 }, 1)
            .unwrap();
        assert_eq!(s.document("a.java").unwrap().text(), "  a\n\n  b\n");
    }

    #[test]
    fn cursor_move_arms_trigger() {
        let mut s = session_with("a.java", "abc\n");
        s.apply_action(
            &UserAction::CursorMove { path: "a.java".into(), pos: Position::new(0, 2) },
            0,
        )
        .unwrap();
        let evt = s.advance_clock(300).unwrap();
        assert_eq!(evt.cause, ActionKind::CursorMove);
        assert_eq!(evt.cursor, Position::new(0, 2));
    }

    #[test]
    fn save_and_view_do_not_arm_trigger() {
        let mut s = session_with("a.java", "abc\n");
        s.apply_action(&UserAction::SaveFile { path: "a.java".into() }, 0)
            .unwrap();
        s.apply_action(
            &UserAction::ViewFile {
                path: "a.java".into(),
                range: Range::new(Position::new(0, 0), Position::new(0, 3)),
            },
            1,
        )
        .unwrap();
        assert!(s.advance_clock(10_000).is_none());
    }

    #[test]
    fn stale_version_rejected() {
        let mut s = session_with("a.java", "abc\n");
        let v = s.document("a.java").unwrap().version();
        s.apply_action(&insert("a.java", 0, 0, "x"), 0).unwrap();
        let err = s
            .apply_suggestion_edits(
                "a.java",
                v,
                &[(Range::point(Position::new(0, 0)), "y".to_string())],
                None,
                1,
            )
            .unwrap_err();
        assert!(matches!(err, SessionError::StaleVersion { .. }));
    }
}
