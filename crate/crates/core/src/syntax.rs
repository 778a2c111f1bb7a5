//! Declaration-level syntax analysis for Java-like sources.
//!
//! The grammar is deliberately shallow: packages, imports, type
//! declarations, members (methods/fields/annotations) and brace blocks.
//! Anything else becomes an opaque statement node, so real-world noise never
//! hard-fails the parse. The tree feeds the enclosing-node walk for
//! structural context, the file outline and the workspace symbol index.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc::{Document, Range, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum NodeKind {
    CompilationUnit,
    PackageDecl,
    ImportDecl,
    ClassDecl,
    InterfaceDecl,
    MethodDecl,
    FieldDecl,
    Annotation,
    Block,
    Statement,
}

impl NodeKind {
    pub fn is_declaration(self) -> bool {
        matches!(
            self,
            NodeKind::ClassDecl | NodeKind::InterfaceDecl | NodeKind::MethodDecl | NodeKind::FieldDecl
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxNode {
    pub kind: NodeKind,
    pub name: Option<String>,
    pub span: Span,
    pub signature: Option<String>,
    pub children: Vec<SyntaxNode>,
}

impl SyntaxNode {
    fn leaf(kind: NodeKind, span: Span) -> Self {
        SyntaxNode {
            kind,
            name: None,
            span,
            signature: None,
            children: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlineEntry {
    pub kind: NodeKind,
    pub name: String,
    pub signature: String,
    pub line: u32,
    pub depth: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolEntry {
    pub path: String,
    pub kind: NodeKind,
    pub signature: String,
    pub line: u32,
}

/// Workspace-wide multimap from declared name to defining entries.
#[derive(Debug, Clone, Default)]
pub struct SymbolIndex {
    map: BTreeMap<String, Vec<SymbolEntry>>,
}

impl SymbolIndex {
    pub fn lookup(&self, name: &str) -> &[SymbolEntry] {
        self.map.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub path: String,
    pub range: Range,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("parse error at {line}:{col}: {message}")]
pub struct ParseError {
    /// 0-based.
    pub line: u32,
    pub col: u32,
    pub message: String,
}

const MODIFIERS: &[&str] = &[
    "public", "private", "protected", "static", "final", "abstract", "default", "synchronized",
    "native", "transient", "volatile", "strictfp", "sealed",
];

const JAVA_KEYWORDS: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally", "float",
    "for", "goto", "if", "implements", "import", "instanceof", "int", "interface", "long",
    "native", "new", "package", "private", "protected", "public", "return", "short", "static",
    "strictfp", "super", "switch", "synchronized", "this", "throw", "throws", "transient", "try",
    "void", "volatile", "while", "var", "record", "sealed", "permits", "true", "false", "null",
];

const CONTROL_KEYWORDS: &[&str] = &[
    "if", "else", "for", "while", "do", "switch", "try", "catch", "finally", "return", "throw",
    "new", "case", "break", "continue", "assert", "super", "this",
];

/// Replaces comments and string/char literal bytes with spaces, preserving
/// newlines, so structural scans never trip over quoted braces.
fn mask_source(src: &str) -> Vec<u8> {
    #[derive(PartialEq)]
    enum State {
        Normal,
        Line,
        Block,
        Str,
        Chr,
    }
    let bytes = src.as_bytes();
    let mut mask = bytes.to_vec();
    let mut state = State::Normal;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match state {
            State::Normal => {
                if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
                    state = State::Line;
                    mask[i] = b' ';
                } else if b == b'/' && bytes.get(i + 1) == Some(&b'*') {
                    state = State::Block;
                    mask[i] = b' ';
                } else if b == b'"' {
                    state = State::Str;
                    mask[i] = b' ';
                } else if b == b'\'' {
                    state = State::Chr;
                    mask[i] = b' ';
                }
            }
            State::Line => {
                if b == b'\n' {
                    state = State::Normal;
                } else {
                    mask[i] = b' ';
                }
            }
            State::Block => {
                if b == b'*' && bytes.get(i + 1) == Some(&b'/') {
                    mask[i] = b' ';
                    mask[i + 1] = b' ';
                    i += 1;
                    state = State::Normal;
                } else if b != b'\n' {
                    mask[i] = b' ';
                }
            }
            State::Str => {
                if b == b'\\' {
                    mask[i] = b' ';
                    if i + 1 < bytes.len() && bytes[i + 1] != b'\n' {
                        mask[i + 1] = b' ';
                        i += 1;
                    }
                } else if b == b'"' {
                    mask[i] = b' ';
                    state = State::Normal;
                } else if b != b'\n' {
                    mask[i] = b' ';
                }
            }
            State::Chr => {
                if b == b'\\' {
                    mask[i] = b' ';
                    if i + 1 < bytes.len() && bytes[i + 1] != b'\n' {
                        mask[i + 1] = b' ';
                        i += 1;
                    }
                } else if b == b'\'' {
                    mask[i] = b' ';
                    state = State::Normal;
                } else if b != b'\n' {
                    mask[i] = b' ';
                }
            }
        }
        i += 1;
    }
    mask
}

struct Parser<'a> {
    src: &'a str,
    mask: Vec<u8>,
}

impl<'a> Parser<'a> {
    fn error_at(&self, offset: usize, message: impl Into<String>) -> ParseError {
        let doc = Document::new("", self.src.to_string());
        let pos = doc.position_of(offset);
        ParseError {
            line: pos.line,
            col: pos.col,
            message: message.into(),
        }
    }

    fn skip_ws(&self, mut pos: usize, end: usize) -> usize {
        while pos < end && (self.mask[pos] as char).is_ascii_whitespace() {
            pos += 1;
        }
        pos
    }

    fn word_at(&self, pos: usize, end: usize) -> Option<&'a str> {
        if pos >= end {
            return None;
        }
        let c = self.mask[pos] as char;
        if !(c.is_ascii_alphabetic() || c == '_' || c == '$') {
            return None;
        }
        let mut j = pos;
        while j < end {
            let c = self.mask[j] as char;
            if c.is_ascii_alphanumeric() || c == '_' || c == '$' {
                j += 1;
            } else {
                break;
            }
        }
        Some(&self.src[pos..j])
    }

    /// Matching close brace for the `{` at `open`, honoring nesting.
    fn match_brace(&self, open: usize, end: usize) -> Result<usize, ParseError> {
        debug_assert_eq!(self.mask[open], b'{');
        let mut depth = 0usize;
        for i in open..end {
            match self.mask[i] {
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(i);
                    }
                }
                _ => {}
            }
        }
        Err(self.error_at(open, "unbalanced braces: unclosed block"))
    }

    /// First of `;`, `{`, `=`, `(` at bracket depth zero in `[pos, end)`.
    fn find_delimiter(&self, pos: usize, end: usize) -> Option<(usize, u8)> {
        let mut paren = 0i32;
        let mut bracket = 0i32;
        for i in pos..end {
            match self.mask[i] {
                b'(' if paren == 0 && bracket == 0 => return Some((i, b'(')),
                b'(' => paren += 1,
                b')' => paren -= 1,
                b'[' => bracket += 1,
                b']' => bracket -= 1,
                b';' | b'{' | b'=' if paren == 0 && bracket == 0 => {
                    return Some((i, self.mask[i]))
                }
                b'}' if paren == 0 && bracket == 0 => return Some((i, b'}')),
                _ => {}
            }
        }
        None
    }

    /// Scans to the `;` ending a field initializer, skipping (), [], {}.
    fn find_statement_end(&self, pos: usize, end: usize) -> Option<usize> {
        let mut depth = 0i32;
        for i in pos..end {
            match self.mask[i] {
                b'(' | b'[' | b'{' => depth += 1,
                b')' | b']' | b'}' => depth -= 1,
                b';' if depth <= 0 => return Some(i),
                _ => {}
            }
        }
        None
    }

    fn parse_annotation(&self, pos: usize, end: usize) -> Result<(SyntaxNode, usize), ParseError> {
        debug_assert_eq!(self.mask[pos], b'@');
        let mut cur = self.skip_ws(pos + 1, end);
        let mut name = None;
        while let Some(word) = self.word_at(cur, end) {
            name = Some(word.to_string());
            cur += word.len();
            if cur < end && self.mask[cur] == b'.' {
                cur += 1;
            } else {
                break;
            }
        }
        let after_name = cur;
        let probe = self.skip_ws(cur, end);
        if probe < end && self.mask[probe] == b'(' {
            let mut depth = 0i32;
            let mut close = None;
            for i in probe..end {
                match self.mask[i] {
                    b'(' => depth += 1,
                    b')' => {
                        depth -= 1;
                        if depth == 0 {
                            close = Some(i);
                            break;
                        }
                    }
                    _ => {}
                }
            }
            let close = close.ok_or_else(|| self.error_at(probe, "unclosed annotation arguments"))?;
            cur = close + 1;
        } else {
            cur = after_name;
        }
        let mut node = SyntaxNode::leaf(NodeKind::Annotation, Span::new(pos, cur));
        node.name = name;
        Ok((node, cur))
    }

    fn parse_members(
        &self,
        mut pos: usize,
        end: usize,
        top_level: bool,
    ) -> Result<Vec<SyntaxNode>, ParseError> {
        let mut nodes = Vec::new();
        loop {
            pos = self.skip_ws(pos, end);
            if pos >= end {
                break;
            }
            let start = pos;

            // Stray closer at this level: tolerate and move on.
            if self.mask[pos] == b'}' {
                pos += 1;
                continue;
            }

            let mut annotations = Vec::new();
            while pos < end && self.mask[pos] == b'@' {
                // `@interface` introduces an annotation type, not a marker.
                let after = self.skip_ws(pos + 1, end);
                if self.word_at(after, end) == Some("interface") {
                    break;
                }
                let (node, next) = self.parse_annotation(pos, end)?;
                annotations.push(node);
                pos = self.skip_ws(next, end);
            }

            if pos >= end {
                nodes.extend(annotations);
                break;
            }

            if top_level {
                if self.word_at(pos, end) == Some("package") {
                    let semi = self
                        .find_statement_end(pos, end)
                        .ok_or_else(|| self.error_at(pos, "unterminated package declaration"))?;
                    let mut node = SyntaxNode::leaf(NodeKind::PackageDecl, Span::new(start, semi + 1));
                    node.name = Some(normalize_ws(&self.src[pos + "package".len()..semi]));
                    nodes.push(node);
                    pos = semi + 1;
                    continue;
                }
                if self.word_at(pos, end) == Some("import") {
                    let semi = self
                        .find_statement_end(pos, end)
                        .ok_or_else(|| self.error_at(pos, "unterminated import declaration"))?;
                    let mut node = SyntaxNode::leaf(NodeKind::ImportDecl, Span::new(start, semi + 1));
                    node.name = Some(normalize_ws(&self.src[pos + "import".len()..semi]));
                    nodes.push(node);
                    pos = semi + 1;
                    continue;
                }
            }

            let Some((delim_pos, delim)) = self.find_delimiter(pos, end) else {
                // Trailing junk without structure: opaque statement.
                nodes.push(SyntaxNode::leaf(NodeKind::Statement, Span::new(start, end)));
                pos = end;
                continue;
            };

            let head_words = self.words_in(pos, delim_pos);
            let type_kw = head_words
                .iter()
                .find(|(w, _)| matches!(*w, "class" | "interface" | "enum" | "record"))
                .copied();

            if let Some((kw, kw_pos)) = type_kw {
                let name = self
                    .word_at(self.skip_ws(kw_pos + kw.len(), end), end)
                    .map(str::to_string);
                // Body opens at the next top-depth `{`.
                let brace = if delim == b'{' {
                    delim_pos
                } else {
                    match self.find_delimiter(delim_pos + 1, end) {
                        Some((p, b'{')) => p,
                        _ => {
                            return Err(self.error_at(pos, format!("{kw} declaration without body")))
                        }
                    }
                };
                let close = self.match_brace(brace, end)?;
                let mut children = annotations;
                children.extend(self.parse_members(brace + 1, close, false)?);
                let kind = if kw == "interface" {
                    NodeKind::InterfaceDecl
                } else {
                    NodeKind::ClassDecl
                };
                let mut node = SyntaxNode {
                    kind,
                    name: name.clone(),
                    span: Span::new(start, close + 1),
                    signature: name.map(|n| {
                        let label = if kind == NodeKind::InterfaceDecl { "interface" } else { "class" };
                        format!("{label} {n}")
                    }),
                    children,
                };
                node.children.sort_by_key(|c| c.span.start);
                nodes.push(node);
                pos = close + 1;
                continue;
            }

            match delim {
                b'(' => {
                    let name = head_words.last().map(|(w, _)| w.to_string());
                    let is_control = name
                        .as_deref()
                        .map(|n| CONTROL_KEYWORDS.contains(&n))
                        .unwrap_or(true);
                    // Find the matching `)`.
                    let mut depth = 0i32;
                    let mut rparen = None;
                    for i in delim_pos..end {
                        match self.mask[i] {
                            b'(' => depth += 1,
                            b')' => {
                                depth -= 1;
                                if depth == 0 {
                                    rparen = Some(i);
                                    break;
                                }
                            }
                            _ => {}
                        }
                    }
                    let rparen =
                        rparen.ok_or_else(|| self.error_at(delim_pos, "unclosed parameter list"))?;
                    // After params: throws clause, then `{` body or `;`.
                    let mut cur = self.skip_ws(rparen + 1, end);
                    while let Some(word) = self.word_at(cur, end) {
                        cur = self.skip_ws(cur + word.len(), end);
                        while cur < end && (self.mask[cur] == b',' || self.mask[cur] == b'.') {
                            cur = self.skip_ws(cur + 1, end);
                            if let Some(w2) = self.word_at(cur, end) {
                                cur = self.skip_ws(cur + w2.len(), end);
                            }
                        }
                    }
                    if is_control {
                        // Opaque: consume through body or statement end.
                        let stmt_end = if cur < end && self.mask[cur] == b'{' {
                            self.match_brace(cur, end)? + 1
                        } else {
                            self.find_statement_end(cur, end).map(|p| p + 1).unwrap_or(end)
                        };
                        nodes.push(SyntaxNode::leaf(NodeKind::Statement, Span::new(start, stmt_end)));
                        pos = stmt_end;
                        continue;
                    }
                    let sig_start = first_non_modifier(&head_words).unwrap_or(pos);
                    let signature = normalize_ws(&self.src[sig_start..rparen + 1]);
                    let (span_end, body) = if cur < end && self.mask[cur] == b'{' {
                        let close = self.match_brace(cur, end)?;
                        let mut block = SyntaxNode::leaf(NodeKind::Block, Span::new(cur, close + 1));
                        block.children = self.parse_statements(cur + 1, close)?;
                        (close + 1, Some(block))
                    } else if cur < end && self.mask[cur] == b';' {
                        (cur + 1, None)
                    } else {
                        (cur.min(end), None)
                    };
                    let mut children = annotations;
                    children.extend(body);
                    let mut node = SyntaxNode {
                        kind: NodeKind::MethodDecl,
                        name,
                        span: Span::new(start, span_end),
                        signature: Some(signature),
                        children,
                    };
                    node.children.sort_by_key(|c| c.span.start);
                    nodes.push(node);
                    pos = span_end;
                }
                b'=' | b';' => {
                    let semi = if delim == b';' {
                        delim_pos
                    } else {
                        self.find_statement_end(delim_pos, end)
                            .ok_or_else(|| self.error_at(delim_pos, "unterminated field initializer"))?
                    };
                    let name = head_words.last().map(|(w, _)| w.to_string());
                    let looks_like_decl = head_words.len() >= 2
                        && name
                            .as_deref()
                            .map(|n| !JAVA_KEYWORDS.contains(&n))
                            .unwrap_or(false);
                    if looks_like_decl {
                        let sig_start = first_non_modifier(&head_words).unwrap_or(pos);
                        let signature = normalize_ws(&self.src[sig_start..semi]);
                        let mut node = SyntaxNode {
                            kind: NodeKind::FieldDecl,
                            name,
                            span: Span::new(start, semi + 1),
                            signature: Some(signature),
                            children: annotations,
                        };
                        node.children.sort_by_key(|c| c.span.start);
                        nodes.push(node);
                    } else {
                        nodes.push(SyntaxNode::leaf(NodeKind::Statement, Span::new(start, semi + 1)));
                    }
                    pos = semi + 1;
                }
                b'{' => {
                    // Initializer block or other braced construct.
                    let close = self.match_brace(delim_pos, end)?;
                    let mut block = SyntaxNode::leaf(NodeKind::Block, Span::new(start, close + 1));
                    block.children = self.parse_statements(delim_pos + 1, close)?;
                    nodes.push(block);
                    pos = close + 1;
                }
                b'}' => {
                    // Handled at loop top next iteration.
                    pos = delim_pos;
                }
                _ => unreachable!(),
            }
        }
        Ok(nodes)
    }

    /// Splits a block interior into opaque statements and nested blocks.
    fn parse_statements(&self, mut pos: usize, end: usize) -> Result<Vec<SyntaxNode>, ParseError> {
        let mut nodes = Vec::new();
        let mut seg_start: Option<usize> = None;
        let mut paren = 0i32;
        while pos < end {
            let b = self.mask[pos];
            match b {
                b'(' | b'[' => {
                    paren += 1;
                    seg_start.get_or_insert(pos);
                    pos += 1;
                }
                b')' | b']' => {
                    paren -= 1;
                    pos += 1;
                }
                b';' if paren <= 0 => {
                    let start = seg_start.take().unwrap_or(pos);
                    nodes.push(SyntaxNode::leaf(NodeKind::Statement, Span::new(start, pos + 1)));
                    pos += 1;
                }
                b'{' if paren <= 0 => {
                    let close = self.match_brace(pos, end)?;
                    let start = seg_start.take().unwrap_or(pos);
                    let mut block = SyntaxNode::leaf(NodeKind::Block, Span::new(start, close + 1));
                    block.children = self.parse_statements(pos + 1, close)?;
                    nodes.push(block);
                    pos = close + 1;
                }
                c if (c as char).is_ascii_whitespace() => pos += 1,
                _ => {
                    seg_start.get_or_insert(pos);
                    pos += 1;
                }
            }
        }
        if let Some(start) = seg_start {
            nodes.push(SyntaxNode::leaf(NodeKind::Statement, Span::new(start, end)));
        }
        Ok(nodes)
    }

    fn words_in(&self, pos: usize, end: usize) -> Vec<(&'a str, usize)> {
        let mut out = Vec::new();
        let mut i = pos;
        while i < end {
            if let Some(word) = self.word_at(i, end) {
                out.push((word, i));
                i += word.len();
            } else {
                i += 1;
            }
        }
        out
    }
}

fn first_non_modifier(words: &[(&str, usize)]) -> Option<usize> {
    words
        .iter()
        .find(|(w, _)| !MODIFIERS.contains(w))
        .map(|(_, p)| *p)
}

fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses a document into a declaration tree rooted at a compilation unit.
pub fn parse(doc: &Document) -> Result<SyntaxNode, ParseError> {
    parse_source(doc.text())
}

pub fn parse_source(src: &str) -> Result<SyntaxNode, ParseError> {
    let parser = Parser {
        src,
        mask: mask_source(src),
    };
    let children = parser.parse_members(0, src.len(), true)?;
    Ok(SyntaxNode {
        kind: NodeKind::CompilationUnit,
        name: None,
        span: Span::new(0, src.len()),
        signature: None,
        children,
    })
}

/// Nodes containing `offset`, innermost first, ending at the root.
pub fn enclosing_chain<'t>(root: &'t SyntaxNode, offset: usize) -> Vec<&'t SyntaxNode> {
    // Cursor offsets are clamped into the root span; an offset at EOF binds
    // to the last byte's node.
    let probe = if root.span.len() == 0 {
        0
    } else {
        offset.min(root.span.end - 1)
    };
    let mut chain = Vec::new();
    let mut node = root;
    loop {
        chain.push(node);
        match node
            .children
            .iter()
            .find(|c| c.span.contains(probe) || (c.span.is_empty() && c.span.start == probe))
        {
            Some(child) => node = child,
            None => break,
        }
    }
    chain.reverse();
    chain
}

/// One outline entry per class/interface/method/field declaration.
pub fn build_outline(root: &SyntaxNode, doc: &Document) -> Vec<OutlineEntry> {
    let mut out = Vec::new();
    fn walk(node: &SyntaxNode, doc: &Document, depth: u32, out: &mut Vec<OutlineEntry>) {
        for child in &node.children {
            if child.kind.is_declaration() {
                out.push(OutlineEntry {
                    kind: child.kind,
                    name: child.name.clone().unwrap_or_default(),
                    signature: child.signature.clone().unwrap_or_default(),
                    line: doc.position_of(child.span.start).line,
                    depth,
                });
                walk(child, doc, depth + 1, out);
            } else {
                walk(child, doc, depth, out);
            }
        }
    }
    walk(root, doc, 0, &mut out);
    out
}

/// Indexes every named declaration in the given parsed documents.
/// Parse failures are reported per path, not fatal for the rest.
pub fn index_documents<'a, I>(docs: I) -> (SymbolIndex, Vec<(String, ParseError)>)
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut index = SymbolIndex::default();
    let mut errors = Vec::new();
    for doc in docs {
        if !doc.path().ends_with(".java") {
            continue;
        }
        match parse(doc) {
            Ok(tree) => {
                for entry in build_outline(&tree, doc) {
                    if entry.name.is_empty() {
                        continue;
                    }
                    index.map.entry(entry.name.clone()).or_default().push(SymbolEntry {
                        path: doc.path().to_string(),
                        kind: entry.kind,
                        signature: entry.signature,
                        line: entry.line,
                    });
                }
            }
            Err(err) => errors.push((doc.path().to_string(), err)),
        }
    }
    for entries in index.map.values_mut() {
        entries.sort_by(|a, b| (&a.path, a.line).cmp(&(&b.path, b.line)));
    }
    (index, errors)
}

/// Renders the declaration skeleton with normalized formatting. Reparsing
/// this output yields an isomorphic declaration tree; used by tests and for
/// debugging dumps.
pub fn render_declarations(node: &SyntaxNode, src: &str) -> String {
    let mut out = String::new();
    fn walk(node: &SyntaxNode, src: &str, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match node.kind {
            NodeKind::CompilationUnit => {
                for child in &node.children {
                    walk(child, src, indent, out);
                }
            }
            NodeKind::PackageDecl => {
                out.push_str(&format!("{pad}package {};\n", node.name.as_deref().unwrap_or("")));
            }
            NodeKind::ImportDecl => {
                out.push_str(&format!("{pad}import {};\n", node.name.as_deref().unwrap_or("")));
            }
            NodeKind::ClassDecl | NodeKind::InterfaceDecl => {
                for child in node.children.iter().filter(|c| c.kind == NodeKind::Annotation) {
                    out.push_str(&format!("{pad}@{}\n", child.name.as_deref().unwrap_or("")));
                }
                out.push_str(&format!(
                    "{pad}{} {{\n",
                    node.signature.clone().unwrap_or_default()
                ));
                for child in node.children.iter().filter(|c| c.kind != NodeKind::Annotation) {
                    walk(child, src, indent + 1, out);
                }
                out.push_str(&format!("{pad}}}\n"));
            }
            NodeKind::MethodDecl => {
                for child in node.children.iter().filter(|c| c.kind == NodeKind::Annotation) {
                    out.push_str(&format!("{pad}@{}\n", child.name.as_deref().unwrap_or("")));
                }
                let has_body = node.children.iter().any(|c| c.kind == NodeKind::Block);
                let sig = node.signature.clone().unwrap_or_default();
                if has_body {
                    out.push_str(&format!("{pad}{sig} {{\n{pad}}}\n"));
                } else {
                    out.push_str(&format!("{pad}{sig};\n"));
                }
            }
            NodeKind::FieldDecl => {
                for child in node.children.iter().filter(|c| c.kind == NodeKind::Annotation) {
                    out.push_str(&format!("{pad}@{}\n", child.name.as_deref().unwrap_or("")));
                }
                out.push_str(&format!(
                    "{pad}{};\n",
                    node.signature.clone().unwrap_or_default()
                ));
            }
            NodeKind::Annotation | NodeKind::Block | NodeKind::Statement => {}
        }
    }
    walk(node, src, 0, &mut out);
    out
}

/// Flattened (kind, name) structure over declaration nodes; two trees are
/// considered isomorphic when their skeletons are equal.
pub fn declaration_skeleton(node: &SyntaxNode) -> Vec<(NodeKind, Option<String>, u32)> {
    let mut out = Vec::new();
    fn walk(node: &SyntaxNode, depth: u32, out: &mut Vec<(NodeKind, Option<String>, u32)>) {
        for child in &node.children {
            if child.kind.is_declaration() {
                out.push((child.kind, child.name.clone(), depth));
                walk(child, depth + 1, out);
            } else {
                walk(child, depth, out);
            }
        }
    }
    walk(node, 0, &mut out);
    out
}

/// Checks the structural invariants: children nest inside parents, siblings
/// don't overlap, order is by start offset.
pub fn check_nesting(node: &SyntaxNode) -> bool {
    let mut prev_end = node.span.start;
    for child in &node.children {
        if child.span.start < node.span.start || child.span.end > node.span.end {
            return false;
        }
        if child.span.start < prev_end {
            return false;
        }
        prev_end = child.span.end;
        if !check_nesting(child) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(src: &str) -> SyntaxNode {
        parse_source(src).expect("parse")
    }

    #[test]
    fn simple_class_with_method() {
        let tree = parse_str("class A { void f() {} }");
        assert_eq!(tree.kind, NodeKind::CompilationUnit);
        let class = &tree.children[0];
        assert_eq!(class.kind, NodeKind::ClassDecl);
        assert_eq!(class.name.as_deref(), Some("A"));
        let method = &class.children[0];
        assert_eq!(method.kind, NodeKind::MethodDecl);
        assert_eq!(method.name.as_deref(), Some("f"));
    }

    #[test]
    fn empty_file_is_bare_unit() {
        let tree = parse_str("");
        assert_eq!(tree.kind, NodeKind::CompilationUnit);
        assert!(tree.children.is_empty());
    }

    #[test]
    fn package_imports_fields_annotations() {
        let src = "package com.example;\n\nimport java.util.List;\n\n@Controller\npublic class C {\n  @Autowired\n  private List<String> names = new java.util.ArrayList<>();\n\n  @GetMapping(\"/x\")\n  public String list() { return \"\"; }\n}\n";
        let tree = parse_str(src);
        assert_eq!(tree.children[0].kind, NodeKind::PackageDecl);
        assert_eq!(tree.children[1].kind, NodeKind::ImportDecl);
        let class = &tree.children[2];
        assert_eq!(class.kind, NodeKind::ClassDecl);
        let kinds: Vec<NodeKind> = class.children.iter().map(|c| c.kind).collect();
        assert!(kinds.contains(&NodeKind::Annotation));
        assert!(kinds.contains(&NodeKind::FieldDecl));
        assert!(kinds.contains(&NodeKind::MethodDecl));
        let field = class.children.iter().find(|c| c.kind == NodeKind::FieldDecl).unwrap();
        assert_eq!(field.name.as_deref(), Some("names"));
        let method = class.children.iter().find(|c| c.kind == NodeKind::MethodDecl).unwrap();
        assert_eq!(method.signature.as_deref(), Some("String list()"));
        let annos: Vec<&str> = method
            .children
            .iter()
            .filter(|c| c.kind == NodeKind::Annotation)
            .filter_map(|c| c.name.as_deref())
            .collect();
        assert_eq!(annos, ["GetMapping"]);
    }

    #[test]
    fn braces_in_strings_and_comments_ignored() {
        let src = "class A {\n  // } sneaky\n  String s = \"{{{\";\n  /* { */\n  void f() {}\n}\n";
        let tree = parse_str(src);
        let class = &tree.children[0];
        assert_eq!(class.children.iter().filter(|c| c.kind == NodeKind::MethodDecl).count(), 1);
        assert!(check_nesting(&tree));
    }

    #[test]
    fn unclosed_brace_is_structured_error() {
        let err = parse_source("class A { void f() {\n").unwrap_err();
        assert!(err.message.contains("unbalanced") || err.message.contains("unclosed"));
    }

    #[test]
    fn chain_inside_method_body() {
        let src = "class A {\n  void f() {\n    int x = 1;\n  }\n}\n";
        let tree = parse_str(src);
        let offset = src.find("int x").unwrap();
        let chain = enclosing_chain(&tree, offset);
        let kinds: Vec<NodeKind> = chain.iter().map(|n| n.kind).collect();
        assert_eq!(
            kinds,
            vec![
                NodeKind::Statement,
                NodeKind::Block,
                NodeKind::MethodDecl,
                NodeKind::ClassDecl,
                NodeKind::CompilationUnit
            ]
        );
    }

    #[test]
    fn chain_between_top_level_classes() {
        let src = "class A {}\n\nclass B {}\n";
        let tree = parse_str(src);
        let offset = src.find("\n\n").unwrap() + 1;
        let chain = enclosing_chain(&tree, offset);
        assert_eq!(chain.len(), 1);
        assert_eq!(chain[0].kind, NodeKind::CompilationUnit);
    }

    #[test]
    fn outline_depths() {
        let src = "class A {\n  void f() {}\n  int x;\n}\n";
        let tree = parse_str(src);
        let doc = Document::new("A.java", src.to_string());
        let outline = build_outline(&tree, &doc);
        assert_eq!(outline.len(), 3);
        assert_eq!(outline[0].depth, 0);
        assert_eq!(outline[1].depth, 1);
        assert_eq!(outline[2].depth, 1);
    }

    #[test]
    fn index_is_a_multimap_across_files() {
        let a = Document::new("A.java", "class A { void f() {} }".to_string());
        let b = Document::new("B.java", "class B { void f() {} }".to_string());
        let (index, errors) = index_documents([&a, &b]);
        assert!(errors.is_empty());
        assert_eq!(index.lookup("f").len(), 2);
        assert_eq!(index.lookup("f")[0].path, "A.java");
    }

    #[test]
    fn interface_methods_without_bodies() {
        let src = "public interface Repo {\n  boolean existsByUsername(String username);\n}\n";
        let tree = parse_str(src);
        let iface = &tree.children[0];
        assert_eq!(iface.kind, NodeKind::InterfaceDecl);
        let m = &iface.children[0];
        assert_eq!(m.kind, NodeKind::MethodDecl);
        assert_eq!(m.signature.as_deref(), Some("boolean existsByUsername(String username)"));
    }

    #[test]
    fn render_reparse_isomorphic() {
        let src = "package p;\nimport java.util.List;\nclass A {\n  int x = 3;\n  void f(int a) { if (a > 0) { a--; } }\n  class Inner { void g() {} }\n}\n";
        let tree = parse_str(src);
        let rendered = render_declarations(&tree, src);
        let reparsed = parse_source(&rendered).expect("reparse");
        assert_eq!(declaration_skeleton(&tree), declaration_skeleton(&reparsed));
    }
}
