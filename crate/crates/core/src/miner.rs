//! Keyword pattern miner: locates candidate base-code sites for a risk
//! vector in a local codebase. A desk-scale stand-in for a repository-wide
//! semantic scan.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::detect::RulePack;
use crate::risk::VectorId;

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("cannot read directory {path}: {error}")]
    UnreadableDir { path: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MinerHit {
    pub path: String,
    /// 1-based, as printed.
    pub line: u32,
    pub pattern: String,
    pub matched: String,
}

/// Scans `.java` files under `dir` with the vector's mining patterns.
/// Hits are sorted by path then line; unreadable files are skipped and
/// reported as warnings.
pub fn mine_candidates(
    dir: &Path,
    vector: VectorId,
    rules: &RulePack,
) -> Result<(Vec<MinerHit>, Vec<String>), MinerError> {
    if !dir.is_dir() {
        return Err(MinerError::UnreadableDir {
            path: dir.display().to_string(),
            error: "not a directory".to_string(),
        });
    }
    let patterns = &rules.rules(vector).mine;
    let mut hits = Vec::new();
    let mut warnings = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = match entry {
            Ok(entry) => entry,
            Err(e) => {
                warnings.push(format!("skipping unreadable entry: {e}"));
                continue;
            }
        };
        if !entry.file_type().is_file()
            || entry.path().extension().map(|e| e != "java").unwrap_or(true)
        {
            continue;
        }
        let text = match std::fs::read_to_string(entry.path()) {
            Ok(text) => text,
            Err(e) => {
                warnings.push(format!("skipping {}: {e}", entry.path().display()));
                continue;
            }
        };
        let rel = entry
            .path()
            .strip_prefix(dir)
            .unwrap_or(entry.path())
            .to_string_lossy()
            .replace('\\', "/");
        for (line_idx, line) in text.lines().enumerate() {
            for (source, regex) in patterns {
                if let Some(m) = regex.find(line) {
                    hits.push(MinerHit {
                        path: rel.clone(),
                        line: line_idx as u32 + 1,
                        pattern: source.clone(),
                        matched: m.as_str().to_string(),
                    });
                }
            }
        }
    }
    hits.sort_by(|a, b| (&a.path, a.line, &a.pattern).cmp(&(&b.path, b.line, &b.pattern)));
    Ok((hits, warnings))
}

fn csv_field(value: &str) -> String {
    if value.contains(',') || value.contains('"') || value.contains('\n') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

/// CSV rendering with header `path,line,pattern,match`.
pub fn render_hits_csv(hits: &[MinerHit]) -> String {
    let mut out = String::from("path,line,pattern,match\n");
    for hit in hits {
        out.push_str(&format!(
            "{},{},{},{}\n",
            csv_field(&hit.path),
            hit.line,
            csv_field(&hit.pattern),
            csv_field(&hit.matched)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn finds_weak_digest_for_v1() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(
            tmp.path().join("Hash.java"),
            "class Hash {\n  byte[] h(byte[] b) throws Exception {\n    return MessageDigest.getInstance(\"MD5\").digest(b);\n  }\n}\n",
        )
        .unwrap();
        let rules = RulePack::embedded();
        let (hits, warnings) = mine_candidates(tmp.path(), VectorId::V1, &rules).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].line, 3);
        assert!(hits[0].matched.contains("MessageDigest"));
    }

    #[test]
    fn no_sql_means_no_v3_hits() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join("A.java"), "class A { int x = 1; }\n").unwrap();
        let rules = RulePack::embedded();
        let (hits, _) = mine_candidates(tmp.path(), VectorId::V3, &rules).unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn controller_annotation_hits_v8() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(
            tmp.path().join("C.java"),
            "@Controller\nclass C {\n  private boolean validateToken(String t) { return true; }\n}\n",
        )
        .unwrap();
        let rules = RulePack::embedded();
        let (hits, _) = mine_candidates(tmp.path(), VectorId::V8, &rules).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].line, 1);
        assert_eq!(hits[1].line, 3);
    }

    #[test]
    fn non_java_files_skipped_and_bad_dir_errors() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join("note.txt"), "MessageDigest.getInstance(\"MD5\")\n").unwrap();
        let rules = RulePack::embedded();
        let (hits, _) = mine_candidates(tmp.path(), VectorId::V1, &rules).unwrap();
        assert!(hits.is_empty());
        assert!(mine_candidates(&tmp.path().join("nope"), VectorId::V1, &rules).is_err());
    }

    #[test]
    fn csv_quotes_fields_with_commas() {
        let hits = vec![MinerHit {
            path: "A.java".into(),
            line: 3,
            pattern: "a,b".into(),
            matched: "say \"hi\"".into(),
        }];
        let csv = render_hits_csv(&hits);
        assert!(csv.contains("\"a,b\""));
        assert!(csv.contains("\"say \"\"hi\"\"\""));
    }
}
