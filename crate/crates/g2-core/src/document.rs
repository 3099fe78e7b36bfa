//! Parser-output interchange format and corpus loading.
//!
//! Upstream multimodal parsers emit a single JSON interchange file:
//!
//! ```json
//! {
//!   "version": 1,
//!   "documents": [
//!     {
//!       "doc_id": "report-a",
//!       "source": "report-a.pdf",
//!       "units": [
//!         {"unit_id": "u1", "order": 0, "modality": "text",
//!          "text": "....", "image_ref": null}
//!       ]
//!     }
//!   ]
//! }
//! ```
//!
//! Units are atomic: a paragraph, or a table/figure with its caption already
//! fused into `text`. `image_ref` paths are resolved relative to the
//! interchange file's directory at load time.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const INTERCHANGE_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed interchange input: {0}")]
    MalformedInput(String),
    #[error("unit {unit_id}: image not found at {path}")]
    MissingImage { unit_id: String, path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Table,
    Figure,
}

/// Smallest indexed document element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicUnit {
    pub doc_id: String,
    pub unit_id: String,
    /// Reading-order index within the document. Strictly increasing per
    /// document, not necessarily dense.
    pub order: u64,
    pub modality: Modality,
    /// Paragraph text, table rendering, or figure caption.
    pub text: String,
    /// Rendered image for table/figure units, resolved at load time.
    pub image_ref: Option<PathBuf>,
}

/// A validated corpus of atomic units in global reading order
/// (grouped by `doc_id`, then by `order`).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedCorpus {
    units: Vec<AtomicUnit>,
    source_manifest: BTreeMap<String, String>,
}

// --- interchange schema ---

#[derive(Debug, Serialize, Deserialize)]
struct InterchangeFile {
    version: u64,
    documents: Vec<InterchangeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InterchangeDoc {
    doc_id: String,
    source: String,
    units: Vec<InterchangeUnit>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InterchangeUnit {
    unit_id: String,
    order: u64,
    modality: Modality,
    text: String,
    #[serde(default)]
    image_ref: Option<String>,
}

impl ParsedCorpus {
    /// Explicitly construct an empty corpus.
    pub fn empty() -> Self {
        ParsedCorpus::default()
    }

    /// Build a corpus from already-validated units (used by the store when
    /// reloading). Runs the same invariant checks as [`load_corpus`].
    pub fn from_units(
        mut units: Vec<AtomicUnit>,
        source_manifest: BTreeMap<String, String>,
    ) -> Result<Self, DocumentError> {
        units.sort_by(|a, b| (&a.doc_id, a.order).cmp(&(&b.doc_id, b.order)));
        let mut seen = HashSet::new();
        for unit in &units {
            if !seen.insert(unit.unit_id.clone()) {
                return Err(DocumentError::MalformedInput(format!(
                    "duplicate unit_id {:?}",
                    unit.unit_id
                )));
            }
            if unit.modality == Modality::Text && unit.image_ref.is_some() {
                return Err(DocumentError::MalformedInput(format!(
                    "text unit {:?} carries an image_ref",
                    unit.unit_id
                )));
            }
        }
        for pair in units.windows(2) {
            if pair[0].doc_id == pair[1].doc_id && pair[0].order == pair[1].order {
                return Err(DocumentError::MalformedInput(format!(
                    "units {:?} and {:?} share order {} within document {:?}",
                    pair[0].unit_id, pair[1].unit_id, pair[0].order, pair[0].doc_id
                )));
            }
        }
        Ok(ParsedCorpus { units, source_manifest })
    }

    pub fn units(&self) -> &[AtomicUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn source_manifest(&self) -> &BTreeMap<String, String> {
        &self.source_manifest
    }

    pub fn unit(&self, unit_id: &str) -> Option<&AtomicUnit> {
        self.units.iter().find(|u| u.unit_id == unit_id)
    }
}

/// Load and validate an interchange file.
///
/// Deterministic: the same bytes always produce the same corpus. Units come
/// back sorted by `(doc_id, order)` with uniqueness of `unit_id` and of
/// `(doc_id, order)` enforced, and every `image_ref` resolved against the
/// file's directory and checked for existence.
pub fn load_corpus(path: &Path) -> Result<ParsedCorpus, DocumentError> {
    let raw = std::fs::read_to_string(path).map_err(|source| DocumentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: InterchangeFile = serde_json::from_str(&raw)
        .map_err(|err| DocumentError::MalformedInput(err.to_string()))?;
    if file.version != INTERCHANGE_VERSION {
        return Err(DocumentError::MalformedInput(format!(
            "unsupported interchange version {} (expected {INTERCHANGE_VERSION})",
            file.version
        )));
    }
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut units = Vec::new();
    let mut manifest = BTreeMap::new();
    for doc in file.documents {
        manifest.insert(doc.doc_id.clone(), doc.source);
        for unit in doc.units {
            let image_ref = match unit.image_ref {
                None => None,
                Some(rel) => {
                    let resolved = base_dir.join(&rel);
                    if !resolved.is_file() {
                        return Err(DocumentError::MissingImage {
                            unit_id: unit.unit_id,
                            path: resolved,
                        });
                    }
                    Some(resolved)
                }
            };
            units.push(AtomicUnit {
                doc_id: doc.doc_id.clone(),
                unit_id: unit.unit_id,
                order: unit.order,
                modality: unit.modality,
                text: unit.text,
                image_ref,
            });
        }
    }
    ParsedCorpus::from_units(units, manifest)
}

/// Write a corpus back out in interchange form. Image paths are written as
/// stored (already resolved), so a saved corpus is self-contained.
pub fn save_corpus(corpus: &ParsedCorpus, path: &Path) -> Result<(), DocumentError> {
    let mut docs: BTreeMap<&str, Vec<&AtomicUnit>> = BTreeMap::new();
    for unit in corpus.units() {
        docs.entry(&unit.doc_id).or_default().push(unit);
    }
    let file = InterchangeFile {
        version: INTERCHANGE_VERSION,
        documents: docs
            .into_iter()
            .map(|(doc_id, units)| InterchangeDoc {
                doc_id: doc_id.to_string(),
                source: corpus
                    .source_manifest
                    .get(doc_id)
                    .cloned()
                    .unwrap_or_default(),
                units: units
                    .into_iter()
                    .map(|u| InterchangeUnit {
                        unit_id: u.unit_id.clone(),
                        order: u.order,
                        modality: u.modality,
                        text: u.text.clone(),
                        image_ref: u.image_ref.as_ref().map(|p| p.display().to_string()),
                    })
                    .collect(),
            })
            .collect(),
    };
    let body = serde_json::to_string_pretty(&file).expect("corpus serialization cannot fail");
    crate::store::write_atomic(path, body.as_bytes()).map_err(|source| DocumentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_interchange(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("corpus.json");
        std::fs::write(&path, body).unwrap();
        path
    }

    fn three_text_units() -> String {
        serde_json::json!({
            "version": 1,
            "documents": [{
                "doc_id": "d1",
                "source": "d1.pdf",
                "units": [
                    {"unit_id": "u2", "order": 5, "modality": "text", "text": "second", "image_ref": null},
                    {"unit_id": "u1", "order": 1, "modality": "text", "text": "first", "image_ref": null},
                    {"unit_id": "u3", "order": 9, "modality": "text", "text": "third", "image_ref": null}
                ]
            }]
        })
        .to_string()
    }

    #[test]
    fn loads_and_sorts_by_reading_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_interchange(dir.path(), &three_text_units());
        let corpus = load_corpus(&path).unwrap();
        assert_eq!(corpus.len(), 3);
        let ids: Vec<&str> = corpus.units().iter().map(|u| u.unit_id.as_str()).collect();
        assert_eq!(ids, ["u1", "u2", "u3"]);
        assert_eq!(corpus.source_manifest()["d1"], "d1.pdf");
    }

    #[test]
    fn deterministic_for_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_interchange(dir.path(), &three_text_units());
        let a = load_corpus(&path).unwrap();
        let b = load_corpus(&path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_unit_id_names_the_unit() {
        let dir = tempfile::tempdir().unwrap();
        let body = serde_json::json!({
            "version": 1,
            "documents": [{
                "doc_id": "d1", "source": "s",
                "units": [
                    {"unit_id": "u1", "order": 0, "modality": "text", "text": "a"},
                    {"unit_id": "u1", "order": 1, "modality": "text", "text": "b"}
                ]
            }]
        })
        .to_string();
        let path = write_interchange(dir.path(), &body);
        match load_corpus(&path) {
            Err(DocumentError::MalformedInput(msg)) => assert!(msg.contains("u1"), "{msg}"),
            other => panic!("expected MalformedInput, got {other:?}"),
        }
    }

    #[test]
    fn missing_image_is_reported_with_unit_id() {
        let dir = tempfile::tempdir().unwrap();
        let body = serde_json::json!({
            "version": 1,
            "documents": [{
                "doc_id": "d1", "source": "s",
                "units": [
                    {"unit_id": "f1", "order": 0, "modality": "figure",
                     "text": "Figure 1: caption", "image_ref": "images/missing.png"}
                ]
            }]
        })
        .to_string();
        let path = write_interchange(dir.path(), &body);
        match load_corpus(&path) {
            Err(DocumentError::MissingImage { unit_id, .. }) => assert_eq!(unit_id, "f1"),
            other => panic!("expected MissingImage, got {other:?}"),
        }
    }

    #[test]
    fn image_ref_resolves_relative_to_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("images")).unwrap();
        std::fs::write(dir.path().join("images/fig.png"), b"png").unwrap();
        let body = serde_json::json!({
            "version": 1,
            "documents": [{
                "doc_id": "d1", "source": "s",
                "units": [
                    {"unit_id": "f1", "order": 0, "modality": "figure",
                     "text": "Figure 1: caption", "image_ref": "images/fig.png"}
                ]
            }]
        })
        .to_string();
        let path = write_interchange(dir.path(), &body);
        let corpus = load_corpus(&path).unwrap();
        let resolved = corpus.units()[0].image_ref.as_ref().unwrap();
        assert!(resolved.is_file());
        assert!(resolved.ends_with("images/fig.png"));
    }

    #[test]
    fn text_unit_with_image_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x.png"), b"png").unwrap();
        let body = serde_json::json!({
            "version": 1,
            "documents": [{
                "doc_id": "d1", "source": "s",
                "units": [
                    {"unit_id": "u1", "order": 0, "modality": "text",
                     "text": "a", "image_ref": "x.png"}
                ]
            }]
        })
        .to_string();
        let path = write_interchange(dir.path(), &body);
        assert!(matches!(
            load_corpus(&path),
            Err(DocumentError::MalformedInput(_))
        ));
    }

    #[test]
    fn wrong_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_interchange(
            dir.path(),
            r#"{"version": 2, "documents": []}"#,
        );
        assert!(matches!(
            load_corpus(&path),
            Err(DocumentError::MalformedInput(_))
        ));
    }

    #[test]
    fn negative_order_rejected_by_schema() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"version": 1, "documents": [{"doc_id": "d", "source": "s",
            "units": [{"unit_id": "u", "order": -1, "modality": "text", "text": "a"}]}]}"#;
        let path = write_interchange(dir.path(), body);
        assert!(matches!(
            load_corpus(&path),
            Err(DocumentError::MalformedInput(_))
        ));
    }

    #[test]
    fn corpus_save_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_interchange(dir.path(), &three_text_units());
        let corpus = load_corpus(&path).unwrap();
        let out = dir.path().join("copy.json");
        save_corpus(&corpus, &out).unwrap();
        let reloaded = load_corpus(&out).unwrap();
        assert_eq!(corpus, reloaded);
    }
}
