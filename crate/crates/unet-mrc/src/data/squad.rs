//! Reading and writing the SQuAD-2.0 JSON schema
//! (data -> paragraphs -> qas), flattened to one record per question.

use serde::{Deserialize, Serialize};
use std::path::Path;

/// One question against one passage, straight from the dataset file.
/// Answer offsets are byte positions into `passage_text`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawExample {
    pub id: String,
    pub passage_text: String,
    pub question_text: String,
    pub is_impossible: bool,
    pub answers: Vec<(String, usize)>,
    pub plausible_answers: Vec<(String, usize)>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: invalid dataset JSON: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: qa {id}: {message}")]
    Inconsistent {
        path: String,
        id: String,
        message: String,
    },
}

#[derive(Serialize, Deserialize)]
struct FileRoot {
    #[serde(default)]
    version: Option<String>,
    data: Vec<FileArticle>,
}

#[derive(Serialize, Deserialize)]
struct FileArticle {
    #[serde(default)]
    title: Option<String>,
    paragraphs: Vec<FileParagraph>,
}

#[derive(Serialize, Deserialize)]
struct FileParagraph {
    context: String,
    qas: Vec<FileQa>,
}

#[derive(Serialize, Deserialize)]
struct FileQa {
    id: String,
    question: String,
    #[serde(default)]
    is_impossible: bool,
    #[serde(default)]
    answers: Vec<FileAnswer>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    plausible_answers: Vec<FileAnswer>,
}

#[derive(Serialize, Deserialize)]
struct FileAnswer {
    text: String,
    answer_start: usize,
}

/// The file format counts answer offsets in Unicode scalar values; we
/// work in byte offsets everywhere else. Out-of-range offsets are kept
/// saturated so alignment later fails with its skip counter rather than
/// panicking here.
fn chars_to_byte_offset(text: &str, char_offset: usize) -> usize {
    text.char_indices()
        .nth(char_offset)
        .map(|(b, _)| b)
        .unwrap_or(text.len())
}

fn byte_to_char_offset(text: &str, byte_offset: usize) -> usize {
    text[..byte_offset.min(text.len())].chars().count()
}

pub fn parse_dataset_str(content: &str, path: &str) -> Result<Vec<RawExample>, DatasetError> {
    let root: FileRoot = serde_json::from_str(content).map_err(|e| DatasetError::Schema {
        path: path.to_string(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for article in &root.data {
        for para in &article.paragraphs {
            for qa in &para.qas {
                let convert = |answers: &[FileAnswer]| {
                    answers
                        .iter()
                        .map(|a| {
                            (
                                a.text.clone(),
                                chars_to_byte_offset(&para.context, a.answer_start),
                            )
                        })
                        .collect::<Vec<_>>()
                };
                let ex = RawExample {
                    id: qa.id.clone(),
                    passage_text: para.context.clone(),
                    question_text: qa.question.clone(),
                    is_impossible: qa.is_impossible,
                    answers: convert(&qa.answers),
                    plausible_answers: convert(&qa.plausible_answers),
                };
                if ex.is_impossible && !ex.answers.is_empty() {
                    return Err(DatasetError::Inconsistent {
                        path: path.to_string(),
                        id: ex.id,
                        message: "is_impossible with non-empty answers".into(),
                    });
                }
                if !ex.is_impossible && ex.answers.is_empty() {
                    return Err(DatasetError::Inconsistent {
                        path: path.to_string(),
                        id: ex.id,
                        message: "answerable question without answers".into(),
                    });
                }
                out.push(ex);
            }
        }
    }
    Ok(out)
}

pub fn parse_dataset(path: &Path) -> Result<Vec<RawExample>, DatasetError> {
    let content = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_dataset_str(&content, &path.display().to_string())
}

pub fn dataset_to_string(examples: &[RawExample]) -> String {
    let paragraphs: Vec<FileParagraph> = examples
        .iter()
        .map(|ex| FileParagraph {
            context: ex.passage_text.clone(),
            qas: vec![FileQa {
                id: ex.id.clone(),
                question: ex.question_text.clone(),
                is_impossible: ex.is_impossible,
                answers: ex
                    .answers
                    .iter()
                    .map(|(t, b)| FileAnswer {
                        text: t.clone(),
                        answer_start: byte_to_char_offset(&ex.passage_text, *b),
                    })
                    .collect(),
                plausible_answers: ex
                    .plausible_answers
                    .iter()
                    .map(|(t, b)| FileAnswer {
                        text: t.clone(),
                        answer_start: byte_to_char_offset(&ex.passage_text, *b),
                    })
                    .collect(),
            }],
        })
        .collect();
    let root = FileRoot {
        version: Some("v2.0".into()),
        data: vec![FileArticle {
            title: Some("dataset".into()),
            paragraphs,
        }],
    };
    serde_json::to_string_pretty(&root).expect("dataset serialization cannot fail")
}

pub fn write_dataset(path: &Path, examples: &[RawExample]) -> Result<(), DatasetError> {
    std::fs::write(path, dataset_to_string(examples)).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
