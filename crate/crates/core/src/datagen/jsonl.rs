//! One JSON object per line plus a `vocab.json` sidecar.
//!
//! ```text
//! {"tokens":["good","book"],"label":1,"domain":"books"}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, DatasetBundle, Example, GenConfig, Pool, VocabEntry, Vocabulary};

pub const DATA_FILE: &str = "data.jsonl";
pub const VOCAB_FILE: &str = "vocab.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonlRecord {
    pub tokens: Vec<String>,
    pub label: u8,
    pub domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    domains: Vec<String>,
    tokens: Vec<VocabEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<GenConfig>,
}

/// Parses one line; `line` is only used for error positions.
pub fn parse_record(text: &str, line: usize) -> Result<JsonlRecord, DataError> {
    let rec: JsonlRecord = serde_json::from_str(text).map_err(|e| DataError::Parse {
        line,
        msg: e.to_string(),
    })?;
    if rec.label > 1 {
        return Err(DataError::Parse {
            line,
            msg: format!("label must be 0 or 1, got {}", rec.label),
        });
    }
    Ok(rec)
}

/// Builds a bundle from JSONL text and an optional sidecar.
///
/// Without a sidecar, domains are numbered by first appearance and tokens
/// are interned with [`Pool::Unknown`]. With one, every domain and token
/// must already be listed.
pub fn load_jsonl_str(data: &str, sidecar: Option<&str>) -> Result<DatasetBundle, DataError> {
    let (mut domains, mut vocab, config, fixed) = match sidecar {
        Some(text) => {
            let s: Sidecar =
                serde_json::from_str(text).map_err(|e| DataError::Vocab(e.to_string()))?;
            let vocab = Vocabulary::from_entries(s.tokens).map_err(DataError::Vocab)?;
            if let Some(cfg) = &s.config {
                cfg.validate()?;
            }
            (s.domains, vocab, s.config, true)
        }
        None => (Vec::new(), Vocabulary::new(), None, false),
    };
    let mut examples: Vec<Vec<Example>> = vec![Vec::new(); domains.len()];
    for (i, raw) in data.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec = parse_record(raw, line)?;
        let domain = match domains.iter().position(|d| *d == rec.domain) {
            Some(d) => d,
            None if !fixed => {
                domains.push(rec.domain.clone());
                examples.push(Vec::new());
                domains.len() - 1
            }
            None => {
                return Err(DataError::UnknownDomain {
                    line,
                    domain: rec.domain,
                    known: domains,
                })
            }
        };
        let tokens = rec
            .tokens
            .iter()
            .map(|t| match vocab.id(t) {
                Some(id) => Ok(id),
                None if !fixed => Ok(vocab.intern(t, Pool::Unknown)),
                None => Err(DataError::Parse {
                    line,
                    msg: format!("token `{t}` is not in the vocabulary"),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        examples[domain].push(Example {
            tokens,
            label: rec.label,
            domain,
            features: rec.features,
        });
    }
    Ok(DatasetBundle {
        domains,
        examples,
        vocab,
        config,
    })
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads `path`, which is either a bundle directory or a `.jsonl` file.
/// A `vocab.json` beside the data file is used when present.
pub fn load_jsonl(path: &Path) -> Result<DatasetBundle, DataError> {
    let data_path = if path.is_dir() {
        path.join(DATA_FILE)
    } else {
        path.to_path_buf()
    };
    let data = fs::read_to_string(&data_path).map_err(|e| io_err(&data_path, e))?;
    let sidecar_path = data_path.with_file_name(VOCAB_FILE);
    let sidecar = if sidecar_path.exists() {
        Some(fs::read_to_string(&sidecar_path).map_err(|e| io_err(&sidecar_path, e))?)
    } else {
        None
    };
    load_jsonl_str(&data, sidecar.as_deref())
}

/// JSONL text in domain order, then example order.
pub fn to_jsonl_string(bundle: &DatasetBundle) -> String {
    let mut out = String::new();
    for e in bundle.iter() {
        let rec = JsonlRecord {
            tokens: e
                .tokens
                .iter()
                .map(|&t| bundle.vocab.token(t).unwrap_or("<unk>").to_string())
                .collect(),
            label: e.label,
            domain: bundle.domains[e.domain].clone(),
            features: e.features.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn sidecar_string(bundle: &DatasetBundle) -> String {
    let s = Sidecar {
        domains: bundle.domains.clone(),
        tokens: bundle.vocab.entries().to_vec(),
        config: bundle.config.clone(),
    };
    let mut text = serde_json::to_string_pretty(&s).expect("sidecar serializes");
    text.push('\n');
    text
}

/// Writes `data.jsonl` and `vocab.json` into `dir`, creating it if needed.
pub fn save_jsonl(bundle: &DatasetBundle, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let data = dir.join(DATA_FILE);
    fs::write(&data, to_jsonl_string(bundle)).map_err(|e| io_err(&data, e))?;
    let vocab = dir.join(VOCAB_FILE);
    fs::write(&vocab, sidecar_string(bundle)).map_err(|e| io_err(&vocab, e))?;
    Ok(())
}
