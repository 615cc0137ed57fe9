//! On-disk formats: the corpus file, the labeled-instance file, and
//! pretrained word vectors.
//!
//! Corpus and instance files are UTF-8 JSON Lines — one record per line,
//! blank lines ignored — so they stream at corpus scale and diff cleanly in
//! tests. Parse errors name the offending line.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use relex_core::docgraph::ParsedDocument;
use relex_core::train_eval::{TaskSpec, TrainInstance, WordVectors};

/// One labeled candidate, as stored in an instance file. Mentions are
/// referenced by their ids (in role order), not by index, so instance files
/// stay meaningful when read next to the corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub doc: String,
    pub task: String,
    pub roles: Vec<String>,
    pub mentions: Vec<String>,
    /// Inclusive sentence interval `[first, last]`.
    pub sentences: (usize, usize),
    pub label: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
}

/// Read a corpus file: one JSON document record per line.
pub fn load_corpus(path: &Path) -> Result<Vec<ParsedDocument>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading corpus file {}", path.display()))?;
    let mut docs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: ParsedDocument = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: malformed document record", path.display(), idx + 1))?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Read an instance file: one JSON instance record per line.
pub fn load_instances(path: &Path) -> Result<Vec<InstanceRecord>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading instance file {}", path.display()))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: malformed instance record", path.display(), idx + 1))?;
        if rec.mentions.len() != rec.roles.len() {
            bail!(
                "{}:{}: {} mentions for {} roles",
                path.display(),
                idx + 1,
                rec.mentions.len(),
                rec.roles.len()
            );
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn write_instances(path: &Path, records: &[InstanceRecord]) -> Result<()> {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec)?);
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing instance file {}", path.display()))
}

/// Group instance records into tasks (first-appearance order), resolving
/// mention ids against the corpus. Every record of a task must repeat the
/// same role list.
pub fn group_into_tasks(
    records: &[InstanceRecord],
    docs: &[ParsedDocument],
) -> Result<Vec<TaskSpec>> {
    let mention_index: HashMap<&str, HashMap<&str, usize>> = docs
        .iter()
        .map(|d| {
            let per_doc = d
                .entities
                .iter()
                .enumerate()
                .map(|(i, m)| (m.id.as_str(), i))
                .collect();
            (d.doc_id.as_str(), per_doc)
        })
        .collect();

    let mut tasks: Vec<TaskSpec> = Vec::new();
    for rec in records {
        let doc_mentions = mention_index
            .get(rec.doc.as_str())
            .with_context(|| format!("instance references unknown document {}", rec.doc))?;
        let mention_indices = rec
            .mentions
            .iter()
            .map(|id| {
                doc_mentions.get(id.as_str()).copied().with_context(|| {
                    format!("document {} has no mention with id {}", rec.doc, id)
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let instance = TrainInstance {
            doc_id: rec.doc.clone(),
            mention_indices,
            sentences: rec.sentences,
            label: rec.label,
            fold: rec.fold,
        };
        match tasks.iter_mut().find(|t| t.name == rec.task) {
            Some(task) => {
                if task.roles != rec.roles {
                    bail!(
                        "task {} declared with roles {:?}, later record uses {:?}",
                        rec.task,
                        task.roles,
                        rec.roles
                    );
                }
                task.instances.push(instance);
            }
            None => tasks.push(TaskSpec {
                name: rec.task.clone(),
                roles: rec.roles.clone(),
                instances: vec![instance],
            }),
        }
    }
    Ok(tasks)
}

/// Read pretrained word vectors: one entry per line, the token followed by
/// whitespace-separated values. The dimensionality is fixed by the first
/// entry; later lines must agree. Returns the table and that dimension.
pub fn load_embeddings(path: &Path) -> Result<(WordVectors, usize)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading embedding file {}", path.display()))?;
    let mut vectors = WordVectors::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-blank line has a first field");
        let values = fields
            .map(|f| {
                f.parse::<f64>().with_context(|| {
                    format!("{}:{}: bad float {f:?}", path.display(), idx + 1)
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            bail!("{}:{}: no vector values for {token:?}", path.display(), idx + 1);
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => bail!(
                "{}:{}: expected {} values, found {}",
                path.display(),
                idx + 1,
                d,
                values.len()
            ),
            Some(_) => {}
        }
        if vectors.insert(token.to_string(), values).is_some() {
            bail!("{}:{}: duplicate token {token:?}", path.display(), idx + 1);
        }
    }
    match dim {
        Some(d) => Ok((vectors, d)),
        None => bail!("{}: embedding file holds no vectors", path.display()),
    }
}
