//! Model checkpoints.
//!
//! Layout: an 8-byte magic string, a little-endian `u32` format version, a
//! little-endian `u64` header length, a JSON header (training config,
//! vocabulary, edge-label table, task head definitions, and a tensor
//! directory of names and shapes), then the raw tensor payload — each
//! tensor's values as little-endian 64-bit floats, in directory order. All
//! floats live in the payload, so save → load → save reproduces the file
//! byte for byte.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use relex_core::graph_lstm::{EdgeVocab, GraphLstmParams, UNK_EDGE_LABEL};
use relex_core::numeric::Rng;
use relex_core::relation_model::TaskHead;
use relex_core::train_eval::{Model, TrainConfig, Vocab, UNK_WORD};

const MAGIC: &[u8; 8] = b"RELEXCP\n";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct HeadDef {
    task: String,
    roles: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    words: Vec<String>,
    edge_labels: Vec<String>,
    heads: Vec<HeadDef>,
    tensors: Vec<TensorEntry>,
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let mut entries = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    let mut push = |entries: &mut Vec<TensorEntry>, name: String, shape: Vec<usize>, data: &[f64]| {
        entries.push(TensorEntry { name, shape });
        for v in data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    };
    for (name, t) in model.params.tensors() {
        push(&mut entries, name, t.shape().to_vec(), t.data());
    }
    for head in &model.heads {
        push(&mut entries, format!("head.{}.w", head.task), vec![head.w.len()], head.w.data());
        push(&mut entries, format!("head.{}.b", head.task), vec![1], &[head.b]);
    }

    let header = Header {
        config: model.config.clone(),
        words: model.vocab.words().to_vec(),
        edge_labels: model.params.edge_vocab.labels().to_vec(),
        heads: model
            .heads
            .iter()
            .map(|h| HeadDef { task: h.task.clone(), roles: h.roles.clone() })
            .collect(),
        tensors: entries,
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let mut bytes = Vec::with_capacity(8 + 4 + 8 + header_bytes.len() + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_bytes);
    bytes.extend_from_slice(&payload);
    fs::write(path, bytes).with_context(|| format!("writing checkpoint {}", path.display()))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes =
        fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        bail!("{}: not a model checkpoint", path.display());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        bail!("{}: unsupported checkpoint version {version}", path.display());
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .with_context(|| format!("{}: truncated header", path.display()))?;
    let header: Header = serde_json::from_slice(&bytes[20..header_end])
        .with_context(|| format!("{}: malformed header", path.display()))?;

    if header.words.first().map(String::as_str) != Some(UNK_WORD) {
        bail!("{}: vocabulary must start with the reserved unknown word", path.display());
    }
    if header.edge_labels.first().map(String::as_str) != Some(UNK_EDGE_LABEL) {
        bail!("{}: edge table must start with the reserved unknown label", path.display());
    }
    let vocab = Vocab::from_words(header.words);
    let edge_vocab = EdgeVocab::new(header.edge_labels);
    let cfg = header.config;
    // Allocate the right shapes, then overwrite everything from the payload.
    let mut params = GraphLstmParams::init(
        cfg.variant,
        cfg.hidden_dim,
        cfg.word_dim,
        cfg.edge_dim,
        vocab.len(),
        edge_vocab,
        &mut Rng::new(0),
    );
    let mut heads: Vec<TaskHead> = header
        .heads
        .iter()
        .map(|h| TaskHead::zeros(&h.task, h.roles.clone(), cfg.hidden_dim))
        .collect();

    let mut offset = header_end;
    let read_values = |offset: &mut usize, count: usize| -> Result<Vec<f64>> {
        let end = *offset + count * 8;
        if end > bytes.len() {
            bail!("{}: truncated tensor payload", path.display());
        }
        let vals = bytes[*offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *offset = end;
        Ok(vals)
    };

    let mut seen: Vec<&str> = Vec::new();
    for entry in &header.tensors {
        if seen.contains(&entry.name.as_str()) {
            bail!("{}: tensor {} listed twice", path.display(), entry.name);
        }
        seen.push(&entry.name);
        let count: usize = entry.shape.iter().product();
        let values = read_values(&mut offset, count)?;

        if let Some(rest) = entry.name.strip_prefix("head.") {
            let (task, field) = rest
                .rsplit_once('.')
                .with_context(|| format!("{}: malformed tensor name {}", path.display(), entry.name))?;
            let head = heads
                .iter_mut()
                .find(|h| h.task == task)
                .with_context(|| format!("{}: tensor for undeclared head {task}", path.display()))?;
            match field {
                "w" => {
                    if entry.shape != [head.w.len()] {
                        bail!("{}: tensor {}: shape mismatch", path.display(), entry.name);
                    }
                    head.w.data_mut().copy_from_slice(&values);
                }
                "b" => {
                    if entry.shape != [1] {
                        bail!("{}: tensor {}: shape mismatch", path.display(), entry.name);
                    }
                    head.b = values[0];
                }
                _ => bail!("{}: unknown head tensor {}", path.display(), entry.name),
            }
        } else {
            let target = params
                .tensors_mut()
                .into_iter()
                .find(|(n, _)| *n == entry.name)
                .map(|(_, t)| t)
                .with_context(|| {
                    format!("{}: unknown tensor {}", path.display(), entry.name)
                })?;
            if target.shape() != entry.shape.as_slice() {
                bail!("{}: tensor {}: shape mismatch", path.display(), entry.name);
            }
            target.data_mut().copy_from_slice(&values);
        }
    }
    if offset != bytes.len() {
        bail!("{}: {} trailing bytes after the tensor payload", path.display(), bytes.len() - offset);
    }
    let expected = params.tensors().len() + 2 * heads.len();
    if seen.len() != expected {
        bail!(
            "{}: checkpoint lists {} tensors, model needs {}",
            path.display(),
            seen.len(),
            expected
        );
    }

    Ok(Model { config: cfg, vocab, params, heads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use relex_core::graph_lstm::Variant;
    use relex_core::numeric::init_uniform;

    fn tiny_model(variant: Variant) -> Model {
        let cfg = TrainConfig {
            variant,
            hidden_dim: 3,
            word_dim: 4,
            edge_dim: 2,
            ..TrainConfig::default()
        };
        let vocab = Vocab::from_words(vec![
            UNK_WORD.to_string(),
            "alpha".to_string(),
            "beta".to_string(),
        ]);
        let edge_vocab = EdgeVocab::new(["adj".to_string(), "nsubj".to_string()]);
        let mut rng = Rng::new(99);
        let params = GraphLstmParams::init(
            cfg.variant,
            cfg.hidden_dim,
            cfg.word_dim,
            cfg.edge_dim,
            vocab.len(),
            edge_vocab,
            &mut rng,
        );
        let mut head =
            TaskHead::zeros("responds", vec!["drug".to_string(), "gene".to_string()], cfg.hidden_dim);
        head.w = init_uniform(&[2 * 2 * cfg.hidden_dim], -1.0, 1.0, &mut rng);
        head.b = 0.25;
        Model { config: cfg, vocab, params, heads: vec![head] }
    }

    #[test]
    fn save_load_save_is_byte_identical_and_bit_exact() {
        for variant in [Variant::Full, Variant::Embed] {
            let model = tiny_model(variant);
            let dir = tempfile::tempdir().unwrap();
            let p1 = dir.path().join("a.ckpt");
            let p2 = dir.path().join("b.ckpt");
            save_model(&model, &p1).unwrap();
            let loaded = load_model(&p1).unwrap();
            save_model(&loaded, &p2).unwrap();
            assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());

            assert_eq!(loaded.config, model.config);
            assert_eq!(loaded.vocab, model.vocab);
            for ((na, a), (nb, b)) in
                model.params.tensors().into_iter().zip(loaded.params.tensors())
            {
                assert_eq!(na, nb);
                assert_eq!(a.data(), b.data(), "{na} changed across the round trip");
            }
            assert_eq!(loaded.heads[0].w.data(), model.heads[0].w.data());
            assert_eq!(loaded.heads[0].b, model.heads[0].b);
            assert_eq!(loaded.heads[0].roles, model.heads[0].roles);
        }
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let model = tiny_model(Variant::Full);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_model(&model, &p).unwrap();

        let good = fs::read(&p).unwrap();

        let mut wrong_magic = good.clone();
        wrong_magic[0] = b'X';
        fs::write(&p, &wrong_magic).unwrap();
        assert!(load_model(&p).unwrap_err().to_string().contains("not a model checkpoint"));

        let mut wrong_version = good.clone();
        wrong_version[8] = 9;
        fs::write(&p, &wrong_version).unwrap();
        assert!(load_model(&p).unwrap_err().to_string().contains("unsupported checkpoint version"));

        let mut truncated = good.clone();
        truncated.truncate(good.len() - 4);
        fs::write(&p, &truncated).unwrap();
        assert!(load_model(&p).unwrap_err().to_string().contains("truncated tensor payload"));

        let mut trailing = good;
        trailing.extend_from_slice(&[0u8; 8]);
        fs::write(&p, &trailing).unwrap();
        assert!(load_model(&p).unwrap_err().to_string().contains("trailing bytes"));
    }
}
