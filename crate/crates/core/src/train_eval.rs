//! Training, evaluation, cross-validation and significance testing.
//!
//! Training is plain mini-batched SGD over one shared encoder and one
//! logistic head per task. Per epoch, tasks are visited in declared order
//! with a full shuffled pass over each task's training instances;
//! auxiliary tasks larger than the main (first) task are subsampled down to
//! its size once per run. A document-level development split is carved from
//! the training documents; early stopping monitors the main task's dev
//! accuracy with a patience counter and the best-dev parameters are
//! restored at the end.
//!
//! Everything is deterministic under `(data, config, seed)`: parameter
//! initialization, the dev split, subsampling and epoch shuffles all draw
//! from a single seeded generator in a fixed order, and cross-validation
//! derives one independent seed per fold from the master seed.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{generate_candidates, minimal_span_filter};
use crate::docgraph::{
    build_graph, partition, BuildOptions, DocumentGraph, EdgePolicy, GraphError, ParsedDocument,
};
use crate::graph_lstm::{EdgeVocab, GraphLstmParams, Variant};
use crate::numeric::{derive_seed, Rng};
use crate::relation_model::{loss_and_grad, score, InstanceInput, TaskHead};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("duplicate document id {0}")]
    DuplicateDocument(String),
    #[error("no tasks given")]
    NoTasks,
    #[error("task {0} has no usable training instances")]
    EmptyTask(String),
    #[error("task {task}: instance references unknown document {doc_id}")]
    UnknownDocument { task: String, doc_id: String },
    #[error("task {task}: instance has {found} mentions but the task declares {expected} roles")]
    ArityMismatch { task: String, expected: usize, found: usize },
    #[error("document {doc_id}: mention index {index} out of range")]
    MentionOutOfRange { doc_id: String, index: usize },
    #[error("document {doc_id}: mention {index} lies outside the instance's sentence window")]
    MentionOutsideWindow { doc_id: String, index: usize },
    #[error("word vector for {word:?} has dimension {found}, expected {expected}")]
    BadEmbeddingDim { word: String, expected: usize, found: usize },
    #[error("training diverged at epoch {epoch}: non-finite loss or exploding parameters")]
    Diverged { epoch: usize },
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("evaluation needs at least one instance")]
    NoInstances,
    #[error("instance in document {doc_id} carries no fold assignment")]
    MissingFold { doc_id: String },
    #[error("document {doc_id} is assigned to folds {a} and {b}")]
    InconsistentFold { doc_id: String, a: usize, b: usize },
    #[error("fold {fold} out of range for {n_folds} folds")]
    FoldOutOfRange { fold: usize, n_folds: usize },
    #[error("fold {fold} has no test instances for task {task}")]
    EmptyFold { fold: usize, task: String },
}

/// All training hyperparameters and structural choices. The defaults are
/// the tuned values the rest of the test suite assumes: batch size 8,
/// learning rate 0.02, at most 30 epochs, hidden dimension 150,
/// edge-embedding dimension 3, word dimension 100, patience 3 and a 10%
/// document-level dev split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub policy: EdgePolicy,
    pub include_coref: bool,
    pub include_discourse: bool,
    pub hidden_dim: usize,
    pub word_dim: usize,
    pub edge_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Fraction of training documents held out as the dev set.
    pub dev_fraction: f64,
    /// Maximum sentence-window width; recorded so extraction enumerates
    /// candidates exactly as dataset construction did.
    pub k_sentences: usize,
    pub seed: u64,
    /// Keep the word-embedding table at its initial values.
    pub freeze_word_embeddings: bool,
    /// Optional elementwise gradient clamp to `[-c, c]`, off by default.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Full,
            policy: EdgePolicy::FullGraph,
            include_coref: true,
            include_discourse: true,
            hidden_dim: 150,
            word_dim: 100,
            edge_dim: 3,
            batch_size: 8,
            learning_rate: 0.02,
            max_epochs: 30,
            patience: 3,
            dev_fraction: 0.1,
            k_sentences: 3,
            seed: 42,
            freeze_word_embeddings: false,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            policy: self.policy,
            include_coref: self.include_coref,
            include_discourse: self.include_discourse,
        }
    }

    fn validate(&self) {
        assert!(self.hidden_dim > 0 && self.word_dim > 0, "dimensions must be positive");
        assert!(self.variant == Variant::Full || self.edge_dim > 0);
        assert!(self.batch_size > 0 && self.max_epochs > 0 && self.patience > 0);
        assert!(self.learning_rate > 0.0 && self.learning_rate.is_finite());
        assert!((0.0..1.0).contains(&self.dev_fraction), "dev fraction must be in [0, 1)");
        assert!(self.k_sentences >= 1);
        if let Some(c) = self.grad_clip {
            assert!(c > 0.0, "gradient clip must be positive");
        }
    }
}

pub const UNK_WORD: &str = "<unk>";

/// Word vocabulary; row 0 is reserved for unknown words.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Collect the vocabulary in first-occurrence order over the given
    /// graphs (themselves iterated in a caller-defined, deterministic
    /// order).
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a DocumentGraph>) -> Vocab {
        let mut v = Vocab::reserved();
        for g in graphs {
            for t in g.tokens() {
                if !v.index.contains_key(&t.text) {
                    v.index.insert(t.text.clone(), v.words.len());
                    v.words.push(t.text.clone());
                }
            }
        }
        v
    }

    fn reserved() -> Vocab {
        let mut index = HashMap::new();
        index.insert(UNK_WORD.to_string(), 0);
        Vocab { words: vec![UNK_WORD.to_string()], index }
    }

    /// Rebuild from a saved word list (row order); the first entry must be
    /// the reserved unknown marker.
    pub fn from_words(words: Vec<String>) -> Vocab {
        assert_eq!(words.first().map(String::as_str), Some(UNK_WORD), "row 0 must be the unknown marker");
        let mut index = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            let prev = index.insert(w.clone(), i);
            assert!(prev.is_none(), "duplicate vocabulary entry {w:?}");
        }
        Vocab { words, index }
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Document graphs keyed by id, all built under one set of graph options.
#[derive(Debug, Clone)]
pub struct Corpus {
    graphs: BTreeMap<String, DocumentGraph>,
}

impl Corpus {
    pub fn build(docs: &[ParsedDocument], opts: &BuildOptions) -> Result<Corpus, TrainError> {
        let mut graphs = BTreeMap::new();
        for doc in docs {
            let g = build_graph(doc, opts)?;
            if graphs.insert(doc.doc_id.clone(), g).is_some() {
                return Err(TrainError::DuplicateDocument(doc.doc_id.clone()));
            }
        }
        Ok(Corpus { graphs })
    }

    pub fn get(&self, doc_id: &str) -> Option<&DocumentGraph> {
        self.graphs.get(doc_id)
    }

    /// Graphs in document-id order.
    pub fn graphs(&self) -> impl Iterator<Item = &DocumentGraph> {
        self.graphs.values()
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// One labeled candidate as consumed by training: mention indices refer to
/// the document's mention list, `sentences` is the inclusive window the
/// candidate spans, and `fold` is its cross-validation assignment if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainInstance {
    pub doc_id: String,
    pub mention_indices: Vec<usize>,
    pub sentences: (usize, usize),
    pub label: bool,
    pub fold: Option<usize>,
}

/// A task: its name, role list (fixing instance arity and feature order)
/// and instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub name: String,
    pub roles: Vec<String>,
    pub instances: Vec<TrainInstance>,
}

/// Pretrained word vectors; words absent from the map keep their seeded
/// uniform initialization.
pub type WordVectors = HashMap<String, Vec<f64>>;

/// A trained model: everything needed to score new documents.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: TrainConfig,
    pub vocab: Vocab,
    pub params: GraphLstmParams,
    pub heads: Vec<TaskHead>,
}

impl Model {
    pub fn head(&self, task: &str) -> Option<&TaskHead> {
        self.heads.iter().find(|h| h.task == task)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-instance loss of each task's pass, in task order.
    pub task_losses: Vec<(String, f64)>,
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_dev_accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    /// Documents held out for early stopping, sorted.
    pub dev_docs: Vec<String>,
    /// Training instances per task after dev exclusion and subsampling.
    pub train_counts: Vec<(String, usize)>,
    /// Main-task instances in the dev split.
    pub dev_instance_count: usize,
}

pub struct TrainOutcome {
    pub model: Model,
    pub report: TrainReport,
}

fn prepare_on_graph(
    graph: &DocumentGraph,
    vocab: &Vocab,
    mention_indices: &[usize],
    sentences: (usize, usize),
    label: bool,
) -> Result<InstanceInput, TrainError> {
    for &mi in mention_indices {
        if mi >= graph.entities().len() {
            return Err(TrainError::MentionOutOfRange {
                doc_id: graph.doc_id.clone(),
                index: mi,
            });
        }
    }
    let window = graph.window(sentences.0, sentences.1)?;
    let mention_spans = mention_indices
        .iter()
        .map(|&mi| {
            window.entity_map[mi]
                .map(|wi| window.graph.entities()[wi].span)
                .ok_or(TrainError::MentionOutsideWindow { doc_id: graph.doc_id.clone(), index: mi })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let token_ids = window.graph.tokens().iter().map(|t| vocab.id(&t.text)).collect();
    Ok(InstanceInput { dags: partition(&window.graph), token_ids, mention_spans, label })
}

fn prepare_instance(
    corpus: &Corpus,
    vocab: &Vocab,
    task: &TaskSpec,
    inst: &TrainInstance,
) -> Result<InstanceInput, TrainError> {
    if inst.mention_indices.len() != task.roles.len() {
        return Err(TrainError::ArityMismatch {
            task: task.name.clone(),
            expected: task.roles.len(),
            found: inst.mention_indices.len(),
        });
    }
    let graph = corpus.get(&inst.doc_id).ok_or_else(|| TrainError::UnknownDocument {
        task: task.name.clone(),
        doc_id: inst.doc_id.clone(),
    })?;
    prepare_on_graph(graph, vocab, &inst.mention_indices, inst.sentences, inst.label)
}

fn accuracy(params: &GraphLstmParams, head: &TaskHead, inputs: &[InstanceInput]) -> f64 {
    let correct = inputs
        .iter()
        .filter(|i| (score(params, head, i) >= 0.5) == i.label)
        .count();
    correct as f64 / inputs.len() as f64
}

/// Train the shared encoder and one head per task. `tasks[0]` is the main
/// task: it drives early stopping and auxiliary tasks are subsampled to its
/// training size. Returns the best-dev model together with a training
/// report.
pub fn train(
    docs: &[ParsedDocument],
    tasks: &[TaskSpec],
    cfg: &TrainConfig,
    pretrained: Option<&WordVectors>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate();
    if tasks.is_empty() {
        return Err(TrainError::NoTasks);
    }
    for t in tasks {
        if t.instances.is_empty() {
            return Err(TrainError::EmptyTask(t.name.clone()));
        }
    }

    let corpus = Corpus::build(docs, &cfg.build_options())?;
    let vocab = Vocab::from_graphs(corpus.graphs());
    let edge_labels: BTreeSet<String> =
        corpus.graphs().flat_map(|g| g.fine_labels()).collect();
    let edge_vocab = EdgeVocab::new(edge_labels);

    let mut rng = Rng::new(cfg.seed);
    let mut params = GraphLstmParams::init(
        cfg.variant,
        cfg.hidden_dim,
        cfg.word_dim,
        cfg.edge_dim,
        vocab.len(),
        edge_vocab,
        &mut rng,
    );
    if let Some(vectors) = pretrained {
        for (i, word) in vocab.words().iter().enumerate() {
            if let Some(vec) = vectors.get(word) {
                if vec.len() != cfg.word_dim {
                    return Err(TrainError::BadEmbeddingDim {
                        word: word.clone(),
                        expected: cfg.word_dim,
                        found: vec.len(),
                    });
                }
                params.word_embed.row_mut(i).copy_from_slice(vec);
            }
        }
    }
    let mut heads: Vec<TaskHead> = tasks
        .iter()
        .map(|t| TaskHead::zeros(&t.name, t.roles.clone(), cfg.hidden_dim))
        .collect();

    // Encode every instance's window once; the inputs are reused each epoch.
    let prepared: Vec<Vec<InstanceInput>> = tasks
        .iter()
        .map(|t| {
            t.instances
                .iter()
                .map(|i| prepare_instance(&corpus, &vocab, t, i))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;

    // Document-level dev split over every task's documents.
    let mut all_docs: Vec<String> = tasks
        .iter()
        .flat_map(|t| t.instances.iter().map(|i| i.doc_id.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    rng.shuffle(&mut all_docs);
    let n_dev = (((all_docs.len() as f64) * cfg.dev_fraction).round() as usize)
        .min(all_docs.len().saturating_sub(1));
    let dev_docs: BTreeSet<String> = all_docs[..n_dev].iter().cloned().collect();

    let mut train_idx: Vec<Vec<usize>> = Vec::with_capacity(tasks.len());
    for task in tasks {
        let idx: Vec<usize> = task
            .instances
            .iter()
            .enumerate()
            .filter(|(_, i)| !dev_docs.contains(&i.doc_id))
            .map(|(n, _)| n)
            .collect();
        if idx.is_empty() {
            return Err(TrainError::EmptyTask(task.name.clone()));
        }
        train_idx.push(idx);
    }
    let dev_idx: Vec<usize> = tasks[0]
        .instances
        .iter()
        .enumerate()
        .filter(|(_, i)| dev_docs.contains(&i.doc_id))
        .map(|(n, _)| n)
        .collect();

    // Subsample oversized auxiliary tasks to the main task's size, once.
    let main_n = train_idx[0].len();
    for idx in train_idx.iter_mut().skip(1) {
        if idx.len() > main_n {
            let mut keep = rng.sample_indices(idx.len(), main_n);
            keep.sort_unstable();
            *idx = keep.into_iter().map(|k| idx[k]).collect();
        }
    }

    let mut report = TrainReport {
        epochs: Vec::new(),
        best_dev_accuracy: None,
        best_epoch: None,
        stopped_early: false,
        dev_docs: dev_docs.iter().cloned().collect(),
        train_counts: tasks
            .iter()
            .zip(&train_idx)
            .map(|(t, idx)| (t.name.clone(), idx.len()))
            .collect(),
        dev_instance_count: dev_idx.len(),
    };

    let mut best: Option<(f64, GraphLstmParams, Vec<TaskHead>, usize)> = None;
    let mut bad_epochs = 0usize;

    for epoch in 0..cfg.max_epochs {
        let mut task_losses = Vec::with_capacity(tasks.len());
        for (t, inputs) in prepared.iter().enumerate() {
            let mut order = train_idx[t].clone();
            rng.shuffle(&mut order);
            let mut loss_sum = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&InstanceInput> = chunk.iter().map(|&i| &inputs[i]).collect();
                let (loss, mut enc_grads, mut head_grads) =
                    loss_and_grad(&params, &heads[t], &batch);
                if !loss.is_finite() {
                    return Err(TrainError::Diverged { epoch });
                }
                if let Some(c) = cfg.grad_clip {
                    for (_, g) in enc_grads.tensors_mut() {
                        g.clamp_mut(c);
                    }
                    head_grads.w.clamp_mut(c);
                    head_grads.b = head_grads.b.clamp(-c, c);
                }
                if cfg.freeze_word_embeddings {
                    enc_grads.word_embed.fill(0.0);
                }
                params.add_scaled_params(&enc_grads, -cfg.learning_rate);
                heads[t].w.add_scaled(&head_grads.w, -cfg.learning_rate);
                heads[t].b -= cfg.learning_rate * head_grads.b;
                loss_sum += loss * chunk.len() as f64;
            }
            task_losses.push((tasks[t].name.clone(), loss_sum / order.len() as f64));
        }
        if params.max_abs() > 1e8 {
            return Err(TrainError::Diverged { epoch });
        }

        let dev_accuracy = if dev_idx.is_empty() {
            None
        } else {
            let dev_inputs: Vec<InstanceInput> =
                dev_idx.iter().map(|&i| prepared[0][i].clone()).collect();
            Some(accuracy(&params, &heads[0], &dev_inputs))
        };
        report.epochs.push(EpochStats { epoch, task_losses, dev_accuracy });

        if let Some(acc) = dev_accuracy {
            let improved = best.as_ref().is_none_or(|(b, ..)| acc > *b);
            if improved {
                best = Some((acc, params.clone(), heads.clone(), epoch));
                bad_epochs = 0;
            } else {
                bad_epochs += 1;
                if bad_epochs >= cfg.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }

    if let Some((acc, p, h, e)) = best {
        params = p;
        heads = h;
        report.best_dev_accuracy = Some(acc);
        report.best_epoch = Some(e);
    }

    Ok(TrainOutcome {
        model: Model { config: cfg.clone(), vocab, params, heads },
        report,
    })
}

/// Classification metrics at a probability threshold; a score `>= threshold`
/// predicts the relation. Ratios with empty denominators are 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Metrics {
        let total = tp + fp + tn + fn_;
        assert!(total > 0, "metrics need at least one prediction");
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            tp,
            fp,
            tn,
            fn_,
            accuracy: (tp + tn) as f64 / total as f64,
            precision,
            recall,
            f1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Metrics from raw scores against gold labels.
pub fn metrics_from_scores(scores: &[f64], gold: &[bool], threshold: f64) -> Metrics {
    assert_eq!(scores.len(), gold.len());
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &g) in scores.iter().zip(gold) {
        match (s >= threshold, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Metrics::from_counts(tp, fp, tn, fn_)
}

fn score_instances(
    model: &Model,
    corpus: &Corpus,
    task: &str,
    instances: &[TrainInstance],
) -> Result<Vec<f64>, TrainError> {
    let head = model.head(task).ok_or_else(|| TrainError::UnknownTask(task.to_string()))?;
    let spec = TaskSpec { name: task.to_string(), roles: head.roles.clone(), instances: vec![] };
    instances
        .iter()
        .map(|inst| {
            let input = prepare_instance(corpus, &model.vocab, &spec, inst)?;
            Ok(score(&model.params, head, &input))
        })
        .collect()
}

/// Score labeled instances with a trained model and compute metrics at the
/// given threshold.
pub fn evaluate(
    model: &Model,
    docs: &[ParsedDocument],
    task: &str,
    instances: &[TrainInstance],
    threshold: f64,
) -> Result<Metrics, TrainError> {
    if instances.is_empty() {
        return Err(TrainError::NoInstances);
    }
    let corpus = Corpus::build(docs, &model.config.build_options())?;
    let scores = score_instances(model, &corpus, task, instances)?;
    let gold: Vec<bool> = instances.iter().map(|i| i.label).collect();
    Ok(metrics_from_scores(&scores, &gold, threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_docs: Vec<String>,
    pub metrics: Metrics,
    /// True when the fold's test set contains only one class; its metrics
    /// are still reported but precision/recall are degenerate.
    pub single_class_test: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossvalOutcome {
    pub folds: Vec<FoldResult>,
    /// Arithmetic mean of the fold accuracies.
    pub mean_accuracy: f64,
    /// Main-task test predictions pooled over folds (fold order, instance
    /// order within the fold) with their gold labels — the inputs paired
    /// significance tests need.
    pub pooled_predictions: Vec<bool>,
    pub pooled_gold: Vec<bool>,
}

/// K-fold cross-validation over pre-assigned document folds. Every
/// instance must carry a fold tag, tags must agree within a document, and
/// each fold trains on the other folds' documents only (disjointness is
/// asserted). Fold `f` trains under seed `derive_seed(cfg.seed, f + 1)`.
pub fn crossval(
    docs: &[ParsedDocument],
    tasks: &[TaskSpec],
    cfg: &TrainConfig,
    n_folds: usize,
    pretrained: Option<&WordVectors>,
) -> Result<CrossvalOutcome, TrainError> {
    assert!(n_folds >= 2, "cross-validation needs at least two folds");
    if tasks.is_empty() {
        return Err(TrainError::NoTasks);
    }

    // Collect and validate the document → fold map across all tasks.
    let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
    for task in tasks {
        for inst in &task.instances {
            let fold = inst
                .fold
                .ok_or_else(|| TrainError::MissingFold { doc_id: inst.doc_id.clone() })?;
            if fold >= n_folds {
                return Err(TrainError::FoldOutOfRange { fold, n_folds });
            }
            match fold_of.get(inst.doc_id.as_str()) {
                Some(&prev) if prev != fold => {
                    return Err(TrainError::InconsistentFold {
                        doc_id: inst.doc_id.clone(),
                        a: prev,
                        b: fold,
                    });
                }
                Some(_) => {}
                None => {
                    fold_of.insert(&inst.doc_id, fold);
                }
            }
        }
    }

    let mut folds = Vec::with_capacity(n_folds);
    let mut pooled_predictions = Vec::new();
    let mut pooled_gold = Vec::new();

    for fold in 0..n_folds {
        let test_instances: Vec<TrainInstance> = tasks[0]
            .instances
            .iter()
            .filter(|i| i.fold == Some(fold))
            .cloned()
            .collect();
        if test_instances.is_empty() {
            return Err(TrainError::EmptyFold { fold, task: tasks[0].name.clone() });
        }
        let test_docs: BTreeSet<String> =
            test_instances.iter().map(|i| i.doc_id.clone()).collect();

        let train_tasks: Vec<TaskSpec> = tasks
            .iter()
            .map(|t| TaskSpec {
                name: t.name.clone(),
                roles: t.roles.clone(),
                instances: t
                    .instances
                    .iter()
                    .filter(|i| i.fold != Some(fold))
                    .cloned()
                    .collect(),
            })
            .collect();
        for t in &train_tasks {
            assert!(
                t.instances.iter().all(|i| !test_docs.contains(&i.doc_id)),
                "fold {fold}: test document leaked into {} training data",
                t.name
            );
        }
        // The training corpus excludes test documents entirely, so the
        // vocabulary cannot peek at them either.
        let train_docs: Vec<ParsedDocument> = docs
            .iter()
            .filter(|d| !test_docs.contains(&d.doc_id))
            .cloned()
            .collect();

        let fold_cfg = TrainConfig { seed: derive_seed(cfg.seed, fold as u64 + 1), ..cfg.clone() };
        let outcome = train(&train_docs, &train_tasks, &fold_cfg, pretrained)?;

        let corpus = Corpus::build(docs, &cfg.build_options())?;
        let scores = score_instances(&outcome.model, &corpus, &tasks[0].name, &test_instances)?;
        let gold: Vec<bool> = test_instances.iter().map(|i| i.label).collect();
        let metrics = metrics_from_scores(&scores, &gold, 0.5);
        let single_class_test = gold.iter().all(|&g| g) || gold.iter().all(|&g| !g);

        pooled_predictions.extend(scores.iter().map(|&s| s >= 0.5));
        pooled_gold.extend(gold);
        folds.push(FoldResult {
            fold,
            test_docs: test_docs.into_iter().collect(),
            metrics,
            single_class_test,
        });
    }

    let mean_accuracy =
        folds.iter().map(|f| f.metrics.accuracy).sum::<f64>() / folds.len() as f64;
    Ok(CrossvalOutcome { folds, mean_accuracy, pooled_predictions, pooled_gold })
}

/// McNemar's chi-square test with continuity correction on the discordant
/// pairs of two classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McNemar {
    /// Instances classifier A got right and B got wrong.
    pub b: usize,
    /// Instances classifier A got wrong and B got right.
    pub c: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// Compare two aligned prediction vectors against gold labels:
/// `statistic = (|b - c| - 1)^2 / (b + c)` with the p-value from the
/// chi-square distribution with one degree of freedom (upper tail, computed
/// as `erfc(sqrt(statistic / 2))`). With no discordant pairs the statistic
/// is 0 and p is 1.
pub fn mcnemar(preds_a: &[bool], preds_b: &[bool], gold: &[bool]) -> McNemar {
    assert_eq!(preds_a.len(), gold.len(), "prediction/gold length mismatch");
    assert_eq!(preds_b.len(), gold.len(), "prediction/gold length mismatch");
    let mut b = 0usize;
    let mut c = 0usize;
    for ((&pa, &pb), &g) in preds_a.iter().zip(preds_b).zip(gold) {
        match (pa == g, pb == g) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    if b + c == 0 {
        return McNemar { b, c, statistic: 0.0, p_value: 1.0 };
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let statistic = diff * diff / (b + c) as f64;
    let p_value = statrs::function::erf::erfc((statistic / 2.0).sqrt());
    McNemar { b, c, statistic, p_value }
}

/// One relation extracted from a document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extraction {
    pub doc_id: String,
    pub task: String,
    /// Inclusive sentence interval of the supporting window.
    pub sentences: (usize, usize),
    /// Mention ids, in role order.
    pub mention_ids: Vec<String>,
    /// Case-normalized canonical tuple, in role order.
    pub tuple: Vec<String>,
    pub probability: f64,
}

/// Apply a trained model to one new document: enumerate role-consistent
/// candidates exactly as dataset construction does (same window width, same
/// minimal-span rule) and keep those scoring at least `threshold`. Output
/// is sorted by (first sentence, tuple, mention ids).
pub fn extract(
    model: &Model,
    doc: &ParsedDocument,
    task: &str,
    threshold: f64,
) -> Result<Vec<Extraction>, TrainError> {
    let head = model.head(task).ok_or_else(|| TrainError::UnknownTask(task.to_string()))?;
    let graph = build_graph(doc, &model.config.build_options())?;
    let candidates = minimal_span_filter(generate_candidates(
        std::slice::from_ref(&graph),
        &head.roles,
        model.config.k_sentences,
    ));
    let mut out = Vec::new();
    for cand in candidates {
        let input = prepare_on_graph(
            &graph,
            &model.vocab,
            &cand.mention_indices,
            cand.sentences,
            false,
        )?;
        let p = score(&model.params, head, &input);
        if p >= threshold {
            out.push(Extraction {
                doc_id: doc.doc_id.clone(),
                task: task.to_string(),
                sentences: cand.sentences,
                mention_ids: cand
                    .mention_indices
                    .iter()
                    .map(|&i| graph.entities()[i].id.clone())
                    .collect(),
                tuple: cand.tuple,
                probability: p,
            });
        }
    }
    out.sort_by(|a, b| {
        (a.sentences.0, &a.tuple, &a.mention_ids).cmp(&(b.sentences.0, &b.tuple, &b.mention_ids))
    });
    Ok(out)
}
