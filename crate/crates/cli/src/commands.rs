//! Command implementations. Every command prints deterministic output for
//! fixed inputs and flags — no timings, no machine-dependent text — so
//! reruns are byte-identical and pipelines can diff them.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use relex_core::dataset::{assign_folds, build_dataset, DatasetParams, KnowledgeBase};
use relex_core::docgraph::{build_graph, BuildOptions, DocumentGraph};
use relex_core::gradcheck::run_suite;
use relex_core::graph_lstm::Variant;
use relex_core::numeric::Rng;
use relex_core::train_eval::{
    crossval, evaluate, extract, train, Extraction, Metrics, TaskSpec, TrainConfig, WordVectors,
};

use crate::checkpoint::{load_model, save_model};
use crate::formats::{
    group_into_tasks, load_corpus, load_embeddings, load_instances, write_instances,
    InstanceRecord,
};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn check_distinct_doc_ids(docs: &[relex_core::docgraph::ParsedDocument]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for d in docs {
        if !seen.insert(d.doc_id.as_str()) {
            bail!("duplicate document id {}", d.doc_id);
        }
    }
    Ok(())
}

pub fn cmd_build_dataset(
    corpus: &Path,
    kb_path: &Path,
    out: &Path,
    k_sentences: usize,
    neg_ratio: f64,
    folds: usize,
    seed: u64,
) -> Result<()> {
    let docs = load_corpus(corpus)?;
    check_distinct_doc_ids(&docs)?;
    let kb_text = fs::read_to_string(kb_path)
        .with_context(|| format!("reading knowledge base {}", kb_path.display()))?;
    let kb = KnowledgeBase::parse(&kb_text)
        .with_context(|| format!("parsing knowledge base {}", kb_path.display()))?;

    for role in kb.roles() {
        if !docs.iter().any(|d| d.entities.iter().any(|m| &m.entity_type == role)) {
            bail!("role {role} matches no entity mention type in the corpus");
        }
    }

    let graphs: Vec<DocumentGraph> = docs
        .iter()
        .map(|d| build_graph(d, &BuildOptions::default()))
        .collect::<Result<_, _>>()?;
    let mut rng = Rng::new(seed);
    let params = DatasetParams { k_sentences, neg_ratio };
    let (labeled, stats) = build_dataset(&graphs, &kb, &params, &mut rng)?;
    if labeled.is_empty() {
        bail!("no labeled instances produced; check the knowledge base and the sentence window");
    }
    let fold_of = assign_folds(
        labeled.iter().map(|lc| graphs[lc.candidate.doc_index].doc_id.clone()),
        folds,
        &mut rng,
    )?;

    let records: Vec<InstanceRecord> = labeled
        .iter()
        .map(|lc| {
            let g = &graphs[lc.candidate.doc_index];
            InstanceRecord {
                doc: g.doc_id.clone(),
                task: kb.relation().to_string(),
                roles: kb.roles().to_vec(),
                mentions: lc
                    .candidate
                    .mention_indices
                    .iter()
                    .map(|&mi| g.entities()[mi].id.clone())
                    .collect(),
                sentences: lc.candidate.sentences,
                label: lc.label,
                fold: Some(fold_of[&g.doc_id]),
            }
        })
        .collect();
    write_instances(out, &records)?;

    println!("candidates {}", stats.generated);
    println!("after minimal-span filter {}", stats.after_minimal_span);
    println!("positives {}", stats.positives);
    println!("negative pool {}", stats.negative_pool);
    println!("negatives sampled {}", stats.negatives);
    println!("instances written {}", records.len());
    Ok(())
}

/// Reorder/restrict tasks per `--multitask`; without the flag, train only
/// the first task in the file.
fn select_tasks(mut tasks: Vec<TaskSpec>, wanted: &[String]) -> Result<Vec<TaskSpec>> {
    if tasks.is_empty() {
        bail!("instance file holds no instances");
    }
    if wanted.is_empty() {
        return Ok(vec![tasks.remove(0)]);
    }
    let distinct: BTreeSet<&String> = wanted.iter().collect();
    if distinct.len() != wanted.len() {
        bail!("--multitask lists a task twice");
    }
    wanted
        .iter()
        .map(|name| {
            tasks
                .iter()
                .find(|t| &t.name == name)
                .cloned()
                .with_context(|| format!("task {name} not present in the instance file"))
        })
        .collect()
}

fn load_pretrained(
    embeddings: Option<&Path>,
    cfg: &TrainConfig,
) -> Result<Option<WordVectors>> {
    match embeddings {
        None => Ok(None),
        Some(path) => {
            let (vectors, dim) = load_embeddings(path)?;
            if dim != cfg.word_dim {
                bail!(
                    "embedding file {} holds {dim}-dimensional vectors, configured word dimension is {}",
                    path.display(),
                    cfg.word_dim
                );
            }
            Ok(Some(vectors))
        }
    }
}

pub fn cmd_train(
    corpus: &Path,
    instances: &Path,
    out: &Path,
    cfg: TrainConfig,
    embeddings: Option<&Path>,
    multitask: &[String],
) -> Result<()> {
    let docs = load_corpus(corpus)?;
    let records = load_instances(instances)?;
    let tasks = select_tasks(group_into_tasks(&records, &docs)?, multitask)?;
    let pretrained = load_pretrained(embeddings, &cfg)?;

    let outcome = train(&docs, &tasks, &cfg, pretrained.as_ref())?;
    save_model(&outcome.model, out)?;

    let report = &outcome.report;
    for (name, n) in &report.train_counts {
        println!("task {name}: {n} training instances");
    }
    println!(
        "dev split: {} documents, {} instances",
        report.dev_docs.len(),
        report.dev_instance_count
    );
    for e in &report.epochs {
        let losses: Vec<String> =
            e.task_losses.iter().map(|(n, l)| format!("{n} loss {l:.6}")).collect();
        match e.dev_accuracy {
            Some(a) => println!("epoch {}: {}, dev accuracy {a:.6}", e.epoch, losses.join(", ")),
            None => println!("epoch {}: {}", e.epoch, losses.join(", ")),
        }
    }
    match (report.best_epoch, report.best_dev_accuracy) {
        (Some(e), Some(a)) => println!("best epoch {e} (dev accuracy {a:.6})"),
        _ => println!("no dev split; kept the final parameters"),
    }
    println!("stopped early: {}", report.stopped_early);
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn print_metrics(m: &Metrics) {
    println!("tp {}", m.tp);
    println!("fp {}", m.fp);
    println!("tn {}", m.tn);
    println!("fn {}", m.fn_);
    println!("accuracy {:.6}", m.accuracy);
    println!("precision {:.6}", m.precision);
    println!("recall {:.6}", m.recall);
    println!("f1 {:.6}", m.f1);
}

pub fn cmd_eval(
    checkpoint: &Path,
    corpus: &Path,
    instances: &Path,
    task: Option<&str>,
    threshold: f64,
) -> Result<()> {
    let model = load_model(checkpoint)?;
    let docs = load_corpus(corpus)?;
    let records = load_instances(instances)?;
    let tasks = group_into_tasks(&records, &docs)?;
    let task_name = task.unwrap_or(&model.heads[0].task).to_string();
    let spec = tasks
        .iter()
        .find(|t| t.name == task_name)
        .with_context(|| format!("instance file has no instances for task {task_name}"))?;

    let metrics = evaluate(&model, &docs, &task_name, &spec.instances, threshold)?;
    println!("task {task_name}");
    println!("instances {}", spec.instances.len());
    println!("threshold {threshold:.6}");
    print_metrics(&metrics);
    Ok(())
}

pub fn cmd_crossval(
    corpus: &Path,
    instances: &Path,
    folds: usize,
    cfg: TrainConfig,
    embeddings: Option<&Path>,
    multitask: &[String],
) -> Result<()> {
    let docs = load_corpus(corpus)?;
    let records = load_instances(instances)?;
    let tasks = select_tasks(group_into_tasks(&records, &docs)?, multitask)?;
    let pretrained = load_pretrained(embeddings, &cfg)?;

    let outcome = crossval(&docs, &tasks, &cfg, folds, pretrained.as_ref())?;
    for f in &outcome.folds {
        println!(
            "fold {}: test docs {}, accuracy {:.6}, precision {:.6}, recall {:.6}, f1 {:.6}",
            f.fold,
            f.test_docs.len(),
            f.metrics.accuracy,
            f.metrics.precision,
            f.metrics.recall,
            f.metrics.f1
        );
        if f.single_class_test {
            println!("warning: fold {} test set contains a single class", f.fold);
        }
    }
    println!("mean accuracy {:.6}", outcome.mean_accuracy);
    Ok(())
}

pub fn cmd_extract(
    checkpoint: &Path,
    corpus: &Path,
    task: Option<&str>,
    threshold: f64,
) -> Result<()> {
    let model = load_model(checkpoint)?;
    let docs = load_corpus(corpus)?;
    check_distinct_doc_ids(&docs)?;
    let task_name = task.unwrap_or(&model.heads[0].task).to_string();
    if model.head(&task_name).is_none() {
        bail!("checkpoint has no task {task_name}");
    }

    // Documents are scored in parallel; output order is fixed by the final
    // sort, so the parallelism never shows in the bytes.
    let per_doc: Vec<Vec<Extraction>> = docs
        .par_iter()
        .map(|d| extract(&model, d, &task_name, threshold))
        .collect::<Result<_, _>>()?;
    let mut hits: Vec<Extraction> = per_doc.into_iter().flatten().collect();
    hits.sort_by(|a, b| {
        (&a.doc_id, a.sentences.0, &a.tuple, &a.mention_ids)
            .cmp(&(&b.doc_id, b.sentences.0, &b.tuple, &b.mention_ids))
    });

    for e in &hits {
        println!(
            "{}\t{}\t{}-{}\t{}\t{}\t{:.6}",
            e.doc_id,
            e.task,
            e.sentences.0,
            e.sentences.1,
            e.tuple.join("|"),
            e.mention_ids.join("|"),
            e.probability
        );
    }
    println!("extracted {} relations at threshold {threshold:.6}", hits.len());
    Ok(())
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Full => "full",
        Variant::Embed => "embed",
    }
}

pub fn cmd_gradcheck(variant: Option<Variant>, instances: usize, seed: u64) -> Result<()> {
    let variants = match variant {
        Some(v) => vec![v],
        None => vec![Variant::Full, Variant::Embed],
    };
    let mut all_passed = true;
    for v in variants {
        let report = run_suite(v, instances, seed);
        let verdict = if report.passed(GRADCHECK_TOLERANCE) { "PASS" } else { "FAIL" };
        println!(
            "variant {}: max rel err {:.3e} over {} parameters ({} instances) {verdict}",
            variant_name(v),
            report.max_rel_err,
            report.parameters_checked,
            report.instances
        );
        all_passed &= report.passed(GRADCHECK_TOLERANCE);
    }
    if !all_passed {
        bail!("gradient check failed (tolerance {GRADCHECK_TOLERANCE:e})");
    }
    Ok(())
}
