//! Distant supervision: candidate generation, labeling, negative sampling
//! and document-level cross-validation folds.
//!
//! Supervision comes from a knowledge base of canonical entity tuples for
//! one relation. A *candidate* is a role-consistent co-occurrence: one
//! entity mention per role (matching the role's entity type), all distinct,
//! within a window of at most `K` consecutive sentences. Candidates whose
//! canonical tuple appears in the knowledge base become positive examples;
//! negatives are sampled uniformly from the remaining candidates, whose
//! tuples — by construction — never collide with a knowledge-base tuple.
//!
//! Because distant supervision cannot tell which co-occurrence of a known
//! tuple actually expresses the relation, the *minimal-span* rule keeps a
//! candidate only if no other candidate with the same canonical tuple
//! occupies an overlapping but strictly smaller sentence interval. Canonical
//! values are matched case-insensitively throughout.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::docgraph::DocumentGraph;
use crate::numeric::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("knowledge base header needs a relation name and at least one role")]
    BadKbHeader,
    #[error("knowledge base line {line}: expected {expected} fields, found {found}")]
    BadKbArity { line: usize, expected: usize, found: usize },
    #[error("knowledge base line {line}: empty field")]
    EmptyKbField { line: usize },
    #[error("negative sampling requested {requested} instances but no unlabeled candidates exist")]
    NoNegativePool { requested: usize },
    #[error("{n_docs} distinct documents cannot fill {n_folds} folds")]
    TooFewDocs { n_docs: usize, n_folds: usize },
}

/// Canonical tuples of one n-ary relation. Tuples and lookups are
/// case-normalized, so `Gefitinib` in the knowledge base matches a mention
/// whose canonical form is `GEFITINIB`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    relation: String,
    roles: Vec<String>,
    tuples: BTreeSet<Vec<String>>,
}

fn normalize(s: &str) -> String {
    s.to_lowercase()
}

impl KnowledgeBase {
    pub fn new(
        relation: impl Into<String>,
        roles: Vec<String>,
        tuples: impl IntoIterator<Item = Vec<String>>,
    ) -> KnowledgeBase {
        assert!(!roles.is_empty(), "a relation needs at least one role");
        let arity = roles.len();
        let tuples = tuples
            .into_iter()
            .map(|t| {
                assert_eq!(t.len(), arity, "tuple arity differs from the role count");
                t.iter().map(|v| normalize(v)).collect()
            })
            .collect();
        KnowledgeBase { relation: relation.into(), roles, tuples }
    }

    /// Parse the tab-separated exchange format: the first line names the
    /// relation and its roles, every further non-empty line is one canonical
    /// tuple. Line numbers in errors are 1-based.
    pub fn parse(text: &str) -> Result<KnowledgeBase, DatasetError> {
        let mut lines = text.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((_, l)) => break l,
                None => return Err(DatasetError::BadKbHeader),
            }
        };
        let mut fields = header.split('\t').map(str::trim);
        let relation = fields.next().filter(|s| !s.is_empty()).ok_or(DatasetError::BadKbHeader)?;
        let roles: Vec<String> = fields.map(str::to_string).collect();
        if roles.is_empty() || roles.iter().any(String::is_empty) {
            return Err(DatasetError::BadKbHeader);
        }

        let mut tuples = BTreeSet::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let values: Vec<&str> = line.split('\t').map(str::trim).collect();
            if values.len() != roles.len() {
                return Err(DatasetError::BadKbArity {
                    line: i + 1,
                    expected: roles.len(),
                    found: values.len(),
                });
            }
            if values.iter().any(|v| v.is_empty()) {
                return Err(DatasetError::EmptyKbField { line: i + 1 });
            }
            tuples.insert(values.iter().map(|v| normalize(v)).collect());
        }
        Ok(KnowledgeBase { relation: relation.to_string(), roles, tuples })
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn roles(&self) -> &[String] {
        &self.roles
    }

    pub fn arity(&self) -> usize {
        self.roles.len()
    }

    /// Case-insensitive membership test; `tuple` values may be raw mention
    /// canonicals.
    pub fn contains(&self, tuple: &[String]) -> bool {
        assert_eq!(tuple.len(), self.arity());
        let key: Vec<String> = tuple.iter().map(|v| normalize(v)).collect();
        self.tuples.contains(&key)
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

/// A role-consistent mention co-occurrence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Candidate {
    /// Index of the document in the corpus slice passed to generation.
    pub doc_index: usize,
    /// One index into the document's mention list per role, in role order.
    pub mention_indices: Vec<usize>,
    /// Case-normalized canonical tuple, in role order.
    pub tuple: Vec<String>,
    /// Inclusive sentence interval covered by the mentions.
    pub sentences: (usize, usize),
}

impl Candidate {
    /// Number of sentences the candidate spans.
    pub fn width(&self) -> usize {
        self.sentences.1 - self.sentences.0 + 1
    }
}

fn mention_sentence(graph: &DocumentGraph, mention: usize) -> usize {
    let span = graph.entities()[mention].span;
    graph.tokens()[span.0].sentence
}

/// Enumerate every role-consistent candidate in every document whose
/// mention set spans at most `k_sentences` consecutive sentences. Mentions
/// within one candidate are pairwise distinct. Output order is
/// deterministic: documents in slice order, tuples in odometer order over
/// mention indices.
pub fn generate_candidates(
    graphs: &[DocumentGraph],
    roles: &[String],
    k_sentences: usize,
) -> Vec<Candidate> {
    assert!(k_sentences >= 1, "the sentence window must hold at least one sentence");
    assert!(!roles.is_empty());
    let mut out = Vec::new();
    for (doc_index, graph) in graphs.iter().enumerate() {
        // Mentions eligible for each role, in mention order.
        let by_role: Vec<Vec<usize>> = roles
            .iter()
            .map(|role| {
                graph
                    .entities()
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| m.entity_type == *role)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        if by_role.iter().any(Vec::is_empty) {
            continue;
        }

        // Odometer over one mention choice per role.
        let mut choice = vec![0usize; roles.len()];
        'odometer: loop {
            let picked: Vec<usize> =
                choice.iter().zip(&by_role).map(|(&c, pool)| pool[c]).collect();
            let distinct = picked
                .iter()
                .enumerate()
                .all(|(i, m)| picked[..i].iter().all(|p| p != m));
            if distinct {
                let sents: Vec<usize> =
                    picked.iter().map(|&m| mention_sentence(graph, m)).collect();
                let lo = *sents.iter().min().unwrap();
                let hi = *sents.iter().max().unwrap();
                let width = hi - lo + 1;
                if width <= k_sentences {
                    out.push(Candidate {
                        doc_index,
                        tuple: picked
                            .iter()
                            .map(|&m| normalize(&graph.entities()[m].canonical))
                            .collect(),
                        mention_indices: picked,
                        sentences: (lo, hi),
                    });
                }
            }
            // Advance the odometer, last role fastest.
            for r in (0..roles.len()).rev() {
                choice[r] += 1;
                if choice[r] < by_role[r].len() {
                    continue 'odometer;
                }
                choice[r] = 0;
            }
            break;
        }
    }
    out
}

fn intervals_overlap(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

/// Minimal-span rule: drop a candidate when another candidate with the same
/// canonical tuple (in the same document) covers an overlapping sentence
/// interval with strictly fewer sentences. Comparison is against *all*
/// same-tuple candidates, so a chain of ever-smaller overlapping
/// co-occurrences removes everything but the local minima. Input order is
/// preserved for the survivors.
pub fn minimal_span_filter(candidates: Vec<Candidate>) -> Vec<Candidate> {
    type TupleSpans<'a> = HashMap<(usize, &'a [String]), Vec<(usize, usize)>>;
    let mut groups: TupleSpans = HashMap::new();
    for c in &candidates {
        groups.entry((c.doc_index, &c.tuple)).or_default().push(c.sentences);
    }
    candidates
        .iter()
        .filter(|c| {
            let peers = &groups[&(c.doc_index, c.tuple.as_slice())];
            !peers.iter().any(|&p| {
                p.1 - p.0 < c.sentences.1 - c.sentences.0 && intervals_overlap(p, c.sentences)
            })
        })
        .cloned()
        .collect()
}

/// A candidate with its distant-supervision label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LabeledCandidate {
    pub candidate: Candidate,
    pub label: bool,
}

/// Split candidates into positives (canonical tuple in the knowledge base)
/// and the unlabeled pool negatives are drawn from.
pub fn split_by_label(
    candidates: Vec<Candidate>,
    kb: &KnowledgeBase,
) -> (Vec<Candidate>, Vec<Candidate>) {
    candidates.into_iter().partition(|c| kb.contains(&c.tuple))
}

/// Draw `round(ratio * n_positives)` negatives uniformly without
/// replacement, capped at the pool size. Requesting a positive number of
/// negatives from an empty pool is an error; the selection preserves pool
/// order.
pub fn sample_negatives(
    pool: &[Candidate],
    n_positives: usize,
    ratio: f64,
    rng: &mut Rng,
) -> Result<Vec<Candidate>, DatasetError> {
    assert!(ratio >= 0.0 && ratio.is_finite(), "negative ratio must be a finite non-negative number");
    let requested = (ratio * n_positives as f64).round() as usize;
    if requested == 0 {
        return Ok(Vec::new());
    }
    if pool.is_empty() {
        return Err(DatasetError::NoNegativePool { requested });
    }
    let k = requested.min(pool.len());
    let mut idx = rng.sample_indices(pool.len(), k);
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pool[i].clone()).collect())
}

/// Dataset construction parameters.
#[derive(Debug, Clone, Copy)]
pub struct DatasetParams {
    /// Maximum number of consecutive sentences a candidate may span.
    pub k_sentences: usize,
    /// Negatives per positive.
    pub neg_ratio: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams { k_sentences: 3, neg_ratio: 1.0 }
    }
}

/// Candidate accounting from one dataset build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetStats {
    /// Role-consistent co-occurrences within the sentence window.
    pub generated: usize,
    /// Candidates surviving the minimal-span rule.
    pub after_minimal_span: usize,
    /// Candidates whose tuple appears in the knowledge base.
    pub positives: usize,
    /// Unlabeled candidates available for negative sampling.
    pub negative_pool: usize,
    /// Negatives actually drawn.
    pub negatives: usize,
}

/// Full pipeline: enumerate candidates, apply the minimal-span rule, label
/// against the knowledge base and sample negatives. The result is sorted by
/// `(document, sentence interval, mentions)`.
pub fn build_dataset(
    graphs: &[DocumentGraph],
    kb: &KnowledgeBase,
    params: &DatasetParams,
    rng: &mut Rng,
) -> Result<(Vec<LabeledCandidate>, DatasetStats), DatasetError> {
    let generated = generate_candidates(graphs, kb.roles(), params.k_sentences);
    let n_generated = generated.len();
    let candidates = minimal_span_filter(generated);
    let n_minimal = candidates.len();
    let (positives, pool) = split_by_label(candidates, kb);
    let stats_base = (positives.len(), pool.len());
    let negatives = sample_negatives(&pool, positives.len(), params.neg_ratio, rng)?;
    let stats = DatasetStats {
        generated: n_generated,
        after_minimal_span: n_minimal,
        positives: stats_base.0,
        negative_pool: stats_base.1,
        negatives: negatives.len(),
    };
    let mut out: Vec<LabeledCandidate> = positives
        .into_iter()
        .map(|candidate| LabeledCandidate { candidate, label: true })
        .chain(negatives.into_iter().map(|candidate| LabeledCandidate { candidate, label: false }))
        .collect();
    out.sort_by(|a, b| {
        (a.candidate.doc_index, a.candidate.sentences, &a.candidate.mention_indices)
            .cmp(&(b.candidate.doc_index, b.candidate.sentences, &b.candidate.mention_indices))
    });
    Ok((out, stats))
}

/// Assign every distinct document id to one of `n_folds` cross-validation
/// folds: ids are sorted, shuffled under the given RNG, and dealt
/// round-robin, so fold sizes differ by at most one.
pub fn assign_folds(
    doc_ids: impl IntoIterator<Item = String>,
    n_folds: usize,
    rng: &mut Rng,
) -> Result<BTreeMap<String, usize>, DatasetError> {
    assert!(n_folds >= 1, "need at least one fold");
    let distinct: BTreeSet<String> = doc_ids.into_iter().collect();
    if distinct.len() < n_folds {
        return Err(DatasetError::TooFewDocs { n_docs: distinct.len(), n_folds });
    }
    let mut ids: Vec<String> = distinct.into_iter().collect();
    rng.shuffle(&mut ids);
    Ok(ids.into_iter().enumerate().map(|(i, id)| (id, i % n_folds)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docgraph::{build_graph, BuildOptions, MentionRecord, ParsedDocument, ParsedToken};

    fn doc_with_mentions(
        doc_id: &str,
        n_sentences: usize,
        mentions: &[(&str, usize, &str)], // (type, sentence, canonical)
    ) -> DocumentGraph {
        // Two tokens per sentence so spans can sit inside one sentence.
        let tokens: Vec<ParsedToken> = (0..n_sentences)
            .flat_map(|s| {
                (0..2).map(move |i| ParsedToken { text: format!("s{s}t{i}"), sentence: s })
            })
            .collect();
        let entities = mentions
            .iter()
            .enumerate()
            .map(|(i, (ty, sent, canon))| MentionRecord {
                id: format!("m{i}"),
                entity_type: ty.to_string(),
                start: sent * 2,
                end: sent * 2,
                canonical: canon.to_string(),
            })
            .collect();
        let doc = ParsedDocument {
            doc_id: doc_id.to_string(),
            tokens,
            deps: vec![],
            entities,
            coref: vec![],
            discourse: vec![],
        };
        build_graph(&doc, &BuildOptions::default()).unwrap()
    }

    fn roles(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn kb_parses_and_normalizes_case() {
        let kb = KnowledgeBase::parse(
            "responds\tdrug\tgene\tmutation\nGefitinib\tEGFR\tL858R\ntagrisso\tegfr\tT790M\n",
        )
        .unwrap();
        assert_eq!(kb.relation(), "responds");
        assert_eq!(kb.roles(), &["drug", "gene", "mutation"]);
        assert_eq!(kb.len(), 2);
        assert!(kb.contains(&[
            "GEFITINIB".to_string(),
            "egfr".to_string(),
            "l858r".to_string()
        ]));
        assert!(!kb.contains(&[
            "gefitinib".to_string(),
            "egfr".to_string(),
            "t790m".to_string()
        ]));
    }

    #[test]
    fn kb_rejects_malformed_input() {
        assert_eq!(KnowledgeBase::parse(""), Err(DatasetError::BadKbHeader));
        assert_eq!(KnowledgeBase::parse("rel"), Err(DatasetError::BadKbHeader));
        assert_eq!(
            KnowledgeBase::parse("rel\tdrug\tgene\na\tb\tc"),
            Err(DatasetError::BadKbArity { line: 2, expected: 2, found: 3 })
        );
        assert_eq!(
            KnowledgeBase::parse("rel\tdrug\na\nx\ty\nb"),
            Err(DatasetError::BadKbArity { line: 3, expected: 1, found: 2 })
        );
        assert_eq!(
            KnowledgeBase::parse("rel\tdrug\tgene\na\t \n"),
            Err(DatasetError::EmptyKbField { line: 2 })
        );
        // Whitespace-only lines are skipped, not parsed as tuples.
        assert_eq!(KnowledgeBase::parse("rel\tdrug\na\n\t\nb").unwrap().len(), 2);
        // Header-only knowledge bases are legal, just empty.
        assert!(KnowledgeBase::parse("rel\tdrug").unwrap().is_empty());
    }

    #[test]
    fn candidates_respect_the_sentence_window() {
        let g = doc_with_mentions(
            "d1",
            3,
            &[("drug", 0, "d"), ("gene", 1, "g"), ("mutation", 2, "m")],
        );
        let all = generate_candidates(
            std::slice::from_ref(&g),
            &roles(&["drug", "gene", "mutation"]),
            3,
        );
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].sentences, (0, 2));
        assert_eq!(all[0].tuple, vec!["d", "g", "m"]);
        assert_eq!(all[0].mention_indices, vec![0, 1, 2]);

        let narrow =
            generate_candidates(&[g], &roles(&["drug", "gene", "mutation"]), 2);
        assert!(narrow.is_empty());
    }

    #[test]
    fn candidates_with_repeated_role_types_use_distinct_mentions() {
        let g = doc_with_mentions("d1", 1, &[("gene", 0, "g1"), ("gene", 0, "g2")]);
        let cands = generate_candidates(&[g], &roles(&["gene", "gene"]), 1);
        let pairs: Vec<Vec<usize>> =
            cands.iter().map(|c| c.mention_indices.clone()).collect();
        assert_eq!(pairs, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn minimal_span_keeps_only_locally_minimal_co_occurrences() {
        // All four (drug, gene, mutation) combinations share the tuple
        // (d, g, m); the single-sentence one wins and every wider overlapping
        // interval is dropped. A distinct tuple (d2, g, m) is untouched.
        let g = doc_with_mentions(
            "d1",
            3,
            &[
                ("drug", 0, "d"),
                ("gene", 1, "g"),
                ("mutation", 2, "m"),
                ("drug", 2, "d"),
                ("gene", 2, "g"),
                ("drug", 0, "d2"),
            ],
        );
        let cands = generate_candidates(&[g], &roles(&["drug", "gene", "mutation"]), 3);
        // (0,1,2) w3, (0,4,2) w3, (3,1,2) w2, (3,4,2) w1, (5,1,2) w3, (5,4,2) w3.
        assert_eq!(cands.len(), 6);
        let kept = minimal_span_filter(cands);
        let kept_mentions: Vec<Vec<usize>> =
            kept.iter().map(|c| c.mention_indices.clone()).collect();
        assert_eq!(kept_mentions, vec![vec![3, 4, 2], vec![5, 1, 2], vec![5, 4, 2]]);
    }

    #[test]
    fn minimal_span_ignores_non_overlapping_intervals() {
        let mk = |sentences: (usize, usize)| Candidate {
            doc_index: 0,
            mention_indices: vec![sentences.0],
            tuple: vec!["x".to_string()],
            sentences,
        };
        // (4,5) does not overlap (0,0), so both survive; (2,4) overlaps (4,5)?
        // width 3 vs 2 — (4,5) is smaller and they share sentence 4.
        let kept = minimal_span_filter(vec![mk((0, 0)), mk((2, 4)), mk((4, 5))]);
        let spans: Vec<(usize, usize)> = kept.iter().map(|c| c.sentences).collect();
        assert_eq!(spans, vec![(0, 0), (4, 5)]);
    }

    /// First-principles restatement of the rule, used as the oracle: keep
    /// candidate `i` iff every other same-document same-tuple candidate `j`
    /// either has width >= width(i) or does not overlap it.
    fn minimal_span_oracle(cands: &[Candidate]) -> Vec<Candidate> {
        let mut kept = Vec::new();
        for (i, c) in cands.iter().enumerate() {
            let mut ok = true;
            for (j, other) in cands.iter().enumerate() {
                if i == j
                    || other.doc_index != c.doc_index
                    || other.tuple != c.tuple
                {
                    continue;
                }
                let overlap = other.sentences.0.max(c.sentences.0)
                    <= other.sentences.1.min(c.sentences.1);
                if overlap && other.width() < c.width() {
                    ok = false;
                    break;
                }
            }
            if ok {
                kept.push(c.clone());
            }
        }
        kept
    }

    #[test]
    fn minimal_span_matches_the_oracle_on_random_documents() {
        let mut rng = Rng::new(404);
        let role_names = roles(&["drug", "gene", "mutation"]);
        for _ in 0..200 {
            let n_sent = 1 + rng.below(8) as usize;
            let n_mentions = 1 + rng.below(12) as usize;
            let mentions: Vec<(&str, usize, String)> = (0..n_mentions)
                .map(|_| {
                    let ty = ["drug", "gene", "mutation"][rng.below(3) as usize];
                    let sent = rng.below(n_sent as u64) as usize;
                    // Few canonicals so duplicate tuples are common.
                    let canon = format!("{}{}", ty, rng.below(2));
                    (ty, sent, canon)
                })
                .collect();
            let refs: Vec<(&str, usize, &str)> =
                mentions.iter().map(|(t, s, c)| (*t, *s, c.as_str())).collect();
            let g = doc_with_mentions("d", n_sent, &refs);
            let cands = generate_candidates(&[g], &role_names, 3);
            assert_eq!(minimal_span_filter(cands.clone()), minimal_span_oracle(&cands));
        }
    }

    #[test]
    fn negative_sampling_is_seeded_capped_and_guarded() {
        let mk = |i: usize| Candidate {
            doc_index: 0,
            mention_indices: vec![i],
            tuple: vec![format!("c{i}")],
            sentences: (0, 0),
        };
        let pool: Vec<Candidate> = (0..10).map(mk).collect();

        let a = sample_negatives(&pool, 4, 1.0, &mut Rng::new(7)).unwrap();
        let b = sample_negatives(&pool, 4, 1.0, &mut Rng::new(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        let distinct: BTreeSet<_> = a.iter().map(|c| c.mention_indices[0]).collect();
        assert_eq!(distinct.len(), 4);

        // round(2.4 * 2) = 5
        assert_eq!(sample_negatives(&pool, 2, 2.4, &mut Rng::new(1)).unwrap().len(), 5);
        // Capped at the pool.
        assert_eq!(sample_negatives(&pool, 100, 1.0, &mut Rng::new(1)).unwrap().len(), 10);
        // Zero requested is fine even with an empty pool.
        assert!(sample_negatives(&[], 0, 1.0, &mut Rng::new(1)).unwrap().is_empty());
        assert!(sample_negatives(&[], 5, 0.0, &mut Rng::new(1)).unwrap().is_empty());
        assert_eq!(
            sample_negatives(&[], 5, 1.0, &mut Rng::new(1)),
            Err(DatasetError::NoNegativePool { requested: 5 })
        );
    }

    #[test]
    fn build_dataset_labels_and_sorts() {
        let g1 = doc_with_mentions(
            "a",
            2,
            &[("drug", 0, "Gefitinib"), ("gene", 1, "EGFR")],
        );
        let g2 = doc_with_mentions(
            "b",
            1,
            &[("drug", 0, "placebo"), ("gene", 0, "BRCA1")],
        );
        let kb = KnowledgeBase::parse("targets\tdrug\tgene\nGEFITINIB\tegfr\n").unwrap();
        let (data, stats) = build_dataset(
            &[g1, g2],
            &kb,
            &DatasetParams { k_sentences: 3, neg_ratio: 1.0 },
            &mut Rng::new(3),
        )
        .unwrap();
        assert_eq!(data.len(), 2);
        assert!(data[0].label && data[0].candidate.doc_index == 0);
        assert!(!data[1].label && data[1].candidate.doc_index == 1);
        assert_eq!(data[1].candidate.tuple, vec!["placebo", "brca1"]);
        assert_eq!(stats.generated, 2);
        assert_eq!(stats.after_minimal_span, 2);
        assert_eq!((stats.positives, stats.negatives, stats.negative_pool), (1, 1, 1));
    }

    #[test]
    fn fold_assignment_deals_documents_round_robin() {
        let ids: Vec<String> = (0..7).map(|i| format!("doc{i}")).collect();
        let folds = assign_folds(ids.clone(), 5, &mut Rng::new(11)).unwrap();
        assert_eq!(folds.len(), 7);
        let mut sizes = vec![0usize; 5];
        for &f in folds.values() {
            sizes[f] += 1;
        }
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 1, 1, 2, 2]);

        let again = assign_folds(ids.clone(), 5, &mut Rng::new(11)).unwrap();
        assert_eq!(folds, again);
        // Duplicate ids collapse before the count check.
        let dup: Vec<String> = ids.iter().chain(ids.iter()).cloned().collect();
        assert_eq!(assign_folds(dup, 5, &mut Rng::new(11)).unwrap(), folds);

        assert_eq!(
            assign_folds(ids[..3].to_vec(), 5, &mut Rng::new(0)),
            Err(DatasetError::TooFewDocs { n_docs: 3, n_folds: 5 })
        );
    }
}
