//! Seeded synthetic data generators used by the test suites and the
//! self-check commands: random parsed documents for structural property
//! tests, mention-rich documents for candidate-generation oracles, small
//! documents for gradient checking, and a trigger-pattern corpus on which a
//! correct implementation must demonstrably learn.
//!
//! Everything here is a pure function of the supplied RNG, so identical
//! seeds reproduce identical data.

use crate::docgraph::{DepArc, ExtraEdge, MentionRecord, ParsedDocument, ParsedToken};
use crate::numeric::Rng;
use crate::train_eval::{TaskSpec, TrainInstance};

const DEP_LABELS: [&str; 6] = ["nsubj", "dobj", "amod", "det", "prep_of", "advmod"];

fn pick<'a>(rng: &mut Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.below(pool.len() as u64) as usize]
}

/// A random multi-sentence document with arbitrary (possibly cyclic)
/// dependency arcs, occasional coreference and discourse links, and no
/// entities. Suited to graph-construction and DAG-partition property tests.
pub fn random_document(rng: &mut Rng, doc_id: &str) -> ParsedDocument {
    let n_sentences = 1 + rng.below(3) as usize;
    let mut tokens = Vec::new();
    let mut sentence_spans = Vec::new();
    for s in 0..n_sentences {
        let len = 1 + rng.below(5) as usize;
        let start = tokens.len();
        for _ in 0..len {
            tokens.push(ParsedToken {
                text: format!("w{}", rng.below(30)),
                sentence: s,
            });
        }
        sentence_spans.push((start, tokens.len()));
    }

    let mut deps = Vec::new();
    for &(start, end) in &sentence_spans {
        if end - start < 2 {
            continue;
        }
        let root = start + rng.below((end - start) as u64) as usize;
        deps.push(DepArc { head: -1, modifier: root, label: "root".to_string() });
        for m in start..end {
            if m == root || rng.below(5) == 0 {
                continue; // ~20% of tokens stay unattached
            }
            // Any other token may serve as head, cycles included.
            let mut head = start + rng.below((end - start) as u64) as usize;
            if head == m {
                head = root;
            }
            if head == m {
                continue;
            }
            deps.push(DepArc {
                head: head as i64,
                modifier: m,
                label: pick(rng, &DEP_LABELS).to_string(),
            });
        }
    }

    let mut coref = Vec::new();
    if n_sentences >= 2 && rng.below(2) == 0 {
        let a = rng.below(sentence_spans[0].1 as u64) as usize;
        let (s_last, e_last) = *sentence_spans.last().unwrap();
        let b = s_last + rng.below((e_last - s_last) as u64) as usize;
        if a != b {
            coref.push(ExtraEdge { src: a, dst: b, label: "coref".to_string() });
        }
    }
    let mut discourse = Vec::new();
    if rng.below(10) < 3 && tokens.len() >= 2 {
        let a = rng.below(tokens.len() as u64) as usize;
        let b = rng.below(tokens.len() as u64) as usize;
        if a != b {
            discourse.push(ExtraEdge { src: a, dst: b, label: "expansion".to_string() });
        }
    }

    ParsedDocument {
        doc_id: doc_id.to_string(),
        tokens,
        deps,
        entities: vec![],
        coref,
        discourse,
    }
}

/// A small two-sentence document of 3–8 tokens whose built graph always
/// carries at least three coarse edge types (adjacency, dependency,
/// inter-sentence), often four or five. Used by the gradient-check suites.
pub fn gradcheck_document(rng: &mut Rng, doc_id: &str) -> ParsedDocument {
    let n = 3 + rng.below(6) as usize;
    let split = 1 + rng.below(n as u64 - 1) as usize; // first sentence length
    let tokens: Vec<ParsedToken> = (0..n)
        .map(|i| ParsedToken {
            text: format!("w{}", rng.below(12)),
            sentence: usize::from(i >= split),
        })
        .collect();

    // Star parse per sentence rooted at its first token; the sentence with
    // at least two tokens guarantees a dependency edge.
    let mut deps = Vec::new();
    for (start, end) in [(0, split), (split, n)] {
        deps.push(DepArc { head: -1, modifier: start, label: "root".to_string() });
        for m in start + 1..end {
            deps.push(DepArc {
                head: start as i64,
                modifier: m,
                label: pick(rng, &DEP_LABELS).to_string(),
            });
        }
    }

    let mut coref = Vec::new();
    if rng.below(10) < 4 {
        coref.push(ExtraEdge { src: 0, dst: split, label: "coref".to_string() });
    }
    let mut discourse = Vec::new();
    if rng.below(10) < 3 && split >= 2 {
        discourse.push(ExtraEdge { src: 1, dst: n - 1, label: "elaboration".to_string() });
    }

    ParsedDocument { doc_id: doc_id.to_string(), tokens, deps, entities: vec![], coref, discourse }
}

/// A document dense in entity mentions with deliberately small canonical
/// pools, so identical tuples co-occur in several windows. Exercises
/// candidate generation and the minimal-span rule: ≤8 sentences,
/// ≤12 mentions.
pub fn mention_document(rng: &mut Rng, doc_id: &str, types: &[&str]) -> ParsedDocument {
    assert!(!types.is_empty());
    let n_sentences = 1 + rng.below(8) as usize;
    let per_sentence: Vec<usize> = (0..n_sentences).map(|_| 1 + rng.below(3) as usize).collect();
    let mut tokens = Vec::new();
    let mut sentence_start = Vec::new();
    for (s, &len) in per_sentence.iter().enumerate() {
        sentence_start.push(tokens.len());
        for _ in 0..len {
            tokens.push(ParsedToken { text: format!("w{}", rng.below(20)), sentence: s });
        }
    }

    let n_mentions = 1 + rng.below(12) as usize;
    let entities: Vec<MentionRecord> = (0..n_mentions)
        .map(|i| {
            let ty = pick(rng, types);
            let s = rng.below(n_sentences as u64) as usize;
            let tok = sentence_start[s] + rng.below(per_sentence[s] as u64) as usize;
            MentionRecord {
                id: format!("m{i}"),
                entity_type: ty.to_string(),
                start: tok,
                end: tok,
                // Two canonicals per type force same-tuple collisions.
                canonical: format!("{}{}", ty, rng.below(2)),
            }
        })
        .collect();

    ParsedDocument {
        doc_id: doc_id.to_string(),
        tokens,
        deps: vec![],
        entities,
        coref: vec![],
        discourse: vec![],
    }
}

/// A generated corpus with a ternary task and its binary sub-task sharing
/// the same supervision signal.
#[derive(Debug, Clone)]
pub struct TriggerCorpus {
    pub docs: Vec<ParsedDocument>,
    pub ternary: TaskSpec,
    pub binary: TaskSpec,
}

const POS_VERB_0: &str = "activates";
const NEG_VERB_0: &str = "blocks";
const POS_VERB_1: &str = "confirms";
const NEG_VERB_1: &str = "denies";

/// Build `n_instances` two-sentence documents with a planted cross-sentence
/// trigger pattern: positive documents pair `activates` (sentence 0) with
/// `confirms` (sentence 1), negative documents pair `blocks` with `denies`,
/// so each sentence carries one half of the trigger pair and the evidence
/// spans the sentence boundary. Labels alternate, giving an exactly
/// balanced corpus; entity surface forms are shared across classes and
/// carry no signal.
pub fn trigger_corpus(rng: &mut Rng, n_instances: usize) -> TriggerCorpus {
    let mut docs = Vec::with_capacity(n_instances);
    let mut ternary_instances = Vec::with_capacity(n_instances);
    let mut binary_instances = Vec::with_capacity(n_instances);

    for i in 0..n_instances {
        let label = i % 2 == 0;
        let (v0, v1) = if label {
            (POS_VERB_0, POS_VERB_1)
        } else {
            (NEG_VERB_0, NEG_VERB_1)
        };
        let drug = format!("drug{}", rng.below(8));
        let gene = format!("gene{}", rng.below(8));
        let mutation = format!("mut{}", rng.below(8));

        // Sentence 0: <drug> <v0> <gene>; sentence 1: <mutation> <v1> effect.
        let words = [
            (drug.clone(), 0),
            (v0.to_string(), 0),
            (gene.clone(), 0),
            (mutation.clone(), 1),
            (v1.to_string(), 1),
            ("effect".to_string(), 1),
        ];
        let tokens: Vec<ParsedToken> = words
            .iter()
            .map(|(text, sentence)| ParsedToken { text: text.clone(), sentence: *sentence })
            .collect();
        let deps = vec![
            DepArc { head: 1, modifier: 0, label: "nsubj".to_string() },
            DepArc { head: -1, modifier: 1, label: "root".to_string() },
            DepArc { head: 1, modifier: 2, label: "dobj".to_string() },
            DepArc { head: 4, modifier: 3, label: "nsubj".to_string() },
            DepArc { head: -1, modifier: 4, label: "root".to_string() },
            DepArc { head: 4, modifier: 5, label: "dobj".to_string() },
        ];
        let entities = vec![
            MentionRecord {
                id: "e-drug".to_string(),
                entity_type: "drug".to_string(),
                start: 0,
                end: 0,
                canonical: drug,
            },
            MentionRecord {
                id: "e-gene".to_string(),
                entity_type: "gene".to_string(),
                start: 2,
                end: 2,
                canonical: gene,
            },
            MentionRecord {
                id: "e-mut".to_string(),
                entity_type: "mutation".to_string(),
                start: 3,
                end: 3,
                canonical: mutation,
            },
        ];
        let doc_id = format!("doc{i:04}");
        docs.push(ParsedDocument {
            doc_id: doc_id.clone(),
            tokens,
            deps,
            entities,
            coref: vec![],
            discourse: vec![],
        });

        ternary_instances.push(TrainInstance {
            doc_id: doc_id.clone(),
            mention_indices: vec![0, 1, 2],
            sentences: (0, 1),
            label,
            fold: None,
        });
        binary_instances.push(TrainInstance {
            doc_id,
            mention_indices: vec![0, 2],
            sentences: (0, 1),
            label,
            fold: None,
        });
    }

    TriggerCorpus {
        docs,
        ternary: TaskSpec {
            name: "responds".to_string(),
            roles: vec!["drug".to_string(), "gene".to_string(), "mutation".to_string()],
            instances: ternary_instances,
        },
        binary: TaskSpec {
            name: "drug-mutation".to_string(),
            roles: vec!["drug".to_string(), "mutation".to_string()],
            instances: binary_instances,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docgraph::{build_graph, partition, BuildOptions, CoarseType};
    use std::collections::BTreeSet;

    #[test]
    fn generators_are_deterministic() {
        let a = random_document(&mut Rng::new(5), "d");
        let b = random_document(&mut Rng::new(5), "d");
        assert_eq!(a, b);
        let ta = trigger_corpus(&mut Rng::new(9), 6);
        let tb = trigger_corpus(&mut Rng::new(9), 6);
        assert_eq!(ta.docs, tb.docs);
        assert_ne!(
            trigger_corpus(&mut Rng::new(10), 6).docs,
            ta.docs,
            "different seeds should vary the corpus"
        );
    }

    #[test]
    fn random_documents_always_build() {
        let mut rng = Rng::new(77);
        for i in 0..300 {
            let doc = random_document(&mut rng, &format!("d{i}"));
            let g = build_graph(&doc, &BuildOptions::default()).unwrap();
            let dags = partition(&g);
            assert_eq!(dags.len(), doc.tokens.len());
        }
    }

    #[test]
    fn gradcheck_documents_have_size_and_type_variety() {
        let mut rng = Rng::new(31);
        for i in 0..100 {
            let doc = gradcheck_document(&mut rng, &format!("d{i}"));
            assert!((3..=8).contains(&doc.tokens.len()));
            let g = build_graph(&doc, &BuildOptions::default()).unwrap();
            let coarse: BTreeSet<CoarseType> =
                g.edges().map(|e| e.label.coarse()).collect();
            assert!(
                coarse.len() >= 3,
                "expected at least 3 coarse types, got {coarse:?}"
            );
        }
    }

    #[test]
    fn mention_documents_stay_within_bounds() {
        let mut rng = Rng::new(13);
        for i in 0..200 {
            let doc = mention_document(&mut rng, &format!("d{i}"), &["drug", "gene", "mutation"]);
            let n_sentences = doc.tokens.last().unwrap().sentence + 1;
            assert!(n_sentences <= 8);
            assert!((1..=12).contains(&doc.entities.len()));
            build_graph(&doc, &BuildOptions::default()).unwrap();
        }
    }

    #[test]
    fn trigger_corpus_plants_the_cross_sentence_pattern() {
        let corpus = trigger_corpus(&mut Rng::new(3), 40);
        assert_eq!(corpus.docs.len(), 40);
        let positives =
            corpus.ternary.instances.iter().filter(|i| i.label).count();
        assert_eq!(positives, 20);
        for (doc, inst) in corpus.docs.iter().zip(&corpus.ternary.instances) {
            let v0 = &doc.tokens[1].text;
            let v1 = &doc.tokens[4].text;
            let planted = v0 == POS_VERB_0 && v1 == POS_VERB_1;
            assert_eq!(planted, inst.label, "label must follow the verb pair");
            // Entity records point at the right surface tokens.
            assert_eq!(doc.entities[0].canonical, doc.tokens[0].text);
            assert_eq!(doc.entities[1].canonical, doc.tokens[2].text);
            assert_eq!(doc.entities[2].canonical, doc.tokens[3].text);
        }
        // The binary sub-task shares documents and labels.
        for (t, b) in corpus.ternary.instances.iter().zip(&corpus.binary.instances) {
            assert_eq!(t.doc_id, b.doc_id);
            assert_eq!(t.label, b.label);
            assert_eq!(b.mention_indices, vec![0, 2]);
        }
    }
}
