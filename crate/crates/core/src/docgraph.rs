//! Typed document graphs over pre-parsed text, and their partition into a
//! forward/backward DAG pair for the encoder.
//!
//! A document graph has one node per word token. Edges carry a coarse type
//! plus a fine-grained label:
//!
//! * `Adjacency` — the linear token chain `(i, i+1)`, fine label `"adj"`;
//! * `Syndep` — syntactic dependencies, directed child → parent, fine label
//!   = the dependency relation (e.g. `"nsubj"`);
//! * `NextSent` — links the syntactic root of each sentence to the root of
//!   the following sentence, fine label `"nextsent"`;
//! * `Coref` / `Discourse` — optional arcs ingested from the input record,
//!   oriented from the earlier token to the later one.
//!
//! [`partition`] splits a graph into two DAGs processed left-to-right and
//! right-to-left: adjacency edges are mirrored into both, every other edge
//! goes to the forward DAG iff `source < target`, else to the backward DAG.
//! A chain-only graph therefore reduces the encoder to an ordinary BiLSTM.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coarse edge types. The encoder's first parametrization learns one weight
/// matrix per gate per coarse type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarseType {
    Adjacency,
    Syndep,
    NextSent,
    Coref,
    Discourse,
}

impl CoarseType {
    pub const ALL: [CoarseType; 5] = [
        CoarseType::Adjacency,
        CoarseType::Syndep,
        CoarseType::NextSent,
        CoarseType::Coref,
        CoarseType::Discourse,
    ];

    /// Stable index into per-type parameter arrays.
    pub fn index(self) -> usize {
        match self {
            CoarseType::Adjacency => 0,
            CoarseType::Syndep => 1,
            CoarseType::NextSent => 2,
            CoarseType::Coref => 3,
            CoarseType::Discourse => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CoarseType::Adjacency => "adjacency",
            CoarseType::Syndep => "syndep",
            CoarseType::NextSent => "nextsent",
            CoarseType::Coref => "coref",
            CoarseType::Discourse => "discourse",
        }
    }
}

/// Edge label: coarse type plus fine-grained relation name.
///
/// Invariants enforced by the constructors: the fine label is non-empty, and
/// `Adjacency`/`NextSent` edges carry the fixed labels `"adj"`/`"nextsent"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeLabel {
    coarse: CoarseType,
    fine: String,
}

impl EdgeLabel {
    pub fn adjacency() -> EdgeLabel {
        EdgeLabel { coarse: CoarseType::Adjacency, fine: "adj".to_string() }
    }

    pub fn next_sentence() -> EdgeLabel {
        EdgeLabel { coarse: CoarseType::NextSent, fine: "nextsent".to_string() }
    }

    pub fn dependency(fine: &str) -> EdgeLabel {
        assert!(!fine.is_empty(), "dependency label must be non-empty");
        EdgeLabel { coarse: CoarseType::Syndep, fine: fine.to_string() }
    }

    pub fn coreference(fine: &str) -> EdgeLabel {
        assert!(!fine.is_empty(), "coreference label must be non-empty");
        EdgeLabel { coarse: CoarseType::Coref, fine: fine.to_string() }
    }

    pub fn discourse(fine: &str) -> EdgeLabel {
        assert!(!fine.is_empty(), "discourse label must be non-empty");
        EdgeLabel { coarse: CoarseType::Discourse, fine: fine.to_string() }
    }

    pub fn coarse(&self) -> CoarseType {
        self.coarse
    }

    pub fn fine(&self) -> &str {
        &self.fine
    }
}

/// A word token. `index` is document-wide and equals the token's position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub text: String,
    pub sentence: usize,
}

/// Directed labeled edge between token indices; `source != target`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub label: EdgeLabel,
}

/// An entity mention: an inclusive token span within a single sentence,
/// tagged with an entity type (used as the relation role) and the canonical
/// identifier distant supervision matches against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub id: String,
    pub entity_type: String,
    /// Inclusive token span `(start, end)`, document-wide indices.
    pub span: (usize, usize),
    pub canonical: String,
}

/// Which edges the graph keeps. `Chain` and `Tree` are ablation baselines;
/// `ShortestPath` keeps only dependency/inter-sentence edges lying on the
/// shortest undirected dependency paths between entity pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgePolicy {
    #[serde(rename = "chain")]
    ChainOnly,
    #[serde(rename = "tree")]
    TreeOnly,
    #[serde(rename = "shortest-path")]
    ShortestPath,
    #[serde(rename = "full")]
    FullGraph,
}

/// Graph construction options: the edge policy plus toggles for ingesting
/// coreference/discourse arcs (which only apply under [`EdgePolicy::FullGraph`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub policy: EdgePolicy,
    pub include_coref: bool,
    pub include_discourse: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { policy: EdgePolicy::FullGraph, include_coref: true, include_discourse: true }
    }
}

impl BuildOptions {
    pub fn with_policy(policy: EdgePolicy) -> Self {
        BuildOptions { policy, ..Default::default() }
    }
}

/// Pre-parsed document record, as read from the corpus file. Token indices
/// in `deps`, `coref`, `discourse` and entity spans are document-wide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedDocument {
    pub doc_id: String,
    pub tokens: Vec<ParsedToken>,
    #[serde(default)]
    pub deps: Vec<DepArc>,
    #[serde(default)]
    pub entities: Vec<MentionRecord>,
    #[serde(default)]
    pub coref: Vec<ExtraEdge>,
    #[serde(default)]
    pub discourse: Vec<ExtraEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedToken {
    pub text: String,
    pub sentence: usize,
}

/// Dependency arc; `head == -1` marks the sentence root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepArc {
    pub head: i64,
    #[serde(rename = "mod")]
    pub modifier: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub id: String,
    #[serde(rename = "type")]
    pub entity_type: String,
    pub start: usize,
    pub end: usize,
    pub canonical: String,
}

/// Coreference or discourse arc from the input record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraEdge {
    pub src: usize,
    pub dst: usize,
    pub label: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("document {doc}: contains no tokens")]
    EmptyDocument { doc: String },
    #[error("document {doc}: sentence ids decrease at token {index}")]
    SentenceOrder { doc: String, index: usize },
    #[error("document {doc}: dependency arc for modifier {modifier} references token {index} outside 0..{len}")]
    ArcOutOfRange { doc: String, modifier: usize, index: i64, len: usize },
    #[error("document {doc}: dependency arc {head}->{modifier} has an empty label")]
    EmptyDepLabel { doc: String, head: i64, modifier: usize },
    #[error("document {doc}: mention {id} span ({start}, {end}) is empty or out of range")]
    BadSpan { doc: String, id: String, start: usize, end: usize },
    #[error("document {doc}: mention {id} crosses a sentence boundary")]
    SpanCrossesSentence { doc: String, id: String },
    #[error("document {doc}: {kind} edge ({src}, {dst}) references a token outside 0..{len}")]
    ExtraEdgeOutOfRange { doc: String, kind: &'static str, src: usize, dst: usize, len: usize },
    #[error("document {doc}: {kind} edge ({src}, {dst}) has an empty label")]
    EmptyExtraLabel { doc: String, kind: &'static str, src: usize, dst: usize },
    #[error("no dependency path between mentions {a} and {b}")]
    NoPath { a: String, b: String },
    #[error("document {doc}: sentence window {first}..={last} selects no tokens")]
    EmptyWindow { doc: String, first: usize, last: usize },
}

/// A typed document graph: tokens, a deduplicated edge set, and the entity
/// mentions carried along for candidate generation and span pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentGraph {
    pub doc_id: String,
    tokens: Vec<Token>,
    edges: BTreeSet<Edge>,
    entities: Vec<EntityMention>,
}

impl DocumentGraph {
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn entities(&self) -> &[EntityMention] {
        &self.entities
    }

    /// Distinct fine edge labels, in sorted order.
    pub fn fine_labels(&self) -> BTreeSet<String> {
        self.edges.iter().map(|e| e.label.fine().to_string()).collect()
    }

    /// Restrict the graph to the tokens of sentences `first..=last`.
    ///
    /// Token indices are shifted so the window starts at 0; edges with an
    /// endpoint outside the window are dropped, as are mentions not fully
    /// inside it. Returns the sliced graph together with the token offset
    /// and a map from original entity indices to window entity indices.
    pub fn window(&self, first: usize, last: usize) -> Result<GraphWindow, GraphError> {
        assert!(first <= last, "window bounds out of order");
        let in_window =
            |t: &Token| t.sentence >= first && t.sentence <= last;
        let start = self.tokens.iter().position(in_window).ok_or(GraphError::EmptyWindow {
            doc: self.doc_id.clone(),
            first,
            last,
        })?;
        let count = self.tokens[start..].iter().take_while(|t| in_window(t)).count();
        let end = start + count; // exclusive

        let tokens: Vec<Token> = self.tokens[start..end]
            .iter()
            .map(|t| Token { index: t.index - start, text: t.text.clone(), sentence: t.sentence })
            .collect();
        let edges: BTreeSet<Edge> = self
            .edges
            .iter()
            .filter(|e| e.source >= start && e.source < end && e.target >= start && e.target < end)
            .map(|e| Edge { source: e.source - start, target: e.target - start, label: e.label.clone() })
            .collect();
        let mut entities = Vec::new();
        let mut entity_map = vec![None; self.entities.len()];
        for (i, m) in self.entities.iter().enumerate() {
            if m.span.0 >= start && m.span.1 < end {
                entity_map[i] = Some(entities.len());
                entities.push(EntityMention {
                    id: m.id.clone(),
                    entity_type: m.entity_type.clone(),
                    span: (m.span.0 - start, m.span.1 - start),
                    canonical: m.canonical.clone(),
                });
            }
        }
        Ok(GraphWindow {
            graph: DocumentGraph { doc_id: self.doc_id.clone(), tokens, edges, entities },
            token_offset: start,
            entity_map,
        })
    }
}

///// Result of [`DocumentGraph::window`].
#[derive(Debug, Clone)]
pub struct GraphWindow {
    pub graph: DocumentGraph,
    /// Document-wide index of the window's first token.
    pub token_offset: usize,
    /// `entity_map[original_index] = Some(window_index)` for retained mentions.
    pub entity_map: Vec<Option<usize>>,
}

/// Build a document graph from a parsed record under the given edge policy.
///
/// Dependency arcs are ingested child → parent; root arcs (`head == -1`) and
/// self-referential arcs contribute no edge. Duplicate arcs (same endpoints,
/// same fine label) are deduplicated; parallel edges with different labels
/// are kept. Coreference/discourse arcs are oriented earlier → later, and
/// self-loops among them are ignored.
pub fn build_graph(doc: &ParsedDocument, opts: &BuildOptions) -> Result<DocumentGraph, GraphError> {
    let n = doc.tokens.len();
    if n == 0 {
        return Err(GraphError::EmptyDocument { doc: doc.doc_id.clone() });
    }

    let mut tokens = Vec::with_capacity(n);
    for (i, t) in doc.tokens.iter().enumerate() {
        if i > 0 && t.sentence < doc.tokens[i - 1].sentence {
            return Err(GraphError::SentenceOrder { doc: doc.doc_id.clone(), index: i });
        }
        tokens.push(Token { index: i, text: t.text.clone(), sentence: t.sentence });
    }

    let mut entities = Vec::with_capacity(doc.entities.len());
    for m in &doc.entities {
        if m.start > m.end || m.end >= n {
            return Err(GraphError::BadSpan {
                doc: doc.doc_id.clone(),
                id: m.id.clone(),
                start: m.start,
                end: m.end,
            });
        }
        if tokens[m.start].sentence != tokens[m.end].sentence {
            return Err(GraphError::SpanCrossesSentence { doc: doc.doc_id.clone(), id: m.id.clone() });
        }
        entities.push(EntityMention {
            id: m.id.clone(),
            entity_type: m.entity_type.clone(),
            span: (m.start, m.end),
            canonical: m.canonical.clone(),
        });
    }

    // Dependency edges (child -> parent) and per-token root flags.
    let mut dep_edges: BTreeSet<Edge> = BTreeSet::new();
    let mut is_root = vec![false; n];
    for arc in &doc.deps {
        if arc.modifier >= n {
            return Err(GraphError::ArcOutOfRange {
                doc: doc.doc_id.clone(),
                modifier: arc.modifier,
                index: arc.modifier as i64,
                len: n,
            });
        }
        if arc.head < -1 || arc.head >= n as i64 {
            return Err(GraphError::ArcOutOfRange {
                doc: doc.doc_id.clone(),
                modifier: arc.modifier,
                index: arc.head,
                len: n,
            });
        }
        if arc.label.is_empty() {
            return Err(GraphError::EmptyDepLabel {
                doc: doc.doc_id.clone(),
                head: arc.head,
                modifier: arc.modifier,
            });
        }
        if arc.head == -1 {
            is_root[arc.modifier] = true;
            continue;
        }
        let head = arc.head as usize;
        if head == arc.modifier {
            continue; // self-referential root-style arc
        }
        dep_edges.insert(Edge {
            source: arc.modifier,
            target: head,
            label: EdgeLabel::dependency(&arc.label),
        });
    }

    // Inter-sentence edges: the root of each sentence links to the root of
    // the next sentence in document order. The root is the first token of
    // the sentence marked `head == -1`, falling back to its first token.
    let mut sentence_spans: Vec<(usize, usize)> = Vec::new(); // (first token, last token)
    for (i, t) in tokens.iter().enumerate() {
        match sentence_spans.last_mut() {
            Some(span) if tokens[span.0].sentence == t.sentence => span.1 = i,
            _ => sentence_spans.push((i, i)),
        }
    }
    let sentence_roots: Vec<usize> = sentence_spans
        .iter()
        .map(|&(a, b)| (a..=b).find(|&t| is_root[t]).unwrap_or(a))
        .collect();
    let mut nextsent_edges: BTreeSet<Edge> = BTreeSet::new();
    for pair in sentence_roots.windows(2) {
        if pair[0] != pair[1] {
            nextsent_edges.insert(Edge {
                source: pair[0],
                target: pair[1],
                label: EdgeLabel::next_sentence(),
            });
        }
    }

    let parse_extra = |list: &[ExtraEdge],
                       kind: &'static str,
                       make: fn(&str) -> EdgeLabel|
     -> Result<BTreeSet<Edge>, GraphError> {
        let mut out = BTreeSet::new();
        for e in list {
            if e.src >= n || e.dst >= n {
                return Err(GraphError::ExtraEdgeOutOfRange {
                    doc: doc.doc_id.clone(),
                    kind,
                    src: e.src,
                    dst: e.dst,
                    len: n,
                });
            }
            if e.label.is_empty() {
                return Err(GraphError::EmptyExtraLabel {
                    doc: doc.doc_id.clone(),
                    kind,
                    src: e.src,
                    dst: e.dst,
                });
            }
            if e.src == e.dst {
                continue;
            }
            out.insert(Edge {
                source: e.src.min(e.dst),
                target: e.src.max(e.dst),
                label: make(&e.label),
            });
        }
        Ok(out)
    };

    let adjacency = || -> BTreeSet<Edge> {
        (0..n.saturating_sub(1))
            .map(|i| Edge { source: i, target: i + 1, label: EdgeLabel::adjacency() })
            .collect()
    };

    let edges = match opts.policy {
        EdgePolicy::ChainOnly => adjacency(),
        EdgePolicy::TreeOnly => dep_edges,
        EdgePolicy::FullGraph => {
            let mut edges = adjacency();
            edges.extend(dep_edges);
            edges.extend(nextsent_edges);
            if opts.include_coref {
                edges.extend(parse_extra(&doc.coref, "coref", EdgeLabel::coreference)?);
            }
            if opts.include_discourse {
                edges.extend(parse_extra(&doc.discourse, "discourse", EdgeLabel::discourse)?);
            }
            edges
        }
        EdgePolicy::ShortestPath => {
            let mut base = dep_edges;
            base.extend(nextsent_edges);
            restrict_to_shortest_paths(&base, &entities, n)
        }
    };

    Ok(DocumentGraph { doc_id: doc.doc_id.clone(), tokens, edges, entities })
}

/// Keep only the edges lying on the shortest undirected path between the
/// syntactic head tokens of every entity-mention pair (ties broken by the
/// lexicographically smallest token-index sequence). Disconnected pairs
/// contribute nothing.
fn restrict_to_shortest_paths(
    base: &BTreeSet<Edge>,
    entities: &[EntityMention],
    n: usize,
) -> BTreeSet<Edge> {
    let neighbors = undirected_neighbors(base, n);
    let parents = syndep_parents(base, n);
    let heads: Vec<usize> = entities.iter().map(|m| mention_head(&parents, m.span)).collect();

    let mut by_pair: HashMap<(usize, usize), Vec<&Edge>> = HashMap::new();
    for e in base {
        by_pair.entry((e.source, e.target)).or_default().push(e);
    }

    let mut kept = BTreeSet::new();
    for i in 0..heads.len() {
        for j in (i + 1)..heads.len() {
            let Some(path) = lex_min_shortest_path(&neighbors, heads[i], heads[j]) else {
                continue;
            };
            for w in path.windows(2) {
                for key in [(w[0], w[1]), (w[1], w[0])] {
                    if let Some(es) = by_pair.get(&key) {
                        kept.extend(es.iter().map(|e| (*e).clone()));
                    }
                }
            }
        }
    }
    kept
}

fn undirected_neighbors(edges: &BTreeSet<Edge>, n: usize) -> Vec<Vec<usize>> {
    let mut nb = vec![BTreeSet::new(); n];
    for e in edges {
        nb[e.source].insert(e.target);
        nb[e.target].insert(e.source);
    }
    nb.into_iter().map(|s| s.into_iter().collect()).collect()
}

fn syndep_parents(edges: &BTreeSet<Edge>, n: usize) -> Vec<Vec<usize>> {
    let mut parents = vec![Vec::new(); n];
    for e in edges {
        if e.label.coarse() == CoarseType::Syndep {
            parents[e.source].push(e.target);
        }
    }
    parents
}

/// Syntactic head of a mention span: the first token whose dependency parent
/// lies outside the span (or that has no parent), falling back to the span's
/// first token.
fn mention_head(parents: &[Vec<usize>], span: (usize, usize)) -> usize {
    (span.0..=span.1)
        .find(|&t| parents[t].iter().all(|&p| p < span.0 || p > span.1))
        .unwrap_or(span.0)
}

/// Shortest path by BFS with deterministic tie-breaking: among all shortest
/// paths, returns the lexicographically smallest token-index sequence.
fn lex_min_shortest_path(neighbors: &[Vec<usize>], from: usize, to: usize) -> Option<Vec<usize>> {
    let n = neighbors.len();
    let mut dist = vec![usize::MAX; n];
    dist[to] = 0;
    let mut queue = std::collections::VecDeque::from([to]);
    while let Some(u) = queue.pop_front() {
        for &v in &neighbors[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    if dist[from] == usize::MAX {
        return None;
    }
    // Greedy descent toward `to`: the neighbor lists are sorted, so taking
    // the first neighbor one step closer yields the lexicographically
    // smallest among all shortest paths.
    let mut path = vec![from];
    let mut cur = from;
    while cur != to {
        let next = neighbors[cur]
            .iter()
            .copied()
            .find(|&v| dist[v] + 1 == dist[cur])
            .expect("BFS distance field is inconsistent");
        path.push(next);
        cur = next;
    }
    Some(path)
}

/// Shortest undirected dependency path between two mentions of `g`, computed
/// over the graph's `Syndep` and `NextSent` edges from each mention's
/// syntactic head token. Mentions sharing a head token yield a length-1 path.
pub fn shortest_dependency_path(
    g: &DocumentGraph,
    a: &EntityMention,
    b: &EntityMention,
) -> Result<Vec<usize>, GraphError> {
    let base: BTreeSet<Edge> = g
        .edges
        .iter()
        .filter(|e| matches!(e.label.coarse(), CoarseType::Syndep | CoarseType::NextSent))
        .cloned()
        .collect();
    let neighbors = undirected_neighbors(&base, g.n_tokens());
    let parents = syndep_parents(&base, g.n_tokens());
    lex_min_shortest_path(&neighbors, mention_head(&parents, a.span), mention_head(&parents, b.span))
        .ok_or_else(|| GraphError::NoPath { a: a.id.clone(), b: b.id.clone() })
}

/// The forward/backward DAG pair driving the encoder's two passes.
///
/// `forward[t]` lists the predecessors of token `t` in the forward DAG (all
/// with index `< t`), `backward[t]` those in the backward DAG (all `> t`);
/// each entry carries the connecting edge's label. Lists are sorted by
/// `(predecessor, label)` so traversal order is canonical.
#[derive(Debug, Clone, PartialEq)]
pub struct DagPair {
    pub forward: Vec<Vec<(usize, EdgeLabel)>>,
    pub backward: Vec<Vec<(usize, EdgeLabel)>>,
}

impl DagPair {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }
}

/// Partition a document graph into its forward/backward DAG pair.
///
/// Adjacency edges are mirrored into both DAGs (`(i, i+1)` forward and
/// `(i+1, i)` backward); every other edge goes to the forward DAG iff
/// `source < target`, else to the backward DAG. Both DAGs are acyclic by
/// construction — predecessor indices strictly precede (resp. follow) the
/// node in linear order — and this is asserted on every call.
pub fn partition(g: &DocumentGraph) -> DagPair {
    let n = g.n_tokens();
    let mut forward: Vec<Vec<(usize, EdgeLabel)>> = vec![Vec::new(); n];
    let mut backward: Vec<Vec<(usize, EdgeLabel)>> = vec![Vec::new(); n];
    for e in &g.edges {
        debug_assert_ne!(e.source, e.target, "self-loops cannot appear in a document graph");
        if e.label.coarse() == CoarseType::Adjacency {
            forward[e.target].push((e.source, e.label.clone()));
            backward[e.source].push((e.target, e.label.clone()));
        } else if e.source < e.target {
            forward[e.target].push((e.source, e.label.clone()));
        } else {
            backward[e.target].push((e.source, e.label.clone()));
        }
    }
    for (t, preds) in forward.iter_mut().enumerate() {
        preds.sort();
        assert!(preds.iter().all(|&(p, _)| p < t), "forward DAG predecessor out of order");
    }
    for (t, preds) in backward.iter_mut().enumerate() {
        preds.sort();
        assert!(preds.iter().all(|&(p, _)| p > t), "backward DAG predecessor out of order");
    }
    DagPair { forward, backward }
}
