//! DAG-structured LSTM encoders over document graphs.
//!
//! The document graph is partitioned into a forward and a backward DAG
//! ([`crate::docgraph::partition`]); each direction runs an LSTM whose unit
//! at node `t` may have several typed predecessors `j` with hidden states
//! `h_j` and cell states `c_j`:
//!
//! ```text
//! i_t  = sigmoid(W_i x_t + sum_j U^(m_tj)_i h_j + b_i)
//! o_t  = sigmoid(W_o x_t + sum_j U^(m_tj)_o h_j + b_o)
//! c~_t = tanh   (W_c x_t + sum_j U^(m_tj)_c h_j + b_c)
//! f_tj = sigmoid(W_f x_t + U^(m_tj)_f h_j + b_f)      (one gate per predecessor)
//! c_t  = i_t . c~_t + sum_j f_tj . c_j
//! h_t  = o_t . tanh(c_t)
//! ```
//!
//! where `m_tj` is the label of the connecting edge and `.` is the
//! elementwise product. Two parametrizations of the recurrent weights are
//! supported:
//!
//! * [`Variant::Full`] — one `l x l` matrix per gate per *coarse* edge type;
//! * [`Variant::Embed`] — one `l x l x d` tensor per gate, contracted with
//!   the typed representation `h_j (x) e_j` where `e_j` is a learned
//!   `d`-dimensional embedding of the *fine* edge label
//!   (`U x_T (h (x) e) = sum_k U[:,:,k] h * e[k]`).
//!
//! A token's encoding is the concatenation of its forward and backward
//! hidden states. The backward pass of training ([`backprop`]) is derived
//! by hand and returns exact gradients for every parameter, including the
//! word- and edge-embedding tables; it is validated against central finite
//! differences in [`crate::gradcheck`].
//!
//! With a chain-only graph both DAGs degenerate to the token chain and the
//! encoder is exactly a bidirectional LSTM — a reduction the test suite
//! checks against an independent implementation.

use std::collections::HashMap;

use crate::docgraph::{CoarseType, DagPair};
use crate::numeric::{self, hadamard, matvec, matvec_t, outer, sigmoid, tanh, Rng, Tensor};

/// Recurrent-weight parametrization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    Embed,
}

/// Hidden/cell state of one node in one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub h: Tensor,
    pub c: Tensor,
}

impl NodeState {
    pub fn zeros(l: usize) -> NodeState {
        NodeState { h: Tensor::zeros(&[l]), c: Tensor::zeros(&[l]) }
    }
}

/// Per-gate recurrent matrices for one coarse edge type (`Full` variant).
#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrices {
    pub i: Tensor,
    pub o: Tensor,
    pub c: Tensor,
    pub f: Tensor,
}

/// Recurrent weights of one direction.
// Variant sizes differ wildly, but exactly two of these exist per model and
// they live as long as it does — boxing would only add indirection.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Recurrent {
    /// One `l x l` matrix per gate per coarse edge type, indexed by
    /// [`CoarseType::index`].
    Full { u: Vec<GateMatrices> },
    /// One `l x l x d` tensor per gate plus this direction's edge-label
    /// embedding table (`L x d`, row 0 reserved for unknown labels).
    Embed { u_i: Tensor, u_o: Tensor, u_c: Tensor, u_f: Tensor, edge_embed: Tensor },
}

/// Parameters of one direction: input weights `W_* (l x e_w)`, biases
/// `b_* (l)` and the recurrent weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionParams {
    pub w_i: Tensor,
    pub w_o: Tensor,
    pub w_c: Tensor,
    pub w_f: Tensor,
    pub b_i: Tensor,
    pub b_o: Tensor,
    pub b_c: Tensor,
    pub b_f: Tensor,
    pub recurrent: Recurrent,
}

/// Fine edge-label vocabulary for the `Embed` variant. Row 0 is reserved
/// for labels unseen at training time.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeVocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

pub const UNK_EDGE_LABEL: &str = "<unk-edge>";

impl EdgeVocab {
    /// Build from the distinct fine labels seen at training time; the order
    /// given here is the embedding-row order (after the reserved row 0).
    pub fn new(labels: impl IntoIterator<Item = String>) -> EdgeVocab {
        let mut v = EdgeVocab { labels: vec![UNK_EDGE_LABEL.to_string()], index: HashMap::new() };
        v.index.insert(UNK_EDGE_LABEL.to_string(), 0);
        for l in labels {
            if !v.index.contains_key(&l) {
                v.index.insert(l.clone(), v.labels.len());
                v.labels.push(l);
            }
        }
        v
    }

    pub fn empty() -> EdgeVocab {
        EdgeVocab::new(std::iter::empty())
    }

    /// Embedding row for a fine label; unknown labels map to the reserved
    /// row 0.
    pub fn row(&self, fine: &str) -> usize {
        self.index.get(fine).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// All encoder parameters: the shared word-embedding table plus two
/// independent direction parameter sets (and, for `Embed`, per-direction
/// edge-label embeddings over a shared label vocabulary).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLstmParams {
    pub variant: Variant,
    pub hidden_dim: usize,
    pub word_dim: usize,
    pub edge_dim: usize,
    /// `V x e_w`; row = word id.
    pub word_embed: Tensor,
    pub edge_vocab: EdgeVocab,
    pub fwd: DirectionParams,
    pub bwd: DirectionParams,
}

fn init_direction(
    variant: Variant,
    l: usize,
    e_w: usize,
    d: usize,
    n_edge_labels: usize,
    rng: &mut Rng,
) -> DirectionParams {
    let mut mat = |shape: &[usize]| numeric::init_uniform(shape, -1.0, 1.0, rng);
    let (w_i, w_o, w_c, w_f) = (mat(&[l, e_w]), mat(&[l, e_w]), mat(&[l, e_w]), mat(&[l, e_w]));
    let (b_i, b_o, b_c, b_f) = (mat(&[l]), mat(&[l]), mat(&[l]), mat(&[l]));
    let recurrent = match variant {
        Variant::Full => Recurrent::Full {
            u: CoarseType::ALL
                .iter()
                .map(|_| GateMatrices {
                    i: mat(&[l, l]),
                    o: mat(&[l, l]),
                    c: mat(&[l, l]),
                    f: mat(&[l, l]),
                })
                .collect(),
        },
        Variant::Embed => Recurrent::Embed {
            u_i: mat(&[l, l, d]),
            u_o: mat(&[l, l, d]),
            u_c: mat(&[l, l, d]),
            u_f: mat(&[l, l, d]),
            edge_embed: mat(&[n_edge_labels, d]),
        },
    };
    DirectionParams { w_i, w_o, w_c, w_f, b_i, b_o, b_c, b_f, recurrent }
}

impl GraphLstmParams {
    /// Initialize all parameters uniformly in `[-1, 1)` under the given RNG.
    /// Draw order is fixed (word embeddings, then forward direction, then
    /// backward direction) so identical seeds give identical models.
    pub fn init(
        variant: Variant,
        hidden_dim: usize,
        word_dim: usize,
        edge_dim: usize,
        vocab_size: usize,
        edge_vocab: EdgeVocab,
        rng: &mut Rng,
    ) -> GraphLstmParams {
        assert!(hidden_dim > 0 && word_dim > 0 && vocab_size > 0);
        assert!(variant == Variant::Full || edge_dim > 0, "embed variant needs edge_dim > 0");
        let word_embed = numeric::init_uniform(&[vocab_size, word_dim], -1.0, 1.0, rng);
        let fwd = init_direction(variant, hidden_dim, word_dim, edge_dim, edge_vocab.len(), rng);
        let bwd = init_direction(variant, hidden_dim, word_dim, edge_dim, edge_vocab.len(), rng);
        GraphLstmParams {
            variant,
            hidden_dim,
            word_dim,
            edge_dim,
            word_embed,
            edge_vocab,
            fwd,
            bwd,
        }
    }

    /// Same structure with all tensors zeroed; the container for gradients.
    pub fn zeros_like(&self) -> GraphLstmParams {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// All parameter tensors with stable names, in canonical order. The
    /// order defines checkpoint layout and flat-index addressing, so it must
    /// not change.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![("word_embed".to_string(), &self.word_embed)];
        for (prefix, dir) in [("fwd", &self.fwd), ("bwd", &self.bwd)] {
            out.push((format!("{prefix}.w_i"), &dir.w_i));
            out.push((format!("{prefix}.w_o"), &dir.w_o));
            out.push((format!("{prefix}.w_c"), &dir.w_c));
            out.push((format!("{prefix}.w_f"), &dir.w_f));
            out.push((format!("{prefix}.b_i"), &dir.b_i));
            out.push((format!("{prefix}.b_o"), &dir.b_o));
            out.push((format!("{prefix}.b_c"), &dir.b_c));
            out.push((format!("{prefix}.b_f"), &dir.b_f));
            match &dir.recurrent {
                Recurrent::Full { u } => {
                    for ct in CoarseType::ALL {
                        let g = &u[ct.index()];
                        out.push((format!("{prefix}.u.{}.i", ct.name()), &g.i));
                        out.push((format!("{prefix}.u.{}.o", ct.name()), &g.o));
                        out.push((format!("{prefix}.u.{}.c", ct.name()), &g.c));
                        out.push((format!("{prefix}.u.{}.f", ct.name()), &g.f));
                    }
                }
                Recurrent::Embed { u_i, u_o, u_c, u_f, edge_embed } => {
                    out.push((format!("{prefix}.u_i"), u_i));
                    out.push((format!("{prefix}.u_o"), u_o));
                    out.push((format!("{prefix}.u_c"), u_c));
                    out.push((format!("{prefix}.u_f"), u_f));
                    out.push((format!("{prefix}.edge_embed"), edge_embed));
                }
            }
        }
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> =
            vec![("word_embed".to_string(), &mut self.word_embed)];
        for (prefix, dir) in [("fwd", &mut self.fwd), ("bwd", &mut self.bwd)] {
            out.push((format!("{prefix}.w_i"), &mut dir.w_i));
            out.push((format!("{prefix}.w_o"), &mut dir.w_o));
            out.push((format!("{prefix}.w_c"), &mut dir.w_c));
            out.push((format!("{prefix}.w_f"), &mut dir.w_f));
            out.push((format!("{prefix}.b_i"), &mut dir.b_i));
            out.push((format!("{prefix}.b_o"), &mut dir.b_o));
            out.push((format!("{prefix}.b_c"), &mut dir.b_c));
            out.push((format!("{prefix}.b_f"), &mut dir.b_f));
            match &mut dir.recurrent {
                Recurrent::Full { u } => {
                    // `u` is stored in `CoarseType::index` order.
                    for (ct, g) in CoarseType::ALL.iter().zip(u.iter_mut()) {
                        let GateMatrices { i, o, c, f } = g;
                        out.push((format!("{prefix}.u.{}.i", ct.name()), i));
                        out.push((format!("{prefix}.u.{}.o", ct.name()), o));
                        out.push((format!("{prefix}.u.{}.c", ct.name()), c));
                        out.push((format!("{prefix}.u.{}.f", ct.name()), f));
                    }
                }
                Recurrent::Embed { u_i, u_o, u_c, u_f, edge_embed } => {
                    out.push((format!("{prefix}.u_i"), u_i));
                    out.push((format!("{prefix}.u_o"), u_o));
                    out.push((format!("{prefix}.u_c"), u_c));
                    out.push((format!("{prefix}.u_f"), u_f));
                    out.push((format!("{prefix}.edge_embed"), edge_embed));
                }
            }
        }
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += k * other`, tensor by tensor. Both sides must share the same
    /// structure (e.g. a parameter set and its gradients).
    pub fn add_scaled_params(&mut self, other: &GraphLstmParams, k: f64) {
        let rhs = other.tensors();
        let lhs = self.tensors_mut();
        assert_eq!(lhs.len(), rhs.len(), "parameter structure mismatch");
        for ((na, a), (nb, b)) in lhs.into_iter().zip(rhs) {
            assert_eq!(na, nb, "parameter structure mismatch");
            a.add_scaled(b, k);
        }
    }

    /// Multiply every tensor by `k` in place.
    pub fn scale(&mut self, k: f64) {
        for (_, t) in self.tensors_mut() {
            t.scale(k);
        }
    }

    /// Largest absolute entry across all tensors.
    pub fn max_abs(&self) -> f64 {
        self.tensors().iter().fold(0.0, |m, (_, t)| m.max(t.max_abs()))
    }
}

/// Resolved predecessor key: which recurrent weights connect a predecessor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PredKey {
    Coarse(usize),
    Row(usize),
}

/// Per-node forward activations retained for the backward pass.
#[derive(Debug, Clone)]
struct UnitTrace {
    i: Tensor,
    o: Tensor,
    g: Tensor,
    tanh_c: Tensor,
    /// One forget gate per predecessor, in predecessor order.
    f: Vec<Tensor>,
}

/// `U x_T (h (x) e)` for one `l x l x d` tensor: `out[a] = sum_b h[b] *
/// sum_k U[a,b,k] e[k]`.
fn embed_apply(u: &Tensor, h: &Tensor, e: &[f64]) -> Tensor {
    let (l, m, d) = (u.shape()[0], u.shape()[1], u.shape()[2]);
    debug_assert_eq!(m, h.len());
    debug_assert_eq!(d, e.len());
    let ud = u.data();
    let hd = h.data();
    let mut out = Tensor::zeros(&[l]);
    for a in 0..l {
        let mut acc = 0.0;
        for (b, &hb) in hd.iter().enumerate() {
            let base = (a * m + b) * d;
            let mut mix = 0.0;
            for (k, &ek) in e.iter().enumerate() {
                mix += ud[base + k] * ek;
            }
            acc += hb * mix;
        }
        out.data_mut()[a] = acc;
    }
    out
}

fn recurrent_gate_terms(recurrent: &Recurrent, key: PredKey, h: &Tensor) -> (Tensor, Tensor, Tensor) {
    match (recurrent, key) {
        (Recurrent::Full { u }, PredKey::Coarse(ci)) => {
            let g = &u[ci];
            (matvec(&g.i, h), matvec(&g.o, h), matvec(&g.c, h))
        }
        (Recurrent::Embed { u_i, u_o, u_c, edge_embed, .. }, PredKey::Row(r)) => {
            let e = edge_embed.row(r);
            (embed_apply(u_i, h, e), embed_apply(u_o, h, e), embed_apply(u_c, h, e))
        }
        _ => panic!("predecessor key does not match the parametrization"),
    }
}

fn recurrent_forget_term(recurrent: &Recurrent, key: PredKey, h: &Tensor) -> Tensor {
    match (recurrent, key) {
        (Recurrent::Full { u }, PredKey::Coarse(ci)) => matvec(&u[ci].f, h),
        (Recurrent::Embed { u_f, edge_embed, .. }, PredKey::Row(r)) => {
            embed_apply(u_f, h, edge_embed.row(r))
        }
        _ => panic!("predecessor key does not match the parametrization"),
    }
}

/// One LSTM unit: gates from the input vector plus all typed predecessors.
fn unit_core(
    dir: &DirectionParams,
    x: &Tensor,
    preds: &[(&NodeState, PredKey)],
) -> (NodeState, UnitTrace) {
    let mut a_i = matvec(&dir.w_i, x);
    a_i.add_assign(&dir.b_i);
    let mut a_o = matvec(&dir.w_o, x);
    a_o.add_assign(&dir.b_o);
    let mut a_c = matvec(&dir.w_c, x);
    a_c.add_assign(&dir.b_c);
    let mut a_f_base = matvec(&dir.w_f, x);
    a_f_base.add_assign(&dir.b_f);

    for (state, key) in preds {
        let (ri, ro, rc) = recurrent_gate_terms(&dir.recurrent, *key, &state.h);
        a_i.add_assign(&ri);
        a_o.add_assign(&ro);
        a_c.add_assign(&rc);
    }

    let i = sigmoid(&a_i);
    let o = sigmoid(&a_o);
    let g = tanh(&a_c);
    let mut c = hadamard(&i, &g);
    let mut f = Vec::with_capacity(preds.len());
    for (state, key) in preds {
        let mut a_f = a_f_base.clone();
        a_f.add_assign(&recurrent_forget_term(&dir.recurrent, *key, &state.h));
        let f_j = sigmoid(&a_f);
        c.add_assign(&hadamard(&f_j, &state.c));
        f.push(f_j);
    }
    let tanh_c = tanh(&c);
    let h = hadamard(&o, &tanh_c);
    (NodeState { h, c }, UnitTrace { i, o, g, tanh_c, f })
}

/// Direction selector for the standalone unit functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl GraphLstmParams {
    fn direction(&self, d: Direction) -> &DirectionParams {
        match d {
            Direction::Forward => &self.fwd,
            Direction::Backward => &self.bwd,
        }
    }
}

/// Single unit step under the `Full` parametrization: predecessors are
/// tagged with the coarse type of the connecting edge.
pub fn unit_full(
    params: &GraphLstmParams,
    direction: Direction,
    x: &Tensor,
    preds: &[(NodeState, CoarseType)],
) -> NodeState {
    assert_eq!(params.variant, Variant::Full);
    let resolved: Vec<(&NodeState, PredKey)> =
        preds.iter().map(|(s, ct)| (s, PredKey::Coarse(ct.index()))).collect();
    unit_core(params.direction(direction), x, &resolved).0
}

/// Single unit step under the `Embed` parametrization: predecessors are
/// tagged with the fine label of the connecting edge (unknown labels fall
/// back to the reserved embedding row).
pub fn unit_embed(
    params: &GraphLstmParams,
    direction: Direction,
    x: &Tensor,
    preds: &[(NodeState, &str)],
) -> NodeState {
    assert_eq!(params.variant, Variant::Embed);
    let resolved: Vec<(&NodeState, PredKey)> = preds
        .iter()
        .map(|(s, fine)| (s, PredKey::Row(params.edge_vocab.row(fine))))
        .collect();
    unit_core(params.direction(direction), x, &resolved).0
}

/// Forward activations of a full encode, retained for [`backprop`].
#[derive(Debug, Clone)]
pub struct EncodeCache {
    token_ids: Vec<usize>,
    fwd: DirectionTrace,
    bwd: DirectionTrace,
}

#[derive(Debug, Clone)]
struct DirectionTrace {
    states: Vec<NodeState>,
    traces: Vec<UnitTrace>,
    preds: Vec<Vec<(usize, PredKey)>>,
}

fn resolve_preds(
    params: &GraphLstmParams,
    dag: &[Vec<(usize, crate::docgraph::EdgeLabel)>],
) -> Vec<Vec<(usize, PredKey)>> {
    dag.iter()
        .map(|preds| {
            preds
                .iter()
                .map(|(j, label)| {
                    let key = match params.variant {
                        Variant::Full => PredKey::Coarse(label.coarse().index()),
                        Variant::Embed => PredKey::Row(params.edge_vocab.row(label.fine())),
                    };
                    (*j, key)
                })
                .collect()
        })
        .collect()
}

fn run_direction(
    dir: &DirectionParams,
    word_embed: &Tensor,
    token_ids: &[usize],
    preds: &[Vec<(usize, PredKey)>],
    order: impl Iterator<Item = usize>,
) -> DirectionTrace {
    let n = token_ids.len();
    let l = dir.b_i.len();
    let mut states = vec![NodeState::zeros(l); n];
    let mut traces: Vec<Option<UnitTrace>> = vec![None; n];
    for t in order {
        let x = Tensor::vector(word_embed.row(token_ids[t]).to_vec());
        let resolved: Vec<(&NodeState, PredKey)> =
            preds[t].iter().map(|&(j, key)| (&states[j], key)).collect();
        let (state, trace) = unit_core(dir, &x, &resolved);
        states[t] = state;
        traces[t] = Some(trace);
    }
    DirectionTrace {
        states,
        traces: traces.into_iter().map(Option::unwrap).collect(),
        preds: preds.to_vec(),
    }
}

/// Encode every token: forward pass in increasing token order over the
/// forward DAG, backward pass in decreasing order over the backward DAG;
/// the result per token is `concat(h_fwd, h_bwd)` (length `2l`).
pub fn encode(params: &GraphLstmParams, dags: &DagPair, token_ids: &[usize]) -> Vec<Tensor> {
    encode_cached(params, dags, token_ids).0
}

/// [`encode`], additionally returning the activation cache for [`backprop`].
pub fn encode_cached(
    params: &GraphLstmParams,
    dags: &DagPair,
    token_ids: &[usize],
) -> (Vec<Tensor>, EncodeCache) {
    let n = token_ids.len();
    assert_eq!(dags.len(), n, "DAG node count does not match token count");
    let vocab = params.word_embed.shape()[0];
    assert!(token_ids.iter().all(|&id| id < vocab), "token id outside the vocabulary");

    let fwd = run_direction(
        &params.fwd,
        &params.word_embed,
        token_ids,
        &resolve_preds(params, &dags.forward),
        0..n,
    );
    let bwd = run_direction(
        &params.bwd,
        &params.word_embed,
        token_ids,
        &resolve_preds(params, &dags.backward),
        (0..n).rev(),
    );

    let l = params.hidden_dim;
    let encodings = (0..n)
        .map(|t| {
            let mut v = Vec::with_capacity(2 * l);
            v.extend_from_slice(fwd.states[t].h.data());
            v.extend_from_slice(bwd.states[t].h.data());
            Tensor::vector(v)
        })
        .collect();
    (encodings, EncodeCache { token_ids: token_ids.to_vec(), fwd, bwd })
}

/// Gradient accumulators local to one direction's backward sweep.
struct DirGradSink<'a> {
    dir: &'a mut DirectionParams,
    word_embed: &'a mut Tensor,
}

/// Reverse-mode sweep through one direction in reverse topological order.
///
/// `upstream_at(t)` yields dL/dh for this direction's hidden state of node
/// `t` from the loss side; gradients flowing between nodes through gate and
/// cell paths are accumulated internally.
#[allow(clippy::too_many_arguments)]
fn backprop_direction(
    dir: &DirectionParams,
    trace: &DirectionTrace,
    word_embed: &Tensor,
    token_ids: &[usize],
    upstream: &[Tensor],
    segment: std::ops::Range<usize>,
    order: impl Iterator<Item = usize>,
    sink: &mut DirGradSink,
) {
    let n = token_ids.len();
    let l = dir.b_i.len();
    let mut dh: Vec<Tensor> = vec![Tensor::zeros(&[l]); n];
    let mut dc: Vec<Tensor> = vec![Tensor::zeros(&[l]); n];

    for t in order {
        // Loss contribution to this direction's hidden state.
        {
            let seg = &upstream[t].data()[segment.clone()];
            let dht = dh[t].data_mut();
            for (a, &u) in dht.iter_mut().zip(seg) {
                *a += u;
            }
        }
        let ut = &trace.traces[t];
        let dh_t = dh[t].clone();
        // h = o . tanh(c)
        let d_o = hadamard(&dh_t, &ut.tanh_c);
        let d_tanh = hadamard(&dh_t, &ut.o);
        {
            // dc += d_tanh . (1 - tanh(c)^2)
            let dct = dc[t].data_mut();
            for ((a, dt), th) in dct.iter_mut().zip(d_tanh.data()).zip(ut.tanh_c.data()) {
                *a += dt * (1.0 - th * th);
            }
        }
        let dc_t = dc[t].clone();
        // c = i . g + sum_j f_j . c_j
        let d_i = hadamard(&dc_t, &ut.g);
        let d_g = hadamard(&dc_t, &ut.i);
        // Pre-activation gradients via the gate nonlinearities.
        let da_i = {
            let mut v = d_i;
            for (a, &iv) in v.data_mut().iter_mut().zip(ut.i.data()) {
                *a *= iv * (1.0 - iv);
            }
            v
        };
        let da_o = {
            let mut v = d_o;
            for (a, &ov) in v.data_mut().iter_mut().zip(ut.o.data()) {
                *a *= ov * (1.0 - ov);
            }
            v
        };
        let da_c = {
            let mut v = d_g;
            for (a, &gv) in v.data_mut().iter_mut().zip(ut.g.data()) {
                *a *= 1.0 - gv * gv;
            }
            v
        };

        let x = Tensor::vector(word_embed.row(token_ids[t]).to_vec());
        let mut dx = matvec_t(&dir.w_i, &da_i);
        dx.add_assign(&matvec_t(&dir.w_o, &da_o));
        dx.add_assign(&matvec_t(&dir.w_c, &da_c));
        sink.dir.w_i.add_assign(&outer(&da_i, &x));
        sink.dir.w_o.add_assign(&outer(&da_o, &x));
        sink.dir.w_c.add_assign(&outer(&da_c, &x));
        sink.dir.b_i.add_assign(&da_i);
        sink.dir.b_o.add_assign(&da_o);
        sink.dir.b_c.add_assign(&da_c);

        for (pidx, &(j, key)) in trace.preds[t].iter().enumerate() {
            let f_j = &ut.f[pidx];
            let state_j = &trace.states[j];
            // c picks up f_j . c_j; cell gradient flows to the predecessor.
            let mut da_f = hadamard(&dc_t, &state_j.c);
            for (a, &fv) in da_f.data_mut().iter_mut().zip(f_j.data()) {
                *a *= fv * (1.0 - fv);
            }
            dc[j].add_assign(&hadamard(&dc_t, f_j));

            sink.dir.w_f.add_assign(&outer(&da_f, &x));
            sink.dir.b_f.add_assign(&da_f);
            dx.add_assign(&matvec_t(&dir.w_f, &da_f));

            match (&dir.recurrent, &mut sink.dir.recurrent, key) {
                (Recurrent::Full { u }, Recurrent::Full { u: gu }, PredKey::Coarse(ci)) => {
                    let p = &u[ci];
                    let g = &mut gu[ci];
                    for (da, pm, gm) in [
                        (&da_i, &p.i, &mut g.i),
                        (&da_o, &p.o, &mut g.o),
                        (&da_c, &p.c, &mut g.c),
                        (&da_f, &p.f, &mut g.f),
                    ] {
                        gm.add_assign(&outer(da, &state_j.h));
                        dh[j].add_assign(&matvec_t(pm, da));
                    }
                }
                (
                    Recurrent::Embed { u_i, u_o, u_c, u_f, edge_embed },
                    Recurrent::Embed {
                        u_i: gu_i,
                        u_o: gu_o,
                        u_c: gu_c,
                        u_f: gu_f,
                        edge_embed: g_embed,
                    },
                    PredKey::Row(r),
                ) => {
                    let d = edge_embed.shape()[1];
                    let e = edge_embed.row(r).to_vec();
                    let h_j = state_j.h.data().to_vec();
                    let mut de = vec![0.0; d];
                    for (da, pu, gu) in [
                        (&da_i, u_i, &mut *gu_i),
                        (&da_o, u_o, &mut *gu_o),
                        (&da_c, u_c, &mut *gu_c),
                        (&da_f, u_f, &mut *gu_f),
                    ] {
                        let pud = pu.data();
                        let gud = gu.data_mut();
                        let dhj = dh[j].data_mut();
                        let dad = da.data();
                        for (a, &dav) in dad.iter().enumerate() {
                            for (b, &hv) in h_j.iter().enumerate() {
                                let base = (a * h_j.len() + b) * d;
                                let w = dav * hv;
                                let mut mix = 0.0;
                                for k in 0..d {
                                    let uv = pud[base + k];
                                    gud[base + k] += w * e[k];
                                    de[k] += w * uv;
                                    mix += uv * e[k];
                                }
                                dhj[b] += dav * mix;
                            }
                        }
                    }
                    let ge_row = g_embed.row_mut(r);
                    for (gk, dk) in ge_row.iter_mut().zip(&de) {
                        *gk += dk;
                    }
                }
                _ => unreachable!("trace keys always match the parametrization"),
            }
        }
        sink.word_embed.row_mut(token_ids[t]).iter_mut().zip(dx.data()).for_each(|(a, b)| *a += b);
    }
}

/// Exact reverse-mode gradients of a cached encode, given dL/d(encoding).
///
/// `upstream[t]` must be the length-`2l` gradient for token `t`'s encoding
/// (zeros where the loss does not touch a token). The backward-direction
/// pass is reversed first (increasing token order), then the forward pass
/// (decreasing order); within the two sweeps the directions are independent
/// and only share the word-embedding gradient rows.
pub fn backprop(
    params: &GraphLstmParams,
    cache: &EncodeCache,
    upstream: &[Tensor],
) -> GraphLstmParams {
    let n = cache.token_ids.len();
    assert_eq!(upstream.len(), n, "upstream gradient count does not match token count");
    let l = params.hidden_dim;
    for u in upstream {
        assert_eq!(u.len(), 2 * l, "upstream gradient must have length 2l");
    }
    let mut grads = params.zeros_like();
    backprop_direction(
        &params.bwd,
        &cache.bwd,
        &params.word_embed,
        &cache.token_ids,
        upstream,
        l..2 * l,
        0..n,
        &mut DirGradSink { dir: &mut grads.bwd, word_embed: &mut grads.word_embed },
    );
    backprop_direction(
        &params.fwd,
        &cache.fwd,
        &params.word_embed,
        &cache.token_ids,
        upstream,
        0..l,
        (0..n).rev(),
        &mut DirGradSink { dir: &mut grads.fwd, word_embed: &mut grads.word_embed },
    );
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docgraph::{
        build_graph, partition, BuildOptions, DepArc, EdgePolicy, ParsedDocument, ParsedToken,
    };
    use crate::numeric::finite_diff_grad;

    fn zero_params(variant: Variant, l: usize, e_w: usize, d: usize, labels: &[&str]) -> GraphLstmParams {
        let vocab = EdgeVocab::new(labels.iter().map(|s| s.to_string()));
        let mut p = GraphLstmParams::init(variant, l, e_w, d, 4, vocab, &mut Rng::new(1));
        for (_, t) in p.tensors_mut() {
            t.fill(0.0);
        }
        p
    }

    fn rand_params(variant: Variant, l: usize, e_w: usize, d: usize, labels: &[&str], seed: u64) -> GraphLstmParams {
        let vocab = EdgeVocab::new(labels.iter().map(|s| s.to_string()));
        GraphLstmParams::init(variant, l, e_w, d, 6, vocab, &mut Rng::new(seed))
    }

    #[test]
    fn zero_parameters_no_predecessors_gives_half_gates_and_zero_output() {
        let p = zero_params(Variant::Full, 3, 2, 1, &[]);
        let x = Tensor::vector(vec![0.7, -0.3]);
        let s = unit_full(&p, Direction::Forward, &x, &[]);
        assert!(s.h.data().iter().all(|&v| v == 0.0));
        assert!(s.c.data().iter().all(|&v| v == 0.0));
        // Gates are sigma(0) = 1/2 internally; h = o . tanh(c) = 0.5 * tanh(0).
    }

    #[test]
    fn zero_parameters_single_predecessor_carries_half_the_cell() {
        // Scalar case: i = o = f = 1/2, c~ = 0, c = f*c_j = 1/2,
        // h = 1/2 * tanh(1/2).
        let p = zero_params(Variant::Full, 1, 1, 1, &[]);
        let pred = NodeState { h: Tensor::vector(vec![0.0]), c: Tensor::vector(vec![1.0]) };
        let x = Tensor::vector(vec![0.0]);
        let s = unit_full(&p, Direction::Forward, &x, &[(pred, CoarseType::Adjacency)]);
        assert!((s.c.data()[0] - 0.5).abs() < 1e-15);
        let expected_h = 0.5 * 0.5f64.tanh();
        assert!((s.h.data()[0] - expected_h).abs() < 1e-15);
        assert!((expected_h - 0.231_058_578_630_004_87).abs() < 1e-15);
    }

    #[test]
    fn unit_matches_explicit_scalar_formulas() {
        // l = 1, e_w = 1: every quantity is scalar, so the unit can be
        // recomputed with plain arithmetic.
        let mut p = zero_params(Variant::Full, 1, 1, 1, &[]);
        let vals = [
            ("fwd.w_i", 0.3), ("fwd.w_o", -0.4), ("fwd.w_c", 0.2), ("fwd.w_f", 0.6),
            ("fwd.b_i", 0.1), ("fwd.b_o", 0.2), ("fwd.b_c", -0.1), ("fwd.b_f", 0.05),
            ("fwd.u.adjacency.i", 0.7), ("fwd.u.adjacency.o", -0.2),
            ("fwd.u.adjacency.c", 0.5), ("fwd.u.adjacency.f", -0.6),
        ];
        for (name, v) in vals {
            for (n, t) in p.tensors_mut() {
                if n == name {
                    t.fill(v);
                }
            }
        }
        let (hj, cj, xv) = (0.4, -0.8, 0.9);
        let pred = NodeState { h: Tensor::vector(vec![hj]), c: Tensor::vector(vec![cj]) };
        let s = unit_full(
            &p,
            Direction::Forward,
            &Tensor::vector(vec![xv]),
            &[(pred, CoarseType::Adjacency)],
        );

        let sg = |z: f64| 1.0 / (1.0 + (-z).exp());
        let i = sg(0.3 * xv + 0.7 * hj + 0.1);
        let o = sg(-0.4 * xv - 0.2 * hj + 0.2);
        let g = (0.2 * xv + 0.5 * hj - 0.1).tanh();
        let f = sg(0.6 * xv - 0.6 * hj + 0.05);
        let c = i * g + f * cj;
        let h = o * c.tanh();
        assert!((s.c.data()[0] - c).abs() < 1e-15);
        assert!((s.h.data()[0] - h).abs() < 1e-15);
    }

    #[test]
    fn zero_edge_embedding_silences_recurrent_terms() {
        let mut p = rand_params(Variant::Embed, 3, 2, 2, &["dep"], 5);
        if let Recurrent::Embed { edge_embed, .. } = &mut p.fwd.recurrent {
            edge_embed.fill(0.0);
        }
        let x = Tensor::vector(vec![0.4, -0.2]);
        let pred = NodeState {
            h: Tensor::vector(vec![0.3, -0.5, 0.8]),
            c: Tensor::vector(vec![1.0, 2.0, -1.0]),
        };
        let with_pred = unit_embed(&p, Direction::Forward, &x, &[(pred.clone(), "dep")]);
        let without = unit_embed(&p, Direction::Forward, &x, &[]);
        // Gates see no recurrent signal, so h differs from the pred-free unit
        // only through the forget path f . c_j with f = sigmoid(W_f x + b_f).
        let mut a_f = matvec(&p.fwd.w_f, &x);
        a_f.add_assign(&p.fwd.b_f);
        let f = sigmoid(&a_f);
        let mut expected_c = without.c.clone();
        expected_c.add_assign(&hadamard(&f, &pred.c));
        for (a, b) in with_pred.c.data().iter().zip(expected_c.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn unknown_fine_label_uses_the_reserved_row() {
        let p = rand_params(Variant::Embed, 2, 2, 2, &["dep"], 9);
        assert_eq!(p.edge_vocab.row("dep"), 1);
        assert_eq!(p.edge_vocab.row("never-seen"), 0);
        let x = Tensor::vector(vec![0.1, 0.2]);
        let pred = NodeState {
            h: Tensor::vector(vec![0.5, -0.5]),
            c: Tensor::vector(vec![0.25, 0.75]),
        };
        let unseen = unit_embed(&p, Direction::Forward, &x, &[(pred.clone(), "never-seen")]);
        let unk = unit_embed(&p, Direction::Forward, &x, &[(pred, UNK_EDGE_LABEL)]);
        assert_eq!(unseen, unk);
    }

    fn chain_doc(n: usize) -> ParsedDocument {
        ParsedDocument {
            doc_id: "chain".to_string(),
            tokens: (0..n)
                .map(|i| ParsedToken { text: format!("w{i}"), sentence: 0 })
                .collect(),
            deps: vec![],
            entities: vec![],
            coref: vec![],
            discourse: vec![],
        }
    }

    #[test]
    fn single_token_encoding_concatenates_the_two_pred_free_units() {
        let p = rand_params(Variant::Full, 4, 3, 1, &[], 3);
        let g = build_graph(&chain_doc(1), &BuildOptions::with_policy(EdgePolicy::ChainOnly))
            .unwrap();
        let enc = encode(&p, &partition(&g), &[2]);
        let x = Tensor::vector(p.word_embed.row(2).to_vec());
        let f = unit_full(&p, Direction::Forward, &x, &[]);
        let b = unit_full(&p, Direction::Backward, &x, &[]);
        let expected: Vec<f64> =
            f.h.data().iter().chain(b.h.data()).copied().collect();
        assert_eq!(enc[0].data(), &expected[..]);
    }

    #[test]
    fn predecessor_order_does_not_change_the_unit() {
        let p = rand_params(Variant::Full, 3, 2, 1, &[], 8);
        let x = Tensor::vector(vec![0.3, -0.9]);
        let mk = |seed: u64| {
            let mut rng = Rng::new(seed);
            NodeState {
                h: crate::numeric::init_uniform(&[3], -1.0, 1.0, &mut rng),
                c: crate::numeric::init_uniform(&[3], -1.0, 1.0, &mut rng),
            }
        };
        let (p1, p2) = (mk(1), mk(2));
        let ab = unit_full(
            &p,
            Direction::Forward,
            &x,
            &[(p1.clone(), CoarseType::Adjacency), (p2.clone(), CoarseType::Syndep)],
        );
        let ba = unit_full(
            &p,
            Direction::Forward,
            &x,
            &[(p2, CoarseType::Syndep), (p1, CoarseType::Adjacency)],
        );
        // The recurrent sums are mathematically symmetric in the
        // predecessors; floating-point addition only reorders, so the two
        // results agree to the last few ulps but not necessarily bitwise.
        for (a, b) in ab.h.data().iter().zip(ba.h.data()) {
            assert!((a - b).abs() < 1e-12, "h differs: {a} vs {b}");
        }
        for (a, b) in ab.c.data().iter().zip(ba.c.data()) {
            assert!((a - b).abs() < 1e-12, "c differs: {a} vs {b}");
        }
    }

    #[test]
    fn encode_is_bit_reproducible() {
        let doc = ParsedDocument {
            deps: vec![
                DepArc { head: 2, modifier: 0, label: "nsubj".to_string() },
                DepArc { head: -1, modifier: 2, label: "root".to_string() },
                DepArc { head: 2, modifier: 3, label: "dobj".to_string() },
            ],
            ..chain_doc(4)
        };
        let g = build_graph(&doc, &BuildOptions::default()).unwrap();
        let dags = partition(&g);
        let p = rand_params(Variant::Embed, 5, 4, 3, &["nsubj", "dobj", "adj", "nextsent"], 17);
        let a = encode(&p, &dags, &[0, 1, 2, 3]);
        let b = encode(&p, &dags, &[0, 1, 2, 3]);
        assert_eq!(a, b);
    }

    /// Finite-difference check of a single parameter tensor through a full
    /// encode+pool objective (the module's own oracle; the exhaustive sweep
    /// lives in `gradcheck`).
    fn check_one_tensor(variant: Variant, tensor_name: &str) {
        let doc = ParsedDocument {
            deps: vec![
                DepArc { head: 1, modifier: 0, label: "amod".to_string() },
                DepArc { head: -1, modifier: 1, label: "root".to_string() },
                DepArc { head: 1, modifier: 2, label: "dobj".to_string() },
            ],
            ..chain_doc(3)
        };
        let g = build_graph(&doc, &BuildOptions::default()).unwrap();
        let dags = partition(&g);
        let token_ids = [3, 1, 4];
        let params = rand_params(variant, 3, 2, 2, &["amod", "dobj", "adj", "nextsent"], 21);

        // Fixed linear functional of all encodings as the scalar objective.
        let mut wrng = Rng::new(99);
        let probes: Vec<Tensor> =
            (0..3).map(|_| crate::numeric::init_uniform(&[6], -1.0, 1.0, &mut wrng)).collect();
        let objective = |p: &GraphLstmParams| -> f64 {
            let enc = encode(p, &dags, &token_ids);
            enc.iter().zip(&probes).map(|(e, w)| crate::numeric::dot(e, w)).sum()
        };

        let (_, cache) = encode_cached(&params, &dags, &token_ids);
        let analytic = backprop(&params, &cache, &probes);

        let idx = params.tensors().iter().position(|(n, _)| n == tensor_name).unwrap();
        let theta = params.tensors()[idx].1.clone();
        let numeric_grad = finite_diff_grad(
            |t: &Tensor| {
                let mut probe = params.clone();
                *probe.tensors_mut()[idx].1 = t.clone();
                objective(&probe)
            },
            &theta,
            1e-5,
        );
        let analytic_tensor = analytic.tensors()[idx].1.clone();
        for (a, n) in analytic_tensor.data().iter().zip(numeric_grad.data()) {
            let denom = a.abs().max(n.abs()).max(1e-6);
            assert!(
                ((a - n).abs() / denom) < 1e-4,
                "{tensor_name}: analytic {a} vs numeric {n}"
            );
        }
    }

    #[test]
    fn backprop_matches_finite_differences_full() {
        for name in ["word_embed", "fwd.w_i", "fwd.u.syndep.f", "bwd.u.adjacency.c", "bwd.b_o"] {
            check_one_tensor(Variant::Full, name);
        }
    }

    #[test]
    fn backprop_matches_finite_differences_embed() {
        for name in ["word_embed", "fwd.u_f", "fwd.edge_embed", "bwd.u_c", "bwd.w_o"] {
            check_one_tensor(Variant::Embed, name);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let g = build_graph(&chain_doc(3), &BuildOptions::default()).unwrap();
        let dags = partition(&g);
        let p = rand_params(Variant::Full, 3, 2, 1, &["adj"], 4);
        let (_, cache) = encode_cached(&p, &dags, &[0, 1, 2]);
        let upstream = vec![Tensor::zeros(&[6]); 3];
        let grads = backprop(&p, &cache, &upstream);
        for (name, t) in grads.tensors() {
            assert!(t.data().iter().all(|&v| v == 0.0), "{name} not zero");
        }
    }

    #[test]
    fn untouched_embedding_rows_receive_no_gradient() {
        let g = build_graph(&chain_doc(3), &BuildOptions::default()).unwrap();
        let dags = partition(&g);
        // Vocabulary has 6 words; only ids 0..3 appear. Edge vocab has a row
        // for "dep" that no edge uses (the chain only has "adj"/"nextsent").
        let p = rand_params(Variant::Embed, 3, 2, 2, &["adj", "nextsent", "dep"], 12);
        let (_, cache) = encode_cached(&p, &dags, &[0, 1, 2]);
        let upstream = vec![Tensor::vector(vec![1.0; 6]); 3];
        let grads = backprop(&p, &cache, &upstream);
        for wid in 3..6 {
            assert!(grads.word_embed.row(wid).iter().all(|&v| v == 0.0));
        }
        for dir in [&grads.fwd, &grads.bwd] {
            if let Recurrent::Embed { edge_embed, .. } = &dir.recurrent {
                let dep_row = p.edge_vocab.row("dep");
                assert!(edge_embed.row(dep_row).iter().all(|&v| v == 0.0));
                assert!(edge_embed.row(0).iter().all(|&v| v == 0.0)); // UNK unused
            }
        }
    }

    #[test]
    fn one_hot_embeddings_reduce_to_the_full_parametrization() {
        // Build an EMBED model whose edge embeddings are frozen one-hot
        // vectors, and a FULL model whose per-type matrices are the matching
        // tensor slices; on a graph where each coarse type carries exactly
        // one fine label the two encoders must agree.
        let doc = ParsedDocument {
            doc_id: "oh".to_string(),
            tokens: (0..5)
                .map(|i| ParsedToken { text: format!("w{i}"), sentence: if i < 3 { 0 } else { 1 } })
                .collect(),
            deps: vec![
                DepArc { head: 1, modifier: 0, label: "dep".to_string() },
                DepArc { head: -1, modifier: 1, label: "root".to_string() },
                DepArc { head: 1, modifier: 2, label: "dep".to_string() },
                DepArc { head: -1, modifier: 4, label: "root".to_string() },
                DepArc { head: 4, modifier: 3, label: "dep".to_string() },
            ],
            entities: vec![],
            coref: vec![],
            discourse: vec![],
        };
        let g = build_graph(&doc, &BuildOptions::default()).unwrap();
        let dags = partition(&g);
        let token_ids = [0, 1, 2, 3, 4];

        let labels = ["adj", "dep", "nextsent"];
        let l = 4;
        let d = labels.len() + 1; // one-hot dimension, incl. the reserved row
        let mut embed = rand_params(Variant::Embed, l, 3, d, &labels, 31);
        for dirp in [&mut embed.fwd, &mut embed.bwd] {
            if let Recurrent::Embed { edge_embed, .. } = &mut dirp.recurrent {
                edge_embed.fill(0.0);
                for r in 0..d {
                    edge_embed.set(&[r, r], 1.0);
                }
            }
        }

        let mut full = rand_params(Variant::Full, l, 3, 1, &[], 31);
        // Copy the shared weights; slice each gate tensor at the fine
        // label's one-hot row to build the matching per-type matrix.
        full.word_embed = embed.word_embed.clone();
        let coarse_of = [
            ("adj", CoarseType::Adjacency),
            ("dep", CoarseType::Syndep),
            ("nextsent", CoarseType::NextSent),
        ];
        for (ef, ff) in [(&embed.fwd, &mut full.fwd), (&embed.bwd, &mut full.bwd)] {
            ff.w_i = ef.w_i.clone();
            ff.w_o = ef.w_o.clone();
            ff.w_c = ef.w_c.clone();
            ff.w_f = ef.w_f.clone();
            ff.b_i = ef.b_i.clone();
            ff.b_o = ef.b_o.clone();
            ff.b_c = ef.b_c.clone();
            ff.b_f = ef.b_f.clone();
            let Recurrent::Embed { u_i, u_o, u_c, u_f, .. } = &ef.recurrent else { panic!() };
            let Recurrent::Full { u } = &mut ff.recurrent else { panic!() };
            for (fine, ct) in coarse_of {
                let r = embed.edge_vocab.row(fine);
                for (src, dst_sel) in
                    [(u_i, 0usize), (u_o, 1), (u_c, 2), (u_f, 3)]
                {
                    let mut m = Tensor::zeros(&[l, l]);
                    for a in 0..l {
                        for b in 0..l {
                            m.set(&[a, b], src.at(&[a, b, r]));
                        }
                    }
                    let gm = &mut u[ct.index()];
                    match dst_sel {
                        0 => gm.i = m,
                        1 => gm.o = m,
                        2 => gm.c = m,
                        _ => gm.f = m,
                    }
                }
            }
        }

        let enc_embed = encode(&embed, &dags, &token_ids);
        let enc_full = encode(&full, &dags, &token_ids);
        for (a, b) in enc_embed.iter().zip(&enc_full) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-12, "one-hot reduction drifted: {x} vs {y}");
            }
        }
    }
}
