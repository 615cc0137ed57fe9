//! Logistic relation classifiers on top of the graph-LSTM encoder.
//!
//! A candidate relation instance names one entity mention per role of its
//! task. Each mention is represented by the mean of its tokens' encoder
//! outputs; the per-role representations are concatenated in the task's
//! declared role order and scored by a task-specific logistic head:
//!
//! ```text
//! p(rel | x) = sigmoid(w . [repr_1; ...; repr_n] + b)
//! ```
//!
//! Under multi-task training every task owns its head while all tasks share
//! one encoder; gradients from [`loss_and_grad`] therefore come in two
//! parts, one for the shared encoder parameters and one for the head that
//! produced the loss.
//!
//! The training criterion is binary cross-entropy computed from the logit
//! in the overflow-safe form `max(z,0) - z*y + ln(1 + e^-|z|)`, whose
//! gradient is `sigmoid(z) - y`.

use crate::docgraph::DagPair;
use crate::graph_lstm::{backprop, encode, encode_cached, GraphLstmParams};
use crate::numeric::{dot, Tensor};

/// Per-task logistic scoring head.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskHead {
    pub task: String,
    /// Role names in declared order; this order fixes the feature layout.
    pub roles: Vec<String>,
    /// Weight vector of length `arity * 2 * hidden_dim`.
    pub w: Tensor,
    pub b: f64,
}

impl TaskHead {
    /// Zero-initialized head: every candidate starts at probability 1/2 and
    /// loss ln 2, and the first gradient step already separates the labels
    /// (the objective is convex in the head given the encodings).
    pub fn zeros(task: impl Into<String>, roles: Vec<String>, hidden_dim: usize) -> TaskHead {
        assert!(!roles.is_empty(), "a task needs at least one role");
        let dim = roles.len() * 2 * hidden_dim;
        TaskHead { task: task.into(), roles, w: Tensor::zeros(&[dim]), b: 0.0 }
    }

    pub fn arity(&self) -> usize {
        self.roles.len()
    }
}

/// One fully preprocessed candidate ready for the encoder: the DAG pair of
/// its sentence window, the window's token ids, one window-local inclusive
/// token span per role (in the head's role order), and the supervision
/// label.
#[derive(Debug, Clone)]
pub struct InstanceInput {
    pub dags: DagPair,
    pub token_ids: Vec<usize>,
    pub mention_spans: Vec<(usize, usize)>,
    pub label: bool,
}

/// Gradients of one head.
#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub w: Tensor,
    pub b: f64,
}

fn sigmoid_scalar(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Binary cross-entropy from the logit, with its gradient dL/dz.
/// Overflow-safe for any `z`; `y` must be 0 or 1.
pub fn bce_with_logits(z: f64, y: f64) -> (f64, f64) {
    debug_assert!(y == 0.0 || y == 1.0);
    let loss = z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
    (loss, sigmoid_scalar(z) - y)
}

/// Mean of the encodings over an inclusive token span.
pub fn entity_repr(encodings: &[Tensor], span: (usize, usize)) -> Tensor {
    let (s0, s1) = span;
    assert!(s0 <= s1 && s1 < encodings.len(), "mention span outside the window");
    let mut acc = encodings[s0].clone();
    for e in &encodings[s0 + 1..=s1] {
        acc.add_assign(e);
    }
    acc.scale(1.0 / (s1 - s0 + 1) as f64);
    acc
}

/// Concatenation of the per-role mention representations, in role order.
pub fn features(encodings: &[Tensor], spans: &[(usize, usize)]) -> Tensor {
    assert!(!spans.is_empty());
    let mut data = Vec::with_capacity(spans.len() * encodings[0].len());
    for &span in spans {
        data.extend_from_slice(entity_repr(encodings, span).data());
    }
    Tensor::vector(data)
}

/// Probability from already computed encodings.
pub fn score_encodings(head: &TaskHead, encodings: &[Tensor], spans: &[(usize, usize)]) -> f64 {
    assert_eq!(spans.len(), head.arity(), "instance arity differs from the head arity");
    let feat = features(encodings, spans);
    sigmoid_scalar(dot(&head.w, &feat) + head.b)
}

/// Probability of one instance, running the encoder.
pub fn score(params: &GraphLstmParams, head: &TaskHead, inst: &InstanceInput) -> f64 {
    let enc = encode(params, &inst.dags, &inst.token_ids);
    score_encodings(head, &enc, &inst.mention_spans)
}

/// Mean batch loss plus exact gradients for the shared encoder and the
/// task's head. All instances must belong to `head`'s task (same arity).
pub fn loss_and_grad(
    params: &GraphLstmParams,
    head: &TaskHead,
    batch: &[&InstanceInput],
) -> (f64, GraphLstmParams, HeadGrads) {
    assert!(!batch.is_empty(), "empty batch");
    let l2 = 2 * params.hidden_dim;
    let mut enc_grads = params.zeros_like();
    let mut head_grads = HeadGrads { w: Tensor::zeros(&[head.w.len()]), b: 0.0 };
    let mut total_loss = 0.0;

    for inst in batch {
        assert_eq!(
            inst.mention_spans.len(),
            head.arity(),
            "instance arity differs from the head arity"
        );
        let (enc, cache) = encode_cached(params, &inst.dags, &inst.token_ids);
        let feat = features(&enc, &inst.mention_spans);
        let z = dot(&head.w, &feat) + head.b;
        let y = if inst.label { 1.0 } else { 0.0 };
        let (loss, dz) = bce_with_logits(z, y);
        total_loss += loss;

        head_grads.w.add_scaled(&feat, dz);
        head_grads.b += dz;

        // dL/d(encoding): the role-r block of w flows back to every token of
        // span r, scaled by the mean-pooling factor.
        let mut upstream = vec![Tensor::zeros(&[l2]); inst.token_ids.len()];
        for (r, &(s0, s1)) in inst.mention_spans.iter().enumerate() {
            let width = (s1 - s0 + 1) as f64;
            let w_block = &head.w.data()[r * l2..(r + 1) * l2];
            for u in upstream.iter_mut().take(s1 + 1).skip(s0) {
                for (a, &wv) in u.data_mut().iter_mut().zip(w_block) {
                    *a += dz * wv / width;
                }
            }
        }
        enc_grads.add_scaled_params(&backprop(params, &cache, &upstream), 1.0);
    }

    let scale = 1.0 / batch.len() as f64;
    enc_grads.scale(scale);
    head_grads.w.scale(scale);
    head_grads.b *= scale;
    (total_loss * scale, enc_grads, head_grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docgraph::{build_graph, partition, BuildOptions, DepArc, ParsedDocument, ParsedToken};
    use crate::graph_lstm::{EdgeVocab, Variant};
    use crate::numeric::{finite_diff_grad, Rng};

    #[test]
    fn entity_repr_is_the_span_mean() {
        let enc = vec![
            Tensor::vector(vec![0.2, 0.4]),
            Tensor::vector(vec![0.6, 0.8]),
            Tensor::vector(vec![100.0, 100.0]),
        ];
        let r = entity_repr(&enc, (0, 1));
        assert!((r.data()[0] - 0.4).abs() < 1e-15);
        assert!((r.data()[1] - 0.6).abs() < 1e-15);
        let single = entity_repr(&enc, (2, 2));
        assert_eq!(single.data(), &[100.0, 100.0]);
    }

    #[test]
    #[should_panic(expected = "mention span outside the window")]
    fn entity_repr_rejects_out_of_range_spans() {
        let enc = vec![Tensor::vector(vec![0.0])];
        entity_repr(&enc, (0, 1));
    }

    #[test]
    fn zero_head_scores_one_half_with_loss_ln_two() {
        let head = TaskHead::zeros("rel", vec!["a".to_string(), "b".to_string()], 1);
        let enc = vec![Tensor::vector(vec![3.0, -2.0]), Tensor::vector(vec![0.5, 9.0])];
        let p = score_encodings(&head, &enc, &[(0, 0), (1, 1)]);
        assert!((p - 0.5).abs() < 1e-15);
        let (l0, _) = bce_with_logits(0.0, 0.0);
        let (l1, _) = bce_with_logits(0.0, 1.0);
        let ln2 = std::f64::consts::LN_2;
        assert!((l0 - ln2).abs() < 1e-15);
        assert!((l1 - ln2).abs() < 1e-15);
    }

    #[test]
    fn logit_of_ten_is_nearly_certain() {
        let mut head = TaskHead::zeros("rel", vec!["x".to_string()], 1);
        head.w = Tensor::vector(vec![10.0, 0.0]);
        let enc = vec![Tensor::vector(vec![1.0, 5.0])];
        let p = score_encodings(&head, &enc, &[(0, 0)]);
        assert!((p - 0.999_954_602_131_297_6).abs() < 1e-12);
    }

    #[test]
    fn bce_is_finite_and_correct_at_extreme_logits() {
        let (l, g) = bce_with_logits(1000.0, 1.0);
        assert!(l.abs() < 1e-12 && g.abs() < 1e-12);
        let (l, g) = bce_with_logits(-1000.0, 1.0);
        assert!((l - 1000.0).abs() < 1e-9);
        assert!((g + 1.0).abs() < 1e-12);
        let (l, g) = bce_with_logits(-1000.0, 0.0);
        assert!(l.abs() < 1e-12 && g.abs() < 1e-12);
        let (l, _) = bce_with_logits(0.0, 1.0);
        assert!(l.is_finite());
    }

    #[test]
    fn swapping_role_spans_changes_the_score() {
        let mut head = TaskHead::zeros("rel", vec!["first".to_string(), "second".to_string()], 1);
        head.w = Tensor::vector(vec![1.0, 0.0, 0.0, 2.0]);
        let enc = vec![Tensor::vector(vec![1.0, 0.0]), Tensor::vector(vec![0.0, 1.0])];
        let forward = score_encodings(&head, &enc, &[(0, 0), (1, 1)]);
        let swapped = score_encodings(&head, &enc, &[(1, 1), (0, 0)]);
        assert!((forward - sigmoid_scalar(3.0)).abs() < 1e-15);
        assert!((swapped - sigmoid_scalar(0.0)).abs() < 1e-15);
    }

    fn tiny_instance(label: bool) -> (GraphLstmParams, TaskHead, InstanceInput) {
        let doc = ParsedDocument {
            doc_id: "t".to_string(),
            tokens: (0..4)
                .map(|i| ParsedToken { text: format!("w{i}"), sentence: 0 })
                .collect(),
            deps: vec![
                DepArc { head: 1, modifier: 0, label: "amod".to_string() },
                DepArc { head: -1, modifier: 1, label: "root".to_string() },
                DepArc { head: 1, modifier: 3, label: "dobj".to_string() },
                DepArc { head: 3, modifier: 2, label: "det".to_string() },
            ],
            entities: vec![],
            coref: vec![],
            discourse: vec![],
        };
        let g = build_graph(&doc, &BuildOptions::default()).unwrap();
        let dags = partition(&g);
        let vocab = EdgeVocab::new(
            ["amod", "dobj", "det", "adj"].iter().map(|s| s.to_string()),
        );
        let params =
            GraphLstmParams::init(Variant::Embed, 2, 3, 2, 5, vocab, &mut Rng::new(77));
        let mut head =
            TaskHead::zeros("rel", vec!["a".to_string(), "b".to_string()], 2);
        head.w = crate::numeric::init_uniform(&[8], -1.0, 1.0, &mut Rng::new(78));
        head.b = 0.25;
        let inst = InstanceInput {
            dags,
            token_ids: vec![0, 1, 2, 3],
            mention_spans: vec![(0, 1), (3, 3)],
            label,
        };
        (params, head, inst)
    }

    #[test]
    fn batch_loss_is_the_mean_of_instance_losses() {
        let (params, head, a) = tiny_instance(true);
        let b = InstanceInput { label: false, ..a.clone() };
        let (la, ga, ha) = loss_and_grad(&params, &head, &[&a]);
        let (lb, gb, hb) = loss_and_grad(&params, &head, &[&b]);
        let (lab, gab, hab) = loss_and_grad(&params, &head, &[&a, &b]);
        assert!((lab - (la + lb) / 2.0).abs() < 1e-12);
        let mut expect = ga.clone();
        expect.scale(0.5);
        expect.add_scaled_params(&gb, 0.5);
        for ((_, x), (_, y)) in gab.tensors().into_iter().zip(expect.tensors()) {
            for (u, v) in x.data().iter().zip(y.data()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
        for ((x, y), z) in hab.w.data().iter().zip(ha.w.data()).zip(hb.w.data()) {
            assert!((x - (y + z) / 2.0).abs() < 1e-12);
        }
        assert!((hab.b - (ha.b + hb.b) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn loss_gradients_match_finite_differences_end_to_end() {
        let (params, head, inst) = tiny_instance(true);
        let (_, enc_grads, head_grads) = loss_and_grad(&params, &head, &[&inst]);

        // Encoder tensors, including both embedding tables.
        for name in ["word_embed", "fwd.w_c", "fwd.u_i", "fwd.edge_embed", "bwd.u_f", "bwd.b_c"] {
            let idx = params.tensors().iter().position(|(n, _)| n == name).unwrap();
            let theta = params.tensors()[idx].1.clone();
            let numeric_grad = finite_diff_grad(
                |t| {
                    let mut p = params.clone();
                    *p.tensors_mut()[idx].1 = t.clone();
                    loss_and_grad(&p, &head, &[&inst]).0
                },
                &theta,
                1e-5,
            );
            let analytic = enc_grads.tensors()[idx].1.clone();
            for (a, n) in analytic.data().iter().zip(numeric_grad.data()) {
                let denom = a.abs().max(n.abs()).max(1e-6);
                assert!((a - n).abs() / denom < 1e-4, "{name}: {a} vs {n}");
            }
        }

        // Head weights and bias.
        let numeric_w = finite_diff_grad(
            |t| {
                let h = TaskHead { w: t.clone(), ..head.clone() };
                loss_and_grad(&params, &h, &[&inst]).0
            },
            &head.w,
            1e-6,
        );
        for (a, n) in head_grads.w.data().iter().zip(numeric_w.data()) {
            let denom = a.abs().max(n.abs()).max(1e-6);
            assert!((a - n).abs() / denom < 1e-4, "head.w: {a} vs {n}");
        }
        let eps = 1e-6;
        let up = {
            let h = TaskHead { b: head.b + eps, ..head.clone() };
            loss_and_grad(&params, &h, &[&inst]).0
        };
        let down = {
            let h = TaskHead { b: head.b - eps, ..head.clone() };
            loss_and_grad(&params, &h, &[&inst]).0
        };
        let numeric_b = (up - down) / (2.0 * eps);
        assert!((head_grads.b - numeric_b).abs() < 1e-6);
    }

    #[test]
    #[should_panic(expected = "instance arity differs from the head arity")]
    fn arity_mismatch_is_rejected() {
        let (params, head, mut inst) = tiny_instance(true);
        inst.mention_spans.pop();
        loss_and_grad(&params, &head, &[&inst]);
    }
}
