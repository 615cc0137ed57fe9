//! Numerical verification of the analytic gradients.
//!
//! For a batch of randomly structured documents, every named parameter
//! tensor of the encoder (plus the head weights and bias) is swept entry by
//! entry: the entry is nudged by ±ε, the loss is re-evaluated, and the
//! central difference is compared against the analytic gradient. The
//! relative error uses a floored denominator so near-zero gradients do not
//! blow the ratio up.

use serde::Serialize;

use crate::docgraph::{build_graph, partition, BuildOptions};
use crate::graph_lstm::{EdgeVocab, GraphLstmParams, Variant};
use crate::numeric::{derive_seed, init_uniform, Rng};
use crate::relation_model::{loss_and_grad, InstanceInput, TaskHead};
use crate::synth::gradcheck_document;

const HIDDEN: usize = 4;
const WORD_DIM: usize = 5;
const EDGE_DIM: usize = 3;
const VOCAB: usize = 12;
const EPS: f64 = 1e-5;

/// Outcome of a gradient-check sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub variant: Variant,
    pub instances: usize,
    /// Total scalar parameters probed across all instances.
    pub parameters_checked: usize,
    pub max_rel_err: f64,
    /// Name of the tensor holding the worst entry.
    pub worst_tensor: String,
}

impl GradcheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn tensor_mut<'a>(
    params: &'a mut GraphLstmParams,
    name: &str,
) -> &'a mut crate::numeric::Tensor {
    params
        .tensors_mut()
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t)
        .expect("known tensor name")
}

/// Run the sweep over `n_instances` random documents drawn under `seed`.
/// Each document has 3–8 tokens and at least three distinct coarse edge
/// types (word adjacency, dependencies, sentence linking, sometimes
/// coreference and discourse edges).
pub fn run_suite(variant: Variant, n_instances: usize, seed: u64) -> GradcheckReport {
    assert!(n_instances > 0);
    let mut worst = (0.0f64, String::from("-"));
    let mut checked = 0usize;

    for instance in 0..n_instances {
        let mut rng = Rng::new(derive_seed(seed, instance as u64));
        let doc_id = format!("g{instance:03}");
        let doc = gradcheck_document(&mut rng, &doc_id);
        let graph = build_graph(&doc, &BuildOptions::default()).expect("synthetic doc builds");
        let n = graph.tokens().len();

        let edge_vocab = EdgeVocab::new(graph.fine_labels());
        let mut params = GraphLstmParams::init(
            variant, HIDDEN, WORD_DIM, EDGE_DIM, VOCAB, edge_vocab, &mut rng,
        );
        let token_ids: Vec<usize> = (0..n).map(|_| rng.below(VOCAB as u64) as usize).collect();
        let span_a = (0, rng.below(n as u64) as usize);
        let span_b = (rng.below(n as u64) as usize, n - 1);
        let label = rng.below(2) == 0;
        let input = InstanceInput {
            dags: partition(&graph),
            token_ids,
            mention_spans: vec![span_a, span_b],
            label,
        };
        let mut head = TaskHead::zeros("probe", vec!["a".into(), "b".into()], HIDDEN);
        head.w = init_uniform(&[2 * 2 * HIDDEN], -1.0, 1.0, &mut rng);
        head.b = rng.uniform(-1.0, 1.0);

        let batch = [&input];
        let (_, enc_grads, head_grads) = loss_and_grad(&params, &head, &batch);

        // Encoder parameters.
        let names: Vec<String> =
            params.tensors().into_iter().map(|(n, _)| n).collect();
        for name in &names {
            let analytic: Vec<f64> = enc_grads
                .tensors()
                .into_iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.data().to_vec())
                .expect("gradient tensor matches parameter tensor");
            for (k, &analytic_k) in analytic.iter().enumerate() {
                let orig = {
                    let t = tensor_mut(&mut params, name);
                    let v = t.data()[k];
                    t.data_mut()[k] = v + EPS;
                    v
                };
                let up = loss_and_grad(&params, &head, &batch).0;
                tensor_mut(&mut params, name).data_mut()[k] = orig - EPS;
                let down = loss_and_grad(&params, &head, &batch).0;
                tensor_mut(&mut params, name).data_mut()[k] = orig;

                let numeric = (up - down) / (2.0 * EPS);
                let err = rel_err(analytic_k, numeric);
                checked += 1;
                if err > worst.0 {
                    worst = (err, name.clone());
                }
            }
        }

        // Head parameters.
        for k in 0..head.w.len() {
            let orig = head.w.data()[k];
            head.w.data_mut()[k] = orig + EPS;
            let up = loss_and_grad(&params, &head, &batch).0;
            head.w.data_mut()[k] = orig - EPS;
            let down = loss_and_grad(&params, &head, &batch).0;
            head.w.data_mut()[k] = orig;
            let err = rel_err(head_grads.w.data()[k], (up - down) / (2.0 * EPS));
            checked += 1;
            if err > worst.0 {
                worst = (err, "head.w".to_string());
            }
        }
        {
            let orig = head.b;
            head.b = orig + EPS;
            let up = loss_and_grad(&params, &head, &batch).0;
            head.b = orig - EPS;
            let down = loss_and_grad(&params, &head, &batch).0;
            head.b = orig;
            let err = rel_err(head_grads.b, (up - down) / (2.0 * EPS));
            checked += 1;
            if err > worst.0 {
                worst = (err, "head.b".to_string());
            }
        }
    }

    GradcheckReport {
        variant,
        instances: n_instances,
        parameters_checked: checked,
        max_rel_err: worst.0,
        worst_tensor: worst.1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_gradients_match_central_differences_for_the_typed_variant() {
        let report = run_suite(Variant::Full, 6, 17);
        assert!(report.parameters_checked > 1000);
        assert!(
            report.passed(1e-4),
            "worst {} in {}",
            report.max_rel_err,
            report.worst_tensor
        );
    }

    #[test]
    fn analytic_gradients_match_central_differences_for_the_embedding_variant() {
        let report = run_suite(Variant::Embed, 6, 18);
        assert!(report.parameters_checked > 1000);
        assert!(
            report.passed(1e-4),
            "worst {} in {}",
            report.max_rel_err,
            report.worst_tensor
        );
    }

    #[test]
    fn the_sweep_is_deterministic() {
        let a = run_suite(Variant::Full, 3, 9);
        let b = run_suite(Variant::Full, 3, 9);
        assert_eq!(a, b);
        let c = run_suite(Variant::Full, 3, 10);
        assert_ne!(a.max_rel_err, c.max_rel_err);
    }
}
