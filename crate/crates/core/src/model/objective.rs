//! Variational objectives: the labeled bound, the unlabeled bound, and
//! the batch objective with its supervised term.
//!
//! Both bounds share the encoding pipeline; noise is drawn in a fixed
//! order (z_T, then z_G, then the label sample when present) so a labeled
//! and an unlabeled evaluation with the same seed see identical latent
//! draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chem::MolGraph;
use crate::juncture::{decompose, ground_truth_attachments, JunctionTree};
use crate::par;
use crate::tensor::{gaussian_kl, reparameterize, Tape, Tensor, Var};

use super::decoder::{canonical_dfs, decode_graph_decisions, decode_tree_teacher, teacher_decisions, EdgeDecision};
use super::encoder::{encode_graph, encode_tree, posterior_g, posterior_t, predict_y};
use super::{condition, Bound, ModelError, ModelState};

fn ln_2pi() -> f64 {
    (2.0 * std::f64::consts::PI).ln()
}

/// A molecule preprocessed for training: decomposition rooted at its
/// canonical cluster, plus the teacher-forced attachment decisions. The
/// candidate enumeration here is the expensive part of the loss, so it is
/// done once per molecule and reused every epoch.
#[derive(Debug, Clone)]
pub struct Prepared {
    mol: MolGraph,
    tree: JunctionTree,
    decisions: Vec<EdgeDecision>,
}

impl Prepared {
    pub fn new(state: &ModelState, mol: &MolGraph) -> Result<Prepared, ModelError> {
        let mut tree = decompose(mol);
        if tree.n_clusters() > state.config().node_cap {
            return Err(ModelError::DecodeOverflow);
        }
        let label_ids: Vec<usize> = tree
            .clusters
            .iter()
            .map(|c| state.label_id(&c.canonical_label))
            .collect::<Result<_, _>>()?;
        let dfs = canonical_dfs(&tree);
        tree.root = dfs.root;
        let atts = ground_truth_attachments(mol, &tree);
        let decisions = teacher_decisions(state, mol, &tree, &label_ids, &dfs, &atts)?;
        Ok(Prepared {
            mol: mol.clone(),
            tree,
            decisions,
        })
    }

    pub fn mol(&self) -> &MolGraph {
        &self.mol
    }

    pub fn tree(&self) -> &JunctionTree {
        &self.tree
    }
}

struct Codes {
    enc: super::encoder::GraphEncoding,
    z_t: Var,
    z_g: Var,
    mu_y: Var,
    lv_y: Var,
    kl_t: Var,
    kl_g: Var,
}

fn encode_and_sample<R: Rng>(
    bound: &Bound<'_>,
    prep: &Prepared,
    rng: &mut R,
) -> Result<Codes, ModelError> {
    let enc = encode_graph(bound, &prep.mol)?;
    let h_t = encode_tree(bound, &prep.tree)?;
    let (mu_t, lv_t) = posterior_t(bound, &h_t)?;
    let (mu_g, lv_g) = posterior_g(bound, &enc.h_g)?;
    let z_t = reparameterize(&mu_t, &lv_t, rng)?;
    let z_g = reparameterize(&mu_g, &lv_g, rng)?;
    let (mu_y, lv_y) = predict_y(bound, &h_t, &enc.h_g)?;
    let kl_t = gaussian_kl(&mu_t, &lv_t)?;
    let kl_g = gaussian_kl(&mu_g, &lv_g)?;
    Ok(Codes {
        enc,
        z_t,
        z_g,
        mu_y,
        lv_y,
        kl_t,
        kl_g,
    })
}

/// The labeled bound and its diagnostics. Scalar fields are forward
/// values captured while the tape is still intact.
pub struct LabeledTerms {
    pub loss: Var,
    /// Property-head mean, kept on the tape for the supervised term.
    pub mu_y: Var,
    pub kl_t: f64,
    pub kl_g: f64,
    pub tree_loss: f64,
    pub graph_loss: f64,
    pub label_correct: usize,
    pub n_label: usize,
    pub cand_correct: usize,
    pub n_cand: usize,
}

/// Negative labeled bound: teacher-forced reconstruction conditioned on
/// the observed label, both KL terms, and the doubled label prior
/// −2·log p(y_obs) = ln 2π + y_obs².
pub fn elbo_labeled<R: Rng>(
    bound: &Bound<'_>,
    prep: &Prepared,
    y_obs: f64,
    rng: &mut R,
) -> Result<LabeledTerms, ModelError> {
    let tape = bound.var("embed.label").tape();
    let codes = encode_and_sample(bound, prep, rng)?;
    let y = tape.leaf(Tensor::scalar(y_obs));
    let cond_t = condition(&codes.z_t, &y)?;
    let cond_g = condition(&codes.z_g, &y)?;
    let tree_out = decode_tree_teacher(bound, &prep.tree, &cond_t)?;
    let graph_out = decode_graph_decisions(bound, &prep.decisions, &codes.enc, &cond_g)?;

    let loss = tree_out
        .loss
        .add(&graph_out.loss)?
        .add(&codes.kl_t)?
        .add(&codes.kl_g)?
        .shift(ln_2pi() + y_obs * y_obs);
    Ok(LabeledTerms {
        loss,
        mu_y: codes.mu_y,
        kl_t: codes.kl_t.item(),
        kl_g: codes.kl_g.item(),
        tree_loss: tree_out.loss.item(),
        graph_loss: graph_out.loss.item(),
        label_correct: tree_out.label_correct,
        n_label: tree_out.n_label,
        cand_correct: graph_out.correct,
        n_cand: graph_out.n_decisions,
    })
}

/// The unlabeled bound and its diagnostics.
pub struct UnlabeledTerms {
    pub loss: Var,
    /// The reparameterized label sample fed to the decoders.
    pub y_sample: f64,
    pub kl_t: f64,
    pub kl_g: f64,
    pub tree_loss: f64,
    pub graph_loss: f64,
    /// Analytic entropy of q(y | T, G).
    pub entropy: f64,
}

/// Negative unlabeled bound: a single reparameterized label sample
/// ŷ ~ q(y|T,G) stands in for the marginalization, the prior term is
/// evaluated at ŷ, and the bound gains the negative analytic entropy
/// −H[q(y|T,G)] = −½(1 + ln 2π + logvar_y).
pub fn elbo_unlabeled<R: Rng>(
    bound: &Bound<'_>,
    prep: &Prepared,
    rng: &mut R,
) -> Result<UnlabeledTerms, ModelError> {
    let codes = encode_and_sample(bound, prep, rng)?;
    let y_hat = reparameterize(&codes.mu_y, &codes.lv_y, rng)?;
    let cond_t = condition(&codes.z_t, &y_hat)?;
    let cond_g = condition(&codes.z_g, &y_hat)?;
    let tree_out = decode_tree_teacher(bound, &prep.tree, &cond_t)?;
    let graph_out = decode_graph_decisions(bound, &prep.decisions, &codes.enc, &cond_g)?;

    let prior = y_hat.mul(&y_hat)?.shift(ln_2pi());
    let neg_entropy = codes.lv_y.scale(-0.5).shift(-0.5 * (1.0 + ln_2pi()));
    let loss = tree_out
        .loss
        .add(&graph_out.loss)?
        .add(&codes.kl_t)?
        .add(&codes.kl_g)?
        .add(&prior)?
        .add(&neg_entropy)?;
    Ok(UnlabeledTerms {
        loss,
        y_sample: y_hat.item(),
        kl_t: codes.kl_t.item(),
        kl_g: codes.kl_g.item(),
        tree_loss: tree_out.loss.item(),
        graph_loss: graph_out.loss.item(),
        entropy: 0.5 * (1.0 + ln_2pi() + codes.lv_y.item()),
    })
}

/// One molecule in a mini-batch.
pub struct BatchItem<'a> {
    pub prep: &'a Prepared,
    /// Normalized property value; `None` marks the molecule unlabeled.
    pub y: Option<f64>,
    /// Seed for this item's reparameterization noise.
    pub seed: u64,
}

/// Batch objective value, diagnostics, and parameter gradients (aligned
/// with [`ModelState::names`]).
pub struct BatchStats {
    pub objective: f64,
    /// Mean squared supervised error over labeled items (0 if none).
    pub mse: f64,
    /// Mean KL terms over all items.
    pub kl_t: f64,
    pub kl_g: f64,
    pub tree_loss: f64,
    pub graph_loss: f64,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub label_correct: usize,
    pub n_label_decisions: usize,
    pub cand_correct: usize,
    pub n_cand_decisions: usize,
    pub grads: Vec<Tensor>,
}

struct ItemOut {
    objective: f64,
    sq_err: f64,
    kl_t: f64,
    kl_g: f64,
    tree_loss: f64,
    graph_loss: f64,
    labeled: bool,
    label_correct: usize,
    n_label: usize,
    cand_correct: usize,
    n_cand: usize,
    grads: Vec<Tensor>,
}

/// Mean labeled bound + mean unlabeled bound + alpha · mean squared
/// supervised error, with gradients. Items run on independent tapes (in
/// parallel when the `parallel` feature is on) and gradients are summed
/// in item order, so results are identical either way.
pub fn objective_batch(
    state: &ModelState,
    items: &[BatchItem<'_>],
    alpha: f64,
) -> Result<BatchStats, ModelError> {
    assert!(alpha >= 0.0, "alpha must be non-negative");
    let n_labeled = items.iter().filter(|i| i.y.is_some()).count();
    let n_unlabeled = items.len() - n_labeled;
    let w_l = if n_labeled > 0 { 1.0 / n_labeled as f64 } else { 0.0 };
    let w_u = if n_unlabeled > 0 { 1.0 / n_unlabeled as f64 } else { 0.0 };

    let results: Vec<Result<ItemOut, ModelError>> = par::map_slice(items, |item| {
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let mut rng = ChaCha8Rng::seed_from_u64(item.seed);
        match item.y {
            Some(y_obs) => {
                let terms = elbo_labeled(&bound, item.prep, y_obs, &mut rng)?;
                let err = terms.mu_y.shift(-y_obs);
                let sq = err.mul(&err)?;
                let total = terms.loss.add(&sq.scale(alpha))?.scale(w_l);
                let objective = total.item();
                let sq_err = sq.item();
                let grads = tape.backward(&total)?;
                Ok(ItemOut {
                    objective,
                    sq_err,
                    kl_t: terms.kl_t,
                    kl_g: terms.kl_g,
                    tree_loss: terms.tree_loss,
                    graph_loss: terms.graph_loss,
                    labeled: true,
                    label_correct: terms.label_correct,
                    n_label: terms.n_label,
                    cand_correct: terms.cand_correct,
                    n_cand: terms.n_cand,
                    grads: bound.gradients(&grads),
                })
            }
            None => {
                let terms = elbo_unlabeled(&bound, item.prep, &mut rng)?;
                let total = terms.loss.scale(w_u);
                let objective = total.item();
                let grads = tape.backward(&total)?;
                Ok(ItemOut {
                    objective,
                    sq_err: 0.0,
                    kl_t: terms.kl_t,
                    kl_g: terms.kl_g,
                    tree_loss: terms.tree_loss,
                    graph_loss: terms.graph_loss,
                    labeled: false,
                    label_correct: 0,
                    n_label: 0,
                    cand_correct: 0,
                    n_cand: 0,
                    grads: bound.gradients(&grads),
                })
            }
        }
    });

    let mut stats = BatchStats {
        objective: 0.0,
        mse: 0.0,
        kl_t: 0.0,
        kl_g: 0.0,
        tree_loss: 0.0,
        graph_loss: 0.0,
        n_labeled,
        n_unlabeled,
        label_correct: 0,
        n_label_decisions: 0,
        cand_correct: 0,
        n_cand_decisions: 0,
        grads: state
            .tensors()
            .iter()
            .map(|t| {
                let (r, c) = t.shape();
                Tensor::zeros(r, c)
            })
            .collect(),
    };
    let n_items = items.len().max(1) as f64;
    for result in results {
        let out = result?;
        stats.objective += out.objective;
        if out.labeled {
            stats.mse += out.sq_err * w_l;
        }
        stats.kl_t += out.kl_t / n_items;
        stats.kl_g += out.kl_g / n_items;
        stats.tree_loss += out.tree_loss / n_items;
        stats.graph_loss += out.graph_loss / n_items;
        stats.label_correct += out.label_correct;
        stats.n_label_decisions += out.n_label;
        stats.cand_correct += out.cand_correct;
        stats.n_cand_decisions += out.n_cand;
        for (acc, g) in stats.grads.iter_mut().zip(&out.grads) {
            acc.add_assign(g);
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;
    use crate::model::testutil::tiny_state;
    use crate::model::{decode_graph_teacher, ModelConfig};

    const CORPUS: &[&str] = &[
        "CCO",
        "c1ccccc1O",
        "CC(=O)N",
        "C1CC1C",
        "CCN(C)C",
        "c1ccncc1",
        "CC(C)CO",
    ];

    fn zero_posterior_heads(state: &mut ModelState) {
        let names = state.names().to_vec();
        for (name, t) in names.iter().zip(state.tensors_mut()) {
            if name.starts_with("head.zt_") || name.starts_with("head.zg_") {
                let (r, c) = t.shape();
                *t = Tensor::zeros(r, c);
            }
        }
    }

    #[test]
    fn kl_terms_vanish_when_posterior_heads_output_standard_normal() {
        let mut state = tiny_state(CORPUS, 8, 4, 3);
        zero_posterior_heads(&mut state);
        let prep = Prepared::new(&state, &parse_smiles("CCO").unwrap()).unwrap();
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let terms = elbo_labeled(&bound, &prep, 0.25, &mut rng).unwrap();
        assert_eq!(terms.kl_t, 0.0);
        assert_eq!(terms.kl_g, 0.0);
    }

    #[test]
    fn labeled_loss_decomposes_into_reported_terms_plus_prior() {
        let state = tiny_state(CORPUS, 8, 4, 5);
        let prep = Prepared::new(&state, &parse_smiles("CC(=O)N").unwrap()).unwrap();
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = 0.0;
        let terms = elbo_labeled(&bound, &prep, y, &mut rng).unwrap();
        let expect =
            terms.tree_loss + terms.graph_loss + terms.kl_t + terms.kl_g + ln_2pi();
        assert!((terms.loss.item() - expect).abs() < 1e-12);
        // the prior slot at y = 0 is exactly ln 2π ≈ 1.8379
        assert!((ln_2pi() - 1.8378770664).abs() < 1e-9);
    }

    #[test]
    fn unlabeled_prior_and_entropy_average_to_the_analytic_value() {
        // with zero-initialized heads q(y|T,G) is exactly N(0,1), so the
        // residual prior-minus-entropy piece has expectation ½(1 + ln 2π)
        let state = tiny_state(&["CC", "CCO"], 6, 3, 9);
        let prep = Prepared::new(&state, &parse_smiles("CC").unwrap()).unwrap();
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let n = 2000;
        let mut acc = 0.0;
        for seed in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let terms = elbo_unlabeled(&bound, &prep, &mut rng).unwrap();
            acc += terms.loss.item()
                - (terms.tree_loss + terms.graph_loss + terms.kl_t + terms.kl_g);
        }
        let mean = acc / n as f64;
        let expect = 0.5 * (1.0 + ln_2pi());
        assert!(
            (mean - expect).abs() < 0.1,
            "residual {mean} vs analytic {expect}"
        );
    }

    #[test]
    fn unlabeled_bound_collapses_to_labeled_in_the_point_mass_limit() {
        // pin q(y|T,G) to mu = 0 with logvar driven to the clamp floor:
        // the sampled label sticks to y = 0 and the bounds differ by the
        // (vanishing) entropy term only
        let mut state = tiny_state(CORPUS, 8, 4, 13);
        let idx = state.names().iter().position(|n| n == "head.y2.b").unwrap();
        state.tensors_mut()[idx].set(0, 1, -1000.0);
        let prep = Prepared::new(&state, &parse_smiles("CCN(C)C").unwrap()).unwrap();

        let seed = 41;
        let tape_l = Tape::new();
        let bound_l = state.bind(&tape_l);
        let mut rng_l = ChaCha8Rng::seed_from_u64(seed);
        let labeled = elbo_labeled(&bound_l, &prep, 0.0, &mut rng_l).unwrap();

        let tape_u = Tape::new();
        let bound_u = state.bind(&tape_u);
        let mut rng_u = ChaCha8Rng::seed_from_u64(seed);
        let unlabeled = elbo_unlabeled(&bound_u, &prep, &mut rng_u).unwrap();

        let neg_entropy_at_floor = -0.5 * (1.0 + ln_2pi() + crate::tensor::LOGVAR_MIN);
        let diff = unlabeled.loss.item() - labeled.loss.item();
        assert!(
            (diff - neg_entropy_at_floor).abs() < 1e-2,
            "diff {diff} vs {neg_entropy_at_floor}"
        );
    }

    #[test]
    fn cached_decisions_reproduce_the_direct_graph_loss() {
        let state = tiny_state(CORPUS, 8, 4, 17);
        let mol = parse_smiles("CC(C)CO").unwrap();
        let prep = Prepared::new(&state, &mol).unwrap();
        let tape = Tape::new();
        let bound = state.bind(&tape);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = encode_graph(&bound, &mol).unwrap();
        let z = tape.leaf(Tensor::randn(1, 4, 1.0, &mut rng));
        let y = tape.leaf(Tensor::scalar(0.3));
        let cond = condition(&z, &y).unwrap();
        let direct = decode_graph_teacher(&bound, &mol, prep.tree(), &enc, &cond).unwrap();
        let cached = decode_graph_decisions(&bound, &prep.decisions, &enc, &cond).unwrap();
        assert!((direct.loss.item() - cached.loss.item()).abs() < 1e-12);
        assert_eq!(direct.n_edges, cached.n_edges);
    }

    #[test]
    fn all_labeled_batch_with_zero_alpha_is_the_mean_labeled_bound() {
        let state = tiny_state(CORPUS, 8, 4, 19);
        let mols = ["CCO", "CC(=O)N", "C1CC1C"];
        let preps: Vec<Prepared> = mols
            .iter()
            .map(|s| Prepared::new(&state, &parse_smiles(s).unwrap()).unwrap())
            .collect();
        let items: Vec<BatchItem<'_>> = preps
            .iter()
            .enumerate()
            .map(|(i, prep)| BatchItem {
                prep,
                y: Some(0.1 * i as f64),
                seed: 100 + i as u64,
            })
            .collect();
        let stats = objective_batch(&state, &items, 0.0).unwrap();

        let mut expect = 0.0;
        for item in &items {
            let tape = Tape::new();
            let bound = state.bind(&tape);
            let mut rng = ChaCha8Rng::seed_from_u64(item.seed);
            expect += elbo_labeled(&bound, item.prep, item.y.unwrap(), &mut rng)
                .unwrap()
                .loss
                .item();
        }
        expect /= items.len() as f64;
        assert!((stats.objective - expect).abs() < 1e-12);
        assert_eq!(stats.n_labeled, 3);
        assert_eq!(stats.n_unlabeled, 0);
    }

    #[test]
    fn perfect_prediction_makes_the_supervised_term_free() {
        // zero-initialized property head predicts mu_y = 0 exactly
        let state = tiny_state(CORPUS, 8, 4, 23);
        let prep = Prepared::new(&state, &parse_smiles("CCO").unwrap()).unwrap();
        let items = [BatchItem {
            prep: &prep,
            y: Some(0.0),
            seed: 5,
        }];
        let at_zero = objective_batch(&state, &items, 0.0).unwrap();
        let at_five = objective_batch(&state, &items, 5.0).unwrap();
        assert!((at_zero.objective - at_five.objective).abs() < 1e-12);
        assert_eq!(at_five.mse, 0.0);
    }

    #[test]
    fn alpha_scales_the_supervised_term_linearly() {
        let state = tiny_state(CORPUS, 8, 4, 29);
        let prep = Prepared::new(&state, &parse_smiles("CCO").unwrap()).unwrap();
        let items = [BatchItem {
            prep: &prep,
            y: Some(0.7),
            seed: 6,
        }];
        let a0 = objective_batch(&state, &items, 0.0).unwrap();
        let a2 = objective_batch(&state, &items, 2.0).unwrap();
        // mu_y = 0 at init, so the squared error is 0.49 exactly
        assert!((a2.objective - a0.objective - 2.0 * 0.49).abs() < 1e-12);
        assert!((a0.mse - 0.49).abs() < 1e-12);
    }

    #[test]
    fn mixed_batch_gradients_are_deterministic_and_nonzero() {
        let state = tiny_state(CORPUS, 8, 4, 31);
        let p1 = Prepared::new(&state, &parse_smiles("CCO").unwrap()).unwrap();
        let p2 = Prepared::new(&state, &parse_smiles("c1ccncc1").unwrap()).unwrap();
        let items = [
            BatchItem {
                prep: &p1,
                y: Some(0.4),
                seed: 7,
            },
            BatchItem {
                prep: &p2,
                y: None,
                seed: 8,
            },
        ];
        let a = objective_batch(&state, &items, 0.5).unwrap();
        let b = objective_batch(&state, &items, 0.5).unwrap();
        assert_eq!(a.objective, b.objective);
        for (ga, gb) in a.grads.iter().zip(&b.grads) {
            assert_eq!(ga.data(), gb.data());
        }
        let total: f64 = a.grads.iter().map(|g| g.data().iter().map(|v| v.abs()).sum::<f64>()).sum();
        assert!(total > 1e-6, "gradients all vanished");
    }

    #[test]
    fn batch_gradients_match_finite_differences_on_sampled_entries() {
        let mut state = tiny_state(&["CC", "CCO", "CCN"], 5, 3, 37);
        let p1 = Prepared::new(&state, &parse_smiles("CCO").unwrap()).unwrap();
        let p2 = Prepared::new(&state, &parse_smiles("CCN").unwrap()).unwrap();

        let objective_value = |state: &ModelState| -> f64 {
            let items = [
                BatchItem {
                    prep: &p1,
                    y: Some(0.3),
                    seed: 51,
                },
                BatchItem {
                    prep: &p2,
                    y: None,
                    seed: 52,
                },
            ];
            objective_batch(state, &items, 0.7).unwrap().objective
        };

        let items = [
            BatchItem {
                prep: &p1,
                y: Some(0.3),
                seed: 51,
            },
            BatchItem {
                prep: &p2,
                y: None,
                seed: 52,
            },
        ];
        let analytic = objective_batch(&state, &items, 0.7).unwrap().grads;

        // probe a few entries in every parameter tensor
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for ti in 0..state.tensors().len() {
            let len = state.tensors()[ti].data().len();
            for &j in &[0, len / 2, len - 1] {
                let orig = state.tensors()[ti].data()[j];
                state.tensors_mut()[ti].data_mut()[j] = orig + h;
                let up = objective_value(&state);
                state.tensors_mut()[ti].data_mut()[j] = orig - h;
                let down = objective_value(&state);
                state.tensors_mut()[ti].data_mut()[j] = orig;
                let numeric = (up - down) / (2.0 * h);
                let exact = analytic[ti].data()[j];
                let rel = (numeric - exact).abs() / numeric.abs().max(exact.abs()).max(1.0);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn oversized_molecule_is_rejected_at_preparation() {
        let state = tiny_state(&["CC"], 5, 3, 0);
        let cfg = ModelConfig {
            node_cap: 2,
            ..*state.config()
        };
        let state = ModelState::new(cfg, state.vocab().clone(), 0).unwrap();
        let err = Prepared::new(&state, &parse_smiles("CCCC").unwrap());
        assert!(matches!(err, Err(ModelError::DecodeOverflow)));
    }
}
