//! Clean and adversarial evaluation over a dataset split.
//!
//! Two inference modes: plain single-pass, and the randomized-masking
//! ensemble defense, where every prediction averages softmax outputs over
//! several freshly masked forwards. Against the ensemble, the attacker
//! differentiates one seed-fixed masked forward of its own; the defender
//! then predicts with masks drawn from a different seed, so the attacker
//! never sees the masks it has to beat.

use super::dataset::Dataset;
use super::derive_seed;
use super::parallel::parallel_map;
use crate::attack::{fgsm_from_pixel_grad, pixel_gradient};
use crate::diffnet::{argmax, patch_seq, DiffTransformer, ForwardSpec, Mode};
use crate::tensor::Scalar;
use crate::tfmap::Spectrogram;
use crate::training::{ensemble_forward, MaskedConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Debug)]
pub enum EvalMode {
    /// One full-patch eval-mode forward per image.
    Plain,
    /// Mean softmax over `cfg.branches` masked forwards; the per-image mask
    /// stream is derived from `seed` and the sample index.
    MaskedEnsemble { cfg: MaskedConfig, seed: u64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct IsnrRow {
    pub isnr_db: f64,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_isnr: Vec<IsnrRow>,
    /// `confusion[true_label][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// One FGSM budget evaluated over the whole split.
#[derive(Clone, Debug, Serialize)]
pub struct AdvRow {
    pub eps_255: f64,
    pub report: EvalReport,
}

fn predict_with<T: Scalar>(
    model: &DiffTransformer<T>,
    img: &Spectrogram,
    mode: &EvalMode,
    sample_key: u64,
) -> u8 {
    match mode {
        EvalMode::Plain => model.predict(img),
        EvalMode::MaskedEnsemble { cfg, seed } => {
            let mut g = crate::tensor::Graph::new();
            let input = g.input(patch_seq::<T>(img));
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(*seed, sample_key));
            let out = ensemble_forward(model, &mut g, input, cfg, Mode::Eval, &mut rng);
            argmax(g.value(out.mean_prob).data()) as u8
        }
    }
}

/// Input gradient of the attacked objective: plain cross-entropy for a
/// single-pass model. Against the masked defense the attacker gets one
/// seed-fixed masked branch forward — single-pass FGSM, not an expectation
/// over mask draws — so patches its draw masks out receive exactly zero
/// gradient and the defender's fresh draws stay unseen.
fn attack_gradient<T: Scalar>(
    model: &DiffTransformer<T>,
    img: &Spectrogram,
    label: u8,
    mode: &EvalMode,
    attack_seed: u64,
    sample_key: u64,
) -> Vec<T> {
    let mut g = crate::tensor::Graph::new();
    let input = g.input(patch_seq::<T>(img));
    let loss = match mode {
        EvalMode::Plain => {
            let out = model.forward_node(&mut g, input, &ForwardSpec::eval());
            g.cross_entropy_logits(out.logits, label as usize)
        }
        EvalMode::MaskedEnsemble { cfg, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(attack_seed, sample_key));
            let single = MaskedConfig {
                branches: 1,
                ..cfg.clone()
            };
            let out = ensemble_forward(model, &mut g, input, &single, Mode::Eval, &mut rng);
            g.cross_entropy_logits(out.branch_logits[0], label as usize)
        }
    };
    g.backward(loss).expect("attack loss is scalar");
    pixel_gradient(&g, input)
}

fn report_from_preds(ds: &Dataset, indices: &[usize], preds: &[u8]) -> EvalReport {
    let k = ds.manifest.num_classes;
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0usize;
    for (&s, &p) in indices.iter().zip(preds) {
        let t = ds.labels[s] as usize;
        confusion[t][p as usize] += 1;
        if t == p as usize {
            correct += 1;
        }
    }
    let mut per_isnr = Vec::new();
    for &isnr in &ds.manifest.isnr_grid_db {
        let mut n = 0usize;
        let mut ok = 0usize;
        for (&s, &p) in indices.iter().zip(preds) {
            if ds.isnr_db[s] == isnr as f32 {
                n += 1;
                if ds.labels[s] == p {
                    ok += 1;
                }
            }
        }
        per_isnr.push(IsnrRow {
            isnr_db: isnr,
            n,
            correct: ok,
            accuracy: if n == 0 { 0.0 } else { ok as f64 / n as f64 },
        });
    }
    EvalReport {
        n: indices.len(),
        correct,
        accuracy: if indices.is_empty() {
            0.0
        } else {
            correct as f64 / indices.len() as f64
        },
        per_isnr,
        confusion,
    }
}

/// Clean accuracy over `indices` (usually the manifest's test split).
pub fn evaluate<T: Scalar>(
    model: &DiffTransformer<T>,
    ds: &Dataset,
    indices: &[usize],
    mode: &EvalMode,
) -> EvalReport {
    let preds = parallel_map(indices.len(), |i| {
        let s = indices[i];
        predict_with(model, &ds.images[s], mode, s as u64)
    });
    report_from_preds(ds, indices, &preds)
}

/// FGSM robustness sweep: one gradient per sample, reused across budgets.
/// `eps_255` entries are in 1/255 pixel units; 0 reproduces the clean run
/// bit for bit.
pub fn eval_adversarial<T: Scalar>(
    model: &DiffTransformer<T>,
    ds: &Dataset,
    indices: &[usize],
    eps_255: &[f64],
    mode: &EvalMode,
    attack_seed: u64,
) -> Vec<AdvRow> {
    let preds_per_sample: Vec<Vec<u8>> = parallel_map(indices.len(), |i| {
        let s = indices[i];
        let img = &ds.images[s];
        let grad = attack_gradient(model, img, ds.labels[s], mode, attack_seed, s as u64);
        eps_255
            .iter()
            .map(|&e| {
                let adv = fgsm_from_pixel_grad(img, &grad, (e / 255.0) as f32);
                predict_with(model, &adv, mode, s as u64)
            })
            .collect()
    });

    eps_255
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let preds: Vec<u8> = preds_per_sample.iter().map(|row| row[j]).collect();
            AdvRow {
                eps_255: e,
                report: report_from_preds(ds, indices, &preds),
            }
        })
        .collect()
}
