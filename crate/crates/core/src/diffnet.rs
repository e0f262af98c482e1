//! Differential-transformer classifier.
//!
//! Pipeline per image: 3x40x40 pixels -> 100 patches of 48 values ->
//! Conv1d+BN+ReLU patch embedding into 32 channels -> two encoder blocks
//! (multi-head differential attention + gated feed-forward, both pre-norm
//! residual, no positional encoding) -> mean pool over patches -> linear
//! head. Each attention head computes the difference of two softmax maps,
//! `softmax(Q1 K1^T / sqrt(d)) - lambda * softmax(Q2 K2^T / sqrt(d))`,
//! which lets one map cancel the other's attention noise.

use crate::tensor::{Graph, NodeId, ParamId, ParamStore, Scalar, Tensor};
use crate::tfmap::{Spectrogram, IMG_CHANNELS, IMG_SIZE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Side of one square patch tile in pixels.
pub const PATCH: usize = 4;
/// Patches per image: (40/4)^2.
pub const N_PATCHES: usize = (IMG_SIZE / PATCH) * (IMG_SIZE / PATCH);
/// Values per patch: 3 channels x 4 x 4 pixels.
pub const PATCH_DIM: usize = IMG_CHANNELS * PATCH * PATCH;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Patch feature width fed to the embedding conv.
    pub in_dim: usize,
    /// Embedding width C; every block preserves it.
    pub channels: usize,
    /// Attention heads h; head dim d = C / h.
    pub heads: usize,
    pub blocks: usize,
    /// Feed-forward expansion b: hidden width = b * C.
    pub elu_expansion: usize,
    /// Differential attention weight on the second softmax map.
    pub lambda: f64,
    pub n_classes: usize,
    /// Embedding conv kernel length along the patch axis.
    pub conv_kernel: usize,
}

impl ModelConfig {
    /// The full-size classifier: (3,40,40) input, C=32, 4 heads, 2 blocks.
    pub fn full() -> Self {
        Self {
            in_dim: PATCH_DIM,
            channels: 32,
            heads: 4,
            blocks: 2,
            elu_expansion: 2,
            lambda: 0.8,
            n_classes: 8,
            conv_kernel: 3,
        }
    }

    pub fn head_dim(&self) -> usize {
        assert_eq!(
            self.channels % self.heads,
            0,
            "channels {} must divide into {} heads",
            self.channels,
            self.heads
        );
        self.channels / self.heads
    }
}

struct HeadIds {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    ln_gamma: ParamId,
    ln_beta: ParamId,
}

struct BlockIds {
    ln1_gamma: ParamId,
    ln1_beta: ParamId,
    heads: Vec<HeadIds>,
    wo: ParamId,
    ln2_gamma: ParamId,
    ln2_beta: ParamId,
    w1: ParamId,
    w2: ParamId,
    w3: ParamId,
}

struct Ids {
    conv_w: ParamId,
    conv_b: ParamId,
    bn_gamma: ParamId,
    bn_beta: ParamId,
    bn_mean: ParamId,
    bn_var: ParamId,
    blocks: Vec<BlockIds>,
    fc_w: ParamId,
    fc_b: ParamId,
}

/// Train and eval normalize by the same per-sample patch statistics; the
/// modes differ only in whether those statistics are surfaced for the
/// running-average bookkeeping done by the training loop.
#[derive(Clone, Copy, Debug)]
pub enum Mode {
    Train,
    Eval,
}

/// Optional per-forward modifiers: a patch subset to keep and drawn noise to
/// add onto the embedded features (shape `[n_active, C]`).
pub struct ForwardSpec<'a, T> {
    pub mode: Mode,
    pub active: Option<&'a [usize]>,
    pub feature_noise: Option<&'a Tensor<T>>,
}

impl<'a, T> ForwardSpec<'a, T> {
    pub fn eval() -> Self {
        Self {
            mode: Mode::Eval,
            active: None,
            feature_noise: None,
        }
    }

    pub fn train() -> Self {
        Self {
            mode: Mode::Train,
            active: None,
            feature_noise: None,
        }
    }
}

pub struct ForwardOut<T> {
    /// The patch-sequence leaf; its gradient drives input-space attacks.
    pub input: NodeId,
    /// Post-pool features `[1, C]`, the consistency-training target.
    pub features: NodeId,
    pub logits: NodeId,
    /// Embedding-BN batch statistics when run in train mode.
    pub bn_stats: Option<(Vec<T>, Vec<T>)>,
}

pub struct DiffTransformer<T: Scalar> {
    pub cfg: ModelConfig,
    pub params: ParamStore<T>,
    ids: Ids,
}

fn uniform_init<T: Scalar, R: Rng>(
    rng: &mut R,
    shape: Vec<usize>,
    fan_in: usize,
) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64(rng.random_range(-bound..bound)))
        .collect();
    Tensor::new(shape, data)
}

impl<T: Scalar> DiffTransformer<T> {
    /// Fresh model with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights,
    /// unit LN/BN gains and zero biases. The draw order is fixed by the
    /// registration order below, so a seed pins every weight.
    pub fn new(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let c = cfg.channels;
        let d = cfg.head_dim();
        let k = cfg.conv_kernel;

        let conv_w = p.add(
            "patch_embed.conv.weight",
            uniform_init(&mut rng, vec![c, cfg.in_dim, k], cfg.in_dim * k),
            true,
        );
        let conv_b = p.add(
            "patch_embed.conv.bias",
            uniform_init(&mut rng, vec![c], cfg.in_dim * k),
            true,
        );
        let bn_gamma = p.add("patch_embed.bn.gamma", Tensor::full(vec![c], T::one()), true);
        let bn_beta = p.add("patch_embed.bn.beta", Tensor::zeros(vec![c]), true);
        let bn_mean = p.add("patch_embed.bn.running_mean", Tensor::zeros(vec![c]), false);
        let bn_var = p.add(
            "patch_embed.bn.running_var",
            Tensor::full(vec![c], T::one()),
            false,
        );

        let mut blocks = Vec::with_capacity(cfg.blocks);
        for b in 0..cfg.blocks {
            let ln1_gamma = p.add(&format!("block{b}.ln1.gamma"), Tensor::full(vec![c], T::one()), true);
            let ln1_beta = p.add(&format!("block{b}.ln1.beta"), Tensor::zeros(vec![c]), true);
            let mut heads = Vec::with_capacity(cfg.heads);
            for h in 0..cfg.heads {
                let wq = p.add(
                    &format!("block{b}.head{h}.wq"),
                    uniform_init(&mut rng, vec![c, 2 * d], c),
                    true,
                );
                let wk = p.add(
                    &format!("block{b}.head{h}.wk"),
                    uniform_init(&mut rng, vec![c, 2 * d], c),
                    true,
                );
                let wv = p.add(
                    &format!("block{b}.head{h}.wv"),
                    uniform_init(&mut rng, vec![c, d], c),
                    true,
                );
                let ln_gamma = p.add(
                    &format!("block{b}.head{h}.ln.gamma"),
                    Tensor::full(vec![d], T::one()),
                    true,
                );
                let ln_beta = p.add(
                    &format!("block{b}.head{h}.ln.beta"),
                    Tensor::zeros(vec![d]),
                    true,
                );
                heads.push(HeadIds {
                    wq,
                    wk,
                    wv,
                    ln_gamma,
                    ln_beta,
                });
            }
            let wo = p.add(
                &format!("block{b}.wo"),
                uniform_init(&mut rng, vec![c, c], c),
                true,
            );
            let ln2_gamma = p.add(&format!("block{b}.ln2.gamma"), Tensor::full(vec![c], T::one()), true);
            let ln2_beta = p.add(&format!("block{b}.ln2.beta"), Tensor::zeros(vec![c]), true);
            let hidden = cfg.elu_expansion * c;
            let w1 = p.add(
                &format!("block{b}.ffn.w1"),
                uniform_init(&mut rng, vec![c, hidden], c),
                true,
            );
            let w2 = p.add(
                &format!("block{b}.ffn.w2"),
                uniform_init(&mut rng, vec![c, hidden], c),
                true,
            );
            let w3 = p.add(
                &format!("block{b}.ffn.w3"),
                uniform_init(&mut rng, vec![hidden, c], hidden),
                true,
            );
            blocks.push(BlockIds {
                ln1_gamma,
                ln1_beta,
                heads,
                wo,
                ln2_gamma,
                ln2_beta,
                w1,
                w2,
                w3,
            });
        }

        let fc_w = p.add(
            "head.fc.weight",
            uniform_init(&mut rng, vec![c, cfg.n_classes], c),
            true,
        );
        let fc_b = p.add(
            "head.fc.bias",
            uniform_init(&mut rng, vec![1, cfg.n_classes], c),
            true,
        );

        Self {
            cfg: cfg.clone(),
            params: p,
            ids: Ids {
                conv_w,
                conv_b,
                bn_gamma,
                bn_beta,
                bn_mean,
                bn_var,
                blocks,
                fc_w,
                fc_b,
            },
        }
    }

    /// Overwrite the BN running statistics (momentum update lives in the
    /// training loop). Diagnostics only; the forward pass normalizes by
    /// per-sample statistics in both modes.
    pub fn set_bn_running(&mut self, mean: &[T], var: &[T]) {
        self.params
            .value_mut(self.ids.bn_mean)
            .data_mut()
            .copy_from_slice(mean);
        self.params
            .value_mut(self.ids.bn_var)
            .data_mut()
            .copy_from_slice(var);
    }

    pub fn bn_running(&self) -> (Vec<T>, Vec<T>) {
        (
            self.params.value(self.ids.bn_mean).data().to_vec(),
            self.params.value(self.ids.bn_var).data().to_vec(),
        )
    }

    /// Record one forward pass on `g`. `patches` is the `[100, in_dim]`
    /// patch sequence; see [`ForwardSpec`] for masking and noise.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        patches: Tensor<T>,
        spec: &ForwardSpec<'_, T>,
    ) -> ForwardOut<T> {
        let input = g.input(patches);
        self.forward_node(g, input, spec)
    }

    /// Same as [`Self::forward`] but reusing an existing input leaf, so that
    /// several branches over one image accumulate into one input gradient.
    pub fn forward_node(
        &self,
        g: &mut Graph<T>,
        input: NodeId,
        spec: &ForwardSpec<'_, T>,
    ) -> ForwardOut<T> {
        assert_eq!(
            g.value(input).cols(),
            self.cfg.in_dim,
            "forward: patch dim {} vs model in_dim {}",
            g.value(input).cols(),
            self.cfg.in_dim
        );
        let x = match spec.active {
            Some(active) => g.select_rows(input, active),
            None => input,
        };

        // Patch embedding: conv along the (compacted) patch sequence.
        let conv_w = g.param(&self.params, self.ids.conv_w);
        let conv_b = g.param(&self.params, self.ids.conv_b);
        let embedded = g.conv1d(x, conv_w, conv_b);
        let bn_gamma = g.param(&self.params, self.ids.bn_gamma);
        let bn_beta = g.param(&self.params, self.ids.bn_beta);
        // Graphs are built per sample, so batch statistics are the statistics
        // of this sample's (active) patch sequence. Eval uses the same
        // per-sample statistics: anything else would normalize features
        // differently from how the network saw them during training. The
        // running mean/var buffers are still maintained as checkpoint
        // diagnostics but do not enter the forward pass.
        let (normed, bn_stats) = match spec.mode {
            Mode::Train => {
                let (n, mean, var) = g.batchnorm_train(embedded, bn_gamma, bn_beta);
                (n, Some((mean, var)))
            }
            Mode::Eval => {
                let (n, _, _) = g.batchnorm_train(embedded, bn_gamma, bn_beta);
                (n, None)
            }
        };
        let mut h = g.relu(normed);
        if let Some(noise) = spec.feature_noise {
            h = g.add_const(h, noise);
        }

        for block in &self.ids.blocks {
            h = self.encoder_block(g, h, block);
        }

        let features = g.mean_rows(h);
        let fc_w = g.param(&self.params, self.ids.fc_w);
        let fc_b = g.param(&self.params, self.ids.fc_b);
        let proj = g.matmul(features, fc_w);
        let logits = g.add(proj, fc_b);
        ForwardOut {
            input,
            features,
            logits,
            bn_stats,
        }
    }

    fn encoder_block(&self, g: &mut Graph<T>, x: NodeId, ids: &BlockIds) -> NodeId {
        let lambda = T::from_f64(self.cfg.lambda);
        let ln1_g = g.param(&self.params, ids.ln1_gamma);
        let ln1_b = g.param(&self.params, ids.ln1_beta);
        let normed = g.layernorm(x, ln1_g, ln1_b);

        let head_nodes: Vec<(NodeId, NodeId, NodeId, NodeId, NodeId)> = ids
            .heads
            .iter()
            .map(|h| {
                (
                    g.param(&self.params, h.wq),
                    g.param(&self.params, h.wk),
                    g.param(&self.params, h.wv),
                    g.param(&self.params, h.ln_gamma),
                    g.param(&self.params, h.ln_beta),
                )
            })
            .collect();
        let wo = g.param(&self.params, ids.wo);
        let attn = multi_diff(g, normed, &head_nodes, wo, lambda);
        let x = g.add(attn, x);

        let ln2_g = g.param(&self.params, ids.ln2_gamma);
        let ln2_b = g.param(&self.params, ids.ln2_beta);
        let normed = g.layernorm(x, ln2_g, ln2_b);
        let w1 = g.param(&self.params, ids.w1);
        let w2 = g.param(&self.params, ids.w2);
        let w3 = g.param(&self.params, ids.w3);
        let ffn = elu_block(g, normed, w1, w2, w3);
        g.add(ffn, x)
    }

    /// Eval-mode logits for one image, full patch set.
    pub fn logits_of(&self, img: &Spectrogram) -> Vec<T> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, patch_seq(img), &ForwardSpec::eval());
        g.value(out.logits).data().to_vec()
    }

    /// Plain prediction: argmax of eval-mode logits, ties to the lowest
    /// class index.
    pub fn predict(&self, img: &Spectrogram) -> u8 {
        argmax(&self.logits_of(img)) as u8
    }
}

/// One differential attention head on pre-normed features `x: [n, C]`.
/// Returns `[n, d]` where `Q = x wq` splits into two `d`-wide halves (same
/// for K) and the two softmax maps are subtracted with weight `lambda`.
pub fn diff_attention<T: Scalar>(
    g: &mut Graph<T>,
    x: NodeId,
    wq: NodeId,
    wk: NodeId,
    wv: NodeId,
    lambda: T,
) -> NodeId {
    let two_d = g.value(wq).cols();
    assert_eq!(two_d % 2, 0, "wq must have an even column count");
    let d = two_d / 2;
    let inv_sqrt_d = T::from_f64(1.0 / (d as f64).sqrt());

    let q = g.matmul(x, wq);
    let k = g.matmul(x, wk);
    let v = g.matmul(x, wv);
    let q1 = g.slice_cols(q, 0, d);
    let q2 = g.slice_cols(q, d, two_d);
    let k1 = g.slice_cols(k, 0, d);
    let k2 = g.slice_cols(k, d, two_d);

    let k1t = g.transpose(k1);
    let s1 = g.matmul(q1, k1t);
    let s1 = g.scale(s1, inv_sqrt_d);
    let a1 = g.softmax_rows(s1);

    let k2t = g.transpose(k2);
    let s2 = g.matmul(q2, k2t);
    let s2 = g.scale(s2, inv_sqrt_d);
    let a2 = g.softmax_rows(s2);

    let a2l = g.scale(a2, lambda);
    let diff = g.sub(a1, a2l);
    g.matmul(diff, v)
}

/// Multi-head differential attention: each head is layer-normed, scaled by
/// `1 - lambda`, concatenated and mixed by `wo`. Head tuples are
/// `(wq, wk, wv, ln_gamma, ln_beta)`.
pub fn multi_diff<T: Scalar>(
    g: &mut Graph<T>,
    x: NodeId,
    heads: &[(NodeId, NodeId, NodeId, NodeId, NodeId)],
    wo: NodeId,
    lambda: T,
) -> NodeId {
    let gain = T::one() - lambda;
    let outs: Vec<NodeId> = heads
        .iter()
        .map(|&(wq, wk, wv, ln_g, ln_b)| {
            let head = diff_attention(g, x, wq, wk, wv, lambda);
            let normed = g.layernorm(head, ln_g, ln_b);
            g.scale(normed, gain)
        })
        .collect();
    let cat = g.concat_cols(&outs);
    g.matmul(cat, wo)
}

/// Gated feed-forward: `(silu(x w1) . (x w2)) w3`, no biases.
pub fn elu_block<T: Scalar>(
    g: &mut Graph<T>,
    x: NodeId,
    w1: NodeId,
    w2: NodeId,
    w3: NodeId,
) -> NodeId {
    let a = g.matmul(x, w1);
    let a = g.silu(a);
    let b = g.matmul(x, w2);
    let gated = g.mul(a, b);
    g.matmul(gated, w3)
}

/// Index of the maximum, ties broken toward the lowest index.
pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Pixel (c, y, x) lives at patch `(y/4)*10 + x/4`, feature
/// `c*16 + (y%4)*4 + (x%4)`: row-major tiles, channel-major flattening.
fn patch_index_of_pixel(c: usize, y: usize, x: usize) -> (usize, usize) {
    let tiles = IMG_SIZE / PATCH;
    let p = (y / PATCH) * tiles + x / PATCH;
    let f = c * PATCH * PATCH + (y % PATCH) * PATCH + (x % PATCH);
    (p, f)
}

/// Split an image into the `[100, 48]` patch sequence the model consumes.
pub fn patch_seq<T: Scalar>(img: &Spectrogram) -> Tensor<T> {
    let mut out = Tensor::zeros(vec![N_PATCHES, PATCH_DIM]);
    for c in 0..IMG_CHANNELS {
        for y in 0..IMG_SIZE {
            for x in 0..IMG_SIZE {
                let (p, f) = patch_index_of_pixel(c, y, x);
                out.data_mut()[p * PATCH_DIM + f] = T::from_f64(img.at(c, y, x) as f64);
            }
        }
    }
    out
}

/// Scatter a `[100, 48]` patch-sequence gradient back onto 3x40x40 pixels,
/// the exact inverse of [`patch_seq`].
pub fn patch_grad_to_pixels<T: Scalar>(grad: &Tensor<T>) -> Vec<T> {
    assert_eq!(
        grad.shape(),
        &[N_PATCHES, PATCH_DIM],
        "patch gradient must be [{}, {}], got {:?}",
        N_PATCHES,
        PATCH_DIM,
        grad.shape()
    );
    let mut out = vec![T::zero(); IMG_CHANNELS * IMG_SIZE * IMG_SIZE];
    for c in 0..IMG_CHANNELS {
        for y in 0..IMG_SIZE {
            for x in 0..IMG_SIZE {
                let (p, f) = patch_index_of_pixel(c, y, x);
                out[c * IMG_SIZE * IMG_SIZE + y * IMG_SIZE + x] =
                    grad.data()[p * PATCH_DIM + f];
            }
        }
    }
    out
}

/// One named term of the analytic cost model.
#[derive(Clone, Debug, PartialEq)]
pub struct FlopsTerm {
    pub name: &'static str,
    pub flops: u64,
}

/// Analytic floating-point cost of one unmasked forward pass over
/// `n_patches` patches. Conventions: one multiply-accumulate inside a
/// matmul/conv counts as 2 FLOPs; softmax, layer-norm and batch-norm count
/// 5 FLOPs per output element; SiLU counts 4; plain adds/muls count 1.
pub fn count_flops(cfg: &ModelConfig, n_patches: usize) -> (u64, Vec<FlopsTerm>) {
    let n = n_patches as u64;
    let c = cfg.channels as u64;
    let d = cfg.head_dim() as u64;
    let h = cfg.heads as u64;
    let hidden = (cfg.elu_expansion * cfg.channels) as u64;
    let classes = cfg.n_classes as u64;
    let k = cfg.conv_kernel as u64;
    let b = cfg.blocks as u64;

    let mut terms = Vec::new();
    let mut push = |name: &'static str, flops: u64| terms.push(FlopsTerm { name, flops });

    push("patch_embed.conv", 2 * n * c * cfg.in_dim as u64 * k + n * c);
    push("patch_embed.bn", 5 * n * c);
    push("patch_embed.relu", n * c);

    // Per encoder block, multiplied by the block count at the end of each term.
    push("block.ln", b * 2 * 5 * n * c);
    push("block.qkv_proj", b * h * (2 * n * c * (2 * d) * 2 + 2 * n * c * d));
    push("block.scores", b * h * 2 * (2 * n * n * d + n * n));
    push("block.softmax", b * h * 2 * 5 * n * n);
    push("block.diff_combine", b * h * 2 * n * n);
    push("block.attn_v", b * h * 2 * n * n * d);
    push("block.head_ln", b * h * (5 * n * d + n * d));
    push("block.wo", b * 2 * n * c * c);
    push("block.ffn_w1_w2", b * 2 * (2 * n * c * hidden));
    push("block.ffn_silu_gate", b * (4 * n * hidden + n * hidden));
    push("block.ffn_w3", b * 2 * n * hidden * c);
    push("block.residuals", b * 2 * n * c);

    push("head.gap", n * c + c);
    push("head.fc", 2 * c * classes);
    push("head.fc_bias", classes);

    let total = terms.iter().map(|t| t.flops).sum();
    (total, terms)
}
