//! Sign-gradient evasion attack on spectrogram images.
//!
//! One step in pixel space: `x_adv = clip(x + eps * sign(dL/dx), 0, 1)`.
//! The three image channels are replicas of one spectrogram, so their
//! gradients are averaged and every channel receives the identical step,
//! keeping the adversarial image a valid (replicated) spectrogram.

use crate::diffnet::{patch_grad_to_pixels, patch_seq, DiffTransformer, ForwardSpec};
use crate::tensor::{Graph, NodeId, Scalar};
use crate::tfmap::{Spectrogram, IMG_CHANNELS, IMG_SIZE};

/// Pixel-space gradient of whatever loss was backpropagated on `g`, given
/// the patch-sequence input leaf. Length `3 * 40 * 40`, channel-major.
pub fn pixel_gradient<T: Scalar>(g: &Graph<T>, input: NodeId) -> Vec<T> {
    let gp = g
        .grad(input)
        .expect("run backward before reading the input gradient");
    patch_grad_to_pixels(gp)
}

/// Apply the sign step for a precomputed pixel gradient. `sign(0)` takes no
/// step, and a non-finite average is treated the same way.
pub fn fgsm_from_pixel_grad<T: Scalar>(
    img: &Spectrogram,
    pixel_grad: &[T],
    eps: f32,
) -> Spectrogram {
    let plane = IMG_SIZE * IMG_SIZE;
    assert_eq!(
        pixel_grad.len(),
        IMG_CHANNELS * plane,
        "pixel gradient has {} values, image needs {}",
        pixel_grad.len(),
        IMG_CHANNELS * plane
    );
    let mut out = vec![0.0f32; IMG_CHANNELS * plane];
    for y in 0..IMG_SIZE {
        for x in 0..IMG_SIZE {
            let mut avg = 0.0f64;
            for c in 0..IMG_CHANNELS {
                avg += pixel_grad[c * plane + y * IMG_SIZE + x].to_f64();
            }
            let step = if avg > 0.0 {
                eps
            } else if avg < 0.0 {
                -eps
            } else {
                0.0
            };
            for c in 0..IMG_CHANNELS {
                let v = img.at(c, y, x) + step;
                out[c * plane + y * IMG_SIZE + x] = v.clamp(0.0, 1.0);
            }
        }
    }
    Spectrogram::from_pixels(out)
}

/// Full single-step attack against an undefended model: eval-mode forward,
/// cross-entropy against the true label, one sign step.
pub fn fgsm<T: Scalar>(
    model: &DiffTransformer<T>,
    img: &Spectrogram,
    label: usize,
    eps: f32,
) -> Spectrogram {
    let mut g = Graph::new();
    let out = model.forward(&mut g, patch_seq(img), &ForwardSpec::eval());
    let loss = g.cross_entropy_logits(out.logits, label);
    g.backward(loss).expect("fresh graph cannot have run backward");
    let grad = pixel_gradient(&g, out.input);
    fgsm_from_pixel_grad(img, &grad, eps)
}
