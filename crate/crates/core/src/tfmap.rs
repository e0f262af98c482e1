//! Time-frequency features: short-time Fourier power maps and the
//! normalized 3-channel spectrogram images the classifier consumes.

use crate::siggen::Iq;
use rustfft::{Fft, FftPlanner};
use std::sync::{Arc, OnceLock};

/// FFT length, window length and hop are all equal: 40 non-overlapping
/// frames of 40 samples cover one 1600-sample realization.
pub const N_FFT: usize = 40;
pub const N_FRAMES: usize = 40;

/// Rows index frequency after an fft-shift (row 20 = 0 Hz, row 0 = -fs/2),
/// columns index time frames.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerMap {
    data: Vec<f64>,
}

impl PowerMap {
    pub fn at(&self, row: usize, frame: usize) -> f64 {
        self.data[row * N_FRAMES + frame]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// 3x40x40 image, channel-major, every pixel in [0, 1]. The three channels
/// are replicated copies of the normalized map.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    data: Vec<f32>,
}

pub const IMG_CHANNELS: usize = 3;
pub const IMG_SIZE: usize = 40;
pub const IMG_PIXELS: usize = IMG_CHANNELS * IMG_SIZE * IMG_SIZE;

impl Spectrogram {
    pub fn from_pixels(data: Vec<f32>) -> Self {
        assert_eq!(data.len(), IMG_PIXELS, "spectrogram needs 3x40x40 pixels");
        Self { data }
    }

    pub fn at(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[channel * IMG_SIZE * IMG_SIZE + row * IMG_SIZE + col]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

fn fft_plan() -> Arc<dyn Fft<f64>> {
    static PLAN: OnceLock<Arc<dyn Fft<f64>>> = OnceLock::new();
    PLAN.get_or_init(|| FftPlanner::new().plan_fft_forward(N_FFT)).clone()
}

/// Periodic Hann window of length [`N_FFT`].
fn hann() -> [f64; N_FFT] {
    let mut w = [0.0; N_FFT];
    for (i, v) in w.iter_mut().enumerate() {
        *v = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / N_FFT as f64).cos());
    }
    w
}

/// Hann-windowed power STFT with non-overlapping frames. The frequency axis
/// is fft-shifted so row [`N_FFT`]/2 carries 0 Hz.
pub fn stft_power(s: &[Iq]) -> PowerMap {
    assert_eq!(
        s.len(),
        N_FFT * N_FRAMES,
        "stft: expected {} samples, got {}",
        N_FFT * N_FRAMES,
        s.len()
    );
    let w = hann();
    let fft = fft_plan();
    let mut data = vec![0.0; N_FFT * N_FRAMES];
    let mut buf = [Iq::new(0.0, 0.0); N_FFT];
    for frame in 0..N_FRAMES {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = s[frame * N_FFT + i] * w[i];
        }
        fft.process(&mut buf);
        for (k, v) in buf.iter().enumerate() {
            let row = (k + N_FFT / 2) % N_FFT;
            data[row * N_FRAMES + frame] = v.norm_sqr();
        }
    }
    PowerMap { data }
}

/// Log-compress and min-max normalize a power map into a replicated
/// 3-channel image. A constant map (e.g. an all-zero signal) maps to 0.5.
pub fn to_image(pm: &PowerMap) -> Spectrogram {
    let logv: Vec<f64> = pm.data.iter().map(|&p| (p + 1e-12).log10()).collect();
    let min = logv.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = logv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let one_channel: Vec<f32> = if span < 1e-12 {
        vec![0.5; logv.len()]
    } else {
        logv.iter().map(|&v| ((v - min) / span) as f32).collect()
    };
    let mut data = Vec::with_capacity(IMG_PIXELS);
    for _ in 0..IMG_CHANNELS {
        data.extend_from_slice(&one_channel);
    }
    Spectrogram::from_pixels(data)
}

/// Full front end: realization samples to classifier input.
pub fn spectrogram_of(s: &[Iq]) -> Spectrogram {
    to_image(&stft_power(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siggen::{synth_fm, N_SAMPLES};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent route: double-loop DFT with the same window and shift.
    fn naive_stft(s: &[Iq]) -> Vec<f64> {
        let w = hann();
        let mut out = vec![0.0; N_FFT * N_FRAMES];
        for frame in 0..N_FRAMES {
            for k in 0..N_FFT {
                let mut acc = Iq::new(0.0, 0.0);
                for i in 0..N_FFT {
                    let ang = -2.0 * std::f64::consts::PI * (k * i) as f64 / N_FFT as f64;
                    acc += s[frame * N_FFT + i] * w[i] * Iq::new(ang.cos(), ang.sin());
                }
                let row = (k + N_FFT / 2) % N_FFT;
                out[row * N_FRAMES + frame] = acc.norm_sqr();
            }
        }
        out
    }

    #[test]
    fn stft_matches_naive_dft_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..5 {
            let s: Vec<Iq> = (0..N_SAMPLES)
                .map(|_| Iq::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let fast = stft_power(&s);
            let slow = naive_stft(&s);
            let scale = slow.iter().cloned().fold(0.0f64, f64::max);
            for (i, (&a, &b)) in fast.data().iter().zip(&slow).enumerate() {
                assert!(
                    (a - b).abs() <= 1e-6 * scale,
                    "entry {}: fft {:.6e} vs naive {:.6e} (scale {:.3e})",
                    i,
                    a,
                    b,
                    scale
                );
            }
        }
    }

    #[test]
    fn zero_signal_gives_zero_map_and_gray_image() {
        let s = vec![Iq::new(0.0, 0.0); N_SAMPLES];
        let pm = stft_power(&s);
        assert!(pm.data().iter().all(|&p| p <= 1e-20), "zero in, zero out");
        let img = to_image(&pm);
        assert!(
            img.data().iter().all(|&v| v == 0.5),
            "constant map must normalize to 0.5"
        );
    }

    #[test]
    fn dc_tone_dominates_row_twenty() {
        let s = synth_fm(|_| 0.0, 0.0, N_SAMPLES);
        let pm = stft_power(&s);
        for frame in 0..N_FRAMES {
            let best = (0..N_FFT)
                .max_by(|&a, &b| pm.at(a, frame).total_cmp(&pm.at(b, frame)))
                .unwrap();
            assert_eq!(best, 20, "frame {}: 0 Hz must land on row 20", frame);
        }
    }

    #[test]
    fn positive_tone_lands_above_center_row() {
        // +10 MHz at 2.5 MHz/bin -> row 24.
        let s = synth_fm(|_| 10e6, 0.3, N_SAMPLES);
        let pm = stft_power(&s);
        for frame in 0..N_FRAMES {
            let best = (0..N_FFT)
                .max_by(|&a, &b| pm.at(a, frame).total_cmp(&pm.at(b, frame)))
                .unwrap();
            assert_eq!(best, 24, "frame {}: +10 MHz must land on row 24", frame);
        }
    }

    #[test]
    fn image_is_normalized_with_replicated_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let s: Vec<Iq> = (0..N_SAMPLES)
            .map(|_| Iq::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let img = spectrogram_of(&s);
        let d = img.data();
        assert!(d.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let has_zero = d.iter().any(|&v| v == 0.0);
        let has_one = d.iter().any(|&v| v == 1.0);
        assert!(has_zero && has_one, "min-max must touch both endpoints");
        for c in 1..IMG_CHANNELS {
            for p in 0..IMG_SIZE * IMG_SIZE {
                assert_eq!(d[p], d[c * IMG_SIZE * IMG_SIZE + p], "channels replicate");
            }
        }
    }

    #[test]
    fn brighter_bins_stay_brighter() {
        // log + min-max are monotone, so pixel order must follow power order.
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let s: Vec<Iq> = (0..N_SAMPLES)
            .map(|_| Iq::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let pm = stft_power(&s);
        let img = to_image(&pm);
        for _ in 0..200 {
            let (r1, f1) = (rng.random_range(0..N_FFT), rng.random_range(0..N_FRAMES));
            let (r2, f2) = (rng.random_range(0..N_FFT), rng.random_range(0..N_FRAMES));
            if pm.at(r1, f1) > pm.at(r2, f2) {
                assert!(
                    img.at(0, r1, f1) >= img.at(0, r2, f2),
                    "power order violated: ({},{}) vs ({},{})",
                    r1,
                    f1,
                    r2,
                    f2
                );
            }
        }
    }
}
