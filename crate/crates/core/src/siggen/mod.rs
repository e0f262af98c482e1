//! Complex-baseband synthesis of jamming and communication signals plus the
//! fading/mixing chain that produces each dataset realization.
//!
//! All signals are sampled at [`FS`] Hz for [`N_SAMPLES`] samples (16 us) and
//! normalized to unit mean power before channel effects are applied.

mod channel;
mod jamming;
mod mix;
mod ofdm;

pub use channel::{apply_rayleigh_multipath, apply_rician, rician_gain, MultipathProfile};
pub use jamming::{sample_params, synth_jamming, JammingParams, JammingType};
pub use mix::{mix_at_isnr, MixInfo};
pub use ofdm::{synth_ofdm, OfdmConfig};

use num_complex::Complex;
use thiserror::Error;

/// Complex baseband sample.
pub type Iq = Complex<f64>;

/// Sample rate in Hz.
pub const FS: f64 = 100e6;

/// Samples per realization (16 us at [`FS`]).
pub const N_SAMPLES: usize = 1600;

#[derive(Error, Debug)]
pub enum SignalError {
    #[error("carrier {carrier_hz:.3e} Hz with bandwidth {bandwidth_hz:.3e} Hz extends past Nyquist {nyquist_hz:.3e} Hz")]
    BeyondNyquist {
        carrier_hz: f64,
        bandwidth_hz: f64,
        nyquist_hz: f64,
    },
    #[error("period {period_s:.3e} s must be positive")]
    NonPositivePeriod { period_s: f64 },
}

pub fn mean_power(s: &[Iq]) -> f64 {
    s.iter().map(|v| v.norm_sqr()).sum::<f64>() / s.len() as f64
}

/// Scale to exactly unit mean power.
pub fn normalize_power(s: &mut [Iq]) {
    let p = mean_power(s);
    assert!(p > 0.0, "cannot normalize an all-zero signal");
    let scale = 1.0 / p.sqrt();
    for v in s.iter_mut() {
        *v *= scale;
    }
}

/// Phase-accumulating oscillator: integrates an instantaneous-frequency
/// profile `f(t)` into `exp(j * theta[n])` with `theta[0] = phase0`.
pub(crate) fn synth_fm(
    inst_freq_hz: impl Fn(f64) -> f64,
    phase0_rad: f64,
    n: usize,
) -> Vec<Iq> {
    let dt = 1.0 / FS;
    let mut theta = phase0_rad;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(Iq::new(theta.cos(), theta.sin()));
        let t = i as f64 * dt;
        theta += 2.0 * std::f64::consts::PI * inst_freq_hz(t) * dt;
    }
    out
}

/// Windowed-sinc FIR low-pass, Hamming window, unit DC gain.
pub(crate) fn lowpass_fir(cutoff_hz: f64, taps: usize) -> Vec<f64> {
    assert!(taps % 2 == 1, "lowpass_fir: odd tap count required");
    let fc = cutoff_hz / FS;
    let mid = (taps / 2) as f64;
    let mut h = Vec::with_capacity(taps);
    for k in 0..taps {
        let x = k as f64 - mid;
        let sinc = if x == 0.0 {
            2.0 * fc
        } else {
            (2.0 * std::f64::consts::PI * fc * x).sin() / (std::f64::consts::PI * x)
        };
        let w = 0.54 - 0.46 * (2.0 * std::f64::consts::PI * k as f64 / (taps - 1) as f64).cos();
        h.push(sinc * w);
    }
    let dc: f64 = h.iter().sum();
    for v in h.iter_mut() {
        *v /= dc;
    }
    h
}

/// Same-length linear convolution centered at the filter group delay.
pub(crate) fn filter_same(x: &[f64], h: &[f64]) -> Vec<f64> {
    let delay = h.len() / 2;
    let mut out = vec![0.0; x.len()];
    for (n, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &hk) in h.iter().enumerate() {
            let idx = n as isize + delay as isize - k as isize;
            if idx >= 0 && (idx as usize) < x.len() {
                acc += hk * x[idx as usize];
            }
        }
        *o = acc;
    }
    out
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowpass_fir_has_unit_dc_gain_and_rejects_stopband() {
        let h = lowpass_fir(5e6, 129);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Probe the response far in the stopband (3x cutoff).
        let f = 15e6;
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, &hk) in h.iter().enumerate() {
            let ang = -2.0 * std::f64::consts::PI * f / FS * k as f64;
            re += hk * ang.cos();
            im += hk * ang.sin();
        }
        let mag = (re * re + im * im).sqrt();
        assert!(mag < 0.01, "stopband leakage {:.3e} at 3x cutoff", mag);
    }

    #[test]
    fn synth_fm_tracks_requested_frequency() {
        let s = synth_fm(|_| 10e6, 0.3, 256);
        let est = specmeas::inst_freq_hz(&s);
        for &f in &est {
            assert!((f - 10e6).abs() < 1.0, "inst freq {} far from 10 MHz", f);
        }
    }
}
