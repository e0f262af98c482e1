//! The eight jamming waveform families and their parameter sampling.

use super::{
    filter_same, lowpass_fir, normalize_power, synth_fm, Iq, SignalError, FS, N_SAMPLES,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Classifier label order is part of the dataset contract: labels 0..7 map to
/// CW, LFM, AM, TFM, BPSK, NAM, QFM, SFM.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JammingType {
    Cw,
    Lfm,
    Am,
    Tfm,
    Bpsk,
    Nam,
    Qfm,
    Sfm,
}

impl JammingType {
    pub const ALL: [JammingType; 8] = [
        JammingType::Cw,
        JammingType::Lfm,
        JammingType::Am,
        JammingType::Tfm,
        JammingType::Bpsk,
        JammingType::Nam,
        JammingType::Qfm,
        JammingType::Sfm,
    ];

    pub fn label(self) -> u8 {
        Self::ALL.iter().position(|&t| t == self).unwrap() as u8
    }

    pub fn from_label(label: u8) -> Option<JammingType> {
        Self::ALL.get(label as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            JammingType::Cw => "CW",
            JammingType::Lfm => "LFM",
            JammingType::Am => "AM",
            JammingType::Tfm => "TFM",
            JammingType::Bpsk => "BPSK",
            JammingType::Nam => "NAM",
            JammingType::Qfm => "QFM",
            JammingType::Sfm => "SFM",
        }
    }

    fn is_wideband_fm(self) -> bool {
        matches!(
            self,
            JammingType::Lfm | JammingType::Tfm | JammingType::Qfm | JammingType::Sfm
        )
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JammingParams {
    pub jtype: JammingType,
    /// Center frequency f_c, baseband Hz.
    pub carrier_hz: f64,
    /// Swept/occupied bandwidth B; zero for CW.
    pub bandwidth_hz: f64,
    /// Modulation repetition period for the FM family; zero when unused.
    pub period_s: f64,
    /// Initial carrier phase.
    pub phase_rad: f64,
}

/// Draw waveform parameters from the per-type ranges: carrier uniform in
/// [-25, 25] MHz for every type; bandwidth [10, 50] MHz for the FM family and
/// [1.5, 5] MHz for AM/NAM/BPSK; repetition period [0.01, 0.1] ms for the FM
/// family; phase uniform in [0, 2pi).
pub fn sample_params<R: Rng>(jtype: JammingType, rng: &mut R) -> JammingParams {
    let carrier_hz = rng.random_range(-25e6..25e6);
    let bandwidth_hz = match jtype {
        JammingType::Cw => 0.0,
        t if t.is_wideband_fm() => rng.random_range(10e6..50e6),
        _ => rng.random_range(1.5e6..5e6),
    };
    let period_s = if jtype.is_wideband_fm() {
        rng.random_range(0.01e-3..0.1e-3)
    } else {
        0.0
    };
    let phase_rad = rng.random_range(0.0..2.0 * std::f64::consts::PI);
    JammingParams {
        jtype,
        carrier_hz,
        bandwidth_hz,
        period_s,
        phase_rad,
    }
}

/// Synthesize one unit-power jamming realization. `rng` feeds the random
/// content of the BPSK chip stream and the NAM noise envelope; the other
/// types are fully determined by their parameters.
pub fn synth_jamming<R: Rng>(params: &JammingParams, rng: &mut R) -> Result<Vec<Iq>, SignalError> {
    let p = params;
    if p.carrier_hz.abs() + p.bandwidth_hz / 2.0 > FS / 2.0 {
        return Err(SignalError::BeyondNyquist {
            carrier_hz: p.carrier_hz,
            bandwidth_hz: p.bandwidth_hz,
            nyquist_hz: FS / 2.0,
        });
    }
    if p.jtype.is_wideband_fm() && p.period_s <= 0.0 {
        return Err(SignalError::NonPositivePeriod {
            period_s: p.period_s,
        });
    }

    let n = N_SAMPLES;
    let fc = p.carrier_hz;
    let bw = p.bandwidth_hz;
    let mut s = match p.jtype {
        JammingType::Cw => synth_fm(|_| fc, p.phase_rad, n),
        JammingType::Lfm => {
            // Sawtooth sweep: f rises from fc - B/2 to fc + B/2 each period.
            let t0 = p.period_s;
            synth_fm(
                |t| fc + bw * ((t / t0).fract() - 0.5),
                p.phase_rad,
                n,
            )
        }
        JammingType::Tfm => {
            // Triangular sweep: up then down within each period.
            let t0 = p.period_s;
            synth_fm(
                |t| {
                    let u = (t / t0).fract();
                    let tri = if u < 0.5 { 2.0 * u } else { 2.0 * (1.0 - u) };
                    fc + bw * (tri - 0.5)
                },
                p.phase_rad,
                n,
            )
        }
        JammingType::Qfm => {
            // Quadratic sweep: f = fc + B * (u^2 - 1/2), u in [0, 1).
            let t0 = p.period_s;
            synth_fm(
                |t| {
                    let u = (t / t0).fract();
                    fc + bw * (u * u - 0.5)
                },
                p.phase_rad,
                n,
            )
        }
        JammingType::Sfm => {
            // Closed form: the modulation index B/(2 fm) keeps the
            // instantaneous frequency inside fc +- B/2.
            let fm = 1.0 / p.period_s;
            let beta = bw / (2.0 * fm);
            (0..n)
                .map(|i| {
                    let t = i as f64 / FS;
                    let theta = 2.0 * std::f64::consts::PI * fc * t
                        + beta * (2.0 * std::f64::consts::PI * fm * t).sin()
                        + p.phase_rad;
                    Iq::new(theta.cos(), theta.sin())
                })
                .collect()
        }
        JammingType::Am => {
            // Single-tone AM with depth 0.5; the two sidebands sit at
            // fc +- B/2, so the occupied width equals the drawn bandwidth.
            let fm = bw / 2.0;
            let carrier = synth_fm(|_| fc, p.phase_rad, n);
            carrier
                .into_iter()
                .enumerate()
                .map(|(i, c)| {
                    let t = i as f64 / FS;
                    c * (1.0 + 0.5 * (2.0 * std::f64::consts::PI * fm * t).cos())
                })
                .collect()
        }
        JammingType::Nam => {
            // Noise-AM: Gaussian envelope band-limited to B/2 (RMS 0.5) on a
            // carrier, occupying fc +- B/2. The envelope is drawn directly on
            // the in-band DFT bins, which is an exact low-pass of white noise.
            let mut lp = band_limited_noise(bw / 2.0, n, rng);
            let rms = (lp.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            for v in lp.iter_mut() {
                *v *= 0.5 / rms;
            }
            let carrier = synth_fm(|_| fc, p.phase_rad, n);
            carrier
                .into_iter()
                .zip(lp)
                .map(|(c, e)| c * (1.0 + e))
                .collect()
        }
        JammingType::Bpsk => {
            // Random +-1 chips at chip rate B, pulse-shaped by a low-pass at
            // B/2 so the spectrum stays inside the declared bandwidth. The
            // tap count keeps the transition band near 0.5 MHz.
            let chip_rate = bw;
            let n_chips = (n as f64 * chip_rate / FS).ceil() as usize + 1;
            let chips: Vec<f64> = (0..n_chips)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let stream: Vec<f64> = (0..n)
                .map(|i| chips[(i as f64 * chip_rate / FS) as usize])
                .collect();
            let h = lowpass_fir(bw / 2.0, 661);
            let shaped = filter_same(&stream, &h);
            let carrier = synth_fm(|_| fc, p.phase_rad, n);
            carrier
                .into_iter()
                .zip(shaped)
                .map(|(c, m)| c * m)
                .collect()
        }
    };

    normalize_power(&mut s);
    Ok(s)
}

/// Real Gaussian noise whose spectrum is confined to |f| <= cutoff: complex
/// Gaussian weights on every in-band DFT bin, real part taken.
fn band_limited_noise<R: Rng>(cutoff_hz: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let normal = rand_distr::StandardNormal;
    let mut out = vec![0.0; n];
    for k in 0..n {
        let f = if k <= n / 2 {
            k as f64 * FS / n as f64
        } else {
            (k as f64 - n as f64) * FS / n as f64
        };
        if f.abs() > cutoff_hz {
            continue;
        }
        let re: f64 = rand_distr::Distribution::sample(&normal, rng);
        let im: f64 = rand_distr::Distribution::sample(&normal, rng);
        let g = Iq::new(re, im);
        let rot = Iq::new(0.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64).exp();
        let mut phasor = g;
        for o in out.iter_mut() {
            *o += phasor.re;
            phasor *= rot;
        }
    }
    out
}
