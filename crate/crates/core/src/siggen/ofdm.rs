//! OFDM communication signal occupying the dataset's comm band.

use super::{normalize_power, Iq, FS, N_SAMPLES};
use rand::Rng;

/// LTE-like numerology: the occupied width is
/// `subcarriers * spacing` = 18 MHz centered at 0 Hz by default.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct OfdmConfig {
    pub subcarrier_spacing_hz: f64,
    pub active_subcarriers: usize,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            subcarrier_spacing_hz: 15e3,
            active_subcarriers: 1200,
        }
    }
}

impl OfdmConfig {
    pub fn occupied_bandwidth_hz(&self) -> f64 {
        self.subcarrier_spacing_hz * self.active_subcarriers as f64
    }
}

/// One unit-power OFDM realization: random QPSK symbols on
/// `active_subcarriers` tones straddling 0 Hz (no DC tone: tone k sits at
/// `(k - n/2 + 1/2) * spacing`). One OFDM symbol lasts 67 us, so the 16 us
/// window sees a single block of symbols.
pub fn synth_ofdm<R: Rng>(cfg: &OfdmConfig, rng: &mut R) -> Vec<Iq> {
    let n = N_SAMPLES;
    let k_half = cfg.active_subcarriers as f64 / 2.0;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = vec![Iq::new(0.0, 0.0); n];
    for k in 0..cfg.active_subcarriers {
        let re = if rng.random::<bool>() { inv_sqrt2 } else { -inv_sqrt2 };
        let im = if rng.random::<bool>() { inv_sqrt2 } else { -inv_sqrt2 };
        let f = (k as f64 - k_half + 0.5) * cfg.subcarrier_spacing_hz;
        let rot = Iq::new(0.0, 2.0 * std::f64::consts::PI * f / FS).exp();
        let mut phasor = Iq::new(re, im);
        for o in out.iter_mut() {
            *o += phasor;
            phasor *= rot;
        }
    }
    normalize_power(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::super::{mean_power, specmeas};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ofdm_is_unit_power_and_occupies_18_mhz() {
        let cfg = OfdmConfig::default();
        assert_eq!(cfg.occupied_bandwidth_hz(), 18e6);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = synth_ofdm(&cfg, &mut rng);
        assert!((mean_power(&s) - 1.0).abs() <= 1e-6);

        let margin = 2.0 * FS / N_SAMPLES as f64;
        let frac = specmeas::band_energy_fraction(&s, 0.0, 9e6 + margin);
        assert!(
            frac > 0.95,
            "only {:.4} of OFDM energy inside +-9 MHz",
            frac
        );
    }

    #[test]
    fn ofdm_is_deterministic_per_seed() {
        let cfg = OfdmConfig::default();
        let a = synth_ofdm(&cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let b = synth_ofdm(&cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let c = synth_ofdm(&cfg, &mut ChaCha8Rng::seed_from_u64(6));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
