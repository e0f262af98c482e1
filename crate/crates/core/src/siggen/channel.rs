//! Fading channels: single-path Rician for the jammer, multipath Rayleigh
//! for the communication signal. Both use block fading (one gain draw per
//! realization).

use super::{Iq, FS};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// One complex Rician gain with E[|g|^2] = 1: deterministic line-of-sight
/// component of power K/(K+1) plus circular Gaussian scatter of power
/// 1/(K+1), K given in dB.
pub fn rician_gain<R: Rng>(k_factor_db: f64, rng: &mut R) -> Iq {
    let k = 10f64.powf(k_factor_db / 10.0);
    let los = (k / (k + 1.0)).sqrt();
    let sigma = (1.0 / (2.0 * (k + 1.0))).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Iq::new(los + sigma * re, sigma * im)
}

/// Apply a single-path Rician fade to the whole realization.
pub fn apply_rician<R: Rng>(s: &[Iq], k_factor_db: f64, rng: &mut R) -> Vec<Iq> {
    let g = rician_gain(k_factor_db, rng);
    s.iter().map(|&v| v * g).collect()
}

/// Tapped-delay-line power-delay profile. Tap powers are normalized so the
/// expected channel power is exactly 1.
#[derive(Clone, Debug, PartialEq)]
pub struct MultipathProfile {
    pub delays_s: Vec<f64>,
    pub gains_db: Vec<f64>,
}

impl Default for MultipathProfile {
    fn default() -> Self {
        Self {
            delays_s: (0..6).map(|l| l as f64 * 1e-7).collect(),
            gains_db: vec![0.0, -4.0, -8.0, -12.0, -16.0, -20.0],
        }
    }
}

impl MultipathProfile {
    /// Tap delays rounded to whole samples at the synthesis rate.
    pub fn delay_samples(&self) -> Vec<usize> {
        self.delays_s
            .iter()
            .map(|&d| (d * FS).round() as usize)
            .collect()
    }

    /// Linear tap powers normalized to sum to 1.
    pub fn normalized_powers(&self) -> Vec<f64> {
        let p: Vec<f64> = self.gains_db.iter().map(|&g| 10f64.powf(g / 10.0)).collect();
        let total: f64 = p.iter().sum();
        p.into_iter().map(|v| v / total).collect()
    }
}

/// Rayleigh multipath: independent circular Gaussian taps drawn once per
/// call, convolved with the input at the profile's sample delays.
pub fn apply_rayleigh_multipath<R: Rng>(
    s: &[Iq],
    profile: &MultipathProfile,
    rng: &mut R,
) -> Vec<Iq> {
    assert_eq!(
        profile.delays_s.len(),
        profile.gains_db.len(),
        "profile: {} delays vs {} gains",
        profile.delays_s.len(),
        profile.gains_db.len()
    );
    let delays = profile.delay_samples();
    let powers = profile.normalized_powers();
    let taps: Vec<Iq> = powers
        .iter()
        .map(|&p| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Iq::new(re, im) * (p / 2.0).sqrt()
        })
        .collect();

    let mut out = vec![Iq::new(0.0, 0.0); s.len()];
    for (tap, &d) in taps.iter().zip(&delays) {
        for n in d..s.len() {
            out[n] += *tap * s[n - d];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rician_mean_power_is_unity() {
        // Monte Carlo over 1e5 draws at K = 15 dB.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| rician_gain(15.0, &mut rng).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!(
            (mean - 1.0).abs() <= 0.02,
            "E[|g|^2] = {:.4}, expected 1 +- 0.02",
            mean
        );
    }

    #[test]
    fn rician_huge_k_degenerates_to_unit_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let s = vec![Iq::new(0.6, -0.8); 4];
        let out = apply_rician(&s, 300.0, &mut rng);
        for (o, i) in out.iter().zip(&s) {
            assert!(
                ((o / i).norm() - 1.0).abs() <= 1e-6,
                "K -> inf must leave |gain| = 1, got {}",
                (o / i).norm()
            );
        }
    }

    #[test]
    fn default_profile_maps_to_ten_sample_strides() {
        let p = MultipathProfile::default();
        assert_eq!(p.delay_samples(), vec![0, 10, 20, 30, 40, 50]);
        let total: f64 = p.normalized_powers().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_tap_rayleigh_power_is_unity() {
        // Degenerate one-tap profile: output is a * s with E[|a|^2] = 1.
        let profile = MultipathProfile {
            delays_s: vec![0.0],
            gains_db: vec![0.0],
        };
        let s = vec![Iq::new(1.0, 0.0); 1];
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| apply_rayleigh_multipath(&s, &profile, &mut rng)[0].norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!(
            (mean - 1.0).abs() <= 0.02,
            "single-tap E[|a|^2] = {:.4}, expected 1 +- 0.02",
            mean
        );
    }

    #[test]
    fn impulse_reveals_tap_delays() {
        let profile = MultipathProfile::default();
        let mut s = vec![Iq::new(0.0, 0.0); 64];
        s[0] = Iq::new(1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let out = apply_rayleigh_multipath(&s, &profile, &mut rng);
        for (n, v) in out.iter().enumerate() {
            let is_tap = n % 10 == 0 && n <= 50;
            assert_eq!(
                v.norm_sqr() > 0.0,
                is_tap,
                "sample {} should{} carry a tap",
                n,
                if is_tap { "" } else { " not" }
            );
        }
    }

    #[test]
    fn block_fading_draws_once_per_call() {
        let profile = MultipathProfile {
            delays_s: vec![0.0],
            gains_db: vec![0.0],
        };
        let s = vec![Iq::new(1.0, 0.0); 8];
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let out = apply_rayleigh_multipath(&s, &profile, &mut rng);
        for v in &out[1..] {
            assert_eq!(*v, out[0], "one gain draw must apply to every sample");
        }
    }
}
