//! Jamming + communication + noise mixing at a calibrated ISNR.

use super::{mean_power, Iq};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Mixing report: calibrated scale and the empirical component powers it was
/// derived from.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct MixInfo {
    /// Amplitude applied to the jamming component.
    pub alpha: f64,
    pub jam_power: f64,
    pub comm_power: f64,
    pub noise_power: f64,
}

/// Mix `alpha * jam + comm + noise` where noise is complex AWGN sized for
/// `snr_db` against the measured comm power, and `alpha` is calibrated so
/// that the realized jamming-to-(signal+noise) ratio equals `isnr_db`
/// exactly on this realization:
///
///   alpha^2 P_jam = 10^(isnr/10) * (P_comm + P_noise)
///
/// with every power measured empirically on the mixed components.
pub fn mix_at_isnr<R: Rng>(
    jam: &[Iq],
    comm: &[Iq],
    isnr_db: f64,
    snr_db: f64,
    rng: &mut R,
) -> (Vec<Iq>, MixInfo) {
    assert_eq!(
        jam.len(),
        comm.len(),
        "mix: jam length {} vs comm length {}",
        jam.len(),
        comm.len()
    );
    let comm_power = mean_power(comm);
    let target_noise = comm_power / 10f64.powf(snr_db / 10.0);
    let sigma = (target_noise / 2.0).sqrt();
    let noise: Vec<Iq> = (0..comm.len())
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Iq::new(re * sigma, im * sigma)
        })
        .collect();
    let noise_power = mean_power(&noise);
    let jam_power = mean_power(jam);
    let alpha =
        (10f64.powf(isnr_db / 10.0) * (comm_power + noise_power) / jam_power).sqrt();

    let mixed = jam
        .iter()
        .zip(comm)
        .zip(&noise)
        .map(|((&j, &c), &n)| j * alpha + c + n)
        .collect();
    (
        mixed,
        MixInfo {
            alpha,
            jam_power,
            comm_power,
            noise_power,
        },
    )
}
