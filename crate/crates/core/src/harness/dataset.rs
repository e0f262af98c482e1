//! Synthetic dataset generation and the on-disk layout.
//!
//! Every sample is an independent draw: jamming waveform through a Rician
//! line-of-sight channel, OFDM communication signal through a Rayleigh
//! multipath channel, mixed at a calibrated ISNR over a fixed comm SNR,
//! then rendered to a normalized spectrogram image. Files: `manifest.json`
//! plus three raw little-endian blobs (`images.f32`, `labels.u8`,
//! `isnr.f32`).

use super::config::DatasetConfig;
use super::derive_seed;
use super::parallel::parallel_map;
use crate::siggen::{
    apply_rayleigh_multipath, apply_rician, mix_at_isnr, sample_params, synth_jamming,
    synth_ofdm, JammingType, MultipathProfile, OfdmConfig, FS,
};
use crate::tfmap::{spectrogram_of, Spectrogram, IMG_PIXELS, N_FFT, N_FRAMES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Rician K-factor of the jamming path, dB.
pub const RICIAN_K_DB: f64 = 15.0;
pub const NUM_CLASSES: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dataset inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StftInfo {
    pub n_fft: usize,
    pub n_frames: usize,
    pub window: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub num_classes: usize,
    pub isnr_grid_db: Vec<f64>,
    pub samples_per_type_per_isnr: usize,
    pub split_train: u32,
    pub split_test: u32,
    pub fs_hz: f64,
    pub stft: StftInfo,
    pub seed: u64,
    pub comm_snr_db: f64,
    pub n_samples: usize,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<Spectrogram>,
    pub labels: Vec<u8>,
    pub isnr_db: Vec<f32>,
}

fn synth_sample(cfg: &DatasetConfig, index: usize) -> (Spectrogram, u8, f32) {
    let per = cfg.samples_per_type_per_isnr;
    let n_isnr = cfg.isnr_grid_db.len();
    let t = index / (n_isnr * per);
    let i = (index / per) % n_isnr;
    let jtype = JammingType::ALL[t];
    let isnr_db = cfg.isnr_grid_db[i];

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index as u64));
    let params = sample_params(jtype, &mut rng);
    let jam = synth_jamming(&params, &mut rng)
        .expect("sampled parameter ranges stay inside Nyquist");
    let jam = apply_rician(&jam, RICIAN_K_DB, &mut rng);
    let comm = synth_ofdm(&OfdmConfig::default(), &mut rng);
    let comm = apply_rayleigh_multipath(&comm, &MultipathProfile::default(), &mut rng);
    let (mixed, _info) = mix_at_isnr(&jam, &comm, isnr_db, cfg.comm_snr_db, &mut rng);
    (spectrogram_of(&mixed), jtype.label(), isnr_db as f32)
}

/// Synthesize the full dataset with a stratified 3:1 train/test split per
/// (type, ISNR) cell: within each cell every 4th realization is test.
pub fn generate(cfg: &DatasetConfig) -> Dataset {
    let n = cfg.total_samples();
    let per = cfg.samples_per_type_per_isnr;
    let samples = parallel_map(n, |i| synth_sample(cfg, i));

    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut isnr_db = Vec::with_capacity(n);
    for (img, label, isnr) in samples {
        images.push(img);
        labels.push(label);
        isnr_db.push(isnr);
    }

    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for s in 0..n {
        if s % per % 4 == 3 {
            test_idx.push(s);
        } else {
            train_idx.push(s);
        }
    }

    let manifest = DatasetManifest {
        version: 1,
        num_classes: NUM_CLASSES,
        isnr_grid_db: cfg.isnr_grid_db.clone(),
        samples_per_type_per_isnr: per,
        split_train: 3,
        split_test: 1,
        fs_hz: FS,
        stft: StftInfo {
            n_fft: N_FFT,
            n_frames: N_FRAMES,
            window: "hann".to_string(),
        },
        seed: cfg.seed,
        comm_snr_db: cfg.comm_snr_db,
        n_samples: n,
        train_idx,
        test_idx,
    };
    Dataset {
        manifest,
        images,
        labels,
        isnr_db,
    }
}

pub fn save(ds: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&ds.manifest)?,
    )?;

    let mut img_bytes = Vec::with_capacity(ds.images.len() * IMG_PIXELS * 4);
    for img in &ds.images {
        for v in img.data() {
            img_bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(dir.join("images.f32"), img_bytes)?;
    fs::write(dir.join("labels.u8"), &ds.labels)?;

    let mut isnr_bytes = Vec::with_capacity(ds.isnr_db.len() * 4);
    for v in &ds.isnr_db {
        isnr_bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join("isnr.f32"), isnr_bytes)?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Dataset, DatasetError> {
    let manifest: DatasetManifest =
        serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    let n = manifest.n_samples;

    let img_bytes = fs::read(dir.join("images.f32"))?;
    if img_bytes.len() != n * IMG_PIXELS * 4 {
        return Err(DatasetError::Inconsistent(format!(
            "images.f32 holds {} bytes, manifest expects {}",
            img_bytes.len(),
            n * IMG_PIXELS * 4
        )));
    }
    let mut images = Vec::with_capacity(n);
    for s in 0..n {
        let base = s * IMG_PIXELS * 4;
        let data: Vec<f32> = img_bytes[base..base + IMG_PIXELS * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        images.push(Spectrogram::from_pixels(data));
    }

    let labels = fs::read(dir.join("labels.u8"))?;
    if labels.len() != n {
        return Err(DatasetError::Inconsistent(format!(
            "labels.u8 holds {} entries, manifest expects {}",
            labels.len(),
            n
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= manifest.num_classes) {
        return Err(DatasetError::Inconsistent(format!(
            "label {} out of range for {} classes",
            bad, manifest.num_classes
        )));
    }

    let isnr_bytes = fs::read(dir.join("isnr.f32"))?;
    if isnr_bytes.len() != n * 4 {
        return Err(DatasetError::Inconsistent(format!(
            "isnr.f32 holds {} bytes, manifest expects {}",
            isnr_bytes.len(),
            n * 4
        )));
    }
    let isnr_db: Vec<f32> = isnr_bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();

    let split_ok = manifest.train_idx.len() + manifest.test_idx.len() == n;
    if !split_ok {
        return Err(DatasetError::Inconsistent(format!(
            "split covers {} of {} samples",
            manifest.train_idx.len() + manifest.test_idx.len(),
            n
        )));
    }
    Ok(Dataset {
        manifest,
        images,
        labels,
        isnr_db,
    })
}
