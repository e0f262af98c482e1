//! Wall-clock costs of the stages that dominate a run: signal synthesis,
//! spectrogram rendering, model inference, the FGSM step, and the masked
//! ensemble defense.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use jamident_core::diffnet::{patch_seq, DiffTransformer, ForwardSpec, Mode, ModelConfig};
use jamident_core::siggen::{
    apply_rayleigh_multipath, apply_rician, mix_at_isnr, sample_params, synth_jamming,
    synth_ofdm, JammingType, MultipathProfile, OfdmConfig,
};
use jamident_core::tensor::Graph;
use jamident_core::tfmap::{spectrogram_of, stft_power, Spectrogram, IMG_PIXELS};
use jamident_core::training::{ensemble_forward, MaskedConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(seed: u64) -> Spectrogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Spectrogram::from_pixels((0..IMG_PIXELS).map(|_| rng.random::<f32>()).collect())
}

fn bench_synthesis(c: &mut Criterion) {
    let mut group = c.benchmark_group("synthesis");
    group.sample_size(20);
    for jtype in [JammingType::Cw, JammingType::Lfm, JammingType::Bpsk] {
        group.bench_with_input(
            BenchmarkId::new("dataset_sample", jtype.name()),
            &jtype,
            |b, &jtype| {
                let mut rng = ChaCha8Rng::seed_from_u64(1);
                b.iter(|| {
                    let params = sample_params(jtype, &mut rng);
                    let jam = synth_jamming(&params, &mut rng).unwrap();
                    let jam = apply_rician(&jam, 15.0, &mut rng);
                    let comm = synth_ofdm(&OfdmConfig::default(), &mut rng);
                    let comm =
                        apply_rayleigh_multipath(&comm, &MultipathProfile::default(), &mut rng);
                    let (mixed, _) = mix_at_isnr(&jam, &comm, 0.0, 10.0, &mut rng);
                    spectrogram_of(&mixed)
                })
            },
        );
    }
    group.finish();
}

fn bench_stft(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = sample_params(JammingType::Lfm, &mut rng);
    let signal = synth_jamming(&params, &mut rng).unwrap();
    c.bench_function("stft_power_1600", |b| b.iter(|| stft_power(&signal)));
}

fn bench_model(c: &mut Criterion) {
    let model = DiffTransformer::<f32>::new(&ModelConfig::full(), 3);
    let img = random_image(4);

    let mut group = c.benchmark_group("model");
    group.sample_size(30);
    group.bench_function("forward_eval", |b| b.iter(|| model.logits_of(&img)));

    group.bench_function("fgsm_step", |b| {
        b.iter(|| jamident_core::attack::fgsm(&model, &img, 0, 8.0 / 255.0))
    });

    let mask_cfg = MaskedConfig::default();
    group.bench_function("masked_ensemble_predict", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let input = g.input(patch_seq::<f32>(&img));
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let out = ensemble_forward(&model, &mut g, input, &mask_cfg, Mode::Eval, &mut rng);
            g.value(out.mean_prob).data().to_vec()
        })
    });

    group.bench_function("forward_train_backward", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let out = model.forward(&mut g, patch_seq::<f32>(&img), &ForwardSpec::train());
            let loss = g.cross_entropy_logits(out.logits, 0);
            g.backward(loss).unwrap();
            g.grad(out.input).map(|t| t.data()[0])
        })
    });
    group.finish();
}

criterion_group!(benches, bench_synthesis, bench_stft, bench_model);
criterion_main!(benches);
