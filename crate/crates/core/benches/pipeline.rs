// Sequential vs data-parallel execution of the two heavy kernels: one EM
// iteration and one full denoising run. With the `parallel` feature both a
// single-worker pool and the global pool are measured; build with
// `--no-default-features` to time the rayon-free fallback.

use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, Criterion};
use ggmm_epll::epll::epll_denoise;
use ggmm_epll::io::patches_from_dir;
use ggmm_epll::mixture::{em_step, initial_model};
use ggmm_epll::{DenoiseConfig, DiscrepancyLut, GgmmModel, ImageBuffer, Mode};
use nalgebra::DMatrix;

fn data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn setup() -> (DMatrix<f64>, GgmmModel, ImageBuffer) {
    let z = patches_from_dir(data().join("train"), 8, 1, Some(20_000)).unwrap();
    let model = initial_model(&z, 5, Mode::Ggmm, 1).unwrap();
    let (model, _) = em_step(&model, &z).unwrap();
    let img = ImageBuffer::load_pgm(data().join("test/camera.pgm"))
        .unwrap()
        .crop(64, 32, 128, 128)
        .unwrap()
        .with_noise(20.0, 1);
    (z, model, img)
}

#[cfg(feature = "parallel")]
fn variants() -> Vec<(String, Option<rayon::ThreadPool>)> {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    vec![
        ("sequential".into(), Some(single)),
        (format!("parallel_{}", rayon::current_num_threads()), None),
    ]
}

#[cfg(not(feature = "parallel"))]
fn variants() -> Vec<(String, Option<()>)> {
    vec![("fallback".into(), None)]
}

#[cfg(feature = "parallel")]
fn run<T>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run<T>(_: &Option<()>, f: impl FnOnce() -> T) -> T {
    f()
}

fn bench(c: &mut Criterion) {
    let (z, model, img) = setup();
    let lut = DiscrepancyLut::bundled();
    let cfg = DenoiseConfig::new(20.0);

    let mut g = c.benchmark_group("em_step_20k_k5");
    g.sample_size(10);
    for (name, pool) in variants() {
        g.bench_function(&name, |b| b.iter(|| run(&pool, || em_step(black_box(&model), black_box(&z)).unwrap())));
    }
    g.finish();

    let mut g = c.benchmark_group("denoise_128");
    g.sample_size(10);
    for (name, pool) in variants() {
        g.bench_function(&name, |b| {
            b.iter(|| run(&pool, || epll_denoise(black_box(&img), &model, lut, &cfg).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
