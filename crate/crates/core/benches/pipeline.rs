//! Data-parallel hot paths on the default rayon pool versus a one-thread
//! pool. Build with `--no-default-features` to time the sequential fallback
//! itself; both variants then coincide.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;

use fdchange::config::Config;
use fdchange::eval::{synth_dataset, SynthSpec};
use fdchange::features::{extract_bow_frozen, Vocabulary};
use fdchange::imaging::{Image, ImageReader};
use fdchange::pairwise::pc_scores;
use fdchange::pipeline::{build, write_dataset, Artifacts, Channel};
use tempfile::TempDir;

struct Fixture {
    _dirs: (TempDir, TempDir),
    arts: Artifacts,
    queries: Vec<Image>,
    map0: Image,
}

fn fixture() -> Fixture {
    let spec = SynthSpec {
        queries: 8,
        ..SynthSpec::default()
    };
    let ds = synth_dataset(&spec, 7).unwrap();
    let (data, out) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    write_dataset(&ds, data.path()).unwrap();
    build(&data.path().join("map"), out.path(), &Config::default()).unwrap();
    let arts = Artifacts::open(out.path()).unwrap();
    Fixture {
        _dirs: (data, out),
        arts,
        queries: ds.queries.iter().map(|q| q.image.clone()).collect(),
        map0: ds.map[0].clone(),
    }
}

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("parallel", ThreadPoolBuilder::new().build().unwrap()),
        ("sequential", ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
    ]
}

fn benches(c: &mut Criterion) {
    let f = fixture();
    let reader = ImageReader::new();
    let params = f.arts.config.feature_params();
    let vocab: &Vocabulary = &f.arts.vocab;

    let mut g = c.benchmark_group("fd_detect");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| f.arts.detect(&f.queries[0], &[], None, &[Channel::Fd], &reader).unwrap()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("quantize");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| extract_bow_frozen(&f.queries[1], 0, vocab, &params).unwrap()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("pc_scores");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| pc_scores(&f.queries[2], &f.map0, &params).unwrap()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("all_channels");
    g.sample_size(10);
    let all = [Channel::Fd, Channel::Ad, Channel::Pc];
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| {
                    for q in &f.queries[..4] {
                        f.arts.detect(q, &[], None, &all, &reader).unwrap();
                    }
                })
            })
        });
    }
    g.finish();
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
