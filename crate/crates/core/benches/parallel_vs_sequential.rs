//! Batch sampling, posterior tabulation and oracle scoring on the rayon path
//! (`workers = 0`) against the sequential path (`workers = 1`). Both produce
//! identical outputs; only wall-clock differs. Build with
//! `--no-default-features` to compare against a binary without rayon at all.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rgd_core::benchmark::{generate_dataset, Task};
use rgd_core::diffusion::{ScoreNet, VpSchedule};
use rgd_core::likelihood::{Divergence, FlowOdeConfig};
use rgd_core::parallel;
use rgd_core::proxy::ProxyModel;
use rgd_core::refinement::posterior_records;
use rgd_core::rng;
use rgd_core::sampler::{sample_batch, SamplerConfig, Strategy};

const MODES: [(&str, usize); 2] = [("sequential", 1), ("parallel", 0)];

fn sampling(c: &mut Criterion) {
    let s = VpSchedule::default();
    let score = ScoreNet::new(8, &[64, 64], 8, s, (0.0, 1.0), 1);
    let proxy = ProxyModel::new(8, &[64, 64], 2);
    let cfg = SamplerConfig {
        steps: 50,
        ..SamplerConfig::new(0.5, Strategy::Rgd)
    };
    let mut g = c.benchmark_group("sample_batch_32_chains");
    g.sample_size(10);
    for (name, workers) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &workers, |b, &w| {
            b.iter(|| sample_batch(&score, &s, &proxy, &cfg, 32, 7, w).unwrap())
        });
    }
    g.finish();
}

fn posteriors(c: &mut Criterion) {
    let s = VpSchedule::default();
    let score = ScoreNet::new(8, &[64, 64], 8, s, (0.0, 1.0), 3);
    let mut r = rng::rng_from(4);
    let designs: Vec<Vec<f64>> = (0..16).map(|_| rng::normal_vec(&mut r, 8)).collect();
    let ode = FlowOdeConfig {
        ode_steps: 20,
        divergence: Divergence::Exact,
    };
    let mut g = c.benchmark_group("posterior_records_16");
    g.sample_size(10);
    for (name, workers) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &workers, |b, &w| {
            b.iter(|| posterior_records(&score, &s, &designs, &ode, w).unwrap())
        });
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let task = Task::rosenbrock(60);
    let ds = generate_dataset(&task, 2000, 1.0, 2000, 5).unwrap();
    let designs: Vec<Vec<f64>> = (0..ds.len()).map(|i| ds.row(i).to_vec()).collect();
    let mut g = c.benchmark_group("oracle_2000x60");
    for (name, workers) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &workers, |b, &w| {
            b.iter(|| parallel::map_slice(&designs, w, |x| task.oracle(x)))
        });
    }
    g.finish();
}

criterion_group!(benches, sampling, posteriors, oracle);
criterion_main!(benches);
