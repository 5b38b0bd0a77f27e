//! Parallel against sequential trial execution on the same workload.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use irs_link::estimation::{grid_search_with, EstimationProblem};
use irs_link::exec::Execution;
use irs_link::harness::experiment::run_point;
use irs_link::harness::{Scenario, SimConfig};
use irs_link::protocol::random_refraction_matrix;
use irs_link::rng::{complex_normal, seeded};
use irs_link::CVector;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("frames");
    group.sample_size(10);
    for scenario in [Scenario::Proposed, Scenario::Ccce] {
        let cfg = SimConfig { scenario, n_trials: 32, ..SimConfig::default() };
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, scenario.tag()), &cfg, |b, cfg| {
                b.iter(|| run_point(cfg, 0, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn grid(c: &mut Criterion) {
    let mut rng = seeded(1);
    let (m_x, m_y, tau) = (10, 10, 80);
    let v = random_refraction_matrix(tau, m_x * m_y, 1.0, &mut rng);
    let y = CVector::from_fn(tau, |_, _| complex_normal(&mut rng, 1.0));
    let prob = EstimationProblem::new(y, v, m_x, m_y).unwrap();
    let mut group = c.benchmark_group("grid_search_40x40");
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| grid_search_with(&prob, 40, 40, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, trials, grid);
criterion_main!(benches);
