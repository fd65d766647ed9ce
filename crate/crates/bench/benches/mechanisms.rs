use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ctxmdp::blanket::{ci_test, CiSample};
use ctxmdp::mechanisms::sample_output;
use ctxmdp::roadnet::shortest_path_tree;
use ctxmdp::sweep::{Experiment, Mechanism, SweepConfig};
use ctxmdp::synth::{grid_graph, synthesize, SynthConfig};

fn data() -> ctxmdp::synth::Synthetic {
    synthesize(&SynthConfig {
        rows: 3,
        cols: 3,
        trajectories: 200,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn dijkstra(c: &mut Criterion) {
    let g = grid_graph(20, 20, 0.2, (41.88, 12.48)).unwrap();
    let root = g.node_ids()[0];
    c.bench_function("shortest_path_tree_20x20", |b| {
        b.iter(|| shortest_path_tree(&g, black_box(root)).unwrap())
    });
}

fn mechanisms(c: &mut Criterion) {
    let d = data();
    let cfg = SweepConfig {
        eta: 1.2,
        epsilons: vec![1.0],
        ..SweepConfig::default()
    };
    let exp = Experiment::prepare(&d.graph, &d.log, &cfg).unwrap();
    let mut group = c.benchmark_group("build_and_solve");
    group.sample_size(10);
    for m in [Mechanism::Lp, Mechanism::ExpMech, Mechanism::LpMarkov1] {
        group.bench_function(m.slug(), |b| b.iter(|| exp.build(m, 1.0).unwrap()));
    }
    group.finish();

    let q = exp.build(Mechanism::Lp, 1.0).unwrap().matrix;
    let key = q.keys()[0].clone();
    let mut seed = 0u64;
    c.bench_function("sample_output", |b| {
        b.iter(|| {
            seed += 1;
            sample_output(&q, &key, seed).unwrap()
        })
    });
}

fn ci(c: &mut Criterion) {
    let d = data();
    let sample = CiSample::from_sequences(&d.sequences, 2);
    c.bench_function("ci_test_gamma2", |b| {
        b.iter(|| ci_test(&sample, 2, black_box(&[1]), 7).unwrap())
    });
}

criterion_group!(benches, dijkstra, mechanisms, ci);
criterion_main!(benches);
