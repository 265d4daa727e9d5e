use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use expsearch_bench::{embeddings, pool, populated_store, search_into, EMBEDDING_DIMENSION};
use expsearch_core::embedding::HashedEmbedding;
use expsearch_core::search::{sample_parent, ParentCandidate};
use expsearch_core::simbench::run_bandit;
use expsearch_core::transfer::family_transfer;
use expsearch_core::{
    route, BiasSchedule, Descriptor, MemoryStore, ModelFamilyId, RegretSpec, RewardModel,
    SearchConfig, SolutionNode, TransferConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn search_loop(c: &mut Criterion) {
    let task = pool(1, 6, 3).remove(0);
    c.bench_function("search/budget_20_empty_store", |b| {
        b.iter_batched(MemoryStore::new, |mut s| search_into(&mut s, &task, 1), BatchSize::SmallInput)
    });
    let (store, _) = populated_store(16, 7);
    c.bench_function("search/budget_20_store_16_tasks", |b| {
        b.iter_batched(|| store.clone(), |mut s| search_into(&mut s, &task, 1), BatchSize::LargeInput)
    });
}

fn transfer(c: &mut Criterion) {
    let mut group = c.benchmark_group("family_transfer");
    for n in [4usize, 16, 32] {
        let (store, tasks) = populated_store(n, 11);
        let target = pool(1, 6, 99).remove(0);
        let table = embeddings(&store, &target);
        let family = tasks[0].families()[0].clone();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| family_transfer(&store, &family, &target.spec, &table, &TransferConfig::default()))
        });
    }
    group.finish();
}

fn routing(c: &mut Criterion) {
    let (store, _) = populated_store(16, 5);
    let mut target = pool(1, 6, 77).remove(0).spec;
    target.budget = 0;
    let provider = HashedEmbedding::new(EMBEDDING_DIMENSION).unwrap();
    c.bench_function("route/store_16_tasks", |b| b.iter(|| route(black_box(&target), &store, &provider, 1.0)));
}

fn sampler(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let nodes: Vec<SolutionNode> = (0..64)
        .map(|i| {
            let mut n = SolutionNode::root(format!("t/n{i:05}"), "t", "gnn".into(), Descriptor::new());
            n.children_count = rng.random_range(0..5);
            n
        })
        .collect();
    let pool: Vec<ParentCandidate<'_>> = nodes
        .iter()
        .map(|n| ParentCandidate { node: n, q: rng.random(), transfer: rng.random_range(-1.0..1.0) })
        .collect();
    let cfg = SearchConfig::default();
    c.bench_function("sample_parent/64_nodes", |b| b.iter(|| sample_parent(&pool, &cfg, &mut rng)));
}

fn bandit(c: &mut Criterion) {
    let gaps: BTreeMap<ModelFamilyId, f64> = (0..10)
        .map(|i| (ModelFamilyId::from(format!("f{i:02}").as_str()), 0.05 * i as f64))
        .collect();
    let spec = RegretSpec {
        gaps,
        horizon: 10_000,
        alpha: 1.0,
        transfer_bias: BTreeMap::new(),
        seeds: 1,
        base_seed: 0,
        best_mean: 0.9,
        reward: RewardModel::Bernoulli,
        schedule: BiasSchedule::Decaying,
    };
    c.bench_function("bandit/10_arms_1e4_rounds", |b| b.iter(|| run_bandit(&spec, 0)));
}

criterion_group!(benches, search_loop, transfer, routing, sampler, bandit);
criterion_main!(benches);
