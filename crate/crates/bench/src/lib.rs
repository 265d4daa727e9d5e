//! Fixtures shared by the benchmarks.

use expsearch_core::embedding::{embed_tasks, EmbeddingTable, HashedEmbedding};
use expsearch_core::search::{run_search, RootCandidate};
use expsearch_core::simbench::{generate_task_pool, synthetic_evaluator, SyntheticProposer};
use expsearch_core::{Descriptor, MemoryStore, PoolConfig, SearchConfig, SyntheticTask};

pub const EMBEDDING_DIMENSION: usize = 64;

pub fn pool(n_tasks: usize, n_families: usize, seed: u64) -> Vec<SyntheticTask> {
    generate_task_pool(n_tasks, n_families, seed, &PoolConfig::default()).expect("valid pool config")
}

pub fn roots(task: &SyntheticTask) -> Vec<RootCandidate> {
    task.families()
        .iter()
        .map(|f| RootCandidate::new(f.as_str(), Descriptor::new()).expect("valid family id"))
        .collect()
}

pub fn embeddings(store: &MemoryStore, target: &SyntheticTask) -> EmbeddingTable {
    let provider = HashedEmbedding::new(EMBEDDING_DIMENSION).expect("positive dimension");
    let mut tasks = store.tasks();
    tasks.push(&target.spec);
    embed_tasks(&provider, tasks).expect("hashed embeddings never fail")
}

/// Runs a search on `task`, appending its records to `store`.
pub fn search_into(store: &mut MemoryStore, task: &SyntheticTask, seed: u64) {
    let table = embeddings(store, task);
    run_search(
        &task.spec,
        &roots(task),
        &SyntheticProposer::default(),
        &synthetic_evaluator(task.clone()),
        store,
        &table,
        &SearchConfig { rng_seed: seed, ..SearchConfig::default() },
    )
    .expect("synthetic search succeeds");
}

/// A store populated by searching every task of a pool.
pub fn populated_store(n_tasks: usize, seed: u64) -> (MemoryStore, Vec<SyntheticTask>) {
    let tasks = pool(n_tasks, 6, seed);
    let mut store = MemoryStore::new();
    for (i, t) in tasks.iter().enumerate() {
        search_into(&mut store, t, seed + i as u64);
    }
    (store, tasks)
}
