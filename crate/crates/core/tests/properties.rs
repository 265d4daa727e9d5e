use std::collections::BTreeMap;

use expsearch_core::embedding::EmbeddingTable;
use expsearch_core::memory::normalize_error;
use expsearch_core::search::{argmax_family, select_family};
use expsearch_core::search::FamilyStats;
use expsearch_core::simbench::{leaderboard_aggregate, minmax_normalize, Cell, LeaderboardTable};
use expsearch_core::transfer::{
    family_transfer, node_transfer, robust_normalize, size_weight, squash, TransferScore,
};
use expsearch_core::{
    best_node, validate_forest, Descriptor, Direction, ExecutionRecord, MemoryStore, MetricSpec,
    ModelFamilyId, Outcome, SearchForest, SolutionNode, SolutionRecord, TaskSpec, TaskType,
    TransferConfig,
};
use proptest::prelude::*;

const FAMILIES: [&str; 3] = ["gnn", "rf", "xgb"];

fn task(id: &str, metric: MetricSpec, task_type: TaskType, size: u64) -> TaskSpec {
    TaskSpec {
        id: id.into(),
        task_type,
        metric,
        train_size: size,
        description: String::new(),
        budget: 1,
    }
}

fn metric(i: usize) -> MetricSpec {
    [MetricSpec::auroc(), MetricSpec::auprc(), MetricSpec::mae(), MetricSpec::spearman()][i % 4].clone()
}

/// (task index, family index, completed score or failure)
type NodeSpec = (usize, usize, Option<f64>);

fn store_from(tasks: &[TaskSpec], nodes: &[NodeSpec]) -> MemoryStore {
    let mut store = MemoryStore::new();
    for (i, (t, f, score)) in nodes.iter().enumerate() {
        let t = &tasks[*t % tasks.len()];
        let mut node = SolutionNode::root(
            format!("{}/n{i:05}", t.id),
            &t.id,
            FAMILIES[*f % 3].into(),
            Descriptor::new(),
        );
        match score {
            Some(s) => node.complete(vec![*s]),
            None => node.fail(),
        }
        store.append_solution(SolutionRecord::new(t.clone(), node)).unwrap();
    }
    store
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Double loop over (task, node) pairs, written from the weighting rules
/// directly rather than through the library helpers.
fn brute_family_transfer(
    store: &MemoryStore,
    family: &str,
    target: &TaskSpec,
    emb: &EmbeddingTable,
    cfg: &TransferConfig,
) -> (f64, f64) {
    let te = &emb[&target.id];
    let mut task_ids: Vec<&str> = store.solutions().iter().map(|r| r.task.id.as_str()).collect();
    task_ids.sort();
    task_ids.dedup();
    let (mut num, mut den) = (0.0, 0.0);
    for tid in task_ids {
        if tid == target.id {
            continue;
        }
        let recs: Vec<&SolutionRecord> = store
            .solutions()
            .iter()
            .filter(|r| r.task.id == tid && r.node.is_completed())
            .collect();
        if recs.is_empty() {
            continue;
        }
        let src = &recs[0].task;
        let w_metric = if src.metric.name == target.metric.name && src.metric.direction == target.metric.direction {
            1.0
        } else if src.metric.family == target.metric.family {
            cfg.delta
        } else {
            0.0
        };
        let w_type = f64::from(u8::from(src.task_type == target.task_type));
        let w_size = (-cfg.gamma * ((src.train_size as f64).ln() - (target.train_size as f64).ln()).abs()).exp();
        let se = &emb[tid];
        let dot: f64 = se.iter().zip(te).map(|(a, b)| a * b).sum();
        let na = se.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb = te.iter().map(|a| a * a).sum::<f64>().sqrt();
        let cos = if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) };
        let w = w_metric * w_type * w_size * cos.max(0.0);
        if w <= 0.0 {
            continue;
        }
        let aligned: Vec<f64> = recs
            .iter()
            .map(|r| {
                let v = r.node.val_score.unwrap();
                if r.task.metric.direction == Direction::LowerIsBetter { -v } else { v }
            })
            .collect();
        let m = median(&aligned);
        let mad = median(&aligned.iter().map(|x| (x - m).abs()).collect::<Vec<_>>()).max(cfg.epsilon);
        let own: Vec<f64> = recs
            .iter()
            .zip(&aligned)
            .filter(|(r, _)| r.node.family.as_str() == family)
            .map(|(_, a)| 2.0 / (1.0 + (-(a - m) / mad).exp()) - 1.0)
            .collect();
        if own.is_empty() {
            continue;
        }
        num += w * own.iter().sum::<f64>() / own.len() as f64;
        den += w;
    }
    if den <= 0.0 {
        (0.0, 0.0)
    } else {
        ((num / den).clamp(-1.0, 1.0), den)
    }
}

fn arb_store() -> impl Strategy<Value = (Vec<TaskSpec>, Vec<NodeSpec>, Vec<Vec<f64>>, TaskSpec)> {
    let tasks = prop::collection::vec((0usize..4, any::<bool>(), 1u64..50_000), 1..5);
    let nodes = prop::collection::vec((0usize..5, 0usize..3, prop::option::weighted(0.85, -50.0..50.0f64)), 1..45);
    let embs = prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 6);
    let target = (0usize..4, any::<bool>(), 1u64..50_000);
    (tasks, nodes, embs, target).prop_map(|(ts, nodes, embs, (tm, tt, tsz))| {
        let tasks: Vec<TaskSpec> = ts
            .iter()
            .enumerate()
            .map(|(i, (m, ty, sz))| {
                let ty = if *ty { TaskType::BinaryClassification } else { TaskType::Regression };
                task(&format!("h{i}"), metric(*m), ty, *sz)
            })
            .collect();
        let ty = if tt { TaskType::BinaryClassification } else { TaskType::Regression };
        (tasks, nodes, embs, task("target", metric(tm), ty, tsz))
    })
}

fn embedding_table(tasks: &[TaskSpec], embs: &[Vec<f64>]) -> EmbeddingTable {
    let mut table = EmbeddingTable::new();
    for (t, e) in tasks.iter().zip(embs) {
        table.insert(t.id.clone(), e.clone());
    }
    table.insert("target".into(), embs[5].clone());
    table
}

proptest! {
    #[test]
    fn transfer_is_bounded_and_neutral_without_support(
        (tasks, nodes, embs, target) in arb_store(),
        family in 0usize..3,
        gamma in 0.0..3.0f64,
        delta in 0.0..1.0f64,
    ) {
        let store = store_from(&tasks, &nodes);
        let emb = embedding_table(&tasks, &embs);
        let cfg = TransferConfig { gamma, delta, ..TransferConfig::default() };
        let fam = ModelFamilyId::from(FAMILIES[family]);
        let probe = SolutionNode::root("target/n00000", "target", fam.clone(), Descriptor::new());
        for s in [
            family_transfer(&store, &fam, &target, &emb, &cfg).unwrap(),
            node_transfer(&store, &probe, &target, &emb, &cfg).unwrap(),
        ] {
            prop_assert!((-1.0..=1.0).contains(&s.value));
            if s.support == 0.0 {
                prop_assert_eq!(s.value, 0.0);
            }
        }
    }

    #[test]
    fn family_transfer_matches_double_loop(
        (tasks, nodes, embs, target) in arb_store(),
        family in 0usize..3,
    ) {
        let store = store_from(&tasks, &nodes);
        let emb = embedding_table(&tasks, &embs);
        let cfg = TransferConfig::default();
        let got: TransferScore =
            family_transfer(&store, &ModelFamilyId::from(FAMILIES[family]), &target, &emb, &cfg).unwrap();
        let (value, support) = brute_family_transfer(&store, FAMILIES[family], &target, &emb, &cfg);
        prop_assert!((got.value - value).abs() < 1e-9, "{} vs {}", got.value, value);
        prop_assert!((got.support - support).abs() < 1e-9);
    }

    #[test]
    fn robust_normalize_shift_scale_invariant(
        s in prop::collection::vec(-1e3..1e3f64, 3..30),
        a in 0.01..100.0f64,
        b in -1e4..1e4f64,
    ) {
        let eps = 1e-9;
        let m = median(&s);
        let mad = median(&s.iter().map(|x| (x - m).abs()).collect::<Vec<_>>());
        prop_assume!(mad > 1e-6 && mad * a > eps);
        let base = robust_normalize(&s, eps).unwrap();
        let moved = robust_normalize(&s.iter().map(|x| a * x + b).collect::<Vec<_>>(), eps).unwrap();
        for (x, y) in base.iter().zip(&moved) {
            prop_assert!((x - y).abs() <= 1e-7 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn squash_is_odd_and_bounded(x in -1e3..1e3f64) {
        prop_assert!((squash(x) + squash(-x)).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&squash(x)));
    }

    #[test]
    fn squash_is_monotone(x in -40.0..40.0f64, d in 0.0..10.0f64) {
        prop_assert!(squash(x + d) >= squash(x));
    }

    #[test]
    fn size_weight_in_unit_interval(a in 0.0..15.0f64, b in 0.0..15.0f64, gamma in 0.0..5.0f64) {
        let w = size_weight(a, b, gamma);
        prop_assert!(w > 0.0 && w <= 1.0);
        if gamma > 0.0 && (a - b).abs() > 1e-6 {
            prop_assert!(w < 1.0);
        }
        prop_assert_eq!(size_weight(a, a, gamma), 1.0);
    }

    #[test]
    fn argmax_shift_invariant(
        exploit in prop::collection::vec(0.0..1.0f64, 1..8),
        visits in prop::collection::vec(1u64..50, 8),
        transfer in prop::collection::vec(-1.0..1.0f64, 8),
        shift in -1.0..1.0f64,
        t in 0u64..1000,
    ) {
        let build = |c: f64| -> Vec<FamilyStats> {
            exploit.iter().enumerate().map(|(i, e)| {
                let mut s = FamilyStats::new(
                    ModelFamilyId::from(format!("f{i}").as_str()),
                    TransferScore { value: transfer[i] + c, support: 1.0, contributing_tasks: vec![] },
                );
                s.best_exploit = *e;
                s.visits = visits[i];
                s
            }).collect()
        };
        let base = argmax_family(&build(0.0), t, 1.0).unwrap();
        let moved = argmax_family(&build(shift), t, 1.0).unwrap();
        // exact index ties can flip under floating-point shifts; compare indices
        let idx = |v: &[FamilyStats], i: usize| v[i].ucb_index(t, 1.0);
        let b0 = build(0.0);
        prop_assert!(base == moved || (idx(&b0, base) - idx(&b0, moved)).abs() < 1e-12);
    }

    #[test]
    fn visits_count_selections(
        exploit in prop::collection::vec(0.0..1.0f64, 1..6),
        calls in 1usize..60,
    ) {
        let mut stats: Vec<FamilyStats> = exploit.iter().enumerate().map(|(i, e)| {
            let mut s = FamilyStats::new(ModelFamilyId::from(format!("f{i}").as_str()), TransferScore::neutral());
            s.best_exploit = *e;
            s
        }).collect();
        let mut prev: Vec<u64> = stats.iter().map(|s| s.visits).collect();
        for t in 0..calls {
            select_family(&mut stats, t as u64, 1.0).unwrap();
            for (p, s) in prev.iter().zip(&stats) {
                prop_assert!(s.visits >= *p);
            }
            prev = stats.iter().map(|s| s.visits).collect();
        }
        let extra: u64 = stats.iter().map(|s| s.visits - 1).sum();
        prop_assert_eq!(extra, calls as u64);
    }

    #[test]
    fn normalize_error_idempotent(raw in "[A-Za-z]{3,12}Error: [a-z /._0-9:']{0,60}") {
        let once = normalize_error(&raw);
        let twice = normalize_error(&once.normalized_message);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn snapshot_round_trip_and_append_only(
        (tasks, nodes, _, _) in arb_store(),
        extra in prop::collection::vec((0usize..5, 0usize..3, prop::option::of(-1.0..1.0f64)), 1..10),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let store = store_from(&tasks, &nodes);
        store.snapshot(&dir.path().join("a")).unwrap();
        let loaded = MemoryStore::load(&dir.path().join("a")).unwrap();
        prop_assert_eq!(loaded.solutions(), store.solutions());
        let first = std::fs::read(dir.path().join("a/solutions.jsonl")).unwrap();

        let mut all = nodes.clone();
        all.extend(extra);
        let grown = store_from(&tasks, &all);
        grown.snapshot(&dir.path().join("b")).unwrap();
        let second = std::fs::read(dir.path().join("b/solutions.jsonl")).unwrap();
        prop_assert!(second.starts_with(&first));
    }

    #[test]
    fn resource_profile_is_brute_force_mean(
        runs in prop::collection::vec((0usize..3, 0.0..500.0f64, 0.0..8000.0f64), 1..40),
    ) {
        let mut store = MemoryStore::new();
        for (i, (f, rt, mem)) in runs.iter().enumerate() {
            store.append_execution(ExecutionRecord {
                task_id: "t".into(),
                node_id: format!("t/n{i:05}"),
                family: FAMILIES[*f].into(),
                outcome: Outcome::Success,
                signature: None,
                fix: None,
                fix_verified: false,
                runtime_seconds: *rt,
                memory_mb: *mem,
                log_excerpt: String::new(),
            }).unwrap();
        }
        for (fi, fam) in FAMILIES.iter().enumerate() {
            let own: Vec<f64> = runs.iter().filter(|r| r.0 == fi).map(|r| r.1).collect();
            match store.resource_profile(&ModelFamilyId::from(*fam)) {
                None => prop_assert!(own.is_empty()),
                Some(p) => {
                    let mean = own.iter().sum::<f64>() / own.len() as f64;
                    prop_assert!((p.mean_runtime_seconds - mean).abs() <= 1e-9 * (1.0 + mean));
                    prop_assert_eq!(p.sample_count, own.len() as u64);
                }
            }
        }
        prop_assert!(store.lookup_fix(&normalize_error("ValueError: x")).is_none());
    }

    #[test]
    fn best_node_ignores_insertion_order(
        scores in prop::collection::vec(prop::option::of(0.0..1.0f64), 1..12),
        rotation in 0usize..12,
    ) {
        let make = |order: &[usize]| {
            let mut forest = SearchForest::new("t");
            for &i in order {
                let mut n = SolutionNode::root(format!("t/n{i:05}"), "t", "gnn".into(), [("k".to_string(), i.to_string())].into());
                match scores[i] {
                    Some(s) => n.complete(vec![(s * 8.0).round() / 8.0]),
                    None => n.fail(),
                }
                forest.insert_root(n).unwrap();
            }
            best_node(&forest, &MetricSpec::auroc()).map(|n| n.id.clone())
        };
        let fwd: Vec<usize> = (0..scores.len()).collect();
        let mut rot = fwd.clone();
        rot.rotate_left(rotation % scores.len());
        rot.reverse();
        prop_assert_eq!(make(&fwd), make(&rot));
    }

    #[test]
    fn children_counts_match_structure(parents in prop::collection::vec(0usize..100, 0..30)) {
        let mut forest = SearchForest::new("t");
        forest.insert_root(SolutionNode::root("t/n00000", "t", "gnn".into(), Descriptor::new())).unwrap();
        for (i, p) in parents.iter().enumerate() {
            let id = format!("t/n{:05}", i + 1);
            let mut n = SolutionNode::root(&id, "t", "gnn".into(), [("i".to_string(), i.to_string())].into());
            n.parent_id = Some(format!("t/n{:05}", p % (i + 1)));
            n.edit_type = Some(expsearch_core::EditType::Architecture);
            forest.insert_child(n).unwrap();
        }
        prop_assert!(validate_forest(&forest).is_empty());
        for i in 0..=parents.len() {
            let id = format!("t/n{i:05}");
            let counted = forest.children_of(&id).count() as u32;
            prop_assert_eq!(forest.get(&id).unwrap().children_count, counted);
        }
    }

    #[test]
    fn leaderboard_extremes_and_permutation(
        cells in prop::collection::vec(prop::collection::vec(0u32..1000, 4), 2..6),
        up in prop::collection::vec(any::<bool>(), 4),
    ) {
        let build = |order: &[usize]| {
            let mut t = LeaderboardTable::default();
            for &m in order {
                for (k, v) in cells[m].iter().enumerate() {
                    t.rows.entry(format!("m{m}")).or_default()
                        .insert(format!("t{k}"), Cell { mean: f64::from(*v), std: None });
                    t.directions.insert(format!("t{k}"), if up[k] { Direction::HigherIsBetter } else { Direction::LowerIsBetter });
                }
            }
            t
        };
        let fwd: Vec<usize> = (0..cells.len()).collect();
        let table = build(&fwd);
        let degenerate = (0..4).any(|k| cells.iter().all(|r| r[k] == cells[0][k]));
        match minmax_normalize(&table) {
            Err(_) => prop_assert!(degenerate),
            Ok(norm) => {
                for k in 0..4 {
                    let col: Vec<f64> = norm.values().map(|r| r[&format!("t{k}")]).collect();
                    prop_assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
                    prop_assert!(col.contains(&1.0) && col.contains(&0.0));
                }
                let rev: Vec<usize> = fwd.iter().rev().copied().collect();
                prop_assert_eq!(leaderboard_aggregate(&table).unwrap(), leaderboard_aggregate(&build(&rev)).unwrap());
            }
        }
    }
}

#[test]
fn minmax_normalize_is_idempotent() {
    let mut t = LeaderboardTable::default();
    for (m, vals) in [("a", [0.2, 3.0]), ("b", [0.9, 1.0]), ("c", [0.5, 2.0])] {
        for (k, v) in vals.iter().enumerate() {
            t.rows.entry(m.into()).or_default().insert(format!("t{k}"), Cell { mean: *v, std: None });
        }
    }
    t.directions.insert("t0".into(), Direction::HigherIsBetter);
    t.directions.insert("t1".into(), Direction::LowerIsBetter);
    let once = minmax_normalize(&t).unwrap();
    let mut again = LeaderboardTable::default();
    for (m, row) in &once {
        for (k, v) in row {
            again.rows.entry(m.clone()).or_default().insert(k.clone(), Cell { mean: *v, std: None });
            again.directions.insert(k.clone(), Direction::HigherIsBetter);
        }
    }
    let twice = minmax_normalize(&again).unwrap();
    assert_eq!(once, twice);
    let expect: BTreeMap<&str, [f64; 2]> =
        [("a", [0.0, 0.0]), ("b", [1.0, 1.0]), ("c", [3.0 / 7.0, 0.5])].into();
    for (m, e) in expect {
        assert!((once[m]["t0"] - e[0]).abs() < 1e-12 && (once[m]["t1"] - e[1]).abs() < 1e-12);
    }
}
