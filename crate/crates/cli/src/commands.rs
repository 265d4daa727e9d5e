use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use expsearch_core::embedding::{embed_tasks, EmbeddingTable};
use expsearch_core::routing::route;
use expsearch_core::search::{run_search, RootCandidate};
use expsearch_core::simbench::{
    leaderboard_aggregate, run_amortization, run_regret_experiment, synthetic_evaluator,
    AmortizationSpec, LeaderboardTable, RegretSpec, SyntheticProposer, SyntheticTask,
};
use expsearch_core::{Descriptor, MemoryStore, TaskSpec};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::CliConfig;
use crate::plot::{line_chart, Series};
use crate::Refusal;

/// Output destinations shared by every command.
pub struct Sinks {
    pub out: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn load_store(dir: &Path) -> Result<MemoryStore> {
    MemoryStore::load(dir).with_context(|| format!("loading store {}", dir.display()))
}

/// Accepts either a bare task spec or a synthetic task (`{"spec": ..}`).
fn read_task_spec(path: &Path) -> Result<TaskSpec> {
    let value: serde_json::Value = read_json(path, "task file")?;
    let spec = if value.get("spec").is_some() {
        serde_json::from_value::<SyntheticTask>(value).map(|t| t.spec)
    } else {
        serde_json::from_value::<TaskSpec>(value)
    };
    spec.with_context(|| format!("parsing task file {}", path.display()))
}

fn embeddings(cfg: &CliConfig, store: &MemoryStore, target: &TaskSpec) -> Result<EmbeddingTable> {
    let provider = cfg.provider()?;
    let mut tasks = store.tasks();
    tasks.push(target);
    Ok(embed_tasks(provider.as_ref(), tasks)?)
}

pub fn search(cfg: &CliConfig, task_file: &Path, sinks: &Sinks) -> Result<String> {
    let task: SyntheticTask = read_json(task_file, "task file")?;
    task.validate()?;
    if task.spec.budget == 0 {
        return Err(anyhow!(Refusal(
            "budget 0: zero-budget tasks are answered by `expsearch route`".into()
        )));
    }
    let mut store = if cfg.store_dir.is_dir() {
        load_store(&cfg.store_dir)?
    } else {
        MemoryStore::new()
    };
    let table = embeddings(cfg, &store, &task.spec)?;
    let roots: Vec<RootCandidate> = task
        .families()
        .into_iter()
        .map(|f| RootCandidate::new(f.as_str(), Descriptor::new()))
        .collect::<Result<_, _>>()?;
    let outcome = run_search(
        &task.spec,
        &roots,
        &SyntheticProposer::default(),
        &synthetic_evaluator(task.clone()),
        &mut store,
        &table,
        &cfg.effective_search(),
    )?;
    store
        .snapshot(&cfg.store_dir)
        .with_context(|| format!("saving store {}", cfg.store_dir.display()))?;
    if let Some(out) = &sinks.out {
        write_file(out, &to_json(&outcome.forest)?)?;
    }
    Ok(match &outcome.best {
        Some(best) => format!("best {} {}\n", best.id, best.val_score.expect("completed")),
        None => "best none\n".to_string(),
    })
}

pub fn route_cmd(cfg: &CliConfig, task_file: &Path, sinks: &Sinks) -> Result<String> {
    let task = read_task_spec(task_file)?;
    if task.budget != 0 {
        return Err(anyhow!(Refusal(format!(
            "budget {}: routing answers zero-budget tasks only; use `expsearch search`",
            task.budget
        ))));
    }
    let store = load_store(&cfg.store_dir)?;
    let provider = cfg.provider()?;
    let decision = route(&task, &store, provider.as_ref(), cfg.transfer.gamma)?;
    let json = to_json(&decision)?;
    if let Some(out) = &sinks.out {
        write_file(out, &json)?;
    }
    Ok(json)
}

pub fn regret(seed: Option<u64>, experiment: &Path, sinks: &Sinks) -> Result<String> {
    let mut spec: RegretSpec = read_json(experiment, "experiment file")?;
    if let Some(s) = seed {
        spec.base_seed = s;
    }
    let report = run_regret_experiment(&spec)?;
    let mut csv = String::from("t,regret_mean,regret_std,bound\n");
    for i in 0..report.horizon {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            i + 1,
            report.cumulative_regret[i],
            report.regret_std[i],
            report.theoretical_bound[i]
        );
    }
    if let Some(plot) = &sinks.plot {
        let xs = 1..=report.horizon;
        let svg = line_chart(
            "Cumulative regret",
            "round t",
            "regret",
            &[
                Series {
                    name: format!("mean regret ({} seeds)", report.seeds),
                    points: xs.clone().map(|t| t as f64).zip(report.cumulative_regret.iter().copied()).collect(),
                    dashed: false,
                },
                Series {
                    name: "bound".into(),
                    points: xs.map(|t| t as f64).zip(report.theoretical_bound.iter().copied()).collect(),
                    dashed: true,
                },
            ],
        );
        write_file(plot, &svg)?;
    }
    match &sinks.out {
        Some(out) => {
            write_file(out, &csv)?;
            Ok(String::new())
        }
        None => Ok(csv),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn amortize(seed: Option<u64>, experiment: &Path, sinks: &Sinks) -> Result<String> {
    let mut spec: AmortizationSpec = read_json(experiment, "experiment file")?;
    if let Some(s) = seed {
        spec.base_seed = s;
    }
    let summary = run_amortization(&spec)?;
    if let Some(out) = &sinks.out {
        let mut csv = String::from("condition,budget,mean_utility,normalized\n");
        let _ = writeln!(
            csv,
            "zero_route,0,{},{}",
            opt(summary.mean_zero_route),
            opt(summary.normalized_zero_route)
        );
        for (i, b) in summary.budgets.iter().enumerate() {
            let _ = writeln!(
                csv,
                "memoryless,{b},{},{}",
                opt(summary.mean_budgeted[i]),
                opt(summary.normalized_budgeted[i])
            );
        }
        write_file(out, &csv)?;
    }
    if let Some(plot) = &sinks.plot {
        let budgets: Vec<f64> = summary.budgets.iter().map(|b| f64::from(*b)).collect();
        let curve: Vec<(f64, f64)> = budgets
            .iter()
            .zip(&summary.normalized_budgeted)
            .filter_map(|(b, v)| v.map(|v| (*b, v)))
            .collect();
        let mut series = vec![Series { name: "memoryless search".into(), points: curve, dashed: false }];
        if let (Some(z), Some(lo), Some(hi)) = (
            summary.normalized_zero_route,
            budgets.first(),
            budgets.last(),
        ) {
            series.push(Series { name: "zero-budget route".into(), points: vec![(*lo, z), (*hi, z)], dashed: true });
        }
        write_file(plot, &line_chart("Normalized score vs budget", "budget", "normalized score", &series))?;
    }
    to_json(&summary)
}

pub fn report(csv: &Path, json_stdout: bool, sinks: &Sinks) -> Result<String> {
    let table = LeaderboardTable::load(csv)?;
    let report = leaderboard_aggregate(&table)?;
    let json = to_json(&report)?;
    if let Some(out) = &sinks.out {
        write_file(out, &json)?;
    }
    if json_stdout {
        return Ok(json);
    }
    let mut text = format!("{:<20} {:>9} {:>11} {:>6}\n", "method", "avg_rank", "norm_score", "wins");
    for m in &report.methods {
        let _ = writeln!(
            text,
            "{:<20} {:>9.3} {:>11.4} {:>3}/{:<2}",
            m.method, m.avg_rank, m.avg_norm_score, m.wins, m.tasks
        );
    }
    for m in &report.excluded {
        let _ = writeln!(text, "excluded (incomplete): {m}");
    }
    Ok(text)
}

pub enum MemoryView {
    Stats,
    Fixes,
    Profiles,
}

pub fn memory(cfg: &CliConfig, view: MemoryView) -> Result<String> {
    let store = load_store(&cfg.store_dir)?;
    let mut text = String::new();
    match view {
        MemoryView::Stats => {
            let _ = writeln!(text, "solutions {}", store.solutions().len());
            let _ = writeln!(text, "refinements {}", store.refinements().len());
            let _ = writeln!(text, "executions {}", store.executions().len());
            for t in store.tasks() {
                let s = store.solutions().iter().filter(|r| r.task.id == t.id).count();
                let r = store.refinements().iter().filter(|r| r.task_id == t.id).count();
                let e = store.executions().iter().filter(|r| r.task_id == t.id).count();
                let _ = writeln!(text, "task {} solutions {s} refinements {r} executions {e}", t.id);
            }
        }
        MemoryView::Fixes => {
            for (sig, fix) in store.verified_fixes() {
                let _ = writeln!(
                    text,
                    "{:?}\t{}\t{}",
                    sig.category,
                    sig.normalized_message,
                    serde_json::to_string(fix)?
                );
            }
        }
        MemoryView::Profiles => {
            for p in store.resource_profiles() {
                let _ = writeln!(
                    text,
                    "{}\truntime_s {}\tmemory_mb {}\tn {}",
                    p.family, p.mean_runtime_seconds, p.mean_memory_mb, p.sample_count
                );
            }
        }
    }
    Ok(text)
}
