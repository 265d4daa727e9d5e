use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Direction;

pub const HEADER: [&str; 5] = ["method", "task", "mean", "std", "direction"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub std: Option<f64>,
}

/// Method × task score table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardTable {
    pub rows: BTreeMap<String, BTreeMap<String, Cell>>,
    pub directions: BTreeMap<String, Direction>,
}

fn parse_direction(s: &str) -> Option<Direction> {
    match s {
        "up" => Some(Direction::HigherIsBetter),
        "down" => Some(Direction::LowerIsBetter),
        _ => None,
    }
}

impl LeaderboardTable {
    /// Parses `method,task,mean,std,direction` CSV. Row numbers in errors are
    /// file line numbers (the header is line 1).
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| Error::Leaderboard {
            row: 1,
            reason: e.to_string(),
        })?;
        if header.iter().collect::<Vec<_>>() != HEADER {
            return Err(Error::Leaderboard {
                row: 1,
                reason: format!("header must be `{}`", HEADER.join(",")),
            });
        }
        let mut table = Self::default();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Leaderboard {
                row: e.position().map_or(0, |p| p.line() as usize),
                reason: e.to_string(),
            })?;
            let row = record.position().map_or(0, |p| p.line() as usize);
            let bad = |reason: String| Error::Leaderboard { row, reason };
            let (method, task) = (&record[0], &record[1]);
            if method.is_empty() || task.is_empty() {
                return Err(bad("method and task must be non-empty".into()));
            }
            let mean: f64 = record[2]
                .parse()
                .map_err(|_| bad(format!("mean `{}` is not a number", &record[2])))?;
            if !mean.is_finite() {
                return Err(bad("mean must be finite".into()));
            }
            let std = match &record[3] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad(format!("std `{s}` is not a number")))?),
            };
            let direction = parse_direction(&record[4])
                .ok_or_else(|| bad(format!("direction `{}` must be up or down", &record[4])))?;
            match table.directions.get(task) {
                Some(d) if *d != direction => {
                    return Err(bad(format!("direction of task `{task}` disagrees with earlier rows")))
                }
                _ => {
                    table.directions.insert(task.to_owned(), direction);
                }
            }
            let cells = table.rows.entry(method.to_owned()).or_default();
            if cells.insert(task.to_owned(), Cell { mean, std }).is_some() {
                return Err(bad(format!("duplicate row for ({method}, {task})")));
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &String> {
        self.directions.keys()
    }

    pub fn is_complete(&self, method: &str) -> bool {
        self.rows
            .get(method)
            .is_some_and(|cells| self.directions.keys().all(|t| cells.contains_key(t)))
    }

    /// Copy holding only the methods that cover every task.
    pub fn complete_only(&self) -> Self {
        Self {
            rows: self
                .rows
                .iter()
                .filter(|(m, _)| self.is_complete(m))
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
            directions: self.directions.clone(),
        }
    }
}

/// Per-task min-max scaling of method means, oriented so the best is 1.
pub fn minmax_normalize(table: &LeaderboardTable) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    let mut out: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (task, direction) in &table.directions {
        let column: Vec<(&String, f64)> = table
            .rows
            .iter()
            .filter_map(|(m, cells)| cells.get(task).map(|c| (m, c.mean)))
            .collect();
        let lo = column.iter().map(|(_, x)| *x).fold(f64::INFINITY, f64::min);
        let hi = column.iter().map(|(_, x)| *x).fold(f64::NEG_INFINITY, f64::max);
        if hi.is_nan() || hi <= lo {
            return Err(Error::DegenerateColumn {
                task: task.clone(),
                value: lo,
            });
        }
        for (m, x) in column {
            let v = match direction {
                Direction::HigherIsBetter => (x - lo) / (hi - lo),
                Direction::LowerIsBetter => (hi - x) / (hi - lo),
            };
            out.entry(m.clone()).or_default().insert(task.clone(), v);
        }
    }
    Ok(out)
}

/// Rank positions (1 = best) with tied values sharing the mean of their
/// positions.
pub fn rank_with_ties(aligned: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..aligned.len()).collect();
    order.sort_by(|a, b| aligned[*b].total_cmp(&aligned[*a]));
    let mut ranks = vec![0.0; aligned.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && aligned[order[j + 1]] == aligned[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = shared;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub avg_rank: f64,
    pub avg_norm_score: f64,
    /// Tasks where the method is ranked first alone.
    pub wins: usize,
    pub tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardReport {
    /// Sorted by `avg_rank`, then method name.
    pub methods: Vec<MethodSummary>,
    /// Methods dropped for missing tasks.
    pub excluded: Vec<String>,
    pub tasks: usize,
}

/// Ranks, normalized scores and strict wins over the complete methods.
pub fn leaderboard_aggregate(table: &LeaderboardTable) -> Result<LeaderboardReport> {
    let excluded: Vec<String> = table
        .rows
        .keys()
        .filter(|m| !table.is_complete(m))
        .cloned()
        .collect();
    for m in &excluded {
        log::warn!("method `{m}` does not cover every task; excluded from aggregation");
    }
    let complete = table.complete_only();
    if complete.rows.is_empty() {
        return Err(Error::EmptyInput("complete leaderboard methods"));
    }
    let norm = minmax_normalize(&complete)?;
    let methods: Vec<&String> = complete.rows.keys().collect();
    let mut rank_sum = vec![0.0; methods.len()];
    let mut wins = vec![0usize; methods.len()];
    for (task, direction) in &complete.directions {
        let aligned: Vec<f64> = methods
            .iter()
            .map(|m| direction.align(complete.rows[*m][task].mean))
            .collect();
        let ranks = rank_with_ties(&aligned);
        for (i, r) in ranks.iter().enumerate() {
            rank_sum[i] += r;
            if *r == 1.0 {
                wins[i] += 1;
            }
        }
    }
    let n_tasks = complete.directions.len();
    let mut summaries: Vec<MethodSummary> = methods
        .iter()
        .enumerate()
        .map(|(i, m)| MethodSummary {
            method: (*m).clone(),
            avg_rank: rank_sum[i] / n_tasks as f64,
            avg_norm_score: norm[*m].values().sum::<f64>() / n_tasks as f64,
            wins: wins[i],
            tasks: n_tasks,
        })
        .collect();
    summaries.sort_by(|a, b| a.avg_rank.total_cmp(&b.avg_rank).then_with(|| a.method.cmp(&b.method)));
    Ok(LeaderboardReport {
        methods: summaries,
        excluded,
        tasks: n_tasks,
    })
}
