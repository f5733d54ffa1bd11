//! Aggregation and tabulation of simulation results.

use thiserror::Error;

use crate::dsl::Compartment;
use crate::engine::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMode {
    /// Exactly one trajectory, integral counts.
    Single,
    /// Mean counts per timestep across runs, real-valued.
    Mean,
    /// Every run preserved, labeled by run index.
    Stacked,
}

/// One table row: compartment counts at one timestep (of one run, when
/// stacked).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesRow {
    /// Run index for stacked tables; `None` for single and mean tables.
    pub run: Option<u32>,
    pub time: u32,
    pub susceptible: f64,
    pub infected: f64,
    pub recovered: f64,
    pub resistant: f64,
}

impl TimeSeriesRow {
    pub fn count(&self, c: Compartment) -> f64 {
        match c {
            Compartment::Susceptible => self.susceptible,
            Compartment::Infected => self.infected,
            Compartment::Recovered => self.recovered,
            Compartment::Resistant => self.resistant,
        }
    }
}

/// Per-timestep compartment counts, single-run or aggregated.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    pub mode: AggregateMode,
    pub population: usize,
    pub horizon: u32,
    pub runs: u32,
    pub rows: Vec<TimeSeriesRow>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AggregateError {
    #[error("no trajectories to aggregate")]
    EmptyInput,
    #[error("trajectories have mismatched dimensions")]
    DimensionMismatch,
    #[error("single mode requires exactly one trajectory, got {0}")]
    NotSingle(usize),
}

/// Tabulate trajectories. Single mode requires exactly one; mean averages
/// counts per timestep across runs; stacked preserves every run.
pub fn aggregate(
    trajectories: &[Trajectory],
    mode: AggregateMode,
) -> Result<TimeSeriesTable, AggregateError> {
    let first = trajectories.first().ok_or(AggregateError::EmptyInput)?;
    let population = first.population();
    let horizon = first.horizon();
    if trajectories
        .iter()
        .any(|t| t.population() != population || t.horizon() != horizon)
    {
        return Err(AggregateError::DimensionMismatch);
    }
    let runs = trajectories.len() as u32;
    let mut rows = Vec::new();
    match mode {
        AggregateMode::Single => {
            if trajectories.len() != 1 {
                return Err(AggregateError::NotSingle(trajectories.len()));
            }
            push_run_rows(&mut rows, first, None, horizon);
        }
        AggregateMode::Stacked => {
            for traj in trajectories {
                push_run_rows(&mut rows, traj, Some(traj.run_index), horizon);
            }
        }
        AggregateMode::Mean => {
            for t in 1..=horizon {
                let mut sums = [0.0f64; 4];
                for traj in trajectories {
                    let (s, i, rec, res) = traj.counts(t);
                    sums[0] += s as f64;
                    sums[1] += i as f64;
                    sums[2] += rec as f64;
                    sums[3] += res as f64;
                }
                let k = f64::from(runs);
                rows.push(TimeSeriesRow {
                    run: None,
                    time: t,
                    susceptible: sums[0] / k,
                    infected: sums[1] / k,
                    recovered: sums[2] / k,
                    resistant: sums[3] / k,
                });
            }
        }
    }
    Ok(TimeSeriesTable {
        mode,
        population,
        horizon,
        runs,
        rows,
    })
}

fn push_run_rows(rows: &mut Vec<TimeSeriesRow>, traj: &Trajectory, run: Option<u32>, horizon: u32) {
    for t in 1..=horizon {
        let (s, i, rec, res) = traj.counts(t);
        rows.push(TimeSeriesRow {
            run,
            time: t,
            susceptible: s as f64,
            infected: i as f64,
            recovered: rec as f64,
            resistant: res as f64,
        });
    }
}

impl TimeSeriesTable {
    /// CSV with a header row; counts print minimally (means keep their
    /// decimals, integral counts print without a point).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,susceptible,infected,recovered,resistant\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.time, row.susceptible, row.infected, row.recovered, row.resistant
            ));
        }
        out
    }

    /// The time series of one compartment; meaningful for single and mean
    /// tables, or per run via [`TimeSeriesTable::run_series`].
    pub fn series(&self, c: Compartment) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.run.is_none() || r.run == self.rows[0].run)
            .map(|r| r.count(c))
            .collect()
    }

    /// The time series of one compartment for one stacked run.
    pub fn run_series(&self, run: u32, c: Compartment) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.run == Some(run))
            .map(|r| r.count(c))
            .collect()
    }

    /// Run indices present, in order.
    pub fn run_indices(&self) -> Vec<Option<u32>> {
        let mut seen = Vec::new();
        for row in &self.rows {
            if !seen.contains(&row.run) {
                seen.push(row.run);
            }
        }
        seen
    }
}

/// Local maxima of a series, plateau-collapsed: consecutive equal values
/// count as one candidate, and a candidate is a peak only when both the
/// value before the plateau and the value after it are strictly smaller.
/// Returns the 1-based position of each plateau's first element.
pub fn peaks(series: &[f64]) -> Vec<usize> {
    let mut result = Vec::new();
    let mut i = 0;
    while i < series.len() {
        let mut j = i;
        while j + 1 < series.len() && series[j + 1] == series[i] {
            j += 1;
        }
        let rises = i > 0 && series[i - 1] < series[i];
        let falls = j + 1 < series.len() && series[j + 1] < series[i];
        if rises && falls {
            result.push(i + 1);
        }
        i = j + 1;
    }
    result
}
