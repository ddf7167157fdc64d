//! Aggregate reports over trial batches and the boundary-set failure table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Result};
use intentfix_core::fixtures::BOUNDARY_SETS;
use intentfix_core::sim::{AssistMode, Assistance, BoundarySpec, Outcome, Task, TrialRecord};
use intentfix_core::stats::{
    self, ColumnSummary, FailureTable, MeanSummary, ProportionEstimate, TestResult, TimeSummary,
};
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: &str = "intentfix.report/1";
pub const LEVEL: f64 = 0.95;

const SYNTHETIC_NOTE: &str = "Trials come from synthetic operators (perceived-depth noise, jittered gaze). \
Figures describe this simulator only; the property checks test the direction of the assistance effects, \
not any human-subject numbers.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Success proportions against the unassisted cell of the same task.
    pub success: TestResult,
    /// Log completion times of successful trials against the same baseline.
    pub log_time: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub task: Task,
    pub mode: AssistMode,
    pub label: String,
    pub trials: u64,
    pub successes: u64,
    pub hazard_contacts: u64,
    pub wrong_location: u64,
    pub success: ProportionEstimate,
    /// Arithmetic mean completion time of successful trials, seconds.
    pub mean_time: Option<f64>,
    /// Geometric mean and interval of successful completion times.
    pub time: Option<TimeSummary>,
    pub attempts: Option<MeanSummary>,
    pub vs_unassisted: Option<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub level: f64,
    pub note: String,
    pub cells: Vec<CellReport>,
    pub properties: Vec<PropertyCheck>,
    pub warnings: Vec<String>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn successful_times(recs: &[&TrialRecord]) -> Vec<f64> {
    recs.iter()
        .filter(|r| r.outcome.is_success())
        .map(|r| r.completion_time)
        .collect()
}

impl ExperimentReport {
    pub fn from_records(records: &[TrialRecord]) -> Result<Self> {
        if records.is_empty() {
            bail!("no trials");
        }
        let mut order: Vec<(Task, AssistMode)> = Vec::new();
        let mut groups: BTreeMap<usize, Vec<&TrialRecord>> = BTreeMap::new();
        for r in records {
            let key = (r.task(), r.mode());
            let idx = order.iter().position(|k| *k == key).unwrap_or_else(|| {
                order.push(key);
                order.len() - 1
            });
            groups.entry(idx).or_default().push(r);
        }
        // stable presentation: by task, then unassisted first
        let mut idxs: Vec<usize> = (0..order.len()).collect();
        idxs.sort_by_key(|&i| {
            let (task, mode) = order[i];
            (task.name(), mode.assistance != Assistance::None, mode.label())
        });

        let mut warnings = Vec::new();
        let mut cells = Vec::new();
        for &i in &idxs {
            let (task, mode) = order[i];
            let recs = &groups[&i];
            let label = format!("{} / {}", task.name(), mode.label());
            let n = recs.len() as u64;
            let count = |o: Outcome| recs.iter().filter(|r| r.outcome == o).count() as u64;
            let successes = count(Outcome::Success);
            let times = successful_times(recs);
            if n == 1 {
                warnings.push(format!("{label}: single trial, intervals are degenerate"));
            }
            let time = match stats::geo_mean_ci(&times, LEVEL) {
                Ok(t) => Some(t),
                Err(_) => {
                    warnings.push(format!(
                        "{label}: {} successful trial(s), time interval omitted",
                        times.len()
                    ));
                    None
                }
            };
            let attempts: Vec<f64> = recs.iter().map(|r| f64::from(r.attempts)).collect();
            cells.push(CellReport {
                task,
                mode,
                label,
                trials: n,
                successes,
                hazard_contacts: count(Outcome::FailHazardContact),
                wrong_location: count(Outcome::FailWrongLocation),
                success: ProportionEstimate::new(successes, n, LEVEL)?,
                mean_time: mean(&times),
                time,
                attempts: stats::mean_ci(&attempts, LEVEL).ok().map(|m| MeanSummary {
                    ci_low: m.ci_low.max(0.0),
                    ..m
                }),
                vs_unassisted: None,
            });
        }

        for i in 0..cells.len() {
            let c = &cells[i];
            if c.mode.assistance == Assistance::None {
                continue;
            }
            let Some(base) = cells
                .iter()
                .find(|b| b.task == c.task && b.mode.assistance == Assistance::None)
            else {
                continue;
            };
            let success = stats::n1_chisq(c.successes, c.trials, base.successes, base.trials)?;
            let logs = |task, mode| -> Vec<f64> {
                records
                    .iter()
                    .filter(|r| r.task() == task && r.mode() == mode && r.outcome.is_success())
                    .map(|r| r.completion_time.ln())
                    .collect()
            };
            let log_time = stats::two_sample_t(&logs(c.task, c.mode), &logs(base.task, base.mode)).ok();
            cells[i].vs_unassisted = Some(Comparison { success, log_time });
        }

        let properties = property_checks(&cells);
        Ok(Self {
            schema: REPORT_SCHEMA.into(),
            level: LEVEL,
            note: SYNTHETIC_NOTE.into(),
            cells,
            properties,
            warnings,
        })
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let pct = |x: f64| format!("{:.0}%", 100.0 * x);
        let _ = writeln!(s, "# Experiment report\n");
        let _ = writeln!(s, "{}\n", self.note);
        let _ = writeln!(
            s,
            "| Condition | Trials | Success | Laplace | {:.0}% adj. Wald | Mean time (s) | Geo. mean time (s) [CI] | Attempts [CI] | p (success) | p (log time) |",
            100.0 * self.level
        );
        let _ = writeln!(s, "|---|---:|---:|---:|---|---:|---|---|---:|---:|");
        for c in &self.cells {
            let time = c.time.map_or("n/a".into(), |t| {
                format!("{:.2} [{:.2}, {:.2}]", t.geo_mean, t.ci_low, t.ci_high)
            });
            let att = c.attempts.map_or("n/a".into(), |a| {
                format!("{:.2} [{:.2}, {:.2}]", a.mean, a.ci_low, a.ci_high)
            });
            let (p1, p2) = c.vs_unassisted.as_ref().map_or(("".into(), "".into()), |v| {
                (
                    format!("{:.3}", v.success.p_value),
                    v.log_time.map_or("n/a".into(), |t| format!("{:.3}", t.p_value)),
                )
            });
            let _ = writeln!(
                s,
                "| {} | {} | {}/{} | {} | [{}, {}] | {} | {} | {} | {} | {} |",
                c.label,
                c.trials,
                c.successes,
                c.trials,
                pct(c.success.point),
                pct(c.success.ci_low),
                pct(c.success.ci_high),
                c.mean_time.map_or("n/a".into(), |m| format!("{m:.2}")),
                time,
                att,
                p1,
                p2
            );
        }
        if !self.properties.is_empty() {
            let _ = writeln!(s, "\n## Property checks\n");
            for p in &self.properties {
                let mark = if p.holds { "holds" } else { "FAILS" };
                let _ = writeln!(s, "- {}: **{mark}** ({})", p.name, p.detail);
            }
        }
        if !self.warnings.is_empty() {
            let _ = writeln!(s, "\n## Warnings\n");
            for w in &self.warnings {
                let _ = writeln!(s, "- {w}");
            }
        }
        s
    }
}

fn property_checks(cells: &[CellReport]) -> Vec<PropertyCheck> {
    let mut out = Vec::new();
    for task in [Task::Grasping, Task::Cutting] {
        let find = |a: Assistance, adjusted: bool| {
            cells
                .iter()
                .find(|c| c.task == task && c.mode == AssistMode::new(a, adjusted))
        };
        let Some(base) = find(Assistance::None, false) else {
            continue;
        };
        if let Some(g) = find(Assistance::GuidanceForce, true) {
            if let (Some(gt), Some(bt)) = (g.mean_time, base.mean_time) {
                out.push(PropertyCheck {
                    name: format!(
                        "{}: guidance force + intent is not slower than no assistance",
                        task.name()
                    ),
                    holds: gt <= bt,
                    detail: format!("mean successful time {gt:.3} s vs {bt:.3} s"),
                });
            }
        }
        for adjusted in [true, false] {
            if let Some(b) = find(Assistance::SafetyBoundary, adjusted) {
                let rb = b.successes as f64 / b.trials as f64;
                let r0 = base.successes as f64 / base.trials as f64;
                out.push(PropertyCheck {
                    name: format!(
                        "{}: {} succeeds at least as often as no assistance",
                        task.name(),
                        b.mode.label()
                    ),
                    holds: rb >= r0,
                    detail: format!("{}/{} vs {}/{}", b.successes, b.trials, base.successes, base.trials),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub schema: String,
    pub source: String,
    pub table: FailureTable,
    pub columns: Vec<ColumnSummary>,
}

impl FailureReport {
    pub fn fixture() -> Self {
        Self::from_table("fixture".into(), FailureTable::fixture())
    }

    fn from_table(source: String, table: FailureTable) -> Self {
        let columns = [Task::Cutting, Task::Grasping]
            .into_iter()
            .filter_map(|t| table.column(t))
            .collect();
        Self {
            schema: REPORT_SCHEMA.into(),
            source,
            table,
            columns,
        }
    }

    /// Failure table over safety-boundary trials run with a preset set.
    pub fn from_records(records: &[TrialRecord]) -> Result<Self> {
        let outcomes: Vec<(u8, Task, bool)> = records
            .iter()
            .filter(|r| r.mode().assistance == Assistance::SafetyBoundary)
            .filter_map(|r| {
                let set = match r.config.fixture.boundary_set {
                    Some(BoundarySpec::Set(k)) => k,
                    None => r.task().default_boundary_set(),
                    Some(BoundarySpec::Explicit { .. }) => return None,
                };
                Some((set, r.task(), !r.outcome.is_success()))
            })
            .collect();
        if outcomes.is_empty() {
            bail!("no safety-boundary trials with a preset set");
        }
        Ok(Self::from_table("trials".into(), FailureTable::from_outcomes(outcomes)))
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Boundary parameter sets: failure rate ({})\n", self.source);
        let _ = writeln!(s, "| Set | theta (deg) | H (cm) | S (cm) | Cutting | Grasping |");
        let _ = writeln!(s, "|---:|---:|---:|---:|---:|---:|");
        let cell = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{x:.0}%"));
        for r in &self.table.rows {
            let (th, h, sz) = BOUNDARY_SETS
                .get(usize::from(r.set).wrapping_sub(1))
                .copied()
                .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
            let _ = writeln!(
                s,
                "| {} | {th:.0} | {h:.0} | {sz:.0} | {} | {} |",
                r.set,
                cell(r.cutting),
                cell(r.grasping)
            );
        }
        let _ = writeln!(s);
        for c in &self.columns {
            let sets: Vec<String> = c.min_sets.iter().map(u8::to_string).collect();
            let _ = writeln!(
                s,
                "- {}: mean {:.0}% ({:.3}), lowest {:.0}% at set(s) {}",
                c.task.name(),
                c.mean,
                c.mean,
                c.min,
                sets.join(", ")
            );
        }
        for w in &self.table.warnings {
            let _ = writeln!(s, "- warning: {w}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_columns() {
        let r = FailureReport::fixture();
        let cut = r.columns.iter().find(|c| c.task == Task::Cutting).unwrap();
        let grasp = r.columns.iter().find(|c| c.task == Task::Grasping).unwrap();
        assert_eq!(cut.mean.round(), 59.0);
        assert_eq!(grasp.mean.round(), 54.0);
        assert_eq!(cut.min_sets, vec![2, 6, 7]);
        assert_eq!(grasp.min_sets, vec![5]);
        let md = r.to_markdown();
        assert!(md.contains("cutting: mean 59%"), "{md}");
        assert!(md.contains("grasping: mean 54%"), "{md}");
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert_eq!(
            ExperimentReport::from_records(&[]).unwrap_err().to_string(),
            "no trials"
        );
    }
}
