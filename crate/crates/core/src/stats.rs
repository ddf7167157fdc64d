//! Small-sample statistics for trial batches: Laplace success estimates,
//! adjusted-Wald (Agresti-Coull) intervals, the N-1 two-proportion
//! chi-square test, log-scale time intervals, Welch's t-test, and the
//! failure-rate table used to pick boundary presets.
//!
//! Distribution tails are computed here (incomplete gamma/beta) rather than
//! pulled from a statistics crate so the core stays `no_std`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::sim::Task;

pub mod special {
    //! Special functions behind the distribution tails.

    use crate::math;

    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 500;

    /// Regularized lower incomplete gamma `P(a, x)`.
    pub fn gamma_p(a: f64, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x < a + 1.0 {
            gamma_series(a, x)
        } else {
            1.0 - gamma_cf(a, x)
        }
    }

    /// Regularized upper incomplete gamma `Q(a, x)`.
    pub fn gamma_q(a: f64, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if x < a + 1.0 {
            1.0 - gamma_series(a, x)
        } else {
            gamma_cf(a, x)
        }
    }

    fn gamma_series(a: f64, x: f64) -> f64 {
        let mut ap = a;
        let mut sum = 1.0 / a;
        let mut del = sum;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        sum * math::exp(-x + a * math::ln(x) - math::lgamma(a))
    }

    fn gamma_cf(a: f64, x: f64) -> f64 {
        // modified Lentz
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        math::exp(-x + a * math::ln(x) - math::lgamma(a)) * h
    }

    /// Regularized incomplete beta `I_x(a, b)`.
    pub fn beta_inc(a: f64, b: f64, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let ln_front = math::lgamma(a + b) - math::lgamma(a) - math::lgamma(b) + a * math::ln(x) + b * math::ln_1p(-x);
        let front = math::exp(ln_front);
        if x < (a + 1.0) / (a + b + 2.0) {
            front * beta_cf(a, b, x) / a
        } else {
            1.0 - front * beta_cf(b, a, 1.0 - x) / b
        }
    }

    fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
        let qab = a + b;
        let qap = a + 1.0;
        let qam = a - 1.0;
        let mut c = 1.0;
        let mut d = 1.0 - qab * x / qap;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        let mut h = d;
        for m in 1..MAX_ITER {
            let m = m as f64;
            let m2 = 2.0 * m;
            let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
            d = 1.0 + aa * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + aa / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            h *= d * c;
            let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
            d = 1.0 + aa * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + aa / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        h
    }
}

pub mod dist {
    //! Distribution functions used by the tests and intervals.

    use super::special;
    use crate::math;

    pub fn normal_cdf(x: f64) -> f64 {
        0.5 * math::erfc(-x / core::f64::consts::SQRT_2)
    }

    /// Standard normal quantile: Acklam's rational approximation polished
    /// with one Halley step.
    pub fn normal_quantile(p: f64) -> f64 {
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        const A: [f64; 6] = [
            -3.969683028665376e1,
            2.209460984245205e2,
            -2.759285104469687e2,
            1.38357751867269e2,
            -3.066479806614716e1,
            2.506628277459239,
        ];
        const B: [f64; 5] = [
            -5.447609879822406e1,
            1.615858368580409e2,
            -1.556989798598866e2,
            6.680131188771972e1,
            -1.328068155288572e1,
        ];
        const C: [f64; 6] = [
            -7.784894002430293e-3,
            -3.223964580411365e-1,
            -2.400758277161838,
            -2.549732539343734,
            4.374664141464968,
            2.938163982698783,
        ];
        const D: [f64; 4] = [
            7.784695709041462e-3,
            3.224671290700398e-1,
            2.445134137142996,
            3.754408661907416,
        ];
        const P_LOW: f64 = 0.02425;
        let x = if p < P_LOW {
            let q = math::sqrt(-2.0 * math::ln(p));
            (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
                / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
        } else if p <= 1.0 - P_LOW {
            let q = p - 0.5;
            let r = q * q;
            (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
                / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
        } else {
            let q = math::sqrt(-2.0 * math::ln(1.0 - p));
            -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
                / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
        };
        let e = normal_cdf(x) - p;
        let u = e * math::sqrt(2.0 * core::f64::consts::PI) * math::exp(x * x / 2.0);
        x - u / (1.0 + x * u / 2.0)
    }

    /// Upper tail `P(X > x)` of a chi-square with `k` degrees of freedom.
    pub fn chi2_sf(x: f64, k: f64) -> f64 {
        special::gamma_q(k / 2.0, x / 2.0)
    }

    /// Student t CDF with (possibly fractional) `dof`.
    pub fn t_cdf(t: f64, dof: f64) -> f64 {
        let tail = 0.5 * special::beta_inc(dof / 2.0, 0.5, dof / (dof + t * t));
        if t >= 0.0 {
            1.0 - tail
        } else {
            tail
        }
    }

    /// Two-sided p-value `P(|T| >= |t|)`.
    pub fn t_two_sided(t: f64, dof: f64) -> f64 {
        if t.is_infinite() {
            return 0.0;
        }
        special::beta_inc(dof / 2.0, 0.5, dof / (dof + t * t))
    }

    /// Student t quantile by bisection on the CDF.
    pub fn t_quantile(p: f64, dof: f64) -> f64 {
        if p == 0.5 {
            return 0.0;
        }
        let (mut lo, mut hi) = (-1e6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if t_cdf(mid, dof) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 * (1.0 + mid.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Statistics(format!("confidence level {level} not in (0, 1)")))
    }
}

/// `(x + 1) / (n + 2)`.
pub fn laplace(successes: u64, trials: u64) -> Result<f64> {
    if successes > trials {
        return Err(Error::SuccessesExceedTrials { successes, trials });
    }
    Ok((successes as f64 + 1.0) / (trials as f64 + 2.0))
}

/// Adjusted-Wald interval, clamped to `[0, 1]`. Returns `(center, low, high)`.
pub fn adjusted_wald(successes: u64, trials: u64, level: f64) -> Result<(f64, f64, f64)> {
    if successes > trials {
        return Err(Error::SuccessesExceedTrials { successes, trials });
    }
    if trials == 0 {
        return Err(Error::Statistics("adjusted-Wald needs at least one trial".into()));
    }
    check_level(level)?;
    let z = dist::normal_quantile(0.5 + level / 2.0);
    let z2 = z * z;
    let n_adj = trials as f64 + z2;
    let center = (successes as f64 + z2 / 2.0) / n_adj;
    let half = z * math::sqrt(center * (1.0 - center) / n_adj);
    Ok((
        center,
        math::clamp(center - half, 0.0, 1.0),
        math::clamp(center + half, 0.0, 1.0),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionEstimate {
    pub successes: u64,
    pub trials: u64,
    /// Laplace point estimate.
    pub point: f64,
    /// Adjusted-Wald center.
    pub center: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ProportionEstimate {
    pub fn new(successes: u64, trials: u64, level: f64) -> Result<Self> {
        let point = laplace(successes, trials)?;
        let (center, ci_low, ci_high) = adjusted_wald(successes, trials, level)?;
        Ok(Self {
            successes,
            trials,
            point,
            center,
            ci_low,
            ci_high,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    N1Chisq,
    TwoSampleT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub dof: f64,
    /// Inputs carried no information (e.g. a constant pooled table); the
    /// p-value is a convention, not evidence.
    pub degenerate: bool,
}

/// Two-proportion chi-square with the `(N - 1) / N` small-sample correction.
pub fn n1_chisq(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<TestResult> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Statistics("both groups need at least one trial".into()));
    }
    for (x, n) in [(x1, n1), (x2, n2)] {
        if x > n {
            return Err(Error::SuccessesExceedTrials {
                successes: x,
                trials: n,
            });
        }
    }
    let (a, b) = (x1 as f64, (n1 - x1) as f64);
    let (c, d) = (x2 as f64, (n2 - x2) as f64);
    let n = a + b + c + d;
    let succ = a + c;
    let fail = b + d;
    if succ == 0.0 || fail == 0.0 {
        return Ok(TestResult {
            test: TestKind::N1Chisq,
            statistic: 0.0,
            p_value: 1.0,
            dof: 1.0,
            degenerate: true,
        });
    }
    let cross = a * d - b * c;
    let statistic = cross * cross * (n - 1.0) / (n1 as f64 * n2 as f64 * succ * fail);
    Ok(TestResult {
        test: TestKind::N1Chisq,
        statistic,
        p_value: math::clamp(dist::chi2_sf(statistic, 1.0), 0.0, 1.0),
        dof: 1.0,
        degenerate: false,
    })
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance two-sample t-test, two-sided.
pub fn two_sample_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Statistics("each sample needs at least two values".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let same = ma == mb;
        return Ok(TestResult {
            test: TestKind::TwoSampleT,
            statistic: if same {
                0.0
            } else if ma > mb {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            },
            p_value: if same { 1.0 } else { 0.0 },
            dof: na + nb - 2.0,
            degenerate: true,
        });
    }
    let statistic = (ma - mb) / math::sqrt(se2);
    let dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TestResult {
        test: TestKind::TwoSampleT,
        statistic,
        p_value: math::clamp(dist::t_two_sided(statistic, dof), 0.0, 1.0),
        dof,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSummary {
    pub n: usize,
    pub geo_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Geometric mean and t-interval of positive times, computed on log scale.
pub fn geo_mean_ci(times: &[f64], level: f64) -> Result<TimeSummary> {
    check_level(level)?;
    if let Some(&bad) = times.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::Statistics(format!("time {bad} is not positive")));
    }
    let logs: Vec<f64> = times.iter().map(|&t| math::ln(t)).collect();
    let s = mean_ci(&logs, level)?;
    Ok(TimeSummary {
        n: s.n,
        geo_mean: math::exp(s.mean),
        ci_low: math::exp(s.ci_low),
        ci_high: math::exp(s.ci_high),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSummary {
    pub n: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Arithmetic mean with a t-interval (used for attempt counts).
pub fn mean_ci(values: &[f64], level: f64) -> Result<MeanSummary> {
    check_level(level)?;
    if values.len() < 2 {
        return Err(Error::Statistics(format!(
            "need at least two values, got {}",
            values.len()
        )));
    }
    let n = values.len();
    let (mean, var) = mean_var(values);
    let t = dist::t_quantile(0.5 + level / 2.0, (n - 1) as f64);
    let half = t * math::sqrt(var / n as f64);
    Ok(MeanSummary {
        n,
        mean,
        ci_low: mean - half,
        ci_high: mean + half,
    })
}

/// Failure percentages per boundary set, `(set, cutting %, grasping %)`.
pub const TABLE2_FIXTURE: [(u8, f64, f64); 8] = [
    (1, 64.0, 65.0),
    (2, 50.0, 42.0),
    (3, 64.0, 58.0),
    (4, 64.0, 73.0),
    (5, 71.0, 38.0),
    (6, 50.0, 65.0),
    (7, 50.0, 48.0),
    (8, 57.0, 44.0),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetFailure {
    pub set: u8,
    /// Failure rate in percent; `None` for an empty group.
    pub cutting: Option<f64>,
    pub grasping: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub task: Task,
    pub mean: f64,
    pub min: f64,
    /// Every set attaining the minimum (ties reported together).
    pub min_sets: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureTable {
    pub rows: Vec<SetFailure>,
    pub warnings: Vec<String>,
}

impl FailureTable {
    pub fn fixture() -> Self {
        Self {
            rows: TABLE2_FIXTURE
                .iter()
                .map(|&(set, c, g)| SetFailure {
                    set,
                    cutting: Some(c),
                    grasping: Some(g),
                })
                .collect(),
            warnings: Vec::new(),
        }
    }

    /// Failure rates from `(set, task, failed)` outcomes.
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = (u8, Task, bool)>) -> Self {
        let mut counts: Vec<(u8, [(u64, u64); 2])> = Vec::new();
        for (set, task, failed) in outcomes {
            let idx = match counts.iter().position(|(s, _)| *s == set) {
                Some(i) => i,
                None => {
                    counts.push((set, [(0, 0); 2]));
                    counts.len() - 1
                }
            };
            let cell = &mut counts[idx].1[task.index()];
            cell.1 += 1;
            if failed {
                cell.0 += 1;
            }
        }
        counts.sort_by_key(|(s, _)| *s);
        let mut warnings = Vec::new();
        let rows = counts
            .into_iter()
            .map(|(set, cells)| {
                let mut rate = |task: Task| {
                    let (f, n) = cells[task.index()];
                    if n == 0 {
                        warnings.push(format!("set {set}: no {} trials, excluded", task.name()));
                        None
                    } else {
                        Some(100.0 * f as f64 / n as f64)
                    }
                };
                SetFailure {
                    set,
                    cutting: rate(Task::Cutting),
                    grasping: rate(Task::Grasping),
                }
            })
            .collect();
        Self { rows, warnings }
    }

    pub fn column(&self, task: Task) -> Option<ColumnSummary> {
        let vals: Vec<(u8, f64)> = self
            .rows
            .iter()
            .filter_map(|r| {
                match task {
                    Task::Cutting => r.cutting,
                    Task::Grasping => r.grasping,
                }
                .map(|v| (r.set, v))
            })
            .collect();
        if vals.is_empty() {
            return None;
        }
        let mean = vals.iter().map(|v| v.1).sum::<f64>() / vals.len() as f64;
        let min = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        let min_sets = vals.iter().filter(|v| (v.1 - min).abs() < 1e-9).map(|v| v.0).collect();
        Some(ColumnSummary {
            task,
            mean,
            min,
            min_sets,
        })
    }
}
