//! Two-class Gaussian naive Bayes over [`GazeFeatures`] and the mapping from
//! its posterior to the intent confidence `ci`.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::{self, GazeFeatures, GazeSample, Screen, TRACK_LOSS_LIMIT, WINDOW_SPAN};
use crate::math;
use crate::rng;
use crate::vec::{Scene, Vec3};

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;

pub const FEATURE_NAMES: [&str; 3] = ["g1_max_dist", "g2_mean_dist", "g3_near_count"];

const MIN_EXAMPLES_PER_CLASS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Intent,
    NoIntent,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Intent => "intent",
            Label::NoIntent => "no_intent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub features: GazeFeatures,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub means: [f64; 3],
    pub variances: [f64; 3],
    pub prior: f64,
}

impl ClassStats {
    fn log_joint(&self, x: &[f64; 3]) -> f64 {
        let mut acc = math::ln(self.prior);
        for j in 0..3 {
            let var = self.variances[j];
            let d = x[j] - self.means[j];
            acc += -0.5 * math::ln(2.0 * core::f64::consts::PI * var) - d * d / (2.0 * var);
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub intent: ClassStats,
    pub no_intent: ClassStats,
    pub variance_floor: f64,
}

impl NaiveBayesModel {
    /// Maximum-likelihood fit with variances floored at `variance_floor`.
    pub fn fit(data: &[LabeledWindow]) -> Result<Self> {
        Self::fit_with_floor(data, DEFAULT_VARIANCE_FLOOR)
    }

    pub fn fit_with_floor(data: &[LabeledWindow], variance_floor: f64) -> Result<Self> {
        if !(variance_floor > 0.0) {
            return Err(Error::InvalidParameter("variance floor must be positive".into()));
        }
        let total = data.len() as f64;
        let fit_class = |label: Label| -> Result<ClassStats> {
            let rows: Vec<[f64; 3]> = data
                .iter()
                .filter(|w| w.label == label)
                .map(|w| w.features.to_array())
                .collect();
            match rows.len() {
                0 => return Err(Error::ClassAbsent(label.name())),
                n if n < MIN_EXAMPLES_PER_CLASS => {
                    return Err(Error::TooFewExamples {
                        class: label.name(),
                        have: n,
                        need: MIN_EXAMPLES_PER_CLASS,
                    })
                }
                _ => {}
            }
            let n = rows.len() as f64;
            let mut means = [0.0; 3];
            for r in &rows {
                for j in 0..3 {
                    means[j] += r[j];
                }
            }
            means.iter_mut().for_each(|m| *m /= n);
            let mut variances = [0.0; 3];
            for r in &rows {
                for j in 0..3 {
                    let d = r[j] - means[j];
                    variances[j] += d * d;
                }
            }
            variances.iter_mut().for_each(|v| *v = f64::max(*v / n, variance_floor));
            Ok(ClassStats {
                means,
                variances,
                prior: n / total,
            })
        };
        Ok(Self {
            intent: fit_class(Label::Intent)?,
            no_intent: fit_class(Label::NoIntent)?,
            variance_floor,
        })
    }

    /// Posterior probability of the `intent` class, evaluated in log space.
    pub fn posterior(&self, f: &GazeFeatures) -> f64 {
        let x = f.to_array();
        let log_odds = self.intent.log_joint(&x) - self.no_intent.log_joint(&x);
        logistic(log_odds)
    }

    pub fn predict(&self, f: &GazeFeatures) -> Label {
        if self.posterior(f) >= 0.5 {
            Label::Intent
        } else {
            Label::NoIntent
        }
    }

    pub fn accuracy(&self, data: &[LabeledWindow]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data.iter().filter(|w| self.predict(&w.features) == w.label).count();
        hits as f64 / data.len() as f64
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + math::exp(-z))
    } else {
        let e = math::exp(z);
        e / (1.0 + e)
    }
}

/// Rescales the intent posterior into `[0, 1]`, zero below even odds and
/// zero once tracking has been lost for more than [`TRACK_LOSS_LIMIT`].
pub fn confidence(p_intent: f64, track_loss: f64) -> f64 {
    if track_loss > TRACK_LOSS_LIMIT || !(p_intent >= 0.5) {
        return 0.0;
    }
    math::clamp((p_intent - 0.5) / 0.5, 0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntentEstimate {
    pub p_intent: f64,
    pub ci: f64,
    pub target: Option<Vec3<Scene>>,
}

impl IntentEstimate {
    pub const NONE: Self = Self {
        p_intent: 0.0,
        ci: 0.0,
        target: None,
    };
}

/// Builds labeled windows from a recorded session.
///
/// Each confirmation at time `c` labels the valid samples in `[c - 2 s, c)`
/// as `intent`. The rest of the recording is tiled into non-overlapping 2 s
/// windows labeled `no_intent`; tiles touching an intent interval are
/// dropped. Windows with too few valid samples are skipped.
pub fn label_corpus(stream: &[GazeSample], confirms: &[f64]) -> Vec<LabeledWindow> {
    let smoothed = gaze::smooth(stream);
    let window_features = |lo: f64, hi: f64| -> Option<GazeFeatures> {
        let pts: Vec<(f64, f64)> = smoothed
            .iter()
            .filter(|s| s.valid && s.t >= lo && s.t < hi)
            .map(|s| (s.x, s.y))
            .collect();
        if pts.len() < gaze::MIN_WINDOW_SAMPLES {
            return None;
        }
        GazeFeatures::from_points(pts).ok()
    };

    let mut out = Vec::new();
    for &c in confirms {
        if let Some(features) = window_features(c - WINDOW_SPAN, c) {
            out.push(LabeledWindow {
                features,
                label: Label::Intent,
            });
        }
    }

    let (Some(first), Some(last)) = (stream.first(), stream.last()) else {
        return out;
    };
    let mut lo = first.t;
    while lo + WINDOW_SPAN <= last.t + 1e-12 {
        let hi = lo + WINDOW_SPAN;
        let overlaps = confirms.iter().any(|&c| lo < c && hi > c - WINDOW_SPAN);
        if !overlaps {
            if let Some(features) = window_features(lo, hi) {
                out.push(LabeledWindow {
                    features,
                    label: Label::NoIntent,
                });
            }
        }
        lo = hi;
    }
    out
}

/// Splits off a seeded `holdout_fraction` of `data` for evaluation.
pub fn train_test_split(
    data: &[LabeledWindow],
    holdout_fraction: f64,
    seed: u64,
) -> (Vec<LabeledWindow>, Vec<LabeledWindow>) {
    let mut shuffled = data.to_vec();
    rng::shuffle(&mut rng::seeded(seed), &mut shuffled);
    let n_test = math::round(shuffled.len() as f64 * holdout_fraction) as usize;
    let test = shuffled.split_off(shuffled.len() - n_test);
    (shuffled, test)
}

/// Synthetic gaze generators standing in for recorded volunteers.
pub mod synthetic {
    use super::*;

    /// Gaze sampling rate of the synthetic streams, Hz.
    pub const GAZE_RATE: f64 = 20.0;

    /// Default fixation jitter, pixels.
    pub const FIXATION_JITTER: f64 = 15.0;

    /// Per-sample probability that a scanning gaze jumps elsewhere.
    pub const SCAN_JUMP_PROBABILITY: f64 = 0.35;

    fn samples_per_window() -> usize {
        (WINDOW_SPAN * GAZE_RATE) as usize
    }

    fn clamp_to_screen(screen: &Screen, x: f64, y: f64) -> (f64, f64) {
        (
            math::clamp(x, 0.0, f64::from(screen.width) - 1e-6),
            math::clamp(y, 0.0, f64::from(screen.height) - 1e-6),
        )
    }

    /// Two seconds of gaze dwelling on one random point.
    pub fn fixating_window<R: Rng + ?Sized>(rng: &mut R, screen: &Screen, t0: f64, jitter: f64) -> Vec<GazeSample> {
        let cx = rng::uniform(rng, 40.0, f64::from(screen.width) - 40.0);
        let cy = rng::uniform(rng, 40.0, f64::from(screen.height) - 40.0);
        (0..samples_per_window())
            .map(|i| {
                let (x, y) = clamp_to_screen(screen, rng::normal(rng, cx, jitter), rng::normal(rng, cy, jitter));
                GazeSample::valid(t0 + i as f64 / GAZE_RATE, x, y)
            })
            .collect()
    }

    /// Two seconds of gaze jumping between uniformly drawn screen points.
    pub fn scanning_window<R: Rng + ?Sized>(rng: &mut R, screen: &Screen, t0: f64, jitter: f64) -> Vec<GazeSample> {
        let w = f64::from(screen.width);
        let h = f64::from(screen.height);
        let mut anchor = (rng::uniform(rng, 0.0, w), rng::uniform(rng, 0.0, h));
        (0..samples_per_window())
            .map(|i| {
                if rng.gen::<f64>() < SCAN_JUMP_PROBABILITY {
                    anchor = (rng::uniform(rng, 0.0, w), rng::uniform(rng, 0.0, h));
                }
                let (x, y) = clamp_to_screen(
                    screen,
                    rng::normal(rng, anchor.0, jitter),
                    rng::normal(rng, anchor.1, jitter),
                );
                GazeSample::valid(t0 + i as f64 / GAZE_RATE, x, y)
            })
            .collect()
    }

    fn window_features(samples: &[GazeSample]) -> GazeFeatures {
        let smoothed = gaze::smooth(samples);
        GazeFeatures::from_points(smoothed.iter().map(|s| (s.x, s.y)).collect::<Vec<_>>())
            .expect("synthetic windows are never empty")
    }

    /// `per_class` fixating windows labeled `intent` followed by `per_class`
    /// scanning windows labeled `no_intent`.
    pub fn corpus(per_class: usize, seed: u64) -> Vec<LabeledWindow> {
        let screen = Screen::default();
        let mut rng = rng::seeded(seed);
        let mut out = Vec::with_capacity(2 * per_class);
        for _ in 0..per_class {
            let w = fixating_window(&mut rng, &screen, 0.0, FIXATION_JITTER);
            out.push(LabeledWindow {
                features: window_features(&w),
                label: Label::Intent,
            });
        }
        for _ in 0..per_class {
            let w = scanning_window(&mut rng, &screen, 0.0, FIXATION_JITTER);
            out.push(LabeledWindow {
                features: window_features(&w),
                label: Label::NoIntent,
            });
        }
        out
    }

    /// Model trained on the default synthetic corpus; the simulator's
    /// stand-in for a model trained on recorded volunteers.
    pub fn default_model(seed: u64) -> NaiveBayesModel {
        NaiveBayesModel::fit(&corpus(200, seed)).expect("synthetic corpus has both classes")
    }
}
