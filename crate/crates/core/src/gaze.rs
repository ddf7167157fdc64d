//! Gaze stream processing: causal smoothing, the rolling two-second window of
//! valid samples, and the three dispersion features fed to the classifier.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Moving-average kernel length.
pub const SMOOTHING_POINTS: usize = 5;

/// Span of the valid-data window, seconds.
pub const WINDOW_SPAN: f64 = 2.0;

/// Fewer valid samples than this carry no fixation evidence.
pub const MIN_WINDOW_SAMPLES: usize = 5;

/// Confidence is forced to zero once the eyes have been lost for longer
/// than this many seconds.
pub const TRACK_LOSS_LIMIT: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Screen {
    pub width: u32,
    pub height: u32,
}

impl Default for Screen {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
        }
    }
}

impl Screen {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < f64::from(self.width) && y < f64::from(self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    /// Seconds on the caller's clock.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Both eyes tracked. Coordinates of an invalid sample are meaningless.
    pub valid: bool,
}

impl GazeSample {
    pub fn valid(t: f64, x: f64, y: f64) -> Self {
        Self { t, x, y, valid: true }
    }

    pub fn invalid(t: f64) -> Self {
        Self {
            t,
            x: 0.0,
            y: 0.0,
            valid: false,
        }
    }
}

/// Streaming trailing moving average over the last [`SMOOTHING_POINTS`]
/// consecutive valid samples. An invalid sample resets the run.
#[derive(Debug, Clone, Default)]
pub struct Smoother {
    run: VecDeque<(f64, f64)>,
}

impl Smoother {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, s: GazeSample) -> GazeSample {
        if !s.valid {
            self.run.clear();
            return s;
        }
        if self.run.len() == SMOOTHING_POINTS {
            self.run.pop_front();
        }
        self.run.push_back((s.x, s.y));
        let n = self.run.len() as f64;
        let (sx, sy) = self.run.iter().fold((0.0, 0.0), |(ax, ay), &(x, y)| (ax + x, ay + y));
        GazeSample {
            x: sx / n,
            y: sy / n,
            ..s
        }
    }

    pub fn reset(&mut self) {
        self.run.clear();
    }
}

/// Smooths a whole recorded stream.
pub fn smooth(stream: &[GazeSample]) -> Vec<GazeSample> {
    let mut smoother = Smoother::new();
    stream.iter().map(|&s| smoother.push(s)).collect()
}

/// Seconds since the newest valid sample in `stream`, or `f64::INFINITY`
/// when no valid sample exists.
pub fn track_loss_elapsed(stream: &[GazeSample], now: f64) -> f64 {
    stream
        .iter()
        .rev()
        .find(|s| s.valid)
        .map_or(f64::INFINITY, |s| now - s.t)
}

/// The last [`WINDOW_SPAN`] seconds of valid (smoothed) gaze samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeWindow {
    samples: VecDeque<GazeSample>,
    span: f64,
    centroid: Option<(f64, f64)>,
    newest_t: Option<f64>,
}

impl Default for GazeWindow {
    fn default() -> Self {
        Self::new(WINDOW_SPAN)
    }
}

impl GazeWindow {
    pub fn new(span: f64) -> Self {
        Self {
            samples: VecDeque::new(),
            span,
            centroid: None,
            newest_t: None,
        }
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &GazeSample> {
        self.samples.iter()
    }

    pub fn centroid(&self) -> Option<(f64, f64)> {
        self.centroid
    }

    /// Adds `s` (if valid) and evicts everything older than `now - span`.
    ///
    /// A sample older than any sample already seen is rejected and leaves
    /// the window untouched.
    pub fn update(&mut self, s: GazeSample, now: f64) -> Result<()> {
        if let Some(newest) = self.newest_t {
            if s.t < newest {
                return Err(Error::OutOfOrder { t: s.t, newest });
            }
        }
        self.newest_t = Some(s.t);
        if s.valid {
            self.samples.push_back(s);
        }
        let cutoff = now - self.span;
        while self.samples.front().is_some_and(|f| f.t < cutoff) {
            self.samples.pop_front();
        }
        self.centroid = centroid(self.samples.iter().map(|s| (s.x, s.y)));
        Ok(())
    }

    /// Features of the current window; needs [`MIN_WINDOW_SAMPLES`].
    pub fn features(&self) -> Result<GazeFeatures> {
        if self.samples.len() < MIN_WINDOW_SAMPLES {
            return Err(Error::InsufficientData {
                have: self.samples.len(),
                need: MIN_WINDOW_SAMPLES,
            });
        }
        GazeFeatures::from_points(self.samples.iter().map(|s| (s.x, s.y)))
    }
}

fn centroid(points: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    let (n, sx, sy) = points.fold((0usize, 0.0, 0.0), |(n, sx, sy), (x, y)| (n + 1, sx + x, sy + y));
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

/// Dispersion of a fixation cluster around its centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeFeatures {
    /// Largest sample-to-centroid distance, pixels.
    pub g1_max_dist: f64,
    /// Mean sample-to-centroid distance, pixels.
    pub g2_mean_dist: f64,
    /// Samples strictly closer to the centroid than the mean distance.
    pub g3_near_count: u32,
}

impl GazeFeatures {
    pub fn from_points<I>(points: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
        I::IntoIter: Clone,
    {
        let points = points.into_iter();
        let (cx, cy) = centroid(points.clone()).ok_or(Error::InsufficientData { have: 0, need: 1 })?;
        let dists: Vec<f64> = points.map(|(x, y)| math::hypot(x - cx, y - cy)).collect();
        let max = dists.iter().copied().fold(0.0, f64::max);
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        let near = dists.iter().filter(|&&d| d < mean).count() as u32;
        Ok(Self {
            g1_max_dist: max,
            g2_mean_dist: mean,
            g3_near_count: near,
        })
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.g1_max_dist, self.g2_mean_dist, f64::from(self.g3_near_count)]
    }
}

/// Smoother, window and tracking-loss clock wired together in the order a
/// live tick consumes them.
#[derive(Debug, Clone, Default)]
pub struct GazePipeline {
    smoother: Smoother,
    window: GazeWindow,
    last_valid: Option<f64>,
}

impl GazePipeline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, raw: GazeSample) -> Result<()> {
        let s = self.smoother.push(raw);
        self.window.update(s, s.t)?;
        if s.valid {
            self.last_valid = Some(s.t);
        }
        Ok(())
    }

    pub fn window(&self) -> &GazeWindow {
        &self.window
    }

    pub fn track_loss(&self, now: f64) -> f64 {
        self.last_valid.map_or(f64::INFINITY, |t| now - t)
    }
}
