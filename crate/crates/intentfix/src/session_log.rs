//! Per-session logs of live runs and their offline replay.
//!
//! A log is JSONL: a `segment` line (configuration, scene and model) starts
//! each configure/reset, followed by one `tick` line per control tick with
//! the input that was applied and the row the simulator produced.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use intentfix_core::classifier::NaiveBayesModel;
use intentfix_core::scene::SceneModel;
use intentfix_core::sim::{OperatorInput, SimConfig, Simulator, StepRow};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::cache::FieldCache;

pub const SESSION_SCHEMA: &str = "intentfix.session/1";

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LineOut<'a> {
    Segment {
        schema: &'a str,
        session: u64,
        segment: u32,
        config: &'a SimConfig,
        scene: &'a SceneModel,
        model: &'a NaiveBayesModel,
    },
    Tick {
        input: &'a OperatorInput,
        row: &'a StepRow,
    },
}

#[derive(Deserialize)]
struct LineIn<'a> {
    kind: String,
    #[serde(borrow, default)]
    row: Option<&'a RawValue>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LineParsed {
    Segment {
        schema: String,
        #[allow(dead_code)]
        session: u64,
        #[allow(dead_code)]
        segment: u32,
        config: SimConfig,
        scene: SceneModel,
        model: NaiveBayesModel,
    },
    Tick {
        input: OperatorInput,
        #[allow(dead_code)]
        row: serde::de::IgnoredAny,
    },
}

pub struct SessionLogWriter {
    path: PathBuf,
    w: BufWriter<File>,
    session: u64,
    segment: u32,
}

impl SessionLogWriter {
    pub fn create(dir: &Path, session: u64) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("session-{session}.jsonl"));
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            path,
            w: BufWriter::new(f),
            session,
            segment: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn segment(&mut self, config: &SimConfig, scene: &SceneModel, model: &NaiveBayesModel) -> Result<()> {
        self.segment += 1;
        let line = LineOut::Segment {
            schema: SESSION_SCHEMA,
            session: self.session,
            segment: self.segment,
            config,
            scene,
            model,
        };
        serde_json::to_writer(&mut self.w, &line)?;
        self.w.write_all(b"\n")?;
        self.w.flush()?;
        Ok(())
    }

    pub fn tick(&mut self, input: &OperatorInput, row: &StepRow) -> Result<()> {
        serde_json::to_writer(&mut self.w, &LineOut::Tick { input, row })?;
        self.w.write_all(b"\n")?;
        self.w.flush()?;
        Ok(())
    }
}

/// One configure/reset span of a live session.
#[derive(Debug, Clone)]
pub struct Segment {
    pub config: SimConfig,
    pub scene: SceneModel,
    pub model: NaiveBayesModel,
    pub inputs: Vec<OperatorInput>,
    /// Rows exactly as serialized by the live session.
    pub rows_json: Vec<String>,
}

pub fn read_session_log(path: &Path) -> Result<Vec<Segment>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out: Vec<Segment> = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{}: line {}", path.display(), i + 1);
        let raw: LineIn = serde_json::from_str(&line).with_context(at)?;
        let parsed: LineParsed = serde_json::from_str(&line).with_context(at)?;
        match parsed {
            LineParsed::Segment {
                schema,
                config,
                scene,
                model,
                ..
            } => {
                if schema != SESSION_SCHEMA {
                    bail!("{}: unsupported schema `{schema}`", at());
                }
                out.push(Segment {
                    config,
                    scene,
                    model,
                    inputs: Vec::new(),
                    rows_json: Vec::new(),
                });
            }
            LineParsed::Tick { input, .. } => {
                let seg = out
                    .last_mut()
                    .ok_or_else(|| anyhow!("{}: tick before any segment", at()))?;
                let row = raw
                    .row
                    .ok_or_else(|| anyhow!("{}: {} line without row", at(), raw.kind))?;
                seg.inputs.push(input);
                seg.rows_json.push(row.get().to_string());
            }
        }
    }
    Ok(out)
}

/// Runs the recorded inputs of `seg` through a fresh offline simulator.
pub fn replay_segment(seg: &Segment, cache: &FieldCache) -> Result<Vec<StepRow>> {
    let field = cache.field(seg.config.fixture.field_params())?;
    let mut sim = Simulator::with_field(seg.config, seg.scene.clone(), seg.model.clone(), field)?;
    Ok(seg.inputs.iter().map(|i| sim.step(i)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayCheck {
    pub segments: usize,
    pub ticks: usize,
    /// `(segment, tick)` of rows whose serialization differs.
    pub mismatches: Vec<(usize, usize)>,
}

/// Replays every segment and compares serialized rows byte for byte.
pub fn verify_session_log(path: &Path) -> Result<ReplayCheck> {
    let cache = FieldCache::new();
    let segs = read_session_log(path)?;
    let mut check = ReplayCheck {
        segments: segs.len(),
        ticks: 0,
        mismatches: Vec::new(),
    };
    for (si, seg) in segs.iter().enumerate() {
        let rows = replay_segment(seg, &cache)?;
        for (ti, (row, recorded)) in rows.iter().zip(&seg.rows_json).enumerate() {
            check.ticks += 1;
            if serde_json::to_string(row)? != *recorded {
                check.mismatches.push((si, ti));
            }
        }
    }
    Ok(check)
}
