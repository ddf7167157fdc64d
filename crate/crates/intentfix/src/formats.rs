//! On-disk formats: gaze and event CSV, model and scene JSON, trial JSONL.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use intentfix_core::classifier::{ClassStats, NaiveBayesModel, FEATURE_NAMES};
use intentfix_core::gaze::GazeSample;
use intentfix_core::scene::{Camera, Floor, SceneModel, SceneObject};
use intentfix_core::sim::{OperatorConfig, Outcome, SimConfig, StepRow, TrialRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const MODEL_SCHEMA: &str = "intentfix.model/1";
pub const SCENE_SCHEMA: &str = "intentfix.scene/1";
pub const TRIAL_SCHEMA: &str = "intentfix.trial/1";

/// Parses JSON text, reporting the path of the offending field on failure.
pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow!("at `{path}`: {}", e.into_inner())
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    from_json_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn parse_valid(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

fn parse_f64(raw: &str, column: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| anyhow!("column `{column}`: `{raw}` is not a number"))
}

fn csv_records(path: &Path, expected: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = reader
        .headers()
        .with_context(|| format!("{}: header", path.display()))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        bail!(
            "{}: line 1: expected header `{}`, found `{}`",
            path.display(),
            expected.join(","),
            got.join(",")
        );
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            anyhow!("{}: line {line}: {e}", path.display())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

/// Reads a `t,x,y,valid` gaze recording. Invalid samples may leave `x` and
/// `y` empty.
pub fn read_gaze_csv(path: &Path) -> Result<Vec<GazeSample>> {
    let mut out = Vec::new();
    for (line, rec) in csv_records(path, &["t", "x", "y", "valid"])? {
        let parsed = (|| -> Result<GazeSample> {
            let t = parse_f64(&rec[0], "t")?;
            let valid =
                parse_valid(&rec[3]).ok_or_else(|| anyhow!("column `valid`: `{}` is not 0/1/true/false", &rec[3]))?;
            if !valid {
                return Ok(GazeSample::invalid(t));
            }
            Ok(GazeSample::valid(t, parse_f64(&rec[1], "x")?, parse_f64(&rec[2], "y")?))
        })();
        let sample = parsed.map_err(|e| anyhow!("{}: line {line}: {e}", path.display()))?;
        if let Some(prev) = out.last().map(|s: &GazeSample| s.t) {
            if sample.t < prev {
                bail!("{}: line {line}: time {} goes backwards", path.display(), sample.t);
            }
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn write_gaze_csv(path: &Path, samples: &[GazeSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "x", "y", "valid"])?;
    for s in samples {
        if s.valid {
            w.write_record([s.t.to_string(), s.x.to_string(), s.y.to_string(), "1".into()])?;
        } else {
            w.write_record([s.t.to_string(), String::new(), String::new(), "0".into()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a `t,event` file and returns the times of `confirm` events.
pub fn read_events_csv(path: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (line, rec) in csv_records(path, &["t", "event"])? {
        let t = parse_f64(&rec[0], "t").map_err(|e| anyhow!("{}: line {line}: {e}", path.display()))?;
        match &rec[1] {
            "confirm" => out.push(t),
            other => bail!("{}: line {line}: unknown event `{other}`", path.display()),
        }
    }
    Ok(out)
}

pub fn write_events_csv(path: &Path, confirms: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "event"])?;
    for t in confirms {
        w.write_record([t.to_string(), "confirm".into()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: String,
    pub feature_names: Vec<String>,
    pub variance_floor: f64,
    pub classes: BTreeMap<String, ClassStats>,
}

impl ModelFile {
    pub fn from_model(m: &NaiveBayesModel) -> Self {
        Self {
            schema: MODEL_SCHEMA.into(),
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            variance_floor: m.variance_floor,
            classes: BTreeMap::from([("intent".into(), m.intent), ("no_intent".into(), m.no_intent)]),
        }
    }

    pub fn into_model(self) -> Result<NaiveBayesModel> {
        if self.schema != MODEL_SCHEMA {
            bail!("unsupported model schema `{}`", self.schema);
        }
        if self.feature_names != FEATURE_NAMES {
            bail!(
                "feature names {:?} do not match {:?}",
                self.feature_names,
                FEATURE_NAMES
            );
        }
        let class = |name: &str| {
            self.classes
                .get(name)
                .copied()
                .ok_or_else(|| anyhow!("class absent from model: {name}"))
        };
        let m = NaiveBayesModel {
            intent: class("intent")?,
            no_intent: class("no_intent")?,
            variance_floor: self.variance_floor,
        };
        for c in [&m.intent, &m.no_intent] {
            if !(c.prior > 0.0 && c.prior < 1.0) || c.variances.iter().any(|v| !(*v > 0.0)) {
                bail!("model has a non-positive prior or variance");
            }
        }
        Ok(m)
    }
}

pub fn save_model(path: &Path, model: &NaiveBayesModel) -> Result<()> {
    write_json(path, &ModelFile::from_model(model))
}

pub fn load_model(path: &Path) -> Result<NaiveBayesModel> {
    read_json::<ModelFile>(path)?.into_model()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub schema: String,
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub camera: Camera,
    #[serde(default)]
    pub floor: Floor,
}

impl SceneFile {
    pub fn from_scene(scene: &SceneModel) -> Self {
        Self {
            schema: SCENE_SCHEMA.into(),
            objects: scene.objects.clone(),
            camera: scene.camera,
            floor: scene.floor,
        }
    }

    pub fn into_scene(self) -> Result<SceneModel> {
        if self.schema != SCENE_SCHEMA {
            bail!("unsupported scene schema `{}`", self.schema);
        }
        let scene = SceneModel {
            objects: self.objects,
            camera: self.camera,
            floor: self.floor,
        };
        scene.validate()?;
        Ok(scene)
    }
}

pub fn load_scene(path: &Path) -> Result<SceneModel> {
    read_json::<SceneFile>(path)?
        .into_scene()
        .with_context(|| format!("scene {}", path.display()))
}

pub fn save_scene(path: &Path, scene: &SceneModel) -> Result<()> {
    write_json(path, &SceneFile::from_scene(scene))
}

/// One line of a trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialLine {
    Trial {
        schema: String,
        trial: u32,
        seed: u64,
        config: SimConfig,
        operator: OperatorConfig,
        scene: SceneModel,
    },
    Row(StepRow),
    Outcome {
        schema: String,
        outcome: Outcome,
        completion_time: f64,
        attempts: u32,
    },
}

pub fn write_trials<W: Write>(mut w: W, records: &[TrialRecord]) -> Result<()> {
    for r in records {
        let header = TrialLine::Trial {
            schema: TRIAL_SCHEMA.into(),
            trial: r.trial,
            seed: r.seed,
            config: r.config,
            operator: r.operator,
            scene: r.scene.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for row in &r.rows {
            serde_json::to_writer(&mut w, &TrialLine::Row(row.clone()))?;
            w.write_all(b"\n")?;
        }
        let tail = TrialLine::Outcome {
            schema: TRIAL_SCHEMA.into(),
            outcome: r.outcome,
            completion_time: r.completion_time,
            attempts: r.attempts,
        };
        serde_json::to_writer(&mut w, &tail)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trials(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_trials(BufWriter::new(f), records)
}

pub fn load_trials(path: &Path) -> Result<Vec<TrialRecord>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    let mut open: Option<TrialRecord> = None;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TrialLine = from_json_str(&line).with_context(|| format!("{}: line {n}", path.display()))?;
        let check = |schema: &str| {
            if schema == TRIAL_SCHEMA {
                Ok(())
            } else {
                Err(anyhow!(
                    "{}: line {n}: schema `{schema}` mixed with `{TRIAL_SCHEMA}`",
                    path.display()
                ))
            }
        };
        match parsed {
            TrialLine::Trial {
                schema,
                trial,
                seed,
                config,
                operator,
                scene,
            } => {
                check(&schema)?;
                if open.is_some() {
                    bail!(
                        "{}: line {n}: trial started before the previous one ended",
                        path.display()
                    );
                }
                open = Some(TrialRecord {
                    trial,
                    seed,
                    config,
                    operator,
                    scene,
                    rows: Vec::new(),
                    outcome: Outcome::FailWrongLocation,
                    completion_time: 0.0,
                    attempts: 0,
                });
            }
            TrialLine::Row(row) => match open.as_mut() {
                Some(r) => r.rows.push(row),
                None => bail!("{}: line {n}: row outside a trial", path.display()),
            },
            TrialLine::Outcome {
                schema,
                outcome,
                completion_time,
                attempts,
            } => {
                check(&schema)?;
                let mut r = open
                    .take()
                    .ok_or_else(|| anyhow!("{}: line {n}: outcome outside a trial", path.display()))?;
                r.outcome = outcome;
                r.completion_time = completion_time;
                r.attempts = attempts;
                out.push(r);
            }
        }
    }
    if open.is_some() {
        bail!("{}: last trial has no outcome line", path.display());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use intentfix_core::classifier::synthetic;
    use intentfix_core::rng;
    use intentfix_core::sim::{run_trial, scenario};

    #[test]
    fn gaze_csv_round_trip_and_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let samples = vec![
            GazeSample::valid(0.0, 1.5, 2.25),
            GazeSample::invalid(0.05),
            GazeSample::valid(0.1, 3.0, 4.0),
        ];
        write_gaze_csv(&p, &samples).unwrap();
        assert_eq!(read_gaze_csv(&p).unwrap(), samples);

        std::fs::write(&p, "t,x,y,valid\n0,1,2,1\n0.05,abc,2,1\n").unwrap();
        let err = read_gaze_csv(&p).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("`x`"), "{err}");

        std::fs::write(&p, "time,x,y,valid\n").unwrap();
        assert!(read_gaze_csv(&p).unwrap_err().to_string().contains("line 1"));
    }

    #[test]
    fn events_reject_unknown_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        std::fs::write(&p, "t,event\n1.5,confirm\n2.0,sneeze\n").unwrap();
        assert!(read_events_csv(&p).unwrap_err().to_string().contains("line 3"));
        write_events_csv(&p, &[1.5, 4.0]).unwrap();
        assert_eq!(read_events_csv(&p).unwrap(), vec![1.5, 4.0]);
    }

    #[test]
    fn model_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = synthetic::default_model(3);
        save_model(&p, &m).unwrap();
        assert_eq!(load_model(&p).unwrap(), m);
    }

    #[test]
    fn trial_log_round_trip_and_schema_checks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let scene = scenario::grasping(&mut rng::seeded(2));
        let cfg = SimConfig {
            timeout: 3.0,
            ..SimConfig::default()
        };
        let rec = run_trial(cfg, scene, OperatorConfig::default(), &synthetic::default_model(1)).unwrap();
        save_trials(&p, &[rec.clone(), rec.clone()]).unwrap();
        assert_eq!(load_trials(&p).unwrap(), vec![rec.clone(), rec]);

        let text = std::fs::read_to_string(&p).unwrap();
        let bad = text.replacen(TRIAL_SCHEMA, "intentfix.trial/9", 1);
        std::fs::write(&p, bad).unwrap();
        assert!(load_trials(&p).unwrap_err().to_string().contains("mixed"));

        let truncated: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        std::fs::write(&p, truncated).unwrap();
        assert!(load_trials(&p).is_err());
    }

    #[test]
    fn scene_file_validates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let scene = scenario::cutting(&mut rng::seeded(5));
        save_scene(&p, &scene).unwrap();
        assert_eq!(load_scene(&p).unwrap(), scene);
        std::fs::write(&p, r#"{"schema":"intentfix.scene/1","objects":[]}"#).unwrap();
        assert!(load_scene(&p).is_err());
        std::fs::write(&p, r#"{"schema":"intentfix.scene/1","objects":[],"extra":1}"#).unwrap();
        assert!(format!("{:#}", load_scene(&p).unwrap_err()).contains("extra"));
    }
}
