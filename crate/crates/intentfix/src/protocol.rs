//! JSON wire format of the live bridge (`proto: 1`).

use intentfix_core::fixtures::BoundaryParams;
use intentfix_core::scene::SceneModel;
use intentfix_core::sim::{AssistMode, FixtureConfig, OperatorInput, Outcome, SimConfig, StepRow, Task};
use intentfix_core::{Scene, Vec3};
use serde::{Deserialize, Serialize};

pub const PROTO: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Xyz {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Xy {
    pub x: f64,
    pub y: f64,
}

/// Session settings a client may send with `configure`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionConfig {
    pub task: Task,
    pub mode: AssistMode,
    pub fixture: FixtureConfig,
    pub timeout: f64,
    /// Explicit scene; otherwise one is generated from `scene_seed`.
    pub scene: Option<SceneModel>,
    pub scene_seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            task: Task::Grasping,
            mode: AssistMode::NONE,
            fixture: FixtureConfig::default(),
            timeout: 120.0,
            scene: None,
            scene_seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            task: self.task,
            mode: self.mode,
            fixture: self.fixture,
            timeout: self.timeout,
            ..SimConfig::default()
        }
    }

    pub fn scene(&self) -> SceneModel {
        self.scene.clone().unwrap_or_else(|| {
            let mut rng = intentfix_core::rng::seeded(self.scene_seed);
            intentfix_core::sim::scenario::for_task(self.task, &mut rng)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMsg {
    Configure {
        #[serde(default)]
        proto: Option<u32>,
        #[serde(default)]
        config: SessionConfig,
    },
    Input {
        t: f64,
        pointer: Xyz,
        gaze_px: Option<Xy>,
        button: bool,
    },
    Reset {},
    Pause {},
    Resume {},
}

impl ClientMsg {
    pub fn input(i: &OperatorInput) -> Self {
        ClientMsg::Input {
            t: i.t,
            pointer: Xyz {
                x: i.pointer.x,
                y: i.pointer.y,
                z: i.pointer.z,
            },
            gaze_px: i.gaze_px.map(|[x, y]| Xy { x, y }),
            button: i.button,
        }
    }
}

pub fn operator_input(t: f64, pointer: Xyz, gaze_px: Option<Xy>, button: bool) -> OperatorInput {
    OperatorInput {
        t,
        pointer: Vec3::<Scene>::new(pointer.x, pointer.y, pointer.z),
        gaze_px: gaze_px.map(|g| [g.x, g.y]),
        button,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMsg {
    pub proto: u32,
    pub session: u64,
    /// Bumped by every `configure` and `reset`; the simulation restarts at `t = 0`.
    pub segment: u32,
    pub tick: u64,
    pub t: f64,
    pub effector: [f64; 3],
    pub target: Option<[f64; 3]>,
    pub p_intent: f64,
    pub ci: f64,
    pub sci: f64,
    pub gf: [f64; 3],
    pub boundary: Option<BoundaryParams>,
    pub attempts: u32,
    pub gripper_closed: bool,
    pub outcome: Option<Outcome>,
    pub completion_time: Option<f64>,
    pub paused: bool,
}

impl StateMsg {
    pub fn from_row(
        session: u64,
        segment: u32,
        tick: u64,
        row: &StepRow,
        completion_time: Option<f64>,
        paused: bool,
    ) -> Self {
        Self {
            proto: PROTO,
            session,
            segment,
            tick,
            t: row.t,
            effector: row.effector.to_array(),
            target: row.target.map(|p| p.to_array()),
            p_intent: row.p_intent,
            ci: row.ci,
            sci: row.sci,
            gf: row.gf.to_array(),
            boundary: row.boundary,
            attempts: row.attempts,
            gripper_closed: row.gripper_closed,
            outcome: row.outcome,
            completion_time,
            paused,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    State(StateMsg),
    Error { code: String, detail: String },
}

impl ServerMsg {
    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        ServerMsg::Error {
            code: code.into(),
            detail: detail.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        let m: ClientMsg = serde_json::from_str(
            r#"{"type":"input","t":0.1,"pointer":{"x":0,"y":0.1,"z":0.2},"gaze_px":{"x":320,"y":240},"button":false}"#,
        )
        .unwrap();
        assert!(matches!(m, ClientMsg::Input { gaze_px: Some(_), .. }));
        let m: ClientMsg = serde_json::from_str(
            r#"{"type":"input","t":0,"pointer":{"x":0,"y":0,"z":0},"gaze_px":null,"button":true}"#,
        )
        .unwrap();
        assert!(matches!(
            m,
            ClientMsg::Input {
                gaze_px: None,
                button: true,
                ..
            }
        ));
        let m: ClientMsg =
            serde_json::from_str(r#"{"type":"configure","proto":1,"config":{"task":"cutting"}}"#).unwrap();
        assert!(matches!(
            m,
            ClientMsg::Configure {
                config: SessionConfig {
                    task: Task::Cutting,
                    ..
                },
                ..
            }
        ));
        assert_eq!(
            serde_json::from_str::<ClientMsg>(r#"{"type":"pause"}"#).unwrap(),
            ClientMsg::Pause {}
        );
        assert!(serde_json::from_str::<ClientMsg>(r#"{"type":"pause","extra":1}"#).is_err());
        assert!(serde_json::from_str::<ClientMsg>(r#"{"type":"jump"}"#).is_err());
    }

    #[test]
    fn boundary_serializes_with_short_names() {
        let b = BoundaryParams::preset(2, Vec3::zero(), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let v = serde_json::to_value(b).unwrap();
        for k in ["S", "H", "theta", "center", "axis"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        let e = serde_json::to_value(ServerMsg::error("bad_json", "x")).unwrap();
        assert_eq!(e["type"], "error");
        assert_eq!(e["code"], "bad_json");
    }
}
