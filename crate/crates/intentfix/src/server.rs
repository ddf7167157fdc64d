//! Live WebSocket bridge: one closed-loop simulator per connection, ticked
//! on the wall clock.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use futures_util::{SinkExt, StreamExt};
use intentfix_core::classifier::NaiveBayesModel;
use intentfix_core::sim::{OperatorInput, Simulator, StepRow};
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;
use tokio_tungstenite::tungstenite::Message;

use crate::cache::FieldCache;
use crate::protocol::{operator_input, ClientMsg, ServerMsg, SessionConfig, StateMsg, PROTO};
use crate::session_log::SessionLogWriter;

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub tick_hz: f64,
    pub max_sessions: usize,
    /// Directory for per-session logs; no logs when `None`.
    pub log_dir: Option<PathBuf>,
    pub model: NaiveBayesModel,
    /// Session settings before the client sends `configure`.
    pub defaults: SessionConfig,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            tick_hz: 20.0,
            max_sessions: 16,
            log_dir: None,
            model: crate::default_model(),
            defaults: SessionConfig::default(),
        }
    }
}

struct Shared {
    opts: ServerOptions,
    cache: FieldCache,
    active: AtomicUsize,
    next_id: AtomicU64,
}

struct ActiveGuard(Arc<Shared>);

impl Drop for ActiveGuard {
    fn drop(&mut self) {
        self.0.active.fetch_sub(1, Ordering::SeqCst);
    }
}

pub struct RunningServer {
    pub addr: SocketAddr,
    accept: JoinHandle<()>,
}

impl RunningServer {
    pub fn shutdown(self) {
        self.accept.abort();
    }

    pub async fn wait(self) {
        let _ = self.accept.await;
    }
}

pub async fn start(addr: impl ToSocketAddrs, opts: ServerOptions) -> Result<RunningServer> {
    anyhow::ensure!(
        opts.tick_hz > 0.0 && opts.tick_hz.is_finite(),
        "tick rate must be positive"
    );
    let listener = TcpListener::bind(addr).await.context("binding listener")?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        opts,
        cache: FieldCache::new(),
        active: AtomicUsize::new(0),
        next_id: AtomicU64::new(0),
    });
    let accept = tokio::spawn(async move {
        loop {
            match listener.accept().await {
                Ok((stream, peer)) => {
                    let shared = shared.clone();
                    tokio::spawn(async move {
                        if let Err(e) = connection(stream, shared).await {
                            log::warn!("{peer}: {e:#}");
                        }
                    });
                }
                Err(e) => log::warn!("accept failed: {e}"),
            }
        }
    });
    Ok(RunningServer { addr, accept })
}

fn encode(msg: &ServerMsg) -> Message {
    Message::Text(serde_json::to_string(msg).expect("server messages serialize"))
}

async fn connection(stream: TcpStream, shared: Arc<Shared>) -> Result<()> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut tx, mut rx) = ws.split();

    if shared.active.fetch_add(1, Ordering::SeqCst) >= shared.opts.max_sessions {
        shared.active.fetch_sub(1, Ordering::SeqCst);
        let detail = format!("server is at its limit of {} sessions", shared.opts.max_sessions);
        tx.send(encode(&ServerMsg::error("capacity", detail))).await?;
        tx.send(Message::Close(None)).await?;
        return Ok(());
    }
    let _guard = ActiveGuard(shared.clone());
    let id = shared.next_id.fetch_add(1, Ordering::SeqCst) + 1;
    log::info!("session {id} opened");

    let mut session = Session::new(id, &shared)?;
    let mut clock = tokio::time::interval(Duration::from_secs_f64(1.0 / shared.opts.tick_hz));
    clock.set_missed_tick_behavior(MissedTickBehavior::Delay);

    loop {
        tokio::select! {
            msg = rx.next() => {
                let reply = match msg {
                    None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                    Some(Ok(Message::Text(text))) => session.handle_text(&text, &shared).err(),
                    Some(Ok(Message::Binary(_))) => Some(ServerMsg::error("bad_message", "binary frames are not supported")),
                    Some(Ok(_)) => None,
                };
                if let Some(err) = reply {
                    tx.send(encode(&err)).await?;
                }
            }
            _ = clock.tick() => {
                let state = session.tick()?;
                if tx.send(encode(&ServerMsg::State(state))).await.is_err() {
                    break;
                }
            }
        }
    }
    log::info!("session {id} closed after {} ticks", session.tick);
    Ok(())
}

struct Session {
    id: u64,
    config: SessionConfig,
    sim: Simulator,
    held: OperatorInput,
    pending: Option<OperatorInput>,
    paused: bool,
    segment: u32,
    tick: u64,
    last_row: Option<StepRow>,
    log: Option<SessionLogWriter>,
}

impl Session {
    fn new(id: u64, shared: &Shared) -> Result<Self> {
        let config = shared.opts.defaults.clone();
        let sim = build_sim(&config, shared).map_err(|e| match e {
            ServerMsg::Error { detail, .. } => anyhow::anyhow!(detail),
            _ => anyhow::anyhow!("invalid default session"),
        })?;
        let log = match &shared.opts.log_dir {
            Some(dir) => Some(SessionLogWriter::create(dir, id)?),
            None => None,
        };
        let mut s = Self {
            id,
            held: idle_input(&sim),
            config,
            sim,
            pending: None,
            paused: false,
            segment: 0,
            tick: 0,
            last_row: None,
            log,
        };
        s.begin_segment(shared)?;
        Ok(s)
    }

    fn begin_segment(&mut self, shared: &Shared) -> Result<()> {
        if let Some(log) = &mut self.log {
            log.segment(self.sim.config(), self.sim.scene(), &shared.opts.model)?;
        }
        Ok(())
    }

    fn restart(&mut self, config: SessionConfig, shared: &Shared) -> Result<(), ServerMsg> {
        let sim = build_sim(&config, shared)?;
        self.config = config;
        self.held = idle_input(&sim);
        self.sim = sim;
        self.pending = None;
        self.last_row = None;
        self.segment += 1;
        self.begin_segment(shared)
            .map_err(|e| ServerMsg::error("internal", format!("{e:#}")))
    }

    fn handle_text(&mut self, text: &str, shared: &Shared) -> Result<(), ServerMsg> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ServerMsg::error("bad_json", e.to_string()))?;
        let msg: ClientMsg =
            serde_json::from_value(value).map_err(|e| ServerMsg::error("bad_message", e.to_string()))?;
        match msg {
            ClientMsg::Configure { proto, config } => {
                if let Some(p) = proto.filter(|&p| p != PROTO) {
                    return Err(ServerMsg::error(
                        "unsupported_proto",
                        format!("protocol {p} requested, server speaks {PROTO}"),
                    ));
                }
                self.restart(config, shared)
            }
            ClientMsg::Input {
                t,
                pointer,
                gaze_px,
                button,
            } => {
                // latest wins
                self.pending = Some(operator_input(t, pointer, gaze_px, button));
                Ok(())
            }
            ClientMsg::Reset {} => self.restart(self.config.clone(), shared),
            ClientMsg::Pause {} => {
                self.paused = true;
                Ok(())
            }
            ClientMsg::Resume {} => {
                self.paused = false;
                Ok(())
            }
        }
    }

    fn tick(&mut self) -> Result<StateMsg> {
        if !self.paused && self.sim.outcome().is_none() {
            if let Some(p) = self.pending.take() {
                self.held = p;
            }
            let row = self.sim.step(&self.held);
            if let Some(log) = &mut self.log {
                log.tick(&self.held, &row)?;
            }
            self.tick += 1;
            self.last_row = Some(row);
        }
        let completion = self.sim.outcome().map(|o| o.1);
        Ok(match &self.last_row {
            Some(row) => StateMsg::from_row(self.id, self.segment, self.tick, row, completion, self.paused),
            None => {
                let obs = self.sim.observation();
                StateMsg {
                    proto: PROTO,
                    session: self.id,
                    segment: self.segment,
                    tick: self.tick,
                    t: 0.0,
                    effector: obs.effector.to_array(),
                    target: None,
                    p_intent: 0.0,
                    ci: 0.0,
                    sci: -1.0,
                    gf: [0.0; 3],
                    boundary: None,
                    attempts: 0,
                    gripper_closed: false,
                    outcome: None,
                    completion_time: None,
                    paused: self.paused,
                }
            }
        })
    }
}

fn idle_input(sim: &Simulator) -> OperatorInput {
    OperatorInput {
        t: 0.0,
        pointer: sim.config().start,
        gaze_px: None,
        button: false,
    }
}

fn build_sim(config: &SessionConfig, shared: &Shared) -> Result<Simulator, ServerMsg> {
    let invalid = |e: intentfix_core::Error| ServerMsg::error("config_invalid", e.to_string());
    let sim_cfg = config.sim_config();
    sim_cfg.validate().map_err(invalid)?;
    let field = shared.cache.field(sim_cfg.fixture.field_params()).map_err(invalid)?;
    Simulator::with_field(sim_cfg, config.scene(), shared.opts.model.clone(), field).map_err(invalid)
}
