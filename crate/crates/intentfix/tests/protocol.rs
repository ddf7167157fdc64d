use std::path::Path;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use intentfix::protocol::{ServerMsg, StateMsg};
use intentfix::server::{self, RunningServer, ServerOptions};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn serve(opts: ServerOptions) -> RunningServer {
    server::start("127.0.0.1:0", opts).await.unwrap()
}

async fn connect(srv: &RunningServer) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{}", srv.addr))
        .await
        .unwrap()
        .0
}

async fn next_msg(ws: &mut Ws) -> Option<ServerMsg> {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("server went quiet")?;
        match msg.ok()? {
            Message::Text(t) => return Some(serde_json::from_str(&t).unwrap()),
            Message::Close(_) => return None,
            _ => {}
        }
    }
}

async fn next_state(ws: &mut Ws) -> StateMsg {
    match next_msg(ws).await.expect("socket closed") {
        ServerMsg::State(s) => s,
        other => panic!("expected state, got {other:?}"),
    }
}

async fn next_error(ws: &mut Ws) -> String {
    let deadline = Instant::now() + Duration::from_secs(2);
    loop {
        assert!(Instant::now() < deadline, "no error reply");
        match next_msg(ws).await.expect("socket closed") {
            ServerMsg::Error { code, .. } => return code,
            ServerMsg::State(_) => {}
        }
    }
}

async fn send(ws: &mut Ws, text: &str) {
    ws.send(Message::Text(text.to_string())).await.unwrap();
}

#[tokio::test]
async fn idle_session_streams_at_tick_rate_with_zero_confidence() {
    let srv = serve(ServerOptions::default()).await;
    let mut ws = connect(&srv).await;
    send(&mut ws, r#"{"type":"configure","proto":1,"config":{"task":"cutting"}}"#).await;
    while next_state(&mut ws).await.segment != 1 {}
    let start = Instant::now();
    let mut n = 0;
    while start.elapsed() < Duration::from_millis(1500) {
        let s = next_state(&mut ws).await;
        assert_eq!(s.ci, 0.0);
        assert!(s.outcome.is_none());
        n += 1;
    }
    let hz = n as f64 / start.elapsed().as_secs_f64();
    assert!((18.0..=22.0).contains(&hz), "state rate {hz:.1} Hz");
}

#[tokio::test]
async fn sessions_do_not_share_state() {
    let srv = serve(ServerOptions {
        tick_hz: 100.0,
        ..ServerOptions::default()
    })
    .await;
    let mut a = connect(&srv).await;
    let mut b = connect(&srv).await;
    let sa = next_state(&mut a).await;
    let sb = next_state(&mut b).await;
    assert_ne!(sa.session, sb.session);
    let start = sb.effector;

    let input = r#"{"type":"input","t":0.0,"pointer":{"x":0.05,"y":-0.1,"z":0.2},"gaze_px":null,"button":false}"#;
    send(&mut a, input).await;
    let mut moved = false;
    for _ in 0..60 {
        let s = next_state(&mut a).await;
        moved |= s.effector != start;
        let other = next_state(&mut b).await;
        assert_eq!(other.effector, start, "input leaked into the other session");
    }
    assert!(moved);
}

#[tokio::test]
async fn bad_messages_get_errors_and_the_session_survives() {
    let srv = serve(ServerOptions::default()).await;
    let mut ws = connect(&srv).await;
    let id = next_state(&mut ws).await.session;

    send(&mut ws, "{not json").await;
    assert_eq!(next_error(&mut ws).await, "bad_json");
    send(&mut ws, r#"{"type":"teleport"}"#).await;
    assert_eq!(next_error(&mut ws).await, "bad_message");
    send(&mut ws, r#"{"type":"pause","extra":1}"#).await;
    assert_eq!(next_error(&mut ws).await, "bad_message");
    send(&mut ws, r#"{"type":"configure","proto":2}"#).await;
    assert_eq!(next_error(&mut ws).await, "unsupported_proto");
    send(&mut ws, r#"{"type":"configure","config":{"fixture":{"ithresh":0.3}}}"#).await;
    assert_eq!(next_error(&mut ws).await, "config_invalid");
    ws.send(Message::Binary(vec![1, 2, 3])).await.unwrap();
    assert_eq!(next_error(&mut ws).await, "bad_message");

    let s = next_state(&mut ws).await;
    assert_eq!(s.session, id);
    assert_eq!(s.segment, 0, "a rejected configure must not restart the session");
}

#[tokio::test]
async fn pause_freezes_time_and_reset_restarts() {
    let srv = serve(ServerOptions {
        tick_hz: 100.0,
        ..ServerOptions::default()
    })
    .await;
    let mut ws = connect(&srv).await;
    for _ in 0..5 {
        next_state(&mut ws).await;
    }
    send(&mut ws, r#"{"type":"pause"}"#).await;
    let frozen = loop {
        let s = next_state(&mut ws).await;
        if s.paused {
            break s;
        }
    };
    for _ in 0..5 {
        let s = next_state(&mut ws).await;
        assert_eq!((s.t, s.tick), (frozen.t, frozen.tick));
    }
    send(&mut ws, r#"{"type":"resume"}"#).await;
    send(&mut ws, r#"{"type":"reset"}"#).await;
    let s = loop {
        let s = next_state(&mut ws).await;
        if s.segment == 1 {
            break s;
        }
    };
    assert!(!s.paused);
    assert!(s.t < frozen.t);
}

#[tokio::test]
async fn sessions_beyond_capacity_are_refused() {
    let srv = serve(ServerOptions {
        max_sessions: 1,
        ..ServerOptions::default()
    })
    .await;
    let mut first = connect(&srv).await;
    next_state(&mut first).await;

    let mut second = connect(&srv).await;
    match next_msg(&mut second).await {
        Some(ServerMsg::Error { code, .. }) => assert_eq!(code, "capacity"),
        other => panic!("expected capacity error, got {other:?}"),
    }
    assert!(next_msg(&mut second).await.is_none());

    first.close(None).await.unwrap();
    drop(first);
    let deadline = Instant::now() + Duration::from_secs(3);
    loop {
        let mut again = connect(&srv).await;
        if let Some(ServerMsg::State(_)) = next_msg(&mut again).await {
            break;
        }
        assert!(Instant::now() < deadline, "slot never freed");
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}

#[tokio::test]
async fn logged_session_replays_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let srv = serve(ServerOptions {
        tick_hz: 200.0,
        log_dir: Some(dir.path().to_path_buf()),
        ..ServerOptions::default()
    })
    .await;
    let mut ws = connect(&srv).await;
    send(
        &mut ws,
        r#"{"type":"configure","config":{"mode":{"assistance":"safety_boundary","intent_adjusted":true}}}"#,
    )
    .await;
    for k in 0..40 {
        let s = next_state(&mut ws).await;
        if let Some(b) = s.boundary {
            assert!(b.in_ranges(), "{b:?}");
        }
        let msg = format!(
            r#"{{"type":"input","t":{},"pointer":{{"x":0.0,"y":-0.1,"z":{}}},"gaze_px":{{"x":{},"y":250.0}},"button":false}}"#,
            s.t,
            0.25 - 0.004 * k as f64,
            320.0 + (k % 3) as f64
        );
        send(&mut ws, &msg).await;
    }
    ws.close(None).await.unwrap();
    srv.shutdown();

    let log = std::fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
    let replay = |path: &Path| {
        std::process::Command::new(env!("CARGO_BIN_EXE_intentfix"))
            .args(["simulate", "--replay"])
            .arg(path)
            .output()
            .unwrap()
    };
    let out = replay(&log);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains(": 0 mismatching row(s)"), "{stdout}");

    // nudge one logged effector coordinate and the replay must notice
    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let idx = lines.iter().rposition(|l| l.contains(r#""effector""#)).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&lines[idx]).unwrap();
    fn bump(v: &mut serde_json::Value) -> bool {
        match v {
            serde_json::Value::Object(m) => {
                if let Some(e) = m.get_mut("effector") {
                    let x = e[0].as_f64().unwrap();
                    e[0] = serde_json::json!(x + 1e-12);
                    return true;
                }
                m.values_mut().any(bump)
            }
            _ => false,
        }
    }
    assert!(bump(&mut v));
    lines[idx] = v.to_string();
    let tampered = dir.path().join("tampered.jsonl");
    std::fs::write(&tampered, lines.join("\n") + "\n").unwrap();
    assert!(!replay(&tampered).status.success());
}
