use std::io::Read;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rca_cli::client::Client;
use rca_core::agent::AgentConfig;
use rca_core::service::{EventKind, Response, ScenarioSource, SessionManager, SessionRequest, SessionState, SessionView};
use rca_core::simenv::shipped_scenario;

fn start(approval: bool) -> (String, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let config = AgentConfig { approval_required: approval, human_timeout_secs: 30.0, ..AgentConfig::default() };
    let source = Arc::new(ScenarioSource { scenario: Arc::new(shipped_scenario("setting-drift").unwrap()), config });
    let manager = Arc::new(SessionManager::open(dir.path(), source).unwrap());
    let (tx, rx) = std::sync::mpsc::channel();
    thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            rca_cli::server::serve(listener, manager).await.unwrap();
        });
    });
    let addr = rx.recv_timeout(Duration::from_secs(5)).unwrap();
    (format!("http://{addr}"), dir)
}

fn req(mode: &str) -> SessionRequest {
    SessionRequest { incident_id: "INC-7731".into(), mode: mode.into(), config: None }
}

fn settle(c: &Client, id: &str) -> SessionView {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let v = c.session(id).unwrap();
        if v.state != SessionState::Running || Instant::now() > deadline {
            return v;
        }
        thread::sleep(Duration::from_millis(10));
    }
}

#[test]
fn approval_and_human_flow_over_http() {
    let (url, _dir) = start(true);
    let c = Client::new(&url);
    let v = c.create(&req("outcome-2")).unwrap();
    assert_eq!(v.meta.id, "s000001");
    let mut denied = false;
    loop {
        let v = settle(&c, &v.meta.id);
        match v.state {
            SessionState::AwaitingApproval if !denied => {
                denied = true;
                let ack = c.respond(&v.meta.id, &Response::Deny { reason: "check scope first".into() }).unwrap();
                assert_eq!(ack.state, SessionState::Running);
            }
            SessionState::AwaitingApproval => {
                c.respond(&v.meta.id, &Response::Approve).unwrap();
            }
            SessionState::AwaitingHuman => {
                let err = c.respond(&v.meta.id, &Response::Approve).unwrap_err().to_string();
                assert!(err.starts_with("409"), "{err}");
                c.respond(&v.meta.id, &Response::HumanAnswer { text: "Yes, go ahead.".into() }).unwrap();
            }
            _ => break,
        }
    }
    let mut events = vec![];
    c.events("s000001", 0, true, |e| events.push(e)).unwrap();
    let kinds: Vec<EventKind> = events.iter().map(|e| e.kind).collect();
    assert!(kinds.contains(&EventKind::ActionDenied));
    assert!(kinds.contains(&EventKind::HumanResponse));
    assert_eq!(kinds.last(), Some(&EventKind::Final));
    assert!(events.iter().any(|e| e.kind == EventKind::Observation && e.payload.contains("check scope first")));

    let listed = c.list().unwrap();
    assert_eq!(listed.len(), 1);
    assert_eq!(listed[0].state, SessionState::Finished);
    let err = c.respond("s000001", &Response::Abort).unwrap_err().to_string();
    assert!(err.starts_with("409"), "{err}");
}

#[test]
fn sse_resumes_from_last_event_id() {
    let (url, _dir) = start(false);
    let c = Client::new(&url);
    let id = c.create(&req("outcome-1")).unwrap().meta.id;
    let mut all = vec![];
    c.events(&id, 0, true, |e| all.push(e)).unwrap();
    assert!(all.len() > 4);

    let mut resp = ureq::get(&format!("{url}/sessions/{id}/events?follow=false"))
        .header("Last-Event-ID", "3")
        .call()
        .unwrap();
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let mut body = String::new();
    resp.body_mut().as_reader().read_to_string(&mut body).unwrap();
    let ids: Vec<u64> =
        body.lines().filter_map(|l| l.strip_prefix("id:")).map(|s| s.trim().parse().unwrap()).collect();
    let expect: Vec<u64> = all.iter().map(|e| e.seq).filter(|&s| s > 3).collect();
    assert_eq!(ids, expect);
    assert!(body.contains("event: thought") || body.contains("event:thought"), "{body}");

    let mut tail = vec![];
    c.events(&id, all.len() as u64 - 1, false, |e| tail.push(e)).unwrap();
    assert_eq!(tail.len(), 1);
    assert_eq!(tail[0].kind, EventKind::Final);
}

#[test]
fn errors_map_to_statuses() {
    let (url, _dir) = start(false);
    let c = Client::new(&url);
    assert!(c.session("s424242").unwrap_err().to_string().starts_with("404"));
    assert!(c.create(&SessionRequest { incident_id: "INC-0".into(), mode: "outcome-1".into(), config: None })
        .unwrap_err()
        .to_string()
        .starts_with("404"));
    assert!(c.create(&req("bogus")).unwrap_err().to_string().starts_with("400"));
}
