//! A scripted chat-completion server for tests.
//!
//! Serves `POST /v1/chat/completions` on a loopback port, answers each
//! request with `script(prompt)`, and records request bodies plus the peak
//! number of requests being handled at once.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};

type Script = dyn Fn(&str) -> String + Send + Sync;

#[derive(Default)]
struct State {
    requests: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    bodies: Mutex<Vec<Value>>,
    auth: Mutex<Vec<Option<String>>>,
}

pub struct MockLlm {
    addr: SocketAddr,
    state: Arc<State>,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl MockLlm {
    /// Start a server that answers every prompt with `script(prompt)` after
    /// sleeping `delay`.
    pub fn start(script: impl Fn(&str) -> String + Send + Sync + 'static, delay: Duration) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let addr = listener.local_addr().unwrap();
        let state = Arc::new(State::default());
        let stop = Arc::new(AtomicBool::new(false));
        let script: Arc<Script> = Arc::new(script);

        let accept = {
            let (state, stop) = (state.clone(), stop.clone());
            std::thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    let (state, script) = (state.clone(), script.clone());
                    std::thread::spawn(move || {
                        let _ = serve(conn, &state, &*script, delay);
                    });
                }
            })
        };
        Self { addr, state, stop, accept: Some(accept) }
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Completed and in-progress requests so far.
    pub fn requests(&self) -> usize {
        self.state.requests.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.state.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn bodies(&self) -> Vec<Value> {
        self.state.bodies.lock().unwrap().clone()
    }

    pub fn authorization_headers(&self) -> Vec<Option<String>> {
        self.state.auth.lock().unwrap().clone()
    }
}

impl Drop for MockLlm {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn serve(conn: TcpStream, state: &State, script: &Script, delay: Duration) -> std::io::Result<()> {
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut content_length = 0usize;
    let mut auth = None;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => content_length = value.trim().parse().unwrap_or(0),
                "authorization" => auth = Some(value.trim().to_owned()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body)?;

    let (status, payload) = if !request_line.starts_with("POST /v1/chat/completions ") {
        ("404 Not Found", json!({"error": "not found"}))
    } else {
        match serde_json::from_slice::<Value>(&body) {
            Ok(v) => {
                state.requests.fetch_add(1, Ordering::SeqCst);
                let now = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                state.peak_in_flight.fetch_max(now, Ordering::SeqCst);
                let prompt = v["messages"][0]["content"].as_str().unwrap_or_default().to_owned();
                state.bodies.lock().unwrap().push(v);
                state.auth.lock().unwrap().push(auth);
                std::thread::sleep(delay);
                let answer = script(&prompt);
                state.in_flight.fetch_sub(1, Ordering::SeqCst);
                ("200 OK", json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": answer}}]}))
            }
            Err(_) => ("400 Bad Request", json!({"error": "bad json"})),
        }
    };
    let text = payload.to_string();
    let mut conn = conn;
    write!(
        conn,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )?;
    conn.flush()
}

/// An address with nothing listening on it.
pub fn unreachable_base_url() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}")
}
