//! A minimal HTTP/1.1 stub server for wire-protocol tests.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::Value;

#[derive(Debug, Clone)]
pub struct Recorded {
    pub path: String,
    pub authorization: Option<String>,
    pub body: Value,
}

type Handler = dyn Fn(usize, &str, &Value) -> (u16, Value) + Send + Sync;

pub struct StubServer {
    pub base_url: String,
    requests: Arc<Mutex<Vec<Recorded>>>,
    stop: Arc<AtomicBool>,
    addr: std::net::SocketAddr,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    /// `handler(index, path, body)` gives the status and JSON body of the
    /// index-th request (0-based).
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(usize, &str, &Value) -> (u16, Value) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let thread = {
            let requests = requests.clone();
            let stop = stop.clone();
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Ok(s) = stream {
                        serve(s, &requests, &*handler);
                    }
                }
            })
        };
        StubServer {
            base_url: format!("http://{addr}/v1"),
            requests,
            stop,
            addr,
            thread: Some(thread),
        }
    }

    /// Replays `replies` in order; further requests get a 500.
    pub fn replay(replies: Vec<Value>) -> Self {
        Self::start(move |i, _, _| match replies.get(i) {
            Some(r) => (200, r.clone()),
            None => (500, serde_json::json!({"error": "no more replies"})),
        })
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(stream: TcpStream, requests: &Mutex<Vec<Recorded>>, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let (mut length, mut authorization) = (0usize, None);
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().unwrap_or(0),
                "authorization" => authorization = Some(value.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let index = {
        let mut r = requests.lock().unwrap();
        r.push(Recorded {
            path: path.clone(),
            authorization,
            body: body.clone(),
        });
        r.len() - 1
    };
    let (status, reply) = handler(index, &path, &body);
    let payload = serde_json::to_vec(&reply).unwrap();
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        payload.len()
    );
    let _ = stream.write_all(&payload);
    let _ = stream.flush();
}

/// The recorded two-turn Calculator exchange.
pub fn calculator_exchange() -> Value {
    serde_json::from_str(include_str!("../fixtures/calculator_exchange.json")).unwrap()
}

/// Deterministic pseudo-embedding: token counts hashed into 16 buckets.
pub fn fake_embedding(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; 16];
    for tok in text.split_whitespace() {
        let h = tok
            .bytes()
            .fold(2166136261u32, |h, b| (h ^ b as u32).wrapping_mul(16777619));
        v[(h % 16) as usize] += 1.0;
    }
    v[0] += 0.5;
    v
}

pub fn embeddings_reply(body: &Value) -> Value {
    let inputs = body["input"].as_array().cloned().unwrap_or_default();
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| serde_json::json!({"index": i, "embedding": fake_embedding(t.as_str().unwrap_or(""))}))
        .collect();
    serde_json::json!({"object": "list", "data": data})
}
