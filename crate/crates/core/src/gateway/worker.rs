use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use log::warn;
use rand::RngCore;
use serde_json::Value;

use super::protocol::{BackendRequest, BackendResponse, Capability};
use super::{AttentionBackend, EmbeddingBackend, FillBackend, ScoreBackend};
use crate::cnlc::{Item, LinearizedSequence};
use crate::corpus::NestedAnnotation;
use crate::error::{GatewayError, WorkerError};
use crate::scalar::Real;
use crate::template::AttentionMap;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

enum Event {
    Line(String),
    Closed,
}

struct Connection {
    child: Child,
    stdin: Option<ChildStdin>,
    events: Receiver<Event>,
    exited: bool,
    next_id: u64,
    stray: Vec<WorkerError>,
}

/// Client for one worker process. Requests are serialized through a lock;
/// a batch is written in full before responses are collected, and
/// responses may arrive in any order.
pub struct WorkerClient {
    command: String,
    timeout: Duration,
    conn: Mutex<Connection>,
}

impl WorkerClient {
    /// Run `command_line` through `sh -c` and perform the ping handshake.
    pub fn spawn_shell(command_line: &str, timeout: Duration) -> Result<Self, WorkerError> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(command_line);
        Self::spawn(cmd, command_line, timeout)
    }

    pub fn spawn(mut cmd: Command, label: &str, timeout: Duration) -> Result<Self, WorkerError> {
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| WorkerError::Spawn {
                command: label.to_string(),
                message: e.to_string(),
            })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(Event::Line(l)).is_err() {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(Event::Closed);
        });
        let client = WorkerClient {
            command: label.to_string(),
            timeout,
            conn: Mutex::new(Connection {
                child,
                stdin,
                events: rx,
                exited: false,
                next_id: 1,
                stray: Vec::new(),
            }),
        };
        client.handshake()?;
        Ok(client)
    }

    fn handshake(&self) -> Result<(), WorkerError> {
        let mut conn = self.conn.lock().unwrap();
        conn.write_line(&BackendRequest::ping().to_line())
            .map_err(|e| WorkerError::Handshake(e.to_string()))?;
        match conn.events.recv_timeout(self.timeout) {
            Ok(Event::Line(line)) => match BackendResponse::parse_line(&line) {
                Ok(r) if r.id == 0 && r.outcome == Ok(Value::from("pong")) => Ok(()),
                _ => Err(WorkerError::Handshake(format!("expected pong, got {line:?}"))),
            },
            Ok(Event::Closed) => {
                conn.exited = true;
                Err(WorkerError::Handshake("worker exited".into()))
            }
            Err(_) => Err(WorkerError::Handshake("no pong before timeout".into())),
        }
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    /// Send one request and wait for its response.
    pub fn roundtrip(&self, cap: Capability, tokens: Vec<String>) -> Result<BackendResponse, WorkerError> {
        self.roundtrip_batch(vec![(cap, tokens)])
            .pop()
            .expect("one result per request")
    }

    /// Send all requests, then match responses by id. Results come back in
    /// request order. Lines that cannot be attributed to a pending request
    /// are kept as diagnostics (see [`WorkerClient::take_diagnostics`]).
    pub fn roundtrip_batch(
        &self,
        requests: Vec<(Capability, Vec<String>)>,
    ) -> Vec<Result<BackendResponse, WorkerError>> {
        let mut conn = self.conn.lock().unwrap();
        let mut results: Vec<Option<Result<BackendResponse, WorkerError>>> = requests.iter().map(|_| None).collect();
        let mut pending: HashMap<u64, usize> = HashMap::new();
        for (slot, (cap, tokens)) in requests.into_iter().enumerate() {
            let id = conn.next_id;
            conn.next_id += 1;
            if conn.exited {
                results[slot] = Some(Err(WorkerError::WorkerExited { id }));
                continue;
            }
            match conn.write_line(&BackendRequest::new(id, cap, tokens).to_line()) {
                Ok(()) => {
                    pending.insert(id, slot);
                }
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {
                    results[slot] = Some(Err(WorkerError::WorkerExited { id }));
                }
                Err(e) => results[slot] = Some(Err(WorkerError::Io(e.to_string()))),
            }
        }
        while !pending.is_empty() {
            match conn.events.recv_timeout(self.timeout) {
                Ok(Event::Line(line)) => match BackendResponse::parse_line(&line) {
                    Ok(resp) => match pending.remove(&resp.id) {
                        Some(slot) => results[slot] = Some(Ok(resp)),
                        None => conn.note(WorkerError::UnexpectedId { id: resp.id }),
                    },
                    Err(message) => conn.note(WorkerError::MalformedLine { line, message }),
                },
                Ok(Event::Closed) | Err(RecvTimeoutError::Disconnected) => {
                    conn.exited = true;
                    for (id, slot) in pending.drain() {
                        results[slot] = Some(Err(WorkerError::WorkerExited { id }));
                    }
                }
                Err(RecvTimeoutError::Timeout) => {
                    for (id, slot) in pending.drain() {
                        results[slot] = Some(Err(WorkerError::Timeout { id }));
                    }
                }
            }
        }
        results
            .into_iter()
            .map(|r| r.expect("every request resolved"))
            .collect()
    }

    /// Malformed lines and responses to unknown ids seen so far.
    pub fn take_diagnostics(&self) -> Vec<WorkerError> {
        std::mem::take(&mut self.conn.lock().unwrap().stray)
    }

    fn call(&self, cap: Capability, tokens: Vec<String>) -> Result<(u64, Value), WorkerError> {
        let resp = self.roundtrip(cap, tokens)?;
        match resp.outcome {
            Ok(v) => Ok((resp.id, v)),
            Err(message) => Err(WorkerError::Remote { id: resp.id, message }),
        }
    }
}

impl Connection {
    fn write_line(&mut self, line: &str) -> std::io::Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::BrokenPipe, "stdin closed"))?;
        stdin.write_all(line.as_bytes())?;
        stdin.write_all(b"\n")?;
        stdin.flush()
    }

    fn note(&mut self, err: WorkerError) {
        warn!("{err}");
        self.stray.push(err);
    }
}

impl Drop for WorkerClient {
    fn drop(&mut self) {
        if let Ok(conn) = self.conn.get_mut() {
            conn.stdin.take();
            let _ = conn.child.kill();
            let _ = conn.child.wait();
        }
    }
}

fn bad(id: u64, message: &str) -> WorkerError {
    WorkerError::BadResult {
        id,
        message: message.to_string(),
    }
}

fn as_reals<F: Real>(id: u64, value: &Value) -> Result<Vec<F>, WorkerError> {
    value
        .as_array()
        .ok_or_else(|| bad(id, "expected an array of numbers"))?
        .iter()
        .map(|x| x.as_f64().map(F::of).ok_or_else(|| bad(id, "expected a number")))
        .collect()
}

impl FillBackend for WorkerClient {
    fn fill(&self, seq: &LinearizedSequence, _rng: &mut dyn RngCore) -> Result<LinearizedSequence, GatewayError> {
        let tokens = seq.items.iter().map(Item::surface).collect();
        let (id, value) = self.call(Capability::Fill, tokens)?;
        let items = value
            .as_array()
            .ok_or_else(|| bad(id, "expected a token list"))?
            .iter()
            .map(|t| {
                t.as_str()
                    .map(Item::from_surface)
                    .ok_or_else(|| bad(id, "expected a string token"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LinearizedSequence::new(seq.source_id.clone(), items))
    }
}

impl<F: Real> ScoreBackend<F> for WorkerClient {
    fn score(&self, words: &[&str]) -> Result<F, GatewayError> {
        let (id, value) = self.call(Capability::Score, words.iter().map(|w| w.to_string()).collect())?;
        let x = value.as_f64().ok_or_else(|| bad(id, "expected a number"))?;
        Ok(F::of(x))
    }
}

impl<F: Real> EmbeddingBackend<F> for WorkerClient {
    fn embed(&self, words: &[&str]) -> Result<Vec<F>, GatewayError> {
        let (id, value) = self.call(Capability::Embed, words.iter().map(|w| w.to_string()).collect())?;
        Ok(as_reals(id, &value)?)
    }
}

impl<F: Real> AttentionBackend<F> for WorkerClient {
    fn attention(&self, ann: &NestedAnnotation) -> Result<AttentionMap<F>, GatewayError> {
        let (id, value) = self.call(Capability::Attention, ann.words().map(str::to_string).collect())?;
        let rows = value
            .as_array()
            .ok_or_else(|| bad(id, "expected a matrix"))?
            .iter()
            .map(|row| as_reals(id, row))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AttentionMap::from_rows(rows)?)
    }
}
