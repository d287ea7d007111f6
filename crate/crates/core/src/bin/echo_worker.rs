//! Scripted worker for exercising the worker protocol without a model.
//!
//! Answers `fill` by replacing every `<mask>` with `X`, `score` with minus
//! the token count, `embed` with `[token count, total characters]` and
//! `attention` with a uniform matrix.
//!
//! Flags:
//!   --batch N        hold N requests, then answer them in shuffled order
//!   --seed S         shuffle seed for --batch (default 0)
//!   --garbage        print a non-JSON line before the first answer
//!   --drop-id K      never answer request K
//!   --exit-after N   exit after answering N requests
//!   --no-pong        ignore the startup ping
//!   --fail           answer every request with an error

use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Default)]
struct Script {
    batch: usize,
    seed: u64,
    garbage: bool,
    drop_id: Option<u64>,
    exit_after: Option<usize>,
    no_pong: bool,
    fail: bool,
}

fn parse_args() -> Script {
    let mut script = Script {
        batch: 1,
        ..Script::default()
    };
    let mut args = std::env::args().skip(1);
    while let Some(flag) = args.next() {
        let mut value = || {
            args.next()
                .and_then(|v| v.parse::<u64>().ok())
                .expect("numeric flag value")
        };
        match flag.as_str() {
            "--batch" => script.batch = value().max(1) as usize,
            "--seed" => script.seed = value(),
            "--garbage" => script.garbage = true,
            "--drop-id" => script.drop_id = Some(value()),
            "--exit-after" => script.exit_after = Some(value() as usize),
            "--no-pong" => script.no_pong = true,
            "--fail" => script.fail = true,
            other => panic!("unknown flag {other}"),
        }
    }
    script
}

fn answer(request: &Value) -> Value {
    let id = request["id"].as_u64().unwrap_or(0);
    let tokens: Vec<&str> = request["tokens"]
        .as_array()
        .map(|t| t.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();
    match request["cap"].as_str() {
        Some("fill") => {
            let filled: Vec<&str> = tokens.iter().map(|&t| if t == "<mask>" { "X" } else { t }).collect();
            json!({"id": id, "result": filled})
        }
        Some("score") => json!({"id": id, "result": -(tokens.len() as f64)}),
        Some("embed") => {
            let chars: usize = tokens.iter().map(|t| t.chars().count()).sum();
            json!({"id": id, "result": [tokens.len() as f64, chars as f64]})
        }
        Some("attention") => {
            let n = tokens.len();
            let row = vec![1.0 / n as f64; n];
            json!({"id": id, "result": vec![row; n]})
        }
        _ => json!({"id": id, "error": "unsupported capability"}),
    }
}

fn main() {
    let script = parse_args();
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut held: Vec<Value> = Vec::new();
    let mut answered = 0usize;
    let mut garbage_pending = script.garbage;
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let Ok(request) = serde_json::from_str::<Value>(&line) else {
            continue;
        };
        if request["cap"] == "ping" {
            if !script.no_pong {
                writeln!(out, "{}", json!({"id": request["id"], "result": "pong"})).unwrap();
                out.flush().unwrap();
            }
            continue;
        }
        held.push(request);
        if held.len() < script.batch {
            continue;
        }
        held.shuffle(&mut rng);
        for request in held.drain(..) {
            if garbage_pending {
                writeln!(out, "this is not json").unwrap();
                garbage_pending = false;
            }
            if request["id"].as_u64() == script.drop_id {
                continue;
            }
            let reply = if script.fail {
                json!({"id": request["id"], "error": "scripted failure"})
            } else {
                answer(&request)
            };
            writeln!(out, "{reply}").unwrap();
            answered += 1;
            if script.exit_after.is_some_and(|n| answered >= n) {
                out.flush().unwrap();
                return;
            }
        }
        out.flush().unwrap();
    }
}
