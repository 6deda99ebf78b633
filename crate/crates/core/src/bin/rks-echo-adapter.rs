//! Reference adapter: answers every request with the state it was given.
//!
//! Flags alter its behaviour for protocol tests:
//!   --bad-seq          answer with the wrong sequence number
//!   --sleep-ms <n>     wait before each answer
//!   --crash-after <n>  exit after answering n requests
//!   --audit-all        audit responses flag and remove every claim, ec = tp = 1
//!   --record <path>    append every received line to a file

use std::io::{self, BufRead, Write};
use std::thread;
use std::time::Duration;

use rks_core::adapter::{AdapterMessage, MessageType};

struct Options {
    bad_seq: bool,
    sleep_ms: u64,
    crash_after: Option<u64>,
    audit_all: bool,
    record: Option<String>,
}

fn number(arg: Option<String>) -> u64 {
    arg.and_then(|v| v.parse().ok()).unwrap_or(0)
}

fn parse_args() -> Options {
    let mut opts = Options {
        bad_seq: false,
        sleep_ms: 0,
        crash_after: None,
        audit_all: false,
        record: None,
    };
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--bad-seq" => opts.bad_seq = true,
            "--sleep-ms" => opts.sleep_ms = number(args.next()),
            "--crash-after" => opts.crash_after = Some(number(args.next())),
            "--audit-all" => opts.audit_all = true,
            "--record" => opts.record = args.next(),
            other => eprintln!("rks-echo-adapter: ignoring unknown flag {other}"),
        }
    }
    opts
}

fn main() -> io::Result<()> {
    let opts = parse_args();
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    let mut record = match &opts.record {
        Some(path) => Some(std::fs::OpenOptions::new().create(true).append(true).open(path)?),
        None => None,
    };
    let mut answered = 0u64;
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(file) = record.as_mut() {
            writeln!(file, "{line}")?;
        }
        let request: AdapterMessage = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("rks-echo-adapter: bad request: {e}");
                std::process::exit(3);
            }
        };
        if opts.crash_after == Some(answered) {
            std::process::exit(4);
        }
        if opts.sleep_ms > 0 {
            thread::sleep(Duration::from_millis(opts.sleep_ms));
        }
        let mut response = request.reply(request.state.clone());
        if opts.bad_seq {
            response.seq += 1;
        }
        if request.kind == MessageType::Audit {
            let ids = request
                .state
                .as_ref()
                .map(|s| s.claim_ids())
                .unwrap_or_default();
            if opts.audit_all {
                if let Some(state) = response.state.as_mut() {
                    state.claims.clear();
                }
                response.flagged = Some(ids.clone());
                response.corrected = Some(ids);
                response.ec = Some(1.0);
                response.tp = Some(1.0);
            } else {
                response.flagged = Some(Vec::new());
                response.corrected = Some(Vec::new());
            }
        }
        serde_json::to_writer(&mut stdout, &response)?;
        stdout.write_all(b"\n")?;
        stdout.flush()?;
        answered += 1;
        if request.kind == MessageType::Shutdown {
            break;
        }
    }
    Ok(())
}
