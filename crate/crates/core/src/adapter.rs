//! External operator processes speaking line-delimited JSON on stdin/stdout.
//!
//! Each request carries a sequence number starting at 1; the process must
//! answer every request with exactly one response echoing that number, the
//! message type and the role. States cross the boundary through their
//! ordinary serialization, which never includes hidden seed ids.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operators::{AuditReport, OperatorSpec, Role, StageExecutor, StubExecutor};
use crate::state::{ClaimId, KnowledgeState, TruthId};

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdapterError {
    #[error("adapter did not answer within {0} ms")]
    Timeout(u64),
    #[error("adapter crashed: {0}")]
    Crashed(String),
    #[error("adapter schema violation: {0}")]
    SchemaViolation(String),
    #[error("could not start adapter: {0}")]
    Spawn(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Request,
    Response,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Transform,
    Audit,
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterMessage {
    pub seq: u64,
    pub direction: Direction,
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<KnowledgeState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flagged: Option<Vec<ClaimId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected: Option<Vec<ClaimId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ec: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tp: Option<f64>,
}

impl AdapterMessage {
    pub fn request(seq: u64, kind: MessageType, role: Role, state: Option<KnowledgeState>) -> Self {
        AdapterMessage {
            seq,
            direction: Direction::Request,
            kind,
            role,
            state,
            flagged: None,
            corrected: None,
            ec: None,
            tp: None,
        }
    }

    /// A response to `self` carrying `state`.
    pub fn reply(&self, state: Option<KnowledgeState>) -> Self {
        AdapterMessage {
            direction: Direction::Response,
            state,
            ..self.clone()
        }
    }

    fn check_response_to(&self, request: &AdapterMessage) -> Result<(), AdapterError> {
        let violation = |m: String| Err(AdapterError::SchemaViolation(m));
        if self.direction != Direction::Response {
            return violation("expected a response".into());
        }
        if self.seq != request.seq {
            return violation(format!("sequence {} answered with {}", request.seq, self.seq));
        }
        if self.kind != request.kind || self.role != request.role {
            return violation(format!(
                "expected {:?}/{} response, got {:?}/{}",
                request.kind,
                request.role.as_str(),
                self.kind,
                self.role.as_str()
            ));
        }
        if request.kind != MessageType::Shutdown && self.state.is_none() {
            return violation("response carries no state".into());
        }
        for (name, v) in [("ec", self.ec), ("tp", self.tp)] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return violation(format!("{name} = {v} outside [0, 1]"));
                }
            }
        }
        if let Some(state) = &self.state {
            state
                .validate()
                .map_err(|e| AdapterError::SchemaViolation(e.to_string()))?;
        }
        Ok(())
    }
}

/// A running adapter process.
pub struct AdapterProcess {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    next_seq: u64,
    timeout: Duration,
    dead: bool,
}

impl AdapterProcess {
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self, AdapterError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| AdapterError::Spawn("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AdapterError::Spawn(format!("{program}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| AdapterError::Spawn("stdout unavailable".into()))?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(AdapterProcess {
            child,
            stdin,
            lines: rx,
            next_seq: 1,
            timeout,
            dead: false,
        })
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Builds the next request for this process.
    pub fn request(&mut self, kind: MessageType, role: Role, state: Option<KnowledgeState>) -> AdapterMessage {
        let msg = AdapterMessage::request(self.next_seq, kind, role, state);
        self.next_seq += 1;
        msg
    }

    /// Sends one request line and waits for its response line.
    pub fn exchange(&mut self, msg: &AdapterMessage) -> Result<AdapterMessage, AdapterError> {
        if msg.direction != Direction::Request {
            return Err(AdapterError::SchemaViolation("only requests can be sent".into()));
        }
        if self.dead {
            return Err(AdapterError::Crashed("adapter already terminated".into()));
        }
        let line = serde_json::to_string(msg).map_err(|e| AdapterError::SchemaViolation(e.to_string()))?;
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| AdapterError::Crashed("stdin closed".into()))?;
        if let Err(e) = stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
        {
            self.kill();
            return Err(AdapterError::Crashed(e.to_string()));
        }
        let response = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => {
                self.kill();
                return Err(AdapterError::Crashed(e.to_string()));
            }
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                return Err(AdapterError::Timeout(self.timeout.as_millis() as u64));
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.kill();
                let status = self.child.wait().ok().map(|s| s.to_string());
                return Err(AdapterError::Crashed(format!(
                    "stdout closed ({})",
                    status.unwrap_or_else(|| "unknown status".into())
                )));
            }
        };
        let parsed: AdapterMessage = serde_json::from_str(&response)
            .map_err(|e| AdapterError::SchemaViolation(format!("{e}: {response}")))?;
        parsed.check_response_to(msg)?;
        Ok(parsed)
    }

    /// Asks the process to exit, then reaps it.
    pub fn shutdown(mut self, role: Role) {
        if !self.dead {
            let msg = self.request(MessageType::Shutdown, role, None);
            let _ = self.exchange(&msg);
        }
        self.kill();
    }

    fn kill(&mut self) {
        self.dead = true;
        self.stdin = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for AdapterProcess {
    fn drop(&mut self) {
        if !self.dead {
            self.kill();
        }
    }
}

/// Copies hidden seed ids from `before` onto same-id claims in `after`.
fn carry_hidden_ids(before: &KnowledgeState, after: &mut KnowledgeState) {
    let hidden: HashMap<&ClaimId, &TruthId> = before
        .claims
        .iter()
        .filter_map(|c| c.hidden_seed_id.as_ref().map(|t| (&c.id, t)))
        .collect();
    for claim in &mut after.claims {
        claim.hidden_seed_id = hidden.get(&claim.id).map(|t| (*t).clone());
    }
}

/// Runs `scripted_external` stages through adapter processes and everything
/// else through the in-process stubs.
#[derive(Default)]
pub struct AdapterExecutor {
    processes: HashMap<Role, AdapterProcess>,
}

impl AdapterExecutor {
    /// Starts one process per external spec.
    pub fn spawn<'a>(specs: impl IntoIterator<Item = &'a OperatorSpec>) -> Result<Self, AdapterError> {
        let mut processes = HashMap::new();
        for spec in specs.into_iter().filter(|s| s.is_external()) {
            let command = spec.command.clone().unwrap_or_default();
            let timeout = Duration::from_millis(spec.timeout_ms.unwrap_or(DEFAULT_TIMEOUT_MS));
            processes.insert(spec.role, AdapterProcess::spawn(&command, timeout)?);
        }
        Ok(AdapterExecutor { processes })
    }

    pub fn shutdown(self) {
        for (role, process) in self.processes {
            process.shutdown(role);
        }
    }

    fn process(&mut self, role: Role) -> crate::Result<&mut AdapterProcess> {
        self.processes
            .get_mut(&role)
            .ok_or_else(|| AdapterError::Crashed(format!("no adapter running for {}", role.as_str())).into())
    }

    fn call(
        &mut self,
        kind: MessageType,
        role: Role,
        state: &KnowledgeState,
    ) -> crate::Result<AdapterMessage> {
        let process = self.process(role)?;
        let msg = process.request(kind, role, Some(state.clone()));
        let mut response = process.exchange(&msg)?;
        if let Some(after) = response.state.as_mut() {
            if after.dimension() != state.dimension() {
                return Err(AdapterError::SchemaViolation(format!(
                    "state dimension changed from {} to {}",
                    state.dimension(),
                    after.dimension()
                ))
                .into());
            }
            carry_hidden_ids(state, after);
        }
        Ok(response)
    }
}

impl StageExecutor for AdapterExecutor {
    fn transform(
        &mut self,
        spec: &OperatorSpec,
        state: KnowledgeState,
        rng: &mut dyn rand::RngCore,
    ) -> crate::Result<KnowledgeState> {
        if !spec.is_external() {
            return StubExecutor.transform(spec, state, rng);
        }
        let response = self.call(MessageType::Transform, spec.role, &state)?;
        Ok(response.state.expect("validated response carries a state"))
    }

    fn audit(
        &mut self,
        spec: &OperatorSpec,
        state: KnowledgeState,
        rng: &mut dyn rand::RngCore,
    ) -> crate::Result<AuditReport> {
        if !spec.is_external() {
            return StubExecutor.audit(spec, state, rng);
        }
        let response = self.call(MessageType::Audit, spec.role, &state)?;
        let out = response.state.expect("validated response carries a state");
        let known = |ids: &[ClaimId]| -> Result<(), AdapterError> {
            match ids.iter().find(|id| !state.contains_claim(id)) {
                Some(id) => Err(AdapterError::SchemaViolation(format!("unknown claim id `{id}`"))),
                None => Ok(()),
            }
        };
        let flagged = response.flagged.unwrap_or_default();
        let corrected = response.corrected.unwrap_or_default();
        known(&flagged)?;
        known(&corrected)?;
        Ok(AuditReport {
            state: out,
            flagged,
            corrected,
            ec: response.ec,
            tp: response.tp,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{Claim, ClaimKind};

    #[test]
    fn wire_format_uses_type_field_and_omits_hidden_ids() {
        let mut claim = Claim::new("c1", ClaimKind::Assertion, "x");
        claim.hidden_seed_id = Some(TruthId("sc-deadbeef".into()));
        let state = KnowledgeState::new(vec![1.0]).with_claims(vec![claim]);
        let msg = AdapterMessage::request(1, MessageType::Transform, Role::Semantic, Some(state));
        let line = serde_json::to_string(&msg).unwrap();
        assert!(line.contains("\"type\":\"transform\""));
        assert!(line.contains("\"seq\":1"));
        assert!(!line.contains("sc-deadbeef"));
    }

    #[test]
    fn response_checks() {
        let req = AdapterMessage::request(3, MessageType::Audit, Role::Transparency, Some(KnowledgeState::new(vec![0.0])));
        let ok = req.reply(req.state.clone());
        assert!(ok.check_response_to(&req).is_ok());
        let wrong_seq = AdapterMessage { seq: 4, ..ok.clone() };
        assert!(matches!(wrong_seq.check_response_to(&req), Err(AdapterError::SchemaViolation(_))));
        let bad_ec = AdapterMessage { ec: Some(1.5), ..ok.clone() };
        assert!(bad_ec.check_response_to(&req).is_err());
        let no_state = AdapterMessage { state: None, ..ok };
        assert!(no_state.check_response_to(&req).is_err());
    }

    #[test]
    fn hidden_ids_follow_claim_ids() {
        let mut seeded = Claim::new("c2", ClaimKind::Definition, "y");
        seeded.hidden_seed_id = Some(TruthId("t".into()));
        let before = KnowledgeState::new(vec![0.0]).with_claims(vec![Claim::new("c1", ClaimKind::Assertion, "x"), seeded]);
        let mut after: KnowledgeState = serde_json::from_str(&serde_json::to_string(&before).unwrap()).unwrap();
        carry_hidden_ids(&before, &mut after);
        assert_eq!(after, before);
    }

    #[test]
    fn missing_program_fails_to_spawn() {
        let err = AdapterProcess::spawn(&["/nonexistent/rks-adapter".into()], Duration::from_millis(10));
        assert!(matches!(err, Err(AdapterError::Spawn(_))));
    }
}
