//! Restart-based one-pass evaluation (R-OPE) over a line-delimited JSON
//! protocol.
//!
//! The evaluator drives the session; the tracker answers:
//!
//! ```text
//! evaluator -> {"type":"init","index":1,"box":[x,y,w,h],"path":"...","sequence":"id"}
//! tracker   <- {"type":"ready"}
//! evaluator -> {"type":"frame","index":2,"path":"..."}
//! tracker   <- {"type":"prediction","index":2,"box":[x,y,w,h]}
//! ...
//! evaluator -> {"type":"restart","index":132,"box":[...],"path":"..."}
//! tracker   <- {"type":"ready"}
//! ...
//! evaluator -> {"type":"end"}
//! ```
//!
//! A tracker may answer any request with `{"type":"error","message":"..."}`,
//! which aborts the session. Frame indices are 1-based; frames are passed as
//! file paths, never as pixel data.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::SequenceRecord;
use crate::geometry::{iou, BoundingBox};
use crate::metrics::{score_frame, FrameScores, MetricsError, RobustnessInput, SequenceEvaluation};

pub const DEFAULT_TAU_FAIL: f64 = 0.5;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// One protocol message; serialized as a single JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Init {
        index: usize,
        #[serde(rename = "box")]
        bbox: [f64; 4],
        path: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sequence: Option<String>,
    },
    Frame {
        index: usize,
        path: String,
    },
    Restart {
        index: usize,
        #[serde(rename = "box")]
        bbox: [f64; 4],
        path: String,
    },
    End,
    Ready,
    Prediction {
        index: usize,
        #[serde(rename = "box")]
        bbox: [f64; 4],
    },
    Error {
        message: String,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Init { .. } => "init",
            Message::Frame { .. } => "frame",
            Message::Restart { .. } => "restart",
            Message::End => "end",
            Message::Ready => "ready",
            Message::Prediction { .. } => "prediction",
            Message::Error { .. } => "error",
        }
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("malformed message '{line}': {source}")]
    Malformed {
        line: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("message cannot be encoded: {0}")]
    Encode(#[source] serde_json::Error),
}

pub fn encode_message(m: &Message) -> Result<String, ProtocolError> {
    serde_json::to_string(m).map_err(ProtocolError::Encode)
}

/// Decodes one line. Unknown fields are ignored.
pub fn decode_message(line: &str) -> Result<Message, ProtocolError> {
    let trimmed = line.trim_end_matches(['\r', '\n']);
    serde_json::from_str(trimmed).map_err(|source| ProtocolError::Malformed {
        line: trimmed.chars().take(200).collect(),
        source,
    })
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("no message within {0:?}")]
    Timeout(Duration),
    #[error("peer closed the connection")]
    Closed,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A bidirectional stream of text lines.
pub trait Transport {
    fn send(&mut self, line: &str) -> Result<(), TransportError>;

    /// Next line from the peer, without its terminator.
    fn recv(&mut self, timeout: Duration) -> Result<String, TransportError>;
}

/// Line transport over any reader/writer pair. Lines are read on a
/// background thread so that `recv` can time out.
pub struct LineTransport<W: Write> {
    writer: W,
    lines: Receiver<std::io::Result<String>>,
}

impl<W: Write> LineTransport<W> {
    pub fn new<R: Read + Send + 'static>(reader: R, writer: W) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut buf = String::new();
                match reader.read_line(&mut buf) {
                    Ok(0) => break,
                    Ok(_) => {
                        let line = buf.trim_end_matches(['\r', '\n']).to_string();
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Self { writer, lines: rx }
    }
}

impl<W: Write> Transport for LineTransport<W> {
    fn send(&mut self, line: &str) -> Result<(), TransportError> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<String, TransportError> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(TransportError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(TransportError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
    }
}

/// A tracker running as a child process, spoken to over its stdin/stdout.
/// The child is killed when the transport is dropped.
pub struct ChildTransport {
    child: Child,
    inner: LineTransport<ChildStdin>,
}

impl ChildTransport {
    /// Runs `command` through `sh -c`.
    pub fn spawn_shell(command: &str) -> std::io::Result<Self> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(command);
        Self::spawn(cmd)
    }

    pub fn spawn(mut cmd: Command) -> std::io::Result<Self> {
        let mut child = cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self {
            child,
            inner: LineTransport::new(stdout, stdin),
        })
    }
}

impl Transport for ChildTransport {
    fn send(&mut self, line: &str) -> Result<(), TransportError> {
        self.inner.send(line)
    }

    fn recv(&mut self, timeout: Duration) -> Result<String, TransportError> {
        self.inner.recv(timeout)
    }
}

impl Drop for ChildTransport {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            // Give a well-behaved client a moment to exit after `end`.
            for _ in 0..20 {
                thread::sleep(Duration::from_millis(5));
                if !matches!(self.child.try_wait(), Ok(None)) {
                    return;
                }
            }
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}

/// Accepts one tracker connection per session on a TCP listener.
pub struct TcpServer {
    listener: TcpListener,
}

impl TcpServer {
    pub fn bind(addr: impl ToSocketAddrs) -> std::io::Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
        })
    }

    pub fn local_addr(&self) -> std::io::Result<std::net::SocketAddr> {
        self.listener.local_addr()
    }

    pub fn accept(&self) -> std::io::Result<LineTransport<TcpStream>> {
        let (stream, _) = self.listener.accept()?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(LineTransport::new(reader, stream))
    }
}

/// An in-process client: each evaluator line is decoded and handed to a
/// handler whose replies are queued for `recv`. Used for scripted clients.
pub struct LoopbackClient<F> {
    handler: F,
    pending: VecDeque<String>,
}

impl<F: FnMut(&Message) -> Vec<Message>> LoopbackClient<F> {
    pub fn new(handler: F) -> Self {
        Self {
            handler,
            pending: VecDeque::new(),
        }
    }
}

impl<F: FnMut(&Message) -> Vec<Message>> Transport for LoopbackClient<F> {
    fn send(&mut self, line: &str) -> Result<(), TransportError> {
        let msg = decode_message(line)
            .map_err(|e| TransportError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
        for reply in (self.handler)(&msg) {
            let line = encode_message(&reply)
                .map_err(|e| TransportError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
            self.pending.push_back(line);
        }
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<String, TransportError> {
        self.pending.pop_front().ok_or(TransportError::Timeout(timeout))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// A prediction fails when its IoU with the ground truth is below this.
    pub tau_fail: f64,
    pub timeout: Duration,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            tau_fail: DEFAULT_TAU_FAIL,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

pub fn detect_failure(pred: &BoundingBox, gt: &BoundingBox, tau_fail: f64) -> bool {
    iou(pred, gt) < tau_fail
}

/// Smallest scheduled restart frame strictly after `after`.
pub fn next_restart(schedule: &[usize], after: usize) -> Option<usize> {
    let k = schedule.partition_point(|&r| r <= after);
    schedule.get(k).copied()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFrame {
    pub index: usize,
    pub prediction: Option<BoundingBox>,
    pub scores: FrameScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestartEvent {
    pub failure_frame: usize,
    pub restart_frame: usize,
}

/// Outcome of one R-OPE session. All frame indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub sequence_id: String,
    pub scored: Vec<ScoredFrame>,
    pub restarts: Vec<RestartEvent>,
    pub restarts_used: usize,
    pub restart_points: usize,
    /// Frames never scored: between a failure and the next restart, or after
    /// a failure with no restart left.
    pub skipped: Vec<usize>,
    /// Restart frames the tracker was re-initialized on.
    pub reinitialized: Vec<usize>,
    /// Mean inter-frame correlation of the video, filled in by the caller.
    pub rho: Option<f64>,
}

impl SessionResult {
    pub fn scored_frames(&self) -> Vec<usize> {
        self.scored.iter().map(|s| s.index).collect()
    }

    pub fn to_evaluation(&self) -> Result<SequenceEvaluation, MetricsError> {
        SequenceEvaluation::from_scores(
            self.sequence_id.clone(),
            self.scored_frames(),
            self.scored.iter().map(|s| s.scores).collect(),
        )
    }

    pub fn robustness_input(&self) -> Option<RobustnessInput> {
        self.rho.map(|rho| RobustnessInput {
            sequence_id: self.sequence_id.clone(),
            rho,
            restart_points: self.restart_points,
            restarts_used: self.restarts_used,
        })
    }

    /// Checks the session invariants against its record.
    pub fn check(&self, record: &SequenceRecord) -> Result<(), String> {
        let scored = self.scored_frames();
        if scored.windows(2).any(|w| w[0] >= w[1]) {
            return Err("scored frames are not strictly increasing".into());
        }
        if let Some(k) = scored.iter().find(|k| self.skipped.contains(k)) {
            return Err(format!("frame {k} is both scored and skipped"));
        }
        let mut last = 0;
        for r in &self.restarts {
            if r.restart_frame <= last || r.restart_frame <= r.failure_frame {
                return Err("restart frames are not strictly increasing".into());
            }
            if !record.restart_schedule.contains(&r.restart_frame) {
                return Err(format!("restart frame {} is not scheduled", r.restart_frame));
            }
            last = r.restart_frame;
        }
        if self.restarts_used != self.restarts.len() || self.restarts_used > self.restart_points {
            return Err("restart count inconsistent".into());
        }
        for k in crate::metrics::filter_frames(record) {
            let n = usize::from(scored.contains(&k))
                + usize::from(self.skipped.contains(&k))
                + usize::from(self.reinitialized.contains(&k));
            if n != 1 {
                return Err(format!(
                    "eligible frame {k} is in {n} of scored/skipped/reinitialized"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SessionErrorKind {
    #[error("sequence has no restart schedule")]
    NoSchedule,
    #[error("sequence record is unusable: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("expected {expected}, got {got}")]
    Unexpected {
        expected: &'static str,
        got: &'static str,
    },
    #[error("prediction for frame {got}, expected frame {expected}")]
    OutOfOrder { expected: usize, got: usize },
    #[error("client reported: {0}")]
    Client(String),
}

#[derive(Debug, Error)]
#[error("sequence {sequence_id}{}: {kind}", frame.map(|f| format!(", frame {f}")).unwrap_or_default())]
pub struct SessionError {
    pub sequence_id: String,
    pub frame: Option<usize>,
    #[source]
    pub kind: SessionErrorKind,
}

struct Session<'a, T: Transport + ?Sized> {
    record: &'a SequenceRecord,
    transport: &'a mut T,
    config: SessionConfig,
}

impl<T: Transport + ?Sized> Session<'_, T> {
    fn fail(&self, frame: Option<usize>, kind: impl Into<SessionErrorKind>) -> SessionError {
        SessionError {
            sequence_id: self.record.id.clone(),
            frame,
            kind: kind.into(),
        }
    }

    fn path(&self, index: usize) -> String {
        self.record.frame_paths[index - 1].to_string_lossy().into_owned()
    }

    fn send(&mut self, frame: usize, m: &Message) -> Result<(), SessionError> {
        let line = encode_message(m).map_err(|e| self.fail(Some(frame), e))?;
        self.transport.send(&line).map_err(|e| self.fail(Some(frame), e))
    }

    fn recv(&mut self, frame: usize) -> Result<Message, SessionError> {
        let line = self
            .transport
            .recv(self.config.timeout)
            .map_err(|e| self.fail(Some(frame), e))?;
        match decode_message(&line).map_err(|e| self.fail(Some(frame), e))? {
            Message::Error { message } => Err(self.fail(Some(frame), SessionErrorKind::Client(message))),
            m => Ok(m),
        }
    }

    fn expect_ready(&mut self, frame: usize) -> Result<(), SessionError> {
        match self.recv(frame)? {
            Message::Ready => Ok(()),
            m => Err(self.fail(
                Some(frame),
                SessionErrorKind::Unexpected {
                    expected: "ready",
                    got: m.kind(),
                },
            )),
        }
    }

    fn expect_prediction(&mut self, frame: usize) -> Result<Option<BoundingBox>, SessionError> {
        match self.recv(frame)? {
            Message::Prediction { index, bbox } if index == frame => {
                Ok(Some(BoundingBox::from(bbox)).filter(BoundingBox::is_valid))
            }
            Message::Prediction { index, .. } => Err(self.fail(
                Some(frame),
                SessionErrorKind::OutOfOrder {
                    expected: frame,
                    got: index,
                },
            )),
            m => Err(self.fail(
                Some(frame),
                SessionErrorKind::Unexpected {
                    expected: "prediction",
                    got: m.kind(),
                },
            )),
        }
    }

    fn run(&mut self) -> Result<SessionResult, SessionError> {
        let record = self.record;
        let n = record.len();
        let schedule = &record.restart_schedule;
        if schedule.is_empty() {
            return Err(self.fail(None, SessionErrorKind::NoSchedule));
        }
        if record.frame_paths.len() != n {
            return Err(self.fail(
                None,
                SessionErrorKind::InvalidRecord("frame paths do not cover the sequence".into()),
            ));
        }
        let Some(init_box) = record.gt_at(1) else {
            return Err(self.fail(
                Some(1),
                SessionErrorKind::InvalidRecord("no ground truth on frame 1".into()),
            ));
        };

        let mut result = SessionResult {
            sequence_id: record.id.clone(),
            scored: Vec::new(),
            restarts: Vec::new(),
            restarts_used: 0,
            restart_points: schedule.len(),
            skipped: Vec::new(),
            reinitialized: Vec::new(),
            rho: None,
        };

        let init = Message::Init {
            index: 1,
            bbox: init_box.as_array(),
            path: self.path(1),
            sequence: Some(record.id.clone()),
        };
        self.send(1, &init)?;
        self.expect_ready(1)?;

        let mut t = 2;
        while t <= n {
            let frame = Message::Frame {
                index: t,
                path: self.path(t),
            };
            self.send(t, &frame)?;
            let pred = self.expect_prediction(t)?;

            let gt = record.gt[t - 1];
            let eligible = !record.absent[t - 1] && !record.shotcut[t - 1];
            if let (Some(gt), true) = (gt, eligible) {
                result.scored.push(ScoredFrame {
                    index: t,
                    prediction: pred,
                    scores: score_frame(pred.as_ref(), &gt, record.frame_size),
                });
                let failed = pred.is_none_or(|p| detect_failure(&p, &gt, self.config.tau_fail));
                if failed {
                    match next_restart(schedule, t) {
                        Some(r) => {
                            log::debug!("{}: failure at {t}, restart at {r}", record.id);
                            result.restarts.push(RestartEvent {
                                failure_frame: t,
                                restart_frame: r,
                            });
                            result.skipped.extend(t + 1..r);
                            result.reinitialized.push(r);
                            let gt_r = record.gt_at(r).ok_or_else(|| {
                                self.fail(
                                    Some(r),
                                    SessionErrorKind::InvalidRecord(
                                        "restart frame without ground truth".into(),
                                    ),
                                )
                            })?;
                            let restart = Message::Restart {
                                index: r,
                                bbox: gt_r.as_array(),
                                path: self.path(r),
                            };
                            self.send(r, &restart)?;
                            self.expect_ready(r)?;
                            t = r + 1;
                            continue;
                        }
                        None => {
                            result.skipped.extend(t + 1..=n);
                            break;
                        }
                    }
                }
            }
            t += 1;
        }
        result.restarts_used = result.restarts.len();
        // The client may already have exited; nothing more is expected from it.
        if let Ok(line) = encode_message(&Message::End) {
            let _ = self.transport.send(&line);
        }
        Ok(result)
    }
}

/// Runs one R-OPE session of `record` against the tracker behind `transport`.
pub fn run_session<T: Transport + ?Sized>(
    record: &SequenceRecord,
    transport: &mut T,
    config: SessionConfig,
) -> Result<SessionResult, SessionError> {
    Session {
        record,
        transport,
        config,
    }
    .run()
}
