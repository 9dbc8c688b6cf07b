//! Line-delimited JSON protocol between the orchestrator and an out-of-process
//! trainer adapter, plus both ends of it.
//!
//! Every request carries `msg` and a `seq`; the adapter answers each request
//! with exactly one line echoing that `seq`.
//!
//! | request       | response     |
//! |---------------|--------------|
//! | `hello`       | `hello`      |
//! | `init`        | `init`       |
//! | `train_epoch` | `epoch_done` |
//! | `evaluate`    | `eval_done`  |
//! | `shutdown`    | `shutdown`   |
//!
//! Any failure is answered with `{"msg":"error","seq":..,"code":..,"message":..}`.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::{json, Value};

use crate::baselines::BaselineConfig;
use crate::policy::{canonical_text, parse_policy, Catalog, CATALOG_VERSION};
use crate::trainer::{Augmentation, EpochPlan, Metrics, Trainer, TrainerError};

pub const PROTOCOL_VERSION: &str = "augloop/1";
/// Exit status of an adapter that refuses the orchestrator's protocol version.
pub const EXIT_VERSION_MISMATCH: i32 = 4;
pub const DEFAULT_EPOCH_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMetrics {
    pub val_accuracy: f64,
    pub train_loss: f64,
}

fn error_line(seq: Value, code: &str, message: &str) -> String {
    json!({"msg": "error", "seq": seq, "code": code, "message": message}).to_string()
}

#[derive(Deserialize)]
struct Envelope {
    msg: Option<String>,
    seq: Option<Value>,
}

#[derive(Deserialize)]
struct HelloReq {
    protocol: String,
}

#[derive(Deserialize)]
struct InitReq {
    #[serde(default)]
    model: String,
    seed: u64,
}

#[derive(Deserialize)]
struct TrainReq<'a> {
    epoch: u32,
    #[serde(default)]
    aug_seed: u64,
    #[serde(borrow, default)]
    policy: Option<&'a RawValue>,
    #[serde(default)]
    baseline: Option<BaselineConfig>,
}

enum Step {
    Reply(String),
    Exit(String, i32),
}

/// Adapter side: answers requests from `input` until shutdown, EOF or a
/// protocol version mismatch. Returns the process exit status.
pub fn serve<R: BufRead, W: Write>(input: R, mut output: W, trainer: &mut dyn Trainer) -> i32 {
    let mut initialized = false;
    for line in input.lines() {
        let Ok(line) = line else { return 1 };
        if line.trim().is_empty() {
            continue;
        }
        let step = handle(&line, trainer, &mut initialized);
        let (text, exit) = match step {
            Step::Reply(t) => (t, None),
            Step::Exit(t, code) => (t, Some(code)),
        };
        if writeln!(output, "{text}").and_then(|_| output.flush()).is_err() {
            return 1;
        }
        if let Some(code) = exit {
            return code;
        }
    }
    0
}

fn handle(line: &str, trainer: &mut dyn Trainer, initialized: &mut bool) -> Step {
    let env: Envelope = match serde_json::from_str(line) {
        Ok(e) => e,
        Err(e) => return Step::Reply(error_line(Value::Null, "BAD_REQUEST", &e.to_string())),
    };
    let seq = env.seq.clone().unwrap_or(Value::Null);
    let Some(msg) = env.msg else {
        return Step::Reply(error_line(seq, "BAD_REQUEST", "missing \"msg\""));
    };
    let bad = |e: serde_json::Error| Step::Reply(error_line(seq.clone(), "BAD_REQUEST", &e.to_string()));
    match msg.as_str() {
        "hello" => match serde_json::from_str::<HelloReq>(line) {
            Ok(h) if h.protocol == PROTOCOL_VERSION => Step::Reply(
                json!({"msg": "hello", "seq": seq, "protocol": PROTOCOL_VERSION, "catalog": CATALOG_VERSION})
                    .to_string(),
            ),
            Ok(h) => Step::Exit(
                error_line(
                    seq,
                    "VERSION_MISMATCH",
                    &format!("adapter speaks {PROTOCOL_VERSION}, orchestrator sent {}", h.protocol),
                ),
                EXIT_VERSION_MISMATCH,
            ),
            Err(e) => bad(e),
        },
        "init" => match serde_json::from_str::<InitReq>(line) {
            Ok(r) => match trainer.init(&r.model, r.seed) {
                Ok(()) => {
                    *initialized = true;
                    Step::Reply(json!({"msg": "init", "seq": seq}).to_string())
                }
                Err(e) => Step::Reply(error_line(seq, "TRAINER", &e.to_string())),
            },
            Err(e) => bad(e),
        },
        "train_epoch" => {
            if !*initialized {
                return Step::Reply(error_line(seq, "NOT_INITIALIZED", "train_epoch before init"));
            }
            let req: TrainReq = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(e) => return bad(e),
            };
            let policy = match req.policy.map(|raw| decode_policy(raw.get())).transpose() {
                Ok(p) => p,
                Err(msg) => return Step::Reply(error_line(seq, "INVALID_POLICY", &msg)),
            };
            let augmentation = match (&policy, &req.baseline) {
                (Some(p), _) => Augmentation::Policy(p),
                (None, Some(b)) => Augmentation::Baseline(b),
                (None, None) => Augmentation::None,
            };
            let plan = EpochPlan {
                epoch: req.epoch,
                augmentation,
                aug_seed: req.aug_seed,
            };
            match trainer.train_epoch(&plan) {
                Ok(loss) => Step::Reply(json!({"msg": "epoch_done", "seq": seq, "train_loss": loss}).to_string()),
                Err(e) => Step::Reply(error_line(seq, trainer_code(&e), &e.to_string())),
            }
        }
        "evaluate" => {
            if !*initialized {
                return Step::Reply(error_line(seq, "NOT_INITIALIZED", "evaluate before init"));
            }
            match trainer.evaluate() {
                Ok(m) => Step::Reply(
                    json!({"msg": "eval_done", "seq": seq, "metrics": WireMetrics {
                        val_accuracy: m.val_accuracy,
                        train_loss: m.train_loss,
                    }})
                    .to_string(),
                ),
                Err(e) => Step::Reply(error_line(seq, trainer_code(&e), &e.to_string())),
            }
        }
        "shutdown" => Step::Exit(json!({"msg": "shutdown", "seq": seq}).to_string(), 0),
        other => Step::Reply(error_line(seq, "UNKNOWN_MSG", &format!("unknown msg {other:?}"))),
    }
}

fn trainer_code(e: &TrainerError) -> &'static str {
    match e {
        TrainerError::NumericDivergence { .. } => "NUMERIC_DIVERGENCE",
        TrainerError::NotInitialized => "NOT_INITIALIZED",
        _ => "TRAINER",
    }
}

fn decode_policy(text: &str) -> Result<crate::policy::Policy, String> {
    let n = serde_json::from_str::<Value>(text)
        .ok()
        .and_then(|v| v.get("n").and_then(Value::as_u64))
        .ok_or("policy lacks an integer \"n\"")? as usize;
    parse_policy(text, Catalog::standard(), n).map_err(|e| e.to_string())
}

/// How to launch an adapter process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeCommand {
    /// Program followed by its leading arguments.
    pub command: Vec<String>,
    #[serde(default = "default_timeout_s")]
    pub epoch_timeout_s: f64,
}

fn default_timeout_s() -> f64 {
    DEFAULT_EPOCH_TIMEOUT.as_secs_f64()
}

/// Orchestrator side: a [`Trainer`] backed by an adapter subprocess.
pub struct BridgeTrainer {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    seq: u64,
    epochs: u32,
    last_loss: f64,
}

impl BridgeTrainer {
    /// Starts `command --dataset <dataset> --model <model>` and performs the
    /// hello handshake.
    pub fn launch(cmd: &BridgeCommand, dataset: &str, model: &str) -> Result<Self, TrainerError> {
        let (program, args) = cmd
            .command
            .split_first()
            .ok_or_else(|| TrainerError::Bridge("empty adapter command".into()))?;
        if !(cmd.epoch_timeout_s > 0.0 && cmd.epoch_timeout_s.is_finite()) {
            return Err(TrainerError::Bridge("epoch_timeout_s must be positive".into()));
        }
        let mut child = Command::new(program)
            .args(args)
            .arg("--dataset")
            .arg(dataset)
            .arg("--model")
            .arg(model)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| TrainerError::Bridge(format!("cannot start {program}: {e}")))?;
        let stdout = child.stdout.take().expect("piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut bridge = BridgeTrainer {
            stdin: child.stdin.take(),
            child,
            lines: rx,
            timeout: Duration::from_secs_f64(cmd.epoch_timeout_s),
            seq: 0,
            epochs: 0,
            last_loss: 0.0,
        };
        let reply = bridge.request("hello", json!({"protocol": PROTOCOL_VERSION, "catalog": CATALOG_VERSION}), "hello")?;
        let catalog = reply.get("catalog").and_then(Value::as_str).unwrap_or("");
        if catalog != CATALOG_VERSION {
            return Err(TrainerError::Bridge(format!(
                "adapter catalog {catalog:?} differs from {CATALOG_VERSION:?}"
            )));
        }
        Ok(bridge)
    }

    pub fn process_id(&self) -> u32 {
        self.child.id()
    }

    fn request(&mut self, msg: &str, mut body: Value, expect: &str) -> Result<Value, TrainerError> {
        let seq = self.seq;
        self.seq += 1;
        body["msg"] = json!(msg);
        body["seq"] = json!(seq);
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| TrainerError::Bridge("adapter connection closed".into()))?;
        writeln!(stdin, "{body}")
            .and_then(|_| stdin.flush())
            .map_err(|e| TrainerError::Bridge(format!("adapter stdin: {e}")))?;
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(TrainerError::Bridge(format!("adapter stdout: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                let _ = self.child.kill();
                return Err(TrainerError::Timeout(self.timeout));
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = self.child.wait().map(|s| s.to_string()).unwrap_or_else(|e| e.to_string());
                return Err(TrainerError::Bridge(format!("adapter exited during {msg} ({status})")));
            }
        };
        let reply: Value = serde_json::from_str(&line)
            .map_err(|e| TrainerError::Bridge(format!("unparseable adapter reply {line:?}: {e}")))?;
        if reply.get("seq") != Some(&json!(seq)) {
            return Err(TrainerError::Bridge(format!("reply seq mismatch: sent {seq}, got {line}")));
        }
        match reply.get("msg").and_then(Value::as_str) {
            Some(m) if m == expect => Ok(reply),
            Some("error") => {
                let code = reply.get("code").and_then(Value::as_str).unwrap_or("ERROR");
                let message = reply.get("message").and_then(Value::as_str).unwrap_or("");
                if code == "NUMERIC_DIVERGENCE" {
                    return Err(TrainerError::NumericDivergence { epoch: self.epochs });
                }
                Err(TrainerError::Bridge(format!("{code}: {message}")))
            }
            _ => Err(TrainerError::Bridge(format!("unexpected adapter reply {line}"))),
        }
    }

    /// Sends shutdown and waits for the adapter to exit.
    pub fn shutdown(mut self) -> Result<(), TrainerError> {
        self.close()
    }

    fn close(&mut self) -> Result<(), TrainerError> {
        if self.stdin.is_none() {
            return Ok(());
        }
        let result = self.request("shutdown", json!({}), "shutdown").map(|_| ());
        self.stdin = None;
        if result.is_err() {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
        result
    }
}

impl Drop for BridgeTrainer {
    fn drop(&mut self) {
        let _ = self.close();
    }
}

impl Trainer for BridgeTrainer {
    fn init(&mut self, model_description: &str, seed: u64) -> Result<(), TrainerError> {
        self.request("init", json!({"model": model_description, "seed": seed}), "init")?;
        self.epochs = 0;
        self.last_loss = 0.0;
        Ok(())
    }

    fn train_epoch(&mut self, plan: &EpochPlan<'_>) -> Result<f64, TrainerError> {
        let mut body = json!({"epoch": plan.epoch, "aug_seed": plan.aug_seed, "policy": Value::Null});
        match plan.augmentation {
            Augmentation::None => {}
            Augmentation::Policy(p) => {
                body["policy"] = serde_json::from_str(&canonical_text(p)).expect("canonical text is JSON");
            }
            Augmentation::Baseline(b) => {
                body["baseline"] = serde_json::to_value(b).expect("serializable");
            }
        }
        let reply = self.request("train_epoch", body, "epoch_done")?;
        let loss = reply
            .get("train_loss")
            .and_then(Value::as_f64)
            .ok_or_else(|| TrainerError::Bridge("epoch_done lacks train_loss".into()))?;
        self.epochs += 1;
        self.last_loss = loss;
        Ok(loss)
    }

    fn evaluate(&mut self) -> Result<Metrics, TrainerError> {
        let reply = self.request("evaluate", json!({}), "eval_done")?;
        let m: WireMetrics = reply
            .get("metrics")
            .cloned()
            .and_then(|v| serde_json::from_value(v).ok())
            .ok_or_else(|| TrainerError::Bridge("eval_done lacks metrics".into()))?;
        Ok(Metrics {
            val_accuracy: m.val_accuracy,
            train_loss: m.train_loss,
            epoch_index: self.epochs,
            correct: None,
            total: None,
        })
    }
}

/// Dataset argument understood by the built-in adapter: a directory, or
/// `synthetic:<seed>` for the default generated set.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetArg {
    Directory(PathBuf),
    Synthetic(u64),
}

impl DatasetArg {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s.strip_prefix("synthetic:") {
            Some(seed) => seed
                .parse()
                .map(DatasetArg::Synthetic)
                .map_err(|_| format!("bad synthetic seed in {s:?}")),
            None => Ok(DatasetArg::Directory(PathBuf::from(s))),
        }
    }
}
