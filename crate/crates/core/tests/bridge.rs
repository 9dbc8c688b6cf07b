use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use augloop_core::bridge::{serve, BridgeCommand, BridgeTrainer, EXIT_VERSION_MISMATCH, PROTOCOL_VERSION};
use augloop_core::config::{execute, ExecError, RunConfig};
use augloop_core::orchestrator::{read_ledger, LedgerRecord};
use augloop_core::policy::CATALOG_VERSION;
use augloop_core::trainer::{Augmentation, EpochPlan, Metrics, Trainer, TrainerError};

/// Loss halves each epoch; accuracy counts epochs.
#[derive(Default)]
struct Halving {
    epoch: u32,
    seen: Vec<String>,
}

impl Trainer for Halving {
    fn init(&mut self, model: &str, seed: u64) -> Result<(), TrainerError> {
        self.seen.push(format!("init {model} {seed}"));
        self.epoch = 0;
        Ok(())
    }

    fn train_epoch(&mut self, plan: &EpochPlan<'_>) -> Result<f64, TrainerError> {
        self.epoch += 1;
        let aug = match plan.augmentation {
            Augmentation::None => "none".to_string(),
            Augmentation::Policy(p) => format!("policy {}", p.len()),
            Augmentation::Baseline(_) => "baseline".to_string(),
        };
        self.seen.push(format!("epoch {} seed {} {aug}", plan.epoch, plan.aug_seed));
        if plan.epoch == 99 {
            return Err(TrainerError::NumericDivergence { epoch: 99 });
        }
        Ok(1.0 / f64::from(1u32 << self.epoch))
    }

    fn evaluate(&mut self) -> Result<Metrics, TrainerError> {
        Ok(Metrics::from_counts(u64::from(self.epoch), 4, 0.25, self.epoch))
    }
}

fn exchange(requests: &[Value], trainer: &mut Halving) -> (i32, Vec<Value>) {
    let input: String = requests.iter().map(|r| format!("{r}\n")).collect();
    let mut out = Vec::new();
    let code = serve(Cursor::new(input), &mut out, trainer);
    let replies = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    (code, replies)
}

const POLICY: &str = r#"{"n":1,"ops":[{"kind":"horizontal_flip","p":0.5,"params":{}}]}"#;

#[test]
fn golden_session() {
    let policy: Value = serde_json::from_str(POLICY).unwrap();
    let requests = [
        json!({"msg": "hello", "seq": 0, "protocol": PROTOCOL_VERSION, "catalog": CATALOG_VERSION}),
        json!({"msg": "init", "seq": 1, "model": "tiny", "seed": 7}),
        json!({"msg": "train_epoch", "seq": 2, "epoch": 0, "aug_seed": 5, "policy": policy}),
        json!({"msg": "train_epoch", "seq": 3, "epoch": 1, "aug_seed": 5, "policy": null}),
        json!({"msg": "evaluate", "seq": 4}),
        json!({"msg": "shutdown", "seq": 5}),
        json!({"msg": "evaluate", "seq": 6}),
    ];
    let expected = [
        json!({"msg": "hello", "seq": 0, "protocol": "augloop/1", "catalog": CATALOG_VERSION}),
        json!({"msg": "init", "seq": 1}),
        json!({"msg": "epoch_done", "seq": 2, "train_loss": 0.5}),
        json!({"msg": "epoch_done", "seq": 3, "train_loss": 0.25}),
        json!({"msg": "eval_done", "seq": 4, "metrics": {"val_accuracy": 0.5, "train_loss": 0.25}}),
        json!({"msg": "shutdown", "seq": 5}),
    ];
    let mut t = Halving::default();
    let (code, replies) = exchange(&requests, &mut t);
    assert_eq!(code, 0);
    assert_eq!(replies, expected);
    assert_eq!(t.seen, ["init tiny 7", "epoch 0 seed 5 policy 1", "epoch 1 seed 5 none"]);
}

#[test]
fn eof_without_shutdown_exits_zero() {
    let (code, replies) = exchange(&[json!({"msg": "init", "seq": 0, "model": "m", "seed": 1})], &mut Halving::default());
    assert_eq!(code, 0);
    assert_eq!(replies.len(), 1);
}

fn error_code(v: &Value) -> &str {
    assert_eq!(v["msg"], "error", "{v}");
    v["code"].as_str().unwrap()
}

#[test]
fn errors_keep_the_connection_alive() {
    let requests = [
        json!({"msg": "train_epoch", "seq": 0, "epoch": 0}),
        json!({"msg": "evaluate", "seq": 1}),
        json!({"msg": "dance", "seq": 2}),
        json!({"seq": 3}),
        json!({"msg": "init", "seq": 4}),
        json!({"msg": "init", "seq": 5, "model": "m", "seed": 1}),
        json!({"msg": "train_epoch", "seq": 6, "epoch": 0, "policy": {"n": 1, "ops": [{"kind": "rotate", "p": 1.0, "params": {"degrees": 400}}]}}),
        json!({"msg": "train_epoch", "seq": 7, "epoch": 0, "policy": {"ops": []}}),
        json!({"msg": "train_epoch", "seq": 8}),
        json!({"msg": "train_epoch", "seq": 9, "epoch": 99}),
        json!({"msg": "train_epoch", "seq": 10, "epoch": 1, "baseline": {"strategy": "trivial"}}),
    ];
    let mut t = Halving::default();
    let (code, replies) = exchange(&requests, &mut t);
    assert_eq!(code, 0);
    let codes: Vec<&str> = replies[..5].iter().map(error_code).collect();
    assert_eq!(codes, ["NOT_INITIALIZED", "NOT_INITIALIZED", "UNKNOWN_MSG", "BAD_REQUEST", "BAD_REQUEST"]);
    assert_eq!(replies[5]["msg"], "init");
    assert_eq!(error_code(&replies[6]), "INVALID_POLICY");
    assert_eq!(error_code(&replies[7]), "INVALID_POLICY");
    assert_eq!(error_code(&replies[8]), "BAD_REQUEST");
    assert_eq!(error_code(&replies[9]), "NUMERIC_DIVERGENCE");
    assert_eq!(replies[10]["msg"], "epoch_done");
    for (i, r) in replies.iter().enumerate() {
        assert_eq!(r["seq"], json!(i), "{r}");
    }
    assert_eq!(t.seen.last().unwrap(), "epoch 1 seed 0 baseline");
}

#[test]
fn unparseable_line_is_bad_request_with_null_seq() {
    let mut out = Vec::new();
    let code = serve(Cursor::new("{not json\n\n"), &mut out, &mut Halving::default());
    assert_eq!(code, 0);
    let v: Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(error_code(&v), "BAD_REQUEST");
    assert_eq!(v["seq"], Value::Null);
}

#[test]
fn version_mismatch_exits_four() {
    let requests = [
        json!({"msg": "hello", "seq": 0, "protocol": "augloop/0"}),
        json!({"msg": "init", "seq": 1, "model": "m", "seed": 1}),
    ];
    let (code, replies) = exchange(&requests, &mut Halving::default());
    assert_eq!(code, EXIT_VERSION_MISMATCH);
    assert_eq!(replies.len(), 1);
    assert_eq!(error_code(&replies[0]), "VERSION_MISMATCH");
}

/// Shell adapter whose train_epoch behaviour is chosen by its first argument.
const ADAPTER: &str = r#"
mode="$1"
while IFS= read -r line; do
  seq=$(printf '%s' "$line" | sed -n 's/.*"seq":\([0-9]*\).*/\1/p')
  case "$line" in
    *'"msg":"hello"'*) printf '{"msg":"hello","seq":%s,"protocol":"augloop/1","catalog":"%s"}\n' "$seq" "$CATALOG";;
    *'"msg":"init"'*) printf '{"msg":"init","seq":%s}\n' "$seq";;
    *'"msg":"train_epoch"'*)
      case "$mode" in
        die) exit 3;;
        hang) exec sleep 30;;
        diverge) printf '{"msg":"error","seq":%s,"code":"NUMERIC_DIVERGENCE","message":"nan"}\n' "$seq";;
        badseq) printf '{"msg":"epoch_done","seq":999,"train_loss":1.0}\n';;
        *) printf '{"msg":"epoch_done","seq":%s,"train_loss":0.75}\n' "$seq";;
      esac;;
    *'"msg":"evaluate"'*) printf '{"msg":"eval_done","seq":%s,"metrics":{"val_accuracy":0.5,"train_loss":0.75}}\n' "$seq";;
    *'"msg":"shutdown"'*) printf '{"msg":"shutdown","seq":%s}\n' "$seq"; exit 0;;
  esac
done
"#;

fn adapter(dir: &Path, mode: &str, timeout_s: f64) -> BridgeCommand {
    let script = dir.join("adapter.sh");
    std::fs::write(&script, format!("CATALOG='{CATALOG_VERSION}'\n{ADAPTER}")).unwrap();
    BridgeCommand {
        command: vec!["sh".into(), script.to_string_lossy().into_owned(), mode.into()],
        epoch_timeout_s: timeout_s,
    }
}

fn plan() -> EpochPlan<'static> {
    EpochPlan { epoch: 0, augmentation: Augmentation::None, aug_seed: 1 }
}

#[test]
fn subprocess_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = BridgeTrainer::launch(&adapter(dir.path(), "ok", 10.0), "data", "model").unwrap();
    t.init("model", 3).unwrap();
    assert_eq!(t.train_epoch(&plan()).unwrap(), 0.75);
    assert_eq!(t.train_epoch(&plan()).unwrap(), 0.75);
    let m = t.evaluate().unwrap();
    assert_eq!((m.val_accuracy, m.train_loss, m.epoch_index), (0.5, 0.75, 2));
    t.shutdown().unwrap();
}

#[test]
fn adapter_dying_mid_epoch_is_a_trainer_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = BridgeTrainer::launch(&adapter(dir.path(), "die", 10.0), "data", "model").unwrap();
    t.init("model", 3).unwrap();
    let start = Instant::now();
    match t.train_epoch(&plan()) {
        Err(TrainerError::Bridge(msg)) => assert!(msg.contains("exited during train_epoch"), "{msg}"),
        other => panic!("expected bridge error, got {other:?}"),
    }
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn hung_adapter_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = BridgeTrainer::launch(&adapter(dir.path(), "hang", 0.5), "data", "model").unwrap();
    t.init("model", 3).unwrap();
    let start = Instant::now();
    assert!(matches!(t.train_epoch(&plan()), Err(TrainerError::Timeout(_))));
    let elapsed = start.elapsed();
    assert!(elapsed >= Duration::from_millis(500) && elapsed < Duration::from_secs(5), "{elapsed:?}");
}

#[test]
fn adapter_errors_are_mapped() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = BridgeTrainer::launch(&adapter(dir.path(), "diverge", 10.0), "data", "model").unwrap();
    t.init("model", 3).unwrap();
    assert!(matches!(t.train_epoch(&plan()), Err(TrainerError::NumericDivergence { .. })));

    let mut t = BridgeTrainer::launch(&adapter(dir.path(), "badseq", 10.0), "data", "model").unwrap();
    t.init("model", 3).unwrap();
    match t.train_epoch(&plan()) {
        Err(TrainerError::Bridge(msg)) => assert!(msg.contains("seq mismatch"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn launch_rejects_bad_commands() {
    let missing = BridgeCommand { command: vec!["/nonexistent/adapter".into()], epoch_timeout_s: 1.0 };
    assert!(matches!(BridgeTrainer::launch(&missing, "d", "m"), Err(TrainerError::Bridge(_))));
    let empty = BridgeCommand { command: vec![], epoch_timeout_s: 1.0 };
    assert!(matches!(BridgeTrainer::launch(&empty, "d", "m"), Err(TrainerError::Bridge(_))));
    let dir = tempfile::tempdir().unwrap();
    let zero = adapter(dir.path(), "ok", 0.0);
    assert!(matches!(BridgeTrainer::launch(&zero, "d", "m"), Err(TrainerError::Bridge(_))));
}

fn bridge_run(dir: &Path, mode: &str, timeout_s: f64) -> (Result<(), ExecError>, PathBuf) {
    let cmd = adapter(dir, mode, timeout_s);
    let cfg = RunConfig::from_json(
        &json!({
            "method": "method2",
            "dataset": {"synthetic": {"train_per_class": 4, "valid_per_class": 2}},
            "trainer": {"bridge": {"command": cmd.command, "epoch_timeout_s": timeout_s}},
            "provider": "mock-oracle",
            "epochs": 3,
            "t_interval": 1,
            "output_dir": dir.join("out"),
        })
        .to_string(),
    )
    .unwrap();
    let ledger = cfg.ledger_path();
    (execute(&cfg).map(|_| ()), ledger)
}

fn abort_code(ledger: &Path) -> String {
    let l = read_ledger(ledger).unwrap();
    assert!(l.complete);
    match l.records.last().unwrap() {
        LedgerRecord::Abort(a) => a.code.clone(),
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn bridge_run_completes() {
    let dir = tempfile::tempdir().unwrap();
    let (res, ledger) = bridge_run(dir.path(), "ok", 10.0);
    res.unwrap();
    let l = read_ledger(&ledger).unwrap();
    assert_eq!(l.iterations().count(), 3);
    assert_eq!(l.summary().unwrap().cost.total_epochs_trained, 3);
}

#[test]
fn adapter_crash_aborts_with_ledger_record() {
    let dir = tempfile::tempdir().unwrap();
    let (res, ledger) = bridge_run(dir.path(), "die", 10.0);
    assert!(matches!(res, Err(ExecError::Run(_))), "{res:?}");
    assert_eq!(abort_code(&ledger), "TRAINER");
}

#[test]
fn adapter_timeout_aborts_with_ledger_record() {
    let dir = tempfile::tempdir().unwrap();
    let (res, ledger) = bridge_run(dir.path(), "hang", 0.5);
    assert!(matches!(res, Err(ExecError::Run(_))), "{res:?}");
    assert_eq!(abort_code(&ledger), "TRAINER_TIMEOUT");
}
