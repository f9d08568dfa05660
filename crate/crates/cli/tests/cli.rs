use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;
use std::time::Duration;

use claimlens_core::corpus::{Speaker, Utterance};
use claimlens_core::service::{Control, Inbound, InboundBody, Outbound, OutboundBody};
use claimlens_core::tracker::{LogRecord, Snapshot};
use futures_util::{SinkExt, StreamExt};
use tempfile::TempDir;
use tokio_tungstenite::tungstenite::Message;

const CONFIG: &str = "#claimlens-config-v1
data_dir = \"unused\"

[models]
modes = [\"single\", \"mtl\"]
test_fraction = 0.25

[train]
epochs = 4
dim = 8
embed_dim = 8
";

fn claimlens(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_claimlens"))
        .arg("--config")
        .arg(dir.join("claimlens.toml"))
        .arg("--data-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// A data root with a generated corpus and a trained bundle.
fn prepared() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("claimlens.toml"), CONFIG).unwrap();
        let gen = claimlens(
            dir.path(),
            &["gen", "--dialogues", "12", "--kb-size", "10", "--seed", "5"],
        );
        assert!(stdout(&gen).contains("wrote 12 dialogues"));
        let train = claimlens(dir.path(), &["train"]);
        assert!(
            stdout(&train).contains("modes [single, mtl]"),
            "{}",
            stdout(&train)
        );
        dir
    })
    .path()
}

fn first_transcript(root: &Path) -> PathBuf {
    let mut dirs: Vec<_> = std::fs::read_dir(root.join("corpus"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    dirs.sort();
    dirs[0].join("transcript.jsonl")
}

#[test]
fn generated_files_are_versioned() {
    let root = prepared();
    for f in ["schema.jsonl", "kb.jsonl", "bundle.model"] {
        assert!(root.join(f).is_file(), "{f}");
    }
    let t = std::fs::read_to_string(first_transcript(root)).unwrap();
    assert!(t.starts_with('#'));
}

#[test]
fn run_prints_events_then_snapshot() {
    let root = prepared();
    let t = first_transcript(root);
    let out = stdout(&claimlens(
        root,
        &["run", t.to_str().unwrap(), "--snapshot"],
    ));
    let lines: Vec<&str> = out.lines().collect();
    let (last, events) = lines.split_last().unwrap();
    assert!(!events.is_empty());
    let mut prev = 0;
    for l in events {
        let LogRecord::Event { event } = serde_json::from_str(l).unwrap() else {
            panic!("not an event: {l}");
        };
        assert!(event.seq > prev);
        prev = event.seq;
    }
    let snap: Snapshot = serde_json::from_str(last).unwrap();
    assert_eq!(snap.event_count, events.len());

    let again = stdout(&claimlens(
        root,
        &["run", t.to_str().unwrap(), "--snapshot"],
    ));
    assert_eq!(out, again);
}

#[test]
fn eval_writes_both_report_formats() {
    let root = prepared();
    let out_dir = root.join("eval-out");
    let text = stdout(&claimlens(
        root,
        &["eval", "--out", out_dir.to_str().unwrap()],
    ));
    assert!(text.contains("Recall@5"));
    assert!(text.contains("Extraction precision"));
    assert_eq!(
        std::fs::read_to_string(out_dir.join("report.txt")).unwrap(),
        text
    );
    let json = std::fs::read_to_string(out_dir.join("report.jsonl")).unwrap();
    for l in json.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v.get("table").is_some(), "{l}");
    }
    let as_json = stdout(&claimlens(
        root,
        &["eval", "--format", "json", "--no-baseline"],
    ));
    assert!(as_json.lines().all(|l| l.starts_with('{')));
}

#[test]
fn bad_config_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("claimlens.toml"),
        "#claimlens-config-v1\nbogus = 1\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_claimlens"))
        .arg("--config")
        .arg(dir.path().join("claimlens.toml"))
        .args(["check", "--seeds", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn check_reports_pass_lines() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("claimlens.toml"), CONFIG).unwrap();
    let out = stdout(&claimlens(dir.path(), &["check", "--seeds", "2"]));
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines.len() >= 4, "{out}");
    assert!(lines.iter().all(|l| l.starts_with("PASS ")), "{out}");
}

struct Server(std::process::Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn send(seq: u64, session_id: Option<String>, body: InboundBody) -> Message {
    let msg = Inbound {
        session_id,
        seq,
        body,
    };
    Message::Text(serde_json::to_string(&msg).unwrap().into())
}

#[tokio::test(flavor = "multi_thread")]
async fn websocket_session_round_trip() {
    let root = prepared();
    let mut child = Command::new(env!("CARGO_BIN_EXE_claimlens"))
        .arg("--config")
        .arg(root.join("claimlens.toml"))
        .arg("--data-dir")
        .arg(root)
        .args(["serve", "--port", "0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let _server = Server(child);
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .expect(&line)
        .to_string();

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws"))
        .await
        .unwrap();

    ws.send(send(
        1,
        None,
        InboundBody::Control {
            control: Control::Open,
        },
    ))
    .await
    .unwrap();
    let opened = next(&mut ws).await;
    let id = opened.session_id.clone().unwrap();
    assert!(matches!(opened.body, OutboundBody::Opened { .. }));
    assert!(matches!(
        next(&mut ws).await.body,
        OutboundBody::Ack { in_reply_to: 1 }
    ));

    let utt = Utterance::new(0, Speaker::Assessor, "Which hospital did you go to?");
    ws.send(send(
        2,
        Some(id.clone()),
        InboundBody::Transcript { utterance: utt },
    ))
    .await
    .unwrap();
    loop {
        let m = next(&mut ws).await;
        assert_eq!(m.session_id.as_deref(), Some(id.as_str()));
        match m.body {
            OutboundBody::Event { .. } => {}
            OutboundBody::Ack { in_reply_to } => {
                assert_eq!(in_reply_to, 2);
                break;
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    ws.send(Message::Text("not json".into())).await.unwrap();
    match next(&mut ws).await.body {
        OutboundBody::Error { code, .. } => assert_eq!(code, "parse"),
        other => panic!("unexpected {other:?}"),
    }

    ws.send(send(
        3,
        Some(id.clone()),
        InboundBody::Control {
            control: Control::Close,
        },
    ))
    .await
    .unwrap();
    assert!(matches!(
        next(&mut ws).await.body,
        OutboundBody::Closed { .. }
    ));
    let log = root.join("sessions").join(format!("{id}.events"));
    assert!(log.is_file(), "{}", log.display());
}

async fn next<S>(ws: &mut S) -> Outbound
where
    S: StreamExt<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
        .await
        .expect("reply in time")
        .expect("stream open")
        .expect("frame");
    serde_json::from_str(msg.to_text().unwrap()).unwrap()
}
