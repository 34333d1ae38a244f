use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex, Once};
use std::thread;
use std::time::Duration;

use base64::Engine;
use serde_json::Value;
use travnav_core::oracle::{Oracle, OracleQuery};
use travnav_core::Error;
use travnav_llm::{redact, request_body, response_text, ApiKey, LlmClient, LlmConfig};

const SECRET: &str = "sk-test-9f3c1e77d2a0b5c48e61";

#[derive(Clone)]
enum Reply {
    Status(u16, String),
    /// Answer with a list of the requested length.
    Echo(f64),
    Hang(Duration),
}

#[derive(Debug, Clone)]
struct Captured {
    head: String,
    body: String,
}

struct Stub {
    url: String,
    seen: Arc<Mutex<Vec<Captured>>>,
}

fn completion(content: &str) -> String {
    serde_json::json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}).to_string()
}

fn requested_count(body: &str) -> usize {
    let v: Value = serde_json::from_str(body).unwrap();
    let text = v["messages"][0]["content"][0]["text"].as_str().unwrap();
    let tail = text.split("Reply with a list of ").nth(1).unwrap();
    tail.split_whitespace().next().unwrap().parse().unwrap()
}

fn read_request(stream: &mut TcpStream) -> Option<Captured> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut head = String::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        head.push_str(&line);
        if line == "\r\n" {
            break;
        }
    }
    let len = head
        .lines()
        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
        .unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok()?;
    Some(Captured { head, body: String::from_utf8(body).unwrap() })
}

/// Serves `script` in order (the last entry repeats) on a loopback port.
fn stub(script: Vec<Reply>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (i, conn) in listener.incoming().enumerate() {
            let Ok(mut stream) = conn else { continue };
            let Some(req) = read_request(&mut stream) else { continue };
            log.lock().unwrap().push(req.clone());
            let step = script[i.min(script.len() - 1)].clone();
            let (status, body) = match step {
                Reply::Status(s, b) => (s, b),
                Reply::Echo(v) => {
                    let n = requested_count(&req.body);
                    let list: Vec<String> = (0..n).map(|_| format!("{v}")).collect();
                    (200, completion(&format!("[{}]", list.join(", "))))
                }
                Reply::Hang(d) => {
                    thread::sleep(d);
                    continue;
                }
            };
            let reason = if status == 200 { "OK" } else { "Internal Server Error" };
            let _ = write!(
                stream,
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    Stub { url, seen }
}

fn config(url: &str) -> LlmConfig {
    LlmConfig { endpoint: url.to_string(), timeout_secs: 5.0, max_retries: 2, backoff_base_secs: 0.01, ..LlmConfig::default() }
}

fn client(url: &str) -> LlmClient {
    LlmClient::with_key(config(url), ApiKey::new(SECRET).unwrap()).unwrap()
}

fn query(n: u32) -> OracleQuery {
    OracleQuery {
        image: image::RgbImage::from_pixel(8, 6, image::Rgb([10, 120, 30])),
        n_regions: n,
        prompt: travnav_core::oracle::build_prompt(&Default::default(), n),
        footprints: vec![Vec::new(); n as usize],
    }
}

// Captures every log record emitted in this test binary.
struct Capture(Mutex<Vec<String>>);

impl log::Log for Capture {
    fn enabled(&self, _: &log::Metadata) -> bool {
        true
    }
    fn log(&self, r: &log::Record) {
        self.0.lock().unwrap().push(format!("{} {}", r.target(), r.args()));
    }
    fn flush(&self) {}
}

static LOGS: Capture = Capture(Mutex::new(Vec::new()));
static INIT: Once = Once::new();

fn capture_logs() {
    INIT.call_once(|| {
        log::set_logger(&LOGS).unwrap();
        log::set_max_level(log::LevelFilter::Trace);
    });
}

#[test]
fn reply_values_and_latency() {
    let s = stub(vec![Reply::Status(200, completion("Sure: [0.5, 0.5]"))]);
    let r = client(&s.url).llm_query(&query(2)).unwrap();
    assert_eq!(r.values, vec![0.5, 0.5]);
    assert!(r.latency > 0.0);
    assert_eq!(s.seen.lock().unwrap().len(), 1);
}

#[test]
fn request_matches_wire_schema() {
    let s = stub(vec![Reply::Echo(0.7)]);
    let mut c = client(&s.url);
    let r = c.query(&query(3)).unwrap();
    assert_eq!(r.values, vec![0.7; 3]);
    let req = s.seen.lock().unwrap()[0].clone();
    assert!(req.head.starts_with("POST /v1/chat/completions HTTP/1.1\r\n"));
    let lower = req.head.to_ascii_lowercase();
    assert!(lower.contains("content-type: application/json"));
    assert!(req.head.contains(&format!("Bearer {SECRET}")));

    let v: Value = serde_json::from_str(&req.body).unwrap();
    let obj = v.as_object().unwrap();
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["max_tokens", "messages", "model", "temperature"]);
    assert_eq!(v["model"], "gpt-4o");
    assert_eq!(v["temperature"], 0);
    let msgs = v["messages"].as_array().unwrap();
    assert_eq!(msgs.len(), 1);
    assert_eq!(msgs[0]["role"], "user");
    let parts = msgs[0]["content"].as_array().unwrap();
    assert_eq!(parts.len(), 2);
    assert_eq!(parts[0]["type"], "text");
    assert_eq!(parts[0]["text"], query(3).prompt);
    assert_eq!(parts[1]["type"], "image_url");
    let url = parts[1]["image_url"]["url"].as_str().unwrap();
    let b64 = url.strip_prefix("data:image/png;base64,").unwrap();
    let png = base64::engine::general_purpose::STANDARD.decode(b64).unwrap();
    let img = image::load_from_memory(&png).unwrap().to_rgb8();
    assert_eq!(img, query(3).image);
    assert!(!req.body.contains(SECRET));
}

#[test]
fn retries_after_server_errors() {
    let s = stub(vec![
        Reply::Status(500, "{}".into()),
        Reply::Status(500, "{}".into()),
        Reply::Status(200, completion("[0.1]")),
    ]);
    let c = client(&s.url);
    let png = travnav_core::segmentation::encode_png(&query(1).image).unwrap();
    let out = c.complete("hello", &png).unwrap();
    assert_eq!(out.attempts, 3);
    assert_eq!(out.text, "[0.1]");
    assert_eq!(s.seen.lock().unwrap().len(), 3);
}

#[test]
fn exhausted_retries_are_unavailable() {
    let s = stub(vec![Reply::Status(503, "{\"error\": \"overloaded\"}".into())]);
    let mut cfg = config(&s.url);
    cfg.max_retries = 1;
    let c = LlmClient::with_key(cfg, ApiKey::new(SECRET).unwrap()).unwrap();
    let err = c.llm_query(&query(2)).unwrap_err();
    assert!(matches!(err, Error::OracleUnavailable(_)), "{err:?}");
    assert_eq!(s.seen.lock().unwrap().len(), 2);
}

#[test]
fn hanging_server_times_out() {
    let s = stub(vec![Reply::Hang(Duration::from_secs(3))]);
    let mut cfg = config(&s.url);
    cfg.max_retries = 0;
    cfg.timeout_secs = 0.3;
    let c = LlmClient::with_key(cfg, ApiKey::new(SECRET).unwrap()).unwrap();
    let t = std::time::Instant::now();
    let err = c.llm_query(&query(2)).unwrap_err();
    assert!(matches!(err, Error::OracleUnavailable(_)), "{err:?}");
    assert!(t.elapsed() < Duration::from_secs(2));
}

#[test]
fn unusable_model_text_is_a_parse_error() {
    let s = stub(vec![Reply::Status(200, completion("I cannot help with that."))]);
    assert!(matches!(client(&s.url).llm_query(&query(2)).unwrap_err(), Error::Parse));
    let s = stub(vec![Reply::Status(200, completion("[0.2, 0.3, 0.4]"))]);
    assert!(matches!(client(&s.url).llm_query(&query(2)).unwrap_err(), Error::Length { expected: 2, got: 3 }));
}

#[test]
fn backoff_schedule() {
    let c = LlmConfig::default();
    assert_eq!(c.backoff(1), Duration::from_secs(1));
    assert_eq!(c.backoff(2), Duration::from_secs(2));
    assert_eq!(c.backoff(4), Duration::from_secs(8));
}

#[test]
fn config_and_key_validation() {
    let ok = LlmConfig::default();
    ok.validate().unwrap();
    for bad in [
        LlmConfig { timeout_secs: 0.0, ..ok.clone() },
        LlmConfig { endpoint: "ftp://x".into(), ..ok.clone() },
        LlmConfig { model: " ".into(), ..ok.clone() },
        LlmConfig { backoff_factor: 0.5, ..ok.clone() },
    ] {
        assert!(bad.validate().unwrap_err().is_validation());
    }
    assert!(ApiKey::new("").is_err());
    assert!(ApiKey::new("a\nb").is_err());

    let var = "TRAVNAV_TEST_KEY_UNSET_41";
    let cfg = LlmConfig { api_key_env: var.into(), ..ok.clone() };
    let err = LlmClient::new(cfg.clone()).unwrap_err();
    assert!(err.to_string().contains(var));
    std::env::set_var("TRAVNAV_TEST_KEY_SET_41", SECRET);
    let c = LlmClient::new(LlmConfig { api_key_env: "TRAVNAV_TEST_KEY_SET_41".into(), ..ok }).unwrap();
    assert!(!format!("{c:?}").contains(SECRET));
    assert!(!format!("{:?}", ApiKey::new(SECRET).unwrap()).contains(SECRET));
}

#[test]
fn response_shapes() {
    assert_eq!(response_text(&completion("[1]")).unwrap(), "[1]");
    let parts = r#"{"choices":[{"message":{"content":[{"type":"text","text":"[0.2,"},{"type":"text","text":" 0.4]"}]}}]}"#;
    assert_eq!(response_text(parts).unwrap(), "[0.2, 0.4]");
    assert!(response_text("{}").is_err());
    assert!(response_text("not json").is_err());
    assert_eq!(redact(&format!("Bearer {SECRET} x"), SECRET), "Bearer <redacted> x");
    let body = request_body(&LlmConfig { max_tokens: None, ..LlmConfig::default() }, "p", &[1, 2, 3]);
    assert!(body.get("max_tokens").is_none());
}

#[test]
fn credential_never_reaches_logs_errors_or_traces() {
    capture_logs();
    // a server that echoes the Authorization header back in its error body
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    thread::spawn(move || {
        for conn in listener.incoming() {
            let Ok(mut stream) = conn else { continue };
            let Some(req) = read_request(&mut stream) else { continue };
            let auth = req.head.lines().find(|l| l.to_ascii_lowercase().starts_with("authorization")).unwrap_or("").to_string();
            let body = format!("{{\"error\": \"bad header {auth}\"}}");
            let _ = write!(
                stream,
                "HTTP/1.1 401 Unauthorized\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    let mut c = client(&url);
    let err = c.query(&query(2)).unwrap_err();
    assert!(!err.to_string().contains(SECRET));
    assert!(!format!("{err:?}").contains(SECRET));
    assert!(err.to_string().contains("<redacted>"));

    // a whole episode against the stub writes a trace with no key in it
    let ok = stub(vec![Reply::Status(500, "{}".into()), Reply::Echo(0.9)]);
    let mut c = client(&ok.url);
    let world = travnav_core::sim::World::canonical("open_field").unwrap();
    let mut cfg = travnav_core::sim::SimConfig::default();
    cfg.limits.max_time = 6.0;
    let ep = travnav_core::sim::run_episode_with(&world, &cfg, 0, &mut c).unwrap();
    assert!(ep.result.fused >= 1);
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    ep.write_trace(&trace).unwrap();
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(!text.contains(SECRET));
    assert!(!serde_json::to_string(&ep.result).unwrap().contains(SECRET));

    let logs = LOGS.0.lock().unwrap();
    assert!(!logs.is_empty());
    for line in logs.iter() {
        assert!(!line.contains(SECRET), "leaked in log: {line}");
    }
}
