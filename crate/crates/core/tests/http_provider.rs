use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use pillm::llm::{
    CompletionRequest, HttpConfig, HttpProvider, Provider, ProviderError, RequestTag, RetryPolicy,
};

/// Serves canned HTTP responses in order, repeating the last one, and counts
/// requests. Returns the endpoint URL.
fn serve(responses: Vec<(u16, String)>, hits: Arc<AtomicUsize>, auth: Arc<std::sync::Mutex<Vec<String>>>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth.lock().unwrap().push(line.trim().to_string());
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            let n = hits.fetch_add(1, Ordering::SeqCst);
            let (status, text) = responses[n.min(responses.len() - 1)].clone();
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    format!("http://{addr}/v1/chat/completions")
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        base_delay: Duration::from_millis(1),
        factor: 2.0,
        max_attempts: 5,
    }
}

fn request() -> CompletionRequest {
    CompletionRequest::new(RequestTag::Init, "system", "user")
}

const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"return $a > 1"}}]}"#;

#[test]
fn persistent_server_errors_stop_after_five_attempts() {
    let hits = Arc::new(AtomicUsize::new(0));
    let url = serve(vec![(503, "{}".into())], hits.clone(), Default::default());
    let p = HttpProvider::new(HttpConfig::new(url, "m"), None).unwrap().with_retry(fast_retry());
    let err = p.complete(&request()).unwrap_err();
    assert!(matches!(err, ProviderError::Network { attempts: 5, .. }), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 5);
}

#[test]
fn transient_errors_are_retried() {
    let hits = Arc::new(AtomicUsize::new(0));
    let auth = Arc::new(std::sync::Mutex::new(Vec::new()));
    let url = serve(
        vec![(429, "{}".into()), (500, "{}".into()), (200, OK_BODY.into())],
        hits.clone(),
        auth.clone(),
    );
    let p = HttpProvider::new(HttpConfig::new(url, "m"), Some("k3y".into()))
        .unwrap()
        .with_retry(fast_retry());
    let r = p.complete(&request()).unwrap();
    assert_eq!(r.text, "return $a > 1");
    assert_eq!(r.attempt, 3);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    assert!(auth.lock().unwrap().iter().all(|h| h.ends_with("Bearer k3y")));
}

#[test]
fn client_errors_are_not_retried() {
    let hits = Arc::new(AtomicUsize::new(0));
    let url = serve(vec![(401, "{\"error\":\"no\"}".into())], hits.clone(), Default::default());
    let p = HttpProvider::new(HttpConfig::new(url, "m"), None).unwrap().with_retry(fast_retry());
    let err = p.complete(&request()).unwrap_err();
    assert!(matches!(err, ProviderError::Rejected { status: 401, .. }));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn unreachable_endpoint_is_a_network_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = HttpConfig::new(format!("http://127.0.0.1:{port}/v1"), "m");
    let p = HttpProvider::new(cfg, None).unwrap().with_retry(fast_retry());
    assert!(matches!(p.complete(&request()), Err(ProviderError::Network { attempts: 5, .. })));
}
