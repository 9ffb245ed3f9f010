//! A local stand-in for the model endpoint that replays canned outputs.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::{ModelRequest, ModelResponse};

type Responder = dyn Fn(&ModelRequest) -> String + Send + Sync;

#[derive(Default)]
struct Shared {
    requests: AtomicUsize,
    last_request: Mutex<Option<ModelRequest>>,
    last_authorization: Mutex<Option<String>>,
}

/// HTTP server on a loopback port answering every POST with
/// `{"output": ...}` computed by a responder closure.
pub struct FixtureServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    shared: Arc<Shared>,
    handle: Option<JoinHandle<()>>,
}

impl FixtureServer {
    pub fn start<F>(responder: F, delay: Duration) -> std::io::Result<Self>
    where
        F: Fn(&ModelRequest) -> String + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let shared = Arc::new(Shared::default());
        let responder: Arc<Responder> = Arc::new(responder);
        let handle = {
            let stop = stop.clone();
            let shared = shared.clone();
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let shared = shared.clone();
                    let responder = responder.clone();
                    std::thread::spawn(move || {
                        if let Err(e) = serve_one(stream, &*responder, &shared, delay) {
                            log::debug!("fixture connection failed: {e}");
                        }
                    });
                }
            })
        };
        Ok(Self { addr, stop, shared, handle: Some(handle) })
    }

    /// Always answers with `output`.
    pub fn fixed(output: impl Into<String>, delay: Duration) -> std::io::Result<Self> {
        let output = output.into();
        Self::start(move |_| output.clone(), delay)
    }

    /// Answers with the outputs in order, repeating the last one.
    pub fn sequence(outputs: Vec<String>) -> std::io::Result<Self> {
        let next = AtomicUsize::new(0);
        Self::start(
            move |_| {
                let i = next.fetch_add(1, Ordering::SeqCst).min(outputs.len().saturating_sub(1));
                outputs.get(i).cloned().unwrap_or_default()
            },
            Duration::ZERO,
        )
    }

    /// Answers with the transcript whose command appears on the prompt's
    /// `User Command:` line.
    pub fn transcripts(pairs: Vec<(String, String)>) -> std::io::Result<Self> {
        Self::start(
            move |req| {
                let line = req
                    .prompt
                    .lines()
                    .rev()
                    .find(|l| l.starts_with("User Command:"))
                    .unwrap_or("")
                    .to_lowercase();
                pairs
                    .iter()
                    .find(|(command, _)| line.contains(&command.to_lowercase()))
                    .map(|(_, t)| t.clone())
                    .unwrap_or_default()
            },
            Duration::ZERO,
        )
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/plan", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }

    pub fn last_request(&self) -> Option<ModelRequest> {
        self.shared.last_request.lock().unwrap().clone()
    }

    pub fn last_authorization(&self) -> Option<String> {
        self.shared.last_authorization.lock().unwrap().clone()
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve_one(stream: TcpStream, responder: &Responder, shared: &Shared, delay: Duration) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut content_length = 0usize;
    let mut authorization = None;
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.is_empty() {
        return Ok(());
    }
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let value = value.trim();
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.parse().unwrap_or(0);
            } else if name.eq_ignore_ascii_case("authorization") {
                authorization = Some(value.to_string());
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let (status, payload) = match serde_json::from_slice::<ModelRequest>(&body) {
        Ok(req) => {
            shared.requests.fetch_add(1, Ordering::SeqCst);
            *shared.last_authorization.lock().unwrap() = authorization;
            let output = responder(&req);
            *shared.last_request.lock().unwrap() = Some(req);
            ("200 OK", serde_json::to_string(&ModelResponse { output }).unwrap())
        }
        Err(e) => ("400 Bad Request", serde_json::json!({ "error": e.to_string() }).to_string()),
    };
    if !delay.is_zero() {
        std::thread::sleep(delay);
    }
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    stream.flush()
}
