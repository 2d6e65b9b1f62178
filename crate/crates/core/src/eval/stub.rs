//! A scripted, in-process HTTP endpoint speaking the chat and completion
//! wire formats. Used by tests and for offline smoke runs.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde_json::{json, Value};

/// What the stub saw in one request.
#[derive(Debug, Clone)]
pub struct StubRequest {
    pub path: String,
    pub authorization: Option<String>,
    pub body: Value,
    /// The user message (chat) or the prompt (completion).
    pub prompt: String,
    /// 0-based index of this request since the server started.
    pub sequence: usize,
}

#[derive(Debug, Clone)]
pub enum StubReply {
    /// 200 with the text wrapped in the wire format matching the path.
    Text(String),
    /// Arbitrary status and raw body.
    Raw { status: u16, body: String },
}

type Responder = dyn Fn(&StubRequest) -> StubReply + Send + Sync;

pub struct StubServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    requests: Arc<AtomicUsize>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start<F>(responder: F) -> std::io::Result<Self>
    where
        F: Fn(&StubRequest) -> StubReply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(AtomicUsize::new(0));
        let responder: Arc<Responder> = Arc::new(responder);

        let handle = {
            let shutdown = Arc::clone(&shutdown);
            let requests = Arc::clone(&requests);
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let responder = Arc::clone(&responder);
                    let requests = Arc::clone(&requests);
                    thread::spawn(move || {
                        let _ = serve(stream, &*responder, &requests);
                    });
                }
            })
        };
        Ok(Self {
            addr,
            shutdown,
            requests,
            handle: Some(handle),
        })
    }

    /// Replies with a fixed text to every request.
    pub fn constant(text: &str) -> std::io::Result<Self> {
        let text = text.to_string();
        Self::start(move |_| StubReply::Text(text.clone()))
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, responder: &Responder, counter: &AtomicUsize) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();

    let mut content_length = 0usize;
    let mut authorization = None;
    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 {
            break;
        }
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            let value = value.trim();
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.parse().unwrap_or(0);
            } else if name.eq_ignore_ascii_case("authorization") {
                authorization = Some(value.to_string());
            }
        }
    }
    let mut raw = vec![0u8; content_length];
    reader.read_exact(&mut raw)?;
    let body: Value = serde_json::from_slice(&raw).unwrap_or(Value::Null);
    let prompt = body["messages"]
        .as_array()
        .and_then(|m| m.iter().rev().find(|m| m["role"] == "user"))
        .and_then(|m| m["content"].as_str())
        .or_else(|| body["prompt"].as_str())
        .unwrap_or_default()
        .to_string();

    let request = StubRequest {
        sequence: counter.fetch_add(1, Ordering::SeqCst),
        path,
        authorization,
        body,
        prompt,
    };
    let (status, payload) = match responder(&request) {
        StubReply::Text(text) => {
            let wrapped = if request.path.ends_with("/v1/completions") {
                json!({"choices": [{"index": 0, "text": text}]})
            } else {
                json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]})
            };
            (200, wrapped.to_string())
        }
        StubReply::Raw { status, body } => (status, body),
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} STUB\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    stream.flush()
}
