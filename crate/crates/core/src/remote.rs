//! Blocking JSON-over-HTTP client shared by the remote embedder and scorer.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{MeveError, Result};

#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    base: String,
}

impl JsonClient {
    pub fn new(endpoint: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            agent,
            base: endpoint.trim_end_matches('/').to_string(),
        }
    }

    /// POST `body` to `<endpoint><route>` and decode a JSON reply.
    pub fn post<B: Serialize, R: DeserializeOwned>(&self, route: &str, body: &B) -> Result<R> {
        let url = format!("{}{}", self.base, route);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| MeveError::Transport(format!("{url}: {e}")))?;
        let status = resp.status();
        if status != 200 {
            return Err(MeveError::Transport(format!("{url}: HTTP {status}")));
        }
        resp.body_mut()
            .read_json::<R>()
            .map_err(|e| MeveError::Protocol(format!("{url}: malformed response body: {e}")))
    }
}

#[cfg(test)]
pub(crate) mod testing {
    //! One-shot HTTP stub for exercising the wire protocols.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    pub struct Stub {
        pub url: String,
        pub requests: mpsc::Receiver<(String, String)>,
    }

    /// Serve `responses` in order, one per connection, recording (path, body).
    pub fn serve(responses: Vec<(u16, String)>) -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
                let mut content_length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap();
                    }
                }
                let mut req_body = vec![0u8; content_length];
                reader.read_exact(&mut req_body).unwrap();
                let _ = tx.send((path, String::from_utf8_lossy(&req_body).into_owned()));
                let mut stream = stream;
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        Stub { url, requests: rx }
    }
}
