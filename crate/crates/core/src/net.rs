//! Minimal HTTP/1.1 JSON POST over plain TCP. The predictor and proposer
//! services speak JSON over localhost HTTP; no TLS involved.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use crate::error::{Error, Result};

/// POST a JSON body to an http:// URL and return the response body.
/// Transport failures (connect, timeout) and non-200 statuses are errors.
pub fn http_post_json(
    url: &str,
    path_suffix: &str,
    body: &str,
    timeout: Duration,
) -> Result<String> {
    let (host_port, base_path) = split_url(url)?;
    let path = if path_suffix.is_empty() {
        if base_path.is_empty() {
            "/".to_string()
        } else {
            base_path
        }
    } else {
        let base = base_path.trim_end_matches('/');
        format!("{base}/{}", path_suffix.trim_start_matches('/'))
    };

    let mut stream = TcpStream::connect(&host_port)
        .map_err(|e| Error::Transport(format!("connect to {host_port}: {e}")))?;
    stream
        .set_read_timeout(Some(timeout))
        .map_err(|e| Error::Transport(e.to_string()))?;
    stream
        .set_write_timeout(Some(timeout))
        .map_err(|e| Error::Transport(e.to_string()))?;

    let request = format!(
        "POST {path} HTTP/1.1\r\nHost: {host_port}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream
        .write_all(request.as_bytes())
        .map_err(|e| Error::Transport(format!("write to {host_port}: {e}")))?;

    let mut raw = Vec::new();
    stream
        .read_to_end(&mut raw)
        .map_err(|e| Error::Transport(format!("read from {host_port}: {e}")))?;
    let text = String::from_utf8_lossy(&raw);

    let mut parts = text.splitn(2, "\r\n\r\n");
    let head = parts.next().unwrap_or("");
    let body = parts.next().unwrap_or("").to_string();
    let status_line = head.lines().next().unwrap_or("");
    let status = status_line
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse::<u16>().ok())
        .ok_or_else(|| Error::Protocol(format!("malformed status line {status_line:?}")))?;
    if status != 200 {
        return Err(Error::Protocol(format!("server returned status {status}")));
    }

    // Honor Content-Length when present; with Connection: close the body is
    // whatever followed the header block otherwise.
    let content_length = head.lines().find_map(|l| {
        let (k, v) = l.split_once(':')?;
        if k.trim().eq_ignore_ascii_case("content-length") {
            v.trim().parse::<usize>().ok()
        } else {
            None
        }
    });
    match content_length {
        Some(len) if body.len() >= len => Ok(body[..len].to_string()),
        _ => Ok(body),
    }
}

/// Split "http://host:port/path" into (host:port, /path).
fn split_url(url: &str) -> Result<(String, String)> {
    let rest = url
        .strip_prefix("http://")
        .ok_or_else(|| Error::Transport(format!("only http:// URLs are supported, got {url:?}")))?;
    match rest.split_once('/') {
        Some((host, path)) => Ok((host.to_string(), format!("/{path}"))),
        None => Ok((rest.to_string(), String::new())),
    }
}

#[cfg(test)]
pub(crate) mod test_server {
    //! A one-shot HTTP test server: accepts connections, hands the request
    //! body to a handler, writes the JSON response.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    pub fn spawn(handler: impl Fn(String) -> String + Send + 'static) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let mut reader = BufReader::new(stream);
                let mut content_length = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).is_err() || line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.trim().eq_ignore_ascii_case("content-length") {
                            content_length = v.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0u8; content_length];
                reader.read_exact(&mut body).ok();
                let response_body = handler(String::from_utf8_lossy(&body).to_string());
                let mut stream = reader.into_inner();
                let response = format!(
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    response_body.len(),
                    response_body
                );
                stream.write_all(response.as_bytes()).ok();
            }
        });
        format!("http://{addr}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn posts_json_and_reads_response() {
        let url = test_server::spawn(|body| {
            assert!(body.contains("\"ping\""));
            "{\"pong\":true}".to_string()
        });
        let response = http_post_json(&url, "", "{\"ping\":1}", Duration::from_secs(5)).unwrap();
        assert_eq!(response, "{\"pong\":true}");
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let err = http_post_json(
            "http://127.0.0.1:1",
            "predict",
            "{}",
            Duration::from_millis(200),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Transport(_)));
    }
}
