//! Talks to a completion server. Pass a base URL to use a real server
//! (e.g. `http://127.0.0.1:8080`); without one a tiny local stand-in answers.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use codeeval::backend::{Backend, GenerationParams, GenerationRequest, HttpBackend, HttpBackendConfig, RequestContext};

fn stand_in() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let mut reader = BufReader::new(stream);
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let reply = r#"{"content": "```python\nprint('hi')\n```", "tokens_evaluated": 12, "tokens_predicted": 9}"#;
            let mut stream = reader.into_inner();
            write!(stream, "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}", reply.len()).unwrap();
        }
    });
    url
}

pub fn main() {
    run(std::env::args().nth(1));
}

pub fn run(url: Option<String>) {
    let url = url.unwrap_or_else(stand_in);
    let mut config = HttpBackendConfig::new(&url);
    config.max_attempts = 2;
    let backend = HttpBackend::new("local", config).unwrap();
    match backend.load() {
        Ok(()) => println!("{url} reachable"),
        Err(e) => println!("health probe failed: {e}"),
    }
    let params = GenerationParams {
        max_new_tokens: 64,
        ..Default::default()
    };
    let context = RequestContext {
        task_id: "demo".into(),
        attempt_index: 0,
        chain_depth: 0,
    };
    match backend.generate(&GenerationRequest {
        prompt: "Write hello world in Python.",
        params: &params,
        context: &context,
    }) {
        Ok(r) => println!(
            "{:?}\nprompt tokens {}, completion tokens {}, estimated {}",
            r.text, r.prompt_tokens, r.completion_tokens, r.estimated
        ),
        Err(e) => println!("generation failed: {e}"),
    }
}
