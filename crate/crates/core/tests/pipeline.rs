use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use meve_core::store::{load_index_dir, write_index_dir};
use meve_core::{
    build_bm25, build_index, Bm25Params, Corpus, EmbedderSpec, MeveError, Mode, Pipeline, PipelineConfig, RawDocument,
    VerifierSpec,
};
use serde_json::{json, Value};

fn docs() -> Vec<RawDocument> {
    [
        "Paris is the capital of France. It sits on the Seine. Many tourists visit every year.",
        "Berlin is the capital of Germany. The Spree flows through the city.",
        "The Pacific is the largest ocean. It borders Asia and the Americas.",
        "Photosynthesis converts light into chemical energy. Leaves contain chlorophyll.",
    ]
    .iter()
    .enumerate()
    .map(|(i, t)| RawDocument {
        doc_id: format!("doc{i}"),
        title: format!("T{i}"),
        text: t.to_string(),
    })
    .collect()
}

fn strip_timings(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("phase_timings");
    v
}

#[test]
fn persisted_index_answers_identically() {
    let corpus = Corpus::from_documents(&docs()).unwrap();
    let config = PipelineConfig {
        embedder: EmbedderSpec::HashTf { dims: 64 },
        ..Default::default()
    };
    let built = Pipeline::build(config.clone(), corpus.clone()).unwrap();

    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("idx");
    let vectors = build_index(&corpus, &config.embedder).unwrap();
    let bm25 = build_bm25(&corpus, Bm25Params::default()).unwrap();
    write_index_dir(&dir, &corpus, &vectors, &bm25).unwrap();
    let (c, v, b) = load_index_dir(&dir).unwrap();
    let loaded = Pipeline::new(config, c, v, b).unwrap();

    for q in [
        "capital of France",
        "largest ocean",
        "chlorophyll energy",
        "nothing relevant",
    ] {
        for mode in Mode::ALL {
            let a = serde_json::to_value(built.run_query_mode(q, mode).unwrap()).unwrap();
            let b = serde_json::to_value(loaded.run_query_mode(q, mode).unwrap()).unwrap();
            assert_eq!(strip_timings(a), strip_timings(b), "{q} {mode}");
        }
    }
}

#[test]
fn dimension_mismatch_is_rejected() {
    let corpus = Corpus::from_documents(&docs()).unwrap();
    let vectors = build_index(&corpus, &EmbedderSpec::HashTf { dims: 32 }).unwrap();
    let bm25 = build_bm25(&corpus, Bm25Params::default()).unwrap();
    let config = PipelineConfig::default();
    assert!(matches!(
        Pipeline::new(config, corpus, vectors, bm25),
        Err(MeveError::Config(_))
    ));
}

/// Minimal HTTP server answering each request with `respond(path, body)`.
fn serve(respond: impl Fn(&str, &Value) -> Value + Send + 'static) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
            let mut len = 0;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h.trim().is_empty() {
                    break;
                }
                if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let req: Value = serde_json::from_slice(&body).unwrap();
            let out = respond(&path, &req).to_string();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
                out.len()
            )
            .unwrap();
        }
    });
    url
}

#[test]
fn remote_embedder_and_scorer() {
    // Embeds each text as [len, 1, 0]; scores by whether the document mentions "capital".
    let url = serve(|path, req| match path {
        "/embed" => {
            let vectors: Vec<Value> = req["texts"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| json!([t.as_str().unwrap().len() as f64, 1.0, 0.0]))
                .collect();
            json!({ "vectors": vectors })
        }
        "/score" => {
            let logits: Vec<f64> = req["documents"]
                .as_array()
                .unwrap()
                .iter()
                .map(|d| {
                    if d.as_str().unwrap().contains("capital") {
                        4.0
                    } else {
                        -4.0
                    }
                })
                .collect();
            json!({ "logits": logits })
        }
        _ => json!({}),
    });
    let config = PipelineConfig {
        embedder: EmbedderSpec::Remote {
            dims: 3,
            endpoint: url.clone(),
        },
        verifier: VerifierSpec::Remote { endpoint: url },
        n_min: 2,
        theta: 1.0,
        ..Default::default()
    };
    let corpus = Corpus::from_documents(&docs()).unwrap();
    let pipeline = Pipeline::build(config, corpus).unwrap();
    let r = pipeline.run_query("which city is the capital").unwrap();
    assert!(!r.fallback_triggered);
    assert_eq!(r.phase_counts.c_ver, 2);
    assert!(r
        .trace
        .c_ver
        .iter()
        .all(|c| (c.score - 1.0 / (1.0 + (-4.0f64).exp())).abs() < 1e-12));
    assert!(r.final_context.text.contains("Paris is the capital of France."));
    assert!(r.final_context.text.contains("Berlin is the capital of Germany."));
}

#[test]
fn protocol_violations_are_reported() {
    let url = serve(|path, _| match path {
        "/embed" => json!({ "vectors": [[1.0, 0.0]] }),
        _ => json!({}),
    });
    let corpus = Corpus::from_documents(&docs()).unwrap();
    let err = build_index(&corpus, &EmbedderSpec::Remote { dims: 3, endpoint: url }).unwrap_err();
    assert!(matches!(err.root(), MeveError::Protocol(_)), "{err}");
}
