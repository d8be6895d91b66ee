use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use absa_service::{HttpServer, ServiceOptions, Stage};
use serde_json::{json, Value};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    fn new(server: &HttpServer) -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Client {
            base: format!("http://{}", server.addr()),
            agent,
        }
    }

    fn get(&self, path: &str) -> (u16, Value) {
        let mut resp = self.agent.get(&format!("{}{path}", self.base)).call().unwrap();
        let status = resp.status().as_u16();
        (status, serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap())
    }

    fn get_raw(&self, path: &str) -> String {
        let mut resp = self.agent.get(&format!("{}{path}", self.base)).call().unwrap();
        resp.body_mut().read_to_string().unwrap()
    }

    fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let mut resp = self
            .agent
            .post(&format!("{}{path}", self.base))
            .header("Content-Type", "application/json")
            .send(body.to_string())
            .unwrap();
        let status = resp.status().as_u16();
        (status, serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap())
    }

    fn wait_for(&self, stage: &str) -> Value {
        let deadline = Instant::now() + Duration::from_secs(30);
        loop {
            let (_, st) = self.get("/status");
            if st["stage"] == stage {
                return st;
            }
            assert_ne!(st["stage"], "failed", "job failed: {st}");
            assert!(Instant::now() < deadline, "timed out waiting for {stage}: {st}");
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    fn extract_fixture(&self) {
        let (code, body) = self.post(
            "/extract",
            json!({
                "dataset_path": fixtures().join("corpus.conllu"),
                "embeddings_path": fixtures().join("toy_glove.txt"),
                "config_path": fixtures().join("config.json"),
            }),
        );
        assert_eq!(code, 202, "{body}");
        assert_eq!(body["stage"], "extracting");
        self.wait_for("lexicons_ready");
    }

    fn classify_target(&self) {
        let (code, body) = self.post("/classify", json!({ "target_path": fixtures().join("target.conllu") }));
        assert_eq!(code, 202, "{body}");
        self.wait_for("report_ready");
    }
}

fn start(out_dir: Option<PathBuf>) -> HttpServer {
    HttpServer::start("127.0.0.1:0", ServiceOptions { out_dir, ..Default::default() }).unwrap()
}

#[test]
fn preconditions_before_extraction() {
    let server = start(None);
    let c = Client::new(&server);
    let (code, st) = c.get("/status");
    assert_eq!(code, 200);
    assert_eq!(st["stage"], "idle");
    for path in ["/lexicons", "/report", "/evidence?aspect=food", "/examples?term=decor"] {
        let (code, body) = c.get(path);
        assert_eq!(code, 409, "{path}: {body}");
        assert_eq!(body["kind"], "precondition");
        assert_eq!(body["lexicon_revision"], 0);
    }
    let (code, body) = c.post("/classify", json!({ "target_path": fixtures().join("target.conllu") }));
    assert_eq!((code, body["kind"].as_str()), (409, Some("precondition")));
    let (code, _) = c.post("/lexicons/edit", json!({"edit": {"op": "add_aspect", "term": "x"}}));
    assert_eq!(code, 409);
    server.shutdown();
}

#[test]
fn bad_requests_create_no_job() {
    let server = start(None);
    let c = Client::new(&server);
    let (code, body) = c.post(
        "/extract",
        json!({ "dataset_path": "/no/such/corpus.conllu", "embeddings_path": fixtures().join("toy_glove.txt") }),
    );
    assert_eq!(code, 400);
    assert_eq!(body["kind"], "bad_path");
    let (code, _) = c.post("/extract", json!({ "dataset_path": 3 }));
    assert_eq!(code, 400);
    let (_, st) = c.get("/status");
    assert_eq!(st["stage"], "idle");
    assert_eq!(st["job_id"], "");
    assert_eq!(c.get("/nowhere").0, 404);
    assert_eq!(c.post("/status", json!({})).0, 405);
    server.shutdown();
}

#[test]
fn workflow_over_http() {
    let out = tempfile::tempdir().unwrap();
    let server = start(Some(out.path().to_path_buf()));
    let c = Client::new(&server);
    c.extract_fixture();
    assert!(out.path().join("aspects.csv").exists() && out.path().join("opinions.csv").exists());

    let (code, lex) = c.get("/lexicons");
    assert_eq!(code, 200);
    assert_eq!(lex["lexicon_revision"], 0);
    assert!(!lex["aspects"].as_array().unwrap().is_empty());

    let (code, ex) = c.get("/examples?term=decor&limit=5");
    assert_eq!(code, 200);
    let examples = ex["examples"].as_array().unwrap();
    assert!(!examples.is_empty() && examples.len() <= 5);
    for e in examples {
        let text = e["text"].as_str().unwrap();
        let (from, to) = (e["span"][0].as_u64().unwrap() as usize, e["span"][1].as_u64().unwrap() as usize);
        assert!(text.contains("decor"));
        assert_eq!(&text[from..to], "decor");
    }

    let (code, r) = c.post(
        "/lexicons/edit",
        json!({"edit": {"op": "set_alias", "term": "drink", "slot": 1, "alias": "beverage"}, "expected_revision": 0}),
    );
    assert_eq!(code, 422, "beverage is its own aspect in the fixture: {r}");
    assert!(r["error"].as_str().unwrap().contains("already belongs to aspect"));
    let (code, r) = c.post("/lexicons/edit", json!({"edit": {"op": "delete_aspect", "term": "beverage"}}));
    assert_eq!((code, r["lexicon_revision"].as_u64()), (200, Some(1)));
    let (code, r) = c.post(
        "/lexicons/edit",
        json!({"edit": {"op": "set_alias", "term": "drink", "slot": 1, "alias": "beverage"}, "expected_revision": 1}),
    );
    assert_eq!((code, r["lexicon_revision"].as_u64()), (200, Some(2)));
    let (code, r) = c.post(
        "/lexicons/edit",
        json!({"edit": {"op": "set_enabled", "term": "pizza", "enabled": false}, "expected_revision": 1}),
    );
    assert_eq!((code, r["kind"].as_str()), (409, Some("stale_revision")));
    let saved = std::fs::read_to_string(out.path().join("aspects.csv")).unwrap();
    assert!(saved.contains("drink,beverage,,,true,2"), "{saved}");

    c.classify_target();
    let (code, report) = c.get("/report");
    assert_eq!(code, 200);
    assert_eq!(report["lexicon_revision"], 2);
    let rows = report["rows"].as_array().unwrap();
    let drink = rows.iter().find(|r| r["aspect_term"] == "drink").unwrap();
    // "great drinks" and "the beverages were pricey" fold into one row
    assert_eq!((drink["positive_count"].as_u64(), drink["negative_count"].as_u64()), (Some(1), Some(1)));
    assert!(rows.iter().any(|r| r["aspect_term"] == "pizza"));

    let (code, ev) = c.get("/evidence?aspect=drink");
    assert_eq!(code, 200);
    assert_eq!(ev["evidence"].as_array().unwrap().len(), 2);
    for e in ev["evidence"].as_array().unwrap() {
        let text = e["sentence_text"].as_str().unwrap();
        let span = &e["aspect_span"];
        let (a, b) = (span[0].as_u64().unwrap() as usize, span[1].as_u64().unwrap() as usize);
        assert!(["drinks", "beverages"].contains(&&text[a..b]));
    }
    let (code, ev) = c.get("/evidence?aspect=nothing");
    assert_eq!(code, 200);
    assert!(ev["evidence"].as_array().unwrap().is_empty());

    // unchecking a term removes it from the next report
    let (code, _) = c.post("/lexicons/edit", json!({"edit": {"op": "set_enabled", "term": "pizza", "enabled": false}}));
    assert_eq!(code, 200);
    let (_, lex) = c.get("/lexicons");
    let pizza = lex["aspects"].as_array().unwrap().iter().find(|a| a["term"] == "pizza").unwrap();
    assert_eq!(pizza["enabled"], false);
    c.classify_target();
    let (_, report) = c.get("/report");
    assert_eq!(report["lexicon_revision"], 3);
    assert!(report["rows"].as_array().unwrap().iter().all(|r| r["aspect_term"] != "pizza"));
    server.shutdown();
}

#[test]
fn repeated_classification_is_byte_identical() {
    let server = start(None);
    let c = Client::new(&server);
    c.extract_fixture();
    c.classify_target();
    let first = c.get_raw("/report");
    c.classify_target();
    assert_eq!(first, c.get_raw("/report"));
    server.shutdown();
}

#[test]
fn second_job_while_busy_is_rejected() {
    // a corpus large enough that extraction is still running on the next request
    let dir = tempfile::tempdir().unwrap();
    let fixture = std::fs::read_to_string(fixtures().join("corpus.conllu")).unwrap();
    let big = dir.path().join("big.conllu");
    std::fs::write(&big, fixture.repeat(300)).unwrap();
    let server = start(None);
    let c = Client::new(&server);
    let req = json!({
        "dataset_path": big,
        "embeddings_path": fixtures().join("toy_glove.txt"),
        "config_path": fixtures().join("config.json"),
    });
    let (code, first) = c.post("/extract", req.clone());
    assert_eq!(code, 202);
    let (code, body) = c.post("/extract", req);
    assert_eq!(code, 409, "{body}");
    assert_eq!(body["kind"], "busy");
    let (code, _) = c.post("/classify", json!({ "target_path": fixtures().join("target.conllu") }));
    assert_eq!(code, 409);
    let st = c.wait_for("lexicons_ready");
    assert_eq!(st["job_id"], first["job_id"]);
    assert_eq!(server.service().status().stage, Stage::LexiconsReady);
    server.shutdown();
}

#[test]
fn pipeline_failure_marks_job_failed() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conllu");
    std::fs::write(&bad, "1\tword\n").unwrap();
    let server = start(None);
    let c = Client::new(&server);
    let (code, _) = c.post(
        "/extract",
        json!({ "dataset_path": bad, "embeddings_path": fixtures().join("toy_glove.txt") }),
    );
    assert_eq!(code, 202);
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let (_, st) = c.get("/status");
        if st["stage"] == "failed" {
            assert!(st["message"].as_str().unwrap().contains("bad.conllu:1:"), "{st}");
            break;
        }
        assert!(Instant::now() < deadline);
        std::thread::sleep(Duration::from_millis(10));
    }
    assert_eq!(c.get("/lexicons").0, 409);
    // a failed job does not block the next one
    c.extract_fixture();
    server.shutdown();
}
