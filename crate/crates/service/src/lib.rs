//! Local HTTP+JSON service driving the extract, edit and classify workflow.
//!
//! One pipeline job runs at a time on a background worker. Request handling
//! happens on a small pool of threads; reads get immutable snapshots.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;

use absa_core::corpus::{load_conllu, ParsedCorpus};
use absa_core::lexicon::{collect_examples, save_lexicons, Edit, Lexicons};
use absa_core::pipeline::{classify_with, extract, write_classify_outputs, ClassifyOutcome, PipelineConfig};
use log::{error, info, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tiny_http::{Header, Method, Response, Server};

const HANDLER_THREADS: usize = 4;
const DEFAULT_EXAMPLE_LIMIT: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Idle,
    Extracting,
    LexiconsReady,
    Classifying,
    ReportReady,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobState {
    pub job_id: String,
    pub stage: Stage,
    pub message: String,
    pub lexicon_revision: u64,
}

#[derive(Clone, Debug, Default)]
pub struct ServiceOptions {
    /// Config used when an extract request carries none.
    pub config: PipelineConfig,
    /// Lexicon CSVs and report files are mirrored here when set.
    pub out_dir: Option<PathBuf>,
}

/// A JSON response: status code and body.
#[derive(Clone, Debug, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub body: Value,
}

impl Reply {
    fn ok(body: Value) -> Self {
        Reply { status: 200, body }
    }

    fn error(status: u16, kind: &str, message: impl Into<String>) -> Self {
        Reply {
            status,
            body: json!({ "error": message.into(), "kind": kind }),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtractRequest {
    dataset_path: PathBuf,
    embeddings_path: PathBuf,
    #[serde(default)]
    config: Option<PipelineConfig>,
    #[serde(default)]
    config_path: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EditRequest {
    edit: Edit,
    #[serde(default)]
    expected_revision: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyRequest {
    target_path: PathBuf,
}

enum Job {
    Extract {
        id: String,
        dataset: PathBuf,
        embeddings: PathBuf,
        config: PipelineConfig,
    },
    Classify {
        id: String,
        target: PathBuf,
        lexicons: Arc<Lexicons>,
    },
}

struct State {
    job_id: String,
    jobs_started: u64,
    stage: Stage,
    message: String,
    config: PipelineConfig,
    lexicons: Option<Arc<Lexicons>>,
    corpus: Option<Arc<ParsedCorpus>>,
    report: Option<Arc<ClassifyOutcome>>,
}

impl State {
    fn revision(&self) -> u64 {
        self.lexicons.as_ref().map_or(0, |l| l.revision)
    }

    fn job_state(&self) -> JobState {
        JobState {
            job_id: self.job_id.clone(),
            stage: self.stage,
            message: self.message.clone(),
            lexicon_revision: self.revision(),
        }
    }

    fn busy(&self) -> bool {
        matches!(self.stage, Stage::Extracting | Stage::Classifying)
    }

    fn next_job_id(&mut self) -> String {
        self.jobs_started += 1;
        format!("job-{}", self.jobs_started)
    }
}

struct Shared {
    state: Mutex<State>,
    out_dir: Option<PathBuf>,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Request router plus the background worker. Cloning shares state.
#[derive(Clone)]
pub struct Service {
    shared: Arc<Shared>,
    jobs: Sender<Job>,
}

impl Service {
    pub fn new(opts: ServiceOptions) -> Self {
        let shared = Arc::new(Shared {
            state: Mutex::new(State {
                job_id: String::new(),
                jobs_started: 0,
                stage: Stage::Idle,
                message: "no job has run".into(),
                config: opts.config,
                lexicons: None,
                corpus: None,
                report: None,
            }),
            out_dir: opts.out_dir,
        });
        let (tx, rx) = channel::<Job>();
        let worker_shared = Arc::clone(&shared);
        std::thread::Builder::new()
            .name("absa-worker".into())
            .spawn(move || {
                for job in rx {
                    run_job(&worker_shared, job);
                }
            })
            .expect("spawn worker thread");
        Service { shared, jobs: tx }
    }

    pub fn status(&self) -> JobState {
        self.shared.lock().job_state()
    }

    /// Dispatches one request. `query` is the raw query string.
    pub fn handle(&self, method: &str, path: &str, query: &str, body: &[u8]) -> Reply {
        let params: Vec<(String, String)> = url::form_urlencoded::parse(query.as_bytes()).into_owned().collect();
        let param = |k: &str| params.iter().find(|(n, _)| n == k).map(|(_, v)| v.as_str());
        match (method, path) {
            ("GET", "/status") => Reply::ok(json!(self.status())),
            ("POST", "/extract") => self.extract(body),
            ("GET", "/lexicons") => self.lexicons(),
            ("POST", "/lexicons/edit") => self.edit(body),
            ("GET", "/examples") => self.examples(param("term"), param("limit")),
            ("POST", "/classify") => self.classify(body),
            ("GET", "/report") => self.report(),
            ("GET", "/evidence") => self.evidence(param("aspect")),
            (_, "/status" | "/extract" | "/lexicons" | "/lexicons/edit" | "/examples" | "/classify" | "/report" | "/evidence") => {
                Reply::error(405, "method_not_allowed", format!("{method} not allowed on {path}"))
            }
            _ => Reply::error(404, "not_found", format!("no endpoint {path}")),
        }
    }

    fn extract(&self, body: &[u8]) -> Reply {
        let req: ExtractRequest = match parse_body(body) {
            Ok(r) => r,
            Err(reply) => return reply,
        };
        for p in [&req.dataset_path, &req.embeddings_path] {
            if let Err(e) = check_readable(p) {
                return Reply::error(400, "bad_path", e);
            }
        }
        let mut st = self.shared.lock();
        let config = match (req.config, req.config_path) {
            (Some(_), Some(_)) => return Reply::error(400, "bad_request", "give either config or config_path, not both"),
            (Some(c), None) => c,
            (None, Some(p)) => match PipelineConfig::load(&p) {
                Ok(c) => c,
                Err(e) => return Reply::error(400, "bad_config", e.to_string()),
            },
            (None, None) => st.config.clone(),
        };
        if st.busy() {
            return Reply::error(409, "busy", format!("job {} is still {}", st.job_id, stage_name(st.stage)));
        }
        let id = st.next_job_id();
        st.job_id = id.clone();
        st.stage = Stage::Extracting;
        st.message = format!("extracting lexicons from {}", req.dataset_path.display());
        st.config = config.clone();
        st.lexicons = None;
        st.corpus = None;
        st.report = None;
        let state = st.job_state();
        drop(st);
        self.submit(Job::Extract {
            id,
            dataset: req.dataset_path,
            embeddings: req.embeddings_path,
            config,
        });
        Reply {
            status: 202,
            body: json!(state),
        }
    }

    fn classify(&self, body: &[u8]) -> Reply {
        let req: ClassifyRequest = match parse_body(body) {
            Ok(r) => r,
            Err(reply) => return reply,
        };
        if let Err(e) = check_readable(&req.target_path) {
            return Reply::error(400, "bad_path", e);
        }
        let mut st = self.shared.lock();
        if st.busy() {
            return Reply::error(409, "busy", format!("job {} is still {}", st.job_id, stage_name(st.stage)));
        }
        let Some(lexicons) = st.lexicons.clone() else {
            return precondition(&st, "lexicons_ready");
        };
        let id = st.next_job_id();
        st.job_id = id.clone();
        st.stage = Stage::Classifying;
        st.message = format!("classifying {}", req.target_path.display());
        st.report = None;
        let state = st.job_state();
        drop(st);
        self.submit(Job::Classify {
            id,
            target: req.target_path,
            lexicons,
        });
        Reply {
            status: 202,
            body: json!(state),
        }
    }

    fn submit(&self, job: Job) {
        if self.jobs.send(job).is_err() {
            let mut st = self.shared.lock();
            st.stage = Stage::Failed;
            st.message = "worker thread is gone".into();
        }
    }

    fn lexicons(&self) -> Reply {
        let st = self.shared.lock();
        match &st.lexicons {
            Some(lex) => Reply::ok(lexicons_body(lex)),
            None => precondition(&st, "lexicons_ready"),
        }
    }

    fn edit(&self, body: &[u8]) -> Reply {
        let req: EditRequest = match parse_body(body) {
            Ok(r) => r,
            Err(reply) => return reply,
        };
        // The state lock serializes writers.
        let mut st = self.shared.lock();
        let Some(current) = st.lexicons.clone() else {
            return precondition(&st, "lexicons_ready");
        };
        if let Some(expected) = req.expected_revision {
            if expected != current.revision {
                return Reply {
                    status: 409,
                    body: json!({
                        "error": format!("stale revision {expected}, server is at {}", current.revision),
                        "kind": "stale_revision",
                        "lexicon_revision": current.revision,
                    }),
                };
            }
        }
        let next = match current.apply_edit(&req.edit) {
            Ok(l) => l,
            Err(e) => {
                return Reply {
                    status: 422,
                    body: json!({
                        "error": e.to_string(),
                        "kind": "validation",
                        "lexicon_revision": current.revision,
                    }),
                }
            }
        };
        if let Some(dir) = &self.shared.out_dir {
            if let Err(e) = save_lexicons(&next, dir) {
                return Reply::error(500, "io", e.to_string());
            }
        }
        let revision = next.revision;
        st.lexicons = Some(Arc::new(next));
        Reply::ok(json!({ "lexicon_revision": revision }))
    }

    fn examples(&self, term: Option<&str>, limit: Option<&str>) -> Reply {
        let Some(term) = term.filter(|t| !t.trim().is_empty()) else {
            return Reply::error(400, "bad_request", "missing query parameter term");
        };
        let limit = match limit.map(str::parse::<usize>) {
            None => DEFAULT_EXAMPLE_LIMIT,
            Some(Ok(n)) => n,
            Some(Err(_)) => return Reply::error(400, "bad_request", "limit must be a non-negative integer"),
        };
        let st = self.shared.lock();
        let (Some(lex), Some(corpus)) = (&st.lexicons, &st.corpus) else {
            return precondition(&st, "lexicons_ready");
        };
        let examples = collect_examples(corpus, term, limit);
        Reply::ok(json!({
            "lexicon_revision": lex.revision,
            "term": term,
            "examples": examples,
        }))
    }

    fn report(&self) -> Reply {
        let st = self.shared.lock();
        match &st.report {
            Some(outcome) => Reply::ok(json!(outcome.report)),
            None => precondition(&st, "report_ready"),
        }
    }

    fn evidence(&self, aspect: Option<&str>) -> Reply {
        let Some(aspect) = aspect else {
            return Reply::error(400, "bad_request", "missing query parameter aspect");
        };
        let st = self.shared.lock();
        let Some(outcome) = &st.report else {
            return precondition(&st, "report_ready");
        };
        let evidence = outcome
            .report
            .rows
            .iter()
            .find(|r| r.aspect_term == aspect)
            .map(|r| r.evidence.clone())
            .unwrap_or_default();
        Reply::ok(json!({
            "lexicon_revision": outcome.report.lexicon_revision,
            "aspect_term": aspect,
            "evidence": evidence,
        }))
    }
}

fn stage_name(stage: Stage) -> String {
    serde_json::to_value(stage)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn precondition(st: &State, needed: &str) -> Reply {
    Reply {
        status: 409,
        body: json!({
            "error": format!("requires stage {needed}, current stage is {}", stage_name(st.stage)),
            "kind": "precondition",
            "stage": st.stage,
            "lexicon_revision": st.revision(),
        }),
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, Reply> {
    serde_json::from_slice(body).map_err(|e| Reply::error(400, "bad_request", format!("invalid request body: {e}")))
}

fn check_readable(path: &Path) -> Result<(), String> {
    match std::fs::File::open(path) {
        Ok(f) if f.metadata().map(|m| m.is_file()).unwrap_or(false) => Ok(()),
        Ok(_) => Err(format!("{} is not a file", path.display())),
        Err(e) => Err(format!("cannot read {}: {e}", path.display())),
    }
}

fn lexicons_body(lex: &Lexicons) -> Value {
    json!({
        "lexicon_revision": lex.revision,
        "domain_label": lex.domain_label,
        "aspects": lex.aspects,
        "opinions": lex.opinions,
    })
}

fn run_job(shared: &Shared, job: Job) {
    match job {
        Job::Extract {
            id,
            dataset,
            embeddings,
            config,
        } => {
            info!("{id}: extracting from {}", dataset.display());
            let result = extract(&dataset, &embeddings, &config).and_then(|outcome| {
                if let Some(dir) = &shared.out_dir {
                    save_lexicons(&outcome.lexicons, dir)?;
                }
                Ok(outcome)
            });
            let mut st = shared.lock();
            if st.job_id != id {
                return;
            }
            match result {
                Ok(outcome) => {
                    st.message = format!(
                        "{} aspects, {} opinions after {} iterations",
                        outcome.lexicons.aspects.len(),
                        outcome.lexicons.opinions.len(),
                        outcome.iterations
                    );
                    st.lexicons = Some(Arc::new(outcome.lexicons));
                    st.corpus = Some(Arc::new(outcome.corpus));
                    st.stage = Stage::LexiconsReady;
                }
                Err(e) => {
                    error!("{id}: extraction failed: {e}");
                    st.stage = Stage::Failed;
                    st.message = e.to_string();
                }
            }
        }
        Job::Classify { id, target, lexicons } => {
            info!("{id}: classifying {} at lexicon revision {}", target.display(), lexicons.revision);
            let config = shared.lock().config.clone();
            let result = config.negations().and_then(|neg| {
                let corpus = load_conllu(&target)?;
                let outcome = classify_with(&corpus, &lexicons, &neg);
                if let Some(dir) = &shared.out_dir {
                    write_classify_outputs(&outcome, dir)?;
                }
                Ok(outcome)
            });
            let mut st = shared.lock();
            if st.job_id != id {
                return;
            }
            match result {
                Ok(outcome) => {
                    st.message = format!(
                        "{} mentions over {} aspects",
                        outcome.mentions.len(),
                        outcome.report.rows.len()
                    );
                    st.report = Some(Arc::new(outcome));
                    st.stage = Stage::ReportReady;
                }
                Err(e) => {
                    error!("{id}: classification failed: {e}");
                    st.stage = Stage::Failed;
                    st.message = e.to_string();
                }
            }
        }
    }
}

/// A bound HTTP server. Dropping it without `shutdown` leaves the handler
/// threads running.
pub struct HttpServer {
    server: Arc<Server>,
    addr: SocketAddr,
    handlers: Vec<JoinHandle<()>>,
    service: Service,
}

impl HttpServer {
    /// Binds `addr` (port 0 picks an ephemeral port) and starts serving.
    pub fn start(addr: &str, opts: ServiceOptions) -> std::io::Result<Self> {
        let server = Server::http(addr).map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("server is not bound to an IP address"))?;
        let server = Arc::new(server);
        let service = Service::new(opts);
        let handlers = (0..HANDLER_THREADS)
            .map(|_| {
                let server = Arc::clone(&server);
                let service = service.clone();
                std::thread::spawn(move || {
                    for request in server.incoming_requests() {
                        serve_one(&service, request);
                    }
                })
            })
            .collect();
        info!("listening on http://{addr}");
        Ok(HttpServer {
            server,
            addr,
            handlers,
            service,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn service(&self) -> &Service {
        &self.service
    }

    /// Blocks until the handler threads exit.
    pub fn join(self) {
        for h in self.handlers {
            let _ = h.join();
        }
    }

    pub fn shutdown(self) {
        for _ in 0..self.handlers.len() {
            self.server.unblock();
        }
        self.join();
    }
}

fn serve_one(service: &Service, mut request: tiny_http::Request) {
    let mut body = Vec::new();
    if let Err(e) = request.as_reader().read_to_end(&mut body) {
        warn!("failed to read request body: {e}");
    }
    let method = match request.method() {
        Method::Get => "GET",
        Method::Post => "POST",
        Method::Put => "PUT",
        Method::Delete => "DELETE",
        _ => "OTHER",
    };
    let (path, query) = match request.url().split_once('?') {
        Some((p, q)) => (p.to_owned(), q.to_owned()),
        None => (request.url().to_owned(), String::new()),
    };
    let reply = service.handle(method, &path, &query, &body);
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    let response = Response::from_string(reply.body.to_string())
        .with_status_code(reply.status)
        .with_header(header);
    if let Err(e) = request.respond(response) {
        warn!("failed to send response: {e}");
    }
}
