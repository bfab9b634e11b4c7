use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use har_api::{ServerConfig, TOKEN_ENV};

/// Command-line client for the har platform service.
#[derive(Parser)]
#[command(name = "har", version)]
struct Cli {
    /// Service base URL.
    #[arg(long, env = "HAR_URL", default_value = "http://127.0.0.1:8080", global = true)]
    url: String,
    #[arg(long, env = TOKEN_ENV, hide_env_values = true, global = true)]
    token: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the service in the foreground.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long)]
        dictionary: Option<PathBuf>,
    },
    #[command(subcommand)]
    Drivers(DriversCmd),
    #[command(subcommand)]
    Import(ImportCmd),
    #[command(subcommand)]
    Labels(LabelsCmd),
    /// List catalog entries matching a filter.
    Query(FilterArgs),
    /// Download one recording.
    Export {
        recording_id: String,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train a model on the recordings matching a filter.
    Train(TrainArgs),
    #[command(subcommand)]
    Models(ModelsCmd),
    /// Classify a raw stream read from a CSV file.
    Classify {
        #[arg(long)]
        model: String,
        /// CSV with x,y,z columns (a header naming them is optional).
        input: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        rate: f64,
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        overlap: Option<f64>,
    },
}

#[derive(Subcommand)]
enum DriversCmd {
    /// Register a driver manifest (TOML file).
    Add { manifest: PathBuf },
    List,
}

#[derive(Subcommand)]
enum ImportCmd {
    Start {
        #[arg(long)]
        driver: String,
        #[arg(long)]
        dataset: String,
        /// Directory holding the dataset, as seen by the server.
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        strip_gravity: bool,
        /// Poll until the job leaves the pipeline.
        #[arg(long)]
        wait: bool,
        #[arg(long, default_value_t = 300)]
        timeout: u64,
    },
    Status {
        job_id: String,
        #[arg(long)]
        wait: bool,
        #[arg(long, default_value_t = 300)]
        timeout: u64,
    },
    List,
}

#[derive(Subcommand)]
enum LabelsCmd {
    /// Pending mappings, optionally for one dataset.
    Pending {
        #[arg(long)]
        dataset: Option<String>,
    },
    /// All mappings, filtered by dataset and status.
    Mappings {
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        status: Option<String>,
    },
    /// Decide one mapping.
    Decide {
        mapping_id: String,
        #[command(flatten)]
        decision: DecisionArgs,
    },
    /// Decide a raw label of a dataset ahead of its import.
    Predecide {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        raw: String,
        #[command(flatten)]
        decision: DecisionArgs,
    },
    /// Finalize a staged dataset.
    Apply { dataset: String },
    /// Show the canonical dictionary.
    Dictionary,
    /// Add a canonical label.
    Add {
        name: String,
        #[arg(long, default_value = "state")]
        kind: String,
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long = "alias")]
        aliases: Vec<String>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct DecisionChoice {
    /// Accept with this canonical label.
    #[arg(long)]
    accept: Option<String>,
    /// Override with a canonical label of the reviewer's choice.
    #[arg(long)]
    manual: Option<String>,
    /// Drop spans carrying this raw label.
    #[arg(long)]
    reject: bool,
}

#[derive(Args)]
struct DecisionArgs {
    #[command(flatten)]
    choice: DecisionChoice,
    #[arg(long = "by")]
    decided_by: Option<String>,
}

impl DecisionArgs {
    fn body(&self) -> Value {
        let c = &self.choice;
        let mut v = match (&c.accept, &c.manual) {
            (Some(l), _) => json!({"action": "accept", "canonical": l}),
            (_, Some(l)) => json!({"action": "manual", "canonical": l}),
            _ => json!({"action": "reject"}),
        };
        if let Some(by) = &self.decided_by {
            v["decided_by"] = json!(by);
        }
        v
    }
}

#[derive(Args, Clone)]
struct FilterArgs {
    #[arg(long = "label")]
    labels: Vec<String>,
    #[arg(long = "dataset")]
    datasets: Vec<String>,
    #[arg(long = "subject")]
    subjects: Vec<String>,
    #[arg(long)]
    sensor_kind: Option<String>,
    #[arg(long)]
    min_duration: Option<f64>,
    #[arg(long)]
    include_unlabeled: bool,
    /// Select every recording (needed when no other constraint is given).
    #[arg(long)]
    all: bool,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    offset: Option<usize>,
}

impl FilterArgs {
    fn query_string(&self) -> String {
        let mut s = form_urlencoded::Serializer::new(String::new());
        for l in &self.labels {
            s.append_pair("label", l);
        }
        for d in &self.datasets {
            s.append_pair("dataset", d);
        }
        for d in &self.subjects {
            s.append_pair("subject", d);
        }
        if let Some(k) = &self.sensor_kind {
            s.append_pair("sensor_kind", k);
        }
        if let Some(d) = self.min_duration {
            s.append_pair("min_duration_s", &d.to_string());
        }
        if self.include_unlabeled {
            s.append_pair("include_unlabeled", "true");
        }
        if self.all {
            s.append_pair("all", "true");
        }
        if let Some(n) = self.limit {
            s.append_pair("limit", &n.to_string());
        }
        if let Some(n) = self.offset {
            s.append_pair("offset", &n.to_string());
        }
        s.finish()
    }

    fn body(&self) -> Value {
        let set = |v: &Vec<String>| (!v.is_empty()).then(|| v.clone());
        json!({
            "labels": set(&self.labels),
            "dataset_ids": set(&self.datasets),
            "subject_ids": set(&self.subjects),
            "sensor_kind": self.sensor_kind,
            "min_duration_s": self.min_duration,
            "include_unlabeled": self.include_unlabeled,
            "select_all": self.all,
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    filter: FilterArgs,
    /// nearest_centroid or knn.
    #[arg(long, default_value = "nearest_centroid")]
    kind: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 2.0)]
    window: f64,
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate on the training frames instead of a holdout.
    #[arg(long)]
    no_split: bool,
    #[arg(long)]
    wait: bool,
    #[arg(long, default_value_t = 300)]
    timeout: u64,
}

#[derive(Subcommand)]
enum ModelsCmd {
    List,
    /// Training status and evaluation report.
    Show {
        model_id: String,
        #[arg(long)]
        wait: bool,
        #[arg(long, default_value_t = 300)]
        timeout: u64,
    },
    Download {
        model_id: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

struct Client {
    agent: ureq::Agent,
    base: String,
    token: Option<String>,
}

impl Client {
    fn new(base: &str, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(600)))
            .build()
            .into();
        Self {
            agent,
            base: base.trim_end_matches('/').to_string(),
            token: token.filter(|t| !t.is_empty()),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn finish(&self, resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> CliResult<Vec<u8>> {
        let mut resp = resp.map_err(|e| Failure(format!("cannot reach {}: {e}", self.base)))?;
        let status = resp.status();
        let body = resp.body_mut().with_config().limit(u64::MAX).read_to_vec()?;
        if status.is_success() {
            Ok(body)
        } else {
            Err(Failure(String::from_utf8_lossy(&body).into_owned()))
        }
    }

    fn get(&self, path: &str) -> CliResult<Vec<u8>> {
        let mut req = self.agent.get(self.url(path));
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        self.finish(req.call())
    }

    fn post(&self, path: &str, content_type: &str, body: &[u8]) -> CliResult<Vec<u8>> {
        let mut req = self.agent.post(self.url(path)).header("Content-Type", content_type);
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        self.finish(req.send(body))
    }

    fn get_json(&self, path: &str) -> CliResult<Value> {
        Ok(serde_json::from_slice(&self.get(path)?)?)
    }

    fn post_json(&self, path: &str, body: &Value) -> CliResult<Value> {
        let bytes = serde_json::to_vec(body)?;
        Ok(serde_json::from_slice(&self.post(path, "application/json", &bytes)?)?)
    }

    /// Polls `path` until its `state` is one of `done`.
    fn wait(&self, path: &str, done: &[&str], timeout: u64) -> CliResult<Value> {
        let deadline = Instant::now() + Duration::from_secs(timeout);
        loop {
            let v = self.get_json(path)?;
            if v["state"].as_str().is_some_and(|s| done.contains(&s)) {
                return Ok(v);
            }
            if Instant::now() > deadline {
                return Err(Failure(format!("gave up waiting for {path} after {timeout} s")));
            }
            std::thread::sleep(Duration::from_millis(100));
        }
    }
}

fn print(v: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    stdout(text.as_bytes())
}

/// Writes to stdout; a closed pipe downstream is not an error.
fn stdout(bytes: &[u8]) -> CliResult<()> {
    match std::io::stdout().lock().write_all(bytes) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn write_out(output: Option<&PathBuf>, bytes: &[u8]) -> CliResult<()> {
    match output {
        Some(p) => fs::write(p, bytes).map_err(|e| Failure(format!("{}: {e}", p.display()))),
        None => stdout(bytes),
    }
}

fn encode(segment: &str) -> String {
    form_urlencoded::byte_serialize(segment.as_bytes()).collect()
}

/// Reads x,y,z triples. With a header row the columns named x, y and z are
/// used; otherwise the first three columns.
fn read_samples(path: &PathBuf) -> CliResult<Vec<[f64; 3]>> {
    let text = fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let mut cols = [0, 1, 2];
    if let Some(first) = lines.peek() {
        let fields: Vec<&str> = first.split(',').map(str::trim).collect();
        if fields.iter().any(|f| f.parse::<f64>().is_err()) {
            for (i, name) in ["x", "y", "z"].iter().enumerate() {
                cols[i] = fields
                    .iter()
                    .position(|f| f.eq_ignore_ascii_case(name))
                    .ok_or_else(|| Failure(format!("{}: header has no {name} column", path.display())))?;
            }
            lines.next();
        }
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let mut s = [0.0; 3];
            for (k, c) in cols.iter().enumerate() {
                s[k] = fields
                    .get(*c)
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| Failure(format!("{}: bad sample on data row {}", path.display(), i + 1)))?;
            }
            Ok(s)
        })
        .collect()
}

const IMPORT_SETTLED: &[&str] = &["awaiting_labels", "complete", "failed"];
const TRAIN_SETTLED: &[&str] = &["complete", "failed"];

fn run(cli: Cli) -> CliResult<()> {
    let c = Client::new(&cli.url, cli.token.clone());
    match cli.command {
        Command::Serve { store, bind, dictionary } => {
            let config = ServerConfig {
                store,
                bind,
                dictionary,
                token: cli.token,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(har_api::serve(config))?;
        }
        Command::Drivers(DriversCmd::Add { manifest }) => {
            let text = fs::read(&manifest).map_err(|e| Failure(format!("{}: {e}", manifest.display())))?;
            let body = c.post("/drivers", "application/toml", &text)?;
            print(&serde_json::from_slice(&body)?)?;
        }
        Command::Drivers(DriversCmd::List) => print(&c.get_json("/drivers")?)?,
        Command::Import(ImportCmd::Start {
            driver,
            dataset,
            root,
            strip_gravity,
            wait,
            timeout,
        }) => {
            let root = fs::canonicalize(&root).unwrap_or(root);
            let job = c.post_json(
                "/imports",
                &json!({"driver_id": driver, "dataset_id": dataset, "root": root, "strip_gravity": strip_gravity}),
            )?;
            if wait {
                let id = job["job_id"].as_str().unwrap_or_default();
                print(&c.wait(&format!("/imports/{}", encode(id)), IMPORT_SETTLED, timeout)?)?;
            } else {
                print(&job)?;
            }
        }
        Command::Import(ImportCmd::Status { job_id, wait, timeout }) => {
            let path = format!("/imports/{}", encode(&job_id));
            print(&if wait { c.wait(&path, IMPORT_SETTLED, timeout)? } else { c.get_json(&path)? })?;
        }
        Command::Import(ImportCmd::List) => print(&c.get_json("/imports")?)?,
        Command::Labels(cmd) => match cmd {
            LabelsCmd::Pending { dataset } => {
                let mut q = form_urlencoded::Serializer::new(String::new());
                q.append_pair("status", "pending");
                if let Some(d) = dataset {
                    q.append_pair("dataset_id", &d);
                }
                print(&c.get_json(&format!("/labels/mappings?{}", q.finish()))?)?;
            }
            LabelsCmd::Mappings { dataset, status } => {
                let mut q = form_urlencoded::Serializer::new(String::new());
                if let Some(d) = dataset {
                    q.append_pair("dataset_id", &d);
                }
                if let Some(s) = status {
                    q.append_pair("status", &s);
                }
                print(&c.get_json(&format!("/labels/mappings?{}", q.finish()))?)?;
            }
            LabelsCmd::Decide { mapping_id, decision } => {
                print(&c.post_json(&format!("/labels/mappings/{}/decision", encode(&mapping_id)), &decision.body())?)?;
            }
            LabelsCmd::Predecide { dataset, raw, decision } => {
                let mut body = decision.body();
                body["dataset_id"] = json!(dataset);
                body["raw_label"] = json!(raw);
                print(&c.post_json("/labels/mappings", &body)?)?;
            }
            LabelsCmd::Apply { dataset } => print(&c.post_json("/labels/apply", &json!({"dataset_id": dataset}))?)?,
            LabelsCmd::Dictionary => print(&c.get_json("/labels/dictionary")?)?,
            LabelsCmd::Add {
                name,
                kind,
                description,
                aliases,
            } => {
                let body = json!({"name": name, "kind": kind, "description": description, "aliases": aliases});
                print(&c.post_json("/labels/dictionary", &body)?)?;
            }
        },
        Command::Query(filter) => print(&c.get_json(&format!("/data/query?{}", filter.query_string()))?)?,
        Command::Export {
            recording_id,
            format,
            output,
        } => {
            let bytes = c.get(&format!("/data/recordings/{}?format={}", encode(&recording_id), encode(&format)))?;
            write_out(output.as_ref(), &bytes)?;
        }
        Command::Train(t) => {
            let kind = match t.kind.as_str() {
                "knn" => json!({"type": "knn", "k": t.k}),
                other => json!({"type": other}),
            };
            let split = (!t.no_split).then(|| json!({"test_fraction": t.test_fraction, "seed": t.seed, "stratified": true}));
            let body = json!({
                "filter": t.filter.body(),
                "windowing": {"window_s": t.window, "overlap_fraction": t.overlap, "majority_threshold": t.threshold},
                "kind": kind,
                "split": split,
            });
            let job = c.post_json("/models/train", &body)?;
            if t.wait {
                let id = job["model_id"].as_str().unwrap_or_default();
                let done = c.wait(&format!("/models/{}", encode(id)), TRAIN_SETTLED, t.timeout)?;
                let failed = done["state"] == "failed";
                print(&done)?;
                if failed {
                    return Err(Failure(format!("training failed: {}", done["reason"])));
                }
            } else {
                print(&job)?;
            }
        }
        Command::Models(ModelsCmd::List) => print(&c.get_json("/models")?)?,
        Command::Models(ModelsCmd::Show { model_id, wait, timeout }) => {
            let path = format!("/models/{}", encode(&model_id));
            print(&if wait { c.wait(&path, TRAIN_SETTLED, timeout)? } else { c.get_json(&path)? })?;
        }
        Command::Models(ModelsCmd::Download { model_id, output }) => {
            let bytes = c.get(&format!("/models/{}/download", encode(&model_id)))?;
            write_out(output.as_ref(), &bytes)?;
        }
        Command::Classify {
            model,
            input,
            rate,
            window,
            overlap,
        } => {
            let samples = read_samples(&input)?;
            let mut body = json!({"model_id": model, "rate_hz": rate, "samples": samples});
            if window.is_some() || overlap.is_some() {
                body["windowing"] = json!({
                    "window_s": window.unwrap_or(2.0),
                    "overlap_fraction": overlap.unwrap_or(0.5),
                });
            }
            print(&c.post_json("/classify", &body)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(msg)) => {
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
