//! `tupli` command-line client.
//!
//! Exit codes: 0 success, 1 API or runtime error, 2 usage error.

pub mod cache;
pub mod client;
mod output;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use tupli_core::auth::Role;
use tupli_core::dataset::{Dataset, DatasetError};
use tupli_core::storage::ObjectKind;
use tupli_core::{BenchmarkQuery, EpisodeRecord, FilterNode, Metadata, RlTuple};

pub use cache::{Session, TokenCache};
pub use client::{Ack, ApiClient, ApiErrorBody, ClientError, ClientResult, RemoteSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_API: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tupli", version, about = "Client for the tupli offline-RL data service")]
pub struct Cli {
    /// Server base URL.
    #[arg(long, env = "TUPLI_URL", default_value = "http://127.0.0.1:8080", global = true)]
    pub url: String,
    /// Where login tokens are cached (owner-only file).
    #[arg(long, env = "TUPLI_TOKEN_CACHE", global = true)]
    pub token_cache: Option<PathBuf>,
    /// Print raw JSON instead of tables and messages.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Log in and cache the tokens.
    Login {
        #[arg(long, short)]
        username: String,
        #[arg(long, short, env = "TUPLI_PASSWORD", hide_env_values = true)]
        password: String,
    },
    /// Forget cached tokens.
    Logout,
    /// Accounts and roles.
    #[command(subcommand)]
    User(UserCmd),
    /// Benchmark definitions.
    #[command(subcommand)]
    Benchmark(BenchmarkCmd),
    /// Binary artifacts.
    #[command(subcommand)]
    Artifact(ArtifactCmd),
    /// Recorded episodes.
    #[command(subcommand)]
    Episode(EpisodeCmd),
    /// Dataset assembly.
    #[command(subcommand)]
    Dataset(DatasetCmd),
}

#[derive(Debug, Subcommand)]
pub enum UserCmd {
    /// Create an account (self-signup when not logged in).
    Signup {
        #[arg(long, short)]
        username: String,
        #[arg(long, short, env = "TUPLI_PASSWORD", hide_env_values = true)]
        password: String,
        /// Role to grant; repeatable. Defaults to standard_user.
        #[arg(long = "role", value_parser = parse_role)]
        roles: Vec<Role>,
    },
    List,
    /// Show the role/permission matrix.
    Roles,
    SetPassword {
        /// Defaults to the logged-in user.
        #[arg(long, short)]
        username: Option<String>,
        #[arg(long, short, env = "TUPLI_NEW_PASSWORD", hide_env_values = true)]
        password: String,
    },
    SetRoles {
        #[arg(long, short)]
        username: String,
        #[arg(long = "role", value_parser = parse_role, required = true)]
        roles: Vec<Role>,
    },
    Delete {
        #[arg(long, short)]
        username: String,
    },
}

#[derive(Debug, Args)]
pub struct IdArgs {
    #[arg(long)]
    pub id: String,
}

#[derive(Debug, Args)]
pub struct BenchmarkIdArgs {
    #[arg(long)]
    pub id: String,
    /// Pick the copy owned by this user when several exist.
    #[arg(long)]
    pub owner: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum BenchmarkCmd {
    Create {
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "")]
        description: String,
        /// Serialized environment string.
        #[arg(long, conflicts_with = "file", required_unless_present = "file")]
        serialized: Option<String>,
        /// File holding the serialized environment.
        #[arg(long)]
        file: Option<PathBuf>,
        /// Extra metadata as a JSON object.
        #[arg(long, value_parser = parse_object)]
        metadata: Option<Metadata>,
    },
    List {
        #[arg(long, value_parser = parse_filter)]
        filter: Option<FilterNode>,
    },
    Load {
        #[command(flatten)]
        at: BenchmarkIdArgs,
        /// Write the serialized environment here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Publish(BenchmarkIdArgs),
    Delete(BenchmarkIdArgs),
}

#[derive(Debug, Subcommand)]
pub enum ArtifactCmd {
    Upload {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, value_parser = parse_object)]
        metadata: Option<Metadata>,
    },
    List {
        #[arg(long, value_parser = parse_filter)]
        filter: Option<FilterNode>,
    },
    Download {
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
    Publish(IdArgs),
    Delete(IdArgs),
}

#[derive(Debug, Subcommand)]
pub enum EpisodeCmd {
    /// Record an episode from a JSON file: a tuple array or an object with
    /// `tuples` and optional `metadata`.
    Record {
        #[arg(long)]
        benchmark: String,
        #[arg(long)]
        file: PathBuf,
        /// Metadata merged over the file's metadata.
        #[arg(long, value_parser = parse_object)]
        metadata: Option<Metadata>,
    },
    List {
        #[arg(long, value_parser = parse_filter)]
        benchmark_filter: Option<FilterNode>,
        #[arg(long, visible_alias = "filter", value_parser = parse_filter)]
        episode_filter: Option<FilterNode>,
    },
    Publish(IdArgs),
    Delete(IdArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    /// Load, filter, optionally sample, and write the binary columnar export.
    Export {
        #[arg(long, value_parser = parse_filter)]
        benchmark_filter: Option<FilterNode>,
        #[arg(long, value_parser = parse_filter)]
        episode_filter: Option<FilterNode>,
        /// Filter over tuple fields: reward, terminated, timeout, info.*
        #[arg(long, value_parser = parse_filter)]
        tuple_filter: Option<FilterNode>,
        /// Number of episodes to sample without replacement.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_role(s: &str) -> Result<Role, String> {
    s.parse()
}

fn parse_filter(s: &str) -> Result<FilterNode, String> {
    FilterNode::from_json(s).map_err(|e| e.to_string())
}

fn parse_object(s: &str) -> Result<Metadata, String> {
    serde_json::from_str(s).map_err(|e| format!("expected a JSON object: {e}"))
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{0}")]
    Client(#[from] ClientError),
    #[error("{0}")]
    Dataset(#[from] DatasetError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Input(String),
}

fn io_ctx(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Failure {
    let context = context.into();
    move |source| Failure::Io { context, source }
}

/// Runs one invocation. `args` includes the program name.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let cache = cli
        .token_cache
        .clone()
        .or_else(TokenCache::default_path)
        .map(TokenCache::new);
    let mut client = match cache {
        Some(c) => ApiClient::with_cache(&cli.url, c),
        None => ApiClient::new(&cli.url),
    };
    match execute(&cli, &mut client, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Input(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_API
        }
    }
}

fn emit_json(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Input(e.to_string()))?;
    writeln!(out, "{text}").map_err(io_ctx("writing output"))
}

fn say(out: &mut dyn Write, json: bool, value: &impl serde::Serialize, message: String) -> Result<(), Failure> {
    if json {
        emit_json(out, value)
    } else {
        writeln!(out, "{message}").map_err(io_ctx("writing output"))
    }
}

fn execute(cli: &Cli, client: &mut ApiClient, out: &mut dyn Write) -> Result<(), Failure> {
    let json = cli.json;
    match &cli.command {
        Command::Login { username, password } => {
            let pair = client.login(username, password)?;
            say(out, json, &pair, format!("logged in as {username}"))
        }
        Command::Logout => {
            client.logout()?;
            say(out, json, &serde_json::json!({"logged_out": true}), "logged out".into())
        }
        Command::User(cmd) => user(cmd, client, out, json),
        Command::Benchmark(cmd) => benchmark(cmd, client, out, json),
        Command::Artifact(cmd) => artifact(cmd, client, out, json),
        Command::Episode(cmd) => episode(cmd, client, out, json),
        Command::Dataset(cmd) => dataset(cmd, client, out, json),
    }
}

fn role_set(roles: &[Role]) -> Option<BTreeSet<Role>> {
    (!roles.is_empty()).then(|| roles.iter().copied().collect())
}

fn user(cmd: &UserCmd, client: &mut ApiClient, out: &mut dyn Write, json: bool) -> Result<(), Failure> {
    match cmd {
        UserCmd::Signup { username, password, roles } => {
            let info = client.signup(username, password, role_set(roles).as_ref())?;
            say(out, json, &info, format!("created user {}", info.username))
        }
        UserCmd::List => {
            let users = client.list_users()?;
            if json { emit_json(out, &users) } else { output::users(out, &users) }
        }
        UserCmd::Roles => {
            let roles = client.list_roles()?;
            if json { emit_json(out, &roles) } else { output::roles(out, &roles) }
        }
        UserCmd::SetPassword { username, password } => {
            let ack = client.change_password(username.as_deref(), password)?;
            say(out, json, &ack, format!("password updated for {}", ack.id))
        }
        UserCmd::SetRoles { username, roles } => {
            let info = client.change_roles(username, &roles.iter().copied().collect())?;
            let names: Vec<&str> = info.roles.iter().map(|r| r.as_str()).collect();
            say(out, json, &info, format!("{} now has roles {}", info.username, names.join(", ")))
        }
        UserCmd::Delete { username } => {
            let ack = client.delete_user(username)?;
            say(out, json, &ack, format!("deleted user {}", ack.id))
        }
    }
}

fn benchmark(cmd: &BenchmarkCmd, client: &mut ApiClient, out: &mut dyn Write, json: bool) -> Result<(), Failure> {
    match cmd {
        BenchmarkCmd::Create { name, description, serialized, file, metadata } => {
            let serialized = match (serialized, file) {
                (Some(s), _) => s.clone(),
                (None, Some(path)) => std::fs::read_to_string(path)
                    .map_err(io_ctx(format!("reading {}", path.display())))?,
                (None, None) => return Err(Failure::Input("pass --serialized or --file".into())),
            };
            let mut query = BenchmarkQuery::new(serialized, name.clone(), description.clone());
            for (k, v) in metadata.iter().flatten() {
                query = query.with_metadata(k.clone(), v.clone());
            }
            let header = client.create_benchmark(&query)?;
            say(out, json, &header, format!("created benchmark {}", header.id))
        }
        BenchmarkCmd::List { filter } => {
            let list = client.list_benchmarks(filter.as_ref())?;
            if json { emit_json(out, &list) } else { output::benchmarks(out, &list) }
        }
        BenchmarkCmd::Load { at, out: path } => {
            let b = client.load_benchmark(&at.id, at.owner.as_deref())?;
            match path {
                Some(p) => {
                    std::fs::write(p, &b.serialized).map_err(io_ctx(format!("writing {}", p.display())))?;
                    say(out, json, &b, format!("wrote benchmark {} to {}", b.id, p.display()))
                }
                None if json => emit_json(out, &b),
                None => writeln!(out, "{}", b.serialized).map_err(io_ctx("writing output")),
            }
        }
        BenchmarkCmd::Publish(at) => {
            let v = client.publish(ObjectKind::Benchmark, &at.id, at.owner.as_deref())?;
            say(out, json, &v, format!("published benchmark {}", at.id))
        }
        BenchmarkCmd::Delete(at) => {
            let ack = client.delete(ObjectKind::Benchmark, &at.id, at.owner.as_deref())?;
            say(out, json, &ack, format!("deleted benchmark {}", ack.id))
        }
    }
}

fn artifact(cmd: &ArtifactCmd, client: &mut ApiClient, out: &mut dyn Write, json: bool) -> Result<(), Failure> {
    match cmd {
        ArtifactCmd::Upload { file, metadata } => {
            let bytes = std::fs::read(file).map_err(io_ctx(format!("reading {}", file.display())))?;
            let (artifact, created) = client.upload_artifact(&bytes, metadata.as_ref().unwrap_or(&Metadata::new()))?;
            let verb = if created { "uploaded" } else { "already stored" };
            say(out, json, &artifact, format!("{verb} artifact {}", artifact.id))
        }
        ArtifactCmd::List { filter } => {
            let list = client.list_artifacts(filter.as_ref())?;
            if json { emit_json(out, &list) } else { output::artifacts(out, &list) }
        }
        ArtifactCmd::Download { id, out: path } => {
            let bytes = client.download_artifact(id)?;
            std::fs::write(path, &bytes).map_err(io_ctx(format!("writing {}", path.display())))?;
            let summary = serde_json::json!({"id": id, "bytes": bytes.len(), "path": path});
            say(out, json, &summary, format!("wrote {} bytes to {}", bytes.len(), path.display()))
        }
        ArtifactCmd::Publish(IdArgs { id }) => {
            let v = client.publish(ObjectKind::Artifact, id, None)?;
            say(out, json, &v, format!("published artifact {id}"))
        }
        ArtifactCmd::Delete(IdArgs { id }) => {
            let ack = client.delete(ObjectKind::Artifact, id, None)?;
            say(out, json, &ack, format!("deleted artifact {}", ack.id))
        }
    }
}

/// Reads an episode file: a tuple array, or `{"tuples": [...], "metadata": {...}}`.
fn read_episode_file(path: &std::path::Path) -> Result<(Vec<RlTuple>, Metadata), Failure> {
    let text = std::fs::read_to_string(path).map_err(io_ctx(format!("reading {}", path.display())))?;
    let bad = |e: serde_json::Error| Failure::Input(format!("{}: {e}", path.display()));
    match serde_json::from_str::<Value>(&text).map_err(bad)? {
        v @ Value::Array(_) => Ok((serde_json::from_value(v).map_err(bad)?, Metadata::new())),
        Value::Object(mut obj) => {
            let tuples = obj
                .remove("tuples")
                .ok_or_else(|| Failure::Input(format!("{}: missing `tuples`", path.display())))?;
            let metadata = match obj.remove("metadata") {
                None | Some(Value::Null) => Metadata::new(),
                Some(m) => serde_json::from_value(m).map_err(bad)?,
            };
            Ok((serde_json::from_value(tuples).map_err(bad)?, metadata))
        }
        _ => Err(Failure::Input(format!("{}: expected an array or object", path.display()))),
    }
}

fn episode(cmd: &EpisodeCmd, client: &mut ApiClient, out: &mut dyn Write, json: bool) -> Result<(), Failure> {
    match cmd {
        EpisodeCmd::Record { benchmark, file, metadata } => {
            let (tuples, mut meta) = read_episode_file(file)?;
            meta.extend(metadata.iter().flatten().map(|(k, v)| (k.clone(), v.clone())));
            let record = EpisodeRecord {
                benchmark_id: benchmark.clone(),
                tuples,
                metadata: meta,
            };
            let header = client.record_episode(&record)?;
            say(out, json, &header, format!("recorded episode {} ({} tuples)", header.id, header.length))
        }
        EpisodeCmd::List { benchmark_filter, episode_filter } => {
            let list = client.list_episode_headers(benchmark_filter.as_ref(), episode_filter.as_ref())?;
            if json { emit_json(out, &list) } else { output::episodes(out, &list) }
        }
        EpisodeCmd::Publish(IdArgs { id }) => {
            let v = client.publish(ObjectKind::Episode, id, None)?;
            say(out, json, &v, format!("published episode {id}"))
        }
        EpisodeCmd::Delete(IdArgs { id }) => {
            let ack = client.delete(ObjectKind::Episode, id, None)?;
            say(out, json, &ack, format!("deleted episode {}", ack.id))
        }
    }
}

fn dataset(cmd: &DatasetCmd, client: &mut ApiClient, out: &mut dyn Write, json: bool) -> Result<(), Failure> {
    let DatasetCmd::Export { benchmark_filter, episode_filter, tuple_filter, sample, seed, out: path } = cmd;
    let mut ds = Dataset::new();
    if let Some(f) = benchmark_filter {
        ds = ds.with_benchmark_filter(f.clone());
    }
    if let Some(f) = episode_filter {
        ds = ds.with_episode_filter(f.clone());
    }
    if let Some(f) = tuple_filter {
        ds = ds.with_tuple_filter(f.clone());
    }
    let mut ds = ds.load(&RemoteSource::new(client))?;
    if let Some(n) = sample {
        ds = ds.sample_episodes(*n, *seed)?;
    }
    let batch = ds.to_columnar()?;
    let file = std::fs::File::create(path).map_err(io_ctx(format!("creating {}", path.display())))?;
    let mut writer = std::io::BufWriter::new(file);
    batch.write_to(&mut writer).map_err(io_ctx(format!("writing {}", path.display())))?;
    writer.flush().map_err(io_ctx(format!("writing {}", path.display())))?;
    let summary = serde_json::json!({
        "path": path,
        "rows": batch.len(),
        "episodes": batch.episode_boundaries.len(),
        "obs_dim": batch.obs_dim,
        "action_dim": batch.action_dim,
        "bytes": batch.encoded_len(),
    });
    say(
        out,
        json,
        &summary,
        format!(
            "wrote {} rows from {} episodes (obs {}, action {}) to {}",
            batch.len(),
            batch.episode_boundaries.len(),
            batch.obs_dim,
            batch.action_dim,
            path.display()
        ),
    )
}
