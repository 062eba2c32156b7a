use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use episynth::aligner::{plan_module, ClassWords, ExecContext};
use episynth::artifacts::ArtifactStore;
use episynth::config::PipelineConfig;
use episynth::lexicon::Lexicon;
use episynth::metrics::{compute_retrieval_metrics, DEFAULT_KS};
use episynth::pipeline::{run_generate, Services};
use episynth::retrieval::{
    embed_captions, embed_text, write_embedding_file, Embedder, HashEmbedder, HttpEmbedder, VectorIndex, DEFAULT_HASH_DIM,
};
use episynth::stats::compute_stats;
use episynth::store::{missing_artifacts, validate_episode, EpisodeRules, EpisodeStore};

const EXIT_INVALID: u8 = 1;
const EXIT_INFRA: u8 = 2;

#[derive(Parser)]
#[command(name = "episynth", version, about = "Synthesize and inspect long-term image-sharing dialogue episodes")]
struct Cli {
    /// Log filter, e.g. `info` or `episynth=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate episodes into the configured store.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Number of episodes; defaults to `episodes` in the config.
        #[arg(short = 'n', long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Drop episodes with unaligned images instead of flagging them.
        #[arg(long)]
        strict: bool,
        /// Run every filter gate and record every reason.
        #[arg(long)]
        full_report: bool,
        /// Override the output store path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Re-validate every episode in a store.
    Validate {
        store: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Also check that every referenced image artifact exists.
        #[arg(long)]
        artifacts: bool,
    },
    /// Corpus statistics.
    Stats {
        store: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Plan and execute image alignment for one description.
    Align {
        description: String,
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "Male")]
        gender: String,
        #[arg(long, default_value_t = 30)]
        age: u32,
        /// Pipeline config; mock backends when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "artifacts")]
        artifacts: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build or query an embedding index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Recall@K and MRR for ranked results.
    Metrics {
        /// JSON object mapping query id to a ranked list of ids.
        rankings: PathBuf,
        /// JSON object mapping query id to its gold id.
        gold: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KS)]
        ks: Vec<usize>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct EmbedArgs {
    /// `/embed` service base URL; the hash embedder is used when absent.
    #[arg(long, env = "EMBED_ENDPOINT")]
    embed_endpoint: Option<String>,
}

#[derive(Subcommand)]
enum IndexCommand {
    /// Embed a caption manifest (JSONL rows of `{"id", "caption"}`).
    Build {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_HASH_DIM)]
        dim: usize,
        #[arg(long, default_value = "captions")]
        corpus: String,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Top-k captions for a text query.
    Search {
        query: String,
        #[arg(long)]
        index: PathBuf,
        #[arg(short = 'k', long, default_value_t = 5)]
        k: usize,
        #[command(flatten)]
        embed: EmbedArgs,
    },
}

/// An error with the module it came from and the exit code it maps to.
struct Failure {
    module: &'static str,
    message: String,
    code: u8,
}

fn infra(module: &'static str) -> impl Fn(&dyn std::fmt::Display) -> Failure {
    move |e| Failure {
        module,
        message: e.to_string(),
        code: EXIT_INFRA,
    }
}

/// Writes to stdout, ignoring a closed pipe.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

macro_rules! out_raw {
    ($text:expr) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout().lock(), "{}", $text);
    }};
}

macro_rules! infra {
    ($module:literal) => {
        |e| infra($module)(&e)
    };
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_new(&cli.log).unwrap_or_else(|_| "warn".into()))
        .init();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error[{}]: {}", f.module, f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Generate {
            config,
            episodes,
            seed,
            strict,
            full_report,
            output,
        } => {
            let mut config = PipelineConfig::from_file(&config).map_err(infra!("config"))?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(output) = output {
                config.output = output;
            }
            config.filter.strict |= strict;
            config.filter.full_report |= full_report;
            let n = episodes.unwrap_or(config.episodes);
            let summary = run_generate(&config, n).map_err(infra!("pipeline"))?;
            out_raw!(summary.render());
            Ok(0)
        }
        Command::Validate {
            store,
            lexicon,
            artifacts,
        } => validate(&store, lexicon.as_deref(), artifacts),
        Command::Stats { store, json } => {
            let episodes = EpisodeStore::new(&store).read_all().map_err(|e| Failure {
                module: "store",
                code: if matches!(e, episynth::store::StoreError::CorruptLine { .. }) {
                    EXIT_INVALID
                } else {
                    EXIT_INFRA
                },
                message: e.to_string(),
            })?;
            let report = compute_stats(&episodes).map_err(|e| Failure {
                module: "stats",
                message: e.to_string(),
                code: EXIT_INVALID,
            })?;
            if json {
                out!("{}", report.to_json());
            } else {
                out_raw!(report.render_text());
            }
            Ok(0)
        }
        Command::Align {
            description,
            name,
            gender,
            age,
            config,
            artifacts,
            seed,
        } => {
            let config = match config {
                Some(path) => PipelineConfig::from_file(&path).map_err(infra!("config"))?,
                None => {
                    let mut c = PipelineConfig::default();
                    c.backends.mock = true;
                    c
                }
            };
            let store = ArtifactStore::open(&artifacts).map_err(infra!("artifacts"))?;
            let services = Services::from_config(&config, store).map_err(infra!("pipeline"))?;
            let plan = plan_module(&services.gateway, &name, &gender, age, &description, &ClassWords::default())
                .map_err(infra!("aligner"))?;
            let image = services
                .aligner
                .execute_plan(
                    &plan,
                    &ExecContext {
                        face_image: None,
                        episode_id: "cli",
                        description: &description,
                        keywords: &[],
                        seed,
                    },
                )
                .map_err(infra!("aligner"))?;
            let out = serde_json::json!({ "plan": plan, "image": image });
            out!("{}", serde_json::to_string_pretty(&out).expect("json"));
            Ok(0)
        }
        Command::Index(IndexCommand::Build {
            manifest,
            out,
            dim,
            corpus,
            embed,
        }) => {
            let rows = read_manifest(&manifest)?;
            let embedder = embedder(&embed, dim)?;
            let records = embed_captions(embedder.as_ref(), &rows, &corpus).map_err(infra!("retrieval"))?;
            write_embedding_file(&out, embedder.dimension(), Some(&corpus), &records).map_err(infra!("retrieval"))?;
            out!("wrote {} records of dimension {} to {}", records.len(), embedder.dimension(), out.display());
            Ok(0)
        }
        Command::Index(IndexCommand::Search { query, index, k, embed }) => {
            let index = VectorIndex::ingest(&index).map_err(infra!("retrieval"))?;
            let embedder = embedder(&embed, index.dimension())?;
            let vector = embed_text(embedder.as_ref(), &query).map_err(infra!("retrieval"))?;
            let hits = index.search(&vector, k).map_err(infra!("retrieval"))?;
            for (rank, hit) in hits.iter().enumerate() {
                let caption = index.metadata(&hit.id).map(|m| m.caption.as_str()).unwrap_or("");
                out!("{}\t{}\t{:.6}\t{}", rank + 1, hit.id, hit.score, caption);
            }
            Ok(0)
        }
        Command::Metrics {
            rankings,
            gold,
            ks,
            json,
        } => {
            let rankings: BTreeMap<String, Vec<String>> = read_json(&rankings)?;
            let gold: BTreeMap<String, String> = read_json(&gold)?;
            let metrics = compute_retrieval_metrics(&rankings, &gold, &ks).map_err(|e| Failure {
                module: "metrics",
                message: e.to_string(),
                code: EXIT_INVALID,
            })?;
            if json {
                out!("{}", serde_json::to_string_pretty(&metrics).expect("json"));
            } else {
                out_raw!(metrics.render_table());
            }
            Ok(0)
        }
    }
}

fn validate(path: &Path, lexicon: Option<&Path>, check_artifacts: bool) -> Result<u8, Failure> {
    let lexicon = match lexicon {
        Some(p) => Lexicon::from_file(p).map_err(infra!("lexicon"))?,
        None => Lexicon::bundled(),
    };
    let store = EpisodeStore::new(path);
    let scan = store.scan().map_err(infra!("store"))?;
    let artifacts = if check_artifacts {
        Some(store.artifacts().map_err(infra!("store"))?)
    } else {
        None
    };
    let mut failures = 0;
    for bad in &scan.corrupt {
        out!("line {}: corrupt episode: {}", bad.line, bad.detail);
        failures += 1;
    }
    let rules = EpisodeRules::default();
    for (line, episode) in &scan.episodes {
        let report = validate_episode(episode, &lexicon, &rules);
        for v in &report.violations {
            out!(
                "line {line}: {} {:?} {}: {}",
                episode.episode_id,
                v.kind,
                v.subject.as_deref().unwrap_or("-"),
                v.detail
            );
        }
        if !report.is_empty() {
            failures += 1;
        }
        if let Some(a) = &artifacts {
            for missing in missing_artifacts(episode, a) {
                out!("line {line}: {} missing artifact {missing}", episode.episode_id);
                failures += 1;
            }
        }
    }
    out!(
        "{} episode(s) checked, {} corrupt line(s), {} problem(s)",
        scan.episodes.len(),
        scan.corrupt.len(),
        failures
    );
    Ok(if failures == 0 { 0 } else { EXIT_INVALID })
}

fn embedder(args: &EmbedArgs, dim: usize) -> Result<Arc<dyn Embedder>, Failure> {
    Ok(match &args.embed_endpoint {
        Some(url) => Arc::new(HttpEmbedder::new(url, dim).map_err(infra!("retrieval"))?),
        None => Arc::new(HashEmbedder::new(dim, 0)),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| infra("io")(&format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure {
        module: "metrics",
        message: format!("{}: {e}", path.display()),
        code: EXIT_INVALID,
    })
}

fn read_manifest(path: &Path) -> Result<Vec<(String, String)>, Failure> {
    #[derive(serde::Deserialize)]
    struct Row {
        id: String,
        caption: String,
    }
    let text = std::fs::read_to_string(path).map_err(|e| infra("io")(&format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<Row>(l).map(|r| (r.id, r.caption)).map_err(|e| Failure {
                module: "retrieval",
                message: format!("manifest line {}: {e}", i + 1),
                code: EXIT_INVALID,
            })
        })
        .collect()
}
