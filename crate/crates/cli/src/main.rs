use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use focusq_core::analysis::{
    correlation_table, ols_quality_regression, standard_bins, write_correlations, write_regression,
};
use focusq_core::corpus::{apply_threshold, Corpus, IngestOptions, Schema};
use focusq_core::disambig::disambiguate;
use focusq_core::metrics::{read_profiles, write_profiles};
use focusq_core::pipeline::{analyze_corpus, load_inputs, run_pipeline, PipelineConfig, PipelineError, VERSION};
use focusq_core::synth::{generate, QualityModel, SynthConfig};
use focusq_core::taxonomy::co_contribution_similarity;
use focusq_core::topics::{fit_lda, read_documents, TokenCorpus, TopicModelConfig};

#[derive(Parser)]
#[command(name = "focusq", version = VERSION, about = "Contributor focus and quality analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate one input file and report record and malformed-line counts.
    Ingest {
        #[arg(long, value_parser = parse_schema)]
        schema: Schema,
        path: PathBuf,
        #[arg(long)]
        lenient: bool,
    },
    /// Author-name disambiguation report for an items file.
    Disambig {
        #[arg(long)]
        items: PathBuf,
        #[arg(long, default_value_t = 200.0)]
        cutoff: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Co-contributor similarity matrix from a contributions file.
    Similarity {
        #[arg(long)]
        contributions: PathBuf,
        #[arg(long, default_value_t = 2)]
        level: usize,
        #[arg(long, default_value_t = 1)]
        min_contributions: usize,
        #[arg(long)]
        symmetrize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Topic models over documents.jsonl.
    Topics {
        #[command(subcommand)]
        command: TopicsCommand,
    },
    /// Contributor profiles (focus, entropy, quality) and the similarity matrix.
    Metrics(RunArgs),
    /// Correlations, regression and binned curves from a profiles file.
    Analyze {
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        standardize: bool,
        #[arg(long, default_value_t = 20)]
        n_bins: usize,
        #[arg(long, default_value_t = 30)]
        min_bin_count: usize,
    },
    /// First-half versus second-half focus and quality change.
    Temporal(RunArgs),
    /// Generate a synthetic corpus with planted correlations.
    Synth(SynthArgs),
    /// Every stage end to end, with a manifest.
    Run {
        #[command(flatten)]
        run: RunArgs,
        /// Print the manifest to stdout after the run.
        #[arg(long)]
        manifest: bool,
    },
}

#[derive(Subcommand)]
enum TopicsCommand {
    Fit {
        #[arg(long)]
        documents: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override a config key, e.g. `--set level=1`. Applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    medium: Option<String>,
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Citations,
    Qa,
    Wiki,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "citations")]
    model: Model,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 12)]
    categories: usize,
    #[arg(long, default_value_t = 4)]
    branching: usize,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    rho_fq: f64,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    rho_nq: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    rho_nf: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    drift: f64,
    #[arg(long)]
    documents: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_schema(s: &str) -> Result<Schema, String> {
    s.parse().map_err(|e| format!("{e}"))
}

struct Failure {
    code: u8,
    message: String,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure {
            code: 1,
            message: format!("{e:#}"),
        }
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_config(args: &RunArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            PipelineConfig::parse(&text).map_err(|e| fail(3, format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    let mut sets: Vec<(String, String)> = Vec::new();
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| fail(3, format!("--set expects KEY=VALUE, got {o:?}")))?;
        sets.push((k.to_string(), v.to_string()));
    }
    let flags = [
        ("medium", args.medium.clone()),
        ("level", args.level.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("workers", args.workers.map(|v| v.to_string())),
    ];
    sets.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
    for (k, v) in sets {
        cfg.set(&k, &v).map_err(|e| fail(3, e))?;
    }
    Ok(cfg)
}

fn pooled<T>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, Failure>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| fail(1, e.to_string()))?;
    Ok(pool.install(f))
}

fn analyze_inputs(args: &RunArgs) -> Result<(PipelineConfig, focusq_core::pipeline::PipelineResult), Failure> {
    let cfg = load_config(args)?;
    let result = pooled(cfg.workers, || -> Result<_, PipelineError> {
        let (corpus, docs, _) = load_inputs(&args.input, &cfg)?;
        analyze_corpus(corpus, docs.as_deref(), &cfg)
    })??;
    Ok((cfg, result))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest { schema, path, lenient } => {
            let mut corpus = Corpus::default();
            let report = corpus
                .ingest(&path, schema, IngestOptions { lenient })
                .map_err(|e| fail(2, e.to_string()))?;
            println!("records={} malformed={}", report.records, report.malformed.len());
            for (line, msg) in &report.malformed {
                eprintln!("{}:{line}: {msg}", path.display());
            }
        }
        Command::Disambig { items, cutoff, out } => {
            let mut corpus = Corpus::default();
            corpus
                .ingest(&items, Schema::Items, IngestOptions::default())
                .map_err(|e| fail(2, e.to_string()))?;
            let names: BTreeSet<_> = corpus.items.iter().flat_map(|i| i.authors.iter().cloned()).collect();
            let names: Vec<_> = names.into_iter().collect();
            let d = disambiguate(&names, cutoff);
            d.write_report(create(&out)?).context("writing report")?;
            let excluded = d.resolved.values().filter(|v| v.is_none()).count();
            println!("names={} excluded={excluded}", names.len());
        }
        Command::Similarity {
            contributions,
            level,
            min_contributions,
            symmetrize,
            out,
        } => {
            let mut corpus = Corpus::default();
            corpus
                .ingest(&contributions, Schema::Contributions, IngestOptions::default())
                .map_err(|e| fail(2, e.to_string()))?;
            let contributors = apply_threshold(&corpus, min_contributions);
            let s = co_contribution_similarity(&corpus, &contributors, level).map_err(|e| fail(4, e.to_string()))?;
            let s = if symmetrize { s.symmetrized() } else { s };
            s.write_csv(create(&out)?).context("writing similarity")?;
            println!("categories={} contributors={}", s.len(), contributors.len());
        }
        Command::Topics {
            command: TopicsCommand::Fit { documents, k, iters, seed, out },
        } => {
            let file = File::open(&documents).with_context(|| format!("opening {}", documents.display()))?;
            let docs = read_documents(BufReader::new(file)).map_err(|e| fail(2, e.to_string()))?;
            let tokens = TokenCorpus::from_texts(docs.iter().map(|d| (d.doc_id.as_str(), d.text.as_str())))
                .map_err(|e| fail(3, e.to_string()))?;
            let cfg = TopicModelConfig::new(k).with_iterations(iters).with_seed(seed);
            let fit = fit_lda(&tokens, &cfg).map_err(|e| fail(4, e.to_string()))?;
            fit.doc_topic.write_csv(create(&out)?).context("writing doc-topic matrix")?;
            println!("documents={} vocabulary={} topics={k}", tokens.docs.len(), tokens.vocab.len());
        }
        Command::Metrics(args) => {
            let (_, result) = analyze_inputs(&args)?;
            write_profiles(create(&args.out.join("profiles.csv"))?, &result.profiles).context("writing profiles")?;
            result
                .similarity
                .write_csv(create(&args.out.join("similarity.csv"))?)
                .context("writing similarity")?;
            println!("profiles={}", result.profiles.len());
        }
        Command::Analyze {
            profiles,
            out,
            standardize,
            n_bins,
            min_bin_count,
        } => {
            let file = File::open(&profiles).with_context(|| format!("opening {}", profiles.display()))?;
            let profiles = read_profiles(BufReader::new(file)).map_err(|e| fail(2, e.to_string()))?;
            write_correlations(create(&out.join("report.csv"))?, &correlation_table(&profiles))
                .context("writing report")?;
            let reg = ols_quality_regression(&profiles, standardize).map_err(|e| fail(4, e.to_string()))?;
            write_regression(create(&out.join("regression.csv"))?, &reg).context("writing regression")?;
            for (name, table) in standard_bins(&profiles, n_bins, min_bin_count).map_err(|e| fail(4, e.to_string()))? {
                table
                    .write_csv(create(&out.join(format!("bins_{name}.csv")))?)
                    .context("writing bins")?;
            }
            println!("profiles={} r2={}", profiles.len(), reg.r2);
        }
        Command::Temporal(args) => {
            let (_, result) = analyze_inputs(&args)?;
            let t = result.temporal.map_err(|e| fail(4, format!("stage temporal: {e}")))?;
            t.write_csv(create(&args.out.join("temporal.csv"))?).context("writing temporal")?;
            println!(
                "contributors={} pct_increased_focus={} mean_delta_focus={} p={}",
                t.deltas.len(),
                t.pct_increased_focus,
                t.delta_focus.mean,
                t.delta_focus.p_value
            );
        }
        Command::Synth(a) => {
            let model = match a.model {
                Model::Citations => QualityModel::Citations,
                Model::Qa => QualityModel::Qa,
                Model::Wiki => QualityModel::Wiki,
            };
            let cfg = SynthConfig {
                n_contributors: a.n,
                n_categories: a.categories,
                branching: a.branching,
                depth: a.depth,
                rho_fq: a.rho_fq,
                rho_nq: a.rho_nq,
                rho_nf: a.rho_nf,
                drift: a.drift,
                documents: a.documents,
                seed: a.seed,
                ..SynthConfig::new(model)
            };
            let corpus = generate(&cfg).map_err(|e| fail(3, e.to_string()))?;
            corpus.write(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
            println!(
                "contributors={} contributions={}",
                corpus.ground_truth.len(),
                corpus.corpus.contributions.len()
            );
        }
        Command::Run { run, manifest } => {
            let cfg = load_config(&run)?;
            let path = run_pipeline(&cfg, &run.input, &run.out)?;
            if manifest {
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                print!("{text}");
            } else {
                println!("manifest={}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = writeln!(std::io::stderr(), "error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
