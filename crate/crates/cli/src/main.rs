use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wordrbm::corpus::{extract_windows, read_documents, tokenize_line, Vocabulary};
use wordrbm::diagnostics::{mixing_report, write_aggregate_csv, write_curves_csv};
use wordrbm::exec::Execution;
use wordrbm::features::{
    accuracy, document_windows, export_doc_features, export_embeddings, fit_threshold, nearest_neighbors,
    score_document, Document, Metric,
};
use wordrbm::format::{decode_model, encode_model, read_windows, write_model, write_windows, Model};
use wordrbm::trainer::{corpus_proposal, sample_windows, stream_rng, train_with, write_metrics_csv, TrainConfig, VisibleSampler};
use wordrbm::wrrbm::WrrbmParams;
use wordrbm::Error;

const FORMATS: &str = "\
File formats:
  corpus      UTF-8 text, one document per line, space-separated tokens
  vocab       TSV rows `id<TAB>token<TAB>count`, sorted by id, unknown-word row last
  windows     binary: \"WRBM\", version u32, K u32, n u32, count u64, then count*n u32 word ids (little-endian)
  model       binary: \"RBMM\", version u32, mode u32, shape header, then f64 arrays (little-endian)
  docs        one document per line: `label<TAB>tokens`, label is pos, neg or empty
  config      `key = value` lines using the train flag names with underscores; `#` starts a comment
  metrics     CSV update,epoch,mean_pos_free_energy,mh_acceptance_rate,grad_norm,wall_ms
  mixing      CSV window_id,group,iteration,sym_kl,tv (aggregate: window_id,iteration,sym_kl,mean_tv)
  embeddings  one line per word: token, then the vector as space-separated decimals
  features    CSV doc_id,fe_pos_scaled,fe_neg_scaled,score,label_if_known

Errors are reported on stderr as one line: error: kind=<kind> msg=\"<message>\"";

#[derive(Parser)]
#[command(name = "wordrbm", version, about = "Word-window RBMs trained with Metropolis-Hastings visible updates")]
#[command(after_long_help = FORMATS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count normalized tokens and keep the most frequent ones.
    BuildVocab {
        #[arg(long)]
        corpus: PathBuf,
        /// Number of real words kept; the unknown-word row is added on top.
        #[arg(long)]
        max_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a corpus as n-gram windows that never cross document boundaries.
    ExtractWindows {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a word-representation RBM on a window file.
    Train(TrainArgs),
    /// Exact mixing curves of the M-H operator on sampled windows.
    DiagnoseMixing {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        windows: PathBuf,
        #[arg(long, default_value_t = 6)]
        num_windows: usize,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        #[arg(long, default_value_t = wordrbm::mh::DEFAULT_SMOOTHING)]
        proposal_smoothing: f64,
        #[arg(long)]
        seed: u64,
        /// Per-group curves.
        #[arg(long)]
        out: PathBuf,
        /// Per-window mean-TV curves.
        #[arg(long)]
        aggregate_out: Option<PathBuf>,
        #[command(flatten)]
        threads: Threads,
    },
    /// Write the word representations, one line per vocabulary word.
    ExportEmbeddings {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closest words to a query in the representation space.
    Neighbors {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        m: usize,
        #[arg(long, default_value = "euclidean")]
        metric: Metric,
    },
    /// Free-energy features of documents under a positive and a negative model.
    ScoreDocs {
        #[command(flatten)]
        pair: ModelPair,
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        threads: Threads,
    },
    /// Fit the free-energy threshold on training documents and label test documents.
    Classify {
        #[command(flatten)]
        pair: ModelPair,
        #[arg(long)]
        train_docs: PathBuf,
        #[arg(long)]
        test_docs: PathBuf,
        /// Predictions as `doc_id<TAB>score<TAB>label`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        threads: Threads,
    },
    /// Print a model header summary; optionally re-encode it to another file.
    InspectModel {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rewrite: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModelPair {
    #[arg(long)]
    pos_model: PathBuf,
    #[arg(long)]
    neg_model: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
}

#[derive(Args)]
struct Threads {
    /// Worker threads; 1 runs everything sequentially and deterministically.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    windows: PathBuf,
    /// Final model.
    #[arg(long)]
    out: PathBuf,
    /// Key/value config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Directory for `checkpoint_<update>.bin` files.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    threads: Threads,

    #[arg(long)]
    num_chains: Option<usize>,
    #[arg(long)]
    minibatch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum_u: Option<f64>,
    #[arg(long)]
    l2_weight: Option<f64>,
    #[arg(long)]
    steps_per_update: Option<usize>,
    #[arg(long)]
    proposal_smoothing: Option<f64>,
    /// mh or exact
    #[arg(long)]
    visible_sampler: Option<VisibleSampler>,
    #[arg(long)]
    gibbs_steps: Option<usize>,
    #[arg(long)]
    hidden_units: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    init_std: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, visible_alias = "updates")]
    max_updates: Option<usize>,
    #[arg(long)]
    log_interval: Option<usize>,
    #[arg(long)]
    checkpoint_interval: Option<usize>,
    /// sequential or parallel
    #[arg(long)]
    execution: Option<Execution>,
}

struct Failure {
    kind: &'static str,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { kind: e.kind(), msg: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { kind: "io", msg: e.to_string() }
    }
}

type CliResult<T> = Result<T, Failure>;

fn fail<T>(kind: &'static str, msg: impl Into<String>) -> CliResult<T> {
    Err(Failure { kind, msg: msg.into() })
}

fn report(kind: &str, msg: &str) {
    let msg = msg.split_whitespace().collect::<Vec<_>>().join(" ").replace('"', "\\\"");
    eprintln!("error: kind={kind} msg=\"{msg}\"");
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure { kind: "io", msg: format!("{}: {e}", path.display()) })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure { kind: "io", msg: format!("{}: {e}", path.display()) })
}

/// Tags errors from a file with its path.
fn in_file<T>(path: &Path, r: wordrbm::Result<T>) -> CliResult<T> {
    r.map_err(|e| Failure { kind: e.kind(), msg: format!("{}: {e}", path.display()) })
}

fn load_vocab(path: &Path) -> CliResult<Vocabulary> {
    in_file(path, Vocabulary::read_tsv(open(path)?))
}

fn load_wrrbm(path: &Path) -> CliResult<WrrbmParams> {
    let bytes = fs::read(path).map_err(|e| Failure { kind: "io", msg: format!("{}: {e}", path.display()) })?;
    in_file(path, decode_model(&bytes).and_then(Model::into_wrrbm))
}

fn save_wrrbm(path: &Path, params: &WrrbmParams) -> CliResult<()> {
    let mut w = create(path)?;
    write_model(&Model::Wrrbm(params.clone()), &mut w)?;
    w.flush()?;
    Ok(())
}

/// Sets up the worker pool and returns the matching execution mode.
fn execution(threads: &Threads, fallback: Execution) -> CliResult<Execution> {
    match threads.threads {
        None => Ok(fallback),
        Some(0) => fail("config", "--threads must be positive"),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure { kind: "config", msg: e.to_string() })?;
            Ok(Execution::Parallel)
        }
    }
}

/// Reads `label<TAB>tokens` lines; documents are identified by line number.
fn load_docs(path: &Path, vocab: &Vocabulary, n: usize) -> CliResult<Vec<Document>> {
    let mut reader = open(path)?;
    let mut docs = Vec::new();
    let mut offset = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        if read == 0 {
            break;
        }
        let row = line.trim_end_matches(['\n', '\r']);
        let Some((label, text)) = row.split_once('\t') else {
            return in_file(path, Err(Error::Malformed { offset, reason: "expected label<TAB>tokens".into() }));
        };
        let label = match label {
            "pos" => Some(true),
            "neg" => Some(false),
            "" => None,
            other => {
                let reason = format!("label must be pos, neg or empty, got {other:?}");
                return in_file(path, Err(Error::Malformed { offset, reason }));
            }
        };
        let ids = vocab.encode(&tokenize_line(text));
        docs.push(Document { id: docs.len().to_string(), windows: document_windows(&ids, n), label });
        offset += read as u64;
    }
    if docs.is_empty() {
        return fail("empty_input", format!("{}: no documents", path.display()));
    }
    Ok(docs)
}

fn load_pair(pair: &ModelPair) -> CliResult<(WrrbmParams, WrrbmParams, Vocabulary)> {
    let pos = load_wrrbm(&pair.pos_model)?;
    let neg = load_wrrbm(&pair.neg_model)?;
    let vocab = load_vocab(&pair.vocab)?;
    for m in [&pos, &neg] {
        if m.layout.k != vocab.len() {
            return fail(
                "dimension_mismatch",
                format!("vocabulary has {} words, model has K={}", vocab.len(), m.layout.k),
            );
        }
    }
    Ok((pos, neg, vocab))
}

fn train_config(args: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure { kind: "io", msg: format!("{}: {e}", path.display()) })?;
            in_file(path, TrainConfig::from_kv_str(&text))?
        }
        None => TrainConfig::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    apply!(
        num_chains,
        minibatch_size,
        learning_rate,
        momentum_u,
        l2_weight,
        steps_per_update,
        proposal_smoothing,
        visible_sampler,
        gibbs_steps,
        hidden_units,
        embedding_dim,
        init_std,
        epochs,
        log_interval,
        checkpoint_interval,
        execution
    );
    if let Some(m) = args.max_updates {
        cfg.max_updates = Some(m);
    }
    cfg.seed = args.seed;
    cfg.execution = execution(&args.threads, cfg.execution)?;
    cfg.validate()?;
    Ok(cfg)
}

fn train(args: &TrainArgs) -> CliResult<()> {
    let cfg = train_config(args)?;
    let corpus = in_file(&args.windows, read_windows(open(&args.windows)?))?;
    if let Some(dir) = &args.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }
    let out = train_with(&corpus, &cfg, |update, params| {
        if let Some(dir) = &args.checkpoint_dir {
            let path = dir.join(format!("checkpoint_{update:08}.bin"));
            let mut w = BufWriter::new(File::create(path)?);
            write_model(&Model::Wrrbm(params.clone()), &mut w)?;
            w.flush()?;
        }
        Ok(())
    })?;
    save_wrrbm(&args.out, &out.state.params)?;
    if let Some(path) = &args.metrics {
        let mut w = create(path)?;
        write_metrics_csv(&mut w, &out.log)?;
        w.flush()?;
    }
    println!("updates={} windows={} K={} n={}", out.state.updates, corpus.len(), corpus.vocab_size(), corpus.n());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::BuildVocab { corpus, max_size, out } => {
            let docs = in_file(&corpus, read_documents(open(&corpus)?))?;
            let vocab = Vocabulary::build(&docs, max_size)?;
            let mut w = create(&out)?;
            vocab.write_tsv(&mut w)?;
            w.flush()?;
        }
        Command::ExtractWindows { corpus, vocab, n, out } => {
            let docs = in_file(&corpus, read_documents(open(&corpus)?))?;
            let vocab = load_vocab(&vocab)?;
            let windows = extract_windows(&docs, &vocab, n)?;
            let mut w = create(&out)?;
            write_windows(&windows, &mut w)?;
            w.flush()?;
            println!("windows={}", windows.len());
        }
        Command::Train(args) => train(&args)?,
        Command::DiagnoseMixing {
            model,
            windows,
            num_windows,
            iterations,
            proposal_smoothing,
            seed,
            out,
            aggregate_out,
            threads,
        } => {
            let exec = execution(&threads, Execution::Sequential)?;
            let params = load_wrrbm(&model)?;
            let corpus = in_file(&windows, read_windows(open(&windows)?))?;
            if corpus.vocab_size() != params.layout.k || corpus.n() != params.layout.n {
                return fail(
                    "dimension_mismatch",
                    format!(
                        "windows have (n={}, K={}), model has (n={}, K={})",
                        corpus.n(),
                        corpus.vocab_size(),
                        params.layout.n,
                        params.layout.k
                    ),
                );
            }
            if corpus.is_empty() {
                return fail("empty_input", format!("{}: no windows", windows.display()));
            }
            let proposal = corpus_proposal(&corpus, proposal_smoothing)?;
            let mut rng = stream_rng(seed, 0);
            let picked = sample_windows(&corpus, num_windows, &mut rng);
            let curves = mixing_report(&params, &picked, &proposal, iterations, &mut rng, exec)?;
            let mut w = create(&out)?;
            write_curves_csv(&mut w, &curves)?;
            w.flush()?;
            if let Some(path) = aggregate_out {
                let mut w = create(&path)?;
                write_aggregate_csv(&mut w, &curves)?;
                w.flush()?;
            }
        }
        Command::ExportEmbeddings { model, vocab, scale, out } => {
            let params = load_wrrbm(&model)?;
            let vocab = load_vocab(&vocab)?;
            let mut w = create(&out)?;
            export_embeddings(&params, &vocab, scale, &mut w)?;
            w.flush()?;
        }
        Command::Neighbors { model, vocab, query, m, metric } => {
            let params = load_wrrbm(&model)?;
            let vocab = load_vocab(&vocab)?;
            let stdout = io::stdout();
            let mut w = stdout.lock();
            for (id, dist) in nearest_neighbors(&params, &vocab, &query, m, metric)? {
                writeln!(w, "{}\t{dist}", vocab.tokens()[id])?;
            }
        }
        Command::ScoreDocs { pair, docs, out, threads } => {
            let exec = execution(&threads, Execution::Sequential)?;
            let (pos, neg, vocab) = load_pair(&pair)?;
            let docs = load_docs(&docs, &vocab, pos.layout.n)?;
            let mut w = create(&out)?;
            export_doc_features(&pos, &neg, &docs, &mut w, exec)?;
            w.flush()?;
        }
        Command::Classify { pair, train_docs, test_docs, out, threads } => {
            let exec = execution(&threads, Execution::Sequential)?;
            let (pos, neg, vocab) = load_pair(&pair)?;
            let train = load_docs(&train_docs, &vocab, pos.layout.n)?;
            let test = load_docs(&test_docs, &vocab, pos.layout.n)?;
            let threshold = fit_threshold(&pos, &neg, &train, exec)?;
            let mut rows = Vec::with_capacity(test.len());
            for d in &test {
                let score = score_document(&pos, &neg, &d.windows)?;
                rows.push((d, score, score.is_some_and(|s| s > threshold)));
            }
            if let Some(path) = out {
                let mut w = create(&path)?;
                for (d, score, predicted) in &rows {
                    let score = score.map_or(String::new(), |s| s.to_string());
                    writeln!(w, "{}\t{score}\t{}", d.id, if *predicted { "pos" } else { "neg" })?;
                }
                w.flush()?;
            }
            let labelled: Vec<_> = rows.iter().filter_map(|(d, _, p)| d.label.map(|l| (*p, l))).collect();
            if labelled.is_empty() {
                println!("threshold={threshold}");
            } else {
                let (pred, truth): (Vec<bool>, Vec<bool>) = labelled.into_iter().unzip();
                println!("threshold={threshold} accuracy={} labelled={}", accuracy(&pred, &truth), truth.len());
            }
        }
        Command::InspectModel { model, rewrite } => {
            let bytes = fs::read(&model).map_err(|e| Failure { kind: "io", msg: format!("{}: {e}", model.display()) })?;
            let parsed = in_file(&model, decode_model(&bytes))?;
            println!("{} bytes={}", parsed.summary(), bytes.len());
            if let Some(path) = rewrite {
                fs::write(&path, encode_model(&parsed)?)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let text = e.to_string();
            let msg: Vec<&str> = text.lines().take_while(|l| !l.starts_with("Usage:")).collect();
            report("usage", msg.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report(f.kind, &f.msg);
            ExitCode::FAILURE
        }
    }
}
