mod config;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use simseek::agents::Agent;
use simseek::analysis::{
    build_relevance_training_set, build_specificity_training_set, dataset_statistics_with,
    format_curves_tsv, format_stat_table, format_stat_tsv, per_turn_curves, ExternalScores,
    InformativenessScorer, TurnScorer,
};
use simseek::corpus::{
    filter_passages_by_length, import_quac, read_canonical, read_documents, write_canonical,
    write_documents, Dataset, Provenance,
};
use simseek::evalsuite::{
    cqa_f1, format_bleu_row, format_cqa_report, format_retrieval_report, heq, intrinsic_bleu_eval,
    questions_of, read_predictions, read_question_records, read_rankings, read_scores,
    retrieval_scores,
};
use simseek::humaneval::{
    create_tasks, format_report, read_tasks, report, write_tasks, ReportOptions, Session, VoteLog,
    DEFAULT_BOOTSTRAP_SAMPLES, DEFAULT_PANEL_SIZE,
};
use simseek::simulator::{
    format_filtration_table, roundtrip_filter, run_batch, BatchAgents, CandidatePolicy,
    FilterConfig, Mode, SimulationConfig,
};
use simseek::textnorm::DEFAULT_ANYTHING_ELSE_MARKERS;
use simseek_server::{annotation_router, mock_router, AnnotationState, FaultPlan, MockState};

use config::AgentsFile;

#[derive(Parser)]
#[command(name = "simseek", version, about = "Simulate and evaluate information-seeking conversations")]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sym,
    Asym,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    /// Six turns, no early stop.
    Semi,
    /// Up to twelve turns, stop after more than three unanswerable answers.
    Wiki,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Top1,
    Top1Dedup,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatFormat {
    Table,
    Tsv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifierKind {
    Specificity,
    Relevance,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a QuAC-format JSON file to conversation lines.
    Import {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the documents (passage + background) here.
        #[arg(long)]
        docs_out: Option<PathBuf>,
    },
    /// Simulate one conversation per document.
    Simulate {
        /// Documents, one JSON object per line.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum, default_value = "semi")]
        preset: PresetArg,
        #[arg(long)]
        max_turns: Option<usize>,
        /// End a conversation once this many unanswerable answers are exceeded.
        #[arg(long)]
        unanswerable_budget: Option<usize>,
        /// Candidates requested from the extractor.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        /// Agent configuration (TOML).
        #[arg(long)]
        agents: Option<PathBuf>,
        #[arg(long)]
        questioner: Option<String>,
        #[arg(long)]
        extractor: Option<String>,
        #[arg(long)]
        answerer: Option<String>,
        /// Keep only passages with at least this many words.
        #[arg(long)]
        min_words: Option<usize>,
        #[arg(long)]
        max_words: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Roundtrip-filter a synthetic dataset.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dropped pairs with reasons, one JSON object per line.
        #[arg(long)]
        dropped: Option<PathBuf>,
        #[arg(long)]
        agents: Option<PathBuf>,
        /// Answer finder used as the filter.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Flag below-threshold pairs instead of dropping them.
        #[arg(long)]
        keep_below: bool,
        /// Row label in the printed table.
        #[arg(long)]
        name: Option<String>,
    },
    /// Dataset statistics.
    Stats {
        #[arg(long = "in", required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: StatFormat,
        /// Words that mark an "Anything else?" question.
        #[arg(long, value_delimiter = ',')]
        markers: Option<Vec<String>>,
    },
    /// Per-turn metric curves as TSV.
    Curves {
        #[arg(long = "in")]
        input: PathBuf,
        /// Extra per-pair scores as NAME=PATH (conv_id, t, score lines).
        #[arg(long = "scores")]
        scores: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CQA F1 (and HEQ with per-question human F1).
    EvalCqa {
        /// QuAC-format gold file.
        #[arg(long)]
        gold: PathBuf,
        /// question_id<TAB>answer lines.
        #[arg(long)]
        predictions: PathBuf,
        /// question_id<TAB>human F1 lines, F1 in [0, 1].
        #[arg(long)]
        human_f1: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// MRR, R@5 and R@20 of ranked retrieval results.
    EvalRetrieval {
        /// query_id<TAB>id1,id2,...<TAB>gold lines.
        #[arg(long)]
        rankings: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Corpus BLEU-1..4 of generated against gold questions.
    EvalBleu {
        /// conv_id<TAB>t<TAB>question lines.
        #[arg(long)]
        generated: PathBuf,
        /// Same format, or a conversation file ending in .jsonl.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value = "generated")]
        name: String,
    },
    /// Training examples for the specificity or relevance classifier.
    BuildClassifierData {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: ClassifierKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sample pairwise judgment tasks from two aligned datasets.
    HumanevalTasks {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the annotation API until interrupted.
    HumanevalServe {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        votes: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = DEFAULT_PANEL_SIZE)]
        panel_size: usize,
        /// Directory of annotation UI assets.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Aggregate a vote log into the evaluation report.
    HumanevalReport {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        votes: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PANEL_SIZE)]
        panel_size: usize,
        #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Run a mock agent server backed by the scripted agents.
    MockAgent {
        #[arg(long, default_value_t = 8000)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Scripted agent answering caf requests.
        #[arg(long, default_value = "lexical-answerer")]
        answerer: String,
        /// Answer the first N requests with 503.
        #[arg(long, default_value_t = 0)]
        fail_first: usize,
        #[arg(long, default_value_t = 0)]
        delay_ms: u64,
        /// Reply with invalid JSON.
        #[arg(long)]
        malformed: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "dataset".to_owned(), |s| s.to_string_lossy().into_owned())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    read_canonical(open(path)?, stem(path), Provenance::Imported)
        .with_context(|| format!("reading {}", path.display()))
}

fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    write_canonical(dataset, create(path)?).with_context(|| format!("writing {}", path.display()))
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            let mut f = create(p)?;
            f.write_all(text.as_bytes())?;
            f.flush()?;
        }
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json_lines<T: serde::Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn agents_file(path: Option<&Path>) -> Result<AgentsFile> {
    path.map_or_else(|| Ok(AgentsFile::default()), AgentsFile::load)
}

fn connect(file: &AgentsFile, role: &str, flag: Option<&str>, default: &str) -> Result<Arc<dyn Agent>> {
    let ep = match file.endpoint(role, flag)? {
        Some(ep) => ep,
        None => file
            .endpoint(role, Some(&format!("scripted:{default}")))?
            .expect("explicit endpoint"),
    };
    ep.connect().with_context(|| format!("connecting {role}"))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Import {
            input,
            out,
            docs_out,
        } => {
            let json = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let imported = import_quac(&json, stem(&input))?;
            save_dataset(&imported.dataset, &out)?;
            if let Some(path) = docs_out {
                let docs = imported.dataset.conversations.iter().map(|c| &c.document);
                write_documents(docs, create(&path)?)?;
            }
            eprintln!(
                "imported {} conversations, {} questions ({} span repairs)",
                imported.dataset.conversations.len(),
                imported.dataset.n_questions(),
                imported.warnings.len()
            );
        }
        Command::Simulate {
            input,
            out,
            mode,
            preset,
            max_turns,
            unanswerable_budget,
            k,
            policy,
            agents,
            questioner,
            extractor,
            answerer,
            min_words,
            max_words,
            seed,
            jobs,
        } => {
            let mut config = match preset {
                PresetArg::Semi => SimulationConfig::semi_supervised(Mode::Sym),
                PresetArg::Wiki => SimulationConfig::wiki(),
            };
            if let Some(m) = mode {
                config.mode = match m {
                    ModeArg::Sym => Mode::Sym,
                    ModeArg::Asym => Mode::Asym,
                };
            }
            if let Some(t) = max_turns {
                config.max_turns = t;
            }
            if unanswerable_budget.is_some() {
                config.unanswerable_budget = unanswerable_budget;
            }
            if let Some(k) = k {
                config.k = k;
            }
            if let Some(p) = policy {
                config.candidate_policy = match p {
                    PolicyArg::Top1 => CandidatePolicy::Top1,
                    PolicyArg::Top1Dedup => CandidatePolicy::Top1Dedup,
                    PolicyArg::Random => CandidatePolicy::UniformRandom,
                };
            }
            config.seed = seed;

            let mut docs = read_documents(open(&input)?)
                .with_context(|| format!("reading {}", input.display()))?;
            if min_words.is_some() || max_words.is_some() {
                let (lo, hi) = (min_words.unwrap_or(0), max_words.unwrap_or(usize::MAX));
                if lo > hi {
                    bail!("--min-words must not exceed --max-words");
                }
                let before = docs.len();
                docs = filter_passages_by_length(docs, lo, hi);
                eprintln!("{} of {before} passages within [{lo}, {hi}] words", docs.len());
            }

            let file = agents_file(agents.as_deref())?;
            let questioner = connect(&file, "questioner", questioner.as_deref(), "template-questioner")?;
            let batch = match config.mode {
                Mode::Sym => BatchAgents {
                    questioner,
                    extractor: Some(connect(&file, "extractor", extractor.as_deref(), "span-extractor")?),
                    answerer: None,
                },
                Mode::Asym => BatchAgents {
                    questioner,
                    extractor: None,
                    answerer: Some(connect(&file, "answerer", answerer.as_deref(), "lexical-answerer")?),
                },
            };
            let report = run_batch(&docs, &config, &batch, jobs)?;
            save_dataset(&report.conversations, &out)?;
            let manifest = report.manifest(&config, batch.identities(), now());
            let mpath = manifest_path(&out);
            let mut m = create(&mpath)?;
            serde_json::to_writer_pretty(&mut m, &manifest)?;
            m.write_all(b"\n")?;
            m.flush()?;
            eprintln!(
                "simulated {} conversations ({} questions), {} aborted",
                manifest.conversations, manifest.questions, manifest.aborted
            );
        }
        Command::Filter {
            input,
            out,
            dropped,
            agents,
            filter,
            threshold,
            keep_below,
            name,
        } => {
            let dataset = load_dataset(&input)?;
            let file = agents_file(agents.as_deref())?;
            let agent = connect(&file, "filter", filter.as_deref(), "lexical-answerer")?;
            let config = FilterConfig {
                f1_threshold: threshold,
                drop_below: !keep_below,
            };
            let outcome = roundtrip_filter(&dataset, agent.as_ref(), &config)?;
            save_dataset(&outcome.kept, &out)?;
            if let Some(path) = dropped {
                let mut all = outcome.dropped.clone();
                all.extend(outcome.flagged.iter().cloned());
                json_lines(&all, &path)?;
            }
            let label = name.unwrap_or_else(|| dataset.name.clone());
            print!("{}", format_filtration_table(&[outcome.row(label)]));
        }
        Command::Stats {
            input,
            format,
            markers,
        } => {
            let markers: Vec<String> = markers.unwrap_or_else(|| {
                DEFAULT_ANYTHING_ELSE_MARKERS.iter().map(|s| (*s).to_owned()).collect()
            });
            let mut reports = Vec::new();
            for path in &input {
                let d = load_dataset(path)?;
                let r = dataset_statistics_with(&d, &markers)
                    .with_context(|| format!("statistics of {}", path.display()))?;
                reports.push((d.name, r));
            }
            print!(
                "{}",
                match format {
                    StatFormat::Table => format_stat_table(&reports),
                    StatFormat::Tsv => format_stat_tsv(&reports),
                }
            );
        }
        Command::Curves { input, scores, out } => {
            let dataset = load_dataset(&input)?;
            let mut external = Vec::new();
            for arg in &scores {
                let Some((name, path)) = arg.split_once('=') else {
                    bail!("--scores expects NAME=PATH, got {arg:?}");
                };
                external.push(ExternalScores::from_reader(name, open(Path::new(path))?)?);
            }
            let mut scorers: Vec<&dyn TurnScorer> = vec![&InformativenessScorer];
            scorers.extend(external.iter().map(|s| s as &dyn TurnScorer));
            let curves = per_turn_curves(&dataset, &scorers);
            for c in curves.iter().filter(|c| c.skipped > 0) {
                log::warn!("{}: {} pairs had no score", c.metric, c.skipped);
            }
            write_text(out.as_deref(), &format_curves_tsv(&curves))?;
        }
        Command::EvalCqa {
            gold,
            predictions,
            human_f1,
            json,
        } => {
            let gold_json = std::fs::read_to_string(&gold)
                .with_context(|| format!("reading {}", gold.display()))?;
            let gold = simseek::corpus::quac_gold_references(&gold_json)?;
            let preds = read_predictions(open(&predictions)?)?;
            let scores = cqa_f1(&preds, &gold)?;
            let heq = match human_f1 {
                Some(p) => Some(heq(&scores.per_question, &read_scores(open(&p)?)?)?),
                None => None,
            };
            if json {
                let mut v = serde_json::json!({ "f1": scores.f1, "n": scores.per_question.len(), "missing": scores.missing });
                if let Some(h) = &heq {
                    v["heq_q"] = h.heq_q.into();
                    v["heq_d"] = h.heq_d.into();
                }
                println!("{v}");
            } else {
                print!("{}", format_cqa_report(&scores, heq.as_ref()));
            }
        }
        Command::EvalRetrieval { rankings, json } => {
            let rankings = read_rankings(open(&rankings)?)?;
            let s = retrieval_scores(&rankings)?;
            if json {
                println!("{}", serde_json::to_string(&s)?);
            } else {
                print!("{}", format_retrieval_report(&s));
            }
        }
        Command::EvalBleu {
            generated,
            gold,
            name,
        } => {
            let generated = read_question_records(open(&generated)?)?;
            let gold = if gold.extension().is_some_and(|e| e == "jsonl") {
                questions_of(&load_dataset(&gold)?)
            } else {
                read_question_records(open(&gold)?)?
            };
            let scores = intrinsic_bleu_eval(&generated, &gold)?;
            println!("model\tB-1\tB-2\tB-3\tB-4");
            println!("{}", format_bleu_row(&name, &scores));
        }
        Command::BuildClassifierData {
            input,
            kind,
            out,
            seed,
        } => {
            let dataset = load_dataset(&input)?;
            let set = match kind {
                ClassifierKind::Specificity => build_specificity_training_set(&dataset, seed),
                ClassifierKind::Relevance => build_relevance_training_set(&dataset, seed),
            };
            for w in &set.stats.warnings {
                log::warn!("{w}");
            }
            json_lines(&set.examples, &out)?;
            eprintln!("{}", serde_json::to_string(&set.stats)?);
        }
        Command::HumanevalTasks {
            a,
            b,
            n,
            out,
            seed,
        } => {
            let tasks = create_tasks(&load_dataset(&a)?, &load_dataset(&b)?, n, seed)?;
            write_tasks(&tasks, create(&out)?)?;
            eprintln!("wrote {} tasks", tasks.len());
        }
        Command::HumanevalServe {
            tasks,
            votes,
            port,
            host,
            panel_size,
            static_dir,
            samples,
            seed,
        } => {
            let tasks = read_tasks(open(&tasks)?, &tasks.display().to_string())?;
            let session = Session::new(tasks, VoteLog::open(&votes)?, panel_size)?;
            let state = AnnotationState::new(session, samples, seed);
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad --host/--port")?;
            serve_until_interrupted(addr, annotation_router(state, static_dir))?;
        }
        Command::HumanevalReport {
            tasks,
            votes,
            panel_size,
            samples,
            seed,
            json,
        } => {
            let tasks = read_tasks(open(&tasks)?, &tasks.display().to_string())?;
            if !votes.exists() {
                bail!("vote log {} does not exist", votes.display());
            }
            let log = VoteLog::open(&votes)?;
            let options = ReportOptions {
                panel_size,
                n_samples: samples,
                seed,
            };
            let r = report(&tasks, log.votes(), &options)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                print!("{}", format_report(&r));
            }
        }
        Command::MockAgent {
            port,
            host,
            answerer,
            fail_first,
            delay_ms,
            malformed,
        } => {
            let faults = FaultPlan {
                fail_first,
                delay: Duration::from_millis(delay_ms),
                malformed,
                wrong_request_id: false,
            };
            let state = MockState::new(faults, &answerer)
                .with_context(|| format!("unknown scripted agent {answerer:?}"))?;
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad --host/--port")?;
            serve_until_interrupted(addr, mock_router(state))?;
        }
    }
    Ok(())
}

fn serve_until_interrupted(addr: SocketAddr, router: simseek_server::Router) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        simseek_server::serve(listener, router, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}
