use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use linkground::assemble::{BudgetConfig, TrainingExample};
use linkground::corpus::{Blocklist, Conversation, DatasetSplit, PastDialogueStore};
use linkground::kb::ExtDocsKB;
use linkground::lm::GenerationConfig;
use linkground::metrics::Utterance;
use linkground::retrieve::KnowledgeScope;
use linkground::tokenizer::{train_bpe, TokenId};
use linkground_service::commands::{self, Mode, Part};
use linkground_service::config::{SeedMode, ServiceConfig};
use linkground_service::engine::{Engine, RetrieveRequest};
use linkground_service::server::{router, AppState};

#[derive(Parser)]
#[command(name = "linkground", version, about = "Knowledge- and persona-grounded response generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct EmbedArgs {
    /// `hash` or `remote`.
    #[arg(long, default_value = "hash")]
    embedder: String,
    #[arg(long, default_value_t = 512)]
    embed_dim: usize,
    #[arg(long)]
    embed_endpoint: Option<String>,
}

#[derive(Args, Clone)]
struct BudgetArgs {
    #[arg(long, default_value_t = 1024)]
    total: usize,
    #[arg(long, default_value_t = 250)]
    knowledge_max: usize,
    #[arg(long, default_value_t = 250)]
    history_max: usize,
}

impl BudgetArgs {
    fn budget(&self) -> Result<BudgetConfig> {
        let b = BudgetConfig {
            total: self.total,
            knowledge_max: self.knowledge_max,
            history_max: self.history_max,
            conversation_min: self.total.saturating_sub(self.knowledge_max + self.history_max),
        };
        b.validate()?;
        Ok(b)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract conversations, the past-dialogue store and the url list from monthly dumps.
    Ingest {
        #[arg(long = "dump", required = true)]
        dumps: Vec<PathBuf>,
        #[arg(long)]
        blocklist_domains: Option<PathBuf>,
        #[arg(long)]
        blocklist_ext: Option<PathBuf>,
        #[arg(long)]
        nsfw_subreddits: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Expected no-url : with-url ratio after downsampling.
        #[arg(long, default_value_t = linkground::corpus::DEFAULT_NO_URL_RATIO)]
        ratio: f64,
    },
    /// Fetch, split and embed documents into a knowledge base directory.
    BuildKb {
        #[arg(long)]
        urls: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Serve documents from this fixture directory instead of the network.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long, default_value_t = linkground::kb::BuildOptions::default().max_sentences_per_doc)]
        max_sentences: usize,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Assemble training examples for one split part.
    Export {
        #[arg(long)]
        conversations: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        part: Part,
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        /// b, b+k, b+h or b+k+h.
        #[arg(long, default_value = "b+k+h")]
        mode: Mode,
        #[arg(long)]
        tokenizer_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value = "conversation")]
        scope: KnowledgeScope,
        #[arg(long)]
        out: PathBuf,
        /// Also write the gold final turns as reference utterances.
        #[arg(long)]
        references_out: Option<PathBuf>,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Train the n-gram baseline on exported examples.
    TrainLm {
        #[arg(long = "examples", required = true)]
        examples: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tokenizer_dir: Option<PathBuf>,
    },
    /// Sample one reply per exported example.
    Generate {
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long)]
        lm_endpoint: Option<String>,
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tokenizer_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.9)]
        p: f64,
        #[arg(long, default_value_t = 256)]
        max_new_tokens: usize,
        #[arg(long, default_value_t = 0)]
        min_new_tokens: usize,
    },
    /// Corpus BLEU of candidates against references, with optional perplexity.
    EvalBleu {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        references: PathBuf,
        #[arg(long, requires = "examples")]
        lm: Option<PathBuf>,
        #[arg(long)]
        examples: Option<PathBuf>,
        #[arg(long)]
        tokenizer_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perplexity of a model on exported examples.
    EvalPpl {
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long)]
        lm_endpoint: Option<String>,
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        tokenizer_dir: Option<PathBuf>,
    },
    /// Retrieve knowledge and history for a request (JSON file or stdin).
    Retrieve {
        #[command(flatten)]
        ctx: ContextArgs,
    },
    /// Retrieve and assemble a model input for a request (JSON file or stdin).
    Assemble {
        #[command(flatten)]
        ctx: ContextArgs,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Run the HTTP service.
    Serve {
        #[command(flatten)]
        svc: ServeArgs,
    },
    /// Interactive chat on stdin.
    Chat {
        #[command(flatten)]
        svc: ServeArgs,
        #[arg(long)]
        speaker_profile: Option<String>,
    },
    /// Tokenizer utilities.
    Tokenize {
        #[command(subcommand)]
        op: TokenizeOp,
    },
}

#[derive(Args)]
struct ContextArgs {
    /// Request JSON; stdin when omitted or `-`.
    #[arg(long)]
    request: Option<PathBuf>,
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    tokenizer_dir: Option<PathBuf>,
    #[arg(long)]
    blocklist_domains: Option<PathBuf>,
    #[arg(long)]
    blocklist_ext: Option<PathBuf>,
    #[command(flatten)]
    embed: EmbedArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "LINKGROUND_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "LINKGROUND_BIND")]
    bind: Option<std::net::SocketAddr>,
    #[arg(long, env = "LINKGROUND_KB")]
    kb: Option<PathBuf>,
    #[arg(long, env = "LINKGROUND_STORE")]
    store: Option<PathBuf>,
    #[arg(long, env = "LINKGROUND_TOKENIZER_DIR")]
    tokenizer_dir: Option<PathBuf>,
    #[arg(long, env = "LINKGROUND_LM")]
    lm: Option<PathBuf>,
    #[arg(long, env = "LINKGROUND_LM_ENDPOINT")]
    lm_endpoint: Option<String>,
    #[arg(long, env = "LINKGROUND_FIXTURES")]
    fixtures: Option<PathBuf>,
    #[arg(long, env = "LINKGROUND_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "LINKGROUND_SEED_MODE")]
    seed_mode: Option<SeedMode>,
    #[arg(long, env = "LINKGROUND_P")]
    p: Option<f64>,
    #[arg(long, env = "LINKGROUND_K")]
    k: Option<usize>,
}

impl ServeArgs {
    fn config(&self) -> Result<ServiceConfig> {
        let mut c = match &self.config {
            Some(p) => ServiceConfig::from_toml_file(p)?,
            None => ServiceConfig::default(),
        };
        if let Some(v) = self.bind {
            c.bind = v;
        }
        if let Some(v) = &self.kb {
            c.kb_path = v.clone();
        }
        if let Some(v) = &self.store {
            c.store_path = Some(v.clone());
        }
        if let Some(v) = &self.tokenizer_dir {
            c.tokenizer_dir = Some(v.clone());
        }
        if let Some(v) = &self.lm {
            c.lm.ngram_path = Some(v.clone());
            c.lm.remote_endpoint = None;
        }
        if let Some(v) = &self.lm_endpoint {
            c.lm.remote_endpoint = Some(v.clone());
            if self.lm.is_none() {
                c.lm.ngram_path = None;
            }
        }
        if let Some(v) = &self.fixtures {
            c.fixture_dir = Some(v.clone());
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.seed_mode {
            c.seed_mode = v;
        }
        if let Some(v) = self.p {
            c.p = v;
        }
        if let Some(v) = self.k {
            c.k = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum TokenizeOp {
    /// Text on stdin → JSON id array on stdout.
    Encode {
        #[arg(long)]
        tokenizer_dir: Option<PathBuf>,
    },
    /// JSON id array on stdin → text on stdout.
    Decode {
        #[arg(long)]
        tokenizer_dir: Option<PathBuf>,
    },
    /// Learn merges from a text file (one document per line).
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) if p != Path::new("-") => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn load_kb(path: Option<&Path>) -> Result<Option<ExtDocsKB>> {
    path.map(|p| ExtDocsKB::load(p).with_context(|| format!("knowledge base {}", p.display()))).transpose()
}

fn load_store(path: Option<&Path>) -> Result<Option<PastDialogueStore>> {
    path.map(|p| PastDialogueStore::load(p).with_context(|| format!("past dialogues {}", p.display()))).transpose()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { dumps, blocklist_domains, blocklist_ext, nsfw_subreddits, out, seed, ratio } => {
            let stats = commands::ingest(&commands::IngestArgs { dumps, blocklist_domains, blocklist_ext, nsfw_subreddits, out, seed, ratio })?;
            print_json(&stats)
        }
        Command::BuildKb { urls, out, fixtures, max_sentences, embed } => {
            let embedder = commands::make_embedder(&embed.embedder, embed.embed_dim, embed.embed_endpoint.as_deref())?;
            let urls = commands::read_url_list(&urls)?;
            let report = commands::build_kb_cmd(&urls, fixtures.as_deref(), embedder.as_ref(), &out, max_sentences)?;
            print_json(&report)
        }
        Command::Export { conversations, split, part, kb, store, mode, tokenizer_dir, k, scope, out, references_out, budget, embed } => {
            let tokenizer = commands::load_tokenizer(tokenizer_dir.as_deref())?;
            let embedder = commands::make_embedder(&embed.embedder, embed.embed_dim, embed.embed_endpoint.as_deref())?;
            let convs: Vec<Conversation> = commands::read_jsonl(&conversations)?;
            let split: Option<DatasetSplit> = split
                .map(|p| -> Result<_> { Ok(serde_json::from_str(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?) })
                .transpose()?;
            let convs = commands::select_part(convs, split.as_ref(), part)?;
            if mode.knowledge && kb.is_none() {
                bail!("mode {mode:?} needs --kb");
            }
            if mode.history && store.is_none() {
                bail!("mode {mode:?} needs --store");
            }
            let kb = if mode.knowledge { load_kb(kb.as_deref())? } else { None };
            let store = if mode.history { load_store(store.as_deref())? } else { None };
            let report = commands::export(commands::ExportArgs {
                conversations: convs,
                kb: kb.as_ref(),
                store: store.as_ref(),
                embedder: embedder.as_ref(),
                tokenizer: &tokenizer,
                budget: budget.budget()?,
                k,
                scope,
                out: &out,
                references_out: references_out.as_deref(),
            })?;
            print_json(&report)
        }
        Command::TrainLm { examples, out, tokenizer_dir } => {
            let tokenizer = commands::load_tokenizer(tokenizer_dir.as_deref())?;
            let mut all: Vec<TrainingExample> = Vec::new();
            for p in &examples {
                all.extend(commands::read_jsonl::<TrainingExample>(p)?);
            }
            let lm = commands::train_lm(&all, tokenizer.vocab_size())?;
            lm.save(&out)?;
            print_json(&serde_json::json!({ "examples": all.len(), "tokens": lm.token_count(), "vocab_size": tokenizer.vocab_size() }))
        }
        Command::Generate { lm, lm_endpoint, examples, out, tokenizer_dir, seed, p, max_new_tokens, min_new_tokens } => {
            let tokenizer = commands::load_tokenizer(tokenizer_dir.as_deref())?;
            let model = commands::load_lm(lm.as_deref(), lm_endpoint.as_deref(), &tokenizer)?;
            let examples: Vec<TrainingExample> = commands::read_jsonl(&examples)?;
            let cfg = GenerationConfig {
                p,
                max_new_tokens,
                min_new_tokens,
                stop_token: Some(tokenizer.specials().eot),
                rng_seed: seed,
                ..Default::default()
            };
            let outs = commands::generate_all(model.as_ref(), &examples, &tokenizer, &cfg)?;
            commands::write_jsonl(&out, &outs)?;
            print_json(&serde_json::json!({ "generated": outs.len() }))
        }
        Command::EvalBleu { candidates, references, lm, examples, tokenizer_dir, out } => {
            let cands: Vec<Utterance> = commands::read_jsonl(&candidates)?;
            let refs: Vec<Utterance> = commands::read_jsonl(&references)?;
            let ppl = match (&lm, &examples) {
                (Some(lm), Some(ex)) => {
                    let tokenizer = commands::load_tokenizer(tokenizer_dir.as_deref())?;
                    let model = commands::load_lm(Some(lm), None, &tokenizer)?;
                    Some(commands::eval_ppl(model.as_ref(), &commands::read_jsonl(ex)?)?.perplexity)
                }
                _ => None,
            };
            let report = commands::eval_bleu(&cands, &refs, ppl)?;
            if let Some(p) = out {
                commands::write_json(&p, &report)?;
            }
            print_json(&serde_json::json!({ "bleu": report.bleu, "perplexity": report.perplexity }))
        }
        Command::EvalPpl { lm, lm_endpoint, examples, tokenizer_dir } => {
            let tokenizer = commands::load_tokenizer(tokenizer_dir.as_deref())?;
            let model = commands::load_lm(lm.as_deref(), lm_endpoint.as_deref(), &tokenizer)?;
            print_json(&commands::eval_ppl(model.as_ref(), &commands::read_jsonl(&examples)?)?)
        }
        Command::Retrieve { ctx } => {
            let out = context(&ctx, &BudgetConfig::default())?;
            print_json(&serde_json::json!({ "knowledge": out.knowledge, "history": out.history }))
        }
        Command::Assemble { ctx, budget } => print_json(&context(&ctx, &budget.budget()?)?),
        Command::Serve { svc } => serve(svc.config()?),
        Command::Chat { svc, speaker_profile } => chat_repl(svc.config()?, speaker_profile),
        Command::Tokenize { op } => tokenize(op),
    }
}

fn context(ctx: &ContextArgs, budget: &BudgetConfig) -> Result<commands::AssembleOutput> {
    let req: RetrieveRequest = serde_json::from_str(&read_input(ctx.request.as_deref())?).context("parsing request")?;
    let tokenizer = commands::load_tokenizer(ctx.tokenizer_dir.as_deref())?;
    let embedder = commands::make_embedder(&ctx.embed.embedder, ctx.embed.embed_dim, ctx.embed.embed_endpoint.as_deref())?;
    let kb = load_kb(ctx.kb.as_deref())?;
    if let Some(kb) = &kb {
        kb.check_embedder(embedder.as_ref())?;
    }
    let store = load_store(ctx.store.as_deref())?;
    let blocklist = Blocklist::from_files(ctx.blocklist_domains.as_deref(), ctx.blocklist_ext.as_deref())?;
    commands::assemble_request(&req, kb.as_ref(), store.as_ref(), embedder.as_ref(), &tokenizer, budget, &blocklist)
}

fn serve(config: ServiceConfig) -> Result<()> {
    let bind = config.bind;
    // Blocking HTTP clients inside the engine must be created and dropped
    // outside the async runtime.
    let state = AppState::new(Arc::new(Engine::load(config)?));
    let app = router(state.clone());
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    drop(rt);
    drop(state);
    Ok(())
}

fn chat_repl(config: ServiceConfig, speaker_profile: Option<String>) -> Result<()> {
    let engine = Engine::load(config)?;
    let mut session = engine.new_session(uuid::Uuid::new_v4().to_string());
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    write!(out, "> ")?;
    out.flush()?;
    for line in stdin.lock().lines() {
        let line = line?;
        let msg = line.trim();
        if msg.is_empty() {
            write!(out, "> ")?;
            out.flush()?;
            continue;
        }
        match engine.chat(&mut session, msg, speaker_profile.as_deref()) {
            Ok(r) => writeln!(out, "{}", r.reply)?,
            Err(e) => eprintln!("error: {e}"),
        }
        write!(out, "> ")?;
        out.flush()?;
    }
    Ok(())
}

fn tokenize(op: TokenizeOp) -> Result<()> {
    match op {
        TokenizeOp::Encode { tokenizer_dir } => {
            let tok = commands::load_tokenizer(tokenizer_dir.as_deref())?;
            print_json(&tok.encode(&read_input(None)?))
        }
        TokenizeOp::Decode { tokenizer_dir } => {
            let tok = commands::load_tokenizer(tokenizer_dir.as_deref())?;
            let ids: Vec<TokenId> = serde_json::from_str(&read_input(None)?).context("expected a JSON array of token ids")?;
            print!("{}", tok.decode(&ids)?);
            Ok(())
        }
        TokenizeOp::Train { corpus, vocab_size, out } => {
            let text = std::fs::read_to_string(&corpus).with_context(|| format!("reading {}", corpus.display()))?;
            let docs: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            let tok = train_bpe(&docs, vocab_size)?;
            tok.save_dir(&out)?;
            print_json(&serde_json::json!({ "vocab_size": tok.vocab_size(), "merges": tok.merges().len() }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
