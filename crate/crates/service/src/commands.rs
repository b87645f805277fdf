//! Batch subcommands: file in, file out.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use linkground::assemble::{export_training_examples, BudgetConfig, ExportOptions, Sources, TrainingExample};
use linkground::corpus::{
    downsample_no_url, month_label, parse_dump, process_month, split_dataset, Blocklist, Conversation, DatasetSplit, FilterConfig, MonthStats,
    PastDialogueStore,
};
use linkground::embedder::{Embedder, HashEmbedder, RemoteEmbedder};
use linkground::http::HttpConfig;
use linkground::kb::{build_kb, canonicalize_url, BuildOptions, ExtDocsKB, Fetcher, FixtureFetcher, LiveFetcher};
use linkground::lm::{generate, perplexity, train_ngram, GenerationConfig, LanguageModel, NGramLM, RemoteLM};
use linkground::metrics::{evaluate_split, Utterance};
use linkground::retrieve::{DocSource, KnowledgeScope};
use linkground::tokenizer::{TokenId, Tokenizer};
use serde::{de::DeserializeOwned, Serialize};

use crate::engine::reply_seed;

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn load_tokenizer(dir: Option<&Path>) -> Result<Tokenizer> {
    Ok(match dir {
        Some(d) => Tokenizer::load_dir(d).with_context(|| format!("tokenizer {}", d.display()))?,
        None => Tokenizer::byte_level(),
    })
}

pub fn make_embedder(kind: &str, dimension: usize, endpoint: Option<&str>) -> Result<Box<dyn Embedder>> {
    Ok(match (kind, endpoint) {
        ("hash", _) => Box::new(HashEmbedder::new(dimension)),
        ("remote", Some(url)) => Box::new(RemoteEmbedder::new(url, dimension, HttpConfig::default())?),
        ("remote", None) => bail!("--embedder remote needs --embed-endpoint"),
        (other, _) => bail!("unknown embedder {other:?} (hash | remote)"),
    })
}

pub struct IngestArgs {
    pub dumps: Vec<PathBuf>,
    pub blocklist_domains: Option<PathBuf>,
    pub blocklist_ext: Option<PathBuf>,
    pub nsfw_subreddits: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub ratio: f64,
}

#[derive(Serialize)]
pub struct IngestStats {
    pub months: Vec<MonthStats>,
    pub extracted: usize,
    pub kept: usize,
    pub with_urls: usize,
    pub dropped_no_url: usize,
    pub authors: usize,
    pub past_comments: usize,
    pub urls: usize,
    pub seed: u64,
    pub ratio: f64,
    pub split: [usize; 3],
}

/// Dumps → conversations.jsonl, split.json, past_dialogues.json, urls.txt and
/// stats.json under `out`. Months are processed in parallel.
pub fn ingest(args: &IngestArgs) -> Result<IngestStats> {
    if args.dumps.is_empty() {
        bail!("at least one --dump is required");
    }
    let blocklist = Blocklist::from_files(args.blocklist_domains.as_deref(), args.blocklist_ext.as_deref()).context("reading block lists")?;
    let mut config = FilterConfig::default();
    if let Some(p) = &args.nsfw_subreddits {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        config.nsfw_subreddits = linkground::corpus::parse_list(&text).map(str::to_lowercase).collect();
    }
    let months = linkground::par::map(&args.dumps, |path| -> Result<_> {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let (comments, malformed) = parse_dump(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
        Ok(process_month(comments, malformed, &config, &blocklist, &month_label(path)))
    });
    let mut conversations = Vec::new();
    let mut store = PastDialogueStore::default();
    let mut month_stats = Vec::new();
    for m in months {
        let m = m?;
        conversations.extend(m.conversations);
        store.merge(m.store);
        month_stats.push(m.stats);
    }
    let extracted = conversations.len();
    let kept = downsample_no_url(conversations, args.ratio, args.seed)?;
    let split = split_dataset(&kept, args.seed)?;

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_jsonl(&args.out.join("conversations.jsonl"), &kept)?;
    write_json(&args.out.join("split.json"), &split)?;
    store.save(&args.out.join("past_dialogues.json"))?;
    let mut seen = HashSet::new();
    let urls: Vec<String> = kept
        .iter()
        .flat_map(|c| c.turns.iter().flat_map(|t| t.urls.iter()))
        .filter_map(|u| canonicalize_url(u))
        .filter(|u| seen.insert(u.clone()))
        .collect();
    std::fs::write(args.out.join("urls.txt"), urls.iter().map(|u| format!("{u}\n")).collect::<String>())?;
    let with_urls = kept.iter().filter(|c| c.has_urls()).count();
    let stats = IngestStats {
        months: month_stats,
        extracted,
        kept: kept.len(),
        with_urls,
        dropped_no_url: extracted - kept.len(),
        authors: store.author_count(),
        past_comments: store.comment_count(),
        urls: urls.len(),
        seed: args.seed,
        ratio: args.ratio,
        split: [split.train.len(), split.valid.len(), split.test.len()],
    };
    write_json(&args.out.join("stats.json"), &stats)?;
    Ok(stats)
}

pub fn read_url_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(linkground::corpus::parse_list(&text).map(str::to_string).collect())
}

pub fn build_kb_cmd(urls: &[String], fixtures: Option<&Path>, embedder: &dyn Embedder, out: &Path, max_sentences: usize) -> Result<linkground::kb::BuildReport> {
    let fetcher: Box<dyn Fetcher> = match fixtures {
        Some(d) => Box::new(FixtureFetcher::new(d)),
        None => Box::new(LiveFetcher::new(HttpConfig::default())?),
    };
    let (kb, report) = build_kb(urls, fetcher.as_ref(), embedder, &BuildOptions { max_sentences_per_doc: max_sentences });
    kb.save(out)?;
    write_json(&out.join("build_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Train,
    Valid,
    Test,
    All,
}

impl std::str::FromStr for Part {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Self::Train),
            "valid" => Ok(Self::Valid),
            "test" => Ok(Self::Test),
            "all" => Ok(Self::All),
            other => Err(format!("unknown split part {other:?} (train | valid | test | all)")),
        }
    }
}

/// Input ablations: base conversation, plus knowledge, plus history, or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub knowledge: bool,
    pub history: bool,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "b" => Ok(Self { knowledge: false, history: false }),
            "b+k" => Ok(Self { knowledge: true, history: false }),
            "b+h" => Ok(Self { knowledge: false, history: true }),
            "b+k+h" => Ok(Self { knowledge: true, history: true }),
            other => Err(format!("unknown mode {other:?} (b | b+k | b+h | b+k+h)")),
        }
    }
}

pub fn select_part(conversations: Vec<Conversation>, split: Option<&DatasetSplit>, part: Part) -> Result<Vec<Conversation>> {
    let ids: Option<BTreeSet<&String>> = match (part, split) {
        (Part::All, _) => None,
        (_, None) => bail!("--split is required unless --part all"),
        (Part::Train, Some(s)) => Some(s.train.iter().collect()),
        (Part::Valid, Some(s)) => Some(s.valid.iter().collect()),
        (Part::Test, Some(s)) => Some(s.test.iter().collect()),
    };
    Ok(match ids {
        None => conversations,
        Some(ids) => conversations.into_iter().filter(|c| ids.contains(&c.conversation_id)).collect(),
    })
}

pub struct ExportArgs<'a> {
    pub conversations: Vec<Conversation>,
    pub kb: Option<&'a ExtDocsKB>,
    pub store: Option<&'a PastDialogueStore>,
    pub embedder: &'a dyn Embedder,
    pub tokenizer: &'a Tokenizer,
    pub budget: BudgetConfig,
    pub k: usize,
    pub scope: KnowledgeScope,
    pub out: &'a Path,
    pub references_out: Option<&'a Path>,
}

pub fn export(args: ExportArgs<'_>) -> Result<linkground::assemble::ExportReport> {
    if let Some(kb) = args.kb {
        kb.check_embedder(args.embedder)?;
    }
    let sources = Sources {
        docs: args.kb.map(|k| k as &dyn DocSource),
        store: args.store,
        embedder: args.embedder,
    };
    let options = ExportOptions {
        k: args.k,
        scope: args.scope,
        ..Default::default()
    };
    let (examples, report) = export_training_examples(&args.conversations, &sources, args.tokenizer, &args.budget, &options)?;
    write_jsonl(args.out, &examples)?;
    if let Some(path) = args.references_out {
        let exported: HashSet<&str> = examples.iter().map(|e| e.conversation_id.as_str()).collect();
        let mut refs: Vec<Utterance> = args
            .conversations
            .iter()
            .filter(|c| exported.contains(c.conversation_id.as_str()))
            .map(|c| Utterance {
                conversation_id: c.conversation_id.clone(),
                text: c.turns.last().map(|t| t.text.clone()).unwrap_or_default(),
            })
            .collect();
        refs.sort_by(|a, b| a.conversation_id.cmp(&b.conversation_id));
        write_jsonl(path, &refs)?;
    }
    Ok(report)
}

/// Each example contributes its context followed by its target.
pub fn train_lm(examples: &[TrainingExample], vocab_size: usize) -> Result<NGramLM> {
    let seqs: Vec<Vec<TokenId>> = examples.iter().map(|e| e.token_ids.iter().chain(&e.target_ids).copied().collect()).collect();
    Ok(train_ngram(&seqs, vocab_size)?)
}

pub fn load_lm(ngram: Option<&Path>, endpoint: Option<&str>, tokenizer: &Tokenizer) -> Result<Box<dyn LanguageModel>> {
    match (ngram, endpoint) {
        (Some(p), None) => {
            let lm = NGramLM::load(p).with_context(|| format!("loading {}", p.display()))?;
            if lm.vocab_size() != tokenizer.vocab_size() {
                bail!("model vocabulary {} does not match tokenizer vocabulary {}", lm.vocab_size(), tokenizer.vocab_size());
            }
            Ok(Box::new(lm))
        }
        (None, Some(url)) => Ok(Box::new(RemoteLM::new(url, tokenizer.vocab_size(), HttpConfig::default())?)),
        _ => bail!("give exactly one of --lm or --lm-endpoint"),
    }
}

/// One sampled reply per example; example `i` uses `reply_seed(seed, i)`.
pub fn generate_all(lm: &dyn LanguageModel, examples: &[TrainingExample], tokenizer: &Tokenizer, base: &GenerationConfig) -> Result<Vec<Utterance>> {
    let outs = linkground::par::map_indexed(examples, |i, ex| {
        let cfg = GenerationConfig {
            rng_seed: reply_seed(base.rng_seed, i as u64),
            ..base.clone()
        };
        generate(lm, &ex.input(), &cfg, tokenizer).map(|o| Utterance {
            conversation_id: ex.conversation_id.clone(),
            text: o.text,
        })
    });
    outs.into_iter().map(|r| r.map_err(Into::into)).collect()
}

#[derive(Serialize)]
pub struct PplReport {
    pub perplexity: f64,
    pub examples: usize,
    pub target_tokens: usize,
}

pub fn eval_ppl(lm: &dyn LanguageModel, examples: &[TrainingExample]) -> Result<PplReport> {
    Ok(PplReport {
        perplexity: perplexity(lm, examples)?,
        examples: examples.len(),
        target_tokens: examples.iter().map(|e| e.target_ids.len()).sum(),
    })
}

pub fn eval_bleu(candidates: &[Utterance], references: &[Utterance], ppl: Option<f64>) -> Result<linkground::metrics::EvalReport> {
    Ok(evaluate_split(candidates, references, ppl)?)
}

#[derive(Serialize)]
pub struct AssembleOutput {
    pub input: linkground::assemble::ModelInput,
    pub stats: linkground::assemble::SegmentStats,
    pub knowledge: linkground::retrieve::RetrievedKnowledge,
    pub history: linkground::retrieve::RetrievedHistory,
    pub violations: Vec<String>,
}

/// Retrieval plus assembly for one request, outside the service.
pub fn assemble_request(
    req: &crate::engine::RetrieveRequest,
    kb: Option<&ExtDocsKB>,
    store: Option<&PastDialogueStore>,
    embedder: &dyn Embedder,
    tokenizer: &Tokenizer,
    budget: &BudgetConfig,
    blocklist: &Blocklist,
) -> Result<AssembleOutput> {
    let turns = req.to_turns(blocklist);
    let speaker = req.speaker.clone().or_else(|| turns.last().map(|t| t.author.clone())).unwrap_or_default();
    let sources = Sources {
        docs: kb.map(|k| k as &dyn DocSource),
        store,
        embedder,
    };
    let (assembled, knowledge, history) =
        linkground::assemble::build_context(&turns, &speaker, &HashSet::new(), &sources, tokenizer, budget, req.k, req.scope.unwrap_or_default())?;
    Ok(AssembleOutput {
        violations: linkground::assemble::check_invariants(&assembled, budget, tokenizer),
        input: assembled.input,
        stats: assembled.stats,
        knowledge,
        history,
    })
}
