//! Model input assembly.
//!
//! Layout, left to right:
//!
//! ```text
//! __bk__ k_1 k_2 ... __ek__  __bpd__ h_1 __eot__ h_2 ... __epd__  x_1 __eot__ x_2 __eot__ ...
//! '------ K typed ------'    '---------- H typed -----------'    '-- S or L per turn author --'
//! ```
//!
//! Knowledge sentences are joined by single spaces inside one delimiter pair.
//! A segment with no content is omitted along with its delimiters. Knowledge
//! and history are capped at their maxima (delimiters included); whatever
//! they leave unused goes to the conversation, which keeps its most recent
//! tokens.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Conversation, PastDialogueStore, Turn};
use crate::embedder::Embedder;
use crate::retrieve::{
    retrieve_knowledge, retrieve_past_dialogues, DocSource, KnowledgeScope, RetrieveError, RetrievedHistory,
    RetrievedKnowledge, DEFAULT_K,
};
use crate::tokenizer::{TokenId, Tokenizer};

/// Segment label carried by every input position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TypeId {
    K,
    H,
    L,
    S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetConfig {
    pub total: usize,
    pub knowledge_max: usize,
    pub history_max: usize,
    pub conversation_min: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            total: 1024,
            knowledge_max: 250,
            history_max: 250,
            conversation_min: 524,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("budget {knowledge_max} + {history_max} + {conversation_min} exceeds total {total}")]
pub struct BudgetError {
    pub total: usize,
    pub knowledge_max: usize,
    pub history_max: usize,
    pub conversation_min: usize,
}

impl BudgetConfig {
    pub fn validate(&self) -> Result<(), BudgetError> {
        if self.knowledge_max + self.history_max + self.conversation_min > self.total {
            return Err(BudgetError {
                total: self.total,
                knowledge_max: self.knowledge_max,
                history_max: self.history_max,
                conversation_min: self.conversation_min,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInput {
    pub token_ids: Vec<TokenId>,
    pub type_ids: Vec<TypeId>,
    pub position_ids: Vec<usize>,
}

impl ModelInput {
    pub fn from_parts(token_ids: Vec<TokenId>, type_ids: Vec<TypeId>) -> Self {
        assert_eq!(token_ids.len(), type_ids.len(), "token and type ids must align");
        let position_ids = (0..token_ids.len()).collect();
        Self {
            token_ids,
            type_ids,
            position_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn push(&mut self, token: TokenId, ty: TypeId) {
        self.position_ids.push(self.token_ids.len());
        self.token_ids.push(token);
        self.type_ids.push(ty);
    }

    fn extend(&mut self, tokens: &[TokenId], ty: TypeId) {
        for &t in tokens {
            self.push(t, ty);
        }
    }

    pub fn count(&self, ty: TypeId) -> usize {
        self.type_ids.iter().filter(|&&t| t == ty).count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub knowledge_tokens: usize,
    pub history_tokens: usize,
    pub conversation_tokens: usize,
    /// Conversation tokens before truncation.
    pub conversation_available: usize,
    pub total_tokens: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub input: ModelInput,
    pub stats: SegmentStats,
}

fn knowledge_segment(knowledge: &RetrievedKnowledge, tok: &Tokenizer, max: usize) -> Vec<TokenId> {
    if knowledge.items.is_empty() || max < 3 {
        return Vec::new();
    }
    let sp = tok.specials();
    let inner = max - 2;
    // Drop the lowest-scoring sentences first (items are score-ordered).
    let mut body = None;
    for m in (1..=knowledge.items.len()).rev() {
        let joined = knowledge.items[..m].iter().map(|i| i.text.as_str()).collect::<Vec<_>>().join(" ");
        let ids = tok.encode(&joined);
        if ids.len() <= inner {
            body = Some(ids);
            break;
        }
        if m == 1 {
            body = Some(ids[..inner].to_vec());
        }
    }
    let body = body.unwrap_or_default();
    if body.is_empty() {
        return Vec::new();
    }
    let mut seg = Vec::with_capacity(body.len() + 2);
    seg.push(sp.bk);
    seg.extend(body);
    seg.push(sp.ek);
    seg
}

fn history_segment(history: &RetrievedHistory, tok: &Tokenizer, max: usize) -> Vec<TokenId> {
    let items: Vec<&[TokenId]> = history
        .items
        .iter()
        .map(|i| i.token_ids.as_slice())
        .filter(|t| !t.is_empty())
        .collect();
    if items.is_empty() || max < 3 {
        return Vec::new();
    }
    let sp = tok.specials();
    let mut n = items.len();
    let seg_len = |n: usize| items[..n].iter().map(|t| t.len()).sum::<usize>() + n - 1 + 2;
    while n > 1 && seg_len(n) > max {
        n -= 1;
    }
    let mut seg = vec![sp.bpd];
    for (i, t) in items[..n].iter().enumerate() {
        if i > 0 {
            seg.push(sp.eot);
        }
        seg.extend_from_slice(t);
    }
    seg.truncate(max - 1);
    seg.push(sp.epd);
    seg
}

/// Build the model input for `turns`, typing turns by `speaker` as S and all
/// others as L.
pub fn assemble(
    turns: &[Turn],
    speaker: &str,
    knowledge: &RetrievedKnowledge,
    history: &RetrievedHistory,
    tokenizer: &Tokenizer,
    budget: &BudgetConfig,
) -> Assembled {
    let k_seg = knowledge_segment(knowledge, tokenizer, budget.knowledge_max.min(budget.total));
    let h_seg = history_segment(history, tokenizer, budget.history_max.min(budget.total - k_seg.len()));
    let remaining = budget.total - k_seg.len() - h_seg.len();

    let eot = tokenizer.specials().eot;
    let mut conv: Vec<(TokenId, TypeId)> = Vec::new();
    for t in turns {
        let ty = if t.author == speaker { TypeId::S } else { TypeId::L };
        conv.extend(tokenizer.encode(&t.text).into_iter().map(|id| (id, ty)));
        conv.push((eot, ty));
    }
    let available = conv.len();
    let keep = &conv[available.saturating_sub(remaining)..];

    let mut input = ModelInput::default();
    input.extend(&k_seg, TypeId::K);
    input.extend(&h_seg, TypeId::H);
    for &(id, ty) in keep {
        input.push(id, ty);
    }
    let stats = SegmentStats {
        knowledge_tokens: k_seg.len(),
        history_tokens: h_seg.len(),
        conversation_tokens: keep.len(),
        conversation_available: available,
        total_tokens: input.len(),
    };
    Assembled { input, stats }
}

/// Every budget and layout rule an assembled input must satisfy. Returns a
/// description of each violation; empty means valid.
pub fn check_invariants(a: &Assembled, budget: &BudgetConfig, tokenizer: &Tokenizer) -> Vec<String> {
    let mut v = Vec::new();
    let inp = &a.input;
    let st = &a.stats;
    if inp.token_ids.len() != inp.type_ids.len() || inp.token_ids.len() != inp.position_ids.len() {
        v.push("token/type/position lengths differ".to_string());
    }
    if inp.position_ids.iter().enumerate().any(|(i, &p)| i != p) {
        v.push("position ids not 0..len".to_string());
    }
    if inp.len() > budget.total {
        v.push(format!("total {} > {}", inp.len(), budget.total));
    }
    let k = inp.count(TypeId::K);
    let h = inp.count(TypeId::H);
    let c = inp.count(TypeId::S) + inp.count(TypeId::L);
    if k > budget.knowledge_max {
        v.push(format!("knowledge {k} > {}", budget.knowledge_max));
    }
    if h > budget.history_max {
        v.push(format!("history {h} > {}", budget.history_max));
    }
    if c < budget.conversation_min.min(st.conversation_available) {
        v.push(format!("conversation {c} < min({}, {})", budget.conversation_min, st.conversation_available));
    }
    if (k, h, c, inp.len()) != (st.knowledge_tokens, st.history_tokens, st.conversation_tokens, st.total_tokens) {
        v.push("stats disagree with type ids".to_string());
    }
    // Segments must be contiguous and in K, H, conversation order.
    let rank = |t: &TypeId| match t {
        TypeId::K => 0,
        TypeId::H => 1,
        _ => 2,
    };
    if inp.type_ids.windows(2).any(|w| rank(&w[0]) > rank(&w[1])) {
        v.push("segments out of order".to_string());
    }
    let sp = tokenizer.specials();
    let span = |ty: TypeId| -> Vec<TokenId> {
        inp.token_ids.iter().zip(&inp.type_ids).filter(|(_, &t)| t == ty).map(|(&id, _)| id).collect()
    };
    let ks = span(TypeId::K);
    if !ks.is_empty() && (ks.len() < 3 || ks[0] != sp.bk || *ks.last().unwrap() != sp.ek) {
        v.push("knowledge span not delimited by __bk__/__ek__".to_string());
    }
    let hs = span(TypeId::H);
    if !hs.is_empty() && (hs.len() < 3 || hs[0] != sp.bpd || *hs.last().unwrap() != sp.epd) {
        v.push("history span not delimited by __bpd__/__epd__".to_string());
    }
    v
}

/// One supervised example: the context for the final turn and the final
/// turn's tokens as target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub token_ids: Vec<TokenId>,
    pub type_ids: Vec<TypeId>,
    pub target_ids: Vec<TokenId>,
    pub conversation_id: String,
}

impl TrainingExample {
    pub fn input(&self) -> ModelInput {
        ModelInput::from_parts(self.token_ids.clone(), self.type_ids.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportOptions {
    pub k: usize,
    pub scope: KnowledgeScope,
    /// Cap on target length, `__eot__` included.
    pub max_target_tokens: usize,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            scope: KnowledgeScope::Conversation,
            max_target_tokens: 256,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportReport {
    pub conversations: usize,
    pub exported: usize,
    pub skipped: Vec<String>,
}

/// Knowledge, history, or both may be switched off by passing `None`
/// (B, B+K, B+H and B+K+H inputs).
pub struct Sources<'a> {
    pub docs: Option<&'a dyn DocSource>,
    pub store: Option<&'a PastDialogueStore>,
    pub embedder: &'a dyn Embedder,
}

/// Retrieval plus assembly for generating the turn after `turns`.
#[allow(clippy::too_many_arguments)]
pub fn build_context(
    turns: &[Turn],
    speaker: &str,
    exclude_ids: &HashSet<String>,
    sources: &Sources<'_>,
    tokenizer: &Tokenizer,
    budget: &BudgetConfig,
    k: usize,
    scope: KnowledgeScope,
) -> Result<(Assembled, RetrievedKnowledge, RetrievedHistory), RetrieveError> {
    let knowledge = match sources.docs {
        Some(docs) => retrieve_knowledge(turns, docs, sources.embedder, k, scope)?,
        None => RetrievedKnowledge {
            query_text: turns.last().map(|t| t.text.clone()).unwrap_or_default(),
            items: Vec::new(),
        },
    };
    // The history segment adds one delimiter beyond the retriever's
    // per-item accounting.
    let history = match sources.store {
        Some(store) => retrieve_past_dialogues(speaker, store, tokenizer, budget.history_max.saturating_sub(1), exclude_ids),
        None => RetrievedHistory::default(),
    };
    let assembled = assemble(turns, speaker, &knowledge, &history, tokenizer, budget);
    Ok((assembled, knowledge, history))
}

pub fn export_example(
    conv: &Conversation,
    sources: &Sources<'_>,
    tokenizer: &Tokenizer,
    budget: &BudgetConfig,
    options: &ExportOptions,
) -> Result<Option<TrainingExample>, RetrieveError> {
    let Some((last, context)) = conv.turns.split_last() else {
        return Ok(None);
    };
    if context.is_empty() {
        return Ok(None);
    }
    let eot = tokenizer.specials().eot;
    let cap = options.max_target_tokens.max(1);
    let mut target = tokenizer.encode(&last.text);
    target.truncate(cap - 1);
    target.push(eot);

    let ctx_total = budget.total.saturating_sub(target.len());
    let k_max = budget.knowledge_max.min(ctx_total);
    let h_max = budget.history_max.min(ctx_total - k_max);
    let ctx_budget = BudgetConfig {
        total: ctx_total,
        knowledge_max: k_max,
        history_max: h_max,
        conversation_min: ctx_total - k_max - h_max,
    };
    let exclude: HashSet<String> = conv.comment_ids().map(str::to_string).collect();
    let (assembled, _, _) = build_context(context, &conv.speaker, &exclude, sources, tokenizer, &ctx_budget, options.k, options.scope)?;
    if assembled.input.is_empty() {
        return Ok(None);
    }
    Ok(Some(TrainingExample {
        token_ids: assembled.input.token_ids,
        type_ids: assembled.input.type_ids,
        target_ids: target,
        conversation_id: conv.conversation_id.clone(),
    }))
}

/// One example per conversation (final turn as target), sorted by
/// conversation id. Conversations with fewer than two turns or an empty
/// context are skipped and listed in the report.
pub fn export_training_examples(
    conversations: &[Conversation],
    sources: &Sources<'_>,
    tokenizer: &Tokenizer,
    budget: &BudgetConfig,
    options: &ExportOptions,
) -> Result<(Vec<TrainingExample>, ExportReport), RetrieveError> {
    let results = crate::par::map(conversations, |c| export_example(c, sources, tokenizer, budget, options));
    let mut report = ExportReport {
        conversations: conversations.len(),
        ..Default::default()
    };
    let mut out = Vec::new();
    for (conv, r) in conversations.iter().zip(results) {
        match r? {
            Some(ex) => out.push(ex),
            None => report.skipped.push(conv.conversation_id.clone()),
        }
    }
    out.sort_by(|a, b| a.conversation_id.cmp(&b.conversation_id));
    report.exported = out.len();
    Ok((out, report))
}
