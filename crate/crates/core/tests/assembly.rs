use linkground::assemble::{assemble, check_invariants, BudgetConfig, TypeId};
use linkground::corpus::Turn;
use linkground::retrieve::{HistoryItem, KnowledgeItem, RetrievedHistory, RetrievedKnowledge};
use linkground::tokenizer::Tokenizer;
use linkground_testkit::budget::{violations, Delimiters, Layout};
use linkground_testkit::fuzz::random_text;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn label(t: &TypeId) -> &'static str {
    match t {
        TypeId::K => "K",
        TypeId::H => "H",
        TypeId::S => "S",
        TypeId::L => "L",
    }
}

fn words<R: Rng>(rng: &mut R, max: usize) -> String {
    let n = rng.random_range(0..=max);
    (0..n).map(|i| format!("w{}", i % 17)).collect::<Vec<_>>().join(" ")
}

fn random_budget<R: Rng>(rng: &mut R) -> BudgetConfig {
    if rng.random_bool(0.7) {
        return BudgetConfig::default();
    }
    let total = rng.random_range(8..=1024);
    let k = rng.random_range(0..=total / 2);
    let h = rng.random_range(0..=(total - k) / 2);
    BudgetConfig {
        total,
        knowledge_max: k,
        history_max: h,
        conversation_min: total - k - h,
    }
}

#[test]
fn fuzzed_calls_never_violate_the_budget() {
    let tok = Tokenizer::byte_level();
    let sp = tok.specials();
    let delims = Delimiters { bk: sp.bk, ek: sp.ek, bpd: sp.bpd, epd: sp.epd };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for call in 0..1000 {
        let budget = random_budget(&mut rng);
        let n_turns = rng.random_range(0..=16);
        let turns: Vec<Turn> = (0..n_turns)
            .map(|i| Turn {
                comment_id: String::new(),
                author: if rng.random_bool(0.5) { "sp".into() } else { format!("u{i}") },
                text: if rng.random_bool(0.2) { random_text(&mut rng, 30) } else { words(&mut rng, 120) },
                karma: 0,
                urls: vec![],
                turn_index: i,
            })
            .collect();
        let knowledge = RetrievedKnowledge {
            query_text: String::new(),
            items: (0..rng.random_range(0..=10))
                .map(|i| KnowledgeItem { text: words(&mut rng, 90), doc_url: "u".into(), sentence_index: i, score: 1.0 / (1 + i) as f64 })
                .collect(),
        };
        let history = RetrievedHistory {
            items: (0..rng.random_range(0..=10))
                .map(|_| {
                    let text = words(&mut rng, 80);
                    HistoryItem { token_ids: tok.encode(&text), comment_id: String::new(), text, karma: 1, truncated: false }
                })
                .collect(),
        };
        let a = assemble(&turns, "sp", &knowledge, &history, &tok, &budget);
        let labels: Vec<&str> = a.input.type_ids.iter().map(label).collect();
        let layout = Layout {
            total: budget.total,
            knowledge_max: budget.knowledge_max,
            history_max: budget.history_max,
            conversation_min: budget.conversation_min,
        };
        let available: usize = turns.iter().map(|t| tok.encode(&t.text).len() + 1).sum();
        assert_eq!(a.stats.conversation_available, available);
        let v = violations(&a.input.token_ids, &labels, available, &layout, &delims);
        assert!(v.is_empty(), "call {call}: {v:?}");
        assert!(check_invariants(&a, &budget, &tok).is_empty(), "call {call}");
        // Conversation keeps exactly min(available, what is left).
        let left = budget.total - a.stats.knowledge_tokens - a.stats.history_tokens;
        assert_eq!(a.stats.conversation_tokens, available.min(left), "call {call}");
        // The kept conversation is a suffix of the full stream.
        let mut stream = Vec::new();
        for t in &turns {
            stream.extend(tok.encode(&t.text));
            stream.push(sp.eot);
        }
        let kept = &a.input.token_ids[a.input.len() - a.stats.conversation_tokens..];
        assert!(stream.ends_with(kept), "call {call}");
    }
}
