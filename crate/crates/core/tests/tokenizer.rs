use linkground::tokenizer::{train_bpe, Tokenizer, SPECIAL_TOKENS};
use linkground_testkit::fuzz::random_text;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn trained() -> Tokenizer {
    let corpus = [
        "the quick brown fox jumps over the lazy dog",
        "naïve café au lait, s'il vous plaît",
        "中文 日本語 한국어 🙂🙂🙂",
        "hello world hello world hello there",
        "__eot__ __bk__ knowledge __ek__",
    ];
    train_bpe(&corpus, 256 + 120).unwrap()
}

#[test]
fn fuzzed_round_trip() {
    let toks = [Tokenizer::byte_level(), trained()];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..10_000 {
        let s = random_text(&mut rng, 24);
        for tok in &toks {
            assert_eq!(tok.decode(&tok.encode(&s)).unwrap(), s, "case {i}: {s:?}");
        }
    }
}

#[test]
fn specials_never_come_out_of_merges() {
    let tok = trained();
    for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
        assert_eq!(tok.encode(s), [(tok.base_size() + i) as u32]);
    }
    let special_ids: Vec<u32> = (0..5).map(|i| (tok.base_size() + i) as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..2000 {
        let s = random_text(&mut rng, 16);
        let n_specials: usize = SPECIAL_TOKENS.iter().map(|sp| s.matches(sp).count()).sum();
        let ids = tok.encode(&s);
        let emitted = ids.iter().filter(|i| special_ids.contains(i)).count();
        // Overlapping occurrences like "__bk__eot__" resolve leftmost-first, so
        // only an upper bound holds by substring counting.
        assert!(emitted <= n_specials, "{s:?}");
        assert_eq!(tok.decode(&ids).unwrap(), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn round_trip_any_string(s in any::<String>()) {
        let tok = trained();
        prop_assert_eq!(tok.decode(&tok.encode(&s)).unwrap(), s);
    }

    #[test]
    fn concatenation_around_a_special(a in "[^_]{0,24}", b in "[^_]{0,24}", which in 0usize..5) {
        let tok = trained();
        let sp = SPECIAL_TOKENS[which];
        let mut expect = tok.encode(&a);
        expect.push((tok.base_size() + which) as u32);
        expect.extend(tok.encode(&b));
        prop_assert_eq!(tok.encode(&format!("{a}{sp}{b}")), expect);
    }
}
