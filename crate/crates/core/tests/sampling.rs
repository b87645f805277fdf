use linkground::assemble::{ModelInput, TypeId};
use linkground::lm::{nucleus, nucleus_sample, train_ngram, LanguageModel, SamplingRng};
use linkground_testkit::stats::within_sigmas;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

#[test]
fn fixed_distribution_frequencies() {
    let probs = [0.5, 0.3, 0.15, 0.05];
    let mut rng = SamplingRng::seed_from_u64(2024);
    let n = 100_000u64;
    let mut counts = [0u64; 4];
    for _ in 0..n {
        counts[nucleus_sample(&probs, 0.9, &mut rng).unwrap() as usize] += 1;
    }
    assert_eq!(counts[3], 0);
    for (i, &p) in [0.5, 0.3, 0.15].iter().enumerate() {
        assert!(within_sigmas(counts[i], n, p / 0.95, 3.0), "token {i}: {} of {n}", counts[i]);
    }
}

#[test]
fn fuzzed_draws_stay_in_the_nucleus() {
    let mut gen = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut rng = SamplingRng::seed_from_u64(3);
    let mut draws = 0;
    while draws < 100_000 {
        let v = gen.random_range(1..40);
        let mut probs: Vec<f64> = (0..v).map(|_| if gen.random_bool(0.2) { 0.0 } else { gen.random::<f64>() }).collect();
        if probs.iter().all(|&x| x == 0.0) {
            probs[0] = 1.0;
        }
        let z: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|x| *x /= z);
        let p = gen.random_range(0.01..=1.0);
        let nuc: Vec<u32> = nucleus(&probs, p).unwrap().into_iter().map(|x| x.0).collect();
        for _ in 0..100 {
            assert!(nuc.contains(&nucleus_sample(&probs, p, &mut rng).unwrap()));
            draws += 1;
        }
    }
}

proptest! {
    #[test]
    fn nucleus_is_minimal(raw in prop::collection::vec(0.0f64..1.0, 1..30), p in 0.01f64..=1.0) {
        prop_assume!(raw.iter().any(|&x| x > 0.0));
        let z: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|x| x / z).collect();
        let nuc = nucleus(&probs, p).unwrap();
        let mass: f64 = nuc.iter().map(|x| x.1).sum();
        prop_assert!(mass >= p - 1e-9);
        let without_last = mass - nuc.last().unwrap().1;
        prop_assert!(nuc.len() == 1 || without_last < p);
        // Nucleus holds the highest probabilities.
        let min_in = nuc.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        for (i, &x) in probs.iter().enumerate() {
            if !nuc.iter().any(|n| n.0 as usize == i) {
                prop_assert!(x <= min_in);
            }
        }
    }

    #[test]
    fn ngram_distribution_sums_to_one(
        seqs in prop::collection::vec(prop::collection::vec(0u32..50, 1..40), 1..8),
        ctx in prop::collection::vec(0u32..50, 0..6),
    ) {
        let lm = train_ngram(&seqs, 50).unwrap();
        let input = ModelInput::from_parts(ctx.clone(), vec![TypeId::L; ctx.len()]);
        let d = lm.next_distribution(&input).unwrap();
        prop_assert_eq!(d.len(), 50);
        prop_assert!(d.iter().all(|&x| x > 0.0));
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}
