use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Conversation;

/// Default no-URL : with-URL ratio after downsampling.
pub const DEFAULT_NO_URL_RATIO: f64 = 3.5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SampleError {
    #[error("target ratio must be positive, got {0}")]
    BadRatio(f64),
    #[error("need at least 10 conversations to split, got {0}")]
    TooFewToSplit(usize),
}

/// Drop conversations without URLs so that the expected no-URL : with-URL
/// ratio is `target_ratio`. With-URL conversations are always kept.
pub fn downsample_no_url(
    conversations: Vec<Conversation>,
    target_ratio: f64,
    seed: u64,
) -> Result<Vec<Conversation>, SampleError> {
    if target_ratio <= 0.0 || !target_ratio.is_finite() {
        return Err(SampleError::BadRatio(target_ratio));
    }
    let with_url = conversations.iter().filter(|c| c.has_urls()).count();
    let without = conversations.len() - with_url;
    if with_url == 0 {
        log::warn!("no conversations carry URLs; downsampling skipped");
        return Ok(conversations);
    }
    let keep_p = if without == 0 {
        1.0
    } else {
        (target_ratio * with_url as f64 / without as f64).min(1.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(conversations
        .into_iter()
        .filter(|c| {
            // Draw for every conversation so the stream position does not
            // depend on which ones carry URLs.
            let u: f64 = rng.random();
            c.has_urls() || u < keep_p
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

/// Seeded shuffle followed by a contiguous 80/10/10 partition.
pub fn split_dataset(conversations: &[Conversation], seed: u64) -> Result<DatasetSplit, SampleError> {
    let n = conversations.len();
    if n < 10 {
        return Err(SampleError::TooFewToSplit(n));
    }
    let mut ids: Vec<String> = conversations.iter().map(|c| c.conversation_id.clone()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * 0.8).round() as usize;
    let n_valid = (n as f64 * 0.1).round() as usize;
    let test = ids.split_off(n_train + n_valid);
    let valid = ids.split_off(n_train);
    Ok(DatasetSplit {
        seed,
        train: ids,
        valid,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Turn;

    fn conv(id: usize, with_url: bool) -> Conversation {
        Conversation {
            conversation_id: format!("c{id}"),
            turns: vec![Turn {
                comment_id: format!("c{id}"),
                author: "a".into(),
                text: "x y z".into(),
                karma: 5,
                urls: if with_url { vec!["https://e.example/".into()] } else { vec![] },
                turn_index: 0,
            }],
            speaker: "a".into(),
            source_month: String::new(),
        }
    }

    fn mixed(no: usize, yes: usize) -> Vec<Conversation> {
        (0..no).map(|i| conv(i, false)).chain((no..no + yes).map(|i| conv(i, true))).collect()
    }

    #[test]
    fn expectation_over_seeds() {
        // Each seed keeps Binomial(100, 0.5) no-URL conversations: sd 5, so
        // the mean over 1000 seeds has sd 5/sqrt(1000).
        let seeds = 1000;
        let mut total = 0usize;
        for seed in 0..seeds {
            let out = downsample_no_url(mixed(100, 50), 1.0, seed).unwrap();
            assert_eq!(out.iter().filter(|c| c.has_urls()).count(), 50);
            total += out.iter().filter(|c| !c.has_urls()).count();
        }
        let mean = total as f64 / seeds as f64;
        let sigma = 5.0 / (seeds as f64).sqrt();
        assert!((mean - 50.0).abs() <= 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn already_below_target_keeps_all() {
        assert_eq!(downsample_no_url(mixed(100, 50), 10.0, 7).unwrap().len(), 150);
    }

    #[test]
    fn no_url_free_input_unchanged() {
        assert_eq!(downsample_no_url(mixed(20, 0), 1.0, 1).unwrap().len(), 20);
        assert_eq!(downsample_no_url(mixed(1, 1), 0.0, 1), Err(SampleError::BadRatio(0.0)));
    }

    #[test]
    fn deterministic_under_seed() {
        let a = downsample_no_url(mixed(100, 10), 2.0, 42).unwrap();
        let b = downsample_no_url(mixed(100, 10), 2.0, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_sizes() {
        let s = split_dataset(&mixed(10, 0), 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (8, 1, 1));
        let s = split_dataset(&mixed(100, 0), 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (80, 10, 10));
        assert_eq!(split_dataset(&mixed(9, 0), 1), Err(SampleError::TooFewToSplit(9)));
    }

    #[test]
    fn split_deterministic_and_exhaustive() {
        let convs = mixed(37, 0);
        let a = split_dataset(&convs, 5).unwrap();
        assert_eq!(a, split_dataset(&convs, 5).unwrap());
        let mut all: Vec<_> = a.train.iter().chain(&a.valid).chain(&a.test).cloned().collect();
        all.sort();
        let mut expected: Vec<_> = convs.iter().map(|c| c.conversation_id.clone()).collect();
        expected.sort();
        assert_eq!(all, expected);
    }

    #[test]
    fn split_proportions_within_one() {
        for n in 10..300 {
            let s = split_dataset(&mixed(n, 0), 0).unwrap();
            for (got, frac) in [(s.train.len(), 0.8), (s.valid.len(), 0.1), (s.test.len(), 0.1)] {
                assert!((got as f64 - frac * n as f64).abs() <= 1.0, "n={n}");
            }
        }
    }
}
