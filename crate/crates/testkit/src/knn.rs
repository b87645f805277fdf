//! Exhaustive nearest-neighbour reference.

use std::collections::HashSet;

use rand::Rng;

/// Candidate document order: the last turn's urls, then earlier turns newest
/// first (or only the last turn), first occurrence wins.
pub fn candidate_order(turn_urls: &[Vec<String>], last_only: bool) -> Vec<String> {
    let turns: Vec<&Vec<String>> = if last_only { turn_urls.last().into_iter().collect() } else { turn_urls.iter().rev().collect() };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for urls in turns {
        for u in urls {
            if seen.insert(u.clone()) {
                out.push(u.clone());
            }
        }
    }
    out
}

/// Cosine of two unit vectors, accumulated in f64.
pub fn unit_cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.len() {
        s += a[i] as f64 * b[i] as f64;
    }
    s.clamp(-1.0, 1.0)
}

/// Score every candidate, stable-sort by score descending (so equal scores
/// keep candidate order) and take `k`.
pub fn exhaustive_top_k(query: &[f32], candidates: &[&[f32]], k: usize) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = candidates.iter().enumerate().map(|(i, c)| (i, unit_cosine(query, c))).collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    scored.truncate(k);
    scored
}

pub fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| (x / n) as f32).collect();
        }
    }
}
