use rand::{Rng, SeedableRng};

use super::LmError;
use crate::tokenizer::TokenId;

/// ChaCha8 seeded with `seed_from_u64`.
pub type SamplingRng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> SamplingRng {
    SamplingRng::seed_from_u64(seed)
}

/// Rounding slack when comparing cumulative mass against `p`.
const MASS_EPS: f64 = 1e-12;

/// Minimal highest-probability prefix with cumulative mass ≥ `p`, ties by
/// ascending id. Zero-probability tokens never enter the nucleus.
pub fn nucleus(probs: &[f64], p: f64) -> Result<Vec<(TokenId, f64)>, LmError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(LmError::InvalidP(p));
    }
    if let Some((i, &x)) = probs.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
        return Err(LmError::InvalidDistribution(format!("probability {x} at id {i}")));
    }
    let mut order: Vec<(TokenId, f64)> =
        probs.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(i, &x)| (i as TokenId, x)).collect();
    if order.is_empty() {
        return Err(LmError::InvalidDistribution("no positive mass".into()));
    }
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let total: f64 = order.iter().map(|x| x.1).sum();
    let target = p * total - MASS_EPS;
    let mut cum = 0.0;
    for (n, &(_, x)) in order.iter().enumerate() {
        cum += x;
        if cum >= target {
            order.truncate(n + 1);
            break;
        }
    }
    Ok(order)
}

/// Draw one token from the renormalized nucleus.
pub fn nucleus_sample<R: Rng + ?Sized>(probs: &[f64], p: f64, rng: &mut R) -> Result<TokenId, LmError> {
    let nuc = nucleus(probs, p)?;
    let mass: f64 = nuc.iter().map(|x| x.1).sum();
    let u = rng.random::<f64>() * mass;
    let mut cum = 0.0;
    for &(id, x) in &nuc {
        cum += x;
        if cum > u {
            return Ok(id);
        }
    }
    Ok(nuc[nuc.len() - 1].0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nucleus_cases() {
        let ids = |v: Vec<(TokenId, f64)>| v.into_iter().map(|x| x.0).collect::<Vec<_>>();
        assert_eq!(ids(nucleus(&[0.5, 0.3, 0.15, 0.05], 0.9).unwrap()), [0, 1, 2]);
        assert_eq!(ids(nucleus(&[0.5, 0.3, 0.15, 0.05], 1.0).unwrap()), [0, 1, 2, 3]);
        assert_eq!(ids(nucleus(&[0.25, 0.25, 0.25, 0.25], 0.5).unwrap()), [0, 1]);
        assert_eq!(ids(nucleus(&[0.1, 0.2, 0.7], 0.5).unwrap()), [2]);
    }

    #[test]
    fn rejects_bad_p() {
        assert!(matches!(nucleus(&[1.0], 0.0), Err(LmError::InvalidP(_))));
        assert!(matches!(nucleus(&[1.0], 1.5), Err(LmError::InvalidP(_))));
        assert!(nucleus(&[1.0], f64::NAN).is_err());
        assert!(nucleus(&[0.0, 0.0], 0.9).is_err());
    }

    #[test]
    fn one_hot_always_wins() {
        let mut rng = seeded(7);
        for _ in 0..200 {
            assert_eq!(nucleus_sample(&[0.0, 0.0, 1.0, 0.0], 0.9, &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let probs = [0.4, 0.3, 0.2, 0.1];
        let draw = |s| {
            let mut r = seeded(s);
            (0..50).map(|_| nucleus_sample(&probs, 0.95, &mut r).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }
}
