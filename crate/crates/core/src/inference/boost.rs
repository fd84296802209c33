use crate::error::{invalid, Error, Result};

/// Batches needed for a majority vote of tests with total error at most 1/3
/// to reach total error `alpha`: `⌈18 ln(2/α)⌉`.
pub fn required_batches(alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok((18.0 * (2.0 / alpha).ln()).ceil() as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoostedDecision {
    pub reject: bool,
    pub votes: usize,
    pub batches: usize,
}

/// Majority vote of `base` over disjoint batches; rejects iff at least half
/// of the batches reject. Every supplied batch votes, and there must be at
/// least [`required_batches`] of them.
pub fn boosted_test<B, F>(alpha: f64, batches: &[B], base: F) -> Result<BoostedDecision>
where
    F: Fn(&B) -> Result<bool>,
{
    let needed = required_batches(alpha)?;
    if batches.len() < needed {
        return Err(Error::InsufficientData {
            requested: needed,
            available: batches.len(),
        });
    }
    let mut votes = 0;
    for b in batches {
        votes += usize::from(base(b)?);
    }
    Ok(BoostedDecision {
        reject: 2 * votes >= batches.len(),
        votes,
        batches: batches.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;
    use rand::Rng;

    #[test]
    fn batch_count() {
        assert_eq!(required_batches(0.05).unwrap(), 67);
        assert!(required_batches(0.0).is_err());
        assert!(required_batches(1.0).is_err());
    }

    #[test]
    fn always_correct_base_stays_correct() {
        let batches = vec![(); 67];
        assert!(boosted_test(0.05, &batches, |_| Ok(true)).unwrap().reject);
        assert!(!boosted_test(0.05, &batches, |_| Ok(false)).unwrap().reject);
        assert!(boosted_test(0.05, &batches[..66], |_| Ok(true)).is_err());
    }

    #[test]
    fn noisy_base_is_amplified() {
        let base = RandomSource::new(77);
        let trials = 2000;
        let mut wrong = 0;
        for t in 0..trials {
            let mut rng = base.fork(&[t]).rng();
            let votes: Vec<bool> = (0..67).map(|_| rng.random::<f64>() >= 1.0 / 3.0).collect();
            let d = boosted_test(0.05, &votes, |v| Ok(*v)).unwrap();
            wrong += usize::from(!d.reject);
        }
        assert!((wrong as f64) / (trials as f64) <= 0.05);
    }
}
