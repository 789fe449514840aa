use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{require_clean, NoiseProtocol, NoiseSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// CIFAR-10 flips: truck -> automobile, bird -> airplane, deer -> horse, cat <-> dog.
pub const CIFAR10_PAIRS: [(usize, usize); 5] = [(9, 1), (2, 0), (4, 7), (3, 5), (5, 3)];

pub(crate) fn validate(pairs: &[(usize, usize)], rate: f64, classes: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::out_of_range("flip rate", rate, 0.0, 1.0));
    }
    let mut seen = vec![false; classes];
    for &(s, t) in pairs {
        for c in [s, t] {
            if c >= classes {
                return Err(Error::ClassOutOfRange { index: c, classes });
            }
        }
        if s == t {
            return Err(Error::InvalidConfig(format!(
                "flip pair ({s}, {t}) maps a class to itself"
            )));
        }
        if std::mem::replace(&mut seen[s], true) {
            return Err(Error::InvalidConfig(format!(
                "duplicate flip source class {s}"
            )));
        }
    }
    Ok(())
}

/// Each instance whose clean class is a flip source is relabeled to the target
/// independently with probability `rate`; everything else keeps its clean label.
pub fn corrupt_pairflip<T: Scalar>(
    clean: &Dataset<T>,
    pairs: &[(usize, usize)],
    rate: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    let truth = require_clean(clean)?;
    validate(pairs, rate, clean.classes())?;
    let mut target = vec![None; clean.classes()];
    for &(s, t) in pairs {
        target[s] = Some(t);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = truth
        .iter()
        .map(|&y| match target[y] {
            Some(t) if rng.random::<f64>() < rate => t,
            _ => y,
        })
        .collect();
    let mut out = clean.clone().with_noisy_labels(noisy)?;
    out.noise_spec = Some(NoiseSpec {
        protocol: NoiseProtocol::PairFlip {
            pairs: pairs.to_vec(),
            rate,
        },
        seed,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise_synth::{noise_report, synth_gaussian_dataset};

    fn base() -> Dataset<f64> {
        synth_gaussian_dataset(4, 50, 2, 3.0, 2).unwrap()
    }

    #[test]
    fn zero_and_full_rates() {
        let d = base();
        let z = corrupt_pairflip(&d, &[(0, 1), (2, 3)], 0.0, 1).unwrap();
        assert_eq!(z.noisy_labels(), d.clean_labels().unwrap());
        let f = corrupt_pairflip(&d, &[(0, 1)], 1.0, 1).unwrap();
        for (&y, &n) in d.clean_labels().unwrap().iter().zip(f.noisy_labels()) {
            assert_eq!(n, if y == 0 { 1 } else { y });
        }
        assert_eq!(f.features(), d.features());
        assert_eq!(f.clean_labels(), d.clean_labels());
    }

    #[test]
    fn rejects_bad_pairs() {
        let d = base();
        assert!(corrupt_pairflip(&d, &[(0, 1), (0, 2)], 0.3, 1).is_err());
        assert!(corrupt_pairflip(&d, &[(0, 4)], 0.3, 1).is_err());
        assert!(corrupt_pairflip(&d, &[(1, 1)], 0.3, 1).is_err());
        assert!(corrupt_pairflip(&d, &[(0, 1)], 1.5, 1).is_err());
        // a swap has distinct sources
        assert!(corrupt_pairflip(&d, &[(0, 1), (1, 0)], 0.3, 1).is_ok());
    }

    #[test]
    fn report_counts_realized_flips() {
        let d = base();
        let f = corrupt_pairflip(&d, &[(0, 1), (3, 2)], 0.4, 77).unwrap();
        let recount = d
            .clean_labels()
            .unwrap()
            .iter()
            .zip(f.noisy_labels())
            .filter(|(a, b)| a != b)
            .count();
        let r = noise_report(&f).unwrap();
        assert_eq!(r.corrupted, recount);
        assert_eq!(r.noise_rate, recount as f64 / 200.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let d = base();
        let a = corrupt_pairflip(&d, &[(0, 1)], 0.5, 4).unwrap();
        let b = corrupt_pairflip(&d, &[(0, 1)], 0.5, 4).unwrap();
        assert_eq!(a, b);
    }
}
