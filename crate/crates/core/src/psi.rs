//! Noisy-label probabilities from a naive classifier.

use std::fs;
use std::path::Path;

use crate::classifier::{ForwardCache, Mlp};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trainer::{train_naive, TrainConfig, TrainState};

/// Lower clamp applied to every estimated `psi`.
pub const PSI_FLOOR: f64 = 1e-6;

/// `psi_i = h(x_i)[noisy_i]` under `model`, clamped into `[PSI_FLOOR, 1]`.
pub fn psi_from_model<T: Scalar>(model: &Mlp<T>, d: &Dataset<T>) -> Result<Vec<T>> {
    let mut cache = ForwardCache::new(model.architecture());
    let floor = T::lit(PSI_FLOOR);
    (0..d.len())
        .map(|i| {
            model.forward_cached(d.row(i), &mut cache)?;
            Ok(cache.probs()[d.noisy_labels()[i]].max(floor).min(T::one()))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct PsiEstimate<T> {
    pub psi: Vec<T>,
    /// The naive run that produced `psi`.
    pub naive: TrainState<T>,
}

/// Trains a naive classifier on the one-hot noisy labels with the same architecture and
/// hyperparameters as the main run (stopping at `config.psi_epoch_cap` if set) and
/// reads off the probability of each observed label.
pub fn estimate_psi<T: Scalar>(
    train: &Dataset<T>,
    config: &TrainConfig<T>,
) -> Result<PsiEstimate<T>> {
    if train.is_empty() {
        return Err(Error::InvalidDataset(
            "cannot estimate psi on an empty dataset".into(),
        ));
    }
    let mut naive_config = config.clone();
    if let Some(cap) = config.psi_epoch_cap {
        naive_config.epochs = naive_config.epochs.min(cap);
    }
    let naive = train_naive(train, &naive_config)?;
    let psi = psi_from_model(&naive.model, train)?;
    Ok(PsiEstimate { psi, naive })
}

/// Writes `index,psi`.
pub fn write_psi<T: Scalar>(path: impl AsRef<Path>, psi: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "psi"])?;
    for (i, p) in psi.iter().enumerate() {
        w.write_record([i.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_psi`]; rows must be indexed `0..N` in order.
pub fn read_psi<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} not found", path.display()),
        )));
    }
    let mut r = csv::Reader::from_reader(fs::File::open(path)?);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let index: usize = rec
            .get(0)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::InvalidDataset(format!("psi row {line}: bad index")))?;
        if index != line {
            return Err(Error::InvalidDataset(format!(
                "psi row {line} has index {index}"
            )));
        }
        let p: T = rec
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::InvalidDataset(format!("psi row {line}: bad value")))?;
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::out_of_range("psi", p.as_f64(), 0.0, 1.0));
        }
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_model_gives_one_over_c() {
        let d = Dataset::new(vec![0.5f64, -1.0, 2.0, 0.0], 1, vec![0, 1, 2, 3], 4).unwrap();
        let mut m = Mlp::init(
            Architecture::linear(1, 4),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        m.zero_output_layer();
        for p in psi_from_model(&m, &d).unwrap() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicated_instance_has_identical_psi() {
        let d = Dataset::new(vec![0.3f64, 0.3, -0.7], 1, vec![1, 1, 0], 2).unwrap();
        let m = Mlp::init(
            Architecture::linear(1, 2),
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        let psi = psi_from_model(&m, &d).unwrap();
        assert_eq!(psi[0].to_bits(), psi[1].to_bits());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.csv");
        let psi = vec![1e-6, 0.25, 1.0 / 3.0, 1.0];
        write_psi(&path, &psi).unwrap();
        assert_eq!(read_psi::<f64>(&path).unwrap(), psi);
        fs::write(&path, "index,psi\n0,0.5\n2,0.5\n").unwrap();
        assert!(read_psi::<f64>(&path).is_err());
        fs::write(&path, "index,psi\n0,1.5\n").unwrap();
        assert!(read_psi::<f64>(&path).is_err());
    }
}
