//! Seeded, stratified train/test partition.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::EpochedDataset;
use crate::error::{config_err, data_err, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Short digest of the partition; equal fingerprints mean identical splits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.train.len() as u64).to_le_bytes());
        for &i in &self.train {
            h.update((i as u64).to_le_bytes());
        }
        h.update((self.test.len() as u64).to_le_bytes());
        for &i in &self.test {
            h.update((i as u64).to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Each class contributes `round(test_fraction · n_c)` trials to the test
/// set, clamped so both sides keep at least one trial of every class.
pub fn stratified_split(labels: &[usize], n_classes: usize, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(config_err!("test_fraction must lie in (0, 1), got {test_fraction}"));
    }
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(data_err!("label {l} out of range for {n_classes} classes"));
        }
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (c, mut idx) in by_class.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(data_err!(
                "class {c} has {} trial(s); a split needs at least 2",
                idx.len()
            ));
        }
        idx.shuffle(&mut rng);
        let n_test = ((test_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        split.test.extend_from_slice(&idx[..n_test]);
        split.train.extend_from_slice(&idx[n_test..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

pub fn split_dataset(
    ds: &EpochedDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(EpochedDataset, EpochedDataset, Split)> {
    let split = stratified_split(&ds.labels, ds.n_classes(), test_fraction, seed)?;
    Ok((ds.subset(&split.train), ds.subset(&split.test), split))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportions_per_class() {
        let labels: Vec<usize> = (0..130).map(|i| i % 13).collect();
        let s = stratified_split(&labels, 13, 0.2, 3).unwrap();
        for c in 0..13 {
            assert_eq!(s.test.iter().filter(|&&i| labels[i] == c).count(), 2);
        }
        assert_eq!(s.train.len() + s.test.len(), 130);
    }

    #[test]
    fn deterministic_in_seed() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let a = stratified_split(&labels, 4, 0.25, 11).unwrap();
        let b = stratified_split(&labels, 4, 0.25, 11).unwrap();
        let c = stratified_split(&labels, 4, 0.25, 12).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(stratified_split(&[0, 1, 1], 2, 0.5, 0).is_err());
        assert!(stratified_split(&[0, 0], 1, 0.0, 0).is_err());
        assert!(stratified_split(&[0, 0], 1, 1.0, 0).is_err());
    }
}
