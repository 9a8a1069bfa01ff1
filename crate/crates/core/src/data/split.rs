use sha2::{Digest, Sha256};

use super::binary::BinaryDataset;
use crate::error::{Error, Result};

fn split_key(seed: u64, record_id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(record_id.as_bytes());
    h.finalize().into()
}

/// Train/test row indices, each in original order.
///
/// Every record gets a key hashed from the seed and its id; the `floor(n *
/// test_fraction)` records with the smallest keys go to the test side. The
/// assignment depends only on the seed and the ids, not on row order.
pub fn split_indices(
    record_ids: &[String],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = record_ids.len();
    let test_n = (n as f64 * test_fraction).floor() as usize;
    if test_n == 0 || test_n == n {
        return Err(Error::Size(format!(
            "splitting {n} records at fraction {test_fraction} leaves one side empty"
        )));
    }
    let mut order: Vec<(usize, [u8; 32])> = record_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (i, split_key(seed, id)))
        .collect();
    order.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| record_ids[a.0].cmp(&record_ids[b.0])));
    let mut is_test = vec![false; n];
    for &(i, _) in &order[..test_n] {
        is_test[i] = true;
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_test[i]);
    Ok((train, test))
}

/// Splits into `(train, test)`; see [`split_indices`].
pub fn split(data: &BinaryDataset, test_fraction: f64, seed: u64) -> Result<(BinaryDataset, BinaryDataset)> {
    let (train, test) = split_indices(data.record_ids(), test_fraction, seed)?;
    Ok((data.subset(&train), data.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("id{i}")).collect()
    }

    #[test]
    fn exact_disjoint_partition() {
        let (train, test) = split_indices(&ids(100), 0.2, 7).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_indices(&ids(100), 0.2, 7).unwrap(), (train.clone(), test));
        assert_ne!(split_indices(&ids(100), 0.2, 8).unwrap().0, train);
    }

    #[test]
    fn floor_rule_on_tiny_data() {
        let (train, test) = split_indices(&ids(3), 0.5, 1).unwrap();
        assert_eq!((train.len(), test.len()), (2, 1));
        assert!(matches!(split_indices(&ids(3), 0.2, 1), Err(Error::Size(_))));
        assert!(matches!(split_indices(&ids(3), 1.0, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn independent_of_row_order() {
        let fwd = ids(50);
        let rev: Vec<String> = fwd.iter().rev().cloned().collect();
        let (_, t1) = split_indices(&fwd, 0.3, 3).unwrap();
        let (_, t2) = split_indices(&rev, 0.3, 3).unwrap();
        let mut a: Vec<&String> = t1.iter().map(|&i| &fwd[i]).collect();
        let mut b: Vec<&String> = t2.iter().map(|&i| &rev[i]).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}
