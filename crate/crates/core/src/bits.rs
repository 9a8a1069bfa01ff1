//! Packed boolean columns for fast support counting.

use crate::data::BinaryDataset;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitColumn {
    words: Vec<u64>,
    len: usize,
}

impl BitColumn {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut c = Self::zeros(len);
        for i in 0..len {
            c.set(i);
        }
        c
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut c = Self::zeros(len);
        for i in 0..len {
            if f(i) {
                c.set(i);
            }
        }
        c
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn and(&self, other: &BitColumn) -> BitColumn {
        BitColumn {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
            len: self.len,
        }
    }

    pub fn and_count(&self, other: &BitColumn) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// Indices of set bits, ascending.
    pub fn ones_iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                (bits != 0).then(|| {
                    let t = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    w * 64 + t
                })
            })
        })
    }
}

/// One packed column per feature of `data`.
pub fn feature_columns(data: &BinaryDataset) -> Vec<BitColumn> {
    let mut cols = vec![BitColumn::zeros(data.len()); data.feature_count()];
    for (i, rec) in data.records().enumerate() {
        for (j, &b) in rec.iter().enumerate() {
            if b {
                cols[j].set(i);
            }
        }
    }
    cols
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_count_and_iterate() {
        let a = BitColumn::from_fn(130, |i| i % 3 == 0);
        let b = BitColumn::from_fn(130, |i| i % 2 == 0);
        assert_eq!(a.count(), 44);
        assert_eq!(a.and_count(&b), 22);
        assert_eq!(a.and(&b).ones_iter().collect::<Vec<_>>(), (0..130).step_by(6).collect::<Vec<_>>());
        assert!(a.get(129) && !a.get(128));
        assert_eq!(BitColumn::ones(70).count(), 70);
    }
}
