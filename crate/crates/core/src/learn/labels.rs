use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-length multi-label target: bit `i` is set iff leaf `i` holds results.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSet {
    len: usize,
    words: Vec<u64>,
}

impl LabelSet {
    pub fn empty(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_ids<I: IntoIterator<Item = u32>>(len: usize, ids: I) -> Result<Self> {
        let mut s = Self::empty(len);
        for id in ids {
            if id as usize >= len {
                return Err(Error::InputDomain(format!(
                    "label {id} out of range for {len} labels"
                )));
            }
            s.words[id as usize / 64] |= 1 << (id % 64);
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, id: u32) -> bool {
        (id as usize) < self.len && self.words[id as usize / 64] >> (id % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Set bits in ascending order.
    pub fn ids(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.count());
        for (wi, &w) in self.words.iter().enumerate() {
            let mut w = w;
            while w != 0 {
                let b = w.trailing_zeros();
                out.push(wi as u32 * 64 + b);
                w &= w - 1;
            }
        }
        out
    }

    /// One character per label, label 0 first: `{2}` over 8 labels is `00100000`.
    pub fn to_bit_string(&self) -> String {
        (0..self.len as u32)
            .map(|i| if self.contains(i) { '1' } else { '0' })
            .collect()
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        let ids = s
            .chars()
            .enumerate()
            .filter_map(|(i, c)| match c {
                '1' => Some(Ok(i as u32)),
                '0' => None,
                other => Some(Err(Error::InputDomain(format!(
                    "bad label character {other:?}"
                )))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_ids(s.chars().count(), ids)
    }
}
