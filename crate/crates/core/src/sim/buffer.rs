//! Server-side store of the most recently released final-layer embedding of
//! each boundary node.

use std::collections::BTreeMap;

use crate::model::RemoteEmbeddings;

#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry {
    /// Value as released (clipped and noised when noise is on).
    pub value: Vec<f64>,
    pub round: usize,
    /// Number of rounds in which this node was released, `R'(v)`.
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GlobalEmbeddingBuffer {
    entries: BTreeMap<usize, BufferEntry>,
}

impl GlobalEmbeddingBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Overwrite `node`'s value with a fresh release and bump its count.
    pub fn store(&mut self, node: usize, value: Vec<f64>, round: usize) {
        let entry = self.entries.entry(node).or_insert(BufferEntry { value: Vec::new(), round, count: 0 });
        entry.value = value;
        entry.round = round;
        entry.count += 1;
    }

    pub fn entry(&self, node: usize) -> Option<&BufferEntry> {
        self.entries.get(&node)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &BufferEntry)> {
        self.entries.iter().map(|(&v, e)| (v, e))
    }
}

impl RemoteEmbeddings for GlobalEmbeddingBuffer {
    fn get(&self, node: usize) -> Option<&[f64]> {
        self.entries.get(&node).map(|e| e.value.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stale_reads_keep_last_value() {
        let mut b = GlobalEmbeddingBuffer::new();
        b.store(4, vec![1.0, 2.0], 3);
        for _round in 4..=7 {
            assert_eq!(RemoteEmbeddings::get(&b, 4), Some(&[1.0, 2.0][..]));
        }
        let e = b.entry(4).unwrap();
        assert_eq!((e.round, e.count), (3, 1));
        b.store(4, vec![0.0, 0.0], 8);
        assert_eq!(b.entry(4).unwrap().count, 2);
    }
}
