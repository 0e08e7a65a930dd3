//! Huffman codes over token frequencies. Codes are prefix-free and of
//! minimal expected length; ties are broken by (frequency, node id) so the
//! tree is a pure function of the frequency table.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::{Error, Result};

/// Per-token binary code and root-to-leaf path of internal node indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTree {
    /// `codes[token][k]` is the bit decided at `paths[token][k]`.
    pub codes: Vec<Vec<bool>>,
    /// Internal node indices along each token's path, root first.
    pub paths: Vec<Vec<usize>>,
    pub num_internal: usize,
}

impl HuffmanTree {
    pub fn num_tokens(&self) -> usize {
        self.codes.len()
    }

    /// `sum 2^-len`; exactly 1 for a full binary tree over >= 2 tokens.
    pub fn kraft_sum(&self) -> f64 {
        self.codes
            .iter()
            .map(|c| 0.5f64.powi(c.len() as i32))
            .sum()
    }

    /// Total frequency-weighted code length.
    pub fn weighted_length(&self, freqs: &[u64]) -> u64 {
        self.codes
            .iter()
            .zip(freqs)
            .map(|(c, &f)| c.len() as u64 * f)
            .sum()
    }
}

/// Build the Huffman tree for `freqs[token]`. All frequencies must be
/// positive. A single token yields the degenerate zero-length code.
pub fn build_huffman(freqs: &[u64]) -> Result<HuffmanTree> {
    if freqs.is_empty() {
        return Err(Error::InvalidConfig("empty vocabulary".into()));
    }
    if freqs.contains(&0) {
        return Err(Error::InvalidConfig(
            "all token frequencies must be positive".into(),
        ));
    }
    let n = freqs.len();
    if n == 1 {
        return Ok(HuffmanTree {
            codes: vec![Vec::new()],
            paths: vec![Vec::new()],
            num_internal: 0,
        });
    }

    // Node ids: 0..n are leaves, then internal nodes in creation order.
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = (0..n)
        .map(|i| Reverse((freqs[i], i)))
        .collect();
    let mut children: Vec<(usize, usize)> = Vec::with_capacity(n - 1);
    let mut next_id = n;
    while heap.len() > 1 {
        let Reverse((f1, n1)) = heap.pop().expect("len > 1");
        let Reverse((f2, n2)) = heap.pop().expect("len > 1");
        children.push((n1, n2));
        heap.push(Reverse((f1 + f2, next_id)));
        next_id += 1;
    }

    // Walk down from the root assigning codes; the smaller merge partner is
    // bit 0.
    let num_internal = children.len();
    let mut codes = vec![Vec::new(); n];
    let mut paths = vec![Vec::new(); n];
    let root = n + num_internal - 1;
    let mut stack: Vec<(usize, Vec<bool>, Vec<usize>)> = vec![(root, Vec::new(), Vec::new())];
    while let Some((node, code, path)) = stack.pop() {
        if node < n {
            codes[node] = code;
            paths[node] = path;
            continue;
        }
        let internal_index = node - n;
        let (left, right) = children[internal_index];
        let mut path = path;
        path.push(internal_index);
        let mut code0 = code.clone();
        code0.push(false);
        let mut code1 = code;
        code1.push(true);
        stack.push((left, code0, path.clone()));
        stack.push((right, code1, path));
    }
    Ok(HuffmanTree {
        codes,
        paths,
        num_internal,
    })
}
