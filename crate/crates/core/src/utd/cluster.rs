//! Acoustic similarity graph: merge overlapping segments into nodes, drop
//! edges below the similarity threshold, and read term categories off the
//! connected components.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::Match;
use crate::bow::NgramCounts;
use crate::corpus::Corpus;

/// One occurrence of a discovered term: an utterance and an inclusive frame
/// span (the bounding span of all merged segments).
#[derive(Debug, Clone, Hash, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentNode {
    pub utterance_id: String,
    pub span: (usize, usize),
}

/// Clusters of segment nodes; clusters are pairwise disjoint and every node
/// originates from some match.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TermClusterSet {
    pub clusters: Vec<Vec<SegmentNode>>,
}

impl TermClusterSet {
    pub fn num_occurrences(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// All nodes in a deterministic order.
    pub fn nodes(&self) -> Vec<&SegmentNode> {
        let mut nodes: Vec<&SegmentNode> = self.clusters.iter().flatten().collect();
        nodes.sort_unstable();
        nodes
    }
}

fn overlap_ratio(a: (usize, usize), b: (usize, usize)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if lo > hi {
        return 0.0;
    }
    let inter = (hi - lo + 1) as f64;
    let min_len = (a.1 - a.0 + 1).min(b.1 - b.0 + 1) as f64;
    inter / min_len
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Attach the larger index under the smaller for determinism.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Build term clusters from matches. Segments from the same utterance whose
/// frame overlap ratio (intersection over the shorter span) exceeds 0.5 are
/// merged into a single node before thresholding; edges with weight below
/// `edge_threshold` are removed; the connected components of what remains are
/// the clusters. Node identity never depends on `use_rescoring`, only edge
/// weights do.
pub fn cluster_terms(
    matches: &[Match],
    edge_threshold: f64,
    use_rescoring: bool,
) -> TermClusterSet {
    if matches.is_empty() {
        return TermClusterSet::default();
    }

    // Collect the raw segments of every match end, deduplicated.
    let mut segments: Vec<SegmentNode> = Vec::with_capacity(matches.len() * 2);
    for m in matches {
        segments.push(SegmentNode {
            utterance_id: m.utt_a.clone(),
            span: m.span_a,
        });
        segments.push(SegmentNode {
            utterance_id: m.utt_b.clone(),
            span: m.span_b,
        });
    }
    segments.sort_unstable();
    segments.dedup();

    // Merge overlapping segments within each utterance (transitive closure of
    // the pairwise overlap relation).
    let mut merge = DisjointSet::new(segments.len());
    let mut by_utt: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (idx, seg) in segments.iter().enumerate() {
        by_utt.entry(&seg.utterance_id).or_default().push(idx);
    }
    for indices in by_utt.values() {
        for (a_pos, &a) in indices.iter().enumerate() {
            for &b in &indices[a_pos + 1..] {
                if overlap_ratio(segments[a].span, segments[b].span) > 0.5 {
                    merge.union(a, b);
                }
            }
        }
    }

    // Node id per merge-root; node span is the bounding span of its members.
    let mut node_of_segment = vec![usize::MAX; segments.len()];
    let mut root_to_node: HashMap<usize, usize> = HashMap::new();
    let mut nodes: Vec<SegmentNode> = Vec::new();
    for idx in 0..segments.len() {
        let root = merge.find(idx);
        let node = *root_to_node.entry(root).or_insert_with(|| {
            nodes.push(segments[idx].clone());
            nodes.len() - 1
        });
        let n = &mut nodes[node];
        n.span.0 = n.span.0.min(segments[idx].span.0);
        n.span.1 = n.span.1.max(segments[idx].span.1);
        node_of_segment[idx] = node;
    }

    let segment_index: HashMap<&SegmentNode, usize> =
        segments.iter().enumerate().map(|(i, s)| (s, i)).collect();

    // Thresholded edges between nodes.
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for m in matches {
        if m.edge_weight(use_rescoring) < edge_threshold {
            continue;
        }
        let a = node_of_segment[segment_index[&SegmentNode {
            utterance_id: m.utt_a.clone(),
            span: m.span_a,
        }]];
        let b = node_of_segment[segment_index[&SegmentNode {
            utterance_id: m.utt_b.clone(),
            span: m.span_b,
        }]];
        if a != b {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
    }

    // Connected components by BFS in node order.
    let mut component = vec![usize::MAX; nodes.len()];
    let mut clusters: Vec<Vec<SegmentNode>> = Vec::new();
    for start in 0..nodes.len() {
        if component[start] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        let mut queue = std::collections::VecDeque::from([start]);
        component[start] = id;
        let mut members = Vec::new();
        while let Some(n) = queue.pop_front() {
            members.push(nodes[n].clone());
            for &next in &adjacency[n] {
                if component[next] == usize::MAX {
                    component[next] = id;
                    queue.push_back(next);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters.sort_unstable();
    TermClusterSet { clusters }
}

/// Per-document counts of term-category occurrences: cluster `k` contributes
/// one count for each of its nodes lying in one of the document's utterances.
/// Documents with no discovered terms get empty counts.
pub fn tokenize_documents_utd(
    clusters: &TermClusterSet,
    corpus: &Corpus,
) -> Vec<(String, NgramCounts)> {
    let mut utterance_to_doc: HashMap<&str, usize> = HashMap::new();
    for (d, doc) in corpus.documents.iter().enumerate() {
        for utt in &doc.utterance_ids {
            utterance_to_doc.insert(utt.as_str(), d);
        }
    }
    let mut counts: Vec<NgramCounts> = vec![NgramCounts::default(); corpus.documents.len()];
    for (k, cluster) in clusters.clusters.iter().enumerate() {
        for node in cluster {
            if let Some(&d) = utterance_to_doc.get(node.utterance_id.as_str()) {
                *counts[d]
                    .counts
                    .entry(vec![k as u32])
                    .or_insert(0.0) += 1.0;
            }
        }
    }
    corpus
        .documents
        .iter()
        .zip(counts)
        .map(|(doc, c)| (doc.doc_id.clone(), c))
        .collect()
}
