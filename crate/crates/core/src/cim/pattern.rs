//! Similarity-pattern recognition over execute-block dataflow graphs.

use std::collections::{BTreeSet, HashMap};

use crate::ir::{registry, Operation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityPattern {
    DotProd,
    EuclNorm,
    CosSim,
}

/// Op-kind dataflow graph: node labels plus producer -> consumer edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dfg {
    pub kinds: Vec<String>,
    pub edges: BTreeSet<(usize, usize)>,
}

impl Dfg {
    /// Graph of the non-terminator ops in `ops`; only edges between ops of
    /// the list are kept.
    pub fn of(ops: &[Operation]) -> Dfg {
        let body: Vec<&Operation> = ops
            .iter()
            .filter(|op| !registry::is_terminator(&op.dialect, &op.name))
            .collect();
        let mut producer = HashMap::new();
        for (i, op) in body.iter().enumerate() {
            for r in &op.results {
                producer.insert(*r, i);
            }
        }
        let mut edges = BTreeSet::new();
        for (j, op) in body.iter().enumerate() {
            op.for_each_use(&mut |v| {
                if let Some(&i) = producer.get(&v) {
                    edges.insert((i, j));
                }
            });
        }
        Dfg {
            kinds: body.iter().map(|op| op.full_name()).collect(),
            edges,
        }
    }

    fn template(kinds: &[&str], edges: &[(usize, usize)]) -> Dfg {
        Dfg {
            kinds: kinds.iter().map(|k| format!("tensor.{k}")).collect(),
            edges: edges.iter().copied().collect(),
        }
    }
}

impl SimilarityPattern {
    pub const ALL: [SimilarityPattern; 3] = [
        SimilarityPattern::DotProd,
        SimilarityPattern::EuclNorm,
        SimilarityPattern::CosSim,
    ];

    pub fn template(self) -> Dfg {
        match self {
            SimilarityPattern::DotProd => {
                Dfg::template(&["transpose", "matmul", "topk"], &[(0, 1), (1, 2)])
            }
            SimilarityPattern::EuclNorm => Dfg::template(&["sub", "norm", "topk"], &[(0, 1), (1, 2)]),
            SimilarityPattern::CosSim => Dfg::template(
                &["norm", "norm", "transpose", "matmul", "div"],
                &[(0, 4), (1, 4), (2, 3), (3, 4)],
            ),
        }
    }
}

/// Classify an execute region's op list (terminator included).
pub fn similarity_matching(ops: &[Operation]) -> Option<SimilarityPattern> {
    let dfg = Dfg::of(ops);
    let candidates: &[SimilarityPattern] = match ops.len() {
        4 => &[SimilarityPattern::DotProd, SimilarityPattern::EuclNorm],
        6 => &[SimilarityPattern::CosSim],
        _ => return None,
    };
    candidates
        .iter()
        .copied()
        .find(|p| isomorphic(&dfg, &p.template()))
}

/// Label-preserving graph isomorphism by backtracking over candidate
/// assignments of template nodes.
pub fn isomorphic(g: &Dfg, t: &Dfg) -> bool {
    if g.kinds.len() != t.kinds.len() || g.edges.len() != t.edges.len() {
        return false;
    }
    let n = t.kinds.len();
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    fn extend(i: usize, g: &Dfg, t: &Dfg, map: &mut [usize], used: &mut [bool]) -> bool {
        if i == map.len() {
            return t
                .edges
                .iter()
                .all(|&(a, b)| g.edges.contains(&(map[a], map[b])));
        }
        for c in 0..map.len() {
            if used[c] || g.kinds[c] != t.kinds[i] {
                continue;
            }
            // Prune: edges among already-mapped nodes must agree both ways.
            let consistent = (0..i).all(|j| {
                t.edges.contains(&(j, i)) == g.edges.contains(&(map[j], c))
                    && t.edges.contains(&(i, j)) == g.edges.contains(&(c, map[j]))
            }) && t.edges.contains(&(i, i)) == g.edges.contains(&(c, c));
            if !consistent {
                continue;
            }
            map[i] = c;
            used[c] = true;
            if extend(i + 1, g, t, map, used) {
                return true;
            }
            used[c] = false;
        }
        map[i] = usize::MAX;
        false
    }
    extend(0, g, t, &mut map, &mut used)
}
