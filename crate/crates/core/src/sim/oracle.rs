use super::tensor::Tensor;
use crate::cam::MatchType;
use crate::score::{rank, to_f32, Metric};

/// Result filter applied before ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Filter {
    pub match_type: MatchType,
    pub threshold: Option<i64>,
}

impl Filter {
    pub const ALL: Filter = Filter {
        match_type: MatchType::Best,
        threshold: None,
    };
}

/// Dense reference: score every stored row against the query with plain
/// arithmetic and take the top `k`, ties to the lowest index. Missing
/// entries (fewer than `k` rows pass the filter) are `(0, -1)`.
///
/// The filter compares a row's distance: mismatch count for `i1` data,
/// L1 for manhattan and squared L2 for euclidean on wider integers.
pub fn dense_oracle(
    stored: &Tensor,
    query: &Tensor,
    metric: Metric,
    k: usize,
    largest: bool,
    filter: Filter,
) -> (Vec<f64>, Vec<i64>) {
    let (n, d) = (stored.shape[0], stored.shape[1]);
    let mut cands = Vec::new();
    for r in 0..n {
        let a: Vec<f64> = (0..d).map(|j| stored.arith(r * d + j)).collect();
        let b: Vec<f64> = (0..d).map(|j| query.arith(j)).collect();
        let score = match metric {
            Metric::Dot => a.iter().zip(&b).map(|(x, y)| x * y).sum(),
            Metric::Manhattan => to_f32(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum()),
            Metric::Euclidean => to_f32(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()),
        };
        let distance: i64 = if stored.elem.is_binary() {
            (0..d).filter(|&j| stored.ints()[r * d + j] != query.ints()[j]).count() as i64
        } else if metric == Metric::Euclidean {
            a.iter().zip(&b).map(|(x, y)| ((x - y) * (x - y)) as i64).sum()
        } else {
            a.iter().zip(&b).map(|(x, y)| (x - y).abs() as i64).sum()
        };
        let keep = match filter.match_type {
            MatchType::Best => true,
            MatchType::Exact => distance == 0,
            MatchType::Threshold => distance <= filter.threshold.unwrap_or(0),
        };
        if keep {
            cands.push((score, r as i64));
        }
    }
    cands.sort_by(|x, y| rank(*x, *y, largest));
    cands.truncate(k);
    cands.resize(k, (0.0, -1));
    cands.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::ElemType;

    #[test]
    fn identity_rows_pick_matching_index() {
        let eye = Tensor::from_ints([3, 3], ElemType::I1, vec![1, 0, 0, 0, 1, 0, 0, 0, 1]).unwrap();
        let q = Tensor::from_ints([1, 3], ElemType::I1, vec![0, 1, 0]).unwrap();
        let (v, i) = dense_oracle(&eye, &q, Metric::Dot, 1, true, Filter::ALL);
        assert_eq!(i, vec![1]);
        assert_eq!(v, vec![3.0]);
    }
}
