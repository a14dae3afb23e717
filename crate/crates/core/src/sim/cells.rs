//! Cell arrays and the match-line search they perform.

use crate::cam::{Device, MatchType, SearchMetric, SearchSpec};

/// Ternary don't-care marker in TCAM cell storage.
pub const X: i64 = -1;

/// Contents of one `rows x cols` subarray. Rows never written stay
/// `None` and may not be searched.
#[derive(Debug, Clone, PartialEq)]
pub struct Subarray {
    pub device: Device,
    pub rows: usize,
    pub cols: usize,
    /// TCAM: 0, 1 or [`X`]; MCAM: the stored level; ACAM: the range
    /// midpoint written as `[v, v]`.
    cells: Vec<Option<(i64, i64)>>,
}

/// Per-row outcome of one search over rows `[offset, offset + len)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    pub offset: usize,
    pub distances: Vec<i64>,
    /// Rows flagged by the match type: zero distance (exact), within the
    /// threshold, or the single lowest-distance row (best, ties to the
    /// lowest index).
    pub flags: Vec<bool>,
}

impl Subarray {
    pub fn new(device: Device, rows: usize, cols: usize) -> Subarray {
        Subarray {
            device,
            rows,
            cols,
            cells: vec![None; rows * cols],
        }
    }

    /// Store `data` (row-major, `data.len() / cols` rows) from row `offset`.
    pub fn write(&mut self, offset: usize, data: &[i64]) -> Result<(), String> {
        let n = data.len() / self.cols.max(1);
        if !data.len().is_multiple_of(self.cols.max(1)) || offset + n > self.rows {
            return Err(format!(
                "write of {n} rows at {offset} exceeds {}x{} subarray",
                self.rows, self.cols
            ));
        }
        for (i, &v) in data.iter().enumerate() {
            let cell = match self.device {
                Device::Tcam if v == 0 || v == 1 || v == X => (v, v),
                Device::Tcam => return Err(format!("tcam cell cannot hold {v}")),
                Device::Mcam | Device::Acam if v < 0 => {
                    return Err(format!("{} cell cannot hold {v}", self.device))
                }
                _ => (v, v),
            };
            self.cells[offset * self.cols + i] = Some(cell);
        }
        Ok(())
    }

    /// Set one ACAM cell to the range `[lo, hi]`.
    pub fn write_range(&mut self, row: usize, col: usize, lo: i64, hi: i64) -> Result<(), String> {
        if self.device != Device::Acam {
            return Err("ranges need an acam subarray".into());
        }
        if lo > hi || row >= self.rows || col >= self.cols {
            return Err(format!("bad range [{lo}, {hi}] at ({row}, {col})"));
        }
        self.cells[row * self.cols + col] = Some((lo, hi));
        Ok(())
    }

    pub fn is_written(&self, row: usize) -> bool {
        self.cells[row * self.cols..(row + 1) * self.cols].iter().all(Option::is_some)
    }

    /// Compare `query` against rows `[offset, offset + len)`.
    pub fn search(&self, query: &[i64], offset: usize, len: usize, spec: &SearchSpec) -> Result<MatchResult, String> {
        if query.len() != self.cols {
            return Err(format!("query width {} does not match {} columns", query.len(), self.cols));
        }
        if offset + len > self.rows {
            return Err(format!("rows {offset}..{} outside subarray of {}", offset + len, self.rows));
        }
        if self.device == Device::Tcam && spec.metric == SearchMetric::Euclidean {
            return Err("metric unsupported by device: tcam supports hamming only".into());
        }
        let mut distances = Vec::with_capacity(len);
        for r in offset..offset + len {
            let row = &self.cells[r * self.cols..(r + 1) * self.cols];
            let mut d = 0i64;
            for (cell, &q) in row.iter().zip(query) {
                let Some((lo, hi)) = *cell else {
                    return Err(format!("search reads unwritten row {r}"));
                };
                d += match self.device {
                    Device::Tcam => i64::from(lo != X && lo != q),
                    Device::Acam => i64::from(q < lo || q > hi),
                    Device::Mcam => match spec.metric {
                        SearchMetric::Hamming => (lo - q).abs(),
                        SearchMetric::Euclidean => (lo - q) * (lo - q),
                    },
                };
            }
            distances.push(d);
        }
        let flags = match spec.match_type {
            MatchType::Exact => distances.iter().map(|&d| d == 0).collect(),
            MatchType::Threshold => {
                let t = spec.threshold.unwrap_or(0);
                distances.iter().map(|&d| d <= t).collect()
            }
            MatchType::Best => {
                let best = distances
                    .iter()
                    .enumerate()
                    .min_by_key(|&(i, d)| (*d, i))
                    .map(|(i, _)| i);
                (0..len).map(|i| Some(i) == best).collect()
            }
        };
        Ok(MatchResult {
            offset,
            distances,
            flags,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(m: MatchType, t: Option<i64>) -> SearchSpec {
        SearchSpec {
            match_type: m,
            metric: SearchMetric::Hamming,
            threshold: t,
        }
    }

    #[test]
    fn tcam_dont_care_matches_both() {
        let mut s = Subarray::new(Device::Tcam, 2, 3);
        s.write(0, &[1, X, 0, 1, 1, 1]).unwrap();
        let r = s.search(&[1, 0, 0], 0, 2, &spec(MatchType::Exact, None)).unwrap();
        assert_eq!(r.distances, vec![0, 2]);
        assert_eq!(r.flags, vec![true, false]);
    }

    #[test]
    fn best_match_ties_to_lowest_row() {
        let mut s = Subarray::new(Device::Tcam, 3, 2);
        s.write(0, &[1, 1, 0, 0, 0, 0]).unwrap();
        let r = s.search(&[0, 0], 0, 3, &spec(MatchType::Best, None)).unwrap();
        assert_eq!(r.flags, vec![false, true, false]);
    }

    #[test]
    fn acam_counts_out_of_range_cells() {
        let mut s = Subarray::new(Device::Acam, 1, 3);
        s.write(0, &[0, 0, 0]).unwrap();
        s.write_range(0, 0, 2, 5).unwrap();
        let r = s.search(&[3, 0, 1], 0, 1, &spec(MatchType::Threshold, Some(1))).unwrap();
        assert_eq!(r.distances, vec![1]);
        assert_eq!(r.flags, vec![true]);
    }

    #[test]
    fn unwritten_rows_are_rejected() {
        let mut s = Subarray::new(Device::Mcam, 2, 2);
        s.write(0, &[1, 2]).unwrap();
        assert!(s.search(&[1, 2], 0, 1, &spec(MatchType::Best, None)).is_ok());
        assert!(s.search(&[1, 2], 0, 2, &spec(MatchType::Best, None)).is_err());
    }
}
