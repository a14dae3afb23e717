//! Similarity arithmetic shared by the cim and cam execution paths.
//!
//! Binary (`i1`) components take part in arithmetic as bipolar values
//! (`b -> 2b - 1`); wider integers are unsigned levels. Tiled execution
//! accumulates a *raw* per-row quantity across column tiles and converts it
//! with [`finish`] once all tiles are summed:
//!
//! | data   | dot           | manhattan | euclidean   |
//! |--------|---------------|-----------|-------------|
//! | binary | `D - 2h`      | `2h`      | `sqrt(4h)`  |
//! | iN     | `sum(a*b)`    | `sum|a-b|`| `sqrt(sum (a-b)^2)` |
//!
//! where `h` is the mismatch count, which is also what a CAM row reports.

use std::cmp::Ordering;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Dot,
    Euclidean,
    Manhattan,
}

impl Metric {
    pub fn parse(s: &str) -> Option<Metric> {
        match s {
            "dot" => Some(Metric::Dot),
            "euclidean" => Some(Metric::Euclidean),
            "manhattan" => Some(Metric::Manhattan),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Dot => "dot",
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
        }
    }

    /// Distances are floats (norm results); dot scores are integers.
    pub fn float_valued(self) -> bool {
        self != Metric::Dot
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn bipolar(b: i64) -> i64 {
    2 * b - 1
}

/// Raw accumulable contribution of one stored row against the query.
pub fn raw_partial(row: &[i64], query: &[i64], metric: Metric, binary: bool) -> i64 {
    if binary {
        return row.iter().zip(query).filter(|(a, b)| a != b).count() as i64;
    }
    let pairs = row.iter().zip(query);
    match metric {
        Metric::Dot => pairs.map(|(a, b)| a * b).sum(),
        Metric::Manhattan => pairs.map(|(a, b)| (a - b).abs()).sum(),
        Metric::Euclidean => pairs.map(|(a, b)| (a - b) * (a - b)).sum(),
    }
}

/// Final score from an accumulated raw value over `width` real columns.
pub fn finish(raw: i64, metric: Metric, binary: bool, width: usize) -> f64 {
    match (metric, binary) {
        (Metric::Dot, true) => (width as i64 - 2 * raw) as f64,
        (Metric::Dot, false) => raw as f64,
        (Metric::Manhattan, true) => to_f32(2.0 * raw as f64),
        (Metric::Manhattan, false) => to_f32(raw as f64),
        (Metric::Euclidean, true) => to_f32((4.0 * raw as f64).sqrt()),
        (Metric::Euclidean, false) => to_f32((raw as f64).sqrt()),
    }
}

/// Round to single precision, keeping the f64 carrier.
pub fn to_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// Order two (value, index) candidates: better first. Ties go to the lower
/// index.
pub fn rank(a: (f64, i64), b: (f64, i64), largest: bool) -> Ordering {
    let by_value = if largest {
        b.0.partial_cmp(&a.0)
    } else {
        a.0.partial_cmp(&b.0)
    };
    by_value.unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// Indices of the `k` best values, best first.
pub fn topk_indices(values: &[f64], k: usize, largest: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| rank((values[a], a as i64), (values[b], b as i64), largest));
    idx.truncate(k);
    idx
}
