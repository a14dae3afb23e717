//! Reference implementations of tensor, cim and plumb data ops.

use super::tensor::Tensor;
use crate::ir::{ElemType, TensorType};
use crate::score::{finish, rank, raw_partial, to_f32, Metric};

fn strides(shape: &[usize], dim: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..dim].iter().product();
    let inner: usize = shape[dim + 1..].iter().product();
    (outer, shape[dim], inner)
}

pub fn transpose(a: &Tensor, ty: &TensorType) -> Tensor {
    let (r, c) = (a.shape[0], a.shape[1]);
    let mut out = Vec::with_capacity(r * c);
    for j in 0..c {
        for i in 0..r {
            out.push(a.get_f64(i * c + j));
        }
    }
    Tensor::from_numbers(ty, out)
}

pub fn matmul(a: &Tensor, b: &Tensor, ty: &TensorType) -> Tensor {
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] = (0..k).map(|x| a.arith(i * k + x) * b.arith(x * n + j)).sum();
        }
    }
    Tensor::from_numbers(ty, out)
}

/// Index into an operand that may be a broadcast row.
fn bcast(t: &Tensor, out_shape: &[usize], i: usize) -> usize {
    if t.shape == out_shape {
        return i;
    }
    let elems = t.len();
    if elems == 1 {
        return 0;
    }
    let last = *out_shape.last().unwrap_or(&1);
    if t.shape.len() == 1 || t.shape[0] == 1 {
        return i % last;
    }
    i
}

pub fn sub(a: &Tensor, b: &Tensor, ty: &TensorType) -> Tensor {
    let out = (0..ty.num_elements())
        .map(|i| a.arith(bcast(a, &ty.shape, i)) - b.arith(bcast(b, &ty.shape, i)))
        .collect();
    Tensor::from_numbers(ty, out)
}

/// Elementwise quotient, dividing by each divisor in turn with f32
/// rounding after every step.
pub fn div(a: &Tensor, divisors: &[&Tensor], ty: &TensorType) -> Tensor {
    let out = (0..ty.num_elements())
        .map(|i| {
            let mut v = to_f32(a.arith(i));
            for d in divisors {
                v = to_f32(v / d.arith(bcast(d, &ty.shape, i)));
            }
            v
        })
        .collect();
    Tensor::from_numbers(ty, out)
}

pub fn norm(a: &Tensor, p: u32, dim: usize, ty: &TensorType) -> Tensor {
    let (outer, len, inner) = strides(&a.shape, dim);
    let mut out = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for i in 0..inner {
            let xs = (0..len).map(|j| a.arith((o * len + j) * inner + i));
            let v = if p == 1 {
                xs.map(f64::abs).sum::<f64>()
            } else {
                xs.map(|x| x * x).sum::<f64>().sqrt()
            };
            out.push(v);
        }
    }
    Tensor::from_numbers(ty, out)
}

pub fn topk(a: &Tensor, k: usize, dim: usize, largest: bool, tys: &[TensorType]) -> (Tensor, Tensor) {
    let (outer, len, inner) = strides(&a.shape, dim);
    let mut vals = vec![0.0; outer * k * inner];
    let mut idxs = vec![0.0; outer * k * inner];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let mut order: Vec<usize> = (0..len).collect();
            order.sort_by(|&x, &y| rank((a.get_f64(at(x)), x as i64), (a.get_f64(at(y)), y as i64), largest));
            for (slot, &j) in order.iter().take(k).enumerate() {
                let dst = (o * k + slot) * inner + i;
                vals[dst] = a.get_f64(at(j));
                idxs[dst] = j as f64;
            }
        }
    }
    (Tensor::from_numbers(&tys[0], vals), Tensor::from_numbers(&tys[1], idxs))
}

/// Score of one stored row against the query, computed directly from
/// the bipolar/level values rather than through a mismatch count.
pub fn direct_score(a: &Tensor, row: usize, q: &Tensor, metric: Metric) -> f64 {
    let d = q.len();
    let pairs = (0..d).map(|j| (a.arith(row * d + j), q.arith(j)));
    match metric {
        Metric::Dot => pairs.map(|(x, y)| x * y).sum(),
        Metric::Manhattan => to_f32(pairs.map(|(x, y)| (x - y).abs()).sum()),
        Metric::Euclidean => to_f32(pairs.map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()),
    }
}

/// Best `k` of `(value, index)` candidates, padded with `(0, -1)`.
pub fn select(mut cands: Vec<(f64, i64)>, k: usize, largest: bool) -> Vec<(f64, i64)> {
    cands.sort_by(|a, b| rank(*a, *b, largest));
    cands.truncate(k);
    cands.resize(k, (0.0, -1));
    cands
}

pub fn pair_tensors(sel: &[(f64, i64)], tys: &[TensorType]) -> Vec<Tensor> {
    vec![
        Tensor::from_numbers(&tys[0], sel.iter().map(|p| p.0).collect()),
        Tensor::from_numbers(&tys[1], sel.iter().map(|p| p.1 as f64).collect()),
    ]
}

/// Unpartitioned `cim.similarity`: top-k pairs, or the full score row.
pub fn similarity(s: &Tensor, q: &Tensor, metric: Metric, k: usize, largest: bool, tys: &[TensorType]) -> Vec<Tensor> {
    let scores: Vec<f64> = (0..s.shape[0]).map(|r| direct_score(s, r, q, metric)).collect();
    if k == 0 {
        return vec![Tensor::from_numbers(&tys[0], scores)];
    }
    let cands = scores.into_iter().enumerate().map(|(i, v)| (v, i as i64)).collect();
    pair_tensors(&select(cands, k, largest), tys)
}

/// Partial similarity of a tile: raw per-row values as `1 x R` i32.
pub fn similarity_partial(s: &Tensor, q: &Tensor, metric: Metric) -> Tensor {
    let raws: Vec<i64> = (0..s.shape[0])
        .map(|r| raw_partial(s.row(r), q.ints(), metric, s.elem.is_binary()))
        .collect();
    Tensor {
        shape: vec![1, raws.len()],
        elem: ElemType::I32,
        data: super::tensor::Data::Int(raws),
    }
}

pub struct FinalizeAttrs {
    pub metric: Metric,
    pub binary: bool,
    pub k: usize,
    pub largest: bool,
    pub rows: usize,
    pub total: usize,
    pub width: usize,
}

/// Turn the raw values of row tile `rt` into scores with global indices.
pub fn finalize(raw: &Tensor, rt: usize, a: &FinalizeAttrs, tys: &[TensorType]) -> Vec<Tensor> {
    let base = rt * a.rows;
    let valid = a.rows.min(a.total.saturating_sub(base));
    let score = |i: usize| finish(raw.ints()[i], a.metric, a.binary, a.width);
    if a.k == 0 {
        let vals = (0..raw.len()).map(|i| if i < valid { score(i) } else { 0.0 }).collect();
        return vec![Tensor::from_numbers(&tys[0], vals)];
    }
    let cands = (0..valid).map(|i| (score(i), (base + i) as i64)).collect();
    pair_tensors(&select(cands, a.k, a.largest), tys)
}

pub fn sum_cols(acc: &Tensor, part: &Tensor) -> Tensor {
    let mut out = acc.clone();
    if let super::tensor::Data::Int(v) = &mut out.data {
        for (x, y) in v.iter_mut().zip(part.ints()) {
            *x += y;
        }
    }
    out
}

/// Merge two top-k lists, skipping padding entries.
pub fn merge_topk(av: &Tensor, ai: &Tensor, tv: &Tensor, ti: &Tensor, largest: bool) -> Vec<Tensor> {
    let k = av.len();
    let mut cands = Vec::new();
    for (v, i) in [(av, ai), (tv, ti)] {
        for j in 0..v.len() {
            let idx = i.get_f64(j) as i64;
            if idx >= 0 {
                cands.push((v.get_f64(j), idx));
            }
        }
    }
    pair_tensors(&select(cands, k, largest), &[av.ty(), ai.ty()])
}

/// Place a row tile's scores at `rt * R` in the full row.
pub fn concat(acc: &Tensor, tile: &Tensor, rt: usize) -> Tensor {
    let r = tile.len();
    let mut vals = acc.values_f64();
    for i in 0..r {
        let g = rt * r + i;
        if g < vals.len() {
            vals[g] = tile.get_f64(i);
        }
    }
    Tensor::from_numbers(&acc.ty(), vals)
}

/// Zero-padded `rows x cols` window at tile `(rt, ct)`.
pub fn slice(a: &Tensor, rt: usize, ct: usize, rows: usize, cols: usize) -> Tensor {
    let (n, d) = (a.shape[0], a.shape[1]);
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let (r, c) = (rt * rows + i, ct * cols + j);
            out.push(if r < n && c < d { a.get_f64(r * d + c) } else { 0.0 });
        }
    }
    Tensor::from_numbers(&TensorType::new([rows, cols], a.elem), out)
}
