use std::fmt;

use crate::ir::{ElemType, Operation, TensorType};

/// The six tensor primitives the frontend understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorOpKind {
    Transpose,
    Matmul,
    Sub,
    Div,
    Norm { p: u32, dim: usize },
    Topk { k: usize, dim: usize, largest: bool },
}

impl TensorOpKind {
    pub fn op_name(self) -> &'static str {
        match self {
            TensorOpKind::Transpose => "transpose",
            TensorOpKind::Matmul => "matmul",
            TensorOpKind::Sub => "sub",
            TensorOpKind::Div => "div",
            TensorOpKind::Norm { .. } => "norm",
            TensorOpKind::Topk { .. } => "topk",
        }
    }

    /// Recover the kind from a `tensor.*` op; `None` for ops outside the six
    /// primitives, `Some(Err)` for malformed attributes.
    pub fn from_op(op: &Operation) -> Option<Result<TensorOpKind, String>> {
        if op.dialect != "tensor" {
            return None;
        }
        let attr = |k: &str| {
            op.int_attr(k)
                .ok_or_else(|| format!("{} requires integer attribute '{k}'", op.name))
        };
        let kind = match op.name.as_str() {
            "transpose" => Ok(TensorOpKind::Transpose),
            "matmul" => Ok(TensorOpKind::Matmul),
            "sub" => Ok(TensorOpKind::Sub),
            "div" => Ok(TensorOpKind::Div),
            "norm" => (|| {
                Ok(TensorOpKind::Norm {
                    p: u32::try_from(attr("p")?).map_err(|_| "norm p out of range".to_string())?,
                    dim: usize::try_from(attr("dim")?)
                        .map_err(|_| "norm dim out of range".to_string())?,
                })
            })(),
            "topk" => (|| {
                Ok(TensorOpKind::Topk {
                    k: usize::try_from(attr("k")?).map_err(|_| "topk k out of range".to_string())?,
                    dim: usize::try_from(attr("dim")?)
                        .map_err(|_| "topk dim out of range".to_string())?,
                    largest: attr("largest")? != 0,
                })
            })(),
            _ => return None,
        };
        Some(kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeError(pub String);

impl fmt::Display for ShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ShapeError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ShapeError> {
    Err(ShapeError(msg.into()))
}

fn fmt_shape(s: &[usize]) -> String {
    if s.is_empty() {
        return "scalar".into();
    }
    s.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

/// Integer arithmetic widens to i32 scores; any float operand makes it f32.
fn arith_elem(operands: &[TensorType]) -> ElemType {
    if operands.iter().any(|t| t.elem.is_float()) {
        ElemType::F32
    } else {
        ElemType::I32
    }
}

/// Result types of a primitive applied to operands of the given types.
pub fn infer_shapes(
    op: TensorOpKind,
    operands: &[TensorType],
) -> Result<Vec<TensorType>, ShapeError> {
    let name = op.op_name();
    let want = match op {
        TensorOpKind::Matmul | TensorOpKind::Sub => 2..=2,
        TensorOpKind::Div => 2..=3,
        _ => 1..=1,
    };
    if !want.contains(&operands.len()) {
        let n = if want.start() == want.end() {
            want.start().to_string()
        } else {
            format!("{} to {}", want.start(), want.end())
        };
        return err(format!("{name} expects {n} operands, got {}", operands.len()));
    }
    match op {
        TensorOpKind::Transpose => {
            let a = &operands[0];
            if a.rank() != 2 {
                return err(format!("transpose expects a rank-2 operand, got {}", fmt_shape(&a.shape)));
            }
            Ok(vec![TensorType::new([a.shape[1], a.shape[0]], a.elem)])
        }
        TensorOpKind::Matmul => {
            let (a, b) = (&operands[0], &operands[1]);
            if a.rank() != 2 || b.rank() != 2 {
                return err("matmul expects rank-2 operands");
            }
            if a.shape[1] != b.shape[0] {
                return err(format!(
                    "matmul inner dimensions differ: {} vs {}",
                    fmt_shape(&a.shape),
                    fmt_shape(&b.shape)
                ));
            }
            Ok(vec![TensorType::new(
                [a.shape[0], b.shape[1]],
                arith_elem(operands),
            )])
        }
        TensorOpKind::Sub => {
            let shape = row_broadcast(&operands[0].shape, &operands[1].shape).ok_or_else(|| {
                ShapeError(format!(
                    "sub operands do not broadcast: {} vs {}",
                    fmt_shape(&operands[0].shape),
                    fmt_shape(&operands[1].shape)
                ))
            })?;
            Ok(vec![TensorType::new(shape, arith_elem(operands))])
        }
        TensorOpKind::Div => {
            let a = &operands[0];
            for d in &operands[1..] {
                if !divisor_broadcasts(&a.shape, &d.shape) {
                    return err(format!(
                        "div divisor of shape {} does not broadcast against {}",
                        fmt_shape(&d.shape),
                        fmt_shape(&a.shape)
                    ));
                }
            }
            Ok(vec![TensorType::new(a.shape.clone(), ElemType::F32)])
        }
        TensorOpKind::Norm { p, dim } => {
            let a = &operands[0];
            if p != 1 && p != 2 {
                return err(format!("norm supports p = 1 or p = 2, got p = {p}"));
            }
            if dim >= a.rank() {
                return err(format!("norm dim {dim} out of range for rank {}", a.rank()));
            }
            let mut shape = a.shape.clone();
            shape.remove(dim);
            Ok(vec![TensorType::new(shape, ElemType::F32)])
        }
        TensorOpKind::Topk { k, dim, .. } => {
            let a = &operands[0];
            if dim >= a.rank() {
                return err(format!("topk dim {dim} out of range for rank {}", a.rank()));
            }
            if k < 1 || k > a.shape[dim] {
                return err(format!(
                    "topk k = {k} must lie in [1, {}]",
                    a.shape[dim]
                ));
            }
            let mut shape = a.shape.clone();
            shape[dim] = k;
            Ok(vec![
                TensorType::new(shape.clone(), a.elem),
                TensorType::new(shape, ElemType::I32),
            ])
        }
    }
}

/// Equal shapes, or a `1xD` row against an `NxD` matrix (either order).
pub fn row_broadcast(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    if a == b {
        return Some(a.to_vec());
    }
    if a.len() == 2 && b.len() == 2 && a[1] == b[1] {
        if a[0] == 1 {
            return Some(b.to_vec());
        }
        if b[0] == 1 {
            return Some(a.to_vec());
        }
    }
    None
}

/// Divisors may match the dividend, be a single element, a row against an
/// `NxD` dividend, or a rank-1 vector matching the dividend's last extent.
pub fn divisor_broadcasts(dividend: &[usize], divisor: &[usize]) -> bool {
    let elems: usize = divisor.iter().product();
    dividend == divisor
        || elems == 1
        || row_broadcast(dividend, divisor).as_deref() == Some(dividend)
        || (divisor.len() == 1 && dividend.last() == Some(&divisor[0]))
}
