use std::fmt;

use crate::ir::{ElemType, TensorType};

#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    Int(Vec<i64>),
    /// f32 values carried in f64 (always exactly representable as f32).
    Float(Vec<f64>),
}

/// Dense row-major tensor value.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub elem: ElemType,
    pub data: Data,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorError(pub String);

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for TensorError {}

/// Inclusive value range of an integer element type: `iN` for N < 32
/// holds unsigned levels, `i32` is signed.
pub fn int_range(elem: ElemType) -> (i64, i64) {
    match elem {
        ElemType::Int(32) => (i64::from(i32::MIN), i64::from(i32::MAX)),
        ElemType::Int(b) => (0, (1i64 << b) - 1),
        ElemType::F32 => (i64::MIN, i64::MAX),
    }
}

impl Tensor {
    pub fn zeros(shape: impl Into<Vec<usize>>, elem: ElemType) -> Tensor {
        let shape = shape.into();
        let n = shape.iter().product();
        let data = if elem.is_float() {
            Data::Float(vec![0.0; n])
        } else {
            Data::Int(vec![0; n])
        };
        Tensor { shape, elem, data }
    }

    pub fn from_ints(
        shape: impl Into<Vec<usize>>,
        elem: ElemType,
        values: Vec<i64>,
    ) -> Result<Tensor, TensorError> {
        let shape = shape.into();
        if elem.is_float() {
            return Tensor::from_floats(shape, values.into_iter().map(|v| v as f64).collect());
        }
        check_len(&shape, values.len())?;
        let (lo, hi) = int_range(elem);
        if let Some(v) = values.iter().find(|v| **v < lo || **v > hi) {
            return Err(TensorError(format!("value {v} out of range for {elem}")));
        }
        Ok(Tensor {
            shape,
            elem,
            data: Data::Int(values),
        })
    }

    pub fn from_floats(shape: impl Into<Vec<usize>>, values: Vec<f64>) -> Result<Tensor, TensorError> {
        let shape = shape.into();
        check_len(&shape, values.len())?;
        Ok(Tensor {
            shape,
            elem: ElemType::F32,
            data: Data::Float(values.into_iter().map(|v| v as f32 as f64).collect()),
        })
    }

    pub fn ty(&self) -> TensorType {
        TensorType::new(self.shape.clone(), self.elem)
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored integers; panics on float tensors.
    pub fn ints(&self) -> &[i64] {
        match &self.data {
            Data::Int(v) => v,
            Data::Float(_) => panic!("integer data expected"),
        }
    }

    pub fn floats(&self) -> Option<&[f64]> {
        match &self.data {
            Data::Float(v) => Some(v),
            Data::Int(_) => None,
        }
    }

    /// Element `i` as a number, with `i1` read as its bipolar value.
    pub fn arith(&self, i: usize) -> f64 {
        match &self.data {
            Data::Int(v) if self.elem.is_binary() => (2 * v[i] - 1) as f64,
            Data::Int(v) => v[i] as f64,
            Data::Float(v) => v[i],
        }
    }

    /// Raw element `i` as f64 (no bipolar mapping).
    pub fn get_f64(&self, i: usize) -> f64 {
        match &self.data {
            Data::Int(v) => v[i] as f64,
            Data::Float(v) => v[i],
        }
    }

    pub fn row(&self, r: usize) -> &[i64] {
        let w = *self.shape.last().unwrap_or(&1);
        &self.ints()[r * w..(r + 1) * w]
    }

    pub fn values_f64(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get_f64(i)).collect()
    }

    /// Build a tensor of type `ty` from numeric values, rounding to the
    /// element type.
    pub fn from_numbers(ty: &TensorType, values: Vec<f64>) -> Tensor {
        let data = if ty.elem.is_float() {
            Data::Float(values.into_iter().map(|v| v as f32 as f64).collect())
        } else {
            Data::Int(values.into_iter().map(|v| v as i64).collect())
        };
        Tensor {
            shape: ty.shape.clone(),
            elem: ty.elem,
            data,
        }
    }
}

fn check_len(shape: &[usize], n: usize) -> Result<(), TensorError> {
    let want: usize = shape.iter().product();
    if want != n {
        return Err(TensorError(format!(
            "{n} values given for a tensor of {want} elements"
        )));
    }
    Ok(())
}

impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [", self.ty())?;
        for i in 0..self.len() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match &self.data {
                Data::Int(v) => write!(f, "{}", v[i])?,
                Data::Float(v) => write!(f, "{}", v[i])?,
            }
        }
        f.write_str("]")
    }
}
