use std::fmt;

/// Element type of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElemType {
    /// Signless integer of the given bit width (1..=32). `i1` holds binary
    /// hypervector components; arithmetic reads bit `b` as `2b - 1`.
    Int(u8),
    F32,
}

impl ElemType {
    pub const I1: ElemType = ElemType::Int(1);
    pub const I32: ElemType = ElemType::Int(32);

    pub fn is_float(self) -> bool {
        matches!(self, ElemType::F32)
    }

    pub fn is_binary(self) -> bool {
        self == ElemType::I1
    }

    pub fn bits(self) -> u8 {
        match self {
            ElemType::Int(b) => b,
            ElemType::F32 => 32,
        }
    }
}

impl fmt::Display for ElemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElemType::Int(b) => write!(f, "i{b}"),
            ElemType::F32 => f.write_str("f32"),
        }
    }
}

impl std::str::FromStr for ElemType {
    type Err = String;

    fn from_str(s: &str) -> Result<ElemType, String> {
        crate::ir::parse_elem(s).ok_or_else(|| format!("unknown element type '{s}'"))
    }
}

/// Statically shaped tensor type.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TensorType {
    pub shape: Vec<usize>,
    pub elem: ElemType,
}

impl TensorType {
    pub fn new(shape: impl Into<Vec<usize>>, elem: ElemType) -> Self {
        TensorType {
            shape: shape.into(),
            elem,
        }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn num_elements(&self) -> usize {
        self.shape.iter().product()
    }
}

impl fmt::Display for TensorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("tensor<")?;
        for d in &self.shape {
            write!(f, "{d}x")?;
        }
        write!(f, "{}>", self.elem)
    }
}

/// Opaque device handles produced by the `cim` and `cam` dialects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HandleKind {
    CimDevice,
    Bank,
    Mat,
    Array,
    Subarray,
    Matches,
}

impl HandleKind {
    pub fn spelling(self) -> &'static str {
        match self {
            HandleKind::CimDevice => "!cim.handle",
            HandleKind::Bank => "!cam.bank",
            HandleKind::Mat => "!cam.mat",
            HandleKind::Array => "!cam.array",
            HandleKind::Subarray => "!cam.subarray",
            HandleKind::Matches => "!cam.matches",
        }
    }

    pub fn from_spelling(s: &str) -> Option<HandleKind> {
        Some(match s {
            "!cim.handle" => HandleKind::CimDevice,
            "!cam.bank" => HandleKind::Bank,
            "!cam.mat" => HandleKind::Mat,
            "!cam.array" => HandleKind::Array,
            "!cam.subarray" => HandleKind::Subarray,
            "!cam.matches" => HandleKind::Matches,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Type {
    Tensor(TensorType),
    Handle(HandleKind),
    /// Loop induction and tile-index values.
    Index,
}

impl Type {
    pub fn tensor(shape: impl Into<Vec<usize>>, elem: ElemType) -> Type {
        Type::Tensor(TensorType::new(shape, elem))
    }

    pub fn as_tensor(&self) -> Option<&TensorType> {
        match self {
            Type::Tensor(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_handle(&self, kind: HandleKind) -> bool {
        matches!(self, Type::Handle(k) if *k == kind)
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Tensor(t) => t.fmt(f),
            Type::Handle(h) => f.write_str(h.spelling()),
            Type::Index => f.write_str("index"),
        }
    }
}

/// Compile-time attribute value.
#[derive(Debug, Clone, PartialEq)]
pub enum Attr {
    Int(i64),
    Real(f64),
    Str(String),
    IntList(Vec<i64>),
}

impl Attr {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Attr::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Attr::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int_list(&self) -> Option<&[i64]> {
        match self {
            Attr::IntList(v) => Some(v),
            _ => None,
        }
    }
}

impl From<i64> for Attr {
    fn from(v: i64) -> Self {
        Attr::Int(v)
    }
}

impl From<usize> for Attr {
    fn from(v: usize) -> Self {
        Attr::Int(v as i64)
    }
}

impl From<bool> for Attr {
    fn from(v: bool) -> Self {
        Attr::Int(v as i64)
    }
}

impl From<&str> for Attr {
    fn from(v: &str) -> Self {
        Attr::Str(v.to_string())
    }
}

impl From<String> for Attr {
    fn from(v: String) -> Self {
        Attr::Str(v)
    }
}

impl From<Vec<i64>> for Attr {
    fn from(v: Vec<i64>) -> Self {
        Attr::IntList(v)
    }
}

impl fmt::Display for Attr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attr::Int(v) => write!(f, "{v}"),
            // Debug formatting always keeps a '.' or exponent, so reals reparse as reals.
            Attr::Real(v) => write!(f, "{v:?}"),
            Attr::Str(s) => write!(f, "{s:?}"),
            Attr::IntList(v) => {
                f.write_str("[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("]")
            }
        }
    }
}
