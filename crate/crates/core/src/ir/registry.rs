//! Registered op signatures for every dialect the compiler knows.

/// Arity bound: at least `.0`, at most `.1` (`None` = unbounded).
pub type Arity = (usize, Option<usize>);

#[derive(Debug)]
pub struct OpSig {
    pub dialect: &'static str,
    pub name: &'static str,
    pub operands: Arity,
    pub results: Arity,
    pub required_attrs: &'static [&'static str],
    pub optional_attrs: &'static [&'static str],
    pub regions: usize,
    pub terminator: bool,
}

const fn sig(
    dialect: &'static str,
    name: &'static str,
    operands: Arity,
    results: Arity,
    required_attrs: &'static [&'static str],
    optional_attrs: &'static [&'static str],
    regions: usize,
) -> OpSig {
    OpSig {
        dialect,
        name,
        operands,
        results,
        required_attrs,
        optional_attrs,
        regions,
        terminator: false,
    }
}

const fn term(dialect: &'static str, name: &'static str) -> OpSig {
    OpSig {
        dialect,
        name,
        operands: (0, None),
        results: (0, Some(0)),
        required_attrs: &[],
        optional_attrs: &[],
        regions: 0,
        terminator: true,
    }
}

const ONE: Arity = (1, Some(1));
const NONE: Arity = (0, Some(0));

static OPS: &[OpSig] = &[
    term("func", "return"),
    // tensor
    sig("tensor", "transpose", ONE, ONE, &[], &[], 0),
    sig("tensor", "matmul", (2, Some(2)), ONE, &[], &[], 0),
    sig("tensor", "sub", (2, Some(2)), ONE, &[], &[], 0),
    sig("tensor", "div", (2, Some(3)), ONE, &[], &[], 0),
    sig("tensor", "norm", ONE, ONE, &["dim", "p"], &[], 0),
    sig("tensor", "topk", ONE, (2, Some(2)), &["dim", "k", "largest"], &[], 0),
    sig("tensor", "reshape", ONE, ONE, &[], &[], 0),
    // cim
    sig("cim", "acquire", NONE, ONE, &[], &[], 0),
    sig("cim", "execute", ONE, (0, None), &[], &[], 1),
    term("cim", "yield"),
    sig("cim", "release", ONE, NONE, &[], &[], 0),
    sig(
        "cim",
        "similarity",
        (2, Some(2)),
        (1, Some(2)),
        &["metric"],
        &["k", "largest", "partial"],
        0,
    ),
    sig(
        "cim",
        "finalize",
        (2, Some(2)),
        (1, Some(2)),
        &["binary", "k", "largest", "metric", "rows", "total", "width"],
        &[],
        0,
    ),
    sig("cim", "merge_partial", (2, Some(4)), (1, Some(2)), &["kind"], &[], 0),
    sig("cim", "init_partial", NONE, (1, Some(2)), &["kind"], &["k"], 0),
    // plumb: loops, guards and index arithmetic
    sig(
        "plumb",
        "for",
        (0, None),
        (0, None),
        &["lower", "step", "upper"],
        &["group", "level", "schedule"],
        1,
    ),
    term("plumb", "yield"),
    sig("plumb", "when", (1, None), (0, None), &["lt"], &[], 1),
    sig("plumb", "const", NONE, ONE, &["value"], &[], 0),
    sig("plumb", "affine", (0, None), ONE, &["coeffs", "constant"], &[], 0),
    sig("plumb", "divmod", ONE, (2, Some(2)), &["divisor"], &[], 0),
    sig("plumb", "extent", ONE, ONE, &["tile", "total"], &[], 0),
    sig("plumb", "slice", (3, Some(3)), ONE, &["cols", "rows"], &[], 0),
    // cam
    sig("cam", "alloc_bank", (0, Some(1)), ONE, &["cols", "device", "rows"], &[], 0),
    sig("cam", "alloc_mat", (1, Some(2)), ONE, &[], &[], 0),
    sig("cam", "alloc_array", (1, Some(2)), ONE, &[], &[], 0),
    sig("cam", "alloc_subarray", (1, Some(2)), ONE, &[], &[], 0),
    sig("cam", "alloc_buffer", NONE, ONE, &["size"], &[], 0),
    sig("cam", "write_value", (4, Some(4)), NONE, &[], &[], 0),
    sig(
        "cam",
        "search",
        (4, Some(4)),
        ONE,
        &["match", "metric"],
        &["threshold"],
        0,
    ),
    sig("cam", "merge_partial", (3, Some(3)), ONE, &["kind"], &[], 0),
    sig(
        "cam",
        "read_value",
        ONE,
        (1, Some(2)),
        &["binary", "k", "largest", "match", "metric", "total", "width"],
        &["threshold"],
        0,
    ),
];

pub fn lookup(dialect: &str, name: &str) -> Option<&'static OpSig> {
    OPS.iter().find(|s| s.dialect == dialect && s.name == name)
}

pub fn is_dialect(dialect: &str) -> bool {
    OPS.iter().any(|s| s.dialect == dialect)
}

pub fn is_terminator(dialect: &str, name: &str) -> bool {
    lookup(dialect, name).is_some_and(|s| s.terminator)
}

/// The terminator expected at the end of regions owned by `dialect.name`.
pub fn region_terminator(dialect: &str, name: &str) -> Option<&'static str> {
    match (dialect, name) {
        ("cim", "execute") => Some("cim.yield"),
        ("plumb", "for") | ("plumb", "when") => Some("plumb.yield"),
        _ => None,
    }
}
