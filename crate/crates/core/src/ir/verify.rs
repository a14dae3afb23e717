use std::collections::{HashMap, HashSet};
use std::fmt;

use super::registry::{self, Arity};
use super::types::{HandleKind, TensorType, Type};
use super::{Function, Module, Operation, Region, ValueId};
use crate::frontend::{infer_shapes, TensorOpKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Location such as `@hdc/op[2]/region[0]/op[1] (tensor.matmul)`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Check structural, dominance, signature and typing rules. Empty result
/// means the module is well formed.
pub fn verify(m: &Module) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut names = HashSet::new();
    for f in &m.functions {
        if !names.insert(f.name.as_str()) {
            diags.push(Diagnostic {
                path: format!("@{}", f.name),
                message: format!("duplicate function name '{}'", f.name),
            });
        }
        FnVerifier::new(f, &mut diags).run();
    }
    diags
}

struct FnVerifier<'a> {
    f: &'a Function,
    diags: &'a mut Vec<Diagnostic>,
    defs: HashMap<ValueId, &'a Operation>,
    defined_once: HashSet<ValueId>,
}

fn arity_ok(a: Arity, n: usize) -> bool {
    n >= a.0 && a.1.is_none_or(|max| n <= max)
}

fn arity_str(a: Arity) -> String {
    match a {
        (lo, Some(hi)) if lo == hi => lo.to_string(),
        (lo, Some(hi)) => format!("{lo} to {hi}"),
        (lo, None) => format!("at least {lo}"),
    }
}

impl<'a> FnVerifier<'a> {
    fn new(f: &'a Function, diags: &'a mut Vec<Diagnostic>) -> Self {
        let mut defs = HashMap::new();
        f.body.walk(&mut |op| {
            for r in &op.results {
                defs.insert(*r, op);
            }
        });
        FnVerifier {
            f,
            diags,
            defs,
            defined_once: HashSet::new(),
        }
    }

    fn diag(&mut self, path: &str, msg: impl Into<String>) {
        self.diags.push(Diagnostic {
            path: path.to_string(),
            message: msg.into(),
        });
    }

    fn run(&mut self) {
        let f = self.f;
        let root = format!("@{}", f.name);
        let mut visible: Vec<ValueId> = Vec::new();
        self.region(&f.body, &root, &mut visible, None);
        match f.body.ops.last() {
            Some(op) if op.is("func", "return") => {
                let got: Vec<Type> = op.operands.iter().filter_map(|v| f.try_ty(*v).cloned()).collect();
                if got != f.result_types {
                    self.diag(&root, "func.return operand types do not match the function result types");
                }
            }
            _ => self.diag(&root, "function body must end with func.return"),
        }
        self.handle_discipline(&root);
    }

    fn define(&mut self, v: ValueId, path: &str) {
        if self.f.try_ty(v).is_none() {
            self.diag(path, format!("value %{} has no type", v.0));
        }
        if !self.defined_once.insert(v) {
            self.diag(path, format!("value %{} defined more than once", v.0));
        }
    }

    fn region(
        &mut self,
        r: &'a Region,
        path: &str,
        visible: &mut Vec<ValueId>,
        owner: Option<&Operation>,
    ) {
        let mark = visible.len();
        for a in &r.args {
            self.define(*a, path);
            visible.push(*a);
        }
        let expected_term = owner.and_then(|o| registry::region_terminator(&o.dialect, &o.name));
        for (i, op) in r.ops.iter().enumerate() {
            let op_path = format!("{path}/op[{i}] ({})", op.full_name());
            let is_last = i + 1 == r.ops.len();
            if let Some(sig) = registry::lookup(&op.dialect, &op.name) {
                if sig.terminator {
                    let ok = if !is_last {
                        false
                    } else if let Some(t) = expected_term {
                        op.full_name() == t
                    } else {
                        owner.is_none() && op.is("func", "return")
                    };
                    if !ok {
                        self.diag(&op_path, "terminator in an invalid position");
                    }
                }
            }
            for u in &op.operands {
                if !visible.contains(u) {
                    self.diag(&op_path, format!("use before def of %{}", u.0));
                }
            }
            self.check_op(op, &op_path);
            for (ri, inner) in op.regions.iter().enumerate() {
                self.region(inner, &format!("{op_path}/region[{ri}]"), visible, Some(op));
            }
            for res in &op.results {
                self.define(*res, &op_path);
                visible.push(*res);
            }
        }
        if let Some(t) = expected_term {
            if r.ops.last().map(|o| o.full_name()).as_deref() != Some(t) {
                self.diag(path, format!("region must end with {t}"));
            }
        }
        visible.truncate(mark);
    }

    fn tensor(&self, v: ValueId) -> Option<&'a TensorType> {
        self.f.try_ty(v).and_then(Type::as_tensor)
    }

    fn is_index(&self, v: ValueId) -> bool {
        matches!(self.f.try_ty(v), Some(Type::Index))
    }

    fn types(&self, vs: &[ValueId]) -> Vec<Type> {
        vs.iter().filter_map(|v| self.f.try_ty(*v).cloned()).collect()
    }

    /// Column count of the subarray behind a handle, following alloc ops up
    /// to the bank that declares the geometry.
    fn subarray_geometry(&self, mut v: ValueId) -> Option<(i64, i64)> {
        loop {
            let op = self.defs.get(&v)?;
            if op.is("cam", "alloc_bank") {
                return Some((op.int_attr("rows")?, op.int_attr("cols")?));
            }
            if op.dialect == "cam" && op.name.starts_with("alloc_") {
                v = *op.operands.first()?;
            } else {
                return None;
            }
        }
    }

    fn check_op(&mut self, op: &'a Operation, path: &str) {
        let Some(sig) = registry::lookup(&op.dialect, &op.name) else {
            if registry::is_dialect(&op.dialect) {
                self.diag(path, format!("unregistered op '{}'", op.full_name()));
            } else {
                self.diag(path, format!("unknown dialect '{}'", op.dialect));
            }
            return;
        };
        if !arity_ok(sig.operands, op.operands.len()) {
            self.diag(
                path,
                format!(
                    "{} expects {} operands, got {}",
                    op.name,
                    arity_str(sig.operands),
                    op.operands.len()
                ),
            );
            return;
        }
        if !arity_ok(sig.results, op.results.len()) {
            self.diag(
                path,
                format!(
                    "{} expects {} results, got {}",
                    op.name,
                    arity_str(sig.results),
                    op.results.len()
                ),
            );
            return;
        }
        for k in sig.required_attrs {
            if !op.attrs.contains_key(*k) {
                self.diag(path, format!("missing attribute '{k}'"));
            }
        }
        for k in op.attrs.keys() {
            if !sig.required_attrs.contains(&k.as_str()) && !sig.optional_attrs.contains(&k.as_str())
            {
                self.diag(path, format!("unexpected attribute '{k}'"));
            }
        }
        if op.regions.len() != sig.regions {
            self.diag(
                path,
                format!("expected {} regions, found {}", sig.regions, op.regions.len()),
            );
            return;
        }
        let msgs = self.semantic(op);
        for m in msgs {
            self.diag(path, m);
        }
    }

    fn semantic(&self, op: &'a Operation) -> Vec<String> {
        let mut errs = Vec::new();
        let f = self.f;
        let res_types = self.types(&op.results);
        let expect_results = |want: Vec<Type>, errs: &mut Vec<String>| {
            if res_types != want {
                errs.push(format!(
                    "result types {} do not match expected {}",
                    fmt_types(&res_types),
                    fmt_types(&want)
                ));
            }
        };
        match (op.dialect.as_str(), op.name.as_str()) {
            ("tensor", "reshape") => {
                match (self.tensor(op.operands[0]), res_types[0].as_tensor()) {
                    (Some(a), Some(b)) if a.num_elements() == b.num_elements() && a.elem == b.elem => {}
                    _ => errs.push("reshape must preserve element count and type".into()),
                }
            }
            ("tensor", _) => match TensorOpKind::from_op(op) {
                Some(Ok(kind)) => {
                    let operands: Option<Vec<TensorType>> =
                        op.operands.iter().map(|v| self.tensor(*v).cloned()).collect();
                    match operands {
                        None => errs.push("tensor ops take tensor operands".into()),
                        Some(ts) => match infer_shapes(kind, &ts) {
                            Ok(out) => {
                                expect_results(out.into_iter().map(Type::Tensor).collect(), &mut errs)
                            }
                            Err(e) => errs.push(e.0),
                        },
                    }
                }
                Some(Err(e)) => errs.push(e),
                None => errs.push(format!("unregistered op 'tensor.{}'", op.name)),
            },
            ("func", "return") | ("cim", "yield") | ("plumb", "yield") => {}
            ("cim", "acquire") => expect_results(vec![Type::Handle(HandleKind::CimDevice)], &mut errs),
            ("cim", "release") => {
                if !f.ty(op.operands[0]).is_handle(HandleKind::CimDevice) {
                    errs.push("cim.release expects a !cim.handle".into());
                }
            }
            ("cim", "execute") => {
                if !f.ty(op.operands[0]).is_handle(HandleKind::CimDevice) {
                    errs.push("cim.execute expects a !cim.handle".into());
                }
                if let Some(t) = op.regions[0].terminator() {
                    expect_results(self.types(&t.operands), &mut errs);
                }
                if !op.regions[0].args.is_empty() {
                    errs.push("cim.execute regions take no block arguments".into());
                }
            }
            ("cim", "similarity") => self.check_similarity(op, &mut errs),
            ("cim", "finalize") => {
                let k = op.int_attr("k").unwrap_or(-1);
                let want = if k > 0 { 2 } else { 1 };
                if op.results.len() != want {
                    errs.push(format!("finalize with k = {k} yields {want} results"));
                }
                if !self.is_index(op.operands[1]) {
                    errs.push("finalize expects a row-tile index".into());
                }
            }
            ("cim", "merge_partial") => {
                let kind = op.str_attr("kind").unwrap_or("");
                let (nops, nres) = match kind {
                    "sum-cols" => (2, 1),
                    "topk-min" | "topk-max" => (4, 2),
                    "concat" => (3, 1),
                    _ => {
                        errs.push(format!("unknown merge kind '{kind}'"));
                        return errs;
                    }
                };
                if op.operands.len() != nops || op.results.len() != nres {
                    errs.push(format!("merge_partial kind '{kind}' takes {nops} operands and yields {nres} results"));
                } else if kind == "concat" && !self.is_index(op.operands[2]) {
                    errs.push("concat merge expects a row-tile index".into());
                }
            }
            ("cim", "init_partial") => {
                let kind = op.str_attr("kind").unwrap_or("");
                let want = match kind {
                    "topk-min" | "topk-max" => 2,
                    "concat" => 1,
                    _ => {
                        errs.push(format!("unknown init kind '{kind}'"));
                        return errs;
                    }
                };
                if op.results.len() != want {
                    errs.push(format!("init_partial kind '{kind}' yields {want} results"));
                }
            }
            ("plumb", "for") => {
                let lower = op.int_attr("lower").unwrap_or(0);
                let upper = op.int_attr("upper").unwrap_or(0);
                let step = op.int_attr("step").unwrap_or(0);
                if step < 1 || upper < lower {
                    errs.push("plumb.for needs step >= 1 and upper >= lower".into());
                }
                match op.str_attr("schedule") {
                    None | Some("parallel") | Some("sequential") => {}
                    Some("grouped") => {
                        if op.int_attr("group").unwrap_or(0) < 1 {
                            errs.push("grouped schedule needs group >= 1".into());
                        }
                    }
                    Some(s) => errs.push(format!("unknown schedule '{s}'")),
                }
                let region = &op.regions[0];
                let carried = self.types(&op.operands);
                let mut want_args = vec![Type::Index];
                want_args.extend(carried.iter().cloned());
                if self.types(&region.args) != want_args {
                    errs.push("plumb.for block arguments must be (index, carried values...)".into());
                }
                expect_results(carried.clone(), &mut errs);
                if let Some(t) = region.terminator() {
                    if self.types(&t.operands) != carried {
                        errs.push("plumb.yield types must match carried values".into());
                    }
                }
            }
            ("plumb", "when") => {
                if !self.is_index(op.operands[0]) {
                    errs.push("plumb.when expects an index condition operand".into());
                }
                let carried = self.types(&op.operands[1..]);
                if self.types(&op.regions[0].args) != carried {
                    errs.push("plumb.when block arguments must match carried values".into());
                }
                expect_results(carried.clone(), &mut errs);
                if let Some(t) = op.regions[0].terminator() {
                    if self.types(&t.operands) != carried {
                        errs.push("plumb.yield types must match carried values".into());
                    }
                }
            }
            ("plumb", "const") | ("plumb", "extent") => expect_results(vec![Type::Index], &mut errs),
            ("plumb", "affine") => {
                let n = op.attr("coeffs").and_then(|a| a.as_int_list()).map(|c| c.len());
                if n != Some(op.operands.len()) {
                    errs.push("affine needs one coefficient per operand".into());
                }
                if !op.operands.iter().all(|v| self.is_index(*v)) {
                    errs.push("affine operands must be indices".into());
                }
                expect_results(vec![Type::Index], &mut errs);
            }
            ("plumb", "divmod") => {
                if op.int_attr("divisor").unwrap_or(0) < 1 {
                    errs.push("divmod divisor must be >= 1".into());
                }
                expect_results(vec![Type::Index, Type::Index], &mut errs);
            }
            ("plumb", "slice") => {
                let rows = op.int_attr("rows").unwrap_or(0);
                let cols = op.int_attr("cols").unwrap_or(0);
                match self.tensor(op.operands[0]) {
                    Some(src) if src.rank() == 2 && rows >= 1 && cols >= 1 => expect_results(
                        vec![Type::tensor([rows as usize, cols as usize], src.elem)],
                        &mut errs,
                    ),
                    _ => errs.push("slice expects a rank-2 tensor and positive tile sizes".into()),
                }
                if !self.is_index(op.operands[1]) || !self.is_index(op.operands[2]) {
                    errs.push("slice tile coordinates must be indices".into());
                }
            }
            ("cam", "alloc_bank") => {
                match op.str_attr("device") {
                    Some("tcam") | Some("mcam") | Some("acam") => {}
                    d => errs.push(format!("unknown CAM device {d:?}")),
                }
                if op.int_attr("rows").unwrap_or(0) < 1 || op.int_attr("cols").unwrap_or(0) < 1 {
                    errs.push("alloc_bank needs positive rows and cols".into());
                }
                expect_results(vec![Type::Handle(HandleKind::Bank)], &mut errs);
            }
            ("cam", "alloc_mat") => self.check_alloc(op, HandleKind::Bank, HandleKind::Mat, &mut errs),
            ("cam", "alloc_array") => self.check_alloc(op, HandleKind::Mat, HandleKind::Array, &mut errs),
            ("cam", "alloc_subarray") => {
                self.check_alloc(op, HandleKind::Array, HandleKind::Subarray, &mut errs)
            }
            ("cam", "alloc_buffer") => {
                let n = op.int_attr("size").unwrap_or(0);
                if n < 1 {
                    errs.push("alloc_buffer size must be >= 1".into());
                } else {
                    expect_results(vec![Type::tensor([1, n as usize], crate::ir::ElemType::I32)], &mut errs);
                }
            }
            ("cam", "write_value") => {
                if !f.ty(op.operands[0]).is_handle(HandleKind::Subarray) {
                    errs.push("write_value expects a !cam.subarray".into());
                }
                match (self.tensor(op.operands[1]), self.subarray_geometry(op.operands[0])) {
                    (Some(t), Some((rows, cols))) => {
                        if t.rank() != 2 || t.shape[1] as i64 != cols || t.shape[0] as i64 > rows {
                            errs.push(format!(
                                "write tile {t} does not fit a {rows}x{cols} subarray"
                            ));
                        }
                    }
                    (None, _) => errs.push("write_value expects a tensor tile".into()),
                    _ => {}
                }
                if !self.is_index(op.operands[2]) || !self.is_index(op.operands[3]) {
                    errs.push("write_value row offset and row count must be indices".into());
                }
            }
            ("cam", "search") => {
                if !f.ty(op.operands[0]).is_handle(HandleKind::Subarray) {
                    errs.push("search expects a !cam.subarray".into());
                }
                match (self.tensor(op.operands[1]), self.subarray_geometry(op.operands[0])) {
                    (Some(q), Some((_, cols))) => {
                        if q.rank() != 2 || q.shape[0] != 1 || q.shape[1] as i64 != cols {
                            errs.push(format!(
                                "query width mismatch: query {q} against {cols} subarray columns"
                            ));
                        }
                    }
                    (None, _) => errs.push("search expects a tensor query".into()),
                    _ => {}
                }
                if !self.is_index(op.operands[2]) || !self.is_index(op.operands[3]) {
                    errs.push("search active-row range must be indices".into());
                }
                let m = op.str_attr("match").unwrap_or("");
                let has_t = op.attrs.contains_key("threshold");
                match m {
                    "exact" | "best" if has_t => {
                        errs.push(format!("{m} match takes no threshold"))
                    }
                    "threshold" if !has_t => errs.push("threshold match requires a threshold".into()),
                    "exact" | "best" | "threshold" => {}
                    _ => errs.push(format!("unknown match type '{m}'")),
                }
                if op.int_attr("threshold").is_some_and(|t| t < 0) {
                    errs.push("threshold must be non-negative".into());
                }
                match op.str_attr("metric") {
                    Some("hamming") | Some("euclidean") => {}
                    m => errs.push(format!("unknown search metric {m:?}")),
                }
                expect_results(vec![Type::Handle(HandleKind::Matches)], &mut errs);
            }
            ("cam", "merge_partial") => {
                if op.str_attr("kind") != Some("sum-cols") {
                    errs.push("cam.merge_partial supports kind 'sum-cols'".into());
                }
                let acc = self.types(&op.operands[..1]);
                if !f.ty(op.operands[1]).is_handle(HandleKind::Matches) || !self.is_index(op.operands[2]) {
                    errs.push("cam.merge_partial takes (buffer, matches, row base)".into());
                }
                expect_results(acc, &mut errs);
            }
            ("cam", "read_value") => {
                let k = op.int_attr("k").unwrap_or(-1);
                let want = if k > 0 { 2 } else { 1 };
                if op.results.len() != want {
                    errs.push(format!("read_value with k = {k} yields {want} results"));
                }
            }
            _ => {}
        }
        errs
    }

    fn check_alloc(&self, op: &Operation, parent: HandleKind, kind: HandleKind, errs: &mut Vec<String>) {
        if !self.f.ty(op.operands[0]).is_handle(parent) {
            errs.push(format!("{} expects a {} parent", op.full_name(), parent.spelling()));
        }
        if op.operands.len() == 2 && !self.is_index(op.operands[1]) {
            errs.push("allocation index must be an index".into());
        }
        if self.types(&op.results) != vec![Type::Handle(kind)] {
            errs.push(format!("{} yields {}", op.full_name(), kind.spelling()));
        }
    }

    fn check_similarity(&self, op: &Operation, errs: &mut Vec<String>) {
        let metric = op.str_attr("metric").unwrap_or("");
        if !matches!(metric, "dot" | "euclidean" | "manhattan") {
            errs.push(format!("unknown similarity metric '{metric}'"));
        }
        let (Some(s), Some(q)) = (self.tensor(op.operands[0]), self.tensor(op.operands[1])) else {
            errs.push("similarity operands must be tensors".into());
            return;
        };
        if s.rank() != 2 || q.rank() != 2 || q.shape[0] != 1 || q.shape[1] != s.shape[1] {
            errs.push(format!("similarity expects NxD stored and 1xD query, got {s} and {q}"));
            return;
        }
        if s.elem != q.elem {
            errs.push("similarity operands must share an element type".into());
        }
        let n = s.shape[0];
        if op.int_attr("partial").unwrap_or(0) != 0 {
            let want = vec![Type::tensor([1, n], crate::ir::ElemType::I32)];
            if self.types(&op.results) != want {
                errs.push("partial similarity yields one 1xN i32 partial-score row".into());
            }
            return;
        }
        let k = op.int_attr("k").unwrap_or(-1);
        if k < 0 || k as usize > n {
            errs.push(format!("similarity k = {k} must lie in [0, {n}]"));
        }
        let want = if k > 0 { 2 } else { 1 };
        if op.results.len() != want {
            errs.push(format!("similarity with k = {k} yields {want} results"));
        }
        if k == 0 && op.str_attr("metric") == Some("dot") {
            if let Some(t) = self.tensor(op.results[0]) {
                if t.shape != [1, n] {
                    errs.push("score-only similarity yields a 1xN row".into());
                }
            }
        }
    }

    /// Every execute uses a handle from an acquire; each acquire is released
    /// exactly once, after all executes on it.
    fn handle_discipline(&mut self, root: &str) {
        let f = self.f;
        let ops = &f.body.ops;
        let mut acquired: HashMap<ValueId, usize> = HashMap::new();
        let mut released: HashMap<ValueId, usize> = HashMap::new();
        let mut last_exec: HashMap<ValueId, usize> = HashMap::new();
        for (i, op) in ops.iter().enumerate() {
            if op.is("cim", "acquire") {
                acquired.insert(op.results[0], i);
            }
        }
        let mut msgs = Vec::new();
        f.body.walk(&mut |op| {
            if op.is("cim", "execute") || op.is("cim", "release") {
                if let Some(h) = op.operands.first() {
                    if !acquired.contains_key(h) {
                        msgs.push(format!("{} on a handle not produced by cim.acquire", op.full_name()));
                    }
                }
            }
        });
        for (i, op) in ops.iter().enumerate() {
            let Some(h) = op.operands.first() else { continue };
            if op.is("cim", "execute") {
                last_exec.insert(*h, i);
            } else if op.is("cim", "release") && released.insert(*h, i).is_some() {
                msgs.push(format!("handle %{} released more than once", h.0));
            }
        }
        for h in acquired.keys() {
            match released.get(h) {
                None => msgs.push(format!("handle %{} is never released", h.0)),
                Some(r) => {
                    if last_exec.get(h).is_some_and(|e| e > r) {
                        msgs.push(format!("handle %{} used after release", h.0));
                    }
                }
            }
        }
        msgs.sort();
        for m in msgs {
            self.diag(root, m);
        }
    }
}

fn fmt_types(ts: &[Type]) -> String {
    format!(
        "({})",
        ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
    )
}
