use std::collections::{BTreeMap, HashMap, HashSet};

use super::cells::{MatchResult, Subarray};
use super::metrics::{Counters, Metrics, StepStat, TraceEvent};
use super::ops::{self, FinalizeAttrs};
use super::tensor::Tensor;
use super::SimError;
use crate::arch::{search_latency, TechParams};
use crate::cam::{Device, MatchType, SearchMetric, SearchSpec};
use crate::frontend::TensorOpKind;
use crate::ir::{Function, Operation, Region, TensorType, ValueId};
use crate::score::{finish, Metric};

#[derive(Debug, Clone)]
enum Value {
    Tensor(Tensor),
    Index(i64),
    Cim,
    /// Hierarchy unit: path entries past `depth` are unused.
    Unit { depth: usize, path: [usize; 4] },
    Matches(MatchResult),
}

const LEVELS: [&str; 4] = ["bank", "mat", "array", "subarray"];

fn handle_name(path: &[usize]) -> String {
    let tags = ['b', 'm', 'a', 's'];
    path.iter()
        .zip(tags)
        .map(|(i, t)| format!("{t}{i}"))
        .collect::<Vec<_>>()
        .join(".")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Schedule {
    Parallel,
    Sequential,
    Grouped(usize),
}

pub(crate) struct Machine<'a> {
    f: &'a Function,
    tech: &'a TechParams,
    trace: bool,
    env: HashMap<ValueId, Value>,
    bank_geometry: HashMap<usize, (Device, usize, usize)>,
    cells: HashMap<[usize; 4], Subarray>,
    /// Units whose peripherals were charged since their last write.
    active: HashSet<(usize, [usize; 4])>,
    written: HashSet<[usize; 4]>,
    counters: Counters,
    steps: BTreeMap<u64, StepStat>,
    pub events: Vec<TraceEvent>,
}

type Res<T> = Result<T, SimError>;

fn fail<T>(op: &Operation, msg: impl Into<String>) -> Res<T> {
    Err(SimError::Exec {
        op: op.full_name(),
        message: msg.into(),
    })
}

impl<'a> Machine<'a> {
    pub(crate) fn new(f: &'a Function, tech: &'a TechParams, trace: bool) -> Self {
        Machine {
            f,
            tech,
            trace,
            env: HashMap::new(),
            bank_geometry: HashMap::new(),
            cells: HashMap::new(),
            active: HashSet::new(),
            written: HashSet::new(),
            counters: Counters::default(),
            steps: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub(crate) fn run(&mut self, inputs: &[Tensor]) -> Res<Vec<Tensor>> {
        let args = self.f.args().to_vec();
        if args.len() != inputs.len() {
            return Err(SimError::Input(format!(
                "@{} takes {} inputs, got {}",
                self.f.name,
                args.len(),
                inputs.len()
            )));
        }
        for (i, (a, t)) in args.iter().zip(inputs).enumerate() {
            let want = self.f.tensor_ty(*a);
            if want != Some(&t.ty()) {
                let want = want.map_or("a non-tensor".to_string(), |w| w.to_string());
                return Err(SimError::Input(format!("input {i} has type {}, expected {want}", t.ty())));
            }
            self.env.insert(*a, Value::Tensor(t.clone()));
        }
        let (outs, _) = self.region(&self.f.body, Vec::new(), 0)?;
        outs.into_iter()
            .map(|v| match v {
                Value::Tensor(t) => Ok(t),
                other => Err(SimError::Input(format!("function returns a non-tensor value {other:?}"))),
            })
            .collect()
    }

    pub(crate) fn metrics(&self) -> Metrics {
        let banks: HashSet<usize> = self.written.iter().map(|p| p[0]).collect();
        Metrics::compute(self.tech, self.counters, &self.steps, self.written.len(), banks.len())
    }

    /// Run `region` from step `start`; returns the terminator operands and
    /// the step after the region's last timed event.
    fn region(&mut self, region: &'a Region, args: Vec<Value>, start: u64) -> Res<(Vec<Value>, u64)> {
        for (id, v) in region.args.iter().zip(args) {
            self.env.insert(*id, v);
        }
        let mut cur = start;
        for op in &region.ops {
            if matches!(op.full_name().as_str(), "func.return" | "cim.yield" | "plumb.yield") {
                let outs = op.operands.iter().map(|v| self.get(op, *v)).collect::<Res<_>>()?;
                return Ok((outs, cur));
            }
            cur = self.exec(op, cur)?;
        }
        Ok((Vec::new(), cur))
    }

    fn get(&self, op: &Operation, v: ValueId) -> Res<Value> {
        match self.env.get(&v) {
            Some(x) => Ok(x.clone()),
            None => fail(op, format!("%{} has no value", v.0)),
        }
    }

    fn tensor(&self, op: &Operation, i: usize) -> Res<Tensor> {
        match self.get(op, op.operands[i])? {
            Value::Tensor(t) => Ok(t),
            _ => fail(op, format!("operand {i} is not a tensor")),
        }
    }

    fn index(&self, op: &Operation, i: usize) -> Res<i64> {
        match self.get(op, op.operands[i])? {
            Value::Index(x) => Ok(x),
            _ => fail(op, format!("operand {i} is not an index")),
        }
    }

    fn usize_index(&self, op: &Operation, i: usize) -> Res<usize> {
        let x = self.index(op, i)?;
        usize::try_from(x).or_else(|_| fail(op, format!("negative index {x}")))
    }

    fn attr(&self, op: &Operation, key: &str) -> Res<i64> {
        op.int_attr(key)
            .map_or_else(|| fail(op, format!("missing attribute '{key}'")), Ok)
    }

    fn result_types(&self, op: &Operation) -> Res<Vec<TensorType>> {
        op.results
            .iter()
            .map(|r| {
                self.f
                    .tensor_ty(*r)
                    .cloned()
                    .map_or_else(|| fail(op, "result is not a tensor"), Ok)
            })
            .collect()
    }

    fn set_results(&mut self, op: &Operation, values: Vec<Value>) {
        for (r, v) in op.results.iter().zip(values) {
            self.env.insert(*r, v);
        }
    }

    fn set_tensors(&mut self, op: &Operation, ts: Vec<Tensor>) {
        self.set_results(op, ts.into_iter().map(Value::Tensor).collect());
    }

    fn metric(&self, op: &Operation) -> Res<Metric> {
        Metric::parse(op.str_attr("metric").unwrap_or(""))
            .map_or_else(|| fail(op, "unknown metric"), Ok)
    }

    fn exec(&mut self, op: &'a Operation, cur: u64) -> Res<u64> {
        match op.dialect.as_str() {
            "tensor" => self.exec_tensor(op).map(|_| cur),
            "cim" => self.exec_cim(op, cur),
            "plumb" => self.exec_plumb(op, cur),
            "cam" => self.exec_cam(op, cur),
            _ => fail(op, "unsupported op"),
        }
    }

    fn exec_tensor(&mut self, op: &Operation) -> Res<()> {
        let tys = self.result_types(op)?;
        if op.name == "reshape" {
            let mut t = self.tensor(op, 0)?;
            t.shape = tys[0].shape.clone();
            self.set_tensors(op, vec![t]);
            return Ok(());
        }
        let kind = match TensorOpKind::from_op(op) {
            Some(Ok(k)) => k,
            Some(Err(e)) => return fail(op, e),
            None => return fail(op, "unsupported op"),
        };
        let a = self.tensor(op, 0)?;
        let out = match kind {
            TensorOpKind::Transpose => vec![ops::transpose(&a, &tys[0])],
            TensorOpKind::Matmul => vec![ops::matmul(&a, &self.tensor(op, 1)?, &tys[0])],
            TensorOpKind::Sub => vec![ops::sub(&a, &self.tensor(op, 1)?, &tys[0])],
            TensorOpKind::Div => {
                let ds = (1..op.operands.len()).map(|i| self.tensor(op, i)).collect::<Res<Vec<_>>>()?;
                let refs: Vec<&Tensor> = ds.iter().collect();
                vec![ops::div(&a, &refs, &tys[0])]
            }
            TensorOpKind::Norm { p, dim } => vec![ops::norm(&a, p, dim, &tys[0])],
            TensorOpKind::Topk { k, dim, largest } => {
                let (v, i) = ops::topk(&a, k, dim, largest, &tys);
                vec![v, i]
            }
        };
        self.set_tensors(op, out);
        Ok(())
    }

    fn exec_cim(&mut self, op: &'a Operation, cur: u64) -> Res<u64> {
        match op.name.as_str() {
            "acquire" => self.set_results(op, vec![Value::Cim]),
            "release" => {}
            "execute" => {
                let (outs, end) = self.region(&op.regions[0], Vec::new(), cur)?;
                self.set_results(op, outs);
                return Ok(end);
            }
            "similarity" => {
                let (s, q) = (self.tensor(op, 0)?, self.tensor(op, 1)?);
                if s.floats().is_some() || q.floats().is_some() {
                    return fail(op, "similarity needs integer data");
                }
                let metric = self.metric(op)?;
                let out = if op.int_attr("partial").unwrap_or(0) != 0 {
                    vec![ops::similarity_partial(&s, &q, metric)]
                } else {
                    let k = op.int_attr("k").unwrap_or(0).max(0) as usize;
                    let largest = op.int_attr("largest").unwrap_or(1) != 0;
                    ops::similarity(&s, &q, metric, k, largest, &self.result_types(op)?)
                };
                self.set_tensors(op, out);
            }
            "finalize" => {
                let raw = self.tensor(op, 0)?;
                let rt = self.usize_index(op, 1)?;
                let a = FinalizeAttrs {
                    metric: self.metric(op)?,
                    binary: self.attr(op, "binary")? != 0,
                    k: self.attr(op, "k")?.max(0) as usize,
                    largest: self.attr(op, "largest")? != 0,
                    rows: self.attr(op, "rows")? as usize,
                    total: self.attr(op, "total")? as usize,
                    width: self.attr(op, "width")? as usize,
                };
                let out = ops::finalize(&raw, rt, &a, &self.result_types(op)?);
                self.set_tensors(op, out);
            }
            "init_partial" => {
                let tys = self.result_types(op)?;
                let mut out: Vec<Tensor> = tys.iter().map(|t| Tensor::zeros(t.shape.clone(), t.elem)).collect();
                if let Some(idx) = out.get_mut(1) {
                    *idx = Tensor::from_numbers(&tys[1], vec![-1.0; tys[1].num_elements()]);
                }
                self.set_tensors(op, out);
            }
            "merge_partial" => {
                let out = match op.str_attr("kind").unwrap_or("") {
                    "sum-cols" => vec![ops::sum_cols(&self.tensor(op, 0)?, &self.tensor(op, 1)?)],
                    kind @ ("topk-max" | "topk-min") => ops::merge_topk(
                        &self.tensor(op, 0)?,
                        &self.tensor(op, 1)?,
                        &self.tensor(op, 2)?,
                        &self.tensor(op, 3)?,
                        kind == "topk-max",
                    ),
                    "concat" => vec![ops::concat(
                        &self.tensor(op, 0)?,
                        &self.tensor(op, 1)?,
                        self.usize_index(op, 2)?,
                    )],
                    other => return fail(op, format!("unknown merge kind '{other}'")),
                };
                self.set_tensors(op, out);
            }
            _ => return fail(op, "unsupported op"),
        }
        Ok(cur)
    }

    fn exec_plumb(&mut self, op: &'a Operation, cur: u64) -> Res<u64> {
        match op.name.as_str() {
            "const" => {
                let v = self.attr(op, "value")?;
                self.set_results(op, vec![Value::Index(v)]);
            }
            "affine" => {
                let coeffs = op.attr("coeffs").and_then(|a| a.as_int_list()).unwrap_or(&[]).to_vec();
                let mut v = self.attr(op, "constant")?;
                for (i, c) in coeffs.iter().enumerate() {
                    v += c * self.index(op, i)?;
                }
                self.set_results(op, vec![Value::Index(v)]);
            }
            "divmod" => {
                let (x, d) = (self.index(op, 0)?, self.attr(op, "divisor")?);
                if d <= 0 {
                    return fail(op, "divisor must be positive");
                }
                self.set_results(op, vec![Value::Index(x / d), Value::Index(x % d)]);
            }
            "extent" => {
                let i = self.index(op, 0)?;
                let (tile, total) = (self.attr(op, "tile")?, self.attr(op, "total")?);
                let e = tile.min(total - i * tile).max(0);
                self.set_results(op, vec![Value::Index(e)]);
            }
            "slice" => {
                let a = self.tensor(op, 0)?;
                let (rt, ct) = (self.usize_index(op, 1)?, self.usize_index(op, 2)?);
                let (rows, cols) = (self.attr(op, "rows")? as usize, self.attr(op, "cols")? as usize);
                if a.shape.len() != 2 {
                    return fail(op, "slice needs a rank-2 tensor");
                }
                self.set_tensors(op, vec![ops::slice(&a, rt, ct, rows, cols)]);
            }
            "when" => {
                let x = self.index(op, 0)?;
                let carried = op.operands[1..].iter().map(|v| self.get(op, *v)).collect::<Res<Vec<_>>>()?;
                if x < self.attr(op, "lt")? {
                    let (outs, end) = self.region(&op.regions[0], carried, cur)?;
                    self.set_results(op, outs);
                    return Ok(end);
                }
                self.set_results(op, carried);
            }
            "for" => return self.exec_for(op, cur),
            _ => return fail(op, "unsupported op"),
        }
        Ok(cur)
    }

    fn exec_for(&mut self, op: &'a Operation, start: u64) -> Res<u64> {
        let (lo, hi, step) = (self.attr(op, "lower")?, self.attr(op, "upper")?, self.attr(op, "step")?);
        if step <= 0 {
            return fail(op, "loop step must be positive");
        }
        let schedule = match (op.str_attr("schedule"), op.str_attr("level")) {
            (None, Some(level)) => return fail(op, format!("schedule attribute missing on {level} loop")),
            (None, None) | (Some("sequential"), _) => Schedule::Sequential,
            (Some("parallel"), _) => Schedule::Parallel,
            (Some("grouped"), _) => {
                let g = op.int_attr("group").unwrap_or(0);
                if g < 1 {
                    return fail(op, "grouped schedule needs a positive group");
                }
                Schedule::Grouped(g as usize)
            }
            (Some(other), _) => return fail(op, format!("unknown schedule '{other}'")),
        };
        let mut carried = op.operands.iter().map(|v| self.get(op, *v)).collect::<Res<Vec<_>>>()?;
        let (mut group_start, mut end) = (start, start);
        let mut iv = lo;
        let mut n = 0usize;
        while iv < hi {
            let begin = match schedule {
                Schedule::Parallel => start,
                Schedule::Sequential => end,
                Schedule::Grouped(g) => {
                    if n.is_multiple_of(g) {
                        group_start = end;
                    }
                    group_start
                }
            };
            let mut args = vec![Value::Index(iv)];
            args.append(&mut carried);
            let (outs, e) = self.region(&op.regions[0], args, begin)?;
            carried = outs;
            end = end.max(e);
            iv += step;
            n += 1;
        }
        self.set_results(op, carried);
        Ok(end)
    }

    fn unit(&self, op: &Operation, i: usize) -> Res<(usize, [usize; 4])> {
        match self.get(op, op.operands[i])? {
            Value::Unit { depth, path } => Ok((depth, path)),
            _ => fail(op, format!("operand {i} is not a hierarchy handle")),
        }
    }

    fn event(&mut self, step: u64, ev: TraceEvent) {
        let s = self.steps.entry(step).or_default();
        s.latency_ns = s.latency_ns.max(ev.latency_ns);
        s.energy_pj += ev.energy_pj;
        match ev.op {
            "search" => s.searches = true,
            "write" => s.writes = true,
            _ => {}
        }
        if self.trace {
            self.events.push(ev);
        }
    }

    fn exec_cam(&mut self, op: &'a Operation, cur: u64) -> Res<u64> {
        let name = op.name.as_str();
        match name {
            "alloc_bank" => {
                let idx = if op.operands.is_empty() { 0 } else { self.usize_index(op, 0)? };
                let device = Device::parse(op.str_attr("device").unwrap_or(""))
                    .map_or_else(|| fail(op, "unknown device"), Ok)?;
                let (rows, cols) = (self.attr(op, "rows")? as usize, self.attr(op, "cols")? as usize);
                if rows == 0 || cols == 0 {
                    return fail(op, "bank geometry must be positive");
                }
                self.bank_geometry.insert(idx, (device, rows, cols));
                self.set_results(op, vec![Value::Unit { depth: 1, path: [idx, 0, 0, 0] }]);
            }
            "alloc_mat" | "alloc_array" | "alloc_subarray" => {
                let (depth, mut path) = self.unit(op, 0)?;
                let want = match name {
                    "alloc_mat" => 1,
                    "alloc_array" => 2,
                    _ => 3,
                };
                if depth != want {
                    return fail(op, format!("parent handle is a {}", LEVELS[depth - 1]));
                }
                path[depth] = if op.operands.len() > 1 { self.usize_index(op, 1)? } else { 0 };
                self.set_results(op, vec![Value::Unit { depth: depth + 1, path }]);
            }
            "alloc_buffer" => {
                let ty = &self.result_types(op)?[0];
                self.set_tensors(op, vec![Tensor::zeros(ty.shape.clone(), ty.elem)]);
            }
            "write_value" => {
                let path = self.subarray_path(op)?;
                let data = self.tensor(op, 1)?;
                let (off, rows) = (self.usize_index(op, 2)?, self.usize_index(op, 3)?);
                let sub = self.subarray(op, path)?;
                let cols = sub.cols;
                if data.shape.len() != 2 || data.shape[1] != cols || rows > data.shape[0] {
                    return fail(op, format!("data {} does not fit {rows} rows of {cols} columns", data.ty()));
                }
                if data.floats().is_some() {
                    return fail(op, "cells hold integer data");
                }
                sub.write(off, &data.ints()[..rows * cols]).or_else(|e| fail(op, e))?;
                self.written.insert(path);
                for d in 1..=3 {
                    let mut p = [0; 4];
                    p[..d].copy_from_slice(&path[..d]);
                    self.active.remove(&(d, p));
                }
                let cells = (rows * cols) as u64;
                self.counters.writes += 1;
                self.counters.write_cells += cells;
                let ev = TraceEvent {
                    step: cur,
                    level: "subarray",
                    handle: handle_name(&path),
                    op: "write",
                    rows_active: rows,
                    latency_ns: self.tech.write_latency_ns,
                    energy_pj: cells as f64 * self.tech.write_energy_pj_per_cell,
                };
                self.event(cur, ev);
                return Ok(cur + 1);
            }
            "search" => {
                let path = self.subarray_path(op)?;
                let q = self.tensor(op, 1)?;
                let (off, rows) = (self.usize_index(op, 2)?, self.usize_index(op, 3)?);
                let spec = SearchSpec {
                    match_type: MatchType::parse(op.str_attr("match").unwrap_or(""))
                        .map_or_else(|| fail(op, "unknown match type"), Ok)?,
                    metric: SearchMetric::parse(op.str_attr("metric").unwrap_or(""))
                        .map_or_else(|| fail(op, "unknown search metric"), Ok)?,
                    threshold: op.int_attr("threshold"),
                };
                let Some(sub) = self.cells.get(&path) else {
                    return fail(op, format!("search of unwritten subarray {}", handle_name(&path)));
                };
                if q.floats().is_some() {
                    return fail(op, "query must be integer data");
                }
                let found = sub.search(q.ints(), off, rows, &spec).or_else(|e| fail(op, e))?;
                let (device, r, c) = (sub.device, sub.rows, sub.cols);
                self.set_results(op, vec![Value::Matches(found)]);
                let cells = (rows * c) as u64;
                let cell_energy = if device.multi_bit() {
                    self.counters.search_cells_scaled += cells;
                    cells as f64 * self.tech.search_energy_pj_per_cell * self.tech.ml_voltage_scale
                } else {
                    self.counters.search_cells += cells;
                    cells as f64 * self.tech.search_energy_pj_per_cell
                };
                self.counters.searches += 1;
                let latency = self.search_latency(r, c);
                let pe = self.tech.peripheral_energy_pj;
                let ev = TraceEvent {
                    step: cur,
                    level: "subarray",
                    handle: handle_name(&path),
                    op: "search",
                    rows_active: rows,
                    latency_ns: latency,
                    energy_pj: cell_energy + pe.subarray,
                };
                self.event(cur, ev);
                for d in (1..=3).rev() {
                    let mut p = [0; 4];
                    p[..d].copy_from_slice(&path[..d]);
                    if !self.active.insert((d, p)) {
                        continue;
                    }
                    let energy = match d {
                        3 => {
                            self.counters.array_activations += 1;
                            pe.array
                        }
                        2 => {
                            self.counters.mat_activations += 1;
                            pe.mat
                        }
                        _ => {
                            self.counters.bank_activations += 1;
                            pe.bank
                        }
                    };
                    let ev = TraceEvent {
                        step: cur,
                        level: LEVELS[d - 1],
                        handle: handle_name(&path[..d]),
                        op: "activate",
                        rows_active: 0,
                        latency_ns: 0.0,
                        energy_pj: energy,
                    };
                    self.event(cur, ev);
                }
                return Ok(cur + 1);
            }
            "merge_partial" => {
                if op.str_attr("kind") != Some("sum-cols") {
                    return fail(op, "cam merges support sum-cols only");
                }
                let mut acc = self.tensor(op, 0)?;
                let Value::Matches(m) = self.get(op, op.operands[1])? else {
                    return fail(op, "operand 1 is not a match result");
                };
                let base = self.usize_index(op, 2)?;
                if let super::tensor::Data::Int(v) = &mut acc.data {
                    for (i, d) in m.distances.iter().enumerate() {
                        if let Some(x) = v.get_mut(base + i) {
                            *x += d;
                        }
                    }
                }
                self.counters.host_merges += 1;
                self.set_tensors(op, vec![acc]);
            }
            "read_value" => {
                let acc = self.tensor(op, 0)?;
                let out = self.read_value(op, &acc)?;
                self.set_tensors(op, out);
            }
            _ => return fail(op, "unsupported op"),
        }
        Ok(cur)
    }

    fn subarray_path(&self, op: &Operation) -> Res<[usize; 4]> {
        match self.unit(op, 0)? {
            (4, path) => Ok(path),
            (d, _) => fail(op, format!("expected a subarray handle, got a {}", LEVELS[d - 1])),
        }
    }

    /// The cell array at `path`, created with its bank's geometry.
    fn subarray(&mut self, op: &Operation, path: [usize; 4]) -> Res<&mut Subarray> {
        let Some(&(device, rows, cols)) = self.bank_geometry.get(&path[0]) else {
            return fail(op, format!("bank {} was never allocated", path[0]));
        };
        let sub = self
            .cells
            .entry(path)
            .or_insert_with(|| Subarray::new(device, rows, cols));
        if (sub.device, sub.rows, sub.cols) != (device, rows, cols) {
            *sub = Subarray::new(device, rows, cols);
        }
        Ok(sub)
    }

    /// Table lookup with the column count clamped to the table's range.
    fn search_latency(&self, rows: usize, cols: usize) -> f64 {
        let c = cols.clamp(16, 256) as u32;
        search_latency(self.tech, rows as u32, c).unwrap_or(0.0)
    }

    fn read_value(&self, op: &Operation, acc: &Tensor) -> Res<Vec<Tensor>> {
        let metric = self.metric(op)?;
        let binary = self.attr(op, "binary")? != 0;
        let k = self.attr(op, "k")?.max(0) as usize;
        let largest = self.attr(op, "largest")? != 0;
        let total = self.attr(op, "total")? as usize;
        let width = self.attr(op, "width")? as usize;
        let raws = acc.ints();
        if raws.len() < total {
            return fail(op, "accumulator shorter than the entry count");
        }
        let keep: Box<dyn Fn(i64) -> bool> = match op.str_attr("match").unwrap_or("best") {
            "best" => Box::new(|_| true),
            "exact" => Box::new(|d| d == 0),
            "threshold" => {
                let t = self.attr(op, "threshold")?;
                Box::new(move |d| d <= t)
            }
            other => return fail(op, format!("unknown match type '{other}'")),
        };
        let tys = self.result_types(op)?;
        let score = |i: usize| finish(raws[i], metric, binary, width);
        if k == 0 {
            let vals = (0..total).map(score).collect();
            return Ok(vec![Tensor::from_numbers(&tys[0], vals)]);
        }
        let cands = (0..total)
            .filter(|&i| keep(raws[i]))
            .map(|i| (score(i), i as i64))
            .collect();
        Ok(ops::pair_tensors(&ops::select(cands, k, largest), &tys))
    }
}
