use std::collections::{HashMap, HashSet};

use super::pattern::{similarity_matching, SimilarityPattern};
use crate::ir::{Attr, Function, Module, Operation, Region, TensorType, Type, ValueId};

/// Merge execute blocks linked by direct dataflow into one block each and,
/// when `rewrite` is set, replace recognized similarity kernels by a single
/// `cim.similarity`.
pub fn fuse_ops(m: &Module, rewrite: bool) -> Module {
    let mut out = m.clone();
    for f in &mut out.functions {
        fuse_function(f);
        if rewrite {
            rewrite_function(f);
        }
    }
    out
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn fuse_function(f: &mut Function) {
    let ops = &f.body.ops;
    let execs: Vec<usize> = (0..ops.len()).filter(|&i| ops[i].is("cim", "execute")).collect();
    if execs.len() < 2 {
        return;
    }
    let mut producer: HashMap<ValueId, usize> = HashMap::new();
    for (e, &i) in execs.iter().enumerate() {
        for r in &ops[i].results {
            producer.insert(*r, e);
        }
    }
    let mut parent: Vec<usize> = (0..execs.len()).collect();
    for (e, &i) in execs.iter().enumerate() {
        let mut deps = Vec::new();
        ops[i].for_each_use(&mut |v| {
            if let Some(&p) = producer.get(&v) {
                deps.push(p);
            }
        });
        for p in deps {
            let (a, b) = (find(&mut parent, p), find(&mut parent, e));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for e in 0..execs.len() {
        let root = find(&mut parent, e);
        groups.entry(root).or_default().push(e);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() > 1).collect();
    groups.sort();

    // Positions are top-level op indices; each group collapses onto its
    // last member.
    let mut plans: Vec<(Vec<usize>, Operation)> = Vec::new();
    for g in groups {
        let members: Vec<usize> = g.iter().map(|&e| execs[e]).collect();
        if let Some(merged) = merge_group(f, &members) {
            plans.push((members, merged));
        }
    }
    if plans.is_empty() {
        return;
    }
    let mut drop_ops: HashSet<usize> = HashSet::new();
    let mut replace_at: HashMap<usize, (Operation, Operation)> = HashMap::new();
    for (members, merged) in plans {
        let ops = &f.body.ops;
        let handles: Vec<ValueId> = members.iter().map(|&i| ops[i].operands[0]).collect();
        for (j, op) in ops.iter().enumerate() {
            let is_release = op.is("cim", "release") && handles.contains(&op.operands[0]);
            let is_extra_acquire = op.is("cim", "acquire") && handles[1..].contains(&op.results[0]);
            if is_release || is_extra_acquire {
                drop_ops.insert(j);
            }
        }
        let last = *members.last().unwrap();
        for &i in &members[..members.len() - 1] {
            drop_ops.insert(i);
        }
        let release = f.build("cim.release", &[handles[0]], vec![], vec![]);
        replace_at.insert(last, (merged, release));
    }
    let ops = std::mem::take(&mut f.body.ops);
    for (j, op) in ops.into_iter().enumerate() {
        if let Some((merged, release)) = replace_at.remove(&j) {
            f.body.ops.push(merged);
            f.body.ops.push(release);
        } else if !drop_ops.contains(&j) {
            f.body.ops.push(op);
        }
    }
}

/// Build the fused execute for a group of top-level execute positions, or
/// `None` when an outside user sits between the members.
fn merge_group(f: &mut Function, members: &[usize]) -> Option<Operation> {
    let ops = &f.body.ops;
    let last = *members.last().unwrap();
    let member_set: HashSet<usize> = members.iter().copied().collect();
    let handles: HashSet<ValueId> = members.iter().map(|&i| ops[i].operands[0]).collect();

    let mut inner_of: HashMap<ValueId, ValueId> = HashMap::new();
    for &i in members {
        let term = ops[i].regions[0].terminator()?;
        for (outer, inner) in ops[i].results.iter().zip(&term.operands) {
            inner_of.insert(*outer, *inner);
        }
    }
    let mut used_outside: HashSet<ValueId> = HashSet::new();
    for (j, op) in ops.iter().enumerate() {
        if member_set.contains(&j) {
            continue;
        }
        if op.is("cim", "release") && handles.contains(&op.operands[0]) {
            continue;
        }
        let mut early = false;
        op.for_each_use(&mut |v| {
            if inner_of.contains_key(&v) {
                used_outside.insert(v);
                if j < last {
                    early = true;
                }
            }
        });
        if early {
            return None;
        }
    }

    let mut body = Vec::new();
    for &i in members {
        let region = &ops[i].regions[0];
        body.extend(region.ops[..region.ops.len() - 1].iter().cloned());
    }
    let mut region = Region { args: vec![], ops: body };
    region.walk_mut(&mut |op| {
        for o in &mut op.operands {
            if let Some(inner) = inner_of.get(o) {
                *o = *inner;
            }
        }
    });
    let mut results = Vec::new();
    for &i in members {
        for r in &ops[i].results {
            if used_outside.contains(r) {
                results.push(*r);
            }
        }
    }
    let yields: Vec<ValueId> = results.iter().map(|r| inner_of[r]).collect();
    let handle = ops[members[0]].operands[0];
    let y = f.build("cim.yield", &yields, vec![], vec![]);
    region.ops.push(y);
    Some(Operation {
        dialect: "cim".into(),
        name: "execute".into(),
        operands: vec![handle],
        results,
        attrs: Default::default(),
        regions: vec![region],
    })
}

struct Rewrite {
    before: Vec<Operation>,
    execute: Operation,
    after: Vec<Operation>,
}

fn rewrite_function(f: &mut Function) {
    let mut i = 0;
    while i < f.body.ops.len() {
        if f.body.ops[i].is("cim", "execute") {
            if let Some(rw) = rewrite_execute(f, i) {
                let n_before = rw.before.len();
                let n_after = rw.after.len();
                let tail: Vec<Operation> = f.body.ops.drain(i..).skip(1).collect();
                f.body.ops.extend(rw.before);
                f.body.ops.push(rw.execute);
                f.body.ops.extend(rw.after);
                f.body.ops.extend(tail);
                i += n_before + n_after;
            }
        }
        i += 1;
    }
}

fn single<'a>(ops: &'a [Operation], name: &str) -> Option<&'a Operation> {
    let mut it = ops.iter().filter(|op| op.is("tensor", name));
    let first = it.next()?;
    it.next().is_none().then_some(first)
}

fn tensor(f: &Function, v: ValueId) -> Option<TensorType> {
    f.tensor_ty(v).cloned()
}

/// `stored` is `N x D` and `query` is `1 x D` of the same element type.
fn fits(f: &Function, stored: ValueId, query: ValueId) -> bool {
    match (tensor(f, stored), tensor(f, query)) {
        (Some(s), Some(q)) => {
            s.rank() == 2 && q.rank() == 2 && q.shape[0] == 1 && q.shape[1] == s.shape[1] && s.elem == q.elem
        }
        _ => false,
    }
}

fn rewrite_execute(f: &mut Function, idx: usize) -> Option<Rewrite> {
    let exec = &f.body.ops[idx];
    let ops = &exec.regions[0].ops;
    let pattern = similarity_matching(ops)?;
    let yields = &exec.regions[0].terminator()?.operands;
    match pattern {
        SimilarityPattern::DotProd | SimilarityPattern::EuclNorm => {
            let topk = single(ops, "topk")?;
            let (stored, query, metric) = if pattern == SimilarityPattern::DotProd {
                let tr = single(ops, "transpose")?;
                let mm = single(ops, "matmul")?;
                if mm.operands[1] != tr.results[0] || topk.operands[0] != mm.results[0] {
                    return None;
                }
                if topk.int_attr("dim") != Some(1) {
                    return None;
                }
                (tr.operands[0], mm.operands[0], "dot")
            } else {
                let sub = single(ops, "sub")?;
                let norm = single(ops, "norm")?;
                if norm.operands[0] != sub.results[0] || topk.operands[0] != norm.results[0] {
                    return None;
                }
                if norm.int_attr("dim") != Some(1) || topk.int_attr("dim") != Some(0) {
                    return None;
                }
                let metric = match norm.int_attr("p") {
                    Some(2) => "euclidean",
                    Some(1) => "manhattan",
                    _ => return None,
                };
                let (a, b) = (sub.operands[0], sub.operands[1]);
                let a_rows = tensor(f, a)?.shape.first().copied();
                if a_rows == Some(1) {
                    (b, a, metric)
                } else {
                    (a, b, metric)
                }
            };
            if !fits(f, stored, query) || !yields.iter().all(|y| topk.results.contains(y)) {
                return None;
            }
            let k = topk.int_attr("k")?;
            let largest = topk.int_attr("largest")?;
            let topk_results = topk.results.clone();
            let result_types: Vec<Type> = topk_results.iter().map(|r| f.ty(*r).clone()).collect();
            let exec_results = exec.results.clone();
            let handle = exec.operands[0];
            let yields = yields.clone();
            let sim = f.build(
                "cim.similarity",
                &[stored, query],
                result_types,
                vec![
                    ("k", Attr::from(k)),
                    ("largest", Attr::from(largest)),
                    ("metric", Attr::from(metric)),
                ],
            );
            let new_yields: Vec<ValueId> = yields
                .iter()
                .map(|y| sim.results[topk_results.iter().position(|t| t == y).unwrap()])
                .collect();
            let y = f.build("cim.yield", &new_yields, vec![], vec![]);
            Some(Rewrite {
                before: vec![],
                execute: execute(handle, exec_results, vec![sim, y]),
                after: vec![],
            })
        }
        SimilarityPattern::CosSim => {
            let tr = single(ops, "transpose")?;
            let mm = single(ops, "matmul")?;
            let div = single(ops, "div")?;
            let norms: Vec<&Operation> = ops.iter().filter(|op| op.is("tensor", "norm")).collect();
            if mm.operands[1] != tr.results[0] || div.operands.len() != 3 || div.operands[0] != mm.results[0] {
                return None;
            }
            let (stored, query) = (tr.operands[0], mm.operands[0]);
            if !fits(f, stored, query) || yields.as_slice() != div.results.as_slice() {
                return None;
            }
            let mut sources: Vec<ValueId> = Vec::new();
            for n in &norms {
                if n.int_attr("p") != Some(2) || n.int_attr("dim") != Some(1) {
                    return None;
                }
                if !div.operands[1..].contains(&n.results[0]) {
                    return None;
                }
                sources.push(n.operands[0]);
            }
            sources.sort();
            let mut want = vec![stored, query];
            want.sort();
            if sources != want {
                return None;
            }
            let scores_ty = f.ty(mm.results[0]).clone();
            let before: Vec<Operation> = norms.into_iter().cloned().collect();
            let div = div.clone();
            let handle = exec.operands[0];
            let exec_result = exec.results.first().copied()?;
            let sim = f.build(
                "cim.similarity",
                &[stored, query],
                vec![scores_ty.clone()],
                vec![("k", Attr::from(0i64)), ("metric", Attr::from("dot"))],
            );
            let y = f.build("cim.yield", &[sim.results[0]], vec![], vec![]);
            let scores = f.new_value(scores_ty);
            let mut host_div = div;
            host_div.operands[0] = scores;
            host_div.results = vec![exec_result];
            Some(Rewrite {
                before,
                execute: execute(handle, vec![scores], vec![sim, y]),
                after: vec![host_div],
            })
        }
    }
}

fn execute(handle: ValueId, results: Vec<ValueId>, ops: Vec<Operation>) -> Operation {
    Operation {
        dialect: "cim".into(),
        name: "execute".into(),
        operands: vec![handle],
        results,
        attrs: Default::default(),
        regions: vec![Region { args: vec![], ops }],
    }
}
