use crate::ir::build::Block;
use crate::ir::{Attr, ElemType, Function, Module, Operation, Region, Type, ValueId};

/// Tile every `cim.similarity` to a `pe_rows x pe_cols` device.
///
/// Rows are the outer loop and columns the inner one. The first column
/// tile seeds the per-row-tile accumulator; remaining tiles add into it
/// with `sum-cols` merges. `cim.finalize` turns the accumulated raw values
/// into scores with global row indices, and a `topk-*` (or `concat` when
/// no top-k is requested) merge folds each row tile into the result.
pub fn partition(m: &Module, pe_rows: usize, pe_cols: usize) -> Result<Module, String> {
    if pe_rows == 0 || pe_cols == 0 {
        return Err(format!("pe sizes must be positive, got {pe_rows}x{pe_cols}"));
    }
    let mut out = m.clone();
    for f in &mut out.functions {
        for i in 0..f.body.ops.len() {
            if !f.body.ops[i].is("cim", "execute") {
                continue;
            }
            let region = &f.body.ops[i].regions[0];
            let [sim, _] = region.ops.as_slice() else { continue };
            if !sim.is("cim", "similarity") || sim.int_attr("partial").unwrap_or(0) != 0 {
                continue;
            }
            let sim = sim.clone();
            if let Some(new_region) = tile_similarity(f, &sim, pe_rows, pe_cols) {
                f.body.ops[i].regions[0] = new_region;
            }
        }
    }
    Ok(out)
}

fn tile_similarity(f: &mut Function, sim: &Operation, r: usize, c: usize) -> Option<Region> {
    let (stored, query) = (sim.operands[0], sim.operands[1]);
    let st = f.tensor_ty(stored)?.clone();
    let (n, d) = (st.shape[0], st.shape[1]);
    if n <= r && d <= c {
        return None;
    }
    let rt = n.div_ceil(r);
    let ct = d.div_ceil(c);
    let metric = sim.str_attr("metric")?.to_string();
    let k = sim.int_attr("k").unwrap_or(0);
    let largest = sim.int_attr("largest").unwrap_or(1);
    let result_types: Vec<Type> = sim.results.iter().map(|v| f.ty(*v).clone()).collect();
    let value_elem = result_types[0].as_tensor()?.elem;
    let elem = st.elem;
    let raw_ty = Type::tensor([1, r], ElemType::I32);

    let mut b = Block::new(f);
    let zero = b.const_index(0);
    let (init, kind) = if k > 0 {
        let kind = if largest != 0 { "topk-max" } else { "topk-min" };
        let init = b.op(
            "cim.init_partial",
            &[],
            result_types.clone(),
            vec![("k", k.into()), ("kind", kind.into())],
        );
        (init, kind)
    } else {
        let init = b.op("cim.init_partial", &[], result_types.clone(), vec![("kind", "concat".into())]);
        (init, "concat")
    };
    let tile_sim = |b: &mut Block, row: ValueId, col: ValueId| -> ValueId {
        let s = b.op(
            "plumb.slice",
            &[stored, row, col],
            vec![Type::tensor([r, c], elem)],
            vec![("cols", c.into()), ("rows", r.into())],
        )[0];
        let q = b.op(
            "plumb.slice",
            &[query, zero, col],
            vec![Type::tensor([1, c], elem)],
            vec![("cols", c.into()), ("rows", 1usize.into())],
        )[0];
        b.op(
            "cim.similarity",
            &[s, q],
            vec![raw_ty.clone()],
            vec![("metric", Attr::from(metric.as_str())), ("partial", 1i64.into())],
        )[0]
    };
    let finalize_attrs = |k: i64| -> Vec<(&'static str, Attr)> {
        vec![
            ("binary", Attr::from(elem.is_binary())),
            ("k", k.into()),
            ("largest", largest.into()),
            ("metric", Attr::from(metric.as_str())),
            ("rows", r.into()),
            ("total", n.into()),
            ("width", d.into()),
        ]
    };
    let results = b.for_loop(0, rt as i64, vec![], &init, |b, row, accs| {
        let c0 = b.const_index(0);
        let first = tile_sim(b, row, c0);
        let sum = if ct > 1 {
            b.for_loop(1, ct as i64, vec![], &[first], |b, col, acc| {
                let part = tile_sim(b, row, col);
                b.op(
                    "cim.merge_partial",
                    &[acc[0], part],
                    vec![raw_ty.clone()],
                    vec![("kind", "sum-cols".into())],
                )
            })[0]
        } else {
            first
        };
        if k > 0 {
            let tile = b.op("cim.finalize", &[sum, row], result_types.clone(), finalize_attrs(k));
            b.op(
                "cim.merge_partial",
                &[accs[0], accs[1], tile[0], tile[1]],
                result_types.clone(),
                vec![("kind", kind.into())],
            )
        } else {
            let tile = b.op(
                "cim.finalize",
                &[sum, row],
                vec![Type::tensor([1, r], value_elem)],
                finalize_attrs(0),
            );
            b.op(
                "cim.merge_partial",
                &[accs[0], tile[0], row],
                result_types.clone(),
                vec![("kind", "concat".into())],
            )
        }
    });
    let y = b.f.build("cim.yield", &results, vec![], vec![]);
    b.push(y);
    Some(Region { args: vec![], ops: b.ops })
}
