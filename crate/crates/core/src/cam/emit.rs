//! Loop-nest emission shared by `lower-cim-to-cam` and `cam-map`.

use super::{CamKernel, MatchType, PlacementPlan};
use crate::arch::AccessMode;
use crate::ir::build::Block;
use crate::ir::{Attr, ElemType, Function, HandleKind, Operation, Type, ValueId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SubarraySchedule {
    Parallel,
    Sequential,
    Grouped(u32),
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub plan: PlacementPlan,
    pub bank: AccessMode,
    pub mat: AccessMode,
    pub array: AccessMode,
    pub search: SubarraySchedule,
}

fn sched(m: AccessMode) -> &'static str {
    match m {
        AccessMode::Parallel => "parallel",
        AccessMode::Sequential => "sequential",
    }
}

/// Index of one loop level: a constant when the loop was elided.
#[derive(Clone, Copy)]
enum Ix {
    Fixed,
    Var(ValueId),
}

struct Ctx<'k> {
    k: &'k CamKernel,
    l: &'k Layout,
    zero: ValueId,
}

/// Emit the allocation, write, search and read sequence for `k`. The final
/// `cam.read_value` defines `outputs`.
pub(crate) fn emit(f: &mut Function, k: &CamKernel, layout: &Layout, outputs: Vec<ValueId>) -> Vec<Operation> {
    let plan = &layout.plan;
    let mut b = Block::new(f);
    let acc_ty = Type::tensor([1, k.entries], ElemType::I32);
    let acc0 = b.op("cam.alloc_buffer", &[], vec![acc_ty], vec![("size", k.entries.into())])[0];
    let zero = b.const_index(0);
    let ctx = Ctx { k, l: layout, zero };
    let waves = plan.waves as i64;
    let acc = b.for_loop(
        0,
        waves,
        vec![("level", "wave".into()), ("schedule", "sequential".into())],
        &[acc0],
        |b, w, acc| {
            let w = if waves > 1 { Ix::Var(w) } else { Ix::Fixed };
            ctx.nest(b, w, None);
            ctx.nest(b, w, Some(acc[0])).into_iter().collect()
        },
    )[0];
    let mut attrs: Vec<(&str, Attr)> = vec![
        ("binary", k.elem.is_binary().into()),
        ("k", k.k.into()),
        ("largest", k.largest.into()),
        ("match", k.spec.search.match_type.name().into()),
        ("metric", k.metric.name().into()),
        ("total", k.entries.into()),
        ("width", k.width.into()),
    ];
    if let Some(t) = k.spec.search.threshold {
        attrs.push(("threshold", t.into()));
    }
    let mut read = b.f.build("cam.read_value", &[acc], k.result_types.clone(), attrs);
    read.results = outputs;
    b.push(read);
    b.ops
}

impl Ctx<'_> {
    fn level_loop(
        &self,
        b: &mut Block,
        trip: usize,
        level: &str,
        schedule: Vec<(&'static str, Attr)>,
        acc: Option<ValueId>,
        body: impl FnOnce(&mut Block, Ix, Option<ValueId>) -> Option<ValueId>,
    ) -> Option<ValueId> {
        let mut attrs: Vec<(&str, Attr)> = vec![("level", level.into())];
        attrs.extend(schedule);
        let inits: Vec<ValueId> = acc.into_iter().collect();
        let out = b.for_loop(0, trip as i64, attrs, &inits, |b, iv, carried| {
            let ix = if trip > 1 { Ix::Var(iv) } else { Ix::Fixed };
            body(b, ix, carried.first().copied()).into_iter().collect()
        });
        out.first().copied()
    }

    fn alloc(&self, b: &mut Block, name: &str, parent: Option<ValueId>, ix: Ix, kind: HandleKind) -> ValueId {
        let mut operands: Vec<ValueId> = parent.into_iter().collect();
        if let Ix::Var(v) = ix {
            operands.push(v);
        }
        let attrs: Vec<(&str, Attr)> = if kind == HandleKind::Bank {
            vec![
                ("cols", self.l.plan.cols.into()),
                ("device", self.k.spec.device.name().into()),
                ("rows", self.l.plan.rows.into()),
            ]
        } else {
            vec![]
        };
        b.op(name, &operands, vec![Type::Handle(kind)], attrs)[0]
    }

    /// One pass over the hierarchy: writes when `acc` is `None`, searches
    /// folding into `acc` otherwise.
    fn nest(&self, b: &mut Block, w: Ix, acc: Option<ValueId>) -> Option<ValueId> {
        let p = &self.l.plan;
        let searching = acc.is_some();
        let (t, a, s) = (p.mats_per_bank, p.arrays_per_mat, p.subarrays_per_array);
        let spb = (t * a * s) as i64;
        let per_wave = p.banks as i64 * spb;
        let sub_sched: Vec<(&'static str, Attr)> = if !searching {
            vec![("schedule", "sequential".into())]
        } else {
            match self.l.search {
                SubarraySchedule::Parallel => vec![("schedule", "parallel".into())],
                SubarraySchedule::Sequential => vec![("schedule", "sequential".into())],
                SubarraySchedule::Grouped(g) => {
                    vec![("group", i64::from(g).into()), ("schedule", "grouped".into())]
                }
            }
        };
        let lvl = |m: AccessMode| -> Vec<(&'static str, Attr)> { vec![("schedule", sched(m).into())] };
        // Trip counts cover only the slots the first wave fills; slot
        // numbering keeps the full hierarchy strides.
        let used = p.subarrays.min(p.banks * t * a * s);
        let (bt, mt, at, st) = if used <= s {
            (1, 1, 1, used)
        } else if used <= a * s {
            (1, 1, used.div_ceil(s), s)
        } else if used <= t * a * s {
            (1, used.div_ceil(a * s), a, s)
        } else {
            (used.div_ceil(t * a * s), t, a, s)
        };
        let reach = (p.waves as i64 - 1) * per_wave
            + (bt as i64 - 1) * spb
            + ((mt - 1) * a * s + (at - 1) * s + st) as i64;
        self.level_loop(b, bt, "bank", lvl(self.l.bank), acc, |b, bi, acc| {
            let bank = self.alloc(b, "cam.alloc_bank", None, bi, HandleKind::Bank);
            self.level_loop(b, mt, "mat", lvl(self.l.mat), acc, |b, mi, acc| {
                let mat = self.alloc(b, "cam.alloc_mat", Some(bank), mi, HandleKind::Mat);
                self.level_loop(b, at, "array", lvl(self.l.array), acc, |b, ai, acc| {
                    let arr = self.alloc(b, "cam.alloc_array", Some(mat), ai, HandleKind::Array);
                    self.level_loop(b, st, "subarray", sub_sched, acc, |b, si, acc| {
                        let sub = self.alloc(b, "cam.alloc_subarray", Some(arr), si, HandleKind::Subarray);
                        let mut terms = Vec::new();
                        for (ix, coeff) in [
                            (w, per_wave),
                            (bi, spb),
                            (mi, (a * s) as i64),
                            (ai, s as i64),
                            (si, 1),
                        ] {
                            if let Ix::Var(v) = ix {
                                terms.push((v, coeff));
                            }
                        }
                        let slot = b.affine(&terms, 0);
                        self.guard(b, slot, reach, p.subarrays as i64, acc, |b, acc| {
                            self.slot_body(b, sub, slot, acc)
                        })
                    })
                })
            })
        })
    }

    /// `plumb.when(value < bound)` unless `reach <= bound` proves it.
    fn guard(
        &self,
        b: &mut Block,
        value: ValueId,
        reach: i64,
        bound: i64,
        acc: Option<ValueId>,
        body: impl FnOnce(&mut Block, Option<ValueId>) -> Option<ValueId>,
    ) -> Option<ValueId> {
        if reach <= bound {
            return body(b, acc);
        }
        let carried: Vec<ValueId> = acc.into_iter().collect();
        b.when(value, bound, &carried, |b, args| body(b, args.first().copied()).into_iter().collect())
            .first()
            .copied()
    }

    fn slot_body(&self, b: &mut Block, sub: ValueId, slot: ValueId, acc: Option<ValueId>) -> Option<ValueId> {
        let p = &self.l.plan;
        let k = self.k;
        let pack = p.packing;
        let searching = acc.is_some();
        let schedule = if searching { "sequential" } else { "parallel" };
        let tiles = (p.row_tiles * p.col_tiles) as i64;
        self.level_loop(b, pack, "pack", vec![("schedule", schedule.into())], acc, |b, ji, acc| {
            let mut terms = vec![(slot, pack as i64)];
            if let Ix::Var(j) = ji {
                terms.push((j, 1));
            }
            let tile = b.affine(&terms, 0);
            let reach = (p.subarrays * pack) as i64;
            self.guard(b, tile, reach, tiles, acc, |b, acc| {
                let rc = b.op(
                    "plumb.divmod",
                    &[tile],
                    vec![Type::Index, Type::Index],
                    vec![("divisor", p.col_tiles.into())],
                );
                let (rt, ct) = (rc[0], rc[1]);
                let (offset, rows) = if pack > 1 {
                    let off = match ji {
                        Ix::Var(j) => b.affine(&[(j, k.entries as i64)], 0),
                        Ix::Fixed => b.const_index(0),
                    };
                    (off, b.const_index(k.entries as i64))
                } else {
                    let off = b.const_index(0);
                    let rows = b.op(
                        "plumb.extent",
                        &[rt],
                        vec![Type::Index],
                        vec![("tile", p.rows.into()), ("total", k.entries.into())],
                    )[0];
                    (off, rows)
                };
                match acc {
                    None => {
                        let tile_rows = if pack > 1 { k.entries } else { p.rows };
                        let data = b.op(
                            "plumb.slice",
                            &[k.stored, rt, ct],
                            vec![Type::tensor([tile_rows, p.cols], k.elem)],
                            vec![("cols", p.cols.into()), ("rows", tile_rows.into())],
                        )[0];
                        b.op("cam.write_value", &[sub, data, offset, rows], vec![], vec![]);
                        None
                    }
                    Some(acc) => {
                        let q = b.op(
                            "plumb.slice",
                            &[k.query, self.zero, ct],
                            vec![Type::tensor([1, p.cols], k.elem)],
                            vec![("cols", p.cols.into()), ("rows", 1usize.into())],
                        )[0];
                        let mut attrs: Vec<(&str, Attr)> = vec![
                            ("match", k.spec.search.match_type.name().into()),
                            ("metric", k.spec.search.metric.name().into()),
                        ];
                        if k.spec.search.match_type == MatchType::Threshold {
                            attrs.push(("threshold", k.spec.search.threshold.unwrap_or(0).into()));
                        }
                        let found = b.op(
                            "cam.search",
                            &[sub, q, offset, rows],
                            vec![Type::Handle(HandleKind::Matches)],
                            attrs,
                        )[0];
                        let base = b.affine(&[(rt, p.rows as i64)], 0);
                        let acc_ty = b.f.ty(acc).clone();
                        Some(
                            b.op(
                                "cam.merge_partial",
                                &[acc, found, base],
                                vec![acc_ty],
                                vec![("kind", "sum-cols".into())],
                            )[0],
                        )
                    }
                }
            })
        })
    }
}
