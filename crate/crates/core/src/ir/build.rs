//! Helpers for emitting straight-line code, loops and guards.

use super::{Attr, Function, Operation, Region, Type, ValueId};

/// An op list under construction inside `f`.
pub struct Block<'f> {
    pub f: &'f mut Function,
    pub ops: Vec<Operation>,
}

impl<'f> Block<'f> {
    pub fn new(f: &'f mut Function) -> Self {
        Block { f, ops: Vec::new() }
    }

    /// Append an op and return its results.
    pub fn op(
        &mut self,
        full_name: &str,
        operands: &[ValueId],
        result_types: Vec<Type>,
        attrs: Vec<(&str, Attr)>,
    ) -> Vec<ValueId> {
        let op = self.f.build(full_name, operands, result_types, attrs);
        let results = op.results.clone();
        self.ops.push(op);
        results
    }

    pub fn push(&mut self, op: Operation) {
        self.ops.push(op);
    }

    pub fn const_index(&mut self, value: i64) -> ValueId {
        self.op("plumb.const", &[], vec![Type::Index], vec![("value", value.into())])[0]
    }

    /// `constant + sum(coeff * operand)`; terms with zero coefficients are
    /// dropped and a term-free expression becomes a constant.
    pub fn affine(&mut self, terms: &[(ValueId, i64)], constant: i64) -> ValueId {
        let terms: Vec<(ValueId, i64)> = terms.iter().copied().filter(|(_, c)| *c != 0).collect();
        if terms.is_empty() {
            return self.const_index(constant);
        }
        if terms.len() == 1 && terms[0].1 == 1 && constant == 0 {
            return terms[0].0;
        }
        let operands: Vec<ValueId> = terms.iter().map(|(v, _)| *v).collect();
        let coeffs: Vec<i64> = terms.iter().map(|(_, c)| *c).collect();
        self.op(
            "plumb.affine",
            &operands,
            vec![Type::Index],
            vec![("coeffs", coeffs.into()), ("constant", constant.into())],
        )[0]
    }

    /// Counted loop carrying `inits`. A single-trip loop is emitted inline
    /// with a constant induction value.
    pub fn for_loop(
        &mut self,
        lower: i64,
        upper: i64,
        attrs: Vec<(&str, Attr)>,
        inits: &[ValueId],
        body: impl FnOnce(&mut Block, ValueId, &[ValueId]) -> Vec<ValueId>,
    ) -> Vec<ValueId> {
        if upper - lower == 1 {
            let iv = self.const_index(lower);
            return body(self, iv, inits);
        }
        let carried: Vec<Type> = inits.iter().map(|v| self.f.ty(*v).clone()).collect();
        let mut arg_types = vec![Type::Index];
        arg_types.extend(carried.iter().cloned());
        let region_args = self.f.new_region(arg_types).args;
        let (inner_ops, yields) = {
            let mut inner = Block::new(&mut *self.f);
            let yields = body(&mut inner, region_args[0], &region_args[1..]);
            (inner.ops, yields)
        };
        let mut all_attrs = vec![
            ("lower", Attr::from(lower)),
            ("upper", Attr::from(upper)),
            ("step", Attr::from(1i64)),
        ];
        all_attrs.extend(attrs);
        self.finish_region_op("plumb.for", inits.to_vec(), carried, all_attrs, region_args, inner_ops, yields)
    }

    /// Run `body` only when `cond < bound`; otherwise the carried values
    /// pass through unchanged.
    pub fn when(
        &mut self,
        cond: ValueId,
        bound: i64,
        carried: &[ValueId],
        body: impl FnOnce(&mut Block, &[ValueId]) -> Vec<ValueId>,
    ) -> Vec<ValueId> {
        let types: Vec<Type> = carried.iter().map(|v| self.f.ty(*v).clone()).collect();
        let region_args = self.f.new_region(types.clone()).args;
        let (inner_ops, yields) = {
            let mut inner = Block::new(&mut *self.f);
            let yields = body(&mut inner, &region_args);
            (inner.ops, yields)
        };
        let mut operands = vec![cond];
        operands.extend_from_slice(carried);
        self.finish_region_op(
            "plumb.when",
            operands,
            types,
            vec![("lt", bound.into())],
            region_args,
            inner_ops,
            yields,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_region_op(
        &mut self,
        name: &str,
        operands: Vec<ValueId>,
        result_types: Vec<Type>,
        attrs: Vec<(&str, Attr)>,
        region_args: Vec<ValueId>,
        mut inner_ops: Vec<Operation>,
        yields: Vec<ValueId>,
    ) -> Vec<ValueId> {
        let y = self.f.build("plumb.yield", &yields, vec![], vec![]);
        inner_ops.push(y);
        let mut op = self.f.build(name, &operands, result_types, attrs);
        op.regions.push(Region {
            args: region_args,
            ops: inner_ops,
        });
        let results = op.results.clone();
        self.ops.push(op);
        results
    }
}
