//! SSA-form IR shared by every stage of the compiler.
//!
//! A [`Module`] holds functions; each [`Function`] owns a value table and a
//! single body [`Region`]. Operations are tagged with a dialect and an op
//! name and may carry nested regions (`cim.execute` bodies, `plumb.for`
//! loops). Values are numbered per function; the textual form renumbers
//! them in order of appearance, so two functions compare equal when they
//! print identically.

pub mod build;
mod parse;
mod pass;
mod print;
pub mod registry;
mod types;
mod verify;

use std::collections::{BTreeMap, HashMap};

pub use parse::{parse_module, ParseError};
pub(crate) use parse::parse_elem;
pub use pass::{
    create_pass, run_pipeline, run_pipeline_with, run_stages, Pass, PassContext, PassError,
    PassOptions, PipelineSpec,
};
pub use print::print_module;
pub use types::{Attr, ElemType, HandleKind, TensorType, Type};
pub use verify::{verify, Diagnostic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub struct Operation {
    pub dialect: String,
    pub name: String,
    pub operands: Vec<ValueId>,
    pub results: Vec<ValueId>,
    pub attrs: BTreeMap<String, Attr>,
    pub regions: Vec<Region>,
}

impl Operation {
    pub fn is(&self, dialect: &str, name: &str) -> bool {
        self.dialect == dialect && self.name == name
    }

    pub fn full_name(&self) -> String {
        format!("{}.{}", self.dialect, self.name)
    }

    pub fn attr(&self, key: &str) -> Option<&Attr> {
        self.attrs.get(key)
    }

    pub fn int_attr(&self, key: &str) -> Option<i64> {
        self.attrs.get(key).and_then(Attr::as_int)
    }

    pub fn str_attr(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).and_then(Attr::as_str)
    }

    pub fn set_attr(&mut self, key: &str, value: impl Into<Attr>) {
        self.attrs.insert(key.to_string(), value.into());
    }

    pub fn result(&self, i: usize) -> ValueId {
        self.results[i]
    }

    /// Visit every value this op or its nested regions read.
    pub fn for_each_use(&self, f: &mut impl FnMut(ValueId)) {
        for v in &self.operands {
            f(*v);
        }
        for r in &self.regions {
            for op in &r.ops {
                op.for_each_use(f);
            }
        }
    }

    pub fn uses(&self, v: ValueId) -> bool {
        let mut found = false;
        self.for_each_use(&mut |u| found |= u == v);
        found
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Region {
    pub args: Vec<ValueId>,
    pub ops: Vec<Operation>,
}

impl Region {
    /// Last op of the region, if it is a terminator.
    pub fn terminator(&self) -> Option<&Operation> {
        self.ops
            .last()
            .filter(|op| registry::is_terminator(&op.dialect, &op.name))
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Operation)) {
        for op in &self.ops {
            f(op);
            for r in &op.regions {
                r.walk(f);
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Operation)) {
        for op in &mut self.ops {
            f(op);
            for r in &mut op.regions {
                r.walk_mut(f);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Function {
    pub name: String,
    pub result_types: Vec<Type>,
    /// Body region; its arguments are the function arguments.
    pub body: Region,
    values: Vec<Type>,
}

impl Function {
    pub fn new(name: impl Into<String>, arg_types: Vec<Type>, result_types: Vec<Type>) -> Self {
        let mut f = Function {
            name: name.into(),
            result_types,
            body: Region::default(),
            values: Vec::new(),
        };
        f.body.args = arg_types.into_iter().map(|t| f.new_value(t)).collect();
        f
    }

    pub fn args(&self) -> &[ValueId] {
        &self.body.args
    }

    pub fn arg_types(&self) -> Vec<Type> {
        self.body.args.iter().map(|v| self.ty(*v).clone()).collect()
    }

    pub fn new_value(&mut self, ty: Type) -> ValueId {
        self.values.push(ty);
        ValueId(self.values.len() as u32 - 1)
    }

    pub fn ty(&self, v: ValueId) -> &Type {
        &self.values[v.0 as usize]
    }

    pub fn try_ty(&self, v: ValueId) -> Option<&Type> {
        self.values.get(v.0 as usize)
    }

    pub fn tensor_ty(&self, v: ValueId) -> Option<&TensorType> {
        self.try_ty(v).and_then(Type::as_tensor)
    }

    pub fn num_values(&self) -> usize {
        self.values.len()
    }

    /// Build an op, allocating fresh result values of the given types.
    pub fn build(
        &mut self,
        full_name: &str,
        operands: &[ValueId],
        result_types: Vec<Type>,
        attrs: Vec<(&str, Attr)>,
    ) -> Operation {
        let (dialect, name) = full_name
            .split_once('.')
            .expect("op names are dialect-qualified");
        let results = result_types.into_iter().map(|t| self.new_value(t)).collect();
        Operation {
            dialect: dialect.to_string(),
            name: name.to_string(),
            operands: operands.to_vec(),
            results,
            attrs: attrs
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            regions: Vec::new(),
        }
    }

    /// Create a region whose block arguments have the given types.
    pub fn new_region(&mut self, arg_types: Vec<Type>) -> Region {
        Region {
            args: arg_types.into_iter().map(|t| self.new_value(t)).collect(),
            ops: Vec::new(),
        }
    }

    /// Rewrite every use of `from` to `to` across the whole body.
    pub fn replace_all_uses(&mut self, from: ValueId, to: ValueId) {
        self.body.walk_mut(&mut |op| {
            for o in &mut op.operands {
                if *o == from {
                    *o = to;
                }
            }
        });
    }

    /// Copy of this function with values renumbered in order of appearance
    /// and unreferenced table entries dropped.
    pub fn canonicalize(&self) -> Function {
        let mut map: HashMap<ValueId, ValueId> = HashMap::new();
        let mut values = Vec::new();
        fn assign(
            v: ValueId,
            src: &Function,
            map: &mut HashMap<ValueId, ValueId>,
            values: &mut Vec<Type>,
        ) {
            if let std::collections::hash_map::Entry::Vacant(e) = map.entry(v) {
                let ty = src.try_ty(v).cloned().unwrap_or(Type::Index);
                e.insert(ValueId(values.len() as u32));
                values.push(ty);
            }
        }
        fn number_region(
            r: &Region,
            src: &Function,
            map: &mut HashMap<ValueId, ValueId>,
            values: &mut Vec<Type>,
        ) {
            for a in &r.args {
                assign(*a, src, map, values);
            }
            for op in &r.ops {
                for res in &op.results {
                    assign(*res, src, map, values);
                }
                for inner in &op.regions {
                    number_region(inner, src, map, values);
                }
            }
        }
        number_region(&self.body, self, &mut map, &mut values);
        fn rename(r: &Region, map: &HashMap<ValueId, ValueId>) -> Region {
            let m = |v: &ValueId| map.get(v).copied().unwrap_or(ValueId(u32::MAX));
            Region {
                args: r.args.iter().map(m).collect(),
                ops: r
                    .ops
                    .iter()
                    .map(|op| Operation {
                        dialect: op.dialect.clone(),
                        name: op.name.clone(),
                        operands: op.operands.iter().map(m).collect(),
                        results: op.results.iter().map(m).collect(),
                        attrs: op.attrs.clone(),
                        regions: op.regions.iter().map(|x| rename(x, map)).collect(),
                    })
                    .collect(),
            }
        }
        Function {
            name: self.name.clone(),
            result_types: self.result_types.clone(),
            body: rename(&self.body, &map),
            values,
        }
    }
}

impl PartialEq for Function {
    fn eq(&self, other: &Self) -> bool {
        let a = self.canonicalize();
        let b = other.canonicalize();
        a.name == b.name && a.result_types == b.result_types && a.body == b.body && a.values == b.values
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Module {
    pub functions: Vec<Function>,
}

impl Module {
    pub fn new() -> Self {
        Module::default()
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// Number of ops (recursively) whose full name is `full_name`.
    pub fn count_ops(&self, full_name: &str) -> usize {
        let mut n = 0;
        for f in &self.functions {
            f.body.walk(&mut |op| {
                if op.full_name() == full_name {
                    n += 1;
                }
            });
        }
        n
    }
}
