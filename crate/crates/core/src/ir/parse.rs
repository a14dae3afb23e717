use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::types::{Attr, ElemType, HandleKind, TensorType, Type};
use super::{registry, verify, Diagnostic, Function, Module, Operation, Region, ValueId};

#[derive(Debug, Clone, PartialEq)]
pub enum ParseError {
    Syntax { line: usize, col: usize, msg: String },
    Invalid(Vec<Diagnostic>),
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::Syntax { line, col, msg } => write!(f, "{line}:{col}: {msg}"),
            ParseError::Invalid(diags) => {
                for (i, d) in diags.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "{d}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ParseError {}

/// Parse the textual IR and verify the result.
pub fn parse_module(text: &str) -> Result<Module, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut module = Module::new();
    loop {
        p.skip_ws();
        if p.at_end() {
            break;
        }
        module.functions.push(p.function()?);
    }
    let diags = verify(&module);
    if diags.is_empty() {
        Ok(module)
    } else {
        Err(ParseError::Invalid(diags))
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

/// Value names visible at a point, innermost scope last.
struct Scopes {
    stack: Vec<HashMap<String, ValueId>>,
}

impl Scopes {
    fn lookup(&self, name: &str) -> Option<ValueId> {
        self.stack.iter().rev().find_map(|s| s.get(name).copied())
    }
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError::Syntax {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        })
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_ascii_whitespace() {
                self.bump();
            } else if c == b'/' && self.src.get(self.pos + 1) == Some(&b'/') {
                while let Some(c) = self.peek() {
                    if c == b'\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(s.as_bytes()) {
            for _ in 0..s.len() {
                self.bump();
            }
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> PResult<()> {
        if self.eat(s) {
            Ok(())
        } else {
            let found = self
                .peek()
                .map(|c| format!("'{}'", c as char))
                .unwrap_or_else(|| "end of input".into());
            self.err(format!("expected '{s}', found {found}"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' || c == b'.' {
                self.bump();
            } else {
                break;
            }
        }
        if start == self.pos {
            return self.err("expected identifier");
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn value_name(&mut self) -> PResult<String> {
        self.expect("%")?;
        self.ident()
    }

    fn function(&mut self) -> PResult<Function> {
        self.skip_ws();
        if !self.eat("func") {
            return self.err("expected 'func'");
        }
        self.expect("@")?;
        let name = self.ident()?;
        self.expect("(")?;
        let mut arg_names = Vec::new();
        let mut arg_types = Vec::new();
        if !self.eat(")") {
            loop {
                arg_names.push(self.value_name()?);
                self.expect(":")?;
                arg_types.push(self.ty()?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        self.expect("->")?;
        let result_types = self.type_list()?;
        let mut func = Function::new(name, arg_types, result_types);
        let mut scope = HashMap::new();
        for (n, v) in arg_names.into_iter().zip(func.body.args.clone()) {
            if scope.insert(n.clone(), v).is_some() {
                return self.err(format!("redefinition of %{n}"));
            }
        }
        let mut scopes = Scopes { stack: vec![scope] };
        self.expect("{")?;
        let ops = self.op_list(&mut func, &mut scopes)?;
        func.body.ops = ops;
        Ok(func)
    }

    fn op_list(&mut self, func: &mut Function, scopes: &mut Scopes) -> PResult<Vec<Operation>> {
        let mut ops = Vec::new();
        loop {
            if self.eat("}") {
                return Ok(ops);
            }
            if self.at_end() {
                return self.err("unexpected end of input, missing '}'");
            }
            ops.push(self.op(func, scopes)?);
        }
    }

    fn op(&mut self, func: &mut Function, scopes: &mut Scopes) -> PResult<Operation> {
        self.skip_ws();
        let mut result_names = Vec::new();
        if self.peek() == Some(b'%') {
            loop {
                result_names.push(self.value_name()?);
                if self.eat("=") {
                    break;
                }
                self.expect(",")?;
            }
        }
        self.skip_ws();
        let (line, col) = (self.line, self.col);
        let full = self.ident()?;
        let Some((dialect, name)) = full.split_once('.') else {
            return self.err(format!("expected dialect-qualified op name, found '{full}'"));
        };
        if !registry::is_dialect(dialect) {
            return Err(ParseError::Syntax {
                line,
                col,
                msg: format!("unknown dialect '{dialect}'"),
            });
        }
        if registry::lookup(dialect, name).is_none() {
            return Err(ParseError::Syntax {
                line,
                col,
                msg: format!("unknown op '{full}'"),
            });
        }
        self.expect("(")?;
        let mut operands = Vec::new();
        if !self.eat(")") {
            loop {
                let n = self.value_name()?;
                match scopes.lookup(&n) {
                    Some(v) => operands.push(v),
                    None => return self.err(format!("use before def: %{n}")),
                }
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        let mut attrs = BTreeMap::new();
        self.skip_ws();
        if self.peek() == Some(b'{') {
            self.bump();
            if !self.eat("}") {
                loop {
                    let k = self.ident()?;
                    self.expect("=")?;
                    let v = self.attr()?;
                    attrs.insert(k, v);
                    if self.eat("}") {
                        break;
                    }
                    self.expect(",")?;
                }
            }
        }
        self.expect(":")?;
        let operand_types = self.type_list()?;
        self.expect("->")?;
        let result_types = self.type_list()?;
        if operand_types.len() != operands.len() {
            return self.err(format!(
                "{full}: {} operands but {} operand types",
                operands.len(),
                operand_types.len()
            ));
        }
        for (i, (v, t)) in operands.iter().zip(&operand_types).enumerate() {
            if func.ty(*v) != t {
                return self.err(format!(
                    "type mismatch for operand #{i} of {full}: value has {}, signature says {t}",
                    func.ty(*v)
                ));
            }
        }
        if result_types.len() != result_names.len() {
            return self.err(format!(
                "{full}: {} results but {} result types",
                result_names.len(),
                result_types.len()
            ));
        }
        let mut results = Vec::new();
        for (n, t) in result_names.iter().zip(result_types) {
            let v = func.new_value(t);
            results.push(v);
            let scope = scopes.stack.last_mut().unwrap();
            if scope.insert(n.clone(), v).is_some() {
                return self.err(format!("redefinition of %{n}"));
            }
        }
        let mut regions = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() != Some(b'{') {
                break;
            }
            self.bump();
            regions.push(self.region(func, scopes)?);
        }
        Ok(Operation {
            dialect: dialect.to_string(),
            name: name.to_string(),
            operands,
            results,
            attrs,
            regions,
        })
    }

    fn region(&mut self, func: &mut Function, scopes: &mut Scopes) -> PResult<Region> {
        scopes.stack.push(HashMap::new());
        let mut args = Vec::new();
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.bump();
            self.ident()?;
            self.expect("(")?;
            if !self.eat(")") {
                loop {
                    let n = self.value_name()?;
                    self.expect(":")?;
                    let t = self.ty()?;
                    let v = func.new_value(t);
                    args.push(v);
                    if scopes.stack.last_mut().unwrap().insert(n.clone(), v).is_some() {
                        return self.err(format!("redefinition of %{n}"));
                    }
                    if self.eat(")") {
                        break;
                    }
                    self.expect(",")?;
                }
            }
            self.expect(":")?;
        }
        let ops = self.op_list(func, scopes)?;
        scopes.stack.pop();
        Ok(Region { args, ops })
    }

    fn type_list(&mut self) -> PResult<Vec<Type>> {
        self.expect("(")?;
        let mut out = Vec::new();
        if self.eat(")") {
            return Ok(out);
        }
        loop {
            out.push(self.ty()?);
            if self.eat(")") {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }

    fn ty(&mut self) -> PResult<Type> {
        self.skip_ws();
        if self.peek() == Some(b'!') {
            self.bump();
            let name = format!("!{}", self.ident()?);
            return match HandleKind::from_spelling(&name) {
                Some(h) => Ok(Type::Handle(h)),
                None => self.err(format!("unknown type '{name}'")),
            };
        }
        let name = self.ident()?;
        match name.as_str() {
            "index" => Ok(Type::Index),
            "tensor" => {
                self.expect("<")?;
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if c == b'>' {
                        break;
                    }
                    self.bump();
                }
                let body = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                self.expect(">")?;
                match parse_tensor_body(&body) {
                    Some(t) => Ok(Type::Tensor(t)),
                    None => self.err(format!("malformed tensor type 'tensor<{body}>'")),
                }
            }
            other => self.err(format!("unknown type '{other}'")),
        }
    }

    fn attr(&mut self) -> PResult<Attr> {
        self.skip_ws();
        match self.peek() {
            Some(b'"') => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        Some(b'"') => break,
                        Some(b'\\') => match self.bump() {
                            Some(c) => s.push(c as char),
                            None => return self.err("unterminated string"),
                        },
                        Some(c) => s.push(c as char),
                        None => return self.err("unterminated string"),
                    }
                }
                Ok(Attr::Str(s))
            }
            Some(b'[') => {
                self.bump();
                let mut v = Vec::new();
                if self.eat("]") {
                    return Ok(Attr::IntList(v));
                }
                loop {
                    match self.number()? {
                        Attr::Int(i) => v.push(i),
                        _ => return self.err("list attributes hold integers only"),
                    }
                    if self.eat("]") {
                        return Ok(Attr::IntList(v));
                    }
                    self.expect(",")?;
                }
            }
            _ => self.number(),
        }
    }

    fn number(&mut self) -> PResult<Attr> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || matches!(c, b'-' | b'+' | b'.') {
                self.bump();
            } else {
                break;
            }
        }
        let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        if let Ok(i) = s.parse::<i64>() {
            return Ok(Attr::Int(i));
        }
        match s.parse::<f64>() {
            Ok(r) => Ok(Attr::Real(r)),
            Err(_) => self.err(format!("malformed attribute value '{s}'")),
        }
    }
}

/// Parse the inside of `tensor<...>`, e.g. `1x8192xi1` or `f32`.
pub(crate) fn parse_tensor_body(body: &str) -> Option<TensorType> {
    let parts: Vec<&str> = body.trim().split('x').collect();
    let (elem_s, dims) = parts.split_last()?;
    let elem = parse_elem(elem_s)?;
    let shape = dims
        .iter()
        .map(|d| d.parse::<usize>().ok().filter(|&n| n >= 1))
        .collect::<Option<Vec<_>>>()?;
    Some(TensorType::new(shape, elem))
}

pub(crate) fn parse_elem(s: &str) -> Option<ElemType> {
    if s == "f32" {
        return Some(ElemType::F32);
    }
    let bits: u8 = s.strip_prefix('i')?.parse().ok()?;
    (1..=32).contains(&bits).then_some(ElemType::Int(bits))
}
