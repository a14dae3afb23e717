//! Kernel DSL (`.camk`) parser producing `tensor`-dialect IR.
//!
//! ```text
//! kernel hdc(query: i1[1x8192], hvs: i1[10x8192]) -> (i32[1x1], i32[1x1]) {
//!     t = transpose(hvs);
//!     s = matmul(query, t);
//!     v, i = topk(s, k=1);
//!     return v, i;
//! }
//! ```

mod shapes;

use std::collections::HashMap;

use thiserror::Error;

use crate::ir::{parse_elem, Attr, ElemType, Function, Module, TensorType, Type, ValueId};
pub use shapes::{divisor_broadcasts, infer_shapes, row_broadcast, ShapeError, TensorOpKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct FrontendError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

/// Parameter names and types of a kernel, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelSignature {
    pub name: String,
    pub params: Vec<(String, TensorType)>,
    pub results: Vec<TensorType>,
}

/// Parse kernel source into a module with one function per kernel.
pub fn parse_kernel(text: &str) -> Result<Module, FrontendError> {
    parse_kernels(text).map(|(m, _)| m)
}

/// Like [`parse_kernel`], also returning each kernel's signature.
pub fn parse_kernels(text: &str) -> Result<(Module, Vec<KernelSignature>), FrontendError> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut module = Module::new();
    let mut sigs = Vec::new();
    while !p.at_end() {
        let (f, sig) = p.kernel()?;
        if module.function(&f.name).is_some() {
            return Err(p.error_at(0, format!("duplicate kernel '{}'", f.name)));
        }
        module.functions.push(f);
        sigs.push(sig);
    }
    Ok((module, sigs))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Punct(char),
    Arrow,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, FrontendError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let adv = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
        } else if c.is_whitespace() {
            adv(1, &mut i, &mut col);
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push(Token { tok: Tok::Arrow, line: tl, col: tc });
            adv(2, &mut i, &mut col);
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                adv(1, &mut i, &mut col);
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse().map_err(|_| FrontendError {
                line: tl,
                col: tc,
                message: format!("integer '{s}' out of range"),
            })?;
            out.push(Token { tok: Tok::Int(v), line: tl, col: tc });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                adv(1, &mut i, &mut col);
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: tl,
                col: tc,
            });
        } else if "()[]{},;:=".contains(c) {
            out.push(Token { tok: Tok::Punct(c), line: tl, col: tc });
            adv(1, &mut i, &mut col);
        } else {
            return Err(FrontendError {
                line: tl,
                col: tc,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

enum ArgVal {
    Name(String, usize),
    Kw(String, KwVal, usize),
}

#[derive(Clone)]
enum KwVal {
    Int(i64),
    Bool(bool),
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn error_at(&self, offset: isize, message: impl Into<String>) -> FrontendError {
        let idx = (self.pos as isize + offset).max(0) as usize;
        let (line, col) = match self.tokens.get(idx).or(self.tokens.last()) {
            Some(t) => (t.line, t.col),
            None => (1, 1),
        };
        FrontendError { line, col, message: message.into() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self, what: &str) -> Result<Tok, FrontendError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.tok.clone())
            }
            None => Err(self.error_at(0, format!("unexpected end of input, expected {what}"))),
        }
    }

    fn punct(&mut self, c: char) -> Result<(), FrontendError> {
        match self.next(&format!("'{c}'"))? {
            Tok::Punct(p) if p == c => Ok(()),
            _ => Err(self.error_at(-1, format!("expected '{c}'"))),
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, FrontendError> {
        match self.next(what)? {
            Tok::Ident(s) => Ok(s),
            _ => Err(self.error_at(-1, format!("expected {what}"))),
        }
    }

    /// `i1[10x8192]`, `f32[10]`. Extents are lexed as identifiers like
    /// `10x8192` split on `x`, so both token shapes are accepted.
    fn tensor_type(&mut self) -> Result<TensorType, FrontendError> {
        let elem_s = self.ident("element type")?;
        let elem: ElemType = parse_elem(&elem_s)
            .filter(|e| e.bits() >= 1)
            .ok_or_else(|| self.error_at(-1, format!("unknown element type '{elem_s}'")))?;
        self.punct('[')?;
        let mut text = String::new();
        while !self.eat_punct(']') {
            match self.next("']'")? {
                Tok::Int(v) => text.push_str(&v.to_string()),
                Tok::Ident(s) => text.push_str(&s),
                _ => return Err(self.error_at(-1, "malformed tensor shape")),
            }
        }
        let mut shape = Vec::new();
        for part in text.split('x') {
            match part.parse::<usize>() {
                Ok(d) if d >= 1 => shape.push(d),
                _ => return Err(self.error_at(-1, format!("malformed tensor shape '{text}'"))),
            }
        }
        Ok(TensorType::new(shape, elem))
    }

    fn kernel(&mut self) -> Result<(Function, KernelSignature), FrontendError> {
        match self.next("'kernel'")? {
            Tok::Ident(k) if k == "kernel" => {}
            _ => return Err(self.error_at(-1, "expected 'kernel'")),
        }
        let name = self.ident("kernel name")?;
        self.punct('(')?;
        let mut params = Vec::new();
        if !self.eat_punct(')') {
            loop {
                let pname = self.ident("parameter name")?;
                self.punct(':')?;
                let ty = self.tensor_type()?;
                if params.iter().any(|(n, _)| n == &pname) {
                    return Err(self.error_at(-1, format!("duplicate parameter '{pname}'")));
                }
                params.push((pname, ty));
                if self.eat_punct(')') {
                    break;
                }
                self.punct(',')?;
            }
        }
        let mut declared = None;
        if self.peek() == Some(&Tok::Arrow) {
            self.pos += 1;
            self.punct('(')?;
            let mut ts = Vec::new();
            if !self.eat_punct(')') {
                loop {
                    ts.push(self.tensor_type()?);
                    if self.eat_punct(')') {
                        break;
                    }
                    self.punct(',')?;
                }
            }
            declared = Some(ts);
        }
        self.punct('{')?;

        let mut f = Function::new(
            name.clone(),
            params.iter().map(|(_, t)| Type::Tensor(t.clone())).collect(),
            Vec::new(),
        );
        let mut env: HashMap<String, ValueId> = params
            .iter()
            .zip(f.args().to_vec())
            .map(|((n, _), v)| (n.clone(), v))
            .collect();

        loop {
            let first = self.ident("statement")?;
            if first == "return" {
                let mut rets = Vec::new();
                if !self.eat_punct(';') {
                    loop {
                        let n = self.ident("returned name")?;
                        let v = *env
                            .get(&n)
                            .ok_or_else(|| self.error_at(-1, format!("undefined name '{n}'")))?;
                        rets.push(v);
                        if self.eat_punct(';') {
                            break;
                        }
                        self.punct(',')?;
                    }
                }
                self.punct('}')?;
                let types: Vec<Type> = rets.iter().map(|v| f.ty(*v).clone()).collect();
                let results: Vec<TensorType> =
                    types.iter().filter_map(|t| t.as_tensor().cloned()).collect();
                if let Some(d) = &declared {
                    if *d != results {
                        return Err(self.error_at(
                            -1,
                            format!(
                                "declared result types ({}) differ from returned ({})",
                                list(d),
                                list(&results)
                            ),
                        ));
                    }
                }
                f.result_types = types;
                let ret = f.build("func.return", &rets, vec![], vec![]);
                f.body.ops.push(ret);
                let sig = KernelSignature { name, params, results };
                return Ok((f, sig));
            }
            let mut lhs = vec![(first, self.pos - 1)];
            while self.eat_punct(',') {
                lhs.push((self.ident("name")?, self.pos - 1));
            }
            self.punct('=')?;
            let prim_pos = self.pos;
            let prim = self.ident("primitive")?;
            self.punct('(')?;
            let mut args = Vec::new();
            if !self.eat_punct(')') {
                loop {
                    let at = self.pos;
                    let n = self.ident("argument")?;
                    if self.eat_punct('=') {
                        let v = match self.next("attribute value")? {
                            Tok::Int(v) => KwVal::Int(v),
                            Tok::Ident(b) if b == "true" => KwVal::Bool(true),
                            Tok::Ident(b) if b == "false" => KwVal::Bool(false),
                            _ => return Err(self.error_at(-1, "expected integer or boolean")),
                        };
                        args.push(ArgVal::Kw(n, v, at));
                    } else {
                        args.push(ArgVal::Name(n, at));
                    }
                    if self.eat_punct(')') {
                        break;
                    }
                    self.punct(',')?;
                }
            }
            self.punct(';')?;
            self.statement(&mut f, &mut env, &lhs, &prim, prim_pos, args)?;
        }
    }

    fn statement(
        &self,
        f: &mut Function,
        env: &mut HashMap<String, ValueId>,
        lhs: &[(String, usize)],
        prim: &str,
        prim_pos: usize,
        args: Vec<ArgVal>,
    ) -> Result<(), FrontendError> {
        let err_at = |pos: usize, msg: String| {
            let t = &self.tokens[pos.min(self.tokens.len() - 1)];
            FrontendError { line: t.line, col: t.col, message: msg }
        };
        let mut operands = Vec::new();
        let mut kws: Vec<(String, KwVal, usize)> = Vec::new();
        for a in args {
            match a {
                ArgVal::Name(n, at) => {
                    if !kws.is_empty() {
                        return Err(err_at(at, "positional argument after keyword".into()));
                    }
                    let v = *env
                        .get(&n)
                        .ok_or_else(|| err_at(at, format!("undefined name '{n}'")))?;
                    operands.push(v);
                }
                ArgVal::Kw(k, v, at) => {
                    if kws.iter().any(|(x, _, _)| *x == k) {
                        return Err(err_at(at, format!("repeated attribute '{k}'")));
                    }
                    kws.push((k, v, at));
                }
            }
        }
        let types: Vec<TensorType> = operands
            .iter()
            .map(|v| f.tensor_ty(*v).cloned().expect("kernel values are tensors"))
            .collect();
        let rank = types.first().map(|t| t.rank()).unwrap_or(0);
        let mut take = |key: &str| kws.iter().position(|(k, _, _)| k == key).map(|i| kws.remove(i));
        let int = |kv: Option<(String, KwVal, usize)>, default: i64| -> Result<i64, FrontendError> {
            match kv {
                None => Ok(default),
                Some((_, KwVal::Int(v), _)) => Ok(v),
                Some((k, KwVal::Bool(_), at)) => {
                    Err(err_at(at, format!("attribute '{k}' expects an integer")))
                }
            }
        };
        let last_dim = rank.saturating_sub(1) as i64;
        let kind = match prim {
            "transpose" => TensorOpKind::Transpose,
            "matmul" => TensorOpKind::Matmul,
            "sub" => TensorOpKind::Sub,
            "div" => TensorOpKind::Div,
            "norm" => {
                let p = int(take("p"), 2)?;
                let dim = int(take("dim"), last_dim)?;
                if !(1..=2).contains(&p) || dim < 0 {
                    return Err(err_at(prim_pos, format!("invalid attribute: norm p = {p}, dim = {dim}")));
                }
                TensorOpKind::Norm { p: p as u32, dim: dim as usize }
            }
            "topk" => {
                let k = int(take("k"), 1)?;
                let dim = int(take("dim"), last_dim)?;
                let largest = match take("largest") {
                    None => true,
                    Some((_, KwVal::Bool(b), _)) => b,
                    Some((_, KwVal::Int(v), _)) => v != 0,
                };
                if k < 1 || dim < 0 {
                    return Err(err_at(prim_pos, format!("invalid attribute: topk k = {k}, dim = {dim}")));
                }
                TensorOpKind::Topk { k: k as usize, dim: dim as usize, largest }
            }
            other => return Err(err_at(prim_pos, format!("unknown primitive '{other}'"))),
        };
        if let Some((k, _, at)) = kws.first() {
            return Err(err_at(*at, format!("{prim} has no attribute '{k}'")));
        }
        let out = infer_shapes(kind, &types).map_err(|e| err_at(prim_pos, e.0))?;
        if out.len() != lhs.len() {
            return Err(err_at(
                lhs[0].1,
                format!("{prim} produces {} results, {} names bound", out.len(), lhs.len()),
            ));
        }
        let attrs: Vec<(&str, Attr)> = match kind {
            TensorOpKind::Norm { p, dim } => vec![("dim", dim.into()), ("p", (p as i64).into())],
            TensorOpKind::Topk { k, dim, largest } => {
                vec![("dim", dim.into()), ("k", k.into()), ("largest", largest.into())]
            }
            _ => vec![],
        };
        let op = f.build(
            &format!("tensor.{prim}"),
            &operands,
            out.into_iter().map(Type::Tensor).collect(),
            attrs,
        );
        for ((name, at), v) in lhs.iter().zip(&op.results) {
            if env.insert(name.clone(), *v).is_some() {
                return Err(err_at(*at, format!("name '{name}' bound twice")));
            }
        }
        f.body.ops.push(op);
        Ok(())
    }
}

fn list(ts: &[TensorType]) -> String {
    ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}
