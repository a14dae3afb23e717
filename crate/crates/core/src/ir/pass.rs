use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::{verify, Diagnostic, Module};
use crate::arch::ArchSpec;

#[derive(Debug, Error)]
pub enum PassError {
    #[error("unregistered pass '{0}'")]
    Unregistered(String),
    #[error("malformed pipeline: {0}")]
    Syntax(String),
    #[error("pass '{pass}': {message}")]
    BadOption { pass: String, message: String },
    #[error("input module does not verify: {}", join_diags(.0))]
    InvalidInput(Vec<Diagnostic>),
    #[error("pass '{pass}' failed: {message}")]
    Failed { pass: String, message: String },
    #[error("pass '{pass}' produced invalid IR: {}", join_diags(.diags))]
    Invalid { pass: String, diags: Vec<Diagnostic> },
}

fn join_diags(d: &[Diagnostic]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

/// Extra inputs some passes need beyond their options.
#[derive(Debug, Clone, Default)]
pub struct PassContext {
    pub arch: Option<ArchSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OptKind {
    Int { min: i64 },
    Choice(&'static [&'static str]),
}

struct PassDecl {
    name: &'static str,
    options: &'static [(&'static str, OptKind)],
    run: fn(&Module, &PassOptions, &PassContext) -> Result<Module, String>,
}

const POS: OptKind = OptKind::Int { min: 1 };
const NONNEG: OptKind = OptKind::Int { min: 0 };

static PASSES: &[PassDecl] = &[
    PassDecl {
        name: "lower-tensor-to-cim",
        options: &[],
        run: |m, _, _| Ok(crate::cim::lower_tensor_to_cim(m)),
    },
    PassDecl {
        name: "cim-fuse-ops",
        options: &[("flag", OptKind::Choice(&["similarity", "none"]))],
        run: |m, o, _| {
            Ok(crate::cim::fuse_ops(
                m,
                o.str("flag").unwrap_or("similarity") == "similarity",
            ))
        },
    },
    PassDecl {
        name: "cim-partition",
        options: &[("rows", POS), ("cols", POS)],
        run: |m, o, ctx| {
            let arch = ctx.arch.as_ref();
            let rows = o.int("rows").or(arch.map(|a| a.rows() as i64));
            let cols = o.int("cols").or(arch.map(|a| a.cols() as i64));
            match (rows, cols) {
                (Some(r), Some(c)) => crate::cim::partition(m, r as usize, c as usize),
                _ => Err("pe sizes required: pass rows and cols or an architecture".into()),
            }
        },
    },
    PassDecl {
        name: "lower-cim-to-cam",
        options: &[
            ("device", OptKind::Choice(&["tcam", "mcam", "acam"])),
            ("match", OptKind::Choice(&["exact", "best", "threshold"])),
            ("metric", OptKind::Choice(&["hamming", "euclidean"])),
            ("threshold", NONNEG),
        ],
        run: |m, o, _| {
            let spec = crate::cam::LoweringSpec::from_options(
                o.str("device"),
                o.str("match"),
                o.str("metric"),
                o.int("threshold"),
            )?;
            crate::cam::lower_cim_to_cam(m, &spec).map_err(|e| e.to_string())
        },
    },
    PassDecl {
        name: "cam-map",
        options: &[
            (
                "mode",
                OptKind::Choice(&["base", "power", "density", "power_density"]),
            ),
            ("max_active", POS),
        ],
        run: |m, o, ctx| {
            let arch = ctx
                .arch
                .as_ref()
                .ok_or("cam-map requires an architecture specification")?;
            let mode = match o.str("mode") {
                Some(s) => crate::cam::OptMode::parse(s, o.int("max_active").map(|v| v as u32))?,
                None => arch.default_mode(o.int("max_active").map(|v| v as u32)),
            };
            crate::cam::cam_map(m, arch, mode).map_err(|e| e.to_string())
        },
    },
];

/// Validated `key=value` options for one pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PassOptions {
    values: BTreeMap<String, String>,
}

impl PassOptions {
    pub fn int(&self, key: &str) -> Option<i64> {
        self.values.get(key).and_then(|v| v.parse().ok())
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Ordered list of passes with their options.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineSpec {
    pub passes: Vec<(String, PassOptions)>,
}

impl PipelineSpec {
    pub fn new() -> Self {
        PipelineSpec::default()
    }

    /// Append a pass, checking its name and options against the registry.
    pub fn push(&mut self, name: &str, options: &[(&str, &str)]) -> Result<&mut Self, PassError> {
        let decl = find(name)?;
        let mut opts = PassOptions::default();
        for (k, v) in options {
            check_option(decl, k, v)?;
            opts.set(k, v);
        }
        self.passes.push((name.to_string(), opts));
        Ok(self)
    }

    /// Parse `pass-a,pass-b{key=value,key=value},...`.
    pub fn parse(text: &str) -> Result<PipelineSpec, PassError> {
        let mut spec = PipelineSpec::new();
        let mut rest = text.trim();
        while !rest.is_empty() {
            let end = rest.find([',', '{']).unwrap_or(rest.len());
            let name = rest[..end].trim();
            if name.is_empty() {
                return Err(PassError::Syntax(format!("expected a pass name at '{rest}'")));
            }
            rest = &rest[end..];
            let mut opts: Vec<(&str, &str)> = Vec::new();
            if let Some(r) = rest.strip_prefix('{') {
                let close = r
                    .find('}')
                    .ok_or_else(|| PassError::Syntax(format!("unclosed options for '{name}'")))?;
                for item in r[..close].split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let (k, v) = item.split_once('=').ok_or_else(|| {
                        PassError::Syntax(format!("option '{item}' is not key=value"))
                    })?;
                    opts.push((k.trim(), v.trim()));
                }
                rest = &r[close + 1..];
            }
            spec.push(name, &opts)?;
            rest = rest.trim_start();
            if let Some(r) = rest.strip_prefix(',') {
                rest = r.trim_start();
                if rest.is_empty() {
                    return Err(PassError::Syntax("trailing ','".into()));
                }
            } else if !rest.is_empty() {
                return Err(PassError::Syntax(format!("unexpected '{rest}'")));
            }
        }
        Ok(spec)
    }
}

impl fmt::Display for PipelineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, opts)) in self.passes.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(name)?;
            if !opts.values.is_empty() {
                let items: Vec<String> = opts.iter().map(|(k, v)| format!("{k}={v}")).collect();
                write!(f, "{{{}}}", items.join(","))?;
            }
        }
        Ok(())
    }
}

fn find(name: &str) -> Result<&'static PassDecl, PassError> {
    PASSES
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| PassError::Unregistered(name.to_string()))
}

fn check_option(decl: &PassDecl, key: &str, value: &str) -> Result<(), PassError> {
    let bad = |message: String| PassError::BadOption {
        pass: decl.name.to_string(),
        message,
    };
    let (_, kind) = decl
        .options
        .iter()
        .find(|(k, _)| *k == key)
        .ok_or_else(|| bad(format!("unknown option '{key}'")))?;
    match kind {
        OptKind::Int { min } => match value.parse::<i64>() {
            Ok(v) if v >= *min => Ok(()),
            Ok(v) => Err(bad(format!("option '{key}' must be >= {min}, got {v}"))),
            Err(_) => Err(bad(format!("option '{key}' expects an integer, got '{value}'"))),
        },
        OptKind::Choice(choices) => {
            if choices.contains(&value) {
                Ok(())
            } else {
                Err(bad(format!(
                    "option '{key}' must be one of {}, got '{value}'",
                    choices.join("|")
                )))
            }
        }
    }
}

/// A module-to-module transformation.
pub trait Pass {
    fn name(&self) -> &str;
    fn run(&self, m: &Module, ctx: &PassContext) -> Result<Module, PassError>;
}

struct Registered {
    decl: &'static PassDecl,
    options: PassOptions,
}

impl Pass for Registered {
    fn name(&self) -> &str {
        self.decl.name
    }

    fn run(&self, m: &Module, ctx: &PassContext) -> Result<Module, PassError> {
        (self.decl.run)(m, &self.options, ctx).map_err(|message| PassError::Failed {
            pass: self.decl.name.to_string(),
            message,
        })
    }
}

/// Instantiate a registered pass.
pub fn create_pass(name: &str, options: PassOptions) -> Result<Box<dyn Pass>, PassError> {
    let decl = find(name)?;
    for (k, v) in options.iter() {
        check_option(decl, k, v)?;
    }
    Ok(Box::new(Registered { decl, options }))
}

pub fn run_pipeline(m: &Module, p: &PipelineSpec) -> Result<Module, PassError> {
    run_pipeline_with(m, p, &PassContext::default())
}

/// Apply each pass in order. The input is left untouched and the output of
/// every pass is verified.
pub fn run_pipeline_with(
    m: &Module,
    p: &PipelineSpec,
    ctx: &PassContext,
) -> Result<Module, PassError> {
    run_stages(m, p, ctx, |_, _| {})
}

/// Like [`run_pipeline_with`], calling `observe` with each pass name and its
/// output module.
pub fn run_stages(
    m: &Module,
    p: &PipelineSpec,
    ctx: &PassContext,
    mut observe: impl FnMut(&str, &Module),
) -> Result<Module, PassError> {
    let diags = verify(m);
    if !diags.is_empty() {
        return Err(PassError::InvalidInput(diags));
    }
    let mut cur = m.clone();
    for (name, opts) in &p.passes {
        let pass = create_pass(name, opts.clone())?;
        cur = pass.run(&cur, ctx)?;
        let diags = verify(&cur);
        if !diags.is_empty() {
            return Err(PassError::Invalid {
                pass: name.clone(),
                diags,
            });
        }
        observe(name, &cur);
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_options() {
        let p = PipelineSpec::parse("lower-tensor-to-cim, cim-partition{rows=32, cols=16}").unwrap();
        assert_eq!(p.passes.len(), 2);
        assert_eq!(p.passes[1].1.int("cols"), Some(16));
        assert_eq!(p.to_string(), "lower-tensor-to-cim,cim-partition{cols=16,rows=32}");
        assert_eq!(PipelineSpec::parse(&p.to_string()).unwrap(), p);
    }

    #[test]
    fn rejects_unknown_pass_and_bad_options() {
        let e = PipelineSpec::parse("unknown-pass").unwrap_err();
        assert!(e.to_string().contains("unregistered pass"));
        assert!(matches!(
            PipelineSpec::parse("cim-partition{rows=0,cols=4}"),
            Err(PassError::BadOption { .. })
        ));
        assert!(matches!(
            PipelineSpec::parse("cam-map{mode=fast}"),
            Err(PassError::BadOption { .. })
        ));
        assert!(matches!(
            PipelineSpec::parse("cim-fuse-ops{speed=2}"),
            Err(PassError::BadOption { .. })
        ));
        assert!(PipelineSpec::parse("lower-tensor-to-cim,").is_err());
    }

    #[test]
    fn empty_pipeline_is_identity() {
        let m = Module::new();
        assert_eq!(run_pipeline(&m, &PipelineSpec::new()).unwrap(), m);
    }
}
