//! End-to-end compile and simulate driver.

use std::fmt;

use thiserror::Error;

use crate::arch::ArchSpec;
use crate::cam::{CamKernel, LoweringSpec, MatchType};
use crate::frontend::{parse_kernels, FrontendError, KernelSignature};
use crate::ir::{run_stages, Module, PassContext, PassError, PipelineSpec};
use crate::sim::{dense_oracle, execute, Execution, Filter, SimError, Tensor};

/// Named IR snapshots along the lowering flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Tensor,
    Cim,
    CimFused,
    CimPartitioned,
    Cam,
    CamMapped,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Tensor,
        Stage::Cim,
        Stage::CimFused,
        Stage::CimPartitioned,
        Stage::Cam,
        Stage::CamMapped,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Tensor => "tensor",
            Stage::Cim => "cim",
            Stage::CimFused => "cim-fused",
            Stage::CimPartitioned => "cim-partitioned",
            Stage::Cam => "cam",
            Stage::CamMapped => "cam-mapped",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Pass that produces this stage from the previous one.
    fn pass(self) -> Option<&'static str> {
        match self {
            Stage::Tensor => None,
            Stage::Cim => Some("lower-tensor-to-cim"),
            Stage::CimFused => Some("cim-fuse-ops"),
            Stage::CimPartitioned => Some("cim-partition"),
            Stage::Cam => Some("lower-cim-to-cam"),
            Stage::CamMapped => Some("cam-map"),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Search and mapping choices; unset fields fall back to pass defaults
/// (TCAM best-match Hamming search, mode from the architecture file).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileOptions {
    pub device: Option<String>,
    pub match_type: Option<String>,
    pub metric: Option<String>,
    pub threshold: Option<i64>,
    pub mode: Option<String>,
    pub max_active: Option<u32>,
    /// Replace recognized kernels by `cim.similarity`.
    pub rewrite: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            device: None,
            match_type: None,
            metric: None,
            threshold: None,
            mode: None,
            max_active: None,
            rewrite: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("{0}")]
    Frontend(#[from] FrontendError),
    #[error("{0}")]
    Pass(#[from] PassError),
}

/// Pipeline from the tensor stage to the mapped CAM stage.
pub fn pipeline_spec(opts: &CompileOptions) -> Result<PipelineSpec, PassError> {
    let mut spec = PipelineSpec::new();
    spec.push("lower-tensor-to-cim", &[])?;
    let flag = if opts.rewrite { "similarity" } else { "none" };
    spec.push("cim-fuse-ops", &[("flag", flag)])?;
    spec.push("cim-partition", &[])?;
    let threshold = opts.threshold.map(|t| t.to_string());
    let mut lower: Vec<(&str, &str)> = Vec::new();
    for (k, v) in [
        ("device", opts.device.as_deref()),
        ("match", opts.match_type.as_deref()),
        ("metric", opts.metric.as_deref()),
        ("threshold", threshold.as_deref()),
    ] {
        if let Some(v) = v {
            lower.push((k, v));
        }
    }
    spec.push("lower-cim-to-cam", &lower)?;
    let max_active = opts.max_active.map(|m| m.to_string());
    let mut map: Vec<(&str, &str)> = Vec::new();
    if let Some(m) = opts.mode.as_deref() {
        map.push(("mode", m));
    }
    if let Some(m) = max_active.as_deref() {
        map.push(("max_active", m));
    }
    spec.push("cam-map", &map)?;
    Ok(spec)
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub signatures: Vec<KernelSignature>,
    /// One module per [`Stage`], in flow order.
    pub stages: Vec<(Stage, Module)>,
}

impl Compiled {
    pub fn stage(&self, s: Stage) -> &Module {
        &self.stages.iter().find(|(st, _)| *st == s).expect("every stage is recorded").1
    }

    pub fn mapped(&self) -> &Module {
        self.stage(Stage::CamMapped)
    }
}

pub fn compile(source: &str, arch: &ArchSpec, opts: &CompileOptions) -> Result<Compiled, CompileError> {
    let (tensor, signatures) = parse_kernels(source)?;
    compile_module(tensor, signatures, arch, opts)
}

pub fn compile_module(
    tensor: Module,
    signatures: Vec<KernelSignature>,
    arch: &ArchSpec,
    opts: &CompileOptions,
) -> Result<Compiled, CompileError> {
    let spec = pipeline_spec(opts)?;
    let ctx = PassContext { arch: Some(arch.clone()) };
    let mut stages = vec![(Stage::Tensor, tensor.clone())];
    run_stages(&tensor, &spec, &ctx, |pass, m| {
        let stage = Stage::ALL
            .into_iter()
            .find(|s| s.pass() == Some(pass))
            .expect("pipeline passes map to stages");
        stages.push((stage, m.clone()));
    })?;
    Ok(Compiled { signatures, stages })
}

/// Simulate `stage` of a compiled program with the architecture's
/// technology parameters.
pub fn simulate(
    c: &Compiled,
    stage: Stage,
    function: Option<&str>,
    inputs: &[Tensor],
    arch: &ArchSpec,
    trace: bool,
) -> Result<Execution, SimError> {
    execute(c.stage(stage), function, inputs, &arch.tech, trace)
}

/// Dense reference outputs for `function` on `inputs`.
///
/// Best-match programs are checked against the kernel as written,
/// evaluated at the tensor stage. Exact and threshold searches filter
/// rows, which the tensor kernel does not express, so their similarity
/// results come from [`dense_oracle`] with the same filter.
pub fn reference_outputs(
    c: &Compiled,
    function: Option<&str>,
    inputs: &[Tensor],
    opts: &CompileOptions,
) -> Result<Vec<Tensor>, String> {
    let tensor = c.stage(Stage::Tensor);
    let mut outs = execute(tensor, function, inputs, &Default::default(), false)
        .map_err(|e| e.to_string())?
        .outputs;
    let spec = LoweringSpec::from_options(
        opts.device.as_deref(),
        opts.match_type.as_deref(),
        opts.metric.as_deref(),
        opts.threshold,
    )?;
    if spec.search.match_type == MatchType::Best {
        return Ok(outs);
    }
    let fused = c.stage(Stage::CimFused);
    let f = match function {
        Some(n) => fused.function(n),
        None => fused.functions.first(),
    }
    .ok_or("no function to check")?;
    let ret = f.body.ops.last().ok_or("empty function")?;
    let filter = Filter {
        match_type: spec.search.match_type,
        threshold: spec.search.threshold,
    };
    for op in f.body.ops.iter().filter(|op| op.is("cim", "execute")) {
        let Some(k) = CamKernel::from_execute(f, op, spec).map_err(|e| e.to_string())? else {
            continue;
        };
        let arg = |v| f.args().iter().position(|a| *a == v);
        let (Some(si), Some(qi)) = (arg(k.stored), arg(k.query)) else {
            return Err("filtered search on computed operands has no dense reference".into());
        };
        let (vals, idxs) = dense_oracle(&inputs[si], &inputs[qi], k.metric, k.k, k.largest, filter);
        let tys: Vec<_> = op.results.iter().map(|r| f.tensor_ty(*r).cloned()).collect();
        for (j, r) in op.results.iter().enumerate() {
            let Some(ty) = &tys[j] else { continue };
            let data: Vec<f64> = if j == 0 { vals.clone() } else { idxs.iter().map(|&i| i as f64).collect() };
            for (pos, v) in ret.operands.iter().enumerate() {
                if v == r {
                    outs[pos] = Tensor::from_numbers(ty, data.clone());
                }
            }
        }
    }
    Ok(outs)
}
