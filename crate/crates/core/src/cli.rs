//! The `hc` command line front end.
//!
//! Every subcommand prints one JSON document `{manifest, result}` on stdout and
//! a one-line summary on stderr. Exit codes: 0 success, 2 invalid input,
//! 3 budget or cap exhaustion (diagnostics still printed), 1 anything else.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::concentration::{refute_t, RefutationBudget, TParams};
use crate::decompose::{theorem_b, theorem_c, DecompositionResult, PipelineConfig};
use crate::error::{Error, Result};
use crate::information::info_report;
use crate::measures::DiscreteMeasure;
use crate::processes::{
    block_independence_gap, conditional_partition, empirical_block_measure, exact_block_measure,
    relative_dbar_estimate, tc_profile, ProcessSpec,
};
use crate::transport::{dual_gap, transport_distance, PlanEntry};

#[derive(Parser, Debug)]
#[command(
    name = "hc",
    version,
    about = "Concentration and decomposition of measures on Hamming cubes"
)]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Record wall time in the manifest (makes output non-reproducible).
    #[arg(long, global = true)]
    pub report_timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Entropy, coordinate entropies, TC and DTC of a measure.
    Info { measure: PathBuf },
    /// Exact d̄ transport between two measures on the same cube.
    Transport { mu: PathBuf, nu: PathBuf },
    /// Budgeted attempt to refute `T(κ, r)`.
    Certify {
        measure: PathBuf,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 4096)]
        budget_subsets: usize,
        #[arg(long, default_value_t = 32)]
        budget_restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mixture decomposition into concentrated components.
    DecomposeB(PipelineArgs),
    /// Partition of the support into concentrated cells.
    PartitionC(PipelineArgs),
    /// Operations on stationary process specs.
    Process(ProcessArgs),
}

#[derive(Args, Debug, Clone)]
pub struct PipelineOptions {
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.2)]
    pub r: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Comma separated overrides, e.g. `c=50,cB=10,cC=10,kappa=200,alpha=100,delta=0.05,atom=0.5`.
    #[arg(long)]
    pub constants: Option<String>,
    #[arg(long, value_enum, default_value_t = Preset::Asymptotic)]
    pub preset: Preset,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    pub measure: PathBuf,
    #[command(flatten)]
    pub options: PipelineOptions,
}

#[derive(Args, Debug)]
pub struct ProcessArgs {
    pub spec: PathBuf,
    #[arg(long, value_enum)]
    pub op: ProcessOp,
    #[arg(long)]
    pub n: usize,
    /// Block length for `gap`, `tc-profile` and `partition`.
    #[arg(long)]
    pub k: Option<usize>,
    /// Second spec for `rel-dbar`.
    #[arg(long)]
    pub theta: Option<PathBuf>,
    /// Sample path length for an empirical `block` measure.
    #[arg(long)]
    pub length: Option<usize>,
    /// Good-set threshold factor for `partition`.
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[command(flatten)]
    pub options: PipelineOptions,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Asymptotic,
    Desk,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessOp {
    Block,
    TcProfile,
    RelDbar,
    Gap,
    Partition,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 over the input files in argument order.
    pub input_digest: String,
    pub config: Value,
    pub seed: u64,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
struct TransportReport {
    cost: f64,
    dual_gap: f64,
    marginal_error: f64,
    plan: Vec<PlanEntry>,
}

impl PipelineOptions {
    pub fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match self.preset {
            Preset::Asymptotic => PipelineConfig::asymptotic(self.epsilon, self.r),
            Preset::Desk => PipelineConfig::desk(self.epsilon, self.r),
        };
        cfg.seed = self.seed;
        if let Some(m) = self.max_iters {
            cfg.max_iters = m;
        }
        if let Some(spec) = &self.constants {
            apply_constants(&mut cfg, spec)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `key=value` pairs into the pipeline constants.
pub fn apply_constants(cfg: &mut PipelineConfig, spec: &str) -> Result<()> {
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("constant `{item}` is not key=value")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("constant `{key}` has non-numeric value `{value}`")))?;
        match key.trim() {
            "c" => cfg.c = v,
            "cB" | "c_b" => cfg.c_b = v,
            "cC" | "c_c" => cfg.c_c = v,
            "kappa" | "kappa_divisor" => cfg.kappa_divisor = v,
            "alpha" | "l_constant" => cfg.l_constant = v,
            "split" | "split_r_fraction" => cfg.split_r_fraction = v,
            "delta" => cfg.delta = Some(v),
            "atom" | "atom_coefficient" => cfg.atom_coefficient = Some(v),
            other => return Err(Error::InvalidParameter(format!("unknown constant `{other}`"))),
        }
    }
    Ok(())
}

fn digest(paths: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        h.update(std::fs::read(p)?);
    }
    Ok(hex::encode(h.finalize()))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

struct Outcome {
    result: Value,
    summary: String,
    /// The run finished but hit a cap.
    exhausted: bool,
}

struct Prepared {
    command: &'static str,
    inputs: Vec<PathBuf>,
    config: Value,
    seed: u64,
}

fn prepare(cmd: &Command) -> Result<Prepared> {
    Ok(match cmd {
        Command::Info { measure } => Prepared {
            command: "info",
            inputs: vec![measure.clone()],
            config: json!({}),
            seed: 0,
        },
        Command::Transport { mu, nu } => Prepared {
            command: "transport",
            inputs: vec![mu.clone(), nu.clone()],
            config: json!({}),
            seed: 0,
        },
        Command::Certify {
            measure,
            kappa,
            r,
            budget_subsets,
            budget_restarts,
            seed,
        } => Prepared {
            command: "certify",
            inputs: vec![measure.clone()],
            config: json!({"kappa": kappa, "r": r, "budget": certify_budget(*budget_subsets, *budget_restarts, *seed)}),
            seed: *seed,
        },
        Command::DecomposeB(a) | Command::PartitionC(a) => {
            let cfg = a.options.config()?;
            Prepared {
                command: if matches!(cmd, Command::DecomposeB(_)) {
                    "decompose-b"
                } else {
                    "partition-c"
                },
                inputs: vec![a.measure.clone()],
                config: json!({"preset": a.options.preset, "pipeline": cfg}),
                seed: cfg.seed,
            }
        }
        Command::Process(p) => {
            let cfg = p.options.config()?;
            let mut inputs = vec![p.spec.clone()];
            inputs.extend(p.theta.clone());
            Prepared {
                command: "process",
                inputs,
                config: json!({
                    "op": p.op, "n": p.n, "k": p.k, "length": p.length, "delta": p.delta,
                    "preset": p.options.preset, "pipeline": cfg,
                }),
                seed: cfg.seed,
            }
        }
    })
}

fn certify_budget(subsets: usize, restarts: usize, seed: u64) -> RefutationBudget {
    RefutationBudget {
        subsets,
        restarts,
        seed,
        ..RefutationBudget::default()
    }
}

fn decomposition_outcome(res: DecompositionResult) -> Outcome {
    let summary = format!(
        "m = {}, bad mass = {:.3e}, reconstruction error = {:.3e}, truncated = {}, stalled = {}",
        res.stats.m, res.bad_mass, res.reconstruction_error, res.flags.truncated, res.flags.stalled
    );
    let exhausted = res.flags.truncated || res.flags.stalled;
    Outcome {
        result: to_value(&res),
        summary,
        exhausted,
    }
}

fn execute(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Info { measure } => {
            let mu = DiscreteMeasure::load(measure)?;
            let rep = info_report(&mu);
            Ok(Outcome {
                summary: format!("H = {:.6}, TC = {:.6}, DTC = {:.6}", rep.entropy, rep.tc, rep.dtc),
                result: to_value(&rep),
                exhausted: false,
            })
        }
        Command::Transport { mu, nu } => {
            let mu = DiscreteMeasure::load(mu)?;
            let nu = DiscreteMeasure::load(nu)?;
            let plan = transport_distance(&mu, &nu)?;
            let (_, gap) = dual_gap(&plan)?;
            let rep = TransportReport {
                cost: plan.cost,
                dual_gap: gap,
                marginal_error: plan.marginal_error(),
                plan: plan.plan,
            };
            Ok(Outcome {
                summary: format!("d̄ = {:.9}, dual gap = {:.2e}", rep.cost, rep.dual_gap),
                result: to_value(&rep),
                exhausted: false,
            })
        }
        Command::Certify {
            measure,
            kappa,
            r,
            budget_subsets,
            budget_restarts,
            seed,
        } => {
            let mu = DiscreteMeasure::load(measure)?;
            let params = TParams::new(*kappa, *r)?;
            let res = refute_t(&mu, &params, &certify_budget(*budget_subsets, *budget_restarts, *seed))?;
            Ok(Outcome {
                summary: format!("T({kappa}, {r}): {:?}", res.status),
                result: to_value(&res),
                exhausted: false,
            })
        }
        Command::DecomposeB(a) => {
            let mu = DiscreteMeasure::load(&a.measure)?;
            Ok(decomposition_outcome(theorem_b(&mu, &a.options.config()?)?))
        }
        Command::PartitionC(a) => {
            let mu = DiscreteMeasure::load(&a.measure)?;
            Ok(decomposition_outcome(theorem_c(&mu, &a.options.config()?)?))
        }
        Command::Process(p) => process(p),
    }
}

fn process(p: &ProcessArgs) -> Result<Outcome> {
    let spec = ProcessSpec::load(&p.spec)?;
    let outcome = |result: Value, summary: String| Outcome {
        result,
        summary,
        exhausted: false,
    };
    match p.op {
        ProcessOp::Block => {
            let mu = match p.length {
                Some(len) => empirical_block_measure(&spec, p.n, len, p.options.seed)?,
                None => exact_block_measure(&spec, p.n)?,
            };
            let summary = format!("block measure on {} atoms", mu.len());
            Ok(outcome(to_value(&mu), summary))
        }
        ProcessOp::TcProfile => {
            let prof = tc_profile(&spec, p.n, p.k)?;
            let last = prof.last().map_or(0.0, |t| t.tc);
            Ok(outcome(to_value(&prof), format!("TC at n = {}: {last:.6}", p.n)))
        }
        ProcessOp::RelDbar => {
            let theta_path = p
                .theta
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("rel-dbar needs --theta".into()))?;
            let theta = ProcessSpec::load(theta_path)?;
            let d = relative_dbar_estimate(&spec, &theta, p.n)?;
            Ok(outcome(json!({"n": p.n, "dbar": d}), format!("d̄_n = {d:.9}")))
        }
        ProcessOp::Gap => {
            let k = p.k.ok_or_else(|| Error::InvalidParameter("gap needs --k".into()))?;
            let g = block_independence_gap(&spec, p.n, k)?;
            Ok(outcome(
                json!({"n": p.n, "k": k, "gap": g}),
                format!("block independence gap = {g:.9}"),
            ))
        }
        ProcessOp::Partition => {
            let k =
                p.k.ok_or_else(|| Error::InvalidParameter("partition needs --k".into()))?;
            let cp = conditional_partition(&spec, p.n, k, p.delta, &p.options.config()?)?;
            let exhausted = cp
                .parts
                .iter()
                .filter_map(|x| x.result.as_ref())
                .any(|r| r.flags.truncated || r.flags.stalled);
            let summary = format!("ν(W) = {:.6} over {} conditions", cp.good_mass, cp.parts.len());
            Ok(Outcome {
                result: to_value(&cp),
                summary,
                exhausted,
            })
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_validation() || matches!(e, Error::Io(_)) {
        2
    } else if e.is_budget() {
        3
    } else {
        1
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start thread pool: {e}");
            return 1;
        }
    };
    pool.install(|| run_parsed(&cli, out, err))
}

fn error_value(e: &Error) -> Value {
    let kind = match exit_code(e) {
        2 => "invalid_input",
        3 => "budget_exhausted",
        _ => "internal",
    };
    json!({"kind": kind, "message": e.to_string()})
}

/// Errors raised before a manifest exists still produce a JSON document.
fn report_early(e: &Error, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32 {
    let text = serde_json::to_string_pretty(&json!({"error": error_value(e)})).expect("error serializes");
    let _ = writeln!(out, "{text}");
    let _ = writeln!(err, "error: {e}");
    exit_code(e)
}

fn run_parsed(cli: &Cli, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32 {
    let start = Instant::now();
    let prepared = match prepare(&cli.command) {
        Ok(p) => p,
        Err(e) => return report_early(&e, out, err),
    };
    let paths: Vec<&Path> = prepared.inputs.iter().map(PathBuf::as_path).collect();
    let input_digest = match digest(&paths) {
        Ok(d) => d,
        Err(e) => return report_early(&e, out, err),
    };
    let outcome = execute(&cli.command);
    let manifest = RunManifest {
        command: prepared.command.into(),
        input_digest,
        config: prepared.config,
        seed: prepared.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        wall_time_ms: cli.report_timing.then(|| start.elapsed().as_secs_f64() * 1e3),
    };
    let (doc, code, summary) = match outcome {
        Ok(o) => {
            let code = if o.exhausted { 3 } else { 0 };
            (json!({"manifest": manifest, "result": o.result}), code, o.summary)
        }
        Err(e) => {
            let doc = json!({"manifest": manifest, "error": error_value(&e)});
            (doc, exit_code(&e), format!("error: {e}"))
        }
    };
    let text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
    let _ = writeln!(out, "{text}");
    let _ = writeln!(err, "{}: {summary}", prepared.command);
    code
}
