//! Scenario documents.
//!
//! A scenario is a JSON object with a version tag, numeric options, a list of
//! contexts, an optional context graph and an ordered task list. Loading parses
//! the text, then validates everything a task will need (matrix shapes,
//! Hermiticity, generator construction, graph structure, parameter ranges), so a
//! scenario that loads can only fail at run time on genuinely numerical grounds.
//!
//! Complex matrices are arrays of rows; an entry is either a real number or an
//! `[re, im]` pair.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

use nqs_core::curvature::{partial_swap_channel, rotation_channel, ResponseMap};
use nqs_core::models::random_gkls;
use nqs_core::nlayer::{ChargeField, ContextGraph, Edge, GlobalActionSpec, Vertex, VertexPotential};
use nqs_core::qlayer::{build_superoperator, kraus_channel, unitary_channel, GklsGenerator};
use nqs_core::slayer::{
    CartanSet, Divergence, QuadraticFunctional, DEFAULT_DIVERGENCE_STEP, DEFAULT_HESSIAN_STEP,
};
use nqs_core::{CMatrix, DensityOperator, HermitianOperator, RMatrix, Superoperator, Tolerances};

use crate::error::{CliError, CliResult};

/// Version tag shared by scenarios and reports.
pub const VERSION: &str = "nqs-geom/1";

pub const MAX_DIM: usize = 16;
pub const MAX_CHAIN: usize = 5000;
pub const MAX_THETAS: usize = 32;
pub const MAX_STATES: usize = 1000;
pub const MAX_STEPS: usize = 100;
pub const MAX_ITER: usize = 100_000;
/// Bound on the magnitude of every scalar input (rates, entries, weights, times).
pub const MAX_MAGNITUDE: f64 = 1e6;

const TASK_KINDS: [&str; 10] = [
    "analyze-context",
    "sensitivity",
    "metric",
    "solve-graph",
    "holonomy",
    "transport",
    "chain-demo",
    "qutrit-demo",
    "response-chain",
    "doeblin-check",
];

// ---------------------------------------------------------------------------
// Raw document

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawEntry {
    Real(f64),
    Complex([f64; 2]),
}

type RawMatrix = Vec<Vec<RawEntry>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    version: String,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    options: RawOptions,
    #[serde(default)]
    contexts: Vec<RawContext>,
    #[serde(default)]
    graph: Option<RawGraph>,
    #[serde(default)]
    tasks: Vec<Value>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptions {
    #[serde(default)]
    tolerances: Option<RawTolerances>,
    #[serde(default)]
    hessian_step: Option<f64>,
    #[serde(default)]
    divergence_step: Option<f64>,
    #[serde(default)]
    doeblin_t0: Option<f64>,
    /// Fallback seed for random generator forms that do not carry their own.
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    #[serde(default)]
    construction: Option<f64>,
    #[serde(default)]
    equality: Option<f64>,
    #[serde(default)]
    faithfulness: Option<f64>,
    #[serde(default)]
    kernel: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContext {
    id: String,
    dim: usize,
    #[serde(default)]
    generator: Option<RawGenerator>,
    #[serde(default)]
    cartan: Vec<RawCartan>,
    #[serde(default)]
    functional: Option<RawFunctional>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    form: String,
    #[serde(default)]
    rate: Option<f64>,
    #[serde(default)]
    matrices: Vec<RawMatrix>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCartan {
    label: String,
    matrix: RawMatrix,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFunctional {
    kind: String,
    stiffness: Vec<Vec<f64>>,
    preferred: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    vertices: Vec<String>,
    #[serde(default)]
    edges: Vec<RawEdge>,
    #[serde(default)]
    coupling: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    a: String,
    b: String,
    weight: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    form: String,
    #[serde(default)]
    matrices: Vec<RawMatrix>,
    #[serde(default)]
    a: Option<usize>,
    #[serde(default)]
    b: Option<usize>,
    #[serde(default)]
    theta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextT0 {
    context: String,
    #[serde(default)]
    t0: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSensitivity {
    context: String,
    perturbation: RawGenerator,
    #[serde(default)]
    scale: Option<f64>,
    #[serde(default)]
    t0: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    context: String,
    method: String,
    #[serde(default)]
    at: Option<Vec<f64>>,
    #[serde(default)]
    state: Option<String>,
    #[serde(default)]
    divergence: Option<String>,
    #[serde(default)]
    step: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolveGraph {
    #[serde(default)]
    initial: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    max_iter: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoopEdge {
    source: String,
    target: String,
    generator: RawMatrix,
    #[serde(default = "one")]
    scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHolonomy {
    thetas: Vec<f64>,
    #[serde(default, rename = "loop")]
    builtin: Option<String>,
    #[serde(default)]
    context: Option<String>,
    #[serde(default)]
    edges: Option<Vec<RawLoopEdge>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransport {
    source: String,
    target: String,
    channel: RawChannel,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChainDemo {
    sizes: Vec<usize>,
    #[serde(default = "one")]
    weight: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQutritDemo {
    #[serde(default)]
    thetas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDirection {
    label: String,
    generator: RawGenerator,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResponseChain {
    context: String,
    directions: Vec<RawDirection>,
    dn: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoeblinCheck {
    dim: usize,
    #[serde(default)]
    seed: Option<u64>,
    states: usize,
    steps: usize,
}

// ---------------------------------------------------------------------------
// Validated scenario

#[derive(Debug, Clone)]
pub struct Options {
    pub tolerances: Tolerances,
    pub hessian_step: f64,
    pub divergence_step: f64,
    /// Doeblin time used when a task does not give its own; `None` means `1/g`.
    pub doeblin_t0: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Context {
    pub id: String,
    pub dim: usize,
    pub generator: Option<Superoperator>,
    pub cartan: Option<CartanSet>,
    pub functional: Option<QuadraticFunctional>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricMethod {
    Hessian,
    Covariance,
    Fisher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceState {
    Gibbs,
    Stationary,
}

#[derive(Debug, Clone)]
pub enum LoopSpec {
    /// `C1 → C2 → C1` by conjugation with `exp(±iθλ₁)` on the qutrit.
    QutritRotation,
    /// Round trip through the convex partial swap of levels 0 and 1.
    PartialSwap,
    /// Rotation edges `exp(i·scale·θ·X)` with charges from one context's Cartan set.
    Custom {
        cartan: CartanSet,
        edges: Vec<(String, String, CMatrix, f64)>,
    },
}

#[derive(Debug, Clone)]
pub enum TaskSpec {
    AnalyzeContext {
        context: String,
        t0: Option<f64>,
    },
    Sensitivity {
        context: String,
        perturbation: Superoperator,
        t0: Option<f64>,
    },
    Metric {
        context: String,
        method: MetricMethod,
        at: Vec<f64>,
        state: CovarianceState,
        step: f64,
    },
    SolveGraph {
        initial: Option<ChargeField>,
        tol: f64,
        max_iter: usize,
    },
    Holonomy {
        rank: usize,
        loop_spec: LoopSpec,
        thetas: Vec<f64>,
    },
    Transport {
        source: String,
        target: String,
        channel: Superoperator,
    },
    ChainDemo {
        sizes: Vec<usize>,
        weight: f64,
    },
    QutritDemo {
        thetas: Vec<f64>,
    },
    ResponseChain {
        context: String,
        response: ResponseMap,
        dn: Vec<f64>,
    },
    DoeblinCheck {
        dim: usize,
        seed: u64,
        states: usize,
        steps: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Task {
    pub id: String,
    pub kind: String,
    /// Task parameters as written, echoed into the report.
    pub inputs: Value,
    pub spec: TaskSpec,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub version: String,
    pub name: Option<String>,
    pub options: Options,
    pub contexts: IndexMap<String, Context>,
    pub graph: Option<GlobalActionSpec>,
    pub tasks: Vec<Task>,
}

impl Scenario {
    pub fn context(&self, id: &str) -> Option<&Context> {
        self.contexts.get(id)
    }

    pub fn edge_count(&self) -> usize {
        self.graph.as_ref().map_or(0, |g| g.graph().edges().len())
    }
}

/// Default θ values of the qutrit demo: three fit points and a θ = 0 sanity point.
pub const QUTRIT_DEMO_THETAS: [f64; 4] = [0.1, 0.05, 0.025, 0.0];

// ---------------------------------------------------------------------------
// Loading

pub fn load_scenario(text: &str) -> CliResult<Scenario> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawScenario = serde_path_to_error::deserialize(&mut de).map_err(|e| CliError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    de.end().map_err(|e| CliError::Parse {
        path: ".".into(),
        message: e.to_string(),
    })?;
    Validator::default().scenario(raw)
}

pub fn load_scenario_file(path: &std::path::Path) -> CliResult<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    load_scenario(&text)
}

fn invalid<T>(path: &str, message: impl ToString) -> CliResult<T> {
    Err(CliError::validation(path, message))
}

fn check_scalar(path: &str, x: f64) -> CliResult<f64> {
    if x.is_finite() && x.abs() <= MAX_MAGNITUDE {
        Ok(x)
    } else {
        invalid(path, format!("value must be finite with magnitude at most {MAX_MAGNITUDE:e}, got {x}"))
    }
}

fn check_positive(path: &str, x: f64) -> CliResult<f64> {
    let x = check_scalar(path, x)?;
    if x > 0.0 {
        Ok(x)
    } else {
        invalid(path, format!("value must be positive, got {x}"))
    }
}

fn check_count(path: &str, n: usize, lo: usize, hi: usize) -> CliResult<usize> {
    if (lo..=hi).contains(&n) {
        Ok(n)
    } else {
        invalid(path, format!("value must lie in {lo}..={hi}, got {n}"))
    }
}

fn real_entry(e: &RawEntry) -> Complex64 {
    match e {
        RawEntry::Real(x) => Complex64::new(*x, 0.0),
        RawEntry::Complex([re, im]) => Complex64::new(*re, *im),
    }
}

fn complex_matrix(path: &str, raw: &RawMatrix, dim: usize) -> CliResult<CMatrix> {
    if raw.len() != dim {
        return invalid(path, format!("expected {dim} rows, found {}", raw.len()));
    }
    let mut m = CMatrix::zeros(dim, dim);
    for (i, row) in raw.iter().enumerate() {
        if row.len() != dim {
            return invalid(&format!("{path}[{i}]"), format!("expected {dim} columns, found {}", row.len()));
        }
        for (j, e) in row.iter().enumerate() {
            let z = real_entry(e);
            let at = format!("{path}[{i}][{j}]");
            check_scalar(&at, z.re)?;
            check_scalar(&at, z.im)?;
            m[(i, j)] = z;
        }
    }
    Ok(m)
}

fn parse_params<T: DeserializeOwned>(path: &str, value: Value) -> CliResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        CliError::Parse {
            path: if inner == "." { path.to_string() } else { format!("{path}.{inner}") },
            message: e.inner().to_string(),
        }
    })
}

#[derive(Default)]
struct Validator {
    tol: Tolerances,
    fallback_seed: Option<u64>,
}

impl Validator {
    fn scenario(mut self, raw: RawScenario) -> CliResult<Scenario> {
        if raw.version != VERSION {
            return invalid("version", format!("unsupported version `{}`, expected `{VERSION}`", raw.version));
        }
        let options = self.options(&raw.options)?;
        self.tol = options.tolerances;
        self.fallback_seed = raw.options.seed;

        let mut contexts = IndexMap::new();
        for (i, c) in raw.contexts.iter().enumerate() {
            let path = format!("contexts[{i}]");
            let ctx = self.context(&path, c)?;
            if contexts.contains_key(&ctx.id) {
                return invalid(&format!("{path}.id"), format!("duplicate context id `{}`", ctx.id));
            }
            contexts.insert(ctx.id.clone(), ctx);
        }

        let graph = match &raw.graph {
            Some(g) => Some(self.graph(g, &contexts)?),
            None => None,
        };

        let mut scenario = Scenario {
            version: raw.version,
            name: raw.name,
            options,
            contexts,
            graph,
            tasks: Vec::new(),
        };
        let mut seen = BTreeSet::new();
        for (i, value) in raw.tasks.into_iter().enumerate() {
            let task = self.task(&format!("tasks[{i}]"), value, &scenario)?;
            if !seen.insert(task.id.clone()) {
                return invalid(&format!("tasks[{i}].id"), format!("duplicate task id `{}`", task.id));
            }
            scenario.tasks.push(task);
        }
        Ok(scenario)
    }

    fn options(&self, raw: &RawOptions) -> CliResult<Options> {
        let mut tol = Tolerances::default();
        if let Some(t) = &raw.tolerances {
            let fields = [
                ("construction", t.construction, &mut tol.construction),
                ("equality", t.equality, &mut tol.equality),
                ("faithfulness", t.faithfulness, &mut tol.faithfulness),
                ("kernel", t.kernel, &mut tol.kernel),
            ];
            for (name, given, slot) in fields {
                if let Some(v) = given {
                    let path = format!("options.tolerances.{name}");
                    if !(v.is_finite() && v > 0.0 && v < 1.0) {
                        return invalid(&path, format!("tolerance must lie in (0, 1), got {v}"));
                    }
                    *slot = v;
                }
            }
        }
        let step = |name: &str, v: Option<f64>, default: f64| -> CliResult<f64> {
            match v {
                None => Ok(default),
                Some(h) if h.is_finite() && h > 0.0 && h <= 0.1 => Ok(h),
                Some(h) => invalid(&format!("options.{name}"), format!("step must lie in (0, 0.1], got {h}")),
            }
        };
        Ok(Options {
            tolerances: tol,
            hessian_step: step("hessian_step", raw.hessian_step, DEFAULT_HESSIAN_STEP)?,
            divergence_step: step("divergence_step", raw.divergence_step, DEFAULT_DIVERGENCE_STEP)?,
            doeblin_t0: raw
                .doeblin_t0
                .map(|t| check_positive("options.doeblin_t0", t))
                .transpose()?,
        })
    }

    fn context(&self, path: &str, raw: &RawContext) -> CliResult<Context> {
        if raw.id.is_empty() {
            return invalid(&format!("{path}.id"), "context id must be non-empty");
        }
        let dim = check_count(&format!("{path}.dim"), raw.dim, 1, MAX_DIM)?;
        let generator = raw
            .generator
            .as_ref()
            .map(|g| self.generator(&format!("{path}.generator"), g, dim))
            .transpose()?;
        let cartan = if raw.cartan.is_empty() {
            None
        } else {
            let mut labels = Vec::new();
            let mut gens = Vec::new();
            for (k, c) in raw.cartan.iter().enumerate() {
                let at = format!("{path}.cartan[{k}]");
                if c.label.is_empty() || labels.contains(&c.label) {
                    return invalid(&format!("{at}.label"), format!("labels must be non-empty and unique, got `{}`", c.label));
                }
                let m = complex_matrix(&format!("{at}.matrix"), &c.matrix, dim)?;
                let h = HermitianOperator::with_tolerance(m, self.tol.construction)
                    .map_err(|e| CliError::validation(format!("{at}.matrix"), e))?;
                labels.push(c.label.clone());
                gens.push(h);
            }
            Some(
                CartanSet::with_tolerance(labels, gens, self.tol.equality)
                    .map_err(|e| CliError::validation(format!("{path}.cartan"), e))?,
            )
        };
        let functional = match &raw.functional {
            None => None,
            Some(f) => {
                let at = format!("{path}.functional");
                if f.kind != "quadratic" {
                    return invalid(&format!("{at}.kind"), format!("unsupported functional `{}`, expected `quadratic`", f.kind));
                }
                let r = f.preferred.len();
                if r == 0 || r > MAX_DIM * MAX_DIM {
                    return invalid(&format!("{at}.preferred"), format!("rank must lie in 1..={}, got {r}", MAX_DIM * MAX_DIM));
                }
                if f.stiffness.len() != r || f.stiffness.iter().any(|row| row.len() != r) {
                    return invalid(&format!("{at}.stiffness"), format!("stiffness must be {r}x{r}"));
                }
                for (i, row) in f.stiffness.iter().enumerate() {
                    for (j, x) in row.iter().enumerate() {
                        check_scalar(&format!("{at}.stiffness[{i}][{j}]"), *x)?;
                    }
                }
                for (i, x) in f.preferred.iter().enumerate() {
                    check_scalar(&format!("{at}.preferred[{i}]"), *x)?;
                }
                let k = RMatrix::from_fn(r, r, |i, j| f.stiffness[i][j]);
                let q = QuadraticFunctional::new(k, f.preferred.clone())
                    .map_err(|e| CliError::validation(&at, e))?;
                if let Some(c) = &cartan {
                    if c.rank() != r {
                        return invalid(&at, format!("functional rank {r} differs from Cartan rank {}", c.rank()));
                    }
                }
                Some(q)
            }
        };
        Ok(Context {
            id: raw.id.clone(),
            dim,
            generator,
            cartan,
            functional,
        })
    }

    fn seed(&self, path: &str, given: Option<u64>) -> CliResult<u64> {
        given
            .or(self.fallback_seed)
            .ok_or_else(|| CliError::validation(path, "a seed is mandatory for random sampling"))
    }

    fn generator(&self, path: &str, raw: &RawGenerator, dim: usize) -> CliResult<Superoperator> {
        let matrix = |k: usize| complex_matrix(&format!("{path}.matrices[{k}]"), &raw.matrices[k], dim);
        let need_matrices = |lo: usize, hi: usize| -> CliResult<()> {
            let n = raw.matrices.len();
            if (lo..=hi).contains(&n) {
                Ok(())
            } else {
                invalid(&format!("{path}.matrices"), format!("form `{}` takes {lo}..={hi} matrices, got {n}", raw.form))
            }
        };
        let no_rate = || -> CliResult<()> {
            match raw.rate {
                Some(_) => invalid(&format!("{path}.rate"), format!("form `{}` takes no rate", raw.form)),
                None => Ok(()),
            }
        };
        let no_seed = || -> CliResult<()> {
            match raw.seed {
                Some(_) => invalid(&format!("{path}.seed"), format!("form `{}` takes no seed", raw.form)),
                None => Ok(()),
            }
        };
        let rate = || -> CliResult<f64> {
            let r = raw
                .rate
                .ok_or_else(|| CliError::validation(format!("{path}.rate"), format!("form `{}` needs a rate", raw.form)))?;
            check_positive(&format!("{path}.rate"), r)
        };
        let gen = match raw.form.as_str() {
            "reset" => {
                no_seed()?;
                need_matrices(0, 1)?;
                let target = if raw.matrices.is_empty() {
                    DensityOperator::maximally_mixed(dim)
                } else {
                    DensityOperator::with_tolerance(matrix(0)?, self.tol.construction)
                }
                .map_err(|e| CliError::validation(format!("{path}.matrices[0]"), e))?;
                GklsGenerator::Reset { rate: rate()?, target }
            }
            "lindblad" => {
                no_seed()?;
                no_rate()?;
                need_matrices(1, 8)?;
                let h = HermitianOperator::with_tolerance(matrix(0)?, self.tol.construction)
                    .map_err(|e| CliError::validation(format!("{path}.matrices[0]"), e))?;
                let jumps = (1..raw.matrices.len()).map(matrix).collect::<CliResult<Vec<_>>>()?;
                GklsGenerator::HamiltonianLindblad { hamiltonian: h, jumps }
            }
            "channel" => {
                no_seed()?;
                need_matrices(1, 16)?;
                let kraus = (0..raw.matrices.len()).map(matrix).collect::<CliResult<Vec<_>>>()?;
                let channel = kraus_channel(dim, &kraus)
                    .map_err(|e| CliError::validation(format!("{path}.matrices"), e))?;
                GklsGenerator::ChannelMinusId { rate: rate()?, channel }
            }
            "random" => {
                no_rate()?;
                need_matrices(0, 0)?;
                if dim < 2 {
                    return invalid(path, "random generators need dimension at least 2");
                }
                let seed = self.seed(&format!("{path}.seed"), raw.seed)?;
                random_gkls(dim, seed).map_err(|e| CliError::validation(path, e))?
            }
            other => {
                return invalid(
                    &format!("{path}.form"),
                    format!("unknown generator form `{other}`, expected reset, lindblad, channel or random"),
                )
            }
        };
        build_superoperator(&gen).map_err(|e| CliError::validation(path, e))
    }

    fn channel(&self, path: &str, raw: &RawChannel, dim: usize) -> CliResult<Superoperator> {
        let matrix = |k: usize| complex_matrix(&format!("{path}.matrices[{k}]"), &raw.matrices[k], dim);
        let unused = |name: &str, present: bool| -> CliResult<()> {
            if present {
                invalid(&format!("{path}.{name}"), format!("form `{}` does not take `{name}`", raw.form))
            } else {
                Ok(())
            }
        };
        let wrap = |e: nqs_core::Error| CliError::validation(path, e);
        match raw.form.as_str() {
            "kraus" => {
                unused("a", raw.a.is_some())?;
                unused("b", raw.b.is_some())?;
                unused("theta", raw.theta.is_some())?;
                check_count(&format!("{path}.matrices"), raw.matrices.len(), 1, 16)?;
                let kraus = (0..raw.matrices.len()).map(matrix).collect::<CliResult<Vec<_>>>()?;
                kraus_channel(dim, &kraus).map_err(wrap)
            }
            "unitary" => {
                unused("a", raw.a.is_some())?;
                unused("b", raw.b.is_some())?;
                unused("theta", raw.theta.is_some())?;
                check_count(&format!("{path}.matrices"), raw.matrices.len(), 1, 1)?;
                unitary_channel(&matrix(0)?).map_err(wrap)
            }
            "rotation" => {
                unused("a", raw.a.is_some())?;
                unused("b", raw.b.is_some())?;
                check_count(&format!("{path}.matrices"), raw.matrices.len(), 1, 1)?;
                let theta = check_scalar(&format!("{path}.theta"), raw.theta.unwrap_or(0.0))?;
                let x = HermitianOperator::with_tolerance(matrix(0)?, self.tol.construction)
                    .map_err(|e| CliError::validation(format!("{path}.matrices[0]"), e))?;
                rotation_channel(x.matrix(), theta).map_err(wrap)
            }
            "partial-swap" => {
                unused("matrices", !raw.matrices.is_empty())?;
                let level = |name: &str, v: Option<usize>| -> CliResult<usize> {
                    match v {
                        Some(k) if k < dim => Ok(k),
                        Some(k) => invalid(&format!("{path}.{name}"), format!("level {k} out of range for dimension {dim}")),
                        None => invalid(&format!("{path}.{name}"), "partial swap needs levels `a` and `b`"),
                    }
                };
                let (a, b) = (level("a", raw.a)?, level("b", raw.b)?);
                if a == b {
                    return invalid(&format!("{path}.b"), "swap levels must differ");
                }
                let theta = raw.theta.unwrap_or(1.0);
                if !(0.0..=1.0).contains(&theta) {
                    return invalid(&format!("{path}.theta"), format!("mixing weight must lie in [0, 1], got {theta}"));
                }
                partial_swap_channel(dim, a, b, theta).map_err(wrap)
            }
            other => invalid(
                &format!("{path}.form"),
                format!("unknown channel form `{other}`, expected kraus, unitary, rotation or partial-swap"),
            ),
        }
    }

    fn graph(&self, raw: &RawGraph, contexts: &IndexMap<String, Context>) -> CliResult<GlobalActionSpec> {
        let coupling = check_scalar("graph.coupling", raw.coupling)?;
        if coupling < 0.0 {
            return invalid("graph.coupling", format!("coupling must be non-negative, got {coupling}"));
        }
        let mut vertices = Vec::new();
        let mut potentials = BTreeMap::new();
        for (i, id) in raw.vertices.iter().enumerate() {
            let path = format!("graph.vertices[{i}]");
            let ctx = contexts
                .get(id)
                .ok_or_else(|| CliError::validation(&path, format!("unknown context `{id}`")))?;
            let f = ctx
                .functional
                .as_ref()
                .ok_or_else(|| CliError::validation(&path, format!("context `{id}` has no functional")))?;
            vertices.push(Vertex { id: id.clone(), rank: f.rank() });
            potentials.insert(id.clone(), VertexPotential::Quadratic(f.clone()));
        }
        let mut edges = Vec::new();
        for (i, e) in raw.edges.iter().enumerate() {
            let path = format!("graph.edges[{i}]");
            for end in [&e.a, &e.b] {
                if !raw.vertices.contains(end) {
                    return invalid(&path, format!("edge references unknown vertex `{end}`"));
                }
            }
            check_scalar(&format!("{path}.weight"), e.weight)?;
            edges.push(Edge { a: e.a.clone(), b: e.b.clone(), weight: e.weight });
        }
        let graph = ContextGraph::new(vertices, edges).map_err(|e| CliError::validation("graph", e))?;
        GlobalActionSpec::new(graph, potentials, coupling).map_err(|e| CliError::validation("graph", e))
    }

    fn task(&self, path: &str, value: Value, scenario: &Scenario) -> CliResult<Task> {
        let Value::Object(mut obj) = value else {
            return invalid(path, "task must be an object");
        };
        let take_string = |obj: &mut Map<String, Value>, key: &str| -> CliResult<String> {
            match obj.remove(key) {
                Some(Value::String(s)) if !s.is_empty() => Ok(s),
                Some(_) => invalid(&format!("{path}.{key}"), format!("`{key}` must be a non-empty string")),
                None => invalid(path, format!("task is missing `{key}`")),
            }
        };
        let id = take_string(&mut obj, "id")?;
        let kind = take_string(&mut obj, "kind")?;
        if !TASK_KINDS.contains(&kind.as_str()) {
            return Err(CliError::UnsupportedTask {
                path: format!("{path}.kind"),
                kind,
            });
        }
        let inputs = Value::Object(obj);
        let spec = self.task_spec(path, &kind, inputs.clone(), scenario)?;
        Ok(Task { id, kind, inputs, spec })
    }

    fn task_spec(&self, path: &str, kind: &str, params: Value, sc: &Scenario) -> CliResult<TaskSpec> {
        let context = |field: &str, id: &str| -> CliResult<&Context> {
            sc.context(id)
                .ok_or_else(|| CliError::validation(format!("{path}.{field}"), format!("unknown context `{id}`")))
        };
        let with_generator = |id: &str| -> CliResult<&Context> {
            let c = context("context", id)?;
            if c.generator.is_none() {
                return invalid(&format!("{path}.context"), format!("context `{id}` has no generator"));
            }
            Ok(c)
        };
        let with_cartan = |field: &str, id: &str| -> CliResult<&CartanSet> {
            context(field, id)?
                .cartan
                .as_ref()
                .ok_or_else(|| CliError::validation(format!("{path}.{field}"), format!("context `{id}` has no Cartan set")))
        };
        let t0 = |v: Option<f64>| -> CliResult<Option<f64>> {
            v.map(|t| check_positive(&format!("{path}.t0"), t))
                .transpose()
                .map(|t| t.or(sc.options.doeblin_t0))
        };
        let thetas = |raw: &[f64], field: &str| -> CliResult<Vec<f64>> {
            let at = format!("{path}.{field}");
            check_count(&at, raw.len(), 1, MAX_THETAS)?;
            if let Some(bad) = raw.iter().find(|t| !(**t >= 0.0 && **t < 0.5)) {
                return invalid(&at, format!("θ must lie in [0, 0.5), got {bad}"));
            }
            let positive = raw.iter().filter(|t| **t > 0.0).count();
            if positive < 3 {
                return invalid(&at, format!("at least 3 positive θ values are needed, got {positive}"));
            }
            Ok(raw.to_vec())
        };

        Ok(match kind {
            "analyze-context" => {
                let p: ContextT0 = parse_params(path, params)?;
                with_generator(&p.context)?;
                TaskSpec::AnalyzeContext { t0: t0(p.t0)?, context: p.context }
            }
            "sensitivity" => {
                let p: RawSensitivity = parse_params(path, params)?;
                let c = with_generator(&p.context)?;
                let dl = self.generator(&format!("{path}.perturbation"), &p.perturbation, c.dim)?;
                let scale = check_scalar(&format!("{path}.scale"), p.scale.unwrap_or(1.0))?;
                TaskSpec::Sensitivity {
                    perturbation: dl.scaled(scale),
                    t0: t0(p.t0)?,
                    context: p.context,
                }
            }
            "metric" => {
                let p: RawMetric = parse_params(path, params)?;
                let c = context("context", &p.context)?;
                let method = match p.method.as_str() {
                    "hessian" => MetricMethod::Hessian,
                    "covariance" => MetricMethod::Covariance,
                    "fisher" => MetricMethod::Fisher,
                    other => {
                        return invalid(
                            &format!("{path}.method"),
                            format!("unknown metric method `{other}`, expected hessian, covariance or fisher"),
                        )
                    }
                };
                let rank = match method {
                    MetricMethod::Hessian => c
                        .functional
                        .as_ref()
                        .ok_or_else(|| CliError::validation(format!("{path}.context"), format!("context `{}` has no functional", c.id)))?
                        .rank(),
                    _ => with_cartan("context", &p.context)?.rank(),
                };
                let state = match (method, p.state.as_deref()) {
                    (MetricMethod::Covariance, None | Some("gibbs")) => CovarianceState::Gibbs,
                    (MetricMethod::Covariance, Some("stationary")) => {
                        with_generator(&p.context)?;
                        if p.at.is_some() {
                            return invalid(&format!("{path}.at"), "a stationary covariance takes no fields");
                        }
                        CovarianceState::Stationary
                    }
                    (MetricMethod::Covariance, Some(other)) => {
                        return invalid(&format!("{path}.state"), format!("unknown state `{other}`, expected gibbs or stationary"))
                    }
                    (_, None) => CovarianceState::Gibbs,
                    (_, Some(_)) => return invalid(&format!("{path}.state"), "only covariance metrics take a state"),
                };
                if let Some(d) = &p.divergence {
                    if method != MetricMethod::Fisher {
                        return invalid(&format!("{path}.divergence"), "only fisher metrics take a divergence");
                    }
                    Divergence::from_name(d).map_err(|e| CliError::validation(format!("{path}.divergence"), e))?;
                }
                let at = match p.at {
                    Some(v) => {
                        if v.len() != rank {
                            return invalid(&format!("{path}.at"), format!("expected {rank} coordinates, got {}", v.len()));
                        }
                        for (i, x) in v.iter().enumerate() {
                            check_scalar(&format!("{path}.at[{i}]"), *x)?;
                        }
                        v
                    }
                    None => match method {
                        MetricMethod::Hessian => c.functional.as_ref().map(|f| f.preferred().to_vec()).unwrap_or_default(),
                        _ => vec![0.0; rank],
                    },
                };
                let default_step = match method {
                    MetricMethod::Hessian => sc.options.hessian_step,
                    _ => sc.options.divergence_step,
                };
                let step = match p.step {
                    None => default_step,
                    Some(h) if h.is_finite() && h > 0.0 && h <= 0.1 => h,
                    Some(h) => return invalid(&format!("{path}.step"), format!("step must lie in (0, 0.1], got {h}")),
                };
                TaskSpec::Metric { context: p.context, method, at, state, step }
            }
            "solve-graph" => {
                let p: RawSolveGraph = parse_params(path, params)?;
                let spec = sc
                    .graph
                    .as_ref()
                    .ok_or_else(|| CliError::validation(path, "solve-graph needs a graph"))?;
                let tol = p.tol.unwrap_or(nqs_core::nlayer::DEFAULT_SOLVE_TOL);
                if !(tol.is_finite() && tol > 0.0 && tol < 1.0) {
                    return invalid(&format!("{path}.tol"), format!("tolerance must lie in (0, 1), got {tol}"));
                }
                let max_iter = check_count(
                    &format!("{path}.max_iter"),
                    p.max_iter.unwrap_or(nqs_core::nlayer::DEFAULT_MAX_ITER),
                    1,
                    MAX_ITER,
                )?;
                let initial = match p.initial {
                    None => None,
                    Some(field) => {
                        for v in spec.graph().vertices() {
                            let at = format!("{path}.initial.{}", v.id);
                            let q = field.get(&v.id).ok_or_else(|| CliError::validation(&at, "missing vertex"))?;
                            if q.len() != v.rank {
                                return invalid(&at, format!("expected {} charges, got {}", v.rank, q.len()));
                            }
                            for (i, x) in q.iter().enumerate() {
                                check_scalar(&format!("{at}[{i}]"), *x)?;
                            }
                        }
                        if let Some(extra) = field.keys().find(|k| spec.graph().rank_of(k).is_none()) {
                            return invalid(&format!("{path}.initial.{extra}"), "not a graph vertex");
                        }
                        Some(field)
                    }
                };
                TaskSpec::SolveGraph { initial, tol, max_iter }
            }
            "holonomy" => {
                let p: RawHolonomy = parse_params(path, params)?;
                let thetas = thetas(&p.thetas, "thetas")?;
                let (rank, loop_spec) = match (&p.builtin, &p.edges) {
                    (Some(name), None) => {
                        if p.context.is_some() {
                            return invalid(&format!("{path}.context"), "built-in loops carry their own Cartan set");
                        }
                        match name.as_str() {
                            "qutrit-rotation" => (2, LoopSpec::QutritRotation),
                            "partial-swap" => (2, LoopSpec::PartialSwap),
                            other => {
                                return invalid(
                                    &format!("{path}.loop"),
                                    format!("unknown loop `{other}`, expected qutrit-rotation or partial-swap"),
                                )
                            }
                        }
                    }
                    (None, Some(edges)) => {
                        let ctx_id = p
                            .context
                            .as_deref()
                            .ok_or_else(|| CliError::validation(path, "custom loops need a `context` for the Cartan set"))?;
                        let cartan = with_cartan("context", ctx_id)?.clone();
                        let dim = cartan.dim();
                        check_count(&format!("{path}.edges"), edges.len(), 1, 64)?;
                        let mut out = Vec::new();
                        for (k, e) in edges.iter().enumerate() {
                            let at = format!("{path}.edges[{k}]");
                            if k > 0 && edges[k - 1].target != e.source {
                                return invalid(&at, format!("edge starts at `{}` but the previous one ends at `{}`", e.source, edges[k - 1].target));
                            }
                            let x = HermitianOperator::with_tolerance(
                                complex_matrix(&format!("{at}.generator"), &e.generator, dim)?,
                                self.tol.construction,
                            )
                            .map_err(|err| CliError::validation(format!("{at}.generator"), err))?;
                            let scale = check_scalar(&format!("{at}.scale"), e.scale)?;
                            out.push((e.source.clone(), e.target.clone(), x.into_matrix(), scale));
                        }
                        if edges[0].source != edges[edges.len() - 1].target {
                            return invalid(&format!("{path}.edges"), "loop does not close");
                        }
                        (cartan.rank(), LoopSpec::Custom { cartan, edges: out })
                    }
                    _ => return invalid(path, "give exactly one of `loop` or `edges`"),
                };
                TaskSpec::Holonomy { rank, loop_spec, thetas }
            }
            "transport" => {
                let p: RawTransport = parse_params(path, params)?;
                let cartan = with_cartan("source", &p.source)?;
                let target = context("target", &p.target)?;
                if target.dim != cartan.dim() {
                    return invalid(&format!("{path}.target"), "source and target dimensions differ");
                }
                let channel = self.channel(&format!("{path}.channel"), &p.channel, cartan.dim())?;
                TaskSpec::Transport { source: p.source, target: p.target, channel }
            }
            "chain-demo" => {
                let p: RawChainDemo = parse_params(path, params)?;
                let at = format!("{path}.sizes");
                check_count(&at, p.sizes.len(), 2, 16)?;
                for (i, n) in p.sizes.iter().enumerate() {
                    check_count(&format!("{at}[{i}]"), *n, 8, MAX_CHAIN)?;
                }
                if p.sizes.windows(2).any(|w| w[1] <= w[0]) {
                    return invalid(&at, "sizes must be strictly increasing");
                }
                let weight = check_positive(&format!("{path}.weight"), p.weight)?;
                TaskSpec::ChainDemo { sizes: p.sizes, weight }
            }
            "qutrit-demo" => {
                let p: RawQutritDemo = parse_params(path, params)?;
                let t = match p.thetas {
                    Some(t) => thetas(&t, "thetas")?,
                    None => QUTRIT_DEMO_THETAS.to_vec(),
                };
                TaskSpec::QutritDemo { thetas: t }
            }
            "response-chain" => {
                let p: RawResponseChain = parse_params(path, params)?;
                let c = with_generator(&p.context)?;
                let f = c
                    .functional
                    .as_ref()
                    .ok_or_else(|| CliError::validation(format!("{path}.context"), format!("context `{}` has no functional", c.id)))?;
                let cartan = with_cartan("context", &p.context)?;
                if f.rank() != cartan.rank() {
                    return invalid(&format!("{path}.context"), "functional and Cartan ranks differ");
                }
                check_count(&format!("{path}.directions"), p.directions.len(), 1, 16)?;
                let mut dirs = Vec::new();
                for (k, d) in p.directions.iter().enumerate() {
                    let dl = self.generator(&format!("{path}.directions[{k}].generator"), &d.generator, c.dim)?;
                    dirs.push((d.label.clone(), dl));
                }
                if p.dn.len() != dirs.len() {
                    return invalid(&format!("{path}.dn"), format!("expected {} coordinates, got {}", dirs.len(), p.dn.len()));
                }
                for (i, x) in p.dn.iter().enumerate() {
                    check_scalar(&format!("{path}.dn[{i}]"), *x)?;
                }
                let response = ResponseMap::new(p.context.clone(), dirs)
                    .map_err(|e| CliError::validation(format!("{path}.directions"), e))?;
                TaskSpec::ResponseChain { context: p.context, response, dn: p.dn }
            }
            "doeblin-check" => {
                let p: RawDoeblinCheck = parse_params(path, params)?;
                let seed = p
                    .seed
                    .ok_or_else(|| CliError::validation(format!("{path}.seed"), "a seed is mandatory for random sampling"))?;
                TaskSpec::DoeblinCheck {
                    dim: check_count(&format!("{path}.dim"), p.dim, 2, MAX_DIM)?,
                    seed,
                    states: check_count(&format!("{path}.states"), p.states, 1, MAX_STATES)?,
                    steps: check_count(&format!("{path}.steps"), p.steps, 1, MAX_STEPS)?,
                }
            }
            _ => unreachable!("task kinds are checked against TASK_KINDS"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(body: &str) -> String {
        format!(r#"{{"version": "{VERSION}", {body}}}"#)
    }

    #[test]
    fn empty_task_list_is_valid() {
        let s = load_scenario(&minimal(r#""tasks": []"#)).unwrap();
        assert!(s.tasks.is_empty());
        assert!(s.contexts.is_empty());
    }

    #[test]
    fn version_is_checked() {
        let err = load_scenario(r#"{"version": "nqs-geom/0"}"#).unwrap_err();
        assert_eq!(err.code(), "validation");
        assert_eq!(err.path(), Some("version"));
    }

    #[test]
    fn unknown_fields_are_parse_errors_with_a_path() {
        let err = load_scenario(&minimal(r#""contexts": [{"id": "a", "dim": 2, "colour": 1}]"#)).unwrap_err();
        assert_eq!(err.code(), "parse");
        assert!(err.path().unwrap().starts_with("contexts[0]"), "{err}");
    }

    #[test]
    fn edge_to_unknown_context_is_rejected() {
        let text = minimal(
            r#""contexts": [{"id": "a", "dim": 1, "functional": {"kind": "quadratic", "stiffness": [[1]], "preferred": [0]}}],
               "graph": {"vertices": ["a"], "edges": [{"a": "a", "b": "zz", "weight": 1}]}"#,
        );
        let err = load_scenario(&text).unwrap_err();
        assert_eq!(err.code(), "validation");
        assert!(err.to_string().contains("zz"));
    }

    #[test]
    fn unknown_task_kind_is_unsupported() {
        let err = load_scenario(&minimal(r#""tasks": [{"id": "t", "kind": "teleport"}]"#)).unwrap_err();
        assert_eq!(err.code(), "unsupported-task");
    }

    #[test]
    fn complex_entries_and_reset_targets() {
        let text = minimal(
            r#""contexts": [{"id": "q", "dim": 2, "generator": {"form": "reset", "rate": 2,
                "matrices": [[[0.5, [0.1, -0.2]], [[0.1, 0.2], 0.5]]]}}]"#,
        );
        let s = load_scenario(&text).unwrap();
        assert!(s.context("q").unwrap().generator.is_some());
    }

    #[test]
    fn non_hermitian_target_is_rejected() {
        let text = minimal(
            r#""contexts": [{"id": "q", "dim": 2, "generator": {"form": "reset", "rate": 2,
                "matrices": [[[0.5, 0.3], [0.1, 0.5]]]}}]"#,
        );
        let err = load_scenario(&text).unwrap_err();
        assert_eq!(err.path(), Some("contexts[0].generator.matrices[0]"));
    }

    #[test]
    fn random_forms_need_a_seed() {
        let body = r#""contexts": [{"id": "r", "dim": 3, "generator": {"form": "random"}}]"#;
        let err = load_scenario(&minimal(body)).unwrap_err();
        assert!(err.to_string().contains("seed"));
        let seeded = minimal(&format!(r#""options": {{"seed": 4}}, {body}"#));
        assert!(load_scenario(&seeded).is_ok());
    }

    #[test]
    fn doeblin_check_caps_and_seed() {
        let task = |extra: &str| minimal(&format!(r#""tasks": [{{"id": "d", "kind": "doeblin-check", "dim": 2, "states": 5, "steps": 3{extra}}}]"#));
        assert!(load_scenario(&task("")).is_err());
        assert!(load_scenario(&task(r#", "seed": 1"#)).is_ok());
        let big = minimal(r#""tasks": [{"id": "d", "kind": "doeblin-check", "dim": 2, "seed": 1, "states": 5000, "steps": 3}]"#);
        assert_eq!(load_scenario(&big).unwrap_err().code(), "validation");
    }

    #[test]
    fn holonomy_thetas_are_validated() {
        let t = |thetas: &str| minimal(&format!(r#""tasks": [{{"id": "h", "kind": "holonomy", "loop": "qutrit-rotation", "thetas": {thetas}}}]"#));
        assert!(load_scenario(&t("[0.1, 0.05, 0.025, 0]")).is_ok());
        assert!(load_scenario(&t("[0.1, 0.05]")).is_err());
        assert!(load_scenario(&t("[0.1, 0.05, 0.7]")).is_err());
    }

    #[test]
    fn trailing_garbage_is_a_parse_error() {
        let err = load_scenario(&format!("{} x", minimal(r#""tasks": []"#))).unwrap_err();
        assert_eq!(err.code(), "parse");
    }
}
