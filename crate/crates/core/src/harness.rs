//! Experiment plumbing: running solvers over datasets, the performance ratio
//! against FPLinQ, convergence traces and the configuration file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_model::{
    generate_dataset, generate_instance, load_dataset, sample_weights, synthetic_instance, NetworkInstance,
    ScenarioConfig, WeightMode,
};
use crate::fplinq::{fplinq_solve, DEFAULT_ITERATIONS};
use crate::interference::{
    check_log_concavity_ratio, check_standard_axioms, Affine, AxiomReport, CheckTolerances, InterferenceFunction,
    InterferenceModel, Rayleigh,
};
use crate::rng::{child_seed, stream};
use crate::solvers_dc::{self, DerivedMap, SolverConfig};
use crate::unfolding::lpda::{lpda_forward, UnfoldingParameters};
use crate::unfolding::train::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    SpecialCase,
    PdaExact,
    #[default]
    Lpda,
    Fplinq,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::SpecialCase => "special_case",
            SolverKind::PdaExact => "pda_exact",
            SolverKind::Lpda => "lpda",
            SolverKind::Fplinq => "fplinq",
        }
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "special_case" => Ok(SolverKind::SpecialCase),
            "pda_exact" => Ok(SolverKind::PdaExact),
            "lpda" => Ok(SolverKind::Lpda),
            "fplinq" => Ok(SolverKind::Fplinq),
            other => Err(Error::InvalidConfig(format!(
                "unknown solver {other:?} (expected special_case, pda_exact, lpda or fplinq)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Affine,
    Rayleigh,
}

impl ModelKind {
    pub fn model(self) -> &'static dyn InterferenceModel {
        match self {
            ModelKind::Affine => &Affine,
            ModelKind::Rayleigh => &Rayleigh,
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(ModelKind::Affine),
            "rayleigh" => Ok(ModelKind::Rayleigh),
            other => Err(Error::InvalidConfig(format!(
                "unknown model {other:?} (expected affine or rayleigh)"
            ))),
        }
    }
}

/// Everything a solver run may need besides the instance.
#[derive(Debug, Clone, Copy)]
pub struct SolverContext<'a> {
    pub model: ModelKind,
    pub config: &'a SolverConfig,
    pub lpda: Option<&'a UnfoldingParameters>,
    pub fp_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverRun {
    pub p: DVector<f64>,
    /// WSR in nats; entry `t` is after iteration `t`, entry 0 the start.
    pub wsr_trace: Vec<f64>,
}

impl SolverRun {
    pub fn final_wsr(&self) -> f64 {
        *self.wsr_trace.last().expect("trace holds the start point")
    }
}

fn true_wsr(inst: &NetworkInstance, model: &dyn InterferenceFunction, w: &DVector<f64>, p: &[f64]) -> Result<f64> {
    let gamma = solvers_dc::sinr(inst, model, &DVector::from_column_slice(p))?;
    Ok(w.iter().zip(gamma.iter()).map(|(w, g)| w * g.ln_1p()).sum())
}

/// Runs one solver with link weights `w`. The trace is always the exact
/// weighted sum rate, whatever objective the solver tracks internally.
pub fn run_solver(kind: SolverKind, inst: &NetworkInstance, w: &DVector<f64>, ctx: &SolverContext) -> Result<SolverRun> {
    let needs_affine = matches!(kind, SolverKind::Lpda | SolverKind::Fplinq);
    if needs_affine && ctx.model != ModelKind::Affine {
        return Err(Error::InvalidConfig(format!(
            "{} supports only the affine interference model",
            kind.name()
        )));
    }
    let model = ctx.model.model();
    let from_result = |r: solvers_dc::SolveResult| -> Result<SolverRun> {
        let wsr_trace = r
            .trajectory
            .iter()
            .map(|p| true_wsr(inst, model, w, p))
            .collect::<Result<_>>()?;
        Ok(SolverRun {
            p: r.p_final.to_dvector(),
            wsr_trace,
        })
    };
    match kind {
        SolverKind::SpecialCase => from_result(solvers_dc::solve_special_case(inst, model, w, ctx.config)?),
        SolverKind::PdaExact => from_result(solvers_dc::solve_pda_exact(inst, model, w, ctx.config)?),
        SolverKind::Fplinq => from_result(fplinq_solve(inst, w, ctx.fp_iters)?),
        SolverKind::Lpda => {
            let params = ctx
                .lpda
                .ok_or_else(|| Error::InvalidConfig("the lpda solver needs a checkpoint".into()))?;
            let out = lpda_forward(inst, w, params)?;
            let start = vec![inst.p_max; inst.k()];
            let mut wsr_trace = vec![true_wsr(inst, model, w, &start)?];
            wsr_trace.extend(out.trace);
            Ok(SolverRun { p: out.p, wsr_trace })
        }
    }
}

/// Link weights for evaluation: instance `i` draws from stream `i` of
/// `eval_seed`.
pub fn eval_weights(instances: &[NetworkInstance], mode: WeightMode, eval_seed: u64) -> Vec<DVector<f64>> {
    instances
        .iter()
        .enumerate()
        .map(|(i, inst)| sample_weights(inst.k(), mode, &mut stream(eval_seed, i as u64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub instance_id: usize,
    pub wsr_solver: f64,
    pub wsr_fplinq: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub solver: SolverKind,
    pub rows: Vec<MetricsRow>,
}

impl EvalReport {
    pub fn mean_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).sum::<f64>() / self.rows.len() as f64
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = format!("instance_id,wsr_{},wsr_fplinq,ratio\n", self.solver.name());
        for r in &self.rows {
            writeln!(s, "{},{:.12e},{:.12e},{:.12e}", r.instance_id, r.wsr_solver, r.wsr_fplinq, r.ratio).unwrap();
        }
        s
    }

    pub fn summary(&self, weight_mode: WeightMode, eval_seed: u64, fp_iters: usize) -> EvalSummary {
        let mut ratios: Vec<f64> = self.rows.iter().map(|r| r.ratio).collect();
        ratios.sort_by(f64::total_cmp);
        let n = ratios.len();
        let median = if n % 2 == 1 {
            ratios[n / 2]
        } else {
            0.5 * (ratios[n / 2 - 1] + ratios[n / 2])
        };
        let mean = |f: fn(&MetricsRow) -> f64| self.rows.iter().map(f).sum::<f64>() / n as f64;
        EvalSummary {
            solver: self.solver,
            instances: n,
            weight_mode,
            eval_seed,
            fp_iters,
            mean_ratio: self.mean_ratio(),
            median_ratio: median,
            min_ratio: ratios[0],
            max_ratio: ratios[n - 1],
            mean_wsr_solver: mean(|r| r.wsr_solver),
            mean_wsr_fplinq: mean(|r| r.wsr_fplinq),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub solver: SolverKind,
    pub instances: usize,
    pub weight_mode: WeightMode,
    pub eval_seed: u64,
    pub fp_iters: usize,
    pub mean_ratio: f64,
    pub median_ratio: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub mean_wsr_solver: f64,
    pub mean_wsr_fplinq: f64,
}

/// Mean over instances of `WSR(solver) / WSR(FPLinQ after fp_iters)`.
pub fn eval_performance_ratio(
    instances: &[NetworkInstance],
    weights: &[DVector<f64>],
    solver: SolverKind,
    ctx: &SolverContext,
) -> Result<EvalReport> {
    if instances.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if weights.len() != instances.len() {
        return Err(Error::DimensionMismatch {
            expected: instances.len(),
            got: weights.len(),
        });
    }
    if let Some(params) = ctx.lpda.filter(|_| solver == SolverKind::Lpda) {
        if params.k() != instances[0].k() {
            return Err(Error::KMismatch {
                expected: params.k(),
                found: instances[0].k(),
            });
        }
    }
    let rows = instances
        .par_iter()
        .zip(weights)
        .enumerate()
        .map(|(i, (inst, w))| {
            let row = || -> Result<MetricsRow> {
                let wsr_solver = run_solver(solver, inst, w, ctx)?.final_wsr();
                let wsr_fplinq = fplinq_solve(inst, w, ctx.fp_iters)?.final_objective();
                if !(wsr_fplinq > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "benchmark rate {wsr_fplinq} is not positive"
                    )));
                }
                Ok(MetricsRow {
                    instance_id: i,
                    wsr_solver,
                    wsr_fplinq,
                    ratio: wsr_solver / wsr_fplinq,
                })
            };
            row().map_err(Error::at_instance(i, inst.seed))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { solver, rows })
}

/// Mean WSR per iteration for each solver.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub solvers: Vec<SolverKind>,
    /// `(iteration, mean per solver)`, iterations `1..=max_iters`. `None`
    /// past the end of a fixed-depth solver.
    pub rows: Vec<(usize, Vec<Option<f64>>)>,
}

impl TraceTable {
    pub fn column(&self, solver: SolverKind) -> Option<Vec<Option<f64>>> {
        let c = self.solvers.iter().position(|&s| s == solver)?;
        Some(self.rows.iter().map(|(_, v)| v[c]).collect())
    }

    /// Values are divided by `ln(log_base)`; pass `e` for nats.
    pub fn to_csv(&self, log_base: f64) -> String {
        let scale = log_base.ln();
        let mut s = String::from("iteration");
        for solver in &self.solvers {
            write!(s, ",mean_wsr_{}", solver.name()).unwrap();
        }
        s.push('\n');
        for (it, vals) in &self.rows {
            write!(s, "{it}").unwrap();
            for v in vals {
                match v {
                    Some(x) => write!(s, ",{:.12e}", x / scale).unwrap(),
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Iterative solvers that stop early keep their final value for later
/// iterations; LPDA has exactly `N` iterations and is blank afterwards.
pub fn convergence_trace(
    instances: &[NetworkInstance],
    weights: &[DVector<f64>],
    solvers: &[SolverKind],
    max_iters: usize,
    ctx: &SolverContext,
) -> Result<TraceTable> {
    if solvers.is_empty() {
        return Err(Error::InvalidConfig("no solvers selected".into()));
    }
    if instances.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut columns = Vec::with_capacity(solvers.len());
    for &solver in solvers {
        let mut ctx = *ctx;
        if solver == SolverKind::Fplinq {
            ctx.fp_iters = max_iters.max(1);
        }
        let traces = instances
            .par_iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (inst, w))| {
                run_solver(solver, inst, w, &ctx)
                    .map(|r| r.wsr_trace)
                    .map_err(Error::at_instance(i, inst.seed))
            })
            .collect::<Result<Vec<_>>>()?;
        let column: Vec<Option<f64>> = (1..=max_iters)
            .map(|it| {
                let mut sum = 0.0;
                for t in &traces {
                    let v = match t.get(it) {
                        Some(v) => *v,
                        None if solver == SolverKind::Lpda => return None,
                        None => *t.last().expect("non-empty trace"),
                    };
                    sum += v;
                }
                Some(sum / traces.len() as f64)
            })
            .collect();
        columns.push(column);
    }
    let rows = (1..=max_iters)
        .map(|it| (it, columns.iter().map(|c| c[it - 1]).collect()))
        .collect();
    Ok(TraceTable {
        solvers: solvers.to_vec(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InstanceSource {
    /// Networks from the propagation model.
    #[default]
    Generated,
    /// Moderate-SINR random gains, see [`synthetic_instance`].
    Synthetic,
}

impl FromStr for InstanceSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generated" => Ok(InstanceSource::Generated),
            "synthetic" => Ok(InstanceSource::Synthetic),
            other => Err(Error::InvalidConfig(format!(
                "unknown instance source {other:?} (expected generated or synthetic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomSuiteReport {
    pub model: ModelKind,
    pub derived: bool,
    pub source: InstanceSource,
    pub k: usize,
    pub instances: usize,
    pub trials_per_instance: usize,
    pub seed: u64,
    pub passed: bool,
    pub report: AxiomReport,
}

/// Randomized axiom checks over `instances` networks. The plain model gets
/// the standard axioms plus the log-concavity ratio test; `derived` checks
/// the capped derived map instead.
pub fn axiom_suite(
    model: ModelKind,
    derived: bool,
    source: InstanceSource,
    k: usize,
    instances: usize,
    trials_per_instance: usize,
    seed: u64,
) -> Result<AxiomSuiteReport> {
    if instances == 0 || trials_per_instance == 0 || k == 0 {
        return Err(Error::InvalidConfig("k, instances and trials must be positive".into()));
    }
    let scenario = ScenarioConfig::with_links(k, seed);
    let tols = CheckTolerances::default();
    let m = model.model();
    let reports = (0..instances)
        .into_par_iter()
        .map(|i| {
            let s = child_seed(seed, i as u64);
            let run = || -> Result<AxiomReport> {
                let inst = match source {
                    InstanceSource::Generated => generate_instance(&scenario, WeightMode::Uniform01, s)?,
                    InstanceSource::Synthetic => synthetic_instance(k, s, &mut stream(s, 0)),
                };
                if derived {
                    let map = DerivedMap::new(m, inst.weights.clone());
                    check_standard_axioms(&map, &inst, trials_per_instance, s, tols)
                } else {
                    let mut r = check_standard_axioms(m, &inst, trials_per_instance, s, tols)?;
                    r.merge(&check_log_concavity_ratio(m, &inst, trials_per_instance, s, tols)?);
                    Ok(r)
                }
            };
            run().map_err(Error::at_instance(i, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = reports.into_iter();
    let mut report = iter.next().expect("at least one instance");
    for r in iter {
        report.merge(&r);
    }
    Ok(AxiomSuiteReport {
        model,
        derived,
        source,
        k,
        instances,
        trials_per_instance,
        seed,
        passed: report.passed(),
        report,
    })
}

/// A JSON experiment description; every field has a command-line flag of
/// the same name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Dataset file; when absent, instances are generated from `scenario`.
    pub dataset: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub count: usize,
    pub solver: SolverKind,
    /// Solvers for convergence traces.
    pub solvers: Vec<SolverKind>,
    pub model: ModelKind,
    pub solver_config: SolverConfig,
    pub train: TrainConfig,
    pub checkpoint: Option<PathBuf>,
    pub metrics_out: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
    pub summary_out: Option<PathBuf>,
    pub log_out: Option<PathBuf>,
    /// Use only the first `eval_count` instances.
    pub eval_count: Option<usize>,
    pub weight_mode: WeightMode,
    pub eval_seed: u64,
    pub fp_iters: usize,
    pub max_iters: usize,
    pub log_base: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            scenario: ScenarioConfig::default(),
            count: 500,
            solver: SolverKind::Lpda,
            solvers: vec![SolverKind::Fplinq, SolverKind::Lpda],
            model: ModelKind::Affine,
            solver_config: SolverConfig::default(),
            train: TrainConfig::default(),
            checkpoint: None,
            metrics_out: None,
            trace_out: None,
            summary_out: None,
            log_out: None,
            eval_count: None,
            weight_mode: WeightMode::Uniform01,
            eval_seed: 1,
            fp_iters: DEFAULT_ITERATIONS,
            max_iters: 20,
            log_base: std::f64::consts::E,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        for path in self.dataset.iter().chain(&self.checkpoint) {
            if !path.exists() {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                ));
            }
        }
        if self.fp_iters == 0 || self.max_iters == 0 {
            return Err(Error::InvalidConfig("fp_iters and max_iters must be positive".into()));
        }
        if !(self.log_base > 1.0 && self.log_base.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad log base {}", self.log_base)));
        }
        self.solver_config.validate()
    }

    /// The dataset file if given, otherwise freshly generated instances,
    /// truncated to `eval_count`.
    pub fn instances(&self) -> Result<Vec<NetworkInstance>> {
        let mut instances = match &self.dataset {
            Some(path) => load_dataset(path)?.instances,
            None => generate_dataset(&self.scenario, self.count, self.weight_mode)?.instances,
        };
        if let Some(n) = self.eval_count {
            instances.truncate(n);
        }
        if instances.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(instances)
    }
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
