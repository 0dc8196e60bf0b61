use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use powerctl::channel_model::{generate_dataset, save_dataset, WeightMode};
use powerctl::harness::{
    axiom_suite, convergence_trace, eval_performance_ratio, eval_weights, run_solver, write_text, ExperimentConfig,
    InstanceSource, ModelKind, SolverContext, SolverKind,
};
use powerctl::unfolding::checkpoint::{Checkpoint, TrainingMetadata};
use powerctl::unfolding::train::train_with;
use powerctl::unfolding::UnfoldingParameters;
use powerctl::{Error, Result};

#[derive(Parser)]
#[command(name = "powerctl", version, about = "Weighted sum rate power control toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of random D2D networks.
    Gen(GenArgs),
    /// Randomized checks of the interference-function axioms.
    Axioms(AxiomArgs),
    /// Solve every instance of a dataset with one solver.
    Solve(SolveArgs),
    /// Train the learned primal-dual solver.
    Train(TrainArgs),
    /// Performance ratio of a solver against FPLinQ.
    Eval(EvalArgs),
    /// Mean WSR per iteration for several solvers.
    Trace(TraceArgs),
}

/// Flags shared by every subcommand that reads an experiment config. Each
/// one overrides the config field of the same name.
#[derive(Args, Default)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Link count when generating instances.
    #[arg(long)]
    k: Option<usize>,
    /// Instances to generate when no dataset is given.
    #[arg(long)]
    count: Option<usize>,
    /// Scenario seed when generating instances.
    #[arg(long)]
    seed: Option<u64>,
    /// uniform01 | ones
    #[arg(long = "weights")]
    weight_mode: Option<WeightMode>,
    #[arg(long)]
    eval_count: Option<usize>,
    #[arg(long)]
    eval_seed: Option<u64>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// affine | rayleigh
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    fp_iters: Option<usize>,
    #[arg(long)]
    area_side: Option<f64>,
    #[arg(long)]
    d_min: Option<f64>,
    #[arg(long)]
    d_max: Option<f64>,
    #[arg(long)]
    carrier_freq: Option<f64>,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    antenna_height: Option<f64>,
    #[arg(long)]
    tx_power_dbm: Option<f64>,
    #[arg(long)]
    noise_psd_dbm_hz: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$src.clone() { cfg.$($dst).+ = v; })*
            };
        }
        set!(
            k => scenario.num_links,
            count => count,
            seed => scenario.rng_seed,
            weight_mode => weight_mode,
            eval_seed => eval_seed,
            model => model,
            fp_iters => fp_iters,
            area_side => scenario.area_side,
            d_min => scenario.d_min,
            d_max => scenario.d_max,
            carrier_freq => scenario.carrier_freq,
            bandwidth => scenario.bandwidth,
            antenna_height => scenario.antenna_height,
            tx_power_dbm => scenario.tx_power_dbm,
            noise_psd_dbm_hz => scenario.noise_psd_dbm_hz,
        );
        if self.dataset.is_some() {
            cfg.dataset = self.dataset.clone();
        }
        if self.checkpoint.is_some() {
            cfg.checkpoint = self.checkpoint.clone();
        }
        if self.eval_count.is_some() {
            cfg.eval_count = self.eval_count;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AxiomArgs {
    #[arg(long, default_value = "affine")]
    model: ModelKind,
    /// Check the capped derived map instead of the model itself.
    #[arg(long)]
    derived: bool,
    /// Total trials, spread evenly over the instances.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// generated | synthetic
    #[arg(long, default_value = "generated")]
    source: InstanceSource,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// special_case | pda_exact | lpda | fplinq
    #[arg(long)]
    solver: Option<SolverKind>,
    /// Solve with fresh evaluation weights instead of the dataset's own.
    #[arg(long)]
    resample_weights: bool,
    /// JSON lines, one per instance; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr_initial: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    unroll: Option<usize>,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV.
    #[arg(long)]
    log_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    solver: Option<SolverKind>,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated solver list.
    #[arg(long, value_delimiter = ',')]
    solvers: Option<Vec<SolverKind>>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Divide rates by ln(base); 2 gives bits.
    #[arg(long)]
    log_base: Option<f64>,
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

fn load_params(cfg: &ExperimentConfig, needed: bool) -> Result<Option<UnfoldingParameters>> {
    match &cfg.checkpoint {
        Some(path) => Ok(Some(Checkpoint::load(path)?.parameters()?)),
        None if needed => Err(Error::InvalidConfig("the lpda solver needs --checkpoint".into())),
        None => Ok(None),
    }
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn gen(args: GenArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    let dataset = generate_dataset(&cfg.scenario, cfg.count, cfg.weight_mode)?;
    save_dataset(&dataset, &args.out)?;
    eprintln!("wrote {} instances to {}", dataset.len(), args.out.display());
    Ok(())
}

fn axioms(args: AxiomArgs) -> Result<()> {
    let per_instance = args.trials.div_ceil(args.instances.max(1));
    let report = axiom_suite(args.model, args.derived, args.source, args.k, args.instances, per_instance, args.seed)?;
    emit(args.out.as_ref(), &to_json(&report))
}

#[derive(Serialize)]
struct SolveRecord {
    instance_id: usize,
    seed: u64,
    solver: SolverKind,
    p: Vec<f64>,
    wsr_nats: f64,
    iterations: usize,
}

fn solve(args: SolveArgs) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    if let Some(s) = args.solver {
        cfg.solver = s;
    }
    let instances = cfg.instances()?;
    let weights = if args.resample_weights {
        eval_weights(&instances, cfg.weight_mode, cfg.eval_seed)
    } else {
        instances.iter().map(|i| i.weights.clone()).collect()
    };
    let params = load_params(&cfg, cfg.solver == SolverKind::Lpda)?;
    let ctx = SolverContext {
        model: cfg.model,
        config: &cfg.solver_config,
        lpda: params.as_ref(),
        fp_iters: cfg.fp_iters,
    };
    let mut text = String::new();
    for (i, (inst, w)) in instances.iter().zip(&weights).enumerate() {
        let run = run_solver(cfg.solver, inst, w, &ctx).map_err(Error::at_instance(i, inst.seed))?;
        let record = SolveRecord {
            instance_id: i,
            seed: inst.seed,
            solver: cfg.solver,
            p: run.p.as_slice().to_vec(),
            wsr_nats: run.final_wsr(),
            iterations: run.wsr_trace.len() - 1,
        };
        text.push_str(&serde_json::to_string(&record).expect("serializable"));
        text.push('\n');
    }
    emit(args.out.as_ref(), &text)
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    let mut tc = cfg.train.clone();
    tc.scenario = cfg.scenario.clone();
    let c = &args.common;
    if let Some(k) = c.k {
        tc.k = k;
    }
    if let Some(s) = c.seed {
        tc.seed = s;
    }
    if let Some(m) = c.weight_mode {
        tc.weight_mode = m;
    }
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = args.$f { tc.$f = v; })* };
    }
    set!(epochs, n_train, batch_size, lr_initial, lr_decay, unroll);
    tc.validate()?;

    let out = train_with(&tc, |e, _| {
        eprintln!("epoch {:>4}  loss {:>12.6}  lr {:.3e}", e.epoch, e.mean_train_loss, e.lr);
    })?;
    let meta = TrainingMetadata {
        config: tc.clone(),
        epochs: out.log.len(),
        final_train_loss: out.final_loss(),
    };
    Checkpoint::new(&out.params, Some(meta)).save(&args.out)?;
    if let Some(path) = args.log_out.as_ref().or(cfg.log_out.as_ref()) {
        write_text(path, &out.log_csv())?;
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    if let Some(s) = args.solver {
        cfg.solver = s;
    }
    let instances = cfg.instances()?;
    let weights = eval_weights(&instances, cfg.weight_mode, cfg.eval_seed);
    let params = load_params(&cfg, cfg.solver == SolverKind::Lpda)?;
    let ctx = SolverContext {
        model: cfg.model,
        config: &cfg.solver_config,
        lpda: params.as_ref(),
        fp_iters: cfg.fp_iters,
    };
    let report = eval_performance_ratio(&instances, &weights, cfg.solver, &ctx)?;
    if let Some(path) = args.metrics_out.as_ref().or(cfg.metrics_out.as_ref()) {
        write_text(path, &report.metrics_csv())?;
    }
    let summary = to_json(&report.summary(cfg.weight_mode, cfg.eval_seed, cfg.fp_iters));
    if let Some(path) = args.summary_out.as_ref().or(cfg.summary_out.as_ref()) {
        write_text(path, &summary)?;
    }
    print!("{summary}");
    Ok(())
}

fn trace(args: TraceArgs) -> Result<()> {
    let mut cfg = args.common.resolve()?;
    if let Some(s) = args.solvers {
        cfg.solvers = s;
    }
    if let Some(m) = args.max_iters {
        cfg.max_iters = m;
    }
    if let Some(b) = args.log_base {
        cfg.log_base = b;
    }
    cfg.validate()?;
    let instances = cfg.instances()?;
    let weights = eval_weights(&instances, cfg.weight_mode, cfg.eval_seed);
    let params = load_params(&cfg, cfg.solvers.contains(&SolverKind::Lpda))?;
    let ctx = SolverContext {
        model: cfg.model,
        config: &cfg.solver_config,
        lpda: params.as_ref(),
        fp_iters: cfg.fp_iters,
    };
    let table = convergence_trace(&instances, &weights, &cfg.solvers, cfg.max_iters, &ctx)?;
    emit(args.trace_out.as_ref().or(cfg.trace_out.as_ref()), &table.to_csv(cfg.log_base))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Axioms(a) => axioms(a),
        Command::Solve(a) => solve(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Trace(a) => trace(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
