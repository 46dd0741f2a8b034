//! Builds an experiment from its configuration and runs it to completion.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::algorithms::{
    self, dmbfgs_stepsize_bound, ndcg_stepsize_bound, AlgoError, AlgoParams, AlgorithmKind, HessianEnvelope,
    Network, NodeStates,
};
use crate::analysis::{
    self, check_contraction, communication_volume, contraction_matrix, contraction_rate_bound, descent_cone_holds,
    error_vector, Metric, MetricRow, MetricTrace,
};
use crate::block::NodeBlock;
use crate::config::{ConfigError, ExperimentConfig, ProblemSpec};
use crate::datasets::{
    self, logistic_solution, parse_libsvm, partition, quadratic_solution, synth_logistic_samples, synth_quadratic,
    SolutionCertificate,
};
use crate::problems::{LogisticProblem, Oracle, Regularizer, SmoothnessConstants};
use crate::topology::{generate_connected_graph, metropolis_weights, Graph, MixingMatrix};

/// Environment variable naming the directory for run outputs.
pub const OUTPUT_DIR_ENV: &str = "DECOPT_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("could not build the network: {0}")]
    Topology(#[from] crate::topology::TopologyError),
    #[error("could not build the problem: {0}")]
    Dataset(String),
    #[error("{0}")]
    Algorithm(#[from] AlgoError),
    #[error("configs differ in {0}; compare needs a shared problem and network")]
    Mismatch(&'static str),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Graph, mixing matrix, local objectives and (when known) the minimizer.
pub struct Instance {
    pub graph: Graph,
    pub mixing: MixingMatrix,
    pub oracle: Box<dyn Oracle>,
    pub solution: Option<SolutionCertificate>,
}

impl Instance {
    pub fn smoothness(&self) -> SmoothnessConstants {
        self.oracle.smoothness()
    }
}

/// The graph and the problem data are both drawn from `run.seed`.
pub fn build_instance(config: &ExperimentConfig) -> Result<Instance, RunError> {
    let n = config.network.n;
    let seed = config.run.seed;
    let graph = generate_connected_graph(n, config.network.density, seed)?;
    let mixing = metropolis_weights(&graph)?;
    let want_solution = config.run.compute_z_star;
    let ds = |e: datasets::DatasetError| RunError::Dataset(e.to_string());

    let (oracle, solution): (Box<dyn Oracle>, Option<SolutionCertificate>) = match config.problem_spec() {
        ProblemSpec::Synthetic(s) => {
            let q = synth_quadratic(s.p, s.kappa, n, seed).map_err(ds)?;
            let sol = if want_solution {
                Some(quadratic_solution(&q).map_err(ds)?)
            } else {
                None
            };
            (Box::new(q), sol)
        }
        ProblemSpec::SyntheticLogistic(s) => {
            let samples = synth_logistic_samples(s.samples, s.p, seed);
            logistic_instance(&samples, s.p, n, s.regularizer, s.lambda_hat, want_solution)?
        }
        ProblemSpec::Libsvm(spec) => {
            let file = File::open(&spec.path).map_err(io_err(&spec.path))?;
            let samples = parse_libsvm(BufReader::new(file), spec.dim)
                .map_err(|e| RunError::Dataset(format!("{}: {e}", spec.path.display())))?;
            let dim = samples.dim();
            logistic_instance(&samples, dim, n, spec.regularizer, spec.lambda_hat, want_solution)?
        }
    };
    Ok(Instance {
        graph,
        mixing,
        oracle,
        solution,
    })
}

fn logistic_instance(
    samples: &datasets::SampleSet,
    dim: usize,
    n: usize,
    reg: Regularizer,
    lambda_hat: f64,
    want_solution: bool,
) -> Result<(Box<dyn Oracle>, Option<SolutionCertificate>), RunError> {
    let shards = partition(samples, n).map_err(|e| RunError::Dataset(e.to_string()))?;
    let problem = LogisticProblem::new(shards, dim, reg, lambda_hat).map_err(|e| RunError::Dataset(e.to_string()))?;
    let solution = if want_solution && reg == Regularizer::L2 {
        Some(logistic_solution(&problem).map_err(|e| RunError::Dataset(e.to_string()))?)
    } else {
        None
    };
    Ok((Box::new(problem), solution))
}

/// The theoretical stepsize for `kind` on `instance`.
pub fn theoretical_alpha(kind: AlgorithmKind, instance: &Instance, l: f64, u: f64) -> Result<f64, RunError> {
    let c = instance.smoothness();
    let sigma = instance.mixing.sigma();
    match kind {
        AlgorithmKind::Ndcg => Ok(ndcg_stepsize_bound(c.l, sigma, instance.graph.node_count())),
        AlgorithmKind::Dmbfgs => Ok(dmbfgs_stepsize_bound(c.l, c.mu, sigma, l, u)?),
        other => Err(RunError::Config(ConfigError::Invalid(format!(
            "no theoretical stepsize for {other}"
        )))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Budget,
    Tolerance,
    Divergence,
}

/// Theory checks collected along a run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct TheoryReport {
    /// Worst deviation `‖mean v − mean g‖ / (1 + ‖g‖)` over rounds.
    pub max_tracking_deviation: Option<f64>,
    /// Rounds where the potential did not increase beyond `1e-9` relative.
    pub potential_nonincreasing: Option<Fraction>,
    pub max_potential_increase: Option<f64>,
    /// Minimum over rounds of `‖ṽ‖² + ‖x − Mx‖²`.
    pub min_stationarity: Option<f64>,
    /// Node-rounds inside the NDCG descent cone.
    pub descent_cone: Option<Fraction>,
    pub xi_limit: Option<f64>,
    pub contraction: Option<ContractionSummary>,
    /// Node-rounds whose quasi-Newton eigenvalues lie in `[ψ, Ψ]`.
    pub hessian_envelope: Option<Fraction>,
    pub notes: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Fraction {
    pub satisfied: usize,
    pub total: usize,
}

impl Fraction {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.satisfied as f64 / self.total as f64
        }
    }

    fn record(&mut self, ok: bool) {
        self.total += 1;
        self.satisfied += usize::from(ok);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionSummary {
    pub j: [[f64; 3]; 3],
    pub rho: f64,
    pub rho_bound: f64,
    pub kappa_g: f64,
    pub report: analysis::ContractionReport,
}

struct TheoryMonitor {
    kind: AlgorithmKind,
    alpha: f64,
    report: TheoryReport,
    last_potential: Option<f64>,
    xi: Option<Vec<f64>>,
    u_trace: Vec<[f64; 3]>,
    envelope: Option<HessianEnvelope>,
}

impl TheoryMonitor {
    fn new(kind: AlgorithmKind, params: &AlgoParams, instance: &Instance, max_iters: usize) -> Self {
        let c = instance.smoothness();
        let mut report = TheoryReport::default();
        let xi = if kind == AlgorithmKind::Ndcg {
            match analysis::xi_sequence(c.l, params.alpha, max_iters) {
                Ok(seq) => {
                    report.xi_limit = Some(seq.limit);
                    Some(seq.values)
                }
                Err(e) => {
                    report.notes.push(format!("descent cone not checked: {e}"));
                    None
                }
            }
        } else {
            None
        };
        let envelope = (kind == AlgorithmKind::Dmbfgs && c.mu > 0.0)
            .then(|| HessianEnvelope::new(c.l, c.mu, params.l, params.u));
        if kind == AlgorithmKind::Dmbfgs && instance.solution.is_none() {
            report.notes.push("contraction not checked: minimizer unknown".into());
        }
        Self {
            kind,
            alpha: params.alpha,
            report,
            last_potential: None,
            xi,
            u_trace: Vec::new(),
            envelope,
        }
    }

    fn observe(&mut self, s: &NodeStates, instance: &Instance) {
        let w = instance.mixing.weights();
        if self.kind.tracks_gradient() {
            let dev = s.tracking_deviation();
            let worst = self.report.max_tracking_deviation.get_or_insert(0.0);
            *worst = worst.max(dev);
        }
        if self.kind == AlgorithmKind::Ndcg {
            let p = analysis::potential(&s.x, &s.v, self.alpha, instance.oracle.as_ref(), w);
            if let Some(prev) = self.last_potential {
                let ok = p <= prev + 1e-9 * prev.abs().max(1.0);
                self.report
                    .potential_nonincreasing
                    .get_or_insert_with(Fraction::default)
                    .record(ok);
                let inc = self.report.max_potential_increase.get_or_insert(f64::NEG_INFINITY);
                *inc = inc.max(p - prev);
            }
            self.last_potential = Some(p);
            let stat = s.v_tilde.norm_squared() + s.x.deviation().norm_squared();
            let best = self.report.min_stationarity.get_or_insert(f64::INFINITY);
            *best = best.min(stat);
            if let Some(xi) = &self.xi {
                let cone = self.report.descent_cone.get_or_insert_with(Fraction::default);
                for i in 0..s.nodes() {
                    cone.record(descent_cone_holds(s.v_tilde.node(i), s.d.node(i), xi[s.t], 1e-9));
                }
            }
        }
        if self.kind == AlgorithmKind::Dmbfgs {
            if let Some(sol) = &instance.solution {
                self.u_trace
                    .push(error_vector(&s.x, &s.v, instance.oracle.as_ref(), &sol.z_star));
            }
            if let Some(env) = self.envelope {
                let frac = self.report.hessian_envelope.get_or_insert_with(Fraction::default);
                for pair in s.curvature.iter().flatten() {
                    let e = pair.eigen;
                    let tol = 1e-12 * env.psi_high;
                    frac.record(e.lambda >= env.psi_low - tol && e.big_lambda <= env.psi_high + tol);
                }
            }
        }
    }

    fn finish(mut self, instance: &Instance) -> TheoryReport {
        if let Some(env) = self.envelope {
            if !self.u_trace.is_empty() {
                let c = instance.smoothness();
                let sigma = instance.mixing.sigma();
                let spec = contraction_matrix(self.alpha, c.l, c.mu, sigma, env.psi_low, env.psi_high);
                let report = check_contraction(&self.u_trace, &spec.j);
                let mut j = [[0.0; 3]; 3];
                for (r, row) in j.iter_mut().enumerate() {
                    for (k, v) in row.iter_mut().enumerate() {
                        *v = spec.j[(r, k)];
                    }
                }
                self.report.contraction = Some(ContractionSummary {
                    j,
                    rho: spec.rho,
                    rho_bound: contraction_rate_bound(c.l, c.mu, sigma, &env),
                    kappa_g: spec.kappa_g,
                    report,
                });
            }
        }
        self.report
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub label: String,
    pub algorithm: AlgorithmKind,
    pub alpha: f64,
    pub termination: Termination,
    pub iterations: usize,
    pub sigma: f64,
    pub edges: usize,
    pub l: f64,
    pub mu: f64,
    #[serde(skip)]
    pub trace: MetricTrace,
    pub report: Option<TheoryReport>,
    /// Final per-round mean `|β_i|` for conjugate-gradient methods.
    pub final_mean_abs_beta: Option<f64>,
    pub csv_path: Option<PathBuf>,
}

impl RunResult {
    pub fn final_row(&self) -> &MetricRow {
        self.trace.last().expect("trace holds the initial row")
    }

    /// The error used to rank runs: relative error when the minimizer is
    /// known, optimality error otherwise. Diverged runs rank last.
    pub fn score(&self) -> f64 {
        if self.termination == Termination::Divergence {
            return f64::INFINITY;
        }
        let row = self.final_row();
        row.relative_error
            .or(row.optimality_error)
            .filter(|v| v.is_finite())
            .unwrap_or(f64::INFINITY)
    }
}

/// Per-run knobs that do not belong in the configuration file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Record every round's mean `|β|` for CG methods.
    pub beta_history: bool,
}

/// Loads, runs and writes outputs for one experiment.
pub fn run(config: &ExperimentConfig) -> Result<RunResult, RunError> {
    let instance = build_instance(config)?;
    let mut result = if config.algorithm.alpha.is_none() && !config.algorithm.auto_alpha {
        grid_search(config, &instance)?.0
    } else {
        let alpha = resolve_alpha(config, &instance)?;
        run_on(config, &instance, alpha)?
    };
    result.csv_path = write_outputs(config, &result)?;
    Ok(result)
}

fn resolve_alpha(config: &ExperimentConfig, instance: &Instance) -> Result<f64, RunError> {
    let a = &config.algorithm;
    match a.alpha {
        Some(alpha) => Ok(alpha),
        None => theoretical_alpha(a.name, instance, a.l, a.u),
    }
}

/// Runs every stepsize in `alpha_grid` (plus `alpha` when given) and keeps
/// the best final error. Returns the winner and all `(alpha, score)` pairs.
pub fn grid_search(config: &ExperimentConfig, instance: &Instance) -> Result<(RunResult, Vec<(f64, f64)>), RunError> {
    let mut grid = config.algorithm.alpha_grid.clone();
    if let Some(a) = config.algorithm.alpha {
        if !grid.contains(&a) {
            grid.push(a);
        }
    }
    if config.algorithm.auto_alpha {
        grid.push(theoretical_alpha(config.algorithm.name, instance, config.algorithm.l, config.algorithm.u)?);
    }
    let mut best: Option<RunResult> = None;
    let mut scores = Vec::with_capacity(grid.len());
    for alpha in grid {
        let r = run_on(config, instance, alpha)?;
        scores.push((alpha, r.score()));
        // Ties keep the earlier grid entry.
        if best.as_ref().is_none_or(|b| r.score() < b.score()) {
            best = Some(r);
        }
    }
    let best = best.ok_or_else(|| ConfigError::Invalid("empty stepsize grid".into()))?;
    Ok((best, scores))
}

/// Runs one experiment on a prebuilt instance with a fixed stepsize.
pub fn run_on(config: &ExperimentConfig, instance: &Instance, alpha: f64) -> Result<RunResult, RunError> {
    run_with(config, instance, alpha, &RunOptions::default()).map(|(r, _)| r)
}

/// As [`run_on`], also returning the per-round mean `|β|` when requested.
pub fn run_with(
    config: &ExperimentConfig,
    instance: &Instance,
    alpha: f64,
    options: &RunOptions,
) -> Result<(RunResult, Vec<f64>), RunError> {
    let kind = config.algorithm.name;
    let params = config.algorithm.params(alpha);
    params.validate()?;
    let n = instance.graph.node_count();
    let p = instance.oracle.dim();
    let pool = if config.run.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.run.threads)
                .build()
                .map_err(|e| RunError::Dataset(format!("worker pool: {e}")))?,
        )
    } else {
        None
    };
    let mut net = Network::new(instance.oracle.as_ref(), instance.mixing.weights());
    if let Some(pool) = &pool {
        net = net.with_pool(pool);
    }

    let x0 = match &config.run.x0 {
        Some(z) if z.len() == p => NodeBlock::replicate(n, z),
        Some(z) => {
            return Err(RunError::Config(ConfigError::Invalid(format!(
                "run.x0 has length {}, problem dimension is {p}",
                z.len()
            ))))
        }
        None => NodeBlock::zeros(n, p),
    };

    let metrics = &config.run.metrics;
    let z_star = instance.solution.as_ref().map(|s| s.z_star.as_slice());
    let f_star = z_star.map(|z| instance.oracle.global_value(z));
    let edges = instance.graph.edge_count() as u64;
    let started = Instant::now();
    let mut monitor = config
        .run
        .check_theory
        .then(|| TheoryMonitor::new(kind, &params, instance, config.run.max_iters));
    let mut betas = Vec::new();

    let row_for = |s: &NodeStates| -> MetricRow {
        let want = |m: Metric| metrics.contains(&m);
        let need_opt = want(Metric::OptimalityError) || config.run.tol_optimality.is_some();
        let need_rel = want(Metric::RelativeError) || config.run.tol_relative.is_some();
        let x_mean = s.x.mean();
        MetricRow {
            iter: s.t as u64,
            comm_volume: communication_volume(s.t as u64, kind.rounds_per_iteration(), edges, p as u64),
            optimality_error: need_opt.then(|| analysis::optimality_error_with(&s.x, &s.g)),
            relative_error: z_star.filter(|_| need_rel).map(|z| analysis::relative_error(&s.x, z)),
            consensus_error: want(Metric::ConsensusError).then(|| s.x.consensus_error()),
            tracking_error: (want(Metric::TrackingError) && kind.tracks_gradient()).then(|| s.v.consensus_error()),
            potential: (want(Metric::Potential) && kind.tracks_gradient()).then(|| {
                analysis::potential(&s.x, &s.v, alpha, instance.oracle.as_ref(), instance.mixing.weights())
            }),
            objective_gap: f_star
                .filter(|_| want(Metric::ObjectiveGap))
                .map(|fs| n as f64 * (instance.oracle.global_value(x_mean.as_slice()) - fs)),
            wall_s: want(Metric::WallS).then(|| started.elapsed().as_secs_f64()),
        }
    };
    let converged = |row: &MetricRow| {
        let hit = |tol: Option<f64>, v: Option<f64>| matches!((tol, v), (Some(t), Some(v)) if v <= t);
        hit(config.run.tol_optimality, row.optimality_error) || hit(config.run.tol_relative, row.relative_error)
    };
    let finite = |row: &MetricRow| {
        [
            row.optimality_error,
            row.relative_error,
            row.consensus_error,
            row.tracking_error,
            row.potential,
            row.objective_gap,
        ]
        .iter()
        .flatten()
        .all(|v| v.is_finite())
    };

    let mut trace = MetricTrace::default();
    let mut termination = Termination::Budget;
    let mut states = match algorithms::init(kind, x0, &net, &params) {
        Ok(s) => s,
        Err(AlgoError::Diverged { .. }) => {
            return Err(RunError::Dataset("initial gradients are not finite".into()));
        }
        Err(e) => return Err(e.into()),
    };
    let first = row_for(&states);
    let done = converged(&first);
    trace.push(first);
    if let Some(m) = monitor.as_mut() {
        m.observe(&states, instance);
    }
    if done {
        termination = Termination::Tolerance;
    } else {
        for _ in 0..config.run.max_iters {
            if let Err(e) = algorithms::step(kind, &mut states, &net, &params) {
                match e {
                    AlgoError::Diverged { .. } => {
                        termination = Termination::Divergence;
                        break;
                    }
                    other => return Err(other.into()),
                }
            }
            if options.beta_history {
                betas.push(states.beta.iter().map(|b| b.abs()).sum::<f64>() / n as f64);
            }
            let row = row_for(&states);
            if !finite(&row) {
                termination = Termination::Divergence;
                break;
            }
            let done = converged(&row);
            trace.push(row);
            if let Some(m) = monitor.as_mut() {
                m.observe(&states, instance);
            }
            if done {
                termination = Termination::Tolerance;
                break;
            }
        }
    }

    let c = instance.smoothness();
    let cg = matches!(kind, AlgorithmKind::Sdcg | AlgorithmKind::Ndcg);
    let result = RunResult {
        label: config.algorithm.label(),
        algorithm: kind,
        alpha,
        termination,
        iterations: trace.last().map_or(0, |r| r.iter as usize),
        sigma: instance.mixing.sigma(),
        edges: instance.graph.edge_count(),
        l: c.l,
        mu: c.mu,
        report: monitor.map(|m| m.finish(instance)),
        final_mean_abs_beta: cg.then(|| states.beta.iter().map(|b| b.abs()).sum::<f64>() / n as f64),
        trace,
        csv_path: None,
    };
    Ok((result, betas))
}

/// Where the trace for `config` goes, honouring the output directory override.
pub fn output_path(config: &ExperimentConfig) -> Option<PathBuf> {
    let dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    match (&config.run.output, dir) {
        (Some(p), Some(dir)) if p.is_relative() => Some(dir.join(p)),
        (Some(p), _) => Some(p.clone()),
        (None, Some(dir)) => Some(dir.join(format!("{}.csv", config.algorithm.label()))),
        (None, None) => None,
    }
}

fn write_outputs(config: &ExperimentConfig, result: &RunResult) -> Result<Option<PathBuf>, RunError> {
    let Some(path) = output_path(config) else {
        return Ok(None);
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut out = BufWriter::new(file);
    result.trace.write_csv(&mut out).map_err(io_err(&path))?;
    out.flush().map_err(io_err(&path))?;
    if result.report.is_some() {
        let json_path = path.with_extension("report.json");
        let text = serde_json::to_string_pretty(result).expect("report serializes");
        std::fs::write(&json_path, text + "\n").map_err(io_err(&json_path))?;
    }
    Ok(Some(path))
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub alpha: f64,
    pub termination: Termination,
    pub iterations: usize,
    pub comm_volume: u64,
    pub final_optimality_error: Option<f64>,
    pub final_relative_error: Option<f64>,
    /// Every stepsize tried with its final error.
    pub grid: Vec<(f64, f64)>,
}

pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub runs: Vec<RunResult>,
}

impl Comparison {
    /// Plain-text table, one line per algorithm.
    pub fn table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3e}"));
        let mut out = format!(
            "{:<12} {:>10} {:>11} {:>8} {:>14} {:>12} {:>12}\n",
            "algorithm", "alpha", "termination", "iters", "comm_volume", "opt_error", "rel_error"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<12} {:>10.3e} {:>11} {:>8} {:>14} {:>12} {:>12}\n",
                r.label,
                r.alpha,
                format!("{:?}", r.termination).to_lowercase(),
                r.iterations,
                r.comm_volume,
                cell(r.final_optimality_error),
                cell(r.final_relative_error)
            ));
        }
        out
    }

    /// Long-format CSV of all traces, so they can be aligned on either the
    /// iteration or the communication-volume axis.
    pub fn write_aligned_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "algorithm,iter,comm_volume,optimality_error,relative_error")?;
        let cell = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for run in &self.runs {
            for row in &run.trace.rows {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    run.label,
                    row.iter,
                    row.comm_volume,
                    cell(row.optimality_error),
                    cell(row.relative_error)
                )?;
            }
        }
        Ok(())
    }
}

/// Runs several configurations on one shared instance.
pub fn compare(configs: &[ExperimentConfig]) -> Result<Comparison, RunError> {
    let first = configs
        .first()
        .ok_or_else(|| ConfigError::Invalid("compare needs at least one config".into()))?;
    for c in &configs[1..] {
        if c.problem != first.problem {
            return Err(RunError::Mismatch("problem"));
        }
        if c.network != first.network {
            return Err(RunError::Mismatch("network"));
        }
        if c.run.seed != first.run.seed {
            return Err(RunError::Mismatch("seed"));
        }
    }
    let needs_solution = configs.iter().any(|c| c.run.compute_z_star);
    let mut shared = first.clone();
    shared.run.compute_z_star = needs_solution;
    let instance = build_instance(&shared)?;

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for config in configs {
        let (result, grid) = if config.algorithm.alpha_grid.is_empty() {
            let alpha = resolve_alpha(config, &instance)?;
            let r = run_on(config, &instance, alpha)?;
            let score = r.score();
            (r, vec![(alpha, score)])
        } else {
            grid_search(config, &instance)?
        };
        let last = result.final_row();
        rows.push(ComparisonRow {
            label: result.label.clone(),
            alpha: result.alpha,
            termination: result.termination,
            iterations: result.iterations,
            comm_volume: last.comm_volume,
            final_optimality_error: last.optimality_error,
            final_relative_error: last.relative_error,
            grid,
        });
        runs.push(result);
    }
    Ok(Comparison { rows, runs })
}
