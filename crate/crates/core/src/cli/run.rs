//! Task execution and report emission.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bicoherent::{bicoherent_state, evaluate_grid, family_radius_report, polar_grid, split_support_closed_form};
use crate::fock::{qmutator_residual, FockVector};
use crate::positionrep::{
    hermite_test_function, ladder_check, norm_formula_check, position_family, position_radius_report,
    qmutation_grid_check, similarity_check, Grid, PositionParams,
};
use crate::pseudoquon::{
    build_family, build_theta, check_ladder, check_theta, check_theta_conjugate, isospectrality, make_pair,
    number_eigencheck, BiorthogonalFamily, LadderPair, SimilarityOperator, SplitSupport,
};
use crate::resolution::{resolution_check, solve_moment_measure, MOMENT_TOL};
use crate::C64;

use super::config::{ExperimentConfig, FamilyConfig, TaskConfig};
use super::CliError;

/// How a metric value is compared with its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `value <= tolerance`.
    AtMost,
    /// `value > tolerance`.
    Above,
    /// Reported only.
    Info,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metric {
    pub value: f64,
    pub tolerance: Option<f64>,
    pub comparison: Comparison,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TaskReport {
    pub pass: bool,
    pub metrics: BTreeMap<String, Metric>,
    /// The error that stopped the task, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Artifact file names written into the output directory.
    pub artifacts: Vec<String>,
}

/// The report bundle. Timings are kept apart so the rest is reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub pass: bool,
    pub seed: u64,
    pub q: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub family: String,
    pub tasks: BTreeMap<String, TaskReport>,
    pub timings: BTreeMap<String, f64>,
}

impl Summary {
    /// Names of failed metrics and errored tasks.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (task, rep) in &self.tasks {
            if let Some(e) = &rep.error {
                out.push(format!("{task}: {e}"));
            }
            for (name, m) in &rep.metrics {
                if !m.pass {
                    let tol = m.tolerance.map(|t| format!("{t:e}")).unwrap_or_default();
                    let op = if m.comparison == Comparison::Above { ">" } else { "<=" };
                    out.push(format!("{task}.{name} = {:e}, required {op} {tol}", m.value));
                }
            }
        }
        out
    }

    pub fn write_metrics_csv(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
        w.write_record(["task", "metric", "value", "tolerance", "pass"]).map_err(|e| CliError::io(path, e))?;
        for (task, rep) in &self.tasks {
            for (name, m) in &rep.metrics {
                let tol = m.tolerance.map(|t| format!("{t:e}")).unwrap_or_default();
                w.write_record([task.as_str(), name, &format!("{:e}", m.value), &tol, &m.pass.to_string()])
                    .map_err(|e| CliError::io(path, e))?;
            }
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }
}

/// Builds metrics with tolerance overrides and a global scale applied.
struct MetricSink<'a> {
    task: &'static str,
    overrides: &'a BTreeMap<String, f64>,
    scale: f64,
    report: TaskReport,
}

impl<'a> MetricSink<'a> {
    fn new(task: &'static str, overrides: &'a BTreeMap<String, f64>, scale: f64) -> Self {
        Self { task, overrides, scale, report: TaskReport::default() }
    }

    fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.overrides.get(&format!("{}.{name}", self.task)).copied().unwrap_or(default * self.scale)
    }

    fn at_most(&mut self, name: &str, value: f64, default: f64) {
        let tol = self.tolerance(name, default);
        let pass = value <= tol;
        self.push(name, Metric { value, tolerance: Some(tol), comparison: Comparison::AtMost, pass });
    }

    /// `value > threshold`; the threshold is not scaled.
    fn above(&mut self, name: &str, value: f64, threshold: f64) {
        let pass = value > threshold;
        self.push(name, Metric { value, tolerance: Some(threshold), comparison: Comparison::Above, pass });
    }

    fn info(&mut self, name: &str, value: f64) {
        self.push(name, Metric { value, tolerance: None, comparison: Comparison::Info, pass: true });
    }

    fn push(&mut self, name: &str, m: Metric) {
        self.report.metrics.insert(name.to_string(), m);
    }

    fn artifact(&mut self, name: &str) {
        self.report.artifacts.push(name.to_string());
    }

    fn finish(mut self, outcome: Result<(), CliError>) -> TaskReport {
        if let Err(e) = outcome {
            self.report.error = Some(e.to_string());
        }
        self.report.pass = self.report.error.is_none() && self.report.metrics.values().all(|m| m.pass);
        self.report
    }
}

/// Shared state built once before the tasks.
enum Prepared {
    Fock { similarity: SimilarityOperator, family: BiorthogonalFamily, pair: LadderPair },
    Position(PositionParams),
}

pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tolerance_scale: f64,
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    prepared: &'a Prepared,
    out: Option<&'a Path>,
    seed: u64,
    scale: f64,
}

impl Context<'_> {
    fn artifact_path(&self, name: &str) -> Option<PathBuf> {
        self.out.map(|d| d.join(name))
    }

    fn create(&self, name: &str, sink: &mut MetricSink) -> Result<Option<BufWriter<File>>, CliError> {
        match self.artifact_path(name) {
            None => Ok(None),
            Some(path) => {
                let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
                sink.artifact(name);
                Ok(Some(BufWriter::new(f)))
            }
        }
    }
}

pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Summary, CliError> {
    cfg.validate()?;
    if !(opts.tolerance_scale.is_finite() && opts.tolerance_scale > 0.0) {
        return Err(CliError::Config(format!("tolerance-scale: {} is not positive", opts.tolerance_scale)));
    }
    if let Some(dir) = &opts.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let seed = opts.seed.unwrap_or(cfg.seed);
    let q = cfg.qparam();
    let mut timings = BTreeMap::new();

    let t0 = Instant::now();
    let prepared = match &cfg.family {
        FamilyConfig::Position { gamma } => Prepared::Position(
            PositionParams::new(q, *gamma).map_err(|e| CliError::Config(format!("family: {e}")))?,
        ),
        _ => {
            let similarity = cfg.similarity()?.expect("Fock family");
            let family = build_family(&similarity, q, cfg.k).map_err(|e| CliError::Config(format!("family: {e}")))?;
            let pair = make_pair(&similarity, q, cfg.k).map_err(|e| CliError::Config(format!("family: {e}")))?;
            Prepared::Fock { similarity, family, pair }
        }
    };
    timings.insert("setup".to_string(), t0.elapsed().as_secs_f64());

    let ctx = Context { cfg, prepared: &prepared, out: opts.out.as_deref(), seed, scale: opts.tolerance_scale };
    let tasks = cfg.task_list();
    let results: Vec<(String, TaskReport, f64)> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| {
            let start = Instant::now();
            let report = run_task(&ctx, task);
            let name = task_key(&tasks, i);
            (name, report, start.elapsed().as_secs_f64())
        })
        .collect();

    let mut summary = Summary {
        pass: true,
        seed,
        q: cfg.q,
        k: cfg.k,
        family: cfg.family.name().to_string(),
        tasks: BTreeMap::new(),
        timings,
    };
    for (name, report, secs) in results {
        summary.pass &= report.pass;
        summary.timings.insert(name.clone(), secs);
        summary.tasks.insert(name, report);
    }
    if let Some(dir) = &opts.out {
        let path = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        summary.write_metrics_csv(&dir.join("metrics.csv"))?;
    }
    Ok(summary)
}

/// Task name, suffixed with its ordinal when the kind repeats.
fn task_key(tasks: &[TaskConfig], i: usize) -> String {
    let kind = tasks[i].kind();
    let name = kind.name();
    if tasks.iter().filter(|t| t.kind() == kind).count() > 1 {
        let ordinal = tasks[..i].iter().filter(|t| t.kind() == kind).count();
        format!("{name}_{ordinal}")
    } else {
        name.to_string()
    }
}

fn lib(e: crate::Error) -> CliError {
    CliError::Task(e.to_string())
}

fn run_task(ctx: &Context, task: &TaskConfig) -> TaskReport {
    let name = task.kind().name();
    let mut sink = MetricSink::new(name, &ctx.cfg.tolerances, ctx.scale);
    let outcome = match (task, ctx.prepared) {
        (TaskConfig::Mutator, Prepared::Fock { family, pair, .. }) => mutator_task(ctx, family, pair, &mut sink),
        (TaskConfig::Family, Prepared::Fock { family, pair, .. }) => family_task(ctx, family, pair, &mut sink),
        (TaskConfig::Theta, Prepared::Fock { family, pair, .. }) => theta_task(family, pair, &mut sink),
        (TaskConfig::Bicoherent { z_grid }, Prepared::Fock { similarity, family, pair }) => {
            bicoherent_task(ctx, similarity, family, pair, z_grid, &mut sink)
        }
        (TaskConfig::Resolution { k_mom, n_theta, pairs, support }, Prepared::Fock { family, .. }) => {
            resolution_task(ctx, family, *k_mom, *n_theta, *pairs, *support, &mut sink)
        }
        (TaskConfig::Position { n_max }, Prepared::Position(p)) => position_task(ctx, p, *n_max, &mut sink),
        _ => Err(CliError::Config(format!("{name} does not apply to the {} family", ctx.cfg.family.name()))),
    };
    sink.finish(outcome)
}

fn mutator_task(ctx: &Context, family: &BiorthogonalFamily, pair: &LadderPair, sink: &mut MetricSink) -> Result<(), CliError> {
    let residual = qmutator_residual(&pair.a, &pair.b, pair.q, family.k_safe()).map_err(lib)?;
    sink.at_most("qmutator_residual", residual, 1e-12);
    sink.info("k_safe", family.k_safe() as f64);
    if let Some(w) = ctx.create("a.csv", sink)? {
        pair.a.write_csv(w).map_err(lib)?;
    }
    if let Some(w) = ctx.create("b.csv", sink)? {
        pair.b.write_csv(w).map_err(lib)?;
    }
    Ok(())
}

fn family_task(ctx: &Context, family: &BiorthogonalFamily, pair: &LadderPair, sink: &mut MetricSink) -> Result<(), CliError> {
    let ladder = check_ladder(family, pair).map_err(lib)?;
    let number = number_eigencheck(family, pair).map_err(lib)?;
    let spectrum = isospectrality(pair, family.k_safe()).map_err(lib)?;
    let mut residuals = BTreeMap::new();
    residuals.insert("biorthogonality".to_string(), family.biorthogonality_defect());
    residuals.insert("construction".to_string(), family.construction_defect());
    residuals.insert("ladder".to_string(), ladder.max());
    residuals.insert("number_phi".to_string(), number.phi_residual);
    residuals.insert("number_psi".to_string(), number.psi_residual);
    residuals.insert("spectrum_gap".to_string(), spectrum.max_gap);
    residuals.insert("spectrum_vs_beta_sq".to_string(), spectrum.max_gap_to_beta_sq);
    sink.at_most("biorthogonality", family.biorthogonality_defect(), 1e-11);
    sink.at_most("ladder", ladder.max(), 1e-11);
    sink.at_most("number_phi", number.phi_residual, 1e-11);
    sink.at_most("number_psi", number.psi_residual, 1e-11);
    sink.at_most("spectrum_gap", spectrum.max_gap, 1e-9);
    sink.at_most("spectrum_vs_beta_sq", spectrum.max_gap_to_beta_sq, 1e-9);
    sink.info("construction", family.construction_defect());
    if let Some(mut w) = ctx.create("family.json", sink)? {
        serde_json::to_writer(&mut w, &family.document(&residuals)).map_err(|e| CliError::Task(e.to_string()))?;
    }
    Ok(())
}

fn theta_task(family: &BiorthogonalFamily, pair: &LadderPair, sink: &mut MetricSink) -> Result<(), CliError> {
    let theta = build_theta(family);
    let r = check_theta(family, pair, &theta).map_err(lib)?;
    let c = check_theta_conjugate(family, pair, &theta, family.k_safe()).map_err(lib)?;
    sink.at_most("closed_form_gap", r.closed_form_gap, 1e-11);
    sink.at_most("inverse_defect", r.inverse_defect, 1e-11);
    sink.at_most("self_adjoint_defect", r.self_adjoint_defect, 1e-11);
    sink.at_most("maps_phi_to_psi", r.maps_phi_to_psi, 1e-11);
    sink.at_most("intertwining", r.intertwining, 1e-10);
    sink.at_most("conjugacy_residual", c.conjugacy_residual, 1e-10);
    sink.above("min_eigenvalue", r.min_eigenvalue, 0.0);
    Ok(())
}

fn bicoherent_task(
    ctx: &Context,
    similarity: &SimilarityOperator,
    family: &BiorthogonalFamily,
    pair: &LadderPair,
    z_grid: &super::config::ZGrid,
    sink: &mut MetricSink,
) -> Result<(), CliError> {
    let q = family.q();
    let r_max = z_grid.outer_radius(q.coherent_radius());
    let zs = polar_grid(r_max, z_grid.n_r, z_grid.n_theta);
    let records = evaluate_grid(family, pair, &zs).map_err(lib)?;
    let max = |f: &dyn Fn(&crate::bicoherent::ZRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
    sink.at_most("eigen_phi", max(&|r| r.eigen_phi), 1e-9);
    sink.at_most("eigen_psi", max(&|r| r.eigen_psi), 1e-9);
    sink.at_most("pairing", max(&|r| C64::new(r.pairing_re - 1.0, r.pairing_im).norm()), 1e-9);
    sink.at_most("uncertainty", max(&|r| (r.uncertainty_computed - r.uncertainty_predicted).abs()), 1e-7);
    sink.info("r_max", r_max);
    if ctx.cfg.family.is_standard_split() {
        if let SimilarityOperator::RankOne(def) = similarity {
            let split = SplitSupport::standard();
            let mut worst: f64 = 0.0;
            for &z in &zs {
                let state = bicoherent_state(family, z, None).map_err(lib)?;
                let (phi, psi) = split_support_closed_form(&split, def.alpha(), q, z, family.dim()).map_err(lib)?;
                worst = worst.max((&state.phi_z.0 - &phi.0).norm()).max((&state.psi_z.0 - &psi.0).norm());
            }
            sink.at_most("closed_form", worst, 1e-10);
        }
    }
    if q.value() < 1.0 {
        let radius = family_radius_report(family).map_err(lib)?;
        sink.at_most("rho_analytic_gap", (radius.rho - q.coherent_radius()).abs(), 1e-12);
        sink.info("rho_empirical", radius.empirical);
    }
    if let Some(w) = ctx.create("bicoherent.csv", sink)? {
        let mut w = csv::Writer::from_writer(w);
        for r in &records {
            w.serialize(r).map_err(|e| CliError::Task(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Task(e.to_string()))?;
    }
    Ok(())
}

fn resolution_task(
    ctx: &Context,
    family: &BiorthogonalFamily,
    k_mom: usize,
    n_theta: usize,
    pairs: usize,
    support: usize,
    sink: &mut MetricSink,
) -> Result<(), CliError> {
    let q = family.q();
    let quad = solve_moment_measure(q, q.coherent_radius(), k_mom).map_err(lib)?;
    sink.at_most("moment_residual", quad.max_residual(), MOMENT_TOL);
    sink.above("feasible", if quad.feasible { 1.0 } else { 0.0 }, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let f = FockVector::random(&mut rng, support);
        let g = FockVector::random(&mut rng, support);
        let value = resolution_check(family, &quad, n_theta, &f, &g).map_err(lib)?;
        worst = worst.max((value - f.inner(&g)).norm());
    }
    sink.at_most("resolution_error", worst, 1e-8);
    sink.info("nodes", quad.nodes.len() as f64);
    if let Some(w) = ctx.create("quadrature.csv", sink)? {
        quad.write_csv(w).map_err(lib)?;
    }
    if let Some(w) = ctx.create("quadrature.json", sink)? {
        serde_json::to_writer_pretty(w, &quad).map_err(|e| CliError::Task(e.to_string()))?;
    }
    Ok(())
}

fn position_task(ctx: &Context, p: &PositionParams, n_max: usize, sink: &mut MetricSink) -> Result<(), CliError> {
    let grid = Grid::default_for(p.gamma());
    let ladder = ladder_check(p, n_max, &grid).map_err(lib)?;
    sink.at_most("ladder", ladder.max(), 1e-10);
    let qm = qmutation_grid_check(p, &[hermite_test_function(p)], &grid).map_err(lib)?;
    sink.at_most("qmutator", qm, 1e-10);
    let sim = similarity_check(p, n_max, &grid).map_err(lib)?;
    sink.at_most("phi_vs_s", sim.phi_vs_s, 1e-11);
    sink.at_most("psi_vs_s_inverse", sim.psi_vs_s_inverse, 1e-11);
    sink.at_most("gamma_mirror", sim.gamma_mirror, 1e-11);
    sink.at_most("biorthogonality", sim.biorthogonality, 1e-9);
    sink.at_most("theta_conjugacy", sim.theta_conjugacy, 1e-10);
    sink.info("phi_gram_condition", sim.phi_gram_condition);
    let norms = norm_formula_check(p, n_max, &grid).map_err(lib)?;
    sink.at_most("norm_formula", norms.max_relative_error(), 1e-6);
    sink.above("l_n_bound", if norms.bound_holds() { 1.0 } else { 0.0 }, 0.0);
    let radius = position_radius_report(p, n_max.max(16), &grid).map_err(lib)?;
    sink.at_most("rho_analytic_gap", (radius.rho - (1.0 - p.q().value()).sqrt()).abs(), 1e-12);
    sink.info("rho_empirical", radius.empirical);
    let fam = position_family(p, n_max);
    if let Some(w) = ctx.create("position_phi.csv", sink)? {
        fam.write_csv(&grid, false, w).map_err(lib)?;
    }
    if let Some(w) = ctx.create("position_psi.csv", sink)? {
        fam.write_csv(&grid, true, w).map_err(lib)?;
    }
    Ok(())
}
