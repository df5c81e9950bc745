//! Experiment harness: accuracy, ablation, proxy and scaling studies, each
//! producing a table written as CSV with a `#` metadata header.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::{apply_dense, evaluate_potential, OperatorSpec};
use crate::config::{ExperimentConfig, ProxyChoice};
use crate::error::{Error, Result};
use crate::error_model::{
    count_for_order, estimate_proxy_order, fit_constants, measure_constants, model_error, ModelConstants,
    SweepPoint,
};
use crate::geometry::Discretization;
use crate::kernels::green;
use crate::linalg::{norm2, relative_error};
use crate::skeletonization::{skeletonize_level, ClusterDiagnostics, ProxyCount, SkelParams};
use crate::solver::{leaf_clusters, FastSolver};
use crate::tree::build_tree;

/// Rows of one study plus `key = value` metadata and scalar summaries.
#[derive(Debug, Clone)]
pub struct Report<R> {
    pub name: String,
    pub meta: Vec<(String, String)>,
    pub summary: Vec<(String, f64)>,
    pub rows: Vec<R>,
}

impl<R: Serialize> Report<R> {
    fn new(name: &str, cfg: &ExperimentConfig) -> Self {
        Report { name: name.to_string(), meta: cfg.metadata(), summary: Vec::new(), rows: Vec::new() }
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# study = {}", self.name)?;
        for (k, v) in &self.meta {
            writeln!(out, "# {k} = {v}")?;
        }
        for (k, v) in &self.summary {
            writeln!(out, "# {k} = {v:e}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Write `<dir>/<name>.csv`, creating `dir` if needed.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.csv", self.name));
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
        Ok(path)
    }
}

/// Uniform random density on `[-1, 1]`.
pub fn random_density(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn sample_seed(cfg: &ExperimentConfig, sample: usize) -> u64 {
    cfg.seed.wrapping_mul(1_000_003).wrapping_add(sample as u64)
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter("slope fit needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("slope fit needs distinct abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Geometric constants from skeletonizing the tree leaves once with the
/// pilot proxy count, combined with the configured fit multipliers.
pub fn pilot_constants(cfg: &ExperimentConfig, spec: &OperatorSpec, disc: &Discretization, tol: f64) -> Result<ModelConstants> {
    let tree = build_tree(disc, cfg.solver.leaf_panels)?;
    let d = disc.renumbered(&tree.perm, &tree.panel_order);
    let skel = skeletonize_level(spec, &d, &tree, &leaf_clusters(&tree), &cfg.skel_params(tol, cfg.proxy.pilot_count))?;
    let diags: Vec<ClusterDiagnostics> = skel.clusters.iter().map(|c| c.diagnostics).collect();
    Ok(measure_constants(disc.dim, cfg.proxy.alpha, &diags).with_fit(cfg.proxy.big_c0, cfg.proxy.big_c1))
}

/// Skeletonization parameters for `tol`, resolving `count = "auto"`.
pub fn resolve_params(cfg: &ExperimentConfig, spec: &OperatorSpec, disc: &Discretization, tol: f64) -> Result<SkelParams> {
    match cfg.proxy_choice()? {
        ProxyChoice::Fixed(q) => Ok(cfg.skel_params(tol, q)),
        ProxyChoice::Auto => {
            let k = pilot_constants(cfg, spec, disc, tol)?;
            Ok(SkelParams { proxy: ProxyCount::Auto(k), ..cfg.skel_params(tol, cfg.proxy.pilot_count) })
        }
    }
}

fn build(cfg: &ExperimentConfig) -> Result<(OperatorSpec, Discretization)> {
    cfg.validate()?;
    let disc = cfg.discretization()?;
    Ok((cfg.operator_spec(), disc))
}

fn dense_references(cfg: &ExperimentConfig, spec: &OperatorSpec, disc: &Discretization) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    (0..cfg.samples)
        .map(|s| {
            let sigma = random_density(disc.len(), sample_seed(cfg, s));
            let b = apply_dense(spec, disc, &sigma)?;
            Ok((sigma, b))
        })
        .collect()
}

fn max_rank(solver: &FastSolver) -> usize {
    solver.factor.levels.iter().flat_map(|l| l.blocks.iter().map(|b| b.rank())).max().unwrap_or(0)
}

/// `|y - b| / |sigma|` for `y = A_eps sigma`, `b = A sigma`.
pub fn forward_error(y: &[f64], b: &[f64], sigma: &[f64]) -> f64 {
    let diff: Vec<f64> = y.iter().zip(b).map(|(a, c)| a - c).collect();
    norm2(&diff) / norm2(sigma)
}

fn forward_errors(solver: &FastSolver, refs: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<f64>> {
    refs.iter().map(|(s, b)| Ok(forward_error(&solver.apply(s)?, b, s))).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ForwardRow {
    pub eps_id: f64,
    /// `random` or the `zero` control density.
    pub density: String,
    pub sample: usize,
    pub n: usize,
    pub proxy_count: usize,
    pub max_rank: usize,
    pub root_size: usize,
    pub error: f64,
}

/// Forward error `|A_eps s - A s| / |s|` of the compressed
/// operator against the dense QBX product, per tolerance and density.
pub fn cmd_forward_error(cfg: &ExperimentConfig) -> Result<Report<ForwardRow>> {
    let (spec, disc) = build(cfg)?;
    let refs = dense_references(cfg, &spec, &disc)?;
    let mut rep = Report::new("forward_error", cfg);
    for &tol in &cfg.tolerances {
        let params = resolve_params(cfg, &spec, &disc, tol)?;
        let solver = FastSolver::new(&spec, &disc, cfg.solver.leaf_panels, &params, cfg.levels())?;
        let row = |density: &str, sample: usize, error: f64| ForwardRow {
            eps_id: tol,
            density: density.to_string(),
            sample,
            n: disc.len(),
            proxy_count: solver.factor.levels.first().map_or(0, |l| l.proxy_count),
            max_rank: max_rank(&solver),
            root_size: solver.factor.root_rows.len(),
            error,
        };
        for (s, e) in forward_errors(&solver, &refs)?.into_iter().enumerate() {
            rep.rows.push(row("random", s, e));
        }
        let zero = solver.apply(&vec![0.0; disc.len()])?;
        rep.rows.push(row("zero", 0, norm2(&zero)));
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub eps_id: f64,
    pub weighted: bool,
    pub sample: usize,
    pub error: f64,
}

/// Forward error with and without the proxy weight scaling.
///
/// Summaries: `median_weighted`, `median_unweighted`, and
/// `fraction_weighted_better` over tolerances (per-tolerance medians).
pub fn cmd_ablate_weight(cfg: &ExperimentConfig) -> Result<Report<AblationRow>> {
    let (spec, disc) = build(cfg)?;
    let refs = dense_references(cfg, &spec, &disc)?;
    let mut rep = Report::new("ablate_weight", cfg);
    let (mut all_w, mut all_u, mut better) = (Vec::new(), Vec::new(), 0usize);
    for &tol in &cfg.tolerances {
        let mut med = [0.0; 2];
        for (slot, weighted) in [true, false].into_iter().enumerate() {
            let params = SkelParams { weighted, ..resolve_params(cfg, &spec, &disc, tol)? };
            let solver = FastSolver::new(&spec, &disc, cfg.solver.leaf_panels, &params, cfg.levels())?;
            let errs = forward_errors(&solver, &refs)?;
            med[slot] = median(&errs);
            for (s, &error) in errs.iter().enumerate() {
                rep.rows.push(AblationRow { eps_id: tol, weighted, sample: s, error });
            }
            if weighted { &mut all_w } else { &mut all_u }.extend(errs);
        }
        if med[0] <= med[1] {
            better += 1;
        }
    }
    rep.summary.push(("median_weighted".into(), median(&all_w)));
    rep.summary.push(("median_unweighted".into(), median(&all_u)));
    rep.summary.push(("fraction_weighted_better".into(), better as f64 / cfg.tolerances.len().max(1) as f64));
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub p: usize,
    pub q: usize,
    pub eps_id: f64,
    pub error: f64,
    /// Whether the point entered the slope fit.
    pub fitted: bool,
}

/// Errors above this multiple of the per-alpha floor count as proxy-dominated.
const FLOOR_MARGIN: f64 = 100.0;

/// Forward error against the proxy order `p` at a tight ID tolerance, per
/// proxy factor `alpha`.
///
/// Summaries per alpha: `slope_<alpha>` (least-squares slope of `ln error`
/// against `p` over the points above `100 x` the error floor) and
/// `ratio_<alpha>` = slope / (-ln alpha).
pub fn cmd_sweep_proxy(cfg: &ExperimentConfig) -> Result<Report<SweepRow>> {
    let (spec, disc) = build(cfg)?;
    let refs = dense_references(cfg, &spec, &disc)?;
    let mut rep = Report::new("sweep_proxy", cfg);
    let eps = cfg.sweep.eps_id;
    for &alpha in &cfg.sweep.alphas {
        let mut rows = Vec::new();
        for &p in &cfg.sweep.orders {
            let q = count_for_order(disc.dim, p);
            let params = SkelParams { alpha, ..cfg.skel_params(eps, q) };
            let solver = FastSolver::new(&spec, &disc, cfg.solver.leaf_panels, &params, cfg.levels())?;
            let error = median(&forward_errors(&solver, &refs)?);
            rows.push(SweepRow { alpha, p, q, eps_id: eps, error, fitted: false });
        }
        let floor = rows.iter().map(|r| r.error).fold(f64::INFINITY, f64::min);
        for r in rows.iter_mut() {
            r.fitted = r.error > FLOOR_MARGIN * floor;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.fitted).map(|r| (r.p as f64, r.error.ln())).unzip();
        let slope = fit_slope(&xs, &ys).unwrap_or(f64::NAN);
        rep.summary.push((format!("slope_{alpha}"), slope));
        rep.summary.push((format!("ratio_{alpha}"), slope / -alpha.ln()));
        rep.rows.extend(rows);
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRow {
    pub eps_id: f64,
    /// Smallest doubled count (from `q_start`) meeting `error <= 10 eps_id`,
    /// 0 when `q_max` was reached first.
    pub q_empirical: usize,
    pub error_empirical: f64,
    pub p_model: usize,
    pub q_model: usize,
    /// `q_model / q_empirical`.
    pub ratio: f64,
}

/// Fitted constants and the doubling-search samples behind them.
#[derive(Debug, Clone)]
pub struct EstimateOutcome {
    pub report: Report<EstimateRow>,
    pub constants: ModelConstants,
    pub sweep: Vec<SweepPoint>,
}

/// Empirical proxy count by doubling versus the model's count with
/// constants fitted to the doubling samples themselves.
pub fn cmd_estimate_q(cfg: &ExperimentConfig) -> Result<EstimateOutcome> {
    let (spec, disc) = build(cfg)?;
    let refs = dense_references(cfg, &spec, &disc)?;
    let alpha = cfg.proxy.alpha;
    let mut sweep = Vec::new();
    let mut found = Vec::new();
    let mut diags: Vec<ClusterDiagnostics> = Vec::new();
    for &eps in &cfg.sweep.fit_tolerances {
        let mut q = cfg.sweep.q_start;
        let mut hit = None;
        while q <= cfg.sweep.q_max {
            let solver = FastSolver::new(&spec, &disc, cfg.solver.leaf_panels, &cfg.skel_params(eps, q), cfg.levels())?;
            let error = median(&forward_errors(&solver, &refs)?);
            let q_real = solver.factor.levels.first().map_or(q, |l| l.proxy_count);
            sweep.push(SweepPoint { eps_id: eps, q: q_real, alpha, measured: error });
            diags.extend(solver.factor.diagnostics().copied());
            if error <= 10.0 * eps {
                hit = Some((q, error));
                break;
            }
            q *= 2;
        }
        found.push(hit);
    }
    let base = measure_constants(disc.dim, alpha, &diags);
    let fit = fit_constants(&sweep, &base)?;
    let k = base.with_fit(fit.big_c0.max(f64::MIN_POSITIVE), fit.big_c1.max(f64::MIN_POSITIVE));
    let mut report = Report::new("estimate_q", cfg);
    for (&eps, hit) in cfg.sweep.fit_tolerances.iter().zip(&found) {
        let (p_model, q_model) = estimate_proxy_order(eps, alpha, k.r_pxy, &k)?;
        let (q_emp, err_emp) = hit.unwrap_or((0, f64::NAN));
        report.rows.push(EstimateRow {
            eps_id: eps,
            q_empirical: q_emp,
            error_empirical: err_emp,
            p_model,
            q_model,
            ratio: if q_emp > 0 { q_model as f64 / q_emp as f64 } else { f64::NAN },
        });
    }
    report.summary.push(("big_c0".into(), fit.big_c0));
    report.summary.push(("big_c1".into(), fit.big_c1));
    report.summary.push(("c0".into(), k.c0));
    report.summary.push(("c1".into(), k.c1));
    report.summary.push(("r_pxy".into(), k.r_pxy));
    report.summary.push(("fit_residual".into(), fit.residual));
    report.summary.push(("fit_degenerate".into(), if fit.degenerate { 1.0 } else { 0.0 }));
    Ok(EstimateOutcome { report, constants: k, sweep })
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveRow {
    pub eps_id: f64,
    pub sample: usize,
    pub error: f64,
    /// Residual of the recovered density through the compressed operator.
    pub residual: f64,
}

/// Relative solution error: `b = A s` densely, `x = A_eps^{-1} b`, compare
/// `x` with `s`.
pub fn cmd_solve_error(cfg: &ExperimentConfig) -> Result<Report<SolveRow>> {
    let (spec, disc) = build(cfg)?;
    let refs = dense_references(cfg, &spec, &disc)?;
    let mut rep = Report::new("solve_error", cfg);
    for &tol in &cfg.tolerances {
        let params = resolve_params(cfg, &spec, &disc, tol)?;
        let solver = FastSolver::new(&spec, &disc, cfg.solver.leaf_panels, &params, cfg.levels())?;
        for (s, (sigma, b)) in refs.iter().enumerate() {
            let x = solver.solve(b)?;
            let residual = relative_error(&solver.apply(&x)?, b);
            rep.rows.push(SolveRow { eps_id: tol, sample: s, error: relative_error(&x, sigma), residual });
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub panels: usize,
    pub n: usize,
    pub levels: usize,
    pub root_size: usize,
    pub compress_seconds: f64,
    pub solve_seconds: f64,
    pub total_seconds: f64,
    pub memory_bytes: usize,
}

/// Wall time of compression plus one solve against problem size.
/// Summary `slope`: least-squares slope of `ln total` against `ln n`.
pub fn cmd_scaling(cfg: &ExperimentConfig) -> Result<Report<ScalingRow>> {
    cfg.validate()?;
    let spec = cfg.operator_spec();
    let tol = cfg.scaling.tolerance;
    let mut rep = Report::new("scaling", cfg);
    for &panels in &cfg.scaling.panels {
        let disc = cfg.discretization_with_panels(panels)?;
        let params = resolve_params(cfg, &spec, &disc, tol)?;
        let b = random_density(disc.len(), cfg.seed);
        let mut best: Option<ScalingRow> = None;
        for _ in 0..cfg.scaling.repeats {
            let t = Instant::now();
            let solver = FastSolver::new(&spec, &disc, cfg.solver.leaf_panels, &params, cfg.levels())?;
            let tc = t.elapsed().as_secs_f64();
            let t = Instant::now();
            solver.solve(&b)?;
            let ts = t.elapsed().as_secs_f64();
            let row = ScalingRow {
                panels,
                n: disc.len(),
                levels: solver.factor.levels.len() + 1,
                root_size: solver.factor.root_rows.len(),
                compress_seconds: tc,
                solve_seconds: ts,
                total_seconds: tc + ts,
                memory_bytes: solver.factor.memory_bytes(),
            };
            if best.as_ref().is_none_or(|b| row.total_seconds < b.total_seconds) {
                best = Some(row);
            }
        }
        rep.rows.extend(best);
    }
    let xs: Vec<f64> = rep.rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rep.rows.iter().map(|r| r.total_seconds.ln()).collect();
    rep.summary.push(("slope".into(), fit_slope(&xs, &ys).unwrap_or(f64::NAN)));
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct BvpRow {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub computed: f64,
    pub exact: f64,
    pub error: f64,
}

/// Interior Dirichlet problem with data from an exterior point source:
/// solve `(-1/2 I + D) s = u|_boundary` with the fast solver and compare
/// the double-layer potential at interior points with `u`.
/// Summary `max_error`.
pub fn cmd_bvp(cfg: &ExperimentConfig) -> Result<Report<BvpRow>> {
    let (spec, disc) = build(cfg)?;
    if spec.kind.layer != crate::kernels::Layer::Double {
        return Err(Error::Config("the Dirichlet test needs the double layer".into()));
    }
    let src = cfg.bvp.source;
    let u = |x: &[f64; 3]| green(disc.dim, x, &src);
    let b: Vec<f64> = disc.nodes.iter().map(u).collect::<Result<_>>()?;
    let params = resolve_params(cfg, &spec, &disc, cfg.bvp.tolerance)?;
    let solver = FastSolver::new(&spec, &disc, cfg.solver.leaf_panels, &params, cfg.levels())?;
    let sigma = solver.solve(&b)?;
    let got = evaluate_potential(&spec, &disc, &sigma, &cfg.bvp.targets)?;
    let mut rep = Report::new("bvp", cfg);
    let mut worst: f64 = 0.0;
    for (x, computed) in cfg.bvp.targets.iter().zip(got) {
        let exact = u(x)?;
        let error = (computed - exact).abs();
        worst = worst.max(error);
        rep.rows.push(BvpRow { x: x[0], y: x[1], z: x[2], computed, exact, error });
    }
    rep.summary.push(("max_error".into(), worst));
    Ok(rep)
}

/// Model prediction for a sweep point, for plotting next to measurements.
pub fn predicted_error(p: &SweepPoint, k: &ModelConstants) -> Result<f64> {
    model_error(p.q, p.alpha, k.r_pxy, p.eps_id, k)
}
