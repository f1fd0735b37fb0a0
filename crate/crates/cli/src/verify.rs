//! Invariant suites behind `vropt verify`.

use crate::config::{CliError, CliResult};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use vropt_core::cocoa::{cocoa_solve, duality_gap, CocoaConfig};
use vropt_core::dataio::{partition_examples, synth_classification, synth_ridge, synth_sparse_regression, PartitionMode, SparseDataset};
use vropt_core::federated::{fsvrg_solve, FsvrgConfig};
use vropt_core::linalg::ridge_solution;
use vropt_core::losses::{LossKind, Problem, RegKind};
use vropt_core::meanest::{
    analytic_mse, decode_average, encode, optimal_probabilities, rotate, synth_batch, BatchDist, EncoderSpec, Rotation,
    VectorBatch,
};
use vropt_core::ms2gd::{lazy_prox_l1, lazy_prox_l2, ms2gd_lazy_solve, ms2gd_solve, Ms2gdConfig};
use vropt_core::quadperturb::{
    block_sigma, dane_solve, dual_method_step, fsvrg_naive_solve, primal_from_dual, primal_method_init, primal_method_step,
    DaneConfig, DaneLocal, LocalSampling,
};
use vropt_core::rng::{derive_seed, DiscreteSampler, Rng, SubsetSampler};
use vropt_core::vr_serial::{s2cd_direction, s2cd_tables, s2gd_run, CatchUp, InnerLength, InnerPath, S2gdConfig, S2gdOptions};

pub const SUITES: [&str; 5] = ["equivalence", "lazy", "mse", "gap", "properties"];

pub type CheckResult = Result<String, String>;

/// A named check and its outcome (`Ok` carries a short detail line).
#[derive(Clone, Debug)]
pub struct Outcome {
    pub name: &'static str,
    pub result: CheckResult,
}

fn ensure(cond: bool, detail: String) -> CheckResult {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

fn lift<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---- equivalence ----

/// DANE (eta = 1, mu = 0) with one local S2GD epoch against naive FSVRG, bitwise.
pub fn dane_matches_naive_fsvrg(seed: u64) -> CheckResult {
    let (ds, lam) = lift(synth_ridge::<f64>(200, 10, 100.0, seed))?;
    let p = Problem::ridge(&ds, lam);
    let part = lift(partition_examples(&ds, 4, PartitionMode::Contiguous))?;
    let h = 0.1 / lift(p.constants().smooth())?.0;
    let cfg = DaneConfig::new(DaneLocal::S2gd { m: 50, h }, 5, seed);
    let (a, _) = lift(dane_solve(&p, &part, &cfg))?;
    let (b, _) = lift(fsvrg_naive_solve(&p, &part, 50, h, 5, seed))?;
    ensure(a == b, format!("K=4, 5 rounds, max |diff| = {:e}", max_abs_diff(&a, &b)))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn single_node_fsvrg_is_s2gd(seed: u64) -> CheckResult {
    let (ds, lam) = lift(synth_ridge::<f64>(100, 8, 50.0, seed))?;
    let p = Problem::ridge(&ds, lam);
    let part = lift(partition_examples(&ds, 1, PartitionMode::Contiguous))?;
    let h = 0.1 / lift(p.constants().smooth())?.0;
    let (a, _) = lift(fsvrg_naive_solve(&p, &part, 80, h, 4, seed))?;
    let cfg = S2gdConfig { m: 80, h, nu: 0.0, epochs: 4, seed };
    let (b, _) = lift(s2gd_run(&p, &cfg, &S2gdOptions { inner: InnerLength::Fixed(80), ..Default::default() }))?;
    ensure(a == b, format!("max |diff| = {:e}", max_abs_diff(&a, &b)))
}

fn unscaled_fsvrg_is_naive(seed: u64) -> CheckResult {
    let (ds, lam) = lift(synth_ridge::<f64>(64, 6, 50.0, seed))?;
    let p = Problem::ridge(&ds, lam);
    let part = lift(partition_examples(&ds, 4, PartitionMode::RoundRobin))?;
    let h = 0.1 / lift(p.constants().smooth())?.0;
    let mut cfg = FsvrgConfig::new(h * 16.0, 3, seed);
    cfg.local_scaling = false;
    cfg.aggregation_scaling = false;
    cfg.sampling = LocalSampling::WithReplacement(16);
    let (a, _) = lift(fsvrg_solve(&p, &part, &cfg))?;
    let (b, _) = lift(fsvrg_naive_solve(&p, &part, 16, h, 3, seed))?;
    ensure(a == b, format!("max |diff| = {:e}", max_abs_diff(&a, &b)))
}

/// Primal and dual block methods from the same dual start; returns the worst relative gap.
pub fn primal_dual_agreement(seed: u64, steps: usize) -> Result<f64, String> {
    let (ds, lam) = lift(synth_ridge::<f64>(60, 8, 200.0, seed))?;
    let p = Problem::ridge(&ds, lam);
    let part = lift(partition_examples(&ds, 4, PartitionMode::Contiguous))?;
    let sigma = block_sigma(&ds, &part);
    let mut rng = Rng::derive(seed, &[0x5044]);
    let mut alpha: Vec<f64> = (0..ds.n()).map(|_| rng.normal()).collect();
    let mut pair = lift(primal_method_init(&p, &part, sigma, &alpha))?;
    let mut worst = 0.0f64;
    for _ in 0..steps {
        lift(primal_method_step(&p, &part, &mut pair))?;
        lift(dual_method_step(&p, &part, &mut alpha, sigma))?;
        worst = worst.max(rel_err(&pair.w, &lift(primal_from_dual(&p, &alpha))?));
    }
    Ok(worst)
}

fn primal_dual(seed: u64) -> CheckResult {
    let worst = primal_dual_agreement(seed, 20)?;
    ensure(worst <= 1e-10, format!("20 steps, worst relative difference {worst:e}"))
}

fn distributed_threads_agree(seed: u64) -> CheckResult {
    let ds = lift(synth_classification::<f64>(120, 30, 0.3, seed))?;
    let p = lift(Problem::new(&ds, LossKind::Hinge, RegKind::L2(1e-2), false))?;
    let part = lift(partition_examples(&ds, 4, PartitionMode::Contiguous))?;
    let mut cfg = CocoaConfig::adding(4, 30, 5, seed);
    let a = lift(cocoa_solve(&p, &part, &cfg))?;
    cfg.threads = 4;
    let b = lift(cocoa_solve(&p, &part, &cfg))?;
    ensure(a.w == b.w, "CoCoA+ with 1 and 4 threads".into())
}

// ---- lazy ----

/// Dense and lazy runs of S2GD and mS2GD on a 95%-sparse problem (and a dense one).
/// Returns (name, bitwise equal under replay, relative error of the closed form).
pub fn lazy_equivalences(seed: u64, epochs: usize) -> Result<Vec<(String, bool, f64)>, String> {
    let sparse = lift(synth_sparse_regression::<f64>(400, 200, 0.05, seed))?;
    let (dense, dense_lam) = lift(synth_ridge::<f64>(150, 12, 100.0, seed))?;
    let mut out = Vec::new();
    for (label, ds, lam) in [("sparse", &sparse, 1e-3), ("dense", &dense, dense_lam)] {
        let p = Problem::ridge(ds, lam);
        let l = lift(p.constants().smooth())?.0;
        let cfg = S2gdConfig { m: 2 * ds.n(), h: 0.1 / l, nu: lam, epochs, seed };
        let run = |path| lift(s2gd_run(&p, &cfg, &S2gdOptions { path, ..Default::default() })).map(|r| r.0);
        let eager = run(InnerPath::Eager)?;
        let replay = run(InnerPath::Lazy(CatchUp::Replay))?;
        let closed = run(InnerPath::Lazy(CatchUp::Closed))?;
        out.push((format!("s2gd/{label}"), eager == replay, rel_err(&closed, &eager)));
        for (reg_name, reg) in [("l1", RegKind::L1(1e-3)), ("l2", RegKind::L2(lam.max(1e-3)))] {
            let p = lift(Problem::new(ds, LossKind::Quadratic, reg, false))?;
            let l = lift(p.constants().smooth())?.0;
            let cfg = Ms2gdConfig::new(4, ds.n() / 2, 0.2 / l, epochs, seed);
            let eager = lift(ms2gd_solve(&p, &cfg))?.0;
            let replay = lift(ms2gd_lazy_solve(&p, &cfg, CatchUp::Replay))?.0;
            let closed = lift(ms2gd_lazy_solve(&p, &cfg, CatchUp::Closed))?.0;
            out.push((format!("ms2gd-{reg_name}/{label}"), eager == replay, rel_err(&closed, &eager)));
        }
    }
    Ok(out)
}

fn lazy_bitwise(seed: u64) -> CheckResult {
    let res = lazy_equivalences(seed, 3)?;
    let bad: Vec<&str> = res.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
    ensure(bad.is_empty(), format!("{} runs; mismatched: {bad:?}", res.len()))
}

fn lazy_closed(seed: u64) -> CheckResult {
    let res = lazy_equivalences(seed, 3)?;
    let worst = res.iter().map(|r| r.2).fold(0.0, f64::max);
    ensure(worst <= 1e-12, format!("worst relative error {worst:e}"))
}

/// Maximum error of both lazy proximal closed forms over the 10x10x3x3x8 grid.
pub fn lazy_prox_grid() -> (usize, f64) {
    let ys: Vec<f64> = (0..10).map(|i| -4.5 + i as f64).collect();
    let gs = [-2.0, -1.0, -0.5, -0.1, 0.0, 0.1, 0.5, 1.0, 2.0, 3.0];
    let lams = [0.1, 0.5, 1.0];
    let hs = [0.01, 0.1, 1.0];
    let taus = [0usize, 1, 2, 3, 5, 8, 13, 21];
    let soft = |z: f64, t: f64| z.signum() * (z.abs() - t).max(0.0);
    let (mut cases, mut worst) = (0usize, 0.0f64);
    for &y in &ys {
        for &g in &gs {
            for &lam in &lams {
                for &h in &hs {
                    for &tau in &taus {
                        let (mut a, mut b) = (y, y);
                        for _ in 0..tau {
                            a = soft(a - h * g, lam * h);
                            b = (b - h * g) / (1.0 + lam * h);
                        }
                        let e1 = (lazy_prox_l1(y, g, lam, h, tau) - a).abs() / (1.0 + a.abs());
                        let e2 = (lazy_prox_l2(y, g, lam, h, tau) - b).abs() / (1.0 + b.abs());
                        worst = worst.max(e1).max(e2);
                        cases += 1;
                    }
                }
            }
        }
    }
    (cases, worst)
}

fn lazy_prox(_: u64) -> CheckResult {
    let (cases, worst) = lazy_prox_grid();
    ensure(worst <= 1e-12, format!("{cases} grid points, worst error {worst:e}"))
}

// ---- mse ----

/// Monte Carlo statistics of one encoder.
#[derive(Clone, Debug)]
pub struct EncoderStats {
    pub name: String,
    /// Standardized chi-square statistic of the coordinate means against the truth.
    pub bias_z: f64,
    /// Coordinates whose estimate never varied yet missed the truth.
    pub stuck: usize,
    pub analytic: f64,
    pub empirical: f64,
    pub stderr: f64,
}

impl EncoderStats {
    pub fn unbiased(&self) -> bool {
        self.stuck == 0 && self.bias_z <= 4.0
    }

    pub fn mse_agrees(&self) -> bool {
        (self.empirical - self.analytic).abs() <= 3.0 * self.stderr + 1e-12 * self.analytic
    }
}

fn monte_carlo(
    name: &str,
    truth: &[f64],
    analytic: f64,
    samples: usize,
    mut estimate: impl FnMut(u64) -> Result<Vec<f64>, String>,
) -> Result<EncoderStats, String> {
    let d = truth.len();
    let (mut sum, mut sq) = (vec![0.0; d], vec![0.0; d]);
    let mut errs = Vec::with_capacity(samples);
    for s in 0..samples {
        let est = estimate(s as u64)?;
        let mut e = 0.0;
        for j in 0..d {
            sum[j] += est[j];
            sq[j] += est[j] * est[j];
            e += (est[j] - truth[j]).powi(2);
        }
        errs.push(e);
    }
    let sf = samples as f64;
    let (mut chi, mut dof, mut stuck) = (0.0, 0usize, 0usize);
    for j in 0..d {
        let m = sum[j] / sf;
        let var = (sq[j] / sf - m * m).max(0.0) * sf / (sf - 1.0);
        if var <= 1e-24 * (1.0 + truth[j] * truth[j]) {
            if (m - truth[j]).abs() > 1e-9 * (1.0 + truth[j].abs()) {
                stuck += 1;
            }
            continue;
        }
        chi += (m - truth[j]).powi(2) / (var / sf);
        dof += 1;
    }
    let bias_z = if dof == 0 { 0.0 } else { (chi - dof as f64) / (2.0 * dof as f64).sqrt() };
    let mean = errs.iter().sum::<f64>() / sf;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (sf - 1.0);
    Ok(EncoderStats { name: name.into(), bias_z, stuck, analytic, empirical: mean, stderr: (var / sf).sqrt() })
}

/// Every encoder (and the rotated quantizer) on a Gaussian `n x d` batch.
pub fn encoder_statistics(n: usize, d: usize, samples: usize, seed: u64) -> Result<Vec<EncoderStats>, String> {
    let batch: VectorBatch<f64> = synth_batch(BatchDist::Gauss, n, d, seed);
    let truth = batch.mean();
    let centers = batch.row_means();
    let budget = (n * d) as f64 / 4.0;
    let specs = vec![
        ("uniform", EncoderSpec::uniform(&batch, 0.25)),
        ("optimal_p", EncoderSpec::Variable { p: lift(optimal_probabilities(&batch, &centers, budget))?, centers: centers.clone() }),
        ("fixed_support", EncoderSpec::FixedSupport { k: (d / 4).max(1), centers }),
        ("binary", EncoderSpec::BinaryQuant),
        ("bits2", EncoderSpec::BitQuant { bits: 2 }),
        ("ternary", EncoderSpec::ternary_from_range(&batch, 0.5)),
    ];
    let mut out = Vec::new();
    for (name, spec) in &specs {
        let an = lift(analytic_mse(&batch, spec))?;
        out.push(monte_carlo(name, &truth, an, samples, |s| {
            lift(encode(&batch, spec, derive_seed(seed, &[s]))).map(|e| decode_average(&e))
        })?);
    }
    let (rotated, _) = rotate(&batch, seed);
    let an = lift(analytic_mse(&rotated, &EncoderSpec::BinaryQuant))?;
    let stats = monte_carlo("binary_rotated", &truth, an, samples, |s| {
        let mut enc = lift(encode(&rotated, &EncoderSpec::BinaryQuant, derive_seed(seed, &[s])))?;
        enc.rotation = Some(Rotation::new(d, seed));
        Ok(decode_average(&enc))
    })?;
    if d.is_power_of_two() {
        out.push(stats);
    }
    Ok(out)
}

fn mse_suite(seed: u64, samples: usize) -> Vec<Outcome> {
    let stats = match encoder_statistics(16, 512, samples, seed) {
        Ok(s) => s,
        Err(e) => return vec![Outcome { name: "encoder_statistics", result: Err(e) }],
    };
    let unbiased: Vec<String> = stats.iter().filter(|s| !s.unbiased()).map(|s| format!("{} (z = {:.2})", s.name, s.bias_z)).collect();
    let mse: Vec<String> = stats
        .iter()
        .filter(|s| !s.mse_agrees())
        .map(|s| format!("{}: {:e} vs {:e} (se {:e})", s.name, s.empirical, s.analytic, s.stderr))
        .collect();
    let batch: VectorBatch<f64> = synth_batch(BatchDist::Gauss, 16, 512, seed);
    let bin = analytic_mse(&batch, &EncoderSpec::BinaryQuant).unwrap_or(f64::INFINITY);
    let bound = 512.0 / 32.0 * batch.avg_sq_norm();
    vec![
        Outcome { name: "encoders_unbiased", result: ensure(unbiased.is_empty(), format!("{} encoders, failing: {unbiased:?}", stats.len())) },
        Outcome { name: "analytic_mse_matches_monte_carlo", result: ensure(mse.is_empty(), format!("{} encoders, failing: {mse:?}", stats.len())) },
        Outcome { name: "binary_quantization_bound", result: ensure(bin <= bound, format!("{bin:e} <= {bound:e}")) },
    ]
}

// ---- gap ----

fn dual_point(loss: LossKind, y: f64, rng: &mut Rng) -> f64 {
    match loss {
        LossKind::Quadratic => 3.0 * rng.normal(),
        LossKind::Logistic => y * (1e-3 + (1.0 - 2e-3) * rng.uniform()),
        LossKind::Hinge => y * rng.uniform(),
        LossKind::SquaredHinge => y * 3.0 * rng.uniform(),
    }
}

fn weak_duality(seed: u64) -> CheckResult {
    let ds = lift(synth_classification::<f64>(40, 12, 0.4, seed))?;
    let mut rng = Rng::derive(seed, &[0x5744]);
    let mut worst = f64::INFINITY;
    for loss in [LossKind::Quadratic, LossKind::Logistic, LossKind::Hinge, LossKind::SquaredHinge] {
        let p = lift(Problem::new(&ds, loss, RegKind::L2(0.05), false))?;
        for _ in 0..200 {
            let alpha: Vec<f64> = (0..ds.n()).map(|i| dual_point(loss, ds.labels[i], &mut rng)).collect();
            worst = worst.min(lift(duality_gap(&p, &alpha))?);
        }
    }
    ensure(worst >= -1e-12, format!("800 random dual points, smallest gap {worst:e}"))
}

fn strong_duality_ridge(seed: u64) -> CheckResult {
    let (ds, lam) = lift(synth_ridge::<f64>(50, 6, 30.0, seed))?;
    let p = lift(Problem::new(&ds, LossKind::Quadratic, RegKind::L2(lam), false))?;
    let w = lift(ridge_solution(&ds, lam))?;
    let alpha: Vec<f64> = (0..ds.n()).map(|i| ds.labels[i] - ds.dot(i, &w)).collect();
    let gap = lift(duality_gap(&p, &alpha))?;
    ensure(gap.abs() <= 1e-10, format!("gap at the ridge optimum {gap:e}"))
}

fn cocoa_gap_certificate(seed: u64) -> CheckResult {
    let ds = lift(synth_classification::<f64>(200, 40, 0.3, seed))?;
    let p = lift(Problem::new(&ds, LossKind::Hinge, RegKind::L2(1e-2), false))?;
    let part = lift(partition_examples(&ds, 4, PartitionMode::ByLabelCluster { seed }))?;
    let out = lift(cocoa_solve(&p, &part, &CocoaConfig::adding(4, 50, 40, seed)))?;
    let gaps: Vec<f64> = out.trace.records.iter().filter_map(|r| r.gap).collect();
    let (first, last) = (gaps[0], *gaps.last().unwrap_or(&f64::NAN));
    ensure(gaps.iter().all(|&g| g >= -1e-12) && last < 0.05 * first, format!("gap {first:e} -> {last:e}"))
}

fn fenchel_young(_: u64) -> CheckResult {
    let mut worst_eq = 0.0f64;
    let mut worst_ineq = f64::INFINITY;
    for loss in [LossKind::Quadratic, LossKind::Logistic, LossKind::SquaredHinge, LossKind::Hinge] {
        for y in [-1.0, 1.0, 0.5] {
            if loss.needs_binary_labels() && y == 0.5 {
                continue;
            }
            for ai in 0..33 {
                let a = -4.0 + 0.25 * ai as f64;
                if loss.is_smooth() {
                    let b = loss.deriv(a, y);
                    let gap = loss.value(a, y) + loss.conjugate(b, y) - a * b;
                    worst_eq = worst_eq.max(gap.abs() / (1.0 + (a * b).abs()));
                }
                for bi in 0..41 {
                    let b = -2.0 + 0.1 * bi as f64;
                    let c = loss.conjugate(b, y);
                    if c.is_finite() {
                        worst_ineq = worst_ineq.min(loss.value(a, y) + c - a * b);
                    }
                }
            }
        }
    }
    ensure(worst_eq <= 1e-12 && worst_ineq >= -1e-12, format!("equality error {worst_eq:e}, smallest slack {worst_ineq:e}"))
}

// ---- properties ----

fn component_grad(p: &Problem<'_, f64>, i: usize, w: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = w.iter().map(|&x| p.component_l2() * x).collect();
    p.ds.axpy(i, p.deriv(i, p.ds.dot(i, w)), &mut g);
    g
}

fn small_problem_data(seed: u64) -> Result<SparseDataset<f64>, String> {
    lift(synth_classification::<f64>(6, 4, 0.7, seed))
}

fn vr_direction_unbiased(seed: u64) -> CheckResult {
    let ds = small_problem_data(seed)?;
    let p = lift(Problem::new(&ds, LossKind::Logistic, RegKind::L2(0.1), true))?;
    let mut rng = Rng::derive(seed, &[0x5652]);
    let (w, y): (Vec<f64>, Vec<f64>) = (0..4).map(|_| (rng.normal(), rng.normal())).unzip();
    let g = p.smooth_gradient(&w);
    let target = p.smooth_gradient(&y);
    let n = ds.n();
    let mut worst = 0.0f64;
    // Single-sample direction, averaged over i.
    let mut avg = vec![0.0; 4];
    for i in 0..n {
        let (gy, gw) = (component_grad(&p, i, &y), component_grad(&p, i, &w));
        for j in 0..4 {
            avg[j] += (g[j] + gy[j] - gw[j]) / n as f64;
        }
    }
    worst = worst.max(max_abs_diff(&avg, &target));
    // Mini-batch direction, averaged over all subsets of size b.
    for b in 2..=3 {
        let subsets = combinations(n, b);
        let mut avg = vec![0.0; 4];
        for set in &subsets {
            for &i in set {
                let (gy, gw) = (component_grad(&p, i, &y), component_grad(&p, i, &w));
                for j in 0..4 {
                    avg[j] += (gy[j] - gw[j]) / (b * subsets.len()) as f64;
                }
            }
        }
        avg.iter_mut().zip(&g).for_each(|(a, gj)| *a += gj);
        worst = worst.max(max_abs_diff(&avg, &target));
    }
    // Coordinate direction under (p_j, q_ij).
    let p = Problem::ridge(&ds, 0.1);
    let t = lift(s2cd_tables(&p))?;
    let mut derivs = Vec::new();
    let g = p.smooth_gradient_with(&w, &mut derivs);
    let target = p.smooth_gradient(&y);
    for j in 0..4 {
        let mut e = 0.0;
        for i in 0..n {
            let pr = t.p[j] * t.q(i, j);
            if pr > 0.0 {
                e += pr * s2cd_direction(&p, &t, &y, &w, &g, &derivs, i, j);
            }
        }
        worst = worst.max((e - target[j]).abs());
    }
    ensure(worst <= 1e-12, format!("worst deviation {worst:e}"))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut with_last = combinations(n - 1, k - 1);
    with_last.iter_mut().for_each(|c| c.push(n - 1));
    let mut out = combinations(n - 1, k);
    out.extend(with_last);
    out
}

/// Upper-tail p-value of Pearson's statistic.
pub fn chi_square_p(counts: &[usize], probs: &[f64]) -> f64 {
    let total: usize = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| (c as f64 - p * total as f64).powi(2) / (p * total as f64))
        .sum();
    ChiSquared::new((counts.len() - 1) as f64).map_or(0.0, |d| 1.0 - d.cdf(stat))
}

fn samplers_chi_square(seed: u64) -> CheckResult {
    let mut rng = Rng::derive(seed, &[0x4348]);
    let mut counts = vec![0usize; 7];
    for _ in 0..70_000 {
        counts[rng.below(7)] += 1;
    }
    let p_uniform = chi_square_p(&counts, &[1.0 / 7.0; 7]);
    let geo = DiscreteSampler::geometric(12, 0.15);
    let probs: Vec<f64> = (1..=12).map(|t| geo.prob(t)).collect();
    let mut counts = vec![0usize; 12];
    for _ in 0..120_000 {
        counts[geo.sample(&mut rng) - 1] += 1;
    }
    let p_geo = chi_square_p(&counts, &probs);
    let mut sub = SubsetSampler::new(8);
    let mut counts = vec![0usize; 8];
    for _ in 0..40_000 {
        for &j in sub.draw(&mut rng, 3) {
            counts[j] += 1;
        }
    }
    let p_sub = chi_square_p(&counts, &[1.0 / 8.0; 8]);
    let min = p_uniform.min(p_geo).min(p_sub);
    ensure(min > 1e-4, format!("p-values: index {p_uniform:.3}, geometric {p_geo:.3}, subset {p_sub:.3}"))
}

/// Runs one suite (or `all`).
pub fn run_suite(suite: &str, seed: u64, mc_samples: usize) -> CliResult<Vec<Outcome>> {
    type Check = (&'static str, fn(u64) -> CheckResult);
    let list = |checks: &[Check]| -> Vec<Outcome> {
        checks.iter().map(|&(name, f)| Outcome { name, result: f(seed) }).collect()
    };
    Ok(match suite {
        "equivalence" => list(&[
            ("dane_s2gd_equals_naive_fsvrg", dane_matches_naive_fsvrg),
            ("single_node_fsvrg_equals_s2gd", single_node_fsvrg_is_s2gd),
            ("unscaled_fsvrg_equals_naive", unscaled_fsvrg_is_naive),
            ("primal_dual_methods_agree", primal_dual),
            ("thread_count_invariance", distributed_threads_agree),
        ]),
        "lazy" => list(&[
            ("lazy_replay_bitwise_eager", lazy_bitwise),
            ("lazy_closed_form_1e-12", lazy_closed),
            ("lazy_prox_grid", lazy_prox),
        ]),
        "mse" => mse_suite(seed, mc_samples),
        "gap" => list(&[
            ("weak_duality", weak_duality),
            ("strong_duality_ridge", strong_duality_ridge),
            ("cocoa_gap_certificate", cocoa_gap_certificate),
            ("fenchel_young", fenchel_young),
        ]),
        "properties" => list(&[
            ("unbiased_directions", vr_direction_unbiased),
            ("sampler_chi_square", samplers_chi_square),
            ("fenchel_young", fenchel_young),
        ]),
        "all" => {
            let mut out = Vec::new();
            for s in SUITES {
                out.extend(run_suite(s, seed, mc_samples)?);
            }
            out
        }
        other => return Err(CliError::Config(format!("unknown suite {other:?}; expected one of {}|all", SUITES.join("|")))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_7200_points() {
        assert_eq!(lazy_prox_grid().0, 7200);
    }

    #[test]
    fn combinations_count() {
        assert_eq!(combinations(6, 3).len(), 20);
        assert_eq!(combinations(4, 0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn unknown_suite_is_config_error() {
        assert_eq!(run_suite("nope", 0, 10).unwrap_err().exit_code(), 2);
    }
}
