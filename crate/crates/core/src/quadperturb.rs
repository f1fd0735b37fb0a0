//! Quadratic-perturbation distributed methods: DANE, naive federated SVRG,
//! and the primal/dual block methods for ridge regression.

use crate::dataio::{Partition, SparseDataset};
use crate::error::{invalid, unsupported, Error, Result};
use crate::linalg::{columns, generalized_max_eigenvalue, solve_spd};
use crate::losses::{LossKind, Problem, RegKind};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::trace::{SolverTrace, Tracer};
use crate::vr_serial::VrKernel;
use nalgebra::{DMatrix, DVector};

/// How a node walks its examples during a local variance-reduced pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocalSampling {
    /// `steps` uniform draws with replacement.
    WithReplacement(usize),
    /// One random permutation of the node's examples.
    Permutation,
}

/// Local pass `y <- y - h (g + S[grad f_i(y) - grad f_i(w)])` over the node's examples,
/// starting from the anchor `w`. Returns the final iterate and the number of steps.
#[allow(clippy::too_many_arguments)]
pub(crate) fn node_vr_pass<T: Scalar>(
    prob: &Problem<'_, T>,
    rows: &[usize],
    anchor: &[T],
    anchor_derivs: &[T],
    g: &[T],
    h: T,
    rho: T,
    scale: Option<&[T]>,
    sampling: LocalSampling,
    rng: &mut Rng,
) -> (Vec<T>, usize) {
    let kernel = VrKernel { prob, anchor, anchor_derivs, g, h, rho, scale };
    let mut y = anchor.to_vec();
    let nk = rows.len();
    if nk == 0 {
        return (y, 0);
    }
    match sampling {
        LocalSampling::WithReplacement(steps) => {
            for _ in 0..steps {
                let i = rows[rng.below(nk)];
                kernel.eager_step(&mut y, i);
            }
            (y, steps)
        }
        LocalSampling::Permutation => {
            let mut order = rows.to_vec();
            rng.shuffle(&mut order);
            for &i in &order {
                kernel.eager_step(&mut y, i);
            }
            (y, nk)
        }
    }
}

/// Local solver used inside DANE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DaneLocal<T> {
    /// Exact minimization (quadratic loss only).
    Exact,
    /// One S2GD epoch of `m` steps with step `h`, sampling with replacement.
    S2gd { m: usize, h: T },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DaneConfig<T> {
    pub eta: T,
    pub mu: T,
    pub local: DaneLocal<T>,
    pub rounds: usize,
    pub seed: u64,
    pub bits_per_value: u32,
}

impl<T: Scalar> DaneConfig<T> {
    pub fn new(local: DaneLocal<T>, rounds: usize, seed: u64) -> Self {
        Self { eta: T::one(), mu: T::zero(), local, rounds, seed, bits_per_value: 32 }
    }
}

fn folded<'a, T: Scalar>(prob: &Problem<'a, T>) -> Result<Problem<'a, T>> {
    prob.constants().smooth()?;
    match prob.reg {
        RegKind::None | RegKind::L2(_) => prob.with_folded(true),
        _ => unsupported("quadratic-perturbation methods need a smooth (L2) regularizer"),
    }
}

fn check_part<T: Scalar>(prob: &Problem<'_, T>, part: &Partition) -> Result<()> {
    if part.assignment.len() != prob.n() {
        return invalid("partition does not match the dataset");
    }
    if part.nodes.iter().any(|nd| nd.is_empty()) {
        return invalid("every node needs at least one example");
    }
    Ok(())
}

/// Hessian `(1/n_k) X_k X_k^T + lambda I` of a node's quadratic objective.
fn local_hessian<T: Scalar>(prob: &Problem<'_, T>, rows: &[usize], scale: f64) -> DMatrix<f64> {
    let xk = columns(prob.ds, rows);
    let d = prob.d();
    &xk * xk.transpose() * scale + DMatrix::identity(d, d) * prob.component_l2().f64()
}

/// One DANE round from `w`: every node minimizes
/// `F_k(v) - (grad F_k(w) - eta grad P(w))^T v + mu/2 ||v - w||^2`; the results are averaged.
pub fn dane_round<T: Scalar>(
    prob: &Problem<'_, T>,
    part: &Partition,
    w: &[T],
    cfg: &DaneConfig<T>,
    round: usize,
) -> Result<Vec<T>> {
    let prob = folded(prob)?;
    check_part(&prob, part)?;
    if cfg.mu < T::zero() {
        return invalid("mu must be nonnegative");
    }
    let mut derivs = Vec::new();
    let grad = prob.smooth_gradient_with(w, &mut derivs);
    let d = prob.d();
    let inv = T::one() / T::of_usize(part.nodes.len());
    let mut sum = vec![T::zero(); d];
    for (node, rows) in part.nodes.iter().enumerate() {
        let wk = match cfg.local {
            DaneLocal::Exact => {
                if prob.loss != LossKind::Quadratic {
                    return unsupported("exact DANE steps need the quadratic loss");
                }
                let a = local_hessian(&prob, rows, 1.0 / rows.len() as f64)
                    + DMatrix::identity(d, d) * cfg.mu.f64();
                let rhs = DVector::from_iterator(d, grad.iter().map(|g| (cfg.eta * *g).f64()));
                let step = solve_spd(a, &rhs).map_err(|_| {
                    Error::Singular("local DANE system is singular; use mu > 0".into())
                })?;
                w.iter().zip(step.iter()).map(|(&x, &s)| x - T::of(s)).collect::<Vec<_>>()
            }
            DaneLocal::S2gd { m, h } => {
                let g = grad.iter().map(|&v| cfg.eta * v).collect::<Vec<_>>();
                let rho = if cfg.mu != T::zero() { prob.component_l2() + cfg.mu } else { prob.component_l2() };
                let mut rng = Rng::derive(cfg.seed, &[round as u64, node as u64]);
                node_vr_pass(&prob, rows, w, &derivs, &g, h, rho, None, LocalSampling::WithReplacement(m), &mut rng).0
            }
        };
        for (s, v) in sum.iter_mut().zip(wk) {
            *s = *s + v * inv;
        }
    }
    Ok(sum)
}

fn distributed_loop<T: Scalar>(
    prob: &Problem<'_, T>,
    name: &str,
    seed: u64,
    rounds: usize,
    bits_round: f64,
    work_round: f64,
    mut step: impl FnMut(&[T], usize) -> Result<Vec<T>>,
) -> Result<(Vec<T>, SolverTrace)> {
    let mut w = vec![T::zero(); prob.d()];
    let mut tracer = Tracer::new(name, seed, prob.objective(&w).f64());
    for t in 0..rounds {
        w = step(&w, t)?;
        let obj = prob.objective(&w).f64();
        let ok = tracer.record(t + 1, work_round * (t + 1) as f64, obj, None, prob.grad_norm(&w).f64(), bits_round * (t + 1) as f64);
        if !ok {
            break;
        }
    }
    Ok((w, tracer.finish()))
}

pub fn dane_solve<T: Scalar>(prob: &Problem<'_, T>, part: &Partition, cfg: &DaneConfig<T>) -> Result<(Vec<T>, SolverTrace)> {
    let n = prob.n() as f64;
    let k = part.nodes.len();
    let work = match cfg.local {
        DaneLocal::Exact => 2.0,
        DaneLocal::S2gd { m, .. } => 1.0 + 2.0 * (k * m) as f64 / n,
    };
    let bits = (k * prob.d()) as f64 * cfg.bits_per_value as f64;
    distributed_loop(prob, "dane", cfg.seed, cfg.rounds, bits, work, |w, t| dane_round(prob, part, w, cfg, t))
}

/// One naive FSVRG round: `m` local steps `v <- v - h (grad f_i(v) - grad f_i(w) + grad P(w))`
/// per node from `w`, then `w + (1/K) sum_k (w_k - w)`, evaluated as `sum_k w_k / K`.
pub fn fsvrg_naive_round<T: Scalar>(
    prob: &Problem<'_, T>,
    part: &Partition,
    w: &[T],
    m: usize,
    h: T,
    seed: u64,
    round: usize,
) -> Result<Vec<T>> {
    let prob = folded(prob)?;
    check_part(&prob, part)?;
    let mut derivs = Vec::new();
    let grad = prob.smooth_gradient_with(w, &mut derivs);
    let inv = T::one() / T::of_usize(part.nodes.len());
    let mut sum = vec![T::zero(); prob.d()];
    for (node, rows) in part.nodes.iter().enumerate() {
        let mut rng = Rng::derive(seed, &[round as u64, node as u64]);
        let sampling = LocalSampling::WithReplacement(m);
        let (wk, _) = node_vr_pass(&prob, rows, w, &derivs, &grad, h, prob.component_l2(), None, sampling, &mut rng);
        for (s, v) in sum.iter_mut().zip(wk) {
            *s = *s + v * inv;
        }
    }
    Ok(sum)
}

pub fn fsvrg_naive_solve<T: Scalar>(
    prob: &Problem<'_, T>,
    part: &Partition,
    m: usize,
    h: T,
    rounds: usize,
    seed: u64,
) -> Result<(Vec<T>, SolverTrace)> {
    if !(h > T::zero()) {
        return invalid("step size must be positive");
    }
    let k = part.nodes.len();
    let work = 1.0 + 2.0 * (k * m) as f64 / prob.n() as f64;
    let bits = (k * prob.d()) as f64 * 32.0;
    distributed_loop(prob, "fsvrg_naive", seed, rounds, bits, work, |w, t| {
        fsvrg_naive_round(prob, part, w, m, h, seed, t)
    })
}

fn ridge_parts(prob: &Problem<'_, f64>, part: &Partition) -> Result<f64> {
    if prob.loss != LossKind::Quadratic {
        return unsupported("the primal/dual block methods are implemented for ridge regression");
    }
    let lambda = match prob.reg {
        RegKind::L2(l) if l > 0.0 => l,
        _ => return unsupported("the primal/dual block methods need an L2 regularizer with positive weight"),
    };
    if prob.anchor.is_some() {
        return unsupported("anchored problems are not supported here");
    }
    check_part(prob, part)?;
    if !part.is_balanced() {
        return invalid("the primal/dual block methods assume equal node sizes");
    }
    Ok(lambda)
}

/// Smallest `sigma` with `X^T X <= sigma B`, `B = Diag(X_k^T X_k)`; lies in `[1, K]`.
pub fn block_sigma<T: Scalar>(ds: &SparseDataset<T>, part: &Partition) -> f64 {
    let x = columns(ds, &(0..ds.n()).collect::<Vec<_>>());
    let gram = x.transpose() * &x;
    let mut b = DMatrix::zeros(ds.n(), ds.n());
    for node in &part.nodes {
        for &a in node {
            for &c in node {
                b[(a, c)] = gram[(a, c)];
            }
        }
    }
    generalized_max_eigenvalue(&gram, &b, &part.nodes).0
}

/// State of the primal block method.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalDualPair {
    pub w: Vec<f64>,
    /// Per-node correction vectors; they sum to zero.
    pub g: Vec<Vec<f64>>,
    pub sigma: f64,
    pub eta: f64,
    pub mu: f64,
}

/// `w = X a / (lambda n)`.
pub fn primal_from_dual(prob: &Problem<'_, f64>, alpha: &[f64]) -> Result<Vec<f64>> {
    let lambda = prob.reg.l2_weight();
    if !(lambda > 0.0) {
        return invalid("need lambda > 0");
    }
    let mut w = vec![0.0; prob.d()];
    let s = 1.0 / (lambda * prob.n() as f64);
    for (i, &a) in alpha.iter().enumerate() {
        prob.ds.axpy(i, a * s, &mut w);
    }
    Ok(w)
}

/// Initial state for dual variables `alpha0`: `eta = K/sigma`, `mu = lambda (eta - 1)`,
/// `w = X a / (lambda n)`, `g_k = eta (K/n X_k a_k - lambda w)`.
pub fn primal_method_init(prob: &Problem<'_, f64>, part: &Partition, sigma: f64, alpha0: &[f64]) -> Result<PrimalDualPair> {
    let lambda = ridge_parts(prob, part)?;
    let k = part.nodes.len() as f64;
    if !(sigma >= 1.0 - 1e-12 && sigma <= k + 1e-12) {
        return invalid("sigma must lie in [1, K]");
    }
    if alpha0.len() != prob.n() {
        return invalid("alpha has the wrong length");
    }
    let eta = k / sigma;
    let mu = lambda * (eta - 1.0);
    let w = primal_from_dual(prob, alpha0)?;
    let n = prob.n() as f64;
    let g = part
        .nodes
        .iter()
        .map(|rows| {
            let mut xa = vec![0.0; prob.d()];
            for &i in rows {
                prob.ds.axpy(i, alpha0[i], &mut xa);
            }
            xa.iter().zip(&w).map(|(&v, &wj)| eta * (k / n * v - lambda * wj)).collect()
        })
        .collect();
    Ok(PrimalDualPair { w, g, sigma, eta, mu })
}

/// Gradient of `F_k(w) = K/(2n) ||X_k^T w - y_k||^2 + lambda/2 ||w||^2`.
fn node_gradient(prob: &Problem<'_, f64>, rows: &[usize], w: &[f64], k: f64, lambda: f64) -> Vec<f64> {
    let n = prob.n() as f64;
    let mut g = w.iter().map(|&x| lambda * x).collect::<Vec<_>>();
    for &i in rows {
        let r = prob.ds.dot(i, w) - prob.ds.labels[i];
        prob.ds.axpy(i, k / n * r, &mut g);
    }
    g
}

/// `w_k = w - (A_k + mu I)^{-1} (eta grad F_k(w) + g_k)`, `w+ = mean w_k`,
/// `g_k += lambda eta (w_k - w+)`.
pub fn primal_method_step(prob: &Problem<'_, f64>, part: &Partition, pair: &mut PrimalDualPair) -> Result<()> {
    let lambda = ridge_parts(prob, part)?;
    let k = part.nodes.len() as f64;
    let d = prob.d();
    let n = prob.n() as f64;
    let mut locals = Vec::with_capacity(part.nodes.len());
    for (node, rows) in part.nodes.iter().enumerate() {
        let xk = columns(prob.ds, rows);
        let a = &xk * xk.transpose() * (k / n) + DMatrix::identity(d, d) * (lambda + pair.mu);
        let grad = node_gradient(prob, rows, &pair.w, k, lambda);
        let rhs = DVector::from_iterator(d, grad.iter().zip(&pair.g[node]).map(|(&gf, &gk)| pair.eta * gf + gk));
        let step = solve_spd(a, &rhs)?;
        locals.push(pair.w.iter().zip(step.iter()).map(|(&x, &s)| x - s).collect::<Vec<_>>());
    }
    let mut next = vec![0.0; d];
    for wk in &locals {
        for (s, &v) in next.iter_mut().zip(wk) {
            *s += v / k;
        }
    }
    for (gk, wk) in pair.g.iter_mut().zip(&locals) {
        for j in 0..d {
            gk[j] += lambda * pair.eta * (wk[j] - next[j]);
        }
    }
    pair.w = next;
    Ok(())
}

/// Dual block step: `(sigma/(lambda n) X_k^T X_k + I) u = y_k - X_k^T w - a_k` per node, `a += u`.
pub fn dual_method_step(prob: &Problem<'_, f64>, part: &Partition, alpha: &mut [f64], sigma: f64) -> Result<()> {
    let lambda = ridge_parts(prob, part)?;
    let n = prob.n() as f64;
    let w = primal_from_dual(prob, alpha)?;
    let mut updates = Vec::with_capacity(part.nodes.len());
    for rows in &part.nodes {
        let xk = columns(prob.ds, rows);
        let nk = rows.len();
        let a = xk.transpose() * &xk * (sigma / (lambda * n)) + DMatrix::identity(nk, nk);
        let rhs = DVector::from_iterator(nk, rows.iter().map(|&i| prob.ds.labels[i] - prob.ds.dot(i, &w) - alpha[i]));
        updates.push(solve_spd(a, &rhs)?);
    }
    for (rows, u) in part.nodes.iter().zip(updates) {
        for (&i, &ui) in rows.iter().zip(u.iter()) {
            alpha[i] += ui;
        }
    }
    Ok(())
}
