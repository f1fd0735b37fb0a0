//! CoCoA+ over simulated nodes: dual state, local subproblems, local solvers,
//! additive/averaged aggregation and duality-gap certificates.
//!
//! Primal `P(w) = (1/n) sum_i l_i(x_i^T w) + lambda/2 ||w||^2`, dual
//! `D(a) = (1/n) sum_i -l_i*(-a_i) - lambda/2 ||v||^2` with `v = X a / (lambda n)`
//! and `w(a) = v`.

use crate::dataio::Partition;
use crate::error::{invalid, unsupported, Result};
use crate::linalg::{all_columns, generalized_max_eigenvalue};
use crate::losses::{LossKind, Problem, RegKind};
use crate::rng::Rng;
use crate::scalar::{norm_sq, Scalar};
use crate::trace::{SolverTrace, Tracer};
use rayon::prelude::*;

fn l2_lambda<T: Scalar>(prob: &Problem<'_, T>) -> Result<T> {
    match prob.reg {
        RegKind::L2(l) if l > T::zero() => {}
        _ => return unsupported("CoCoA+ needs an L2 regularizer with positive weight"),
    }
    if prob.anchor.is_some() {
        return unsupported("CoCoA+ does not handle anchored problems");
    }
    Ok(prob.reg.l2_weight())
}

/// `v = X a / (lambda n)`.
pub fn shared_vector<T: Scalar>(prob: &Problem<'_, T>, alpha: &[T]) -> Result<Vec<T>> {
    let lambda = l2_lambda(prob)?;
    let scale = T::one() / (lambda * T::of_usize(prob.n()));
    let mut v = vec![T::zero(); prob.d()];
    for (i, &a) in alpha.iter().enumerate() {
        if a != T::zero() {
            prob.ds.axpy(i, a * scale, &mut v);
        }
    }
    Ok(v)
}

/// `-l_i*(-a)`, `-inf` outside the conjugate domain.
#[inline]
fn neg_conj<T: Scalar>(loss: LossKind, a: T, y: T) -> T {
    -loss.conjugate(-a, y)
}

/// Dual objective; `-inf` when some `a_i` leaves its conjugate domain.
pub fn dual_objective<T: Scalar>(prob: &Problem<'_, T>, alpha: &[T]) -> Result<T> {
    let v = shared_vector(prob, alpha)?;
    Ok(dual_with(prob, alpha, &v, prob.reg.l2_weight()))
}

fn dual_with<T: Scalar>(prob: &Problem<'_, T>, alpha: &[T], v: &[T], lambda: T) -> T {
    let n = prob.n();
    let sum = alpha
        .iter()
        .enumerate()
        .fold(T::zero(), |s, (i, &a)| s + neg_conj(prob.loss, a, prob.ds.labels[i]));
    sum / T::of_usize(n) - lambda * T::of(0.5) * norm_sq(v)
}

/// `P(w(a)) - D(a)`.
pub fn duality_gap<T: Scalar>(prob: &Problem<'_, T>, alpha: &[T]) -> Result<T> {
    let v = shared_vector(prob, alpha)?;
    let lambda = prob.reg.l2_weight();
    Ok(prob.objective(&v) - dual_with(prob, alpha, &v, lambda))
}

/// Dual variables plus the shared vector they induce.
#[derive(Clone, Debug, PartialEq)]
pub struct DualState<T> {
    pub alpha: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> DualState<T> {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { alpha: vec![T::zero(); n], v: vec![T::zero(); d] }
    }

    /// Primal point `w = v` (the L2 case).
    pub fn primal(&self) -> &[T] {
        &self.v
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LocalSolver {
    /// Randomized exact dual coordinate ascent.
    #[default]
    Cd,
    /// Projected gradient ascent with backtracking.
    Gd,
}

impl LocalSolver {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cd" => Ok(Self::Cd),
            "gd" => Ok(Self::Gd),
            _ => invalid(format!("unknown local solver {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CocoaConfig<T> {
    /// Aggregation weight in `(0, 1]`.
    pub nu: T,
    /// Subproblem parameter.
    pub sigma_prime: T,
    pub solver: LocalSolver,
    /// Local iterations per round.
    pub local_iters: usize,
    pub rounds: usize,
    pub seed: u64,
    /// Bits per transmitted real.
    pub bits_per_value: u32,
    /// Worker threads for the node solves (`<= 1` runs sequentially).
    pub threads: usize,
    /// Stop once the duality gap falls to this value.
    pub gap_tol: Option<f64>,
    /// Reject `sigma_prime` below the exact safe value (small instances only).
    pub check_sigma: bool,
}

impl<T: Scalar> CocoaConfig<T> {
    /// Adding: `nu = 1`, `sigma' = K`.
    pub fn adding(k: usize, local_iters: usize, rounds: usize, seed: u64) -> Self {
        Self {
            nu: T::one(),
            sigma_prime: T::of_usize(k),
            solver: LocalSolver::Cd,
            local_iters,
            rounds,
            seed,
            bits_per_value: 32,
            threads: 1,
            gap_tol: None,
            check_sigma: false,
        }
    }

    /// Averaging: `nu = 1/K`, `sigma' = 1`.
    pub fn averaging(k: usize, local_iters: usize, rounds: usize, seed: u64) -> Self {
        Self { nu: T::one() / T::of_usize(k), sigma_prime: T::one(), ..Self::adding(k, local_iters, rounds, seed) }
    }
}

/// Local subproblem of node `k` around the current dual state.
pub struct LocalSubproblem<'a, 'p, T> {
    pub prob: &'a Problem<'p, T>,
    /// Examples held by the node.
    pub rows: &'a [usize],
    pub alpha: &'a [T],
    /// `w = grad g*(v)`.
    pub w: &'a [T],
    pub lambda: T,
    pub sigma_prime: T,
    /// Number of nodes.
    pub k: usize,
}

impl<T: Scalar> LocalSubproblem<'_, '_, T> {
    fn n(&self) -> T {
        T::of_usize(self.prob.n())
    }

    /// `X_k h` for local increments `h` (indexed like `rows`).
    pub fn image(&self, h: &[T]) -> Vec<T> {
        let mut u = vec![T::zero(); self.prob.d()];
        for (&i, &hi) in self.rows.iter().zip(h) {
            if hi != T::zero() {
                self.prob.ds.axpy(i, hi, &mut u);
            }
        }
        u
    }

    /// `G_k(h) = (1/n) sum -l*(-(a_i + h_i)) - lambda/(2K) ||v||^2 - (1/n) w^T X_k h
    ///  - sigma'/(2 lambda n^2) ||X_k h||^2`.
    pub fn value(&self, h: &[T]) -> T {
        let u = self.image(h);
        self.value_with(h, &u)
    }

    fn value_with(&self, h: &[T], u: &[T]) -> T {
        let n = self.n();
        let conj = self.rows.iter().zip(h).fold(T::zero(), |s, (&i, &hi)| {
            s + neg_conj(self.prob.loss, self.alpha[i] + hi, self.prob.ds.labels[i])
        });
        let lin = crate::scalar::dot(self.w, u);
        let v = self.w;
        conj / n - self.lambda * T::of(0.5) / T::of_usize(self.k) * norm_sq(v) - lin / n
            - self.sigma_prime / (T::of(2.0) * self.lambda * n * n) * norm_sq(u)
    }

    /// Exact maximizer of `-l*(-(a + d)) - s d - q d^2 / 2` over `d`.
    fn coordinate_step(&self, a: T, y: T, s: T, q: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match self.prob.loss {
            LossKind::Quadratic => (y - s - a) / (one + q),
            LossKind::Hinge => {
                let target = if q > zero {
                    a + (y - s) / q
                } else if (y - s) * y > zero {
                    y
                } else if (y - s) * y < zero {
                    zero
                } else {
                    a
                };
                y * (y * target).max(zero).min(one) - a
            }
            LossKind::SquaredHinge => {
                let target = a + (y - s - a * T::of(0.5)) / (q + T::of(0.5));
                y * (y * target).max(zero) - a
            }
            LossKind::Logistic => {
                // Root of ln((1 - z)/z) - s y - q (z - z0) = 0 in z = y (a + d) in (0, 1).
                let z0 = y * a;
                let f = |z: T| ((one - z) / z).ln() - s * y - q * (z - z0);
                let (mut lo, mut hi) = (zero, one);
                for _ in 0..200 {
                    let mid = (lo + hi) * T::of(0.5);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if f(mid) > zero {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                y * ((lo + hi) * T::of(0.5)) - a
            }
        }
    }

    /// Runs `iters` local iterations from `h = 0`.
    pub fn solve(&self, solver: LocalSolver, iters: usize, rng: &mut Rng) -> Result<Vec<T>> {
        match solver {
            LocalSolver::Cd => Ok(self.solve_cd(iters, rng)),
            LocalSolver::Gd => self.solve_gd(iters),
        }
    }

    fn solve_cd(&self, iters: usize, rng: &mut Rng) -> Vec<T> {
        let nk = self.rows.len();
        let mut h = vec![T::zero(); nk];
        if nk == 0 {
            return h;
        }
        let mut u = vec![T::zero(); self.prob.d()];
        let ln = self.lambda * self.n();
        let ds = self.prob.ds;
        for _ in 0..iters {
            let r = rng.below(nk);
            let i = self.rows[r];
            let (idx, val) = ds.row(i);
            let mut s = T::zero();
            for (&j, &x) in idx.iter().zip(val) {
                s = s + x * (self.w[j] + self.sigma_prime * u[j] / ln);
            }
            let q = self.sigma_prime * ds.row_norm_sq(i) / ln;
            let a = self.alpha[i] + h[r];
            let delta = self.coordinate_step(a, ds.labels[i], s, q);
            if delta != T::zero() && delta.is_finite() {
                h[r] = h[r] + delta;
                ds.axpy(i, delta, &mut u);
            }
        }
        h
    }

    fn project(&self, i: usize, a: T) -> T {
        let y = self.prob.ds.labels[i];
        match self.prob.loss {
            LossKind::Hinge => y * (y * a).max(T::zero()).min(T::one()),
            LossKind::SquaredHinge => y * (y * a).max(T::zero()),
            _ => a,
        }
    }

    fn solve_gd(&self, iters: usize) -> Result<Vec<T>> {
        if self.prob.loss == LossKind::Logistic {
            return unsupported("the gd local solver does not support the logistic loss");
        }
        let nk = self.rows.len();
        let mut h = vec![T::zero(); nk];
        if nk == 0 || iters == 0 {
            return Ok(h);
        }
        let n = self.n();
        let ln = self.lambda * n;
        let ds = self.prob.ds;
        let mut u = vec![T::zero(); self.prob.d()];
        let mut cur = self.value_with(&h, &u);
        let mut step = T::one();
        for _ in 0..iters {
            let grad = self
                .rows
                .iter()
                .zip(&h)
                .map(|(&i, &hi)| {
                    let y = ds.labels[i];
                    let a = self.alpha[i] + hi;
                    let dconj = match self.prob.loss {
                        LossKind::Quadratic => y - a,
                        LossKind::Hinge => y,
                        LossKind::SquaredHinge => y - a * T::of(0.5),
                        LossKind::Logistic => unreachable!(),
                    };
                    let (idx, val) = ds.row(i);
                    let s = idx
                        .iter()
                        .zip(val)
                        .fold(T::zero(), |acc, (&j, &x)| acc + x * (self.w[j] + self.sigma_prime * u[j] / ln));
                    (dconj - s) / n
                })
                .collect::<Vec<_>>();
            step = step * T::of(2.0);
            let mut accepted = false;
            for _ in 0..60 {
                let cand = self
                    .rows
                    .iter()
                    .zip(h.iter().zip(&grad))
                    .map(|(&i, (&hi, &gi))| self.project(i, self.alpha[i] + hi + step * gi) - self.alpha[i])
                    .collect::<Vec<_>>();
                let cu = self.image(&cand);
                let val = self.value_with(&cand, &cu);
                let (mut lin, mut sq) = (T::zero(), T::zero());
                for ((&c, &hi), &gi) in cand.iter().zip(&h).zip(&grad) {
                    lin = lin + gi * (c - hi);
                    sq = sq + (c - hi) * (c - hi);
                }
                if val >= cur + lin - sq / (T::of(2.0) * step) && val >= cur {
                    h = cand;
                    u = cu;
                    cur = val;
                    accepted = true;
                    break;
                }
                step = step * T::of(0.5);
            }
            if !accepted {
                break;
            }
        }
        Ok(h)
    }
}

/// Safe subproblem parameter `nu * max { h^T X^T X h : h^T G h <= 1 }` with `G`
/// the node-block-diagonal part of `X^T X`. Returns the value and the rank of `G`.
pub fn sigma_prime_min<T: Scalar>(
    ds: &crate::dataio::SparseDataset<T>,
    part: &Partition,
    nu: f64,
) -> Result<(f64, usize)> {
    if ds.n() * ds.d > 2000 {
        return invalid("exact sigma' is only computed for d * n <= 2000");
    }
    let x = all_columns(ds);
    let gram = x.transpose() * &x;
    let mut g = nalgebra::DMatrix::zeros(ds.n(), ds.n());
    for node in &part.nodes {
        for &a in node {
            for &b in node {
                g[(a, b)] = gram[(a, b)];
            }
        }
    }
    let (value, rank) = generalized_max_eigenvalue(&gram, &g, &part.nodes);
    Ok((nu * value, rank))
}

fn check_cfg<T: Scalar>(prob: &Problem<'_, T>, part: &Partition, cfg: &CocoaConfig<T>) -> Result<T> {
    let lambda = l2_lambda(prob)?;
    if part.assignment.len() != prob.n() {
        return invalid("partition does not match the dataset");
    }
    if !(cfg.nu > T::zero() && cfg.nu <= T::one()) {
        return invalid("nu must lie in (0, 1]");
    }
    if !(cfg.sigma_prime > T::zero()) {
        return invalid("sigma' must be positive");
    }
    if cfg.check_sigma {
        let (min, _) = sigma_prime_min(prob.ds, part, cfg.nu.f64())?;
        if cfg.sigma_prime.f64() < min - 1e-9 {
            return invalid(format!("sigma' = {} is below the safe value {min}", cfg.sigma_prime));
        }
    }
    Ok(lambda)
}

/// One round: every node solves its subproblem from the shared state, then
/// `a_k += nu h_k` and `v += nu sum_k X_k h_k / (lambda n)` in node order.
pub fn cocoa_round<T: Scalar>(
    prob: &Problem<'_, T>,
    part: &Partition,
    state: &mut DualState<T>,
    cfg: &CocoaConfig<T>,
    round: usize,
) -> Result<()> {
    let lambda = check_cfg(prob, part, cfg)?;
    round_inner(prob, part, state, cfg, round, lambda)
}

fn round_inner<T: Scalar>(
    prob: &Problem<'_, T>,
    part: &Partition,
    state: &mut DualState<T>,
    cfg: &CocoaConfig<T>,
    round: usize,
    lambda: T,
) -> Result<()> {
    let k = part.nodes.len();
    let solve_node = |node: usize| -> Result<Vec<T>> {
        let sub = LocalSubproblem {
            prob,
            rows: &part.nodes[node],
            alpha: &state.alpha,
            w: &state.v,
            lambda,
            sigma_prime: cfg.sigma_prime,
            k,
        };
        let mut rng = Rng::derive(cfg.seed, &[round as u64, node as u64]);
        sub.solve(cfg.solver, cfg.local_iters, &mut rng)
    };
    let updates: Vec<Result<Vec<T>>> = if cfg.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
        pool.install(|| (0..k).into_par_iter().map(solve_node).collect())
    } else {
        (0..k).map(solve_node).collect()
    };
    let scale = cfg.nu / (lambda * T::of_usize(prob.n()));
    for (node, upd) in updates.into_iter().enumerate() {
        let h = upd?;
        for (&i, &hi) in part.nodes[node].iter().zip(&h) {
            if hi != T::zero() {
                state.alpha[i] = state.alpha[i] + cfg.nu * hi;
                prob.ds.axpy(i, scale * hi, &mut state.v);
            }
        }
    }
    Ok(())
}

/// Result of a CoCoA+ run.
#[derive(Clone, Debug)]
pub struct CocoaOutput<T> {
    pub w: Vec<T>,
    pub state: DualState<T>,
    pub trace: SolverTrace,
    /// Average of `w` over all completed rounds.
    pub averaged_w: Vec<T>,
}

pub fn cocoa_solve<T: Scalar>(prob: &Problem<'_, T>, part: &Partition, cfg: &CocoaConfig<T>) -> Result<CocoaOutput<T>> {
    let lambda = check_cfg(prob, part, cfg)?;
    let (n, d) = (prob.n(), prob.d());
    let k = part.nodes.len();
    let mut state = DualState::zeros(n, d);
    let mut avg = vec![T::zero(); d];
    let mut tracer = Tracer::new("cocoa", cfg.seed, prob.objective(&state.v).f64());
    let bits_round = (k * d) as f64 * cfg.bits_per_value as f64;
    let work_round = match cfg.solver {
        LocalSolver::Cd => (k * cfg.local_iters) as f64 / n as f64,
        LocalSolver::Gd => cfg.local_iters as f64,
    };
    let mut done = 0usize;
    for round in 0..cfg.rounds {
        round_inner(prob, part, &mut state, cfg, round, lambda)?;
        done += 1;
        let inv = T::one() / T::of_usize(done);
        for (a, &x) in avg.iter_mut().zip(&state.v) {
            *a = *a + (x - *a) * inv;
        }
        let primal = prob.objective(&state.v);
        let gap = primal - dual_with(prob, &state.alpha, &state.v, lambda);
        let ok = tracer.record(
            round + 1,
            work_round * (round + 1) as f64,
            primal.f64(),
            Some(gap.f64()),
            prob.grad_norm(&state.v).f64(),
            bits_round * (round + 1) as f64,
        );
        if !ok {
            break;
        }
        if cfg.gap_tol.is_some_and(|tol| gap.f64() <= tol) {
            tracer.converged();
            break;
        }
    }
    Ok(CocoaOutput { w: state.v.clone(), state, trace: tracer.finish(), averaged_w: avg })
}

/// `(G* - G(h)) / (G* - G(0))`, with `G*` approximated by a long coordinate-ascent run.
pub fn empirical_theta<T: Scalar>(sub: &LocalSubproblem<'_, '_, T>, h: &[T], seed: u64) -> T {
    let mut rng = Rng::derive(seed, &[u64::MAX]);
    let best = sub.solve_cd(2000 * sub.rows.len().max(1), &mut rng);
    let g0 = sub.value(&vec![T::zero(); sub.rows.len()]);
    let gstar = sub.value(&best).max(sub.value(h));
    let denom = gstar - g0;
    if denom <= T::zero() {
        T::zero()
    } else {
        ((gstar - sub.value(h)) / denom).max(T::zero())
    }
}
