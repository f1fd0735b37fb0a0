//! Serial semi-stochastic solvers: S2GD, S2GD+, lazy sparse S2GD, S2CD, and
//! the epoch/step-size planner behind the work tables.

use crate::error::{invalid, unsupported, Error, Result};
use crate::losses::Problem;
use crate::rng::{DiscreteSampler, Rng};
use crate::scalar::Scalar;
use crate::trace::{SolverTrace, Tracer};

/// How a lazily updated coordinate is brought up to date after `tau` skipped steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CatchUp {
    /// Closed-form `tau`-step map.
    #[default]
    Closed,
    /// `tau` applications of the per-step map; bitwise equal to the eager path.
    Replay,
}

/// `y - h (g + rho (y - w))`: one step on a coordinate the sampled example does not touch.
#[inline]
pub(crate) fn drift<T: Scalar>(y: T, w: T, g: T, h: T, rho: T) -> T {
    if rho == T::zero() {
        y - h * g
    } else {
        y - h * (g + rho * (y - w))
    }
}

#[inline]
pub(crate) fn powu<T: Scalar>(a: T, k: usize) -> T {
    if k <= i32::MAX as usize {
        a.powi(k as i32)
    } else {
        a.powf(T::of_usize(k))
    }
}

/// `tau` consecutive drift steps.
#[inline]
pub(crate) fn drift_n<T: Scalar>(y: T, w: T, g: T, h: T, rho: T, tau: usize, mode: CatchUp) -> T {
    if tau == 0 {
        return y;
    }
    match mode {
        CatchUp::Replay => (0..tau).fold(y, |acc, _| drift(acc, w, g, h, rho)),
        CatchUp::Closed => {
            if rho == T::zero() {
                y - T::of_usize(tau) * (h * g)
            } else {
                let fixed = w - g / rho;
                fixed + powu(T::one() - h * rho, tau) * (y - fixed)
            }
        }
    }
}

/// Variance-reduced inner step `y <- y - h (g + S[grad f_i(y) - grad f_i(w)])` for
/// generalized-linear components with an optional L2 part `rho`.
pub(crate) struct VrKernel<'a, 'p, T> {
    pub prob: &'a Problem<'p, T>,
    pub anchor: &'a [T],
    pub anchor_derivs: &'a [T],
    pub g: &'a [T],
    pub h: T,
    pub rho: T,
    /// Optional per-coordinate scaling of the difference term.
    pub scale: Option<&'a [T]>,
}

impl<T: Scalar> VrKernel<'_, '_, T> {
    #[inline]
    fn rho_at(&self, j: usize) -> T {
        match self.scale {
            Some(s) => self.rho * s[j],
            None => self.rho,
        }
    }

    #[inline]
    fn sparse_coef(&self, hd: T, x: T, j: usize) -> T {
        match self.scale {
            Some(s) => hd * (x * s[j]),
            None => hd * x,
        }
    }

    #[inline]
    fn delta(&self, i: usize, y: &[T]) -> T {
        self.prob.deriv(i, self.prob.ds.dot(i, y)) - self.anchor_derivs[i]
    }

    pub fn eager_step(&self, y: &mut [T], i: usize) {
        let di = self.delta(i, y);
        for j in 0..y.len() {
            y[j] = drift(y[j], self.anchor[j], self.g[j], self.h, self.rho_at(j));
        }
        let hd = self.h * di;
        let (idx, val) = self.prob.ds.row(i);
        for (&j, &x) in idx.iter().zip(val) {
            y[j] = y[j] - self.sparse_coef(hd, x, j);
        }
    }

    /// Step `t` (0-based) touching only the support of `x_i`; `last[j]` counts the
    /// steps already applied to coordinate `j`.
    pub fn lazy_step(&self, y: &mut [T], i: usize, t: usize, last: &mut [usize], mode: CatchUp) {
        let (idx, val) = self.prob.ds.row(i);
        for &j in idx {
            y[j] = drift_n(y[j], self.anchor[j], self.g[j], self.h, self.rho_at(j), t - last[j], mode);
        }
        let di = self.delta(i, y);
        let hd = self.h * di;
        for (&j, &x) in idx.iter().zip(val) {
            y[j] = drift(y[j], self.anchor[j], self.g[j], self.h, self.rho_at(j));
            y[j] = y[j] - self.sparse_coef(hd, x, j);
            last[j] = t + 1;
        }
    }

    /// Applies the drift steps still owed to every coordinate after `total` steps.
    pub fn flush(&self, y: &mut [T], total: usize, last: &mut [usize], mode: CatchUp) {
        for j in 0..y.len() {
            y[j] = drift_n(y[j], self.anchor[j], self.g[j], self.h, self.rho_at(j), total - last[j], mode);
            last[j] = total;
        }
    }
}

/// Parameters of S2GD.
#[derive(Clone, Debug, PartialEq)]
pub struct S2gdConfig<T> {
    /// Maximum number of inner steps per epoch.
    pub m: usize,
    pub h: T,
    /// Lower bound on the strong convexity constant (`0` gives SVRG-style uniform lengths).
    pub nu: T,
    pub epochs: usize,
    pub seed: u64,
}

/// Inner-loop length rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InnerLength {
    /// `P(t) ~ (1 - nu h)^(m - t)` on `1..=m`.
    Geometric,
    /// Exactly this many steps.
    Fixed(usize),
}

/// Eager (dense) or lazy (support-only) inner updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InnerPath {
    Eager,
    Lazy(CatchUp),
}

/// Extra run options shared by the S2GD family.
#[derive(Clone, Debug, PartialEq)]
pub struct S2gdOptions<T> {
    pub inner: InnerLength,
    pub path: InnerPath,
    pub w0: Option<Vec<T>>,
}

impl<T> Default for S2gdOptions<T> {
    fn default() -> Self {
        Self { inner: InnerLength::Geometric, path: InnerPath::Eager, w0: None }
    }
}

fn check_folded_smooth<T: Scalar>(prob: &Problem<'_, T>) -> Result<(T, T)> {
    let c = prob.constants().smooth()?;
    if prob.separate_reg() != crate::losses::RegKind::None {
        return unsupported("solver expects the regularizer folded into the components");
    }
    if prob.n() == 0 {
        return invalid("empty dataset");
    }
    Ok(c)
}

fn check_cfg<T: Scalar>(cfg: &S2gdConfig<T>, mu: T) -> Result<()> {
    if !(cfg.h > T::zero()) {
        return invalid("step size must be positive");
    }
    if cfg.m == 0 {
        return invalid("m must be at least 1");
    }
    if cfg.nu < T::zero() || cfg.nu > mu * T::of(1.0 + 1e-12) {
        return invalid("need 0 <= nu <= mu");
    }
    Ok(())
}

/// Runs one S2GD epoch from `w`, returning the new point and the number of inner steps.
pub(crate) fn s2gd_epoch<T: Scalar>(
    prob: &Problem<'_, T>,
    w: &[T],
    g: &[T],
    derivs: &[T],
    h: T,
    steps: usize,
    rng: &mut Rng,
    path: InnerPath,
) -> Vec<T> {
    let n = prob.n();
    let kernel = VrKernel { prob, anchor: w, anchor_derivs: derivs, g, h, rho: prob.component_l2(), scale: None };
    let mut y = w.to_vec();
    match path {
        InnerPath::Eager => {
            for _ in 0..steps {
                let i = rng.below(n);
                kernel.eager_step(&mut y, i);
            }
        }
        InnerPath::Lazy(mode) => {
            let mut last = vec![0usize; y.len()];
            for t in 0..steps {
                let i = rng.below(n);
                kernel.lazy_step(&mut y, i, t, &mut last, mode);
            }
            kernel.flush(&mut y, steps, &mut last, mode);
        }
    }
    y
}

/// Geometric inner-length law with decay `nu h`, which must lie in `[0, 1]`.
pub fn geometric_law(m: usize, decay: f64) -> Result<DiscreteSampler> {
    if m == 0 || !(0.0..=1.0).contains(&decay) {
        return invalid("the inner-length law needs m >= 1 and 0 <= nu h <= 1");
    }
    Ok(DiscreteSampler::geometric(m, decay))
}

/// S2GD with explicit run options.
pub fn s2gd_run<T: Scalar>(
    prob: &Problem<'_, T>,
    cfg: &S2gdConfig<T>,
    opts: &S2gdOptions<T>,
) -> Result<(Vec<T>, SolverTrace)> {
    let (_, mu) = check_folded_smooth(prob)?;
    check_cfg(cfg, mu)?;
    let (n, d) = (prob.n(), prob.d());
    let mut w = opts.w0.clone().unwrap_or_else(|| vec![T::zero(); d]);
    if w.len() != d {
        return invalid("starting point has the wrong dimension");
    }
    let sampler = match opts.inner {
        InnerLength::Geometric => Some(geometric_law(cfg.m, (cfg.nu * cfg.h).f64())?),
        InnerLength::Fixed(_) => None,
    };
    let mut tracer = Tracer::new("s2gd", cfg.seed, prob.objective(&w).f64());
    let mut evals = 0usize;
    let mut derivs = Vec::with_capacity(n);
    for epoch in 0..cfg.epochs {
        let g = prob.smooth_gradient_with(&w, &mut derivs);
        evals += n;
        let mut rng = Rng::derive(cfg.seed, &[epoch as u64, 0]);
        let steps = match (&sampler, opts.inner) {
            (Some(s), _) => s.sample(&mut rng),
            (None, InnerLength::Fixed(t)) => t,
            (None, InnerLength::Geometric) => unreachable!(),
        };
        w = s2gd_epoch(prob, &w, &g, &derivs, cfg.h, steps, &mut rng, opts.path);
        evals += 2 * steps;
        let obj = prob.objective(&w).f64();
        if !tracer.record(epoch + 1, evals as f64 / n as f64, obj, None, prob.grad_norm(&w).f64(), 0.0) {
            break;
        }
    }
    Ok((w, tracer.finish()))
}

/// S2GD: full gradient, then a random number of variance-reduced steps.
pub fn s2gd_solve<T: Scalar>(prob: &Problem<'_, T>, cfg: &S2gdConfig<T>) -> Result<(Vec<T>, SolverTrace)> {
    s2gd_run(prob, cfg, &S2gdOptions::default())
}

/// S2GD with lazy per-coordinate updates (cost per inner step `O(nnz(x_i))`).
pub fn s2gd_sparse_solve<T: Scalar>(
    prob: &Problem<'_, T>,
    cfg: &S2gdConfig<T>,
    mode: CatchUp,
) -> Result<(Vec<T>, SolverTrace)> {
    let (w, mut tr) = s2gd_run(prob, cfg, &S2gdOptions { path: InnerPath::Lazy(mode), ..Default::default() })?;
    tr.algorithm = "s2gd_sparse".into();
    Ok((w, tr))
}

/// S2GD+: one SGD pass (`n` steps of size `sgd_step`, default `h`), then S2GD
/// epochs of fixed length `ceil(alpha n)`.
pub fn s2gd_plus_solve<T: Scalar>(
    prob: &Problem<'_, T>,
    cfg: &S2gdConfig<T>,
    alpha: f64,
    sgd_step: Option<T>,
) -> Result<(Vec<T>, SolverTrace)> {
    let (_, mu) = check_folded_smooth(prob)?;
    check_cfg(cfg, mu)?;
    if !(alpha > 0.0) {
        return invalid("alpha must be positive");
    }
    let (n, d) = (prob.n(), prob.d());
    let step = sgd_step.unwrap_or(cfg.h);
    let rho = prob.component_l2();
    let center = prob.anchor.as_ref().map(|a| a.center.clone());
    let mut w = vec![T::zero(); d];
    let mut tracer = Tracer::new("s2gd+", cfg.seed, prob.objective(&w).f64());
    let mut rng = Rng::derive(cfg.seed, &[u64::MAX]);
    for _ in 0..n {
        let i = rng.below(n);
        let di = prob.deriv(i, prob.ds.dot(i, &w));
        if rho != T::zero() {
            for j in 0..d {
                let c = center.as_ref().map_or(T::zero(), |c| c[j]);
                let reg = prob.component_l2() * w[j] - prob.anchor.as_ref().map_or(T::zero(), |a| a.weight) * c;
                w[j] = w[j] - step * reg;
            }
        }
        prob.ds.axpy(i, -step * di, &mut w);
    }
    let mut evals = n;
    let mut ok = tracer.record(1, 1.0, prob.objective(&w).f64(), None, prob.grad_norm(&w).f64(), 0.0);
    let inner = ((alpha * n as f64).ceil() as usize).max(1);
    let mut derivs = Vec::with_capacity(n);
    for epoch in 0..cfg.epochs {
        if !ok {
            break;
        }
        let g = prob.smooth_gradient_with(&w, &mut derivs);
        let mut rng = Rng::derive(cfg.seed, &[epoch as u64, 0]);
        w = s2gd_epoch(prob, &w, &g, &derivs, cfg.h, inner, &mut rng, InnerPath::Eager);
        evals += n + 2 * inner;
        let obj = prob.objective(&w).f64();
        ok = tracer.record(epoch + 2, evals as f64 / n as f64, obj, None, prob.grad_norm(&w).f64(), 0.0);
    }
    Ok((w, tracer.finish()))
}

/// Expected-decrease factor `c` of one S2GD epoch.
pub fn convergence_factor(h: f64, m: usize, nu: f64, l: f64, mu: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0 / (2.0 * l)) {
        return Err(Error::Domain("need 0 < h < 1/(2L)".into()));
    }
    if nu < 0.0 || nu > mu * (1.0 + 1e-12) || !(mu > 0.0) {
        return invalid("need 0 <= nu <= mu and mu > 0");
    }
    let beta = geometric_mass(h, m, nu);
    let q = (1.0 - nu * h).powf(m as f64);
    Ok(q / (beta * mu * h * (1.0 - 2.0 * l * h)) + 2.0 * (l - mu) * h / (1.0 - 2.0 * l * h))
}

/// `beta = sum_{t=1}^m (1 - nu h)^(m - t)` in closed form.
pub fn geometric_mass(h: f64, m: usize, nu: f64) -> f64 {
    let a = nu * h;
    if a == 0.0 {
        m as f64
    } else {
        -(m as f64 * (-a).ln_1p()).exp_m1() / a
    }
}

/// Which value of `nu` the planner assumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NuMode {
    Mu,
    Zero,
}

/// Parameters chosen by the planner for a fixed epoch count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanResult {
    pub k: usize,
    pub delta: f64,
    pub h: f64,
    pub m: usize,
    /// Predicted work `k (n + 2m)` in stochastic-gradient evaluations.
    pub work: f64,
    /// Convergence factor at `(h, m)`.
    pub c: f64,
}

/// Plans S2GD for accuracy `eps` given `n`, `L` and `mu`; `k` defaults to `ceil(ln(1/eps))`.
pub fn plan_work(n: f64, l: f64, mu: f64, eps: f64, mode: NuMode, k: Option<usize>) -> Result<PlanResult> {
    if !(eps > 0.0 && eps < 1.0) {
        return invalid("eps must lie in (0, 1)");
    }
    if !(mu > 0.0 && l > mu) {
        return Err(Error::Infeasible("planner needs L > mu > 0".into()));
    }
    let k = k.unwrap_or_else(|| (1.0 / eps).ln().ceil() as usize).max(1);
    let kappa = l / mu;
    let delta = eps.powf(1.0 / k as f64);
    let h = 1.0 / ((4.0 / delta) * (l - mu) + 2.0 * l);
    let m_real = match mode {
        NuMode::Mu => {
            (4.0 * (kappa - 1.0) / delta + 2.0 * kappa)
                * (2.0 / delta + (2.0 * kappa - 1.0) / (kappa - 1.0)).ln()
        }
        NuMode::Zero => {
            8.0 * (kappa - 1.0) / (delta * delta) + 8.0 * kappa / delta + 2.0 * kappa * kappa / (kappa - 1.0)
        }
    };
    if !m_real.is_finite() {
        return Err(Error::Infeasible("inner-loop length is not finite".into()));
    }
    let m = m_real.ceil().max(1.0) as usize;
    let nu = match mode {
        NuMode::Mu => mu,
        NuMode::Zero => 0.0,
    };
    let c = convergence_factor(h, m, nu, l, mu)?;
    if c >= 1.0 {
        return Err(Error::Infeasible(format!("convergence factor {c} >= 1")));
    }
    Ok(PlanResult { k, delta, h, m, work: k as f64 * (n + 2.0 * m as f64), c })
}

pub fn plan_s2gd<T: Scalar>(prob: &Problem<'_, T>, eps: f64, mode: NuMode, k: Option<usize>) -> Result<PlanResult> {
    let (l, mu) = prob.constants().smooth()?;
    plan_work(prob.n() as f64, l.f64(), mu.f64(), eps, mode, k)
}

/// Sampling tables of S2CD.
#[derive(Clone, Debug)]
pub struct S2cdTables<T> {
    /// Coordinate probabilities `p_j = v_j / sum v`.
    pub p: Vec<T>,
    pub v: Vec<T>,
    /// Nonzero coordinate constants per example.
    pub omega: Vec<usize>,
    /// `(1/n) sum_j v_j`.
    pub l_hat: T,
    /// Average component smoothness `(1/n) sum_i L_i`.
    pub l_avg: T,
    n: usize,
    /// `q[j * n + i]`
    q: Vec<T>,
    coord: Option<DiscreteSampler>,
    rows: Vec<Option<DiscreteSampler>>,
}

impl<T: Scalar> S2cdTables<T> {
    pub fn q(&self, i: usize, j: usize) -> T {
        self.q[j * self.n + i]
    }

    pub fn kappa_hat(&self, mu: T) -> T {
        self.l_hat / mu
    }

    fn sample(&self, rng: &mut Rng) -> (usize, usize) {
        let j = self.coord.as_ref().expect("nonempty tables").sample(rng) - 1;
        let i = self.rows[j].as_ref().expect("sampled coordinate has mass").sample(rng) - 1;
        (i, j)
    }
}

/// Builds `L_ij = c x_ij^2 + rho` (`rho` the component L2 weight), `omega_i`,
/// `v_j = sum_i omega_i L_ij`, `p_j` and `q_ij = omega_i L_ij / v_j`.
pub fn s2cd_tables<T: Scalar>(prob: &Problem<'_, T>) -> Result<S2cdTables<T>> {
    check_folded_smooth(prob)?;
    let (n, d) = (prob.n(), prob.d());
    let c = T::of(prob.loss.smoothness().expect("checked smooth"));
    let rho = prob.component_l2();
    let mut lij = vec![T::zero(); n * d];
    let mut omega = vec![0usize; n];
    let mut l_sum = T::zero();
    for i in 0..n {
        for j in 0..d {
            let x = prob.ds.get(i, j);
            let v = c * x * x + rho;
            lij[j * n + i] = v;
            if v != T::zero() {
                omega[i] += 1;
            }
        }
        l_sum = l_sum + c * prob.ds.row_norm_sq(i) + rho;
    }
    let mut v = vec![T::zero(); d];
    let mut q = vec![T::zero(); n * d];
    let mut rows = Vec::with_capacity(d);
    for j in 0..d {
        let col = &lij[j * n..(j + 1) * n];
        let vj = col.iter().zip(&omega).fold(T::zero(), |a, (&l, &o)| a + T::of_usize(o) * l);
        v[j] = vj;
        if vj > T::zero() {
            for i in 0..n {
                q[j * n + i] = T::of_usize(omega[i]) * col[i] / vj;
            }
            let w = (0..n).map(|i| q[j * n + i].f64()).collect::<Vec<_>>();
            rows.push(Some(DiscreteSampler::from_weights(&w)));
        } else {
            rows.push(None);
        }
    }
    let total = v.iter().fold(T::zero(), |a, &x| a + x);
    if !(total > T::zero()) {
        return invalid("all coordinate constants vanish");
    }
    let p = v.iter().map(|&x| x / total).collect::<Vec<_>>();
    let coord = Some(DiscreteSampler::from_weights(&p.iter().map(|x| x.f64()).collect::<Vec<_>>()));
    Ok(S2cdTables {
        p,
        v,
        omega,
        l_hat: total / T::of_usize(n),
        l_avg: l_sum / T::of_usize(n),
        n,
        q,
        coord,
        rows,
    })
}

/// Parameters of S2CD.
#[derive(Clone, Debug, PartialEq)]
pub struct S2cdConfig<T> {
    pub m: usize,
    pub h: T,
    pub epochs: usize,
    pub seed: u64,
}

/// Coordinate-`j` update direction (before the step size) for sample `(i, j)`.
pub fn s2cd_direction<T: Scalar>(
    prob: &Problem<'_, T>,
    tables: &S2cdTables<T>,
    y: &[T],
    w: &[T],
    g: &[T],
    derivs_w: &[T],
    i: usize,
    j: usize,
) -> T {
    let n = T::of_usize(prob.n());
    let di = prob.deriv(i, prob.ds.dot(i, y)) - derivs_w[i];
    let diff = di * prob.ds.get(i, j) + prob.component_l2() * (y[j] - w[j]);
    (g[j] + diff / (n * tables.q(i, j))) / tables.p[j]
}

/// S2CD: full gradient, then geometric-length runs of importance-sampled coordinate steps.
pub fn s2cd_solve<T: Scalar>(prob: &Problem<'_, T>, cfg: &S2cdConfig<T>) -> Result<(Vec<T>, SolverTrace)> {
    let (_, mu) = check_folded_smooth(prob)?;
    if !(cfg.h > T::zero()) || cfg.m == 0 {
        return invalid("need h > 0 and m >= 1");
    }
    let tables = s2cd_tables(prob)?;
    let (n, d) = (prob.n(), prob.d());
    let sampler = geometric_law(cfg.m, (mu * cfg.h).f64())?;
    let mut w = vec![T::zero(); d];
    let mut tracer = Tracer::new("s2cd", cfg.seed, prob.objective(&w).f64());
    let mut derivs = Vec::with_capacity(n);
    let mut evals = 0usize;
    for epoch in 0..cfg.epochs {
        let g = prob.smooth_gradient_with(&w, &mut derivs);
        evals += n;
        let mut rng = Rng::derive(cfg.seed, &[epoch as u64, 0]);
        let steps = sampler.sample(&mut rng);
        let mut y = w.clone();
        for _ in 0..steps {
            let (i, j) = tables.sample(&mut rng);
            let dir = s2cd_direction(prob, &tables, &y, &w, &g, &derivs, i, j);
            y[j] = y[j] - cfg.h * dir;
        }
        evals += 2 * steps;
        w = y;
        let obj = prob.objective(&w).f64();
        if !tracer.record(epoch + 1, evals as f64 / n as f64, obj, None, prob.grad_norm(&w).f64(), 0.0) {
            break;
        }
    }
    Ok((w, tracer.finish()))
}

/// S2CD parameters for `k` epochs at accuracy `eps`:
/// `h = D / ((4 + 2D) L_hat)`, `m = ceil((4/D + 2) ln(2/D + 2) kappa_hat)` with `D = eps^(1/k)`.
pub fn plan_s2cd<T: Scalar>(tables: &S2cdTables<T>, mu: T, eps: f64, k: usize) -> Result<(f64, usize)> {
    if !(eps > 0.0 && eps < 1.0) || k == 0 || !(mu > T::zero()) {
        return invalid("need eps in (0,1), k >= 1, mu > 0");
    }
    let delta = eps.powf(1.0 / k as f64);
    let h = delta / ((4.0 + 2.0 * delta) * tables.l_hat.f64());
    let m = ((4.0 / delta + 2.0) * (2.0 / delta + 2.0).ln() * tables.kappa_hat(mu).f64()).ceil() as usize;
    Ok((h, m.max(1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::SparseDataset;
    use crate::linalg::ridge_solution;

    fn small_ridge() -> (SparseDataset<f64>, f64) {
        let rows = vec![vec![1.0, 0.5, 0.0], vec![0.0, 1.0, -1.0], vec![0.3, 0.0, 2.0], vec![1.0, 1.0, 1.0]];
        (SparseDataset::from_dense(&rows, &[1.0, -0.5, 2.0, 0.3]), 0.1)
    }

    #[test]
    fn one_step_with_m1_is_gradient_descent() {
        let (ds, lam) = small_ridge();
        let p = Problem::ridge(&ds, lam);
        let l = p.constants().l.unwrap();
        let cfg = S2gdConfig { m: 1, h: 1.0 / l, nu: 0.0, epochs: 1, seed: 3 };
        let (w, _) = s2gd_solve(&p, &cfg).unwrap();
        let g = p.smooth_gradient(&[0.0; 3]);
        for j in 0..3 {
            assert!((w[j] + g[j] / l).abs() < 1e-15);
        }
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        let (ds, lam) = small_ridge();
        let p = Problem::ridge(&ds, lam);
        let wstar = ridge_solution(&ds, lam).unwrap();
        let l = p.constants().l.unwrap();
        let opts = S2gdOptions { w0: Some(wstar.clone()), ..Default::default() };
        let cfg = S2gdConfig { m: 50, h: 0.1 / l, nu: 0.0, epochs: 3, seed: 1 };
        let (w, _) = s2gd_run(&p, &cfg, &opts).unwrap();
        for j in 0..3 {
            assert!((w[j] - wstar[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn convergence_factor_forms() {
        let (l, mu, h, m) = (1.0, 0.1, 0.1, 100);
        let c0 = convergence_factor(h, m, 0.0, l, mu).unwrap();
        let expect = 1.0 / (mu * h * (1.0 - 2.0 * l * h) * m as f64) + 2.0 * (l - mu) * h / (1.0 - 2.0 * l * h);
        assert!((c0 - expect).abs() < 1e-14);
        let c = convergence_factor(h, m, mu, l, mu).unwrap();
        let beta_direct: f64 = (1..=m).map(|t| (1.0 - mu * h).powi((m - t) as i32)).sum();
        let direct = (1.0 - mu * h).powi(m as i32) / (beta_direct * mu * h * (1.0 - 2.0 * l * h))
            + 2.0 * (l - mu) * h / (1.0 - 2.0 * l * h);
        assert!((c - direct).abs() < 1e-12);
        let limit = convergence_factor(h, 100_000, mu, l, mu).unwrap();
        assert!((limit - 2.0 * (l - mu) * h / (1.0 - 2.0 * l * h)).abs() < 1e-12);
        assert!(convergence_factor(0.5, m, 0.0, l, mu).is_err());
    }

    #[test]
    fn planner_first_block() {
        let n = 1e9;
        let p = plan_work(n, 1e3, 1.0, 1e-3, NuMode::Mu, Some(1)).unwrap();
        assert!((p.work / n - 1.06).abs() < 0.005);
        let p = plan_work(n, 1e3, 1.0, 1e-3, NuMode::Mu, Some(3)).unwrap();
        assert!((p.work / n - 3.00).abs() < 0.005);
        let p = plan_work(n, 1e3, 1.0, 1e-3, NuMode::Mu, None).unwrap();
        assert_eq!(p.k, 7);
    }

    #[test]
    fn work_definition() {
        // k (n + 2m) with m = 5, n = 10, k = 2.
        let r = PlanResult { k: 2, delta: 0.5, h: 0.1, m: 5, work: 2.0 * (10.0 + 10.0), c: 0.5 };
        assert_eq!(r.work, 40.0);
    }

    #[test]
    fn lazy_closed_drift_matches_replay() {
        for &(rho, tau) in &[(0.0, 7usize), (0.3, 5), (0.01, 40)] {
            let a: f64 = drift_n(1.5, 0.2, -0.7, 0.05, rho, tau, CatchUp::Replay);
            let b: f64 = drift_n(1.5, 0.2, -0.7, 0.05, rho, tau, CatchUp::Closed);
            assert!((a - b).abs() < 1e-13 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn s2cd_one_dimension() {
        let ds = SparseDataset::from_dense(&[vec![1.0], vec![2.0], vec![-1.0]], &[1.0, 0.0, 2.0]);
        let p = Problem::ridge(&ds, 0.0);
        let t = s2cd_tables(&p).unwrap();
        assert_eq!(t.p, vec![1.0]);
        let total: f64 = 1.0 + 4.0 + 1.0;
        assert!((t.q(1, 0) - 4.0 / total).abs() < 1e-15);
    }
}
