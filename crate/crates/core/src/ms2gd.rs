//! Mini-batch proximal S2GD with lazy proximal catch-up for L1/L2 regularizers.

use crate::error::{invalid, unsupported, Error, Result};
use crate::losses::{Problem, RegKind};
use crate::rng::{DiscreteSampler, Rng, SubsetSampler};
use crate::scalar::Scalar;
use crate::trace::{SolverTrace, Tracer};
use crate::vr_serial::{drift, powu, CatchUp};

/// Law of the number of inner steps per epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepLaw<T> {
    /// Uniform on `1..=m`.
    Uniform,
    /// `P(t) ~ (1 - nu h)^(m - t)`, as in plain S2GD.
    Geometric(T),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ms2gdConfig<T> {
    /// Mini-batch size.
    pub b: usize,
    pub m: usize,
    pub h: T,
    pub epochs: usize,
    pub seed: u64,
    pub law: StepLaw<T>,
}

impl<T: Scalar> Ms2gdConfig<T> {
    pub fn new(b: usize, m: usize, h: T, epochs: usize, seed: u64) -> Self {
        Self { b, m, h, epochs, seed, law: StepLaw::Uniform }
    }
}

/// `alpha(b) = (n - b) / (b (n - 1))`; `0` when `n = 1`.
pub fn alpha(n: usize, b: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    (n - b) as f64 / (b as f64 * (n - 1) as f64)
}

/// `tau` proximal steps `x <- (x - h g) / (1 + lambda h)` in closed form.
pub fn lazy_prox_l2<T: Scalar>(y: T, g: T, lambda: T, h: T, tau: usize) -> T {
    if tau == 0 {
        return y;
    }
    let beta = T::one() / (T::one() + lambda * h);
    let bt = powu(beta, tau);
    bt * y - (T::one() - bt) * g / lambda
}

/// `tau` proximal steps `x <- soft(x - h g, lambda h)` in closed form.
pub fn lazy_prox_l1<T: Scalar>(y: T, g: T, lambda: T, h: T, tau: usize) -> T {
    if tau == 0 {
        return y;
    }
    let zero = T::zero();
    let big = (lambda + g) * h;
    let small = (g - lambda) * h;
    let tau_r = T::of_usize(tau);
    if g >= lambda {
        let p = (y / big).floor();
        if p >= tau_r {
            return y - tau_r * big;
        }
        let pp = p.max(zero);
        (y - pp * big).min(small) - (tau_r - pp) * small
    } else if g > -lambda {
        if y >= zero {
            (y - tau_r * big).max(zero)
        } else {
            (y - tau_r * small).min(zero)
        }
    } else {
        let q = (y / small).floor();
        if q >= tau_r {
            return y - tau_r * small;
        }
        let qq = q.max(zero);
        (y - qq * small).max(big) - (tau_r - qq) * big
    }
}

struct Step<'a, 'p, T> {
    prob: &'a Problem<'p, T>,
    reg: RegKind<T>,
    w: &'a [T],
    g: &'a [T],
    derivs: &'a [T],
    h: T,
    hb: T,
    rho: T,
}

impl<T: Scalar> Step<'_, '_, T> {
    /// One coordinate update with mini-batch sum `acc`.
    #[inline]
    fn coord(&self, y: T, j: usize, acc: T) -> T {
        let v = drift(y, self.w[j], self.g[j], self.h, self.rho) - self.hb * acc;
        self.reg.prox_scalar(v, self.h)
    }

    fn catch_up(&self, y: T, j: usize, tau: usize, mode: CatchUp) -> T {
        match mode {
            CatchUp::Replay => (0..tau).fold(y, |x, _| self.coord(x, j, T::zero())),
            CatchUp::Closed => match self.reg {
                RegKind::L2(l) => lazy_prox_l2(y, self.g[j], l, self.h, tau),
                RegKind::L1(l) => lazy_prox_l1(y, self.g[j], l, self.h, tau),
                _ => unreachable!("checked before the run"),
            },
        }
    }

    /// Accumulates `sum_{i in A} (l'(x_i y) - l'(x_i w)) x_i` in ascending `i`.
    fn accumulate(&self, y: &[T], batch: &[usize], acc: &mut [T], touched: &mut Vec<usize>, mark: &mut [bool]) {
        let ds = self.prob.ds;
        let diffs = batch
            .iter()
            .map(|&i| self.prob.deriv(i, ds.dot(i, y)) - self.derivs[i])
            .collect::<Vec<_>>();
        for (&i, &di) in batch.iter().zip(&diffs) {
            let (idx, val) = ds.row(i);
            for (&j, &x) in idx.iter().zip(val) {
                acc[j] = acc[j] + di * x;
                if !mark[j] {
                    mark[j] = true;
                    touched.push(j);
                }
            }
        }
    }
}

fn check<T: Scalar>(prob: &Problem<'_, T>, cfg: &Ms2gdConfig<T>) -> Result<()> {
    prob.constants().smooth()?;
    if prob.reg_folded && prob.reg != RegKind::None {
        return invalid("mS2GD keeps the regularizer separate; build the problem unfolded");
    }
    let n = prob.n();
    if n == 0 {
        return invalid("empty dataset");
    }
    if cfg.b == 0 || cfg.b > n {
        return invalid("need 1 <= b <= n");
    }
    if !(cfg.h > T::zero()) || cfg.m == 0 {
        return invalid("need h > 0 and m >= 1");
    }
    Ok(())
}

fn run<T: Scalar>(prob: &Problem<'_, T>, cfg: &Ms2gdConfig<T>, lazy: Option<CatchUp>) -> Result<(Vec<T>, SolverTrace)> {
    check(prob, cfg)?;
    let reg = prob.separate_reg();
    let rho = prob.component_l2();
    if let Some(mode) = lazy {
        match reg {
            RegKind::L1(l) | RegKind::L2(l) if l > T::zero() => {}
            _ => return unsupported("lazy mS2GD supports only an L1 or L2 regularizer"),
        }
        if mode == CatchUp::Closed && rho != T::zero() {
            return unsupported("closed-form catch-up assumes no L2 term inside the components");
        }
    }
    let (n, d) = (prob.n(), prob.d());
    let law = match cfg.law {
        StepLaw::Uniform => DiscreteSampler::uniform(cfg.m),
        StepLaw::Geometric(nu) => crate::vr_serial::geometric_law(cfg.m, (nu * cfg.h).f64())?,
    };
    let name = if lazy.is_some() { "ms2gd_lazy" } else { "ms2gd" };
    let mut w = vec![T::zero(); d];
    let mut tracer = Tracer::new(name, cfg.seed, prob.objective(&w).f64());
    let mut subsets = SubsetSampler::new(n);
    let mut derivs = Vec::with_capacity(n);
    let mut acc = vec![T::zero(); d];
    let mut mark = vec![false; d];
    let mut touched = Vec::new();
    let mut last = vec![0usize; d];
    let mut evals = 0usize;
    for epoch in 0..cfg.epochs {
        let g = prob.smooth_gradient_with(&w, &mut derivs);
        evals += n;
        let step = Step {
            prob,
            reg,
            w: &w,
            g: &g,
            derivs: &derivs,
            h: cfg.h,
            hb: cfg.h / T::of_usize(cfg.b),
            rho,
        };
        let mut rng = Rng::derive(cfg.seed, &[epoch as u64, 0]);
        let steps = law.sample(&mut rng);
        let mut y = w.clone();
        last.iter_mut().for_each(|c| *c = 0);
        for t in 0..steps {
            let batch = subsets.draw(&mut rng, cfg.b);
            if let Some(mode) = lazy {
                for &i in batch {
                    for &j in prob.ds.row(i).0 {
                        if last[j] < t {
                            y[j] = step.catch_up(y[j], j, t - last[j], mode);
                            last[j] = t;
                        }
                    }
                }
            }
            touched.clear();
            step.accumulate(&y, batch, &mut acc, &mut touched, &mut mark);
            match lazy {
                None => {
                    for j in 0..d {
                        y[j] = step.coord(y[j], j, acc[j]);
                    }
                }
                Some(_) => {
                    for &j in &touched {
                        y[j] = step.coord(y[j], j, acc[j]);
                        last[j] = t + 1;
                    }
                }
            }
            for &j in &touched {
                acc[j] = T::zero();
                mark[j] = false;
            }
        }
        if let Some(mode) = lazy {
            for j in 0..d {
                y[j] = step.catch_up(y[j], j, steps - last[j], mode);
            }
        }
        evals += 2 * cfg.b * steps;
        w = y;
        let obj = prob.objective(&w).f64();
        if !tracer.record(epoch + 1, evals as f64 / n as f64, obj, None, prob.grad_norm(&w).f64(), 0.0) {
            break;
        }
    }
    Ok((w, tracer.finish()))
}

/// mS2GD: `y <- prox_{hR}(y - h G)` with `G = g + (1/b) sum_{i in A} (grad f_i(y) - grad f_i(w))`.
pub fn ms2gd_solve<T: Scalar>(prob: &Problem<'_, T>, cfg: &Ms2gdConfig<T>) -> Result<(Vec<T>, SolverTrace)> {
    run(prob, cfg, None)
}

/// mS2GD touching only the union of the mini-batch supports per step.
pub fn ms2gd_lazy_solve<T: Scalar>(
    prob: &Problem<'_, T>,
    cfg: &Ms2gdConfig<T>,
    mode: CatchUp,
) -> Result<(Vec<T>, SolverTrace)> {
    run(prob, cfg, Some(mode))
}

/// Step size and inner length for mini-batch size `b` and target factor `c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiniBatchPlan {
    pub b: usize,
    pub alpha: f64,
    pub h: f64,
    pub m: f64,
    /// Whether the step size was capped at `1/L`.
    pub capped: bool,
    /// Mini-batch size below which total work falls with `b`.
    pub b0: f64,
    pub c: f64,
}

pub fn plan_minibatch(n: usize, l: f64, mu: f64, b: usize, c: f64) -> Result<MiniBatchPlan> {
    if !(c > 0.0 && c < 1.0) {
        return invalid("target factor must lie in (0, 1)");
    }
    if b == 0 || b > n {
        return invalid("need 1 <= b <= n");
    }
    if !(mu > 0.0 && l >= mu) {
        return invalid("need L >= mu > 0");
    }
    let a = alpha(n, b);
    let kappa = l / mu;
    let lead = (1.0 + c) / (c * mu);
    let h_tilde = (lead * lead + 1.0 / (4.0 * mu * a * l)).sqrt() - lead;
    let nf = n as f64;
    let b0 = (8.0 * c * nf * kappa + 8.0 * nf * kappa + 4.0 * c * nf) / (c * nf * kappa + (7.0 * c + 8.0) * kappa + 4.0 * c);
    if h_tilde <= 1.0 / l {
        let r = 1.0 + 1.0 / c;
        let fa = 4.0 * a;
        let m = (2.0 * kappa / c) * (r * fa + (fa / kappa + r * r * fa * fa).sqrt());
        Ok(MiniBatchPlan { b, alpha: a, h: h_tilde, m, capped: false, b0, c })
    } else {
        let den = c - 4.0 * a * (1.0 + c);
        if den <= 0.0 {
            return Err(Error::Infeasible(format!("no inner length reaches factor {c} with step 1/L at b = {b}")));
        }
        Ok(MiniBatchPlan { b, alpha: a, h: 1.0 / l, m: (kappa + 4.0 * a) / den, capped: true, b0, c })
    }
}

pub fn plan_minibatch_for<T: Scalar>(prob: &Problem<'_, T>, b: usize, c: f64) -> Result<MiniBatchPlan> {
    let (l, mu) = prob.constants().smooth()?;
    plan_minibatch(prob.n(), l.f64(), mu.f64(), b, c)
}

/// Per-epoch factor `1/(m h mu (1 - 4hLa)) + 4hLa (m + 1) / (m (1 - 4hLa))`.
pub fn ms2gd_rate(h: f64, m: f64, l: f64, mu: f64, alpha: f64) -> Result<f64> {
    let q = 4.0 * h * l * alpha;
    if !(h > 0.0 && h <= 1.0 / l && q < 1.0) {
        return Err(Error::Domain("need 0 < h <= 1/L and 4hL alpha < 1".into()));
    }
    Ok(1.0 / (m * h * mu * (1.0 - q)) + q * (m + 1.0) / (m * (1.0 - q)))
}
