//! Scalar losses, conjugates, regularizers and problem-level constants.

use crate::dataio::SparseDataset;
use crate::error::{invalid, unsupported, Result};
use crate::scalar::Scalar;

/// Loss `l(a; y)` applied to a margin `a = x^T w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `(a - y)^2 / 2`
    Quadratic,
    /// `log(1 + exp(-y a))`
    Logistic,
    /// `max(0, 1 - y a)`
    Hinge,
    /// `max(0, 1 - y a)^2`
    SquaredHinge,
}

impl LossKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "quadratic" | "squared" | "ridge" => Self::Quadratic,
            "logistic" => Self::Logistic,
            "hinge" => Self::Hinge,
            "squared_hinge" | "squared-hinge" => Self::SquaredHinge,
            _ => return invalid(format!("unknown loss {s:?}")),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Quadratic => "quadratic",
            Self::Logistic => "logistic",
            Self::Hinge => "hinge",
            Self::SquaredHinge => "squared_hinge",
        }
    }

    /// Smoothness constant of `a -> l(a; y)` (`None` for hinge).
    pub fn smoothness(self) -> Option<f64> {
        match self {
            Self::Quadratic => Some(1.0),
            Self::Logistic => Some(0.25),
            Self::Hinge => None,
            Self::SquaredHinge => Some(2.0),
        }
    }

    pub fn is_smooth(self) -> bool {
        self.smoothness().is_some()
    }

    /// Losses defined only for labels in {-1, +1}.
    pub fn needs_binary_labels(self) -> bool {
        self != Self::Quadratic
    }

    pub fn value<T: Scalar>(self, a: T, y: T) -> T {
        match self {
            Self::Quadratic => (a - y) * (a - y) * T::of(0.5),
            Self::Logistic => {
                let z = y * a;
                if z > T::zero() {
                    (-z).exp().ln_1p()
                } else {
                    -z + z.exp().ln_1p()
                }
            }
            Self::Hinge => (T::one() - y * a).max(T::zero()),
            Self::SquaredHinge => {
                let r = (T::one() - y * a).max(T::zero());
                r * r
            }
        }
    }

    /// Derivative in `a`; the hinge kink returns 0.
    pub fn deriv<T: Scalar>(self, a: T, y: T) -> T {
        match self {
            Self::Quadratic => a - y,
            Self::Logistic => {
                let z = y * a;
                if z > T::zero() {
                    let e = (-z).exp();
                    -y * e / (T::one() + e)
                } else {
                    -y / (T::one() + z.exp())
                }
            }
            Self::Hinge => {
                if T::one() - y * a > T::zero() {
                    -y
                } else {
                    T::zero()
                }
            }
            Self::SquaredHinge => -(y + y) * (T::one() - y * a).max(T::zero()),
        }
    }

    /// Convex conjugate `l*(b)`, `+inf` outside its domain.
    pub fn conjugate<T: Scalar>(self, b: T, y: T) -> T {
        let inf = T::infinity();
        match self {
            Self::Quadratic => b * b * T::of(0.5) + y * b,
            Self::Logistic => {
                let z = -y * b;
                if z < T::zero() || z > T::one() {
                    return inf;
                }
                xlogx(z) + xlogx(T::one() - z)
            }
            Self::Hinge => {
                let z = y * b;
                if z < -T::one() || z > T::zero() {
                    inf
                } else {
                    z
                }
            }
            Self::SquaredHinge => {
                if y * b > T::zero() {
                    inf
                } else {
                    b * b * T::of(0.25) + y * b
                }
            }
        }
    }
}

fn xlogx<T: Scalar>(x: T) -> T {
    if x <= T::zero() {
        T::zero()
    } else {
        x * x.ln()
    }
}

/// Soft thresholding at `t >= 0`.
#[inline]
pub fn soft_threshold<T: Scalar>(z: T, t: T) -> T {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        T::zero()
    }
}

/// Separable regularizer `R(w)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegKind<T> {
    None,
    /// `lambda/2 ||w||^2`
    L2(T),
    /// `lambda ||w||_1`
    L1(T),
    /// `l2/2 ||w||^2 + l1 ||w||_1`
    Elastic { l2: T, l1: T },
}

impl<T: Scalar> RegKind<T> {
    pub fn parse(name: &str, lambda: T, lambda_l1: T) -> Result<Self> {
        Ok(match name {
            "none" => Self::None,
            "l2" => Self::L2(lambda),
            "l1" => Self::L1(lambda),
            "elastic" => Self::Elastic { l2: lambda, l1: lambda_l1 },
            _ => return invalid(format!("unknown regularizer {name:?}")),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::None => true,
            Self::L2(l) | Self::L1(l) => l >= T::zero(),
            Self::Elastic { l2, l1 } => l2 >= T::zero() && l1 >= T::zero(),
        };
        if ok {
            Ok(())
        } else {
            invalid("regularization weights must be nonnegative")
        }
    }

    pub fn l2_weight(&self) -> T {
        match *self {
            Self::L2(l) | Self::Elastic { l2: l, .. } => l,
            _ => T::zero(),
        }
    }

    pub fn l1_weight(&self) -> T {
        match *self {
            Self::L1(l) | Self::Elastic { l1: l, .. } => l,
            _ => T::zero(),
        }
    }

    pub fn value(&self, w: &[T]) -> T {
        let sq = w.iter().fold(T::zero(), |a, &x| a + x * x);
        let abs = w.iter().fold(T::zero(), |a, &x| a + x.abs());
        self.l2_weight() * T::of(0.5) * sq + self.l1_weight() * abs
    }

    /// Scalar proximal map of `step * R`.
    #[inline]
    pub fn prox_scalar(&self, z: T, step: T) -> T {
        match *self {
            Self::None => z,
            Self::L2(l) => z / (T::one() + l * step),
            Self::L1(l) => soft_threshold(z, l * step),
            Self::Elastic { l2, l1 } => soft_threshold(z, l1 * step) / (T::one() + l2 * step),
        }
    }
}

/// Proximal map applied coordinatewise.
pub fn prox<T: Scalar>(reg: &RegKind<T>, z: &[T], step: T) -> Vec<T> {
    z.iter().map(|&v| reg.prox_scalar(v, step)).collect()
}

/// Quadratic `weight/2 ||w - center||^2` added to every component.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchor<T> {
    pub weight: T,
    pub center: Vec<T>,
}

/// Problem-level constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants<T> {
    /// Smoothness bound of every component `f_i` (`None` for hinge).
    pub l: Option<T>,
    /// Strong convexity of `P`.
    pub mu: T,
    /// Smoothness of the scalar loss.
    pub gamma: Option<T>,
    pub kappa: Option<T>,
    /// Lipschitz constant of the scalar loss where it is not smooth.
    pub lipschitz: Option<T>,
}

impl<T: Scalar> Constants<T> {
    pub fn smooth(&self) -> Result<(T, T)> {
        match self.l {
            Some(l) => Ok((l, self.mu)),
            None => unsupported("this solver needs a smooth loss"),
        }
    }
}

/// `P(w) = (1/n) sum_i l(x_i^T w; y_i) + R(w)` over a dataset.
///
/// With `reg_folded` the L2 term is treated as part of each `f_i`
/// (`f_i(w) = l_i(x_i^T w) + lambda/2 ||w||^2`); otherwise it is a separate `R`.
#[derive(Clone, Debug)]
pub struct Problem<'a, T> {
    pub ds: &'a SparseDataset<T>,
    pub loss: LossKind,
    pub reg: RegKind<T>,
    pub reg_folded: bool,
    pub anchor: Option<Anchor<T>>,
}

impl<'a, T: Scalar> Problem<'a, T> {
    pub fn new(ds: &'a SparseDataset<T>, loss: LossKind, reg: RegKind<T>, reg_folded: bool) -> Result<Self> {
        reg.validate()?;
        if reg_folded && reg.l1_weight() > T::zero() {
            return unsupported("only an L2 regularizer can be folded into the components");
        }
        if loss.needs_binary_labels() && ds.labels.iter().any(|&y| y != T::one() && y != -T::one()) {
            return invalid(format!("{} loss needs labels in {{-1, +1}}", loss.name()));
        }
        Ok(Self { ds, loss, reg, reg_folded, anchor: None })
    }

    /// Ridge regression with the regularizer folded into the components.
    pub fn ridge(ds: &'a SparseDataset<T>, lambda: T) -> Self {
        Self::new(ds, LossKind::Quadratic, RegKind::L2(lambda), true).expect("ridge is always valid")
    }

    pub fn n(&self) -> usize {
        self.ds.n()
    }

    pub fn d(&self) -> usize {
        self.ds.d
    }

    /// Same problem with the other regularizer convention.
    pub fn with_folded(&self, folded: bool) -> Result<Self> {
        let mut p = Self::new(self.ds, self.loss, self.reg, folded)?;
        p.anchor = self.anchor.clone();
        Ok(p)
    }

    /// L2 weight inside each component (folded L2 plus anchor).
    pub fn component_l2(&self) -> T {
        let folded = if self.reg_folded { self.reg.l2_weight() } else { T::zero() };
        folded + self.anchor.as_ref().map_or(T::zero(), |a| a.weight)
    }

    /// Regularizer handled outside the components (proximal part).
    pub fn separate_reg(&self) -> RegKind<T> {
        if self.reg_folded {
            RegKind::None
        } else {
            self.reg
        }
    }

    #[inline]
    pub fn deriv(&self, i: usize, margin: T) -> T {
        self.loss.deriv(margin, self.ds.labels[i])
    }

    pub fn objective(&self, w: &[T]) -> T {
        let n = self.n();
        let data = (0..n).fold(T::zero(), |acc, i| acc + self.loss.value(self.ds.dot(i, w), self.ds.labels[i]));
        let mut obj = if n > 0 { data / T::of_usize(n) } else { T::zero() } + self.reg.value(w);
        if let Some(a) = &self.anchor {
            let sq = w.iter().zip(&a.center).fold(T::zero(), |s, (&x, &c)| s + (x - c) * (x - c));
            obj = obj + a.weight * T::of(0.5) * sq;
        }
        obj
    }

    /// Gradient of the smooth part `(1/n) sum f_i`, writing `l'(x_i^T w)` into `derivs`.
    pub fn smooth_gradient_with(&self, w: &[T], derivs: &mut Vec<T>) -> Vec<T> {
        let n = self.n();
        derivs.clear();
        let mut g = vec![T::zero(); self.d()];
        for i in 0..n {
            let di = self.deriv(i, self.ds.dot(i, w));
            derivs.push(di);
            self.ds.axpy(i, di, &mut g);
        }
        let inv_n = T::one() / T::of_usize(n.max(1));
        g.iter_mut().for_each(|v| *v = *v * inv_n);
        if self.reg_folded {
            let lam = self.reg.l2_weight();
            g.iter_mut().zip(w).for_each(|(v, &x)| *v = *v + lam * x);
        }
        if let Some(a) = &self.anchor {
            for ((v, &x), &c) in g.iter_mut().zip(w).zip(&a.center) {
                *v = *v + a.weight * (x - c);
            }
        }
        g
    }

    pub fn smooth_gradient(&self, w: &[T]) -> Vec<T> {
        self.smooth_gradient_with(w, &mut Vec::new())
    }

    /// Norm of the minimal-norm element of the subdifferential of `P` at `w`.
    pub fn grad_norm(&self, w: &[T]) -> T {
        let mut g = self.smooth_gradient(w);
        if !self.reg_folded {
            let (l2, l1) = (self.reg.l2_weight(), self.reg.l1_weight());
            for (v, &x) in g.iter_mut().zip(w) {
                *v = *v + l2 * x;
                if x != T::zero() {
                    *v = *v + l1 * x.signum();
                } else {
                    *v = soft_threshold(*v, l1);
                }
            }
        }
        crate::scalar::norm(&g)
    }

    pub fn constants(&self) -> Constants<T> {
        derive_constants(self)
    }

    /// Adds `eps/2 ||w - w0||^2` to every component.
    pub fn perturb_for_convex(&self, eps: T, w0: &[T]) -> Result<Self> {
        let c = self.constants();
        if c.mu > T::zero() {
            return invalid("perturbation expects a problem without strong convexity");
        }
        let (l, _) = c.smooth()?;
        if !(eps > T::zero() && eps < l) {
            return invalid("need 0 < eps < L");
        }
        if w0.len() != self.d() {
            return invalid("anchor dimension mismatch");
        }
        let mut p = self.clone();
        p.anchor = Some(Anchor { weight: eps, center: w0.to_vec() });
        Ok(p)
    }
}

/// `L = max_i c ||x_i||^2 (+ folded lambda)`, `mu = lambda`, `kappa = L / mu`.
pub fn derive_constants<T: Scalar>(prob: &Problem<'_, T>) -> Constants<T> {
    let ds = prob.ds;
    let max_sq = (0..ds.n()).map(|i| ds.row_norm_sq(i)).fold(T::zero(), T::max);
    let anchor = prob.anchor.as_ref().map_or(T::zero(), |a| a.weight);
    let mu = prob.reg.l2_weight() + anchor;
    match prob.loss.smoothness() {
        Some(c) => {
            let l = T::of(c) * max_sq + prob.component_l2();
            Constants {
                l: Some(l),
                mu,
                gamma: Some(T::of(c)),
                kappa: (mu > T::zero()).then(|| l / mu),
                lipschitz: None,
            }
        }
        None => Constants { l: None, mu, gamma: None, kappa: None, lipschitz: Some(T::one()) },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert_eq!(LossKind::Quadratic.value(3.0, 1.0), 2.0);
        assert_eq!(LossKind::Hinge.value(1.0, 1.0), 0.0);
        assert!((LossKind::Logistic.value(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!((LossKind::Logistic.value(0.0, -1.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn derivatives() {
        assert_eq!(LossKind::Quadratic.deriv(3.0, 1.0), 2.0);
        assert_eq!(LossKind::Logistic.deriv(0.0, 1.0), -0.5);
        assert_eq!(LossKind::Hinge.deriv(1.0, 1.0), 0.0);
        assert_eq!(LossKind::Hinge.deriv(0.5, 1.0), -1.0);
    }

    #[test]
    fn conjugates() {
        assert_eq!(LossKind::Quadratic.conjugate(1.0, 2.0), 2.5);
        assert_eq!(LossKind::Hinge.conjugate(-0.5, 1.0), -0.5);
        assert_eq!(LossKind::Hinge.conjugate(0.5, 1.0), f64::INFINITY);
        assert_eq!(LossKind::Logistic.conjugate(0.0, 1.0), 0.0);
        assert_eq!(LossKind::Logistic.conjugate(-1.0, 1.0), 0.0);
        assert_eq!(LossKind::SquaredHinge.conjugate(0.5, 1.0), f64::INFINITY);
    }

    #[test]
    fn logistic_is_stable_far_out() {
        let v: f64 = LossKind::Logistic.value(-800.0, 1.0);
        assert!((v - 800.0).abs() < 1e-9);
        assert_eq!(LossKind::Logistic.value(800.0, 1.0), 0.0);
        assert!(LossKind::Logistic.deriv(-800.0f64, 1.0).is_finite());
    }

    #[test]
    fn prox_examples() {
        assert_eq!(prox(&RegKind::L1(1.0), &[2.0, -0.5], 1.0), vec![1.0, 0.0]);
        assert_eq!(prox(&RegKind::L2(1.0), &[4.0], 1.0), vec![2.0]);
        assert_eq!(prox(&RegKind::Elastic { l2: 1.0, l1: 1.0 }, &[4.0], 1.0), vec![1.5]);
        assert_eq!(prox(&RegKind::<f64>::None, &[4.0], 1.0), vec![4.0]);
    }

    #[test]
    fn elastic_prox_is_the_argmin() {
        // argmin_x (x - 4)^2 / 2 + x^2 / 2 + |x| on a fine grid.
        let f = |x: f64| 0.5 * (x - 4.0) * (x - 4.0) + 0.5 * x * x + x.abs();
        let best = (0..=40000).map(|k| -2.0 + k as f64 * 1e-4).min_by(|a, b| f(*a).partial_cmp(&f(*b)).unwrap()).unwrap();
        assert!((best - 1.5).abs() < 1e-4);
    }

    #[test]
    fn constants_logistic_unit_rows() {
        let n = 8;
        let rows = (0..n).map(|i| { let mut r = vec![0.0; n]; r[i] = 1.0; r }).collect::<Vec<_>>();
        let labels = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect::<Vec<_>>();
        let ds = SparseDataset::from_dense(&rows, &labels);
        let lam = 1.0 / n as f64;
        let p = Problem::new(&ds, LossKind::Logistic, RegKind::L2(lam), true).unwrap();
        let c = p.constants();
        assert!((c.l.unwrap() - (0.25 + lam)).abs() < 1e-15);
        assert_eq!(c.mu, lam);
    }

    #[test]
    fn constants_single_quadratic() {
        let ds = SparseDataset::from_dense(&[vec![1.0, 0.0]], &[0.0]);
        let p = Problem::new(&ds, LossKind::Quadratic, RegKind::None, false).unwrap();
        let c = p.constants();
        assert_eq!((c.l, c.mu, c.kappa), (Some(1.0), 0.0, None));
    }

    #[test]
    fn hinge_has_no_smoothness() {
        let ds = SparseDataset::from_dense(&[vec![1.0]], &[1.0]);
        let p = Problem::new(&ds, LossKind::Hinge, RegKind::L2(0.1), false).unwrap();
        let c = p.constants();
        assert!(c.smooth().is_err());
        assert_eq!(c.lipschitz, Some(1.0));
    }

    #[test]
    fn labels_validated_for_binary_losses() {
        let ds = SparseDataset::from_dense(&[vec![1.0]], &[0.5]);
        assert!(Problem::new(&ds, LossKind::Logistic, RegKind::None, false).is_err());
        assert!(Problem::new(&ds, LossKind::Quadratic, RegKind::None, false).is_ok());
        assert!(Problem::new(&ds, LossKind::Quadratic, RegKind::L1(1.0), true).is_err());
    }

    #[test]
    fn perturbation() {
        let ds = SparseDataset::from_dense(&[vec![1.0, 2.0], vec![0.5, -1.0]], &[1.0, 0.0]);
        let p = Problem::new(&ds, LossKind::Quadratic, RegKind::None, true).unwrap();
        let w0 = vec![0.3, -0.2];
        let q = p.perturb_for_convex(0.01, &w0).unwrap();
        assert_eq!(q.constants().mu, 0.01);
        assert_eq!(p.smooth_gradient(&w0), q.smooth_gradient(&w0));
        let (l, _) = p.constants().smooth().unwrap();
        assert!(q.constants().kappa.unwrap() <= 2.0 * l / 0.01);
        assert!(p.perturb_for_convex(100.0, &w0).is_err());
    }
}
