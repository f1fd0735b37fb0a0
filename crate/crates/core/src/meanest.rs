//! Randomized distributed mean estimation: encoders, the averaging decoder,
//! communication-cost models, random rotations and parameter optimization.

use crate::error::{invalid, unsupported, Result};
use crate::rng::{Rng, SubsetSampler};
use crate::scalar::Scalar;

/// `n` vectors of a common dimension `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorBatch<T> {
    rows: Vec<Vec<T>>,
    d: usize,
}

impl<T: Scalar> VectorBatch<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return invalid("all vectors must have the same dimension");
        }
        Ok(Self { rows, d })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.rows[i]
    }

    /// `X = (1/n) sum_i X_i`.
    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.d];
        for r in &self.rows {
            for (a, &x) in m.iter_mut().zip(r) {
                *a = *a + x;
            }
        }
        let n = T::of_usize(self.n().max(1));
        m.iter_mut().for_each(|a| *a = *a / n);
        m
    }

    pub fn row_means(&self) -> Vec<T> {
        let d = T::of_usize(self.d.max(1));
        self.rows.iter().map(|r| r.iter().fold(T::zero(), |s, &x| s + x) / d).collect()
    }

    /// `R = (1/n) sum_i ||X_i||^2`.
    pub fn avg_sq_norm(&self) -> T {
        let s = self.rows.iter().fold(T::zero(), |a, r| a + crate::scalar::norm_sq(r));
        s / T::of_usize(self.n().max(1))
    }

    /// Number of entries with `X_i(j) != mu_i`.
    pub fn support_size(&self, centers: &[T]) -> usize {
        self.rows
            .iter()
            .zip(centers)
            .map(|(r, &c)| r.iter().filter(|&&x| x != c).count())
            .sum()
    }
}

/// Encoding protocol applied independently on every node.
#[derive(Clone, Debug, PartialEq)]
pub enum EncoderSpec<T> {
    /// Entry kept with probability `p[i][j]` (rescaled around `centers[i]`), else `centers[i]`.
    Variable { p: Vec<Vec<T>>, centers: Vec<T> },
    /// Exactly `k` random entries kept per node.
    FixedSupport { k: usize, centers: Vec<T> },
    /// Stochastic rounding to the node's min or max.
    BinaryQuant,
    /// Stochastic rounding to the endpoints of `2^bits` equal intervals of `[min, max]`.
    BitQuant { bits: u32 },
    /// Three-valued encoder with per-node levels `lo`, `hi`.
    Ternary { p_lo: Vec<Vec<T>>, p_hi: Vec<Vec<T>>, lo: Vec<T>, hi: Vec<T> },
}

impl<T: Scalar> EncoderSpec<T> {
    /// Variable encoder with a common probability and row-mean centers.
    pub fn uniform(batch: &VectorBatch<T>, p: T) -> Self {
        Self::Variable { p: vec![vec![p; batch.d()]; batch.n()], centers: batch.row_means() }
    }

    /// Ternary encoder on `[min_i, max_i]` whose third value is the input itself:
    /// `p' = p (max - x)/D`, `p'' = p (x - min)/D`.
    pub fn ternary_from_range(batch: &VectorBatch<T>, p: T) -> Self {
        let mut p_lo = Vec::with_capacity(batch.n());
        let mut p_hi = Vec::with_capacity(batch.n());
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for r in batch.rows() {
            let (mn, mx) = min_max(r);
            let delta = mx - mn;
            let (a, b): (Vec<T>, Vec<T>) = if delta > T::zero() {
                r.iter().map(|&x| (p * (mx - x) / delta, p * (x - mn) / delta)).unzip()
            } else {
                (vec![T::zero(); r.len()], vec![T::zero(); r.len()])
            };
            p_lo.push(a);
            p_hi.push(b);
            lo.push(mn);
            hi.push(mx);
        }
        Self::Ternary { p_lo, p_hi, lo, hi }
    }

    pub fn validate(&self, batch: &VectorBatch<T>) -> Result<()> {
        let (n, d) = (batch.n(), batch.d());
        let shape_ok = |m: &Vec<Vec<T>>| m.len() == n && m.iter().all(|r| r.len() == d);
        match self {
            Self::Variable { p, centers } => {
                if !shape_ok(p) || centers.len() != n {
                    return invalid("probability matrix or centers have the wrong shape");
                }
                if p.iter().flatten().any(|&v| !(v > T::zero() && v <= T::one())) {
                    return invalid("probabilities must lie in (0, 1]");
                }
            }
            Self::FixedSupport { k, centers } => {
                if *k == 0 || *k > d || centers.len() != n {
                    return invalid("need 1 <= k <= d and one center per node");
                }
            }
            Self::BinaryQuant => {}
            Self::BitQuant { bits } => {
                if *bits == 0 || *bits > 30 {
                    return invalid("bits must lie in 1..=30");
                }
            }
            Self::Ternary { p_lo, p_hi, lo, hi } => {
                if !shape_ok(p_lo) || !shape_ok(p_hi) || lo.len() != n || hi.len() != n {
                    return invalid("ternary parameters have the wrong shape");
                }
                for (a, b) in p_lo.iter().flatten().zip(p_hi.iter().flatten()) {
                    if *a < T::zero() || *b < T::zero() || *a + *b > T::one() {
                        return invalid("ternary probabilities must be nonnegative with p' + p'' <= 1");
                    }
                }
            }
        }
        Ok(())
    }
}

fn min_max<T: Scalar>(r: &[T]) -> (T, T) {
    r.iter().fold((T::infinity(), T::neg_infinity()), |(a, b), &x| (a.min(x), b.max(x)))
}

/// Endpoints of the quantization interval containing `x`.
fn bracket<T: Scalar>(x: T, lo: T, hi: T, levels: usize) -> (T, T) {
    let width = (hi - lo) / T::of_usize(levels);
    let t = ((x - lo) / width).floor();
    let l = if t < T::zero() { 0 } else { t.to_usize().unwrap_or(levels).min(levels - 1) };
    let a = lo + T::of_usize(l) * width;
    let b = if l + 1 == levels { hi } else { lo + T::of_usize(l + 1) * width };
    (a, b)
}

/// Walsh-Hadamard rotation `Q = (1/sqrt(D)) H diag(signs)` on zero-padded vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Rotation {
    pub d: usize,
    /// Padded dimension (next power of two).
    pub dim: usize,
    signs: Vec<bool>,
}

/// In-place unnormalized fast Walsh-Hadamard transform.
pub fn fwht<T: Scalar>(x: &mut [T]) {
    let n = x.len();
    assert!(n.is_power_of_two(), "length must be a power of two");
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for i in start..start + h {
                let (a, b) = (x[i], x[i + h]);
                x[i] = a + b;
                x[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

impl Rotation {
    pub fn new(d: usize, seed: u64) -> Self {
        let dim = d.max(1).next_power_of_two();
        let mut rng = Rng::derive(seed, &[0x524f_54]);
        let signs = (0..dim).map(|_| rng.bernoulli(0.5)).collect();
        Self { d, dim, signs }
    }

    pub fn apply<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let mut z = vec![T::zero(); self.dim];
        for (j, &v) in x.iter().enumerate() {
            z[j] = if self.signs[j] { -v } else { v };
        }
        fwht(&mut z);
        let s = T::one() / T::of_usize(self.dim).sqrt();
        z.iter_mut().for_each(|v| *v = *v * s);
        z
    }

    /// `Q^T z`, truncated to the original `d` coordinates.
    pub fn invert<T: Scalar>(&self, z: &[T]) -> Vec<T> {
        let mut x = z.to_vec();
        x.resize(self.dim, T::zero());
        fwht(&mut x);
        let s = T::one() / T::of_usize(self.dim).sqrt();
        x.truncate(self.d);
        for (j, v) in x.iter_mut().enumerate() {
            *v = *v * s;
            if self.signs[j] {
                *v = -*v;
            }
        }
        x
    }
}

/// Rotates every vector of the batch with one shared rotation.
pub fn rotate<T: Scalar>(batch: &VectorBatch<T>, seed: u64) -> (VectorBatch<T>, Rotation) {
    let rot = Rotation::new(batch.d(), seed);
    let rows = batch.rows().iter().map(|r| rot.apply(r)).collect();
    (VectorBatch { rows, d: rot.dim }, rot)
}

pub fn unrotate<T: Scalar>(batch: &VectorBatch<T>, rot: &Rotation) -> VectorBatch<T> {
    let rows = batch.rows().iter().map(|r| rot.invert(r)).collect();
    VectorBatch { rows, d: rot.d }
}

/// Encoded vectors with the bookkeeping needed for cost accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedBatch<T> {
    pub y: Vec<Vec<T>>,
    /// Value meaning "not transmitted" on each node (min for the quantizers).
    pub centers: Vec<T>,
    /// `|S_i| = |{j : Y_i(j) != centers[i]}|`.
    pub supports: Vec<usize>,
    /// Entries selected by the sampling step on each node.
    pub selected: Vec<usize>,
    pub kind: EncodedKind,
    /// Rotation to undo before averaging.
    pub rotation: Option<Rotation>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodedKind {
    Variable,
    FixedSupport { k: usize },
    Quantized { levels: usize },
    Ternary,
}

/// Encodes every node independently with stream `derive(seed, i)`.
pub fn encode<T: Scalar>(batch: &VectorBatch<T>, spec: &EncoderSpec<T>, seed: u64) -> Result<EncodedBatch<T>> {
    spec.validate(batch)?;
    let (n, d) = (batch.n(), batch.d());
    let mut y = Vec::with_capacity(n);
    let mut centers = Vec::with_capacity(n);
    let mut selected = Vec::with_capacity(n);
    let mut subsets = SubsetSampler::new(d);
    for (i, x) in batch.rows().iter().enumerate() {
        let mut rng = Rng::derive(seed, &[i as u64]);
        let mut chosen = 0usize;
        let (row, c) = match spec {
            EncoderSpec::Variable { p, centers: mu } => {
                let m = mu[i];
                let row = x
                    .iter()
                    .zip(&p[i])
                    .map(|(&v, &pij)| {
                        if v == m {
                            return m;
                        }
                        if pij == T::one() || rng.bernoulli(pij.f64()) {
                            chosen += 1;
                            v / pij - (T::one() - pij) / pij * m
                        } else {
                            m
                        }
                    })
                    .collect::<Vec<_>>();
                (row, m)
            }
            EncoderSpec::FixedSupport { k, centers: mu } => {
                let m = mu[i];
                let mut row = vec![m; d];
                let (dd, kk) = (T::of_usize(d), T::of_usize(*k));
                for &j in subsets.draw(&mut rng, *k) {
                    row[j] = dd * x[j] / kk - (dd - kk) / kk * m;
                }
                chosen = *k;
                (row, m)
            }
            EncoderSpec::BinaryQuant => {
                let (mn, mx) = min_max(x);
                let delta = mx - mn;
                if !(delta > T::zero()) {
                    (x.clone(), mn)
                } else {
                    let row = x
                        .iter()
                        .map(|&v| if rng.bernoulli(((v - mn) / delta).f64()) { mx } else { mn })
                        .collect();
                    chosen = d;
                    (row, mn)
                }
            }
            EncoderSpec::BitQuant { bits } => {
                let (mn, mx) = min_max(x);
                let levels = 1usize << bits;
                if !(mx - mn > T::zero()) {
                    (x.clone(), mn)
                } else {
                    let row = x
                        .iter()
                        .map(|&v| {
                            let (a, b) = bracket(v, mn, mx, levels);
                            if rng.bernoulli(((v - a) / (b - a)).f64()) {
                                b
                            } else {
                                a
                            }
                        })
                        .collect();
                    chosen = d;
                    (row, mn)
                }
            }
            EncoderSpec::Ternary { p_lo, p_hi, lo, hi } => {
                let row = x
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let (a, b) = (p_lo[i][j], p_hi[i][j]);
                        let u = T::of(rng.uniform());
                        if u < a {
                            lo[i]
                        } else if u < a + b {
                            hi[i]
                        } else {
                            (v - a * lo[i] - b * hi[i]) / (T::one() - a - b)
                        }
                    })
                    .collect();
                chosen = d;
                (row, lo[i])
            }
        };
        selected.push(chosen);
        centers.push(c);
        y.push(row);
    }
    let supports = y
        .iter()
        .zip(&centers)
        .map(|(r, &c)| r.iter().filter(|&&v| v != c).count())
        .collect();
    let kind = match spec {
        EncoderSpec::Variable { .. } => EncodedKind::Variable,
        EncoderSpec::FixedSupport { k, .. } => EncodedKind::FixedSupport { k: *k },
        EncoderSpec::BinaryQuant => EncodedKind::Quantized { levels: 2 },
        EncoderSpec::BitQuant { bits } => EncodedKind::Quantized { levels: (1usize << bits) + 1 },
        EncoderSpec::Ternary { .. } => EncodedKind::Ternary,
    };
    Ok(EncodedBatch { y, centers, supports, selected, kind, rotation: None })
}

/// Rotates the batch, builds the encoder for the rotated data with `make_spec`,
/// encodes, and records the rotation for the decoder. When `d` is padded up to a
/// power of two, the MSE of the rotated batch bounds the error from above.
pub fn encode_rotated<T: Scalar>(
    batch: &VectorBatch<T>,
    rotation_seed: u64,
    make_spec: impl FnOnce(&VectorBatch<T>) -> EncoderSpec<T>,
    seed: u64,
) -> Result<EncodedBatch<T>> {
    let (rotated, rot) = rotate(batch, rotation_seed);
    let spec = make_spec(&rotated);
    let mut enc = encode(&rotated, &spec, seed)?;
    enc.rotation = Some(rot);
    Ok(enc)
}

/// `(1/n) sum_i Y_i`, undoing the rotation first when there is one.
pub fn decode_average<T: Scalar>(enc: &EncodedBatch<T>) -> Vec<T> {
    let rows: Vec<Vec<T>> = match &enc.rotation {
        Some(rot) => enc.y.iter().map(|r| rot.invert(r)).collect(),
        None => enc.y.clone(),
    };
    let d = rows.first().map_or(0, Vec::len);
    let mut m = vec![T::zero(); d];
    for r in &rows {
        for (a, &v) in m.iter_mut().zip(r) {
            *a = *a + v;
        }
    }
    let n = T::of_usize(rows.len().max(1));
    m.iter_mut().for_each(|a| *a = *a / n);
    m
}

/// Exact mean squared error `E ||decode - X||^2` of the averaging decoder.
pub fn analytic_mse<T: Scalar>(batch: &VectorBatch<T>, spec: &EncoderSpec<T>) -> Result<T> {
    spec.validate(batch)?;
    let n = T::of_usize(batch.n());
    let d = batch.d();
    let mut total = T::zero();
    for (i, x) in batch.rows().iter().enumerate() {
        let var = match spec {
            EncoderSpec::Variable { p, centers } => x.iter().zip(&p[i]).fold(T::zero(), |s, (&v, &pij)| {
                let e = v - centers[i];
                s + (T::one() / pij - T::one()) * e * e
            }),
            EncoderSpec::FixedSupport { k, centers } => {
                let kk = T::of_usize(*k);
                let sq = x.iter().fold(T::zero(), |s, &v| s + (v - centers[i]) * (v - centers[i]));
                (T::of_usize(d) - kk) / kk * sq
            }
            EncoderSpec::BinaryQuant => {
                let (mn, mx) = min_max(x);
                x.iter().fold(T::zero(), |s, &v| s + (mx - v) * (v - mn))
            }
            EncoderSpec::BitQuant { bits } => {
                let (mn, mx) = min_max(x);
                if !(mx - mn > T::zero()) {
                    T::zero()
                } else {
                    x.iter().fold(T::zero(), |s, &v| {
                        let (a, b) = bracket(v, mn, mx, 1usize << bits);
                        s + (b - v) * (v - a)
                    })
                }
            }
            EncoderSpec::Ternary { p_lo, p_hi, lo, hi } => x.iter().enumerate().fold(T::zero(), |s, (j, &v)| {
                let (a, b) = (p_lo[i][j], p_hi[i][j]);
                let (e1, e2) = (v - lo[i], v - hi[i]);
                let rest = T::one() - a - b;
                let third = if rest > T::zero() {
                    let m = a * e1 + b * e2;
                    m * m / rest
                } else {
                    T::zero()
                };
                s + a * e1 * e1 + b * e2 * e2 + third
            }),
        };
        total = total + var;
    }
    Ok(total / (n * n))
}

/// Monte Carlo estimate of the MSE and its standard error.
pub fn empirical_mse<T: Scalar>(
    batch: &VectorBatch<T>,
    spec: &EncoderSpec<T>,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let truth = batch.mean();
    let mut errs = Vec::with_capacity(samples);
    for s in 0..samples {
        let enc = encode(batch, spec, crate::rng::derive_seed(seed, &[s as u64]))?;
        let est = decode_average(&enc);
        errs.push(crate::scalar::dist(&est, &truth).f64().powi(2));
    }
    Ok(mean_stderr(&errs))
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// How encoded vectors are put on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    /// Every entry as a float.
    Naive,
    /// Center, a `d`-bit mask, and the kept values.
    VaryingLength,
    /// Center plus (index, value) pairs.
    Sparse,
    /// Center, the seed that generated the support, and the kept values.
    SparseFixed,
    /// Two floats plus `ceil(log2 levels)` bits per entry.
    Binary,
}

impl Protocol {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "naive" => Self::Naive,
            "varying" | "varying_length" => Self::VaryingLength,
            "sparse" => Self::Sparse,
            "sparse_fixed" => Self::SparseFixed,
            "binary" => Self::Binary,
            _ => return invalid(format!("unknown protocol {s:?}")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostModel {
    /// Bits per float.
    pub r: f64,
    /// Bits per node center.
    pub r_center: f64,
    /// Bits per random seed.
    pub r_seed: f64,
    pub protocol: Protocol,
}

impl CostModel {
    pub fn new(protocol: Protocol) -> Self {
        Self { r: 32.0, r_center: 32.0, r_seed: 64.0, protocol }
    }
}

fn ceil_log2(x: usize) -> f64 {
    if x <= 1 {
        0.0
    } else {
        (usize::BITS - (x - 1).leading_zeros()) as f64
    }
}

/// Expected `sum_j p_ij` over entries with `X_i(j) != mu_i`, per node.
fn expected_kept<T: Scalar>(batch: &VectorBatch<T>, spec: &EncoderSpec<T>) -> Option<Vec<f64>> {
    match spec {
        EncoderSpec::Variable { p, centers } => Some(
            batch
                .rows()
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    x.iter().zip(&p[i]).filter(|(&v, _)| v != centers[i]).map(|(_, &q)| q.f64()).sum()
                })
                .collect(),
        ),
        EncoderSpec::FixedSupport { k, .. } => Some(vec![*k as f64; batch.n()]),
        EncoderSpec::BinaryQuant => Some(
            batch
                .rows()
                .iter()
                .map(|x| {
                    let (mn, mx) = min_max(x);
                    if mx > mn {
                        x.iter().map(|&v| ((v - mn) / (mx - mn)).f64()).sum()
                    } else {
                        0.0
                    }
                })
                .collect(),
        ),
        _ => None,
    }
}

fn quant_levels<T>(spec: &EncoderSpec<T>) -> Option<usize> {
    match spec {
        EncoderSpec::BinaryQuant => Some(2),
        EncoderSpec::BitQuant { bits } => Some((1usize << bits) + 1),
        _ => None,
    }
}

/// Expected number of bits sent by all nodes.
pub fn expected_bits<T: Scalar>(batch: &VectorBatch<T>, spec: &EncoderSpec<T>, cost: &CostModel) -> Result<f64> {
    spec.validate(batch)?;
    let (n, d) = (batch.n() as f64, batch.d());
    let df = d as f64;
    match cost.protocol {
        Protocol::Naive => Ok(n * df * cost.r),
        Protocol::Binary => match quant_levels(spec) {
            Some(l) => Ok(n * 2.0 * cost.r + n * df * ceil_log2(l)),
            None => unsupported("the binary protocol needs a quantizing encoder"),
        },
        Protocol::VaryingLength | Protocol::Sparse => {
            let kept = expected_kept(batch, spec).ok_or_else(|| {
                crate::Error::Capability("this encoder has no sparse representation".into())
            })?;
            let total: f64 = kept.iter().sum();
            Ok(if cost.protocol == Protocol::Sparse {
                n * cost.r_center + (ceil_log2(d) + cost.r) * total
            } else {
                n * (cost.r_center + df) + cost.r * total
            })
        }
        Protocol::SparseFixed => match spec {
            EncoderSpec::FixedSupport { k, .. } => Ok(n * (cost.r_center + cost.r_seed) + n * *k as f64 * cost.r),
            EncoderSpec::Variable { p, .. } if is_uniform(p) => {
                let q = p.first().and_then(|r| r.first()).map_or(0.0, |v| v.f64());
                Ok(n * (cost.r_center + cost.r_seed) + n * q * df * cost.r)
            }
            _ => unsupported("the fixed-sparse protocol needs a fixed-support or uniform-probability encoder"),
        },
    }
}

fn is_uniform<T: Scalar>(p: &[Vec<T>]) -> bool {
    let first = p.first().and_then(|r| r.first()).copied();
    first.is_some_and(|f| p.iter().flatten().all(|&v| v == f))
}

/// Bits actually sent for an encoded batch.
pub fn realized_bits<T: Scalar>(enc: &EncodedBatch<T>, cost: &CostModel) -> Result<f64> {
    let n = enc.y.len() as f64;
    let d = enc.y.first().map_or(0, Vec::len);
    let df = d as f64;
    let support: f64 = enc.supports.iter().map(|&s| s as f64).sum();
    match (cost.protocol, enc.kind) {
        (Protocol::Naive, _) => Ok(n * df * cost.r),
        (Protocol::Binary, EncodedKind::Quantized { levels }) => Ok(n * 2.0 * cost.r + n * df * ceil_log2(levels)),
        (Protocol::Binary, _) => unsupported("the binary protocol needs a quantizing encoder"),
        (Protocol::Sparse, EncodedKind::Variable | EncodedKind::FixedSupport { .. } | EncodedKind::Quantized { levels: 2 }) => {
            Ok(n * cost.r_center + (ceil_log2(d) + cost.r) * support)
        }
        (Protocol::VaryingLength, EncodedKind::Variable | EncodedKind::FixedSupport { .. } | EncodedKind::Quantized { levels: 2 }) => {
            Ok(n * (cost.r_center + df) + cost.r * support)
        }
        (Protocol::SparseFixed, EncodedKind::FixedSupport { k }) => Ok(n * (cost.r_center + cost.r_seed) + n * k as f64 * cost.r),
        (Protocol::SparseFixed, EncodedKind::Variable) => {
            let sel: f64 = enc.selected.iter().map(|&s| s as f64).sum();
            Ok(n * (cost.r_center + cost.r_seed) + sel * cost.r)
        }
        _ => unsupported("protocol and encoder are incompatible"),
    }
}

/// MSE-optimal probabilities for fixed centers under the budget `sum p_ij = budget`
/// over the support `S`; entries outside `S` get `p = 1`.
pub fn optimal_probabilities<T: Scalar>(batch: &VectorBatch<T>, centers: &[T], budget: f64) -> Result<Vec<Vec<T>>> {
    if !(budget > 0.0) {
        return invalid("budget must be positive");
    }
    if centers.len() != batch.n() {
        return invalid("one center per node required");
    }
    let mut p = vec![vec![T::one(); batch.d()]; batch.n()];
    let mut free = Vec::new();
    for (i, x) in batch.rows().iter().enumerate() {
        for (j, &v) in x.iter().enumerate() {
            if v != centers[i] {
                free.push((i, j, (v - centers[i]).abs().f64()));
            }
        }
    }
    if budget >= free.len() as f64 {
        return Ok(p);
    }
    let mut remaining = budget;
    loop {
        let total: f64 = free.iter().map(|e| e.2).sum();
        let scale = remaining / total;
        let (over, under): (Vec<_>, Vec<_>) = free.iter().partition(|e| e.2 * scale >= 1.0);
        if over.is_empty() {
            for &(i, j, a) in &free {
                p[i][j] = T::of(a * scale);
            }
            return Ok(p);
        }
        remaining -= over.len() as f64;
        free = under;
        if free.is_empty() || remaining <= 0.0 {
            return Ok(p);
        }
    }
}

/// `mu_i = sum_j w_ij X_i(j) / sum_j w_ij` with `w_ij = 1/p_ij - 1`; row mean when all weights vanish.
pub fn optimal_centers<T: Scalar>(batch: &VectorBatch<T>, p: &[Vec<T>]) -> Vec<T> {
    let means = batch.row_means();
    batch
        .rows()
        .iter()
        .zip(p)
        .zip(means)
        .map(|((x, pr), mean)| {
            let (mut num, mut den) = (T::zero(), T::zero());
            for (&v, &q) in x.iter().zip(pr) {
                let w = T::one() / q - T::one();
                num = num + w * v;
                den = den + w;
            }
            if den > T::zero() {
                num / den
            } else {
                mean
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AltMinResult<T> {
    pub p: Vec<Vec<T>>,
    pub centers: Vec<T>,
    /// Analytic MSE of the initialization and of every accepted iteration.
    pub mse_trace: Vec<T>,
}

/// Alternates optimal centers and optimal probabilities from (row means, optimal p),
/// keeping an iteration only if it lowers the MSE by a relative `tol` or more.
pub fn alternating_minimization<T: Scalar>(
    batch: &VectorBatch<T>,
    budget: f64,
    max_iters: usize,
    tol: f64,
) -> Result<AltMinResult<T>> {
    let mut centers = batch.row_means();
    let mut p = optimal_probabilities(batch, &centers, budget)?;
    let mse = |p: &Vec<Vec<T>>, c: &Vec<T>| analytic_mse(batch, &EncoderSpec::Variable { p: p.clone(), centers: c.clone() });
    let mut current = mse(&p, &centers)?;
    let mut trace = vec![current];
    for _ in 0..max_iters {
        let c2 = optimal_centers(batch, &p);
        let p2 = optimal_probabilities(batch, &c2, budget)?;
        let next = mse(&p2, &c2)?;
        let improvement = if current > T::zero() { ((current - next) / current).f64() } else { 0.0 };
        if !(improvement >= tol) || next > current {
            break;
        }
        centers = c2;
        p = p2;
        current = next;
        trace.push(current);
    }
    Ok(AltMinResult { p, centers, mse_trace: trace })
}

/// Encoding strategies compared on the cost/error trade-off.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Uniform probabilities, row-mean centers.
    Uniform,
    /// Optimal probabilities, row-mean centers.
    OptimalP,
    /// Alternating minimization over both.
    OptimalBoth,
    /// Binary quantization (a single point).
    Binary,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::OptimalP => "optimal_p",
            Self::OptimalBoth => "optimal_both",
            Self::Binary => "binary",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "uniform" => Self::Uniform,
            "optimal_p" => Self::OptimalP,
            "optimal_both" => Self::OptimalBoth,
            "binary" => Self::Binary,
            _ => return invalid(format!("unknown strategy {s:?}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub strategy: Strategy,
    pub budget: f64,
    pub expected_bits: f64,
    pub analytic_mse: f64,
    pub empirical_mse: f64,
    pub mc_stderr: f64,
}

/// Builds the encoder a strategy uses at `budget`.
pub fn strategy_spec<T: Scalar>(batch: &VectorBatch<T>, strategy: Strategy, budget: f64) -> Result<EncoderSpec<T>> {
    Ok(match strategy {
        Strategy::Uniform => {
            let centers = batch.row_means();
            let s = batch.support_size(&centers);
            let q = if s == 0 { 1.0 } else { (budget / s as f64).min(1.0) };
            let p = batch
                .rows()
                .iter()
                .zip(&centers)
                .map(|(x, &c)| x.iter().map(|&v| if v == c { T::one() } else { T::of(q) }).collect())
                .collect();
            EncoderSpec::Variable { p, centers }
        }
        Strategy::OptimalP => {
            let centers = batch.row_means();
            EncoderSpec::Variable { p: optimal_probabilities(batch, &centers, budget)?, centers }
        }
        Strategy::OptimalBoth => {
            let r = alternating_minimization(batch, budget, 50, 1e-9)?;
            EncoderSpec::Variable { p: r.p, centers: r.centers }
        }
        Strategy::Binary => EncoderSpec::BinaryQuant,
    })
}

/// Expected bits, analytic and empirical MSE for every (strategy, budget) cell.
/// Sparse-protocol costs for the probability strategies, binary-protocol cost for binary.
pub fn tradeoff_sweep<T: Scalar>(
    batch: &VectorBatch<T>,
    budgets: &[f64],
    strategies: &[Strategy],
    cost: &CostModel,
    samples: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &strategy in strategies {
        let cells: &[f64] = if strategy == Strategy::Binary { &budgets[..budgets.len().min(1)] } else { budgets };
        for &budget in cells {
            let spec = strategy_spec(batch, strategy, budget)?;
            let model = CostModel {
                protocol: if strategy == Strategy::Binary { Protocol::Binary } else { Protocol::Sparse },
                ..*cost
            };
            let bits = expected_bits(batch, &spec, &model)?;
            let analytic = analytic_mse(batch, &spec)?.f64();
            let (emp, se) = empirical_mse(batch, &spec, samples, crate::rng::derive_seed(seed, &[budget.to_bits()]))?;
            rows.push(SweepRow { strategy, budget, expected_bits: bits, analytic_mse: analytic, empirical_mse: emp, mc_stderr: se });
        }
    }
    Ok(rows)
}

/// Distribution of synthetic batch entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BatchDist {
    Gauss,
    Laplace,
    /// Chi-squared with the given degrees of freedom.
    ChiSq(u32),
}

impl BatchDist {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gauss" | "gaussian" => Ok(Self::Gauss),
            "laplace" => Ok(Self::Laplace),
            _ => match s.strip_prefix("chisq") {
                Some("") => Ok(Self::ChiSq(2)),
                Some(k) => k
                    .trim_start_matches(['(', '_'])
                    .trim_end_matches(')')
                    .parse()
                    .map(Self::ChiSq)
                    .or_else(|_| invalid(format!("bad chi-squared spec {s:?}"))),
                None => invalid(format!("unknown distribution {s:?}")),
            },
        }
    }

    fn draw(self, rng: &mut Rng) -> f64 {
        match self {
            Self::Gauss => rng.normal(),
            Self::Laplace => {
                let u = rng.uniform() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
            }
            Self::ChiSq(k) => (0..k).map(|_| rng.normal().powi(2)).sum(),
        }
    }
}

pub fn synth_batch<T: Scalar>(dist: BatchDist, n: usize, d: usize, seed: u64) -> VectorBatch<T> {
    let mut rng = Rng::derive(seed, &[0x4d45_414e]);
    let rows = (0..n).map(|_| (0..d).map(|_| T::of(dist.draw(&mut rng))).collect()).collect();
    VectorBatch { rows, d }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lossless_when_p_is_one() {
        let b = VectorBatch::<f64>::new(vec![vec![1.0, -2.0, 3.5], vec![0.0, 4.0, 1.0]]).unwrap();
        let spec = EncoderSpec::uniform(&b, 1.0);
        let enc = encode(&b, &spec, 5).unwrap();
        assert_eq!(enc.y, b.rows().to_vec());
        assert_eq!(analytic_mse(&b, &spec).unwrap(), 0.0);
    }

    #[test]
    fn binary_on_constant_vector_passes_through() {
        let b = VectorBatch::<f64>::new(vec![vec![2.5; 4]]).unwrap();
        let enc = encode(&b, &EncoderSpec::BinaryQuant, 1).unwrap();
        assert_eq!(enc.y[0], vec![2.5; 4]);
    }

    #[test]
    fn binary_endpoints() {
        let b = VectorBatch::<f64>::new(vec![vec![0.0, 4.0]]).unwrap();
        for s in 0..50 {
            let enc = encode(&b, &EncoderSpec::BinaryQuant, s).unwrap();
            assert_eq!(enc.y[0], vec![0.0, 4.0]);
        }
    }

    #[test]
    fn small_mse_example() {
        let b = VectorBatch::<f64>::new(vec![vec![1.0, 3.0]]).unwrap();
        let spec = EncoderSpec::Variable { p: vec![vec![0.5, 0.5]], centers: vec![2.0] };
        assert!((analytic_mse(&b, &spec).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn sparse_cost_example() {
        let b = VectorBatch::<f64>::new(vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]]).unwrap();
        let spec = EncoderSpec::Variable { p: vec![vec![0.5; 4]; 2], centers: vec![0.0, 0.0] };
        let bits = expected_bits(&b, &spec, &CostModel::new(Protocol::Sparse)).unwrap();
        assert_eq!(bits, 200.0);
    }

    #[test]
    fn water_filling_two_entries() {
        let b = VectorBatch::<f64>::new(vec![vec![1.0, 3.0]]).unwrap();
        let p = optimal_probabilities(&b, &[0.0], 1.0).unwrap();
        assert!((p[0][0] - 0.25).abs() < 1e-15 && (p[0][1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn weighted_centers_example() {
        let b = VectorBatch::<f64>::new(vec![vec![0.0, 10.0]]).unwrap();
        let c = optimal_centers(&b, &[vec![0.5, 0.9]]);
        assert!((c[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_round_trip() {
        let x: Vec<f64> = vec![1.0, -2.0, 0.5, 3.0, 7.0];
        let rot = Rotation::new(5, 11);
        let z = rot.apply(&x);
        assert_eq!(z.len(), 8);
        let back = rot.invert(&z);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0.0);
        assert_eq!(ceil_log2(4), 2.0);
        assert_eq!(ceil_log2(5), 3.0);
    }
}
