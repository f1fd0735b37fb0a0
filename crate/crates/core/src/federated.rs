//! Federated SVRG with per-node feature scaling and per-feature aggregation
//! for non-IID, unbalanced, sparse partitions.

use crate::dataio::{compute_partition_stats, Partition, PartitionStats};
use crate::error::{invalid, unsupported, Error, Result};
use crate::losses::{Problem, RegKind};
use crate::quadperturb::{node_vr_pass, LocalSampling};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::trace::{SolverTrace, Tracer};
use rayon::prelude::*;

#[derive(Clone, Debug, PartialEq)]
pub struct FsvrgConfig<T> {
    /// Base step; node `k` uses `h / n_k`.
    pub h: T,
    pub rounds: usize,
    pub seed: u64,
    /// Scale stochastic differences by the global/local feature-frequency ratio.
    pub local_scaling: bool,
    /// Aggregate feature `j` with weight `K / (nodes containing j)`.
    pub aggregation_scaling: bool,
    /// Local pass; the algorithm uses one permutation of the node's data.
    pub sampling: LocalSampling,
    pub bits_per_value: u32,
    pub threads: usize,
}

impl<T: Scalar> FsvrgConfig<T> {
    pub fn new(h: T, rounds: usize, seed: u64) -> Self {
        Self {
            h,
            rounds,
            seed,
            local_scaling: true,
            aggregation_scaling: true,
            sampling: LocalSampling::Permutation,
            bits_per_value: 32,
            threads: 1,
        }
    }
}

/// Per-node diagonal scalings and the global aggregation diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingMatrices<T> {
    /// `s[k][j]`, 1 where feature `j` is absent on node `k`.
    pub s: Vec<Vec<T>>,
    pub a: Vec<T>,
}

impl<T: Scalar> ScalingMatrices<T> {
    pub fn from_stats(stats: &PartitionStats<T>) -> Self {
        let d = stats.count.len();
        let s = (0..stats.node_sizes.len())
            .map(|k| (0..d).map(|j| stats.scale(k, j)).collect())
            .collect();
        Self { s, a: stats.agg_weight.clone() }
    }
}

fn prepare<'a, T: Scalar>(prob: &Problem<'a, T>, part: &Partition, cfg: &FsvrgConfig<T>) -> Result<Problem<'a, T>> {
    prob.constants().smooth()?;
    let prob = match prob.reg {
        RegKind::None | RegKind::L2(_) => prob.with_folded(true)?,
        _ => return unsupported("FSVRG needs a smooth (L2) regularizer"),
    };
    if part.assignment.len() != prob.n() {
        return invalid("partition does not match the dataset");
    }
    if !(cfg.h > T::zero()) {
        return invalid("step size must be positive");
    }
    Ok(prob)
}

/// One FSVRG round from `w`.
pub fn fsvrg_round<T: Scalar>(
    prob: &Problem<'_, T>,
    part: &Partition,
    scaling: &ScalingMatrices<T>,
    w: &[T],
    cfg: &FsvrgConfig<T>,
    round: usize,
) -> Result<Vec<T>> {
    let mut derivs = Vec::new();
    let grad = prob.smooth_gradient_with(w, &mut derivs);
    let rho = prob.component_l2();
    let run_node = |node: usize| -> Vec<T> {
        let rows = &part.nodes[node];
        if rows.is_empty() {
            return w.to_vec();
        }
        let hk = cfg.h / T::of_usize(rows.len());
        let scale = cfg.local_scaling.then(|| scaling.s[node].as_slice());
        let mut rng = Rng::derive(cfg.seed, &[round as u64, node as u64]);
        node_vr_pass(prob, rows, w, &derivs, &grad, hk, rho, scale, cfg.sampling, &mut rng).0
    };
    let k = part.nodes.len();
    let locals: Vec<Vec<T>> = if cfg.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| (0..k).into_par_iter().map(run_node).collect())
    } else {
        (0..k).map(run_node).collect()
    };
    let n = T::of_usize(prob.n());
    let mut sum = vec![T::zero(); w.len()];
    for (rows, wk) in part.nodes.iter().zip(&locals) {
        let weight = T::of_usize(rows.len()) / n;
        for (s, &v) in sum.iter_mut().zip(wk) {
            *s = *s + v * weight;
        }
    }
    if cfg.aggregation_scaling {
        for ((s, &a), &x) in sum.iter_mut().zip(&scaling.a).zip(w) {
            if a != T::one() {
                *s = a * *s + (T::one() - a) * x;
            }
        }
    }
    Ok(sum)
}

/// FSVRG: each round, every node runs one local pass from the shared point;
/// the server combines `w + A sum_k (n_k/n)(w_k - w)`.
pub fn fsvrg_solve<T: Scalar>(prob: &Problem<'_, T>, part: &Partition, cfg: &FsvrgConfig<T>) -> Result<(Vec<T>, SolverTrace)> {
    let prob = prepare(prob, part, cfg)?;
    let stats = compute_partition_stats(prob.ds, part);
    let scaling = ScalingMatrices::from_stats(&stats);
    let (n, d) = (prob.n(), prob.d());
    let k = part.nodes.len();
    let local_steps = match cfg.sampling {
        LocalSampling::Permutation => n,
        LocalSampling::WithReplacement(m) => k * m,
    };
    let work_round = (n + 2 * local_steps) as f64 / n as f64;
    let bits_round = (k * d) as f64 * cfg.bits_per_value as f64;
    let mut w = vec![T::zero(); d];
    let mut tracer = Tracer::new("fsvrg", cfg.seed, prob.objective(&w).f64());
    for t in 0..cfg.rounds {
        w = fsvrg_round(&prob, part, &scaling, &w, cfg, t)?;
        let obj = prob.objective(&w).f64();
        let ok = tracer.record(t + 1, work_round * (t + 1) as f64, obj, None, prob.grad_norm(&w).f64(), bits_round * (t + 1) as f64);
        if !ok {
            break;
        }
    }
    Ok((w, tracer.finish()))
}

/// Same node sizes as `part`, with examples reassigned uniformly at random.
pub fn reshuffled_partition(part: &Partition, seed: u64) -> Result<Partition> {
    let n = part.assignment.len();
    let mut order = (0..n).collect::<Vec<_>>();
    Rng::derive(seed, &[0x5348_5546]).shuffle(&mut order);
    let mut nodes = Vec::with_capacity(part.nodes.len());
    let mut start = 0;
    for rows in &part.nodes {
        nodes.push(order[start..start + rows.len()].to_vec());
        start += rows.len();
    }
    Partition::from_nodes(n, nodes)
}

/// Runs FSVRG on `part` and on a size-preserving random reshuffle of it.
pub fn fsvrg_vs_shuffled<T: Scalar>(
    prob: &Problem<'_, T>,
    part: &Partition,
    cfg: &FsvrgConfig<T>,
) -> Result<(SolverTrace, SolverTrace)> {
    let (_, given) = fsvrg_solve(prob, part, cfg)?;
    let shuffled_part = reshuffled_partition(part, cfg.seed)?;
    let (_, mut shuffled) = fsvrg_solve(prob, &shuffled_part, cfg)?;
    shuffled.algorithm = "fsvrg_shuffled".into();
    Ok((given, shuffled))
}
