//! Sparse datasets, libsvm ingestion, synthetic generators and partitions.

use crate::error::{invalid, Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use std::fmt::Write as _;

/// Examples stored row-wise in compressed sparse row form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseDataset<T> {
    pub d: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
    pub labels: Vec<T>,
}

impl<T: Scalar> SparseDataset<T> {
    pub fn empty(d: usize) -> Self {
        Self { d, indptr: vec![0], indices: Vec::new(), values: Vec::new(), labels: Vec::new() }
    }

    /// Appends an example; `entries` must have strictly increasing indices below `d`.
    /// Explicit zeros are dropped.
    pub fn push(&mut self, entries: &[(usize, T)], label: T) -> Result<()> {
        let mut last = None;
        for &(j, v) in entries {
            if j >= self.d {
                return invalid(format!("feature {j} out of range (d = {})", self.d));
            }
            if last.is_some_and(|l| j <= l) {
                return invalid("feature indices must be strictly increasing");
            }
            last = Some(j);
            if v != T::zero() {
                self.indices.push(j);
                self.values.push(v);
            }
        }
        self.indptr.push(self.indices.len());
        self.labels.push(label);
        Ok(())
    }

    pub fn from_dense(rows: &[Vec<T>], labels: &[T]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let mut ds = Self::empty(d);
        for (row, &y) in rows.iter().zip(labels) {
            let entries = row.iter().copied().enumerate().collect::<Vec<_>>();
            ds.push(&entries, y).expect("dense rows are well formed");
        }
        ds
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Feature indices and values of example `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    /// Value of feature `j` in example `i`.
    pub fn get(&self, i: usize, j: usize) -> T {
        let (idx, val) = self.row(i);
        idx.binary_search(&j).map_or(T::zero(), |p| val[p])
    }

    #[inline]
    pub fn dot(&self, i: usize, w: &[T]) -> T {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).fold(T::zero(), |acc, (&j, &v)| acc + v * w[j])
    }

    /// `out += scale * x_i`.
    #[inline]
    pub fn axpy(&self, i: usize, scale: T, out: &mut [T]) {
        let (idx, val) = self.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            out[j] = out[j] + scale * v;
        }
    }

    pub fn row_norm_sq(&self, i: usize) -> T {
        self.row(i).1.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }

    /// Dense copy of example `i`.
    pub fn dense_row(&self, i: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.d];
        self.axpy(i, T::one(), &mut out);
        out
    }

    /// Copy with a constant-one feature appended as the last column.
    pub fn with_bias(&self) -> Self {
        let mut out = Self::empty(self.d + 1);
        for i in 0..self.n() {
            let (idx, val) = self.row(i);
            let mut entries = idx.iter().copied().zip(val.iter().copied()).collect::<Vec<_>>();
            entries.push((self.d, T::one()));
            out.push(&entries, self.labels[i]).expect("bias column is last");
        }
        out
    }

    /// Subset of examples, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut out = Self::empty(self.d);
        for &i in rows {
            let (idx, val) = self.row(i);
            let entries = idx.iter().copied().zip(val.iter().copied()).collect::<Vec<_>>();
            out.push(&entries, self.labels[i]).expect("rows already valid");
        }
        out
    }

    /// libsvm text, 1-based indices.
    pub fn to_libsvm(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n() {
            write!(s, "{}", self.labels[i]).unwrap();
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                write!(s, " {}:{}", j + 1, v).unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Cheap content hash used to tag traces.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        eat(self.d as u64);
        eat(self.n() as u64);
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            eat(j as u64);
            eat(v.f64().to_bits());
        }
        for &y in &self.labels {
            eat(y.f64().to_bits());
        }
        h
    }
}

/// Parses libsvm text (`label idx:val ...`, 1-based indices).
pub fn parse_libsvm<T: Scalar>(text: &str, d_hint: Option<usize>) -> Result<SparseDataset<T>> {
    let mut rows = Vec::new();
    let mut d = d_hint.unwrap_or(0);
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap();
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad label {label_tok:?}"),
        })?;
        let mut entries = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (a, b) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = a.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad index {a:?}"),
            })?;
            let val: f64 = b.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad value {b:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Format { line: line_no, msg: "indices are 1-based".into() });
            }
            if idx <= prev {
                return Err(Error::Format {
                    line: line_no,
                    msg: format!("index {idx} not increasing after {prev}"),
                });
            }
            prev = idx;
            d = d.max(idx);
            entries.push((idx - 1, T::of(val)));
        }
        rows.push((entries, T::of(label)));
    }
    let mut ds = SparseDataset::empty(d);
    for (entries, y) in rows {
        ds.push(&entries, y)?;
    }
    Ok(ds)
}

/// How examples are assigned to nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionMode {
    Contiguous,
    RoundRobin,
    /// Sort by label (ties shuffled by `seed`), then cut into contiguous blocks.
    ByLabelCluster { seed: u64 },
}

/// Disjoint assignment of examples to `k` nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub k: usize,
    pub assignment: Vec<usize>,
    /// Example indices held by each node, ascending.
    pub nodes: Vec<Vec<usize>>,
}

impl Partition {
    pub fn from_nodes(n: usize, nodes: Vec<Vec<usize>>) -> Result<Self> {
        let mut assignment = vec![usize::MAX; n];
        for (k, node) in nodes.iter().enumerate() {
            for &i in node {
                if i >= n || assignment[i] != usize::MAX {
                    return invalid(format!("example {i} missing or assigned twice"));
                }
                assignment[i] = k;
            }
        }
        if assignment.contains(&usize::MAX) {
            return invalid("some example is not assigned");
        }
        let mut nodes = nodes;
        nodes.iter_mut().for_each(|v| v.sort_unstable());
        Ok(Self { k: nodes.len(), assignment, nodes })
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.nodes.iter().map(Vec::len).collect()
    }

    pub fn is_balanced(&self) -> bool {
        self.nodes.windows(2).all(|w| w[0].len() == w[1].len())
    }
}

fn contiguous_blocks(order: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = order.len();
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for node in 0..k {
        let len = base + usize::from(node < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}

pub fn partition_examples<T: Scalar>(
    ds: &SparseDataset<T>,
    k: usize,
    mode: PartitionMode,
) -> Result<Partition> {
    let n = ds.n();
    if k == 0 || k > n {
        return invalid(format!("need 1 <= K <= n, got K = {k}, n = {n}"));
    }
    let nodes = match mode {
        PartitionMode::Contiguous => contiguous_blocks(&(0..n).collect::<Vec<_>>(), k),
        PartitionMode::RoundRobin => {
            let mut nodes = vec![Vec::new(); k];
            for i in 0..n {
                nodes[i % k].push(i);
            }
            nodes
        }
        PartitionMode::ByLabelCluster { seed } => {
            let mut order = (0..n).collect::<Vec<_>>();
            Rng::new(seed).shuffle(&mut order);
            order.sort_by(|&a, &b| ds.labels[a].partial_cmp(&ds.labels[b]).unwrap());
            contiguous_blocks(&order, k)
        }
    };
    Partition::from_nodes(n, nodes)
}

/// Per-feature occurrence counts globally and per node.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionStats<T> {
    pub n: usize,
    pub node_sizes: Vec<usize>,
    /// Examples containing feature `j`.
    pub count: Vec<usize>,
    /// `node_count[k][j]`: examples on node `k` containing feature `j`.
    pub node_count: Vec<Vec<usize>>,
    /// Global frequency `count[j] / n`.
    pub freq: Vec<T>,
    /// Local frequency `node_count[k][j] / n_k`.
    pub node_freq: Vec<Vec<T>>,
    /// Ratio of global to local frequency, defined where the feature occurs locally.
    pub local_ratio: Vec<Vec<Option<T>>>,
    /// Number of nodes on which feature `j` occurs.
    pub spread: Vec<usize>,
    /// Aggregation weight `K / spread[j]` (1 for absent features).
    pub agg_weight: Vec<T>,
}

impl<T: Scalar> PartitionStats<T> {
    /// Local scaling factor with absent features mapped to 1.
    #[inline]
    pub fn scale(&self, k: usize, j: usize) -> T {
        self.local_ratio[k][j].unwrap_or_else(T::one)
    }
}

pub fn compute_partition_stats<T: Scalar>(
    ds: &SparseDataset<T>,
    part: &Partition,
) -> PartitionStats<T> {
    let (n, d, k) = (ds.n(), ds.d, part.k);
    let mut count = vec![0usize; d];
    let mut node_count = vec![vec![0usize; d]; k];
    for i in 0..n {
        let node = part.assignment[i];
        for &j in ds.row(i).0 {
            count[j] += 1;
            node_count[node][j] += 1;
        }
    }
    let node_sizes = part.sizes();
    let freq = count.iter().map(|&c| T::of_usize(c) / T::of_usize(n.max(1))).collect::<Vec<_>>();
    let node_freq = node_count
        .iter()
        .zip(&node_sizes)
        .map(|(cs, &nk)| cs.iter().map(|&c| T::of_usize(c) / T::of_usize(nk.max(1))).collect())
        .collect::<Vec<Vec<T>>>();
    let local_ratio = (0..k)
        .map(|node| {
            (0..d)
                .map(|j| (node_count[node][j] > 0).then(|| freq[j] / node_freq[node][j]))
                .collect()
        })
        .collect();
    let spread = (0..d)
        .map(|j| (0..k).filter(|&node| node_count[node][j] > 0).count())
        .collect::<Vec<_>>();
    let agg_weight = spread
        .iter()
        .map(|&w| if w == 0 { T::one() } else { T::of_usize(k) / T::of_usize(w) })
        .collect();
    PartitionStats { n, node_sizes, count, node_count, freq, node_freq, local_ratio, spread, agg_weight }
}

/// Dense Gaussian ridge instance whose condition number `(max ||x||^2 + lambda) / lambda`
/// equals `kappa`. Returns the dataset and `lambda`.
pub fn synth_ridge<T: Scalar>(n: usize, d: usize, kappa: f64, seed: u64) -> Result<(SparseDataset<T>, T)> {
    if !(kappa >= 1.0) {
        return invalid("kappa must be at least 1");
    }
    let mut rng = Rng::new(seed);
    let truth = (0..d).map(|_| rng.normal()).collect::<Vec<_>>();
    let mut rows = (0..n).map(|_| (0..d).map(|_| rng.normal()).collect::<Vec<f64>>()).collect::<Vec<_>>();
    let max_sq = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max);
    let lambda = if kappa > 1.0 { 1.0 / (kappa - 1.0) } else { 1.0 };
    let scale = if kappa > 1.0 && max_sq > 0.0 { 1.0 / max_sq.sqrt() } else { 0.0 };
    let mut ds = SparseDataset::empty(d);
    for row in rows.iter_mut() {
        row.iter_mut().for_each(|v| *v *= scale);
        let y = row.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + 0.1 * rng.normal();
        let entries = row.iter().map(|&v| T::of(v)).enumerate().collect::<Vec<_>>();
        ds.push(&entries, T::of(y))?;
    }
    Ok((ds, T::of(lambda)))
}

/// Sparse binary-classification instance: each feature present with probability
/// `density`, rows scaled to unit norm, labels from a planted linear model (±1).
pub fn synth_classification<T: Scalar>(n: usize, d: usize, density: f64, seed: u64) -> Result<SparseDataset<T>> {
    if !(density > 0.0 && density <= 1.0) {
        return invalid("density must lie in (0, 1]");
    }
    let mut rng = Rng::new(seed);
    let truth = (0..d).map(|_| rng.normal()).collect::<Vec<_>>();
    let mut ds = SparseDataset::empty(d);
    for _ in 0..n {
        let mut entries = Vec::new();
        for j in 0..d {
            if rng.bernoulli(density) {
                entries.push((j, rng.normal()));
            }
        }
        if entries.is_empty() {
            entries.push((rng.below(d), 1.0));
        }
        let nrm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        let margin = entries.iter().map(|&(j, v)| v * truth[j]).sum::<f64>() / nrm;
        let y = if margin + 0.1 * rng.normal() >= 0.0 { 1.0 } else { -1.0 };
        let entries = entries.into_iter().map(|(j, v)| (j, T::of(v / nrm))).collect::<Vec<_>>();
        ds.push(&entries, T::of(y))?;
    }
    Ok(ds)
}

/// Sparse regression instance with real labels (same sparsity model as above).
pub fn synth_sparse_regression<T: Scalar>(n: usize, d: usize, density: f64, seed: u64) -> Result<SparseDataset<T>> {
    let cls = synth_classification::<f64>(n, d, density, seed)?;
    let mut rng = Rng::derive(seed, &[1]);
    let truth = (0..d).map(|_| rng.normal()).collect::<Vec<_>>();
    let mut ds = SparseDataset::empty(d);
    for i in 0..n {
        let (idx, val) = cls.row(i);
        let y = cls.dot(i, &truth) + 0.1 * rng.normal();
        let entries = idx.iter().zip(val).map(|(&j, &v)| (j, T::of(v))).collect::<Vec<_>>();
        ds.push(&entries, T::of(y))?;
    }
    Ok(ds)
}
