use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use vropt_core::dataio::*;
use vropt_core::losses::LossKind;
use vropt_core::rng::{DiscreteSampler, Rng, SubsetSampler};

fn chi_square_p(counts: &[usize], probs: &[f64]) -> f64 {
    let total: usize = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * total as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn uniform_index_sampler_passes_chi_square() {
    let mut rng = Rng::new(11);
    let mut counts = vec![0usize; 7];
    for _ in 0..70_000 {
        counts[rng.below(7)] += 1;
    }
    assert!(chi_square_p(&counts, &[1.0 / 7.0; 7]) > 1e-4);
}

#[test]
fn geometric_sampler_passes_chi_square() {
    let s = DiscreteSampler::geometric(10, 0.2);
    let probs: Vec<f64> = (1..=10).map(|t| s.prob(t)).collect();
    let mut rng = Rng::new(12);
    let mut counts = vec![0usize; 10];
    for _ in 0..100_000 {
        counts[s.sample(&mut rng) - 1] += 1;
    }
    assert!(chi_square_p(&counts, &probs) > 1e-4);
}

#[test]
fn subset_sampler_is_uniform_over_members() {
    let mut rng = Rng::new(13);
    let mut s = SubsetSampler::new(6);
    let mut counts = vec![0usize; 6];
    for _ in 0..30_000 {
        for &j in s.draw(&mut rng, 2) {
            counts[j] += 1;
        }
    }
    assert!(chi_square_p(&counts, &[1.0 / 6.0; 6]) > 1e-4);
}

#[test]
fn fenchel_young_holds_with_equality_at_the_derivative() {
    let mut rng = Rng::new(5);
    for loss in [LossKind::Quadratic, LossKind::Logistic, LossKind::SquaredHinge] {
        for _ in 0..200 {
            let y = if loss == LossKind::Quadratic { rng.normal() } else { rng.sign() };
            let a = 3.0 * rng.normal();
            let b = loss.deriv(a, y);
            let gap = loss.value(a, y) + loss.conjugate(b, y) - a * b;
            assert!(gap.abs() < 1e-10, "{loss:?}: {gap}");
            let other = b + 0.1 * rng.normal();
            let conj = loss.conjugate(other, y);
            if conj.is_finite() {
                assert!(loss.value(a, y) + conj - a * other >= -1e-10);
            }
        }
    }
}

fn dataset() -> impl Strategy<Value = SparseDataset<f64>> {
    (1usize..8, 1usize..12).prop_flat_map(|(d, n)| {
        proptest::collection::vec((proptest::collection::vec(-5.0..5.0f64, d), -3.0..3.0f64), n).prop_map(move |rows| {
            let (x, y): (Vec<Vec<f64>>, Vec<f64>) = rows.into_iter().unzip();
            SparseDataset::from_dense(&x, &y)
        })
    })
}

proptest! {
    #[test]
    fn libsvm_round_trip(ds in dataset()) {
        let back = parse_libsvm::<f64>(&ds.to_libsvm(), Some(ds.d)).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn partitions_cover_every_example_once(n in 1usize..60, k in 1usize..8, mode in 0usize..3) {
        prop_assume!(k <= n);
        let ds = SparseDataset::from_dense(&vec![vec![1.0]; n], &(0..n).map(|i| (i % 3) as f64).collect::<Vec<_>>());
        let mode = [PartitionMode::Contiguous, PartitionMode::RoundRobin, PartitionMode::ByLabelCluster { seed: 1 }][mode];
        let part = partition_examples(&ds, k, mode).unwrap();
        let mut seen = vec![0; n];
        for node in &part.nodes {
            for &i in node {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes = part.sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn partition_stats_are_consistent(ds in dataset(), k in 1usize..4) {
        prop_assume!(k <= ds.n());
        let part = partition_examples(&ds, k, PartitionMode::RoundRobin).unwrap();
        let st = compute_partition_stats(&ds, &part);
        for j in 0..ds.d {
            let total: usize = st.node_count.iter().map(|c| c[j]).sum();
            prop_assert_eq!(total, st.count[j]);
            prop_assert!(st.spread[j] <= k);
        }
    }
}
