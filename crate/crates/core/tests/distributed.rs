use proptest::prelude::*;
use vropt_core::cocoa::*;
use vropt_core::dataio::{partition_examples, synth_classification, synth_ridge, Partition, PartitionMode, SparseDataset};
use vropt_core::federated::{fsvrg_solve, FsvrgConfig};
use vropt_core::linalg::ridge_solution;
use vropt_core::losses::{LossKind, Problem, RegKind};
use vropt_core::quadperturb::*;
use vropt_core::rng::Rng;
use vropt_core::vr_serial::{s2gd_run, InnerLength, S2gdConfig, S2gdOptions};

fn ridge() -> (SparseDataset<f64>, f64) {
    synth_ridge(40, 6, 50.0, 21).unwrap()
}

#[test]
fn dane_with_one_s2gd_epoch_is_naive_fsvrg() {
    let (ds, lam) = ridge();
    let p = Problem::ridge(&ds, lam);
    let part = partition_examples(&ds, 4, PartitionMode::Contiguous).unwrap();
    let (m, h) = (25, 0.05);
    let cfg = DaneConfig::new(DaneLocal::S2gd { m, h }, 5, 13);
    let (a, _) = dane_solve(&p, &part, &cfg).unwrap();
    let (b, _) = fsvrg_naive_solve(&p, &part, m, h, 5, 13).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_node_naive_fsvrg_is_s2gd_with_fixed_length() {
    let (ds, lam) = ridge();
    let p = Problem::ridge(&ds, lam);
    let part = partition_examples(&ds, 1, PartitionMode::Contiguous).unwrap();
    let (a, _) = fsvrg_naive_solve(&p, &part, 30, 0.05, 4, 7).unwrap();
    let cfg = S2gdConfig { m: 30, h: 0.05, nu: 0.0, epochs: 4, seed: 7 };
    let (b, _) = s2gd_run(&p, &cfg, &S2gdOptions { inner: InnerLength::Fixed(30), ..Default::default() }).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fsvrg_without_scaling_reduces_to_naive() {
    let (ds, lam) = ridge();
    let p = Problem::ridge(&ds, lam);
    let part = partition_examples(&ds, 4, PartitionMode::Contiguous).unwrap();
    let (m, h) = (10, 0.125);
    let mut cfg = FsvrgConfig::new(h * 10.0, 3, 5);
    cfg.local_scaling = false;
    cfg.aggregation_scaling = false;
    cfg.sampling = LocalSampling::WithReplacement(m);
    let (a, _) = fsvrg_solve(&p, &part, &cfg).unwrap();
    let (b, _) = fsvrg_naive_solve(&p, &part, m, h, 3, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fsvrg_threads_do_not_change_the_result() {
    let ds = synth_classification::<f64>(120, 40, 0.2, 3).unwrap();
    let p = Problem::new(&ds, LossKind::Logistic, RegKind::L2(1e-2), true).unwrap();
    let part = partition_examples(&ds, 6, PartitionMode::ByLabelCluster { seed: 1 }).unwrap();
    let mut cfg = FsvrgConfig::new(0.5, 4, 2);
    let (a, _) = fsvrg_solve(&p, &part, &cfg).unwrap();
    cfg.threads = 4;
    let (b, _) = fsvrg_solve(&p, &part, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exact_dane_converges_on_ridge() {
    let (ds, lam) = ridge();
    let p = Problem::ridge(&ds, lam);
    let part = partition_examples(&ds, 2, PartitionMode::RoundRobin).unwrap();
    let mut cfg = DaneConfig::new(DaneLocal::Exact, 30, 0);
    cfg.mu = lam;
    let (w, _) = dane_solve(&p, &part, &cfg).unwrap();
    let wstar = ridge_solution(&ds, lam).unwrap();
    for (a, b) in w.iter().zip(&wstar) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn primal_and_dual_methods_agree() {
    let (ds, lam) = ridge();
    let p = Problem::ridge(&ds, lam);
    let part = partition_examples(&ds, 4, PartitionMode::Contiguous).unwrap();
    let sigma = block_sigma(&ds, &part);
    let mut rng = Rng::new(3);
    let mut alpha: Vec<f64> = (0..ds.n()).map(|_| rng.normal()).collect();
    let mut pair = primal_method_init(&p, &part, sigma, &alpha).unwrap();
    for _ in 0..20 {
        primal_method_step(&p, &part, &mut pair).unwrap();
        dual_method_step(&p, &part, &mut alpha, sigma).unwrap();
        let w = primal_from_dual(&p, &alpha).unwrap();
        let num: f64 = w.iter().zip(&pair.w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den: f64 = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(num <= 1e-10 * den);
        let mut total = vec![0.0; ds.d];
        for gk in &pair.g {
            total.iter_mut().zip(gk).for_each(|(t, g)| *t += g);
        }
        assert!(total.iter().all(|t| t.abs() < 1e-10));
    }
}

#[test]
fn block_methods_need_balanced_nodes() {
    let (ds, lam) = ridge();
    let p = Problem::ridge(&ds, lam);
    let part = Partition::from_nodes(40, vec![(0..10).collect(), (10..40).collect()]).unwrap();
    assert!(primal_method_init(&p, &part, 1.5, &[0.0; 40]).is_err());
}

fn cocoa_data() -> SparseDataset<f64> {
    synth_classification(24, 10, 0.5, 31).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weak_duality(seed in 0u64..1000, which in 0usize..4) {
        let loss = [LossKind::Quadratic, LossKind::Logistic, LossKind::Hinge, LossKind::SquaredHinge][which];
        let ds = cocoa_data();
        let p = Problem::new(&ds, loss, RegKind::L2(0.05), false).unwrap();
        let mut rng = Rng::new(seed);
        let alpha: Vec<f64> = (0..ds.n())
            .map(|i| {
                let y = ds.labels[i];
                match loss {
                    LossKind::Quadratic => rng.normal(),
                    LossKind::Logistic => y * (0.01 + 0.98 * rng.uniform()),
                    LossKind::Hinge => y * rng.uniform(),
                    LossKind::SquaredHinge => y * 2.0 * rng.uniform(),
                }
            })
            .collect();
        let gap = duality_gap(&p, &alpha).unwrap();
        prop_assert!(gap >= -1e-12, "gap {gap}");
    }

    #[test]
    fn subproblems_lower_bound_the_dual(seed in 0u64..1000) {
        let ds = cocoa_data();
        let p = Problem::new(&ds, LossKind::Quadratic, RegKind::L2(0.05), false).unwrap();
        let k = 3;
        let part = partition_examples(&ds, k, PartitionMode::RoundRobin).unwrap();
        let mut rng = Rng::new(seed);
        let alpha: Vec<f64> = (0..ds.n()).map(|_| rng.normal()).collect();
        let h: Vec<f64> = (0..ds.n()).map(|_| rng.normal()).collect();
        let w = shared_vector(&p, &alpha).unwrap();
        let nu = 0.5 + 0.5 * rng.uniform();
        let sigma = nu * k as f64;
        let mut bound = (1.0 - nu) * dual_objective(&p, &alpha).unwrap();
        for rows in &part.nodes {
            let sub = LocalSubproblem { prob: &p, rows, alpha: &alpha, w: &w, lambda: 0.05, sigma_prime: sigma, k };
            let hk: Vec<f64> = rows.iter().map(|&i| h[i]).collect();
            bound += nu * sub.value(&hk);
        }
        let moved: Vec<f64> = alpha.iter().zip(&h).map(|(a, b)| a + nu * b).collect();
        let lhs = dual_objective(&p, &moved).unwrap();
        prop_assert!(lhs >= bound - 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn safe_sigma_is_at_most_nu_k(seed in 0u64..1000) {
        let ds = cocoa_data();
        let mut order: Vec<usize> = (0..ds.n()).collect();
        Rng::new(seed).shuffle(&mut order);
        let k = 2 + (seed % 4) as usize;
        let nodes = (0..k).map(|node| order.iter().copied().skip(node).step_by(k).collect()).collect();
        let part = Partition::from_nodes(ds.n(), nodes).unwrap();
        let (s, _) = sigma_prime_min(&ds, &part, 1.0).unwrap();
        prop_assert!(s <= k as f64 + 1e-9);
    }
}

#[test]
fn cocoa_gap_shrinks_and_threads_agree() {
    let ds = synth_classification::<f64>(200, 30, 0.3, 4).unwrap();
    let p = Problem::new(&ds, LossKind::Hinge, RegKind::L2(1e-2), false).unwrap();
    let part = partition_examples(&ds, 4, PartitionMode::Contiguous).unwrap();
    let mut cfg = CocoaConfig::adding(4, 50, 30, 8);
    let a = cocoa_solve(&p, &part, &cfg).unwrap();
    let gaps: Vec<f64> = a.trace.records.iter().map(|r| r.gap.unwrap()).collect();
    assert!(gaps.iter().all(|&g| g >= -1e-12));
    assert!(gaps.last().unwrap() < &(0.1 * gaps[0]));
    cfg.threads = 3;
    let b = cocoa_solve(&p, &part, &cfg).unwrap();
    assert_eq!(a.w, b.w);
}

#[test]
fn cocoa_gradient_solver_rejects_logistic() {
    let ds = synth_classification::<f64>(20, 5, 0.5, 4).unwrap();
    let p = Problem::new(&ds, LossKind::Logistic, RegKind::L2(1e-2), false).unwrap();
    let part = partition_examples(&ds, 2, PartitionMode::Contiguous).unwrap();
    let mut cfg = CocoaConfig::adding(2, 5, 2, 0);
    cfg.solver = LocalSolver::Gd;
    assert!(matches!(cocoa_solve(&p, &part, &cfg), Err(vropt_core::Error::Capability(_))));
}

#[test]
fn cocoa_bits_count_k_d_values_per_round() {
    let ds = synth_classification::<f64>(40, 7, 0.5, 4).unwrap();
    let p = Problem::new(&ds, LossKind::Quadratic, RegKind::L2(1e-1), false).unwrap();
    let part = partition_examples(&ds, 4, PartitionMode::Contiguous).unwrap();
    let out = cocoa_solve(&p, &part, &CocoaConfig::averaging(4, 10, 3, 0)).unwrap();
    let bits: Vec<f64> = out.trace.records.iter().map(|r| r.bits).collect();
    assert_eq!(bits, vec![4.0 * 7.0 * 32.0, 2.0 * 4.0 * 7.0 * 32.0, 3.0 * 4.0 * 7.0 * 32.0]);
}
