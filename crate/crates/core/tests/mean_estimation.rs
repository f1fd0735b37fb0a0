use proptest::prelude::*;
use vropt_core::meanest::*;
use vropt_core::meanest::Strategy;

fn batch(seed: u64) -> VectorBatch<f64> {
    synth_batch(BatchDist::Gauss, 6, 12, seed)
}

fn specs(b: &VectorBatch<f64>) -> Vec<EncoderSpec<f64>> {
    let centers = b.row_means();
    let p = optimal_probabilities(b, &centers, 20.0).unwrap();
    vec![
        EncoderSpec::uniform(b, 0.3),
        EncoderSpec::Variable { p, centers: centers.clone() },
        EncoderSpec::FixedSupport { k: 4, centers },
        EncoderSpec::BinaryQuant,
        EncoderSpec::BitQuant { bits: 2 },
        EncoderSpec::ternary_from_range(b, 0.6),
    ]
}

#[test]
fn encoders_are_unbiased_and_match_their_mse() {
    let b = batch(1);
    let truth = b.mean();
    let samples = 4000;
    for spec in specs(&b) {
        let mut sum = vec![0.0; b.d()];
        let mut sq = vec![0.0; b.d()];
        for s in 0..samples {
            let est = decode_average(&encode(&b, &spec, s).unwrap());
            for j in 0..b.d() {
                sum[j] += est[j];
                sq[j] += est[j] * est[j];
            }
        }
        for j in 0..b.d() {
            let m = sum[j] / samples as f64;
            let sd = (sq[j] / samples as f64 - m * m).max(0.0).sqrt();
            assert!((m - truth[j]).abs() <= 4.0 * sd / (samples as f64).sqrt() + 1e-12, "{spec:?} coord {j}");
        }
        let (emp, se) = empirical_mse(&b, &spec, samples as usize, 99).unwrap();
        let an = analytic_mse(&b, &spec).unwrap();
        assert!((emp - an).abs() <= 3.0 * se + 1e-12, "{spec:?}: {emp} vs {an} (se {se})");
    }
}

#[test]
fn binary_quantization_bound() {
    let b = synth_batch::<f64>(BatchDist::Laplace, 16, 64, 2);
    let mse = analytic_mse(&b, &EncoderSpec::BinaryQuant).unwrap();
    assert!(mse <= b.d() as f64 / (2.0 * b.n() as f64) * b.avg_sq_norm());
}

#[test]
fn uniform_probability_with_row_means_closed_form() {
    let b = batch(3);
    let r = 4.0;
    let spec = EncoderSpec::uniform(&b, 1.0 / r);
    let mse = analytic_mse(&b, &spec).unwrap();
    let means = b.row_means();
    let centered: f64 = b
        .rows()
        .iter()
        .zip(&means)
        .map(|(x, m)| x.iter().map(|v| (v - m) * (v - m)).sum::<f64>())
        .sum::<f64>()
        / b.n() as f64;
    assert!((mse - (r - 1.0) * centered / b.n() as f64).abs() < 1e-12);
}

fn rotated_binary_mse(b: &VectorBatch<f64>, runs: u64) -> (f64, f64, f64) {
    let (rb, _) = rotate(b, 5);
    let truth = b.mean();
    let errs: Vec<f64> = (0..runs)
        .map(|s| {
            let mut enc = encode(&rb, &EncoderSpec::BinaryQuant, s).unwrap();
            enc.rotation = Some(Rotation::new(b.d(), 5));
            let est = decode_average(&enc);
            est.iter().zip(&truth).map(|(a, t)| (a - t) * (a - t)).sum::<f64>()
        })
        .collect();
    let m = errs.iter().sum::<f64>() / errs.len() as f64;
    let v = errs.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (errs.len() - 1) as f64;
    (m, (v / errs.len() as f64).sqrt(), analytic_mse(&rb, &EncoderSpec::BinaryQuant).unwrap())
}

#[test]
fn rotated_encoding_decodes_to_the_mean() {
    let b = batch(4);
    let enc = encode_rotated(&b, 5, |rb| EncoderSpec::uniform(rb, 1.0), 6).unwrap();
    let est = decode_average(&enc);
    for (a, t) in est.iter().zip(b.mean()) {
        assert!((a - t).abs() < 1e-12);
    }
}

#[test]
fn rotated_mse_is_exact_without_padding() {
    let b = synth_batch::<f64>(BatchDist::Gauss, 6, 16, 4);
    let (emp, se, an) = rotated_binary_mse(&b, 2000);
    assert!((emp - an).abs() <= 3.0 * se, "{emp} vs {an} (se {se})");
}

#[test]
fn padding_only_removes_error() {
    let b = batch(4);
    let (emp, se, an) = rotated_binary_mse(&b, 2000);
    assert!(emp <= an + 3.0 * se);
}

#[test]
fn protocol_pairings() {
    let b = batch(5);
    let ternary = EncoderSpec::ternary_from_range(&b, 0.5);
    assert!(expected_bits(&b, &ternary, &CostModel::new(Protocol::Sparse)).is_err());
    assert!(expected_bits(&b, &ternary, &CostModel::new(Protocol::Binary)).is_err());
    assert!(expected_bits(&b, &EncoderSpec::uniform(&b, 0.5), &CostModel::new(Protocol::Binary)).is_err());
    let bits = expected_bits(&b, &EncoderSpec::BinaryQuant, &CostModel::new(Protocol::Binary)).unwrap();
    assert_eq!(bits, 6.0 * 64.0 + 6.0 * 12.0);
    let naive = expected_bits(&b, &ternary, &CostModel::new(Protocol::Naive)).unwrap();
    assert_eq!(naive, 6.0 * 12.0 * 32.0);
}

#[test]
fn realized_sparse_cost_averages_to_expected() {
    let b = batch(6);
    let spec = EncoderSpec::uniform(&b, 0.3);
    let cost = CostModel::new(Protocol::Sparse);
    let expected = expected_bits(&b, &spec, &cost).unwrap();
    let runs = 3000;
    let mean = (0..runs).map(|s| realized_bits(&encode(&b, &spec, s).unwrap(), &cost).unwrap()).sum::<f64>() / runs as f64;
    assert!((mean - expected).abs() < 0.02 * expected);
}

#[test]
fn tradeoff_ordering_on_skewed_data() {
    let b = synth_batch::<f64>(BatchDist::ChiSq(2), 8, 64, 7);
    let budgets: Vec<f64> = (1..=5).map(|i| 40.0 * i as f64).collect();
    let rows = tradeoff_sweep(&b, &budgets, &[Strategy::Uniform, Strategy::OptimalP, Strategy::OptimalBoth], &CostModel::new(Protocol::Sparse), 50, 1).unwrap();
    for &budget in &budgets {
        let get = |s| rows.iter().find(|r| r.strategy == s && r.budget == budget).unwrap().analytic_mse;
        let (u, p, both) = (get(Strategy::Uniform), get(Strategy::OptimalP), get(Strategy::OptimalBoth));
        assert!(u >= p * (1.0 - 1e-12) && p >= both * (1.0 - 1e-12), "budget {budget}: {u} {p} {both}");
    }
}

#[test]
fn alternating_minimization_is_monotone_and_tol_inf_returns_init() {
    let b = synth_batch::<f64>(BatchDist::ChiSq(2), 5, 30, 8);
    let r = alternating_minimization(&b, 40.0, 30, 0.0).unwrap();
    assert!(r.mse_trace.windows(2).all(|w| w[1] <= w[0]));
    let init = alternating_minimization(&b, 40.0, 30, f64::INFINITY).unwrap();
    assert_eq!(init.centers, b.row_means());
    assert_eq!(init.mse_trace.len(), 1);
}

#[test]
fn nonpositive_budget_is_rejected() {
    let b = batch(9);
    assert!(optimal_probabilities(&b, &b.row_means(), 0.0).is_err());
    assert!(optimal_probabilities(&b, &b.row_means(), -1.0).is_err());
}

proptest! {
    #[test]
    fn water_filling_spends_the_budget(seed in 0u64..500, frac in 0.05..0.95f64) {
        let b = batch(seed);
        let centers = b.row_means();
        let support = b.support_size(&centers);
        let budget = frac * support as f64;
        let p = optimal_probabilities(&b, &centers, budget).unwrap();
        let mut spent = 0.0;
        let mut ratio: Option<f64> = None;
        for (i, x) in b.rows().iter().enumerate() {
            for (j, &v) in x.iter().enumerate() {
                let q = p[i][j];
                prop_assert!(q > 0.0 && q <= 1.0);
                if v != centers[i] {
                    spent += q;
                    if q < 1.0 {
                        // Unsaturated entries share a/p.
                        let r = (v - centers[i]).abs() / q;
                        if let Some(r0) = ratio {
                            prop_assert!((r - r0).abs() <= 1e-9 * r0);
                        }
                        ratio = Some(r);
                    }
                }
            }
        }
        prop_assert!((spent - budget).abs() < 1e-9 * budget.max(1.0));
    }

    #[test]
    fn rotation_preserves_norms(xs in proptest::collection::vec(-100.0..100.0f64, 1..40), seed in 0u64..100) {
        let rot = Rotation::new(xs.len(), seed);
        let z = rot.apply(&xs);
        let a: f64 = xs.iter().map(|v| v * v).sum();
        let b: f64 = z.iter().map(|v| v * v).sum();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
        let back = rot.invert(&z);
        for (u, v) in xs.iter().zip(&back) {
            prop_assert!((u - v).abs() <= 1e-10 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn optimal_centers_minimize_for_fixed_p(seed in 0u64..500, shift in -1.0..1.0f64) {
        let b = batch(seed);
        let centers = b.row_means();
        let p = optimal_probabilities(&b, &centers, 25.0).unwrap();
        let best = optimal_centers(&b, &p);
        let at = |c: Vec<f64>| analytic_mse(&b, &EncoderSpec::Variable { p: p.clone(), centers: c }).unwrap();
        let moved = best.iter().map(|c| c + shift).collect();
        prop_assert!(at(best.clone()) <= at(moved) + 1e-12);
    }
}
