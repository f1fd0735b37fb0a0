//! `solve`, `plan` and `meanest` subcommands.

use crate::config::{CliError, CliResult, Settings};
use crate::data::DataSpec;
use crate::output::{num, sink, work_cell, write_trace};
use std::io::Write;
use vropt_core::cocoa::{cocoa_solve, CocoaConfig, LocalSolver};
use vropt_core::dataio::{partition_examples, Partition, PartitionMode};
use vropt_core::federated::{fsvrg_solve, FsvrgConfig};
use vropt_core::losses::{LossKind, Problem, RegKind};
use vropt_core::meanest::{tradeoff_sweep, BatchDist, CostModel, Protocol, Strategy};
use vropt_core::ms2gd::{ms2gd_lazy_solve, ms2gd_solve, plan_minibatch_for, Ms2gdConfig};
use vropt_core::quadperturb::{dane_solve, DaneConfig, DaneLocal, LocalSampling};
use vropt_core::trace::SolverTrace;
use vropt_core::vr_serial::{
    plan_s2cd, plan_s2gd, plan_work, s2cd_solve, s2cd_tables, s2gd_plus_solve, s2gd_run, CatchUp, InnerPath, NuMode,
    S2cdConfig, S2gdConfig, S2gdOptions,
};

pub const ALGORITHMS: [&str; 7] = ["s2gd", "s2gd+", "s2cd", "ms2gd", "cocoa", "fsvrg", "dane"];

fn bad<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

fn partition_mode(s: &Settings, seed: u64) -> CliResult<PartitionMode> {
    Ok(match s.raw("partition").unwrap_or("contiguous") {
        "contiguous" => PartitionMode::Contiguous,
        "roundrobin" | "round_robin" | "round-robin" => PartitionMode::RoundRobin,
        "label" | "by_label" | "noniid" => PartitionMode::ByLabelCluster { seed },
        other => return bad(format!("unknown partition {other:?}")),
    })
}

fn catch_up(s: &Settings) -> CliResult<Option<CatchUp>> {
    Ok(match s.raw("path").unwrap_or("eager") {
        "eager" | "dense" => None,
        "lazy" | "lazy_closed" | "lazy-closed" => Some(CatchUp::Closed),
        "lazy_replay" | "lazy-replay" => Some(CatchUp::Replay),
        other => return bad(format!("unknown path {other:?}")),
    })
}

/// Outcome of `solve`: the final iterate and its trace.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub w: Vec<f64>,
    pub trace: SolverTrace,
    pub fingerprint: u64,
}

/// Runs the configured solver without touching the filesystem (beyond reading data).
pub fn run_solver(s: &Settings, seed: u64) -> CliResult<SolveOutcome> {
    let Some(algo) = s.raw("algo") else {
        return bad("missing required --algo");
    };
    if !ALGORITHMS.contains(&algo) {
        return bad(format!("unknown algorithm {algo:?}; expected one of {}", ALGORITHMS.join("|")));
    }
    let Some(data) = s.raw("data") else {
        return bad("missing required --data");
    };
    let loaded = DataSpec::parse(data)?.load(seed)?;
    let ds = if s.flag("add_bias", false)? { loaded.ds.with_bias() } else { loaded.ds };
    let loss = match s.raw("loss") {
        Some(l) => LossKind::parse(l)?,
        None => loaded.loss,
    };
    let lambda = s.get("lambda", loaded.lambda.unwrap_or(1.0 / ds.n().max(1) as f64))?;
    let reg = RegKind::parse(s.raw("reg").unwrap_or("l2"), lambda, s.get("lambda_l1", lambda)?)?;
    let folded = !matches!(algo, "ms2gd" | "cocoa");
    let prob = Problem::new(&ds, loss, reg, folded)?;
    let threads = s.get("threads", 1usize)?.max(1);
    let eps = s.get("eps", 1e-6)?;
    let nodes = |default_k: usize| -> CliResult<Partition> {
        let k = s.get("k", default_k)?;
        Ok(partition_examples(&ds, k, partition_mode(s, seed)?)?)
    };
    let bits = s.get("bits", 32u32)?;

    let (w, trace) = match algo {
        "s2gd" | "s2gd+" => {
            let plan = if s.has("h") && s.has("m") { None } else { Some(plan_s2gd(&prob, eps, NuMode::Mu, None)?) };
            let mu = prob.constants().mu;
            let cfg = S2gdConfig {
                m: s.opt("m")?.or(plan.map(|p| p.m)).unwrap_or(1),
                h: s.opt("h")?.or(plan.map(|p| p.h)).unwrap_or(0.0),
                nu: s.get("nu", mu)?,
                epochs: s.opt("epochs")?.or(plan.map(|p| p.k)).unwrap_or(10),
                seed,
            };
            if algo == "s2gd" {
                let path = catch_up(s)?.map_or(InnerPath::Eager, InnerPath::Lazy);
                s2gd_run(&prob, &cfg, &S2gdOptions { path, ..Default::default() })?
            } else {
                s2gd_plus_solve(&prob, &cfg, s.get("alpha", 1.0)?, s.opt("sgd_step")?)?
            }
        }
        "s2cd" => {
            let tables = s2cd_tables(&prob)?;
            let epochs = s.get("epochs", 10usize)?;
            let (h, m) = match (s.opt("h")?, s.opt("m")?) {
                (Some(h), Some(m)) => (h, m),
                (h, m) => {
                    let (ph, pm) = plan_s2cd(&tables, prob.constants().mu, eps, epochs)?;
                    (h.unwrap_or(ph), m.unwrap_or(pm))
                }
            };
            s2cd_solve(&prob, &S2cdConfig { m, h, epochs, seed })?
        }
        "ms2gd" => {
            let b = s.get("b", 8usize)?;
            let (h, m) = match (s.opt("h")?, s.opt("m")?) {
                (Some(h), Some(m)) => (h, m),
                (h, m) => {
                    let plan = plan_minibatch_for(&prob, b, s.get("c", (-1.0f64).exp())?)?;
                    (h.unwrap_or(plan.h), m.unwrap_or(plan.m.ceil() as usize))
                }
            };
            let cfg = Ms2gdConfig::new(b, m, h, s.get("epochs", 10usize)?, seed);
            match catch_up(s)? {
                None => ms2gd_solve(&prob, &cfg)?,
                Some(mode) => ms2gd_lazy_solve(&prob, &cfg, mode)?,
            }
        }
        "cocoa" => {
            let part = nodes(4)?;
            let k = part.k;
            let iters = s.get("local_iters", part.sizes().into_iter().max().unwrap_or(1))?;
            let rounds = s.get("rounds", 50usize)?;
            let mut cfg = match s.raw("aggregation").unwrap_or("adding") {
                "adding" => CocoaConfig::adding(k, iters, rounds, seed),
                "averaging" => CocoaConfig::averaging(k, iters, rounds, seed),
                other => return bad(format!("unknown aggregation {other:?}")),
            };
            if let Some(nu) = s.opt("nu")? {
                cfg.nu = nu;
            }
            if let Some(sp) = s.opt("sigma_prime")? {
                cfg.sigma_prime = sp;
            }
            cfg.solver = LocalSolver::parse(s.raw("local_solver").unwrap_or("cd"))?;
            cfg.threads = threads;
            cfg.gap_tol = s.opt("gap_tol")?;
            cfg.bits_per_value = bits;
            let out = cocoa_solve(&prob, &part, &cfg)?;
            (out.w, out.trace)
        }
        "fsvrg" => {
            let part = nodes(4)?;
            let h = match s.opt("h")? {
                Some(h) => h,
                None => 1.0 / prob.constants().smooth()?.0,
            };
            let mut cfg = FsvrgConfig::new(h, s.get("rounds", 20usize)?, seed);
            cfg.local_scaling = s.flag("local_scaling", true)?;
            cfg.aggregation_scaling = s.flag("aggregation_scaling", true)?;
            cfg.sampling = match s.raw("sampling").unwrap_or("permutation") {
                "permutation" | "perm" => LocalSampling::Permutation,
                "replacement" | "replace" => {
                    LocalSampling::WithReplacement(s.get("m", part.sizes().into_iter().max().unwrap_or(1))?)
                }
                other => return bad(format!("unknown sampling {other:?}")),
            };
            cfg.threads = threads;
            cfg.bits_per_value = bits;
            fsvrg_solve(&prob, &part, &cfg)?
        }
        "dane" => {
            let part = nodes(4)?;
            let default_local = if loss == LossKind::Quadratic { "exact" } else { "s2gd" };
            let local = match s.raw("local").unwrap_or(default_local) {
                "exact" => DaneLocal::Exact,
                "s2gd" => {
                    let l = prob.constants().smooth()?.0;
                    DaneLocal::S2gd {
                        m: s.get("m", part.sizes().into_iter().max().unwrap_or(1))?,
                        h: s.get("h", 0.1 / l)?,
                    }
                }
                other => return bad(format!("unknown DANE local solver {other:?}")),
            };
            let mut cfg = DaneConfig::new(local, s.get("rounds", 20usize)?, seed);
            cfg.eta = s.get("eta", 1.0)?;
            cfg.mu = s.get("mu", 0.0)?;
            cfg.bits_per_value = bits;
            dane_solve(&prob, &part, &cfg)?
        }
        _ => unreachable!("checked above"),
    };
    Ok(SolveOutcome { w, trace, fingerprint: ds.fingerprint() })
}

/// `solve`: runs, writes the trace (plus a `.meta` echo next to `--out`), maps divergence to exit 3.
pub fn solve(s: &Settings, seed: u64) -> CliResult<()> {
    let out = run_solver(s, seed)?;
    let timing = !s.flag("no_timing", false)?;
    let path = s.raw("out");
    write_trace(sink(path)?, &out.trace, timing)?;
    if let Some(p) = path.filter(|p| *p != "-") {
        let mut meta = std::fs::File::create(format!("{p}.meta"))?;
        write!(
            meta,
            "# algorithm = {}\n# seed = {}\n# data_fingerprint = {:016x}\n# status = {:?}\n{}",
            out.trace.algorithm,
            seed,
            out.fingerprint,
            out.trace.status,
            s.echo()
        )?;
    }
    let last = out.trace.final_objective();
    eprintln!(
        "{}: {} records, final objective {}, status {:?}",
        out.trace.algorithm,
        out.trace.records.len(),
        num(last),
        out.trace.status
    );
    if out.trace.diverged() {
        return Err(CliError::Diverged(format!("objective reached {}", num(last))));
    }
    Ok(())
}

/// One row of the work table: `work[0]` for `nu = mu`, `work[1]` for `nu = 0`, in units of `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanRow {
    pub eps: f64,
    pub kappa: f64,
    pub k: usize,
    pub work: [Option<f64>; 2],
}

/// Planned work for every `(eps, kappa, k)`; infeasible cells are `None`.
pub fn plan_rows(n: f64, eps: &[f64], kappa: &[f64], ks: &[usize]) -> CliResult<Vec<PlanRow>> {
    let mut rows = Vec::new();
    for &e in eps {
        if !(e > 0.0 && e < 1.0) {
            return bad(format!("eps = {e} must lie in (0, 1)"));
        }
        for &kap in kappa {
            if !(kap >= 1.0) {
                return bad(format!("kappa = {kap} must be at least 1"));
            }
            for &k in ks {
                if k == 0 {
                    return bad("k must be at least 1");
                }
                let cell = |mode| plan_work(n, kap, 1.0, e, mode, Some(k)).ok().map(|p| p.work / n);
                rows.push(PlanRow { eps: e, kappa: kap, k, work: [cell(NuMode::Mu), cell(NuMode::Zero)] });
            }
        }
    }
    Ok(rows)
}

/// Marks the smallest finite entry of column `col` within each `(eps, kappa)` block.
pub fn block_minima(rows: &[PlanRow], col: usize) -> Vec<bool> {
    rows.iter()
        .map(|r| {
            let Some(v) = r.work[col] else { return false };
            rows.iter()
                .filter(|o| o.eps == r.eps && o.kappa == r.kappa)
                .filter_map(|o| o.work[col])
                .all(|o| v <= o)
        })
        .collect()
}

pub fn plan(s: &Settings) -> CliResult<()> {
    let n = s.get("n", 1e9)?;
    let eps = s.list("eps")?.unwrap_or_else(|| vec![1e-6]);
    let kappa = s.list("kappa")?.unwrap_or_else(|| vec![1e3]);
    let ks = s.list("k_list")?.unwrap_or_else(|| (1..=10).collect());
    let cols: Vec<usize> = match s.raw("nu").unwrap_or("both") {
        "mu" => vec![0],
        "0" | "zero" => vec![1],
        "both" => vec![0, 1],
        other => return bad(format!("--nu must be mu, 0 or both, got {other:?}")),
    };
    let rows = plan_rows(n, &eps, &kappa, &ks)?;
    let minima: Vec<Vec<bool>> = (0..2).map(|c| block_minima(&rows, c)).collect();
    let mut w = csv::Writer::from_writer(sink(s.raw("out"))?);
    let names = ["mu", "0"];
    let mut header = vec!["eps".to_string(), "kappa".to_string(), "k".to_string()];
    for &c in &cols {
        header.push(format!("work_{}", names[c]));
        header.push(format!("min_{}", names[c]));
    }
    w.write_record(&header)?;
    for (i, r) in rows.iter().enumerate() {
        let mut rec = vec![num(r.eps), num(r.kappa), r.k.to_string()];
        for &c in &cols {
            rec.push(r.work[c].map_or_else(|| "infeasible".to_string(), |v| format!("{}n", work_cell(v))));
            rec.push(if minima[c][i] { "*".into() } else { String::new() });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn meanest(s: &Settings, seed: u64) -> CliResult<()> {
    let dist = match s.raw("dist").unwrap_or("gauss") {
        "chisq" => BatchDist::ChiSq(2),
        other => BatchDist::parse(other)?,
    };
    let (n, d) = (s.get("n", 16usize)?, s.get("d", 512usize)?);
    if n == 0 || d == 0 {
        return bad("need n >= 1 and d >= 1");
    }
    let budgets = match s.list::<f64>("budgets")? {
        Some(b) => b,
        None => (1..=10).map(|i| 0.05 * i as f64 * (n * d) as f64).collect(),
    };
    if budgets.is_empty() || budgets.iter().any(|&b| !(b > 0.0)) {
        return bad("budgets must be positive");
    }
    let strategies = match s.list::<String>("strategies")? {
        Some(v) => v.iter().map(|x| Strategy::parse(x)).collect::<Result<Vec<_>, _>>()?,
        None => vec![Strategy::Uniform, Strategy::OptimalP, Strategy::OptimalBoth, Strategy::Binary],
    };
    let samples = s.get("mc_samples", 1000usize)?;
    let batch = vropt_core::meanest::synth_batch::<f64>(dist, n, d, seed);
    let mut cost = CostModel::new(Protocol::Sparse);
    cost.r = s.get("bits", 32.0)?;
    let rows = tradeoff_sweep(&batch, &budgets, &strategies, &cost, samples, seed)?;
    let mut w = csv::Writer::from_writer(sink(s.raw("out"))?);
    w.write_record(["strategy", "B", "expected_bits", "analytic_mse", "empirical_mse", "mc_stderr"])?;
    for r in rows {
        let b = if r.strategy == Strategy::Binary { String::new() } else { num(r.budget) };
        w.write_record([
            r.strategy.name().to_string(),
            b,
            num(r.expected_bits),
            num(r.analytic_mse),
            num(r.empirical_mse),
            num(r.mc_stderr),
        ])?;
    }
    w.flush()?;
    Ok(())
}
