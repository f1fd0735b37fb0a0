use std::path::Path;
use std::process::{Command, Output};

const RIDGE: &str = "synth:ridge:n=300,d=20,kappa=50";

fn vropt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vropt")).args(args).env_remove("VROPT_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn column(csv: &str, col: usize) -> Vec<f64> {
    csv.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

#[test]
fn solve_writes_a_decreasing_trace() {
    let o = vropt(&["solve", "--algo", "s2gd", "--data", RIDGE, "--epochs", "10", "--no-timing"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().next().unwrap(), "step,passes,objective,gap,grad_norm,bits,ms");
    let obj = column(&out, 2);
    assert_eq!(obj.len(), 10);
    assert!(obj.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.lines().skip(1).all(|l| l.ends_with(',')));
}

#[test]
fn missing_algorithm_is_a_config_error() {
    let o = vropt(&["solve", "--data", RIDGE]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_and_bad_values_exit_2() {
    assert_eq!(vropt(&["solve", "--algo", "s2gd", "--bogus", "1"]).status.code(), Some(2));
    assert_eq!(vropt(&["solve", "--algo", "nope", "--data", RIDGE]).status.code(), Some(2));
    assert_eq!(vropt(&["meanest", "--budgets", "0"]).status.code(), Some(2));
    assert_eq!(vropt(&["verify", "--suite", "nope"]).status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let o = vropt(&["solve", "--algo", "s2gd", "--data", RIDGE, "--m", "2000", "--h", "50", "--nu", "0", "--no-timing"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn untimed_runs_are_byte_identical() {
    for algo in ["s2gd", "ms2gd", "cocoa", "fsvrg"] {
        let args = ["solve", "--algo", algo, "--data", RIDGE, "--seed", "9", "--no-timing"];
        let a = vropt(&args);
        assert_eq!(a.status.code(), Some(0), "{algo}");
        assert_eq!(a.stdout, vropt(&args).stdout, "{algo}");
    }
}

#[test]
fn environment_seed_is_the_default() {
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_vropt"));
        cmd.args(["solve", "--algo", "s2gd", "--data", RIDGE, "--epochs", "3", "--no-timing"]);
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        match env {
            Some(s) => cmd.env("VROPT_SEED", s),
            None => cmd.env_remove("VROPT_SEED"),
        };
        cmd.output().unwrap().stdout
    };
    assert_eq!(run(Some("5"), None), run(None, Some("5")));
    assert_eq!(run(Some("5"), Some("6")), run(None, Some("6")));
    assert_ne!(run(Some("5"), None), run(None, Some("6")));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("# ridge run\nalgo = s2gd\ndata = {RIDGE}\nepochs = 4\nno-timing = true\n")).unwrap();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(column(&stdout(&vropt(&["solve", "--config", cfg])), 0).len(), 4);
    assert_eq!(column(&stdout(&vropt(&["solve", "--config", cfg, "--epochs", "2"])), 0).len(), 2);
    std::fs::write(dir.path().join("bad.cfg"), "algo = s2gd\nwhatever = 1\n").unwrap();
    let bad = dir.path().join("bad.cfg");
    assert_eq!(vropt(&["solve", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn output_file_gets_a_settings_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = vropt(&["solve", "--algo", "s2gd", "--data", RIDGE, "--epochs", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let trace = std::fs::read_to_string(&out).unwrap();
    assert_eq!(column(&trace, 0), [1.0, 2.0]);
    let meta = Path::new(&format!("{}.meta", out.display())).to_path_buf();
    assert!(std::fs::read_to_string(meta).unwrap().contains("algo"));
}

#[test]
fn plan_prints_the_first_block() {
    let o = vropt(&["plan", "--n", "1e9", "--eps", "1e-3", "--kappa", "1e3", "--k-list", "1,2,3"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "eps,kappa,k,work_mu,min_mu,work_0,min_0");
    assert!(rows[1].contains("1.06n,*,17.0n"), "{}", rows[1]);
    assert!(rows[2].contains("2.00n,,2.03n,*"), "{}", rows[2]);
}

#[test]
fn meanest_is_deterministic_per_seed() {
    let args = ["meanest", "--n", "4", "--d", "32", "--budgets", "16,64", "--mc-samples", "50", "--seed", "3"];
    let a = vropt(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, vropt(&args).stdout);
    let out = stdout(&a);
    assert_eq!(out.lines().next().unwrap(), "strategy,B,expected_bits,analytic_mse,empirical_mse,mc_stderr");
}

#[test]
fn verify_reports_pass_lines() {
    let o = vropt(&["verify", "--suite", "equivalence"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(!out.is_empty() && out.lines().all(|l| l.starts_with("PASS ")), "{out}");
}
