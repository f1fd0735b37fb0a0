//! Command-line front end: `solve`, `plan`, `meanest` and `verify`.

pub mod commands;
pub mod config;
pub mod data;
pub mod output;
pub mod verify;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};
use config::{default_seed, normalize_key, parse_config_file, CliError, CliResult, Settings};
use std::collections::BTreeMap;
use std::ffi::OsString;

fn value(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).value_name("VALUE").help(help)
}

fn switch(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).action(ArgAction::SetTrue).help(help)
}

fn common(cmd: Command) -> Command {
    cmd.arg(value("config", "File of `key = value` lines; flags take precedence"))
        .arg(value("seed", "Random seed (default: $VROPT_SEED or 0)"))
        .arg(value("out", "Output CSV path (default: stdout)"))
}

pub fn cli() -> Command {
    let solve = common(Command::new("solve").about("Run a solver and write its trace"))
        .arg(value("algo", "s2gd | s2gd+ | s2cd | ms2gd | cocoa | fsvrg | dane"))
        .arg(value("data", "synth:ridge:n=..,d=..,kappa=.. | synth:classification:.. | synth:sparse:.. | libsvm path"))
        .arg(value("loss", "quadratic | logistic | hinge | squared_hinge"))
        .arg(value("reg", "l2 | l1 | elastic | none"))
        .arg(value("lambda", "Regularization weight"))
        .arg(value("lambda-l1", "L1 weight of the elastic net"))
        .arg(value("epochs", "Outer iterations of the serial solvers"))
        .arg(value("rounds", "Communication rounds of the distributed solvers"))
        .arg(value("m", "Inner-loop length / local steps"))
        .arg(value("h", "Step size"))
        .arg(value("nu", "S2GD law parameter, or CoCoA+ aggregation weight"))
        .arg(value("eps", "Target accuracy used by the planners"))
        .arg(value("b", "Mini-batch size"))
        .arg(value("c", "Target contraction of the mini-batch planner"))
        .arg(value("alpha", "S2GD+ inner length as a multiple of n"))
        .arg(value("sgd-step", "Step of the S2GD+ warm-start pass"))
        .arg(value("path", "eager | lazy | lazy-replay"))
        .arg(value("k", "Number of nodes"))
        .arg(value("partition", "contiguous | roundrobin | label"))
        .arg(value("aggregation", "adding | averaging (CoCoA+)"))
        .arg(value("sigma-prime", "CoCoA+ subproblem parameter"))
        .arg(value("local-solver", "cd | gd (CoCoA+)"))
        .arg(value("local-iters", "Local iterations per round (CoCoA+)"))
        .arg(value("gap-tol", "Stop once the duality gap falls below this"))
        .arg(value("local", "exact | s2gd (DANE)"))
        .arg(value("eta", "DANE gradient weight"))
        .arg(value("mu", "DANE proximal weight"))
        .arg(value("local-scaling", "true | false (FSVRG)"))
        .arg(value("aggregation-scaling", "true | false (FSVRG)"))
        .arg(value("sampling", "permutation | replacement (FSVRG)"))
        .arg(value("bits", "Bits per communicated value"))
        .arg(value("threads", "Worker threads for node-parallel solvers"))
        .arg(switch("add-bias", "Append a constant feature"))
        .arg(switch("no-timing", "Leave the ms column empty for reproducible output"));
    let plan = common(Command::new("plan").about("Tabulate the planned S2GD work"))
        .arg(value("n", "Number of examples"))
        .arg(value("kappa", "Condition number(s), comma separated"))
        .arg(value("eps", "Accuracy target(s), comma separated"))
        .arg(value("nu", "mu | 0 | both"))
        .arg(value("k-list", "Epoch counts, comma separated"));
    let meanest = common(Command::new("meanest").about("Sweep the mean-estimation cost/error trade-off"))
        .arg(value("dist", "gauss | laplace | chisq"))
        .arg(value("n", "Number of nodes"))
        .arg(value("d", "Dimension"))
        .arg(value("budgets", "Expected support sizes, comma separated"))
        .arg(value("strategies", "uniform,optimal_p,optimal_both,binary"))
        .arg(value("mc-samples", "Monte Carlo repetitions"))
        .arg(value("bits", "Bits per float"));
    let verify = common(Command::new("verify").about("Run invariant suites"))
        .arg(value("suite", "equivalence | lazy | mse | gap | properties | all"))
        .arg(value("mc-samples", "Monte Carlo repetitions for the mse suite"));
    Command::new("vropt")
        .about("Variance-reduced, distributed and federated optimization experiments")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommands([solve, plan, meanest, verify])
}

/// Settings of a subcommand: flags given on the command line over the config file.
fn settings(cmd: &Command, m: &ArgMatches) -> CliResult<Settings> {
    let mut flags = BTreeMap::new();
    for id in m.ids() {
        let id = id.as_str();
        if m.value_source(id) != Some(ValueSource::CommandLine) {
            continue;
        }
        let v = match m.get_raw(id) {
            Some(vals) => vals.map(|v| v.to_string_lossy().into_owned()).collect::<Vec<_>>().join(","),
            None => continue,
        };
        let v = if m.get_flag_opt(id) { "true".into() } else { v };
        flags.insert(normalize_key(id), v);
    }
    let file = match flags.get("config") {
        Some(path) => parse_config_file(
            &std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {path}: {e}")))?,
        )?,
        None => BTreeMap::new(),
    };
    let known: Vec<String> = cmd.get_arguments().map(|a| normalize_key(a.get_id().as_str())).filter(|k| k != "config").collect();
    Settings::layered(file, flags, &known)
}

trait FlagOpt {
    fn get_flag_opt(&self, id: &str) -> bool;
}

impl FlagOpt for ArgMatches {
    fn get_flag_opt(&self, id: &str) -> bool {
        self.try_get_one::<bool>(id).ok().flatten().copied().unwrap_or(false)
    }
}

fn seed_of(s: &Settings) -> CliResult<u64> {
    match s.opt::<u64>("seed")? {
        Some(v) => Ok(v),
        None => default_seed(),
    }
}

fn dispatch(name: &str, cmd: &Command, m: &ArgMatches) -> CliResult<()> {
    let s = settings(cmd, m)?;
    match name {
        "solve" => {
            if !s.has("algo") {
                let mut c = cmd.clone().bin_name("vropt solve");
                eprintln!("{}", c.render_usage());
                return Err(CliError::Config("missing required --algo".into()));
            }
            commands::solve(&s, seed_of(&s)?)
        }
        "plan" => commands::plan(&s),
        "meanest" => commands::meanest(&s, seed_of(&s)?),
        "verify" => {
            let suite = s.raw("suite").unwrap_or("all").to_string();
            let outcomes = verify::run_suite(&suite, seed_of(&s)?, s.get("mc_samples", 2000usize)?)?;
            let mut failed = Vec::new();
            for o in &outcomes {
                match &o.result {
                    Ok(d) => println!("PASS {}: {d}", o.name),
                    Err(d) => {
                        println!("FAIL {}: {d}", o.name);
                        failed.push(o.name);
                    }
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Check(failed.join(", ")))
            }
        }
        _ => unreachable!("clap rejects unknown subcommands"),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let app = cli();
    let matches = match app.clone().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let cmd = app.find_subcommand(name).expect("known subcommand");
    match dispatch(name, cmd, sub) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
