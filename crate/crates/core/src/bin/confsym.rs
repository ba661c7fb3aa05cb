use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Arg, ArgMatches, Command};

use confsym::config::{self, Config, EXPERIMENTS};
use confsym::experiments;
use confsym::report::Report;
use confsym::Error;

const ABOUT: &[(&str, &str)] = &[
    ("conformality", "Estimate the conformality ratio of a map or time-t flow map"),
    ("isotropy", "Restrict ω to a submanifold and report its size and rank"),
    ("entropy", "Itinerary-count entropy lower bound"),
    ("volume-growth", "Logarithmic volume growth of a submanifold"),
    ("liouville", "Liouville-class homothety, fixed class and escape"),
    ("exactness", "Exactness transforms for maps and flows"),
    ("action-scaling", "Action difference of two exact graphs under fiber scaling"),
    ("escape", "Fiber-norm extrema along the orbit of a graph"),
    ("lecalvez-curve", "Tonelli bound, invariant non-graph curve and convergence"),
    ("reproduce-all", "Run every acceptance check"),
];

fn cli() -> Command {
    let mut cmd = Command::new("confsym")
        .version(confsym::report::VERSION)
        .about("Numerical laboratory for conformal symplectic dynamics")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about) in ABOUT {
        let mut sub = Command::new(*name)
            .about(*about)
            .arg(Arg::new("config").long("config").value_name("FILE").help("key = value settings file"))
            .arg(Arg::new("out").long("out").value_name("DIR").default_value("confsym-out").help("report directory"))
            .arg(Arg::new("stem").long("stem").value_name("NAME").help("file stem (default: the subcommand)"));
        for (key, default) in config::defaults(name).expect("table covers every subcommand") {
            sub = sub.arg(Arg::new(*key).long(*key).value_name("VALUE").allow_negative_numbers(true).help(format!("default {default}")));
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn flags(name: &str, m: &ArgMatches) -> Vec<(String, String)> {
    config::defaults(name)
        .expect("known subcommand")
        .iter()
        .filter_map(|(k, _)| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect()
}

fn threads() -> Result<(), Error> {
    if let Ok(raw) = std::env::var("CONFSYM_THREADS") {
        let n: usize = raw.parse().map_err(|_| Error::Usage(format!("CONFSYM_THREADS must be a positive integer, got {raw}")))?;
        if n == 0 {
            return Err(Error::Usage("CONFSYM_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn execute(name: &str, m: &ArgMatches) -> Result<Report, Error> {
    let file = match m.get_one::<String>("config") {
        Some(path) => config::parse_file(&std::fs::read_to_string(path)?)?,
        None => Vec::new(),
    };
    let cfg = Config::resolve(name, &file, &flags(name, m))?;
    let start = Instant::now();
    let outcome = experiments::run(&cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    log::info!("{name} finished in {elapsed:.2} s");
    Ok(Report::new(name, cfg.seed()?, cfg.echo(), outcome, elapsed))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    debug_assert!(EXPERIMENTS.contains(&name));
    if let Err(e) = threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let report = match execute(name, sub) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            let usage = matches!(e, Error::Usage(_) | Error::InvalidParameter(_) | Error::NotApplicable(_));
            return ExitCode::from(if usage { 2 } else { 1 });
        }
    };
    let dir = PathBuf::from(sub.get_one::<String>("out").expect("has default"));
    let stem = sub.get_one::<String>("stem").cloned().unwrap_or_else(|| name.to_string());
    match report.write(&dir, &stem) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    for c in &report.checks {
        println!(
            "{} {} measured={} expected={} tolerance={:e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.expected,
            c.tolerance
        );
    }
    let failures = report.failures();
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in failures {
            eprintln!("failed check: {f}");
        }
        ExitCode::from(1)
    }
}
