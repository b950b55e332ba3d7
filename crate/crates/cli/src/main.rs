use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ricci_core::report::{
    parse_chain_file, run_analyze, sweep_csv, sweep_json, sweep_row, AnalysisConfig, InputError, SweepRow,
};
use ricci_core::verifier::CHECK_IDS;
use ricci_core::{make_family, FamilySpec, MarkovTriple};

/// Entropic Ricci curvature and functional inequalities of finite reversible
/// Markov chains.
#[derive(Parser)]
#[command(name = "ricci", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the curvature of one chain and verify every consequence.
    Analyze(Common),
    /// Tabulate constants over a range of one family parameter.
    Sweep(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// JSON chain file.
    #[arg(long, conflicts_with = "family")]
    chain: Option<PathBuf>,
    /// two_point, complete, torus, hypercube, zero_range or random_reversible.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long = "L")]
    l: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long = "K")]
    k: Option<String>,
    #[arg(long)]
    density: Option<String>,
    /// Seed of a random_reversible chain.
    #[arg(long)]
    family_seed: Option<String>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Path segments for transport distances.
    #[arg(long, default_value_t = 32)]
    steps: usize,
    #[arg(long, default_value_t = 16)]
    starts: usize,
    /// Random samples per check.
    #[arg(long, default_value_t = 24)]
    samples: usize,
    /// Comma-separated check ids, or `all`.
    #[arg(long, default_value = "all")]
    checks: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    emit: Option<Emit>,
}

/// Failure kinds mapped onto exit codes.
enum Failure {
    Input(String),
    Checks,
}

/// `a..b` (inclusive, integer steps), `a,b,c` or a single number.
fn parse_values(flag: &str, raw: &str) -> Result<Vec<f64>, String> {
    let number = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("--{flag}: cannot parse {s:?}"));
    if let Some((a, b)) = raw.split_once("..") {
        let (a, b) = (number(a)?, number(b)?);
        if a.fract() != 0.0 || b.fract() != 0.0 || a > b {
            return Err(format!("--{flag}: range {raw} must be increasing integers"));
        }
        return Ok((a as i64..=b as i64).map(|v| v as f64).collect());
    }
    raw.split(',').map(number).collect()
}

impl Common {
    fn config(&self) -> Result<AnalysisConfig, String> {
        let checks = if self.checks == "all" {
            None
        } else {
            let ids: Vec<String> = self.checks.split(',').map(|s| s.trim().to_string()).collect();
            if let Some(bad) = ids.iter().find(|id| !CHECK_IDS.contains(&id.as_str())) {
                return Err(format!("unknown check {bad}; known: {}", CHECK_IDS.join(",")));
            }
            Some(ids)
        };
        Ok(AnalysisConfig { seed: self.seed, steps: self.steps, starts: self.starts, samples: self.samples, checks })
    }

    /// Family parameters; at most one may take several values.
    fn family_params(&self) -> Result<(Option<String>, Vec<BTreeMap<String, f64>>), String> {
        let flags = [
            ("p", &self.p),
            ("q", &self.q),
            ("L", &self.l),
            ("d", &self.d),
            ("n", &self.n),
            ("K", &self.k),
            ("density", &self.density),
            ("seed", &self.family_seed),
        ];
        let mut base = BTreeMap::new();
        let mut varying: Option<(String, Vec<f64>)> = None;
        for (name, raw) in flags {
            let Some(raw) = raw else { continue };
            let values = parse_values(name, raw)?;
            if values.len() == 1 {
                base.insert(name.to_string(), values[0]);
            } else if varying.is_some() {
                return Err("only one family parameter may vary".into());
            } else {
                varying = Some((name.to_string(), values));
            }
        }
        Ok(match varying {
            None => (None, vec![base]),
            Some((name, values)) => {
                let sets = values
                    .iter()
                    .map(|&v| {
                        let mut p = base.clone();
                        p.insert(name.clone(), v);
                        p
                    })
                    .collect();
                (Some(name), sets)
            }
        })
    }
}

fn build_family(name: &str, params: &BTreeMap<String, f64>) -> Result<(MarkovTriple, String), String> {
    let spec = FamilySpec::from_params(name, params).map_err(|e| e.to_string())?;
    let chain = make_family(&spec).map_err(|e| e.to_string())?;
    let source = describe(&spec);
    Ok((chain, source))
}

/// `name(k=v, ...)` description of a spec.
fn describe(spec: &FamilySpec) -> String {
    let fields = match *spec {
        FamilySpec::TwoPoint { p, q } => format!("p={p}, q={q}"),
        FamilySpec::Complete { l } => format!("L={l}"),
        FamilySpec::Torus { l, d } => format!("L={l}, d={d}"),
        FamilySpec::Hypercube { n } => format!("n={n}"),
        FamilySpec::ZeroRange { k, l } => format!("K={k}, L={l}"),
        FamilySpec::RandomReversible { n, density, seed } => format!("n={n}, density={density}, seed={seed}"),
    };
    format!("{}({fields})", spec.name())
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Failure::Input(e.to_string()))
        }
    }
}

fn analyze(args: &Common) -> Result<(), Failure> {
    let cfg = args.config().map_err(Failure::Input)?;
    let (chain, source) = match (&args.chain, &args.family) {
        (Some(path), _) => {
            let chain = parse_chain_file(path).map_err(|e: InputError| Failure::Input(e.to_string()))?;
            (chain, path.display().to_string())
        }
        (None, Some(name)) => {
            let (_, sets) = args.family_params().map_err(Failure::Input)?;
            if sets.len() != 1 {
                return Err(Failure::Input("analyze takes single parameter values; use sweep for ranges".into()));
            }
            build_family(name, &sets[0]).map_err(Failure::Input)?
        }
        (None, None) => return Err(Failure::Input("one of --chain or --family is required".into())),
    };
    let report = run_analyze(&chain, &source, &cfg);
    let text = match args.emit.unwrap_or(Emit::Json) {
        Emit::Json => report.to_json(),
        Emit::Csv => {
            let mut text = String::from("check_id,passed,skipped,trials,worst_slack,tolerance\n");
            for r in &report.checks {
                let slack = r.worst_slack.map_or(String::new(), |s| s.to_string());
                text.push_str(&format!("{},{},{},{},{},{}\n", r.check_id, r.passed, r.skipped, r.trials, slack, r.tolerance));
            }
            text
        }
    };
    write_output(&args.out, &text)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn sweep(args: &Common) -> Result<(), Failure> {
    let cfg = args.config().map_err(Failure::Input)?;
    let Some(name) = &args.family else {
        return Err(Failure::Input("sweep needs --family".into()));
    };
    let (varying, sets) = args.family_params().map_err(Failure::Input)?;
    let mut rows: Vec<SweepRow> = Vec::with_capacity(sets.len());
    let mut failed = false;
    for params in &sets {
        let (chain, source) = build_family(name, params).map_err(Failure::Input)?;
        let param = varying.as_ref().map_or(f64::NAN, |v| params[v]);
        match sweep_row(&chain, param, &cfg) {
            Ok(row) => rows.push(row),
            Err(e) => {
                eprintln!("{source}: {e}");
                failed = true;
            }
        }
    }
    let text = match args.emit.unwrap_or(Emit::Csv) {
        Emit::Csv => sweep_csv(&rows),
        Emit::Json => sweep_json(&rows),
    };
    write_output(&args.out, &text)?;
    if failed {
        Err(Failure::Checks)
    } else {
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("RICCI_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("warning: RICCI_THREADS ignored: {e}");
        }
    }
    let result = match &cli.command {
        Command::Analyze(args) => analyze(args),
        Command::Sweep(args) => sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Input(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
