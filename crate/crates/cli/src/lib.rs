//! Command-line front end for `ltm-core`: config ingestion, drivers and CSV emitters.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ltm_core::config::NetworkConfig;
use ltm_core::godunov::{compare_with_oracle, godunov_run};
use ltm_core::junction::{check_invariance, evaluate, JunctionModel, JunctionSpec};
use ltm_core::kernel::reconstruct_field;
use ltm_core::scenarios::{preset, PRESET_NAMES};
use ltm_core::sim::{run as run_sim, Trajectory};
use ltm_core::statics::{
    classify_stability, measure_decay_ratio, solve_statics_dm, solve_statics_merge, DecayEstimate, StaticsSolution,
};
use ltm_core::{LtmError, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONTRACT: i32 = 3;

/// Exit code for an engine error.
pub fn exit_code(err: &LtmError) -> i32 {
    match err.root() {
        LtmError::Config(_) | LtmError::Cfl { .. } | LtmError::Domain(_) => EXIT_CONFIG,
        LtmError::JunctionContract { .. } => EXIT_CONTRACT,
        _ => EXIT_OTHER,
    }
}

/// Nine significant digits, plain decimal where reasonable.
pub fn fmt9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let mag = x.abs().log10().floor() as i32;
    if (-5..9).contains(&mag) {
        let decimals = (8 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}

#[derive(Debug, Parser)]
#[command(name = "ltm", about = "Continuous link transmission model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a network configuration and write links.csv, junctions.csv and summary.txt.
    Simulate {
        config: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Simulate, then sample the density field of one link on a uniform grid.
    Reconstruct {
        config: PathBuf,
        #[arg(long)]
        link: String,
        #[arg(long, default_value_t = 101)]
        nx: usize,
        #[arg(long, default_value_t = 11)]
        nt: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Stationary states of a diverge-merge or merge network.
    Statics(StaticsArgs),
    /// Stability classification, plus the measured ratio of a links.csv trajectory.
    Stability(StabilityArgs),
    /// Evaluate one junction.
    JunctionEval(JunctionArgs),
    /// Compare a simulation with the cell-scheme oracle.
    Compare {
        config: PathBuf,
        /// Cell length; defaults to a thousandth of the longest link.
        #[arg(long)]
        dx: Option<f64>,
    },
    /// Print a shipped scenario as a configuration document.
    Preset { name: Option<String> },
}

/// Comma-separated numbers, one argument.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatList(pub Vec<f64>);

fn parse_list(s: &str) -> std::result::Result<FloatList, String> {
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"))).collect::<std::result::Result<_, _>>().map(FloatList)
}

#[derive(Debug, Args)]
pub struct StaticsArgs {
    /// Capacities C0,C1,C2,C3 of the diverge-merge network.
    #[arg(long, value_parser = parse_list, conflicts_with = "merge")]
    pub dm: Option<FloatList>,
    #[arg(long)]
    pub xi: Option<f64>,
    /// Capacities C1,C2,C3 of the merge network.
    #[arg(long, value_parser = parse_list)]
    pub merge: Option<FloatList>,
    /// Origin demands d1,d2 of the merge.
    #[arg(long, value_parser = parse_list)]
    pub d: Option<FloatList>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long, default_value = "invariant")]
    pub model: String,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long)]
    pub xi: f64,
    /// links.csv written by `simulate`.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[arg(long, default_value = "1")]
    pub link: String,
    #[arg(long)]
    pub fixed_point: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    pub period: f64,
}

#[derive(Debug, Args)]
pub struct JunctionArgs {
    /// Incoming capacities of a merge into one link.
    #[arg(long, value_parser = parse_list)]
    pub merge: Option<FloatList>,
    /// Incoming capacity of a diverge.
    #[arg(long)]
    pub diverge: Option<f64>,
    /// Outgoing capacities; a merge defaults to the sum of incoming capacities.
    #[arg(long, value_parser = parse_list)]
    pub out_caps: Option<FloatList>,
    /// Diverge turning proportions.
    #[arg(long, value_parser = parse_list)]
    pub split: Option<FloatList>,
    #[arg(long, value_parser = parse_list)]
    pub d: FloatList,
    #[arg(long, value_parser = parse_list)]
    pub s: FloatList,
    #[arg(long, default_value = "invariant")]
    pub model: String,
}

fn parse_model(s: &str) -> Result<JunctionModel> {
    match s {
        "invariant" => Ok(JunctionModel::InvariantFair),
        "noninvariant" => Ok(JunctionModel::NonInvariantFairMerge),
        other => other.parse(),
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(LtmError::Config(msg.into()))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> LtmError {
    LtmError::Config(format!("{}: {e}", path.display()))
}

fn csv_err(e: csv::Error) -> LtmError {
    LtmError::Config(format!("csv: {e}"))
}

/// Parse `args` (including the program name) and run; messages go to `out` and `err`.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if code == EXIT_OK { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<String> {
    match cmd {
        Command::Simulate { config, out } => {
            let cfg = NetworkConfig::load(&config)?;
            let summary = simulate(&cfg, &out)?;
            Ok(summary)
        }
        Command::Reconstruct { config, link, nx, nt, out } => {
            let cfg = NetworkConfig::load(&config)?;
            let text = reconstruct(&cfg, &link, nx, nt)?;
            match out {
                Some(p) => {
                    std::fs::write(&p, text).map_err(|e| io_err(&p, e))?;
                    Ok(String::new())
                }
                None => Ok(text),
            }
        }
        Command::Statics(a) => statics(&a),
        Command::Stability(a) => stability(&a),
        Command::JunctionEval(a) => junction_eval(&a),
        Command::Compare { config, dx } => compare(&NetworkConfig::load(&config)?, dx),
        Command::Preset { name } => match name {
            Some(n) => preset(&n)?.to_toml(),
            None => Ok(PRESET_NAMES.iter().map(|n| format!("{n}\n")).collect()),
        },
    }
}

/// Run `cfg` and write the three output files into `dir`; returns the summary text.
pub fn simulate(cfg: &NetworkConfig, dir: &Path) -> Result<String> {
    let net = cfg.build_network()?;
    let sim = cfg.sim_config()?;
    let traj = run_sim(net, sim)?;
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_links_csv(&traj, &dir.join("links.csv"))?;
    write_junctions_csv(&traj, &dir.join("junctions.csv"))?;
    let summary = summary(cfg, &traj)?;
    let p = dir.join("summary.txt");
    std::fs::write(&p, &summary).map_err(|e| io_err(&p, e))?;
    Ok(summary)
}

pub const LINKS_HEADER: [&str; 10] = ["t", "link_id", "F", "G", "lambda", "gamma", "demand", "supply", "f", "g"];

fn write_links_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(LINKS_HEADER).map_err(csv_err)?;
    for r in &traj.records {
        for (l, rec) in traj.network.links.iter().zip(&r.links) {
            let row = [
                fmt9(r.t),
                l.id().to_string(),
                fmt9(rec.cum_in),
                fmt9(rec.cum_out),
                fmt9(rec.lambda),
                fmt9(rec.gamma),
                fmt9(rec.demand),
                fmt9(rec.supply),
                fmt9(rec.inflow),
                fmt9(rec.outflow),
            ];
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_junctions_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["t", "junction_id", "theta", "port", "direction", "flux"]).map_err(csv_err)?;
    let net = &traj.network;
    for r in &traj.records {
        for (j, rec) in net.junctions.iter().zip(&r.junctions) {
            let ports = j
                .incoming
                .iter()
                .zip(&rec.g)
                .map(|(&a, &g)| (a, "in", g))
                .chain(j.outgoing.iter().zip(&rec.f).map(|(&b, &f)| (b, "out", f)));
            for (link, dir, flux) in ports {
                w.write_record([fmt9(r.t), j.id.clone(), fmt9(rec.theta), net.links[link].id().to_string(), dir.into(), fmt9(flux)])
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn summary(cfg: &NetworkConfig, traj: &Trajectory) -> Result<String> {
    let mut s = String::new();
    let net = &traj.network;
    let horizon = traj.steps as f64 * traj.dt;
    let _ = writeln!(s, "steps: {}", traj.steps);
    let _ = writeln!(s, "dt: {}", fmt9(traj.dt));
    let _ = writeln!(s, "horizon: {}", fmt9(horizon));
    let _ = writeln!(s, "formulation: {}", cfg.sim.formulation);
    let _ = writeln!(s, "max_conservation_drift: {}", fmt9(traj.max_conservation_drift));
    for (o, q) in net.origins.iter().zip(&traj.origin_queues) {
        let _ = writeln!(s, "origin {} queue: {}", o.id, fmt9(*q));
    }
    let tail_start = 0.8 * horizon;
    let _ = writeln!(s, "converged fluxes over [{}, {}]:", fmt9(tail_start), fmt9(horizon));
    for (a, l) in net.links.iter().enumerate() {
        let tail = |series: Vec<(f64, f64)>| -> (f64, f64, f64) {
            let v: Vec<f64> = series.into_iter().filter(|p| p.0 >= tail_start - 1e-9).map(|p| p.1).collect();
            let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (mean, lo, hi)
        };
        let (fm, flo, fhi) = tail(traj.link_series(a, |r| r.inflow));
        let (gm, glo, ghi) = tail(traj.link_series(a, |r| r.outflow));
        let _ = writeln!(
            s,
            "  link {}: f mean {} range [{}, {}]; g mean {} range [{}, {}]",
            l.id(),
            fmt9(fm),
            fmt9(flo),
            fmt9(fhi),
            fmt9(gm),
            fmt9(glo),
            fmt9(ghi)
        );
    }
    if let Some(st) = cfg.stability() {
        let class = classify_stability(st.xi)?;
        let _ = writeln!(s, "stability: {class} (xi = {})", fmt9(st.xi));
        let series = traj
            .inflow(&st.link)
            .ok_or_else(|| LtmError::Config(format!("stability analysis refers to unknown link `{}`", st.link)))?;
        match measure_decay_ratio(&series, st.period, st.fixed_point) {
            Ok(DecayEstimate::Ratio { value, periods }) => {
                let trend = if value.abs() > 1.0 { "growing" } else { "decaying" };
                let _ = writeln!(s, "measured ratio: {} over {periods} periods ({trend} oscillation)", fmt9(value));
                let _ = writeln!(s, "ratio magnitude: {}", fmt9(value.abs()));
            }
            Ok(DecayEstimate::ZeroSignal) => {
                let _ = writeln!(s, "measured ratio: none (zero signal)");
            }
            Err(e) => {
                let _ = writeln!(s, "measured ratio: none ({e})");
            }
        }
    }
    Ok(s)
}

/// Density CSV `x,t,k` of `link` after simulating `cfg`.
pub fn reconstruct(cfg: &NetworkConfig, link: &str, nx: usize, nt: usize) -> Result<String> {
    if nx < 2 || nt < 1 {
        return config_err("the grid needs nx >= 2 and nt >= 1");
    }
    let traj = run_sim(cfg.build_network()?, cfg.sim_config()?)?;
    let l = traj.network.link(link).ok_or_else(|| LtmError::Config(format!("unknown link `{link}`")))?;
    let data = l.domain_data()?;
    let len = l.length();
    let horizon = l.time();
    let xs: Vec<f64> = (0..nx).map(|i| len * i as f64 / (nx - 1) as f64).collect();
    let ts: Vec<f64> = if nt == 1 { vec![horizon] } else { (0..nt).map(|i| horizon * i as f64 / (nt - 1) as f64).collect() };
    let field = reconstruct_field(&data, &xs, &ts).map_err(|e| match e {
        LtmError::Feasibility { detail, .. } => LtmError::Feasibility { link: link.into(), detail },
        other => other,
    })?;
    let mut s = String::from("x,t,k\n");
    for (i, t) in field.ts.iter().enumerate() {
        for (j, x) in field.xs.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", fmt9(*x), fmt9(*t), fmt9(field.k[i][j]));
        }
    }
    Ok(s)
}

/// `solution,link,kind,q,beta_lo,beta_hi,lambda,gamma,unique` rows.
pub fn statics_table(solutions: &[StaticsSolution]) -> String {
    let mut s = String::from("solution,link,kind,q,beta_lo,beta_hi,lambda,gamma,unique\n");
    for (i, sol) in solutions.iter().enumerate() {
        for l in &sol.links {
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{},{},{}",
                l.link,
                l.kind,
                fmt9(l.q),
                fmt9(l.beta_lo),
                fmt9(l.beta_hi),
                fmt9(l.lambda),
                fmt9(l.gamma),
                sol.unique
            );
        }
    }
    s
}

fn statics(a: &StaticsArgs) -> Result<String> {
    let sols = match (&a.dm, &a.merge) {
        (Some(c), None) => {
            let [c0, c1, c2, c3] = c.0[..] else {
                return config_err("--dm needs four capacities");
            };
            let xi = a.xi.ok_or_else(|| LtmError::Config("--dm needs --xi".into()))?;
            solve_statics_dm(c0, c1, c2, c3, xi)?
        }
        (None, Some(c)) => {
            let [c1, c2, c3] = c.0[..] else {
                return config_err("--merge needs three capacities");
            };
            let d = a.d.as_ref().map(|v| v.0.as_slice()).unwrap_or(&[]);
            let [d1, d2] = d[..] else {
                return config_err("--merge needs --d d1,d2");
            };
            let s3 = a.s.ok_or_else(|| LtmError::Config("--merge needs --s".into()))?;
            solve_statics_merge(c1, c2, c3, d1, d2, s3, parse_model(&a.model)?)?
        }
        _ => return config_err("give exactly one of --dm or --merge"),
    };
    Ok(statics_table(&sols))
}

/// Inflow series of `link` from a links.csv file.
pub fn read_inflow(path: &Path, link: &str) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| io_err(path, format!("missing column `{name}`")));
    let (ct, cl, cf) = (col("t")?, col("link_id")?, col("f")?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if &rec[cl] != link {
            continue;
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| io_err(path, e));
        out.push((num(ct)?, num(cf)?));
    }
    if out.is_empty() {
        return config_err(format!("{} has no rows for link `{link}`", path.display()));
    }
    Ok(out)
}

fn stability(a: &StabilityArgs) -> Result<String> {
    let mut s = format!("{}\n", classify_stability(a.xi)?);
    if let Some(path) = &a.trajectory {
        let fp = a.fixed_point.ok_or_else(|| LtmError::Config("--trajectory needs --fixed-point".into()))?;
        let series = read_inflow(path, &a.link)?;
        match measure_decay_ratio(&series, a.period, fp)? {
            DecayEstimate::Ratio { value, periods } => {
                let _ = writeln!(s, "measured ratio: {} over {periods} periods", fmt9(value));
            }
            DecayEstimate::ZeroSignal => s.push_str("measured ratio: none (zero signal)\n"),
        }
    }
    Ok(s)
}

fn junction_eval(a: &JunctionArgs) -> Result<String> {
    let model = parse_model(&a.model)?;
    let spec = match (&a.merge, a.diverge) {
        (Some(caps), None) => {
            let out = a.out_caps.as_ref().and_then(|v| v.0.first().copied()).unwrap_or(caps.0.iter().sum());
            JunctionSpec::merge(&caps.0, out, model)?
        }
        (None, Some(c)) => {
            let split = a.split.as_ref().map(|v| v.0.as_slice()).ok_or_else(|| LtmError::Config("--diverge needs --split".into()))?;
            let outs = a.out_caps.clone().map(|v| v.0).unwrap_or_else(|| vec![c; split.len()]);
            JunctionSpec::diverge(c, &outs, split)?
        }
        _ => return config_err("give exactly one of --merge or --diverge"),
    };
    let (d, sup) = (&a.d.0, &a.s.0);
    let fl = evaluate(&spec, d, sup, None)?;
    let list = |v: &[f64]| v.iter().map(|x| fmt9(*x)).collect::<Vec<_>>().join(",");
    Ok(format!(
        "theta: {}\ng: {}\nf: {}\ninvariant: {}\n",
        fmt9(fl.theta),
        list(&fl.g),
        list(&fl.f),
        check_invariance(&spec, d, sup)?
    ))
}

fn compare(cfg: &NetworkConfig, dx: Option<f64>) -> Result<String> {
    let net = cfg.build_network()?;
    let longest = net.links.iter().map(|l| l.length()).fold(0.0, f64::max);
    let dx = dx.unwrap_or(longest / 1000.0);
    if !(dx > 0.0) {
        return config_err(format!("dx must be positive, got {dx}"));
    }
    let cells = (longest / dx).ceil() as usize;
    let horizon = cfg.sim_config()?.steps() as f64 * cfg.sim.dt;
    let snaps: Vec<f64> = (1..=4).map(|i| horizon * i as f64 / 4.0).collect();
    let oracle = godunov_run(&net, cells, None, horizon, &snaps)?;
    let traj = run_sim(net, cfg.sim_config()?)?;
    let c = compare_with_oracle(&traj, &oracle, 0.2)?;
    Ok(format!(
        "cells_per_link: {cells}\nsteady_samples: {}\nmax_flux_error_over_capacity: {}\nmax_density_l1_over_kl: {}\n",
        c.steady_samples,
        fmt9(c.max_flux_error),
        fmt9(c.max_density_l1)
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run_cli(std::iter::once("ltm").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt9(0.75), "0.75");
        assert_eq!(fmt9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt9(-2.0 / 3.0), "-0.666666667");
        assert_eq!(fmt9(12345.678912345), "12345.6789");
        assert_eq!(fmt9(1e-9), "1.00000000e-9");
        assert_eq!(fmt9(0.0), "0");
        assert_eq!(fmt9(-1e-20), "-1.00000000e-20");
    }

    #[test]
    fn junction_eval_proportional_merge() {
        let (code, out, _) = run(&["junction-eval", "--merge", "1,1", "--d", "1,0.25", "--s", "1", "--model", "noninvariant"]);
        assert_eq!(code, 0);
        assert!(out.contains("g: 0.8,0.2"), "{out}");
        assert!(out.contains("invariant: false"));
    }

    #[test]
    fn stability_marginal() {
        let (code, out, _) = run(&["stability", "--xi", "0.5"]);
        assert_eq!(code, 0);
        assert_eq!(out.trim(), "unstable (marginal)");
        assert_eq!(run(&["stability", "--xi", "0.6"]).1.trim(), "stable");
        assert_eq!(run(&["stability", "--xi", "1.5"]).0, EXIT_CONFIG);
    }

    #[test]
    fn statics_merge_table() {
        let (code, out, _) = run(&["statics", "--merge", "1,1,1", "--d", "1,0.25", "--s", "1"]);
        assert_eq!(code, 0);
        assert!(out.contains("0,1,SOC,0.75,1,1,"), "{out}");
        assert!(out.contains("0,2,SUC,0.25,0,0,"), "{out}");
        let (_, out, _) = run(&["statics", "--merge", "1,1,1", "--d", "1,0.25", "--s", "1", "--model", "noninvariant"]);
        assert_eq!(out.lines().count(), 1);
    }

    #[test]
    fn bad_arguments_exit_two() {
        assert_eq!(run(&["statics", "--dm", "3,1,2"]).0, EXIT_CONFIG);
        assert_eq!(run(&["frobnicate"]).0, EXIT_CONFIG);
        assert_eq!(run(&["simulate", "/nonexistent.cfg"]).0, EXIT_CONFIG);
    }

    #[test]
    fn exit_code_mapping() {
        let contract = LtmError::JunctionContract { link: "a".into(), detail: String::new() };
        assert_eq!(exit_code(&contract), EXIT_CONTRACT);
        let wrapped = LtmError::Step { step: 3, t: 0.1, source: Box::new(contract) };
        assert_eq!(exit_code(&wrapped), EXIT_CONTRACT);
        assert_eq!(exit_code(&LtmError::InsufficientData(String::new())), EXIT_OTHER);
    }
}
