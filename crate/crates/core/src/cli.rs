//! The `dpsqkd` command-line front end.
//!
//! Every flag may also be given in a `--config` file of `key = value` lines,
//! keyed by the long flag name; flags on the command line win.
//!
//! Exit status: 0 on success, 1 when a verification check fails or a run
//! cannot complete, 2 on usage or validation errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::{
    linear_grid, log_grid, sweep, write_sweep_csv, EcCost, KeyRatePoint, MuPolicy,
};
use crate::fock::{coherent_vector, FockOperator, DEFAULT_CUTOFF};
use crate::oracle::{
    check_phase_bit_relation, exact_phase_error, random_density, verify_weight_bounds, BoundCheck,
    ErrorOperatorSet, DETECTION_WEIGHTS, SLACK_TOL,
};
use crate::protocol::{run_protocol, ProtocolConfig, DEFAULT_SAMPLE_FRACTION, TALLY_CSV_HEADER};
use crate::record::Record;
use crate::source::{
    coherent_pchar, exact_pchar, CoherentSourceSpec, PhotonStats, PHOTON_STATS_KEYS,
};
use crate::{Error, Result};

/// Environment variable naming the directory for default output files.
pub const OUT_DIR_ENV: &str = "DPSQKD_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "dpsqkd",
    version,
    about = "Key rates and bound verification for DPS QKD"
)]
struct Cli {
    /// Flat key=value file supplying defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep the key rate over channel transmission and fluctuation levels.
    Keyrate(KeyrateArgs),
    /// Check the operator identities and every bound against exact values.
    Verify(VerifyArgs),
    /// Monte Carlo run of the protocol.
    Simulate(SimulateArgs),
    /// Photon statistics of a source.
    Pchar(PcharArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        <Format as ValueEnum>::from_str(s, true).map_err(Error::Usage)
    }
}

#[derive(Debug, Args)]
struct KeyrateArgs {
    /// Transmission grid: a value, a comma list, or start:stop:count[log].
    #[arg(long)]
    eta: Option<String>,
    /// Comma-separated fluctuation levels in percent.
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    ebit: Option<f64>,
    /// `optimize` or a fixed intensity.
    #[arg(long)]
    mu: Option<String>,
    /// Multiplier on h(e_bit) for the error-correction cost.
    #[arg(long)]
    ec_efficiency: Option<f64>,
    /// Output CSV; `-` for stdout. Defaults to keyrate.csv in $DPSQKD_OUT_DIR.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Random coherent pairs checked in addition to the structured grid.
    /// Zero restricts the report to the operator checks.
    #[arg(long)]
    pairs: Option<usize>,
    /// Random states for the phase-bit relation suite.
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cutoff: Option<usize>,
    /// Replace w2 in the operators (fault injection).
    #[arg(long)]
    perturb_w2: Option<f64>,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    blocks: Option<u64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Interferometer phase offset in radians.
    #[arg(long)]
    misalignment: Option<f64>,
    #[arg(long)]
    sample_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Extra bit-flip probability per detection.
    #[arg(long)]
    ebit_override: Option<f64>,
    /// Use `+√μ` for both bit values instead of a sign flip.
    #[arg(long)]
    no_phase_encoding: bool,
    #[arg(long)]
    ec_efficiency: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct PcharArgs {
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    /// Explicit states: `state0`/`state1` as `coherent RE IM` or
    /// `diagonal P0 P1 ...`, plus an optional `cutoff`.
    #[arg(long)]
    state_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<String>,
}

/// Flag values layered over an optional config record.
struct Layer {
    config: Record,
}

impl Layer {
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.config.parse_opt(key),
        }
    }

    fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.config.parse_opt::<bool>(key)?.unwrap_or(false))
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "dpsqkd: {e}");
            match e {
                Error::Io(_) | Error::NoDetections | Error::Truncation { .. } => EXIT_FAILURE,
                _ => EXIT_USAGE,
            }
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    let config = match &cli.config {
        Some(path) => Record::parse(&fs::read_to_string(path)?)?,
        None => Record::new(),
    };
    let layer = Layer { config };
    match cli.command {
        Command::Keyrate(args) => cmd_keyrate(&layer, args, stdout),
        Command::Verify(args) => cmd_verify(&layer, args, stdout),
        Command::Simulate(args) => cmd_simulate(&layer, args, stdout),
        Command::Pchar(args) => cmd_pchar(&layer, args, stdout),
    }
}

/// Parses a transmission grid: `0.5`, `0.1,0.5,1` or `start:stop:count[log]`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Usage(format!("cannot parse grid {text:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, stop, count] = parts[..] else {
            return Err(bad());
        };
        let (count, log) = match count.trim().strip_suffix("log") {
            Some(c) => (c, true),
            None => (count, false),
        };
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        let (start, stop) = (num(start)?, num(stop)?);
        if count == 0 {
            return Err(bad());
        }
        if log {
            if !(start > 0.0 && stop > 0.0) {
                return Err(Error::Usage(format!(
                    "log grid {text:?} needs positive bounds"
                )));
            }
            Ok(log_grid(start, stop, count))
        } else {
            Ok(linear_grid(start, stop, count))
        }
    } else {
        text.split(',').map(num).collect()
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("cannot parse list {text:?}")))
        })
        .collect()
}

fn parse_mu_policy(text: &str) -> Result<MuPolicy> {
    match text.trim() {
        "optimize" | "optimise" | "opt" => Ok(MuPolicy::Optimized),
        other => {
            let mu: f64 = other.parse().map_err(|_| {
                Error::Usage(format!(
                    "--mu expects `optimize` or a number, got {other:?}"
                ))
            })?;
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::domain("mu", mu, "(0, inf)"));
            }
            Ok(MuPolicy::Fixed(mu))
        }
    }
}

fn default_out(name: &str) -> PathBuf {
    let dir = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from);
    dir.join(name)
}

fn check_range(name: &'static str, value: f64, ok: bool, domain: &'static str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::domain(name, value, domain))
    }
}

/// Writes `text` to `out` (a path or `-`) or to stdout when absent.
fn emit(out: Option<&str>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        None | Some("-") => stdout.write_all(text.as_bytes())?,
        Some(path) => fs::write(path, text)?,
    }
    Ok(())
}

fn cmd_keyrate(layer: &Layer, args: KeyrateArgs, stdout: &mut dyn Write) -> Result<i32> {
    let etas = parse_grid(&layer.or(args.eta, "eta", "0.001:1:50log".to_string())?)?;
    let a_list = parse_list(&layer.or(args.a, "a", "0,1,3,5".to_string())?)?;
    let ebit = layer.or(args.ebit, "ebit", 0.01)?;
    let policy = parse_mu_policy(&layer.or(args.mu, "mu", "optimize".to_string())?)?;
    let ec = EcCost {
        efficiency: layer.or(args.ec_efficiency, "ec_efficiency", 1.0)?,
    };
    let out = layer.get(args.out, "out")?;

    for &eta in &etas {
        check_range("eta", eta, eta > 0.0 && eta <= 1.0, "(0, 1]")?;
    }
    for &a in &a_list {
        check_range("a", a, (0.0..100.0).contains(&a), "[0, 100)")?;
    }
    check_range("ebit", ebit, (0.0..=0.5).contains(&ebit), "[0, 0.5]")?;
    check_range(
        "ec_efficiency",
        ec.efficiency,
        ec.efficiency >= 1.0 && ec.efficiency.is_finite(),
        "[1, inf)",
    )?;

    let points = sweep(&etas, &a_list, ebit, policy, ec)?;
    let mut csv = Vec::new();
    write_sweep_csv(&points, &mut csv)?;
    let to_stdout = out.as_deref() == Some("-");
    match out.as_deref() {
        Some("-") => stdout.write_all(&csv)?,
        Some(path) => fs::write(path, &csv)?,
        None => fs::write(default_out("keyrate.csv"), &csv)?,
    }
    if !to_stdout {
        for &a in &a_list {
            let best = points
                .iter()
                .filter(|p| p.a == a)
                .fold(None::<&KeyRatePoint>, |acc, p| match acc {
                    Some(b) if b.rate >= p.rate => Some(b),
                    _ => Some(p),
                })
                .expect("non-empty sweep");
            writeln!(
                stdout,
                "a_percent={} max_R={} eta={} mu={}",
                a, best.rate, best.eta, best.mu
            )?;
        }
    }
    Ok(EXIT_OK)
}

/// Structured pairs: the degenerate and asymmetric reference pairs, then
/// fluctuating phase-encoded pulses at the extremes of their range.
fn structured_pairs() -> Vec<(Complex64, Complex64)> {
    let re = |x: f64| Complex64::new(x, 0.0);
    let mut pairs = vec![
        (re(0.1f64.sqrt()), re(0.1f64.sqrt())),
        (re(0.11f64.sqrt()), re(-(0.09f64.sqrt()))),
    ];
    for mu in [0.01f64, 0.1, 0.5] {
        for a in [0.0f64, 5.0] {
            let (lo, hi) = ((1.0 - 0.01 * a) * mu, (1.0 + 0.01 * a) * mu);
            pairs.push((re(lo.sqrt()), re(-hi.sqrt())));
            if a > 0.0 {
                pairs.push((re(hi.sqrt()), re(-lo.sqrt())));
            }
        }
    }
    pairs
}

fn random_pair(rng: &mut ChaCha8Rng) -> (Complex64, Complex64) {
    let mut draw = || {
        let mean: f64 = rng.random_range(0.0..=0.5);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        Complex64::from_polar(mean.sqrt(), phase)
    };
    (draw(), draw())
}

/// The most constraining relation check over `states` random states.
pub fn relation_suite(ops: &ErrorOperatorSet, states: usize, seed: u64) -> Result<BoundCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<BoundCheck> = None;
    for _ in 0..states {
        let sigma = random_density(&mut rng, 0.1);
        let r = check_phase_bit_relation(ops, &sigma)?;
        let check = BoundCheck::new(
            format!("main_pro_random_sigma[{states}]"),
            r.lhs,
            r.rhs,
            SLACK_TOL,
        );
        if worst.as_ref().is_none_or(|w| check.slack() < w.slack()) {
            worst = Some(check);
        }
    }
    worst.ok_or_else(|| Error::Usage("--states must be positive".into()))
}

fn cmd_verify(layer: &Layer, args: VerifyArgs, stdout: &mut dyn Write) -> Result<i32> {
    let pairs = layer.or(args.pairs, "pairs", 100)?;
    let states = layer.or(args.states, "states", 10_000)?;
    let seed = layer.or(args.seed, "seed", 1)?;
    let cutoff = layer.or(args.cutoff, "cutoff", DEFAULT_CUTOFF)?;
    let w2 = layer.get(args.perturb_w2, "perturb_w2")?;
    let out = layer.get(args.out, "out")?;
    if let Some(w) = w2 {
        check_range("perturb_w2", w, w >= 0.0 && w.is_finite(), "[0, inf)")?;
    }
    if cutoff < 1 {
        return Err(Error::Usage("--cutoff must be at least 1".into()));
    }

    let ops = match w2 {
        Some(w) => ErrorOperatorSet::with_weights([DETECTION_WEIGHTS[0], w, DETECTION_WEIGHTS[2]]),
        None => ErrorOperatorSet::with_weights(DETECTION_WEIGHTS),
    };
    let mut checks = ops.invariant_checks();
    if pairs > 0 {
        if states > 0 {
            checks.push(relation_suite(&ops, states, seed)?);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut all_pairs = structured_pairs();
        all_pairs.extend((0..pairs).map(|_| random_pair(&mut rng)));
        for (idx, (a0, a1)) in all_pairs.into_iter().enumerate() {
            let report = verify_weight_bounds(a0, a1, cutoff)?;
            for mut c in report.checks {
                c.name = format!("pair{idx:03}/{}", c.name);
                checks.push(c);
            }
        }
        for &eta in &[0.1, 0.5, 1.0] {
            for &mu in &[0.01, 0.05, 0.1] {
                let spec = CoherentSourceSpec::new(mu, 0.0, true)?;
                let r = exact_phase_error(&spec, eta, 0.0, cutoff)?;
                let (u, v) = spec.nominal_amplitudes();
                let stats = exact_pchar(
                    &FockOperator::from_pure(&coherent_vector(u, cutoff)),
                    &FockOperator::from_pure(&coherent_vector(v, cutoff)),
                )?;
                let bound = crate::bounds::phase_error_bound(r.q, r.ebit.clamp(0.0, 1.0), &stats)?;
                let tag = format!("eta={eta}/mu={mu}");
                checks.push(BoundCheck::new(
                    format!("channel/{tag}/eph_le_ephU"),
                    r.eph,
                    bound.eph_upper,
                    SLACK_TOL,
                ));
                let rel = check_phase_bit_relation(&ops, &r.sigma)?;
                checks.push(BoundCheck::new(
                    format!("channel/{tag}/main_pro"),
                    rel.lhs,
                    rel.rhs,
                    SLACK_TOL,
                ));
            }
        }
    }

    let failed = checks.iter().filter(|c| !c.passed()).count();
    let mut report = String::new();
    report.push_str(&format!(
        "{:<40} {:>24} {:>24} {:>24} {}\n",
        "# name", "lhs", "rhs", "slack", "status"
    ));
    for c in &checks {
        report.push_str(&c.report_line());
        report.push('\n');
    }
    report.push_str(&format!("# checks={} failed={}\n", checks.len(), failed));
    stdout.write_all(report.as_bytes())?;
    if let Some(path) = out.as_deref().filter(|p| *p != "-") {
        fs::write(path, &report)?;
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}

fn cmd_simulate(layer: &Layer, args: SimulateArgs, stdout: &mut dyn Write) -> Result<i32> {
    let n_blocks = layer.or(args.blocks, "blocks", 1_000_000)?;
    let mu = layer.or(args.mu, "mu", 0.05)?;
    let a = layer.or(args.a, "a", 0.0)?;
    let eta = layer.or(args.eta, "eta", 0.5)?;
    let phase_encoded = !layer.flag(args.no_phase_encoding, "no_phase_encoding")?;
    let format = layer.or(args.format, "format", Format::Csv)?;
    let out = layer.get(args.out, "out")?;
    let config = ProtocolConfig {
        n_blocks,
        source: CoherentSourceSpec::new(mu, a, phase_encoded)?,
        eta,
        misalignment_phase: layer.or(args.misalignment, "misalignment", 0.0)?,
        sample_fraction: layer.or(
            args.sample_fraction,
            "sample_fraction",
            DEFAULT_SAMPLE_FRACTION,
        )?,
        seed: layer.or(args.seed, "seed", 1)?,
        ebit_override: layer.get(args.ebit_override, "ebit_override")?,
        ec: EcCost {
            efficiency: layer.or(args.ec_efficiency, "ec_efficiency", 1.0)?,
        },
    };
    config.validate()?;
    let tally = run_protocol(&config)?;
    let text = match format {
        Format::Csv => format!("{TALLY_CSV_HEADER}\n{}\n", tally.csv_row(&config)),
        Format::Text => tally.to_record().to_text(),
    };
    emit(out.as_deref(), &text, stdout)?;
    Ok(EXIT_OK)
}

/// Reads a state file with `state0`, `state1` and optional `cutoff` keys.
pub fn read_state_file(path: &Path) -> Result<(FockOperator, FockOperator)> {
    let rec = Record::parse(&fs::read_to_string(path)?)?;
    let cutoff = rec.parse_opt::<usize>("cutoff")?.unwrap_or(DEFAULT_CUTOFF);
    let parse = |key: &'static str| -> Result<FockOperator> {
        let text = rec
            .get(key)
            .ok_or_else(|| Error::Parse(format!("state file lacks `{key}`")))?;
        let mut words = text.split_whitespace();
        let kind = words.next().unwrap_or("");
        let nums: Vec<f64> = words
            .map(|w| {
                w.parse()
                    .map_err(|_| Error::Parse(format!("{key}: bad number {w:?}")))
            })
            .collect::<Result<_>>()?;
        match kind {
            "coherent" => {
                let [re, im] = nums[..] else {
                    return Err(Error::Parse(format!("{key}: coherent needs RE IM")));
                };
                Ok(FockOperator::from_pure(&coherent_vector(
                    Complex64::new(re, im),
                    cutoff,
                )))
            }
            "diagonal" => FockOperator::number_mixture(cutoff, &nums),
            other => Err(Error::Parse(format!("{key}: unknown state kind {other:?}"))),
        }
    };
    Ok((parse("state0")?, parse("state1")?))
}

fn stats_text(stats: &PhotonStats, format: Format) -> String {
    match format {
        Format::Text => stats.to_record().to_text(),
        Format::Csv => {
            let values: Vec<String> = stats.values().iter().map(|v| v.to_string()).collect();
            format!("{}\n{}\n", PHOTON_STATS_KEYS.join(","), values.join(","))
        }
    }
}

fn cmd_pchar(layer: &Layer, args: PcharArgs, stdout: &mut dyn Write) -> Result<i32> {
    let mu = layer.get(args.mu, "mu")?;
    let a = layer.get(args.a, "a")?;
    let state_file = layer.get(args.state_file, "state_file")?;
    let format = layer.or(args.format, "format", Format::Text)?;
    let out = layer.get(args.out, "out")?;
    let stats = match (mu, state_file) {
        (Some(mu), None) => coherent_pchar(&CoherentSourceSpec::new(mu, a.unwrap_or(0.0), true)?)?,
        (None, Some(path)) => {
            if a.is_some() {
                return Err(Error::Usage("--a applies only with --mu".into()));
            }
            let (rho0, rho1) = read_state_file(&path)?;
            exact_pchar(&rho0, &rho1)?
        }
        _ => {
            return Err(Error::Usage(
                "pchar needs exactly one of --mu or --state-file".into(),
            ))
        }
    };
    emit(out.as_deref(), &stats_text(&stats, format), stdout)?;
    Ok(EXIT_OK)
}
