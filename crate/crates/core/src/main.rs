use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use sfs_herald::cascade::{compare_schemes, universal_summary, ComparisonRecord, SchemeSummary};
use sfs_herald::gaussian::{universal_sigma, UniversalSchemeParams};
use sfs_herald::heralding::{heralded_state, optimal_universal_parameter, total_probability, DetectionPattern};
use sfs_herald::loss::{fidelity_closed_form, lossy_fidelity, lossy_fidelity_numeric, EfficiencySpec};
use sfs_herald::oracle::{fidelity_numeric, herald_numeric, MIN_HERALD_ORDER};
use sfs_herald::synthesis::{decompose, decomposition_json, last_stage, total_mean_photons};
use sfs_herald::verify::{run_verification, Level, Perturbation};
use sfs_herald::SfsError;

/// Seed used when `--seed` is not given.
const DEFAULT_SEED: u64 = 20240601;
const SCHEMA: &str = "v1";
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(
    name = "sfs-herald",
    version,
    about = "Heralded squeezed Fock state scheme design and verification"
)]
struct Cli {
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Inner quadrature order of the heralding oracle.
    #[arg(long, global = true, default_value_t = MIN_HERALD_ORDER)]
    quad_order: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a universal scheme and write it as JSON.
    Design(DesignArgs),
    /// Predict the state heralded by a detection pattern on a scheme file.
    Herald(HeraldArgs),
    /// Tabulate a quantity over a parameter grid as CSV.
    Sweep(SweepArgs),
    /// Universal scheme against optimized two-stage cascades.
    CompareCascade(CompareArgs),
    /// Cross-check closed forms against the quadrature oracle.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[arg(long)]
    n_modes: usize,
    #[arg(long, allow_hyphen_values = true)]
    r: f64,
    /// Free parameters a_1 … a_{N−1}, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "optimal_for",
        required_unless_present = "optimal_for"
    )]
    a: Vec<f64>,
    /// Choose X = 2n + 1 with equal a_i.
    #[arg(long)]
    optimal_for: Option<usize>,
    /// Largest photon number in the probability table.
    #[arg(long, default_value_t = 6)]
    max_n: usize,
}

#[derive(Args, Debug)]
struct HeraldArgs {
    /// Scheme JSON written by `design`.
    #[arg(long)]
    scheme: PathBuf,
    /// Detector counts n_1 … n_{N−1}, comma separated.
    #[arg(long, value_delimiter = ',')]
    pattern: Vec<usize>,
    /// Detector efficiency.
    #[arg(long)]
    eta: Option<f64>,
    /// Also herald by quadrature and report the fidelity.
    #[arg(long)]
    numeric: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    quantity: Quantity,
    /// Universal parameter: a value or `start:stop:step`.
    #[arg(long = "X", allow_hyphen_values = true)]
    x: Option<String>,
    /// Photon numbers, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Detector efficiency: a value or `start:stop:step`.
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<String>,
    /// Target squeezing: a value or `start:stop:step`.
    #[arg(long, allow_hyphen_values = true)]
    r: Option<String>,
    #[arg(long, default_value_t = 2)]
    n_modes: usize,
    /// Take X, r and N from a scheme file when not given.
    #[arg(long)]
    scheme: Option<PathBuf>,
    /// Add optimized cascade rows (energy sweep only).
    #[arg(long)]
    compare_cascade: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Quantity {
    Probability,
    Fidelity,
    Squeezing,
    Energy,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Target squeezing: a value or `start:stop:step`.
    #[arg(long, allow_hyphen_values = true)]
    r: String,
    #[arg(long, default_value_t = 3)]
    n: usize,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    level: VerifyLevel,
    /// Negative control: `i,j,delta` added to every universal σ.
    #[arg(long, hide = true, value_delimiter = ',', allow_hyphen_values = true)]
    perturb_sigma: Vec<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VerifyLevel {
    Fast,
    Full,
}

enum Failure {
    /// Exit 1.
    Check(String),
    /// Exit 2.
    Usage(String),
}

impl From<SfsError> for Failure {
    fn from(e: SfsError) -> Self {
        match e {
            SfsError::Convergence { .. }
            | SfsError::NonNormalizable(_)
            | SfsError::Infeasible { .. }
            | SfsError::NotPositiveDefinite(_) => Failure::Check(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

/// On-disk scheme. `a` and `r` define everything else; the remaining fields
/// are derived copies for readers.
#[derive(Serialize, Deserialize, Debug)]
struct SchemeFile {
    schema: String,
    version: String,
    n_modes: usize,
    r: f64,
    a: Vec<f64>,
    #[serde(rename = "X")]
    x: f64,
    optimal_for: Option<usize>,
    sigma: Vec<Vec<f64>>,
    determinant: f64,
    decomposition: serde_json::Value,
    mean_photons: f64,
    probabilities: Vec<ProbabilityRow>,
}

#[derive(Serialize, Deserialize, Debug)]
struct ProbabilityRow {
    n: usize,
    probability: f64,
}

impl SchemeFile {
    fn params(&self) -> Result<UniversalSchemeParams, Failure> {
        if self.schema != SCHEMA {
            return Err(Failure::Usage(format!("unsupported scheme schema {:?}", self.schema)));
        }
        Ok(UniversalSchemeParams::new(self.n_modes, self.a.clone(), self.r)?)
    }
}

fn read_scheme(path: &Path) -> Result<SchemeFile, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> CmdResult {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: &Option<PathBuf>, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
    text.push('\n');
    emit(out, text.as_bytes())
}

/// Parses `v` or `start:stop:step`. The stop value is included when it lies
/// within half a step of the grid.
fn parse_range(flag: &str, text: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Usage(format!("--{flag}: cannot parse range {text:?}"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    match parts[..] {
        [v] => Ok(vec![v]),
        [start, stop, step] => {
            if !(step > 0.0) || stop < start - 0.5 * step {
                return Err(Failure::Usage(format!("--{flag}: empty range {text:?}")));
            }
            let count = ((stop - start) / step + 0.5).floor() as usize + 1;
            // round off accumulated binary noise so printed values stay short
            Ok((0..count)
                .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        _ => Err(bad()),
    }
}

fn required<'a>(flag: &str, v: &'a Option<String>) -> Result<&'a str, Failure> {
    v.as_deref()
        .ok_or_else(|| Failure::Usage(format!("--{flag} is required for this sweep")))
}

fn equal_split(n_modes: usize, x: f64, r: f64) -> Result<UniversalSchemeParams, Failure> {
    Ok(UniversalSchemeParams::with_universal_parameter(n_modes, x, r)?)
}

fn cmd_design(args: &DesignArgs, out: &Option<PathBuf>) -> CmdResult {
    let params = match args.optimal_for {
        Some(n) => {
            let opt = optimal_universal_parameter(n);
            if !opt.attained {
                return Err(Failure::Usage("--optimal-for needs n ≥ 1".into()));
            }
            equal_split(args.n_modes, opt.x, args.r)?
        }
        None => UniversalSchemeParams::new(args.n_modes, args.a.clone(), args.r)?,
    };
    let x = params.universal_parameter();
    let sigma = universal_sigma(&params);
    let dec = decompose(&params)?;
    let n = params.n_modes();
    let max_n = args.max_n.max(args.optimal_for.unwrap_or(0));
    let probabilities = (0..=max_n)
        .map(|n| {
            Ok(ProbabilityRow {
                n,
                probability: total_probability(x, n)?,
            })
        })
        .collect::<Result<Vec<_>, SfsError>>()?;
    let file = SchemeFile {
        schema: SCHEMA.into(),
        version: VERSION.into(),
        n_modes: n,
        r: params.r(),
        a: params.a().to_vec(),
        x,
        optimal_for: args.optimal_for,
        sigma: (0..n).map(|i| (0..n).map(|j| sigma.get(i, j)).collect()).collect(),
        determinant: sigma.determinant(),
        decomposition: decomposition_json(&dec),
        mean_photons: total_mean_photons(&dec),
        probabilities,
    };
    emit_json(out, &file)
}

#[derive(Serialize)]
struct HeraldReport {
    pattern: Vec<usize>,
    n: usize,
    r: f64,
    #[serde(rename = "X")]
    x: f64,
    probability: f64,
    total_probability: f64,
    eta: Option<f64>,
    lossy_fidelity: Option<f64>,
    numeric_probability: Option<f64>,
    numeric_fidelity: Option<f64>,
}

fn cmd_herald(args: &HeraldArgs, cli: &Cli) -> CmdResult {
    let scheme = read_scheme(&args.scheme)?;
    let params = scheme.params()?;
    let d = DetectionPattern::new(args.pattern.clone());
    let pred = heralded_state(&params, &d)?;
    let x = params.universal_parameter();
    let lossy = match args.eta {
        Some(eta) => Some(lossy_fidelity(x, d.total(), EfficiencySpec::new(eta)?)?),
        None => None,
    };
    let (numeric_probability, numeric_fidelity) = if args.numeric {
        let (psi, p) = herald_numeric(&universal_sigma(&params), &d, cli.quad_order)?;
        (Some(p), Some(fidelity_numeric(&psi, &pred.sfs)?))
    } else {
        (None, None)
    };
    let report = HeraldReport {
        pattern: d.counts().to_vec(),
        n: d.total(),
        r: pred.sfs.r,
        x,
        probability: pred.probability,
        total_probability: total_probability(x, d.total())?,
        eta: args.eta,
        lossy_fidelity: lossy,
        numeric_probability,
        numeric_fidelity,
    };
    emit_json(&cli.out, &report)
}

fn csv_bytes(comments: &[String], header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    for c in comments {
        writeln!(buf, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Failure::Usage(e.to_string()))
}

fn provenance(kind: &str) -> String {
    format!("sfs-herald {VERSION} sweep {kind}")
}

fn sweep_scheme(args: &SweepArgs) -> Result<Option<SchemeFile>, Failure> {
    args.scheme.as_deref().map(read_scheme).transpose()
}

fn x_values(args: &SweepArgs, scheme: &Option<SchemeFile>) -> Result<Vec<f64>, Failure> {
    match (&args.x, scheme) {
        (Some(x), _) => parse_range("X", x),
        (None, Some(s)) => Ok(vec![s.x]),
        (None, None) => Err(Failure::Usage("--X is required for this sweep".into())),
    }
}

fn r_values(args: &SweepArgs, scheme: &Option<SchemeFile>) -> Result<Vec<f64>, Failure> {
    match (&args.r, scheme) {
        (Some(r), _) => parse_range("r", r),
        (None, Some(s)) => Ok(vec![s.r]),
        (None, None) => Ok(vec![0.0]),
    }
}

fn photon_numbers(args: &SweepArgs, default: usize) -> Vec<usize> {
    let mut n = if args.n.is_empty() {
        vec![default]
    } else {
        args.n.clone()
    };
    n.sort_unstable();
    n.dedup();
    n
}

fn sweep_probability(args: &SweepArgs, scheme: &Option<SchemeFile>) -> Result<Vec<u8>, Failure> {
    let mut rows = Vec::new();
    for x in x_values(args, scheme)? {
        for &n in &photon_numbers(args, 1) {
            rows.push(vec![x.to_string(), n.to_string(), total_probability(x, n)?.to_string()]);
        }
    }
    csv_bytes(
        &[
            provenance("probability"),
            "X: universal parameter, sum of a_k minus N plus 2".into(),
            "probability: chance of heralding n photons in total, 2 (X-1)^n / (X+1)^(n+1)".into(),
        ],
        &["X", "n", "probability"],
        rows,
    )
}

fn sweep_fidelity(args: &SweepArgs, scheme: &Option<SchemeFile>) -> Result<Vec<u8>, Failure> {
    let etas = parse_range("eta", required("eta", &args.eta)?)?;
    if let Some(bad) = etas.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Failure::Usage(format!("--eta: {bad} outside [0, 1]")));
    }
    let n_modes = scheme.as_ref().map_or(args.n_modes, |s| s.n_modes);
    let r = r_values(args, scheme)?[0];
    let mut rows = Vec::new();
    for &eta in &etas {
        for x in x_values(args, scheme)? {
            for &n in &photon_numbers(args, 1) {
                let analytic = fidelity_closed_form(x, n, eta)?;
                // no detector clicks at η = 0, so there is nothing to simulate
                let numeric = if eta > 0.0 {
                    let p = equal_split(n_modes, x, r)?;
                    let mut counts = vec![0; n_modes - 1];
                    counts[0] = n;
                    lossy_fidelity_numeric(&p, &DetectionPattern::new(counts), EfficiencySpec::new(eta)?)?.to_string()
                } else {
                    String::new()
                };
                rows.push(vec![
                    eta.to_string(),
                    x.to_string(),
                    n.to_string(),
                    analytic.to_string(),
                    numeric,
                ]);
            }
        }
    }
    csv_bytes(
        &[
            provenance("fidelity"),
            "eta: detector efficiency; X: universal parameter; n: heralded photon number".into(),
            "F_analytic: closed form (((X-1) eta^2 + 2)/(X+1))^(n+1)".into(),
            format!("F_numeric: purification quadrature, {n_modes} modes, all counts on detector 1, r = {r}; empty at eta = 0"),
        ],
        &["eta", "X", "n", "F_analytic", "F_numeric"],
        rows,
    )
}

fn sweep_squeezing(args: &SweepArgs, scheme: &Option<SchemeFile>) -> Result<Vec<u8>, Failure> {
    let mut rows = Vec::new();
    for r in r_values(args, scheme)? {
        for x in x_values(args, scheme)? {
            let (t, r_big, r_small) = last_stage(x, r)?;
            let photons = r_big.sinh().powi(2) + r_small.sinh().powi(2);
            rows.push(vec![
                r.to_string(),
                x.to_string(),
                t.to_string(),
                r_big.to_string(),
                r_small.to_string(),
                photons.to_string(),
            ]);
        }
    }
    csv_bytes(
        &[
            provenance("squeezing"),
            "t_last: transmittance of the final beam splitter".into(),
            "r_sq1, r_sq2: squeezings of the last two inputs, r_sq1 + r_sq2 = r".into(),
            "mean_photons: sum of sinh^2 over the input squeezings".into(),
        ],
        &["r", "X", "t_last", "r_sq1", "r_sq2", "mean_photons"],
        rows,
    )
}

fn summary_row(r: f64, scheme: &str, s: &SchemeSummary) -> Vec<String> {
    vec![
        r.to_string(),
        scheme.into(),
        s.n1.to_string(),
        s.n2.to_string(),
        s.fidelity.to_string(),
        s.probability.to_string(),
        s.max_sq_db.to_string(),
        s.energy.to_string(),
    ]
}

fn comparison_rows(rs: &[f64], n: usize, seed: u64, cascades: bool) -> Result<Vec<Vec<String>>, Failure> {
    let mut rows = Vec::new();
    for &r in rs {
        rows.push(summary_row(r, "universal", &universal_summary(r, n)?));
        if cascades {
            let rec: ComparisonRecord = compare_schemes(r, n, seed)?;
            for c in &rec.cascades {
                rows.push(summary_row(r, "cascade", c));
            }
        }
    }
    Ok(rows)
}

fn comparison_csv(kind: &str, rows: Vec<Vec<String>>, seed: u64) -> Result<Vec<u8>, Failure> {
    csv_bytes(
        &[
            provenance(kind),
            "universal: optimum X = 2n+1, n1 = n, n2 = 0; cascade: two heralding stages with counts n1 then n2".into(),
            format!("cascade rows: most probable parameters with fidelity >= 1 - 1e-4, optimizer seed {seed}"),
            "max_sq_db: largest input squeezing in dB; energy: sum of sinh^2 over input squeezings".into(),
        ],
        &[
            "r",
            "scheme",
            "n1",
            "n2",
            "fidelity",
            "probability",
            "max_sq_db",
            "energy",
        ],
        rows,
    )
}

fn cmd_sweep(args: &SweepArgs, cli: &Cli) -> CmdResult {
    let scheme = sweep_scheme(args)?;
    if args.compare_cascade && !matches!(args.quantity, Quantity::Energy) {
        return Err(Failure::Usage(
            "--compare-cascade only applies to the energy sweep".into(),
        ));
    }
    let bytes = match args.quantity {
        Quantity::Probability => sweep_probability(args, &scheme)?,
        Quantity::Fidelity => sweep_fidelity(args, &scheme)?,
        Quantity::Squeezing => sweep_squeezing(args, &scheme)?,
        Quantity::Energy => {
            let rs = r_values(args, &scheme)?;
            let n = photon_numbers(args, 3);
            if n.len() != 1 {
                return Err(Failure::Usage("the energy sweep takes a single --n".into()));
            }
            comparison_csv(
                "energy",
                comparison_rows(&rs, n[0], cli.seed, args.compare_cascade)?,
                cli.seed,
            )?
        }
    };
    emit(&cli.out, &bytes)
}

fn cmd_compare(args: &CompareArgs, cli: &Cli) -> CmdResult {
    let rs = parse_range("r", &args.r)?;
    let bytes = comparison_csv(
        "compare-cascade",
        comparison_rows(&rs, args.n, cli.seed, true)?,
        cli.seed,
    )?;
    emit(&cli.out, &bytes)
}

fn cmd_verify(args: &VerifyArgs, cli: &Cli) -> CmdResult {
    let perturbation = match args.perturb_sigma[..] {
        [] => None,
        [i, j, delta] if i >= 0.0 && j >= 0.0 && i.fract() == 0.0 && j.fract() == 0.0 => Some(Perturbation {
            i: i as usize,
            j: j as usize,
            delta,
        }),
        _ => return Err(Failure::Usage("--perturb-sigma expects i,j,delta".into())),
    };
    let level = match args.level {
        VerifyLevel::Fast => Level::Fast,
        VerifyLevel::Full => Level::Full,
    };
    let report = run_verification(level, cli.seed, cli.quad_order, perturbation);
    emit(&cli.out, format!("{report}\n").as_bytes())?;
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(Failure::Check(format!("failed checks: {}", names.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Design(a) => cmd_design(a, &cli.out),
        Command::Herald(a) => cmd_herald(a, &cli),
        Command::Sweep(a) => cmd_sweep(a, &cli),
        Command::CompareCascade(a) => cmd_compare(a, &cli),
        Command::Verify(a) => cmd_verify(a, &cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
