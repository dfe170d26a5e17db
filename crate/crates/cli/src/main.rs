//! Command-line front end: run manipulation tests on CSV data, Monte Carlo
//! size/power studies, and local asymptotic power curves.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data or estimation error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use mrdtest::{
    bct_test, center, distance_test, local_asymptotic_power, mt_test,
    mtmax_test, run_rejection_study, BandwidthSpec, CutoffSpec, Dataset, Direction, Error, Kernel,
    Method, ModelSpec, SimConfig, TestResult,
};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const DEFAULT_SEED: u64 = 20240901;

#[derive(Parser)]
#[command(name = "mrdtest", version, about = "Manipulation tests for multivariate RDD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run manipulation tests on a CSV dataset
    Test(TestArgs),
    /// Monte Carlo rejection-rate study for a data generating model
    Simulate(SimulateArgs),
    /// Local asymptotic power curves
    Power(PowerArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct TestArgs {
    /// Input CSV file (UTF-8, header row, comma delimiter)
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated running variable column names
    #[arg(long, value_delimiter = ',')]
    vars: Vec<String>,
    /// Comma-separated cutoffs, one per variable
    #[arg(long, value_delimiter = ',')]
    cutoffs: Vec<f64>,
    /// Comma-separated directions (above = treated at or above cutoff)
    #[arg(long, value_delimiter = ',')]
    directions: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Comma-separated subset of MT,MTMAX,BCT,DT,SDT (default all)
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long, default_value = "triangular")]
    kernel: String,
    /// "auto" or a fixed bandwidth (single value, or one per variable)
    #[arg(long, default_value = "auto", value_delimiter = ',')]
    bandwidth: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the report here instead of standard output
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// model1 | model2 | model3 | model4
    #[arg(long)]
    model: String,
    /// Dimension for model1/model2
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Flip probability for model3
    #[arg(long, default_value_t = 0.0)]
    gamma1: f64,
    /// Side probability for model4
    #[arg(long, default_value_t = 0.5)]
    gamma2: f64,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PowerArgs {
    /// 1: all coordinates shifted by k; 2: only the first coordinate
    #[arg(long)]
    framework: u8,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Comma-separated grid of k values
    #[arg(long, value_delimiter = ',')]
    k: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1_000_000)]
    draws: usize,
    /// Subset of MT,MTMAX,BCT (default all three)
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

enum CliError {
    Config(String),
    Data(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Domain(_) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

/// Format with 9 significant digits, the precision contract shared by the
/// text and JSON outputs.
fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (8 - exp).max(0) as usize;
    if (-4..9).contains(&exp) {
        format!("{x:.decimals$}")
    } else {
        format!("{x:.8e}")
    }
}

fn param_str(model: &ModelSpec) -> String {
    match model {
        ModelSpec::Model1 { d } | ModelSpec::Model2 { d } => d.to_string(),
        ModelSpec::Model3 { gamma1 } => sig9(*gamma1),
        ModelSpec::Model4 { gamma2 } => sig9(*gamma2),
    }
}

fn parse_methods(raw: &[String], default: &[Method]) -> CliResult<Vec<Method>> {
    if raw.is_empty() {
        return Ok(default.to_vec());
    }
    let mut out = Vec::new();
    for s in raw {
        let m: Method = s.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn parse_bandwidth(raw: &[String], d: usize) -> CliResult<Vec<BandwidthSpec>> {
    if raw.len() == 1 && raw[0].eq_ignore_ascii_case("auto") {
        return Ok(vec![BandwidthSpec::AutoPlugin; d]);
    }
    if raw.len() != 1 && raw.len() != d {
        return config_err(format!(
            "--bandwidth expects 'auto', one value, or {d} values; got {}",
            raw.len()
        ));
    }
    let mut hs = Vec::with_capacity(d);
    for s in raw {
        let h: f64 = s
            .parse()
            .map_err(|_| CliError::Config(format!("--bandwidth: cannot parse '{s}'")))?;
        if !(h > 0.0) || !h.is_finite() {
            return config_err(format!("--bandwidth: values must be positive, got {s}"));
        }
        hs.push(h);
    }
    if hs.len() == 1 {
        hs = vec![hs[0]; d];
    }
    Ok(hs.into_iter().map(BandwidthSpec::Fixed).collect())
}

/// Read the selected columns; rows with missing or non-finite entries are
/// dropped and counted. Returns the raw (uncentered) dataset.
fn ingest_csv(path: &PathBuf, vars: &[String]) -> CliResult<(Dataset, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("bad header row: {e}")))?
        .clone();
    let mut indices = Vec::with_capacity(vars.len());
    for v in vars {
        match headers.iter().position(|h| h == v) {
            Some(i) => indices.push(i),
            None => return config_err(format!("unknown column '{v}'")),
        }
    }

    let d = vars.len();
    let mut values = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                dropped += 1;
                continue;
            }
        };
        let mut row = Vec::with_capacity(d);
        for &i in &indices {
            match record.get(i).map(str::trim).and_then(|s| s.parse::<f64>().ok()) {
                Some(v) if v.is_finite() => row.push(v),
                _ => break,
            }
        }
        if row.len() == d {
            values.extend_from_slice(&row);
        } else {
            dropped += 1;
        }
    }
    if values.is_empty() {
        return Err(CliError::Data("no usable data rows".into()));
    }
    let n = values.len() / d;
    let ds = Dataset::new(values, n, d, vars.to_vec())?;
    Ok((ds, dropped))
}

#[derive(Serialize)]
struct VariableReport {
    name: String,
    theta_hat: f64,
    sigma_hat: f64,
    n_j: usize,
    n_j_plus: usize,
    n_j_minus: usize,
    h_plus: f64,
    h_minus: f64,
    f_plus: f64,
    f_minus: f64,
}

#[derive(Serialize)]
struct MethodReport {
    method: String,
    statistic: f64,
    critical_value: f64,
    p_value: f64,
    reject: bool,
}

#[derive(Serialize)]
struct TestReport {
    n: usize,
    d: usize,
    alpha: f64,
    kernel: String,
    dropped_rows: usize,
    variables: Vec<VariableReport>,
    tests: Vec<MethodReport>,
}

fn write_out(output: &Option<PathBuf>, content: &str) -> CliResult<()> {
    match output {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(content.as_bytes())
                .map_err(|e| CliError::Data(format!("cannot write output: {e}")))
        }
    }
}

fn render_test_text(report: &TestReport) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "Manipulation test report (n = {}, d = {}, alpha = {}, kernel = {})\n",
        report.n,
        report.d,
        sig9(report.alpha),
        report.kernel
    ));
    if report.dropped_rows > 0 {
        s.push_str(&format!("dropped rows: {}\n", report.dropped_rows));
    }
    s.push('\n');
    for v in &report.variables {
        s.push_str(&format!(
            "variable {}: theta_hat = {}, sigma_hat = {}, n_j = {} ({} right / {} left), h = ({}, {})\n",
            v.name,
            sig9(v.theta_hat),
            sig9(v.sigma_hat),
            v.n_j,
            v.n_j_plus,
            v.n_j_minus,
            sig9(v.h_plus),
            sig9(v.h_minus),
        ));
    }
    s.push('\n');
    for t in &report.tests {
        s.push_str(&format!(
            "{}: statistic = {}, critical = {}, p = {}, {}\n",
            t.method,
            sig9(t.statistic),
            sig9(t.critical_value),
            sig9(t.p_value),
            if t.reject { "REJECT" } else { "no rejection" },
        ));
    }
    s
}

fn cmd_test(args: &TestArgs) -> CliResult<()> {
    let d = args.vars.len();
    if d == 0 {
        return config_err("--vars requires at least one column");
    }
    if args.cutoffs.len() != d || args.directions.len() != d {
        return config_err(format!(
            "--vars, --cutoffs and --directions must have equal lengths ({} / {} / {})",
            d,
            args.cutoffs.len(),
            args.directions.len()
        ));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return config_err(format!("--alpha must lie in (0, 1), got {}", args.alpha));
    }
    let kernel: Kernel = args.kernel.parse()?;
    let methods = parse_methods(&args.methods, &Method::ALL)?;
    let bandwidths = parse_bandwidth(&args.bandwidth, d)?;
    let directions = args
        .directions
        .iter()
        .map(|s| s.parse::<Direction>())
        .collect::<Result<Vec<_>, _>>()?;

    let (raw, dropped) = ingest_csv(&args.input, &args.vars)?;
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} rows with missing or non-numeric values");
    }
    let spec = CutoffSpec::new(args.cutoffs.clone(), directions)?;
    let centered = center(&raw, &spec)?;

    let mut variables = Vec::with_capacity(d);
    let stats = {
        let mut out = Vec::with_capacity(d);
        for j in 0..d {
            out.push(mrdtest::marginal_stat(&centered, j, bandwidths[j], kernel)?);
        }
        out
    };
    for (j, st) in stats.iter().enumerate() {
        variables.push(VariableReport {
            name: args.vars[j].clone(),
            theta_hat: st.theta_hat,
            sigma_hat: st.sigma2_hat.sqrt(),
            n_j: st.n_j,
            n_j_plus: st.n_j_plus,
            n_j_minus: st.n_j_minus,
            h_plus: st.h_plus,
            h_minus: st.h_minus,
            f_plus: st.f_plus,
            f_minus: st.f_minus,
        });
    }

    let mut tests = Vec::with_capacity(methods.len());
    for &m in &methods {
        let r: TestResult = match m {
            Method::Mt => mt_test(&stats, args.alpha)?,
            Method::MtMax => mtmax_test(&stats, args.alpha)?,
            Method::Bct => bct_test(&stats, args.alpha)?,
            Method::Dt => distance_test(&centered, args.alpha, false, bandwidths[0], kernel)?,
            Method::Sdt => distance_test(&centered, args.alpha, true, bandwidths[0], kernel)?,
        };
        tests.push(MethodReport {
            method: m.name().to_string(),
            statistic: r.statistic,
            critical_value: r.critical_value,
            p_value: r.p_value,
            reject: r.reject,
        });
    }

    let report = TestReport {
        n: centered.n(),
        d,
        alpha: args.alpha,
        kernel: kernel.name().to_string(),
        dropped_rows: dropped,
        variables,
        tests,
    };
    let content = match args.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Data(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Text => render_test_text(&report),
        Format::Csv => return config_err("test reports support text or json output only"),
    };
    write_out(&args.output, &content)
}

fn parse_model(args: &SimulateArgs) -> CliResult<ModelSpec> {
    let model = match args.model.to_ascii_lowercase().as_str() {
        "model1" => ModelSpec::Model1 { d: args.d },
        "model2" => ModelSpec::Model2 { d: args.d },
        "model3" => ModelSpec::Model3 { gamma1: args.gamma1 },
        "model4" => ModelSpec::Model4 { gamma2: args.gamma2 },
        other => return config_err(format!("unknown model '{other}'")),
    };
    model.validate()?;
    Ok(model)
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let model = parse_model(args)?;
    let config = SimConfig {
        n: args.n,
        reps: args.reps,
        alpha: args.alpha,
        seed: args.seed,
        methods: parse_methods(&args.methods, &Method::ALL)?,
    };
    config.validate()?;
    let study = run_rejection_study(&model, &config)?;

    let content = match args.format {
        Format::Csv => {
            let mut s = String::from("model,param,n,reps,alpha,method,reject_rate,failures,seed\n");
            for (m, rate) in &study.rates {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    model.name(),
                    param_str(&model),
                    config.n,
                    config.reps,
                    sig9(config.alpha),
                    m,
                    sig9(*rate),
                    study.failures,
                    config.seed
                ));
            }
            s
        }
        Format::Json => {
            let mut s =
                serde_json::to_string_pretty(&study).map_err(|e| CliError::Data(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Text => {
            let mut s = format!(
                "{} (param = {}), n = {}, reps = {}, alpha = {}, seed = {}\n",
                model.name(),
                param_str(&model),
                config.n,
                config.reps,
                sig9(config.alpha),
                config.seed
            );
            if study.failures > 0 {
                s.push_str(&format!(
                    "failed replications: {} (rates over {} successes)\n",
                    study.failures, study.successes
                ));
            }
            for (m, rate) in &study.rates {
                s.push_str(&format!("{m}: rejection rate = {}\n", sig9(*rate)));
            }
            s
        }
    };
    write_out(&args.output, &content)
}

fn cmd_power(args: &PowerArgs) -> CliResult<()> {
    let methods = parse_methods(&args.methods, &[Method::Mt, Method::MtMax, Method::Bct])?;
    let grid = if args.k.is_empty() {
        vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]
    } else {
        args.k.clone()
    };
    let points = local_asymptotic_power(
        args.framework,
        args.d,
        &grid,
        args.alpha,
        &methods,
        args.draws,
        args.seed,
    )?;

    let content = match args.format {
        Format::Csv => {
            let mut s = String::from("framework,d,k,method,power,draws,seed\n");
            for p in &points {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    args.framework,
                    args.d,
                    sig9(p.k),
                    p.method,
                    sig9(p.power),
                    args.draws,
                    args.seed
                ));
            }
            s
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&points)
                .map_err(|e| CliError::Data(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Text => {
            let mut s = format!(
                "local asymptotic power, framework {}, d = {}, alpha = {}, draws = {}\n",
                args.framework,
                args.d,
                sig9(args.alpha),
                args.draws
            );
            for p in &points {
                s.push_str(&format!("k = {}, {}: {}\n", sig9(p.k), p.method, sig9(p.power)));
            }
            s
        }
    };
    write_out(&args.output, &content)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Power(args) => cmd_power(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
