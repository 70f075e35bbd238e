//! Batch runner behind the `uvol` binary: parses a run configuration,
//! dispatches to the library and writes JSON and CSV artifacts.

pub mod config;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use uncertain_vol::implied::build_cells;
use uncertain_vol::sim::{
    build_pricer, estimate_law, simulate_pnl, validate_expansion, GridSpec, HedgePricer, PnLLawEstimate, PnlStats,
    ValidationReport, VolatilityBasis,
};
use uncertain_vol::{build_smile, quote_call, smile_diagnostics, SmileGrid, SmileReport};

pub use config::{Command, ConfigError, Format, RunConfig, UncertaintySpec};

/// Exit status of a run that produced its artifacts.
pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION_FAILED: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Model(uncertain_vol::Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Model(_) | CliError::Io(_) => EXIT_DOMAIN,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<uncertain_vol::Error> for CliError {
    fn from(e: uncertain_vol::Error) -> Self {
        CliError::Model(e)
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: i32,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    command: &'static str,
    config: &'a RunConfig,
    result: T,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuoteRow {
    pub strike: f64,
    pub maturity: f64,
    pub fair: f64,
    pub bias_component: f64,
    pub spread_component: f64,
    pub bid: f64,
    pub mid: f64,
    pub ask: f64,
    pub below_intrinsic: bool,
}

#[derive(Serialize)]
struct SmileResult {
    grid: SmileGrid,
    cells: Vec<uncertain_vol::implied::SmileCell>,
    diagnostics: Option<SmileReport>,
    diagnostics_error: Option<String>,
}

#[derive(Serialize)]
struct ValidateResult<'a> {
    law: &'a PnLLawEstimate,
    report: &'a ValidationReport,
}

/// Applies overrides, resolves defaults and runs `command`.
pub fn run_text(command: Command, text: &str, opts: &RunOptions) -> Result<Outcome, CliError> {
    let mut cfg = RunConfig::parse(text)?;
    if let Some(sim) = cfg.simulation.as_mut() {
        if let Some(seed) = opts.seed {
            sim.seed = seed;
        }
        if opts.workers.is_some() {
            sim.workers = opts.workers;
        }
    }
    if let Some(format) = opts.format {
        cfg.output.get_or_insert_with(Default::default).format = format;
    }
    let cfg = cfg.resolve(command)?;
    run(&cfg, &opts.out_dir)
}

/// Runs a resolved configuration and writes its artifacts into `out_dir`.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let command = cfg
        .command
        .ok_or_else(|| CliError::Config(ConfigError { message: "no command".into(), line: None, column: None }))?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut files = vec![write_json(out_dir, "resolved_config.json", cfg)?];
    let csv = cfg.format() == Format::Csv;
    let (status, summary) = match command {
        Command::Quote => {
            let rows = quotes(cfg)?;
            files.push(write_artifact(out_dir, command, cfg, &rows)?);
            if csv {
                files.push(write_quotes_csv(out_dir, &rows)?);
            }
            (EXIT_OK, format!("quote: {} option(s) priced", rows.len()))
        }
        Command::Smile => {
            let result = smile(cfg)?;
            files.push(write_artifact(out_dir, command, cfg, &result)?);
            if csv {
                files.push(write_smile_csv(out_dir, &result)?);
            }
            let verdict = match (&result.diagnostics, &result.diagnostics_error) {
                (Some(r), _) => r.verdict.label().to_string(),
                (None, Some(e)) => format!("no diagnostics ({e})"),
                _ => String::new(),
            };
            (EXIT_OK, format!("smile: {verdict}"))
        }
        Command::EstimateLaw => {
            let law = law(cfg)?;
            files.push(write_artifact(out_dir, command, cfg, &law)?);
            if csv {
                files.push(write_law_csv(out_dir, &law)?);
            }
            (
                EXIT_OK,
                format!("estimate-law: bias {} variance {}", law.bias.value, law.variance.value),
            )
        }
        Command::Validate => {
            let (law, report) = validate(cfg)?;
            files.push(write_artifact(out_dir, command, cfg, ValidateResult { law: &law, report: &report })?);
            if csv {
                let path = out_dir.join("outer_draws.csv");
                let f = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                report.write_draws_csv(f)?;
                files.push(path);
            }
            let status = if report.pass { EXIT_OK } else { EXIT_VALIDATION_FAILED };
            (status, format!("validate: {}", if report.pass { "PASS" } else { "FAIL" }))
        }
        Command::Simulate => {
            let (stats, rows) = simulate(cfg)?;
            files.push(write_artifact(out_dir, command, cfg, &stats)?);
            if csv {
                files.push(write_paths_csv(out_dir, &rows)?);
            }
            (EXIT_OK, format!("simulate: mean P&L {} ± {}", stats.mean, stats.stderr))
        }
    };
    Ok(Outcome { status, files, summary })
}

fn quotes(cfg: &RunConfig) -> Result<Vec<QuoteRow>, CliError> {
    let m = cfg.market.expect("resolved");
    let spec = cfg.uncertainty.expect("resolved");
    let policy = cfg.policy.expect("resolved");
    let mut rows = Vec::new();
    for c in cfg.options.as_deref().unwrap_or_default() {
        let u = spec.at(&m, c.maturity)?;
        let q = quote_call(&m, c, &u, &policy)?;
        rows.push(QuoteRow {
            strike: c.strike,
            maturity: c.maturity,
            fair: q.fair,
            bias_component: q.bias_component,
            spread_component: q.spread_component,
            bid: q.bid,
            mid: q.mid,
            ask: q.ask,
            below_intrinsic: q.below_intrinsic,
        });
    }
    Ok(rows)
}

fn smile(cfg: &RunConfig) -> Result<SmileResult, CliError> {
    let m = cfg.market.expect("resolved");
    let spec = cfg.uncertainty.expect("resolved");
    let policy = cfg.policy.expect("resolved");
    let s = cfg.smile.as_ref().expect("resolved");
    let schedule = |t: f64| spec.at(&m, t);
    let cells = build_cells(&m, &schedule, &policy, &s.strikes, &s.maturities)?;
    let grid = build_smile(&m, &schedule, &policy, &s.strikes, &s.maturities, s.source)?;
    let (diagnostics, diagnostics_error) = match smile_diagnostics(&grid, &m) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SmileResult {
        grid,
        cells,
        diagnostics,
        diagnostics_error,
    })
}

/// Largest volatility a hedger may price with: the estimated coefficients,
/// the outer perturbations out to six standard deviations and the bumps.
pub fn sigma_ceiling(basis: &VolatilityBasis, estimated: &[f64], x0: f64, relative_bump: f64) -> f64 {
    let true_sigma = basis.constant_sigma(&basis.coefficients()).unwrap_or(0.0);
    let mut up = estimated.to_vec();
    for i in basis.uncertain_indices() {
        let u = &basis.components[i].coefficient;
        let shift = (u.epsilon * u.bias).abs()
            + 6.0 * (u.epsilon * u.gamma).sqrt()
            + relative_bump * if up[i] != 0.0 { up[i].abs() } else { 1.0 };
        up[i] += shift * basis.components[i].function.eval(0.0, x0).signum();
    }
    let est = basis.constant_sigma(estimated).unwrap_or(0.0);
    let wide = basis.constant_sigma(&up).unwrap_or(0.0);
    (1.02 * true_sigma.max(est).max(wide)).max(0.01)
}

fn hedge_pricer(cfg: &RunConfig) -> Result<Box<dyn HedgePricer>, CliError> {
    let model = cfg.model.as_ref().expect("resolved");
    let option = cfg.option.expect("resolved");
    let pricer = cfg.pricer.unwrap_or_default();
    let bump = cfg.law.map_or(0.0, |l| l.relative_bump);
    let estimated = model.estimated_coefficients.as_deref().expect("resolved");
    if estimated.len() != model.basis.len() {
        return Err(CliError::Model(uncertain_vol::Error::InvalidInput(format!(
            "estimated_coefficients has {} entries for a basis of {}",
            estimated.len(),
            model.basis.len()
        ))));
    }
    let sigma_max = sigma_ceiling(&model.basis, estimated, model.x0, bump);
    let grid = GridSpec::for_paths(model.x0, sigma_max, model.mu, option.maturity);
    Ok(build_pricer(pricer.kind, &model.basis, &option, &grid, &pricer.nested)?)
}

fn law(cfg: &RunConfig) -> Result<PnLLawEstimate, CliError> {
    let model = cfg.model.as_ref().expect("resolved");
    let pricer = hedge_pricer(cfg)?;
    let estimated = model.basis.with_coefficients(model.estimated_coefficients.as_deref().expect("resolved"));
    Ok(estimate_law(
        &model.basis,
        &estimated,
        pricer.as_ref(),
        model.mu,
        model.x0,
        cfg.option.as_ref().expect("resolved"),
        cfg.test_function.as_ref().expect("resolved"),
        cfg.simulation.as_ref().expect("resolved"),
        cfg.law.expect("resolved").relative_bump,
    )?)
}

fn validate(cfg: &RunConfig) -> Result<(PnLLawEstimate, ValidationReport), CliError> {
    let model = cfg.model.as_ref().expect("resolved");
    if model.estimated_coefficients.as_deref() != Some(&model.basis.coefficients()[..]) {
        return Err(CliError::Model(uncertain_vol::Error::InvalidInput(
            "validate perturbs around the true coefficients; estimated_coefficients must equal them".into(),
        )));
    }
    let pricer = hedge_pricer(cfg)?;
    let option = cfg.option.as_ref().expect("resolved");
    let h = cfg.test_function.as_ref().expect("resolved");
    let sim = cfg.simulation.as_ref().expect("resolved");
    let law = estimate_law(
        &model.basis,
        &model.basis,
        pricer.as_ref(),
        model.mu,
        model.x0,
        option,
        h,
        sim,
        cfg.law.expect("resolved").relative_bump,
    )?;
    let report = validate_expansion(
        &model.basis,
        pricer.as_ref(),
        model.mu,
        model.x0,
        option,
        h,
        sim,
        cfg.validation.as_ref().expect("resolved"),
        &law,
    )?;
    Ok((law, report))
}

fn simulate(cfg: &RunConfig) -> Result<(PnlStats, Vec<uncertain_vol::sim::PathPnl>), CliError> {
    let model = cfg.model.as_ref().expect("resolved");
    let pricer = hedge_pricer(cfg)?;
    Ok(simulate_pnl(
        &model.basis,
        model.estimated_coefficients.as_deref().expect("resolved"),
        pricer.as_ref(),
        model.mu,
        model.x0,
        cfg.option.as_ref().expect("resolved"),
        cfg.simulation.as_ref().expect("resolved"),
    )?)
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn write_artifact<T: Serialize>(dir: &Path, command: Command, cfg: &RunConfig, result: T) -> Result<PathBuf, CliError> {
    let artifact = Artifact {
        command: command.name(),
        config: cfg,
        result,
    };
    write_json(dir, &format!("{}.json", command.name()), &artifact)
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const QUOTE_HEADER: [&str; 8] = ["strike", "maturity", "fair", "bias_component", "spread_component", "bid", "mid", "ask"];
pub const SMILE_HEADER: [&str; 5] = ["maturity", "strike", "bid_vol", "mid_vol", "ask_vol"];

fn write_quotes_csv(dir: &Path, rows: &[QuoteRow]) -> Result<PathBuf, CliError> {
    let path = dir.join("quotes.csv");
    write_rows(
        &path,
        &QUOTE_HEADER,
        rows.iter().map(|r| {
            [r.strike, r.maturity, r.fair, r.bias_component, r.spread_component, r.bid, r.mid, r.ask]
                .iter()
                .map(f64::to_string)
                .collect()
        }),
    )?;
    Ok(path)
}

fn write_smile_csv(dir: &Path, result: &SmileResult) -> Result<PathBuf, CliError> {
    let path = dir.join("smile.csv");
    write_rows(
        &path,
        &SMILE_HEADER,
        result.cells.iter().map(|c| {
            vec![
                c.maturity.to_string(),
                c.strike.to_string(),
                opt(c.bid_vol),
                opt(c.mid_vol),
                opt(c.ask_vol),
            ]
        }),
    )?;
    Ok(path)
}

fn write_law_csv(dir: &Path, law: &PnLLawEstimate) -> Result<PathBuf, CliError> {
    let path = dir.join("law.csv");
    let rows = [
        ("lambda1", law.lambda1),
        ("lambda2", law.lambda2),
        ("psi", law.psi),
        ("bias", law.bias),
        ("variance", law.variance),
    ];
    write_rows(
        &path,
        &["quantity", "value", "stderr"],
        rows.iter()
            .map(|(n, e)| vec![n.to_string(), e.value.to_string(), e.stderr.to_string()]),
    )?;
    Ok(path)
}

fn write_paths_csv(dir: &Path, rows: &[uncertain_vol::sim::PathPnl]) -> Result<PathBuf, CliError> {
    let path = dir.join("pnl_paths.csv");
    write_rows(
        &path,
        &["path", "terminal", "gain", "pnl"],
        rows.iter().map(|r| {
            vec![
                r.path.to_string(),
                r.terminal.to_string(),
                r.gain.to_string(),
                r.pnl.to_string(),
            ]
        }),
    )?;
    Ok(path)
}

/// Prints `outcome` to `w`, one file per line after the summary.
pub fn report<W: Write>(mut w: W, outcome: &Outcome) -> std::io::Result<()> {
    writeln!(w, "{}", outcome.summary)?;
    for f in &outcome.files {
        writeln!(w, "  wrote {}", f.display())?;
    }
    Ok(())
}
