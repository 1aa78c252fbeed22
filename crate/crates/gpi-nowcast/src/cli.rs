//! Operator surface: `ingest`, `backtest`, `explain` and `report`
//! subcommands driven by one JSON config file.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data
//! validation error. Output files are written atomically (temp file then
//! rename) in a canonical order, so re-running a command with the same
//! inputs and seed reproduces every file byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array1;

use crate::calendar::YearMonth;
use crate::config::{load_config, RunConfig};
use crate::error::{Error, Result};
use crate::explain::{
    explain_prediction, global_importance, shap_explanation, write_global_importance_csv,
    ExplanationDocument, ExplanationMeta, ShapExplanation,
};
use crate::ingest::{self, AnnualGpi, CountryCode, FeatureMatrix, MonthlyGpiSeries, PanelCube};
use crate::models::LearnerKind;
use crate::rolling::{
    self, evaluate_horizons, run_rolling_backtest, HorizonPrediction, RollingConfig, WindowFit,
};

#[derive(Debug, Parser)]
#[command(
    name = "gpi-nowcast",
    version,
    about = "Monthly nowcasts of a yearly peace index from news-event counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate raw event files into a country/month/code count panel.
    Ingest(CommonArgs),
    /// Run rolling-window backtests for the configured learners.
    Backtest(FilterArgs),
    /// Explain one prediction and rank its window's features.
    Explain(ExplainArgs),
    /// Recompute per-horizon metrics from stored predictions.
    Report(FilterArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Restrict to one country.
    #[arg(long)]
    country: Option<CountryCode>,
    /// Restrict to one learner.
    #[arg(long)]
    learner: Option<LearnerKind>,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    country: CountryCode,
    #[arg(long)]
    learner: LearnerKind,
    /// Month whose prediction to explain, as YYYY-MM.
    #[arg(long)]
    target_month: YearMonth,
    /// How many months past its window's end that prediction sits.
    #[arg(long, default_value_t = 1)]
    horizon: u32,
}

/// Parses arguments, runs the chosen command and returns the process exit
/// code, printing any error to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Ingest(args) => load(&args.common).and_then(|cfg| cmd_ingest(&cfg)),
        Command::Backtest(args) => filtered(&args).and_then(|cfg| cmd_backtest(&cfg)),
        Command::Report(args) => filtered(&args).and_then(|cfg| cmd_report(&cfg)),
        Command::Explain(args) => load(&args.common).and_then(|cfg| {
            cmd_explain(&cfg, args.country, args.learner, args.target_month, args.horizon)
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn filtered(args: &FilterArgs) -> Result<RunConfig> {
    let mut cfg = load(&args.common)?;
    if let Some(country) = args.country {
        cfg.countries = vec![country];
    }
    if let Some(learner) = args.learner {
        cfg.learners = vec![learner];
    }
    Ok(cfg)
}

/// Writes via a sibling temp file and rename, so a crash cannot leave a
/// half-written output and re-runs replace files in one step.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    let tmp = dir.join(name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Aggregates the configured event files into the panel CSV.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    if cfg.events.is_empty() {
        return Err(Error::config("no events files configured"));
    }
    cfg.column_map.validate()?;
    for path in &cfg.events {
        if !path.exists() {
            return Err(Error::config(format!("events file {} does not exist", path.display())));
        }
    }
    let mut cube = PanelCube::new();
    let mut lines = 0u64;
    let mut malformed = 0u64;
    for path in &cfg.events {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader =
            ingest::parse_gdelt_events(BufReader::new(file), &cfg.column_map).with_path(path);
        for record in reader.by_ref() {
            cube.add(&record?);
        }
        lines += reader.lines_read();
        malformed += reader.malformed_lines();
    }
    let panel_path = cfg.panel_path();
    let mut buf = Vec::new();
    cube.write_csv(&mut buf)?;
    write_atomic(&panel_path, &buf)?;
    println!("read {lines} lines, {malformed} malformed, from {} file(s)", cfg.events.len());
    println!(
        "panel: {} countries, {} event codes, {} events -> {}",
        cube.countries().count(),
        cube.distinct_codes(),
        cube.total_events(),
        panel_path.display()
    );
    Ok(())
}

struct CountryData {
    features: FeatureMatrix,
    truth: MonthlyGpiSeries,
}

fn load_panel(cfg: &RunConfig) -> Result<PanelCube> {
    let path = cfg.panel_path();
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    PanelCube::read_csv(BufReader::new(file), &path)
}

fn load_gpi(cfg: &RunConfig) -> Result<AnnualGpi> {
    let path = cfg
        .gpi
        .as_ref()
        .ok_or_else(|| Error::config("config has no gpi path; backtesting needs the annual index"))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest::load_gpi_annual(BufReader::new(file), path)
}

fn select_countries(cfg: &RunConfig, cube: &PanelCube, gpi: &AnnualGpi) -> Result<Vec<CountryCode>> {
    if !cfg.countries.is_empty() {
        let mut countries = cfg.countries.clone();
        countries.sort();
        return Ok(countries);
    }
    let with_gpi: BTreeSet<CountryCode> = gpi.countries().into_iter().collect();
    let picked: Vec<CountryCode> = cube.countries().filter(|c| with_gpi.contains(c)).collect();
    if picked.is_empty() {
        return Err(Error::data("no country appears in both the panel and the index file"));
    }
    Ok(picked)
}

/// Upsampled truth plus the design matrix, aligned to start at the first
/// index anchor, features extended to the panel's last observed month, and
/// both advanced by `start_offset` months.
fn country_data(
    cube: &PanelCube,
    gpi: &AnnualGpi,
    country: CountryCode,
    start_offset: usize,
) -> Result<CountryData> {
    let truth = ingest::upsample_gpi(gpi, country)?;
    let (_, panel_max) = cube
        .month_span(country)
        .ok_or_else(|| Error::data(format!("panel has no rows for {country}")))?;
    let truth_end = truth.month_at(truth.len() - 1);
    let end = if panel_max > truth_end { panel_max } else { truth_end };
    let features = ingest::build_design_matrix(cube, country, truth.start_month, end)?;
    if start_offset >= truth.len() {
        return Err(Error::data(format!(
            "start_offset {start_offset} consumes the whole {}-month truth series",
            truth.len()
        )));
    }
    let offset = start_offset;
    let truth = MonthlyGpiSeries {
        country,
        start_month: truth.start_month.add_months(offset as i64),
        values: truth.values[offset..].to_vec(),
    };
    let features = FeatureMatrix {
        months: features.months[offset..].to_vec(),
        codes: features.codes.clone(),
        values: features.values.slice(ndarray::s![offset.., ..]).to_owned(),
    };
    Ok(CountryData { features, truth })
}

fn rolling_config(cfg: &RunConfig, learner: LearnerKind) -> Result<RollingConfig> {
    Ok(RollingConfig {
        window: cfg.window,
        horizons: cfg.horizons,
        grid: cfg.grids.grid(learner)?,
        cv_folds: cfg.cv_folds,
        tune_once: cfg.tune_once,
        seed: cfg.seed,
    })
}

/// Feature row for month index `t`, restricted to the window's columns.
fn restricted_row(features: &FeatureMatrix, columns: &[usize], t: usize) -> Array1<f64> {
    let mut row = Array1::zeros(columns.len());
    for (ci, &j) in columns.iter().enumerate() {
        row[ci] = features.values[[t, j]];
    }
    row
}

fn learner_supports_explanations(learner: LearnerKind) -> bool {
    learner != LearnerKind::Svr
}

/// Local accuracy is promised on every emitted document; a violation means
/// a defect, not a degraded answer.
fn check_local_accuracy(doc: &ExplanationDocument) -> Result<()> {
    let total: f64 = doc.contributions.iter().map(|c| c.phi).sum();
    let gap = (doc.base_value + total - doc.output_value).abs();
    if gap >= 1e-9 {
        return Err(Error::model(format!(
            "explanation violates local accuracy by {gap:.3e} for {} {}",
            doc.country, doc.target_month
        )));
    }
    Ok(())
}

fn explanation_json(doc: &ExplanationDocument) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("explanation document serializes");
    text.push('\n');
    text
}

/// Explains the window's own training rows and ranks features by mean
/// absolute contribution.
fn window_importance(fit: &WindowFit, meta: ExplanationMeta) -> Result<Vec<ShapExplanation>> {
    let mut explanations = Vec::with_capacity(fit.dataset.n());
    for i in 0..fit.dataset.n() {
        explanations.push(shap_explanation(&fit.model, fit.dataset.x.row(i), &fit.dataset, meta)?);
    }
    Ok(explanations)
}

/// Runs every configured (learner, country) backtest and writes
/// predictions, metrics, cross-validation scores when asked, and a final
/// window explanation per pair where the learner supports one.
pub fn cmd_backtest(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let cube = load_panel(cfg)?;
    let gpi = load_gpi(cfg)?;
    let countries = select_countries(cfg, &cube, &gpi)?;
    for &learner in &cfg.learners {
        let rcfg = rolling_config(cfg, learner)?;
        let tag = learner.tag();
        let mut all_predictions: Vec<HorizonPrediction> = Vec::new();
        let mut covered = 0usize;
        for &country in &countries {
            let data = match country_data(&cube, &gpi, country, cfg.start_offset) {
                Ok(d) => d,
                Err(Error::Data(msg)) => {
                    eprintln!("skipping {country} for {tag}: {msg}");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let run = match run_rolling_backtest(&data.features, &data.truth, &rcfg) {
                Ok(r) => r,
                Err(Error::Data(msg)) => {
                    eprintln!("skipping {country} for {tag}: {msg}");
                    continue;
                }
                Err(e) => return Err(e),
            };
            covered += 1;

            let reports = evaluate_horizons(&run.predictions)?;
            let mut buf = Vec::new();
            rolling::write_horizon_metrics_csv(&mut buf, &reports)?;
            write_atomic(&cfg.output_dir.join(format!("metrics_{tag}_{country}.csv")), &buf)?;

            if cfg.emit_cv {
                let mut buf = String::from("window_start,assignment_id,fold,rmse\n");
                for w in &run.windows {
                    for r in &w.cv {
                        for (fold, rmse) in r.fold_rmse.iter().enumerate() {
                            buf.push_str(&format!(
                                "{},{},{},{}\n",
                                w.window_start, r.assignment_id, fold, rmse
                            ));
                        }
                    }
                }
                write_atomic(&cfg.output_dir.join(format!("cv_{tag}_{country}.csv")), buf.as_bytes())?;
            }

            if learner_supports_explanations(learner) {
                let last = run.windows.last().expect("at least one window ran");
                let fit = rolling::fit_window(
                    &data.features,
                    &data.truth,
                    &rcfg,
                    last.window_index,
                    Some(&last.chosen),
                )?;
                let t = last.window_index + cfg.window;
                let meta =
                    ExplanationMeta { target_month: data.features.months[t], horizon: 1 };
                let row = restricted_row(&data.features, &fit.column_indices, t);
                let doc = explain_prediction(&fit.model, row.view(), &fit.dataset, country, meta)?;
                check_local_accuracy(&doc)?;
                write_atomic(
                    &cfg.output_dir.join(format!("explanation_{tag}_{country}.json")),
                    explanation_json(&doc).as_bytes(),
                )?;
                let importance = global_importance(&window_importance(&fit, meta)?)?;
                let mut buf = Vec::new();
                write_global_importance_csv(&mut buf, &importance)?;
                write_atomic(&cfg.output_dir.join(format!("importance_{tag}_{country}.csv")), &buf)?;
            }

            all_predictions.extend(run.predictions);
        }
        if covered == 0 {
            return Err(Error::data(format!("no usable country for {tag}")));
        }
        let mut buf = Vec::new();
        rolling::write_predictions_csv(&mut buf, &all_predictions)?;
        write_atomic(&cfg.output_dir.join(format!("predictions_{tag}.csv")), &buf)?;
        println!(
            "{tag}: {} predictions across {covered} countries -> {}",
            all_predictions.len(),
            cfg.output_dir.display()
        );
    }
    Ok(())
}

/// Refits the window behind one prediction (re-tuning exactly as the
/// backtest would) and writes its explanation document plus the window's
/// global importance ranking.
pub fn cmd_explain(
    cfg: &RunConfig,
    country: CountryCode,
    learner: LearnerKind,
    target_month: YearMonth,
    horizon: u32,
) -> Result<()> {
    cfg.validate()?;
    if !learner_supports_explanations(learner) {
        return Err(Error::config(
            "explanations are not supported for svr; pick a tree learner or elastic_net",
        ));
    }
    if horizon < 1 || horizon > cfg.horizons {
        return Err(Error::config(format!("horizon {horizon} outside 1..={}", cfg.horizons)));
    }
    let cube = load_panel(cfg)?;
    let gpi = load_gpi(cfg)?;
    let data = country_data(&cube, &gpi, country, cfg.start_offset)?;
    let rcfg = rolling_config(cfg, learner)?;

    let t_feat = data.features.n_months();
    let limit = data.truth.len().min(t_feat.saturating_sub(1));
    if cfg.window > limit {
        return Err(Error::data(format!(
            "{country} has too few aligned months for a {}-month window",
            cfg.window
        )));
    }
    let k = horizon as usize;
    let lo = cfg.window + k - 1;
    let hi = (limit - cfg.window + lo).min(t_feat - 1);
    let t = data.features.index_of(target_month).filter(|&t| t >= lo && t <= hi).ok_or_else(|| {
        Error::data(format!(
            "{target_month} at horizon {horizon} is outside the predictable range {} .. {}",
            data.features.months[lo], data.features.months[hi]
        ))
    })?;
    let s = t - lo;

    let fit = if cfg.tune_once && s > 0 {
        let first = rolling::fit_window(&data.features, &data.truth, &rcfg, 0, None)?;
        rolling::fit_window(&data.features, &data.truth, &rcfg, s, Some(&first.summary.chosen))?
    } else {
        rolling::fit_window(&data.features, &data.truth, &rcfg, s, None)?
    };

    let tag = learner.tag();
    let meta = ExplanationMeta { target_month, horizon };
    let row = restricted_row(&data.features, &fit.column_indices, t);
    let doc = explain_prediction(&fit.model, row.view(), &fit.dataset, country, meta)?;
    check_local_accuracy(&doc)?;
    let doc_path =
        cfg.output_dir.join(format!("explanation_{tag}_{country}_{target_month}_h{horizon}.json"));
    write_atomic(&doc_path, explanation_json(&doc).as_bytes())?;

    let importance = global_importance(&window_importance(&fit, meta)?)?;
    let mut buf = Vec::new();
    write_global_importance_csv(&mut buf, &importance)?;
    let importance_path =
        cfg.output_dir.join(format!("importance_{tag}_{country}_{target_month}_h{horizon}.csv"));
    write_atomic(&importance_path, &buf)?;

    println!(
        "{country} {target_month} h{horizon} ({tag}): output {} = base {} + contributions {}",
        doc.output_value,
        doc.base_value,
        doc.output_value - doc.base_value
    );
    for c in doc.positive.iter().take(3) {
        println!("  pushes higher: {} ({:+})", c.code, c.phi);
    }
    for c in doc.negative.iter().take(3) {
        println!("  pushes lower:  {} ({:+})", c.code, c.phi);
    }
    println!("wrote {} and {}", doc_path.display(), importance_path.display());
    Ok(())
}

fn format_metric(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.4}")).unwrap_or_else(|| "NA".into())
}

/// Rebuilds per-horizon metrics from previously written prediction files.
pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let wanted: BTreeSet<CountryCode> = cfg.countries.iter().copied().collect();
    for &learner in &cfg.learners {
        let tag = learner.tag();
        let path = cfg.output_dir.join(format!("predictions_{tag}.csv"));
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let predictions = rolling::read_predictions_csv(BufReader::new(file), &path)?;
        let mut by_country: BTreeMap<CountryCode, Vec<HorizonPrediction>> = BTreeMap::new();
        for p in predictions {
            if wanted.is_empty() || wanted.contains(&p.country) {
                by_country.entry(p.country).or_default().push(p);
            }
        }
        if by_country.is_empty() {
            return Err(Error::data(format!("{} holds no predictions to report", path.display())));
        }
        for (country, preds) in by_country {
            let reports = evaluate_horizons(&preds)?;
            let mut buf = Vec::new();
            rolling::write_horizon_metrics_csv(&mut buf, &reports)?;
            write_atomic(&cfg.output_dir.join(format!("metrics_{tag}_{country}.csv")), &buf)?;
            println!("{tag} {country}");
            for r in &reports {
                println!(
                    "  h{}: n={} excluded={} pearson={} rmse={} mape={}",
                    r.horizon,
                    r.evaluated,
                    r.excluded,
                    format_metric(r.metrics.as_ref().and_then(|m| m.pearson)),
                    format_metric(r.metrics.as_ref().map(|m| m.rmse)),
                    format_metric(r.metrics.as_ref().map(|m| m.mape)),
                );
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(run(["gpi-nowcast", "--help"]), 0);
        assert_eq!(run(["gpi-nowcast", "--version"]), 0);
        assert_eq!(run(["gpi-nowcast", "backtest", "--help"]), 0);
    }

    #[test]
    fn bad_usage_exits_two() {
        assert_eq!(run(["gpi-nowcast"]), 2);
        assert_eq!(run(["gpi-nowcast", "frobnicate"]), 2);
        assert_eq!(run(["gpi-nowcast", "backtest"]), 2, "--config is required");
        assert_eq!(run(["gpi-nowcast", "explain", "--config", "x.json"]), 2);
    }

    #[test]
    fn missing_config_file_exits_two() {
        assert_eq!(run(["gpi-nowcast", "ingest", "--config", "/nonexistent/c.json"]), 2);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("out.csv");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        assert!(!path.with_extension("csv.tmp").exists());
    }
}
