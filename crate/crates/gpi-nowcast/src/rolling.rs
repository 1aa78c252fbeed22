//! Rolling fixed-width window backtesting: tune, fit, then predict 1..k
//! months past the window's end, sliding the window one month at a time.
//!
//! The reading is a nowcast: a model maps month-m feature counts to month-m
//! index values, so a k-months-ahead prediction applies the fitted model to
//! the feature row of the target month itself, which exists at prediction
//! time even though the index value does not.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::calendar::YearMonth;
use crate::error::{Error, Result};
use crate::ingest::{CountryCode, FeatureMatrix, MonthlyGpiSeries};
use crate::metrics::{self, MetricsReport};
use crate::models::{self, Dataset, FittedModel, LearnerKind, LearnerParams};
use crate::rng;
use crate::tuning::{grid_search, CvResult, Grid};

/// Settings for one backtest: a window width in months, how many months
/// past the window's end to predict, and the candidate grid for the
/// learner re-tuned at each window.
#[derive(Debug, Clone)]
pub struct RollingConfig {
    pub window: usize,
    pub horizons: u32,
    pub grid: Grid,
    pub cv_folds: usize,
    /// Tune at the first window only and reuse that choice afterwards.
    pub tune_once: bool,
    pub seed: u64,
}

impl RollingConfig {
    pub fn learner(&self) -> LearnerKind {
        self.grid.learner
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 12 {
            return Err(Error::config(format!("window {} months is below the minimum of 12", self.window)));
        }
        if self.horizons < 1 || self.horizons > 12 {
            return Err(Error::config(format!("horizons {} outside 1..=12", self.horizons)));
        }
        if self.grid.is_empty() {
            return Err(Error::config("rolling backtest needs a non-empty grid"));
        }
        if self.cv_folds < 2 {
            return Err(Error::config(format!("cv_folds {} is below 2", self.cv_folds)));
        }
        Ok(())
    }
}

/// One k-months-ahead prediction from one window. `actual` is filled when
/// the truth series extends to the target month.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonPrediction {
    pub country: CountryCode,
    pub window_start: YearMonth,
    pub target_month: YearMonth,
    pub horizon: u32,
    pub predicted: f64,
    pub actual: Option<f64>,
}

/// What one window chose and scored during tuning. `chosen` is the winning
/// assignment as enumerated in the grid (fit seeds are derived separately,
/// so the same choice refits bit-identically).
#[derive(Debug, Clone)]
pub struct WindowSummary {
    pub window_index: usize,
    pub window_start: YearMonth,
    pub window_end: YearMonth,
    pub chosen: LearnerParams,
    pub cv: Vec<CvResult>,
}

/// A fitted window: the model, the training slice it saw (columns already
/// restricted to codes observed inside the window), and the indices those
/// columns occupy in the full feature matrix.
#[derive(Debug)]
pub struct WindowFit {
    pub model: FittedModel,
    pub dataset: Dataset,
    pub column_indices: Vec<usize>,
    pub summary: WindowSummary,
}

/// Everything a backtest produced: predictions in canonical order plus one
/// summary per window.
#[derive(Debug)]
pub struct BacktestRun {
    pub predictions: Vec<HorizonPrediction>,
    pub windows: Vec<WindowSummary>,
}

/// Per-horizon evaluation. `metrics` is absent when fewer than 2
/// predictions at that horizon had actuals to compare against.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonReport {
    pub horizon: u32,
    pub evaluated: usize,
    pub excluded: usize,
    pub metrics: Option<MetricsReport>,
}

fn check_alignment(features: &FeatureMatrix, truth: &MonthlyGpiSeries) -> Result<()> {
    let first = features
        .months
        .first()
        .ok_or_else(|| Error::data("feature matrix has no months"))?;
    if *first != truth.start_month {
        return Err(Error::data(format!(
            "features start {} but truth starts {}; series must be aligned",
            first, truth.start_month
        )));
    }
    if truth.values.is_empty() {
        return Err(Error::data(format!("truth series for {} is empty", truth.country)));
    }
    Ok(())
}

/// Last window start s such that months [s, s+window) have truth and month
/// s+window has a feature row.
fn last_window_start(features: &FeatureMatrix, truth: &MonthlyGpiSeries, window: usize) -> Result<usize> {
    let limit = truth.len().min(features.n_months().saturating_sub(1));
    if window > limit {
        return Err(Error::data(format!(
            "need at least {} aligned months (window {} plus one feature row past it), have truth {} / features {}",
            window + 1,
            window,
            truth.len(),
            features.n_months()
        )));
    }
    Ok(limit - window)
}

/// Training slice for the window starting at row `s`: rows [s, s+window),
/// keeping only columns with a nonzero count somewhere inside the window.
fn window_dataset(
    features: &FeatureMatrix,
    truth: &MonthlyGpiSeries,
    s: usize,
    window: usize,
) -> Result<(Dataset, Vec<usize>)> {
    let cols: Vec<usize> = (0..features.n_codes())
        .filter(|&j| (s..s + window).any(|t| features.values[[t, j]] != 0.0))
        .collect();
    if cols.is_empty() {
        return Err(Error::data(format!(
            "window starting {} observes no event codes",
            features.months[s]
        )));
    }
    let mut x = Array2::zeros((window, cols.len()));
    for (ri, t) in (s..s + window).enumerate() {
        for (ci, &j) in cols.iter().enumerate() {
            x[[ri, ci]] = features.values[[t, j]];
        }
    }
    let y = Array1::from_iter(truth.values[s..s + window].iter().copied());
    let codes = cols.iter().map(|&j| features.codes[j].as_str().to_string()).collect();
    Ok((Dataset::new(x, y, codes)?, cols))
}

fn window_seeds(cfg: &RollingConfig, country: CountryCode, s: usize) -> (u64, u64) {
    let base = rng::mix(
        rng::mix(cfg.seed, rng::label_salt(country.as_str())),
        rng::label_salt(cfg.learner().tag()),
    );
    let tune = rng::mix(rng::mix(base, rng::label_salt("tune")), s as u64);
    let fit = rng::mix(rng::mix(base, rng::label_salt("fit")), s as u64);
    (tune, fit)
}

/// Tunes (unless `reuse` supplies a prior choice) and fits the window
/// starting at row `s`. A singleton grid skips cross-validation since there
/// is nothing to select; the fitted model is unaffected because fold
/// shuffling and fitting draw from separate seed streams.
pub fn fit_window(
    features: &FeatureMatrix,
    truth: &MonthlyGpiSeries,
    cfg: &RollingConfig,
    s: usize,
    reuse: Option<&LearnerParams>,
) -> Result<WindowFit> {
    cfg.validate()?;
    check_alignment(features, truth)?;
    if s > last_window_start(features, truth, cfg.window)? {
        return Err(Error::data(format!("window index {s} is past the last full window")));
    }
    let (dataset, column_indices) = window_dataset(features, truth, s, cfg.window)?;
    let (tune_seed, fit_seed) = window_seeds(cfg, truth.country, s);
    let (chosen, cv) = match reuse {
        Some(params) => (params.clone(), Vec::new()),
        None if cfg.grid.len() == 1 => (cfg.grid.assignments[0].clone(), Vec::new()),
        None => grid_search(&dataset, &cfg.grid, cfg.cv_folds, tune_seed)?,
    };
    let model = models::fit(&dataset, &chosen.with_seed(fit_seed))?;
    let summary = WindowSummary {
        window_index: s,
        window_start: features.months[s],
        window_end: features.months[s + cfg.window - 1],
        chosen,
        cv,
    };
    Ok(WindowFit { model, dataset, column_indices, summary })
}

/// Runs the full sweep: for each window start s while a full window of
/// truth and one later feature row exist, tune and fit on [s, s+window),
/// then predict months s+window .. s+window+horizons-1 (clipped to the
/// feature range). Predictions come out ordered by window then horizon.
pub fn run_rolling_backtest(
    features: &FeatureMatrix,
    truth: &MonthlyGpiSeries,
    cfg: &RollingConfig,
) -> Result<BacktestRun> {
    cfg.validate()?;
    check_alignment(features, truth)?;
    let last_s = last_window_start(features, truth, cfg.window)?;
    let t_feat = features.n_months();
    let mut predictions = Vec::new();
    let mut windows = Vec::new();
    let mut reuse: Option<LearnerParams> = None;
    for s in 0..=last_s {
        let fit = fit_window(features, truth, cfg, s, reuse.as_ref())?;
        if cfg.tune_once && reuse.is_none() {
            reuse = Some(fit.summary.chosen.clone());
        }
        for k in 1..=cfg.horizons {
            let t = s + cfg.window + (k as usize - 1);
            if t >= t_feat {
                break;
            }
            let mut row = Array1::zeros(fit.column_indices.len());
            for (ci, &j) in fit.column_indices.iter().enumerate() {
                row[ci] = features.values[[t, j]];
            }
            predictions.push(HorizonPrediction {
                country: truth.country,
                window_start: fit.summary.window_start,
                target_month: features.months[t],
                horizon: k,
                predicted: fit.model.predict_row(row.view()),
                actual: truth.values.get(t).copied(),
            });
        }
        windows.push(fit.summary);
    }
    Ok(BacktestRun { predictions, windows })
}

/// Predictions only; see [`run_rolling_backtest`] for window summaries.
pub fn rolling_backtest(
    features: &FeatureMatrix,
    truth: &MonthlyGpiSeries,
    cfg: &RollingConfig,
) -> Result<Vec<HorizonPrediction>> {
    Ok(run_rolling_backtest(features, truth, cfg)?.predictions)
}

/// Groups predictions by horizon and scores each group on the pairs that
/// have actuals. Predictions lacking actuals are counted as excluded, and
/// a horizon with fewer than 2 scoreable pairs reports no metrics.
pub fn evaluate_horizons(preds: &[HorizonPrediction]) -> Result<Vec<HorizonReport>> {
    let mut groups: BTreeMap<u32, (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for p in preds {
        let entry = groups.entry(p.horizon).or_default();
        match p.actual {
            Some(a) => {
                entry.0.push(a);
                entry.1.push(p.predicted);
            }
            None => entry.2 += 1,
        }
    }
    let mut reports = Vec::with_capacity(groups.len());
    for (horizon, (actuals, predicted, excluded)) in groups {
        let metrics = if actuals.len() >= 2 { Some(metrics::report(&actuals, &predicted)?) } else { None };
        reports.push(HorizonReport { horizon, evaluated: actuals.len(), excluded, metrics });
    }
    Ok(reports)
}

/// Writes predictions as CSV `country,window_start,target_month,horizon,
/// predicted,actual`, one row per prediction in the given order; a missing
/// actual leaves the last field empty.
pub fn write_predictions_csv<W: Write>(mut out: W, preds: &[HorizonPrediction]) -> Result<()> {
    let fail = |e: std::io::Error| Error::data(format!("predictions write: {e}"));
    writeln!(out, "country,window_start,target_month,horizon,predicted,actual").map_err(fail)?;
    for p in preds {
        let actual = p.actual.map(|a| a.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.country, p.window_start, p.target_month, p.horizon, p.predicted, actual
        )
        .map_err(fail)?;
    }
    Ok(())
}

/// Reads a predictions CSV written by [`write_predictions_csv`].
pub fn read_predictions_csv<R: BufRead>(input: R, path: &Path) -> Result<Vec<HorizonPrediction>> {
    let bad = |line: usize, msg: String| Error::format(path, format!("line {line}: {msg}"));
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h == "country,window_start,target_month,horizon,predicted,actual" => {}
        Some((_, Ok(h))) => return Err(bad(1, format!("unexpected header {h:?}"))),
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        None => return Err(Error::format(path, "empty predictions file")),
    }
    let mut preds = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let n = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(bad(n, format!("expected 6 fields, found {}", fields.len())));
        }
        let parse_f = |s: &str, what: &str| {
            s.parse::<f64>().map_err(|_| bad(n, format!("bad {what} {s:?}")))
        };
        preds.push(HorizonPrediction {
            country: fields[0].parse().map_err(|e| bad(n, format!("{e}")))?,
            window_start: fields[1].parse().map_err(|e| bad(n, format!("{e}")))?,
            target_month: fields[2].parse().map_err(|e| bad(n, format!("{e}")))?,
            horizon: fields[3].parse().map_err(|_| bad(n, format!("bad horizon {:?}", fields[3])))?,
            predicted: parse_f(fields[4], "predicted")?,
            actual: if fields[5].is_empty() { None } else { Some(parse_f(fields[5], "actual")?) },
        });
    }
    Ok(preds)
}

/// Writes per-horizon metrics with horizons as columns and one row per
/// measure; undefined cells print NA.
pub fn write_horizon_metrics_csv<W: Write>(mut out: W, reports: &[HorizonReport]) -> Result<()> {
    let fail = |e: std::io::Error| Error::data(format!("metrics write: {e}"));
    let mut header = String::from("metric");
    for r in reports {
        header.push_str(&format!(",h{}", r.horizon));
    }
    writeln!(out, "{header}").map_err(fail)?;
    let cell = |f: &dyn Fn(&HorizonReport) -> Option<String>| {
        reports.iter().map(|r| f(r).unwrap_or_else(|| "NA".into())).collect::<Vec<_>>().join(",")
    };
    writeln!(out, "n,{}", cell(&|r| Some(r.evaluated.to_string()))).map_err(fail)?;
    writeln!(out, "excluded,{}", cell(&|r| Some(r.excluded.to_string()))).map_err(fail)?;
    writeln!(out, "pearson,{}", cell(&|r| r.metrics.as_ref().and_then(|m| m.pearson).map(|v| v.to_string())))
        .map_err(fail)?;
    writeln!(out, "rmse,{}", cell(&|r| r.metrics.as_ref().map(|m| m.rmse.to_string()))).map_err(fail)?;
    writeln!(out, "mape,{}", cell(&|r| r.metrics.as_ref().map(|m| m.mape.to_string()))).map_err(fail)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::TreeParams;

    fn tree_grid() -> Grid {
        Grid::singleton(LearnerParams::Tree(TreeParams {
            max_depth: 2,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }))
    }

    fn cfg(window: usize, horizons: u32, grid: Grid) -> RollingConfig {
        RollingConfig { window, horizons, grid, cv_folds: 4, tune_once: false, seed: 7 }
    }

    fn month(i: usize) -> YearMonth {
        YearMonth::new(2010, 1).unwrap().add_months(i as i64)
    }

    /// Feature matrix with `t` months and 3 columns that trend with time,
    /// plus a truth series following the first column.
    fn synthetic(t_feat: usize, t_truth: usize) -> (FeatureMatrix, MonthlyGpiSeries) {
        let months: Vec<YearMonth> = (0..t_feat).map(month).collect();
        let codes = vec!["010".parse().unwrap(), "020".parse().unwrap(), "190".parse().unwrap()];
        let mut values = Array2::zeros((t_feat, 3));
        for t in 0..t_feat {
            values[[t, 0]] = 1.0 + (t % 7) as f64;
            values[[t, 1]] = 2.0 + (t % 3) as f64;
            values[[t, 2]] = 5.0;
        }
        let truth = MonthlyGpiSeries {
            country: "US".parse().unwrap(),
            start_month: months[0],
            values: (0..t_truth).map(|t| 1.5 + 0.3 * (t % 7) as f64).collect(),
        };
        (FeatureMatrix { months, codes, values }, truth)
    }

    #[test]
    fn horizon_count_law() {
        let (features, truth) = synthetic(20, 20);
        let preds = rolling_backtest(&features, &truth, &cfg(12, 6, tree_grid())).unwrap();
        for k in 1..=6u32 {
            let expect = 20 - 12 - k as usize + 1;
            assert_eq!(preds.iter().filter(|p| p.horizon == k).count(), expect, "horizon {k}");
        }
        for p in &preds {
            let months_ahead = p.window_start.months_until(p.target_month) as usize;
            assert_eq!(months_ahead, 12 + p.horizon as usize - 1);
            assert!(p.actual.is_some());
        }
    }

    #[test]
    fn boundary_single_window_single_horizon() {
        let (features, truth) = synthetic(13, 13);
        let preds = rolling_backtest(&features, &truth, &cfg(12, 6, tree_grid())).unwrap();
        assert_eq!(preds.len(), 1);
        assert_eq!(preds[0].horizon, 1);
        assert_eq!(preds[0].target_month, month(12));
    }

    #[test]
    fn features_past_truth_predict_without_actuals() {
        let (features, truth) = synthetic(20, 15);
        let preds = rolling_backtest(&features, &truth, &cfg(12, 6, tree_grid())).unwrap();
        let starts: Vec<usize> =
            preds.iter().map(|p| month(0).months_until(p.window_start) as usize).collect();
        assert_eq!(starts.iter().copied().max(), Some(3));
        assert!(preds.iter().any(|p| p.actual.is_none()));
        let last_target = preds.iter().map(|p| p.target_month).max().unwrap();
        assert_eq!(last_target, month(19));
        for p in &preds {
            let t = month(0).months_until(p.target_month) as usize;
            assert_eq!(p.actual.is_some(), t < 15);
        }
    }

    #[test]
    fn too_few_months_is_an_error() {
        let (features, truth) = synthetic(12, 12);
        let err = rolling_backtest(&features, &truth, &cfg(12, 6, tree_grid())).unwrap_err();
        assert!(err.to_string().contains("aligned months"), "{err}");
    }

    #[test]
    fn misaligned_starts_are_an_error() {
        let (features, mut truth) = synthetic(20, 20);
        truth.start_month = truth.start_month.add_months(1);
        assert!(rolling_backtest(&features, &truth, &cfg(12, 6, tree_grid())).is_err());
    }

    #[test]
    fn constant_signal_predicts_constant() {
        let months: Vec<YearMonth> = (0..18).map(month).collect();
        let features = FeatureMatrix {
            months: months.clone(),
            codes: vec!["010".parse().unwrap(), "020".parse().unwrap()],
            values: Array2::from_elem((18, 2), 4.0),
        };
        let truth = MonthlyGpiSeries {
            country: "US".parse().unwrap(),
            start_month: months[0],
            values: vec![3.0; 18],
        };
        let preds = rolling_backtest(&features, &truth, &cfg(12, 6, tree_grid())).unwrap();
        for p in &preds {
            assert!((p.predicted - 3.0).abs() < 1e-12);
            assert_eq!(p.actual, Some(3.0));
        }
        let reports = evaluate_horizons(&preds).unwrap();
        for r in reports.iter().filter(|r| r.metrics.is_some()) {
            let m = r.metrics.as_ref().unwrap();
            assert_eq!(m.rmse, 0.0);
            assert_eq!(m.mape, 0.0);
            assert_eq!(m.pearson, None);
        }
    }

    #[test]
    fn backtest_is_deterministic() {
        let (features, truth) = synthetic(24, 24);
        let grid = Grid::new(
            LearnerKind::Tree,
            vec![
                LearnerParams::Tree(TreeParams { max_depth: 0, min_samples_split: 2, min_samples_leaf: 1 }),
                LearnerParams::Tree(TreeParams { max_depth: 3, min_samples_split: 2, min_samples_leaf: 1 }),
            ],
        )
        .unwrap();
        let c = cfg(12, 3, grid);
        let a = rolling_backtest(&features, &truth, &c).unwrap();
        let b = rolling_backtest(&features, &truth, &c).unwrap();
        assert_eq!(a.len(), b.len());
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(pa.predicted.to_bits(), pb.predicted.to_bits());
        }
    }

    #[test]
    fn tune_once_reuses_first_choice_without_rescoring() {
        let (features, truth) = synthetic(24, 24);
        let grid = Grid::new(
            LearnerKind::Tree,
            vec![
                LearnerParams::Tree(TreeParams { max_depth: 0, min_samples_split: 2, min_samples_leaf: 1 }),
                LearnerParams::Tree(TreeParams { max_depth: 3, min_samples_split: 2, min_samples_leaf: 1 }),
            ],
        )
        .unwrap();
        let mut c = cfg(12, 2, grid);
        c.tune_once = true;
        let run = run_rolling_backtest(&features, &truth, &c).unwrap();
        assert!(!run.windows[0].cv.is_empty());
        for w in &run.windows[1..] {
            assert!(w.cv.is_empty());
            assert_eq!(w.chosen, run.windows[0].chosen);
        }
    }

    #[test]
    fn windows_advance_one_month() {
        let (features, truth) = synthetic(20, 20);
        let run = run_rolling_backtest(&features, &truth, &cfg(12, 1, tree_grid())).unwrap();
        for (i, w) in run.windows.iter().enumerate() {
            assert_eq!(w.window_index, i);
            assert_eq!(w.window_start, month(i));
            assert_eq!(w.window_end, month(i + 11));
        }
        for p in &run.predictions {
            let end = p.window_start.add_months(11);
            assert!(p.target_month > end, "prediction target inside its own window");
        }
    }

    #[test]
    fn all_zero_window_is_an_error() {
        let months: Vec<YearMonth> = (0..14).map(month).collect();
        let features = FeatureMatrix {
            months: months.clone(),
            codes: vec!["010".parse().unwrap()],
            values: Array2::zeros((14, 1)),
        };
        let truth = MonthlyGpiSeries {
            country: "US".parse().unwrap(),
            start_month: months[0],
            values: vec![2.0; 14],
        };
        let err = rolling_backtest(&features, &truth, &cfg(12, 1, tree_grid())).unwrap_err();
        assert!(err.to_string().contains("observes no event codes"), "{err}");
    }

    #[test]
    fn evaluate_horizons_counts_and_excludes() {
        let us: CountryCode = "US".parse().unwrap();
        let mk = |k: u32, predicted: f64, actual: Option<f64>| HorizonPrediction {
            country: us,
            window_start: month(0),
            target_month: month(12),
            horizon: k,
            predicted,
            actual,
        };
        let preds = vec![
            mk(1, 2.0, Some(2.0)),
            mk(1, 2.5, Some(2.0)),
            mk(1, 3.0, None),
            mk(2, 1.0, Some(1.5)),
        ];
        let reports = evaluate_horizons(&preds).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!((reports[0].evaluated, reports[0].excluded), (2, 1));
        assert!(reports[0].metrics.is_some());
        assert_eq!((reports[1].evaluated, reports[1].excluded), (1, 0));
        assert!(reports[1].metrics.is_none(), "single pair must not be scored");
    }

    #[test]
    fn perfect_predictions_score_perfectly() {
        let us: CountryCode = "US".parse().unwrap();
        let preds: Vec<HorizonPrediction> = (0..6)
            .map(|i| HorizonPrediction {
                country: us,
                window_start: month(i),
                target_month: month(i + 12),
                horizon: 1,
                predicted: 1.0 + i as f64 * 0.2,
                actual: Some(1.0 + i as f64 * 0.2),
            })
            .collect();
        let reports = evaluate_horizons(&preds).unwrap();
        let m = reports[0].metrics.as_ref().unwrap();
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.mape, 0.0);
        assert_eq!(m.pearson, Some(1.0));
    }

    #[test]
    fn predictions_csv_round_trips() {
        let us: CountryCode = "US".parse().unwrap();
        let preds = vec![
            HorizonPrediction {
                country: us,
                window_start: month(0),
                target_month: month(12),
                horizon: 1,
                predicted: 2.125,
                actual: Some(2.0),
            },
            HorizonPrediction {
                country: us,
                window_start: month(0),
                target_month: month(13),
                horizon: 2,
                predicted: 0.1 + 0.2,
                actual: None,
            },
        ];
        let mut buf = Vec::new();
        write_predictions_csv(&mut buf, &preds).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "country,window_start,target_month,horizon,predicted,actual\n\
             US,2010-01,2011-01,1,2.125,2\n\
             US,2010-01,2011-02,2,0.30000000000000004,\n"
        );
        let back = read_predictions_csv(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back, preds);
    }

    #[test]
    fn predictions_csv_rejects_bad_rows() {
        let bad_header = "country,window_start\nUS,2010-01\n";
        assert!(read_predictions_csv(bad_header.as_bytes(), Path::new("m")).is_err());
        let bad_row = "country,window_start,target_month,horizon,predicted,actual\nUS,2010-01,2011-01,one,2.0,\n";
        assert!(read_predictions_csv(bad_row.as_bytes(), Path::new("m")).is_err());
    }

    #[test]
    fn metrics_csv_layout() {
        let reports = vec![
            HorizonReport {
                horizon: 1,
                evaluated: 3,
                excluded: 0,
                metrics: Some(MetricsReport { n: 3, pearson: Some(0.5), rmse: 0.25, mape: 12.5 }),
            },
            HorizonReport { horizon: 2, evaluated: 1, excluded: 2, metrics: None },
        ];
        let mut buf = Vec::new();
        write_horizon_metrics_csv(&mut buf, &reports).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "metric,h1,h2\nn,3,1\nexcluded,0,2\npearson,0.5,NA\nrmse,0.25,NA\nmape,12.5,NA\n"
        );
    }
}
