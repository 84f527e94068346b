use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use floodloss::backtest::{
    counties_in, group_loo, prepare_table, repeated_split_eval, run_windows, summary_rows, weighted_aggregate, window_plan,
    write_summary, BacktestReport, ExperimentConfig, MetricKey, Protocol, Stage,
};
use floodloss::claims::{adjust_inflation, fix_construction_dates, parse_claims, write_claims, write_flags, ClaimTable, CpiTable, SchemaRegistry};
use floodloss::rainfall::RainGrid;
use floodloss::synthetic::synthetic_table;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::{usage, Cli, Format, SYNTHETIC_CONFIG};

/// County used by `--synthetic` when the configuration names none.
pub const SYNTHETIC_COUNTY: &str = "48201";
/// Significance level noted in the p-value plot data.
pub const ALPHA: f64 = 0.05;

/// A report as written to disk, pointing back at the run that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub manifest: String,
    pub report: BacktestReport,
}

fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

/// Configuration from `--config` (or the bundled synthetic one), with
/// command-line overrides applied on top.
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            let mut cfg = ExperimentConfig::parse_str(&text)?;
            let base = path.parent();
            for p in [&mut cfg.claims, &mut cfg.cpi, &mut cfg.schema, &mut cfg.rain_grid, &mut cfg.out] {
                if let Some(v) = p.as_mut() {
                    *v = resolve(base, v);
                }
            }
            cfg
        }
        None if cli.synthetic => ExperimentConfig::parse_str(SYNTHETIC_CONFIG)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    for (dst, src) in [(&mut cfg.claims, &cli.claims), (&mut cfg.cpi, &cli.cpi), (&mut cfg.schema, &cli.schema), (&mut cfg.out, &cli.out)] {
        if src.is_some() {
            dst.clone_from(src);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

/// The claims table the run works on: synthetic, or parsed, inflation
/// adjusted and date-repaired from the configured files.
pub fn load_table(cli: &Cli, cfg: &ExperimentConfig, manifest: &mut RunManifest) -> Result<ClaimTable> {
    if cli.synthetic {
        let counties = if cfg.counties.is_empty() { vec![SYNTHETIC_COUNTY.to_string()] } else { cfg.counties.clone() };
        manifest.stage("load", "ok", format!("synthetic counties {}", counties.join(",")));
        return Ok(synthetic_table(
            &counties,
            cfg.synthetic_first_year,
            cfg.synthetic_last_year,
            cfg.synthetic_rows_per_year,
            cfg.seed,
        )?);
    }
    let claims = cfg.claims.as_ref().ok_or_else(|| usage("no claims file: pass --claims or --synthetic"))?;
    let schema = match &cfg.schema {
        Some(p) => {
            manifest.input(p)?;
            SchemaRegistry::from_csv(fs::File::open(p).with_context(|| format!("opening {}", p.display()))?)?
        }
        None => SchemaRegistry::nfip(),
    };
    manifest.input(claims)?;
    let file = fs::File::open(claims).with_context(|| format!("opening {}", claims.display()))?;
    let mut table = parse_claims(file, &schema).with_context(|| format!("parsing {}", claims.display()))?;
    if table.coercion_warnings > 0 {
        warn!("{} cells failed type coercion and were marked missing", table.coercion_warnings);
    }
    manifest.stage("parse", "ok", format!("{} rows", table.n_rows()));
    if let Some(p) = &cfg.cpi {
        manifest.input(p)?;
        let cpi = CpiTable::from_csv(fs::File::open(p).with_context(|| format!("opening {}", p.display()))?, CpiTable::DEFAULT_BASE_YEAR)?;
        table = adjust_inflation(&table, &cpi);
        manifest.stage("inflation", "ok", format!("base year {}", cpi.base_year));
    } else {
        manifest.stage("inflation", "skipped", "no CPI table");
    }
    table = fix_construction_dates(&table);
    Ok(table)
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> floodloss::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn cmd_ingest(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = out_dir(&cfg);
    let mut manifest = RunManifest::start("ingest");
    manifest.seed = cli.synthetic.then_some(cfg.seed);
    let table = load_table(cli, &cfg, &mut manifest)?;
    if table.n_rows() == 0 {
        warn!("claims table is empty (n=0)");
    }
    manifest.write_output(&out, "claims.csv", &to_bytes(|b| write_claims(&table, b))?)?;
    manifest.write_output(&out, "flags.csv", &to_bytes(|b| write_flags(&table.flags, b))?)?;
    let rates = table.missing_rates();
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(["field", "missing_rate"])?;
    for (f, r) in &rates {
        wr.write_record([f.clone(), r.to_string()])?;
    }
    manifest.write_output(&out, "missing_rates.csv", &wr.into_inner()?)?;
    println!("rows: {}", table.n_rows());
    println!("flags: {}", table.flags.len());
    for (f, r) in &rates {
        println!("missing {f}: {:.2}%", 100.0 * r);
    }
    manifest.stage("write", "ok", out.display().to_string());
    manifest.finish(&out)?;
    Ok(())
}

fn sanitize(s: &str) -> String {
    let t: String = s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if t.is_empty() {
        "all".into()
    } else {
        t
    }
}

fn report_name(r: &BacktestReport, index: usize, protocol: Protocol) -> String {
    match (protocol, r.window) {
        (Protocol::Windows, Some(w)) => format!("{}_{}_{}.json", sanitize(&r.county), w.mode, w.test_year()),
        (Protocol::Repeated, _) => format!("repeat_{index:03}.json"),
        _ => format!("{}.json", sanitize(&r.label)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub stage: Stage,
    pub metric: String,
    pub value: f64,
    pub reports: usize,
}

/// Claim-weighted means of the headline metrics over reports that carry them.
pub fn aggregates(reports: &[BacktestReport]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for stage in [Stage::Before, Stage::After] {
        for key in [MetricKey::DistR2, MetricKey::KsP, MetricKey::Kl, MetricKey::Auc, MetricKey::RmseOverSigma] {
            let with: Vec<BacktestReport> = reports
                .iter()
                .filter(|r| r.n_test > 0)
                .filter(|r| match stage {
                    Stage::Before => key.get(&r.before).is_some(),
                    Stage::After => r.after.as_ref().and_then(|b| key.get(b)).is_some(),
                })
                .cloned()
                .collect();
            if let Ok(value) = weighted_aggregate(&with, stage, key) {
                out.push(Aggregate { stage, metric: key.name().into(), value, reports: with.len() });
            }
        }
    }
    out
}

fn summary_bytes(reports: &[BacktestReport], format: Format) -> Result<(String, Vec<u8>)> {
    Ok(match format {
        Format::Csv => ("summary.csv".into(), to_bytes(|b| write_summary(reports, b))?),
        Format::Json => ("summary.json".into(), serde_json::to_vec_pretty(&summary_rows(reports))?),
    })
}

pub fn cmd_backtest(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = out_dir(&cfg);
    let mut manifest = RunManifest::start("backtest");
    manifest.seed = Some(cfg.seed);
    if let Some(p) = &cli.config {
        manifest.input(p)?;
    }
    let table = load_table(cli, &cfg, &mut manifest)?;
    let grid = match (&cfg.rain, &cfg.rain_grid) {
        (Some(_), Some(p)) => {
            manifest.input(p)?;
            Some(RainGrid::from_csv(fs::File::open(p).with_context(|| format!("opening {}", p.display()))?)?)
        }
        _ => None,
    };
    let table = prepare_table(&table, &cfg, grid.as_ref())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build()?;
    info!("running {:?} protocol on {} claims with {} workers", cfg.protocol, table.n_rows(), pool.current_num_threads());

    let reports = match cfg.protocol {
        Protocol::Windows => {
            let counties = if cfg.counties.is_empty() { counties_in(&table) } else { cfg.counties.clone() };
            let plan = window_plan(cfg.baseline, cfg.offset, cfg.mode, cfg.last_test_year).map_err(|e| usage(e.to_string()))?;
            info!("{} counties × {} windows", counties.len(), plan.len());
            pool.install(|| run_windows(&table, &counties, &plan, &cfg, cfg.seed))
        }
        Protocol::Repeated => {
            let s = pool.install(|| repeated_split_eval(&table, cfg.repeats, &cfg, cfg.seed))?;
            manifest.write_output(&out, "repeated_summary.json", &serde_json::to_vec_pretty(&(&s.before, &s.after))?)?;
            s.reports
        }
        Protocol::Loo => {
            let col_name = cfg.event_column.as_deref().expect("validated");
            let col = table.column(col_name).ok_or_else(|| usage(format!("event column `{col_name}` not in the claims table")))?;
            let labels: Vec<String> = (0..table.n_rows())
                .map(|r| match col.categorical() {
                    Some(v) if !col.missing[r] => v[r].clone(),
                    _ => col.value_f64(r).filter(|_| !col.missing[r]).map(|x| x.to_string()).unwrap_or_default(),
                })
                .collect();
            pool.install(|| group_loo(&table, &labels, &cfg, cfg.seed))?
        }
    };

    let flagged = reports.iter().filter(|r| !r.flags.is_empty()).count();
    manifest.stage("backtest", "ok", format!("{} reports, {} with flags", reports.len(), flagged));
    for (i, r) in reports.iter().enumerate() {
        let file = ReportFile { manifest: format!("../{MANIFEST_FILE}"), report: r.clone() };
        manifest.write_output(&out, &format!("reports/{}", report_name(r, i, cfg.protocol)), serde_json::to_string_pretty(&file)?.as_bytes())?;
    }
    let (name, bytes) = summary_bytes(&reports, cli.format)?;
    manifest.write_output(&out, &name, &bytes)?;
    let agg = aggregates(&reports);
    manifest.write_output(&out, "aggregates.json", &serde_json::to_vec_pretty(&agg)?)?;
    for a in &agg {
        println!("weighted {} {:?}: {:.6} over {} reports", a.metric, a.stage, a.value, a.reports);
    }
    manifest.config = Some(cfg);
    manifest.finish(&out)?;
    Ok(())
}

pub fn read_reports(dir: &Path) -> Result<Vec<BacktestReport>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != MANIFEST_FILE))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)?;
            let file: ReportFile = serde_json::from_str(&text).with_context(|| format!("{} is not a report file", p.display()))?;
            Ok(file.report)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PlotPoint {
    test_year: Option<i32>,
    label: String,
    r2_before: Option<f64>,
    r2_after: Option<f64>,
    ks_p_before: Option<f64>,
    ks_p_after: Option<f64>,
    alpha: f64,
    n: usize,
}

pub fn cmd_report(cli: &Cli, dir: &Path) -> Result<()> {
    let mut reports = read_reports(dir)?;
    if reports.is_empty() {
        return Err(usage(format!("no report files in {}", dir.display())));
    }
    reports.sort_by(|a, b| (&a.county, a.test_year(), &a.label).cmp(&(&b.county, b.test_year(), &b.label)));
    let out = cli.out.clone().unwrap_or_else(|| dir.parent().unwrap_or(Path::new(".")).join("merged"));
    let mut manifest = RunManifest::start("report");
    let (name, bytes) = summary_bytes(&reports, cli.format)?;
    manifest.write_output(&out, &name, &bytes)?;

    let mut by_county: BTreeMap<String, Vec<PlotPoint>> = BTreeMap::new();
    for r in &reports {
        let after = r.after.as_ref();
        by_county.entry(sanitize(&r.county)).or_default().push(PlotPoint {
            test_year: r.test_year(),
            label: r.label.clone(),
            r2_before: r.before.dist_r2,
            r2_after: after.and_then(|b| b.dist_r2),
            ks_p_before: r.before.ks_p,
            ks_p_after: after.and_then(|b| b.ks_p),
            alpha: ALPHA,
            n: r.n_test,
        });
    }
    for (county, points) in &by_county {
        match cli.format {
            Format::Csv => {
                let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                let year = |p: &PlotPoint| p.test_year.map(|y| y.to_string()).unwrap_or_default();
                let mut r2 = csv::Writer::from_writer(Vec::new());
                r2.write_record(["test_year", "label", "r2_before", "r2_after", "n"])?;
                let mut pv = csv::Writer::from_writer(Vec::new());
                pv.write_record(["test_year", "label", "ks_p_before", "ks_p_after", "alpha"])?;
                for p in points {
                    r2.write_record([year(p), p.label.clone(), cell(p.r2_before), cell(p.r2_after), p.n.to_string()])?;
                    pv.write_record([year(p), p.label.clone(), cell(p.ks_p_before), cell(p.ks_p_after), ALPHA.to_string()])?;
                }
                manifest.write_output(&out, &format!("{county}_r2.csv"), &r2.into_inner()?)?;
                manifest.write_output(&out, &format!("{county}_pvalue.csv"), &pv.into_inner()?)?;
            }
            Format::Json => {
                manifest.write_output(&out, &format!("{county}_plot.json"), &serde_json::to_vec_pretty(points)?)?;
            }
        }
    }
    println!("{} reports, {} counties", reports.len(), by_county.len());
    manifest.stage("report", "ok", format!("{} reports", reports.len()));
    manifest.finish(&out)?;
    Ok(())
}
