//! `ablate` runs every (missingness rate, arm, seed) cell; `report`
//! aggregates sweep CSVs into a summary table and charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use asymdiff_core::baselines::{run_arm, ArmName, ArmSpec};
use asymdiff_core::dataset::{generate, read_csv, SynthSpec};
use asymdiff_core::features::{FeatureSchema, Sample};
use asymdiff_core::metrics::{relaimpr, MetricsReport};
use asymdiff_core::{sha256_hex, Error, Result, CODE_VERSION};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{json_hash, write_resolved, SweepRun};
use crate::plot::{bar_chart, line_chart, BarSeries, LineSeries, Point};

pub const SWEEP_CSV: &str = "sweep.csv";

/// One row of the sweep CSV: a [`MetricsReport`] plus the data it was
/// evaluated on. RelaImpr is against the `base` arm at the same seed and
/// missingness rate, when that arm is part of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Eval missingness rate of synthetic data; empty for CSV input.
    pub missing_rate: Option<f64>,
    pub data_hash: String,
    pub arm: String,
    pub seed: u64,
    pub config_hash: String,
    pub code_version: String,
    pub serving_path: String,
    pub auc: f64,
    pub uauc: f64,
    pub logloss: f64,
    pub n_examples: usize,
    pub n_users_scored: usize,
    pub n_users_skipped: usize,
    pub relaimpr_baseline: String,
    pub auc_relaimpr_pct: Option<f64>,
    pub uauc_relaimpr_pct: Option<f64>,
}

impl SweepRow {
    fn new(missing_rate: Option<f64>, data_hash: &str, r: &MetricsReport) -> Self {
        let ri = r.relaimpr.first();
        Self {
            missing_rate,
            data_hash: data_hash.to_string(),
            arm: r.arm.clone(),
            seed: r.seed,
            config_hash: r.config_hash.clone(),
            code_version: r.code_version.clone(),
            serving_path: r.serving_path.clone(),
            auc: r.auc,
            uauc: r.uauc,
            logloss: r.logloss,
            n_examples: r.n_examples,
            n_users_scored: r.n_users_scored,
            n_users_skipped: r.n_users_skipped,
            relaimpr_baseline: ri.map(|e| e.baseline.clone()).unwrap_or_default(),
            auc_relaimpr_pct: ri.map(|e| e.auc_pct),
            uauc_relaimpr_pct: ri.map(|e| e.uauc_pct),
        }
    }
}

struct SweepData {
    missing_rate: Option<f64>,
    hash: String,
    schema: FeatureSchema,
    train: Vec<Sample>,
    eval: Vec<Sample>,
}

fn load_data(run: &SweepRun) -> Result<Vec<SweepData>> {
    if let (Some(tp), Some(ep)) = (&run.train_data, &run.eval_data) {
        let train = read_csv(tp, None)?;
        let eval = read_csv(ep, Some(&train.schema))?;
        let hash = sha256_hex(format!("{}{}", sha256_hex(&fs::read(tp)?), sha256_hex(&fs::read(ep)?)).as_bytes());
        return Ok(vec![SweepData {
            missing_rate: None,
            hash,
            schema: train.schema,
            train: train.samples,
            eval: eval.samples,
        }]);
    }
    let rates = if run.missing_rates.is_empty() {
        vec![run.data.missing_rate]
    } else {
        run.missing_rates.clone()
    };
    rates
        .into_iter()
        .map(|rho| {
            let spec = SynthSpec {
                missing_rate: rho,
                ..run.data.clone()
            };
            let d = generate(&spec)?;
            Ok(SweepData {
                missing_rate: Some(rho),
                hash: spec.hash(),
                schema: d.schema,
                train: d.train,
                eval: d.eval,
            })
        })
        .collect()
}

/// Runs the sweep on up to `jobs` threads. Row order is fixed
/// (rate, then arm, then seed) regardless of scheduling.
pub fn ablate(run: &SweepRun, jobs: usize) -> Result<Vec<SweepRow>> {
    run.validate()?;
    let data = load_data(run)?;
    let mut cells = Vec::new();
    for d in 0..data.len() {
        for &arm in &run.arms {
            for &seed in &run.seeds {
                cells.push((d, arm, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    let mut reports: Vec<MetricsReport> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(d, arm, seed)| {
                let spec = ArmSpec {
                    arm,
                    gaussian: run.train.gaussian,
                };
                let ds = &data[d];
                let mut r = run_arm(&spec, &run.train, &ds.schema, &ds.train, &ds.eval, &[seed])?;
                log::info!("rate {:?} {arm} seed {seed}: auc {:.5}", ds.missing_rate, r[0].auc);
                Ok(r.remove(0))
            })
            .collect::<Result<_>>()
    })?;
    let bases: Vec<Option<MetricsReport>> = cells
        .iter()
        .map(|&(d, _, seed)| {
            cells
                .iter()
                .position(|&c| c == (d, ArmName::Base, seed))
                .map(|i| reports[i].clone())
        })
        .collect();
    for (r, b) in reports.iter_mut().zip(&bases) {
        if let Some(b) = b {
            r.add_relaimpr(b)?;
        }
    }
    let rows: Vec<SweepRow> = cells
        .iter()
        .zip(&reports)
        .map(|(&(d, _, _), r)| SweepRow::new(data[d].missing_rate, &data[d].hash, r))
        .collect();
    fs::create_dir_all(&run.out_dir)?;
    write_rows(&run.out_dir.join(SWEEP_CSV), &rows)?;
    let resolved = SweepRun {
        train_data: run.train_data.as_deref().map(std::path::absolute).transpose()?,
        eval_data: run.eval_data.as_deref().map(std::path::absolute).transpose()?,
        out_dir: std::path::absolute(&run.out_dir)?,
        ..run.clone()
    };
    write_resolved(
        &run.out_dir.join("sweep.resolved.toml"),
        &resolved,
        &format!("seeds={:?} config_hash={}", run.seeds, json_hash(&resolved)),
    )?;
    Ok(rows)
}

pub fn write_rows(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?;
    if rows.is_empty() {
        return Err(Error::Data(format!("{} has no rows", path.display())));
    }
    Ok(rows)
}

/// Summary statistics over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (0 for a single seed).
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        let n = values.len();
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mean = v.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stats {
            n,
            mean,
            median,
            std,
            min: v[0],
            max: v[n - 1],
        }
    }

    fn point(&self) -> Point {
        Point {
            value: self.mean,
            lo: self.min,
            hi: self.max,
        }
    }
}

/// One (missingness rate, arm) cell of the summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub missing_rate: Option<f64>,
    pub arm: String,
    pub n_seeds: usize,
    pub seeds: String,
    pub auc_mean: f64,
    pub auc_median: f64,
    pub auc_std: f64,
    pub auc_min: f64,
    pub auc_max: f64,
    /// RelaImpr of the mean AUC over the base arm's mean AUC.
    pub auc_relaimpr_pct: Option<f64>,
    pub uauc_mean: f64,
    pub uauc_median: f64,
    pub uauc_std: f64,
    pub uauc_min: f64,
    pub uauc_max: f64,
    pub uauc_relaimpr_pct: Option<f64>,
    pub logloss_mean: f64,
    pub config_hashes: String,
    pub code_version: String,
    pub sources_sha256: String,
}

fn arm_rank(arm: &str) -> (usize, String) {
    let idx = ArmName::ALL.iter().position(|a| a.name() == arm);
    (idx.unwrap_or(ArmName::ALL.len()), arm.to_string())
}

/// Rate key with a total order (CSV-input rows sort first).
fn rate_key(r: Option<f64>) -> (bool, u64) {
    match r {
        None => (false, 0),
        Some(x) => (true, x.to_bits()),
    }
}

struct Group<'a> {
    rate: Option<f64>,
    arm: String,
    rows: Vec<&'a SweepRow>,
}

fn groups(rows: &[SweepRow]) -> Vec<Group<'_>> {
    let mut map: BTreeMap<((bool, u64), (usize, String)), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        map.entry((rate_key(r.missing_rate), arm_rank(&r.arm)))
            .or_default()
            .push(r);
    }
    map.into_values()
        .map(|mut rows| {
            rows.sort_by_key(|r| r.seed);
            Group {
                rate: rows[0].missing_rate,
                arm: rows[0].arm.clone(),
                rows,
            }
        })
        .collect()
}

fn summarize(rows: &[SweepRow], sources: &str) -> Result<Vec<SummaryRow>> {
    let gs = groups(rows);
    let mut out = Vec::with_capacity(gs.len());
    for g in &gs {
        let auc = Stats::of(&g.rows.iter().map(|r| r.auc).collect::<Vec<_>>());
        let uauc = Stats::of(&g.rows.iter().map(|r| r.uauc).collect::<Vec<_>>());
        let ll = Stats::of(&g.rows.iter().map(|r| r.logloss).collect::<Vec<_>>());
        let base = gs
            .iter()
            .find(|b| b.arm == ArmName::Base.name() && rate_key(b.rate) == rate_key(g.rate));
        let (ar, ur) = match base {
            Some(b) => {
                let ba = Stats::of(&b.rows.iter().map(|r| r.auc).collect::<Vec<_>>());
                let bu = Stats::of(&b.rows.iter().map(|r| r.uauc).collect::<Vec<_>>());
                (Some(relaimpr(auc.mean, ba.mean)?), Some(relaimpr(uauc.mean, bu.mean)?))
            }
            None => (None, None),
        };
        let seeds: Vec<String> = g.rows.iter().map(|r| r.seed.to_string()).collect();
        let hashes: Vec<&str> = g.rows.iter().map(|r| r.config_hash.as_str()).collect();
        out.push(SummaryRow {
            missing_rate: g.rate,
            arm: g.arm.clone(),
            n_seeds: auc.n,
            seeds: seeds.join(";"),
            auc_mean: auc.mean,
            auc_median: auc.median,
            auc_std: auc.std,
            auc_min: auc.min,
            auc_max: auc.max,
            auc_relaimpr_pct: ar,
            uauc_mean: uauc.mean,
            uauc_median: uauc.median,
            uauc_std: uauc.std,
            uauc_min: uauc.min,
            uauc_max: uauc.max,
            uauc_relaimpr_pct: ur,
            logloss_mean: ll.mean,
            config_hashes: hashes.join(";"),
            code_version: CODE_VERSION.to_string(),
            sources_sha256: sources.to_string(),
        });
    }
    Ok(out)
}

fn pct(x: Option<f64>) -> String {
    x.map_or("—".into(), |v| format!("{v:+.3}%"))
}

fn rate_label(r: Option<f64>) -> String {
    r.map_or("CSV data".into(), |x| format!("eval missingness ρ = {x}"))
}

fn markdown(rows: &[SweepRow], summary: &[SummaryRow], provenance: &str) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Sweep summary\n\n{provenance}\n");
    let _ = writeln!(
        md,
        "Entries are means over seeds (± sample standard deviation). RelaImpr is the \
         relative improvement of the mean over the `base` arm's mean.\n"
    );
    let gs = groups(rows);
    let mut rates: Vec<Option<f64>> = summary.iter().map(|s| s.missing_rate).collect();
    rates.dedup_by_key(|r| rate_key(*r));
    for rate in rates {
        let _ = writeln!(md, "## {}\n", rate_label(rate));
        let _ = writeln!(md, "| Arm | AUC | RelaImpr | UAUC | RelaImpr | Log-loss | Seeds |");
        let _ = writeln!(md, "|---|---|---|---|---|---|---|");
        let cells: Vec<&SummaryRow> = summary
            .iter()
            .filter(|s| rate_key(s.missing_rate) == rate_key(rate))
            .collect();
        for s in &cells {
            let _ = writeln!(
                md,
                "| {} | {:.5} ± {:.5} | {} | {:.5} ± {:.5} | {} | {:.5} | {} |",
                s.arm,
                s.auc_mean,
                s.auc_std,
                pct(s.auc_relaimpr_pct),
                s.uauc_mean,
                s.uauc_std,
                pct(s.uauc_relaimpr_pct),
                s.logloss_mean,
                s.n_seeds
            );
        }
        for (metric, get) in [
            ("AUC", (|r: &SweepRow| r.auc) as fn(&SweepRow) -> f64),
            ("UAUC", |r: &SweepRow| r.uauc),
        ] {
            let in_rate: Vec<&Group> =
                gs.iter().filter(|g| rate_key(g.rate) == rate_key(rate)).collect();
            let mut seeds: Vec<u64> = in_rate.iter().flat_map(|g| g.rows.iter().map(|r| r.seed)).collect();
            seeds.sort_unstable();
            seeds.dedup();
            let _ = writeln!(md, "\nPer-seed {metric}:\n");
            let head: Vec<&str> = in_rate.iter().map(|g| g.arm.as_str()).collect();
            let _ = writeln!(md, "| Seed | {} |", head.join(" | "));
            let _ = writeln!(md, "|---|{}", "---|".repeat(head.len()));
            for seed in seeds {
                let vals: Vec<String> = in_rate
                    .iter()
                    .map(|g| {
                        g.rows
                            .iter()
                            .find(|r| r.seed == seed)
                            .map_or("—".into(), |r| format!("{:.5}", get(r)))
                    })
                    .collect();
                let _ = writeln!(md, "| {seed} | {} |", vals.join(" | "));
            }
        }
        md.push('\n');
    }
    let _ = writeln!(md, "## Runs\n\n| Rate | Arm | Seed | Serving | Config hash |\n|---|---|---|---|---|");
    for r in rows {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | `{}` |",
            r.missing_rate.map_or("—".into(), |x| x.to_string()),
            r.arm,
            r.seed,
            r.serving_path,
            r.config_hash
        );
    }
    md
}

fn plots(summary: &[SummaryRow], note: &str) -> Vec<(String, String)> {
    let mut rates: Vec<Option<f64>> = summary.iter().map(|s| s.missing_rate).collect();
    rates.dedup_by_key(|r| rate_key(*r));
    let mut arms: Vec<String> = summary.iter().map(|s| s.arm.clone()).collect();
    arms.sort_by_key(|a| arm_rank(a));
    arms.dedup();
    let find = |rate: Option<f64>, arm: &str| {
        summary
            .iter()
            .find(|s| rate_key(s.missing_rate) == rate_key(rate) && s.arm == arm)
    };
    let mut out = Vec::new();
    type Pick = fn(&SummaryRow) -> Stats;
    let metrics: [(&str, &str, Pick); 2] = [
        ("auc", "AUC", |s| Stats {
            n: s.n_seeds,
            mean: s.auc_mean,
            median: s.auc_median,
            std: s.auc_std,
            min: s.auc_min,
            max: s.auc_max,
        }),
        ("uauc", "UAUC", |s| Stats {
            n: s.n_seeds,
            mean: s.uauc_mean,
            median: s.uauc_median,
            std: s.uauc_std,
            min: s.uauc_min,
            max: s.uauc_max,
        }),
    ];
    for (key, label, pick) in metrics {
        let series: Vec<BarSeries> = rates
            .iter()
            .map(|&rate| BarSeries {
                name: rate.map_or("csv".into(), |x| format!("ρ = {x}")),
                points: arms.iter().map(|a| find(rate, a).map(|s| pick(s).point())).collect(),
            })
            .collect();
        out.push((
            format!("{key}_by_arm.svg"),
            bar_chart(&format!("{label} by arm (mean, min–max over seeds)"), "arm", label, &arms, &series, note),
        ));
        let numeric: Vec<f64> = rates.iter().flatten().copied().collect();
        if !numeric.is_empty() {
            let lines: Vec<LineSeries> = arms
                .iter()
                .map(|a| LineSeries {
                    name: a.clone(),
                    points: numeric
                        .iter()
                        .filter_map(|&x| find(Some(x), a).map(|s| (x, pick(s).point())))
                        .collect(),
                })
                .collect();
            out.push((
                format!("{key}_by_missing_rate.svg"),
                line_chart(
                    &format!("{label} vs eval missingness"),
                    "eval missingness rate ρ",
                    label,
                    &lines,
                    note,
                ),
            ));
        }
    }
    out
}

/// Reads sweep CSVs and writes `summary.md`, `summary.csv` and SVG charts
/// into `out`. Returns the written file names.
pub fn report(inputs: &[&Path], out: &Path) -> Result<Vec<String>> {
    if inputs.is_empty() {
        return Err(Error::Config("report needs at least one sweep CSV".into()));
    }
    let mut rows = Vec::new();
    let mut digests = Vec::new();
    for p in inputs {
        rows.extend(read_rows(p)?);
        digests.push(sha256_hex(&fs::read(p)?));
    }
    let sources = digests.join(";");
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let runs_hash = {
        let mut hashes: Vec<&str> = rows.iter().map(|r| r.config_hash.as_str()).collect();
        hashes.sort_unstable();
        sha256_hex(hashes.join(",").as_bytes())
    };
    let provenance = format!(
        "{CODE_VERSION} · seeds {seeds:?} · config hashes digest {runs_hash} · sources sha256 {sources}"
    );
    let summary = summarize(&rows, &sources)?;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    fs::write(out.join("summary.md"), markdown(&rows, &summary, &provenance))?;
    written.push("summary.md".to_string());
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    for s in &summary {
        w.serialize(s)?;
    }
    w.flush()?;
    written.push("summary.csv".to_string());
    for (name, svg) in plots(&summary, &provenance) {
        fs::write(out.join(&name), svg)?;
        written.push(name);
    }
    Ok(written)
}
