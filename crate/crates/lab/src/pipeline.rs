//! Instance evaluation, parallel orchestration and artifact emission.

use std::fs;
use std::path::{Path, PathBuf};

use otbound::campanato::{self, RegularityReport, Status, StepConfig, TheoremConfig};
use otbound::quantities::{self, EnergyReport, LinfStats, TopologicalCheck};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Job};
use crate::families::{layer_split_map, Family};
use crate::plot::{Chart, Series};
use crate::{stage, LabError, Result};

type Point = (f64, f64);

const MONOTONICITY_SAMPLES: usize = 2000;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceReport {
    pub index: usize,
    pub label: String,
    pub family: Family,
    pub per_unit: usize,
    pub radius: f64,
    pub step: StepConfig,
    pub energy: EnergyReport,
    /// Displacement statistics on `B_{R/2}`.
    pub linf: LinfStats,
    pub topological: TopologicalCheck,
    pub lambda_control: Option<f64>,
    pub monotonicity: f64,
    pub marginal_error: f64,
    /// Theorem pipeline; two-dimensional instances only.
    pub regularity: Option<RegularityReport>,
    /// `(x, T(x))` at the grid nodes of one-dimensional instances.
    pub profile: Vec<(f64, f64)>,
}

/// Flat CSV row of an [`InstanceReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub index: usize,
    pub family: String,
    pub parameter: f64,
    pub per_unit: usize,
    pub theta: f64,
    pub tau: f64,
    pub alpha: f64,
    pub e: f64,
    pub d: f64,
    pub m: f64,
    pub delta: f64,
    pub linf_sup: f64,
    pub linf_ratio: f64,
    pub topological: bool,
    pub violations: usize,
    pub lambda_control: Option<f64>,
    pub monotonicity: f64,
    pub marginal_error: f64,
    pub status: String,
    pub epsilon_prime: Option<f64>,
    pub levels: Option<usize>,
    pub c_prime: Option<f64>,
    pub c_beta: Option<f64>,
    pub max_frame: Option<f64>,
    pub holder: Option<f64>,
    pub linear_constant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub quantity: String,
    pub against: String,
    pub per_unit: usize,
    pub points: usize,
    pub slope: f64,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub reports: Vec<InstanceReport>,
    pub rows: Vec<AggregateRow>,
    pub fits: Vec<FitRow>,
    pub files: Vec<PathBuf>,
}

/// Least-squares slope of `log y` against `log x` over positive pairs.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn status_name(report: &Option<RegularityReport>) -> String {
    match report.as_ref().map(|r| &r.status) {
        None => "n/a".into(),
        Some(Status::Pass) => "pass".into(),
        Some(Status::Fail) => "fail".into(),
        Some(Status::PreconditionFailed(why)) => format!("precondition: {why}"),
    }
}

pub fn evaluate(job: &Job) -> Result<InstanceReport> {
    let inst = job.family.build(job.per_unit)?;
    let p = &inst.problem;
    let d = inst.dim();
    let r = inst.radius;
    let energy = quantities::energy_report(&p.plan, &p.dom0, &p.dom1, r).map_err(stage("quantities"))?;
    let linf = quantities::linf_statistics(&p.plan, energy.e, energy.d, 0.5 * r).map_err(stage("quantities"))?;
    let topological = quantities::check_topological(&p.plan, &vec![0.0; d], r);
    let lambda_control = quantities::control_lambda(&energy).ok();
    let (m0, m1) = p.plan.marginal_errors();
    let regularity = if d == 2 {
        let cfg = TheoremConfig { radius: r, depth: job.depth, step: job.step.clone(), ..TheoremConfig::default() };
        Some(campanato::verify_theorem(p, &cfg).map_err(stage("campanato"))?)
    } else {
        None
    };
    let profile = if d == 1 {
        let map = &p.map;
        (0..map.grid.len())
            .filter(|&k| map.valid[k])
            .map(|k| {
                let x = map.grid.center(k)[0];
                (x, x + map.displacement(k)[0])
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(InstanceReport {
        index: job.index,
        label: format!("{:03}-{}-n{}", job.index, job.family.name(), job.per_unit),
        family: job.family.clone(),
        per_unit: job.per_unit,
        radius: r,
        step: job.step.clone(),
        energy,
        linf,
        topological,
        lambda_control,
        monotonicity: p.plan.monotonicity_min(MONOTONICITY_SAMPLES, job.seed),
        marginal_error: m0.max(m1),
        regularity,
        profile,
    })
}

impl InstanceReport {
    pub fn row(&self) -> AggregateRow {
        let reg = self.regularity.as_ref();
        let evaluated = reg.filter(|r| !matches!(r.status, Status::PreconditionFailed(_)));
        AggregateRow {
            index: self.index,
            family: self.family.name().into(),
            parameter: self.family.parameter(),
            per_unit: self.per_unit,
            theta: self.step.theta,
            tau: self.step.tau,
            alpha: self.step.alpha,
            e: self.energy.e,
            d: self.energy.d,
            m: self.energy.m,
            delta: self.energy.delta,
            linf_sup: self.linf.sup,
            linf_ratio: self.linf.ratio,
            topological: self.topological.holds,
            violations: self.topological.violations,
            lambda_control: self.lambda_control,
            monotonicity: self.monotonicity,
            marginal_error: self.marginal_error,
            status: status_name(&self.regularity),
            epsilon_prime: reg.map(|r| r.epsilon_prime),
            levels: evaluated.map(|r| r.ladder.levels.len()),
            c_prime: evaluated.map(|r| r.ladder.fitted_c_prime()),
            c_beta: evaluated.map(|r| r.ladder.fitted_c_beta()),
            max_frame: evaluated.map(|r| r.ladder.max_frame()),
            holder: reg.and_then(|r| r.holder),
            linear_constant: reg.and_then(|r| r.linear_constant),
        }
    }
}

/// Fitted log-log slopes per resolution over the family parameter and `ε'`.
pub fn fits(rows: &[AggregateRow]) -> Vec<FitRow> {
    let mut resolutions: Vec<usize> = rows.iter().map(|r| r.per_unit).collect();
    resolutions.sort_unstable();
    resolutions.dedup();
    let mut out = Vec::new();
    for n in resolutions {
        let at: Vec<&AggregateRow> = rows.iter().filter(|r| r.per_unit == n).collect();
        let series: [(&str, &str, Vec<Point>); 4] = [
            ("e", "parameter", at.iter().map(|r| (r.parameter, r.e)).collect()),
            ("linf_ratio", "parameter", at.iter().map(|r| (r.parameter, r.linf_ratio)).collect()),
            ("linf_sup", "parameter", at.iter().map(|r| (r.parameter, r.linf_sup)).collect()),
            (
                "holder",
                "epsilon_prime",
                at.iter().filter_map(|r| Some((r.epsilon_prime?, r.holder?))).collect(),
            ),
        ];
        for (quantity, against, pts) in series {
            if let Some(slope) = loglog_slope(&pts) {
                out.push(FitRow { quantity: quantity.into(), against: against.into(), per_unit: n, points: pts.len(), slope });
            }
        }
    }
    out
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Chart of `y_column` against `parameter`, one series per resolution.
pub fn parameter_chart(rows: &[AggregateRow], y: &str, value: impl Fn(&AggregateRow) -> Option<f64>) -> Chart {
    let mut resolutions: Vec<usize> = rows.iter().map(|r| r.per_unit).collect();
    resolutions.sort_unstable();
    resolutions.dedup();
    let family = rows.first().map_or("", |r| r.family.as_str());
    let mut chart = Chart::new(format!("{family}: {y} vs parameter"), "parameter", y);
    for n in resolutions {
        let pts = rows.iter().filter(|r| r.per_unit == n).filter_map(|r| Some((r.parameter, value(r)?))).collect();
        chart = chart.with(Series::line(format!("n = {n}"), pts));
    }
    chart
}

fn ladder_chart(reports: &[InstanceReport]) -> Option<Chart> {
    let mut chart = Chart::new("ladder decay", "level k", "E_k").log_y();
    for rep in reports {
        let Some(reg) = &rep.regularity else { continue };
        let pts: Vec<(f64, f64)> = reg.ladder.levels.iter().map(|l| (l.k as f64, l.e)).collect();
        if pts.len() > 1 {
            chart = chart.with(Series::line(rep.label.clone(), pts));
        }
    }
    (!chart.series.is_empty()).then_some(chart)
}

fn profile_chart(rep: &InstanceReport) -> Option<Chart> {
    if rep.profile.is_empty() {
        return None;
    }
    let mut chart = Chart::new(format!("{}: map profile", rep.family), "x", "T(x)")
        .with(Series::scatter("computed", rep.profile.clone()));
    if let Family::LayerSplit { eps } = rep.family {
        let exact = rep.profile.iter().map(|&(x, _)| (x, layer_split_map(eps, x))).collect();
        chart = chart.with(Series::line("piecewise closed form", exact));
    }
    Some(chart)
}

/// Evaluates all jobs (in parallel, merged in job order) and writes the
/// per-instance JSON, `aggregate.csv`, `fits.csv` and SVG plots.
pub fn run(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunSummary> {
    cfg.validate()?;
    let jobs = cfg.jobs()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<InstanceReport>> = pool.install(|| jobs.par_iter().map(evaluate).collect());
    let reports = results.into_iter().collect::<Result<Vec<_>>>()?;
    let rows: Vec<AggregateRow> = reports.iter().map(InstanceReport::row).collect();
    let fits = fits(&rows);

    let out = &cfg.output;
    let inst_dir = out.join("instances");
    let plot_dir = out.join("plots");
    fs::create_dir_all(&inst_dir)?;
    fs::create_dir_all(&plot_dir)?;
    let mut files = Vec::new();
    for rep in &reports {
        let path = inst_dir.join(format!("{}.json", rep.label));
        fs::write(&path, serde_json::to_string_pretty(rep)?)?;
        files.push(path);
    }
    let agg = out.join("aggregate.csv");
    write_csv(&agg, &rows)?;
    files.push(agg);
    let fit_path = out.join("fits.csv");
    write_csv(&fit_path, &fits)?;
    files.push(fit_path);

    let mut charts = vec![("ratio.svg".to_string(), parameter_chart(&rows, "linf_ratio", |r| Some(r.linf_ratio)))];
    if let Some(c) = ladder_chart(&reports) {
        charts.push(("ladder.svg".into(), c));
    }
    for rep in &reports {
        if let Some(c) = profile_chart(rep) {
            charts.push((format!("profile-{}.svg", rep.label), c));
        }
    }
    for (name, chart) in charts {
        let path = plot_dir.join(name);
        fs::write(&path, chart.to_svg())?;
        files.push(path);
    }
    Ok(RunSummary { reports, rows, fits, files })
}

/// Reads an aggregate CSV and writes `<stem>-<column>.svg` next to it.
pub fn plot_csv(path: &Path, column: &str) -> Result<PathBuf> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<std::result::Result<Vec<AggregateRow>, _>>()?;
    let probe = serde_json::to_value(rows.first().ok_or_else(|| LabError::Config("empty csv".into()))?)?;
    if probe.get(column).is_none() {
        return Err(LabError::Config(format!("unknown column '{column}'")));
    }
    let chart = parameter_chart(&rows, column, |r| serde_json::to_value(r).ok()?.get(column)?.as_f64());
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("aggregate");
    let out = path.with_file_name(format!("{stem}-{column}.svg"));
    fs::write(&out, chart.to_svg())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law_is_exact() {
        let pts: Vec<(f64, f64)> = [0.5, 1.0, 2.0, 4.0].iter().map(|&x| (x, 3.0 * x * x * x)).collect();
        assert!((loglog_slope(&pts).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&[(1.0, 1.0)]), None);
    }

    #[test]
    fn identity_run_is_reproducible() {
        let dir = std::env::temp_dir().join(format!("otbound-lab-{}", std::process::id()));
        let cfg = ExperimentConfig {
            schema_version: 1,
            family: "identity".into(),
            grid: Default::default(),
            resolutions: vec![16],
            seed: 3,
            output: dir.clone(),
            depth: 1,
        };
        let first = run(&cfg, Some(2)).unwrap();
        let csv1 = fs::read(dir.join("aggregate.csv")).unwrap();
        run(&cfg, Some(1)).unwrap();
        let csv2 = fs::read(dir.join("aggregate.csv")).unwrap();
        assert_eq!(csv1, csv2);
        assert_eq!(first.rows[0].e, 0.0);
        assert!(first.rows[0].topological);
        fs::remove_dir_all(dir).unwrap();
    }
}
