use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use timebin_core::coinc::{
    max_visibility_from_car, power_series_fit, Estimate, PowerPoint, PowerSeriesFit, PowerSeriesOptions, Weighting,
};
use timebin_core::sim::SourceMode;

use crate::analyze::{AnalysisReport, ANALYSIS_KIND};
use crate::error::CliError;
use crate::fringe::{FringeReport, FRINGE_KIND};
use crate::manifest::ManifestBuilder;
use crate::output::{read_json, sibling, write_json, write_text, Summary, REPORT_VERSION};
use crate::tomo::{TomographyReport, TOMOGRAPHY_KIND};

#[derive(Debug, Serialize)]
pub struct RunLine {
    pub input: String,
    pub mode: SourceMode,
    pub pump_power_w: f64,
    pub duration_s: f64,
    pub singles_signal: Estimate,
    pub singles_idler: Estimate,
    pub coincidence_rate: Estimate,
    pub car: Option<Estimate>,
    pub max_visibility: Option<f64>,
    pub klyshko_signal: Option<Estimate>,
    pub klyshko_idler: Option<Estimate>,
}

#[derive(Debug, Serialize)]
pub struct FringeLine {
    pub input: String,
    pub visibility: Estimate,
    pub phase_offset_rad: Estimate,
}

#[derive(Debug, Serialize)]
pub struct TomographyLine {
    pub input: String,
    pub converged: bool,
    pub concurrence: Estimate,
    pub fidelity: Estimate,
    pub chsh_lower: Estimate,
    pub chsh_upper: Estimate,
}

#[derive(Debug, Serialize)]
pub struct SummaryReport {
    pub kind: &'static str,
    pub version: u32,
    pub runs: Vec<RunLine>,
    /// Present when the single-bin runs cover at least three pump powers.
    pub power_series: Option<PowerSeriesFit>,
    pub fringes: Vec<FringeLine>,
    pub tomography: Vec<TomographyLine>,
    pub warnings: Vec<String>,
}

pub struct ReportArgs<'a> {
    pub inputs: &'a [PathBuf],
    pub out: &'a Path,
    pub klyshko_min_power_w: Option<f64>,
    pub weighting: Weighting,
}

fn kind_of(path: &Path) -> Result<String, CliError> {
    let v: serde_json::Value = read_json(path, "JSON document")?;
    v.get("kind")
        .and_then(|k| k.as_str())
        .map(str::to_owned)
        .ok_or_else(|| CliError::Data(format!("{} has no `kind` field", path.display())))
}

/// Monte-Carlo spread when available, otherwise an exact value.
fn metric(m: &timebin_core::tomo::Metric) -> Estimate {
    Estimate::new(m.value, m.mc_std.unwrap_or(0.0))
}

pub fn run(args: ReportArgs<'_>) -> Result<Summary, CliError> {
    if args.inputs.is_empty() {
        return Err(CliError::Usage("report needs at least one input document".into()));
    }
    let mut manifest = ManifestBuilder::new("report");
    let mut runs = Vec::new();
    let mut powers = Vec::new();
    let mut fringes = Vec::new();
    let mut tomography = Vec::new();
    let mut warnings = Vec::new();
    for p in args.inputs {
        let input = p.display().to_string();
        let kind = kind_of(p)?;
        match kind.as_str() {
            ANALYSIS_KIND => {
                let r = AnalysisReport::load(p)?;
                if r.mode == SourceMode::SingleBin && r.config.pump_power_w > 0.0 {
                    powers.push(PowerPoint {
                        pump_power_w: r.config.pump_power_w,
                        rates: r.rates,
                    });
                }
                runs.push(RunLine {
                    input,
                    mode: r.mode,
                    pump_power_w: r.config.pump_power_w,
                    duration_s: r.rates.duration_s,
                    singles_signal: r.rates.singles_signal,
                    singles_idler: r.rates.singles_idler,
                    coincidence_rate: r.rates.coincidence_rate,
                    max_visibility: r.car.and_then(|c| max_visibility_from_car(c.value).ok()),
                    car: r.car,
                    klyshko_signal: r.klyshko_signal,
                    klyshko_idler: r.klyshko_idler,
                });
            }
            FRINGE_KIND => {
                let r: FringeReport = read_json(p, "fringe report")?;
                fringes.push(FringeLine {
                    input,
                    visibility: r.fit.visibility,
                    phase_offset_rad: r.fit.phase_offset,
                });
            }
            TOMOGRAPHY_KIND => {
                let r: TomographyReport = read_json(p, "tomography report")?;
                let t = &r.result;
                tomography.push(TomographyLine {
                    input,
                    converged: t.converged(),
                    concurrence: metric(&t.concurrence),
                    fidelity: metric(&t.fidelity),
                    chsh_lower: metric(&t.chsh_lower),
                    chsh_upper: metric(&t.chsh_upper),
                });
            }
            other => return Err(CliError::Data(format!("{}: unknown document kind `{other}`", p.display()))),
        }
        manifest.input(p, &format!("{kind}-json"));
    }

    let mut options = PowerSeriesOptions {
        weighting: args.weighting,
        ..Default::default()
    };
    if let Some(p) = args.klyshko_min_power_w {
        options.klyshko_min_power_w = p;
    }
    let power_series = if powers.is_empty() {
        None
    } else {
        power_series_fit(&powers, &options)
            .map_err(|e| warnings.push(format!("power series: {e}")))
            .ok()
    };

    let report = SummaryReport {
        kind: "summary",
        version: REPORT_VERSION,
        runs,
        power_series,
        fringes,
        tomography,
        warnings,
    };
    write_json(args.out, &report)?;
    manifest.output(args.out, "summary-json");
    let table_path = sibling(args.out, "csv");
    let table = summary_table(&report);
    write_text(&table_path, &table)?;
    manifest.output(&table_path, "csv");
    let manifest_path = manifest.write(args.out)?;

    let mut s = Summary::default();
    s.put("output", args.out.display().to_string())
        .put("manifest", manifest_path.display().to_string())
        .put("runs", report.runs.len())
        .put("fringes", report.fringes.len())
        .put("tomography", report.tomography.len());
    if let Some(ps) = &report.power_series {
        s.put("brightness_per_mw", ps.brightness_per_mw().value)
            .put("klyshko_signal_intercept", ps.klyshko_signal.intercept.value)
            .put("klyshko_idler_intercept", ps.klyshko_idler.intercept.value)
            .put("car_loglog_slope", ps.car_loglog.slope.value);
    }
    Ok(s)
}

/// `quantity,source,value,error` rows of every figure of merit.
fn summary_table(r: &SummaryReport) -> String {
    let mut s = String::from("quantity,source,value,error\n");
    let mut row = |q: &str, src: &str, e: Estimate| writeln!(s, "{q},{src},{},{}", e.value, e.error).unwrap();
    for run in &r.runs {
        row("singles_signal_hz", &run.input, run.singles_signal);
        row("singles_idler_hz", &run.input, run.singles_idler);
        row("coincidence_rate_hz", &run.input, run.coincidence_rate);
        if let Some(c) = run.car {
            row("car", &run.input, c);
        }
        if let Some(k) = run.klyshko_signal {
            row("klyshko_signal", &run.input, k);
        }
        if let Some(k) = run.klyshko_idler {
            row("klyshko_idler", &run.input, k);
        }
    }
    if let Some(ps) = &r.power_series {
        row("brightness_hz_per_w", "power_series", ps.brightness.slope);
        row("klyshko_signal_intercept", "power_series", ps.klyshko_signal.intercept);
        row("klyshko_idler_intercept", "power_series", ps.klyshko_idler.intercept);
        row("car_loglog_slope", "power_series", ps.car_loglog.slope);
    }
    for f in &r.fringes {
        row("visibility", &f.input, f.visibility);
        row("phase_offset_rad", &f.input, f.phase_offset_rad);
    }
    for t in &r.tomography {
        row("concurrence", &t.input, t.concurrence);
        row("fidelity", &t.input, t.fidelity);
        row("chsh_lower", &t.input, t.chsh_lower);
        row("chsh_upper", &t.input, t.chsh_upper);
    }
    s
}
