use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use timebin_core::coinc::{fit_fringe, FringeFit, FringePoint, FringeScan, Weighting};

use crate::analyze::AnalysisReport;
use crate::error::CliError;
use crate::manifest::ManifestBuilder;
use crate::output::{sibling, write_json, write_text, xy_table, Summary, REPORT_VERSION};

pub const FRINGE_KIND: &str = "fringe";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeReport {
    pub kind: String,
    pub version: u32,
    pub inputs: Vec<String>,
    pub points: Vec<FringePoint>,
    pub fit: FringeFit,
}

pub struct FringeArgs<'a> {
    pub reports: &'a [PathBuf],
    pub points: Option<&'a Path>,
    pub out: &'a Path,
    pub weighting: Weighting,
}

/// Reads `phase_rad,counts,integration_s` rows; a header line is optional.
pub fn read_points(path: &Path) -> Result<Vec<FringePoint>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (k == 0 && line.starts_with("phase")) {
            continue;
        }
        let bad = |what: &str| CliError::Data(format!("{} line {}: {what} in `{line}`", path.display(), k + 1));
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(bad("expected phase_rad,counts,integration_s"));
        }
        points.push(FringePoint {
            phase_rad: cols[0].parse().map_err(|_| bad("bad phase"))?,
            counts: cols[1].parse().map_err(|_| bad("bad count"))?,
            integration_s: cols[2].parse().map_err(|_| bad("bad integration time"))?,
        });
    }
    Ok(points)
}

pub fn run(args: FringeArgs<'_>) -> Result<Summary, CliError> {
    let mut manifest = ManifestBuilder::new("fringe");
    let mut points = Vec::new();
    let mut inputs = Vec::new();
    for p in args.reports {
        let r = AnalysisReport::load(p)?;
        points.push(FringePoint {
            phase_rad: r.two_photon_phase_rad,
            counts: r.coincidences.central(),
            integration_s: r.rates.duration_s,
        });
        inputs.push(p.display().to_string());
        manifest.input(p, "analysis-json");
    }
    if let Some(p) = args.points {
        points.extend(read_points(p)?);
        inputs.push(p.display().to_string());
        manifest.input(p, "csv");
    }
    let scan = FringeScan::new(points).map_err(|e| CliError::Data(format!("fringe scan: {e}")))?;
    let fit = fit_fringe(&scan, args.weighting).map_err(|e| CliError::Data(format!("fringe fit: {e}")))?;

    let report = FringeReport {
        kind: FRINGE_KIND.into(),
        version: REPORT_VERSION,
        inputs,
        points: scan.points.clone(),
        fit,
    };
    write_json(args.out, &report)?;
    manifest.output(args.out, "fringe-json");
    let table = sibling(args.out, "csv");
    write_text(
        &table,
        &xy_table(scan.points.iter().map(|p| (p.phase_rad, p.counts as f64, (p.counts as f64).sqrt()))),
    )?;
    manifest.output(&table, "csv");
    let manifest_path = manifest.write(args.out)?;

    let mut s = Summary::default();
    s.put("output", args.out.display().to_string())
        .put("manifest", manifest_path.display().to_string())
        .put("points", scan.points.len())
        .put("visibility", fit.visibility.value)
        .put("visibility_err", fit.visibility.error)
        .put("phase_offset_rad", fit.phase_offset.value)
        .put("phase_offset_err_rad", fit.phase_offset.error)
        .put("amplitude", fit.amplitude.value)
        .put("amplitude_err", fit.amplitude.error);
    Ok(s)
}
