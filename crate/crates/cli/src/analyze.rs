use std::path::Path;

use serde::{Deserialize, Serialize};
use timebin_core::coinc::{
    car, klyshko, Analyzer, AnalyzerSettings, CoincidenceHistogram, Diagnostics, Estimate, RateReport,
};
use timebin_core::io::{TagReader, FORMAT_NAME};
use timebin_core::sim::{ExperimentConfig, SourceMode};

use crate::config::{AnalysisSection, RunFile};
use crate::error::CliError;
use crate::manifest::ManifestBuilder;
use crate::output::{sibling, write_json, write_text, xy_table, Summary, REPORT_VERSION};

/// JSON document written by `analyze` and read back by `fringe`, `tomo`
/// and `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub kind: String,
    pub version: u32,
    pub input: String,
    pub mode: SourceMode,
    pub config: ExperimentConfig,
    pub settings: AnalyzerSettings,
    /// `φs + φi − φp` of the run.
    pub two_photon_phase_rad: f64,
    pub rates: RateReport,
    pub car: Option<Estimate>,
    pub klyshko_signal: Option<Estimate>,
    pub klyshko_idler: Option<Estimate>,
    pub raw_signal_rate: Estimate,
    pub raw_idler_rate: Estimate,
    pub gated_signal_slots: Vec<u64>,
    pub gated_idler_slots: Vec<u64>,
    pub coincidences: CoincidenceHistogram,
    /// `(slot delay, count)` of same-pulse pairs.
    pub delays: Vec<(i64, u64)>,
    pub accidental_rate: Option<Estimate>,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
}

pub const ANALYSIS_KIND: &str = "analysis";

impl AnalysisReport {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let r: Self = crate::output::read_json(path, "analysis report")?;
        if r.kind != ANALYSIS_KIND {
            return Err(CliError::Data(format!("{} is a `{}` document, not an analysis report", path.display(), r.kind)));
        }
        Ok(r)
    }
}

pub struct AnalyzeArgs<'a> {
    pub input: &'a Path,
    pub out: &'a Path,
    pub config: Option<&'a Path>,
    pub mode: Option<SourceMode>,
}

pub fn run(args: AnalyzeArgs<'_>) -> Result<Summary, CliError> {
    let mut manifest = ManifestBuilder::new("analyze");
    let mut reader = TagReader::open(args.input).map_err(|e| CliError::Data(format!("{}: {e}", args.input.display())))?;
    let header = reader.header().clone();

    let (config, mut mode, section) = match args.config {
        Some(p) => {
            let run = RunFile::load(p)?;
            manifest.input(p, "toml");
            (run.experiment, run.mode, run.analysis)
        }
        None => match header.config {
            Some(c) => (c, header.mode, AnalysisSection::default()),
            None => {
                return Err(CliError::Usage(format!(
                    "{} carries no experiment config; pass --config",
                    args.input.display()
                )))
            }
        },
    };
    if args.mode.is_some() {
        mode = args.mode;
    }
    let mode = mode.or(header.mode).unwrap_or(SourceMode::TimeBin);
    let settings = section.settings(&config, mode);

    let mut analyzer = Analyzer::new(settings.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    loop {
        let at = reader.offset();
        let Some(tag) = reader.next() else { break };
        let tag = tag.map_err(|e| CliError::Data(format!("{}: {e}", args.input.display())))?;
        analyzer
            .push(tag)
            .map_err(|e| CliError::Data(format!("{}: record at byte {at}: {e}", args.input.display())))?;
    }
    let a = analyzer.finish().map_err(CliError::data)?;

    let mut warnings = Vec::new();
    let car = car(&a.rates).map_err(|e| warnings.push(format!("CAR: {e}"))).ok();
    let (ks, ki) = match klyshko(&a.rates) {
        Ok((s, i)) => (Some(s), Some(i)),
        Err(e) => {
            warnings.push(format!("Klyshko: {e}"));
            (None, None)
        }
    };
    let report = AnalysisReport {
        kind: ANALYSIS_KIND.into(),
        version: REPORT_VERSION,
        input: args.input.display().to_string(),
        mode,
        two_photon_phase_rad: config.phi_s_rad + config.phi_i_rad - config.phi_p_rad,
        config,
        settings,
        rates: a.rates,
        car,
        klyshko_signal: ks,
        klyshko_idler: ki,
        raw_signal_rate: a.raw_signal_rate,
        raw_idler_rate: a.raw_idler_rate,
        gated_signal_slots: a.gated_signal_slots.clone(),
        gated_idler_slots: a.gated_idler_slots.clone(),
        delays: a.coincidences.delay_histogram(0),
        coincidences: a.coincidences.clone(),
        accidental_rate: a.accidental_rate,
        diagnostics: a.diagnostics.clone(),
        warnings,
    };

    write_json(args.out, &report)?;
    manifest.output(args.out, "analysis-json");

    let bin = a.histograms.bin_width_s;
    let hist = |h: &[u64]| {
        xy_table(h.iter().enumerate().map(|(k, &n)| ((k as f64 + 0.5) * bin, n as f64, (n as f64).sqrt())))
    };
    let delays = xy_table(report.delays.iter().map(|&(d, n)| (d as f64, n as f64, (n as f64).sqrt())));
    let mut joint = String::from("signal_slot,idler_slot,count\n");
    for (r, row) in a.coincidences.same_pulse().iter().enumerate() {
        for (k, n) in row.iter().enumerate() {
            joint.push_str(&format!("{r},{k},{n}\n"));
        }
    }
    for (suffix, text) in [
        ("signal_histogram.csv", hist(&a.histograms.signal)),
        ("idler_histogram.csv", hist(&a.histograms.idler)),
        ("delays.csv", delays),
        ("joint.csv", joint),
    ] {
        let p = sibling(args.out, suffix);
        write_text(&p, &text)?;
        manifest.output(&p, "csv");
    }
    manifest.input(args.input, &format!("{FORMAT_NAME}/{}", header.version));
    manifest.config(&report.config);
    manifest.seed("rng_seed", report.config.rng_seed);
    let manifest_path = manifest.write(args.out)?;

    let mut s = Summary::default();
    s.put("output", args.out.display().to_string())
        .put("manifest", manifest_path.display().to_string())
        .put("duration_s", report.rates.duration_s)
        .put("singles_signal_hz", report.rates.singles_signal.value)
        .put("singles_idler_hz", report.rates.singles_idler.value)
        .put("coincidence_rate_hz", report.rates.coincidence_rate.value)
        .put("coincidence_rate_err_hz", report.rates.coincidence_rate.error);
    if let Some(c) = report.car {
        s.put("car", c.value).put("car_err", c.error);
    }
    if let (Some(a), Some(b)) = (report.klyshko_signal, report.klyshko_idler) {
        s.put("klyshko_signal", a.value)
            .put("klyshko_signal_err", a.error)
            .put("klyshko_idler", b.value)
            .put("klyshko_idler_err", b.error);
    }
    Ok(s)
}
