use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use timebin_core::quantum::Basis;
use timebin_core::tomo::{
    bootstrap_errors, counts_from_phase_settings, label_phases, mle_reconstruct, BootstrapOptions, MeasurementRecord,
    MleOptions, Normalization, PhaseSettingCounts, TomographyResult,
};

use crate::analyze::AnalysisReport;
use crate::config::RunFile;
use crate::error::CliError;
use crate::manifest::ManifestBuilder;
use crate::output::{read_json, sibling, write_json, write_text, Summary, REPORT_VERSION};

pub const TOMOGRAPHY_KIND: &str = "tomography";
const DEFAULT_REPLICAS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyReport {
    pub kind: String,
    pub version: u32,
    pub inputs: Vec<String>,
    pub normalization: Normalization,
    pub options: BootstrapOptions,
    pub record: MeasurementRecord,
    pub result: TomographyResult,
}

pub struct TomoArgs<'a> {
    pub reports: &'a [PathBuf],
    pub record: Option<&'a Path>,
    pub out: &'a Path,
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub max_iterations: Option<usize>,
    pub normalization: Option<Normalization>,
}

/// Rows and columns follow the product basis `|Z0 Z0⟩, |Z0 Z1⟩, |Z1 Z0⟩,
/// |Z1 Z1⟩`, early bin first.
pub fn density_csv(result: &TomographyResult) -> String {
    let labels: Vec<String> = [Basis::Z0, Basis::Z1]
        .iter()
        .flat_map(|a| [Basis::Z0, Basis::Z1].map(|b| format!("{}{}", a.label(), b.label())))
        .collect();
    let m = result.rho.matrix();
    let mut s = String::from("row,col,re,im\n");
    for r in 0..4 {
        for c in 0..4 {
            writeln!(s, "{},{},{},{}", labels[r], labels[c], m[(r, c)].re, m[(r, c)].im).unwrap();
        }
    }
    s
}

pub fn run(args: TomoArgs<'_>) -> Result<Summary, CliError> {
    let mut manifest = ManifestBuilder::new("tomo");
    let section = match args.config {
        Some(p) => {
            manifest.input(p, "toml");
            RunFile::load(p)?.tomography
        }
        None => Default::default(),
    };
    let normalization = args.normalization.or(section.normalization).unwrap_or_default();
    let mut mle = MleOptions::default();
    if let Some(n) = args.max_iterations.or(section.max_iterations) {
        mle.max_iterations = n;
    }
    let options = BootstrapOptions {
        n_replicas: args.replicas.or(section.replicas).unwrap_or(DEFAULT_REPLICAS),
        seed: args.seed.unwrap_or(0),
        mle,
    };

    let mut inputs = Vec::new();
    let record = match (args.record, args.reports.is_empty()) {
        (Some(_), false) => {
            return Err(CliError::Usage("give either analysis reports or --record, not both".into()));
        }
        (None, true) => return Err(CliError::Usage("tomo needs four analysis reports or --record".into())),
        (Some(p), true) => {
            manifest.input(p, "record-json");
            inputs.push(p.display().to_string());
            read_json::<MeasurementRecord>(p, "measurement record")?
        }
        (None, false) => {
            let mut settings = Vec::new();
            for p in args.reports {
                let r = AnalysisReport::load(p)?;
                let (ts, ti) = label_phases(r.config.phi_s_rad, r.config.phi_i_rad);
                settings.push(PhaseSettingCounts {
                    signal_phase_rad: ts,
                    idler_phase_rad: ti,
                    joint: r.coincidences.same_pulse().clone(),
                    integration_time_s: r.rates.duration_s,
                });
                manifest.input(p, "analysis-json");
                inputs.push(p.display().to_string());
            }
            counts_from_phase_settings(&settings, normalization).map_err(CliError::data)?
        }
    };

    let mut result = mle_reconstruct(&record, &options.mle).map_err(CliError::data)?;
    let converged = result.converged();
    if converged && options.n_replicas > 0 {
        let summary = bootstrap_errors(&record, &options).map_err(CliError::data)?;
        result = result.with_bootstrap(summary);
    }

    let report = TomographyReport {
        kind: TOMOGRAPHY_KIND.into(),
        version: REPORT_VERSION,
        inputs,
        normalization,
        options,
        record,
        result,
    };
    write_json(args.out, &report)?;
    manifest.output(args.out, "tomography-json");
    let rho = sibling(args.out, "rho.csv");
    write_text(&rho, &density_csv(&report.result))?;
    manifest.output(&rho, "csv");
    manifest.seed("bootstrap", options.seed);
    manifest.config(&report.options);
    let manifest_path = manifest.write(args.out)?;

    let r = &report.result;
    if !converged {
        return Err(CliError::NotConverged(format!(
            "optimizer stopped after {} iterations without converging (stationarity {:e}); result written to {}",
            r.diagnostics.iterations,
            r.diagnostics.stationarity,
            args.out.display()
        )));
    }
    let mut s = Summary::default();
    s.put("output", args.out.display().to_string())
        .put("manifest", manifest_path.display().to_string())
        .put("concurrence", r.concurrence.value)
        .put("fidelity", r.fidelity.value)
        .put("chsh_lower", r.chsh_lower.value)
        .put("chsh_upper", r.chsh_upper.value)
        .put("iterations", r.diagnostics.iterations);
    if let Some(b) = &r.bootstrap {
        s.put("concurrence_err", b.concurrence.std)
            .put("fidelity_err", b.fidelity.std)
            .put("chsh_lower_err", b.chsh_lower.std)
            .put("chsh_upper_err", b.chsh_upper.std)
            .put("replicas_used", b.used)
            .put("bootstrap_flagged", b.flagged());
    }
    Ok(s)
}
