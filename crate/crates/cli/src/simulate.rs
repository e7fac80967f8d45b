use std::path::Path;

use timebin_core::io::{TagFileHeader, TagFormat, TagWriter, FORMAT_NAME, FORMAT_VERSION};
use timebin_core::sim::{Channel, SourceMode, Simulator};

use crate::config::RunFile;
use crate::error::{write_error, CliError};
use crate::manifest::ManifestBuilder;
use crate::output::Summary;

pub struct SimulateArgs<'a> {
    pub config: &'a Path,
    pub out: &'a Path,
    pub seed: Option<u64>,
    pub mode: Option<SourceMode>,
    pub encoding: TagFormat,
    pub duration_s: Option<f64>,
}

pub fn run(args: SimulateArgs<'_>) -> Result<Summary, CliError> {
    let mut manifest = ManifestBuilder::new("simulate");
    let mut run = RunFile::load(args.config)?;
    if let Some(seed) = args.seed {
        run.experiment.rng_seed = seed;
    }
    if let Some(d) = args.duration_s {
        run.experiment.duration_s = d;
    }
    let mode = args.mode.or(run.mode).unwrap_or(SourceMode::TimeBin);
    run.mode = Some(mode);
    let sim = Simulator::new(run.experiment.clone(), mode).map_err(|e| CliError::Usage(e.to_string()))?;

    let header = TagFileHeader::new(args.encoding, Some(mode), Some(run.experiment.clone()));
    let mut writer = TagWriter::create(args.out, &header).map_err(|e| write_error(args.out, e))?;
    let mut per_channel = [0u64; 3];
    for tag in sim.stream() {
        per_channel[tag.channel.code() as usize] += 1;
        writer.write(tag).map_err(|e| write_error(args.out, e))?;
    }
    let written = writer.finish().map_err(|e| write_error(args.out, e))?;

    manifest.input(args.config, "toml");
    manifest.config(&run);
    manifest.seed("rng_seed", run.experiment.rng_seed);
    let encoding = match args.encoding {
        TagFormat::Binary => "binary",
        TagFormat::Csv => "csv",
    };
    manifest.output(args.out, &format!("{FORMAT_NAME}/{FORMAT_VERSION}/{encoding}"));
    let manifest_path = manifest.write(args.out)?;

    let mut s = Summary::default();
    s.put("output", args.out.display().to_string())
        .put("manifest", manifest_path.display().to_string())
        .put("tags", written)
        .put("pulses", sim.n_pulses())
        .put("triggers", per_channel[Channel::Trigger.code() as usize])
        .put("signal", per_channel[Channel::Signal.code() as usize])
        .put("idler", per_channel[Channel::Idler.code() as usize])
        .put("rng_seed", run.experiment.rng_seed);
    Ok(s)
}
