mod align;
mod codec;
mod dataset;
mod generate;

use std::io::{Read, Write};
use std::path::Path;

use anyhow::Context;
use remiclip::midi::{parse_smf, quantize};
use remiclip::QuantizedPiece;
use serde::Serialize;

use crate::args::{Cli, Command, DatasetCommand};
use crate::failure::{Classify, Failure};

pub fn run(cli: Cli) -> Result<(), Failure> {
    let global = Global { seed: cli.seed, config: cli.config.as_deref() };
    match cli.command {
        Command::Tokenize(a) => codec::tokenize(&global, a),
        Command::Detokenize(a) => codec::detokenize(&global, a),
        Command::Attrs(a) => codec::attrs(&global, a),
        Command::Metrics(a) => codec::metrics(&global, a),
        Command::Dataset(DatasetCommand::Build(a)) => dataset::build(&global, a),
        Command::Dataset(DatasetCommand::Split(a)) => dataset::split(&global, a),
        Command::TrainAlign(a) => align::train(&global, a),
        Command::GradCheck(a) => align::grad_check(&global, a),
        Command::Generate(a) => generate::generate(&global, a),
    }
}

pub struct Global<'a> {
    pub seed: Option<u64>,
    pub config: Option<&'a Path>,
}

impl Global<'_> {
    /// Subcommands without tunable settings reject a config file rather
    /// than silently ignore it.
    fn no_config(&self) -> Result<(), Failure> {
        match self.config {
            Some(_) => Err(Failure::usage("this subcommand takes no --config")),
            None => Ok(()),
        }
    }
}

/// Reads a file, or standard input for `-`.
fn read_bytes(path: &Path) -> Result<Vec<u8>, Failure> {
    if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf).context("reading standard input").data_err()?;
        return Ok(buf);
    }
    std::fs::read(path).with_context(|| format!("reading {}", path.display())).data_err()
}

fn read_midi(path: &Path) -> Result<QuantizedPiece, Failure> {
    let bytes = read_bytes(path)?;
    let midi = parse_smf(&bytes).with_context(|| format!("parsing {}", path.display())).data_err()?;
    Ok(quantize(&midi))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display())).data_err()
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display())).data_err()
}

/// Writes to stdout; a closed pipe ends output quietly.
fn emit(text: &str) -> Result<(), Failure> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Data(e.into())),
        _ => Ok(()),
    }
}

fn print_json(value: &impl Serialize) -> Result<(), Failure> {
    emit(&format!("{}\n", serde_json::to_string_pretty(value).expect("output serializes")))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "piece".to_string(), |s| s.to_string_lossy().into_owned())
}
