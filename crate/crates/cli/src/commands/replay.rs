// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use anyhow::{Context, Result};
use clap::Parser;

use crate::args::{Cli, ReplayArgs};
use crate::run::{read_input, sha256_hex, violation, Manifest, MissingInput, Usage};

pub fn run(args: &ReplayArgs) -> Result<()> {
    let bytes = read_input(&args.manifest)?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", args.manifest.display()))?;
    for input in &manifest.inputs {
        let data = std::fs::read(Path::new(&input.path)).map_err(|_| MissingInput(input.path.clone().into()))?;
        let digest = sha256_hex(&data);
        if digest != input.sha256 {
            return Err(violation(
                "replay-input-checksum",
                format!("{} has sha256 {digest}, manifest records {}", input.path, input.sha256),
            ));
        }
    }
    let mut argv = manifest.argv.clone();
    if let Some(out) = &args.out {
        let out = out.display().to_string();
        match argv.iter().position(|a| a == "--out") {
            Some(i) if i + 1 < argv.len() => argv[i + 1] = out,
            _ => match argv.iter().position(|a| a.starts_with("--out=")) {
                Some(i) => argv[i] = format!("--out={out}"),
                None => return Err(Usage("recorded command has no --out".into()).into()),
            },
        }
    }
    let cli = Cli::try_parse_from(std::iter::once("ivtrace".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| Usage(format!("recorded arguments no longer parse: {e}")))?;
    if matches!(cli.command, crate::args::Command::Replay(_)) {
        return Err(Usage("a manifest cannot record a replay".into()).into());
    }
    super::dispatch(&cli.command, argv)
}
