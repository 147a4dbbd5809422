use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::Args;
use jeanie_core::geometry::generate_view_grid;
use jeanie_core::skeleton::{load_sequences, to_json_line, ViewMeta};

use crate::common::{write_file, Context};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Sequence file (single document or JSON lines).
    pub input: PathBuf,
}

/// Writes `view_<k>_<k'>.jsonl` into the `--output` directory, one line per
/// input sequence.
pub fn run(ctx: &Context, args: SimulateArgs) -> Result<ExitCode> {
    let out_dir = ctx
        .output
        .clone()
        .context("simulate-views needs --output DIR")?;
    let corpus =
        load_sequences(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let grid = ctx.config.grid();
    let cam = ctx.camera()?;
    let mut cells = vec![vec![String::new(); grid.k_prime()]; grid.k()];
    for seq in &corpus {
        let views = generate_view_grid(&grid, seq, cam.as_ref())?;
        for (k, row) in views.iter().enumerate() {
            for (kp, view) in row.iter().enumerate() {
                let shift = grid.shift(k, kp);
                let meta = ViewMeta {
                    azimuth: shift.azimuth,
                    altitude: shift.altitude,
                    mode: grid.mode.as_str().to_string(),
                };
                cells[k][kp].push_str(&to_json_line(view, Some(meta)));
                cells[k][kp].push('\n');
            }
        }
    }
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for (k, row) in cells.iter().enumerate() {
        for (kp, text) in row.iter().enumerate() {
            write_file(&out_dir.join(format!("view_{k}_{kp}.jsonl")), text)?;
        }
    }
    log::info!(
        "wrote {} views of {} sequences",
        grid.k() * grid.k_prime(),
        corpus.len()
    );
    Ok(ExitCode::SUCCESS)
}
