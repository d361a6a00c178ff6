//! Runs a preset end to end and writes its artifacts.

use std::path::{Path, PathBuf};

use crate::analyze::analyze;
use crate::error::Result;
use crate::instance::Instance;
use crate::output::{
    write_curves, write_gain, write_json, write_layout, write_nodes, write_summary, write_sweep, write_tracking,
};
use crate::presets::{Experiment, Preset};
use crate::runner::{run_scenario, RunOptions};
use crate::sweep::{gain_table, sweep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Scenario file text, with the preset note as a leading comment.
pub fn scenario_text(preset: &Preset) -> Result<String> {
    let body = preset.scenario.to_toml_string()?;
    Ok(match &preset.note {
        Some(note) => format!("# {note}\n\n{body}"),
        None => body,
    })
}

/// Writes `<name>.toml`, the layout and the experiment outputs into `out`.
pub fn run_preset(preset: &Preset, opts: RunOptions, format: Format, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let name = &preset.name;
    let file = |suffix: &str| out.join(format!("{name}{suffix}"));
    let mut written = Vec::new();

    let toml_path = file(".toml");
    std::fs::write(&toml_path, scenario_text(preset)?)?;
    written.push(toml_path);

    let inst = Instance::new(preset.scenario.clone())?;
    let (nodes, edges) = (file("_layout_nodes.csv"), file("_layout_edges.csv"));
    write_layout(&nodes, &edges, &inst)?;
    written.extend([nodes, edges]);

    match &preset.experiment {
        Experiment::Curves | Experiment::Theory | Experiment::Tracking => {
            let res = run_scenario(&inst, opts)?;
            let theory = analyze(&inst)?;
            if format == Format::Json {
                let p = file(".json");
                write_json(&p, &serde_json::json!({ "results": res, "theory": theory }))?;
                written.push(p);
                return Ok(written);
            }
            let summary = file("_summary.csv");
            write_summary(&summary, &res)?;
            written.push(summary);
            if preset.experiment == Experiment::Theory {
                let p = file("_nodes.csv");
                write_nodes(&p, &res, &theory)?;
                written.push(p);
            } else {
                let p = file("_curves.csv");
                write_curves(&p, &res)?;
                written.push(p);
            }
            let p = file("_tracking.csv");
            if write_tracking(&p, &res)? {
                written.push(p);
            }
        }
        Experiment::Gain { reference, baseline, nu, kappa } => {
            let table = gain_table(&preset.scenario, reference, baseline, nu, kappa, opts)?;
            let p = if format == Format::Json { file("_gain.json") } else { file("_gain.csv") };
            if format == Format::Json {
                write_json(&p, &table)?;
            } else {
                write_gain(&p, &table)?;
            }
            written.push(p);
        }
        Experiment::Sweep { axis, values } => {
            let table = sweep(&preset.scenario, *axis, values, opts)?;
            let p = if format == Format::Json { file("_sweep.json") } else { file("_sweep.csv") };
            if format == Format::Json {
                write_json(&p, &table)?;
            } else {
                write_sweep(&p, &table)?;
            }
            written.push(p);
        }
    }
    Ok(written)
}
