use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gmrflms::analysis::to_db;
use gmrflms_exp::output::{write_curves, write_json, write_nodes, write_summary, write_sweep, write_tracking};
use gmrflms_exp::{
    analyze, preset, run_preset, run_scenario, sweep, ExpError, Format, Instance, Result, RunOptions, Scenario,
    SweepAxis,
};

#[derive(Parser)]
#[command(name = "gmrflms", version, about = "Diffusion LMS over Gaussian Markov random fields: experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the number of Monte Carlo runs.
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Override the number of iterations per run.
    #[arg(long, global = true)]
    iters: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file.
    Simulate { scenario: PathBuf },
    /// Evaluate stability and steady-state theory for a scenario file.
    Analyze { scenario: PathBuf },
    /// Run a built-in experiment.
    Preset {
        name: String,
        /// Reduced-scale variant.
        #[arg(long)]
        desk: bool,
        /// Only write the scenario file.
        #[arg(long)]
        no_run: bool,
    },
    /// Steady-state MSD over a range of one parameter.
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
}

impl Common {
    fn apply(&self, sc: &mut Scenario) -> Result<()> {
        if let Some(s) = self.seed {
            sc.master_seed = s;
        }
        if let Some(r) = self.runs {
            sc.n_runs = r;
        }
        if let Some(i) = self.iters {
            sc.n_iters = i;
        }
        sc.validate()
    }

    fn opts(&self) -> RunOptions {
        RunOptions { jobs: self.jobs }
    }

    fn format(&self) -> Format {
        match self.format {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }

    fn path(&self, sc: &Scenario, suffix: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)?;
        Ok(self.out.join(format!("{}{suffix}", sc.name)))
    }
}

fn load(path: &Path, common: &Common) -> Result<Scenario> {
    let mut sc = Scenario::load(path)?;
    common.apply(&mut sc)?;
    Ok(sc)
}

fn simulate(path: &Path, common: &Common) -> Result<Vec<PathBuf>> {
    let sc = load(path, common)?;
    let inst = Instance::new(sc.clone())?;
    let res = run_scenario(&inst, common.opts())?;
    let theory = analyze(&inst)?;
    for a in &res.algorithms {
        println!("{:<16} steady MSD {:>8.2} dB  diverged {}/{}", a.name, a.steady_msd_db(), a.diverged_runs, res.n_runs);
    }
    if common.format() == Format::Json {
        let p = common.path(&sc, ".json")?;
        write_json(&p, &serde_json::json!({ "results": res, "theory": theory }))?;
        return Ok(vec![p]);
    }
    let mut written = Vec::new();
    let p = common.path(&sc, "_curves.csv")?;
    write_curves(&p, &res)?;
    written.push(p);
    let p = common.path(&sc, "_summary.csv")?;
    write_summary(&p, &res)?;
    written.push(p);
    let p = common.path(&sc, "_nodes.csv")?;
    write_nodes(&p, &res, &theory)?;
    written.push(p);
    let p = common.path(&sc, "_tracking.csv")?;
    if write_tracking(&p, &res)? {
        written.push(p);
    }
    Ok(written)
}

fn analyze_cmd(path: &Path, common: &Common) -> Result<Vec<PathBuf>> {
    let sc = load(path, common)?;
    let inst = Instance::new(sc.clone())?;
    let theory = analyze(&inst)?;
    for t in &theory {
        let msd = t.msd_network.map_or("n/a".to_string(), |m| format!("{:.2} dB", to_db(m)));
        println!(
            "{:<16} rho(H) {:.6}  mean-stable {}  ms-stable {}  network MSD {msd}",
            t.name, t.spectral_radius_h, t.mean_stable, t.mean_square_stable
        );
    }
    let p = common.path(&sc, "_theory.json")?;
    write_json(&p, &theory)?;
    Ok(vec![p])
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let common = &cli.common;
    match &cli.command {
        Command::Simulate { scenario } => simulate(scenario, common),
        Command::Analyze { scenario } => analyze_cmd(scenario, common),
        Command::Preset { name, desk, no_run } => {
            let mut p = preset(name, *desk)?;
            common.apply(&mut p.scenario)?;
            if let Some(note) = &p.note {
                println!("note: {note}");
            }
            if *no_run {
                std::fs::create_dir_all(&common.out)?;
                let path = common.out.join(format!("{}.toml", p.name));
                std::fs::write(&path, gmrflms_exp::experiment::scenario_text(&p)?)?;
                return Ok(vec![path]);
            }
            run_preset(&p, common.opts(), common.format(), &common.out)
        }
        Command::Sweep { scenario, axis, values } => {
            let sc = load(scenario, common)?;
            let axis: SweepAxis = axis.parse()?;
            let table = sweep(&sc, axis, values, common.opts())?;
            let p = match common.format() {
                Format::Csv => {
                    let p = common.path(&sc, &format!("_sweep_{axis}.csv"))?;
                    write_sweep(&p, &table)?;
                    p
                }
                Format::Json => {
                    let p = common.path(&sc, &format!("_sweep_{axis}.json"))?;
                    write_json(&p, &table)?;
                    p
                }
            };
            Ok(vec![p])
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = match &e {
                ExpError::Io(_) => 1,
                other => other.exit_code(),
            };
            ExitCode::from(code as u8)
        }
    }
}
