//! `tendon`: runs the experiments of the tendon-driven control stack.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tendon_core::dynamic::{train_dynamics, Dataset};
use tendon_core::harness::{
    collect_pedal_rollout, compare_controllers, comparison_check, run_scenario, scenario_checks,
    Assets, Check, ControllerKind, Metric, RunReport, Scenario, ScenarioKind,
};
use tendon_core::Error;

#[derive(Debug, Parser)]
#[command(
    name = "tendon",
    version,
    about = "Experiments on the simulated tendon-driven rig"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scenario JSON file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: the scenario's `out`, else `results`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with status 2 when an acceptance check fails.
    #[arg(long, global = true)]
    assert: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the static model from the body geometry and save it.
    InitModel,
    /// Record a random pedal rollout as training windows.
    Collect,
    /// Train the dynamics model on a saved rollout or a fresh one.
    TrainDynamics {
        /// Rollout written by `collect`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run the scenario named by the config's `kind`.
    Run,
    /// Run the PID baseline and the learned controller on the same scenario.
    Compare,
    /// Static hold with and without muscle relaxation.
    RelaxDemo,
    /// Joint-angle estimation under length noise.
    EkfDemo,
}

enum Outcome {
    Done,
    ChecksFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn scenario(cli: &Cli) -> Result<(Scenario, PathBuf), Error> {
    let (mut s, base) = match &cli.config {
        Some(path) => Scenario::load(path)?,
        None => {
            let (name, duration) = match cli.command {
                Command::RelaxDemo => ("relax", 7.0),
                Command::EkfDemo => ("ekf", 10.0),
                _ => ("pedal", 20.0),
            };
            (Scenario::pedal(name, duration, 0), PathBuf::new())
        }
    };
    match cli.command {
        Command::RelaxDemo => s.kind = ScenarioKind::Relax,
        Command::EkfDemo => s.kind = ScenarioKind::Ekf,
        _ => {}
    }
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    s.validate()?;
    Ok((s, base))
}

fn out_dir(cli: &Cli, s: &Scenario, base: &Path) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| s.out.as_ref().map(|p| base.join(p)))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn save(dir: &Path, file: &str, text: &str) -> Result<(), Error> {
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(dir.join(file), text))
        .map_err(|source| Error::Io {
            path: dir.join(file).display().to_string(),
            source,
        })
}

fn verdict(cli: &Cli, checks: &[Check]) -> Outcome {
    if !cli.assert {
        return Outcome::Done;
    }
    for c in checks {
        println!("{c}");
    }
    if checks.iter().all(|c| c.pass) {
        Outcome::Done
    } else {
        Outcome::ChecksFailed
    }
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    let (s, base) = scenario(cli)?;
    let out = out_dir(cli, &s, &base);
    let hash = s.config_hash(&base)?;
    match &cli.command {
        Command::InitModel => {
            let assets = Assets::prepare(&s, &base)?;
            let text = assets.static_model.to_json()?;
            save(&out, "static_model.json", &text)?;
            let mut r = RunReport::new("static_model", s.seed, hash);
            r.set("init_loss", Metric(assets.static_model.init_loss()));
            r.files.push("static_model.json".into());
            r.write(&out)?;
            println!("{}", r.to_json());
            Ok(Outcome::Done)
        }
        Command::Collect => {
            let assets = Assets::prepare(&s, &base)?;
            let data = collect_pedal_rollout(&s, &assets)?;
            let text = serde_json::to_string(&data).map_err(|e| Error::Config(e.to_string()))?;
            save(&out, "rollout.json", &text)?;
            let mut r = RunReport::new("rollout", s.seed, hash);
            r.set("windows", Metric(data.len() as f64));
            r.files.push("rollout.json".into());
            r.write(&out)?;
            println!("{}", r.to_json());
            Ok(Outcome::Done)
        }
        Command::TrainDynamics { data } => {
            let mut assets = Assets::prepare(&s, &base)?;
            let data: Dataset = match data {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    serde_json::from_str(&text).map_err(|e| Error::Parse {
                        path: path.display().to_string(),
                        line: e.line(),
                        column: e.column(),
                        message: e.to_string(),
                    })?
                }
                None => collect_pedal_rollout(&s, &assets)?,
            };
            if data.horizon != s.dynamic.horizon {
                return Err(Error::Config(format!(
                    "rollout has N = {}, scenario asks for {}",
                    data.horizon, s.dynamic.horizon
                )));
            }
            let mut cfg = s.dynamic.model.clone();
            cfg.train.seed = s.seed;
            let model = train_dynamics(&data, &cfg)?;
            save(&out, "dynamics_model.json", &model.to_json()?)?;
            let mut r = RunReport::new("dynamics_model", s.seed, hash);
            if let Some(rep) = model.report() {
                r.set("loss", Metric(rep.loss));
                r.set("one_step_rms", Metric(rep.one_step_rms));
                r.set("horizon_rms", Metric(rep.horizon_rms));
                r.set("train_windows", Metric(rep.train_windows as f64));
                r.set("holdout_windows", Metric(rep.holdout_windows as f64));
            }
            r.files.push("dynamics_model.json".into());
            r.write(&out)?;
            assets.dynamics = Some(model);
            println!("{}", r.to_json());
            Ok(Outcome::Done)
        }
        Command::Run | Command::RelaxDemo | Command::EkfDemo => {
            let mut assets = Assets::prepare(&s, &base)?;
            let r = run_scenario(&s, &base, &mut assets, Some(&out))?;
            println!("{}", r.to_json());
            Ok(verdict(cli, &scenario_checks(s.kind, &r)))
        }
        Command::Compare => {
            let mut assets = Assets::prepare(&s, &base)?;
            let kinds = [("pid", ControllerKind::Pid), ("mpc", ControllerKind::Mpc)];
            let r = compare_controllers(&s, &base, &mut assets, &kinds, Some(&out))?;
            println!("{}", r.to_json());
            Ok(verdict(cli, &[comparison_check(&r, "mpc", "pid")]))
        }
    }
}
