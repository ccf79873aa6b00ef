//! Subcommand implementations shared by the binary and the tests.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfggd_core::rfggd::OnlineTermination;
use rfggd_core::Vector;

use crate::config::{ExperimentConfig, ModelConfig, RunConfig};
use crate::error::{Result, RunError};
use crate::experiments::{car_grid, car_rfggd_study, follower_study, PathEnd};
use crate::output::{
    feasibility_csv, grid_csv, grid_svg, iterates_csv, rewards_csv, run_csv, termination_str, write_atomic,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    CarGrid,
    CarRfggd,
    Follow,
}

impl Command {
    fn kind(self) -> &'static str {
        match self {
            Self::CarGrid => "car_grid",
            Self::CarRfggd => "car_rfggd",
            Self::Follow => "follow",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// What a command wrote, plus a short human-readable summary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }
}

pub fn run(cmd: Command, config: &Path, overrides: &Overrides) -> Result<Outcome> {
    let cfg = RunConfig::load(config)?;
    run_config(cmd, &cfg, overrides)
}

pub fn run_config(cmd: Command, cfg: &RunConfig, overrides: &Overrides) -> Result<Outcome> {
    if cfg.experiment.kind() != cmd.kind() {
        return Err(RunError::config(
            "experiment.kind",
            format!("'{}' does not match the subcommand (expected '{}')", cfg.experiment.kind(), cmd.kind()),
        ));
    }
    let rfggd = cfg.rfggd.build()?;
    let seed = overrides.seed.unwrap_or(cfg.seed);
    let mut out = Writer {
        dir: overrides.out.clone().unwrap_or_else(|| cfg.output_dir.clone()),
        files: Vec::new(),
    };
    let mut summary = Vec::new();
    let car = |what: &str| match &cfg.model {
        ModelConfig::Car(c) => c.build(),
        ModelConfig::Unicycle(_) => Err(RunError::config("model.kind", format!("{what} needs the car model"))),
    };

    match &cfg.experiment {
        ExperimentConfig::CarGrid(section) => {
            let model = car("car_grid")?;
            let spec = section.build(&model, &rfggd.rate_box)?;
            let grid = car_grid(&spec)?;
            out.put("grid.csv", &grid_csv(&grid))?;
            if section.svg {
                out.put("grid.svg", grid_svg(&grid).as_bytes())?;
            }
            summary.push(format!(
                "{}x{} cells: {} infeasible at once, {} feasible to the cap",
                grid.a_values.len(),
                grid.b_values.len(),
                grid.count(0),
                grid.count(spec.horizon_cap)
            ));
        }
        ExperimentConfig::CarRfggd(section) => {
            let model = car("car_rfggd")?;
            section.validate(&rfggd.rate_box)?;
            let mut inits = section.inits.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (lo, hi) = section.init_range;
            for _ in 0..section.random_inits {
                inits.push((rng.random_range(lo..hi), rng.random_range(lo..hi)));
            }
            let paths = car_rfggd_study(&model, section.x0, &inits, section.horizon_cap, section.case1_steps, &rfggd)?;
            out.put("iterates.csv", &iterates_csv(&paths))?;
            out.put("feasibility.csv", &feasibility_csv(&paths))?;
            for p in &paths {
                let curve: Vec<usize> = p.feasibility_curve().collect();
                summary.push(format!(
                    "init ({:.4}, {:.4}): {} case-2 iterations, feasible steps {} -> {}",
                    p.init.0,
                    p.init.1,
                    p.case2_iterations,
                    curve[0],
                    curve[curve.len() - 1]
                ));
            }
            let stalled = paths.iter().filter(|p| p.end == PathEnd::Stalled).count();
            if stalled > 0 {
                return Err(RunError::Terminal(format!("{stalled} of {} inits stalled", paths.len())));
            }
        }
        ExperimentConfig::Follow(section) => {
            let model = match &cfg.model {
                ModelConfig::Unicycle(u) => u.build()?,
                ModelConfig::Car(_) => return Err(RunError::config("model.kind", "follow needs the unicycle model")),
            };
            let theta = section.params(&rfggd.rate_box)?;
            let x0 = Vector::from_row_slice(&section.x0);
            let report = follower_study(&model, &x0, &theta, section.sim_steps, &rfggd)?;
            out.put("adaptive.csv", &run_csv(&report.adaptive, &report.adaptive_barriers))?;
            out.put("baseline.csv", &run_csv(&report.baseline, &report.baseline_barriers))?;
            out.put("rewards.csv", &rewards_csv(&report))?;
            summary.push(format!(
                "adaptive: total J {:.6}, {}; baseline: total J {:.6}, {}",
                report.adaptive.total_horizon_objective(),
                termination_str(&report.adaptive.termination),
                report.baseline.total_horizon_objective(),
                termination_str(&report.baseline.termination),
            ));
            summary.push(format!("smallest adaptive barrier {:.6}", report.min_adaptive_barrier()));
            match &report.adaptive.termination {
                OnlineTermination::Completed => {}
                OnlineTermination::Infeasible { .. } => {
                    return Err(RunError::Terminal(termination_str(&report.adaptive.termination)))
                }
                OnlineTermination::Failed { error, .. } => return Err(RunError::Numerical(error.clone())),
            }
        }
    }
    Ok(Outcome {
        files: out.files,
        summary,
    })
}
