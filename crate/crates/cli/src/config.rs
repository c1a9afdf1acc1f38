use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cyclepgo::sim::{BasisKind, ManhattanConfig, SinewaveConfig};
use cyclepgo::solver::SolverOptions;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "pgo", version, about = "Cycle-based pose graph optimization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Replay a g2o dataset and record basis density and timing.
    Bench,
    /// Multi-agent grid-world simulation, MCB against the team basis.
    SimMa,
    /// Two-agent range and bearing simulation.
    SimLowdof,
    /// Check basis invariants on a dataset or on random small graphs.
    Verify,
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    #[arg(long, global = true, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true, value_name = "mcb|icb|ma-icb")]
    pub basis: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Leave the timing columns empty so output is reproducible.
    #[arg(long, global = true)]
    pub no_timing: bool,
    /// Cycle basis text file to check (verify).
    #[arg(long, global = true, value_name = "PATH")]
    pub basis_file: Option<PathBuf>,
}

/// Flat key/value settings read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub basis: Option<String>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub timing: Option<bool>,
    pub basis_file: Option<PathBuf>,
    pub max_iter: Option<usize>,
    pub constraint_tol: Option<f64>,
    pub step_tol: Option<f64>,
    pub cost_tol: Option<f64>,
    pub damping_init: Option<f64>,
    pub agents: Option<usize>,
    pub odom_edges: Option<usize>,
    pub intra_closures: Option<usize>,
    pub inter_closures: Option<usize>,
    pub box_size: Option<i32>,
    pub turn_prob: Option<f64>,
    pub noise_scale: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Settings after applying flags over the config file over defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub dataset: Option<PathBuf>,
    pub basis: Option<BasisKind>,
    pub seed: u64,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub timing: bool,
    pub basis_file: Option<PathBuf>,
    pub solver: SolverOptions,
    pub manhattan: ManhattanConfig,
    pub sinewave: SinewaveConfig,
}

impl RunConfig {
    pub fn resolve(cli: Cli) -> Result<Self, CliError> {
        let f = match &cli.flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let flags = cli.flags;
        let basis = flags.basis.or(f.basis).map(|b| b.parse::<BasisKind>()).transpose().map_err(CliError::Usage)?;
        let jobs = flags.jobs.or(f.jobs).unwrap_or(1);
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        let d = SolverOptions::default();
        let solver = SolverOptions {
            max_iter: f.max_iter.unwrap_or(d.max_iter),
            constraint_tol: f.constraint_tol.unwrap_or(d.constraint_tol),
            step_tol: f.step_tol.unwrap_or(d.step_tol),
            cost_tol: f.cost_tol.unwrap_or(d.cost_tol),
            damping_init: f.damping_init.unwrap_or(d.damping_init),
        };
        let m = ManhattanConfig::default();
        let manhattan = ManhattanConfig {
            n_agents: f.agents.unwrap_or(m.n_agents),
            odom_edges_per_agent: f.odom_edges.unwrap_or(m.odom_edges_per_agent),
            intra_loop_closures: f.intra_closures.unwrap_or(m.intra_loop_closures),
            inter_loop_closures_per_pair: f.inter_closures.unwrap_or(m.inter_loop_closures_per_pair),
            box_size: f.box_size.unwrap_or(m.box_size),
            turn_prob: f.turn_prob.unwrap_or(m.turn_prob),
            ..m
        };
        let s = SinewaveConfig::default();
        let sinewave = SinewaveConfig { noise_scale: f.noise_scale.unwrap_or(s.noise_scale), ..s };
        Ok(Self {
            command: cli.command,
            dataset: flags.dataset.or(f.dataset),
            basis,
            seed: flags.seed.or(f.seed).unwrap_or(0),
            trials: flags.trials.or(f.trials),
            out: flags.out.or(f.out),
            jobs,
            timing: !flags.no_timing && f.timing.unwrap_or(true),
            basis_file: flags.basis_file.or(f.basis_file),
            solver,
            manhattan,
            sinewave,
        })
    }

    /// Fails early on unreadable inputs or an output directory that does
    /// not exist.
    pub fn validate_paths(&self) -> Result<(), CliError> {
        for p in self.dataset.iter().chain(&self.basis_file) {
            if !p.is_file() {
                return Err(CliError::Data(format!("cannot read {}", p.display())));
            }
        }
        if let Some(out) = &self.out {
            let dir = out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if !dir.is_dir() {
                return Err(CliError::Data(format!("output directory {} does not exist", dir.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(args: &[&str]) -> RunConfig {
        RunConfig::resolve(Cli::try_parse_from(args).unwrap()).unwrap()
    }

    #[test]
    fn flags_override_config_which_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 7\ntrials = 3\nbasis = \"mcb\"\nagents = 2\n").unwrap();
        let p = path.to_str().unwrap();
        let c = resolve(&["pgo", "sim-ma", "--config", p, "--seed", "9"]);
        assert_eq!(c.seed, 9);
        assert_eq!(c.trials, Some(3));
        assert_eq!(c.basis, Some(BasisKind::Mcb));
        assert_eq!(c.manhattan.n_agents, 2);
        assert_eq!(c.manhattan.odom_edges_per_agent, 500);
        let c = resolve(&["pgo", "sim-ma"]);
        assert_eq!((c.seed, c.trials, c.basis, c.jobs, c.timing), (0, None, None, 1, true));
    }

    #[test]
    fn unknown_config_key_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "sed = 7\n").unwrap();
        let cli = Cli::try_parse_from(["pgo", "bench", "--config", path.to_str().unwrap()]).unwrap();
        assert!(matches!(RunConfig::resolve(cli), Err(CliError::Usage(_))));
    }

    #[test]
    fn bad_basis_kind_is_a_usage_error() {
        let cli = Cli::try_parse_from(["pgo", "bench", "--basis", "horton"]).unwrap();
        assert!(matches!(RunConfig::resolve(cli), Err(CliError::Usage(_))));
    }
}
