use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use l1gp::gp::Dataset;
use l1gp::planning::PlannedTrajectory;
use l1gp::sim::{emit_outputs, Campaign, CampaignConfig, RunOptions};
use l1gp::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Learned uncertainty bounds, RL1 tracking and tube certificates for the planar quadrotor")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the learning campaign and write its outputs.
    Campaign {
        #[arg(long)]
        config: PathBuf,
        /// Run only this episode.
        #[arg(long)]
        episode: Option<usize>,
        /// Simulate infeasible certificates, stamped UNCERTIFIED.
        #[arg(long)]
        force: bool,
        /// 20 m forest and the larger planner settings.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uniform bounds of the GP fitted to a dataset.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Certificate of a plan exported as CSV.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        plan: PathBuf,
    },
}

fn open(path: &PathBuf) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Campaign {
            config,
            episode,
            force,
            full,
            seed,
            out,
        } => {
            let mut cfg = CampaignConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let campaign = Campaign::new(cfg, full)?;
            let res = campaign.run(&RunOptions { force, episode })?;
            emit_outputs(&res.report, &res.episodes, Some(&res.dataset), &out)?;
            for e in &res.report.episodes {
                println!(
                    "episode {} {}: rho {:.3} {} sup error {:.4} penetrating samples {}",
                    e.index,
                    e.dynamics,
                    e.rho,
                    if e.certified { "certified" } else { "UNCERTIFIED" },
                    e.sup_tracking_error,
                    e.penetrating_samples
                );
            }
            if let Some(o) = &res.report.optimality {
                println!(
                    "trajopt realized cost: nominal {:.3}, learned@{} {:.3}",
                    o.nominal_realized_cost, o.n_data, o.learned_realized_cost
                );
            }
            println!("outputs in {}", out.display());
            Ok(())
        }
        Cmd::Bounds { config, dataset } => {
            let campaign = Campaign::new(CampaignConfig::load(&config)?, false)?;
            let data = Dataset::read_csv(open(&dataset)?, campaign.config.gp.noise_std, 1)?;
            let bounds = campaign.learned_bounds(&campaign.fit(&data)?)?;
            let capped = bounds.capped(&campaign.setup.bounds.uncertainty);
            let out = serde_json::json!({ "n_data": data.len(), "learned": bounds, "used": capped });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
        Cmd::Certify { config, plan } => {
            let campaign = Campaign::new(CampaignConfig::load(&config)?, false)?;
            let plan = PlannedTrajectory::read_csv(open(&plan)?)?;
            let report = campaign.certify_plan(&plan)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.verdict.feasible {
                return Err(Error::Infeasible(format!("margins {:?}", report.verdict.margins)));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
