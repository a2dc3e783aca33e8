//! The three-episode desk campaign with default settings, forced through
//! infeasible certificates, written to `out/desk` (or the first argument).
//!
//! cargo run --release --example desk_campaign -- [out-dir]

use std::path::PathBuf;
use std::time::Instant;

use l1gp::sim::{emit_outputs, Campaign, CampaignConfig, RunOptions};

fn main() -> l1gp::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out/desk"));
    let campaign = Campaign::new(CampaignConfig::default(), false)?;
    let start = Instant::now();
    let res = campaign.run(&RunOptions {
        force: true,
        episode: None,
    })?;
    println!("campaign took {:.1?}", start.elapsed());
    for b in &res.report.bounds {
        println!("N = {:3}: bound {:.4} (used {:.4}, {:.4}, {:.4})", b.n_data, b.raw.value, b.used.value, b.used.grad_x, b.used.grad_xi);
    }
    for e in &res.report.episodes {
        println!(
            "episode {} ({}): rho {:.3}, certified {}, sup error {:.4}, plan {:.1} s, goal {}, penetrating samples {}, substeps {}",
            e.index, e.dynamics, e.rho, e.certified, e.sup_tracking_error, e.plan_duration, e.reached_goal, e.penetrating_samples, e.l1_substeps
        );
    }
    if let Some(o) = &res.report.optimality {
        println!(
            "trajopt realized cost: nominal {:.2}, learned@{} {:.2} (planned {:.2} / {:.2})",
            o.nominal_realized_cost, o.n_data, o.learned_realized_cost, o.nominal_planned_cost, o.learned_planned_cost
        );
    }
    emit_outputs(&res.report, &res.episodes, Some(&res.dataset), &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
