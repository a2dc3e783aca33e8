//! iLQR plans on the nominal and on the learned model, flown by RL1 on the
//! true plant, scored with the planning cost against the true trim.
//!
//! cargo run --release --example trajopt_compare

use l1gp::sim::{Campaign, CampaignConfig};

fn main() -> l1gp::Result<()> {
    let campaign = Campaign::new(CampaignConfig::default(), false)?;
    let n = campaign.config.trajopt.n_data;
    let k = campaign.config.episodes.iter().position(|e| e.n_data >= n).unwrap_or(campaign.config.episodes.len() - 1);
    let data = campaign.schedule_dataset(k)?;
    let o = campaign.optimality(&data)?;
    println!("{:>12} {:>10} {:>10} {:>6}", "model", "planned", "realized", "iters");
    println!("{:>12} {:>10.2} {:>10.2} {:>6}", "nominal", o.nominal_planned_cost, o.nominal_realized_cost, o.nominal_iterations);
    println!("{:>12} {:>10.2} {:>10.2} {:>6}", format!("learned@{}", o.n_data), o.learned_planned_cost, o.learned_realized_cost, o.learned_iterations);
    Ok(())
}
