//! GP fits of the quadrotor remainder on growing datasets, the uniform
//! bounds they give, and how often the true remainder exceeds them on
//! random test points.
//!
//! cargo run --release --example gp_bounds -- [seed]

use l1gp::dynamics::{UncertaintyField, Vector};
use l1gp::sim::{Campaign, CampaignConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> l1gp::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let config = CampaignConfig {
        seed,
        ..CampaignConfig::default()
    };
    let campaign = Campaign::new(config, false)?;
    let data = campaign.schedule_dataset(campaign.config.episodes.len() - 1)?;
    let domain = campaign.setup.input_domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let tests: Vec<Vec<f64>> = (0..2000).map(|_| (0..domain.dim()).map(|_| rng.random::<f64>()).collect()).collect();

    println!("conservative: {:?}", campaign.setup.bounds.uncertainty);
    for n in [10, 25, 50, 100] {
        let model = campaign.fit(&data.prefix(n))?;
        let b = campaign.learned_bounds(&model)?;
        let mut worst = 0.0f64;
        for u in &tests {
            let z = domain.from_unit(u);
            let xi = Vector::from_element(1, z[0]);
            let x = z.rows(1, z.len() - 1).into_owned();
            let err = (campaign.setup.uncertainty.value(&xi, &x) - model.mean(z.as_slice())).norm();
            worst = worst.max(err);
        }
        println!(
            "N = {n:3}: value {:.4} grad_x {:.4} grad_xi {:.4} | beta {:.1} slack {:.3} | worst test error {worst:.4}",
            b.triple.value, b.triple.grad_x, b.triple.grad_xi, b.provenance.beta, b.provenance.slack
        );
    }
    Ok(())
}
