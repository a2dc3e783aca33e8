//! Certificate of an episode's MPPI plan: tube radius, the constants that
//! enter the feasibility conditions, the margins and the UUB limit.
//!
//! cargo run --release --example certify -- [episode]

use l1gp::certificate::TripleSource;
use l1gp::dynamics::{ExogenousSignal, ModelField, Vector};
use l1gp::planning::DynamicsTag;
use l1gp::sim::{Campaign, CampaignConfig};

fn main() -> l1gp::Result<()> {
    let k: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let campaign = Campaign::new(CampaignConfig::default(), false)?;
    let spec = campaign.config.episodes.get(k).cloned().ok_or_else(|| l1gp::Error::Config(format!("no episode {k}")))?;
    let data = campaign.schedule_dataset(k)?;
    let gp = if spec.n_data > 0 { Some(campaign.fit(&data.prefix(spec.n_data))?) } else { None };
    let cons = campaign.setup.bounds.uncertainty;
    let (field, tag, source, triple) = match &gp {
        Some(g) => (
            ModelField::corrected(&campaign.setup.system, g, ExogenousSignal::Time),
            DynamicsTag::Learned { n: spec.n_data },
            TripleSource::Learned { n: spec.n_data },
            campaign.learned_bounds(g)?.capped(&cons),
        ),
        None => (ModelField::nominal(&campaign.setup.system), DynamicsTag::Nominal, TripleSource::Conservative, cons),
    };
    let x0 = Vector::zeros(6);
    let rho = l1gp::certificate::compute_tube_params(&campaign.metric, &x0, &x0, spec.rho_a, spec.eps)?.rho;
    let (plan, reached) = campaign.plan(&field, rho, 1, tag)?;
    println!("episode {k}: {} plan over {:.2} s, reached goal {reached}, tube radius {rho:.3}", tag, plan.duration());
    let report = campaign.certify(&plan, &spec, triple, source, &x0)?;
    let c = &report.constants;
    println!("triple {:?}", c.triple);
    println!("kappa {:?}", c.kappa);
    println!("zeta {:?}", c.zeta);
    println!("feasible {}, margins {:?}", report.verdict.feasible, report.verdict.margins);
    println!("UUB limit {:.4}", report.verdict.uub_limit());
    Ok(())
}
