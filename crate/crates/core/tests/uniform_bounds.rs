mod common;

use l1gp::bounds::BoundContext;
use l1gp::sim::{Campaign, CampaignConfig};

#[test]
fn bound_covers_prior_draws() {
    let c = common::prior_coverage(500, 1e-3);
    assert!(c.pass, "{}", c.detail);
}

#[test]
fn bound_covers_prior_draws_at_fine_tau() {
    // log-space covering keeps beta finite at tau = 1e-8
    let c = common::prior_coverage(40, 1e-8);
    assert!(c.pass, "{}", c.detail);
}

#[test]
fn continuity_constants_dominate_samples() {
    let c = common::continuity_dominates(2000);
    assert!(c.pass, "{}", c.detail);
}

#[test]
fn binomial_lower_bound() {
    // all successes: alpha^(1/n)
    assert!((common::binomial_lower(500, 500, 0.99) - 0.01f64.powf(1.0 / 500.0)).abs() < 1e-12);
    let lo = common::binomial_lower(460, 500, 0.99);
    assert!(lo > 0.88 && lo < 0.92, "{lo}");
    assert!(common::binomial_lower(0, 10, 0.99) == 0.0);
}

#[test]
fn uncertainty_field_ground_truth() {
    let (h, dt) = common::uncertainty_ground_truth();
    assert!((h - 1.53).abs() <= 0.02, "{h}");
    assert!((dt - 0.30).abs() <= 0.01, "{dt}");
    // both at most the conservative triple
    let b = l1gp::dynamics::planar_quadrotor().bounds.uncertainty;
    assert!(h <= b.value && dt <= b.grad_xi);
}

#[test]
fn learned_bounds_are_deterministic_and_capped() {
    let campaign = Campaign::new(CampaignConfig::default(), false).unwrap();
    let data = campaign.schedule_dataset(1).unwrap();
    let model = campaign.fit(&data.prefix(25)).unwrap();
    let a = campaign.learned_bounds(&model).unwrap();
    let b = campaign.learned_bounds(&model).unwrap();
    assert_eq!(a, b);
    let cons = campaign.setup.bounds.uncertainty;
    let used = a.capped(&cons);
    assert!(used.value <= cons.value && used.grad_x <= cons.grad_x && used.grad_xi <= cons.grad_xi);
    assert!(used.value <= a.triple.value);
    assert_eq!(a.provenance.n_data, 25);
    assert_eq!(a.provenance.grid_points, campaign.config.gp.grid_resolution.iter().product::<usize>());
}

#[test]
fn spread_small_at_data_large_far_away() {
    let campaign = Campaign::new(CampaignConfig::default(), false).unwrap();
    let data = campaign.schedule_dataset(2).unwrap();
    let model = campaign.fit(&data.prefix(100)).unwrap();
    let near: f64 = (0..data.len())
        .map(|j| model.posterior(data.inputs.column(j).as_slice()).unwrap().1.norm())
        .sum::<f64>()
        / data.len() as f64;
    let mut far_z: Vec<f64> = data.inputs.column(0).iter().copied().collect();
    for v in far_z.iter_mut() {
        *v += 1e6;
    }
    let far = model.posterior(&far_z).unwrap().1.norm();
    assert!(near / far < 0.5, "{near} / {far}");
}

#[test]
fn slack_matches_its_parts() {
    let campaign = Campaign::new(CampaignConfig::default(), false).unwrap();
    let data = campaign.schedule_dataset(1).unwrap();
    let model = campaign.fit(&data.prefix(25)).unwrap();
    let gp = &campaign.config.gp;
    let ctx = BoundContext::new(&model, &campaign.setup.input_domain(), gp.tau, gp.delta, campaign.setup.bounds.clone()).unwrap();
    let t = &campaign.setup.bounds.uncertainty;
    let c = &ctx.continuity;
    let expect = (t.grad_x + t.grad_xi + c.mean_lipschitz) * gp.tau + ctx.covering.beta.sqrt() * (c.modulus_coeff * gp.tau).sqrt();
    assert!((ctx.slack() - expect).abs() <= 1e-12 * expect);
    assert!(ctx.covering.beta > 0.0 && ctx.covering.beta.is_finite());
}
