//! End-to-end use of the public API: data, chain, budget and audits together.

use crate::optimizer::full_grad_norm;
use crate::*;

fn setup(n: usize) -> (Box<dyn LossModel>, Dataset) {
    let model = build_model(ModelKind::Ridge, 2, 0.5, 1.0, None).unwrap();
    let mut rng = StreamFactory::new(21).stream(Purpose::Data, 0);
    let data = generate_dataset(ModelKind::Ridge, n, 2, 1.0, None, &mut rng).unwrap();
    (model, data)
}

fn chain(batch: usize, sigma: f64) -> ChainConfig {
    ChainConfig {
        eta: 0.05,
        sigma,
        alpha: 1.5,
        batch_size: batch,
        iters: 300,
        seed: 9,
        init: InitPolicy::Zero,
        record_stride: None,
    }
}

#[test]
fn replicas_concentrate_near_the_stable_point() {
    let (model, data) = setup(60);
    let obj = Objective::new(model.as_ref(), &data).unwrap();
    let star = find_stable_point(model.as_ref(), &data, 1e-12).unwrap();
    let finals = run_replicas(&obj, &chain(60, 0.005), 400).unwrap();
    let mut dists: Vec<f64> = finals
        .iter()
        .map(|t| crate::vecops::norm(&t.iter().zip(&star).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .collect();
    dists.sort_by(f64::total_cmp);
    // Heavy tails make the mean useless; the median must be small.
    assert!(dists[dists.len() / 2] < 0.1, "median distance {}", dists[dists.len() / 2]);
    assert!(full_grad_norm(&obj, &star) < 1e-10);
}

#[test]
fn replicas_are_reproducible_and_seed_sensitive() {
    let (model, data) = setup(30);
    let obj = Objective::new(model.as_ref(), &data).unwrap();
    let a = run_replicas(&obj, &chain(5, 0.5), 8).unwrap();
    let b = run_replicas(&obj, &chain(5, 0.5), 8).unwrap();
    assert_eq!(a, b);
    let c = run_replicas(&obj, &ChainConfig { seed: 10, ..chain(5, 0.5) }, 8).unwrap();
    assert_ne!(a, c);
}

#[test]
fn budget_matches_the_drift_and_gamma_pieces() {
    let (model, data) = setup(100);
    let c = model.constants();
    let req = BudgetRequest {
        alpha: 1.5,
        sigma: 0.5,
        eta: 0.05,
        p: None,
        dim: 2,
        n: data.len(),
        k: 500,
        consts: c,
        erg: Some(ErgodicityParams::new(2.0, 0.9).unwrap()),
        universal_stable_point: false,
        algorithm: Algorithm::Gd,
    };
    let b = privacy_budget(&req).unwrap();
    assert!(b.delta > 0.0 && b.delta.is_finite());
    let doubled = privacy_budget(&BudgetRequest { n: 200, ..req.clone() }).unwrap();
    assert!((doubled.delta * 2.0 / b.delta - 1.0).abs() < 1e-12);
    let longer = privacy_budget(&BudgetRequest { k: 5000, ..req.clone() }).unwrap();
    assert!(longer.delta >= b.delta && longer.delta <= b.delta_uniform * (1.0 + 1e-12));
    let sgd = privacy_budget(&BudgetRequest { algorithm: Algorithm::Sgd { batch: 10 }, ..req }).unwrap();
    assert_eq!(sgd.delta, b.delta);
}

#[test]
fn drift_and_gamma_audits_pass_on_a_small_problem() {
    let (model, data) = setup(50);
    let obj = Objective::new(model.as_ref(), &data).unwrap();
    let c = model.constants();
    let cfg = chain(50, 0.5);
    let lp = LyapunovExponent::default_for(1.5).unwrap();
    let center = find_stable_point(model.as_ref(), &data, 1e-12).unwrap();
    let grid = radial_grid(&center, 5.0 * c.stable_point_bound(), 6, 4).unwrap();
    let drift = drift_small_p(lp.p, 1.5, 0.5, 0.05, &c, 2).unwrap();
    let report = verify_drift(&DriftAudit {
        objective: &obj,
        chain: &cfg,
        drift,
        center: center.clone(),
        grid,
        reps: 2000,
        seed: 4,
    })
    .unwrap();
    assert!(report.pass, "{report}");

    let neighbor = make_neighbor(&data, 0, DataPoint::new(vec![0.0; 3]).unwrap()).unwrap();
    let ingredients = c_gamma_hat(lp.p, 1.5, 0.5, 0.05, &c, 2, data.len()).unwrap();
    let gcenter = find_stable_point(model.as_ref(), &neighbor, 1e-12).unwrap();
    let grid = radial_grid(&gcenter, 5.0 * c.stable_point_bound(), 6, 4).unwrap();
    let report = verify_gamma(&GammaAudit {
        model: model.as_ref(),
        data: &data,
        neighbor: &neighbor,
        eta: 0.05,
        sigma: 0.5,
        alpha: 1.5,
        ingredients,
        center: gcenter,
        grid,
        reps: 2000,
        seed: 4,
        convention: KlConvention::Calibrated,
    })
    .unwrap();
    assert!(report.pass, "{report}");
}

#[test]
fn invalid_inputs_are_typed_errors() {
    let (model, data) = setup(10);
    let obj = Objective::new(model.as_ref(), &data).unwrap();
    assert!(run_chain(&obj, &ChainConfig { batch_size: 11, ..chain(1, 0.5) }).is_err());
    assert!(run_chain(&obj, &ChainConfig { alpha: 0.9, ..chain(1, 0.5) }).is_err());
    assert!(StableSampler::new(2.5, 3).is_err());
    assert!(make_neighbor(&data, 10, DataPoint::new(vec![0.0; 3]).unwrap()).is_err());
}
