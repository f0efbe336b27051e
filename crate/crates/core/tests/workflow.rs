use rand::Rng;
use trader_company_core::formula::{parse_trader, sample_uniform_trader};
use trader_company_core::metrics::accuracy;
use trader_company_core::rng::seeded;
use trader_company_core::{
    generate_synthetic_panel, Activation, Company, CompanyConfig, HyperRanges, Operator, PlantedAlphaSpec,
    PredictionTrack,
};

fn planted(seed: u64) -> PlantedAlphaSpec {
    let symbols: Vec<String> = (0..10).map(|i| format!("S{i}")).collect();
    PlantedAlphaSpec {
        num_stocks: 10,
        num_periods: 1000,
        target_stock: 0,
        ground_truth: parse_trader("+1·tanh(S3_t − S7_{t−2})", &symbols).unwrap(),
        signal_scale: 0.01,
        noise_scale: 0.005,
        background_scale: 0.01,
        corr_window: 10,
        seed,
        shift: None,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn mean_score_rises_with_training() {
    let mut every_round = 0;
    for seed in 0..20u64 {
        let data = generate_synthetic_panel(&planted(seed)).unwrap();
        let view = data.panel.view();
        let mut rng = seeded(seed);
        let mut company = Company::new(0, 10, CompanyConfig::default(), &mut rng).unwrap();
        let times = company.warmup()..999;
        let mut means = vec![mean(&company.scores(&view, times.clone()).unwrap())];
        for _ in 0..5 {
            company.train_step(&view, times.clone(), &mut rng).unwrap();
            means.push(mean(&company.scores(&view, times.clone()).unwrap()));
        }
        every_round += usize::from(means.windows(2).all(|w| w[1] > w[0]));
    }
    assert!(every_round >= 18, "strictly increasing in {every_round}/20 seeds");
}

#[test]
fn random_signs_score_half() {
    let mut rng = seeded(12);
    let n = 10_000;
    let predicted: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let actual: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let track = PredictionTrack::new(0, (0..n).collect(), predicted, actual).unwrap();
    // binomial standard deviation of the hit rate, in percent
    let sigma = 100.0 * (0.25f64 / n as f64).sqrt();
    assert!((accuracy(&track).unwrap() - 50.0).abs() <= 5.0 * sigma);
}

#[test]
fn restricted_ranges_restrict_sampling() {
    let mut rng = seeded(2);
    let linear = HyperRanges {
        activations: vec![Activation::Identity],
        ..HyperRanges::default()
    };
    let unary = HyperRanges {
        operators: vec![Operator::ProjectX],
        ..HyperRanges::default()
    };
    for _ in 0..100 {
        let t = sample_uniform_trader(&linear, 8, &mut rng);
        assert!(t.terms.iter().all(|term| term.activation == Activation::Identity));
        let t = sample_uniform_trader(&unary, 8, &mut rng);
        assert!(t.terms.iter().all(|term| term.op == Operator::ProjectX));
    }
}

#[test]
fn full_population_satisfies_invariants() {
    let config = CompanyConfig::default();
    let mut rng = seeded(0);
    let company = Company::new(3, 20, config.clone(), &mut rng).unwrap();
    assert_eq!(company.traders().len(), 100);
    for trader in company.traders() {
        trader.validate(&config.ranges, 20).unwrap();
    }
    let again = Company::new(3, 20, config, &mut seeded(0)).unwrap();
    assert_eq!(company, again);
}
