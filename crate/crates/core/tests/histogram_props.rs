use fphybrid::grid::GridSpec;
use fphybrid::model::{double_well_model, DoubleWellParams};
use fphybrid::sampler::{
    merge_histograms, sample_chain, sample_counts, sample_histogram, RawHistogram, SamplerConfig,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histogram_mass_matches_inside_fraction(points in prop::collection::vec(-1.5f64..2.5, 1..400)) {
        let spec = GridSpec::new(vec![0.0], vec![2.0], 0.1).unwrap();
        let mut hist = RawHistogram::empty(spec.clone());
        for p in &points {
            hist.add_point(&[*p]);
        }
        prop_assert_eq!(hist.total(), points.len() as u64);
        let inside = points.iter().filter(|&&x| (-0.05..2.05).contains(&x)).count() as u64;
        prop_assert_eq!(hist.inside(), inside);
        if inside > 0 {
            let (v, mass) = hist.to_density().unwrap();
            prop_assert!((mass - inside as f64 / points.len() as f64).abs() < 1e-15);
            prop_assert!((v.integral() - mass).abs() < 1e-12);
            prop_assert!(v.values.iter().all(|&x| x >= 0.0));
        }
    }
}

fn short_config(seed: u64, chains: usize) -> SamplerConfig {
    SamplerConfig {
        horizon: 40.0,
        burn_in: 1.0,
        seed,
        chains,
        ..SamplerConfig::default()
    }
}

#[test]
fn seeded_runs_are_bit_identical() {
    let model = double_well_model(DoubleWellParams::default()).unwrap();
    let spec = GridSpec::new(vec![0.0], vec![2.0], 0.05).unwrap();
    let (a, ma) = sample_histogram(&model, &short_config(9, 3), &spec).unwrap();
    let (b, mb) = sample_histogram(&model, &short_config(9, 3), &spec).unwrap();
    assert_eq!(ma.to_bits(), mb.to_bits());
    assert!(a
        .values
        .iter()
        .zip(&b.values)
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn chains_merge_to_the_parallel_result() {
    let model = double_well_model(DoubleWellParams::default()).unwrap();
    let spec = GridSpec::new(vec![-2.0], vec![2.0], 0.05).unwrap();
    let cfg = short_config(4, 4);
    let parts: Vec<_> = (0..4)
        .map(|w| sample_chain(&model, &cfg, &spec, w).unwrap())
        .collect();
    let merged = merge_histograms(&parts).unwrap();
    let direct = sample_counts(&model, &cfg, &spec)
        .unwrap()
        .to_density()
        .unwrap();
    assert_eq!(merged.0.values, direct.0.values);
    assert_eq!(merged.1, direct.1);
}
