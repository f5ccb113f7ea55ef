use fphybrid::grid::{GridDensity, GridSpec, Provenance};
use fphybrid::io::{decode_grid, encode_grid, read_grid, write_grid};
use proptest::prelude::*;

#[test]
fn golden_ramp_fixture_decodes() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/ramp5.fpgrid");
    let d = read_grid(path).unwrap();
    assert_eq!(d.spec.counts(), &[5]);
    assert_eq!(d.values, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    assert_eq!(d.provenance, Provenance::Analytic);
    assert_eq!(d.mass, 0.625);
    // Re-encoding reproduces the independently written bytes.
    assert_eq!(encode_grid(&d), std::fs::read(path).unwrap());
}

#[test]
fn file_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GridSpec::new(vec![-1.0, 0.5], vec![1.0, 1.5], 0.25).unwrap();
    let values: Vec<f64> = (0..spec.len())
        .map(|k| (k as f64).sin() * 1e-7 + 1.0 / 3.0)
        .collect();
    let d = GridDensity::new(spec, values, Provenance::Hybrid, 123, 0.1 + 0.2).unwrap();
    let path = dir.path().join("x.fpgrid");
    write_grid(&path, &d).unwrap();
    let back = read_grid(&path).unwrap();
    assert_eq!(back, d);
    assert!(back
        .values
        .iter()
        .zip(&d.values)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

proptest! {
    #[test]
    fn encode_decode_identity(
        lo in -100.0f64..100.0,
        steps in 1usize..40,
        r in 1e-3f64..2.0,
        mass in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let spec = GridSpec::new(vec![lo], vec![lo + steps as f64 * r], r);
        prop_assume!(spec.is_ok());
        let spec = spec.unwrap();
        let values: Vec<f64> = (0..spec.len()).map(|k| ((seed ^ k as u64) as f64).sqrt()).collect();
        let d = GridDensity::new(spec, values, Provenance::MonteCarlo, seed, mass).unwrap();
        prop_assert_eq!(decode_grid(&encode_grid(&d)).unwrap(), d);
    }
}
