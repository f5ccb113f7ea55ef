use fphybrid::config::{parse_config, serialize_config, DomainBox};
use proptest::prelude::*;

fn model_block() -> impl Strategy<Value = (String, usize)> {
    prop_oneof![
        (0.01f64..2.0).prop_map(|s| (format!("name = double-well\nsigma = {s}\n"), 1)),
        (0.01f64..2.0, 0.01f64..1.0, -2.0f64..2.0).prop_map(|(s, e, a)| (
            format!("name = van-der-pol\nsigma = {s}\nepsilon = {e}\na = {a}\n"),
            2
        )),
        (0.0f64..1.0, 1.0f64..30.0).prop_map(|(s, b)| (
            format!("name = lorenz\nsigma = {s}\nb = {b}\nrotation = 0,0,1,1,0,0,0,1,0\n"),
            3
        )),
        (0.0f64..1.0).prop_map(|s| (format!("name = rossler\nsigma = {s}\noffset = 1,2,3\n"), 3)),
    ]
}

proptest! {
    #[test]
    fn parse_serialize_round_trip(
        (model, dim) in model_block(),
        lo in -10.0f64..0.0,
        steps in 3usize..50,
        r in 0.001f64..0.5,
        dt in 1e-5f64..0.01,
        horizon in 1.0f64..1e4,
        burn_in in 0.0f64..1.0,
        seed in any::<u64>(),
        chains in 1usize..16,
        tol in 1e-14f64..1e-3,
        full_mass in any::<bool>(),
        local in any::<bool>(),
    ) {
        let r = (r * 1e3).round() / 1e3;
        let lower = vec![lo; dim].iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        let upper = vec![lo + steps as f64 * r; dim].iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        let domain = if local && dim == 3 {
            format!("extent = {e},{e},{e}\nr = {r}\n", e = steps as f64 * r)
        } else {
            format!("lower = {lower}\nupper = {upper}\nr = {r}\n")
        };
        let text = format!(
            "[model]\n{model}[domain]\n{domain}[sampler]\ndt = {dt}\nT = {horizon}\nburn_in = {burn_in}\nseed = {seed}\nchains = {chains}\n\
             [solver]\ntol = {tol}\n[output]\nfull_mass = {full_mass}\n"
        );
        let cfg = parse_config(&text).unwrap();
        let again = parse_config(&serialize_config(&cfg)).unwrap();
        prop_assert_eq!(&again, &cfg);
        if local && dim == 3 {
            let is_local = matches!(cfg.domain.bounds, DomainBox::Local { .. });
            prop_assert!(is_local);
        }
    }
}
