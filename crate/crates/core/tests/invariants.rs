use overbarrier::*;
use proptest::prelude::*;

fn family() -> impl Strategy<Value = fn(f64, f64) -> Result<PotentialSpec>> {
    prop_oneof![
        Just(PotentialSpec::fermi as fn(f64, f64) -> Result<PotentialSpec>),
        Just(PotentialSpec::sech2 as fn(f64, f64) -> Result<PotentialSpec>),
        Just(PotentialSpec::gaussian as fn(f64, f64) -> Result<PotentialSpec>),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flux_is_conserved(make in family(), delta in 0.01f64..0.95, eps in 0.3f64..2.0) {
        let spec = make(delta, eps).unwrap();
        let r = reflectance_exact(&spec, &SolveOptions::default()).unwrap();
        prop_assume!(r.status == Status::Ok);
        prop_assert!((r.reflectance + r.transmittance - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mirror_leaves_reflectance_unchanged(make in family(), delta in 0.05f64..0.9, eps in 0.3f64..2.0) {
        let spec = make(delta, eps).unwrap();
        let a = reflectance_exact(&spec, &SolveOptions::default()).unwrap();
        let b = reflectance_exact(&spec.mirrored(), &SolveOptions::default()).unwrap();
        prop_assume!(a.status == Status::Ok && b.status == Status::Ok);
        prop_assert!(((a.reflectance - b.reflectance) / a.reflectance).abs() < 1e-8);
    }

    #[test]
    fn born_scales_as_delta_squared(make in family(), delta in 1e-4f64..0.4, eps in 0.3f64..2.0) {
        let a = reflectance_born(&make(delta, eps).unwrap(), &BornOptions::default()).unwrap();
        let b = reflectance_born(&make(2.0 * delta, eps).unwrap(), &BornOptions::default()).unwrap();
        prop_assert!((b.reflectance / a.reflectance - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_is_deterministic(lo in 1e-4f64..1e-2, eps in 0.2f64..1.5) {
        let deltas = log_grid(lo, 0.8, 4);
        let opts = SweepOptions::default();
        let a = sweep(&Family::SechSquared, &deltas, &[eps], &opts);
        let b = sweep(&Family::SechSquared, &deltas, &[eps], &opts);
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
