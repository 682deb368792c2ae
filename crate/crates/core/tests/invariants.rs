use proptest::prelude::*;

use rshe::drift::DriftSpec;
use rshe::integrator::{StepConfig, Stepper};
use rshe::io::{read_snapshot, write_snapshot};
use rshe::measure::{samples_to_quantile, stratified_samples, w2, EmpiricalMeasure};
use rshe::noise::{replica_rng, NoiseSpectrum};
use rshe::rearrange::rearrange;
use rshe::spectral::{heat_propagate, to_grid, to_spectral, GridField, GridSpec};

fn field(n: usize) -> impl Strategy<Value = GridField> {
    prop::collection::vec(-5.0f64..5.0, n).prop_map(move |v| GridField::new(GridSpec::new(n).unwrap(), v).unwrap())
}

fn admissible(n: usize) -> impl Strategy<Value = GridField> {
    field(n).prop_map(|f| rearrange(&f).unwrap().0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn spectral_round_trip_of_symmetric_fields(f in field(32)) {
        let s = f.symmetrized();
        let back = to_grid(&to_spectral(&s).unwrap()).unwrap();
        prop_assert!(back.distance(&s).unwrap() <= 1e-12 * (1.0 + s.norm()));
    }

    #[test]
    fn heat_is_a_contraction_and_keeps_the_mean(f in field(32), t in 0.0f64..0.1) {
        let s = to_spectral(&f.symmetrized()).unwrap();
        let h = heat_propagate(&s, t, 1.0).unwrap();
        prop_assert!(h.norm_sq() <= s.norm_sq() * (1.0 + 1e-14));
        prop_assert_eq!(h.modes()[0], s.modes()[0]);
    }

    #[test]
    fn w2_equals_distance_of_rearrangements(u in field(16), v in field(16)) {
        let d = w2(&u, &v).unwrap();
        let (ru, _) = rearrange(&u).unwrap();
        let (rv, _) = rearrange(&v).unwrap();
        prop_assert!((d - ru.distance(&rv).unwrap()).abs() <= 1e-12 * (1.0 + d));
        let m = EmpiricalMeasure::of_field(&u).w2(&EmpiricalMeasure::of_field(&v));
        prop_assert!((d - m).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn quantile_samples_round_trip(u in admissible(16)) {
        let m = stratified_samples(&u, 16).unwrap();
        let back = samples_to_quantile(&m, u.grid()).unwrap();
        prop_assert!(back.distance(&u).unwrap() <= 1e-12 * (1.0 + u.norm()));
    }

    #[test]
    fn snapshot_round_trip(u in field(16)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.bin");
        write_snapshot(&p, &u).unwrap();
        prop_assert_eq!(read_snapshot(&p).unwrap(), u);
    }

    #[test]
    fn synchronous_step_contracts_under_linear_drift(u in admissible(32), v in admissible(32), seed in 0u64..1000) {
        let g = GridSpec::new(32).unwrap();
        let cfg = StepConfig {
            dt: 1e-3,
            diffusivity: 1.0,
            noise_amplitude: 1.0,
            spectrum: NoiseSpectrum::power_law(0.75),
            drift: DriftSpec::Linear { mu: 1.0 },
        };
        let mut stepper = Stepper::new(cfg, g).unwrap();
        let mut a = stepper.initial_state(&u, false).unwrap();
        let mut b = stepper.initial_state(&v, false).unwrap();
        let d0 = a.field.distance(&b.field).unwrap();
        let mut rng = replica_rng(seed, 0);
        let mut noise = vec![0.0; stepper.n_modes()];
        for _ in 0..20 {
            stepper.sample_noise(&mut rng, &mut noise);
            stepper.step_with_noise(&mut a, &noise).unwrap();
            stepper.step_with_noise(&mut b, &noise).unwrap();
        }
        let d = a.field.distance(&b.field).unwrap();
        prop_assert!(d <= d0 * (1.0f64 - 1e-3).powi(20) * (1.0 + 1e-10) + 1e-14);
        prop_assert!(rshe::rearrange::is_admissible(&a.field));
    }
}
