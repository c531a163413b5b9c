use nlkpp::kernel::{KernelSpec, Side};
use nlkpp::{Atom, Kernel};
use proptest::prelude::*;

fn raw_atoms() -> impl Strategy<Value = Vec<Atom>> {
    prop::collection::vec((-5.0f64..5.0, 0.05f64..3.0), 1..6)
        .prop_map(|v| v.into_iter().map(|(s, mass)| Atom { s, mass }).collect())
}

proptest! {
    #[test]
    fn normalization_gives_unit_mass(a in raw_atoms()) {
        let raw: f64 = a.iter().map(|x| x.mass).sum();
        let k = Kernel::from_atoms(a).unwrap().normalize().unwrap();
        prop_assert!((k.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(k.is_normalized());
        prop_assert!((k.mass(Side::Left) + k.mass(Side::Right) - 1.0).abs() < 1e-12);
        prop_assert!(raw > 0.0);
    }

    #[test]
    fn intensities_are_scaled_first_moments(a in raw_atoms(), c in 0.5f64..10.0) {
        let k = Kernel::from_atoms(a).unwrap().normalize().unwrap();
        let left: f64 = k.atoms().iter().filter(|x| x.s < 0.0).map(|x| -x.s * x.mass).sum();
        let right: f64 = k.atoms().iter().filter(|x| x.s >= 0.0).map(|x| x.s * x.mass).sum();
        prop_assert!((k.alpha_plus(c).unwrap() - left / c).abs() < 1e-12);
        prop_assert!((k.alpha_minus(c).unwrap() - right / c).abs() < 1e-12);
    }

    #[test]
    fn convolution_shifts_linear_functions_by_the_mean(a in raw_atoms(), t in -10.0f64..10.0) {
        let k = Kernel::from_atoms(a).unwrap().normalize().unwrap();
        let mean: f64 = k.atoms().iter().map(|x| x.s * x.mass).sum();
        let v = k.convolve_with(|x| Ok(2.0 - 0.5 * x), t).unwrap();
        prop_assert!((v - (2.0 - 0.5 * (t - mean))).abs() < 1e-10);
    }
}

#[test]
fn spec_loader_normalizes_densities() {
    let spec: KernelSpec = serde_json::from_str(
        r#"{"atoms": [{"s": 1.0, "mass": 0.5}],
            "density": {"lo": -2, "hi": 2, "n": 401, "kind": "gaussian", "params": {"mean": 0, "sigma": 0.5}}}"#,
    )
    .unwrap();
    let loaded = spec.build().unwrap();
    // Trapezoid mass of a Gaussian truncated at 4σ is √(2π)·σ to about 1e−4.
    let gauss = (2.0 * std::f64::consts::PI).sqrt() * 0.5;
    assert!((loaded.raw_mass - (0.5 + gauss)).abs() < 1e-3);
    assert!((loaded.kernel.total_mass() - 1.0).abs() < 1e-12);
    let back: KernelSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(back, spec);
}

#[test]
fn invalid_specs_are_rejected() {
    for bad in [
        r#"{"atoms": [{"s": 0, "mass": -1}]}"#,
        r#"{"atoms": []}"#,
        r#"{"density": {"lo": 1, "hi": 0, "n": 5, "kind": "uniform"}}"#,
        r#"{"density": {"lo": 0, "hi": 1, "n": 3, "kind": "table", "values": [1, 2]}}"#,
    ] {
        let spec: KernelSpec = serde_json::from_str(bad).unwrap();
        assert!(spec.build().is_err(), "{bad}");
    }
}
