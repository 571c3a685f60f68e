use nejunction_core::frapfit::{compare_model_data, fit_one_phase, normalize_recovery};
use nejunction_core::series::{linspace, TimeSeries};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn association(kappa: f64, t: &[f64]) -> TimeSeries {
    TimeSeries::from_fn(t.to_vec(), |s| -(-kappa * s).exp_m1()).unwrap()
}

#[test]
fn noise_free_fits_across_rate_range() {
    for &kappa in &[1e-3, 3e-3, 1e-2, 0.1, 0.1779, 1.0, 3.0, 10.0] {
        let t = linspace(0.0, 6.0 / kappa, 61);
        let fit = fit_one_phase(&association(kappa, &t), None).unwrap();
        assert!(fit.converged, "kappa={kappa}: {fit:?}");
        assert!(
            ((fit.kappa - kappa) / kappa).abs() < 1e-6,
            "kappa={kappa}: {fit:?}"
        );
    }
}

#[test]
fn noisy_fit_within_five_percent() {
    let kappa = 0.1779;
    let t = linspace(0.0, 59.0, 60);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = Normal::new(0.0, 0.02).unwrap();
    let y: Vec<f64> = t
        .iter()
        .map(|s| -(-kappa * s).exp_m1() + noise.sample(&mut rng))
        .collect();
    let fit = fit_one_phase(&TimeSeries::new(t, y).unwrap(), None).unwrap();
    assert!(fit.converged);
    assert!(((fit.kappa - kappa) / kappa).abs() < 0.05, "{fit:?}");
}

#[test]
fn rmse_against_closed_form_integral() {
    let kappa = 0.1779;
    let horizon = 3.0 / kappa;
    let t = linspace(0.0, horizon, 30_001);
    let model = association(kappa, &t);
    let data = association(1.2 * kappa, &t);
    let cmp = compare_model_data(&data, &model).unwrap();
    // (1/T) ∫₀ᵀ (e^{-κt} - e^{-1.2κt})² dt in closed form
    let term = |rate: f64| -(-rate * horizon).exp_m1() / rate;
    let mean_sq = (term(2.0 * kappa) - 2.0 * term(2.2 * kappa) + term(2.4 * kappa)) / horizon;
    assert!(
        (cmp.rmse - mean_sq.sqrt()).abs() / mean_sq.sqrt() < 1e-3,
        "{} vs {}",
        cmp.rmse,
        mean_sq.sqrt()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_is_invariant_under_affine_rescaling(
        log_kappa in -3.0f64..1.0,
        scale in prop_oneof![0.01f64..100.0, -100.0f64..-0.01],
        offset in -50.0f64..50.0,
    ) {
        let kappa = 10f64.powf(log_kappa);
        let t = linspace(0.0, 5.0 / kappa, 40);
        let base = association(kappa, &t);
        let shifted = base.map_values(|v| scale * v + offset);
        let a = fit_one_phase(&base, None).unwrap();
        let b = fit_one_phase(&shifted, None).unwrap();
        prop_assert!(a.converged && b.converged);
        prop_assert!(((a.kappa - b.kappa) / a.kappa).abs() < 1e-6);
        prop_assert!(((b.plateau - (scale + offset)) / scale).abs() < 1e-6);
    }

    #[test]
    fn normalized_curves_start_at_zero(
        kappa in 0.01f64..1.0,
        background in 0.0f64..50.0,
        amplitude in 10.0f64..1000.0,
        floor in 0.0f64..0.8,
        bleaching in 0.0f64..0.02,
    ) {
        let t = linspace(0.0, 8.0 / kappa, 50);
        let raw = TimeSeries::from_fn(t.clone(), |s| {
            background + (-bleaching * s).exp() * amplitude * (floor + (1.0 - floor) * -(-kappa * s).exp_m1())
        }).unwrap();
        let reference = TimeSeries::from_fn(t.clone(), |s| background + (-bleaching * s).exp() * amplitude).unwrap();
        let norm = normalize_recovery(&raw, background, &reference).unwrap();
        prop_assert_eq!(norm.values()[0], 0.0);
        let fit = fit_one_phase(&norm, None).unwrap();
        prop_assert!((fit.plateau - 1.0).abs() < 1e-6);
        prop_assert!(((fit.kappa - kappa) / kappa).abs() < 1e-6);
    }
}
