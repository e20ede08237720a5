use num_complex::Complex64;
use proptest::prelude::*;

use squeezeprof_core::fit::reference_to_blank;
use squeezeprof_core::gaussian::{beamsplitter, evolve, phase_rotation, squeezed_cov};
use squeezeprof_core::measurement::{campaign_ids, run_campaign, simulate_trace, theta_grid};
use squeezeprof_core::optics::{hadamard_masks, overlap};
use squeezeprof_core::reconstruction::fidelity;
use squeezeprof_core::*;

fn field(n: usize) -> impl Strategy<Value = FieldGrid> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n).prop_filter_map("zero field", move |v| {
        FieldGrid::new(n, v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
            .ok()?
            .normalized()
            .ok()
    })
}

fn spec() -> impl Strategy<Value = ModeNoiseSpec> {
    (-2.0..2.0f64, 0.0..6.3f64, 0.0..3.0f64).prop_map(|(r, phi, n)| ModeNoiseSpec::new(r, phi, n).unwrap())
}

#[derive(Debug, Clone)]
enum Gate {
    Split(usize, usize, f64),
    Phase(usize, f64),
}

fn gate(modes: usize) -> impl Strategy<Value = Gate> {
    prop_oneof![
        (0..modes, 0..modes, 0.0..=1.0f64)
            .prop_filter("distinct modes", |(a, b, _)| a != b)
            .prop_map(|(a, b, t)| Gate::Split(a, b, t)),
        (0..modes, -7.0..7.0f64).prop_map(|(a, th)| Gate::Phase(a, th)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn evolved_states_stay_physical(specs in prop::collection::vec(spec(), 3), gates in prop::collection::vec(gate(3), 1..12)) {
        let mut v = squeezed_cov(&specs[0]).direct_sum(&squeezed_cov(&specs[1])).direct_sum(&squeezed_cov(&specs[2]));
        let before = {
            let mut e = v.symplectic_eigenvalues();
            e.sort_by(f64::total_cmp);
            e
        };
        for g in gates {
            let op = match g {
                Gate::Split(a, b, t) => beamsplitter(t).unwrap().embed(3, a, b).unwrap(),
                Gate::Phase(a, th) => phase_rotation(3, a, th).unwrap(),
            };
            prop_assert!(op.symplectic_defect() < 1e-12);
            v = evolve(&v, &op).unwrap();
        }
        let m = v.entries();
        for i in 0..6 {
            for j in 0..6 {
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
        prop_assert!(m.clone().symmetric_eigen().eigenvalues.iter().all(|&l| l > 0.0));
        let mut after = v.symplectic_eigenvalues();
        after.sort_by(f64::total_cmp);
        for (a, b) in before.iter().zip(&after) {
            prop_assert!(*b >= 1.0 - 1e-9);
            prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }
        prop_assert!(CovarianceMatrix::from_matrix(m.clone()).is_ok());
    }

    #[test]
    fn overlaps_are_bounded_and_additive(lo in field(4), u in field(4), m in 0usize..16) {
        let set = hadamard_masks(4, MaskOrder::Natural).unwrap();
        let o = overlap(&lo, &u, &set.mask(m)).unwrap().value();
        let oc = overlap(&lo, &u, &set.complement(m)).unwrap().value();
        let ob = overlap(&lo, &u, &set.blank()).unwrap().value();
        let l1: f64 = lo.amplitudes().iter().zip(u.amplitudes()).map(|(a, b)| (a * b).norm()).sum();
        prop_assert!(o.norm() <= l1 + 1e-12);
        prop_assert!(l1 <= 1.0 + 1e-12);
        prop_assert!((o + oc - ob).norm() < 1e-12);
    }

    #[test]
    fn noisy_traces_are_positive_and_seeded(
        lo in field(4),
        u in field(4),
        r in -1.5..1.5f64,
        phi in 0.0..3.2f64,
        m in 0usize..16,
        samples in 2u64..5000,
        seed in any::<u64>(),
    ) {
        let scene = Scene::new(lo, ModeNoiseSpec::squeezed(r, phi).unwrap(), u).unwrap();
        let set = hadamard_masks(4, MaskOrder::Sequency).unwrap();
        let thetas = theta_grid(16);
        let s = Samples::finite(samples).unwrap();
        let a = simulate_trace(&scene, &set, TraceId::Mask(m), &thetas, s, seed).unwrap();
        prop_assert!(a.variances().iter().all(|&v| v > 0.0 && v.is_finite()));
        let again = simulate_trace(&scene, &set, TraceId::Mask(m), &thetas, s, seed).unwrap();
        prop_assert_eq!(&a, &again);
        let other = simulate_trace(&scene, &set, TraceId::Complement(m), &thetas, s, seed).unwrap();
        let exact = simulate_trace(&scene, &set, TraceId::Complement(m), &thetas, Samples::Exact, seed).unwrap();
        let ratios_a: Vec<f64> = a.variances().iter().zip(
            simulate_trace(&scene, &set, TraceId::Mask(m), &thetas, Samples::Exact, seed).unwrap().variances()
        ).map(|(x, y)| x / y).collect();
        let ratios_c: Vec<f64> = other.variances().iter().zip(exact.variances()).map(|(x, y)| x / y).collect();
        prop_assert_ne!(ratios_a, ratios_c);
    }

    #[test]
    fn fits_are_ordered_and_half_turn_wrapped(
        lo in field(4),
        u in field(4),
        r in -1.5..1.5f64,
        phi in 0.0..3.2f64,
        seed in any::<u64>(),
    ) {
        let scene = Scene::new(lo, ModeNoiseSpec::squeezed(r, phi).unwrap(), u).unwrap();
        let set = hadamard_masks(4, MaskOrder::Natural).unwrap();
        let traces = run_campaign(&scene, &set, &theta_grid(32), Samples::finite(400).unwrap(), seed).unwrap();
        let fits: Vec<QuadratureFit> = traces.iter().map(|t| fit_trace(t).unwrap()).collect();
        for f in fits.iter().chain(&reference_to_blank(&fits).unwrap()) {
            prop_assert!(f.v_plus >= f.v_minus);
            prop_assert!(f.v_minus > 0.0);
            prop_assert!((0.0..std::f64::consts::PI).contains(&f.theta_m));
            prop_assert!(f.residual_rms >= 0.0);
        }
    }

    #[test]
    fn reconstructions_keep_shape_and_clamp(
        lo in field(4),
        u in field(4),
        th in prop::collection::vec(0.0..1.0f64, 16),
        v_th in 1.5..40.0f64,
        seed in any::<u64>(),
    ) {
        let scene = Scene::new(lo, ModeNoiseSpec::squeezed(0.8, 0.2).unwrap(), u)
            .unwrap()
            .with_thermal(ThermalComponent::new(v_th, ThermalModel::Incoherent { intensity: th }).unwrap())
            .unwrap();
        let set = hadamard_masks(4, MaskOrder::Natural).unwrap();
        let traces = run_campaign(&scene, &set, &theta_grid(32), Samples::finite(2000).unwrap(), seed).unwrap();
        prop_assert_eq!(traces.len(), campaign_ids(&set).len());
        let fits: Vec<QuadratureFit> = traces.iter().map(|t| fit_trace(t).unwrap()).collect();
        let rec = reconstruct(&FitSet::new(&fits, set.len()).unwrap(), &set, ReconstructionOptions::default()).unwrap();
        prop_assert_eq!(rec.shaped_squeezed.n(), 4);
        prop_assert_eq!(rec.thermal.n, 4);
        prop_assert_eq!(rec.thermal.raw.len(), 16);
        for (raw, clamped) in rec.thermal.raw.iter().zip(&rec.thermal.clamped) {
            prop_assert!(*clamped >= 0.0);
            prop_assert_eq!(*clamped, raw.max(0.0));
        }
    }

    #[test]
    fn noiseless_round_trip_recovers_shaped_field(lo in field(4), u in field(4), r in 0.3..1.5f64, phi in 0.0..3.2f64) {
        let scene = Scene::new(lo, ModeNoiseSpec::squeezed(r, phi).unwrap(), u).unwrap();
        let set = hadamard_masks(4, MaskOrder::Natural).unwrap();
        // Signs are only defined relative to a blank weight that carries signal.
        let blank = overlap(scene.lo(), scene.squeezed_mode(), &set.blank()).unwrap().value().norm();
        prop_assume!(blank > 0.05);
        let traces = run_campaign(&scene, &set, &theta_grid(16), Samples::Exact, 0).unwrap();
        let fits: Vec<QuadratureFit> = traces.iter().map(|t| fit_trace(t).unwrap()).collect();
        let rec = reconstruct(&FitSet::new(&fits, set.len()).unwrap(), &set, ReconstructionOptions::default()).unwrap();
        prop_assume!(rec.signed.material_ambiguities() == 0);
        let f = fidelity(&rec.shaped_squeezed, &scene.shaped_squeezed()).unwrap();
        prop_assert!(f > 0.999, "fidelity {}", f);
    }
}
