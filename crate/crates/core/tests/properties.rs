use feller_core::characteristics::StateTriplet;
use feller_core::exit_bounds::{compute_big_h, compute_small_h, exit_probability_bound, BallSpec};
use feller_core::orlicz::{legendre, luxemburg_norm, orlicz_norm, DiscreteMeasure, YoungFunction};
use feller_core::parallel::with_workers;
use feller_core::simulator::{exit_with_allowance, simulate_exit, Domain, ProcessModel, SimConfig};
use proptest::prelude::*;

fn ball(r: f64) -> BallSpec {
    BallSpec::new(vec![0.0], r).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // the stable measure is self-similar, so both tails scale like r^-α
    #[test]
    fn stable_extrema_scale(alpha in 0.3..1.9f64, r in 0.05..0.95f64) {
        let t = StateTriplet::isotropic_stable(1, alpha).unwrap();
        let big = compute_big_h(&t, &ball(r), 16).unwrap();
        let big1 = compute_big_h(&t, &ball(0.5), 16).unwrap();
        prop_assert!((big / big1 - (r / 0.5).powf(-alpha)).abs() <= 1e-9 * (r / 0.5).powf(-alpha));
        let small = compute_small_h(&t, &ball(r), 16).unwrap();
        prop_assert!(small > 0.0 && small <= big);
    }

    #[test]
    fn exit_bound_is_monotone_probability(h in 0.0..50.0f64, s in 0.0..3.0f64, t in 0.0..3.0f64) {
        let (a, b) = (exit_probability_bound(h, s.min(t)), exit_probability_bound(h, s.max(t)));
        prop_assert!((0.0..=1.0).contains(&a) && a <= b && b <= 1.0);
    }

    #[test]
    fn norms_sandwich_and_fenchel_young(
        f in prop::collection::vec(-10.0..10.0f64, 1..8),
        p in 1.05..4.0f64,
        c in 0.1..5.0f64,
        x in 0.0..5.0f64,
        y in 0.0..5.0f64,
    ) {
        let mu = DiscreteMeasure::uniform(f.len(), 1.0).unwrap();
        for phi in [YoungFunction::ScaledPower { p, c }, YoungFunction::ExpMinusOne] {
            let lux = luxemburg_norm(&f, &mu, &phi).unwrap();
            let orl = orlicz_norm(&f, &mu, &phi).unwrap();
            let slack = 1e-9 * lux.max(1e-300);
            prop_assert!(lux <= orl + slack && orl <= 2.0 * lux + slack);
            let conj = legendre(&phi, y).unwrap();
            prop_assert!(x * y <= phi.eval(x) + conj + 1e-9 * (1.0 + x * y));
        }
    }
}

#[test]
fn brownian_exit_time_scales_with_square_of_radius() {
    let model = ProcessModel::brownian(1, 1.0).unwrap();
    for r in [0.25, 0.5] {
        let dom = Domain::interval(-r, r).unwrap();
        let cfg = SimConfig::new(1e-4 * r * r, 10.0, 4000, 11).unwrap();
        let (run, allowance) = exit_with_allowance(&model, &dom, &[0.0], &cfg).unwrap();
        let m = run.mean_tau();
        assert!(m.agrees_with(r * r, 3.0, allowance.allowance), "r = {r}: {} ± {} (allowance {})", m.value, m.se, allowance.allowance);
    }
}

#[test]
fn runs_do_not_depend_on_worker_count() {
    let model = ProcessModel::isotropic_stable(1, 1.5).unwrap();
    let dom = Domain::interval(-1.0, 1.0).unwrap();
    let cfg = SimConfig::new(1e-3, 5.0, 300, 42).unwrap();
    let one = with_workers(1, || simulate_exit(&model, &dom, &[0.2], &cfg).unwrap());
    let four = with_workers(4, || simulate_exit(&model, &dom, &[0.2], &cfg).unwrap());
    assert_eq!(one, four);
}
