use evoeq_core::signal::{make_grid, weighted_inner, WeightedSignal};
use evoeq_core::time_ops::{derivative, integrate_spectral, shift};
use evoeq_core::transform::{forward, inverse};
use evoeq_core::C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn signal(seed: u64, dim: usize, nu: f64, t0: f64) -> WeightedSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = make_grid(t0, 1.0 / 32.0, 512).unwrap();
    WeightedSignal::from_fn(g, nu, dim, |_, o| {
        for x in o.iter_mut() {
            *x = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip(seed in any::<u64>(), dim in 1usize..5, nu in 0.1f64..6.0, t0 in -3.0f64..3.0) {
        let f = signal(seed, dim, nu, t0);
        let back = inverse(&forward(&f));
        prop_assert!(back.sub(&f).unwrap().norm() <= 1e-12 * f.norm());
    }

    #[test]
    fn polarized_inner_products(seed in any::<u64>(), nu in 0.1f64..6.0) {
        let f = signal(seed, 2, nu, -1.0);
        let g = signal(seed ^ 0x5a5a, 2, nu, -1.0);
        let lhs = weighted_inner(&f, &g).unwrap().re;
        let p = forward(&f.add(&g).unwrap()).norm().powi(2);
        let m = forward(&f.sub(&g).unwrap()).norm().powi(2);
        prop_assert!((lhs - (p - m) / 4.0).abs() <= 1e-12 * f.norm() * g.norm());
    }

    #[test]
    fn derivative_inverts_integral(seed in any::<u64>(), nu in 0.2f64..6.0) {
        let f = signal(seed, 1, nu, 0.0);
        let d = derivative(&integrate_spectral(&f).unwrap());
        prop_assert!(d.sub(&f).unwrap().norm() <= 1e-12 * f.norm());
    }

    #[test]
    fn shift_scales_weighted_norm(nu in 0.2f64..4.0, k in 1usize..32) {
        let g = make_grid(0.0, 1.0 / 32.0, 512).unwrap();
        let f = WeightedSignal::from_real_fn(g, nu, |t| if (2.0..6.0).contains(&t) { (3.0 * t).sin() } else { 0.0 });
        let h = k as f64 / 32.0;
        let ratio = shift(&f, h).unwrap().norm() / f.norm();
        prop_assert!((ratio / (nu * h).exp() - 1.0).abs() < 1e-12);
    }
}
