use proptest::prelude::*;

use drs_scan::control::{blend, blend_weight};
use drs_scan::eval::{channel_std, fingerprint_std, mean_fingerprint, percentile, spectral_angle};
use drs_scan::scene::CartesianVelocity;
use drs_scan::spectro::{fingerprint, Fingerprint, SavgolFilter, Spectrum, SpectrumRole, WavelengthGrid};

fn velocity() -> impl Strategy<Value = CartesianVelocity> {
    (-50.0..50.0, -50.0..50.0, -50.0..50.0).prop_map(|(x, y, z)| CartesianVelocity::new(x, y, z))
}

fn spectrum(values: Vec<f64>) -> Spectrum {
    let n = values.len();
    Spectrum::new(WavelengthGrid::new(468.0, 1.0, n).unwrap(), SpectrumRole::Calibrated, values).unwrap()
}

fn positive_spectrum(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01..2.0f64, n)
}

proptest! {
    #[test]
    fn weight_rises_from_alpha_to_one(alpha in 0.0..=1.0f64, k in 0.1..10.0f64, d1 in 0.0..50.0f64, d2 in 0.0..50.0f64) {
        prop_assert_eq!(blend_weight(0.0, alpha, k), alpha);
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let (b_lo, b_hi) = (blend_weight(lo, alpha, k), blend_weight(hi, alpha, k));
        prop_assert!(b_lo <= b_hi);
        prop_assert!(b_lo >= alpha && b_hi <= 1.0);
    }

    #[test]
    fn mix_lies_between_the_actions(vs in velocity(), hc in velocity(), d in 0.0..20.0f64, alpha in 0.0..=1.0f64) {
        let pair = blend(vs, hc, d, alpha, 2.0);
        prop_assert!(pair.is_consistent());
        prop_assert_eq!(pair.a_hc.0.x, 0.0);
        prop_assert_eq!(pair.a_hc.0.y, 0.0);
        for i in 0..3 {
            let (a, b) = (pair.a_vs.0[i], pair.a_hc.0[i]);
            prop_assert!(pair.a.0[i] >= a.min(b) - 1e-12 && pair.a.0[i] <= a.max(b) + 1e-12);
        }
    }

    #[test]
    fn limited_mix_respects_the_speed_limit(vs in velocity(), hc in velocity(), d in 0.0..20.0f64, limit in 0.5..40.0f64) {
        let pair = blend(vs, hc, d, 0.2, 2.0);
        let l = pair.limited(limit);
        prop_assert!(l.a.speed() <= limit);
        prop_assert_eq!(l.beta, pair.beta);
        prop_assert!(l.is_consistent());
        if pair.a.speed() > 1e-9 {
            prop_assert!((l.a.0.normalize() - pair.a.0.normalize()).norm() < 1e-9);
        }
        if pair.a.speed() <= limit {
            prop_assert_eq!(l, pair);
        }
    }

    #[test]
    fn fingerprint_ignores_scale(values in positive_spectrum(40), c in 0.01..100.0f64) {
        let a = fingerprint(&spectrum(values.clone())).unwrap();
        let b = fingerprint(&spectrum(values.iter().map(|v| v * c).collect())).unwrap();
        let norm: f64 = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn savgol_is_linear(x in prop::collection::vec(-5.0..5.0f64, 30), y in prop::collection::vec(-5.0..5.0f64, 30), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let f = SavgolFilter::new(11, 3).unwrap();
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (fx, fy, fm) = (f.apply(&x).unwrap(), f.apply(&y).unwrap(), f.apply(&mixed).unwrap());
        for i in 0..30 {
            prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn spectral_angle_is_a_scale_free_symmetric_angle(a in positive_spectrum(25), b in positive_spectrum(25), c in 0.1..10.0f64) {
        let ab = spectral_angle(&a, &b).unwrap();
        prop_assert!((0.0..=std::f64::consts::PI).contains(&ab));
        prop_assert!((ab - spectral_angle(&b, &a).unwrap()).abs() < 1e-12);
        let scaled: Vec<f64> = b.iter().map(|v| v * c).collect();
        prop_assert!((ab - spectral_angle(&a, &scaled).unwrap()).abs() < 1e-7);
        prop_assert!(spectral_angle(&a, &a).unwrap() < 1e-7);
    }

    #[test]
    fn set_statistics_ignore_order(set in prop::collection::vec(positive_spectrum(12), 2..8), seed in any::<u64>()) {
        let fps: Vec<Fingerprint> = set.iter().map(|v| fingerprint(&spectrum(v.clone())).unwrap()).collect();
        let mut shuffled = fps.clone();
        let n = shuffled.len();
        shuffled.rotate_left((seed % n as u64) as usize);
        shuffled.reverse();
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        prop_assert!(close(&mean_fingerprint(&fps).unwrap(), &mean_fingerprint(&shuffled).unwrap()));
        prop_assert!(close(&channel_std(&fps).unwrap(), &channel_std(&shuffled).unwrap()));
        prop_assert!((fingerprint_std(&fps).unwrap() - fingerprint_std(&shuffled).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn percentile_is_the_nearest_rank(values in prop::collection::vec(-100.0..100.0f64, 1..60), p in 0.1..=100.0f64) {
        let got = percentile(&values, p).unwrap();
        // Smallest sample with at least p percent of the set at or below it.
        let oracle = values
            .iter()
            .copied()
            .filter(|v| values.iter().filter(|w| *w <= v).count() as f64 * 100.0 >= p * values.len() as f64)
            .fold(f64::INFINITY, f64::min);
        prop_assert_eq!(got, oracle);
    }
}
