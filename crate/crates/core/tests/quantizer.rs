use flhhe_core::quantizer::{centered, dequantize_sum, quantize, sum_in_range, sum_mod, QuantizedWeights};
use proptest::prelude::*;

const T: u64 = 65537;
const DELTA: u64 = 1024;

proptest! {
    #[test]
    fn single_client_error_is_at_most_half_step(w in prop::collection::vec(-1.0f64..=1.0, 1..200)) {
        let q = quantize(&w, DELTA, T);
        let back = dequantize_sum(&q, 1).unwrap();
        for (a, b) in w.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 0.5 / DELTA as f64 + 1e-15);
        }
        prop_assert_eq!(q.clamped, 0);
    }

    #[test]
    fn average_of_k_clients_is_within_half_step(
        k in 1usize..=31,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let models: Vec<Vec<f64>> = (0..k).map(|_| (0..50).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect();
        let qs: Vec<QuantizedWeights> = models.iter().map(|m| quantize(m, DELTA, T)).collect();
        let sum = sum_mod(&qs.iter().collect::<Vec<_>>()).unwrap();
        prop_assert!(sum_in_range(&sum, k));
        let avg = dequantize_sum(&sum, k).unwrap();
        for (i, a) in avg.iter().enumerate() {
            let exact = models.iter().map(|m| m[i]).sum::<f64>() / k as f64;
            prop_assert!((a - exact).abs() <= 0.5 / DELTA as f64 + 1e-12);
        }
    }

    #[test]
    fn centered_is_a_representative(v in 0u64..T) {
        let c = centered(v, T);
        prop_assert!(c > -(T as i64) / 2 - 1 && c <= T as i64 / 2);
        prop_assert_eq!(c.rem_euclid(T as i64) as u64, v);
    }
}

#[test]
fn ties_round_to_even_and_out_of_range_clamps() {
    let half = 0.5 / DELTA as f64;
    assert_eq!(quantize(&[half], DELTA, T).values, vec![0]);
    assert_eq!(quantize(&[3.0 * half], DELTA, T).values, vec![2]);
    assert_eq!(quantize(&[-1.0], DELTA, T).values, vec![T - DELTA]);
    let q = quantize(&[2.0, -7.0, f64::NAN], DELTA, T);
    assert_eq!(q.values, vec![DELTA, T - DELTA, 0]);
    assert_eq!(q.clamped, 3);
}

#[test]
fn sum_mod_checks_shapes() {
    let a = quantize(&[0.1, 0.2], DELTA, T);
    let b = quantize(&[0.1], DELTA, T);
    assert!(sum_mod(&[&a, &b]).is_err());
    assert!(sum_mod(&[]).is_err());
    assert!(dequantize_sum(&a, 0).is_err());
    let garbage = QuantizedWeights::from_sum(vec![T / 2], DELTA, T);
    assert!(!sum_in_range(&garbage, 3));
}
