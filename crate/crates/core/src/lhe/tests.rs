use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn ctx(n: usize) -> LheContext {
    LheContext::new(RingParams::with_degree(n)).unwrap()
}

fn random_slots(ctx: &LheContext, rng: &mut ChaCha20Rng) -> SlotVector {
    let t = ctx.t();
    SlotVector::new((0..ctx.degree()).map(|_| rng.gen_range(0..t)).collect(), t).unwrap()
}

#[test]
fn encode_decode_roundtrip() {
    let c = ctx(16);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for _ in 0..20 {
        let v = random_slots(&c, &mut rng);
        assert_eq!(c.decode_slots(&c.encode_slots(&v).unwrap()).unwrap(), v);
    }
}

#[test]
fn encoding_is_slotwise_multiplicative() {
    let c = ctx(32);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let v = random_slots(&c, &mut rng);
    let w = random_slots(&c, &mut rng);
    let rt = c.plain_ring();
    let prod = rt.mul(&c.encode_slots(&v).unwrap(), &c.encode_slots(&w).unwrap()).unwrap();
    let got = c.decode_slots(&prod).unwrap();
    let t = c.t();
    let want: Vec<u64> = v.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b % t).collect();
    assert_eq!(got.as_slice(), &want[..]);
}

#[test]
fn constant_vector_encodes_to_constant_polynomial() {
    let c = ctx(16);
    let p = c.encode_slots(&SlotVector::constant(16, 7)).unwrap();
    assert_eq!(p.coeffs()[0], 7);
    assert!(p.coeffs()[1..].iter().all(|&x| x == 0));
}

#[test]
fn slot_vector_rejects_out_of_range() {
    assert!(SlotVector::new(vec![65537], 65537).is_err());
}

#[test]
fn encrypt_decrypt_and_basic_ops() {
    let c = ctx(64);
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let (sk, pk, rlk) = c.keygen(&mut rng);
    let t = c.t();
    let v = random_slots(&c, &mut rng);
    let w = random_slots(&c, &mut rng);
    let a = c.encrypt(&pk, &v, &mut rng).unwrap();
    let b = c.encrypt(&pk, &w, &mut rng).unwrap();
    assert_eq!(c.decrypt(&sk, &a), v);

    let zip = |f: &dyn Fn(u64, u64) -> u64| -> Vec<u64> {
        v.as_slice().iter().zip(w.as_slice()).map(|(&x, &y)| f(x, y)).collect()
    };
    assert_eq!(c.decrypt(&sk, &c.add_ct(&a, &b).unwrap()).as_slice(), &zip(&|x, y| (x + y) % t)[..]);
    assert_eq!(c.decrypt(&sk, &c.sub_ct(&a, &b).unwrap()).as_slice(), &zip(&|x, y| (x + t - y) % t)[..]);
    assert_eq!(c.decrypt(&sk, &c.mul_plain(&a, &w).unwrap()).as_slice(), &zip(&|x, y| x * y % t)[..]);
    assert_eq!(c.decrypt(&sk, &c.add_plain(&a, &w).unwrap()).as_slice(), &zip(&|x, y| (x + y) % t)[..]);
    assert_eq!(c.decrypt(&sk, &c.mul_ct(&a, &b, &rlk).unwrap()).as_slice(), &zip(&|x, y| x * y % t)[..]);
    assert_eq!(c.decrypt(&sk, &c.square(&a, &rlk).unwrap()).as_slice(), &zip(&|x, _| x * x % t)[..]);
    assert!(c.decrypt(&sk, &c.sub_ct(&a, &a).unwrap()).as_slice().iter().all(|&x| x == 0));
}

#[test]
fn depth_three_power() {
    let c = ctx(64);
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let (sk, pk, rlk) = c.keygen(&mut rng);
    let t = c.t();
    let v = random_slots(&c, &mut rng);
    let mut ct = c.encrypt(&pk, &v, &mut rng).unwrap();
    for _ in 0..3 {
        ct = c.square(&ct, &rlk).unwrap();
    }
    assert_eq!(ct.depth, 3);
    let want: Vec<u64> = v
        .as_slice()
        .iter()
        .map(|&x| {
            let x2 = x * x % t;
            let x4 = x2 * x2 % t;
            x4 * x4 % t
        })
        .collect();
    assert_eq!(c.decrypt(&sk, &ct).as_slice(), &want[..]);
    assert!(c.noise_bits(&sk, &ct) < c.noise_ceiling_bits());
}

#[test]
fn lift_trivial_decrypts_under_any_key() {
    let c = ctx(16);
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let (sk, pk, _) = c.keygen(&mut rng);
    let (sk2, _, _) = c.keygen(&mut rng);
    let v = random_slots(&c, &mut rng);
    let w = random_slots(&c, &mut rng);
    let lifted = c.lift_trivial(&c.encode_slots(&v).unwrap()).unwrap();
    assert_eq!(c.decrypt(&sk, &lifted), v);
    assert_eq!(c.decrypt(&sk2, &lifted), v);
    let diff = c.sub_ct(&lifted, &c.encrypt(&pk, &w, &mut rng).unwrap()).unwrap();
    let t = c.t();
    let want: Vec<u64> = v.as_slice().iter().zip(w.as_slice()).map(|(&x, &y)| (x + t - y) % t).collect();
    assert_eq!(c.decrypt(&sk, &diff).as_slice(), &want[..]);
}

#[test]
fn fma_matches_mul_then_add() {
    let c = ctx(32);
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let (sk, pk, _) = c.keygen(&mut rng);
    let v = random_slots(&c, &mut rng);
    let w = random_slots(&c, &mut rng);
    let p = random_slots(&c, &mut rng);
    let a = c.encrypt(&pk, &v, &mut rng).unwrap();
    let mut acc = c.encrypt(&pk, &w, &mut rng).unwrap();
    let pp = c.prepare_plain(&p).unwrap();
    let want = c.add_ct(&acc, &c.mul_plain_prepared(&a, &pp).unwrap()).unwrap();
    c.fma_plain_prepared(&mut acc, &a, &pp).unwrap();
    assert_eq!(acc, want);
    assert_eq!(c.decrypt(&sk, &acc), c.decrypt(&sk, &want));
}

#[test]
fn object_serialization_roundtrips() {
    let c = ctx(16);
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let (sk, pk, rlk) = c.keygen(&mut rng);
    let v = random_slots(&c, &mut rng);
    let ct = c.to_coeff_form(&c.encrypt(&pk, &v, &mut rng).unwrap());
    let bytes = c.ciphertext_to_bytes(&ct);
    assert_eq!(bytes.len(), c.ciphertext_len());
    let back = c.ciphertext_from_bytes(&bytes).unwrap();
    assert_eq!(back, ct);
    assert_eq!(c.ciphertext_to_bytes(&back), bytes);

    let pk2 = c.public_key_from_bytes(&c.public_key_to_bytes(&pk)).unwrap();
    assert_eq!(pk2, pk);
    let rlk2 = c.relin_key_from_bytes(&c.relin_key_to_bytes(&rlk)).unwrap();
    assert_eq!(rlk2, rlk);
    let sk2 = c.secret_key_from_bytes(&c.secret_key_to_bytes(&sk)).unwrap();
    assert_eq!(sk2, sk);
}

#[test]
fn deserialization_rejects_foreign_objects() {
    let c = ctx(16);
    let other = ctx(32);
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let (_, pk, _) = c.keygen(&mut rng);
    let ct = c.encrypt(&pk, &SlotVector::zeros(16), &mut rng).unwrap();
    let bytes = c.ciphertext_to_bytes(&ct);
    assert!(matches!(other.ciphertext_from_bytes(&bytes), Err(Error::ParamsMismatch)));
    assert!(c.public_key_from_bytes(&bytes).is_err());
    assert!(c.ciphertext_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(c.ciphertext_from_bytes(&bad).is_err());
}

#[test]
fn mismatched_contexts_are_errors() {
    let c = ctx(16);
    let other = ctx(32);
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let (_, pk, _) = c.keygen(&mut rng);
    let (_, pk2, _) = other.keygen(&mut rng);
    let a = c.encrypt(&pk, &SlotVector::zeros(16), &mut rng).unwrap();
    let b = other.encrypt(&pk2, &SlotVector::zeros(32), &mut rng).unwrap();
    assert!(c.add_ct(&a, &b).is_err());
    assert!(c.encrypt(&pk, &SlotVector::zeros(8), &mut rng).is_err());
}
